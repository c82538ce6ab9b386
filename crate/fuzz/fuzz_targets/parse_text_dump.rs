#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(raster) = acdkit::raster::parse_text_dump(text) {
        let dumped = acdkit::raster::to_text_dump(&raster);
        assert_eq!(acdkit::raster::parse_text_dump(&dumped).unwrap(), raster);
    }
});

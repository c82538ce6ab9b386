#![no_main]

use libfuzzer_sys::fuzz_target;

// Input layout: JSON header, a NUL byte, then the raw payload.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let (header, rest) = data.split_at(split);
    let payload = rest.get(1..).unwrap_or(&[]);
    if let Ok(raster) = acdkit::raster::decode_r32(header, payload) {
        let (h, p) = acdkit::raster::encode_r32(&raster);
        let again = acdkit::raster::decode_r32(h.as_bytes(), &p).expect("re-encoded raster decodes");
        assert_eq!(raster, again);
    }
});

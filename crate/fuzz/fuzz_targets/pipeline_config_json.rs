#![no_main]

use acdkit::cli::{parse_offsets, PipelineConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = PipelineConfig::from_json(text) {
        let _ = cfg.detector_list();
        let _ = cfg.params();
    }
    let _ = parse_offsets(text);
});

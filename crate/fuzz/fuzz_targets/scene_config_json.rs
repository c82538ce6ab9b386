#![no_main]

use acdkit::synth::{generate_scene, SceneConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = SceneConfig::from_json(text) else { return };
    // keep generation cheap; validation alone covers large configs
    if cfg.width.checked_mul(cfg.height).is_some_and(|n| n <= 64 * 64) {
        let _ = generate_scene(&cfg);
    } else {
        let _ = cfg.validate();
    }
});

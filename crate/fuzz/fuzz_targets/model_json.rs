#![no_main]

use acdkit::hacd::{hacd_score, HacdModel};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = HacdModel::from_json(text) {
        let x = vec![0.5; model.dim_x()];
        let y = vec![-0.5; model.dim_y()];
        let _ = hacd_score(&model, &x, &y);
        let again = HacdModel::from_json(&model.to_json()).expect("serialized model loads");
        assert_eq!(again.covariance(), model.covariance());
    }
});

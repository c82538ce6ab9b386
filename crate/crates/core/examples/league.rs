//! Runs every detector on every benchmark scene and prints pAUC values.

use std::time::Instant;

use acdkit::eval::roc;
use acdkit::pipeline::{detect, Detector, DetectorParams};
use acdkit::raster::make_pair;
use acdkit::synth::{generate_scene, scene_suite};

fn main() -> acdkit::Result<()> {
    let only: Vec<String> = std::env::args().skip(1).collect();
    for (name, cfg) in scene_suite() {
        if !only.is_empty() && !only.iter().any(|o| o == name) {
            continue;
        }
        let scene = generate_scene(&cfg)?;
        let pair = make_pair(scene.t0, scene.t1)?;
        for d in Detector::ALL {
            let start = Instant::now();
            let out = detect(d, &pair, &DetectorParams::default(), None)?;
            let band = roc(&out.map, &scene.ground_truth)?;
            println!(
                "{name:16} {:11} pauc_inner={:.5} pauc_outer={:.5} auc_inner={:.4} ({:.1}s)",
                d.name(),
                band.pauc_inner,
                band.pauc_outer,
                band.auc_inner(),
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}

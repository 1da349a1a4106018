//! Writes the example model config, placeholder limits and a seeded
//! ground-truth parameter set into the given directory (default `configs`).

use std::path::PathBuf;

use psmgc::excitation::JointLimits;
use psmgc::io::{self, ModelConfig};
use psmgc::model::InertialMode;
use psmgc::ParamVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("configs"));
    let cfg = ModelConfig::default();
    let model = cfg.build()?;
    io::write_json(&dir.join("psm.json"), &cfg)?;
    io::write_text(&dir.join("limits.json"), &io::limits_json(&JointLimits::default()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (name, mode) in [("truth_gravity.json", InertialMode::Gravity), ("truth_full.json", InertialMode::Full)] {
        let truth = ParamVector::sample_physical(&model, mode, &mut rng);
        io::write_text(&dir.join(name), &io::params_json(&model, &truth))?;
    }
    Ok(())
}

//! Interpolate and extrapolate the model trajectory, then project it to
//! 2-D with PCA (the deterministic stand-in for trajectory plots).
//!
//! Run with: cargo run --release --example extrapolate_trajectory

use koodos::domains::{generate_moons_domain, DomainSequence};
use koodos::nets::{MlpSpec, TaskKind};
use koodos::spectral::pca_project;
use koodos::train::{train_joint, KoodosConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let domains = (0..8)
        .map(|k| generate_moons_domain(k as f64, 100, 0.1, 18.0, 30 + k))
        .collect::<Result<Vec<_>, _>>()?;
    let seq = DomainSequence::new("two-moons", domains)?;
    let spec = MlpSpec::new(2, vec![24], 1, TaskKind::BinaryClassification)?;
    let config = KoodosConfig {
        autoencoder_widths: vec![128, 32, 8],
        warm_epochs: 120,
        joint_epochs: 100,
        ..KoodosConfig::default()
    };
    let system = train_joint(&seq, &spec, &config)?;

    // dense grid through the training span plus a future stretch
    let t_last = *system.timestamps.last().unwrap();
    let grid: Vec<f64> = (0..60).map(|i| i as f64 * (t_last + 4.0) / 59.0).collect();
    let thetas: Vec<Vec<f64>> = grid
        .iter()
        .map(|&t| Ok::<_, koodos::train::TrainError>(system.generalize(t)?.theta().data().to_vec()))
        .collect::<Result<_, _>>()?;

    let proj = pca_project(&thetas, 2)?;
    println!(
        "explained variance ratio: {:.3}, {:.3}",
        proj.explained_variance_ratio[0], proj.explained_variance_ratio[1]
    );
    println!("t,c1,c2");
    for (t, p) in grid.iter().zip(&proj.points) {
        let marker = if *t > t_last { "  <- extrapolated" } else { "" };
        println!("{t:6.2},{:8.4},{:8.4}{marker}", p[0], p[1]);
    }
    Ok(())
}

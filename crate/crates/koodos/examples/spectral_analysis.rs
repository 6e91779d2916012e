//! Eigenvalue spectrum and stability verdict of a learned operator.
//!
//! Run with: cargo run --release --example spectral_analysis

use koodos::domains::{generate_moons_domain, DomainSequence};
use koodos::nets::{MlpSpec, TaskKind};
use koodos::spectral::assess_stability;
use koodos::train::{train_joint, KoodosConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let domains = (0..6)
        .map(|k| generate_moons_domain(k as f64 * 1.1, 80, 0.1, 18.0, 50 + k))
        .collect::<Result<Vec<_>, _>>()?;
    let seq = DomainSequence::new("two-moons", domains)?;
    let spec = MlpSpec::new(2, vec![16], 1, TaskKind::BinaryClassification)?;
    let config = KoodosConfig {
        autoencoder_widths: vec![64, 16, 6],
        warm_epochs: 80,
        joint_epochs: 80,
        ..KoodosConfig::default()
    };
    let system = train_joint(&seq, &spec, &config)?;

    let k = system.operator.materialize()?;
    let report = assess_stability(&k)?;
    println!("operator spectrum (re, im):");
    for (re, im) in &report.eigenvalues {
        println!("  {re:+.6}  {im:+.6}i");
    }
    println!("max real part: {:+.3e}", report.max_real_part);
    println!("verdict: {}", report.classification);
    println!();
    println!(
        "interpretation: eigenvalues right of the imaginary axis grow as\n\
         exp(re*t) under extrapolation, so a positive max real part warns\n\
         that very long horizons will eventually drift."
    );
    Ok(())
}

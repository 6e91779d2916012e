//! The ablation that bypasses the Koopman space: learn the parameter
//! dynamics directly with an MLP field over [theta, t] and integrate it
//! with RK4. Works, but scales poorly and models the nonlinear parameter
//! space without the linearizing latent.
//!
//! Run with: cargo run --release --example direct_parameter_dynamics

use koodos::domains::{generate_moons_domain, DomainSequence};
use koodos::nets::{MlpSpec, TaskKind};
use koodos::train::{train_joint, AblationFlags, KoodosConfig, Metric};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let domains = (0..5)
        .map(|k| generate_moons_domain(k as f64, 60, 0.1, 18.0, 90 + k))
        .collect::<Result<Vec<_>, _>>()?;
    let seq = DomainSequence::new("two-moons", domains)?;
    let spec = MlpSpec::new(2, vec![8], 1, TaskKind::BinaryClassification)?;
    let config = KoodosConfig {
        ablation: AblationFlags {
            no_koopman: true,
            ..AblationFlags::default()
        },
        dynamics_hidden: vec![32],
        warm_epochs: 80,
        joint_epochs: 40,
        ..KoodosConfig::default()
    };

    let system = train_joint(&seq, &spec, &config)?;
    println!(
        "trained the direct field over {} pairs; consis {:.4} -> {:.4}",
        system.history.len(),
        system.history.first().unwrap().consis,
        system.history.last().unwrap().consis
    );

    // the same inference interface works: anchor, integrate, predict
    let report = system.evaluate(&seq, Metric::ErrorRate)?;
    for (t, e) in &report.per_domain {
        println!("  t = {t:4.1}  in-domain error = {e:5.1}%");
    }
    let future = system.generalize(6.5)?;
    println!("extrapolated parameter vector at t = 6.5: {} weights", future.len());
    Ok(())
}

//! Train the full pipeline on a reduced rotating two-moons problem and
//! compare against the Offline and LastDomain baselines on future domains.
//!
//! Run with: cargo run --release --example train_moons
//! (takes on the order of a minute)

use koodos::domains::{generate_moons_domain, sample_timestamps, split_train_test, DomainSequence};
use koodos::nets::{MlpSpec, TaskKind};
use koodos::train::{
    baseline_lastdomain, baseline_offline, evaluate_fixed_params, train_joint, KoodosConfig,
    Metric,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = 0;
    let timestamps = sample_timestamps(16, 0.0, 16.0, seed)?;
    let domains = timestamps
        .iter()
        .enumerate()
        .map(|(k, &t)| generate_moons_domain(t, 150, 0.1, 18.0, seed + 10 + k as u64))
        .collect::<Result<Vec<_>, _>>()?;
    let seq = DomainSequence::new("two-moons", domains)?;
    let (train, test) = split_train_test(&seq, 0.3)?;

    let spec = MlpSpec::new(2, vec![32, 32], 1, TaskKind::BinaryClassification)?;
    let config = KoodosConfig {
        autoencoder_widths: vec![256, 64, 16],
        warm_epochs: 150,
        joint_epochs: 120,
        seed,
        ..KoodosConfig::default()
    };

    println!(
        "training on {} domains (t in [{:.2}, {:.2}]), testing on {} future domains",
        train.len(),
        train.timestamps()[0],
        train.timestamps().last().unwrap(),
        test.len()
    );
    let system = train_joint(&train, &spec, &config)?;
    let first = system.history.first().unwrap();
    let last = system.history.last().unwrap();
    println!(
        "joint epochs: {} (combined loss {:.2} -> {:.2})",
        system.history.len(),
        first.combined,
        last.combined
    );

    let report = system.evaluate(&test, Metric::ErrorRate)?;
    for (t, err) in &report.per_domain {
        println!("  t = {t:7.3}  error = {err:5.1}%");
    }
    println!("koodos mean test error: {:.2}%", report.aggregate);

    let offline = baseline_offline(&train, &spec, config.warm_epochs, config.lr_predictive, seed)?;
    let lastd = baseline_lastdomain(&train, &spec, config.warm_epochs, config.lr_predictive, seed)?;
    println!(
        "offline baseline:       {:.2}%",
        evaluate_fixed_params(&offline, &test, Metric::ErrorRate)?.aggregate
    );
    println!(
        "last-domain baseline:   {:.2}%",
        evaluate_fixed_params(&lastd, &test, Metric::ErrorRate)?.aggregate
    );
    Ok(())
}

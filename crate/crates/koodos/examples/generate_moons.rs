//! Generate a rotating two-moons dataset directory and read it back.
//!
//! Run with: cargo run --release --example generate_moons

use koodos::domains::{
    generate_moons_domain, load_sequence, sample_timestamps, save_sequence, split_train_test,
    DomainSequence,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = 42;
    let timestamps = sample_timestamps(12, 0.0, 12.0, seed)?;
    let domains = timestamps
        .iter()
        .enumerate()
        .map(|(k, &t)| generate_moons_domain(t, 100, 0.1, 18.0, seed + 1 + k as u64))
        .collect::<Result<Vec<_>, _>>()?;
    let seq = DomainSequence::new("two-moons-demo", domains)?;

    let dir = std::env::temp_dir().join("koodos_moons_demo");
    save_sequence(&seq, &dir)?;
    println!("wrote {} domains to {}", seq.len(), dir.display());

    let back = load_sequence(&dir)?;
    assert_eq!(back, seq);
    println!("roundtrip is exact");

    let (train, test) = split_train_test(&back, 0.3)?;
    println!(
        "chronological split: {} train domains up to t={:.3}, {} test domains from t={:.3}",
        train.len(),
        train.timestamps().last().unwrap(),
        test.len(),
        test.timestamps().first().unwrap()
    );
    Ok(())
}

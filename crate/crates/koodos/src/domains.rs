//! Synthetic continuous-temporal-domain generation and tabular dataset IO.
//!
//! The rotating two-moons generator places the canonical interleaved
//! half-circles (upper moon centered at the origin, label 1; lower moon
//! centered at (1, 0.5), label 0) and rotates every noiseless point about
//! the origin by `degrees_per_unit * t` counterclockwise before adding
//! Gaussian coordinate noise. Geometry is fixed here so results are
//! reproducible.

use crate::diffcore::Tensor;
use crate::nets::TaskKind;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("timestamps must be strictly increasing: t[{index}] = {value} after {previous}")]
    NonMonotoneTimestamps {
        index: usize,
        value: f64,
        previous: f64,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed dataset at {path}: {why}")]
    Malformed { path: String, why: String },
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// A dataset collected at one real-valued timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    pub t: f64,
    /// `N x d` features.
    pub x: Tensor,
    /// `N x 1` targets.
    pub y: Tensor,
    pub task: TaskKind,
}

impl Domain {
    pub fn new(t: f64, x: Tensor, y: Tensor, task: TaskKind) -> Result<Self, DataError> {
        if !t.is_finite() {
            return Err(DataError::InvalidDomain(format!("non-finite timestamp {t}")));
        }
        if x.rows() == 0 {
            return Err(DataError::InvalidDomain("domain has no instances".into()));
        }
        if y.shape() != (x.rows(), 1) {
            return Err(DataError::InvalidDomain(format!(
                "targets must be {}x1, got {:?}",
                x.rows(),
                y.shape()
            )));
        }
        if task == TaskKind::BinaryClassification
            && y.data().iter().any(|v| *v != 0.0 && *v != 1.0)
        {
            return Err(DataError::InvalidDomain(
                "binary targets must be 0 or 1".into(),
            ));
        }
        Ok(Domain { t, x, y, task })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.x.cols()
    }
}

/// Time-ordered sequence of domains with strictly increasing timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSequence {
    pub name: String,
    pub domains: Vec<Domain>,
}

impl DomainSequence {
    pub fn new(name: impl Into<String>, domains: Vec<Domain>) -> Result<Self, DataError> {
        for i in 1..domains.len() {
            if domains[i].t <= domains[i - 1].t {
                return Err(DataError::NonMonotoneTimestamps {
                    index: i,
                    value: domains[i].t,
                    previous: domains[i - 1].t,
                });
            }
        }
        Ok(DomainSequence {
            name: name.into(),
            domains,
        })
    }

    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.domains.iter().map(|d| d.t).collect()
    }

    pub fn task(&self) -> Option<TaskKind> {
        self.domains.first().map(|d| d.task)
    }
}

/// One rotating two-moons domain at time `t`.
///
/// `n_per_class` points per moon; noiseless points are rotated about the
/// origin by `degrees_per_unit * t` counterclockwise, then Gaussian noise
/// with standard deviation `noise_sd` is added per coordinate.
pub fn generate_moons_domain(
    t: f64,
    n_per_class: usize,
    noise_sd: f64,
    degrees_per_unit: f64,
    seed: u64,
) -> Result<Domain, DataError> {
    if n_per_class == 0 {
        return Err(DataError::InvalidDomain("n_per_class must be >= 1".into()));
    }
    if noise_sd < 0.0 {
        return Err(DataError::InvalidDomain("noise_sd must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = (degrees_per_unit * t).to_radians();
    let (cos_a, sin_a) = (angle.cos(), angle.sin());
    let n = 2 * n_per_class;
    let mut x = Vec::with_capacity(n * 2);
    let mut y = Vec::with_capacity(n);
    for class in [0u8, 1u8] {
        for _ in 0..n_per_class {
            let a: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            // lower moon (label 0) centered at (1, 0.5), upper (label 1) at
            // the origin; a noiseless upper point at arc angle 0 is (1, 0)
            let (px, py) = if class == 0 {
                (1.0 - a.cos(), 0.5 - a.sin())
            } else {
                (a.cos(), a.sin())
            };
            let rx = cos_a * px - sin_a * py;
            let ry = sin_a * px + cos_a * py;
            let (nx, ny): (f64, f64) = (gauss(&mut rng), gauss(&mut rng));
            x.push(rx + noise_sd * nx);
            x.push(ry + noise_sd * ny);
            y.push(f64::from(class));
        }
    }
    Domain::new(
        t,
        Tensor::new(n, 2, x).expect("generated values are finite"),
        Tensor::new(n, 1, y).expect("labels are finite"),
        TaskKind::BinaryClassification,
    )
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; two uniform draws per sample keep the stream simple
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// `count` sorted uniform timestamps on `[t_min, t_max]` with a minimum
/// gap of 1e-6 enforced by redrawing.
pub fn sample_timestamps(
    count: usize,
    t_min: f64,
    t_max: f64,
    seed: u64,
) -> Result<Vec<f64>, DataError> {
    if count == 0 {
        return Err(DataError::InvalidDomain("timestamp count must be >= 1".into()));
    }
    if !(t_max > t_min) {
        return Err(DataError::InvalidDomain(format!(
            "empty time interval [{t_min}, {t_max}]"
        )));
    }
    const MIN_GAP: f64 = 1e-6;
    if (t_max - t_min) < MIN_GAP * count as f64 {
        return Err(DataError::InvalidDomain(format!(
            "interval [{t_min}, {t_max}] cannot hold {count} timestamps {MIN_GAP} apart"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _attempt in 0..1000 {
        let mut ts: Vec<f64> = (0..count).map(|_| rng.gen_range(t_min..t_max)).collect();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if ts.windows(2).all(|w| w[1] - w[0] >= MIN_GAP) {
            return Ok(ts);
        }
    }
    Err(DataError::InvalidDomain(
        "could not draw timestamps with the minimum gap".into(),
    ))
}

/// Chronological split: the last `ceil(test_fraction * T)` domains become
/// the test set.
pub fn split_train_test(
    seq: &DomainSequence,
    test_fraction: f64,
) -> Result<(DomainSequence, DomainSequence), DataError> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(DataError::InvalidDomain(format!(
            "test_fraction must be in [0, 1], got {test_fraction}"
        )));
    }
    let t = seq.len();
    let n_test = (test_fraction * t as f64).ceil() as usize;
    let n_train = t - n_test;
    let train = DomainSequence::new(
        seq.name.clone(),
        seq.domains[..n_train].to_vec(),
    )?;
    let test = DomainSequence::new(seq.name.clone(), seq.domains[n_train..].to_vec())?;
    Ok((train, test))
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Manifest {
    name: String,
    task: TaskKind,
    timestamps: Vec<f64>,
    files: Vec<String>,
}

/// Write a sequence as `manifest.json` plus one `domain_<k>.csv` per
/// domain (header `f0,...,f{d-1},y`, shortest-roundtrip decimal floats).
pub fn save_sequence(seq: &DomainSequence, dir: &Path) -> Result<(), DataError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut files = Vec::with_capacity(seq.len());
    for (k, domain) in seq.domains.iter().enumerate() {
        let fname = format!("domain_{k}.csv");
        let path = dir.join(&fname);
        let d = domain.feature_dim();
        let mut out = String::new();
        for j in 0..d {
            let _ = write!(out, "f{j},");
        }
        out.push_str("y\n");
        for r in 0..domain.len() {
            for c in 0..d {
                let _ = write!(out, "{},", domain.x.get(r, c));
            }
            let _ = writeln!(out, "{}", domain.y.get(r, 0));
        }
        std::fs::write(&path, out).map_err(|e| io_err(&path, e))?;
        files.push(fname);
    }
    let manifest = Manifest {
        name: seq.name.clone(),
        task: seq.task().unwrap_or(TaskKind::BinaryClassification),
        timestamps: seq.timestamps(),
        files,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .expect("manifest serialization cannot fail");
    std::fs::write(&path, json).map_err(|e| io_err(&path, e))
}

/// Read a dataset directory written by [`save_sequence`]; exact roundtrip.
pub fn load_sequence(dir: &Path) -> Result<DomainSequence, DataError> {
    let manifest_path = dir.join("manifest.json");
    let raw = std::fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&raw).map_err(|e| DataError::Malformed {
        path: manifest_path.display().to_string(),
        why: e.to_string(),
    })?;
    if manifest.timestamps.len() != manifest.files.len() {
        return Err(DataError::Malformed {
            path: manifest_path.display().to_string(),
            why: format!(
                "{} timestamps but {} files",
                manifest.timestamps.len(),
                manifest.files.len()
            ),
        });
    }
    let mut domains = Vec::with_capacity(manifest.files.len());
    for (t, fname) in manifest.timestamps.iter().zip(&manifest.files) {
        let path = dir.join(fname);
        let raw = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let mut lines = raw.lines();
        let header = lines.next().ok_or_else(|| DataError::Malformed {
            path: path.display().to_string(),
            why: "empty file".into(),
        })?;
        let cols = header.split(',').count();
        if cols < 2 || !header.ends_with(",y") && header != "y" {
            return Err(DataError::Malformed {
                path: path.display().to_string(),
                why: format!("unexpected header {header:?}"),
            });
        }
        let d = cols - 1;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols {
                return Err(DataError::Malformed {
                    path: path.display().to_string(),
                    why: format!("row {} has {} fields, expected {cols}", lineno + 2, fields.len()),
                });
            }
            for f in &fields[..d] {
                x.push(parse_float(f, &path, lineno)?);
            }
            y.push(parse_float(fields[d], &path, lineno)?);
        }
        let rows = y.len();
        let x = Tensor::new(rows, d, x).map_err(|e| DataError::Malformed {
            path: path.display().to_string(),
            why: e.to_string(),
        })?;
        let y = Tensor::new(rows, 1, y).map_err(|e| DataError::Malformed {
            path: path.display().to_string(),
            why: e.to_string(),
        })?;
        domains.push(Domain::new(*t, x, y, manifest.task)?);
    }
    DomainSequence::new(manifest.name, domains)
}

fn parse_float(s: &str, path: &Path, lineno: usize) -> Result<f64, DataError> {
    s.parse().map_err(|_| DataError::Malformed {
        path: path.display().to_string(),
        why: format!("row {}: bad float {s:?}", lineno + 2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unrotated_moons_are_canonical() {
        // with zero noise, every upper-moon point lies on the unit circle
        // and every lower-moon point on the shifted arc; arc angle 0 maps
        // the upper point to (1, 0)
        let d = generate_moons_domain(0.0, 50, 0.0, 18.0, 7).unwrap();
        assert_eq!(d.len(), 100);
        for r in 0..d.len() {
            let (px, py) = (d.x.get(r, 0), d.x.get(r, 1));
            if d.y.get(r, 0) == 1.0 {
                assert!((px.hypot(py) - 1.0).abs() < 1e-12);
                assert!(py >= 0.0);
            } else {
                let (cx, cy) = (px - 1.0, py - 0.5);
                assert!((cx.hypot(cy) - 1.0).abs() < 1e-12);
                assert!(cy <= 0.0);
            }
        }
    }

    #[test]
    fn rotation_matches_hand_applied_matrix() {
        let base = generate_moons_domain(0.0, 20, 0.0, 18.0, 3).unwrap();
        let rotated = generate_moons_domain(1.0, 20, 0.0, 18.0, 3).unwrap();
        let a = 18.0_f64.to_radians();
        let (c, s) = (a.cos(), a.sin());
        for r in 0..base.len() {
            let (px, py) = (base.x.get(r, 0), base.x.get(r, 1));
            let expect = (c * px - s * py, s * px + c * py);
            assert!((rotated.x.get(r, 0) - expect.0).abs() < 1e-12);
            assert!((rotated.x.get(r, 1) - expect.1).abs() < 1e-12);
            assert_eq!(base.y.get(r, 0), rotated.y.get(r, 0));
        }
    }

    #[test]
    fn rotation_preserves_norms_before_noise() {
        let base = generate_moons_domain(0.0, 30, 0.0, 18.0, 5).unwrap();
        let turned = generate_moons_domain(7.3, 30, 0.0, 18.0, 5).unwrap();
        for r in 0..base.len() {
            let n0 = base.x.get(r, 0).hypot(base.x.get(r, 1));
            let n1 = turned.x.get(r, 0).hypot(turned.x.get(r, 1));
            assert!((n0 - n1).abs() < 1e-12);
        }
    }

    #[test]
    fn full_turn_reproduces_t0_distribution() {
        // 18 deg * 20 = 360 deg: same seed, same points up to rounding
        let a = generate_moons_domain(0.0, 40, 0.1, 18.0, 11).unwrap();
        let b = generate_moons_domain(20.0, 40, 0.1, 18.0, 11).unwrap();
        for (x0, x1) in a.x.data().iter().zip(b.x.data()) {
            assert!((x0 - x1).abs() < 1e-12, "{x0} vs {x1}");
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = generate_moons_domain(3.3, 10, 0.1, 18.0, 42).unwrap();
        let b = generate_moons_domain(3.3, 10, 0.1, 18.0, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_moons_domain(3.3, 10, 0.1, 18.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn timestamps_sorted_distinct_seeded() {
        let ts = sample_timestamps(50, 0.0, 50.0, 1).unwrap();
        assert_eq!(ts.len(), 50);
        for w in ts.windows(2) {
            assert!(w[1] - w[0] >= 1e-6);
        }
        assert!(ts.iter().all(|t| (0.0..50.0).contains(t)));
        assert_eq!(ts, sample_timestamps(50, 0.0, 50.0, 1).unwrap());
        assert_eq!(sample_timestamps(1, 2.0, 3.0, 9).unwrap().len(), 1);
    }

    #[test]
    fn split_sizes_and_order() {
        let domains: Vec<Domain> = sample_timestamps(50, 0.0, 50.0, 2)
            .unwrap()
            .into_iter()
            .map(|t| {
                Domain::new(
                    t,
                    Tensor::new(1, 1, vec![t]).unwrap(),
                    Tensor::new(1, 1, vec![0.0]).unwrap(),
                    TaskKind::BinaryClassification,
                )
                .unwrap()
            })
            .collect();
        let seq = DomainSequence::new("toy", domains).unwrap();
        let (train, test) = split_train_test(&seq, 0.3).unwrap();
        assert_eq!(train.len(), 35);
        assert_eq!(test.len(), 15);
        assert!(train.timestamps().last().unwrap() < test.timestamps().first().unwrap());
        // every instance exactly once
        assert_eq!(train.len() + test.len(), seq.len());

        let (all_train, empty_test) = split_train_test(&seq, 0.0).unwrap();
        assert_eq!(all_train.len(), 50);
        assert!(empty_test.is_empty());
    }

    #[test]
    fn non_monotone_sequence_rejected() {
        let mk = |t| {
            Domain::new(
                t,
                Tensor::new(1, 1, vec![0.0]).unwrap(),
                Tensor::new(1, 1, vec![0.0]).unwrap(),
                TaskKind::BinaryClassification,
            )
            .unwrap()
        };
        assert!(DomainSequence::new("bad", vec![mk(1.0), mk(1.0)]).is_err());
        assert!(DomainSequence::new("bad", vec![mk(2.0), mk(1.0)]).is_err());
    }

    #[test]
    fn save_load_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let domains: Vec<Domain> = [0.37, 1.559, 42.123456789012345]
            .iter()
            .enumerate()
            .map(|(i, &t)| generate_moons_domain(t, 5 + i, 0.1, 18.0, i as u64).unwrap())
            .collect();
        let seq = DomainSequence::new("roundtrip", domains).unwrap();
        save_sequence(&seq, dir.path()).unwrap();
        let back = load_sequence(dir.path()).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn missing_manifest_is_descriptive() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_sequence(dir.path()).unwrap_err();
        assert!(err.to_string().contains("manifest.json"), "{err}");
    }

    #[test]
    fn manifest_count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let seq = DomainSequence::new(
            "broken",
            vec![generate_moons_domain(0.0, 3, 0.0, 18.0, 0).unwrap()],
        )
        .unwrap();
        save_sequence(&seq, dir.path()).unwrap();
        // corrupt: add an extra timestamp
        let mpath = dir.path().join("manifest.json");
        let raw = std::fs::read_to_string(&mpath).unwrap();
        let fixed = raw.replace("\"timestamps\": [", "\"timestamps\": [99.0,");
        std::fs::write(&mpath, fixed).unwrap();
        let err = load_sequence(dir.path()).unwrap_err();
        assert!(err.to_string().contains("timestamps"), "{err}");
    }
}

//! Plain-text formats.
//!
//! A matrix is a `rows cols` header followed by `rows` lines of
//! whitespace-separated values printed with shortest round-trip precision.
//! A sampling pattern is a `rows cols` header followed by one zero-indexed
//! `i j` line per observed entry.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SamplingPattern};
use crate::synth::{GmmNoise, GroundTruth};

pub fn format_matrix(a: &Matrix) -> String {
    let mut out = format!("{} {}\n", a.nrows(), a.ncols());
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| format!("{:e}", a[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

fn parse_header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>) -> Result<(usize, usize)> {
    let (no, line) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "missing header".into(),
    })?;
    let dims: Vec<&str> = line.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::Parse {
            line: no,
            msg: format!("expected `rows cols`, got `{line}`"),
        });
    }
    let parse = |s: &str| {
        s.parse::<usize>().map_err(|e| Error::Parse {
            line: no,
            msg: format!("bad dimension `{s}`: {e}"),
        })
    };
    Ok((parse(dims[0])?, parse(dims[1])?))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut lines = content_lines(text);
    let (rows, cols) = parse_header(&mut lines)?;
    let mut a = Matrix::zeros(rows, cols);
    for i in 0..rows {
        let (no, line) = lines.next().ok_or(Error::Parse {
            line: 0,
            msg: format!("expected {rows} rows, found {i}"),
        })?;
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != cols {
            return Err(Error::Parse {
                line: no,
                msg: format!("expected {cols} values, found {}", vals.len()),
            });
        }
        for (j, v) in vals.iter().enumerate() {
            let x: f64 = v.parse().map_err(|e| Error::Parse {
                line: no,
                msg: format!("bad value `{v}`: {e}"),
            })?;
            if !x.is_finite() {
                return Err(Error::Parse {
                    line: no,
                    msg: format!("non-finite value `{v}`"),
                });
            }
            a[(i, j)] = x;
        }
    }
    if let Some((no, _)) = lines.next() {
        return Err(Error::Parse {
            line: no,
            msg: "trailing content".into(),
        });
    }
    Ok(a)
}

pub fn format_pattern(p: &SamplingPattern) -> String {
    let mut out = format!("{} {}\n", p.rows(), p.cols());
    for (i, j) in p.indices() {
        out.push_str(&format!("{i} {j}\n"));
    }
    out
}

pub fn parse_pattern(text: &str) -> Result<SamplingPattern> {
    let mut lines = content_lines(text);
    let (rows, cols) = parse_header(&mut lines)?;
    let mut idx = Vec::new();
    for (no, line) in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let parsed: Option<Vec<usize>> = parts.iter().map(|s| s.parse().ok()).collect();
        match parsed.as_deref() {
            Some(&[i, j]) if i < rows && j < cols => idx.push((i, j)),
            _ => {
                return Err(Error::Parse {
                    line: no,
                    msg: format!("bad index pair `{line}`"),
                })
            }
        }
    }
    SamplingPattern::from_indices(rows, cols, idx)
}

pub fn save_matrix(path: &Path, a: &Matrix) -> Result<()> {
    Ok(fs::write(path, format_matrix(a))?)
}

pub fn load_matrix(path: &Path) -> Result<Matrix> {
    parse_matrix(&fs::read_to_string(path)?)
}

pub fn save_pattern(path: &Path, p: &SamplingPattern) -> Result<()> {
    Ok(fs::write(path, format_pattern(p))?)
}

pub fn load_pattern(path: &Path) -> Result<SamplingPattern> {
    parse_pattern(&fs::read_to_string(path)?)
}

/// Everything needed to regenerate a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub scenario: String,
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub d: usize,
    pub counts: Vec<usize>,
    pub p: f64,
    pub snr_a_db: f64,
    pub snr_b_db: f64,
    /// Measurement SNR target; absent for noiseless data.
    pub measurement_snr_db: Option<f64>,
    pub gmm: Option<GmmNoise>,
    pub seed: u64,
    /// How SNR values are defined.
    pub snr_definition: String,
    pub labels: Vec<usize>,
}

pub const SNR_DEFINITION: &str = "realized Frobenius power ratio, 10 log10(|signal|^2 / |noise|^2)";

impl DatasetManifest {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: 0,
            msg: e.to_string(),
        })
    }
}

/// A generated dataset in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub manifest: DatasetManifest,
    pub truth: GroundTruth,
    pub aprime: Matrix,
    pub bprime: Matrix,
    pub pattern: SamplingPattern,
    /// `P_Ω(M)` plus any measurement noise.
    pub observed: Matrix,
}

const BUNDLE_FILES: [&str; 8] = [
    "M.txt",
    "A.txt",
    "Z.txt",
    "B.txt",
    "Aprime.txt",
    "Bprime.txt",
    "observed.txt",
    "pattern.txt",
];

pub fn write_bundle(dir: &Path, bundle: &Bundle) -> Result<()> {
    fs::create_dir_all(dir)?;
    let t = &bundle.truth;
    let mats = [&t.m, &t.a, &t.z, &t.b, &bundle.aprime, &bundle.bprime, &bundle.observed];
    for (name, a) in BUNDLE_FILES.iter().zip(mats) {
        save_matrix(&dir.join(name), a)?;
    }
    save_pattern(&dir.join(BUNDLE_FILES[7]), &bundle.pattern)?;
    fs::write(dir.join("manifest.toml"), bundle.manifest.to_toml()?)?;
    Ok(())
}

pub fn read_bundle(dir: &Path) -> Result<Bundle> {
    let manifest = DatasetManifest::from_toml(&fs::read_to_string(dir.join("manifest.toml"))?)?;
    let load = |i: usize| load_matrix(&dir.join(BUNDLE_FILES[i]));
    let truth = GroundTruth {
        m: load(0)?,
        a: load(1)?,
        z: load(2)?,
        b: load(3)?,
        labels: manifest.labels.clone(),
        bases: Vec::new(),
    };
    Ok(Bundle {
        aprime: load(4)?,
        bprime: load(5)?,
        observed: load(6)?,
        pattern: load_pattern(&dir.join(BUNDLE_FILES[7]))?,
        truth,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_exact() {
        let a = Matrix::from_fn(3, 4, |i, j| (i as f64 + 0.1).powf(j as f64 + 0.3) * 1e-7 - 1.0 / 3.0);
        assert_eq!(parse_matrix(&format_matrix(&a)).unwrap(), a);
    }

    #[test]
    fn pattern_round_trip() {
        let p = SamplingPattern::from_indices(3, 5, [(0, 4), (2, 0), (1, 1)]).unwrap();
        let text = format_pattern(&p);
        assert!(text.starts_with("3 5\n0 4\n1 1\n2 0\n"));
        assert_eq!(parse_pattern(&text).unwrap(), p);
    }

    #[test]
    fn malformed_input() {
        assert!(parse_matrix("2 2\n1 2\n3\n").is_err());
        assert!(parse_matrix("2 2\n1 2\n").is_err());
        assert!(parse_matrix("1 1\nNaN\n").is_err());
        assert!(parse_matrix("1 1\n1\n2\n").is_err());
        assert!(parse_pattern("2 2\n2 0\n").is_err());
        assert!(parse_pattern("2 2\n0\n").is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let m = DatasetManifest {
            scenario: "scenario1".into(),
            m: 20,
            n: 60,
            r: 12,
            d: 4,
            counts: vec![20, 20, 20],
            p: 0.4,
            snr_a_db: 10.0,
            snr_b_db: f64::INFINITY,
            measurement_snr_db: Some(8.0),
            gmm: Some(GmmNoise::default()),
            seed: 7,
            snr_definition: SNR_DEFINITION.into(),
            labels: vec![0, 1, 2],
        };
        assert_eq!(DatasetManifest::from_toml(&m.to_toml().unwrap()).unwrap(), m);
    }
}

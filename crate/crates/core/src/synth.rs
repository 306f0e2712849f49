//! Synthetic union-of-subspaces data: `M = A Z Bᵀ` with the rows of `B`
//! drawn from `S` random `d`-dimensional subspaces of `ℝ^r`, noisy side
//! information, Bernoulli sampling and impulsive Gaussian-mixture noise.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{orthonormal_columns, svd, Matrix, SamplingPattern, SvdRank};

const MAX_DRAWS: usize = 20;

fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn rank(a: &Matrix) -> Result<usize> {
    let (m, n) = a.shape();
    Ok(svd(a, SvdRank::Full)?.numerical_rank(crate::linalg::default_rank_tol(m, n)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubspaceModel {
    /// Subspace dimension `d`.
    pub d: usize,
    /// Ambient dimension `r` of the subspaces.
    pub r: usize,
    /// Points per subspace; the number of subspaces is `counts.len()`.
    pub counts: Vec<usize>,
}

impl SubspaceModel {
    pub fn new(d: usize, r: usize, counts: Vec<usize>) -> Result<Self> {
        let model = SubspaceModel { d, r, counts };
        model.validate()?;
        Ok(model)
    }

    /// `s` subspaces with `per` points each.
    pub fn uniform(s: usize, d: usize, r: usize, per: usize) -> Result<Self> {
        Self::new(d, r, vec![per; s])
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.is_empty() || self.d == 0 || self.d > self.r {
            return Err(Error::InvalidArgument(format!(
                "need S ≥ 1 and 1 ≤ d ≤ r, got S = {}, d = {}, r = {}",
                self.counts.len(),
                self.d,
                self.r
            )));
        }
        if self.counts.contains(&0) {
            return Err(Error::InvalidArgument("empty subspace".into()));
        }
        Ok(())
    }

    pub fn subspaces(&self) -> usize {
        self.counts.len()
    }

    pub fn n(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `min(S·d, r, m, n)`.
    pub fn target_rank(&self, m: usize) -> usize {
        (self.subspaces() * self.d).min(self.r).min(m).min(self.n())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub a: Matrix,
    pub z: Matrix,
    /// `n × r`; row `j` lies in subspace `labels[j]`.
    pub b: Matrix,
    pub m: Matrix,
    pub labels: Vec<usize>,
    /// Orthonormal `r × d` basis per subspace.
    pub bases: Vec<Matrix>,
}

/// Draws `A`, `Z` and `B` until `rank(M)` equals the model's target rank.
pub fn generate_ground_truth<R: Rng + ?Sized>(
    model: &SubspaceModel,
    m: usize,
    rng: &mut R,
) -> Result<GroundTruth> {
    model.validate()?;
    if m == 0 {
        return Err(Error::InvalidArgument("m must be positive".into()));
    }
    let (r, d) = (model.r, model.d);
    let target = model.target_rank(m);
    for _ in 0..MAX_DRAWS {
        let bases: Vec<Matrix> = (0..model.subspaces())
            .map(|_| orthonormal_columns(&gaussian(r, d, rng)))
            .collect();
        let mut b = Matrix::zeros(model.n(), r);
        let mut labels = Vec::with_capacity(model.n());
        let mut row = 0;
        for (s, &count) in model.counts.iter().enumerate() {
            let pts = &bases[s] * gaussian(d, count, rng);
            for k in 0..count {
                b.set_row(row, &pts.column(k).transpose());
                labels.push(s);
                row += 1;
            }
        }
        let a = gaussian(m, r, rng);
        let mut z = gaussian(r, r, rng);
        let mut tries = 0;
        while rank(&z)? < r {
            tries += 1;
            if tries > MAX_DRAWS {
                return Err(Error::DegenerateDraw("Z stayed rank deficient".into()));
            }
            z = gaussian(r, r, rng);
        }
        let mat = &a * &z * b.transpose();
        if rank(&mat)? == target {
            return Ok(GroundTruth {
                a,
                z,
                b,
                m: mat,
                labels,
                bases,
            });
        }
    }
    Err(Error::DegenerateDraw(format!(
        "rank {target} not reached in {MAX_DRAWS} draws"
    )))
}

/// `B + N` with Gaussian `N` rescaled so that `‖B‖²/‖N‖²` is exactly
/// `10^{snr/10}`. An infinite SNR returns `B` unchanged.
pub fn add_model_noise<R: Rng + ?Sized>(b: &Matrix, snr_db: f64, rng: &mut R) -> Result<Matrix> {
    if snr_db.is_nan() {
        return Err(Error::InvalidArgument("SNR is NaN".into()));
    }
    if snr_db == f64::INFINITY {
        return Ok(b.clone());
    }
    let noise = gaussian(b.nrows(), b.ncols(), rng);
    let nn = noise.norm();
    if nn == 0.0 {
        return Ok(b.clone());
    }
    let target = b.norm() * 10f64.powf(-snr_db / 20.0);
    Ok(b + noise * (target / nn))
}

/// I.i.d. Bernoulli(`p`) mask, drawn row-major.
pub fn sample_pattern<R: Rng + ?Sized>(m: usize, n: usize, p: f64, rng: &mut R) -> Result<SamplingPattern> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("p must lie in [0, 1], got {p}")));
    }
    let mask = (0..m * n).map(|_| rng.random_bool(p)).collect();
    SamplingPattern::from_mask(m, n, mask)
}

/// Two-component Gaussian mixture applied to a random subset of entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmNoise {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub variances: [f64; 2],
    /// Chance that an observed entry is corrupted.
    pub probability: f64,
}

impl Default for GmmNoise {
    /// `α = (0.3, 0.7)`, `μ = (0.1, −0.2)`, `σ² = (1, 0.01)`, corruption
    /// probability 0.2.
    fn default() -> Self {
        GmmNoise {
            weights: [0.3, 0.7],
            means: [0.1, -0.2],
            variances: [1.0, 0.01],
            probability: 0.2,
        }
    }
}

impl GmmNoise {
    pub fn validate(&self) -> Result<()> {
        let ok = self.weights.iter().all(|&w| (0.0..=1.0).contains(&w))
            && (self.weights[0] + self.weights[1] - 1.0).abs() <= 1e-12
            && self.variances.iter().all(|&v| v > 0.0 && v.is_finite())
            && self.means.iter().all(|m| m.is_finite())
            && (0.0..=1.0).contains(&self.probability);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid mixture: {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        self.weights[0] * self.means[0] + self.weights[1] * self.means[1]
    }

    /// One draw from the mixture.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let k = if rng.random::<f64>() < self.weights[0] { 0 } else { 1 };
        let e: f64 = StandardNormal.sample(rng);
        self.means[k] + self.variances[k].sqrt() * e
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementNoise {
    pub observed: Matrix,
    /// Common factor `γ` applied to both variances (means scale by `√γ`).
    /// Zero when no entry was corrupted.
    pub variance_scale: f64,
    pub corrupted: usize,
}

impl MeasurementNoise {
    pub fn realized_snr_db(&self, clean: &Matrix) -> f64 {
        let noise = (&self.observed - clean).norm_squared();
        10.0 * (clean.norm_squared() / noise).log10()
    }
}

/// Corrupts each observed entry with probability `gmm.probability` and
/// rescales the mixture so that `‖P_Ω M‖² / ‖noise‖²` hits the target SNR
/// exactly.
pub fn add_measurement_noise<R: Rng + ?Sized>(
    observed: &Matrix,
    pattern: &SamplingPattern,
    gmm: &GmmNoise,
    target_snr_db: f64,
    rng: &mut R,
) -> Result<MeasurementNoise> {
    gmm.validate()?;
    if !target_snr_db.is_finite() {
        return Err(Error::InvalidArgument("measurement SNR must be finite".into()));
    }
    if pattern.observed_count() == 0 {
        return Err(Error::InvalidArgument("empty sampling pattern".into()));
    }
    let clean = pattern.apply(observed)?;
    let signal = clean.norm_squared();
    if signal == 0.0 {
        return Err(Error::ZeroDenominator("observed signal power"));
    }
    let mut noise = Matrix::zeros(clean.nrows(), clean.ncols());
    let mut corrupted = 0;
    for (i, j) in pattern.indices() {
        if rng.random_bool(gmm.probability) {
            noise[(i, j)] = gmm.sample(rng);
            corrupted += 1;
        }
    }
    let power = noise.norm_squared();
    if power == 0.0 {
        return Ok(MeasurementNoise {
            observed: clean,
            variance_scale: 0.0,
            corrupted,
        });
    }
    let gamma = signal / (power * 10f64.powf(target_snr_db / 10.0));
    Ok(MeasurementNoise {
        observed: clean + noise * gamma.sqrt(),
        variance_scale: gamma,
        corrupted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_full_subspace() {
        let model = SubspaceModel::uniform(1, 5, 5, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gt = generate_ground_truth(&model, 4, &mut rng).unwrap();
        assert_eq!(rank(&gt.b).unwrap(), 5);
        assert_eq!(rank(&gt.m).unwrap(), 4);
    }

    #[test]
    fn rows_lie_in_their_subspace() {
        let model = SubspaceModel::uniform(3, 4, 12, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gt = generate_ground_truth(&model, 20, &mut rng).unwrap();
        assert_eq!(gt.m.shape(), (20, 60));
        assert_eq!(rank(&gt.m).unwrap(), 12);
        for (j, &s) in gt.labels.iter().enumerate() {
            let row = gt.b.row(j).transpose();
            let q = &gt.bases[s];
            let resid = &row - q * (q.transpose() * &row);
            assert!(resid.norm() <= 1e-12 * row.norm().max(1.0));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let model = SubspaceModel::new(2, 12, vec![9, 9, 9, 10, 13, 14]).unwrap();
        let a = generate_ground_truth(&model, 20, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = generate_ground_truth(&model, 20, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(model.n(), 64);
        assert_eq!(rank(&a.m).unwrap(), 12);
    }

    #[test]
    fn invalid_models() {
        assert!(SubspaceModel::new(5, 4, vec![3]).is_err());
        assert!(SubspaceModel::new(2, 4, vec![]).is_err());
        assert!(SubspaceModel::new(2, 4, vec![3, 0]).is_err());
    }

    #[test]
    fn model_noise_snr() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = gaussian(10, 4, &mut rng);
        assert_eq!(add_model_noise(&b, f64::INFINITY, &mut rng).unwrap(), b);
        let n0 = add_model_noise(&b, 0.0, &mut rng).unwrap() - &b;
        assert!((n0.norm() - b.norm()).abs() <= 1e-12 * b.norm());
        let n20 = add_model_noise(&b, 20.0, &mut rng).unwrap() - &b;
        let snr = 10.0 * (b.norm_squared() / n20.norm_squared()).log10();
        assert!((snr - 20.0).abs() < 1e-12);
    }

    #[test]
    fn pattern_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(sample_pattern(3, 4, 1.0, &mut rng).unwrap().observed_count(), 12);
        assert_eq!(sample_pattern(3, 4, 0.0, &mut rng).unwrap().observed_count(), 0);
        assert!(sample_pattern(3, 4, 1.5, &mut rng).is_err());
    }

    #[test]
    fn measurement_noise_hits_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = gaussian(20, 30, &mut rng);
        let omega = sample_pattern(20, 30, 0.5, &mut rng).unwrap();
        let clean = omega.apply(&m).unwrap();
        let out = add_measurement_noise(&m, &omega, &GmmNoise::default(), 8.0, &mut rng).unwrap();
        assert!(out.corrupted > 0);
        assert!((out.realized_snr_db(&clean) - 8.0).abs() < 1e-9);
        // Unobserved entries stay zero.
        for i in 0..20 {
            for j in 0..30 {
                if !omega.contains(i, j) {
                    assert_eq!(out.observed[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_probability_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = gaussian(5, 6, &mut rng);
        let omega = sample_pattern(5, 6, 0.7, &mut rng).unwrap();
        let gmm = GmmNoise { probability: 0.0, ..Default::default() };
        let out = add_measurement_noise(&m, &omega, &gmm, 8.0, &mut rng).unwrap();
        assert_eq!(out.observed, omega.apply(&m).unwrap());
        assert_eq!(out.corrupted, 0);
    }

    #[test]
    fn mixture_mean() {
        assert!((GmmNoise::default().mean() + 0.11).abs() < 1e-15);
        let bad = GmmNoise { weights: [0.5, 0.6], ..Default::default() };
        assert!(bad.validate().is_err());
    }
}

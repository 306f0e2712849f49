//! Scenario sweeps: data generation, both methods per trial, metrics and
//! their aggregation.
//!
//! Every trial draws from its own generator seeded by mixing the base seed
//! with the grid and trial indices, so results do not depend on execution
//! order or thread count.

use std::fmt;
use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::completion::{complete, CompletionConfig, CompletionResult};
use crate::error::{Error, Result};
use crate::io::{Bundle, DatasetManifest, SNR_DEFINITION};
use crate::metrics::{nmse, rnmse};
use crate::synth::{
    add_measurement_noise, add_model_noise, generate_ground_truth, sample_pattern, GmmNoise,
    SubspaceModel,
};

/// Uneven split used for six subspaces sharing 64 points.
const SIX_WAY_SPLIT_64: [usize; 6] = [9, 9, 9, 10, 13, 14];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sweep {
    /// Observation probability.
    P,
    /// Model SNR of `B′` in dB.
    SnrB,
    /// Number of subspaces `S` (rank `S·d`).
    Subspaces,
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sweep::P => "p",
            Sweep::SnrB => "snrB",
            Sweep::Subspaces => "S",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Proposed,
    Baseline,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Proposed => "proposed",
            Method::Baseline => "baseline",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: String,
    pub sweep: Sweep,
    pub grid: Vec<f64>,
    pub m: usize,
    pub d: usize,
    /// Rank; `S·d` when absent.
    pub r: Option<usize>,
    pub subspaces: usize,
    /// Points per subspace. Ignored when `n` is set.
    pub points_per_subspace: usize,
    /// Total column count split across the subspaces.
    pub n: Option<usize>,
    pub p: f64,
    pub snr_a_db: f64,
    pub snr_b_db: f64,
    pub noisy: bool,
    pub gmm: GmmNoise,
    pub measurement_snr_db: f64,
    pub trials: usize,
    pub base_seed: u64,
    pub run_proposed: bool,
    pub run_baseline: bool,
    pub completion: CompletionConfig,
}

/// Parameters of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointParams {
    pub p: f64,
    pub snr_b_db: f64,
    pub model: SubspaceModel,
    pub r: usize,
}

impl ScenarioSpec {
    fn base(id: &str, sweep: Sweep, grid: Vec<f64>, trials: usize) -> Self {
        ScenarioSpec {
            id: id.into(),
            sweep,
            grid,
            m: 20,
            d: 4,
            r: Some(12),
            subspaces: 3,
            points_per_subspace: 20,
            n: None,
            p: 0.4,
            snr_a_db: 10.0,
            snr_b_db: 20.0,
            noisy: false,
            gmm: GmmNoise::default(),
            measurement_snr_db: 8.0,
            trials,
            base_seed: 1,
            run_proposed: true,
            run_baseline: true,
            completion: CompletionConfig::default(),
        }
    }

    /// `m = 20`, `n = 60`, `r = 12`, `S = 3`, `d = 4`; sweeps `p`.
    pub fn scenario1() -> Self {
        Self::base(
            "scenario1",
            Sweep::P,
            vec![0.25, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            20,
        )
    }

    /// `p = 0.4`, `r = 15`, `S = 3`, `d = 5`; sweeps the SNR of `B′`.
    pub fn scenario2() -> Self {
        ScenarioSpec {
            d: 5,
            r: Some(15),
            ..Self::base(
                "scenario2",
                Sweep::SnrB,
                vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0],
                20,
            )
        }
    }

    /// `m = 20`, `n = 64`, `p = 0.3`, `d = 2`; sweeps `S` from 2 to 10.
    pub fn scenario3() -> Self {
        ScenarioSpec {
            d: 2,
            r: None,
            n: Some(64),
            p: 0.3,
            snr_a_db: 5.0,
            snr_b_db: 15.0,
            ..Self::base("scenario3", Sweep::Subspaces, (2..=10).map(f64::from).collect(), 50)
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "scenario1" => Some(Self::scenario1()),
            "scenario2" => Some(Self::scenario2()),
            "scenario3" => Some(Self::scenario3()),
            _ => None,
        }
    }

    /// Applies a partial TOML table on top of this spec.
    pub fn merge_toml(&self, text: &str) -> Result<Self> {
        let parse_err = |e: String| Error::Parse { line: 0, msg: e };
        let overlay: toml::Table = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        let mut base = toml::Table::try_from(self).map_err(|e| parse_err(e.to_string()))?;
        merge_tables(&mut base, overlay);
        let spec: ScenarioSpec = base.try_into().map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut out = Vec::new();
        if self.run_proposed {
            out.push(Method::Proposed);
        }
        if self.run_baseline {
            out.push(Method::Baseline);
        }
        out
    }

    pub fn point(&self, value: f64) -> Result<PointParams> {
        let (mut p, mut snr_b, mut s) = (self.p, self.snr_b_db, self.subspaces);
        match self.sweep {
            Sweep::P => p = value,
            Sweep::SnrB => snr_b = value,
            Sweep::Subspaces => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::InvalidArgument(format!("S must be a positive integer, got {value}")));
                }
                s = value as usize;
            }
        }
        let counts = match self.n {
            Some(n) => split_counts(n, s)?,
            None => vec![self.points_per_subspace; s],
        };
        let model = SubspaceModel::new(self.d, self.r.unwrap_or(s * self.d), counts)?;
        let r = model.r;
        let n = model.n();
        if r > self.m.min(n) {
            return Err(Error::InvalidArgument(format!(
                "rank {r} exceeds min(m, n) = {}",
                self.m.min(n)
            )));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("p = {p} outside [0, 1]")));
        }
        if snr_b.is_nan() || self.snr_a_db.is_nan() {
            return Err(Error::InvalidArgument("SNR is NaN".into()));
        }
        Ok(PointParams {
            p,
            snr_b_db: snr_b,
            model,
            r,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidArgument("empty grid".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.m == 0 {
            return Err(Error::InvalidArgument("m must be positive".into()));
        }
        if !self.run_proposed && !self.run_baseline {
            return Err(Error::InvalidArgument("no method selected".into()));
        }
        if self.noisy {
            self.gmm.validate()?;
            if !self.measurement_snr_db.is_finite() {
                return Err(Error::InvalidArgument("measurement SNR must be finite".into()));
            }
        }
        self.completion.validate()?;
        for &v in &self.grid {
            self.point(v)?;
        }
        Ok(())
    }
}

fn merge_tables(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Splits `n` points over `s` subspaces: the fixed uneven split for six
/// subspaces of 64 points, otherwise as evenly as possible with the
/// remainder on the last subspaces.
pub fn split_counts(n: usize, s: usize) -> Result<Vec<usize>> {
    if s == 0 || s > n {
        return Err(Error::InvalidArgument(format!("cannot split {n} points over {s} subspaces")));
    }
    if n == 64 && s == 6 {
        return Ok(SIX_WAY_SPLIT_64.to_vec());
    }
    let (base, rem) = (n / s, n % s);
    Ok((0..s).map(|i| base + usize::from(i >= s - rem)).collect())
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of trial `trial` at grid index `grid_index`.
pub fn trial_seed(base_seed: u64, grid_index: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ grid_index as u64) ^ trial as u64)
}

/// Generates the dataset of one trial.
pub fn generate_dataset(spec: &ScenarioSpec, grid_index: usize, trial: usize) -> Result<Bundle> {
    let value = *spec
        .grid
        .get(grid_index)
        .ok_or_else(|| Error::InvalidArgument(format!("grid index {grid_index} out of range")))?;
    let point = spec.point(value)?;
    let seed = trial_seed(spec.base_seed, grid_index, trial);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = generate_ground_truth(&point.model, spec.m, &mut rng)?;
    let bprime = add_model_noise(&truth.b, point.snr_b_db, &mut rng)?;
    let aprime = add_model_noise(&truth.a, spec.snr_a_db, &mut rng)?;
    let (m, n) = truth.m.shape();
    let pattern = sample_pattern(m, n, point.p, &mut rng)?;
    let observed = if spec.noisy && pattern.observed_count() > 0 {
        add_measurement_noise(&truth.m, &pattern, &spec.gmm, spec.measurement_snr_db, &mut rng)?.observed
    } else {
        pattern.apply(&truth.m)?
    };
    let manifest = DatasetManifest {
        scenario: spec.id.clone(),
        m,
        n,
        r: point.r,
        d: spec.d,
        counts: point.model.counts.clone(),
        p: point.p,
        snr_a_db: spec.snr_a_db,
        snr_b_db: point.snr_b_db,
        measurement_snr_db: spec.noisy.then_some(spec.measurement_snr_db),
        gmm: spec.noisy.then(|| spec.gmm.clone()),
        seed,
        snr_definition: SNR_DEFINITION.into(),
        labels: truth.labels.clone(),
    };
    Ok(Bundle {
        manifest,
        truth,
        aprime,
        bprime,
        pattern,
        observed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub scenario: String,
    pub sweep: Sweep,
    pub value: f64,
    pub trial: usize,
    pub seed: u64,
    pub method: Method,
    pub nmse: f64,
    pub rnmse: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub q: usize,
    pub max_self_expressive_residual: f64,
    pub termination: String,
    /// Wall-clock seconds per inner iteration. Not written to the metrics CSV.
    pub seconds_per_iter: f64,
    pub error: Option<String>,
}

impl MetricsRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

fn run_method(bundle: &Bundle, point: &PointParams, spec: &ScenarioSpec, method: Method) -> Result<(CompletionResult, f64)> {
    let cfg = CompletionConfig {
        r: point.r,
        baseline: method == Method::Baseline,
        seed: bundle.manifest.seed,
        ..spec.completion.clone()
    };
    let start = Instant::now();
    let res = complete(&bundle.observed, &bundle.pattern, &bundle.bprime, &cfg)?;
    let secs = start.elapsed().as_secs_f64();
    let iters = res.inner.iter().map(|t| t.iterations()).sum::<usize>().max(1);
    Ok((res, secs / iters as f64))
}

/// Runs every selected method on one trial. Failures are recorded, not raised.
pub fn run_trial(spec: &ScenarioSpec, grid_index: usize, trial: usize) -> Vec<MetricsRecord> {
    let value = spec.grid[grid_index];
    let seed = trial_seed(spec.base_seed, grid_index, trial);
    let blank = |method: Method, error: String| MetricsRecord {
        scenario: spec.id.clone(),
        sweep: spec.sweep,
        value,
        trial,
        seed,
        method,
        nmse: f64::NAN,
        rnmse: f64::NAN,
        outer_iters: 0,
        inner_iters: 0,
        q: 0,
        max_self_expressive_residual: f64::NAN,
        termination: "error".into(),
        seconds_per_iter: f64::NAN,
        error: Some(error),
    };
    let data = spec
        .point(value)
        .and_then(|point| generate_dataset(spec, grid_index, trial).map(|b| (point, b)));
    let (point, bundle) = match data {
        Ok(d) => d,
        Err(e) => return spec.methods().into_iter().map(|m| blank(m, e.to_string())).collect(),
    };
    spec.methods()
        .into_iter()
        .map(|method| {
            let outcome = run_method(&bundle, &point, spec, method).and_then(|(res, spi)| {
                let xh = res.x_hat.embed();
                Ok(MetricsRecord {
                    nmse: nmse(&bundle.truth.m, &xh)?,
                    rnmse: rnmse(&bundle.truth.m, &xh, &bundle.pattern)?,
                    outer_iters: res.outer_iterations(),
                    inner_iters: res.inner.iter().map(|t| t.iterations()).sum(),
                    q: res.dimension.q,
                    max_self_expressive_residual: res.max_self_expressive_residual(),
                    termination: res.termination.to_string(),
                    seconds_per_iter: spi,
                    error: None,
                    ..blank(method, String::new())
                })
            });
            outcome.unwrap_or_else(|e| blank(method, e.to_string()))
        })
        .collect()
}

fn canonical_order(a: &MetricsRecord, b: &MetricsRecord) -> std::cmp::Ordering {
    a.value
        .total_cmp(&b.value)
        .then(a.trial.cmp(&b.trial))
        .then(a.method.cmp(&b.method))
}

/// Runs the whole sweep (trials in parallel) and returns records sorted by
/// sweep value, trial and method.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<Vec<MetricsRecord>> {
    spec.validate()?;
    let tasks: Vec<(usize, usize)> = (0..spec.grid.len())
        .flat_map(|g| (0..spec.trials).map(move |t| (g, t)))
        .collect();
    let mut records: Vec<MetricsRecord> = tasks
        .par_iter()
        .flat_map_iter(|&(g, t)| run_trial(spec, g, t))
        .collect();
    records.sort_by(canonical_order);
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AggregateRecord {
    pub scenario: String,
    pub sweep: String,
    pub value: f64,
    pub method: String,
    pub trials: usize,
    pub failures: usize,
    pub mean_nmse: f64,
    pub stderr_nmse: f64,
    pub mean_rnmse: f64,
    pub stderr_rnmse: f64,
}

/// Mean and standard error (sample standard deviation over `√k`).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let k = xs.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

/// Mean and standard error per (method, sweep value) over successful trials.
pub fn aggregate(records: &[MetricsRecord]) -> Vec<AggregateRecord> {
    let mut keys: Vec<(f64, Method)> = Vec::new();
    for r in records {
        if !keys.iter().any(|&(v, m)| v.total_cmp(&r.value).is_eq() && m == r.method) {
            keys.push((r.value, r.method));
        }
    }
    keys.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.total_cmp(&b.0)));
    keys.into_iter()
        .map(|(value, method)| {
            let group: Vec<&MetricsRecord> = records
                .iter()
                .filter(|r| r.method == method && r.value.total_cmp(&value).is_eq())
                .collect();
            let ok: Vec<&&MetricsRecord> = group.iter().filter(|r| !r.failed()).collect();
            let nm: Vec<f64> = ok.iter().map(|r| r.nmse).collect();
            let rn: Vec<f64> = ok.iter().map(|r| r.rnmse).collect();
            let (mean_nmse, stderr_nmse) = mean_stderr(&nm);
            let (mean_rnmse, stderr_rnmse) = mean_stderr(&rn);
            AggregateRecord {
                scenario: group[0].scenario.clone(),
                sweep: group[0].sweep.to_string(),
                value,
                method: method.to_string(),
                trials: group.len(),
                failures: group.len() - ok.len(),
                mean_nmse,
                stderr_nmse,
                mean_rnmse,
                stderr_rnmse,
            }
        })
        .collect()
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct MetricsRow<'a> {
    scenario: &'a str,
    sweep: String,
    value: f64,
    trial: usize,
    seed: u64,
    method: String,
    nmse: f64,
    rnmse: f64,
    outer_iters: usize,
    inner_iters: usize,
    q: usize,
    max_self_expressive_residual: f64,
    termination: &'a str,
    error: &'a str,
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Per-trial CSV. Timing is left out so that reruns are byte-identical.
pub fn write_metrics_csv<W: Write>(out: W, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(MetricsRow {
            scenario: &r.scenario,
            sweep: r.sweep.to_string(),
            value: r.value,
            trial: r.trial,
            seed: r.seed,
            method: r.method.to_string(),
            nmse: r.nmse,
            rnmse: r.rnmse,
            outer_iters: r.outer_iters,
            inner_iters: r.inner_iters,
            q: r.q,
            max_self_expressive_residual: r.max_self_expressive_residual,
            termination: &r.termination,
            error: r.error.as_deref().unwrap_or(""),
        })
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(out: W, rows: &[AggregateRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RuntimeRecord {
    pub value: f64,
    pub trial: usize,
    pub proposed_seconds_per_iter: Option<f64>,
    pub baseline_seconds_per_iter: Option<f64>,
}

/// Times every trial sequentially after one untimed warm-up trial.
pub fn runtime_probe(spec: &ScenarioSpec) -> Result<Vec<RuntimeRecord>> {
    spec.validate()?;
    run_trial(spec, 0, 0);
    let mut out = Vec::new();
    for g in 0..spec.grid.len() {
        for t in 0..spec.trials {
            let recs = run_trial(spec, g, t);
            let pick = |m: Method| {
                recs.iter()
                    .find(|r| r.method == m && !r.failed())
                    .map(|r| r.seconds_per_iter)
            };
            out.push(RuntimeRecord {
                value: spec.grid[g],
                trial: t,
                proposed_seconds_per_iter: pick(Method::Proposed),
                baseline_seconds_per_iter: pick(Method::Baseline),
            });
        }
    }
    Ok(out)
}

pub fn write_runtime_csv<W: Write>(out: W, rows: &[RuntimeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

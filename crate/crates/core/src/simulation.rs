//! Monte Carlo study of the procedures under a random-effects model.
//!
//! Each null is false with probability `a`. A false null draws `df + 1`
//! vectors from `N(mu, Sigma(r))`, a true null from `N(0, I)`; the
//! coordinates are reduced to one-sample t statistics and their upper-tail
//! p-values under the central t law.
//!
//! Every null has its own random substream keyed by `(seed, run, null)`, so
//! results are identical however rayon schedules the runs.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::procedures::{
    combine_log_product, combine_max, combine_sum, matched_power_comparison, Matrix, OracleLr, PValueMatrix,
    RejectionResult, TruthVector,
};
use crate::regions::{EllipsoidSpec, RegionFamily, VolumeMode};
use crate::rng;
use crate::special::StudentT;
use crate::theory::{alpha_star_for, optimal_params, AltSpec};

/// Keeps the oracle's volume sample off the data streams.
const ORACLE_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

/// Smallest p-value passed to log or quantile transforms.
pub const P_FLOOR: f64 = 1e-300;

/// Covariance of false-null observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaForm {
    /// `K = 2`, off-diagonal `2r / (1 + r^2)`.
    Bivariate,
    /// `[1 + (K-1) r^2]^{-1} M'M`, `M = I + r (J - I)`.
    Exchangeable,
}

/// Row-major `2 x 2` covariance with off-diagonal `2r / (1 + r^2)`.
pub fn sigma_bivariate(r: f64) -> Result<Vec<f64>> {
    let rho = 2.0 * r / (1.0 + r * r);
    let m = vec![1.0, rho, rho, 1.0];
    cholesky(&m, 2)?;
    Ok(m)
}

/// Row-major `K x K` covariance `[1 + (K-1) r^2]^{-1} M'M`.
pub fn sigma_exchangeable(r: f64, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(domain("sigma_exchangeable", "K must be at least 1"));
    }
    let m_entry = |i: usize, j: usize| if i == j { 1.0 } else { r };
    let scale = 1.0 + (k as f64 - 1.0) * r * r;
    let mut out = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            out[i * k + j] = (0..k).map(|l| m_entry(l, i) * m_entry(l, j)).sum::<f64>() / scale;
        }
    }
    cholesky(&out, k)?;
    Ok(out)
}

/// Lower Cholesky factor of a row-major symmetric matrix.
pub fn cholesky(m: &[f64], k: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let s: f64 = (0..j).map(|p| l[i * k + p] * l[j * k + p]).sum();
            if i == j {
                let d = m[i * k + i] - s;
                if !(d > 1e-12) {
                    return Err(Error::Config("covariance is not positive definite".to_string()));
                }
                l[i * k + i] = d.sqrt();
            } else {
                l[i * k + j] = (m[i * k + j] - s) / l[j * k + j];
            }
        }
    }
    Ok(l)
}

/// Procedure applied to each run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Method {
    /// Ellipsoid regions; `nu = None` means `nu = gamma`.
    Ellipsoid {
        nu: Option<Vec<f64>>,
        #[serde(skip)]
        mode: Option<VolumeMode>,
    },
    /// Rectangle regions; `c = None` means the asymptotically optimal scales.
    Rectangle {
        c: Option<Vec<f64>>,
    },
    Min,
    Product,
    /// Stouffer regions; `weights = None` means unit weights.
    Stouffer {
        weights: Option<Vec<f64>>,
    },
    /// Likelihood-ratio oracle with a Monte Carlo volume table.
    OracleLr {
        samples: usize,
    },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ellipsoid { .. } => "ellipsoid",
            Method::Rectangle { .. } => "rectangle",
            Method::Min => "min",
            Method::Product => "product",
            Method::Stouffer { .. } => "stouffer",
            Method::OracleLr { .. } => "oracle",
        }
    }
}

/// Direct-combination competitors for the matched-power comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// Small `prod_k xi_ik`.
    ByProduct,
    /// Large `sum_k T_ik`.
    BySum,
    /// Large `max_k T_ik`.
    ByMax,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::ByProduct, Baseline::BySum, Baseline::ByMax];

    pub fn name(&self) -> &'static str {
        match self {
            Baseline::ByProduct => "by-product",
            Baseline::BySum => "by-sum",
            Baseline::ByMax => "by-max",
        }
    }
}

/// One Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub a: f64,
    pub alpha: f64,
    pub n_nulls: usize,
    pub n_runs: usize,
    pub df: usize,
    pub mu: Vec<f64>,
    pub r: f64,
    pub sigma_form: SigmaForm,
    pub method: Method,
    pub seed: u64,
}

impl ExperimentConfig {
    pub const DEFAULT_RUNS: usize = 500;
    pub const DEFAULT_NULLS: usize = 5000;

    /// Desk-scale defaults: 500 runs of 5000 nulls, `r = 0`, second form.
    pub fn new(a: f64, alpha: f64, df: usize, mu: Vec<f64>, method: Method) -> Self {
        Self {
            a,
            alpha,
            n_nulls: Self::DEFAULT_NULLS,
            n_runs: Self::DEFAULT_RUNS,
            df,
            mu,
            r: 0.0,
            sigma_form: SigmaForm::Exchangeable,
            method,
            seed: 1,
        }
    }

    pub fn k(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0 && self.a < 1.0) {
            return Err(Error::Config(format!("a = {} not in [0, 1)", self.a)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha = {} not in (0, 1)", self.alpha)));
        }
        if self.df < 1 {
            return Err(Error::Config("df must be at least 1".to_string()));
        }
        if self.mu.is_empty() {
            return Err(Error::Config("mu must have at least one entry".to_string()));
        }
        if self.mu.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(Error::Config("every mu_k must be positive".to_string()));
        }
        if self.n_nulls == 0 || self.n_runs == 0 {
            return Err(Error::Config("n_nulls and n_runs must be positive".to_string()));
        }
        if self.sigma_form == SigmaForm::Bivariate && self.k() != 2 {
            return Err(Error::Config("the bivariate sigma form is defined for K = 2 only".to_string()));
        }
        self.covariance()?;
        Ok(())
    }

    pub fn covariance(&self) -> Result<Vec<f64>> {
        match self.sigma_form {
            SigmaForm::Bivariate if self.k() == 2 => sigma_bivariate(self.r),
            SigmaForm::Bivariate => Err(Error::Config("the bivariate sigma form needs K = 2".to_string())),
            SigmaForm::Exchangeable => sigma_exchangeable(self.r, self.k()),
        }
    }

    /// Noncentralities `sqrt(df + 1) mu_k`.
    pub fn deltas(&self) -> Vec<f64> {
        let scale = ((self.df + 1) as f64).sqrt();
        self.mu.iter().map(|m| scale * m).collect()
    }

    /// Marginal t alternatives of the coordinates.
    pub fn alts(&self) -> Result<Vec<AltSpec>> {
        self.deltas().into_iter().map(|d| AltSpec::t(self.df as f64, d)).collect()
    }

    /// `(alpha_*, min pFDR)` for independent coordinates.
    pub fn alpha_star(&self) -> Result<(f64, f64)> {
        alpha_star_for(self.a, &self.alts()?)
    }

    /// Per-coordinate `gamma_k` and the shared `eps = 2 / df`.
    pub fn gamma_eps(&self) -> Result<(Vec<f64>, f64)> {
        let alts = self.alts()?;
        Ok((alts.iter().map(AltSpec::gamma).collect(), 2.0 / self.df as f64))
    }

    /// Resolves the configured method into a region family.
    pub fn region(&self) -> Result<RegionFamily> {
        let k = self.k();
        let fit_len = |v: &Vec<f64>, what: &str| -> Result<()> {
            if v.len() != k {
                return Err(Error::Config(format!("{what} has {} entries, K = {k}", v.len())));
            }
            Ok(())
        };
        match &self.method {
            Method::Ellipsoid { nu, mode } => {
                let (gamma, eps) = self.gamma_eps()?;
                let nu = match nu {
                    Some(v) => {
                        fit_len(v, "nu")?;
                        v.clone()
                    }
                    None => optimal_params(&gamma, eps)?.0,
                };
                RegionFamily::ellipsoid(EllipsoidSpec::new(nu, eps)?, *mode)
            }
            Method::Rectangle { c } => {
                let c = match c {
                    Some(v) => {
                        fit_len(v, "c")?;
                        v.clone()
                    }
                    None => {
                        let (gamma, eps) = self.gamma_eps()?;
                        optimal_params(&gamma, eps)?.1
                    }
                };
                RegionFamily::rectangle(c)
            }
            Method::Min => RegionFamily::min(k),
            Method::Product => RegionFamily::product(k),
            Method::Stouffer { weights } => match weights {
                Some(w) => {
                    fit_len(w, "weights")?;
                    RegionFamily::stouffer(w.clone())
                }
                None => RegionFamily::stouffer(vec![1.0; k]),
            },
            Method::OracleLr { samples } => {
                let oracle = OracleLr::new(self.alts()?, *samples, self.seed.wrapping_add(ORACLE_SEED_OFFSET))?;
                Ok(RegionFamily::oracle_lr(Arc::new(oracle)))
            }
        }
    }
}

/// Data of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSample {
    pub truth: TruthVector,
    pub pvals: PValueMatrix,
    /// The t statistics behind `pvals`.
    pub stats: Matrix,
}

/// Draws the nulls of run `run_index`.
pub fn sample_run(cfg: &ExperimentConfig, run_index: u64) -> Result<RunSample> {
    cfg.validate()?;
    let chol = cholesky(&cfg.covariance()?, cfg.k())?;
    let t = StudentT::new(cfg.df as f64)?;
    Ok(draw_run(cfg, &chol, &t, run_index))
}

fn draw_run(cfg: &ExperimentConfig, chol: &[f64], t: &StudentT, run_index: u64) -> RunSample {
    let k = cfg.k();
    let m = cfg.df + 1;
    let root_m = (m as f64).sqrt();
    let mut theta = Vec::with_capacity(cfg.n_nulls);
    let mut stats = Vec::with_capacity(cfg.n_nulls * k);
    let mut pvals = Vec::with_capacity(cfg.n_nulls * k);
    let mut z = vec![0.0; k];
    let mut sum = vec![0.0; k];
    let mut sum_sq = vec![0.0; k];
    for i in 0..cfg.n_nulls {
        let mut rng = rng::substream(cfg.seed, run_index, i as u64);
        let is_false = rng.random::<f64>() < cfg.a;
        theta.push(is_false);
        sum.iter_mut().for_each(|v| *v = 0.0);
        sum_sq.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..m {
            z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            for c in 0..k {
                let x = if is_false { cfg.mu[c] + (0..=c).map(|p| chol[c * k + p] * z[p]).sum::<f64>() } else { z[c] };
                sum[c] += x;
                sum_sq[c] += x * x;
            }
        }
        for c in 0..k {
            let mean = sum[c] / m as f64;
            let var = ((sum_sq[c] - m as f64 * mean * mean) / (m - 1) as f64).max(0.0);
            let stat = root_m * mean / var.sqrt();
            stats.push(stat);
            pvals.push(t.sf(stat).clamp(P_FLOOR, 1.0 - f64::EPSILON / 2.0));
        }
    }
    RunSample {
        truth: TruthVector::new(theta),
        pvals: PValueMatrix::new(Matrix::new(pvals, cfg.n_nulls, k).expect("shape")).expect("p-values in range"),
        stats: Matrix::new(stats, cfg.n_nulls, k).expect("shape"),
    }
}

/// Counts from one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub rejections: usize,
    pub false_rejections: usize,
    pub true_discoveries: usize,
    pub n_false: usize,
}

impl RunRecord {
    fn from_result(res: &RejectionResult, truth: &TruthVector) -> Self {
        let (r, v) = truth.tally(&res.rejected);
        Self { rejections: r, false_rejections: v, true_discoveries: r - v, n_false: truth.n_false() }
    }

    pub fn fdp(&self) -> f64 {
        self.false_rejections as f64 / self.rejections.max(1) as f64
    }

    pub fn power(&self) -> f64 {
        self.true_discoveries as f64 / self.n_false.max(1) as f64
    }
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    /// Number of runs averaged.
    pub count: usize,
}

impl Estimate {
    pub fn from_values(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self { mean: f64::NAN, se: f64::NAN, count };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let se = if count > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, se, count }
    }
}

/// Aggregated results of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub fdr: Estimate,
    /// Mean FDP over runs with at least one rejection.
    pub pfdr: Estimate,
    pub power: Estimate,
    pub min_power: f64,
    pub mean_rejections: f64,
    pub runs: Vec<RunRecord>,
}

impl RunStats {
    pub fn from_runs(runs: Vec<RunRecord>) -> Self {
        let fdp: Vec<f64> = runs.iter().map(RunRecord::fdp).collect();
        let pos: Vec<f64> = runs.iter().filter(|r| r.rejections > 0).map(RunRecord::fdp).collect();
        let power: Vec<f64> = runs.iter().map(RunRecord::power).collect();
        let mean_rejections = runs.iter().map(|r| r.rejections as f64).sum::<f64>() / runs.len().max(1) as f64;
        Self {
            fdr: Estimate::from_values(&fdp),
            pfdr: Estimate::from_values(&pos),
            power: Estimate::from_values(&power),
            min_power: power.iter().copied().fold(f64::INFINITY, f64::min),
            mean_rejections,
            runs,
        }
    }
}

struct Prepared {
    chol: Vec<f64>,
    t: StudentT,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    Ok(Prepared { chol: cholesky(&cfg.covariance()?, cfg.k())?, t: StudentT::new(cfg.df as f64)? })
}

fn apply(region: &RegionFamily, sample: &RunSample, alpha: f64) -> Result<RejectionResult> {
    crate::procedures::nested_region_test(&sample.pvals, region, alpha)
}

/// Runs the configured procedure `n_runs` times and aggregates.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunStats> {
    let region = cfg.region()?;
    run_with_region(cfg, &region)
}

/// [`run_experiment`] with an explicitly supplied region family.
pub fn run_with_region(cfg: &ExperimentConfig, region: &RegionFamily) -> Result<RunStats> {
    let prep = prepare(cfg)?;
    if region.dim() != cfg.k() {
        return Err(Error::Dimension { expected: cfg.k(), found: region.dim() });
    }
    let runs = (0..cfg.n_runs as u64)
        .into_par_iter()
        .map(|run| {
            let sample = draw_run(cfg, &prep.chol, &prep.t, run);
            let res = apply(region, &sample, cfg.alpha)?;
            Ok(RunRecord::from_result(&res, &sample.truth))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunStats::from_runs(runs))
}

/// Matched-power results for one baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub baseline: Baseline,
    /// Mean FDP over all runs, 0 for runs where the reference found nothing.
    pub fdr: Estimate,
    /// Mean FDP over runs where the reference rejected a false null.
    pub pfdr: Estimate,
}

/// Reference statistics plus one row per baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reference: RunStats,
    pub rows: Vec<BaselineRow>,
}

fn baseline_order(b: Baseline, sample: &RunSample) -> Vec<f64> {
    match b {
        Baseline::ByProduct => combine_log_product(&sample.pvals),
        Baseline::BySum => {
            let w = vec![1.0; sample.stats.k()];
            combine_sum(&sample.stats, &w).expect("unit weights").into_iter().map(|v| -v).collect()
        }
        Baseline::ByMax => combine_max(&sample.stats).into_iter().map(|v| -v).collect(),
    }
}

/// Runs the reference procedure and matches each baseline's power to it.
pub fn run_comparison(cfg: &ExperimentConfig, baselines: &[Baseline]) -> Result<Comparison> {
    let region = cfg.region()?;
    let prep = prepare(cfg)?;
    let per_run = (0..cfg.n_runs as u64)
        .into_par_iter()
        .map(|run| {
            let sample = draw_run(cfg, &prep.chol, &prep.t, run);
            let res = apply(&region, &sample, cfg.alpha)?;
            let record = RunRecord::from_result(&res, &sample.truth);
            let matches = baselines
                .iter()
                .map(|b| matched_power_comparison(&res, &baseline_order(*b, &sample), &sample.truth))
                .collect::<Result<Vec<_>>>()?;
            Ok((record, matches))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = baselines
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let all: Vec<f64> = per_run.iter().map(|(_, m)| m[j].fdp).collect();
            let matched: Vec<f64> = per_run.iter().filter(|(_, m)| m[j].matched).map(|(_, m)| m[j].fdp).collect();
            BaselineRow { baseline: *b, fdr: Estimate::from_values(&all), pfdr: Estimate::from_values(&matched) }
        })
        .collect();
    let reference = RunStats::from_runs(per_run.into_iter().map(|(r, _)| r).collect());
    Ok(Comparison { reference, rows })
}

/// One point of the tuning scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub s: f64,
    pub log2_s: f64,
    pub ellipsoid: RunStats,
    pub rectangle: RunStats,
}

/// Scans `nu = (s^eps gamma_1, gamma_2 / s^eps)` and
/// `c = (s c_1, c_2 / s)` around the optimal parameters (`K = 2`).
pub fn tune_scan(cfg: &ExperimentConfig, s_grid: &[f64]) -> Result<Vec<TuneRow>> {
    if cfg.k() != 2 {
        return Err(Error::Config(format!("tuning scan needs K = 2, got K = {}", cfg.k())));
    }
    if let Some(bad) = s_grid.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::Config(format!("scan value s = {bad} must be positive")));
    }
    let (gamma, eps) = cfg.gamma_eps()?;
    let (_, c0) = optimal_params(&gamma, eps)?;
    s_grid
        .iter()
        .map(|&s| {
            let se = s.powf(eps);
            let nu = vec![se * gamma[0], gamma[1] / se];
            let c = vec![s * c0[0], c0[1] / s];
            let e_cfg = ExperimentConfig { method: Method::Ellipsoid { nu: Some(nu), mode: None }, ..cfg.clone() };
            let r_cfg = ExperimentConfig { method: Method::Rectangle { c: Some(c) }, ..cfg.clone() };
            Ok(TuneRow { s, log2_s: s.log2(), ellipsoid: run_experiment(&e_cfg)?, rectangle: run_experiment(&r_cfg)? })
        })
        .collect()
}

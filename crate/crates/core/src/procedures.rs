//! Benjamini-Hochberg on region scores, the likelihood-ratio oracle, direct
//! combination baselines and matched-power comparison.

use std::sync::Arc;

use rand::Rng;

use crate::error::{domain, Error, Result};
use crate::regions::RegionFamily;
use crate::rng;
use crate::special::{noncentral_f_ratio, noncentral_t_ratio, StudentT};
use crate::theory::{AltFamily, AltSpec};

/// Dense row-major `n x K` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(data: Vec<f64>, n: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(domain("Matrix", "K must be at least 1"));
        }
        if data.len() != n * k {
            return Err(Error::Dimension { expected: n * k, found: data.len() });
        }
        Ok(Self { n, k, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * k);
        for row in rows {
            if row.len() != k {
                return Err(Error::Dimension { expected: k, found: row.len() });
            }
            data.extend_from_slice(row);
        }
        Self::new(data, rows.len(), k)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.k)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Matrix of p-values, every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueMatrix(Matrix);

impl PValueMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if let Some(pos) = m.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(domain(
                "PValueMatrix",
                format!("entry ({}, {}) = {} outside [0, 1]", pos / m.k, pos % m.k, m.data[pos]),
            ));
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn k(&self) -> usize {
        self.0.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }
}

/// Which nulls are false (`true` = false null).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthVector {
    theta: Vec<bool>,
}

impl TruthVector {
    pub fn new(theta: Vec<bool>) -> Self {
        Self { theta }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn is_false_null(&self, i: usize) -> bool {
        self.theta[i]
    }

    pub fn n_false(&self) -> usize {
        self.theta.iter().filter(|t| **t).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.theta
    }

    /// `(R, V)`: rejections and rejected true nulls.
    pub fn tally(&self, rejected: &[usize]) -> (usize, usize) {
        let v = rejected.iter().filter(|i| !self.theta[**i]).count();
        (rejected.len(), v)
    }
}

/// Outcome of a BH-type procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionResult {
    /// Rejected indices, ascending.
    pub rejected: Vec<usize>,
    /// `s_(l)`, or 0 when nothing is rejected.
    pub cutoff: f64,
    pub l: usize,
    pub scores: Vec<f64>,
    /// Region parameter of the rejection region, when it comes from one.
    pub tau: Option<f64>,
}

/// BH step-up on `scores`: rejects every `i` with `s_i <= s_(l)`,
/// `l = max{k : s_(k) <= k alpha / n}`.
pub fn bh(scores: &[f64], alpha: f64) -> Result<RejectionResult> {
    check_alpha(alpha)?;
    if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(domain("bh", format!("score {bad} outside [0, 1]")));
    }
    let n = scores.len();
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let l = (1..=n).rev().find(|&k| sorted[k - 1] <= k as f64 * alpha / n as f64).unwrap_or(0);
    let cutoff = if l == 0 { 0.0 } else { sorted[l - 1] };
    let rejected = if l == 0 { Vec::new() } else { (0..n).filter(|&i| scores[i] <= cutoff).collect() };
    Ok(RejectionResult { rejected, cutoff, l, scores: scores.to_vec(), tau: None })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain("bh", format!("alpha = {alpha} not in (0, 1)")));
    }
    Ok(())
}

/// Scores every row with `region` and applies BH; `tau` is the cutoff.
pub fn nested_region_test(pvals: &PValueMatrix, region: &RegionFamily, alpha: f64) -> Result<RejectionResult> {
    if pvals.k() != region.dim() {
        return Err(Error::Dimension { expected: region.dim(), found: pvals.k() });
    }
    let scores = pvals.0.rows().map(|x| region.score(x)).collect::<Result<Vec<_>>>()?;
    let mut res = bh(&scores, alpha)?;
    res.tau = Some(res.cutoff);
    Ok(res)
}

/// Row-wise `max_k X_ik`; larger is more significant.
pub fn combine_max(stats: &Matrix) -> Vec<f64> {
    stats.rows().map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
}

/// Row-wise `sum_k c_k X_ik`; larger is more significant.
pub fn combine_sum(stats: &Matrix, c: &[f64]) -> Result<Vec<f64>> {
    if c.len() != stats.k() {
        return Err(Error::Dimension { expected: stats.k(), found: c.len() });
    }
    if c.iter().any(|v| !(*v > 0.0)) {
        return Err(domain("combine_sum", "weights must be positive"));
    }
    Ok(stats.rows().map(|r| r.iter().zip(c).map(|(x, w)| x * w).sum()).collect())
}

/// Row-wise `prod_k xi_ik`; smaller is more significant.
pub fn combine_product_pvals(pvals: &PValueMatrix) -> Vec<f64> {
    pvals.0.rows().map(|r| r.iter().product()).collect()
}

/// Row-wise `sum_k ln xi_ik`, the underflow-free ordering key of
/// [`combine_product_pvals`]; zero p-values are nudged to `1e-300`.
pub fn combine_log_product(pvals: &PValueMatrix) -> Vec<f64> {
    pvals.0.rows().map(|r| r.iter().map(|v| v.max(1e-300).ln()).sum()).collect()
}

/// Result of matching a competitor ordering to a reference's discoveries.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    /// False-discovery proportion of the matched rejection set (0 if unmatched).
    pub fdp: f64,
    /// `false` when the reference rejected no false null.
    pub matched: bool,
    /// False nulls rejected by the reference.
    pub d: usize,
    pub rejected: Vec<usize>,
}

/// Walks `competitor_order` from its smallest value (most significant)
/// until it has rejected as many false nulls as `reference` did.
pub fn matched_power_comparison(
    reference: &RejectionResult,
    competitor_order: &[f64],
    truth: &TruthVector,
) -> Result<MatchOutcome> {
    let n = truth.len();
    if competitor_order.len() != n {
        return Err(Error::Dimension { expected: n, found: competitor_order.len() });
    }
    let d = reference.rejected.iter().filter(|i| truth.is_false_null(**i)).count();
    if d == 0 {
        return Ok(MatchOutcome { fdp: 0.0, matched: false, d, rejected: Vec::new() });
    }
    let available = truth.n_false();
    if available < d {
        return Err(Error::ImpossibleMatch { needed: d, available });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| competitor_order[*a].total_cmp(&competitor_order[*b]));
    let mut rejected = Vec::new();
    let mut found = 0;
    for i in order {
        rejected.push(i);
        if truth.is_false_null(i) {
            found += 1;
            if found == d {
                break;
            }
        }
    }
    let v = rejected.len() - d;
    Ok(MatchOutcome { fdp: v as f64 / rejected.len() as f64, matched: true, d, rejected })
}

/// Nodes per unit of the table abscissa for the per-coordinate `ln g_k`.
const LR_TABLE_STEP: f64 = 0.05;

/// `ln g_k` tabulated against `ln(u / (1 - u))`, ascending in the abscissa.
#[derive(Debug, Clone)]
struct LnRatioTable {
    logit: Vec<f64>,
    ln_g: Vec<f64>,
}

impl LnRatioTable {
    fn build(alt: &AltSpec) -> Result<Self> {
        let mut nodes = match alt.family() {
            AltFamily::T { df, delta } => {
                let t = StudentT::new(df)?;
                let ctl = crate::special::SeriesControl::default();
                // x = sinh(s): dense near 0, geometric in the tails
                let s_max = statistic_limit(|x| t.sf(x)).asinh();
                let steps = (2.0 * s_max / LR_TABLE_STEP).ceil() as usize;
                let mut out = Vec::with_capacity(steps + 1);
                for i in 0..=steps {
                    let x = (-s_max + i as f64 * LR_TABLE_STEP).min(s_max).sinh();
                    let ratio = noncentral_t_ratio(x, df, delta, &ctl)?;
                    out.push((upper_logit(t.sf(x), t.sf(-x)), ratio));
                }
                out
            }
            AltFamily::F { p, q, delta } => {
                let ctl = crate::special::SeriesControl::default();
                let sf = |x: f64| crate::special::f_sf(x, p, q).unwrap_or(0.0);
                let lo = -60.0;
                let hi = statistic_limit(sf).ln().min(690.0);
                let steps = ((hi - lo) / LR_TABLE_STEP).ceil() as usize;
                let mut out = Vec::with_capacity(steps + 1);
                for i in 0..=steps {
                    let x = (lo + i as f64 * LR_TABLE_STEP).min(hi).exp();
                    let upper = sf(x);
                    let ratio = noncentral_f_ratio(x, p, q, delta, &ctl)?;
                    out.push((upper_logit(upper, 1.0 - upper), ratio));
                }
                out
            }
        };
        nodes.retain(|(l, g)| l.is_finite() && *g > 0.0 && g.is_finite());
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
        nodes.dedup_by(|a, b| a.0 == b.0);
        if nodes.len() < 2 {
            return Err(Error::Degenerate("density ratio table is empty".to_string()));
        }
        Ok(Self { logit: nodes.iter().map(|n| n.0).collect(), ln_g: nodes.iter().map(|n| n.1.ln()).collect() })
    }

    fn eval(&self, u: f64) -> f64 {
        let z = upper_logit(u, 1.0 - u);
        interpolate(&self.logit, &self.ln_g, z)
    }
}

/// Statistic beyond which the upper tail is below `1e-300`.
fn statistic_limit<S: Fn(f64) -> f64>(sf: S) -> f64 {
    let mut x = 1.0_f64;
    while sf(x) > 1e-300 && x < 1e300 {
        x *= 4.0;
    }
    x
}

/// `ln(u / lower)`, where `lower = 1 - u` computed without cancellation.
fn upper_logit(u: f64, lower: f64) -> f64 {
    u.ln() - lower.ln()
}

/// Linear interpolation in an ascending table, clamped at the ends.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x.is_nan() || x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let j = xs.partition_point(|v| *v <= x);
    let (x0, x1) = (xs[j - 1], xs[j]);
    let w = (x - x0) / (x1 - x0);
    ys[j - 1] + w * (ys[j] - ys[j - 1])
}

/// Likelihood-ratio region family: `p(x) = l{y : g(y) >= g(x)}` for the
/// product density `g = prod g_k` of independent coordinates.
#[derive(Debug, Clone)]
pub struct OracleLr {
    alts: Vec<AltSpec>,
    tables: Vec<LnRatioTable>,
    /// Sorted `ln g` of uniform sample points.
    sample_ln_g: Vec<f64>,
}

impl OracleLr {
    /// Builds the per-coordinate tables and the Monte Carlo volume table.
    pub fn new(alts: Vec<AltSpec>, samples: usize, seed: u64) -> Result<Self> {
        if alts.is_empty() {
            return Err(domain("OracleLr", "need at least one coordinate"));
        }
        if samples < 2 {
            return Err(domain("OracleLr", "need at least two Monte Carlo samples"));
        }
        if alts.iter().all(AltSpec::is_null) {
            return Err(Error::Degenerate(
                "all noncentralities are zero, the likelihood ratio is constant".to_string(),
            ));
        }
        let tables = alts.iter().map(LnRatioTable::build).collect::<Result<Vec<_>>>()?;
        let mut oracle = Self { alts, tables, sample_ln_g: Vec::new() };
        let mut rng = rng::stream(seed, 0);
        let k = oracle.alts.len();
        let mut point = vec![0.0; k];
        let mut sample = Vec::with_capacity(samples);
        for _ in 0..samples {
            point.iter_mut().for_each(|v| *v = rng.random::<f64>());
            sample.push(oracle.ln_g(&point));
        }
        sample.sort_by(f64::total_cmp);
        oracle.sample_ln_g = sample;
        Ok(oracle)
    }

    pub fn dim(&self) -> usize {
        self.alts.len()
    }

    pub fn alts(&self) -> &[AltSpec] {
        &self.alts
    }

    /// `ln g(x)` from the interpolation tables.
    pub fn ln_g(&self, x: &[f64]) -> f64 {
        self.tables.iter().zip(x).map(|(t, u)| t.eval(*u)).sum()
    }

    /// `h(g(x))`, the volume of points at least as likely as `x`.
    pub fn p_value(&self, x: &[f64]) -> f64 {
        let v = self.ln_g(x);
        let s = &self.sample_ln_g;
        let last = s.len() - 1;
        if v <= s[0] {
            return 1.0;
        }
        if v >= s[last] {
            return 0.0;
        }
        // H(s_j) = (last - j) / last, linear in between
        let j = s.partition_point(|w| *w <= v);
        let (lo, hi) = (s[j - 1], s[j]);
        let frac = if hi > lo { (v - lo) / (hi - lo) } else { 1.0 };
        ((last - (j - 1)) as f64 - frac) / last as f64
    }
}

/// BH on oracle likelihood-ratio p-values.
pub fn oracle_lr_test(
    pvals: &PValueMatrix,
    alts: &[AltSpec],
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<RejectionResult> {
    let oracle = OracleLr::new(alts.to_vec(), samples, seed)?;
    nested_region_test(pvals, &RegionFamily::oracle_lr(Arc::new(oracle)), alpha)
}

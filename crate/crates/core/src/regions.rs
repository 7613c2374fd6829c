//! Nested rejection regions on the unit cube.
//!
//! A family `{D_t}` is carried by its score `J(x) = inf{t : x in D_t}`,
//! normalised so that a uniform point has a uniform score. Ellipsoidal
//! families `{x : sum nu_k x_k^eps <= u}` need the volume `h(u; nu)` to be
//! regularised; it can be evaluated exactly for `K = 2`, by the Irwin-Hall
//! recursion for `eps = 1` with equal weights, by the small-`u` power law, or
//! by Monte Carlo.

use std::sync::Arc;

use rand::Rng;

use crate::error::{domain, Error, Result};
use crate::procedures::OracleLr;
use crate::rng;
use crate::special::{beta_cdf, gamma_sf, ln_gamma, normal_cdf_upper, normal_quantile_upper};

/// Largest dimension for which Irwin-Hall coefficients are tabulated.
pub const IRWIN_HALL_MAX_K: usize = 20;

/// Tolerance on `prod c_k = 1` for rectangle regions.
const RECT_PRODUCT_TOL: f64 = 1e-12;

/// Weights and exponent of `Gamma_u(nu) = {x : sum nu_k x_k^eps <= u}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidSpec {
    nu: Vec<f64>,
    eps: f64,
}

impl EllipsoidSpec {
    pub fn new(nu: Vec<f64>, eps: f64) -> Result<Self> {
        if nu.is_empty() {
            return Err(domain("EllipsoidSpec", "nu must have at least one entry"));
        }
        if let Some(bad) = nu.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(domain("EllipsoidSpec", format!("nu entry {bad} must be positive")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(domain("EllipsoidSpec", format!("eps = {eps} must be positive")));
        }
        Ok(Self { nu, eps })
    }

    pub fn k(&self) -> usize {
        self.nu.len()
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Geometric mean of `nu`.
    pub fn nu_bar(&self) -> f64 {
        (self.nu.iter().map(|v| v.ln()).sum::<f64>() / self.k() as f64).exp()
    }

    /// `u = sum nu_k x_k^eps`.
    pub fn level(&self, x: &[f64]) -> f64 {
        self.nu.iter().zip(x).map(|(n, xi)| n * xi.powf(self.eps)).sum()
    }

    fn all_nu_equal(&self) -> bool {
        let first = self.nu[0];
        self.nu.iter().all(|v| (v - first).abs() <= 1e-12 * first)
    }
}

/// How `h(u; nu)` is evaluated for an ellipsoidal family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VolumeMode {
    /// Closed form, `K = 2` only.
    Exact2D,
    /// Piecewise-polynomial recursion, `eps = 1` and equal `nu` only.
    IrwinHall,
    /// `min(1, V_eps (u / nu_bar)^{K/eps})`; exact for `u <= min nu_k`.
    PowerLaw,
    /// Empirical volume from a fixed uniform sample.
    MonteCarlo { samples: usize, seed: u64 },
}

impl VolumeMode {
    /// Default mode: exact where available, otherwise the power law.
    pub fn auto(spec: &EllipsoidSpec) -> Self {
        if spec.k() == 2 {
            VolumeMode::Exact2D
        } else if spec.eps == 1.0 && spec.all_nu_equal() {
            VolumeMode::IrwinHall
        } else {
            VolumeMode::PowerLaw
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            VolumeMode::Exact2D => "exact2d",
            VolumeMode::IrwinHall => "irwinhall",
            VolumeMode::PowerLaw => "powerlaw",
            VolumeMode::MonteCarlo { .. } => "montecarlo",
        }
    }

    fn check(&self, spec: &EllipsoidSpec) -> Result<()> {
        match self {
            VolumeMode::Exact2D if spec.k() != 2 => {
                Err(Error::IncompatibleMode(format!("exact2d needs K = 2, got K = {}", spec.k())))
            }
            VolumeMode::IrwinHall if spec.eps != 1.0 || !spec.all_nu_equal() => {
                Err(Error::IncompatibleMode("irwinhall needs eps = 1 and equal nu".to_string()))
            }
            VolumeMode::IrwinHall if spec.k() > IRWIN_HALL_MAX_K => {
                Err(Error::IncompatibleMode(format!("irwinhall supports K <= {IRWIN_HALL_MAX_K}")))
            }
            VolumeMode::MonteCarlo { samples: 0, .. } => {
                Err(Error::IncompatibleMode("montecarlo needs samples >= 1".to_string()))
            }
            _ => Ok(()),
        }
    }
}

/// `V_{eps,K}`: volume of `{z >= 0 : sum z_k^eps <= 1}` in `R^K`.
pub fn v_eps(eps: f64, k: usize) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) || k == 0 {
        return Err(domain("v_eps", format!("need eps > 0 and K >= 1, got ({eps}, {k})")));
    }
    let kf = k as f64;
    let inv = 1.0 / eps;
    let ln_v = (kf - 1.0) * inv.ln() + kf * ln_gamma(inv)? - kf.ln() - ln_gamma(kf * inv)?;
    Ok(ln_v.exp())
}

/// Exact `h(u; nu)` for `K = 2`.
pub fn h_exact_2d(u: f64, nu: [f64; 2], eps: f64) -> Result<f64> {
    if !(nu[0] > 0.0 && nu[1] > 0.0) || !(eps > 0.0) {
        return Err(domain("h_exact_2d", "nu and eps must be positive"));
    }
    if !(u >= 0.0) {
        return Err(domain("h_exact_2d", format!("u = {u} must be nonnegative")));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    let (lo, hi) = if nu[0] <= nu[1] { (nu[0], nu[1]) } else { (nu[1], nu[0]) };
    if u >= lo + hi {
        return Ok(1.0);
    }
    let inv = 1.0 / eps;
    let corner = ((u - hi) / lo).max(0.0).powf(inv);
    let ln_const = 2.0 * ln_gamma(inv)? - LN_2_F - eps.ln() - ln_gamma(2.0 * inv)?;
    let ln_scale = 2.0 * inv * (u.ln() - 0.5 * (lo.ln() + hi.ln()));
    let upper = beta_cdf((lo / u).min(1.0), inv, 1.0 + inv)?;
    let lower = beta_cdf((1.0 - hi / u).max(0.0), inv, 1.0 + inv)?;
    let band = (ln_const + ln_scale).exp() * (upper - lower);
    Ok((corner + band).clamp(0.0, 1.0))
}

const LN_2_F: f64 = std::f64::consts::LN_2;

/// Coefficients `A_K(i, k)` of the Irwin-Hall CDF
/// `h_K(i + t) = sum_k A_K(i, k) t^k`, `t in [0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IrwinHall {
    k: usize,
    /// `rows[i][k] = A_K(i, k)` for `i = 0..=K`, `k = 0..=K`.
    rows: Vec<Vec<f64>>,
}

impl IrwinHall {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 || k > IRWIN_HALL_MAX_K {
            return Err(domain("irwin_hall", format!("K = {k} not in 1..={IRWIN_HALL_MAX_K}")));
        }
        // K = 1: h_1(t) = t on [0, 1), then 1.
        let mut rows = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        for kk in 2..=k {
            let prev = &rows;
            let mut next = vec![vec![0.0; kk + 1]; kk + 1];
            next[0][kk] = prev[0][kk - 1] / kk as f64;
            for i in 1..kk {
                next[i][0] = (0..kk).map(|j| prev[i - 1][j] / (j + 1) as f64).sum();
                for (j, slot) in next[i].iter_mut().enumerate().skip(1) {
                    let here = prev[i].get(j - 1).copied().unwrap_or(0.0);
                    let before = prev[i - 1].get(j - 1).copied().unwrap_or(0.0);
                    *slot = (here - before) / j as f64;
                }
            }
            next[kk][0] = 1.0;
            rows = next;
        }
        Ok(Self { k, rows })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `A_K(i, k)`.
    pub fn coefficient(&self, i: usize, k: usize) -> f64 {
        self.rows[i][k]
    }

    /// CDF of a sum of `K` independent uniforms; clamps outside `[0, K]`.
    pub fn cdf(&self, u: f64) -> f64 {
        if !(u > 0.0) {
            return 0.0;
        }
        if u >= self.k as f64 {
            return 1.0;
        }
        let i = u.floor() as usize;
        let t = u - i as f64;
        // Horner
        let value = self.rows[i].iter().rev().fold(0.0, |acc, a| acc * t + a);
        value.clamp(0.0, 1.0)
    }
}

/// `h_K(u)`, the Irwin-Hall CDF, for `u in [0, K]`.
pub fn irwin_hall_cdf(u: f64, k: usize) -> Result<f64> {
    if !(0.0..=k as f64).contains(&u) {
        return Err(domain("irwin_hall_cdf", format!("u = {u} outside [0, {k}]")));
    }
    Ok(IrwinHall::new(k)?.cdf(u))
}

/// Power-law volume `min(1, V_eps (u / nu_bar)^{K/eps})`.
pub fn h_approx(u: f64, spec: &EllipsoidSpec) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(domain("h_approx", format!("u = {u} must be nonnegative")));
    }
    let ln_v = v_eps(spec.eps, spec.k())?.ln();
    Ok(power_law(u, ln_v, spec.nu_bar().ln(), spec.k() as f64 / spec.eps))
}

fn power_law(u: f64, ln_v: f64, ln_nu_bar: f64, exponent: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    (ln_v + exponent * (u.ln() - ln_nu_bar)).exp().min(1.0)
}

fn draw_level<R: Rng>(spec: &EllipsoidSpec, rng: &mut R) -> f64 {
    spec.nu.iter().map(|n| n * rng.random::<f64>().powf(spec.eps)).sum()
}

/// Monte Carlo estimate of `h(u; nu)` with its binomial standard error.
pub fn h_mc(u: f64, spec: &EllipsoidSpec, samples: usize, seed: u64) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(domain("h_mc", "samples must be at least 1"));
    }
    if u >= spec.nu.iter().sum::<f64>() {
        return Ok((1.0, 0.0));
    }
    let mut rng = rng::stream(seed, 0);
    let hits = (0..samples).filter(|_| draw_level(spec, &mut rng) <= u).count();
    let p = hits as f64 / samples as f64;
    Ok((p, (p * (1.0 - p) / samples as f64).sqrt()))
}

#[derive(Debug, Clone)]
enum VolumeEval {
    Exact2D,
    IrwinHall(Arc<IrwinHall>),
    PowerLaw { ln_v: f64, ln_nu_bar: f64 },
    MonteCarlo(Arc<Vec<f64>>),
}

/// An ellipsoidal family with its volume evaluator prepared.
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    spec: EllipsoidSpec,
    mode: VolumeMode,
    eval: VolumeEval,
}

impl Ellipsoid {
    /// `mode = None` picks [`VolumeMode::auto`].
    pub fn new(spec: EllipsoidSpec, mode: Option<VolumeMode>) -> Result<Self> {
        let mode = mode.unwrap_or_else(|| VolumeMode::auto(&spec));
        mode.check(&spec)?;
        let eval = match mode {
            VolumeMode::Exact2D => VolumeEval::Exact2D,
            VolumeMode::IrwinHall => VolumeEval::IrwinHall(Arc::new(IrwinHall::new(spec.k())?)),
            VolumeMode::PowerLaw => {
                VolumeEval::PowerLaw { ln_v: v_eps(spec.eps, spec.k())?.ln(), ln_nu_bar: spec.nu_bar().ln() }
            }
            VolumeMode::MonteCarlo { samples, seed } => {
                let mut rng = rng::stream(seed, 0);
                let mut levels: Vec<f64> = (0..samples).map(|_| draw_level(&spec, &mut rng)).collect();
                levels.sort_by(f64::total_cmp);
                VolumeEval::MonteCarlo(Arc::new(levels))
            }
        };
        Ok(Self { spec, mode, eval })
    }

    pub fn spec(&self) -> &EllipsoidSpec {
        &self.spec
    }

    pub fn mode(&self) -> VolumeMode {
        self.mode
    }

    /// `h(u; nu)` under the configured mode.
    pub fn volume(&self, u: f64) -> f64 {
        if !(u > 0.0) {
            return 0.0;
        }
        match &self.eval {
            VolumeEval::Exact2D => h_exact_2d(u, [self.spec.nu[0], self.spec.nu[1]], self.spec.eps).unwrap_or(1.0),
            VolumeEval::IrwinHall(table) => table.cdf(u / self.spec.nu[0]),
            VolumeEval::PowerLaw { ln_v, ln_nu_bar } => {
                power_law(u, *ln_v, *ln_nu_bar, self.spec.k() as f64 / self.spec.eps)
            }
            VolumeEval::MonteCarlo(levels) => levels.partition_point(|v| *v <= u) as f64 / levels.len() as f64,
        }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.volume(self.spec.level(x))
    }
}

/// Tag identifying the kind of a [`RegionFamily`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    Min,
    Product,
    Stouffer,
    Rectangle,
    Ellipsoid,
    OracleLr,
}

#[derive(Debug, Clone)]
enum Family {
    Min { k: usize },
    Product { k: usize },
    Stouffer { weights: Vec<f64>, norm: f64 },
    Rectangle { c: Vec<f64> },
    Ellipsoid(Ellipsoid),
    OracleLr(Arc<OracleLr>),
}

/// A regularised nested region family, represented by its score function.
#[derive(Debug, Clone)]
pub struct RegionFamily {
    family: Family,
}

impl RegionFamily {
    /// `J(x) = 1 - (1 - min x_k)^K`.
    pub fn min(k: usize) -> Result<Self> {
        check_k(k)?;
        Ok(Self { family: Family::Min { k } })
    }

    /// `J(x) = 1 - F_K(-sum ln x_k)` with `F_K` the Gamma(K) CDF.
    pub fn product(k: usize) -> Result<Self> {
        check_k(k)?;
        Ok(Self { family: Family::Product { k } })
    }

    /// `J(x) = Phi_bar(sum w_k Phi_bar^{-1}(x_k) / |w|)`.
    pub fn stouffer(weights: Vec<f64>) -> Result<Self> {
        check_k(weights.len())?;
        if let Some(bad) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(domain("stouffer", format!("weight {bad} must be positive")));
        }
        let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        Ok(Self { family: Family::Stouffer { weights, norm } })
    }

    /// `J(x) = min(1, (max_k x_k / c_k)^K)` with `prod c_k = 1`.
    pub fn rectangle(c: Vec<f64>) -> Result<Self> {
        check_k(c.len())?;
        if let Some(bad) = c.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(domain("rectangle", format!("c entry {bad} must be positive")));
        }
        let ln_prod: f64 = c.iter().map(|v| v.ln()).sum();
        if (ln_prod.exp() - 1.0).abs() > RECT_PRODUCT_TOL {
            return Err(Error::Config(format!("rectangle c must have product 1, got {}", ln_prod.exp())));
        }
        Ok(Self { family: Family::Rectangle { c } })
    }

    pub fn ellipsoid(spec: EllipsoidSpec, mode: Option<VolumeMode>) -> Result<Self> {
        Ok(Self { family: Family::Ellipsoid(Ellipsoid::new(spec, mode)?) })
    }

    pub fn oracle_lr(oracle: Arc<OracleLr>) -> Self {
        Self { family: Family::OracleLr(oracle) }
    }

    pub fn kind(&self) -> RegionKind {
        match &self.family {
            Family::Min { .. } => RegionKind::Min,
            Family::Product { .. } => RegionKind::Product,
            Family::Stouffer { .. } => RegionKind::Stouffer,
            Family::Rectangle { .. } => RegionKind::Rectangle,
            Family::Ellipsoid(_) => RegionKind::Ellipsoid,
            Family::OracleLr(_) => RegionKind::OracleLr,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.family {
            Family::Min { k } | Family::Product { k } => *k,
            Family::Stouffer { weights, .. } => weights.len(),
            Family::Rectangle { c } => c.len(),
            Family::Ellipsoid(e) => e.spec.k(),
            Family::OracleLr(o) => o.dim(),
        }
    }

    pub fn as_ellipsoid(&self) -> Option<&Ellipsoid> {
        match &self.family {
            Family::Ellipsoid(e) => Some(e),
            _ => None,
        }
    }

    /// The score `J(x)` of a point in the unit cube.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), found: x.len() });
        }
        if let Some(bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(domain("score", format!("coordinate {bad} outside [0, 1]")));
        }
        Ok(match &self.family {
            Family::Min { k } => score_min(x, *k),
            Family::Product { k } => score_product(x, *k),
            Family::Stouffer { weights, norm } => stouffer_with_norm(x, weights, *norm)?,
            Family::Rectangle { c } => rectangle_unchecked(x, c),
            Family::Ellipsoid(e) => e.score(x),
            Family::OracleLr(o) => o.p_value(x),
        })
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(domain("region", "dimension K must be at least 1"));
    }
    Ok(())
}

/// `1 - (1 - min_k x_k)^K`.
pub fn score_min(x: &[f64], k: usize) -> f64 {
    let m = x.iter().copied().fold(f64::INFINITY, f64::min);
    if m >= 1.0 {
        return 1.0;
    }
    -(k as f64 * (-m).ln_1p()).exp_m1()
}

/// `1 - F_K(-sum ln x_k)`; zero when any coordinate is zero.
pub fn score_product(x: &[f64], k: usize) -> f64 {
    if x.iter().any(|v| *v <= 0.0) {
        return 0.0;
    }
    let s: f64 = -x.iter().map(|v| v.ln()).sum::<f64>();
    gamma_sf(k as f64, s.max(0.0)).unwrap_or(0.0)
}

/// Weighted Stouffer score; coordinates must lie strictly inside `(0, 1)`.
pub fn score_stouffer(x: &[f64], w: &[f64]) -> Result<f64> {
    if x.len() != w.len() {
        return Err(Error::Dimension { expected: w.len(), found: x.len() });
    }
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    stouffer_with_norm(x, w, norm)
}

fn stouffer_with_norm(x: &[f64], w: &[f64], norm: f64) -> Result<f64> {
    let mut q = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        if !(*xi > 0.0 && *xi < 1.0) {
            return Err(domain("score_stouffer", format!("coordinate {xi} must be inside (0, 1)")));
        }
        q += wi * normal_quantile_upper(*xi)?;
    }
    Ok(normal_cdf_upper(q / norm))
}

/// `min(1, (max_k x_k / c_k)^K)`; `c` must multiply to one.
pub fn score_rectangle(x: &[f64], c: &[f64]) -> Result<f64> {
    if x.len() != c.len() {
        return Err(Error::Dimension { expected: c.len(), found: x.len() });
    }
    let prod: f64 = c.iter().product();
    if (prod - 1.0).abs() > RECT_PRODUCT_TOL {
        return Err(Error::Config(format!("rectangle c must have product 1, got {prod}")));
    }
    Ok(rectangle_unchecked(x, c))
}

fn rectangle_unchecked(x: &[f64], c: &[f64]) -> f64 {
    let m = x.iter().zip(c).map(|(xi, ci)| xi / ci).fold(0.0, f64::max);
    m.powi(c.len() as i32).min(1.0)
}

/// Ellipsoid score `h(sum nu_k x_k^eps; nu)` under `mode`.
pub fn score_ellipsoid(x: &[f64], spec: &EllipsoidSpec, mode: VolumeMode) -> Result<f64> {
    if x.len() != spec.k() {
        return Err(Error::Dimension { expected: spec.k(), found: x.len() });
    }
    Ok(Ellipsoid::new(spec.clone(), Some(mode))?.score(x))
}

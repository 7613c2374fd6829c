//! Tail parameters of t and F alternatives, the pFDR floor and power
//! asymptotics near it.
//!
//! For a p-value density `g = prod g_k` with `g_k(u) = r_k (1 - gamma_k u^eps + ...)`
//! near zero, `alpha_* = 1 / (1 - a + a g(0))` is the smallest usable FDR
//! level and `(1 - a) alpha_*` the smallest attainable pFDR.

use std::f64::consts::PI;

use statrs::function::{beta::ln_beta, gamma::ln_gamma};

use crate::error::{domain, Error, Result};
use crate::regions::v_eps;
use crate::special::{
    f_quantile_upper, f_series, noncentral_f_ratio, noncentral_t_ratio, t_series, SeriesControl, StudentT,
};

/// Shared-exponent tolerance when combining coordinates.
const EPS_MATCH_TOL: f64 = 1e-12;

/// Law of a test statistic under a false null.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AltFamily {
    /// Noncentral t with `df` degrees of freedom.
    T { df: f64, delta: f64 },
    /// Noncentral F with `(p, q)` degrees of freedom.
    F { p: f64, q: f64, delta: f64 },
}

/// An alternative together with its local expansion `(eps, gamma, r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AltSpec {
    family: AltFamily,
    eps: f64,
    gamma: f64,
    r: f64,
    ctl: SeriesControl,
}

impl AltSpec {
    pub fn t(df: f64, delta: f64) -> Result<Self> {
        Self::with_control(AltFamily::T { df, delta }, SeriesControl::default())
    }

    pub fn f(p: f64, q: f64, delta: f64) -> Result<Self> {
        Self::with_control(AltFamily::F { p, q, delta }, SeriesControl::default())
    }

    pub fn with_control(family: AltFamily, ctl: SeriesControl) -> Result<Self> {
        let (eps, gamma, r) = match family {
            AltFamily::T { df, delta } => t_eps_gamma(df, delta, &ctl)?,
            AltFamily::F { p, q, delta } => f_eps_gamma(p, q, delta, &ctl)?,
        };
        Ok(Self { family, eps, gamma, r, ctl })
    }

    pub fn family(&self) -> AltFamily {
        self.family
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `g_k(0)`, the supremum of the density ratio.
    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn is_null(&self) -> bool {
        match self.family {
            AltFamily::T { delta, .. } | AltFamily::F { delta, .. } => delta == 0.0,
        }
    }

    /// Density `g_k(u)` of the upper-tail p-value under this alternative.
    pub fn density_ratio(&self, u: f64) -> Result<f64> {
        match self.family {
            AltFamily::T { df, delta } => t_ratio(u, df, delta, &self.ctl),
            AltFamily::F { p, q, delta } => f_ratio(u, p, q, delta, &self.ctl),
        }
    }
}

fn check_delta(func: &'static str, delta: f64) -> Result<()> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(domain(func, format!("delta = {delta} must be nonnegative")));
    }
    Ok(())
}

fn check_positive(func: &'static str, name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(domain(func, format!("{name} = {v} must be positive")));
    }
    Ok(())
}

/// `(eps, gamma, r)` for a noncentral t alternative with `p` degrees of freedom.
pub fn t_eps_gamma(p: f64, delta: f64, ctl: &SeriesControl) -> Result<(f64, f64, f64)> {
    check_positive("t_eps_gamma", "p", p)?;
    check_delta("t_eps_gamma", delta)?;
    let s = t_series("t_eps_gamma", p, delta, 1.0, -0.5 * delta * delta, ctl)?;
    let eps = 2.0 / p;
    let ln_scale = (p.ln() + 0.5 * PI.ln() + ln_gamma(p / 2.0) - ln_gamma((p + 1.0) / 2.0)) * eps;
    let gamma = 0.5 * ln_scale.exp() * s.weighted / s.sum;
    Ok((eps, gamma, s.sum))
}

/// `(eps, gamma, r)` for a noncentral F alternative with `(p, q)` degrees of freedom.
pub fn f_eps_gamma(p: f64, q: f64, delta: f64, ctl: &SeriesControl) -> Result<(f64, f64, f64)> {
    check_positive("f_eps_gamma", "p", p)?;
    check_positive("f_eps_gamma", "q", q)?;
    check_delta("f_eps_gamma", delta)?;
    let s = f_series("f_eps_gamma", p, q, delta, 0.0, ln_beta(p / 2.0, q / 2.0) - delta / 2.0, ctl)?;
    let eps = 2.0 / q;
    // central tail: sf(x) ~ c x^{-q/2} with c = rho^{-q/2} / ((q/2) B(p/2, q/2))
    let gamma = (eps * ((q / 2.0).ln() + ln_beta(p / 2.0, q / 2.0))).exp() * s.weighted / s.sum;
    Ok((eps, gamma, s.sum))
}

fn check_unit(func: &'static str, u: f64) -> Result<()> {
    if !(u > 0.0 && u < 1.0) {
        return Err(domain(func, format!("u = {u} not in (0, 1)")));
    }
    Ok(())
}

fn t_ratio(u: f64, p: f64, delta: f64, ctl: &SeriesControl) -> Result<f64> {
    check_unit("g_density_ratio_t", u)?;
    let x = StudentT::new(p)?.quantile_upper(u)?;
    noncentral_t_ratio(x, p, delta, ctl)
}

fn f_ratio(u: f64, p: f64, q: f64, delta: f64, ctl: &SeriesControl) -> Result<f64> {
    check_unit("g_density_ratio_f", u)?;
    let x = f_quantile_upper(u, p, q)?;
    noncentral_f_ratio(x, p, q, delta, ctl)
}

/// `g(u) = f_delta(psi(u)) / f_0(psi(u))` for a t alternative, `psi` the
/// upper quantile of the central t law.
pub fn g_density_ratio_t(u: f64, p: f64, delta: f64) -> Result<f64> {
    check_positive("g_density_ratio_t", "p", p)?;
    check_delta("g_density_ratio_t", delta)?;
    t_ratio(u, p, delta, &SeriesControl::default())
}

/// F counterpart of [`g_density_ratio_t`].
pub fn g_density_ratio_f(u: f64, p: f64, q: f64, delta: f64) -> Result<f64> {
    check_positive("g_density_ratio_f", "p", p)?;
    check_positive("g_density_ratio_f", "q", q)?;
    check_delta("g_density_ratio_f", delta)?;
    f_ratio(u, p, q, delta, &SeriesControl::default())
}

/// `(alpha_*, min pFDR)` for false-null proportion `a` and `g(0) = g0`.
pub fn alpha_star(a: f64, g0: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && a < 1.0) {
        return Err(domain("alpha_star", format!("a = {a} not in (0, 1)")));
    }
    if !(g0 >= 1.0) || !g0.is_finite() {
        return Err(domain("alpha_star", format!("g0 = {g0} must be finite and >= 1")));
    }
    let star = 1.0 / (1.0 - a + a * g0);
    Ok((star, (1.0 - a) * star))
}

/// [`alpha_star`] with `g0 = prod r_k` taken from per-coordinate alternatives.
pub fn alpha_star_for(a: f64, alts: &[AltSpec]) -> Result<(f64, f64)> {
    alpha_star(a, alts.iter().map(AltSpec::r).product())
}

/// Smallest attainable pFDR for a single t statistic.
pub fn min_pfdr_univariate_t(a: f64, p: f64, delta: f64) -> Result<f64> {
    let (_, _, r) = t_eps_gamma(p, delta, &SeriesControl::default())?;
    Ok(alpha_star(a, r)?.1)
}

/// Inputs to the power asymptotics.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerParams {
    pub a: f64,
    pub g0: f64,
    pub alpha_star: f64,
    pub k: usize,
    pub eps: f64,
    pub gamma: Vec<f64>,
}

impl PowerParams {
    pub fn new(a: f64, g0: f64, eps: f64, gamma: Vec<f64>) -> Result<Self> {
        if gamma.is_empty() {
            return Err(domain("PowerParams", "gamma must be nonempty"));
        }
        if !(eps > 0.0) {
            return Err(domain("PowerParams", format!("eps = {eps} must be positive")));
        }
        let (alpha_star, _) = alpha_star(a, g0)?;
        Ok(Self { a, g0, alpha_star, k: gamma.len(), eps, gamma })
    }

    /// From per-coordinate alternatives, which must share `eps`.
    pub fn from_alts(a: f64, alts: &[AltSpec]) -> Result<Self> {
        let first = alts.first().ok_or_else(|| domain("PowerParams", "no alternatives"))?;
        if let Some(bad) = alts.iter().find(|s| (s.eps - first.eps).abs() > EPS_MATCH_TOL) {
            return Err(Error::Config(format!("coordinates have different eps ({} vs {})", first.eps, bad.eps)));
        }
        let g0 = alts.iter().map(AltSpec::r).product();
        Self::new(a, g0, first.eps, alts.iter().map(AltSpec::gamma).collect())
    }

    pub fn min_pfdr(&self) -> f64 {
        (1.0 - self.a) * self.alpha_star
    }

    fn gap(&self, alpha: f64) -> Result<f64> {
        if !(alpha > self.alpha_star && alpha < 1.0) {
            return Err(domain(
                "power_asymptote",
                format!("alpha = {alpha} must lie in (alpha_* = {}, 1)", self.alpha_star),
            ));
        }
        Ok(alpha - self.alpha_star)
    }

    fn curvature(&self) -> f64 {
        self.a * self.alpha_star * self.alpha_star * self.g0
    }
}

fn geometric_mean(v: &[f64]) -> f64 {
    (v.iter().map(|x| x.ln()).sum::<f64>() / v.len() as f64).exp()
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension { expected, found });
    }
    Ok(())
}

/// Leading-order power of the ellipsoid procedure with weights `nu`
/// as `alpha` decreases to `alpha_*`.
pub fn power_asymptote_ellipsoid(alpha: f64, params: &PowerParams, nu: &[f64]) -> Result<f64> {
    check_len(params.k, nu.len())?;
    if nu.iter().any(|v| !(*v > 0.0)) {
        return Err(domain("power_asymptote_ellipsoid", "nu entries must be positive"));
    }
    if alpha == params.alpha_star {
        return Ok(0.0);
    }
    let gap = params.gap(alpha)?;
    let (k, eps) = (params.k as f64, params.eps);
    let nu_bar = geometric_mean(nu);
    let spread: f64 = params.gamma.iter().zip(nu).map(|(g, n)| nu_bar * g / n).sum();
    let base = (k + eps) / params.curvature() / spread;
    Ok(params.g0 * v_eps(eps, params.k)? * (base * gap).powf(k / eps))
}

/// Leading-order power of the rectangle procedure with scales `c`
/// (`prod c_k = 1`).
pub fn power_asymptote_rectangle(alpha: f64, params: &PowerParams, c: &[f64]) -> Result<f64> {
    check_len(params.k, c.len())?;
    if c.iter().any(|v| !(*v > 0.0)) {
        return Err(domain("power_asymptote_rectangle", "c entries must be positive"));
    }
    let prod: f64 = c.iter().product();
    if (prod - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!("c must have product 1, got {prod}")));
    }
    if alpha == params.alpha_star {
        return Ok(0.0);
    }
    let gap = params.gap(alpha)?;
    let (k, eps) = (params.k as f64, params.eps);
    let spread: f64 = params.gamma.iter().zip(c).map(|(g, ck)| g * ck.powf(eps)).sum();
    let base = (1.0 + eps) / params.curvature() / spread;
    Ok(params.g0 * (base * gap).powf(k / eps))
}

/// Limit of rectangle over ellipsoid power at their optimal parameters.
pub fn rect_vs_ellipsoid_ratio(eps: f64, k: usize) -> Result<f64> {
    let kf = k as f64;
    Ok(((1.0 + eps) / (kf + eps)).powf(kf / eps) / v_eps(eps, k)?)
}

/// Optimal ellipsoid weights (`nu = gamma`) and rectangle scales
/// `c_k = (gamma_bar / gamma_k)^{1/eps}`.
pub fn optimal_params(gamma: &[f64], eps: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if gamma.is_empty() {
        return Err(domain("optimal_params", "gamma must be nonempty"));
    }
    if !(eps > 0.0) {
        return Err(domain("optimal_params", format!("eps = {eps} must be positive")));
    }
    if gamma.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::Degenerate("every gamma_k must be positive".to_string()));
    }
    let bar = geometric_mean(gamma);
    let mut c: Vec<f64> = gamma.iter().map(|g| (bar / g).powf(1.0 / eps)).collect();
    // remove rounding drift so that prod c = 1 holds tightly
    let drift = geometric_mean(&c);
    c.iter_mut().for_each(|v| *v /= drift);
    Ok((gamma.to_vec(), c))
}

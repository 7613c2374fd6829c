//! Gamma, beta, normal, Student-t and F functions.
//!
//! The incomplete gamma/beta primitives come from `statrs` and the
//! complementary error function from `libm`; quantile inversion, the
//! noncentral t and F series and the tail ratios are built on top here.

use std::f64::consts::{LN_2, PI, SQRT_2};

use statrs::function::{beta as sbeta, erf, gamma as sgamma};

use crate::error::{domain, Error, Result};

/// Truncation control for the infinite sums behind the noncentral densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesControl {
    /// A term is negligible once `|term| < rel_tol * |partial sum|`.
    pub rel_tol: f64,
    pub max_terms: usize,
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self { rel_tol: 1e-14, max_terms: 500 }
    }
}

impl SeriesControl {
    pub fn new(rel_tol: f64, max_terms: usize) -> Result<Self> {
        if !(rel_tol > 0.0 && rel_tol <= 1e-6) {
            return Err(domain("SeriesControl", format!("rel_tol {rel_tol} not in (0, 1e-6]")));
        }
        if max_terms < 50 {
            return Err(domain("SeriesControl", format!("max_terms {max_terms} < 50")));
        }
        Ok(Self { rel_tol, max_terms })
    }
}

/// Consecutive negligible terms required before a series is truncated.
const NEGLIGIBLE_RUN: usize = 3;

pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(domain("ln_gamma", format!("x = {x} must be positive")));
    }
    Ok(sgamma::ln_gamma(x))
}

/// Regularized lower incomplete gamma `P(shape, x)` (unit scale).
pub fn gamma_cdf(shape: f64, x: f64) -> Result<f64> {
    check_gamma_args("gamma_cdf", shape, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    Ok(sgamma::gamma_lr(shape, x))
}

/// Regularized upper incomplete gamma `Q(shape, x) = 1 - P(shape, x)`,
/// evaluated without cancellation in the upper tail.
pub fn gamma_sf(shape: f64, x: f64) -> Result<f64> {
    check_gamma_args("gamma_sf", shape, x)?;
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(sgamma::gamma_ur(shape, x))
}

fn check_gamma_args(func: &'static str, shape: f64, x: f64) -> Result<()> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(domain(func, format!("shape = {shape} must be positive")));
    }
    if !(x >= 0.0) {
        return Err(domain(func, format!("x = {x} must be nonnegative")));
    }
    Ok(())
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn beta_cdf(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(domain("beta_cdf", format!("shape parameters ({a}, {b}) must be positive")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(domain("beta_cdf", format!("x = {x} outside [0, 1]")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    Ok(sbeta::beta_reg(a, b, x).clamp(0.0, 1.0))
}

/// Upper standard normal tail `P(Z >= x)`.
pub fn normal_cdf_upper(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

pub fn normal_density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse of [`normal_cdf_upper`].
pub fn normal_quantile_upper(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain("normal_quantile_upper", format!("p = {p} not in (0, 1)")));
    }
    let mut x = SQRT_2 * erf::erfc_inv(2.0 * p);
    // erfc_inv is only a starting point; polish against the accurate tail.
    for _ in 0..2 {
        let dens = normal_density(x);
        if !(dens > 0.0) || !x.is_finite() {
            break;
        }
        let step = (normal_cdf_upper(x) - p) / dens;
        if !step.is_finite() {
            break;
        }
        x += step;
    }
    Ok(x)
}

fn check_df(func: &'static str, df: f64) -> Result<()> {
    if !(df > 0.0) || !df.is_finite() {
        return Err(domain(func, format!("degrees of freedom {df} must be positive")));
    }
    Ok(())
}

/// Central Student-t distribution with cached normalising constants.
#[derive(Debug, Clone, Copy)]
pub struct StudentT {
    df: f64,
    ln_norm: f64,
}

impl StudentT {
    pub fn new(df: f64) -> Result<Self> {
        check_df("StudentT", df)?;
        let ln_norm = sgamma::ln_gamma((df + 1.0) / 2.0) - sgamma::ln_gamma(df / 2.0) - 0.5 * (df * PI).ln();
        Ok(Self { df, ln_norm })
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn density(&self, x: f64) -> f64 {
        (self.ln_norm - (self.df + 1.0) / 2.0 * (x * x / self.df).ln_1p()).exp()
    }

    /// Upper tail `P(T >= x)`, accurate in relative terms far into the tail.
    pub fn sf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x == f64::INFINITY {
            return 0.0;
        }
        if x == f64::NEG_INFINITY {
            return 1.0;
        }
        let half_tail = if x == 0.0 {
            0.5
        } else {
            // df / (df + x^2), written to survive x^2 overflowing
            let r = self.df.sqrt() / x.abs();
            let w = r * r / (1.0 + r * r);
            if w < 1e-100 {
                // leading term I_w(a, b) ~ w^a / (a B(a, b)), in logs so that
                // an underflowing w still gives a representable tail
                let a = self.df / 2.0;
                let ln_w = 2.0 * r.ln() - (r * r).ln_1p();
                0.5 * (a * ln_w - a.ln() - sbeta::ln_beta(a, 0.5)).exp()
            } else {
                0.5 * sbeta::beta_reg(self.df / 2.0, 0.5, w.min(1.0))
            }
        };
        if x >= 0.0 {
            half_tail
        } else {
            1.0 - half_tail
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.sf(-x)
    }

    /// `x` with `P(T >= x) = u`, by bracketing then bisection.
    pub fn quantile_upper(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(domain("t_quantile_upper", format!("u = {u} not in (0, 1)")));
        }
        if u == 0.5 {
            return Ok(0.0);
        }
        if u > 0.5 {
            return Ok(-self.quantile_upper_tail(1.0 - u));
        }
        Ok(self.quantile_upper_tail(u))
    }

    fn quantile_upper_tail(&self, u: f64) -> f64 {
        invert_upper_tail(|x| self.sf(x), u)
    }
}

/// Solves `sf(x) = u` for a nonincreasing tail function on `[0, inf)` with
/// `sf(0) >= u`: geometric bracketing, then bisection to full precision.
fn invert_upper_tail<S: Fn(f64) -> f64>(sf: S, u: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while sf(hi) > u {
        lo = hi;
        hi *= 16.0;
        if !hi.is_finite() {
            return f64::MAX;
        }
    }
    for _ in 0..400 {
        let mid = if lo > 0.0 && hi / lo > 4.0 { lo.sqrt() * hi.sqrt() } else { 0.5 * (lo + hi) };
        if mid <= lo || mid >= hi {
            break;
        }
        if sf(mid) > u {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Central Student-t CDF.
pub fn t_cdf(x: f64, df: f64) -> Result<f64> {
    Ok(StudentT::new(df)?.cdf(x))
}

/// Upper tail `P(T >= x)` of the central Student-t law.
pub fn t_sf(x: f64, df: f64) -> Result<f64> {
    Ok(StudentT::new(df)?.sf(x))
}

/// `F^{-1}(1 - u)` for the central Student-t law with `df` degrees of freedom.
pub fn t_quantile_upper(u: f64, df: f64) -> Result<f64> {
    StudentT::new(df)?.quantile_upper(u)
}

pub fn t_density(x: f64, df: f64) -> Result<f64> {
    Ok(StudentT::new(df)?.density(x))
}

/// Partial sums of a series whose terms are supplied as `(ln|term|, sign)`.
///
/// Tracks both the plain sum and the `k`-weighted sum, plus the largest term
/// magnitude so callers can detect cancellation.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct SeriesTotals {
    pub sum: f64,
    pub weighted: f64,
    pub max_abs: f64,
}

/// Sums `exp(ln_offset + ln_term(k)) * sign(k)` for `k = 0, 1, ...` under
/// the truncation policy of `ctl`.
///
/// `ln_term` returns `None` for a term that is exactly zero.
pub(crate) fn sum_log_series<F>(
    func: &'static str,
    ctl: &SeriesControl,
    ln_offset: f64,
    mut ln_term: F,
) -> Result<SeriesTotals>
where
    F: FnMut(usize) -> Option<(f64, f64)>,
{
    let mut totals = SeriesTotals::default();
    let mut quiet = 0;
    for k in 0..ctl.max_terms {
        let (term, weighted_term) = match ln_term(k) {
            Some((ln_abs, sign)) => {
                let t = sign * (ln_offset + ln_abs).exp();
                (t, k as f64 * t)
            }
            None => (0.0, 0.0),
        };
        totals.sum += term;
        totals.weighted += weighted_term;
        totals.max_abs = totals.max_abs.max(term.abs());
        let small = term.abs() <= ctl.rel_tol * totals.sum.abs()
            && weighted_term.abs() <= ctl.rel_tol * totals.weighted.abs().max(f64::MIN_POSITIVE);
        let vanished = term == 0.0 && k > 0;
        if small || vanished {
            quiet += 1;
            if quiet >= NEGLIGIBLE_RUN {
                return Ok(totals);
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::Convergence { func, max_terms: ctl.max_terms })
}

/// Series `sum_k C_k (sqrt(2) delta y)^k` of the noncentral t density, with
/// `C_k = Gamma((p+1+k)/2) / (k! Gamma((p+1)/2))`, every term scaled by
/// `exp(ln_offset)`.
pub(crate) fn t_series(
    func: &'static str,
    df: f64,
    delta: f64,
    y: f64,
    ln_offset: f64,
    ctl: &SeriesControl,
) -> Result<SeriesTotals> {
    let base = SQRT_2 * delta * y.abs();
    let ln_base = base.ln();
    let sign_base = if y < 0.0 { -1.0 } else { 1.0 };
    let half = (df + 1.0) / 2.0;
    // ln Gamma(half + k/2) - ln Gamma(half), stepped two at a time.
    let mut ln_ratio = [0.0, sgamma::ln_gamma(half + 0.5) - sgamma::ln_gamma(half)];
    let mut ln_fact = 0.0;
    let mut sign = 1.0;
    sum_log_series(func, ctl, ln_offset, |k| {
        if k > 0 {
            ln_fact += (k as f64).ln();
            sign *= sign_base;
        }
        if k >= 2 {
            ln_ratio[k % 2] += (half + (k as f64 - 2.0) / 2.0).ln();
        }
        if k == 0 {
            return Some((0.0, 1.0));
        }
        if base == 0.0 {
            return None;
        }
        Some((ln_ratio[k % 2] - ln_fact + k as f64 * ln_base, sign))
    })
}

fn ln_t_normaliser(df: f64) -> f64 {
    0.5 * df * df.ln() + sgamma::ln_gamma((df + 1.0) / 2.0) - 0.5 * PI.ln() - sgamma::ln_gamma(df / 2.0)
}

/// Density of the noncentral t law with `df` degrees of freedom and
/// noncentrality `delta`, by its power series in `x / sqrt(df + x^2)`.
///
/// For `x < 0` the series alternates; when cancellation would cost more than
/// eight digits the same sum is evaluated through its integral
/// representation instead.
pub fn noncentral_t_density(x: f64, df: f64, delta: f64, ctl: &SeriesControl) -> Result<f64> {
    check_df("noncentral_t_density", df)?;
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(domain("noncentral_t_density", format!("delta = {delta} must be nonnegative")));
    }
    if !x.is_finite() {
        return Ok(0.0);
    }
    let spread = df + x * x;
    let y = x / spread.sqrt();
    let ln_prefactor = ln_t_normaliser(df) - 0.5 * delta * delta - (df + 1.0) / 2.0 * spread.ln();
    t_series_guarded(df, delta, y, ln_prefactor, ctl)
}

/// Ratio `t_{p,delta}(x) / t_p(x)` of noncentral to central t densities.
pub fn noncentral_t_ratio(x: f64, df: f64, delta: f64, ctl: &SeriesControl) -> Result<f64> {
    check_df("noncentral_t_ratio", df)?;
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(domain("noncentral_t_ratio", format!("delta = {delta} must be nonnegative")));
    }
    let y = if x.is_infinite() { x.signum() } else { x / (df + x * x).sqrt() };
    t_series_guarded(df, delta, y, -0.5 * delta * delta, ctl)
}

/// [`t_series`] total, switching to the integral form when the
/// alternating series for `y < 0` loses more than eight digits.
fn t_series_guarded(df: f64, delta: f64, y: f64, ln_offset: f64, ctl: &SeriesControl) -> Result<f64> {
    let totals = t_series("noncentral_t", df, delta, y, ln_offset, ctl)?;
    if y < 0.0 && totals.sum < 1e-8 * totals.max_abs {
        let sum = t_series_integral(df, delta * y);
        return Ok((ln_offset + sum.ln()).exp());
    }
    Ok(totals.sum.max(0.0))
}

/// `sum_k C_k (sqrt(2) w)^k` for `w <= 0` via
/// `2^{-(p-1)/2} / Gamma((p+1)/2) * int_0^inf s^p exp(-s^2/2 + w s) ds`.
fn t_series_integral(df: f64, w: f64) -> f64 {
    let mode = 0.5 * (w + (w * w + 4.0 * df).sqrt());
    let ln_peak = df * mode.ln() - 0.5 * mode * mode + w * mode;
    let integrand = |s: f64| {
        if s <= 0.0 {
            0.0
        } else {
            (df * s.ln() - 0.5 * s * s + w * s - ln_peak).exp()
        }
    };
    // Log-concave integrand: curvature at the mode is at least 1, so 40
    // units beyond it is far past double precision.
    let upper = mode + 40.0;
    let mut total = 0.0;
    let pieces = 64;
    let h = upper / pieces as f64;
    for i in 0..pieces {
        let a = i as f64 * h;
        total += adaptive_simpson(&integrand, a, a + h, 1e-15, 30);
    }
    let ln_const = -0.5 * (df - 1.0) * LN_2 - sgamma::ln_gamma((df + 1.0) / 2.0);
    (ln_const + ln_peak).exp() * total
}

pub(crate) fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let c = 0.5 * (a + b);
    let (fa, fb, fc) = (f(a), f(b), f(c));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_step(f, a, b, fa, fb, fc, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fc: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let c = 0.5 * (a + b);
    let (d, e) = (0.5 * (a + c), 0.5 * (c + b));
    let (fd, fe) = (f(d), f(e));
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, c, fa, fc, fd, left, tol / 2.0, depth - 1)
        + simpson_step(f, c, b, fc, fb, fe, right, tol / 2.0, depth - 1)
}

fn check_f_args(func: &'static str, x: f64, p: f64, q: f64, delta: f64) -> Result<()> {
    check_df(func, p)?;
    check_df(func, q)?;
    if !(x > 0.0) {
        return Err(domain(func, format!("x = {x} must be positive")));
    }
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(domain(func, format!("delta = {delta} must be nonnegative")));
    }
    Ok(())
}

/// Central F density with `(p, q)` degrees of freedom.
pub fn f_density(x: f64, p: f64, q: f64) -> Result<f64> {
    noncentral_f_density(x, p, q, 0.0, &SeriesControl::default())
}

/// Upper tail `P(F >= x)` of the central F law.
pub fn f_sf(x: f64, p: f64, q: f64) -> Result<f64> {
    check_df("f_sf", p)?;
    check_df("f_sf", q)?;
    if !(x >= 0.0) {
        return Err(domain("f_sf", format!("x = {x} must be nonnegative")));
    }
    Ok(f_sf_unchecked(x, p, q))
}

fn f_sf_unchecked(x: f64, p: f64, q: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    // q / (q + p x) without cancellation
    let w = 1.0 / (1.0 + p / q * x);
    sbeta::beta_reg(q / 2.0, p / 2.0, w)
}

/// `x` with `P(F >= x) = u` under the central F law.
pub fn f_quantile_upper(u: f64, p: f64, q: f64) -> Result<f64> {
    check_df("f_quantile_upper", p)?;
    check_df("f_quantile_upper", q)?;
    if !(u > 0.0 && u < 1.0) {
        return Err(domain("f_quantile_upper", format!("u = {u} not in (0, 1)")));
    }
    Ok(invert_upper_tail(|x| f_sf_unchecked(x, p, q), u))
}

/// Series `sum_k (delta/2)^k w^k / (k! B(p/2 + k, q/2))` scaled by
/// `exp(ln_offset)`, with `w = 1 - z` supplied as `ln_w`.
pub(crate) fn f_series(
    func: &'static str,
    p: f64,
    q: f64,
    delta: f64,
    ln_w: f64,
    ln_offset: f64,
    ctl: &SeriesControl,
) -> Result<SeriesTotals> {
    let half_p = p / 2.0;
    let half_q = q / 2.0;
    let ln_half_delta = (delta / 2.0).ln();
    let mut ln_beta = sbeta::ln_beta(half_p, half_q);
    let mut ln_fact = 0.0;
    sum_log_series(func, ctl, ln_offset, |k| {
        if k > 0 {
            let kf = k as f64;
            ln_fact += kf.ln();
            // B(a+1, b) = B(a, b) * a / (a + b)
            let a = half_p + kf - 1.0;
            ln_beta += a.ln() - (a + half_q).ln();
        }
        if k == 0 {
            return Some((-ln_beta, 1.0));
        }
        if delta == 0.0 {
            return None;
        }
        let kf = k as f64;
        Some((kf * (ln_half_delta + ln_w) - ln_fact - ln_beta, 1.0))
    })
}

/// Ratio `f_{p,q,delta}(x) / f_{p,q}(x)` of noncentral to central F densities.
pub fn noncentral_f_ratio(x: f64, p: f64, q: f64, delta: f64, ctl: &SeriesControl) -> Result<f64> {
    check_f_args("noncentral_f_ratio", x, p, q, delta)?;
    let ln_w = if x.is_infinite() {
        0.0
    } else {
        let rho_x = p / q * x;
        rho_x.ln() - rho_x.ln_1p()
    };
    let ln_offset = sbeta::ln_beta(p / 2.0, q / 2.0) - delta / 2.0;
    Ok(f_series("noncentral_f_ratio", p, q, delta, ln_w, ln_offset, ctl)?.sum)
}

/// Noncentral F density (`p`, `q` degrees of freedom, noncentrality `delta`).
pub fn noncentral_f_density(x: f64, p: f64, q: f64, delta: f64, ctl: &SeriesControl) -> Result<f64> {
    check_f_args("noncentral_f_density", x, p, q, delta)?;
    if x.is_infinite() {
        return Ok(0.0);
    }
    let rho_x = p / q * x;
    // z = 1 / (1 + rho x), w = 1 - z
    let ln_z = -rho_x.ln_1p();
    let ln_w = rho_x.ln() + ln_z;
    let ln_offset = -delta / 2.0 - x.ln() + p / 2.0 * ln_w + q / 2.0 * ln_z;
    let totals = f_series("noncentral_f_density", p, q, delta, ln_w, ln_offset, ctl)?;
    Ok(totals.sum)
}

use mvfdr::procedures::{bh, matched_power_comparison, TruthVector};
use mvfdr::regions::{h_exact_2d, EllipsoidSpec, IrwinHall, RegionFamily};
use mvfdr::simulation::{cholesky, sigma_bivariate, sigma_exchangeable};
use mvfdr::special::{
    f_quantile_upper, f_sf, noncentral_f_ratio, noncentral_t_ratio, t_quantile_upper, t_sf, SeriesControl,
};
use proptest::prelude::*;

fn unit() -> impl Strategy<Value = f64> {
    1e-12..1.0 - 1e-12
}

fn families(k: usize, nu: Vec<f64>, eps: f64) -> Vec<(&'static str, RegionFamily)> {
    let c: Vec<f64> = {
        let raw: Vec<f64> = nu.iter().map(|v| v.sqrt()).collect();
        let g = (raw.iter().map(|v| v.ln()).sum::<f64>() / k as f64).exp();
        raw.iter().map(|v| v / g).collect()
    };
    vec![
        ("min", RegionFamily::min(k).unwrap()),
        ("product", RegionFamily::product(k).unwrap()),
        ("stouffer", RegionFamily::stouffer(nu.clone()).unwrap()),
        ("rectangle", RegionFamily::rectangle(c).unwrap()),
        ("ellipsoid", RegionFamily::ellipsoid(EllipsoidSpec::new(nu, eps).unwrap(), None).unwrap()),
    ]
}

/// Counting form of the step-up rule: the largest `l` with at least `l`
/// scores at or below `l alpha / n`, rejecting every such score.
fn bh_brute_force(scores: &[f64], alpha: f64) -> Vec<usize> {
    let n = scores.len();
    let level = |l: usize| l as f64 * alpha / n as f64;
    let count = |t: f64| scores.iter().filter(|s| **s <= t).count();
    match (1..=n).rev().find(|&l| count(level(l)) >= l) {
        None => Vec::new(),
        Some(l) => (0..n).filter(|&i| scores[i] <= level(l)).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scores_are_monotone_and_bounded(
        x in prop::collection::vec(unit(), 2..5),
        bump in 0.0f64..0.5,
        which in 0usize..4,
        nu_raw in prop::collection::vec(0.2f64..5.0, 4),
        eps in prop::sample::select(vec![0.25, 0.5, 1.0, 2.0]),
    ) {
        let k = x.len();
        let nu = nu_raw[..k].to_vec();
        let j = which % k;
        let mut y = x.clone();
        y[j] = (y[j] + bump).min(1.0 - 1e-12);
        for (name, fam) in families(k, nu, eps) {
            let sx = fam.score(&x).unwrap();
            let sy = fam.score(&y).unwrap();
            prop_assert!((0.0..=1.0).contains(&sx), "{} score {}", name, sx);
            prop_assert!(sy >= sx - 1e-12, "{}: J(x) = {} > J(y) = {}", name, sx, sy);
        }
    }

    #[test]
    fn bh_matches_brute_force(
        scores in prop::collection::vec(0.0f64..1.0, 1..60),
        alpha in 0.01f64..0.5,
    ) {
        let res = bh(&scores, alpha).unwrap();
        prop_assert_eq!(&res.rejected, &bh_brute_force(&scores, alpha));
        prop_assert_eq!(res.rejected.len(), res.l);
    }

    #[test]
    fn bh_is_nested_in_alpha(
        scores in prop::collection::vec(0.0f64..0.2, 1..60),
        a1 in 0.01f64..0.3,
        a2 in 0.01f64..0.3,
    ) {
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let small = bh(&scores, lo).unwrap().rejected;
        let large = bh(&scores, hi).unwrap().rejected;
        prop_assert!(small.iter().all(|i| large.contains(i)));
    }

    #[test]
    fn matched_comparison_reaches_d_with_fewest_rejections(
        scores in prop::collection::vec(0.0f64..0.1, 5..80),
        order in prop::collection::vec(-5.0f64..5.0, 80),
        theta in prop::collection::vec(any::<bool>(), 80),
        alpha in 0.05f64..0.5,
    ) {
        let n = scores.len();
        let truth = TruthVector::new(theta[..n].to_vec());
        let order = &order[..n];
        let reference = bh(&scores, alpha).unwrap();
        let m = matched_power_comparison(&reference, order, &truth).unwrap();
        let d = reference.rejected.iter().filter(|i| truth.is_false_null(**i)).count();
        prop_assert_eq!(m.d, d);
        if d == 0 {
            prop_assert!(!m.matched && m.fdp == 0.0 && m.rejected.is_empty());
        } else {
            let (r, v) = truth.tally(&m.rejected);
            prop_assert!(r >= d);
            prop_assert_eq!(r - v, d);
            // the last rejection is the d-th false null along the order
            let last = *m.rejected.last().unwrap();
            prop_assert!(truth.is_false_null(last));
            let threshold = order[last];
            prop_assert!(m.rejected.iter().all(|i| order[*i] <= threshold));
        }
    }

    #[test]
    fn t_quantile_round_trip(u in 1e-200f64..0.999, df in 1.0f64..40.0) {
        let x = t_quantile_upper(u, df).unwrap();
        let back = t_sf(x, df).unwrap();
        prop_assert!((back / u - 1.0).abs() < 1e-9, "df {} u {} back {}", df, u, back);
    }

    #[test]
    fn f_quantile_round_trip(u in 1e-100f64..0.999, p in 1.0f64..20.0, q in 1.0f64..20.0) {
        let x = f_quantile_upper(u, p, q).unwrap();
        let back = f_sf(x, p, q).unwrap();
        prop_assert!((back / u - 1.0).abs() < 1e-8, "p {} q {} u {} back {}", p, q, u, back);
    }

    #[test]
    fn series_do_not_depend_on_control(
        x in -20.0f64..60.0,
        df in 1.0f64..30.0,
        delta in 0.0f64..6.0,
        p in 1.0f64..10.0,
        q in 1.0f64..20.0,
    ) {
        let tight = SeriesControl::new(1e-15, 2000).unwrap();
        let loose = SeriesControl::new(1e-12, 500).unwrap();
        let a = noncentral_t_ratio(x, df, delta, &tight).unwrap();
        let b = noncentral_t_ratio(x, df, delta, &loose).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-300), "t: {} vs {}", a, b);
        let xf = x.abs();
        let a = noncentral_f_ratio(xf, p, q, delta, &tight).unwrap();
        let b = noncentral_f_ratio(xf, p, q, delta, &loose).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs(), "F: {} vs {}", a, b);
    }

    #[test]
    fn exact_volume_symmetry_and_scale(
        u in 0.0f64..8.0,
        n1 in 0.1f64..4.0,
        n2 in 0.1f64..4.0,
        s in 0.1f64..10.0,
        eps in 0.2f64..3.0,
    ) {
        let h = h_exact_2d(u, [n1, n2], eps).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        prop_assert!((h - h_exact_2d(u, [n2, n1], eps).unwrap()).abs() < 1e-12);
        prop_assert!((h - h_exact_2d(s * u, [s * n1, s * n2], eps).unwrap()).abs() < 1e-10);
        prop_assert!(h_exact_2d(u + 0.05, [n1, n2], eps).unwrap() >= h - 1e-12);
    }

    #[test]
    fn irwin_hall_is_a_cdf(u in -1.0f64..12.0, k in 1usize..11) {
        let ih = IrwinHall::new(k).unwrap();
        let c = ih.cdf(u);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&c));
        prop_assert!(ih.cdf(u + 0.01) >= c - 1e-12);
        // symmetry about K / 2
        let mirror = ih.cdf(k as f64 - u);
        prop_assert!((c + mirror - 1.0).abs() < 1e-9, "K {} u {}: {} + {}", k, u, c, mirror);
    }

    #[test]
    fn covariance_factorises(r in -0.9f64..0.9, k in 2usize..7) {
        let s = sigma_exchangeable(r, k).unwrap();
        let l = cholesky(&s, k).unwrap();
        for i in 0..k {
            prop_assert!((s[i * k + i] - 1.0).abs() < 1e-12);
            for j in 0..k {
                let v: f64 = (0..k).map(|p| l[i * k + p] * l[j * k + p]).sum();
                prop_assert!((v - s[i * k + j]).abs() < 1e-12);
            }
        }
        let s_bi = sigma_bivariate(r).unwrap();
        prop_assert!((s_bi[1] - 2.0 * r / (1.0 + r * r)).abs() < 1e-15);
    }
}

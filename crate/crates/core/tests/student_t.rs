//! Student-t survival function against independent references.

use diversity_harness::statistics::{student_t_sf, StatsError};
use proptest::prelude::*;
use statrs::function::gamma::ln_gamma;

/// P(|T| < t) for integer df by the finite trigonometric series
/// (θ = atan(t/√ν)); odd ν carries the extra θ term.
fn central_mass(t: f64, df: u64) -> f64 {
    let theta = (t / (df as f64).sqrt()).atan();
    let (s, c) = theta.sin_cos();
    let c2 = c * c;
    if df % 2 == 1 {
        if df == 1 {
            return 2.0 * theta / std::f64::consts::PI;
        }
        // cosθ · (1 + (2/3)cos²θ + (2·4)/(3·5)cos⁴θ + …), ν−2 power at most
        let mut term = c;
        let mut sum = c;
        let mut j = 2;
        while j + 3 <= df {
            term *= c2 * j as f64 / (j + 1) as f64;
            sum += term;
            j += 2;
        }
        2.0 / std::f64::consts::PI * (theta + s * sum)
    } else {
        // sinθ · (1 + ½cos²θ + (1·3)/(2·4)cos⁴θ + …)
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut j = 1;
        while j + 3 <= df {
            term *= c2 * j as f64 / (j + 1) as f64;
            sum += term;
            j += 2;
        }
        s * sum
    }
}

fn series_sf(t: f64, df: u64) -> f64 {
    let upper = 0.5 * (1.0 - central_mass(t.abs(), df));
    if t >= 0.0 {
        upper
    } else {
        1.0 - upper
    }
}

/// P(T > t) by composite Simpson quadrature of the density over [0, |t|].
fn quadrature_sf(t: f64, df: u64) -> f64 {
    let nu = df as f64;
    let ln_norm =
        ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI).ln();
    let density = |x: f64| (ln_norm - (nu + 1.0) / 2.0 * (x * x / nu).ln_1p()).exp();
    let b = t.abs();
    let n = 20_000;
    let h = b / n as f64;
    let mut sum = density(0.0) + density(b);
    for i in 1..n {
        sum += density(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let mass = sum * h / 3.0;
    if t >= 0.0 {
        0.5 - mass
    } else {
        0.5 + mass
    }
}

const TOL: f64 = 1e-8;

fn grid_t() -> Vec<f64> {
    let mut ts = vec![
        0.0, 1e-6, 0.1, 0.5, 1.0, 1.5, 1.96, 2.5, 3.4641, 5.0, 7.5, 10.0, 20.0, 35.0, 50.0,
    ];
    let neg: Vec<f64> = ts.iter().map(|t| -t).collect();
    ts.extend(neg);
    ts
}

#[test]
fn matches_trigonometric_series_for_small_df() {
    for df in 1..=60u64 {
        for &t in &grid_t() {
            let got = student_t_sf(t, df).unwrap();
            let want = series_sf(t, df);
            assert!((got - want).abs() <= TOL, "df {df} t {t}: {got} vs {want}");
        }
    }
}

#[test]
fn matches_quadrature_up_to_a_million_df() {
    for df in [
        1u64, 2, 3, 5, 10, 30, 100, 1_000, 10_000, 100_000, 999_999, 1_000_000,
    ] {
        for &t in &grid_t() {
            let got = student_t_sf(t, df).unwrap();
            let want = quadrature_sf(t, df);
            assert!((got - want).abs() <= TOL, "df {df} t {t}: {got} vs {want}");
        }
    }
}

#[test]
fn series_anchor_points() {
    // Sanity checks on the references themselves.
    assert!((series_sf(1.0, 1) - 0.25).abs() < 1e-15);
    assert!((quadrature_sf(1.0, 1) - 0.25).abs() < 1e-12);
    for df in [4u64, 9, 25] {
        assert!((quadrature_sf(2.0, df) - series_sf(2.0, df)).abs() < 1e-12);
    }
    let t: f64 = 3.4641;
    assert!((series_sf(t, 2) - 0.5 * (1.0 - t / (t * t + 2.0).sqrt())).abs() < 1e-15);
    // df = 3 closed form: ½ − (θ + sinθcosθ)/π
    let theta = (t / 3f64.sqrt()).atan();
    let want = 0.5 - (theta + theta.sin() * theta.cos()) / std::f64::consts::PI;
    assert!((series_sf(t, 3) - want).abs() < 1e-15);
}

#[test]
fn zero_df_is_rejected() {
    assert_eq!(student_t_sf(1.0, 0), Err(StatsError::InvalidDf(0)));
}

#[test]
fn extreme_t_stays_in_range() {
    for df in [1u64, 2, 7, 1_000_000] {
        assert_eq!(student_t_sf(f64::INFINITY, df).unwrap(), 0.0);
        assert_eq!(student_t_sf(f64::NEG_INFINITY, df).unwrap(), 1.0);
        let tiny = student_t_sf(1e6, df).unwrap();
        assert!((0.0..1e-6).contains(&tiny));
    }
}

proptest! {
    #[test]
    fn symmetric_halves_sum_to_one(t in -50.0f64..50.0, df in 1u64..1_000_000) {
        let sum = student_t_sf(t, df).unwrap() + student_t_sf(-t, df).unwrap();
        prop_assert!((sum - 1.0).abs() <= 1e-10, "sum {}", sum);
    }

    #[test]
    fn decreasing_in_t(a in -50.0f64..50.0, b in -50.0f64..50.0, df in 1u64..2000) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(student_t_sf(lo, df).unwrap() >= student_t_sf(hi, df).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn agrees_with_quadrature_at_random_points(t in -50.0f64..50.0, df in 1u64..=1_000_000) {
        let want = quadrature_sf(t, df);
        let got = student_t_sf(t, df).unwrap();
        prop_assert!((got - want).abs() <= TOL, "df {} t {}: {} vs {}", df, t, got, want);
    }
}

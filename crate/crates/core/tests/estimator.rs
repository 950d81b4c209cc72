use hewe::estimator::{
    estimate, log_likelihood, profile_lambda, profile_rho, surface, sweep_endpoints, what_if, GridRange, SearchConfig,
};
use hewe::model::{bias_f, mean_increments, t_variance_weights};
use hewe::process::{hewe_vector, t_transform, ThetaGrid};
use hewe::simulator::sample_pareto;
use hewe::{HeweError, OrderedSample};
use proptest::prelude::*;

fn small_config(endpoint: usize) -> SearchConfig {
    SearchConfig {
        alpha_range: GridRange::new(0.05, 2.0, 0.05).unwrap(),
        delta_range: GridRange::new(0.0, 3.0, 0.01).unwrap(),
        ..SearchConfig::for_simulation(endpoint)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Pure-mean T vector plus a bias-direction perturbation.
fn synthetic(grid: &ThetaGrid, alpha: f64, delta: f64, rho: f64, lambda: f64) -> Vec<f64> {
    let u = mean_increments(grid, delta).unwrap();
    let f = bias_f(grid, delta, rho).unwrap();
    let amp = lambda / (grid.k() as f64).sqrt();
    u.iter().zip(&f).map(|(u, f)| u / alpha + amp * f).collect()
}

#[test]
fn lambda_is_zero_without_bias() {
    let grid = ThetaGrid::from_ranks(50, 5, 120).unwrap();
    let t = synthetic(&grid, 0.5, 1.0, -1.0, 0.0);
    let w = t_variance_weights(&grid, 1.0).unwrap();
    assert!(profile_lambda(&t, &grid, 0.5, 1.0, -1.0, &w).unwrap().abs() < 1e-10);
}

#[test]
fn lambda_recovers_pure_bias() {
    let grid = ThetaGrid::from_ranks(50, 5, 120).unwrap();
    let w = t_variance_weights(&grid, 0.7).unwrap();
    for c in [-3.0, 0.25, 5.0] {
        let t = synthetic(&grid, 0.8, 0.7, -1.5, c);
        let got = profile_lambda(&t, &grid, 0.8, 0.7, -1.5, &w).unwrap();
        assert!((got - c).abs() < 1e-9 * c.abs().max(1.0), "{got} vs {c}");
    }
}

#[test]
fn lambda_single_point() {
    let grid = ThetaGrid::new(20, vec![1.5]).unwrap();
    let w = t_variance_weights(&grid, 0.5).unwrap();
    let t = [1.9];
    let g1 = hewe::model::g(1.5, 0.5).unwrap();
    let f1 = hewe::model::bias_b(1.5, 0.5, -2.0).unwrap();
    let expect = (20f64).sqrt() * (t[0] - g1 / 0.6) / f1;
    let got = profile_lambda(&t, &grid, 0.6, 0.5, -2.0, &w).unwrap();
    assert!(rel(got, expect) < 1e-12);
}

#[test]
fn lambda_length_mismatch() {
    let grid = ThetaGrid::from_ranks(10, 1, 5).unwrap();
    let err = profile_lambda(&[1.0; 4], &grid, 1.0, 0.0, -1.0, &[1.0; 5]).unwrap_err();
    assert!(matches!(err, HeweError::DomainError(_)));
}

#[test]
fn rho_recovered_from_exact_construction() {
    let grid = ThetaGrid::from_ranks(50, 5, 180).unwrap();
    let t = synthetic(&grid, 0.5, 1.0, -2.0, 1.0);
    let p = profile_rho(&t, &grid, 0.5, 1.0, &SearchConfig::for_simulation(180)).unwrap();
    assert!((p.rho + 2.0).abs() < 1e-3, "rho {}", p.rho);
    assert!((p.lambda - 1.0).abs() < 1e-2, "lambda {}", p.lambda);
    assert!(p.wss < 1e-10);
}

#[test]
fn rho_profile_without_bias() {
    let grid = ThetaGrid::from_ranks(50, 5, 100).unwrap();
    let t = synthetic(&grid, 1.2, 0.4, -1.0, 0.0);
    let p = profile_rho(&t, &grid, 1.2, 0.4, &SearchConfig::for_simulation(100)).unwrap();
    assert!(p.lambda.abs() < 1e-6);
    assert!(p.wss < 1e-20);
}

#[test]
fn loglik_continuous_at_rho_zero() {
    let grid = ThetaGrid::from_ranks(30, 1, 60).unwrap();
    let t = synthetic(&grid, 0.9, 1.3, -0.5, 2.0);
    for delta in [0.0, 1.3] {
        let at0 = log_likelihood(&t, &grid, 0.9, delta, 0.0, 2.0).unwrap();
        let near = log_likelihood(&t, &grid, 0.9, delta, -1e-7, 2.0).unwrap();
        assert!((at0 - near).abs() < 1e-5 * at0.abs().max(1.0), "{at0} vs {near}");
    }
}

#[test]
fn loglik_at_the_mean() {
    let grid = ThetaGrid::from_ranks(40, 2, 50).unwrap();
    let (alpha, delta, rho, lambda) = (0.7, 0.9, -1.1, 0.3);
    let t = synthetic(&grid, alpha, delta, rho, lambda);
    let w = t_variance_weights(&grid, delta).unwrap();
    let expect = t.len() as f64 * alpha.ln() + 0.5 * w.iter().map(|w| w.ln()).sum::<f64>();
    let got = log_likelihood(&t, &grid, alpha, delta, rho, lambda).unwrap();
    assert!(rel(got, expect) < 1e-12);
}

#[test]
fn loglik_quadratic_term_scales_by_four() {
    let grid = ThetaGrid::from_ranks(40, 2, 50).unwrap();
    let (alpha, delta, rho, lambda) = (0.7, 0.9, -1.1, 0.3);
    let m = synthetic(&grid, alpha, delta, rho, lambda);
    let t: Vec<f64> = m.iter().enumerate().map(|(i, v)| v + 0.01 * ((i * 7 % 5) as f64 - 2.0)).collect();
    let t2: Vec<f64> = m.iter().zip(&t).map(|(m, t)| m + 2.0 * (t - m)).collect();
    let base = log_likelihood(&m, &grid, alpha, delta, rho, lambda).unwrap();
    let q1 = base - log_likelihood(&t, &grid, alpha, delta, rho, lambda).unwrap();
    let q2 = base - log_likelihood(&t2, &grid, alpha, delta, rho, lambda).unwrap();
    assert!(rel(q2, 4.0 * q1) < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Matches an independent Gaussian density with `σᵢ² = 1/(α²k wᵢ)` up
    /// to the additive constant `(s/2)·(log 2π − log k)`.
    #[test]
    fn loglik_is_gaussian_density(
        alpha in 0.1f64..3.0,
        delta in 0.0f64..4.0,
        rho in -5.0f64..0.0,
        lambda in -3.0f64..3.0,
        k in 5usize..100,
        noise in proptest::collection::vec(-0.2f64..0.2, 30),
    ) {
        let grid = ThetaGrid::from_ranks(k, 1, 30).unwrap();
        let m = synthetic(&grid, alpha, delta, rho, lambda);
        let t: Vec<f64> = m.iter().zip(&noise).map(|(m, e)| m + e).collect();
        let w = t_variance_weights(&grid, delta).unwrap();
        let kf = k as f64;
        let density: f64 = t.iter().zip(&m).zip(&w).map(|((t, m), w)| {
            let var = 1.0 / (alpha * alpha * kf * w);
            -0.5 * ((t - m).powi(2) / var + var.ln() + (2.0 * std::f64::consts::PI).ln())
        }).sum();
        let s = t.len() as f64;
        let expect = density - 0.5 * s * kf.ln() + 0.5 * s * (2.0 * std::f64::consts::PI).ln();
        let got = log_likelihood(&t, &grid, alpha, delta, rho, lambda).unwrap();
        prop_assert!((got - expect).abs() < 1e-8 * expect.abs().max(1.0), "{got} vs {expect}");
    }
}

#[test]
fn short_sample_is_insufficient() {
    let s = sample_pareto(0.5, 100, 1).unwrap();
    let err = estimate(&s, 50, &small_config(180)).unwrap_err();
    assert!(matches!(err, HeweError::InsufficientData { .. }), "{err:?}");
}

#[test]
fn endpoint_too_small_is_invalid() {
    let s = sample_pareto(0.5, 100, 1).unwrap();
    let err = estimate(&s, 10, &small_config(5)).unwrap_err();
    assert!(matches!(err, HeweError::InvalidConfig(_)));
}

#[test]
fn single_endpoint_sweep_is_estimate() {
    let s = sample_pareto(0.5, 500, 11).unwrap().remove_top(50).unwrap();
    let cfg = small_config(150);
    let one = estimate(&s, 50, &cfg).unwrap();
    let sweep = sweep_endpoints(&s, 50, &cfg, &[150]).unwrap();
    assert_eq!(sweep.len(), 1);
    assert_eq!(sweep[0].result.as_ref().unwrap(), &one);
}

#[test]
fn sweep_matches_separate_estimates() {
    let s = sample_pareto(1.0, 500, 12).unwrap().remove_top(25).unwrap();
    let cfg = small_config(0);
    let sweep = sweep_endpoints(&s, 50, &cfg, &[100, 160, 600]).unwrap();
    for entry in &sweep[..2] {
        let one = estimate(&s, 50, &SearchConfig { endpoint: entry.endpoint, ..cfg.clone() }).unwrap();
        assert_eq!(entry.result.as_ref().unwrap(), &one);
    }
    assert!(matches!(sweep[2].result, Err(HeweError::InsufficientData { .. })));
}

#[test]
fn estimate_is_scale_invariant() {
    let s = sample_pareto(0.5, 500, 13).unwrap().remove_top(50).unwrap();
    let cfg = small_config(150);
    let a = estimate(&s, 50, &cfg).unwrap();
    for c in [1e-3, 7.5, 1e4] {
        let scaled = OrderedSample::from_values(s.values().iter().map(|v| v * c).collect()).unwrap();
        let b = estimate(&scaled, 50, &cfg).unwrap();
        assert_eq!(a.alpha_hat, b.alpha_hat);
        assert_eq!(a.delta_hat, b.delta_hat);
        assert!((a.rho_hat - b.rho_hat).abs() < 1e-4, "{} vs {}", a.rho_hat, b.rho_hat);
        assert!((a.lambda_hat - b.lambda_hat).abs() < 1e-4 * a.lambda_hat.abs().max(1.0));
    }
}

#[test]
fn estimate_beats_every_grid_cell() {
    for (seed, m) in [(21, 50), (22, 0)] {
        let s = sample_pareto(0.5, 500, seed).unwrap().remove_top(m).unwrap();
        let cfg = SearchConfig {
            alpha_range: GridRange::new(0.1, 1.5, 0.02).unwrap(),
            delta_range: GridRange::new(0.0, 2.0, 0.02).unwrap(),
            ..SearchConfig::for_simulation(150)
        };
        let r = estimate(&s, 50, &cfg).unwrap();
        let surf = surface(&s, 50, &cfg).unwrap();
        let best = surf.max();
        assert!(r.loglik >= best - 1e-9 * best.abs(), "{} < {}", r.loglik, best);
    }
}

#[test]
fn lambda_is_profiled_exactly() {
    let s = sample_pareto(0.5, 500, 31).unwrap().remove_top(50).unwrap();
    let cfg = small_config(150);
    let r = estimate(&s, 50, &cfg).unwrap();
    let grid = ThetaGrid::from_ranks(50, cfg.theta1_offset, cfg.endpoint).unwrap();
    let t = t_transform(&hewe_vector(&s, &grid, 0.0).unwrap());
    let at = |l: f64| log_likelihood(&t, &grid, r.alpha_hat, r.delta_hat, r.rho_hat, l).unwrap();
    let base = at(r.lambda_hat);
    assert!((base - r.loglik).abs() < 1e-9 * base.abs().max(1.0), "{base} vs {}", r.loglik);
    for d in [-1e-4, 1e-4] {
        assert!(at(r.lambda_hat + d) <= base + 1e-12 * base.abs());
    }
}

#[test]
fn result_respects_ranges() {
    let s = sample_pareto(1.0, 500, 41).unwrap().remove_top(50).unwrap();
    let cfg = small_config(150);
    let r = estimate(&s, 50, &cfg).unwrap();
    assert!(r.alpha_hat >= cfg.alpha_range.min && r.alpha_hat <= cfg.alpha_range.max);
    assert!(r.delta_hat >= cfg.delta_range.min && r.delta_hat <= cfg.delta_range.max);
    assert!(r.rho_hat >= cfg.rho_min && r.rho_hat <= 0.0);
    assert!(r.loglik.is_finite());
    assert_eq!(r.missing_hat, r.delta_hat * 50.0);
    assert_eq!(r.gamma_hat, 1.0 / r.alpha_hat);
    assert_eq!(r.alpha_hat, cfg.alpha_range.value(r.diagnostics.alpha_index));
}

#[test]
fn estimate_is_deterministic() {
    let s = sample_pareto(0.5, 500, 51).unwrap().remove_top(50).unwrap();
    let cfg = small_config(150);
    assert_eq!(estimate(&s, 50, &cfg).unwrap(), estimate(&s, 50, &cfg).unwrap());
}

#[test]
fn boundary_hits_are_flagged() {
    let s = sample_pareto(0.5, 500, 61).unwrap().remove_top(50).unwrap();
    let cfg = SearchConfig {
        alpha_range: GridRange::new(1.0, 2.0, 0.1).unwrap(),
        delta_range: GridRange::new(0.0, 0.2, 0.01).unwrap(),
        ..SearchConfig::for_simulation(150)
    };
    let r = estimate(&s, 50, &cfg).unwrap();
    assert!(r.diagnostics.alpha_at_lower);
    assert!(r.diagnostics.delta_at_upper);
}

#[test]
fn what_if_without_removal_is_identity() {
    let s = sample_pareto(0.5, 400, 71).unwrap();
    let w = what_if(&s, 20, &small_config(0), &[60, 80], 0).unwrap();
    assert_eq!(w.before, w.after);
}

#[test]
fn what_if_shifts_endpoints() {
    let s = sample_pareto(0.5, 400, 72).unwrap();
    let w = what_if(&s, 20, &small_config(0), &[60, 80, 15], 20).unwrap();
    let ends: Vec<usize> = w.after.iter().map(|e| e.endpoint).collect();
    assert_eq!(ends, vec![40, 60, 0]);
    assert!(w.after[2].result.is_err());
    assert!(what_if(&s, 20, &small_config(0), &[60], 400).is_err());
}

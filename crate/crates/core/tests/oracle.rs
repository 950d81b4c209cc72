use hewe::model::{g, limit_cov};
use hewe::oracle::{cov_numeric, pareto_hewe_mean_exact, pareto_hewe_var_exact};
use hewe::process::hewe;
use hewe::simulator::sample_pareto;

/// Hand-summed harmonic expression for α=0.5, k=50, θ=δ=1.
#[test]
fn mean_by_direct_summation() {
    let expect = 2.0 / 50.0 * (51..=100).map(|j| 1.0 - 50.0 / j as f64).sum::<f64>();
    assert!((pareto_hewe_mean_exact(0.5, 50, 1.0, 1.0).unwrap() - expect).abs() < 1e-15);
}

#[test]
fn large_k_limits() {
    for (theta, delta) in [(1.0, 1.0), (2.5, 0.3), (0.5, 4.0)] {
        let k = 100_000;
        let mean = pareto_hewe_mean_exact(2.0, k, theta, delta).unwrap();
        let limit = g(theta, delta).unwrap() / 2.0;
        assert!(((mean - limit) / limit).abs() < 1e-3);
        let var = pareto_hewe_var_exact(2.0, k, theta, delta).unwrap();
        let cov = limit_cov(theta, theta, delta, 2.0, k).unwrap();
        assert!(((var - cov) / cov).abs() < 1e-3, "{var} vs {cov}");
    }
}

#[test]
fn quadrature_matches_closed_form() {
    for (t1, t2, d) in [(1.0, 2.0, 0.0), (0.3, 4.0, 2.0), (5.0, 5.0, 0.01), (1e-3, 2.0, 1.0)] {
        let a = cov_numeric(t1, t2, d).unwrap();
        let b = limit_cov(t1, t2, d, 1.0, 1).unwrap();
        assert!(((a - b) / b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn monte_carlo_mean_and_variance() {
    let (alpha, k, theta, delta) = (1.5, 20, 1.5, 0.5);
    let reps = 5000;
    let hs: Vec<f64> = (0..reps)
        .map(|r| hewe(&sample_pareto(alpha, 120, r).unwrap(), k, theta, delta).unwrap())
        .collect();
    let n = reps as f64;
    let mean = hs.iter().sum::<f64>() / n;
    let var = hs.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = hs.iter().map(|h| (h - mean).powi(4)).sum::<f64>() / n;
    let exact_mean = pareto_hewe_mean_exact(alpha, k, theta, delta).unwrap();
    let exact_var = pareto_hewe_var_exact(alpha, k, theta, delta).unwrap();
    assert!((mean - exact_mean).abs() < 3.0 * (var / n).sqrt());
    assert!((var - exact_var).abs() < 3.0 * ((m4 - var * var) / n).sqrt());
}

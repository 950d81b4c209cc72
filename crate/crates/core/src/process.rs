//! The Hill estimator without extremes (HEWE) evaluated on data, the
//! classical Hill curve, and the decorrelating T-transform.

use serde::Serialize;

use crate::error::{HeweError, Result};
use crate::sample::OrderedSample;

/// `⌊x⌋` with a small relative guard so products such as `(i/k)·k` land on
/// the integer they represent.
pub fn guarded_floor(x: f64) -> usize {
    if x <= 0.0 {
        return 0;
    }
    (x * (1.0 + 1e-9)).floor() as usize
}

/// Strictly increasing evaluation points `θ₁ < … < θₛ` tied to an
/// intermediate sequence value `k`. `θ₀ = 0` is implicit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaGrid {
    k: usize,
    thetas: Vec<f64>,
}

impl ThetaGrid {
    pub fn new(k: usize, thetas: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(HeweError::InvalidGrid("k must be positive".into()));
        }
        if thetas.is_empty() {
            return Err(HeweError::InvalidGrid("grid has no points".into()));
        }
        if thetas.iter().any(|t| !t.is_finite()) {
            return Err(HeweError::InvalidGrid("non-finite grid point".into()));
        }
        if thetas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HeweError::InvalidGrid("grid must be strictly increasing".into()));
        }
        if guarded_floor(thetas[0] * k as f64) < 1 {
            return Err(HeweError::InvalidGrid(format!(
                "first point {} is below 1/k = {}",
                thetas[0],
                1.0 / k as f64
            )));
        }
        Ok(Self { k, thetas })
    }

    /// Points `θᵢ = rᵢ/k` for consecutive ranks `first..=last`, the
    /// spacing used throughout estimation.
    pub fn from_ranks(k: usize, first: usize, last: usize) -> Result<Self> {
        if first == 0 || last < first {
            return Err(HeweError::InvalidGrid(format!("bad rank range {first}..={last}")));
        }
        let kf = k as f64;
        Self::new(k, (first..=last).map(|r| r as f64 / kf).collect())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    /// `θᵢ₋₁/θᵢ` for every i, with 0 for the first point.
    pub fn ratios(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let mut prev = 0.0;
        for &t in &self.thetas {
            out.push(prev / t);
            prev = t;
        }
        out
    }

    /// The first `s` points as a grid of their own.
    pub fn prefix(&self, s: usize) -> Result<Self> {
        if s == 0 || s > self.len() {
            return Err(HeweError::InvalidGrid(format!("prefix {s} of grid with {} points", self.len())));
        }
        Ok(Self { k: self.k, thetas: self.thetas[..s].to_vec() })
    }

    /// `θ·k` for each point, the x-axis used in plots.
    pub fn scaled(&self) -> Vec<f64> {
        let kf = self.k as f64;
        self.thetas.iter().map(|t| t * kf).collect()
    }
}

/// HEWE values on a grid for a fixed missing-extremes parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeweVector {
    pub grid: ThetaGrid,
    pub delta: f64,
    pub h: Vec<f64>,
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(HeweError::DomainError(format!("delta must be finite and >= 0, got {delta}")));
    }
    Ok(())
}

/// `H_{k,n}(θ; δ)`: mean of the logs of the order statistics ranked
/// `⌊δk⌋+1 ..= ⌊δk⌋+⌊θk⌋` minus the log of rank `⌊δk⌋+⌊θk⌋+1`.
/// Zero when `⌊θk⌋ = 0`.
pub fn hewe(sample: &OrderedSample, k: usize, theta: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if !theta.is_finite() {
        return Err(HeweError::DomainError(format!("theta must be finite, got {theta}")));
    }
    let kf = k as f64;
    let m = guarded_floor(theta * kf);
    if m == 0 {
        return Ok(0.0);
    }
    let d = guarded_floor(delta * kf);
    let logs = sample.logs();
    let needed = d + m + 1;
    if needed > logs.len() {
        return Err(HeweError::InsufficientData { needed, available: logs.len() });
    }
    let sum: f64 = logs[d..d + m].iter().sum();
    Ok(sum / m as f64 - logs[d + m])
}

/// Classical Hill estimates `H_n(k)` for `k = 1..=k_max`, as `(k, H_n(k))`.
pub fn hill_curve(sample: &OrderedSample, k_max: usize) -> Result<Vec<(usize, f64)>> {
    if k_max == 0 || k_max + 1 > sample.len() {
        return Err(HeweError::RankOutOfRange { rank: k_max, len: sample.len().saturating_sub(1) });
    }
    let logs = sample.logs();
    let mut sum = 0.0;
    let mut out = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        sum += logs[k - 1];
        out.push((k, sum / k as f64 - logs[k]));
    }
    Ok(out)
}

/// [`hewe`] at every grid point, sharing one running sum.
pub fn hewe_vector(sample: &OrderedSample, grid: &ThetaGrid, delta: f64) -> Result<HeweVector> {
    check_delta(delta)?;
    let kf = grid.k() as f64;
    let d = guarded_floor(delta * kf);
    let logs = sample.logs();
    let last_m = guarded_floor(grid.thetas()[grid.len() - 1] * kf);
    let needed = d + last_m + 1;
    if needed > logs.len() {
        return Err(HeweError::InsufficientData { needed, available: logs.len() });
    }
    let mut h = Vec::with_capacity(grid.len());
    let mut sum = 0.0;
    let mut summed = 0;
    for &theta in grid.thetas() {
        let m = guarded_floor(theta * kf);
        while summed < m {
            sum += logs[d + summed];
            summed += 1;
        }
        h.push(if m == 0 { 0.0 } else { sum / m as f64 - logs[d + m] });
    }
    Ok(HeweVector { grid: grid.clone(), delta, h })
}

/// Applies `Tᵢ = xᵢ − (θᵢ₋₁/θᵢ)·xᵢ₋₁` to any vector indexed by the grid.
pub fn t_transform_values(values: &[f64], grid: &ThetaGrid) -> Vec<f64> {
    let thetas = grid.thetas();
    let mut out = Vec::with_capacity(values.len());
    for (i, &x) in values.iter().enumerate() {
        if i == 0 {
            out.push(x);
        } else {
            out.push(x - thetas[i - 1] / thetas[i] * values[i - 1]);
        }
    }
    out
}

pub fn t_transform(hv: &HeweVector) -> Vec<f64> {
    t_transform_values(&hv.h, &hv.grid)
}

/// Forward substitution undoing [`t_transform`].
pub fn inverse_t_transform(t: &[f64], grid: &ThetaGrid) -> Result<Vec<f64>> {
    if t.len() != grid.len() {
        return Err(HeweError::InvalidGrid(format!(
            "vector of length {} on grid of {} points",
            t.len(),
            grid.len()
        )));
    }
    let thetas = grid.thetas();
    let mut h: Vec<f64> = Vec::with_capacity(t.len());
    for (i, &ti) in t.iter().enumerate() {
        let prev = if i == 0 { 0.0 } else { thetas[i - 1] / thetas[i] * h[i - 1] };
        h.push(ti + prev);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e_powers() -> OrderedSample {
        let e = std::f64::consts::E;
        OrderedSample::from_values(vec![e.powi(3), e.powi(2), e, 1.0]).unwrap()
    }

    #[test]
    fn hewe_hand_values() {
        let s = e_powers();
        assert!((hewe(&s, 2, 1.0, 0.0).unwrap() - 1.5).abs() < 1e-14);
        assert!((hewe(&s, 2, 1.0, 0.5).unwrap() - 1.5).abs() < 1e-14);
        assert_eq!(hewe(&s, 2, 0.4, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn hewe_insufficient() {
        let s = e_powers();
        assert_eq!(
            hewe(&s, 2, 1.0, 1.0).unwrap_err(),
            HeweError::InsufficientData { needed: 5, available: 4 }
        );
        assert!(matches!(hewe(&s, 2, 1.0, -0.1), Err(HeweError::DomainError(_))));
    }

    #[test]
    fn hill_hand_values() {
        let s = e_powers();
        let c = hill_curve(&s, 3).unwrap();
        assert!((c[0].1 - 1.0).abs() < 1e-14);
        assert!((c[1].1 - 1.5).abs() < 1e-14);
        assert!(matches!(hill_curve(&s, 4), Err(HeweError::RankOutOfRange { .. })));
        assert!(matches!(hill_curve(&s, 0), Err(HeweError::RankOutOfRange { .. })));
        let flat = OrderedSample::from_values(vec![2.5; 3]).unwrap();
        assert!(hill_curve(&flat, 2).unwrap().iter().all(|(_, h)| *h == 0.0));
    }

    #[test]
    fn floor_guard_hits_integers() {
        for k in 1..400usize {
            for r in 1..3 * k {
                let theta = r as f64 / k as f64;
                assert_eq!(guarded_floor(theta * k as f64), r, "k={k} r={r}");
            }
        }
        assert_eq!(guarded_floor(0.8), 0);
        assert_eq!(guarded_floor(1.9999), 1);
    }

    #[test]
    fn grid_validation() {
        assert!(ThetaGrid::new(2, vec![0.4, 1.0]).is_err());
        assert!(ThetaGrid::new(2, vec![1.0, 1.0]).is_err());
        assert!(ThetaGrid::new(2, vec![]).is_err());
        assert!(ThetaGrid::new(0, vec![1.0]).is_err());
        assert!(ThetaGrid::new(2, vec![0.5, f64::INFINITY]).is_err());
        let g = ThetaGrid::from_ranks(50, 5, 180).unwrap();
        assert_eq!(g.len(), 176);
        assert!((g.thetas()[0] - 5.0 / 50.0).abs() < 1e-15);
        assert!((g.thetas()[1] - g.thetas()[0] - 1.0 / 50.0).abs() < 1e-12);
    }

    #[test]
    fn single_point_grid() {
        let s = e_powers();
        let g = ThetaGrid::new(2, vec![1.0]).unwrap();
        let hv = hewe_vector(&s, &g, 0.0).unwrap();
        assert_eq!(hv.h, vec![hewe(&s, 2, 1.0, 0.0).unwrap()]);
        assert_eq!(t_transform(&hv), hv.h);
    }

    #[test]
    fn t_transform_hand_values() {
        let g = ThetaGrid::new(1, vec![1.0, 2.0, 3.0]).unwrap();
        let hv = HeweVector { grid: g.clone(), delta: 0.0, h: vec![1.0, 1.0, 1.0] };
        let t = t_transform(&hv);
        let want = [1.0, 0.5, 1.0 / 3.0];
        for (a, b) in t.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let h = inverse_t_transform(&want, &g).unwrap();
        for x in h {
            assert!((x - 1.0).abs() < 1e-15);
        }
        assert_eq!(inverse_t_transform(&[0.0; 3], &g).unwrap(), vec![0.0; 3]);
        assert!(inverse_t_transform(&[0.0; 2], &g).is_err());
    }

    fn pareto_like(n: usize, seed: u64) -> OrderedSample {
        // deterministic spread of values with heavy tail and some ties
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = ((x >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
            v.push((u.powf(-2.0) * 4.0).round() / 4.0 + 1.0);
        }
        OrderedSample::from_values(v).unwrap()
    }

    #[test]
    fn hill_matches_hewe_exactly() {
        let s = pareto_like(300, 3);
        let curve = hill_curve(&s, 250).unwrap();
        for (k, h) in curve {
            assert_eq!(h, hewe(&s, k, 1.0, 0.0).unwrap());
        }
    }

    #[test]
    fn integer_grid_is_hill_curve() {
        // δ = 0 and θᵢ = i/k reproduce H_n(i), checked against a brute-force sum
        let s = pareto_like(200, 9);
        let k = 37;
        let g = ThetaGrid::from_ranks(k, 1, 150).unwrap();
        let hv = hewe_vector(&s, &g, 0.0).unwrap();
        let v = s.values();
        for (i, h) in hv.h.iter().enumerate() {
            let m = i + 1;
            let brute = (0..m).map(|j| (v[j] / v[m]).ln()).sum::<f64>() / m as f64;
            assert!((h - brute).abs() < 1e-12 * brute.abs().max(1.0));
        }
    }

    #[test]
    fn paper_simulation_grid() {
        let g = ThetaGrid::from_ranks(50, 5, 180).unwrap();
        for (i, t) in g.thetas().iter().enumerate() {
            let expected = 5.0 / 50.0 + i as f64 / 50.0;
            assert!((t - expected).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn shift_rank_identity(seed in 0u64..1000, k in 1usize..40, theta in 0.0f64..3.0, delta in 0.0f64..3.0) {
            let s = pareto_like(200, seed);
            let d = guarded_floor(delta * k as f64);
            let lhs = hewe(&s, k, theta, delta);
            let rhs = s.remove_top(d).and_then(|r| hewe(&r, k, theta, 0.0));
            if let (Ok(a), Ok(b)) = (lhs, rhs) {
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn scale_invariance(seed in 0u64..1000, k in 1usize..30, theta in 0.05f64..3.0, delta in 0.0f64..2.0, c in 1e-3f64..1e3) {
            let s = pareto_like(150, seed);
            let scaled = OrderedSample::from_values(s.values().iter().map(|v| v * c).collect()).unwrap();
            if let (Ok(a), Ok(b)) = (hewe(&s, k, theta, delta), hewe(&scaled, k, theta, delta)) {
                prop_assert!((a - b).abs() <= 1e-11 * (1.0 + c.ln().abs()));
                prop_assert!(a >= 0.0);
            }
        }

        #[test]
        fn vector_matches_pointwise(seed in 0u64..500, k in 1usize..30, delta in 0.0f64..2.0, first in 1usize..10, len in 1usize..60) {
            let s = pareto_like(200, seed);
            let g = ThetaGrid::from_ranks(k, first, first + len - 1).unwrap();
            if let Ok(hv) = hewe_vector(&s, &g, delta) {
                for (h, &t) in hv.h.iter().zip(g.thetas()) {
                    prop_assert_eq!(*h, hewe(&s, k, t, delta).unwrap());
                }
            }
        }

        #[test]
        fn t_round_trip(h in proptest::collection::vec(-10.0f64..10.0, 1..40), k in 1usize..100) {
            let g = ThetaGrid::from_ranks(k, 1, h.len()).unwrap();
            let hv = HeweVector { grid: g.clone(), delta: 0.0, h: h.clone() };
            let back = inverse_t_transform(&t_transform(&hv), &g).unwrap();
            let scale = h.iter().fold(1.0f64, |a, b| a.max(b.abs()));
            for (a, b) in back.iter().zip(&h) {
                prop_assert!((a - b).abs() <= 1e-12 * scale);
            }
        }
    }
}

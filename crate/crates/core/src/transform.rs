//! The shrinking transform `g`, dummy-edge padding and the analytic
//! thresholds `phi`, `rho` and the final ratio of the two-branch algorithm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::StochasticGraph;
use crate::lpmatch::FEASIBILITY_EPS;

pub const DEFAULT_TAU: f64 = 0.8723;
pub const DEFAULT_LAMBDA: f64 = 0.1837;

/// Window around `x = sigma` inside which `g` returns its limit value.
pub const LIMIT_WINDOW: f64 = 1e-12;

const ONE_MINUS_INV_E: f64 = 0.632_120_558_828_557_7;

/// Degree cap `sigma`, heavy-edge threshold `tau` and branch threshold `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub sigma: f64,
    pub tau: f64,
    pub lambda: f64,
}

impl Default for TransformParams {
    fn default() -> Self {
        TransformParams { sigma: 1.0, tau: DEFAULT_TAU, lambda: DEFAULT_LAMBDA }
    }
}

impl TransformParams {
    pub fn new(sigma: f64, tau: f64, lambda: f64) -> Result<Self> {
        let params = TransformParams { sigma, tau, lambda };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return Err(Error::InvalidParameter("sigma must lie in (0,1]".into()));
        }
        if !(self.tau >= 0.75 && self.tau < 1.0) {
            return Err(Error::InvalidParameter("tau must lie in [0.75,1)".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter("lambda must lie in [0,1]".into()));
        }
        Ok(())
    }
}

/// `g(x, sigma) = (e^sigma - 1)(sigma - x) x / (sigma (e^sigma - e^x))`,
/// with the limit `1 - e^-sigma` at `x = sigma`.
pub fn g_transform(x: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::InvalidParameter("sigma must lie in (0,1]".into()));
    }
    if !(x >= 0.0 && x <= sigma + LIMIT_WINDOW) {
        return Err(Error::OutOfDomain { value: x, sigma });
    }
    Ok(g(x, sigma))
}

/// Unchecked `g`; `x` is clamped into `[0, sigma]`.
pub fn g(x: f64, sigma: f64) -> f64 {
    let x = x.clamp(0.0, sigma);
    (x * g_ratio(x, sigma)).min(x)
}

/// `g(x, sigma) / x`, equal to 1 at `x = 0` and `(1 - e^-sigma)/sigma` at
/// `x = sigma`. Written as `expm1(sigma) d / (sigma e^x expm1(d))` with
/// `d = sigma - x`, which avoids cancellation near both endpoints.
pub fn g_ratio(x: f64, sigma: f64) -> f64 {
    let d = sigma - x;
    if d < LIMIT_WINDOW {
        return -(-sigma).exp_m1() / sigma;
    }
    sigma.exp_m1() * d / (sigma * x.exp() * d.exp_m1())
}

/// Per-B-vertex slack `sigma - sum_{e at b} x_e` for every vertex with
/// positive slack. Degrees above `sigma` by at most the feasibility
/// tolerance are treated as tight.
pub fn dummy_slacks(graph: &StochasticGraph, x: &[f64], sigma: f64) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    for b in 0..graph.b_count() {
        let degree: f64 = graph.edges_at_b(b).iter().map(|&e| x[e]).sum();
        if degree > sigma + FEASIBILITY_EPS {
            return Err(Error::DegreeAboveSigma { vertex: b, degree, sigma });
        }
        let slack = sigma - degree;
        if slack > 0.0 {
            out.push((b, slack));
        }
    }
    Ok(out)
}

/// A graph padded with dummy edges and the matching extended `x`.
#[derive(Debug, Clone)]
pub struct Augmented {
    pub graph: StochasticGraph,
    pub x: Vec<f64>,
}

/// Pads every B vertex to fractional degree exactly `sigma` with one dummy
/// edge (w = 0, p = 1) to a fresh A vertex. Original ids are unchanged and
/// dummies follow them in B-index order.
pub fn add_dummy_edges(graph: &StochasticGraph, x: &[f64], sigma: f64) -> Result<Augmented> {
    let slacks = dummy_slacks(graph, x, sigma)?;
    let targets: Vec<usize> = slacks.iter().map(|&(b, _)| b).collect();
    let augmented = graph.with_dummies(&targets);
    let mut ext = x.to_vec();
    ext.extend(slacks.iter().map(|&(_, s)| s));
    Ok(Augmented { graph: augmented, x: ext })
}

/// `phi(tau)`: the least `x` in `[0, 1]` with `g(x, 1)/x <= tau`.
/// Returns 1 for `tau <= 1 - 1/e` and 0 for `tau >= 1`.
pub fn phi(tau: f64) -> f64 {
    if tau <= g_ratio(1.0, 1.0) {
        return 1.0;
    }
    if tau >= 1.0 {
        return 0.0;
    }
    // The ratio decreases strictly from 1 at x = 0.
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g_ratio(mid, 1.0) <= tau {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `h(x) = x - 1 + (1 - phi/tau)^(x/phi)`, whose largest root in `(0, 1]` is `rho(tau)`.
pub fn rho_gap(tau: f64, x: f64) -> f64 {
    rho_gap_with_phi(tau, phi(tau), x)
}

pub fn rho_gap_with_phi(tau: f64, phi: f64, x: f64) -> f64 {
    x - 1.0 + (1.0 - phi / tau).powf(x / phi)
}

/// `rho(tau)`: the largest `x` in `(0, 1]` with `x <= 1 - (1 - phi/tau)^(x/phi)`.
///
/// `h` is convex with `h(0) = 0` and `h'(0) < 0` for `tau < 1`, so it has a
/// single positive root. The root is bracketed from above on a 1e-3 grid and
/// refined by bisection.
pub fn rho(tau: f64) -> f64 {
    let ph = phi(tau);
    let h = |x: f64| rho_gap_with_phi(tau, ph, x);
    if h(1.0) <= 0.0 {
        return 1.0;
    }
    let mut hi: f64 = 1.0;
    let mut lo = hi;
    let step = 1e-3;
    while lo > 0.0 {
        lo = (hi - step).max(0.0);
        if h(lo) < 0.0 {
            break;
        }
        hi = lo;
    }
    if lo <= 0.0 && h(lo) >= 0.0 {
        return 0.0;
    }
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `(1 - e^-rho) / rho`, the per-edge guarantee of the single-round run at `sigma = rho`.
pub fn heavy_branch_factor(rho: f64) -> f64 {
    if rho <= 0.0 {
        return 1.0;
    }
    -(-rho).exp_m1() / rho
}

/// Guarantee of the two-round branch: `(1-1/e) + ((1-1/e)^3/4) lambda (1 - tau)`.
pub fn two_round_bound(tau: f64, lambda: f64) -> f64 {
    ONE_MINUS_INV_E + ONE_MINUS_INV_E.powi(3) / 4.0 * lambda * (1.0 - tau)
}

/// Guarantee of the heavy-edge branch: `heavy_branch_factor(rho(tau)) (1 - lambda)`.
pub fn heavy_bound(tau: f64, lambda: f64) -> f64 {
    heavy_branch_factor(rho(tau)) * (1.0 - lambda)
}

/// Approximation guarantee of the two-branch algorithm for `(tau, lambda)`.
pub fn final_ratio(tau: f64, lambda: f64) -> f64 {
    two_round_bound(tau, lambda).min(heavy_bound(tau, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const INV_E: f64 = 0.367_879_441_171_442_3;

    /// Direct formula, used only away from the singular endpoint.
    fn g_direct(x: f64, s: f64) -> f64 {
        (s.exp() - 1.0) * (s - x) * x / (s * (s.exp() - x.exp()))
    }

    #[test]
    fn g_examples() {
        assert_eq!(g_transform(0.0, 0.7).unwrap(), 0.0);
        assert!((g_transform(1.0, 1.0).unwrap() - (1.0 - INV_E)).abs() < 1e-15);
        assert!((g(0.74, 1.0) / 0.74 - 0.718).abs() < 5e-4);
        assert!((g(0.3172, 1.0) / 0.3172 - 0.872296).abs() < 1e-6);
        assert!((g(0.5, 1.0) - 0.401_632_7).abs() < 1e-7);
        assert!((g(0.1, 1.0) / 0.1 - 0.9587).abs() < 1e-4);
    }

    #[test]
    fn g_domain_errors() {
        assert!(matches!(g_transform(-0.1, 1.0), Err(Error::OutOfDomain { .. })));
        assert!(matches!(g_transform(0.6, 0.5), Err(Error::OutOfDomain { .. })));
        assert!(g_transform(0.5, 1.5).is_err());
    }

    #[test]
    fn g_limits() {
        for s in [0.05, 0.3, 1.0] {
            let r = g(1e-8, s) / 1e-8;
            assert!((1.0 - 1e-6..=1.0).contains(&r), "{r}");
            assert!((g(s - 1e-7, s) - (1.0 - (-s).exp())).abs() <= 1e-6);
            assert_eq!(g(s, s), -(-s).exp_m1());
        }
    }

    #[test]
    fn g_agrees_with_direct_formula() {
        for s in [0.1, 0.5, 1.0] {
            for i in 1..100 {
                let x = s * i as f64 / 100.0;
                assert!((g(x, s) - g_direct(x, s)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn params_validation() {
        assert!(TransformParams::new(1.0, DEFAULT_TAU, DEFAULT_LAMBDA).is_ok());
        let e = TransformParams::new(1.0, DEFAULT_TAU, 1.5).unwrap_err().to_string();
        assert_eq!(e, "lambda must lie in [0,1]");
        assert!(TransformParams::new(0.0, 0.8, 0.1).is_err());
        assert!(TransformParams::new(1.0, 0.7, 0.1).is_err());
        assert!(TransformParams::new(1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn dummy_padding() {
        let g1 = StochasticGraph::new(1, 1, &[(0, 0, 1.0, 1.0)]).unwrap();
        let aug = add_dummy_edges(&g1, &[1.0], 1.0).unwrap();
        assert_eq!(aug.graph.edge_count(), 1);

        let g2 = StochasticGraph::new(1, 1, &[(0, 0, 1.0, 0.5)]).unwrap();
        let aug = add_dummy_edges(&g2, &[0.3], 1.0).unwrap();
        assert_eq!(aug.graph.edge_count(), 2);
        let d = aug.graph.edge(1);
        assert!(d.is_dummy && d.w == 0.0 && d.p == 1.0 && d.a == 1 && d.b == 0);
        assert!((aug.x[1] - 0.7).abs() < 1e-15);
        assert_eq!(aug.graph.edge(0), g2.edge(0));

        assert!(matches!(add_dummy_edges(&g2, &[0.6], 0.5), Err(Error::DegreeAboveSigma { .. })));
        // Excess within tolerance is clamped.
        assert_eq!(add_dummy_edges(&g2, &[0.5 + 1e-10], 0.5).unwrap().graph.edge_count(), 1);
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi(1.0 - INV_E), 1.0);
        let p = phi(DEFAULT_TAU);
        assert!((0.31719..=0.3172).contains(&p), "{p}");
        assert!((p - 0.317_190_958).abs() < 1e-8);
        assert!(phi(0.75) <= 0.74);
        assert!((g_ratio(p, 1.0) - DEFAULT_TAU).abs() < 1e-7);
    }

    #[test]
    fn rho_examples() {
        let r = rho(DEFAULT_TAU);
        assert!(r <= 0.5303, "{r}");
        assert!((r - 0.530_256_156).abs() < 1e-8);
        assert!(rho_gap(DEFAULT_TAU, r).abs() <= 1e-7);
        assert!(rho_gap(DEFAULT_TAU, r + 1e-4) > 0.0);
        assert!(rho_gap(DEFAULT_TAU, 0.5303) > 0.0);
        for i in 0..=48 {
            let tau = 0.75 + 0.005 * i as f64;
            assert!(rho_gap(tau, 1.0) > 0.0);
            assert!(rho(tau) < 1.0);
        }
    }

    #[test]
    fn final_ratio_examples() {
        let f = final_ratio(DEFAULT_TAU, DEFAULT_LAMBDA);
        assert!(f >= 0.63353 - 1e-5, "{f}");
        assert!(f > 1.0 - INV_E + 0.0014);
        assert_eq!(final_ratio(0.9, 1.0), 0.0);
        assert!((final_ratio(DEFAULT_TAU, 0.0) - (1.0 - INV_E)).abs() < 1e-15);
        assert!(heavy_branch_factor(0.5303) > 0.7761);
    }

    proptest! {
        #[test]
        fn g_is_sandwiched(s in 0.01f64..=1.0, t in 0.0f64..=1.0) {
            let x = s * t;
            let v = g(x, s);
            prop_assert!(v >= 0.0 && v <= x + 1e-12);
        }

        #[test]
        fn g_ratio_decreases(s in 0.01f64..=1.0, t in 0.0f64..0.999, dt in 1e-3f64..1e-2) {
            let x1 = s * t;
            let x2 = (x1 + s * dt).min(s);
            prop_assert!(g_ratio(x2, s) < g_ratio(x1, s));
        }

        #[test]
        fn padding_reaches_sigma(xs in proptest::collection::vec(0.0f64..0.3, 1..6), s in 0.9f64..=1.0) {
            let edges: Vec<_> = (0..xs.len()).map(|a| (a, a % 2, 1.0, 1.0)).collect();
            let graph = StochasticGraph::new(xs.len(), 2, &edges).unwrap();
            let aug = add_dummy_edges(&graph, &xs, s).unwrap();
            for b in 0..2 {
                let d: f64 = aug.graph.edges_at_b(b).iter().map(|&e| aug.x[e]).sum();
                prop_assert!((d - s).abs() < 1e-12);
            }
        }
    }
}

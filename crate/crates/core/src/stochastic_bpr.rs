//! Travel-time moments for BPR links whose capacity is uniform on
//! `[θ·C̄, C̄]`, and their aggregation to routes under link independence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net_model::{Link, Network, RouteSet};

/// Below this distance from 1 the degradation degree is treated as exactly 1.
pub const THETA_LIMIT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BprParams {
    pub beta: f64,
    pub n: u32,
}

impl BprParams {
    pub fn new(beta: f64, n: u32) -> Result<Self> {
        let p = BprParams { beta, n };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::Domain(format!(
                "BPR beta must be positive, got {}",
                self.beta
            )));
        }
        if self.n < 2 {
            return Err(Error::Domain(format!(
                "BPR exponent must be >= 2, got {}",
                self.n
            )));
        }
        Ok(())
    }
}

impl Default for BprParams {
    fn default() -> Self {
        BprParams { beta: 0.15, n: 4 }
    }
}

/// `t0·[1 + β(v/C)ⁿ]` for a realised capacity `C`.
pub fn bpr_time(link: &Link, v: f64, capacity: f64, p: &BprParams) -> Result<f64> {
    if !(capacity > 0.0) {
        return Err(Error::Domain(format!(
            "capacity must be positive, got {capacity}"
        )));
    }
    Ok(link.t0 * (1.0 + p.beta * (v / capacity).powi(p.n as i32)))
}

/// `E[C^{-k}]` for `C ~ U(θC̄, C̄)`, i.e. `(1 − θ^{1−k}) / (C̄ᵏ(1−θ)(1−k))`.
fn inverse_capacity_moment(cap: f64, theta: f64, k: i32) -> f64 {
    if (1.0 - theta).abs() < THETA_LIMIT_EPS {
        return cap.powi(-k);
    }
    let kf = k as f64;
    (1.0 - theta.powi(1 - k)) / (cap.powi(k) * (1.0 - theta) * (1.0 - kf))
}

/// Expected link travel time.
pub fn link_mean(link: &Link, v: f64, p: &BprParams) -> f64 {
    debug_assert!(v >= 0.0, "negative link flow {v}");
    let n = p.n as i32;
    link.t0 + p.beta * link.t0 * v.powi(n) * inverse_capacity_moment(link.cap_design, link.theta, n)
}

/// Variance of the link travel time; zero for deterministic capacity.
pub fn link_var(link: &Link, v: f64, p: &BprParams) -> f64 {
    debug_assert!(v >= 0.0, "negative link flow {v}");
    if (1.0 - link.theta).abs() < THETA_LIMIT_EPS || v == 0.0 {
        return 0.0;
    }
    let n = p.n as i32;
    let m1 = inverse_capacity_moment(link.cap_design, link.theta, n);
    let m2 = inverse_capacity_moment(link.cap_design, link.theta, 2 * n);
    let scale = p.beta * link.t0 * v.powi(n);
    // Rounding can push the bracket a hair below zero for θ very close to 1.
    (scale * scale * (m2 - m1 * m1)).max(0.0)
}

/// Per-route mean and standard deviation of travel time.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteMoments {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// `μ_k = Σ_a E(T_a)δ_ak`, `σ_k = sqrt(Σ_a Var(T_a)δ_ak)`.
pub fn route_moments(
    net: &Network,
    rs: &RouteSet,
    v: &[f64],
    p: &BprParams,
) -> Result<RouteMoments> {
    if v.len() != net.links().len() {
        return Err(Error::Dimension {
            what: "link flow vector",
            expected: net.links().len(),
            got: v.len(),
        });
    }
    if let Some(x) = v.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::Domain(format!(
            "link flows must be nonnegative, got {x}"
        )));
    }
    let mut means = Vec::with_capacity(v.len());
    let mut vars = Vec::with_capacity(v.len());
    for (link, &va) in net.links().iter().zip(v) {
        means.push(link_mean(link, va, p));
        vars.push(link_var(link, va, p));
    }
    Ok(aggregate_route_moments(rs, &means, &vars))
}

pub(crate) fn aggregate_route_moments(rs: &RouteSet, means: &[f64], vars: &[f64]) -> RouteMoments {
    let mut mu = Vec::with_capacity(rs.len());
    let mut sigma = Vec::with_capacity(rs.len());
    for r in rs.routes() {
        mu.push(r.links.iter().map(|&a| means[a]).sum());
        sigma.push(r.links.iter().map(|&a| vars[a]).sum::<f64>().sqrt());
    }
    RouteMoments { mu, sigma }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net_model::{enumerate_routes, parse_network};

    fn link(t0: f64, cap: f64, theta: f64) -> Link {
        Link {
            id: 1,
            tail: 1,
            head: 2,
            t0,
            cap_design: cap,
            theta,
        }
    }

    /// Composite Simpson quadrature of `g(C)` against the U(θC̄, C̄) density.
    fn uniform_expectation(lo: f64, hi: f64, g: impl Fn(f64) -> f64) -> f64 {
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let mut s = g(lo) + g(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * g(lo + i as f64 * h);
        }
        s * h / 3.0 / (hi - lo)
    }

    #[test]
    fn bpr_examples() {
        let p = BprParams::default();
        let l = link(10.0, 1000.0, 1.0);
        assert_eq!(bpr_time(&l, 0.0, 1000.0, &p).unwrap(), 10.0);
        assert!((bpr_time(&l, 1000.0, 1000.0, &p).unwrap() - 11.5).abs() < 1e-12);
        assert!((bpr_time(&l, 2000.0, 1000.0, &p).unwrap() - 34.0).abs() < 1e-12);
        assert!(bpr_time(&l, 1.0, 0.0, &p).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(BprParams::new(0.15, 4).is_ok());
        assert!(BprParams::new(0.0, 4).is_err());
        assert!(BprParams::new(0.15, 1).is_err());
    }

    #[test]
    fn mean_at_zero_flow_is_free_flow() {
        let p = BprParams::default();
        assert_eq!(link_mean(&link(10.0, 1000.0, 0.8), 0.0, &p), 10.0);
        assert_eq!(link_var(&link(10.0, 1000.0, 0.8), 0.0, &p), 0.0);
    }

    #[test]
    fn theta_limit_recovers_plain_bpr() {
        let p = BprParams::default();
        let near = link(10.0, 1000.0, 1.0 - 1e-6);
        let m = link_mean(&near, 1000.0, &p);
        assert!(((m - 11.5) / 11.5).abs() < 1e-4, "{m}");
        let exact = link(10.0, 1000.0, 1.0);
        assert!((link_mean(&exact, 1000.0, &p) - 11.5).abs() < 1e-12);
        assert_eq!(link_var(&exact, 1000.0, &p), 0.0);
        assert!(link_var(&near, 1000.0, &p) < 1e-8);
    }

    #[test]
    fn closed_forms_match_quadrature() {
        let p = BprParams::default();
        for &(t0, cap, theta, v) in &[
            (10.0, 1000.0, 0.8, 1000.0),
            (4.0, 1500.0, 0.6, 2250.0),
            (30.0, 1000.0, 0.9, 500.0),
        ] {
            let l = link(t0, cap, theta);
            let t = |c: f64| t0 * (1.0 + 0.15 * (v / c).powi(4));
            let mean = uniform_expectation(theta * cap, cap, t);
            let second = uniform_expectation(theta * cap, cap, |c| t(c) * t(c));
            let var = second - mean * mean;
            assert!(
                (link_mean(&l, v, &p) - mean).abs() < 1e-9 * mean,
                "mean {mean}"
            );
            assert!(
                (link_var(&l, v, &p) - var).abs() < 1e-7 * var.max(1.0),
                "var {var}"
            );
        }
        let l = link(10.0, 1000.0, 0.8);
        assert!((link_mean(&l, 1000.0, &p) - 12.3828).abs() < 1e-3);
        assert!((link_var(&l, 1000.0, &p) - 0.3788).abs() < 1e-3);
    }

    #[test]
    fn degradation_never_helps() {
        let p = BprParams::default();
        for theta in [0.3, 0.6, 0.9, 0.99] {
            for v in [1.0, 300.0, 1000.0, 5000.0] {
                let l = link(7.0, 900.0, theta);
                assert!(link_mean(&l, v, &p) >= bpr_time(&l, v, 900.0, &p).unwrap());
                assert!(link_var(&l, v, &p) >= 0.0);
            }
        }
    }

    #[test]
    fn route_moment_aggregation() {
        let p = BprParams::default();
        let net =
            parse_network("[links]\n1 1 2 10 1000 0.8\n2 2 3 10 1000 0.8\n[od]\n1 2 1\n1 3 1\n")
                .unwrap();
        let rs = enumerate_routes(&net, 5, 5).unwrap();
        let v = [800.0, 800.0];
        let m = route_moments(&net, &rs, &v, &p).unwrap();
        let l = &net.links()[0];
        let (mean, var) = (link_mean(l, 800.0, &p), link_var(l, 800.0, &p));
        assert!((m.mu[0] - mean).abs() < 1e-12);
        assert!((m.sigma[0] - var.sqrt()).abs() < 1e-12);
        assert!((m.mu[1] - 2.0 * mean).abs() < 1e-12);
        assert!((m.sigma[1] - 2f64.sqrt() * var.sqrt()).abs() < 1e-12);

        assert!(route_moments(&net, &rs, &[1.0], &p).is_err());
        assert!(route_moments(&net, &rs, &[-1.0, 0.0], &p).is_err());
    }
}

//! Route-based equilibrium as a variational inequality and its
//! extra-gradient solution.
//!
//! The unknown is `u = (f, π)` on `Ω = R₊ᵐ × R₊ʷ` with
//!
//! ```text
//! F(u) = ( ψ(f) − Λᵀπ )
//!        ( Λf − Q     )
//! ```
//!
//! where `ψ` is the per-route risk index (CMTT by default), `Λ` the w × m
//! route-OD incidence and `Q` the OD demands. A solution satisfies the
//! Wardrop conditions: used routes share the minimum index value `π` of their
//! OD pair and unused routes cost at least as much.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net_model::{routes_by_od, Network, RouteSet};
use crate::risk_indices::{risk_coefficient, IndexKind, RiskProfile};
use crate::scenario::antt;
use crate::stochastic_bpr::{
    aggregate_route_moments, link_mean, link_var, BprParams, RouteMoments,
};

/// Ratio bound for the backtracking test `τ‖F(u) − F(ū)‖ ≤ ν‖u − ū‖`.
pub const LIPSCHITZ_RATIO: f64 = 0.9;

/// Default flow share of OD demand below which a route counts as unused.
pub const DEFAULT_USED_THRESHOLD: f64 = 1e-4;

const MIN_STEP: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial step; `None` uses `1 / (1 + ‖F(u₀)‖∞)`.
    pub step_init: Option<f64>,
    pub step_shrink: f64,
    pub step_grow: f64,
    /// Largest relative spread between a used route's cost and its OD minimum.
    pub gap_tol: f64,
    /// Largest per-OD demand residual relative to that OD's demand.
    pub demand_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-4,
            max_iter: 10_000,
            step_init: None,
            step_shrink: 0.5,
            step_grow: 1.1,
            gap_tol: 1e-4,
            demand_tol: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be positive".into()));
        }
        if let Some(s) = self.step_init {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!(
                    "step_init must be positive, got {s}"
                )));
            }
        }
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return Err(Error::Config(format!(
                "step_shrink must lie in (0, 1), got {}",
                self.step_shrink
            )));
        }
        if !(self.step_grow >= 1.0 && self.step_grow.is_finite()) {
            return Err(Error::Config(format!(
                "step_grow must be at least 1, got {}",
                self.step_grow
            )));
        }
        for (name, v) in [("gap_tol", self.gap_tol), ("demand_tol", self.demand_tol)] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Route flows and per-OD multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct VipState {
    pub f: Vec<f64>,
    pub pi: Vec<f64>,
}

impl VipState {
    fn to_vec(&self) -> Vec<f64> {
        let mut u = self.f.clone();
        u.extend_from_slice(&self.pi);
        u
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual: f64,
    pub antt: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub f_star: Vec<f64>,
    pub pi_star: Vec<f64>,
    /// Number of extra-gradient updates performed.
    pub iterations: usize,
    /// Natural residual of every visited iterate, starting with `u₀`.
    pub residual_history: Vec<f64>,
    pub log: Vec<IterationRecord>,
    pub final_residual: f64,
    pub converged: bool,
    pub cmtt_per_route: Vec<f64>,
    pub moments: RouteMoments,
    pub wardrop_gap: f64,
    pub antt: f64,
}

/// Route-cost evaluation at a flow vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteEval {
    pub v: Vec<f64>,
    pub moments: RouteMoments,
    pub psi: Vec<f64>,
}

/// A fixed network, route set, cost model and risk index.
#[derive(Debug, Clone)]
pub struct CmteProblem<'a> {
    net: &'a Network,
    rs: &'a RouteSet,
    bpr: BprParams,
    kind: IndexKind,
    profile: RiskProfile,
    coefficient: f64,
    demands: Vec<f64>,
}

impl<'a> CmteProblem<'a> {
    pub fn new(
        net: &'a Network,
        rs: &'a RouteSet,
        bpr: BprParams,
        kind: IndexKind,
        profile: RiskProfile,
    ) -> Result<Self> {
        bpr.validate()?;
        if rs.n_links() != net.links().len() || rs.n_ods() != net.od_pairs().len() {
            return Err(Error::Dimension {
                what: "route set vs network links",
                expected: net.links().len(),
                got: rs.n_links(),
            });
        }
        Ok(CmteProblem {
            net,
            rs,
            bpr,
            kind,
            profile,
            coefficient: risk_coefficient(kind, &profile),
            demands: net.demands(),
        })
    }

    pub fn network(&self) -> &Network {
        self.net
    }

    pub fn routes(&self) -> &RouteSet {
        self.rs
    }

    pub fn kind(&self) -> IndexKind {
        self.kind
    }

    pub fn profile(&self) -> RiskProfile {
        self.profile
    }

    /// The `c` in `ψ = μ + c·σ`.
    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    fn m(&self) -> usize {
        self.rs.len()
    }

    fn w(&self) -> usize {
        self.rs.n_ods()
    }

    pub fn evaluate(&self, f: &[f64]) -> Result<RouteEval> {
        if f.len() != self.m() {
            return Err(Error::Dimension {
                what: "route flow vector",
                expected: self.m(),
                got: f.len(),
            });
        }
        Ok(self.evaluate_unchecked(f))
    }

    fn evaluate_unchecked(&self, f: &[f64]) -> RouteEval {
        let mut v = vec![0.0; self.rs.n_links()];
        self.rs.link_flows_unchecked(f, &mut v);
        let links = self.net.links();
        let means: Vec<f64> = links
            .iter()
            .zip(&v)
            .map(|(l, &x)| link_mean(l, x, &self.bpr))
            .collect();
        let vars: Vec<f64> = links
            .iter()
            .zip(&v)
            .map(|(l, &x)| link_var(l, x, &self.bpr))
            .collect();
        let moments = aggregate_route_moments(self.rs, &means, &vars);
        let psi = moments
            .mu
            .iter()
            .zip(&moments.sigma)
            .map(|(mu, sigma)| mu + self.coefficient * sigma)
            .collect();
        RouteEval { v, moments, psi }
    }

    fn check_state(&self, state: &VipState) -> Result<()> {
        if state.f.len() != self.m() {
            return Err(Error::Dimension {
                what: "route flow vector",
                expected: self.m(),
                got: state.f.len(),
            });
        }
        if state.pi.len() != self.w() {
            return Err(Error::Dimension {
                what: "OD multiplier vector",
                expected: self.w(),
                got: state.pi.len(),
            });
        }
        Ok(())
    }

    /// `F(u)` as a vector of length `m + w`.
    pub fn assemble_f(&self, state: &VipState) -> Result<Vec<f64>> {
        self.check_state(state)?;
        Ok(self.operator(&state.to_vec()))
    }

    fn operator(&self, u: &[f64]) -> Vec<f64> {
        let m = self.m();
        let (f, pi) = u.split_at(m);
        // Clamp guards against evaluating BPR at dust-level negative flows.
        let f_pos: Vec<f64> = f.iter().map(|x| x.max(0.0)).collect();
        let eval = self.evaluate_unchecked(&f_pos);
        let mut out = Vec::with_capacity(m + self.w());
        for (k, r) in self.rs.routes().iter().enumerate() {
            out.push(eval.psi[k] - pi[r.od]);
        }
        let mut od_flow = vec![0.0; self.w()];
        for (r, fk) in self.rs.routes().iter().zip(f) {
            od_flow[r.od] += fk;
        }
        out.extend(od_flow.iter().zip(&self.demands).map(|(a, q)| a - q));
        out
    }

    /// `‖u − P(u − F(u))‖∞ / (1 + ‖u‖∞)`.
    pub fn natural_residual(&self, state: &VipState) -> Result<f64> {
        self.check_state(state)?;
        let u = state.to_vec();
        let fu = self.operator(&u);
        Ok(residual_of(&u, &fu))
    }

    /// Equal split of demand over each OD's routes, with each multiplier
    /// set to the OD's cheapest route cost at that split.
    pub fn initial_state(&self) -> VipState {
        let f = crate::net_model::equal_split(self.net, self.rs);
        self.state_from_flows(f)
    }

    fn state_from_flows(&self, f: Vec<f64>) -> VipState {
        let eval = self.evaluate_unchecked(&f);
        let mut pi = vec![f64::INFINITY; self.w()];
        for (k, r) in self.rs.routes().iter().enumerate() {
            pi[r.od] = pi[r.od].min(eval.psi[k]);
        }
        for p in &mut pi {
            if !p.is_finite() {
                *p = 0.0;
            }
        }
        VipState { f, pi }
    }

    /// Largest `(ψ_k − min ψ)/min ψ` over routes carrying more than
    /// `DEFAULT_USED_THRESHOLD` of their OD's demand.
    fn wardrop_gap(&self, f: &[f64], psi: &[f64]) -> f64 {
        let mut min_cost = vec![f64::INFINITY; self.w()];
        for (k, r) in self.rs.routes().iter().enumerate() {
            min_cost[r.od] = min_cost[r.od].min(psi[k]);
        }
        let mut gap: f64 = 0.0;
        for (k, r) in self.rs.routes().iter().enumerate() {
            if f[k] > DEFAULT_USED_THRESHOLD * self.demands[r.od] {
                gap = gap
                    .max((psi[k] - min_cost[r.od]) / min_cost[r.od].abs().max(f64::MIN_POSITIVE));
            }
        }
        gap
    }

    /// Largest `|Σ_{k∈w} f_k − q_w| / max(q_w, 1)`.
    fn demand_residual(&self, f: &[f64]) -> f64 {
        let mut od_flow = vec![0.0; self.w()];
        for (r, fk) in self.rs.routes().iter().zip(f) {
            od_flow[r.od] += fk;
        }
        od_flow
            .iter()
            .zip(&self.demands)
            .map(|(a, q)| (a - q).abs() / q.max(1.0))
            .fold(0.0, f64::max)
    }

    fn antt_at(&self, f: &[f64], eval: &RouteEval) -> f64 {
        antt(f, &eval.moments, self.net.total_demand()).unwrap_or(0.0)
    }

    /// Backtracking extra-gradient iteration from `f0` (equal split when `None`).
    pub fn solve(&self, cfg: &SolverConfig, f0: Option<&[f64]>) -> Result<EquilibriumResult> {
        cfg.validate()?;
        let m = self.m();
        let start = match f0 {
            Some(f) => {
                if f.len() != m {
                    return Err(Error::Dimension {
                        what: "initial route flows",
                        expected: m,
                        got: f.len(),
                    });
                }
                self.state_from_flows(project(f))
            }
            None => self.initial_state(),
        };

        let mut u = start.to_vec();
        let mut fu = self.operator(&u);
        let mut tau = cfg.step_init.unwrap_or_else(|| 1.0 / (1.0 + norm_inf(&fu)));

        let mut residual_history = Vec::new();
        let mut log = Vec::new();
        let mut iterations = 0;
        let converged = loop {
            let res = residual_of(&u, &fu);
            if !res.is_finite() || u.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numerical {
                    iteration: iterations,
                    message: format!("non-finite iterate or residual ({res})"),
                });
            }
            let eval = self.evaluate_unchecked(&u[..m]);
            residual_history.push(res);
            log.push(IterationRecord {
                iteration: iterations,
                residual: res,
                antt: self.antt_at(&u[..m], &eval),
                step: tau,
            });
            if res <= cfg.tol
                && self.wardrop_gap(&u[..m], &eval.psi) <= cfg.gap_tol
                && self.demand_residual(&u[..m]) <= cfg.demand_tol
            {
                break true;
            }
            if iterations >= cfg.max_iter {
                break false;
            }

            // Predictor with backtracking on the local Lipschitz estimate.
            let fu_bar = loop {
                let u_bar = project_step(&u, &fu, tau);
                let fu_bar = self.operator(&u_bar);
                let lhs = tau * dist2(&fu, &fu_bar);
                let rhs = LIPSCHITZ_RATIO * dist2(&u, &u_bar);
                if lhs <= rhs {
                    break fu_bar;
                }
                tau *= cfg.step_shrink;
                if tau < MIN_STEP {
                    return Err(Error::Numerical {
                        iteration: iterations,
                        message: format!("step size collapsed below {MIN_STEP:e}"),
                    });
                }
            };
            u = project_step(&u, &fu_bar, tau);
            fu = self.operator(&u);
            tau *= cfg.step_grow;
            iterations += 1;
        };

        let (f, pi) = u.split_at(m);
        let eval = self.evaluate_unchecked(f);
        let mut result = EquilibriumResult {
            f_star: f.to_vec(),
            pi_star: pi.to_vec(),
            iterations,
            final_residual: *residual_history.last().expect("at least one record"),
            residual_history,
            log,
            converged,
            wardrop_gap: 0.0,
            antt: self.antt_at(f, &eval),
            cmtt_per_route: eval.psi,
            moments: eval.moments,
        };
        result.wardrop_gap = self.wardrop_gap(&result.f_star, &result.cmtt_per_route);
        if converged {
            Ok(result)
        } else {
            Err(Error::NonConvergence(Box::new(result)))
        }
    }
}

fn residual_of(u: &[f64], fu: &[f64]) -> f64 {
    let num = u
        .iter()
        .zip(fu)
        .map(|(x, g)| (x - (x - g).max(0.0)).abs())
        .fold(0.0, f64::max);
    num / (1.0 + norm_inf(u))
}

fn project_step(u: &[f64], g: &[f64], tau: f64) -> Vec<f64> {
    u.iter()
        .zip(g)
        .map(|(x, gi)| (x - tau * gi).max(0.0))
        .collect()
}

fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean projection onto the nonnegative orthant.
pub fn project(u: &[f64]) -> Vec<f64> {
    u.iter().map(|x| x.max(0.0)).collect()
}

/// `F(u)` for the CMTT index.
pub fn assemble_f(
    state: &VipState,
    net: &Network,
    rs: &RouteSet,
    p: &BprParams,
    profile: &RiskProfile,
) -> Result<Vec<f64>> {
    CmteProblem::new(net, rs, *p, IndexKind::Cmtt, *profile)?.assemble_f(state)
}

/// Natural residual of `state` for the CMTT index.
pub fn natural_residual(
    state: &VipState,
    net: &Network,
    rs: &RouteSet,
    p: &BprParams,
    profile: &RiskProfile,
) -> Result<f64> {
    CmteProblem::new(net, rs, *p, IndexKind::Cmtt, *profile)?.natural_residual(state)
}

/// Solves the CMTT equilibrium with the extra-gradient method.
pub fn extragradient_solve(
    net: &Network,
    rs: &RouteSet,
    p: &BprParams,
    profile: &RiskProfile,
    cfg: &SolverConfig,
    f0: Option<&[f64]>,
) -> Result<EquilibriumResult> {
    extragradient_solve_with_index(net, rs, p, IndexKind::Cmtt, profile, cfg, f0)
}

/// Same as [`extragradient_solve`] with any index of the family as route cost.
pub fn extragradient_solve_with_index(
    net: &Network,
    rs: &RouteSet,
    p: &BprParams,
    kind: IndexKind,
    profile: &RiskProfile,
    cfg: &SolverConfig,
    f0: Option<&[f64]>,
) -> Result<EquilibriumResult> {
    CmteProblem::new(net, rs, *p, kind, *profile)?.solve(cfg, f0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdWardrop {
    pub od: usize,
    pub min_cost: f64,
    /// Largest `(ψ_k − min)/min` over used routes.
    pub max_used_deviation: f64,
    /// Smallest `(ψ_k − min)/min` over all routes; never below `-rel_tol` on a pass.
    pub min_deviation: f64,
    pub used_routes: Vec<usize>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WardropReport {
    pub ods: Vec<OdWardrop>,
    pub pass: bool,
}

impl WardropReport {
    pub fn max_used_deviation(&self) -> f64 {
        self.ods
            .iter()
            .map(|o| o.max_used_deviation)
            .fold(0.0, f64::max)
    }
}

/// Checks that used routes (flow above `used_threshold · q`) cost within
/// `rel_tol` of their OD's cheapest route.
pub fn wardrop_check(
    result: &EquilibriumResult,
    rs: &RouteSet,
    net: &Network,
    used_threshold: f64,
    rel_tol: f64,
) -> WardropReport {
    let psi = &result.cmtt_per_route;
    let mut ods = Vec::new();
    for (od, routes) in routes_by_od(rs) {
        let q = net.od_pairs()[od].demand;
        let min_cost = routes.iter().map(|&k| psi[k]).fold(f64::INFINITY, f64::min);
        let used: Vec<usize> = routes
            .iter()
            .copied()
            .filter(|&k| result.f_star[k] > used_threshold * q)
            .collect();
        let rel = |k: usize| (psi[k] - min_cost) / min_cost.abs().max(f64::MIN_POSITIVE);
        let max_used_deviation = used.iter().map(|&k| rel(k)).fold(0.0, f64::max);
        let min_deviation = routes.iter().map(|&k| rel(k)).fold(f64::INFINITY, f64::min);
        let pass = max_used_deviation <= rel_tol && min_deviation >= -rel_tol;
        ods.push(OdWardrop {
            od,
            min_cost,
            max_used_deviation,
            min_deviation,
            used_routes: used,
            pass,
        });
    }
    let pass = ods.iter().all(|o| o.pass);
    WardropReport { ods, pass }
}

//! Scenario configuration, parameter sweeps and result files.
//!
//! A scenario file is TOML:
//!
//! ```toml
//! alpha = 0.9
//! lambda_grid = [0.0, 0.5, 1.0]
//! demand_grid = [3000, 4000]   # total demand, pcu/h
//! theta_grid = [0.8]           # applied to every link
//!
//! [bpr]
//! beta = 0.15
//! n = 4
//!
//! [solver]
//! tol = 1e-4
//! max_iter = 10000
//!
//! [routes]                     # optional enumeration limits
//! max_per_od = 64
//! max_hops = 13
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{
    extragradient_solve, wardrop_check, EquilibriumResult, IterationRecord, SolverConfig,
    DEFAULT_USED_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::net_model::{build_route_set, LinkId, Network, RouteSet};
use crate::risk_indices::RiskProfile;
use crate::stochastic_bpr::{link_mean, BprParams, RouteMoments};

/// Relative tolerance of the Wardrop check applied to every sweep row.
pub const ROW_WARDROP_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouteLimits {
    pub max_per_od: usize,
    /// `None` allows paths as long as the number of links.
    pub max_hops: Option<usize>,
}

impl Default for RouteLimits {
    fn default() -> Self {
        RouteLimits {
            max_per_od: 64,
            max_hops: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub alpha: f64,
    pub lambda_grid: Vec<f64>,
    pub demand_grid: Vec<f64>,
    pub theta_grid: Vec<f64>,
    #[serde(default)]
    pub bpr: BprParams,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub routes: RouteLimits,
}

fn lambda_tenths() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

impl Default for Scenario {
    /// Demand sweep 3000..6000 pcu/h at Θ = 0.8, α = 0.9, λ ∈ {0, 0.1, …, 1}.
    fn default() -> Self {
        Scenario {
            alpha: 0.9,
            lambda_grid: lambda_tenths(),
            demand_grid: vec![3000.0, 4000.0, 5000.0, 6000.0],
            theta_grid: vec![0.8],
            bpr: BprParams::default(),
            solver: SolverConfig::default(),
            routes: RouteLimits::default(),
        }
    }
}

impl Scenario {
    pub const PRESETS: [&'static str; 4] =
        ["scenario1", "scenario2", "scenario2-extended", "scenario3"];

    /// Named presets: `scenario1` (single point), `scenario2` (Q ∈ {3000, 4000}),
    /// `scenario2-extended` (Q ∈ {3000, …, 6000}), `scenario3` (Θ ∈ {0.6, …, 0.9}).
    pub fn preset(name: &str) -> Result<Self> {
        let base = Scenario::default();
        match name {
            "scenario1" => Ok(Scenario {
                lambda_grid: vec![0.5],
                demand_grid: vec![4000.0],
                ..base
            }),
            "scenario2" => Ok(Scenario {
                demand_grid: vec![3000.0, 4000.0],
                ..base
            }),
            "scenario2-extended" => Ok(base),
            "scenario3" => Ok(Scenario {
                demand_grid: vec![4000.0],
                theta_grid: vec![0.6, 0.7, 0.8, 0.9],
                solver: SolverConfig {
                    max_iter: 100_000,
                    ..base.solver
                },
                ..base
            }),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected one of {:?})",
                Self::PRESETS
            ))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        for (name, grid) in [
            ("lambda_grid", &self.lambda_grid),
            ("demand_grid", &self.demand_grid),
            ("theta_grid", &self.theta_grid),
        ] {
            if grid.is_empty() {
                return Err(Error::Config(format!("{name} must not be empty")));
            }
        }
        for &lambda in &self.lambda_grid {
            RiskProfile::new(self.alpha, lambda).map_err(cfg)?;
        }
        for &q in &self.demand_grid {
            if !(q.is_finite() && q > 0.0) {
                return Err(Error::Config(format!(
                    "demand values must be positive, got {q}"
                )));
            }
        }
        for &theta in &self.theta_grid {
            if !(theta > 0.0 && theta <= 1.0) {
                return Err(Error::Config(format!(
                    "theta values must lie in (0, 1], got {theta}"
                )));
            }
        }
        self.bpr.validate().map_err(cfg)?;
        self.solver.validate()?;
        if self.routes.max_per_od == 0 || self.routes.max_hops == Some(0) {
            return Err(Error::Config("route limits must be positive".into()));
        }
        Ok(())
    }

    pub fn n_points(&self) -> usize {
        self.lambda_grid.len() * self.demand_grid.len() * self.theta_grid.len()
    }
}

/// Flow-weighted mean route travel time `Σ f_k μ_k / Σ q`.
pub fn antt(f: &[f64], moments: &RouteMoments, total_demand: f64) -> Result<f64> {
    if !(total_demand > 0.0) {
        return Err(Error::Domain(format!(
            "total demand must be positive, got {total_demand}"
        )));
    }
    if f.len() != moments.mu.len() {
        return Err(Error::Dimension {
            what: "route flow vector",
            expected: moments.mu.len(),
            got: f.len(),
        });
    }
    Ok(f.iter().zip(&moments.mu).map(|(f, mu)| f * mu).sum::<f64>() / total_demand)
}

/// The same average computed over links, `Σ v_a E(T_a) / Σ q`.
pub fn antt_link_form(v: &[f64], net: &Network, p: &BprParams) -> Result<f64> {
    let total = net.total_demand();
    if !(total > 0.0) {
        return Err(Error::Domain(format!(
            "total demand must be positive, got {total}"
        )));
    }
    if v.len() != net.links().len() {
        return Err(Error::Dimension {
            what: "link flow vector",
            expected: net.links().len(),
            got: v.len(),
        });
    }
    Ok(net
        .links()
        .iter()
        .zip(v)
        .map(|(l, &va)| va * link_mean(l, va, p))
        .sum::<f64>()
        / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Converged,
    MaxIter,
    Failed,
}

impl RowStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RowStatus::Converged => "converged",
            RowStatus::MaxIter => "max_iter",
            RowStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub demand: f64,
    pub theta: f64,
    pub status: RowStatus,
    pub message: Option<String>,
    pub antt: f64,
    pub antt_link: f64,
    pub iterations: usize,
    pub residual: f64,
    pub wardrop_gap: f64,
    pub wardrop_pass: bool,
    pub flows: Vec<f64>,
    pub costs: Vec<f64>,
    pub log: Vec<IterationRecord>,
}

impl SweepRow {
    pub fn ok(&self) -> bool {
        self.status == RowStatus::Converged
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub alpha: f64,
    pub routes: Vec<Vec<LinkId>>,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(SweepRow::ok)
    }

    /// ANTT-vs-λ series, one per `(Q, Θ)` combination, in grid order.
    pub fn series(&self) -> Vec<Series> {
        let mut out: Vec<Series> = Vec::new();
        for row in &self.rows {
            match out
                .iter_mut()
                .find(|s| s.demand == row.demand && s.theta == row.theta)
            {
                Some(s) => s.points.push((row.lambda, row.antt)),
                None => out.push(Series {
                    demand: row.demand,
                    theta: row.theta,
                    points: vec![(row.lambda, row.antt)],
                }),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub demand: f64,
    pub theta: f64,
    /// `(λ, ANTT)` pairs.
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn label(&self) -> String {
        format!("Q={};theta={}", self.demand, self.theta)
    }
}

/// Route set used for every point of a sweep on `net`.
pub fn scenario_routes(net: &Network, sc: &Scenario) -> Result<RouteSet> {
    let hops = sc.routes.max_hops.unwrap_or(net.links().len());
    build_route_set(net, sc.routes.max_per_od, hops)
}

#[allow(clippy::too_many_arguments)]
fn row_from_result(
    lambda: f64,
    demand: f64,
    theta: f64,
    status: RowStatus,
    res: &EquilibriumResult,
    net: &Network,
    rs: &RouteSet,
    sc: &Scenario,
) -> SweepRow {
    let v = crate::net_model::link_flows(rs, &res.f_star).expect("route set dimensions");
    let antt_link = antt_link_form(&v, net, &sc.bpr).unwrap_or(f64::NAN);
    let report = wardrop_check(res, rs, net, DEFAULT_USED_THRESHOLD, ROW_WARDROP_TOL);
    let mut status = status;
    let mut message = None;
    let scale = res.antt.abs().max(1.0);
    if (res.antt - antt_link).abs() > 1e-9 * scale {
        status = RowStatus::Failed;
        message = Some(format!("ANTT forms disagree: {} vs {antt_link}", res.antt));
    }
    SweepRow {
        lambda,
        demand,
        theta,
        status,
        message,
        antt: res.antt,
        antt_link,
        iterations: res.iterations,
        residual: res.final_residual,
        wardrop_gap: res.wardrop_gap,
        wardrop_pass: report.pass,
        flows: res.f_star.clone(),
        costs: res.cmtt_per_route.clone(),
        log: res.log.clone(),
    }
}

fn solve_point(
    base: &Network,
    rs: &RouteSet,
    sc: &Scenario,
    (demand, theta, lambda): (f64, f64, f64),
) -> SweepRow {
    let failed = |msg: String| SweepRow {
        lambda,
        demand,
        theta,
        status: RowStatus::Failed,
        message: Some(msg),
        antt: f64::NAN,
        antt_link: f64::NAN,
        iterations: 0,
        residual: f64::NAN,
        wardrop_gap: f64::NAN,
        wardrop_pass: false,
        flows: vec![f64::NAN; rs.len()],
        costs: vec![f64::NAN; rs.len()],
        log: Vec::new(),
    };
    let net = match base
        .with_total_demand(demand)
        .and_then(|n| n.with_uniform_theta(theta))
    {
        Ok(n) => n,
        Err(e) => return failed(e.to_string()),
    };
    let profile = match RiskProfile::new(sc.alpha, lambda) {
        Ok(p) => p,
        Err(e) => return failed(e.to_string()),
    };
    match extragradient_solve(&net, rs, &sc.bpr, &profile, &sc.solver, None) {
        Ok(res) => row_from_result(
            lambda,
            demand,
            theta,
            RowStatus::Converged,
            &res,
            &net,
            rs,
            sc,
        ),
        Err(Error::NonConvergence(res)) => row_from_result(
            lambda,
            demand,
            theta,
            RowStatus::MaxIter,
            &res,
            &net,
            rs,
            sc,
        ),
        Err(e) => failed(e.to_string()),
    }
}

/// Solves every `(Q, Θ, λ)` grid point. Points run in parallel; rows come
/// back in grid order (demand outermost, λ innermost).
pub fn run_scenario(net: &Network, sc: &Scenario) -> Result<SweepResult> {
    sc.validate()?;
    if !(net.total_demand() > 0.0) {
        return Err(Error::Config("network has zero total demand".into()));
    }
    let rs = scenario_routes(net, sc).map_err(|e| Error::Config(e.to_string()))?;
    let mut points = Vec::with_capacity(sc.n_points());
    for &q in &sc.demand_grid {
        for &theta in &sc.theta_grid {
            for &lambda in &sc.lambda_grid {
                points.push((q, theta, lambda));
            }
        }
    }
    let rows = points
        .par_iter()
        .map(|&pt| solve_point(net, &rs, sc, pt))
        .collect();
    Ok(SweepResult {
        alpha: sc.alpha,
        routes: (0..rs.len()).map(|k| rs.link_ids(net, k)).collect(),
        rows,
    })
}

fn join_ids(ids: &[LinkId]) -> String {
    ids.iter()
        .map(|id| id.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `results.csv`, `routes.csv`, `antt_vs_lambda.csv` and one
/// `convergence/point_NNN.csv` per grid point. All files are comma separated
/// with a header row. Returns the written paths.
pub fn emit_results(res: &SweepResult, dest: &Path) -> Result<Vec<PathBuf>> {
    let conv_dir = dest.join("convergence");
    std::fs::create_dir_all(&conv_dir).map_err(|e| Error::io(&conv_dir, e))?;
    let mut written = Vec::new();
    let m = res.routes.len();

    let mut routes = String::from("route,links\n");
    for (k, ids) in res.routes.iter().enumerate() {
        writeln!(routes, "{k},{}", join_ids(ids)).unwrap();
    }
    let path = dest.join("routes.csv");
    write_file(&path, &routes)?;
    written.push(path);

    let mut table = String::from(
        "point,alpha,lambda,demand,theta,status,iterations,residual,antt,antt_link,wardrop_gap,wardrop_pass",
    );
    for k in 0..m {
        write!(table, ",flow_{k}").unwrap();
    }
    for k in 0..m {
        write!(table, ",cost_{k}").unwrap();
    }
    table.push('\n');
    for (i, row) in res.rows.iter().enumerate() {
        write!(
            table,
            "{i},{},{},{},{},{},{},{:e},{},{},{:e},{}",
            res.alpha,
            row.lambda,
            row.demand,
            row.theta,
            row.status.as_str(),
            row.iterations,
            row.residual,
            row.antt,
            row.antt_link,
            row.wardrop_gap,
            row.wardrop_pass
        )
        .unwrap();
        for x in row.flows.iter().chain(&row.costs) {
            write!(table, ",{x}").unwrap();
        }
        table.push('\n');

        let mut log = String::from("iteration,residual,antt,step\n");
        for r in &row.log {
            writeln!(
                log,
                "{},{:e},{},{:e}",
                r.iteration, r.residual, r.antt, r.step
            )
            .unwrap();
        }
        let path = conv_dir.join(format!("point_{i:03}.csv"));
        write_file(&path, &log)?;
        written.push(path);
    }
    let path = dest.join("results.csv");
    write_file(&path, &table)?;
    written.push(path);

    let series = res.series();
    let mut lambdas: Vec<f64> = Vec::new();
    for row in &res.rows {
        if !lambdas.contains(&row.lambda) {
            lambdas.push(row.lambda);
        }
    }
    let mut plot = String::from("lambda");
    for s in &series {
        write!(plot, ",{}", s.label()).unwrap();
    }
    plot.push('\n');
    for &lambda in &lambdas {
        write!(plot, "{lambda}").unwrap();
        for s in &series {
            match s.points.iter().find(|(l, _)| *l == lambda) {
                Some((_, a)) => write!(plot, ",{a}").unwrap(),
                None => plot.push(','),
            }
        }
        plot.push('\n');
    }
    let path = dest.join("antt_vs_lambda.csv");
    write_file(&path, &plot)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net_model::{enumerate_routes, link_flows, parse_network};
    use crate::stochastic_bpr::route_moments;

    #[test]
    fn antt_examples() {
        let moments = RouteMoments {
            mu: vec![12.0],
            sigma: vec![1.0],
        };
        assert_eq!(antt(&[300.0], &moments, 300.0).unwrap(), 12.0);
        let moments = RouteMoments {
            mu: vec![10.0, 20.0],
            sigma: vec![0.0, 0.0],
        };
        assert_eq!(antt(&[50.0, 50.0], &moments, 100.0).unwrap(), 15.0);
        assert!(antt(&[50.0, 50.0], &moments, 0.0).is_err());
        assert!(antt(&[50.0], &moments, 10.0).is_err());
    }

    #[test]
    fn antt_route_and_link_forms_agree() {
        let net = Network::standin();
        let rs = enumerate_routes(&net, 6, 13).unwrap();
        let p = BprParams::default();
        let f = [900.0, 700.0, 400.0, 1000.0, 600.0, 400.0];
        let v = link_flows(&rs, &f).unwrap();
        let m = route_moments(&net, &rs, &v, &p).unwrap();
        let a = antt(&f, &m, net.total_demand()).unwrap();
        let b = antt_link_form(&v, &net, &p).unwrap();
        assert!((a - b).abs() < 1e-10 * a);
    }

    #[test]
    fn presets_have_table_sizes() {
        assert_eq!(Scenario::preset("scenario1").unwrap().n_points(), 1);
        assert_eq!(Scenario::preset("scenario2").unwrap().n_points(), 22);
        assert_eq!(Scenario::preset("scenario3").unwrap().n_points(), 44);
        assert_eq!(
            Scenario::preset("scenario2-extended").unwrap().n_points(),
            44
        );
        assert!(Scenario::preset("nope").is_err());
    }

    #[test]
    fn toml_round_trip_and_defaults() {
        let sc = Scenario::preset("scenario3").unwrap();
        assert_eq!(Scenario::from_toml(&sc.to_toml()).unwrap(), sc);

        let sc = Scenario::from_toml(
            "alpha = 0.9\nlambda_grid = [0.5]\ndemand_grid = [4000]\ntheta_grid = [0.8]\n",
        )
        .unwrap();
        assert_eq!(sc.bpr, BprParams::default());
        assert_eq!(sc.solver, SolverConfig::default());
    }

    #[test]
    fn config_errors() {
        let empty = "alpha = 0.9\nlambda_grid = []\ndemand_grid = [4000]\ntheta_grid = [0.8]\n";
        assert!(matches!(Scenario::from_toml(empty), Err(Error::Config(_))));
        let bad_alpha =
            "alpha = 1.0\nlambda_grid = [0.5]\ndemand_grid = [4000]\ntheta_grid = [0.8]\n";
        assert!(matches!(
            Scenario::from_toml(bad_alpha),
            Err(Error::Config(_))
        ));
        let bad_theta =
            "alpha = 0.9\nlambda_grid = [0.5]\ndemand_grid = [4000]\ntheta_grid = [0]\n";
        assert!(matches!(
            Scenario::from_toml(bad_theta),
            Err(Error::Config(_))
        ));
        let unknown =
            "alpha = 0.9\nlambda_grid = [0.5]\ndemand_grid = [1]\ntheta_grid = [1]\nfoo = 1\n";
        assert!(matches!(
            Scenario::from_toml(unknown),
            Err(Error::Config(_))
        ));

        let net = Network::standin();
        let mut sc = Scenario::preset("scenario1").unwrap();
        sc.lambda_grid.clear();
        assert!(matches!(run_scenario(&net, &sc), Err(Error::Config(_))));
    }

    #[test]
    fn sweep_rows_follow_grid_order() {
        let net = parse_network("[links]\n1 1 2 10 1000 0.8\n2 1 2 12 1200 0.9\n[od]\n1 2 1000\n")
            .unwrap();
        let sc = Scenario {
            lambda_grid: vec![0.0, 1.0],
            demand_grid: vec![1000.0, 2000.0],
            theta_grid: vec![0.7],
            ..Scenario::default()
        };
        let res = run_scenario(&net, &sc).unwrap();
        assert_eq!(res.rows.len(), 4);
        let keys: Vec<(f64, f64)> = res.rows.iter().map(|r| (r.demand, r.lambda)).collect();
        assert_eq!(
            keys,
            vec![(1000.0, 0.0), (1000.0, 1.0), (2000.0, 0.0), (2000.0, 1.0)]
        );
        assert!(res.all_converged());
        for row in &res.rows {
            assert!(row.wardrop_pass);
            assert!((row.flows.iter().sum::<f64>() - row.demand).abs() < 1.0);
        }
        assert_eq!(res.series().len(), 2);
    }
}

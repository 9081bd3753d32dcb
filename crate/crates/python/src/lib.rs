//! Python bindings: networks, route enumeration, risk indices, stochastic
//! link moments, single-point solves and scenario sweeps.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cmte::equilibrium::{extragradient_solve_with_index, EquilibriumResult, SolverConfig};
use cmte::mc_oracle::McConfig;
use cmte::net_model::{self, Link};
use cmte::risk_indices::{self, IndexKind, RiskProfile};
use cmte::scenario::{self, Scenario};
use cmte::stochastic_bpr::{self, BprParams};
use cmte::Error;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io { .. } => PyOSError::new_err(err.to_string()),
        Error::NonConvergence(_) | Error::Numerical { .. } => {
            PyRuntimeError::new_err(err.to_string())
        }
        _ => PyValueError::new_err(err.to_string()),
    }
}

/// A road network with links, OD demands and optional explicit routes.
#[pyclass(name = "Network", frozen, skip_from_py_object)]
struct PyNetwork {
    inner: net_model::Network,
}

#[pymethods]
impl PyNetwork {
    /// Parses a network from the text format.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        let inner = net_model::parse_network(text).map_err(to_py)?;
        Ok(PyNetwork { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = net_model::load_network(path).map_err(to_py)?;
        Ok(PyNetwork { inner })
    }

    /// The bundled 10-node stand-in network (demand 4000 pcu/h, θ = 0.8).
    #[staticmethod]
    fn standin() -> Self {
        PyNetwork {
            inner: net_model::Network::standin(),
        }
    }

    /// Three parallel links between nodes 1 and 2 with 1000 pcu/h demand.
    #[staticmethod]
    fn toy_three_route() -> Self {
        PyNetwork {
            inner: net_model::Network::toy_three_route(),
        }
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.nodes().len()
    }

    #[getter]
    fn n_links(&self) -> usize {
        self.inner.links().len()
    }

    #[getter]
    fn total_demand(&self) -> f64 {
        self.inner.total_demand()
    }

    /// `(id, tail, head, t0, cap_design, theta)` per link.
    fn links(&self) -> Vec<(u32, u32, u32, f64, f64, f64)> {
        self.inner
            .links()
            .iter()
            .map(|l| (l.id, l.tail, l.head, l.t0, l.cap_design, l.theta))
            .collect()
    }

    fn with_uniform_theta(&self, theta: f64) -> PyResult<Self> {
        let inner = self.inner.with_uniform_theta(theta).map_err(to_py)?;
        Ok(PyNetwork { inner })
    }

    fn with_total_demand(&self, total: f64) -> PyResult<Self> {
        let inner = self.inner.with_total_demand(total).map_err(to_py)?;
        Ok(PyNetwork { inner })
    }

    /// Route link-id sequences, explicit routes if the file declares them.
    #[pyo3(signature = (max_per_od = 64, max_hops = None))]
    fn routes(&self, max_per_od: usize, max_hops: Option<usize>) -> PyResult<Vec<Vec<u32>>> {
        let rs = route_set(&self.inner, max_per_od, max_hops)?;
        Ok((0..rs.len()).map(|k| rs.link_ids(&self.inner, k)).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(nodes={}, links={}, od_pairs={}, demand={})",
            self.inner.nodes().len(),
            self.inner.links().len(),
            self.inner.od_pairs().len(),
            self.inner.total_demand()
        )
    }
}

fn route_set(
    net: &net_model::Network,
    max_per_od: usize,
    max_hops: Option<usize>,
) -> PyResult<net_model::RouteSet> {
    let hops = max_hops.unwrap_or(net.links().len());
    net_model::build_route_set(net, max_per_od, hops).map_err(to_py)
}

#[pyfunction]
fn ttb(mu: f64, sigma: f64, alpha: f64) -> PyResult<f64> {
    risk_indices::ttb(mu, sigma, alpha).map_err(to_py)
}

#[pyfunction]
fn mbtt(mu: f64, sigma: f64, alpha: f64) -> PyResult<f64> {
    risk_indices::mbtt(mu, sigma, alpha).map_err(to_py)
}

#[pyfunction]
fn mett(mu: f64, sigma: f64, alpha: f64) -> PyResult<f64> {
    risk_indices::mett(mu, sigma, alpha).map_err(to_py)
}

/// Combined-mean travel time with optimism weight `lam`.
#[pyfunction]
fn cmtt(mu: f64, sigma: f64, alpha: f64, lam: f64) -> PyResult<f64> {
    let profile = RiskProfile::new(alpha, lam).map_err(to_py)?;
    risk_indices::cmtt(mu, sigma, &profile).map_err(to_py)
}

#[pyfunction]
fn std_normal_quantile(p: f64) -> PyResult<f64> {
    risk_indices::std_normal_quantile(p).map_err(to_py)
}

fn bpr(beta: f64, n: u32) -> PyResult<BprParams> {
    BprParams::new(beta, n).map_err(to_py)
}

fn single_link(t0: f64, cap: f64, theta: f64) -> PyResult<Link> {
    let link = Link {
        id: 1,
        tail: 1,
        head: 2,
        t0,
        cap_design: cap,
        theta,
    };
    link.validate().map_err(to_py)?;
    Ok(link)
}

/// `(mean, variance)` of a link's travel time under uniform capacity degradation.
#[pyfunction]
#[pyo3(signature = (t0, cap, theta, v, beta = 0.15, n = 4))]
fn link_moments(t0: f64, cap: f64, theta: f64, v: f64, beta: f64, n: u32) -> PyResult<(f64, f64)> {
    let p = bpr(beta, n)?;
    let link = single_link(t0, cap, theta)?;
    if !(v.is_finite() && v >= 0.0) {
        return Err(PyValueError::new_err(format!(
            "flow must be nonnegative, got {v}"
        )));
    }
    Ok((
        stochastic_bpr::link_mean(&link, v, &p),
        stochastic_bpr::link_var(&link, v, &p),
    ))
}

/// Monte-Carlo estimates of the below-percentile and excess means of N(μ, σ²).
#[pyfunction]
#[pyo3(signature = (mu, sigma, alpha, samples = 1_000_000, seed = 0))]
fn mc_tail_means<'py>(
    py: Python<'py>,
    mu: f64,
    sigma: f64,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = McConfig::new(samples, seed).map_err(to_py)?;
    let est = cmte::mc_oracle::mc_tail_means(mu, sigma, alpha, &cfg).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("below_mean", est.below_mean)?;
    d.set_item("below_se", est.below_se)?;
    d.set_item("excess_mean", est.excess_mean)?;
    d.set_item("excess_se", est.excess_se)?;
    d.set_item("percentile", est.percentile)?;
    d.set_item("percentile_se", est.percentile_se)?;
    Ok(d)
}

fn result_dict<'py>(
    py: Python<'py>,
    res: &EquilibriumResult,
    routes: Vec<Vec<u32>>,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("converged", res.converged)?;
    d.set_item("iterations", res.iterations)?;
    d.set_item("residual", res.final_residual)?;
    d.set_item("antt", res.antt)?;
    d.set_item("wardrop_gap", res.wardrop_gap)?;
    d.set_item("flows", res.f_star.clone())?;
    d.set_item("costs", res.cmtt_per_route.clone())?;
    d.set_item("od_costs", res.pi_star.clone())?;
    d.set_item("mu", res.moments.mu.clone())?;
    d.set_item("sigma", res.moments.sigma.clone())?;
    d.set_item("routes", routes)?;
    Ok(d)
}

/// Solves one equilibrium. A run that hits `max_iter` returns its last iterate
/// with `converged = False`.
#[pyfunction]
#[pyo3(signature = (network, alpha = 0.9, lam = 0.5, index = "cmtt", max_iter = 10_000, tol = 1e-4, beta = 0.15, n = 4))]
#[allow(clippy::too_many_arguments)]
fn solve<'py>(
    py: Python<'py>,
    network: &PyNetwork,
    alpha: f64,
    lam: f64,
    index: &str,
    max_iter: usize,
    tol: f64,
    beta: f64,
    n: u32,
) -> PyResult<Bound<'py, PyDict>> {
    let kind: IndexKind = index.parse().map_err(to_py)?;
    let profile = RiskProfile::new(alpha, lam).map_err(to_py)?;
    let p = bpr(beta, n)?;
    let cfg = SolverConfig {
        max_iter,
        tol,
        ..SolverConfig::default()
    };
    let net = &network.inner;
    let rs = route_set(net, 64, None)?;
    let routes = (0..rs.len()).map(|k| rs.link_ids(net, k)).collect();
    match extragradient_solve_with_index(net, &rs, &p, kind, &profile, &cfg, None) {
        Ok(res) => result_dict(py, &res, routes),
        Err(Error::NonConvergence(res)) => result_dict(py, &res, routes),
        Err(e) => Err(to_py(e)),
    }
}

/// Runs a scenario sweep given as TOML text or a preset name and returns one
/// dict per grid point.
#[pyfunction]
#[pyo3(signature = (network, scenario = None, preset = None))]
fn sweep<'py>(
    py: Python<'py>,
    network: &PyNetwork,
    scenario: Option<&str>,
    preset: Option<&str>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let sc = match (scenario, preset) {
        (Some(_), Some(_)) => {
            return Err(PyValueError::new_err(
                "pass either scenario or preset, not both",
            ))
        }
        (Some(text), None) => Scenario::from_toml(text).map_err(to_py)?,
        (None, Some(name)) => Scenario::preset(name).map_err(to_py)?,
        (None, None) => Scenario::default(),
    };
    let res = scenario::run_scenario(&network.inner, &sc).map_err(to_py)?;
    res.rows
        .iter()
        .map(|row| {
            let d = PyDict::new(py);
            d.set_item("lambda", row.lambda)?;
            d.set_item("demand", row.demand)?;
            d.set_item("theta", row.theta)?;
            d.set_item("status", row.status.as_str())?;
            d.set_item("iterations", row.iterations)?;
            d.set_item("residual", row.residual)?;
            d.set_item("antt", row.antt)?;
            d.set_item("wardrop_gap", row.wardrop_gap)?;
            d.set_item("flows", row.flows.clone())?;
            d.set_item("costs", row.costs.clone())?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn pycmte(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(ttb, m)?)?;
    m.add_function(wrap_pyfunction!(mbtt, m)?)?;
    m.add_function(wrap_pyfunction!(mett, m)?)?;
    m.add_function(wrap_pyfunction!(cmtt, m)?)?;
    m.add_function(wrap_pyfunction!(std_normal_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(link_moments, m)?)?;
    m.add_function(wrap_pyfunction!(mc_tail_means, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}

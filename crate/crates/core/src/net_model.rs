//! Network representation, route enumeration and route/link incidences.
//!
//! # Network file format
//!
//! A network document is line oriented. `#` starts a comment that runs to the
//! end of the line and blank lines are ignored. Fields are separated by
//! whitespace and/or commas. Three sections are recognised:
//!
//! ```text
//! [links]
//! # id  tail  head  t0_min  cap_pcu_h  theta
//! 1     1     2     10      1000       0.8
//!
//! [od]
//! # origin  destination  demand_pcu_h
//! 1         2            100
//!
//! [routes]          # optional
//! # link ids of one route, in travel order
//! 1
//! ```
//!
//! Link ids and node ids are unsigned integers. `theta` must lie in `(0, 1]`;
//! `theta = 1` means the capacity is deterministic. When a `[routes]` section
//! is present its routes replace enumeration; every route is assigned to the
//! OD pair matching its first tail and last head.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

const STANDIN_NETWORK: &str = include_str!("../data/standin.net");
const TOY3_NETWORK: &str = include_str!("../data/toy3.net");

pub type NodeId = u32;
pub type LinkId = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: LinkId,
    pub tail: NodeId,
    pub head: NodeId,
    /// Free-flow travel time in minutes.
    pub t0: f64,
    /// Design capacity in pcu/h.
    pub cap_design: f64,
    /// Degradation degree: realised capacity is uniform on `[theta * cap_design, cap_design]`.
    pub theta: f64,
}

impl Link {
    pub fn validate(&self) -> Result<()> {
        if !(self.t0.is_finite() && self.t0 > 0.0) {
            return Err(Error::Validation(format!(
                "link {}: t0 must be positive, got {}",
                self.id, self.t0
            )));
        }
        if !(self.cap_design.is_finite() && self.cap_design > 0.0) {
            return Err(Error::Validation(format!(
                "link {}: design capacity must be positive, got {}",
                self.id, self.cap_design
            )));
        }
        validate_theta(self.theta)
            .map_err(|msg| Error::Validation(format!("link {}: {msg}", self.id)))
    }
}

fn validate_theta(theta: f64) -> std::result::Result<(), String> {
    if theta > 0.0 && theta <= 1.0 {
        Ok(())
    } else {
        Err(format!("theta must lie in (0, 1], got {theta}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdPair {
    pub origin: NodeId,
    pub destination: NodeId,
    /// Demand in pcu/h.
    pub demand: f64,
}

/// A validated road network. Immutable once built; derive variants with
/// [`Network::with_uniform_theta`] and [`Network::with_total_demand`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    nodes: BTreeSet<NodeId>,
    links: Vec<Link>,
    od_pairs: Vec<OdPair>,
    explicit_routes: Option<Vec<Vec<LinkId>>>,
}

impl Network {
    pub fn new(links: Vec<Link>, od_pairs: Vec<OdPair>) -> Result<Self> {
        Self::build(links, od_pairs, None)
    }

    fn build(
        links: Vec<Link>,
        od_pairs: Vec<OdPair>,
        explicit_routes: Option<Vec<Vec<LinkId>>>,
    ) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::Validation("network has no links".into()));
        }
        let mut seen = BTreeSet::new();
        for link in &links {
            link.validate()?;
            if !seen.insert(link.id) {
                return Err(Error::Validation(format!("duplicate link id {}", link.id)));
            }
            if link.tail == link.head {
                return Err(Error::Validation(format!(
                    "link {} is a self-loop",
                    link.id
                )));
            }
        }
        if od_pairs.is_empty() {
            return Err(Error::Validation("network has no OD pairs".into()));
        }
        let nodes: BTreeSet<NodeId> = links.iter().flat_map(|l| [l.tail, l.head]).collect();
        let net = Network {
            nodes,
            links,
            od_pairs,
            explicit_routes,
        };
        let mut od_seen = BTreeSet::new();
        for od in &net.od_pairs {
            if !(od.demand.is_finite() && od.demand >= 0.0) {
                return Err(Error::Validation(format!(
                    "OD {} -> {}: demand must be nonnegative, got {}",
                    od.origin, od.destination, od.demand
                )));
            }
            if od.origin == od.destination {
                return Err(Error::Validation(format!(
                    "OD {} -> {}: origin equals destination",
                    od.origin, od.destination
                )));
            }
            if !od_seen.insert((od.origin, od.destination)) {
                return Err(Error::Validation(format!(
                    "duplicate OD pair {} -> {}",
                    od.origin, od.destination
                )));
            }
            if !net.reachable(od.origin, od.destination) {
                return Err(Error::Validation(format!(
                    "no directed path from {} to {}",
                    od.origin, od.destination
                )));
            }
        }
        Ok(net)
    }

    /// The bundled 10-node, 13-link stand-in test network (one OD 1 -> 10, q = 4000).
    pub fn standin() -> Self {
        parse_network(STANDIN_NETWORK).expect("bundled network is valid")
    }

    /// Three parallel links between nodes 1 and 2 with q = 1000.
    pub fn toy_three_route() -> Self {
        parse_network(TOY3_NETWORK).expect("bundled network is valid")
    }

    pub fn nodes(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn od_pairs(&self) -> &[OdPair] {
        &self.od_pairs
    }

    pub fn explicit_routes(&self) -> Option<&[Vec<LinkId>]> {
        self.explicit_routes.as_deref()
    }

    pub fn demands(&self) -> Vec<f64> {
        self.od_pairs.iter().map(|od| od.demand).collect()
    }

    pub fn total_demand(&self) -> f64 {
        self.od_pairs.iter().map(|od| od.demand).sum()
    }

    pub fn link_index(&self, id: LinkId) -> Option<usize> {
        self.links.iter().position(|l| l.id == id)
    }

    /// Copy of the network with every link's degradation degree set to `theta`.
    pub fn with_uniform_theta(&self, theta: f64) -> Result<Self> {
        validate_theta(theta).map_err(Error::Validation)?;
        let mut net = self.clone();
        for link in &mut net.links {
            link.theta = theta;
        }
        Ok(net)
    }

    /// Copy of the network with every OD demand scaled by `total / total_demand()`.
    pub fn with_total_demand(&self, total: f64) -> Result<Self> {
        if !(total.is_finite() && total >= 0.0) {
            return Err(Error::Validation(format!(
                "total demand must be nonnegative, got {total}"
            )));
        }
        let base = self.total_demand();
        if base <= 0.0 {
            return Err(Error::Validation(
                "cannot rescale a network whose base demand is zero".into(),
            ));
        }
        let scale = total / base;
        let mut net = self.clone();
        for od in &mut net.od_pairs {
            od.demand *= scale;
        }
        Ok(net)
    }

    fn reachable(&self, from: NodeId, to: NodeId) -> bool {
        let mut queue = VecDeque::from([from]);
        let mut visited = BTreeSet::from([from]);
        while let Some(node) = queue.pop_front() {
            if node == to {
                return true;
            }
            for link in self.links.iter().filter(|l| l.tail == node) {
                if visited.insert(link.head) {
                    queue.push_back(link.head);
                }
            }
        }
        false
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Links,
    Od,
    Routes,
}

fn parse_field<T: std::str::FromStr>(token: &str, line: usize, name: &str) -> Result<T> {
    token.parse().map_err(|_| Error::Parse {
        line,
        message: format!("field `{name}`: cannot parse `{token}`"),
    })
}

/// Parses and validates a network document.
pub fn parse_network(text: &str) -> Result<Network> {
    let mut section = Section::None;
    let mut links = Vec::new();
    let mut od_pairs = Vec::new();
    let mut routes: Option<Vec<Vec<LinkId>>> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            section = match content {
                "[links]" => Section::Links,
                "[od]" => Section::Od,
                "[routes]" => {
                    routes.get_or_insert_with(Vec::new);
                    Section::Routes
                }
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown section `{other}`"),
                    })
                }
            };
            continue;
        }
        let tokens: Vec<&str> = content
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .collect();
        match section {
            Section::None => {
                return Err(Error::Parse {
                    line,
                    message: "data outside of any section".into(),
                })
            }
            Section::Links => {
                if tokens.len() != 6 {
                    return Err(Error::Parse {
                        line,
                        message: format!(
                            "[links] row needs 6 fields (id tail head t0_min cap_pcu_h theta), got {}",
                            tokens.len()
                        ),
                    });
                }
                links.push(Link {
                    id: parse_field(tokens[0], line, "id")?,
                    tail: parse_field(tokens[1], line, "tail")?,
                    head: parse_field(tokens[2], line, "head")?,
                    t0: parse_field(tokens[3], line, "t0_min")?,
                    cap_design: parse_field(tokens[4], line, "cap_pcu_h")?,
                    theta: parse_field(tokens[5], line, "theta")?,
                });
            }
            Section::Od => {
                if tokens.len() != 3 {
                    return Err(Error::Parse {
                        line,
                        message: format!(
                            "[od] row needs 3 fields (origin destination demand_pcu_h), got {}",
                            tokens.len()
                        ),
                    });
                }
                od_pairs.push(OdPair {
                    origin: parse_field(tokens[0], line, "origin")?,
                    destination: parse_field(tokens[1], line, "destination")?,
                    demand: parse_field(tokens[2], line, "demand_pcu_h")?,
                });
            }
            Section::Routes => {
                let seq = tokens
                    .iter()
                    .map(|t| parse_field(t, line, "link id"))
                    .collect::<Result<Vec<LinkId>>>()?;
                routes.get_or_insert_with(Vec::new).push(seq);
            }
        }
    }
    Network::build(links, od_pairs, routes)
}

/// Reads and parses a network file.
pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_network(&text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    /// Index into [`Network::od_pairs`].
    pub od: usize,
    /// Indices into [`Network::links`], in travel order.
    pub links: Vec<usize>,
}

/// Routes of every OD pair together with their incidence structure.
///
/// Routes are stored grouped by OD index. Within an OD they are ordered by
/// free-flow time, ties broken lexicographically on the link-id sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteSet {
    routes: Vec<Route>,
    n_links: usize,
    n_ods: usize,
}

impl RouteSet {
    /// Builds a route set from explicit link-id sequences, checking that each
    /// one is a simple path serving one of the network's OD pairs.
    pub fn from_link_ids(net: &Network, sequences: &[Vec<LinkId>]) -> Result<Self> {
        let mut routes = Vec::with_capacity(sequences.len());
        for seq in sequences {
            let links = seq
                .iter()
                .map(|&id| {
                    net.link_index(id).ok_or_else(|| {
                        Error::Validation(format!("route references unknown link {id}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let (Some(&first), Some(&last)) = (links.first(), links.last()) else {
                return Err(Error::Validation("empty route".into()));
            };
            let origin = net.links[first].tail;
            let destination = net.links[last].head;
            let od = net
                .od_pairs
                .iter()
                .position(|p| p.origin == origin && p.destination == destination)
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "route {seq:?} runs {origin} -> {destination}, which is not an OD pair"
                    ))
                })?;
            let route = Route { od, links };
            if !is_simple_path(net, &route) {
                return Err(Error::Validation(format!(
                    "route {seq:?} is not a simple directed path"
                )));
            }
            routes.push(route);
        }
        let set = Self::assemble(net, routes);
        set.require_coverage(net)?;
        Ok(set)
    }

    fn assemble(net: &Network, mut routes: Vec<Route>) -> Self {
        routes.sort_by(|a, b| {
            a.od.cmp(&b.od)
                .then_with(|| free_flow_time(net, a).total_cmp(&free_flow_time(net, b)))
                .then_with(|| link_ids(net, a).cmp(&link_ids(net, b)))
        });
        routes.dedup();
        RouteSet {
            routes,
            n_links: net.links.len(),
            n_ods: net.od_pairs.len(),
        }
    }

    fn require_coverage(&self, net: &Network) -> Result<()> {
        for (w, od) in net.od_pairs.iter().enumerate() {
            if od.demand > 0.0 && !self.routes.iter().any(|r| r.od == w) {
                return Err(Error::NoRoutes {
                    origin: od.origin,
                    destination: od.destination,
                });
            }
        }
        Ok(())
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    pub fn n_links(&self) -> usize {
        self.n_links
    }

    pub fn n_ods(&self) -> usize {
        self.n_ods
    }

    pub fn od_of(&self, route: usize) -> usize {
        self.routes[route].od
    }

    /// Route indices serving OD `od`.
    pub fn routes_of_od(&self, od: usize) -> impl Iterator<Item = usize> + '_ {
        self.routes
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.od == od)
            .map(|(k, _)| k)
    }

    /// `δ_ak`: whether route `route` traverses link index `link`.
    pub fn delta(&self, link: usize, route: usize) -> bool {
        self.routes[route].links.contains(&link)
    }

    /// Dense route-link incidence, indexed `[link][route]`.
    pub fn delta_matrix(&self) -> Vec<Vec<u8>> {
        let mut m = vec![vec![0u8; self.routes.len()]; self.n_links];
        for (k, r) in self.routes.iter().enumerate() {
            for &a in &r.links {
                m[a][k] = 1;
            }
        }
        m
    }

    /// Dense route-OD incidence `Λ`, indexed `[od][route]` (w × m).
    pub fn lambda_matrix(&self) -> Vec<Vec<u8>> {
        let mut m = vec![vec![0u8; self.routes.len()]; self.n_ods];
        for (k, r) in self.routes.iter().enumerate() {
            m[r.od][k] = 1;
        }
        m
    }

    pub fn link_ids(&self, net: &Network, route: usize) -> Vec<LinkId> {
        link_ids(net, &self.routes[route])
    }

    pub fn free_flow_time(&self, net: &Network, route: usize) -> f64 {
        free_flow_time(net, &self.routes[route])
    }

    /// Aggregates OD flows: `(Λf)_w = Σ_{k ∈ w} f_k`.
    pub fn od_flows(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f)?;
        let mut out = vec![0.0; self.n_ods];
        for (r, &fk) in self.routes.iter().zip(f) {
            out[r.od] += fk;
        }
        Ok(out)
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.routes.len() {
            return Err(Error::Dimension {
                what: "route flow vector",
                expected: self.routes.len(),
                got: f.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn link_flows_unchecked(&self, f: &[f64], v: &mut [f64]) {
        v.iter_mut().for_each(|x| *x = 0.0);
        for (r, &fk) in self.routes.iter().zip(f) {
            for &a in &r.links {
                v[a] += fk;
            }
        }
    }
}

impl fmt::Display for RouteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, r) in self.routes.iter().enumerate() {
            writeln!(f, "route {k} od {} links {:?}", r.od, r.links)?;
        }
        Ok(())
    }
}

fn link_ids(net: &Network, route: &Route) -> Vec<LinkId> {
    route.links.iter().map(|&a| net.links[a].id).collect()
}

fn free_flow_time(net: &Network, route: &Route) -> f64 {
    route.links.iter().map(|&a| net.links[a].t0).sum()
}

/// Checks that consecutive links connect, the path starts at the OD origin,
/// ends at the OD destination and never revisits a node.
pub fn is_simple_path(net: &Network, route: &Route) -> bool {
    let Some(od) = net.od_pairs.get(route.od) else {
        return false;
    };
    let Some(&first) = route.links.first() else {
        return false;
    };
    if net.links[first].tail != od.origin {
        return false;
    }
    let mut visited = BTreeSet::from([od.origin]);
    let mut at = od.origin;
    for &a in &route.links {
        let Some(link) = net.links.get(a) else {
            return false;
        };
        if link.tail != at || !visited.insert(link.head) {
            return false;
        }
        at = link.head;
    }
    at == od.destination
}

/// Enumerates all simple paths of at most `max_hops` links for every OD pair
/// by depth-first search and keeps the `max_routes_per_od` with the smallest
/// free-flow time.
pub fn enumerate_routes(
    net: &Network,
    max_routes_per_od: usize,
    max_hops: usize,
) -> Result<RouteSet> {
    if max_routes_per_od == 0 || max_hops == 0 {
        return Err(Error::Config(
            "max_routes_per_od and max_hops must be positive".into(),
        ));
    }
    // Outgoing links per node, sorted by link id so the search order is fixed.
    let mut out: HashMap<NodeId, Vec<usize>> = HashMap::new();
    for (a, link) in net.links.iter().enumerate() {
        out.entry(link.tail).or_default().push(a);
    }
    for adj in out.values_mut() {
        adj.sort_by_key(|&a| net.links[a].id);
    }

    let mut routes = Vec::new();
    for (w, od) in net.od_pairs.iter().enumerate() {
        let mut found = Vec::new();
        let mut path = Vec::new();
        let mut visited = BTreeSet::from([od.origin]);
        dfs(
            net,
            &out,
            od.origin,
            od.destination,
            max_hops,
            &mut path,
            &mut visited,
            &mut found,
        );
        let mut candidates: Vec<Route> = found
            .into_iter()
            .map(|links| Route { od: w, links })
            .collect();
        candidates.sort_by(|a, b| {
            free_flow_time(net, a)
                .total_cmp(&free_flow_time(net, b))
                .then_with(|| link_ids(net, a).cmp(&link_ids(net, b)))
        });
        candidates.truncate(max_routes_per_od);
        routes.extend(candidates);
    }
    let set = RouteSet::assemble(net, routes);
    set.require_coverage(net)?;
    Ok(set)
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    net: &Network,
    out: &HashMap<NodeId, Vec<usize>>,
    at: NodeId,
    target: NodeId,
    hops_left: usize,
    path: &mut Vec<usize>,
    visited: &mut BTreeSet<NodeId>,
    found: &mut Vec<Vec<usize>>,
) {
    if at == target {
        found.push(path.clone());
        return;
    }
    if hops_left == 0 {
        return;
    }
    let Some(adj) = out.get(&at) else { return };
    for &a in adj {
        let next = net.links[a].head;
        if !visited.insert(next) {
            continue;
        }
        path.push(a);
        dfs(net, out, next, target, hops_left - 1, path, visited, found);
        path.pop();
        visited.remove(&next);
    }
}

/// Uses the network's explicit `[routes]` when present, otherwise enumerates.
pub fn build_route_set(
    net: &Network,
    max_routes_per_od: usize,
    max_hops: usize,
) -> Result<RouteSet> {
    match net.explicit_routes() {
        Some(seqs) => RouteSet::from_link_ids(net, seqs),
        None => enumerate_routes(net, max_routes_per_od, max_hops),
    }
}

/// `v_a = Σ_k f_k δ_ak`.
pub fn link_flows(rs: &RouteSet, f: &[f64]) -> Result<Vec<f64>> {
    rs.check_len(f)?;
    let mut v = vec![0.0; rs.n_links];
    rs.link_flows_unchecked(f, &mut v);
    Ok(v)
}

/// Route flows together with the link flows they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub f: Vec<f64>,
    pub v: Vec<f64>,
}

impl FlowState {
    pub fn from_route_flows(rs: &RouteSet, f: Vec<f64>) -> Result<Self> {
        if let Some(x) = f.iter().find(|x| !(**x >= 0.0)) {
            return Err(Error::Domain(format!(
                "route flows must be nonnegative, got {x}"
            )));
        }
        let v = link_flows(rs, &f)?;
        Ok(FlowState { f, v })
    }
}

/// Each OD's demand spread evenly over its routes.
pub fn equal_split(net: &Network, rs: &RouteSet) -> Vec<f64> {
    let mut counts = vec![0usize; rs.n_ods];
    for r in &rs.routes {
        counts[r.od] += 1;
    }
    rs.routes
        .iter()
        .map(|r| net.od_pairs[r.od].demand / counts[r.od] as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    /// `|Σ_{k ∈ w} f_k − q_w|` per OD.
    pub od_residuals: Vec<f64>,
    pub min_flow: f64,
    pub feasible: bool,
}

impl FeasibilityReport {
    pub fn max_residual(&self) -> f64 {
        self.od_residuals.iter().copied().fold(0.0, f64::max)
    }
}

pub fn check_feasible(
    rs: &RouteSet,
    f: &[f64],
    net: &Network,
    tol: f64,
) -> Result<FeasibilityReport> {
    let totals = rs.od_flows(f)?;
    let od_residuals: Vec<f64> = totals
        .iter()
        .zip(&net.od_pairs)
        .map(|(t, od)| (t - od.demand).abs())
        .collect();
    let min_flow = f.iter().copied().fold(f64::INFINITY, f64::min);
    let feasible = od_residuals.iter().all(|r| *r <= tol) && (f.is_empty() || min_flow >= -tol);
    Ok(FeasibilityReport {
        od_residuals,
        min_flow,
        feasible,
    })
}

/// Groups route indices by OD for quick per-OD scans.
pub(crate) fn routes_by_od(rs: &RouteSet) -> BTreeMap<usize, Vec<usize>> {
    let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, r) in rs.routes.iter().enumerate() {
        map.entry(r.od).or_default().push(k);
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_link() -> Network {
        parse_network("[links]\n1 1 2 10 1000 1\n[od]\n1 2 100\n").unwrap()
    }

    /// Brute-force path count over every subset ordering is overkill; instead
    /// count simple paths by an independent BFS over partial paths.
    fn count_simple_paths_bfs(net: &Network, from: NodeId, to: NodeId) -> usize {
        let mut queue = VecDeque::from([(from, vec![from])]);
        let mut count = 0;
        while let Some((at, seen)) = queue.pop_front() {
            if at == to {
                count += 1;
                continue;
            }
            for l in net.links().iter().filter(|l| l.tail == at) {
                if !seen.contains(&l.head) {
                    let mut s = seen.clone();
                    s.push(l.head);
                    queue.push_back((l.head, s));
                }
            }
        }
        count
    }

    #[test]
    fn loads_standin_network() {
        let net = Network::standin();
        assert_eq!(net.links().len(), 13);
        assert_eq!(net.nodes().len(), 10);
        assert_eq!(net.od_pairs().len(), 1);
        assert_eq!(net.total_demand(), 4000.0);
        assert!(net.links().iter().all(|l| l.theta == 0.8));
        let l9 = &net.links()[net.link_index(9).unwrap()];
        assert_eq!((l9.t0, l9.cap_design), (4.0, 1500.0));
        let l11 = &net.links()[net.link_index(11).unwrap()];
        assert_eq!((l11.t0, l11.cap_design), (30.0, 1000.0));
    }

    #[test]
    fn loads_minimal_network() {
        let net = single_link();
        assert_eq!(net.links().len(), 1);
        assert_eq!(net.od_pairs()[0].demand, 100.0);
    }

    #[test]
    fn rejects_theta_zero() {
        let err = parse_network("[links]\n1 1 2 10 1000 0\n[od]\n1 2 100\n").unwrap_err();
        assert!(
            matches!(err, Error::Validation(ref m) if m.contains("theta")),
            "{err}"
        );
    }

    #[test]
    fn rejects_theta_above_one_and_bad_capacity() {
        assert!(parse_network("[links]\n1 1 2 10 1000 1.2\n[od]\n1 2 100\n").is_err());
        assert!(parse_network("[links]\n1 1 2 10 0 0.5\n[od]\n1 2 100\n").is_err());
        assert!(parse_network("[links]\n1 1 2 -1 10 0.5\n[od]\n1 2 100\n").is_err());
        assert!(parse_network("[links]\n1 1 2 1 10 0.5\n[od]\n1 2 -5\n").is_err());
    }

    #[test]
    fn parse_errors_carry_line_and_field() {
        let err = parse_network("# hi\n[links]\n1 1 2 ten 1000 1\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("t0_min"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
        let err = parse_network("[links]\n1 1 2 10\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_network("[nodes]\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn unreachable_od_rejected() {
        let err = parse_network("[links]\n1 1 2 10 1000 1\n2 3 4 10 1000 1\n[od]\n1 4 100\n")
            .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn comma_separated_fields_and_comments() {
        let net =
            parse_network("[links]\n1, 1, 2, 10, 1000, 0.9 # trailing\n[od]\n1,2,5\n").unwrap();
        assert_eq!(net.links()[0].theta, 0.9);
    }

    #[test]
    fn parallel_links_give_two_routes() {
        let net =
            parse_network("[links]\n1 1 2 10 1000 1\n2 1 2 12 1000 1\n[od]\n1 2 100\n").unwrap();
        let rs = enumerate_routes(&net, 10, 5).unwrap();
        assert_eq!(rs.len(), 2);
        assert_eq!(rs.link_ids(&net, 0), vec![1]);
        assert_eq!(rs.link_ids(&net, 1), vec![2]);
    }

    #[test]
    fn standin_has_exactly_six_routes() {
        let net = Network::standin();
        assert_eq!(count_simple_paths_bfs(&net, 1, 10), 6);
        let rs = enumerate_routes(&net, 6, 13).unwrap();
        assert_eq!(rs.len(), 6);
        for r in rs.routes() {
            assert!(is_simple_path(&net, r));
        }
        // Ordered by free-flow time.
        let tt: Vec<f64> = (0..rs.len()).map(|k| rs.free_flow_time(&net, k)).collect();
        assert!(tt.windows(2).all(|w| w[0] <= w[1]), "{tt:?}");
        assert_eq!(tt, vec![29.0, 35.0, 40.0, 40.0, 55.0, 60.0]);
        // Tie at 40 minutes broken on link ids: [1,3,7,10] < [2,5,13,10].
        assert_eq!(rs.link_ids(&net, 2), vec![1, 3, 7, 10]);
        assert_eq!(rs.link_ids(&net, 3), vec![2, 5, 13, 10]);
    }

    #[test]
    fn truncation_keeps_fastest_routes() {
        let net = Network::standin();
        let rs = enumerate_routes(&net, 2, 13).unwrap();
        assert_eq!(rs.len(), 2);
        assert_eq!(rs.free_flow_time(&net, 1), 35.0);
    }

    #[test]
    fn hop_cap_can_leave_od_without_routes() {
        let net = Network::standin();
        let err = enumerate_routes(&net, 6, 3).unwrap_err();
        assert!(matches!(
            err,
            Error::NoRoutes {
                origin: 1,
                destination: 10
            }
        ));
    }

    #[test]
    fn explicit_routes_override_enumeration() {
        let text = "[links]\n1 1 2 10 1000 1\n2 1 2 12 1000 1\n[od]\n1 2 100\n[routes]\n2\n";
        let net = parse_network(text).unwrap();
        let rs = build_route_set(&net, 10, 5).unwrap();
        assert_eq!(rs.len(), 1);
        assert_eq!(rs.link_ids(&net, 0), vec![2]);

        let bad = "[links]\n1 1 2 10 1000 1\n2 2 3 12 1000 1\n[od]\n1 3 100\n[routes]\n2 1\n";
        let net = parse_network(bad).unwrap();
        assert!(build_route_set(&net, 10, 5).is_err());
    }

    #[test]
    fn incidence_matrices() {
        let net = Network::standin();
        let rs = enumerate_routes(&net, 6, 13).unwrap();
        let delta = rs.delta_matrix();
        let lam = rs.lambda_matrix();
        assert_eq!(delta.len(), 13);
        assert_eq!(lam.len(), 1);
        for k in 0..rs.len() {
            assert_eq!(lam.iter().map(|row| row[k]).sum::<u8>(), 1);
            for a in 0..13 {
                assert_eq!(delta[a][k] == 1, rs.delta(a, k));
            }
        }
    }

    #[test]
    fn link_flow_examples() {
        let net = Network::standin();
        let rs = enumerate_routes(&net, 6, 13).unwrap();
        assert_eq!(link_flows(&rs, &[0.0; 6]).unwrap(), vec![0.0; 13]);

        let k = (0..6)
            .find(|&k| rs.link_ids(&net, k) == vec![1, 3, 7, 10])
            .unwrap();
        let mut f = vec![0.0; 6];
        f[k] = 100.0;
        let v = link_flows(&rs, &f).unwrap();
        for (a, link) in net.links().iter().enumerate() {
            let expect = if [1, 3, 7, 10].contains(&link.id) {
                100.0
            } else {
                0.0
            };
            assert_eq!(v[a], expect, "link {}", link.id);
        }

        // Two routes sharing link 4.
        let text = "[links]\n1 1 2 1 10 1\n2 1 2 1 10 1\n4 2 3 1 10 1\n[od]\n1 3 120\n";
        let net = parse_network(text).unwrap();
        let rs = enumerate_routes(&net, 5, 5).unwrap();
        let v = link_flows(&rs, &[50.0, 70.0]).unwrap();
        assert_eq!(v[net.link_index(4).unwrap()], 120.0);

        assert!(matches!(
            link_flows(&rs, &[1.0]),
            Err(Error::Dimension {
                expected: 2,
                got: 1,
                ..
            })
        ));
    }

    #[test]
    fn feasibility_examples() {
        let net = Network::standin();
        let rs = enumerate_routes(&net, 6, 13).unwrap();
        let f = equal_split(&net, &rs);
        assert!(check_feasible(&rs, &f, &net, 1e-9).unwrap().feasible);

        let mut short = f.clone();
        short[0] -= 1.0;
        let rep = check_feasible(&rs, &short, &net, 1e-6).unwrap();
        assert!(!rep.feasible);
        assert!((rep.od_residuals[0] - 1.0).abs() < 1e-9);

        let mut dust = f.clone();
        dust[0] += 1e-12;
        dust[1] -= 1e-12;
        let mut neg = vec![0.0; 6];
        neg[0] = 4000.0 + 1e-12;
        neg[1] = -1e-12;
        assert!(check_feasible(&rs, &dust, &net, 1e-9).unwrap().feasible);
        let rep = check_feasible(&rs, &neg, &net, 1e-9).unwrap();
        assert!(rep.feasible);
        assert_eq!(rep.min_flow, -1e-12);
    }

    #[test]
    fn derived_networks() {
        let net = Network::standin();
        let scaled = net.with_total_demand(6000.0).unwrap();
        assert_eq!(scaled.total_demand(), 6000.0);
        let t = net.with_uniform_theta(0.6).unwrap();
        assert!(t.links().iter().all(|l| l.theta == 0.6));
        assert!(net.with_uniform_theta(0.0).is_err());
    }

    #[test]
    fn flow_state_rejects_negative() {
        let net = single_link();
        let rs = enumerate_routes(&net, 1, 1).unwrap();
        assert!(FlowState::from_route_flows(&rs, vec![-1.0]).is_err());
        let st = FlowState::from_route_flows(&rs, vec![3.0]).unwrap();
        assert_eq!(st.v, vec![3.0]);
    }
}

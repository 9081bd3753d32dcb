//! Monte-Carlo estimates used to check the closed-form moments and indices.
//!
//! Every estimator is seeded explicitly and draws from ChaCha8, so a given
//! `(seed, samples)` pair reproduces bit-identical estimates on any build.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::net_model::{enumerate_routes, equal_split, link_flows, Link, Network, RouteSet};
use crate::risk_indices::{mbtt, mett, ttb};
use crate::stochastic_bpr::{bpr_time, link_mean, link_var, route_moments, BprParams};

pub const RNG_NAME: &str = "ChaCha8";

/// Batches used for batch-means standard errors of order-statistic estimators.
const SE_BATCHES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    pub ci_multiplier: f64,
}

impl McConfig {
    pub fn new(samples: usize, seed: u64) -> Result<Self> {
        let cfg = McConfig {
            samples,
            seed,
            ci_multiplier: 3.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < 10_000 {
            return Err(Error::Config(format!(
                "Monte-Carlo sample count must be at least 10000, got {}",
                self.samples
            )));
        }
        if !(self.ci_multiplier > 0.0) {
            return Err(Error::Config("ci_multiplier must be positive".into()));
        }
        Ok(())
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// `|closed − estimate| ≤ k·SE`, with a rounding allowance when the SE is zero.
pub fn within_band(closed: f64, estimate: f64, se: f64, k: f64) -> bool {
    (closed - estimate).abs() <= k * se + 1e-12 * closed.abs().max(1.0)
}

/// Shifted power sums up to order four; exact for constant data.
#[derive(Debug, Clone, Copy)]
struct Moments {
    shift: f64,
    n: f64,
    s1: f64,
    s2: f64,
    s3: f64,
    s4: f64,
}

impl Moments {
    fn new() -> Self {
        Moments {
            shift: f64::NAN,
            n: 0.0,
            s1: 0.0,
            s2: 0.0,
            s3: 0.0,
            s4: 0.0,
        }
    }

    fn push(&mut self, x: f64) {
        if self.shift.is_nan() {
            self.shift = x;
        }
        let d = x - self.shift;
        let d2 = d * d;
        self.n += 1.0;
        self.s1 += d;
        self.s2 += d2;
        self.s3 += d2 * d;
        self.s4 += d2 * d2;
    }

    fn estimate(&self) -> MomentEstimate {
        let n = self.n;
        let m1 = self.s1 / n;
        let c2 = (self.s2 / n - m1 * m1).max(0.0);
        let c4 = (self.s4 / n - 4.0 * m1 * self.s3 / n + 6.0 * m1 * m1 * self.s2 / n
            - 3.0 * m1.powi(4))
        .max(0.0);
        let var = c2 * n / (n - 1.0);
        MomentEstimate {
            mean: self.shift + m1,
            var,
            mean_se: (var / n).sqrt(),
            var_se: ((c4 - c2 * c2).max(0.0) / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub mean: f64,
    pub var: f64,
    pub mean_se: f64,
    /// `sqrt((m₄ − m₂²)/N)`.
    pub var_se: f64,
}

/// Samples `C ~ U(θC̄, C̄)` and returns moments of the BPR travel time.
pub fn mc_link_moments(
    link: &Link,
    v: f64,
    p: &BprParams,
    cfg: &McConfig,
) -> Result<MomentEstimate> {
    cfg.validate()?;
    let mut rng = cfg.rng();
    let lo = link.theta * link.cap_design;
    let width = link.cap_design - lo;
    let mut acc = Moments::new();
    for _ in 0..cfg.samples {
        let u: f64 = rng.random();
        let cap = lo + u * width;
        acc.push(bpr_time(link, v, cap, p)?);
    }
    Ok(acc.estimate())
}

/// Samples every link capacity independently and returns per-route moments
/// of the summed BPR times.
pub fn mc_route_moments(
    net: &Network,
    rs: &RouteSet,
    v: &[f64],
    p: &BprParams,
    cfg: &McConfig,
) -> Result<Vec<MomentEstimate>> {
    cfg.validate()?;
    if v.len() != net.links().len() {
        return Err(Error::Dimension {
            what: "link flow vector",
            expected: net.links().len(),
            got: v.len(),
        });
    }
    let mut rng = cfg.rng();
    let mut acc = vec![Moments::new(); rs.len()];
    let mut times = vec![0.0; net.links().len()];
    for _ in 0..cfg.samples {
        for ((t, link), &va) in times.iter_mut().zip(net.links()).zip(v) {
            let u: f64 = rng.random();
            let cap = link.theta * link.cap_design + u * (1.0 - link.theta) * link.cap_design;
            *t = bpr_time(link, va, cap, p)?;
        }
        for (a, r) in acc.iter_mut().zip(rs.routes()) {
            a.push(r.links.iter().map(|&l| times[l]).sum());
        }
    }
    Ok(acc.iter().map(Moments::estimate).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEstimate {
    /// Mean of samples at or below the empirical α-quantile.
    pub below_mean: f64,
    /// Mean of samples above the empirical α-quantile.
    pub excess_mean: f64,
    /// Order statistic of rank `ceil(α·N)`.
    pub percentile: f64,
    /// `α·below + (1 − α)·excess`.
    pub recombined: f64,
    pub below_se: f64,
    pub excess_se: f64,
    pub percentile_se: f64,
    pub recombined_se: f64,
}

struct TailPoint {
    below: f64,
    excess: f64,
    percentile: f64,
    recombined: f64,
}

fn tail_point(samples: &mut [f64], alpha: f64) -> TailPoint {
    let n = samples.len();
    let rank = ((alpha * n as f64).ceil() as usize).clamp(1, n - 1);
    let (lower, pivot, upper) = samples.select_nth_unstable_by(rank - 1, f64::total_cmp);
    let pivot = *pivot;
    let below = (lower.iter().sum::<f64>() + pivot) / rank as f64;
    let excess = upper.iter().sum::<f64>() / upper.len() as f64;
    TailPoint {
        below,
        excess,
        percentile: pivot,
        recombined: alpha * below + (1.0 - alpha) * excess,
    }
}

fn batch_se(values: &[f64]) -> f64 {
    let b = values.len() as f64;
    let mean = values.iter().sum::<f64>() / b;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

/// Samples `N(μ, σ)` and estimates the conditional tail means and the
/// α-percentile. Standard errors come from batch means over 32 batches.
pub fn mc_tail_means(mu: f64, sigma: f64, alpha: f64, cfg: &McConfig) -> Result<TailEstimate> {
    cfg.validate()?;
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let mut rng = cfg.rng();
    let mut samples: Vec<f64> = (0..cfg.samples)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            mu + sigma * z
        })
        .collect();

    let batch_len = cfg.samples / SE_BATCHES;
    let batches: Vec<TailPoint> = samples
        .chunks(batch_len)
        .take(SE_BATCHES)
        .map(|chunk| tail_point(&mut chunk.to_vec(), alpha))
        .collect();
    let full = tail_point(&mut samples, alpha);
    // Standard error of a batch mean, rescaled for samples left out of the batches.
    let coverage = (batch_len * SE_BATCHES) as f64 / cfg.samples as f64;
    let se = |f: fn(&TailPoint) -> f64| {
        let vals: Vec<f64> = batches.iter().map(f).collect();
        batch_se(&vals) * coverage.sqrt()
    };
    Ok(TailEstimate {
        below_mean: full.below,
        excess_mean: full.excess,
        percentile: full.percentile,
        recombined: full.recombined,
        below_se: se(|t| t.below),
        excess_se: se(|t| t.excess),
        percentile_se: se(|t| t.percentile),
        recombined_se: se(|t| t.recombined),
    })
}

/// One line of an oracle report.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRecord {
    pub claim: String,
    pub closed_form: f64,
    pub estimate: f64,
    pub se: f64,
    pub pass: bool,
}

impl OracleRecord {
    fn new(claim: String, closed_form: f64, estimate: f64, se: f64, k: f64) -> Self {
        OracleRecord {
            pass: within_band(closed_form, estimate, se, k),
            claim,
            closed_form,
            estimate,
            se,
        }
    }
}

/// Parameters of the built-in verification run.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyPlan {
    pub link_samples: usize,
    pub tail_samples: usize,
    pub seed: u64,
    pub ci_multiplier: f64,
    pub flow_ratios: Vec<f64>,
    pub thetas: Vec<f64>,
    /// `(μ, σ, α)` triples for the tail checks.
    pub tail_cases: Vec<(f64, f64, f64)>,
}

impl Default for VerifyPlan {
    fn default() -> Self {
        VerifyPlan {
            link_samples: 1_000_000,
            tail_samples: 10_000_000,
            seed: 20_140_301,
            ci_multiplier: 3.0,
            flow_ratios: vec![0.5, 1.0, 1.5],
            thetas: vec![0.6, 0.8],
            tail_cases: vec![(20.0, 3.0, 0.9), (15.0, 5.0, 0.8), (30.0, 1.0, 0.95)],
        }
    }
}

/// Checks link moments on every link of `net`, route moments at the equal
/// split, and the tail indices, each against its Monte-Carlo estimate.
pub fn verify_suite(net: &Network, p: &BprParams, plan: &VerifyPlan) -> Result<Vec<OracleRecord>> {
    let k = plan.ci_multiplier;
    let mut out = Vec::new();
    let mut seed = plan.seed;
    let mut next_cfg = |samples: usize| {
        seed = seed.wrapping_add(1);
        McConfig {
            samples,
            seed,
            ci_multiplier: k,
        }
    };

    for &theta in &plan.thetas {
        for link in net.links() {
            let link = Link {
                theta,
                ..link.clone()
            };
            for &ratio in &plan.flow_ratios {
                let v = ratio * link.cap_design;
                let est = mc_link_moments(&link, v, p, &next_cfg(plan.link_samples))?;
                let tag = format!("link{}:theta={theta}:v={v}", link.id);
                out.push(OracleRecord::new(
                    format!("{tag}:mean"),
                    link_mean(&link, v, p),
                    est.mean,
                    est.mean_se,
                    k,
                ));
                out.push(OracleRecord::new(
                    format!("{tag}:var"),
                    link_var(&link, v, p),
                    est.var,
                    est.var_se,
                    k,
                ));
            }
        }
    }

    let rs = enumerate_routes(net, 64, net.links().len())?;
    let f = equal_split(net, &rs);
    let v = link_flows(&rs, &f)?;
    let closed = route_moments(net, &rs, &v, p)?;
    let est = mc_route_moments(net, &rs, &v, p, &next_cfg(plan.link_samples))?;
    for (idx, e) in est.iter().enumerate() {
        let tag = format!("route{idx}:equal_split");
        out.push(OracleRecord::new(
            format!("{tag}:mean"),
            closed.mu[idx],
            e.mean,
            e.mean_se,
            k,
        ));
        out.push(OracleRecord::new(
            format!("{tag}:var"),
            closed.sigma[idx] * closed.sigma[idx],
            e.var,
            e.var_se,
            k,
        ));
    }

    for &(mu, sigma, alpha) in &plan.tail_cases {
        let est = mc_tail_means(mu, sigma, alpha, &next_cfg(plan.tail_samples))?;
        let tag = format!("normal:mu={mu}:sigma={sigma}:alpha={alpha}");
        out.push(OracleRecord::new(
            format!("{tag}:mbtt"),
            mbtt(mu, sigma, alpha)?,
            est.below_mean,
            est.below_se,
            k,
        ));
        out.push(OracleRecord::new(
            format!("{tag}:mett"),
            mett(mu, sigma, alpha)?,
            est.excess_mean,
            est.excess_se,
            k,
        ));
        out.push(OracleRecord::new(
            format!("{tag}:ttb"),
            ttb(mu, sigma, alpha)?,
            est.percentile,
            est.percentile_se,
            k,
        ));
        out.push(OracleRecord::new(
            format!("{tag}:recombined"),
            mu,
            est.recombined,
            est.recombined_se,
            k,
        ));
    }
    Ok(out)
}

/// Writes records as comma-separated text with a header row.
pub fn write_oracle_report(records: &[OracleRecord], plan: &VerifyPlan, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(
        buf,
        "# rng={RNG_NAME} seed={} link_samples={} tail_samples={} ci_multiplier={}",
        plan.seed, plan.link_samples, plan.tail_samples, plan.ci_multiplier
    )
    .expect("write to memory");
    writeln!(buf, "claim,closed_form,mc_estimate,se,pass").expect("write to memory");
    for r in records {
        writeln!(
            buf,
            "{},{:.12e},{:.12e},{:.6e},{}",
            r.claim,
            r.closed_form,
            r.estimate,
            r.se,
            if r.pass { "pass" } else { "fail" }
        )
        .expect("write to memory");
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn link(theta: f64) -> Link {
        Link {
            id: 1,
            tail: 1,
            head: 2,
            t0: 10.0,
            cap_design: 1000.0,
            theta,
        }
    }

    #[test]
    fn config_floor() {
        assert!(McConfig::new(9_999, 1).is_err());
        assert!(McConfig::new(10_000, 1).is_ok());
    }

    #[test]
    fn degenerate_capacity_is_exact() {
        let p = BprParams::default();
        let cfg = McConfig::new(10_000, 7).unwrap();
        let est = mc_link_moments(&link(1.0), 1000.0, &p, &cfg).unwrap();
        assert_eq!(est.mean, bpr_time(&link(1.0), 1000.0, 1000.0, &p).unwrap());
        assert_eq!(est.var, 0.0);
        let est = mc_link_moments(&link(0.8), 0.0, &p, &cfg).unwrap();
        assert_eq!(est.mean, 10.0);
        assert_eq!(est.var, 0.0);
    }

    #[test]
    fn link_moments_bracket_closed_forms() {
        let p = BprParams::default();
        let cfg = McConfig::new(1_000_000, 11).unwrap();
        let l = link(0.8);
        let est = mc_link_moments(&l, 1000.0, &p, &cfg).unwrap();
        assert!(
            within_band(link_mean(&l, 1000.0, &p), est.mean, est.mean_se, 3.0),
            "{est:?}"
        );
        assert!(
            within_band(link_var(&l, 1000.0, &p), est.var, est.var_se, 3.0),
            "{est:?}"
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let p = BprParams::default();
        let cfg = McConfig::new(20_000, 5).unwrap();
        let a = mc_link_moments(&link(0.7), 900.0, &p, &cfg).unwrap();
        let b = mc_link_moments(&link(0.7), 900.0, &p, &cfg).unwrap();
        assert_eq!(a, b);
        let a = mc_tail_means(20.0, 3.0, 0.9, &cfg).unwrap();
        let b = mc_tail_means(20.0, 3.0, 0.9, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quadrupling_samples_halves_se() {
        let p = BprParams::default();
        let small =
            mc_link_moments(&link(0.6), 1200.0, &p, &McConfig::new(100_000, 3).unwrap()).unwrap();
        let large =
            mc_link_moments(&link(0.6), 1200.0, &p, &McConfig::new(400_000, 3).unwrap()).unwrap();
        let ratio = small.mean_se / large.mean_se;
        assert!((ratio - 2.0).abs() < 0.4, "{ratio}");
        let ratio = small.var_se / large.var_se;
        assert!((ratio - 2.0).abs() < 0.4, "{ratio}");

        let small = mc_tail_means(0.0, 1.0, 0.8, &McConfig::new(320_000, 3).unwrap()).unwrap();
        let large = mc_tail_means(0.0, 1.0, 0.8, &McConfig::new(1_280_000, 3).unwrap()).unwrap();
        let ratio = small.below_se / large.below_se;
        // Batch-means SEs are themselves noisy (32 batches), so allow a wider band.
        assert!((ratio - 2.0).abs() < 0.8, "{ratio}");
    }

    #[test]
    fn tail_means_at_median() {
        let r2pi = (2.0 / PI).sqrt();
        let cfg = McConfig::new(2_000_000, 9).unwrap();
        let (mu, sigma) = (12.0, 2.5);
        let est = mc_tail_means(mu, sigma, 0.5, &cfg).unwrap();
        assert!(
            within_band(mu - sigma * r2pi, est.below_mean, est.below_se, 3.0),
            "{est:?}"
        );
        assert!(
            within_band(mu + sigma * r2pi, est.excess_mean, est.excess_se, 3.0),
            "{est:?}"
        );
        assert!(
            within_band(mu, est.recombined, est.recombined_se, 3.0),
            "{est:?}"
        );
    }

    #[test]
    fn tiny_sigma_collapses_tails() {
        let cfg = McConfig::new(10_000, 1).unwrap();
        let est = mc_tail_means(20.0, 1e-9, 0.9, &cfg).unwrap();
        assert!((est.below_mean - 20.0).abs() < 1e-7);
        assert!((est.excess_mean - 20.0).abs() < 1e-7);
        assert!(mc_tail_means(20.0, 0.0, 0.9, &cfg).is_err());
    }
}

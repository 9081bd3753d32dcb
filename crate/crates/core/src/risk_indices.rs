//! Standard-normal numerics and the alpha-reliable travel-time indices.
//!
//! With route time `T ~ N(μ, σ)` and `z = Φ⁻¹(α)`, every index in the family
//! has the form `μ + c·σ`:
//!
//! | index   | c                                   |
//! |---------|-------------------------------------|
//! | MTT     | 0                                   |
//! | PTT/TTB | z                                   |
//! | MBTT    | −φ(z) / α                           |
//! | METT    | φ(z) / (1 − α)                      |
//! | CMTT    | (α − λ)·φ(z) / (α(1 − α))           |
//!
//! where `φ` is the standard normal density. CMTT is the convex combination
//! `λ·MBTT + (1 − λ)·METT`; it is neutral (equal to the mean) at `λ = α`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF, `Φ(x) = erfc(−x/√2)/2`.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Lower-tail quantile for `q ∈ (0, 0.5]`.
fn lower_quantile(q: f64) -> f64 {
    // Rational starting guess (absolute error < 5e-4), then Newton on Φ.
    let t = (-2.0 * q.ln()).sqrt();
    let mut x = -(t
        - (2.515517 + 0.802853 * t + 0.010328 * t * t)
            / (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t));
    let (mut lo, mut hi) = (-40.0_f64, 0.0_f64);
    for _ in 0..100 {
        let err = std_normal_cdf(x) - q;
        if err > 0.0 {
            hi = hi.min(x);
        } else if err < 0.0 {
            lo = lo.max(x);
        } else {
            return x;
        }
        let dens = std_normal_pdf(x);
        let mut next = x - err / dens;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) {
            return next;
        }
        x = next;
    }
    x
}

/// `Φ⁻¹(p)` for `p ∈ (0, 1)`.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "probability must lie in (0, 1), got {p}"
        )));
    }
    if p == 0.5 {
        Ok(0.0)
    } else if p < 0.5 {
        Ok(lower_quantile(p))
    } else {
        // 1 − p is exact for p in (0.5, 1).
        Ok(-lower_quantile(1.0 - p))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "confidence level must lie in (0, 1), got {alpha}"
        )))
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "standard deviation must be nonnegative, got {sigma}"
        )))
    }
}

/// `φ(Φ⁻¹(α)) = exp(−[Φ⁻¹(α)]²/2)/√(2π)`.
fn density_at_quantile(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(std_normal_pdf(std_normal_quantile(alpha)?))
}

/// Confidence level and optimism weight selecting a point in the index family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskProfile {
    alpha: f64,
    lambda: f64,
}

impl RiskProfile {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Domain(format!(
                "lambda must lie in [0, 1], got {lambda}"
            )));
        }
        Ok(RiskProfile { alpha, lambda })
    }

    /// The risk-neutral profile `λ = α`.
    pub fn neutral(alpha: f64) -> Result<Self> {
        Self::new(alpha, alpha)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndexKind {
    /// Mean travel time.
    Mtt,
    /// Percentile travel time / travel time budget.
    PttTtb,
    /// Mean-below travel time.
    Mbtt,
    /// Mean-excess travel time.
    Mett,
    /// Combined mean travel time.
    Cmtt,
}

impl IndexKind {
    pub const ALL: [IndexKind; 5] = [
        IndexKind::Mtt,
        IndexKind::PttTtb,
        IndexKind::Mbtt,
        IndexKind::Mett,
        IndexKind::Cmtt,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            IndexKind::Mtt => "mtt",
            IndexKind::PttTtb => "ttb",
            IndexKind::Mbtt => "mbtt",
            IndexKind::Mett => "mett",
            IndexKind::Cmtt => "cmtt",
        }
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IndexKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mtt" => Ok(IndexKind::Mtt),
            "ptt" | "ttb" | "ptt_ttb" => Ok(IndexKind::PttTtb),
            "mbtt" => Ok(IndexKind::Mbtt),
            "mett" => Ok(IndexKind::Mett),
            "cmtt" => Ok(IndexKind::Cmtt),
            other => Err(Error::Config(format!("unknown index kind `{other}`"))),
        }
    }
}

/// Travel time budget `μ + σ·Φ⁻¹(α)`.
pub fn ttb(mu: f64, sigma: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_sigma(sigma)?;
    Ok(mu + sigma * std_normal_quantile(alpha)?)
}

/// Mean-below travel time `E(T | T ≤ ξ(α))`.
pub fn mbtt(mu: f64, sigma: f64, alpha: f64) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(mu - sigma * density_at_quantile(alpha)? / alpha)
}

/// Mean-excess travel time `E(T | T ≥ ξ(α))`.
pub fn mett(mu: f64, sigma: f64, alpha: f64) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(mu + sigma * density_at_quantile(alpha)? / (1.0 - alpha))
}

/// Combined mean travel time in closed form,
/// `μ + (α − λ)σφ(z)/(α(1 − α))`.
pub fn cmtt(mu: f64, sigma: f64, profile: &RiskProfile) -> Result<f64> {
    check_sigma(sigma)?;
    let (alpha, lambda) = (profile.alpha, profile.lambda);
    Ok(mu + (alpha - lambda) * sigma * density_at_quantile(alpha)? / (alpha * (1.0 - alpha)))
}

/// Coefficient `c` with `index = μ + c·σ`. Negative is risk-optimistic,
/// zero neutral, positive pessimistic.
pub fn risk_coefficient(kind: IndexKind, profile: &RiskProfile) -> f64 {
    let alpha = profile.alpha;
    // Profile construction guarantees alpha in (0, 1).
    let z = std_normal_quantile(alpha).expect("validated alpha");
    let dens = std_normal_pdf(z);
    match kind {
        IndexKind::Mtt => 0.0,
        IndexKind::PttTtb => z,
        IndexKind::Mbtt => -dens / alpha,
        IndexKind::Mett => dens / (1.0 - alpha),
        IndexKind::Cmtt => (alpha - profile.lambda) * dens / (alpha * (1.0 - alpha)),
    }
}

/// `μ + c·σ`.
pub fn general_index(mu: f64, sigma: f64, c: f64) -> f64 {
    mu + c * sigma
}

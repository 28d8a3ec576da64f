//! Closed-form confidence radii and counting bounds.
//!
//! All formulas are evaluated with natural logarithms and with the
//! discretisation slack `ε = H√λ/K` already substituted.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const FIXED_POINT_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusConfig {
    pub d: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "K")]
    pub episodes: usize,
    #[serde(rename = "W")]
    pub w_bound: f64,
    pub lambda: f64,
    pub delta: f64,
    pub bonus_scale: f64,
}

impl RadiusConfig {
    /// Configuration with `λ = 1/(H²√d)` and `bonus_scale = 1`.
    pub fn new(d: usize, horizon: usize, episodes: usize, w_bound: f64, delta: f64) -> Self {
        Self {
            d,
            horizon,
            episodes,
            w_bound,
            lambda: default_lambda(d, horizon),
            delta,
            bonus_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.horizon == 0 || self.episodes == 0 {
            return Err(Error::invalid("d, H and K must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.bonus_scale > 0.0) || !self.bonus_scale.is_finite() {
            return Err(Error::invalid(format!("bonus_scale must be positive, got {}", self.bonus_scale)));
        }
        if !(self.w_bound >= 0.0) || !self.w_bound.is_finite() {
            return Err(Error::invalid(format!("W must be nonnegative, got {}", self.w_bound)));
        }
        Ok(())
    }
}

pub fn default_lambda(d: usize, horizon: usize) -> f64 {
    1.0 / ((horizon * horizon) as f64 * (d as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusSet {
    pub beta_hat1: f64,
    pub beta_hat2: f64,
    pub beta_hat: f64,
    pub beta_bar: f64,
    pub beta_tilde: f64,
    pub beta_check: f64,
    pub b_hat: f64,
    pub b_check: f64,
    pub j_cap: f64,
    pub l_cap: f64,
    /// Set when the correction radius `β̂⁽²⁾` exceeds the leading `β̂⁽¹⁾`.
    pub correction_dominates: bool,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

fn check_nonnegative(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::invalid(format!("{name} must be nonnegative and finite, got {v}")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0,1), got {delta}")));
    }
    Ok(())
}

/// Bernstein radius for self-normalised vector martingales:
/// `8σ√(d·ln(1+tL²/(dλ))·ln(4t²/δ)) + 4R·ln(4t²/δ)`.
pub fn bernstein_radius(sigma: f64, r_cap: f64, d: usize, l2_cap: f64, lambda: f64, t: usize, delta: f64) -> Result<f64> {
    check_nonnegative("sigma", sigma)?;
    check_nonnegative("R", r_cap)?;
    check_positive("L", l2_cap)?;
    check_positive("lambda", lambda)?;
    check_delta(delta)?;
    if d == 0 || t == 0 {
        return Err(Error::invalid("d and t must be at least 1"));
    }
    let (d, t) = (d as f64, t as f64);
    let log_det = d * (1.0 + t * l2_cap * l2_cap / (d * lambda)).ln();
    let log_conf = (4.0 * t * t / delta).ln();
    Ok(8.0 * sigma * (log_det * log_conf).sqrt() + 4.0 * r_cap * log_conf)
}

/// Hoeffding radius for self-normalised vector martingales:
/// `R√(d·ln(1+tL²/(dλ)) + ln(1/δ))`.
pub fn hoeffding_radius(r_cap: f64, d: usize, l2_cap: f64, lambda: f64, t: usize, delta: f64) -> Result<f64> {
    check_nonnegative("R", r_cap)?;
    check_positive("L", l2_cap)?;
    check_positive("lambda", lambda)?;
    check_delta(delta)?;
    if d == 0 || t == 0 {
        return Err(Error::invalid("d and t must be at least 1"));
    }
    let (d, t) = (d as f64, t as f64);
    Ok(r_cap * (d * (1.0 + t * l2_cap * l2_cap / (d * lambda)).ln() + (1.0 / delta).ln()).sqrt())
}

/// Bound on the number of rounds with `‖x_t‖_{Z_{t−1}⁻¹} ≥ c`:
/// `3d/ln(1+c²) · ln(1 + L²/(λ·ln(1+c²)))`.
pub fn elliptical_count_bound(d: usize, l2_cap: f64, lambda: f64, c: f64) -> Result<f64> {
    check_positive("c", c)?;
    check_positive("L", l2_cap)?;
    check_positive("lambda", lambda)?;
    if d == 0 {
        return Err(Error::invalid("d must be at least 1"));
    }
    let lc = (1.0 + c * c).ln();
    Ok(3.0 * d as f64 / lc * (1.0 + l2_cap * l2_cap / (lambda * lc)).ln())
}

/// Elliptical potential lemma: `Σ_t min{1, ‖x_t‖²_{Z_{t−1}⁻¹}} ≤ 2d·ln(1 + TL²/(dλ))`.
pub fn elliptical_sum_bound(d: usize, l2_cap: f64, lambda: f64, t: usize) -> Result<f64> {
    check_positive("L", l2_cap)?;
    check_positive("lambda", lambda)?;
    if d == 0 {
        return Err(Error::invalid("d must be at least 1"));
    }
    let d = d as f64;
    Ok(2.0 * d * (1.0 + t as f64 * l2_cap * l2_cap / (d * lambda)).ln())
}

/// Maximum number of determinant-doubling switches: `dH·ln(1+K)`.
pub fn switch_count_bound(d: usize, horizon: usize, episodes: usize) -> f64 {
    (d * horizon) as f64 * (1.0 + episodes as f64).ln()
}

/// Iterates `B ← 2β(B)` from `B = 1` until `β(B) ≤ B`.
fn close_fixed_point(name: &str, beta: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    let mut b = 1.0;
    for _ in 0..FIXED_POINT_MAX_ITERS {
        let v = beta(b);
        if !v.is_finite() {
            return Err(Error::NumericFailure(format!("{name} is not finite at B = {b}")));
        }
        if v <= b {
            return Ok((v, b));
        }
        b = 2.0 * v;
    }
    Err(Error::NumericFailure(format!(
        "{name} fixed point did not close within {FIXED_POINT_MAX_ITERS} iterations"
    )))
}

pub fn compute_radius_set(cfg: &RadiusConfig) -> Result<RadiusSet> {
    cfg.validate()?;
    let d = cfg.d as f64;
    let hz = cfg.horizon as f64;
    let k = cfg.episodes as f64;
    let lam = cfg.lambda;
    let delta = cfg.delta;

    let j_cap = d * hz * (1.0 + k).ln();
    let l_cap = cfg.w_bound + k / lam;
    let log_k = (1.0 + k / (hz * d * lam)).ln();
    let log_conf = (4.0 * k * k * hz / delta).ln();
    let reg = hz * (lam * d).sqrt();
    let sqrt_lam = lam.sqrt();

    // Covering terms shared by β̂⁽²⁾ and β̄.
    let cover_w = d * j_cap * (1.0 + 4.0 * k * l_cap / (hz * sqrt_lam)).ln();
    let cover_b = |b: f64| d * d * j_cap * (1.0 + 8.0 * k * k * b * b * d.sqrt() / (hz * hz * lam * lam)).ln();

    let beta_hat1 = 8.0 * (d * log_k * log_conf).sqrt() + 4.0 * log_conf + reg;
    let beta_hat2_at = |b: f64| {
        let cov = log_conf + cover_w + cover_b(b);
        8.0 * (2.0 / (hz * d * d) * log_k * cov).sqrt() + 4.0 / (hz * d.powf(2.5)) * cov + reg + 2.0
    };
    let (_, b_hat) = close_fixed_point("beta_hat", |b| beta_hat1 + beta_hat2_at(b))?;
    let beta_hat2 = beta_hat2_at(b_hat);
    let beta_hat = beta_hat1 + beta_hat2;

    let log_h = (hz / delta).ln();
    let beta_bar = hz.sqrt() * (d * log_k + log_h + cover_w + cover_b(b_hat)).sqrt() + reg + 2.0;
    let beta_tilde = hz.powf(1.5)
        * (d * log_k
            + log_h
            + d * j_cap * (1.0 + 8.0 * k * l_cap / sqrt_lam).ln()
            + d * d * j_cap * (1.0 + 32.0 * k * k * b_hat * b_hat * d.sqrt() / (lam * lam)).ln())
        .sqrt()
        + hz * hz * (lam * d).sqrt()
        + 2.0;
    let beta_check_at = |b: f64| {
        hz.sqrt()
            * (d * log_k
                + log_h
                + d * (1.0 + 4.0 * k * l_cap / (hz * sqrt_lam)).ln()
                + d * d * (1.0 + 8.0 * k * k * b * b * d.sqrt() / (hz * hz * lam * lam)).ln())
            .sqrt()
            + reg
            + 2.0
    };
    let (beta_check, b_check) = close_fixed_point("beta_check", beta_check_at)?;

    let set = RadiusSet {
        beta_hat1,
        beta_hat2,
        beta_hat,
        beta_bar,
        beta_tilde,
        beta_check,
        b_hat,
        b_check,
        j_cap,
        l_cap,
        correction_dominates: beta_hat2 >= beta_hat1,
    };
    if !(set.beta_hat <= set.b_hat && set.beta_check <= set.b_check) {
        return Err(Error::NumericFailure("radius upper bounds B do not dominate their radii".into()));
    }
    Ok(set)
}

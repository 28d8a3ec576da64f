//! Monte Carlo checks of the concentration bounds the agents rely on.
//!
//! Every trial draws from its own ChaCha stream `(seed, trial index)`, so
//! aggregate results do not depend on how trials are scheduled.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::GramState;
use crate::radii::{bernstein_radius, elliptical_count_bound, elliptical_sum_bound, hoeffding_radius};
use crate::rng::{substream, LabRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    /// `U[−√3σ, √3σ]`.
    UniformBounded,
    /// `N(0, σ²)` conditioned on `|η| ≤ 3σ`.
    TruncatedGaussian,
    /// `±σ` with equal probability.
    RademacherScaled,
}

impl NoiseModel {
    /// Almost-sure bound on the raw noise.
    pub fn raw_cap(&self, sigma: f64) -> f64 {
        match self {
            NoiseModel::UniformBounded => 3f64.sqrt() * sigma,
            NoiseModel::TruncatedGaussian => 3.0 * sigma,
            NoiseModel::RademacherScaled => sigma,
        }
    }

    fn sample(&self, sigma: f64, rng: &mut LabRng) -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        match self {
            NoiseModel::UniformBounded => {
                let b = 3f64.sqrt() * sigma;
                rng.random_range(-b..=b)
            }
            NoiseModel::TruncatedGaussian => loop {
                // Symmetric truncation keeps the mean exactly zero.
                let z: f64 = StandardNormal.sample(rng);
                if z.abs() <= 3.0 {
                    break z * sigma;
                }
            },
            NoiseModel::RademacherScaled => {
                if rng.random::<bool>() {
                    sigma
                } else {
                    -sigma
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureModel {
    /// Independent uniform draws from the sphere of radius `L`.
    IidSphere,
    /// One uniform draw from the sphere of radius `L`, repeated forever.
    AdversarialRepeat,
    /// Uniform sphere directions with norm `L/√t`.
    Decaying,
    /// Always the zero vector.
    Zero,
}

fn sphere(d: usize, radius: f64, rng: &mut LabRng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x * radius / n).collect();
        }
    }
}

/// Generates `x_t` for `t = 1, 2, …`.
struct FeatureStream {
    model: FeatureModel,
    d: usize,
    l2_cap: f64,
    repeated: Option<Vec<f64>>,
    t: usize,
}

impl FeatureStream {
    fn new(model: FeatureModel, d: usize, l2_cap: f64) -> Self {
        Self { model, d, l2_cap, repeated: None, t: 0 }
    }

    fn next(&mut self, rng: &mut LabRng) -> Vec<f64> {
        self.t += 1;
        match self.model {
            FeatureModel::IidSphere => sphere(self.d, self.l2_cap, rng),
            FeatureModel::AdversarialRepeat => {
                let (d, l) = (self.d, self.l2_cap);
                self.repeated.get_or_insert_with(|| sphere(d, l, rng)).clone()
            }
            FeatureModel::Decaying => sphere(self.d, self.l2_cap / (self.t as f64).sqrt(), rng),
            FeatureModel::Zero => vec![0.0; self.d],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelfNormalizedBound {
    /// Variance-aware radius with scaled-noise cap `R`.
    Bernstein,
    /// Radius driven by the raw noise bound.
    Hoeffding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleSpec {
    pub d: usize,
    pub t_max: usize,
    pub lambda: f64,
    pub l2_cap: f64,
    pub sigma: f64,
    /// Cap on `|η_t|·min{1, ‖x_t‖_{Z_{t−1}⁻¹}}`; `None` disables clipping.
    pub r_cap: Option<f64>,
    pub noise: NoiseModel,
    pub features: FeatureModel,
}

impl MartingaleSpec {
    fn validate(&self) -> Result<()> {
        if self.d == 0 || self.t_max == 0 {
            return Err(Error::invalid("d and T must be positive"));
        }
        if !(self.lambda > 0.0) || !(self.l2_cap > 0.0) || !(self.sigma >= 0.0) {
            return Err(Error::invalid("lambda and L must be positive, sigma nonnegative"));
        }
        if let Some(r) = self.r_cap {
            if !(r >= 0.0) {
                return Err(Error::invalid("R must be nonnegative"));
            }
        }
        Ok(())
    }

    /// Noise cap used by the radius: the declared `R` or, without
    /// clipping, the raw noise bound.
    pub fn effective_r(&self) -> f64 {
        self.r_cap.unwrap_or_else(|| self.noise.raw_cap(self.sigma))
    }
}

/// Result of one simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    /// `‖Σ_{i≤t} x_i η_i‖_{Z_t⁻¹}` for `t = 1..T`.
    pub norms: Vec<f64>,
    pub radii: Vec<f64>,
    pub violated: bool,
    pub tightness: f64,
    /// 1-based time of maximal tightness.
    pub argmax_t: usize,
    /// Largest observed `|η_t|·min{1, ‖x_t‖_{Z_{t−1}⁻¹}}`.
    pub scaled_noise_max: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

pub fn run_self_normalized_trial(
    spec: &MartingaleSpec,
    bound: SelfNormalizedBound,
    delta: f64,
    rng: &mut LabRng,
) -> Result<TrialOutcome> {
    spec.validate()?;
    let mut gram = GramState::new(spec.d, spec.lambda)?;
    let mut sum = vec![0.0; spec.d];
    let mut features = FeatureStream::new(spec.features, spec.d, spec.l2_cap);
    let mut norms = Vec::with_capacity(spec.t_max);
    let mut radii = Vec::with_capacity(spec.t_max);
    let (mut tightness, mut argmax_t, mut scaled_max) = (0.0f64, 1usize, 0.0f64);
    let r_for_radius = match bound {
        SelfNormalizedBound::Bernstein => spec.effective_r(),
        SelfNormalizedBound::Hoeffding => spec.noise.raw_cap(spec.sigma),
    };
    for t in 1..=spec.t_max {
        let x = features.next(rng);
        let m = gram.potential_unchecked(&x).min(1.0);
        let mut eta = spec.noise.sample(spec.sigma, rng);
        if let Some(r) = spec.r_cap {
            if eta.abs() * m > r {
                // Symmetric clipping keeps the conditional mean at zero.
                eta *= r / (eta.abs() * m);
            }
        }
        scaled_max = scaled_max.max(eta.abs() * m);
        for (s, xi) in sum.iter_mut().zip(&x) {
            *s += xi * eta;
        }
        if x.iter().any(|v| *v != 0.0) {
            gram.rank1_update(&x, 1.0)?;
        }
        let norm = gram.potential_unchecked(&sum);
        let beta = match bound {
            SelfNormalizedBound::Bernstein => {
                bernstein_radius(spec.sigma, r_for_radius, spec.d, spec.l2_cap, spec.lambda, t, delta)?
            }
            SelfNormalizedBound::Hoeffding => {
                hoeffding_radius(r_for_radius, spec.d, spec.l2_cap, spec.lambda, t, delta)?
            }
        };
        let tight = ratio(norm, beta);
        if tight > tightness {
            tightness = tight;
            argmax_t = t;
        }
        norms.push(norm);
        radii.push(beta);
    }
    Ok(TrialOutcome { norms, radii, violated: tightness > 1.0, tightness, argmax_t, scaled_noise_max: scaled_max })
}

/// Per-trial row of a Monte Carlo study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub violated: bool,
    pub tightness: f64,
    pub argmax_t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSummary {
    pub check: String,
    pub trials: usize,
    pub violations: usize,
    pub rate: f64,
    pub delta: f64,
    pub mean_tightness: f64,
    pub max_tightness: f64,
}

impl RateSummary {
    fn from_records(check: &str, delta: f64, records: &[TrialRecord]) -> Self {
        let n = records.len();
        let violations = records.iter().filter(|r| r.violated).count();
        let mean = records.iter().map(|r| r.tightness).sum::<f64>() / n.max(1) as f64;
        let max = records.iter().map(|r| r.tightness).fold(0.0, f64::max);
        Self {
            check: check.into(),
            trials: n,
            violations,
            rate: violations as f64 / n.max(1) as f64,
            delta,
            mean_tightness: mean,
            max_tightness: max,
        }
    }

    /// Whether the rate is within `δ` plus a three-standard-error binomial allowance.
    pub fn within_allowance(&self) -> bool {
        let se = (self.delta * (1.0 - self.delta) / self.trials.max(1) as f64).sqrt();
        self.rate <= self.delta + 3.0 * se
    }
}

fn check_trials(n_trials: usize) -> Result<()> {
    if n_trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    Ok(())
}

/// Violation rate of a self-normalised bound over independent trials.
pub fn violation_rate(
    spec: &MartingaleSpec,
    bound: SelfNormalizedBound,
    delta: f64,
    n_trials: usize,
    seed: u64,
) -> Result<(RateSummary, Vec<TrialRecord>)> {
    check_trials(n_trials)?;
    let records = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            run_self_normalized_trial(spec, bound, delta, &mut rng).map(|o| TrialRecord {
                trial_id: i,
                violated: o.violated,
                tightness: o.tightness,
                argmax_t: o.argmax_t,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let name = match bound {
        SelfNormalizedBound::Bernstein => "bernstein",
        SelfNormalizedBound::Hoeffding => "hoeffding",
    };
    Ok((RateSummary::from_records(name, delta, &records), records))
}

/// Radius comparison behind the sharpness claim: the variance-aware radius
/// evaluated with the observed scaled-noise cap versus the same formula with
/// the raw noise cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SharpnessReport {
    pub raw_cap: f64,
    pub scaled_cap: f64,
    pub radius_scaled: f64,
    pub radius_raw: f64,
    pub ratio: f64,
}

pub fn sharpness_ratio(spec: &MartingaleSpec, delta: f64, n_trials: usize, seed: u64) -> Result<SharpnessReport> {
    check_trials(n_trials)?;
    let unclipped = MartingaleSpec { r_cap: None, ..*spec };
    let scaled_cap = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            run_self_normalized_trial(&unclipped, SelfNormalizedBound::Bernstein, delta, &mut rng)
                .map(|o| o.scaled_noise_max)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let raw_cap = spec.noise.raw_cap(spec.sigma);
    let radius = |r: f64| bernstein_radius(spec.sigma, r, spec.d, spec.l2_cap, spec.lambda, spec.t_max, delta);
    let radius_scaled = radius(scaled_cap)?;
    let radius_raw = radius(raw_cap)?;
    Ok(SharpnessReport { raw_cap, scaled_cap, radius_scaled, radius_raw, ratio: ratio(radius_scaled, radius_raw) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EllipticalOutcome {
    /// Number of `t` with `‖x_t‖_{Z_{t−1}⁻¹} ≥ c`.
    pub count: usize,
    pub count_bound: f64,
    /// `Σ_t min{1, ‖x_t‖²_{Z_{t−1}⁻¹}}`.
    pub potential_sum: f64,
    pub sum_bound: f64,
}

impl EllipticalOutcome {
    pub fn holds(&self) -> bool {
        self.count as f64 <= self.count_bound && self.potential_sum <= self.sum_bound
    }
}

/// Runs one feature path and measures both elliptical-potential bounds
/// without checking them.
pub fn elliptical_path(
    d: usize,
    t_max: usize,
    l2_cap: f64,
    lambda: f64,
    c: f64,
    features: FeatureModel,
    rng: &mut LabRng,
) -> Result<EllipticalOutcome> {
    let count_bound = elliptical_count_bound(d, l2_cap, lambda, c)?;
    let sum_bound = elliptical_sum_bound(d, l2_cap, lambda, t_max)?;
    let mut gram = GramState::new(d, lambda)?;
    let mut stream = FeatureStream::new(features, d, l2_cap);
    let (mut count, mut potential_sum) = (0usize, 0.0f64);
    for _ in 0..t_max {
        let x = stream.next(rng);
        let p = gram.potential_unchecked(&x);
        if p >= c {
            count += 1;
        }
        potential_sum += (p * p).min(1.0);
        if x.iter().any(|v| *v != 0.0) {
            gram.rank1_update(&x, 1.0)?;
        }
    }
    Ok(EllipticalOutcome { count, count_bound, potential_sum, sum_bound })
}

/// Like [`elliptical_path`], returning a violation as [`Error::LemmaViolation`].
pub fn elliptical_count_experiment(
    d: usize,
    t_max: usize,
    l2_cap: f64,
    lambda: f64,
    c: f64,
    features: FeatureModel,
    rng: &mut LabRng,
) -> Result<EllipticalOutcome> {
    let out = elliptical_path(d, t_max, l2_cap, lambda, c, features, rng)?;
    if !out.holds() {
        return Err(Error::LemmaViolation(format!(
            "elliptical bounds: count {} vs {}, sum {} vs {}",
            out.count, out.count_bound, out.potential_sum, out.sum_bound
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllipticalSummary {
    pub trials: usize,
    pub violations: usize,
    pub max_count: usize,
    pub count_bound: f64,
    pub max_potential_sum: f64,
    pub sum_bound: f64,
}

/// Many independent elliptical paths; violations are counted, not raised.
/// Trial `i` uses substream `i` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn elliptical_study(
    d: usize,
    t_max: usize,
    l2_cap: f64,
    lambda: f64,
    c: f64,
    features: FeatureModel,
    n_trials: usize,
    seed: u64,
) -> Result<(EllipticalSummary, Vec<EllipticalOutcome>)> {
    check_trials(n_trials)?;
    let outcomes = (0..n_trials)
        .into_par_iter()
        .map(|i| elliptical_path(d, t_max, l2_cap, lambda, c, features, &mut substream(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let summary = EllipticalSummary {
        trials: n_trials,
        violations: outcomes.iter().filter(|o| !o.holds()).count(),
        max_count: outcomes.iter().map(|o| o.count).max().unwrap_or(0),
        count_bound: elliptical_count_bound(d, l2_cap, lambda, c)?,
        max_potential_sum: outcomes.iter().map(|o| o.potential_sum).fold(0.0, f64::max),
        sum_bound: elliptical_sum_bound(d, l2_cap, lambda, t_max)?,
    };
    Ok((summary, outcomes))
}

pub fn write_elliptical_csv(path: &Path, outcomes: &[EllipticalOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["trial_id", "violated", "count", "count_bound", "potential_sum", "sum_bound"])?;
    for (i, o) in outcomes.iter().enumerate() {
        w.serialize((i, !o.holds(), o.count, o.count_bound, o.potential_sum, o.sum_bound))?;
    }
    w.flush()?;
    Ok(())
}

/// Increment distribution of a scalar martingale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepModel {
    /// `±scale` with equal probability.
    Rademacher { scale: f64 },
    /// `±c` each with probability `p/2`, otherwise 0 (variance `c²p`).
    Sparse { c: f64, p: f64 },
    Zero,
}

impl StepModel {
    /// Almost-sure bound on `|X_i|`.
    pub fn cap(&self) -> f64 {
        match *self {
            StepModel::Rademacher { scale } => scale,
            StepModel::Sparse { c, .. } => c,
            StepModel::Zero => 0.0,
        }
    }

    /// Conditional variance of one increment.
    pub fn variance(&self) -> f64 {
        match *self {
            StepModel::Rademacher { scale } => scale * scale,
            StepModel::Sparse { c, p } => c * c * p,
            StepModel::Zero => 0.0,
        }
    }

    fn sample(&self, rng: &mut LabRng) -> f64 {
        match *self {
            StepModel::Rademacher { scale } => {
                if rng.random::<bool>() {
                    scale
                } else {
                    -scale
                }
            }
            StepModel::Sparse { c, p } => {
                let u: f64 = rng.random();
                if u < p / 2.0 {
                    c
                } else if u < p {
                    -c
                } else {
                    0.0
                }
            }
            StepModel::Zero => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalarBound {
    /// `M√(2n·ln(1/δ))` at the final time.
    Azuma,
    /// `√(2V²·ln(1/δ)) + (2/3)c·ln(1/δ)` at the final time.
    Freedman,
    /// `√(2V_t²·ln(2t²/δ)) + 2c·ln(2t²/δ)/3` simultaneously for all `t`.
    UniformBernstein,
}

impl ScalarBound {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScalarBound::Azuma => "azuma",
            ScalarBound::Freedman => "freedman",
            ScalarBound::UniformBernstein => "uniform-bernstein",
        }
    }
}

pub fn azuma_bound(cap: f64, n: usize, delta: f64) -> f64 {
    cap * (2.0 * n as f64 * (1.0 / delta).ln()).sqrt()
}

pub fn freedman_bound(variance_sum: f64, cap: f64, delta: f64) -> f64 {
    let l = (1.0 / delta).ln();
    (2.0 * variance_sum * l).sqrt() + 2.0 / 3.0 * cap * l
}

pub fn uniform_bernstein_bound(variance_sum: f64, cap: f64, t: usize, delta: f64) -> f64 {
    let l = (2.0 * (t * t) as f64 / delta).ln();
    (2.0 * variance_sum * l).sqrt() + 2.0 * cap * l / 3.0
}

/// One scalar martingale path of length `n`; tightness is the largest
/// `S_t / bound_t` over the times the bound covers.
pub fn scalar_trial(steps: StepModel, n: usize, bound: ScalarBound, delta: f64, rng: &mut LabRng) -> TrialRecord {
    let (cap, var) = (steps.cap(), steps.variance());
    let mut sum = 0.0;
    let (mut tightness, mut argmax_t) = (0.0f64, n);
    for t in 1..=n {
        sum += steps.sample(rng);
        if bound == ScalarBound::UniformBernstein {
            let tight = ratio(sum.max(0.0), uniform_bernstein_bound(var * t as f64, cap, t, delta));
            if tight > tightness {
                tightness = tight;
                argmax_t = t;
            }
        }
    }
    match bound {
        ScalarBound::Azuma => tightness = ratio(sum.max(0.0), azuma_bound(cap, n, delta)),
        ScalarBound::Freedman => tightness = ratio(sum.max(0.0), freedman_bound(var * n as f64, cap, delta)),
        ScalarBound::UniformBernstein => {}
    }
    TrialRecord { trial_id: 0, violated: tightness > 1.0, tightness, argmax_t }
}

pub fn scalar_check(
    steps: StepModel,
    n: usize,
    bound: ScalarBound,
    delta: f64,
    n_trials: usize,
    seed: u64,
) -> Result<(RateSummary, Vec<TrialRecord>)> {
    check_trials(n_trials)?;
    if n == 0 {
        return Err(Error::invalid("martingale length must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0,1), got {delta}")));
    }
    let records: Vec<TrialRecord> = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            TrialRecord { trial_id: i, ..scalar_trial(steps, n, bound, delta, &mut rng) }
        })
        .collect();
    Ok((RateSummary::from_records(bound.as_str(), delta, &records), records))
}

pub fn write_trials_csv(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["trial_id", "violated", "tightness", "argmax_t"])?;
    for r in records {
        w.serialize((r.trial_id, r.violated, r.tightness, r.argmax_t))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, summaries: &[RateSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in summaries {
        w.serialize(s)?;
    }
    if summaries.is_empty() {
        w.write_record(["check", "trials", "violations", "rate", "delta", "mean_tightness", "max_tightness"])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn spec(noise: NoiseModel, features: FeatureModel, sigma: f64) -> MartingaleSpec {
        MartingaleSpec { d: 2, t_max: 50, lambda: 1.0, l2_cap: 1.0, sigma, r_cap: Some(1.0), noise, features }
    }

    #[test]
    fn zero_noise_never_violates() {
        let s = MartingaleSpec { r_cap: Some(0.0), ..spec(NoiseModel::UniformBounded, FeatureModel::IidSphere, 0.0) };
        let o = run_self_normalized_trial(&s, SelfNormalizedBound::Bernstein, 0.1, &mut seeded(1)).unwrap();
        assert!(o.norms.iter().all(|n| *n == 0.0));
        assert!(!o.violated);
        let (sum, _) = violation_rate(&s, SelfNormalizedBound::Bernstein, 0.1, 1, 3).unwrap();
        assert_eq!(sum.rate, 0.0);
    }

    #[test]
    fn zero_features_give_zero_norm() {
        let mut s = spec(NoiseModel::RademacherScaled, FeatureModel::Zero, 1.0);
        s.d = 1;
        let o = run_self_normalized_trial(&s, SelfNormalizedBound::Hoeffding, 0.1, &mut seeded(2)).unwrap();
        assert!(o.norms.iter().all(|n| *n == 0.0));
    }

    #[test]
    fn noise_models_respect_caps() {
        let mut rng = seeded(7);
        for m in [NoiseModel::UniformBounded, NoiseModel::TruncatedGaussian, NoiseModel::RademacherScaled] {
            let n = 20000;
            let xs: Vec<f64> = (0..n).map(|_| m.sample(2.0, &mut rng)).collect();
            assert!(xs.iter().all(|x| x.abs() <= m.raw_cap(2.0) + 1e-12));
            let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
            assert!(var <= 4.0 * 1.05, "{m:?} variance {var}");
        }
    }

    #[test]
    fn repeated_unit_vector_counts_once() {
        let o = elliptical_count_experiment(1, 10, 1.0, 1.0, 1.0, FeatureModel::AdversarialRepeat, &mut seeded(0)).unwrap();
        assert_eq!(o.count, 1);
        assert!((o.count_bound - 3.8654212832514183).abs() < 1e-12);
        let z = elliptical_count_experiment(3, 10, 1.0, 1.0, 0.5, FeatureModel::Zero, &mut seeded(0)).unwrap();
        assert_eq!(z.count, 0);
    }

    #[test]
    fn zero_scalar_martingale() {
        let (s, _) = scalar_check(StepModel::Zero, 100, ScalarBound::Azuma, 0.05, 10, 1).unwrap();
        assert_eq!(s.violations, 0);
    }

    #[test]
    fn rates_are_seed_deterministic() {
        let s = spec(NoiseModel::UniformBounded, FeatureModel::IidSphere, 1.0);
        let a = violation_rate(&s, SelfNormalizedBound::Bernstein, 0.05, 50, 9).unwrap();
        let b = violation_rate(&s, SelfNormalizedBound::Bernstein, 0.05, 50, 9).unwrap();
        assert_eq!(a, b);
    }
}

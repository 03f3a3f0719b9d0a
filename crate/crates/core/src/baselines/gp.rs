//! Direct-strategy Gaussian-process regression, one submodel per lead time.
//!
//! Kernel: `σ_f² · Matérn₃/₂(r; ℓ) + σ_n² · δ`, on standardized features
//! and targets. Hyperparameters are fitted per lead time by maximizing the
//! log marginal likelihood in log space. All submodels share one training
//! input set, so the pairwise distance matrix is computed once.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linalg::{sq_dist, Cholesky, Matrix};
use super::standardize::Standardizer;
use super::windows::FeatureWindow;
use crate::error::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;
const LOG_2PI: f64 = 1.837_877_066_409_345_3;

/// Matérn ν = 3/2 correlation at distance `r`.
pub fn matern32(r: f64, length_scale: f64) -> f64 {
    let a = SQRT3 * r / length_scale;
    (1.0 + a) * (-a).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub signal_var: f64,
    pub length_scale: f64,
    pub noise_var: f64,
}

impl MaternParams {
    fn to_log(self) -> [f64; 3] {
        [
            self.signal_var.ln(),
            self.length_scale.ln(),
            self.noise_var.ln(),
        ]
    }

    fn from_log(t: [f64; 3]) -> Self {
        MaternParams {
            signal_var: t[0].exp(),
            length_scale: t[1].exp(),
            noise_var: t[2].exp(),
        }
    }
}

/// Full covariance between two inputs; the white-noise term applies only
/// when they are identical.
pub fn kernel(x: &[f64], y: &[f64], p: &MaternParams) -> f64 {
    let r = sq_dist(x, y).sqrt();
    let white = if x == y { p.noise_var } else { 0.0 };
    p.signal_var * matern32(r, p.length_scale) + white
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    pub max_points: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub length_scale_bounds: (f64, f64),
    pub variance_bounds: (f64, f64),
    pub jitter_initial: f64,
    pub jitter_max: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            max_points: 1000,
            restarts: 3,
            max_iters: 100,
            seed: 0,
            length_scale_bounds: (1e-2, 1e3),
            variance_bounds: (1e-6, 1e4),
            jitter_initial: 1e-8,
            jitter_max: 1e-2,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        let ok_bounds = |(lo, hi): (f64, f64)| lo > 0.0 && hi > lo && hi.is_finite();
        if self.max_points < 2 || self.restarts == 0 {
            return Err(Error::InvalidArgument(
                "gp config: max_points must be >= 2 and restarts >= 1".into(),
            ));
        }
        if !ok_bounds(self.length_scale_bounds) || !ok_bounds(self.variance_bounds) {
            return Err(Error::InvalidArgument(
                "gp config: invalid hyperparameter bounds".into(),
            ));
        }
        if !(self.jitter_initial > 0.0 && self.jitter_max >= self.jitter_initial) {
            return Err(Error::InvalidArgument(
                "gp config: invalid jitter range".into(),
            ));
        }
        Ok(())
    }

    fn log_bounds(&self) -> [(f64, f64); 3] {
        let v = (self.variance_bounds.0.ln(), self.variance_bounds.1.ln());
        let l = (
            self.length_scale_bounds.0.ln(),
            self.length_scale_bounds.1.ln(),
        );
        [v, l, v]
    }
}

/// Symmetric matrix of Euclidean distances between rows of `x`.
pub fn distance_matrix(x: &Matrix) -> Matrix {
    let n = x.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let r = sq_dist(x.row(i), x.row(j)).sqrt();
            d.set(i, j, r);
            d.set(j, i, r);
        }
    }
    d
}

fn covariance(dist: &Matrix, p: &MaternParams) -> Matrix {
    let n = dist.rows();
    Matrix::from_fn(n, n, |i, j| {
        p.signal_var * matern32(dist.get(i, j), p.length_scale)
            + if i == j { p.noise_var } else { 0.0 }
    })
}

/// Log marginal likelihood of `y` under the kernel on precomputed distances.
pub fn log_marginal_likelihood(
    dist: &Matrix,
    y: &[f64],
    p: &MaternParams,
    config: &GpConfig,
) -> Result<f64> {
    let chol = Cholesky::factor_with_jitter(
        &covariance(dist, p),
        config.jitter_initial,
        config.jitter_max,
    )?;
    let alpha = chol.solve(y);
    let fit: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    Ok(-0.5 * fit - 0.5 * chol.log_det() - 0.5 * y.len() as f64 * LOG_2PI)
}

/// Log marginal likelihood and its gradient w.r.t.
/// `(ln σ_f², ln ℓ, ln σ_n²)`.
pub fn log_marginal_likelihood_grad(
    dist: &Matrix,
    y: &[f64],
    p: &MaternParams,
    config: &GpConfig,
) -> Result<(f64, [f64; 3])> {
    let n = y.len();
    let chol = Cholesky::factor_with_jitter(
        &covariance(dist, p),
        config.jitter_initial,
        config.jitter_max,
    )?;
    let alpha = chol.solve(y);
    let fit: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let lml = -0.5 * fit - 0.5 * chol.log_det() - 0.5 * n as f64 * LOG_2PI;

    // grad_i = ½ tr((ααᵀ − K⁻¹) ∂K/∂θ_i); exploit symmetry.
    let kinv = chol.inverse();
    let mut g = [0.0; 3];
    for i in 0..n {
        for j in 0..=i {
            let w = alpha[i] * alpha[j] - kinv.get(i, j);
            let a = SQRT3 * dist.get(i, j) / p.length_scale;
            let e = (-a).exp();
            let mult = if i == j { 1.0 } else { 2.0 };
            g[0] += mult * w * p.signal_var * (1.0 + a) * e;
            g[1] += mult * w * p.signal_var * a * a * e;
            if i == j {
                g[2] += w * p.noise_var;
            }
        }
    }
    Ok((lml, g.map(|v| 0.5 * v)))
}

fn project(t: [f64; 3], bounds: &[(f64, f64); 3]) -> [f64; 3] {
    let mut out = t;
    for (v, (lo, hi)) in out.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
    out
}

/// Projected gradient ascent with Armijo backtracking from one start.
fn ascend(dist: &Matrix, y: &[f64], start: [f64; 3], config: &GpConfig) -> Option<([f64; 3], f64)> {
    let bounds = config.log_bounds();
    let mut theta = project(start, &bounds);
    let (mut f, mut g) =
        log_marginal_likelihood_grad(dist, y, &MaternParams::from_log(theta), config).ok()?;
    if !f.is_finite() {
        return None;
    }
    let mut step = 1.0 / g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for _ in 0..config.max_iters {
        let mut accepted = None;
        for _ in 0..40 {
            let cand = project(
                [
                    theta[0] + step * g[0],
                    theta[1] + step * g[1],
                    theta[2] + step * g[2],
                ],
                &bounds,
            );
            let moved: f64 = (0..3).map(|i| g[i] * (cand[i] - theta[i])).sum();
            if moved <= 0.0 {
                break;
            }
            if let Ok(fc) = log_marginal_likelihood(dist, y, &MaternParams::from_log(cand), config)
            {
                if fc.is_finite() && fc >= f + 1e-4 * moved {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, fc)) = accepted else { break };
        let shift = (0..3)
            .map(|i| (cand[i] - theta[i]).abs())
            .fold(0.0, f64::max);
        let gain = fc - f;
        theta = cand;
        match log_marginal_likelihood_grad(dist, y, &MaternParams::from_log(theta), config) {
            Ok((fv, gv)) => {
                f = fv;
                g = gv;
            }
            Err(_) => break,
        }
        if shift < 1e-6 || gain < 1e-9 * f.abs().max(1.0) {
            break;
        }
        step *= 2.0;
    }
    Some((theta, f))
}

fn median_distance(dist: &Matrix) -> f64 {
    let n = dist.rows();
    let mut v: Vec<f64> = (0..n)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| dist.get(i, j))
        .filter(|r| *r > 0.0)
        .collect();
    if v.is_empty() {
        return 1.0;
    }
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Hyperparameters used when every optimizer start fails: median pairwise
/// distance as length-scale, unit signal variance (standardized targets).
pub fn heuristic_params(dist: &Matrix, config: &GpConfig) -> MaternParams {
    let (llo, lhi) = config.length_scale_bounds;
    let (vlo, vhi) = config.variance_bounds;
    MaternParams {
        signal_var: 1.0f64.clamp(vlo, vhi),
        length_scale: median_distance(dist).clamp(llo, lhi),
        noise_var: 1e-1f64.clamp(vlo, vhi),
    }
}

/// Maximize the log marginal likelihood over several starts. The first
/// start is the heuristic point; the rest are drawn log-uniformly around it.
/// Returns the parameters and whether the heuristic fallback was used.
pub fn optimize_hyperparameters(
    dist: &Matrix,
    y: &[f64],
    config: &GpConfig,
    rng: &mut impl Rng,
) -> (MaternParams, bool) {
    let base = heuristic_params(dist, config).to_log();
    let mut starts = vec![base];
    for _ in 1..config.restarts {
        starts.push([
            base[0] + rng.gen_range(-2.3..2.3),
            base[1] + rng.gen_range(-2.3..2.3),
            base[2] + rng.gen_range(-4.6..2.3),
        ]);
    }
    let mut best: Option<([f64; 3], f64)> = None;
    for s in starts {
        if let Some((t, f)) = ascend(dist, y, s, config) {
            if best.is_none_or(|(_, bf)| f > bf) {
                best = Some((t, f));
            }
        }
    }
    match best {
        Some((t, _)) => (MaternParams::from_log(t), false),
        None => {
            log::warn!("gp hyperparameter optimization failed; using heuristic parameters");
            (heuristic_params(dist, config), true)
        }
    }
}

/// One fitted lead-time submodel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHead {
    pub params: MaternParams,
    pub y_mean: f64,
    pub y_scale: f64,
    pub alpha: Vec<f64>,
    pub chol: Cholesky,
    pub log_marginal_likelihood: f64,
    pub fallback: bool,
}

impl GpHead {
    fn fit(
        dist: &Matrix,
        targets: &[f64],
        params: Option<MaternParams>,
        config: &GpConfig,
        seed: u64,
    ) -> Result<Self> {
        let n = targets.len() as f64;
        let y_mean = targets.iter().sum::<f64>() / n;
        let var = targets
            .iter()
            .map(|v| (v - y_mean) * (v - y_mean))
            .sum::<f64>()
            / n;
        let y_scale = if var.sqrt() < 1e-12 { 1.0 } else { var.sqrt() };
        let y: Vec<f64> = targets.iter().map(|v| (v - y_mean) / y_scale).collect();
        let (params, fallback) = match params {
            Some(p) => (p, false),
            None => {
                optimize_hyperparameters(dist, &y, config, &mut ChaCha8Rng::seed_from_u64(seed))
            }
        };
        let chol = Cholesky::factor_with_jitter(
            &covariance(dist, &params),
            config.jitter_initial,
            config.jitter_max,
        )?;
        let alpha = chol.solve(&y);
        let fit: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
        let lml = -0.5 * fit - 0.5 * chol.log_det() - 0.5 * n * LOG_2PI;
        Ok(GpHead {
            params,
            y_mean,
            y_scale,
            alpha,
            chol,
            log_marginal_likelihood: lml,
            fallback,
        })
    }

    /// Predictive mean and std given the cross-covariance distances.
    fn predict_from_distances(&self, d_star: &[f64]) -> (f64, f64) {
        let p = &self.params;
        let mut k: Vec<f64> = d_star
            .iter()
            .map(|r| p.signal_var * matern32(*r, p.length_scale))
            .collect();
        let mean: f64 = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        self.chol.solve_lower_in_place(&mut k);
        let vtv: f64 = k.iter().map(|v| v * v).sum();
        let var = (p.signal_var + p.noise_var - vtv).max(f64::MIN_POSITIVE);
        (self.y_mean + self.y_scale * mean, self.y_scale * var.sqrt())
    }
}

/// Direct-strategy model: shared standardized inputs, one head per lead time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub format_version: u32,
    pub x_std: Standardizer,
    pub inputs: Matrix,
    pub heads: Vec<GpHead>,
    pub config: GpConfig,
}

/// Deterministic uniform-stride subsample of `n` items down to `max`.
pub fn stride_subsample(n: usize, max: usize, rng: &mut impl Rng) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let step = n as f64 / max as f64;
    let u: f64 = rng.gen();
    (0..max)
        .map(|i| (((i as f64 + u) * step) as usize).min(n - 1))
        .collect()
}

fn canonical_order(windows: &[FeatureWindow]) -> Vec<&FeatureWindow> {
    let mut v: Vec<&FeatureWindow> = windows.iter().collect();
    v.sort_by(|a, b| {
        a.issue.cmp(&b.issue).then_with(|| {
            a.features
                .iter()
                .chain(&a.targets)
                .zip(b.features.iter().chain(&b.targets))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    v
}

fn prepare(
    windows: &[FeatureWindow],
    horizon: usize,
    config: &GpConfig,
) -> Result<(Standardizer, Matrix, Vec<Vec<f64>>)> {
    config.validate()?;
    if windows.len() < 2 {
        return Err(Error::InsufficientData(
            "the GP needs at least 2 training windows".into(),
        ));
    }
    let d = windows[0].features.len();
    if windows
        .iter()
        .any(|w| w.features.len() != d || w.targets.len() < horizon)
    {
        return Err(Error::InvalidArgument(
            "windows have inconsistent shapes".into(),
        ));
    }
    // Sorted first so that results do not depend on the caller's ordering.
    let ordered = canonical_order(windows);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let picked: Vec<&FeatureWindow> = stride_subsample(ordered.len(), config.max_points, &mut rng)
        .into_iter()
        .map(|i| ordered[i])
        .collect();
    let x_std = Standardizer::fit(picked.iter().map(|w| w.features.as_slice()));
    let mut inputs = Matrix::zeros(picked.len(), d);
    for (i, w) in picked.iter().enumerate() {
        x_std.transform_into(&w.features, inputs.row_mut(i));
    }
    let targets = (0..horizon)
        .map(|k| picked.iter().map(|w| w.targets[k]).collect())
        .collect();
    Ok((x_std, inputs, targets))
}

/// Fit one submodel per lead time `1..=horizon` with optimized hyperparameters.
pub fn gp_train_direct(
    windows: &[FeatureWindow],
    horizon: usize,
    config: &GpConfig,
) -> Result<GpModel> {
    gp_train_inner(windows, horizon, config, None)
}

/// Fit with fixed hyperparameters for every head.
pub fn gp_train_fixed(
    windows: &[FeatureWindow],
    horizon: usize,
    params: MaternParams,
    config: &GpConfig,
) -> Result<GpModel> {
    gp_train_inner(windows, horizon, config, Some(params))
}

fn gp_train_inner(
    windows: &[FeatureWindow],
    horizon: usize,
    config: &GpConfig,
    params: Option<MaternParams>,
) -> Result<GpModel> {
    let (x_std, inputs, targets) = prepare(windows, horizon, config)?;
    let dist = distance_matrix(&inputs);
    let heads = targets
        .par_iter()
        .enumerate()
        .map(|(k, y)| {
            GpHead::fit(
                &dist,
                y,
                params,
                config,
                config.seed.wrapping_add(k as u64 + 1),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GpModel {
        format_version: 1,
        x_std,
        inputs,
        heads,
        config: config.clone(),
    })
}

impl GpModel {
    pub fn horizon(&self) -> usize {
        self.heads.len()
    }

    fn distances(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.inputs.cols() {
            return Err(Error::InvalidArgument(format!(
                "expected {} features, got {}",
                self.inputs.cols(),
                features.len()
            )));
        }
        let z = self.x_std.transform(features);
        Ok((0..self.inputs.rows())
            .map(|i| sq_dist(self.inputs.row(i), &z).sqrt())
            .collect())
    }

    /// Predictive `(mean, std)` in €/MWh for lead time `k` (1-based).
    pub fn predict(&self, features: &[f64], k: usize) -> Result<(f64, f64)> {
        let head = k
            .checked_sub(1)
            .and_then(|i| self.heads.get(i))
            .ok_or_else(|| Error::InvalidArgument(format!("no GP submodel for lead {k}")))?;
        Ok(head.predict_from_distances(&self.distances(features)?))
    }

    /// Predictions for every lead time, sharing the distance computation.
    pub fn predict_all(&self, features: &[f64]) -> Result<Vec<(f64, f64)>> {
        let d = self.distances(features)?;
        Ok(self
            .heads
            .iter()
            .map(|h| h.predict_from_distances(&d))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

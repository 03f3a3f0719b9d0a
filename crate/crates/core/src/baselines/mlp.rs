//! Single-hidden-layer perceptron trained jointly on all lead times.
//!
//! Architecture: `n -> 2n+1 (ReLU) -> T (identity)`, trained with Adam on
//! the mean squared error of standardized targets. The last tenth of the
//! (time-ordered) training windows is held out for early stopping.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::standardize::Standardizer;
use super::windows::FeatureWindow;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    /// Hidden width; `None` means `2 * n_inputs + 1`.
    pub hidden: Option<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub validation_fraction: f64,
    pub patience: usize,
    pub seed: u64,
    /// Evaluate full training/validation loss every this many epochs.
    pub checkpoint_every: usize,
    /// Final standardized training MSE above which a convergence warning is recorded.
    pub plateau_threshold: f64,
    /// Uniformly thin the training windows to at most this many.
    pub max_windows: Option<usize>,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: None,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 200,
            validation_fraction: 0.1,
            patience: 20,
            seed: 0,
            checkpoint_every: 10,
            plateau_threshold: 1.0,
            max_windows: None,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("mlp config: {m}")));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if self.batch_size == 0 || self.epochs == 0 || self.checkpoint_every == 0 {
            return bad("batch_size, epochs and checkpoint_every must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must be in [0, 1)");
        }
        if self.hidden == Some(0) || self.max_windows == Some(0) {
            return bad("hidden and max_windows must be positive");
        }
        Ok(())
    }
}

/// Weights of the two affine layers. `w1` is `n_in x n_hidden` and `w2`
/// is `n_hidden x n_out`, both row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Gradient with the same layout as [`MlpNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpGrads {
    fn zeros_like(net: &MlpNet) -> Self {
        MlpGrads {
            w1: vec![0.0; net.w1.len()],
            b1: vec![0.0; net.b1.len()],
            w2: vec![0.0; net.w2.len()],
            b2: vec![0.0; net.b2.len()],
        }
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

impl MlpNet {
    /// He-uniform weights, zero biases.
    pub fn init(n_in: usize, n_hidden: usize, n_out: usize, rng: &mut impl Rng) -> Self {
        let mut uniform = |fan_in: usize, n: usize| -> Vec<f64> {
            let limit = (6.0 / fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
        };
        let w1 = uniform(n_in, n_in * n_hidden);
        let w2 = uniform(n_hidden, n_hidden * n_out);
        MlpNet {
            n_in,
            n_hidden,
            n_out,
            w1,
            b1: vec![0.0; n_hidden],
            w2,
            b2: vec![0.0; n_out],
        }
    }

    fn hidden_into(&self, x: &[f64], h: &mut [f64]) {
        h.copy_from_slice(&self.b1);
        for (i, xi) in x.iter().enumerate() {
            if *xi != 0.0 {
                axpy(*xi, &self.w1[i * self.n_hidden..(i + 1) * self.n_hidden], h);
            }
        }
        for v in h.iter_mut() {
            *v = v.max(0.0);
        }
    }

    fn output_into(&self, h: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b2);
        for (j, hj) in h.iter().enumerate() {
            if *hj != 0.0 {
                axpy(*hj, &self.w2[j * self.n_out..(j + 1) * self.n_out], out);
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.n_hidden];
        let mut out = vec![0.0; self.n_out];
        self.hidden_into(x, &mut h);
        self.output_into(&h, &mut out);
        out
    }

    /// Mean squared error over all samples and outputs, and its gradient.
    /// `xs` is `m x n_in` and `ys` is `m x n_out`, row-major.
    pub fn loss_and_grad(&self, xs: &[f64], ys: &[f64]) -> (f64, MlpGrads) {
        let mut g = MlpGrads::zeros_like(self);
        let loss = self.accumulate_grad(xs, ys, &mut g);
        (loss, g)
    }

    fn accumulate_grad(&self, xs: &[f64], ys: &[f64], g: &mut MlpGrads) -> f64 {
        let m = xs.len() / self.n_in;
        let scale = 1.0 / (m * self.n_out) as f64;
        let mut h = vec![0.0; self.n_hidden];
        let mut out = vec![0.0; self.n_out];
        let mut d_out = vec![0.0; self.n_out];
        let mut d_h = vec![0.0; self.n_hidden];
        let mut loss = 0.0;
        for s in 0..m {
            let x = &xs[s * self.n_in..(s + 1) * self.n_in];
            let y = &ys[s * self.n_out..(s + 1) * self.n_out];
            self.hidden_into(x, &mut h);
            self.output_into(&h, &mut out);
            for o in 0..self.n_out {
                let e = out[o] - y[o];
                loss += e * e;
                d_out[o] = 2.0 * e * scale;
            }
            axpy(1.0, &d_out, &mut g.b2);
            for j in 0..self.n_hidden {
                let row = &self.w2[j * self.n_out..(j + 1) * self.n_out];
                d_h[j] = if h[j] > 0.0 {
                    row.iter().zip(&d_out).map(|(w, d)| w * d).sum()
                } else {
                    0.0
                };
                if h[j] != 0.0 {
                    axpy(
                        h[j],
                        &d_out,
                        &mut g.w2[j * self.n_out..(j + 1) * self.n_out],
                    );
                }
            }
            axpy(1.0, &d_h, &mut g.b1);
            for (i, xi) in x.iter().enumerate() {
                if *xi != 0.0 {
                    axpy(
                        *xi,
                        &d_h,
                        &mut g.w1[i * self.n_hidden..(i + 1) * self.n_hidden],
                    );
                }
            }
        }
        loss * scale
    }

    pub fn mse(&self, xs: &[f64], ys: &[f64]) -> f64 {
        let m = xs.len() / self.n_in;
        if m == 0 {
            return f64::NAN;
        }
        let mut h = vec![0.0; self.n_hidden];
        let mut out = vec![0.0; self.n_out];
        let mut loss = 0.0;
        for s in 0..m {
            self.hidden_into(&xs[s * self.n_in..(s + 1) * self.n_in], &mut h);
            self.output_into(&h, &mut out);
            loss += out
                .iter()
                .zip(&ys[s * self.n_out..(s + 1) * self.n_out])
                .map(|(o, y)| (o - y) * (o - y))
                .sum::<f64>();
        }
        loss / (m * self.n_out) as f64
    }

    fn params_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(net: &MlpNet, lr: f64) -> Self {
        let shapes = [net.w1.len(), net.b1.len(), net.w2.len(), net.b2.len()];
        Adam {
            m: shapes.iter().map(|n| vec![0.0; *n]).collect(),
            v: shapes.iter().map(|n| vec![0.0; *n]).collect(),
            t: 0,
            lr,
        }
    }

    fn step(&mut self, net: &mut MlpNet, g: &MlpGrads) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let step = self.lr * c2.sqrt() / c1;
        let grads = [&g.w1, &g.b1, &g.w2, &g.b2];
        for (((p, gr), m), v) in net
            .params_mut()
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for i in 0..p.len() {
                m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * gr[i];
                v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * gr[i] * gr[i];
                p[i] -= step * m[i] / (v[i].sqrt() + Self::EPS * c2.sqrt());
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Fitted multi-output perceptron with its standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub format_version: u32,
    pub net: MlpNet,
    pub x_std: Standardizer,
    pub y_std: Standardizer,
    pub config: MlpConfig,
    pub checkpoints: Vec<Checkpoint>,
    pub best_epoch: usize,
    pub warnings: Vec<String>,
}

fn thin<T>(items: &[T], max: Option<usize>) -> Vec<&T> {
    match max {
        Some(cap) if items.len() > cap => (0..cap).map(|i| &items[i * items.len() / cap]).collect(),
        _ => items.iter().collect(),
    }
}

pub fn mlp_train(windows: &[FeatureWindow], config: &MlpConfig) -> Result<MlpModel> {
    config.validate()?;
    if windows.is_empty() {
        return Err(Error::InsufficientData(
            "no training windows for the MLP".into(),
        ));
    }
    let windows = thin(windows, config.max_windows);
    let n_in = windows[0].features.len();
    let n_out = windows[0].targets.len();
    if windows
        .iter()
        .any(|w| w.features.len() != n_in || w.targets.len() != n_out)
    {
        return Err(Error::InvalidArgument(
            "windows have inconsistent shapes".into(),
        ));
    }
    let n_hidden = config.hidden.unwrap_or(2 * n_in + 1);

    let m = windows.len();
    let n_val = if m >= 10 {
        ((m as f64) * config.validation_fraction).floor() as usize
    } else {
        0
    };
    let n_train = m - n_val;
    let x_std = Standardizer::fit(windows[..n_train].iter().map(|w| w.features.as_slice()));
    let y_std = Standardizer::fit(windows[..n_train].iter().map(|w| w.targets.as_slice()));

    let mut xs = vec![0.0; m * n_in];
    let mut ys = vec![0.0; m * n_out];
    for (s, w) in windows.iter().enumerate() {
        x_std.transform_into(&w.features, &mut xs[s * n_in..(s + 1) * n_in]);
        y_std.transform_into(&w.targets, &mut ys[s * n_out..(s + 1) * n_out]);
    }
    let (train_x, val_x) = xs.split_at(n_train * n_in);
    let (train_y, val_y) = ys.split_at(n_train * n_out);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = MlpNet::init(n_in, n_hidden, n_out, &mut rng);
    let mut adam = Adam::new(&net, config.learning_rate);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut bx = Vec::with_capacity(config.batch_size * n_in);
    let mut by = Vec::with_capacity(config.batch_size * n_out);
    let mut grads = MlpGrads::zeros_like(&net);

    let monitor = |net: &MlpNet| {
        if n_val > 0 {
            net.mse(val_x, val_y)
        } else {
            net.mse(train_x, train_y)
        }
    };
    let mut best = (monitor(&net), 0usize, net.clone());
    let mut checkpoints = Vec::new();
    let mut since_best = 0usize;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            bx.clear();
            by.clear();
            for &s in batch {
                bx.extend_from_slice(&train_x[s * n_in..(s + 1) * n_in]);
                by.extend_from_slice(&train_y[s * n_out..(s + 1) * n_out]);
            }
            for buf in [&mut grads.w1, &mut grads.b1, &mut grads.w2, &mut grads.b2] {
                buf.iter_mut().for_each(|g| *g = 0.0);
            }
            net.accumulate_grad(&bx, &by, &mut grads);
            adam.step(&mut net, &grads);
        }

        let score = monitor(&net);
        if score < best.0 {
            best = (score, epoch, net.clone());
            since_best = 0;
        } else {
            since_best += 1;
        }
        let stop = since_best >= config.patience;
        if epoch % config.checkpoint_every == 0 || epoch == config.epochs || stop {
            checkpoints.push(Checkpoint {
                epoch,
                train_loss: net.mse(train_x, train_y),
                val_loss: (n_val > 0).then_some(score),
            });
        }
        if stop {
            log::debug!("mlp early stop at epoch {epoch}, best epoch {}", best.1);
            break;
        }
    }

    let (_, best_epoch, net) = best;
    let mut warnings = Vec::new();
    let final_loss = net.mse(train_x, train_y);
    if !final_loss.is_finite() || final_loss > config.plateau_threshold {
        let msg = format!(
            "training loss plateaued at {final_loss:.4} (threshold {})",
            config.plateau_threshold
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(MlpModel {
        format_version: 1,
        net,
        x_std,
        y_std,
        config: config.clone(),
        checkpoints,
        best_epoch,
        warnings,
    })
}

impl MlpModel {
    pub fn n_inputs(&self) -> usize {
        self.net.n_in
    }

    pub fn hidden_width(&self) -> usize {
        self.net.n_hidden
    }

    /// Point forecasts for every lead time, in €/MWh.
    pub fn predict(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.net.n_in {
            return Err(Error::InvalidArgument(format!(
                "expected {} features, got {}",
                self.net.n_in,
                features.len()
            )));
        }
        Ok(self
            .y_std
            .inverse(&self.net.forward(&self.x_std.transform(features))))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::QuarterIndex;

    fn toy_data(rng: &mut ChaCha8Rng, m: usize, n_in: usize, n_out: usize) -> (Vec<f64>, Vec<f64>) {
        let xs = (0..m * n_in).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ys = (0..m * n_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (xs, ys)
    }

    /// Central finite differences of the loss w.r.t. every parameter.
    fn fd_grads(net: &MlpNet, xs: &[f64], ys: &[f64], eps: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut probe = net.clone();
        for which in 0..4 {
            let len = probe.params_mut()[which].len();
            for i in 0..len {
                let orig = probe.params_mut()[which][i];
                probe.params_mut()[which][i] = orig + eps;
                let up = probe.mse(xs, ys);
                probe.params_mut()[which][i] = orig - eps;
                let down = probe.mse(xs, ys);
                probe.params_mut()[which][i] = orig;
                out.push((up - down) / (2.0 * eps));
            }
        }
        out
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = MlpNet::init(5, 3, 2, &mut rng);
        let (xs, ys) = toy_data(&mut rng, 7, 5, 2);
        let (loss, g) = net.loss_and_grad(&xs, &ys);
        assert!((loss - net.mse(&xs, &ys)).abs() < 1e-14);
        let analytic: Vec<f64> = [g.w1, g.b1, g.w2, g.b2].concat();
        let numeric = fd_grads(&net, &xs, &ys, 1e-6);
        for (a, n) in analytic.iter().zip(&numeric) {
            let rel = (a - n).abs() / (a.abs() + n.abs()).max(1e-8);
            assert!(rel < 1e-5, "analytic {a} vs numeric {n}");
        }
    }

    fn windows_from(features: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Vec<FeatureWindow> {
        features
            .into_iter()
            .zip(targets)
            .enumerate()
            .map(|(i, (features, targets))| FeatureWindow {
                issue: QuarterIndex::new(i as i64),
                features,
                targets,
            })
            .collect()
    }

    #[test]
    fn zero_weight_net_predicts_target_means() {
        let ws = windows_from(
            vec![vec![1.0, 2.0], vec![3.0, 5.0], vec![2.0, 0.0]],
            vec![vec![10.0, 1.0], vec![20.0, 2.0], vec![30.0, 6.0]],
        );
        let mut model = mlp_train(
            &ws,
            &MlpConfig {
                epochs: 1,
                ..Default::default()
            },
        )
        .unwrap();
        for p in model.net.params_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
        assert_eq!(model.predict(&[7.0, -3.0]).unwrap(), vec![20.0, 3.0]);
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ws = windows_from(
            (0..50)
                .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
            (0..50)
                .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
        );
        let cfg = MlpConfig {
            epochs: 5,
            seed: 9,
            ..Default::default()
        };
        let a = mlp_train(&ws, &cfg).unwrap();
        let b = mlp_train(&ws, &cfg).unwrap();
        assert_eq!(a.net, b.net);
        assert_eq!(a.hidden_width(), 13);
        let c = mlp_train(&ws, &MlpConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a.net, c.net);
    }

    #[test]
    fn training_loss_decreases_on_smooth_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let features: Vec<Vec<f64>> = (0..400)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let targets = features
            .iter()
            .map(|f| vec![f[0] + 0.5 * f[1], f[2] * f[3]])
            .collect();
        let model = mlp_train(&windows_from(features, targets), &MlpConfig::default()).unwrap();
        let losses: Vec<f64> = model.checkpoints.iter().map(|c| c.train_loss).collect();
        assert!(losses.len() >= 2);
        assert!(losses.windows(2).all(|w| w[1] <= w[0]), "{losses:?}");
        assert!(model.warnings.is_empty());
    }

    #[test]
    fn constant_series_recovers_constant() {
        let ws = windows_from(
            (0..40).map(|_| vec![42.5; 6]).collect(),
            (0..40).map(|_| vec![42.5; 3]).collect(),
        );
        let model = mlp_train(
            &ws,
            &MlpConfig {
                epochs: 20,
                ..Default::default()
            },
        )
        .unwrap();
        for v in model.predict(&[42.5; 6]).unwrap() {
            assert!((v - 42.5).abs() < 1e-3);
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let ws = windows_from(vec![vec![0.1, 0.2]; 4], vec![vec![1.0]; 4]);
        let model = mlp_train(
            &ws,
            &MlpConfig {
                epochs: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let back = MlpModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn rejects_bad_config_and_input() {
        assert!(mlp_train(&[], &MlpConfig::default()).is_err());
        let ws = windows_from(vec![vec![0.0]], vec![vec![0.0]]);
        assert!(mlp_train(
            &ws,
            &MlpConfig {
                learning_rate: 0.0,
                ..Default::default()
            }
        )
        .is_err());
        let model = mlp_train(
            &ws,
            &MlpConfig {
                epochs: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(model.predict(&[1.0, 2.0]).is_err());
    }
}

//! Binary logistic regression with an elastic-net penalty, trained by SAGA.
//!
//! With labels `yᵢ ∈ {−1, +1}` (SUBJ = +1), sample weights `sᵢ`, inverse
//! regularization strength `c` and mixing ratio `α`, the objective is
//!
//! ```text
//! J(w, b) = (1/n) Σᵢ sᵢ·log(1 + exp(−yᵢ(w·xᵢ + b)))
//!         + (1/(c·n))·[α‖w‖₁ + ((1 − α)/2)‖w‖₂²]
//! ```
//!
//! The bias is not penalized. SAGA handles the smooth part (weighted
//! log-loss plus the L2 term) through a table of per-sample gradients and
//! the L1 term through soft-thresholding.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::io::{dim_u32, open_container, put_f64s};

const MAGIC: &[u8; 4] = b"SGLM";
const VERSION: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassWeightMode {
    None,
    Balanced,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Inverse regularization strength.
    pub c: f64,
    /// Share of the L1 term in the penalty.
    pub l1_ratio: f64,
    pub class_weight_mode: ClassWeightMode,
    pub max_epochs: usize,
    /// Stop once no parameter moves more than this over one epoch.
    pub tolerance: f64,
    pub seed: u64,
    /// Z-score features before fitting; the returned model works on raw
    /// features.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            c: 0.5,
            l1_ratio: 0.5,
            class_weight_mode: ClassWeightMode::Balanced,
            max_epochs: 1000,
            tolerance: 1e-6,
            seed: 0,
            standardize: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::domain(format!("c must be positive, got {}", self.c)));
        }
        if !(0.0..=1.0).contains(&self.l1_ratio) {
            return Err(Error::domain(format!("l1_ratio {} outside [0, 1]", self.l1_ratio)));
        }
        if self.max_epochs == 0 {
            return Err(Error::domain("max_epochs must be positive"));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::domain("tolerance must be positive"));
        }
        Ok(())
    }

    fn penalties(&self, n: usize) -> (f64, f64) {
        let scale = 1.0 / (self.c * n as f64);
        (self.l1_ratio * scale, (1.0 - self.l1_ratio) * scale)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub positive_class: Label,
    pub threshold: f64,
}

impl LrModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
            positive_class: Label::Subj,
            threshold: 0.5,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    fn check_dim(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.dim() {
            return Err(Error::domain(format!(
                "model expects {} features, got {}",
                self.dim(),
                x.ncols()
            )));
        }
        Ok(())
    }
}

/// Result of [`fit_saga`].
#[derive(Debug, Clone)]
pub struct SagaFit {
    pub model: LrModel,
    pub converged: bool,
    pub epochs: usize,
    /// Objective after each epoch, in the space the solver ran in.
    pub objective_trace: Vec<f64>,
}

/// `n_total / (2·n_c)` per class.
pub fn balanced_weights(labels: &[Label]) -> Result<BTreeMap<Label, f64>> {
    let n = labels.len() as f64;
    Label::ALL
        .iter()
        .map(|&l| {
            let count = labels.iter().filter(|&&x| x == l).count();
            if count == 0 {
                return Err(Error::domain(format!("no {l} samples; both classes are required")));
            }
            Ok((l, n / (2.0 * count as f64)))
        })
        .collect()
}

pub fn sample_weights(labels: &[Label], mode: ClassWeightMode) -> Result<Vec<f64>> {
    match mode {
        ClassWeightMode::None => Ok(vec![1.0; labels.len()]),
        ClassWeightMode::Balanced => {
            let w = balanced_weights(labels)?;
            Ok(labels.iter().map(|l| w[l]).collect())
        }
    }
}

/// ±1 encoding relative to SUBJ.
pub fn encode_labels(labels: &[Label]) -> Vec<f64> {
    labels.iter().map(|l| l.sign()).collect()
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(−m))` without overflow.
fn log_loss(margin: f64) -> f64 {
    if margin > 0.0 {
        (-margin).exp().ln_1p()
    } else {
        -margin + margin.exp().ln_1p()
    }
}

/// d/dz of `s·log(1 + exp(−y·z))`.
fn loss_derivative(y: f64, s: f64, z: f64) -> f64 {
    -s * y * sigmoid(-y * z)
}

fn check_shapes(x: &DMatrix<f64>, y: &[f64], s: &[f64], weights: &[f64]) {
    assert_eq!(x.nrows(), y.len(), "label count must match rows");
    assert_eq!(x.nrows(), s.len(), "sample-weight count must match rows");
    assert_eq!(x.ncols(), weights.len(), "weight count must match columns");
}

pub fn objective(x: &DMatrix<f64>, y: &[f64], s: &[f64], weights: &[f64], bias: f64, cfg: &TrainConfig) -> f64 {
    check_shapes(x, y, s, weights);
    let n = x.nrows();
    let (lam1, lam2) = cfg.penalties(n);
    let margins = x * nalgebra::DVector::from_column_slice(weights);
    let loss: f64 = (0..n).map(|i| s[i] * log_loss(y[i] * (margins[i] + bias))).sum::<f64>() / n as f64;
    let l1: f64 = weights.iter().map(|w| w.abs()).sum();
    let l2: f64 = weights.iter().map(|w| w * w).sum();
    loss + lam1 * l1 + 0.5 * lam2 * l2
}

/// Gradient of the differentiable part of [`objective`] (everything but the
/// L1 term) with respect to the weights and the bias.
pub fn smooth_gradient(
    x: &DMatrix<f64>,
    y: &[f64],
    s: &[f64],
    weights: &[f64],
    bias: f64,
    cfg: &TrainConfig,
) -> (Vec<f64>, f64) {
    check_shapes(x, y, s, weights);
    let n = x.nrows();
    let (_, lam2) = cfg.penalties(n);
    let margins = x * nalgebra::DVector::from_column_slice(weights);
    let coefs = nalgebra::DVector::from_fn(n, |i, _| loss_derivative(y[i], s[i], margins[i] + bias) / n as f64);
    let gw = x.tr_mul(&coefs);
    let grad = gw.iter().zip(weights).map(|(g, w)| g + lam2 * w).collect();
    (grad, coefs.sum())
}

/// Feature means and scales for optional z-scoring; zero-variance columns
/// keep scale 1.
fn column_scaling(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    x.column_iter()
        .map(|col| {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = var.sqrt();
            (mean, if sd > 0.0 { sd } else { 1.0 })
        })
        .unzip()
}

/// Trains the classifier with SAGA. Non-convergence within `max_epochs` is
/// reported through [`SagaFit::converged`], not as an error.
pub fn fit_saga(x: &DMatrix<f64>, labels: &[Label], cfg: &TrainConfig) -> Result<SagaFit> {
    cfg.validate()?;
    let (n, d) = x.shape();
    if labels.len() != n {
        return Err(Error::domain(format!("{} labels for {n} rows", labels.len())));
    }
    if n < 2 {
        return Err(Error::domain("SAGA needs at least 2 samples"));
    }
    if Label::ALL.iter().any(|l| !labels.contains(l)) {
        return Err(Error::domain("training labels contain a single class"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite feature value"));
    }

    let y = encode_labels(labels);
    let s = sample_weights(labels, cfg.class_weight_mode)?;

    let scaling = cfg.standardize.then(|| column_scaling(x));
    // row-major copy, scaled if requested
    let rows: Vec<f64> = (0..n)
        .flat_map(|i| {
            let scaling = &scaling;
            (0..d).map(move |j| match scaling {
                Some((mu, sd)) => (x[(i, j)] - mu[j]) / sd[j],
                None => x[(i, j)],
            })
        })
        .collect();
    let row = |i: usize| &rows[i * d..(i + 1) * d];

    let (lam1, lam2) = cfg.penalties(n);
    let lipschitz = (0..n)
        .map(|i| s[i] * (row(i).iter().map(|v| v * v).sum::<f64>() + 1.0) / 4.0)
        .fold(0.0, f64::max)
        + lam2;
    let step = 1.0 / (3.0 * (lipschitz + lam2));

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    // scalar loss derivatives at each sample's last visited iterate
    let mut table: Vec<f64> = (0..n).map(|i| loss_derivative(y[i], s[i], 0.0)).collect();
    let mut avg_w = vec![0.0; d];
    let mut avg_b: f64;

    let solver_x = if cfg.standardize {
        DMatrix::from_row_slice(n, d, &rows)
    } else {
        x.clone()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let inv_n = 1.0 / n as f64;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut epochs = 0;

    while epochs < cfg.max_epochs {
        // refresh the running average from the table to stop drift
        avg_w.iter_mut().for_each(|v| *v = 0.0);
        avg_b = 0.0;
        for i in 0..n {
            for (a, xij) in avg_w.iter_mut().zip(row(i)) {
                *a += table[i] * xij * inv_n;
            }
            avg_b += table[i] * inv_n;
        }

        let (w_start, b_start) = (w.clone(), b);
        for _ in 0..n {
            let j = rng.random_range(0..n);
            let xj = row(j);
            let z = b + w.iter().zip(xj).map(|(a, c)| a * c).sum::<f64>();
            let fresh = loss_derivative(y[j], s[j], z);
            let delta = fresh - table[j];
            for k in 0..d {
                let g = delta * xj[k] + avg_w[k] + lam2 * w[k];
                w[k] = soft_threshold(w[k] - step * g, step * lam1);
            }
            b -= step * (delta + avg_b);
            for k in 0..d {
                avg_w[k] += delta * xj[k] * inv_n;
            }
            avg_b += delta * inv_n;
            table[j] = fresh;
        }
        epochs += 1;

        if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
            return Err(Error::Training("SAGA iterates became non-finite".into()));
        }
        trace.push(objective(&solver_x, &y, &s, &w, b, cfg));

        let change = w
            .iter()
            .zip(&w_start)
            .map(|(a, c)| (a - c).abs())
            .fold((b - b_start).abs(), f64::max);
        if change < cfg.tolerance {
            converged = true;
            break;
        }
    }

    if let Some((mu, sd)) = scaling {
        // fold z-scoring into the model: w·(x − μ)/σ + b
        for k in 0..d {
            w[k] /= sd[k];
            b -= w[k] * mu[k];
        }
    }

    Ok(SagaFit {
        model: LrModel {
            weights: w,
            bias: b,
            positive_class: Label::Subj,
            threshold: 0.5,
        },
        converged,
        epochs,
        objective_trace: trace,
    })
}

/// Probability of the positive class per row.
pub fn predict_proba(model: &LrModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    model.check_dim(x)?;
    let z = x * nalgebra::DVector::from_column_slice(&model.weights);
    Ok(z.iter().map(|v| sigmoid(v + model.bias)).collect())
}

/// Positive class wherever the probability reaches the threshold.
pub fn predict(model: &LrModel, x: &DMatrix<f64>) -> Result<Vec<Label>> {
    Ok(predict_proba(model, x)?
        .into_iter()
        .map(|p| {
            if p >= model.threshold {
                model.positive_class
            } else {
                model.positive_class.other()
            }
        })
        .collect())
}

fn class_code(label: Label) -> u8 {
    match label {
        Label::Subj => 1,
        Label::Obj => 0,
    }
}

pub fn write_model(model: &LrModel) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(14 + 8 * (model.dim() + 2));
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&dim_u32(model.dim(), "dimension")?.to_le_bytes());
    put_f64s(&mut out, model.weights.iter().copied());
    put_f64s(&mut out, [model.bias, model.threshold]);
    out.push(class_code(model.positive_class));
    Ok(out)
}

pub fn read_model(raw: &[u8]) -> Result<LrModel> {
    let mut r = open_container(raw, MAGIC, VERSION)?;
    let d = r.u32("dimension")? as usize;
    let weights = r.f64s(d, "weights")?;
    let tail = r.f64s(2, "bias and threshold")?;
    let positive_class = match r.u8("positive class")? {
        1 => Label::Subj,
        0 => Label::Obj,
        other => return Err(Error::Format(format!("unknown class code {other}"))),
    };
    r.finish()?;
    if weights.iter().chain(&tail).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in classifier model"));
    }
    Ok(LrModel {
        weights,
        bias: tail[0],
        threshold: tail[1],
        positive_class,
    })
}

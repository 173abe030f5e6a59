//! Softmax cross-entropy and the large-margin family built on `ψ(θ)`.
//!
//! `ψ(θ) = cos(m1·θ + m2) − m3` replaces the target cosine. The special
//! cases are A-Softmax (`m1`), AAM-Softmax (`m2`) and AM-Softmax (`m3`);
//! `(1, 0, 0)` is the plain normalized softmax. Gradients are analytic and
//! taken with respect to the raw (unnormalized) inputs and weight columns.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::data::{Embedding, EmbeddingArchive};
use crate::preprocess::compute_scatter;

const DOMAIN_SLACK: f64 = 1e-9;
const GRAD_CLAMP: f64 = 1.0 - 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginConfig {
    pub s: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

impl MarginConfig {
    pub fn new(s: f64, m1: f64, m2: f64, m3: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {s}")));
        }
        if !(m1 >= 1.0 && m1.is_finite()) || !(m2 >= 0.0 && m2.is_finite()) || !(m3 >= 0.0 && m3.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "invalid margins m1={m1} m2={m2} m3={m3}"
            )));
        }
        Ok(MarginConfig { s, m1, m2, m3 })
    }

    pub fn normalized(s: f64) -> Self {
        MarginConfig { s, m1: 1.0, m2: 0.0, m3: 0.0 }
    }

    pub fn angular(s: f64, m1: f64) -> Self {
        MarginConfig { s, m1, m2: 0.0, m3: 0.0 }
    }

    pub fn additive_angular(s: f64, m2: f64) -> Self {
        MarginConfig { s, m1: 1.0, m2, m3: 0.0 }
    }

    pub fn additive_cosine(s: f64, m3: f64) -> Self {
        MarginConfig { s, m1: 1.0, m2: 0.0, m3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    /// `d × C`; column j is the class weight `W_j`.
    pub weights: DMatrix<f64>,
    /// Used only by the plain softmax loss.
    pub biases: DVector<f64>,
}

impl ClassifierHead {
    pub fn new(weights: DMatrix<f64>, biases: DVector<f64>) -> Result<Self> {
        if weights.ncols() < 2 {
            return Err(Error::InsufficientClasses { found: weights.ncols() });
        }
        if biases.len() != weights.ncols() {
            return Err(Error::dim(weights.ncols(), biases.len()));
        }
        Ok(ClassifierHead { weights, biases })
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn classes(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `N × d`, one embedding per row.
    pub inputs: DMatrix<f64>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::dim(inputs.nrows(), labels.len()));
        }
        Ok(Batch { inputs, labels })
    }

    fn check(&self, head: &ClassifierHead) -> Result<()> {
        if self.inputs.nrows() == 0 {
            return Err(Error::EmptyBatch);
        }
        if self.inputs.ncols() != head.dim() {
            return Err(Error::dim(head.dim(), self.inputs.ncols()));
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= head.classes()) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {} classes",
                head.classes()
            )));
        }
        Ok(())
    }
}

/// `cos(mθ)` and `sin(mθ)/sinθ` for integer `m` via the Chebyshev recurrences.
fn chebyshev(m: u32, c: f64) -> (f64, f64) {
    // T_0 = 1, T_1 = c; U_0 = 1, U_1 = 2c
    let (mut t_prev, mut t) = (1.0, c);
    let (mut u_prev, mut u) = (0.0, 1.0);
    for _ in 1..m {
        let t_next = 2.0 * c * t - t_prev;
        let u_next = 2.0 * c * u - u_prev;
        t_prev = t;
        t = t_next;
        u_prev = u;
        u = u_next;
    }
    (t, u)
}

fn integer_m1(m1: f64) -> Option<u32> {
    (m1.fract() == 0.0 && m1 <= 64.0).then_some(m1 as u32)
}

fn check_cos(cos_theta: f64) -> Result<f64> {
    if !(cos_theta.abs() <= 1.0 + DOMAIN_SLACK) {
        return Err(Error::DomainError { value: cos_theta });
    }
    Ok(cos_theta.clamp(-1.0, 1.0))
}

/// `ψ(θ) = cos(m1·θ + m2) − m3` with `θ = arccos(cos_theta)`.
pub fn psi(cos_theta: f64, cfg: &MarginConfig) -> Result<f64> {
    Ok(psi_unchecked(check_cos(cos_theta)?, cfg))
}

fn psi_unchecked(c: f64, cfg: &MarginConfig) -> f64 {
    match integer_m1(cfg.m1) {
        Some(m) => {
            let sin_theta = (1.0 - c * c).max(0.0).sqrt();
            let (cos_m, u) = chebyshev(m, c);
            let sin_m = sin_theta * u;
            cos_m * cfg.m2.cos() - sin_m * cfg.m2.sin() - cfg.m3
        }
        None => (cfg.m1 * c.acos() + cfg.m2).cos() - cfg.m3,
    }
}

/// `dψ/dcosθ = m1·sin(m1θ + m2)/sinθ`, with cosθ clamped away from ±1.
pub fn psi_derivative(cos_theta: f64, cfg: &MarginConfig) -> f64 {
    let c = cos_theta.clamp(-GRAD_CLAMP, GRAD_CLAMP);
    let sin_theta = (1.0 - c * c).sqrt();
    match integer_m1(cfg.m1) {
        Some(m) => {
            let (cos_m, u) = chebyshev(m, c);
            cfg.m1 * (u * cfg.m2.cos() + cos_m * cfg.m2.sin() / sin_theta)
        }
        None => cfg.m1 * (cfg.m1 * c.acos() + cfg.m2).sin() / sin_theta,
    }
}

#[derive(Debug, Clone)]
pub struct MarginLoss {
    pub loss: f64,
    /// `N × d`
    pub d_inputs: DMatrix<f64>,
    /// `d × C`
    pub d_weights: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SoftmaxLoss {
    pub loss: f64,
    pub d_inputs: DMatrix<f64>,
    pub d_weights: DMatrix<f64>,
    pub d_biases: DVector<f64>,
}

/// Numerically stable `log Σ exp(z)`.
fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Cross-entropy of one row of logits; writes `softmax − onehot` into `grad`.
fn ce_row(logits: &[f64], target: usize, grad: &mut [f64]) -> f64 {
    let lse = log_sum_exp(logits);
    for (g, z) in grad.iter_mut().zip(logits) {
        *g = (z - lse).exp();
    }
    grad[target] -= 1.0;
    lse - logits[target]
}

/// Unit-normalizes the rows of `m`; also returns the norms.
fn normalize_rows(m: &DMatrix<f64>, id: &str) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.nrows());
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let n = row.norm();
        if n == 0.0 {
            return Err(Error::ZeroVector { id: Some(format!("{id}[{i}]")) });
        }
        row /= n;
        norms.push(n);
    }
    Ok((out, norms))
}

/// Projects `g` onto the tangent space at unit vector `u` and divides by the norm:
/// the gradient of `v ↦ v/‖v‖` pulled back to raw `v`.
fn through_normalization(g: &mut [f64], u: &[f64], norm: f64) {
    let dot: f64 = g.iter().zip(u).map(|(a, b)| a * b).sum();
    for (gi, ui) in g.iter_mut().zip(u) {
        *gi = (*gi - dot * ui) / norm;
    }
}

/// Large-margin CE over normalized inputs and weights.
///
/// The target logit is `s·ψ(cos θ_y)`, every other class keeps `s·cos θ_j`.
/// The loss is averaged over the batch.
pub fn margin_ce_loss(batch: &Batch, head: &ClassifierHead, cfg: &MarginConfig) -> Result<MarginLoss> {
    batch.check(head)?;
    let n = batch.inputs.nrows();
    let c = head.classes();
    let d = head.dim();
    let (x_hat, x_norm) = normalize_rows(&batch.inputs, "input")?;
    let (w_hat_t, w_norm) = normalize_rows(&head.weights.transpose(), "weight")?;
    let cosines = &x_hat * w_hat_t.transpose();

    // dL/dcos for every (i, j)
    let mut g_cos = DMatrix::zeros(n, c);
    let mut logits = vec![0.0; c];
    let mut grad = vec![0.0; c];
    let mut total = 0.0;
    for i in 0..n {
        let y = batch.labels[i];
        for j in 0..c {
            let cos = cosines[(i, j)].clamp(-1.0, 1.0);
            logits[j] = cfg.s * if j == y { psi_unchecked(cos, cfg) } else { cos };
        }
        total += ce_row(&logits, y, &mut grad);
        for j in 0..c {
            let local = if j == y { psi_derivative(cosines[(i, j)], cfg) } else { 1.0 };
            g_cos[(i, j)] = grad[j] * cfg.s * local / n as f64;
        }
    }
    let loss = total / n as f64;

    let mut d_inputs = &g_cos * &w_hat_t;
    for i in 0..n {
        let mut row: Vec<f64> = d_inputs.row(i).iter().copied().collect();
        let u: Vec<f64> = x_hat.row(i).iter().copied().collect();
        through_normalization(&mut row, &u, x_norm[i]);
        for k in 0..d {
            d_inputs[(i, k)] = row[k];
        }
    }
    let mut d_weights = x_hat.transpose() * &g_cos;
    for j in 0..c {
        let mut col: Vec<f64> = d_weights.column(j).iter().copied().collect();
        let u: Vec<f64> = w_hat_t.row(j).iter().copied().collect();
        through_normalization(&mut col, &u, w_norm[j]);
        d_weights.set_column(j, &DVector::from_vec(col));
    }
    Ok(MarginLoss {
        loss,
        d_inputs,
        d_weights,
    })
}

/// Plain softmax CE over affine logits `W_jᵀx_i + b_j`, averaged over the batch.
pub fn softmax_ce_loss(batch: &Batch, head: &ClassifierHead) -> Result<SoftmaxLoss> {
    batch.check(head)?;
    let n = batch.inputs.nrows();
    let c = head.classes();
    let logits = &batch.inputs * &head.weights;
    let mut dz = DMatrix::zeros(n, c);
    let mut row = vec![0.0; c];
    let mut grad = vec![0.0; c];
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..c {
            row[j] = logits[(i, j)] + head.biases[j];
        }
        total += ce_row(&row, batch.labels[i], &mut grad);
        for j in 0..c {
            dz[(i, j)] = grad[j] / n as f64;
        }
    }
    let loss = total / n as f64;
    Ok(SoftmaxLoss {
        loss,
        d_inputs: &dz * head.weights.transpose(),
        d_weights: batch.inputs.transpose() * &dz,
        d_biases: DVector::from_iterator(c, dz.column_iter().map(|col| col.sum())),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToyLoss {
    /// Affine logits with biases.
    Softmax,
    Margin(MarginConfig),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyConfig {
    pub loss: ToyLoss,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Output dimension of the linear encoder.
    pub embed_dim: usize,
}

/// Linear encoder `e = A·x + a` followed by a classifier head.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    /// `k × d_in`
    pub encoder: DMatrix<f64>,
    pub encoder_bias: DVector<f64>,
    pub head: ClassifierHead,
}

impl ToyModel {
    /// Encodes the rows of `points` (`N × d_in`) into `N × k`.
    pub fn encode(&self, points: &DMatrix<f64>) -> DMatrix<f64> {
        let mut e = points * self.encoder.transpose();
        for mut row in e.row_iter_mut() {
            row += self.encoder_bias.transpose();
        }
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub trace_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct ToyRun {
    pub model: ToyModel,
    pub history: Vec<EpochRecord>,
}

impl ToyRun {
    pub fn final_ratio(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.trace_ratio)
    }

    /// CSV with columns `epoch,loss,trace_ratio`.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,loss,trace_ratio\n");
        for r in &self.history {
            out.push_str(&format!("{},{:.9},{:.9}\n", r.epoch, r.loss, r.trace_ratio));
        }
        out
    }
}

/// `tr(S_W)/tr(S_B)` of the unit-normalized embeddings.
pub fn trace_ratio(embeddings: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
    let k = embeddings.ncols();
    let (unit, _) = normalize_rows(embeddings, "embedding")?;
    let archive = EmbeddingArchive::from_records(
        k,
        unit.row_iter().zip(labels).enumerate().map(|(i, (row, y))| {
            Embedding::new(format!("p{i}"), Some(format!("c{y}")), row.iter().copied().collect())
        }),
    )?;
    let sc = compute_scatter(&archive)?;
    Ok(sc.within.trace() / sc.between.trace())
}

/// Seeded isotropic Gaussian blobs with centers evenly spaced on a circle
/// of radius `radius` in the first two coordinates.
pub fn toy_gaussians(
    classes: usize,
    per_class: usize,
    dim: usize,
    radius: f64,
    spread: f64,
    seed: u64,
) -> Result<(DMatrix<f64>, Vec<usize>)> {
    if dim < 2 {
        return Err(Error::InvalidArgument("toy data needs at least 2 dimensions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = classes * per_class;
    let mut points = DMatrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        let angle = std::f64::consts::TAU * c as f64 / classes as f64;
        for p in 0..per_class {
            let r = c * per_class + p;
            for k in 0..dim {
                let z: f64 = StandardNormal.sample(&mut rng);
                points[(r, k)] = spread * z;
            }
            points[(r, 0)] += radius * angle.cos();
            points[(r, 1)] += radius * angle.sin();
            labels.push(c);
        }
    }
    Ok((points, labels))
}

/// Head whose class weights start at the unit class means of the initial
/// encodings, so training begins from a classifier that already roughly fits.
fn class_mean_head(encoded: &DMatrix<f64>, labels: &[usize], classes: usize) -> Result<ClassifierHead> {
    let k = encoded.ncols();
    let mut weights = DMatrix::zeros(k, classes);
    for (row, &y) in encoded.row_iter().zip(labels) {
        let n = row.norm();
        if n > 0.0 {
            let mut col = weights.column_mut(y);
            col += row.transpose() / n;
        }
    }
    for (j, mut col) in weights.column_iter_mut().enumerate() {
        let n = col.norm();
        if n == 0.0 {
            return Err(Error::ZeroVector { id: Some(format!("class {j}")) });
        }
        col /= n;
    }
    ClassifierHead::new(weights, DVector::zeros(classes))
}

/// Full-batch gradient descent on a linear encoder and classifier head.
///
/// `history[e]` holds the loss and trace ratio before update `e + 1`, so an
/// `E`-epoch run has `E + 1` records.
pub fn toy_train(points: &DMatrix<f64>, labels: &[usize], cfg: &ToyConfig) -> Result<ToyRun> {
    if points.nrows() != labels.len() {
        return Err(Error::dim(points.nrows(), labels.len()));
    }
    if points.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let distinct = {
        let mut seen = vec![false; classes];
        labels.iter().for_each(|&y| seen[y] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(Error::InsufficientClasses { found: distinct });
    }
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate must be non-negative, got {}", cfg.lr)));
    }
    if cfg.embed_dim == 0 {
        return Err(Error::InvalidArgument("embedding dimension must be >= 1".into()));
    }
    let d_in = points.ncols();
    let k = cfg.embed_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut normal = |rows: usize, cols: usize, scale: f64| {
        DMatrix::from_fn(rows, cols, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
    };
    let encoder = normal(k, d_in, 1.0 / (d_in as f64).sqrt());
    let mut model = ToyModel {
        head: class_mean_head(&(points * encoder.transpose()), labels, classes)?,
        encoder,
        encoder_bias: DVector::zeros(k),
    };

    let mut history = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..=cfg.epochs {
        let encoded = model.encode(points);
        let batch = Batch::new(encoded.clone(), labels.to_vec())?;
        let (loss, d_enc, d_w, d_b) = match &cfg.loss {
            ToyLoss::Softmax => {
                let r = softmax_ce_loss(&batch, &model.head)?;
                (r.loss, r.d_inputs, r.d_weights, Some(r.d_biases))
            }
            ToyLoss::Margin(m) => {
                let r = margin_ce_loss(&batch, &model.head, m)?;
                (r.loss, r.d_inputs, r.d_weights, None)
            }
        };
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        history.push(EpochRecord {
            epoch,
            loss,
            trace_ratio: trace_ratio(&encoded, labels)?,
        });
        if epoch == cfg.epochs {
            break;
        }
        let d_a = d_enc.transpose() * points;
        let d_a_bias = DVector::from_iterator(k, d_enc.column_iter().map(|c| c.sum()));
        model.encoder -= d_a * cfg.lr;
        model.encoder_bias -= d_a_bias * cfg.lr;
        model.head.weights -= d_w * cfg.lr;
        if let Some(db) = d_b {
            model.head.biases -= db * cfg.lr;
        }
    }
    Ok(ToyRun { model, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_examples() {
        assert_eq!(psi(0.5, &MarginConfig::normalized(1.0)).unwrap(), 0.5);
        assert!((psi(0.5, &MarginConfig::additive_cosine(1.0, 0.35)).unwrap() - 0.15).abs() < 1e-15);
        assert!((psi(1.0, &MarginConfig::additive_angular(1.0, 0.2)).unwrap() - 0.2f64.cos()).abs() < 1e-15);
        assert!((psi(1.0, &MarginConfig::additive_angular(1.0, 0.2)).unwrap() - 0.98007).abs() < 1e-5);
        assert_eq!(psi(1.0 + 1e-10, &MarginConfig::normalized(1.0)).unwrap(), 1.0);
        assert!(matches!(psi(1.1, &MarginConfig::normalized(1.0)), Err(Error::DomainError { .. })));
        assert!(psi(f64::NAN, &MarginConfig::normalized(1.0)).is_err());
    }

    #[test]
    fn a_softmax_is_double_angle() {
        let cfg = MarginConfig::angular(1.0, 2.0);
        for i in 0..=200 {
            let c = -1.0 + i as f64 / 100.0;
            assert_eq!(psi(c, &cfg).unwrap(), 2.0 * c * c - 1.0);
        }
    }

    #[test]
    fn non_integer_m1_uses_arccos() {
        let cfg = MarginConfig::new(1.0, 1.5, 0.1, 0.0).unwrap();
        let c: f64 = 0.3;
        assert!((psi(c, &cfg).unwrap() - (1.5 * c.acos() + 0.1).cos()).abs() < 1e-15);
    }

    #[test]
    fn psi_derivative_matches_difference_quotient() {
        for cfg in [
            MarginConfig::angular(1.0, 3.0),
            MarginConfig::additive_angular(1.0, 0.3),
            MarginConfig::new(1.0, 1.5, 0.1, 0.2).unwrap(),
        ] {
            for &c in &[-0.8, -0.1, 0.2, 0.7] {
                let h = 1e-6;
                let fd = (psi(c + h, &cfg).unwrap() - psi(c - h, &cfg).unwrap()) / (2.0 * h);
                assert!((psi_derivative(c, &cfg) - fd).abs() < 1e-7, "{cfg:?} at {c}");
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(MarginConfig::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(MarginConfig::new(1.0, 0.5, 0.0, 0.0).is_err());
        assert!(MarginConfig::new(1.0, 1.0, -0.1, 0.0).is_err());
    }

    fn head2() -> ClassifierHead {
        ClassifierHead::new(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap()
    }

    #[test]
    fn softmax_examples() {
        let b = Batch::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), vec![0]).unwrap();
        let r = softmax_ce_loss(&b, &head2()).unwrap();
        assert!((r.loss - 2f64.ln()).abs() < 1e-15);
        let b = Batch::new(DMatrix::from_row_slice(1, 2, &[20.0, 0.0]), vec![0]).unwrap();
        assert!(softmax_ce_loss(&b, &head2()).unwrap().loss < 1e-3);
    }

    #[test]
    fn batch_errors() {
        let empty = Batch::new(DMatrix::zeros(0, 2), vec![]).unwrap();
        assert!(matches!(
            margin_ce_loss(&empty, &head2(), &MarginConfig::normalized(1.0)),
            Err(Error::EmptyBatch)
        ));
        let zero = Batch::new(DMatrix::zeros(1, 2), vec![0]).unwrap();
        assert!(matches!(
            margin_ce_loss(&zero, &head2(), &MarginConfig::normalized(1.0)),
            Err(Error::ZeroVector { .. })
        ));
        let bad = Batch::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), vec![2]).unwrap();
        assert!(softmax_ce_loss(&bad, &head2()).is_err());
        assert!(ClassifierHead::new(DMatrix::zeros(2, 1), DVector::zeros(1)).is_err());
    }

    #[test]
    fn toy_train_edge_cases() {
        let (x, y) = toy_gaussians(3, 10, 2, 2.0, 1.0, 1).unwrap();
        let cfg = ToyConfig {
            loss: ToyLoss::Margin(MarginConfig::normalized(10.0)),
            epochs: 5,
            lr: 0.0,
            seed: 3,
            embed_dim: 2,
        };
        let run = toy_train(&x, &y, &cfg).unwrap();
        assert_eq!(run.history.len(), 6);
        assert!(run.history.iter().all(|r| r.trace_ratio == run.history[0].trace_ratio));

        let one = vec![0; 30];
        assert!(matches!(toy_train(&x, &one, &cfg), Err(Error::InsufficientClasses { found: 1 })));
        let neg = ToyConfig { lr: -1.0, ..cfg };
        assert!(toy_train(&x, &y, &neg).is_err());
        assert!(run.history_csv().starts_with("epoch,loss,trace_ratio\n0,"));
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let (x, y) = toy_gaussians(3, 10, 2, 2.0, 1.0, 1).unwrap();
        let cfg = ToyConfig {
            loss: ToyLoss::Softmax,
            epochs: 50,
            lr: 1e300,
            seed: 0,
            embed_dim: 2,
        };
        assert!(matches!(toy_train(&x, &y, &cfg), Err(Error::TrainingDiverged { .. })));
    }
}

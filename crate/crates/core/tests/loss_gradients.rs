mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use svbackend::losses::{
    margin_ce_loss, psi, softmax_ce_loss, toy_gaussians, toy_train, Batch, ClassifierHead, MarginConfig, ToyConfig,
    ToyLoss,
};

const STEP: f64 = 1e-6;
/// Floor on the relative-error denominator. Central differences at step 1e-6
/// carry about 1e-9 of cancellation error (the loss is O(1)), so components
/// below the floor are effectively checked to an absolute 1e-8.
const FLOOR: f64 = 1e-3;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}

fn random_instance(r: &mut rand_chacha::ChaCha8Rng, n: usize, d: usize, c: usize) -> (Batch, ClassifierHead) {
    let x = normal_matrix(r, n, d);
    let labels = (0..n).map(|_| r.random_range(0..c)).collect();
    let head = ClassifierHead::new(normal_matrix(r, d, c), DVector::from_vec(normal_vec(r, c))).unwrap();
    (Batch::new(x, labels).unwrap(), head)
}

fn configs(r: &mut rand_chacha::ChaCha8Rng) -> Vec<MarginConfig> {
    let s = r.random_range(1.0..16.0);
    vec![
        MarginConfig::normalized(s),
        MarginConfig::angular(s, 2.0),
        MarginConfig::angular(s, 4.0),
        MarginConfig::additive_angular(s, r.random_range(0.05..0.5)),
        MarginConfig::additive_cosine(s, r.random_range(0.05..0.5)),
        MarginConfig::new(s, 1.0, 0.2, 0.1).unwrap(),
    ]
}

/// Max relative error over every input and weight entry.
fn check_margin(batch: &Batch, head: &ClassifierHead, cfg: &MarginConfig) -> f64 {
    let g = margin_ce_loss(batch, head, cfg).unwrap();
    let loss = |b: &Batch, h: &ClassifierHead| margin_ce_loss(b, h, cfg).unwrap().loss;
    let mut worst: f64 = 0.0;
    for i in 0..batch.inputs.len() {
        let (mut p, mut m) = (batch.clone(), batch.clone());
        p.inputs[i] += STEP;
        m.inputs[i] -= STEP;
        let fd = (loss(&p, head) - loss(&m, head)) / (2.0 * STEP);
        worst = worst.max(rel_err(g.d_inputs[i], fd));
    }
    for i in 0..head.weights.len() {
        let (mut p, mut m) = (head.clone(), head.clone());
        p.weights[i] += STEP;
        m.weights[i] -= STEP;
        let fd = (loss(batch, &p) - loss(batch, &m)) / (2.0 * STEP);
        worst = worst.max(rel_err(g.d_weights[i], fd));
    }
    worst
}

fn check_softmax(batch: &Batch, head: &ClassifierHead) -> f64 {
    let g = softmax_ce_loss(batch, head).unwrap();
    let loss = |b: &Batch, h: &ClassifierHead| softmax_ce_loss(b, h).unwrap().loss;
    let mut worst: f64 = 0.0;
    for i in 0..batch.inputs.len() {
        let (mut p, mut m) = (batch.clone(), batch.clone());
        p.inputs[i] += STEP;
        m.inputs[i] -= STEP;
        worst = worst.max(rel_err(g.d_inputs[i], (loss(&p, head) - loss(&m, head)) / (2.0 * STEP)));
    }
    for i in 0..head.weights.len() {
        let (mut p, mut m) = (head.clone(), head.clone());
        p.weights[i] += STEP;
        m.weights[i] -= STEP;
        worst = worst.max(rel_err(g.d_weights[i], (loss(batch, &p) - loss(batch, &m)) / (2.0 * STEP)));
    }
    for i in 0..head.biases.len() {
        let (mut p, mut m) = (head.clone(), head.clone());
        p.biases[i] += STEP;
        m.biases[i] -= STEP;
        worst = worst.max(rel_err(g.d_biases[i], (loss(batch, &p) - loss(batch, &m)) / (2.0 * STEP)));
    }
    worst
}

#[test]
fn analytic_gradients_match_central_differences() {
    let mut r = rng(8);
    for _ in 0..20 {
        let (batch, head) = random_instance(&mut r, 8, 5, 4);
        assert!(check_softmax(&batch, &head) < 1e-5);
        for cfg in configs(&mut r) {
            let e = check_margin(&batch, &head, &cfg);
            assert!(e < 1e-5, "{cfg:?}: {e}");
        }
    }
}

/// Normalized softmax written out directly from its definition.
fn normalized_softmax_reference(batch: &Batch, head: &ClassifierHead, s: f64) -> f64 {
    let n = batch.inputs.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let x = batch.inputs.row(i).transpose();
        let logits: Vec<f64> = (0..head.classes())
            .map(|j| {
                let w = head.weights.column(j);
                s * x.dot(&w) / (x.norm() * w.norm())
            })
            .collect();
        let denom: f64 = logits.iter().map(|z| z.exp()).sum();
        total -= (logits[batch.labels[i]].exp() / denom).ln();
    }
    total / n as f64
}

#[test]
fn identity_margin_is_the_normalized_softmax() {
    let mut r = rng(9);
    for _ in 0..50 {
        let (batch, head) = random_instance(&mut r, 6, 4, 3);
        let s = r.random_range(0.5..10.0);
        let got = margin_ce_loss(&batch, &head, &MarginConfig::normalized(s)).unwrap().loss;
        assert!((got - normalized_softmax_reference(&batch, &head, s)).abs() < 1e-12);

        let unit_x = DMatrix::from_rows(&batch.inputs.row_iter().map(|row| row / row.norm()).collect::<Vec<_>>());
        let unit_w = DMatrix::from_columns(&head.weights.column_iter().map(|c| c / c.norm()).collect::<Vec<_>>());
        let unit_batch = Batch::new(unit_x, batch.labels.clone()).unwrap();
        let unit_head = ClassifierHead::new(unit_w, DVector::zeros(3)).unwrap();
        let plain = softmax_ce_loss(&unit_batch, &unit_head).unwrap().loss;
        let margin = margin_ce_loss(&unit_batch, &unit_head, &MarginConfig::normalized(1.0)).unwrap().loss;
        assert!((plain - margin).abs() < 1e-12);
    }
}

#[test]
fn margins_never_lower_the_loss() {
    let mut r = rng(10);
    for _ in 0..100 {
        let (batch, head) = random_instance(&mut r, 8, 5, 4);
        let s = r.random_range(1.0..30.0);
        let base = margin_ce_loss(&batch, &head, &MarginConfig::normalized(s)).unwrap().loss;
        let am = margin_ce_loss(&batch, &head, &MarginConfig::additive_cosine(s, 0.2)).unwrap().loss;
        assert!(am >= base);
        assert!(base >= 0.0);
    }
}

#[test]
fn loss_ignores_input_and_weight_scale() {
    let mut r = rng(11);
    for _ in 0..30 {
        let (mut batch, mut head) = random_instance(&mut r, 5, 3, 4);
        let cfg = MarginConfig::new(12.0, 1.0, 0.2, 0.1).unwrap();
        let before = margin_ce_loss(&batch, &head, &cfg).unwrap().loss;
        let i = r.random_range(0..5);
        let j = r.random_range(0..4);
        let a = r.random_range(0.01..100.0);
        batch.inputs.row_mut(i).scale_mut(a);
        head.weights.column_mut(j).scale_mut(1.0 / a);
        let after = margin_ce_loss(&batch, &head, &cfg).unwrap().loss;
        assert!((before - after).abs() < 1e-10);
    }
}

#[test]
fn identity_psi_over_the_whole_domain() {
    let cfg = MarginConfig::normalized(1.0);
    for i in 0..=1000 {
        let c = -1.0 + i as f64 / 500.0;
        assert_eq!(psi(c, &cfg).unwrap(), c);
    }
}

#[test]
fn toy_training_is_deterministic() {
    let (x, y) = toy_gaussians(3, 20, 2, 2.0, 1.0, 4).unwrap();
    let cfg = ToyConfig {
        loss: ToyLoss::Margin(MarginConfig::additive_angular(10.0, 0.2)),
        epochs: 30,
        lr: 0.1,
        seed: 2,
        embed_dim: 2,
    };
    let a = toy_train(&x, &y, &cfg).unwrap();
    let b = toy_train(&x, &y, &cfg).unwrap();
    assert_eq!(a.history, b.history);
    assert!(a.history.last().unwrap().loss < a.history[0].loss);
}


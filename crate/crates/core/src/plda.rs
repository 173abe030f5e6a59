//! Two-covariance PLDA.
//!
//! Embeddings are modelled as `φ = μ + h + n` with a speaker offset
//! `h ~ N(0, Φ_B)` shared by all utterances of a speaker and a residual
//! `n ~ N(0, Φ_W)`. Training is EM over the latent offsets; the optional
//! diagonal constraint zeroes the off-diagonal part of `Φ_W` after every
//! M-step (PLDA-diag). Verification scores are log-likelihood ratios between
//! the same-speaker joint density of `(φ_e, φ_t)` and the product of the
//! marginals `N(μ, Φ_B + Φ_W)`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{resolve_trials, Cursor, EmbeddingArchive, ScoreSet, Trial};
use crate::error::{Error, Result};
use crate::linalg::{self, LN_2PI};
use crate::preprocess::{compute_scatter, ScatterPair};

pub const MODEL_MAGIC: &[u8; 5] = b"PLDA1";

/// Relative ridge applied to the initial scatter estimates.
const INIT_RIDGE: f64 = 1e-6;
/// Relative ridge used to rescue a within covariance that lost definiteness.
const RESCUE_RIDGE: f64 = 1e-8;
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PldaModel {
    pub mu: DVector<f64>,
    pub phi_b: DMatrix<f64>,
    pub phi_w: DMatrix<f64>,
    pub diag_constrained: bool,
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidArgument(format!("{what} is not symmetric")));
            }
        }
    }
    Ok(())
}

/// Orders a pair so that scoring is bit-for-bit symmetric.
fn canonical<'a>(e: &'a [f64], t: &'a [f64]) -> (&'a [f64], &'a [f64]) {
    let ord = e
        .iter()
        .zip(t)
        .map(|(a, b)| a.total_cmp(b))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal);
    if ord == Ordering::Greater {
        (t, e)
    } else {
        (e, t)
    }
}

impl PldaModel {
    pub fn new(mu: DVector<f64>, phi_b: DMatrix<f64>, phi_w: DMatrix<f64>, diag_constrained: bool) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return Err(Error::InvalidArgument("model dimension must be >= 1".into()));
        }
        for (m, name) in [(&phi_b, "phi_b"), (&phi_w, "phi_w")] {
            if m.shape() != (d, d) {
                return Err(Error::dim(d, m.nrows()));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} has non-finite entries")));
            }
            check_symmetric(m, name)?;
        }
        linalg::cholesky(&phi_w, "phi_w")?;
        if diag_constrained {
            let off = (0..d).any(|i| (0..d).any(|j| i != j && phi_w[(i, j)] != 0.0));
            if off {
                return Err(Error::InvalidArgument(
                    "diagonal-constrained model has off-diagonal phi_w entries".into(),
                ));
            }
        }
        Ok(PldaModel {
            mu,
            phi_b,
            phi_w,
            diag_constrained,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::dim(self.dim(), v.len()));
        }
        Ok(())
    }

    /// Log-likelihood ratio evaluated directly from the three Gaussian densities.
    ///
    /// This is the reference path: it factors the `2d × 2d` joint covariance
    /// on every call. Use [`PldaScorer`] for bulk scoring.
    pub fn score_llr(&self, e: &[f64], t: &[f64]) -> Result<f64> {
        self.check_dim(e)?;
        self.check_dim(t)?;
        let d = self.dim();
        let (a, b) = canonical(e, t);
        let x = DVectorView::from_slice(a, d) - &self.mu;
        let y = DVectorView::from_slice(b, d) - &self.mu;

        let total = &self.phi_b + &self.phi_w;
        let mut joint = DMatrix::zeros(2 * d, 2 * d);
        joint.view_mut((0, 0), (d, d)).copy_from(&total);
        joint.view_mut((d, d), (d, d)).copy_from(&total);
        joint.view_mut((0, d), (d, d)).copy_from(&self.phi_b);
        joint.view_mut((d, 0), (d, d)).copy_from(&self.phi_b);

        let chol_t = linalg::cholesky(&total, "phi_b + phi_w")?;
        let chol_j = linalg::cholesky(&joint, "joint covariance")?;
        let mut xy = DVector::zeros(2 * d);
        xy.rows_mut(0, d).copy_from(&x);
        xy.rows_mut(d, d).copy_from(&y);
        Ok(linalg::gaussian_log_density(&xy, &chol_j)
            - linalg::gaussian_log_density(&x, &chol_t)
            - linalg::gaussian_log_density(&y, &chol_t))
    }

    /// Precomputes the quadratic-form matrices for O(d²) scoring.
    pub fn scorer(&self) -> Result<PldaScorer> {
        let total = &self.phi_b + &self.phi_w;
        let chol_t = linalg::cholesky(&total, "phi_b + phi_w")?;
        let tinv_b = chol_t.solve(&self.phi_b);
        let mut schur = &total - &self.phi_b * &tinv_b;
        linalg::symmetrize(&mut schur);
        let chol_s = linalg::cholesky(&schur, "Schur complement")?;

        let t_inv = chol_t.inverse();
        let s_inv = chol_s.inverse();
        let mut q = &t_inv - &s_inv;
        linalg::symmetrize(&mut q);
        let mut p = tinv_b * &s_inv;
        linalg::symmetrize(&mut p);
        Ok(PldaScorer {
            mu: self.mu.clone(),
            q,
            p,
            constant: 0.5 * (linalg::log_det(&chol_t) - linalg::log_det(&chol_s)),
        })
    }

    /// `PLDA1` layout: magic, `u32` d, `u8` diag flag, then μ, Φ_B and Φ_W
    /// as row-major little-endian f64.
    pub fn encode(&self) -> Vec<u8> {
        let d = self.dim();
        let mut out = Vec::with_capacity(10 + 8 * d * (2 * d + 1));
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&(d as u32).to_le_bytes());
        out.push(self.diag_constrained as u8);
        for v in self.mu.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for m in [&self.phi_b, &self.phi_w] {
            for i in 0..d {
                for j in 0..d {
                    out.extend_from_slice(&m[(i, j)].to_le_bytes());
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 5 || &bytes[..5] != MODEL_MAGIC {
            return Err(Error::UnsupportedFormat("missing PLDA1 magic".into()));
        }
        let mut cur = Cursor::new(&bytes[5..]);
        let d = cur.u32()? as usize;
        let diag = match cur.u8()? {
            0 => false,
            1 => true,
            other => return Err(Error::CorruptArchive(format!("bad diag flag {other}"))),
        };
        let mu = DVector::from_vec((0..d).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?);
        let mut read_mat = || -> Result<DMatrix<f64>> {
            let vals = (0..d * d).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
            Ok(DMatrix::from_row_slice(d, d, &vals))
        };
        let phi_b = read_mat()?;
        let phi_w = read_mat()?;
        if !cur.rest().is_empty() {
            return Err(Error::CorruptArchive("trailing bytes in model".into()));
        }
        PldaModel::new(mu, phi_b, phi_w, diag).map_err(|e| Error::CorruptArchive(e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

/// LLR scorer in quadratic form:
/// `s = ½xᵀQx + ½yᵀQy + xᵀPy + c` with `x, y` centered by μ.
#[derive(Debug, Clone)]
pub struct PldaScorer {
    mu: DVector<f64>,
    q: DMatrix<f64>,
    p: DMatrix<f64>,
    constant: f64,
}

impl PldaScorer {
    pub fn score(&self, e: &[f64], t: &[f64]) -> Result<f64> {
        let d = self.mu.len();
        if e.len() != d || t.len() != d {
            return Err(Error::dim(d, if e.len() != d { e.len() } else { t.len() }));
        }
        let (a, b) = canonical(e, t);
        let x = DVectorView::from_slice(a, d) - &self.mu;
        let y = DVectorView::from_slice(b, d) - &self.mu;
        Ok(0.5 * self.q.dot_quadratic(&x) + 0.5 * self.q.dot_quadratic(&y) + x.dot(&(&self.p * &y)) + self.constant)
    }
}

trait QuadraticForm {
    fn dot_quadratic(&self, x: &DVector<f64>) -> f64;
}

impl QuadraticForm for DMatrix<f64> {
    fn dot_quadratic(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(self * x))
    }
}

/// Scores a trial list with the fast quadratic-form scorer.
pub fn score_trials(model: &PldaModel, archive: &EmbeddingArchive, trials: &[Trial]) -> Result<ScoreSet> {
    if archive.dim() != model.dim() {
        return Err(Error::dim(model.dim(), archive.dim()));
    }
    let pairs = resolve_trials(archive, trials)?;
    let scorer = model.scorer()?;
    let recs = archive.records();
    let scores = pairs
        .par_iter()
        .map(|&(e, t)| scorer.score(&recs[e].vector, &recs[t].vector))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ScoreSet::from_scores(trials, scores))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmConfig {
    pub iterations: usize,
    pub diag_within: bool,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            iterations: 20,
            diag_within: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PldaFit {
    pub model: PldaModel,
    /// Marginal log-likelihood of the training data after each iteration.
    pub log_likelihoods: Vec<f64>,
    pub warnings: Vec<String>,
}

impl PldaFit {
    /// Change in log-likelihood over the final iteration.
    pub fn last_delta(&self) -> Option<f64> {
        let n = self.log_likelihoods.len();
        (n >= 2).then(|| self.log_likelihoods[n - 1] - self.log_likelihoods[n - 2])
    }
}

/// Sufficient statistics of the centered training data.
struct Stats {
    d: usize,
    n_total: usize,
    /// Utterance count per speaker.
    counts: Vec<usize>,
    /// `d × S`, column s is `Σ_i (φ_i − μ)` over speaker s.
    sums: DMatrix<f64>,
    /// `Σ_i (φ_i − μ)(φ_i − μ)ᵀ`.
    total_scatter: DMatrix<f64>,
    /// speaker-size histogram
    sizes: BTreeMap<usize, usize>,
}

impl Stats {
    fn new(archive: &EmbeddingArchive, mu: &DVector<f64>, groups: &[(String, Vec<usize>)]) -> Self {
        let d = archive.dim();
        let recs = archive.records();
        let mut sums = DMatrix::zeros(d, groups.len());
        let mut total_scatter = DMatrix::zeros(d, d);
        let mut counts = Vec::with_capacity(groups.len());
        let mut sizes = BTreeMap::new();
        for (s, (_, idx)) in groups.iter().enumerate() {
            let mut f = DVector::zeros(d);
            for &i in idx {
                let x = DVectorView::from_slice(&recs[i].vector, d) - mu;
                total_scatter.ger(1.0, &x, &x, 1.0);
                f += x;
            }
            sums.set_column(s, &f);
            counts.push(idx.len());
            *sizes.entry(idx.len()).or_insert(0) += 1;
        }
        linalg::symmetrize(&mut total_scatter);
        Stats {
            d,
            n_total: archive.len(),
            counts,
            sums,
            total_scatter,
            sizes,
        }
    }
}

/// Posterior statistics of the speaker offsets under the current parameters.
struct Posterior {
    /// `d × S` posterior means.
    means: DMatrix<f64>,
    /// Posterior covariance for each speaker size.
    covs: BTreeMap<usize, DMatrix<f64>>,
    log_likelihood: f64,
}

/// E-step. With `A_n = Φ_W + nΦ_B`, the posterior of a speaker with `n`
/// utterances has covariance `Φ_B A_n⁻¹ Φ_W` and mean `Φ_B A_n⁻¹ f`, which
/// avoids inverting a possibly singular `Φ_B`.
fn e_step(stats: &Stats, b: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<Posterior> {
    let d = stats.d;
    let chol_w = linalg::cholesky(w, "phi_w")?;
    let logdet_w = linalg::log_det(&chol_w);
    let mut covs = BTreeMap::new();
    let mut gains = BTreeMap::new();
    let mut logdet_sum = 0.0;
    for (&n, &count) in &stats.sizes {
        let a = w + b * n as f64;
        let chol_a = linalg::cholesky(&a, "phi_w + n phi_b")?;
        let gain = chol_a.solve(b).transpose();
        let mut cov = &gain * w;
        linalg::symmetrize(&mut cov);
        logdet_sum += count as f64 * ((n as f64 - 1.0) * logdet_w + linalg::log_det(&chol_a));
        covs.insert(n, cov);
        gains.insert(n, gain);
    }
    let mut means = DMatrix::zeros(d, stats.counts.len());
    for (s, &n) in stats.counts.iter().enumerate() {
        means.set_column(s, &(&gains[&n] * stats.sums.column(s)));
    }
    let quad_total = chol_w.solve(&stats.total_scatter).trace();
    let explained = chol_w.solve(&stats.sums).component_mul(&means).sum();
    let log_likelihood =
        -0.5 * (stats.n_total as f64 * d as f64 * LN_2PI + logdet_sum + quad_total - explained);
    Ok(Posterior {
        means,
        covs,
        log_likelihood,
    })
}

fn m_step(stats: &Stats, post: &Posterior) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = stats.d;
    let n_spk = stats.counts.len();
    let m = &post.means;

    let mut cov_sum = DMatrix::zeros(d, d);
    let mut weighted_cov_sum = DMatrix::zeros(d, d);
    for (&n, &count) in &stats.sizes {
        cov_sum += &post.covs[&n] * count as f64;
        weighted_cov_sum += &post.covs[&n] * (n * count) as f64;
    }
    let mut b = (&cov_sum + m * m.transpose()) / n_spk as f64;

    let scaled = DMatrix::from_fn(d, n_spk, |r, c| m[(r, c)] * stats.counts[c] as f64);
    let cross = &stats.sums * m.transpose();
    let mut w = (&stats.total_scatter - &cross - cross.transpose() + weighted_cov_sum + scaled * m.transpose())
        / stats.n_total as f64;
    linalg::symmetrize(&mut b);
    linalg::symmetrize(&mut w);
    (b, w)
}

/// Ridge `amount·tr/d` on a copy, or seeded jitter when the trace is zero.
fn regularize(m: &DMatrix<f64>, amount: f64, fallback_scale: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let d = m.nrows();
    let mut out = m.clone();
    linalg::add_ridge(&mut out, amount * m.trace() / d as f64);
    if out.clone().cholesky().is_none() {
        for i in 0..d {
            out[(i, i)] += amount * fallback_scale * rng.random_range(0.5..1.5);
        }
    }
    out
}

/// Trains a two-covariance PLDA model by EM.
///
/// μ is fixed to the data mean; Φ_B and Φ_W start from the between/within
/// scatter. The returned log-likelihoods are evaluated after each M-step and
/// are non-decreasing when the diagonal constraint is off.
pub fn fit_plda(archive: &EmbeddingArchive, cfg: &EmConfig) -> Result<PldaFit> {
    if cfg.iterations == 0 {
        return Err(Error::InvalidArgument("EM needs at least one iteration".into()));
    }
    let groups = archive.speaker_groups()?;
    if groups.len() < 2 {
        return Err(Error::InsufficientClasses { found: groups.len() });
    }
    let scatter = compute_scatter(archive)?;
    let d = archive.dim();
    let mu = scatter.mean.clone();
    let stats = Stats::new(archive, &mu, &groups);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total_scale = {
        let t = (scatter.between.trace() + scatter.within.trace()) / d as f64;
        if t > 0.0 {
            t
        } else {
            1.0
        }
    };
    let mut b = regularize(&scatter.between, INIT_RIDGE, total_scale, &mut rng);
    let mut w = regularize(&scatter.within, INIT_RIDGE, total_scale, &mut rng);
    if cfg.diag_within {
        w = linalg::diagonal_part(&w);
    }

    let mut warnings = Vec::new();
    let mut log_likelihoods = Vec::with_capacity(cfg.iterations);
    let mut post = e_step(&stats, &b, &w)?;
    for iter in 0..cfg.iterations {
        let (nb, mut nw) = m_step(&stats, &post);
        if cfg.diag_within {
            nw = linalg::diagonal_part(&nw);
        }
        if nw.clone().cholesky().is_none() {
            let ridge = RESCUE_RIDGE * nw.trace().abs().max(f64::MIN_POSITIVE) / d as f64;
            linalg::add_ridge(&mut nw, ridge);
            warnings.push(format!(
                "iteration {}: phi_w lost positive definiteness, added ridge {ridge:.3e}",
                iter + 1
            ));
            if nw.clone().cholesky().is_none() {
                return Err(Error::SingularCovariance(format!(
                    "phi_w singular after ridge at iteration {}",
                    iter + 1
                )));
            }
        }
        b = nb;
        w = nw;
        post = e_step(&stats, &b, &w)?;
        log_likelihoods.push(post.log_likelihood);
    }

    let model = PldaModel::new(mu, b, w, cfg.diag_within)?;
    Ok(PldaFit {
        model,
        log_likelihoods,
        warnings,
    })
}

/// One row of the covariance diagnostics table.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub rank: usize,
    pub dim_index: usize,
    pub between: f64,
    pub within: f64,
}

impl DiagnosticRow {
    pub fn log10_between(&self) -> Option<f64> {
        (self.between > 0.0).then(|| self.between.log10())
    }

    pub fn log10_within(&self) -> Option<f64> {
        (self.within > 0.0).then(|| self.within.log10())
    }
}

/// Per-dimension diagonals of `between` and `within`, sorted by decreasing
/// between-speaker variance (ties keep dimension order).
pub fn diagnose_covariances(between: &DMatrix<f64>, within: &DMatrix<f64>) -> Result<Vec<DiagnosticRow>> {
    if between.shape() != within.shape() || !between.is_square() {
        return Err(Error::dim(between.nrows(), within.nrows()));
    }
    let mut dims: Vec<usize> = (0..between.nrows()).collect();
    dims.sort_by(|&a, &b| between[(b, b)].total_cmp(&between[(a, a)]));
    Ok(dims
        .into_iter()
        .enumerate()
        .map(|(rank, i)| DiagnosticRow {
            rank: rank + 1,
            dim_index: i,
            between: between[(i, i)],
            within: within[(i, i)],
        })
        .collect())
}

pub fn diagnose_model(model: &PldaModel) -> Vec<DiagnosticRow> {
    diagnose_covariances(&model.phi_b, &model.phi_w).expect("model matrices share a shape")
}

pub fn diagnose_scatter(scatter: &ScatterPair) -> Vec<DiagnosticRow> {
    diagnose_covariances(&scatter.between, &scatter.within).expect("scatter matrices share a shape")
}

/// CSV with columns `rank,dim_index,between,within,log10_between,log10_within`.
/// Non-positive entries get `-inf` in the log columns.
pub fn diagnostics_csv(rows: &[DiagnosticRow]) -> String {
    let fmt_log = |v: Option<f64>| v.map_or_else(|| "-inf".to_string(), |l| format!("{l:.6}"));
    let mut out = String::from("rank,dim_index,between,within,log10_between,log10_within\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.9e},{:.9e},{},{}",
            r.rank,
            r.dim_index,
            r.between,
            r.within,
            fmt_log(r.log10_between()),
            fmt_log(r.log10_within())
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Embedding, TrialLabel};

    fn scalar_model(b: f64, w: f64) -> PldaModel {
        PldaModel::new(
            DVector::zeros(1),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, w),
            false,
        )
        .unwrap()
    }

    #[test]
    fn hand_value_in_one_dimension() {
        let m = scalar_model(1.0, 1.0);
        let expected = 2f64.ln() - 0.5 * 3f64.ln();
        assert!((m.score_llr(&[0.0], &[0.0]).unwrap() - expected).abs() < 1e-12);
        assert!((m.scorer().unwrap().score(&[0.0], &[0.0]).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.14384).abs() < 1e-5);
    }

    #[test]
    fn no_speaker_variability_scores_zero() {
        let m = PldaModel::new(
            DVector::from_vec(vec![0.3, -1.0]),
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            false,
        )
        .unwrap();
        let s = m.scorer().unwrap();
        for (e, t) in [([1.0, 2.0], [-3.0, 0.5]), ([0.0, 0.0], [10.0, -4.0])] {
            assert_eq!(s.score(&e, &t).unwrap(), 0.0);
            assert!(m.score_llr(&e, &t).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn scoring_is_bitwise_symmetric() {
        let m = PldaModel::new(
            DVector::from_vec(vec![0.1, 0.2]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.7]),
            DMatrix::from_row_slice(2, 2, &[0.4, -0.1, -0.1, 0.2]),
            false,
        )
        .unwrap();
        let s = m.scorer().unwrap();
        let (e, t) = ([0.37, -1.2], [1.9, 0.05]);
        assert_eq!(s.score(&e, &t).unwrap(), s.score(&t, &e).unwrap());
        assert_eq!(m.score_llr(&e, &t).unwrap(), m.score_llr(&t, &e).unwrap());
    }

    #[test]
    fn model_validation() {
        let bad_w = PldaModel::new(
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 0.0),
            false,
        );
        assert!(matches!(bad_w, Err(Error::SingularCovariance(_))));
        let asym = PldaModel::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
            DMatrix::identity(2, 2),
            false,
        );
        assert!(asym.is_err());
        let diag_bad = PldaModel::new(
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 1.0]),
            true,
        );
        assert!(diag_bad.is_err());
        let m = scalar_model(1.0, 1.0);
        assert!(matches!(m.score_llr(&[0.0, 1.0], &[0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn model_file_round_trip() {
        let m = PldaModel::new(
            DVector::from_vec(vec![1.0, 2.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.25, 0.25, 3.0]),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.75]),
            true,
        )
        .unwrap();
        let bytes = m.encode();
        assert_eq!(bytes.len(), 5 + 4 + 1 + 8 * (2 + 4 + 4));
        assert_eq!(bytes[9], 1);
        // row-major: phi_b[0][1] is the second matrix entry
        assert_eq!(&bytes[10 + 16 + 8..10 + 16 + 16], &0.25f64.to_le_bytes());
        assert_eq!(PldaModel::decode(&bytes).unwrap(), m);
        assert!(matches!(PldaModel::decode(b"PLDA0"), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(PldaModel::decode(&bytes[..20]), Err(Error::CorruptArchive(_))));
    }

    fn archive(rows: &[(&str, Vec<f64>)]) -> EmbeddingArchive {
        EmbeddingArchive::from_records(
            rows[0].1.len(),
            rows.iter()
                .enumerate()
                .map(|(i, (s, v))| Embedding::new(format!("u{i}"), Some(s.to_string()), v.clone())),
        )
        .unwrap()
    }

    #[test]
    fn fit_rejects_single_speaker() {
        let a = archive(&[("a", vec![1.0]), ("a", vec![2.0])]);
        assert!(matches!(
            fit_plda(&a, &EmConfig::default()),
            Err(Error::InsufficientClasses { found: 1 })
        ));
        let cfg = EmConfig {
            iterations: 0,
            ..EmConfig::default()
        };
        let two = archive(&[("a", vec![1.0]), ("b", vec![2.0])]);
        assert!(fit_plda(&two, &cfg).is_err());
    }

    #[test]
    fn diag_fit_matches_full_fit_when_scatter_is_diagonal() {
        // Every speaker sits on an axis and its utterances are spread
        // symmetrically along both axes, so both scatters are exactly diagonal.
        let mut rows = Vec::new();
        let centers = [[2.0, 0.0], [-2.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        for (s, c) in centers.iter().enumerate() {
            for (dx, dy) in [(0.5, 0.0), (-0.5, 0.0), (0.0, 0.3), (0.0, -0.3)] {
                rows.push((["s0", "s1", "s2", "s3"][s], vec![c[0] + dx, c[1] + dy]));
            }
        }
        let a = archive(&rows);
        let full = fit_plda(&a, &EmConfig::default()).unwrap();
        let diag = fit_plda(
            &a,
            &EmConfig {
                diag_within: true,
                ..EmConfig::default()
            },
        )
        .unwrap();
        assert!((&full.model.phi_w - &diag.model.phi_w).norm() < 1e-6);
        assert!((&full.model.phi_b - &diag.model.phi_b).norm() < 1e-6);
        assert_eq!(diag.model.phi_w[(0, 1)], 0.0);
        assert!(diag.model.diag_constrained);
    }

    #[test]
    fn score_trials_handles_empty_and_unknown() {
        let m = scalar_model(1.0, 0.5);
        let a = archive(&[("a", vec![1.0]), ("b", vec![-1.0])]);
        assert!(score_trials(&m, &a, &[]).unwrap().is_empty());
        let t = [Trial::new("u0", "nope", TrialLabel::Unknown)];
        assert!(matches!(score_trials(&m, &a, &t), Err(Error::UnknownId { index: 0, .. })));
    }

    #[test]
    fn diagnostics_table() {
        let rows = diagnose_covariances(
            &DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])),
            &DMatrix::identity(2, 2),
        )
        .unwrap();
        assert_eq!(rows[0].dim_index, 1);
        assert!((rows[0].log10_between().unwrap() - 0.60206).abs() < 1e-5);
        assert_eq!(rows[1].log10_between().unwrap(), 0.0);

        let rows = diagnose_covariances(
            &DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0])),
            &DMatrix::identity(2, 2),
        )
        .unwrap();
        assert_eq!(rows.iter().map(|r| r.dim_index).collect::<Vec<_>>(), vec![0, 1]);

        let iso = diagnose_covariances(&(DMatrix::identity(3, 3) * 2.0), &DMatrix::identity(3, 3)).unwrap();
        assert!(iso.iter().all(|r| r.between == 2.0 && r.within == 1.0));

        let csv = diagnostics_csv(&diagnose_covariances(&DMatrix::zeros(1, 1), &DMatrix::identity(1, 1)).unwrap());
        assert_eq!(
            csv,
            "rank,dim_index,between,within,log10_between,log10_within\n1,0,0.000000000e0,1.000000000e0,-inf,0.000000\n"
        );
    }
}

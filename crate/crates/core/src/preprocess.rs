//! Centering, length normalization, class scatter and LDA projections.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::data::{Cursor, EmbeddingArchive};
use crate::error::{Error, Result};
use crate::linalg;

pub const PROJECTION_MAGIC: &[u8; 4] = b"PRJ1";

/// Relative ridge added to the within-class scatter before LDA.
pub const LDA_RIDGE: f64 = 1e-6;

/// Rescales `v` to norm `√d`, preserving its direction.
pub fn length_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector { id: None });
    }
    let scale = (v.len() as f64).sqrt() / norm;
    Ok(v.iter().map(|x| x * scale).collect())
}

/// Length-normalizes every record of an archive.
pub fn length_normalize_archive(archive: &EmbeddingArchive) -> Result<EmbeddingArchive> {
    archive.map_vectors(archive.dim(), |r| {
        length_normalize(&r.vector).map_err(|_| Error::ZeroVector { id: Some(r.id.clone()) })
    })
}

/// Subtracts `mean` (or the archive mean when `None`) from every record.
pub fn center(archive: &EmbeddingArchive, mean: Option<&[f64]>) -> Result<(EmbeddingArchive, Vec<f64>)> {
    let d = archive.dim();
    let mean = match mean {
        Some(m) if m.len() != d => return Err(Error::dim(d, m.len())),
        Some(m) => m.to_vec(),
        None => archive_mean(archive),
    };
    let out = archive.map_vectors(d, |r| Ok(r.vector.iter().zip(&mean).map(|(v, m)| v - m).collect()))?;
    Ok((out, mean))
}

fn archive_mean(archive: &EmbeddingArchive) -> Vec<f64> {
    let d = archive.dim();
    let mut mean = vec![0.0; d];
    if archive.is_empty() {
        return mean;
    }
    for r in archive.iter() {
        for (m, v) in mean.iter_mut().zip(&r.vector) {
            *m += v;
        }
    }
    let n = archive.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Between- and within-speaker scatter, both normalized by the total utterance count.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPair {
    pub between: DMatrix<f64>,
    pub within: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub n_speakers: usize,
    pub n_utterances: usize,
}

/// Computes between/within scatter from a labeled archive.
///
/// `within = 1/N Σ_s Σ_i (x_i − m_s)(x_i − m_s)ᵀ` and
/// `between = 1/N Σ_s n_s (m_s − m)(m_s − m)ᵀ`, so `between + within` is the
/// total covariance around the global mean `m`.
pub fn compute_scatter(archive: &EmbeddingArchive) -> Result<ScatterPair> {
    let groups = archive.speaker_groups()?;
    if groups.len() < 2 {
        return Err(Error::InsufficientClasses { found: groups.len() });
    }
    let d = archive.dim();
    let n = archive.len();
    let recs = archive.records();
    let mean = DVector::from_vec(archive_mean(archive));

    let mut within = DMatrix::zeros(d, d);
    let mut between = DMatrix::zeros(d, d);
    for (_, idx) in &groups {
        let mut m_s = DVector::zeros(d);
        for &i in idx {
            m_s += DVectorView::from_slice(&recs[i].vector, d);
        }
        m_s /= idx.len() as f64;
        for &i in idx {
            let r = DVectorView::from_slice(&recs[i].vector, d) - &m_s;
            within.ger(1.0, &r, &r, 1.0);
        }
        let c = &m_s - &mean;
        between.ger(idx.len() as f64, &c, &c, 1.0);
    }
    within /= n as f64;
    between /= n as f64;
    linalg::symmetrize(&mut within);
    linalg::symmetrize(&mut between);
    Ok(ScatterPair {
        between,
        within,
        mean,
        n_speakers: groups.len(),
        n_utterances: n,
    })
}

/// Affine dimension reduction `v ↦ basisᵀ (v − mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub mean: DVector<f64>,
    /// `d × k`, one output direction per column.
    pub basis: DMatrix<f64>,
}

impl Projection {
    pub fn new(mean: DVector<f64>, basis: DMatrix<f64>) -> Result<Self> {
        if basis.nrows() != mean.len() {
            return Err(Error::dim(mean.len(), basis.nrows()));
        }
        if basis.ncols() == 0 {
            return Err(Error::BadRank { k: 0, max: basis.nrows() });
        }
        if basis.iter().chain(mean.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("projection has non-finite entries".into()));
        }
        Ok(Projection { mean, basis })
    }

    pub fn input_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn apply_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.input_dim() {
            return Err(Error::dim(self.input_dim(), v.len()));
        }
        let c = DVectorView::from_slice(v, v.len()) - &self.mean;
        Ok(self.basis.tr_mul(&c).as_slice().to_vec())
    }

    pub fn apply(&self, archive: &EmbeddingArchive) -> Result<EmbeddingArchive> {
        if archive.dim() != self.input_dim() {
            return Err(Error::dim(self.input_dim(), archive.dim()));
        }
        archive.map_vectors(self.output_dim(), |r| self.apply_vec(&r.vector))
    }

    /// `PRJ1` layout: magic, `u32` d, `u32` k, mean (f64 LE), basis column-major (f64 LE).
    pub fn encode(&self) -> Vec<u8> {
        let (d, k) = self.basis.shape();
        let mut out = Vec::with_capacity(12 + 8 * d * (k + 1));
        out.extend_from_slice(PROJECTION_MAGIC);
        out.extend_from_slice(&(d as u32).to_le_bytes());
        out.extend_from_slice(&(k as u32).to_le_bytes());
        for v in self.mean.iter().chain(self.basis.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != PROJECTION_MAGIC {
            return Err(Error::UnsupportedFormat("missing PRJ1 magic".into()));
        }
        let mut cur = Cursor::new(&bytes[4..]);
        let d = cur.u32()? as usize;
        let k = cur.u32()? as usize;
        let mean = DVector::from_iterator(d, (0..d).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?);
        let basis = DMatrix::from_vec(d, k, (0..d * k).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?);
        if !cur.rest().is_empty() {
            return Err(Error::CorruptArchive("trailing bytes in projection".into()));
        }
        Projection::new(mean, basis).map_err(|e| Error::CorruptArchive(e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

/// Fits an LDA (or LDA-diag when `diag_within`) projection to `k` dimensions.
///
/// The rank is bounded by `min(d, S − 1)` for `S` speakers.
pub fn fit_lda(archive: &EmbeddingArchive, k: usize, diag_within: bool) -> Result<Projection> {
    let scatter = compute_scatter(archive)?;
    let max = archive.dim().min(scatter.n_speakers - 1);
    if k == 0 || k > max {
        return Err(Error::BadRank { k, max });
    }
    lda_from_scatter(&scatter, k, diag_within)
}

/// Solves `between·v = λ·within_reg·v` and keeps the top-`k` directions.
///
/// `within_reg = within + ε·tr(within)/d·I`; with `diag_within` the
/// off-diagonal part of `within` is dropped first. Columns are ordered by
/// decreasing eigenvalue, scaled so that `vᵀ·within_reg·v = 1`, and signed so
/// their largest-magnitude component is positive.
pub fn lda_from_scatter(scatter: &ScatterPair, k: usize, diag_within: bool) -> Result<Projection> {
    let d = scatter.within.nrows();
    if k == 0 || k > d {
        return Err(Error::BadRank { k, max: d });
    }
    let mut within = if diag_within {
        linalg::diagonal_part(&scatter.within)
    } else {
        scatter.within.clone()
    };
    let ridge = LDA_RIDGE * within.trace() / d as f64;
    linalg::add_ridge(&mut within, ridge);
    let chol = within.cholesky().ok_or(Error::SingularScatter)?;
    let l = chol.l();

    // M = L⁻¹ B L⁻ᵀ
    let lb = l.solve_lower_triangular(&scatter.between).ok_or(Error::SingularScatter)?;
    let mut m = l
        .solve_lower_triangular(&lb.transpose())
        .ok_or(Error::SingularScatter)?;
    linalg::symmetrize(&mut m);
    let (_, vecs) = linalg::sorted_symmetric_eigen(m);
    let top = vecs.columns(0, k).into_owned();
    let mut basis = l.transpose().solve_upper_triangular(&top).ok_or(Error::SingularScatter)?;
    linalg::fix_column_signs(&mut basis);
    Projection::new(scatter.mean.clone(), basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Embedding;

    fn labeled(rows: &[(&str, &[f64])]) -> EmbeddingArchive {
        let d = rows[0].1.len();
        EmbeddingArchive::from_records(
            d,
            rows.iter()
                .enumerate()
                .map(|(i, (s, v))| Embedding::new(format!("u{i}"), Some(s.to_string()), v.to_vec())),
        )
        .unwrap()
    }

    #[test]
    fn length_normalize_examples() {
        assert_eq!(length_normalize(&[2.0, 0.0, 0.0, 0.0]).unwrap(), vec![2.0, 0.0, 0.0, 0.0]);
        let v = length_normalize(&[3.0, 4.0]).unwrap();
        let r2 = 2f64.sqrt();
        assert!((v[0] - 3.0 * r2 / 5.0).abs() < 1e-15);
        assert!((v[1] - 4.0 * r2 / 5.0).abs() < 1e-15);
        assert!((v[0] - 0.8485).abs() < 1e-4 && (v[1] - 1.1314).abs() < 1e-4);
        assert!(matches!(length_normalize(&[0.0, 0.0]), Err(Error::ZeroVector { .. })));
    }

    #[test]
    fn scatter_two_singletons() {
        let a = labeled(&[("a", &[1.0, 0.0]), ("b", &[-1.0, 0.0])]);
        let s = compute_scatter(&a).unwrap();
        assert_eq!(s.within, DMatrix::zeros(2, 2));
        assert_eq!(s.between, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn scatter_of_identical_points_is_zero() {
        let a = labeled(&[("a", &[2.0, 3.0]), ("a", &[2.0, 3.0]), ("b", &[2.0, 3.0])]);
        let s = compute_scatter(&a).unwrap();
        assert_eq!(s.within.norm(), 0.0);
        assert_eq!(s.between.norm(), 0.0);
    }

    #[test]
    fn scatter_errors() {
        let one = labeled(&[("a", &[1.0]), ("a", &[2.0])]);
        assert!(matches!(compute_scatter(&one), Err(Error::InsufficientClasses { found: 1 })));
        let mut unl = one.clone();
        unl.push(Embedding::new("x", None, vec![0.0])).unwrap();
        assert!(matches!(compute_scatter(&unl), Err(Error::MissingLabel { .. })));
    }

    #[test]
    fn lda_picks_between_direction() {
        let scatter = ScatterPair {
            between: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            within: DMatrix::identity(2, 2),
            mean: DVector::zeros(2),
            n_speakers: 3,
            n_utterances: 6,
        };
        let p = lda_from_scatter(&scatter, 1, false).unwrap();
        let col = p.basis.column(0);
        assert!(col[0] > 0.0);
        assert!(col[1].abs() < 1e-12);
        // normalized against within_reg = (1 + 1e-6) I
        assert!((col[0] - 1.0 / (1.0 + 1e-6f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn lda_rank_bound_uses_speaker_count() {
        let a = labeled(&[
            ("a", &[1.0, 0.0, 0.3]),
            ("a", &[1.2, 0.1, 0.0]),
            ("b", &[-1.0, 0.5, 0.2]),
            ("b", &[-0.8, 0.4, -0.1]),
        ]);
        assert!(fit_lda(&a, 1, false).is_ok());
        assert!(matches!(fit_lda(&a, 2, false), Err(Error::BadRank { k: 2, max: 1 })));
        assert!(matches!(fit_lda(&a, 0, true), Err(Error::BadRank { .. })));
    }

    #[test]
    fn singular_within_is_reported() {
        let a = labeled(&[("a", &[1.0, 0.0]), ("b", &[-1.0, 0.0]), ("c", &[0.0, 1.0])]);
        assert!(matches!(fit_lda(&a, 1, false), Err(Error::SingularScatter)));
    }

    #[test]
    fn projection_application() {
        let p = Projection::new(DVector::from_vec(vec![1.0, 1.0]), DMatrix::identity(2, 2)).unwrap();
        assert_eq!(p.apply_vec(&[2.0, 3.0]).unwrap(), vec![1.0, 2.0]);

        let a = labeled(&[("a", &[2.0, 3.0]), ("b", &[0.0, 1.0])]);
        let ident = Projection::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        assert_eq!(ident.apply(&a).unwrap(), a);

        let e1 = Projection::new(DVector::zeros(2), DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let out = e1.apply(&a).unwrap();
        assert_eq!(out.dim(), 1);
        assert_eq!(out.records()[0].vector, vec![2.0]);
        assert_eq!(out.records()[0].speaker.as_deref(), Some("a"));

        let wrong = Projection::new(DVector::zeros(3), DMatrix::identity(3, 3)).unwrap();
        assert!(matches!(wrong.apply(&a), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn projection_file_round_trip() {
        let p = Projection::new(
            DVector::from_vec(vec![0.5, -1.0, 2.0]),
            DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
        )
        .unwrap();
        let bytes = p.encode();
        assert_eq!(bytes.len(), 12 + 8 * 9);
        assert_eq!(&bytes[12 + 24..12 + 32], &1.0f64.to_le_bytes());
        assert_eq!(Projection::decode(&bytes).unwrap(), p);
        assert!(matches!(Projection::decode(b"PRJ0"), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn center_examples() {
        let a = labeled(&[("a", &[1.0, 1.0]), ("b", &[3.0, 3.0])]);
        let (c, m) = center(&a, None).unwrap();
        assert_eq!(m, vec![2.0, 2.0]);
        assert_eq!(c.records()[0].vector, vec![-1.0, -1.0]);
        assert_eq!(c.records()[1].vector, vec![1.0, 1.0]);
        let (same, _) = center(&a, Some(&[0.0, 0.0])).unwrap();
        assert_eq!(same, a);
        assert!(matches!(center(&a, Some(&[0.0])), Err(Error::DimensionMismatch { .. })));
    }
}

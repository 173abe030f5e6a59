//! Cosine similarity scoring.

use rayon::prelude::*;

use crate::data::{resolve_trials, EmbeddingArchive, ScoreSet, Trial};
use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `⟨e,t⟩ / (‖e‖‖t‖)`, clamped into `[-1, 1]`.
pub fn cosine_score(e: &[f64], t: &[f64]) -> Result<f64> {
    if e.len() != t.len() {
        return Err(Error::dim(e.len(), t.len()));
    }
    let ee = dot(e, e);
    let tt = dot(t, t);
    if ee == 0.0 || tt == 0.0 {
        return Err(Error::ZeroVector { id: None });
    }
    Ok((dot(e, t) / (ee * tt).sqrt()).clamp(-1.0, 1.0))
}

/// Scores every trial; squared norms are computed once per embedding.
pub fn cosine_score_trials(archive: &EmbeddingArchive, trials: &[Trial]) -> Result<ScoreSet> {
    let pairs = resolve_trials(archive, trials)?;
    let sq_norms: Vec<f64> = archive
        .iter()
        .map(|r| {
            let n = dot(&r.vector, &r.vector);
            if n == 0.0 {
                return Err(Error::ZeroVector { id: Some(r.id.clone()) });
            }
            Ok(n)
        })
        .collect::<Result<_>>()?;
    let recs = archive.records();
    let scores = pairs
        .par_iter()
        .map(|&(e, t)| (dot(&recs[e].vector, &recs[t].vector) / (sq_norms[e] * sq_norms[t]).sqrt()).clamp(-1.0, 1.0))
        .collect();
    Ok(ScoreSet::from_scores(trials, scores))
}

//! Detection metrics: DET operating points, EER and minDCF.
//!
//! Conventions: a trial is accepted when `score >= threshold`, so ties count
//! on the false-alarm side. The curve has one operating point per distinct
//! score plus a final point at `+inf` where everything is rejected.

use std::fmt::Write as _;

use crate::data::{ScoreSet, TrialLabel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfParams {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl Default for DcfParams {
    fn default() -> Self {
        DcfParams {
            p_target: 0.01,
            c_miss: 1.0,
            c_fa: 1.0,
        }
    }
}

impl DcfParams {
    pub fn new(p_target: f64, c_miss: f64, c_fa: f64) -> Result<Self> {
        if !(p_target > 0.0 && p_target < 1.0) {
            return Err(Error::InvalidArgument(format!("p_target must be in (0,1), got {p_target}")));
        }
        if !(c_miss > 0.0 && c_miss.is_finite()) || !(c_fa > 0.0 && c_fa.is_finite()) {
            return Err(Error::InvalidArgument("detection costs must be positive".into()));
        }
        Ok(DcfParams { p_target, c_miss, c_fa })
    }

    /// Normalized cost at one operating point.
    pub fn normalized_cost(&self, p_miss: f64, p_fa: f64) -> f64 {
        let miss = self.c_miss * self.p_target;
        let fa = self.c_fa * (1.0 - self.p_target);
        (miss * p_miss + fa * p_fa) / miss.min(fa)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    /// Ordered by increasing threshold.
    pub points: Vec<DetPoint>,
}

impl DetCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,p_miss,p_fa\n");
        for p in &self.points {
            let _ = writeln!(out, "{:.6},{:.9},{:.9}", p.threshold, p.p_miss, p.p_fa);
        }
        out
    }
}

/// Splits a labeled score set into target and nontarget scores.
pub fn split_scores(scores: &ScoreSet) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut tar = Vec::new();
    let mut non = Vec::new();
    for (index, e) in scores.entries.iter().enumerate() {
        if e.score.is_nan() {
            return Err(Error::DomainError { value: e.score });
        }
        match e.trial.label {
            TrialLabel::Target => tar.push(e.score),
            TrialLabel::Nontarget => non.push(e.score),
            TrialLabel::Unknown => return Err(Error::UnlabeledTrial { index }),
        }
    }
    if tar.is_empty() || non.is_empty() {
        return Err(Error::DegenerateTrialSet {
            targets: tar.len(),
            nontargets: non.len(),
        });
    }
    Ok((tar, non))
}

pub fn det_curve(scores: &ScoreSet) -> Result<DetCurve> {
    let (tar, non) = split_scores(scores)?;
    Ok(det_from_split(&tar, &non))
}

pub(crate) fn det_from_split(targets: &[f64], nontargets: &[f64]) -> DetCurve {
    let mut all: Vec<(f64, bool)> = targets
        .iter()
        .map(|&s| (s, true))
        .chain(nontargets.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    let n_tar = targets.len() as f64;
    let n_non = nontargets.len() as f64;
    let mut points = Vec::new();
    let (mut tar_below, mut non_below) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        points.push(DetPoint {
            threshold: t,
            p_miss: tar_below as f64 / n_tar,
            p_fa: (nontargets.len() - non_below) as f64 / n_non,
        });
        // `==` rather than total order, so -0.0 and 0.0 are one threshold
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                tar_below += 1;
            } else {
                non_below += 1;
            }
            i += 1;
        }
    }
    points.push(DetPoint {
        threshold: f64::INFINITY,
        p_miss: 1.0,
        p_fa: 0.0,
    });
    DetCurve { points }
}

/// Crossing of `p_miss` and `p_fa`, linearly interpolated between the two
/// operating points that bracket it.
pub fn eer_from_curve(curve: &DetCurve) -> f64 {
    let pts = &curve.points;
    let i = pts
        .iter()
        .position(|p| p.p_miss >= p.p_fa)
        .expect("the +inf point always has p_miss >= p_fa");
    if i == 0 {
        return pts[0].p_miss;
    }
    let (a, b) = (pts[i - 1], pts[i]);
    let rise = (b.p_miss - a.p_miss) - (b.p_fa - a.p_fa);
    let lambda = (a.p_fa - a.p_miss) / rise;
    a.p_miss + lambda * (b.p_miss - a.p_miss)
}

pub fn eer(scores: &ScoreSet) -> Result<f64> {
    Ok(eer_from_curve(&det_curve(scores)?))
}

pub fn eer_from_split(targets: &[f64], nontargets: &[f64]) -> Result<f64> {
    if targets.is_empty() || nontargets.is_empty() {
        return Err(Error::DegenerateTrialSet {
            targets: targets.len(),
            nontargets: nontargets.len(),
        });
    }
    Ok(eer_from_curve(&det_from_split(targets, nontargets)))
}

/// Minimum normalized DCF and the threshold attaining it (first one on ties).
pub fn min_dcf_from_curve(curve: &DetCurve, params: &DcfParams) -> (f64, f64) {
    let mut best = (f64::INFINITY, f64::NAN);
    for p in &curve.points {
        let c = params.normalized_cost(p.p_miss, p.p_fa);
        if c < best.0 {
            best = (c, p.threshold);
        }
    }
    best
}

pub fn min_dcf(scores: &ScoreSet, params: &DcfParams) -> Result<(f64, f64)> {
    Ok(min_dcf_from_curve(&det_curve(scores)?, params))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub eer: f64,
    pub min_dcf: f64,
    pub dcf_threshold: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
}

impl Metrics {
    pub const CSV_HEADER: &'static str = "eer,min_dcf,dcf_threshold,n_target,n_nontarget";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{},{}",
            self.eer, self.min_dcf, self.dcf_threshold, self.n_target, self.n_nontarget
        )
    }
}

pub fn evaluate(scores: &ScoreSet, params: &DcfParams) -> Result<Metrics> {
    let (tar, non) = split_scores(scores)?;
    let curve = det_from_split(&tar, &non);
    let (min_dcf, dcf_threshold) = min_dcf_from_curve(&curve, params);
    Ok(Metrics {
        eer: eer_from_curve(&curve),
        min_dcf,
        dcf_threshold,
        n_target: tar.len(),
        n_nontarget: non.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Trial;

    fn set(t: &[f64], n: &[f64]) -> ScoreSet {
        ScoreSet::from_target_nontarget(t, n)
    }

    #[test]
    fn separable_and_swapped() {
        let s = set(&[1.0], &[0.0]);
        let c = det_curve(&s).unwrap();
        assert!(c.points.iter().any(|p| p.p_miss == 0.0 && p.p_fa == 0.0));
        assert_eq!(eer(&s).unwrap(), 0.0);
        assert_eq!(min_dcf(&s, &DcfParams::default()).unwrap().0, 0.0);

        let sw = set(&[0.0], &[1.0]);
        let c = det_curve(&sw).unwrap();
        assert!(!c.points.iter().any(|p| p.p_miss == 0.0 && p.p_fa == 0.0));
        assert_eq!(eer(&sw).unwrap(), 1.0);

        assert_eq!(eer(&set(&[0.9, 0.8], &[0.1, 0.2])).unwrap(), 0.0);
    }

    #[test]
    fn all_equal_scores_give_corners() {
        let s = set(&[0.5, 0.5], &[0.5, 0.5, 0.5]);
        let c = det_curve(&s).unwrap();
        assert_eq!(c.points.len(), 2);
        assert_eq!((c.points[0].p_miss, c.points[0].p_fa), (0.0, 1.0));
        assert_eq!((c.points[1].p_miss, c.points[1].p_fa), (1.0, 0.0));
        assert_eq!(min_dcf(&s, &DcfParams::default()).unwrap().0, 1.0);
        assert_eq!(eer(&s).unwrap(), 0.5);
    }

    #[test]
    fn interleaved_overlap() {
        // 0.5 is the first threshold where a target is missed; ties accept,
        // so the point there is (0.5, 0.5).
        let s = set(&[0.6, 0.4], &[0.5, 0.3]);
        assert_eq!(eer(&s).unwrap(), 0.5);
    }

    #[test]
    fn label_errors() {
        let mut s = set(&[1.0], &[0.0]);
        s.entries.push(crate::data::ScoredTrial {
            trial: Trial::new("a", "b", TrialLabel::Unknown),
            score: 0.3,
        });
        assert!(matches!(eer(&s), Err(Error::UnlabeledTrial { index: 2 })));
        assert!(matches!(
            eer(&set(&[1.0, 2.0], &[])),
            Err(Error::DegenerateTrialSet { targets: 2, nontargets: 0 })
        ));
    }

    #[test]
    fn params_validation() {
        assert!(DcfParams::new(0.0, 1.0, 1.0).is_err());
        assert!(DcfParams::new(0.5, -1.0, 1.0).is_err());
        let p = DcfParams::new(0.5, 1.0, 1.0).unwrap();
        assert_eq!(p.normalized_cost(1.0, 0.0), 1.0);
    }

    #[test]
    fn metrics_row() {
        let m = evaluate(&set(&[0.9, 0.8], &[0.1, 0.2]), &DcfParams::default()).unwrap();
        assert_eq!(m.csv_row(), "0.000000,0.000000,0.800000,2,2");
    }
}

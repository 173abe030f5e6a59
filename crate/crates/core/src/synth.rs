//! Synthetic embeddings drawn from the two-covariance generative model.
//!
//! Every draw comes from a `ChaCha8Rng` seeded with `SynthSpec::seed`
//! (rand_chacha's ChaCha with 8 rounds) and `rand_distr::StandardNormal`, so
//! a spec always regenerates the same archive on any platform.
//!
//! Sampling order: for each speaker, `d` normals for the offset `h`, then
//! `d` normals per utterance for the residual.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Embedding, EmbeddingArchive, Trial, TrialLabel};
use crate::error::{Error, Result};
use crate::linalg;
use crate::preprocess::compute_scatter;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub d: usize,
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    pub phi_b: DMatrix<f64>,
    pub phi_w: DMatrix<f64>,
    pub mu: DVector<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Conventional,
    LargeMargin,
}

impl Preset {
    pub const NAMES: [&'static str; 2] = ["conventional", "large-margin"];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "conventional" => Ok(Preset::Conventional),
            "large-margin" => Ok(Preset::LargeMargin),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Conventional => "conventional",
            Preset::LargeMargin => "large-margin",
        }
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| StandardNormal.sample(rng))
}

/// `a·(b/a)^(i/(d−1))` for `i = 0..d`.
pub fn log_ramp(a: f64, b: f64, d: usize) -> Vec<f64> {
    if d == 1 {
        return vec![a];
    }
    (0..d)
        .map(|i| a * (b / a).powf(i as f64 / (d - 1) as f64))
        .collect()
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of R's diagonal folded into Q.
pub fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

impl SynthSpec {
    pub fn new(
        n_speakers: usize,
        utts_per_speaker: usize,
        phi_b: DMatrix<f64>,
        phi_w: DMatrix<f64>,
        mu: DVector<f64>,
        seed: u64,
    ) -> Result<Self> {
        let spec = SynthSpec {
            d: mu.len(),
            n_speakers,
            utts_per_speaker,
            phi_b,
            phi_w,
            mu,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        if self.mu.len() != self.d {
            return Err(Error::dim(self.d, self.mu.len()));
        }
        for m in [&self.phi_b, &self.phi_w] {
            if m.shape() != (self.d, self.d) {
                return Err(Error::dim(self.d, m.nrows()));
            }
            if (m - m.transpose()).amax() > 1e-10 * m.amax().max(1.0) {
                return Err(Error::InvalidArgument("covariance is not symmetric".into()));
            }
        }
        Ok(())
    }

    /// Canonical preset with 200 speakers × 10 utterances and zero mean.
    ///
    /// * `large-margin`: Φ_B = diag(ramp 1.0 → 0.5), Φ_W = diag(ramp 0.15 → 0.45).
    ///   Between exceeds within in every dimension and is spread evenly.
    /// * `conventional`: Φ_W = Q·diag(ramp 1.2 → 0.4)·Qᵀ with a seeded Haar
    ///   rotation Q; Φ_B = diag(ramp 1 → 0.001) rescaled so that
    ///   tr(Φ_B) = 0.5·tr(Φ_W). Between variance sits in a few dimensions.
    ///
    /// Ramps are log-linear. The rotation is drawn from a stream independent
    /// of the sampling stream.
    pub fn preset(name: &str, d: usize, seed: u64) -> Result<Self> {
        let preset = Preset::parse(name)?;
        if d < 4 {
            return Err(Error::InvalidArgument(format!("presets need d >= 4, got {d}")));
        }
        let diag = |v: Vec<f64>| DMatrix::from_diagonal(&DVector::from_vec(v));
        let (phi_b, phi_w) = match preset {
            Preset::LargeMargin => (diag(log_ramp(1.0, 0.5, d)), diag(log_ramp(0.15, 0.45, d))),
            Preset::Conventional => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
                let q = random_orthogonal(d, &mut rng);
                let mut w = &q * diag(log_ramp(1.2, 0.4, d)) * q.transpose();
                linalg::symmetrize(&mut w);
                let b = diag(log_ramp(1.0, 0.001, d));
                let scale = 0.5 * w.trace() / b.trace();
                (b * scale, w)
            }
        };
        SynthSpec::new(200, 10, phi_b, phi_w, DVector::zeros(d), seed)
    }
}

pub fn preset(name: &str, d: usize, seed: u64) -> Result<SynthSpec> {
    SynthSpec::preset(name, d, seed)
}

/// Draws a speaker-labelled archive. Speaker ids are `spkNNNN`, utterance
/// ids `spkNNNN-uNNN`.
pub fn sample_dataset(spec: &SynthSpec) -> Result<EmbeddingArchive> {
    spec.validate()?;
    let fb = linalg::psd_factor(&spec.phi_b, "phi_b")?;
    let fw = linalg::psd_factor(&spec.phi_w, "phi_w")?;
    let d = spec.d;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut archive = EmbeddingArchive::new(d)?;
    for s in 0..spec.n_speakers {
        let spk = format!("spk{s:04}");
        let h = &fb * normal_vec(&mut rng, d);
        for u in 0..spec.utts_per_speaker {
            let phi = &spec.mu + &h + &fw * normal_vec(&mut rng, d);
            archive.push(Embedding::new(
                format!("{spk}-u{u:03}"),
                Some(spk.clone()),
                phi.iter().copied().collect(),
            ))?;
        }
    }
    Ok(archive)
}

/// Whether a sampled archive shows the covariance shape its preset promises:
/// between above within in every dimension (`large-margin`), or within
/// trace above between trace (`conventional`).
pub fn check_preset(preset: Preset, archive: &EmbeddingArchive) -> Result<bool> {
    let sc = compute_scatter(archive)?;
    Ok(match preset {
        Preset::LargeMargin => (0..archive.dim()).all(|i| sc.between[(i, i)] > sc.within[(i, i)]),
        Preset::Conventional => sc.within.trace() > sc.between.trace(),
    })
}

/// Seeded balanced trial list over a labelled archive: target pairs are two
/// distinct utterances of one speaker, nontarget pairs come from two
/// different speakers.
pub fn sample_trials(archive: &EmbeddingArchive, n_target: usize, n_nontarget: usize, seed: u64) -> Result<Vec<Trial>> {
    use rand::Rng;
    let groups = archive.speaker_groups()?;
    let multi: Vec<&Vec<usize>> = groups.iter().map(|(_, g)| g).filter(|g| g.len() >= 2).collect();
    if n_target > 0 && multi.is_empty() {
        return Err(Error::InsufficientClasses { found: 0 });
    }
    if n_nontarget > 0 && groups.len() < 2 {
        return Err(Error::InsufficientClasses { found: groups.len() });
    }
    let recs = archive.records();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(n_target + n_nontarget);
    for _ in 0..n_target {
        let g = multi[rng.random_range(0..multi.len())];
        let a = rng.random_range(0..g.len());
        let mut b = rng.random_range(0..g.len() - 1);
        if b >= a {
            b += 1;
        }
        trials.push(Trial::new(&recs[g[a]].id, &recs[g[b]].id, TrialLabel::Target));
    }
    for _ in 0..n_nontarget {
        let sa = rng.random_range(0..groups.len());
        let mut sb = rng.random_range(0..groups.len() - 1);
        if sb >= sa {
            sb += 1;
        }
        let (ga, gb) = (&groups[sa].1, &groups[sb].1);
        let a = ga[rng.random_range(0..ga.len())];
        let b = gb[rng.random_range(0..gb.len())];
        trials.push(Trial::new(&recs[a].id, &recs[b].id, TrialLabel::Nontarget));
    }
    Ok(trials)
}

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use clap::ArgMatches;
use nalgebra::{DMatrix, DVector};
use svbackend::losses::{self, MarginConfig, ToyConfig, ToyLoss};
use svbackend::preprocess::{self, Projection};
use svbackend::synth::{self, Preset};
use svbackend::{cosine, data, metrics, plda, DcfParams, EmConfig, EmbeddingArchive, PldaModel, ScoreSet, SynthSpec};

use crate::{Backend, DiagnoseArgs, EvaluateArgs, Failure, LossKind, PreprocessArgs, ScoreArgs, SynthArgs, ToyTrainArgs, TrainPldaArgs};

type Outcome = Result<(), Failure>;

fn emit(path: Option<&Path>, bytes: &[u8]) -> io::Result<()> {
    match path {
        Some(p) => fs::write(p, bytes),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()
        }
    }
}

fn archive_bytes(archive: &EmbeddingArchive, binary: bool) -> svbackend::Result<Vec<u8>> {
    if binary {
        archive.encode_binary()
    } else {
        let mut buf = Vec::new();
        archive.write_text_to(&mut buf)?;
        Ok(buf)
    }
}

pub fn synth(a: &SynthArgs) -> Outcome {
    let mut spec = match (&a.preset, a.between, a.within) {
        (Some(name), _, _) => SynthSpec::preset(name, a.d, a.seed)?,
        (None, Some(b), Some(w)) => {
            if !(b >= 0.0 && w > 0.0) {
                return Err(Failure::Usage("--between must be >= 0 and --within > 0".into()));
            }
            let eye = DMatrix::<f64>::identity(a.d, a.d);
            SynthSpec::new(a.speakers, a.utts, eye.scale(b), eye.scale(w), DVector::zeros(a.d), a.seed)?
        }
        _ => unreachable!("clap requires a preset or both variances"),
    };
    spec.n_speakers = a.speakers;
    spec.utts_per_speaker = a.utts;
    let archive = synth::sample_dataset(&spec)?;
    eprintln!("synth: {} speakers x {} utterances, d={}", a.speakers, a.utts, a.d);
    if let Some(name) = &a.preset {
        let preset = Preset::parse(name)?;
        if a.speakers >= 2 && a.utts >= 2 && !synth::check_preset(preset, &archive)? {
            eprintln!("synth: warning: sample does not show the {} covariance shape for seed {}", preset.name(), a.seed);
        }
    }
    emit(a.output.as_deref(), &archive_bytes(&archive, a.binary)?)?;
    if let Some(path) = &a.trials {
        let trials = synth::sample_trials(&archive, a.n_target, a.n_nontarget, a.trial_seed.unwrap_or(a.seed))?;
        data::write_trials(&trials, path)?;
        eprintln!("synth: wrote {} trials", trials.len());
    }
    Ok(())
}

enum Stage {
    Ln,
    Center,
    Lda(usize, bool),
    Apply(std::path::PathBuf),
}

/// Stages in the order their flags appeared on the command line.
fn stages(a: &PreprocessArgs, m: &ArgMatches) -> Vec<Stage> {
    let idx = |id: &str| m.indices_of(id).map(|i| i.collect::<Vec<_>>()).unwrap_or_default();
    let mut out: Vec<(usize, Stage)> = Vec::new();
    out.extend(idx("ln").into_iter().map(|i| (i, Stage::Ln)));
    out.extend(idx("center").into_iter().map(|i| (i, Stage::Center)));
    out.extend(idx("lda").into_iter().zip(&a.lda).map(|(i, &k)| (i, Stage::Lda(k, false))));
    out.extend(idx("lda_diag").into_iter().zip(&a.lda_diag).map(|(i, &k)| (i, Stage::Lda(k, true))));
    out.extend(idx("projection").into_iter().zip(&a.projection).map(|(i, p)| (i, Stage::Apply(p.clone()))));
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, s)| s).collect()
}

pub fn preprocess(a: &PreprocessArgs, m: &ArgMatches) -> Outcome {
    let stages = stages(a, m);
    if stages.is_empty() {
        return Err(Failure::Usage("no stages given; use --ln, --center, --lda, --lda-diag or --projection".into()));
    }
    let fitted = stages.iter().filter(|s| matches!(s, Stage::Lda(..))).count();
    if a.save_projection.is_some() && fitted != 1 {
        return Err(Failure::Usage(format!("--save-projection needs exactly one LDA stage, got {fitted}")));
    }
    let mut archive = EmbeddingArchive::read_auto(&a.input)?;
    let mut saved: Option<Projection> = None;
    for stage in &stages {
        archive = match stage {
            Stage::Ln => preprocess::length_normalize_archive(&archive)?,
            Stage::Center => preprocess::center(&archive, None)?.0,
            Stage::Lda(k, diag) => {
                let p = preprocess::fit_lda(&archive, *k, *diag)?;
                let out = p.apply(&archive)?;
                saved = Some(p);
                out
            }
            Stage::Apply(path) => Projection::read(path)?.apply(&archive)?,
        };
    }
    if let (Some(path), Some(p)) = (&a.save_projection, &saved) {
        p.write(path)?;
    }
    eprintln!("preprocess: {} records, output dim {}", archive.len(), archive.dim());
    emit(a.output.as_deref(), &archive_bytes(&archive, a.binary)?)?;
    Ok(())
}

pub fn train_plda(a: &TrainPldaArgs) -> Outcome {
    let archive = EmbeddingArchive::read_auto(&a.input)?;
    let cfg = EmConfig {
        iterations: a.iters,
        diag_within: a.diag,
        seed: a.seed,
    };
    let fit = plda::fit_plda(&archive, &cfg)?;
    for w in &fit.warnings {
        eprintln!("train-plda: warning: {w}");
    }
    if let Some(ll) = fit.log_likelihoods.last() {
        eprintln!("train-plda: {} iterations, final log-likelihood {ll:.6}", fit.log_likelihoods.len());
    }
    if let Some(path) = &a.log {
        let mut csv = String::from("iteration,log_likelihood\n");
        for (i, ll) in fit.log_likelihoods.iter().enumerate() {
            csv.push_str(&format!("{},{:.9}\n", i + 1, ll));
        }
        fs::write(path, csv)?;
    }
    emit(a.output.as_deref(), &fit.model.encode())?;
    Ok(())
}

pub fn score(a: &ScoreArgs) -> Outcome {
    let archive = EmbeddingArchive::read_auto(&a.input)?;
    let trials = data::read_trials(&a.trials)?;
    let scores = match a.backend {
        Backend::Cosine => cosine::cosine_score_trials(&archive, &trials)?,
        Backend::Plda => {
            let path = a.model.as_ref().ok_or_else(|| Failure::Usage("--backend plda needs --model".into()))?;
            let model = PldaModel::read(path)?;
            plda::score_trials(&model, &archive, &trials)?
        }
    };
    eprintln!("score: {} trials", scores.len());
    let mut buf = Vec::new();
    scores.write_text_to(&mut buf)?;
    emit(a.output.as_deref(), &buf)?;
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs) -> Outcome {
    let params = DcfParams::new(a.p_target, a.c_miss, a.c_fa)?;
    let scores = ScoreSet::read_text(&a.scores)?;
    let result = metrics::evaluate(&scores, &params)?;
    if let Some(path) = &a.det {
        fs::write(path, metrics::det_curve(&scores)?.to_csv())?;
    }
    eprintln!("evaluate: EER {:.4}%, minDCF {:.4}", 100.0 * result.eer, result.min_dcf);
    let text = format!("{}\n{}\n", metrics::Metrics::CSV_HEADER, result.csv_row());
    emit(a.output.as_deref(), text.as_bytes())?;
    Ok(())
}

pub fn diagnose(a: &DiagnoseArgs) -> Outcome {
    let rows = match (&a.model, &a.labeled_archive) {
        (Some(path), None) => plda::diagnose_model(&PldaModel::read(path)?),
        (None, Some(path)) => {
            let archive = EmbeddingArchive::read_auto(path)?;
            plda::diagnose_scatter(&preprocess::compute_scatter(&archive)?)
        }
        _ => return Err(Failure::Usage("give exactly one of --model or --labeled-archive".into())),
    };
    emit(a.output.as_deref(), plda::diagnostics_csv(&rows).as_bytes())?;
    Ok(())
}

pub fn toy_config(a: &ToyTrainArgs) -> Result<ToyLoss, Failure> {
    let (m1, m2, m3) = match a.loss {
        LossKind::Softmax => {
            if a.m1.is_some() || a.m2.is_some() || a.m3.is_some() {
                return Err(Failure::Usage("margin flags do not apply to --loss softmax".into()));
            }
            return Ok(ToyLoss::Softmax);
        }
        LossKind::NormSoftmax => (1.0, 0.0, 0.0),
        LossKind::Am => (1.0, 0.0, 0.2),
        LossKind::Aam => (1.0, 0.2, 0.0),
        LossKind::A => (2.0, 0.0, 0.0),
    };
    let cfg = MarginConfig::new(a.s, a.m1.unwrap_or(m1), a.m2.unwrap_or(m2), a.m3.unwrap_or(m3))?;
    Ok(ToyLoss::Margin(cfg))
}

pub fn toy_train(a: &ToyTrainArgs) -> Outcome {
    let loss = toy_config(a)?;
    let (points, labels) = losses::toy_gaussians(
        a.classes,
        a.per_class,
        a.dim,
        a.radius,
        a.spread,
        a.data_seed.unwrap_or(a.seed),
    )?;
    let cfg = ToyConfig {
        loss,
        epochs: a.epochs,
        lr: a.lr,
        seed: a.seed,
        embed_dim: a.embed_dim,
    };
    let run = losses::toy_train(&points, &labels, &cfg)?;
    eprintln!("toy-train: final tr(S_W)/tr(S_B) = {:.6}", run.final_ratio());
    emit(a.output.as_deref(), run.history_csv().as_bytes())?;
    Ok(())
}

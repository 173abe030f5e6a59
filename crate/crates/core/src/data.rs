//! Embeddings, trial lists and score sets, plus their interchange formats.
//!
//! Text embedding archive:
//!
//! ```text
//! #emb dim=3 speaker=yes
//! utt1 spk1 0.1 -0.2 0.3
//! ```
//!
//! The header line is optional; without it there is no speaker column and the
//! dimension is taken from the first record. Other lines starting with `#` are
//! comments. Blank lines are skipped.
//!
//! Binary archive (`EMB1`), all integers little-endian:
//! magic `EMB1`, `u32` dim, `u32` record count, then per record a `u16` id
//! length, the UTF-8 id, a `u16` speaker length (0 = absent), the speaker
//! bytes and `dim` IEEE-754 `f32` values.
//!
//! Trial list: `enroll_id test_id [target|nontarget]` per line.
//!
//! Score file: `enroll_id test_id score [label]` per line, score printed with
//! six decimals.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Line, Result};

pub const ARCHIVE_MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub id: String,
    pub speaker: Option<String>,
    pub vector: Vec<f64>,
}

impl Embedding {
    pub fn new(id: impl Into<String>, speaker: Option<String>, vector: Vec<f64>) -> Self {
        Embedding {
            id: id.into(),
            speaker,
            vector,
        }
    }
}

/// An ordered collection of same-dimension embeddings with unique ids.
#[derive(Debug, Clone)]
pub struct EmbeddingArchive {
    dim: usize,
    records: Vec<Embedding>,
    index: HashMap<String, usize>,
}

impl PartialEq for EmbeddingArchive {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.records == other.records
    }
}

impl EmbeddingArchive {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be >= 1".into()));
        }
        Ok(EmbeddingArchive {
            dim,
            records: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn from_records(dim: usize, records: impl IntoIterator<Item = Embedding>) -> Result<Self> {
        let mut archive = Self::new(dim)?;
        for r in records {
            archive.push(r)?;
        }
        Ok(archive)
    }

    /// Appends a record, enforcing dimension, finiteness and id uniqueness.
    pub fn push(&mut self, e: Embedding) -> Result<()> {
        self.push_at(e, None)
    }

    fn push_at(&mut self, e: Embedding, line: Option<Line>) -> Result<()> {
        if e.vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: e.vector.len(),
                line,
            });
        }
        if e.vector.iter().any(|v| !v.is_finite()) {
            return Err(match line {
                Some(line) => Error::NonFinite { line },
                None => Error::InvalidArgument(format!("record {:?} has non-finite values", e.id)),
            });
        }
        if self.index.contains_key(&e.id) {
            return Err(Error::DuplicateId { id: e.id, line });
        }
        self.index.insert(e.id.clone(), self.records.len());
        self.records.push(e);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Embedding] {
        &self.records
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Embedding> {
        self.records.iter()
    }

    pub fn get(&self, id: &str) -> Option<&Embedding> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// True when at least one record carries a speaker label.
    pub fn has_speakers(&self) -> bool {
        self.records.iter().any(|r| r.speaker.is_some())
    }

    /// Builds a new archive of dimension `dim` by mapping every vector.
    pub fn map_vectors<F>(&self, dim: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&Embedding) -> Result<Vec<f64>>,
    {
        let mut out = Self::new(dim)?;
        out.records.reserve(self.records.len());
        for r in &self.records {
            let v = f(r)?;
            out.push(Embedding::new(r.id.clone(), r.speaker.clone(), v))?;
        }
        Ok(out)
    }

    /// Groups record indices by speaker, in order of first appearance.
    ///
    /// Fails with `MissingLabel` on the first unlabeled record.
    pub fn speaker_groups(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        let mut lookup: HashMap<&str, usize> = HashMap::new();
        for (i, r) in self.records.iter().enumerate() {
            let spk = r.speaker.as_deref().ok_or_else(|| Error::MissingLabel { id: r.id.clone() })?;
            match lookup.get(spk) {
                Some(&g) => groups[g].1.push(i),
                None => {
                    lookup.insert(spk, groups.len());
                    groups.push((spk.to_string(), vec![i]));
                }
            }
        }
        Ok(groups)
    }

    pub fn read_text(path: impl AsRef<Path>) -> Result<Self> {
        let file = fs::File::open(path)?;
        Self::parse_text(BufReader::new(file))
    }

    pub fn parse_text(reader: impl BufRead) -> Result<Self> {
        let mut labeled = false;
        let mut declared_dim = None;
        let mut archive: Option<Self> = None;
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = Line(n + 1);
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix("#emb") {
                if archive.is_some() {
                    return Err(Error::Malformed {
                        line: Some(lineno),
                        reason: "header after data".into(),
                    });
                }
                for kv in rest.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("dim", v)) => {
                            let d = v.parse::<usize>().map_err(|_| Error::Malformed {
                                line: Some(lineno),
                                reason: format!("bad dim {v:?}"),
                            })?;
                            declared_dim = Some(d);
                        }
                        Some(("speaker", "yes")) => labeled = true,
                        Some(("speaker", "no")) => labeled = false,
                        _ => {
                            return Err(Error::Malformed {
                                line: Some(lineno),
                                reason: format!("unknown header field {kv:?}"),
                            })
                        }
                    }
                }
                if let Some(d) = declared_dim {
                    archive = Some(Self::new(d).map_err(|_| Error::Malformed {
                        line: Some(lineno),
                        reason: "dim must be >= 1".into(),
                    })?);
                }
                continue;
            }
            if trimmed.starts_with('#') {
                continue;
            }
            let mut tokens = trimmed.split_whitespace();
            let id = tokens.next().expect("non-empty line").to_string();
            let speaker = if labeled {
                Some(
                    tokens
                        .next()
                        .ok_or_else(|| Error::Malformed {
                            line: Some(lineno),
                            reason: "missing speaker column".into(),
                        })?
                        .to_string(),
                )
            } else {
                None
            };
            let mut vector = Vec::new();
            for tok in tokens {
                let v: f64 = tok.parse().map_err(|_| Error::NonNumeric {
                    line: lineno,
                    token: tok.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(Error::NonFinite { line: lineno });
                }
                vector.push(v);
            }
            if vector.is_empty() {
                return Err(Error::Malformed {
                    line: Some(lineno),
                    reason: "record has no components".into(),
                });
            }
            let arch = match archive.as_mut() {
                Some(a) => a,
                None => archive.insert(Self::new(vector.len())?),
            };
            arch.push_at(Embedding::new(id, speaker, vector), Some(lineno))?;
        }
        archive.ok_or_else(|| Error::Malformed {
            line: None,
            reason: "empty archive without a dim header".into(),
        })
    }

    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        self.write_text_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_text_to(&self, w: &mut impl Write) -> Result<()> {
        let labeled = self.has_speakers();
        writeln!(
            w,
            "#emb dim={} speaker={}",
            self.dim,
            if labeled { "yes" } else { "no" }
        )?;
        for r in &self.records {
            check_token(&r.id)?;
            write!(w, "{}", r.id)?;
            if labeled {
                let spk = r.speaker.as_deref().ok_or_else(|| Error::MissingLabel { id: r.id.clone() })?;
                check_token(spk)?;
                write!(w, " {spk}")?;
            }
            for v in &r.vector {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_binary(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::decode_binary(&bytes)
    }

    pub fn decode_binary(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != ARCHIVE_MAGIC {
            return Err(Error::UnsupportedFormat("missing EMB1 magic".into()));
        }
        let mut cur = Cursor::new(&bytes[4..]);
        let dim = cur.u32()? as usize;
        let count = cur.u32()? as usize;
        let mut archive = Self::new(dim).map_err(|_| Error::CorruptArchive("dim is zero".into()))?;
        for i in 0..count {
            let id_len = cur.u16()? as usize;
            let id = cur.utf8(id_len)?;
            let spk_len = cur.u16()? as usize;
            let speaker = if spk_len == 0 { None } else { Some(cur.utf8(spk_len)?) };
            let mut vector = Vec::with_capacity(dim);
            for _ in 0..dim {
                vector.push(f32::from_le_bytes(cur.take_array()?) as f64);
            }
            archive.push(Embedding::new(id, speaker, vector)).map_err(|e| match e {
                Error::DuplicateId { id, .. } => Error::DuplicateId { id, line: None },
                other => Error::CorruptArchive(format!("record {i}: {other}")),
            })?;
        }
        if !cur.rest().is_empty() {
            return Err(Error::CorruptArchive("trailing bytes after last record".into()));
        }
        Ok(archive)
    }

    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode_binary()?)?;
        Ok(())
    }

    pub fn encode_binary(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(12 + self.records.len() * (8 + 4 * self.dim));
        out.extend_from_slice(ARCHIVE_MAGIC);
        out.extend_from_slice(&u32_len(self.dim)?.to_le_bytes());
        out.extend_from_slice(&u32_len(self.records.len())?.to_le_bytes());
        for r in &self.records {
            put_str(&mut out, &r.id)?;
            put_str(&mut out, r.speaker.as_deref().unwrap_or(""))?;
            for &v in &r.vector {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Reads either format, sniffing the `EMB1` magic.
    pub fn read_auto(path: impl AsRef<Path>) -> Result<Self> {
        let mut head = [0u8; 4];
        let mut file = fs::File::open(path.as_ref())?;
        let n = file.read(&mut head)?;
        if n == 4 && &head == ARCHIVE_MAGIC {
            Self::read_binary(path)
        } else {
            Self::read_text(path)
        }
    }
}

fn check_token(s: &str) -> Result<()> {
    if s.is_empty() || s.chars().any(char::is_whitespace) {
        return Err(Error::Malformed {
            line: None,
            reason: format!("token {s:?} cannot be written to a whitespace-separated file"),
        });
    }
    Ok(())
}

fn u32_len(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::InvalidArgument(format!("{n} does not fit in u32")))
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| Error::InvalidArgument(format!("string of {} bytes exceeds u16 length", s.len())))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

/// Little-endian reader over a byte slice; running short is a corrupt archive.
pub(crate) struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Cursor { buf }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::CorruptArchive("truncated record".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub(crate) fn take_array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take_array()?))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take_array()?))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take_array()?))
    }

    fn utf8(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::CorruptArchive("invalid UTF-8 in string field".into()))
    }

    pub(crate) fn rest(&self) -> &'a [u8] {
        self.buf
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrialLabel {
    Target,
    Nontarget,
    Unknown,
}

impl TrialLabel {
    pub fn as_str(self) -> Option<&'static str> {
        match self {
            TrialLabel::Target => Some("target"),
            TrialLabel::Nontarget => Some("nontarget"),
            TrialLabel::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub enroll_id: String,
    pub test_id: String,
    pub label: TrialLabel,
}

impl Trial {
    pub fn new(enroll: impl Into<String>, test: impl Into<String>, label: TrialLabel) -> Self {
        Trial {
            enroll_id: enroll.into(),
            test_id: test.into(),
            label,
        }
    }
}

fn parse_label(tok: &str, line: Line) -> Result<TrialLabel> {
    match tok {
        "target" => Ok(TrialLabel::Target),
        "nontarget" => Ok(TrialLabel::Nontarget),
        other => Err(Error::BadLabel {
            line,
            label: other.to_string(),
        }),
    }
}

pub fn read_trials(path: impl AsRef<Path>) -> Result<Vec<Trial>> {
    parse_trials(BufReader::new(fs::File::open(path)?))
}

pub fn parse_trials(reader: impl BufRead) -> Result<Vec<Trial>> {
    let mut trials = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = Line(n + 1);
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() || toks[0].starts_with('#') {
            continue;
        }
        let label = match toks.len() {
            2 => TrialLabel::Unknown,
            3 => parse_label(toks[2], lineno)?,
            k => {
                return Err(Error::Malformed {
                    line: Some(lineno),
                    reason: format!("expected 2 or 3 columns, found {k}"),
                })
            }
        };
        trials.push(Trial::new(toks[0], toks[1], label));
    }
    Ok(trials)
}

pub fn write_trials(trials: &[Trial], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for t in trials {
        match t.label.as_str() {
            Some(l) => writeln!(w, "{} {} {l}", t.enroll_id, t.test_id)?,
            None => writeln!(w, "{} {}", t.enroll_id, t.test_id)?,
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrial {
    pub trial: Trial,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub entries: Vec<ScoredTrial>,
}

impl ScoreSet {
    pub fn new(entries: Vec<ScoredTrial>) -> Self {
        ScoreSet { entries }
    }

    /// Pairs `scores` with `trials` in order.
    pub fn from_scores(trials: &[Trial], scores: Vec<f64>) -> Self {
        debug_assert_eq!(trials.len(), scores.len());
        ScoreSet {
            entries: trials
                .iter()
                .cloned()
                .zip(scores)
                .map(|(trial, score)| ScoredTrial { trial, score })
                .collect(),
        }
    }

    /// Builds an anonymous labeled score set, handy for metric computations.
    pub fn from_target_nontarget(targets: &[f64], nontargets: &[f64]) -> Self {
        let mk = |i: usize, s: f64, label| ScoredTrial {
            trial: Trial::new(format!("e{i}"), format!("t{i}"), label),
            score: s,
        };
        let mut entries: Vec<_> = targets.iter().enumerate().map(|(i, &s)| mk(i, s, TrialLabel::Target)).collect();
        let off = entries.len();
        entries.extend(
            nontargets
                .iter()
                .enumerate()
                .map(|(i, &s)| mk(off + i, s, TrialLabel::Nontarget)),
        );
        ScoreSet { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.score)
    }

    pub fn write_text_to(&self, w: &mut impl Write) -> Result<()> {
        for e in &self.entries {
            write!(w, "{} {} {:.6}", e.trial.enroll_id, e.trial.test_id, e.score)?;
            if let Some(l) = e.trial.label.as_str() {
                write!(w, " {l}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        self.write_text_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_text(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_text(BufReader::new(fs::File::open(path)?))
    }

    pub fn parse_text(reader: impl BufRead) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = Line(n + 1);
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.is_empty() {
                continue;
            }
            if toks.len() != 3 && toks.len() != 4 {
                return Err(Error::Malformed {
                    line: Some(lineno),
                    reason: format!("expected 3 or 4 columns, found {}", toks.len()),
                });
            }
            let score: f64 = toks[2].parse().map_err(|_| Error::NonNumeric {
                line: lineno,
                token: toks[2].to_string(),
            })?;
            if !score.is_finite() {
                return Err(Error::NonFinite { line: lineno });
            }
            let label = match toks.get(3) {
                Some(tok) => parse_label(tok, lineno)?,
                None => TrialLabel::Unknown,
            };
            entries.push(ScoredTrial {
                trial: Trial::new(toks[0], toks[1], label),
                score,
            });
        }
        Ok(ScoreSet { entries })
    }
}

/// Resolves every trial against `archive`, returning `(enroll, test)` record indices.
pub fn resolve_trials(archive: &EmbeddingArchive, trials: &[Trial]) -> Result<Vec<(usize, usize)>> {
    trials
        .iter()
        .enumerate()
        .map(|(index, t)| {
            let find = |id: &str| {
                archive.position(id).ok_or_else(|| Error::UnknownId {
                    index,
                    id: id.to_string(),
                })
            };
            Ok((find(&t.enroll_id)?, find(&t.test_id)?))
        })
        .collect()
}

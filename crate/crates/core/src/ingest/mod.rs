//! Building language indices from a Common Voice style release: a TSV of
//! transcripts and a directory of MP3 clips.
//!
//! Clips are capped (seeded random selection), measured, stored in the CAS with
//! their sentence and sentence metadata, and split into ten equal-population
//! buckets by characters per second, slowest speech first.

mod mp3;
mod text;

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cas::{BlockStore, CasError, Cid};
use crate::datamodel::canonical::round_decimal;
use crate::datamodel::{
    encode, ClipEntry, Extra, LanguageEntry, LanguageIndex, LanguageMeta, Sentence, SentenceMeta,
};

pub use mp3::{mp3_duration, FrameHeader, UnsupportedAudio};
pub use text::{chars_per_sec, tag_tokens, tokenize, NonPositiveLength};

pub const BUCKETS: usize = 10;
pub const DEFAULT_CAP: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("TSV header: {0}")]
    Header(String),
    #[error("reading TSV: {0}")]
    Tsv(#[from] csv::Error),
    #[error("no usable clips ({skipped} skipped)")]
    NoUsableClips { skipped: usize },
    #[error(transparent)]
    Store(#[from] CasError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRow {
    pub clip_path: PathBuf,
    pub sentence: String,
    pub language: String,
    /// Demographic columns (`age`, `gender`, `accents`, ...) when present. Never
    /// written into the indices.
    pub demographics: BTreeMap<String, String>,
}

#[derive(Debug, Default)]
pub struct ParsedCorpus {
    pub rows: Vec<CorpusRow>,
    pub skipped_empty: usize,
    pub skipped_missing_clip: usize,
    pub skipped_malformed: usize,
}

impl ParsedCorpus {
    pub fn skipped(&self) -> usize {
        self.skipped_empty + self.skipped_missing_clip + self.skipped_malformed
    }
}

const DEMOGRAPHIC_COLUMNS: [&str; 5] = ["age", "gender", "accent", "accents", "variant"];

/// Reads a TSV with at least `path` and `sentence` columns. A `locale` column,
/// when present and non-empty, overrides `language` per row.
pub fn parse_corpus<R: Read>(
    tsv: R,
    clips_dir: &Path,
    language: &str,
) -> Result<ParsedCorpus, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .from_reader(tsv);
    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let path_col = column("path").ok_or_else(|| IngestError::Header("no `path` column".into()))?;
    let sentence_col =
        column("sentence").ok_or_else(|| IngestError::Header("no `sentence` column".into()))?;
    let locale_col = column("locale");
    let demographic_cols: Vec<(usize, &str)> = DEMOGRAPHIC_COLUMNS
        .iter()
        .filter_map(|&name| column(name).map(|i| (i, name)))
        .collect();

    let mut parsed = ParsedCorpus::default();
    for record in reader.records() {
        let record = match record {
            Ok(r) if r.len() == headers.len() => r,
            Ok(_) | Err(_) => {
                parsed.skipped_malformed += 1;
                continue;
            }
        };
        let sentence = record[sentence_col].trim();
        if sentence.is_empty() {
            parsed.skipped_empty += 1;
            continue;
        }
        let clip_path = clips_dir.join(record[path_col].trim());
        if !clip_path.is_file() {
            parsed.skipped_missing_clip += 1;
            continue;
        }
        let language = locale_col
            .map(|i| record[i].trim())
            .filter(|l| !l.is_empty())
            .unwrap_or(language)
            .to_owned();
        let demographics = demographic_cols
            .iter()
            .filter(|(i, _)| !record[*i].trim().is_empty())
            .map(|(i, name)| (name.to_string(), record[*i].trim().to_owned()))
            .collect();
        parsed.rows.push(CorpusRow {
            clip_path,
            sentence: sentence.to_owned(),
            language,
            demographics,
        });
    }
    if parsed.skipped() > 0 {
        tracing::warn!(
            empty = parsed.skipped_empty,
            missing = parsed.skipped_missing_clip,
            malformed = parsed.skipped_malformed,
            "skipped corpus rows"
        );
    }
    Ok(parsed)
}

/// Ten clip lists in ascending order of difficulty.
#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyBuckets {
    pub buckets: Vec<Vec<ClipEntry>>,
}

impl DifficultyBuckets {
    pub fn clip_count(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum()
    }

    /// Stores each non-empty bucket as a language index, plus `meta`, and returns
    /// the resulting entry. Empty buckets only occur at the tail, so bucket
    /// order is preserved.
    pub fn store(
        &self,
        store: &dyn BlockStore,
        meta: &LanguageMeta,
    ) -> Result<LanguageEntry, CasError> {
        let mut cids = Vec::with_capacity(BUCKETS);
        for clips in self.buckets.iter().filter(|b| !b.is_empty()) {
            cids.push(store.put(&encode(&LanguageIndex {
                clips: clips.clone(),
            }))?);
        }
        let meta = store.put(&encode(meta))?;
        Ok(LanguageEntry::new(cids, meta))
    }
}

/// Splits clips into [`BUCKETS`] consecutive runs of `ceil(n / 10)` after
/// sorting by `chars_sec`. A run boundary that falls inside a group of equal
/// values moves up so the whole group stays in the lower bucket; any
/// shortfall shows up as empty buckets at the end.
pub fn partition_into_buckets(mut clips: Vec<ClipEntry>) -> DifficultyBuckets {
    clips.sort_by(|a, b| {
        a.chars_sec
            .total_cmp(&b.chars_sec)
            .then_with(|| a.clip_cid.cmp(&b.clip_cid))
            .then_with(|| a.sentence_cid.cmp(&b.sentence_cid))
    });
    let n = clips.len();
    let chunk = n.div_ceil(BUCKETS).max(1);
    let mut bounds = Vec::with_capacity(BUCKETS + 1);
    bounds.push(0);
    for k in 1..BUCKETS {
        let mut b = (k * chunk).min(n).max(bounds[k - 1]);
        while b > 0 && b < n && clips[b].chars_sec == clips[b - 1].chars_sec {
            b += 1;
        }
        bounds.push(b);
    }
    bounds.push(n);

    let mut rest = clips.into_iter();
    let buckets = bounds
        .windows(2)
        .map(|w| rest.by_ref().take(w[1] - w[0]).collect())
        .collect();
    DifficultyBuckets { buckets }
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub cap: usize,
    pub seed: u64,
    /// SPDX identifier written into every sentence.
    pub copyright: String,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_CAP,
            seed: 0,
            copyright: "CC0-1.0".into(),
        }
    }
}

#[derive(Debug)]
pub struct BuildOutcome {
    pub buckets: DifficultyBuckets,
    /// Clips dropped because their audio could not be read or measured.
    pub skipped: Vec<(PathBuf, String)>,
}

/// Indices of at most `cap` rows, chosen uniformly with a seeded generator and
/// returned in corpus order.
pub fn select_rows(total: usize, cap: usize, seed: u64) -> Vec<usize> {
    if total <= cap {
        return (0..total).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, total, cap).into_vec();
    picked.sort_unstable();
    picked
}

enum ClipOutcome {
    Stored(ClipEntry),
    Skipped(PathBuf, String),
}

fn ingest_clip(
    row: &CorpusRow,
    store: &dyn BlockStore,
    copyright: &str,
) -> Result<ClipOutcome, CasError> {
    let audio = match std::fs::read(&row.clip_path) {
        Ok(bytes) => bytes,
        Err(e) => return Ok(ClipOutcome::Skipped(row.clip_path.clone(), e.to_string())),
    };
    let length = match mp3_duration(&audio) {
        Ok(secs) => round_decimal(secs),
        Err(e) => return Ok(ClipOutcome::Skipped(row.clip_path.clone(), e.to_string())),
    };
    let chars_sec = match chars_per_sec(&row.sentence, length) {
        Ok(v) => v,
        Err(e) => return Ok(ClipOutcome::Skipped(row.clip_path.clone(), e.to_string())),
    };

    let clip_cid = store.put(&audio)?;
    let sentence = Sentence::new(row.sentence.clone(), copyright, row.language.clone());
    let sentence_cid = store.put(&encode(&sentence))?;
    let meta_cid = store.put(&encode(&sentence_meta(&sentence_cid, &row.sentence)))?;
    Ok(ClipOutcome::Stored(ClipEntry {
        chars_sec,
        clip_cid,
        length,
        sentence_cid,
        meta_cid,
        extra: Extra::new(),
    }))
}

/// Tokens and tags for a sentence already stored under `sentence_cid`.
pub fn sentence_meta(sentence_cid: &Cid, content: &str) -> SentenceMeta {
    let tokens = tokenize(content);
    let tags = tag_tokens(&tokens);
    SentenceMeta::new(sentence_cid.clone(), tokens, tags)
}

/// Selects, measures and stores clips, then buckets them. Per-clip work runs in
/// parallel; bucketing is a single reduction over the finished clips.
pub fn build_buckets(
    rows: &[CorpusRow],
    store: &dyn BlockStore,
    options: &BuildOptions,
) -> Result<BuildOutcome, IngestError> {
    let selected = select_rows(rows.len(), options.cap, options.seed);
    let outcomes: Vec<ClipOutcome> = selected
        .par_iter()
        .map(|&i| ingest_clip(&rows[i], store, &options.copyright))
        .collect::<Result<_, _>>()?;

    let mut clips = Vec::with_capacity(outcomes.len());
    let mut skipped = Vec::new();
    for outcome in outcomes {
        match outcome {
            ClipOutcome::Stored(clip) => clips.push(clip),
            ClipOutcome::Skipped(path, reason) => {
                tracing::warn!(path = %path.display(), %reason, "skipping clip");
                skipped.push((path, reason));
            }
        }
    }
    if clips.is_empty() {
        return Err(IngestError::NoUsableClips {
            skipped: skipped.len(),
        });
    }
    Ok(BuildOutcome {
        buckets: partition_into_buckets(clips),
        skipped,
    })
}

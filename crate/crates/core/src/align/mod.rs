//! Pronunciation feedback: character-level global alignment of a reference
//! transcript against a recognizer hypothesis, and the unmatched stretches of
//! the reference that come out of it.

use serde::{Deserialize, Serialize};

use crate::cas::{BlockStore, CasError, Cid};
use crate::datamodel::{decode, DecodeError, LanguageMeta, ModelInfo};

/// Gap marker in aligned strings and rendered rows.
pub const GAP: char = '·';
/// Longest input, in characters, accepted on either side.
pub const MAX_CHARS: usize = 2000;

pub const MATCH: i32 = 1;
pub const MISMATCH: i32 = -1;
pub const GAP_PENALTY: i32 = -1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{side} has {len} characters, limit is {MAX_CHARS}")]
pub struct InputTooLong {
    pub side: &'static str,
    pub len: usize,
}

/// Case-insensitive character equality.
pub fn chars_match(a: char, b: char) -> bool {
    a == b || a.to_lowercase().eq(b.to_lowercase())
}

fn pair_score(a: char, b: char) -> i32 {
    if chars_match(a, b) {
        MATCH
    } else {
        MISMATCH
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub aligned_ref: String,
    pub aligned_hyp: String,
    pub score: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Match(char, char),
    Mismatch(char, char),
    /// Reference character with nothing opposite it in the hypothesis.
    HypGap(char),
    /// Hypothesis character with nothing opposite it in the reference.
    RefGap(char),
}

impl Alignment {
    pub fn columns(&self) -> Vec<Column> {
        self.aligned_ref
            .chars()
            .zip(self.aligned_hyp.chars())
            .map(|(r, h)| match (r, h) {
                (GAP, h) => Column::RefGap(h),
                (r, GAP) => Column::HypGap(r),
                (r, h) if chars_match(r, h) => Column::Match(r, h),
                (r, h) => Column::Mismatch(r, h),
            })
            .collect()
    }

    /// The reference as the learner sees it: one character per reference
    /// position, with [`GAP`] wherever the hypothesis did not reproduce it.
    pub fn reference_row(&self) -> String {
        self.columns()
            .into_iter()
            .filter_map(|c| match c {
                Column::Match(r, _) => Some(r),
                Column::Mismatch(..) | Column::HypGap(_) => Some(GAP),
                Column::RefGap(_) => None,
            })
            .collect()
    }
}

/// Global alignment with match +1, mismatch −1, gap −1. Ties in the traceback
/// go diagonal, then gap in the hypothesis, then gap in the reference.
pub fn needleman_wunsch(reference: &str, hypothesis: &str) -> Result<Alignment, InputTooLong> {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    for (side, len) in [("reference", r.len()), ("hypothesis", h.len())] {
        if len > MAX_CHARS {
            return Err(InputTooLong { side, len });
        }
    }
    let (n, m) = (r.len(), h.len());
    let width = m + 1;
    let mut table = vec![0i32; (n + 1) * width];
    for i in 0..=n {
        table[i * width] = i as i32 * GAP_PENALTY;
    }
    for (j, cell) in table.iter_mut().take(width).enumerate() {
        *cell = j as i32 * GAP_PENALTY;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = table[(i - 1) * width + j - 1] + pair_score(r[i - 1], h[j - 1]);
            let up = table[(i - 1) * width + j] + GAP_PENALTY;
            let left = table[i * width + j - 1] + GAP_PENALTY;
            table[i * width + j] = diag.max(up).max(left);
        }
    }

    let mut aligned_ref = Vec::with_capacity(n + m);
    let mut aligned_hyp = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = table[i * width + j];
        if i > 0 && j > 0 && here == table[(i - 1) * width + j - 1] + pair_score(r[i - 1], h[j - 1]) {
            aligned_ref.push(r[i - 1]);
            aligned_hyp.push(h[j - 1]);
            i -= 1;
            j -= 1;
        } else if i > 0 && here == table[(i - 1) * width + j] + GAP_PENALTY {
            aligned_ref.push(r[i - 1]);
            aligned_hyp.push(GAP);
            i -= 1;
        } else {
            aligned_ref.push(GAP);
            aligned_hyp.push(h[j - 1]);
            j -= 1;
        }
    }
    Ok(Alignment {
        aligned_ref: aligned_ref.into_iter().rev().collect(),
        aligned_hyp: aligned_hyp.into_iter().rev().collect(),
        score: table[n * width + m],
    })
}

/// The three-row text layout: transcript, hypothesis, rendered reference.
pub fn render_table(reference: &str, hypothesis: &str, alignment: &Alignment) -> String {
    format!(
        "Tr:   {reference}\nHyp:  {hypothesis}\nAlig: {}\n",
        alignment.reference_row()
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSegment {
    /// Character offset into the reference.
    pub start: usize,
    pub text: String,
    pub gap_len: usize,
    /// `gap_len` relative to the longest segment in the sentence.
    pub intensity: f64,
}

/// Maximal runs of reference characters the hypothesis did not reproduce,
/// whether dropped or substituted.
pub fn segments(alignment: &Alignment) -> Vec<FeedbackSegment> {
    let mut runs: Vec<(usize, String)> = Vec::new();
    let mut open = false;
    let mut pos = 0;
    for column in alignment.columns() {
        match column {
            Column::RefGap(_) => continue,
            Column::Match(..) => open = false,
            Column::Mismatch(r, _) | Column::HypGap(r) => {
                if !open {
                    runs.push((pos, String::new()));
                    open = true;
                }
                runs.last_mut().expect("run opened").1.push(r);
            }
        }
        pos += 1;
    }
    let longest = runs.iter().map(|(_, t)| t.chars().count()).max().unwrap_or(0);
    runs.into_iter()
        .map(|(start, text)| {
            let gap_len = text.chars().count();
            FeedbackSegment {
                start,
                text,
                gap_len,
                intensity: gap_len as f64 / longest as f64,
            }
        })
        .collect()
}

pub fn feedback(reference: &str, hypothesis: &str) -> Result<Vec<FeedbackSegment>, InputTooLong> {
    Ok(segments(&needleman_wunsch(reference, hypothesis)?))
}

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("no recognizer for language {0}")]
    UnsupportedLanguage(String),
    #[error("{0}")]
    Failed(String),
}

/// Source of hypothesis transcripts for recorded audio.
pub trait HypothesisProvider: Send + Sync {
    fn provide(&self, audio: &[u8], language: &str) -> Result<String, ProviderError>;
}

/// Returns a hypothesis typed in by the caller.
#[derive(Debug, Clone)]
pub struct ManualProvider {
    pub hypothesis: String,
}

impl HypothesisProvider for ManualProvider {
    fn provide(&self, _audio: &[u8], _language: &str) -> Result<String, ProviderError> {
        Ok(self.hypothesis.clone())
    }
}

/// Hears exactly the reference, whatever the audio.
#[derive(Debug, Clone)]
pub struct IdentityProvider {
    pub reference: String,
}

impl HypothesisProvider for IdentityProvider {
    fn provide(&self, _audio: &[u8], _language: &str) -> Result<String, ProviderError> {
        Ok(self.reference.clone())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FeedbackError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    TooLong(#[from] InputTooLong),
}

pub fn feedback_for_recording(
    provider: &dyn HypothesisProvider,
    audio: &[u8],
    language: &str,
    reference: &str,
) -> Result<Vec<FeedbackSegment>, FeedbackError> {
    let hypothesis = provider.provide(audio, language)?;
    Ok(feedback(reference, &hypothesis)?)
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Store(#[from] CasError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Fetches every model listed in a language's metadata, with its blob. The
/// blobs are only retrieved; nothing runs them.
pub fn fetch_models(
    store: &dyn BlockStore,
    meta: &LanguageMeta,
) -> Result<Vec<(Cid, ModelInfo, Vec<u8>)>, ModelError> {
    let mut out = Vec::new();
    for cid in meta.models.iter().flatten() {
        let info: ModelInfo = decode(&store.get(cid)?)?;
        let blob = store.get(&info.model)?;
        out.push((cid.clone(), info, blob));
    }
    Ok(out)
}

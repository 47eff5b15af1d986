//! Gap-fill listening game: groups of five clips form a level, one word per
//! sentence is blanked, and a level is passed by answering faster than the
//! audio plays.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cas::{BlockStore, CasError, Cid};
use crate::datamodel::canonical::round_decimal;
use crate::datamodel::{
    decode, ClipEntry, DecodeError, LanguageIndex, LanguageMeta, RootIndex, SentenceMeta, Tag,
};

pub const GROUP_SIZE: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum GameError {
    #[error("language {0} is not in the catalogue")]
    UnknownLanguage(String),
    #[error("bucket {bucket} out of range, language has {available}")]
    NoSuchBucket { bucket: usize, available: usize },
    #[error("bucket has {available} usable clips, a level needs {needed}")]
    Shortfall { available: usize, needed: usize },
    #[error("sentence {0} has no word to gap")]
    Unusable(Cid),
    #[error("clip {0} is not in the current group")]
    NotInGroup(Cid),
    #[error("clip {0} was already answered")]
    AlreadyAnswered(Cid),
    #[error("no clips left in this bucket")]
    Exhausted,
    #[error("elapsed time must be a finite non-negative number, got {0}")]
    BadElapsed(f64),
    #[error(transparent)]
    Store(#[from] CasError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("profile: {0}")]
    Profile(String),
    #[error("profile I/O: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Task {
    pub clip: ClipEntry,
    pub tokens: Vec<String>,
    pub tags: Vec<Tag>,
    pub gap_index: usize,
    #[serde(skip)]
    pub audio: Vec<u8>,
}

impl Task {
    pub fn target(&self) -> &str {
        &self.tokens[self.gap_index]
    }

    /// The sentence with the gapped token replaced by `blank`.
    pub fn prompt(&self, blank: &str) -> String {
        let shown: Vec<&str> = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| if i == self.gap_index { blank } else { t.as_str() })
            .collect();
        shown.join(" ")
    }
}

/// Builds a task with the gap on one of the `X` tokens, chosen uniformly.
pub fn make_task(
    clip: ClipEntry,
    meta: &SentenceMeta,
    audio: Vec<u8>,
    seed: u64,
) -> Result<Task, GameError> {
    let words: Vec<usize> = meta
        .tags
        .iter()
        .enumerate()
        .filter(|(_, t)| **t == Tag::X)
        .map(|(i, _)| i)
        .collect();
    if words.is_empty() || meta.tokens.len() != meta.tags.len() {
        return Err(GameError::Unusable(clip.sentence_cid));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gap_index = words[rng.gen_range(0..words.len())];
    Ok(Task {
        clip,
        tokens: meta.tokens.clone(),
        tags: meta.tags.clone(),
        gap_index,
        audio,
    })
}

fn normalize(text: &str, alternatives: &BTreeMap<char, Vec<String>>) -> String {
    let substitute = |s: &str| -> String {
        s.chars()
            .map(|c| match alternatives.get(&c).and_then(|alts| alts.first()) {
                Some(alt) => alt.clone(),
                None => c.to_string(),
            })
            .collect()
    };
    substitute(&substitute(text.trim()).to_lowercase())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnswerCheck {
    pub correct: bool,
    pub expected: String,
}

/// Compares after lowercasing and replacing each character that has
/// alternatives with the first one listed.
pub fn check_answer(task: &Task, answer: &str, meta: &LanguageMeta) -> AnswerCheck {
    let expected = task.target().to_owned();
    AnswerCheck {
        correct: normalize(answer, &meta.alternatives) == normalize(&expected, &meta.alternatives),
        expected,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Answered {
    pub elapsed: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Slot {
    pub task: Task,
    pub result: Option<Answered>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelResult {
    pub level: u32,
    pub passed: bool,
    pub total_length: f64,
    pub total_elapsed: f64,
    pub score_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmitOutcome {
    pub check: AnswerCheck,
    /// Set when this answer completed the group.
    pub level: Option<LevelResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplayState {
    #[serde(rename = "L")]
    pub level: u32,
    #[serde(rename = "S")]
    pub score: f64,
    #[serde(rename = "R")]
    pub remaining: usize,
}

/// Persisted progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub language: String,
    pub level: u32,
    pub score: f64,
    pub deactivated: BTreeSet<Cid>,
    pub seed: u64,
}

impl Profile {
    pub fn load(path: &Path) -> Result<Self, GameError> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| GameError::Profile(e.to_string()))
    }

    /// Writes to a sibling temporary file, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<(), GameError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(self).expect("serializable"))?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}

pub struct GameSession {
    store: Arc<dyn BlockStore>,
    pub language: String,
    pub bucket: usize,
    pub level: u32,
    pub score: f64,
    meta: LanguageMeta,
    pool: Vec<ClipEntry>,
    group: Vec<Slot>,
    pub deactivated: BTreeSet<Cid>,
    unusable: HashSet<Cid>,
    rng: ChaCha8Rng,
}

impl std::fmt::Debug for GameSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GameSession")
            .field("language", &self.language)
            .field("bucket", &self.bucket)
            .field("level", &self.level)
            .field("score", &self.score)
            .field("group", &self.group.len())
            .finish_non_exhaustive()
    }
}

impl GameSession {
    /// Starts at level 1 with an empty profile.
    pub fn new(
        store: Arc<dyn BlockStore>,
        root_cid: &Cid,
        language: &str,
        bucket: usize,
        seed: u64,
    ) -> Result<Self, GameError> {
        let profile = Profile {
            language: language.to_owned(),
            level: 1,
            score: 0.0,
            deactivated: BTreeSet::new(),
            seed,
        };
        Self::resume(store, root_cid, &profile, bucket)
    }

    /// Continues from a saved profile.
    pub fn resume(
        store: Arc<dyn BlockStore>,
        root_cid: &Cid,
        profile: &Profile,
        bucket: usize,
    ) -> Result<Self, GameError> {
        let root: RootIndex = decode(&store.get(root_cid)?)?;
        let entry = root
            .get(&profile.language)
            .ok_or_else(|| GameError::UnknownLanguage(profile.language.clone()))?;
        let bucket_cid = entry.cids.get(bucket).ok_or(GameError::NoSuchBucket {
            bucket,
            available: entry.cids.len(),
        })?;
        let index: LanguageIndex = decode(&store.get(bucket_cid)?)?;
        let meta: LanguageMeta = decode(&store.get(&entry.meta)?)?;
        let mut session = Self {
            store,
            language: profile.language.clone(),
            bucket,
            level: profile.level.max(1),
            score: profile.score,
            meta,
            pool: index.clips,
            group: Vec::new(),
            deactivated: profile.deactivated.clone(),
            unusable: HashSet::new(),
            rng: ChaCha8Rng::seed_from_u64(profile.seed),
        };
        session.group = session.draw(GROUP_SIZE, &HashSet::new())?;
        if session.group.len() < GROUP_SIZE {
            return Err(GameError::Shortfall {
                available: session.group.len(),
                needed: GROUP_SIZE,
            });
        }
        Ok(session)
    }

    pub fn language_meta(&self) -> &LanguageMeta {
        &self.meta
    }

    /// The group in presentation order.
    pub fn group(&self) -> &[Slot] {
        &self.group
    }

    /// The next unanswered task.
    pub fn current(&self) -> Option<&Task> {
        self.group.iter().find(|s| s.result.is_none()).map(|s| &s.task)
    }

    pub fn display_state(&self) -> DisplayState {
        DisplayState {
            level: self.level,
            score: self.score,
            remaining: self.group.iter().filter(|s| s.result.is_none()).count(),
        }
    }

    pub fn profile(&self) -> Profile {
        Profile {
            language: self.language.clone(),
            level: self.level,
            score: self.score,
            deactivated: self.deactivated.clone(),
            seed: self.rng.clone().next_u64(),
        }
    }

    fn load_task(&mut self, clip: &ClipEntry) -> Result<Task, GameError> {
        let meta: SentenceMeta = decode(&self.store.get(&clip.meta_cid)?)?;
        let audio = self.store.get(&clip.clip_cid)?;
        make_task(clip.clone(), &meta, audio, self.rng.next_u64())
    }

    /// Up to `count` fresh tasks from active clips not in `exclude`.
    fn draw(&mut self, count: usize, exclude: &HashSet<Cid>) -> Result<Vec<Slot>, GameError> {
        let candidates: Vec<ClipEntry> = self
            .pool
            .iter()
            .filter(|c| {
                !self.deactivated.contains(&c.clip_cid)
                    && !self.unusable.contains(&c.clip_cid)
                    && !exclude.contains(&c.clip_cid)
            })
            .cloned()
            .collect();
        let order = sample(&mut self.rng, candidates.len(), candidates.len());
        let mut slots = Vec::with_capacity(count);
        for i in order {
            if slots.len() == count {
                break;
            }
            match self.load_task(&candidates[i]) {
                Ok(task) => slots.push(Slot { task, result: None }),
                Err(GameError::Unusable(_)) => {
                    self.unusable.insert(candidates[i].clip_cid.clone());
                }
                Err(e) => return Err(e),
            }
        }
        Ok(slots)
    }

    fn position(&self, clip: &Cid) -> Result<usize, GameError> {
        self.group
            .iter()
            .position(|s| &s.task.clip.clip_cid == clip)
            .ok_or_else(|| GameError::NotInGroup(clip.clone()))
    }

    fn unanswered_position(&self, clip: &Cid) -> Result<usize, GameError> {
        let i = self.position(clip)?;
        match self.group[i].result {
            Some(_) => Err(GameError::AlreadyAnswered(clip.clone())),
            None => Ok(i),
        }
    }

    /// Records an answer. Once the whole group is answered the level is
    /// decided on total time: passed iff answering took strictly less time
    /// than the audio lasts, in which case the difference is added to the
    /// score and a new group is drawn. A failed level replays the same clips
    /// with new gaps.
    pub fn submit(&mut self, clip: &Cid, answer: &str, elapsed: f64) -> Result<SubmitOutcome, GameError> {
        if !(elapsed.is_finite() && elapsed >= 0.0) {
            return Err(GameError::BadElapsed(elapsed));
        }
        let i = self.unanswered_position(clip)?;
        let check = check_answer(&self.group[i].task, answer, &self.meta);
        self.group[i].result = Some(Answered {
            elapsed,
            correct: check.correct,
        });
        let level = if self.group.iter().all(|s| s.result.is_some()) {
            Some(self.finish_level()?)
        } else {
            None
        };
        Ok(SubmitOutcome { check, level })
    }

    fn finish_level(&mut self) -> Result<LevelResult, GameError> {
        let total_length = round_decimal(self.group.iter().map(|s| s.task.clip.length).sum());
        let total_elapsed = round_decimal(
            self.group
                .iter()
                .filter_map(|s| s.result.map(|r| r.elapsed))
                .sum(),
        );
        let passed = total_elapsed < total_length;
        let score_delta = if passed {
            round_decimal(total_length - total_elapsed)
        } else {
            0.0
        };
        let result = LevelResult {
            level: self.level,
            passed,
            total_length,
            total_elapsed,
            score_delta,
        };
        if passed {
            self.score = round_decimal(self.score + score_delta);
            self.level += 1;
            self.group = self.draw(GROUP_SIZE, &HashSet::new())?;
        } else {
            let clips: Vec<ClipEntry> = self.group.iter().map(|s| s.task.clip.clone()).collect();
            let mut group = Vec::with_capacity(clips.len());
            for clip in &clips {
                group.push(Slot {
                    task: self.load_task(clip)?,
                    result: None,
                });
            }
            self.group = group;
        }
        if self.group.is_empty() {
            return Err(GameError::Exhausted);
        }
        Ok(result)
    }

    /// Deactivates a clip for good and puts a fresh clip from the same bucket
    /// in its place. With the bucket exhausted the group just gets smaller.
    pub fn discard(&mut self, clip: &Cid) -> Result<Option<&Task>, GameError> {
        let i = self.unanswered_position(clip)?;
        self.deactivated.insert(clip.clone());
        let in_group: HashSet<Cid> = self.group.iter().map(|s| s.task.clip.clip_cid.clone()).collect();
        match self.draw(1, &in_group)?.pop() {
            Some(slot) => self.group[i] = slot,
            None => {
                self.group.remove(i);
                if self.group.is_empty() {
                    return Err(GameError::Exhausted);
                }
                if self.group.iter().all(|s| s.result.is_some()) {
                    self.finish_level()?;
                }
            }
        }
        Ok(self.current())
    }

    /// Moves a task to the end of the presentation order.
    pub fn skip(&mut self, clip: &Cid) -> Result<Option<&Task>, GameError> {
        let i = self.unanswered_position(clip)?;
        let slot = self.group.remove(i);
        self.group.push(slot);
        Ok(self.current())
    }
}

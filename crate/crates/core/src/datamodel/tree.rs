use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::{
    decode, encode, is_language_code, ClipEntry, DecodeError, IndexObject, LanguageIndex,
    LanguageMeta, ModelInfo, RootIndex, Sentence, SentenceMeta,
};
use crate::cas::{BlockStore, CasError, Cid};

/// Objects built in memory but not yet written to a store, keyed by CID.
#[derive(Debug, Default, Clone)]
pub struct Staging {
    blocks: HashMap<Cid, Vec<u8>>,
}

impl Staging {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_raw(&mut self, bytes: Vec<u8>) -> Cid {
        let cid = Cid::for_content(&bytes);
        self.blocks.entry(cid.clone()).or_insert(bytes);
        cid
    }

    pub fn add<T: IndexObject>(&mut self, value: &T) -> Cid {
        self.add_raw(encode(value))
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TreeError {
    #[error(transparent)]
    Store(#[from] CasError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("{0} is neither staged nor stored")]
    Missing(Cid),
}

struct Writer<'a> {
    store: &'a dyn BlockStore,
    staged: &'a Staging,
    done: HashSet<Cid>,
}

impl Writer<'_> {
    /// Bytes of `cid`, from staging or the store.
    fn bytes(&self, cid: &Cid) -> Result<Vec<u8>, TreeError> {
        if let Some(bytes) = self.staged.blocks.get(cid) {
            return Ok(bytes.clone());
        }
        match self.store.get(cid) {
            Ok(bytes) => Ok(bytes),
            Err(CasError::NotFound(_)) => Err(TreeError::Missing(cid.clone())),
            Err(e) => Err(e.into()),
        }
    }

    fn flush(&mut self, cid: &Cid) -> Result<(), TreeError> {
        if self.done.contains(cid) {
            return Ok(());
        }
        match self.staged.blocks.get(cid) {
            Some(bytes) => {
                self.store.put(bytes)?;
            }
            None if self.store.contains(cid)? => {}
            None => return Err(TreeError::Missing(cid.clone())),
        }
        self.done.insert(cid.clone());
        Ok(())
    }

    fn flush_clip(&mut self, clip: &ClipEntry) -> Result<(), TreeError> {
        self.flush(&clip.clip_cid)?;
        self.flush(&clip.sentence_cid)?;
        self.flush(&clip.meta_cid)
    }
}

/// Writes `root` and everything it references, leaves first, so that any
/// object visible in the store has all of its children present.
pub fn store_tree(
    store: &dyn BlockStore,
    root: &RootIndex,
    staged: &Staging,
) -> Result<Cid, TreeError> {
    let mut writer = Writer {
        store,
        staged,
        done: HashSet::new(),
    };
    for entry in root.entries.values() {
        for bucket in &entry.cids {
            if !writer.done.contains(bucket) {
                let index: LanguageIndex = decode(&writer.bytes(bucket)?)?;
                for clip in &index.clips {
                    writer.flush_clip(clip)?;
                }
            }
            writer.flush(bucket)?;
        }
        if !writer.done.contains(&entry.meta) {
            let meta: LanguageMeta = decode(&writer.bytes(&entry.meta)?)?;
            for model_cid in meta.models.iter().flatten() {
                let info: ModelInfo = decode(&writer.bytes(model_cid)?)?;
                writer.flush(&info.model)?;
                writer.flush(model_cid)?;
            }
        }
        writer.flush(&entry.meta)?;
    }
    Ok(store.put(&encode(root))?)
}

/// One problem found while walking a tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Issue {
    /// A referenced CID is not available.
    Unresolvable { cid: Cid, referenced_from: String },
    /// An object failed to decode or broke a type invariant.
    Invalid { cid: Cid, detail: String },
    /// Objects decode individually but disagree with each other.
    Inconsistent { cid: Cid, detail: String },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::Unresolvable {
                cid,
                referenced_from,
            } => write!(f, "unresolvable {cid} (from {referenced_from})"),
            Issue::Invalid { cid, detail } => write!(f, "invalid {cid}: {detail}"),
            Issue::Inconsistent { cid, detail } => write!(f, "inconsistent {cid}: {detail}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
    /// Number of distinct objects visited.
    pub objects: usize,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

struct Walker<'a> {
    store: &'a dyn BlockStore,
    report: ValidationReport,
    seen: HashSet<Cid>,
}

impl Walker<'_> {
    fn fetch(&mut self, cid: &Cid, from: &str) -> Option<Vec<u8>> {
        match self.store.get(cid) {
            Ok(bytes) => Some(bytes),
            Err(CasError::NotFound(_)) => {
                self.report.issues.push(Issue::Unresolvable {
                    cid: cid.clone(),
                    referenced_from: from.to_owned(),
                });
                None
            }
            Err(e) => {
                self.report.issues.push(Issue::Invalid {
                    cid: cid.clone(),
                    detail: e.to_string(),
                });
                None
            }
        }
    }

    fn load<T: IndexObject>(&mut self, cid: &Cid, from: &str) -> Option<T> {
        let bytes = self.fetch(cid, from)?;
        match decode::<T>(&bytes) {
            Ok(value) => Some(value),
            Err(e) => {
                self.report.issues.push(Issue::Invalid {
                    cid: cid.clone(),
                    detail: e.to_string(),
                });
                None
            }
        }
    }

    fn first_visit(&mut self, cid: &Cid) -> bool {
        let fresh = self.seen.insert(cid.clone());
        if fresh {
            self.report.objects += 1;
        }
        fresh
    }

    fn inconsistent(&mut self, cid: &Cid, detail: String) {
        self.report.issues.push(Issue::Inconsistent {
            cid: cid.clone(),
            detail,
        });
    }

    fn language(&mut self, code: &str, buckets: &[Cid], meta_cid: &Cid) {
        if self.first_visit(meta_cid) {
            if let Some(meta) = self.load::<LanguageMeta>(meta_cid, &format!("{code}.meta")) {
                for model_cid in meta.models.iter().flatten() {
                    if !self.first_visit(model_cid) {
                        continue;
                    }
                    if let Some(info) = self.load::<ModelInfo>(model_cid, &format!("{code}.models")) {
                        if self.first_visit(&info.model) {
                            self.blob(&info.model, &format!("model {model_cid}"));
                        }
                    }
                }
            }
        }
        for (i, bucket) in buckets.iter().enumerate() {
            if !self.first_visit(bucket) {
                continue;
            }
            let from = format!("{code}.cids[{i}]");
            if let Some(index) = self.load::<LanguageIndex>(bucket, &from) {
                for clip in &index.clips {
                    self.clip(code, bucket, clip);
                }
            }
        }
    }

    fn blob(&mut self, cid: &Cid, from: &str) {
        match self.store.contains(cid) {
            Ok(true) => {}
            Ok(false) => self.report.issues.push(Issue::Unresolvable {
                cid: cid.clone(),
                referenced_from: from.to_owned(),
            }),
            Err(e) => self.report.issues.push(Issue::Invalid {
                cid: cid.clone(),
                detail: e.to_string(),
            }),
        }
    }

    fn clip(&mut self, code: &str, bucket: &Cid, clip: &ClipEntry) {
        let from = format!("clip in {bucket}");
        if self.first_visit(&clip.clip_cid) {
            self.blob(&clip.clip_cid, &from);
        }
        let sentence = self.load::<Sentence>(&clip.sentence_cid, &from);
        self.first_visit(&clip.sentence_cid);
        let meta = self.load::<SentenceMeta>(&clip.meta_cid, &from);
        self.first_visit(&clip.meta_cid);

        if let Some(sentence) = &sentence {
            if !clip.consistent_with(sentence) {
                self.inconsistent(
                    &clip.clip_cid,
                    format!(
                        "chars_sec {} × length {} disagrees with {} characters",
                        clip.chars_sec,
                        clip.length,
                        sentence.content.chars().count()
                    ),
                );
            }
            if sentence.language != code {
                self.inconsistent(
                    &clip.sentence_cid,
                    format!("sentence language {} listed under {code}", sentence.language),
                );
            }
        }
        if let Some(meta) = &meta {
            if meta.sentence_cid != clip.sentence_cid {
                self.inconsistent(
                    &clip.meta_cid,
                    format!(
                        "metadata describes {} but clip references {}",
                        meta.sentence_cid, clip.sentence_cid
                    ),
                );
            }
            if let Some(sentence) = &sentence {
                if !meta.matches_content(&sentence.content) {
                    self.inconsistent(
                        &clip.meta_cid,
                        "tokens do not reproduce the sentence".to_owned(),
                    );
                }
            }
        }
    }
}

/// Walks the tree under `root_cid` and reports every problem found. Never fails:
/// an unreadable root is itself a report entry.
pub fn validate_tree(store: &dyn BlockStore, root_cid: &Cid) -> ValidationReport {
    let mut walker = Walker {
        store,
        report: ValidationReport::default(),
        seen: HashSet::new(),
    };
    walker.first_visit(root_cid);
    // decode loosely first so that a single bad language code does not hide
    // problems further down
    let Some(bytes) = walker.fetch(root_cid, "root") else {
        return walker.report;
    };
    match serde_json::from_slice::<RootIndex>(&bytes) {
        Ok(root) => {
            for (code, entry) in &root.entries {
                if !is_language_code(code) {
                    walker.report.issues.push(Issue::Invalid {
                        cid: root_cid.clone(),
                        detail: format!("{code:?} is not an ISO-639 language code"),
                    });
                }
                if entry.cids.is_empty() {
                    walker.report.issues.push(Issue::Invalid {
                        cid: root_cid.clone(),
                        detail: format!("language {code} lists no language indices"),
                    });
                }
                walker.language(code, &entry.cids, &entry.meta);
            }
        }
        Err(e) => walker.report.issues.push(Issue::Invalid {
            cid: root_cid.clone(),
            detail: format!("malformed root index: {e}"),
        }),
    }
    walker.report
}

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use omnilingo::align::{feedback, needleman_wunsch, render_table, InputTooLong};
use omnilingo::cas::{BlockStore, CasError, Cid, NameError};
use omnilingo::consent::{
    self, words_for_fingerprint, ConsentError, Contribution, Identity, Keystore, KeyCache, OpenedRoot,
};
use omnilingo::datamodel::{
    decode, encode, merge_roots, validate_tree, DecodeError, LanguageIndex, LanguageMeta, RootIndex,
    Sentence,
};
use omnilingo::game::GameError;
use omnilingo::ingest::{build_buckets, parse_corpus, BuildOptions, IngestError};
use omnilingo_service::{Catalogue, DataDir, DataDirError, Server, ServiceConfig};

use crate::args::{
    CatalogueArgs, Command, ContributeArgs, IngestArgs, InspectArgs, KeysCommand, ServeArgs,
};
use crate::config::{ConfigError, Settings};
use crate::play;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    DataDir(#[from] DataDirError),
    #[error(transparent)]
    Store(#[from] CasError),
    #[error(transparent)]
    Name(#[from] NameError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Consent(#[from] ConsentError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Align(#[from] InputTooLong),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// The request cannot be carried out as asked.
    #[error("{0}")]
    Usage(String),
    #[error("{0} problem(s) found")]
    Invalid(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|source| CliError::File {
        path: path.to_owned(),
        source,
    })
}

fn open_data(settings: &Settings) -> Result<DataDir, CliError> {
    Ok(DataDir::open(&settings.data_dir, settings.gateway.as_deref())?)
}

/// The named identity, or the only one in the keystore.
pub fn pick_identity(keystore: &Keystore, name: Option<&str>) -> Result<Identity, CliError> {
    if let Some(name) = name {
        return Ok(keystore.load(name)?);
    }
    let mut names = keystore.identities()?;
    match names.len() {
        1 => Ok(keystore.load(&names.remove(0))?),
        0 => Err(CliError::Usage(
            "no identities in the keystore; create one with `omnilingo keys new`".into(),
        )),
        n => Err(CliError::Usage(format!("{n} identities in the keystore; choose one with --identity"))),
    }
}

pub fn resolve_catalogue(data: &DataDir, args: &CatalogueArgs) -> Result<Cid, CliError> {
    match (&args.root, &args.name) {
        (Some(root), _) => Ok(root.clone()),
        (None, Some(name)) => Ok(data.registry.resolve(name)?),
        (None, None) => Err(CliError::Usage("give --root or --name".into())),
    }
}

fn load_root(store: &dyn BlockStore, cid: &Cid) -> Result<RootIndex, CliError> {
    Ok(decode(&store.get(cid)?)?)
}

fn print_line(line: impl std::fmt::Display) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}")?;
    out.flush()?;
    Ok(())
}

fn print_json(value: &impl serde::Serialize) -> Result<(), CliError> {
    print_line(serde_json::to_string_pretty(value).expect("serializable"))
}

pub fn run(command: Command, settings: &Settings) -> Result<(), CliError> {
    match command {
        Command::Align {
            reference,
            hypothesis,
            json,
        } => align(&reference, &hypothesis, json),
        Command::Ingest(args) => print_line(ingest(&open_data(settings)?, &args)?),
        Command::Publish { root, identity, force } => {
            let data = open_data(settings)?;
            print_line(publish(&data, &root, identity.as_deref(), force)?)
        }
        Command::Merge { roots } => print_line(merge(&open_data(settings)?, &roots)?),
        Command::Validate { root, json } => validate(&open_data(settings)?, &root, json),
        Command::Inspect(args) => print_json(&inspect(&open_data(settings)?, &args)?),
        Command::Serve(args) => serve(settings, args),
        Command::Keys { command } => keys(&open_data(settings)?, command),
        Command::Contribute(args) => print_line(contribute(&open_data(settings)?, args)?),
        Command::Revoke { identity, fpr } => {
            let data = open_data(settings)?;
            let mut identity = pick_identity(&data.keystore, identity.as_deref())?;
            let root = consent::revoke(&mut identity, &fpr, data.store.as_ref(), &data.registry)?;
            print_line(root)
        }
        Command::Play(args) => {
            let data = open_data(settings)?;
            let root = resolve_catalogue(&data, &args.catalogue)?;
            let stdin = std::io::stdin();
            play::run(&data, &root, &args, stdin.lock(), std::io::stdout().lock())
        }
    }
}

fn align(reference: &str, hypothesis: &str, json: bool) -> Result<(), CliError> {
    let alignment = needleman_wunsch(reference, hypothesis)?;
    let segments = feedback(reference, hypothesis)?;
    if json {
        return print_json(&json!({
            "aligned_ref": alignment.aligned_ref,
            "aligned_hyp": alignment.aligned_hyp,
            "reference_row": alignment.reference_row(),
            "score": alignment.score,
            "segments": segments,
        }));
    }
    print!("{}", render_table(reference, hypothesis, &alignment));
    eprintln!("score {}", alignment.score);
    for s in &segments {
        eprintln!("  {:>4} {:?} gap {} intensity {:.4}", s.start, s.text, s.gap_len, s.intensity);
    }
    Ok(())
}

/// Builds every language present in the TSV and returns the new root Cid.
pub fn ingest(data: &DataDir, args: &IngestArgs) -> Result<Cid, CliError> {
    let tsv = std::fs::File::open(&args.tsv).map_err(|source| CliError::File {
        path: args.tsv.clone(),
        source,
    })?;
    let parsed = parse_corpus(tsv, &args.clips, &args.lang)?;
    if parsed.skipped() > 0 {
        eprintln!(
            "skipped {} rows: {} empty sentence, {} missing clip, {} malformed",
            parsed.skipped(),
            parsed.skipped_empty,
            parsed.skipped_missing_clip,
            parsed.skipped_malformed
        );
    }
    let mut by_language: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for row in parsed.rows {
        by_language.entry(row.language.clone()).or_default().push(row);
    }
    if by_language.is_empty() {
        return Err(IngestError::NoUsableClips {
            skipped: parsed.skipped_empty + parsed.skipped_missing_clip + parsed.skipped_malformed,
        }
        .into());
    }

    let store = data.store.as_ref();
    let mut root = match &args.into {
        Some(cid) => load_root(store, cid)?,
        None => RootIndex::new(),
    };
    let options = BuildOptions {
        cap: args.cap,
        seed: args.seed,
        copyright: args.copyright.clone(),
    };
    for (language, rows) in by_language {
        let outcome = build_buckets(&rows, store, &options)?;
        for (path, reason) in &outcome.skipped {
            eprintln!("skipped {}: {reason}", path.display());
        }
        let display = match &args.display {
            Some(name) if language == args.lang => name.clone(),
            _ => language.clone(),
        };
        let entry = outcome.buckets.store(store, &LanguageMeta::new(display))?;
        eprintln!(
            "{language}: {} clips in {} buckets",
            outcome.buckets.clip_count(),
            entry.cids.len()
        );
        root.entries.insert(language, entry);
    }
    Ok(store.put(&encode(&root))?)
}

/// Publishes `root` under the identity's name and returns the name.
pub fn publish(data: &DataDir, root: &Cid, identity: Option<&str>, force: bool) -> Result<String, CliError> {
    let report = validate_tree(data.store.as_ref(), root);
    if !report.is_ok() {
        for issue in &report.issues {
            eprintln!("{issue}");
        }
        if !force {
            return Err(CliError::Invalid(report.issues.len()));
        }
    }
    let identity = pick_identity(&data.keystore, identity)?;
    let record = data.registry.publish(identity.name_key(), root)?;
    eprintln!("published {} at sequence {}", record.target, record.sequence);
    Ok(record.name)
}

pub fn merge(data: &DataDir, roots: &[Cid]) -> Result<Cid, CliError> {
    let store = data.store.as_ref();
    let mut merged = load_root(store, &roots[0])?;
    for cid in &roots[1..] {
        merged = merge_roots(&merged, &load_root(store, cid)?);
    }
    Ok(store.put(&encode(&merged))?)
}

fn validate(data: &DataDir, root: &Cid, json: bool) -> Result<(), CliError> {
    let report = validate_tree(data.store.as_ref(), root);
    if json {
        print_json(&report)?;
    }
    for issue in &report.issues {
        eprintln!("{issue}");
    }
    eprintln!("{} objects checked", report.objects);
    if report.is_ok() {
        Ok(())
    } else {
        Err(CliError::Invalid(report.issues.len()))
    }
}

/// A summary of a catalogue, or the sessions behind an encrypted root.
pub fn inspect(data: &DataDir, args: &InspectArgs) -> Result<Value, CliError> {
    let store = data.store.as_ref();
    let cid = match (&args.root, &args.identity) {
        (Some(cid), _) => cid.clone(),
        (None, Some(name)) => data.registry.resolve(name)?,
        (None, None) => return Err(CliError::Usage("give --root or --identity".into())),
    };
    match consent::open_root(store, &cid, &KeyCache::new())? {
        OpenedRoot::Classic(root) => {
            let mut languages = serde_json::Map::new();
            for (code, entry) in &root.entries {
                let meta: LanguageMeta = decode(&store.get(&entry.meta)?)?;
                let mut buckets = Vec::new();
                let mut total = 0;
                for bucket in &entry.cids {
                    let index: LanguageIndex = decode(&store.get(bucket)?)?;
                    total += index.clips.len();
                    buckets.push(json!({"cid": bucket, "clips": index.clips.len()}));
                }
                languages.insert(
                    code.clone(),
                    json!({"display": meta.display, "buckets": buckets, "clips": total}),
                );
            }
            Ok(json!({"root": cid, "kind": "classic", "languages": languages}))
        }
        OpenedRoot::Encrypted(sessions) => {
            let sessions: Vec<Value> = sessions
                .iter()
                .map(|s| {
                    let mut v = serde_json::to_value(s).expect("serializable");
                    v["clip_count"] = json!(s.clip_count());
                    v
                })
                .collect();
            Ok(json!({"root": cid, "kind": "encrypted", "sessions": sessions}))
        }
    }
}

fn serve(settings: &Settings, args: ServeArgs) -> Result<(), CliError> {
    let data = open_data(settings)?;
    let catalogue = match (args.catalogue.root, args.catalogue.name) {
        (Some(root), _) => Catalogue::Root(root),
        (None, Some(name)) => Catalogue::Name(name),
        (None, None) => return Err(CliError::Usage("give --root or --name".into())),
    };
    let config = ServiceConfig {
        listen: args.listen,
        data_dir: settings.data_dir.clone(),
        gateway: settings.gateway.clone(),
        catalogue,
        static_dir: args.static_dir,
        identity: args.identity,
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let server = Server::bind(&config, data).await?;
        print_line(server.local_addr()?)?;
        server.run(omnilingo_service::shutdown_signal()).await?;
        Ok(())
    })
}

fn keys(data: &DataDir, command: KeysCommand) -> Result<(), CliError> {
    match command {
        KeysCommand::New => {
            let identity = data.keystore.create_identity()?;
            print_line(identity.name())
        }
        KeysCommand::Roll { identity } => {
            let mut identity = pick_identity(&data.keystore, identity.as_deref())?;
            let key = identity.roll_key()?;
            eprintln!("{}", key.words().join(" "));
            print_line(key.fingerprint())
        }
        KeysCommand::List { identity } => {
            let names = match identity {
                Some(name) => vec![name],
                None => data.keystore.identities()?,
            };
            for name in names {
                let identity = data.keystore.load(&name)?;
                for fpr in identity.fingerprints() {
                    let words = words_for_fingerprint(&fpr)?.join(" ");
                    let state = if identity.active_fingerprint() == Some(fpr.as_str()) {
                        "active"
                    } else {
                        "inactive"
                    };
                    print_line(format!("{name}\t{fpr}\t{words}\t{state}"))?;
                }
            }
            Ok(())
        }
    }
}

pub fn contribute(data: &DataDir, args: ContributeArgs) -> Result<Cid, CliError> {
    let store = data.store.as_ref();
    let audio = read_file(&args.audio)?;
    let sentence_cid = match (args.sentence_cid, args.sentence) {
        (Some(cid), _) => cid,
        (None, Some(text)) => {
            let language = args.lang.clone().expect("clap requires --lang with --sentence");
            store.put(&encode(&Sentence::new(text, args.copyright.clone(), language)))?
        }
        (None, None) => return Err(CliError::Usage("give --sentence-cid or --sentence".into())),
    };
    let mut identity = pick_identity(&data.keystore, args.identity.as_deref())?;
    let key = match args.fpr {
        Some(fpr) => identity
            .session_key(&fpr)
            .ok_or(ConsentError::MissingKey(fpr))?,
        None => identity.ensure_active_key()?,
    };
    let contribution = Contribution::prepare(store, audio, sentence_cid, args.meta_cid, args.lang)?;
    eprintln!("session {}", key.fingerprint());
    Ok(consent::contribute(&identity, &key, &contribution, store, &data.registry)?)
}

//! Each subcommand against the library call it wraps.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde_json::Value;

use common::{ingest, mp3, ok, omni, omni_with_input, write_corpus};
use omnilingo::align::{needleman_wunsch, render_table};
use omnilingo::cas::{BlockStore, Cid, LocalStore, MemoryStore, NameRegistry};
use omnilingo::consent::{open_identity, Keystore, OpenedRoot, SessionContents};
use omnilingo::datamodel::{decode, encode, merge_roots, LanguageMeta, RootIndex};
use omnilingo::game::GameSession;
use omnilingo::ingest::{build_buckets, parse_corpus, BuildOptions};

fn cid(text: &str) -> Cid {
    text.parse().unwrap()
}

fn store(data: &Path) -> LocalStore {
    LocalStore::open(data.join("blocks")).unwrap()
}

#[test]
fn ingest_is_deterministic_and_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let (tsv, clips) = write_corpus(dir.path(), 30);
    let first = ingest(&dir.path().join("a"), &tsv, &clips, 7);
    let second = ingest(&dir.path().join("b"), &tsv, &clips, 7);
    assert_eq!(first, second);

    let parsed = parse_corpus(std::fs::File::open(&tsv).unwrap(), &clips, "br").unwrap();
    let memory = MemoryStore::new();
    let options = BuildOptions {
        seed: 7,
        ..BuildOptions::default()
    };
    let built = build_buckets(&parsed.rows, &memory, &options).unwrap();
    let entry = built.buckets.store(&memory, &LanguageMeta::new("Brezhoneg")).unwrap();
    let mut root = RootIndex::new();
    root.entries.insert("br".into(), entry);
    assert_eq!(cid(&first), memory.put(&encode(&root)).unwrap());

    // a cap below the corpus size samples by seed
    let capped = |data: &str, seed: &str| {
        ok(
            &dir.path().join(data),
            &["ingest", "--tsv", tsv.to_str().unwrap(), "--clips", clips.to_str().unwrap(), "--lang", "br", "--cap", "12", "--seed", seed],
        )
    };
    assert_eq!(capped("c", "1"), capped("d", "1"));
    assert_ne!(capped("c", "1"), capped("c", "2"));
}

#[test]
fn ingest_reports_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = omni(
        dir.path(),
        &["ingest", "--tsv", "/nonexistent.tsv", "--clips", "/nonexistent", "--lang", "br"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: /nonexistent.tsv"));

    // every clip missing
    let tsv = dir.path().join("t.tsv");
    std::fs::write(&tsv, "path\tsentence\nx.mp3\tDemat\n").unwrap();
    let out = omni(dir.path(), &["ingest", "--tsv", tsv.to_str().unwrap(), "--clips", dir.path().to_str().unwrap(), "--lang", "br"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no usable clips"));
}

#[test]
fn merge_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let (tsv, clips) = write_corpus(dir.path(), 20);
    let a = ingest(&data, &tsv, &clips, 1);
    // a second language under another root
    let b = ok(
        &data,
        &["ingest", "--tsv", tsv.to_str().unwrap(), "--clips", clips.to_str().unwrap(), "--lang", "cy"],
    );

    assert_eq!(ok(&data, &["merge", "--roots", &a, &a]), a);
    let ab = ok(&data, &["merge", "--roots", &a, &b]);
    let ba = ok(&data, &["merge", "--roots", &b, &a]);
    assert_eq!(ab, ba);
    let s = store(&data);
    let load = |c: &str| -> RootIndex { decode(&s.get(&cid(c)).unwrap()).unwrap() };
    assert_eq!(load(&ab), merge_roots(&load(&a), &load(&b)));
    assert_eq!(load(&ab).entries.len(), 2);

    // --into extends an existing root the same way
    let into = ok(
        &data,
        &["ingest", "--tsv", tsv.to_str().unwrap(), "--clips", clips.to_str().unwrap(), "--lang", "cy", "--into", &a],
    );
    assert_eq!(into, ab);

    let out = omni(&data, &["validate", "--root", &ab, "--json"]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["issues"], serde_json::json!([]));

    // lose one bucket
    let bucket = load(&ab).entries["cy"].cids[0].clone();
    std::fs::remove_file(data.join("blocks").join(bucket.as_str())).unwrap();
    let out = omni(&data, &["validate", "--root", &ab]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(bucket.as_str()));
    let out = omni(&data, &["merge", "--roots", &ab, "QmNotAValidCid"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn publish_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let (tsv, clips) = write_corpus(dir.path(), 20);
    let root = ingest(&data, &tsv, &clips, 0);

    let out = omni(&data, &["publish", "--root", &root]);
    assert_eq!(out.status.code(), Some(2), "no identity yet");
    let name = ok(&data, &["keys", "new"]);
    assert!(name.len() == 64 && name.bytes().all(|b| b.is_ascii_hexdigit()));
    assert_eq!(ok(&data, &["publish", "--root", &root]), name);
    let registry = NameRegistry::open(data.join("names.jsonl")).unwrap();
    assert_eq!(registry.resolve(&name).unwrap(), cid(&root));

    let summary: Value = serde_json::from_str(&ok(&data, &["inspect", "--root", &root])).unwrap();
    assert_eq!(summary["kind"], "classic");
    assert_eq!(summary["languages"]["br"]["display"], "Brezhoneg");
    assert_eq!(summary["languages"]["br"]["clips"], 20);
    assert_eq!(summary["languages"]["br"]["buckets"].as_array().unwrap().len(), 10);

    // an incomplete tree is refused unless forced
    let s = store(&data);
    let mut broken: RootIndex = decode(&s.get(&cid(&root)).unwrap()).unwrap();
    broken.entries.get_mut("br").unwrap().cids.push(omnilingo::cas::compute_cid(b"gone"));
    let broken = s.put(&encode(&broken)).unwrap();
    let out = omni(&data, &["publish", "--root", broken.as_str()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(registry.resolve(&name).unwrap(), cid(&root));
    ok(&data, &["publish", "--root", broken.as_str(), "--force"]);
    assert_eq!(registry.resolve(&name).unwrap(), broken);
}

#[test]
fn consent_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let name = ok(&data, &["keys", "new"]);
    let audio = dir.path().join("rec.mp3");
    std::fs::write(&audio, mp3(100)).unwrap();
    let audio = audio.to_str().unwrap();
    let contribute = |text: &str| ok(&data, &["contribute", "--audio", audio, "--sentence", text, "--lang", "br"]);

    contribute("Demat d'an holl");
    contribute("Kenavo");
    let k1 = ok(&data, &["keys", "list"]);
    let fields: Vec<&str> = k1.split('\t').collect();
    assert_eq!(fields[0], name);
    assert_eq!(fields[2].split(' ').count(), 20);
    assert_eq!(fields[3], "active");
    let k1 = fields[1].to_owned();

    let k2 = ok(&data, &["keys", "roll"]);
    assert_ne!(k1, k2);
    let latest = contribute("Trugarez");
    let registry = NameRegistry::open(data.join("names.jsonl")).unwrap();
    assert_eq!(registry.resolve(&name).unwrap(), cid(&latest));
    let listing = ok(&data, &["keys", "list", "--identity", &name]);
    assert_eq!(listing.lines().count(), 2);

    let revoked = ok(&data, &["revoke", "--identity", &name, "--fpr", &k1]);
    assert_eq!(registry.resolve(&name).unwrap(), cid(&revoked));
    let out = omni(&data, &["revoke", "--fpr", &k1]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("revoked"));

    // the CLI view agrees with opening the identity directly
    let view: Value = serde_json::from_str(&ok(&data, &["inspect", "--identity", &name])).unwrap();
    let statuses: BTreeMap<String, (String, Value)> = view["sessions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| {
            (
                s["fingerprint"].as_str().unwrap().to_owned(),
                (s["contents"]["status"].as_str().unwrap().to_owned(), s["clip_count"].clone()),
            )
        })
        .collect();
    assert_eq!(statuses[&k1], ("opaque".to_owned(), Value::Null));
    assert_eq!(statuses[&k2], ("decrypted".to_owned(), serde_json::json!(1)));

    let OpenedRoot::Encrypted(direct) = open_identity(&store(&data), &registry, &name).unwrap() else {
        panic!("expected an encrypted root")
    };
    for session in direct {
        let expected = match session.contents {
            SessionContents::Decrypted { .. } => "decrypted",
            SessionContents::Opaque => "opaque",
            SessionContents::Failed { .. } => "failed",
        };
        assert_eq!(statuses[&session.fingerprint].0, expected);
    }
    let keystore = Keystore::open(data.join("keys")).unwrap();
    assert!(keystore.load(&name).unwrap().session_key(&k1).is_none());
}

#[test]
fn align_prints_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let (r, h) = ("foi classificada para a mostra de talentos", "foi clacificada para mosta letitãntos");
    let out = omni(dir.path(), &["align", "--ref", r, "--hyp", h]);
    assert!(out.status.success());
    let alignment = needleman_wunsch(r, h).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), render_table(r, h, &alignment));

    let json: Value = serde_json::from_str(&ok(dir.path(), &["align", "--ref", r, "--hyp", h, "--json"])).unwrap();
    assert_eq!(json["score"], alignment.score);
    assert_eq!(json["reference_row"], "foi cla··ificada par··a most·a ·e·t···ntos");
    assert_eq!(json["segments"].as_array().unwrap().len(), 6);
}

#[test]
fn play_matches_a_direct_session() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let (tsv, clips) = write_corpus(dir.path(), 50);
    let root = ingest(&data, &tsv, &clips, 0);

    // answers worked out by replaying the same seed in-process
    let shared: Arc<dyn BlockStore> = Arc::new(store(&data));
    let mut direct = GameSession::new(shared, &cid(&root), "br", 3, 11).unwrap();
    let mut answers = Vec::new();
    for i in 0..5 {
        let task = direct.current().unwrap().clone();
        let answer = if i == 2 { "nann".to_owned() } else { task.target().to_owned() };
        direct.submit(&task.clip.clip_cid, &answer, 0.5).unwrap();
        answers.push(answer);
    }
    let input = answers.join("\n") + "\n:quit\n";
    let profile = dir.path().join("profile.json");
    let out = omni_with_input(
        &data,
        &["play", "--root", &root, "--lang", "br", "--bucket", "3", "--seed", "11", "--elapsed", "0.5", "--profile", profile.to_str().unwrap()],
        &input,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.matches("correct: ").count(), 4);
    assert_eq!(text.matches("wrong, it was: ").count(), 1);
    assert!(text.contains("level 1 passed"));
    assert!(text.trim_end().ends_with(&format!("L: 2  S: {}", direct.score)));
    let saved = omnilingo::game::Profile::load(&profile).unwrap();
    assert_eq!(saved, direct.profile());

    // resuming picks up the saved level and score
    let out = omni_with_input(
        &data,
        &["play", "--root", &root, "--lang", "br", "--bucket", "3", "--profile", profile.to_str().unwrap()],
        ":skip\n:quit\n",
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with(&format!("L: 2  S: {}  R: 5", direct.score)), "{text}");
}

#[test]
fn usage_errors_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = omni(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = omni(dir.path(), &["serve", "--root", "x", "--name", "y"]);
    assert_eq!(out.status.code(), Some(2));
    let out = omni(dir.path(), &["contribute", "--audio", "a.mp3", "--sentence", "Demat"]);
    assert_eq!(out.status.code(), Some(2), "--sentence needs --lang");

    // the config file named by the environment picks the data directory
    let config = dir.path().join("omnilingo.toml");
    std::fs::write(&config, "data_dir = \"from-config\"\n").unwrap();
    let out = std::process::Command::new(common::BIN)
        .args(["keys", "new"])
        .env("OMNILINGO_CONFIG", &config)
        .output()
        .unwrap();
    assert!(out.status.success());
    let name = String::from_utf8(out.stdout).unwrap().trim().to_owned();
    assert!(dir.path().join("from-config/keys").join(&name).is_dir());

    std::fs::write(&config, "data_dir = [").unwrap();
    let out = std::process::Command::new(common::BIN)
        .args(["keys", "list"])
        .env("OMNILINGO_CONFIG", &config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

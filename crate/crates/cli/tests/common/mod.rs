//! Fixtures shared by the CLI test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

pub const BIN: &str = env!("CARGO_BIN_EXE_omnilingo");

/// A constant-bitrate MPEG-1 Layer III stream: 128 kbit/s, 44.1 kHz,
/// 417-byte frames of 1152 samples each.
pub fn mp3(frames: usize) -> Vec<u8> {
    let mut audio = Vec::with_capacity(frames * 417);
    for _ in 0..frames {
        audio.extend_from_slice(&[0xff, 0xfb, 0x90, 0x64]);
        audio.resize(audio.len() + 413, 0);
    }
    audio
}

pub fn sentence(i: usize) -> String {
    format!("Setu frazenn niverenn {i}, mat eo.")
}

/// Writes `n` clips and a Common Voice style TSV under `dir`; returns the
/// TSV path and the clip directory.
pub fn write_corpus(dir: &Path, n: usize) -> (PathBuf, PathBuf) {
    let clips = dir.join("clips");
    std::fs::create_dir_all(&clips).unwrap();
    let mut tsv = String::from("client_id\tpath\tsentence\tup_votes\tdown_votes\tage\tgender\n");
    for i in 0..n {
        let file = format!("common_voice_br_{i}.mp3");
        std::fs::write(clips.join(&file), mp3(40 + 3 * i)).unwrap();
        tsv.push_str(&format!("c{}\t{file}\t{}\t2\t0\tthirties\t\n", i % 7, sentence(i)));
    }
    let path = dir.join("validated.tsv");
    std::fs::write(&path, tsv).unwrap();
    (path, clips)
}

/// Runs the binary against `data_dir`, ignoring any config in the environment.
pub fn omni(data_dir: &Path, args: &[&str]) -> Output {
    omni_with_input(data_dir, args, "")
}

pub fn omni_with_input(data_dir: &Path, args: &[&str], input: &str) -> Output {
    use std::io::Write;
    let mut child = Command::new(BIN)
        .arg("--data-dir")
        .arg(data_dir)
        .args(args)
        .env_remove("OMNILINGO_CONFIG")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

/// Stdout of a successful run, trimmed.
pub fn ok(data_dir: &Path, args: &[&str]) -> String {
    let out = omni(data_dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap().trim().to_owned()
}

pub fn ingest(data_dir: &Path, tsv: &Path, clips: &Path, seed: u64) -> String {
    ok(
        data_dir,
        &[
            "ingest",
            "--tsv",
            tsv.to_str().unwrap(),
            "--clips",
            clips.to_str().unwrap(),
            "--lang",
            "br",
            "--display",
            "Brezhoneg",
            "--seed",
            &seed.to_string(),
        ],
    )
}

use std::io::{BufRead, Write};
use std::time::Instant;

use omnilingo::cas::Cid;
use omnilingo::game::{GameSession, Profile};
use omnilingo_service::DataDir;

use crate::args::PlayArgs;
use crate::commands::CliError;

const BLANK: &str = "____";

/// Reads one answer per line. `:skip`, `:discard` and `:quit` act on the
/// current task; end of input quits. Progress is saved to the profile file,
/// if one was given, on the way out.
pub fn run(
    data: &DataDir,
    root: &Cid,
    args: &PlayArgs,
    input: impl BufRead,
    mut out: impl Write,
) -> Result<(), CliError> {
    let store = data.store.clone();
    let mut session = match args.profile.as_deref().filter(|p| p.exists()) {
        Some(path) => {
            let profile = Profile::load(path)?;
            if profile.language != args.lang {
                return Err(CliError::Usage(format!(
                    "profile is for {}, not {}",
                    profile.language, args.lang
                )));
            }
            GameSession::resume(store, root, &profile, args.bucket)?
        }
        None => {
            let seed = args.seed.unwrap_or_else(rand::random);
            eprintln!("seed {seed}");
            GameSession::new(store, root, &args.lang, args.bucket, seed)?
        }
    };

    let mut lines = input.lines();
    while let Some(task) = session.current().cloned() {
        let state = session.display_state();
        writeln!(out, "L: {}  S: {}  R: {}", state.level, state.score, state.remaining)?;
        writeln!(out, "[{} {}s] {}", task.clip.clip_cid, task.clip.length, task.prompt(BLANK))?;
        write!(out, "> ")?;
        out.flush()?;
        let shown = Instant::now();
        let Some(line) = lines.next().transpose()? else {
            writeln!(out)?;
            break;
        };
        let elapsed = args.elapsed.unwrap_or_else(|| shown.elapsed().as_secs_f64());
        match line.trim() {
            ":quit" => break,
            ":skip" => {
                session.skip(&task.clip.clip_cid)?;
            }
            ":discard" => {
                session.discard(&task.clip.clip_cid)?;
                writeln!(out, "discarded")?;
            }
            answer => {
                let outcome = session.submit(&task.clip.clip_cid, answer, elapsed)?;
                if outcome.check.correct {
                    writeln!(out, "correct: {}", outcome.check.expected)?;
                } else {
                    writeln!(out, "wrong, it was: {}", outcome.check.expected)?;
                }
                if let Some(level) = outcome.level {
                    let verdict = if level.passed { "passed" } else { "failed" };
                    writeln!(
                        out,
                        "level {} {verdict}: {}s of {}s, +{}",
                        level.level, level.total_elapsed, level.total_length, level.score_delta
                    )?;
                }
            }
        }
    }

    let state = session.display_state();
    writeln!(out, "L: {}  S: {}", state.level, state.score)?;
    if let Some(path) = &args.profile {
        session.profile().save(path)?;
    }
    Ok(())
}

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use omnilingo::cas::Cid;

#[derive(Debug, Parser)]
#[command(name = "omnilingo", version, about = "Build, publish and play OmniLingo catalogues")]
pub struct Cli {
    /// TOML config with `data_dir` and `gateway` (default: $OMNILINGO_CONFIG).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Block store, name registry and keystore location.
    #[arg(long, global = true, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// HTTP API of a content-addressed daemon to fetch from and add to.
    #[arg(long, global = true, value_name = "URL")]
    pub gateway: Option<String>,
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a language from a transcript TSV and clip directory; prints the root.
    Ingest(IngestArgs),
    /// Point an identity's name at a root after checking it is complete.
    Publish {
        #[arg(long)]
        root: Cid,
        #[arg(long)]
        identity: Option<String>,
        /// Publish even if validation finds problems.
        #[arg(long)]
        force: bool,
    },
    /// Union of several roots; prints the merged root.
    Merge {
        #[arg(long, num_args = 2.., required = true)]
        roots: Vec<Cid>,
    },
    /// Walk a root and report missing or malformed objects.
    Validate {
        #[arg(long)]
        root: Cid,
        /// Print the full report as JSON on stdout.
        #[arg(long)]
        json: bool,
    },
    /// Describe a root or an identity's published contributions as JSON.
    Inspect(InspectArgs),
    /// Run the HTTP service; prints the bound address.
    Serve(ServeArgs),
    /// Contributor identities and session keys.
    Keys {
        #[command(subcommand)]
        command: KeysCommand,
    },
    /// Encrypt and publish a recording; prints the new root.
    Contribute(ContributeArgs),
    /// Withdraw a session's key and republish; prints the new root.
    Revoke {
        #[arg(long)]
        identity: Option<String>,
        #[arg(long, value_name = "FINGERPRINT")]
        fpr: String,
    },
    /// Align a transcript with a hypothesis and show the result.
    Align {
        #[arg(long = "ref", value_name = "TEXT")]
        reference: String,
        #[arg(long = "hyp", value_name = "TEXT")]
        hypothesis: String,
        /// Print alignment and feedback segments as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Gap-fill game in the terminal.
    Play(PlayArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, value_name = "FILE")]
    pub tsv: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub clips: PathBuf,
    /// Language code for rows without a `locale` column.
    #[arg(long)]
    pub lang: String,
    /// Display name for the language (default: the code).
    #[arg(long)]
    pub display: Option<String>,
    #[arg(long, default_value_t = omnilingo::ingest::DEFAULT_CAP)]
    pub cap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "CC0-1.0")]
    pub copyright: String,
    /// Add the language to this root instead of starting an empty one.
    #[arg(long)]
    pub into: Option<Cid>,
}

/// Exactly one of a root Cid or a name to resolve.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct CatalogueArgs {
    #[arg(long)]
    pub root: Option<Cid>,
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct InspectArgs {
    #[arg(long)]
    pub root: Option<Cid>,
    /// Resolve this identity name and open what it publishes.
    #[arg(long)]
    pub identity: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    #[command(flatten)]
    pub catalogue: CatalogueArgs,
    /// Web client files served at `/`.
    #[arg(long = "static", value_name = "DIR")]
    pub static_dir: Option<PathBuf>,
    /// Identity used by the contribute, revoke and keys endpoints.
    #[arg(long)]
    pub identity: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum KeysCommand {
    /// Create an identity; prints its name.
    New,
    /// One line per session key: identity, fingerprint, words, state.
    List {
        #[arg(long)]
        identity: Option<String>,
    },
    /// Start a new session key; prints its fingerprint.
    Roll {
        #[arg(long)]
        identity: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct ContributeArgs {
    #[arg(long)]
    pub identity: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub audio: PathBuf,
    /// A sentence already in the store.
    #[arg(long, required_unless_present = "sentence", conflicts_with = "sentence")]
    pub sentence_cid: Option<Cid>,
    /// Store this sentence text first (needs --lang).
    #[arg(long, requires = "lang")]
    pub sentence: Option<String>,
    #[arg(long)]
    pub meta_cid: Option<Cid>,
    #[arg(long)]
    pub lang: Option<String>,
    #[arg(long, default_value = "CC0-1.0")]
    pub copyright: String,
    /// Session key to use (default: the active one, created if needed).
    #[arg(long, value_name = "FINGERPRINT")]
    pub fpr: Option<String>,
}

#[derive(Debug, Args)]
pub struct PlayArgs {
    #[command(flatten)]
    pub catalogue: CatalogueArgs,
    #[arg(long)]
    pub lang: String,
    #[arg(long, default_value_t = 0)]
    pub bucket: usize,
    /// Random when absent; reported on stderr.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Resume from and save progress to this file.
    #[arg(long, value_name = "FILE")]
    pub profile: Option<PathBuf>,
    /// Report this many seconds per answer instead of timing the reply.
    #[arg(long, value_name = "SECS")]
    pub elapsed: Option<f64>,
}

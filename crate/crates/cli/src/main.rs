//! `pulse`: ingest archives, run the analysis offline, audit reports, record
//! provider fixtures, or serve the HTTP API.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pulse_core::corpus::{ingest_files, load_corpus, write_corpus_csv, ArchiveFormat, Corpus};
use pulse_core::llm::{Gateway, ProviderConfig, ProviderMode};
use pulse_core::pipeline::{select_theme, Clock, JobHandle, Pipeline, PipelineConfig};
use pulse_core::report::{read_jsonl, verify_traceability, Report};
use pulse_server::ServerConfig;
use serde_json::{json, Value};
use tracing::info;

#[derive(Parser)]
#[command(name = "pulse", version, about = "Turn forum discussions into policy-oriented reports")]
struct Cli {
    /// Print the summary as JSON.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate a posts/comments archive into a thread corpus CSV.
    Ingest {
        #[arg(long)]
        posts: PathBuf,
        #[arg(long)]
        comments: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Archive format (ndjson or zst); inferred from the extension when absent.
        #[arg(long)]
        format: Option<ArchiveFormat>,
    },
    /// Run the full report job for one theme and write every artifact to --out.
    Analyze {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        theme: String,
        #[arg(long)]
        desc: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Cache root; defaults to OUT/.cache.
        #[arg(long, env = "PULSE_DATA_DIR")]
        data_dir: Option<PathBuf>,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Re-check every quote of a report against its dataset.
    Verify {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long, env = "PULSE_ADDR", default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, env = "PULSE_DATA_DIR", default_value = "data")]
        data_dir: PathBuf,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Capture provider replies for every stage into the fixture directory.
    RecordFixtures {
        #[arg(long)]
        dataset: PathBuf,
        /// Research topic used for the source recommendation call.
        #[arg(long)]
        topic: String,
        /// One source label per line.
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        theme: String,
        #[arg(long)]
        desc: Option<String>,
        /// Cache root for the session; defaults to a fresh temporary directory.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[command(flatten)]
        provider: ProviderArgs,
    },
}

#[derive(Args, Clone)]
struct ProviderArgs {
    #[arg(long, env = "PULSE_PROVIDER_MODE", default_value = "replay")]
    mode: ProviderMode,
    #[arg(long, env = "PULSE_FIXTURE_DIR", default_value = "fixtures/llm")]
    fixtures: PathBuf,
    #[arg(long, default_value = "https://api.openai.com/v1/chat/completions")]
    endpoint: String,
    /// Name of the environment variable holding the API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    api_key_env: String,
    #[arg(long, default_value = "gpt-4")]
    model: String,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    #[arg(long, default_value_t = 9)]
    code_count: u32,
}

impl ProviderArgs {
    fn provider_config(&self, mode: ProviderMode) -> ProviderConfig {
        ProviderConfig {
            endpoint_url: self.endpoint.clone(),
            api_key_ref: self.api_key_env.clone(),
            mode,
            fixture_dir: self.fixtures.clone(),
            max_in_flight: self.max_in_flight,
            ..ProviderConfig::default()
        }
    }

    fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            model_id: self.model.clone(),
            code_count: self.code_count,
            ..PipelineConfig::default()
        }
    }

    fn pipeline(&self, mode: ProviderMode, data_dir: &Path) -> Result<Pipeline, String> {
        let gateway = Gateway::from_config(&self.provider_config(mode)).map_err(|e| e.to_string())?;
        Pipeline::open(data_dir, gateway, self.pipeline_config(), Clock::for_mode(mode)).map_err(|e| e.to_string())
    }
}

/// A failed command: exit status plus the message for stderr.
struct Failure {
    code: u8,
    message: String,
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

/// A successful command's summary; `ok == false` still prints it but exits 1.
struct Summary {
    value: Value,
    ok: bool,
}

impl Summary {
    fn ok(value: Value) -> Self {
        Summary { value, ok: true }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();

    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: starting runtime: {e}");
            return ExitCode::from(1);
        }
    };
    match runtime.block_on(run(cli.command)) {
        Ok(summary) => {
            print_summary(&summary.value, cli.json);
            if summary.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn print_summary(value: &Value, as_json: bool) {
    if as_json {
        println!("{}", serde_json::to_string_pretty(value).expect("summary serializes"));
        return;
    }
    if let Value::Object(map) = value {
        for (k, v) in map {
            match v {
                Value::String(s) => println!("{k}\t{s}"),
                other => println!("{k}\t{other}"),
            }
        }
    }
}

async fn run(command: Command) -> Result<Summary, Failure> {
    match command {
        Command::Ingest {
            posts,
            comments,
            out,
            format,
        } => ingest(&posts, &comments, &out, format),
        Command::Analyze {
            dataset,
            theme,
            desc,
            out,
            data_dir,
            provider,
        } => {
            let data_dir = data_dir.unwrap_or_else(|| out.join(".cache"));
            analyze(&dataset, &theme, desc.as_deref(), &out, &data_dir, &provider).await
        }
        Command::Verify { report, dataset } => verify(&report, &dataset),
        Command::Serve {
            addr,
            data_dir,
            provider,
        } => {
            let cfg = ServerConfig {
                addr,
                data_dir,
                provider: provider.provider_config(provider.mode),
                pipeline: provider.pipeline_config(),
            };
            pulse_server::serve(cfg).await?;
            Ok(Summary::ok(json!({})))
        }
        Command::RecordFixtures {
            dataset,
            topic,
            catalog,
            theme,
            desc,
            data_dir,
            provider,
        } => record_fixtures(&dataset, &topic, &catalog, &theme, desc.as_deref(), data_dir, &provider).await,
    }
}

fn ingest(posts: &Path, comments: &Path, out: &Path, format: Option<ArchiveFormat>) -> Result<Summary, Failure> {
    let ingested = ingest_files(posts, comments, format)?;
    write_corpus_csv(&ingested.corpus, out)?;
    info!(threads = ingested.corpus.len(), out = %out.display(), "corpus written");
    let mut value = json!({
        "dataset_id": ingested.corpus.dataset_id,
        "source_label": ingested.corpus.source_label,
        "out": out.display().to_string(),
    });
    let stats = serde_json::to_value(ingested.stats)?;
    value.as_object_mut().unwrap().extend(stats.as_object().unwrap().clone());
    Ok(Summary::ok(value))
}

async fn analyze(
    dataset: &Path,
    title: &str,
    desc: Option<&str>,
    out: &Path,
    data_dir: &Path,
    provider: &ProviderArgs,
) -> Result<Summary, Failure> {
    if title.trim().is_empty() {
        return Err(Failure {
            code: 2,
            message: "--theme must not be empty".into(),
        });
    }
    let corpus = load_corpus(dataset)?;
    let pipeline = provider.pipeline(provider.mode, data_dir)?;
    let themes = pipeline.generate_themes(&corpus).await?;
    let theme = select_theme(&themes, title, desc);
    info!(theme = %theme.title, origin = ?theme.origin, "theme selected");

    let job = JobHandle::new("cli", &corpus.dataset_id, theme.clone());
    let report = pipeline.run_report_job(&corpus, &theme, &job).await?;
    pipeline.materialize_report(&corpus, &theme, &report, out)?;
    let usage = pipeline.gateway().usage().total();
    Ok(Summary::ok(json!({
        "report_id": pipeline.report_id(&corpus, &theme),
        "out": out.display().to_string(),
        "quotes": report.totals.quotes,
        "untraceable": report.totals.untraceable,
        "subtopics": report.sections.len(),
        "llm_calls": usage.calls,
        "prompt_tokens": usage.prompt_tokens,
        "completion_tokens": usage.completion_tokens,
    })))
}

fn read_report(dir: &Path) -> Result<Report, Failure> {
    let jsonl = dir.join("report.jsonl");
    if jsonl.is_file() {
        return Ok(read_jsonl(std::fs::File::open(&jsonl)?)?);
    }
    let json = dir.join("report.json");
    let text = std::fs::read_to_string(&json).map_err(|e| format!("{}: {e}", json.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn verify(dir: &Path, dataset: &Path) -> Result<Summary, Failure> {
    let report = read_report(dir)?;
    let corpus: Corpus = load_corpus(dataset)?;
    let audit = verify_traceability(&report, &corpus)?;
    for m in &audit.mismatches {
        eprintln!("untraceable: code {} source {}: {:?}", m.code, m.source_id, m.quote);
    }
    let changed = audit.report.totals != report.totals;
    Ok(Summary {
        ok: audit.report.totals.untraceable == 0,
        value: json!({
            "report_id": report.report_id,
            "quotes": audit.report.totals.quotes,
            "traceable": audit.report.totals.traceable,
            "untraceable": audit.report.totals.untraceable,
            "recorded_flags_match": !changed,
        }),
    })
}

async fn record_fixtures(
    dataset: &Path,
    topic: &str,
    catalog: &Path,
    title: &str,
    desc: Option<&str>,
    data_dir: Option<PathBuf>,
    provider: &ProviderArgs,
) -> Result<Summary, Failure> {
    let corpus = load_corpus(dataset)?;
    let catalog: Vec<String> = std::fs::read_to_string(catalog)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    let scratch;
    let data_dir = match data_dir {
        Some(d) => d,
        None => {
            scratch = std::env::temp_dir().join(format!("pulse-record-{}", std::process::id()));
            scratch
        }
    };
    let pipeline = provider.pipeline(ProviderMode::Record, &data_dir)?;
    let outcome = pipeline.capture_session(&corpus, topic, &catalog, title, desc).await?;
    let usage = pipeline.gateway().usage().total();
    Ok(Summary::ok(json!({
        "fixtures": provider.fixtures.display().to_string(),
        "recommended": outcome.recommended,
        "themes": outcome.themes.len(),
        "report_id": outcome.report.report_id,
        "quotes": outcome.report.totals.quotes,
        "llm_calls": usage.calls,
    })))
}

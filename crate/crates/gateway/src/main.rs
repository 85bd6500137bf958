use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use softlink_core::extract::{Gazetteer, MentionGroup, evaluate_corpus, read_gold_jsonl};
use softlink_core::harvest::{DirectoryFetcher, HttpFetcher, harvest_all};
use softlink_core::resolve::{cluster, resolve, write_candidates_jsonl};
use softlink_gateway::config::{ArchivalMode, Config};
use softlink_gateway::demo::{bundled_fixture, run_demo};
use softlink_gateway::http::UreqFetcher;
use softlink_gateway::pipeline::{PipelineError, Stage, load_catalog, load_gazetteer, parse_file, process_document, run_pipeline};
use softlink_gateway::server::{app_state, open_engine, serve};

#[derive(Parser)]
#[command(name = "softlink", version, about = "Find software mentioned in papers, curate it and expose the links")]
struct Cli {
    /// Configuration file.
    #[arg(long, short, global = true, default_value = "softlink.toml")]
    config: PathBuf,
    /// Override the clustering threshold.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Override the extraction confidence cut-off.
    #[arg(long, global = true)]
    min_confidence: Option<f64>,
    /// Use the in-process mock archive whatever the configuration says.
    #[arg(long, global = true)]
    mock_archival: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Harvest the repository and print one JSON record per line.
    Harvest {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract mention groups from local TEI (.xml) or text files.
    Extract {
        files: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster mention groups (JSON lines, as written by `extract`) into
    /// software candidates.
    Resolve {
        groups: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score extraction against gold annotations.
    Eval {
        /// Gold mentions, one JSON object per line.
        #[arg(long)]
        gold: PathBuf,
        /// Directory of documents; file stems are document ids.
        docs: PathBuf,
    },
    /// Harvest, extract, resolve and create lifecycle records.
    RunPipeline,
    /// Serve the API and OAI-PMH provider.
    Serve {
        #[arg(long)]
        listen: Option<std::net::SocketAddr>,
    },
    /// Run the scripted end-to-end demo over the bundled fixture.
    Demo {
        #[arg(long)]
        fixture_dir: Option<PathBuf>,
        /// Keep state here instead of a temporary directory.
        #[arg(long)]
        state_dir: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.stage == Stage::Config {
            Failure::Usage(e.to_string())
        } else {
            Failure::Run(e.to_string())
        }
    }
}

fn run_err(e: impl std::fmt::Display) -> Failure {
    Failure::Run(e.to_string())
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let mut cfg = Config::load(&cli.config).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(t) = cli.threshold {
        cfg.resolve.threshold = t;
    }
    if let Some(m) = cli.min_confidence {
        cfg.extract.min_confidence = m;
    }
    if cli.mock_archival {
        cfg.archival.mode = ArchivalMode::Mock;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn fetcher(cfg: &Config) -> Box<dyn HttpFetcher> {
    match &cfg.repository.fixture_dir {
        Some(dir) => Box::new(DirectoryFetcher::new(dir)),
        None => Box::new(UreqFetcher::new(Duration::from_secs(cfg.repository.timeout_secs))),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| run_err(format!("{}: {e}", p.display())))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_jsonl<T: serde::Serialize>(out: &mut dyn Write, items: impl IntoIterator<Item = T>) -> Result<(), Failure> {
    for item in items {
        serde_json::to_writer(&mut *out, &item).map_err(run_err)?;
        out.write_all(b"\n").map_err(run_err)?;
    }
    out.flush().map_err(run_err)
}

fn doc_id_of(path: &Path) -> String {
    let name = path.file_name().unwrap_or_default().to_string_lossy();
    name.split('.').next().unwrap_or(&name).to_string()
}

fn extract_files(files: &[PathBuf], gaz: &Gazetteer, cfg: &Config) -> Result<Vec<MentionGroup>, Failure> {
    let mut groups = Vec::new();
    for path in files {
        let doc = parse_file(path, &doc_id_of(path)).map_err(run_err)?;
        groups.extend(process_document(&doc, gaz, &cfg.extract_config()).groups);
    }
    Ok(groups)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Command::Demo { fixture_dir, state_dir } = &cli.command {
        let fixture = fixture_dir.clone().unwrap_or_else(bundled_fixture);
        let temp;
        let state = match state_dir {
            Some(d) => {
                fs::create_dir_all(d).map_err(run_err)?;
                d.clone()
            }
            None => {
                temp = tempfile::tempdir().map_err(run_err)?;
                temp.path().to_path_buf()
            }
        };
        let report = run_demo(&fixture, &state).map_err(run_err)?;
        println!("{}", serde_json::to_string_pretty(&report).map_err(run_err)?);
        return Ok(());
    }

    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Harvest { out } => {
            let endpoint = cfg.endpoint().map_err(|e| Failure::Usage(e.to_string()))?;
            let http = fetcher(&cfg);
            let mut harvest = harvest_all(&endpoint, http.as_ref()).with_retry_policy(cfg.retry_policy());
            let records = harvest
                .by_ref()
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| run_err(PipelineError::new(Stage::Harvest, e)))?;
            log::info!("{} records, {} requests", records.len(), harvest.requests());
            write_jsonl(&mut *output(out.as_deref())?, &records)
        }
        Command::Extract { files, out } => {
            let gaz = load_gazetteer(&cfg)?;
            let groups = extract_files(&files, &gaz, &cfg)?;
            write_jsonl(&mut *output(out.as_deref())?, &groups)
        }
        Command::Resolve { groups, out } => {
            let text = fs::read_to_string(&groups).map_err(|e| run_err(format!("{}: {e}", groups.display())))?;
            let groups: Vec<MentionGroup> = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .enumerate()
                .map(|(i, l)| serde_json::from_str(l).map_err(|e| run_err(format!("line {}: {e}", i + 1))))
                .collect::<Result<_, _>>()?;
            let rc = cfg.resolve_config();
            let candidates = match load_catalog(&cfg)? {
                Some(catalog) => resolve(&groups, &catalog, &rc),
                None => cluster(&groups, &rc),
            }
            .map_err(|e| run_err(PipelineError::new(Stage::Resolve, e)))?;
            let mut out = output(out.as_deref())?;
            write_candidates_jsonl(&mut out, &candidates).map_err(run_err)?;
            out.flush().map_err(run_err)
        }
        Command::Eval { gold, docs } => {
            let gaz = load_gazetteer(&cfg)?;
            let gold_file = File::open(&gold).map_err(|e| run_err(format!("{}: {e}", gold.display())))?;
            let gold = read_gold_jsonl(BufReader::new(gold_file)).map_err(run_err)?;
            let mut files: Vec<PathBuf> = fs::read_dir(&docs)
                .map_err(|e| run_err(format!("{}: {e}", docs.display())))?
                .filter_map(Result::ok)
                .map(|e| e.path())
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            let ids: Vec<String> = files.iter().map(|p| doc_id_of(p)).collect();
            let mut predicted = Vec::new();
            for path in &files {
                let doc = parse_file(path, &doc_id_of(path)).map_err(run_err)?;
                predicted.extend(process_document(&doc, &gaz, &cfg.extract_config()).mentions);
            }
            let report = evaluate_corpus(&predicted, &gold, &ids);
            println!("{}", serde_json::to_string_pretty(&report).map_err(run_err)?);
            Ok(())
        }
        Command::RunPipeline => {
            let engine = open_engine(&cfg).map_err(Failure::Usage)?;
            let report = run_pipeline(&cfg, fetcher(&cfg).as_ref(), &engine)?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(run_err)?);
            Ok(())
        }
        Command::Serve { listen } => {
            let engine = Arc::new(open_engine(&cfg).map_err(Failure::Usage)?);
            let state = app_state(&cfg, engine).map_err(Failure::Usage)?;
            let addr = listen.unwrap_or(cfg.server.listen);
            let runtime = tokio::runtime::Runtime::new().map_err(run_err)?;
            runtime
                .block_on(serve(state, addr, cfg.server.dashboard_dir.clone()))
                .map_err(run_err)
        }
        Command::Demo { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand, ValueEnum};

use crs_core::gateway::HttpProviderConfig;
use crs_core::resque::{fit_path_model, PathModel};
use crs_core::telemetry::{JsonlStore, MetricStore, ReportFilter};
use crs_server::ServerConfig;
use crs_sim::fixtures;
use crs_sim::{load_scenario_dir, path_table, read_responses, run_all, run_report, ProviderChoice, Scenario};

#[derive(Parser)]
#[command(name = "crs", version, about = "Event recommender: scenarios, reports, server, path fits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProviderArg {
    Mock,
    Http,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FixtureArg {
    /// Per-stage medians.
    StageMedians,
    /// Per-message and per-session medians.
    MessageMedians,
}

#[derive(Subcommand)]
enum Command {
    /// Replay scenario files (or directories of them) through the engine.
    Run {
        #[arg(long, required = true)]
        scenario: Vec<PathBuf>,
        /// Overrides each scenario's catalog.
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "mock")]
        provider: ProviderArg,
        /// Overrides each scenario's mock script.
        #[arg(long)]
        mock_script: Option<PathBuf>,
        /// Write the full reports, logs included, as JSON.
        #[arg(long)]
        report_out: Option<PathBuf>,
        #[arg(long)]
        parallel: bool,
    },
    /// Print the metrics report for a metric store directory.
    Report {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        since: Option<DateTime<Utc>>,
        #[arg(long)]
        until: Option<DateTime<Utc>>,
        /// Where to write the JSON form (default: <store>/report.json).
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Serve the /v1 HTTP API.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Estimate the path model from survey responses.
    FitPaths {
        #[arg(long)]
        responses: PathBuf,
        /// Model as JSON; the built-in model when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Write a generated fixture into a metric store directory.
    SeedStore {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, value_enum)]
        fixture: FixtureArg,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn write(path: &Path, text: &str) -> Result<(), String> {
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn dispatch(cmd: Command) -> Result<ExitCode, String> {
    match cmd {
        Command::Run { scenario, catalog, provider, mock_script, report_out, parallel } => {
            let mut scenarios = Vec::new();
            for p in &scenario {
                if p.is_dir() {
                    scenarios.extend(load_scenario_dir(p).map_err(|e| e.to_string())?);
                } else {
                    scenarios.push(Scenario::load(p).map_err(|e| e.to_string())?);
                }
            }
            for s in &mut scenarios {
                if let Some(c) = &catalog {
                    s.catalog = c.clone();
                }
                if let Some(m) = &mock_script {
                    s.mock_script = Some(m.clone());
                }
            }
            let provider = match provider {
                ProviderArg::Mock => ProviderChoice::Mock,
                ProviderArg::Http => ProviderChoice::Http(HttpProviderConfig::default().with_env_overrides()),
            };
            let results = run_all(&scenarios, &provider, parallel);
            let mut ok = true;
            let mut reports = Vec::new();
            for r in results {
                match r {
                    Ok(rep) => {
                        print!("{}", rep.summary());
                        ok &= rep.passed;
                        reports.push(rep);
                    }
                    Err(e) => {
                        eprintln!("error: {e}");
                        ok = false;
                    }
                }
            }
            if let Some(out) = report_out {
                write(&out, &serde_json::to_string_pretty(&reports).expect("reports serialize"))?;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Report { store, since, until, json_out } => {
            let report = run_report(&store, &ReportFilter { since, until, sessions: None })?;
            print!("{}", report.to_text_table());
            let out = json_out.unwrap_or_else(|| store.join("report.json"));
            write(&out, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { config } => {
            let mut cfg = ServerConfig::load(&config).map_err(|e| e.to_string())?;
            cfg.resolve_paths(config.parent().unwrap_or(Path::new(".")));
            let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            rt.block_on(crs_server::serve(cfg)).map_err(|e| e.to_string())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::FitPaths { responses, model, json_out } => {
            let responses = read_responses(&responses)?;
            let model = match model {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))?;
                    PathModel::from_json(&text).map_err(|e| format!("{}: {e}", p.display()))?
                }
                None => PathModel::default_model(),
            };
            let fit = fit_path_model(&responses, &model).map_err(|e| e.to_string())?;
            print!("{}", path_table(&fit));
            if let Some(out) = json_out {
                write(&out, &fit.to_json())?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::SeedStore { store, fixture } => {
            let t0 = Utc::now();
            let records = match fixture {
                FixtureArg::StageMedians => fixtures::stage_median_records(t0),
                FixtureArg::MessageMedians => fixtures::message_median_records(t0),
            };
            let s = JsonlStore::open(&store).map_err(|e| e.to_string())?.without_fsync();
            for r in &records {
                s.append(r).map_err(|e| e.to_string())?;
            }
            println!("{} records written to {}", records.len(), store.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

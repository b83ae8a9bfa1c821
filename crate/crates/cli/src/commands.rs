use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use gensim_core::creator::provider::{HttpProvider, MockProvider, Provider, ProviderConfig, RecordingProvider};
use gensim_core::creator::{
    export_finetune_dataset, generate, run_goal_directed_eval, AttemptRecord, CreatorConfig, GenerationMode,
    HELD_OUT_TASKS,
};
use gensim_core::dsl::{parse_task, parse_task_bytes, Diagnostic};
use gensim_core::goal::DONE_THRESHOLD;
use gensim_core::library::Library;
use gensim_core::oracle::export_episode;
use gensim_core::pipeline::{verify_task, BatchMetrics, StagedReport, VerifyOptions};

use crate::cli::{Cli, Command, LibraryCommand, Mode, ProviderKind, VerifyArgs};
use crate::replay::replay;

/// Latest batch metrics, kept next to the library index for `/metrics`.
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatestMetrics {
    pub source: String,
    pub mode: String,
    pub metrics: BatchMetrics,
}

fn emit_json(out: &mut dyn Write, v: &impl Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, v)?;
    writeln!(out)?;
    Ok(())
}

fn diag_line(d: &Diagnostic) -> String {
    format!("  {d}")
}

pub fn open_library(path: &Path) -> Result<Library> {
    let lib = Library::open(path).with_context(|| format!("opening library {}", path.display()))?;
    if !lib.is_empty() {
        return Ok(lib);
    }
    log::info!("library at {} is empty; adding the seed tasks", path.display());
    Library::init_seeds(Some(path.to_path_buf())).context("initializing the library")
}

pub fn make_provider(kind: ProviderKind, transcripts: &Path, record: Option<&Path>) -> Result<Box<dyn Provider>> {
    match kind {
        ProviderKind::Mock => {
            let m = MockProvider::from_dir(transcripts)
                .with_context(|| format!("loading transcripts from {}", transcripts.display()))?;
            Ok(Box::new(m))
        }
        ProviderKind::Http => {
            let mut cfg = ProviderConfig::default();
            if let Ok(v) = std::env::var("GENSIM_ENDPOINT") {
                cfg.endpoint = v;
            }
            if let Ok(v) = std::env::var("GENSIM_MODEL") {
                cfg.model_id = v;
            }
            if let Ok(v) = std::env::var("GENSIM_API_KEY_ENV") {
                cfg.api_key_env = (!v.is_empty()).then_some(v);
            }
            let http = HttpProvider::new(cfg)?;
            match record {
                Some(dir) => Ok(Box::new(RecordingProvider::new(http, dir)?)),
                None => Ok(Box::new(http)),
            }
        }
    }
}

fn verify_options(v: &VerifyArgs) -> Result<VerifyOptions> {
    if v.quorum > v.n_seeds {
        bail!("--quorum {} is larger than --n-seeds {}", v.quorum, v.n_seeds);
    }
    Ok(VerifyOptions::new(v.n_seeds as usize, v.quorum as usize))
}

fn read_report(path: &Path, opts: &VerifyOptions) -> Result<StagedReport> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(match String::from_utf8(bytes) {
        Ok(text) => verify_task(&text, opts),
        Err(e) => {
            let diags = parse_task_bytes(e.as_bytes()).expect_err("invalid UTF-8 never parses");
            let mut r = StagedReport::failed("", diags[0].clone());
            r.diagnostics = diags;
            r
        }
    })
}

fn attempt_json(a: &AttemptRecord) -> serde_json::Value {
    json!({
        "index": a.index,
        "seed": a.seed,
        "task_name": a.proposal.as_ref().map(|p| p.task_name.as_str()),
        "outcome": a.outcome,
        "stage": a.report.stage_label(),
        "error": a.error,
    })
}

fn metrics_line(m: &BatchMetrics) -> String {
    format!(
        "metrics over {} tasks: syntax {:.3}, runtime {:.3}, completed {:.3}",
        m.n_tasks, m.syntax_rate, m.runtime_rate, m.completed_rate
    )
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs one parsed command line and returns the exit status.
pub fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Validate { file, verify } => {
            let report = read_report(file, &verify_options(verify)?)?;
            if cli.json {
                emit_json(out, &report)?;
            } else {
                let name = if report.task_name.is_empty() {
                    "?"
                } else {
                    report.task_name.as_str()
                };
                let ok = report.per_seed_scores.iter().filter(|s| **s > DONE_THRESHOLD).count();
                writeln!(
                    out,
                    "{name}: {} ({ok}/{} seeds completed)",
                    report.stage_label(),
                    report.seeds_tried.len()
                )?;
                for d in &report.diagnostics {
                    writeln!(out, "{}", diag_line(d))?;
                }
            }
            Ok(report.exit_code())
        }
        Command::Demo { file, export, frames } => {
            let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
            let spec = match parse_task(&text) {
                Ok(s) => s,
                Err(diags) => {
                    for d in &diags {
                        writeln!(out, "{}", diag_line(d))?;
                    }
                    return Ok(2);
                }
            };
            let (ep, replay_frames) = match replay(&spec, cli.seed) {
                Ok(x) => x,
                Err(diags) => {
                    for d in &diags {
                        writeln!(out, "{}", diag_line(d))?;
                    }
                    return Ok(2);
                }
            };
            let path = export_episode(&ep, export)?;
            let frames_path = if *frames {
                let p = export.join(format!("{}-{}.frames.json", ep.task, ep.seed));
                let mut bytes = serde_json::to_vec(&replay_frames)?;
                bytes.push(b'\n');
                fs::write(&p, bytes)?;
                Some(p)
            } else {
                None
            };
            if cli.json {
                emit_json(
                    out,
                    &json!({
                        "path": path,
                        "frames_path": frames_path,
                        "task": ep.task,
                        "seed": ep.seed,
                        "steps": ep.steps.len(),
                        "score": ep.final_reward.score,
                        "success": ep.success,
                        "outcome": ep.outcome,
                    }),
                )?;
            } else {
                writeln!(
                    out,
                    "{}: {} steps, score {:.1}, {:?}",
                    path.display(),
                    ep.steps.len(),
                    ep.final_reward.score,
                    ep.outcome
                )?;
            }
            Ok(if ep.success { 0 } else { 1 })
        }
        Command::Generate {
            mode,
            target,
            n,
            concurrency,
            llm_pick_refs,
        } => {
            let mode = match mode {
                Mode::Exploratory => GenerationMode::Exploratory,
                Mode::GoalDirected => GenerationMode::GoalDirected {
                    target_name: target.clone().context("--target is required in goal-directed mode")?,
                },
            };
            let provider = make_provider(cli.provider, &cli.transcripts, cli.record.as_deref())?;
            let mut lib = open_library(&cli.library)?;
            let cfg = CreatorConfig {
                base_seed: cli.seed,
                concurrency: *concurrency,
                llm_pick_refs: *llm_pick_refs,
                ..CreatorConfig::default()
            };
            let outcome = generate(&mode, *n, &mut lib, provider.as_ref(), &cfg)?;
            let latest = LatestMetrics {
                source: "generate".into(),
                mode: mode.label().into(),
                metrics: outcome.metrics.clone(),
            };
            write_atomic(&cli.library.join(METRICS_FILE), &serde_json::to_vec_pretty(&latest)?)?;
            if cli.json {
                let attempts: Vec<_> = outcome.attempts.iter().map(attempt_json).collect();
                emit_json(
                    out,
                    &json!({"attempts": attempts, "accepted": outcome.accepted, "metrics": outcome.metrics}),
                )?;
            } else {
                for a in &outcome.attempts {
                    let name = a.proposal.as_ref().map_or("-", |p| p.task_name.as_str());
                    write!(
                        out,
                        "attempt {:>3} seed {:<6} {:<40} {:?}",
                        a.index, a.seed, name, a.outcome
                    )?;
                    match &a.error {
                        Some(e) => writeln!(out, " ({e})")?,
                        None => writeln!(out)?,
                    }
                }
                writeln!(out, "{}", metrics_line(&outcome.metrics))?;
                writeln!(
                    out,
                    "accepted {}: {}",
                    outcome.accepted.len(),
                    outcome.accepted.join(", ")
                )?;
            }
            Ok(0)
        }
        Command::Bench {
            targets,
            trials,
            concurrency,
        } => {
            let targets: Vec<String> = if targets.is_empty() {
                HELD_OUT_TASKS.iter().map(|s| s.to_string()).collect()
            } else {
                targets.clone()
            };
            let provider = make_provider(cli.provider, &cli.transcripts, cli.record.as_deref())?;
            let lib = open_library(&cli.library)?;
            let cfg = CreatorConfig {
                base_seed: cli.seed,
                concurrency: *concurrency,
                ..CreatorConfig::default()
            };
            let eval = run_goal_directed_eval(&targets, *trials, &lib, provider.as_ref(), &cfg)?;
            if cli.json {
                let per: Vec<_> = eval
                    .per_target
                    .iter()
                    .map(|t| json!({"target": t.target, "metrics": t.metrics}))
                    .collect();
                emit_json(out, &json!({"targets": per, "metrics": eval.metrics}))?;
            } else {
                writeln!(
                    out,
                    "{:<36} {:>7} {:>8} {:>10}",
                    "target", "syntax", "runtime", "completed"
                )?;
                for t in &eval.per_target {
                    let m = &t.metrics;
                    writeln!(
                        out,
                        "{:<36} {:>7.3} {:>8.3} {:>10.3}",
                        t.target, m.syntax_rate, m.runtime_rate, m.completed_rate
                    )?;
                }
                writeln!(out, "{}", metrics_line(&eval.metrics))?;
            }
            Ok(0)
        }
        Command::Library { command } => library(cli, command, out),
        Command::ExportFinetune { out: path } => {
            let lib = open_library(&cli.library)?;
            let n = export_finetune_dataset(&lib, path).with_context(|| format!("writing {}", path.display()))?;
            if cli.json {
                emit_json(out, &json!({"path": path, "records": n}))?;
            } else {
                writeln!(out, "wrote {n} records to {}", path.display())?;
            }
            Ok(0)
        }
        Command::Serve {
            bind,
            static_dir,
            cors_origins,
        } => {
            let config = crate::service::ServiceConfig {
                bind: *bind,
                library: cli.library.clone(),
                static_dir: static_dir.clone(),
                cors_origins: cors_origins.clone(),
                transcripts: cli.transcripts.clone(),
                provider: cli.provider,
            };
            crate::service::serve_blocking(config)?;
            Ok(0)
        }
    }
}

fn library(cli: &Cli, cmd: &LibraryCommand, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        LibraryCommand::Init => {
            let lib = Library::open(&cli.library)?;
            if !lib.is_empty() {
                bail!("{} already holds {} entries", cli.library.display(), lib.len());
            }
            let lib = Library::init_seeds(Some(cli.library.clone()))?;
            if cli.json {
                emit_json(out, &json!({"path": cli.library, "entries": lib.names()}))?;
            } else {
                writeln!(
                    out,
                    "initialized {} with {} seed tasks",
                    cli.library.display(),
                    lib.len()
                )?;
            }
        }
        LibraryCommand::Ls => {
            let lib = open_library(&cli.library)?;
            if cli.json {
                let rows: Vec<_> = lib
                    .entries()
                    .iter()
                    .map(|e| {
                        json!({
                            "name": e.name,
                            "description": e.description,
                            "cluster_id": e.cluster_id,
                            "verdict": e.verdict_status(),
                            "stage": e.verify.stage,
                            "provenance": e.provenance,
                        })
                    })
                    .collect();
                emit_json(out, &rows)?;
            } else {
                writeln!(out, "{:<40} {:<16} {:>7} {:<9}", "name", "stage", "cluster", "verdict")?;
                for e in lib.entries() {
                    let c = e.cluster_id.map_or("-".into(), |c| c.to_string());
                    writeln!(
                        out,
                        "{:<40} {:<16} {:>7} {:<9}",
                        e.name,
                        e.verify.stage,
                        c,
                        e.verdict_status()
                    )?;
                }
            }
        }
        LibraryCommand::Show { name } => {
            let lib = open_library(&cli.library)?;
            let Some(e) = lib.get(name) else {
                bail!("no task named `{name}` in {}", cli.library.display());
            };
            if cli.json {
                emit_json(out, e)?;
            } else {
                writeln!(out, "{}: {}", e.name, e.description)?;
                writeln!(
                    out,
                    "stage {}, verdict {}, created {}",
                    e.verify.stage,
                    e.verdict_status(),
                    e.created_at.to_rfc3339()
                )?;
                for v in &e.critic_votes {
                    writeln!(out, "critic {}: {}", if v.accept { "yes" } else { "no" }, v.reason)?;
                }
                writeln!(out)?;
                write!(out, "{}", e.dsl_source)?;
            }
        }
        LibraryCommand::Cluster { k } => {
            let mut lib = open_library(&cli.library)?;
            let c = lib.cluster(*k)?;
            if cli.json {
                let assignments: serde_json::Map<String, serde_json::Value> = lib
                    .entries()
                    .iter()
                    .map(|e| (e.name.clone(), json!(e.cluster_id)))
                    .collect();
                emit_json(
                    out,
                    &json!({"k": k, "iterations": c.iterations, "assignments": assignments}),
                )?;
            } else {
                for cluster in 0..*k {
                    let members: Vec<&str> = lib
                        .entries()
                        .iter()
                        .filter(|e| e.cluster_id == Some(cluster))
                        .map(|e| e.name.as_str())
                        .collect();
                    writeln!(out, "cluster {cluster}: {}", members.join(", "))?;
                }
            }
        }
        LibraryCommand::Map => {
            let lib = open_library(&cli.library)?;
            let proj = lib.project_2d().ok();
            let points = lib.map();
            if cli.json {
                emit_json(
                    out,
                    &json!({
                        "points": points,
                        "variance": proj.as_ref().map(|p| p.variance),
                        "total_variance": proj.as_ref().map(|p| p.total_variance),
                        "degenerate": proj.as_ref().is_none_or(|p| p.degenerate),
                    }),
                )?;
            } else {
                for p in &points {
                    let c = p.cluster.map_or("-".into(), |c| c.to_string());
                    writeln!(out, "{:<40} {:>9.4} {:>9.4} {:>3}", p.name, p.x, p.y, c)?;
                }
            }
        }
        LibraryCommand::Verdict {
            name,
            accept,
            reject: _,
            reviewer,
            seconds,
        } => {
            let mut lib = open_library(&cli.library)?;
            let e = lib.record_human_verdict(name, *accept, reviewer, *seconds)?;
            if cli.json {
                emit_json(
                    out,
                    &json!({"name": e.name, "verdict": e.verdict_status(), "human_verdict": e.human_verdict}),
                )?;
            } else {
                writeln!(out, "{}: {}", e.name, e.verdict_status())?;
            }
        }
    }
    Ok(0)
}

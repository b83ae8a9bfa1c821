//! The generation loop: propose a task description, implement it against
//! retrieved reference tasks, verify it, have three critics vote on it, and
//! admit it to the library.

pub mod prompts;
pub mod provider;

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dsl::{parse_task, render_canonical, Diagnostic, DiagnosticCode as Code, Span};
use crate::library::{CriticVote, DuplicateReport, Library, LibraryEntry, LibraryError, Provenance};
use crate::oracle::hex_digest;
use crate::pipeline::{batch_metrics, verify_task, BatchMetrics, StagedReport, VerifyOptions};
use crate::rng::SceneRng;

pub use prompts::{PromptBundle, Proposal};
pub use provider::{
    ChatRequest, HttpProvider, Message, MockProvider, Provider, ProviderConfig, ProviderError, RecordingProvider, Role,
    ScriptedProvider, StageTemperatures, Transcript,
};

pub const CRITIC_VOTES: usize = 3;

/// Targets for the goal-directed evaluation.
pub const HELD_OUT_TASKS: [&str; 10] = [
    "align-rainbow-along-line",
    "cylinder-in-colorful-container",
    "splitting-piles",
    "stack-cylinder-pyramid",
    "build-pyramid-in-zone",
    "block-on-cylinder-on-pallet",
    "align-cylinder-in-zone",
    "construct-symmetric-block-wall",
    "insert-blue-on-red-cylinder",
    "rainbow-pyramid",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GenerationMode {
    Exploratory,
    GoalDirected { target_name: String },
}

impl GenerationMode {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Exploratory => "exploratory",
            Self::GoalDirected { .. } => "goal_directed",
        }
    }
}

/// How critic votes combine into a decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteRule {
    Unanimous,
    AtLeast(usize),
}

impl VoteRule {
    pub fn decide(self, votes: &[bool]) -> bool {
        let yes = votes.iter().filter(|&&v| v).count();
        match self {
            Self::Unanimous => !votes.is_empty() && yes == votes.len(),
            Self::AtLeast(n) => yes >= n,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CreatorConfig {
    pub temperatures: StageTemperatures,
    pub max_retries: usize,
    /// Reference tasks per prompt.
    pub references: usize,
    /// Attempts in flight at once.
    pub concurrency: usize,
    pub verify: VerifyOptions,
    pub prompt_token_budget: usize,
    /// Attempt `i` of a batch sends its proposal and implementation
    /// requests with seed `base_seed + i`.
    pub base_seed: u64,
    pub vote_rule: VoteRule,
    /// Let the model choose the implementation references from the library
    /// names instead of taking the nearest entries.
    pub llm_pick_refs: bool,
}

impl Default for CreatorConfig {
    fn default() -> Self {
        Self {
            temperatures: StageTemperatures::default(),
            max_retries: 3,
            references: 4,
            concurrency: 4,
            verify: VerifyOptions::default(),
            prompt_token_budget: 12_000,
            base_seed: 0,
            vote_rule: VoteRule::Unanimous,
            llm_pick_refs: false,
        }
    }
}

impl CreatorConfig {
    pub fn from_provider(p: &ProviderConfig) -> Self {
        Self {
            temperatures: p.temperatures,
            max_retries: p.max_retries,
            ..Self::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum CreatorError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("reply still unusable after {attempts} tries: {reason}")]
    MalformedReply { attempts: usize, reason: String },
    #[error("reply has no code block")]
    NoCodeBlock,
    #[error("target list is empty")]
    EmptyTargets,
    #[error(transparent)]
    Library(#[from] LibraryError),
}

impl CreatorError {
    pub fn code(&self) -> Code {
        match self {
            Self::Provider(_) => Code::ProviderError,
            Self::MalformedReply { .. } => Code::MalformedReply,
            Self::NoCodeBlock => Code::NoCodeBlock,
            Self::EmptyTargets | Self::Library(_) => Code::ProviderError,
        }
    }
}

fn reference_summary(e: &LibraryEntry) -> String {
    let mut kinds: Vec<&str> = Vec::new();
    if let Ok(spec) = parse_task(&e.dsl_source) {
        for a in &spec.assets {
            if !kinds.contains(&a.kind.as_str()) {
                kinds.push(a.kind.as_str());
            }
        }
    }
    format!(
        "task-name: {}\ntask-description: {}\nassets-used: [{}]",
        e.name,
        e.description,
        kinds.join(", ")
    )
}

/// Reference tasks for a description prompt. Exploratory attempts draw a
/// seeded sample; goal-directed ones take the entries nearest the target name.
fn proposal_references<'a>(mode: &GenerationMode, lib: &'a Library, k: usize, seed: u64) -> Vec<&'a LibraryEntry> {
    match mode {
        GenerationMode::Exploratory => {
            let mut pool: Vec<&LibraryEntry> = lib.active().collect();
            let mut rng = SceneRng::new(seed);
            for i in (1..pool.len()).rev() {
                let j = (rng.next_u64() % (i as u64 + 1)) as usize;
                pool.swap(i, j);
            }
            pool.truncate(k);
            pool
        }
        GenerationMode::GoalDirected { target_name } => {
            let q = lib.embed(&target_name.replace('-', " "));
            lib.nearest(&q, k).into_iter().map(|(e, _)| e).collect()
        }
    }
}

pub fn description_bundle(mode: &GenerationMode, lib: &Library, cfg: &CreatorConfig, seed: u64) -> PromptBundle {
    let (system, instruction) = match mode {
        GenerationMode::Exploratory => (prompts::SYSTEM.to_string(), prompts::DESCRIPTION.to_string()),
        GenerationMode::GoalDirected { target_name } => (
            prompts::fill(prompts::SYSTEM_GOAL, &[("target", target_name)]),
            prompts::fill(prompts::DESCRIPTION_GOAL, &[("target", target_name)]),
        ),
    };
    PromptBundle {
        system,
        assets: prompts::asset_catalog(),
        references: proposal_references(mode, lib, cfg.references, seed)
            .into_iter()
            .map(reference_summary)
            .collect(),
        past_names: lib.active().map(|e| e.name.clone()).collect(),
        bad_examples: prompts::BAD_EXAMPLES.into(),
        rules: prompts::RULES.into(),
        instruction,
    }
}

pub fn propose_description(
    mode: &GenerationMode,
    lib: &Library,
    provider: &dyn Provider,
    cfg: &CreatorConfig,
    seed: u64,
) -> Result<Proposal, CreatorError> {
    let bundle = description_bundle(mode, lib, cfg, seed);
    let mut messages = vec![
        Message::system(bundle.system.clone()),
        Message::user(bundle.render_user(cfg.prompt_token_budget)),
    ];
    let mut tries = 0;
    loop {
        tries += 1;
        let req = ChatRequest {
            messages: messages.clone(),
            temperature: cfg.temperatures.description,
            seed,
        };
        let reply = provider.complete(&req)?;
        let parsed = prompts::parse_proposal(&reply).and_then(|p| match mode {
            GenerationMode::GoalDirected { target_name } if &p.task_name == target_name => Err(format!(
                "the new task must be a simpler helper task, not `{target_name}` itself"
            )),
            _ => Ok(p),
        });
        match parsed {
            Ok(p) => return Ok(p),
            Err(reason) if tries > cfg.max_retries => {
                return Err(CreatorError::MalformedReply {
                    attempts: tries,
                    reason,
                })
            }
            Err(reason) => {
                log::info!("description reply rejected ({reason}); retry {tries}");
                messages.push(Message::assistant(reply));
                messages.push(Message::user(format!(
                    "Retry {tries}: your answer could not be used because {reason}. Reply again with only the dictionary with keys \"task-name\", \"task-description\" and \"assets-used\"."
                )));
            }
        }
    }
}

/// References for the implementation prompt: the entries nearest the
/// proposed description, or with `llm_pick_refs` the entries the model
/// names, topped up from the nearest ones when it names fewer than asked.
pub fn implementation_references<'a>(
    proposal: &Proposal,
    lib: &'a Library,
    provider: &dyn Provider,
    cfg: &CreatorConfig,
    seed: u64,
) -> Result<Vec<&'a LibraryEntry>, CreatorError> {
    let nearest: Vec<&LibraryEntry> = lib
        .nearest(&lib.embed(&proposal.task_description), cfg.references)
        .into_iter()
        .map(|(e, _)| e)
        .collect();
    if !cfg.llm_pick_refs {
        return Ok(nearest);
    }
    let names: Vec<String> = lib.active().map(|e| e.name.clone()).collect();
    let user = prompts::fill(
        prompts::PICK_REFS,
        &[
            ("task", &proposal.summary()),
            ("names", &names.join("\n")),
            ("k", &cfg.references.to_string()),
        ],
    );
    let reply = provider.complete(&ChatRequest {
        messages: vec![Message::system(prompts::SYSTEM), Message::user(user)],
        temperature: cfg.temperatures.implementation,
        seed,
    })?;
    let mut refs: Vec<&LibraryEntry> = prompts::parse_picked_names(&reply, &names)
        .into_iter()
        .filter_map(|n| lib.get(n))
        .take(cfg.references)
        .collect();
    for e in nearest {
        if refs.len() >= cfg.references {
            break;
        }
        if !refs.iter().any(|r| r.name == e.name) {
            refs.push(e);
        }
    }
    Ok(refs)
}

pub fn implementation_request(
    proposal: &Proposal,
    references: &[&LibraryEntry],
    cfg: &CreatorConfig,
    seed: u64,
) -> ChatRequest {
    let refs: Vec<String> = references
        .iter()
        .map(|e| format!("reference task `{}`:\n```task\n{}```", e.name, e.dsl_source))
        .collect();
    let user = prompts::fill(
        prompts::IMPLEMENTATION,
        &[
            ("name", &proposal.task_name),
            ("references", &refs.join("\n\n")),
            ("task", &proposal.summary().replace('\n', "; ")),
        ],
    );
    ChatRequest {
        messages: vec![Message::system(prompts::SYSTEM), Message::user(user)],
        temperature: cfg.temperatures.implementation,
        seed,
    }
}

/// Returns the first code block of the reply, unchanged.
pub fn implement_task(
    proposal: &Proposal,
    references: &[&LibraryEntry],
    provider: &dyn Provider,
    cfg: &CreatorConfig,
    seed: u64,
) -> Result<String, CreatorError> {
    let reply = provider.complete(&implementation_request(proposal, references, cfg, seed))?;
    prompts::extract_code_block(&reply).ok_or(CreatorError::NoCodeBlock)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticReview {
    pub accept: bool,
    pub votes: Vec<CriticVote>,
}

pub fn critic_requests(
    proposal: &Proposal,
    source: &str,
    report: &StagedReport,
    lib: &Library,
    cfg: &CreatorConfig,
) -> Vec<ChatRequest> {
    let names: Vec<String> = lib.active().map(|e| e.name.clone()).collect();
    let verification = format!(
        "stage {}; oracle rewards {:?} on seeds {:?}",
        report.stage_label(),
        report.per_seed_scores,
        report.seeds_tried
    );
    let user = prompts::fill(
        prompts::CRITIC,
        &[
            ("task", &proposal.summary()),
            ("code", &format!("```task\n{source}```")),
            ("verification", &verification),
            ("names", &names.join("\n")),
        ],
    );
    (0..CRITIC_VOTES as u64)
        .map(|seed| ChatRequest {
            messages: vec![Message::system(prompts::SYSTEM), Message::user(user.clone())],
            temperature: cfg.temperatures.critic,
            seed,
        })
        .collect()
}

/// Asks the critics in parallel. Any failed or unreadable vote aborts the
/// whole review so no decision is made on partial votes.
pub fn critic_review(
    proposal: &Proposal,
    source: &str,
    report: &StagedReport,
    lib: &Library,
    provider: &dyn Provider,
    cfg: &CreatorConfig,
) -> Result<CriticReview, CreatorError> {
    let votes = critic_requests(proposal, source, report, lib, cfg)
        .par_iter()
        .map(|req| {
            let reply = provider.complete(req)?;
            let (accept, reason) = prompts::parse_vote(&reply).ok_or_else(|| CreatorError::MalformedReply {
                attempts: 1,
                reason: "critic reply has no verdict".into(),
            })?;
            Ok(CriticVote {
                accept,
                reason,
                transcript_digest: hex_digest(&Sha256::digest(reply.as_bytes())),
            })
        })
        .collect::<Result<Vec<_>, CreatorError>>()?;
    let flags: Vec<bool> = votes.iter().map(|v| v.accept).collect();
    Ok(CriticReview {
        accept: cfg.vote_rule.decide(&flags),
        votes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptOutcome {
    Accepted,
    CriticRejected,
    Duplicate,
    /// Failed a verification stage.
    Unverified,
    /// Verified, no critic consulted.
    Verified,
    /// Critic review could not complete; eligible for a later retry.
    Parked,
    /// Proposal or implementation failed before verification.
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub index: usize,
    pub seed: u64,
    pub mode: GenerationMode,
    pub proposal: Option<Proposal>,
    pub source: Option<String>,
    pub report: StagedReport,
    pub duplicate: Option<DuplicateReport>,
    pub critic: Option<CriticReview>,
    pub outcome: AttemptOutcome,
    pub error: Option<String>,
}

fn failed_attempt(
    index: usize,
    seed: u64,
    mode: &GenerationMode,
    proposal: Option<Proposal>,
    err: CreatorError,
) -> AttemptRecord {
    let name = proposal.as_ref().map(|p| p.task_name.clone()).unwrap_or_default();
    AttemptRecord {
        index,
        seed,
        mode: mode.clone(),
        report: StagedReport::failed(name, Diagnostic::error(err.code(), Span::default(), err.to_string())),
        proposal,
        source: None,
        duplicate: None,
        critic: None,
        outcome: AttemptOutcome::Failed,
        error: Some(err.to_string()),
    }
}

/// One attempt against a fixed library snapshot. Never writes to the library.
pub fn run_attempt(
    mode: &GenerationMode,
    index: usize,
    seed: u64,
    lib: &Library,
    provider: &dyn Provider,
    cfg: &CreatorConfig,
    with_critic: bool,
) -> AttemptRecord {
    let proposal = match propose_description(mode, lib, provider, cfg, seed) {
        Ok(p) => p,
        Err(e) => return failed_attempt(index, seed, mode, None, e),
    };
    if lib.get(&proposal.task_name).is_some() {
        let msg = format!("task `{}` is already in the library", proposal.task_name);
        return AttemptRecord {
            index,
            seed,
            mode: mode.clone(),
            report: StagedReport::failed(
                proposal.task_name.clone(),
                Diagnostic::error(Code::DuplicateTask, Span::default(), msg.clone()),
            ),
            proposal: Some(proposal),
            source: None,
            duplicate: None,
            critic: None,
            outcome: AttemptOutcome::Duplicate,
            error: Some(msg),
        };
    }
    let references = match implementation_references(&proposal, lib, provider, cfg, seed) {
        Ok(r) => r,
        Err(e) => return failed_attempt(index, seed, mode, Some(proposal), e),
    };
    let source = match implement_task(&proposal, &references, provider, cfg, seed) {
        Ok(s) => s,
        Err(e) => return failed_attempt(index, seed, mode, Some(proposal), e),
    };
    let mut report = verify_task(&source, &cfg.verify);
    let mut outcome = AttemptOutcome::Unverified;
    let (mut duplicate, mut critic, mut error) = (None, None, None);
    if report.completed_ok {
        let canonical = render_canonical(&parse_task(&source).expect("verified source parses"));
        let dup = lib.duplicate_check(&canonical, &report.task_name);
        if dup.is_duplicate {
            report.diagnostics.push(Diagnostic::warning(
                Code::DuplicateTask,
                Span::default(),
                format!(
                    "too similar to `{}` (cosine {:.3})",
                    dup.nearest_names.first().map_or("", String::as_str),
                    dup.max_similarity
                ),
            ));
            outcome = AttemptOutcome::Duplicate;
        } else if !with_critic {
            outcome = AttemptOutcome::Verified;
        } else {
            match critic_review(&proposal, &source, &report, lib, provider, cfg) {
                Ok(review) => {
                    outcome = if review.accept {
                        AttemptOutcome::Accepted
                    } else {
                        AttemptOutcome::CriticRejected
                    };
                    critic = Some(review);
                }
                Err(e) => {
                    outcome = AttemptOutcome::Parked;
                    error = Some(e.to_string());
                }
            }
        }
        duplicate = Some(dup);
    }
    AttemptRecord {
        index,
        seed,
        mode: mode.clone(),
        proposal: Some(proposal),
        source: Some(source),
        report,
        duplicate,
        critic,
        outcome,
        error,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateOutcome {
    pub attempts: Vec<AttemptRecord>,
    /// Names added to the library, in attempt order.
    pub accepted: Vec<String>,
    pub metrics: BatchMetrics,
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool")
}

/// Runs `budget` attempts against the library as it stands, then adds the
/// accepted candidates in attempt order. Every attempt sees the same
/// snapshot, so results do not depend on scheduling.
pub fn generate(
    mode: &GenerationMode,
    budget: usize,
    lib: &mut Library,
    provider: &dyn Provider,
    cfg: &CreatorConfig,
) -> Result<GenerateOutcome, CreatorError> {
    let snapshot: &Library = lib;
    let mut attempts: Vec<AttemptRecord> = pool(cfg.concurrency).install(|| {
        (0..budget)
            .into_par_iter()
            .map(|i| run_attempt(mode, i, cfg.base_seed + i as u64, snapshot, provider, cfg, true))
            .collect()
    });
    let mut accepted = Vec::new();
    for rec in attempts.iter_mut().filter(|r| r.outcome == AttemptOutcome::Accepted) {
        let provenance = Provenance::Generated {
            model_id: provider.model_id().into(),
            mode: mode.label().into(),
        };
        let mut entry = lib.make_entry(rec.source.as_deref().unwrap(), provenance, &rec.report)?;
        entry.critic_votes = rec.critic.as_ref().map(|c| c.votes.clone()).unwrap_or_default();
        let name = entry.name.clone();
        match lib.add_entry(entry) {
            Ok(()) => accepted.push(name),
            Err(LibraryError::DuplicateName(n)) => {
                rec.outcome = AttemptOutcome::Duplicate;
                rec.error = Some(format!("task `{n}` was accepted earlier in this batch"));
            }
            Err(e) => return Err(e.into()),
        }
    }
    let reports: Vec<StagedReport> = attempts.iter().map(|a| a.report.clone()).collect();
    Ok(GenerateOutcome {
        metrics: batch_metrics(&reports),
        attempts,
        accepted,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetEval {
    pub target: String,
    pub attempts: Vec<AttemptRecord>,
    pub metrics: BatchMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub per_target: Vec<TargetEval>,
    pub metrics: BatchMetrics,
}

/// Goal-directed generation toward each target, `trials` times each. No
/// critic runs and nothing is added to the library; trial `t` of target
/// `j` uses seed `base_seed + j * trials + t`.
pub fn run_goal_directed_eval(
    targets: &[String],
    trials: usize,
    lib: &Library,
    provider: &dyn Provider,
    cfg: &CreatorConfig,
) -> Result<EvalOutcome, CreatorError> {
    if targets.is_empty() {
        return Err(CreatorError::EmptyTargets);
    }
    let jobs: Vec<(usize, usize)> = (0..targets.len())
        .flat_map(|j| (0..trials).map(move |t| (j, t)))
        .collect();
    let records: Vec<AttemptRecord> = pool(cfg.concurrency).install(|| {
        jobs.par_iter()
            .map(|&(j, t)| {
                let mode = GenerationMode::GoalDirected {
                    target_name: targets[j].clone(),
                };
                let i = j * trials + t;
                run_attempt(&mode, i, cfg.base_seed + i as u64, lib, provider, cfg, false)
            })
            .collect()
    });
    let mut per_target = Vec::new();
    for (j, target) in targets.iter().enumerate() {
        let attempts: Vec<AttemptRecord> = records[j * trials..(j + 1) * trials].to_vec();
        let reports: Vec<StagedReport> = attempts.iter().map(|a| a.report.clone()).collect();
        per_target.push(TargetEval {
            target: target.clone(),
            metrics: batch_metrics(&reports),
            attempts,
        });
    }
    let all: Vec<StagedReport> = records.iter().map(|a| a.report.clone()).collect();
    Ok(EvalOutcome {
        per_target,
        metrics: batch_metrics(&all),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneRecord {
    pub prompt: String,
    pub completion: String,
}

/// One record per entry not rejected by a reviewer, ordered by name.
pub fn finetune_records(lib: &Library) -> Vec<FinetuneRecord> {
    let mut entries: Vec<&LibraryEntry> = lib.active().collect();
    entries.sort_by(|a, b| a.name.cmp(&b.name));
    entries
        .into_iter()
        .map(|e| FinetuneRecord {
            prompt: prompts::fill(prompts::FINETUNE, &[("name", &e.name)])
                .trim_end()
                .to_string(),
            completion: format!("```task\n{}```", e.dsl_source),
        })
        .collect()
}

pub fn export_finetune_dataset(lib: &Library, path: &Path) -> io::Result<usize> {
    let records = finetune_records(lib);
    if records.is_empty() {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "library has no exportable entries",
        ));
    }
    let mut out = Vec::new();
    for r in &records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    f.sync_all()?;
    Ok(records.len())
}

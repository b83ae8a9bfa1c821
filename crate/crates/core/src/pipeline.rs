//! Staged verification: syntax-correct, runtime-verified, task-completed.
//! Each stage only runs when the previous one passed.

use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsl::{
    has_errors, parse_task, render_canonical, validate_static, Diagnostic, DiagnosticCode as Code, Span, TaskSpec,
};
use crate::oracle::{run_built, EpisodeOptions, Outcome};
use crate::rng::mix64;
use crate::world::build_scene;

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub n_seeds: usize,
    pub quorum: usize,
    pub episode: EpisodeOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            n_seeds: 5,
            quorum: 3,
            episode: EpisodeOptions::default(),
        }
    }
}

impl VerifyOptions {
    pub fn new(n_seeds: usize, quorum: usize) -> Self {
        assert!(n_seeds >= 1, "n_seeds must be at least 1");
        assert!((1..=n_seeds).contains(&quorum), "quorum must be in 1..=n_seeds");
        Self {
            n_seeds,
            quorum,
            ..Self::default()
        }
    }

    pub fn with_time_budget(mut self, budget: Duration) -> Self {
        self.episode.time_budget = budget;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagedReport {
    /// Empty when the source did not get far enough to name the task.
    pub task_name: String,
    pub syntax_ok: bool,
    pub runtime_ok: bool,
    pub completed_ok: bool,
    pub diagnostics: Vec<Diagnostic>,
    pub seeds_tried: Vec<u64>,
    pub per_seed_scores: Vec<f64>,
    /// Scenes built while producing this report.
    pub scene_builds: usize,
    pub wall_time_ms: u64,
}

impl StagedReport {
    /// A report for a candidate that never reached verification.
    pub fn failed(task_name: impl Into<String>, diagnostic: Diagnostic) -> Self {
        Self {
            task_name: task_name.into(),
            syntax_ok: false,
            runtime_ok: false,
            completed_ok: false,
            diagnostics: vec![diagnostic],
            seeds_tried: Vec::new(),
            per_seed_scores: Vec::new(),
            scene_builds: 0,
            wall_time_ms: 0,
        }
    }

    /// 0 completed, 1 runtime-verified only, 2 syntax-correct only, 3 failed.
    pub fn exit_code(&self) -> i32 {
        match (self.syntax_ok, self.runtime_ok, self.completed_ok) {
            (true, true, true) => 0,
            (true, true, false) => 1,
            (true, false, _) => 2,
            (false, _, _) => 3,
        }
    }

    pub fn stage_label(&self) -> &'static str {
        match self.exit_code() {
            0 => "task-completed",
            1 => "runtime-verified",
            2 => "syntax-correct",
            _ => "failed",
        }
    }
}

/// Seeds follow from the canonical source, so a report can be reproduced
/// from the task text alone.
pub fn derive_seeds(canonical: &str, n: usize) -> Vec<u64> {
    let digest = Sha256::digest(canonical.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    let base = u64::from_le_bytes(head);
    (0..n as u64).map(|i| mix64(base ^ mix64(i))).collect()
}

fn outcome_code(o: Outcome) -> Code {
    match o {
        Outcome::Done | Outcome::Stuck | Outcome::NoProgress => Code::OracleStuck,
        Outcome::StepBudgetExhausted => Code::StepBudgetExhausted,
        Outcome::Timeout => Code::EpisodeTimeout,
    }
}

pub fn verify_task(text: &str, opts: &VerifyOptions) -> StagedReport {
    let started = Instant::now();
    let mut report = StagedReport {
        task_name: String::new(),
        syntax_ok: false,
        runtime_ok: false,
        completed_ok: false,
        diagnostics: Vec::new(),
        seeds_tried: Vec::new(),
        per_seed_scores: Vec::new(),
        scene_builds: 0,
        wall_time_ms: 0,
    };
    match parse_task(text) {
        Err(diags) => report.diagnostics = diags,
        Ok(spec) => {
            report.task_name = spec.name.clone();
            report.diagnostics = validate_static(&spec);
            report.syntax_ok = !has_errors(&report.diagnostics);
            if report.syntax_ok {
                run_stages(&spec, opts, &mut report);
            }
        }
    }
    report.wall_time_ms = started.elapsed().as_millis() as u64;
    report
}

fn run_stages(spec: &TaskSpec, opts: &VerifyOptions, report: &mut StagedReport) {
    let seeds = derive_seeds(&render_canonical(spec), opts.n_seeds);
    report.seeds_tried = seeds.clone();

    let built: Vec<_> = seeds
        .par_iter()
        .map(|&s| (Instant::now(), build_scene(spec, s)))
        .collect();
    report.scene_builds = built.len();
    let mut worlds = Vec::with_capacity(built.len());
    for (t0, b) in built {
        match b {
            Ok(w) => worlds.push((t0, w)),
            Err(diags) => {
                for d in diags {
                    if !report.diagnostics.contains(&d) {
                        report.diagnostics.push(d);
                    }
                }
            }
        }
    }
    report.runtime_ok = worlds.len() == seeds.len();
    if !report.runtime_ok {
        return;
    }

    let episodes: Vec<_> = worlds
        .into_par_iter()
        .map(|(t0, w)| run_built(spec, w, &opts.episode, t0, |_| {}))
        .collect();
    report.per_seed_scores = episodes.iter().map(|e| e.final_reward.total).collect();
    let successes = episodes.iter().filter(|e| e.success).count();
    report.completed_ok = successes >= opts.quorum;
    for ep in episodes.iter().filter(|e| !e.success) {
        let msg = format!(
            "seed {}: oracle stopped ({:?}) at reward {:.3} after {} steps",
            ep.seed,
            ep.outcome,
            ep.final_reward.total,
            ep.steps.len()
        );
        let code = outcome_code(ep.outcome);
        report.diagnostics.push(if report.completed_ok {
            Diagnostic::warning(code, Span::default(), msg)
        } else {
            Diagnostic::error(code, Span::default(), msg)
        });
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchMetrics {
    pub n_tasks: usize,
    pub syntax_rate: f64,
    pub runtime_rate: f64,
    pub completed_rate: f64,
}

impl BatchMetrics {
    pub fn triple(&self) -> (f64, f64, f64) {
        (self.syntax_rate, self.runtime_rate, self.completed_rate)
    }
}

pub fn batch_metrics(reports: &[StagedReport]) -> BatchMetrics {
    let n = reports.len();
    let rate = |f: fn(&StagedReport) -> bool| {
        if n == 0 {
            0.0
        } else {
            reports.iter().filter(|r| f(r)).count() as f64 / n as f64
        }
    };
    BatchMetrics {
        n_tasks: n,
        syntax_rate: rate(|r| r.syntax_ok),
        runtime_rate: rate(|r| r.runtime_ok),
        completed_rate: rate(|r| r.completed_ok),
    }
}

/// Categories of recurring task-code failures, numbered as in the error
/// book, plus failures that only exist in the DSL.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Book(u8),
    DslSpecific,
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Book(n) => write!(f, "{n}"),
            Self::DslSpecific => f.write_str("DSL_SPECIFIC"),
        }
    }
}

/// Error-book entries. Categories 6 (index out of bounds on a pose tuple)
/// and 7 (unfilled asset path templates) have no DSL counterpart: the
/// grammar has neither indexing nor file paths.
pub const ERROR_BOOK: [(u8, &str); 10] = [
    (1, "using assets that do not exist"),
    (2, "ambiguous language descriptions as goals"),
    (3, "matches matrix has wrong dimensions"),
    (4, "vector dimension problems in sizes or poses"),
    (5, "objects too large to stack or place"),
    (6, "accessing a pose component out of bounds"),
    (7, "asset path templates left unfilled"),
    (8, "misusing the end effector"),
    (9, "random pose used for a target"),
    (10, "language-motion inconsistency"),
];

pub fn category_of(code: Code) -> ErrorCategory {
    use ErrorCategory::*;
    match code {
        Code::UnknownKind => Book(1),
        Code::AmbiguousLanguageGoal => Book(2),
        Code::MatchesShape | Code::MatchesEmptyRow => Book(3),
        Code::SizeArity | Code::PoseArity => Book(4),
        Code::OversizedObject | Code::RuntimeNoPose | Code::InvalidSize => Book(5),
        Code::EffectorMisuse => Book(8),
        Code::RandomTargetPose => Book(9),
        Code::LanguageMotionInconsistency => Book(10),
        Code::ParseError
        | Code::UnknownColor
        | Code::DuplicateId
        | Code::UnresolvedReference
        | Code::RewardSum
        | Code::RewardRange
        | Code::StepBudget
        | Code::GoalObjFixed
        | Code::ZoneTargetKind
        | Code::InvalidSymmetry
        | Code::RepeatedGoalObject
        | Code::RuntimeAnchorUnplaced
        | Code::RuntimeOutOfBounds
        | Code::OracleStuck
        | Code::StepBudgetExhausted
        | Code::EpisodeTimeout
        | Code::ProviderError
        | Code::MalformedReply
        | Code::NoCodeBlock
        | Code::DuplicateTask => DslSpecific,
    }
}

/// One category per diagnostic, in diagnostic order.
pub fn classify_failure(report: &StagedReport) -> Vec<ErrorCategory> {
    report.diagnostics.iter().map(|d| category_of(d.code)).collect()
}

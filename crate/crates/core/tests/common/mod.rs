//! The scripted provider behind the recorded mock transcripts, and the
//! exchanges that get recorded. Shared by the transcript test and the
//! acceptance suite.
#![allow(dead_code)]

use std::fs;
use std::path::PathBuf;

use gensim_core::creator::prompts::{parse_proposal, Proposal};
use gensim_core::creator::provider::{MockProvider, Provider, ProviderError, ScriptedProvider};
use gensim_core::creator::{
    critic_review, generate, implement_task, propose_description, run_goal_directed_eval, CreatorConfig, CriticReview,
    EvalOutcome, GenerateOutcome, GenerationMode, HELD_OUT_TASKS,
};
use gensim_core::library::Library;
use gensim_core::pipeline::{verify_task, StagedReport};
use gensim_core::seeds::seed_source;

pub mod fuzz;
pub mod goal_oracle;

/// Seed of the stand-alone exploratory proposal that comes back as `build-car`.
pub const BUILD_CAR_SEED: u64 = 100;
pub const EVAL_TRIALS: usize = 3;
pub const REARRANGE: &str = "color-coordinated-insertion-rearrange";

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn corpus_file(name: &str, file: &str) -> String {
    fs::read_to_string(fixtures().join("corpus").join(name).join(file))
        .unwrap_or_else(|e| panic!("corpus/{name}/{file}: {e}"))
}

pub fn attempt_names() -> Vec<String> {
    fs::read_to_string(fixtures().join("corpus/attempts.txt"))
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

pub fn mock() -> MockProvider {
    MockProvider::from_dir(fixtures().join("transcripts")).unwrap()
}

fn quoted_after<'a>(text: &'a str, marker: &str) -> Option<&'a str> {
    let rest = &text[text.find(marker)? + marker.len()..];
    Some(&rest[..rest.find(['"', '\n', ';'])?])
}

/// Answers from the authored corpus. Description replies are picked by
/// seed, implementation and critic replies by the task name in the prompt.
pub fn scripted() -> ScriptedProvider {
    let names = attempt_names();
    ScriptedProvider::new(move |req| {
        let user = req.last_user();
        if let Some(name) = quoted_after(user, "write the code for the task \"") {
            if let Some(src) = seed_source(name) {
                return Ok(format!("```task\n{src}```\n"));
            }
            return Ok(corpus_file(name, "implementation.txt"));
        }
        if let Some(name) = quoted_after(user, "your task:\ntask-name: ") {
            return Ok(corpus_file(name, &format!("critic-{}.txt", req.seed)));
        }
        if req.seed == BUILD_CAR_SEED {
            return Ok(corpus_file("build-car", "proposal.txt"));
        }
        let name = names
            .get(req.seed as usize % names.len())
            .ok_or_else(|| ProviderError::Scripted("empty corpus".into()))?;
        Ok(corpus_file(name, "proposal.txt"))
    })
}

pub fn rearrange_inputs(cfg: &CreatorConfig) -> (Proposal, String, StagedReport) {
    let proposal = parse_proposal(&corpus_file(REARRANGE, "proposal.txt")).unwrap();
    let reply = corpus_file(REARRANGE, "implementation.txt");
    let source = gensim_core::creator::prompts::extract_code_block(&reply).unwrap();
    let report = verify_task(&source, &cfg.verify);
    (proposal, source, report)
}

pub struct Exchanges {
    pub batch: GenerateOutcome,
    pub batch_library: Library,
    pub eval: EvalOutcome,
    pub build_car: Proposal,
    pub insertion_code: String,
    pub rearrange: CriticReview,
}

/// Every exchange that has a recorded transcript, in a fixed order.
pub fn run_exchanges(provider: &dyn Provider) -> Exchanges {
    let cfg = CreatorConfig::default();
    let mut batch_library = Library::init_seeds(None).unwrap();
    let batch = generate(&GenerationMode::Exploratory, 10, &mut batch_library, provider, &cfg).unwrap();

    let seeds = Library::init_seeds(None).unwrap();
    let targets: Vec<String> = HELD_OUT_TASKS.iter().map(|s| s.to_string()).collect();
    let eval = run_goal_directed_eval(&targets, EVAL_TRIALS, &seeds, provider, &cfg).unwrap();

    let build_car = propose_description(&GenerationMode::Exploratory, &seeds, provider, &cfg, BUILD_CAR_SEED).unwrap();

    let insertion = seeds.get("color-ordered-insertion").unwrap();
    let proposal = Proposal {
        task_name: insertion.name.clone(),
        task_description: insertion.description.clone(),
        assets_used: vec!["ell".into(), "fixture".into()],
    };
    let refs: Vec<_> = seeds
        .nearest(&seeds.embed(&proposal.task_description), cfg.references)
        .into_iter()
        .map(|(e, _)| e)
        .collect();
    let insertion_code = implement_task(&proposal, &refs, provider, &cfg, 0).unwrap();

    let (p, source, report) = rearrange_inputs(&cfg);
    let rearrange = critic_review(&p, &source, &report, &seeds, provider, &cfg).unwrap();

    Exchanges {
        batch,
        batch_library,
        eval,
        build_car,
        insertion_code,
        rearrange,
    }
}

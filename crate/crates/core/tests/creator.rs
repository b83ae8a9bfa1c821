mod common;

use std::fs;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use common::{corpus_file, fixtures, scripted};
use gensim_core::creator::prompts::{ASSETS_HEADER, BAD_HEADER, PAST_HEADER, REFERENCES_HEADER, RULES_HEADER};
use gensim_core::creator::provider::{ChatRequest, Provider, ProviderError, ScriptedProvider};
use gensim_core::creator::{
    description_bundle, export_finetune_dataset, finetune_records, generate, implement_task, propose_description,
    run_attempt, run_goal_directed_eval, AttemptOutcome, CreatorConfig, CreatorError, GenerationMode,
};
use gensim_core::dsl::DiagnosticCode as Code;
use gensim_core::library::{Library, Provenance};
use gensim_core::pipeline::{verify_task, VerifyOptions};
use gensim_core::seeds::seed_source;

fn seeds() -> Library {
    Library::init_seeds(None).unwrap()
}

fn is_description(req: &ChatRequest) -> bool {
    req.temperature == 1.0
}

fn is_critic(req: &ChatRequest) -> bool {
    req.temperature == 0.5
}

#[test]
fn malformed_description_gives_up_after_retries() {
    let p = ScriptedProvider::new(|_| Ok("I would like to build a car.".into()));
    let cfg = CreatorConfig::default();
    let err = propose_description(&GenerationMode::Exploratory, &seeds(), &p, &cfg, 0).unwrap_err();
    assert!(matches!(err, CreatorError::MalformedReply { attempts: 4, .. }), "{err}");
    assert_eq!(err.code(), Code::MalformedReply);
    assert_eq!(p.calls(), 1 + cfg.max_retries);
}

#[test]
fn retry_carries_the_bad_reply_and_feedback() {
    let n = Arc::new(AtomicUsize::new(0));
    let seen = n.clone();
    let p = ScriptedProvider::new(move |req| {
        if seen.fetch_add(1, Ordering::SeqCst) == 0 {
            return Ok("{'task-name': 'Bad Name'}".into());
        }
        assert_eq!(req.messages.len(), 4);
        assert!(req.last_user().starts_with("Retry 1:"));
        Ok(corpus_file("stack-blocks-on-stand", "proposal.txt"))
    });
    let got = propose_description(&GenerationMode::Exploratory, &seeds(), &p, &CreatorConfig::default(), 3).unwrap();
    assert_eq!(got.task_name, "stack-blocks-on-stand");
    assert_eq!(n.load(Ordering::SeqCst), 2);
}

#[test]
fn goal_directed_may_not_return_the_target() {
    let p = ScriptedProvider::new(|_| {
        Ok(r#"{"task-name": "rainbow-pyramid", "task-description": "x", "assets-used": ["block"]}"#.into())
    });
    let mode = GenerationMode::GoalDirected {
        target_name: "rainbow-pyramid".into(),
    };
    let err = propose_description(&mode, &seeds(), &p, &CreatorConfig::default(), 0).unwrap_err();
    assert!(matches!(err, CreatorError::MalformedReply { .. }));
}

#[test]
fn existing_name_short_circuits_before_implementation() {
    let p = ScriptedProvider::new(|req| {
        assert!(is_description(req), "only the description stage may be called");
        Ok(corpus_file("build-car", "proposal.txt"))
    });
    let rec = run_attempt(
        &GenerationMode::Exploratory,
        0,
        0,
        &seeds(),
        &p,
        &CreatorConfig::default(),
        true,
    );
    assert_eq!(rec.outcome, AttemptOutcome::Duplicate);
    assert_eq!(p.calls(), 1);
    assert_eq!(rec.report.diagnostics[0].code, Code::DuplicateTask);
    assert!(!rec.report.syntax_ok);
}

#[test]
fn renamed_clone_is_caught_by_similarity() {
    let clone = seed_source("put-block-in-bowl")
        .unwrap()
        .replace("task \"put-block-in-bowl\"", "task \"drop-block-into-bowl\"");
    let p = ScriptedProvider::new(move |req| {
        assert!(!is_critic(req), "duplicates never reach the critic");
        if is_description(req) {
            Ok(r#"{"task-name": "drop-block-into-bowl", "task-description": "Drop a block into a bowl.", "assets-used": ["block", "bowl"]}"#.into())
        } else {
            Ok(format!("```task\n{clone}```"))
        }
    });
    let rec = run_attempt(
        &GenerationMode::Exploratory,
        0,
        0,
        &seeds(),
        &p,
        &CreatorConfig::default(),
        true,
    );
    assert_eq!(rec.outcome, AttemptOutcome::Duplicate);
    assert!(rec.report.completed_ok);
    assert!(rec.duplicate.as_ref().unwrap().max_similarity > 0.99);
    assert!(rec.report.diagnostics.iter().any(|d| d.code == Code::DuplicateTask));
}

#[test]
fn only_the_first_code_block_is_used() {
    let first = corpus_file("align-balls-along-line", "implementation.txt");
    let reply = format!("{first}\nAnd a variant:\n```task\ntask \"other\"\n```\n");
    let p = ScriptedProvider::new(move |_| Ok(reply.clone()));
    let proposal =
        gensim_core::creator::prompts::parse_proposal(&corpus_file("align-balls-along-line", "proposal.txt")).unwrap();
    let code = implement_task(&proposal, &[], &p, &CreatorConfig::default(), 0).unwrap();
    assert!(code.starts_with("task \"align-balls-along-line\""));
    assert!(verify_task(&code, &VerifyOptions::default()).completed_ok);
}

#[test]
fn missing_code_block_is_not_retried() {
    let p = ScriptedProvider::new(|req| {
        if is_description(req) {
            Ok(corpus_file("align-balls-along-line", "proposal.txt"))
        } else {
            Ok("Here is how I would do it, in words.".into())
        }
    });
    let rec = run_attempt(
        &GenerationMode::Exploratory,
        0,
        0,
        &seeds(),
        &p,
        &CreatorConfig::default(),
        true,
    );
    assert_eq!(rec.outcome, AttemptOutcome::Failed);
    assert_eq!(rec.report.diagnostics[0].code, Code::NoCodeBlock);
    assert_eq!(p.calls(), 2);
}

#[test]
fn unreadable_critic_parks_the_candidate() {
    let inner = scripted();
    let p = ScriptedProvider::new(move |req| {
        if is_critic(req) && req.seed == 1 {
            Ok("This looks fine to me.".into())
        } else {
            inner.complete(req)
        }
    });
    let mut lib = seeds();
    let cfg = CreatorConfig::default();
    let out = generate(&GenerationMode::Exploratory, 1, &mut lib, &p, &cfg).unwrap();
    assert_eq!(out.attempts[0].outcome, AttemptOutcome::Parked);
    assert!(out.accepted.is_empty());
    assert_eq!(lib.len(), 10);
}

#[test]
fn critic_failure_parks_too() {
    let inner = scripted();
    let p = ScriptedProvider::new(move |req| {
        if is_critic(req) {
            Err(ProviderError::Status {
                status: 503,
                body: "overloaded".into(),
            })
        } else {
            inner.complete(req)
        }
    });
    let mut lib = seeds();
    let out = generate(&GenerationMode::Exploratory, 1, &mut lib, &p, &CreatorConfig::default()).unwrap();
    assert_eq!(out.attempts[0].outcome, AttemptOutcome::Parked);
    assert!(out.attempts[0].error.as_ref().unwrap().contains("503"));
}

#[test]
fn generated_entries_carry_provenance_and_votes() {
    let mut lib = seeds();
    let out = generate(
        &GenerationMode::Exploratory,
        1,
        &mut lib,
        &scripted(),
        &CreatorConfig::default(),
    )
    .unwrap();
    assert_eq!(out.accepted, ["sort-cylinders-into-zones"]);
    let e = lib.get("sort-cylinders-into-zones").unwrap();
    assert_eq!(
        e.provenance,
        Provenance::Generated {
            model_id: "scripted".into(),
            mode: "exploratory".into()
        }
    );
    assert_eq!(e.critic_votes.len(), 3);
    assert!(e
        .critic_votes
        .iter()
        .all(|v| v.accept && v.transcript_digest.len() == 64));
    assert_eq!(e.verify.stage, "task-completed");
}

#[test]
fn batch_does_not_depend_on_concurrency() {
    let run = |threads| {
        let mut lib = seeds();
        let cfg = CreatorConfig {
            concurrency: threads,
            ..CreatorConfig::default()
        };
        let out = generate(&GenerationMode::Exploratory, 10, &mut lib, &scripted(), &cfg).unwrap();
        (out.accepted, out.metrics, lib.names())
    };
    assert_eq!(run(1), run(8));
}

#[test]
fn empty_target_list_makes_no_calls() {
    let p = scripted();
    let err = run_goal_directed_eval(&[], 3, &seeds(), &p, &CreatorConfig::default()).unwrap_err();
    assert!(matches!(err, CreatorError::EmptyTargets));
    assert_eq!(p.calls(), 0);
}

#[test]
fn always_malformed_target_scores_zero() {
    let p = ScriptedProvider::new(|_| Ok("no dictionary here".into()));
    let out = run_goal_directed_eval(&["rainbow-pyramid".into()], 3, &seeds(), &p, &CreatorConfig::default()).unwrap();
    assert_eq!(out.per_target[0].metrics.triple(), (0.0, 0.0, 0.0));
    assert!(out.per_target[0]
        .attempts
        .iter()
        .all(|a| a.outcome == AttemptOutcome::Failed));
}

#[test]
fn eval_never_writes_or_asks_critics() {
    let p = ScriptedProvider::new({
        let inner = scripted();
        move |req| {
            assert!(!is_critic(req));
            inner.complete(req)
        }
    });
    let lib = seeds();
    let before = lib.names();
    let out = run_goal_directed_eval(
        &["build-pyramid-in-zone".into()],
        3,
        &lib,
        &p,
        &CreatorConfig::default(),
    )
    .unwrap();
    assert_eq!(lib.names(), before);
    assert!(out.per_target[0]
        .attempts
        .iter()
        .all(|a| a.outcome != AttemptOutcome::Accepted));
}

#[test]
fn description_prompt_has_six_sections_in_order() {
    let lib = seeds();
    let bundle = description_bundle(&GenerationMode::Exploratory, &lib, &CreatorConfig::default(), 0);
    let user = bundle.render_user(usize::MAX);
    let mut at = 0;
    for h in [
        ASSETS_HEADER,
        REFERENCES_HEADER,
        PAST_HEADER,
        BAD_HEADER,
        "Now please describe the new task",
        RULES_HEADER,
    ] {
        let pos = user[at..]
            .find(h)
            .unwrap_or_else(|| panic!("missing or out of order: {h}"))
            + at;
        at = pos + h.len();
    }
    assert_eq!(bundle.references.len(), 4);
    assert_eq!(bundle.past_names.len(), 10);

    let golden = fixtures().join("golden/description_prompt.txt");
    if std::env::var("GENSIM_RECORD").is_ok_and(|v| v == "1") {
        fs::create_dir_all(golden.parent().unwrap()).unwrap();
        fs::write(&golden, &user).unwrap();
    }
    assert_eq!(user, fs::read_to_string(&golden).unwrap());
}

#[test]
fn finetune_export_skips_rejected_and_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let mut lib = Library::init_seeds(Some(dir.path().join("lib"))).unwrap();
    generate(
        &GenerationMode::Exploratory,
        3,
        &mut lib,
        &scripted(),
        &CreatorConfig::default(),
    )
    .unwrap();
    assert_eq!(lib.len(), 12);
    lib.record_human_verdict("sort-cylinders-into-zones", false, "ana", 6.0)
        .unwrap();
    lib.record_human_verdict("build-car", false, "ana", 4.5).unwrap();
    lib.record_human_verdict("stack-blocks-on-stand", true, "ana", 3.0)
        .unwrap();

    let records = finetune_records(&lib);
    assert_eq!(records.len(), 10);
    assert!(records.windows(2).all(|w| w[0].prompt < w[1].prompt));
    let first = &records[0];
    assert!(first.prompt.contains("[color-coordinated-zone-arrangement]"));
    assert!(first.completion.starts_with("```task\n") && first.completion.ends_with("```"));

    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    assert_eq!(export_finetune_dataset(&lib, &a).unwrap(), 10);
    let reopened = Library::open(dir.path().join("lib")).unwrap();
    export_finetune_dataset(&reopened, &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 10);
}

#[test]
fn finetune_on_seeds_and_on_nothing() {
    assert_eq!(finetune_records(&seeds()).len(), 10);
    let dir = tempfile::tempdir().unwrap();
    let err = export_finetune_dataset(&Library::in_memory(), &dir.path().join("x.jsonl")).unwrap_err();
    assert_eq!(err.kind(), std::io::ErrorKind::InvalidInput);
}

#[test]
fn model_picked_references_are_used() {
    let inner = scripted();
    let p = ScriptedProvider::new(move |req| {
        if req.last_user().contains("most useful references") {
            return Ok("I would use ['put-block-in-bowl', 'no-such-task', 'build-car'].".into());
        }
        if req.temperature == 0.0 {
            let user = req.last_user();
            let first = user.find("reference task `put-block-in-bowl`").unwrap();
            let second = user.find("reference task `build-car`").unwrap();
            assert!(first < second);
            assert_eq!(user.matches("reference task `").count(), 4);
        }
        inner.complete(req)
    });
    let cfg = CreatorConfig {
        llm_pick_refs: true,
        ..CreatorConfig::default()
    };
    let rec = run_attempt(&GenerationMode::Exploratory, 0, 0, &seeds(), &p, &cfg, false);
    assert_eq!(rec.outcome, AttemptOutcome::Verified);
    assert_eq!(p.calls(), 3);
}

use std::collections::HashSet;

use super::{sort_diagnostics, Diagnostic, DiagnosticCode as Code, MatchesExpr, Metric, PoseExpr, TaskSpec};

/// Largest allowed extent of any asset, meters.
pub const OVERSIZE_LIMIT: f64 = 0.3;
/// Allowed deviation of the summed step rewards from 1.
pub const REWARD_SUM_TOLERANCE: f64 = 1e-6;

/// Static checks that define the syntax-correct stage. The result is
/// empty exactly when the spec passes; warnings alone do not fail it
/// but are still reported.
pub fn validate_static(spec: &TaskSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    for (i, a) in spec.assets.iter().enumerate() {
        if a.size.iter().any(|&e| e > OVERSIZE_LIMIT) {
            out.push(Diagnostic::error(
                Code::OversizedObject,
                spec.asset_span(i),
                format!("asset `{}` has an extent above {OVERSIZE_LIMIT} m ({:?})", a.id, a.size),
            ));
        }
    }

    let mut first_unlabelled = None;
    for (gi, g) in spec.goals.iter().enumerate() {
        let span = spec.goal_span(gi);
        let (n, m) = (g.objs.len(), g.targets.len());

        if n == 0 || m == 0 {
            out.push(Diagnostic::error(
                Code::MatchesShape,
                span,
                format!(
                    "goal `{}` needs at least one object and one target (got {n} x {m})",
                    g.id
                ),
            ));
        } else {
            match (&g.matches, g.matches.resolve(n, m)) {
                (MatchesExpr::Identity, None) => out.push(Diagnostic::error(
                    Code::MatchesShape,
                    span,
                    format!(
                        "goal `{}`: identity matches needs as many targets as objects, got {n} objects and {m} targets",
                        g.id
                    ),
                )),
                (_, Some(mat)) if mat.rows != n || mat.cols != m => out.push(Diagnostic::error(
                    Code::MatchesShape,
                    span,
                    format!(
                        "goal `{}`: matches is {}x{} but the goal has {n} objects and {m} targets",
                        g.id, mat.rows, mat.cols
                    ),
                )),
                (_, Some(mat)) => {
                    for row in 0..n {
                        if !(0..m).any(|j| mat.get(row, j)) {
                            out.push(Diagnostic::error(
                                Code::MatchesEmptyRow,
                                span,
                                format!(
                                    "goal `{}`: object `{}` has no admissible target (matches row {row} is all zero)",
                                    g.id, g.objs[row]
                                ),
                            ));
                        }
                    }
                    let colors: HashSet<_> = g.objs.iter().filter_map(|o| spec.asset(o).map(|a| a.color)).collect();
                    if n > 1 && mat.bits.iter().any(|b| !b) && colors.len() > 1 {
                        out.push(Diagnostic::warning(
                            Code::AmbiguousLanguageGoal,
                            span,
                            format!(
                                "goal `{}` pairs {n} differently colored objects with specific targets under one instruction; split it into one goal per pairing",
                                g.id
                            ),
                        ));
                    }
                }
                (_, None) => unreachable!("only identity can fail to resolve"),
            }
        }

        let mut seen = HashSet::new();
        for o in &g.objs {
            if !seen.insert(o.as_str()) {
                out.push(Diagnostic::error(
                    Code::RepeatedGoalObject,
                    span,
                    format!("goal `{}` lists object `{o}` more than once", g.id),
                ));
            }
            if spec.asset(o).is_some_and(|a| a.is_fixed()) {
                out.push(Diagnostic::error(
                    Code::GoalObjFixed,
                    span,
                    format!("goal `{}` object `{o}` is fixed and cannot be moved", g.id),
                ));
            }
        }

        if g.metric == Metric::Zone {
            for t in &g.targets {
                let ok = match t {
                    PoseExpr::PoseOf { anchor } => spec.asset(anchor).is_some_and(|a| a.kind.is_zone_like()),
                    _ => false,
                };
                if !ok {
                    out.push(Diagnostic::error(
                        Code::ZoneTargetKind,
                        span,
                        format!(
                            "goal `{}`: zone-metric targets must be `pose_of(<zone|bowl|container|pallet>)`",
                            g.id
                        ),
                    ));
                    break;
                }
            }
        }

        if g.targets.iter().any(|t| matches!(t, PoseExpr::Random)) {
            out.push(Diagnostic::warning(
                Code::RandomTargetPose,
                span,
                format!(
                    "goal `{}` uses a random target pose; targets should follow from the task objective",
                    g.id
                ),
            ));
        }

        if !(g.symmetry > 0.0) {
            out.push(Diagnostic::error(
                Code::InvalidSymmetry,
                span,
                format!("goal `{}`: symmetry period must be positive", g.id),
            ));
        }
        if !(g.step_max_reward > 0.0 && g.step_max_reward <= 1.0) {
            out.push(Diagnostic::error(
                Code::RewardRange,
                span,
                format!("goal `{}`: max_reward must be in (0, 1]", g.id),
            ));
        }
        if g.lang_goal.is_none() && spec.lang_template.is_none() && first_unlabelled.is_none() {
            first_unlabelled = Some(gi);
        }
    }

    let sum: f64 = spec.goals.iter().map(|g| g.step_max_reward).sum();
    if (sum - 1.0).abs() > REWARD_SUM_TOLERANCE {
        out.push(Diagnostic::error(
            Code::RewardSum,
            spec.source_map.task,
            format!("goal max_reward values sum to {sum}, expected 1"),
        ));
    }

    if let Some(gi) = first_unlabelled {
        let labelled = spec.goals.iter().filter(|g| g.lang_goal.is_some()).count();
        out.push(Diagnostic::error(
            Code::LanguageMotionInconsistency,
            spec.goal_span(gi),
            format!(
                "{labelled} language goals for {} goals and no lang_template; every goal needs an instruction",
                spec.goals.len()
            ),
        ));
    }

    let required = spec.required_placements();
    if (spec.max_steps as usize) < required {
        out.push(Diagnostic::error(
            Code::StepBudget,
            spec.source_map.max_steps,
            format!(
                "max_steps {} is below the {required} placements the goals require",
                spec.max_steps
            ),
        ));
    }

    sort_diagnostics(&mut out);
    out
}

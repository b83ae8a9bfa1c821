//! Goal evaluation: symmetry-aware pose matching, zone containment and
//! exact maximum matching of objects to targets, scored with per-goal
//! partial credit.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::dsl::{Matches, Metric, PoseExpr, TaskSpec};
use crate::world::{ObjInstance, Pose, WorldState};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Planar distance, meters.
    pub pos_eps: f64,
    /// Folded yaw error, radians.
    pub rot_eps: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            pos_eps: 0.01,
            rot_eps: 15f64.to_radians(),
        }
    }
}

/// Completion threshold on the total reward (strict).
pub const DONE_THRESHOLD: f64 = 0.99;

/// `|d|` after folding into `[-s/2, s/2]` modulo the period `s`.
pub fn fold(d: f64, s: f64) -> f64 {
    let r = d.rem_euclid(s);
    if r > s / 2.0 {
        (r - s).abs()
    } else {
        r
    }
}

pub fn pose_matched_with(tol: &Tolerances, obj: &Pose, targ: &Pose, rotations: bool, symmetry: f64) -> bool {
    obj.planar_dist(targ) <= tol.pos_eps && (!rotations || fold(obj.yaw - targ.yaw, symmetry) <= tol.rot_eps)
}

pub fn pose_matched(obj: &Pose, targ: &Pose, rotations: bool, symmetry: f64) -> bool {
    pose_matched_with(&Tolerances::default(), obj, targ, rotations, symmetry)
}

/// Object center inside the zone's footprint, boundary included.
pub fn zone_contained(obj: &ObjInstance, zone: &ObjInstance) -> bool {
    zone.shape().contains(obj.pose.x, obj.pose.y)
}

/// One goal target resolved against the current world.
#[derive(Clone, Debug, PartialEq)]
pub struct Target {
    /// Identity used for cross-goal consumption: two targets with the same
    /// key are the same spot.
    pub key: String,
    pub pose: Option<Pose>,
    /// World index of the zone object for zone-metric targets.
    pub zone: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Goal {
    pub id: String,
    /// World indices of the goal's objects.
    pub objs: Vec<usize>,
    pub targets: Vec<Target>,
    pub matches: Matches,
    pub metric: Metric,
    pub rotations: bool,
    pub symmetry: f64,
    pub shared_targets: bool,
    pub step_max_reward: f64,
    pub lang_goal: String,
}

fn target_key(g: usize, t: usize, expr: &PoseExpr) -> String {
    match expr {
        PoseExpr::Random => format!("random:{g}:{t}"),
        PoseExpr::Fixed { x, y, yaw } => format!("fixed:{x}:{y}:{yaw}"),
        PoseExpr::Relative {
            anchor,
            dx,
            dy,
            dz,
            yaw,
        } => format!("relative:{anchor}:{dx}:{dy}:{dz}:{yaw}"),
        PoseExpr::PoseOf { anchor } => format!("object:{anchor}"),
    }
}

/// Resolves the task's goals against the world's current poses. Anchored
/// targets follow their anchors, so this is re-run after every action.
pub fn resolve_goals(spec: &TaskSpec, world: &WorldState) -> Vec<Goal> {
    spec.goals
        .iter()
        .enumerate()
        .map(|(g, decl)| {
            let targets = decl
                .targets
                .iter()
                .enumerate()
                .map(|(t, expr)| {
                    let pose = match expr {
                        PoseExpr::Random => world.sampled_target(g, t),
                        e => world.resolve_expr(e),
                    };
                    let zone = match (decl.metric, expr) {
                        (Metric::Zone, PoseExpr::PoseOf { anchor }) => world.index_of(anchor),
                        _ => None,
                    };
                    Target {
                        key: target_key(g, t, expr),
                        pose,
                        zone,
                    }
                })
                .collect::<Vec<_>>();
            let (n, m) = (decl.objs.len(), targets.len());
            Goal {
                id: decl.id.clone(),
                objs: decl
                    .objs
                    .iter()
                    .map(|o| world.index_of(o).expect("goal object exists in the world"))
                    .collect(),
                targets,
                matches: decl.matches.resolve(n, m).unwrap_or_else(|| Matches::ones(n, m)),
                metric: decl.metric,
                rotations: decl.rotations,
                symmetry: decl.symmetry,
                shared_targets: decl.shared_targets,
                step_max_reward: decl.step_max_reward,
                lang_goal: spec.lang_for_goal(g).unwrap_or_default().to_owned(),
            }
        })
        .collect()
}

/// Whether object `i` of the goal currently satisfies target `j`, ignoring
/// the matches matrix and consumption.
pub fn satisfies(world: &WorldState, goal: &Goal, tol: &Tolerances, i: usize, j: usize) -> bool {
    let obj = &world.objects[goal.objs[i]];
    let t = &goal.targets[j];
    match goal.metric {
        Metric::Zone => t.zone.is_some_and(|z| zone_contained(obj, &world.objects[z])),
        Metric::Pose => t
            .pose
            .is_some_and(|p| pose_matched_with(tol, &obj.pose, &p, goal.rotations, goal.symmetry)),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoalMatch {
    pub matched_count: usize,
    /// Target index per goal object, `None` when unmatched.
    pub assignment: Vec<Option<usize>>,
}

/// Maximum matching between objects and admissible targets. Without
/// `shared_targets`, targets whose key is in `consumed` are unavailable and
/// each target takes at most one object. Ties resolve toward lower object
/// indices, then lower target indices.
pub fn evaluate_goal(world: &WorldState, goal: &Goal, consumed: &HashSet<String>, tol: &Tolerances) -> GoalMatch {
    let (n, m) = (goal.objs.len(), goal.targets.len());
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..m)
                .filter(|&j| {
                    goal.matches.get(i, j)
                        && (goal.shared_targets || !consumed.contains(&goal.targets[j].key))
                        && satisfies(world, goal, tol, i, j)
                })
                .collect()
        })
        .collect();

    if goal.shared_targets {
        let assignment: Vec<Option<usize>> = adj.iter().map(|a| a.first().copied()).collect();
        let matched_count = assignment.iter().flatten().count();
        return GoalMatch {
            matched_count,
            assignment,
        };
    }

    let mut owner: Vec<Option<usize>> = vec![None; m];
    for i in 0..n {
        let mut seen = vec![false; m];
        augment(i, &adj, &mut owner, &mut seen);
    }
    let mut assignment = vec![None; n];
    for (j, o) in owner.iter().enumerate() {
        if let Some(i) = *o {
            assignment[i] = Some(j);
        }
    }
    GoalMatch {
        matched_count: assignment.iter().flatten().count(),
        assignment,
    }
}

fn augment(i: usize, adj: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
    for &j in &adj[i] {
        if seen[j] {
            continue;
        }
        seen[j] = true;
        if owner[j].is_none_or(|k| augment(k, adj, owner, seen)) {
            owner[j] = Some(i);
            return true;
        }
    }
    false
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalReward {
    pub goal: String,
    pub matched_count: usize,
    pub obj_count: usize,
    pub fraction: f64,
    pub contribution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub per_goal: Vec<GoalReward>,
    pub total: f64,
    pub score: f64,
    pub done: bool,
}

/// Per-goal matchings in declaration order, threading target consumption
/// through the goals.
pub fn evaluate_all(world: &WorldState, goals: &[Goal], tol: &Tolerances) -> Vec<GoalMatch> {
    let mut consumed = HashSet::new();
    goals
        .iter()
        .map(|g| {
            let r = evaluate_goal(world, g, &consumed, tol);
            if !g.shared_targets {
                for j in r.assignment.iter().flatten() {
                    consumed.insert(g.targets[*j].key.clone());
                }
            }
            r
        })
        .collect()
}

pub fn breakdown(goals: &[Goal], matches: &[GoalMatch]) -> RewardBreakdown {
    let per_goal: Vec<GoalReward> = goals
        .iter()
        .zip(matches)
        .map(|(g, r)| {
            let n = g.objs.len();
            let fraction = if n == 0 { 0.0 } else { r.matched_count as f64 / n as f64 };
            GoalReward {
                goal: g.id.clone(),
                matched_count: r.matched_count,
                obj_count: n,
                fraction,
                contribution: g.step_max_reward * fraction,
            }
        })
        .collect();
    let total = per_goal.iter().map(|g| g.contribution).sum::<f64>().clamp(0.0, 1.0);
    RewardBreakdown {
        per_goal,
        total,
        score: 100.0 * total,
        done: total > DONE_THRESHOLD,
    }
}

pub fn total_reward(world: &WorldState, goals: &[Goal], tol: &Tolerances) -> RewardBreakdown {
    breakdown(goals, &evaluate_all(world, goals, tol))
}

/// Reward of a task in its current world state.
pub fn task_reward(spec: &TaskSpec, world: &WorldState) -> RewardBreakdown {
    total_reward(world, &resolve_goals(spec, world), &Tolerances::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{AssetKind, Color};
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn pose_match_examples() {
        let t = Pose::new(0.5, 0.0, 0.0, 0.3);
        assert!(pose_matched(&t, &t, true, FRAC_PI_2));
        let turned = Pose::new(0.5, 0.0, 0.0, 0.3 + FRAC_PI_2);
        assert!(pose_matched(&turned, &t, true, FRAC_PI_2));
        assert!(!pose_matched(&turned, &t, true, 2.0 * PI));
        assert!(pose_matched(&turned, &t, false, 2.0 * PI));
        let off = Pose::new(0.55, 0.0, 0.0, 0.3);
        assert!(!pose_matched(&off, &t, false, 2.0 * PI));
    }

    #[test]
    fn fold_values() {
        assert!(fold(FRAC_PI_2, FRAC_PI_2).abs() < 1e-12);
        assert!((fold(0.3, 1.0) - 0.3).abs() < 1e-12);
        assert!((fold(0.7, 1.0) - 0.3).abs() < 1e-12);
        assert!((fold(-0.7, 1.0) - 0.3).abs() < 1e-12);
    }

    fn obj(id: &str, kind: AssetKind, size: [f64; 3], x: f64, y: f64) -> ObjInstance {
        ObjInstance {
            id: id.into(),
            kind,
            color: Color::Red,
            size,
            fixed: false,
            pose: Pose::new(x, y, size[2] / 2.0, 0.0),
        }
    }

    #[test]
    fn zone_boundary_is_closed() {
        let zone = obj("z", AssetKind::Zone, [0.12, 0.12, 0.0], 0.5, 0.0);
        let inside = obj("b", AssetKind::Block, [0.04; 3], 0.5, 0.0);
        let out = obj("b", AssetKind::Block, [0.04; 3], 0.57, 0.0);
        let edge = obj("b", AssetKind::Block, [0.04; 3], 0.56, 0.0);
        assert!(zone_contained(&inside, &zone));
        assert!(!zone_contained(&out, &zone));
        assert!(zone_contained(&edge, &zone));
    }

    fn goal(n: usize, m: usize, shared: bool) -> Goal {
        Goal {
            id: "g".into(),
            objs: (0..n).collect(),
            targets: (0..m)
                .map(|j| Target {
                    key: format!("t{j}"),
                    pose: Some(Pose::new(0.3 + 0.1 * j as f64, 0.0, 0.0, 0.0)),
                    zone: None,
                })
                .collect(),
            matches: Matches::ones(n, m),
            metric: Metric::Pose,
            rotations: false,
            symmetry: 2.0 * PI,
            shared_targets: shared,
            step_max_reward: 1.0,
            lang_goal: String::new(),
        }
    }

    fn world_at(xs: &[f64]) -> WorldState {
        let mut w = WorldState::empty(0);
        w.objects = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| obj(&format!("o{i}"), AssetKind::Block, [0.04; 3], x, 0.0))
            .collect();
        w
    }

    #[test]
    fn two_of_four_placed() {
        let w = world_at(&[0.3, 0.6, 0.25, 0.25]);
        let r = evaluate_goal(&w, &goal(4, 4, false), &HashSet::new(), &Tolerances::default());
        assert_eq!(r.matched_count, 2);
        assert_eq!(r.assignment, vec![Some(0), Some(3), None, None]);
    }

    #[test]
    fn shared_target_takes_many() {
        let w = world_at(&[0.3, 0.3, 0.3]);
        let r = evaluate_goal(&w, &goal(3, 1, true), &HashSet::new(), &Tolerances::default());
        assert_eq!(r.matched_count, 3);
        let r = evaluate_goal(&w, &goal(3, 1, false), &HashSet::new(), &Tolerances::default());
        assert_eq!(r.matched_count, 1);
    }

    #[test]
    fn consumed_targets_are_unavailable() {
        let w = world_at(&[0.3]);
        let consumed = HashSet::from(["t0".to_string()]);
        let r = evaluate_goal(&w, &goal(1, 1, false), &consumed, &Tolerances::default());
        assert_eq!(r.matched_count, 0);
    }

    #[test]
    fn augmenting_beats_greedy() {
        // Object 0 fits targets 0 and 1, object 1 only target 0. Greedy
        // would give object 0 target 0 and strand object 1.
        let w = world_at(&[0.3, 0.3]);
        let mut g = goal(2, 2, false);
        g.targets[1].pose = Some(Pose::new(0.305, 0.0, 0.0, 0.0));
        g.matches.set(1, 1, false);
        let r = evaluate_goal(&w, &g, &HashSet::new(), &Tolerances::default());
        assert_eq!(r.matched_count, 2);
        assert_eq!(r.assignment, vec![Some(1), Some(0)]);
    }

    #[test]
    fn breakdown_scales() {
        let w = world_at(&[0.3, 0.6, 0.25, 0.25]);
        let goals: Vec<Goal> = (0..4)
            .map(|i| {
                let mut g = goal(1, 1, false);
                g.objs = vec![i];
                g.targets[0].key = format!("k{i}");
                g.targets[0].pose = Some(Pose::new([0.3, 0.6, 0.7, 0.7][i], 0.0, 0.0, 0.0));
                g.step_max_reward = 0.25;
                g
            })
            .collect();
        let b = total_reward(&w, &goals, &Tolerances::default());
        assert!((b.total - 0.5).abs() < 1e-12);
        assert_eq!(b.score, 100.0 * b.total);
        assert!(!b.done);
    }
}

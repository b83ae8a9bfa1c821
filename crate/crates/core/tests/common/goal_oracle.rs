//! Independent reference for goal evaluation: plain distance checks and an
//! exhaustive search over assignments.

use std::collections::HashSet;
use std::f64::consts::TAU;

use gensim_core::dsl::{parse_task, AssetKind, Color, Matches, Metric};
use gensim_core::goal::{task_reward, Goal, RewardBreakdown, Target, Tolerances};
use gensim_core::oracle::{plan_next_action, Plan};
use gensim_core::world::{build_scene, ObjInstance, Pose, WorldState};
use proptest::prelude::*;

#[derive(Clone, Debug)]
pub struct Instance {
    pub world: WorldState,
    pub goal: Goal,
    pub consumed: HashSet<String>,
}

fn block(i: usize, x: f64, y: f64) -> ObjInstance {
    ObjInstance {
        id: format!("o{i}"),
        kind: AssetKind::Block,
        color: Color::Red,
        size: [0.04; 3],
        fixed: false,
        pose: Pose::new(x, y, 0.02, 0.0),
    }
}

fn target_xy(j: usize) -> (f64, f64) {
    (0.3 + 0.07 * j as f64, 0.1)
}

/// Up to 6 objects and 6 targets. Each object sits on some target, near
/// one (inside or just outside tolerance) or far away, so admissibility is
/// dense enough for matching to matter.
pub fn instance() -> impl Strategy<Value = Instance> {
    (1usize..=6, 1usize..=6).prop_flat_map(|(n, m)| {
        (
            proptest::collection::vec((0..m + 1, -0.015f64..0.015), n),
            proptest::collection::vec(any::<bool>(), n * m),
            any::<bool>(),
            proptest::collection::vec(any::<bool>(), m),
        )
            .prop_map(move |(spots, bits, shared, used)| {
                let mut world = WorldState::empty(0);
                world.objects = spots
                    .iter()
                    .enumerate()
                    .map(|(i, &(j, jitter))| {
                        if j == m {
                            block(i, 0.7, -0.3 + 0.05 * i as f64)
                        } else {
                            let (x, y) = target_xy(j);
                            block(i, x + jitter, y)
                        }
                    })
                    .collect();
                let goal = Goal {
                    id: "g".into(),
                    objs: (0..n).collect(),
                    targets: (0..m)
                        .map(|j| {
                            let (x, y) = target_xy(j);
                            Target {
                                key: format!("t{j}"),
                                pose: Some(Pose::new(x, y, 0.0, 0.0)),
                                zone: None,
                            }
                        })
                        .collect(),
                    matches: Matches { rows: n, cols: m, bits },
                    metric: Metric::Pose,
                    rotations: false,
                    symmetry: TAU,
                    shared_targets: shared,
                    step_max_reward: 1.0,
                    lang_goal: String::new(),
                };
                let consumed = (0..m).filter(|&j| used[j]).map(|j| format!("t{j}")).collect();
                Instance { world, goal, consumed }
            })
    })
}

fn admissible(inst: &Instance, tol: &Tolerances, i: usize, j: usize) -> bool {
    let g = &inst.goal;
    let o = &inst.world.objects[g.objs[i]].pose;
    let t = g.targets[j].pose.unwrap();
    g.matches.bits[i * g.matches.cols + j]
        && (g.shared_targets || !inst.consumed.contains(&g.targets[j].key))
        && ((o.x - t.x).powi(2) + (o.y - t.y).powi(2)).sqrt() <= tol.pos_eps
}

/// Largest number of objects that can be matched, by trying every
/// assignment (each target used at most once unless targets are shared).
pub fn brute_force(inst: &Instance, tol: &Tolerances) -> usize {
    let n = inst.goal.objs.len();
    let m = inst.goal.targets.len();
    if inst.goal.shared_targets {
        return (0..n).filter(|&i| (0..m).any(|j| admissible(inst, tol, i, j))).count();
    }
    fn go(inst: &Instance, tol: &Tolerances, i: usize, used: &mut Vec<bool>) -> usize {
        if i == inst.goal.objs.len() {
            return 0;
        }
        let mut best = go(inst, tol, i + 1, used);
        for j in 0..used.len() {
            if !used[j] && admissible(inst, tol, i, j) {
                used[j] = true;
                best = best.max(1 + go(inst, tol, i + 1, used));
                used[j] = false;
            }
        }
        best
    }
    go(inst, tol, 0, &mut vec![false; m])
}

/// A task with `k_goals` single-block goals of equal weight, after the
/// oracle has taken `steps` actions.
pub fn partial_credit(k_goals: usize, steps: usize, seed: u64) -> RewardBreakdown {
    let mut src = format!("task \"partial-credit\"\ndescription \"one block per spot\"\nmax_steps {k_goals}\n");
    for g in 0..k_goals {
        src += &format!("asset b{g} kind=block color=red size=(0.04,0.04,0.04) pose=random\n");
    }
    for g in 0..k_goals {
        let x = 0.3 + 0.06 * (g % 8) as f64;
        src += &format!(
            "goal g{g} objs=[b{g}] targets=[fixed({x:.2},0.4,0)] matches=identity metric=pose max_reward=1/{k_goals} lang=\"put block {g} on spot {g}\"\n"
        );
    }
    let spec = parse_task(&src).unwrap();
    let mut world = build_scene(&spec, seed).unwrap();
    for _ in 0..steps {
        match plan_next_action(&spec, &world, &Tolerances::default()) {
            Plan::Act { pick, place, .. } => {
                world.pick_place(&pick, &place).unwrap();
            }
            other => panic!("oracle stopped early: {other:?}"),
        }
    }
    task_reward(&spec, &world)
}

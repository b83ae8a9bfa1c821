//! Scripted expert: plans pick-and-place actions straight from the goal
//! structure and records seeded demonstration episodes.

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsl::{render_canonical, Diagnostic, Metric, PoseExpr, TaskSpec};
use crate::goal::{breakdown, evaluate_all, resolve_goals, Goal, GoalMatch, GoalReward, RewardBreakdown, Tolerances};
use crate::rng::RNG_ALGORITHM_ID;
use crate::world::{build_scene, Footprint, Pose, SceneSnapshot, WorldState};

/// Wall-clock budget per episode.
pub const DEFAULT_TIME_BUDGET: Duration = Duration::from_secs(10);

#[derive(Clone, Debug, PartialEq)]
pub enum Plan {
    Act {
        goal: usize,
        obj: usize,
        target: usize,
        pick: Pose,
        place: Pose,
        lang_goal: String,
    },
    Done,
    Stuck,
}

fn target_ready(world: &WorldState, expr: &PoseExpr, goal_objs: &HashSet<usize>, matched: &HashSet<usize>) -> bool {
    match expr.anchor().and_then(|a| world.index_of(a)) {
        Some(a) => !goal_objs.contains(&a) || matched.contains(&a),
        None => true,
    }
}

/// Where to put an object for a zone target: the first spot on a small
/// spiral around the zone center whose footprint stays clear of other
/// objects, so zone goals with many objects do not pile up.
fn zone_spot(world: &WorldState, obj: usize, zone: usize) -> Pose {
    let z = &world.objects[zone];
    let o = &world.objects[obj];
    let step = o.size[0].max(o.size[1]).max(0.01);
    let zone_shape = z.shape();
    let mut candidates = vec![(0.0, 0.0)];
    for ring in 1..=3 {
        let r = step * ring as f64;
        let count = 8 * ring;
        for k in 0..count {
            let a = std::f64::consts::TAU * k as f64 / count as f64;
            candidates.push((r * a.cos(), r * a.sin()));
        }
    }
    for (dx, dy) in candidates {
        let p = z.pose.compose(dx, dy, 0.0, 0.0);
        let shape = o.footprint().at(p.x, p.y, p.yaw);
        let inside = zone_shape.contains(p.x, p.y)
            && world.workspace.contains(p.x, p.y)
            && match o.footprint() {
                Footprint::Rect { hx, hy } => {
                    let r = hx.hypot(hy);
                    [(r, 0.0), (-r, 0.0), (0.0, r), (0.0, -r)]
                        .iter()
                        .all(|(ex, ey)| zone_shape.contains(p.x + ex, p.y + ey))
                }
                Footprint::Disc { r } => [(r, 0.0), (-r, 0.0), (0.0, r), (0.0, -r)]
                    .iter()
                    .all(|(ex, ey)| zone_shape.contains(p.x + ex, p.y + ey)),
                Footprint::Point => true,
            };
        let clear = world
            .objects
            .iter()
            .enumerate()
            .all(|(i, other)| i == obj || i == zone || !other.shape().overlaps(&shape));
        if inside && clear {
            return p;
        }
    }
    z.pose
}

/// Next oracle action. The first goal (declaration order) that has an
/// unmatched object with an admissible target wins; that object goes to its
/// nearest admissible target. A target is admissible when the matches
/// matrix allows it, no goal has claimed it, its anchor is settled (not a
/// goal object that is still unmatched), no fixed non-receptacle object
/// covers it and it lies inside the workspace. Objects with something
/// stacked on them are skipped because the suction cup would grab the top
/// object instead.
pub fn plan_next_action(spec: &TaskSpec, world: &WorldState, tol: &Tolerances) -> Plan {
    let goals = resolve_goals(spec, world);
    let matches = evaluate_all(world, &goals, tol);
    if breakdown(&goals, &matches).done {
        return Plan::Done;
    }
    plan_from(spec, world, &goals, &matches)
}

fn plan_from(spec: &TaskSpec, world: &WorldState, goals: &[Goal], matches: &[GoalMatch]) -> Plan {
    let goal_objs: HashSet<usize> = goals.iter().flat_map(|g| g.objs.iter().copied()).collect();
    let mut matched = HashSet::new();
    let mut consumed: HashSet<&str> = HashSet::new();
    for (g, m) in goals.iter().zip(matches) {
        for (i, a) in m.assignment.iter().enumerate() {
            if let Some(j) = a {
                matched.insert(g.objs[i]);
                if !g.shared_targets {
                    consumed.insert(g.targets[*j].key.as_str());
                }
            }
        }
    }

    for (gi, (goal, m)) in goals.iter().zip(matches).enumerate() {
        if m.matched_count == goal.objs.len() {
            continue;
        }
        for (i, slot) in m.assignment.iter().enumerate() {
            if slot.is_some() {
                continue;
            }
            let oi = goal.objs[i];
            let obj = &world.objects[oi];
            if world.topmost_at(obj.pose.x, obj.pose.y, true) != Some(oi) {
                continue;
            }
            let mut best: Option<(f64, usize, Pose)> = None;
            for (j, t) in goal.targets.iter().enumerate() {
                if !goal.matches.get(i, j) || (!goal.shared_targets && consumed.contains(t.key.as_str())) {
                    continue;
                }
                if !target_ready(world, &spec.goals[gi].targets[j], &goal_objs, &matched) {
                    continue;
                }
                let place = match (goal.metric, t.zone, t.pose) {
                    (Metric::Zone, Some(z), _) => zone_spot(world, oi, z),
                    (Metric::Pose, _, Some(p)) => p,
                    _ => continue,
                };
                if !world.workspace.contains(place.x, place.y) {
                    continue;
                }
                let blocked = world.objects.iter().enumerate().any(|(k, o)| {
                    k != oi && o.fixed && !o.kind.is_receptacle() && o.shape().contains(place.x, place.y)
                });
                if blocked {
                    continue;
                }
                let d = obj.pose.planar_dist(&place);
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, j, place));
                }
            }
            if let Some((_, j, place)) = best {
                return Plan::Act {
                    goal: gi,
                    obj: oi,
                    target: j,
                    pick: Pose {
                        z: obj.top(),
                        ..obj.pose
                    },
                    place,
                    lang_goal: goal.lang_goal.clone(),
                };
            }
        }
    }
    Plan::Stuck
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Done,
    Stuck,
    StepBudgetExhausted,
    NoProgress,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub i: usize,
    pub lang: String,
    pub pick: Pose,
    pub place: Pose,
    pub reward_after: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemonstrationEpisode {
    pub task: String,
    pub seed: u64,
    pub rng_algorithm_id: String,
    pub dsl_digest: String,
    pub steps: Vec<Step>,
    pub final_reward: RewardBreakdown,
    pub success: bool,
    pub outcome: Outcome,
}

#[derive(Clone, Copy, Debug)]
pub struct EpisodeOptions {
    pub tol: Tolerances,
    pub time_budget: Duration,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            time_budget: DEFAULT_TIME_BUDGET,
        }
    }
}

/// Hex SHA-256 of the canonical source.
pub fn dsl_digest(spec: &TaskSpec) -> String {
    hex_digest(render_canonical(spec).as_bytes())
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn run_episode(spec: &TaskSpec, seed: u64) -> Result<DemonstrationEpisode, Vec<Diagnostic>> {
    run_episode_with(spec, seed, &EpisodeOptions::default(), |_| {})
}

/// Episode plus the scene after every step (initial scene first).
pub fn run_episode_frames(
    spec: &TaskSpec,
    seed: u64,
) -> Result<(DemonstrationEpisode, Vec<SceneSnapshot>), Vec<Diagnostic>> {
    let mut frames = Vec::new();
    let ep = run_episode_with(spec, seed, &EpisodeOptions::default(), |w| frames.push(w.snapshot()))?;
    Ok((ep, frames))
}

/// Builds the scene and runs the oracle until the task is done, the oracle
/// is stuck, an action fails to raise the reward, the step budget runs out
/// or the wall-clock budget is spent. `observe` sees the initial world and
/// the world after each action.
pub fn run_episode_with(
    spec: &TaskSpec,
    seed: u64,
    opts: &EpisodeOptions,
    observe: impl FnMut(&WorldState),
) -> Result<DemonstrationEpisode, Vec<Diagnostic>> {
    let started = Instant::now();
    let world = build_scene(spec, seed)?;
    Ok(run_built(spec, world, opts, started, observe))
}

/// Runs the oracle on an already built scene. The wall-clock budget counts
/// from `started`.
pub fn run_built(
    spec: &TaskSpec,
    mut world: WorldState,
    opts: &EpisodeOptions,
    started: Instant,
    mut observe: impl FnMut(&WorldState),
) -> DemonstrationEpisode {
    let seed = world.seed;
    observe(&world);
    let mut steps = Vec::new();
    let mut goals = resolve_goals(spec, &world);
    let mut matches = evaluate_all(&world, &goals, &opts.tol);
    let mut reward = breakdown(&goals, &matches);
    let outcome = loop {
        if reward.done {
            break Outcome::Done;
        }
        if started.elapsed() > opts.time_budget {
            break Outcome::Timeout;
        }
        if steps.len() >= spec.max_steps as usize {
            break Outcome::StepBudgetExhausted;
        }
        let Plan::Act {
            pick, place, lang_goal, ..
        } = plan_from(spec, &world, &goals, &matches)
        else {
            break Outcome::Stuck;
        };
        let moved = match world.pick_place(&pick, &place) {
            Ok(i) => i,
            Err(e) => {
                log::debug!("oracle action rejected: {e}");
                break Outcome::Stuck;
            }
        };
        observe(&world);
        goals = resolve_goals(spec, &world);
        matches = evaluate_all(&world, &goals, &opts.tol);
        let next = breakdown(&goals, &matches);
        steps.push(Step {
            i: steps.len(),
            lang: lang_goal,
            pick,
            place: world.objects[moved].pose,
            reward_after: next.total,
        });
        let progressed = next.total > reward.total;
        reward = next;
        if !progressed {
            break Outcome::NoProgress;
        }
    };
    DemonstrationEpisode {
        task: spec.name.clone(),
        seed,
        rng_algorithm_id: RNG_ALGORITHM_ID.to_owned(),
        dsl_digest: dsl_digest(spec),
        success: reward.done,
        steps,
        final_reward: reward,
        outcome,
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    task: String,
    seed: u64,
    rng_algorithm_id: String,
    dsl_digest: String,
}

#[derive(Serialize, Deserialize)]
struct Trailer {
    total: f64,
    score: f64,
    success: bool,
    done: bool,
    outcome: Outcome,
    per_goal: Vec<GoalReward>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Record {
    Header(Header),
    Step(Step),
    Trailer(Trailer),
}

pub fn episode_file_name(ep: &DemonstrationEpisode) -> String {
    format!("{}-{}.demo.jsonl", ep.task, ep.seed)
}

fn io_context(path: &Path) -> impl FnOnce(io::Error) -> io::Error + '_ {
    move |e| io::Error::new(e.kind(), format!("{}: {e}", path.display()))
}

pub fn write_episode(ep: &DemonstrationEpisode, out: &mut impl Write) -> io::Result<()> {
    let mut line = |r: &Record| -> io::Result<()> {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")
    };
    line(&Record::Header(Header {
        task: ep.task.clone(),
        seed: ep.seed,
        rng_algorithm_id: ep.rng_algorithm_id.clone(),
        dsl_digest: ep.dsl_digest.clone(),
    }))?;
    for s in &ep.steps {
        line(&Record::Step(s.clone()))?;
    }
    line(&Record::Trailer(Trailer {
        total: ep.final_reward.total,
        score: ep.final_reward.score,
        success: ep.success,
        done: ep.final_reward.done,
        outcome: ep.outcome,
        per_goal: ep.final_reward.per_goal.clone(),
    }))
}

/// Writes `<task>-<seed>.demo.jsonl` under `dir` and returns its path.
pub fn export_episode(ep: &DemonstrationEpisode, dir: &Path) -> io::Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_context(dir))?;
    let path = dir.join(episode_file_name(ep));
    let file = fs::File::create(&path).map_err(io_context(&path))?;
    let mut w = BufWriter::new(file);
    write_episode(ep, &mut w).map_err(io_context(&path))?;
    w.flush().map_err(io_context(&path))?;
    Ok(path)
}

fn bad(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

pub fn read_episode(input: impl BufRead) -> io::Result<DemonstrationEpisode> {
    let mut header = None;
    let mut steps = Vec::new();
    let mut trailer = None;
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", n + 1)))?;
        match rec {
            Record::Header(h) if header.is_none() => header = Some(h),
            Record::Step(s) if header.is_some() && trailer.is_none() => steps.push(s),
            Record::Trailer(t) if header.is_some() && trailer.is_none() => trailer = Some(t),
            _ => return Err(bad(format!("line {}: record out of order", n + 1))),
        }
    }
    let h = header.ok_or_else(|| bad("missing header record"))?;
    let t = trailer.ok_or_else(|| bad("missing trailer record"))?;
    Ok(DemonstrationEpisode {
        task: h.task,
        seed: h.seed,
        rng_algorithm_id: h.rng_algorithm_id,
        dsl_digest: h.dsl_digest,
        steps,
        final_reward: RewardBreakdown {
            per_goal: t.per_goal,
            total: t.total,
            score: t.score,
            done: t.done,
        },
        success: t.success,
        outcome: t.outcome,
    })
}

pub fn import_episode(path: &Path) -> io::Result<DemonstrationEpisode> {
    let file = fs::File::open(path).map_err(io_context(path))?;
    read_episode(io::BufReader::new(file)).map_err(io_context(path))
}

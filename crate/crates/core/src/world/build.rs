use std::collections::{HashMap, HashSet};

use crate::dsl::{Diagnostic, DiagnosticCode as Code, PoseExpr, Span, TaskSpec};
use crate::rng::SceneRng;

use super::geometry::{Footprint, Shape};
use super::{sample_yaw, ObjInstance, Pose, SampledTarget, Workspace, WorldState};

/// Rejection-sampling attempts per random pose before giving up.
pub const MAX_SAMPLE_ATTEMPTS: u32 = 100;

/// Footprint used to keep a goal's target spots clear: the largest extent
/// among the goal's objects.
fn goal_footprint(spec: &TaskSpec, g: usize) -> Footprint {
    let mut all_disc = true;
    let (mut hx, mut hy) = (0.0f64, 0.0f64);
    for id in &spec.goals[g].objs {
        let Some(a) = spec.asset(id) else { continue };
        match Footprint::for_asset(a.kind, a.size) {
            Footprint::Rect { hx: x, hy: y } => {
                all_disc = false;
                hx = hx.max(x);
                hy = hy.max(y);
            }
            Footprint::Disc { r } => {
                hx = hx.max(r);
                hy = hy.max(r);
            }
            Footprint::Point => {}
        }
    }
    if all_disc {
        Footprint::Disc { r: hx.max(hy) }
    } else {
        Footprint::Rect { hx, hy }
    }
}

/// Everything whose pose follows from one asset's pose: explicit assets
/// anchored to it (transitively) and relative goal targets anchored to it
/// or to one of those assets.
#[derive(Default)]
struct Dependents {
    assets: Vec<usize>,
    targets: Vec<(usize, usize)>,
}

fn dependents(spec: &TaskSpec, root: usize) -> Dependents {
    let mut ids: HashSet<&str> = HashSet::from([spec.assets[root].id.as_str()]);
    let mut out = Dependents::default();
    for (j, a) in spec.assets.iter().enumerate().skip(root + 1) {
        if a.pose.anchor().is_some_and(|anc| ids.contains(anc)) {
            ids.insert(a.id.as_str());
            out.assets.push(j);
        }
    }
    for (g, goal) in spec.goals.iter().enumerate() {
        for (t, expr) in goal.targets.iter().enumerate() {
            if let PoseExpr::Relative { anchor, .. } = expr {
                if ids.contains(anchor.as_str()) {
                    out.targets.push((g, t));
                }
            }
        }
    }
    out
}

fn planar_from(expr: &PoseExpr, anchors: &HashMap<&str, Pose>) -> Option<Pose> {
    match expr {
        PoseExpr::Relative {
            anchor,
            dx,
            dy,
            dz,
            yaw,
        } => anchors.get(anchor.as_str()).map(|p| p.compose(*dx, *dy, *dz, *yaw)),
        PoseExpr::PoseOf { anchor } => anchors.get(anchor.as_str()).copied(),
        PoseExpr::Fixed { x, y, yaw } => Some(Pose::new(*x, *y, 0.0, *yaw)),
        PoseExpr::Random => None,
    }
}

struct Builder<'a> {
    spec: &'a TaskSpec,
    world: WorldState,
    rng: SceneRng,
    /// Spots later random samples must avoid: relative target areas and the
    /// footprints of anchored assets that are not placed yet.
    reserved: Vec<Shape>,
    failed: HashSet<&'a str>,
    diags: Vec<Diagnostic>,
}

impl<'a> Builder<'a> {
    fn collides(&self, s: &Shape) -> bool {
        self.world.objects.iter().any(|o| o.shape().overlaps(s)) || self.reserved.iter().any(|r| r.overlaps(s))
    }

    fn uniform_center(&mut self, ws: &Workspace) -> (f64, f64, f64) {
        let yaw = sample_yaw(&mut self.rng);
        let x = self.rng.uniform(ws.x_min, ws.x_max);
        let y = self.rng.uniform(ws.y_min, ws.y_max);
        (x, y, yaw)
    }

    /// Checks the candidate pose of random asset `i` together with everything
    /// anchored to it. On success returns the shapes to reserve.
    fn lookahead(&self, i: usize, pose: Pose, deps: &Dependents) -> Option<Vec<Shape>> {
        let spec = self.spec;
        let ws = self.world.workspace;
        let mut anchors: HashMap<&str, Pose> = HashMap::from([(spec.assets[i].id.as_str(), pose)]);
        let mut reserve = Vec::new();
        for &j in &deps.assets {
            let a = &spec.assets[j];
            let p = planar_from(&a.pose, &anchors)?;
            let s = Footprint::for_asset(a.kind, a.size).at(p.x, p.y, p.yaw);
            if !ws.contains_shape(&s) || self.world.objects.iter().any(|o| o.shape().overlaps(&s)) {
                return None;
            }
            anchors.insert(a.id.as_str(), p);
            reserve.push(s);
        }
        for &(g, t) in &deps.targets {
            let p = planar_from(&spec.goals[g].targets[t], &anchors)?;
            let s = goal_footprint(spec, g).at(p.x, p.y, p.yaw);
            if !ws.contains_shape(&s) || self.world.objects.iter().any(|o| o.shape().overlaps(&s)) {
                return None;
            }
            reserve.push(s);
        }
        Some(reserve)
    }

    fn place_random(&mut self, i: usize) {
        let a = &self.spec.assets[i];
        let fp = Footprint::for_asset(a.kind, a.size);
        let deps = dependents(self.spec, i);
        let ws = self.world.workspace;
        for _ in 0..MAX_SAMPLE_ATTEMPTS {
            let (x, y, yaw) = self.uniform_center(&ws);
            let shape = fp.at(x, y, yaw);
            if !ws.contains_shape(&shape) || self.collides(&shape) {
                continue;
            }
            let pose = Pose::new(x, y, 0.0, yaw);
            let Some(reserve) = self.lookahead(i, pose, &deps) else {
                continue;
            };
            let z = self.world.support_excluding(&shape, None) + a.size[2] / 2.0;
            self.push(i, Pose { z, ..pose });
            self.reserved.extend(reserve);
            return;
        }
        self.fail(
            i,
            Code::RuntimeNoPose,
            format!(
                "no collision-free pose for `{}` after {MAX_SAMPLE_ATTEMPTS} attempts; the scene is over-packed",
                a.id
            ),
        );
    }

    fn place_explicit(&mut self, i: usize) {
        let a = &self.spec.assets[i];
        if let Some(anchor) = a.pose.anchor() {
            if self.failed.contains(anchor) {
                self.fail(
                    i,
                    Code::RuntimeAnchorUnplaced,
                    format!("anchor `{anchor}` of `{}` could not be placed", a.id),
                );
                return;
            }
        }
        let Some(p) = self.world.resolve_expr(&a.pose) else {
            unreachable!("explicit pose with a placed anchor always resolves")
        };
        if !self.world.workspace.contains(p.x, p.y) {
            self.fail(
                i,
                Code::RuntimeOutOfBounds,
                format!("`{}` resolves to ({:.3}, {:.3}), outside the workspace", a.id, p.x, p.y),
            );
            return;
        }
        let shape = Footprint::for_asset(a.kind, a.size).at(p.x, p.y, p.yaw);
        let z = self.world.support_excluding(&shape, None) + a.size[2] / 2.0;
        self.push(i, Pose { z, ..p });
        // Relative targets on explicitly placed anchors are kept clear too.
        for (g, goal) in self.spec.goals.iter().enumerate() {
            for expr in &goal.targets {
                if matches!(expr, PoseExpr::Relative { anchor, .. } if *anchor == a.id) {
                    if let Some(t) = self.world.resolve_expr(expr) {
                        self.reserved.push(goal_footprint(self.spec, g).at(t.x, t.y, t.yaw));
                    }
                }
            }
        }
    }

    fn push(&mut self, i: usize, pose: Pose) {
        let a = &self.spec.assets[i];
        self.world.objects.push(ObjInstance {
            id: a.id.clone(),
            kind: a.kind,
            color: a.color,
            size: a.size,
            fixed: a.is_fixed(),
            pose,
        });
    }

    fn fail(&mut self, i: usize, code: Code, msg: String) {
        self.failed.insert(self.spec.assets[i].id.as_str());
        self.diags.push(Diagnostic::error(code, self.spec.asset_span(i), msg));
    }

    fn goal_error(&mut self, g: usize, code: Code, msg: String) {
        let span: Span = self.spec.goal_span(g);
        self.diags.push(Diagnostic::error(code, span, msg));
    }

    fn targets(&mut self) {
        let spec = self.spec;
        let ws = self.world.workspace;
        for (g, goal) in spec.goals.iter().enumerate() {
            for (t, expr) in goal.targets.iter().enumerate() {
                match expr {
                    PoseExpr::Random => {
                        let fp = goal_footprint(spec, g);
                        let mut placed = None;
                        for _ in 0..MAX_SAMPLE_ATTEMPTS {
                            let (x, y, yaw) = self.uniform_center(&ws);
                            let s = fp.at(x, y, yaw);
                            if ws.contains_shape(&s) && !self.collides(&s) {
                                placed = Some((Pose::new(x, y, 0.0, yaw), s));
                                break;
                            }
                        }
                        match placed {
                            Some((pose, s)) => {
                                self.reserved.push(s);
                                self.world.sampled_targets.push(SampledTarget {
                                    goal: g,
                                    target: t,
                                    pose,
                                });
                            }
                            None => self.goal_error(
                                g,
                                Code::RuntimeNoPose,
                                format!("no free spot for random target {t} of goal `{}`", goal.id),
                            ),
                        }
                    }
                    _ => {
                        if let Some(anchor) = expr.anchor() {
                            if self.failed.contains(anchor) {
                                self.goal_error(
                                    g,
                                    Code::RuntimeAnchorUnplaced,
                                    format!("target {t} of goal `{}` is anchored to unplaced `{anchor}`", goal.id),
                                );
                                continue;
                            }
                        }
                        if let Some(p) = self.world.resolve_expr(expr) {
                            if !ws.contains(p.x, p.y) {
                                self.goal_error(
                                    g,
                                    Code::RuntimeOutOfBounds,
                                    format!(
                                        "target {t} of goal `{}` resolves to ({:.3}, {:.3}), outside the workspace",
                                        goal.id, p.x, p.y
                                    ),
                                );
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Resolves every pose expression in declaration order. Random assets are
/// rejection sampled with uniform yaw and center; a sample is kept only if
/// its footprint, everything anchored to it and the target spots derived
/// from it stay inside the workspace without collisions. All build errors
/// are collected rather than stopping at the first one.
pub fn build_scene(spec: &TaskSpec, seed: u64) -> Result<WorldState, Vec<Diagnostic>> {
    let mut b = Builder {
        spec,
        world: WorldState::empty(seed),
        rng: SceneRng::new(seed),
        reserved: Vec::new(),
        failed: HashSet::new(),
        diags: Vec::new(),
    };
    for (g, goal) in spec.goals.iter().enumerate() {
        for expr in &goal.targets {
            if let PoseExpr::Fixed { x, y, yaw } = *expr {
                b.reserved.push(goal_footprint(spec, g).at(x, y, yaw));
            }
        }
    }
    for (i, a) in spec.assets.iter().enumerate() {
        match a.pose {
            PoseExpr::Random => b.place_random(i),
            _ => b.place_explicit(i),
        }
    }
    b.targets();
    if b.diags.is_empty() {
        // Continue the world's stream from where sampling stopped.
        b.world.rng = b.rng;
        Ok(b.world)
    } else {
        crate::dsl::sort_diagnostics(&mut b.diags);
        Err(b.diags)
    }
}

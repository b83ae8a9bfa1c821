//! Kinematic tabletop world.
//!
//! Objects have planar poses and a support height. There are no dynamics:
//! a placed object rests on the highest object its footprint overlaps, or
//! on the table.

mod build;
pub mod geometry;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{AssetKind, Color, PoseExpr};
use crate::rng::SceneRng;

pub use build::{build_scene, MAX_SAMPLE_ATTEMPTS};
pub use geometry::{normalize_yaw, Footprint, Shape};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

/// Reachable table area, meters.
pub const WORKSPACE: Workspace = Workspace {
    x_min: 0.25,
    x_max: 0.75,
    y_min: -0.5,
    y_max: 0.5,
};

impl Workspace {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    pub fn contains_shape(&self, s: &Shape) -> bool {
        let b = s.aabb();
        b.x0 >= self.x_min && b.x1 <= self.x_max && b.y0 >= self.y_min && b.y1 <= self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }
}

/// `z` is the height of the object's center; `yaw` lies in `[-pi, pi)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            z,
            yaw: normalize_yaw(yaw),
        }
    }

    pub fn planar_dist(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Applies an offset expressed in this pose's frame.
    pub fn compose(&self, dx: f64, dy: f64, dz: f64, dyaw: f64) -> Pose {
        let (s, c) = self.yaw.sin_cos();
        Pose::new(
            self.x + c * dx - s * dy,
            self.y + s * dx + c * dy,
            self.z + dz,
            self.yaw + dyaw,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjInstance {
    pub id: String,
    pub kind: AssetKind,
    pub color: Color,
    pub size: [f64; 3],
    pub fixed: bool,
    pub pose: Pose,
}

impl ObjInstance {
    pub fn footprint(&self) -> Footprint {
        Footprint::for_asset(self.kind, self.size)
    }

    pub fn shape(&self) -> Shape {
        self.footprint().at(self.pose.x, self.pose.y, self.pose.yaw)
    }

    pub fn top(&self) -> f64 {
        self.pose.z + self.size[2] / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.pose.z - self.size[2] / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("PICK_MISS: no object at the pick point")]
    PickMiss,
    #[error("PICK_FIXED: only fixed objects at the pick point")]
    PickFixed,
    #[error("PLACE_OUT_OF_BOUNDS: place point is outside the workspace")]
    PlaceOutOfBounds,
}

impl ActionError {
    pub fn code(self) -> &'static str {
        match self {
            Self::PickMiss => "PICK_MISS",
            Self::PickFixed => "PICK_FIXED",
            Self::PlaceOutOfBounds => "PLACE_OUT_OF_BOUNDS",
        }
    }
}

/// A random goal target drawn at build time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampledTarget {
    pub goal: usize,
    pub target: usize,
    pub pose: Pose,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    /// Declaration order of the task's assets.
    pub objects: Vec<ObjInstance>,
    pub workspace: Workspace,
    pub step_count: u32,
    pub seed: u64,
    pub rng: SceneRng,
    pub sampled_targets: Vec<SampledTarget>,
}

impl WorldState {
    pub fn empty(seed: u64) -> Self {
        Self {
            objects: Vec::new(),
            workspace: WORKSPACE,
            step_count: 0,
            seed,
            rng: SceneRng::new(seed),
            sampled_targets: Vec::new(),
        }
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.id == id)
    }

    pub fn get(&self, id: &str) -> Option<&ObjInstance> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Current world pose of a non-random expression. `None` for `random`
    /// and for anchors that are not in the world.
    pub fn resolve_expr(&self, expr: &PoseExpr) -> Option<Pose> {
        match expr {
            PoseExpr::Random => None,
            PoseExpr::Fixed { x, y, yaw } => Some(Pose::new(*x, *y, 0.0, *yaw)),
            PoseExpr::Relative {
                anchor,
                dx,
                dy,
                dz,
                yaw,
            } => self.get(anchor).map(|a| a.pose.compose(*dx, *dy, *dz, *yaw)),
            PoseExpr::PoseOf { anchor } => self.get(anchor).map(|a| a.pose),
        }
    }

    pub fn sampled_target(&self, goal: usize, target: usize) -> Option<Pose> {
        self.sampled_targets
            .iter()
            .find(|t| t.goal == goal && t.target == target)
            .map(|t| t.pose)
    }

    /// Top surface of the highest object whose footprint overlaps the given
    /// footprint placed at `(x, y, yaw)`; 0 for bare table. A `Point`
    /// footprint reduces to "objects containing (x, y)".
    pub fn support_height(&self, footprint: Footprint, x: f64, y: f64, yaw: f64) -> f64 {
        self.support_excluding(&footprint.at(x, y, yaw), None)
    }

    pub(crate) fn support_excluding(&self, shape: &Shape, skip: Option<usize>) -> f64 {
        self.objects
            .iter()
            .enumerate()
            .filter(|(i, o)| Some(*i) != skip && o.shape().overlaps(shape))
            .map(|(_, o)| o.top())
            .fold(0.0, f64::max)
    }

    /// Topmost object containing the point, preferring later declarations
    /// on exact height ties.
    pub fn topmost_at(&self, x: f64, y: f64, movable_only: bool) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, o) in self.objects.iter().enumerate() {
            if movable_only && o.fixed {
                continue;
            }
            if !o.shape().contains(x, y) {
                continue;
            }
            if best.is_none_or(|b| o.top() >= self.objects[b].top()) {
                best = Some(i);
            }
        }
        best
    }

    /// Suction pick at `pick` and place at `place`. Only the picked object
    /// moves; whatever was stacked on it stays where it was. Returns the
    /// index of the moved object.
    pub fn pick_place(&mut self, pick: &Pose, place: &Pose) -> Result<usize, ActionError> {
        let Some(i) = self.topmost_at(pick.x, pick.y, true) else {
            return Err(if self.topmost_at(pick.x, pick.y, false).is_some() {
                ActionError::PickFixed
            } else {
                ActionError::PickMiss
            });
        };
        if !place.x.is_finite() || !place.y.is_finite() || !self.workspace.contains(place.x, place.y) {
            return Err(ActionError::PlaceOutOfBounds);
        }
        let obj = &self.objects[i];
        let yaw = normalize_yaw(place.yaw);
        let shape = obj.footprint().at(place.x, place.y, yaw);
        let z = self.support_excluding(&shape, Some(i)) + obj.size[2] / 2.0;
        self.objects[i].pose = Pose {
            x: place.x,
            y: place.y,
            z,
            yaw,
        };
        self.step_count += 1;
        Ok(i)
    }

    pub fn snapshot(&self) -> SceneSnapshot {
        SceneSnapshot {
            objects: self
                .objects
                .iter()
                .map(|o| SnapshotObject {
                    id: o.id.clone(),
                    kind: o.kind,
                    color: o.color,
                    size: o.size,
                    pose: o.pose,
                    fixed: o.fixed,
                })
                .collect(),
            workspace: self.workspace,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotObject {
    pub id: String,
    pub kind: AssetKind,
    pub color: Color,
    pub size: [f64; 3],
    pub pose: Pose,
    pub fixed: bool,
}

/// JSON scene export consumed by the SVG renderer and the review UI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    pub objects: Vec<SnapshotObject>,
    pub workspace: Workspace,
    pub seed: u64,
}

/// Uniform yaw in `[-pi, pi)`.
pub(crate) fn sample_yaw(rng: &mut SceneRng) -> f64 {
    rng.uniform(-PI, PI)
}

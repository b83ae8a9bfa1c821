//! The Task DSL: a flat, line-oriented description of a tabletop task.
//!
//! A task declares its assets (kind, color, size, fixity and a pose
//! expression) and its goals (which objects must reach which targets, the
//! matching matrix between them, the reward share and the language goal).
//!
//! ```text
//! task "put-red-on-zone"
//! description "Place the red block in the green zone."
//! max_steps 5
//! asset zone kind=zone color=green size=(0.12,0.12,0) fixed pose=random
//! asset blk kind=block color=red size=(0.04,0.04,0.04) pose=random
//! goal g0 objs=[blk] targets=[pose_of(zone)] matches=identity metric=zone max_reward=1 lang="put the red block in the green zone"
//! ```

mod diagnostic;
mod lexer;
mod parser;
mod printer;
mod validate;

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub(crate) use diagnostic::sort_diagnostics;
pub use diagnostic::{has_errors, Diagnostic, DiagnosticCode, Severity, Span};
pub use parser::{parse_task, parse_task_bytes};
pub use printer::render_canonical;
pub use validate::{validate_static, OVERSIZE_LIMIT, REWARD_SUM_TOLERANCE};

/// Default symmetry period: no rotational symmetry.
pub const DEFAULT_SYMMETRY: f64 = TAU;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetKind {
    Block,
    SmallBlock,
    Cylinder,
    Ball,
    Bowl,
    Container,
    Pallet,
    Zone,
    Square,
    Line,
    Ell,
    Fixture,
    Box,
    Stand,
    Corner,
}

/// Planar footprint family of a kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FootprintShape {
    Rect,
    Disc,
}

impl AssetKind {
    pub const ALL: [AssetKind; 15] = [
        Self::Block,
        Self::SmallBlock,
        Self::Cylinder,
        Self::Ball,
        Self::Bowl,
        Self::Container,
        Self::Pallet,
        Self::Zone,
        Self::Square,
        Self::Line,
        Self::Ell,
        Self::Fixture,
        Self::Box,
        Self::Stand,
        Self::Corner,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Block => "block",
            Self::SmallBlock => "small_block",
            Self::Cylinder => "cylinder",
            Self::Ball => "ball",
            Self::Bowl => "bowl",
            Self::Container => "container",
            Self::Pallet => "pallet",
            Self::Zone => "zone",
            Self::Square => "square",
            Self::Line => "line",
            Self::Ell => "ell",
            Self::Fixture => "fixture",
            Self::Box => "box",
            Self::Stand => "stand",
            Self::Corner => "corner",
        }
    }

    pub fn footprint(self) -> FootprintShape {
        match self {
            Self::Cylinder | Self::Ball | Self::Bowl | Self::Container | Self::Fixture => FootprintShape::Disc,
            _ => FootprintShape::Rect,
        }
    }

    /// Kinds that can act as a containment region for the zone metric.
    pub fn is_zone_like(self) -> bool {
        matches!(self, Self::Zone | Self::Bowl | Self::Container | Self::Pallet)
    }

    /// Kinds that receive other objects (placing onto them is intended).
    pub fn is_receptacle(self) -> bool {
        matches!(
            self,
            Self::Zone
                | Self::Bowl
                | Self::Container
                | Self::Pallet
                | Self::Fixture
                | Self::Square
                | Self::Line
                | Self::Stand
                | Self::Corner
        )
    }
}

impl fmt::Display for AssetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AssetKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Blue,
    Green,
    Yellow,
    Orange,
    Purple,
    Pink,
    Cyan,
    Brown,
    White,
    Gray,
}

impl Color {
    pub const ALL: [Color; 11] = [
        Self::Red,
        Self::Blue,
        Self::Green,
        Self::Yellow,
        Self::Orange,
        Self::Purple,
        Self::Pink,
        Self::Cyan,
        Self::Brown,
        Self::White,
        Self::Gray,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Red => "red",
            Self::Blue => "blue",
            Self::Green => "green",
            Self::Yellow => "yellow",
            Self::Orange => "orange",
            Self::Purple => "purple",
            Self::Pink => "pink",
            Self::Cyan => "cyan",
            Self::Brown => "brown",
            Self::White => "white",
            Self::Gray => "gray",
        }
    }

    /// sRGB hex used by renderers.
    pub fn hex(self) -> &'static str {
        match self {
            Self::Red => "#e15759",
            Self::Blue => "#4e79a7",
            Self::Green => "#59a14f",
            Self::Yellow => "#edc948",
            Self::Orange => "#f28e2b",
            Self::Purple => "#b07aa1",
            Self::Pink => "#ff9da7",
            Self::Cyan => "#76b7b2",
            Self::Brown => "#9c755f",
            Self::White => "#f5f5f5",
            Self::Gray => "#bab0ac",
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Color {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Self::ALL.into_iter().find(|c| c.as_str() == s).ok_or(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fixity {
    #[default]
    Movable,
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum PoseExpr {
    Random,
    Fixed {
        x: f64,
        y: f64,
        yaw: f64,
    },
    Relative {
        anchor: String,
        dx: f64,
        dy: f64,
        dz: f64,
        yaw: f64,
    },
    PoseOf {
        anchor: String,
    },
}

impl PoseExpr {
    pub fn anchor(&self) -> Option<&str> {
        match self {
            Self::Relative { anchor, .. } | Self::PoseOf { anchor } => Some(anchor),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssetDecl {
    pub id: String,
    pub kind: AssetKind,
    pub color: Color,
    /// Full x, y, z extents in meters.
    pub size: [f64; 3],
    pub fixity: Fixity,
    pub pose: PoseExpr,
}

impl AssetDecl {
    pub fn is_fixed(&self) -> bool {
        self.fixity == Fixity::Fixed
    }
}

/// Row-major binary N x M matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matches {
    pub rows: usize,
    pub cols: usize,
    pub bits: Vec<bool>,
}

impl Matches {
    pub fn identity(n: usize) -> Self {
        let mut bits = vec![false; n * n];
        for i in 0..n {
            bits[i * n + i] = true;
        }
        Self { rows: n, cols: n, bits }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        i < self.rows && j < self.cols && self.bits[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.bits[i * self.cols + j] = v;
    }
}

/// How a goal's matches matrix was written.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchesExpr {
    Identity,
    Ones,
    Rows(Matches),
}

impl MatchesExpr {
    /// Concrete matrix for `n` objects and `m` targets. Identity is only
    /// defined for square shapes; `None` otherwise.
    pub fn resolve(&self, n: usize, m: usize) -> Option<Matches> {
        match self {
            Self::Identity if n == m => Some(Matches::identity(n)),
            Self::Identity => None,
            Self::Ones => Some(Matches::ones(n, m)),
            Self::Rows(mat) => Some(mat.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Pose,
    Zone,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalDecl {
    pub id: String,
    pub objs: Vec<String>,
    pub targets: Vec<PoseExpr>,
    pub matches: MatchesExpr,
    pub metric: Metric,
    pub rotations: bool,
    pub symmetry: f64,
    pub shared_targets: bool,
    pub step_max_reward: f64,
    /// Per-goal instruction; goals without one use the task's `lang_template`.
    pub lang_goal: Option<String>,
}

/// Source positions of records. Never part of structural equality.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SourceMap {
    pub task: Span,
    pub description: Span,
    pub max_steps: Span,
    pub lang_template: Span,
    pub assets: Vec<Span>,
    pub goals: Vec<Span>,
}

impl PartialEq for SourceMap {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub description: String,
    pub max_steps: u32,
    pub lang_template: Option<String>,
    pub assets: Vec<AssetDecl>,
    pub goals: Vec<GoalDecl>,
    #[serde(skip)]
    pub source_map: SourceMap,
}

impl TaskSpec {
    pub fn asset(&self, id: &str) -> Option<&AssetDecl> {
        self.assets.iter().find(|a| a.id == id)
    }

    pub fn asset_index(&self, id: &str) -> Option<usize> {
        self.assets.iter().position(|a| a.id == id)
    }

    /// Instruction for goal `g`: its own `lang`, else the task template.
    pub fn lang_for_goal(&self, g: usize) -> Option<&str> {
        self.goals[g].lang_goal.as_deref().or(self.lang_template.as_deref())
    }

    /// Placements needed to satisfy every goal.
    pub fn required_placements(&self) -> usize {
        self.goals.iter().map(|g| g.objs.len()).sum()
    }

    pub fn asset_span(&self, i: usize) -> Span {
        self.source_map.assets.get(i).copied().unwrap_or_default()
    }

    pub fn goal_span(&self, i: usize) -> Span {
        self.source_map.goals.get(i).copied().unwrap_or_default()
    }
}

/// `[a-z0-9]+(-[a-z0-9]+)*`
pub fn is_valid_task_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .split('-')
            .all(|part| !part.is_empty() && part.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit()))
}

/// Parse then statically validate. Returns the spec together with the
/// (possibly warning-only) static diagnostics, or parse errors.
pub fn check_source(text: &str) -> Result<(TaskSpec, Vec<Diagnostic>), Vec<Diagnostic>> {
    let spec = parse_task(text)?;
    let diags = validate_static(&spec);
    Ok((spec, diags))
}

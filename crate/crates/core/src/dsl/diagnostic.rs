use std::fmt;

use serde::{Deserialize, Serialize};

/// Every diagnostic the DSL front end, scene builder, oracle and creator can emit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DiagnosticCode {
    // parse
    ParseError,
    UnknownKind,
    UnknownColor,
    DuplicateId,
    UnresolvedReference,
    SizeArity,
    PoseArity,
    InvalidSize,
    EffectorMisuse,
    // static validation
    MatchesShape,
    MatchesEmptyRow,
    RewardSum,
    RewardRange,
    LanguageMotionInconsistency,
    AmbiguousLanguageGoal,
    OversizedObject,
    RandomTargetPose,
    StepBudget,
    GoalObjFixed,
    ZoneTargetKind,
    InvalidSymmetry,
    RepeatedGoalObject,
    // scene build
    RuntimeNoPose,
    RuntimeAnchorUnplaced,
    RuntimeOutOfBounds,
    // oracle episode
    OracleStuck,
    StepBudgetExhausted,
    EpisodeTimeout,
    // creator
    ProviderError,
    MalformedReply,
    NoCodeBlock,
    DuplicateTask,
}

impl DiagnosticCode {
    pub const ALL: [DiagnosticCode; 32] = [
        Self::ParseError,
        Self::UnknownKind,
        Self::UnknownColor,
        Self::DuplicateId,
        Self::UnresolvedReference,
        Self::SizeArity,
        Self::PoseArity,
        Self::InvalidSize,
        Self::EffectorMisuse,
        Self::MatchesShape,
        Self::MatchesEmptyRow,
        Self::RewardSum,
        Self::RewardRange,
        Self::LanguageMotionInconsistency,
        Self::AmbiguousLanguageGoal,
        Self::OversizedObject,
        Self::RandomTargetPose,
        Self::StepBudget,
        Self::GoalObjFixed,
        Self::ZoneTargetKind,
        Self::InvalidSymmetry,
        Self::RepeatedGoalObject,
        Self::RuntimeNoPose,
        Self::RuntimeAnchorUnplaced,
        Self::RuntimeOutOfBounds,
        Self::OracleStuck,
        Self::StepBudgetExhausted,
        Self::EpisodeTimeout,
        Self::ProviderError,
        Self::MalformedReply,
        Self::NoCodeBlock,
        Self::DuplicateTask,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ParseError => "PARSE_ERROR",
            Self::UnknownKind => "UNKNOWN_KIND",
            Self::UnknownColor => "UNKNOWN_COLOR",
            Self::DuplicateId => "DUPLICATE_ID",
            Self::UnresolvedReference => "UNRESOLVED_REFERENCE",
            Self::SizeArity => "SIZE_ARITY",
            Self::PoseArity => "POSE_ARITY",
            Self::InvalidSize => "INVALID_SIZE",
            Self::EffectorMisuse => "EFFECTOR_MISUSE",
            Self::MatchesShape => "MATCHES_SHAPE",
            Self::MatchesEmptyRow => "MATCHES_EMPTY_ROW",
            Self::RewardSum => "REWARD_SUM",
            Self::RewardRange => "REWARD_RANGE",
            Self::LanguageMotionInconsistency => "LANGUAGE_MOTION_INCONSISTENCY",
            Self::AmbiguousLanguageGoal => "AMBIGUOUS_LANGUAGE_GOAL",
            Self::OversizedObject => "OVERSIZED_OBJECT",
            Self::RandomTargetPose => "RANDOM_TARGET_POSE",
            Self::StepBudget => "STEP_BUDGET",
            Self::GoalObjFixed => "GOAL_OBJ_FIXED",
            Self::ZoneTargetKind => "ZONE_TARGET_KIND",
            Self::InvalidSymmetry => "INVALID_SYMMETRY",
            Self::RepeatedGoalObject => "REPEATED_GOAL_OBJECT",
            Self::RuntimeNoPose => "RUNTIME_NO_POSE",
            Self::RuntimeAnchorUnplaced => "RUNTIME_ANCHOR_UNPLACED",
            Self::RuntimeOutOfBounds => "RUNTIME_OUT_OF_BOUNDS",
            Self::OracleStuck => "ORACLE_STUCK",
            Self::StepBudgetExhausted => "STEP_BUDGET_EXHAUSTED",
            Self::EpisodeTimeout => "EPISODE_TIMEOUT",
            Self::ProviderError => "PROVIDER_ERROR",
            Self::MalformedReply => "MALFORMED_REPLY",
            Self::NoCodeBlock => "NO_CODE_BLOCK",
            Self::DuplicateTask => "DUPLICATE_TASK",
        }
    }
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// 1-based source position. Line 0 means "no source location".
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
    pub end_col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32, end_col: u32) -> Self {
        Self { line, col, end_col }
    }

    pub fn line(line: u32) -> Self {
        Self {
            line,
            col: 1,
            end_col: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    pub severity: Severity,
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl Diagnostic {
    pub fn error(code: DiagnosticCode, span: Span, message: impl Into<String>) -> Self {
        Self {
            code,
            severity: Severity::Error,
            line: span.line,
            col: span.col,
            message: message.into(),
        }
    }

    pub fn warning(code: DiagnosticCode, span: Span, message: impl Into<String>) -> Self {
        Self {
            code,
            severity: Severity::Warning,
            line: span.line,
            col: span.col,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}:{}: {} {}: {}", self.line, self.col, sev, self.code, self.message)
    }
}

/// Orders diagnostics by location, then code, keeping the sort stable.
pub(crate) fn sort_diagnostics(diags: &mut [Diagnostic]) {
    diags.sort_by(|a, b| (a.line, a.col, a.code).cmp(&(b.line, b.col, b.code)));
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}

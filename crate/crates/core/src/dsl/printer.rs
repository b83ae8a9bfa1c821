use std::fmt::Write;

use super::{GoalDecl, MatchesExpr, Metric, PoseExpr, TaskSpec, DEFAULT_SYMMETRY};

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Shortest representation that parses back to the same `f64`.
fn num(v: f64) -> String {
    format!("{v}")
}

fn pose(p: &PoseExpr) -> String {
    match p {
        PoseExpr::Random => "random".into(),
        PoseExpr::Fixed { x, y, yaw } => format!("fixed({},{},{})", num(*x), num(*y), num(*yaw)),
        PoseExpr::Relative {
            anchor,
            dx,
            dy,
            dz,
            yaw,
        } => {
            if *yaw == 0.0 && yaw.is_sign_positive() {
                format!("relative({anchor},{},{},{})", num(*dx), num(*dy), num(*dz))
            } else {
                format!(
                    "relative({anchor},{},{},{},{})",
                    num(*dx),
                    num(*dy),
                    num(*dz),
                    num(*yaw)
                )
            }
        }
        PoseExpr::PoseOf { anchor } => format!("pose_of({anchor})"),
    }
}

fn goal_line(g: &GoalDecl) -> String {
    let mut s = format!("goal {} objs=[{}] targets=[", g.id, g.objs.join(","));
    s.push_str(&g.targets.iter().map(pose).collect::<Vec<_>>().join(","));
    s.push_str("] matches=");
    match &g.matches {
        MatchesExpr::Identity => s.push_str("identity"),
        MatchesExpr::Ones => s.push_str("ones"),
        MatchesExpr::Rows(m) => {
            let rows: Vec<String> = m
                .bits
                .chunks(m.cols.max(1))
                .map(|r| r.iter().map(|&b| if b { '1' } else { '0' }).collect())
                .collect();
            let _ = write!(s, "rows:\"{}\"", rows.join(";"));
        }
    }
    s.push_str(match g.metric {
        Metric::Pose => " metric=pose",
        Metric::Zone => " metric=zone",
    });
    if g.rotations {
        s.push_str(" rotations");
    }
    if g.symmetry != DEFAULT_SYMMETRY {
        let _ = write!(s, " symmetry={}", num(g.symmetry));
    }
    if g.shared_targets {
        s.push_str(" shared_targets");
    }
    let _ = write!(s, " max_reward={}", num(g.step_max_reward));
    if let Some(lang) = &g.lang_goal {
        let _ = write!(s, " lang={}", quote(lang));
    }
    s
}

/// Canonical source: fixed record order, no comments, one blank line
/// between the header, asset and goal blocks.
pub fn render_canonical(spec: &TaskSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "task {}", quote(&spec.name));
    let _ = writeln!(out, "description {}", quote(&spec.description));
    let _ = writeln!(out, "max_steps {}", spec.max_steps);
    if let Some(t) = &spec.lang_template {
        let _ = writeln!(out, "lang_template {}", quote(t));
    }
    if !spec.assets.is_empty() {
        out.push('\n');
    }
    for a in &spec.assets {
        let _ = write!(
            out,
            "asset {} kind={} color={} size=({},{},{})",
            a.id,
            a.kind,
            a.color,
            num(a.size[0]),
            num(a.size[1]),
            num(a.size[2])
        );
        if a.is_fixed() {
            out.push_str(" fixed");
        }
        let _ = writeln!(out, " pose={}", pose(&a.pose));
    }
    if !spec.goals.is_empty() {
        out.push('\n');
    }
    for g in &spec.goals {
        out.push_str(&goal_line(g));
        out.push('\n');
    }
    out
}

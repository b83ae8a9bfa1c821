use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;

use super::lexer::{lex_line, Tok, Token};
use super::{
    is_valid_task_name, sort_diagnostics, AssetDecl, AssetKind, Color, Diagnostic, DiagnosticCode as Code, Fixity,
    GoalDecl, Matches, MatchesExpr, Metric, PoseExpr, SourceMap, Span, TaskSpec, DEFAULT_SYMMETRY,
};

/// Parses DSL source. Either a spec satisfying the parse-level invariants
/// (valid name, closed catalog, positive sizes, resolved and backward-only
/// anchors, unique ids) or at least one error diagnostic, never both.
pub fn parse_task(text: &str) -> Result<TaskSpec, Vec<Diagnostic>> {
    let mut p = Parser::default();
    for (idx, line) in text.lines().enumerate() {
        p.line(idx as u32 + 1, line);
    }
    p.finish()
}

/// Byte entry point; invalid UTF-8 is a parse error, not a panic.
pub fn parse_task_bytes(bytes: &[u8]) -> Result<TaskSpec, Vec<Diagnostic>> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse_task(text),
        Err(e) => {
            let prefix = &bytes[..e.valid_up_to()];
            let line = prefix.iter().filter(|&&b| b == b'\n').count() as u32 + 1;
            Err(vec![Diagnostic::error(
                Code::ParseError,
                Span::line(line),
                "source is not valid UTF-8",
            )])
        }
    }
}

type PResult<T> = Result<T, Diagnostic>;

#[derive(Default)]
struct Parser {
    name: Option<String>,
    description: Option<String>,
    max_steps: Option<u32>,
    lang_template: Option<String>,
    assets: Vec<AssetDecl>,
    goals: Vec<GoalDecl>,
    map: SourceMap,
    diags: Vec<Diagnostic>,
    last_line: u32,
    /// Records that appeared but failed to parse; they still count as
    /// present so one bad line does not cascade into more errors.
    seen_records: HashSet<&'static str>,
    broken_ids: HashSet<String>,
}

struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
    line: u32,
    line_len: u32,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn span_here(&self) -> Span {
        match self.peek() {
            Some(t) => Span::new(self.line, t.col, t.end_col),
            None => Span::new(self.line, self.line_len + 1, self.line_len + 1),
        }
    }

    fn err(&self, code: Code, msg: impl Into<String>) -> Diagnostic {
        Diagnostic::error(code, self.span_here(), msg)
    }

    fn describe(t: Option<&Token>) -> String {
        match t.map(|t| &t.tok) {
            None => "end of line".into(),
            Some(Tok::Ident(s)) => format!("`{s}`"),
            Some(Tok::Number(n)) => format!("number {n}"),
            Some(Tok::Str(_)) => "string literal".into(),
            Some(Tok::Punct(c)) => format!("`{c}`"),
        }
    }

    fn is_punct(&self, c: char) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Punct(p), .. }) if *p == c)
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.is_punct(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, c: char) -> PResult<()> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            Err(self.err(
                Code::ParseError,
                format!("expected `{c}`, found {}", Self::describe(self.peek())),
            ))
        }
    }

    fn expect_ident(&mut self, what: &str) -> PResult<(String, Span)> {
        let span = self.span_here();
        match self.peek() {
            Some(Token { tok: Tok::Ident(s), .. }) => {
                self.pos += 1;
                Ok((s.clone(), span))
            }
            other => Err(self.err(
                Code::ParseError,
                format!("expected {what}, found {}", Self::describe(other)),
            )),
        }
    }

    fn expect_string(&mut self, what: &str) -> PResult<String> {
        match self.peek() {
            Some(Token { tok: Tok::Str(s), .. }) => {
                self.pos += 1;
                Ok(s.clone())
            }
            other => Err(self.err(
                Code::ParseError,
                format!("expected quoted {what}, found {}", Self::describe(other)),
            )),
        }
    }

    /// Identifier or quoted word (used for kind/color values).
    fn word(&mut self, what: &str) -> PResult<(String, Span)> {
        let span = self.span_here();
        match self.peek() {
            Some(Token {
                tok: Tok::Ident(s) | Tok::Str(s),
                ..
            }) => {
                self.pos += 1;
                Ok((s.clone(), span))
            }
            other => Err(self.err(
                Code::ParseError,
                format!("expected {what}, found {}", Self::describe(other)),
            )),
        }
    }

    fn term(&mut self) -> PResult<f64> {
        match self.peek() {
            Some(Token {
                tok: Tok::Number(n), ..
            }) => {
                self.pos += 1;
                Ok(*n)
            }
            Some(Token { tok: Tok::Ident(s), .. }) if s == "pi" => {
                self.pos += 1;
                Ok(PI)
            }
            other => Err(self.err(
                Code::ParseError,
                format!("expected a number, found {}", Self::describe(other)),
            )),
        }
    }

    /// `['-'] term (('*' | '/') term)*` where term is a literal or `pi`.
    fn number(&mut self) -> PResult<f64> {
        let negate = self.eat_punct('-');
        let mut v = self.term()?;
        loop {
            if self.eat_punct('*') {
                v *= self.term()?;
            } else if self.is_punct('/') {
                self.pos += 1;
                let span = self.span_here();
                let d = self.term()?;
                if d == 0.0 {
                    return Err(Diagnostic::error(Code::ParseError, span, "division by zero"));
                }
                v /= d;
            } else {
                break;
            }
        }
        if !v.is_finite() {
            return Err(self.err(Code::ParseError, "number is not finite"));
        }
        Ok(if negate { -v } else { v })
    }

    /// Comma separated numbers in parentheses.
    fn number_tuple(&mut self) -> PResult<Vec<f64>> {
        self.expect_punct('(')?;
        let mut out = Vec::new();
        if self.eat_punct(')') {
            return Ok(out);
        }
        loop {
            out.push(self.number()?);
            if self.eat_punct(')') {
                return Ok(out);
            }
            self.expect_punct(',')?;
        }
    }

    fn pose_expr(&mut self) -> PResult<(PoseExpr, Span)> {
        let (head, span) = self.expect_ident("a pose expression")?;
        let arity = |got: usize, want: &str| {
            Diagnostic::error(
                Code::PoseArity,
                span,
                format!("`{head}` takes {want} arguments, got {got}"),
            )
        };
        match head.as_str() {
            "random" => {
                if self.is_punct('(') {
                    let args = self.number_tuple()?;
                    if !args.is_empty() {
                        return Err(arity(args.len(), "no"));
                    }
                }
                Ok((PoseExpr::Random, span))
            }
            "fixed" => {
                let args = self.number_tuple()?;
                if args.len() != 3 {
                    return Err(arity(args.len(), "3 (x, y, yaw)"));
                }
                Ok((
                    PoseExpr::Fixed {
                        x: args[0],
                        y: args[1],
                        yaw: args[2],
                    },
                    span,
                ))
            }
            "relative" => {
                self.expect_punct('(')?;
                let (anchor, _) = self.expect_ident("an anchor asset id")?;
                let mut args = Vec::new();
                while self.eat_punct(',') {
                    args.push(self.number()?);
                }
                self.expect_punct(')')?;
                if args.len() != 3 && args.len() != 4 {
                    return Err(arity(args.len() + 1, "4 or 5 (anchor, dx, dy, dz[, yaw])"));
                }
                Ok((
                    PoseExpr::Relative {
                        anchor,
                        dx: args[0],
                        dy: args[1],
                        dz: args[2],
                        yaw: args.get(3).copied().unwrap_or(0.0),
                    },
                    span,
                ))
            }
            "pose_of" => {
                self.expect_punct('(')?;
                let (anchor, _) = self.expect_ident("an anchor asset id")?;
                if !self.is_punct(')') {
                    let mut extra = 1;
                    while self.eat_punct(',') {
                        let _ = self.next();
                        extra += 1;
                    }
                    return Err(arity(extra, "1 (anchor)"));
                }
                self.expect_punct(')')?;
                Ok((PoseExpr::PoseOf { anchor }, span))
            }
            other => Err(Diagnostic::error(
                Code::ParseError,
                span,
                format!("unknown pose expression `{other}` (expected random, fixed, relative or pose_of)"),
            )),
        }
    }
}

fn parse_matches_rows(s: &str, span: Span) -> PResult<Matches> {
    let rows: Vec<Vec<bool>> = s
        .split(';')
        .map(|row| {
            row.chars()
                .filter(|c| !c.is_whitespace())
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    other => Err(Diagnostic::error(
                        Code::ParseError,
                        span,
                        format!("matches rows may only contain 0 and 1, found `{other}`"),
                    )),
                })
                .collect()
        })
        .collect::<PResult<_>>()?;
    let cols = rows.first().map_or(0, Vec::len);
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Diagnostic::error(
            Code::ParseError,
            span,
            "matches rows must be non-empty and of equal length",
        ));
    }
    Ok(Matches {
        rows: rows.len(),
        cols,
        bits: rows.into_iter().flatten().collect(),
    })
}

impl Parser {
    fn line(&mut self, lineno: u32, line: &str) {
        self.last_line = lineno;
        let toks = match lex_line(line) {
            Ok(t) => t,
            Err(e) => {
                self.diags.push(Diagnostic::error(
                    Code::ParseError,
                    Span::new(lineno, e.col, e.col + 1),
                    e.message,
                ));
                return;
            }
        };
        if toks.is_empty() {
            return;
        }
        let mut cur = Cursor {
            toks: &toks,
            pos: 0,
            line: lineno,
            line_len: line.chars().count() as u32,
        };
        if let Err(d) = self.record(&mut cur) {
            self.diags.push(d);
        }
    }

    fn record(&mut self, cur: &mut Cursor<'_>) -> PResult<()> {
        let (kw, kw_span) = cur.expect_ident("a record keyword")?;
        let line_span = Span::new(cur.line, kw_span.col, kw_span.end_col);
        for known in ["task", "description", "max_steps"] {
            if kw == known {
                self.seen_records.insert(known);
            }
        }
        if kw == "asset" || kw == "goal" {
            if let Some(Token {
                tok: Tok::Ident(id), ..
            }) = cur.peek()
            {
                self.broken_ids.insert(id.clone());
            }
        }
        match kw.as_str() {
            "task" => {
                let name = cur.expect_string("task name")?;
                self.end_of_record(cur)?;
                if self.name.is_some() {
                    return Err(Diagnostic::error(
                        Code::ParseError,
                        line_span,
                        "duplicate `task` record",
                    ));
                }
                if !is_valid_task_name(&name) {
                    return Err(Diagnostic::error(
                        Code::ParseError,
                        line_span,
                        format!("task name `{name}` must be lowercase words joined by hyphens"),
                    ));
                }
                self.name = Some(name);
                self.map.task = line_span;
            }
            "description" => {
                let d = cur.expect_string("description")?;
                self.end_of_record(cur)?;
                if self.description.is_some() {
                    return Err(Diagnostic::error(
                        Code::ParseError,
                        line_span,
                        "duplicate `description` record",
                    ));
                }
                self.description = Some(d);
                self.map.description = line_span;
            }
            "max_steps" => {
                let span = cur.span_here();
                let v = cur.number()?;
                self.end_of_record(cur)?;
                if v.fract() != 0.0 || v < 1.0 || v > u32::MAX as f64 {
                    return Err(Diagnostic::error(
                        Code::ParseError,
                        span,
                        "max_steps must be a positive integer",
                    ));
                }
                if self.max_steps.is_some() {
                    return Err(Diagnostic::error(
                        Code::ParseError,
                        line_span,
                        "duplicate `max_steps` record",
                    ));
                }
                self.max_steps = Some(v as u32);
                self.map.max_steps = line_span;
            }
            "lang_template" => {
                let t = cur.expect_string("language template")?;
                self.end_of_record(cur)?;
                if self.lang_template.is_some() {
                    return Err(Diagnostic::error(
                        Code::ParseError,
                        line_span,
                        "duplicate `lang_template` record",
                    ));
                }
                self.lang_template = Some(t);
                self.map.lang_template = line_span;
            }
            "effector" => {
                let (eff, span) = cur.word("an end effector name")?;
                if eff == "suction" && cur.at_end() {
                    return Ok(());
                }
                let detail = if cur.is_punct('(') {
                    "end effectors are selected by name, not constructed".to_string()
                } else if eff == "suction" {
                    "unexpected tokens after `effector suction`".to_string()
                } else {
                    format!("end effector `{eff}` is not available; only `suction` pick-and-place is supported")
                };
                return Err(Diagnostic::error(Code::EffectorMisuse, span, detail));
            }
            "asset" => {
                let asset = self.asset(cur)?;
                self.broken_ids.remove(&asset.id);
                self.assets.push(asset);
                self.map.assets.push(line_span);
            }
            "goal" => {
                let goal = self.goal(cur)?;
                self.broken_ids.remove(&goal.id);
                self.goals.push(goal);
                self.map.goals.push(line_span);
            }
            other => {
                return Err(Diagnostic::error(
                    Code::ParseError,
                    kw_span,
                    format!("unknown record `{other}`"),
                ))
            }
        }
        Ok(())
    }

    fn end_of_record(&self, cur: &Cursor<'_>) -> PResult<()> {
        if cur.at_end() {
            Ok(())
        } else {
            Err(cur.err(Code::ParseError, format!("unexpected {}", Cursor::describe(cur.peek()))))
        }
    }

    /// Reads `name` or `name=` of the next attribute. Returns the attribute
    /// name, its span and whether a value follows.
    fn attr_head(cur: &mut Cursor<'_>, seen: &mut HashSet<String>) -> PResult<(String, Span, bool)> {
        let (name, span) = cur.expect_ident("an attribute")?;
        if !seen.insert(name.clone()) {
            return Err(Diagnostic::error(
                Code::ParseError,
                span,
                format!("attribute `{name}` given twice"),
            ));
        }
        let has_value = cur.eat_punct('=');
        Ok((name, span, has_value))
    }

    fn asset(&mut self, cur: &mut Cursor<'_>) -> PResult<AssetDecl> {
        let (id, id_span) = cur.expect_ident("an asset id")?;
        let mut seen = HashSet::new();
        let mut kind = None;
        let mut color = None;
        let mut size: Option<(Vec<f64>, Span)> = None;
        let mut fixity = Fixity::Movable;
        let mut pose = None;
        while !cur.at_end() {
            let (name, span, has_value) = Self::attr_head(cur, &mut seen)?;
            let flag_only = |v: bool| -> PResult<()> {
                if v {
                    Err(Diagnostic::error(
                        Code::ParseError,
                        span,
                        format!("`{name}` is a flag and takes no value"),
                    ))
                } else {
                    Ok(())
                }
            };
            let need_value = || -> PResult<()> {
                if has_value {
                    Ok(())
                } else {
                    Err(Diagnostic::error(
                        Code::ParseError,
                        span,
                        format!("attribute `{name}` needs a value (`{name}=...`)"),
                    ))
                }
            };
            match name.as_str() {
                "fixed" | "movable" => {
                    flag_only(has_value)?;
                    if seen.contains("fixed") && seen.contains("movable") {
                        return Err(Diagnostic::error(
                            Code::ParseError,
                            span,
                            "asset cannot be both fixed and movable",
                        ));
                    }
                    if name == "fixed" {
                        fixity = Fixity::Fixed;
                    }
                }
                "kind" => {
                    need_value()?;
                    let (w, ws) = cur.word("an asset kind")?;
                    kind =
                        Some(w.parse::<AssetKind>().map_err(|_| {
                            Diagnostic::error(Code::UnknownKind, ws, format!("unknown asset kind `{w}`"))
                        })?);
                }
                "color" => {
                    need_value()?;
                    let (w, ws) = cur.word("a color")?;
                    color = Some(
                        w.parse::<Color>()
                            .map_err(|_| Diagnostic::error(Code::UnknownColor, ws, format!("unknown color `{w}`")))?,
                    );
                }
                "size" => {
                    need_value()?;
                    let vs = cur.span_here();
                    let vals = if cur.is_punct('(') {
                        cur.number_tuple()?
                    } else {
                        vec![cur.number()?]
                    };
                    size = Some((vals, vs));
                }
                "pose" => {
                    need_value()?;
                    pose = Some(cur.pose_expr()?.0);
                }
                other => {
                    return Err(Diagnostic::error(
                        Code::ParseError,
                        span,
                        format!("unknown asset attribute `{other}`"),
                    ))
                }
            }
        }
        let missing =
            |what: &str| Diagnostic::error(Code::ParseError, id_span, format!("asset `{id}` is missing `{what}=`"));
        let kind = kind.ok_or_else(|| missing("kind"))?;
        let color = color.ok_or_else(|| missing("color"))?;
        let (size_vals, size_span) = size.ok_or_else(|| missing("size"))?;
        let pose = pose.ok_or_else(|| missing("pose"))?;
        if size_vals.len() != 3 {
            return Err(Diagnostic::error(
                Code::SizeArity,
                size_span,
                format!("size needs 3 extents (x, y, z), got {}", size_vals.len()),
            ));
        }
        for (axis, &v) in ["x", "y", "z"].iter().zip(&size_vals) {
            let zero_height_ok = *axis == "z" && kind == AssetKind::Zone && v == 0.0;
            if !(v > 0.0 || zero_height_ok) {
                return Err(Diagnostic::error(
                    Code::InvalidSize,
                    size_span,
                    format!("size {axis} extent must be positive, got {v}"),
                ));
            }
        }
        Ok(AssetDecl {
            id,
            kind,
            color,
            size: [size_vals[0], size_vals[1], size_vals[2]],
            fixity,
            pose,
        })
    }

    fn goal(&mut self, cur: &mut Cursor<'_>) -> PResult<GoalDecl> {
        let (id, id_span) = cur.expect_ident("a goal id")?;
        let mut seen = HashSet::new();
        let mut objs = None;
        let mut targets = None;
        let mut matches = None;
        let mut metric = None;
        let mut rotations = false;
        let mut symmetry = DEFAULT_SYMMETRY;
        let mut shared = false;
        let mut reward = None;
        let mut lang = None;
        while !cur.at_end() {
            let (name, span, has_value) = Self::attr_head(cur, &mut seen)?;
            let is_flag = matches!(name.as_str(), "rotations" | "shared_targets");
            if is_flag && has_value {
                return Err(Diagnostic::error(
                    Code::ParseError,
                    span,
                    format!("`{name}` is a flag and takes no value"),
                ));
            }
            let known = matches!(
                name.as_str(),
                "rotations"
                    | "shared_targets"
                    | "objs"
                    | "targets"
                    | "matches"
                    | "metric"
                    | "symmetry"
                    | "max_reward"
                    | "lang"
            );
            if !known {
                return Err(Diagnostic::error(
                    Code::ParseError,
                    span,
                    format!("unknown goal attribute `{name}`"),
                ));
            }
            if !is_flag && !has_value {
                return Err(Diagnostic::error(
                    Code::ParseError,
                    span,
                    format!("attribute `{name}` needs a value (`{name}=...`)"),
                ));
            }
            match name.as_str() {
                "rotations" => rotations = true,
                "shared_targets" => shared = true,
                "objs" => {
                    cur.expect_punct('[')?;
                    let mut list = Vec::new();
                    if !cur.eat_punct(']') {
                        loop {
                            list.push(cur.expect_ident("an object id")?.0);
                            if cur.eat_punct(']') {
                                break;
                            }
                            cur.expect_punct(',')?;
                        }
                    }
                    objs = Some(list);
                }
                "targets" => {
                    cur.expect_punct('[')?;
                    let mut list = Vec::new();
                    if !cur.eat_punct(']') {
                        loop {
                            list.push(cur.pose_expr()?.0);
                            if cur.eat_punct(']') {
                                break;
                            }
                            cur.expect_punct(',')?;
                        }
                    }
                    targets = Some(list);
                }
                "matches" => {
                    let (w, ws) = cur.expect_ident("identity, ones or rows:\"...\"")?;
                    matches = Some(match w.as_str() {
                        "identity" => MatchesExpr::Identity,
                        "ones" => MatchesExpr::Ones,
                        "rows" => {
                            cur.expect_punct(':')?;
                            let s = cur.expect_string("matches rows")?;
                            MatchesExpr::Rows(parse_matches_rows(&s, ws)?)
                        }
                        other => {
                            return Err(Diagnostic::error(
                                Code::ParseError,
                                ws,
                                format!("unknown matches form `{other}`"),
                            ))
                        }
                    });
                }
                "metric" => {
                    let (w, ws) = cur.expect_ident("pose or zone")?;
                    metric = Some(match w.as_str() {
                        "pose" => Metric::Pose,
                        "zone" => Metric::Zone,
                        other => {
                            return Err(Diagnostic::error(
                                Code::ParseError,
                                ws,
                                format!("unknown metric `{other}`"),
                            ))
                        }
                    });
                }
                "symmetry" => symmetry = cur.number()?,
                "max_reward" => reward = Some(cur.number()?),
                "lang" => lang = Some(cur.expect_string("language goal")?),
                _ => unreachable!(),
            }
        }
        let missing =
            |what: &str| Diagnostic::error(Code::ParseError, id_span, format!("goal `{id}` is missing `{what}=`"));
        Ok(GoalDecl {
            objs: objs.ok_or_else(|| missing("objs"))?,
            targets: targets.ok_or_else(|| missing("targets"))?,
            matches: matches.ok_or_else(|| missing("matches"))?,
            metric: metric.ok_or_else(|| missing("metric"))?,
            step_max_reward: reward.ok_or_else(|| missing("max_reward"))?,
            id,
            rotations,
            symmetry,
            shared_targets: shared,
            lang_goal: lang,
        })
    }

    fn check_references(&mut self) {
        let mut ids: HashMap<&str, Span> = HashMap::new();
        let mut declared_before: HashSet<&str> = HashSet::new();
        let mut all_assets: HashSet<&str> = self.assets.iter().map(|a| a.id.as_str()).collect();
        all_assets.extend(self.broken_ids.iter().map(String::as_str));
        declared_before.extend(self.broken_ids.iter().map(String::as_str));
        for (i, a) in self.assets.iter().enumerate() {
            let span = self.map.assets[i];
            if let Some(prev) = ids.insert(a.id.as_str(), span) {
                self.diags.push(Diagnostic::error(
                    Code::DuplicateId,
                    span,
                    format!("id `{}` already declared on line {}", a.id, prev.line),
                ));
            }
            if let Some(anchor) = a.pose.anchor() {
                if !declared_before.contains(anchor) {
                    let why = if all_assets.contains(anchor) {
                        "must be declared before it is used as an anchor"
                    } else {
                        "is not a declared asset"
                    };
                    self.diags.push(Diagnostic::error(
                        Code::UnresolvedReference,
                        span,
                        format!("pose anchor `{anchor}` of asset `{}` {why}", a.id),
                    ));
                }
            }
            declared_before.insert(a.id.as_str());
        }
        for (i, g) in self.goals.iter().enumerate() {
            let span = self.map.goals[i];
            if let Some(prev) = ids.insert(g.id.as_str(), span) {
                self.diags.push(Diagnostic::error(
                    Code::DuplicateId,
                    span,
                    format!("id `{}` already declared on line {}", g.id, prev.line),
                ));
            }
            for o in &g.objs {
                if !all_assets.contains(o.as_str()) {
                    self.diags.push(Diagnostic::error(
                        Code::UnresolvedReference,
                        span,
                        format!("goal `{}` object `{o}` is not a declared asset", g.id),
                    ));
                }
            }
            for t in &g.targets {
                if let Some(anchor) = t.anchor() {
                    if !all_assets.contains(anchor) {
                        self.diags.push(Diagnostic::error(
                            Code::UnresolvedReference,
                            span,
                            format!("goal `{}` target anchor `{anchor}` is not a declared asset", g.id),
                        ));
                    }
                }
            }
        }
    }

    fn finish(mut self) -> Result<TaskSpec, Vec<Diagnostic>> {
        self.check_references();
        let end = Span::line(self.last_line.max(1));
        for (key, what) in [
            ("task", "task \"<name>\""),
            ("description", "description \"<text>\""),
            ("max_steps", "max_steps <int>"),
        ] {
            if !self.seen_records.contains(key) {
                self.diags.push(Diagnostic::error(
                    Code::ParseError,
                    end,
                    format!("missing required record `{what}`"),
                ));
            }
        }
        if !self.diags.is_empty() {
            sort_diagnostics(&mut self.diags);
            return Err(self.diags);
        }
        Ok(TaskSpec {
            name: self.name.unwrap_or_default(),
            description: self.description.unwrap_or_default(),
            max_steps: self.max_steps.unwrap_or(1),
            lang_template: self.lang_template,
            assets: self.assets,
            goals: self.goals,
            source_map: self.map,
        })
    }
}

//! Prompt assembly and reply parsing for the three provider-facing stages.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dsl::{AssetKind, Color};

macro_rules! template {
    ($file:literal) => {
        include_str!(concat!("../../../../prompts/", $file))
    };
}

pub const SYSTEM: &str = template!("system.txt");
pub const SYSTEM_GOAL: &str = template!("system_goal.txt");
pub const BAD_EXAMPLES: &str = template!("bad_examples.txt");
pub const RULES: &str = template!("rules.txt");
pub const DESCRIPTION: &str = template!("description.txt");
pub const DESCRIPTION_GOAL: &str = template!("description_goal.txt");
pub const IMPLEMENTATION: &str = template!("implementation.txt");
pub const CRITIC: &str = template!("critic.txt");
pub const FINETUNE: &str = template!("finetune.txt");
pub const PICK_REFS: &str = template!("pick_refs.txt");

pub const ASSETS_HEADER: &str = "Here are all the assets. Use only these assets in the task and code design.";
pub const REFERENCES_HEADER: &str =
    "Here are some examples of good tasks. Try to learn from these structures but avoid overlapping with them.";
pub const PAST_HEADER: &str = "Here are some tasks that you have come up with before. Try to learn from these structures but avoid overlapping with these tasks. For instance, `bowl-ball-placement` and `sort-balls-in-bowls` are the same task. `pile-boxes-in-corner` and `stack-blocks-into-pallet` are similar tasks.";
pub const BAD_HEADER: &str = "Here are some bad example task instances with explanations.";
pub const RULES_HEADER: &str = "Note that";

/// Rough token count used for trimming: one token per four bytes.
pub fn approx_tokens(s: &str) -> usize {
    s.len().div_ceil(4)
}

pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{{{k}}}}}"), v);
    }
    out
}

fn kind_note(k: AssetKind) -> &'static str {
    match k {
        AssetKind::Block => "cube, picked by suction",
        AssetKind::SmallBlock => "small cube",
        AssetKind::Cylinder => "upright cylinder",
        AssetKind::Ball => "sphere",
        AssetKind::Bowl => "open bowl, objects can be placed inside",
        AssetKind::Container => "open box, objects can be placed inside",
        AssetKind::Pallet => "flat pallet to stack on",
        AssetKind::Zone => "flat marked area on the table",
        AssetKind::Square => "square outline on the table",
        AssetKind::Line => "thin line marked on the table",
        AssetKind::Ell => "L-shaped block",
        AssetKind::Fixture => "holder with a slot for an ell",
        AssetKind::Box => "cuboid box",
        AssetKind::Stand => "short stand",
        AssetKind::Corner => "corner marker",
    }
}

pub fn asset_catalog() -> String {
    let mut s = String::new();
    for k in AssetKind::ALL {
        s += &format!("- {k}: {}\n", kind_note(k));
    }
    let colors: Vec<&str> = Color::ALL.iter().map(|c| c.as_str()).collect();
    s += &format!("Colors: {}.", colors.join(", "));
    s
}

/// The parts of a description prompt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub assets: String,
    /// Rendered reference tasks, most similar first.
    pub references: Vec<String>,
    /// Library names, oldest first.
    pub past_names: Vec<String>,
    pub bad_examples: String,
    pub rules: String,
    pub instruction: String,
}

impl PromptBundle {
    /// User message text. Past names are dropped oldest first until the
    /// whole prompt fits in `budget_tokens`; the other sections are never
    /// trimmed.
    pub fn render_user(&self, budget_tokens: usize) -> String {
        let mut names: &[String] = &self.past_names;
        loop {
            let text = self.render_with(names);
            if approx_tokens(&self.system) + approx_tokens(&text) <= budget_tokens || names.is_empty() {
                return text;
            }
            names = &names[1..];
        }
    }

    fn render_with(&self, names: &[String]) -> String {
        let refs = self.references.join("\n\n");
        format!(
            "{ASSETS_HEADER}\n{}\n\n{REFERENCES_HEADER}\n{refs}\n\n{PAST_HEADER}\n{}\n\n{BAD_HEADER}\n{}\n\n{}\n\n{RULES_HEADER}\n{}",
            self.assets.trim_end(),
            names.join("\n"),
            self.bad_examples.trim_end(),
            self.instruction.trim_end(),
            self.rules.trim_end(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub task_name: String,
    pub task_description: String,
    pub assets_used: Vec<String>,
}

impl Proposal {
    pub fn summary(&self) -> String {
        format!(
            "task-name: {}\ntask-description: {}\nassets-used: [{}]",
            self.task_name,
            self.task_description,
            self.assets_used.join(", ")
        )
    }
}

static NAME_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[a-z0-9]+(-[a-z0-9]+)*$").unwrap());
static FENCE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)```[A-Za-z0-9_-]*[ \t]*\r?\n(.*?)```").unwrap());
static VOTE_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?i)(?:add to task library\?|"?add_to_the_task_list"?)\s*:\s*"?(yes|no|true|false)\b"#).unwrap()
});
static REASON_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)reasons?\s*:\s*(.*)").unwrap());

/// Maps catalog names and asset paths such as `block/block.urdf` or
/// `ball/ball-template.urdf` to kinds; anything else is dropped.
pub fn normalize_asset(s: &str) -> Option<AssetKind> {
    let stem = s.rsplit('/').next().unwrap_or(s);
    let stem = stem.strip_suffix(".urdf").unwrap_or(stem);
    let stem = stem.strip_suffix("-template").unwrap_or(stem);
    stem.trim().replace('-', "_").parse().ok()
}

/// Parses the dictionary in a description reply. JSON and Python-style
/// single-quoted dictionaries are both accepted.
pub fn parse_proposal(reply: &str) -> Result<Proposal, String> {
    let start = reply.find('{').ok_or("no dictionary in the reply")?;
    let end = reply
        .rfind('}')
        .filter(|&e| e > start)
        .ok_or("unterminated dictionary")?;
    let body = &reply[start..=end];
    let value: serde_json::Value = serde_json::from_str(body)
        .or_else(|_| serde_json::from_str(&body.replace('\'', "\"")))
        .map_err(|e| format!("dictionary is not valid: {e}"))?;
    let field = |k: &str| {
        value
            .get(k)
            .and_then(|v| v.as_str())
            .map(str::trim)
            .filter(|s| !s.is_empty())
    };
    let name = field("task-name").ok_or("missing \"task-name\"")?;
    if !NAME_RE.is_match(name) {
        return Err(format!(
            "task name `{name}` is not lower-case words separated by hyphens"
        ));
    }
    let description = field("task-description").ok_or("missing \"task-description\"")?;
    let assets = value
        .get("assets-used")
        .and_then(|v| v.as_array())
        .ok_or("missing \"assets-used\" list")?;
    let mut kinds: Vec<String> = Vec::new();
    for a in assets.iter().filter_map(|a| a.as_str()) {
        match normalize_asset(a) {
            Some(k) if !kinds.iter().any(|x| x == k.as_str()) => kinds.push(k.as_str().into()),
            Some(_) => {}
            None => log::warn!("dropping unknown asset `{a}` from proposal `{name}`"),
        }
    }
    Ok(Proposal {
        task_name: name.into(),
        task_description: description.into(),
        assets_used: kinds,
    })
}

/// The first fenced block. Later blocks are ignored with a warning.
pub fn extract_code_block(reply: &str) -> Option<String> {
    let mut blocks = FENCE_RE.captures_iter(reply);
    let first = blocks.next()?.get(1)?.as_str().to_string();
    if blocks.next().is_some() {
        log::warn!("reply has more than one code block; using the first");
    }
    Some(first)
}

/// Library names mentioned in a reference-pick reply, in reply order,
/// without repeats.
pub fn parse_picked_names<'a>(reply: &str, names: &'a [String]) -> Vec<&'a str> {
    let mut found: Vec<(usize, &str)> = names
        .iter()
        .filter_map(|n| {
            let re = Regex::new(&format!(r"(^|[^a-z0-9-]){}($|[^a-z0-9-])", regex::escape(n))).ok()?;
            re.find(reply).map(|m| (m.start(), n.as_str()))
        })
        .collect();
    found.sort();
    found.into_iter().map(|(_, n)| n).collect()
}

pub fn parse_vote(reply: &str) -> Option<(bool, String)> {
    let caps = VOTE_RE.captures(reply)?;
    let accept = matches!(caps[1].to_ascii_lowercase().as_str(), "yes" | "true");
    let reason = REASON_RE
        .captures(reply)
        .map(|c| c[1].trim().to_string())
        .unwrap_or_else(|| reply.trim().to_string());
    Some((accept, reason))
}

//! Deterministic mutations of the seed tasks for stage fuzzing.

use gensim_core::dsl::{AssetKind, Color};
use gensim_core::rng::SceneRng;
use gensim_core::seeds::SEED_TASKS;

const NUMBERS: [&str; 10] = ["0", "-1", "0.5", "0.02", "0.3", "2", "1e9", "1/3", "pi", "-0.04"];

fn pick<'a, T>(rng: &mut SceneRng, xs: &'a [T]) -> &'a T {
    &xs[(rng.next_u64() % xs.len() as u64) as usize]
}

fn words(src: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in src.char_indices() {
        let w = c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.';
        match (w, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, src.len()));
    }
    out
}

fn mutate_once(src: &str, rng: &mut SceneRng) -> String {
    let lines: Vec<&str> = src.lines().collect();
    let li = (rng.next_u64() % lines.len() as u64) as usize;
    let lj = (rng.next_u64() % lines.len() as u64) as usize;
    match rng.next_u64() % 8 {
        0 => {
            let mut l = lines.clone();
            l.remove(li);
            l.join("\n")
        }
        1 => {
            let mut l = lines.clone();
            l.insert(lj, lines[li]);
            l.join("\n")
        }
        2 => {
            let mut l = lines.clone();
            l.swap(li, lj);
            l.join("\n")
        }
        3 | 4 => {
            let ws = words(src);
            let &(a, b) = pick(rng, &ws);
            let word = &src[a..b];
            let repl = if word.parse::<f64>().is_ok() {
                pick(rng, &NUMBERS).to_string()
            } else if word.parse::<AssetKind>().is_ok() {
                pick(rng, &AssetKind::ALL).to_string()
            } else if word.parse::<Color>().is_ok() {
                pick(rng, &Color::ALL).to_string()
            } else {
                let &(c, d) = pick(rng, &ws);
                src[c..d].to_string()
            };
            format!("{}{}{}", &src[..a], repl, &src[b..])
        }
        5 => {
            let cut = (rng.next_u64() % src.len() as u64) as usize;
            let len = 1 + (rng.next_u64() % 12) as usize;
            let (a, b) = (floor(src, cut), floor(src, (cut + len).min(src.len())));
            format!("{}{}", &src[..a], &src[b..])
        }
        6 => {
            let at = floor(src, (rng.next_u64() % src.len() as u64) as usize);
            let c = *pick(rng, &['"', '(', ')', ',', '[', ']', '=', ' ', '\n', '#', 'x', '9']);
            format!("{}{}{}", &src[..at], c, &src[at..])
        }
        _ => lines
            .iter()
            .map(|l| {
                if l.starts_with("goal") {
                    l.replacen("max_reward=", "max_reward=0.9*", 1)
                } else {
                    l.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("\n"),
    }
}

fn floor(s: &str, mut i: usize) -> usize {
    while !s.is_char_boundary(i) {
        i -= 1;
    }
    i
}

/// `n` sources, each a seed task with one to three mutations.
pub fn corpus(n: usize, seed: u64) -> Vec<String> {
    let mut rng = SceneRng::new(seed);
    (0..n)
        .map(|_| {
            let mut s = pick(&mut rng, &SEED_TASKS).1.to_string();
            for _ in 0..1 + rng.next_u64() % 3 {
                if s.is_empty() {
                    break;
                }
                s = mutate_once(&s, &mut rng);
            }
            s
        })
        .collect()
}

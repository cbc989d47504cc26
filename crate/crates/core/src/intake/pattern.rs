//! Rule-based extraction of pickup, drop-off and payload from free text.

use std::sync::OnceLock;

use regex::Regex;

use super::{resolve, Candidates, ExtractionResult};
use crate::skyway::SkywayNetwork;

#[derive(Debug, Clone, PartialEq)]
enum Token<'a> {
    Number(&'a str),
    Word(&'a str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Pickup,
    Drop,
}

const PICKUP_CUES: &[&[&str]] =
    &[&["pick", "up"], &["pickup"], &["pick-up"], &["from"], &["start"], &["starting"], &["collect"]];

const DROP_CUES: &[&[&str]] = &[
    &["deliver"],
    &["delivered"],
    &["drop-off"],
    &["dropoff"],
    &["drop", "off"],
    &["dropped", "off"],
    &["destination"],
    &["to"],
];

const UNITS: &[&str] = &["kg", "kgs", "kilogram", "kilograms", "kilo", "kilos"];
const NODE_WORDS: &[&str] = &["node", "station"];

fn tokenizer() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(\d+(?:\.\d+)?)|([a-z]+(?:-[a-z]+)*)").expect("valid regex"))
}

fn tokenize(lower: &str) -> Vec<Token<'_>> {
    tokenizer()
        .captures_iter(lower)
        .map(|c| match c.get(1) {
            Some(n) => Token::Number(n.as_str()),
            None => Token::Word(c.get(2).expect("one group matches").as_str()),
        })
        .collect()
}

fn word<'a>(tokens: &[Token<'a>], i: usize) -> Option<&'a str> {
    match tokens.get(i) {
        Some(Token::Word(w)) => Some(*w),
        _ => None,
    }
}

/// Cue that ends exactly at token `end` (inclusive), if any.
fn cue_ending_at(tokens: &[Token<'_>], end: usize) -> Option<Role> {
    for (role, cues) in [(Role::Pickup, PICKUP_CUES), (Role::Drop, DROP_CUES)] {
        for cue in cues {
            let Some(start) = (end + 1).checked_sub(cue.len()) else { continue };
            if cue.iter().enumerate().all(|(k, w)| word(tokens, start + k) == Some(w)) {
                return Some(role);
            }
        }
    }
    None
}

/// Extract fields with the fixed cue vocabulary. Node roles come from the
/// nearest cue between the previous node mention and this one; a mention
/// with no cue of its own keeps the role of the mention before it.
pub fn extract_pattern(text: &str, net: &SkywayNetwork) -> ExtractionResult {
    let lower = text.to_lowercase();
    let tokens = tokenize(&lower);
    let mut cands = Candidates::default();

    for (i, t) in tokens.iter().enumerate() {
        if let Token::Number(n) = t {
            if word(&tokens, i + 1).is_some_and(|w| UNITS.contains(&w)) {
                cands.payload = n.parse().ok();
                break;
            }
        }
    }

    let mut window_start = 0;
    let mut last_role = None;
    for i in 1..tokens.len() {
        let Token::Number(n) = tokens[i] else { continue };
        if !word(&tokens, i - 1).is_some_and(|w| NODE_WORDS.contains(&w)) {
            continue;
        }
        // Payload numerals such as "node 3 kg" never happen in practice but
        // must not double as node ids.
        if word(&tokens, i + 1).is_some_and(|w| UNITS.contains(&w)) {
            continue;
        }
        let role = (window_start..i - 1).rev().find_map(|end| cue_ending_at(&tokens, end)).or(last_role);
        window_start = i + 1;
        // Decimal "ids" are not station ids; record them as unknown.
        let id = n.parse::<u64>().unwrap_or(u64::MAX);
        match role {
            Some(Role::Pickup) => cands.start.push(id),
            Some(Role::Drop) => cands.destination.push(id),
            None => {}
        }
        last_role = role;
    }

    resolve(cands, net)
}

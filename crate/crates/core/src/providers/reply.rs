//! Line-oriented reply grammar. The first line starting with a directive
//! allowed at the current stage is the decision; every other line is rationale.
//!
//! ```text
//! BRANCH <n> | BRANCH FRESH
//! SELECT <i[,j,...]> [STRENGTH <x>] [MODE structure|color|both]
//! TOGGLE_COLOR
//! PUBLISH <n> TITLE "<title>"
//! RATE <i>=<s>[,<i>=<s>...]
//! ```
//!
//! Indices are zero-based positions in what was presented.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::archive::{MAX_RATING, MIN_RATING};
use crate::neat::MutationMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Branch,
    Select,
    Publish,
    Rate,
}

impl Stage {
    fn keywords(self) -> &'static [&'static str] {
        match self {
            Stage::Branch => &["BRANCH"],
            Stage::Select => &["SELECT", "TOGGLE_COLOR", "PUBLISH"],
            Stage::Publish => &["PUBLISH"],
            Stage::Rate => &["RATE"],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    /// `None` starts fresh.
    Branch(Option<usize>),
    Select {
        indices: Vec<usize>,
        strength: Option<f64>,
        mode: Option<MutationMode>,
    },
    Toggle,
    Publish {
        index: usize,
        title: String,
    },
    Ratings(BTreeMap<usize, u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentReply {
    pub decision: Decision,
    pub rationale: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplyError {
    #[error("no directive for this stage in the reply")]
    NoDirective,
    #[error("index {index} out of range, {presented} presented")]
    OutOfRange { index: usize, presented: usize },
    #[error("malformed directive `{line}`: {reason}")]
    Malformed { line: String, reason: String },
}

fn mode_name(m: MutationMode) -> &'static str {
    match m {
        MutationMode::StructureOnly => "structure",
        MutationMode::ColorOnly => "color",
        MutationMode::Both => "both",
    }
}

fn parse_mode(s: &str) -> Option<MutationMode> {
    match s.to_ascii_lowercase().as_str() {
        "structure" => Some(MutationMode::StructureOnly),
        "color" | "colour" => Some(MutationMode::ColorOnly),
        "both" => Some(MutationMode::Both),
        _ => None,
    }
}

impl fmt::Display for Decision {
    /// The canonical directive line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Branch(None) => write!(f, "BRANCH FRESH"),
            Decision::Branch(Some(i)) => write!(f, "BRANCH {i}"),
            Decision::Select {
                indices,
                strength,
                mode,
            } => {
                let list: Vec<String> = indices.iter().map(usize::to_string).collect();
                write!(f, "SELECT {}", list.join(","))?;
                if let Some(s) = strength {
                    write!(f, " STRENGTH {s}")?;
                }
                if let Some(m) = mode {
                    write!(f, " MODE {}", mode_name(*m))?;
                }
                Ok(())
            }
            Decision::Toggle => write!(f, "TOGGLE_COLOR"),
            Decision::Publish { index, title } => write!(f, "PUBLISH {index} TITLE \"{title}\""),
            Decision::Ratings(scores) => {
                let list: Vec<String> = scores.iter().map(|(i, s)| format!("{i}={s}")).collect();
                write!(f, "RATE {}", list.join(","))
            }
        }
    }
}

struct LineParser<'a> {
    line: &'a str,
    presented: usize,
}

impl LineParser<'_> {
    fn fail<T>(&self, reason: impl Into<String>) -> Result<T, ReplyError> {
        Err(ReplyError::Malformed {
            line: self.line.to_string(),
            reason: reason.into(),
        })
    }

    fn index(&self, s: &str) -> Result<usize, ReplyError> {
        let index: usize = match s.trim().parse() {
            Ok(i) => i,
            Err(_) => return self.fail(format!("`{s}` is not an index")),
        };
        if index >= self.presented {
            return Err(ReplyError::OutOfRange {
                index,
                presented: self.presented,
            });
        }
        Ok(index)
    }

    fn parse(&self, keyword: &str, rest: &str) -> Result<Decision, ReplyError> {
        match keyword {
            "BRANCH" => match rest.trim() {
                r if r.eq_ignore_ascii_case("fresh") => Ok(Decision::Branch(None)),
                r => Ok(Decision::Branch(Some(self.index(r)?))),
            },
            "TOGGLE_COLOR" if rest.trim().is_empty() => Ok(Decision::Toggle),
            "TOGGLE_COLOR" => self.fail("unexpected text after TOGGLE_COLOR"),
            "SELECT" => self.select(rest),
            "PUBLISH" => self.publish(rest),
            "RATE" => self.rate(rest),
            _ => unreachable!("keyword list and parser disagree"),
        }
    }

    fn select(&self, rest: &str) -> Result<Decision, ReplyError> {
        let mut words = rest.split_whitespace();
        let Some(list) = words.next() else {
            return self.fail("SELECT needs at least one index");
        };
        let mut indices = Vec::new();
        for part in list.split(',') {
            let i = self.index(part)?;
            if indices.contains(&i) {
                return self.fail(format!("index {i} repeated"));
            }
            indices.push(i);
        }
        let (mut strength, mut mode) = (None, None);
        while let Some(word) = words.next() {
            let Some(value) = words.next() else {
                return self.fail(format!("{word} needs a value"));
            };
            match word {
                "STRENGTH" if strength.is_none() => match value.parse::<f64>() {
                    Ok(x) if x.is_finite() => strength = Some(x),
                    _ => return self.fail(format!("`{value}` is not a number")),
                },
                "MODE" if mode.is_none() => match parse_mode(value) {
                    Some(m) => mode = Some(m),
                    None => return self.fail(format!("unknown mode `{value}`")),
                },
                _ => return self.fail(format!("unexpected `{word}`")),
            }
        }
        Ok(Decision::Select {
            indices,
            strength,
            mode,
        })
    }

    fn publish(&self, rest: &str) -> Result<Decision, ReplyError> {
        let rest = rest.trim_start();
        let (num, tail) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
        let index = self.index(num)?;
        let Some(tail) = tail.trim_start().strip_prefix("TITLE") else {
            return self.fail("PUBLISH needs TITLE \"...\"");
        };
        let (Some(open), Some(close)) = (tail.find('"'), tail.rfind('"')) else {
            return self.fail("title must be quoted");
        };
        if open == close || !tail[..open].trim().is_empty() {
            return self.fail("title must be quoted");
        }
        Ok(Decision::Publish {
            index,
            title: tail[open + 1..close].to_string(),
        })
    }

    fn rate(&self, rest: &str) -> Result<Decision, ReplyError> {
        let mut scores = BTreeMap::new();
        for pair in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let Some((i, s)) = pair.split_once('=') else {
                return self.fail(format!("`{pair}` is not <index>=<score>"));
            };
            let index = self.index(i)?;
            let score = match s.trim().parse::<u8>() {
                Ok(v) if (MIN_RATING..=MAX_RATING).contains(&v) => v,
                _ => return self.fail(format!("score `{s}` outside {MIN_RATING}..={MAX_RATING}")),
            };
            if scores.insert(index, score).is_some() {
                return self.fail(format!("index {index} rated twice"));
            }
        }
        if scores.is_empty() {
            return self.fail("RATE needs at least one score");
        }
        Ok(Decision::Ratings(scores))
    }
}

/// Parses a reply for `stage`, where `presented` is the number of images
/// (population members or sample entries) shown.
pub fn parse_reply(text: &str, stage: Stage, presented: usize) -> Result<AgentReply, ReplyError> {
    let lines: Vec<&str> = text.lines().collect();
    for (n, raw) in lines.iter().enumerate() {
        let line = raw.trim();
        let (keyword, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        if !stage.keywords().contains(&keyword) {
            continue;
        }
        let decision = LineParser { line, presented }.parse(keyword, rest)?;
        let rationale = lines
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != n)
            .map(|(_, l)| l.trim())
            .filter(|l| !l.is_empty())
            .collect::<Vec<_>>()
            .join("\n");
        return Ok(AgentReply {
            decision,
            rationale,
        });
    }
    Err(ReplyError::NoDirective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grammar_examples() {
        let r = parse_reply("SELECT 3,7 STRENGTH 0.4", Stage::Select, 15).unwrap();
        assert_eq!(
            r.decision,
            Decision::Select {
                indices: vec![3, 7],
                strength: Some(0.4),
                mode: None
            }
        );
        let r = parse_reply("PUBLISH 14 TITLE \"Sunset Gate\"", Stage::Publish, 15).unwrap();
        assert_eq!(
            r.decision,
            Decision::Publish {
                index: 14,
                title: "Sunset Gate".into()
            }
        );
        assert_eq!(
            parse_reply("SELECT 99", Stage::Select, 15),
            Err(ReplyError::OutOfRange {
                index: 99,
                presented: 15
            })
        );
        let r = parse_reply("SELECT 3", Stage::Select, 15).unwrap();
        assert_eq!(
            r.decision,
            Decision::Select {
                indices: vec![3],
                strength: None,
                mode: None
            }
        );
    }

    #[test]
    fn rationale_is_everything_else() {
        let text = "I like the stripes.\nBRANCH 4\nThey look like a fence.";
        let r = parse_reply(text, Stage::Branch, 100).unwrap();
        assert_eq!(r.decision, Decision::Branch(Some(4)));
        assert_eq!(r.rationale, "I like the stripes.\nThey look like a fence.");
    }

    #[test]
    fn first_directive_for_the_stage_wins() {
        let text = "RATE 1=5\nSELECT 2\nSELECT 5";
        let r = parse_reply(text, Stage::Select, 15).unwrap();
        assert_eq!(r.decision, Decision::Select { indices: vec![2], strength: None, mode: None });
        assert!(r.rationale.contains("RATE 1=5"));
        assert_eq!(parse_reply(text, Stage::Branch, 15), Err(ReplyError::NoDirective));
    }

    #[test]
    fn malformed_directives_fail() {
        for (text, stage) in [
            ("SELECT", Stage::Select),
            ("SELECT 1,1", Stage::Select),
            ("SELECT 1 STRENGTH x", Stage::Select),
            ("SELECT 1 MODE rainbow", Stage::Select),
            ("PUBLISH 2 TITLE untitled", Stage::Publish),
            ("PUBLISH two TITLE \"a\"", Stage::Publish),
            ("RATE 1=6", Stage::Rate),
            ("RATE 1=2,1=3", Stage::Rate),
            ("BRANCH maybe", Stage::Branch),
        ] {
            assert!(
                matches!(parse_reply(text, stage, 15), Err(ReplyError::Malformed { .. })),
                "{text}"
            );
        }
    }

    #[test]
    fn title_spans_outer_quotes() {
        let r = parse_reply("PUBLISH 0 TITLE \"The \"big\" one\"", Stage::Publish, 1).unwrap();
        assert_eq!(
            r.decision,
            Decision::Publish {
                index: 0,
                title: "The \"big\" one".into()
            }
        );
    }

    fn decision() -> impl Strategy<Value = Decision> {
        let mode = prop_oneof![
            Just(MutationMode::StructureOnly),
            Just(MutationMode::ColorOnly),
            Just(MutationMode::Both)
        ];
        prop_oneof![
            proptest::option::of(0usize..100).prop_map(Decision::Branch),
            (
                proptest::sample::subsequence((0usize..15).collect::<Vec<_>>(), 1..=15).prop_shuffle(),
                proptest::option::of(0.01f64..=1.0),
                proptest::option::of(mode)
            )
                .prop_map(|(indices, strength, mode)| Decision::Select {
                    indices,
                    strength,
                    mode
                }),
            Just(Decision::Toggle),
            (0usize..15, "[^\r\n]{0,30}").prop_map(|(index, title)| Decision::Publish { index, title }),
            proptest::collection::btree_map(0usize..100, 1u8..=5, 1..20).prop_map(Decision::Ratings),
        ]
    }

    fn stage_of(d: &Decision) -> Stage {
        match d {
            Decision::Branch(_) => Stage::Branch,
            Decision::Select { .. } | Decision::Toggle => Stage::Select,
            Decision::Publish { .. } => Stage::Publish,
            Decision::Ratings(_) => Stage::Rate,
        }
    }

    proptest! {
        #[test]
        fn directive_round_trip(d in decision(), why in "[a-z ]{0,40}") {
            let text = format!("{d}\n{why}");
            let parsed = parse_reply(&text, stage_of(&d), 100).unwrap();
            prop_assert_eq!(parsed.decision, d);
            prop_assert_eq!(parsed.rationale, why.trim().to_string());
        }
    }
}

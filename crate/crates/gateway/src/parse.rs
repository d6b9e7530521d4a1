use std::collections::BTreeMap;
use std::sync::OnceLock;

use clarify_core::clusters::Verdict;
use clarify_core::model::SegmentType;
use regex::Regex;
use serde::Deserialize;

use crate::error::{GatewayError, Result};
use crate::templates::Stage;

/// Tag names accepted in model outputs, keyed by their uppercase form.
#[derive(Debug, Clone, Deserialize)]
pub struct TagTable {
    segment_types: BTreeMap<String, SegmentType>,
    verdicts: BTreeMap<String, Verdict>,
}

impl TagTable {
    pub fn builtin() -> &'static TagTable {
        static T: OnceLock<TagTable> = OnceLock::new();
        T.get_or_init(|| {
            let mut t: TagTable = toml::from_str(include_str!("../templates/tags.toml")).expect("bundled tag table");
            t.segment_types = t.segment_types.into_iter().map(|(k, v)| (k.to_uppercase(), v)).collect();
            t.verdicts = t.verdicts.into_iter().map(|(k, v)| (k.to_uppercase(), v)).collect();
            t
        })
    }

    pub fn segment_type(&self, tag: &str) -> Option<SegmentType> {
        self.segment_types.get(&tag.trim().to_uppercase()).copied()
    }

    pub fn verdict(&self, token: &str) -> Option<Verdict> {
        self.verdicts.get(&token.trim().to_uppercase()).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clarification {
    pub text: String,
    pub misformulation: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedOutput {
    Units(Vec<String>),
    Segments(Vec<(SegmentType, String)>),
    Clarification(Clarification),
    Verdict(Verdict),
}

fn parse_err(stage: Stage, message: &str, raw: &str) -> GatewayError {
    GatewayError::Parse { stage, message: message.to_string(), raw: raw.to_string() }
}

/// Lines starting with `-`, bullet and surrounding whitespace removed.
pub fn parse_unit_list(raw: &str) -> Result<Vec<String>> {
    let units: Vec<String> = raw
        .lines()
        .filter_map(|l| l.trim_start().strip_prefix('-'))
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    if units.is_empty() {
        return Err(parse_err(Stage::AuExtraction, "no list items", raw));
    }
    Ok(units)
}

pub fn parse_typed_segments(raw: &str) -> Result<Vec<(SegmentType, String)>> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"^\s*-\s*\[\s*([^\]]+?)\s*\]\s*(.+?)\s*$").expect("valid regex"));
    let table = TagTable::builtin();
    let segs: Vec<_> = raw
        .lines()
        .filter_map(|l| re.captures(l))
        .filter_map(|c| table.segment_type(&c[1]).map(|t| (t, c[2].to_string())))
        .collect();
    if segs.is_empty() {
        return Err(parse_err(Stage::AsDetection, "no typed segments", raw));
    }
    Ok(segs)
}

fn preamble_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?is)^\s*(?:voici\b|here\s+is\b|here's\b|l['’]argument\b|the\s+argument\b|argument\s+clarifi|clarified\s+argument|clarification\b|reformulation\b|en\s+r[ée]sum[ée]\b|in\s+short\b|in\s+summary\b)[^\n:]*?:\s*",
        )
        .expect("valid regex")
    })
}

const WRAPPERS: [(&str, &str); 7] =
    [("**", "**"), ("__", "__"), ("*", "*"), ("_", "_"), ("\"", "\""), ("«", "»"), ("“", "”")];

fn strip_once(s: &str) -> Option<String> {
    let t = s.trim();
    if let Some(m) = preamble_re().find(t) {
        let rest = &t[m.end()..];
        if !rest.trim().is_empty() {
            return Some(rest.to_string());
        }
    }
    if let Some((first, rest)) = t.split_once('\n') {
        if first.trim_end().ends_with(':') && !rest.trim().is_empty() {
            return Some(rest.to_string());
        }
    }
    for (open, close) in WRAPPERS {
        if t.len() > open.len() + close.len() {
            if let Some(inner) = t.strip_prefix(open).and_then(|r| r.strip_suffix(close)) {
                if !inner.trim().is_empty() && !inner.contains(open) {
                    return Some(inner.to_string());
                }
            }
        }
    }
    if t.len() != s.len() {
        return Some(t.to_string());
    }
    None
}

/// Strips known preambles and emphasis wrappers until a fixed point.
/// The flag is set when anything beyond surrounding whitespace was removed.
pub fn parse_clarification(raw: &str) -> Result<Clarification> {
    let mut text = raw.trim().to_string();
    let mut misformulation = false;
    while let Some(next) = strip_once(&text) {
        let next = next.trim().to_string();
        if next == text {
            break;
        }
        misformulation = true;
        text = next;
    }
    if text.is_empty() {
        return Err(parse_err(Stage::Clarification, "empty clarification", raw));
    }
    Ok(Clarification { text, misformulation })
}

pub fn parse_verdict(raw: &str) -> Result<Verdict> {
    static PREFIX: OnceLock<Regex> = OnceLock::new();
    let prefix = PREFIX.get_or_init(|| {
        Regex::new(r"(?i)^(?:verdict|answer|réponse|reponse|choix|choice)\s*:\s*").expect("valid regex")
    });
    let mut t = raw.trim();
    t = t.trim_matches(|c: char| matches!(c, '*' | '"' | '\'' | '`' | '«' | '»' | '“' | '”') || c.is_whitespace());
    let t = prefix.replace(t, "");
    let t = t
        .trim_matches(|c: char| matches!(c, '*' | '"' | '\'' | '`' | '«' | '»' | '“' | '”') || c.is_whitespace())
        .trim_end_matches(|c: char| matches!(c, '.' | '!' | ',' | ';'))
        .trim();
    TagTable::builtin().verdict(t).ok_or_else(|| parse_err(Stage::ClarifJudge, "unrecognised verdict", raw))
}

pub fn parse_stage_output(stage: Stage, raw: &str) -> Result<ParsedOutput> {
    Ok(match stage {
        Stage::AuExtraction => ParsedOutput::Units(parse_unit_list(raw)?),
        Stage::AsDetection => ParsedOutput::Segments(parse_typed_segments(raw)?),
        Stage::Clarification => ParsedOutput::Clarification(parse_clarification(raw)?),
        Stage::ClarifJudge | Stage::ClusterJudge => ParsedOutput::Verdict(parse_verdict(raw).map_err(|e| match e {
            GatewayError::Parse { message, raw, .. } => GatewayError::Parse { stage, message, raw },
            other => other,
        })?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_list() {
        assert_eq!(parse_unit_list("- unit A\n- unit B").unwrap(), ["unit A", "unit B"]);
        assert_eq!(parse_unit_list("Intro\n  -   x  \n-\n- y").unwrap(), ["x", "y"]);
        assert!(matches!(parse_unit_list("nothing here"), Err(GatewayError::Parse { raw, .. }) if raw == "nothing here"));
    }

    #[test]
    fn typed_segments() {
        assert_eq!(
            parse_typed_segments("- [SOLUTION] Baisser les taxes").unwrap(),
            [(SegmentType::Solution, "Baisser les taxes".to_string())]
        );
        let segs = parse_typed_segments("- [constat] a\n- [ ARGUMENT ] b\n- [Unknown] c\n- [PREMISE] d").unwrap();
        assert_eq!(
            segs,
            [
                (SegmentType::Statement, "a".into()),
                (SegmentType::Premise, "b".into()),
                (SegmentType::Premise, "d".into())
            ]
        );
        assert!(parse_typed_segments("- plain").is_err());
    }

    #[test]
    fn clarification_wrapper() {
        let c = parse_clarification("L'argument clair et auto-suffisant sous-jacent est : **X**").unwrap();
        assert_eq!(c, Clarification { text: "X".into(), misformulation: true });
        let c = parse_clarification("Here is the clarified argument:\n\"Lower taxes.\"").unwrap();
        assert_eq!(c.text, "Lower taxes.");
        let c = parse_clarification("En résumé : Il faut financer le projet.").unwrap();
        assert_eq!(c, Clarification { text: "Il faut financer le projet.".into(), misformulation: true });
        let c = parse_clarification("  Il faut baisser les taxes.\n").unwrap();
        assert_eq!(c, Clarification { text: "Il faut baisser les taxes.".into(), misformulation: false });
        assert!(parse_clarification("  ").is_err());
    }

    #[test]
    fn clarification_keeps_inner_emphasis() {
        let c = parse_clarification("**a** et **b**").unwrap();
        assert_eq!(c.text, "**a** et **b**");
        assert!(!c.misformulation);
    }

    #[test]
    fn verdicts() {
        assert_eq!(parse_verdict("B\n").unwrap(), Verdict::B);
        assert_eq!(parse_verdict("EQUALITY").unwrap(), Verdict::Tie);
        assert_eq!(parse_verdict("Égalité.").unwrap(), Verdict::Tie);
        assert_eq!(parse_verdict("Verdict: **A**").unwrap(), Verdict::A);
        assert!(parse_verdict("maybe A").is_err());
    }

    #[test]
    fn stage_dispatch() {
        assert!(matches!(parse_stage_output(Stage::AuExtraction, "- a"), Ok(ParsedOutput::Units(_))));
        assert!(matches!(
            parse_stage_output(Stage::ClusterJudge, "??"),
            Err(GatewayError::Parse { stage: Stage::ClusterJudge, .. })
        ));
    }

    proptest! {
        #[test]
        fn clarification_idempotent(s in "[\\*\"_a-zA-Z :«»\n]{0,40}") {
            if let Ok(c) = parse_clarification(&s) {
                prop_assert!(!c.text.is_empty());
                let again = parse_clarification(&c.text).unwrap();
                prop_assert_eq!(&again.text, &c.text);
                prop_assert!(!again.misformulation);
            }
        }

        #[test]
        fn units_never_empty(s in "[- a-z\n]{0,60}") {
            if let Ok(units) = parse_unit_list(&s) {
                prop_assert!(units.iter().all(|u| !u.is_empty()));
            }
        }
    }
}

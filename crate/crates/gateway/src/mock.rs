//! Deterministic offline backend answering every bundled prompt.

use async_trait::async_trait;
use sha2::{Digest, Sha256};

use crate::backend::ChatBackend;
use crate::error::{GatewayError, Result};
use crate::message::{Completion, Message, Usage};
use crate::templates::{Identified, PromptLibrary, Stage};

/// Answers from the prompt contents alone, as a well-behaved extractive model
/// would, with a few hash-driven deviations: non-contiguous units, case drift,
/// wrapped clarifications and one unparseable first answer in a handful of
/// cases. Identical requests always receive identical answers.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    name: String,
}

impl ScriptedBackend {
    pub fn new(name: impl Into<String>) -> Self {
        ScriptedBackend { name: name.into() }
    }

    fn answer(&self, messages: &[Message]) -> Result<String> {
        let id = PromptLibrary::builtin().identify(messages).ok_or_else(|| GatewayError::Backend {
            backend: self.name.clone(),
            message: "unrecognised prompt".into(),
        })?;
        let follow_up = messages.last().is_some_and(|m| {
            PromptLibrary::builtin().format_reminder(id.stage, &id.language).is_ok_and(|r| r == m.content)
        });
        let var = |k: &str| id.vars.get(k).map(String::as_str).unwrap_or_default();
        Ok(match id.stage {
            Stage::AuExtraction => {
                let text = var("contribution");
                if !follow_up && hash(&[text]) % 7 == 3 {
                    return Ok(preamble(&id).to_string());
                }
                extract_units(text)
            }
            Stage::AsDetection => detect_segments(var("argumentative unit"), &id.language),
            Stage::Clarification => self.clarify(&id),
            Stage::ClarifJudge | Stage::ClusterJudge => {
                let mut parts: Vec<&str> = id.vars.values().map(String::as_str).collect();
                parts.push(&self.name);
                let h = hash(&parts);
                if !follow_up && h % 11 == 0 {
                    return Ok(preamble(&id).to_string());
                }
                match h % 10 {
                    0..=4 => "A".into(),
                    5..=8 => "B\n".into(),
                    _ if id.language == "fr" => "ÉGALITÉ".into(),
                    _ => "TIE".into(),
                }
            }
        })
    }

    fn clarify(&self, id: &Identified) -> String {
        let source = match id.variant.as_str() {
            "annotation" => ["solutions", "premises", "statements"]
                .iter()
                .filter_map(|k| id.vars.get(*k))
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .collect::<Vec<_>>()
                .join(" "),
            _ => id.vars.get("argumentative unit").cloned().unwrap_or_default(),
        };
        let mut text = capitalize(source.trim());
        if !text.ends_with(['.', '!', '?']) {
            text.push('.');
        }
        match hash(&[&self.name, &source]) % 4 {
            0 if id.language == "fr" => format!("L'argument clair et auto-suffisant sous-jacent est : **{text}**"),
            0 => format!("Here is the clarified argument: **{text}**"),
            1 if id.language == "fr" => format!("En résumé : {text}"),
            _ => text,
        }
    }
}

fn preamble(id: &Identified) -> &'static str {
    if id.language == "fr" {
        "Je vais analyser ce texte attentivement."
    } else {
        "I will analyse this text carefully."
    }
}

fn hash(parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0]);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn lowercase_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_lowercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Sentences ending in `.`, `!` or `?` followed by whitespace, trimmed.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            let s = current.trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            current.clear();
        }
    }
    let s = current.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
    out
}

fn extract_units(text: &str) -> String {
    let sentences = split_sentences(text);
    let h = hash(&[text]);
    let mut units: Vec<String> = if sentences.len() >= 3 && h % 3 == 0 {
        let mut u = vec![format!("{} {}", sentences[0], sentences[2]), sentences[1].clone()];
        u.extend(sentences[3..].iter().cloned());
        u
    } else {
        sentences
    };
    if h % 5 == 1 {
        if let Some(last) = units.last_mut() {
            *last = lowercase_first(last);
        }
    }
    units.iter().map(|u| format!("- {u}\n")).collect()
}

const PREMISE_MARKERS: [&str; 6] = ["car ", "parce ", "puisque ", "because ", "since ", "as "];
const SOLUTION_MARKERS: [&str; 10] =
    ["il faut", "faut", "doit", "devrait", "devraient", "pourquoi pas", "should", "must", "we need", "let"];

fn detect_segments(unit: &str, language: &str) -> String {
    let mut chunks: Vec<String> = Vec::new();
    let mut current = String::new();
    for word in unit.split(' ') {
        let lower = word.to_lowercase();
        let starts_premise = ["car", "parce", "puisque", "because", "since"].contains(&lower.as_str());
        if starts_premise && !current.trim().is_empty() {
            chunks.push(std::mem::take(&mut current));
        }
        if !current.is_empty() {
            current.push(' ');
        }
        current.push_str(word);
        if word.ends_with(['.', '!', '?', ';']) {
            chunks.push(std::mem::take(&mut current));
        }
    }
    if !current.trim().is_empty() {
        chunks.push(current);
    }
    let (statement, premise, solution) =
        if language == "fr" { ("CONSTAT", "ARGUMENT", "SOLUTION") } else { ("STATEMENT", "PREMISE", "SOLUTION") };
    chunks
        .iter()
        .map(|c| c.trim())
        .filter(|c| !c.is_empty())
        .map(|c| {
            let lower = c.to_lowercase();
            let tag = if PREMISE_MARKERS.iter().any(|m| lower.starts_with(m)) {
                premise
            } else if SOLUTION_MARKERS.iter().any(|m| lower.contains(m)) {
                solution
            } else {
                statement
            };
            format!("- [{tag}] {c}\n")
        })
        .collect()
}

#[async_trait]
impl ChatBackend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    async fn complete(&self, messages: &[Message]) -> Result<Completion> {
        let text = self.answer(messages)?;
        Ok(Completion { text, usage: Usage::default() })
    }
}

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{GatewayError, Result};
use crate::message::{Message, Role};

pub const DEFAULT_LANGUAGE: &str = "fr";

const BUILTIN: [(&str, &str); 2] = [("fr", include_str!("../templates/fr.toml")), ("en", include_str!("../templates/en.toml"))];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    AuExtraction,
    AsDetection,
    Clarification,
    ClarifJudge,
    ClusterJudge,
}

impl Stage {
    pub const ALL: [Stage; 5] =
        [Stage::AuExtraction, Stage::AsDetection, Stage::Clarification, Stage::ClarifJudge, Stage::ClusterJudge];

    pub fn key(self) -> &'static str {
        match self {
            Stage::AuExtraction => "au_extraction",
            Stage::AsDetection => "as_detection",
            Stage::Clarification => "clarification",
            Stage::ClarifJudge => "clarif_judge",
            Stage::ClusterJudge => "cluster_judge",
        }
    }

    /// Variant used when none is requested. Clarification defaults to the
    /// annotation-time prompt built from typed segments.
    pub fn default_variant(self) -> &'static str {
        match self {
            Stage::Clarification => "annotation",
            _ => "default",
        }
    }

    /// Placeholders a template of this stage and variant must contain.
    pub fn required_placeholders(self, variant: &str) -> &'static [&'static str] {
        match (self, variant) {
            (Stage::AuExtraction, _) => &["contribution"],
            (Stage::AsDetection, _) => &["contribution", "argumentative unit"],
            (Stage::Clarification, "annotation") => &["contribution", "theme", "statements", "premises", "solutions"],
            (Stage::Clarification, _) => &["contribution", "argumentative unit"],
            (Stage::ClarifJudge, _) => &["contribution", "argumentative unit", "clarification_a", "clarification_b"],
            (Stage::ClusterJudge, _) => &["group_a", "group_b"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub user: String,
    pub assistant: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub system: String,
    pub user: String,
    #[serde(default)]
    pub example: Option<Example>,
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{([^{}]+)\}\}").expect("valid regex"))
}

impl Template {
    /// Placeholder names in order of first appearance (system, then user).
    pub fn placeholders(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for text in [&self.system, &self.user] {
            for c in placeholder_re().captures_iter(text) {
                let name = c[1].to_string();
                if seen.insert(name.clone()) {
                    out.push(name);
                }
            }
        }
        out
    }

    fn substitute(text: &str, vars: &BTreeMap<String, String>) -> String {
        placeholder_re().replace_all(text, |c: &regex::Captures<'_>| vars[&c[1]].clone()).into_owned()
    }

    /// System message, the optional example exchange, then the user message.
    pub fn render(&self, vars: &BTreeMap<String, String>, one_shot: bool) -> Result<Vec<Message>> {
        if let Some(missing) = self.placeholders().into_iter().find(|p| !vars.contains_key(p)) {
            return Err(GatewayError::MissingPlaceholder(missing));
        }
        let mut out = vec![Message::system(Self::substitute(&self.system, vars))];
        if one_shot {
            if let Some(ex) = &self.example {
                out.push(Message::user(ex.user.clone()));
                out.push(Message::assistant(ex.assistant.clone()));
            }
        }
        out.push(Message::user(Self::substitute(&self.user, vars)));
        Ok(out)
    }
}

type Variants = BTreeMap<String, Template>;

/// Inverse of rendering for one template text.
#[derive(Debug, Clone)]
struct Matcher {
    re: Regex,
    names: Vec<String>,
}

impl Matcher {
    fn new(template: &str) -> Self {
        let mut pattern = String::from("(?s)^");
        let mut names = Vec::new();
        let mut last = 0;
        for c in placeholder_re().captures_iter(template) {
            let m = c.get(0).expect("whole match");
            pattern.push_str(&regex::escape(&template[last..m.start()]));
            let name = c[1].to_string();
            if names.contains(&name) {
                pattern.push_str(".*?");
            } else {
                pattern.push_str("(.*?)");
                names.push(name);
            }
            last = m.end();
        }
        pattern.push_str(&regex::escape(&template[last..]));
        pattern.push('$');
        Matcher { re: Regex::new(&pattern).expect("escaped template is a valid pattern"), names }
    }

    /// The variable values that produce `rendered`, if any.
    fn captures(&self, rendered: &str) -> Option<BTreeMap<String, String>> {
        let caps = self.re.captures(rendered)?;
        Some(self.names.iter().enumerate().map(|(i, n)| (n.clone(), caps[i + 1].to_string())).collect())
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
struct LanguageSet {
    #[serde(default)]
    format_reminder: BTreeMap<String, String>,
    #[serde(flatten)]
    stages: BTreeMap<String, Variants>,
    #[serde(skip)]
    matchers: BTreeMap<(Stage, String), (Matcher, Matcher)>,
}

/// A prompt recognised by [`PromptLibrary::identify`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Identified {
    pub language: String,
    pub stage: Stage,
    pub variant: String,
    pub vars: BTreeMap<String, String>,
}

/// Templates per language, stage and variant.
#[derive(Debug, Clone, Default)]
pub struct PromptLibrary {
    languages: BTreeMap<String, LanguageSet>,
}

impl PromptLibrary {
    /// The French and English template sets shipped with the crate.
    pub fn builtin() -> &'static PromptLibrary {
        static LIB: OnceLock<PromptLibrary> = OnceLock::new();
        LIB.get_or_init(|| {
            let mut lib = PromptLibrary::default();
            for (lang, text) in BUILTIN {
                lib.add_language(lang, text).expect("bundled templates are valid");
            }
            lib
        })
    }

    /// Adds (or replaces) a language from TOML text, checking required placeholders.
    pub fn add_language(&mut self, language: &str, toml_text: &str) -> Result<()> {
        let mut set: LanguageSet =
            toml::from_str(toml_text).map_err(|e| GatewayError::Config(format!("templates for {language}: {e}")))?;
        for stage in Stage::ALL {
            let Some(variants) = set.stages.get(stage.key()) else { continue };
            for (variant, t) in variants {
                let present = t.placeholders();
                for req in stage.required_placeholders(variant) {
                    if !present.iter().any(|p| p == req) {
                        return Err(GatewayError::TemplateIncomplete { stage, placeholder: req.to_string() });
                    }
                }
            }
        }
        for stage in Stage::ALL {
            for (variant, t) in set.stages.get(stage.key()).into_iter().flatten() {
                set.matchers.insert((stage, variant.clone()), (Matcher::new(&t.system), Matcher::new(&t.user)));
            }
        }
        self.languages.insert(language.to_string(), set);
        Ok(())
    }

    pub fn languages(&self) -> Vec<&str> {
        self.languages.keys().map(String::as_str).collect()
    }

    pub fn get(&self, stage: Stage, language: &str, variant: Option<&str>) -> Result<&Template> {
        let variant = variant.unwrap_or(stage.default_variant());
        self.languages
            .get(language)
            .and_then(|l| l.stages.get(stage.key()))
            .and_then(|v| v.get(variant))
            .ok_or_else(|| GatewayError::UnknownTemplate {
                stage,
                language: language.to_string(),
                variant: variant.to_string(),
            })
    }

    /// Follow-up message sent when a stage output could not be parsed.
    pub fn format_reminder(&self, stage: Stage, language: &str) -> Result<&str> {
        self.languages
            .get(language)
            .and_then(|l| l.format_reminder.get(stage.key()))
            .map(String::as_str)
            .ok_or_else(|| GatewayError::UnknownTemplate {
                stage,
                language: language.to_string(),
                variant: "format_reminder".to_string(),
            })
    }

    /// Recovers language, stage, variant and variables from a rendered
    /// conversation. Only the system message and the first user message after
    /// any example exchange are inspected.
    pub fn identify(&self, messages: &[Message]) -> Option<Identified> {
        let system = messages.first().filter(|m| m.role == Role::System)?;
        for (language, set) in &self.languages {
            for stage in Stage::ALL {
                let Some(variants) = set.stages.get(stage.key()) else { continue };
                for (variant, t) in variants {
                    let (sys_m, user_m) = &set.matchers[&(stage, variant.clone())];
                    let Some(system_vars) = sys_m.captures(&system.content) else { continue };
                    let offset = if t.example.as_ref().is_some_and(|ex| {
                        messages.get(1).is_some_and(|m| m.role == Role::User && m.content == ex.user)
                            && messages.get(2).is_some_and(|m| m.role == Role::Assistant)
                    }) {
                        3
                    } else {
                        1
                    };
                    let Some(user) = messages.get(offset).filter(|m| m.role == Role::User) else { continue };
                    let Some(mut vars) = user_m.captures(&user.content) else { continue };
                    vars.extend(system_vars);
                    return Some(Identified { language: language.clone(), stage, variant: variant.clone(), vars });
                }
            }
        }
        None
    }

    pub fn render(
        &self,
        stage: Stage,
        language: &str,
        variant: Option<&str>,
        vars: &BTreeMap<String, String>,
        one_shot: bool,
    ) -> Result<Vec<Message>> {
        self.get(stage, language, variant)?.render(vars, one_shot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn builtin_sets_are_complete() {
        let lib = PromptLibrary::builtin();
        for lang in ["fr", "en"] {
            for stage in Stage::ALL {
                assert!(lib.get(stage, lang, None).is_ok(), "{lang} {stage:?}");
            }
            assert!(lib.get(Stage::Clarification, lang, Some("segment")).is_ok());
        }
    }

    #[test]
    fn clarification_contains_inputs_verbatim() {
        let c = "Les impôts  sont trop élevés {{theme}} !";
        let u = "Les impôts  sont trop élevés";
        let msgs = PromptLibrary::builtin()
            .render(
                Stage::Clarification,
                "fr",
                Some("segment"),
                &vars(&[("contribution", c), ("argumentative unit", u)]),
                false,
            )
            .unwrap();
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[0].role, Role::System);
        assert!(msgs[1].content.contains(c));
        assert!(msgs[1].content.contains(u));
    }

    #[test]
    fn missing_theme_is_named() {
        let err = PromptLibrary::builtin()
            .render(
                Stage::Clarification,
                "fr",
                None,
                &vars(&[("contribution", "x"), ("statements", ""), ("premises", ""), ("solutions", "y")]),
                false,
            )
            .unwrap_err();
        assert_eq!(err.to_string(), "missing placeholder theme");
    }

    #[test]
    fn extraction_user_message_ends_with_contribution() {
        for lang in ["fr", "en"] {
            let msgs = PromptLibrary::builtin()
                .render(Stage::AuExtraction, lang, None, &vars(&[("contribution", "X")]), false)
                .unwrap();
            assert!(msgs.last().unwrap().content.ends_with("X"));
        }
    }

    #[test]
    fn one_shot_inserts_example() {
        let msgs = PromptLibrary::builtin()
            .render(Stage::AsDetection, "fr", None, &vars(&[("contribution", "c"), ("argumentative unit", "u")]), true)
            .unwrap();
        let roles: Vec<Role> = msgs.iter().map(|m| m.role).collect();
        assert_eq!(roles, [Role::System, Role::User, Role::Assistant, Role::User]);
    }

    #[test]
    fn rendering_is_pure() {
        let v = vars(&[("group_a", "- a"), ("group_b", "- b")]);
        let lib = PromptLibrary::builtin();
        assert_eq!(
            lib.render(Stage::ClusterJudge, "en", None, &v, false).unwrap(),
            lib.render(Stage::ClusterJudge, "en", None, &v, false).unwrap()
        );
    }

    #[test]
    fn incomplete_template_rejected() {
        let mut lib = PromptLibrary::default();
        let err = lib
            .add_language("xx", "[as_detection.default]\nsystem = \"s\"\nuser = \"{{contribution}}\"\n")
            .unwrap_err();
        assert!(matches!(err, GatewayError::TemplateIncomplete { .. }));
    }

    #[test]
    fn identify_inverts_render() {
        let lib = PromptLibrary::builtin();
        let v = vars(&[("contribution", "Texte [x] ?\n\nsuite."), ("argumentative unit", "Segment (a+b)*")]);
        for one_shot in [false, true] {
            let msgs = lib.render(Stage::AsDetection, "fr", None, &v, one_shot).unwrap();
            let id = lib.identify(&msgs).unwrap();
            assert_eq!(id.stage, Stage::AsDetection);
            assert_eq!(id.language, "fr");
            assert_eq!(id.vars["argumentative unit"], "Segment (a+b)*");
        }
        let msgs = lib.render(Stage::Clarification, "en", Some("segment"), &vars(&[("contribution", "c"), ("argumentative unit", "u")]), false).unwrap();
        let id = lib.identify(&msgs).unwrap();
        assert_eq!((id.stage, id.variant.as_str(), id.language.as_str()), (Stage::Clarification, "segment", "en"));
        assert!(lib.identify(&[Message::user("hi")]).is_none());
    }

    #[test]
    fn reminders_exist_for_every_stage() {
        for lang in ["fr", "en"] {
            for stage in Stage::ALL {
                assert!(!PromptLibrary::builtin().format_reminder(stage, lang).unwrap().is_empty());
            }
        }
    }

    #[test]
    fn unknown_language() {
        assert!(PromptLibrary::builtin().get(Stage::AuExtraction, "de", None).is_err());
    }
}

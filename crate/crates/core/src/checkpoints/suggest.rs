//! Suggested assertions for a task description. The built-in provider is a
//! keyword heuristic; a remote provider posts the prompt to an HTTP endpoint
//! and accepts only replies that fit the assertion schema.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::build_suggestion_prompt;
use super::{validate_checkpoints, Assertion, Checkpoint, InteractionStep, Task};
use crate::document_store::FileMap;
use crate::dom::html::parse_html;
use crate::dom::selector::Selector;
use crate::dom::values::is_named_color;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionRequest {
    pub description: String,
    /// Reference workspace files.
    pub reference: FileMap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionResult {
    pub interaction: Vec<InteractionStep>,
    pub assertions: Vec<Assertion>,
    pub provider: String,
    /// Set when the provider fell back to a generic guess.
    #[serde(default)]
    pub low_confidence: bool,
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("ProviderError: request failed: {0}")]
    Remote(String),
    #[error("ProviderError: reply does not fit the assertion schema: {0}")]
    Schema(String),
    #[error("ProviderError: not configured: {0}")]
    NotConfigured(String),
}

pub trait SuggestionProvider: Send + Sync {
    fn name(&self) -> &str;
    fn suggest(&self, request: &SuggestionRequest) -> Result<SuggestionResult, ProviderError>;
}

/// Runs `provider` and checks the proposal against config validation, so an
/// accepted proposal can always be pasted into a checkpoint as-is.
pub fn suggest_assertions(
    request: &SuggestionRequest,
    provider: &dyn SuggestionProvider,
) -> Result<SuggestionResult, ProviderError> {
    let result = provider.suggest(request)?;
    let probe = Checkpoint {
        id: "suggestion".into(),
        title: "suggestion".into(),
        tasks: vec![Task {
            id: "suggestion".into(),
            description: request.description.clone(),
            interaction: result.interaction.clone(),
            assertions: result.assertions.clone(),
        }],
    };
    validate_checkpoints(&[probe]).map_err(|e| ProviderError::Schema(e.to_string()))?;
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cue {
    FontSize,
    Width,
    Height,
    BackgroundColor,
    Color,
    Border,
    FontWeight,
}

impl Cue {
    fn property(self) -> &'static str {
        match self {
            Cue::FontSize => "font-size",
            Cue::Width => "width",
            Cue::Height => "height",
            Cue::BackgroundColor => "background-color",
            Cue::Color => "color",
            Cue::Border => "border",
            Cue::FontWeight => "font-weight",
        }
    }

    fn wants_color(self) -> bool {
        matches!(self, Cue::BackgroundColor | Cue::Color)
    }
}

fn is_length(word: &str) -> bool {
    let digits = word.trim_end_matches(|c: char| c.is_ascii_alphabetic() || c == '%');
    let unit = &word[digits.len()..];
    !digits.is_empty()
        && !unit.is_empty()
        && digits.chars().all(|c| c.is_ascii_digit() || c == '.')
        && digits.starts_with(|c: char| c.is_ascii_digit())
}

fn is_color(word: &str) -> bool {
    is_named_color(word)
        || word.strip_prefix('#').is_some_and(|h| {
            matches!(h.len(), 3 | 6) && h.bytes().all(|b| b.is_ascii_hexdigit())
        })
}

fn selector_token(word: &str) -> Option<Selector> {
    let rest = word.strip_prefix('#').or_else(|| word.strip_prefix('.'))?;
    if !rest.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_') {
        return None;
    }
    if word.starts_with('#') && is_color(word) && !rest.chars().any(|c| c.is_ascii_uppercase()) {
        return None;
    }
    Selector::parse(word).ok()
}

/// Keyword heuristic: selectors are `#id`/`.class` tokens; cues like
/// "font size", "width", "background color", "bold" and "hover" pick the
/// property and the next length or color word supplies the value.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicProvider;

impl HeuristicProvider {
    pub const NAME: &'static str = "heuristic";
}

struct Word {
    text: String,
    ends_sentence: bool,
}

fn words(description: &str) -> Vec<Word> {
    description
        .split_whitespace()
        .map(|raw| {
            let ends_sentence = raw.ends_with(['.', ';', '!', '?']);
            let text = raw
                .trim_start_matches(['"', '\'', '(', '`', '\u{201c}', '\u{2018}'])
                .trim_end_matches(['.', ',', ';', ':', '!', '?', '"', '\'', ')', '`', '\u{201d}', '\u{2019}'])
                .to_owned();
            Word { text, ends_sentence }
        })
        .collect()
}

fn first_reference_id(reference: &FileMap) -> Option<Selector> {
    let html = reference
        .get("index.html")
        .or_else(|| reference.iter().find(|(p, _)| p.ends_with(".html")).map(|(_, t)| t))?;
    let doc = parse_html(html).document;
    let id = doc
        .elements()
        .find_map(|n| doc.element(n).and_then(|e| e.id()).map(str::to_owned))?;
    Selector::parse(&format!("#{id}")).ok()
}

impl SuggestionProvider for HeuristicProvider {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn suggest(&self, request: &SuggestionRequest) -> Result<SuggestionResult, ProviderError> {
        let words = words(&request.description);
        let mut selectors: Vec<Selector> = Vec::new();
        for w in &words {
            if let Some(s) = selector_token(&w.text) {
                if !selectors.contains(&s) {
                    selectors.push(s);
                }
            }
        }
        let target = selectors.first().cloned().or_else(|| first_reference_id(&request.reference));
        let mut styles: Vec<(Cue, String, bool)> = Vec::new();
        let mut pending: Option<Cue> = None;
        let mut hover = false;
        let mut i = 0;
        while i < words.len() {
            let w = words[i].text.to_lowercase();
            let next = words.get(i + 1).map(|n| n.text.to_lowercase());
            match w.as_str() {
                "font" if next.as_deref() == Some("size") => {
                    pending = Some(Cue::FontSize);
                    i += 1;
                }
                "font-size" => pending = Some(Cue::FontSize),
                "width" => pending = Some(Cue::Width),
                "height" => pending = Some(Cue::Height),
                "background" if next.as_deref() == Some("color") => {
                    pending = Some(Cue::BackgroundColor);
                    i += 1;
                }
                "background-color" | "background" => pending = Some(Cue::BackgroundColor),
                "color" => pending = Some(Cue::Color),
                "border" => pending = Some(Cue::Border),
                "bold" => styles.push((Cue::FontWeight, "bold".to_owned(), hover)),
                "hover" | "hovered" | "hovering" => hover = true,
                _ => match pending {
                    Some(Cue::Border) if is_length(&w) => {
                        let mut value = vec![w.clone()];
                        let mut j = i + 1;
                        while j < words.len() && value.len() < 3 {
                            let t = words[j].text.to_lowercase();
                            if matches!(t.as_str(), "solid" | "dashed" | "dotted" | "double") || is_color(&t) {
                                value.push(t);
                                j += 1;
                            } else {
                                break;
                            }
                        }
                        styles.push((Cue::Border, value.join(" "), hover));
                        pending = None;
                        i = j - 1;
                    }
                    Some(cue @ (Cue::FontSize | Cue::Width | Cue::Height)) if is_length(&w) => {
                        styles.push((cue, w.clone(), hover));
                        pending = None;
                    }
                    Some(cue) if cue.wants_color() && is_color(&w) => {
                        styles.push((cue, w.clone(), hover));
                        pending = None;
                    }
                    _ => {}
                },
            }
            if words[i].ends_sentence {
                pending = None;
                hover = false;
            }
            i += 1;
        }

        let mut assertions = Vec::new();
        let mut low_confidence = false;
        if selectors.is_empty() && styles.is_empty() {
            low_confidence = true;
            if let Some(t) = &target {
                assertions.push(Assertion::Exists {
                    selector: t.clone(),
                    min_count: 1,
                });
            }
        } else {
            for s in &selectors {
                assertions.push(Assertion::Exists {
                    selector: s.clone(),
                    min_count: 1,
                });
            }
            if let Some(target) = &target {
                for (cue, value, on_hover) in styles {
                    let (property, expected) = (cue.property().to_owned(), value);
                    let a = if on_hover {
                        let hovered = Selector::parse(&format!("{target}:hover"))
                            .expect("appending :hover to a parsed selector stays valid");
                        Assertion::RuleDeclared {
                            selector: hovered,
                            property,
                            expected,
                        }
                    } else {
                        Assertion::Style {
                            selector: target.clone(),
                            property,
                            expected,
                        }
                    };
                    if !assertions.contains(&a) {
                        assertions.push(a);
                    }
                }
            }
        }
        Ok(SuggestionResult {
            interaction: Vec::new(),
            assertions,
            provider: Self::NAME.to_owned(),
            low_confidence,
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RemoteReply {
    #[serde(default)]
    interaction: Vec<InteractionStep>,
    assertions: Vec<Assertion>,
}

/// Posts `{"prompt": ...}` to a configured endpoint and expects the reply
/// body to be the schema object.
#[derive(Debug, Clone)]
pub struct RemoteProvider {
    pub url: String,
    pub key: Option<String>,
    pub timeout: Duration,
}

impl RemoteProvider {
    pub const NAME: &'static str = "remote";
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

    /// From `SPARK_SUGGEST_URL` / `SPARK_SUGGEST_KEY`; `None` when no URL is set.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var("SPARK_SUGGEST_URL").ok().filter(|u| !u.is_empty())?;
        Some(Self {
            url,
            key: std::env::var("SPARK_SUGGEST_KEY").ok().filter(|k| !k.is_empty()),
            timeout: Self::DEFAULT_TIMEOUT,
        })
    }
}

impl SuggestionProvider for RemoteProvider {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn suggest(&self, request: &SuggestionRequest) -> Result<SuggestionResult, ProviderError> {
        let prompt = build_suggestion_prompt(&request.description, &request.reference);
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| ProviderError::Remote(e.to_string()))?;
        let mut req = client.post(&self.url).json(&serde_json::json!({ "prompt": prompt }));
        if let Some(key) = &self.key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ProviderError::Remote(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ProviderError::Remote(format!("status {status}")));
        }
        let body = resp.text().map_err(|e| ProviderError::Remote(e.to_string()))?;
        let reply: RemoteReply =
            serde_json::from_str(body.trim()).map_err(|e| ProviderError::Schema(e.to_string()))?;
        Ok(SuggestionResult {
            interaction: reply.interaction,
            assertions: reply.assertions,
            provider: Self::NAME.to_owned(),
            low_confidence: false,
        })
    }
}

//! Checkpoints, tasks, interaction steps and the closed assertion language,
//! plus the configuration parser that reports every violation at once.

mod prompt;
mod suggest;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dom::selector::Selector;
use crate::dom::values::{normalize_checked, property_class, PropertyClass};

pub use prompt::{build_suggestion_prompt, OUTPUT_CONTRACT};
pub use crate::evaluator::{verify_checkpoint, TaskVerification, VerificationReport};
pub use suggest::{
    suggest_assertions, HeuristicProvider, ProviderError, RemoteProvider, SuggestionProvider,
    SuggestionRequest, SuggestionResult,
};

/// Longest allowed `wait` step.
pub const MAX_WAIT_MS: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum InteractionStep {
    Click { selector: Selector },
    TypeText { selector: Selector, text: String },
    Hover { selector: Selector },
    Wait { ms: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=", alias = "≥")]
    AtLeast,
    #[serde(rename = "<=", alias = "≤")]
    AtMost,
}

impl Comparator {
    pub fn holds(self, actual: usize, n: usize) -> bool {
        match self {
            Comparator::Eq => actual == n,
            Comparator::AtLeast => actual >= n,
            Comparator::AtMost => actual <= n,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::AtLeast => ">=",
            Comparator::AtMost => "<=",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextMode {
    #[default]
    Exact,
    Contains,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Assertion {
    Exists {
        selector: Selector,
        #[serde(default = "one")]
        min_count: usize,
    },
    Count {
        selector: Selector,
        comparator: Comparator,
        n: usize,
    },
    Attribute {
        selector: Selector,
        name: String,
        expected: String,
    },
    Text {
        selector: Selector,
        expected: String,
        #[serde(default)]
        mode: TextMode,
    },
    Style {
        selector: Selector,
        property: String,
        expected: String,
    },
    /// A stylesheet rule with exactly this selector declares the property.
    /// The only way to assert state pseudo-classes such as `:hover`.
    RuleDeclared {
        selector: Selector,
        property: String,
        expected: String,
    },
    Ancestor {
        selector: Selector,
        ancestor: Selector,
    },
}

impl Assertion {
    pub fn kind(&self) -> &'static str {
        match self {
            Assertion::Exists { .. } => "exists",
            Assertion::Count { .. } => "count",
            Assertion::Attribute { .. } => "attribute",
            Assertion::Text { .. } => "text",
            Assertion::Style { .. } => "style",
            Assertion::RuleDeclared { .. } => "rule_declared",
            Assertion::Ancestor { .. } => "ancestor",
        }
    }

    pub fn selector(&self) -> &Selector {
        match self {
            Assertion::Exists { selector, .. }
            | Assertion::Count { selector, .. }
            | Assertion::Attribute { selector, .. }
            | Assertion::Text { selector, .. }
            | Assertion::Style { selector, .. }
            | Assertion::RuleDeclared { selector, .. }
            | Assertion::Ancestor { selector, .. } => selector,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub id: String,
    pub description: String,
    #[serde(default)]
    pub interaction: Vec<InteractionStep>,
    pub assertions: Vec<Assertion>,
}

impl Task {
    /// Derived: a task needs a live page iff it has interaction steps.
    pub fn requires_runtime(&self) -> bool {
        !self.interaction.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub id: String,
    pub title: String,
    pub tasks: Vec<Task>,
}

impl Checkpoint {
    pub fn task(&self, id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Properties named by this checkpoint's `style` assertions, sorted.
    pub fn style_properties(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .tasks
            .iter()
            .flat_map(|t| &t.assertions)
            .filter_map(|a| match a {
                Assertion::Style { property, .. } => Some(property.as_str()),
                _ => None,
            })
            .collect();
        set.into_iter().map(str::to_owned).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigDiagnostic {
    pub path: String,
    pub message: String,
    pub severity: Severity,
}

impl fmt::Display for ConfigDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        if self.path.is_empty() {
            write!(f, "{level}: {}", self.message)
        } else {
            write!(f, "{level}: {}: {}", self.path, self.message)
        }
    }
}

/// Every violation found in a configuration document.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("ConfigError: {}", .errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct ConfigError {
    pub errors: Vec<ConfigDiagnostic>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedConfig {
    pub checkpoints: Vec<Checkpoint>,
    /// Non-fatal findings (for example an empty task description).
    pub diagnostics: Vec<ConfigDiagnostic>,
}

#[derive(Serialize)]
struct ConfigDoc<'a> {
    checkpoints: &'a [Checkpoint],
}

/// Pretty-printed configuration document that [`parse_checkpoint_config`]
/// accepts back.
pub fn serialize_checkpoint_config(checkpoints: &[Checkpoint]) -> String {
    let mut text = serde_json::to_string_pretty(&ConfigDoc { checkpoints })
        .expect("checkpoint config is always serializable");
    text.push('\n');
    text
}

struct Collector {
    diags: Vec<ConfigDiagnostic>,
}

impl Collector {
    fn error(&mut self, path: &str, message: impl Into<String>) {
        self.diags.push(ConfigDiagnostic {
            path: path.to_owned(),
            message: message.into(),
            severity: Severity::Error,
        });
    }

    fn warning(&mut self, path: &str, message: impl Into<String>) {
        self.diags.push(ConfigDiagnostic {
            path: path.to_owned(),
            message: message.into(),
            severity: Severity::Warning,
        });
    }
}

pub fn parse_checkpoint_config(text: &str) -> Result<ParsedConfig, ConfigError> {
    let mut c = Collector { diags: Vec::new() };
    let root: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            c.error("", format!("not a valid document: {e}"));
            return Err(ConfigError { errors: c.diags });
        }
    };
    let mut checkpoints = Vec::new();
    match &root {
        Value::Object(map) => {
            for key in map.keys().filter(|k| *k != "checkpoints") {
                c.error("", format!("unknown field {key:?}"));
            }
            match map.get("checkpoints") {
                Some(Value::Array(items)) => {
                    let mut seen = BTreeSet::new();
                    for (i, item) in items.iter().enumerate() {
                        let path = format!("checkpoint[{i}]");
                        if let Some(cp) = parse_checkpoint(item, &path, &mut c) {
                            if !seen.insert(cp.id.clone()) {
                                c.error(&path, format!("duplicate checkpoint id {:?}", cp.id));
                            }
                            checkpoints.push(cp);
                        }
                    }
                }
                Some(_) => c.error("checkpoints", "must be an array"),
                None => c.error("", "missing field \"checkpoints\""),
            }
        }
        _ => c.error("", "top level must be an object with a \"checkpoints\" array"),
    }
    if c.diags.iter().any(|d| d.severity == Severity::Error) {
        return Err(ConfigError {
            errors: c.diags.into_iter().filter(|d| d.severity == Severity::Error).collect(),
        });
    }
    Ok(ParsedConfig {
        checkpoints,
        diagnostics: c.diags,
    })
}

fn string_field(obj: &serde_json::Map<String, Value>, key: &str, path: &str, c: &mut Collector) -> Option<String> {
    match obj.get(key) {
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            c.error(path, format!("field {key:?} must be a string"));
            None
        }
        None => {
            c.error(path, format!("missing field {key:?}"));
            None
        }
    }
}

fn parse_checkpoint(value: &Value, path: &str, c: &mut Collector) -> Option<Checkpoint> {
    let Value::Object(obj) = value else {
        c.error(path, "checkpoint must be an object");
        return None;
    };
    for key in obj.keys().filter(|k| !matches!(k.as_str(), "id" | "title" | "tasks")) {
        c.error(path, format!("unknown field {key:?}"));
    }
    let id = string_field(obj, "id", path, c);
    if id.as_deref() == Some("") {
        c.error(path, "checkpoint id must not be empty");
    }
    let title = string_field(obj, "title", path, c);
    let mut tasks = Vec::new();
    match obj.get("tasks") {
        Some(Value::Array(items)) => {
            if items.is_empty() {
                c.error(path, "checkpoint must have at least one task");
            }
            let mut seen = BTreeSet::new();
            for (j, item) in items.iter().enumerate() {
                let tpath = format!("{path}.task[{j}]");
                if let Some(task) = parse_task(item, &tpath, c) {
                    if !seen.insert(task.id.clone()) {
                        c.error(&tpath, format!("duplicate task id {:?} in checkpoint", task.id));
                    }
                    tasks.push(task);
                }
            }
        }
        Some(_) => c.error(path, "field \"tasks\" must be an array"),
        None => c.error(path, "missing field \"tasks\""),
    }
    Some(Checkpoint {
        id: id?,
        title: title?,
        tasks,
    })
}

fn parse_task(value: &Value, path: &str, c: &mut Collector) -> Option<Task> {
    let Value::Object(obj) = value else {
        c.error(path, "task must be an object");
        return None;
    };
    for key in obj.keys() {
        match key.as_str() {
            "id" | "description" | "interaction" | "assertions" => {}
            "requires_runtime" => c.error(
                path,
                "requires_runtime is derived from the interaction list and must not be given",
            ),
            other => c.error(path, format!("unknown field {other:?}")),
        }
    }
    let id = string_field(obj, "id", path, c);
    if id.as_deref() == Some("") {
        c.error(path, "task id must not be empty");
    }
    let description = string_field(obj, "description", path, c);
    if description.as_deref().is_some_and(|d| d.trim().is_empty()) {
        c.warning(path, "empty description");
    }
    let mut interaction = Vec::new();
    match obj.get("interaction") {
        None | Some(Value::Null) => {}
        Some(Value::Array(items)) => {
            for (k, item) in items.iter().enumerate() {
                let spath = format!("{path}.interaction[{k}]");
                match serde_json::from_value::<InteractionStep>(item.clone()) {
                    Ok(step) => {
                        if let InteractionStep::Wait { ms } = step {
                            if ms > MAX_WAIT_MS {
                                c.error(&spath, format!("wait of {ms} ms exceeds {MAX_WAIT_MS} ms"));
                            }
                        }
                        interaction.push(step);
                    }
                    Err(e) => c.error(&spath, e.to_string()),
                }
            }
        }
        Some(_) => c.error(path, "field \"interaction\" must be an array"),
    }
    let mut assertions = Vec::new();
    match obj.get("assertions") {
        Some(Value::Array(items)) => {
            if items.is_empty() {
                c.error(path, "task must have at least one assertion");
            }
            for (k, item) in items.iter().enumerate() {
                let apath = format!("{path}.assertions[{k}]");
                match serde_json::from_value::<Assertion>(item.clone()) {
                    Ok(a) => {
                        check_assertion(&a, &apath, c);
                        assertions.push(a);
                    }
                    Err(e) => c.error(&apath, e.to_string()),
                }
            }
        }
        Some(_) => c.error(path, "field \"assertions\" must be an array"),
        None => c.error(path, "missing field \"assertions\""),
    }
    Some(Task {
        id: id?,
        description: description?,
        interaction,
        assertions,
    })
}

fn check_assertion(a: &Assertion, path: &str, c: &mut Collector) {
    match a {
        Assertion::Style {
            property, expected, ..
        }
        | Assertion::RuleDeclared {
            property, expected, ..
        } => {
            if property.trim().is_empty() {
                c.error(path, "property must not be empty");
            }
            if property_class(property) != PropertyClass::Other
                && !normalize_checked(property, expected).recognized
            {
                c.error(
                    path,
                    format!("expected value {expected:?} is not a recognized {property} value"),
                );
            }
        }
        Assertion::Attribute { name, .. } if name.trim().is_empty() => {
            c.error(path, "attribute name must not be empty");
        }
        Assertion::Exists { min_count: 0, .. } => {
            c.error(path, "min_count must be at least 1");
        }
        _ => {}
    }
    if !matches!(a, Assertion::RuleDeclared { .. }) && a.selector().has_pseudo() {
        c.warning(
            path,
            "selector has a state pseudo-class and never matches statically; use rule_declared",
        );
    }
}

/// Validation a finished checkpoint list must pass (used on suggestions).
pub fn validate_checkpoints(checkpoints: &[Checkpoint]) -> Result<ParsedConfig, ConfigError> {
    parse_checkpoint_config(&serialize_checkpoint_config(checkpoints))
}

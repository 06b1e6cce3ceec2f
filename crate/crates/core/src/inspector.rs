//! Class-wide element inspection: how one property varies across students,
//! and which students render a selected element identically.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::checkpoints::Task;
use crate::document_store::DocumentSnapshot;
use crate::dom::cascade::computed_style;
use crate::dom::selector::{Selector, SelectorError};
use crate::dom::serialize::{serialize_normalized, StyleContext};
use crate::evaluator::{Page, Runner};
use crate::par::{self, Execution};

pub const UNSET: &str = "(unset)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyDistribution {
    pub selector: String,
    pub property: String,
    pub t_ms: i64,
    /// Canonical value (or `(unset)`) to student ids, ids sorted.
    pub values: BTreeMap<String, Vec<String>>,
    pub no_match: Vec<String>,
    /// Students whose snapshot has no HTML page to inspect.
    pub parse_error: Vec<String>,
}

impl PropertyDistribution {
    pub fn class_size(&self) -> usize {
        self.values.values().map(Vec::len).sum::<usize>() + self.no_match.len() + self.parse_error.len()
    }
}

enum Probe {
    Value(String),
    NoMatch,
    ParseError,
}

/// Buckets every student by the canonical value of `property` on the first
/// element matching `selector`.
pub fn inspect_property(
    snapshots: &[DocumentSnapshot],
    selector: &str,
    property: &str,
    t_ms: i64,
    exec: Execution,
) -> Result<PropertyDistribution, SelectorError> {
    let sel = Selector::parse(selector)?;
    let property = property.trim().to_ascii_lowercase();
    let probes = par::map(exec, snapshots, |snap| {
        let Some(page) = Page::load(&snap.files) else {
            return Probe::ParseError;
        };
        match page.query(&sel).first() {
            None => Probe::NoMatch,
            Some(&node) => Probe::Value(
                computed_style(&page.document, node, &page.sheets)
                    .remove(&property)
                    .map_or_else(|| UNSET.to_owned(), |v| v.value),
            ),
        }
    });
    let mut dist = PropertyDistribution {
        selector: sel.to_string(),
        property,
        t_ms,
        values: BTreeMap::new(),
        no_match: Vec::new(),
        parse_error: Vec::new(),
    };
    for (snap, probe) in snapshots.iter().zip(probes) {
        let id = snap.student_id.clone();
        match probe {
            Probe::Value(v) => dist.values.entry(v).or_default().push(id),
            Probe::NoMatch => dist.no_match.push(id),
            Probe::ParseError => dist.parse_error.push(id),
        }
    }
    for ids in dist.values.values_mut() {
        ids.sort();
    }
    dist.no_match.sort();
    dist.parse_error.sort();
    Ok(dist)
}

/// Digest under which students with no match are grouped.
pub const NO_MATCH_DIGEST: &str = "no-match";
/// Digest under which students that could not be fingerprinted are grouped.
pub const ERROR_DIGEST: &str = "error";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderFingerprint {
    pub student_id: String,
    pub selector: String,
    pub serialization: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub digest: String,
    pub representative: String,
    /// Sorted student ids.
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub selector: String,
    pub t_ms: i64,
    pub properties: Vec<String>,
    /// True when the fingerprints show the page before the task's
    /// interaction because no interactive runner was available.
    pub pre_interaction: bool,
    /// Largest first, ties by digest.
    pub clusters: Vec<Cluster>,
}

impl ClusterSet {
    pub fn class_size(&self) -> usize {
        self.clusters.iter().map(|c| c.members.len()).sum()
    }
}

pub fn digest(serialization: &str) -> String {
    hex::encode(Sha256::digest(serialization.as_bytes()))
}

/// Fingerprint of the first element matching `selector`, or `None` when
/// nothing matches.
pub fn fingerprint(
    student_id: &str,
    page: &Page,
    selector: &Selector,
    properties: &[String],
) -> Option<RenderFingerprint> {
    let node = *page.query(selector).first()?;
    let serialization = serialize_normalized(
        &page.document,
        node,
        StyleContext {
            sheets: &page.sheets,
            properties: Some(properties),
        },
    );
    Some(RenderFingerprint {
        student_id: student_id.to_owned(),
        selector: selector.to_string(),
        digest: digest(&serialization),
        serialization,
    })
}

enum Print {
    Ok(RenderFingerprint),
    NoMatch,
    Error(String),
}

/// Groups students by the fingerprint of `selector`'s first match.
///
/// When `task` has interaction steps and `runner` can execute them, each
/// student's post-interaction page is fingerprinted; otherwise the static
/// page is used and the set is flagged `pre_interaction`.
pub fn preview_clusters(
    snapshots: &[DocumentSnapshot],
    task: Option<&Task>,
    selector: &str,
    properties: &[String],
    runner: Option<&dyn Runner>,
    t_ms: i64,
    exec: Execution,
) -> Result<ClusterSet, SelectorError> {
    let sel = Selector::parse(selector)?;
    let interactive = task.filter(|t| t.requires_runtime());
    let mut pre_interaction = interactive.is_some();
    let prints = par::map(exec, snapshots, |snap| -> (Print, bool) {
        let rendered = match (interactive, runner) {
            (Some(task), Some(r)) => r.render_after(task, snap),
            _ => None,
        };
        let (files, simulated) = match rendered {
            Some(Ok(files)) => (std::borrow::Cow::Owned(files), true),
            Some(Err(e)) => return (Print::Error(e), true),
            None => (std::borrow::Cow::Borrowed(&snap.files), false),
        };
        let Some(page) = Page::load(&files) else {
            return (Print::Error("no HTML file".into()), simulated);
        };
        match fingerprint(&snap.student_id, &page, &sel, properties) {
            Some(f) => (Print::Ok(f), simulated),
            None => (Print::NoMatch, simulated),
        }
    });
    if interactive.is_some() && prints.iter().all(|(_, simulated)| *simulated) && !prints.is_empty() {
        pre_interaction = false;
    }
    let mut groups: BTreeMap<String, Cluster> = BTreeMap::new();
    for (snap, (print, _)) in snapshots.iter().zip(prints) {
        let (digest, representative) = match print {
            Print::Ok(f) => (f.digest, f.serialization),
            Print::NoMatch => (NO_MATCH_DIGEST.to_owned(), String::new()),
            Print::Error(e) => (ERROR_DIGEST.to_owned(), e),
        };
        groups
            .entry(digest.clone())
            .or_insert_with(|| Cluster {
                digest,
                representative,
                members: Vec::new(),
            })
            .members
            .push(snap.student_id.clone());
    }
    let mut clusters: Vec<Cluster> = groups.into_values().collect();
    for c in &mut clusters {
        c.members.sort();
    }
    clusters.sort_by(|a, b| b.members.len().cmp(&a.members.len()).then_with(|| a.digest.cmp(&b.digest)));
    Ok(ClusterSet {
        selector: sel.to_string(),
        t_ms,
        properties: properties.to_vec(),
        pre_interaction,
        clusters,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("KeyNotFound: {0:?}")]
pub struct KeyNotFound(pub String);

/// Structures whose buckets can be looked up by key.
pub trait Buckets {
    fn bucket(&self, key: &str) -> Option<&[String]>;
}

impl Buckets for PropertyDistribution {
    /// Keys are canonical values plus `no match` and `parse error`.
    fn bucket(&self, key: &str) -> Option<&[String]> {
        match key {
            "no match" | "no_match" => Some(&self.no_match),
            "parse error" | "parse_error" => Some(&self.parse_error),
            k => self.values.get(k).map(Vec::as_slice),
        }
    }
}

impl Buckets for ClusterSet {
    /// Keys are cluster digests.
    fn bucket(&self, key: &str) -> Option<&[String]> {
        self.clusters
            .iter()
            .find(|c| c.digest == key)
            .map(|c| c.members.as_slice())
    }
}

/// Members of one bucket, sorted by student id.
pub fn students_matching(structure: &dyn Buckets, key: &str) -> Result<Vec<String>, KeyNotFound> {
    let mut ids = structure
        .bucket(key)
        .ok_or_else(|| KeyNotFound(key.to_owned()))?
        .to_vec();
    ids.sort();
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document_store::FileMap;

    fn snap(id: &str, size: &str) -> DocumentSnapshot {
        let files = FileMap::from([
            (
                "index.html".to_owned(),
                r#"<link rel="stylesheet" href="styles.css"><h1 id="pageTitle">Todo List</h1>"#.to_owned(),
            ),
            ("styles.css".to_owned(), format!("#pageTitle {{ font-size: {size} }}")),
        ]);
        DocumentSnapshot::new(id, files, 0)
    }

    #[test]
    fn distribution_buckets() {
        let class = [snap("s01", "25px"), snap("s02", "30px"), snap("s03", "25.0px")];
        let d = inspect_property(&class, "#pageTitle", "font-size", 0, Execution::Sequential).unwrap();
        assert_eq!(d.values["25px"], ["s01", "s03"]);
        assert_eq!(d.values["30px"], ["s02"]);
        assert_eq!(d.class_size(), 3);
        let d = inspect_property(&class, "#nothing", "font-size", 0, Execution::Sequential).unwrap();
        assert_eq!(d.no_match.len(), 3);
        let d = inspect_property(&class, "h1", "color", 0, Execution::Sequential).unwrap();
        assert_eq!(d.values[UNSET].len(), 3);
    }

    #[test]
    fn bad_selector_fails_up_front() {
        assert!(inspect_property(&[], "a ~ b", "color", 0, Execution::Sequential).is_err());
    }

    #[test]
    fn clusters_and_lookup() {
        let class = [snap("s03", "25px"), snap("s01", "30px"), snap("s02", "25px")];
        let props = ["font-size".to_owned()];
        let set = preview_clusters(&class, None, "#pageTitle", &props, None, 0, Execution::Sequential).unwrap();
        assert_eq!(set.clusters.len(), 2);
        assert_eq!(set.clusters[0].members, ["s02", "s03"]);
        assert!(!set.pre_interaction);
        let key = set.clusters[0].digest.clone();
        assert_eq!(students_matching(&set, &key).unwrap(), ["s02", "s03"]);
        assert_eq!(students_matching(&set, "nope"), Err(KeyNotFound("nope".into())));
    }
}

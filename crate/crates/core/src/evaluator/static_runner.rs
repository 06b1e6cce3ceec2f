//! In-process runner: parses the snapshot's HTML and linked stylesheets and
//! judges assertions without executing scripts.

use crate::checkpoints::{Assertion, Task, TextMode};
use crate::document_store::{DocumentSnapshot, FileMap};
use crate::dom::cascade::computed_style;
use crate::dom::css::{parse_css, Stylesheet};
use crate::dom::html::{parse_html, Document, NodeId, NodeKind};
use crate::dom::selector::{query, Selector};
use crate::dom::values::normalize_value;

use super::{Capability, Runner, Status, TaskOutcome, TaskRef};

/// A parsed page: the document plus the stylesheets it actually loads.
#[derive(Debug, Clone)]
pub struct Page {
    pub html_path: String,
    pub document: Document,
    /// In document order of their `<link>`/`<style>` elements.
    pub sheets: Vec<Stylesheet>,
}

/// The page file of a workspace: `index.html` if present, otherwise the
/// first `.html` file in path order.
pub fn page_path(files: &FileMap) -> Option<&str> {
    if files.contains_key("index.html") {
        return Some("index.html");
    }
    files
        .keys()
        .find(|p| p.ends_with(".html") || p.ends_with(".htm"))
        .map(String::as_str)
}

fn resolve(base_file: &str, href: &str) -> Option<String> {
    let href = href.split(['?', '#']).next().unwrap_or("");
    if href.is_empty() || href.contains("://") || href.starts_with("//") {
        return None;
    }
    if let Some(abs) = href.strip_prefix('/') {
        return Some(abs.to_owned());
    }
    let mut parts: Vec<&str> = base_file
        .rsplit_once('/')
        .map(|(d, _)| d.split('/').collect())
        .unwrap_or_default();
    for seg in href.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                parts.pop()?;
            }
            s => parts.push(s),
        }
    }
    Some(parts.join("/"))
}

impl Page {
    /// `None` when the workspace has no HTML file.
    pub fn load(files: &FileMap) -> Option<Page> {
        let html_path = page_path(files)?;
        Some(Self::from_html(html_path, &files[html_path], files))
    }

    pub fn from_html(html_path: &str, html: &str, files: &FileMap) -> Page {
        let document = parse_html(html).document;
        let mut sheets = Vec::new();
        for node in document.elements() {
            let el = document.element(node).expect("elements() yields elements");
            match el.tag.as_str() {
                "style" => {
                    let text: String = document
                        .children(node)
                        .iter()
                        .filter_map(|&c| match &document.node(c).kind {
                            NodeKind::Text(t) => Some(t.as_str()),
                            NodeKind::Element(_) => None,
                        })
                        .collect();
                    sheets.push(parse_css(&text).sheet);
                }
                "link" => {
                    let is_sheet = el
                        .attr("rel")
                        .is_some_and(|r| r.split_ascii_whitespace().any(|t| t.eq_ignore_ascii_case("stylesheet")));
                    if !is_sheet {
                        continue;
                    }
                    if let Some(css) = el
                        .attr("href")
                        .and_then(|h| resolve(html_path, h))
                        .and_then(|p| files.get(&p))
                    {
                        sheets.push(parse_css(css).sheet);
                    }
                }
                _ => {}
            }
        }
        Page {
            html_path: html_path.to_owned(),
            document,
            sheets,
        }
    }

    pub fn query(&self, selector: &Selector) -> Vec<NodeId> {
        query(selector, &self.document)
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

const NO_MATCH: &str = "no elements matched";

/// Checks one assertion; `Err` carries "expected X, got Y" style detail.
pub fn check_assertion(page: &Page, assertion: &Assertion) -> Result<(), String> {
    let doc = &page.document;
    match assertion {
        Assertion::Exists { selector, min_count } => {
            let n = page.query(selector).len();
            if n == 0 {
                Err(NO_MATCH.into())
            } else if n < *min_count {
                Err(format!("expected at least {min_count} matches, got {n}"))
            } else {
                Ok(())
            }
        }
        Assertion::Count {
            selector,
            comparator,
            n,
        } => {
            let actual = page.query(selector).len();
            if comparator.holds(actual, *n) {
                Ok(())
            } else {
                Err(format!("expected count {} {n}, got {actual}", comparator.symbol()))
            }
        }
        Assertion::Attribute {
            selector,
            name,
            expected,
        } => each_match(page, selector, |node| {
            let el = doc.element(node).expect("query yields elements");
            match el.attr(&name.to_ascii_lowercase()) {
                Some(v) if v == expected => Ok(()),
                Some(v) => Err(format!("expected {name}={expected:?}, got {v:?}")),
                None => Err(format!("expected {name}={expected:?}, got no {name} attribute")),
            }
        }),
        Assertion::Text {
            selector,
            expected,
            mode,
        } => each_match(page, selector, |node| {
            let text = collapse_ws(&doc.text_content(node));
            let want = collapse_ws(expected);
            let ok = match mode {
                TextMode::Exact => text == want,
                TextMode::Contains => text.contains(&want),
            };
            if ok {
                Ok(())
            } else {
                let how = match mode {
                    TextMode::Exact => "text",
                    TextMode::Contains => "text containing",
                };
                Err(format!("expected {how} {want:?}, got {text:?}"))
            }
        }),
        Assertion::Style {
            selector,
            property,
            expected,
        } => {
            let property = property.trim().to_ascii_lowercase();
            let want = normalize_value(&property, expected);
            each_match(page, selector, |node| {
                match computed_style(doc, node, &page.sheets).remove(&property) {
                    Some(v) if v.value == want => Ok(()),
                    Some(v) => Err(format!("expected {property} {want}, got {}", v.value)),
                    None => Err(format!("expected {property} {want}, got unset")),
                }
            })
        }
        Assertion::RuleDeclared {
            selector,
            property,
            expected,
        } => {
            let property = property.trim().to_ascii_lowercase();
            let want = normalize_value(&property, expected);
            match declared_by_rule(&page.sheets, selector, &property) {
                Some(v) if v == want => Ok(()),
                Some(v) => Err(format!("expected {property} {want}, got {v}")),
                None => Err(format!("expected {property} {want}, got no rule declaring it")),
            }
        }
        Assertion::Ancestor { selector, ancestor } => each_match(page, selector, |node| {
            if doc.ancestors(node).any(|a| ancestor.matches(doc, a)) {
                Ok(())
            } else {
                Err(format!("expected inside {ancestor}, got no such ancestor"))
            }
        }),
    }
}

fn each_match(
    page: &Page,
    selector: &Selector,
    mut check: impl FnMut(NodeId) -> Result<(), String>,
) -> Result<(), String> {
    let nodes = page.query(selector);
    if nodes.is_empty() {
        return Err(NO_MATCH.into());
    }
    for (i, node) in nodes.into_iter().enumerate() {
        check(node).map_err(|e| if i == 0 { e } else { format!("match {i}: {e}") })?;
    }
    Ok(())
}

/// Winning normalized value of `property` among rules whose selector list
/// contains `selector` exactly. All such rules share one specificity, so
/// importance then source order decide.
pub fn declared_by_rule(sheets: &[Stylesheet], selector: &Selector, property: &str) -> Option<String> {
    let mut best: Option<((bool, usize, usize, usize), &str)> = None;
    for (si, sheet) in sheets.iter().enumerate() {
        for (ri, rule) in sheet.rules.iter().enumerate() {
            if !rule.selectors.iter().any(|s| s == selector) {
                continue;
            }
            for (di, d) in rule.declarations.iter().enumerate() {
                if d.property != property {
                    continue;
                }
                let key = (d.important, si, ri, di);
                if best.is_none_or(|(k, _)| key > k) {
                    best = Some((key, &d.value));
                }
            }
        }
    }
    best.map(|(_, v)| normalize_value(property, v))
}

/// First failing assertion as the outcome detail, or `None` if all hold.
pub fn first_failure(page: &Page, assertions: &[Assertion]) -> Option<String> {
    assertions.iter().enumerate().find_map(|(k, a)| {
        check_assertion(page, a)
            .err()
            .map(|e| format!("assertion {k}: {} on {}: {e}", a.kind(), a.selector()))
    })
}

/// Every failing assertion; used to show short-circuiting changes nothing
/// but the detail.
pub fn all_failures(page: &Page, assertions: &[Assertion]) -> Vec<String> {
    assertions
        .iter()
        .enumerate()
        .filter_map(|(k, a)| {
            check_assertion(page, a)
                .err()
                .map(|e| format!("assertion {k}: {} on {}: {e}", a.kind(), a.selector()))
        })
        .collect()
}

pub const UNSUPPORTED_DETAIL: &str = "task has interaction steps; the static runner cannot simulate them";
pub const NO_HTML_DETAIL: &str = "snapshot has no HTML file";

/// Judges a task against an already parsed page.
pub fn judge(page: Option<&Page>, task: &Task) -> (Status, String) {
    if task.requires_runtime() {
        return (Status::Unsupported, UNSUPPORTED_DETAIL.into());
    }
    let Some(page) = page else {
        return (Status::Error, NO_HTML_DETAIL.into());
    };
    match first_failure(page, &task.assertions) {
        None => (Status::Pass, String::new()),
        Some(detail) => (Status::Fail, detail),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StaticRunner;

impl Runner for StaticRunner {
    fn capabilities(&self) -> Capability {
        Capability::StaticOnly
    }

    fn evaluate_batch(&self, tasks: &[TaskRef<'_>], snapshot: &DocumentSnapshot) -> Vec<TaskOutcome> {
        let page = if tasks.iter().all(|t| t.task.requires_runtime()) {
            None
        } else {
            Page::load(&snapshot.files)
        };
        tasks
            .iter()
            .map(|t| {
                let (status, detail) = judge(page.as_ref(), t.task);
                TaskOutcome::new(t.checkpoint_id, &t.task.id, status, detail, snapshot)
            })
            .collect()
    }
}

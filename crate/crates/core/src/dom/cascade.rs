//! Cascade resolution: for each declared property the winner is chosen by
//! importance, then inline-ness, then specificity, then source order.
//! Undeclared inheritable properties come from the nearest ancestor.

use std::collections::BTreeMap;

use serde::Serialize;

use super::css::{parse_declarations, Stylesheet};
use super::html::{Document, NodeId};
use super::selector::Specificity;
use super::values::normalize_value;

pub const INHERITED_PROPERTIES: [&str; 4] = ["font-size", "font-weight", "color", "text-align"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Inline,
    Rule { sheet: usize, rule: usize },
    Inherited { from: NodeId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StyleValue {
    pub value: String,
    pub provenance: Provenance,
}

pub type StyleMap = BTreeMap<String, StyleValue>;

/// Total order used to pick a winner among candidate declarations.
/// Inline declarations outrank any rule of equal importance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CascadeKey {
    pub important: bool,
    pub inline: bool,
    pub specificity: Specificity,
    /// (sheet, rule, declaration) for rules; (0, 0, declaration) for inline.
    pub order: (usize, usize, usize),
}

/// One declaration applicable to a node.
#[derive(Debug, Clone)]
pub struct Candidate<'a> {
    pub key: CascadeKey,
    pub property: &'a str,
    pub value: &'a str,
    pub provenance: Provenance,
}

/// Highest specificity among the rule's selectors that match `node`.
fn matching_specificity(rule: &super::css::Rule, doc: &Document, node: NodeId) -> Option<Specificity> {
    rule.selectors
        .iter()
        .filter(|s| s.matches(doc, node))
        .map(|s| s.specificity())
        .max()
}

/// Declarations from `sheets` whose rules match `node`, plus the inline
/// `style` attribute. Unsorted.
pub fn applicable_rule_declarations<'a>(
    doc: &Document,
    node: NodeId,
    sheets: &'a [Stylesheet],
) -> Vec<Candidate<'a>> {
    let mut out = Vec::new();
    for (si, sheet) in sheets.iter().enumerate() {
        for (ri, rule) in sheet.rules.iter().enumerate() {
            let Some(specificity) = matching_specificity(rule, doc, node) else {
                continue;
            };
            for (di, d) in rule.declarations.iter().enumerate() {
                out.push(Candidate {
                    key: CascadeKey {
                        important: d.important,
                        inline: false,
                        specificity,
                        order: (si, ri, di),
                    },
                    property: &d.property,
                    value: &d.value,
                    provenance: Provenance::Rule { sheet: si, rule: ri },
                });
            }
        }
    }
    out
}

fn declared_style(doc: &Document, node: NodeId, sheets: &[Stylesheet]) -> StyleMap {
    let inline_decls = doc
        .element(node)
        .and_then(|e| e.attr("style"))
        .map(|s| parse_declarations(s).0)
        .unwrap_or_default();

    let mut winners: BTreeMap<&str, (CascadeKey, &str, Provenance)> = BTreeMap::new();
    let rule_candidates = applicable_rule_declarations(doc, node, sheets);
    for c in &rule_candidates {
        offer(&mut winners, c.key, c.property, c.value, c.provenance);
    }
    for (di, d) in inline_decls.iter().enumerate() {
        let key = CascadeKey {
            important: d.important,
            inline: true,
            specificity: Specificity::default(),
            order: (0, 0, di),
        };
        offer(&mut winners, key, &d.property, &d.value, Provenance::Inline);
    }
    winners
        .into_iter()
        .map(|(p, (_, v, provenance))| {
            (
                p.to_owned(),
                StyleValue {
                    value: normalize_value(p, v),
                    provenance,
                },
            )
        })
        .collect()
}

fn offer<'a>(
    winners: &mut BTreeMap<&'a str, (CascadeKey, &'a str, Provenance)>,
    key: CascadeKey,
    property: &'a str,
    value: &'a str,
    provenance: Provenance,
) {
    match winners.get(property) {
        Some((best, ..)) if *best >= key => {}
        _ => {
            winners.insert(property, (key, value, provenance));
        }
    }
}

/// Computed style of `node`: every declared property plus inherited values
/// for the inheritable set. Values are canonical (see `normalize_value`).
pub fn computed_style(doc: &Document, node: NodeId, sheets: &[Stylesheet]) -> StyleMap {
    let mut style = declared_style(doc, node, sheets);
    let missing: Vec<&str> = INHERITED_PROPERTIES
        .iter()
        .copied()
        .filter(|p| !style.contains_key(*p))
        .collect();
    if missing.is_empty() {
        return style;
    }
    let mut remaining = missing;
    for ancestor in doc.ancestors(node) {
        if remaining.is_empty() {
            break;
        }
        let declared = declared_style(doc, ancestor, sheets);
        remaining.retain(|p| match declared.get(*p) {
            Some(v) => {
                style.insert(
                    (*p).to_owned(),
                    StyleValue {
                        value: v.value.clone(),
                        provenance: Provenance::Inherited { from: ancestor },
                    },
                );
                false
            }
            None => true,
        });
    }
    style
}

/// Value of a single property, or `None` when absent.
pub fn computed_property(doc: &Document, node: NodeId, sheets: &[Stylesheet], property: &str) -> Option<String> {
    computed_style(doc, node, sheets).remove(property).map(|v| v.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::css::parse_css;
    use crate::dom::html::parse_html;
    use crate::dom::selector::{query, Selector};

    fn style_of(html: &str, css: &str, selector: &str) -> StyleMap {
        let doc = parse_html(html).document;
        let sheet = parse_css(css).sheet;
        let node = query(&Selector::parse(selector).unwrap(), &doc)[0];
        computed_style(&doc, node, &[sheet])
    }

    #[test]
    fn id_beats_type() {
        let s = style_of(
            r#"<h1 id="pageTitle">Todo List</h1>"#,
            "#pageTitle { font-size: 25px } h1 { font-size: 16px }",
            "h1",
        );
        assert_eq!(s["font-size"].value, "25px");
        assert_eq!(s["font-size"].provenance, Provenance::Rule { sheet: 0, rule: 0 });
    }

    #[test]
    fn inline_beats_rules() {
        let s = style_of(
            r#"<div class="todoItem" style="width:350px"></div>"#,
            ".todoItem { width: 300px }",
            ".todoItem",
        );
        assert_eq!(s["width"].value, "350px");
        assert_eq!(s["width"].provenance, Provenance::Inline);
    }

    #[test]
    fn important_beats_inline() {
        let s = style_of(
            r#"<p style="color: blue">x</p>"#,
            "p { color: red !important }",
            "p",
        );
        assert_eq!(s["color"].value, "#ff0000");
    }

    #[test]
    fn later_source_wins_ties() {
        let s = style_of("<p class=a>x</p>", ".a { width: 1px } .a { width: 2px }", "p");
        assert_eq!(s["width"].value, "2px");
    }

    #[test]
    fn inheritance_only_for_listed_properties() {
        let s = style_of(
            "<div id=c><span>x</span></div>",
            "#c { color: red; width: 10px; text-align: center }",
            "span",
        );
        assert_eq!(s["color"].value, "#ff0000");
        assert!(matches!(s["color"].provenance, Provenance::Inherited { .. }));
        assert_eq!(s["text-align"].value, "center");
        assert!(!s.contains_key("width"));
    }

    #[test]
    fn hover_rules_do_not_apply() {
        let s = style_of(
            "<button class=deleteBtn>x</button>",
            ".deleteBtn { background-color: red } .deleteBtn:hover { background-color: darkred }",
            "button",
        );
        assert_eq!(s["background-color"].value, "#ff0000");
    }

    #[test]
    fn selector_list_uses_best_matching_alternative() {
        let s = style_of(
            "<p id=x class=y>t</p>",
            "#x, .y { width: 1px } .y.y { width: 2px }",
            "p",
        );
        assert_eq!(s["width"].value, "1px");
    }
}

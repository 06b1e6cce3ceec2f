//! Selector grammar: compounds of `type`, `#id`, `.class` and `:hover`
//! joined by descendant (whitespace) or child (`>`) combinators.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::html::{Document, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("SelectorError: {message} in {text:?}")]
pub struct SelectorError {
    pub text: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PseudoClass {
    Hover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Combinator {
    Descendant,
    Child,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Compound {
    pub tag: Option<String>,
    pub ids: BTreeSet<String>,
    pub classes: BTreeSet<String>,
    pub pseudo: BTreeSet<PseudoClass>,
}

impl Compound {
    fn is_empty(&self) -> bool {
        self.tag.is_none() && self.ids.is_empty() && self.classes.is_empty() && self.pseudo.is_empty()
    }
}

/// A complex selector. `combinators[i]` joins `compounds[i]` to
/// `compounds[i + 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Selector {
    pub compounds: Vec<Compound>,
    pub combinators: Vec<Combinator>,
}

/// `(ids, classes + pseudo-classes, types)`, compared lexicographically.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Specificity(pub u32, pub u32, pub u32);

impl Selector {
    pub fn parse(text: &str) -> Result<Self, SelectorError> {
        Parser::new(text).selector()
    }

    pub fn specificity(&self) -> Specificity {
        self.compounds.iter().fold(Specificity::default(), |s, c| {
            Specificity(
                s.0 + c.ids.len() as u32,
                s.1 + (c.classes.len() + c.pseudo.len()) as u32,
                s.2 + u32::from(c.tag.is_some()),
            )
        })
    }

    pub fn has_pseudo(&self) -> bool {
        self.compounds.iter().any(|c| !c.pseudo.is_empty())
    }

    /// Static match: state pseudo-classes never match.
    pub fn matches(&self, doc: &Document, node: NodeId) -> bool {
        match self.compounds.len().checked_sub(1) {
            Some(last) => self.match_from(doc, node, last),
            None => false,
        }
    }

    fn match_from(&self, doc: &Document, node: NodeId, idx: usize) -> bool {
        if !compound_matches(doc, node, &self.compounds[idx]) {
            return false;
        }
        if idx == 0 {
            return true;
        }
        match self.combinators[idx - 1] {
            Combinator::Child => doc
                .parent(node)
                .is_some_and(|p| self.match_from(doc, p, idx - 1)),
            Combinator::Descendant => doc
                .ancestors(node)
                .any(|a| self.match_from(doc, a, idx - 1)),
        }
    }
}

fn compound_matches(doc: &Document, node: NodeId, c: &Compound) -> bool {
    let Some(el) = doc.element(node) else {
        return false;
    };
    if !c.pseudo.is_empty() {
        return false;
    }
    if c.tag.as_ref().is_some_and(|t| *t != el.tag) {
        return false;
    }
    if !c.ids.iter().all(|id| el.id() == Some(id.as_str())) {
        return false;
    }
    c.classes.iter().all(|class| el.has_class(class))
}

/// Matching elements in document order.
pub fn query(selector: &Selector, doc: &Document) -> Vec<NodeId> {
    doc.elements().filter(|&n| selector.matches(doc, n)).collect()
}

/// Elements matching any selector in a list, in document order.
pub fn query_any(selectors: &[Selector], doc: &Document) -> Vec<NodeId> {
    doc.elements()
        .filter(|&n| selectors.iter().any(|s| s.matches(doc, n)))
        .collect()
}

pub fn parse_selector_list(text: &str) -> Result<Vec<Selector>, SelectorError> {
    let mut out = Vec::new();
    for part in split_top_level_commas(text) {
        out.push(Selector::parse(part).map_err(|e| SelectorError {
            text: text.to_owned(),
            message: e.message,
        })?);
    }
    Ok(out)
}

fn split_top_level_commas(text: &str) -> Vec<&str> {
    text.split(',').collect()
}

impl FromStr for Selector {
    type Err = SelectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Selector::parse(s)
    }
}

impl fmt::Display for Compound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("*");
        }
        if let Some(tag) = &self.tag {
            f.write_str(tag)?;
        }
        for id in &self.ids {
            write!(f, "#{id}")?;
        }
        for class in &self.classes {
            write!(f, ".{class}")?;
        }
        for p in &self.pseudo {
            match p {
                PseudoClass::Hover => f.write_str(":hover")?,
            }
        }
        Ok(())
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.compounds.iter().enumerate() {
            if i > 0 {
                match self.combinators[i - 1] {
                    Combinator::Descendant => f.write_str(" ")?,
                    Combinator::Child => f.write_str(" > ")?,
                }
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl Serialize for Selector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Selector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Selector::parse(&text).map_err(serde::de::Error::custom)
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '-' || !c.is_ascii()
}

fn is_ident_char(c: char) -> bool {
    is_ident_start(c) || c.is_ascii_digit()
}

struct Parser<'a> {
    text: &'a str,
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            text,
            chars: text.char_indices().peekable(),
        }
    }

    fn error(&self, message: impl Into<String>) -> SelectorError {
        SelectorError {
            text: self.text.to_owned(),
            message: message.into(),
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn skip_ws(&mut self) -> bool {
        let mut any = false;
        while self.peek().is_some_and(char::is_whitespace) {
            self.chars.next();
            any = true;
        }
        any
    }

    fn ident(&mut self, what: &str) -> Result<String, SelectorError> {
        let mut out = String::new();
        match self.peek() {
            Some(c) if is_ident_start(c) => {}
            Some(c) => return Err(self.error(format!("expected {what}, found {c:?}"))),
            None => return Err(self.error(format!("expected {what}, found end of input"))),
        }
        while let Some(c) = self.peek().filter(|&c| is_ident_char(c)) {
            out.push(c);
            self.chars.next();
        }
        if out == "-" || out.starts_with("--") || out.starts_with('-') && out[1..].starts_with(|c: char| c.is_ascii_digit()) {
            return Err(self.error(format!("invalid {what} {out:?}")));
        }
        Ok(out)
    }

    fn compound(&mut self) -> Result<Compound, SelectorError> {
        let mut c = Compound::default();
        let mut universal = false;
        match self.peek() {
            Some('*') => {
                self.chars.next();
                universal = true;
            }
            Some(ch) if is_ident_start(ch) => c.tag = Some(self.ident("type")?.to_ascii_lowercase()),
            _ => {}
        }
        loop {
            match self.peek() {
                Some('#') => {
                    self.chars.next();
                    c.ids.insert(self.ident("id")?);
                }
                Some('.') => {
                    self.chars.next();
                    c.classes.insert(self.ident("class")?);
                }
                Some(':') => {
                    self.chars.next();
                    if self.peek() == Some(':') {
                        return Err(self.error("pseudo-elements are not supported"));
                    }
                    let name = self.ident("pseudo-class")?.to_ascii_lowercase();
                    if name != "hover" {
                        return Err(self.error(format!("unsupported pseudo-class :{name}")));
                    }
                    c.pseudo.insert(PseudoClass::Hover);
                }
                _ => break,
            }
        }
        if c.is_empty() && !universal {
            return Err(match self.peek() {
                Some(ch) => self.error(format!("unexpected {ch:?}")),
                None => self.error("empty selector"),
            });
        }
        Ok(c)
    }

    fn selector(&mut self) -> Result<Selector, SelectorError> {
        self.skip_ws();
        let mut compounds = vec![self.compound()?];
        let mut combinators = Vec::new();
        loop {
            let had_ws = self.skip_ws();
            match self.peek() {
                None => break,
                Some('>') => {
                    self.chars.next();
                    self.skip_ws();
                    combinators.push(Combinator::Child);
                }
                Some(_) if had_ws => combinators.push(Combinator::Descendant),
                Some(c) => return Err(self.error(format!("unsupported syntax at {c:?}"))),
            }
            compounds.push(self.compound()?);
        }
        Ok(Selector {
            compounds,
            combinators,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::html::parse_html;

    fn spec(s: &str) -> Specificity {
        Selector::parse(s).unwrap().specificity()
    }

    #[test]
    fn specificity_examples() {
        assert_eq!(spec("#pageTitle"), Specificity(1, 0, 0));
        assert_eq!(spec(".todoItem .deleteBtn"), Specificity(0, 2, 0));
        assert_eq!(spec("div#inputContainer input"), Specificity(1, 0, 2));
        assert_eq!(spec(".deleteBtn:hover"), Specificity(0, 2, 0));
        assert_eq!(spec("*"), Specificity(0, 0, 0));
    }

    #[test]
    fn parse_errors() {
        for bad in ["", "  ", "a + b", "a ~ b", "[x]", "a::before", "a:first-child", "#", ".1x", "a >", "a,"] {
            assert!(Selector::parse(bad).is_err(), "{bad:?} should fail");
        }
    }

    #[test]
    fn serialize_round_trip() {
        for text in ["div#a.b.c > p span", "*", ".x:hover", "ul>li", "A  B"] {
            let s = Selector::parse(text).unwrap();
            assert_eq!(Selector::parse(&s.to_string()).unwrap(), s);
        }
        assert_eq!(Selector::parse("ul>li").unwrap().to_string(), "ul > li");
    }

    #[test]
    fn query_in_document_order() {
        let doc = parse_html(
            r#"<div id="todoList"><p class="a">1</p><section><p class="a b">2</p></section></div><p>3</p>"#,
        )
        .document;
        let q = |s: &str| query(&Selector::parse(s).unwrap(), &doc);
        assert_eq!(q("#todoList").len(), 1);
        assert_eq!(q("p").len(), 3);
        assert_eq!(q("#todoList p.a").len(), 2);
        assert_eq!(q("#todoList > p").len(), 1);
        assert_eq!(q("div > section > .b").len(), 1);
        assert_eq!(q("p:hover").len(), 0);
        let all = q("p");
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn empty_tree_matches_nothing() {
        let doc = parse_html("").document;
        assert!(query(&Selector::parse("div").unwrap(), &doc).is_empty());
    }

    #[test]
    fn selector_lists() {
        let list = parse_selector_list("h1, .a > b").unwrap();
        assert_eq!(list.len(), 2);
        assert!(parse_selector_list("h1, ").is_err());
    }
}

//! Forgiving HTML parser for the exercise subset.
//!
//! Never fails: unclosed elements close at their parent's end tag or at end
//! of input, stray end tags are ignored, comments and doctypes are dropped,
//! and every recovery is reported as a [`Diagnostic`]. `<script>` and
//! `<style>` bodies are kept as opaque text.

use std::collections::BTreeMap;

use serde::Serialize;

pub type NodeId = usize;

/// Elements that never have children.
pub const VOID_ELEMENTS: [&str; 6] = ["input", "img", "br", "hr", "meta", "link"];

const RAW_TEXT_ELEMENTS: [&str; 2] = ["script", "style"];

pub fn is_void(tag: &str) -> bool {
    VOID_ELEMENTS.contains(&tag)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementData {
    pub tag: String,
    pub attrs: BTreeMap<String, String>,
}

impl ElementData {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs.get(name).map(String::as_str)
    }

    pub fn id(&self) -> Option<&str> {
        self.attr("id")
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.attr("class")
            .is_some_and(|c| c.split_ascii_whitespace().any(|c| c == class))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Element(ElementData),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub kind: NodeKind,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

/// Arena-backed tree. Node ids are assigned in document order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Document {
    nodes: Vec<Node>,
    roots: Vec<NodeId>,
}

impl Document {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn element(&self, id: NodeId) -> Option<&ElementData> {
        match &self.nodes.get(id)?.kind {
            NodeKind::Element(e) => Some(e),
            NodeKind::Text(_) => None,
        }
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    /// All element ids in document order.
    pub fn elements(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&id| matches!(self.nodes[id].kind, NodeKind::Element(_)))
    }

    /// Ancestors from the parent upward.
    pub fn ancestors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        std::iter::successors(self.nodes[id].parent, move |&p| self.nodes[p].parent)
    }

    /// Concatenated descendant text.
    pub fn text_content(&self, id: NodeId) -> String {
        let mut out = String::new();
        self.collect_text(id, &mut out);
        out
    }

    fn collect_text(&self, id: NodeId, out: &mut String) {
        match &self.nodes[id].kind {
            NodeKind::Text(t) => out.push_str(t),
            NodeKind::Element(_) => {
                for &c in &self.nodes[id].children {
                    self.collect_text(c, out);
                }
            }
        }
    }

    /// Appends a node under `parent` (or as a root). Used by the parser and
    /// by tests that build trees directly.
    pub fn push(&mut self, parent: Option<NodeId>, kind: NodeKind) -> NodeId {
        if let Some(p) = parent {
            assert!(
                matches!(self.nodes[p].kind, NodeKind::Element(_)),
                "text nodes cannot have children"
            );
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            kind,
            parent,
            children: Vec::new(),
        });
        match parent {
            Some(p) => self.nodes[p].children.push(id),
            None => self.roots.push(id),
        }
        id
    }

    pub fn push_element(
        &mut self,
        parent: Option<NodeId>,
        tag: &str,
        attrs: &[(&str, &str)],
    ) -> NodeId {
        self.push(
            parent,
            NodeKind::Element(ElementData {
                tag: tag.to_ascii_lowercase(),
                attrs: attrs
                    .iter()
                    .map(|(k, v)| (k.to_ascii_lowercase(), (*v).to_owned()))
                    .collect(),
            }),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    /// Byte offset into the source.
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct HtmlParse {
    pub document: Document,
    pub diagnostics: Vec<Diagnostic>,
}

/// Decodes the four supported entities; everything else stays verbatim.
pub fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_owned();
    }
    s.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&amp;", "&")
}

struct Builder<'a> {
    src: &'a str,
    lower: String,
    pos: usize,
    doc: Document,
    open: Vec<NodeId>,
    text: String,
    diagnostics: Vec<Diagnostic>,
}

pub fn parse_html(src: &str) -> HtmlParse {
    let mut b = Builder {
        src,
        lower: src.to_ascii_lowercase(),
        pos: 0,
        doc: Document::new(),
        open: Vec::new(),
        text: String::new(),
        diagnostics: Vec::new(),
    };
    b.run();
    HtmlParse {
        document: b.doc,
        diagnostics: b.diagnostics,
    }
}

fn is_name_byte(b: u8) -> bool {
    !(b.is_ascii_whitespace() || b == b'/' || b == b'>' || b == b'<' || b == b'=')
}

impl<'a> Builder<'a> {
    fn bytes(&self) -> &'a [u8] {
        self.src.as_bytes()
    }

    fn diag(&mut self, offset: usize, message: impl Into<String>) {
        self.diagnostics.push(Diagnostic {
            offset,
            message: message.into(),
        });
    }

    fn flush_text(&mut self) {
        if self.text.is_empty() {
            return;
        }
        let text = decode_entities(&std::mem::take(&mut self.text));
        self.doc.push(self.open.last().copied(), NodeKind::Text(text));
    }

    fn run(&mut self) {
        let bytes = self.bytes();
        while self.pos < bytes.len() {
            let Some(rel) = self.src[self.pos..].find('<') else {
                self.text.push_str(&self.src[self.pos..]);
                self.pos = bytes.len();
                break;
            };
            let lt = self.pos + rel;
            self.text.push_str(&self.src[self.pos..lt]);
            self.pos = lt;
            let next = bytes.get(lt + 1).copied();
            if self.src[lt..].starts_with("<!--") {
                self.flush_text();
                self.skip_comment();
            } else if matches!(next, Some(b'!') | Some(b'?')) {
                self.flush_text();
                self.skip_until_gt("markup declaration");
            } else if next == Some(b'/') && bytes.get(lt + 2).is_some_and(u8::is_ascii_alphabetic) {
                self.flush_text();
                self.end_tag();
            } else if next.is_some_and(|b| b.is_ascii_alphabetic()) {
                self.flush_text();
                self.start_tag();
            } else {
                self.text.push('<');
                self.pos = lt + 1;
            }
        }
        self.flush_text();
        while let Some(id) = self.open.pop() {
            let tag = self.doc.element(id).map(|e| e.tag.clone()).unwrap_or_default();
            self.diag(self.src.len(), format!("unclosed <{tag}> closed at end of input"));
        }
    }

    fn skip_comment(&mut self) {
        let start = self.pos;
        match self.src[start + 4..].find("-->") {
            Some(rel) => self.pos = start + 4 + rel + 3,
            None => {
                self.diag(start, "unterminated comment");
                self.pos = self.src.len();
            }
        }
    }

    fn skip_until_gt(&mut self, what: &str) {
        let start = self.pos;
        match self.src[start..].find('>') {
            Some(rel) => self.pos = start + rel + 1,
            None => {
                self.diag(start, format!("unterminated {what}"));
                self.pos = self.src.len();
            }
        }
    }

    fn read_name(&mut self) -> String {
        let bytes = self.bytes();
        let start = self.pos;
        while self.pos < bytes.len() && is_name_byte(bytes[self.pos]) {
            self.pos += 1;
        }
        self.src[start..self.pos].to_ascii_lowercase()
    }

    fn skip_ws(&mut self) {
        let bytes = self.bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn end_tag(&mut self) {
        let start = self.pos;
        self.pos += 2;
        let name = self.read_name();
        self.skip_until_gt("end tag");
        if is_void(&name) {
            self.diag(start, format!("end tag </{name}> for void element ignored"));
            return;
        }
        let found = self
            .open
            .iter()
            .rposition(|&id| self.doc.element(id).is_some_and(|e| e.tag == name));
        match found {
            Some(depth) => {
                while self.open.len() > depth + 1 {
                    let id = self.open.pop().expect("non-empty stack");
                    let tag = self.doc.element(id).map(|e| e.tag.clone()).unwrap_or_default();
                    self.diag(start, format!("unclosed <{tag}> closed by </{name}>"));
                }
                self.open.pop();
            }
            None => self.diag(start, format!("stray end tag </{name}> ignored")),
        }
    }

    fn start_tag(&mut self) {
        let start = self.pos;
        self.pos += 1;
        let tag = self.read_name();
        let mut attrs = BTreeMap::new();
        let mut self_closing = false;
        let bytes = self.bytes();
        loop {
            self.skip_ws();
            match bytes.get(self.pos) {
                None => {
                    self.diag(start, format!("unterminated <{tag}> tag dropped"));
                    return;
                }
                Some(b'>') => {
                    self.pos += 1;
                    break;
                }
                Some(b'/') => {
                    self.pos += 1;
                    if bytes.get(self.pos) == Some(&b'>') {
                        self.pos += 1;
                        self_closing = true;
                        break;
                    }
                }
                Some(b'<') => {
                    self.diag(self.pos, format!("<{tag}> tag interrupted by '<'"));
                    break;
                }
                Some(b'=') => {
                    self.diag(self.pos, "attribute value without a name ignored");
                    self.pos += 1;
                    self.read_attr_value();
                }
                Some(_) => {
                    let at = self.pos;
                    let name = self.read_name();
                    self.skip_ws();
                    let value = if bytes.get(self.pos) == Some(&b'=') {
                        self.pos += 1;
                        self.skip_ws();
                        self.read_attr_value()
                    } else {
                        String::new()
                    };
                    match attrs.entry(name) {
                        std::collections::btree_map::Entry::Occupied(e) => {
                            self.diag(at, format!("duplicate attribute {:?} ignored", e.key()));
                        }
                        std::collections::btree_map::Entry::Vacant(e) => {
                            e.insert(value);
                        }
                    }
                }
            }
        }
        let void = is_void(&tag);
        if self_closing && !void {
            self.diag(start, format!("self-closing syntax on non-void <{tag}> ignored"));
        }
        let raw = RAW_TEXT_ELEMENTS.contains(&tag.as_str());
        let id = self.doc.push(
            self.open.last().copied(),
            NodeKind::Element(ElementData {
                tag: tag.clone(),
                attrs,
            }),
        );
        if void {
            return;
        }
        if raw {
            self.raw_text(id, &tag);
        } else {
            self.open.push(id);
        }
    }

    fn read_attr_value(&mut self) -> String {
        let bytes = self.bytes();
        match bytes.get(self.pos) {
            Some(&q @ (b'"' | b'\'')) => {
                let start = self.pos + 1;
                match self.src[start..].find(q as char) {
                    Some(rel) => {
                        self.pos = start + rel + 1;
                        decode_entities(&self.src[start..start + rel])
                    }
                    None => {
                        self.diag(self.pos, "unterminated attribute value");
                        self.pos = self.src.len();
                        decode_entities(&self.src[start..])
                    }
                }
            }
            _ => {
                let start = self.pos;
                while self.pos < bytes.len()
                    && !bytes[self.pos].is_ascii_whitespace()
                    && bytes[self.pos] != b'>'
                {
                    self.pos += 1;
                }
                decode_entities(&self.src[start..self.pos])
            }
        }
    }

    fn raw_text(&mut self, id: NodeId, tag: &str) {
        let close = format!("</{tag}");
        let start = self.pos;
        let end = match self.lower[start..].find(&close) {
            Some(rel) => start + rel,
            None => {
                self.diag(start, format!("unterminated <{tag}> closed at end of input"));
                self.src.len()
            }
        };
        if end > start {
            self.doc
                .push(Some(id), NodeKind::Text(self.src[start..end].to_owned()));
        }
        self.pos = end;
        if end < self.src.len() {
            self.skip_until_gt("end tag");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag(doc: &Document, id: NodeId) -> &str {
        &doc.element(id).unwrap().tag
    }

    #[test]
    fn title_with_id() {
        let p = parse_html(r#"<h1 id="pageTitle">Todo List</h1>"#);
        assert!(p.diagnostics.is_empty());
        let doc = &p.document;
        let h1 = doc.roots()[0];
        assert_eq!(tag(doc, h1), "h1");
        assert_eq!(doc.element(h1).unwrap().id(), Some("pageTitle"));
        assert_eq!(doc.children(h1).len(), 1);
        assert_eq!(doc.text_content(h1), "Todo List");
    }

    #[test]
    fn empty_input() {
        let p = parse_html("");
        assert!(p.document.is_empty());
        assert!(p.diagnostics.is_empty());
    }

    #[test]
    fn unclosed_elements_auto_close() {
        let p = parse_html("<div><p>a");
        let doc = &p.document;
        let div = doc.roots()[0];
        let para = doc.children(div)[0];
        assert_eq!(tag(doc, para), "p");
        assert_eq!(doc.text_content(para), "a");
        assert_eq!(p.diagnostics.len(), 2);
    }

    #[test]
    fn mismatched_close_is_ignored() {
        let p = parse_html("<div>x</span></div>");
        assert_eq!(p.diagnostics.len(), 1);
        assert_eq!(p.document.text_content(p.document.roots()[0]), "x");
    }

    #[test]
    fn close_pops_intervening() {
        let p = parse_html("<div><span>a</div><p>b</p>");
        let doc = &p.document;
        assert_eq!(doc.roots().len(), 2);
        assert_eq!(p.diagnostics.len(), 1);
    }

    #[test]
    fn void_and_attrs() {
        let p = parse_html(r#"<div id=box CLASS='a b'><input type="text" disabled><br/>t</div>"#);
        let doc = &p.document;
        let div = doc.roots()[0];
        let e = doc.element(div).unwrap();
        assert_eq!(e.id(), Some("box"));
        assert!(e.has_class("a") && e.has_class("b"));
        let kids = doc.children(div);
        assert_eq!(tag(doc, kids[0]), "input");
        assert_eq!(doc.element(kids[0]).unwrap().attr("disabled"), Some(""));
        assert!(doc.children(kids[0]).is_empty());
        assert_eq!(tag(doc, kids[1]), "br");
        assert!(p.diagnostics.is_empty());
    }

    #[test]
    fn comments_and_doctype_dropped() {
        let p = parse_html("<!DOCTYPE html><!-- hi --><p>x</p>");
        assert_eq!(p.document.roots().len(), 1);
        assert!(p.diagnostics.is_empty());
    }

    #[test]
    fn script_body_is_opaque() {
        let p = parse_html("<script>if (a < b && c) { x = '</div>' }</script><p>z</p>");
        let doc = &p.document;
        let script = doc.roots()[0];
        assert_eq!(doc.text_content(script), "if (a < b && c) { x = '</div>' }");
        assert_eq!(tag(doc, doc.roots()[1]), "p");
    }

    #[test]
    fn entities() {
        let p = parse_html(r#"<p title="a &quot;b&quot;">1 &lt; 2 &amp;&amp; &copy;</p>"#);
        let doc = &p.document;
        let para = doc.roots()[0];
        assert_eq!(doc.element(para).unwrap().attr("title"), Some("a \"b\""));
        assert_eq!(doc.text_content(para), "1 < 2 && &copy;");
    }

    #[test]
    fn stray_less_than_is_text() {
        let p = parse_html("a < b <3 <");
        assert_eq!(p.document.text_content(p.document.roots()[0]), "a < b <3 <");
    }

    #[test]
    fn duplicate_attribute_keeps_first() {
        let p = parse_html(r#"<a id="x" id="y"></a>"#);
        assert_eq!(p.document.element(0).unwrap().id(), Some("x"));
        assert_eq!(p.diagnostics.len(), 1);
    }
}

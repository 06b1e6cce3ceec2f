//! Canonical element serialization used for fingerprints.
//!
//! Form: `<tag a="v" ...>{prop:value;...}children</tag>`. Attributes and
//! properties are sorted by name, whitespace-only text is dropped, other
//! text is trimmed. Structural characters inside names, values and text are
//! backslash-escaped so distinct trees never serialize the same.

use super::cascade::computed_style;
use super::css::Stylesheet;
use super::html::{Document, NodeId, NodeKind};

#[derive(Debug, Clone, Copy)]
pub struct StyleContext<'a> {
    pub sheets: &'a [Stylesheet],
    /// Properties to include; `None` includes every computed property.
    pub properties: Option<&'a [String]>,
}

fn escape_into(out: &mut String, s: &str) {
    for c in s.chars() {
        if matches!(c, '\\' | '<' | '>' | '"' | '{' | '}' | ';' | ':' | '=' | ' ') {
            out.push('\\');
        }
        out.push(c);
    }
}

pub fn serialize_normalized(doc: &Document, node: NodeId, ctx: StyleContext<'_>) -> String {
    let mut out = String::new();
    write_node(doc, node, ctx, &mut out);
    out
}

fn write_node(doc: &Document, node: NodeId, ctx: StyleContext<'_>, out: &mut String) {
    match &doc.node(node).kind {
        NodeKind::Text(t) => {
            let t = t.trim();
            if !t.is_empty() {
                out.push('"');
                escape_into(out, t);
                out.push('"');
            }
        }
        NodeKind::Element(el) => {
            out.push('<');
            escape_into(out, &el.tag);
            for (name, value) in &el.attrs {
                out.push(' ');
                escape_into(out, name);
                out.push_str("=\"");
                escape_into(out, value);
                out.push('"');
            }
            out.push('>');
            out.push('{');
            let style = computed_style(doc, node, ctx.sheets);
            for (property, value) in &style {
                if ctx.properties.is_some_and(|ps| !ps.iter().any(|p| p == property)) {
                    continue;
                }
                escape_into(out, property);
                out.push(':');
                escape_into(out, &value.value);
                out.push(';');
            }
            out.push('}');
            for &child in doc.children(node) {
                write_node(doc, child, ctx, out);
            }
            out.push_str("</");
            escape_into(out, &el.tag);
            out.push('>');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::css::parse_css;
    use crate::dom::html::parse_html;

    fn ser(html: &str, css: &str, props: Option<&[String]>) -> String {
        let doc = parse_html(html).document;
        let sheets = [parse_css(css).sheet];
        serialize_normalized(
            &doc,
            doc.roots()[0],
            StyleContext {
                sheets: &sheets,
                properties: props,
            },
        )
    }

    #[test]
    fn attribute_order_is_irrelevant() {
        assert_eq!(
            ser(r#"<button id="addBtn" class="b">Add</button>"#, "", None),
            ser(r#"<button class="b" id="addBtn">Add</button>"#, "", None)
        );
    }

    #[test]
    fn whitespace_text_dropped_and_trimmed() {
        assert_eq!(ser("<ul>\n  <li> a </li>\n</ul>", "", None), "<ul>{}<li>{}\"a\"</li></ul>");
    }

    #[test]
    fn styles_are_included_and_filterable() {
        let css = "#addBtn { background-color: RED; width: 10.0px }";
        let all = ser(r#"<button id="addBtn">Add</button>"#, css, None);
        assert_eq!(all, "<button id=\"addBtn\">{background-color:#ff0000;width:10px;}\"Add\"</button>");
        let only = ["width".to_owned()];
        let some = ser(r#"<button id="addBtn">Add</button>"#, css, Some(&only));
        assert_eq!(some, "<button id=\"addBtn\">{width:10px;}\"Add\"</button>");
    }

    #[test]
    fn escaping_separates_lookalikes() {
        assert_ne!(
            ser(r#"<a x="1" y="2"></a>"#, "", None),
            ser(r#"<a x='1" y="2'></a>"#, "", None)
        );
    }
}

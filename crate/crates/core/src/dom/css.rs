//! Stylesheet parser. Rules keep source order; malformed rules are dropped
//! and counted without aborting the sheet. At-rules are skipped.

use serde::Serialize;

use super::html::Diagnostic;
use super::selector::{parse_selector_list, Selector};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Declaration {
    pub property: String,
    pub value: String,
    pub important: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rule {
    pub selectors: Vec<Selector>,
    pub declarations: Vec<Declaration>,
    /// Position of the rule within its sheet.
    pub source_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Stylesheet {
    pub rules: Vec<Rule>,
    /// Rules skipped as malformed.
    pub dropped: usize,
}

#[derive(Debug, Clone, Default)]
pub struct CssParse {
    pub sheet: Stylesheet,
    pub diagnostics: Vec<Diagnostic>,
}

/// Replaces comments with a space so offsets of the remaining text hold.
fn strip_comments(src: &str, diags: &mut Vec<Diagnostic>) -> String {
    let mut out = String::with_capacity(src.len());
    let mut rest = src;
    let mut base = 0;
    while let Some(start) = rest.find("/*") {
        out.push_str(&rest[..start]);
        match rest[start + 2..].find("*/") {
            Some(rel) => {
                let end = start + 2 + rel + 2;
                out.extend(std::iter::repeat_n(' ', rest[start..end].len()));
                base += end;
                rest = &rest[end..];
            }
            None => {
                diags.push(Diagnostic {
                    offset: base + start,
                    message: "unterminated comment".into(),
                });
                return out;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Index of the byte that closes the block opened just before `from`,
/// skipping quoted strings. `None` at end of input.
fn find_block_end(bytes: &[u8], from: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut quote = None;
    let mut i = from;
    while i < bytes.len() {
        let b = bytes[i];
        match quote {
            Some(q) => {
                if b == b'\\' {
                    i += 1;
                } else if b == q {
                    quote = None;
                }
            }
            None => match b {
                b'"' | b'\'' => quote = Some(b),
                b'{' => depth += 1,
                b'}' if depth == 0 => return Some(i),
                b'}' => depth -= 1,
                _ => {}
            },
        }
        i += 1;
    }
    None
}

pub fn parse_css(src: &str) -> CssParse {
    let mut diagnostics = Vec::new();
    let text = strip_comments(src, &mut diagnostics);
    let bytes = text.as_bytes();
    let mut sheet = Stylesheet::default();
    let mut pos = 0;
    let diag = |diags: &mut Vec<Diagnostic>, offset: usize, message: String| {
        diags.push(Diagnostic { offset, message });
    };
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos >= bytes.len() {
            break;
        }
        match bytes[pos] {
            b'}' => {
                diag(&mut diagnostics, pos, "unexpected '}'".into());
                pos += 1;
            }
            b'@' => {
                let start = pos;
                let stop = text[pos..].find([';', '{']).map(|r| pos + r);
                pos = match stop {
                    Some(i) if bytes[i] == b'{' => match find_block_end(bytes, i + 1) {
                        Some(end) => end + 1,
                        None => bytes.len(),
                    },
                    Some(i) => i + 1,
                    None => bytes.len(),
                };
                diag(&mut diagnostics, start, "at-rule skipped".into());
            }
            _ => {
                let start = pos;
                let Some(open) = text[pos..].find(['{', '}', ';']).map(|r| pos + r) else {
                    diag(&mut diagnostics, start, "rule without a block at end of input".into());
                    sheet.dropped += 1;
                    break;
                };
                if bytes[open] != b'{' {
                    diag(&mut diagnostics, start, "selector without a block skipped".into());
                    sheet.dropped += 1;
                    pos = open + 1;
                    continue;
                }
                let prelude = &text[start..open];
                let (body_end, next) = match find_block_end(bytes, open + 1) {
                    Some(end) => (end, end + 1),
                    None => {
                        diag(&mut diagnostics, open, "unterminated block closed at end of input".into());
                        (bytes.len(), bytes.len())
                    }
                };
                pos = next;
                let body = &text[open + 1..body_end];
                if body.contains('{') {
                    diag(&mut diagnostics, open, "nested block in rule; rule dropped".into());
                    sheet.dropped += 1;
                    continue;
                }
                let selectors = match parse_selector_list(prelude.trim()) {
                    Ok(s) => s,
                    Err(e) => {
                        diag(&mut diagnostics, start, format!("rule dropped: {e}"));
                        sheet.dropped += 1;
                        continue;
                    }
                };
                let declarations = parse_declarations_at(body, open + 1, &mut diagnostics);
                let source_index = sheet.rules.len();
                sheet.rules.push(Rule {
                    selectors,
                    declarations,
                    source_index,
                });
            }
        }
    }
    CssParse { sheet, diagnostics }
}

/// Parses a declaration block body (also used for `style` attributes).
pub fn parse_declarations(body: &str) -> (Vec<Declaration>, Vec<Diagnostic>) {
    let mut diags = Vec::new();
    let decls = parse_declarations_at(body, 0, &mut diags);
    (decls, diags)
}

fn split_declarations(body: &str) -> Vec<(usize, &str)> {
    let bytes = body.as_bytes();
    let mut out = Vec::new();
    let mut quote = None;
    let mut depth = 0usize;
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match quote {
            Some(q) => {
                if b == b'\\' {
                    i += 1;
                } else if b == q {
                    quote = None;
                }
            }
            None => match b {
                b'"' | b'\'' => quote = Some(b),
                b'(' => depth += 1,
                b')' => depth = depth.saturating_sub(1),
                b';' if depth == 0 => {
                    out.push((start, &body[start..i]));
                    start = i + 1;
                }
                _ => {}
            },
        }
        i += 1;
    }
    out.push((start, &body[start..]));
    out
}

fn is_property_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn parse_declarations_at(body: &str, base: usize, diags: &mut Vec<Diagnostic>) -> Vec<Declaration> {
    let mut out = Vec::new();
    for (offset, raw) in split_declarations(body) {
        if raw.trim().is_empty() {
            continue;
        }
        let at = base + offset;
        let Some((name, value)) = raw.split_once(':') else {
            diags.push(Diagnostic {
                offset: at,
                message: format!("declaration without ':' skipped: {:?}", raw.trim()),
            });
            continue;
        };
        let property = name.trim().to_ascii_lowercase();
        if !is_property_name(&property) {
            diags.push(Diagnostic {
                offset: at,
                message: format!("invalid property name {:?} skipped", name.trim()),
            });
            continue;
        }
        let (value, important) = split_important(value.trim());
        if value.is_empty() {
            diags.push(Diagnostic {
                offset: at,
                message: format!("empty value for {property} skipped"),
            });
            continue;
        }
        out.push(Declaration {
            property,
            value: value.to_owned(),
            important,
        });
    }
    out
}

fn split_important(value: &str) -> (&str, bool) {
    if let Some(bang) = value.rfind('!') {
        let flag = value[bang + 1..].trim();
        if flag.eq_ignore_ascii_case("important") {
            return (value[..bang].trim_end(), true);
        }
    }
    (value, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::selector::PseudoClass;

    #[test]
    fn title_rule() {
        let p = parse_css("#pageTitle { font-size: 25px; font-weight: bold; }");
        assert!(p.diagnostics.is_empty());
        assert_eq!(p.sheet.rules.len(), 1);
        let decls = &p.sheet.rules[0].declarations;
        assert_eq!(decls.len(), 2);
        assert_eq!(decls[0].property, "font-size");
        assert_eq!(decls[0].value, "25px");
    }

    #[test]
    fn hover_rule() {
        let p = parse_css(".deleteBtn:hover { background-color: darkred; }");
        let sel = &p.sheet.rules[0].selectors[0];
        assert!(sel.compounds[0].pseudo.contains(&PseudoClass::Hover));
    }

    #[test]
    fn lone_brace() {
        let p = parse_css("}");
        assert!(p.sheet.rules.is_empty());
        assert_eq!(p.diagnostics.len(), 1);
    }

    #[test]
    fn bad_rules_are_dropped_not_fatal() {
        let p = parse_css(
            "a + b { color: red } @media (x) { p { color: blue } } /* c */ p { color: green !important; width }",
        );
        assert_eq!(p.sheet.rules.len(), 1);
        assert_eq!(p.sheet.dropped, 1);
        let d = &p.sheet.rules[0].declarations;
        assert_eq!(d.len(), 1);
        assert!(d[0].important);
        assert_eq!(d[0].value, "green");
        assert_eq!(p.diagnostics.len(), 3);
    }

    #[test]
    fn unknown_properties_kept() {
        let p = parse_css("p { -webkit-thing: 1; content: \"a;b\" }");
        let d = &p.sheet.rules[0].declarations;
        assert_eq!(d.len(), 2);
        assert_eq!(d[1].value, "\"a;b\"");
    }

    #[test]
    fn unterminated_block_keeps_declarations() {
        let p = parse_css("p { color: red");
        assert_eq!(p.sheet.rules.len(), 1);
        assert_eq!(p.diagnostics.len(), 1);
    }

    #[test]
    fn inline_declarations() {
        let (d, diags) = parse_declarations("width:350px; ; color : RED");
        assert_eq!(d.len(), 2);
        assert!(diags.is_empty());
    }
}

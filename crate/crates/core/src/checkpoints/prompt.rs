use crate::document_store::FileMap;

/// Reply contract appended to the template.
pub const OUTPUT_CONTRACT: &str =
    "reply only a single object with fields interaction and assertions in the checkpoint assertion schema";

const SCHEMA_HINT: &str = r#"Schema: {"interaction": [{"action": "click" | "hover", "selector": string} | {"action": "type_text", "selector": string, "text": string} | {"action": "wait", "ms": integer}], "assertions": [{"kind": "exists", "selector": string, "min_count"?: integer} | {"kind": "count", "selector": string, "comparator": "=" | ">=" | "<=", "n": integer} | {"kind": "attribute", "selector": string, "name": string, "expected": string} | {"kind": "text", "selector": string, "expected": string, "mode"?: "exact" | "contains"} | {"kind": "style", "selector": string, "property": string, "expected": string} | {"kind": "rule_declared", "selector": string, "property": string, "expected": string} | {"kind": "ancestor", "selector": string, "ancestor": string}]}"#;

/// Reference files as `--- path ---` blocks in path order.
fn render_reference(files: &FileMap) -> String {
    let mut out = String::new();
    for (path, text) in files {
        out.push_str("--- ");
        out.push_str(path);
        out.push_str(" ---\n");
        out.push_str(text);
        if !text.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}

pub fn build_suggestion_prompt(task_description: &str, reference: &FileMap) -> String {
    format!(
        "Generate Puppeteer code to achieve the required interaction and evaluation for: [{task_description}]. \
         The reference code answer is: [{reference}]. \
         Evaluation should be done by getting the element, get the requirement from the element, and return if the requirement is met. \
         If no interaction is needed, just evaluate. \
         Do not reply with any natural language text, only the JavaScript code. \
         Do not include any comment. \
         A reply example is as follows: const selector = ''; await page.click(selector);\n\
         Instead of JavaScript code, {OUTPUT_CONTRACT}.\n{SCHEMA_HINT}\n",
        reference = render_reference(reference),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> FileMap {
        FileMap::from([
            ("index.html".to_owned(), "<h1 id=\"pageTitle\">Todo List</h1>".to_owned()),
            ("styles.css".to_owned(), "#pageTitle { font-size: 25px; }\n".to_owned()),
        ])
    }

    #[test]
    fn slots_filled() {
        let p = build_suggestion_prompt("Set the font size to 25px", &reference());
        assert!(p.starts_with("Generate Puppeteer code to achieve the required interaction and evaluation for: [Set the font size to 25px]."));
        assert!(p.contains("--- index.html ---\n<h1 id=\"pageTitle\">Todo List</h1>\n--- styles.css ---\n"));
        assert!(p.contains(OUTPUT_CONTRACT));
    }

    #[test]
    fn empty_description_and_purity() {
        let a = build_suggestion_prompt("", &reference());
        assert!(a.contains("evaluation for: []."));
        assert_eq!(a, build_suggestion_prompt("", &reference()));
    }
}

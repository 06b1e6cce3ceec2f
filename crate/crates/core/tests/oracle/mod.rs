//! Independent reference implementations used by the property tests and the
//! acceptance run. Deliberately naive.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use spark_core::dom::css::{parse_css, Stylesheet};
use spark_core::dom::html::{Document, NodeId, NodeKind};
use spark_core::dom::selector::{Combinator, Compound, PseudoClass, Selector};

// ---- edits ----

/// Splice on a vector of scalar values.
pub fn naive_splice(text: &str, offset: usize, delete: usize, insert: &str) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    let tail = chars.split_off(offset);
    chars.extend(insert.chars());
    chars.extend(tail.into_iter().skip(delete));
    chars.into_iter().collect()
}

const ALPHABET: &[char] = &['a', 'b', 'z', ' ', '\n', '<', '>', 'é', '日', '🦀', '\u{301}'];

pub fn random_text<R: Rng>(rng: &mut R, max: usize) -> String {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

/// `(offset, delete_count, insert_text)` valid against the running text.
pub type Edit = (usize, usize, String);

/// An initial text plus up to `max_len` edits with uniformly valid offsets.
pub fn random_edits<R: Rng>(rng: &mut R, max_len: usize) -> (String, Vec<Edit>) {
    let initial = random_text(rng, 20);
    let mut len = initial.chars().count();
    let n = rng.gen_range(0..=max_len);
    let mut edits = Vec::with_capacity(n);
    for _ in 0..n {
        let offset = rng.gen_range(0..=len);
        let delete = rng.gen_range(0..=(len - offset).min(5));
        let insert = random_text(rng, 4);
        len = len - delete + insert.chars().count();
        edits.push((offset, delete, insert));
    }
    (initial, edits)
}

// ---- selectors ----

fn oracle_compound(doc: &Document, node: NodeId, c: &Compound) -> bool {
    let Some(el) = doc.element(node) else {
        return false;
    };
    if c.pseudo.contains(&PseudoClass::Hover) {
        return false;
    }
    let classes: BTreeSet<&str> = el.attrs.get("class").map_or_else(BTreeSet::new, |v| v.split_whitespace().collect());
    c.tag.as_deref().is_none_or(|t| t == el.tag)
        && c.ids.iter().all(|id| el.attrs.get("id").map(String::as_str) == Some(id))
        && c.classes.iter().all(|k| classes.contains(k.as_str()))
}

/// Matches by trying every placement of the compounds along the root path.
pub fn exhaustive_matches(sel: &Selector, doc: &Document, node: NodeId) -> bool {
    let mut path = vec![node];
    let mut cur = node;
    while let Some(p) = doc.node(cur).parent {
        path.push(p);
        cur = p;
    }
    path.reverse();
    let n = sel.compounds.len();
    if n == 0 {
        return false;
    }
    let last = path.len() - 1;
    // ok[i][j]: compounds 0..=i placed with compound i at path[j].
    let mut ok = vec![vec![false; path.len()]; n];
    for j in 0..path.len() {
        ok[0][j] = oracle_compound(doc, path[j], &sel.compounds[0]);
    }
    for i in 1..n {
        for j in 0..path.len() {
            if !oracle_compound(doc, path[j], &sel.compounds[i]) {
                continue;
            }
            ok[i][j] = match sel.combinators[i - 1] {
                Combinator::Child => j > 0 && ok[i - 1][j - 1],
                Combinator::Descendant => (0..j).any(|k| ok[i - 1][k]),
            };
        }
    }
    ok[n - 1][last]
}

pub fn exhaustive_query(sel: &Selector, doc: &Document) -> Vec<NodeId> {
    (0..doc.len()).filter(|&n| exhaustive_matches(sel, doc, n)).collect()
}

// ---- cascade ----

pub const PROPERTIES: &[(&str, &[&str])] = &[
    ("color", &["#112233", "#aabbcc", "#ff0000"]),
    ("background-color", &["#00ff00", "#aabbcc"]),
    ("font-size", &["10px", "12px", "25px"]),
    ("width", &["100px", "350px"]),
    ("display", &["block", "flex", "none"]),
    ("text-align", &["left", "center"]),
    ("font-weight", &["400", "700"]),
];

pub const INHERITED: &[&str] = &["font-size", "font-weight", "color", "text-align"];

const TAGS: &[&str] = &["div", "p", "span", "ul", "li"];
const CLASSES: &[&str] = &["a", "b", "c", "d"];

#[derive(Debug, Clone)]
pub struct GenDecl {
    pub property: &'static str,
    pub value: &'static str,
    pub important: bool,
}

#[derive(Debug, Clone)]
pub struct GenSelector {
    pub text: String,
    pub specificity: (u32, u32, u32),
}

#[derive(Debug, Clone)]
pub struct GenRule {
    pub selectors: Vec<GenSelector>,
    pub decls: Vec<GenDecl>,
}

#[derive(Debug)]
pub struct CascadeCase {
    pub doc: Document,
    pub inline: BTreeMap<NodeId, Vec<GenDecl>>,
    /// Rules per sheet, as generated.
    pub rules: Vec<Vec<GenRule>>,
    pub sheets: Vec<Stylesheet>,
}

fn gen_decls<R: Rng>(rng: &mut R, max: usize) -> Vec<GenDecl> {
    (0..rng.gen_range(1..=max))
        .map(|_| {
            let (property, values) = *PROPERTIES.choose(rng).unwrap();
            GenDecl {
                property,
                value: values.choose(rng).unwrap(),
                important: rng.gen_bool(0.15),
            }
        })
        .collect()
}

fn decl_text(decls: &[GenDecl]) -> String {
    decls
        .iter()
        .map(|d| format!("{}: {}{};", d.property, d.value, if d.important { " !important" } else { "" }))
        .collect::<Vec<_>>()
        .join(" ")
}

fn gen_selector<R: Rng>(rng: &mut R, ids: usize) -> GenSelector {
    let parts = rng.gen_range(1..=3);
    let mut text = String::new();
    let mut spec = (0, 0, 0);
    for i in 0..parts {
        if i > 0 {
            text.push_str(if rng.gen_bool(0.5) { " > " } else { " " });
        }
        let mut compound = String::new();
        if rng.gen_bool(0.5) {
            compound.push_str(TAGS.choose(rng).unwrap());
            spec.2 += 1;
        }
        if rng.gen_bool(0.2) {
            compound.push_str(&format!("#i{}", rng.gen_range(0..ids.max(1))));
            spec.0 += 1;
        }
        let k = rng.gen_range(0..=2);
        for class in CLASSES.choose_multiple(rng, k) {
            compound.push('.');
            compound.push_str(class);
            spec.1 += 1;
        }
        if rng.gen_bool(0.05) {
            compound.push_str(":hover");
            spec.1 += 1;
        }
        if compound.is_empty() {
            compound.push_str(TAGS.choose(rng).unwrap());
            spec.2 += 1;
        }
        text.push_str(&compound);
    }
    GenSelector { text, specificity: spec }
}

/// A random tree of at most `max_nodes` nodes and sheets with at most
/// `max_rules` rules in total.
pub fn gen_cascade_case<R: Rng>(rng: &mut R, max_nodes: usize, max_rules: usize) -> CascadeCase {
    let mut doc = Document::new();
    let mut inline = BTreeMap::new();
    let n = rng.gen_range(1..=max_nodes);
    let mut elements: Vec<NodeId> = Vec::new();
    for k in 0..n {
        let parent = if elements.is_empty() || rng.gen_bool(0.1) {
            None
        } else {
            Some(*elements.choose(rng).unwrap())
        };
        if !elements.is_empty() && parent.is_some() && rng.gen_bool(0.1) {
            doc.push(parent, NodeKind::Text("t".into()));
            continue;
        }
        let id = format!("i{k}");
        let k = rng.gen_range(0..=2);
        let class = CLASSES
            .choose_multiple(rng, k)
            .copied()
            .collect::<Vec<_>>()
            .join(" ");
        let decls = rng.gen_bool(0.3).then(|| gen_decls(rng, 2));
        let style = decls.as_deref().map(decl_text).unwrap_or_default();
        let mut attrs: Vec<(&str, &str)> = Vec::new();
        if rng.gen_bool(0.7) {
            attrs.push(("id", &id));
        }
        if !class.is_empty() {
            attrs.push(("class", &class));
        }
        if decls.is_some() {
            attrs.push(("style", &style));
        }
        let node = doc.push_element(parent, TAGS.choose(rng).unwrap(), &attrs);
        if let Some(d) = decls {
            inline.insert(node, d);
        }
        elements.push(node);
    }
    let total = rng.gen_range(0..=max_rules);
    let split = rng.gen_range(0..=total);
    let mut rules = Vec::new();
    let mut sheets = Vec::new();
    for count in [split, total - split] {
        let sheet_rules: Vec<GenRule> = (0..count)
            .map(|_| GenRule {
                selectors: (0..rng.gen_range(1..=2)).map(|_| gen_selector(rng, n)).collect(),
                decls: gen_decls(rng, 3),
            })
            .collect();
        let css: String = sheet_rules
            .iter()
            .map(|r| {
                let sels: Vec<&str> = r.selectors.iter().map(|s| s.text.as_str()).collect();
                format!("{} {{ {} }}\n", sels.join(", "), decl_text(&r.decls))
            })
            .collect();
        let parsed = parse_css(&css);
        assert_eq!(parsed.sheet.rules.len(), count, "generated css must parse fully:\n{css}");
        sheets.push(parsed.sheet);
        rules.push(sheet_rules);
    }
    CascadeCase { doc, inline, rules, sheets }
}

#[derive(Debug, Clone, Copy)]
struct Cand<'a> {
    important: bool,
    inline: bool,
    spec: (u32, u32, u32),
    order: (usize, usize, usize),
    value: &'a str,
}

/// Whether `a` wins over `b`.
fn beats(a: &Cand, b: &Cand) -> bool {
    if a.important != b.important {
        return a.important;
    }
    if a.inline != b.inline {
        return a.inline;
    }
    if a.spec != b.spec {
        return a.spec > b.spec;
    }
    a.order > b.order
}

/// Expected computed values of `node`, by enumerating every declaration.
pub fn oracle_style(case: &CascadeCase, node: NodeId) -> BTreeMap<String, String> {
    if case.doc.element(node).is_none() {
        return BTreeMap::new();
    }
    let mut cands: Vec<(&str, Cand)> = Vec::new();
    for (si, rules) in case.rules.iter().enumerate() {
        for (ri, rule) in rules.iter().enumerate() {
            let mut best: Option<(u32, u32, u32)> = None;
            for (gen, parsed) in rule.selectors.iter().zip(&case.sheets[si].rules[ri].selectors) {
                if exhaustive_matches(parsed, &case.doc, node) {
                    best = Some(best.map_or(gen.specificity, |b| b.max(gen.specificity)));
                }
            }
            let Some(spec) = best else { continue };
            for (di, d) in rule.decls.iter().enumerate() {
                cands.push((
                    d.property,
                    Cand {
                        important: d.important,
                        inline: false,
                        spec,
                        order: (si, ri, di),
                        value: d.value,
                    },
                ));
            }
        }
    }
    for (di, d) in case.inline.get(&node).into_iter().flatten().enumerate() {
        cands.push((
            d.property,
            Cand {
                important: d.important,
                inline: true,
                spec: (0, 0, 0),
                order: (0, 0, di),
                value: d.value,
            },
        ));
    }
    let mut out: BTreeMap<String, Cand> = BTreeMap::new();
    for (prop, c) in cands {
        match out.get(prop) {
            Some(cur) if !beats(&c, cur) => {}
            _ => {
                out.insert(prop.to_owned(), c);
            }
        }
    }
    let mut style: BTreeMap<String, String> = out.into_iter().map(|(k, c)| (k, c.value.to_owned())).collect();
    if let Some(parent) = case.doc.node(node).parent {
        let inherited = oracle_style(case, parent);
        for p in INHERITED {
            if !style.contains_key(*p) {
                if let Some(v) = inherited.get(*p) {
                    style.insert((*p).to_owned(), v.clone());
                }
            }
        }
    }
    style
}

/// Every generated selector string of the case.
pub fn case_selectors(case: &CascadeCase) -> Vec<&str> {
    case.rules
        .iter()
        .flatten()
        .flat_map(|r| r.selectors.iter().map(|s| s.text.as_str()))
        .collect()
}

// ---- partitions ----

pub type Partition = BTreeSet<BTreeSet<String>>;

/// Groups ids by pairwise equality of their keys, without hashing.
pub fn pairwise_partition(items: &[(String, String)]) -> Partition {
    let mut group: Vec<usize> = (0..items.len()).collect();
    for i in 0..items.len() {
        for j in 0..i {
            if items[i].1 == items[j].1 {
                group[i] = group[j];
                break;
            }
        }
    }
    let mut out: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (i, g) in group.iter().enumerate() {
        out.entry(*g).or_default().insert(items[i].0.clone());
    }
    out.into_values().collect()
}

/// Whether `groups` are disjoint, non-empty, and cover exactly `roster`.
pub fn is_partition_of(groups: &[Vec<String>], roster: &BTreeSet<String>) -> bool {
    let mut seen = BTreeSet::new();
    for g in groups {
        if g.is_empty() {
            return false;
        }
        for id in g {
            if !seen.insert(id.clone()) {
                return false;
            }
        }
    }
    &seen == roster && groups.iter().map(Vec::len).sum::<usize>() == roster.len()
}

// ---- live delivery ----

/// Batches of events as a live server might receive them: each student's
/// stream arrives in order but delayed by up to `max_delay_ms`, so events
/// of slow students land after ticks they precede. Each batch comes with
/// the wall clock at delivery.
pub fn live_schedule<R: Rng>(
    events: &[spark_core::event_log::EditEvent],
    rng: &mut R,
    max_delay_ms: i64,
) -> Vec<(i64, Vec<spark_core::event_log::EditEvent>)> {
    let mut delays: BTreeMap<&str, i64> = BTreeMap::new();
    let mut arrivals: Vec<(i64, usize)> = events
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let d = *delays
                .entry(e.student_id.as_str())
                .or_insert_with(|| if rng.gen_bool(0.5) { 0 } else { rng.gen_range(0..=max_delay_ms) });
            (e.timestamp_ms + d, i)
        })
        .collect();
    // stable: a student's events keep their order
    arrivals.sort_by_key(|&(at, i)| (at, i));
    let mut out: Vec<(i64, Vec<_>)> = Vec::new();
    for chunk in arrivals.chunks(rng.gen_range(1..=40)) {
        let clock = chunk.last().unwrap().0;
        out.push((clock, chunk.iter().map(|&(_, i)| events[i].clone()).collect()));
    }
    out
}

//! HTML/CSS evaluation substrate: parsing, selector matching, cascade,
//! value normalization and canonical serialization.

pub mod cascade;
pub mod css;
pub mod html;
pub mod selector;
pub mod serialize;
pub mod values;

pub use cascade::{computed_style, Provenance, StyleMap, StyleValue};
pub use css::{parse_css, Declaration, Rule, Stylesheet};
pub use html::{parse_html, Diagnostic, Document, NodeId};
pub use selector::{query, Selector, SelectorError, Specificity};
pub use serialize::{serialize_normalized, StyleContext};
pub use values::normalize_value;

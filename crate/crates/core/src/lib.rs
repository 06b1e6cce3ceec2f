//! Classroom monitoring engine for web-programming exercises.

pub mod document_store;
pub mod dom;
pub mod evaluator;
pub mod event_log;
pub mod inspector;
pub mod checkpoints;
pub mod classroom;
pub mod par;
pub mod fixtures;
pub mod simulate;

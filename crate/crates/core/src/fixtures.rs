//! The bundled exercises (To-Do List and Image Carousel) and their
//! single-mutation variants.

use std::io;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::document_store::FileMap;

pub const EXERCISES: [&str; 2] = ["todo", "carousel"];

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Directory of a bundled exercise (`todo` or `carousel`).
pub fn exercise_dir(name: &str) -> PathBuf {
    fixtures_dir().join(name)
}

/// A one-edit change to a reference file that should break exactly one task.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mutation {
    pub name: String,
    pub file: String,
    pub find: String,
    pub replace: String,
    /// `checkpoint_id/task_id` of the task expected to fail.
    pub fails: String,
}

impl Mutation {
    /// Applies the edit; `find` must occur exactly once.
    pub fn apply(&self, reference: &FileMap) -> Result<FileMap, String> {
        let text = reference
            .get(&self.file)
            .ok_or_else(|| format!("{}: no file {}", self.name, self.file))?;
        match text.matches(&self.find).count() {
            1 => {}
            n => return Err(format!("{}: pattern occurs {n} times in {}", self.name, self.file)),
        }
        let mut files = reference.clone();
        files.insert(self.file.clone(), text.replacen(&self.find, &self.replace, 1));
        Ok(files)
    }
}

pub fn load_mutations(exercise_dir: &Path) -> io::Result<Vec<Mutation>> {
    let text = std::fs::read_to_string(exercise_dir.join("mutations.json"))?;
    serde_json::from_str(&text).map_err(io::Error::other)
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ClassId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: ClassId,
    pub name: String,
}

/// The N food classes plus the background class, with contiguous ids from 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCatalog {
    classes: Vec<ClassEntry>,
    background_id: ClassId,
}

impl ClassCatalog {
    pub fn new(classes: Vec<ClassEntry>, background_id: ClassId) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::InvalidCatalog("no classes".into()));
        }
        let mut sorted = classes;
        sorted.sort_by_key(|c| c.id);
        for (expected, entry) in sorted.iter().enumerate() {
            if entry.id as usize != expected {
                return Err(Error::InvalidCatalog(format!(
                    "ids must be unique and contiguous from 0; found {} where {expected} was expected",
                    entry.id
                )));
            }
        }
        if background_id as usize >= sorted.len() {
            return Err(Error::InvalidCatalog(format!(
                "background id {background_id} is not a catalog member"
            )));
        }
        Ok(Self {
            classes: sorted,
            background_id,
        })
    }

    /// Parse `category.txt`: one `id<TAB>name` pair per line.
    ///
    /// The background is the class named "background" when there is one,
    /// otherwise id 0.
    pub fn parse(text: &str) -> Result<Self> {
        let mut classes = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let (id, name) = line
                .split_once('\t')
                .or_else(|| line.split_once(char::is_whitespace))
                .ok_or_else(|| {
                    Error::InvalidCatalog(format!("line {}: expected `id<TAB>name`", lineno + 1))
                })?;
            let id: ClassId = id.trim().parse().map_err(|_| {
                Error::InvalidCatalog(format!("line {}: bad class id `{}`", lineno + 1, id.trim()))
            })?;
            let name = name.trim();
            if name.is_empty() {
                return Err(Error::InvalidCatalog(format!(
                    "line {}: empty class name",
                    lineno + 1
                )));
            }
            classes.push(ClassEntry {
                id,
                name: name.to_string(),
            });
        }
        let background_id = classes
            .iter()
            .find(|c| c.name.eq_ignore_ascii_case("background"))
            .map_or(0, |c| c.id);
        Self::new(classes, background_id)
    }

    pub fn to_text(&self) -> String {
        self.classes
            .iter()
            .map(|c| format!("{}\t{}\n", c.id, c.name))
            .collect()
    }

    /// Total number of classes including background (N + 1).
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn background_id(&self) -> ClassId {
        self.background_id
    }

    pub fn classes(&self) -> &[ClassEntry] {
        &self.classes
    }

    pub fn contains(&self, id: u32) -> bool {
        (id as usize) < self.classes.len()
    }

    pub fn name(&self, id: ClassId) -> Option<&str> {
        self.classes.get(id as usize).map(|c| c.name.as_str())
    }

    /// Food classes only.
    pub fn foreground_ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.classes
            .iter()
            .map(|c| c.id)
            .filter(move |&id| id != self.background_id)
    }

    pub fn fingerprint(&self) -> String {
        crate::fingerprint::sha256_hex(self.to_text().as_bytes())
    }
}

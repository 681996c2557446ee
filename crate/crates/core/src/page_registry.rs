//! Stable sequential page identifiers for canonical page paths.
//!
//! Every distinct page path gets a dense id (`p1`, `p2`, `p3`, ...) in
//! first-seen order, with bidirectional lookup. The registry serializes to a
//! small TSV section that round-trips byte-identically.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Header line of a serialized registry section.
pub const REGISTRY_HEADER: &str = "#page_registry v1";

/// Identifier of a registered page, rendered as `p<n>` with `n >= 1`.
///
/// Bare integers (`"64"`) are accepted on input; the `p`-prefixed form is
/// canonical on output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PageId(u32);

impl PageId {
    pub fn new(n: u32) -> Option<PageId> {
        if n == 0 {
            None
        } else {
            Some(PageId(n))
        }
    }

    pub fn value(self) -> u32 {
        self.0
    }

    /// Index into a dense, insertion-ordered path table.
    fn index(self) -> usize {
        (self.0 - 1) as usize
    }
}

impl fmt::Display for PageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl FromStr for PageId {
    type Err = RegistryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.strip_prefix('p').unwrap_or(s);
        digits
            .parse::<u32>()
            .ok()
            .and_then(PageId::new)
            .ok_or_else(|| RegistryError::BadPageId(s.to_string()))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("\"-\" denotes an absent value and has no page id")]
    AbsentPath,
    #[error("malformed page id {0:?}")]
    BadPageId(String),
    #[error("registry line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("registry ids are not dense: missing p{missing} among {len} entries")]
    NotDense { missing: u32, len: usize },
    #[error("conflicting registry entries for {id}: {existing:?} vs {incoming:?}")]
    Conflict {
        id: PageId,
        existing: String,
        incoming: String,
    },
}

/// Bijective map between canonical page paths and dense [`PageId`]s.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PageRegistry {
    by_path: HashMap<String, PageId>,
    paths: Vec<String>,
}

impl PageRegistry {
    pub fn new() -> PageRegistry {
        PageRegistry::default()
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Returns the id for `path`, assigning the next sequential id if the
    /// path is new. `"-"` (absent value) is rejected.
    pub fn assign(&mut self, path: &str) -> Result<PageId, RegistryError> {
        if path == "-" {
            return Err(RegistryError::AbsentPath);
        }
        if let Some(&id) = self.by_path.get(path) {
            return Ok(id);
        }
        let id = PageId(self.paths.len() as u32 + 1);
        self.paths.push(path.to_string());
        self.by_path.insert(path.to_string(), id);
        Ok(id)
    }

    pub fn lookup(&self, path: &str) -> Option<PageId> {
        self.by_path.get(path).copied()
    }

    pub fn reverse(&self, id: PageId) -> Option<&str> {
        self.paths.get(id.index()).map(String::as_str)
    }

    pub fn contains(&self, id: PageId) -> bool {
        id.index() < self.paths.len()
    }

    /// Pages in id order, starting at `p1`.
    pub fn iter(&self) -> impl Iterator<Item = (PageId, &str)> {
        self.paths
            .iter()
            .enumerate()
            .map(|(i, p)| (PageId(i as u32 + 1), p.as_str()))
    }

    /// Rebuilds a registry from `(id, path)` pairs, e.g. the id columns of a
    /// sessionized TSV. Repeated pairs must agree; the final id set must be
    /// dense from `p1`.
    pub fn from_pairs<'a>(
        pairs: impl IntoIterator<Item = (PageId, &'a str)>,
    ) -> Result<PageRegistry, RegistryError> {
        let mut entries: HashMap<PageId, String> = HashMap::new();
        for (id, path) in pairs {
            if path == "-" {
                return Err(RegistryError::AbsentPath);
            }
            if let Some(existing) = entries.get(&id) {
                if existing != path {
                    return Err(RegistryError::Conflict {
                        id,
                        existing: existing.clone(),
                        incoming: path.to_string(),
                    });
                }
            } else {
                entries.insert(id, path.to_string());
            }
        }
        let len = entries.len();
        let mut paths = vec![String::new(); len];
        for (id, path) in &entries {
            if id.index() >= len {
                return Err(RegistryError::NotDense {
                    missing: (1..=len as u32)
                        .find(|n| !entries.contains_key(&PageId(*n)))
                        .unwrap_or(len as u32 + 1),
                    len,
                });
            }
            paths[id.index()] = path.clone();
        }
        let by_path = paths
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), PageId(i as u32 + 1)))
            .collect();
        Ok(PageRegistry { by_path, paths })
    }

    /// Serializes as a TSV section: header line, then `page_id<TAB>path`
    /// rows in id order. LF endings, byte-stable for a given registry.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str(REGISTRY_HEADER);
        out.push('\n');
        for (id, path) in self.iter() {
            out.push_str(&format!("{id}\t{path}\n"));
        }
        out
    }

    /// Parses the output of [`PageRegistry::to_tsv`].
    pub fn from_tsv(text: &str) -> Result<PageRegistry, RegistryError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header == REGISTRY_HEADER => {}
            other => {
                return Err(RegistryError::Malformed {
                    line: 1,
                    msg: format!("expected {REGISTRY_HEADER:?}, found {:?}", other.map(|(_, l)| l)),
                })
            }
        }
        let mut pairs = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let (id, path) = line.split_once('\t').ok_or_else(|| RegistryError::Malformed {
                line: i + 1,
                msg: "expected page_id<TAB>path".to_string(),
            })?;
            pairs.push((id.parse::<PageId>()?, path));
        }
        PageRegistry::from_pairs(pairs)
    }
}

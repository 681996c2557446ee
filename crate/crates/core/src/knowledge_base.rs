//! The persisted offline artifact: page registry plus per-user pattern
//! clusters, queried by the online recommendation engine.
//!
//! A knowledge base is one UTF-8, LF-terminated file (`*.wkb`) with three
//! sections (`#meta`, `#page_registry v1`, `#patterns v1`) and a final
//! `#digest <hex>` line holding the SHA-256 of all preceding bytes.
//! Serialization is deterministic: storing an unchanged knowledge base is
//! byte-identical.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::Config;
use crate::page_registry::{PageId, PageRegistry, RegistryError, REGISTRY_HEADER};
use crate::pattern_miner::{
    clusters_from_tsv, clusters_to_tsv, mine_clusters, MinerError, NavigationPattern, PatternCluster,
    PATTERNS_HEADER,
};
use crate::preprocess::{registry_from_rows, sessions_to_tsv, SessionRow};

pub const META_HEADER: &str = "#meta";
pub const DIGEST_PREFIX: &str = "#digest ";

/// Hex-encoded SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Build provenance, stored in the `#meta` section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KbMeta {
    /// Derived from the newest input record (not wall clock), so rebuilding
    /// from the same input is byte-identical.
    pub built_at_epoch_s: i64,
    /// SHA-256 of the canonical sessionized TSV the base was mined from.
    pub source_digest: String,
    /// Pruning threshold all stored clusters were mined with.
    pub min_weight: u32,
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("knowledge base is not valid UTF-8")]
    NotUtf8,
    #[error("knowledge base is missing its {0} section")]
    MissingSection(&'static str),
    #[error("knowledge base has no #digest line")]
    MissingDigest,
    #[error("digest mismatch: file says {found}, content hashes to {expected}")]
    DigestMismatch { expected: String, found: String },
    #[error("meta section: {0}")]
    Meta(String),
    #[error("pattern for user {user_id} references {id}, which is not in the page registry")]
    DanglingPageId { user_id: u32, id: PageId },
    #[error("pattern for user {user_id} has weight {weight}, below the recorded min_weight {min_weight}")]
    MinWeightViolation { user_id: u32, weight: u32, min_weight: u32 },
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Miner(#[from] MinerError),
}

/// The offline knowledge base. Immutable after build; updates are full
/// rebuilds. A loaded base is read-only and safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    pub registry: PageRegistry,
    pub clusters: BTreeMap<u32, PatternCluster>,
    pub meta: KbMeta,
}

impl KnowledgeBase {
    /// Mines a knowledge base from sessionized rows: rebuilds the registry
    /// from the id columns, mines per-user clusters, and records provenance.
    pub fn from_rows(rows: &[SessionRow], config: &Config) -> Result<KnowledgeBase, KbError> {
        let registry = registry_from_rows(rows)?;
        let clusters = mine_clusters(rows, config)?;
        let meta = KbMeta {
            built_at_epoch_s: rows.iter().map(|r| r.timestamp).max().unwrap_or(0),
            source_digest: sha256_hex(sessions_to_tsv(rows).as_bytes()),
            min_weight: config.min_weight,
        };
        let kb = KnowledgeBase { registry, clusters, meta };
        kb.validate()?;
        Ok(kb)
    }

    /// Checks the structural invariants: every page id in every pattern
    /// resolves in the registry, and no stored pattern is below the recorded
    /// pruning threshold.
    pub fn validate(&self) -> Result<(), KbError> {
        for cluster in self.clusters.values() {
            for pattern in &cluster.patterns {
                for &id in &pattern.path {
                    if !self.registry.contains(id) {
                        return Err(KbError::DanglingPageId { user_id: cluster.user_id, id });
                    }
                }
                if pattern.weight < self.meta.min_weight {
                    return Err(KbError::MinWeightViolation {
                        user_id: cluster.user_id,
                        weight: pattern.weight,
                        min_weight: self.meta.min_weight,
                    });
                }
            }
        }
        Ok(())
    }

    /// The user's sorted pattern cluster; empty for an unknown user.
    pub fn patterns_for(&self, user_id: u32) -> &[NavigationPattern] {
        self.clusters.get(&user_id).map(|c| c.patterns.as_slice()).unwrap_or(&[])
    }

    /// All other users' patterns in (user id ascending, cluster order)
    /// sequence.
    pub fn patterns_excluding(&self, user_id: u32) -> impl Iterator<Item = (u32, &NavigationPattern)> {
        self.clusters
            .values()
            .filter(move |c| c.user_id != user_id)
            .flat_map(|c| c.patterns.iter().map(|p| (c.user_id, p)))
    }

    /// Serializes the knowledge base, refusing to write one that violates
    /// its invariants.
    pub fn to_bytes(&self) -> Result<Vec<u8>, KbError> {
        self.validate()?;
        let mut body = String::new();
        body.push_str(META_HEADER);
        body.push('\n');
        body.push_str(&format!("built_at_epoch_s\t{}\n", self.meta.built_at_epoch_s));
        body.push_str(&format!("source_digest\t{}\n", self.meta.source_digest));
        body.push_str(&format!("min_weight\t{}\n", self.meta.min_weight));
        body.push_str(&self.registry.to_tsv());
        body.push_str(&clusters_to_tsv(&self.clusters));
        let digest = sha256_hex(body.as_bytes());
        let mut bytes = body.into_bytes();
        bytes.extend_from_slice(format!("{DIGEST_PREFIX}{digest}\n").as_bytes());
        Ok(bytes)
    }

    pub fn store(&self, path: &Path) -> Result<(), KbError> {
        let bytes = self.to_bytes()?;
        let mut file = std::fs::File::create(path)
            .map_err(|e| KbError::Io { path: path.to_path_buf(), source: e })?;
        file.write_all(&bytes).map_err(|e| KbError::Io { path: path.to_path_buf(), source: e })
    }

    /// Parses and re-validates a serialized knowledge base: digest first,
    /// then section structure, then the structural invariants.
    pub fn from_bytes(bytes: &[u8]) -> Result<KnowledgeBase, KbError> {
        let text = std::str::from_utf8(bytes).map_err(|_| KbError::NotUtf8)?;

        let digest_pos = text.rfind(&format!("\n{DIGEST_PREFIX}")).ok_or(KbError::MissingDigest)?;
        let body = &text[..digest_pos + 1];
        let found = text[digest_pos + 1..]
            .trim_end()
            .strip_prefix(DIGEST_PREFIX)
            .ok_or(KbError::MissingDigest)?
            .to_string();
        let expected = sha256_hex(body.as_bytes());
        if found != expected {
            return Err(KbError::DigestMismatch { expected, found });
        }

        let registry_start = body.find(&format!("{REGISTRY_HEADER}\n")).ok_or(KbError::MissingSection(REGISTRY_HEADER))?;
        let patterns_start = body.find(&format!("{PATTERNS_HEADER}\n")).ok_or(KbError::MissingSection(PATTERNS_HEADER))?;
        if !body.starts_with(&format!("{META_HEADER}\n")) || registry_start > patterns_start {
            return Err(KbError::MissingSection(META_HEADER));
        }

        let meta = parse_meta(&body[..registry_start])?;
        let registry = PageRegistry::from_tsv(&body[registry_start..patterns_start])?;
        let clusters = clusters_from_tsv(&body[patterns_start..])?;

        let kb = KnowledgeBase { registry, clusters, meta };
        kb.validate()?;
        Ok(kb)
    }

    pub fn load(path: &Path) -> Result<KnowledgeBase, KbError> {
        let bytes =
            std::fs::read(path).map_err(|e| KbError::Io { path: path.to_path_buf(), source: e })?;
        KnowledgeBase::from_bytes(&bytes)
    }
}

fn parse_meta(section: &str) -> Result<KbMeta, KbError> {
    let mut built_at = None;
    let mut source_digest = None;
    let mut min_weight = None;
    for line in section.lines().skip(1) {
        if line.is_empty() {
            continue;
        }
        let (key, value) =
            line.split_once('\t').ok_or_else(|| KbError::Meta(format!("expected key<TAB>value, found {line:?}")))?;
        match key {
            "built_at_epoch_s" => {
                built_at = Some(
                    value.parse::<i64>().map_err(|_| KbError::Meta(format!("bad built_at_epoch_s {value:?}")))?,
                )
            }
            "source_digest" => source_digest = Some(value.to_string()),
            "min_weight" => {
                min_weight =
                    Some(value.parse::<u32>().map_err(|_| KbError::Meta(format!("bad min_weight {value:?}")))?)
            }
            other => return Err(KbError::Meta(format!("unknown key {other:?}"))),
        }
    }
    Ok(KbMeta {
        built_at_epoch_s: built_at.ok_or_else(|| KbError::Meta("missing built_at_epoch_s".into()))?,
        source_digest: source_digest.ok_or_else(|| KbError::Meta("missing source_digest".into()))?,
        min_weight: min_weight.ok_or_else(|| KbError::Meta("missing min_weight".into()))?,
    })
}

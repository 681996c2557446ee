//! navrec: a web usage mining toolkit.
//!
//! Converts raw web server access logs into per-user navigation-pattern
//! knowledge bases and serves per-user recommendation lists: "intuition"
//! pages from each user's own history plus unvisited pages drawn from
//! similar users, with a built-in accuracy evaluator.
//!
//! The pipeline runs in two tiers:
//!
//! * offline — [`log_ingest`] parses W3C extended (IIS) logs, [`preprocess`]
//!   cleanses and sessionizes them, [`page_registry`] assigns stable page
//!   ids, [`pattern_miner`] extracts weighted navigation patterns per user,
//!   and [`knowledge_base`] persists the result;
//! * online — [`recommender`] answers live session windows from the stored
//!   knowledge base, and [`evaluator`] replays held-out sessions to measure
//!   recommendation accuracy.

pub mod config;
pub mod evaluator;
pub mod knowledge_base;
pub mod log_ingest;
pub mod page_registry;
pub mod pattern_miner;
pub mod preprocess;
pub mod recommender;
pub mod synth;

pub use config::{Config, LswSpec};
pub use knowledge_base::KnowledgeBase;
pub use page_registry::{PageId, PageRegistry};
pub use pattern_miner::{NavigationPattern, PatternCluster, SessionGraph};
pub use preprocess::{Session, SessionRow};
pub use recommender::{LiveSessionWindow, RecommendationList};

//! Accuracy evaluation: the captured-list accuracy ratio and replay
//! evaluation of a knowledge base over a sessionized corpus, sweeping live
//! session window sizes.

use std::collections::BTreeSet;
use std::str::FromStr;

use crate::config::{Config, LswSpec};
use crate::knowledge_base::KnowledgeBase;
use crate::page_registry::PageId;
use crate::preprocess::{group_by_user, SessionRow};
use crate::recommender::{capture_lsw, recommend, RecommendError};

/// Which recommendation part feeds the captured list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartSelect {
    Combined,
    History,
    Unvisited,
}

impl FromStr for PartSelect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "combined" => Ok(PartSelect::Combined),
            "history" => Ok(PartSelect::History),
            "unvisited" => Ok(PartSelect::Unvisited),
            other => Err(format!("expected combined|history|unvisited, found {other:?}")),
        }
    }
}

/// Fraction of the captured list's distinct pages that appear in the
/// original page views. `None` when nothing was captured (no
/// recommendation); distinct-set semantics throughout.
pub fn accuracy(captured: &[PageId], original: &[PageId]) -> Option<f64> {
    let captured: BTreeSet<PageId> = captured.iter().copied().collect();
    if captured.is_empty() {
        return None;
    }
    let original: BTreeSet<PageId> = original.iter().copied().collect();
    let hits = captured.intersection(&original).count();
    Some(hits as f64 / captured.len() as f64)
}

/// Replay outcome for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserOutcome {
    pub user_id: u32,
    pub lsw_len: usize,
    /// Distinct pages in the captured recommendation list.
    pub captured: usize,
    /// Distinct captured pages that appear in the original views.
    pub hits: usize,
    /// `None` means no recommendation was produced.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccuracyReport {
    /// One row per replayed user, user id ascending. Users skipped because
    /// the window does not fit their view list have no row.
    pub per_user: Vec<UserOutcome>,
    /// Arithmetic mean over users with a non-empty captured list.
    pub mean_accuracy: Option<f64>,
    pub evaluated: usize,
    pub no_recommendation: usize,
    pub skipped: usize,
}

/// Replays every user in the corpus: the window is the prefix of the user's
/// distinct page views, the captured list is the selected part of the
/// recommendation, accuracy is the captured-vs-original ratio.
pub fn replay_evaluate(
    kb: &KnowledgeBase,
    rows: &[SessionRow],
    lsw_spec: LswSpec,
    part: PartSelect,
    config: &Config,
) -> AccuracyReport {
    let mut report = AccuracyReport::default();
    for (user_id, user_rows) in group_by_user(rows) {
        let mut seen = BTreeSet::new();
        let mut original: Vec<PageId> = Vec::new();
        for row in &user_rows {
            if seen.insert(row.page_id) {
                original.push(row.page_id);
            }
        }

        let lsw = match capture_lsw(user_id, &original, lsw_spec, kb) {
            Ok(lsw) => lsw,
            Err(RecommendError::WindowTooLarge { .. }) | Err(RecommendError::EmptyWindow) => {
                report.skipped += 1;
                continue;
            }
            Err(RecommendError::UnknownPage { .. }) => {
                // Split-corpus replay can hold pages the base never saw.
                report.skipped += 1;
                continue;
            }
        };

        let list = recommend(&lsw, kb, config);
        let mut captured: Vec<PageId> = Vec::new();
        if matches!(part, PartSelect::Combined | PartSelect::History) {
            captured.extend(list.history.iter().map(|(id, _)| *id));
        }
        if matches!(part, PartSelect::Combined | PartSelect::Unvisited) {
            captured.extend(list.unvisited.iter().map(|(id, _)| *id));
        }

        let captured_distinct: BTreeSet<PageId> = captured.iter().copied().collect();
        let acc = accuracy(&captured, &original);
        let hits = {
            let orig: BTreeSet<PageId> = original.iter().copied().collect();
            captured_distinct.intersection(&orig).count()
        };
        match acc {
            Some(_) => report.evaluated += 1,
            None => report.no_recommendation += 1,
        }
        report.per_user.push(UserOutcome {
            user_id,
            lsw_len: lsw.pages.len(),
            captured: captured_distinct.len(),
            hits,
            accuracy: acc,
        });
    }

    if report.evaluated > 0 {
        let sum: f64 = report.per_user.iter().filter_map(|u| u.accuracy).sum();
        report.mean_accuracy = Some(sum / report.evaluated as f64);
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Tsv,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(ReportFormat::Tsv),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("expected tsv|csv, found {other:?}")),
        }
    }
}

/// Percentage with four decimal places, the rendering used in reports.
pub fn format_percent(ratio: f64) -> String {
    format!("{:.4}%", ratio * 100.0)
}

/// Renders per-user rows plus an `#aggregate` footer.
pub fn render_report(report: &AccuracyReport, format: ReportFormat) -> String {
    let sep = match format {
        ReportFormat::Tsv => '\t',
        ReportFormat::Csv => ',',
    };
    let mut out = String::new();
    out.push_str(&format!("#user_id{sep}lsw_size{sep}captured{sep}hits{sep}accuracy\n"));
    for user in &report.per_user {
        let acc = user.accuracy.map(format_percent).unwrap_or_else(|| "-".to_string());
        out.push_str(&format!(
            "{}{sep}{}{sep}{}{sep}{}{sep}{}\n",
            user.user_id, user.lsw_len, user.captured, user.hits, acc
        ));
    }
    let mean = report.mean_accuracy.map(format_percent).unwrap_or_else(|| "-".to_string());
    out.push_str(&format!(
        "#aggregate{sep}mean_accuracy={mean}{sep}evaluated={}{sep}no_recommendation={}{sep}skipped={}\n",
        report.evaluated, report.no_recommendation, report.skipped
    ));
    out
}

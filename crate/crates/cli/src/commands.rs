//! Subcommand implementations. Diagnostics go to standard error; file and
//! standard-output payloads are byte-deterministic for fixed inputs.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};

use navrec::config::{Config, LswSpec};
use navrec::evaluator::{format_percent, render_report, replay_evaluate, PartSelect, ReportFormat};
use navrec::knowledge_base::KnowledgeBase;
use navrec::log_ingest::{open_log_input, ParseReport, RecordReader};
use navrec::page_registry::{PageId, PageRegistry};
use navrec::pattern_miner::coverage;
use navrec::preprocess::{
    flatten_sessions, group_by_user, preprocess_pipeline, sessions_from_tsv, sessions_to_tsv,
    SessionRow,
};
use navrec::recommender::{capture_lsw, recommend as recommend_for_window, LiveSessionWindow};

fn write_or_print(payload: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, payload).with_context(|| format!("cannot write {}", path.display())),
        None => {
            print!("{payload}");
            Ok(())
        }
    }
}

pub fn preprocess(inputs: &[PathBuf], output: &Path, config: &Config) -> Result<()> {
    let started = Instant::now();
    let mut records = Vec::new();
    let mut totals = ParseReport::default();
    for path in inputs {
        let reader = open_log_input(path)?;
        let mut record_reader = RecordReader::new(reader);
        for item in record_reader.by_ref() {
            records.push(item.with_context(|| format!("while reading {}", path.display()))?);
        }
        let report = record_reader.into_report();
        totals.lines_total += report.lines_total;
        totals.records_ok += report.records_ok;
        totals.lines_skipped += report.lines_skipped;
        totals.directive_lines += report.directive_lines;
        totals.out_of_order += report.out_of_order;
        for (reason, count) in report.skip_reasons {
            *totals.skip_reasons.entry(reason).or_insert(0) += count;
        }
    }

    let (sessions, stats) = preprocess_pipeline(records, config);
    let mut registry = PageRegistry::new();
    let rows = flatten_sessions(&sessions, &mut registry)?;
    std::fs::write(output, sessions_to_tsv(&rows))
        .with_context(|| format!("cannot write {}", output.display()))?;

    eprintln!(
        "parsed {} lines: {} records, {} skipped, {} directives",
        totals.lines_total, totals.records_ok, totals.lines_skipped, totals.directive_lines
    );
    for (reason, count) in &totals.skip_reasons {
        eprintln!("  skipped {count} ({reason})");
    }
    if totals.out_of_order > 0 {
        eprintln!("warning: {} records arrived out of timestamp order", totals.out_of_order);
    }
    eprintln!(
        "cleansed {} -> {} records (suffix {}, status {}), reduction: {:.1}%",
        stats.records_in,
        stats.records_out,
        stats.removed_by_suffix,
        stats.removed_by_status,
        stats.reduction_fraction() * 100.0
    );
    if stats.broken_chains > 0 {
        eprintln!("broken-chain referrers: {}", stats.broken_chains);
    }
    eprintln!(
        "{} users, {} sessions, {} pages; done in {:.3}s",
        stats.users,
        stats.sessions,
        registry.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

pub fn mine(input: &Path, output: &Path, config: &Config) -> Result<()> {
    let text = std::fs::read_to_string(input).with_context(|| format!("cannot read {}", input.display()))?;
    let rows = sessions_from_tsv(&text)?;
    let kb = KnowledgeBase::from_rows(&rows, config)?;
    kb.store(output)?;

    let by_user = group_by_user(&rows);
    for (user_id, user_rows) in &by_user {
        let cluster = &kb.clusters[user_id];
        eprintln!(
            "user {user_id}: {} patterns, coverage {}",
            cluster.patterns.len(),
            format_percent(coverage(cluster, user_rows))
        );
    }
    eprintln!(
        "knowledge base: {} users, {} pages, min_weight {} -> {}",
        kb.clusters.len(),
        kb.registry.len(),
        kb.meta.min_weight,
        output.display()
    );
    Ok(())
}

pub enum LswRequest {
    /// Explicit comma-separated page ids.
    Pages(String),
    /// Capture from the user's sessions in this TSV.
    Replay(PathBuf),
}

/// Returns true when both parts came back empty (exit code 1).
pub fn recommend(
    kb_path: &Path,
    user: u32,
    request: LswRequest,
    format: &str,
    output: Option<&Path>,
    config: &Config,
) -> Result<bool> {
    let kb = KnowledgeBase::load(kb_path)?;
    let lsw = match request {
        LswRequest::Pages(ids) => {
            let pages = ids
                .split(',')
                .map(|s| s.trim().parse::<PageId>())
                .collect::<Result<Vec<_>, _>>()?;
            LiveSessionWindow::new(user, pages, &kb)?
        }
        LswRequest::Replay(sessions_path) => {
            let text = std::fs::read_to_string(&sessions_path)
                .with_context(|| format!("cannot read {}", sessions_path.display()))?;
            let rows = sessions_from_tsv(&text)?;
            let original = distinct_views(&rows, user);
            if original.is_empty() {
                bail!("user {user} has no page views in {}", sessions_path.display());
            }
            capture_lsw(user, &original, config.lsw, &kb)?
        }
    };

    let list = recommend_for_window(&lsw, &kb, config);
    let rendering = match format {
        "text" => format!("Welcome User {user}\n\n{}", list.to_text(lsw.pages.len())),
        "tsv" => list.to_tsv(),
        other => bail!("unknown format {other:?}, expected text or tsv"),
    };
    write_or_print(&rendering, output)?;
    Ok(list.is_empty())
}

fn distinct_views(rows: &[SessionRow], user: u32) -> Vec<PageId> {
    let mut seen = BTreeSet::new();
    rows.iter()
        .filter(|r| r.user_id == user)
        .filter(|r| seen.insert(r.page_id))
        .map(|r| r.page_id)
        .collect()
}

fn parse_sweep(spec: &str) -> Result<(usize, usize)> {
    let (lo, hi) = spec.split_once("..").with_context(|| format!("bad sweep {spec:?}, expected A..B"))?;
    let lo: usize = lo.trim().parse().with_context(|| format!("bad sweep start {lo:?}"))?;
    let hi: usize = hi.trim().parse().with_context(|| format!("bad sweep end {hi:?}"))?;
    if lo == 0 || hi < lo {
        bail!("bad sweep {spec:?}: need 1 <= A <= B");
    }
    Ok((lo, hi))
}

pub fn evaluate(
    kb_path: &Path,
    sessions: &Path,
    part: &str,
    sweep: Option<&str>,
    format: &str,
    output: Option<&Path>,
    config: &Config,
) -> Result<()> {
    let kb = KnowledgeBase::load(kb_path)?;
    let text =
        std::fs::read_to_string(sessions).with_context(|| format!("cannot read {}", sessions.display()))?;
    let rows = sessions_from_tsv(&text)?;
    let part: PartSelect = part.parse().map_err(anyhow::Error::msg)?;
    let format: ReportFormat = format.parse().map_err(anyhow::Error::msg)?;

    let mut payload = String::new();
    match sweep {
        None => {
            let report = replay_evaluate(&kb, &rows, config.lsw, part, config);
            payload.push_str(&render_report(&report, format));
        }
        Some(spec) => {
            let (lo, hi) = parse_sweep(spec)?;
            for size in lo..=hi {
                payload.push_str(&format!("#sweep lsw={size}\n"));
                let report = replay_evaluate(&kb, &rows, LswSpec::Count(size), part, config);
                payload.push_str(&render_report(&report, format));
            }
        }
    }
    write_or_print(&payload, output)
}

pub fn inspect(kb_path: &Path, section: &str) -> Result<()> {
    let kb = KnowledgeBase::load(kb_path)?;
    let mut out = String::new();
    if matches!(section, "meta" | "all") {
        out.push_str(&format!(
            "built_at_epoch_s\t{}\nsource_digest\t{}\nmin_weight\t{}\n",
            kb.meta.built_at_epoch_s, kb.meta.source_digest, kb.meta.min_weight
        ));
    }
    if matches!(section, "registry" | "all") {
        out.push_str(&kb.registry.to_tsv());
    }
    if matches!(section, "patterns" | "all") {
        out.push_str(&navrec::pattern_miner::clusters_to_tsv(&kb.clusters));
    }
    if out.is_empty() {
        bail!("unknown section {section:?}, expected meta, registry, patterns, or all");
    }
    print!("{out}");
    Ok(())
}

//! Transforms parsed log records into per-user sessions: cleansing, content
//! retrieval, user identification, session identification (referrer plus
//! 30-minute gap rule), and path completion.
//!
//! The output interchange format is a sessionized TSV, one record per line:
//! `session_id  user_id  timestamp_epoch_s  page  referer_page  page_id
//! referer_page_id`, header line prefixed `#`.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::config::Config;
use crate::log_ingest::LogRecord;
use crate::page_registry::{PageId, PageRegistry, RegistryError};

/// Header of the sessionized TSV output.
pub const SESSIONS_HEADER: &str =
    "#session_id\tuser_id\ttimestamp_epoch_s\tpage\treferer_page\tpage_id\treferer_page_id";

/// A log record that survived cleansing, carrying canonical page paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanRecord {
    pub record: LogRecord,
    /// Canonical page path: lower-cased, query and fragment stripped.
    pub page: String,
    /// Canonical referrer page path, or `"-"` for a direct entry.
    pub referer_page: String,
}

impl CleanRecord {
    fn from_log(record: LogRecord, external_referer_as_dash: bool) -> CleanRecord {
        let page = retrieve_content(&record.cs_uri_stem);
        let referer_page =
            canonical_referer(&record.cs_referer, &record.cs_host, external_referer_as_dash);
        CleanRecord { record, page, referer_page }
    }

    pub fn timestamp(&self) -> i64 {
        self.record.timestamp
    }

    /// Re-serializes the cleaned record as a plain log record (canonical
    /// paths in place of the raw URI fields), so that pipeline output can be
    /// fed back through the pipeline.
    pub fn to_log_record(&self) -> LogRecord {
        let mut rec = self.record.clone();
        rec.cs_uri_stem = self.page.clone();
        rec.cs_uri_query = "-".to_string();
        rec.cs_referer = self.referer_page.clone();
        rec
    }
}

/// Identity of one user: two records belong to the same user iff both the
/// client address and the full user-agent string match exactly. The agent
/// string embeds browser and operating system.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UserKey {
    pub c_ip: String,
    pub user_agent: String,
}

impl UserKey {
    pub fn of(record: &LogRecord) -> UserKey {
        UserKey { c_ip: record.c_ip.clone(), user_agent: record.cs_user_agent.clone() }
    }
}

/// An ordered, user-attributed, cleaned click sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    /// Dense per-user session number, starting at 1.
    pub session_id: u32,
    pub user_id: u32,
    pub records: Vec<CleanRecord>,
}

/// Counters describing one preprocessing run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PreprocessStats {
    pub records_in: u64,
    pub records_out: u64,
    pub removed_by_suffix: u64,
    pub removed_by_status: u64,
    /// Records whose URI stem is the absent value `"-"` (no page to mine).
    pub removed_absent_page: u64,
    pub users: u32,
    pub sessions: u32,
    /// Non-initial records whose referrer does not match the previous page
    /// in the session (site frames, bookmarks). Reported, never repaired.
    pub broken_chains: u64,
}

impl PreprocessStats {
    /// `1 - records_out / records_in`; 0.0 for empty input.
    pub fn reduction_fraction(&self) -> f64 {
        if self.records_in == 0 {
            0.0
        } else {
            1.0 - self.records_out as f64 / self.records_in as f64
        }
    }
}

/// Removes irrelevant records: filtered filename suffixes (images,
/// stylesheets) and status codes outside 200..=299. Order preserved.
///
/// The suffix test runs against the canonical page path, so a stem with a
/// fused query string (`/logo.gif?x=1`) is still filtered.
pub fn cleanse(records: Vec<LogRecord>, filtered_suffixes: &[String]) -> (Vec<LogRecord>, PreprocessStats) {
    let mut stats = PreprocessStats { records_in: records.len() as u64, ..Default::default() };
    let suffixes: Vec<String> = filtered_suffixes.iter().map(|s| s.to_ascii_lowercase()).collect();
    let kept: Vec<LogRecord> = records
        .into_iter()
        .filter(|rec| {
            let page = retrieve_content(&rec.cs_uri_stem);
            if page == "-" {
                stats.removed_absent_page += 1;
                return false;
            }
            if suffixes.iter().any(|s| page.ends_with(s.as_str())) {
                stats.removed_by_suffix += 1;
                return false;
            }
            if rec.sc_status < 200 || rec.sc_status > 299 {
                stats.removed_by_status += 1;
                return false;
            }
            true
        })
        .collect();
    stats.records_out = kept.len() as u64;
    (kept, stats)
}

/// Reduces a request URI (or full URL) to its canonical page path: scheme
/// and host stripped, query and fragment stripped, lower-cased. `"-"` maps
/// to `"-"`.
pub fn retrieve_content(raw: &str) -> String {
    if raw == "-" {
        return "-".to_string();
    }
    let mut s = raw;
    // Leading-slash inputs are already paths; only full URLs lose their
    // scheme and host. Keeps canonicalization idempotent.
    if !s.starts_with('/') {
        if let Some(pos) = s.find("://") {
            let after = &s[pos + 3..];
            s = match after.find('/') {
                Some(slash) => &after[slash..],
                None => "/",
            };
        }
    }
    let cut = s.find(['?', '#']).unwrap_or(s.len());
    let path = &s[..cut];
    if path.is_empty() {
        "/".to_string()
    } else {
        path.to_ascii_lowercase()
    }
}

fn url_host(raw: &str) -> Option<&str> {
    if raw.starts_with('/') {
        return None;
    }
    let pos = raw.find("://")?;
    let after = &raw[pos + 3..];
    let end = after.find('/').unwrap_or(after.len());
    Some(&after[..end])
}

fn host_matches(a: &str, b: &str) -> bool {
    let strip = |h: &str| h.split(':').next().unwrap_or("").to_ascii_lowercase();
    strip(a) == strip(b)
}

/// Canonicalizes a referrer value. With `external_referer_as_dash`, a
/// referrer whose host differs from the request host becomes `"-"` (a fresh
/// entry), which feeds the session identification rule.
pub fn canonical_referer(raw: &str, cs_host: &str, external_referer_as_dash: bool) -> String {
    if raw == "-" {
        return "-".to_string();
    }
    if external_referer_as_dash {
        if let Some(host) = url_host(raw) {
            if !host_matches(host, cs_host) {
                return "-".to_string();
            }
        }
    }
    retrieve_content(raw)
}

/// Assigns dense user ids (1, 2, 3, ...) in order of first appearance.
/// Returns the key map and one user id per input record.
pub fn identify_users(records: &[CleanRecord]) -> (HashMap<UserKey, u32>, Vec<u32>) {
    let mut map: HashMap<UserKey, u32> = HashMap::new();
    let mut ids = Vec::with_capacity(records.len());
    for rec in records {
        let key = UserKey::of(&rec.record);
        let next = map.len() as u32 + 1;
        let id = *map.entry(key).or_insert(next);
        ids.push(id);
    }
    (map, ids)
}

/// Splits one user's time-ordered records into sessions. A new session
/// starts at the first record, at any record whose referrer is `"-"`, and
/// after a gap strictly greater than `timeout_s` seconds.
pub fn sessionize(user_id: u32, records: Vec<CleanRecord>, timeout_s: i64) -> Vec<Session> {
    let mut sessions: Vec<Session> = Vec::new();
    for rec in records {
        let fresh_entry = rec.referer_page == "-";
        let split = match sessions.last() {
            None => true,
            Some(cur) => {
                let prev_ts = cur.records.last().map(|r| r.timestamp()).unwrap_or(rec.timestamp());
                fresh_entry || rec.timestamp() - prev_ts > timeout_s
            }
        };
        if split {
            sessions.push(Session {
                session_id: sessions.len() as u32 + 1,
                user_id,
                records: vec![rec],
            });
        } else {
            sessions.last_mut().unwrap().records.push(rec);
        }
    }
    sessions
}

/// Path completion: if the session's first record carries both a page and a
/// referrer value, the referrer is reset to `"-"` (the session entry has no
/// in-site predecessor). All other records are unchanged.
pub fn complete_paths(mut session: Session) -> Session {
    if let Some(first) = session.records.first_mut() {
        if first.referer_page != "-" && first.page != "-" {
            first.referer_page = "-".to_string();
        }
    }
    session
}

/// The full preprocessing pipeline: cleanse, retrieve content (page and
/// referrer), identify users, sessionize, complete paths.
pub fn preprocess_pipeline(records: Vec<LogRecord>, config: &Config) -> (Vec<Session>, PreprocessStats) {
    let (kept, mut stats) = cleanse(records, &config.filtered_suffixes);

    let clean: Vec<CleanRecord> =
        kept.into_iter().map(|r| CleanRecord::from_log(r, config.external_referer_as_dash)).collect();

    let (_, ids) = identify_users(&clean);
    let user_count = ids.iter().copied().max().unwrap_or(0);
    let mut per_user: Vec<Vec<CleanRecord>> = vec![Vec::new(); user_count as usize];
    for (rec, id) in clean.into_iter().zip(&ids) {
        per_user[(id - 1) as usize].push(rec);
    }

    let mut sessions = Vec::new();
    for (idx, mut records) in per_user.into_iter().enumerate() {
        let user_id = idx as u32 + 1;
        records.sort_by_key(CleanRecord::timestamp); // stable: input order breaks ties
        for session in sessionize(user_id, records, config.session_timeout_s) {
            sessions.push(complete_paths(session));
        }
    }

    stats.users = user_count;
    stats.sessions = sessions.len() as u32;
    for session in &sessions {
        for pair in session.records.windows(2) {
            if pair[1].referer_page != pair[0].page {
                stats.broken_chains += 1;
            }
        }
    }
    (sessions, stats)
}

/// One line of the sessionized TSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionRow {
    pub session_id: u32,
    pub user_id: u32,
    pub timestamp: i64,
    pub page: String,
    pub referer_page: String,
    pub page_id: PageId,
    pub referer_page_id: Option<PageId>,
}

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("sessions TSV line {line}: {msg}")]
    MalformedRow { line: usize, msg: String },
}

/// Flattens sessions into TSV rows, assigning page ids in traversal order
/// (page first, then referrer, per record).
pub fn flatten_sessions(
    sessions: &[Session],
    registry: &mut PageRegistry,
) -> Result<Vec<SessionRow>, PreprocessError> {
    let mut rows = Vec::new();
    for session in sessions {
        for rec in &session.records {
            let page_id = registry.assign(&rec.page)?;
            let referer_page_id = if rec.referer_page == "-" {
                None
            } else {
                Some(registry.assign(&rec.referer_page)?)
            };
            rows.push(SessionRow {
                session_id: session.session_id,
                user_id: session.user_id,
                timestamp: rec.timestamp(),
                page: rec.page.clone(),
                referer_page: rec.referer_page.clone(),
                page_id,
                referer_page_id,
            });
        }
    }
    Ok(rows)
}

/// Renders rows as the sessionized TSV (LF endings, byte-stable).
pub fn sessions_to_tsv(rows: &[SessionRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 64);
    out.push_str(SESSIONS_HEADER);
    out.push('\n');
    for row in rows {
        let referer_id = match row.referer_page_id {
            Some(id) => id.to_string(),
            None => "-".to_string(),
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            row.session_id, row.user_id, row.timestamp, row.page, row.referer_page, row.page_id, referer_id
        ));
    }
    out
}

/// Parses the output of [`sessions_to_tsv`].
pub fn sessions_from_tsv(text: &str) -> Result<Vec<SessionRow>, PreprocessError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 7 {
            return Err(PreprocessError::MalformedRow {
                line: i + 1,
                msg: format!("expected 7 columns, found {}", cols.len()),
            });
        }
        let parse_u32 = |s: &str, what: &str| {
            s.parse::<u32>().map_err(|_| PreprocessError::MalformedRow {
                line: i + 1,
                msg: format!("bad {what}: {s:?}"),
            })
        };
        let timestamp = cols[2].parse::<i64>().map_err(|_| PreprocessError::MalformedRow {
            line: i + 1,
            msg: format!("bad timestamp: {:?}", cols[2]),
        })?;
        rows.push(SessionRow {
            session_id: parse_u32(cols[0], "session_id")?,
            user_id: parse_u32(cols[1], "user_id")?,
            timestamp,
            page: cols[3].to_string(),
            referer_page: cols[4].to_string(),
            page_id: cols[5].parse::<PageId>().map_err(PreprocessError::Registry)?,
            referer_page_id: if cols[6] == "-" {
                None
            } else {
                Some(cols[6].parse::<PageId>().map_err(PreprocessError::Registry)?)
            },
        });
    }
    Ok(rows)
}

/// Rebuilds the page registry implied by the id columns of a row set.
pub fn registry_from_rows(rows: &[SessionRow]) -> Result<PageRegistry, RegistryError> {
    let mut pairs = Vec::with_capacity(rows.len() * 2);
    for row in rows {
        pairs.push((row.page_id, row.page.as_str()));
        if let Some(rid) = row.referer_page_id {
            pairs.push((rid, row.referer_page.as_str()));
        }
    }
    PageRegistry::from_pairs(pairs)
}

/// Groups rows by user, preserving row order within each user.
pub fn group_by_user(rows: &[SessionRow]) -> BTreeMap<u32, Vec<&SessionRow>> {
    let mut map: BTreeMap<u32, Vec<&SessionRow>> = BTreeMap::new();
    for row in rows {
        map.entry(row.user_id).or_default().push(row);
    }
    map
}

/// Groups rows by (user, session), preserving row order within each session.
pub fn group_by_session(rows: &[SessionRow]) -> BTreeMap<(u32, u32), Vec<&SessionRow>> {
    let mut map: BTreeMap<(u32, u32), Vec<&SessionRow>> = BTreeMap::new();
    for row in rows {
        map.entry((row.user_id, row.session_id)).or_default().push(row);
    }
    map
}

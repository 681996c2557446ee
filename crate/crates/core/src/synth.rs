//! Deterministic synthetic corpora for tests, demos, and acceptance checks.
//!
//! The toolkit's reference evaluations were designed against university web
//! server logs that cannot be redistributed; these generators produce
//! fixed, reproducible stand-ins with known composition (noise fraction,
//! session boundaries, view-list lengths), so every expected number in the
//! test suites is derivable by construction.

use crate::log_ingest::split_timestamp;
use crate::page_registry::PageRegistry;
use crate::preprocess::SessionRow;

/// 2002-04-01 00:00:00 UTC, the corpus epoch.
pub const CORPUS_T0: i64 = 1_017_619_200;

/// Total record lines in the noise corpus.
pub const NOISE_CORPUS_RECORDS: usize = 1000;
/// Records that cleansing must remove: filtered suffixes plus bad statuses.
pub const NOISE_CORPUS_NOISE: usize = 450;
/// Client address of the session-boundary user (1800 s and 1801 s gaps).
pub const BOUNDARY_USER_IP: &str = "10.9.9.9";

/// SplitMix64: a tiny deterministic generator for shuffles and sampling in
/// tests. Stable across platforms.
#[derive(Debug, Clone)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> SplitMix64 {
        SplitMix64(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform value in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n.max(1)
    }
}

fn log_line(ts: i64, ip: &str, agent: &str, stem: &str, status: u16, time_taken: i64, referer: &str) -> String {
    let (date, time) = split_timestamp(ts);
    format!(
        "{date} {time} {ip} - w3svc3 bach bach.example.edu 80 get {stem} - {status} {time_taken} http/1.1 www.example.edu {agent} {referer}"
    )
}

/// A 1000-record W3C extended log with exactly 450 irrelevant records (225
/// image or stylesheet requests, 225 non-2xx statuses) evenly interleaved
/// with 550 clean records, so cleansing reduces the corpus by exactly 45%.
///
/// Twelve regular users walk six-page chains (two shared pages, four
/// private) in repeating sessions; one extra user ([`BOUNDARY_USER_IP`])
/// has consecutive gaps of exactly 1800 s (must not split) and 1801 s
/// (must split), ending up with exactly two sessions. Timestamps are
/// globally non-decreasing. Fully deterministic: no seed, byte-stable.
pub fn noise_corpus_log() -> String {
    const USERS: usize = 12;
    const CLEAN_REGULAR: usize = 546;
    const INTERLEAVED: usize = CLEAN_REGULAR + NOISE_CORPUS_NOISE;

    let user_chain = |user: usize| -> Vec<String> {
        let mut chain = vec!["/shared/home.asp".to_string(), "/shared/news.asp".to_string()];
        for page in 2..6 {
            chain.push(format!("/user{user:02}/page{page}.asp"));
        }
        chain
    };

    let mut entries: Vec<(i64, String)> = Vec::with_capacity(NOISE_CORPUS_RECORDS);
    let mut ts = CORPUS_T0 + 10;
    let mut noise_emitted = 0usize;
    let mut clean_emitted = 0usize;
    let mut per_user_index = [0usize; USERS];

    for i in 0..INTERLEAVED {
        // Bresenham-style interleave: exactly 450 noise lines in 996.
        let want_noise = (i + 1) * NOISE_CORPUS_NOISE / INTERLEAVED > noise_emitted;
        let user = i % USERS;
        let ip = format!("cust{user:02}.example.net");
        let agent = "mozilla/4.0+(compatible;+msie+5.5;+windows+98)";
        if want_noise {
            let k = noise_emitted;
            let line = if k.is_multiple_of(2) {
                let stem = match (k / 2) % 4 {
                    0 => format!("/img/banner{}.gif", k / 2),
                    1 => format!("/img/photo{}.jpg", k / 2),
                    2 => format!("/img/art{}.jpeg", k / 2),
                    _ => format!("/css/site{}.css", k / 2),
                };
                log_line(ts, &ip, agent, &stem, 200, 5, "-")
            } else {
                let (status, stem) = match (k / 2) % 4 {
                    0 => (404u16, format!("/missing/page{}.asp", k / 2)),
                    1 => (302, format!("/redirect/page{}.asp", k / 2)),
                    2 => (500, format!("/error/page{}.asp", k / 2)),
                    _ => (301, format!("/moved/page{}.asp", k / 2)),
                };
                log_line(ts, &ip, agent, &stem, status, 5, "-")
            };
            entries.push((ts, line));
            noise_emitted += 1;
        } else {
            let chain = user_chain(user);
            let pos = per_user_index[user] % chain.len();
            let referer = if pos == 0 {
                "-".to_string()
            } else {
                format!("http://www.example.edu{}", chain[pos - 1])
            };
            entries.push((ts, log_line(ts, &ip, agent, &chain[pos], 200, 12, &referer)));
            per_user_index[user] += 1;
            clean_emitted += 1;
        }
        ts += 3;
    }
    debug_assert_eq!(noise_emitted, NOISE_CORPUS_NOISE);
    debug_assert_eq!(clean_emitted, CLEAN_REGULAR);

    // The boundary user: a 1800 s gap inside one session, then a 1801 s gap
    // that must open a second session.
    let agent = "mozilla/4.0+(compatible;+msie+6.0)";
    let boundary = [
        (CORPUS_T0 + 100, "/boundary/a.asp", "-".to_string()),
        (CORPUS_T0 + 1900, "/boundary/b.asp", "http://www.example.edu/boundary/a.asp".to_string()),
        (CORPUS_T0 + 3701, "/boundary/c.asp", "http://www.example.edu/boundary/b.asp".to_string()),
        (CORPUS_T0 + 3704, "/boundary/d.asp", "http://www.example.edu/boundary/c.asp".to_string()),
    ];
    for (bts, stem, referer) in boundary {
        entries.push((bts, log_line(bts, BOUNDARY_USER_IP, agent, stem, 200, 12, &referer)));
    }

    entries.sort_by_key(|(ts, _)| *ts);

    let mut out = String::new();
    out.push_str("#Software: Microsoft-IIS/5.0\n");
    out.push_str("#Version: 1.0\n");
    out.push_str(
        "#Fields: date time c-ip cs-username s-sitename s-computername s-ip s-port cs-method cs-uri-stem cs-uri-query sc-status time-taken cs-version cs-host cs(User-Agent) cs(Referer)\n",
    );
    for (_, line) in entries {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn walk_rows(
    registry: &mut PageRegistry,
    rows: &mut Vec<SessionRow>,
    user_id: u32,
    session_id: u32,
    base_ts: i64,
    chain: &[String],
) {
    for (i, page) in chain.iter().enumerate() {
        let referer_page = if i == 0 { "-".to_string() } else { chain[i - 1].clone() };
        let page_id = registry.assign(page).expect("synthetic pages are never absent");
        let referer_page_id =
            if referer_page == "-" { None } else { Some(registry.assign(&referer_page).unwrap()) };
        rows.push(SessionRow {
            session_id,
            user_id,
            timestamp: base_ts + i as i64 * 5,
            page: page.clone(),
            referer_page,
            page_id,
            referer_page_id,
        });
    }
}

/// Users whose originals are 13 page views in [`trend_corpus`].
pub const TREND_SHORT_USERS: [u32; 5] = [1, 2, 3, 4, 5];
/// Users whose originals are 17 page views in [`trend_corpus`].
pub const TREND_LONG_USERS: [u32; 5] = [6, 7, 8, 9, 10];

/// Two user groups over a shared page pool: five users with 13-page view
/// lists (8 shared + 5 private pages) and five with 17-page lists (12
/// shared + 5 private). Every user walks their list three times, so all
/// chain transitions reach weight 3 and full-chain patterns survive the
/// default pruning. All walks start on the same two shared pages, giving
/// every cross-user window a common subsequence.
pub fn trend_corpus() -> Vec<SessionRow> {
    let shared: Vec<String> = (1..=12).map(|k| format!("/shared/s{k:02}.asp")).collect();
    let mut registry = PageRegistry::new();
    let mut rows = Vec::new();
    for user_id in TREND_SHORT_USERS.iter().chain(&TREND_LONG_USERS).copied() {
        let shared_len = if TREND_SHORT_USERS.contains(&user_id) { 8 } else { 12 };
        let mut chain: Vec<String> = shared[..shared_len].to_vec();
        for k in 1..=5 {
            chain.push(format!("/user{user_id:02}/p{k}.asp"));
        }
        for session_id in 1..=3u32 {
            let base = CORPUS_T0 + user_id as i64 * 100_000 + session_id as i64 * 10_000;
            walk_rows(&mut registry, &mut rows, user_id, session_id, base, &chain);
        }
    }
    rows
}

/// Per-user corpora for coverage checks: every user walks a five-page chain
/// three times (all transitions at weight 3). With `with_outlier`, each
/// user gets one extra weak session contributing a sixth page reached by a
/// single weight-1 transition, which prunes away: coverage 5/6 per user
/// instead of 1.0.
pub fn coverage_corpus(users: u32, with_outlier: bool) -> Vec<SessionRow> {
    let mut registry = PageRegistry::new();
    let mut rows = Vec::new();
    for user_id in 1..=users {
        let chain: Vec<String> = (1..=5).map(|k| format!("/user{user_id:02}/h{k}.asp")).collect();
        for session_id in 1..=3u32 {
            let base = CORPUS_T0 + user_id as i64 * 100_000 + session_id as i64 * 10_000;
            walk_rows(&mut registry, &mut rows, user_id, session_id, base, &chain);
        }
        if with_outlier {
            let weak = vec![chain[4].clone(), format!("/user{user_id:02}/outlier.asp")];
            let base = CORPUS_T0 + user_id as i64 * 100_000 + 40_000;
            walk_rows(&mut registry, &mut rows, user_id, 4, base, &weak);
        }
    }
    rows
}

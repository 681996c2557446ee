//! The online engine: given a live session window, produce intuition pages
//! from the user's own historical patterns (via longest common subsequence)
//! plus unvisited pages from the best-matching pattern of other users.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::config::{Config, LswSpec};
use crate::knowledge_base::KnowledgeBase;
use crate::page_registry::PageId;
use crate::pattern_miner::NavigationPattern;

/// Label of the history part, as rendered to users.
pub const HISTORY_LABEL: &str = "as per user's historical pattern";
/// Label of the unvisited part, as rendered to users.
pub const UNVISITED_LABEL: &str = "compared to other user patterns";

#[derive(Debug, Error)]
pub enum RecommendError {
    #[error("live session window is empty")]
    EmptyWindow,
    #[error("page {id} is not in the knowledge base registry")]
    UnknownPage { id: PageId },
    #[error("window of {requested} pages exceeds the {available} available page views")]
    WindowTooLarge { requested: usize, available: usize },
}

/// The active session's most recent page views, the online query. Unknown
/// page ids are rejected at construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiveSessionWindow {
    pub user_id: u32,
    pub pages: Vec<PageId>,
}

impl LiveSessionWindow {
    pub fn new(user_id: u32, pages: Vec<PageId>, kb: &KnowledgeBase) -> Result<LiveSessionWindow, RecommendError> {
        if pages.is_empty() {
            return Err(RecommendError::EmptyWindow);
        }
        for &id in &pages {
            if !kb.registry.contains(id) {
                return Err(RecommendError::UnknownPage { id });
            }
        }
        Ok(LiveSessionWindow { user_id, pages })
    }
}

/// Takes the window a live user would have generated: the first `spec`
/// pages of the original view list (replay semantics).
pub fn capture_lsw(
    user_id: u32,
    original_pages: &[PageId],
    spec: LswSpec,
    kb: &KnowledgeBase,
) -> Result<LiveSessionWindow, RecommendError> {
    if original_pages.is_empty() {
        return Err(RecommendError::EmptyWindow);
    }
    let len = spec.window_len(original_pages.len());
    if len > original_pages.len() {
        return Err(RecommendError::WindowTooLarge { requested: len, available: original_pages.len() });
    }
    LiveSessionWindow::new(user_id, original_pages[..len].to_vec(), kb)
}

/// Longest common subsequence by standard dynamic programming. The
/// backtrace is deterministic: diagonal first, then up, then left.
pub fn lcs(a: &[PageId], b: &[PageId]) -> Vec<PageId> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let (n, m) = (a.len(), b.len());
    let mut table = vec![vec![0usize; m + 1]; n + 1];
    for i in 0..n {
        for j in 0..m {
            table[i + 1][j + 1] = if a[i] == b[j] {
                table[i][j] + 1
            } else {
                table[i][j + 1].max(table[i + 1][j])
            };
        }
    }
    let mut out = Vec::with_capacity(table[n][m]);
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        if a[i - 1] == b[j - 1] {
            out.push(a[i - 1]);
            i -= 1;
            j -= 1;
        } else if table[i - 1][j] >= table[i][j - 1] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    out.reverse();
    out
}

/// The pattern a recommendation part was drawn from, kept for audit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchedPattern {
    pub source_user: u32,
    pub pattern: NavigationPattern,
}

/// The combined recommendation: two labeled sublists of (page id, URI)
/// entries. Pages may repeat across parts (never within one), and no live
/// session window page appears in either part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecommendationList {
    pub history: Vec<(PageId, String)>,
    pub unvisited: Vec<(PageId, String)>,
    pub matched_history: Option<MatchedPattern>,
    pub matched_unvisited: Option<MatchedPattern>,
}

impl RecommendationList {
    pub fn no_history(&self) -> bool {
        self.history.is_empty()
    }

    pub fn no_unvisited(&self) -> bool {
        self.unvisited.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.no_history() && self.no_unvisited()
    }

    /// Machine rendering: `part_label  page_id  uri` rows plus a trailing
    /// `#flags` line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("#part_label\tpage_id\turi\n");
        for (id, uri) in &self.history {
            out.push_str(&format!("history\t{id}\t{uri}\n"));
        }
        for (id, uri) in &self.unvisited {
            out.push_str(&format!("unvisited\t{id}\t{uri}\n"));
        }
        out.push_str(&format!(
            "#flags\tno_history={}\tno_unvisited={}\n",
            self.no_history(),
            self.no_unvisited()
        ));
        out
    }

    /// Human rendering: the two-table layout with one list per part.
    pub fn to_text(&self, lsw_len: usize) -> String {
        let mut out = String::new();
        render_part(&mut out, HISTORY_LABEL, &self.history);
        out.push('\n');
        render_part(&mut out, UNVISITED_LABEL, &self.unvisited);
        out.push('\n');
        out.push_str(&format!("Live Session Window : {lsw_len}\n"));
        out
    }
}

fn render_part(out: &mut String, label: &str, entries: &[(PageId, String)]) {
    if entries.is_empty() {
        out.push_str(&format!("Sorry !!! No Recommendation List ({label})\n"));
        return;
    }
    out.push_str(&format!("Recommended List ({label})\n"));
    out.push_str("Page id\tPage Uri\n");
    for (id, uri) in entries {
        out.push_str(&format!("{id}\t{uri}\n"));
    }
}

/// Picks the candidate maximizing (LCS length with the window, pattern
/// weight); iteration order breaks ties, earliest wins.
fn best_candidate<'a>(
    candidates: impl Iterator<Item = (u32, &'a NavigationPattern)>,
    window: &[PageId],
    require_overlap: bool,
) -> Option<(MatchedPattern, Vec<PageId>)> {
    let mut best: Option<(usize, u32, MatchedPattern, Vec<PageId>)> = None;
    for (user, pattern) in candidates {
        let common = lcs(&pattern.path, window);
        if require_overlap && common.is_empty() {
            continue;
        }
        let better = match &best {
            None => true,
            Some((len, weight, _, _)) => (common.len(), pattern.weight) > (*len, *weight),
        };
        if better {
            best = Some((
                common.len(),
                pattern.weight,
                MatchedPattern { source_user: user, pattern: pattern.clone() },
                common,
            ));
        }
    }
    best.map(|(_, _, matched, common)| (matched, common))
}

fn remaining_pages(pattern: &NavigationPattern, common: &[PageId], window: &[PageId]) -> Vec<PageId> {
    let drop: BTreeSet<PageId> = common.iter().chain(window.iter()).copied().collect();
    pattern.path.iter().copied().filter(|id| !drop.contains(id)).collect()
}

/// Intuition pages from the user's own history: the best own pattern's
/// pages that are not already covered by the window's common subsequence,
/// in pattern order.
pub fn recommend_from_history(
    lsw: &LiveSessionWindow,
    kb: &KnowledgeBase,
) -> (Vec<PageId>, Option<MatchedPattern>) {
    let own = kb.patterns_for(lsw.user_id).iter().map(|p| (lsw.user_id, p));
    match best_candidate(own, &lsw.pages, false) {
        Some((matched, common)) => {
            let picks = remaining_pages(&matched.pattern, &common, &lsw.pages);
            (picks, Some(matched))
        }
        None => (Vec::new(), None),
    }
}

/// Unvisited pages from other users: the best other-user pattern sharing at
/// least one window page, minus the common subsequence and the window
/// itself, in pattern order.
pub fn recommend_unvisited(
    lsw: &LiveSessionWindow,
    kb: &KnowledgeBase,
) -> (Vec<PageId>, Option<MatchedPattern>) {
    match best_candidate(kb.patterns_excluding(lsw.user_id), &lsw.pages, true) {
        Some((matched, common)) => {
            let picks = remaining_pages(&matched.pattern, &common, &lsw.pages);
            (picks, Some(matched))
        }
        None => (Vec::new(), None),
    }
}

/// The combined recommendation list. Pure in (window, knowledge base); safe
/// for unlimited concurrent invocations.
pub fn recommend(lsw: &LiveSessionWindow, kb: &KnowledgeBase, config: &Config) -> RecommendationList {
    let (history_ids, matched_history) = recommend_from_history(lsw, kb);
    let (mut unvisited_ids, matched_unvisited) = recommend_unvisited(lsw, kb);
    if config.dedupe_across_parts {
        let seen: BTreeSet<PageId> = history_ids.iter().copied().collect();
        unvisited_ids.retain(|id| !seen.contains(id));
    }
    let resolve = |ids: Vec<PageId>| -> Vec<(PageId, String)> {
        ids.into_iter()
            .map(|id| {
                let uri = kb.registry.reverse(id).expect("validated against registry").to_string();
                (id, uri)
            })
            .collect()
    };
    RecommendationList {
        history: resolve(history_ids),
        unvisited: resolve(unvisited_ids),
        matched_history,
        matched_unvisited,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge_base::KbMeta;
    use crate::page_registry::PageRegistry;
    use crate::pattern_miner::PatternCluster;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn pid(n: u32) -> PageId {
        PageId::new(n).unwrap()
    }

    fn ids(ns: &[u32]) -> Vec<PageId> {
        ns.iter().map(|&n| pid(n)).collect()
    }

    fn pattern(ns: &[u32], weight: u32) -> NavigationPattern {
        NavigationPattern { path: ids(ns), weight }
    }

    fn kb_with(clusters: Vec<(u32, Vec<NavigationPattern>)>, pages: u32) -> KnowledgeBase {
        let mut registry = PageRegistry::new();
        for i in 1..=pages {
            registry.assign(&format!("/page{i:03}.asp")).unwrap();
        }
        let clusters: BTreeMap<u32, PatternCluster> = clusters
            .into_iter()
            .map(|(user_id, patterns)| {
                let mut c = PatternCluster { user_id, patterns };
                c.canonical_sort();
                (user_id, c)
            })
            .collect();
        KnowledgeBase {
            registry,
            clusters,
            meta: KbMeta { built_at_epoch_s: 0, source_digest: String::new(), min_weight: 1 },
        }
    }

    #[test]
    fn lcs_basic_cases() {
        assert_eq!(lcs(&ids(&[1, 3]), &ids(&[1, 2, 3, 4])), ids(&[1, 3]));
        let same = ids(&[4, 2, 9]);
        assert_eq!(lcs(&same, &same), same);
        assert_eq!(lcs(&ids(&[1, 2]), &ids(&[3, 4])), Vec::<PageId>::new());
        assert_eq!(lcs(&[], &ids(&[1])), Vec::<PageId>::new());
    }

    #[test]
    fn capture_prefix_semantics() {
        let kb = kb_with(vec![], 100);
        let views = ids(&[5, 9, 2, 7, 1, 3, 4, 6, 8, 10, 11, 12, 13]);
        let window = capture_lsw(9, &views, LswSpec::Count(2), &kb).unwrap();
        assert_eq!(window.pages, ids(&[5, 9]));

        let seventeen: Vec<PageId> = (1..=17).map(pid).collect();
        let window = capture_lsw(1, &seventeen, LswSpec::Fraction(0.1), &kb).unwrap();
        assert_eq!(window.pages.len(), 2);

        let window = capture_lsw(1, &views, LswSpec::Count(1), &kb).unwrap();
        assert_eq!(window.pages, ids(&[5]));

        assert!(matches!(
            capture_lsw(1, &ids(&[1, 2]), LswSpec::Count(3), &kb),
            Err(RecommendError::WindowTooLarge { requested: 3, available: 2 })
        ));
    }

    #[test]
    fn unknown_window_page_rejected() {
        let kb = kb_with(vec![], 5);
        assert!(matches!(
            LiveSessionWindow::new(1, ids(&[3, 900]), &kb),
            Err(RecommendError::UnknownPage { .. })
        ));
        assert!(matches!(LiveSessionWindow::new(1, vec![], &kb), Err(RecommendError::EmptyWindow)));
    }

    #[test]
    fn history_recommends_pattern_remainder() {
        let kb = kb_with(vec![(9, vec![pattern(&[1, 44, 6, 31, 19, 62], 7)])], 100);
        let lsw = LiveSessionWindow::new(9, ids(&[1, 44]), &kb).unwrap();
        let (picks, matched) = recommend_from_history(&lsw, &kb);
        assert_eq!(picks, ids(&[6, 31, 19, 62]));
        assert_eq!(matched.unwrap().pattern.weight, 7);
    }

    #[test]
    fn history_empty_when_window_covers_pattern() {
        let kb = kb_with(vec![(9, vec![pattern(&[1, 44], 7)])], 100);
        let lsw = LiveSessionWindow::new(9, ids(&[1, 44]), &kb).unwrap();
        let (picks, matched) = recommend_from_history(&lsw, &kb);
        assert!(picks.is_empty());
        assert!(matched.is_some());
    }

    #[test]
    fn unknown_user_gets_empty_history_part() {
        let kb = kb_with(vec![(9, vec![pattern(&[1, 2], 5)])], 100);
        let lsw = LiveSessionWindow::new(777, ids(&[1]), &kb).unwrap();
        let (picks, matched) = recommend_from_history(&lsw, &kb);
        assert!(picks.is_empty());
        assert!(matched.is_none());
    }

    #[test]
    fn unvisited_requires_shared_page() {
        // No other user's pattern shares a window page: empty with flag.
        let kb = kb_with(
            vec![(9, vec![pattern(&[1, 2], 5)]), (89, vec![pattern(&[50, 51], 9)])],
            100,
        );
        let lsw = LiveSessionWindow::new(9, ids(&[1, 2]), &kb).unwrap();
        let (picks, matched) = recommend_unvisited(&lsw, &kb);
        assert!(picks.is_empty());
        assert!(matched.is_none());
        let list = recommend(&lsw, &kb, &Config::default());
        assert!(list.no_unvisited());
        assert!(list.to_text(2).contains("Sorry !!! No Recommendation List (compared to other user patterns)"));
    }

    #[test]
    fn unvisited_removes_window_and_common_pages() {
        let kb = kb_with(
            vec![(9, vec![]), (12, vec![pattern(&[44, 59, 31, 20, 86], 6)])],
            100,
        );
        let lsw = LiveSessionWindow::new(9, ids(&[44]), &kb).unwrap();
        let (picks, matched) = recommend_unvisited(&lsw, &kb);
        assert_eq!(picks, ids(&[59, 31, 20, 86]));
        assert_eq!(matched.unwrap().source_user, 12);
    }

    #[test]
    fn combined_list_mirrors_two_table_layout() {
        // History gives three pages, the other-user part five, with overlap
        // across parts permitted.
        let kb = kb_with(
            vec![
                (9, vec![pattern(&[1, 44, 6, 31, 19], 6)]),
                (89, vec![pattern(&[1, 44, 59, 31, 20, 86], 5)]),
            ],
            100,
        );
        let lsw = LiveSessionWindow::new(9, ids(&[1, 6]), &kb).unwrap();
        let list = recommend(&lsw, &kb, &Config::default());
        let history: Vec<PageId> = list.history.iter().map(|(id, _)| *id).collect();
        let unvisited: Vec<PageId> = list.unvisited.iter().map(|(id, _)| *id).collect();
        assert_eq!(history, ids(&[44, 31, 19]));
        assert_eq!(unvisited, ids(&[44, 59, 31, 20, 86]));
        // Pages 44 and 31 legitimately appear in both parts.
        assert!(history.iter().filter(|id| unvisited.contains(id)).count() >= 2);
        for (id, uri) in list.history.iter().chain(&list.unvisited) {
            assert_eq!(kb.registry.reverse(*id), Some(uri.as_str()));
        }

        let dedupe_cfg = Config { dedupe_across_parts: true, ..Config::default() };
        let deduped = recommend(&lsw, &kb, &dedupe_cfg);
        let unvisited: Vec<PageId> = deduped.unvisited.iter().map(|(id, _)| *id).collect();
        assert_eq!(unvisited, ids(&[59, 20, 86]));
    }

    #[test]
    fn both_parts_empty_is_a_valid_list() {
        let kb = kb_with(vec![(3, vec![pattern(&[7, 8], 4)])], 100);
        let lsw = LiveSessionWindow::new(777, ids(&[1]), &kb).unwrap();
        let list = recommend(&lsw, &kb, &Config::default());
        assert!(list.is_empty());
        let tsv = list.to_tsv();
        assert!(tsv.ends_with("#flags\tno_history=true\tno_unvisited=true\n"));
    }

    fn subsequence_of(needle: &[PageId], hay: &[PageId]) -> bool {
        let mut it = hay.iter();
        needle.iter().all(|x| it.any(|y| y == x))
    }

    // Exhaustive LCS length by enumerating every subsequence of `a` and
    // testing it against `b`. Independent of the DP implementation.
    fn brute_force_lcs_len(a: &[PageId], b: &[PageId]) -> usize {
        let mut best = 0;
        for mask in 0u32..(1 << a.len()) {
            let candidate: Vec<PageId> =
                a.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, &x)| x).collect();
            if candidate.len() > best && subsequence_of(&candidate, b) {
                best = candidate.len();
            }
        }
        best
    }

    proptest! {
        #[test]
        fn lcs_matches_brute_force(
            a in proptest::collection::vec(1u32..=4, 0..=10),
            b in proptest::collection::vec(1u32..=4, 0..=10),
        ) {
            let a = ids(&a);
            let b = ids(&b);
            let got = lcs(&a, &b);
            prop_assert!(subsequence_of(&got, &a));
            prop_assert!(subsequence_of(&got, &b));
            prop_assert_eq!(got.len(), brute_force_lcs_len(&a, &b));
        }
    }

    fn arb_pattern(pages: u32) -> impl Strategy<Value = NavigationPattern> {
        (proptest::collection::btree_set(1u32..=pages, 2..=6), 1u32..=9).prop_map(|(set, weight)| {
            NavigationPattern { path: set.into_iter().map(pid).collect(), weight }
        })
    }

    proptest! {
        // Soundness: no window page is recommended, every recommended page
        // comes from the matched pattern, no within-part duplicates, and
        // repetition is byte-identical.
        #[test]
        fn recommendation_soundness(
            own in proptest::collection::vec(arb_pattern(12), 0..5),
            other in proptest::collection::vec(arb_pattern(12), 0..5),
            window_pages in proptest::collection::vec(1u32..=12, 1..=4),
        ) {
            let kb = kb_with(vec![(1, own), (2, other)], 12);
            let lsw = LiveSessionWindow::new(1, ids(&window_pages), &kb).unwrap();
            let cfg = Config::default();
            let list = recommend(&lsw, &kb, &cfg);

            for (part, matched) in [
                (&list.history, &list.matched_history),
                (&list.unvisited, &list.matched_unvisited),
            ] {
                let mut seen = BTreeSet::new();
                for (id, _) in part.iter() {
                    prop_assert!(!lsw.pages.contains(id));
                    prop_assert!(seen.insert(*id), "duplicate {id} within a part");
                    let matched = matched.as_ref().expect("non-empty part has a source pattern");
                    prop_assert!(matched.pattern.path.contains(id));
                }
            }

            let again = recommend(&lsw, &kb, &cfg);
            prop_assert_eq!(again.to_tsv(), list.to_tsv());
            prop_assert_eq!(again.to_text(lsw.pages.len()), list.to_text(lsw.pages.len()));
        }

        // Adding a pattern never lowers the selected candidate's
        // (lcs length, weight) score pair.
        #[test]
        fn candidate_score_is_monotone(
            own in proptest::collection::vec(arb_pattern(12), 0..5),
            extra in arb_pattern(12),
            window_pages in proptest::collection::vec(1u32..=12, 1..=4),
        ) {
            let kb = kb_with(vec![(1, own.clone())], 12);
            let lsw = LiveSessionWindow::new(1, ids(&window_pages), &kb).unwrap();
            let score = |kb: &KnowledgeBase| -> (usize, u32) {
                match recommend_from_history(&lsw, kb).1 {
                    Some(m) => (lcs(&m.pattern.path, &lsw.pages).len(), m.pattern.weight),
                    None => (0, 0),
                }
            };
            let before = score(&kb);
            let mut grown = own;
            grown.push(extra);
            let kb2 = kb_with(vec![(1, grown)], 12);
            prop_assert!(score(&kb2) >= before);
        }
    }
}

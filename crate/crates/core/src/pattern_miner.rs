//! Navigation pattern mining: per-session undirected weighted graphs,
//! depth-first enumeration of simple paths, weight pruning, and per-user
//! pattern clusters.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::config::Config;
use crate::page_registry::PageId;
use crate::preprocess::{group_by_session, SessionRow};

/// Header of a serialized pattern-cluster section.
pub const PATTERNS_HEADER: &str = "#patterns v1";

/// Undirected weighted graph of one user session. Edge weight is the
/// occurrence frequency of the (referrer, page) pair, both orientations
/// counted as one edge. Self loops are dropped and counted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionGraph {
    vertices: BTreeSet<PageId>,
    edges: BTreeMap<(PageId, PageId), u32>,
    pub self_loops_dropped: u32,
}

impl SessionGraph {
    pub fn new() -> SessionGraph {
        SessionGraph::default()
    }

    fn key(a: PageId, b: PageId) -> (PageId, PageId) {
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    pub fn add_vertex(&mut self, v: PageId) {
        self.vertices.insert(v);
    }

    /// Records one (referrer, page) transition, incrementing the undirected
    /// edge weight. A transition onto the same page is dropped.
    pub fn add_transition(&mut self, referer: PageId, page: PageId) {
        self.vertices.insert(page);
        self.vertices.insert(referer);
        if referer == page {
            self.self_loops_dropped += 1;
            return;
        }
        *self.edges.entry(SessionGraph::key(referer, page)).or_insert(0) += 1;
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> impl Iterator<Item = PageId> + '_ {
        self.vertices.iter().copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (PageId, PageId, u32)> + '_ {
        self.edges.iter().map(|(&(a, b), &w)| (a, b, w))
    }

    pub fn weight(&self, a: PageId, b: PageId) -> Option<u32> {
        self.edges.get(&SessionGraph::key(a, b)).copied()
    }
}

/// A simple path through a session graph with its total edge weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NavigationPattern {
    /// Ordered page ids, length >= 2, all distinct.
    pub path: Vec<PageId>,
    /// Sum of edge weights along the path.
    pub weight: u32,
}

/// Retained navigation patterns of one user, deterministically sorted by
/// weight descending, then path length descending, then path order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PatternCluster {
    pub user_id: u32,
    pub patterns: Vec<NavigationPattern>,
}

impl PatternCluster {
    /// Applies the deterministic cluster ordering.
    pub fn canonical_sort(&mut self) {
        self.patterns.sort_by(pattern_order);
    }
}

#[derive(Debug, Error)]
pub enum MinerError {
    #[error("session graph has {vertices} vertices, over the {cap} cap; split the session before mining")]
    GraphTooLarge { vertices: usize, cap: usize },
    #[error("patterns TSV line {line}: {msg}")]
    Malformed { line: usize, msg: String },
}

fn pattern_order(a: &NavigationPattern, b: &NavigationPattern) -> Ordering {
    b.weight
        .cmp(&a.weight)
        .then(b.path.len().cmp(&a.path.len()))
        .then(a.path.cmp(&b.path))
}

/// Builds the undirected session graph from one session's rows. Records
/// with no referrer contribute a vertex but no edge.
pub fn build_session_graph(rows: &[&SessionRow]) -> SessionGraph {
    let mut graph = SessionGraph::new();
    for row in rows {
        graph.add_vertex(row.page_id);
        if let Some(referer) = row.referer_page_id {
            graph.add_transition(referer, row.page_id);
        }
    }
    graph
}

/// Enumerates all retained navigation patterns of a graph: every simple
/// path (distinct vertices, length >= 2) from every start vertex, each
/// undirected path emitted once in its lexicographically smaller
/// orientation, pruned below the minimum total weight.
pub fn enumerate_patterns(graph: &SessionGraph, config: &Config) -> Result<Vec<NavigationPattern>, MinerError> {
    if graph.vertex_count() > config.max_graph_vertices {
        return Err(MinerError::GraphTooLarge {
            vertices: graph.vertex_count(),
            cap: config.max_graph_vertices,
        });
    }

    let mut adjacency: BTreeMap<PageId, Vec<(PageId, u32)>> = BTreeMap::new();
    for (a, b, w) in graph.edges() {
        adjacency.entry(a).or_default().push((b, w));
        adjacency.entry(b).or_default().push((a, w));
    }

    let min_vertices = config.min_vertices.max(2);
    let mut patterns = Vec::new();
    let mut path = Vec::new();
    let mut on_path = BTreeSet::new();
    for start in graph.vertices() {
        path.push(start);
        on_path.insert(start);
        extend_path(&adjacency, &mut path, &mut on_path, 0, min_vertices, config.min_weight, &mut patterns);
        path.pop();
        on_path.remove(&start);
    }
    patterns.sort_by(pattern_order);
    Ok(patterns)
}

fn extend_path(
    adjacency: &BTreeMap<PageId, Vec<(PageId, u32)>>,
    path: &mut Vec<PageId>,
    on_path: &mut BTreeSet<PageId>,
    weight: u32,
    min_vertices: usize,
    min_weight: u32,
    patterns: &mut Vec<NavigationPattern>,
) {
    let last = *path.last().expect("path never empty");
    let Some(neighbors) = adjacency.get(&last) else { return };
    for &(next, w) in neighbors {
        if on_path.contains(&next) {
            continue;
        }
        path.push(next);
        on_path.insert(next);
        let total = weight + w;
        // A path and its reversal are one undirected pattern; keep the
        // orientation whose endpoints compare smaller.
        if path.len() >= min_vertices && path[0] < next && total >= min_weight {
            patterns.push(NavigationPattern { path: path.clone(), weight: total });
        }
        extend_path(adjacency, path, on_path, total, min_vertices, min_weight, patterns);
        path.pop();
        on_path.remove(&next);
    }
}

/// Merges one user's per-session patterns into a cluster: identical paths
/// keep the maximum weight, then the deterministic sort order applies.
pub fn cluster_user_patterns(
    user_id: u32,
    sessions: &[Vec<&SessionRow>],
    config: &Config,
) -> Result<PatternCluster, MinerError> {
    let mut best: BTreeMap<Vec<PageId>, u32> = BTreeMap::new();
    for rows in sessions {
        let graph = build_session_graph(rows);
        for pattern in enumerate_patterns(&graph, config)? {
            let entry = best.entry(pattern.path).or_insert(0);
            *entry = (*entry).max(pattern.weight);
        }
    }
    let patterns: Vec<NavigationPattern> =
        best.into_iter().map(|(path, weight)| NavigationPattern { path, weight }).collect();
    let mut cluster = PatternCluster { user_id, patterns };
    cluster.canonical_sort();
    Ok(cluster)
}

/// Mines clusters for every user present in the rows.
pub fn mine_clusters(rows: &[SessionRow], config: &Config) -> Result<BTreeMap<u32, PatternCluster>, MinerError> {
    let mut per_user: BTreeMap<u32, Vec<Vec<&SessionRow>>> = BTreeMap::new();
    for ((user_id, _), session_rows) in group_by_session(rows) {
        per_user.entry(user_id).or_default().push(session_rows);
    }
    let mut clusters = BTreeMap::new();
    for (user_id, sessions) in per_user {
        clusters.insert(user_id, cluster_user_patterns(user_id, &sessions, config)?);
    }
    Ok(clusters)
}

/// Fraction of distinct page ids viewed by the user that appear in at least
/// one retained pattern. An empty view set has coverage 1.0; the complement
/// is the outlier fraction.
pub fn coverage(cluster: &PatternCluster, user_rows: &[&SessionRow]) -> f64 {
    let viewed: BTreeSet<PageId> = user_rows.iter().map(|r| r.page_id).collect();
    if viewed.is_empty() {
        return 1.0;
    }
    let in_patterns: BTreeSet<PageId> =
        cluster.patterns.iter().flat_map(|p| p.path.iter().copied()).collect();
    let covered = viewed.iter().filter(|id| in_patterns.contains(id)).count();
    covered as f64 / viewed.len() as f64
}

fn render_path(path: &[PageId]) -> String {
    path.iter().map(PageId::to_string).collect::<Vec<_>>().join(",")
}

/// Serializes clusters as a TSV section:
/// `user_id<TAB>pattern_index<TAB>comma-joined page ids<TAB>weight`.
pub fn clusters_to_tsv(clusters: &BTreeMap<u32, PatternCluster>) -> String {
    let mut out = String::new();
    out.push_str(PATTERNS_HEADER);
    out.push('\n');
    for cluster in clusters.values() {
        for (i, pattern) in cluster.patterns.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                cluster.user_id,
                i + 1,
                render_path(&pattern.path),
                pattern.weight
            ));
        }
    }
    out
}

/// Parses the output of [`clusters_to_tsv`], re-validating index density
/// and the cluster sort order.
pub fn clusters_from_tsv(text: &str) -> Result<BTreeMap<u32, PatternCluster>, MinerError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == PATTERNS_HEADER => {}
        other => {
            return Err(MinerError::Malformed {
                line: 1,
                msg: format!("expected {PATTERNS_HEADER:?}, found {:?}", other.map(|(_, l)| l)),
            })
        }
    }
    let mut clusters: BTreeMap<u32, PatternCluster> = BTreeMap::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(MinerError::Malformed {
                line: i + 1,
                msg: format!("expected 4 columns, found {}", cols.len()),
            });
        }
        let bad = |msg: String| MinerError::Malformed { line: i + 1, msg };
        let user_id: u32 = cols[0].parse().map_err(|_| bad(format!("bad user_id {:?}", cols[0])))?;
        let index: usize = cols[1].parse().map_err(|_| bad(format!("bad pattern_index {:?}", cols[1])))?;
        let weight: u32 = cols[3].parse().map_err(|_| bad(format!("bad weight {:?}", cols[3])))?;
        let path = cols[2]
            .split(',')
            .map(|s| s.parse::<PageId>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad(e.to_string()))?;
        if path.len() < 2 {
            return Err(bad("pattern shorter than 2 pages".to_string()));
        }
        let cluster = clusters.entry(user_id).or_insert_with(|| PatternCluster { user_id, patterns: Vec::new() });
        if index != cluster.patterns.len() + 1 {
            return Err(bad(format!(
                "pattern_index {index} out of sequence for user {user_id} (expected {})",
                cluster.patterns.len() + 1
            )));
        }
        let pattern = NavigationPattern { path, weight };
        if let Some(prev) = cluster.patterns.last() {
            if pattern_order(prev, &pattern) == Ordering::Greater {
                return Err(bad(format!("cluster for user {user_id} is not in canonical order")));
            }
        }
        cluster.patterns.push(pattern);
    }
    Ok(clusters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pid(n: u32) -> PageId {
        PageId::new(n).unwrap()
    }

    fn row(user: u32, session: u32, ts: i64, page: u32, referer: Option<u32>) -> SessionRow {
        SessionRow {
            session_id: session,
            user_id: user,
            timestamp: ts,
            page: format!("/p{page}.asp"),
            referer_page: referer.map_or("-".to_string(), |r| format!("/p{r}.asp")),
            page_id: pid(page),
            referer_page_id: referer.map(pid),
        }
    }

    fn graph_of(edges: &[(u32, u32, u32)]) -> SessionGraph {
        let mut g = SessionGraph::new();
        for &(a, b, w) in edges {
            for _ in 0..w {
                g.add_transition(pid(a), pid(b));
            }
        }
        g
    }

    #[test]
    fn transitions_accumulate_undirected_weights() {
        // a->b, b->c, a->b
        let mut g = SessionGraph::new();
        g.add_transition(pid(1), pid(2));
        g.add_transition(pid(2), pid(3));
        g.add_transition(pid(1), pid(2));
        assert_eq!(g.weight(pid(1), pid(2)), Some(2));
        assert_eq!(g.weight(pid(2), pid(3)), Some(1));
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn orientations_merge_into_one_edge() {
        let mut g = SessionGraph::new();
        g.add_transition(pid(1), pid(2));
        g.add_transition(pid(2), pid(1));
        assert_eq!(g.weight(pid(1), pid(2)), Some(2));
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn dash_referer_contributes_vertex_only() {
        let rows = [row(1, 1, 0, 7, None)];
        let refs: Vec<&SessionRow> = rows.iter().collect();
        let g = build_session_graph(&refs);
        assert_eq!(g.vertex_count(), 1);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn self_loops_dropped_and_counted() {
        let mut g = SessionGraph::new();
        g.add_transition(pid(4), pid(4));
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.self_loops_dropped, 1);
        assert_eq!(g.vertex_count(), 1);
    }

    #[test]
    fn pruning_keeps_only_heavy_paths() {
        // a-b (2), b-c (2): [a,b,c] has weight 4; [a,b] and [b,c] prune at 2.
        let g = graph_of(&[(1, 2, 2), (2, 3, 2)]);
        let patterns = enumerate_patterns(&g, &Config::default()).unwrap();
        assert_eq!(patterns.len(), 1);
        assert_eq!(patterns[0].path, vec![pid(1), pid(2), pid(3)]);
        assert_eq!(patterns[0].weight, 4);
    }

    #[test]
    fn empty_graph_yields_no_patterns() {
        let g = SessionGraph::new();
        assert!(enumerate_patterns(&g, &Config::default()).unwrap().is_empty());
    }

    #[test]
    fn sub_paths_are_independent_patterns() {
        // Chain where the full path weighs 7 and the tail sub-path weighs 6:
        // both are retained as independent patterns.
        let g = graph_of(&[(1, 44, 1), (44, 6, 3), (6, 31, 1), (31, 19, 1), (19, 62, 1)]);
        let patterns = enumerate_patterns(&g, &Config::default()).unwrap();
        let full = patterns.iter().find(|p| p.path == vec![pid(1), pid(44), pid(6), pid(31), pid(19), pid(62)]);
        assert_eq!(full.unwrap().weight, 7);
        // Tail chain 44,6,31,19,62: endpoints 44 and 62, kept in this orientation.
        let tail = patterns.iter().find(|p| p.path == vec![pid(44), pid(6), pid(31), pid(19), pid(62)]);
        assert_eq!(tail.unwrap().weight, 6);
    }

    #[test]
    fn reversals_emitted_once_smaller_orientation() {
        let g = graph_of(&[(5, 2, 3)]);
        let patterns = enumerate_patterns(&g, &Config::default()).unwrap();
        assert_eq!(patterns.len(), 1);
        assert_eq!(patterns[0].path, vec![pid(2), pid(5)]);
    }

    #[test]
    fn min_vertices_prunes_short_paths() {
        let cfg = Config { min_vertices: 3, ..Config::default() };
        let g = graph_of(&[(1, 2, 5), (2, 3, 5)]);
        let patterns = enumerate_patterns(&g, &cfg).unwrap();
        assert_eq!(patterns.len(), 1);
        assert_eq!(patterns[0].path.len(), 3);
    }

    #[test]
    fn vertex_cap_is_enforced() {
        let cfg = Config { max_graph_vertices: 3, ..Config::default() };
        let g = graph_of(&[(1, 2, 1), (2, 3, 1), (3, 4, 1)]);
        match enumerate_patterns(&g, &cfg) {
            Err(MinerError::GraphTooLarge { vertices: 4, cap: 3 }) => {}
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn cluster_dedup_keeps_max_weight() {
        // Two sessions with the same chain, traversed 5 and 7 times.
        let mut rows = Vec::new();
        for (session, reps) in [(1u32, 5i64), (2, 7)] {
            for rep in 0..reps {
                let base = (session as i64) * 100_000 + rep * 10;
                rows.push(row(1, session, base, 1, None));
                rows.push(row(1, session, base + 1, 2, Some(1)));
            }
        }
        let grouped = group_by_session(&rows);
        let sessions: Vec<Vec<&SessionRow>> = grouped.into_values().collect();
        let cluster = cluster_user_patterns(1, &sessions, &Config::default()).unwrap();
        assert_eq!(cluster.patterns.len(), 1);
        assert_eq!(cluster.patterns[0].weight, 7);
    }

    #[test]
    fn empty_cluster_is_valid() {
        let rows = [row(9, 1, 0, 1, None)];
        let refs: Vec<&SessionRow> = rows.iter().collect();
        let cluster = cluster_user_patterns(9, &[refs], &Config::default()).unwrap();
        assert!(cluster.patterns.is_empty());
    }

    #[test]
    fn coverage_definition() {
        let cluster = PatternCluster {
            user_id: 1,
            patterns: vec![NavigationPattern { path: vec![pid(1), pid(2)], weight: 3 }],
        };
        let rows = [row(1, 1, 0, 1, None), row(1, 1, 1, 2, Some(1))];
        let refs: Vec<&SessionRow> = rows.iter().collect();
        assert_eq!(coverage(&cluster, &refs), 1.0);

        let mut ten = Vec::new();
        for p in 1..=10 {
            ten.push(row(1, 1, p as i64, p, None));
        }
        let refs: Vec<&SessionRow> = ten.iter().collect();
        let nine_covered = PatternCluster {
            user_id: 1,
            patterns: vec![NavigationPattern { path: (1..=9).map(pid).collect(), weight: 9 }],
        };
        assert!((coverage(&nine_covered, &refs) - 0.9).abs() < 1e-12);

        assert_eq!(coverage(&PatternCluster::default(), &[]), 1.0);
    }

    #[test]
    fn clusters_tsv_round_trip_and_order_check() {
        let mut rows = Vec::new();
        for rep in 0..3i64 {
            rows.push(row(9, 1, rep * 10, 1, None));
            rows.push(row(9, 1, rep * 10 + 1, 2, Some(1)));
            rows.push(row(9, 1, rep * 10 + 2, 3, Some(2)));
        }
        let clusters = mine_clusters(&rows, &Config::default()).unwrap();
        let tsv = clusters_to_tsv(&clusters);
        let back = clusters_from_tsv(&tsv).unwrap();
        assert_eq!(back, clusters);
        assert_eq!(clusters_to_tsv(&back), tsv);

        let tampered = tsv.replace("\t1\t", "\t9\t");
        assert!(clusters_from_tsv(&tampered).is_err());
    }

    // Exhaustive generate-then-test enumeration: every sequence of distinct
    // vertices is checked against the edge set. Independent of the DFS.
    fn brute_force(graph: &SessionGraph, config: &Config) -> BTreeSet<(Vec<PageId>, u32)> {
        let vertices: Vec<PageId> = graph.vertices().collect();
        let mut found = BTreeSet::new();
        let mut seq: Vec<PageId> = Vec::new();
        fn recurse(
            vertices: &[PageId],
            graph: &SessionGraph,
            config: &Config,
            seq: &mut Vec<PageId>,
            found: &mut BTreeSet<(Vec<PageId>, u32)>,
        ) {
            if seq.len() >= config.min_vertices.max(2) && seq[0] < *seq.last().unwrap() {
                let mut weight = 0u32;
                let mut connected = true;
                for pair in seq.windows(2) {
                    match graph.weight(pair[0], pair[1]) {
                        Some(w) => weight += w,
                        None => {
                            connected = false;
                            break;
                        }
                    }
                }
                if connected && weight >= config.min_weight {
                    found.insert((seq.clone(), weight));
                }
            }
            if seq.len() == vertices.len() {
                return;
            }
            for &v in vertices {
                if !seq.contains(&v) {
                    seq.push(v);
                    recurse(vertices, graph, config, seq, found);
                    seq.pop();
                }
            }
        }
        recurse(&vertices, graph, config, &mut seq, &mut found);
        found
    }

    fn arb_graph() -> impl Strategy<Value = SessionGraph> {
        // Up to 7 vertices with random weighted edges.
        (2usize..=7)
            .prop_flat_map(|n| {
                proptest::collection::vec((0..n, 0..n, 1u32..=5), 0..=(n * (n - 1) / 2))
                    .prop_map(move |edges| (n, edges))
            })
            .prop_map(|(n, edges)| {
                let mut g = SessionGraph::new();
                for v in 0..n {
                    g.add_vertex(pid(v as u32 + 1));
                }
                for (a, b, w) in edges {
                    if a != b {
                        for _ in 0..w {
                            g.add_transition(pid(a as u32 + 1), pid(b as u32 + 1));
                        }
                    }
                }
                g
            })
    }

    proptest! {
        #[test]
        fn dfs_matches_brute_force(graph in arb_graph()) {
            let cfg = Config::default();
            let mined: BTreeSet<(Vec<PageId>, u32)> = enumerate_patterns(&graph, &cfg)
                .unwrap()
                .into_iter()
                .map(|p| (p.path, p.weight))
                .collect();
            prop_assert_eq!(mined, brute_force(&graph, &cfg));
        }

        #[test]
        fn raising_min_weight_never_adds_patterns(graph in arb_graph()) {
            let lo = Config { min_weight: 2, ..Config::default() };
            let hi = Config { min_weight: 4, ..Config::default() };
            let loose: BTreeSet<Vec<PageId>> =
                enumerate_patterns(&graph, &lo).unwrap().into_iter().map(|p| p.path).collect();
            let strict: BTreeSet<Vec<PageId>> =
                enumerate_patterns(&graph, &hi).unwrap().into_iter().map(|p| p.path).collect();
            prop_assert!(strict.is_subset(&loose));
        }

        #[test]
        fn pattern_weights_recompute(graph in arb_graph()) {
            for pattern in enumerate_patterns(&graph, &Config::default()).unwrap() {
                let sum: u32 = pattern
                    .path
                    .windows(2)
                    .map(|pair| graph.weight(pair[0], pair[1]).expect("path edges exist"))
                    .sum();
                prop_assert_eq!(sum, pattern.weight);
                let distinct: BTreeSet<PageId> = pattern.path.iter().copied().collect();
                prop_assert_eq!(distinct.len(), pattern.path.len());
            }
        }
    }

    #[test]
    fn identical_rows_serialize_identically() {
        let mut rows = Vec::new();
        for rep in 0..4i64 {
            rows.push(row(3, 1, rep * 10, 2, None));
            rows.push(row(3, 1, rep * 10 + 1, 5, Some(2)));
            rows.push(row(3, 1, rep * 10 + 2, 4, Some(5)));
        }
        let a = clusters_to_tsv(&mine_clusters(&rows, &Config::default()).unwrap());
        let b = clusters_to_tsv(&mine_clusters(&rows, &Config::default()).unwrap());
        assert_eq!(a, b);
    }
}

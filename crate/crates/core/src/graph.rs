//! Directed weighted graph over websites, with domain normalization and
//! merge-by-sum edge semantics.
//!
//! Graphs are built through [`EcosystemGraphBuilder`] (single writer) and are
//! immutable after [`EcosystemGraphBuilder::finish`], so finished graphs can be
//! shared freely across threads for read-only queries.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

/// Dense node index, assigned in first-mention order.
pub type NodeId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    /// The raw string normalizes to an empty domain.
    #[error("rejected record: {raw:?} is empty after domain normalization")]
    UnnormalizableDomain { raw: String },
    #[error("edge weight must be positive and finite, got {0}")]
    InvalidWeight(f64),
    #[error("unknown node id {0}")]
    NodeNotFound(NodeId),
}

/// Normalize a raw site string to a bare domain: lowercase, scheme-free,
/// no `www.` prefix, no path/query/port, no trailing dot.
pub fn normalize_domain(raw: &str) -> Result<String, GraphError> {
    let mut s = raw.trim().to_ascii_lowercase();
    if let Some(idx) = s.find("://") {
        s = s[idx + 3..].to_string();
    }
    if let Some(idx) = s.find(|c| c == '/' || c == '?' || c == '#') {
        s.truncate(idx);
    }
    if let Some(idx) = s.find(':') {
        s.truncate(idx);
    }
    if let Some(rest) = s.strip_prefix("www.") {
        s = rest.to_string();
    }
    let s = s.trim_end_matches('.').to_string();
    if s.is_empty() {
        return Err(GraphError::UnnormalizableDomain {
            raw: raw.to_string(),
        });
    }
    Ok(s)
}

/// A website in the ecosystem.
#[derive(Debug, Clone, PartialEq)]
pub struct WebsiteNode {
    pub id: NodeId,
    /// Normalized domain (see [`normalize_domain`]).
    pub domain: String,
    /// Weighted in-degree + weighted out-degree, set at finalization.
    pub node_weight: f64,
    pub is_seed: bool,
    /// 0 for seeds (and directly ingested nodes), otherwise the sampling wave
    /// that discovered the site.
    pub wave: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegreeMode {
    In,
    Out,
    Total,
}

/// Immutable directed weighted graph. Parallel edges are merged by weight
/// summation at construction; self-loops exist only on aggregated community
/// graphs, never on ingested site graphs.
#[derive(Debug, Clone, Default)]
pub struct EcosystemGraph {
    nodes: Vec<WebsiteNode>,
    index: HashMap<String, NodeId>,
    out_adj: Vec<BTreeMap<NodeId, f64>>,
    in_adj: Vec<BTreeMap<NodeId, f64>>,
    edge_count: usize,
    total_weight: f64,
}

impl EcosystemGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Count of merged directed edges.
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Sum of all edge weights (the `m` of the modularity formula).
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// `(order, size, total_weight)`.
    pub fn graph_size(&self) -> (usize, usize, f64) {
        (self.nodes.len(), self.edge_count, self.total_weight)
    }

    pub fn node(&self, id: NodeId) -> Result<&WebsiteNode, GraphError> {
        self.nodes.get(id).ok_or(GraphError::NodeNotFound(id))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &WebsiteNode> {
        self.nodes.iter()
    }

    pub fn node_id(&self, domain: &str) -> Option<NodeId> {
        self.index.get(domain).copied()
    }

    /// Outgoing edges of `id` in ascending target order.
    pub fn successors(&self, id: NodeId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.out_adj[id].iter().map(|(&v, &w)| (v, w))
    }

    /// Incoming edges of `id` in ascending source order.
    pub fn predecessors(&self, id: NodeId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.in_adj[id].iter().map(|(&u, &w)| (u, w))
    }

    /// All edges in ascending `(src, dst)` order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.out_adj
            .iter()
            .enumerate()
            .flat_map(|(u, targets)| targets.iter().map(move |(&v, &w)| (u, v, w)))
    }

    pub fn degree(&self, id: NodeId, mode: DegreeMode, weighted: bool) -> Result<f64, GraphError> {
        if id >= self.nodes.len() {
            return Err(GraphError::NodeNotFound(id));
        }
        let count = |adj: &BTreeMap<NodeId, f64>| -> f64 {
            if weighted {
                adj.values().sum()
            } else {
                adj.len() as f64
            }
        };
        Ok(match mode {
            DegreeMode::In => count(&self.in_adj[id]),
            DegreeMode::Out => count(&self.out_adj[id]),
            DegreeMode::Total => count(&self.in_adj[id]) + count(&self.out_adj[id]),
        })
    }

    /// Subgraph induced by the nodes satisfying `keep`. Node weights are
    /// recomputed on the subgraph; ids are re-densified preserving order.
    pub fn induced_subgraph<F: Fn(&WebsiteNode) -> bool>(&self, keep: F) -> EcosystemGraph {
        let mut builder = EcosystemGraphBuilder::new();
        let mut retained = vec![false; self.nodes.len()];
        for node in &self.nodes {
            if keep(node) {
                retained[node.id] = true;
                builder.insert_node(node.domain.clone(), node.wave, node.is_seed);
            }
        }
        for (u, v, w) in self.edges() {
            if retained[u] && retained[v] {
                builder.add_edge_raw(
                    self.nodes[u].domain.clone(),
                    self.nodes[v].domain.clone(),
                    w,
                );
            }
        }
        builder.finish()
    }

    /// Build a graph directly from pre-normalized parts. Self-loops are
    /// allowed here; this is how community-level graphs carry their
    /// intra-community weight.
    pub(crate) fn from_parts(
        node_specs: Vec<(String, u32, bool)>,
        edges: &[(NodeId, NodeId, f64)],
    ) -> EcosystemGraph {
        let mut builder = EcosystemGraphBuilder::new();
        for (domain, wave, is_seed) in node_specs {
            builder.insert_node(domain, wave, is_seed);
        }
        for &(u, v, w) in edges {
            let src = builder.graph.nodes[u].domain.clone();
            let dst = builder.graph.nodes[v].domain.clone();
            builder.add_edge_raw(src, dst, w);
        }
        builder.finish()
    }
}

/// Single-writer construction handle for [`EcosystemGraph`].
#[derive(Debug, Default)]
pub struct EcosystemGraphBuilder {
    graph: EcosystemGraph,
    dropped_self_loops: usize,
}

impl EcosystemGraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record one user transition. Domains are normalized, nodes created on
    /// first mention, and repeated `(src, dst)` pairs merge by weight
    /// summation. A transition that normalizes to a self-loop is dropped and
    /// counted, not stored.
    ///
    /// Returns the `(src, dst)` node pair, or `None` when dropped.
    pub fn add_transition(
        &mut self,
        src_raw: &str,
        dst_raw: &str,
        weight: f64,
    ) -> Result<Option<(NodeId, NodeId)>, GraphError> {
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(GraphError::InvalidWeight(weight));
        }
        let src = normalize_domain(src_raw)?;
        let dst = normalize_domain(dst_raw)?;
        if src == dst {
            self.dropped_self_loops += 1;
            return Ok(None);
        }
        Ok(Some(self.add_edge_raw(src, dst, weight)))
    }

    /// Create the node for `domain` if absent, without touching edges.
    pub fn ensure_node(&mut self, domain: &str) -> Result<NodeId, GraphError> {
        let domain = normalize_domain(domain)?;
        Ok(self.insert_node(domain, 0, true))
    }

    /// Create or update a node's sampling provenance.
    pub fn mark_origin(&mut self, domain: &str, wave: u32, is_seed: bool) -> Result<NodeId, GraphError> {
        let domain = normalize_domain(domain)?;
        let id = self.insert_node(domain, wave, is_seed);
        self.graph.nodes[id].wave = wave;
        self.graph.nodes[id].is_seed = is_seed;
        Ok(id)
    }

    /// Count of transitions dropped as self-loops so far.
    pub fn dropped_self_loops(&self) -> usize {
        self.dropped_self_loops
    }

    /// Finalize: compute node weights and freeze the graph.
    pub fn finish(mut self) -> EcosystemGraph {
        for id in 0..self.graph.nodes.len() {
            let w_in: f64 = self.graph.in_adj[id].values().sum();
            let w_out: f64 = self.graph.out_adj[id].values().sum();
            self.graph.nodes[id].node_weight = w_in + w_out;
        }
        self.graph
    }

    // Nodes first seen here default to wave 0 / seed, meaning "given
    // directly"; the sampler overrides discoveries via mark_origin.
    fn insert_node(&mut self, domain: String, wave: u32, is_seed: bool) -> NodeId {
        if let Some(&id) = self.graph.index.get(&domain) {
            return id;
        }
        let id = self.graph.nodes.len();
        self.graph.index.insert(domain.clone(), id);
        self.graph.nodes.push(WebsiteNode {
            id,
            domain,
            node_weight: 0.0,
            is_seed,
            wave,
        });
        self.graph.out_adj.push(BTreeMap::new());
        self.graph.in_adj.push(BTreeMap::new());
        id
    }

    fn add_edge_raw(&mut self, src: String, dst: String, weight: f64) -> (NodeId, NodeId) {
        let u = self.insert_node(src, 0, true);
        let v = self.insert_node(dst, 0, true);
        let entry = self.graph.out_adj[u].entry(v).or_insert(0.0);
        if *entry == 0.0 {
            self.graph.edge_count += 1;
        }
        *entry += weight;
        *self.graph.in_adj[v].entry(u).or_insert(0.0) += weight;
        self.graph.total_weight += weight;
        (u, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 12 transitions over 5 sites; weights hand-sum to 24.0.
    pub(crate) const FIXTURE: &[(&str, &str, f64)] = &[
        ("a.ir", "b.ir", 2.0),
        ("a.ir", "c.ir", 3.0),
        ("b.ir", "c.ir", 1.5),
        ("c.ir", "a.ir", 4.0),
        ("c.ir", "d.ir", 2.5),
        ("d.ir", "e.ir", 1.0),
        ("e.ir", "a.ir", 0.5),
        ("b.ir", "d.ir", 2.0),
        ("d.ir", "a.ir", 3.5),
        ("e.ir", "b.ir", 1.25),
        ("c.ir", "e.ir", 2.0),
        ("b.ir", "e.ir", 0.75),
    ];

    fn fixture_graph() -> EcosystemGraph {
        let mut b = EcosystemGraphBuilder::new();
        for &(s, d, w) in FIXTURE {
            b.add_transition(s, d, w).unwrap();
        }
        b.finish()
    }

    #[test]
    fn normalization_strips_scheme_www_path_port() {
        assert_eq!(normalize_domain("HTTPS://WWW.Alibaba.IR/flights?q=1").unwrap(), "alibaba.ir");
        assert_eq!(normalize_domain("snapp.taxi:8080").unwrap(), "snapp.taxi");
        assert_eq!(normalize_domain("kojaro.com.").unwrap(), "kojaro.com");
        assert_eq!(normalize_domain("  a.ir/ ").unwrap(), "a.ir");
        assert!(matches!(
            normalize_domain("https:///"),
            Err(GraphError::UnnormalizableDomain { .. })
        ));
    }

    #[test]
    fn parallel_edges_merge_by_sum() {
        let mut b = EcosystemGraphBuilder::new();
        b.add_transition("a.ir", "b.ir", 2.0).unwrap();
        b.add_transition("a.ir", "b.ir", 3.0).unwrap();
        let g = b.finish();
        assert_eq!(g.edge_count(), 1);
        let (_, _, w) = g.edges().next().unwrap();
        assert_eq!(w, 5.0);
        assert_eq!(g.total_weight(), 5.0);
    }

    #[test]
    fn self_loop_after_normalization_is_dropped_and_counted() {
        let mut b = EcosystemGraphBuilder::new();
        let handle = b.add_transition("A.IR/", "a.ir", 1.0).unwrap();
        assert_eq!(handle, None);
        assert_eq!(b.dropped_self_loops(), 1);
        let g = b.finish();
        assert_eq!(g.graph_size(), (1, 0, 0.0));
    }

    #[test]
    fn fixture_total_weight_matches_hand_sum() {
        let g = fixture_graph();
        assert_eq!(g.total_weight(), 24.0);
        assert_eq!(g.node_count(), 5);
        assert_eq!(g.edge_count(), 12);
    }

    #[test]
    fn isolated_node_has_zero_degree_in_all_modes() {
        let mut b = EcosystemGraphBuilder::new();
        b.ensure_node("alone.ir").unwrap();
        let g = b.finish();
        for mode in [DegreeMode::In, DegreeMode::Out, DegreeMode::Total] {
            assert_eq!(g.degree(0, mode, true).unwrap(), 0.0);
            assert_eq!(g.degree(0, mode, false).unwrap(), 0.0);
        }
    }

    #[test]
    fn degree_weighted_vs_unweighted() {
        // in: {2}, out: {3, 5}
        let mut b = EcosystemGraphBuilder::new();
        b.add_transition("x.ir", "hub.ir", 2.0).unwrap();
        b.add_transition("hub.ir", "y.ir", 3.0).unwrap();
        b.add_transition("hub.ir", "z.ir", 5.0).unwrap();
        let g = b.finish();
        let hub = g.node_id("hub.ir").unwrap();
        assert_eq!(g.degree(hub, DegreeMode::Total, true).unwrap(), 10.0);
        assert_eq!(g.degree(hub, DegreeMode::Total, false).unwrap(), 3.0);
        assert_eq!(g.degree(hub, DegreeMode::In, true).unwrap(), 2.0);
        assert_eq!(g.degree(hub, DegreeMode::Out, false).unwrap(), 2.0);
    }

    #[test]
    fn unknown_node_degree_is_not_found() {
        let g = fixture_graph();
        assert_eq!(
            g.degree(99, DegreeMode::Total, true),
            Err(GraphError::NodeNotFound(99))
        );
    }

    #[test]
    fn fixture_degrees_match_flat_scan_oracle() {
        let g = fixture_graph();
        for node in g.nodes() {
            let mut w_in = 0.0;
            let mut w_out = 0.0;
            for &(s, d, w) in FIXTURE {
                if s == node.domain {
                    w_out += w;
                }
                if d == node.domain {
                    w_in += w;
                }
            }
            assert_eq!(g.degree(node.id, DegreeMode::In, true).unwrap(), w_in);
            assert_eq!(g.degree(node.id, DegreeMode::Out, true).unwrap(), w_out);
            assert_eq!(node.node_weight, w_in + w_out);
        }
    }

    #[test]
    fn graph_size_counts_directed_edges_separately() {
        let g = EcosystemGraph::default();
        assert_eq!(g.graph_size(), (0, 0, 0.0));

        let mut b = EcosystemGraphBuilder::new();
        b.add_transition("a.ir", "b.ir", 1.0).unwrap();
        b.add_transition("b.ir", "a.ir", 2.0).unwrap();
        b.ensure_node("c.ir").unwrap();
        let g = b.finish();
        assert_eq!(g.graph_size(), (3, 2, 3.0));
    }

    #[test]
    fn induced_subgraph_keep_all_is_identity() {
        let g = fixture_graph();
        let h = g.induced_subgraph(|_| true);
        assert_eq!(h.graph_size(), g.graph_size());
        assert_eq!(
            h.edges().collect::<Vec<_>>(),
            g.edges().collect::<Vec<_>>()
        );
    }

    #[test]
    fn induced_subgraph_keep_none_is_empty() {
        let g = fixture_graph();
        let h = g.induced_subgraph(|_| false);
        assert_eq!(h.graph_size(), (0, 0, 0.0));
    }

    #[test]
    fn dropping_articulation_site_removes_its_incident_edges() {
        let g = fixture_graph();
        // c.ir touches a->c, b->c, c->a, c->d, c->e: 5 of the 12 edges.
        let h = g.induced_subgraph(|n| n.domain != "c.ir");
        assert_eq!(h.edge_count(), g.edge_count() - 5);
        assert_eq!(h.node_count(), 4);
    }

    #[test]
    fn induced_subgraph_is_idempotent() {
        let g = fixture_graph();
        let keep = |n: &WebsiteNode| n.domain < "d".to_string();
        let once = g.induced_subgraph(keep);
        let twice = once.induced_subgraph(keep);
        assert_eq!(once.graph_size(), twice.graph_size());
        assert_eq!(
            once.edges().collect::<Vec<_>>(),
            twice.edges().collect::<Vec<_>>()
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_transitions() -> impl Strategy<Value = Vec<(String, String, f64)>> {
            let domain = prop::sample::select(vec![
                "a.ir", "b.ir", "c.ir", "d.ir", "e.ir", "f.com", "g.com",
            ]);
            prop::collection::vec(
                (domain.clone(), domain, 1..100u32).prop_map(|(s, d, w)| {
                    (s.to_string(), d.to_string(), w as f64 / 4.0)
                }),
                1..40,
            )
        }

        fn build(rows: &[(String, String, f64)]) -> EcosystemGraph {
            let mut b = EcosystemGraphBuilder::new();
            for (s, d, w) in rows {
                b.add_transition(s, d, *w).unwrap();
            }
            b.finish()
        }

        fn canonical_edges(g: &EcosystemGraph) -> Vec<(String, String, f64)> {
            let mut edges: Vec<_> = g
                .edges()
                .map(|(u, v, w)| {
                    (
                        g.node(u).unwrap().domain.clone(),
                        g.node(v).unwrap().domain.clone(),
                        w,
                    )
                })
                .collect();
            edges.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
            edges
        }

        proptest! {
            #[test]
            fn merge_is_permutation_invariant(rows in arb_transitions(), seed in 0..1000u64) {
                let g1 = build(&rows);
                let mut shuffled = rows.clone();
                // Deterministic Fisher-Yates driven by the seed.
                let mut state = seed.wrapping_add(0x9e3779b97f4a7c15);
                for i in (1..shuffled.len()).rev() {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    shuffled.swap(i, (state % (i as u64 + 1)) as usize);
                }
                let g2 = build(&shuffled);
                prop_assert_eq!(g1.node_count(), g2.node_count());
                let e1 = canonical_edges(&g1);
                let e2 = canonical_edges(&g2);
                prop_assert_eq!(e1.len(), e2.len());
                for (a, b) in e1.iter().zip(e2.iter()) {
                    prop_assert_eq!(&a.0, &b.0);
                    prop_assert_eq!(&a.1, &b.1);
                    prop_assert!((a.2 - b.2).abs() <= 1e-9 * a.2.abs().max(1.0));
                }
            }

            #[test]
            fn total_weight_equals_degree_sums(rows in arb_transitions()) {
                let g = build(&rows);
                let out_sum: f64 = g.nodes().map(|n| g.degree(n.id, DegreeMode::Out, true).unwrap()).sum();
                let in_sum: f64 = g.nodes().map(|n| g.degree(n.id, DegreeMode::In, true).unwrap()).sum();
                prop_assert!((g.total_weight() - out_sum).abs() <= 1e-9 * g.total_weight().max(1.0));
                prop_assert!((g.total_weight() - in_sum).abs() <= 1e-9 * g.total_weight().max(1.0));
            }

            #[test]
            fn node_weight_is_weighted_total_degree(rows in arb_transitions()) {
                let g = build(&rows);
                for n in g.nodes() {
                    let total = g.degree(n.id, DegreeMode::Total, true).unwrap();
                    prop_assert_eq!(n.node_weight, total);
                }
            }
        }
    }
}

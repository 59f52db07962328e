use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use serde::Serialize;

use super::{GraphError, HeteroGraph, Label, NodeKind, RelationKind, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum EdgeProvenance {
    ReplyTo,
    QuoteOf,
    CoUser,
    SelfLoop,
}

/// Directed message edge: `source` sends to `target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InteractionEdge {
    pub source: usize,
    pub target: usize,
    pub provenance: EdgeProvenance,
}

/// Edge endpoints sorted by target, ready for per-target softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeIndex {
    pub num_nodes: usize,
    pub sources: Arc<[usize]>,
    pub targets: Arc<[usize]>,
}

impl EdgeIndex {
    /// Sorts `(source, target)` pairs by `(target, source)`.
    pub fn new(num_nodes: usize, pairs: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut pairs = pairs.to_vec();
        if let Some(&(s, t)) = pairs.iter().find(|(s, t)| *s >= num_nodes || *t >= num_nodes) {
            return Err(GraphError::IndexOutOfRange {
                index: s.max(t),
                len: num_nodes,
            });
        }
        pairs.sort_by_key(|&(s, t)| (t, s));
        Ok(Self {
            num_nodes,
            sources: pairs.iter().map(|p| p.0).collect(),
            targets: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// First node that lacks a self-loop, if any.
    pub fn missing_self_loop(&self) -> Option<usize> {
        let mut has = vec![false; self.num_nodes];
        for (s, t) in self.sources.iter().zip(self.targets.iter()) {
            if s == t {
                has[*s] = true;
            }
        }
        has.iter().position(|h| !h)
    }

    /// Same graph with node `i` renamed to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let pairs: Vec<(usize, usize)> = self
            .sources
            .iter()
            .zip(self.targets.iter())
            .map(|(&s, &t)| (perm[s], perm[t]))
            .collect();
        Self::new(self.num_nodes, &pairs).expect("permutation keeps indices in range")
    }
}

/// Homogeneous projection over tweet and reply nodes.
#[derive(Debug, Clone, Serialize)]
pub struct InteractionGraph {
    node_ids: Vec<String>,
    kinds: Vec<NodeKind>,
    edges: Vec<InteractionEdge>,
    labels: Vec<Option<Label>>,
    splits: Vec<Split>,
    #[serde(skip)]
    neighbors: Vec<Vec<usize>>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    #[serde(skip)]
    edge_index: EdgeIndex,
}

impl InteractionGraph {
    /// Builds the graph from explicit parts. Repeated `(source, target)` pairs
    /// keep their first provenance, and a self-loop is added for every node.
    pub fn from_edges(
        node_ids: Vec<String>,
        kinds: Vec<NodeKind>,
        edges: &[(usize, usize, EdgeProvenance)],
        labels: Vec<Option<Label>>,
        splits: Vec<Split>,
    ) -> Result<Self, GraphError> {
        let n = node_ids.len();
        assert_eq!(kinds.len(), n, "one kind per node");
        assert_eq!(labels.len(), n, "one label slot per node");
        assert_eq!(splits.len(), n, "one split per node");

        let mut unique: BTreeMap<(usize, usize), EdgeProvenance> = BTreeMap::new();
        for &(s, t, p) in edges {
            if s >= n || t >= n {
                return Err(GraphError::IndexOutOfRange {
                    index: s.max(t),
                    len: n,
                });
            }
            if s == t {
                continue;
            }
            unique.entry((t, s)).or_insert(p);
        }
        for i in 0..n {
            unique.insert((i, i), EdgeProvenance::SelfLoop);
        }
        let edges: Vec<InteractionEdge> = unique
            .into_iter()
            .map(|((target, source), provenance)| InteractionEdge {
                source,
                target,
                provenance,
            })
            .collect();

        let mut neighbors = vec![BTreeSet::new(); n];
        for e in &edges {
            if e.source != e.target {
                neighbors[e.source].insert(e.target);
                neighbors[e.target].insert(e.source);
            }
        }
        let index = node_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e.source, e.target)).collect();
        let edge_index = EdgeIndex::new(n, &pairs)?;

        Ok(Self {
            node_ids,
            kinds,
            edges,
            labels,
            splits,
            neighbors: neighbors.into_iter().map(|s| s.into_iter().collect()).collect(),
            index,
            edge_index,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn node_id(&self, idx: usize) -> &str {
        &self.node_ids[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    /// Edges sorted by `(target, source)`.
    pub fn edges(&self) -> &[InteractionEdge] {
        &self.edges
    }

    pub fn edge_index(&self) -> &EdgeIndex {
        &self.edge_index
    }

    pub fn labels(&self) -> &[Option<Label>] {
        &self.labels
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    /// Undirected neighbors excluding the node itself.
    pub fn neighbors(&self, idx: usize) -> &[usize] {
        &self.neighbors[idx]
    }

    /// Indices of labeled nodes in `split`.
    pub fn labeled_in(&self, split: Split) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&i| self.splits[i] == split && self.labels[i].is_some())
            .collect()
    }
}

/// Projects the typed graph onto tweets and replies.
///
/// Reply-to and quote edges map directly; each user links the tweets it posted
/// or retweeted pairwise, taking at most `couser_cap` pairs in sorted-id order.
/// All non-loop edges are added in both directions, and every node gets a
/// self-loop. Only tweet nodes carry labels.
pub fn build_interaction_graph(
    graph: &HeteroGraph,
    labels: &BTreeMap<String, Label>,
    splits: &BTreeMap<String, Split>,
    couser_cap: usize,
) -> InteractionGraph {
    let mut members: Vec<usize> = graph
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, n)| matches!(n.kind(), NodeKind::Tweet | NodeKind::Reply))
        .map(|(i, _)| i)
        .collect();
    members.sort_unstable();
    let local: HashMap<usize, usize> = members.iter().enumerate().map(|(l, &g)| (g, l)).collect();

    let mut pairs = Vec::new();
    let mut authored: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for e in graph.edges() {
        match e.relation {
            RelationKind::ReplyTo | RelationKind::QuoteOf => {
                let provenance = if e.relation == RelationKind::ReplyTo {
                    EdgeProvenance::ReplyTo
                } else {
                    EdgeProvenance::QuoteOf
                };
                let (s, t) = (local[&e.source], local[&e.target]);
                pairs.push((s, t, provenance));
                pairs.push((t, s, provenance));
            }
            RelationKind::Posted | RelationKind::Retweeted => {
                authored
                    .entry(graph.node(e.source).id())
                    .or_default()
                    .insert(graph.node(e.target).id());
            }
            _ => {}
        }
    }

    for items in authored.values() {
        let items: Vec<usize> = items
            .iter()
            .map(|id| local[&graph.index_of(id).expect("edge endpoint exists")])
            .collect();
        let chosen = items
            .iter()
            .enumerate()
            .flat_map(|(i, &a)| items[i + 1..].iter().map(move |&b| (a, b)))
            .take(couser_cap);
        for (a, b) in chosen {
            pairs.push((a, b, EdgeProvenance::CoUser));
            pairs.push((b, a, EdgeProvenance::CoUser));
        }
    }

    let node_ids: Vec<String> = members.iter().map(|&g| graph.node(g).id().to_string()).collect();
    let kinds: Vec<NodeKind> = members.iter().map(|&g| graph.node(g).kind()).collect();
    let node_labels = node_ids
        .iter()
        .zip(&kinds)
        .map(|(id, kind)| match kind {
            NodeKind::Tweet => labels.get(id).copied(),
            _ => None,
        })
        .collect();
    let node_splits = node_ids
        .iter()
        .map(|id| splits.get(id).copied().unwrap_or(Split::Unlabeled))
        .collect();

    InteractionGraph::from_edges(node_ids, kinds, &pairs, node_labels, node_splits)
        .expect("indices come from the member list")
}

/// Nodes within `k` undirected hops of `node`, including `node`.
pub fn k_hop_neighborhood(
    graph: &InteractionGraph,
    node: usize,
    k: usize,
) -> Result<BTreeSet<usize>, GraphError> {
    if node >= graph.node_count() {
        return Err(GraphError::IndexOutOfRange {
            index: node,
            len: graph.node_count(),
        });
    }
    let mut seen = BTreeSet::from([node]);
    let mut queue = VecDeque::from([(node, 0usize)]);
    while let Some((cur, depth)) = queue.pop_front() {
        if depth == k {
            continue;
        }
        for &next in graph.neighbors(cur) {
            if seen.insert(next) {
                queue.push_back((next, depth + 1));
            }
        }
    }
    Ok(seen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{NodePayload, TweetRecord, UserRecord};

    fn record(id: &str) -> TweetRecord {
        TweetRecord {
            id: id.into(),
            text: String::new(),
            reply_count: 0,
            quote_count: 0,
            retweet_count: 0,
            language: "en".into(),
        }
    }

    fn count(g: &InteractionGraph, p: EdgeProvenance) -> usize {
        g.edges().iter().filter(|e| e.provenance == p).count()
    }

    #[test]
    fn reply_edges_both_directions() {
        let mut h = HeteroGraph::new();
        h.add_node(NodePayload::Tweet(record("t1"))).unwrap();
        h.add_node(NodePayload::Tweet(record("t2"))).unwrap();
        h.add_node(NodePayload::Reply(record("r1"))).unwrap();
        h.add_edge("r1", RelationKind::ReplyTo, "t1").unwrap();
        h.add_edge("r1", RelationKind::ReplyTo, "t2").unwrap();
        let g = build_interaction_graph(&h, &BTreeMap::new(), &BTreeMap::new(), 0);
        assert_eq!(g.node_count(), 3);
        assert_eq!(count(&g, EdgeProvenance::ReplyTo), 4);
        assert_eq!(count(&g, EdgeProvenance::SelfLoop), 3);
        assert_eq!(g.edges().len(), 7);
    }

    #[test]
    fn isolated_tweet_self_loop() {
        let mut h = HeteroGraph::new();
        h.add_node(NodePayload::Tweet(record("t1"))).unwrap();
        let g = build_interaction_graph(&h, &BTreeMap::new(), &BTreeMap::new(), 10);
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.edges()[0].provenance, EdgeProvenance::SelfLoop);
    }

    #[test]
    fn couser_cap_takes_first_sorted_pair() {
        let mut h = HeteroGraph::new();
        h.add_node(NodePayload::User(UserRecord { id: "u".into() })).unwrap();
        for id in ["t3", "t1", "t2"] {
            h.add_node(NodePayload::Tweet(record(id))).unwrap();
            h.add_edge("u", RelationKind::Retweeted, id).unwrap();
        }
        let g = build_interaction_graph(&h, &BTreeMap::new(), &BTreeMap::new(), 1);
        let co: Vec<_> = g
            .edges()
            .iter()
            .filter(|e| e.provenance == EdgeProvenance::CoUser)
            .map(|e| (g.node_id(e.source).to_string(), g.node_id(e.target).to_string()))
            .collect();
        assert_eq!(co.len(), 2);
        assert!(co.contains(&("t1".into(), "t2".into())));
        assert!(co.contains(&("t2".into(), "t1".into())));
    }

    #[test]
    fn only_tweets_are_labeled() {
        let mut h = HeteroGraph::new();
        h.add_node(NodePayload::Tweet(record("t1"))).unwrap();
        h.add_node(NodePayload::Reply(record("r1"))).unwrap();
        let labels = BTreeMap::from([
            ("t1".to_string(), Label::Factual),
            ("r1".to_string(), Label::Factual),
        ]);
        let splits = BTreeMap::from([("t1".to_string(), Split::Train)]);
        let g = build_interaction_graph(&h, &labels, &splits, 0);
        assert_eq!(g.labels(), &[Some(Label::Factual), None]);
        assert_eq!(g.splits(), &[Split::Train, Split::Unlabeled]);
    }

    fn path(n: usize) -> InteractionGraph {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, EdgeProvenance::ReplyTo)).collect();
        InteractionGraph::from_edges(
            (0..n).map(|i| format!("n{i}")).collect(),
            vec![NodeKind::Tweet; n],
            &edges,
            vec![None; n],
            vec![Split::Unlabeled; n],
        )
        .unwrap()
    }

    #[test]
    fn khop_basics() {
        let g = path(3);
        assert_eq!(k_hop_neighborhood(&g, 1, 0).unwrap(), BTreeSet::from([1]));
        assert_eq!(k_hop_neighborhood(&g, 0, 1).unwrap(), BTreeSet::from([0, 1]));
        assert!(matches!(
            k_hop_neighborhood(&g, 5, 1),
            Err(GraphError::IndexOutOfRange { index: 5, len: 3 })
        ));
    }

    #[test]
    fn edge_index_sorted_by_target() {
        let idx = EdgeIndex::new(3, &[(2, 0), (0, 1), (1, 0), (0, 0)]).unwrap();
        assert_eq!(&*idx.targets, &[0, 0, 0, 1]);
        assert_eq!(&*idx.sources, &[0, 1, 2, 0]);
        assert_eq!(idx.missing_self_loop(), Some(1));
    }
}

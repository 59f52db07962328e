//! Heterogeneous social graph: typed nodes (claims, tweets, replies, users),
//! the six relation kinds between them, claim-to-tweet label propagation,
//! and the homogeneous tweet interaction graph the classifier runs on.

mod interaction;
mod io;

pub use interaction::{
    build_interaction_graph, k_hop_neighborhood, EdgeIndex, EdgeProvenance, InteractionEdge,
    InteractionGraph,
};
pub use io::{load_dataset, load_splits, read_edges, read_nodes, write_edges, write_nodes, write_splits};

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("edge references unknown node(s): {}", .0.join(", "))]
    DanglingEdge(Vec<String>),
    #[error("duplicate node id {0}")]
    DuplicateNode(String),
    #[error("relation {relation} cannot connect {source_kind} to {target_kind}")]
    InvalidRelation {
        relation: RelationKind,
        source_kind: NodeKind,
        target_kind: NodeKind,
    },
    #[error("unknown node id {0}")]
    UnknownNode(String),
    #[error("node index {index} out of range for {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Claim,
    Tweet,
    Reply,
    User,
}

impl NodeKind {
    pub const ALL: [NodeKind; 4] = [NodeKind::Claim, NodeKind::Tweet, NodeKind::Reply, NodeKind::User];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Claim => "Claim",
            NodeKind::Tweet => "Tweet",
            NodeKind::Reply => "Reply",
            NodeKind::User => "User",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown node kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationKind {
    Posted,
    Mentions,
    Retweeted,
    QuoteOf,
    ReplyTo,
    Discusses,
}

impl RelationKind {
    pub const ALL: [RelationKind; 6] = [
        RelationKind::Posted,
        RelationKind::Mentions,
        RelationKind::Retweeted,
        RelationKind::QuoteOf,
        RelationKind::ReplyTo,
        RelationKind::Discusses,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::Posted => "Posted",
            RelationKind::Mentions => "Mentions",
            RelationKind::Retweeted => "Retweeted",
            RelationKind::QuoteOf => "QuoteOf",
            RelationKind::ReplyTo => "ReplyTo",
            RelationKind::Discusses => "Discusses",
        }
    }

    /// Whether this relation may connect a `source` node to a `target` node.
    pub fn allows(self, source: NodeKind, target: NodeKind) -> bool {
        use NodeKind::*;
        match self {
            RelationKind::Posted => source == User && matches!(target, Tweet | Reply),
            RelationKind::Mentions => source == Tweet && target == User,
            RelationKind::Retweeted => source == User && target == Tweet,
            RelationKind::QuoteOf | RelationKind::ReplyTo => source == Reply && target == Tweet,
            RelationKind::Discusses => source == Tweet && target == Claim,
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Quote_Of" => return Ok(RelationKind::QuoteOf),
            "Reply_To" => return Ok(RelationKind::ReplyTo),
            _ => {}
        }
        RelationKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown relation {s:?}"))
    }
}

/// Binary target. The numeric encoding is fixed: misinformation = 0, fact = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Misinformation,
    #[serde(alias = "fact")]
    Factual,
}

impl Label {
    pub fn encode(self) -> u8 {
        match self {
            Label::Misinformation => 0,
            Label::Factual => 1,
        }
    }

    pub fn decode(value: u8) -> Option<Self> {
        match value {
            0 => Some(Label::Misinformation),
            1 => Some(Label::Factual),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Misinformation => "misinformation",
            Label::Factual => "factual",
        }
    }

    pub fn other(self) -> Self {
        match self {
            Label::Misinformation => Label::Factual,
            Label::Factual => Label::Misinformation,
        }
    }
}

fn default_language() -> String {
    "en".to_string()
}

/// Tweet or reply payload: text plus the engagement counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    #[serde(default)]
    pub id: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub reply_count: u64,
    #[serde(default)]
    pub quote_count: u64,
    #[serde(default)]
    pub retweet_count: u64,
    #[serde(default = "default_language")]
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRecord {
    #[serde(default)]
    pub id: String,
    pub verdict: Label,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UserRecord {
    #[serde(default)]
    pub id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodePayload {
    Claim(ClaimRecord),
    Tweet(TweetRecord),
    Reply(TweetRecord),
    User(UserRecord),
}

impl NodePayload {
    pub fn kind(&self) -> NodeKind {
        match self {
            NodePayload::Claim(_) => NodeKind::Claim,
            NodePayload::Tweet(_) => NodeKind::Tweet,
            NodePayload::Reply(_) => NodeKind::Reply,
            NodePayload::User(_) => NodeKind::User,
        }
    }

    pub fn id(&self) -> &str {
        match self {
            NodePayload::Claim(c) => &c.id,
            NodePayload::Tweet(t) | NodePayload::Reply(t) => &t.id,
            NodePayload::User(u) => &u.id,
        }
    }

    /// Text and counts for tweet-like nodes.
    pub fn tweet(&self) -> Option<&TweetRecord> {
        match self {
            NodePayload::Tweet(t) | NodePayload::Reply(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub source: usize,
    pub relation: RelationKind,
    pub target: usize,
}

/// Validated typed graph. Nodes keep insertion order.
#[derive(Debug, Clone, Default)]
pub struct HeteroGraph {
    nodes: Vec<NodePayload>,
    index: HashMap<String, usize>,
    by_kind: [Vec<usize>; 4],
    edges: Vec<Edge>,
    edge_set: HashSet<Edge>,
}

impl HeteroGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, payload: NodePayload) -> Result<usize, GraphError> {
        let id = payload.id().to_string();
        if self.index.contains_key(&id) {
            return Err(GraphError::DuplicateNode(id));
        }
        let idx = self.nodes.len();
        self.by_kind[payload.kind().slot()].push(idx);
        self.index.insert(id, idx);
        self.nodes.push(payload);
        Ok(idx)
    }

    /// Adds a typed edge. Returns `false` when the identical triple already exists.
    pub fn add_edge(
        &mut self,
        source: &str,
        relation: RelationKind,
        target: &str,
    ) -> Result<bool, GraphError> {
        let missing: Vec<String> = [source, target]
            .into_iter()
            .filter(|id| !self.index.contains_key(*id))
            .map(str::to_string)
            .collect();
        if !missing.is_empty() {
            return Err(GraphError::DanglingEdge(missing));
        }
        let (s, t) = (self.index[source], self.index[target]);
        let (sk, tk) = (self.nodes[s].kind(), self.nodes[t].kind());
        if !relation.allows(sk, tk) {
            return Err(GraphError::InvalidRelation {
                relation,
                source_kind: sk,
                target_kind: tk,
            });
        }
        let edge = Edge {
            source: s,
            relation,
            target: t,
        };
        if !self.edge_set.insert(edge) {
            return Ok(false);
        }
        self.edges.push(edge);
        Ok(true)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[NodePayload] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, idx: usize) -> &NodePayload {
        &self.nodes[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&NodePayload> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    /// Node indices of one kind, in insertion order.
    pub fn nodes_of_kind(&self, kind: NodeKind) -> &[usize] {
        &self.by_kind[kind.slot()]
    }

    /// Copy of the graph keeping claims, users, and only the tweet-like nodes
    /// whose language tag matches `language`. Edges touching dropped nodes go too.
    pub fn retain_language(&self, language: &str) -> HeteroGraph {
        let mut out = HeteroGraph::new();
        for node in &self.nodes {
            let keep = node.tweet().is_none_or(|t| t.language == language);
            if keep {
                out.add_node(node.clone()).expect("ids already unique");
            }
        }
        for e in &self.edges {
            let (s, t) = (self.nodes[e.source].id(), self.nodes[e.target].id());
            if out.index.contains_key(s) && out.index.contains_key(t) {
                out.add_edge(s, e.relation, t).expect("edge was valid");
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ConflictPolicy {
    /// Tweets discussing claims with differing verdicts stay unlabeled.
    #[default]
    Drop,
    /// Take the most frequent verdict; ties stay unlabeled.
    Majority,
}

impl FromStr for ConflictPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "drop" => Ok(ConflictPolicy::Drop),
            "majority" => Ok(ConflictPolicy::Majority),
            other => Err(format!("unknown conflict policy {other:?}")),
        }
    }
}

/// Labels every tweet that discusses at least one claim with that claim's verdict.
pub fn derive_tweet_labels(graph: &HeteroGraph, policy: ConflictPolicy) -> BTreeMap<String, Label> {
    let mut votes: BTreeMap<usize, [usize; 2]> = BTreeMap::new();
    for e in graph.edges() {
        if e.relation != RelationKind::Discusses {
            continue;
        }
        if let NodePayload::Claim(claim) = graph.node(e.target) {
            votes.entry(e.source).or_default()[claim.verdict.encode() as usize] += 1;
        }
    }

    let mut labels = BTreeMap::new();
    for (tweet, [misinfo, fact]) in votes {
        let label = match (misinfo, fact) {
            (_, 0) => Some(Label::Misinformation),
            (0, _) => Some(Label::Factual),
            (m, f) => match policy {
                ConflictPolicy::Drop => None,
                ConflictPolicy::Majority if m > f => Some(Label::Misinformation),
                ConflictPolicy::Majority if f > m => Some(Label::Factual),
                ConflictPolicy::Majority => None,
            },
        };
        if let Some(label) = label {
            labels.insert(graph.node(tweet).id().to_string(), label);
        }
    }
    labels
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    #[default]
    Unlabeled,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unlabeled => "unlabeled",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

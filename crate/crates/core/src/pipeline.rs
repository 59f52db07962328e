//! Dataset bundles on disk and their preparation into model inputs.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::features::{
    assemble_features, encode_graph_shallow, read_embeddings, write_embeddings_to, EmbeddingRecord,
    EmbeddingTable, FeatureSet, HashedEncoder, ShallowStats, ShallowTransform,
};
use crate::graph::{
    build_interaction_graph, derive_tweet_labels, load_splits, read_edges, read_nodes, write_edges,
    write_nodes, write_splits, ConflictPolicy, HeteroGraph, InteractionGraph, Label, Split,
};

pub const NODES_FILE: &str = "nodes.tsv";
pub const EDGES_FILE: &str = "edges.tsv";
pub const SPLITS_FILE: &str = "splits.tsv";
pub const EMBEDDINGS_FILE: &str = "embeddings.mmeb";

/// Graph, split assignment and optional token embeddings.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub graph: HeteroGraph,
    pub splits: BTreeMap<String, Split>,
    pub embeddings: Option<EmbeddingTable>,
}

impl Bundle {
    /// Reads `nodes.tsv` and `edges.tsv` from `dir`, plus `splits.tsv` and
    /// `embeddings.mmeb` when present.
    pub fn load(dir: &Path) -> Result<Self> {
        let optional = |name: &str| Some(dir.join(name)).filter(|p| p.exists());
        Self::load_files(
            &dir.join(NODES_FILE),
            &dir.join(EDGES_FILE),
            optional(SPLITS_FILE).as_deref(),
            optional(EMBEDDINGS_FILE).as_deref(),
        )
    }

    pub fn load_files(
        nodes: &Path,
        edges: &Path,
        splits: Option<&Path>,
        embeddings: Option<&Path>,
    ) -> Result<Self> {
        let mut graph = HeteroGraph::new();
        read_nodes(BufReader::new(open(nodes)?), &mut graph)?;
        read_edges(BufReader::new(open(edges)?), &mut graph)?;
        let splits = match splits {
            Some(p) => load_splits(p)?,
            None => BTreeMap::new(),
        };
        let embeddings = match embeddings {
            Some(p) => Some(read_embeddings(BufReader::new(open(p)?))?),
            None => None,
        };
        Ok(Self {
            graph,
            splits,
            embeddings,
        })
    }

    /// Writes the bundle files into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join(NODES_FILE))?);
        write_nodes(&self.graph, &mut w)?;
        w.flush()?;
        let mut w = BufWriter::new(File::create(dir.join(EDGES_FILE))?);
        write_edges(&self.graph, &mut w)?;
        w.flush()?;
        let splits: Vec<(String, Split)> = self.splits.iter().map(|(k, v)| (k.clone(), *v)).collect();
        let mut w = BufWriter::new(File::create(dir.join(SPLITS_FILE))?);
        write_splits(&splits, &mut w)?;
        w.flush()?;
        if let Some(table) = &self.embeddings {
            let records: Vec<EmbeddingRecord> = table.records.values().cloned().collect();
            let w = BufWriter::new(File::create(dir.join(EMBEDDINGS_FILE))?);
            write_embeddings_to(w, table.dim, &records)?;
        }
        Ok(())
    }
}

fn open(path: &Path) -> std::io::Result<File> {
    File::open(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Shuffles each class separately and cuts it 50/20/30 into train, val and
/// test.
pub fn stratified_splits<R: Rng>(labeled: &[(&str, Label)], rng: &mut R) -> BTreeMap<String, Split> {
    let mut splits = BTreeMap::new();
    for class in [Label::Misinformation, Label::Factual] {
        let mut members: Vec<&str> = labeled.iter().filter(|(_, l)| *l == class).map(|(id, _)| *id).collect();
        members.shuffle(rng);
        let m = members.len();
        let n_train = (m as f64 * 0.5).round() as usize;
        let n_val = (m as f64 * 0.2).round() as usize;
        for (rank, id) in members.into_iter().enumerate() {
            let split = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            splits.insert(id.to_string(), split);
        }
    }
    splits
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareOptions {
    pub couser_cap: usize,
    pub transform: ShallowTransform,
    pub conflict_policy: ConflictPolicy,
    /// Use the hashed encoder for nodes without embedding records.
    pub fallback_encoder: bool,
    /// Language tag kept; other tweets and replies are dropped.
    pub language: Option<String>,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            couser_cap: 10,
            transform: ShallowTransform::Log1pZscore,
            conflict_policy: ConflictPolicy::Drop,
            fallback_encoder: true,
            language: Some("en".to_string()),
        }
    }
}

/// Everything the model, trainer and explainers consume.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub hetero: HeteroGraph,
    pub labels: BTreeMap<String, Label>,
    pub graph: InteractionGraph,
    pub features: FeatureSet,
    pub shallow_stats: Option<ShallowStats>,
}

impl PreparedData {
    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.graph.index_of(id)
    }
}

pub fn prepare(bundle: &Bundle, options: &PrepareOptions) -> Result<PreparedData> {
    let hetero = match &options.language {
        Some(lang) => bundle.graph.retain_language(lang),
        None => bundle.graph.clone(),
    };
    let labels = derive_tweet_labels(&hetero, options.conflict_policy);
    let graph = build_interaction_graph(&hetero, &labels, &bundle.splits, options.couser_cap);
    let (shallow, shallow_stats) = encode_graph_shallow(&graph, &hetero, options.transform)?;
    let dim = bundle.embeddings.as_ref().map_or(HashedEncoder::default().dim, |t| t.dim);
    let fallback = options.fallback_encoder.then(|| HashedEncoder::new(dim));
    let features = assemble_features(
        &graph,
        &hetero,
        &shallow,
        bundle.embeddings.as_ref(),
        fallback.as_ref(),
    )?;
    Ok(PreparedData {
        hetero,
        labels,
        graph,
        features,
        shallow_stats,
    })
}

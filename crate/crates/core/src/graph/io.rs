use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{
    ClaimRecord, GraphError, HeteroGraph, NodeKind, NodePayload, RelationKind, Split, TweetRecord,
    UserRecord,
};

const NODE_HEADER: &str = "id\tkind\tpayload_json";
const EDGE_HEADER: &str = "src\trelation\tdst";
const SPLIT_HEADER: &str = "id\tsplit";

fn malformed(line: usize, reason: impl Into<String>) -> GraphError {
    GraphError::MalformedRow {
        line,
        reason: reason.into(),
    }
}

/// Yields `(line number, fields)` for every data row after checking the header.
/// An entirely empty input has no rows.
fn rows<R: BufRead>(
    reader: R,
    header: &str,
    columns: usize,
) -> Result<Vec<(usize, Vec<String>)>, GraphError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        let lineno = i + 1;
        if lineno == 1 {
            if line != header {
                return Err(malformed(1, format!("expected header {header:?}")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.splitn(columns, '\t').map(str::to_string).collect();
        if fields.len() != columns {
            return Err(malformed(
                lineno,
                format!("expected {columns} tab-separated columns, got {}", fields.len()),
            ));
        }
        out.push((lineno, fields));
    }
    Ok(out)
}

fn parse_payload(line: usize, id: &str, kind: NodeKind, json: &str) -> Result<NodePayload, GraphError> {
    let bad = |e: serde_json::Error| malformed(line, format!("invalid {kind} payload: {e}"));
    Ok(match kind {
        NodeKind::Tweet | NodeKind::Reply => {
            let mut rec: TweetRecord = serde_json::from_str(json).map_err(bad)?;
            rec.id = id.to_string();
            if kind == NodeKind::Tweet {
                NodePayload::Tweet(rec)
            } else {
                NodePayload::Reply(rec)
            }
        }
        NodeKind::Claim => {
            let mut rec: ClaimRecord = serde_json::from_str(json).map_err(bad)?;
            rec.id = id.to_string();
            NodePayload::Claim(rec)
        }
        NodeKind::User => {
            let mut rec: UserRecord = if json.trim().is_empty() {
                UserRecord::default()
            } else {
                serde_json::from_str(json).map_err(bad)?
            };
            rec.id = id.to_string();
            NodePayload::User(rec)
        }
    })
}

/// Adds every row of a node table to `graph`.
pub fn read_nodes<R: BufRead>(reader: R, graph: &mut HeteroGraph) -> Result<(), GraphError> {
    for (line, fields) in rows(reader, NODE_HEADER, 3)? {
        let id = fields[0].as_str();
        if id.is_empty() {
            return Err(malformed(line, "empty node id"));
        }
        let kind: NodeKind = fields[1].parse().map_err(|e: String| malformed(line, e))?;
        let payload = parse_payload(line, id, kind, &fields[2])?;
        graph.add_node(payload)?;
    }
    Ok(())
}

/// Adds every row of an edge table to `graph`. Repeated triples collapse.
pub fn read_edges<R: BufRead>(reader: R, graph: &mut HeteroGraph) -> Result<(), GraphError> {
    for (line, fields) in rows(reader, EDGE_HEADER, 3)? {
        let relation: RelationKind = fields[1].parse().map_err(|e: String| malformed(line, e))?;
        match graph.add_edge(&fields[0], relation, &fields[2]) {
            Ok(_) => {}
            Err(e @ GraphError::InvalidRelation { .. }) => return Err(malformed(line, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

pub fn load_dataset(node_file: &Path, edge_file: &Path) -> Result<HeteroGraph, GraphError> {
    let mut graph = HeteroGraph::new();
    read_nodes(BufReader::new(File::open(node_file)?), &mut graph)?;
    read_edges(BufReader::new(File::open(edge_file)?), &mut graph)?;
    Ok(graph)
}

pub fn write_nodes<W: Write>(graph: &HeteroGraph, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{NODE_HEADER}")?;
    for node in graph.nodes() {
        let json = match node {
            NodePayload::Claim(c) => serde_json::to_string(c),
            NodePayload::Tweet(t) | NodePayload::Reply(t) => serde_json::to_string(t),
            NodePayload::User(u) => serde_json::to_string(u),
        }
        .map_err(std::io::Error::other)?;
        writeln!(w, "{}\t{}\t{}", node.id(), node.kind(), json)?;
    }
    Ok(())
}

pub fn write_edges<W: Write>(graph: &HeteroGraph, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{EDGE_HEADER}")?;
    for e in graph.edges() {
        writeln!(
            w,
            "{}\t{}\t{}",
            graph.node(e.source).id(),
            e.relation,
            graph.node(e.target).id()
        )?;
    }
    Ok(())
}

pub fn load_splits(path: &Path) -> Result<BTreeMap<String, Split>, GraphError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = BTreeMap::new();
    for (line, fields) in rows(reader, SPLIT_HEADER, 2)? {
        let split: Split = fields[1].trim().parse().map_err(|e: String| malformed(line, e))?;
        out.insert(fields[0].clone(), split);
    }
    Ok(out)
}

pub fn write_splits<W: Write>(splits: &[(String, Split)], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SPLIT_HEADER}")?;
    for (id, split) in splits {
        writeln!(w, "{id}\t{}", split.as_str())?;
    }
    Ok(())
}

//! Per-node explanation records and their static HTML rendering.
//!
//! Pages are self-contained: inline styles only, no scripts, no external
//! resources.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::TokenAttribution;
use crate::graphlime::{Explanation, GROUP_NAMES};
use crate::train::{format_score, mode_title, RunReport};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("failed to write {path}: {source}")]
    WriteFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Raw engagement counts as shown in the metadata table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Engagement {
    pub replies: u64,
    pub quotes: u64,
    pub retweets: u64,
}

/// Everything known about one explained node; the content of
/// `explanations/<id>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub node_id: String,
    pub text: String,
    pub metadata: Engagement,
    pub explanation: Explanation,
    pub attribution: TokenAttribution,
}

/// Display name of a grouped feature.
pub fn group_display_name(group: &str) -> &'static str {
    match group {
        "replies" => "Number of replies",
        "quotes" => "Number of quotes",
        "retweets" => "Number of retweets",
        _ => "Text embedding",
    }
}

pub fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// File-name-safe form of a node id.
pub fn page_name(node_id: &str) -> String {
    let safe: String = node_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("node_{safe}.html")
}

const STYLE: &str = "body{font-family:sans-serif;max-width:56em;margin:2em auto;color:#222}\
table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:.3em .7em;text-align:left}\
.bar{background:#4a78c2;height:1em}.track{width:20em;background:#eee}\
.tok{padding:.1em .25em;margin:.1em;display:inline-block;border-radius:3px}";

fn page(title: &str, body: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{}</title>\n\
         <style>{STYLE}</style>\n</head>\n<body>\n{body}</body>\n</html>\n",
        escape_html(title)
    )
}

/// Background colour for one token: green supports the predicted class, red
/// opposes it; opacity is the absolute normalized score.
pub fn token_style(normalized: f64) -> String {
    let alpha = normalized.abs().min(1.0);
    if normalized < 0.0 {
        format!("background:rgba(214,39,40,{alpha:.3})")
    } else {
        format!("background:rgba(44,160,44,{alpha:.3})")
    }
}

pub fn render_node_page(report: &NodeReport) -> String {
    let e = &report.explanation;
    let mut body = String::new();
    let _ = writeln!(body, "<h1>Node {}</h1>", escape_html(&report.node_id));
    let _ = writeln!(body, "<p><a href=\"index.html\">Back to index</a></p>");
    let _ = writeln!(body, "<h2>Tweet</h2>\n<blockquote>{}</blockquote>", escape_html(&report.text));

    let _ = writeln!(body, "<h2>Engagement</h2>\n<table>");
    let m = report.metadata;
    for (name, value) in [("Replies", m.replies), ("Quotes", m.quotes), ("Retweets", m.retweets)] {
        let _ = writeln!(body, "<tr><th>{name}</th><td>{value}</td></tr>");
    }
    let _ = writeln!(body, "</table>");

    let _ = writeln!(
        body,
        "<h2>Classification</h2>\n<p><strong>{}</strong> (probability of misinformation {:.4})</p>",
        e.label.as_str(),
        e.probability
    );

    let _ = writeln!(body, "<h2>Feature importance</h2>\n<table>");
    let values = e.grouped.values();
    let max = values.iter().fold(0.0f64, |m, v| m.max(*v));
    for name in &e.ranking {
        let idx = GROUP_NAMES.iter().position(|g| g == name).unwrap_or(3);
        let v = values[idx];
        let width = if max > 0.0 { 100.0 * v / max } else { 0.0 };
        let _ = writeln!(
            body,
            "<tr><th>{}</th><td>{v:.4}</td><td><div class=\"track\"><div class=\"bar\" style=\"width:{width:.1}%\"></div></div></td></tr>",
            group_display_name(name)
        );
    }
    let _ = writeln!(body, "</table>");
    if !e.flags.is_empty() {
        let flags = serde_json::to_string(&e.flags).unwrap_or_default();
        let _ = writeln!(body, "<p>Flags: <code>{}</code></p>", escape_html(&flags));
    }

    let a = &report.attribution;
    let _ = writeln!(body, "<h2>Word importance</h2>\n<div class=\"strip\">");
    for (token, score) in a.tokens.iter().zip(&a.normalized) {
        let _ = writeln!(
            body,
            "<span class=\"tok\" style=\"{}\" title=\"{score:.4}\">{}</span>",
            token_style(*score),
            escape_html(token)
        );
    }
    let _ = writeln!(body, "</div>");
    let _ = writeln!(
        body,
        "<p>{} integration steps, completeness gap {:.3e}</p>",
        a.steps, a.completeness_gap
    );
    page(&format!("Explanation for {}", report.node_id), &body)
}

pub fn render_index(reports: &[NodeReport], run_report: Option<&RunReport>) -> String {
    let mut body = String::from("<h1>Misinformation classification report</h1>\n");
    if let Some(run) = run_report {
        let _ = writeln!(body, "<h2>Ablation</h2>\n<table>\n<tr><th>Features</th><th>F1-score</th></tr>");
        for (&mode, summary) in &run.modes {
            let _ = writeln!(
                body,
                "<tr><td>{}</td><td>{}</td></tr>",
                mode_title(mode),
                format_score(summary)
            );
        }
        let _ = writeln!(body, "</table>");
    }
    if !reports.is_empty() {
        let _ = writeln!(body, "<h2>Explained nodes</h2>\n<table>");
        let _ = writeln!(body, "<tr><th>Node</th><th>Classification</th><th>Probability</th><th>Top feature</th></tr>");
        for r in reports {
            let e = &r.explanation;
            let _ = writeln!(
                body,
                "<tr><td><a href=\"{}\">{}</a></td><td>{}</td><td>{:.4}</td><td>{}</td></tr>",
                page_name(&r.node_id),
                escape_html(&r.node_id),
                e.label.as_str(),
                e.probability,
                group_display_name(e.top_feature())
            );
        }
        let _ = writeln!(body, "</table>");
    }
    page("Misinformation classification report", &body)
}

fn write(path: PathBuf, content: &str) -> Result<PathBuf, ReportError> {
    fs::write(&path, content).map_err(|source| ReportError::WriteFailure {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes `index.html` and one page per node into `out_dir`; returns the
/// written paths, index first.
pub fn render_report(
    reports: &[NodeReport],
    run_report: Option<&RunReport>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(out_dir).map_err(|source| ReportError::WriteFailure {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut written = vec![write(out_dir.join("index.html"), &render_index(reports, run_report))?];
    for r in reports {
        written.push(write(out_dir.join(page_name(&r.node_id)), &render_node_page(r))?);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Label;
    use crate::graphlime::GroupedImportance;

    fn fixture(normalized: Vec<f64>) -> NodeReport {
        let beta = [0.2, 0.0, 0.5, 0.1, 0.0, 0.05];
        let grouped = GroupedImportance::from_beta(&beta);
        let tokens: Vec<String> = (0..normalized.len()).map(|i| format!("w{i}")).collect();
        NodeReport {
            node_id: "t0001".into(),
            text: "a <b> & c".into(),
            metadata: Engagement {
                replies: 42,
                quotes: 7,
                retweets: 26,
            },
            explanation: Explanation {
                node_id: "t0001".into(),
                label: Label::Misinformation,
                probability: 0.91,
                beta,
                ranking: grouped.ranking(),
                grouped,
                flags: vec![],
                hops: 2,
                sample_size: 9,
            },
            attribution: TokenAttribution {
                node_id: "t0001".into(),
                scores: normalized.clone(),
                tokens,
                normalized,
                steps: 50,
                completeness_gap: 1e-6,
            },
        }
    }

    #[test]
    fn group_names_appear_once() {
        let html = render_node_page(&fixture(vec![0.5, -1.0]));
        for name in ["Number of replies", "Number of quotes", "Number of retweets", "Text embedding"] {
            assert_eq!(html.matches(name).count(), 1, "{name}");
        }
    }

    #[test]
    fn zero_attribution_is_transparent() {
        let html = render_node_page(&fixture(vec![0.0, 0.0, 0.0]));
        assert_eq!(html.matches("rgba(44,160,44,0.000)").count(), 3);
    }

    #[test]
    fn text_is_escaped_and_page_is_self_contained() {
        let html = render_node_page(&fixture(vec![1.0]));
        assert!(html.contains("a &lt;b&gt; &amp; c"));
        assert!(!html.contains("http://") && !html.contains("https://") && !html.contains("<script"));
    }

    #[test]
    fn token_colours() {
        assert_eq!(token_style(-0.5), "background:rgba(214,39,40,0.500)");
        assert_eq!(token_style(1.0), "background:rgba(44,160,44,1.000)");
    }

    #[test]
    fn page_names_are_safe() {
        assert_eq!(page_name("t/../x"), "node_t____x.html");
    }
}

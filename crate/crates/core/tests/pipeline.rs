//! Bundle files through preparation, training and explanation.

use std::fs::File;
use std::io::BufReader;

use modex::attribution::attribute_node;
use modex::gat::{read_checkpoint, write_checkpoint, Mode};
use modex::graphlime::{explain_node_expanding, GraphLimeConfig, GROUP_NAMES};
use modex::pipeline::{prepare, Bundle, PrepareOptions, EMBEDDINGS_FILE};
use modex::report::{render_report, Engagement, NodeReport};
use modex::synth::{synth_generate, SynthSpec};
use modex::train::{evaluate, train, TrainConfig};
use modex::{graph::Split, Error};

fn small_spec() -> SynthSpec {
    SynthSpec {
        tweets: 50,
        dim: 24,
        seed: 5,
        ..SynthSpec::default()
    }
}

#[test]
fn written_bundle_loads_back_identically() {
    let generated = synth_generate(&small_spec()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    generated.bundle.write(dir.path()).unwrap();
    let loaded = Bundle::load(dir.path()).unwrap();
    assert_eq!(loaded.splits, generated.bundle.splits);
    assert_eq!(loaded.graph.nodes(), generated.bundle.graph.nodes());
    let (a, b) = (loaded.embeddings.unwrap(), generated.bundle.embeddings.unwrap());
    assert_eq!(a.dim, b.dim);
    assert_eq!(a.records.len(), b.records.len());
}

#[test]
fn missing_embeddings_fall_back_or_fail() {
    let generated = synth_generate(&small_spec()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    generated.bundle.write(dir.path()).unwrap();
    std::fs::remove_file(dir.path().join(EMBEDDINGS_FILE)).unwrap();
    let bundle = Bundle::load(dir.path()).unwrap();
    assert!(bundle.embeddings.is_none());

    let data = prepare(&bundle, &PrepareOptions::default()).unwrap();
    assert_eq!(data.features.text_pooled.rows(), data.graph.node_count());
    assert!(data.features.text_tokens.iter().all(Option::is_some));

    let strict = PrepareOptions {
        fallback_encoder: false,
        ..PrepareOptions::default()
    };
    assert!(matches!(prepare(&bundle, &strict), Err(Error::Feature(_))));
}

#[test]
fn train_checkpoint_explain_round_trip() {
    let generated = synth_generate(&small_spec()).unwrap();
    let mut data = prepare(&generated.bundle, &PrepareOptions::default()).unwrap();
    let config = TrainConfig {
        epochs: 150,
        mode: Mode::Multimodal,
        ..TrainConfig::default()
    };
    let (model, history) = train(&data.graph, &data.features, &config).unwrap();
    assert_eq!(history.len(), 150);
    let losses = history.losses();
    assert!(losses[149] < losses[0]);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    write_checkpoint(&model, File::create(&path).unwrap()).unwrap();
    let restored = read_checkpoint(BufReader::new(File::open(&path).unwrap())).unwrap();
    assert_eq!(restored, model);
    let scores = evaluate(&restored, &data.graph, &data.features, Split::Test).unwrap();
    assert!((0.0..=1.0).contains(&scores.f1));

    restored.populate_multimodal(&mut data.features).unwrap();
    let id = &generated.planted[0].id;
    let node = data.node_index(id).unwrap();
    let explanation =
        explain_node_expanding(&restored, &data.graph, &data.features, node, &GraphLimeConfig::default(), 4).unwrap();
    assert!(explanation.beta.iter().all(|b| *b >= 0.0));
    assert_eq!(explanation.ranking.len(), GROUP_NAMES.len());
    let attribution = attribute_node(&restored, &data.graph, &data.features, node, 20).unwrap();
    assert_eq!(attribution.tokens.len(), attribution.scores.len());
    assert!(attribution.normalized.iter().all(|v| v.abs() <= 1.0));

    let tweet = data.hetero.node(data.hetero.index_of(id).unwrap()).tweet().unwrap();
    let report = NodeReport {
        node_id: id.clone(),
        text: tweet.text.clone(),
        metadata: Engagement {
            replies: tweet.reply_count,
            quotes: tweet.quote_count,
            retweets: tweet.retweet_count,
        },
        explanation,
        attribution,
    };
    let json = serde_json::to_string(&report).unwrap();
    assert_eq!(serde_json::from_str::<NodeReport>(&json).unwrap(), report);

    let written = render_report(&[report], None, &dir.path().join("report")).unwrap();
    assert_eq!(written.len(), 2);
    assert!(written[1].ends_with(format!("node_{id}.html")));
}

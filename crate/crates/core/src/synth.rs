//! Planted-signal benchmark bundles.
//!
//! Every tweet gets a label and, independently per modality, a flag saying
//! whether that modality carries the label. Informative engagement counts are
//! drawn high for misinformation and low for facts; informative texts mix
//! class-indicative words into neutral ones. Uninformative tweets draw counts
//! from a middle distribution and use only neutral words, so each modality on
//! its own leaves a share of tweets ambiguous that the other may resolve.
//!
//! Graph structure never depends on labels. Each tweet gets a handful of
//! replies whose counts and wording echo the parent within the same modality,
//! and a sprinkling of retweets by random users links unrelated tweets.

use std::collections::BTreeMap;
use std::str::FromStr;

use indexmap::IndexMap;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{EmbeddingRecord, EmbeddingTable, TokenEmbedding};
use crate::graph::{
    ClaimRecord, HeteroGraph, Label, NodePayload, RelationKind, Split, TweetRecord, UserRecord,
};
use crate::pipeline::{stratified_splits, Bundle};

pub const MIN_TWEETS: usize = 20;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least {MIN_TWEETS} tweets, got {0}")]
    SpecTooSmall(usize),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

/// Which modalities carry label signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalPlacement {
    Graph,
    Text,
    Both,
}

impl SignalPlacement {
    fn shallow(self) -> bool {
        self != SignalPlacement::Text
    }

    fn text(self) -> bool {
        self != SignalPlacement::Graph
    }
}

impl FromStr for SignalPlacement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "graph" => Ok(SignalPlacement::Graph),
            "text" => Ok(SignalPlacement::Text),
            "both" => Ok(SignalPlacement::Both),
            other => Err(format!("unknown signal placement {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Number of tweet nodes (replies, users and claims come on top).
    pub tweets: usize,
    /// Retweet edges per tweet.
    pub density: f64,
    pub placement: SignalPlacement,
    /// Probability that a tweet is misinformation.
    pub balance: f64,
    pub seed: u64,
    pub dim: usize,
    /// Probability that a signal-carrying modality is informative for a tweet.
    pub informative_rate: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            tweets: 200,
            density: 0.5,
            placement: SignalPlacement::Both,
            balance: 0.5,
            seed: 0,
            dim: 768,
            informative_rate: 0.65,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.tweets < MIN_TWEETS {
            return Err(SynthError::SpecTooSmall(self.tweets));
        }
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SynthError::InvalidSpec(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("balance", self.balance)?;
        unit("informative_rate", self.informative_rate)?;
        if !(self.density >= 0.0 && self.density.is_finite()) {
            return Err(SynthError::InvalidSpec("density must be nonnegative".into()));
        }
        if self.dim == 0 {
            return Err(SynthError::InvalidSpec("dim must be positive".into()));
        }
        Ok(())
    }
}

/// Ground truth for one generated tweet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTweet {
    pub id: String,
    pub label: Label,
    pub split: Split,
    pub shallow_informative: bool,
    pub text_informative: bool,
}

#[derive(Debug, Clone)]
pub struct SynthBundle {
    pub bundle: Bundle,
    pub planted: Vec<PlantedTweet>,
}

const NEUTRAL_WORDS: usize = 240;
const CLASS_WORDS: usize = 24;
const CLASS_WORDS_PER_TEXT: usize = 3;
const CLASS_SHIFT: f64 = 1.0;
/// Norm of the random part of each word vector.
const WORD_NOISE: f64 = 1.0;
const LATENT_DIM: usize = 4;
const COUNT_SIGMA: f64 = 0.35;
const MISINFO_COUNT: f64 = 40.0;
const NEUTRAL_COUNT: f64 = 15.0;
const FACT_COUNT: f64 = 6.0;
const QUOTE_COUNT: f64 = 5.0;
const REPLIES_PER_TWEET: std::ops::RangeInclusive<usize> = 2..=5;
/// Probability that a reply word is copied from the parent text.
const REPLY_ECHO: f64 = 0.5;
const REPLY_SCALE: f64 = 0.5;
const QUOTE_SHARE: f64 = 0.3;
const MENTION_RATE: f64 = 0.3;

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "pa", "qui", "fe", "do", "bra", "gu", "shi",
];

/// Pronounceable, collision-free word for index `i`.
fn word(i: usize) -> String {
    let mut s = String::new();
    let mut rest = i;
    for _ in 0..3 {
        s.push_str(SYLLABLES[rest % SYLLABLES.len()]);
        rest /= SYLLABLES.len();
    }
    s
}

struct Vocabulary {
    words: Vec<String>,
    vectors: Vec<Vec<f32>>,
}

impl Vocabulary {
    /// Neutral words first, then misinformation words, then fact words.
    ///
    /// Word vectors vary inside a random `LATENT_DIM`-dimensional subspace;
    /// class words are additionally shifted along a fixed unit direction.
    fn generate(rng: &mut ChaCha8Rng, dim: usize) -> Self {
        let unit = Normal::new(0.0, 1.0).expect("valid sigma");
        let random_unit = |rng: &mut ChaCha8Rng| {
            let mut v: Vec<f64> = (0..dim).map(|_| unit.sample(rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            v
        };
        let direction = random_unit(rng);
        let basis: Vec<Vec<f64>> = (0..LATENT_DIM).map(|_| random_unit(rng)).collect();
        let latent = Normal::new(0.0, WORD_NOISE / (LATENT_DIM as f64).sqrt()).expect("valid sigma");

        let total = NEUTRAL_WORDS + 2 * CLASS_WORDS;
        let mut words = Vec::with_capacity(total);
        let mut vectors = Vec::with_capacity(total);
        for i in 0..total {
            let shift = match i {
                i if i < NEUTRAL_WORDS => 0.0,
                i if i < NEUTRAL_WORDS + CLASS_WORDS => CLASS_SHIFT,
                _ => -CLASS_SHIFT,
            };
            let mut v: Vec<f64> = direction.iter().map(|u| shift * u).collect();
            for b in &basis {
                let z = latent.sample(rng);
                v.iter_mut().zip(b).for_each(|(x, bj)| *x += z * bj);
            }
            words.push(word(i));
            vectors.push(v.into_iter().map(|x| x as f32).collect());
        }
        Self { words, vectors }
    }

    fn class_range(label: Label) -> std::ops::Range<usize> {
        match label {
            Label::Misinformation => NEUTRAL_WORDS..NEUTRAL_WORDS + CLASS_WORDS,
            Label::Factual => NEUTRAL_WORDS + CLASS_WORDS..NEUTRAL_WORDS + 2 * CLASS_WORDS,
        }
    }

    /// Word indices for a text of `len` words, `class` words planted if given.
    fn sample_text(rng: &mut ChaCha8Rng, len: usize, class: Option<Label>) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..len).map(|_| rng.random_range(0..NEUTRAL_WORDS)).collect();
        if let Some(label) = class {
            let range = Self::class_range(label);
            let mut slots: Vec<usize> = (0..len).collect();
            slots.shuffle(rng);
            for &slot in slots.iter().take(CLASS_WORDS_PER_TEXT.min(len)) {
                ids[slot] = rng.random_range(range.clone());
            }
        }
        ids
    }

    fn record(&self, id: &str, ids: &[usize], dim: usize) -> (String, EmbeddingRecord) {
        let text = ids.iter().map(|&i| self.words[i].as_str()).collect::<Vec<_>>().join(" ");
        let tokens = ids
            .iter()
            .map(|&i| TokenEmbedding {
                text: self.words[i].clone(),
                vector: self.vectors[i].clone(),
            })
            .collect();
        (text, EmbeddingRecord::from_tokens(id, tokens, dim))
    }
}

fn count(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    let dist = LogNormal::new(mean.ln(), COUNT_SIGMA).expect("valid parameters");
    dist.sample(rng).round() as u64
}

fn pad(prefix: char, i: usize, width: usize) -> String {
    format!("{prefix}{i:0width$}")
}

/// Generates a bundle for `spec`; identical specs give identical bundles.
pub fn synth_generate(spec: &SynthSpec) -> Result<SynthBundle, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.tweets;
    let width = n.to_string().len().max(4);
    let vocab = Vocabulary::generate(&mut rng, spec.dim);

    let labels: Vec<Label> = (0..n)
        .map(|_| {
            if rng.random_bool(spec.balance) {
                Label::Misinformation
            } else {
                Label::Factual
            }
        })
        .collect();

    let mut graph = HeteroGraph::new();
    let claims_per_class = (n / 20).max(1);
    let mut claims: BTreeMap<Label, Vec<String>> = BTreeMap::new();
    for c in 0..2 * claims_per_class {
        let verdict = if c < claims_per_class {
            Label::Misinformation
        } else {
            Label::Factual
        };
        let id = pad('c', c, 3);
        graph
            .add_node(NodePayload::Claim(ClaimRecord {
                id: id.clone(),
                verdict,
            }))
            .expect("fresh id");
        claims.entry(verdict).or_default().push(id);
    }

    // one author per tweet, so tweet-tweet links come only from replies and retweets
    let n_users = n;
    let users: Vec<String> = (0..n_users).map(|u| pad('u', u, width)).collect();
    for id in &users {
        graph
            .add_node(NodePayload::User(UserRecord { id: id.clone() }))
            .expect("fresh id");
    }

    let mut records: IndexMap<String, EmbeddingRecord> = IndexMap::new();
    let mut planted = Vec::with_capacity(n);
    let mut tweet_ids = Vec::with_capacity(n);
    let mut reply_index = 0;
    for (i, &label) in labels.iter().enumerate() {
        let id = pad('t', i, width);
        let shallow_informative = spec.placement.shallow() && rng.random_bool(spec.informative_rate);
        let text_informative = spec.placement.text() && rng.random_bool(spec.informative_rate);

        let engaged = match (shallow_informative, label) {
            (false, _) => NEUTRAL_COUNT,
            (true, Label::Misinformation) => MISINFO_COUNT,
            (true, Label::Factual) => FACT_COUNT,
        };
        let len = rng.random_range(6..=12);
        let ids = Vocabulary::sample_text(&mut rng, len, text_informative.then_some(label));
        let (text, record) = vocab.record(&id, &ids, spec.dim);
        records.insert(id.clone(), record);
        graph
            .add_node(NodePayload::Tweet(TweetRecord {
                id: id.clone(),
                text,
                reply_count: count(&mut rng, engaged),
                quote_count: count(&mut rng, QUOTE_COUNT),
                retweet_count: count(&mut rng, engaged),
                language: "en".into(),
            }))
            .expect("fresh id");
        graph.add_edge(&users[i], RelationKind::Posted, &id).expect("valid edge");
        let claim = claims[&label].choose(&mut rng).expect("claims per class");
        graph.add_edge(&id, RelationKind::Discusses, claim).expect("valid edge");
        if rng.random_bool(MENTION_RATE) {
            let mentioned = rng.random_range(0..n_users);
            graph.add_edge(&id, RelationKind::Mentions, &users[mentioned]).expect("valid edge");
        }

        // Replies echo their parent within each modality: engagement follows
        // the parent's level and part of the wording is copied. Neither
        // carries information the parent's own modality does not.
        for _ in 0..rng.random_range(REPLIES_PER_TWEET) {
            let reply = pad('r', reply_index, width + 1);
            reply_index += 1;
            let len = rng.random_range(4..=8);
            let reply_ids: Vec<usize> = (0..len)
                .map(|_| {
                    if rng.random_bool(REPLY_ECHO) {
                        *ids.choose(&mut rng).expect("nonempty text")
                    } else {
                        rng.random_range(0..NEUTRAL_WORDS)
                    }
                })
                .collect();
            let (text, record) = vocab.record(&reply, &reply_ids, spec.dim);
            records.insert(reply.clone(), record);
            graph
                .add_node(NodePayload::Reply(TweetRecord {
                    id: reply.clone(),
                    text,
                    reply_count: count(&mut rng, REPLY_SCALE * engaged),
                    quote_count: count(&mut rng, REPLY_SCALE * QUOTE_COUNT),
                    retweet_count: count(&mut rng, REPLY_SCALE * engaged),
                    language: "en".into(),
                }))
                .expect("fresh id");
            let relation = if rng.random_bool(QUOTE_SHARE) {
                RelationKind::QuoteOf
            } else {
                RelationKind::ReplyTo
            };
            graph.add_edge(&reply, relation, &id).expect("valid edge");
            let replier = rng.random_range(0..n_users);
            graph.add_edge(&users[replier], RelationKind::Posted, &reply).expect("valid edge");
        }

        planted.push(PlantedTweet {
            id: id.clone(),
            label,
            split: Split::Unlabeled,
            shallow_informative,
            text_informative,
        });
        tweet_ids.push(id);
    }

    // retweets ignore labels entirely
    let retweets = (spec.density * n as f64).round() as usize;
    for _ in 0..retweets {
        let user = rng.random_range(0..n_users);
        let t = rng.random_range(0..n);
        graph.add_edge(&users[user], RelationKind::Retweeted, &tweet_ids[t]).expect("valid edge");
    }

    let labeled: Vec<(&str, Label)> = tweet_ids.iter().map(String::as_str).zip(labels.iter().copied()).collect();
    let splits = stratified_splits(&labeled, &mut rng);
    for p in &mut planted {
        p.split = splits[&p.id];
    }

    Ok(SynthBundle {
        bundle: Bundle {
            graph,
            splits,
            embeddings: Some(EmbeddingTable {
                dim: spec.dim,
                records,
            }),
        },
        planted,
    })
}

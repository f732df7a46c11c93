//! Random forest mapping phrase text to a gesture name.
//!
//! Features are token-presence booleans over a vocabulary built from the
//! training corpus. Each tree is grown on a bootstrap sample with its own
//! feature subset; both are drawn from a ChaCha stream keyed by
//! `(seed, tree index)`, so training is reproducible regardless of how many
//! threads build the trees.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{parse_json, Error, Result};

pub const DEFAULT_TREES: usize = 500;

/// Lowercased alphanumeric runs, in order of appearance.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Token multiset.
pub fn tokenize(text: &str) -> BTreeMap<String, usize> {
    let mut bag = BTreeMap::new();
    for t in tokens(text) {
        *bag.entry(t).or_insert(0) += 1;
    }
    bag
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub text: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingCorpus {
    pub samples: Vec<Sample>,
}

impl TrainingCorpus {
    pub fn from_json(raw: &[u8]) -> Result<Self> {
        parse_json(raw)
    }

    /// Distinct labels in first-occurrence order.
    pub fn labels(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.samples
            .iter()
            .filter(|s| seen.insert(s.label.as_str()))
            .map(|s| s.label.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Terms in first-occurrence order over the given texts.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut terms = Vec::new();
        let mut index = HashMap::new();
        for text in texts {
            for t in tokens(text) {
                if !index.contains_key(&t) {
                    index.insert(t.clone(), terms.len());
                    terms.push(t);
                }
            }
        }
        Vocabulary { terms, index }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn position(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Sorted, deduplicated vocabulary positions of the tokens in `text`.
    pub fn features(&self, text: &str) -> Vec<usize> {
        let mut f: Vec<usize> = tokens(text)
            .iter()
            .filter_map(|t| self.position(t))
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(terms: Vec<String>) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { terms, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.terms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        present: usize,
        absent: usize,
    },
    /// Sample counts per label, indexed like the model's label list.
    Leaf { counts: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tree {
    pub features: Vec<usize>,
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, present: &[usize]) -> &[u32] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    present: yes,
                    absent: no,
                } => {
                    at = if present.binary_search(feature).is_ok() {
                        *yes
                    } else {
                        *no
                    };
                }
                Node::Leaf { counts } => return counts,
            }
        }
    }

    /// Majority label index of the leaf reached by `present`; earliest label on ties.
    pub fn vote(&self, present: &[usize]) -> usize {
        argmax_first(self.leaf(present))
    }
}

fn argmax_first(counts: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

fn gini(counts: &[u32], total: u32) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

struct Grower<'a> {
    rows: &'a [Vec<usize>],
    labels: &'a [usize],
    n_labels: usize,
    features: &'a [usize],
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<u32> {
        let mut c = vec![0u32; self.n_labels];
        for &i in idx {
            c[self.labels[i]] += 1;
        }
        c
    }

    fn grow(&mut self, idx: Vec<usize>) -> usize {
        let counts = self.counts(&idx);
        let total = idx.len() as u32;
        let impurity = gini(&counts, total);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf {
            counts: counts.clone(),
        });
        if pure || idx.len() < 2 {
            return slot;
        }

        let mut best: Option<(usize, f64)> = None;
        for &f in self.features {
            let mut yes = vec![0u32; self.n_labels];
            let mut n_yes = 0u32;
            for &i in &idx {
                if self.rows[i].binary_search(&f).is_ok() {
                    yes[self.labels[i]] += 1;
                    n_yes += 1;
                }
            }
            if n_yes == 0 || n_yes == total {
                continue;
            }
            let no: Vec<u32> = counts.iter().zip(&yes).map(|(a, b)| a - b).collect();
            let n_no = total - n_yes;
            let weighted =
                (n_yes as f64 * gini(&yes, n_yes) + n_no as f64 * gini(&no, n_no)) / total as f64;
            let gain = impurity - weighted;
            if gain > 1e-12 && best.is_none_or(|(_, g)| gain > g) {
                best = Some((f, gain));
            }
        }
        let Some((feature, _)) = best else {
            return slot;
        };

        let (with, without): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.rows[i].binary_search(&feature).is_ok());
        let present = self.grow(with);
        let absent = self.grow(without);
        self.nodes[slot] = Node::Split {
            feature,
            present,
            absent,
        };
        slot
    }
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

/// Trained forest with its vocabulary and label order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GestureModel {
    pub labels: Vec<String>,
    pub seed: u64,
    pub vocabulary: Vocabulary,
    pub trees: Vec<Tree>,
}

/// Features drawn per tree: the ceiling of the square root of the vocabulary size.
pub fn feature_subset_size(vocab: usize) -> usize {
    let mut m = (vocab as f64).sqrt() as usize;
    while m * m < vocab {
        m += 1;
    }
    while m > 0 && (m - 1) * (m - 1) >= vocab {
        m -= 1;
    }
    m
}

pub fn train_forest(corpus: &TrainingCorpus, trees: usize, seed: u64) -> Result<GestureModel> {
    if trees < 1 {
        return Err(Error::Config("forest needs at least one tree".into()));
    }
    let labels = corpus.labels();
    if labels.len() < 2 || corpus.samples.len() < 2 {
        return Err(Error::DegenerateCorpus(format!(
            "need at least 2 labels and 2 samples, got {} labels and {} samples",
            labels.len(),
            corpus.samples.len()
        )));
    }
    let vocabulary = Vocabulary::build(corpus.samples.iter().map(|s| s.text.as_str()));
    let rows: Vec<Vec<usize>> = corpus
        .samples
        .iter()
        .map(|s| vocabulary.features(&s.text))
        .collect();
    let y: Vec<usize> = corpus
        .samples
        .iter()
        .map(|s| labels.iter().position(|l| *l == s.label).unwrap_or(0))
        .collect();
    let n = rows.len();
    let m = feature_subset_size(vocabulary.len());

    let forest: Vec<Tree> = (0..trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(seed, t);
            let boot: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut features = sample(&mut rng, vocabulary.len(), m).into_vec();
            features.sort_unstable();
            let mut grower = Grower {
                rows: &rows,
                labels: &y,
                n_labels: labels.len(),
                features: &features,
                nodes: Vec::new(),
            };
            grower.grow(boot);
            let nodes = grower.nodes;
            Tree { features, nodes }
        })
        .collect();

    Ok(GestureModel {
        labels,
        seed,
        vocabulary,
        trees: forest,
    })
}

impl GestureModel {
    /// Per-label tree vote counts for `text`.
    pub fn votes(&self, text: &str) -> Vec<usize> {
        let present = self.vocabulary.features(text);
        let mut tally = vec![0usize; self.labels.len()];
        for tree in &self.trees {
            tally[tree.vote(&present)] += 1;
        }
        tally
    }

    /// Plurality label; earlier labels win ties.
    pub fn predict(&self, text: &str) -> &str {
        let tally = self.votes(text);
        let mut best = 0;
        for (i, &v) in tally.iter().enumerate() {
            if v > tally[best] {
                best = i;
            }
        }
        &self.labels[best]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(raw: &[u8]) -> Result<Self> {
        let model: GestureModel = parse_json(raw)?;
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidRecord(format!("model: {m}")));
        if self.labels.is_empty() || self.trees.is_empty() {
            return bad("no labels or no trees".into());
        }
        for (t, tree) in self.trees.iter().enumerate() {
            for node in &tree.nodes {
                match node {
                    Node::Split {
                        present, absent, ..
                    } if *present >= tree.nodes.len() || *absent >= tree.nodes.len() => {
                        return bad(format!("tree {t} has a dangling child"));
                    }
                    Node::Leaf { counts } if counts.len() != self.labels.len() => {
                        return bad(format!("tree {t} has a leaf of the wrong width"));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use proptest::prelude::*;

    fn corpus(pairs: &[(&str, &str)]) -> TrainingCorpus {
        TrainingCorpus {
            samples: pairs
                .iter()
                .map(|(t, l)| Sample {
                    text: t.to_string(),
                    label: l.to_string(),
                })
                .collect(),
        }
    }

    #[test]
    fn tokenize_examples() {
        let bag = tokenize("And, yes he stands like this");
        let keys: Vec<_> = bag.keys().cloned().collect();
        assert_eq!(keys, ["and", "he", "like", "stands", "this", "yes"]);
        assert!(bag.values().all(|&c| c == 1));
        assert!(tokenize("").is_empty());
        let bag = tokenize("Hang out, hang out!");
        assert_eq!(bag.len(), 2);
        assert_eq!(bag["hang"], 2);
        assert_eq!(bag["out"], 2);
    }

    #[test]
    fn subset_size_is_ceil_sqrt() {
        assert_eq!(feature_subset_size(0), 0);
        assert_eq!(feature_subset_size(1), 1);
        assert_eq!(feature_subset_size(9), 3);
        assert_eq!(feature_subset_size(10), 4);
        assert_eq!(feature_subset_size(108), 11);
    }

    #[test]
    fn vocabulary_keeps_first_occurrence_order() {
        let v = Vocabulary::build(["b a", "c a b d"]);
        assert_eq!(v.terms(), ["b", "a", "c", "d"]);
        assert_eq!(v.features("D and B"), vec![0, 3]);
    }

    #[test]
    fn separable_corpus_is_learned_exactly() {
        let c = synth::disjoint_corpus(9, 12, 6, 7);
        let model = train_forest(&c, DEFAULT_TREES, 11).unwrap();
        assert_eq!(model.trees.len(), 500);
        for s in &c.samples {
            assert_eq!(model.predict(&s.text), s.label);
        }
    }

    #[test]
    fn contradictory_samples_do_not_crash() {
        let c = corpus(&[("same words", "b"), ("same words", "a")]);
        let m = train_forest(&c, 25, 1).unwrap();
        let first = m.predict("same words").to_string();
        assert!(m.labels.contains(&first));
        assert_eq!(m.predict("same words"), first);
    }

    #[test]
    fn oov_and_empty_text_predict_a_trained_label() {
        let c = synth::disjoint_corpus(3, 5, 4, 2);
        let m = train_forest(&c, 50, 3).unwrap();
        let oov = m.predict("zzz qqq").to_string();
        assert!(m.labels.contains(&oov));
        let empty = m.predict("").to_string();
        assert_eq!(empty, oov);
        assert_eq!(train_forest(&c, 50, 3).unwrap().predict(""), empty);
    }

    #[test]
    fn training_errors() {
        let one = corpus(&[("a", "x"), ("b", "x")]);
        assert!(matches!(
            train_forest(&one, 5, 0),
            Err(Error::DegenerateCorpus(_))
        ));
        let two = corpus(&[("a", "x"), ("b", "y")]);
        assert!(matches!(train_forest(&two, 0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn leaves_sum_to_their_samples() {
        let c = synth::disjoint_corpus(4, 6, 5, 9);
        let m = train_forest(&c, 20, 4).unwrap();
        for tree in &m.trees {
            let total: u32 = tree
                .nodes
                .iter()
                .filter_map(|n| match n {
                    Node::Leaf { counts } => Some(counts.iter().sum::<u32>()),
                    Node::Split { .. } => None,
                })
                .sum();
            assert_eq!(total as usize, c.samples.len());
        }
    }

    #[test]
    fn model_round_trips() {
        let c = synth::disjoint_corpus(3, 6, 4, 5);
        let m = train_forest(&c, 30, 8).unwrap();
        let json = m.to_json().unwrap();
        let back = GestureModel::from_json(json.as_bytes()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn independent_vote_tally_matches_predict() {
        let c = synth::disjoint_corpus(5, 8, 5, 1);
        let m = train_forest(&c, 41, 2).unwrap();
        for text in ["", "l0w0 l1w3", "l4w1 l4w2 l2w7", "nothing here"] {
            let present = m.vocabulary.features(text);
            let mut tally = vec![0usize; m.labels.len()];
            for tree in &m.trees {
                let mut at = 0;
                let counts = loop {
                    match &tree.nodes[at] {
                        Node::Split {
                            feature,
                            present: p,
                            absent: a,
                        } => {
                            at = if present.contains(feature) { *p } else { *a };
                        }
                        Node::Leaf { counts } => break counts,
                    }
                };
                let max = *counts.iter().max().unwrap();
                tally[counts.iter().position(|&c| c == max).unwrap()] += 1;
            }
            let max = *tally.iter().max().unwrap();
            let winner = &m.labels[tally.iter().position(|&v| v == max).unwrap()];
            assert_eq!(m.predict(text), winner);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn predictions_stay_in_the_label_set(text in "[a-z0-9_ ,.!]{0,60}", seed in 0u64..1000) {
            let c = synth::disjoint_corpus(3, 4, 3, seed);
            let m = train_forest(&c, 15, seed).unwrap();
            let label = m.predict(&text);
            prop_assert!(m.labels.iter().any(|l| l == label));
        }
    }
}

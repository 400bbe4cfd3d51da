//! Random generators and brute-force oracles for the acceptance suite.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use smf_core::kb::{KbBuilder, KnowledgeBase, THING};
use smf_core::predictions::{Category, PredictionCorpus, PredictionDistribution};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

#[derive(Clone, Copy, Debug)]
pub struct KbShape {
    pub max_classes: usize,
    pub max_parents: usize,
    pub max_individuals: usize,
    pub max_classes_per_individual: usize,
    pub data_props: usize,
    pub object_props: usize,
    pub max_property_assertions: usize,
    pub max_relation_assertions: usize,
}

impl KbShape {
    pub const SMALL: KbShape = KbShape {
        max_classes: 12,
        max_parents: 2,
        max_individuals: 10,
        max_classes_per_individual: 2,
        data_props: 4,
        object_props: 3,
        max_property_assertions: 8,
        max_relation_assertions: 6,
    };

    pub const DAG: KbShape = KbShape {
        max_classes: 50,
        max_parents: 3,
        max_individuals: 12,
        max_classes_per_individual: 3,
        data_props: 0,
        object_props: 0,
        max_property_assertions: 0,
        max_relation_assertions: 0,
    };
}

/// A random valid knowledge base. Classes get shuffled names so that name
/// order is unrelated to the topological order used to pick parents.
pub fn random_kb(rng: &mut ChaCha8Rng, shape: KbShape) -> KnowledgeBase {
    let n = rng.random_range(1..=shape.max_classes);
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let names: Vec<String> = ids.iter().map(|i| format!("K{i:02}")).collect();

    let mut b = KbBuilder::new();
    b.class(THING, Vec::<String>::new()).unwrap();
    for i in 0..n {
        let k = rng.random_range(1..=shape.max_parents);
        let mut pool: Vec<String> = names[..i].to_vec();
        pool.push(THING.to_string());
        let parents: BTreeSet<String> = pool
            .choose_multiple(rng, k.min(pool.len()))
            .cloned()
            .collect();
        b.class(&names[i], parents).unwrap();
        if rng.random_bool(0.3) {
            b.phrase(&names[i], &format!("phrase {}", names[i].to_lowercase()))
                .unwrap();
        }
    }

    let m = rng.random_range(1..=shape.max_individuals);
    let individuals: Vec<String> = (0..m).map(|i| format!("ind_{i}")).collect();
    for ind in &individuals {
        let k = rng.random_range(1..=shape.max_classes_per_individual.min(n));
        let classes: Vec<String> = names.choose_multiple(rng, k).cloned().collect();
        b.individual(ind, classes).unwrap();
    }

    let subjects: Vec<&String> = names.iter().chain(&individuals).collect();
    let data: Vec<String> = (0..shape.data_props).map(|i| format!("dp_{i}")).collect();
    let objs: Vec<String> = (0..shape.object_props).map(|i| format!("op_{i}")).collect();
    for p in &data {
        b.data_property(p).unwrap();
    }
    for p in &objs {
        b.object_property(p).unwrap();
    }
    if !data.is_empty() {
        for _ in 0..rng.random_range(0..=shape.max_property_assertions) {
            let s = subjects.choose(rng).unwrap();
            let p = data.choose(rng).unwrap();
            let v = rng
                .random_bool(0.5)
                .then(|| format!("v{}", rng.random_range(0..3)));
            b.has(s, p, v.as_deref());
        }
    }
    if !objs.is_empty() {
        for _ in 0..rng.random_range(0..=shape.max_relation_assertions) {
            let s = subjects.choose(rng).unwrap();
            let o = subjects.choose(rng).unwrap();
            b.rel(s, objs.choose(rng).unwrap(), o);
        }
    }
    b.build().expect("generator produces valid knowledge bases")
}

/// A label for a random view: usually a known individual written in a
/// human form, sometimes an unknown word.
pub fn random_label(rng: &mut ChaCha8Rng, kb: &KnowledgeBase) -> String {
    let names: Vec<&String> = kb.individuals().keys().collect();
    if rng.random_bool(0.25) {
        return ["unicorn", "griffin", "arctic fox", "hydra"]
            .choose(rng)
            .unwrap()
            .to_string();
    }
    let name = names.choose(rng).unwrap();
    match rng.random_range(0..3) {
        0 => name.to_string(),
        1 => name.replace('_', " "),
        _ => name.to_uppercase().replace('_', " "),
    }
}

/// Shortest superclass distance from the individual's asserted classes,
/// by relaxing every edge until nothing changes.
pub fn oracle_depths(individual: &str, kb: &KnowledgeBase) -> BTreeMap<String, usize> {
    let mut dist: BTreeMap<String, usize> = kb
        .individual(individual)
        .unwrap()
        .asserted_classes
        .iter()
        .map(|c| (c.clone(), 0))
        .collect();
    loop {
        let mut changed = false;
        for (name, def) in kb.classes() {
            let Some(&d) = dist.get(name) else { continue };
            for p in &def.parents {
                if dist.get(p).is_none_or(|&old| d + 1 < old) {
                    dist.insert(p.clone(), d + 1);
                    changed = true;
                }
            }
        }
        if !changed {
            return dist;
        }
    }
}

/// Ancestors ordered by depth then name, with Thing last.
pub fn oracle_ancestor_order(individual: &str, kb: &KnowledgeBase) -> Vec<(String, usize)> {
    let mut v: Vec<(String, usize)> = oracle_depths(individual, kb).into_iter().collect();
    v.sort_by(|a, b| (a.0 == THING, a.1, &a.0).cmp(&(b.0 == THING, b.1, &b.0)));
    v
}

/// The common non-Thing ancestor with the smallest position in the first
/// individual's order.
pub fn oracle_lca(a: &str, b: &str, kb: &KnowledgeBase) -> Option<String> {
    let first = oracle_ancestor_order(a, kb);
    let second: BTreeSet<String> = oracle_depths(b, kb).into_keys().collect();
    first
        .into_iter()
        .enumerate()
        .filter(|(_, (c, _))| c != THING && second.contains(c))
        .min_by_key(|(pos, _)| *pos)
        .map(|(_, (c, _))| c)
}

/// A random two-classifier corpus whose labels come from `kb`.
pub fn random_corpus(
    rng: &mut ChaCha8Rng,
    kb: &KnowledgeBase,
    max_images: usize,
) -> PredictionCorpus {
    let mut corpus = PredictionCorpus::new();
    let images = rng.random_range(0..=max_images);
    for i in 0..images {
        let shared = random_label(rng, kb);
        let category = [None, Some(Category::Food), Some(Category::Animals)]
            .choose(rng)
            .copied()
            .flatten();
        for classifier in ["resnet", "alexnet"] {
            let mut labels: Vec<String> = Vec::new();
            let top = if rng.random_bool(0.3) {
                shared.clone()
            } else {
                random_label(rng, kb)
            };
            labels.push(top);
            for j in 0..rng.random_range(0..3) {
                labels.push(format!("other {j}"));
            }
            let len = labels.len();
            let mut weights: Vec<f64> = (0..len).map(|_| rng.random_range(0.01..1.0)).collect();
            weights[0] += 1.0;
            let total: f64 = weights.iter().sum();
            let probs = weights.iter().map(|w| w / total).collect();
            let d = PredictionDistribution::new(
                format!("img{i:03}"),
                classifier.to_string(),
                labels,
                probs,
            )
            .unwrap();
            corpus.insert(d, category, None).unwrap();
        }
    }
    corpus
}

/// Percentage rounding in integer arithmetic: nearest, halves away from zero.
pub fn oracle_percent(count: u64, of: u64) -> String {
    if of == 0 {
        format!("{count} (–)")
    } else {
        format!("{count} ({}%)", (200 * count + of) / (2 * of))
    }
}

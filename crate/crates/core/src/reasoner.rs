//! Entailment queries over a [`KnowledgeBase`]: individual lookup, ordered
//! ancestors, inherited properties, lifted relationships and the lowest
//! common ancestor of two individuals.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{KnowledgeBase, THING};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReasonerError {
    #[error("unknown individual `{0}`")]
    UnknownIndividual(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AncestorEntry {
    pub class: String,
    pub depth: usize,
}

/// Ancestors of an individual, closest first.
///
/// Depth is the shortest superclass path from any asserted class (asserted
/// classes have depth 0). Entries are ordered by depth, then by name, with
/// `Thing` always last. Under multiple inheritance `Thing` can be closer
/// than some other ancestor; it keeps its true depth but still sorts last.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AncestorList {
    entries: Vec<AncestorEntry>,
}

impl AncestorList {
    pub fn entries(&self) -> &[AncestorEntry] {
        &self.entries
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.class.as_str())
    }

    pub fn contains(&self, class: &str) -> bool {
        self.entries.iter().any(|e| e.class == class)
    }

    pub fn position(&self, class: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.class == class)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Which argument of [`get_relationships`] the rendered subject came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// subject is the first individual, object the second
    Forward,
    /// subject is the second individual, object the first
    Reverse,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::Forward => Direction::Reverse,
            Direction::Reverse => Direction::Forward,
        }
    }
}

/// A relationship assertion applied to two individuals through their
/// ancestor classes.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LiftedRelationship {
    pub subject_individual: String,
    pub predicate: String,
    pub object_individual: String,
    pub asserted_subject: String,
    pub asserted_object: String,
    pub direction: Direction,
}

impl LiftedRelationship {
    /// The same relationship with `direction` ignored, for comparisons that
    /// do not care about argument order.
    pub fn undirected(&self) -> (&str, &str, &str, &str, &str) {
        (
            &self.subject_individual,
            &self.predicate,
            &self.object_individual,
            &self.asserted_subject,
            &self.asserted_object,
        )
    }
}

/// Inherited property name → value from the most specific source.
pub type PropertySet = BTreeMap<String, Option<String>>;

/// The individual named exactly `label`, if any.
pub fn match_view_with_individual<'kb>(label: &str, kb: &'kb KnowledgeBase) -> Option<&'kb str> {
    kb.individual(label).map(|i| i.name.as_str())
}

pub fn ancestors(individual: &str, kb: &KnowledgeBase) -> Result<AncestorList, ReasonerError> {
    let ind = kb
        .individual(individual)
        .ok_or_else(|| ReasonerError::UnknownIndividual(individual.to_string()))?;

    let mut depth: HashMap<&str, usize> = HashMap::new();
    let mut queue: VecDeque<&str> = VecDeque::new();
    for c in &ind.asserted_classes {
        if depth.insert(c, 0).is_none() {
            queue.push_back(c);
        }
    }
    while let Some(c) = queue.pop_front() {
        let d = depth[c];
        let Some(def) = kb.class(c) else { continue };
        for p in &def.parents {
            if !depth.contains_key(p.as_str()) {
                depth.insert(p, d + 1);
                queue.push_back(p);
            }
        }
    }

    let mut entries: Vec<AncestorEntry> = depth
        .into_iter()
        .map(|(class, depth)| AncestorEntry {
            class: class.to_string(),
            depth,
        })
        .collect();
    entries.sort_by(|a, b| {
        (a.class == THING, a.depth, &a.class).cmp(&(b.class == THING, b.depth, &b.class))
    });
    Ok(AncestorList { entries })
}

/// Properties asserted on the individual or any ancestor, collapsed by
/// property name. The closest assertion (individual first, then ancestor
/// order) supplies the value.
pub fn get_properties(individual: &str, kb: &KnowledgeBase) -> Result<PropertySet, ReasonerError> {
    let anc = ancestors(individual, kb)?;
    let mut by_subject: HashMap<&str, Vec<(&str, Option<&str>)>> = HashMap::new();
    for pa in kb.property_assertions() {
        by_subject
            .entry(pa.subject.as_str())
            .or_default()
            .push((pa.property.as_str(), pa.value.as_deref()));
    }
    let mut out = PropertySet::new();
    for subject in std::iter::once(individual).chain(anc.classes()) {
        for (prop, value) in by_subject.get(subject).into_iter().flatten() {
            out.entry(prop.to_string())
                .or_insert_with(|| value.map(str::to_string));
        }
    }
    Ok(out)
}

/// All relationship assertions connecting `i1` and `i2` in either
/// direction, where each side may be the individual itself or one of its
/// ancestor classes.
pub fn get_relationships(
    i1: &str,
    i2: &str,
    kb: &KnowledgeBase,
) -> Result<BTreeSet<LiftedRelationship>, ReasonerError> {
    let side = |ind: &str| -> Result<BTreeSet<String>, ReasonerError> {
        let mut s: BTreeSet<String> = ancestors(ind, kb)?.classes().map(str::to_string).collect();
        s.insert(ind.to_string());
        Ok(s)
    };
    let side1 = side(i1)?;
    let side2 = side(i2)?;

    let mut out = BTreeSet::new();
    for ra in kb.relation_assertions() {
        if side1.contains(&ra.subject) && side2.contains(&ra.object) {
            out.insert(LiftedRelationship {
                subject_individual: i1.to_string(),
                predicate: ra.predicate.clone(),
                object_individual: i2.to_string(),
                asserted_subject: ra.subject.clone(),
                asserted_object: ra.object.clone(),
                direction: Direction::Forward,
            });
        }
        if side2.contains(&ra.subject) && side1.contains(&ra.object) {
            out.insert(LiftedRelationship {
                subject_individual: i2.to_string(),
                predicate: ra.predicate.clone(),
                object_individual: i1.to_string(),
                asserted_subject: ra.subject.clone(),
                asserted_object: ra.object.clone(),
                direction: Direction::Reverse,
            });
        }
    }
    Ok(out)
}

/// First class of `a` that also appears in `b`. `Thing` never counts.
pub fn lowest_level_ancestor(a: &AncestorList, b: &AncestorList) -> Option<String> {
    a.classes()
        .filter(|c| *c != THING)
        .find(|c| b.contains(c))
        .map(str::to_string)
}

/// Reflexive-transitive superclass test.
pub fn is_subclass(c1: &str, c2: &str, kb: &KnowledgeBase) -> Result<bool, ReasonerError> {
    for c in [c1, c2] {
        if kb.class(c).is_none() {
            return Err(ReasonerError::UnknownClass(c.to_string()));
        }
    }
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut stack = vec![c1];
    while let Some(c) = stack.pop() {
        if c == c2 {
            return Ok(true);
        }
        if !seen.insert(c) {
            continue;
        }
        if let Some(def) = kb.class(c) {
            stack.extend(def.parents.iter().map(String::as_str));
        }
    }
    Ok(false)
}

/// A knowledge base paired with a memo of ancestor lists.
///
/// Results are identical to the free functions; the cache only saves
/// repeated breadth-first walks and is safe to share across threads.
pub struct Reasoner<'kb> {
    kb: &'kb KnowledgeBase,
    cache: RwLock<HashMap<String, AncestorList>>,
}

impl<'kb> Reasoner<'kb> {
    pub fn new(kb: &'kb KnowledgeBase) -> Self {
        Reasoner {
            kb,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn kb(&self) -> &'kb KnowledgeBase {
        self.kb
    }

    pub fn ancestors(&self, individual: &str) -> Result<AncestorList, ReasonerError> {
        if let Some(hit) = self.cache.read().unwrap().get(individual) {
            return Ok(hit.clone());
        }
        let list = ancestors(individual, self.kb)?;
        self.cache
            .write()
            .unwrap()
            .insert(individual.to_string(), list.clone());
        Ok(list)
    }
}

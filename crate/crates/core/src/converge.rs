//! The explain and converge meta-operations.
//!
//! A [`View`] is one classifier's top label. Two differing views are
//! *explained* when both labels name individuals in the knowledge base, and
//! *unified* when [`converge`] finds a common abstraction, shared property
//! or connecting relationship.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{KnowledgeBase, THING};
use crate::reasoner::{self, AncestorList, LiftedRelationship};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConvergeError {
    #[error("label {0:?} is empty after normalization")]
    EmptyLabel(String),
    #[error("cannot render an empty convergence")]
    EmptyConvergence,
}

/// Lowercase, trim, and join words with `_`.
///
/// Whitespace runs and hyphens become a single `_`; any other character
/// outside `[a-z0-9_]` is dropped (`"potter's wheel"` → `potters_wheel`).
pub fn normalize(raw_label: &str) -> Result<String, ConvergeError> {
    let lowered = raw_label.trim().to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    let mut pending_sep = false;
    for c in lowered.chars() {
        if c.is_whitespace() || c == '-' {
            pending_sep = true;
        } else if c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' {
            if pending_sep && !out.is_empty() && !out.ends_with('_') {
                out.push('_');
            }
            pending_sep = false;
            out.push(c);
        }
    }
    if out.is_empty() {
        Err(ConvergeError::EmptyLabel(raw_label.to_string()))
    } else {
        Ok(out)
    }
}

/// Human-readable form of a label: trimmed, `_` replaced by spaces and
/// whitespace collapsed. Case is kept (`"CD player"`).
pub fn display_label(raw_label: &str) -> String {
    raw_label
        .replace('_', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct View {
    raw_label: String,
    normalized_label: String,
    source: String,
}

impl View {
    pub fn new(raw_label: &str, source: &str) -> Result<View, ConvergeError> {
        Ok(View {
            normalized_label: normalize(raw_label)?,
            raw_label: raw_label.to_string(),
            source: source.to_string(),
        })
    }

    pub fn raw_label(&self) -> &str {
        &self.raw_label
    }

    pub fn normalized_label(&self) -> &str {
        &self.normalized_label
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn display(&self) -> String {
        display_label(&self.raw_label)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub left_label: String,
    pub right_label: String,
    pub left_class: String,
    pub right_class: String,
    pub rendered: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Convergence {
    pub abstraction: Option<String>,
    pub properties: BTreeSet<String>,
    pub relationships: BTreeSet<LiftedRelationship>,
}

impl Convergence {
    pub fn is_empty(&self) -> bool {
        self.abstraction.is_none() && self.properties.is_empty() && self.relationships.is_empty()
    }

    /// Number of component kinds (abstraction, property, relationship)
    /// present.
    pub fn kind_count(&self) -> usize {
        usize::from(self.abstraction.is_some())
            + usize::from(!self.properties.is_empty())
            + usize::from(!self.relationships.is_empty())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Same,
    Unified,
    Disunited,
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutcomeKind::Same => "same",
            OutcomeKind::Unified => "unified",
            OutcomeKind::Disunited => "disunited",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub kind: OutcomeKind,
    pub explained: bool,
    pub convergence: Option<Convergence>,
    pub explanation: Option<Explanation>,
}

/// Class used to describe an individual: the first asserted class with a
/// phrase, else the closest depth-1 ancestor (preferring one with a phrase),
/// else the first asserted class.
fn explanation_class(ancestors: &AncestorList, kb: &KnowledgeBase) -> String {
    let has_phrase = |c: &str| kb.class(c).is_some_and(|d| d.display_phrase.is_some());
    let at_depth = |d: usize| {
        ancestors
            .entries()
            .iter()
            .filter(move |e| e.depth == d && e.class != THING)
            .map(|e| e.class.as_str())
    };
    at_depth(0)
        .find(|c| has_phrase(c))
        .or_else(|| at_depth(1).find(|c| has_phrase(c)))
        .or_else(|| at_depth(1).next())
        .or_else(|| at_depth(0).next())
        .unwrap_or(THING)
        .to_string()
}

/// Why two views differ, by class. Absent when either label has no
/// individual, or both labels name the same individual.
pub fn explain(v1: &View, v2: &View, kb: &KnowledgeBase) -> Option<Explanation> {
    let i1 = reasoner::match_view_with_individual(v1.normalized_label(), kb)?;
    let i2 = reasoner::match_view_with_individual(v2.normalized_label(), kb)?;
    if i1 == i2 {
        return None;
    }
    let left_class = explanation_class(&reasoner::ancestors(i1, kb).ok()?, kb);
    let right_class = explanation_class(&reasoner::ancestors(i2, kb).ok()?, kb);
    let mut e = Explanation {
        left_label: v1.display(),
        right_label: v2.display(),
        left_class,
        right_class,
        rendered: String::new(),
    };
    e.rendered = render_explanation(&e, kb);
    Some(e)
}

pub fn render_explanation(e: &Explanation, kb: &KnowledgeBase) -> String {
    format!(
        "{} is a kind of {} and {} is a kind of {}",
        e.left_label,
        kb.class_phrase(&e.left_class),
        e.right_label,
        kb.class_phrase(&e.right_class)
    )
}

/// Unify two views into higher-level knowledge.
///
/// Both labels are matched to individuals; if either fails (or both match
/// the same individual) the result is empty. Otherwise the result holds the
/// properties both individuals have, every relationship between them in
/// either direction, and their lowest common non-`Thing` ancestor.
pub fn converge(v1: &View, v2: &View, kb: &KnowledgeBase) -> Convergence {
    let (Some(i1), Some(i2)) = (
        reasoner::match_view_with_individual(v1.normalized_label(), kb),
        reasoner::match_view_with_individual(v2.normalized_label(), kb),
    ) else {
        return Convergence::default();
    };
    if i1 == i2 {
        return Convergence::default();
    }
    converge_individuals(i1, i2, kb)
}

fn converge_individuals(i1: &str, i2: &str, kb: &KnowledgeBase) -> Convergence {
    // both names come from match_view_with_individual, so lookups succeed
    let p1 = reasoner::get_properties(i1, kb).unwrap_or_default();
    let p2 = reasoner::get_properties(i2, kb).unwrap_or_default();
    let properties = p1.keys().filter(|k| p2.contains_key(*k)).cloned().collect();
    let relationships = reasoner::get_relationships(i1, i2, kb).unwrap_or_default();
    let abstraction = match (reasoner::ancestors(i1, kb), reasoner::ancestors(i2, kb)) {
        (Ok(a1), Ok(a2)) => reasoner::lowest_level_ancestor(&a1, &a2),
        _ => None,
    };
    Convergence {
        abstraction,
        properties,
        relationships,
    }
}

pub fn classify_outcome(v1: &View, v2: &View, kb: &KnowledgeBase) -> Outcome {
    let same_individual = matches!(
        (
            reasoner::match_view_with_individual(v1.normalized_label(), kb),
            reasoner::match_view_with_individual(v2.normalized_label(), kb),
        ),
        (Some(a), Some(b)) if a == b
    );
    if v1.normalized_label() == v2.normalized_label() || same_individual {
        return Outcome {
            kind: OutcomeKind::Same,
            explained: false,
            convergence: None,
            explanation: None,
        };
    }
    let explanation = explain(v1, v2, kb);
    let convergence = converge(v1, v2, kb);
    let kind = if convergence.is_empty() {
        OutcomeKind::Disunited
    } else {
        OutcomeKind::Unified
    };
    Outcome {
        kind,
        explained: explanation.is_some(),
        convergence: Some(convergence),
        explanation,
    }
}

/// One line per convergence component: properties, then relationships,
/// then the abstraction.
pub fn render_convergence(
    c: &Convergence,
    kb: &KnowledgeBase,
) -> Result<Vec<String>, ConvergeError> {
    if c.is_empty() {
        return Err(ConvergeError::EmptyConvergence);
    }
    let words = |s: &str| s.replace('_', " ");
    let mut out: Vec<String> = c.properties.iter().map(|p| words(p)).collect();
    out.extend(c.relationships.iter().map(|r| {
        format!(
            "{} {} {}",
            words(&r.subject_individual),
            words(&r.predicate),
            words(&r.object_individual)
        )
    }));
    if let Some(a) = &c.abstraction {
        out.push(kb.class_phrase(a));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::parse_kb;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize("desktop computer").unwrap(), "desktop_computer");
        assert_eq!(normalize("Ox").unwrap(), "ox");
        assert_eq!(normalize("  table   lamp ").unwrap(), "table_lamp");
        assert_eq!(normalize("jack-o'-lantern").unwrap(), "jack_o_lantern");
        assert_eq!(normalize("CD player").unwrap(), "cd_player");
        assert_eq!(
            normalize(" \t "),
            Err(ConvergeError::EmptyLabel(" \t ".into()))
        );
        assert!(normalize("'''").is_err());
    }

    #[test]
    fn display_labels() {
        assert_eq!(display_label("desktop_computer"), "desktop computer");
        assert_eq!(display_label(" CD  player "), "CD player");
    }

    #[test]
    fn template_without_phrases() {
        let kb = parse_kb(
            "class Thing\nclass A_One extends Thing\nclass B_Two extends Thing\nindividual a : A_One\nindividual b : B_Two\n",
        )
        .unwrap();
        let e = explain(
            &View::new("a", "x").unwrap(),
            &View::new("b", "y").unwrap(),
            &kb,
        )
        .unwrap();
        assert_eq!(e.rendered, "a is a kind of a one and b is a kind of b two");
        assert_eq!(render_explanation(&e, &kb), e.rendered);
    }

    #[test]
    fn empty_convergence_does_not_render() {
        let kb = parse_kb("class Thing").unwrap();
        assert_eq!(
            render_convergence(&Convergence::default(), &kb),
            Err(ConvergeError::EmptyConvergence)
        );
    }

    #[test]
    fn same_label_is_same() {
        let kb = parse_kb("class Thing").unwrap();
        let v = View::new("Unicorn", "a").unwrap();
        let w = View::new("unicorn", "b").unwrap();
        let o = classify_outcome(&v, &w, &kb);
        assert_eq!(o.kind, OutcomeKind::Same);
        assert!(o.convergence.is_none() && o.explanation.is_none() && !o.explained);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,24}") {
            if let Ok(n) = normalize(&s) {
                prop_assert_eq!(normalize(&n).unwrap(), n.clone());
                prop_assert!(n.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'));
            }
        }
    }
}

//! A small STRIPS planner over Graphplan-style s-expression files, plus the
//! bridge from unified views to planning facts.
//!
//! ```text
//! (P1)
//! (P2)
//! (preconds (at primate P1) (at typewriter P2))
//! (effects (has-typewriter))
//!
//! (operator GOTO
//!   (params (<x>) (<y>))
//!   (preconds (at primate <y>))
//!   (effects (del at primate <y>) (at primate <x>)))
//! ```
//!
//! Bare one-atom lists declare objects. Top-level `preconds` and `effects`
//! give the initial state and the goal. Operator parameters range over the
//! declared objects.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::converge::{classify_outcome, OutcomeKind, View};
use crate::kb::{KnowledgeBase, THING};
use crate::reasoner::{self, LiftedRelationship};

/// Default bound on the number of distinct states visited by [`plan`].
type State = BTreeSet<Fact>;

pub const DEFAULT_STATE_CAP: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("line {line}: unbalanced parentheses")]
    Unbalanced { line: usize },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown section keyword `{keyword}`")]
    UnknownSection { line: usize, keyword: String },
    #[error("operator {operator}: variable {variable} is not a parameter")]
    UnboundVariable { operator: String, variable: String },
    #[error("search exceeded the state cap of {cap}")]
    StateCapExceeded { cap: usize },
}

/// A ground predicate instance.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Fact {
    pub predicate: String,
    pub args: Vec<String>,
}

impl Fact {
    pub fn new<I, S>(predicate: &str, args: I) -> Fact
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Fact {
            predicate: predicate.to_string(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    Const(String),
    Var(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Pattern {
    fn ground(&self, params: &[String], binding: &[&str]) -> Fact {
        Fact {
            predicate: self.predicate.clone(),
            args: self
                .args
                .iter()
                .map(|t| match t {
                    Term::Const(c) => c.clone(),
                    Term::Var(v) => {
                        let i = params.iter().position(|p| p == v).expect("validated");
                        binding[i].to_string()
                    }
                })
                .collect(),
        }
    }

    fn vars(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(|t| match t {
            Term::Var(v) => Some(v.as_str()),
            Term::Const(_) => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Operator {
    pub name: String,
    pub params: Vec<String>,
    pub preconds: Vec<Pattern>,
    pub add_effects: Vec<Pattern>,
    pub del_effects: Vec<Pattern>,
}

/// Operators, objects, initial facts and goal facts from one or more files.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanningProblem {
    pub operators: Vec<Operator>,
    pub objects: Vec<String>,
    pub init: BTreeSet<Fact>,
    pub goal: BTreeSet<Fact>,
}

impl PlanningProblem {
    /// Combine a domain file and a problem file.
    pub fn merge(mut self, other: PlanningProblem) -> PlanningProblem {
        self.operators.extend(other.operators);
        for o in other.objects {
            if !self.objects.contains(&o) {
                self.objects.push(o);
            }
        }
        self.init.extend(other.init);
        self.goal.extend(other.goal);
        self
    }
}

/// A ground operator application.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub operator: String,
    pub args: Vec<String>,
}

impl Step {
    /// `GOTO_P2_P1`
    pub fn name(&self) -> String {
        std::iter::once(self.operator.as_str())
            .chain(self.args.iter().map(String::as_str))
            .collect::<Vec<_>>()
            .join("_")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<Step>,
}

impl Plan {
    /// One numbered action per line: `1 GOTO_P2_P1`.
    pub fn render(&self) -> String {
        self.steps
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{} {}\n", i + 1, s.name()))
            .collect()
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

// --- s-expressions ---------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>, usize),
}

fn parse_sexps(text: &str) -> Result<Vec<Sexp>, PlanError> {
    let mut stack: Vec<(Vec<Sexp>, usize)> = Vec::new();
    let mut top = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let code = raw.split([';', '#']).next().unwrap_or("");
        let spaced = code.replace('(', " ( ").replace(')', " ) ");
        for tok in spaced.split_whitespace() {
            match tok {
                "(" => stack.push((Vec::new(), line)),
                ")" => {
                    let (items, opened) = stack.pop().ok_or(PlanError::Unbalanced { line })?;
                    let list = Sexp::List(items, opened);
                    match stack.last_mut() {
                        Some((parent, _)) => parent.push(list),
                        None => top.push(list),
                    }
                }
                atom => match stack.last_mut() {
                    Some((items, _)) => items.push(Sexp::Atom(atom.to_string())),
                    None => {
                        return Err(PlanError::Syntax {
                            line,
                            message: format!("atom `{atom}` outside a list"),
                        })
                    }
                },
            }
        }
    }
    if let Some((_, line)) = stack.last() {
        return Err(PlanError::Unbalanced { line: *line });
    }
    Ok(top)
}

fn atom_of(s: &Sexp) -> Option<&str> {
    match s {
        Sexp::Atom(a) => Some(a),
        Sexp::List(..) => None,
    }
}

fn line_of(s: &Sexp) -> usize {
    match s {
        Sexp::List(_, l) => *l,
        Sexp::Atom(_) => 0,
    }
}

fn is_var(a: &str) -> bool {
    a.len() > 2 && a.starts_with('<') && a.ends_with('>')
}

fn pattern(items: &[Sexp], line: usize) -> Result<Pattern, PlanError> {
    let atoms: Option<Vec<&str>> = items.iter().map(atom_of).collect();
    let atoms = atoms
        .filter(|a| !a.is_empty())
        .ok_or_else(|| PlanError::Syntax {
            line,
            message: "expected a fact like (at primate P1)".into(),
        })?;
    Ok(Pattern {
        predicate: atoms[0].to_string(),
        args: atoms[1..]
            .iter()
            .map(|a| {
                if is_var(a) {
                    Term::Var(a.to_string())
                } else {
                    Term::Const(a.to_string())
                }
            })
            .collect(),
    })
}

fn ground_pattern(items: &[Sexp], line: usize) -> Result<Fact, PlanError> {
    let p = pattern(items, line)?;
    if let Some(v) = p.vars().next() {
        return Err(PlanError::Syntax {
            line,
            message: format!("variable {v} in a world fact"),
        });
    }
    Ok(p.ground(&[], &[]))
}

fn list_items(s: &Sexp) -> Result<(&[Sexp], usize), PlanError> {
    match s {
        Sexp::List(items, line) => Ok((items, *line)),
        Sexp::Atom(a) => Err(PlanError::Syntax {
            line: 0,
            message: format!("expected a list, found `{a}`"),
        }),
    }
}

fn parse_operator(items: &[Sexp], line: usize) -> Result<Operator, PlanError> {
    let name = items
        .get(1)
        .and_then(atom_of)
        .ok_or_else(|| PlanError::Syntax {
            line,
            message: "operator needs a name".into(),
        })?
        .to_string();
    let mut op = Operator {
        name,
        params: Vec::new(),
        preconds: Vec::new(),
        add_effects: Vec::new(),
        del_effects: Vec::new(),
    };
    for section in &items[2..] {
        let (sub, sline) = list_items(section)?;
        let keyword = sub.first().and_then(atom_of).unwrap_or("");
        match keyword {
            "params" => {
                for p in &sub[1..] {
                    let var = match p {
                        Sexp::Atom(a) => Some(a.as_str()),
                        Sexp::List(inner, _) => inner.first().and_then(atom_of),
                    };
                    match var {
                        Some(v) if is_var(v) => op.params.push(v.to_string()),
                        _ => {
                            return Err(PlanError::Syntax {
                                line: line_of(p).max(sline),
                                message: "parameters look like (<x>)".into(),
                            })
                        }
                    }
                }
            }
            "preconds" => {
                for p in &sub[1..] {
                    let (inner, l) = list_items(p)?;
                    op.preconds.push(pattern(inner, l)?);
                }
            }
            "effects" | "effect" => {
                for e in &sub[1..] {
                    let (inner, l) = list_items(e)?;
                    if inner.first().and_then(atom_of) == Some("del") {
                        op.del_effects.push(pattern(&inner[1..], l)?);
                    } else {
                        op.add_effects.push(pattern(inner, l)?);
                    }
                }
            }
            other => {
                return Err(PlanError::UnknownSection {
                    line: sline,
                    keyword: other.to_string(),
                })
            }
        }
    }
    let params: HashSet<&str> = op.params.iter().map(String::as_str).collect();
    for p in op
        .preconds
        .iter()
        .chain(&op.add_effects)
        .chain(&op.del_effects)
    {
        if let Some(v) = p.vars().find(|v| !params.contains(v)) {
            return Err(PlanError::UnboundVariable {
                operator: op.name.clone(),
                variable: v.to_string(),
            });
        }
    }
    Ok(op)
}

/// Parse a domain or problem file.
pub fn parse_domain(text: &str) -> Result<PlanningProblem, PlanError> {
    let mut out = PlanningProblem::default();
    for form in parse_sexps(text)? {
        let (items, line) = list_items(&form)?;
        let head = items
            .first()
            .and_then(atom_of)
            .ok_or_else(|| PlanError::Syntax {
                line,
                message: "empty or nested form at top level".into(),
            })?;
        match head {
            "operator" => out.operators.push(parse_operator(items, line)?),
            "preconds" | "effects" | "effect" => {
                let target = if head == "preconds" {
                    &mut out.init
                } else {
                    &mut out.goal
                };
                for f in &items[1..] {
                    let (inner, l) = list_items(f)?;
                    target.insert(ground_pattern(inner, l)?);
                }
            }
            object if items.len() == 1 => {
                out.objects.push(object.to_string());
                out.init.insert(Fact::new(object, Vec::<String>::new()));
            }
            other => {
                return Err(PlanError::UnknownSection {
                    line,
                    keyword: other.to_string(),
                })
            }
        }
    }
    Ok(out)
}

struct GroundAction {
    step: Step,
    pre: Vec<Fact>,
    add: Vec<Fact>,
    del: Vec<Fact>,
}

fn ground_actions(problem: &PlanningProblem) -> Vec<GroundAction> {
    let mut actions = Vec::new();
    for op in &problem.operators {
        let n = op.params.len();
        let k = problem.objects.len();
        if n > 0 && k == 0 {
            continue;
        }
        let total = k.pow(n as u32);
        for mut code in 0..total {
            let mut binding: Vec<&str> = Vec::with_capacity(n);
            for _ in 0..n {
                binding.push(&problem.objects[code % k]);
                code /= k;
            }
            let ground =
                |ps: &[Pattern]| ps.iter().map(|p| p.ground(&op.params, &binding)).collect();
            actions.push(GroundAction {
                step: Step {
                    operator: op.name.clone(),
                    args: binding.iter().map(|s| s.to_string()).collect(),
                },
                pre: ground(&op.preconds),
                add: ground(&op.add_effects),
                del: ground(&op.del_effects),
            });
        }
    }
    actions.sort_by_cached_key(|a| a.step.name());
    actions
}

fn apply(state: &BTreeSet<Fact>, a: &GroundAction) -> BTreeSet<Fact> {
    let mut next = state.clone();
    for d in &a.del {
        next.remove(d);
    }
    next.extend(a.add.iter().cloned());
    next
}

pub fn plan(problem: &PlanningProblem) -> Result<Option<Plan>, PlanError> {
    plan_with_cap(problem, DEFAULT_STATE_CAP)
}

/// Breadth-first search over ground states. Actions are expanded in
/// lexicographic order of their ground names, so the plan returned is the
/// first shortest one in that order.
pub fn plan_with_cap(problem: &PlanningProblem, cap: usize) -> Result<Option<Plan>, PlanError> {
    let actions = ground_actions(problem);
    let reached = |s: &BTreeSet<Fact>| problem.goal.is_subset(s);
    if reached(&problem.init) {
        return Ok(Some(Plan::default()));
    }
    // states[i] with (parent index, action index)
    // each state with the (parent state, action) that first reached it
    let mut states: Vec<(State, Option<(usize, usize)>)> = vec![(problem.init.clone(), None)];
    let mut seen: HashSet<BTreeSet<Fact>> = HashSet::from([problem.init.clone()]);
    let mut queue = VecDeque::from([0usize]);
    while let Some(idx) = queue.pop_front() {
        for (ai, a) in actions.iter().enumerate() {
            if !a.pre.iter().all(|p| states[idx].0.contains(p)) {
                continue;
            }
            let next = apply(&states[idx].0, a);
            if seen.contains(&next) {
                continue;
            }
            if seen.len() >= cap {
                return Err(PlanError::StateCapExceeded { cap });
            }
            seen.insert(next.clone());
            let goal = reached(&next);
            states.push((next, Some((idx, ai))));
            let new_idx = states.len() - 1;
            if goal {
                let mut steps = Vec::new();
                let mut cur = new_idx;
                while let Some((parent, action)) = states[cur].1 {
                    steps.push(actions[action].step.clone());
                    cur = parent;
                }
                steps.reverse();
                return Ok(Some(Plan { steps }));
            }
            queue.push_back(new_idx);
        }
    }
    Ok(None)
}

/// Replay a plan from the initial state; `true` if every step's
/// preconditions hold when it runs and the goal holds at the end.
pub fn validate_plan(problem: &PlanningProblem, plan: &Plan) -> bool {
    let actions = ground_actions(problem);
    let mut state = problem.init.clone();
    for step in &plan.steps {
        let Some(a) = actions.iter().find(|a| a.step == *step) else {
            return false;
        };
        if !a.pre.iter().all(|p| state.contains(p)) {
            return false;
        }
        state = apply(&state, a);
    }
    problem.goal.is_subset(&state)
}

/// Planner object for an ontology class.
pub fn class_object(class: &str) -> String {
    class.to_lowercase()
}

/// What two views let the system assert about `location`: the individual
/// when they agree, the unifying abstraction when they converge on one,
/// otherwise nothing.
pub fn condition_from_views(
    v1: &View,
    v2: &View,
    location: &str,
    kb: &KnowledgeBase,
) -> Option<Fact> {
    let outcome = classify_outcome(v1, v2, kb);
    match outcome.kind {
        OutcomeKind::Same => {
            let subject = reasoner::match_view_with_individual(v1.normalized_label(), kb)
                .unwrap_or(v1.normalized_label());
            Some(Fact::new("at", [subject, location]))
        }
        OutcomeKind::Unified => {
            let abstraction = outcome.convergence?.abstraction?;
            Some(Fact::new(
                "at",
                [class_object(&abstraction), location.to_string()],
            ))
        }
        OutcomeKind::Disunited => None,
    }
}

/// The relationship as a fact, followed by one fact per non-`Thing`
/// ancestor of the subject standing in for the subject.
pub fn generalize_relationship(rel: &LiftedRelationship, kb: &KnowledgeBase) -> Vec<Fact> {
    let mut out = vec![Fact::new(
        &rel.predicate,
        [
            rel.subject_individual.as_str(),
            rel.object_individual.as_str(),
        ],
    )];
    if let Ok(anc) = reasoner::ancestors(&rel.subject_individual, kb) {
        for class in anc.classes().filter(|c| *c != THING) {
            let fact = Fact::new(
                &rel.predicate,
                [class_object(class), rel.object_individual.clone()],
            );
            if !out.contains(&fact) {
                out.push(fact);
            }
        }
    }
    out
}

/// Every fact two views establish through relationships, lifted to the
/// subject's ancestors. Used to verify goal states.
pub fn relationship_facts(v1: &View, v2: &View, kb: &KnowledgeBase) -> Vec<Fact> {
    let outcome = classify_outcome(v1, v2, kb);
    let mut out: Vec<Fact> = Vec::new();
    for rel in outcome.convergence.iter().flat_map(|c| &c.relationships) {
        for f in generalize_relationship(rel, kb) {
            if !out.contains(&f) {
                out.push(f);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const OPERATORS: &str = "
(operator
 GOTO
 (params (<x>) (<y>))
 (preconds (at primate <y>))
 (effect (del at primate <y>)
 (at primate <x>)))

(operator
 GRAB-TYPEWRITER
 (params (<y>))
 (preconds (at typewriter <y>) (at primate <y>))
 (effects (has-typewriter)))
";

    const FACTS: &str = "
(P1)
(P2)
(preconds (at primate P1)
(at typewriter P2))
(effects (has-typewriter))
";

    fn table4() -> PlanningProblem {
        parse_domain(OPERATORS)
            .unwrap()
            .merge(parse_domain(FACTS).unwrap())
    }

    #[test]
    fn parses_operator_block() {
        let d = parse_domain(OPERATORS).unwrap();
        assert_eq!(d.operators.len(), 2);
        let goto = &d.operators[0];
        assert_eq!(goto.name, "GOTO");
        assert_eq!(goto.params, vec!["<x>", "<y>"]);
        assert_eq!(goto.del_effects.len(), 1);
        assert_eq!(goto.add_effects.len(), 1);
        let grab = &d.operators[1];
        assert_eq!(grab.name, "GRAB-TYPEWRITER");
        assert!(grab.del_effects.is_empty());
        assert_eq!(grab.preconds.len(), 2);
    }

    #[test]
    fn parses_world_facts() {
        let p = parse_domain(FACTS).unwrap();
        assert_eq!(p.objects, vec!["P1", "P2"]);
        assert!(p.init.contains(&Fact::new("at", ["primate", "P1"])));
        assert!(p.init.contains(&Fact::new("P1", Vec::<String>::new())));
        assert_eq!(
            p.goal,
            BTreeSet::from([Fact::new("has-typewriter", Vec::<String>::new())])
        );
    }

    #[test]
    fn trivial_operator() {
        let d = parse_domain("(operator A (params) (preconds) (effects))").unwrap();
        assert_eq!(d.operators[0].name, "A");
        assert!(d.operators[0].params.is_empty());
    }

    #[test]
    fn parse_errors() {
        assert_eq!(
            parse_domain("(operator A (params (<x>)) (effects (at <z>)))"),
            Err(PlanError::UnboundVariable {
                operator: "A".into(),
                variable: "<z>".into()
            })
        );
        assert!(matches!(
            parse_domain("(P1"),
            Err(PlanError::Unbalanced { line: 1 })
        ));
        assert!(matches!(
            parse_domain("(P1))"),
            Err(PlanError::Unbalanced { .. })
        ));
        assert!(matches!(
            parse_domain("(operator A (bogus x))"),
            Err(PlanError::UnknownSection { .. })
        ));
        assert!(matches!(
            parse_domain("(at primate P1)"),
            Err(PlanError::UnknownSection { .. })
        ));
    }

    #[test]
    fn table4_plan() {
        let p = table4();
        let plan = plan(&p).unwrap().unwrap();
        assert_eq!(plan.render(), "1 GOTO_P2_P1\n2 GRAB-TYPEWRITER_P2\n");
        assert!(validate_plan(&p, &plan));
    }

    #[test]
    fn goal_in_init_is_empty_plan() {
        let mut p = table4();
        p.goal = BTreeSet::from([Fact::new("at", ["primate", "P1"])]);
        assert_eq!(plan(&p).unwrap(), Some(Plan::default()));
    }

    #[test]
    fn unknown_goal_is_unreachable() {
        let mut p = table4();
        p.goal = BTreeSet::from([Fact::new("flying", ["primate"])]);
        assert_eq!(plan(&p).unwrap(), None);
    }

    #[test]
    fn state_cap() {
        let p = table4();
        assert_eq!(
            plan_with_cap(&p, 1),
            Err(PlanError::StateCapExceeded { cap: 1 })
        );
    }
}

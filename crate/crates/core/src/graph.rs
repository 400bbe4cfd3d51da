//! Composable program graphs.
//!
//! A program is a set of nodes, each with a function (its *kind*) and an
//! annotation naming a class in the meta ontology. Control edges give the
//! execution order as a single chain from the `Start` node. Data edges let
//! a node read the values of nodes that ran before it. Meta-point kinds
//! additionally receive a read-only snapshot of the whole graph.
//!
//! Programs are JSON documents:
//!
//! ```json
//! {
//!   "nodes": [{"id": "start", "kind": "start", "annotation": "Start"}, ...],
//!   "control_edges": [["start", "draw_self"], ...],
//!   "data_edges": [["resnet50_v2", "top_prediction_resnet"], ["a", "b", "dependency"]]
//! }
//! ```
//!
//! A third element `"dependency"` on a data edge marks an ordering-only
//! dependency: the value is not passed and the edge is drawn dashed.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::converge::{self, classify_outcome, Explanation, Outcome, OutcomeKind, View};
use crate::kb::{parse_kb, KnowledgeBase};
use crate::predictions::{self, top_prediction, PredictionCorpus, PredictionDistribution};
use crate::reasoner;

/// The meta ontology shipped with the crate.
pub const META_SMK: &str = include_str!("../fixtures/meta.smk");

pub const START_CLASS: &str = "Start";
pub const CLASSIFIER_CLASS: &str = "Classifier";

/// Run input keys understood by the built-in kinds.
pub mod input {
    /// `Value::Text` image id.
    pub const IMAGE_ID: &str = "image_id";
    /// `Value::Corpus` of recorded predictions.
    pub const PREDICTIONS: &str = "predictions";
    /// `Value::Knowledge`, or `Value::Text` path to an `.smk` file.
    pub const KB: &str = "kb";
    /// `Value::Text` path where `show_results` writes its JSON report.
    pub const REPORT_OUT: &str = "report_out";
    /// Prefix for `Value::Text` endpoint URLs, e.g. `endpoint.resnet`.
    pub const ENDPOINT_PREFIX: &str = "endpoint.";
}

pub fn meta_kb() -> KnowledgeBase {
    parse_kb(META_SMK).expect("bundled meta ontology is valid")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("program schema violation: {0}")]
    Schema(String),
    #[error("node `{node}`: unknown kind `{kind}`")]
    UnknownKind { node: String, kind: String },
    #[error("node `{node}`: annotation `{annotation}` is not a meta-knowledge class")]
    UnknownAnnotation { node: String, annotation: String },
    #[error("edge {from} -> {to} references a missing node")]
    BrokenEdge { from: String, to: String },
    #[error("expected exactly one Start node, found {}", .found.len())]
    StartCount { found: Vec<String> },
    #[error("control edges must form one chain from Start covering every node: {0}")]
    NotLinear(String),
    #[error("node `{to}` reads `{from}`, which does not run before it")]
    ExecutionOrder { from: String, to: String },
    #[error("kind `{0}` is already registered")]
    DuplicateKind(String),
    #[error("unknown kind `{0}`")]
    NoSuchKind(String),
}

/// Result of one run report node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub image_id: Option<String>,
    pub views: Vec<ReportedView>,
    pub explanation: Option<String>,
    pub outcome: Option<OutcomeKind>,
    pub convergence: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportedView {
    pub node: String,
    pub classifier: String,
    pub label: String,
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(image) = &self.image_id {
            writeln!(f, "image: {image}")?;
        }
        for v in &self.views {
            writeln!(f, "{} ({}): {}", v.classifier, v.node, v.label)?;
        }
        match &self.explanation {
            Some(e) => writeln!(f, "explain: {e}")?,
            None => writeln!(f, "explain: (no explanation)")?,
        }
        if let Some(o) = self.outcome {
            writeln!(f, "outcome: {o}")?;
        }
        for line in &self.convergence {
            writeln!(f, "converge: {line}")?;
        }
        Ok(())
    }
}

/// Node payloads. Kinds define which variants they produce and accept.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Unit,
    Data(serde_json::Value),
    Text(String),
    Distribution(PredictionDistribution),
    View(View),
    Classifiers(Vec<(String, Value)>),
    Knowledge(Arc<KnowledgeBase>),
    Corpus(Arc<PredictionCorpus>),
    Explanation(Option<Explanation>),
    Outcome(Outcome),
    Report(RunReport),
}

impl Value {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_distribution(&self) -> Option<&PredictionDistribution> {
        match self {
            Value::Distribution(d) => Some(d),
            _ => None,
        }
    }

    pub fn as_view(&self) -> Option<&View> {
        match self {
            Value::View(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_knowledge(&self) -> Option<&Arc<KnowledgeBase>> {
        match self {
            Value::Knowledge(k) => Some(k),
            _ => None,
        }
    }

    pub fn as_explanation(&self) -> Option<Option<&Explanation>> {
        match self {
            Value::Explanation(e) => Some(e.as_ref()),
            _ => None,
        }
    }

    pub fn as_outcome(&self) -> Option<&Outcome> {
        match self {
            Value::Outcome(o) => Some(o),
            _ => None,
        }
    }

    pub fn as_report(&self) -> Option<&RunReport> {
        match self {
            Value::Report(r) => Some(r),
            _ => None,
        }
    }

    /// Short deterministic description used in execution traces.
    pub fn summary(&self) -> String {
        match self {
            Value::Unit => "()".into(),
            Value::Data(v) => v.to_string(),
            Value::Text(s) => {
                let first = s.lines().next().unwrap_or("");
                if s.lines().count() > 1 {
                    format!("text: {first} ... ({} lines)", s.lines().count())
                } else {
                    format!("text: {first}")
                }
            }
            Value::Distribution(d) => match top_prediction(d) {
                Ok(v) => format!(
                    "distribution[{}]: top {:?}",
                    d.labels().len(),
                    v.raw_label()
                ),
                Err(_) => format!("distribution[{}]", d.labels().len()),
            },
            Value::View(v) => format!("view {}: {}", v.source(), v.normalized_label()),
            Value::Classifiers(cs) => {
                let ids: Vec<&str> = cs.iter().map(|(id, _)| id.as_str()).collect();
                format!("classifiers [{}]", ids.join(", "))
            }
            Value::Knowledge(kb) => format!(
                "knowledge: {} classes, {} individuals, sha256 {}",
                kb.classes().len(),
                kb.individuals().len(),
                &kb.source_digest()[..12]
            ),
            Value::Corpus(c) => format!("corpus: {} records", c.len()),
            Value::Explanation(Some(e)) => format!("explanation: {}", e.rendered),
            Value::Explanation(None) => "explanation: none".into(),
            Value::Outcome(o) => match &o.convergence {
                Some(c) if !c.is_empty() => {
                    format!("{}: {} component kinds", o.kind, c.kind_count())
                }
                _ => o.kind.to_string(),
            },
            Value::Report(r) => format!("report: {} views", r.views.len()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: String,
    pub name: Option<String>,
    pub kind: String,
    pub params: BTreeMap<String, String>,
    pub annotation: String,
    pub value: Option<Value>,
    pub executed: bool,
}

impl Node {
    pub fn display_name(&self) -> &str {
        self.name.as_deref().unwrap_or(&self.id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataEdge {
    pub from: String,
    pub to: String,
    /// ordering only; the value is not passed
    pub dependency_only: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProgramGraph {
    nodes: Vec<Node>,
    control_edges: Vec<(String, String)>,
    data_edges: Vec<DataEdge>,
    /// node indices in control order
    order: Vec<usize>,
}

impl ProgramGraph {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn control_edges(&self) -> &[(String, String)] {
        &self.control_edges
    }

    pub fn data_edges(&self) -> &[DataEdge] {
        &self.data_edges
    }

    /// Nodes in execution order.
    pub fn in_control_order(&self) -> impl Iterator<Item = &Node> {
        self.order.iter().map(|&i| &self.nodes[i])
    }

    pub fn value(&self, id: &str) -> Option<&Value> {
        self.node(id).and_then(|n| n.value.as_ref())
    }

    fn reset(&mut self) {
        for n in &mut self.nodes {
            n.value = None;
            n.executed = false;
        }
    }
}

// --- program documents ------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProgramDoc {
    nodes: Vec<NodeDoc>,
    #[serde(default)]
    control_edges: Vec<(String, String)>,
    #[serde(default)]
    data_edges: Vec<DataEdgeDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: String,
    #[serde(default)]
    name: Option<String>,
    kind: String,
    #[serde(default)]
    params: BTreeMap<String, String>,
    annotation: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DataEdgeDoc {
    Plain(String, String),
    Tagged(String, String, String),
}

/// Parse and check a program document against the registry and meta
/// ontology.
pub fn load_program(
    text: &str,
    registry: &KindRegistry,
    meta: &KnowledgeBase,
) -> Result<ProgramGraph, GraphError> {
    let doc: ProgramDoc =
        serde_json::from_str(text).map_err(|e| GraphError::Schema(e.to_string()))?;

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for (i, n) in doc.nodes.into_iter().enumerate() {
        if index.insert(n.id.clone(), i).is_some() {
            return Err(GraphError::Schema(format!("duplicate node id `{}`", n.id)));
        }
        if registry.get(&n.kind).is_err() {
            return Err(GraphError::UnknownKind {
                node: n.id,
                kind: n.kind,
            });
        }
        if meta.class(&n.annotation).is_none() {
            return Err(GraphError::UnknownAnnotation {
                node: n.id,
                annotation: n.annotation,
            });
        }
        nodes.push(Node {
            id: n.id,
            name: n.name,
            kind: n.kind,
            params: n.params,
            annotation: n.annotation,
            value: None,
            executed: false,
        });
    }
    if nodes.is_empty() {
        return Err(GraphError::Schema("program has no nodes".into()));
    }

    let mut data_edges = Vec::new();
    for e in doc.data_edges {
        let (from, to, dependency_only) = match e {
            DataEdgeDoc::Plain(f, t) => (f, t, false),
            DataEdgeDoc::Tagged(f, t, tag) if tag == "dependency" => (f, t, true),
            DataEdgeDoc::Tagged(_, _, tag) => {
                return Err(GraphError::Schema(format!("unknown data edge tag `{tag}`")))
            }
        };
        data_edges.push(DataEdge {
            from,
            to,
            dependency_only,
        });
    }
    let edge_ends = doc
        .control_edges
        .iter()
        .map(|(f, t)| (f, t))
        .chain(data_edges.iter().map(|e| (&e.from, &e.to)));
    for (from, to) in edge_ends {
        if !index.contains_key(from) || !index.contains_key(to) {
            return Err(GraphError::BrokenEdge {
                from: from.clone(),
                to: to.clone(),
            });
        }
    }

    let starts: Vec<String> = nodes
        .iter()
        .filter(|n| reasoner::is_subclass(&n.annotation, START_CLASS, meta).unwrap_or(false))
        .map(|n| n.id.clone())
        .collect();
    if starts.len() != 1 {
        return Err(GraphError::StartCount { found: starts });
    }

    let mut next: HashMap<usize, usize> = HashMap::new();
    let mut has_incoming = vec![false; nodes.len()];
    for (f, t) in &doc.control_edges {
        let (fi, ti) = (index[f], index[t]);
        if next.insert(fi, ti).is_some() {
            return Err(GraphError::NotLinear(format!("`{f}` has two successors")));
        }
        if std::mem::replace(&mut has_incoming[ti], true) {
            return Err(GraphError::NotLinear(format!("`{t}` has two predecessors")));
        }
    }
    let start = index[&starts[0]];
    if has_incoming[start] {
        return Err(GraphError::NotLinear("Start has a predecessor".into()));
    }
    let mut order = vec![start];
    let mut cur = start;
    while let Some(&n) = next.get(&cur) {
        if order.contains(&n) {
            return Err(GraphError::NotLinear("control cycle".into()));
        }
        order.push(n);
        cur = n;
    }
    if order.len() != nodes.len() {
        let missing: Vec<&str> = (0..nodes.len())
            .filter(|i| !order.contains(i))
            .map(|i| nodes[i].id.as_str())
            .collect();
        return Err(GraphError::NotLinear(format!(
            "not reachable from Start: {}",
            missing.join(", ")
        )));
    }

    let position: HashMap<usize, usize> = order.iter().enumerate().map(|(p, &i)| (i, p)).collect();
    for e in &data_edges {
        if position[&index[&e.from]] >= position[&index[&e.to]] {
            return Err(GraphError::ExecutionOrder {
                from: e.from.clone(),
                to: e.to.clone(),
            });
        }
    }

    Ok(ProgramGraph {
        nodes,
        control_edges: doc.control_edges,
        data_edges,
        order,
    })
}

// --- kinds -----------------------------------------------------------------

/// Why a node function failed.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NodeFailure {
    #[error("missing run input `{0}`")]
    MissingInput(String),
    #[error("{0}")]
    Failed(String),
    /// reading a file or contacting an endpoint failed
    #[error("{0}")]
    Io(String),
}

/// Read-only view of a graph handed to meta-points.
#[derive(Clone, Copy)]
pub struct GraphSnapshot<'a> {
    pub graph: &'a ProgramGraph,
    pub meta: &'a KnowledgeBase,
}

/// Everything a node function can see.
pub struct NodeContext<'a> {
    pub node: &'a Node,
    /// values of data-edge predecessors, in edge order
    pub inputs: Vec<(&'a str, &'a Value)>,
    pub run_inputs: &'a BTreeMap<String, Value>,
    /// present only for meta-point kinds
    pub snapshot: Option<GraphSnapshot<'a>>,
}

impl<'a> NodeContext<'a> {
    pub fn run_input(&self, key: &str) -> Result<&'a Value, NodeFailure> {
        self.run_inputs
            .get(key)
            .ok_or_else(|| NodeFailure::MissingInput(key.to_string()))
    }

    pub fn param(&self, key: &str) -> Option<&'a str> {
        self.node.params.get(key).map(String::as_str)
    }

    fn first_input<T>(&self, pick: impl Fn(&'a Value) -> Option<T>) -> Option<T> {
        self.inputs.iter().find_map(|(_, v)| pick(v))
    }

    /// The first data input of the given shape, or a failure naming what
    /// was expected.
    fn require_input<T>(
        &self,
        what: &str,
        pick: impl Fn(&'a Value) -> Option<T>,
    ) -> Result<T, NodeFailure> {
        self.first_input(pick)
            .ok_or_else(|| NodeFailure::Failed(format!("needs a {what} input")))
    }
}

pub type NodeFn = Arc<dyn Fn(&NodeContext<'_>) -> Result<Value, NodeFailure> + Send + Sync>;

#[derive(Clone)]
pub struct NodeKind {
    pub name: String,
    pub meta_point: bool,
    pub func: NodeFn,
}

impl NodeKind {
    pub fn new(
        name: &str,
        func: impl Fn(&NodeContext<'_>) -> Result<Value, NodeFailure> + Send + Sync + 'static,
    ) -> NodeKind {
        NodeKind {
            name: name.to_string(),
            meta_point: false,
            func: Arc::new(func),
        }
    }

    pub fn meta_point(
        name: &str,
        func: impl Fn(&NodeContext<'_>) -> Result<Value, NodeFailure> + Send + Sync + 'static,
    ) -> NodeKind {
        NodeKind {
            meta_point: true,
            ..NodeKind::new(name, func)
        }
    }
}

impl fmt::Debug for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NodeKind")
            .field("name", &self.name)
            .field("meta_point", &self.meta_point)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug, Default)]
pub struct KindRegistry {
    kinds: BTreeMap<String, NodeKind>,
}

impl KindRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::new();
        register_builtins(&mut r).expect("empty registry has no conflicts");
        r
    }

    pub fn register(&mut self, kind: NodeKind) -> Result<(), GraphError> {
        if self.kinds.contains_key(&kind.name) {
            return Err(GraphError::DuplicateKind(kind.name));
        }
        self.kinds.insert(kind.name.clone(), kind);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&NodeKind, GraphError> {
        self.kinds
            .get(name)
            .ok_or_else(|| GraphError::NoSuchKind(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.kinds.keys().map(String::as_str).collect()
    }
}

/// Executed nodes whose annotation is `Classifier` or a subclass of it, in
/// control order.
pub fn get_classifiers(snapshot: GraphSnapshot<'_>) -> Vec<(String, Value)> {
    snapshot
        .graph
        .in_control_order()
        .filter(|n| n.executed)
        .filter(|n| {
            reasoner::is_subclass(&n.annotation, CLASSIFIER_CLASS, snapshot.meta).unwrap_or(false)
        })
        .filter_map(|n| n.value.clone().map(|v| (n.id.clone(), v)))
        .collect()
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering: control edges are plain arrows, data edges end in
/// `odot`, ordering-only dependencies are dashed.
pub fn draw(g: &ProgramGraph) -> String {
    let mut out = String::from("digraph program {\n  rankdir=LR;\n  node [shape=box];\n");
    for n in g.in_control_order() {
        out.push_str(&format!(
            "  \"{}\" [label=\"{}\\n[{}]\"];\n",
            dot_escape(&n.id),
            dot_escape(n.display_name()),
            dot_escape(&n.annotation)
        ));
    }
    for (f, t) in &g.control_edges {
        out.push_str(&format!(
            "  \"{}\" -> \"{}\";\n",
            dot_escape(f),
            dot_escape(t)
        ));
    }
    for e in &g.data_edges {
        let style = if e.dependency_only {
            " [arrowhead=odot, style=dashed]"
        } else {
            " [arrowhead=odot]"
        };
        out.push_str(&format!(
            "  \"{}\" -> \"{}\"{};\n",
            dot_escape(&e.from),
            dot_escape(&e.to),
            style
        ));
    }
    out.push_str("}\n");
    out
}

fn failed(msg: impl Into<String>) -> NodeFailure {
    NodeFailure::Failed(msg.into())
}

fn knowledge_input(ctx: &NodeContext<'_>) -> Result<Arc<KnowledgeBase>, NodeFailure> {
    ctx.require_input("knowledge", |v| v.as_knowledge().cloned())
}

/// The two views a meta-operation compares: `View` inputs in edge order,
/// else the top predictions of the classifiers from a `get_classifiers`
/// input.
fn view_pair(ctx: &NodeContext<'_>) -> Result<(View, View), NodeFailure> {
    let mut views: Vec<View> = ctx
        .inputs
        .iter()
        .filter_map(|(_, v)| v.as_view().cloned())
        .collect();
    if views.len() < 2 {
        views = classifier_views(ctx)?.into_iter().map(|(_, v)| v).collect();
    }
    match views.as_slice() {
        [a, b, ..] => Ok((a.clone(), b.clone())),
        _ => Err(failed("needs two views")),
    }
}

fn classifier_views(ctx: &NodeContext<'_>) -> Result<Vec<(String, View)>, NodeFailure> {
    let Some(list) = ctx.first_input(|v| match v {
        Value::Classifiers(cs) => Some(cs),
        _ => None,
    }) else {
        return Ok(Vec::new());
    };
    list.iter()
        .filter_map(|(id, v)| v.as_distribution().map(|d| (id, d)))
        .map(|(id, d)| {
            top_prediction(d)
                .map(|v| (id.clone(), v))
                .map_err(|e| failed(e.to_string()))
        })
        .collect()
}

/// Register the ten built-in kinds.
pub fn register_builtins(registry: &mut KindRegistry) -> Result<(), GraphError> {
    registry.register(NodeKind::new("start", |_| Ok(Value::Unit)))?;

    registry.register(NodeKind::meta_point("draw_self", |ctx| {
        let snap = ctx.snapshot.ok_or_else(|| failed("no graph snapshot"))?;
        Ok(Value::Text(draw(snap.graph)))
    }))?;

    registry.register(NodeKind::new("classifier_source", |ctx| {
        let classifier = ctx
            .param("classifier")
            .ok_or_else(|| failed("classifier_source needs a `classifier` param"))?;
        let image = ctx
            .run_input(input::IMAGE_ID)?
            .as_text()
            .ok_or_else(|| failed("image_id must be text"))?;
        if let Some(Value::Corpus(corpus)) = ctx.run_inputs.get(input::PREDICTIONS) {
            if let Some(d) = corpus.get(image, classifier) {
                return Ok(Value::Distribution(d.clone()));
            }
        }
        let endpoint_key = format!("{}{classifier}", input::ENDPOINT_PREFIX);
        match ctx.run_inputs.get(&endpoint_key).and_then(Value::as_text) {
            Some(endpoint) => predictions::fetch_remote(endpoint, image)
                .map(|(d, _)| Value::Distribution(d))
                .map_err(|e| NodeFailure::Io(e.to_string())),
            None if ctx.run_inputs.contains_key(input::PREDICTIONS) => Err(failed(format!(
                "no prediction for image `{image}` from `{classifier}`"
            ))),
            None => Err(NodeFailure::MissingInput(input::PREDICTIONS.to_string())),
        }
    }))?;

    registry.register(NodeKind::new("top_prediction", |ctx| {
        let d = ctx.require_input("distribution", Value::as_distribution)?;
        top_prediction(d)
            .map(Value::View)
            .map_err(|e| failed(e.to_string()))
    }))?;

    registry.register(NodeKind::new("normalize_label", |ctx| {
        let view = match ctx.first_input(|v| match v {
            Value::View(view) => Some(View::new(view.raw_label(), view.source())),
            Value::Text(t) => Some(View::new(t, ctx.param("source").unwrap_or(""))),
            _ => None,
        }) {
            Some(v) => v.map_err(|e| failed(e.to_string()))?,
            None => return Err(failed("needs a view or text input")),
        };
        Ok(Value::View(view))
    }))?;

    registry.register(NodeKind::meta_point("get_classifiers", |ctx| {
        let snap = ctx.snapshot.ok_or_else(|| failed("no graph snapshot"))?;
        Ok(Value::Classifiers(get_classifiers(snap)))
    }))?;

    registry.register(NodeKind::new("load_knowledge", |ctx| {
        let path = match (ctx.param("path"), ctx.run_inputs.get(input::KB)) {
            (_, Some(Value::Knowledge(kb))) => return Ok(Value::Knowledge(Arc::clone(kb))),
            (Some(p), _) => p.to_string(),
            (None, Some(Value::Text(p))) => p.clone(),
            (None, Some(_)) => return Err(failed("kb input must be knowledge or a path")),
            (None, None) => return Err(NodeFailure::MissingInput(input::KB.to_string())),
        };
        let text =
            std::fs::read_to_string(&path).map_err(|e| NodeFailure::Io(format!("{path}: {e}")))?;
        parse_kb(&text)
            .map(|kb| Value::Knowledge(Arc::new(kb)))
            .map_err(|e| failed(format!("{path}: {e}")))
    }))?;

    registry.register(NodeKind::new("explain", |ctx| {
        let kb = knowledge_input(ctx)?;
        let (v1, v2) = view_pair(ctx)?;
        Ok(Value::Explanation(converge::explain(&v1, &v2, &kb)))
    }))?;

    registry.register(NodeKind::new("converge", |ctx| {
        let kb = knowledge_input(ctx)?;
        let (v1, v2) = view_pair(ctx)?;
        Ok(Value::Outcome(classify_outcome(&v1, &v2, &kb)))
    }))?;

    registry.register(NodeKind::new("show_results", |ctx| {
        let kb = ctx.first_input(|v| v.as_knowledge().cloned());
        let views = classifier_views(ctx)?
            .into_iter()
            .map(|(node, v)| ReportedView {
                node,
                classifier: v.source().to_string(),
                label: v.raw_label().to_string(),
            })
            .collect();
        let explanation = ctx
            .first_input(Value::as_explanation)
            .flatten()
            .map(|e| e.rendered.clone());
        let outcome = ctx.first_input(Value::as_outcome);
        let convergence = match (outcome.and_then(|o| o.convergence.as_ref()), &kb) {
            (Some(c), Some(kb)) if !c.is_empty() => {
                converge::render_convergence(c, kb).map_err(|e| failed(e.to_string()))?
            }
            _ => Vec::new(),
        };
        let report = RunReport {
            image_id: ctx
                .run_inputs
                .get(input::IMAGE_ID)
                .and_then(Value::as_text)
                .map(str::to_string),
            views,
            explanation,
            outcome: outcome.map(|o| o.kind),
            convergence,
        };
        let out_path = ctx.param("path").map(str::to_string).or_else(|| {
            ctx.run_inputs
                .get(input::REPORT_OUT)
                .and_then(Value::as_text)
                .map(str::to_string)
        });
        if let Some(path) = out_path {
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            std::fs::write(&path, json + "\n")
                .map_err(|e| NodeFailure::Io(format!("{path}: {e}")))?;
        }
        Ok(Value::Report(report))
    }))?;

    Ok(())
}

// --- execution -------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub node: String,
    /// logical clock tick when the node started
    pub started: u64,
    /// logical clock tick when the node finished
    pub finished: u64,
    pub value: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub records: Vec<TraceRecord>,
}

impl ExecutionTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("node `{node}` failed: {cause}")]
pub struct ExecutionError {
    pub node: String,
    pub cause: NodeFailure,
    /// records of the nodes that completed before the failure
    pub trace: ExecutionTrace,
}

/// Built-in kinds plus the meta ontology their annotations resolve against.
pub struct Runtime {
    registry: KindRegistry,
    meta: KnowledgeBase,
}

impl Default for Runtime {
    fn default() -> Self {
        Runtime::new()
    }
}

impl Runtime {
    pub fn new() -> Self {
        Runtime {
            registry: KindRegistry::with_builtins(),
            meta: meta_kb(),
        }
    }

    pub fn with_parts(registry: KindRegistry, meta: KnowledgeBase) -> Self {
        Runtime { registry, meta }
    }

    pub fn registry(&self) -> &KindRegistry {
        &self.registry
    }

    pub fn registry_mut(&mut self) -> &mut KindRegistry {
        &mut self.registry
    }

    pub fn meta(&self) -> &KnowledgeBase {
        &self.meta
    }

    pub fn load_program(&self, text: &str) -> Result<ProgramGraph, GraphError> {
        load_program(text, &self.registry, &self.meta)
    }

    pub fn snapshot<'a>(&'a self, graph: &'a ProgramGraph) -> GraphSnapshot<'a> {
        GraphSnapshot {
            graph,
            meta: &self.meta,
        }
    }

    /// Run every node in control order, storing values on the nodes.
    ///
    /// Values from a previous run are cleared first. On failure the graph
    /// keeps the values computed so far.
    pub fn execute(
        &self,
        graph: &mut ProgramGraph,
        inputs: &BTreeMap<String, Value>,
    ) -> Result<ExecutionTrace, ExecutionError> {
        graph.reset();
        let mut trace = ExecutionTrace::default();
        let mut clock = 0u64;
        let index: HashMap<String, usize> = graph
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();

        for step in 0..graph.order.len() {
            let i = graph.order[step];
            let started = clock;
            clock += 1;
            let result = {
                let g: &ProgramGraph = graph;
                let node = &g.nodes[i];
                let kind = self.registry.get(&node.kind).map_err(|e| ExecutionError {
                    node: node.id.clone(),
                    cause: NodeFailure::Failed(e.to_string()),
                    trace: trace.clone(),
                })?;
                let node_inputs = g
                    .data_edges
                    .iter()
                    .filter(|e| e.to == node.id && !e.dependency_only)
                    .filter_map(|e| {
                        g.nodes[index[&e.from]]
                            .value
                            .as_ref()
                            .map(|v| (e.from.as_str(), v))
                    })
                    .collect();
                let ctx = NodeContext {
                    node,
                    inputs: node_inputs,
                    run_inputs: inputs,
                    snapshot: kind.meta_point.then(|| self.snapshot(g)),
                };
                (kind.func)(&ctx)
            };
            match result {
                Ok(value) => {
                    let finished = clock;
                    clock += 1;
                    trace.records.push(TraceRecord {
                        node: graph.nodes[i].id.clone(),
                        started,
                        finished,
                        value: value.summary(),
                    });
                    let node = &mut graph.nodes[i];
                    node.value = Some(value);
                    node.executed = true;
                }
                Err(cause) => {
                    return Err(ExecutionError {
                        node: graph.nodes[i].id.clone(),
                        cause,
                        trace,
                    })
                }
            }
        }
        Ok(trace)
    }
}

//! The SMK knowledge format: a line-oriented description of ontology
//! classes, individuals and property assertions.
//!
//! ```text
//! class Thing
//! class Furniture extends Thing
//! phrase Furniture "furniture"
//! individual desk : Furniture
//! dataprop is_wooden
//! objprop supports
//! has desk is_wooden = "yes"
//! rel desk supports desktop_computer
//! ```
//!
//! A [`KnowledgeBase`] returned by [`parse_kb`] always satisfies the
//! referential and hierarchy invariants checked by [`validate_kb`]. Use
//! [`parse_kb_unchecked`] to obtain a syntactically valid but possibly
//! inconsistent knowledge base, e.g. for linting.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Name of the single root class.
pub const THING: &str = "Thing";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDef {
    pub name: String,
    pub parents: BTreeSet<String>,
    pub display_phrase: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndividualDef {
    pub name: String,
    pub asserted_classes: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PropertyAssertion {
    pub subject: String,
    pub property: String,
    pub value: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationAssertion {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

/// Domain knowledge: classes, individuals, property declarations and
/// assertions.
///
/// Immutable once built. `source_digest` is the SHA-256 of the canonical
/// serialization, so two structurally equal knowledge bases always carry
/// the same digest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    classes: BTreeMap<String, ClassDef>,
    individuals: BTreeMap<String, IndividualDef>,
    data_properties: BTreeSet<String>,
    object_properties: BTreeSet<String>,
    property_assertions: BTreeSet<PropertyAssertion>,
    relation_assertions: BTreeSet<RelationAssertion>,
    source_digest: String,
}

impl KnowledgeBase {
    pub fn classes(&self) -> &BTreeMap<String, ClassDef> {
        &self.classes
    }

    pub fn class(&self, name: &str) -> Option<&ClassDef> {
        self.classes.get(name)
    }

    pub fn individuals(&self) -> &BTreeMap<String, IndividualDef> {
        &self.individuals
    }

    pub fn individual(&self, name: &str) -> Option<&IndividualDef> {
        self.individuals.get(name)
    }

    pub fn data_properties(&self) -> &BTreeSet<String> {
        &self.data_properties
    }

    pub fn object_properties(&self) -> &BTreeSet<String> {
        &self.object_properties
    }

    pub fn property_assertions(&self) -> &BTreeSet<PropertyAssertion> {
        &self.property_assertions
    }

    pub fn relation_assertions(&self) -> &BTreeSet<RelationAssertion> {
        &self.relation_assertions
    }

    pub fn source_digest(&self) -> &str {
        &self.source_digest
    }

    /// True if `name` is a declared class or individual.
    pub fn is_declared_entity(&self, name: &str) -> bool {
        self.classes.contains_key(name) || self.individuals.contains_key(name)
    }

    /// Display phrase for a class: its `phrase` declaration, else the class
    /// name lowercased with underscores turned into spaces.
    pub fn class_phrase(&self, class: &str) -> String {
        match self
            .classes
            .get(class)
            .and_then(|c| c.display_phrase.as_ref())
        {
            Some(p) => p.clone(),
            None => class.to_lowercase().replace('_', " "),
        }
    }
}

/// Programmatic construction of a [`KnowledgeBase`].
///
/// Declarations are not checked until [`KbBuilder::build`]; duplicates are
/// reported by the `add_*`/`declare_*` methods themselves.
#[derive(Clone, Debug, Default)]
pub struct KbBuilder {
    classes: BTreeMap<String, ClassDef>,
    individuals: BTreeMap<String, IndividualDef>,
    data_properties: BTreeSet<String>,
    object_properties: BTreeSet<String>,
    property_assertions: BTreeSet<PropertyAssertion>,
    relation_assertions: BTreeSet<RelationAssertion>,
    pending_phrases: Vec<(String, String)>,
}

impl KbBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn class<I, S>(&mut self, name: &str, parents: I) -> Result<&mut Self, KbError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        if self.classes.contains_key(name) {
            return Err(KbError::DuplicateDeclaration {
                line: None,
                name: name.to_string(),
            });
        }
        self.classes.insert(
            name.to_string(),
            ClassDef {
                name: name.to_string(),
                parents: parents.into_iter().map(Into::into).collect(),
                display_phrase: None,
            },
        );
        Ok(self)
    }

    pub fn phrase(&mut self, class: &str, phrase: &str) -> Result<&mut Self, KbError> {
        if self.pending_phrases.iter().any(|(c, _)| c == class) {
            return Err(KbError::DuplicateDeclaration {
                line: None,
                name: format!("phrase {class}"),
            });
        }
        self.pending_phrases
            .push((class.to_string(), phrase.to_string()));
        Ok(self)
    }

    pub fn individual<I, S>(&mut self, name: &str, classes: I) -> Result<&mut Self, KbError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        if self.individuals.contains_key(name) {
            return Err(KbError::DuplicateDeclaration {
                line: None,
                name: name.to_string(),
            });
        }
        self.individuals.insert(
            name.to_string(),
            IndividualDef {
                name: name.to_string(),
                asserted_classes: classes.into_iter().map(Into::into).collect(),
            },
        );
        Ok(self)
    }

    pub fn data_property(&mut self, name: &str) -> Result<&mut Self, KbError> {
        self.declare_property(name, true)
    }

    pub fn object_property(&mut self, name: &str) -> Result<&mut Self, KbError> {
        self.declare_property(name, false)
    }

    fn declare_property(&mut self, name: &str, data: bool) -> Result<&mut Self, KbError> {
        if self.data_properties.contains(name) || self.object_properties.contains(name) {
            return Err(KbError::DuplicateDeclaration {
                line: None,
                name: name.to_string(),
            });
        }
        if data {
            self.data_properties.insert(name.to_string());
        } else {
            self.object_properties.insert(name.to_string());
        }
        Ok(self)
    }

    pub fn has(&mut self, subject: &str, property: &str, value: Option<&str>) -> &mut Self {
        self.property_assertions.insert(PropertyAssertion {
            subject: subject.to_string(),
            property: property.to_string(),
            value: value.map(str::to_string),
        });
        self
    }

    pub fn rel(&mut self, subject: &str, predicate: &str, object: &str) -> &mut Self {
        self.relation_assertions.insert(RelationAssertion {
            subject: subject.to_string(),
            predicate: predicate.to_string(),
            object: object.to_string(),
        });
        self
    }

    /// Build and validate.
    pub fn build(&self) -> Result<KnowledgeBase, KbError> {
        let kb = self.build_unchecked();
        match first_error(&validate_with(&kb, &self.dangling_phrases(), None)) {
            Some(err) => Err(err),
            None => Ok(kb),
        }
    }

    /// Build without checking invariants. Phrases on undeclared classes are
    /// dropped.
    pub fn build_unchecked(&self) -> KnowledgeBase {
        let mut classes = self.classes.clone();
        for (class, phrase) in &self.pending_phrases {
            if let Some(def) = classes.get_mut(class) {
                def.display_phrase = Some(phrase.clone());
            }
        }
        let mut kb = KnowledgeBase {
            classes,
            individuals: self.individuals.clone(),
            data_properties: self.data_properties.clone(),
            object_properties: self.object_properties.clone(),
            property_assertions: self.property_assertions.clone(),
            relation_assertions: self.relation_assertions.clone(),
            source_digest: String::new(),
        };
        kb.source_digest = digest_hex(serialize_kb(&kb).as_bytes());
        kb
    }

    fn dangling_phrases(&self) -> Vec<Finding> {
        self.pending_phrases
            .iter()
            .filter(|(c, _)| !self.classes.contains_key(c))
            .map(|(c, _)| Finding {
                severity: Severity::Error,
                kind: FindingKind::DanglingReference {
                    name: c.clone(),
                    expected: "class",
                },
                location: Location::item(format!("phrase {c}")),
            })
            .collect()
    }
}

fn digest_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KbError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}dangling reference to undeclared {expected} `{name}`", fmt_line(*.line))]
    DanglingReference {
        line: Option<usize>,
        name: String,
        expected: &'static str,
    },
    #[error("class cycle through {}", .classes.join(" -> "))]
    ClassCycle { classes: Vec<String> },
    #[error("{}duplicate declaration of `{name}`", fmt_line(*.line))]
    DuplicateDeclaration { line: Option<usize>, name: String },
    #[error("{}{message}", fmt_line(*.line))]
    Hierarchy {
        line: Option<usize>,
        message: String,
    },
}

fn fmt_line(line: Option<usize>) -> String {
    line.map(|l| format!("line {l}: ")).unwrap_or_default()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
#[non_exhaustive]
pub enum Severity {
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Location {
    pub line: Option<usize>,
    pub item: String,
}

impl Location {
    fn item(item: String) -> Self {
        Location { line: None, item }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l} ({})", self.item),
            None => f.write_str(&self.item),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FindingKind {
    DanglingReference {
        name: String,
        expected: &'static str,
    },
    ClassCycle {
        classes: Vec<String>,
    },
    NamespaceOverlap {
        name: String,
    },
    MissingRoot,
    MultipleRoots {
        roots: Vec<String>,
    },
    RootHasParents,
    RootAsserted {
        individual: String,
    },
}

impl fmt::Display for FindingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FindingKind::DanglingReference { name, expected } => {
                write!(f, "reference to undeclared {expected} `{name}`")
            }
            FindingKind::ClassCycle { classes } => {
                write!(f, "class cycle through {}", classes.join(" -> "))
            }
            FindingKind::NamespaceOverlap { name } => {
                write!(f, "`{name}` is declared as both a class and an individual")
            }
            FindingKind::MissingRoot => write!(f, "no `{THING}` class declared"),
            FindingKind::MultipleRoots { roots } => {
                write!(
                    f,
                    "parentless classes other than `{THING}`: {}",
                    roots.join(", ")
                )
            }
            FindingKind::RootHasParents => write!(f, "`{THING}` must not have parents"),
            FindingKind::RootAsserted { individual } => {
                write!(
                    f,
                    "individual `{individual}` is asserted directly under `{THING}`"
                )
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub kind: FindingKind,
    pub location: Location,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}: {}", self.severity, self.location, self.kind)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Check every knowledge-base invariant and report violations as data.
pub fn validate_kb(kb: &KnowledgeBase) -> ValidationReport {
    ValidationReport {
        findings: validate_with(kb, &[], None),
    }
}

/// Statement key → source line, used to attach line numbers to findings.
type LineMap = HashMap<String, usize>;

fn validate_with(kb: &KnowledgeBase, extra: &[Finding], lines: Option<&LineMap>) -> Vec<Finding> {
    let mut findings: Vec<Finding> = extra.to_vec();
    let mut push = |kind: FindingKind, item: String| {
        findings.push(Finding {
            severity: Severity::Error,
            kind,
            location: Location { line: None, item },
        })
    };
    let dangling = |name: &str, expected: &'static str| FindingKind::DanglingReference {
        name: name.to_string(),
        expected,
    };

    for def in kb.classes.values() {
        for parent in &def.parents {
            if !kb.classes.contains_key(parent) {
                push(dangling(parent, "class"), format!("class {}", def.name));
            }
        }
        if kb.individuals.contains_key(&def.name) {
            push(
                FindingKind::NamespaceOverlap {
                    name: def.name.clone(),
                },
                format!("individual {}", def.name),
            );
        }
    }
    for ind in kb.individuals.values() {
        for class in &ind.asserted_classes {
            if class == THING {
                push(
                    FindingKind::RootAsserted {
                        individual: ind.name.clone(),
                    },
                    format!("individual {}", ind.name),
                );
            } else if !kb.classes.contains_key(class) {
                push(dangling(class, "class"), format!("individual {}", ind.name));
            }
        }
    }
    for pa in &kb.property_assertions {
        let item = has_key(pa);
        if !kb.is_declared_entity(&pa.subject) {
            push(dangling(&pa.subject, "class or individual"), item.clone());
        }
        if !kb.data_properties.contains(&pa.property) {
            push(dangling(&pa.property, "data property"), item);
        }
    }
    for ra in &kb.relation_assertions {
        let item = rel_key(ra);
        if !kb.is_declared_entity(&ra.subject) {
            push(dangling(&ra.subject, "class or individual"), item.clone());
        }
        if !kb.object_properties.contains(&ra.predicate) {
            push(dangling(&ra.predicate, "object property"), item.clone());
        }
        if !kb.is_declared_entity(&ra.object) {
            push(dangling(&ra.object, "class or individual"), item);
        }
    }

    match kb.classes.get(THING) {
        None => push(FindingKind::MissingRoot, format!("class {THING}")),
        Some(t) if !t.parents.is_empty() => {
            push(FindingKind::RootHasParents, format!("class {THING}"))
        }
        Some(_) => {}
    }
    let extra_roots: Vec<String> = kb
        .classes
        .values()
        .filter(|c| c.parents.is_empty() && c.name != THING)
        .map(|c| c.name.clone())
        .collect();
    if !extra_roots.is_empty() {
        let item = format!("class {}", extra_roots[0]);
        push(FindingKind::MultipleRoots { roots: extra_roots }, item);
    }
    if let Some(cycle) = find_cycle(kb) {
        let item = format!("class {}", cycle[0]);
        push(FindingKind::ClassCycle { classes: cycle }, item);
    }

    if let Some(lines) = lines {
        for f in &mut findings {
            f.location.line = lines.get(&f.location.item).copied();
        }
    }
    findings
}

/// Returns one superclass cycle (closed: first element repeated at the end)
/// if the declared hierarchy has any.
fn find_cycle(kb: &KnowledgeBase) -> Option<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Fresh,
        Active,
        Done,
    }
    let mut marks: HashMap<&str, Mark> = kb
        .classes
        .keys()
        .map(|k| (k.as_str(), Mark::Fresh))
        .collect();

    for start in kb.classes.keys() {
        if marks[start.as_str()] != Mark::Fresh {
            continue;
        }
        // iterative DFS; stack holds (class, remaining parents)
        let mut path: Vec<&str> = vec![start];
        let mut stack: Vec<std::collections::btree_set::Iter<'_, String>> =
            vec![kb.classes[start].parents.iter()];
        marks.insert(start, Mark::Active);
        while let Some(iter) = stack.last_mut() {
            match iter.next() {
                Some(parent) => {
                    let Some(def) = kb.classes.get(parent) else {
                        continue;
                    };
                    match marks[parent.as_str()] {
                        Mark::Active => {
                            let pos = path.iter().position(|p| *p == parent).unwrap();
                            let mut cycle: Vec<String> =
                                path[pos..].iter().map(|s| s.to_string()).collect();
                            cycle.push(parent.clone());
                            return Some(cycle);
                        }
                        Mark::Fresh => {
                            marks.insert(parent, Mark::Active);
                            path.push(parent);
                            stack.push(def.parents.iter());
                        }
                        Mark::Done => {}
                    }
                }
                None => {
                    let done = path.pop().unwrap();
                    marks.insert(done, Mark::Done);
                    stack.pop();
                }
            }
        }
    }
    None
}

fn first_error(findings: &[Finding]) -> Option<KbError> {
    // cycles first: a cycle also produces root findings that are only symptoms
    let pick = findings
        .iter()
        .find(|f| matches!(f.kind, FindingKind::ClassCycle { .. }))
        .or_else(|| findings.first())?;
    let line = pick.location.line;
    Some(match &pick.kind {
        FindingKind::DanglingReference { name, expected } => KbError::DanglingReference {
            line,
            name: name.clone(),
            expected,
        },
        FindingKind::ClassCycle { classes } => KbError::ClassCycle {
            classes: classes.clone(),
        },
        FindingKind::NamespaceOverlap { name } => KbError::DuplicateDeclaration {
            line,
            name: name.clone(),
        },
        other => KbError::Hierarchy {
            line,
            message: other.to_string(),
        },
    })
}

fn has_key(pa: &PropertyAssertion) -> String {
    match &pa.value {
        Some(v) => format!("has {} {} = {:?}", pa.subject, pa.property, v),
        None => format!("has {} {}", pa.subject, pa.property),
    }
}

fn rel_key(ra: &RelationAssertion) -> String {
    format!("rel {} {} {}", ra.subject, ra.predicate, ra.object)
}

// --- parsing ---------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Colon,
    Comma,
    Equals,
}

struct Lexed {
    tok: Tok,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> KbError {
    KbError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn lex_line(text: &str, line: usize) -> Result<Vec<Lexed>, KbError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        match c {
            '#' => break,
            c if c.is_whitespace() => i += 1,
            ':' | ',' | '=' => {
                let tok = match c {
                    ':' => Tok::Colon,
                    ',' => Tok::Comma,
                    _ => Tok::Equals,
                };
                out.push(Lexed { tok, column });
                i += 1;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(syntax(line, column, "unterminated string")),
                        Some('"') => {
                            i += 1;
                            break;
                        }
                        Some('\\') => match chars.get(i + 1) {
                            Some(&e @ ('"' | '\\')) => {
                                s.push(e);
                                i += 2;
                            }
                            _ => return Err(syntax(line, i + 1, "invalid escape in string")),
                        },
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                out.push(Lexed {
                    tok: Tok::Str(s),
                    column,
                });
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Lexed {
                    tok: Tok::Ident(chars[start..i].iter().collect()),
                    column,
                });
            }
            other => {
                return Err(syntax(
                    line,
                    column,
                    format!("unexpected character {other:?}"),
                ))
            }
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    toks: &'a [Lexed],
    pos: usize,
    line: usize,
    end_column: usize,
}

impl<'a> Cursor<'a> {
    fn column(&self) -> usize {
        self.toks
            .get(self.pos)
            .map_or(self.end_column, |t| t.column)
    }

    fn ident(&mut self, what: &str) -> Result<String, KbError> {
        match self.toks.get(self.pos) {
            Some(Lexed {
                tok: Tok::Ident(s), ..
            }) => {
                self.pos += 1;
                Ok(s.clone())
            }
            _ => Err(syntax(self.line, self.column(), format!("expected {what}"))),
        }
    }

    fn string(&mut self, what: &str) -> Result<String, KbError> {
        match self.toks.get(self.pos) {
            Some(Lexed {
                tok: Tok::Str(s), ..
            }) => {
                self.pos += 1;
                Ok(s.clone())
            }
            _ => Err(syntax(self.line, self.column(), format!("expected {what}"))),
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.toks.get(self.pos).map(|t| &t.tok) == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if matches!(self.toks.get(self.pos), Some(Lexed { tok: Tok::Ident(s), .. }) if s == kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident_list(&mut self, what: &str) -> Result<Vec<String>, KbError> {
        let mut names = vec![self.ident(what)?];
        while self.eat(&Tok::Comma) {
            names.push(self.ident(what)?);
        }
        Ok(names)
    }

    fn finish(&self) -> Result<(), KbError> {
        if self.pos < self.toks.len() {
            Err(syntax(
                self.line,
                self.column(),
                "unexpected trailing input",
            ))
        } else {
            Ok(())
        }
    }
}

/// Parse an SMK document and check every invariant.
pub fn parse_kb(text: &str) -> Result<KnowledgeBase, KbError> {
    let (builder, lines) = parse_into_builder(text)?;
    let kb = builder.build_unchecked();
    let mut phrase_findings = builder.dangling_phrases();
    for f in &mut phrase_findings {
        f.location.line = lines.get(&f.location.item).copied();
    }
    match first_error(&validate_with(&kb, &phrase_findings, Some(&lines))) {
        Some(err) => Err(err),
        None => Ok(kb),
    }
}

/// Parse an SMK document, reporting only syntax errors and duplicate
/// declarations. The result may violate referential invariants.
pub fn parse_kb_unchecked(text: &str) -> Result<KnowledgeBase, KbError> {
    Ok(parse_into_builder(text)?.0.build_unchecked())
}

fn parse_into_builder(text: &str) -> Result<(KbBuilder, LineMap), KbError> {
    let mut b = KbBuilder::new();
    let mut lines = LineMap::new();
    let with_line = |e: KbError, line: usize| match e {
        KbError::DuplicateDeclaration { name, .. } => KbError::DuplicateDeclaration {
            line: Some(line),
            name,
        },
        other => other,
    };

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let toks = lex_line(raw, line)?;
        if toks.is_empty() {
            continue;
        }
        let mut cur = Cursor {
            toks: &toks,
            pos: 0,
            line,
            end_column: raw.chars().count() + 1,
        };
        let keyword = cur.ident("statement keyword")?;
        match keyword.as_str() {
            "class" => {
                let name = cur.ident("class name")?;
                let parents = if cur.eat_keyword("extends") {
                    cur.ident_list("parent class name")?
                } else {
                    Vec::new()
                };
                cur.finish()?;
                b.class(&name, parents).map_err(|e| with_line(e, line))?;
                lines.insert(format!("class {name}"), line);
            }
            "phrase" => {
                let name = cur.ident("class name")?;
                let phrase = cur.string("quoted phrase")?;
                cur.finish()?;
                b.phrase(&name, &phrase).map_err(|e| with_line(e, line))?;
                lines.insert(format!("phrase {name}"), line);
            }
            "individual" => {
                let name = cur.ident("individual name")?;
                if !cur.eat(&Tok::Colon) {
                    return Err(syntax(line, cur.column(), "expected `:`"));
                }
                let classes = cur.ident_list("class name")?;
                cur.finish()?;
                b.individual(&name, classes)
                    .map_err(|e| with_line(e, line))?;
                lines.insert(format!("individual {name}"), line);
            }
            "dataprop" | "objprop" => {
                let name = cur.ident("property name")?;
                cur.finish()?;
                if keyword == "dataprop" {
                    b.data_property(&name)
                } else {
                    b.object_property(&name)
                }
                .map_err(|e| with_line(e, line))?;
                lines.insert(format!("{keyword} {name}"), line);
            }
            "has" => {
                let subject = cur.ident("subject")?;
                let property = cur.ident("property name")?;
                let value = if cur.eat(&Tok::Equals) {
                    Some(cur.string("quoted value")?)
                } else {
                    None
                };
                cur.finish()?;
                let pa = PropertyAssertion {
                    subject,
                    property,
                    value,
                };
                lines.insert(has_key(&pa), line);
                b.has(&pa.subject, &pa.property, pa.value.as_deref());
            }
            "rel" => {
                let subject = cur.ident("subject")?;
                let predicate = cur.ident("predicate")?;
                let object = cur.ident("object")?;
                cur.finish()?;
                let ra = RelationAssertion {
                    subject,
                    predicate,
                    object,
                };
                lines.insert(rel_key(&ra), line);
                b.rel(&ra.subject, &ra.predicate, &ra.object);
            }
            other => {
                return Err(syntax(line, 1, format!("unknown statement `{other}`")));
            }
        }
    }
    Ok((b, lines))
}

// --- serialization ---------------------------------------------------------

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// Canonical SMK text: sections in a fixed order, declarations sorted
/// within each section, one blank line between non-empty sections.
pub fn serialize_kb(kb: &KnowledgeBase) -> String {
    let mut sections: Vec<Vec<String>> = Vec::new();

    sections.push(
        kb.classes
            .values()
            .map(|c| {
                if c.parents.is_empty() {
                    format!("class {}", c.name)
                } else {
                    let parents: Vec<&str> = c.parents.iter().map(String::as_str).collect();
                    format!("class {} extends {}", c.name, parents.join(", "))
                }
            })
            .collect(),
    );
    sections.push(
        kb.classes
            .values()
            .filter_map(|c| {
                c.display_phrase
                    .as_ref()
                    .map(|p| format!("phrase {} {}", c.name, quote(p)))
            })
            .collect(),
    );
    sections.push(
        kb.individuals
            .values()
            .map(|i| {
                let classes: Vec<&str> = i.asserted_classes.iter().map(String::as_str).collect();
                format!("individual {} : {}", i.name, classes.join(", "))
            })
            .collect(),
    );
    sections.push(
        kb.data_properties
            .iter()
            .map(|p| format!("dataprop {p}"))
            .collect(),
    );
    sections.push(
        kb.object_properties
            .iter()
            .map(|p| format!("objprop {p}"))
            .collect(),
    );
    sections.push(
        kb.property_assertions
            .iter()
            .map(|pa| match &pa.value {
                Some(v) => format!("has {} {} = {}", pa.subject, pa.property, quote(v)),
                None => format!("has {} {}", pa.subject, pa.property),
            })
            .collect(),
    );
    sections.push(
        kb.relation_assertions
            .iter()
            .map(|ra| format!("rel {} {} {}", ra.subject, ra.predicate, ra.object))
            .collect(),
    );

    let blocks: Vec<String> = sections
        .into_iter()
        .filter(|s| !s.is_empty())
        .map(|s| s.join("\n") + "\n")
        .collect();
    blocks.join("\n")
}

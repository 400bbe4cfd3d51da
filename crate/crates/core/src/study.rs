//! Corpus-level evaluation: outcome counters, convergence-type breakdown,
//! the per-image S/U/D/D* stream and chi-squared 2×1 significance tests.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::converge::{classify_outcome, ConvergeError, Outcome, OutcomeKind};
use crate::kb::KnowledgeBase;
use crate::predictions::{top_prediction, Category, PredictionCorpus};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StudyError {
    #[error("image `{image_id}` has no record for classifier `{classifier}`")]
    MissingRecord {
        image_id: String,
        classifier: String,
    },
    #[error("image `{image_id}`: {source}")]
    Label {
        image_id: String,
        source: ConvergeError,
    },
    #[error("chi-squared test needs at least one observation")]
    NoObservations,
    #[error("unknown report format `{0}` (expected text or json)")]
    UnknownFormat(String),
}

/// Goodness-of-fit test of two counts against an even split.
///
/// Returns `(statistic, p)`, where `p` is the upper tail of the chi-squared
/// distribution with one degree of freedom: `erfc(sqrt(statistic / 2))`.
pub fn chi_squared_2x1(a: u64, b: u64) -> Result<(f64, f64), StudyError> {
    let n = a + b;
    if n == 0 {
        return Err(StudyError::NoObservations);
    }
    let expected = n as f64 / 2.0;
    let statistic = [a, b]
        .iter()
        .map(|&o| (o as f64 - expected).powi(2) / expected)
        .sum::<f64>();
    let p = statrs::function::erf::erfc((statistic / 2.0).sqrt());
    Ok((statistic, p.clamp(0.0, 1.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquaredResult {
    pub split: String,
    pub a: u64,
    pub b: u64,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub images: u64,
    pub same: u64,
    pub different_views: u64,
    pub unified: u64,
    pub disunited: u64,
    pub explained: u64,
    pub not_explained: u64,
    pub unified_in_explained: u64,
    pub disunited_in_explained: u64,
}

/// How unified images were unified. An image counts once for every
/// component kind it has, so `unified_total_by_type >= unified`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeBreakdown {
    pub abstractions: u64,
    pub properties: u64,
    pub relationships: u64,
    pub multiple_unified: u64,
    pub unified_total_by_type: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub program_id: String,
    pub totals: OutcomeCounts,
    pub types: TypeBreakdown,
    #[serde(default)]
    pub categories: BTreeMap<Category, CategoryReport>,
    #[serde(default)]
    pub chi_squared: Vec<ChiSquaredResult>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub totals: OutcomeCounts,
    pub types: TypeBreakdown,
}

impl OutcomeCounts {
    fn add(&mut self, o: &Outcome) {
        self.images += 1;
        match o.kind {
            OutcomeKind::Same => self.same += 1,
            kind => {
                self.different_views += 1;
                let unified = kind == OutcomeKind::Unified;
                if unified {
                    self.unified += 1;
                } else {
                    self.disunited += 1;
                }
                if o.explained {
                    self.explained += 1;
                    if unified {
                        self.unified_in_explained += 1;
                    } else {
                        self.disunited_in_explained += 1;
                    }
                } else {
                    self.not_explained += 1;
                }
            }
        }
    }

    /// Every identity that must hold between the counters.
    pub fn identities_hold(&self) -> bool {
        self.images == self.same + self.different_views
            && self.different_views == self.unified + self.disunited
            && self.different_views == self.explained + self.not_explained
            && self.explained == self.unified_in_explained + self.disunited_in_explained
            && self.unified == self.unified_in_explained
    }
}

impl TypeBreakdown {
    fn add(&mut self, o: &Outcome) {
        let Some(c) = o
            .convergence
            .as_ref()
            .filter(|_| o.kind == OutcomeKind::Unified)
        else {
            return;
        };
        self.abstractions += u64::from(c.abstraction.is_some());
        self.properties += u64::from(!c.properties.is_empty());
        self.relationships += u64::from(!c.relationships.is_empty());
        self.multiple_unified += u64::from(c.kind_count() >= 2);
        self.unified_total_by_type = self.abstractions + self.properties + self.relationships;
    }
}

/// Program id from classifier initials: `("resnet", "alexnet")` → `RA`.
pub fn program_id(pair: (&str, &str)) -> String {
    [pair.0, pair.1]
        .iter()
        .filter_map(|n| n.chars().next())
        .flat_map(char::to_uppercase)
        .collect()
}

/// Per-image outcomes in image-id order.
pub fn evaluate_corpus(
    corpus: &PredictionCorpus,
    pair: (&str, &str),
    kb: &KnowledgeBase,
) -> Result<Vec<(String, Outcome)>, StudyError> {
    let images = corpus.image_ids();
    // collect preserves input order, so the result is independent of
    // worker scheduling
    images
        .par_iter()
        .map(|image| {
            let view = |classifier: &str| {
                let d = corpus
                    .get(image, classifier)
                    .ok_or_else(|| StudyError::MissingRecord {
                        image_id: image.to_string(),
                        classifier: classifier.to_string(),
                    })?;
                top_prediction(d).map_err(|source| StudyError::Label {
                    image_id: image.to_string(),
                    source,
                })
            };
            let v1 = view(pair.0)?;
            let v2 = view(pair.1)?;
            Ok((image.to_string(), classify_outcome(&v1, &v2, kb)))
        })
        .collect()
}

pub fn run_corpus(
    corpus: &PredictionCorpus,
    pair: (&str, &str),
    kb: &KnowledgeBase,
) -> Result<CorpusReport, StudyError> {
    let outcomes = evaluate_corpus(corpus, pair, kb)?;
    Ok(aggregate(program_id(pair), &outcomes, |image| {
        corpus.category(image)
    }))
}

/// Fold outcomes into a report. `category_of` supplies optional per-image
/// categories for the sub-reports.
pub fn aggregate(
    program_id: String,
    outcomes: &[(String, Outcome)],
    category_of: impl Fn(&str) -> Option<Category>,
) -> CorpusReport {
    let mut totals = OutcomeCounts::default();
    let mut types = TypeBreakdown::default();
    let mut categories: BTreeMap<Category, CategoryReport> = BTreeMap::new();
    for (image, o) in outcomes {
        totals.add(o);
        types.add(o);
        if let Some(cat) = category_of(image) {
            let sub = categories.entry(cat).or_default();
            sub.totals.add(o);
            sub.types.add(o);
        }
    }
    let splits = [
        ("unified_vs_disunited", totals.unified, totals.disunited),
        (
            "explained_vs_not_explained",
            totals.explained,
            totals.not_explained,
        ),
        (
            "unified_vs_disunited_in_explained",
            totals.unified_in_explained,
            totals.disunited_in_explained,
        ),
    ];
    let chi_squared = splits
        .into_iter()
        .filter_map(|(name, a, b)| {
            let (statistic, p_value) = chi_squared_2x1(a, b).ok()?;
            Some(ChiSquaredResult {
                split: name.to_string(),
                a,
                b,
                statistic,
                p_value,
            })
        })
        .collect();
    CorpusReport {
        program_id,
        totals,
        types,
        categories,
        chi_squared,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamSymbol {
    S,
    U,
    D,
    #[serde(rename = "D*")]
    DStar,
}

impl StreamSymbol {
    pub fn as_str(self) -> &'static str {
        match self {
            StreamSymbol::S => "S",
            StreamSymbol::U => "U",
            StreamSymbol::D => "D",
            StreamSymbol::DStar => "D*",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamEncoding(pub Vec<StreamSymbol>);

impl StreamEncoding {
    pub fn count(&self, symbol: StreamSymbol) -> usize {
        self.0.iter().filter(|s| **s == symbol).count()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for StreamEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let symbols: Vec<&str> = self.0.iter().map(|s| s.as_str()).collect();
        f.write_str(&symbols.join(" "))
    }
}

pub fn encode_stream<'a>(outcomes: impl IntoIterator<Item = &'a Outcome>) -> StreamEncoding {
    StreamEncoding(
        outcomes
            .into_iter()
            .map(|o| match (o.kind, o.explained) {
                (OutcomeKind::Same, _) => StreamSymbol::S,
                (OutcomeKind::Unified, _) => StreamSymbol::U,
                (OutcomeKind::Disunited, false) => StreamSymbol::D,
                (OutcomeKind::Disunited, true) => StreamSymbol::DStar,
            })
            .collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
}

impl FromStr for ReportFormat {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            other => Err(StudyError::UnknownFormat(other.to_string())),
        }
    }
}

/// `count (pct%)` with the percentage rounded to the nearest integer, or
/// `count (–)` when the denominator is zero.
pub fn count_with_percent(count: u64, of: u64) -> String {
    match ratio(count, of) {
        Some(r) => format!("{count} ({:.0}%)", (r * 100.0).round()),
        None => format!("{count} (–)"),
    }
}

fn ratio(count: u64, of: u64) -> Option<f64> {
    (of > 0).then(|| count as f64 / of as f64)
}

#[derive(Serialize)]
struct Ratios {
    different_views_of_images: Option<f64>,
    unified_of_different: Option<f64>,
    disunited_of_different: Option<f64>,
    explained_of_different: Option<f64>,
    not_explained_of_different: Option<f64>,
    unified_in_explained_of_explained: Option<f64>,
    disunited_in_explained_of_explained: Option<f64>,
    abstractions_of_type_total: Option<f64>,
    properties_of_type_total: Option<f64>,
    relationships_of_type_total: Option<f64>,
    multiple_unified_of_type_total: Option<f64>,
}

impl Ratios {
    fn of(t: &OutcomeCounts, ty: &TypeBreakdown) -> Self {
        let by_type = ty.unified_total_by_type;
        Ratios {
            different_views_of_images: ratio(t.different_views, t.images),
            unified_of_different: ratio(t.unified, t.different_views),
            disunited_of_different: ratio(t.disunited, t.different_views),
            explained_of_different: ratio(t.explained, t.different_views),
            not_explained_of_different: ratio(t.not_explained, t.different_views),
            unified_in_explained_of_explained: ratio(t.unified_in_explained, t.explained),
            disunited_in_explained_of_explained: ratio(t.disunited_in_explained, t.explained),
            abstractions_of_type_total: ratio(ty.abstractions, by_type),
            properties_of_type_total: ratio(ty.properties, by_type),
            relationships_of_type_total: ratio(ty.relationships, by_type),
            multiple_unified_of_type_total: ratio(ty.multiple_unified, by_type),
        }
    }
}

#[derive(Serialize)]
struct JsonReport<'a> {
    #[serde(flatten)]
    report: &'a CorpusReport,
    ratios: Ratios,
}

pub fn render_report(r: &CorpusReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let doc = JsonReport {
                report: r,
                ratios: Ratios::of(&r.totals, &r.types),
            };
            serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
        }
        ReportFormat::Text => render_text(r),
    }
}

fn outcome_row(id: &str, t: &OutcomeCounts) -> Vec<String> {
    vec![
        id.to_string(),
        t.images.to_string(),
        count_with_percent(t.different_views, t.images),
        count_with_percent(t.unified, t.different_views),
        count_with_percent(t.disunited, t.different_views),
        count_with_percent(t.explained, t.different_views),
        count_with_percent(t.not_explained, t.different_views),
        count_with_percent(t.unified_in_explained, t.explained),
        count_with_percent(t.disunited_in_explained, t.explained),
    ]
}

fn type_row(id: &str, ty: &TypeBreakdown) -> Vec<String> {
    let total = ty.unified_total_by_type;
    vec![
        id.to_string(),
        count_with_percent(ty.abstractions, total),
        count_with_percent(ty.properties, total),
        count_with_percent(ty.relationships, total),
        count_with_percent(ty.multiple_unified, total),
        total.to_string(),
    ]
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}", w = *w))
            .collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

fn render_text(r: &CorpusReport) -> String {
    let mut outcome_rows = vec![outcome_row(&r.program_id, &r.totals)];
    let mut type_rows = vec![type_row(&r.program_id, &r.types)];
    for (cat, sub) in &r.categories {
        let id = format!("{}/{}", r.program_id, cat);
        outcome_rows.push(outcome_row(&id, &sub.totals));
        type_rows.push(type_row(&id, &sub.types));
    }
    let mut out = String::from("Explained and unified results\n");
    out.push_str(&table(
        &[
            "ID",
            "Images",
            "Different Views",
            "Unified",
            "Disunited",
            "Explained",
            "Not Explained",
            "Unified in Explained",
            "Disunited in Explained",
        ],
        &outcome_rows,
    ));
    out.push_str("\nUnified views by type\n");
    out.push_str(&table(
        &[
            "ID",
            "Abstractions",
            "Properties",
            "Relationships",
            "Multiple Unified",
            "Unified Total",
        ],
        &type_rows,
    ));
    if !r.chi_squared.is_empty() {
        out.push_str("\nChi-squared (2x1, df=1)\n");
        let rows: Vec<Vec<String>> = r
            .chi_squared
            .iter()
            .map(|c| {
                vec![
                    c.split.clone(),
                    format!("{}/{}", c.a, c.b),
                    format!("{:.4}", c.statistic),
                    format!("{:.4}", c.p_value),
                ]
            })
            .collect();
        out.push_str(&table(&["Split", "Counts", "Statistic", "p"], &rows));
    }
    out
}

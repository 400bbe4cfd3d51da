//! Recorded classifier outputs.
//!
//! A prediction file holds one JSON record per line:
//!
//! ```json
//! {"image_id": "img_b", "classifier": "resnet", "labels": ["desktop computer", "desk"], "probs": [0.7, 0.3], "category": "furniture"}
//! ```
//!
//! The same record schema is served by remote classifiers at
//! `GET <endpoint>/predict?image_id=<id>`; see [`fetch_remote`] and
//! [`StubServer`].

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::converge::{ConvergeError, View};

/// Allowed deviation of a distribution's total probability from 1.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PredictionError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate record for image `{image_id}` and classifier `{classifier}`")]
    Duplicate {
        line: usize,
        image_id: String,
        classifier: String,
    },
    #[error("line {line}: {message}")]
    Invariant { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Animals,
    Electronics,
    Food,
    Furniture,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Animals,
        Category::Electronics,
        Category::Food,
        Category::Furniture,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Animals => "animals",
            Category::Electronics => "electronics",
            Category::Food => "food",
            Category::Furniture => "furniture",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionDistribution {
    image_id: String,
    classifier: String,
    labels: Vec<String>,
    probs: Vec<f64>,
}

impl PredictionDistribution {
    pub fn new(
        image_id: impl Into<String>,
        classifier: impl Into<String>,
        labels: Vec<String>,
        probs: Vec<f64>,
    ) -> Result<Self, String> {
        if labels.is_empty() {
            return Err("distribution has no labels".into());
        }
        if labels.len() != probs.len() {
            return Err(format!(
                "{} labels but {} probabilities",
                labels.len(),
                probs.len()
            ));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(format!("label `{dup}` appears twice"));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(format!("probability {p} outside [0, 1]"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(format!("probabilities sum to {sum}, expected 1"));
        }
        Ok(PredictionDistribution {
            image_id: image_id.into(),
            classifier: classifier.into(),
            labels,
            probs,
        })
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn classifier(&self) -> &str {
        &self.classifier
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Highest-probability label; the earliest one wins ties.
pub fn top_prediction(d: &PredictionDistribution) -> Result<View, ConvergeError> {
    let mut best = 0;
    for (i, p) in d.probs.iter().enumerate() {
        if *p > d.probs[best] {
            best = i;
        }
    }
    View::new(&d.labels[best], &d.classifier)
}

/// Wire form of one record, shared by prediction files and the remote
/// contract.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub image_id: String,
    pub classifier: String,
    pub labels: Vec<String>,
    pub probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl PredictionRecord {
    fn from_distribution(d: &PredictionDistribution, category: Option<Category>) -> Self {
        PredictionRecord {
            image_id: d.image_id.clone(),
            classifier: d.classifier.clone(),
            labels: d.labels.clone(),
            probs: d.probs.clone(),
            category: category.map(|c| c.as_str().to_string()),
        }
    }

    fn into_parts(self) -> Result<(PredictionDistribution, Option<Category>), String> {
        let category = self
            .category
            .as_deref()
            .map(Category::from_str)
            .transpose()?;
        let dist =
            PredictionDistribution::new(self.image_id, self.classifier, self.labels, self.probs)?;
        Ok((dist, category))
    }
}

/// Records indexed by `(image_id, classifier)`.
///
/// Equality ignores source line numbers, so a corpus loaded from a file
/// equals the same corpus fetched from endpoints.
#[derive(Clone, Debug, Default)]
pub struct PredictionCorpus {
    records: BTreeMap<(String, String), PredictionDistribution>,
    categories: BTreeMap<String, Category>,
    lines: BTreeMap<(String, String), usize>,
}

impl PartialEq for PredictionCorpus {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records && self.categories == other.categories
    }
}

impl PredictionCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a record; `line` is kept for diagnostics only.
    pub fn insert(
        &mut self,
        dist: PredictionDistribution,
        category: Option<Category>,
        line: Option<usize>,
    ) -> Result<(), PredictionError> {
        let line_no = line.unwrap_or(0);
        let key = (dist.image_id.clone(), dist.classifier.clone());
        if self.records.contains_key(&key) {
            return Err(PredictionError::Duplicate {
                line: line_no,
                image_id: key.0,
                classifier: key.1,
            });
        }
        if let Some(cat) = category {
            match self.categories.get(&key.0) {
                Some(existing) if *existing != cat => {
                    return Err(PredictionError::Invariant {
                        line: line_no,
                        message: format!(
                            "image `{}` already has category `{existing}`, got `{cat}`",
                            key.0
                        ),
                    })
                }
                _ => {
                    self.categories.insert(key.0.clone(), cat);
                }
            }
        }
        if let Some(l) = line {
            self.lines.insert(key.clone(), l);
        }
        self.records.insert(key, dist);
        Ok(())
    }

    pub fn get(&self, image_id: &str, classifier: &str) -> Option<&PredictionDistribution> {
        self.records
            .get(&(image_id.to_string(), classifier.to_string()))
    }

    pub fn line_of(&self, image_id: &str, classifier: &str) -> Option<usize> {
        self.lines
            .get(&(image_id.to_string(), classifier.to_string()))
            .copied()
    }

    pub fn category(&self, image_id: &str) -> Option<Category> {
        self.categories.get(image_id).copied()
    }

    /// Distinct image ids in sorted order.
    pub fn image_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.records.keys().map(|(i, _)| i.as_str()).collect();
        ids.dedup();
        ids
    }

    pub fn classifiers(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.records.keys().map(|(_, c)| c.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        names
    }

    pub fn records(&self) -> impl Iterator<Item = &PredictionDistribution> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Serialize back to the line format, in key order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for ((image, _), d) in &self.records {
            let rec = PredictionRecord::from_distribution(d, self.category(image));
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

pub fn parse_predictions(text: &str) -> Result<PredictionCorpus, PredictionError> {
    read_predictions(text.as_bytes())
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<PredictionCorpus, PredictionError> {
    read_predictions(BufReader::new(std::fs::File::open(path)?))
}

fn read_predictions(reader: impl BufRead) -> Result<PredictionCorpus, PredictionError> {
    let mut corpus = PredictionCorpus::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord =
            serde_json::from_str(&line).map_err(|e| PredictionError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        let (dist, category) =
            record
                .into_parts()
                .map_err(|message| PredictionError::Invariant {
                    line: line_no,
                    message,
                })?;
        corpus.insert(dist, category, Some(line_no))?;
    }
    Ok(corpus)
}

/// Environment variable naming the endpoint of classifier `name`
/// (`SMF_ENDPOINT_RESNET` for `resnet`).
pub fn endpoint_env_var(name: &str) -> String {
    let suffix: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect();
    format!("SMF_ENDPOINT_{suffix}")
}

/// Fetch one record from `GET <endpoint>/predict?image_id=<id>`.
pub fn fetch_remote(
    endpoint: &str,
    image_id: &str,
) -> Result<(PredictionDistribution, Option<Category>), RemoteError> {
    let url = format!("{}/predict", endpoint.trim_end_matches('/'));
    let mut response = ureq::get(&url)
        .query("image_id", image_id)
        .call()
        .map_err(|e| RemoteError::Transport(e.to_string()))?;
    let body = response
        .body_mut()
        .read_to_string()
        .map_err(|e| RemoteError::Transport(e.to_string()))?;
    let record: PredictionRecord =
        serde_json::from_str(&body).map_err(|e| RemoteError::Protocol(e.to_string()))?;
    if record.image_id != image_id {
        return Err(RemoteError::Protocol(format!(
            "asked for image `{image_id}`, got `{}`",
            record.image_id
        )));
    }
    record.into_parts().map_err(RemoteError::Protocol)
}

/// Build a corpus by fetching every `(image, classifier)` pair from the
/// given per-classifier endpoints.
pub fn fetch_corpus(
    endpoints: &BTreeMap<String, String>,
    image_ids: &[&str],
) -> Result<PredictionCorpus, RemoteError> {
    let mut corpus = PredictionCorpus::new();
    for image in image_ids {
        for (classifier, endpoint) in endpoints {
            let (dist, category) = fetch_remote(endpoint, image)?;
            if dist.classifier() != classifier {
                return Err(RemoteError::Protocol(format!(
                    "endpoint for `{classifier}` answered as `{}`",
                    dist.classifier()
                )));
            }
            corpus
                .insert(dist, category, None)
                .map_err(|e| RemoteError::Protocol(e.to_string()))?;
        }
    }
    Ok(corpus)
}

/// Loopback HTTP server that replays a corpus under the remote contract.
///
/// Classifier `c` is served at `<base_url>/c/predict?image_id=<id>`. Unknown
/// images or classifiers answer 404. Requests to `/raw/<path>` return the
/// body registered with [`StubServer::with_raw`], which lets tests serve
/// non-conforming responses.
pub struct StubServer {
    server: Arc<tiny_http::Server>,
    base_url: String,
    worker: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(corpus: PredictionCorpus) -> std::io::Result<StubServer> {
        Self::with_raw(corpus, BTreeMap::new())
    }

    pub fn with_raw(
        corpus: PredictionCorpus,
        raw: BTreeMap<String, String>,
    ) -> std::io::Result<StubServer> {
        let server = tiny_http::Server::http("127.0.0.1:0")
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("stub server has no IP address"))?;
        let server = Arc::new(server);
        let handle = Arc::clone(&server);
        let worker = std::thread::spawn(move || {
            for request in handle.incoming_requests() {
                let (status, body) = respond(&corpus, &raw, request.url());
                let response = tiny_http::Response::from_string(body).with_status_code(status);
                let _ = request.respond(response);
            }
        });
        Ok(StubServer {
            server,
            base_url: format!("http://{addr}"),
            worker: Some(worker),
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn endpoint(&self, classifier: &str) -> String {
        format!("{}/{classifier}", self.base_url)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn respond(corpus: &PredictionCorpus, raw: &BTreeMap<String, String>, url: &str) -> (u16, String) {
    let Ok(parsed) = url::Url::parse(&format!("http://stub{url}")) else {
        return (400, "bad request".into());
    };
    let segments: Vec<&str> = parsed
        .path_segments()
        .map(|s| s.collect())
        .unwrap_or_default();
    match segments.as_slice() {
        ["raw", key @ ..] => match raw.get(&key.join("/")) {
            Some(body) => (200, body.clone()),
            None => (404, "not found".into()),
        },
        [classifier, "predict"] => {
            let image = parsed
                .query_pairs()
                .find(|(k, _)| k == "image_id")
                .map(|(_, v)| v.into_owned());
            let Some(image) = image else {
                return (400, "missing image_id".into());
            };
            match corpus.get(&image, classifier) {
                Some(d) => {
                    let rec = PredictionRecord::from_distribution(d, corpus.category(&image));
                    (200, serde_json::to_string(&rec).expect("record serializes"))
                }
                None => (404, "no such record".into()),
            }
        }
        _ => (404, "not found".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(labels: &[&str], probs: &[f64]) -> PredictionDistribution {
        PredictionDistribution::new(
            "img",
            "resnet",
            labels.iter().map(|s| s.to_string()).collect(),
            probs.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn top_prediction_rules() {
        let v = top_prediction(&dist(&["desk", "desktop computer"], &[0.3, 0.7])).unwrap();
        assert_eq!(v.raw_label(), "desktop computer");
        assert_eq!(v.normalized_label(), "desktop_computer");
        assert_eq!(v.source(), "resnet");
        assert_eq!(
            top_prediction(&dist(&["ox"], &[1.0])).unwrap().raw_label(),
            "ox"
        );
        assert_eq!(
            top_prediction(&dist(&["left", "right"], &[0.5, 0.5]))
                .unwrap()
                .raw_label(),
            "left"
        );
    }

    #[test]
    fn distribution_invariants() {
        let mk = |l: Vec<&str>, p: Vec<f64>| {
            PredictionDistribution::new("i", "c", l.into_iter().map(String::from).collect(), p)
        };
        assert!(mk(vec![], vec![]).is_err());
        assert!(mk(vec!["a", "b"], vec![1.0]).is_err());
        assert!(mk(vec!["a", "a"], vec![0.5, 0.5]).is_err());
        assert!(mk(vec!["a", "b"], vec![0.5, 0.3]).is_err());
        assert!(mk(vec!["a", "b"], vec![1.5, -0.5]).is_err());
        assert!(mk(vec!["a", "b"], vec![0.5, 0.5 + 5e-7]).is_ok());
        assert!(mk(vec!["a", "b", "c"], vec![0.5, 0.3, 0.2]).is_ok());
    }

    #[test]
    fn load_errors_name_the_line() {
        let good = r#"{"image_id":"a","classifier":"r","labels":["x"],"probs":[1.0]}"#;
        let bad_sum = r#"{"image_id":"b","classifier":"r","labels":["x","y"],"probs":[0.5,0.3]}"#;
        let err = parse_predictions(&format!("{good}\n{bad_sum}\n")).unwrap_err();
        assert!(
            matches!(err, PredictionError::Invariant { line: 2, .. }),
            "{err}"
        );
        assert!(err.to_string().contains("line 2"));

        let err = parse_predictions(&format!("{good}\n\n{good}\n")).unwrap_err();
        assert!(matches!(err, PredictionError::Duplicate { line: 3, .. }));

        let err = parse_predictions("{not json}\n").unwrap_err();
        assert!(matches!(err, PredictionError::Malformed { line: 1, .. }));

        let cat =
            r#"{"image_id":"a","classifier":"r","labels":["x"],"probs":[1.0],"category":"toys"}"#;
        assert!(matches!(
            parse_predictions(cat).unwrap_err(),
            PredictionError::Invariant { line: 1, .. }
        ));
    }

    #[test]
    fn empty_input_is_empty_corpus() {
        assert!(parse_predictions("").unwrap().is_empty());
    }

    #[test]
    fn endpoint_variable_names() {
        assert_eq!(endpoint_env_var("resnet"), "SMF_ENDPOINT_RESNET");
        assert_eq!(endpoint_env_var("resnet50-v2"), "SMF_ENDPOINT_RESNET50_V2");
    }

    #[test]
    fn remote_errors_are_distinct() {
        let mut raw = BTreeMap::new();
        raw.insert(
            "mismatch/predict".to_string(),
            r#"{"image_id":"x","classifier":"m","labels":["a","b"],"probs":[1.0]}"#.to_string(),
        );
        raw.insert(
            "three/predict".to_string(),
            r#"{"image_id":"x","classifier":"t","labels":["a","b","c"],"probs":[0.5,0.3,0.2]}"#
                .to_string(),
        );
        raw.insert("garbage/predict".to_string(), "<html>".to_string());
        let stub = StubServer::with_raw(PredictionCorpus::new(), raw).unwrap();
        let base = format!("{}/raw", stub.base_url());

        let (d, _) = fetch_remote(&format!("{base}/three"), "x").unwrap();
        assert_eq!(d.labels().len(), 3);
        assert!(matches!(
            fetch_remote(&format!("{base}/mismatch"), "x"),
            Err(RemoteError::Protocol(_))
        ));
        assert!(matches!(
            fetch_remote(&format!("{base}/garbage"), "x"),
            Err(RemoteError::Protocol(_))
        ));
        assert!(matches!(
            fetch_remote(&stub.endpoint("nobody"), "x"),
            Err(RemoteError::Transport(_))
        ));
        assert!(matches!(
            fetch_remote(&format!("{base}/three"), "other"),
            Err(RemoteError::Protocol(_))
        ));
        // nothing listening
        assert!(matches!(
            fetch_remote("http://127.0.0.1:1", "x"),
            Err(RemoteError::Transport(_))
        ));
    }

    proptest! {
        #[test]
        fn top_label_has_maximal_probability(weights in proptest::collection::vec(0u32..100, 1..8)) {
            let total: u32 = weights.iter().sum::<u32>().max(1);
            let mut probs: Vec<f64> = weights.iter().map(|w| *w as f64 / total as f64).collect();
            if weights.iter().all(|w| *w == 0) {
                probs = vec![1.0 / weights.len() as f64; weights.len()];
            }
            let labels: Vec<String> = (0..probs.len()).map(|i| format!("label {i}")).collect();
            let d = PredictionDistribution::new("i", "c", labels.clone(), probs.clone()).unwrap();
            let v = top_prediction(&d).unwrap();
            let idx = labels.iter().position(|l| l == v.raw_label()).unwrap();
            prop_assert!(probs.iter().all(|p| *p <= probs[idx]));
            prop_assert!(probs[..idx].iter().all(|p| *p < probs[idx]));
        }

        #[test]
        fn jsonl_round_trip_is_exact(weights in proptest::collection::vec(0.001f64..1.0, 1..6)) {
            let total: f64 = weights.iter().sum();
            let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let labels: Vec<String> = (0..probs.len()).map(|i| format!("label {i}")).collect();
            let mut corpus = PredictionCorpus::new();
            corpus
                .insert(PredictionDistribution::new("i", "c", labels, probs).unwrap(), None, None)
                .unwrap();
            prop_assert_eq!(parse_predictions(&corpus.to_jsonl()).unwrap(), corpus);
        }
    }
}

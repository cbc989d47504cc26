//! Free-text delivery requests: structured records, extraction, corpus
//! generation and field-level scoring.

mod corpus;
mod llm;
mod pattern;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::io::{self, IoError};
use crate::skyway::{SkywayNetwork, StationId};

pub use corpus::{generate_corpus, TEMPLATE_COUNT};
pub use llm::{
    extract_llm, parse_reply, prompt_for, BackendConfig, ChatTransport, HttpChatTransport, LlmBackend, ENV_API_KEY,
    ENV_ENDPOINT, ENV_MODEL,
};
pub use pattern::extract_pattern;

/// Absolute tolerance when scoring extracted payloads.
pub const PAYLOAD_TOLERANCE_KG: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredRequest {
    pub request_id: u64,
    pub start_node: StationId,
    pub destination_node: StationId,
    pub payload_kg: f64,
}

impl StructuredRequest {
    pub fn validate(&self, net: &SkywayNetwork) -> Result<(), String> {
        for s in [self.start_node, self.destination_node] {
            if !net.contains(s) {
                return Err(format!("request {}: unknown station {s}", self.request_id));
            }
        }
        if self.start_node == self.destination_node {
            return Err(format!("request {}: start and destination are both {}", self.request_id, self.start_node));
        }
        if !(self.payload_kg.is_finite() && self.payload_kg > 0.0) {
            return Err(format!("request {}: payload must be positive, got {}", self.request_id, self.payload_kg));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    #[serde(flatten)]
    pub structured: StructuredRequest,
    pub free_text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extras: Vec<String>,
    /// Optional fixed arrival time for simulation runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrival_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    StartNode,
    DestinationNode,
    PayloadKg,
}

impl Field {
    pub const ALL: [Field; 3] = [Field::StartNode, Field::DestinationNode, Field::PayloadKg];

    pub fn name(self) -> &'static str {
        match self {
            Field::StartNode => "start_node",
            Field::DestinationNode => "destination_node",
            Field::PayloadKg => "payload_kg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "issue")]
pub enum Issue {
    MissingField,
    AmbiguousField { candidates: Vec<u64> },
    UnknownStation { id: u64 },
    InvalidValue { value: String },
    SameAsStart,
    BackendFailure { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub field: Field,
    #[serde(flatten)]
    pub issue: Issue,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let field = self.field.name();
        match &self.issue {
            Issue::MissingField => write!(f, "{field}: not found"),
            Issue::AmbiguousField { candidates } => write!(f, "{field}: ambiguous between {candidates:?}"),
            Issue::UnknownStation { id } => write!(f, "{field}: station {id} is not in the network"),
            Issue::InvalidValue { value } => write!(f, "{field}: invalid value {value}"),
            Issue::SameAsStart => write!(f, "{field}: same as start_node"),
            Issue::BackendFailure { message } => write!(f, "{field}: backend failed: {message}"),
        }
    }
}

/// Whatever the extractor could establish, plus why the rest is missing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub start_node: Option<StationId>,
    pub destination_node: Option<StationId>,
    pub payload_kg: Option<f64>,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
}

impl ExtractionResult {
    pub fn is_complete(&self) -> bool {
        self.start_node.is_some() && self.destination_node.is_some() && self.payload_kg.is_some()
    }

    /// Structured request if every field was found.
    pub fn to_request(&self, request_id: u64) -> Option<StructuredRequest> {
        Some(StructuredRequest {
            request_id,
            start_node: self.start_node?,
            destination_node: self.destination_node?,
            payload_kg: self.payload_kg?,
        })
    }

    fn failed(message: &str) -> Self {
        ExtractionResult {
            diagnostics: Field::ALL
                .iter()
                .map(|&field| Diagnostic { field, issue: Issue::BackendFailure { message: message.to_string() } })
                .collect(),
            ..ExtractionResult::default()
        }
    }
}

/// Raw candidates found by an extractor before network validation.
#[derive(Debug, Clone, Default)]
pub(crate) struct Candidates {
    pub start: Vec<u64>,
    pub destination: Vec<u64>,
    pub payload: Option<f64>,
}

/// Shared validator: resolves candidates into an [`ExtractionResult`],
/// refusing to choose between distinct candidates for one role.
pub(crate) fn resolve(c: Candidates, net: &SkywayNetwork) -> ExtractionResult {
    let mut out = ExtractionResult::default();
    let pick = |field: Field, ids: &[u64], diags: &mut Vec<Diagnostic>| -> Option<StationId> {
        let mut distinct: Vec<u64> = Vec::new();
        for &id in ids {
            if !distinct.contains(&id) {
                distinct.push(id);
            }
        }
        let mut known = Vec::new();
        for id in distinct {
            match StationId::try_from(id) {
                Ok(s) if net.contains(s) => known.push(s),
                _ => diags.push(Diagnostic { field, issue: Issue::UnknownStation { id } }),
            }
        }
        match known.as_slice() {
            [] => {
                if diags.iter().all(|d| d.field != field) {
                    diags.push(Diagnostic { field, issue: Issue::MissingField });
                }
                None
            }
            [one] => Some(*one),
            many => {
                diags.push(Diagnostic {
                    field,
                    issue: Issue::AmbiguousField { candidates: many.iter().map(|&s| s as u64).collect() },
                });
                None
            }
        }
    };
    let mut diags = Vec::new();
    out.start_node = pick(Field::StartNode, &c.start, &mut diags);
    out.destination_node = pick(Field::DestinationNode, &c.destination, &mut diags);
    if let (Some(s), Some(d)) = (out.start_node, out.destination_node) {
        if s == d {
            diags.push(Diagnostic { field: Field::DestinationNode, issue: Issue::SameAsStart });
        }
    }
    match c.payload {
        Some(p) if p.is_finite() && p > 0.0 => out.payload_kg = Some(p),
        Some(p) => {
            diags.push(Diagnostic { field: Field::PayloadKg, issue: Issue::InvalidValue { value: p.to_string() } })
        }
        None => diags.push(Diagnostic { field: Field::PayloadKg, issue: Issue::MissingField }),
    }
    out.diagnostics = diags;
    out
}

#[derive(Debug, Error)]
pub enum IntakeError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("network needs at least 2 stations to generate requests, has {0}")]
    NetworkTooSmall(usize),
    #[error("{preds} predictions but {golds} gold records")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("environment variable {0} is not set")]
    MissingEnv(&'static str),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("backend reply malformed after {attempts} attempts; last reply: {last_reply:?}")]
    MalformedReplyAfterRetries { attempts: usize, last_reply: String },
}

/// A free-text to structured-request extractor.
pub trait ExtractionBackend: Sync {
    fn name(&self) -> String;
    fn extract(&self, text: &str) -> Result<ExtractionResult, IntakeError>;
    /// Cap on concurrent calls during batch extraction, if the backend needs one.
    fn concurrency(&self) -> Option<usize> {
        None
    }
}

/// The rule-based extractor bound to a network.
pub struct PatternBackend<'a> {
    pub net: &'a SkywayNetwork,
}

impl ExtractionBackend for PatternBackend<'_> {
    fn name(&self) -> String {
        "pattern".to_string()
    }

    fn extract(&self, text: &str) -> Result<ExtractionResult, IntakeError> {
        Ok(extract_pattern(text, self.net))
    }
}

/// Run `backend` over every text; per-row failures become empty results
/// carrying a backend-failure diagnostic.
pub fn extract_batch(
    backend: &dyn ExtractionBackend,
    texts: &[&str],
    exec: Execution,
    concurrency: Option<usize>,
) -> (Vec<ExtractionResult>, usize) {
    let run = |t: &&str| backend.extract(t);
    let raw = match concurrency {
        Some(limit) => exec.map_bounded(texts, limit, run),
        None => exec.map(texts, run),
    };
    let mut errors = 0;
    let results = raw
        .into_iter()
        .map(|r| {
            r.unwrap_or_else(|e| {
                errors += 1;
                ExtractionResult::failed(&e.to_string())
            })
        })
        .collect();
    (results, errors)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerFieldAccuracy {
    pub start_node: f64,
    pub destination_node: f64,
    pub payload_kg: f64,
}

impl PerFieldAccuracy {
    pub fn get(&self, f: Field) -> f64 {
        match f {
            Field::StartNode => self.start_node,
            Field::DestinationNode => self.destination_node,
            Field::PayloadKg => self.payload_kg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_field: PerFieldAccuracy,
    pub structured_match: f64,
    pub exact_match: f64,
}

fn field_correct(pred: &ExtractionResult, gold: &StructuredRequest, f: Field) -> bool {
    match f {
        Field::StartNode => pred.start_node == Some(gold.start_node),
        Field::DestinationNode => pred.destination_node == Some(gold.destination_node),
        Field::PayloadKg => pred.payload_kg.is_some_and(|p| (p - gold.payload_kg).abs() <= PAYLOAD_TOLERANCE_KG),
    }
}

/// Field-level scoring of aligned predictions against gold requests.
pub fn evaluate(preds: &[ExtractionResult], golds: &[StructuredRequest]) -> Result<EvalReport, IntakeError> {
    if preds.len() != golds.len() {
        return Err(IntakeError::LengthMismatch { preds: preds.len(), golds: golds.len() });
    }
    if golds.is_empty() {
        return Ok(EvalReport {
            per_field: PerFieldAccuracy { start_node: 1.0, destination_node: 1.0, payload_kg: 1.0 },
            structured_match: 1.0,
            exact_match: 1.0,
        });
    }
    let n = golds.len() as f64;
    let mut field_hits = [0usize; 3];
    let mut per_record = 0usize;
    let mut exact = 0usize;
    for (p, g) in preds.iter().zip(golds) {
        let mut hits = 0;
        for (i, &f) in Field::ALL.iter().enumerate() {
            if field_correct(p, g, f) {
                field_hits[i] += 1;
                hits += 1;
            }
        }
        per_record += hits;
        if hits == 3 {
            exact += 1;
        }
    }
    // Counting hits (rather than summing per-record fractions) keeps the
    // metrics independent of record order.
    Ok(EvalReport {
        per_field: PerFieldAccuracy {
            start_node: field_hits[0] as f64 / n,
            destination_node: field_hits[1] as f64 / n,
            payload_kg: field_hits[2] as f64 / n,
        },
        structured_match: per_record as f64 / (3.0 * n),
        exact_match: exact as f64 / n,
    })
}

/// Seeded train/test partition of record indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.8, seed: 0 }
    }
}

pub fn train_test_split(n: usize, spec: SplitSpec) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let train_n = ((n as f64) * spec.train_fraction).round() as usize;
    let test = idx.split_off(train_n.min(n));
    let mut train = idx;
    train.sort_unstable();
    let mut test = test;
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendScore {
    pub backend: String,
    pub report: EvalReport,
    /// Rows where the backend itself failed (scored as misses).
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub train_size: usize,
    pub test_size: usize,
    pub rows: Vec<BackendScore>,
}

/// Score every backend on the same held-out split of `corpus`.
pub fn benchmark_backends(
    corpus: &[RequestRecord],
    backends: &[&dyn ExtractionBackend],
    split: SplitSpec,
    exec: Execution,
) -> Result<BenchmarkTable, IntakeError> {
    if corpus.is_empty() {
        return Err(IntakeError::EmptyCorpus);
    }
    let (train, test) = train_test_split(corpus.len(), split);
    let texts: Vec<&str> = test.iter().map(|&i| corpus[i].free_text.as_str()).collect();
    let golds: Vec<StructuredRequest> = test.iter().map(|&i| corpus[i].structured.clone()).collect();
    let mut rows = Vec::with_capacity(backends.len());
    for backend in backends {
        let (preds, errors) = extract_batch(*backend, &texts, exec, backend.concurrency());
        rows.push(BackendScore { backend: backend.name(), report: evaluate(&preds, &golds)?, errors });
    }
    Ok(BenchmarkTable { train_size: train.len(), test_size: test.len(), rows })
}

/// Hook for an external scorer such as an LLM judge. No rubric ships with
/// the crate; callers supply their own.
pub trait ExternalJudge: Sync {
    fn score(&self, rubric: &str, free_text: &str, prediction: &ExtractionResult) -> Result<f64, IntakeError>;
}

/// Mean judge score over aligned records and predictions.
pub fn judge_mean(
    judge: &dyn ExternalJudge,
    rubric: &str,
    records: &[RequestRecord],
    preds: &[ExtractionResult],
) -> Result<f64, IntakeError> {
    if records.len() != preds.len() {
        return Err(IntakeError::LengthMismatch { preds: preds.len(), golds: records.len() });
    }
    if records.is_empty() {
        return Ok(1.0);
    }
    let mut total = 0.0;
    for (r, p) in records.iter().zip(preds) {
        total += judge.score(rubric, &r.free_text, p)?;
    }
    Ok(total / records.len() as f64)
}

/// One line of `parse` output: the prediction keyed by request id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub request_id: u64,
    #[serde(flatten)]
    pub result: ExtractionResult,
}

pub fn load_corpus(path: &Path) -> Result<Vec<RequestRecord>, IntakeError> {
    Ok(io::read_jsonl(path)?)
}

pub fn save_corpus(path: &Path, records: &[RequestRecord]) -> Result<(), IntakeError> {
    Ok(io::write_jsonl(path, records)?)
}

pub fn eval_report_json(report: &EvalReport) -> String {
    serde_json::to_string(report).expect("serializable report")
}

/// Per-field diagnostic counts, handy for summaries.
pub fn diagnostic_histogram(results: &[ExtractionResult]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for d in results.iter().flat_map(|r| &r.diagnostics) {
        let key = match &d.issue {
            Issue::MissingField => "missing",
            Issue::AmbiguousField { .. } => "ambiguous",
            Issue::UnknownStation { .. } => "unknown_station",
            Issue::InvalidValue { .. } => "invalid_value",
            Issue::SameAsStart => "same_as_start",
            Issue::BackendFailure { .. } => "backend_failure",
        };
        *out.entry(format!("{}.{key}", d.field.name())).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gold(id: u64, s: StationId, d: StationId, p: f64) -> StructuredRequest {
        StructuredRequest { request_id: id, start_node: s, destination_node: d, payload_kg: p }
    }

    fn pred(s: Option<StationId>, d: Option<StationId>, p: Option<f64>) -> ExtractionResult {
        ExtractionResult { start_node: s, destination_node: d, payload_kg: p, diagnostics: vec![] }
    }

    #[test]
    fn perfect_predictions_score_one() {
        let golds = vec![gold(1, 7, 14, 3.0), gold(2, 18, 1, 7.0)];
        let preds = vec![pred(Some(7), Some(14), Some(3.0)), pred(Some(18), Some(1), Some(7.0))];
        let r = evaluate(&preds, &golds).unwrap();
        assert_eq!(r.structured_match, 1.0);
        assert_eq!(r.exact_match, 1.0);
        assert_eq!(r.per_field, PerFieldAccuracy { start_node: 1.0, destination_node: 1.0, payload_kg: 1.0 });
    }

    #[test]
    fn partial_credit() {
        let golds = vec![gold(1, 7, 14, 3.0), gold(2, 18, 1, 7.0)];
        let preds = vec![pred(Some(7), Some(14), None), pred(Some(18), Some(1), Some(7.0))];
        let r = evaluate(&preds, &golds).unwrap();
        assert!((r.structured_match - 0.8333).abs() < 1e-4);
        assert_eq!(r.exact_match, 0.5);
        assert_eq!(r.per_field.payload_kg, 0.5);
    }

    #[test]
    fn empty_sets_are_vacuously_perfect() {
        let r = evaluate(&[], &[]).unwrap();
        assert_eq!(r.exact_match, 1.0);
        assert_eq!(r.structured_match, 1.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            evaluate(&[ExtractionResult::default()], &[]),
            Err(IntakeError::LengthMismatch { preds: 1, golds: 0 })
        ));
    }

    #[test]
    fn payload_tolerance() {
        let golds = vec![gold(1, 0, 1, 3.0)];
        assert_eq!(evaluate(&[pred(None, None, Some(3.0 + 5e-7))], &golds).unwrap().per_field.payload_kg, 1.0);
        assert_eq!(evaluate(&[pred(None, None, Some(3.0 + 5e-6))], &golds).unwrap().per_field.payload_kg, 0.0);
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let spec = SplitSpec { train_fraction: 0.8, seed: 9 };
        let (a_train, a_test) = train_test_split(5000, spec);
        let (b_train, b_test) = train_test_split(5000, spec);
        assert_eq!((a_train.len(), a_test.len()), (4000, 1000));
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
        let mut all: Vec<usize> = a_train.iter().chain(&a_test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..5000).collect::<Vec<_>>());
        let (c_train, _) = train_test_split(5000, SplitSpec { seed: 10, ..spec });
        assert_ne!(a_train, c_train);
    }

    #[test]
    fn record_jsonl_shape() {
        let r =
            RequestRecord { structured: gold(1, 7, 14, 3.0), free_text: "hi".into(), extras: vec![], arrival_s: None };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"request_id":1,"start_node":7,"destination_node":14,"payload_kg":3.0,"free_text":"hi"}"#
        );
    }

    #[test]
    fn eval_report_json_shape() {
        let r = evaluate(&[], &[]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&eval_report_json(&r)).unwrap();
        assert_eq!(v["per_field"]["destination_node"], 1.0);
        assert_eq!(v["exact_match"], 1.0);
    }

    fn arb_case() -> impl Strategy<Value = (ExtractionResult, StructuredRequest)> {
        (0u32..4, 0u32..4, 0u32..4, 0u32..4, 1u32..4, 1u32..4).prop_map(|(s, ps, d, pd, p, pp)| {
            let g = gold(0, s, d + 10, p as f64);
            let pr = pred((ps != 0).then_some(ps), (pd != 0).then_some(pd + 10), (pp != 3).then_some(pp as f64));
            (pr, g)
        })
    }

    proptest! {
        #[test]
        fn evaluate_is_permutation_invariant(cases in proptest::collection::vec(arb_case(), 0..40), seed in any::<u64>()) {
            let (preds, golds): (Vec<_>, Vec<_>) = cases.into_iter().unzip();
            let base = evaluate(&preds, &golds).unwrap();
            let mut idx: Vec<usize> = (0..preds.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let p2: Vec<_> = idx.iter().map(|&i| preds[i].clone()).collect();
            let g2: Vec<_> = idx.iter().map(|&i| golds[i].clone()).collect();
            prop_assert_eq!(evaluate(&p2, &g2).unwrap(), base.clone());
            let min_field = Field::ALL.iter().map(|&f| base.per_field.get(f)).fold(1.0, f64::min);
            prop_assert!(base.exact_match <= min_field);
            prop_assert!(base.exact_match <= base.structured_match);
        }
    }
}

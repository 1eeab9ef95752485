//! Zero-shot evaluation: prompts out, generations in, parsed and scored.
//!
//! Generations come from a [`Backend`]. Requests fan out over at most `P`
//! worker threads; results are stored by record index and everything after
//! generation runs in record-id order, so reports do not depend on `P`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::thread;
use std::time::Duration;

use medinstruct_core::genparse::{
    parse_classification_generation, parse_multilabel_generation, parse_ner_generation,
    parse_qa_generation, ParsedPrediction, Prediction,
};
use medinstruct_core::metrics::{
    entity_prf, label_accuracy, micro_f1_labels, multilabel_prf, qa_match, ChunkMode,
};
use medinstruct_core::mix::{sha256_hex, to_jsonl};
use medinstruct_core::report::{build_report, DatasetResult, EvalReport, RecordTally};
use medinstruct_core::rng::SeededRng;
use medinstruct_core::schema::{InstructionRecord, LabelScheme, Split, TaskKind};
use medinstruct_core::template::render_prompt;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::io::read_text;

/// Environment variable holding the bearer token for HTTP backends.
pub const TOKEN_ENV: &str = "MEDINSTRUCT_API_TOKEN";

/// Returned by the mock in refuse mode.
pub const REFUSAL: &str = "I'm sorry, I cannot help with that.";

/// Prepended by the chat-filler corruption.
pub const CHAT_FILLER: &str = "Sure! Here is the answer:\n";

/// Decoding parameters shared by every request of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub max_new_tokens: u32,
    pub temperature: f64,
    pub stop: Vec<String>,
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self {
            max_new_tokens: 512,
            temperature: 0.0,
            stop: vec!["###".into()],
        }
    }
}

impl DecodingParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_new_tokens == 0 {
            return Err(Error::Usage("max_new_tokens must be positive".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::Usage(
                "temperature must be a non-negative number".into(),
            ));
        }
        Ok(())
    }

    pub fn request(&self, prompt: impl Into<String>) -> GenerationRequest {
        GenerationRequest {
            prompt: prompt.into(),
            max_new_tokens: self.max_new_tokens,
            temperature: self.temperature,
            stop: self.stop.clone(),
        }
    }
}

/// The completion wire body, field for field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_new_tokens: u32,
    pub temperature: f64,
    pub stop: Vec<String>,
}

/// Cuts `text` at the first occurrence of any stop string.
pub fn apply_stop(text: &str, stop: &[String]) -> String {
    let cut = stop
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    text[..cut].to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct BackendError(pub String);

pub trait Backend: Sync {
    fn generate(
        &self,
        record: &InstructionRecord,
        request: &GenerationRequest,
    ) -> std::result::Result<String, BackendError>;

    /// Identifying configuration, folded into the report's config digest.
    fn describe(&self) -> Value;
}

impl<B: Backend + Send + ?Sized> Backend for std::sync::Arc<B> {
    fn generate(
        &self,
        record: &InstructionRecord,
        request: &GenerationRequest,
    ) -> std::result::Result<String, BackendError> {
        (**self).generate(record, request)
    }

    fn describe(&self) -> Value {
        (**self).describe()
    }
}

/// Configured backend for one run.
#[derive(Debug, Clone)]
pub enum BackendKind {
    Mock(MockMode),
    File(std::path::PathBuf),
    Http(HttpConfig),
}

impl BackendKind {
    pub fn build(self, records: &[InstructionRecord]) -> Result<Box<dyn Backend>> {
        Ok(match self {
            BackendKind::Mock(mode) => Box::new(MockBackend::new(mode)),
            BackendKind::File(path) => Box::new(FileBackend::load(&path, records)?),
            BackendKind::Http(cfg) => Box::new(HttpBackend::new(cfg)),
        })
    }
}

// ---------------------------------------------------------------- mock

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MockMode {
    Perfect,
    /// Corrupts each record with probability `p`, drawing from a stream
    /// keyed by `(seed, record id)`.
    Corrupt {
        p: f64,
        seed: u64,
    },
    Refuse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    DropLine,
    MangleLabel,
    ChatFiller,
}

/// Mock generation for `record`, with the corruption applied, if any.
pub fn mock_generate(record: &InstructionRecord, mode: MockMode) -> (String, Option<Corruption>) {
    match mode {
        MockMode::Perfect => (record.output.clone(), None),
        MockMode::Refuse => (REFUSAL.to_string(), None),
        MockMode::Corrupt { p, seed } => {
            let mut rng = SeededRng::derive(seed, record.record_id());
            if rng.unit() >= p {
                return (record.output.clone(), None);
            }
            let kind = [
                Corruption::DropLine,
                Corruption::MangleLabel,
                Corruption::ChatFiller,
            ][rng.below_usize(3)];
            (
                corrupt(&record.output, record.meta.task_kind, kind, &mut rng),
                Some(kind),
            )
        }
    }
}

fn corrupt(output: &str, task: TaskKind, kind: Corruption, rng: &mut SeededRng) -> String {
    match kind {
        Corruption::DropLine => {
            let mut lines: Vec<&str> = output.split('\n').collect();
            lines.remove(rng.below_usize(lines.len()));
            lines.join("\n")
        }
        Corruption::MangleLabel if task == TaskKind::Ner => {
            let mut lines: Vec<String> = output.split('\n').map(String::from).collect();
            let i = rng.below_usize(lines.len());
            if let Some(pos) = lines[i].rfind(": ") {
                lines[i].insert_str(pos + 2, "X-");
            }
            lines.join("\n")
        }
        Corruption::MangleLabel => "???".to_string(),
        Corruption::ChatFiller => format!("{CHAT_FILLER}{output}"),
    }
}

pub struct MockBackend {
    mode: MockMode,
    ledger: Mutex<BTreeMap<String, Corruption>>,
}

impl MockBackend {
    pub fn new(mode: MockMode) -> Self {
        Self {
            mode,
            ledger: Mutex::new(BTreeMap::new()),
        }
    }

    /// Ground truth: every corruption applied so far, by record id.
    pub fn ledger(&self) -> BTreeMap<String, Corruption> {
        self.ledger.lock().expect("ledger lock").clone()
    }
}

impl Backend for MockBackend {
    fn generate(
        &self,
        record: &InstructionRecord,
        _request: &GenerationRequest,
    ) -> std::result::Result<String, BackendError> {
        let (text, corruption) = mock_generate(record, self.mode);
        if let Some(c) = corruption {
            self.ledger
                .lock()
                .expect("ledger lock")
                .insert(record.record_id().to_string(), c);
        }
        Ok(text)
    }

    fn describe(&self) -> Value {
        match self.mode {
            MockMode::Perfect => json!({"kind": "mock", "mode": "perfect"}),
            MockMode::Refuse => json!({"kind": "mock", "mode": "refuse"}),
            MockMode::Corrupt { p, seed } => {
                json!({"kind": "mock", "mode": "corrupt", "p": p, "seed": seed})
            }
        }
    }
}

// ---------------------------------------------------------------- file

#[derive(Debug, Deserialize)]
struct PredictionLine {
    record_id: String,
    text: String,
}

/// Pre-computed generations read from JSONL `{record_id, text}` lines.
pub struct FileBackend {
    generations: BTreeMap<String, String>,
    digest: String,
}

/// Reads a prediction file and checks it covers `records` exactly once each.
pub fn file_generate(
    path: &Path,
    records: &[InstructionRecord],
) -> Result<BTreeMap<String, String>> {
    let text = read_text(path)?;
    let mut map = BTreeMap::new();
    for (i, line) in text.split('\n').enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: PredictionLine = serde_json::from_str(line)
            .map_err(|e| Error::data(path, format!("line {}: {e}", i + 1)))?;
        if map.contains_key(&p.record_id) {
            return Err(Error::data(
                path,
                format!("line {}: duplicate record_id `{}`", i + 1, p.record_id),
            ));
        }
        map.insert(p.record_id, p.text);
    }
    let wanted: BTreeSet<&str> = records.iter().map(|r| r.record_id()).collect();
    let missing: Vec<&str> = wanted
        .iter()
        .copied()
        .filter(|id| !map.contains_key(*id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::data(
            path,
            format!(
                "no prediction for {} record(s): {}",
                missing.len(),
                missing.join(", ")
            ),
        ));
    }
    let extra = map.keys().filter(|k| !wanted.contains(k.as_str())).count();
    if extra > 0 {
        log::warn!(
            "{}: ignoring {extra} prediction(s) for unknown records",
            path.display()
        );
    }
    map.retain(|k, _| wanted.contains(k.as_str()));
    Ok(map)
}

impl FileBackend {
    pub fn load(path: &Path, records: &[InstructionRecord]) -> Result<Self> {
        let generations = file_generate(path, records)?;
        let digest = sha256_hex(
            serde_json::to_string(&generations)
                .expect("map serializes")
                .as_bytes(),
        );
        Ok(Self {
            generations,
            digest,
        })
    }
}

impl Backend for FileBackend {
    fn generate(
        &self,
        record: &InstructionRecord,
        _request: &GenerationRequest,
    ) -> std::result::Result<String, BackendError> {
        self.generations
            .get(record.record_id())
            .cloned()
            .ok_or_else(|| BackendError(format!("no prediction for `{}`", record.record_id())))
    }

    fn describe(&self) -> Value {
        json!({"kind": "file", "predictions_sha256": self.digest})
    }
}

// ---------------------------------------------------------------- http

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApiStyle {
    /// `{"prompt", "max_new_tokens", "temperature", "stop"}` in, `{"text"}` out.
    #[default]
    Completion,
    /// A single user message in a `messages` array; the reply is read from
    /// `choices[0].message.content`.
    Chat,
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub endpoint: String,
    pub token: Option<String>,
    /// Total attempts per request, including the first.
    pub max_retries: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub backoff: Duration,
    pub timeout: Duration,
    pub api: ApiStyle,
    /// Sent as `model` by the chat adapter when set.
    pub model: Option<String>,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            token: None,
            max_retries: 3,
            backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
            api: ApiStyle::Completion,
            model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HttpError {
    #[error("gave up after {attempts} attempt(s): {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("response is not the expected JSON: {0}")]
    BadResponse(String),
}

enum Attempt {
    Retry(String),
    Fail(HttpError),
}

pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    fn body(&self, request: &GenerationRequest) -> Value {
        match self.config.api {
            ApiStyle::Completion => serde_json::to_value(request).expect("request serializes"),
            ApiStyle::Chat => {
                let mut body = json!({
                    "messages": [{"role": "user", "content": request.prompt}],
                    "max_tokens": request.max_new_tokens,
                    "temperature": request.temperature,
                    "stop": request.stop,
                });
                if let Some(m) = &self.config.model {
                    body["model"] = json!(m);
                }
                body
            }
        }
    }

    fn extract(&self, body: &str) -> std::result::Result<String, HttpError> {
        let v: Value =
            serde_json::from_str(body).map_err(|e| HttpError::BadResponse(e.to_string()))?;
        let text = match self.config.api {
            ApiStyle::Completion => v.get("text"),
            ApiStyle::Chat => v.pointer("/choices/0/message/content"),
        };
        text.and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| HttpError::BadResponse("missing string field".into()))
    }

    fn attempt(&self, body: &Value) -> std::result::Result<String, Attempt> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(token) = &self.config.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Err(Attempt::Retry(e.to_string())),
        };
        let status = resp.status().as_u16();
        if status >= 500 {
            return Err(Attempt::Retry(format!("HTTP status {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(Attempt::Fail(HttpError::Status(status)));
        }
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        self.extract(&text).map_err(Attempt::Fail)
    }

    /// Sends `request`, retrying transport errors and 5xx responses with
    /// exponential backoff.
    pub fn send(&self, request: &GenerationRequest) -> std::result::Result<String, HttpError> {
        let body = self.body(request);
        let attempts = self.config.max_retries.max(1);
        let mut delay = self.config.backoff;
        let mut last = String::new();
        for n in 1..=attempts {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fail(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::debug!("attempt {n}/{attempts} failed: {msg}");
                    last = msg;
                    if n < attempts {
                        thread::sleep(delay);
                        delay = delay.saturating_mul(2);
                    }
                }
            }
        }
        Err(HttpError::Exhausted { attempts, last })
    }
}

pub fn http_generate(
    request: &GenerationRequest,
    config: &HttpConfig,
) -> std::result::Result<String, HttpError> {
    HttpBackend::new(config.clone()).send(request)
}

impl Backend for HttpBackend {
    fn generate(
        &self,
        record: &InstructionRecord,
        request: &GenerationRequest,
    ) -> std::result::Result<String, BackendError> {
        self.send(request)
            .map_err(|e| BackendError(format!("record `{}`: {e}", record.record_id())))
    }

    fn describe(&self) -> Value {
        let api = match self.config.api {
            ApiStyle::Completion => "completion",
            ApiStyle::Chat => "chat",
        };
        json!({"kind": "http", "endpoint": self.config.endpoint, "api": api, "model": self.config.model})
    }
}

// ---------------------------------------------------------------- schemes

fn sorted_unique<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    items
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(String::from)
        .collect()
}

/// Recovers a label scheme per dataset from the gold outputs. Labels that
/// never occur in gold are unknown to the result; pass manifests to avoid
/// that.
pub fn infer_schemes(records: &[InstructionRecord]) -> Result<BTreeMap<String, LabelScheme>> {
    let mut by_dataset: BTreeMap<&str, (TaskKind, Vec<&InstructionRecord>)> = BTreeMap::new();
    for r in records {
        let entry = by_dataset
            .entry(&r.meta.source_dataset)
            .or_insert((r.meta.task_kind, Vec::new()));
        if entry.0 != r.meta.task_kind {
            return Err(Error::Data(format!(
                "dataset `{}` mixes {} and {} records",
                r.meta.source_dataset, entry.0, r.meta.task_kind
            )));
        }
        entry.1.push(r);
    }
    let mut out = BTreeMap::new();
    for (name, (task, recs)) in by_dataset {
        let scheme = match task {
            TaskKind::Ner => {
                let labels = recs
                    .iter()
                    .flat_map(|r| r.output.split('\n'))
                    .filter_map(|l| l.rsplit_once(": ").map(|(_, lab)| lab));
                let cats = sorted_unique(
                    labels.filter_map(|l| l.strip_prefix("B-").or_else(|| l.strip_prefix("I-"))),
                );
                LabelScheme::bio(name, task, cats)
            }
            TaskKind::Nli => Ok(LabelScheme::nli(name)),
            TaskKind::Qa => LabelScheme::flat(name, task, vec!["answer".into()]),
            TaskKind::Re => LabelScheme::flat(
                name,
                task,
                sorted_unique(recs.iter().map(|r| r.output.as_str())),
            ),
            TaskKind::DocCls => LabelScheme::flat(
                name,
                task,
                sorted_unique(recs.iter().flat_map(|r| r.output.split(", "))),
            ),
        }
        .map_err(|e| Error::Data(format!("dataset `{name}`: cannot infer label scheme: {e}")))?;
        out.insert(name.to_string(), scheme);
    }
    Ok(out)
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub system: String,
    pub parallelism: usize,
    pub decoding: DecodingParams,
    /// Include parser notes in the per-record log.
    pub verbose: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            system: "model".into(),
            parallelism: 1,
            decoding: DecodingParams::default(),
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Correct,
    Wrong,
    Failed,
}

/// One line of the per-record log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub record_id: String,
    pub prompt_sha256: String,
    pub generation: Option<String>,
    pub parsed: Option<Prediction>,
    pub malformed: bool,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub record_id: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub log: Vec<LogEntry>,
    pub failures: Vec<Failure>,
}

impl EvalOutcome {
    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(&self.report).expect("report serializes") + "\n"
    }

    pub fn log_jsonl(&self) -> String {
        self.log
            .iter()
            .map(|e| serde_json::to_string(e).expect("log entry serializes") + "\n")
            .collect()
    }
}

enum Gold {
    Labels(Vec<String>),
    Label(String),
    Set(Vec<String>),
    Text(String),
}

struct Prepared<'a> {
    record: &'a InstructionRecord,
    scheme: &'a LabelScheme,
    tokens: Vec<String>,
    gold: Gold,
    request: GenerationRequest,
}

fn prepare<'a>(
    record: &'a InstructionRecord,
    schemes: &'a BTreeMap<String, LabelScheme>,
    decoding: &DecodingParams,
) -> Result<Prepared<'a>> {
    let id = record.record_id();
    if record.meta.split == Split::Train {
        return Err(Error::Data(format!(
            "record `{id}` is from the train split"
        )));
    }
    let scheme = schemes.get(&record.meta.source_dataset).ok_or_else(|| {
        Error::Data(format!(
            "no label scheme for dataset `{}`",
            record.meta.source_dataset
        ))
    })?;
    if scheme.task_kind != record.meta.task_kind {
        return Err(Error::Data(format!(
            "record `{id}` is {} but the scheme for `{}` is {}",
            record.meta.task_kind, scheme.name, scheme.task_kind
        )));
    }
    let bad_gold = |why: &str| Error::Data(format!("record `{id}`: gold output {why}"));
    let mut tokens = Vec::new();
    let gold = match record.meta.task_kind {
        TaskKind::Ner => {
            tokens = record.input.split(' ').map(String::from).collect();
            let p = parse_ner_generation(&record.output, &tokens, scheme);
            if p.malformed {
                return Err(bad_gold(&p.notes.join("; ")));
            }
            Gold::Labels(p.labels().unwrap_or_default().to_vec())
        }
        TaskKind::Re | TaskKind::Nli => {
            if !scheme.contains(&record.output) {
                return Err(bad_gold("is not a scheme label"));
            }
            Gold::Label(record.output.clone())
        }
        TaskKind::DocCls => {
            let p = parse_multilabel_generation(&record.output, scheme);
            if p.malformed {
                return Err(bad_gold(&p.notes.join("; ")));
            }
            Gold::Set(p.labels().unwrap_or_default().to_vec())
        }
        TaskKind::Qa => Gold::Text(record.output.clone()),
    };
    Ok(Prepared {
        record,
        scheme,
        tokens,
        gold,
        request: decoding.request(render_prompt(record, false)),
    })
}

fn parse_generation(p: &Prepared<'_>, generation: &str) -> ParsedPrediction {
    let parsed = match p.record.meta.task_kind {
        TaskKind::Ner => parse_ner_generation(generation, &p.tokens, p.scheme),
        TaskKind::Re | TaskKind::Nli => parse_classification_generation(generation, p.scheme),
        TaskKind::DocCls => parse_multilabel_generation(generation, p.scheme),
        TaskKind::Qa => parse_qa_generation(generation),
    };
    parsed.with_record_id(p.record.record_id())
}

fn is_correct(gold: &Gold, parsed: &ParsedPrediction) -> bool {
    match (gold, &parsed.prediction) {
        (Gold::Labels(g), Prediction::Labels(p)) => g == p,
        (Gold::Label(g), Prediction::Label(p)) => g == p,
        (Gold::Set(g), Prediction::LabelSet(p)) => {
            g.iter().collect::<BTreeSet<_>>() == p.iter().collect::<BTreeSet<_>>()
        }
        (Gold::Text(g), Prediction::Text(p)) => qa_match(g, p).0,
        _ => false,
    }
}

fn generate_all(
    prepared: &[Prepared<'_>],
    backend: &dyn Backend,
    parallelism: usize,
) -> Vec<std::result::Result<String, BackendError>> {
    let slots: Vec<OnceLock<std::result::Result<String, BackendError>>> =
        prepared.iter().map(|_| OnceLock::new()).collect();
    let next = AtomicUsize::new(0);
    let workers = parallelism.max(1).min(prepared.len().max(1));
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(p) = prepared.get(i) else { break };
                let result = backend.generate(p.record, &p.request);
                let _ = slots[i].set(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("every slot filled"))
        .collect()
}

fn score_dataset(
    task: TaskKind,
    scheme: &LabelScheme,
    scored: &[(&Gold, &ParsedPrediction)],
) -> Vec<(String, f64)> {
    let m = |name: &str, v: f64| (name.to_string(), v);
    match task {
        TaskKind::Ner => {
            let (g, p): (Vec<&[String]>, Vec<&[String]>) = scored
                .iter()
                .map(|(g, p)| match g {
                    Gold::Labels(g) => (g.as_slice(), p.labels().unwrap_or_default()),
                    _ => unreachable!("NER gold is a label sequence"),
                })
                .unzip();
            let r = entity_prf(&g, &p, ChunkMode::Lenient).expect("parser keeps lengths aligned");
            vec![
                m("entity_f1", r.f1),
                m("entity_precision", r.precision),
                m("entity_recall", r.recall),
            ]
        }
        TaskKind::Re | TaskKind::Nli => {
            let (g, p): (Vec<&str>, Vec<&str>) = scored
                .iter()
                .map(|(g, p)| match g {
                    Gold::Label(g) => (g.as_str(), p.label().unwrap_or_default()),
                    _ => unreachable!("classification gold is a label"),
                })
                .unzip();
            let acc = label_accuracy(&g, &p).expect("aligned");
            let f1 = micro_f1_labels(&g, &p, scheme).expect("flat scheme").f1;
            if task == TaskKind::Nli {
                vec![m("accuracy", acc), m("micro_f1", f1)]
            } else {
                vec![m("micro_f1", f1), m("accuracy", acc)]
            }
        }
        TaskKind::DocCls => {
            let (g, p): (Vec<&[String]>, Vec<&[String]>) = scored
                .iter()
                .map(|(g, p)| match g {
                    Gold::Set(g) => (g.as_slice(), p.labels().unwrap_or_default()),
                    _ => unreachable!("document gold is a label set"),
                })
                .unzip();
            let r = multilabel_prf(&g, &p).expect("aligned");
            vec![
                m("micro_f1", r.f1),
                m("precision", r.precision),
                m("recall", r.recall),
            ]
        }
        TaskKind::Qa => {
            let n = scored.len() as f64;
            let (mut exact, mut contained) = (0usize, 0usize);
            for (g, p) in scored {
                if let (Gold::Text(g), Prediction::Text(p)) = (g, &p.prediction) {
                    let (e, c) = qa_match(g, p);
                    exact += e as usize;
                    contained += c as usize;
                }
            }
            let frac = |k: usize| if n == 0.0 { 0.0 } else { k as f64 / n };
            vec![
                m("exact_match", frac(exact)),
                m("containment", frac(contained)),
            ]
        }
    }
}

/// Evaluates `records` against `backend`.
///
/// Backend failures do not abort the run: failed records are excluded from
/// scoring, logged with status `failed` and listed in `failures`.
pub fn run_eval(
    records: &[InstructionRecord],
    schemes: &BTreeMap<String, LabelScheme>,
    backend: &dyn Backend,
    options: &EvalOptions,
) -> Result<EvalOutcome> {
    if options.parallelism == 0 {
        return Err(Error::Usage("parallelism must be at least 1".into()));
    }
    options.decoding.validate()?;
    let mut sorted: Vec<&InstructionRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.record_id().cmp(b.record_id()));
    if let Some(w) = sorted
        .windows(2)
        .find(|w| w[0].record_id() == w[1].record_id())
    {
        return Err(Error::Data(format!(
            "duplicate record id `{}`",
            w[0].record_id()
        )));
    }
    let prepared: Vec<Prepared<'_>> = sorted
        .iter()
        .map(|r| prepare(r, schemes, &options.decoding))
        .collect::<Result<_>>()?;

    let generations = generate_all(&prepared, backend, options.parallelism);

    let mut log = Vec::with_capacity(prepared.len());
    let mut failures = Vec::new();
    let mut tally = RecordTally::default();
    let mut per_dataset: BTreeMap<&str, Vec<(&Gold, ParsedPrediction)>> = BTreeMap::new();
    for (p, result) in prepared.iter().zip(generations) {
        tally.records += 1;
        let prompt_sha256 = sha256_hex(p.request.prompt.as_bytes());
        let id = p.record.record_id().to_string();
        let generation = match result {
            Ok(g) => apply_stop(&g, &options.decoding.stop),
            Err(e) => {
                tally.failed += 1;
                failures.push(Failure {
                    record_id: id.clone(),
                    error: e.0.clone(),
                });
                log.push(LogEntry {
                    record_id: id,
                    prompt_sha256,
                    generation: None,
                    parsed: None,
                    malformed: false,
                    status: RecordStatus::Failed,
                    notes: None,
                    error: Some(e.0),
                });
                continue;
            }
        };
        let parsed = parse_generation(p, &generation);
        let correct = is_correct(&p.gold, &parsed);
        if correct {
            tally.correct += 1;
        } else {
            tally.wrong += 1;
        }
        tally.malformed += parsed.malformed as u64;
        log.push(LogEntry {
            record_id: id,
            prompt_sha256,
            generation: Some(generation),
            parsed: Some(parsed.prediction.clone()),
            malformed: parsed.malformed,
            status: if correct {
                RecordStatus::Correct
            } else {
                RecordStatus::Wrong
            },
            notes: (options.verbose && !parsed.notes.is_empty()).then(|| parsed.notes.clone()),
            error: None,
        });
        per_dataset
            .entry(&p.record.meta.source_dataset)
            .or_default()
            .push((&p.gold, parsed));
    }

    // Datasets whose every record failed still get a row, scored over nothing.
    for p in &prepared {
        per_dataset
            .entry(&p.record.meta.source_dataset)
            .or_default();
    }
    let results: Vec<DatasetResult> = per_dataset
        .into_iter()
        .map(|(name, items)| {
            let scheme = &schemes[name];
            let pairs: Vec<(&Gold, &ParsedPrediction)> =
                items.iter().map(|(g, p)| (*g, p)).collect();
            DatasetResult {
                dataset: name.to_string(),
                task: scheme.task_kind,
                metrics: score_dataset(scheme.task_kind, scheme, &pairs),
                n: items.len() as u64,
                malformed: items.iter().filter(|(_, p)| p.malformed).count() as u64,
            }
        })
        .collect();

    let owned: Vec<InstructionRecord> = sorted.iter().map(|r| (*r).clone()).collect();
    let config = json!({
        "system": options.system,
        "backend": backend.describe(),
        "decoding": options.decoding,
        "records_sha256": sha256_hex(to_jsonl(&owned).as_bytes()),
    });
    let digest = sha256_hex(config.to_string().as_bytes());
    Ok(EvalOutcome {
        report: build_report(&options.system, &results, tally, &digest),
        log,
        failures,
    })
}

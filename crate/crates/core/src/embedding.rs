//! Expression embeddings and cosine similarity.
//!
//! The builtin provider hashes character 3-grams of the text (FNV-1a over
//! the UTF-8 bytes of each gram, modulo the dimension) into a term-frequency
//! vector and L2-normalizes it. Texts shorter than three characters hash as a
//! single gram. Only the empty text maps to the zero vector.
//!
//! External providers speak a JSON protocol: request `{"texts": [...]}`,
//! response `{"dim": D, "vectors": [[...], ...]}`. It is carried either by
//! HTTP `POST <endpoint>/embed` or as one JSON object per line over the
//! standard streams of a child process (`exec:<command> [args...]`).

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sum::CompensatedSum;

pub const DEFAULT_DIM: usize = 768;
pub const DEFAULT_BATCH_SIZE: usize = 64;
const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embedding provider unreachable at {endpoint}: {message}")]
    Unreachable { endpoint: String, message: String },
    #[error("embedding provider protocol violation: {0}")]
    Protocol(String),
    #[error("invalid embedding provider config: {0}")]
    Config(String),
}

/// A dense vector with finite components.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(components: Vec<f64>) -> Self {
        debug_assert!(components.iter().all(|x| x.is_finite()));
        Self(components)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .map(|x| x * x)
            .collect::<CompensatedSum>()
            .value()
            .sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|x| x * factor).collect())
    }
}

/// Cosine similarity, clamped to [-1, 1]. Zero when either side has zero norm.
pub fn cosine(a: &Vector, b: &Vector) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(cosine_with_norms(a, a.norm(), b, b.norm()))
}

/// Cosine given precomputed norms. Callers guarantee equal dimensions.
pub fn cosine_with_norms(a: &Vector, norm_a: f64, b: &Vector, norm_b: f64) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    if norm_a == 0.0 || norm_b == 0.0 {
        return 0.0;
    }
    let dot =
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| x * y)
            .collect::<CompensatedSum>()
            .value();
    (dot / (norm_a * norm_b)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Builtin,
    External,
}

impl std::str::FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "builtin" | "builtin-deterministic" => Ok(Self::Builtin),
            "external" => Ok(Self::External),
            other => Err(format!(
                "unknown provider `{other}` (expected builtin or external)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub dim: usize,
    pub batch_size: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Builtin,
            endpoint: None,
            dim: DEFAULT_DIM,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.dim == 0 {
            return Err(EmbeddingError::Config("dim must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(EmbeddingError::Config("batch size must be positive".into()));
        }
        match (self.kind, self.endpoint.as_deref()) {
            (ProviderKind::External, None | Some("")) => Err(EmbeddingError::Config(
                "external provider requires an endpoint".into(),
            )),
            (ProviderKind::Builtin, Some(_)) => Err(EmbeddingError::Config(
                "endpoint is only valid for the external provider".into(),
            )),
            _ => Ok(()),
        }
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    /// One vector per text, in input order.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vector>, EmbeddingError>;
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuiltinProvider {
    dim: usize,
}

impl BuiltinProvider {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { dim }
    }

    pub fn embed_one(&self, text: &str) -> Vector {
        let mut counts = vec![0.0f64; self.dim];
        let bounds: Vec<usize> = text
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(text.len()))
            .collect();
        let chars = bounds.len() - 1;
        if chars == 0 {
            return Vector::zeros(self.dim);
        }
        if chars < 3 {
            counts[(fnv1a64(text.as_bytes()) % self.dim as u64) as usize] += 1.0;
        } else {
            for w in bounds.windows(4) {
                let gram = &text.as_bytes()[w[0]..w[3]];
                counts[(fnv1a64(gram) % self.dim as u64) as usize] += 1.0;
            }
        }
        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        Vector::new(counts.into_iter().map(|c| c / norm).collect())
    }
}

impl Default for BuiltinProvider {
    fn default() -> Self {
        Self::new(DEFAULT_DIM)
    }
}

impl EmbeddingProvider for BuiltinProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vector>, EmbeddingError> {
        Ok(texts.par_iter().map(|t| self.embed_one(t)).collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

fn decode_response(
    body: &str,
    expected_dim: usize,
    expected_count: usize,
) -> Result<Vec<Vector>, EmbeddingError> {
    let resp: EmbedResponse = serde_json::from_str(body)
        .map_err(|e| EmbeddingError::Protocol(format!("malformed response: {e}")))?;
    if resp.dim != expected_dim {
        return Err(EmbeddingError::DimensionMismatch {
            expected: expected_dim,
            found: resp.dim,
        });
    }
    if resp.vectors.len() != expected_count {
        return Err(EmbeddingError::Protocol(format!(
            "expected {expected_count} vectors, got {}",
            resp.vectors.len()
        )));
    }
    resp.vectors
        .into_iter()
        .map(|v| {
            if v.len() != expected_dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: expected_dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EmbeddingError::Protocol(
                    "non-finite vector component".into(),
                ));
            }
            let v = Vector::new(v);
            let norm = v.norm();
            if norm != 0.0 && (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(EmbeddingError::Protocol(format!(
                    "vector is not L2-normalized (norm {norm})"
                )));
            }
            Ok(v)
        })
        .collect()
}

/// HTTP transport: `POST {base}/embed`.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    url: String,
    dim: usize,
    batch_size: usize,
}

impl HttpProvider {
    pub fn new(base: &str, dim: usize, batch_size: usize) -> Self {
        let base = base.trim_end_matches('/');
        let url = if base.ends_with("/embed") {
            base.to_string()
        } else {
            format!("{base}/embed")
        };
        Self {
            url,
            dim,
            batch_size,
        }
    }

    fn post(&self, texts: &[String]) -> Result<Vec<Vector>, EmbeddingError> {
        let body = serde_json::to_string(&EmbedRequest { texts }).expect("request serializes");
        let result = ureq::post(&self.url)
            .header("Content-Type", "application/json")
            .send(body.as_str());
        let mut resp = match result {
            Ok(r) => r,
            Err(ureq::Error::StatusCode(code)) => {
                return Err(EmbeddingError::Protocol(format!("HTTP status {code}")))
            }
            Err(e) => {
                return Err(EmbeddingError::Unreachable {
                    endpoint: self.url.clone(),
                    message: e.to_string(),
                })
            }
        };
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| EmbeddingError::Protocol(format!("unreadable response body: {e}")))?;
        decode_response(&text, self.dim, texts.len())
    }
}

impl EmbeddingProvider for HttpProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vector>, EmbeddingError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            out.extend(self.post(chunk)?);
        }
        Ok(out)
    }
}

/// Newline-delimited JSON over a child process's stdin/stdout.
#[derive(Debug, Clone)]
pub struct StdioProvider {
    program: String,
    args: Vec<String>,
    dim: usize,
    batch_size: usize,
}

impl StdioProvider {
    pub fn new(command_line: &str, dim: usize, batch_size: usize) -> Result<Self, EmbeddingError> {
        let mut words = command_line.split_whitespace().map(str::to_string);
        let program = words
            .next()
            .ok_or_else(|| EmbeddingError::Config("empty exec: command".into()))?;
        Ok(Self {
            program,
            args: words.collect(),
            dim,
            batch_size,
        })
    }
}

impl EmbeddingProvider for StdioProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vector>, EmbeddingError> {
        let unreachable = |message: String| EmbeddingError::Unreachable {
            endpoint: format!("exec:{}", self.program),
            message,
        };
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| unreachable(e.to_string()))?;
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let mut stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        let mut out = Vec::with_capacity(texts.len());
        let mut line = String::new();
        for chunk in texts.chunks(self.batch_size) {
            let request =
                serde_json::to_string(&EmbedRequest { texts: chunk }).expect("request serializes");
            writeln!(stdin, "{request}")
                .and_then(|_| stdin.flush())
                .map_err(|e| unreachable(e.to_string()))?;
            line.clear();
            let n = stdout
                .read_line(&mut line)
                .map_err(|e| EmbeddingError::Protocol(e.to_string()))?;
            if n == 0 {
                let _ = child.kill();
                return Err(EmbeddingError::Protocol(
                    "provider closed its output".into(),
                ));
            }
            out.extend(decode_response(&line, self.dim, chunk.len())?);
        }
        drop(stdin);
        let _ = child.wait();
        Ok(out)
    }
}

pub fn provider_from_config(
    config: &ProviderConfig,
) -> Result<Box<dyn EmbeddingProvider>, EmbeddingError> {
    config.validate()?;
    Ok(match config.kind {
        ProviderKind::Builtin => Box::new(BuiltinProvider::new(config.dim)),
        ProviderKind::External => {
            let endpoint = config.endpoint.as_deref().unwrap_or_default();
            match endpoint.strip_prefix("exec:") {
                Some(cmd) => Box::new(StdioProvider::new(cmd, config.dim, config.batch_size)?),
                None => Box::new(HttpProvider::new(endpoint, config.dim, config.batch_size)),
            }
        }
    })
}

/// Embed `texts` through `provider`, sending each distinct text once.
pub fn embed_batch(
    texts: &[String],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Vector>, EmbeddingError> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut unique: Vec<String> = Vec::new();
    let slots: Vec<usize> = texts
        .iter()
        .map(|t| {
            *index.entry(t.as_str()).or_insert_with(|| {
                unique.push(t.clone());
                unique.len() - 1
            })
        })
        .collect();
    let vectors = provider.embed(&unique)?;
    if vectors.len() != unique.len() {
        return Err(EmbeddingError::Protocol(format!(
            "expected {} vectors, got {}",
            unique.len(),
            vectors.len()
        )));
    }
    for v in &vectors {
        if v.dim() != provider.dim() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: provider.dim(),
                found: v.dim(),
            });
        }
    }
    Ok(slots.into_iter().map(|i| vectors[i].clone()).collect())
}

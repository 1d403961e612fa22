//! Semantic providers backed by files and external processes.
//!
//! * Fixture files: JSON-lines of `{"sample_id": ..., "vector": [...]}`,
//!   loaded into the core fixture provider.
//! * Subprocess protocol: one JSON request per line on the child's stdin, one
//!   JSON response per line on its stdout. A request carries the sample id,
//!   the rendered prompt, the category list, the compressed tokens, and the
//!   expected output dimension; the response is either `{"vector": [...]}`
//!   or `{"error": "..."}`. A response that does not arrive within the
//!   timeout is a provider error.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use vad_core::compression::CompressionResult;
use vad_core::semantic::{FixtureProvider, PromptSpec, SemanticProvider};
use vad_core::CoreError;

use crate::error::{PipelineError, Result};

#[derive(Debug, Deserialize)]
struct FixtureLine {
    sample_id: String,
    vector: Vec<f64>,
}

/// Loads a fixture provider from a JSON-lines file.
pub fn load_fixture(path: &Path, dim: usize) -> Result<FixtureProvider> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::provider(format!("{}: {e}", path.display())))?;
    let mut provider = FixtureProvider::new(dim);
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: FixtureLine = serde_json::from_str(line).map_err(|e| {
            PipelineError::provider(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        provider
            .insert(entry.sample_id, entry.vector)
            .map_err(|e| {
                PipelineError::provider(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
    }
    Ok(provider)
}

/// One request line sent to a subprocess provider.
#[derive(Debug, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub sample_id: String,
    pub prompt: String,
    pub categories: Vec<String>,
    pub token_rows: usize,
    pub token_cols: usize,
    pub tokens: Vec<f64>,
    pub dim: usize,
}

/// One response line from a subprocess provider.
#[derive(Debug, Serialize, Deserialize, Default)]
pub struct ProviderResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug)]
struct SubprocessInner {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

/// Provider speaking the JSON line protocol with a spawned child process.
///
/// Requests are serialized through a mutex, matching one in-flight request
/// per worker process.
#[derive(Debug)]
pub struct SubprocessProvider {
    inner: Mutex<SubprocessInner>,
    dim: usize,
    timeout: Duration,
}

impl SubprocessProvider {
    pub fn spawn(cmd: &[String], dim: usize, timeout: Duration) -> Result<Self> {
        let (program, args) = cmd
            .split_first()
            .ok_or_else(|| PipelineError::provider("empty provider command"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| PipelineError::provider(format!("failed to spawn {program:?}: {e}")))?;
        let stdin = child
            .stdin
            .take()
            .ok_or_else(|| PipelineError::provider("child stdin unavailable"))?;
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| PipelineError::provider("child stdout unavailable"))?;
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(SubprocessProvider {
            inner: Mutex::new(SubprocessInner {
                child,
                stdin,
                lines: rx,
            }),
            dim,
            timeout,
        })
    }
}

impl Drop for SubprocessProvider {
    fn drop(&mut self) {
        if let Ok(mut inner) = self.inner.lock() {
            let _ = inner.child.kill();
            let _ = inner.child.wait();
        }
    }
}

impl SemanticProvider for SubprocessProvider {
    fn id(&self) -> &str {
        "subprocess-v1"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn extract(
        &self,
        sample_id: &str,
        visual: &CompressionResult,
        prompt: &PromptSpec,
    ) -> vad_core::Result<Vec<f64>> {
        let provider_err = |msg: String| CoreError::Provider(msg);
        let request = ProviderRequest {
            sample_id: sample_id.to_string(),
            prompt: prompt.rendered.clone(),
            categories: prompt.categories.clone(),
            token_rows: visual.compressed.rows(),
            token_cols: visual.compressed.cols(),
            tokens: visual.compressed.data().to_vec(),
            dim: self.dim,
        };
        let line = serde_json::to_string(&request)
            .map_err(|e| provider_err(format!("request encoding failed: {e}")))?;
        let mut inner = self
            .inner
            .lock()
            .map_err(|_| provider_err("provider mutex poisoned".into()))?;
        inner
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| inner.stdin.write_all(b"\n"))
            .and_then(|_| inner.stdin.flush())
            .map_err(|e| provider_err(format!("writing to provider failed: {e}")))?;
        let response_line = inner
            .lines
            .recv_timeout(self.timeout)
            .map_err(|_| provider_err("provider timed out".into()))?
            .map_err(|e| provider_err(format!("reading from provider failed: {e}")))?;
        let response: ProviderResponse = serde_json::from_str(&response_line)
            .map_err(|e| provider_err(format!("malformed provider response: {e}")))?;
        if let Some(msg) = response.error {
            return Err(provider_err(format!("provider reported: {msg}")));
        }
        response
            .vector
            .ok_or_else(|| provider_err("provider response had neither vector nor error".into()))
    }
}

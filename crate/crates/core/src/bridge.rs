//! Batch prediction through an external process or HTTP endpoint.
//!
//! Each request is one line of JSON:
//!
//! ```text
//! {"id": 0, "columns": ["x1", "x2"], "rows": [[0.1, 0.2], [0.3, 0.4]]}
//! ```
//!
//! and each response echoes the id:
//!
//! ```text
//! {"id": 0, "predictions": [0.14, 0.46]}
//! ```
//!
//! Over a pipe, requests go to the child's stdin and responses are read from
//! its stdout, one in flight at a time. Over HTTP, each request is the body of
//! a POST and the response body carries the reply; up to `max_in_flight`
//! requests run concurrently and results are reassembled by id.

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::Predictor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub id: u64,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub id: u64,
    /// `null` marks a value the model could not represent as a finite number.
    pub predictions: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transport {
    Subprocess { program: String, args: Vec<String> },
    Http { url: String, header: Option<(String, String)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeConfig {
    pub transport: Transport,
    pub batch_size: usize,
    pub timeout: Duration,
    /// Concurrent requests for HTTP; pipes always use one.
    pub max_in_flight: usize,
}

impl BridgeConfig {
    pub fn subprocess(program: impl Into<String>, args: Vec<String>) -> Self {
        BridgeConfig {
            transport: Transport::Subprocess { program: program.into(), args },
            batch_size: 4096,
            timeout: Duration::from_secs(60),
            max_in_flight: 1,
        }
    }

    pub fn http(url: impl Into<String>) -> Self {
        BridgeConfig {
            transport: Transport::Http { url: url.into(), header: None },
            batch_size: 4096,
            timeout: Duration::from_secs(60),
            max_in_flight: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.timeout.is_zero() {
            return Err(Error::Config("timeout must be positive".into()));
        }
        if self.max_in_flight < 1 {
            return Err(Error::Config("max in-flight requests must be at least 1".into()));
        }
        if let Transport::Subprocess { program, .. } = &self.transport {
            if program.is_empty() {
                return Err(Error::Config("empty command".into()));
            }
        }
        Ok(())
    }
}

struct Piped {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    stderr: Arc<Mutex<String>>,
}

impl Piped {
    fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Subprocess { status: format!("failed to start {program:?}"), stderr: e.to_string() })?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = child.stdout.take().expect("stdout piped");
        let mut err_pipe = child.stderr.take().expect("stderr piped");

        let (tx, lines) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        std::thread::spawn(move || {
            let mut buf = [0u8; 4096];
            while let Ok(k) = err_pipe.read(&mut buf) {
                if k == 0 {
                    break;
                }
                sink.lock().unwrap().push_str(&String::from_utf8_lossy(&buf[..k]));
            }
        });
        Ok(Piped { child, stdin, lines, stderr })
    }

    /// Error describing how the child went away.
    fn exit_error(&mut self) -> Error {
        let status = match self.child.wait_timeout_ms(2000) {
            Some(s) => s.to_string(),
            None => "still running".into(),
        };
        // give the stderr reader a moment to drain
        std::thread::sleep(Duration::from_millis(20));
        let stderr = self.stderr.lock().unwrap().trim().to_owned();
        Error::Subprocess { status, stderr }
    }
}

trait WaitTimeout {
    fn wait_timeout_ms(&mut self, ms: u64) -> Option<std::process::ExitStatus>;
}

impl WaitTimeout for Child {
    fn wait_timeout_ms(&mut self, ms: u64) -> Option<std::process::ExitStatus> {
        let step = 10;
        for _ in 0..(ms / step).max(1) {
            if let Ok(Some(s)) = self.try_wait() {
                return Some(s);
            }
            std::thread::sleep(Duration::from_millis(step));
        }
        None
    }
}

impl Drop for Piped {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A model reached through [`BridgeConfig`].
pub struct ExternalModel {
    cfg: BridgeConfig,
    columns: Option<Vec<String>>,
    next_id: AtomicU64,
    piped: Mutex<Option<Piped>>,
    agent: Option<ureq::Agent>,
}

impl ExternalModel {
    pub fn new(cfg: BridgeConfig) -> Result<Self> {
        cfg.validate()?;
        let agent = match cfg.transport {
            Transport::Http { .. } => {
                let config =
                    ureq::Agent::config_builder().timeout_global(Some(cfg.timeout)).http_status_as_error(false).build();
                Some(config.into())
            }
            Transport::Subprocess { .. } => None,
        };
        Ok(ExternalModel { cfg, columns: None, next_id: AtomicU64::new(0), piped: Mutex::new(None), agent })
    }

    /// Column names sent with every request; defaults to `x1..xd`.
    pub fn with_columns(mut self, columns: Vec<String>) -> Self {
        self.columns = Some(columns);
        self
    }

    pub fn config(&self) -> &BridgeConfig {
        &self.cfg
    }

    fn columns_for(&self, d: usize) -> Result<Vec<String>> {
        match &self.columns {
            Some(c) if c.len() == d => Ok(c.clone()),
            Some(c) => Err(Error::Config(format!("{} column names for {d}-column rows", c.len()))),
            None => Ok((1..=d).map(|j| format!("x{j}")).collect()),
        }
    }

    fn request(&self, id: u64, columns: &[String], rows: ArrayView2<'_, f64>) -> PredictRequest {
        PredictRequest { id, columns: columns.to_vec(), rows: rows.rows().into_iter().map(|r| r.to_vec()).collect() }
    }

    fn predict_piped(&self, program: &str, args: &[String], rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let columns = self.columns_for(rows.ncols())?;
        let mut guard = self.piped.lock().unwrap();
        let mut out = Vec::with_capacity(rows.nrows());
        for start in (0..rows.nrows()).step_by(self.cfg.batch_size) {
            let end = (start + self.cfg.batch_size).min(rows.nrows());
            let id = self.next_id.fetch_add(1, Ordering::SeqCst);
            if guard.is_none() {
                *guard = Some(Piped::spawn(program, args)?);
            }
            let p = guard.as_mut().unwrap();
            let mut line = serde_json::to_string(&self.request(id, &columns, rows.slice(ndarray::s![start..end, ..])))
                .map_err(|e| Error::Protocol(e.to_string()))?;
            line.push('\n');
            if p.stdin.write_all(line.as_bytes()).and_then(|_| p.stdin.flush()).is_err() {
                let e = p.exit_error();
                *guard = None;
                return Err(e);
            }
            let reply = match p.lines.recv_timeout(self.cfg.timeout) {
                Ok(Ok(l)) => l,
                Ok(Err(e)) => {
                    *guard = None;
                    return Err(Error::Protocol(format!("reading response {id}: {e}")));
                }
                Err(RecvTimeoutError::Timeout) => {
                    *guard = None;
                    return Err(Error::Timeout { id, seconds: self.cfg.timeout.as_secs_f64() });
                }
                Err(RecvTimeoutError::Disconnected) => {
                    let e = p.exit_error();
                    *guard = None;
                    return Err(e);
                }
            };
            out.extend(decode_response(&reply, id, end - start, start)?);
        }
        Ok(out)
    }

    fn predict_http(
        &self,
        url: &str,
        header: Option<&(String, String)>,
        rows: ArrayView2<'_, f64>,
    ) -> Result<Vec<f64>> {
        let columns = self.columns_for(rows.ncols())?;
        let m = rows.nrows();
        let chunks: Vec<(usize, usize)> =
            (0..m).step_by(self.cfg.batch_size).map(|s| (s, (s + self.cfg.batch_size).min(m))).collect();
        let first_id = self.next_id.fetch_add(chunks.len() as u64, Ordering::SeqCst);
        let agent = self.agent.as_ref().expect("http transport has an agent");
        let results: Mutex<Vec<Option<Result<Vec<f64>>>>> = Mutex::new((0..chunks.len()).map(|_| None).collect());
        let cursor = AtomicUsize::new(0);
        let workers = self.cfg.max_in_flight.min(chunks.len());

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let c = cursor.fetch_add(1, Ordering::SeqCst);
                    if c >= chunks.len() {
                        break;
                    }
                    let (start, end) = chunks[c];
                    let id = first_id + c as u64;
                    let req = self.request(id, &columns, rows.slice(ndarray::s![start..end, ..]));
                    let res = post_once(agent, url, header, &req, self.cfg.timeout)
                        .and_then(|body| decode_response(&body, id, end - start, start));
                    results.lock().unwrap()[c] = Some(res);
                });
            }
        });

        let mut out = Vec::with_capacity(m);
        for r in results.into_inner().unwrap() {
            out.extend(r.expect("every chunk is processed")?);
        }
        Ok(out)
    }
}

fn post_once(
    agent: &ureq::Agent,
    url: &str,
    header: Option<&(String, String)>,
    req: &PredictRequest,
    timeout: Duration,
) -> Result<String> {
    let id = req.id;
    let body = serde_json::to_string(req).map_err(|e| Error::Protocol(e.to_string()))?;
    let mut call = agent.post(url).header("Content-Type", "application/json");
    if let Some((k, v)) = header {
        call = call.header(k.as_str(), v.as_str());
    }
    let mut resp = call.send(body).map_err(|e| match e {
        ureq::Error::Timeout(_) => Error::Timeout { id, seconds: timeout.as_secs_f64() },
        other => Error::Http { id, message: other.to_string() },
    })?;
    let status = resp.status();
    let text = resp.body_mut().read_to_string().map_err(|e| match e {
        ureq::Error::Timeout(_) => Error::Timeout { id, seconds: timeout.as_secs_f64() },
        other => Error::Http { id, message: other.to_string() },
    })?;
    if !status.is_success() {
        return Err(Error::Http { id, message: format!("status {status}: {}", text.trim()) });
    }
    Ok(text)
}

/// Parses and checks one response line. `first_row` offsets row numbers in
/// error messages to the caller's matrix.
pub fn decode_response(line: &str, id: u64, expected: usize, first_row: usize) -> Result<Vec<f64>> {
    let resp: PredictResponse = serde_json::from_str(line.trim())
        .map_err(|e| Error::Protocol(format!("malformed response to request {id}: {e}")))?;
    if resp.id != id {
        return Err(Error::Protocol(format!("expected response id {id}, got {}", resp.id)));
    }
    if resp.predictions.len() != expected {
        return Err(Error::Protocol(format!(
            "request {id} sent {expected} rows but received {} predictions",
            resp.predictions.len()
        )));
    }
    resp.predictions
        .into_iter()
        .enumerate()
        .map(|(i, p)| match p {
            Some(v) if v.is_finite() => Ok(v),
            _ => Err(Error::Predict { row: first_row + i, message: "non-finite prediction".into() }),
        })
        .collect()
}

/// Sends `rows` through the configured transport.
pub fn external_predict(model: &ExternalModel, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    model.predict(rows)
}

impl Predictor for ExternalModel {
    fn predict(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if rows.nrows() == 0 {
            return Ok(Vec::new());
        }
        match &self.cfg.transport {
            Transport::Subprocess { program, args } => self.predict_piped(program, args, rows),
            Transport::Http { url, header } => self.predict_http(url, header.as_ref(), rows),
        }
    }

    fn label(&self) -> String {
        match &self.cfg.transport {
            Transport::Subprocess { program, args } => {
                format!("bridge:{} {}", program, args.join(" ")).trim_end().to_owned()
            }
            Transport::Http { url, .. } => format!("bridge:{url}"),
        }
    }
}

/// Answers one request line with `model`.
pub fn answer<P: Predictor + ?Sized>(model: &P, line: &str) -> Result<String> {
    let req: PredictRequest =
        serde_json::from_str(line.trim()).map_err(|e| Error::Protocol(format!("malformed request: {e}")))?;
    let d = req.rows.first().map_or(req.columns.len(), Vec::len);
    if req.rows.iter().any(|r| r.len() != d) {
        return Err(Error::Protocol(format!("request {} has ragged rows", req.id)));
    }
    let flat: Vec<f64> = req.rows.iter().flatten().copied().collect();
    let rows = Array2::from_shape_vec((req.rows.len(), d), flat).expect("widths checked");
    let predictions = if rows.nrows() == 0 { Vec::new() } else { model.predict(rows.view())? };
    let resp = PredictResponse { id: req.id, predictions: predictions.into_iter().map(Some).collect() };
    serde_json::to_string(&resp).map_err(|e| Error::Protocol(e.to_string()))
}

/// Serves the line protocol until `input` closes.
pub fn serve_lines<P, R, W>(model: &P, input: R, mut output: W) -> Result<()>
where
    P: Predictor + ?Sized,
    R: BufRead,
    W: Write,
{
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = answer(model, &line)?;
        output.write_all(reply.as_bytes())?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

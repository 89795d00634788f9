//! Wire protocol to out-of-process evaluators.
//!
//! One JSON object per line, newline-terminated, no intra-object
//! newlines. Requests carry the id, the canonical genome, and the macro
//! settings; responses are matched back by id and may arrive in any
//! order:
//!
//! ```text
//! -> {"id":7,"genome":{"normal":{...},"reduction":{...}},"macro":{"template":"cifar10","n":2,"f":32,"resolution":32,"classes":10}}
//! <- {"id":7,"objectives":[0.91],"error":null}
//! <- {"id":8,"objectives":null,"error":"trainer crashed"}
//! ```
//!
//! The default transport spawns a child process and speaks over its
//! standard streams; a `host:port` transport connects a TCP stream
//! instead. At most `parallelism` requests are in flight at once; a
//! request that is not answered within the timeout is re-sent up to the
//! retry limit and then reported as a per-request error. Unparseable
//! lines and unknown ids are logged and skipped, never fatal.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::dispatch::DispatchError;
use crate::genome::Genome;
use crate::network::MacroConfig;

/// One architecture to evaluate externally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRequest {
    pub id: u64,
    pub genome: Genome,
    #[serde(rename = "macro")]
    pub macro_config: MacroConfig,
}

/// The evaluator's answer for one request: the external objective
/// values in declared order, or an error message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResponse {
    pub id: u64,
    pub objectives: Option<Vec<f64>>,
    pub error: Option<String>,
}

impl EvaluationResponse {
    pub fn failure(id: u64, message: impl Into<String>) -> Self {
        EvaluationResponse {
            id,
            objectives: None,
            error: Some(message.into()),
        }
    }
}

/// How to reach an external evaluator, from the search config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatorSettings {
    /// Command line to spawn (argv form); the child speaks the protocol
    /// on its standard streams.
    #[serde(default)]
    pub command: Option<Vec<String>>,
    /// `host:port` of a listening evaluator to connect to instead.
    #[serde(default)]
    pub connect: Option<String>,
    /// Per-request timeout before a retry.
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    /// Re-send attempts after the first timeout.
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_timeout_secs() -> f64 {
    30.0
}

fn default_retries() -> u32 {
    2
}

impl EvaluatorSettings {
    pub fn spawn_command(command: Vec<String>) -> Self {
        EvaluatorSettings {
            command: Some(command),
            connect: None,
            timeout_secs: default_timeout_secs(),
            retries: default_retries(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match (&self.command, &self.connect) {
            (Some(cmd), None) if !cmd.is_empty() => {}
            (None, Some(addr)) if !addr.is_empty() => {}
            (Some(_), Some(_)) => {
                return Err("evaluator: set either command or connect, not both".to_string())
            }
            _ => return Err("evaluator: one of command or connect is required".to_string()),
        }
        if !(self.timeout_secs > 0.0) {
            return Err("evaluator: timeout_secs must be positive".to_string());
        }
        Ok(())
    }
}

/// Write side of a transport. `close_write` signals end-of-requests to
/// the peer (shutting down a TCP write half; a child's stdin pipe closes
/// on drop).
trait WriteTransport: Write + Send {
    fn close_write(&mut self) {}
}

impl WriteTransport for std::process::ChildStdin {}

impl WriteTransport for TcpStream {
    fn close_write(&mut self) {
        let _ = self.shutdown(std::net::Shutdown::Write);
    }
}

enum ReaderEvent {
    Response(EvaluationResponse),
    Garbage(String),
    Closed,
}

fn spawn_reader(reader: Box<dyn Read + Send>) -> (Receiver<ReaderEvent>, JoinHandle<()>) {
    let (tx, rx) = mpsc::channel();
    let handle = std::thread::spawn(move || {
        let mut lines = BufReader::new(reader).lines();
        loop {
            match lines.next() {
                Some(Ok(line)) => {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let event = match serde_json::from_str::<EvaluationResponse>(&line) {
                        Ok(response) => ReaderEvent::Response(response),
                        Err(_) => ReaderEvent::Garbage(line),
                    };
                    if tx.send(event).is_err() {
                        return;
                    }
                }
                Some(Err(_)) | None => {
                    let _ = tx.send(ReaderEvent::Closed);
                    return;
                }
            }
        }
    });
    (rx, handle)
}

struct InFlight {
    request_index: usize,
    deadline: Instant,
    attempts: u32,
}

/// A live connection to an external evaluator.
pub struct ExternalEvaluator {
    writer: Option<Box<dyn WriteTransport>>,
    events: Receiver<ReaderEvent>,
    timeout: Duration,
    retries: u32,
    /// Maximum requests in flight at once.
    window: usize,
    child: Option<Child>,
    reader: Option<JoinHandle<()>>,
    dead: bool,
}

impl ExternalEvaluator {
    /// Spawns `command` as a child process speaking the protocol on its
    /// standard streams (stderr is passed through).
    pub fn spawn(
        command: &[String],
        timeout: Duration,
        retries: u32,
        window: usize,
    ) -> Result<Self, DispatchError> {
        if command.is_empty() {
            return Err(DispatchError::Transport("empty evaluator command".into()));
        }
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| DispatchError::Transport(format!("spawn {:?}: {e}", command[0])))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (events, reader) = spawn_reader(Box::new(stdout));
        Ok(ExternalEvaluator {
            writer: Some(Box::new(stdin)),
            events,
            timeout,
            retries,
            window: window.max(1),
            child: Some(child),
            reader: Some(reader),
            dead: false,
        })
    }

    /// Connects to a listening evaluator at `host:port`.
    pub fn connect(
        address: &str,
        timeout: Duration,
        retries: u32,
        window: usize,
    ) -> Result<Self, DispatchError> {
        let stream = TcpStream::connect(address)
            .map_err(|e| DispatchError::Transport(format!("connect {address}: {e}")))?;
        let read_half = stream
            .try_clone()
            .map_err(|e| DispatchError::Transport(format!("clone stream: {e}")))?;
        let (events, reader) = spawn_reader(Box::new(read_half));
        Ok(ExternalEvaluator {
            writer: Some(Box::new(stream)),
            events,
            timeout,
            retries,
            window: window.max(1),
            child: None,
            reader: Some(reader),
            dead: false,
        })
    }

    pub fn from_settings(settings: &EvaluatorSettings, window: usize) -> Result<Self, DispatchError> {
        settings.validate().map_err(DispatchError::Transport)?;
        let timeout = Duration::from_secs_f64(settings.timeout_secs);
        if let Some(command) = &settings.command {
            Self::spawn(command, timeout, settings.retries, window)
        } else {
            let address = settings.connect.as_deref().expect("validated");
            Self::connect(address, timeout, settings.retries, window)
        }
    }

    fn send(&mut self, request: &EvaluationRequest) -> Result<(), String> {
        let writer = self.writer.as_mut().ok_or("transport closed")?;
        let mut line = serde_json::to_string(request).expect("request serializes");
        line.push('\n');
        writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.flush())
            .map_err(|e| format!("write request {}: {e}", request.id))
    }

    /// Sends a batch and collects one response per request, in request
    /// order. Times out and retries individual requests; a request whose
    /// retries are exhausted (or whose transport died) yields an error
    /// response rather than failing the batch.
    ///
    /// Returns `Err` only when the transport was already dead at entry,
    /// so a crashed evaluator fails the *next* generation cleanly.
    pub fn evaluate_batch(
        &mut self,
        requests: &[EvaluationRequest],
    ) -> Result<Vec<EvaluationResponse>, DispatchError> {
        if self.dead {
            return Err(DispatchError::Transport(
                "evaluator transport is closed".into(),
            ));
        }
        let mut results: HashMap<u64, EvaluationResponse> = HashMap::with_capacity(requests.len());
        let mut in_flight: HashMap<u64, InFlight> = HashMap::new();
        let mut next_to_send = 0usize;

        while results.len() < requests.len() {
            // Keep the window full while the transport is alive.
            while !self.dead && in_flight.len() < self.window && next_to_send < requests.len() {
                let request = &requests[next_to_send];
                match self.send(request) {
                    Ok(()) => {
                        in_flight.insert(
                            request.id,
                            InFlight {
                                request_index: next_to_send,
                                deadline: Instant::now() + self.timeout,
                                attempts: 1,
                            },
                        );
                    }
                    Err(reason) => {
                        log::warn!("evaluator send failed: {reason}");
                        self.dead = true;
                        results.insert(request.id, EvaluationResponse::failure(request.id, reason));
                    }
                }
                next_to_send += 1;
            }
            if self.dead {
                // Drain everything pending into error responses.
                for (id, _) in in_flight.drain() {
                    results
                        .entry(id)
                        .or_insert_with(|| EvaluationResponse::failure(id, "evaluator transport closed"));
                }
                for request in &requests[next_to_send..] {
                    results.insert(
                        request.id,
                        EvaluationResponse::failure(request.id, "evaluator transport closed"),
                    );
                }
                next_to_send = requests.len();
                continue;
            }

            let now = Instant::now();
            let wait = in_flight
                .values()
                .map(|f| f.deadline.saturating_duration_since(now))
                .min()
                .unwrap_or(Duration::from_millis(10));
            match self.events.recv_timeout(wait) {
                Ok(ReaderEvent::Response(response)) => {
                    if in_flight.remove(&response.id).is_some() {
                        results.insert(response.id, response);
                    } else if results.contains_key(&response.id) {
                        log::debug!("duplicate response for id {} ignored", response.id);
                    } else {
                        log::warn!("response for unknown id {} ignored", response.id);
                    }
                }
                Ok(ReaderEvent::Garbage(line)) => {
                    log::warn!("skipping unparseable evaluator line: {line:?}");
                }
                Ok(ReaderEvent::Closed) | Err(RecvTimeoutError::Disconnected) => {
                    log::warn!("evaluator closed its output stream");
                    self.dead = true;
                }
                Err(RecvTimeoutError::Timeout) => {
                    let now = Instant::now();
                    let expired: Vec<u64> = in_flight
                        .iter()
                        .filter(|(_, f)| f.deadline <= now)
                        .map(|(&id, _)| id)
                        .collect();
                    for id in expired {
                        let flight = in_flight.get_mut(&id).expect("expired id in flight");
                        if flight.attempts > self.retries {
                            let attempts = flight.attempts;
                            in_flight.remove(&id);
                            results.insert(
                                id,
                                EvaluationResponse::failure(
                                    id,
                                    format!("timed out after {attempts} attempts"),
                                ),
                            );
                        } else {
                            flight.attempts += 1;
                            flight.deadline = Instant::now() + self.timeout;
                            let request = &requests[flight.request_index];
                            log::warn!(
                                "request {id} timed out; retrying (attempt {})",
                                flight.attempts
                            );
                            if let Err(reason) = self.send(request) {
                                log::warn!("evaluator re-send failed: {reason}");
                                self.dead = true;
                                in_flight.remove(&id);
                                results.insert(id, EvaluationResponse::failure(id, reason));
                            }
                        }
                    }
                }
            }
        }

        Ok(requests.iter().map(|r| results.remove(&r.id).expect("all ids resolved")).collect())
    }
}

impl Drop for ExternalEvaluator {
    fn drop(&mut self) {
        // Closing the write side signals EOF; give a child a moment to
        // exit on its own before killing it.
        if let Some(mut writer) = self.writer.take() {
            writer.close_write();
        }
        if let Some(mut child) = self.child.take() {
            let deadline = Instant::now() + Duration::from_millis(500);
            loop {
                match child.try_wait() {
                    Ok(Some(_)) => break,
                    Ok(None) if Instant::now() < deadline => {
                        std::thread::sleep(Duration::from_millis(10));
                    }
                    _ => {
                        let _ = child.kill();
                        let _ = child.wait();
                        break;
                    }
                }
            }
        }
        if let Some(handle) = self.reader.take() {
            let _ = handle.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::random_genome;
    use rand::SeedableRng;
    use std::io::BufWriter;
    use std::net::TcpListener;

    fn request(id: u64) -> EvaluationRequest {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(id);
        EvaluationRequest {
            id,
            genome: random_genome(&mut rng, 5).unwrap(),
            macro_config: MacroConfig::cifar(2, 32),
        }
    }

    #[test]
    fn request_wire_shape_is_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let req = EvaluationRequest {
            id: 7,
            genome: random_genome(&mut rng, 1).unwrap(),
            macro_config: MacroConfig::cifar(2, 32),
        };
        let line = serde_json::to_string(&req).unwrap();
        assert!(line.starts_with("{\"id\":7,\"genome\":{\"normal\":"));
        assert!(line.ends_with(
            "\"macro\":{\"template\":\"cifar10\",\"n\":2,\"f\":32,\"resolution\":32,\"classes\":10}}"
        ));
        assert!(!line.contains('\n'));
    }

    #[test]
    fn response_wire_shape_is_exact() {
        let ok = EvaluationResponse {
            id: 7,
            objectives: Some(vec![0.91]),
            error: None,
        };
        assert_eq!(
            serde_json::to_string(&ok).unwrap(),
            r#"{"id":7,"objectives":[0.91],"error":null}"#
        );
        let err = EvaluationResponse::failure(7, "msg");
        assert_eq!(
            serde_json::to_string(&err).unwrap(),
            r#"{"id":7,"objectives":null,"error":"msg"}"#
        );
    }

    #[test]
    fn settings_validation() {
        assert!(EvaluatorSettings::spawn_command(vec!["true".into()]).validate().is_ok());
        let both = EvaluatorSettings {
            command: Some(vec!["x".into()]),
            connect: Some("y:1".into()),
            timeout_secs: 1.0,
            retries: 0,
        };
        assert!(both.validate().is_err());
        let neither = EvaluatorSettings {
            command: None,
            connect: None,
            timeout_secs: 1.0,
            retries: 0,
        };
        assert!(neither.validate().is_err());
    }

    /// In-process TCP evaluator for exercising the client: answers in
    /// reverse order per batch, emits one garbage line, and drops the
    /// first request it ever sees (forcing a timeout + retry).
    fn serve_tcp(listener: TcpListener, drop_first: bool) -> JoinHandle<()> {
        std::thread::spawn(move || {
            let (stream, _) = listener.accept().expect("accept");
            let reader = BufReader::new(stream.try_clone().expect("clone"));
            let mut writer = BufWriter::new(stream);
            let mut dropped = false;
            let mut batch: Vec<EvaluationRequest> = Vec::new();
            writeln!(writer, "this is not json").unwrap();
            writer.flush().unwrap();
            for line in reader.lines() {
                let line = match line {
                    Ok(l) => l,
                    Err(_) => break,
                };
                let request: EvaluationRequest = serde_json::from_str(&line).expect("request");
                if drop_first && !dropped {
                    dropped = true;
                    continue;
                }
                batch.push(request);
                if batch.len() == 2 {
                    for r in batch.drain(..).rev() {
                        let response = EvaluationResponse {
                            id: r.id,
                            objectives: Some(vec![r.id as f64 / 10.0]),
                            error: None,
                        };
                        writeln!(writer, "{}", serde_json::to_string(&response).unwrap()).unwrap();
                        writer.flush().unwrap();
                    }
                }
            }
            // Answer any leftover request on EOF-ish flushes.
            for r in batch.drain(..) {
                let response = EvaluationResponse {
                    id: r.id,
                    objectives: Some(vec![r.id as f64 / 10.0]),
                    error: None,
                };
                writeln!(writer, "{}", serde_json::to_string(&response).unwrap()).unwrap();
                writer.flush().unwrap();
            }
        })
    }

    #[test]
    fn tcp_round_trip_with_garbage_out_of_order_and_retry() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let address = listener.local_addr().unwrap().to_string();
        let server = serve_tcp(listener, true);

        let mut evaluator = ExternalEvaluator::connect(
            &address,
            Duration::from_millis(300),
            2,
            4,
        )
        .unwrap();
        let requests: Vec<EvaluationRequest> = (0..4).map(request).collect();
        let responses = evaluator.evaluate_batch(&requests).unwrap();
        assert_eq!(responses.len(), 4);
        for (req, resp) in requests.iter().zip(&responses) {
            assert_eq!(resp.id, req.id);
            assert_eq!(resp.objectives.as_deref(), Some(&[req.id as f64 / 10.0][..]));
            assert_eq!(resp.error, None);
        }
        drop(evaluator);
        server.join().unwrap();
    }

    #[test]
    fn dead_transport_yields_per_request_errors_then_fails_next_batch() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let address = listener.local_addr().unwrap().to_string();
        // Accept and immediately drop the connection.
        let server = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            drop(stream);
        });
        let mut evaluator =
            ExternalEvaluator::connect(&address, Duration::from_millis(200), 0, 2).unwrap();
        server.join().unwrap();
        let requests: Vec<EvaluationRequest> = (0..3).map(request).collect();
        let responses = evaluator.evaluate_batch(&requests).unwrap();
        assert_eq!(responses.len(), 3);
        assert!(responses.iter().all(|r| r.error.is_some()));
        assert!(evaluator.evaluate_batch(&requests).is_err());
    }
}

//! Evaluators driven by the command line: an external subprocess speaking
//! line-delimited JSON, and a replay of a recorded run.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use rei_core::optimizer::RunLog;
use rei_core::protocol::match_responses;
use rei_core::{Error, Evaluator, EvaluatorRequest, EvaluatorResponse, Result};

struct Running {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Running {
    fn spawn(command: &[String]) -> std::result::Result<Self, String> {
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| format!("cannot start `{}`: {e}", command.join(" ")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self { child, stdin, lines: rx })
    }

    fn exit_note(&mut self) -> String {
        // stdout closes slightly before the exit status is available
        for _ in 0..50 {
            if let Ok(Some(status)) = self.child.try_wait() {
                return format!("evaluator exited with {status}");
            }
            thread::sleep(Duration::from_millis(10));
        }
        "evaluator closed its output".to_string()
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Talks to a child process: one JSON request per line on its standard
/// input, one JSON response per line on its standard output.
///
/// At most `max_in_flight` requests are outstanding at a time.  A request
/// that times out, gets a malformed or failed response, or is lost when the
/// child exits is retried on a fresh child, `attempts` times in total.
pub struct ExternalEvaluator {
    command: Vec<String>,
    timeout: Duration,
    attempts: usize,
    max_in_flight: usize,
    running: Option<Running>,
}

impl ExternalEvaluator {
    pub fn new(command: Vec<String>, timeout: Duration, attempts: usize, max_in_flight: usize) -> Self {
        assert!(!command.is_empty(), "evaluator command must not be empty");
        Self { command, timeout, attempts: attempts.max(1), max_in_flight: max_in_flight.max(1), running: None }
    }

    fn child(&mut self) -> std::result::Result<&mut Running, String> {
        if self.running.is_none() {
            self.running = Some(Running::spawn(&self.command)?);
        }
        Ok(self.running.as_mut().expect("just spawned"))
    }

    fn send(&mut self, q: &EvaluatorRequest) -> std::result::Result<(), String> {
        let line = serde_json::to_string(q).expect("request serializes");
        let child = self.child()?;
        writeln!(child.stdin, "{line}")
            .and_then(|_| child.stdin.flush())
            .map_err(|e| format!("cannot write request {}: {e}", q.id))
    }
}

enum Event {
    Answer(EvaluatorResponse),
    /// Every in-flight request is lost.
    Lost(String),
}

impl Evaluator for ExternalEvaluator {
    fn evaluate(&mut self, requests: &[EvaluatorRequest]) -> Result<Vec<EvaluatorResponse>> {
        let mut tries: HashMap<u64, usize> = requests.iter().map(|q| (q.id, 0)).collect();
        let by_id: HashMap<u64, &EvaluatorRequest> = requests.iter().map(|q| (q.id, q)).collect();
        let mut queue: VecDeque<u64> = requests.iter().map(|q| q.id).collect();
        let mut in_flight: Vec<(u64, Instant)> = Vec::new();
        let mut done: Vec<EvaluatorResponse> = Vec::with_capacity(requests.len());

        while done.len() < requests.len() {
            while in_flight.len() < self.max_in_flight {
                let Some(id) = queue.pop_front() else { break };
                *tries.get_mut(&id).expect("known id") += 1;
                if let Err(message) = self.send(by_id[&id]) {
                    self.running = None;
                    let mut lost = take_all(&mut in_flight);
                    lost.push(id);
                    requeue(&tries, &mut queue, lost, message, self.attempts)?;
                    continue;
                }
                in_flight.push((id, Instant::now()));
            }

            let oldest = in_flight.iter().map(|(_, t)| *t).min().expect("something in flight");
            let wait = self.timeout.saturating_sub(oldest.elapsed());
            let event = {
                let child = self.child().map_err(|m| failure(1, m))?;
                match child.lines.recv_timeout(wait) {
                    Ok(Ok(line)) => parse_line(&line),
                    Ok(Err(e)) => Event::Lost(format!("cannot read evaluator output: {e}")),
                    Err(RecvTimeoutError::Timeout) => {
                        let id = in_flight.iter().min_by_key(|(_, t)| *t).map(|(id, _)| *id).expect("in flight");
                        Event::Lost(format!("request {id} timed out after {:?}", self.timeout))
                    }
                    Err(RecvTimeoutError::Disconnected) => Event::Lost(child.exit_note()),
                }
            };

            match event {
                Event::Answer(r) => {
                    let Some(pos) = in_flight.iter().position(|(id, _)| *id == r.id) else {
                        // stray or duplicate response: the stream is out of sync
                        self.running = None;
                        let message = format!("response for unexpected id {}: {}", r.id, to_json(&r));
                        requeue(&tries, &mut queue, take_all(&mut in_flight), message, self.attempts)?;
                        continue;
                    };
                    let q = by_id[&r.id];
                    match match_responses(std::slice::from_ref(q), vec![r.clone()]) {
                        Ok(mut ok) => {
                            in_flight.remove(pos);
                            done.push(ok.remove(0));
                        }
                        Err(e) => {
                            in_flight.remove(pos);
                            let message = format!("{}; payload {}", detail(&e), to_json(&r));
                            requeue(&tries, &mut queue, vec![r.id], message, self.attempts)?;
                        }
                    }
                }
                Event::Lost(message) => {
                    // a timed-out, garbled or dead child cannot be trusted with the rest
                    self.running = None;
                    requeue(&tries, &mut queue, take_all(&mut in_flight), message, self.attempts)?;
                }
            }
        }
        Ok(done)
    }
}

fn to_json(r: &EvaluatorResponse) -> String {
    serde_json::to_string(r).expect("response serializes")
}

fn detail(e: &Error) -> String {
    match e {
        Error::EvaluatorFailure { message, .. } => message.clone(),
        other => other.to_string(),
    }
}

fn failure(attempts: usize, message: String) -> Error {
    Error::EvaluatorFailure { attempts, message }
}

fn parse_line(line: &str) -> Event {
    match serde_json::from_str::<EvaluatorResponse>(line) {
        Ok(r) => Event::Answer(r),
        Err(e) => Event::Lost(format!("malformed response ({e}): {line}")),
    }
}

fn take_all(in_flight: &mut Vec<(u64, Instant)>) -> Vec<u64> {
    in_flight.drain(..).map(|(id, _)| id).collect()
}

/// Queues `lost` requests again, or fails once one has used up its attempts.
fn requeue(
    tries: &HashMap<u64, usize>,
    queue: &mut VecDeque<u64>,
    lost: Vec<u64>,
    message: String,
    attempts: usize,
) -> Result<()> {
    for id in lost.iter().rev() {
        let used = tries[id];
        if used >= attempts {
            return Err(failure(used, message));
        }
        log::warn!("request {id}: {message}; retrying ({used}/{attempts})");
        queue.push_front(*id);
    }
    Ok(())
}

/// Answers requests from a recorded run, checking that every request matches
/// the one that was logged.
pub struct ReplayEvaluator {
    rounds: VecDeque<(Vec<EvaluatorRequest>, Vec<EvaluatorResponse>)>,
}

impl ReplayEvaluator {
    pub fn new(log: &RunLog) -> Self {
        Self { rounds: log.iterations().map(|it| (it.requests.clone(), it.responses.clone())).collect() }
    }
}

impl Evaluator for ReplayEvaluator {
    fn evaluate(&mut self, requests: &[EvaluatorRequest]) -> Result<Vec<EvaluatorResponse>> {
        let (logged, responses) =
            self.rounds.pop_front().ok_or_else(|| failure(1, "replay ran past the end of the recorded run".into()))?;
        if logged != requests {
            return Err(failure(
                1,
                format!(
                    "replay diverged: logged {} but got {}",
                    serde_json::to_string(&logged).expect("requests serialize"),
                    serde_json::to_string(requests).expect("requests serialize")
                ),
            ));
        }
        Ok(responses)
    }
}

//! Line protocol for out-of-process runners (for example a headless browser).
//!
//! The runner first writes a handshake line `{"capabilities": "interactive"}`.
//! Each request is one line `{"task": Task, "files": {path: text}}` and is
//! answered by one TaskOutcome line, in order. A request that also carries
//! `"render": true` is answered with `{"task_id": ..., "files": {...}}`
//! holding the post-interaction page instead.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoints::Task;
use crate::document_store::{DocumentSnapshot, FileMap};

use super::{Capability, Runner, Status, TaskOutcome, TaskRef};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub capabilities: Capability,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunnerRequest<'a> {
    pub task: std::borrow::Cow<'a, Task>,
    pub files: std::borrow::Cow<'a, FileMap>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenderRequest<'a> {
    pub task: std::borrow::Cow<'a, Task>,
    pub files: std::borrow::Cow<'a, FileMap>,
    pub render: bool,
}

/// A runner's answer. Fields the caller already knows are optional and
/// filled in from the request context.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunnerResponse {
    pub task_id: String,
    pub status: Status,
    #[serde(default)]
    pub detail: String,
}

#[derive(Debug, Deserialize)]
struct RenderResponse {
    task_id: String,
    files: FileMap,
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("runner I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("runner handshake invalid: {0}")]
    Handshake(String),
    #[error("runner did not answer within {0:?}")]
    Timeout(Duration),
    #[error("runner closed the connection")]
    Closed,
}

struct Channel {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    broken: bool,
}

/// Runner reached over the line protocol, on a child's standard streams or
/// a TCP connection. One request is in flight at a time.
pub struct ProtocolRunner {
    capability: Capability,
    timeout: Duration,
    channel: Mutex<Channel>,
    child: Option<Mutex<Child>>,
}

impl std::fmt::Debug for ProtocolRunner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProtocolRunner")
            .field("capability", &self.capability)
            .field("timeout", &self.timeout)
            .finish_non_exhaustive()
    }
}

fn spawn_reader<R: std::io::Read + Send + 'static>(source: R) -> Receiver<std::io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut reader = BufReader::new(source);
        loop {
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) => break,
                Ok(_) => {
                    if line.trim().is_empty() {
                        continue;
                    }
                    if tx.send(Ok(line)).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                    break;
                }
            }
        }
    });
    rx
}

fn recv(lines: &Receiver<std::io::Result<String>>, timeout: Duration) -> Result<String, ProtocolError> {
    match lines.recv_timeout(timeout) {
        Ok(Ok(line)) => Ok(line),
        Ok(Err(e)) => Err(ProtocolError::Io(e)),
        Err(RecvTimeoutError::Timeout) => Err(ProtocolError::Timeout(timeout)),
        Err(RecvTimeoutError::Disconnected) => Err(ProtocolError::Closed),
    }
}

impl ProtocolRunner {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

    fn handshake(
        writer: Box<dyn Write + Send>,
        lines: Receiver<std::io::Result<String>>,
        timeout: Duration,
        child: Option<Child>,
    ) -> Result<Self, ProtocolError> {
        let line = recv(&lines, timeout)?;
        let hs: Handshake =
            serde_json::from_str(line.trim()).map_err(|e| ProtocolError::Handshake(format!("{e}: {}", line.trim())))?;
        Ok(Self {
            capability: hs.capabilities,
            timeout,
            channel: Mutex::new(Channel {
                writer,
                lines,
                broken: false,
            }),
            child: child.map(Mutex::new),
        })
    }

    /// Starts `command` with piped standard streams.
    pub fn spawn(command: &mut Command, timeout: Duration) -> Result<Self, ProtocolError> {
        let mut child = command
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().ok_or(ProtocolError::Closed)?;
        let stdout = child.stdout.take().ok_or(ProtocolError::Closed)?;
        let lines = spawn_reader(stdout);
        Self::handshake(Box::new(stdin), lines, timeout, Some(child))
    }

    pub fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> Result<Self, ProtocolError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let lines = spawn_reader(stream.try_clone()?);
        Self::handshake(Box::new(stream), lines, timeout, None)
    }

    fn exchange(&self, request: &str) -> Result<String, ProtocolError> {
        let mut ch = self.channel.lock().expect("runner channel poisoned");
        if ch.broken {
            return Err(ProtocolError::Closed);
        }
        let result = (|| {
            ch.writer.write_all(request.as_bytes())?;
            ch.writer.write_all(b"\n")?;
            ch.writer.flush()?;
            recv(&ch.lines, self.timeout)
        })();
        if result.is_err() {
            // A late reply would pair with the next request.
            ch.broken = true;
        }
        result
    }

    fn run_one(&self, t: &TaskRef<'_>, snapshot: &DocumentSnapshot) -> TaskOutcome {
        let error = |detail: String| TaskOutcome::new(t.checkpoint_id, &t.task.id, Status::Error, detail, snapshot);
        let request = RunnerRequest {
            task: std::borrow::Cow::Borrowed(t.task),
            files: std::borrow::Cow::Borrowed(&snapshot.files),
        };
        let line = serde_json::to_string(&request).expect("request serializes");
        let reply = match self.exchange(&line) {
            Ok(r) => r,
            Err(ProtocolError::Timeout(_)) => return error("timeout".into()),
            Err(e) => return error(e.to_string()),
        };
        match serde_json::from_str::<RunnerResponse>(reply.trim()) {
            Ok(r) if r.task_id == t.task.id => TaskOutcome::new(t.checkpoint_id, &t.task.id, r.status, r.detail, snapshot),
            Ok(r) => error(format!("protocol violation: reply for task {:?}, expected {:?}", r.task_id, t.task.id)),
            Err(e) => error(format!("protocol violation: {e}")),
        }
    }
}

impl Drop for ProtocolRunner {
    fn drop(&mut self) {
        if let Some(child) = &self.child {
            let mut child = child.lock().unwrap_or_else(|p| p.into_inner());
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Runner for ProtocolRunner {
    fn capabilities(&self) -> Capability {
        self.capability
    }

    fn evaluate_batch(&self, tasks: &[TaskRef<'_>], snapshot: &DocumentSnapshot) -> Vec<TaskOutcome> {
        tasks.iter().map(|t| self.run_one(t, snapshot)).collect()
    }

    fn render_after(&self, task: &Task, snapshot: &DocumentSnapshot) -> Option<Result<FileMap, String>> {
        if self.capability != Capability::Interactive {
            return None;
        }
        let request = RenderRequest {
            task: std::borrow::Cow::Borrowed(task),
            files: std::borrow::Cow::Borrowed(&snapshot.files),
            render: true,
        };
        let line = serde_json::to_string(&request).expect("request serializes");
        Some(match self.exchange(&line) {
            Ok(reply) => match serde_json::from_str::<RenderResponse>(reply.trim()) {
                Ok(r) if r.task_id == task.id => Ok(r.files),
                Ok(r) => Err(format!("protocol violation: render reply for task {:?}", r.task_id)),
                Err(e) => Err(format!("protocol violation: {e}")),
            },
            Err(e) => Err(e.to_string()),
        })
    }
}

//! Child-process black-box speaking newline-delimited JSON over stdio.
//!
//! ```text
//! -> {"op":"meta"}
//! <- {"d":4,"task":"classification","classes":3}
//! -> {"op":"predict","id":0,"x":[[...],[...]]}
//! <- {"id":0,"y":[0.1,0.7]}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use ndarray::{Array1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_batch, check_outputs, BlackBox};
use crate::data::Task;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct SubprocessOptions {
    pub timeout: Duration,
    /// Rows per predict message.
    pub max_batch: usize,
}

impl Default for SubprocessOptions {
    fn default() -> Self {
        SubprocessOptions { timeout: Duration::from_secs(30), max_batch: 1024 }
    }
}

#[derive(Serialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum Request<'a> {
    Meta,
    Predict { id: u64, x: &'a [Vec<f64>] },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaReply {
    d: usize,
    task: Task,
    #[serde(default)]
    classes: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictReply {
    id: u64,
    y: Vec<f64>,
}

struct Channel {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

/// External model process. The protocol is serialized behind a mutex so the
/// handle can be shared by concurrent explanation workers.
pub struct SubprocessBlackBox {
    channel: Mutex<Channel>,
    dim: usize,
    task: Task,
    classes: Option<usize>,
    options: SubprocessOptions,
}

pub fn subprocess_blackbox(command: &[String], timeout: Duration) -> Result<SubprocessBlackBox> {
    SubprocessBlackBox::spawn(command, SubprocessOptions { timeout, ..SubprocessOptions::default() })
}

impl SubprocessBlackBox {
    pub fn spawn(command: &[String], options: SubprocessOptions) -> Result<Self> {
        let (program, args) = command.split_first().ok_or_else(|| Error::Spawn("empty command".into()))?;
        if options.max_batch == 0 {
            return Err(Error::invalid("max_batch must be positive"));
        }
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Spawn(format!("{program}: {e}")))?;
        let stdin = child.stdin.take().ok_or_else(|| Error::Spawn("no stdin pipe".into()))?;
        let stdout = child.stdout.take().ok_or_else(|| Error::Spawn("no stdout pipe".into()))?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut channel = Channel { child, stdin, lines: rx, next_id: 0 };
        let meta: MetaReply = channel.round_trip(&Request::Meta, options.timeout)?;
        if meta.d == 0 {
            return Err(Error::Protocol("handshake announced d = 0".into()));
        }
        if meta.task == Task::Classification && meta.classes == Some(0) {
            return Err(Error::Protocol("handshake announced zero classes".into()));
        }
        Ok(SubprocessBlackBox { channel: Mutex::new(channel), dim: meta.d, task: meta.task, classes: meta.classes, options })
    }

    pub fn classes(&self) -> Option<usize> {
        self.classes
    }
}

impl Channel {
    fn send(&mut self, req: &Request<'_>) -> Result<()> {
        let mut line = serde_json::to_string(req).map_err(|e| Error::Protocol(e.to_string()))?;
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::Protocol(format!("child closed stdin: {e}")))
    }

    fn recv_line(&mut self, timeout: Duration) -> Result<String> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(Error::Protocol(format!("reading child stdout: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(Error::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(Error::Protocol("child closed stdout".into())),
        }
    }

    fn round_trip<T: for<'de> Deserialize<'de>>(&mut self, req: &Request<'_>, timeout: Duration) -> Result<T> {
        self.send(req)?;
        let line = self.recv_line(timeout)?;
        serde_json::from_str(&line).map_err(|e| Error::Protocol(format!("malformed reply {line:?}: {e}")))
    }
}

impl Drop for Channel {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl<F: Scalar> BlackBox<F> for SubprocessBlackBox {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn task(&self) -> Task {
        self.task
    }

    fn predict_batch(&self, xs: ArrayView2<'_, F>) -> Result<Array1<F>> {
        check_batch(&xs, self.dim)?;
        let mut out = Vec::with_capacity(xs.nrows());
        let mut channel = self.channel.lock().map_err(|_| Error::Protocol("channel poisoned".into()))?;
        for chunk in xs.axis_chunks_iter(Axis(0), self.options.max_batch) {
            let rows: Vec<Vec<f64>> = chunk.rows().into_iter().map(|r| r.iter().map(|v| v.to_f64_lossy()).collect()).collect();
            let id = channel.next_id;
            channel.next_id += 1;
            let reply: PredictReply = channel.round_trip(&Request::Predict { id, x: &rows }, self.options.timeout)?;
            if reply.id != id {
                return Err(Error::Protocol(format!("reply id {} for request {id}", reply.id)));
            }
            if reply.y.len() != rows.len() {
                return Err(Error::Protocol(format!("{} outputs for {} rows", reply.y.len(), rows.len())));
            }
            out.extend(reply.y.into_iter().map(F::lit));
        }
        let y = Array1::from(out);
        check_outputs(&y, xs.nrows(), self.task).map_err(|e| Error::Protocol(e.to_string()))?;
        Ok(y)
    }
}

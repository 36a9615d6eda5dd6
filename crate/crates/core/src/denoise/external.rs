//! Client side of the external denoiser protocol.
//!
//! Reads and writes happen on helper threads so that a hung or crashed
//! adapter surfaces as a timeout instead of blocking the solver forever.

use std::io::{self, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use crate::error::Result;
use crate::io::decode_f32_block;
use crate::tensor::{ImageTensor, NoiseLevelMap};

use super::protocol::{self, STATUS_OK};
use super::Denoiser;

#[derive(Debug, thiserror::Error)]
pub enum ExternalError {
    #[error("failed to start adapter `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: io::Error,
    },
    #[error("adapter handshake failed: {0}")]
    Handshake(String),
    #[error("adapter protocol violation: {0}")]
    Protocol(String),
    #[error("adapter reported error status {0}")]
    AdapterStatus(u8),
    #[error("adapter did not answer within {0:?}")]
    Timeout(Duration),
    #[error("adapter i/o: {0}")]
    Io(#[from] io::Error),
    #[error("adapter session is closed")]
    Closed,
}

/// Background reader: hands out exactly the number of bytes asked for.
struct ReadWorker {
    requests: Sender<usize>,
    replies: Receiver<io::Result<Vec<u8>>>,
}

impl ReadWorker {
    fn start(mut input: Box<dyn Read + Send>) -> Self {
        let (req_tx, req_rx) = mpsc::channel::<usize>();
        let (rep_tx, rep_rx) = mpsc::channel();
        thread::spawn(move || {
            for n in req_rx {
                let mut buf = vec![0u8; n];
                let res = input.read_exact(&mut buf).map(|_| buf);
                let failed = res.is_err();
                if rep_tx.send(res).is_err() || failed {
                    break;
                }
            }
        });
        ReadWorker {
            requests: req_tx,
            replies: rep_rx,
        }
    }

    fn read(
        &self,
        n: usize,
        deadline: Instant,
        timeout: Duration,
    ) -> Result<Vec<u8>, ExternalError> {
        self.requests.send(n).map_err(|_| ExternalError::Closed)?;
        let wait = deadline.saturating_duration_since(Instant::now());
        match self.replies.recv_timeout(wait) {
            Ok(Ok(buf)) => Ok(buf),
            Ok(Err(e)) if e.kind() == io::ErrorKind::UnexpectedEof => Err(ExternalError::Closed),
            Ok(Err(e)) => Err(ExternalError::Io(e)),
            Err(RecvTimeoutError::Timeout) => Err(ExternalError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(ExternalError::Closed),
        }
    }
}

/// Background writer; dropping it closes the adapter's input.
struct WriteWorker {
    frames: Option<Sender<Vec<u8>>>,
}

impl WriteWorker {
    fn start(mut output: Box<dyn Write + Send>) -> Self {
        let (tx, rx) = mpsc::channel::<Vec<u8>>();
        thread::spawn(move || {
            for frame in rx {
                if output
                    .write_all(&frame)
                    .and_then(|_| output.flush())
                    .is_err()
                {
                    break;
                }
            }
        });
        WriteWorker { frames: Some(tx) }
    }

    fn send(&self, frame: Vec<u8>) -> Result<(), ExternalError> {
        self.frames
            .as_ref()
            .ok_or(ExternalError::Closed)?
            .send(frame)
            .map_err(|_| ExternalError::Closed)
    }

    fn close(&mut self) {
        self.frames = None;
    }
}

/// A denoiser backed by an adapter process speaking the `PNPD` protocol.
pub struct ExternalDenoiser {
    label: String,
    child: Option<Child>,
    reader: ReadWorker,
    writer: WriteWorker,
    timeout: Duration,
    poisoned: bool,
}

impl ExternalDenoiser {
    /// Starts `command` through `sh -c` and performs the handshake.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self, ExternalError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(format!("exec {command}"))
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| ExternalError::Spawn {
                command: command.to_string(),
                source,
            })?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let mut this = Self::with_streams(
            command.to_string(),
            Box::new(stdout),
            Box::new(stdin),
            timeout,
        );
        this.child = Some(child);
        this.handshake()?;
        Ok(this)
    }

    /// Talks to an adapter over arbitrary streams (an in-process server, a socket, ...).
    pub fn from_streams(
        reader: Box<dyn Read + Send>,
        writer: Box<dyn Write + Send>,
        timeout: Duration,
    ) -> Result<Self, ExternalError> {
        let mut this = Self::with_streams("stream".to_string(), reader, writer, timeout);
        this.handshake()?;
        Ok(this)
    }

    fn with_streams(
        label: String,
        reader: Box<dyn Read + Send>,
        writer: Box<dyn Write + Send>,
        timeout: Duration,
    ) -> Self {
        ExternalDenoiser {
            label,
            child: None,
            reader: ReadWorker::start(reader),
            writer: WriteWorker::start(writer),
            timeout,
            poisoned: false,
        }
    }

    fn handshake(&mut self) -> Result<(), ExternalError> {
        let deadline = Instant::now() + self.timeout;
        let result = self
            .writer
            .send(protocol::encode_handshake().to_vec())
            .and_then(|_| self.reader.read(8, deadline, self.timeout))
            .map_err(|e| match e {
                ExternalError::Closed => {
                    ExternalError::Handshake("adapter closed the stream".into())
                }
                other => other,
            })
            .and_then(|bytes| {
                let hello: [u8; 8] = bytes.try_into().expect("asked for 8 bytes");
                protocol::check_handshake(&hello)
            });
        if result.is_err() {
            self.shutdown();
        }
        result
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    fn exchange(
        &mut self,
        u: &ImageTensor,
        s: &NoiseLevelMap,
    ) -> Result<ImageTensor, ExternalError> {
        if self.poisoned {
            return Err(ExternalError::Closed);
        }
        let deadline = Instant::now() + self.timeout;
        self.writer.send(protocol::encode_request(u, s))?;
        let status = self.reader.read(1, deadline, self.timeout)?[0];
        if status != STATUS_OK {
            return Err(ExternalError::AdapterStatus(status));
        }
        let payload = self.reader.read(
            protocol::expected_payload(u.shape()),
            deadline,
            self.timeout,
        )?;
        let values = decode_f32_block(&payload);
        // The zero-level identity is part of the denoiser contract; do not
        // trust the adapter with it, and do not let f32 rounding leak in.
        let data: Vec<f64> = values
            .into_iter()
            .zip(u.data().iter().zip(s.data()))
            .map(|(o, (&ui, &si))| if si == 0.0 { ui } else { o })
            .collect();
        ImageTensor::new(u.shape(), data)
            .map_err(|_| ExternalError::Protocol("adapter returned non-finite values".into()))
    }

    fn shutdown(&mut self) {
        self.poisoned = true;
        self.writer.close();
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Denoiser for ExternalDenoiser {
    fn denoise(&mut self, u: &ImageTensor, s: &NoiseLevelMap) -> Result<ImageTensor> {
        u.shape().ensure_same(&s.shape())?;
        if s.is_zero() {
            return Ok(u.clone());
        }
        match self.exchange(u, s) {
            Ok(out) => Ok(out),
            Err(e) => {
                // After a timeout or a broken stream the framing is lost.
                if !matches!(e, ExternalError::AdapterStatus(_)) {
                    self.shutdown();
                }
                Err(e.into())
            }
        }
    }

    fn name(&self) -> &str {
        &self.label
    }
}

impl Drop for ExternalDenoiser {
    fn drop(&mut self) {
        self.writer.close();
        if let Some(mut child) = self.child.take() {
            // Give a well-behaved adapter a moment to exit on EOF.
            let deadline = Instant::now() + Duration::from_millis(500);
            loop {
                match child.try_wait() {
                    Ok(Some(_)) => return,
                    Ok(None) if Instant::now() < deadline => {
                        thread::sleep(Duration::from_millis(5))
                    }
                    _ => break,
                }
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

//! Host side of the protocol: launching plugins and exchanging messages.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use super::protocol::{decode, encode, HostCommand, PluginEvent, TrainRequest, PROTOCOL_VERSION};
use super::serve::{serve, Trainer};
use super::HarnessError;
use crate::registry::EpochResult;
use crate::tpe::SearchSpace;

pub type TrainerFactory = Arc<dyn Fn() -> Box<dyn Trainer + Send> + Send + Sync>;

/// How to start a plugin.
#[derive(Clone)]
pub enum Launch {
    /// Program and arguments of a subprocess speaking the protocol on stdio.
    Command(Vec<String>),
    /// A trainer served on a thread of this process.
    InProcess { label: String, factory: TrainerFactory },
}

impl std::fmt::Debug for Launch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Launch::Command(c) => f.debug_tuple("Command").field(c).finish(),
            Launch::InProcess { label, .. } => f.debug_tuple("InProcess").field(label).finish(),
        }
    }
}

impl Launch {
    pub fn in_process<T: Trainer + Send + 'static>(label: impl Into<String>, make: impl Fn() -> T + Send + Sync + 'static) -> Self {
        Launch::InProcess { label: label.into(), factory: Arc::new(move || Box::new(make()) as Box<dyn Trainer + Send>) }
    }

    pub fn describe(&self) -> String {
        match self {
            Launch::Command(c) => c.join(" "),
            Launch::InProcess { label, .. } => label.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PluginDescriptor {
    pub launch: Launch,
    pub nn_name: String,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    /// Stored as the nn code entity when the name is not yet registered.
    pub nn_code: Option<String>,
}

impl PluginDescriptor {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |m: &str| Err(HarnessError::InvalidRun(m.to_owned()));
        if let Launch::Command(c) = &self.launch {
            if c.is_empty() || c[0].is_empty() {
                return invalid("plugin launch command is empty");
            }
        }
        if self.in_shape.is_empty() || self.out_shape.is_empty() {
            return invalid("plugin shapes must be non-empty");
        }
        if self.in_shape.contains(&0) || self.out_shape.contains(&0) {
            return invalid("plugin shapes must be positive");
        }
        Ok(())
    }
}

enum Incoming {
    Line(String),
    Eof,
    Failed(std::io::Error),
}

/// A running plugin session.
pub struct Plugin {
    child: Option<Child>,
    to_plugin: Option<Box<dyn Write + Send>>,
    from_plugin: Receiver<Incoming>,
    timeout: Duration,
}

fn spawn_reader(r: impl Read + Send + 'static) -> Receiver<Incoming> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut r = BufReader::new(r);
        loop {
            let mut line = String::new();
            let msg = match r.read_line(&mut line) {
                Ok(0) => Incoming::Eof,
                Ok(_) => Incoming::Line(line),
                Err(e) => Incoming::Failed(e),
            };
            let last = !matches!(msg, Incoming::Line(_));
            if tx.send(msg).is_err() || last {
                break;
            }
        }
    });
    rx
}

/// Outcome of one `train` exchange.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainOutcome {
    Done(Vec<EpochResult>),
    /// The plugin reported an error, crashed or timed out; `epochs` holds
    /// what completed before.
    Failed { epochs: Vec<EpochResult>, message: String, plugin_alive: bool },
}

impl Plugin {
    pub fn spawn(launch: &Launch, timeout: Duration) -> Result<Self, HarnessError> {
        match launch {
            Launch::Command(cmd) => {
                let mut child = Command::new(&cmd[0])
                    .args(&cmd[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| HarnessError::Spawn(format!("{}: {e}", cmd.join(" "))))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Ok(Plugin {
                    child: Some(child),
                    to_plugin: Some(Box::new(stdin)),
                    from_plugin: spawn_reader(stdout),
                    timeout,
                })
            }
            Launch::InProcess { factory, .. } => {
                let (host_r, plugin_w) = std::io::pipe().map_err(|e| HarnessError::Spawn(e.to_string()))?;
                let (plugin_r, host_w) = std::io::pipe().map_err(|e| HarnessError::Spawn(e.to_string()))?;
                let factory = factory.clone();
                thread::spawn(move || {
                    let mut trainer = factory();
                    let _ = serve(&mut trainer, BufReader::new(plugin_r), plugin_w);
                });
                Ok(Plugin { child: None, to_plugin: Some(Box::new(host_w)), from_plugin: spawn_reader(host_r), timeout })
            }
        }
    }

    fn send(&mut self, cmd: &HostCommand) -> Result<(), HarnessError> {
        let w = self.to_plugin.as_mut().ok_or_else(|| HarnessError::Protocol("plugin input is closed".into()))?;
        w.write_all(encode(cmd).as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| HarnessError::PluginExited(format!("writing to plugin: {e}")))
    }

    fn recv(&mut self) -> Result<PluginEvent, HarnessError> {
        match self.from_plugin.recv_timeout(self.timeout) {
            Ok(Incoming::Line(l)) => decode(&l).map_err(HarnessError::Protocol),
            Ok(Incoming::Eof) | Err(RecvTimeoutError::Disconnected) => {
                Err(HarnessError::PluginExited("plugin closed its output".into()))
            }
            Ok(Incoming::Failed(e)) => Err(HarnessError::PluginExited(format!("reading from plugin: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(HarnessError::Timeout(self.timeout)),
        }
    }

    /// Exchanges `hello` and `supported_hyperparameters`.
    pub fn handshake(&mut self) -> Result<BTreeSet<String>, HarnessError> {
        let unexpected = |what: &str, ev: PluginEvent| HarnessError::Protocol(format!("expected {what}, got {ev:?}"));
        self.send(&HostCommand::Hello { version: PROTOCOL_VERSION })?;
        match self.recv()? {
            PluginEvent::HelloAck { version } if version == PROTOCOL_VERSION => {}
            PluginEvent::HelloAck { version } => {
                return Err(HarnessError::Protocol(format!(
                    "plugin speaks protocol version {version}, expected {PROTOCOL_VERSION}"
                )))
            }
            ev => return Err(unexpected("hello_ack", ev)),
        }
        self.send(&HostCommand::SupportedHyperparameters)?;
        match self.recv()? {
            PluginEvent::Hyperparameters { names } => Ok(names.into_iter().collect()),
            ev => Err(unexpected("hyperparameters", ev)),
        }
    }

    /// Sends `train` and collects epoch events until `done`. Malformed or
    /// out-of-order events are protocol errors; plugin errors, exits and
    /// timeouts are reported as a failed outcome.
    pub fn train(&mut self, req: &TrainRequest) -> Result<TrainOutcome, HarnessError> {
        self.send(&HostCommand::Train(req.clone()))?;
        let mut epochs: Vec<EpochResult> = Vec::new();
        loop {
            let ev = match self.recv() {
                Ok(ev) => ev,
                Err(HarnessError::PluginExited(m)) => return Ok(TrainOutcome::Failed { epochs, message: m, plugin_alive: false }),
                Err(HarnessError::Timeout(t)) => {
                    let message = format!("no event from plugin within {t:?}");
                    return Ok(TrainOutcome::Failed { epochs, message, plugin_alive: false });
                }
                Err(e) => return Err(e),
            };
            match ev {
                PluginEvent::Epoch { epoch, accuracy, duration_ns } => {
                    let expected = epochs.len() as u32 + 1;
                    if epoch != expected || epoch > req.max_epochs {
                        return Err(HarnessError::Protocol(format!(
                            "epoch {epoch} out of order (expected {expected}, max {})",
                            req.max_epochs
                        )));
                    }
                    if !(0.0..=1.0).contains(&accuracy) {
                        return Err(HarnessError::Protocol(format!("accuracy {accuracy} outside [0, 1]")));
                    }
                    if duration_ns == 0 {
                        return Err(HarnessError::Protocol(format!("epoch {epoch} reports a zero duration")));
                    }
                    epochs.push(EpochResult { epoch, accuracy, duration_ns });
                }
                PluginEvent::Done if epochs.is_empty() => {
                    let message = "plugin finished without reporting an epoch".into();
                    return Ok(TrainOutcome::Failed { epochs, message, plugin_alive: true });
                }
                PluginEvent::Done => return Ok(TrainOutcome::Done(epochs)),
                PluginEvent::Error { message } => return Ok(TrainOutcome::Failed { epochs, message, plugin_alive: true }),
                other => return Err(HarnessError::Protocol(format!("unexpected event during training: {other:?}"))),
            }
        }
    }
}

impl Drop for Plugin {
    fn drop(&mut self) {
        // closing stdin asks a well-behaved plugin to exit
        self.to_plugin.take();
        if let Some(mut child) = self.child.take() {
            let deadline = std::time::Instant::now() + Duration::from_millis(500);
            loop {
                match child.try_wait() {
                    Ok(Some(_)) => break,
                    Ok(None) if std::time::Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
                    _ => {
                        let _ = child.kill();
                        let _ = child.wait();
                        break;
                    }
                }
            }
        }
    }
}

/// Restricts the configured space to what the plugin supports. `transform`
/// is always kept: it is forwarded to the plugin verbatim.
pub fn restrict_space(space: &SearchSpace, supported: &BTreeSet<String>) -> Result<SearchSpace, HarnessError> {
    let missing: Vec<&str> = supported.iter().map(String::as_str).filter(|n| space.get(n).is_none()).collect();
    if !missing.is_empty() {
        return Err(HarnessError::UnsupportedSpace(format!(
            "plugin requires hyperparameters absent from the search space: {}",
            missing.join(", ")
        )));
    }
    let mut out = SearchSpace::new();
    for (name, spec) in space.iter() {
        if name == super::TRANSFORM_PARAM || supported.contains(name) {
            out.insert(name, spec.clone());
        }
    }
    Ok(out)
}

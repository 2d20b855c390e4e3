//! Plugin side of the protocol.

use std::io::{BufRead, Write};
use std::time::Instant;

use super::protocol::{decode, encode, HostCommand, PluginEvent, TrainRequest, PROTOCOL_VERSION};
use crate::registry::EpochResult;

/// A trainable model behind the plugin protocol.
pub trait Trainer {
    fn supported_hyperparameters(&self) -> Vec<String>;

    /// Trains for up to `req.max_epochs` epochs, reporting each through
    /// `on_epoch`. An `Err` becomes an `error` event.
    fn train(&mut self, req: &TrainRequest, on_epoch: &mut dyn FnMut(EpochResult) -> std::io::Result<()>)
        -> Result<(), String>;
}

impl<T: Trainer + ?Sized> Trainer for Box<T> {
    fn supported_hyperparameters(&self) -> Vec<String> {
        (**self).supported_hyperparameters()
    }

    fn train(&mut self, req: &TrainRequest, on_epoch: &mut dyn FnMut(EpochResult) -> std::io::Result<()>)
        -> Result<(), String> {
        (**self).train(req, on_epoch)
    }
}

fn send<W: Write>(w: &mut W, ev: &PluginEvent) -> std::io::Result<()> {
    w.write_all(encode(ev).as_bytes())?;
    w.flush()
}

/// Answers host commands until end of input. A malformed line or a version
/// mismatch is answered with an `error` event and ends the session.
pub fn serve<T: Trainer + ?Sized, R: BufRead, W: Write>(trainer: &mut T, reader: R, mut writer: W) -> std::io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        let cmd = match decode::<HostCommand>(&line) {
            Ok(c) => c,
            Err(e) => return send(&mut writer, &PluginEvent::Error { message: e }),
        };
        match cmd {
            HostCommand::Hello { version } if version == PROTOCOL_VERSION => {
                send(&mut writer, &PluginEvent::HelloAck { version: PROTOCOL_VERSION })?
            }
            HostCommand::Hello { version } => {
                let message = format!("unsupported protocol version {version}, expected {PROTOCOL_VERSION}");
                return send(&mut writer, &PluginEvent::Error { message });
            }
            HostCommand::SupportedHyperparameters => {
                let mut names = trainer.supported_hyperparameters();
                names.sort();
                names.dedup();
                send(&mut writer, &PluginEvent::Hyperparameters { names })?
            }
            HostCommand::Train(req) => {
                let mut emit = |e: EpochResult| {
                    send(
                        &mut writer,
                        &PluginEvent::Epoch { epoch: e.epoch, accuracy: e.accuracy, duration_ns: e.duration_ns },
                    )
                };
                let ev = match trainer.train(&req, &mut emit) {
                    Ok(()) => PluginEvent::Done,
                    Err(message) => PluginEvent::Error { message },
                };
                send(&mut writer, &ev)?;
            }
        }
    }
    Ok(())
}

/// Echo plugin for tests: reports a fixed accuracy every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct StubTrainer {
    pub accuracy: f64,
    pub names: Vec<String>,
    /// Emit an `error` event after this many epochs.
    pub fail_after: Option<u32>,
}

impl Default for StubTrainer {
    fn default() -> Self {
        StubTrainer {
            accuracy: 0.5,
            names: vec!["batch".into(), "lr".into(), "momentum".into()],
            fail_after: None,
        }
    }
}

impl Trainer for StubTrainer {
    fn supported_hyperparameters(&self) -> Vec<String> {
        self.names.clone()
    }

    fn train(&mut self, req: &TrainRequest, on_epoch: &mut dyn FnMut(EpochResult) -> std::io::Result<()>)
        -> Result<(), String> {
        for epoch in 1..=req.max_epochs {
            if self.fail_after == Some(epoch - 1) {
                return Err(format!("stub failure after epoch {}", epoch - 1));
            }
            let t = Instant::now();
            let duration_ns = (t.elapsed().as_nanos() as u64).max(1);
            on_epoch(EpochResult { epoch, accuracy: self.accuracy, duration_ns }).map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

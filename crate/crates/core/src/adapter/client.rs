use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::time::Duration;

use serde_json::Value;

use super::message::{
    codes, decode_bundle, HelloAck, HelloPayload, IndexedPolygons, Kind, Message, PredictPayload,
    TrainAck, TrainPayload, PROTOCOL_VERSION,
};
use crate::annotation::LabelMask;
use crate::error::{Error, Result};
use crate::model::{BundleField, PredictionBundle, SampleId};
use crate::orchestrator::config::{ExperimentConfig, LearnerConfig, LoadedData};
use crate::orchestrator::experiment::LearnerFactory;
use crate::orchestrator::learner::{Learner, Split, TrainJob};
use crate::orchestrator::preset::{Arm, LearnerMode};

/// A spawned adapter process with strict request/response alternation.
pub struct AdapterClient {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    program: String,
}

impl AdapterClient {
    /// Spawns `command` with `args` appended. Stderr is inherited.
    pub fn spawn(command: &[String], args: &[String], env: &[(String, String)]) -> Result<Self> {
        let (program, rest) = command
            .split_first()
            .ok_or_else(|| Error::Config("adapter command is empty".into()))?;
        let mut child = Command::new(program)
            .args(rest)
            .args(args)
            .envs(env.iter().map(|(k, v)| (k, v)))
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::adapter(codes::IO, format!("cannot spawn `{program}`: {e}")))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => {
                        let _ = tx.send(Err(std::io::ErrorKind::UnexpectedEof.into()));
                        break;
                    }
                    Ok(_) => {
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
        Ok(AdapterClient {
            child,
            stdin,
            lines: rx,
            next_id: 1,
            program: program.clone(),
        })
    }

    /// True once the process has exited.
    pub fn exited(&mut self) -> Result<bool> {
        Ok(self.child.try_wait()?.is_some())
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Writes a raw line and waits for one reply line.
    pub fn exchange_line(&mut self, line: &str, timeout: Option<Duration>) -> Result<String> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::adapter(codes::IO, "adapter input is closed"))?;
        writeln!(stdin, "{line}")
            .and_then(|_| stdin.flush())
            .map_err(|e| Error::adapter(codes::IO, format!("adapter `{}` is gone: {e}", self.program)))?;
        let got = match timeout {
            Some(t) => self.lines.recv_timeout(t),
            None => self.lines.recv().map_err(|_| RecvTimeoutError::Disconnected),
        };
        match got {
            Ok(Ok(l)) => Ok(l),
            Ok(Err(e)) => {
                let status = self.child.wait().ok().map(|s| s.to_string());
                Err(Error::adapter(
                    codes::IO,
                    format!(
                        "adapter `{}` closed its output ({e}){}",
                        self.program,
                        status.map(|s| format!(", {s}")).unwrap_or_default()
                    ),
                ))
            }
            Err(RecvTimeoutError::Timeout) => {
                let _ = self.child.kill();
                Err(Error::adapter(
                    "timeout",
                    format!("adapter `{}` did not reply within {:?}", self.program, timeout.unwrap_or_default()),
                ))
            }
            Err(RecvTimeoutError::Disconnected) => {
                Err(Error::adapter(codes::IO, format!("adapter `{}` reader stopped", self.program)))
            }
        }
    }

    /// Sends `msg` and returns the reply, whatever its kind. The reply id
    /// must match.
    pub fn send(&mut self, msg: &Message, timeout: Option<Duration>) -> Result<Message> {
        self.next_id = self.next_id.max(msg.id + 1);
        let line = self.exchange_line(&msg.to_line(), timeout)?;
        let reply = Message::parse(&line)?;
        if reply.id != msg.id {
            return Err(Error::adapter(
                codes::PROTOCOL,
                format!("reply id {} does not match request id {}", reply.id, msg.id),
            ));
        }
        if reply.kind.is_request() {
            return Err(Error::adapter(codes::PROTOCOL, "adapter replied with a request"));
        }
        Ok(reply)
    }

    /// Sends a request with the next id and expects `expect` back; remote
    /// errors become [`Error::Adapter`].
    pub fn request(
        &mut self,
        kind: Kind,
        payload: Value,
        expect: Kind,
        timeout: Option<Duration>,
    ) -> Result<Message> {
        let msg = Message {
            kind,
            id: self.next_id,
            payload,
        };
        let reply = self.send(&msg, timeout)?;
        if let Some(e) = reply.as_error() {
            return Err(e);
        }
        if reply.kind != expect {
            return Err(Error::adapter(
                codes::PROTOCOL,
                format!("expected {expect:?} reply, got {:?}", reply.kind),
            ));
        }
        Ok(reply)
    }

    /// Sends `shutdown` and waits briefly for the process to exit.
    pub fn shutdown(&mut self) -> Result<()> {
        if self.stdin.is_some() {
            let r = self.request(Kind::Shutdown, Value::Object(Default::default()), Kind::Ack, Some(Duration::from_secs(10)));
            self.stdin = None;
            r?;
        }
        for _ in 0..100 {
            if self.child.try_wait()?.is_some() {
                return Ok(());
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        let _ = self.child.kill();
        Err(Error::adapter(codes::PROTOCOL, "adapter did not exit after shutdown"))
    }
}

impl Drop for AdapterClient {
    fn drop(&mut self) {
        if matches!(self.child.try_wait(), Ok(None)) {
            if self.shutdown().is_err() {
                let _ = self.child.kill();
            }
            let _ = self.child.wait();
        }
    }
}

/// Where local split indices live on disk.
#[derive(Clone, Debug)]
pub struct IndexMap {
    pub pool: Arc<Vec<usize>>,
    pub test: Arc<Vec<usize>>,
    /// The test split is its own file.
    pub test_separate: bool,
}

impl IndexMap {
    fn to_file(&self, split: Split, local: &[SampleId]) -> Result<(&'static str, Vec<usize>)> {
        let (name, map) = match split {
            Split::Pool => ("pool", &self.pool),
            Split::Test if self.test_separate => ("test", &self.test),
            Split::Test => ("pool", &self.test),
        };
        let ids = local
            .iter()
            .map(|&i| {
                map.get(i).copied().ok_or(Error::IndexOutOfRange {
                    index: i,
                    len: map.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((name, ids))
    }
}

/// A learner living in an adapter process.
pub struct AdapterLearner {
    client: AdapterClient,
    name: String,
    caps: Vec<BundleField>,
    map: IndexMap,
    num_classes: usize,
    train_timeout: Option<Duration>,
    predict_timeout: Option<Duration>,
    options: Value,
}

impl AdapterLearner {
    /// Performs the handshake on a spawned client.
    pub fn connect(
        mut client: AdapterClient,
        hello: &HelloPayload,
        map: IndexMap,
        train_timeout: Option<Duration>,
        predict_timeout: Option<Duration>,
        options: Value,
    ) -> Result<Self> {
        let reply = client.request(
            Kind::Hello,
            serde_json::to_value(hello)?,
            Kind::Ack,
            predict_timeout,
        )?;
        let ack: HelloAck = reply.payload_as()?;
        if ack.version != PROTOCOL_VERSION {
            return Err(Error::adapter(
                codes::VERSION,
                format!("adapter answered with version {}", ack.version),
            ));
        }
        let mut caps = Vec::new();
        for f in &ack.fields {
            match BundleField::parse(f) {
                Some(b) => caps.push(b),
                None => log::warn!("adapter advertises unknown field `{f}`"),
            }
        }
        Ok(AdapterLearner {
            client,
            name: if ack.learner.is_empty() { "adapter".into() } else { ack.learner },
            caps,
            map,
            num_classes: hello.num_classes,
            train_timeout,
            predict_timeout,
            options,
        })
    }

    fn predict_payload(
        &mut self,
        split: Split,
        indices: &[SampleId],
        fields: &[BundleField],
        masks: bool,
    ) -> Result<super::message::BundlePayload> {
        let (name, file_ids) = self.map.to_file(split, indices)?;
        let p = PredictPayload {
            split: name.into(),
            indices: file_ids.clone(),
            fields: fields.iter().map(|f| f.name().to_string()).collect(),
            masks,
        };
        let reply = self.client.request(
            Kind::Predict,
            serde_json::to_value(&p)?,
            Kind::Bundle,
            self.predict_timeout,
        )?;
        let mut payload = decode_bundle(&reply.payload)?;
        if payload.bundle.indices != file_ids {
            return Err(Error::adapter(
                codes::PROTOCOL,
                "bundle rows do not follow the requested indices",
            ));
        }
        if let Some(extra) = payload.bundle.fields().into_iter().find(|f| !fields.contains(f)) {
            return Err(Error::adapter(
                codes::PROTOCOL,
                format!("bundle carries unrequested field `{extra}`"),
            ));
        }
        payload.bundle.indices = indices.to_vec();
        Ok(payload)
    }
}

impl Learner for AdapterLearner {
    fn id(&self) -> String {
        self.name.clone()
    }

    fn fields(&self, _arm: &Arm) -> Vec<BundleField> {
        self.caps.clone()
    }

    fn train(&mut self, job: &TrainJob) -> Result<()> {
        let (_, labeled) = self.map.to_file(Split::Pool, &job.labeled)?;
        let (_, unlabeled) = match job.mode {
            LearnerMode::Ssl => self.map.to_file(Split::Pool, &job.unlabeled)?,
            LearnerMode::Supervised => ("pool", Vec::new()),
        };
        let polygons = job
            .polygons
            .iter()
            .map(|(i, p)| {
                Ok(IndexedPolygons {
                    index: self.map.to_file(Split::Pool, &[*i])?.1[0],
                    polygons: p.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let (kind, mode) = match job.mode {
            LearnerMode::Supervised => (Kind::Train, "supervised"),
            LearnerMode::Ssl => (Kind::TrainSsl, "ssl"),
        };
        let p = TrainPayload {
            labeled,
            mode: Some(mode.into()),
            unlabeled,
            polygons,
            ensemble: job.ensemble,
            loss_head: job.loss_head,
            seed: job.seed,
            options: self.options.clone(),
        };
        let reply = self
            .client
            .request(kind, serde_json::to_value(&p)?, Kind::Ack, self.train_timeout)?;
        let ack: TrainAck = reply.payload_as()?;
        log::debug!(
            "adapter trained in {:.2}s, loss {:?}",
            ack.wall_time_s,
            ack.train_loss
        );
        Ok(())
    }

    fn predict(
        &mut self,
        split: Split,
        indices: &[SampleId],
        fields: &[BundleField],
    ) -> Result<PredictionBundle> {
        let payload = self.predict_payload(split, indices, fields, false)?;
        payload.bundle.validate(Some(self.num_classes))?;
        Ok(payload.bundle)
    }

    fn predict_masks(&mut self, indices: &[SampleId]) -> Result<Vec<LabelMask>> {
        let payload = self.predict_payload(Split::Test, indices, &[], true)?;
        let masks = payload
            .masks
            .ok_or_else(|| Error::adapter(codes::PROTOCOL, "bundle has no masks"))?;
        if masks.len() != indices.len() {
            return Err(Error::adapter(
                codes::PROTOCOL,
                format!("{} masks for {} indices", masks.len(), indices.len()),
            ));
        }
        Ok(masks)
    }
}

/// Spawns one adapter process per (arm, trial).
pub struct AdapterFactory {
    pub command: Vec<String>,
    pub hello: HelloPayload,
    pub map: IndexMap,
    pub train_timeout: Option<Duration>,
    pub predict_timeout: Option<Duration>,
    pub options: Value,
}

impl AdapterFactory {
    pub fn from_config(cfg: &ExperimentConfig, data: Arc<LoadedData>) -> Result<Self> {
        let LearnerConfig::Adapter {
            command,
            train_timeout,
            predict_timeout,
            options,
        } = &cfg.learner
        else {
            return Err(Error::Config("learner is not an adapter".into()));
        };
        let dataset: PathBuf = data.path.clone().ok_or_else(|| {
            Error::Config("adapter learners need a file-backed dataset (csv or image_dir)".into())
        })?;
        let mut command = command.clone();
        if let Some(first) = command.first_mut() {
            if first.contains('/') {
                *first = cfg.resolve(std::path::Path::new(first.as_str())).to_string_lossy().into_owned();
            }
        }
        Ok(AdapterFactory {
            command,
            hello: HelloPayload {
                version: PROTOCOL_VERSION,
                dataset,
                test_dataset: data.test_path.clone(),
                num_classes: data.pool.num_classes,
                void_id: cfg.dataset.void_id,
                seed: 0,
            },
            map: IndexMap {
                pool: Arc::new(data.pool_index.clone()),
                test: Arc::new(data.test_index.clone()),
                test_separate: data.test_path.is_some(),
            },
            train_timeout: train_timeout.map(Duration::from_secs),
            predict_timeout: Some(Duration::from_secs(*predict_timeout)),
            options: options.clone(),
        })
    }
}

impl LearnerFactory for AdapterFactory {
    fn make(&self, arm: &Arm, trial: usize, seed: u64) -> Result<Box<dyn Learner>> {
        let args = vec![
            "--dataset".to_string(),
            self.hello.dataset.to_string_lossy().into_owned(),
            "--seed".to_string(),
            seed.to_string(),
        ];
        let env = vec![
            ("ALBENCH_ARM".to_string(), arm.id.clone()),
            ("ALBENCH_TRIAL".to_string(), trial.to_string()),
        ];
        let client = AdapterClient::spawn(&self.command, &args, &env)?;
        let mut hello = self.hello.clone();
        hello.seed = seed;
        Ok(Box::new(AdapterLearner::connect(
            client,
            &hello,
            self.map.clone(),
            self.train_timeout,
            self.predict_timeout,
            self.options.clone(),
        )?))
    }
}

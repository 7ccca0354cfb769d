use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::message::{
    codes, BundlePayload, HelloAck, HelloPayload, Kind, Message, PredictPayload, TrainAck,
    TrainPayload, PROTOCOL_VERSION,
};
use crate::error::{Error, Result};
use crate::io;
use crate::learners::{EnsembleConfig, LossHeadConfig, ModelSpec, SslConfig, TrainConfig};
use crate::model::{BundleField, Dataset, Task};
use crate::orchestrator::learner::{BuiltinLearner, Learner, Split, TrainJob};
use crate::orchestrator::preset::LearnerMode;

/// Settings of the reference adapter served by `albench serve-adapter`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerOptions {
    /// Used when `hello` names no dataset.
    pub dataset: Option<PathBuf>,
    pub seed: u64,
    /// Defaults to an MLP for vectors and a per-pixel network for images.
    pub model: Option<ModelSpec>,
    pub train: TrainConfig,
    pub ssl: SslConfig,
    pub ensemble: EnsembleConfig,
    pub loss_head: LossHeadConfig,
    /// Test hook: exit without replying to the first train request.
    #[serde(skip)]
    pub crash_on_train: bool,
}

struct Session {
    learner: BuiltinLearner,
    pool: Arc<Dataset>,
    test: Option<Arc<Dataset>>,
}

/// Reply to one request line.
#[derive(Debug)]
pub struct Reply {
    pub message: Message,
    /// The session is over after this reply.
    pub stop: bool,
}

/// Protocol state machine of the reference adapter.
pub struct AdapterServer {
    opts: ServerOptions,
    last_id: Option<u64>,
    session: Option<Session>,
    trained: bool,
}

fn reply(message: Message) -> Reply {
    Reply {
        message,
        stop: false,
    }
}

/// Capability set of the built-in learner for a task.
pub fn builtin_fields(task: Task) -> Vec<BundleField> {
    match task {
        Task::Classification => vec![
            BundleField::Probs,
            BundleField::Features,
            BundleField::PredLoss,
            BundleField::EnsembleVotes,
        ],
        Task::Segmentation => vec![BundleField::Features, BundleField::EntropyMaps],
    }
}

fn load(path: &Path, num_classes: usize, void_id: Option<u8>) -> Result<Dataset> {
    if path.is_dir() {
        io::load_image_dir(path, Some(num_classes), void_id)
    } else {
        io::load_csv(path, Some(num_classes))
    }
}

impl AdapterServer {
    pub fn new(opts: ServerOptions) -> Self {
        AdapterServer {
            opts,
            last_id: None,
            session: None,
            trained: false,
        }
    }

    /// Handles one request line. `None` means the process should die
    /// without replying (only with the crash hook).
    pub fn handle_line(&mut self, line: &str) -> Option<Reply> {
        let msg = match Message::parse(line) {
            Ok(m) => m,
            Err(e) => {
                let id = serde_json::from_str::<Value>(line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(Value::as_u64))
                    .unwrap_or(0);
                return Some(reply(Message::error(id, codes::PROTOCOL, e.to_string())));
            }
        };
        if !msg.kind.is_request() {
            return Some(reply(Message::error(
                msg.id,
                codes::PROTOCOL,
                format!("`{}` is not a request", kind_name(msg.kind)),
            )));
        }
        if let Some(last) = self.last_id {
            if msg.id <= last {
                return Some(reply(Message::error(
                    msg.id,
                    codes::PROTOCOL,
                    format!("request id {} does not exceed previous id {last}", msg.id),
                )));
            }
        }
        self.last_id = Some(msg.id);
        if self.opts.crash_on_train && matches!(msg.kind, Kind::Train | Kind::TrainSsl) {
            return None;
        }
        let id = msg.id;
        Some(match self.dispatch(&msg) {
            Ok(r) => r,
            Err(Failure { code, message, stop }) => Reply {
                message: Message::error(id, code, message),
                stop,
            },
        })
    }

    fn dispatch(&mut self, msg: &Message) -> std::result::Result<Reply, Failure> {
        match msg.kind {
            Kind::Hello => self.hello(msg),
            Kind::Train | Kind::TrainSsl => self.train(msg),
            Kind::Predict => self.predict(msg),
            Kind::Shutdown => Ok(Reply {
                message: Message {
                    kind: Kind::Ack,
                    id: msg.id,
                    payload: Value::Object(Default::default()),
                },
                stop: true,
            }),
            _ => unreachable!("responses are rejected before dispatch"),
        }
    }

    fn hello(&mut self, msg: &Message) -> std::result::Result<Reply, Failure> {
        if self.session.is_some() {
            return Err(Failure::protocol("duplicate hello"));
        }
        let version = msg.payload.get("version").and_then(Value::as_u64);
        if version != Some(PROTOCOL_VERSION as u64) {
            return Err(Failure::new(
                codes::VERSION,
                format!(
                    "adapter speaks protocol version {PROTOCOL_VERSION}, got {}",
                    version.map_or("none".to_string(), |v| v.to_string())
                ),
            ));
        }
        let hello: HelloPayload = msg.payload_as().map_err(Failure::from)?;
        let path = if hello.dataset.as_os_str().is_empty() {
            self.opts
                .dataset
                .clone()
                .ok_or_else(|| Failure::protocol("no dataset path"))?
        } else {
            hello.dataset.clone()
        };
        let io_fail = |e: Error| Failure {
            code: codes::IO,
            message: e.to_string(),
            stop: true,
        };
        let pool = Arc::new(load(&path, hello.num_classes, hello.void_id).map_err(io_fail)?);
        let test = hello
            .test_dataset
            .as_ref()
            .map(|t| load(t, hello.num_classes, hello.void_id).map(Arc::new))
            .transpose()
            .map_err(io_fail)?;
        let model = self.opts.model.clone().unwrap_or(match pool.task {
            Task::Classification => ModelSpec::Mlp { hidden: [32, 32] },
            Task::Segmentation => ModelSpec::Fcn { hidden: 16 },
        });
        let learner = BuiltinLearner::new(
            pool.clone(),
            test.clone().unwrap_or_else(|| pool.clone()),
            model.clone(),
            self.opts.train.clone(),
            self.opts.ensemble.clone(),
            self.opts.loss_head.clone(),
            self.opts.ssl.clone(),
        );
        let ack = HelloAck {
            version: PROTOCOL_VERSION,
            fields: builtin_fields(pool.task)
                .into_iter()
                .map(|f| f.name().to_string())
                .collect(),
            learner: format!("builtin-{}", model.name()),
        };
        self.session = Some(Session { learner, pool, test });
        Ok(reply(Message::new(Kind::Ack, msg.id, &ack).map_err(Failure::from)?))
    }

    fn session(&mut self) -> std::result::Result<&mut Session, Failure> {
        self.session
            .as_mut()
            .ok_or_else(|| Failure::protocol("hello must come first"))
    }

    fn train(&mut self, msg: &Message) -> std::result::Result<Reply, Failure> {
        self.session()?;
        let p: TrainPayload = msg.payload_as().map_err(Failure::from)?;
        let mode = match (msg.kind, p.mode.as_deref()) {
            (Kind::Train, None | Some("supervised")) => LearnerMode::Supervised,
            (Kind::Train, Some("ssl")) | (Kind::TrainSsl, None | Some("ssl")) => LearnerMode::Ssl,
            (_, Some(other)) => {
                return Err(Failure::new(codes::BAD_MODE, format!("unknown mode `{other}`")))
            }
            (_, None) => unreachable!("kind is a train request"),
        };
        let s = self.session()?;
        let n = s.pool.len();
        let out_of_range = p
            .labeled
            .iter()
            .chain(&p.unlabeled)
            .chain(p.polygons.iter().map(|ip| &ip.index))
            .find(|&&i| i >= n);
        if let Some(i) = out_of_range {
            return Err(Failure::protocol(format!("index {i} out of range for {n} samples")));
        }
        let job = TrainJob {
            labeled: p.labeled.clone(),
            polygons: p.polygons.iter().map(|ip| (ip.index, ip.polygons.clone())).collect(),
            unlabeled: p.unlabeled.clone(),
            mode,
            ensemble: p.ensemble,
            loss_head: p.loss_head,
            seed: p.seed,
        };
        let start = Instant::now();
        s.learner.train(&job).map_err(Failure::internal)?;
        let wall = start.elapsed().as_secs_f64();
        let train_loss = match s.pool.task {
            Task::Classification => {
                let b = s
                    .learner
                    .predict(Split::Pool, &p.labeled, &[BundleField::Probs])
                    .map_err(Failure::internal)?;
                let probs = b.probs.unwrap_or_default();
                let nll: f64 = p
                    .labeled
                    .iter()
                    .zip(&probs)
                    .map(|(&i, row)| -row[s.pool.class_of(i).unwrap_or(0)].max(1e-12).ln())
                    .sum();
                Some(nll / probs.len().max(1) as f64)
            }
            Task::Segmentation => None,
        };
        self.trained = true;
        let ack = TrainAck {
            wall_time_s: wall,
            train_loss,
        };
        Ok(reply(Message::new(Kind::Ack, msg.id, &ack).map_err(Failure::from)?))
    }

    fn predict(&mut self, msg: &Message) -> std::result::Result<Reply, Failure> {
        self.session()?;
        if !self.trained {
            return Err(Failure::protocol("predict before train"));
        }
        let p: PredictPayload = msg.payload_as().map_err(Failure::from)?;
        let s = self.session()?;
        let (split, dataset) = match p.split.as_str() {
            "pool" => (Split::Pool, s.pool.clone()),
            "test" => match &s.test {
                Some(t) => (Split::Test, t.clone()),
                None => return Err(Failure::protocol("no test dataset was given in hello")),
            },
            other => return Err(Failure::protocol(format!("unknown split `{other}`"))),
        };
        if let Some(&i) = p.indices.iter().find(|&&i| i >= dataset.len()) {
            return Err(Failure::protocol(format!(
                "index {i} out of range for {} samples",
                dataset.len()
            )));
        }
        let caps = builtin_fields(s.pool.task);
        let mut fields = Vec::with_capacity(p.fields.len());
        for name in &p.fields {
            match BundleField::parse(name).filter(|f| caps.contains(f)) {
                Some(f) => fields.push(f),
                None => {
                    return Err(Failure::new(
                        codes::UNSUPPORTED_FIELD,
                        format!("field `{name}` is not supported"),
                    ))
                }
            }
        }
        if p.masks && split == Split::Pool && s.test.is_some() {
            return Err(Failure::protocol("masks are served for the test split only"));
        }
        // with no test file the learner's test split is the pool itself
        let learner_split = if s.test.is_none() { Split::Test } else { split };
        let bundle = s
            .learner
            .predict(learner_split, &p.indices, &fields)
            .map_err(|e| match e {
                Error::MissingField(f) => Failure::new(
                    codes::UNSUPPORTED_FIELD,
                    format!("field `{f}` was not trained in this session"),
                ),
                e => Failure::internal(e),
            })?;
        let masks = if p.masks {
            Some(s.learner.predict_masks(&p.indices).map_err(Failure::internal)?)
        } else {
            None
        };
        let payload = BundlePayload { bundle, masks };
        Ok(reply(Message::new(Kind::Bundle, msg.id, &payload).map_err(Failure::from)?))
    }
}

fn kind_name(k: Kind) -> String {
    serde_json::to_value(k)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

struct Failure {
    code: &'static str,
    message: String,
    stop: bool,
}

impl Failure {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
            stop: false,
        }
    }

    fn protocol(message: impl Into<String>) -> Self {
        Failure::new(codes::PROTOCOL, message)
    }

    fn internal(e: Error) -> Self {
        Failure::new(codes::INTERNAL, e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Adapter { message, .. } => Failure::protocol(message),
            e => Failure::internal(e),
        }
    }
}

/// Runs the protocol loop until `shutdown`, end of input or a fatal error.
pub fn serve<R: BufRead, W: Write>(server: &mut AdapterServer, input: R, mut output: W) -> Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let Some(r) = server.handle_line(&line) else {
            return Err(Error::adapter(codes::INTERNAL, "simulated crash"));
        };
        writeln!(output, "{}", r.message.to_line())?;
        output.flush()?;
        if r.stop {
            break;
        }
    }
    Ok(())
}

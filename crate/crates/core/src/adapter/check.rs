use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::client::AdapterClient;
use super::message::{decode_bundle, Kind, Message, TIMING_FIELDS};
use crate::error::{Error, Result};
use crate::io;
use crate::model::BundleField;
use crate::synthetic::two_moons;

/// The transcript replayed by the compliance checker.
pub const GOLDEN_TRANSCRIPT: &str = include_str!("golden.jsonl");

const STEP_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    pub kind: Kind,
    #[serde(default)]
    pub code: Option<String>,
    #[serde(default)]
    pub version: Option<u32>,
    #[serde(default)]
    pub fields_include: Vec<String>,
    #[serde(default)]
    pub keys: Vec<String>,
    #[serde(default)]
    pub rows: Option<usize>,
    #[serde(default)]
    pub fields: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub name: String,
    pub request: Message,
    pub expect: Expect,
}

/// Parses a transcript, substituting `$DATASET` with `dataset`.
pub fn parse_transcript(text: &str, dataset: &Path) -> Result<Vec<Step>> {
    let path = serde_json::to_string(&dataset.to_string_lossy())?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let l = l.replace("\"$DATASET\"", &path);
            serde_json::from_str(&l).map_err(Error::from)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub steps: Vec<StepResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        !self.steps.is_empty() && self.steps.iter().all(|s| s.passed)
    }

    fn push(&mut self, name: &str, res: std::result::Result<(), String>) {
        self.steps.push(StepResult {
            name: name.to_string(),
            passed: res.is_ok(),
            detail: res.err().unwrap_or_else(|| "ok".into()),
        });
    }
}

fn strip_timing(v: &mut Value) {
    if let Value::Object(m) = v {
        for k in TIMING_FIELDS {
            m.remove(k);
        }
        m.values_mut().for_each(strip_timing);
    }
}

/// Checks one reply against its expectation.
pub fn check_reply(step: &Step, reply: &Message) -> std::result::Result<(), String> {
    let e = &step.expect;
    if reply.id != step.request.id {
        return Err(format!("reply id {} for request id {}", reply.id, step.request.id));
    }
    if reply.kind != e.kind {
        return Err(format!("expected {:?}, got {:?}: {}", e.kind, reply.kind, reply.payload));
    }
    if let Some(code) = &e.code {
        let got = reply.payload.get("code").and_then(Value::as_str);
        if got != Some(code.as_str()) {
            return Err(format!("expected error code `{code}`, got {got:?}"));
        }
    }
    if let Some(v) = e.version {
        if reply.payload.get("version").and_then(Value::as_u64) != Some(v as u64) {
            return Err(format!("expected version {v}"));
        }
    }
    if !e.fields_include.is_empty() {
        let have: Vec<&str> = reply
            .payload
            .get("fields")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).collect())
            .unwrap_or_default();
        if let Some(missing) = e.fields_include.iter().find(|f| !have.contains(&f.as_str())) {
            return Err(format!("capability set lacks `{missing}`"));
        }
    }
    if let Some(k) = e.keys.iter().find(|k| reply.payload.get(k.as_str()).is_none()) {
        return Err(format!("payload lacks `{k}`"));
    }
    if e.kind == Kind::Bundle {
        let b = decode_bundle(&reply.payload).map_err(|e| e.to_string())?.bundle;
        let requested: Vec<usize> = step
            .request
            .payload
            .get("indices")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .unwrap_or_default();
        if b.indices != requested {
            return Err("bundle rows do not follow the requested indices".into());
        }
        if let Some(rows) = e.rows {
            if b.len() != rows {
                return Err(format!("expected {rows} rows, got {}", b.len()));
            }
        }
        if let Some(fields) = &e.fields {
            let want: Vec<BundleField> = fields.iter().filter_map(|f| BundleField::parse(f)).collect();
            let mut got = b.fields();
            got.sort();
            let mut want_sorted = want.clone();
            want_sorted.sort();
            if got != want_sorted && !(b.is_empty() && got.iter().all(|f| want.contains(f))) {
                return Err(format!("bundle fields {got:?}, expected {want:?}"));
            }
        }
        b.validate(None).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn replay(command: &[String], dataset: &Path, seed: u64, steps: &[Step]) -> Result<(Vec<Message>, bool)> {
    let args = vec![
        "--dataset".to_string(),
        dataset.to_string_lossy().into_owned(),
        "--seed".to_string(),
        seed.to_string(),
    ];
    let mut client = AdapterClient::spawn(command, &args, &[])?;
    let mut replies = Vec::with_capacity(steps.len());
    for s in steps {
        replies.push(client.send(&s.request, Some(STEP_TIMEOUT))?);
    }
    let mut exited = false;
    for _ in 0..250 {
        if client.exited()? {
            exited = true;
            break;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    Ok((replies, exited))
}

/// Replays the golden transcript against `command` twice, in fresh
/// processes, checking every reply and that both replays agree modulo
/// timing fields. A toy dataset is written under `workdir`.
pub fn check_adapter(command: &[String], workdir: &Path) -> Result<CheckReport> {
    let dataset = workdir.join("adapter-check-moons.csv");
    io::write_csv(&two_moons(60, 0.1, 11), std::fs::File::create(&dataset)?)?;
    let steps = parse_transcript(GOLDEN_TRANSCRIPT, &dataset)?;
    let mut report = CheckReport::default();
    let (first, exited) = match replay(command, &dataset, 7, &steps) {
        Ok(r) => r,
        Err(e) => {
            report.push("replay", Err(e.to_string()));
            return Ok(report);
        }
    };
    for (s, r) in steps.iter().zip(&first) {
        report.push(&s.name, check_reply(s, r));
    }
    report.push(
        "exit_after_shutdown",
        if exited { Ok(()) } else { Err("process still running after shutdown".into()) },
    );
    let det = match replay(command, &dataset, 7, &steps) {
        Ok((second, _)) => {
            let diff = first.iter().zip(&second).find(|(a, b)| {
                let (mut a, mut b) = (a.payload.clone(), b.payload.clone());
                strip_timing(&mut a);
                strip_timing(&mut b);
                a != b
            });
            match diff {
                None => Ok(()),
                Some((a, _)) => Err(format!("replies to request {} differ between sessions", a.id)),
            }
        }
        Err(e) => Err(e.to_string()),
    };
    report.push("deterministic_replay", det);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_transcript_parses_with_increasing_ids_except_reuse() {
        let steps = parse_transcript(GOLDEN_TRANSCRIPT, Path::new("/tmp/x.csv")).unwrap();
        assert_eq!(steps.len(), 15);
        assert!(steps.iter().all(|s| s.request.kind.is_request()));
        let reuse = steps.iter().position(|s| s.name == "id_reuse").unwrap();
        assert_eq!(steps[reuse].request.id, steps[reuse - 1].request.id);
        assert_eq!(steps[0].request.payload["dataset"], "/tmp/x.csv");
    }

    #[test]
    fn in_process_server_passes_every_step() {
        use super::super::server::{AdapterServer, ServerOptions};
        let dir = tempfile::tempdir().unwrap();
        let dataset = dir.path().join("m.csv");
        io::write_csv(&two_moons(60, 0.1, 11), std::fs::File::create(&dataset).unwrap()).unwrap();
        let mut server = AdapterServer::new(ServerOptions::default());
        for s in parse_transcript(GOLDEN_TRANSCRIPT, &dataset).unwrap() {
            let r = server.handle_line(&s.request.to_line()).unwrap();
            check_reply(&s, &r.message).unwrap_or_else(|e| panic!("{}: {e}", s.name));
        }
    }
}

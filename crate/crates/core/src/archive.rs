//! Export archive: a directory holding `problem.conf`, `config.conf`,
//! `records.csv` and `log.csv`.
//!
//! `records.csv` columns are `id,status,source,iteration`, one column per
//! variable, one per objective, then
//! `requested_at,started_at,finished_at,worker,note`. `log.csv` columns are
//! `timestamp,record_id,transition,actor,payload` where `payload` is the JSON
//! body of the transition. Timestamps are RFC 3339 UTC with milliseconds.
//! On import the log is replayed and must reproduce `records.csv` exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::optimizer::Source;
use crate::problem::{Design, Problem};
use crate::store::{
    format_timestamp, parse_timestamp, ExperimentRecord, LogEntry, RecordTable, Status, StoreError, Transition,
    SCHEMA_VERSION,
};

pub const PROBLEM_FILE: &str = "problem.conf";
pub const CONFIG_FILE: &str = "config.conf";
pub const RECORDS_FILE: &str = "records.csv";
pub const LOG_FILE: &str = "log.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ConfigDoc {
    schema_version: u32,
    name: String,
    run: RunConfig,
}

#[derive(Debug, Clone)]
pub struct Archive {
    pub name: String,
    pub problem: Problem,
    pub config: RunConfig,
    pub table: RecordTable,
    pub log: Vec<LogEntry>,
}

fn csv_err(file: &str, e: impl std::fmt::Display) -> StoreError {
    StoreError::Integrity(format!("{file}: {e}"))
}

pub fn records_header(problem: &Problem) -> Vec<String> {
    let mut h: Vec<String> = ["id", "status", "source", "iteration"].map(String::from).to_vec();
    h.extend(problem.variables.iter().map(|v| v.name.clone()));
    h.extend(problem.objectives.iter().map(|o| o.name.clone()));
    h.extend(["requested_at", "started_at", "finished_at", "worker", "note"].map(String::from));
    h
}

pub fn record_row(problem: &Problem, r: &ExperimentRecord) -> Vec<String> {
    let mut row = vec![
        r.id.to_string(),
        r.status.name().to_string(),
        r.source.name().to_string(),
        r.iteration.to_string(),
    ];
    row.extend(
        problem
            .variables
            .iter()
            .map(|v| r.design.get(&v.name).map(ToString::to_string).unwrap_or_default()),
    );
    for j in 0..problem.n_objectives() {
        row.push(r.objectives.as_ref().map(|y| y[j].to_string()).unwrap_or_default());
    }
    let ts = |t: Option<i64>| t.map(format_timestamp).unwrap_or_default();
    row.push(format_timestamp(r.requested_at));
    row.push(ts(r.started_at));
    row.push(ts(r.finished_at));
    row.push(r.worker.clone().unwrap_or_default());
    row.push(r.note.clone());
    row
}

/// Writes `records` as CSV text (header included).
pub fn records_csv(problem: &Problem, records: &[ExperimentRecord]) -> Result<String, StoreError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(records_header(problem)).map_err(|e| csv_err(RECORDS_FILE, e))?;
    for r in records {
        w.write_record(record_row(problem, r)).map_err(|e| csv_err(RECORDS_FILE, e))?;
    }
    let bytes = w.into_inner().map_err(|e| csv_err(RECORDS_FILE, e))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn payload(t: &Transition) -> String {
    let mut v = serde_json::to_value(t).expect("transition serializes");
    if let Some(obj) = v.as_object_mut() {
        obj.remove("transition");
    }
    v.to_string()
}

/// Renders the archive files in memory, keyed by file name.
pub fn render(
    name: &str,
    problem: &Problem,
    config: &RunConfig,
    records: &[ExperimentRecord],
    log: &[LogEntry],
) -> Result<BTreeMap<String, String>, StoreError> {
    let mut files = BTreeMap::new();
    files.insert(PROBLEM_FILE.to_string(), problem.to_toml_string());
    let doc = ConfigDoc {
        schema_version: SCHEMA_VERSION,
        name: name.to_string(),
        run: config.clone(),
    };
    files.insert(
        CONFIG_FILE.to_string(),
        toml::to_string(&doc).map_err(|e| StoreError::Integrity(format!("config: {e}")))?,
    );
    files.insert(RECORDS_FILE.to_string(), records_csv(problem, records)?);

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["timestamp", "record_id", "transition", "actor", "payload"])
        .map_err(|e| csv_err(LOG_FILE, e))?;
    for e in log {
        w.write_record([
            format_timestamp(e.timestamp),
            e.record_id.to_string(),
            e.transition.name().to_string(),
            e.actor.clone(),
            payload(&e.transition),
        ])
        .map_err(|e| csv_err(LOG_FILE, e))?;
    }
    let bytes = w.into_inner().map_err(|e| csv_err(LOG_FILE, e))?;
    files.insert(LOG_FILE.to_string(), String::from_utf8(bytes).expect("csv output is utf-8"));
    Ok(files)
}

pub fn write(
    dir: &Path,
    name: &str,
    problem: &Problem,
    config: &RunConfig,
    records: &[ExperimentRecord],
    log: &[LogEntry],
) -> Result<(), StoreError> {
    let files = render(name, problem, config, records, log)?;
    fs::create_dir_all(dir)?;
    for (file, text) in files {
        fs::write(dir.join(file), text)?;
    }
    Ok(())
}

fn file<'a>(files: &'a BTreeMap<String, String>, name: &str) -> Result<&'a str, StoreError> {
    files
        .get(name)
        .map(String::as_str)
        .ok_or_else(|| StoreError::Integrity(format!("archive lacks {name}")))
}

fn read_config(files: &BTreeMap<String, String>) -> Result<ConfigDoc, StoreError> {
    let text = file(files, CONFIG_FILE)?;
    let table: toml::Table = toml::from_str(text).map_err(|e| StoreError::Integrity(format!("{CONFIG_FILE}: {e}")))?;
    let found = table
        .get("schema_version")
        .and_then(|v| v.as_integer())
        .unwrap_or(0);
    if found != SCHEMA_VERSION as i64 {
        return Err(StoreError::SchemaVersion {
            found: found.clamp(0, u32::MAX as i64) as u32,
            expected: SCHEMA_VERSION,
        });
    }
    let doc: ConfigDoc = toml::from_str(text).map_err(|e| StoreError::Integrity(format!("{CONFIG_FILE}: {e}")))?;
    doc.run.validate()?;
    Ok(doc)
}

fn read_log(files: &BTreeMap<String, String>) -> Result<Vec<LogEntry>, StoreError> {
    let mut rd = csv::Reader::from_reader(file(files, LOG_FILE)?.as_bytes());
    let mut out = Vec::new();
    for (n, row) in rd.records().enumerate() {
        let row = row.map_err(|e| csv_err(LOG_FILE, e))?;
        let bad = |what: &str| StoreError::Integrity(format!("{LOG_FILE} row {}: {what}", n + 1));
        if row.len() != 5 {
            return Err(bad("wrong column count"));
        }
        let mut body: serde_json::Value = serde_json::from_str(&row[4]).map_err(|_| bad("payload is not JSON"))?;
        body.as_object_mut()
            .ok_or_else(|| bad("payload is not an object"))?
            .insert("transition".into(), serde_json::Value::String(row[2].to_string()));
        out.push(LogEntry {
            timestamp: parse_timestamp(&row[0]).map_err(|e| bad(&e))?,
            record_id: row[1].parse().map_err(|_| bad("bad record id"))?,
            actor: row[3].to_string(),
            transition: serde_json::from_value(body).map_err(|e| bad(&e.to_string()))?,
        });
    }
    Ok(out)
}

fn parse_record(problem: &Problem, row: &csv::StringRecord, n: usize) -> Result<ExperimentRecord, StoreError> {
    let bad = |what: String| StoreError::Integrity(format!("{RECORDS_FILE} row {n}: {what}"));
    let nv = problem.variables.len();
    let m = problem.n_objectives();
    if row.len() != 4 + nv + m + 5 {
        return Err(bad("wrong column count".into()));
    }
    let opt_ts = |s: &str| -> Result<Option<i64>, StoreError> {
        if s.is_empty() {
            Ok(None)
        } else {
            parse_timestamp(s).map(Some).map_err(bad)
        }
    };
    let mut design = Design::new();
    for (k, v) in problem.variables.iter().enumerate() {
        design.insert(v.name.clone(), problem.parse_value(&v.name, &row[4 + k]).map_err(|e| bad(e.to_string()))?);
    }
    let cells: Vec<&str> = (0..m).map(|j| &row[4 + nv + j]).collect();
    let objectives = if cells.iter().all(|c| c.is_empty()) {
        None
    } else {
        Some(
            cells
                .iter()
                .map(|c| c.parse::<f64>().map_err(|_| bad(format!("bad objective `{c}`"))))
                .collect::<Result<Vec<_>, _>>()?,
        )
    };
    let t = 4 + nv + m;
    Ok(ExperimentRecord {
        id: row[0].parse().map_err(|_| bad("bad id".into()))?,
        status: row[1].parse::<Status>().map_err(bad)?,
        source: row[2].parse::<Source>().map_err(bad)?,
        iteration: row[3].parse().map_err(|_| bad("bad iteration".into()))?,
        design,
        objectives,
        requested_at: parse_timestamp(&row[t]).map_err(bad)?,
        started_at: opt_ts(&row[t + 1])?,
        finished_at: opt_ts(&row[t + 2])?,
        worker: Some(row[t + 3].to_string()).filter(|w| !w.is_empty()),
        note: row[t + 4].to_string(),
    })
}

fn read_records(files: &BTreeMap<String, String>, problem: &Problem) -> Result<Vec<ExperimentRecord>, StoreError> {
    let mut rd = csv::Reader::from_reader(file(files, RECORDS_FILE)?.as_bytes());
    let header: Vec<String> = rd
        .headers()
        .map_err(|e| csv_err(RECORDS_FILE, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != records_header(problem) {
        return Err(StoreError::Integrity(format!("{RECORDS_FILE}: header does not match the problem")));
    }
    rd.records()
        .enumerate()
        .map(|(n, row)| parse_record(problem, &row.map_err(|e| csv_err(RECORDS_FILE, e))?, n + 1))
        .collect()
}

/// Bitwise record equality (`-0.0` and `0.0` differ).
pub fn identical(a: &[ExperimentRecord], b: &[ExperimentRecord]) -> bool {
    serde_json::to_string(a).ok() == serde_json::to_string(b).ok()
}

pub fn read(dir: &Path) -> Result<Archive, StoreError> {
    let mut files = BTreeMap::new();
    for name in [PROBLEM_FILE, CONFIG_FILE, RECORDS_FILE, LOG_FILE] {
        match fs::read_to_string(dir.join(name)) {
            Ok(text) => {
                files.insert(name.to_string(), text);
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
    }
    parse(&files)
}

/// Parses archive files keyed by file name and checks records against the log.
pub fn parse(files: &BTreeMap<String, String>) -> Result<Archive, StoreError> {
    let doc = read_config(files)?;
    let problem = Problem::from_toml_str(file(files, PROBLEM_FILE)?)?.validated()?;
    let log = read_log(files)?;
    let table = RecordTable::replay(&problem, &log).map_err(|e| StoreError::Integrity(format!("{LOG_FILE}: {e}")))?;
    let records = read_records(files, &problem)?;
    if records.len() != table.records().len() {
        return Err(StoreError::Integrity(format!(
            "{RECORDS_FILE} has {} records but the log yields {}",
            records.len(),
            table.records().len()
        )));
    }
    for (a, b) in records.iter().zip(table.records()) {
        if !identical(std::slice::from_ref(a), std::slice::from_ref(b)) {
            return Err(StoreError::Integrity(format!("record {} disagrees with the log", a.id)));
        }
    }
    Ok(Archive {
        name: doc.name,
        problem,
        config: doc.run,
        table,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{ObjectiveSpec, Value, VariableSpec};
    use crate::store::{Experiment, ManualClock};
    use std::sync::Arc;

    fn experiment() -> Arc<Experiment> {
        let p = Problem::new(
            vec![
                VariableSpec::continuous("x", -1.0, 1.0),
                VariableSpec::binary("on"),
                VariableSpec::categorical("mat", ["steel", "wood, oak"]),
            ],
            vec![ObjectiveSpec::minimize("f1"), ObjectiveSpec::maximize("f2")],
        );
        Experiment::in_memory("arch", p, RunConfig::default(), Arc::new(ManualClock::new(1_700_000_000_000))).unwrap()
    }

    fn d(x: f64, on: bool, mat: &str) -> Design {
        Design::new()
            .with("x", Value::Real(x))
            .with("on", Value::Bool(on))
            .with("mat", Value::Label(mat.into()))
    }

    #[test]
    fn empty_export_has_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let e = experiment();
        e.export(dir.path()).unwrap();
        let records = fs::read_to_string(dir.path().join(RECORDS_FILE)).unwrap();
        assert_eq!(records.lines().count(), 1);
        assert_eq!(
            records.trim_end(),
            "id,status,source,iteration,x,on,mat,f1,f2,requested_at,started_at,finished_at,worker,note"
        );
        let back = Experiment::import(dir.path(), Arc::new(ManualClock::new(0))).unwrap();
        assert!(back.all_records().is_empty());
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let e = experiment();
        e.insert_pending(
            &[d(0.1, true, "steel"), d(-0.0, false, "wood, oak"), d(1.0 / 3.0, true, "steel")],
            Source::Initial,
            0,
            "alice",
        )
        .unwrap();
        e.claim_next("w\"1", "bob").unwrap();
        e.complete(1, vec![0.1 + 0.2, -1e-300], "line\nbreak", "bob").unwrap();
        e.fail(2, "exit code 1", "sched").unwrap();
        e.export(dir.path()).unwrap();
        let back = Experiment::import(dir.path(), Arc::new(ManualClock::new(0))).unwrap();
        assert!(identical(&back.all_records(), &e.all_records()));
        assert_eq!(back.log(), e.log());
        assert_eq!(back.name(), "arch");
    }

    #[test]
    fn truncated_or_versioned_archives_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let e = experiment();
        e.insert_pending(&[d(0.5, true, "steel"), d(0.6, true, "steel")], Source::Initial, 0, "a")
            .unwrap();
        e.export(dir.path()).unwrap();

        let path = dir.path().join(RECORDS_FILE);
        let full = fs::read_to_string(&path).unwrap();
        let cut: String = full.lines().take(2).map(|l| format!("{l}\n")).collect();
        fs::write(&path, cut).unwrap();
        assert!(matches!(read(dir.path()), Err(StoreError::Integrity(_))));
        fs::write(&path, &full).unwrap();

        let cpath = dir.path().join(CONFIG_FILE);
        let conf = fs::read_to_string(&cpath).unwrap();
        fs::write(&cpath, conf.replace("schema_version = 1", "schema_version = 7")).unwrap();
        assert!(matches!(
            read(dir.path()),
            Err(StoreError::SchemaVersion { found: 7, expected: 1 })
        ));
    }
}

//! The external evaluation-program protocol.
//!
//! A program is invoked with one argument, the path to a JSON request
//! `{"design": {...}, "record_id": <int>}`. It answers on stdout with a single
//! JSON document `{"objectives": [<float>, ...]}` and/or `{"feasible": <bool>}`.
//! Exit code 0 means success; stderr is captured for the record note.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::problem::Design;

/// 24 hours.
pub const DEFAULT_TIMEOUT_SECS: f64 = 86_400.0;

#[derive(Debug, Error)]
pub enum ProgramError {
    #[error("program `{0}` not found")]
    NotFound(PathBuf),
    #[error("program `{0}` is not executable")]
    NotExecutable(PathBuf),
    #[error("failed to launch program: {0}")]
    Spawn(#[from] std::io::Error),
    #[error("timeout")]
    Timeout { stderr: String },
    #[error("exit code {code}")]
    ExitCode { code: i32, stderr: String },
    #[error("malformed program output: {detail}")]
    Malformed { detail: String, stderr: String },
}

impl ProgramError {
    /// Whether the error is a configuration problem detectable before launch.
    pub fn is_configuration(&self) -> bool {
        matches!(self, ProgramError::NotFound(_) | ProgramError::NotExecutable(_))
    }

    pub fn stderr(&self) -> &str {
        match self {
            ProgramError::Timeout { stderr }
            | ProgramError::ExitCode { stderr, .. }
            | ProgramError::Malformed { stderr, .. } => stderr,
            _ => "",
        }
    }
}

#[derive(Debug, Serialize)]
struct Request<'a> {
    design: &'a Design,
    record_id: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Response {
    #[serde(default)]
    pub objectives: Option<Vec<f64>>,
    #[serde(default)]
    pub feasible: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramOutput {
    pub response: Response,
    pub stderr: String,
}

/// Renders the request document exactly as a program receives it.
pub fn request_json(design: &Design, record_id: u64) -> String {
    serde_json::to_string(&Request { design, record_id }).expect("request serializes")
}

/// Parses a program's stdout.
pub fn parse_response(stdout: &str) -> Result<Response, String> {
    let response: Response =
        serde_json::from_str(stdout.trim()).map_err(|e| format!("invalid JSON: {e}"))?;
    if response.objectives.is_none() && response.feasible.is_none() {
        return Err("expected `objectives` or `feasible`".into());
    }
    if let Some(y) = &response.objectives {
        if y.iter().any(|v| !v.is_finite()) {
            return Err("objectives must be finite".into());
        }
    }
    Ok(response)
}

/// Resolves `program` the way the OS would and checks it can be executed.
pub fn check_executable(program: &Path) -> Result<PathBuf, ProgramError> {
    let candidates: Vec<PathBuf> = if program.components().count() > 1 || program.is_absolute() {
        vec![program.to_path_buf()]
    } else if program.exists() {
        vec![program.to_path_buf()]
    } else {
        std::env::var_os("PATH")
            .map(|p| std::env::split_paths(&p).map(|d| d.join(program)).collect())
            .unwrap_or_default()
    };
    let found = candidates
        .into_iter()
        .find(|p| p.is_file())
        .ok_or_else(|| ProgramError::NotFound(program.to_path_buf()))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let mode = std::fs::metadata(&found)?.permissions().mode();
        if mode & 0o111 == 0 {
            return Err(ProgramError::NotExecutable(program.to_path_buf()));
        }
    }
    Ok(found)
}

/// Runs one evaluation program invocation to completion or timeout.
pub fn run(
    program: &Path,
    design: &Design,
    record_id: u64,
    timeout: Duration,
) -> Result<ProgramOutput, ProgramError> {
    let exe = check_executable(program)?;
    let mut request = tempfile::Builder::new()
        .prefix("oed-request-")
        .suffix(".json")
        .tempfile()?;
    request.write_all(request_json(design, record_id).as_bytes())?;
    request.flush()?;

    let mut child = Command::new(&exe)
        .arg(request.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()?;
    let stdout_reader = drain(child.stdout.take());
    let stderr_reader = drain(child.stderr.take());

    let status = match child.wait_timeout(timeout)? {
        Some(status) => status,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            let stderr = stderr_reader.join().unwrap_or_default();
            return Err(ProgramError::Timeout { stderr });
        }
    };
    let stdout = stdout_reader.join().unwrap_or_default();
    let stderr = stderr_reader.join().unwrap_or_default();
    if !status.success() {
        return Err(ProgramError::ExitCode {
            code: status.code().unwrap_or(-1),
            stderr,
        });
    }
    match parse_response(&stdout) {
        Ok(response) => Ok(ProgramOutput { response, stderr }),
        Err(detail) => Err(ProgramError::Malformed { detail, stderr }),
    }
}

/// Runs a feasibility program; the answer must carry `feasible`.
pub fn run_feasibility(
    program: &Path,
    design: &Design,
    record_id: u64,
    timeout: Duration,
) -> Result<bool, ProgramError> {
    let out = run(program, design, record_id, timeout)?;
    out.response.feasible.ok_or_else(|| ProgramError::Malformed {
        detail: "expected `feasible`".into(),
        stderr: out.stderr,
    })
}

fn drain<R: Read + Send + 'static>(pipe: Option<R>) -> std::thread::JoinHandle<String> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut p) = pipe {
            let _ = p.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

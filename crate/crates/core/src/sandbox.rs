//! Subprocess execution for `run_code` actions.

use serde::{Deserialize, Serialize};
use std::io::Read;
use std::os::unix::process::CommandExt;
use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::thread;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxConfig {
    pub timeout_secs: f64,
    /// Without this the command runs in a fresh network namespace when the
    /// host allows unprivileged namespaces.
    pub allow_network: bool,
    pub max_output_bytes: usize,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            timeout_secs: 10.0,
            allow_network: false,
            max_output_bytes: 16 * 1024,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SandboxError {
    #[error("unsupported interpreter {0:?} (sh, python3)")]
    UnsupportedInterpreter(String),
    #[error("cannot start process: {0}")]
    Spawn(String),
    #[error("timed out after {0} s")]
    Timeout(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeOutput {
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub network_isolated: bool,
}

impl CodeOutput {
    pub fn success(&self) -> bool {
        self.exit_code == Some(0)
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "exit {}",
            self.exit_code
                .map_or("signal".to_string(), |c| c.to_string())
        );
        if !self.stdout.is_empty() {
            s.push_str(&format!("\nstdout:\n{}", self.stdout.trim_end()));
        }
        if !self.stderr.is_empty() {
            s.push_str(&format!("\nstderr:\n{}", self.stderr.trim_end()));
        }
        s
    }
}

fn unshare_works() -> bool {
    static WORKS: OnceLock<bool> = OnceLock::new();
    *WORKS.get_or_init(|| {
        Command::new("unshare")
            .args(["-rn", "true"])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .map(|s| s.success())
            .unwrap_or(false)
    })
}

fn interpreter_program(interpreter: &str) -> Result<&'static str, SandboxError> {
    match interpreter {
        "" | "sh" | "shell" | "bash" => Ok("sh"),
        "python" | "python3" => Ok("python3"),
        other => Err(SandboxError::UnsupportedInterpreter(other.to_string())),
    }
}

fn truncate(mut bytes: Vec<u8>, max: usize) -> String {
    let cut = bytes.len() > max;
    bytes.truncate(max);
    let mut s = String::from_utf8_lossy(&bytes).into_owned();
    if cut {
        s.push_str("\n[output truncated]");
    }
    s
}

/// Runs `code` with `interpreter -c code` in its own process group.
pub fn run_code(
    code: &str,
    interpreter: &str,
    config: &SandboxConfig,
) -> Result<CodeOutput, SandboxError> {
    let program = interpreter_program(interpreter)?;
    let isolate = !config.allow_network && unshare_works();
    let mut cmd = if isolate {
        let mut c = Command::new("unshare");
        c.args(["-rn", program]);
        c
    } else {
        Command::new(program)
    };
    cmd.arg("-c")
        .arg(code)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    // SAFETY: setpgid is async-signal-safe and only touches the child.
    unsafe {
        cmd.pre_exec(|| {
            libc::setpgid(0, 0);
            Ok(())
        });
    }
    let mut child = cmd
        .spawn()
        .map_err(|e| SandboxError::Spawn(e.to_string()))?;
    let pid = child.id() as i32;
    let mut out = child.stdout.take().expect("piped stdout");
    let mut err = child.stderr.take().expect("piped stderr");
    let out_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = out.read_to_end(&mut buf);
        buf
    });
    let err_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = err.read_to_end(&mut buf);
        buf
    });
    let deadline = Instant::now() + Duration::from_secs_f64(config.timeout_secs.max(0.0));
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) if Instant::now() >= deadline => {
                // SAFETY: signals the child's own process group.
                unsafe {
                    libc::kill(-pid, libc::SIGKILL);
                }
                let _ = child.wait();
                break None;
            }
            Ok(None) => thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(SandboxError::Spawn(e.to_string())),
        }
    };
    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();
    let Some(status) = status else {
        return Err(SandboxError::Timeout(config.timeout_secs));
    };
    Ok(CodeOutput {
        exit_code: status.code(),
        stdout: truncate(stdout, config.max_output_bytes),
        stderr: truncate(stderr, config.max_output_bytes),
        network_isolated: isolate,
    })
}

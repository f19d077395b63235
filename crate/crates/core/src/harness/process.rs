use std::io::{self, Read, Write};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

#[derive(Debug, Clone)]
pub struct Captured {
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub timed_out: bool,
    pub duration: Duration,
}

impl Captured {
    pub fn combined(&self) -> String {
        match (self.stdout.is_empty(), self.stderr.is_empty()) {
            (_, true) => self.stdout.clone(),
            (true, false) => self.stderr.clone(),
            (false, false) => format!("{}\n{}", self.stdout.trim_end_matches('\n'), self.stderr),
        }
    }
}

fn drain<R: Read + Send + 'static>(reader: Option<R>) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut r) = reader {
            let _ = r.read_to_end(&mut buf);
        }
        buf
    })
}

/// Runs `argv` in its own process group; on timeout the whole group is
/// killed so spawned grandchildren do not outlive the run.
pub fn run_captured(
    argv: &[String],
    cwd: &Path,
    env: &[(String, String)],
    stdin: Option<&str>,
    timeout: Duration,
) -> io::Result<Captured> {
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty command"))?;
    let started = Instant::now();
    let mut child = Command::new(program)
        .args(args)
        .current_dir(cwd)
        .envs(env.iter().map(|(k, v)| (k, v)))
        .stdin(if stdin.is_some() {
            Stdio::piped()
        } else {
            Stdio::null()
        })
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn()?;

    let writer = match (stdin, child.stdin.take()) {
        (Some(text), Some(mut pipe)) => {
            let text = text.to_string();
            Some(thread::spawn(move || {
                let _ = pipe.write_all(text.as_bytes());
            }))
        }
        _ => None,
    };
    let out = drain(child.stdout.take());
    let err = drain(child.stderr.take());

    let (status, timed_out) = match child.wait_timeout(timeout)? {
        Some(status) => (Some(status), false),
        None => {
            // SAFETY: plain syscall on the group we created for this child.
            unsafe {
                libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
            }
            let _ = child.kill();
            (child.wait().ok(), true)
        }
    };
    if let Some(w) = writer {
        let _ = w.join();
    }
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    Ok(Captured {
        exit_code: if timed_out {
            None
        } else {
            status.and_then(|s| s.code())
        },
        stdout: String::from_utf8_lossy(&stdout).into_owned(),
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
        timed_out,
        duration: started.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str) -> Vec<String> {
        vec!["sh".into(), "-c".into(), script.into()]
    }

    #[test]
    fn captures_output_and_code() {
        let c = run_captured(&sh("echo hi; echo err >&2; exit 3"), Path::new("."), &[], None, Duration::from_secs(10))
            .unwrap();
        assert_eq!(c.exit_code, Some(3));
        assert_eq!(c.stdout, "hi\n");
        assert_eq!(c.stderr, "err\n");
        assert!(!c.timed_out);
    }

    #[test]
    fn feeds_stdin() {
        let c = run_captured(&sh("cat"), Path::new("."), &[], Some("abc"), Duration::from_secs(10)).unwrap();
        assert_eq!(c.stdout, "abc");
    }

    #[test]
    fn timeout_kills_group() {
        let c = run_captured(
            &sh("sleep 30 & sleep 30; echo never"),
            Path::new("."),
            &[],
            None,
            Duration::from_millis(300),
        )
        .unwrap();
        assert!(c.timed_out);
        assert_eq!(c.exit_code, None);
        assert!(c.duration < Duration::from_secs(10));
    }

    #[test]
    fn missing_binary_is_not_found() {
        let err = run_captured(&["definitely-not-a-binary-xyz".into()], Path::new("."), &[], None, Duration::from_secs(1))
            .unwrap_err();
        assert_eq!(err.kind(), io::ErrorKind::NotFound);
    }
}

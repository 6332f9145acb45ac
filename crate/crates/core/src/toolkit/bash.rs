use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use super::{NetworkPolicy, ToolError, ToolOutput, NETWORK_ENV};

/// Exit code reported for a timed-out command.
pub const TIMEOUT_EXIT_CODE: i32 = 124;

/// Bytes kept per stream; the rest is drained and dropped.
pub const CAPTURE_CAP: usize = 16 * 1024 * 1024;

const POLL: Duration = Duration::from_millis(5);
const READER_GRACE: Duration = Duration::from_secs(2);

fn reader<R: Read + Send + 'static>(mut src: R) -> mpsc::Receiver<(Vec<u8>, bool)> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut over = false;
        let mut buf = [0u8; 8192];
        loop {
            match src.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = CAPTURE_CAP.saturating_sub(kept.len());
                    if n > room {
                        over = true;
                    }
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
            }
        }
        let _ = tx.send((kept, over));
    });
    rx
}

/// Polls for the exit of `pid` without reaping it, so that the process
/// group id stays reserved until the group has been killed.
fn exited(pid: libc::pid_t) -> bool {
    // SAFETY: siginfo_t is plain data; waitid only writes into it.
    let mut info: libc::siginfo_t = unsafe { std::mem::zeroed() };
    let rc = unsafe {
        libc::waitid(
            libc::P_PID,
            pid as libc::id_t,
            &mut info,
            libc::WEXITED | libc::WNOWAIT | libc::WNOHANG,
        )
    };
    if rc != 0 {
        return true;
    }
    // si_pid stays zero while the child is still running.
    unsafe { info.si_pid() != 0 }
}

/// Runs `cmd` with `bash -c` in `workspace`. The command gets its own
/// session and process group, which is killed as a whole when the command
/// exits or times out, so no descendant outlives the call.
pub fn exec_bash(
    cmd: &str,
    workspace: &Path,
    timeout: Duration,
    network: NetworkPolicy,
) -> Result<ToolOutput, ToolError> {
    if timeout.is_zero() {
        return Err(ToolError::InvalidArgument {
            name: "timeout",
            message: "must be positive".into(),
        });
    }
    if !workspace.is_dir() {
        return Err(ToolError::SpawnFailure(format!(
            "workspace {} does not exist",
            workspace.display()
        )));
    }
    let mut command = Command::new("bash");
    command
        .arg("-c")
        .arg(cmd)
        .current_dir(workspace)
        .env(NETWORK_ENV, network.as_str())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    // SAFETY: setsid is async-signal-safe.
    unsafe {
        command.pre_exec(|| {
            if libc::setsid() == -1 {
                return Err(std::io::Error::last_os_error());
            }
            Ok(())
        });
    }
    let start = Instant::now();
    let mut child = command
        .spawn()
        .map_err(|e| ToolError::SpawnFailure(e.to_string()))?;
    let pid = child.id() as libc::pid_t;
    let out_rx = reader(child.stdout.take().expect("piped stdout"));
    let err_rx = reader(child.stderr.take().expect("piped stderr"));

    let deadline = start + timeout;
    let mut timed_out = false;
    while !exited(pid) {
        if Instant::now() >= deadline {
            timed_out = true;
            break;
        }
        thread::sleep(POLL);
    }
    // SAFETY: pid is our unreaped child and leader of its own group.
    unsafe {
        libc::killpg(pid, libc::SIGKILL);
    }
    let status = child.wait()?;
    let duration_ms = start.elapsed().as_millis() as u64;

    let grace = Instant::now() + READER_GRACE;
    let collect = |rx: mpsc::Receiver<(Vec<u8>, bool)>| {
        let left = grace.saturating_duration_since(Instant::now());
        rx.recv_timeout(left).unwrap_or_default()
    };
    let (out, out_over) = collect(out_rx);
    let (err, err_over) = collect(err_rx);

    let exit_code = if timed_out {
        TIMEOUT_EXIT_CODE
    } else {
        use std::os::unix::process::ExitStatusExt;
        status
            .code()
            .unwrap_or_else(|| 128 + status.signal().unwrap_or(0))
    };
    let output = ToolOutput {
        stdout: String::from_utf8_lossy(&out).into_owned(),
        stderr: String::from_utf8_lossy(&err).into_owned(),
        exit_code,
        duration_ms,
        truncated: out_over || err_over,
    };
    if timed_out {
        return Err(ToolError::Timeout {
            after: timeout,
            partial: Box::new(output),
        });
    }
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(cmd: &str, secs: f64) -> Result<ToolOutput, ToolError> {
        let ws = tempfile::tempdir().unwrap();
        exec_bash(
            cmd,
            ws.path(),
            Duration::from_secs_f64(secs),
            NetworkPolicy::Disabled,
        )
    }

    #[test]
    fn true_is_silent_success() {
        let out = run("true", 5.0).unwrap();
        assert_eq!(out.exit_code, 0);
        assert!(out.stdout.is_empty() && out.stderr.is_empty());
    }

    #[test]
    fn exit_code_and_streams_are_faithful() {
        let out = run("echo out; echo err >&2; exit 7", 5.0).unwrap();
        assert_eq!(
            (out.exit_code, out.stdout.as_str(), out.stderr.as_str()),
            (7, "out\n", "err\n")
        );
    }

    #[test]
    fn cwd_is_workspace_and_policy_exported() {
        let ws = tempfile::tempdir().unwrap();
        let out = exec_bash(
            "pwd; echo $VOUCH_NETWORK",
            ws.path(),
            Duration::from_secs(5),
            NetworkPolicy::Enabled,
        )
        .unwrap();
        let canon = ws.path().canonicalize().unwrap();
        assert_eq!(out.stdout, format!("{}\nenabled\n", canon.display()));
    }

    #[test]
    fn timeout_kills_and_returns_partial() {
        let t0 = Instant::now();
        match run("echo started; sleep 60", 1.0) {
            Err(ToolError::Timeout { after, partial }) => {
                assert_eq!(after, Duration::from_secs(1));
                assert_eq!(partial.exit_code, TIMEOUT_EXIT_CODE);
                assert_eq!(partial.stdout, "started\n");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(t0.elapsed() < Duration::from_secs(4));
    }

    #[test]
    fn background_children_do_not_hold_the_call() {
        let t0 = Instant::now();
        let out = run("sleep 30 & echo bye", 10.0).unwrap();
        assert_eq!(out.stdout, "bye\n");
        assert!(t0.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn missing_workspace_is_spawn_failure() {
        let r = exec_bash(
            "true",
            Path::new("/nonexistent/ws"),
            Duration::from_secs(1),
            NetworkPolicy::Disabled,
        );
        assert!(matches!(r, Err(ToolError::SpawnFailure(_))));
    }
}

use std::io::{Read, Write};
use std::process::{Command, Stdio};

use serde_json::{json, Map};

use super::{Attempt, TransportError};

/// Runs a command per query: prompt on stdin, completion on stdout (UTF-8).
pub(crate) struct LocalCommand {
    command: Vec<String>,
}

impl LocalCommand {
    pub fn new(command: Vec<String>) -> Result<Self, TransportError> {
        if command.is_empty() {
            return Err(TransportError::Config("local_command needs a non-empty command".into()));
        }
        Ok(Self { command })
    }

    pub fn send(&self, prompt: &str) -> Attempt {
        let mut child = match Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
        {
            Ok(c) => c,
            Err(e) => return Attempt::Fail(format!("cannot start {}: {e}", self.command[0])),
        };
        let mut stdin = child.stdin.take().expect("piped stdin");
        let prompt = prompt.to_string();
        let writer = std::thread::spawn(move || {
            let _ = stdin.write_all(prompt.as_bytes());
        });
        let mut stderr = child.stderr.take().expect("piped stderr");
        let err_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });
        let mut out = Vec::new();
        let read = child.stdout.take().expect("piped stdout").read_to_end(&mut out);
        let status = child.wait();
        let _ = writer.join();
        let stderr = err_reader.join().unwrap_or_default();
        let status = match (read, status) {
            (Ok(_), Ok(s)) => s,
            (Err(e), _) | (_, Err(e)) => return Attempt::Retry(e.to_string()),
        };
        if !status.success() {
            return Attempt::Retry(format!("command exited with {status}: {}", stderr.trim()));
        }
        match String::from_utf8(out) {
            Ok(text) => {
                let mut meta = Map::new();
                meta.insert("exit_code".into(), json!(status.code()));
                Attempt::Done(text, meta)
            }
            Err(_) => Attempt::Fail("command output is not valid UTF-8".into()),
        }
    }
}

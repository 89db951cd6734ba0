//! Shared fixtures for the CLI and service integration tests.
#![allow(dead_code)] // each test target uses a different subset

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};

/// The text repeated on the three "hot" turns of the fixture dialogue,
/// also used verbatim as the query.
pub const HOT_TEXT: &str = "zebra stripes migration pattern";

/// Command for the compiled `dycp` binary with every `DYCP_*` variable
/// scrubbed, so ambient configuration cannot leak into assertions.
pub fn dycp() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dycp"));
    for (key, _) in std::env::vars() {
        if key.starts_with("DYCP_") {
            cmd.env_remove(&key);
        }
    }
    cmd
}

/// Writes a two-dialogue dataset. Dialogue "alpha" has eight turns where
/// turns 3, 4, and 7 repeat [`HOT_TEXT`] and the rest repeat one filler
/// text. Scores against the hot query then take exactly two values, so
/// selection must return spans (3,4) and (7,7) with the reference gains.
pub fn write_dataset(path: &Path) {
    let filler_user = "weather forecast cloudy mild";
    let filler_agent = "sunny spells expected tonight";
    let turns: Vec<serde_json::Value> = (1..=8)
        .map(|i| {
            if i == 3 || i == 4 || i == 7 {
                serde_json::json!({"index": i, "user": HOT_TEXT, "agent": HOT_TEXT})
            } else {
                serde_json::json!({"index": i, "user": filler_user, "agent": filler_agent})
            }
        })
        .collect();
    let alpha = serde_json::json!({
        "dialogue_id": "alpha",
        "turns": turns,
        "tests": [{
            "query": HOT_TEXT,
            "gold_answer": "the zebra discussion",
            "gold_turns": [3, 4, 7],
        }],
    });
    let beta_turns: Vec<serde_json::Value> = (1..=4)
        .map(|i| {
            if i == 2 {
                serde_json::json!({
                    "index": i,
                    "user": "quarterly finance report",
                    "agent": "revenue grew modestly",
                })
            } else {
                serde_json::json!({"index": i, "user": filler_user, "agent": filler_agent})
            }
        })
        .collect();
    let beta = serde_json::json!({
        "dialogue_id": "beta",
        "turns": beta_turns,
        "tests": [{
            "query": "quarterly finance report",
            "gold_answer": "revenue grew modestly",
            "gold_turns": [2],
            "asked_after_turn": 4,
        }],
    });
    std::fs::write(path, format!("{alpha}\n{beta}\n")).unwrap();
}

/// A `dycp serve` child process, killed on drop. The base URL is parsed
/// from the startup banner, so tests can bind port 0.
pub struct Server {
    child: Child,
    pub base: String,
}

impl Server {
    /// Spawns `dycp serve` with the given flags (callers pass `--port 0`
    /// unless they need a fixed port) and waits for the banner.
    pub fn spawn(args: &[&str]) -> Server {
        let mut child = dycp()
            .arg("serve")
            .args(args)
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        let stdout = child.stdout.take().unwrap();
        let mut lines = BufReader::new(stdout).lines();
        let base = loop {
            let line = lines
                .next()
                .expect("server exited before announcing its address")
                .unwrap();
            if let Some(rest) = line.strip_prefix("listening on ") {
                break rest.trim().to_string();
            }
        };
        // Keep draining stdout so the server can never block on a full pipe.
        std::thread::spawn(move || for _ in lines {});
        Server { child, base }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub fn pid(&self) -> u32 {
        self.child.id()
    }

    /// Asks the process to shut down gracefully and waits for it.
    #[cfg(unix)]
    pub fn interrupt_and_wait(&mut self) {
        Command::new("kill")
            .args(["-INT", &self.pid().to_string()])
            .status()
            .unwrap();
        let _ = self.child.wait();
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

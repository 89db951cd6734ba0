//! JSONL dialogue dataset: one dialogue object per line.
//!
//! Wire schema per line:
//!
//! ```json
//! {"dialogue_id": "d1",
//!  "turns": [{"index": 1, "user": "…", "agent": "…"}, …],
//!  "tests": [{"query": "…", "gold_answer": "…", "gold_turns": [2, 3],
//!             "asked_after_turn": 40}, …]}
//! ```
//!
//! `asked_after_turn` limits how much history a test query may see; it
//! defaults to the whole dialogue. Loading validates everything up front
//! — contiguous turn indices, gold turns inside the visible range — so
//! downstream code never re-checks.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DycpError, Result};
use crate::provider::EmbeddingProvider;
use crate::store::DialogueHistory;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DialogueWire {
    dialogue_id: String,
    turns: Vec<TurnWire>,
    #[serde(default)]
    tests: Vec<TestWire>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TurnWire {
    index: usize,
    user: String,
    agent: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TestWire {
    query: String,
    gold_answer: String,
    gold_turns: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    asked_after_turn: Option<usize>,
}

/// A validated test query against one dialogue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestCase {
    pub query: String,
    pub gold_answer: String,
    /// Turn indices whose content answers the query. May be empty — such
    /// cases are tallied but skipped by the metrics.
    pub gold_turns: BTreeSet<usize>,
    /// History length visible to this query (resolved; never exceeds the
    /// dialogue's turn count).
    pub asked_after_turn: usize,
}

/// One dialogue's text plus its test cases — everything except
/// embeddings, which a provider adds via [`DialogueSource::build_history`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogueSource {
    pub dialogue_id: String,
    /// (user, agent) utterance pairs in turn order.
    pub turns: Vec<(String, String)>,
    pub tests: Vec<TestCase>,
}

impl DialogueSource {
    pub fn turn_count(&self) -> usize {
        self.turns.len()
    }

    /// Embeds every turn in one provider batch.
    pub fn build_history(&self, provider: &dyn EmbeddingProvider) -> Result<DialogueHistory> {
        DialogueHistory::from_turns(
            self.dialogue_id.clone(),
            self.turns.iter().map(|(u, a)| (u.as_str(), a.as_str())),
            provider,
        )
    }
}

/// Loads and validates a JSONL dataset. Errors name the offending line
/// (1-based) and, where possible, the field.
pub fn load_dialogues(path: &Path) -> Result<Vec<DialogueSource>> {
    let file = File::open(path)
        .map_err(|e| DycpError::Dataset(format!("{}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue; // tolerate blank lines and trailing newline
        }
        let wire: DialogueWire = serde_json::from_str(&line)
            .map_err(|e| DycpError::Dataset(format!("line {line_no}: {e}")))?;
        out.push(validate(wire, line_no)?);
    }
    Ok(out)
}

fn validate(wire: DialogueWire, line_no: usize) -> Result<DialogueSource> {
    let n = wire.turns.len();
    for (i, t) in wire.turns.iter().enumerate() {
        if t.index != i + 1 {
            return Err(DycpError::Dataset(format!(
                "line {line_no}: turn at position {} has index {}, expected {}",
                i,
                t.index,
                i + 1
            )));
        }
    }
    let mut tests = Vec::with_capacity(wire.tests.len());
    for (ti, t) in wire.tests.into_iter().enumerate() {
        let asked_after = t.asked_after_turn.unwrap_or(n);
        if asked_after > n {
            return Err(DycpError::Dataset(format!(
                "line {line_no}: test {ti}: asked_after_turn {asked_after} exceeds {n} turns"
            )));
        }
        let gold_turns: BTreeSet<usize> = t.gold_turns.iter().copied().collect();
        if let Some(&bad) = gold_turns.iter().find(|&&g| g < 1 || g > asked_after) {
            return Err(DycpError::Dataset(format!(
                "line {line_no}: test {ti}: gold turn {bad} outside 1..={asked_after}"
            )));
        }
        tests.push(TestCase {
            query: t.query,
            gold_answer: t.gold_answer,
            gold_turns,
            asked_after_turn: asked_after,
        });
    }
    Ok(DialogueSource {
        dialogue_id: wire.dialogue_id,
        turns: wire.turns.into_iter().map(|t| (t.user, t.agent)).collect(),
        tests,
    })
}

/// Writes dialogues in the wire schema, one per line. Output is
/// deterministic for identical input (`asked_after_turn` always written
/// explicitly), so regenerating a dataset reproduces it byte for byte.
pub fn write_dialogues(dialogues: &[DialogueSource], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for d in dialogues {
        let wire = DialogueWire {
            dialogue_id: d.dialogue_id.clone(),
            turns: d
                .turns
                .iter()
                .enumerate()
                .map(|(i, (u, a))| TurnWire { index: i + 1, user: u.clone(), agent: a.clone() })
                .collect(),
            tests: d
                .tests
                .iter()
                .map(|t| TestWire {
                    query: t.query.clone(),
                    gold_answer: t.gold_answer.clone(),
                    gold_turns: t.gold_turns.iter().copied().collect(),
                    asked_after_turn: Some(t.asked_after_turn),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &wire)
            .map_err(|e| DycpError::Dataset(format!("serializing {}: {e}", d.dialogue_id)))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

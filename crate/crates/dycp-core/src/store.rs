//! Append-only dialogue store: turns, their embeddings, and cache persistence.
//!
//! A [`DialogueHistory`] grows one turn at a time and keeps the invariant
//! that the embedding matrix always has exactly one row per turn. Turns are
//! never edited or removed. Embeddings persist to a compact binary cache
//! (see [`save_cache`]) whose round-trip is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{DycpError, Result};
use crate::provider::EmbeddingProvider;

/// One user–agent exchange, the atomic unit of history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurnRecord {
    /// 1-based position in the dialogue; contiguous from 1.
    pub index: usize,
    pub user_text: String,
    pub agent_text: String,
    /// The exact text that was embedded for this turn.
    pub encoded_unit: String,
}

/// Renders the text form of a turn that gets embedded: both utterances
/// joined into one unit. The format is part of the stable contract —
/// changing it silently invalidates every existing cache.
pub fn render_encoded_unit(user_text: &str, agent_text: &str) -> String {
    format!("User: {user_text}\nAgent: {agent_text}")
}

/// Dense row-major matrix of turn embeddings.
///
/// The dimension is adopted from the first row; every later row must
/// match it and contain only finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: Option<usize>,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new() -> Self {
        EmbeddingMatrix { dim: None, data: Vec::new() }
    }

    pub fn with_dim(dim: usize) -> Self {
        assert!(dim >= 1);
        EmbeddingMatrix { dim: Some(dim), data: Vec::new() }
    }

    /// `None` until the first row fixes the dimension.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn rows(&self) -> usize {
        match self.dim {
            Some(d) => self.data.len() / d,
            None => 0,
        }
    }

    /// Row `k`, 0-based.
    pub fn row(&self, k: usize) -> &[f32] {
        let d = self.dim.expect("row access on an empty matrix");
        &self.data[k * d..(k + 1) * d]
    }

    /// Appends one embedding row, validating dimension and finiteness.
    /// The first row adopts its length as the matrix dimension.
    pub fn push_row(&mut self, row: &[f32]) -> Result<()> {
        if row.is_empty() {
            return Err(DycpError::DimensionMismatch { expected: self.dim.unwrap_or(1), got: 0 });
        }
        if let Some(d) = self.dim {
            if row.len() != d {
                return Err(DycpError::DimensionMismatch { expected: d, got: row.len() });
            }
        }
        if let Some(col) = row.iter().position(|c| !c.is_finite()) {
            return Err(DycpError::NonFinite { row: self.rows(), col });
        }
        if self.dim.is_none() {
            self.dim = Some(row.len());
        }
        self.data.extend_from_slice(row);
        Ok(())
    }
}

impl Default for EmbeddingMatrix {
    fn default() -> Self {
        Self::new()
    }
}

/// A dialogue's turns plus their embedding matrix, grown in lockstep.
#[derive(Debug, Clone)]
pub struct DialogueHistory {
    pub dialogue_id: String,
    turns: Vec<TurnRecord>,
    embeddings: EmbeddingMatrix,
}

impl DialogueHistory {
    pub fn new(dialogue_id: impl Into<String>) -> Self {
        DialogueHistory {
            dialogue_id: dialogue_id.into(),
            turns: Vec::new(),
            embeddings: EmbeddingMatrix::new(),
        }
    }

    pub fn dialogue_id(&self) -> &str {
        &self.dialogue_id
    }

    pub fn turn_count(&self) -> usize {
        self.turns.len()
    }

    pub fn turns(&self) -> &[TurnRecord] {
        &self.turns
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    /// Appends one turn, embedding its encoded unit through `provider`.
    /// On any error the history is left untouched.
    pub fn append_turn(
        &mut self,
        user_text: &str,
        agent_text: &str,
        provider: &dyn EmbeddingProvider,
    ) -> Result<()> {
        let encoded = render_encoded_unit(user_text, agent_text);
        let mut rows = provider.embed(&[&encoded])?;
        if rows.len() != 1 {
            return Err(DycpError::ProviderContract(format!(
                "asked for 1 embedding, got {}",
                rows.len()
            )));
        }
        self.append_turn_with_vector(user_text, agent_text, rows.pop().unwrap())
    }

    /// Appends a turn whose embedding was computed elsewhere (bulk ingest,
    /// cache adoption). Validates the vector before mutating anything.
    pub fn append_turn_with_vector(
        &mut self,
        user_text: &str,
        agent_text: &str,
        vector: Vec<f32>,
    ) -> Result<()> {
        self.embeddings.push_row(&vector)?;
        self.turns.push(TurnRecord {
            index: self.turns.len() + 1,
            user_text: user_text.to_string(),
            agent_text: agent_text.to_string(),
            encoded_unit: render_encoded_unit(user_text, agent_text),
        });
        Ok(())
    }

    /// Builds a history from turn texts with a single batched provider
    /// call — one round-trip instead of one per turn.
    pub fn from_turns<'a>(
        dialogue_id: impl Into<String>,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Self> {
        let pairs: Vec<(&str, &str)> = pairs.into_iter().collect();
        let encoded: Vec<String> =
            pairs.iter().map(|(u, a)| render_encoded_unit(u, a)).collect();
        let refs: Vec<&str> = encoded.iter().map(String::as_str).collect();
        let rows = provider.embed(&refs)?;
        if rows.len() != pairs.len() {
            return Err(DycpError::ProviderContract(format!(
                "asked for {} embeddings, got {}",
                pairs.len(),
                rows.len()
            )));
        }
        let mut history = DialogueHistory::new(dialogue_id);
        for ((user, agent), row) in pairs.into_iter().zip(rows) {
            history.append_turn_with_vector(user, agent, row)?;
        }
        Ok(history)
    }

    /// Replaces the embedding matrix with one loaded from a cache. The
    /// row count must match the turn count exactly.
    pub fn adopt_cache(&mut self, matrix: EmbeddingMatrix) -> Result<()> {
        if matrix.rows() != self.turns.len() {
            return Err(DycpError::Validation(format!(
                "cache has {} rows but dialogue {:?} has {} turns",
                matrix.rows(),
                self.dialogue_id,
                self.turns.len()
            )));
        }
        self.embeddings = matrix;
        Ok(())
    }

    /// Read-only view of the whole history.
    pub fn view(&self) -> HistoryView<'_> {
        HistoryView { history: self, upto: self.turns.len() }
    }

    /// Read-only view of the first `n` turns — the history as it stood
    /// when turn `n` had just completed. `n` must not exceed the turn
    /// count.
    pub fn view_upto(&self, n: usize) -> Result<HistoryView<'_>> {
        if n > self.turns.len() {
            return Err(DycpError::Validation(format!(
                "view of {n} turns requested, dialogue has {}",
                self.turns.len()
            )));
        }
        Ok(HistoryView { history: self, upto: n })
    }
}

/// Borrowed prefix of a dialogue: the scoring and pruning unit.
///
/// Pruning a query asked after turn `n` must not see later turns; a view
/// makes that a zero-copy slice instead of a truncated clone.
#[derive(Clone, Copy)]
pub struct HistoryView<'a> {
    history: &'a DialogueHistory,
    upto: usize,
}

impl<'a> HistoryView<'a> {
    pub fn dialogue_id(&self) -> &str {
        &self.history.dialogue_id
    }

    /// Number of visible turns.
    pub fn len(&self) -> usize {
        self.upto
    }

    pub fn is_empty(&self) -> bool {
        self.upto == 0
    }

    pub fn turns(&self) -> &'a [TurnRecord] {
        &self.history.turns[..self.upto]
    }

    /// Turn by 1-based index (must be ≤ `len`).
    pub fn turn(&self, index: usize) -> &'a TurnRecord {
        &self.history.turns[index - 1]
    }

    pub fn dim(&self) -> Option<usize> {
        self.history.embeddings.dim()
    }

    /// Embedding of turn `index` (1-based).
    pub fn embedding_row(&self, index: usize) -> &'a [f32] {
        debug_assert!(index >= 1 && index <= self.upto);
        self.history.embeddings.row(index - 1)
    }
}

// --- binary cache -----------------------------------------------------------

/// File magic: identifies the embedding-cache format, version 1.
pub const CACHE_MAGIC: &[u8; 8] = b"DYCPEMB1";
/// Current format version written after the magic.
pub const CACHE_VERSION: u32 = 1;

/// Writes a history's embeddings to `path`.
///
/// Layout (little-endian, no padding): magic `"DYCPEMB1"` (8 bytes),
/// format version `u32` = 1, `dim: u32`, `count: u32`, then
/// `count × dim` IEEE-754 binary32 components in row-major order.
/// Nothing follows the payload. An empty matrix writes dim 0, count 0.
pub fn save_cache(history: &DialogueHistory, path: &Path) -> Result<()> {
    save_matrix(&history.embeddings, path)
}

/// Matrix-level writer backing [`save_cache`].
pub fn save_matrix(matrix: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(CACHE_MAGIC)?;
    out.write_all(&CACHE_VERSION.to_le_bytes())?;
    let dim = matrix.dim().unwrap_or(0) as u32;
    out.write_all(&dim.to_le_bytes())?;
    out.write_all(&(matrix.rows() as u32).to_le_bytes())?;
    for &component in &matrix.data {
        out.write_all(&component.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a cache written by [`save_cache`], validating the header and the
/// exact payload size. Wrong magic or version is a format error; a size
/// or content inconsistency is a corruption error.
pub fn load_cache(path: &Path) -> Result<EmbeddingMatrix> {
    let file = File::open(path).map_err(|e| {
        DycpError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    let mut input = BufReader::new(file);

    let mut magic = [0u8; 8];
    read_exact_or(&mut input, &mut magic, "magic")?;
    if &magic != CACHE_MAGIC {
        return Err(DycpError::CacheFormat(format!(
            "bad magic {:02x?}, expected {:02x?}",
            magic, CACHE_MAGIC
        )));
    }
    let version = read_u32(&mut input, "version")?;
    if version != CACHE_VERSION {
        return Err(DycpError::CacheFormat(format!(
            "unsupported version {version}, expected {CACHE_VERSION}"
        )));
    }
    let dim = read_u32(&mut input, "dim")? as usize;
    let count = read_u32(&mut input, "count")? as usize;
    if dim == 0 && count > 0 {
        return Err(DycpError::CacheCorrupt(format!("{count} rows declared with dim 0")));
    }

    let components = dim * count;
    let mut payload = vec![0u8; components * 4];
    input.read_exact(&mut payload).map_err(|_| {
        DycpError::CacheCorrupt(format!(
            "payload truncated: expected {count} rows × {dim} components"
        ))
    })?;
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(DycpError::CacheCorrupt("trailing bytes after payload".into()));
    }

    let mut data = Vec::with_capacity(components);
    for chunk in payload.chunks_exact(4) {
        let c = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !c.is_finite() {
            let at = data.len();
            return Err(DycpError::CacheCorrupt(format!(
                "non-finite component at row {}, column {}",
                at / dim,
                at % dim
            )));
        }
        data.push(c);
    }
    Ok(EmbeddingMatrix { dim: if dim == 0 { None } else { Some(dim) }, data })
}

fn read_exact_or(input: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    input
        .read_exact(buf)
        .map_err(|_| DycpError::CacheCorrupt(format!("file too short reading {what}")))
}

fn read_u32(input: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact_or(input, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}

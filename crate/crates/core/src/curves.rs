//! Per-run surprisal matrices over a checkpoint grid.
//!
//! Binary layout (`SCRV1`, all integers little-endian):
//!
//! ```text
//! magic      5 bytes  "SCRV1"
//! version    u32      1
//! run_id     u32 byte length, then UTF-8 bytes
//! n_ckpt     u32
//! n_examples u64
//! steps      n_ckpt x u64
//! ids        n_examples x (u32 sequence_index, u32 token_position)
//! values     n_examples x n_ckpt x f32, row-major, surprisal in bits
//! ```
//!
//! The text layout is a TSV whose header is `example_id` followed by one
//! column per checkpoint step, with rows `seq:pos` followed by surprisals.
//! An optional `# run_id=<name>` line names the run; comment lines start
//! with `#`.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CURVES_MAGIC: &[u8; 5] = b"SCRV1";
pub const CURVES_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExampleId {
    pub sequence_index: u32,
    pub token_position: u32,
}

impl ExampleId {
    pub fn new(sequence_index: u32, token_position: u32) -> Result<Self> {
        if token_position == 0 {
            return Err(Error::Data(format!(
                "example {sequence_index}:0 has no context (token position must be >= 1)"
            )));
        }
        Ok(Self {
            sequence_index,
            token_position,
        })
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.sequence_index, self.token_position)
    }
}

impl FromStr for ExampleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::Format(format!("bad example id `{s}` (want seq:pos)")))?;
        let seq = a
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad sequence index in `{s}`")))?;
        let pos = b
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad token position in `{s}`")))?;
        ExampleId::new(seq, pos)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointGrid {
    steps: Vec<u64>,
}

impl CheckpointGrid {
    pub fn new(steps: Vec<u64>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Data("checkpoint grid is empty".into()));
        }
        if let Some(w) = steps.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Data(format!(
                "checkpoint grid not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[u64] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Index of the first non-zero step (0 or 1).
    pub fn first_nonzero(&self) -> usize {
        usize::from(self.steps[0] == 0)
    }

    /// log10 of every non-zero step; the fitting and metric grid.
    pub fn log10_steps(&self) -> Vec<f64> {
        self.steps[self.first_nonzero()..]
            .iter()
            .map(|&s| (s as f64).log10())
            .collect()
    }

    pub fn max_step(&self) -> u64 {
        *self.steps.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurprisalMatrix {
    run_id: String,
    grid: CheckpointGrid,
    example_ids: Vec<ExampleId>,
    values: Vec<f32>,
    index: HashMap<ExampleId, usize>,
}

impl SurprisalMatrix {
    /// Build and validate: every value must be finite and non-negative and
    /// example ids must be unique.
    pub fn new(
        run_id: impl Into<String>,
        grid: CheckpointGrid,
        example_ids: Vec<ExampleId>,
        values: Vec<f32>,
    ) -> Result<Self> {
        let t = grid.len();
        if values.len() != example_ids.len() * t {
            return Err(Error::Data(format!(
                "matrix has {} values, expected {} x {}",
                values.len(),
                example_ids.len(),
                t
            )));
        }
        validate_values(&values, t)?;
        let mut index = HashMap::with_capacity(example_ids.len());
        for (i, id) in example_ids.iter().enumerate() {
            if id.token_position == 0 {
                return Err(Error::Data(format!("row {i}: example {id} has no context")));
            }
            if index.insert(*id, i).is_some() {
                return Err(Error::Data(format!("duplicate example id {id}")));
            }
        }
        Ok(Self {
            run_id: run_id.into(),
            grid,
            example_ids,
            values,
            index,
        })
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn grid(&self) -> &CheckpointGrid {
        &self.grid
    }

    pub fn example_ids(&self) -> &[ExampleId] {
        &self.example_ids
    }

    pub fn n_examples(&self) -> usize {
        self.example_ids.len()
    }

    pub fn n_checkpoints(&self) -> usize {
        self.grid.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let t = self.grid.len();
        &self.values[i * t..(i + 1) * t]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| f64::from(v)).collect()
    }

    pub fn row_of(&self, id: ExampleId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        let t = self.grid.len();
        (0..self.n_examples())
            .map(|i| f64::from(self.values[i * t + j]))
            .collect()
    }

    /// Rows reordered by ascending example id.
    pub fn sorted_by_id(&self) -> Self {
        let mut order: Vec<usize> = (0..self.n_examples()).collect();
        order.sort_by_key(|&i| self.example_ids[i]);
        let t = self.grid.len();
        let mut values = Vec::with_capacity(self.values.len());
        for &i in &order {
            values.extend_from_slice(&self.values[i * t..(i + 1) * t]);
        }
        let ids: Vec<ExampleId> = order.iter().map(|&i| self.example_ids[i]).collect();
        let index = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        Self {
            run_id: self.run_id.clone(),
            grid: self.grid.clone(),
            example_ids: ids,
            values,
            index,
        }
    }
}

fn validate_values(values: &[f32], n_cols: usize) -> Result<()> {
    if let Some(pos) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Data(format!(
            "invalid surprisal {} at row {}, column {}",
            values[pos],
            pos / n_cols,
            pos % n_cols
        )));
    }
    Ok(())
}

/// Require a common grid and identical example lists across runs.
pub fn check_aligned(runs: &[&SurprisalMatrix]) -> Result<()> {
    let Some(first) = runs.first() else {
        return Ok(());
    };
    for r in &runs[1..] {
        if r.grid != first.grid {
            return Err(Error::Data(format!(
                "alignment error: run `{}` grid differs from run `{}`",
                r.run_id, first.run_id
            )));
        }
        if r.example_ids != first.example_ids {
            return Err(Error::Data(format!(
                "alignment error: run `{}` examples differ from run `{}`",
                r.run_id, first.run_id
            )));
        }
    }
    Ok(())
}

/// Header of an `SCRV1` file, read without touching the payload.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveHeader {
    pub run_id: String,
    pub steps: Vec<u64>,
    pub n_examples: u64,
}

fn rd<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("truncated SCRV1 file".into()))?;
    Ok(b)
}

fn read_header_from(r: &mut impl Read) -> Result<CurveHeader> {
    let magic: [u8; 5] = rd(r)?;
    if &magic != CURVES_MAGIC {
        return Err(Error::Format("not an SCRV1 curve file".into()));
    }
    let version = u32::from_le_bytes(rd(r)?);
    if version != CURVES_VERSION {
        return Err(Error::Format(format!("unsupported SCRV1 version {version}")));
    }
    let id_len = u32::from_le_bytes(rd(r)?) as usize;
    let mut id = vec![0u8; id_len];
    r.read_exact(&mut id)
        .map_err(|_| Error::Format("truncated SCRV1 run id".into()))?;
    let run_id =
        String::from_utf8(id).map_err(|_| Error::Format("run id is not UTF-8".into()))?;
    let n_ckpt = u32::from_le_bytes(rd(r)?) as usize;
    let n_examples = u64::from_le_bytes(rd(r)?);
    let mut steps = Vec::with_capacity(n_ckpt);
    for _ in 0..n_ckpt {
        steps.push(u64::from_le_bytes(rd(r)?));
    }
    Ok(CurveHeader {
        run_id,
        steps,
        n_examples,
    })
}

pub fn read_curve_header(path: &Path) -> Result<CurveHeader> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut head = [0u8; 5];
    let n = r.read(&mut head).map_err(|e| Error::io(path, e))?;
    if n == 5 && &head == CURVES_MAGIC {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        return read_header_from(&mut BufReader::new(file));
    }
    let m = read_curves_tsv(path)?;
    Ok(CurveHeader {
        run_id: m.run_id.clone(),
        steps: m.grid.steps.clone(),
        n_examples: m.n_examples() as u64,
    })
}

/// Load a curve file in either layout, validating every value.
pub fn ingest_curves(path: &Path) -> Result<SurprisalMatrix> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = [0u8; 5];
    let n = file.read(&mut head).map_err(|e| Error::io(path, e))?;
    if n == 5 && &head == CURVES_MAGIC {
        read_curves_binary(path)
    } else {
        read_curves_tsv(path)
    }
}

pub fn read_curves_binary(path: &Path) -> Result<SurprisalMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::with_capacity(1 << 16, file);
    let header = read_header_from(&mut r)?;
    let grid = CheckpointGrid::new(header.steps)?;
    let n = usize::try_from(header.n_examples)
        .map_err(|_| Error::Format("example count overflows usize".into()))?;
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        let seq = u32::from_le_bytes(rd(&mut r)?);
        let pos = u32::from_le_bytes(rd(&mut r)?);
        ids.push(ExampleId {
            sequence_index: seq,
            token_position: pos,
        });
    }
    let total = n
        .checked_mul(grid.len())
        .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
    // Decode in fixed-size chunks straight into the destination buffer so
    // peak memory stays close to the payload size.
    let mut values = Vec::with_capacity(total);
    let mut buf = vec![0u8; 1 << 16];
    while values.len() < total {
        let want = ((total - values.len()) * 4).min(buf.len());
        r.read_exact(&mut buf[..want])
            .map_err(|_| Error::Format("truncated SCRV1 payload".into()))?;
        values.extend(
            buf[..want]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap())),
        );
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Format("trailing bytes after SCRV1 payload".into()));
    }
    SurprisalMatrix::new(header.run_id, grid, ids, values)
}

pub fn write_curves_binary(path: &Path, m: &SurprisalMatrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::with_capacity(1 << 16, file);
    let io = |e| Error::io(path, e);
    w.write_all(CURVES_MAGIC).map_err(io)?;
    w.write_all(&CURVES_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(m.run_id.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(m.run_id.as_bytes()).map_err(io)?;
    w.write_all(&(m.grid.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(m.n_examples() as u64).to_le_bytes()).map_err(io)?;
    for s in m.grid.steps() {
        w.write_all(&s.to_le_bytes()).map_err(io)?;
    }
    for id in &m.example_ids {
        w.write_all(&id.sequence_index.to_le_bytes()).map_err(io)?;
        w.write_all(&id.token_position.to_le_bytes()).map_err(io)?;
    }
    for v in &m.values {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_curves_tsv(path: &Path) -> Result<SurprisalMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut run_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut steps: Option<Vec<u64>> = None;
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some(id) = c.trim().strip_prefix("run_id=") {
                run_id = id.trim().to_string();
            }
            continue;
        }
        let mut fields = line.split('\t');
        let first = fields.next().unwrap_or_default();
        match &steps {
            None => {
                if first != "example_id" {
                    return Err(Error::Format(format!(
                        "line {}: expected header starting with `example_id`",
                        lineno + 1
                    )));
                }
                let s: std::result::Result<Vec<u64>, _> = fields.map(str::parse).collect();
                steps = Some(s.map_err(|_| {
                    Error::Format(format!("line {}: bad checkpoint step", lineno + 1))
                })?);
            }
            Some(st) => {
                ids.push(first.parse::<ExampleId>()?);
                let before = values.len();
                for f in fields {
                    let v: f32 = f.trim().parse().map_err(|_| {
                        Error::Format(format!("line {}: bad surprisal `{f}`", lineno + 1))
                    })?;
                    values.push(v);
                }
                if values.len() - before != st.len() {
                    return Err(Error::Format(format!(
                        "line {}: {} values, expected {}",
                        lineno + 1,
                        values.len() - before,
                        st.len()
                    )));
                }
            }
        }
    }
    let steps = steps.ok_or_else(|| Error::Format("curve TSV has no header".into()))?;
    SurprisalMatrix::new(run_id, CheckpointGrid::new(steps)?, ids, values)
}

pub fn write_curves_tsv(path: &Path, m: &SurprisalMatrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "# run_id={}", m.run_id).map_err(io)?;
    let steps: Vec<String> = m.grid.steps().iter().map(u64::to_string).collect();
    writeln!(w, "example_id\t{}", steps.join("\t")).map_err(io)?;
    for (i, id) in m.example_ids.iter().enumerate() {
        let vals: Vec<String> = m.row(i).iter().map(f32::to_string).collect();
        writeln!(w, "{id}\t{}", vals.join("\t")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Surprisal of a uniform predictor over the vocabulary, in bits.
pub fn chance_surprisal(vocab_size: usize) -> Result<f64> {
    if vocab_size < 2 {
        return Err(Error::Param("vocab size must be at least 2".into()));
    }
    Ok((vocab_size as f64).log2())
}

pub fn raw_curve_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Param(format!(
            "curve length mismatch ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    Ok(squared_distance(a, b).sqrt())
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Which representation of each curve to compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveSource {
    Raw,
    Fitted,
}

/// Dense curves (examples x points) with their ids; either raw surprisals
/// or fitted curves evaluated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    pub ids: Vec<ExampleId>,
    pub points: usize,
    pub values: Vec<f64>,
}

impl CurveSet {
    pub fn from_matrix(m: &SurprisalMatrix) -> Self {
        Self {
            ids: m.example_ids.clone(),
            points: m.n_checkpoints(),
            values: m.values.iter().map(|&v| f64::from(v)).collect(),
        }
    }

    /// Raw surprisals restricted to the non-zero checkpoints.
    pub fn from_matrix_nonzero(m: &SurprisalMatrix) -> Self {
        let skip = m.grid.first_nonzero();
        let points = m.n_checkpoints() - skip;
        let mut values = Vec::with_capacity(points * m.n_examples());
        for i in 0..m.n_examples() {
            values.extend(m.row(i)[skip..].iter().map(|&v| f64::from(v)));
        }
        Self {
            ids: m.example_ids.clone(),
            points,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.points..(i + 1) * self.points]
    }

    fn position(&self, id: ExampleId) -> Option<usize> {
        self.ids.iter().position(|x| *x == id)
    }
}

/// Fraction of other examples whose run-b curve lies farther from the
/// example's run-a curve than the example's own run-b curve (ties 0.5).
pub fn nearest_neighbor_rank(example: ExampleId, run_a: &CurveSet, run_b: &CurveSet) -> Result<f64> {
    let ia = run_a
        .position(example)
        .ok_or_else(|| Error::Data(format!("example {example} missing from run a")))?;
    let ib = run_b
        .position(example)
        .ok_or_else(|| Error::Data(format!("example {example} missing from run b")))?;
    rank_at(ia, ib, run_a, run_b)
}

fn rank_at(ia: usize, ib: usize, run_a: &CurveSet, run_b: &CurveSet) -> Result<f64> {
    if run_a.points != run_b.points {
        return Err(Error::Data("curve sets have different grids".into()));
    }
    if run_b.len() < 2 {
        return Err(Error::Param("nearest-neighbor rank needs at least two examples".into()));
    }
    let anchor = run_a.row(ia);
    let own = squared_distance(anchor, run_b.row(ib));
    let mut score = 0.0;
    for j in 0..run_b.len() {
        if j == ib {
            continue;
        }
        let d = squared_distance(anchor, run_b.row(j));
        if d > own {
            score += 1.0;
        } else if d == own {
            score += 0.5;
        }
    }
    Ok(score / (run_b.len() - 1) as f64)
}

/// Ranks for every example of `run_a` (which must also be in `run_b`),
/// computed in parallel by row; output order follows `run_a`.
pub fn nearest_neighbor_ranks(run_a: &CurveSet, run_b: &CurveSet) -> Result<Vec<f64>> {
    let pos_b: HashMap<ExampleId, usize> =
        run_b.ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    (0..run_a.len())
        .into_par_iter()
        .map(|ia| {
            let id = run_a.ids[ia];
            let ib = *pos_b
                .get(&id)
                .ok_or_else(|| Error::Data(format!("example {id} missing from run b")))?;
            rank_at(ia, ib, run_a, run_b)
        })
        .collect()
}

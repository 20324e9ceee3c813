//! Bias-subspace estimation from exported sentence embeddings and removal
//! of that subspace by orthogonal projection.
//!
//! The subspace is spanned by the top principal directions of the
//! identity-related variation: differences between the embeddings of
//! counterfactual sentence pairs (default) or the pooled embeddings
//! themselves. Vectors are debiased with `h - sum_k <h, v_k> v_k`.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Leading bytes of the binary embedding format.
pub const BINARY_MAGIC: &[u8; 4] = b"FSEB";

/// Eigenvalues at or below this fraction of the largest count as zero.
const RANK_TOLERANCE: f64 = 1e-10;
/// Coordinates smaller than this are skipped by the sign rule.
const SIGN_EPSILON: f64 = 1e-12;

/// `n` row vectors of dimension `d` with their ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != vectors.len() {
            return Err(Error::LengthMismatch(format!(
                "{} ids for {} vectors",
                ids.len(),
                vectors.len()
            )));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(dim * vectors.len());
        for v in &vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            data.extend_from_slice(v);
        }
        Self::from_flat(ids, dim, data)
    }

    pub fn from_flat(ids: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if !ids.is_empty() && dim == 0 {
            return Err(Error::InvalidValue("embedding dimension must be at least 1".into()));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::LengthMismatch(format!(
                "{} values for {} vectors of dimension {dim}",
                data.len(),
                ids.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "non-finite value in vector `{}`",
                ids[pos / dim]
            )));
        }
        Ok(EmbeddingSet { ids, dim, data })
    }

    pub fn empty(dim: usize) -> Self {
        EmbeddingSet {
            ids: Vec::new(),
            dim,
            data: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        self.data.chunks(self.dim.max(1))
    }
}

#[derive(Serialize, Deserialize)]
struct JsonRow {
    id: String,
    vector: Vec<f64>,
}

/// Reads `{"id": ..., "vector": [...]}` lines.
pub fn read_embeddings_jsonl<R: Read>(reader: R) -> Result<EmbeddingSet> {
    let mut ids = Vec::new();
    let mut vectors = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let parse = |message: String| Error::Parse { line: i + 1, message };
        let line = line.map_err(|e| parse(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonRow = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        if let Some(first) = vectors.first().map(Vec::len) {
            if row.vector.len() != first {
                return Err(parse(format!(
                    "vector of dimension {} after dimension {first}",
                    row.vector.len()
                )));
            }
        }
        ids.push(row.id);
        vectors.push(row.vector);
    }
    EmbeddingSet::new(ids, vectors)
}

pub fn write_embeddings_jsonl<W: Write>(set: &EmbeddingSet, mut writer: W) -> std::io::Result<()> {
    for (id, v) in set.ids.iter().zip(set.rows()) {
        #[derive(Serialize)]
        struct Row<'a> {
            id: &'a str,
            vector: &'a [f64],
        }
        serde_json::to_writer(&mut writer, &Row { id, vector: v })?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

/// Binary layout: `FSEB`, u32 n, u32 d (little-endian), then n*d
/// little-endian f32 values row by row. Rows get their index as id.
pub fn read_embeddings_binary<R: Read>(mut reader: R) -> Result<EmbeddingSet> {
    let bad = |m: &str| Error::Parse {
        line: 0,
        message: m.to_string(),
    };
    let mut header = [0u8; 12];
    reader
        .read_exact(&mut header)
        .map_err(|_| bad("truncated binary embedding header"))?;
    if &header[..4] != BINARY_MAGIC {
        return Err(bad("missing FSEB magic"));
    }
    let n = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes).map_err(|e| bad(&e.to_string()))?;
    if bytes.len() != n * d * 4 {
        return Err(bad(&format!(
            "expected {} bytes of f32 data for {n}x{d}, found {}",
            n * d * 4,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    EmbeddingSet::from_flat((0..n).map(|i| i.to_string()).collect(), d, data)
}

pub fn write_embeddings_binary<W: Write>(set: &EmbeddingSet, mut writer: W) -> std::io::Result<()> {
    writer.write_all(BINARY_MAGIC)?;
    writer.write_all(&(set.len() as u32).to_le_bytes())?;
    writer.write_all(&(set.dim as u32).to_le_bytes())?;
    for x in &set.data {
        writer.write_all(&(*x as f32).to_le_bytes())?;
    }
    writer.flush()
}

/// Reads either format, deciding by the magic bytes.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 4];
    let is_binary = file.read_exact(&mut magic).is_ok() && &magic == BINARY_MAGIC;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if is_binary {
        read_embeddings_binary(file)
    } else {
        read_embeddings_jsonl(file)
    }
}

pub fn is_binary_file(path: &Path) -> bool {
    let mut magic = [0u8; 4];
    File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .map(|_| &magic == BINARY_MAGIC)
        .unwrap_or(false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    /// Differences of counterfactual pair embeddings.
    #[default]
    PairedDifference,
    /// The embeddings themselves.
    Pooled,
}

#[derive(Debug, Clone, Copy)]
pub enum FitInput<'a> {
    /// Row i of `factual` and row i of `counterfactual` form one pair.
    Paired {
        factual: &'a EmbeddingSet,
        counterfactual: &'a EmbeddingSet,
    },
    Pooled(&'a EmbeddingSet),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSubspace {
    pub k: usize,
    pub d: usize,
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    #[serde(default)]
    pub eigenvalues: Vec<f64>,
    pub attribute: String,
    pub fitted_from: usize,
}

impl BiasSubspace {
    pub fn from_json(json: &str) -> Result<Self> {
        let s: BiasSubspace = serde_json::from_str(json).map_err(|e| Error::json("subspace", e))?;
        if s.components.len() != s.k || s.mean.len() != s.d || s.components.iter().any(|c| c.len() != s.d) {
            return Err(Error::InvalidValue("subspace shape does not match k and d".into()));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Rows fed to the eigen-decomposition for the given input.
fn fit_rows(input: FitInput<'_>) -> Result<(usize, Vec<f64>, usize)> {
    match input {
        FitInput::Pooled(set) => Ok((set.len(), set.data.clone(), set.dim)),
        FitInput::Paired {
            factual,
            counterfactual,
        } => {
            if factual.len() != counterfactual.len() {
                return Err(Error::LengthMismatch(format!(
                    "paired fit needs equal counts, got {} and {}",
                    factual.len(),
                    counterfactual.len()
                )));
            }
            if factual.dim != counterfactual.dim && !factual.is_empty() {
                return Err(Error::DimensionMismatch {
                    expected: factual.dim,
                    found: counterfactual.dim,
                });
            }
            let diff = factual
                .data
                .iter()
                .zip(&counterfactual.data)
                .map(|(a, b)| a - b)
                .collect();
            Ok((factual.len(), diff, factual.dim))
        }
    }
}

/// Top-`k` principal directions of the (centered) input.
///
/// Components are ordered by descending eigenvalue (ties keep solver index
/// order) and signed so that their first non-negligible coordinate is
/// positive. Fails when the centered data has fewer than `k` nonzero
/// eigenvalues.
pub fn fit_bias_subspace(input: FitInput<'_>, k: usize, attribute: &str) -> Result<BiasSubspace> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let (n, rows, d) = fit_rows(input)?;
    if n < k {
        return Err(Error::InvalidArgument(format!(
            "need at least k = {k} input vectors, got {n}"
        )));
    }
    if k > d {
        return Err(Error::RankDeficient {
            requested: k,
            rank: d.min(n),
        });
    }
    if rows.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidValue("non-finite embedding value".into()));
    }

    let mut mean = vec![0.0; d];
    for row in rows.chunks(d) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    // Only coordinates that vary can carry principal directions.
    let mut centered = rows;
    for row in centered.chunks_mut(d) {
        for (x, m) in row.iter_mut().zip(&mean) {
            *x -= m;
        }
    }
    let active: Vec<usize> = (0..d)
        .filter(|&j| centered.chunks(d).any(|row| row[j] != 0.0))
        .collect();
    if active.is_empty() {
        return Err(Error::RankDeficient { requested: k, rank: 0 });
    }
    let m = active.len();
    let c = DMatrix::from_fn(n, m, |i, j| centered[i * d + active[j]]);
    let denom = (n.max(2) - 1) as f64;

    let (values, vectors): (Vec<f64>, Vec<Vec<f64>>) = if n < m {
        // Gram route: eigenvectors u of C C^T map to C^T u.
        let gram = (&c * c.transpose()) / denom;
        let eig = SymmetricEigen::new(gram);
        let order = descending(eig.eigenvalues.as_slice());
        order
            .into_iter()
            .map(|i| {
                let u = eig.eigenvectors.column(i);
                let v = c.transpose() * u;
                (eig.eigenvalues[i], v.iter().copied().collect())
            })
            .unzip()
    } else {
        let cov = (c.transpose() * &c) / denom;
        let eig = SymmetricEigen::new(cov);
        let order = descending(eig.eigenvalues.as_slice());
        order
            .into_iter()
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().copied().collect()))
            .unzip()
    };

    let largest = values.first().copied().unwrap_or(0.0);
    let rank = values
        .iter()
        .filter(|&&v| largest > 0.0 && v > largest * RANK_TOLERANCE)
        .count();
    if k > rank {
        return Err(Error::RankDeficient { requested: k, rank });
    }

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    for reduced in vectors.into_iter().take(k) {
        let mut v = vec![0.0; d];
        for (j, x) in active.iter().zip(reduced) {
            v[*j] = x;
        }
        // Gram-Schmidt against earlier components, then normalize.
        for prev in &components {
            let p = dot(&v, prev);
            v.iter_mut().zip(prev).for_each(|(x, q)| *x -= p * q);
        }
        let norm = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        if let Some(first) = v.iter().find(|x| x.abs() > SIGN_EPSILON) {
            if *first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        components.push(v);
    }

    Ok(BiasSubspace {
        k,
        d,
        mean,
        components,
        eigenvalues: values.into_iter().take(k).collect(),
        attribute: attribute.to_string(),
        fitted_from: n,
    })
}

/// Indices sorted by descending value; equal values keep index order.
fn descending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}

/// `h - sum_k <h, v_k> v_k`; the fit-time mean is not applied.
pub fn project_out(vector: &[f64], subspace: &BiasSubspace) -> Result<Vec<f64>> {
    if vector.len() != subspace.d {
        return Err(Error::DimensionMismatch {
            expected: subspace.d,
            found: vector.len(),
        });
    }
    let mut out = vector.to_vec();
    for v in &subspace.components {
        let p = dot(vector, v);
        out.iter_mut().zip(v).for_each(|(x, c)| *x -= p * c);
    }
    Ok(out)
}

/// Projects every vector; ids and order are preserved.
pub fn debias_embeddings(set: &EmbeddingSet, subspace: &BiasSubspace) -> Result<EmbeddingSet> {
    if set.is_empty() {
        return Ok(EmbeddingSet::empty(subspace.d));
    }
    let mut data = Vec::with_capacity(set.data.len());
    for row in set.rows() {
        data.extend(project_out(row, subspace)?);
    }
    EmbeddingSet::from_flat(set.ids.clone(), set.dim, data)
}

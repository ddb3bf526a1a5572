//! Exact top-K cosine similarity search.
//!
//! Every query/database dot product is computed by one function with a fixed
//! summation order: products are formed in f64 (exact for f32 inputs), summed
//! into [`LANES`] interleaved partial sums, folded pairwise and rounded to f32.
//! Tile sizes and thread count therefore only change how fast the scores are
//! produced, never their values. Ranking is by score descending, then database
//! index ascending.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::model::{EmbeddingMatrix, Validate};

pub const LANES: usize = 8;
const MICRO: usize = 4;
pub const NORM_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborList {
    pub query_id: String,
    pub neighbors: Vec<Neighbor>,
}

impl Validate for NeighborList {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for w in self.neighbors.windows(2) {
            match w[0].score.total_cmp(&w[1].score) {
                Ordering::Less => {
                    out.push(Violation::new("neighbors", "scores not non-increasing"));
                    break;
                }
                Ordering::Equal if w[0].index >= w[1].index => {
                    out.push(Violation::new("neighbors", "tie not broken by ascending index"));
                    break;
                }
                _ => {}
            }
        }
        let mut idx: Vec<usize> = self.neighbors.iter().map(|n| n.index).collect();
        idx.sort_unstable();
        if idx.windows(2).any(|w| w[0] == w[1]) {
            out.push(Violation::new("neighbors", "duplicate index"));
        }
        out
    }
}

/// Performance knobs; results do not depend on them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnnConfig {
    /// Queries handled by one task.
    pub query_block: usize,
    /// Database rows scanned per tile.
    pub db_tile: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            query_block: 64,
            db_tile: 16,
        }
    }
}

/// Scales every row to unit L2 norm.
pub fn normalize_rows(m: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut values = Vec::with_capacity(m.values().len());
    for (i, row) in m.rows().enumerate() {
        let norm = row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
        if !(norm > NORM_EPSILON) {
            return Err(Error::ZeroNorm { id: m.ids()[i].clone() });
        }
        values.extend(row.iter().map(|&v| (f64::from(v) / norm) as f32));
    }
    Ok(EmbeddingMatrix::from_raw(m.ids().to_vec(), m.dim(), values))
}

#[inline(always)]
fn fold_lanes(acc: &[f64; LANES]) -> f64 {
    let mut a = *acc;
    let mut width = LANES / 2;
    while width > 0 {
        for l in 0..width {
            a[l] += a[l + width];
        }
        width /= 2;
    }
    a[0]
}

#[inline(always)]
fn to_score(dot: f64) -> f32 {
    // Adding +0.0 maps -0.0 to +0.0 so ties compare equal under total_cmp.
    dot as f32 + 0.0
}

/// `acc + a * b`. With `FUSED` this is one rounding instead of two, but `a * b`
/// is a product of two f32 values and thus exact in f64, so both forms agree.
#[inline(always)]
fn mac<const FUSED: bool>(acc: f64, a: f64, b: f64) -> f64 {
    if FUSED {
        a.mul_add(b, acc)
    } else {
        acc + a * b
    }
}

/// Dot products of `Q` f64 query rows with one f32 database row.
#[inline(always)]
fn dot_many<const Q: usize, const FUSED: bool>(queries: [&[f64]; Q], row: &[f32]) -> [f64; Q] {
    let d = row.len();
    let body = d - d % LANES;
    let mut acc = [[0.0f64; LANES]; Q];
    let mut base = 0;
    while base < body {
        let r: &[f32; LANES] = row[base..base + LANES].try_into().unwrap();
        let rv: [f64; LANES] = std::array::from_fn(|l| f64::from(r[l]));
        for q in 0..Q {
            let qc: &[f64; LANES] = queries[q][base..base + LANES].try_into().unwrap();
            for l in 0..LANES {
                acc[q][l] = mac::<FUSED>(acc[q][l], qc[l], rv[l]);
            }
        }
        base += LANES;
    }
    for j in body..d {
        let r = f64::from(row[j]);
        for q in 0..Q {
            acc[q][j - body] = mac::<FUSED>(acc[q][j - body], queries[q][j], r);
        }
    }
    std::array::from_fn(|q| fold_lanes(&acc[q]))
}

/// Similarity score used for ranking.
pub fn score(query: &[f32], row: &[f32]) -> f32 {
    let q: Vec<f64> = query.iter().map(|&v| f64::from(v)).collect();
    to_score(dot_many::<1, false>([&q], row)[0])
}

/// Heap entry ordered so that the *worst* kept neighbor is the maximum.
#[derive(Clone, Copy)]
struct Ranked(Neighbor);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .score
            .total_cmp(&self.0.score)
            .then(self.0.index.cmp(&other.0.index))
    }
}

struct TopK {
    k: usize,
    heap: BinaryHeap<Ranked>,
}

impl TopK {
    fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline(always)]
    fn offer(&mut self, index: usize, score: f32) {
        let cand = Ranked(Neighbor { index, score });
        if self.heap.len() < self.k {
            self.heap.push(cand);
        } else if let Some(mut worst) = self.heap.peek_mut() {
            if cand < *worst {
                *worst = cand;
            }
        }
    }

    fn into_sorted(self) -> Vec<Neighbor> {
        self.heap.into_sorted_vec().into_iter().map(|r| r.0).collect()
    }
}

#[inline(always)]
fn scan_block_impl<const FUSED: bool>(queries: &[f64], dim: usize, database: &EmbeddingMatrix, k: usize, db_tile: usize) -> Vec<Vec<Neighbor>> {
    let nq = queries.len() / dim;
    let q = |i: usize| &queries[i * dim..(i + 1) * dim];
    let mut heaps: Vec<TopK> = (0..nq).map(|_| TopK::new(k)).collect();
    let n = database.len();
    let mut tile_start = 0;
    while tile_start < n {
        let tile_end = (tile_start + db_tile).min(n);
        let mut qi = 0;
        while qi + MICRO <= nq {
            let qs = [q(qi), q(qi + 1), q(qi + 2), q(qi + 3)];
            for j in tile_start..tile_end {
                let dots = dot_many::<MICRO, FUSED>(qs, database.row(j));
                for (m, dot) in dots.into_iter().enumerate() {
                    heaps[qi + m].offer(j, to_score(dot));
                }
            }
            qi += MICRO;
        }
        for rest in qi..nq {
            let qs = [q(rest)];
            for j in tile_start..tile_end {
                let dot = dot_many::<1, FUSED>(qs, database.row(j))[0];
                heaps[rest].offer(j, to_score(dot));
            }
        }
        tile_start = tile_end;
    }
    heaps.into_iter().map(TopK::into_sorted).collect()
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f,avx2,fma")]
unsafe fn scan_block_avx512(queries: &[f64], dim: usize, database: &EmbeddingMatrix, k: usize, db_tile: usize) -> Vec<Vec<Neighbor>> {
    scan_block_impl::<true>(queries, dim, database, k, db_tile)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn scan_block_avx2(queries: &[f64], dim: usize, database: &EmbeddingMatrix, k: usize, db_tile: usize) -> Vec<Vec<Neighbor>> {
    scan_block_impl::<true>(queries, dim, database, k, db_tile)
}

fn scan_block(queries: &[f64], dim: usize, database: &EmbeddingMatrix, k: usize, db_tile: usize) -> Vec<Vec<Neighbor>> {
    // The ISA variants share one summation order, so they return identical scores.
    #[cfg(target_arch = "x86_64")]
    {
        if is_x86_feature_detected!("avx512f") {
            return unsafe { scan_block_avx512(queries, dim, database, k, db_tile) };
        }
        if is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma") {
            return unsafe { scan_block_avx2(queries, dim, database, k, db_tile) };
        }
    }
    scan_block_impl::<false>(queries, dim, database, k, db_tile)
}

/// Exact K nearest database rows for every query (both sides unit-normalized).
pub fn top_k(queries: &EmbeddingMatrix, database: &EmbeddingMatrix, k: usize) -> Result<Vec<NeighborList>> {
    top_k_with(queries, database, k, &KnnConfig::default())
}

pub fn top_k_with(
    queries: &EmbeddingMatrix,
    database: &EmbeddingMatrix,
    k: usize,
    config: &KnnConfig,
) -> Result<Vec<NeighborList>> {
    if queries.dim() != database.dim() {
        return Err(Error::DimensionMismatch {
            left: queries.dim(),
            right: database.dim(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if k > database.len() {
        return Err(Error::KTooLarge { k, n: database.len() });
    }
    let dim = queries.dim();
    let block = config.query_block.max(1);
    let tile = config.db_tile.max(1);
    let blocks: Vec<Vec<Vec<Neighbor>>> = queries
        .values()
        .par_chunks(block * dim)
        .map(|chunk| {
            let q64: Vec<f64> = chunk.iter().map(|&v| f64::from(v)).collect();
            scan_block(&q64, dim, database, k, tile)
        })
        .collect();
    Ok(blocks
        .into_iter()
        .flatten()
        .zip(queries.ids())
        .map(|(neighbors, id)| NeighborList {
            query_id: id.clone(),
            neighbors,
        })
        .collect())
}

/// CSV dump: `query_id,rank,db_id,score` with 1-based ranks and 9 significant digits.
pub fn write_neighbors_csv<W: Write>(
    out: W,
    lists: &[NeighborList],
    database: &EmbeddingMatrix,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["query_id", "rank", "db_id", "score"])?;
    for list in lists {
        for (rank, n) in list.neighbors.iter().enumerate() {
            w.write_record([
                list.query_id.as_str(),
                &(rank + 1).to_string(),
                database.ids()[n.index].as_str(),
                &format!("{:.8e}", n.score),
            ])?;
        }
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f32]]) -> EmbeddingMatrix {
        let d = rows[0].len();
        EmbeddingMatrix::new(
            (0..rows.len()).map(|i| format!("r{i}")).collect(),
            d,
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn normalizes_3_4() {
        let m = normalize_rows(&matrix(&[&[3.0, 4.0]])).unwrap();
        assert_eq!(m.row(0), [0.6, 0.8]);
    }

    #[test]
    fn normalize_idempotent_and_rejects_zero() {
        let m = normalize_rows(&matrix(&[&[0.6, 0.8], &[1.0, 0.0]])).unwrap();
        for (a, b) in m.values().iter().zip([0.6f32, 0.8, 1.0, 0.0]) {
            assert!((a - b).abs() < 1e-7);
        }
        let err = normalize_rows(&matrix(&[&[1.0, 1.0], &[0.0, 0.0]])).unwrap_err();
        assert!(matches!(err, Error::ZeroNorm { id } if id == "r1"));
    }

    #[test]
    fn orthonormal_tie_goes_to_lower_index() {
        let db = matrix(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let q = matrix(&[&[1.0, 0.0, 0.0]]);
        let out = top_k(&q, &db, 2).unwrap();
        assert_eq!(
            out[0].neighbors,
            vec![Neighbor { index: 0, score: 1.0 }, Neighbor { index: 1, score: 0.0 }]
        );
        assert!(out[0].validate().is_empty());
    }

    #[test]
    fn identical_rows_ordered_by_index() {
        let v: &[f32] = &[0.6, 0.8];
        let other: &[f32] = &[0.8, -0.6];
        let db = matrix(&[other, other, v, other, other, v, other]);
        let q = matrix(&[v]);
        let out = top_k(&q, &db, 2).unwrap();
        let idx: Vec<usize> = out[0].neighbors.iter().map(|n| n.index).collect();
        assert_eq!(idx, [2, 5]);
        assert_eq!(out[0].neighbors[0].score, out[0].neighbors[1].score);
        assert!((out[0].neighbors[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn negative_zero_ties_with_zero() {
        let db = matrix(&[&[0.0, 1.0], &[0.0, -1.0], &[1.0, 0.0]]);
        let q = matrix(&[&[-1.0, 0.0]]);
        // scores: 0 (+0 from -0*... ), 0, -1
        let out = top_k(&q, &db, 2).unwrap();
        let idx: Vec<usize> = out[0].neighbors.iter().map(|n| n.index).collect();
        assert_eq!(idx, [0, 1]);
    }

    #[test]
    fn argument_errors() {
        let db = matrix(&[&[1.0, 0.0]]);
        let q3 = matrix(&[&[1.0, 0.0, 0.0]]);
        assert!(matches!(top_k(&q3, &db, 1), Err(Error::DimensionMismatch { .. })));
        let q = matrix(&[&[1.0, 0.0]]);
        assert!(matches!(top_k(&q, &db, 2), Err(Error::KTooLarge { k: 2, n: 1 })));
        assert!(top_k(&q, &db, 0).is_err());
    }

    #[test]
    fn lane_tail_handled() {
        // d = 11 exercises both the lane body and the tail.
        let a: Vec<f32> = (0..11).map(|i| i as f32 / 10.0).collect();
        let b: Vec<f32> = (0..11).map(|i| 1.0 - i as f32 / 20.0).collect();
        let exact: f64 = a.iter().zip(&b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
        assert!((f64::from(score(&a, &b)) - exact).abs() < 1e-6);
    }

    #[test]
    fn neighbor_csv() {
        let db = matrix(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let q = matrix(&[&[1.0, 0.0]]);
        let out = top_k(&q, &db, 2).unwrap();
        let mut buf = Vec::new();
        write_neighbors_csv(&mut buf, &out, &db).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "query_id,rank,db_id,score\nr0,1,r0,1.00000000e0\nr0,2,r1,0.00000000e0\n"
        );
    }

    #[test]
    fn validate_flags_bad_lists() {
        let bad = NeighborList {
            query_id: "q".into(),
            neighbors: vec![Neighbor { index: 3, score: 0.5 }, Neighbor { index: 1, score: 0.5 }],
        };
        assert_eq!(bad.validate().len(), 1);
    }
}

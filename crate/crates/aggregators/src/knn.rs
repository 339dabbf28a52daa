//! k-nearest-neighbor graph construction (embedding or coordinate space) and
//! the row-stochastic neighbor-mean operator used by the graph aggregators.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::autodiff::{GradSink, Tape, Var};
use crate::scalar::Scalar;
use crate::AggError;

/// Which geometry the neighbor search runs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GraphSpace {
    /// Euclidean distance between embedding rows.
    Embedding,
    /// Euclidean distance between (col, row) tile-grid coordinates.
    Coordinate,
}

/// Undirected kNN adjacency: per-node sorted neighbor lists, symmetrized, no
/// self loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnnGraph {
    pub n: usize,
    pub neighbors: Vec<Vec<u32>>,
}

impl KnnGraph {
    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&(b as u32)).is_ok()
    }
}

/// Builds the kNN graph of `points` (one row per node): edges to the `k`
/// nearest neighbors by Euclidean distance, ties broken toward the lower
/// index, symmetrized by union, `k` capped at `N - 1`.
pub fn build_knn_graph<F: Scalar>(points: ArrayView2<'_, F>, k: usize) -> Result<KnnGraph, AggError> {
    let n = points.nrows();
    if n == 0 {
        return Err(AggError::Input("cannot build a graph over zero nodes".into()));
    }
    if k == 0 {
        return Err(AggError::Config("kNN k must be >= 1".into()));
    }
    let k = k.min(n - 1);
    if k == 0 {
        // single node: no edges
        return Ok(KnnGraph {
            n,
            neighbors: vec![Vec::new()],
        });
    }

    let sq_norms: Vec<F> = points
        .rows()
        .into_iter()
        .map(|r| r.fold(F::zero(), |acc, &v| acc + v * v))
        .collect();

    // Blocked distance computation: d2(i, j) = |i|^2 + |j|^2 - 2 <i, j>,
    // with the dot products done as one GEMM per block.
    const BLOCK: usize = 512;
    let blocks: Vec<(usize, usize)> = (0..n)
        .step_by(BLOCK)
        .map(|lo| (lo, (lo + BLOCK).min(n)))
        .collect();

    let mut directed: Vec<Vec<u32>> = blocks
        .par_iter()
        .flat_map(|&(lo, hi)| {
            let dots = points.slice(ndarray::s![lo..hi, ..]).dot(&points.t());
            let mut rows = Vec::with_capacity(hi - lo);
            let mut scratch: Vec<(F, u32)> = Vec::with_capacity(n - 1);
            for i in lo..hi {
                scratch.clear();
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let d2 = sq_norms[i] + sq_norms[j]
                        - (F::one() + F::one()) * dots[[i - lo, j]];
                    scratch.push((d2, j as u32));
                }
                let cmp = |a: &(F, u32), b: &(F, u32)| {
                    a.0.partial_cmp(&b.0)
                        .expect("finite distances")
                        .then(a.1.cmp(&b.1))
                };
                if k < scratch.len() {
                    scratch.select_nth_unstable_by(k - 1, cmp);
                    scratch.truncate(k);
                }
                let mut ids: Vec<u32> = scratch.iter().map(|&(_, j)| j).collect();
                ids.sort_unstable();
                rows.push(ids);
            }
            rows
        })
        .collect();

    // Symmetrize by union.
    let snapshot = directed.clone();
    for (i, nbrs) in snapshot.iter().enumerate() {
        for &j in nbrs {
            let back = &mut directed[j as usize];
            if back.binary_search(&(i as u32)).is_err() {
                let pos = back.partition_point(|&x| x < i as u32);
                back.insert(pos, i as u32);
            }
        }
    }

    Ok(KnnGraph {
        n,
        neighbors: directed,
    })
}

/// Row-stochastic mean over `{node} U neighbors(node)` in compressed sparse
/// row form, with the transpose precomputed for the backward pass. Isolated
/// nodes average over themselves alone.
#[derive(Debug)]
pub struct NeighborOp<F: Scalar> {
    n: usize,
    fwd: Csr<F>,
    bwd: Csr<F>,
}

#[derive(Debug)]
struct Csr<F> {
    offsets: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<F>,
}

impl<F: Scalar> NeighborOp<F> {
    pub fn from_graph(graph: &KnnGraph) -> Arc<Self> {
        let n = graph.n;
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for (i, nbrs) in graph.neighbors.iter().enumerate() {
            let w = F::fl(1.0 / (nbrs.len() + 1) as f64);
            // sorted row: self entry merged into ascending order
            let mut inserted_self = false;
            for &j in nbrs {
                if !inserted_self && (j as usize) > i {
                    cols.push(i as u32);
                    vals.push(w);
                    inserted_self = true;
                }
                cols.push(j);
                vals.push(w);
            }
            if !inserted_self {
                cols.push(i as u32);
                vals.push(w);
            }
            offsets.push(cols.len());
        }
        let fwd = Csr { offsets, cols, vals };
        let bwd = transpose(&fwd, n);
        Arc::new(NeighborOp { n, fwd, bwd })
    }

    fn apply(csr: &Csr<F>, x: &Array2<F>) -> Array2<F> {
        let mut out = Array2::zeros((csr.offsets.len() - 1, x.ncols()));
        for (i, window) in csr.offsets.windows(2).enumerate() {
            let (lo, hi) = (window[0], window[1]);
            let mut row = out.row_mut(i);
            for idx in lo..hi {
                let j = csr.cols[idx] as usize;
                let w = csr.vals[idx];
                row.zip_mut_with(&x.row(j), |o, &v| *o = *o + v * w);
            }
        }
        out
    }
}

fn transpose<F: Scalar>(csr: &Csr<F>, n: usize) -> Csr<F> {
    let mut counts = vec![0usize; n];
    for &c in &csr.cols {
        counts[c as usize] += 1;
    }
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    for c in &counts {
        offsets.push(offsets.last().unwrap() + c);
    }
    let mut cols = vec![0u32; csr.cols.len()];
    let mut vals = vec![F::zero(); csr.vals.len()];
    let mut cursor = offsets[..n].to_vec();
    for (row, window) in csr.offsets.windows(2).enumerate() {
        for idx in window[0]..window[1] {
            let c = csr.cols[idx] as usize;
            cols[cursor[c]] = row as u32;
            vals[cursor[c]] = csr.vals[idx];
            cursor[c] += 1;
        }
    }
    Csr { offsets, cols, vals }
}

impl<F: Scalar> Tape<F> {
    /// Message passing step: `out[i] = mean(x[j] for j in {i} U N(i))`.
    pub fn neighbor_mean(&self, op: &Arc<NeighborOp<F>>, x: Var) -> Var {
        assert_eq!(x.rows, op.n, "graph/feature row mismatch");
        let xv = self.value(x);
        let out = NeighborOp::apply(&op.fwd, &xv);
        let needs = self.needs(x);
        let back: Option<crate::autodiff::BackFn<F>> = needs.then(|| {
            let op = Arc::clone(op);
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                sink.add(x, NeighborOp::apply(&op.bwd, g));
            }) as crate::autodiff::BackFn<F>
        });
        self.push(Arc::new(out), needs, back)
    }
}

/// Grid-coordinate rows as scalars for distance computation.
pub fn coords_as_scalar<F: Scalar>(coords: &Array2<i32>) -> Array2<F> {
    let mut out = Array2::zeros(coords.dim());
    out.zip_mut_with(coords, |o, &c| *o = F::fl(c as f64));
    out
}

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use sabench_core::{DatasetManifest, EmbeddingBag, SlideRecord};

use crate::{witness_count, Result, SpatialMode, SynthSpec};

/// A generated dataset: the manifest plus all bags, in manifest order.
/// Bag paths in the manifest follow the `bags/<id>.sagb` convention used by
/// the CLI writer.
#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub manifest: DatasetManifest,
    pub bags: Vec<EmbeddingBag>,
}

/// Generates the dataset described by `spec`. Deterministic: the same spec
/// (including its seed) always produces identical bags, labels, and
/// coordinates.
pub fn generate(spec: &SynthSpec) -> Result<GeneratedDataset> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);

    // Fixed random unit direction for the witness mean shift.
    let mut direction = vec![0.0f64; spec.dim];
    loop {
        for v in direction.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for v in direction.iter_mut() {
                *v /= norm;
            }
            break;
        }
    }

    // Label sequence: exact positive count, order shuffled.
    let n_pos = spec.n_positive();
    let mut labels = vec![0u8; spec.n_bags];
    for l in labels.iter_mut().take(n_pos) {
        *l = 1;
    }
    for i in (1..labels.len()).rev() {
        let j = rng.random_range(0..=i);
        labels.swap(i, j);
    }

    let id_width = spec.n_bags.to_string().len().max(4);
    let (lo, hi) = spec.bag_size_range;
    let mut bags = Vec::with_capacity(spec.n_bags);
    let mut slides = Vec::with_capacity(spec.n_bags);

    for (bag_idx, &label) in labels.iter().enumerate() {
        let n = rng.random_range(lo..=hi);
        let n_wit = if label == 1 {
            witness_count(n, spec.witness_rate)
        } else {
            0
        };
        let witness_rows = sample_indices(&mut rng, n, n_wit);

        let mut emb = Array2::<f32>::zeros((n, spec.dim));
        for mut row in emb.rows_mut() {
            for v in row.iter_mut() {
                *v = rng.sample::<f32, _>(StandardNormal);
            }
        }
        for &w in &witness_rows {
            for (d, v) in emb.row_mut(w).iter_mut().enumerate() {
                *v += (spec.signal_shift * direction[d]) as f32;
            }
        }

        // Drawn in both modes so the random stream (and therefore every
        // embedding) is identical whether or not clustering is on.
        let center_cell = rng.random_range(0..n);
        let coords = layout_coordinates(spec, n, center_cell, &witness_rows);

        let slide_id = format!("bag_{bag_idx:0id_width$}");
        let bag = EmbeddingBag::new(slide_id.clone(), emb, Some(coords), label)?;
        slides.push(SlideRecord {
            slide_id: slide_id.clone(),
            label,
            path: format!("bags/{slide_id}.sagb"),
        });
        bags.push(bag);
    }

    let manifest = DatasetManifest::new(
        format!("synth-{:016x}", spec.content_hash()),
        spec.dim,
        format!("synthgen:v1:{:016x}", spec.content_hash()),
        slides,
    )?;
    Ok(GeneratedDataset { manifest, bags })
}

/// `k` distinct indices in `0..n`, partial Fisher-Yates, ascending order.
fn sample_indices(rng: &mut ChaCha12Rng, n: usize, k: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    let mut out = pool[..k].to_vec();
    out.sort_unstable();
    out
}

/// Assigns grid coordinates. The bag always occupies the first `n` cells
/// (row-major) of a `w x w` grid with `w = ceil(sqrt(n))`; clustered mode
/// only permutes which instance sits on which cell.
fn layout_coordinates(
    spec: &SynthSpec,
    n: usize,
    center_cell: usize,
    witness_rows: &[usize],
) -> Array2<i32> {
    let w = (n as f64).sqrt().ceil() as i32;
    let cell = |i: usize| ((i as i32) % w, (i as i32) / w);

    match spec.spatial_mode {
        SpatialMode::None => {
            Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { cell(i).0 } else { cell(i).1 })
        }
        SpatialMode::Clustered => {
            // Rank occupied cells by squared distance to a random occupied
            // center (ties by cell index); witnesses take the closest cells.
            let center = cell(center_cell);
            let mut ranked: Vec<usize> = (0..n).collect();
            ranked.sort_by_key(|&i| {
                let (cx, cy) = cell(i);
                let dx = (cx - center.0) as i64;
                let dy = (cy - center.1) as i64;
                (dx * dx + dy * dy, i)
            });

            let is_witness: Vec<bool> = {
                let mut v = vec![false; n];
                for &r in witness_rows {
                    v[r] = true;
                }
                v
            };
            let mut assignment = vec![(0i32, 0i32); n];
            let mut next_cluster = 0usize;
            let mut next_outer = witness_rows.len();
            for (inst, &wit) in is_witness.iter().enumerate() {
                let cell_idx = if wit {
                    let c = ranked[next_cluster];
                    next_cluster += 1;
                    c
                } else {
                    let c = ranked[next_outer];
                    next_outer += 1;
                    c
                };
                assignment[inst] = cell(cell_idx);
            }
            Array2::from_shape_fn((n, 2), |(i, j)| {
                if j == 0 {
                    assignment[i].0
                } else {
                    assignment[i].1
                }
            })
        }
    }
}

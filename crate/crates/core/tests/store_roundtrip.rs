//! Bag store round-trip and corruption behaviour over randomized shapes.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sabench_core::{read_bag, write_bag, CoreError, EmbeddingBag};

fn random_bag(rng: &mut ChaCha12Rng, id: &str) -> EmbeddingBag {
    let n = rng.random_range(1..40usize);
    let d = rng.random_range(1..24usize);
    let emb = Array2::from_shape_fn((n, d), |_| rng.random_range(-10.0f32..10.0));
    let coords = if rng.random_bool(0.5) {
        // distinct rows: lay instances on a wide grid
        let w = (n as f64).sqrt().ceil() as i32 + 1;
        Some(Array2::from_shape_fn((n, 2), |(i, j)| {
            let i = i as i32;
            if j == 0 {
                i % w
            } else {
                i / w
            }
        }))
    } else {
        None
    };
    let label = rng.random_range(0..2u8);
    EmbeddingBag::new(id, emb, coords, label).unwrap()
}

#[test]
fn thousand_random_bags_roundtrip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    for i in 0..1000 {
        let id = format!("bag{i:04}");
        let bag = random_bag(&mut rng, &id);
        let path = dir.path().join(format!("{id}.sagb"));
        write_bag(&bag, &path).unwrap();
        let back = read_bag(&path).unwrap();
        assert_eq!(back, bag, "round-trip mismatch for {id}");
    }
}

#[test]
fn truncation_at_any_offset_is_an_error_not_a_partial_bag() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let bag = random_bag(&mut rng, "t");
    let path = dir.path().join("t.sagb");
    write_bag(&bag, &path).unwrap();
    let full = std::fs::read(&path).unwrap();

    for _ in 0..64 {
        let cut = rng.random_range(0..full.len());
        let trunc_path = dir.path().join("trunc.sagb");
        std::fs::write(&trunc_path, &full[..cut]).unwrap();
        match read_bag(&trunc_path) {
            Err(CoreError::Corruption(_)) | Err(CoreError::Format(_)) => {}
            Ok(_) => panic!("truncated file at {cut}/{} bytes parsed as a bag", full.len()),
            Err(e) => panic!("unexpected error class for truncation: {e}"),
        }
    }
}

#[test]
fn manifest_roundtrip_200_slides() {
    let dir = tempfile::tempdir().unwrap();
    let slides: Vec<_> = (0..200)
        .map(|i| sabench_core::SlideRecord {
            slide_id: format!("s{i:04}"),
            label: (i % 2) as u8,
            path: format!("bags/s{i:04}.sagb"),
        })
        .collect();
    let m = sabench_core::DatasetManifest::new("round", 384, "synthgen:feedface", slides).unwrap();
    let path = dir.path().join("manifest.txt");
    sabench_core::save_manifest(&m, &path).unwrap();
    let back = sabench_core::load_manifest(&path).unwrap();
    assert_eq!(back, m);
}

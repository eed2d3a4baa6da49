use datasets::{
    gen_gyroscope, gen_near_pi, gen_reflection, gen_stability, generate_by_name, read_dataset,
    write_dataset, DatasetError, NearPiKind,
};
use geometry::negation_margin;
use numkit::det;
use proptest::prelude::*;

#[test]
fn gyroscope_shapes_and_unit_norms() {
    let pair = gen_gyroscope(42, 30, 10, 16, 40);
    assert_eq!(pair.train.inputs.shape(), &[30, 40, 16]);
    assert_eq!(pair.val.inputs.shape(), &[10, 40, 16]);
    for ds in [&pair.train, &pair.val] {
        for pos in 0..ds.count * ds.seq_len {
            let row = &ds.inputs.data()[pos * 16..(pos + 1) * 16];
            let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-10, "input norm {norm}");
            let row = &ds.targets.data()[pos * 16..(pos + 1) * 16];
            let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-10, "target norm {norm}");
        }
    }
    // Targets are inputs shifted one step.
    let per = 40 * 16;
    for i in 0..5 {
        let x = &pair.train.inputs.data()[i * per..(i + 1) * per];
        let y = &pair.train.targets.data()[i * per..(i + 1) * per];
        assert_eq!(&x[16..], &y[..per - 16]);
    }
}

#[test]
fn stability_impulse_and_constant_target() {
    let pair = gen_stability(7, 12, 4, 64, 127);
    assert_eq!(pair.train.inputs.shape(), &[12, 127, 64]);
    assert_eq!(pair.val.inputs.shape(), &[4, 127, 64]);
    let ds = &pair.train;
    for i in 0..ds.count {
        let base = i * 127 * 64;
        let x0 = &ds.inputs.data()[base..base + 64];
        let norm: f64 = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        // Zero input after position 0.
        assert!(ds.inputs.data()[base + 64..base + 127 * 64]
            .iter()
            .all(|&v| v == 0.0));
        // Constant target equal to x0 everywhere.
        for t in 0..127 {
            assert_eq!(&ds.targets.data()[base + t * 64..base + (t + 1) * 64], x0);
        }
    }
}

#[test]
fn reflection_targets_negate_inputs() {
    let pair = gen_reflection(3, 100, 64);
    assert_eq!(pair.train.inputs.shape(), &[100, 1, 64]);
    assert_eq!(pair.val.inputs.shape(), &[500, 1, 64]);
    for (x, y) in pair
        .train
        .inputs
        .data()
        .iter()
        .zip(pair.train.targets.data())
    {
        assert_eq!(*y, -*x);
    }
}

#[test]
fn near_pi_rotation_structure() {
    let single = datasets::near_pi_rotation(NearPiKind::Single, 64);
    // Exactly one non-identity 2x2 block; 62 coordinate directions fixed.
    for i in 2..64 {
        for j in 0..64 {
            let expected = if i == j { 1.0 } else { 0.0 };
            assert_eq!(single.get(i, j), expected);
        }
    }
    assert!((single.get(0, 0) - 3.10f64.cos()).abs() < 1e-15);

    let multi = datasets::near_pi_rotation(NearPiKind::Multi, 64);
    // Near -I but not -I, proper rotation.
    let mut max_plus_i = 0.0f64;
    for i in 0..64 {
        for j in 0..64 {
            let idv = if i == j { 1.0 } else { 0.0 };
            max_plus_i = max_plus_i.max((multi.get(i, j) + idv).abs());
        }
    }
    assert!(max_plus_i < 2e-3, "R + I max entry {max_plus_i}");
    assert!(negation_margin(&multi) > 0.0);
    assert!((det(&multi) - 1.0).abs() <= 1e-9);

    let pair = gen_near_pi(NearPiKind::Single, 11, 8, 2, 64, 127);
    assert_eq!(pair.train.inputs.shape(), &[8, 127, 64]);
    assert_eq!(pair.val.inputs.shape(), &[2, 127, 64]);
    // Isometric targets: consecutive norms match to 1e-10.
    let d = 64;
    for pos in 0..8 * 127 {
        let x = &pair.train.inputs.data()[pos * d..(pos + 1) * d];
        let y = &pair.train.targets.data()[pos * d..(pos + 1) * d];
        let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((nx - ny).abs() <= 1e-10);
    }
}

#[test]
fn determinism_and_split_disjointness() {
    let a = gen_stability(123, 6, 3, 8, 5);
    let b = gen_stability(123, 6, 3, 8, 5);
    assert_eq!(a.train, b.train);
    assert_eq!(a.val, b.val);
    // Different seeds change the data; train and val differ.
    let c = gen_stability(124, 6, 3, 8, 5);
    assert_ne!(a.train.inputs, c.train.inputs);
    assert_ne!(
        a.train.inputs.data()[..8],
        a.val.inputs.data()[..8],
        "train/val substreams must differ"
    );
}

#[test]
fn file_round_trip_and_error_paths() {
    let dir = tempfile::tempdir().unwrap();
    let pair = gen_gyroscope(5, 4, 2, 4, 6);
    let path = dir.path().join("gyro-train.geo");
    write_dataset(&pair.train, &path).unwrap();
    let loaded = read_dataset(&path).unwrap();
    assert_eq!(loaded, pair.train);

    // Re-writing produces identical bytes.
    let path2 = dir.path().join("again.geo");
    write_dataset(&loaded, &path2).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());

    // Corrupted magic.
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] = b'X';
    let bad = dir.path().join("bad.geo");
    std::fs::write(&bad, &bytes).unwrap();
    assert!(matches!(read_dataset(&bad), Err(DatasetError::Format(_))));

    // Truncated payload vs header count.
    let bytes = std::fs::read(&path).unwrap();
    let cut = dir.path().join("cut.geo");
    std::fs::write(&cut, &bytes[..bytes.len() - 16]).unwrap();
    assert!(matches!(read_dataset(&cut), Err(DatasetError::Truncated(_))));
}

#[test]
fn generate_by_name_rejects_unknown() {
    assert!(matches!(
        generate_by_name("mnist", 1),
        Err(DatasetError::InvalidInput(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn serialization_round_trips(seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let pair = gen_reflection(seed, 8, 6);
        let path = dir.path().join("r.geo");
        write_dataset(&pair.val, &path).unwrap();
        let loaded = read_dataset(&path).unwrap();
        prop_assert_eq!(loaded, pair.val);
    }
}

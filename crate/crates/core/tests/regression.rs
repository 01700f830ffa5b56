//! Golden values guarding the sampler and the classification pipeline.

use tirex_core::data::{load_csv, write_csv};
use tirex_core::evaluation::{cross_validate_k, PipelineOptions};
use tirex_core::synthetic::{sample, ModelPreset};
use tirex_core::Method;

const MODEL_A_N5_SEED42: &str = include_str!("fixtures/model_a_n5_seed42.csv");

#[test]
fn model_a_sample_matches_fixture_bytes() {
    let ds = sample(&ModelPreset::A.spec(), 5, 42).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.csv");
    write_csv(&ds, &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), MODEL_A_N5_SEED42);
}

#[test]
fn fixture_round_trips_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.csv");
    std::fs::write(&path, MODEL_A_N5_SEED42).unwrap();
    let loaded = load_csv(&path, None).unwrap();
    assert_eq!(loaded, sample(&ModelPreset::A.spec(), 5, 42).unwrap());
}

#[test]
fn model_a_cross_validated_k() {
    let ds = sample(&ModelPreset::A.spec(), 10_000, 1).unwrap();
    let r = cross_validate_k(&ds, Method::Tirex1, 1, &[464, 2000], 5, 0.98, 1, &PipelineOptions::default())
        .unwrap();
    assert_eq!(r.k, 2000);
    assert_eq!(r.per_k.len(), 2);
    assert!((r.auc - 0.681_605_867_346_938_7).abs() < 1e-12, "{}", r.auc);
    assert!((r.per_k[0].1 - 0.662_220_663_265_306_2).abs() < 1e-12, "{}", r.per_k[0].1);
}

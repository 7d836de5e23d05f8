use std::path::PathBuf;

use sabtv_core::harness::{
    count_digits, execute, ingest_mnist, run_experiment, sweep, DatasetPart, SweepParameter,
};
use sabtv_core::ExperimentConfig;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist37").join(name)
}

const SMOKE: &str = r#"
[problem]
kind = "quadratic"
n = 5
dim = 3
condition_number = 3.0
seed = 11

[schedule]
kind = "rotating"
extra_edges = 3
seed = 2

[oracle]
sigma = 0.02

[run]
algorithm = "sabtv"
alpha = 0.03
iterations = 1500
record_every = 50

[experiment]
seeds = [1, 2, 3]
"#;

#[test]
fn seeded_runs_are_reproducible_and_converge() {
    let cfg = ExperimentConfig::from_toml(SMOKE).unwrap();
    let a = execute(&cfg).unwrap();
    let b = execute(&cfg).unwrap();
    assert_eq!(a.seeds.len(), 3);
    for (sa, sb) in a.seeds.iter().zip(&b.seeds) {
        assert_eq!(sa.rows, sb.rows);
    }
    assert_ne!(a.seeds[0].rows.last(), a.seeds[1].rows.last());
    let first = &a.aggregate[0];
    let last = a.final_row();
    assert_eq!(last.k, 1500);
    assert!(last.residual.0 < 1e-2 * first.residual.0, "{:?} -> {:?}", first.residual, last.residual);
    assert!(a.seeds.iter().all(|s| s.rows.last().unwrap().grad_evals == 1500 * 5));
}

#[test]
fn artifacts_reload_as_an_equivalent_config() {
    let cfg = ExperimentConfig::from_toml(SMOKE).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("smoke");
    let r = run_experiment(&cfg, &out).unwrap();
    let resolved = ExperimentConfig::load(&out.join("config.resolved.toml")).unwrap();
    let again = execute(&resolved).unwrap();
    assert_eq!(r.final_row(), again.final_row());

    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 1500 / 50 + 1);
    // re-running into a finished directory replaces it
    run_experiment(&cfg, &out).unwrap();
    assert!(!dir.path().join("smoke.partial").exists());
}

#[test]
fn sweep_orders_plateaus_by_alpha() {
    let mut cfg = ExperimentConfig::from_toml(SMOKE).unwrap();
    cfg.run.iterations = Some(3000);
    let dir = tempfile::tempdir().unwrap();
    let rows = sweep(&cfg, SweepParameter::Alpha, &[0.04, 0.01], &dir.path().join("s")).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].value < rows[1].value);
    assert!(rows[0].residual.0 < rows[1].residual.0, "{rows:?}");
}

#[test]
fn digit_counts_match_a_raw_byte_scan() {
    for (images, labels) in [
        ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        ("test-images-idx3-ubyte", "test-labels-idx1-ubyte"),
    ] {
        let raw = std::fs::read(fixture(labels)).unwrap();
        let expected = raw[8..].iter().filter(|&&d| d == 3 || d == 7).count();
        assert_eq!(count_digits(&fixture(labels), [3, 7]).unwrap(), expected);
        let part = ingest_mnist(&fixture(images), &fixture(labels), 3, 7, None, 255.0).unwrap();
        assert_eq!(part.len(), expected);
        assert_eq!(part.dim(), 784);
        let threes = raw[8..].iter().filter(|&&d| d == 3).count();
        assert_eq!(part.labels().iter().filter(|&&y| y == 1.0).count(), threes);
        assert!((0..part.len()).all(|j| part.sample(j).iter().all(|v| (0.0..=1.0).contains(v))));

        let mut buf = Vec::new();
        part.write_csv(&mut buf).unwrap();
        let back = DatasetPart::read_csv(buf.as_slice(), "csv".into()).unwrap();
        assert_eq!(back.labels(), part.labels());
        assert_eq!(back.sample(part.len() - 1), part.sample(part.len() - 1));
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sifa::{check_conditions, Mode};
use sifa_cli::matrix_io::{read_matrix, write_matrix};
use sifa_cli::report::*;
use tempfile::TempDir;

fn sifa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sifa"))
        .current_dir(dir)
        .args(args)
        .env_remove("SIFA_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = sifa(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    sifa(dir, args).status.code().unwrap()
}

fn simulated(setting: &str, seed: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["simulate", "--setting", setting, "--seed", seed, "--out", "sim"]);
    dir
}

/// Reads a document, checks that re-serializing reproduces the file byte for
/// byte, and returns it.
fn round_trip<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(path: &Path, schema: &str) -> T {
    let doc: T = read_json(path, schema).unwrap();
    assert_eq!(to_json(&doc).unwrap(), fs::read_to_string(path).unwrap());
    let again: T = serde_json::from_str(&to_json(&doc).unwrap()).unwrap();
    assert_eq!(again, doc);
    doc
}

#[test]
fn simulate_is_deterministic() {
    let a = simulated("3", "7");
    let b = simulated("3", "7");
    let mut names: Vec<PathBuf> = fs::read_dir(a.path().join("sim"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    names.sort();
    assert_eq!(names.len(), 8);
    for p in names {
        let other = b.path().join("sim").join(p.file_name().unwrap());
        assert_eq!(fs::read(&p).unwrap(), fs::read(other).unwrap(), "{}", p.display());
    }
    let c = simulated("3", "8");
    assert_ne!(
        fs::read(a.path().join("sim/y1.csv")).unwrap(),
        fs::read(c.path().join("sim/y1.csv")).unwrap()
    );
}

#[test]
fn simulate_shapes_and_formats() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["simulate", "--setting", "2", "--n", "500", "--p", "200,200", "--out", "s2"]);
    for v in ["y1.csv", "y2.csv"] {
        let m = read_matrix(&dir.path().join("s2").join(v)).unwrap();
        assert_eq!(m.values.shape(), (500, 200));
    }
    ok(dir.path(), &["simulate", "--setting", "5", "--n", "60", "--p", "20,30", "--format", "tsv", "--out", "s5"]);
    let text = fs::read_to_string(dir.path().join("s5/y2.tsv")).unwrap();
    assert!(text.starts_with("# sifa-matrix v1\n"));
    assert!(text.lines().nth(1).unwrap().contains('\t'));
    assert_eq!(read_matrix(&dir.path().join("s5/x.tsv")).unwrap().values.shape(), (60, 1));
    let prov: Provenance = round_trip(&dir.path().join("s5/provenance.json"), PROVENANCE_SCHEMA);
    assert_eq!((prov.spec.setting, prov.spec.n), (5, 60));
}

#[test]
fn truth_manifest_reloads_with_conditions() {
    for (setting, mode) in [("2", Mode::General), ("3", Mode::Orthogonal), ("4", Mode::General)] {
        let dir = simulated(setting, "3");
        let truth: TruthManifest = round_trip(&dir.path().join("sim/truth.json"), TRUTH_SCHEMA);
        assert_eq!(truth.mode, mode.to_string());
        let params = truth.params.to_params().unwrap();
        assert!(check_conditions(&params).satisfied(mode, 1e-8), "setting {setting}");
    }
}

#[test]
fn fit_pipeline_and_report() {
    let dir = simulated("3", "11");
    let d = dir.path();
    let args = [
        "fit", "--views", "sim/y1.csv,sim/y2.csv", "--covariates", "sim/x.csv", "--ranks", "2,3,3",
        "--mode", "orthogonal",
    ];
    let mut a = args.to_vec();
    a.extend(["--out", "a.json"]);
    ok(d, &a);
    let mut b = args.to_vec();
    b.extend(["--out", "b.json"]);
    ok(d, &b);
    let ra: FitReportFile = round_trip(&d.join("a.json"), FIT_SCHEMA);
    let rb: FitReportFile = read_json(&d.join("b.json"), FIT_SCHEMA).unwrap();
    assert!((ra.final_loglik - rb.final_loglik).abs() <= 1e-12 * ra.final_loglik.abs());
    assert_eq!(ra.params, rb.params);
    assert_eq!(ra.configuration, "supervised");
    assert!(ra.converged);
    assert_eq!(ra.scores.rows, 500);
    assert_eq!(ra.centering.as_ref().unwrap().views.len(), 2);
    assert!(ra.loglik_trace.windows(2).all(|w| w[1] >= w[0] - 1e-8 * w[0].abs()));

    ok(d, &["metrics", "--report", "a.json", "--truth", "sim/truth.json", "--out", "m.json"]);
    let m: MetricsReport = round_trip(&d.join("m.json"), METRICS_SCHEMA);
    let s = m.subspace.unwrap();
    assert!(s.max_principal_angle > 8.0 && s.max_principal_angle < 22.0, "{}", s.max_principal_angle);
    assert!(s.grassmannian_joint < 0.6);
}

#[test]
fn fit_without_covariates_is_jive() {
    let dir = simulated("2", "1");
    ok(dir.path(), &["fit", "--views", "sim/y1.csv,sim/y2.csv", "--ranks", "2,3,3", "--out", "j.json"]);
    let r: FitReportFile = read_json(&dir.path().join("j.json"), FIT_SCHEMA).unwrap();
    assert_eq!(r.configuration, "JIVE configuration (f=0)");
    assert!(r.covariates.is_none());
}

#[test]
fn exit_codes() {
    let dir = simulated("3", "2");
    let d = dir.path();
    assert_eq!(code(d, &["fit", "--views", "nope.csv", "--ranks", "1,1"]), 3);
    assert_eq!(code(d, &["fit", "--views", "sim/y1.csv,sim/y2.csv", "--ranks", "2,3"]), 2);
    assert_eq!(code(d, &["fit", "--views", "sim/y1.csv,sim/y2.csv", "--ranks", "2,3,3", "--mode", "diagonal"]), 2);
    assert_eq!(code(d, &["fit", "--views", "sim/y1.csv,sim/y2.csv", "--ranks", "2,3,3", "--tol", "-1"]), 2);
    assert_eq!(code(d, &["fit", "--bogus"]), 2);
    assert_eq!(
        code(d, &["fit", "--views", "sim/y1.csv,sim/y2.csv", "--ranks", "2,3,3", "--mode", "orthogonal", "--normalize", "frobenius"]),
        2
    );
    let strict = ["fit", "--views", "sim/y1.csv,sim/y2.csv", "--ranks", "2,3,3", "--max-iters", "2"];
    assert_eq!(code(d, &strict), 0);
    let mut s = strict.to_vec();
    s.push("--strict");
    assert_eq!(code(d, &s), 4);
    // the report is still written before the strict failure
    assert!(d.join("fit.json").exists());

    fs::write(d.join("ragged.csv"), "1,2\n3\n").unwrap();
    assert_eq!(code(d, &["fit", "--views", "ragged.csv", "--ranks", "0,1"]), 2);
    fs::write(d.join("short.csv"), "1,2\n3,4\n5,6\n").unwrap();
    assert_eq!(code(d, &["fit", "--views", "sim/y1.csv,short.csv", "--ranks", "1,1,1"]), 2);
    assert_eq!(code(d, &["simulate", "--setting", "9"]), 2);
    assert_eq!(code(d, &["fit", "--views", "sim/y1.csv", "--ranks", "1,1", "--out", "no/such/dir/r.json"]), 3);
}

#[test]
fn normalize_records_scales() {
    let dir = simulated("2", "4");
    let d = dir.path();
    ok(d, &[
        "fit", "--views", "sim/y1.csv,sim/y2.csv", "--covariates", "sim/x.csv", "--ranks", "2,3,3",
        "--normalize", "frobenius", "--out", "n.json",
    ]);
    let r: FitReportFile = read_json(&d.join("n.json"), FIT_SCHEMA).unwrap();
    let scales = r.normalization.unwrap();
    assert_eq!(scales.len(), 2);
    assert!(scales.iter().all(|s| *s > 1.0));
    ok(d, &["fit", "--views", "sim/y1.csv,sim/y2.csv", "--ranks", "2,3,3", "--no-center", "--out", "raw.json"]);
    let raw: FitReportFile = read_json(&d.join("raw.json"), FIT_SCHEMA).unwrap();
    assert!(raw.centering.is_none() && raw.normalization.is_none());
}

fn orthonormal(rng_seed: u64, n: usize, r: usize) -> DMatrix<f64> {
    // deterministic Gaussian-like fill, then QR
    let mut state = rng_seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
    let a = DMatrix::from_fn(n, r, |_, _| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    });
    a.qr().q().columns(0, r).into_owned()
}

#[test]
fn two_step_recovers_planted_ranks() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let (r0, r) = (26, [24usize, 5, 20]);
    let n = 200;
    let basis = orthonormal(1, n, r0 + r.iter().sum::<usize>());
    let dims = [60usize, 40, 60];
    let mut files = Vec::new();
    let mut off = r0;
    for k in 0..3 {
        let cols: Vec<usize> = (0..r0).chain(off..off + r[k]).collect();
        off += r[k];
        let u = basis.select_columns(&cols);
        let g = orthonormal(10 + k as u64, dims[k], cols.len()).transpose() * 10.0;
        let name = format!("v{}.csv", k + 1);
        write_matrix(&d.join(&name), &(u * g), None).unwrap();
        files.push(name);
    }
    let views = files.join(",");
    ok(d, &["rank", "--views", &views, "--threshold", "0.999999", "--no-center", "--out", "r.json"]);
    let rep: RankReport = round_trip(&d.join("r.json"), RANK_SCHEMA);
    let t = rep.two_step.unwrap();
    assert_eq!(t.view_signal_ranks, vec![50, 31, 46]);
    assert_eq!(t.ranks, "(26,24,5,20)");
    assert!(!t.r0_clamped && t.clamped_views.is_empty());
}

#[test]
fn lcv_single_candidate_and_malformed_list() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--setting", "3", "--n", "80", "--p", "20,20", "--out", "sim"]);
    ok(d, &[
        "rank", "--views", "sim/y1.csv,sim/y2.csv", "--covariates", "sim/x.csv", "--lcv", "--candidates", "1,2,2",
        "--folds", "4", "--mode", "orthogonal", "--out", "l.json",
    ]);
    let rep: RankReport = round_trip(&d.join("l.json"), RANK_SCHEMA);
    let l = rep.lcv.unwrap();
    assert_eq!(l.selected, "(1,2,2)");
    assert_eq!(l.scores.len(), 1);
    assert_eq!(l.scores[0].len(), 4);
    for bad in ["1,2,x", "1,2;;", ";"] {
        let c = code(d, &["rank", "--views", "sim/y1.csv,sim/y2.csv", "--lcv", "--candidates", bad]);
        assert_eq!(c, 2, "{bad}");
    }
    assert_eq!(code(d, &["rank", "--views", "sim/y1.csv,sim/y2.csv"]), 2);
}

#[test]
fn metrics_of_truth_against_itself_vanish() {
    let dir = simulated("3", "5");
    let d = dir.path();
    ok(d, &["metrics", "--report", "sim/truth.json", "--truth", "sim/truth.json", "--out", "self.json"]);
    let m: MetricsReport = read_json(&d.join("self.json"), METRICS_SCHEMA).unwrap();
    let s = m.subspace.unwrap();
    assert!(s.grassmannian_joint < 1e-6);
    assert!(s.grassmannian_individual.iter().all(|g| *g < 1e-6));
    assert!(s.max_principal_angle < 1e-4);
    assert!(s.recovery_error.unwrap() < 1e-8);
}

#[test]
fn variance_table_rows_sum_to_one() {
    let dir = simulated("3", "6");
    let d = dir.path();
    ok(d, &[
        "fit", "--views", "sim/y1.csv,sim/y2.csv", "--covariates", "sim/x.csv", "--ranks", "2,3,3",
        "--out", "f.json",
    ]);
    ok(d, &[
        "metrics", "--report", "f.json", "--variance", "--groups", "a:0-4;b:5-9", "--table", "v.tsv",
        "--out", "m.json",
    ]);
    let m: MetricsReport = round_trip(&d.join("m.json"), METRICS_SCHEMA);
    let v = m.variance.unwrap();
    assert_eq!(v.group_names, vec!["a", "b"]);
    for r in &v.rows {
        assert!((r.joint + r.individual + r.noise - 1.0).abs() < 1e-8);
        assert!((r.joint_groups.iter().sum::<f64>() + r.joint_unknown - 1.0).abs() < 1e-8);
        assert!((r.individual_groups.iter().sum::<f64>() + r.individual_unknown - 1.0).abs() < 1e-8);
    }
    let table = fs::read_to_string(d.join("v.tsv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "view\tpart\tshare\ta\tb\tunknown");
    assert_eq!(table.lines().count(), 1 + 3 * 2);
    // groups must partition the covariate columns
    assert_eq!(code(d, &["metrics", "--report", "f.json", "--variance", "--groups", "a:0-3"]), 2);
    assert_eq!(code(d, &["metrics", "--report", "f.json", "--variance", "--groups", "a0-3"]), 2);
    assert_eq!(code(d, &["metrics", "--report", "f.json"]), 2);
}

#[test]
fn bench_reports_both_modes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let out = ok(d, &["bench", "--sizes", "100,100,100,10", "--repeats", "2", "--table", "t.csv", "--out", "b.json"]);
    assert!(out.contains("orthogonal"));
    let b: BenchReport = round_trip(&d.join("b.json"), BENCH_SCHEMA);
    assert_eq!(b.rows.len(), 2);
    for r in &b.rows {
        assert_eq!(r.seconds.len(), 2);
        assert_eq!(r.entries, 100 * 200);
        assert!(r.sd_seconds >= 0.0 && r.mean_seconds > 0.0);
    }
    assert_eq!(fs::read_to_string(d.join("t.csv")).unwrap().lines().count(), 3);
    assert_eq!(code(d, &["bench", "--sizes", "100,100"]), 2);
}

#[test]
fn config_file_and_overrides() {
    let dir = simulated("3", "9");
    let d = dir.path();
    fs::write(
        d.join("run.toml"),
        "seed = 3\nthreads = 1\n[fit]\nviews = [\"sim/y1.csv\", \"sim/y2.csv\"]\nranks = \"2,3,3\"\nmode = \"orthogonal\"\nout = \"cfg.json\"\n",
    )
    .unwrap();
    ok(d, &["--config", "run.toml", "fit"]);
    let r: FitReportFile = read_json(&d.join("cfg.json"), FIT_SCHEMA).unwrap();
    assert_eq!((r.settings.mode.as_str(), r.settings.seed), ("orthogonal", 3));
    ok(d, &["--config", "run.toml", "fit", "--mode", "general", "--seed", "5", "--out", "over.json"]);
    let r: FitReportFile = read_json(&d.join("over.json"), FIT_SCHEMA).unwrap();
    assert_eq!((r.settings.mode.as_str(), r.settings.seed), ("general", 5));

    fs::write(d.join("bad.toml"), "[fit]\nrank = \"2,3,3\"\n").unwrap();
    assert_eq!(code(d, &["--config", "bad.toml", "fit"]), 2);
    fs::write(d.join("top.toml"), "verbose = true\n").unwrap();
    assert_eq!(code(d, &["--config", "top.toml", "fit"]), 2);
    assert_eq!(code(d, &["--config", "absent.toml", "fit"]), 3);
}

#[test]
fn report_readers_reject_wrong_schema() {
    let dir = simulated("3", "10");
    let d = dir.path();
    assert!(read_json::<FitReportFile>(&d.join("sim/truth.json"), FIT_SCHEMA).is_err());
    assert_eq!(code(d, &["metrics", "--report", "sim/provenance.json", "--truth", "sim/truth.json"]), 2);
}

//! End-to-end subcommand tests driving the compiled binary through files.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use jisstpca::eval::{EvalReport, ExperimentConfig, Method, MethodSpec, CSV_HEADER};
use jisstpca::fit::Variant;
use jisstpca::io::{self, FitDocument, GroundTruthDto};
use jisstpca::linalg::{sin_theta_op, sin_theta_vec};
use jisstpca::sim::{
    FactorSpec, FactorStructure, NoiseSpec, SbmSpec, SignalSpec, SimModel, SimSpec,
};
use tempfile::TempDir;

fn jisst() -> Command {
    Command::new(env!("CARGO_BIN_EXE_jisst"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}; stderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) {
    fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

fn small_factor_spec(variant: Variant, sigma: f64) -> SimSpec {
    SimSpec {
        p: 16,
        q: 12,
        n: 18,
        seed: 11,
        model: SimModel::Factor(FactorSpec {
            variant,
            structure: FactorStructure::Unstructured,
            ranks_x: vec![2],
            ranks_y: if variant == Variant::MatrixTensor {
                vec![]
            } else {
                vec![2]
            },
            signal: SignalSpec {
                snr: 6.0,
                d_x: vec![],
                d_y: vec![],
                y_ratio: if variant == Variant::MatrixTensor {
                    None
                } else {
                    Some(1.2)
                },
                diag_x: None,
                diag_y: None,
            },
            noise: NoiseSpec {
                sigma,
                diag_mult: 2.0,
            },
        }),
    }
}

#[test]
fn simulate_writes_rereadable_deterministic_files() {
    let tmp = TempDir::new().unwrap();
    let spec_path = tmp.path().join("spec.json");
    write_json(&spec_path, &small_factor_spec(Variant::Scalar, 1.0));
    for dir in ["a", "b"] {
        let out = run(jisst()
            .arg("simulate")
            .arg(&spec_path)
            .arg(tmp.path().join(dir)));
        assert_success(&out);
    }
    for name in ["X.jst", "Y.jst", "truth.json"] {
        let a = fs::read(tmp.path().join("a").join(name)).unwrap();
        let b = fs::read(tmp.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let x = io::read_tensor(&tmp.path().join("a/X.jst")).unwrap();
    assert_eq!((x.p(), x.n_samples()), (16, 18));
    let truth: GroundTruthDto = io::load_json(&tmp.path().join("a/truth.json")).unwrap();
    assert_eq!(truth.factors.len(), 1);

    // a different replicate draws different data
    let out = run(jisst()
        .arg("simulate")
        .arg(&spec_path)
        .arg(tmp.path().join("c"))
        .args(["--replicate", "1"]));
    assert_success(&out);
    let a = fs::read(tmp.path().join("a/X.jst")).unwrap();
    let c = fs::read(tmp.path().join("c/X.jst")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn simulate_rejects_invalid_probability_naming_the_field() {
    let tmp = TempDir::new().unwrap();
    let mut sbm = SbmSpec::two_cluster();
    sbm.cluster_prob = 1.2;
    let spec = SimSpec {
        p: 20,
        q: 16,
        n: 12,
        seed: 0,
        model: SimModel::SbmPopulation(sbm),
    };
    let spec_path = tmp.path().join("spec.json");
    write_json(&spec_path, &spec);
    let out = run(jisst()
        .arg("simulate")
        .arg(&spec_path)
        .arg(tmp.path().join("out")));
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("cluster_prob"), "stderr: {err}");
}

#[test]
fn fit_recovers_noiseless_truth_through_files() {
    let tmp = TempDir::new().unwrap();
    let spec_path = tmp.path().join("spec.json");
    write_json(&spec_path, &small_factor_spec(Variant::Scalar, 0.0));
    let data_dir = tmp.path().join("data");
    assert_success(&run(jisst()
        .arg("simulate")
        .arg(&spec_path)
        .arg(&data_dir)));

    let doc_path = tmp.path().join("factors.json");
    let out = run(jisst()
        .arg("fit")
        .arg(data_dir.join("X.jst"))
        .arg(data_dir.join("Y.jst"))
        .args(["--ranks-x", "2", "--ranks-y", "2", "--lambda", "0.5"])
        .args(["--tmax", "30", "--tol", "1e-12", "--seed", "9", "--out"])
        .arg(&doc_path));
    assert_success(&out);

    let doc: FitDocument = io::load_json(&doc_path).unwrap();
    let stack = doc.stack.to_stack().unwrap();
    let truth = io::load_json::<GroundTruthDto>(&data_dir.join("truth.json"))
        .unwrap()
        .to_truth()
        .unwrap();
    let est = &stack.factors[0];
    let tru = &truth.factors[0];
    assert!(sin_theta_vec(&est.u, &tru.u) <= 1e-8);
    assert!(sin_theta_op(est.v.matrix(), tru.v.matrix()) <= 1e-8);
    assert!(
        sin_theta_op(
            est.y.basis().unwrap().matrix(),
            tru.y.basis().unwrap().matrix()
        ) <= 1e-8
    );
    let dx_true = tru.scale_x.as_scalar().unwrap();
    let dx_est = est.scale_x.as_scalar().unwrap();
    assert!((dx_est - dx_true).abs() / dx_true.abs() <= 1e-8);
    let (vx, vy) = *doc.variance_scan.last().unwrap();
    assert!(vx > 0.999 && vy > 0.999);
    assert_eq!(doc.seed, Some(9));
}

#[test]
fn fit_handles_a_matrix_second_view() {
    let tmp = TempDir::new().unwrap();
    let spec_path = tmp.path().join("spec.json");
    write_json(&spec_path, &small_factor_spec(Variant::MatrixTensor, 0.0));
    let data_dir = tmp.path().join("data");
    assert_success(&run(jisst()
        .arg("simulate")
        .arg(&spec_path)
        .arg(&data_dir)));
    assert!(data_dir.join("Y.csv").exists());

    let doc_path = tmp.path().join("factors.json");
    let out = run(jisst()
        .arg("fit")
        .arg(data_dir.join("X.jst"))
        .arg(data_dir.join("Y.csv"))
        .args(["--ranks-x", "2", "--lambda", "0.5", "--out"])
        .arg(&doc_path));
    assert_success(&out);

    let stack = io::load_json::<FitDocument>(&doc_path)
        .unwrap()
        .stack
        .to_stack()
        .unwrap();
    let truth = io::load_json::<GroundTruthDto>(&data_dir.join("truth.json"))
        .unwrap()
        .to_truth()
        .unwrap();
    assert_eq!(stack.variant, Variant::MatrixTensor);
    let est_w = stack.factors[0].y.vector().unwrap();
    let true_w = truth.factors[0].y.vector().unwrap();
    assert!(sin_theta_vec(est_w, true_w) <= 1e-8);
}

#[test]
fn fit_rejects_bad_flags_with_exit_2() {
    let tmp = TempDir::new().unwrap();
    let spec_path = tmp.path().join("spec.json");
    write_json(&spec_path, &small_factor_spec(Variant::Scalar, 0.0));
    let data_dir = tmp.path().join("data");
    assert_success(&run(jisst()
        .arg("simulate")
        .arg(&spec_path)
        .arg(&data_dir)));
    let x = data_dir.join("X.jst");
    let y = data_dir.join("Y.jst");

    // out-of-range view weight
    let out = run(jisst()
        .arg("fit")
        .arg(&x)
        .arg(&y)
        .args(["--ranks-x", "2", "--ranks-y", "2", "--lambda", "1.5"]));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("[0, 1]"));

    // rank flags are incompatible with the BIC search
    let out = run(jisst()
        .arg("fit")
        .arg(&x)
        .arg(&y)
        .args(["--ranks-x", "2", "--bic"]));
    assert_eq!(out.status.code(), Some(2));

    // no ranks at all
    let out = run(jisst().arg("fit").arg(&x).arg(&y));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("--ranks-x"));

    // mismatched rank lists
    let out = run(jisst()
        .arg("fit")
        .arg(&x)
        .arg(&y)
        .args(["--ranks-x", "2,1", "--ranks-y", "2"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_bic_selects_true_ranks_on_strong_data() {
    let tmp = TempDir::new().unwrap();
    let mut spec = small_factor_spec(Variant::Scalar, 1.0);
    if let SimModel::Factor(f) = &mut spec.model {
        f.signal.snr = 10.0;
    }
    spec.p = 20;
    spec.q = 16;
    spec.n = 24;
    let spec_path = tmp.path().join("spec.json");
    write_json(&spec_path, &spec);
    let data_dir = tmp.path().join("data");
    assert_success(&run(jisst()
        .arg("simulate")
        .arg(&spec_path)
        .arg(&data_dir)));

    let doc_path = tmp.path().join("factors.json");
    let out = run(jisst()
        .arg("fit")
        .arg(data_dir.join("X.jst"))
        .arg(data_dir.join("Y.jst"))
        .args(["--bic", "--bic-max", "4", "--lambda", "0.5", "--out"])
        .arg(&doc_path));
    assert_success(&out);
    let doc: FitDocument = io::load_json(&doc_path).unwrap();
    let grids = doc.bic_grids.as_ref().unwrap();
    assert_eq!(grids.len(), 1);
    assert_eq!(grids[0].best, (2, 2));
    let stack = doc.stack.to_stack().unwrap();
    assert_eq!((stack.factors[0].r_x(), stack.factors[0].r_y()), (2, 2));
}

#[test]
fn eval_runs_a_config_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = ExperimentConfig {
        spec: small_factor_spec(Variant::Scalar, 1.0),
        methods: vec![MethodSpec::new(Method::Jisst)],
        replicates: 2,
        snr_grid: vec![],
        seed: 5,
    };
    let cfg_path = tmp.path().join("experiment.json");
    write_json(&cfg_path, &cfg);
    let out_dir = tmp.path().join("out");
    let out = run(jisst().arg("eval").arg(&cfg_path).arg(&out_dir));
    assert_success(&out);

    let rows = fs::read_to_string(out_dir.join("rows.csv")).unwrap();
    assert_eq!(rows.lines().next().unwrap(), CSV_HEADER);
    let aggregates = fs::read_to_string(out_dir.join("aggregates.csv")).unwrap();
    assert_eq!(
        aggregates.lines().next().unwrap(),
        "method,snr,lambda,metric,n,mean,sd,half_width"
    );
    let report: EvalReport =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert!(!report.rows.is_empty());
    assert_eq!(report.metadata.replicates, 2);
}

#[test]
fn bench_rejects_unknown_names_listing_the_choices() {
    let out = run(jisst().args(["bench", "fig3"]));
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    for name in ["fig1", "fig2", "table1", "lambda"] {
        assert!(err.contains(name), "stderr: {err}");
    }
}

#[test]
fn bench_fig1_emits_the_error_grid() {
    let tmp = TempDir::new().unwrap();
    let out = run(jisst()
        .args(["bench", "fig1"])
        .arg(tmp.path())
        .args(["--replicates", "2", "--seed", "1", "--no-plots", "--threads", "1"]));
    assert_success(&out);
    let csv = fs::read_to_string(tmp.path().join("fig1.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,snr,u1_sin_op,v1_sin_op,w1_sin_op"
    );
    let data: Vec<&str> = lines.collect();
    assert_eq!(data.len(), 10, "two methods x five signal levels");
    assert!(data.iter().all(|l| l.split(',').count() == 5));
    assert!(!tmp.path().join("fig1.svg").exists());
    assert!(tmp.path().join("fig1_rows.csv").exists());
    assert!(tmp.path().join("fig1_report.json").exists());
}

#[test]
fn bench_table1_uses_the_documented_header() {
    let tmp = TempDir::new().unwrap();
    let out = run(jisst()
        .args(["bench", "table1"])
        .arg(tmp.path())
        .args(["--replicates", "1", "--seed", "2"]));
    assert_success(&out);
    let csv = fs::read_to_string(tmp.path().join("table1.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,ari_samples,ari_x1,ari_x2,ari_y1,ari_y2");
    assert_eq!(lines.len(), 5, "header plus one row per method");
    let methods: Vec<&str> = lines[1..]
        .iter()
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(methods, ["jisst", "g-jisst", "ihosvd", "ihooi"]);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 6));
}

#[test]
fn bench_lambda_is_deterministic_and_plots_markers() {
    let tmp = TempDir::new().unwrap();
    for dir in ["a", "b"] {
        let out = run(jisst()
            .args(["bench", "lambda"])
            .arg(tmp.path().join(dir))
            .args(["--replicates", "1", "--seed", "3"]));
        assert_success(&out);
    }
    let a = fs::read(tmp.path().join("a/lambda_rows.csv")).unwrap();
    let b = fs::read(tmp.path().join("b/lambda_rows.csv")).unwrap();
    assert_eq!(a, b, "same seed must reproduce the same rows");

    let csv = fs::read_to_string(tmp.path().join("a/lambda.csv")).unwrap();
    assert_eq!(csv.lines().count(), 8, "header plus seven weights");
    let svg = fs::read_to_string(tmp.path().join("a/lambda.svg")).unwrap();
    assert!(svg.contains("norm balance"));
}

#[test]
fn invalid_thread_env_is_a_usage_error() {
    let out = run(jisst()
        .args(["bench", "fig1"])
        .env("JISST_THREADS", "many"));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("JISST_THREADS"));
}

//! The `eval` and `bench` subcommands: config-driven experiment runs and
//! benchmark presets mirroring the simulation studies, with CSV/JSON report
//! files and optional SVG plots.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;

use jisstpca::deflate::Deflation;
use jisstpca::eval::{
    aggregate_rows, lambda_sweep, run_experiment, AggregateRow, EvalReport, ExperimentConfig,
    Method, MethodSpec, RankMode,
};
use jisstpca::fit::Variant;
use jisstpca::io;
use jisstpca::sim::{
    FactorSpec, FactorStructure, NoiseSpec, SbmSpec, SignalSpec, SimModel, SimSpec,
};
use jisstpca::svg::{LinePlot, Series};
use jisstpca::{Error, Result};

const SINGLE_FACTOR_METRICS: [&str; 3] = ["u1_sin_op", "v1_sin_op", "w1_sin_op"];
const TWO_FACTOR_METRICS: [&str; 6] = [
    "u1_sin_op",
    "u2_sin_op",
    "v1_sin_op",
    "v2_sin_op",
    "w1_sin_op",
    "w2_sin_op",
];
const ARI_METRICS: [&str; 5] = ["ari_samples", "ari_x1", "ari_x2", "ari_y1", "ari_y2"];

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Experiment configuration (JSON).
    pub config: PathBuf,
    /// Output directory for rows.csv, aggregates.csv, report.json.
    #[arg(default_value = ".")]
    pub out_dir: PathBuf,
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let cfg: ExperimentConfig = io::load_json(&args.config)?;
    let report = run_experiment(&cfg)?;
    fs::create_dir_all(&args.out_dir)?;
    fs::write(args.out_dir.join("rows.csv"), report.to_csv())?;
    fs::write(args.out_dir.join("aggregates.csv"), aggregates_csv(&report))?;
    fs::write(args.out_dir.join("report.json"), report.to_json()?)?;
    println!(
        "{} rows, {} failures; wrote rows.csv, aggregates.csv, report.json to {}",
        report.rows.len(),
        report.failures.len(),
        args.out_dir.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Preset name: fig1, fig2, table1, or lambda.
    pub name: String,
    /// Output directory.
    #[arg(default_value = ".")]
    pub out_dir: PathBuf,
    /// Replicates per cell (preset-specific default).
    #[arg(long)]
    pub replicates: Option<u64>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Write only CSV and JSON, no SVG plots.
    #[arg(long)]
    pub no_plots: bool,
}

pub fn bench(args: &BenchArgs) -> Result<()> {
    let preset = match args.name.as_str() {
        "fig1" => fig1 as fn(&BenchArgs) -> Result<()>,
        "fig2" => fig2,
        "table1" => table1,
        "lambda" => lambda,
        other => {
            return Err(Error::Config(format!(
                "unknown benchmark {other:?}; available: fig1, fig2, table1, lambda"
            )))
        }
    };
    fs::create_dir_all(&args.out_dir)?;
    preset(args)
}

/// Single-factor recovery recipe: 60/60-node views on 120 samples, ranks
/// (3, 2), second-view strength 1.2x the first, unit noise. The
/// diagonal-strength flavor spreads each strength over the profiles
/// (1.5, 1, 0.8) and (1, 0.8).
fn single_factor_recipe(variant: Variant) -> SimSpec {
    let mut signal = SignalSpec {
        snr: 3.0,
        d_x: vec![],
        d_y: vec![],
        y_ratio: Some(1.2),
        diag_x: None,
        diag_y: None,
    };
    if variant == Variant::Generalized {
        signal.diag_x = Some(vec![vec![1.5, 1.0, 0.8]]);
        signal.diag_y = Some(vec![vec![1.0, 0.8]]);
    }
    SimSpec {
        p: 60,
        q: 60,
        n: 120,
        seed: 0,
        model: SimModel::Factor(FactorSpec {
            variant,
            structure: FactorStructure::Unstructured,
            ranks_x: vec![3],
            ranks_y: vec![2],
            signal,
            noise: NoiseSpec::default(),
        }),
    }
}

/// Two-factor comparison recipe: 150/50-node views on 50 samples, ranks
/// (3, 2) per view, non-orthogonal layers with strength multipliers (1, 0.5).
fn two_factor_recipe(snr: f64) -> SimSpec {
    SimSpec {
        p: 150,
        q: 50,
        n: 50,
        seed: 0,
        model: SimModel::Factor(FactorSpec {
            variant: Variant::Scalar,
            structure: FactorStructure::Unstructured,
            ranks_x: vec![3, 2],
            ranks_y: vec![3, 2],
            signal: SignalSpec {
                snr,
                d_x: vec![1.0, 0.5],
                d_y: vec![1.0, 0.5],
                y_ratio: None,
                diag_x: None,
                diag_y: None,
            },
            noise: NoiseSpec::default(),
        }),
    }
}

/// Two-cluster SBM population: 80/50-node views on 40 samples.
fn sbm_recipe() -> SimSpec {
    SimSpec {
        p: 80,
        q: 50,
        n: 40,
        seed: 0,
        model: SimModel::SbmPopulation(SbmSpec::two_cluster()),
    }
}

/// Single-factor error against the signal level, scalar and
/// diagonal-strength fits each on their own generation model, view weight
/// pinned at 1/2.
fn fig1(args: &BenchArgs) -> Result<()> {
    let replicates = args.replicates.unwrap_or(20);
    let snrs = vec![1.5, 3.0, 6.0, 12.0, 24.0];
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut metadata = None;
    for (variant, method) in [
        (Variant::Scalar, Method::Jisst),
        (Variant::Generalized, Method::GJisst),
    ] {
        let cfg = ExperimentConfig {
            spec: single_factor_recipe(variant),
            methods: vec![MethodSpec::new(method)],
            replicates,
            snr_grid: snrs.clone(),
            seed: args.seed,
        };
        let run = lambda_sweep(&cfg, &[0.5])?;
        rows.extend(run.rows);
        failures.extend(run.failures);
        metadata = Some(run.metadata);
    }
    let report = EvalReport {
        metadata: metadata.expect("two runs above"),
        aggregates: aggregate_rows(&rows),
        rows,
        failures,
        lambda_markers: Vec::new(),
    };
    write_report_files(&args.out_dir, "fig1", &report)?;
    fs::write(
        args.out_dir.join("fig1.csv"),
        wide_csv(&report, WideKey::Snr, &SINGLE_FACTOR_METRICS),
    )?;
    if !args.no_plots {
        let mut plot = LinePlot::new(
            "Single-factor recovery",
            "SNR",
            "mean sin-theta (operator)",
        );
        for method in method_order(&report) {
            for metric in SINGLE_FACTOR_METRICS {
                plot.push_series(metric_series(
                    &report,
                    &method,
                    WideKey::Snr,
                    metric,
                    &format!("{method} {metric}"),
                ));
            }
        }
        fs::write(args.out_dir.join("fig1.svg"), plot.render()?)?;
    }
    finish("fig1", args, &report, !args.no_plots);
    Ok(())
}

/// Two-factor recovery against the Tucker baselines on non-orthogonal
/// layers, over a signal-level grid.
fn fig2(args: &BenchArgs) -> Result<()> {
    let cfg = ExperimentConfig {
        spec: two_factor_recipe(8.0),
        methods: vec![
            MethodSpec::new(Method::Jisst),
            MethodSpec::new(Method::GJisst),
            MethodSpec::new(Method::Ihosvd),
            MethodSpec::new(Method::Ihooi),
        ],
        replicates: args.replicates.unwrap_or(20),
        snr_grid: vec![2.0, 4.0, 8.0, 16.0],
        seed: args.seed,
    };
    let report = run_experiment(&cfg)?;
    write_report_files(&args.out_dir, "fig2", &report)?;
    fs::write(
        args.out_dir.join("fig2.csv"),
        wide_csv(&report, WideKey::Snr, &TWO_FACTOR_METRICS),
    )?;
    if !args.no_plots {
        let mut plot = LinePlot::new(
            "Second-factor recovery vs Tucker baselines",
            "SNR",
            "mean sin-theta (operator)",
        );
        for method in method_order(&report) {
            for metric in ["v2_sin_op", "w2_sin_op"] {
                plot.push_series(metric_series(
                    &report,
                    &method,
                    WideKey::Snr,
                    metric,
                    &format!("{method} {metric}"),
                ));
            }
        }
        fs::write(args.out_dir.join("fig2.svg"), plot.render()?)?;
    }
    finish("fig2", args, &report, !args.no_plots);
    Ok(())
}

/// Clustering quality on the SBM population: sample and per-layer network
/// ARI for the joint fits (BIC ranks, partial-u deflation) and the Tucker
/// baselines (true ranks).
fn table1(args: &BenchArgs) -> Result<()> {
    let bic = |m: Method| {
        let mut ms = MethodSpec::new(m);
        ms.deflation = Deflation::PartialU;
        ms.ranks = RankMode::Bic;
        ms.bic_max = 5;
        ms
    };
    let cfg = ExperimentConfig {
        spec: sbm_recipe(),
        methods: vec![
            bic(Method::Jisst),
            bic(Method::GJisst),
            MethodSpec::new(Method::Ihosvd),
            MethodSpec::new(Method::Ihooi),
        ],
        replicates: args.replicates.unwrap_or(20),
        snr_grid: vec![],
        seed: args.seed,
    };
    let report = run_experiment(&cfg)?;
    write_report_files(&args.out_dir, "table1", &report)?;
    let mut table = String::from("method,ari_samples,ari_x1,ari_x2,ari_y1,ari_y2\n");
    for method in method_order(&report) {
        table.push_str(&method);
        for metric in ARI_METRICS {
            table.push(',');
            if let Some(v) = find_mean(&report, &method, WideKey::Snr, None, metric) {
                table.push_str(&format!("{v:.3}"));
            }
        }
        table.push('\n');
    }
    fs::write(args.out_dir.join("table1.csv"), table)?;
    finish("table1", args, &report, false);
    Ok(())
}

/// Error of the two-factor fit across a view-weight grid, with the
/// signal-balance and norm-balance weights marked.
fn lambda(args: &BenchArgs) -> Result<()> {
    let grid = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
    let cfg = ExperimentConfig {
        spec: two_factor_recipe(8.0),
        methods: vec![MethodSpec::new(Method::Jisst)],
        replicates: args.replicates.unwrap_or(10),
        snr_grid: vec![],
        seed: args.seed,
    };
    let report = lambda_sweep(&cfg, &grid)?;
    write_report_files(&args.out_dir, "lambda", &report)?;
    fs::write(
        args.out_dir.join("lambda.csv"),
        wide_csv(&report, WideKey::Lambda, &TWO_FACTOR_METRICS),
    )?;
    if !args.no_plots {
        let mut plot = LinePlot::new(
            "Sensitivity to the view weight",
            "view weight",
            "mean sin-theta (operator)",
        );
        for method in method_order(&report) {
            for metric in TWO_FACTOR_METRICS {
                plot.push_series(metric_series(
                    &report,
                    &method,
                    WideKey::Lambda,
                    metric,
                    &format!("{method} {metric}"),
                ));
            }
        }
        for m in &report.lambda_markers {
            if let Some(o) = m.oracle {
                plot.push_vline("signal balance", o);
            }
            plot.push_vline("norm balance", m.surrogate);
        }
        fs::write(args.out_dir.join("lambda.svg"), plot.render()?)?;
    }
    finish("lambda", args, &report, !args.no_plots);
    Ok(())
}

fn finish(name: &str, args: &BenchArgs, report: &EvalReport, plotted: bool) {
    println!(
        "{name}: {} rows, {} failures; wrote {name}.csv, {name}_rows.csv, {name}_report.json{} to {}",
        report.rows.len(),
        report.failures.len(),
        if plotted {
            format!(", {name}.svg")
        } else {
            String::new()
        },
        args.out_dir.display()
    );
}

/// Which grid column a pivot is keyed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WideKey {
    Snr,
    Lambda,
}

impl WideKey {
    fn name(self) -> &'static str {
        match self {
            WideKey::Snr => "snr",
            WideKey::Lambda => "lambda",
        }
    }

    fn of(self, a: &AggregateRow) -> Option<f64> {
        match self {
            WideKey::Snr => a.snr,
            WideKey::Lambda => a.lambda,
        }
    }
}

fn write_report_files(dir: &Path, stem: &str, report: &EvalReport) -> Result<()> {
    fs::write(dir.join(format!("{stem}_rows.csv")), report.to_csv())?;
    fs::write(dir.join(format!("{stem}_report.json")), report.to_json()?)?;
    Ok(())
}

/// All aggregate statistics as CSV; empty fields encode absent grid columns.
fn aggregates_csv(report: &EvalReport) -> String {
    let mut out = String::from("method,snr,lambda,metric,n,mean,sd,half_width\n");
    for a in &report.aggregates {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            a.method,
            a.snr.map(|v| v.to_string()).unwrap_or_default(),
            a.lambda.map(|v| v.to_string()).unwrap_or_default(),
            a.metric,
            a.n,
            a.mean,
            a.sd,
            a.half_width
        ));
    }
    out
}

/// Report methods in order of first appearance.
fn method_order(report: &EvalReport) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for a in &report.aggregates {
        if !out.iter().any(|m| m == &a.method) {
            out.push(a.method.clone());
        }
    }
    out
}

/// Distinct key values present in the aggregates, ascending.
fn key_values(report: &EvalReport, key: WideKey) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for a in &report.aggregates {
        if let Some(v) = key.of(a) {
            if !out.iter().any(|&e| e == v) {
                out.push(v);
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

fn find_mean(
    report: &EvalReport,
    method: &str,
    key: WideKey,
    value: Option<f64>,
    metric: &str,
) -> Option<f64> {
    report
        .aggregates
        .iter()
        .find(|a| a.method == method && a.metric == metric && key.of(a) == value)
        .map(|a| a.mean)
}

/// Aggregate means pivoted to one row per method and grid point, one column
/// per metric; an empty cell marks a grid point where every replicate
/// failed.
fn wide_csv(report: &EvalReport, key: WideKey, metrics: &[&str]) -> String {
    let mut out = String::from("method,");
    out.push_str(key.name());
    for m in metrics {
        out.push(',');
        out.push_str(m);
    }
    out.push('\n');
    for method in method_order(report) {
        for &v in &key_values(report, key) {
            out.push_str(&method);
            out.push(',');
            out.push_str(&v.to_string());
            for metric in metrics {
                out.push(',');
                if let Some(mean) = find_mean(report, &method, key, Some(v), metric) {
                    out.push_str(&format!("{mean:.6}"));
                }
            }
            out.push('\n');
        }
    }
    out
}

/// One method's mean curve over the grid, with confidence half-widths as
/// error bars.
fn metric_series(
    report: &EvalReport,
    method: &str,
    key: WideKey,
    metric: &str,
    label: &str,
) -> Series {
    let mut points = Vec::new();
    let mut bars = Vec::new();
    for v in key_values(report, key) {
        if let Some(a) = report
            .aggregates
            .iter()
            .find(|a| a.method == method && a.metric == metric && key.of(a) == Some(v))
        {
            points.push((v, a.mean));
            bars.push(a.half_width);
        }
    }
    Series::new(label, points).with_bars(bars)
}

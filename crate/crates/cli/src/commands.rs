//! The `simulate` and `fit` subcommands: files in, files out.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};

use jisstpca::deflate::{fit_multifactor, variance_explained_scan, Deflation, MultiFitOptions};
use jisstpca::fit::{Init, Variant, YData};
use jisstpca::io::{self, FactorStackDto, FitDocument, GroundTruthDto};
use jisstpca::select::{fit_multifactor_bic, BicOptions};
use jisstpca::sim::{generate, GeneratedY, SimSpec};
use jisstpca::{Error, Result};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Generation recipe (JSON).
    pub spec: PathBuf,
    /// Output directory for X.jst, Y.jst or Y.csv, and truth.json.
    #[arg(default_value = ".")]
    pub out_dir: PathBuf,
    /// Replicate index within the recipe's seed.
    #[arg(long, default_value_t = 0)]
    pub replicate: u64,
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let spec: SimSpec = io::load_json(&args.spec)?;
    let data = generate(&spec, args.replicate)?;
    fs::create_dir_all(&args.out_dir)?;
    io::write_tensor(&args.out_dir.join("X.jst"), &data.x)?;
    let y_name = match &data.y {
        GeneratedY::Tensor(t) => {
            io::write_tensor(&args.out_dir.join("Y.jst"), t)?;
            "Y.jst"
        }
        GeneratedY::Matrix(m) => {
            io::write_matrix_csv(&args.out_dir.join("Y.csv"), m)?;
            "Y.csv"
        }
    };
    io::save_json(
        &args.out_dir.join("truth.json"),
        &GroundTruthDto::from_truth(&data.truth),
    )?;
    println!(
        "wrote X.jst, {y_name}, truth.json to {}",
        args.out_dir.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    /// Tensor pair, scalar strengths.
    Scalar,
    /// Tensor pair, diagonal strengths.
    General,
    /// Tensor first view, matrix second view.
    Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DeflationArg {
    /// Subtract each fitted layer's reconstruction.
    Subtract,
    /// Project every mode onto the fitted directions' complements.
    Project,
    /// Subtract, then project the sample mode.
    PartialU,
    /// Subtract, then project the network modes.
    PartialVw,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// First-view tensor (.jst).
    pub x: PathBuf,
    /// Second view: a .jst tensor or a .csv matrix.
    pub y: PathBuf,
    /// Number of factors; defaults to the length of --ranks-x, or 1 with
    /// --bic.
    #[arg(long)]
    pub k: Option<usize>,
    /// Per-factor first-view ranks, e.g. `3,2`.
    #[arg(long, value_delimiter = ',', conflicts_with = "bic")]
    pub ranks_x: Vec<usize>,
    /// Per-factor second-view ranks; defaults to all ones for the matrix
    /// variant.
    #[arg(long, value_delimiter = ',', conflicts_with = "bic")]
    pub ranks_y: Vec<usize>,
    /// Choose each factor's ranks by BIC grid search instead of fixing them.
    #[arg(long)]
    pub bic: bool,
    /// Largest rank in the BIC grid.
    #[arg(long, default_value_t = 5)]
    pub bic_max: usize,
    /// Model variant; inferred from the second view's file type when
    /// omitted.
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Residual scheme between factor extractions.
    #[arg(long, value_enum, default_value_t = DeflationArg::Subtract)]
    pub deflation: DeflationArg,
    /// View weight: `auto` or a value in [0, 1].
    #[arg(long, default_value = "auto")]
    pub lambda: String,
    /// Iteration cap per factor.
    #[arg(long, default_value_t = 20)]
    pub tmax: usize,
    /// Convergence tolerance on the sample loading.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Recorded in the output document.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output document path.
    #[arg(long, default_value = "factors.json")]
    pub out: PathBuf,
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let lambda = parse_lambda(&args.lambda)?;
    let x = io::read_tensor(&args.x)?;
    let y_tensor;
    let y_matrix;
    let y_view = match args.y.extension().and_then(|e| e.to_str()) {
        Some("jst") => {
            y_tensor = io::read_tensor(&args.y)?;
            YData::Tensor(&y_tensor)
        }
        Some("csv") => {
            y_matrix = io::read_matrix_csv(&args.y)?;
            YData::Matrix(&y_matrix)
        }
        _ => {
            return Err(Error::Config(format!(
                "{}: the second view must be a .jst tensor or a .csv matrix",
                args.y.display()
            )))
        }
    };
    let variant = match args.variant {
        Some(VariantArg::Scalar) => Variant::Scalar,
        Some(VariantArg::General) => Variant::Generalized,
        Some(VariantArg::Matrix) => Variant::MatrixTensor,
        None => match y_view {
            YData::Tensor(_) => Variant::Scalar,
            YData::Matrix(_) => Variant::MatrixTensor,
        },
    };
    let deflation = match args.deflation {
        DeflationArg::Subtract => Deflation::Subtract,
        DeflationArg::Project => Deflation::Project,
        DeflationArg::PartialU => Deflation::PartialU,
        DeflationArg::PartialVw => Deflation::PartialVw,
    };

    let started = Instant::now();
    let (stack, bic_grids) = if args.bic {
        let opts = BicOptions {
            r_x_max: args.bic_max,
            r_y_max: args.bic_max,
            lambda,
            t_max: args.tmax,
            tol: args.tol,
            init: Init::Spectral,
        };
        let picked =
            fit_multifactor_bic(&x, y_view, args.k.unwrap_or(1), variant, deflation, &opts)?;
        (picked.stack, Some(picked.grids))
    } else {
        let mut opts = MultiFitOptions::new(paired_ranks(args, variant)?, variant, deflation);
        opts.lambda = lambda;
        opts.t_max = args.tmax;
        opts.tol = args.tol;
        (fit_multifactor(&x, y_view, &opts)?, None)
    };
    let elapsed_seconds = started.elapsed().as_secs_f64();
    let variance_scan = variance_explained_scan(&x, y_view, &stack)?;
    let (vx, vy) = variance_scan.last().copied().unwrap_or((0.0, 0.0));

    let ranks: Vec<String> = stack
        .factors
        .iter()
        .map(|f| format!("({}, {})", f.r_x(), f.r_y()))
        .collect();
    let doc = FitDocument {
        stack: FactorStackDto::from_stack(&stack),
        bic_grids,
        variance_scan,
        elapsed_seconds,
        seed: args.seed,
    };
    io::save_json(&args.out, &doc)?;
    println!(
        "fit {} factor(s) with ranks {}; variance explained {vx:.3}/{vy:.3}; {elapsed_seconds:.2} s; wrote {}",
        stack.len(),
        ranks.join(" "),
        args.out.display()
    );
    Ok(())
}

fn parse_lambda(s: &str) -> Result<Option<f64>> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    let v: f64 = s.parse().map_err(|_| {
        Error::Config(format!(
            "--lambda expects \"auto\" or a number in [0, 1], got {s:?}"
        ))
    })?;
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Config(format!("--lambda {v} outside [0, 1]")));
    }
    Ok(Some(v))
}

fn paired_ranks(args: &FitArgs, variant: Variant) -> Result<Vec<(usize, usize)>> {
    if args.ranks_x.is_empty() {
        return Err(Error::Config(
            "--ranks-x is required unless --bic is set".into(),
        ));
    }
    let ranks_y = if args.ranks_y.is_empty() && variant == Variant::MatrixTensor {
        vec![1; args.ranks_x.len()]
    } else {
        args.ranks_y.clone()
    };
    if ranks_y.len() != args.ranks_x.len() {
        return Err(Error::Config(format!(
            "--ranks-x lists {} factors but --ranks-y lists {}",
            args.ranks_x.len(),
            ranks_y.len()
        )));
    }
    if let Some(k) = args.k {
        if k != args.ranks_x.len() {
            return Err(Error::Config(format!(
                "--k {k} disagrees with the {} ranks listed",
                args.ranks_x.len()
            )));
        }
    }
    Ok(args.ranks_x.iter().copied().zip(ranks_y).collect())
}

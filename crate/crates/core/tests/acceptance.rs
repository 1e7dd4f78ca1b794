//! Release acceptance suite: one test per criterion, each printing a single
//! `criterion N (...): PASS/FAIL` line (run with `--nocapture` to see the
//! lines on success; they are shown automatically on failure).
//!
//! The step-equivalence checks re-derive every algorithm update with a local
//! Jacobi eigensolver and dense slice arithmetic, sharing no numerical code
//! with the library.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use jisstpca::baselines::ihooi;
use jisstpca::deflate::{fit_multifactor, Deflation, MultiFitOptions};
use jisstpca::eval::{
    lambda_sweep, run_experiment, EvalReport, ExperimentConfig, Method, MethodSpec, RankMode,
};
use jisstpca::fit::{fit_factor, FitOptions, Init, Variant, YData};
use jisstpca::linalg::{sin_theta_op, sin_theta_vec};
use jisstpca::select::{fit_multifactor_bic, BicOptions};
use jisstpca::sim::{
    generate, FactorSpec, FactorStructure, NoiseSpec, SbmSpec, SignalSpec, SimModel, SimSpec,
};
use jisstpca::tensor::SemiSymTensor;

fn verdict(number: u8, label: &str, ok: bool, detail: String) {
    println!(
        "criterion {number} ({label}): {} — {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {number} ({label}): {detail}");
}

fn signal(snr: f64) -> SignalSpec {
    SignalSpec {
        snr,
        d_x: vec![],
        d_y: vec![],
        y_ratio: None,
        diag_x: None,
        diag_y: None,
    }
}

/// Single-factor validation recipe: ranks (3, 2), second-view strength 1.2x
/// the first, unit noise. The diagonal-strength flavor uses the profiles
/// diag(1.5, 1, 0.8) and diag(1, 0.8).
fn validation_spec(p: usize, n: usize, snr: f64, sigma: f64, variant: Variant) -> SimSpec {
    let mut sig = signal(snr);
    sig.y_ratio = Some(1.2);
    if variant == Variant::Generalized {
        sig.diag_x = Some(vec![vec![1.5, 1.0, 0.8]]);
        sig.diag_y = Some(vec![vec![1.0, 0.8]]);
    }
    SimSpec {
        p,
        q: p,
        n,
        seed: 0,
        model: SimModel::Factor(FactorSpec {
            variant,
            structure: FactorStructure::Unstructured,
            ranks_x: vec![3],
            ranks_y: vec![2],
            signal: sig,
            noise: NoiseSpec {
                sigma,
                diag_mult: 2.0,
            },
        }),
    }
}

/// Two-factor comparative recipe: p=150, q=50, N=50, ranks (3,2) on both
/// views, non-orthogonal factors with strength multipliers (1, 0.5).
fn comparative_spec(snr: f64) -> SimSpec {
    let mut sig = signal(snr);
    sig.d_x = vec![1.0, 0.5];
    sig.d_y = vec![1.0, 0.5];
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
            signal: sig,
            noise: NoiseSpec {
                sigma: 1.0,
                diag_mult: 2.0,
            },
        }),
    }
}

fn agg_mean(report: &EvalReport, method: &str, snr: Option<f64>, lambda: Option<f64>, metric: &str) -> f64 {
    report
        .aggregates
        .iter()
        .find(|a| a.method == method && a.metric == metric && a.snr == snr && a.lambda == lambda)
        .unwrap_or_else(|| panic!("missing aggregate {method}/{metric} at snr {snr:?}, lambda {lambda:?}"))
        .mean
}

fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    (sxy * sxy) / (sxx * syy)
}

#[test]
fn c1_noiseless_exact_recovery() {
    let t0 = Instant::now();
    let spec = validation_spec(30, 40, 6.0, 0.0, Variant::Scalar);
    let data = generate(&spec, 0).unwrap();
    let truth = &data.truth.factors[0];

    let mut opts = FitOptions::new(3, 2);
    opts.lambda = Some(0.5);
    opts.t_max = 2;
    opts.tol = 0.0;
    let fit = fit_factor(&data.x, data.y.view(), Variant::Scalar, &opts).unwrap();

    let e_u = sin_theta_vec(&fit.factor.u, &truth.u);
    let e_v = sin_theta_op(fit.factor.v.matrix(), truth.v.matrix());
    let e_w = sin_theta_op(
        fit.factor.y.basis().unwrap().matrix(),
        truth.y.basis().unwrap().matrix(),
    );
    let dx_true = truth.scale_x.as_scalar().unwrap();
    let dy_true = truth.scale_y.as_scalar().unwrap();
    let e_dx = (fit.factor.scale_x.as_scalar().unwrap() - dx_true).abs() / dx_true.abs();
    let e_dy = (fit.factor.scale_y.as_scalar().unwrap() - dy_true).abs() / dy_true.abs();
    let secs = t0.elapsed().as_secs_f64();

    let ok = e_u <= 1e-8
        && e_v <= 1e-8
        && e_w <= 1e-8
        && e_dx <= 1e-8
        && e_dy <= 1e-8
        && fit.iterations <= 2
        && secs < 1.0;
    verdict(
        1,
        "noiseless exact recovery",
        ok,
        format!(
            "sin-theta u {e_u:.2e}, V {e_v:.2e}, W {e_w:.2e}; strength rel err x {e_dx:.2e}, \
             y {e_dy:.2e}; {} iterations in {secs:.2} s"
        , fit.iterations),
    );
}

#[test]
fn c2_errors_stabilize_after_the_first_steps() {
    let t0 = Instant::now();
    let spec = validation_spec(60, 120, 2.25, 1.0, Variant::Scalar);
    let reps = 20u64;

    // mean sin-theta error per iterate, from the recorded iteration trace
    let (mut u1, mut u10, mut v2, mut v10, mut w2, mut w10) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for rep in 0..reps {
        let data = generate(&spec, rep).unwrap();
        let truth = &data.truth.factors[0];
        let mut opts = FitOptions::new(3, 2);
        opts.lambda = Some(0.5);
        opts.t_max = 10;
        opts.tol = 0.0;
        let fit = fit_factor(&data.x, data.y.view(), Variant::Scalar, &opts).unwrap();
        let tr = &fit.trace;
        let w_true = truth.y.basis().unwrap().matrix();
        u1 += sin_theta_vec(&tr.u[1], &truth.u);
        u10 += sin_theta_vec(&tr.u[10], &truth.u);
        v2 += sin_theta_op(&tr.v[1], truth.v.matrix());
        v10 += sin_theta_op(&tr.v[9], truth.v.matrix());
        w2 += sin_theta_op(&tr.w[1], w_true);
        w10 += sin_theta_op(&tr.w[9], w_true);
    }
    let n = reps as f64;
    let (u1, u10, v2, v10, w2, w10) = (u1 / n, u10 / n, v2 / n, v10 / n, w2 / n, w10 / n);
    let secs = t0.elapsed().as_secs_f64();

    let ok = (u1 - u10).abs() <= 0.05 * u10
        && (v2 - v10).abs() <= 0.05 * v10
        && (w2 - w10).abs() <= 0.05 * w10
        && secs < 60.0;
    verdict(
        2,
        "errors stabilize within one or two iterations",
        ok,
        format!(
            "mean errors u: {u1:.4} @1 vs {u10:.4} @10; V: {v2:.4} @2 vs {v10:.4} @10; \
             W: {w2:.4} @2 vs {w10:.4} @10; {secs:.1} s"
        ),
    );
}

#[test]
fn c3_error_scales_linearly_with_inverse_snr() {
    let t0 = Instant::now();
    let snrs = [3.0, 6.0, 12.0, 24.0];
    let inv: Vec<f64> = snrs.iter().map(|s| 1.0 / s).collect();
    let mut detail = String::new();
    let mut ok = true;

    for (variant, method) in [
        (Variant::Scalar, Method::Jisst),
        (Variant::Generalized, Method::GJisst),
    ] {
        let cfg = ExperimentConfig {
            spec: validation_spec(60, 120, snrs[0], 1.0, variant),
            methods: vec![MethodSpec::new(method)],
            replicates: 20,
            snr_grid: snrs.to_vec(),
            seed: 303,
        };
        let report = lambda_sweep(&cfg, &[0.5]).unwrap();
        ok &= report.failure_fraction() <= 0.05;
        let label = MethodSpec::new(method).label();
        for metric in ["u1_sin_op", "v1_sin_op", "w1_sin_op"] {
            let means: Vec<f64> = snrs
                .iter()
                .map(|&s| agg_mean(&report, &label, Some(s), Some(0.5), metric))
                .collect();
            let r2 = r_squared(&inv, &means);
            detail.push_str(&format!("{label} {metric} R²={r2:.4}; "));
            ok &= r2 >= 0.95;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ok &= secs < 300.0;
    detail.push_str(&format!("{secs:.1} s"));
    verdict(3, "error scales linearly with 1/SNR", ok, detail);
}

#[test]
fn c4_outperforms_tucker_baselines_on_nonorthogonal_factors() {
    let t0 = Instant::now();
    let cfg = ExperimentConfig {
        spec: comparative_spec(8.0),
        methods: vec![MethodSpec::new(Method::Jisst), MethodSpec::new(Method::Ihooi)],
        replicates: 10,
        snr_grid: vec![],
        seed: 404,
    };
    let report = run_experiment(&cfg).unwrap();
    let mean = |m: &str, metric: &str| agg_mean(&report, m, None, None, metric);

    let mut detail = String::new();
    let mut ok = report.failure_fraction() <= 0.05;
    for metric in [
        "u1_sin_op",
        "u2_sin_op",
        "v1_sin_op",
        "v2_sin_op",
        "w1_sin_op",
        "w2_sin_op",
    ] {
        let v = mean("jisst", metric);
        detail.push_str(&format!("{metric} {v:.3}; "));
        ok &= v <= 0.2;
    }
    let (jv2, hv2) = (mean("jisst", "v2_sin_op"), mean("ihooi", "v2_sin_op"));
    let (jw2, hw2) = (mean("jisst", "w2_sin_op"), mean("ihooi", "w2_sin_op"));
    ok &= jv2 < hv2 && jw2 < hw2;
    let secs = t0.elapsed().as_secs_f64();
    ok &= secs < 600.0;
    detail.push_str(&format!(
        "vs ihooi: V2 {jv2:.3} < {hv2:.3}, W2 {jw2:.3} < {hw2:.3}; {secs:.1} s"
    ));
    verdict(4, "joint fits dominate Tucker baselines", ok, detail);
}

#[test]
fn c5_sbm_clustering_recovers_samples_and_communities() {
    let t0 = Instant::now();
    let spec = SimSpec {
        p: 80,
        q: 50,
        n: 40,
        seed: 0,
        model: SimModel::SbmPopulation(SbmSpec::two_cluster()),
    };
    let bic_method = |m: Method| {
        let mut ms = MethodSpec::new(m);
        ms.deflation = Deflation::PartialU;
        ms.ranks = RankMode::Bic;
        ms.bic_max = 5;
        ms
    };
    let cfg = ExperimentConfig {
        spec,
        methods: vec![
            bic_method(Method::Jisst),
            bic_method(Method::GJisst),
            MethodSpec::new(Method::Ihosvd),
            MethodSpec::new(Method::Ihooi),
        ],
        replicates: 20,
        snr_grid: vec![],
        seed: 505,
    };
    let report = run_experiment(&cfg).unwrap();
    let mean = |m: &str, metric: &str| agg_mean(&report, m, None, None, metric);

    let mut detail = String::new();
    let mut ok = report.failure_fraction() <= 0.05;
    for m in ["jisst", "g-jisst"] {
        for metric in ["ari_samples", "ari_x1", "ari_x2", "ari_y1", "ari_y2"] {
            let v = mean(m, metric);
            if metric == "ari_samples" || m == "jisst" {
                detail.push_str(&format!("{m} {metric} {v:.3}; "));
            }
            ok &= v >= 0.95;
        }
    }
    for m in ["ihosvd", "ihooi"] {
        for metric in ["ari_x2", "ari_y2"] {
            let v = mean(m, metric);
            detail.push_str(&format!("{m} {metric} {v:.3}; "));
            ok &= v <= 0.4;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ok &= secs < 600.0;
    detail.push_str(&format!("{secs:.1} s"));
    verdict(5, "SBM sample and community recovery", ok, detail);
}

#[test]
fn c6_bic_selects_the_true_ranks() {
    let t0 = Instant::now();
    let spec = validation_spec(60, 120, 8.0, 1.0, Variant::Scalar);
    let opts = BicOptions {
        r_x_max: 5,
        r_y_max: 5,
        lambda: Some(0.5),
        t_max: 20,
        tol: 1e-6,
        init: Init::Spectral,
    };
    let reps = 20u64;
    let mut hits = 0;
    for rep in 0..reps {
        let data = generate(&spec, rep).unwrap();
        let bic = fit_multifactor_bic(
            &data.x,
            data.y.view(),
            1,
            Variant::Scalar,
            Deflation::Subtract,
            &opts,
        )
        .unwrap();
        let f = &bic.stack.factors[0];
        if f.r_x() == 3 && f.r_y() == 2 {
            hits += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let ok = hits >= 18;
    verdict(
        6,
        "BIC grid search recovers ranks (3, 2)",
        ok,
        format!("{hits}/{reps} replicates selected (3, 2); {secs:.1} s"),
    );
}

// ---------------------------------------------------------------------------
// Independent dense-algebra transcription of one iteration of each fitting
// routine: its own Jacobi eigensolver, its own sign convention, raw slice
// arithmetic.
// ---------------------------------------------------------------------------

/// Cyclic Jacobi eigendecomposition of a symmetric matrix; returns
/// (eigenvalues, eigenvector columns).
fn jacobi_eig(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut q = DMatrix::<f64>::identity(n, n);
    let scale = a.norm().max(1.0);
    for _ in 0..60 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for i in 0..n.saturating_sub(1) {
            for j in (i + 1)..n {
                let aij = m[(i, j)];
                if aij.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[(j, j)] - m[(i, i)]) / (2.0 * aij);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mik = m[(i, k)];
                    let mjk = m[(j, k)];
                    m[(i, k)] = c * mik - s * mjk;
                    m[(j, k)] = s * mik + c * mjk;
                }
                for k in 0..n {
                    let mki = m[(k, i)];
                    let mkj = m[(k, j)];
                    m[(k, i)] = c * mki - s * mkj;
                    m[(k, j)] = s * mki + c * mkj;
                }
                for k in 0..n {
                    let qki = q[(k, i)];
                    let qkj = q[(k, j)];
                    q[(k, i)] = c * qki - s * qkj;
                    q[(k, j)] = s * qki + c * qkj;
                }
            }
        }
    }
    ((0..n).map(|i| m[(i, i)]).collect(), q)
}

/// Leading-|eigenvalue| eigenvectors, each flipped so its largest-magnitude
/// entry is positive.
fn oracle_top_abs(a: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let (vals, vecs) = jacobi_eig(a);
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&i, &j| {
        vals[j]
            .abs()
            .partial_cmp(&vals[i].abs())
            .unwrap()
            .then(i.cmp(&j))
    });
    let mut out = DMatrix::zeros(a.nrows(), r);
    for (c, &idx) in order[..r].iter().enumerate() {
        out.set_column(c, &vecs.column(idx));
    }
    for c in 0..out.ncols() {
        let mut best = 0;
        let mut best_abs = 0.0;
        for i in 0..out.nrows() {
            if out[(i, c)].abs() > best_abs {
                best_abs = out[(i, c)].abs();
                best = i;
            }
        }
        if out[(best, c)] < 0.0 {
            for i in 0..out.nrows() {
                out[(i, c)] = -out[(i, c)];
            }
        }
    }
    out
}

fn sym_slices(rng: &mut ChaCha8Rng, p: usize, n: usize) -> Vec<DMatrix<f64>> {
    (0..n)
        .map(|_| {
            let g = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
            (&g + g.transpose()) * 0.5
        })
        .collect()
}

fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Pairwise slice inner products, `G[a, b] = <S_a, S_b>`.
fn slice_gram(slices: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = slices.len();
    DMatrix::from_fn(n, n, |a, b| frob_inner(&slices[a], &slices[b]))
}

fn weighted_slice_sum(slices: &[DMatrix<f64>], u: &DVector<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(slices[0].nrows(), slices[0].ncols());
    for (k, s) in slices.iter().enumerate() {
        m += s * u[k];
    }
    m
}

/// Per-slice inner products against a fixed symmetric loading.
fn trace_vec(slices: &[DMatrix<f64>], g: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(slices.len(), |k, _| frob_inner(&slices[k], g))
}

fn max_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn max_gap_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn c7_single_iterations_match_dense_transcriptions() {
    let t0 = Instant::now();
    let (p, q, n) = (4usize, 4usize, 5usize);
    let lambda = 0.55;
    let (r_x, r_y) = (2usize, 2usize);
    let mut worst: f64 = 0.0;

    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let xs = sym_slices(&mut rng, p, n);
        let ys = sym_slices(&mut rng, q, n);
        let ym = DMatrix::from_fn(q, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = SemiSymTensor::from_slices(&xs).unwrap();
        let y = SemiSymTensor::from_slices(&ys).unwrap();

        let one_step = || {
            let mut o = FitOptions::new(r_x, r_y);
            o.lambda = Some(lambda);
            o.t_max = 1;
            o.tol = 0.0;
            o
        };
        let gx = slice_gram(&xs);
        let gy = slice_gram(&ys);
        let u0 = oracle_top_abs(
            &(&gx * lambda * lambda + &gy * (1.0 - lambda) * (1.0 - lambda)),
            1,
        )
        .column(0)
        .into_owned();
        let v1 = oracle_top_abs(&weighted_slice_sum(&xs, &u0), r_x);
        let w1 = oracle_top_abs(&weighted_slice_sum(&ys, &u0), r_y);
        let tx = trace_vec(&xs, &(&v1 * v1.transpose()));
        let ty = trace_vec(&ys, &(&w1 * w1.transpose()));

        // scalar-strength joint power iteration
        {
            let fit = fit_factor(&x, YData::Tensor(&y), Variant::Scalar, &one_step()).unwrap();
            let pooled = &tx * lambda + &ty * (1.0 - lambda);
            let u1 = &pooled / pooled.norm();
            let dx = u1.dot(&tx) / r_x as f64;
            let dy = u1.dot(&ty) / r_y as f64;
            worst = worst
                .max(max_gap_vec(&fit.trace.u[0], &u0))
                .max(max_gap(fit.factor.v.matrix(), &v1))
                .max(max_gap(fit.factor.y.basis().unwrap().matrix(), &w1))
                .max(max_gap_vec(&fit.factor.u, &u1))
                .max((fit.factor.scale_x.as_scalar().unwrap() - dx).abs())
                .max((fit.factor.scale_y.as_scalar().unwrap() - dy).abs());
        }

        // diagonal-strength flavor
        {
            let fit =
                fit_factor(&x, YData::Tensor(&y), Variant::Generalized, &one_step()).unwrap();
            let mx = weighted_slice_sum(&xs, &u0);
            let my = weighted_slice_sum(&ys, &u0);
            let dxd: Vec<f64> = (0..r_x)
                .map(|c| v1.column(c).dot(&(&mx * v1.column(c))))
                .collect();
            let dyd: Vec<f64> = (0..r_y)
                .map(|c| w1.column(c).dot(&(&my * w1.column(c))))
                .collect();
            let gxw = &v1 * DMatrix::from_diagonal(&DVector::from_row_slice(&dxd)) * v1.transpose();
            let gyw = &w1 * DMatrix::from_diagonal(&DVector::from_row_slice(&dyd)) * w1.transpose();
            let pooled = trace_vec(&xs, &gxw) * lambda + trace_vec(&ys, &gyw) * (1.0 - lambda);
            let u1 = &pooled / pooled.norm();
            let got_dx = fit.factor.scale_x.to_diagonal(r_x);
            let got_dy = fit.factor.scale_y.to_diagonal(r_y);
            let d_gap = got_dx
                .iter()
                .zip(&dxd)
                .chain(got_dy.iter().zip(&dyd))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst
                .max(max_gap(fit.factor.v.matrix(), &v1))
                .max(max_gap(fit.factor.y.basis().unwrap().matrix(), &w1))
                .max(max_gap_vec(&fit.factor.u, &u1))
                .max(d_gap);
        }

        // matrix-valued second view
        {
            let fit =
                fit_factor(&x, YData::Matrix(&ym), Variant::MatrixTensor, &one_step()).unwrap();
            let g = &gx * lambda * lambda
                + (ym.transpose() * &ym) * (1.0 - lambda) * (1.0 - lambda);
            let u0m = oracle_top_abs(&g, 1).column(0).into_owned();
            let v1m = oracle_top_abs(&weighted_slice_sum(&xs, &u0m), r_x);
            let yu = &ym * &u0m;
            let w1m = &yu / yu.norm();
            let txm = trace_vec(&xs, &(&v1m * v1m.transpose()));
            let pooled = &txm * lambda + (ym.transpose() * &w1m) * (1.0 - lambda);
            let u1m = &pooled / pooled.norm();
            let dx = u1m.dot(&txm) / r_x as f64;
            let dy = w1m.dot(&(&ym * &u1m));
            worst = worst
                .max(max_gap_vec(&fit.trace.u[0], &u0m))
                .max(max_gap(fit.factor.v.matrix(), &v1m))
                .max(max_gap_vec(fit.factor.y.vector().unwrap(), &w1m))
                .max(max_gap_vec(&fit.factor.u, &u1m))
                .max((fit.factor.scale_x.as_scalar().unwrap() - dx).abs())
                .max((fit.factor.scale_y.as_scalar().unwrap() - dy).abs());
        }

        // alternating Tucker refinement, one pass from the one-shot start
        {
            let got = ihooi(&x, &y, &[1, 1], &[1, 1], 1).unwrap();
            let mode1_gram = |s: &[DMatrix<f64>]| {
                let mut g = DMatrix::zeros(s[0].nrows(), s[0].nrows());
                for m in s {
                    g += m * m.transpose();
                }
                g
            };
            let v0 = oracle_top_abs(&mode1_gram(&xs), 2);
            let w0 = oracle_top_abs(&mode1_gram(&ys), 2);
            let u0t = oracle_top_abs(&(&gx + &gy), 2);
            let refine = |s: &[DMatrix<f64>], b: &DMatrix<f64>, u: &DMatrix<f64>, r: usize| {
                let mut g = DMatrix::zeros(s[0].nrows(), s[0].nrows());
                for c in 0..u.ncols() {
                    let sc = weighted_slice_sum(s, &u.column(c).into_owned());
                    let a = &sc * b;
                    g += &a * a.transpose();
                }
                oracle_top_abs(&g, r)
            };
            let v1t = refine(&xs, &v0, &u0t, 2);
            let w1t = refine(&ys, &w0, &u0t, 2);
            let core_gram = |s: &[DMatrix<f64>], b: &DMatrix<f64>| {
                let cores: Vec<DMatrix<f64>> =
                    s.iter().map(|m| b.transpose() * m * b).collect();
                slice_gram(&cores)
            };
            let u1t = oracle_top_abs(&(core_gram(&xs, &v1t) + core_gram(&ys, &w1t)), 2);
            worst = worst
                .max(max_gap(got.v.matrix(), &v1t))
                .max(max_gap(got.w.matrix(), &w1t))
                .max(max_gap(got.u.matrix(), &u1t));
        }
    }

    let secs = t0.elapsed().as_secs_f64();
    let ok = worst <= 1e-10;
    verdict(
        7,
        "one-iteration updates match the dense transcriptions",
        ok,
        format!("largest elementwise gap {worst:.2e} over 5 seeded instances; {secs:.2} s"),
    );
}

#[test]
fn c8_deflation_orthogonality_invariants() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let ranks = vec![(2usize, 2usize), (2, 1), (1, 1)];
    let (mut worst_u_partial, mut worst_u_proj, mut worst_v_proj) = (0.0f64, 0.0f64, 0.0f64);

    for scheme in [Deflation::PartialU, Deflation::Project] {
        for _ in 0..50 {
            let xs = sym_slices(&mut rng, 12, 16);
            let ys = sym_slices(&mut rng, 9, 16);
            let x = SemiSymTensor::from_slices(&xs).unwrap();
            let y = SemiSymTensor::from_slices(&ys).unwrap();
            let opts = MultiFitOptions::new(ranks.clone(), Variant::Scalar, scheme);
            let stack = fit_multifactor(&x, YData::Tensor(&y), &opts).unwrap();
            for i in 0..stack.factors.len() {
                for j in (i + 1)..stack.factors.len() {
                    let udot = stack.factors[i].u.dot(&stack.factors[j].u).abs();
                    match scheme {
                        Deflation::PartialU => worst_u_partial = worst_u_partial.max(udot),
                        _ => {
                            worst_u_proj = worst_u_proj.max(udot);
                            let cross = stack.factors[i].v.matrix().transpose()
                                * stack.factors[j].v.matrix();
                            worst_v_proj = worst_v_proj.max(cross.abs().max());
                        }
                    }
                }
            }
        }
    }

    let secs = t0.elapsed().as_secs_f64();
    let ok = worst_u_partial <= 1e-10 && worst_u_proj <= 1e-10 && worst_v_proj <= 1e-10;
    verdict(
        8,
        "deflation orthogonality invariants",
        ok,
        format!(
            "partial-u max |u_i'u_j| {worst_u_partial:.2e}; projection max |u_i'u_j| \
             {worst_u_proj:.2e}, max |V_i'V_j| {worst_v_proj:.2e}; 50 instances each; {secs:.1} s"
        ),
    );
}

#[test]
fn c9_view_weight_insensitivity() {
    let t0 = Instant::now();
    let grid = [0.2, 0.35, 0.5, 0.65, 0.8];
    let cfg = ExperimentConfig {
        spec: comparative_spec(8.0),
        methods: vec![MethodSpec::new(Method::Jisst)],
        replicates: 10,
        snr_grid: vec![],
        seed: 909,
    };
    let report = lambda_sweep(&cfg, &grid).unwrap();

    let mut detail = String::new();
    let mut ok = report.failure_fraction() <= 0.05;
    for metric in [
        "u1_sin_op",
        "u2_sin_op",
        "v1_sin_op",
        "v2_sin_op",
        "w1_sin_op",
        "w2_sin_op",
    ] {
        let means: Vec<f64> = grid
            .iter()
            .map(|&l| agg_mean(&report, "jisst", None, Some(l), metric))
            .collect();
        let hi = means.iter().cloned().fold(f64::MIN, f64::max);
        let lo = means.iter().cloned().fold(f64::MAX, f64::min);
        let ratio = hi / lo;
        detail.push_str(&format!("{metric} x{ratio:.2}; "));
        ok &= ratio <= 1.5;
    }
    let secs = t0.elapsed().as_secs_f64();
    ok &= secs < 600.0;
    detail.push_str(&format!("{secs:.1} s"));
    verdict(
        9,
        "errors are insensitive to the view weight",
        ok,
        detail,
    );
}

//! Model selection: BIC rank scoring and grid search per factor, the
//! BIC-guided multi-factor driver, and factor-count selection by cumulative
//! variance explained.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deflate::{Deflation, FactorStack, YResidual};
use crate::error::Error;
use crate::fit::{self, FitOptions, Init, SingleFit, Variant, YData};
use crate::tensor::SemiSymTensor;
use crate::Result;

pub use crate::fit::default_lambda;

/// Floor applied to squared residual norms before taking logs, so exact fits
/// yield a large negative score instead of `-inf`.
pub const RESIDUAL_FLOOR: f64 = 1e-300;

/// BIC score from precomputed squared residual norms:
/// `p²N·log‖X-X̂‖² + q²N·log‖Y-Ŷ‖² + (p·r_x + q·r_y)·log((p²+q²)N)`.
pub fn bic_from_residuals(
    x_resid_sq: f64,
    y_resid_sq: f64,
    p: usize,
    q: usize,
    n: usize,
    r_x: usize,
    r_y: usize,
) -> f64 {
    let (pf, qf, nf) = (p as f64, q as f64, n as f64);
    pf * pf * nf * x_resid_sq.max(RESIDUAL_FLOOR).ln()
        + qf * qf * nf * y_resid_sq.max(RESIDUAL_FLOOR).ln()
        + (pf * r_x as f64 + qf * r_y as f64) * ((pf * pf + qf * qf) * nf).ln()
}

/// BIC score of a reconstruction pair against the data.
pub fn bic_score(
    x: &SemiSymTensor,
    y: YData<'_>,
    x_hat: &SemiSymTensor,
    y_hat: YData<'_>,
    r_x: usize,
    r_y: usize,
) -> Result<f64> {
    if x.dims() != x_hat.dims() {
        return Err(Error::Dimension(format!(
            "reconstruction dims {:?} do not match data dims {:?}",
            x_hat.dims(),
            x.dims()
        )));
    }
    let x_resid_sq: f64 = x
        .as_slice()
        .iter()
        .zip(x_hat.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let y_resid_sq = match (y, y_hat) {
        (YData::Tensor(t), YData::Tensor(th)) => {
            if t.dims() != th.dims() {
                return Err(Error::Dimension(format!(
                    "reconstruction dims {:?} do not match data dims {:?}",
                    th.dims(),
                    t.dims()
                )));
            }
            t.as_slice()
                .iter()
                .zip(th.as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        }
        (YData::Matrix(m), YData::Matrix(mh)) => {
            if m.shape() != mh.shape() {
                return Err(Error::Dimension(format!(
                    "reconstruction is {:?}, data is {:?}",
                    mh.shape(),
                    m.shape()
                )));
            }
            (m - mh).iter().map(|v| v * v).sum()
        }
        _ => {
            return Err(Error::Config(
                "data and reconstruction kinds differ for the second view".into(),
            ));
        }
    };
    Ok(bic_from_residuals(
        x_resid_sq,
        y_resid_sq,
        x.p(),
        y.q(),
        x.n_samples(),
        r_x,
        r_y,
    ))
}

/// One evaluated cell of a BIC rank grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BicCell {
    pub r_x: usize,
    pub r_y: usize,
    /// Score, or `None` when the fit at these ranks failed.
    pub score: Option<f64>,
    /// The failure message for a skipped cell.
    pub error: Option<String>,
}

/// Fully evaluated rank grid with its argmin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BicGrid {
    /// Cells in row-major `(r_x, r_y)` order.
    pub cells: Vec<BicCell>,
    /// Winning ranks after tie-breaking toward smaller `r_x + r_y`, then
    /// smaller `r_x`.
    pub best: (usize, usize),
    pub best_score: f64,
}

/// Knobs for BIC-guided fitting.
#[derive(Debug, Clone)]
pub struct BicOptions {
    pub r_x_max: usize,
    pub r_y_max: usize,
    /// Fixed view weight, or `None` for the norm-balanced default resolved
    /// from the residuals at each step.
    pub lambda: Option<f64>,
    pub t_max: usize,
    pub tol: f64,
    pub init: Init,
}

impl Default for BicOptions {
    fn default() -> Self {
        BicOptions {
            r_x_max: 5,
            r_y_max: 5,
            lambda: None,
            t_max: 20,
            tol: 1e-6,
            init: Init::Spectral,
        }
    }
}

/// Result of one grid search: the winning ranks, their fit, and the scores.
#[derive(Debug)]
pub struct RankSelection {
    pub r_x: usize,
    pub r_y: usize,
    pub fit: SingleFit,
    pub grid: BicGrid,
}

/// Index of the best-scored cell under the deterministic tie-break, or
/// `None` when every cell failed.
fn best_cell(cells: &[BicCell]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in cells.iter().enumerate() {
        let Some(s) = c.score else { continue };
        let Some(b) = best else {
            best = Some(i);
            continue;
        };
        let bc = &cells[b];
        let bs = bc.score.expect("best cell always scored");
        let better = s < bs
            || (s == bs
                && (c.r_x + c.r_y < bc.r_x + bc.r_y
                    || (c.r_x + c.r_y == bc.r_x + bc.r_y && c.r_x < bc.r_x)));
        if better {
            best = Some(i);
        }
    }
    best
}

/// Fit every rank pair on the grid, score each by BIC, and return the argmin
/// cell together with its fitted factor. Failed cells are recorded and
/// skipped; it is an error for every cell to fail. Applies to the
/// tensor-pair variants only.
pub fn select_rank_single(
    x: &SemiSymTensor,
    y: YData<'_>,
    variant: Variant,
    opts: &BicOptions,
) -> Result<RankSelection> {
    if variant.is_matrix() {
        return Err(Error::Config(
            "BIC rank selection applies to tensor-valued pairs; the matrix view has no network rank".into(),
        ));
    }
    if opts.r_x_max == 0 || opts.r_x_max > x.p() {
        return Err(Error::Config(format!(
            "rank ceiling {} outside 1..={} for the first view",
            opts.r_x_max,
            x.p()
        )));
    }
    if opts.r_y_max == 0 || opts.r_y_max > y.q() {
        return Err(Error::Config(format!(
            "rank ceiling {} outside 1..={} for the second view",
            opts.r_y_max,
            y.q()
        )));
    }
    let lambda = opts.lambda.unwrap_or_else(|| default_lambda(x, y));
    let pairs: Vec<(usize, usize)> = (1..=opts.r_x_max)
        .flat_map(|rx| (1..=opts.r_y_max).map(move |ry| (rx, ry)))
        .collect();
    let mut evaluated: Vec<(BicCell, Option<SingleFit>)> = pairs
        .into_par_iter()
        .map(|(r_x, r_y)| {
            let fopts = FitOptions {
                r_x,
                r_y,
                lambda: Some(lambda),
                t_max: opts.t_max,
                tol: opts.tol,
                init: opts.init.clone(),
            };
            match fit::fit_factor(x, y, variant, &fopts).and_then(|single| {
                let xr = single.factor.x_residual_sq(x);
                let yr = single.factor.y_residual_sq(y)?;
                let score =
                    bic_from_residuals(xr, yr, x.p(), y.q(), x.n_samples(), r_x, r_y);
                if !score.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite BIC score at ranks ({r_x}, {r_y})"
                    )));
                }
                Ok((single, score))
            }) {
                Ok((single, score)) => (
                    BicCell {
                        r_x,
                        r_y,
                        score: Some(score),
                        error: None,
                    },
                    Some(single),
                ),
                Err(e) => (
                    BicCell {
                        r_x,
                        r_y,
                        score: None,
                        error: Some(e.to_string()),
                    },
                    None,
                ),
            }
        })
        .collect();

    let cells: Vec<BicCell> = evaluated.iter().map(|(c, _)| c.clone()).collect();
    let Some(best) = best_cell(&cells) else {
        let first_error = cells
            .iter()
            .find_map(|c| c.error.clone())
            .unwrap_or_else(|| "no cells evaluated".into());
        return Err(Error::Numerical(format!(
            "all {} rank-grid cells failed; first error: {first_error}",
            cells.len()
        )));
    };
    let fit = evaluated[best].1.take().expect("best cell kept its fit");
    let grid = BicGrid {
        best: (cells[best].r_x, cells[best].r_y),
        best_score: cells[best].score.expect("best cell scored"),
        cells,
    };
    Ok(RankSelection {
        r_x: grid.best.0,
        r_y: grid.best.1,
        fit,
        grid,
    })
}

/// A factor stack extracted with per-step BIC rank selection, plus the grid
/// evaluated at each step.
#[derive(Debug)]
pub struct BicStack {
    pub stack: FactorStack,
    pub grids: Vec<BicGrid>,
}

/// Extract `k` factors, choosing each factor's ranks by a fresh BIC grid
/// search on the current residuals before deflating.
pub fn fit_multifactor_bic(
    x: &SemiSymTensor,
    y: YData<'_>,
    k: usize,
    variant: Variant,
    deflation: Deflation,
    opts: &BicOptions,
) -> Result<BicStack> {
    if k == 0 {
        return Err(Error::Config("need at least one factor".into()));
    }
    if k > x.n_samples() {
        return Err(Error::Config(format!(
            "{} factors exceed the {} samples",
            k,
            x.n_samples()
        )));
    }
    let mut xr = x.clone();
    let mut yr = YResidual::from_view(y);
    let mut stack = FactorStack {
        variant,
        deflation,
        factors: Vec::with_capacity(k),
        lambdas: Vec::new(),
        residual_norms: Vec::new(),
        iterations: Vec::new(),
        converged: Vec::new(),
    };
    let mut grids = Vec::with_capacity(k);
    for _ in 0..k {
        let lambda = opts
            .lambda
            .unwrap_or_else(|| default_lambda(&xr, yr.view()));
        let step_opts = BicOptions {
            lambda: Some(lambda),
            ..opts.clone()
        };
        let selection = select_rank_single(&xr, yr.view(), variant, &step_opts)?;
        deflation.apply(&mut xr, &mut yr, &selection.fit.factor)?;
        stack.lambdas.push(lambda);
        stack
            .residual_norms
            .push((xr.frobenius_norm(), yr.frobenius_norm()));
        stack.iterations.push(selection.fit.iterations);
        stack.converged.push(selection.fit.converged);
        stack.factors.push(selection.fit.factor);
        grids.push(selection.grid);
    }
    Ok(BicStack { stack, grids })
}

/// Factor count chosen by cumulative variance explained, with the scan that
/// justified it.
#[derive(Debug)]
pub struct KSelection {
    /// Smallest `K` whose worse view fraction reaches the threshold, capped
    /// at the number of factors available.
    pub k: usize,
    /// `(fraction_x, fraction_y)` for each candidate `K` in `1..=K_max`.
    pub scan: Vec<(f64, f64)>,
    /// The full `K_max` stack the scan was computed from.
    pub stack: FactorStack,
}

/// Build a `k_max`-factor stack with `build`, then return the smallest `K`
/// whose cumulative variance explained reaches `threshold` on both views
/// (capped at `k_max` when none does).
pub fn select_k<F>(
    x: &SemiSymTensor,
    y: YData<'_>,
    build: F,
    threshold: f64,
    k_max: usize,
) -> Result<KSelection>
where
    F: FnOnce(usize) -> Result<FactorStack>,
{
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!(
            "variance threshold {threshold} outside [0, 1]"
        )));
    }
    if k_max == 0 {
        return Err(Error::Config("factor cap must be at least 1".into()));
    }
    let stack = build(k_max)?;
    if stack.is_empty() {
        return Err(Error::Config("builder produced an empty stack".into()));
    }
    let scan = crate::deflate::variance_explained_scan(x, y, &stack)?;
    let k = scan
        .iter()
        .position(|&(fx, fy)| fx.min(fy) >= threshold)
        .map(|i| i + 1)
        .unwrap_or(stack.len());
    Ok(KSelection { k, scan, stack })
}

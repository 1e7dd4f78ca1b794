//! Multi-factor extraction: sequential single-factor fits joined by one of
//! four deflation schemes, plus cumulative variance explained.
//!
//! Subtraction removes each fitted layer's reconstruction; the partial and
//! full projection schemes additionally (or instead) project residuals onto
//! the orthogonal complements of fitted directions, which enforces exact
//! orthogonality across the extracted factors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::fit::{self, Factor, FitOptions, Init, Variant, YData};
use crate::tensor::SemiSymTensor;
use crate::Result;

/// How residuals are formed between factor extractions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Deflation {
    /// Subtract the fitted layer's reconstruction.
    #[serde(rename = "subtract")]
    Subtract,
    /// Subtract, then project the sample mode onto the complement of `u`.
    #[serde(rename = "partial-u")]
    PartialU,
    /// Project every mode onto the complements of the fitted directions
    /// (no subtraction).
    #[serde(rename = "project")]
    Project,
    /// Subtract, then project the network modes onto the complements of
    /// `V` (and `W`).
    #[serde(rename = "partial-vw")]
    PartialVw,
}

impl Deflation {
    /// Apply this scheme in place.
    pub fn apply(&self, x: &mut SemiSymTensor, y: &mut YResidual, f: &Factor) -> Result<()> {
        match self {
            Deflation::Subtract => deflate_subtract(x, y, f),
            Deflation::PartialU => deflate_partial_u(x, y, f),
            Deflation::Project => deflate_project_full(x, y, f),
            Deflation::PartialVw => deflate_partial_vw(x, y, f),
        }
    }
}

/// Owned residual of the second view, deflated in place between factors.
#[derive(Debug, Clone)]
pub enum YResidual {
    Tensor(SemiSymTensor),
    Matrix(DMatrix<f64>),
}

impl YResidual {
    pub fn from_view(y: YData<'_>) -> Self {
        match y {
            YData::Tensor(t) => YResidual::Tensor(t.clone()),
            YData::Matrix(m) => YResidual::Matrix(m.clone()),
        }
    }

    pub fn view(&self) -> YData<'_> {
        match self {
            YResidual::Tensor(t) => YData::Tensor(t),
            YResidual::Matrix(m) => YData::Matrix(m),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.view().frobenius_norm()
    }
}

fn validate_deflate(x: &SemiSymTensor, y: &YResidual, f: &Factor) -> Result<()> {
    if x.p() != f.v.nrows() || x.n_samples() != f.u.len() {
        return Err(Error::Dimension(format!(
            "factor shaped for ({}, {}) samples cannot deflate a {:?} tensor",
            f.v.nrows(),
            f.u.len(),
            x.dims()
        )));
    }
    match (y, &f.y) {
        (YResidual::Tensor(t), fit::YPart::Basis(b)) => {
            if t.p() != b.nrows() || t.n_samples() != f.u.len() {
                return Err(Error::Dimension(format!(
                    "second-view factor is {}-dimensional, residual is {:?}",
                    b.nrows(),
                    t.dims()
                )));
            }
        }
        (YResidual::Matrix(m), fit::YPart::Vector(w)) => {
            if m.nrows() != w.len() || m.ncols() != f.u.len() {
                return Err(Error::Dimension(format!(
                    "second-view factor is {}-dimensional, residual is {}x{}",
                    w.len(),
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        _ => {
            return Err(Error::Config(
                "factor kind does not match the second view's residual kind".into(),
            ));
        }
    }
    Ok(())
}

/// `I - B B'` for an orthonormal `B`: projector onto the complement of its
/// column span.
fn complement_projector(b: &DMatrix<f64>) -> DMatrix<f64> {
    let p = b.nrows();
    DMatrix::identity(p, p) - b * b.transpose()
}

/// Subtract the fitted layer from both residuals.
pub fn deflate_subtract(x: &mut SemiSymTensor, y: &mut YResidual, f: &Factor) -> Result<()> {
    validate_deflate(x, y, f)?;
    x.add_outer(&f.x_loading(), &f.u, -1.0);
    match y {
        YResidual::Tensor(t) => {
            let g = f.y_loading().expect("kind checked");
            t.add_outer(&g, &f.u, -1.0);
        }
        YResidual::Matrix(m) => {
            *m -= f.y_matrix_component().expect("kind checked");
        }
    }
    Ok(())
}

/// Subtract, then project the sample mode of both residuals onto the
/// complement of `u`.
pub fn deflate_partial_u(x: &mut SemiSymTensor, y: &mut YResidual, f: &Factor) -> Result<()> {
    deflate_subtract(x, y, f)?;
    x.project_out_mode3(&f.u);
    match y {
        YResidual::Tensor(t) => t.project_out_mode3(&f.u),
        YResidual::Matrix(m) => {
            let mu = &*m * &f.u;
            *m -= mu * f.u.transpose();
        }
    }
    Ok(())
}

/// Project all modes of both residuals onto the complements of the fitted
/// directions, without subtracting.
pub fn deflate_project_full(x: &mut SemiSymTensor, y: &mut YResidual, f: &Factor) -> Result<()> {
    validate_deflate(x, y, f)?;
    x.transform_slices(&complement_projector(f.v.matrix()));
    x.project_out_mode3(&f.u);
    match y {
        YResidual::Tensor(t) => {
            let b = f.y.basis().expect("kind checked");
            t.transform_slices(&complement_projector(b.matrix()));
            t.project_out_mode3(&f.u);
        }
        YResidual::Matrix(m) => {
            let w = f.y.vector().expect("kind checked");
            let wm = w.transpose() * &*m;
            *m -= w * wm;
            let mu = &*m * &f.u;
            *m -= mu * f.u.transpose();
        }
    }
    Ok(())
}

/// Subtract, then project the network modes of both residuals onto the
/// complements of `V` (and `W`).
pub fn deflate_partial_vw(x: &mut SemiSymTensor, y: &mut YResidual, f: &Factor) -> Result<()> {
    deflate_subtract(x, y, f)?;
    x.transform_slices(&complement_projector(f.v.matrix()));
    match y {
        YResidual::Tensor(t) => {
            let b = f.y.basis().expect("kind checked");
            t.transform_slices(&complement_projector(b.matrix()));
        }
        YResidual::Matrix(m) => {
            let w = f.y.vector().expect("kind checked");
            let wm = w.transpose() * &*m;
            *m -= w * wm;
        }
    }
    Ok(())
}

/// Knobs for a multi-factor fit with prespecified ranks.
#[derive(Debug, Clone)]
pub struct MultiFitOptions {
    /// Per-factor `(r_x, r_y)` network ranks; the length sets `K`.
    pub ranks: Vec<(usize, usize)>,
    pub variant: Variant,
    pub deflation: Deflation,
    /// Fixed view weight, or `None` to recompute the norm-balanced default
    /// from the current residuals before each factor.
    pub lambda: Option<f64>,
    pub t_max: usize,
    pub tol: f64,
    /// Initialization policy reused at every extraction step.
    pub init: Init,
}

impl MultiFitOptions {
    pub fn new(ranks: Vec<(usize, usize)>, variant: Variant, deflation: Deflation) -> Self {
        MultiFitOptions {
            ranks,
            variant,
            deflation,
            lambda: None,
            t_max: 20,
            tol: 1e-6,
            init: Init::Spectral,
        }
    }
}

/// Ordered factors extracted by sequential deflation, with per-step
/// diagnostics.
#[derive(Debug, Clone)]
pub struct FactorStack {
    pub variant: Variant,
    pub deflation: Deflation,
    pub factors: Vec<Factor>,
    /// View weight used at each extraction step.
    pub lambdas: Vec<f64>,
    /// `(‖X residual‖_F, ‖Y residual‖_F)` after each extraction step.
    pub residual_norms: Vec<(f64, f64)>,
    /// Iterations spent per step.
    pub iterations: Vec<usize>,
    /// Early-convergence flag per step.
    pub converged: Vec<bool>,
}

impl FactorStack {
    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Sum of all layers' contributions to the `X` view.
    pub fn reconstruct_x(&self) -> Result<SemiSymTensor> {
        let first = self
            .factors
            .first()
            .ok_or_else(|| Error::Config("cannot reconstruct from an empty stack".into()))?;
        let mut t = SemiSymTensor::zeros(first.v.nrows(), first.u.len());
        for f in &self.factors {
            t.add_outer(&f.x_loading(), &f.u, 1.0);
        }
        Ok(t)
    }

    /// Sum of all layers' contributions to a tensor-valued `Y` view.
    pub fn reconstruct_y_tensor(&self) -> Result<SemiSymTensor> {
        let first = self
            .factors
            .first()
            .ok_or_else(|| Error::Config("cannot reconstruct from an empty stack".into()))?;
        let b = first
            .y
            .basis()
            .ok_or_else(|| Error::Config("second view is matrix-valued".into()))?;
        let mut t = SemiSymTensor::zeros(b.nrows(), first.u.len());
        for f in &self.factors {
            let g = f
                .y_loading()
                .ok_or_else(|| Error::Config("second view is matrix-valued".into()))?;
            t.add_outer(&g, &f.u, 1.0);
        }
        Ok(t)
    }

    /// Sum of all layers' contributions to a matrix-valued `Y` view.
    pub fn reconstruct_y_matrix(&self) -> Result<DMatrix<f64>> {
        let first = self
            .factors
            .first()
            .ok_or_else(|| Error::Config("cannot reconstruct from an empty stack".into()))?;
        let w = first
            .y
            .vector()
            .ok_or_else(|| Error::Config("second view is tensor-valued".into()))?;
        let mut m = DMatrix::zeros(w.len(), first.u.len());
        for f in &self.factors {
            m += f
                .y_matrix_component()
                .ok_or_else(|| Error::Config("second view is tensor-valued".into()))?;
        }
        Ok(m)
    }
}

/// Extract `ranks.len()` factors by repeating {resolve view weight from the
/// current residuals, single-factor fit, deflate}.
pub fn fit_multifactor(
    x: &SemiSymTensor,
    y: YData<'_>,
    opts: &MultiFitOptions,
) -> Result<FactorStack> {
    if opts.ranks.is_empty() {
        return Err(Error::Config("need at least one factor".into()));
    }
    if opts.ranks.len() > x.n_samples() {
        return Err(Error::Config(format!(
            "{} factors exceed the {} samples",
            opts.ranks.len(),
            x.n_samples()
        )));
    }
    let mut xr = x.clone();
    let mut yr = YResidual::from_view(y);
    let mut stack = FactorStack {
        variant: opts.variant,
        deflation: opts.deflation,
        factors: Vec::with_capacity(opts.ranks.len()),
        lambdas: Vec::new(),
        residual_norms: Vec::new(),
        iterations: Vec::new(),
        converged: Vec::new(),
    };
    for &(r_x, r_y) in &opts.ranks {
        let lambda = opts
            .lambda
            .unwrap_or_else(|| fit::default_lambda(&xr, yr.view()));
        let fopts = FitOptions {
            r_x,
            r_y,
            lambda: Some(lambda),
            t_max: opts.t_max,
            tol: opts.tol,
            init: opts.init.clone(),
        };
        let single = fit::fit_factor(&xr, yr.view(), opts.variant, &fopts)?;
        opts.deflation.apply(&mut xr, &mut yr, &single.factor)?;
        stack.lambdas.push(lambda);
        stack
            .residual_norms
            .push((xr.frobenius_norm(), yr.frobenius_norm()));
        stack.iterations.push(single.iterations);
        stack.converged.push(single.converged);
        stack.factors.push(single.factor);
    }
    Ok(stack)
}

/// Oblique projector `M (M'M)^{-1} M'` onto the column span of `M`.
fn oblique_projector(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = m.transpose() * m;
    let chol = nalgebra::Cholesky::new(gram).ok_or_else(|| {
        Error::Numerical(
            "stacked factor directions are collinear: Gram matrix is singular".into(),
        )
    })?;
    Ok(m * chol.inverse() * m.transpose())
}

fn concat_columns(parts: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts[0].nrows();
    let cols = parts.iter().map(|m| m.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for m in parts {
        out.view_mut((0, at), (rows, m.ncols())).copy_from(m);
        at += m.ncols();
    }
    out
}

/// Fraction of each view's squared norm captured by the first `k` factors:
/// `‖X ×1 P_V ×2 P_V ×3 P_U‖_F² / ‖X‖_F²` with oblique projectors onto the
/// concatenated directions of factors `1..=k` (and the analogue for `Y`).
/// `k = 0` returns zero; a zero-norm view counts as fully explained.
pub fn variance_explained(
    x: &SemiSymTensor,
    y: YData<'_>,
    stack: &FactorStack,
    k: usize,
) -> Result<(f64, f64)> {
    if k == 0 {
        return Ok((0.0, 0.0));
    }
    if k > stack.len() {
        return Err(Error::Config(format!(
            "requested {} factors of a {}-factor stack",
            k,
            stack.len()
        )));
    }
    let heads = &stack.factors[..k];
    let u_cat = concat_columns(
        &heads
            .iter()
            .map(|f| DMatrix::from_column_slice(f.u.len(), 1, f.u.as_slice()))
            .collect::<Vec<_>>(),
    );
    let v_cat = concat_columns(
        &heads
            .iter()
            .map(|f| f.v.matrix().clone())
            .collect::<Vec<_>>(),
    );
    let w_cat = concat_columns(&heads.iter().map(|f| f.y.as_matrix()).collect::<Vec<_>>());
    let pu = oblique_projector(&u_cat)?;
    let pv = oblique_projector(&v_cat)?;
    let pw = oblique_projector(&w_cat)?;

    let fraction_x = {
        let total = x.norm_sq();
        if total <= 0.0 {
            1.0
        } else {
            let mut t = x.clone();
            t.transform_slices(&pv);
            t.mode3_transform(&pu).norm_sq() / total
        }
    };
    let fraction_y = match y {
        YData::Tensor(t) => {
            let total = t.norm_sq();
            if total <= 0.0 {
                1.0
            } else {
                let mut s = t.clone();
                s.transform_slices(&pw);
                s.mode3_transform(&pu).norm_sq() / total
            }
        }
        YData::Matrix(m) => {
            let total: f64 = m.iter().map(|v| v * v).sum();
            if total <= 0.0 {
                1.0
            } else {
                let proj = &pw * m * &pu;
                proj.iter().map(|v| v * v).sum::<f64>() / total
            }
        }
    };
    Ok((fraction_x, fraction_y))
}

/// [`variance_explained`] for every `k in 1..=K`.
pub fn variance_explained_scan(
    x: &SemiSymTensor,
    y: YData<'_>,
    stack: &FactorStack,
) -> Result<Vec<(f64, f64)>> {
    (1..=stack.len())
        .map(|k| variance_explained(x, y, stack, k))
        .collect()
}

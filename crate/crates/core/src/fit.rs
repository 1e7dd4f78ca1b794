//! Single-factor fitting: alternating block updates for one joint layer.
//!
//! Each engine alternates ranked eigenvector updates for the network modes
//! with a normalized pooled update for the shared sample direction `u`,
//! starting from a spectral or warm initialization. Three data shapes are
//! covered: a pair of semi-symmetric tensors with scalar layer strengths
//! ([`fit_single`]), the same pair with diagonal strength matrices
//! ([`fit_single_generalized`]), and a tensor paired with a `q x N` data
//! matrix ([`fit_single_matrix_tensor`]).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::linalg::{self, OrthonormalBasis};
use crate::tensor::SemiSymTensor;
use crate::Result;

/// Smallest admissible `u`-update denominator before the pooled signal is
/// declared numerically zero.
pub const U_DENOM_TOL: f64 = 1e-14;

/// Which joint model a fit assumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Tensor pair; one scalar strength per view and layer.
    #[serde(rename = "scalar")]
    Scalar,
    /// Tensor pair; diagonal strength matrices per view and layer.
    #[serde(rename = "general")]
    Generalized,
    /// Tensor `X` paired with a `q x N` data matrix `Y`.
    #[serde(rename = "matrix")]
    MatrixTensor,
}

impl Variant {
    /// True for the variant whose second view is a plain matrix.
    pub fn is_matrix(&self) -> bool {
        matches!(self, Variant::MatrixTensor)
    }
}

/// Borrowed second view: a semi-symmetric tensor or a plain data matrix
/// whose columns are samples.
#[derive(Debug, Clone, Copy)]
pub enum YData<'a> {
    Tensor(&'a SemiSymTensor),
    Matrix(&'a DMatrix<f64>),
}

impl YData<'_> {
    /// Number of samples (tensor slices, or matrix columns).
    pub fn n_samples(&self) -> usize {
        match self {
            YData::Tensor(t) => t.n_samples(),
            YData::Matrix(m) => m.ncols(),
        }
    }

    /// Feature dimension `q` (slice size, or matrix rows).
    pub fn q(&self) -> usize {
        match self {
            YData::Tensor(t) => t.p(),
            YData::Matrix(m) => m.nrows(),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        match self {
            YData::Tensor(t) => t.norm_sq(),
            YData::Matrix(m) => m.iter().map(|v| v * v).sum(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
}

/// Choice of starting vector for the sample mode.
#[derive(Debug, Clone, Default)]
pub enum Init {
    /// Leading left singular direction of the weighted concatenation of both
    /// views' mode-3 matricizations.
    #[default]
    Spectral,
    /// Flat start with every coordinate `1/sqrt(N)`.
    Warm,
    /// Caller-supplied start; normalized before use.
    Given(DVector<f64>),
}

/// Knobs for a single-factor fit.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Network rank of the `X` view.
    pub r_x: usize,
    /// Network rank of the `Y` view. Ignored by the matrix variant, whose
    /// loading is always a single direction.
    pub r_y: usize,
    /// View weight in `[0, 1]`; `None` resolves to the norm-balanced
    /// [`default_lambda`].
    pub lambda: Option<f64>,
    /// Iteration cap (must be at least 1).
    pub t_max: usize,
    /// Early-stop threshold on the largest successive sin-theta change
    /// across `u`, the `V` subspace, and the `W` subspace.
    pub tol: f64,
    pub init: Init,
}

impl FitOptions {
    /// Defaults: norm-balanced weight, spectral start, `t_max = 20`,
    /// `tol = 1e-6`.
    pub fn new(r_x: usize, r_y: usize) -> Self {
        FitOptions {
            r_x,
            r_y,
            lambda: None,
            t_max: 20,
            tol: 1e-6,
            init: Init::Spectral,
        }
    }
}

/// Layer strength: a single scalar or one value per basis column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Scalar(f64),
    Diagonal(Vec<f64>),
}

impl Scale {
    /// Strengths expanded to a length-`r` diagonal.
    pub fn to_diagonal(&self, r: usize) -> Vec<f64> {
        match self {
            Scale::Scalar(d) => vec![*d; r],
            Scale::Diagonal(v) => v.clone(),
        }
    }

    /// The scalar strength, if this scale is scalar.
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Scale::Scalar(d) => Some(*d),
            Scale::Diagonal(_) => None,
        }
    }
}

/// Second-view loading: an orthonormal basis (tensor-valued `Y`) or a single
/// unit direction (matrix-valued `Y`).
#[derive(Debug, Clone, PartialEq)]
pub enum YPart {
    Basis(OrthonormalBasis),
    Vector(DVector<f64>),
}

impl YPart {
    pub fn basis(&self) -> Option<&OrthonormalBasis> {
        match self {
            YPart::Basis(b) => Some(b),
            YPart::Vector(_) => None,
        }
    }

    pub fn vector(&self) -> Option<&DVector<f64>> {
        match self {
            YPart::Basis(_) => None,
            YPart::Vector(w) => Some(w),
        }
    }

    /// The loading as a `q x r` matrix (`r = 1` for a single direction).
    pub fn as_matrix(&self) -> DMatrix<f64> {
        match self {
            YPart::Basis(b) => b.matrix().clone(),
            YPart::Vector(w) => DMatrix::from_column_slice(w.len(), 1, w.as_slice()),
        }
    }
}

/// One extracted layer: unit sample direction, network loadings, and the
/// per-view strengths.
#[derive(Debug, Clone)]
pub struct Factor {
    pub variant: Variant,
    /// Unit sample-mode direction.
    pub u: DVector<f64>,
    /// Network loading of the `X` view.
    pub v: OrthonormalBasis,
    /// Loading of the `Y` view.
    pub y: YPart,
    pub scale_x: Scale,
    pub scale_y: Scale,
}

impl Factor {
    pub fn n_samples(&self) -> usize {
        self.u.len()
    }

    pub fn r_x(&self) -> usize {
        self.v.ncols()
    }

    pub fn r_y(&self) -> usize {
        match &self.y {
            YPart::Basis(b) => b.ncols(),
            YPart::Vector(_) => 1,
        }
    }

    /// Symmetric `p x p` loading `V D V'` of the `X` view.
    pub fn x_loading(&self) -> DMatrix<f64> {
        scaled_loading(self.v.matrix(), &self.scale_x)
    }

    /// Symmetric `q x q` loading of a tensor-valued `Y` view.
    pub fn y_loading(&self) -> Option<DMatrix<f64>> {
        self.y
            .basis()
            .map(|b| scaled_loading(b.matrix(), &self.scale_y))
    }

    /// Rank-one `q x N` component `d w u'` of a matrix-valued `Y` view.
    pub fn y_matrix_component(&self) -> Option<DMatrix<f64>> {
        match (&self.y, &self.scale_y) {
            (YPart::Vector(w), Scale::Scalar(d)) => Some(w * self.u.transpose() * *d),
            _ => None,
        }
    }

    /// Dense reconstruction of this layer's contribution to the `X` view.
    pub fn reconstruct_x(&self) -> SemiSymTensor {
        let mut t = SemiSymTensor::zeros(self.v.nrows(), self.u.len());
        t.add_outer(&self.x_loading(), &self.u, 1.0);
        t
    }

    /// Dense reconstruction of this layer's contribution to a tensor-valued
    /// `Y` view.
    pub fn reconstruct_y_tensor(&self) -> Option<SemiSymTensor> {
        let g = self.y_loading()?;
        let mut t = SemiSymTensor::zeros(g.nrows(), self.u.len());
        t.add_outer(&g, &self.u, 1.0);
        Some(t)
    }

    /// `‖X - reconstruction‖_F²` in closed form: the reconstruction has
    /// squared norm `Σ d_i²` and inner product `u'[X; V, D]` with the data.
    pub fn x_residual_sq(&self, x: &SemiSymTensor) -> f64 {
        let d = self.scale_x.to_diagonal(self.r_x());
        let cross = self.u.dot(&x.trace_product_weighted(self.v.matrix(), &d));
        let comp_sq: f64 = d.iter().map(|v| v * v).sum();
        (x.norm_sq() - 2.0 * cross + comp_sq).max(0.0)
    }

    /// `‖Y - reconstruction‖_F²` in closed form; the view kind must match
    /// the factor's.
    pub fn y_residual_sq(&self, y: YData<'_>) -> Result<f64> {
        match (&self.y, y) {
            (YPart::Basis(b), YData::Tensor(t)) => {
                let d = self.scale_y.to_diagonal(self.r_y());
                let cross = self.u.dot(&t.trace_product_weighted(b.matrix(), &d));
                let comp_sq: f64 = d.iter().map(|v| v * v).sum();
                Ok((t.norm_sq() - 2.0 * cross + comp_sq).max(0.0))
            }
            (YPart::Vector(w), YData::Matrix(m)) => {
                let d = self
                    .scale_y
                    .as_scalar()
                    .expect("matrix-view factors carry scalar strengths");
                let cross = w.dot(&(m * &self.u));
                Ok((y.norm_sq() - 2.0 * d * cross + d * d).max(0.0))
            }
            _ => Err(Error::Config(
                "factor kind does not match the second view".into(),
            )),
        }
    }
}

/// `V diag(d) V'`, symmetrized so downstream slice updates keep the
/// semi-symmetric storage invariant bitwise.
fn scaled_loading(v: &DMatrix<f64>, scale: &Scale) -> DMatrix<f64> {
    let r = v.ncols();
    let d = scale.to_diagonal(r);
    let vd = v * DMatrix::from_diagonal(&DVector::from_row_slice(&d));
    let mut m = vd * v.transpose();
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
    m
}

/// Per-iteration iterates kept for diagnostics.
///
/// `u[0]` is the starting vector and `u[t]` the sample direction after
/// iteration `t`; `v[t-1]` / `w[t-1]` are the network loadings computed in
/// iteration `t`, so `v.len() == w.len() == u.len() - 1`.
#[derive(Debug, Clone)]
pub struct Trace {
    pub u: Vec<DVector<f64>>,
    pub v: Vec<DMatrix<f64>>,
    pub w: Vec<DMatrix<f64>>,
}

/// Result of one single-factor fit.
#[derive(Debug, Clone)]
pub struct SingleFit {
    pub factor: Factor,
    /// The view weight actually used (resolved from `None` if needed).
    pub lambda: f64,
    /// Completed iterations.
    pub iterations: usize,
    /// Whether the successive-change criterion fired before `t_max`.
    pub converged: bool,
    pub trace: Trace,
}

/// Norm-balanced default view weight `‖X‖_F / (‖X‖_F + ‖Y‖_F)`; `0.5` when
/// both views are zero.
pub fn default_lambda(x: &SemiSymTensor, y: YData<'_>) -> f64 {
    let nx = x.frobenius_norm();
    let ny = y.frobenius_norm();
    if nx + ny <= 0.0 {
        0.5
    } else {
        nx / (nx + ny)
    }
}

/// Flat unit start `(1, …, 1)/sqrt(N)`.
pub fn warm_init(n: usize) -> DVector<f64> {
    assert!(n >= 1, "warm start needs at least one sample");
    DVector::from_element(n, 1.0 / (n as f64).sqrt())
}

/// Leading left singular direction of `[λ M3(X), (1-λ) M3(Y)]` (or
/// `[λ M3(X), (1-λ) Y']` for a matrix view), computed through the `N x N`
/// Gram matrix instead of the wide concatenation.
pub fn spectral_init(x: &SemiSymTensor, y: YData<'_>, lambda: f64) -> Result<DVector<f64>> {
    let n = x.n_samples();
    if y.n_samples() != n {
        return Err(Error::Dimension(format!(
            "views disagree on sample count: {} vs {}",
            n,
            y.n_samples()
        )));
    }
    let mut g = x.mode3_gram() * (lambda * lambda);
    let wy = (1.0 - lambda) * (1.0 - lambda);
    match y {
        YData::Tensor(t) => g += t.mode3_gram() * wy,
        YData::Matrix(m) => g += (m.transpose() * m) * wy,
    }
    if g.trace() < 1e-300 {
        return Err(Error::Numerical(
            "spectral start is undefined: both weighted views are zero".into(),
        ));
    }
    Ok(linalg::top_eigs_abs(&g, 1)?.vectors.column(0).into_owned())
}

/// Scalar-strength fit on a pair of semi-symmetric tensors.
pub fn fit_single(x: &SemiSymTensor, y: &SemiSymTensor, opts: &FitOptions) -> Result<SingleFit> {
    fit_factor(x, YData::Tensor(y), Variant::Scalar, opts)
}

/// Diagonal-strength fit on a pair of semi-symmetric tensors.
pub fn fit_single_generalized(
    x: &SemiSymTensor,
    y: &SemiSymTensor,
    opts: &FitOptions,
) -> Result<SingleFit> {
    fit_factor(x, YData::Tensor(y), Variant::Generalized, opts)
}

/// Fit on a tensor paired with a `q x N` data matrix.
pub fn fit_single_matrix_tensor(
    x: &SemiSymTensor,
    y: &DMatrix<f64>,
    opts: &FitOptions,
) -> Result<SingleFit> {
    fit_factor(x, YData::Matrix(y), Variant::MatrixTensor, opts)
}

/// Run one single-factor fit with the variant chosen at runtime.
pub fn fit_factor(
    x: &SemiSymTensor,
    y: YData<'_>,
    variant: Variant,
    opts: &FitOptions,
) -> Result<SingleFit> {
    validate(x, y, variant, opts)?;
    let n = x.n_samples();
    let lambda = match opts.lambda {
        Some(l) => l,
        None => default_lambda(x, y),
    };

    let mut u = match &opts.init {
        Init::Spectral => spectral_init(x, y, lambda)?,
        Init::Warm => warm_init(n),
        Init::Given(v) => {
            if v.len() != n {
                return Err(Error::Dimension(format!(
                    "start vector has {} entries for {} samples",
                    v.len(),
                    n
                )));
            }
            linalg::unitize(v.clone())?
        }
    };

    let mut trace = Trace {
        u: vec![u.clone()],
        v: Vec::new(),
        w: Vec::new(),
    };
    let mut v_cur = DMatrix::<f64>::zeros(0, 0);
    let mut w_cur = DMatrix::<f64>::zeros(0, 0);
    let mut dx: Vec<f64> = Vec::new();
    let mut dy: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.t_max {
        let mx = x.mode3_mult(&u);
        let v_new = linalg::top_eigs_abs(&mx, opts.r_x)?.vectors;

        let (w_new, pooled) = match (variant, y) {
            (Variant::Scalar, YData::Tensor(t)) => {
                let my = t.mode3_mult(&u);
                let w = linalg::top_eigs_abs(&my, opts.r_y)?.vectors;
                let pooled =
                    x.trace_product(&v_new) * lambda + t.trace_product(&w) * (1.0 - lambda);
                (w, pooled)
            }
            (Variant::Generalized, YData::Tensor(t)) => {
                let my = t.mode3_mult(&u);
                let w = linalg::top_eigs_abs(&my, opts.r_y)?.vectors;
                dx = quadratic_diagonal(&v_new, &mx);
                dy = quadratic_diagonal(&w, &my);
                let pooled = x.trace_product_weighted(&v_new, &dx) * lambda
                    + t.trace_product_weighted(&w, &dy) * (1.0 - lambda);
                (w, pooled)
            }
            (Variant::MatrixTensor, YData::Matrix(m)) => {
                let yu = m * &u;
                let yu_norm = yu.norm();
                if yu_norm < U_DENOM_TOL {
                    return Err(Error::Numerical(
                        "matrix view maps the sample direction to zero".into(),
                    ));
                }
                let w = yu / yu_norm;
                let pooled =
                    x.trace_product(&v_new) * lambda + (m.transpose() * &w) * (1.0 - lambda);
                (DMatrix::from_column_slice(w.len(), 1, w.as_slice()), pooled)
            }
            _ => unreachable!("variant/view pairing checked in validate"),
        };

        let denom = pooled.norm();
        if denom < U_DENOM_TOL {
            return Err(Error::Numerical(
                "sample-direction update denominator is numerically zero: no pooled signal"
                    .into(),
            ));
        }
        let u_new = pooled / denom;

        // Successive change needs two full iterates, so the first pass never
        // stops early.
        let delta = if iterations == 0 {
            f64::INFINITY
        } else {
            linalg::sin_theta_vec(&u, &u_new)
                .max(linalg::sin_theta_op(&v_cur, &v_new))
                .max(linalg::sin_theta_op(&w_cur, &w_new))
        };

        trace.v.push(v_new.clone());
        trace.w.push(w_new.clone());
        trace.u.push(u_new.clone());
        v_cur = v_new;
        w_cur = w_new;
        u = u_new;
        iterations += 1;
        if delta < opts.tol {
            converged = true;
            break;
        }
    }

    let v_basis = OrthonormalBasis::new(v_cur)?;
    let (y_part, scale_x, scale_y) = match (variant, y) {
        (Variant::Scalar, YData::Tensor(t)) => {
            let w_basis = OrthonormalBasis::new(w_cur)?;
            let d_x = u.dot(&x.trace_product(v_basis.matrix())) / opts.r_x as f64;
            let d_y = u.dot(&t.trace_product(w_basis.matrix())) / opts.r_y as f64;
            (
                YPart::Basis(w_basis),
                Scale::Scalar(d_x),
                Scale::Scalar(d_y),
            )
        }
        (Variant::Generalized, YData::Tensor(_)) => {
            let w_basis = OrthonormalBasis::new(w_cur)?;
            (
                YPart::Basis(w_basis),
                Scale::Diagonal(dx),
                Scale::Diagonal(dy),
            )
        }
        (Variant::MatrixTensor, YData::Matrix(m)) => {
            let w = w_cur.column(0).into_owned();
            let d_x = u.dot(&x.trace_product(v_basis.matrix())) / opts.r_x as f64;
            let d_y = w.dot(&(m * &u));
            (YPart::Vector(w), Scale::Scalar(d_x), Scale::Scalar(d_y))
        }
        _ => unreachable!("variant/view pairing checked in validate"),
    };

    Ok(SingleFit {
        factor: Factor {
            variant,
            u,
            v: v_basis,
            y: y_part,
            scale_x,
            scale_y,
        },
        lambda,
        iterations,
        converged,
        trace,
    })
}

/// Diagonal of `V' M V`, one entry per column of `V`.
fn quadratic_diagonal(v: &DMatrix<f64>, m: &DMatrix<f64>) -> Vec<f64> {
    let mv = m * v;
    (0..v.ncols())
        .map(|c| v.column(c).dot(&mv.column(c)))
        .collect()
}

fn validate(x: &SemiSymTensor, y: YData<'_>, variant: Variant, opts: &FitOptions) -> Result<()> {
    match (variant, y) {
        (Variant::Scalar | Variant::Generalized, YData::Matrix(_)) => {
            return Err(Error::Config(
                "tensor-pair variants need a tensor-valued second view".into(),
            ));
        }
        (Variant::MatrixTensor, YData::Tensor(_)) => {
            return Err(Error::Config(
                "the matrix variant needs a matrix-valued second view".into(),
            ));
        }
        _ => {}
    }
    if y.n_samples() != x.n_samples() {
        return Err(Error::Dimension(format!(
            "views disagree on sample count: {} vs {}",
            x.n_samples(),
            y.n_samples()
        )));
    }
    if opts.r_x == 0 || opts.r_x > x.p() {
        return Err(Error::Config(format!(
            "rank {} outside 1..={} for the first view",
            opts.r_x,
            x.p()
        )));
    }
    if !variant.is_matrix() && (opts.r_y == 0 || opts.r_y > y.q()) {
        return Err(Error::Config(format!(
            "rank {} outside 1..={} for the second view",
            opts.r_y,
            y.q()
        )));
    }
    if let Some(l) = opts.lambda {
        if !(0.0..=1.0).contains(&l) {
            return Err(Error::Config(format!(
                "view weight {l} outside [0, 1]"
            )));
        }
    }
    if opts.t_max == 0 {
        return Err(Error::Config("iteration cap must be at least 1".into()));
    }
    if !(opts.tol >= 0.0 && opts.tol.is_finite()) {
        return Err(Error::Config(format!(
            "tolerance {} must be finite and nonnegative",
            opts.tol
        )));
    }
    Ok(())
}

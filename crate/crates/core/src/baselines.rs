//! Integrated Tucker baselines: a one-shot truncated higher-order SVD of the
//! concatenated views (`ihosvd`) and its alternating refinement (`ihooi`).
//! Both share one sample basis across views and slice their network bases
//! into per-layer blocks by the requested rank partition.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::linalg::{sin_theta_op, top_eigs_abs, OrthonormalBasis};
use crate::tensor::SemiSymTensor;
use crate::Result;

/// Early-stop threshold for `ihooi`: largest successive subspace change
/// (operator sin-theta over the three bases) below this ends the refinement.
pub const IHOOI_TOL: f64 = 1e-6;

/// Joint Tucker decomposition of a tensor pair with a shared sample basis.
#[derive(Debug, Clone)]
pub struct TuckerFit {
    /// Network basis of the first view, `p x sum(ranks_x)`.
    pub v: OrthonormalBasis,
    /// Network basis of the second view, `q x sum(ranks_y)`.
    pub w: OrthonormalBasis,
    /// Shared sample basis, `N x K`.
    pub u: OrthonormalBasis,
    /// First-view core, `sum(ranks_x) x sum(ranks_x) x K`.
    pub core_x: SemiSymTensor,
    /// Second-view core, `sum(ranks_y) x sum(ranks_y) x K`.
    pub core_y: SemiSymTensor,
    /// Column partition of `v` into per-layer blocks.
    pub ranks_x: Vec<usize>,
    /// Column partition of `w` into per-layer blocks.
    pub ranks_y: Vec<usize>,
    /// Rank-truncated reconstruction of the first view.
    pub x_hat: SemiSymTensor,
    /// Rank-truncated reconstruction of the second view.
    pub y_hat: SemiSymTensor,
    /// Refinement passes performed (0 for the one-shot decomposition).
    pub iterations: usize,
    /// True when refinement stopped on the tolerance rather than the cap.
    pub converged: bool,
}

impl TuckerFit {
    /// Number of layers.
    pub fn k(&self) -> usize {
        self.ranks_x.len()
    }

    /// Layer `i`'s sample direction: column `i` of the shared basis.
    pub fn u_layer(&self, i: usize) -> DVector<f64> {
        self.u.matrix().column(i).into_owned()
    }

    /// Layer `i`'s network block of the first view.
    pub fn v_layer(&self, i: usize) -> DMatrix<f64> {
        let start: usize = self.ranks_x[..i].iter().sum();
        self.v.matrix().columns(start, self.ranks_x[i]).into_owned()
    }

    /// Layer `i`'s network block of the second view.
    pub fn w_layer(&self, i: usize) -> DMatrix<f64> {
        let start: usize = self.ranks_y[..i].iter().sum();
        self.w.matrix().columns(start, self.ranks_y[i]).into_owned()
    }
}

fn validate_ranks(
    x: &SemiSymTensor,
    y: &SemiSymTensor,
    ranks_x: &[usize],
    ranks_y: &[usize],
) -> Result<(usize, usize)> {
    if x.n_samples() != y.n_samples() {
        return Err(Error::Dimension(format!(
            "views carry {} and {} samples",
            x.n_samples(),
            y.n_samples()
        )));
    }
    if ranks_x.is_empty() || ranks_x.len() != ranks_y.len() {
        return Err(Error::Config(format!(
            "rank lists must be nonempty and equally long, got {} and {}",
            ranks_x.len(),
            ranks_y.len()
        )));
    }
    if ranks_x.iter().chain(ranks_y).any(|&r| r == 0) {
        return Err(Error::Config("every layer rank must be at least 1".into()));
    }
    let sum_rx: usize = ranks_x.iter().sum();
    let sum_ry: usize = ranks_y.iter().sum();
    if sum_rx > x.p() {
        return Err(Error::Config(format!(
            "first-view ranks sum to {} but slices are {}-dimensional",
            sum_rx,
            x.p()
        )));
    }
    if sum_ry > y.p() {
        return Err(Error::Config(format!(
            "second-view ranks sum to {} but slices are {}-dimensional",
            sum_ry,
            y.p()
        )));
    }
    if ranks_x.len() > x.n_samples() {
        return Err(Error::Config(format!(
            "{} layers exceed the {} samples",
            ranks_x.len(),
            x.n_samples()
        )));
    }
    Ok((sum_rx, sum_ry))
}

/// Cores and reconstructions for fixed bases, shared by both algorithms.
fn assemble(
    x: &SemiSymTensor,
    y: &SemiSymTensor,
    v: OrthonormalBasis,
    w: OrthonormalBasis,
    u: OrthonormalBasis,
    ranks_x: &[usize],
    ranks_y: &[usize],
    iterations: usize,
    converged: bool,
) -> TuckerFit {
    let ut = u.matrix().transpose();
    let core_x = x.contract_slices(&v.matrix().transpose()).mode3_transform(&ut);
    let core_y = y.contract_slices(&w.matrix().transpose()).mode3_transform(&ut);
    let x_hat = core_x.contract_slices(v.matrix()).mode3_transform(u.matrix());
    let y_hat = core_y.contract_slices(w.matrix()).mode3_transform(u.matrix());
    TuckerFit {
        v,
        w,
        u,
        core_x,
        core_y,
        ranks_x: ranks_x.to_vec(),
        ranks_y: ranks_y.to_vec(),
        x_hat,
        y_hat,
        iterations,
        converged,
    }
}

/// Leading singular vectors of each view's mode-1 matricization plus the
/// concatenated mode-3 matricizations, with cores by three-mode contraction.
///
/// All three bases come from symmetric eigendecompositions of the matching
/// Gram matrices, which share left singular spaces with the matricizations
/// themselves.
pub fn ihosvd(
    x: &SemiSymTensor,
    y: &SemiSymTensor,
    ranks_x: &[usize],
    ranks_y: &[usize],
) -> Result<TuckerFit> {
    let (sum_rx, sum_ry) = validate_ranks(x, y, ranks_x, ranks_y)?;
    let k = ranks_x.len();
    let v = top_eigs_abs(&x.mode1_gram(), sum_rx)?.vectors;
    let w = top_eigs_abs(&y.mode1_gram(), sum_ry)?.vectors;
    let u = top_eigs_abs(&(x.mode3_gram() + y.mode3_gram()), k)?.vectors;
    Ok(assemble(
        x,
        y,
        OrthonormalBasis::new(v)?,
        OrthonormalBasis::new(w)?,
        OrthonormalBasis::new(u)?,
        ranks_x,
        ranks_y,
        0,
        true,
    ))
}

/// One-sided network update: leading eigenvectors of the Gram of
/// `M1(X ×₂ B' ×₃ U')`, whose column blocks are `(X ×₃ u_c) B` per core
/// slice `c`.
fn network_update(
    x: &SemiSymTensor,
    b: &DMatrix<f64>,
    u: &DMatrix<f64>,
    rank: usize,
) -> Result<DMatrix<f64>> {
    let slices = x.mode3_transform(&u.transpose());
    let p = x.p();
    let mut gram = DMatrix::zeros(p, p);
    for c in 0..slices.n_samples() {
        let a = slices.slice_matrix(c) * b;
        gram += &a * a.transpose();
    }
    Ok(top_eigs_abs(&gram, rank)?.vectors)
}

/// Alternating refinement of `ihosvd`: each pass re-solves the network bases
/// against the current sample basis and then the sample basis against the
/// concatenated core-projected views, until `k_max` passes or the largest
/// subspace change drops below [`IHOOI_TOL`]. `k_max = 0` returns the
/// one-shot decomposition unchanged.
pub fn ihooi(
    x: &SemiSymTensor,
    y: &SemiSymTensor,
    ranks_x: &[usize],
    ranks_y: &[usize],
    k_max: usize,
) -> Result<TuckerFit> {
    let (sum_rx, sum_ry) = validate_ranks(x, y, ranks_x, ranks_y)?;
    let k = ranks_x.len();
    let init = ihosvd(x, y, ranks_x, ranks_y)?;
    if k_max == 0 {
        return Ok(init);
    }
    let mut v = init.v.into_inner();
    let mut w = init.w.into_inner();
    let mut u = init.u.into_inner();
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..k_max {
        let v_new = network_update(x, &v, &u, sum_rx)?;
        let w_new = network_update(y, &w, &u, sum_ry)?;
        let gram_u = x.contract_slices(&v_new.transpose()).mode3_gram()
            + y.contract_slices(&w_new.transpose()).mode3_gram();
        let u_new = top_eigs_abs(&gram_u, k)?.vectors;
        let delta = sin_theta_op(&v, &v_new)
            .max(sin_theta_op(&w, &w_new))
            .max(sin_theta_op(&u, &u_new));
        v = v_new;
        w = w_new;
        u = u_new;
        iterations += 1;
        if delta < IHOOI_TOL {
            converged = true;
            break;
        }
    }
    Ok(assemble(
        x,
        y,
        OrthonormalBasis::new(v)?,
        OrthonormalBasis::new(w)?,
        OrthonormalBasis::new(u)?,
        ranks_x,
        ranks_y,
        iterations,
        converged,
    ))
}

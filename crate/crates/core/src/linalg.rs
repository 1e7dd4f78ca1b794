//! Dense linear algebra helpers: ranked eigenpairs with a deterministic sign
//! convention, principal-angle distances, orthonormal bases, k-means, and the
//! adjusted Rand index.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Error;
use crate::Result;

/// Max-norm tolerance for `B'B = I` when validating an orthonormal basis.
pub const ORTHO_TOL: f64 = 1e-10;

/// Relative eigengap under which a truncated eigenbasis is flagged unstable.
pub const DEGENERATE_GAP: f64 = 1e-12;

/// Column-orthonormal matrix with canonical column signs: in each column the
/// largest-magnitude entry (lowest index on ties) is nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis(DMatrix<f64>);

impl OrthonormalBasis {
    /// Validate `‖B'B - I‖_max <= 1e-10` and canonicalize column signs.
    pub fn new(mut m: DMatrix<f64>) -> Result<Self> {
        let gram = m.transpose() * &m;
        let dev = (gram - DMatrix::identity(m.ncols(), m.ncols())).abs().max();
        if dev > ORTHO_TOL {
            return Err(Error::Numerical(format!(
                "basis is not orthonormal: max deviation {dev:.3e}"
            )));
        }
        canonicalize_signs(&mut m);
        Ok(OrthonormalBasis(m))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }
}

/// Cluster assignment with 1-based labels in `1..=k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    labels: Vec<usize>,
    k: usize,
}

impl Labeling {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("labeling needs k >= 1".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l == 0 || l > k) {
            return Err(Error::Config(format!(
                "label {bad} outside 1..={k}"
            )));
        }
        Ok(Labeling { labels, k })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Flip each column so its largest-magnitude entry (lowest index on ties) is
/// nonnegative. Removes the sign ambiguity of eigen/singular vectors.
pub fn canonicalize_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = 0.0f64;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Leading eigenpairs of a symmetric matrix, ranked by `|eigenvalue|`.
#[derive(Debug, Clone)]
pub struct TopEigs {
    /// `p x r`, sign-canonicalized columns.
    pub vectors: DMatrix<f64>,
    /// Signed eigenvalues, in `|.|`-descending order.
    pub values: DVector<f64>,
    /// True when the gap `|λ_r| - |λ_{r+1}|` is below `1e-12` relative to
    /// `|λ_1|`, i.e. the returned subspace is not well separated.
    pub degenerate: bool,
}

/// Top-`r` eigenpairs of symmetric `a` by absolute eigenvalue. These are the
/// leading singular pairs of `a`, with signs carried in `values`.
pub fn top_eigs_abs(a: &DMatrix<f64>, r: usize) -> Result<TopEigs> {
    let p = a.nrows();
    if a.ncols() != p {
        return Err(Error::Dimension(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            p,
            a.ncols()
        )));
    }
    if r == 0 || r > p {
        return Err(Error::Config(format!("rank {r} outside 1..={p}")));
    }
    let eig = nalgebra::SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .abs()
            .partial_cmp(&eig.eigenvalues[i].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut vectors = DMatrix::zeros(p, r);
    let mut values = DVector::zeros(r);
    for (c, &idx) in order[..r].iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(idx));
        values[c] = eig.eigenvalues[idx];
    }
    canonicalize_signs(&mut vectors);
    let degenerate = if r < p {
        let top = eig.eigenvalues[order[0]].abs().max(f64::MIN_POSITIVE);
        let gap = eig.eigenvalues[order[r - 1]].abs() - eig.eigenvalues[order[r]].abs();
        gap / top < DEGENERATE_GAP
    } else {
        false
    };
    if degenerate {
        log::warn!(
            "rank-{r} eigenbasis is degenerate: |λ_{r}| ≈ |λ_{}|",
            r + 1
        );
    }
    Ok(TopEigs {
        vectors,
        values,
        degenerate,
    })
}

/// Normalize to unit length; error on (near-)zero input.
pub fn unitize(v: DVector<f64>) -> Result<DVector<f64>> {
    let n = v.norm();
    if n < 1e-14 {
        return Err(Error::Numerical(
            "cannot normalize a numerically zero vector".into(),
        ));
    }
    Ok(v / n)
}

/// sin of the principal angle between two unit vectors: algebraically
/// `sqrt(1 - (u'v)^2)`, computed through the orthogonal-complement residual
/// `‖v - u (u'v)‖` so tiny angles are not drowned by cancellation.
pub fn sin_theta_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    assert_eq!(a.len(), b.len(), "sin-theta vector lengths");
    let an = a.norm();
    let bn = b.norm();
    if an == 0.0 || bn == 0.0 {
        return 1.0;
    }
    let ua = a / an;
    let ub = b / bn;
    let c = ua.dot(&ub);
    (ub - ua * c).norm().min(1.0)
}

/// Residual of the thinner basis against the span of the wider one:
/// `S - L (L'S)` with `S` the fewer-column input. Its largest singular value
/// is `sqrt(1 - σ_r(A'B)^2)` and its Frobenius norm is
/// `sqrt(r - ‖A'B‖_F^2)`, with `r = min(r_a, r_b)`.
fn complement_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows(), "sin-theta ambient dimensions");
    let (s, l) = if a.ncols() <= b.ncols() { (a, b) } else { (b, a) };
    s - l * (l.transpose() * s)
}

/// Operator-norm sin-theta distance between the column spans of two
/// orthonormal matrices: `sqrt(1 - σ_r(A'B)^2)` with `r = min(r_a, r_b)`.
pub fn sin_theta_op(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols().min(b.ncols()) == 0 {
        return 0.0;
    }
    let resid = complement_residual(a, b);
    resid.svd(false, false).singular_values[0].min(1.0)
}

/// Frobenius sin-theta distance: `sqrt(r - ‖A'B‖_F^2)` with `r = min(r_a, r_b)`.
pub fn sin_theta_fro(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let r = a.ncols().min(b.ncols());
    if r == 0 {
        return 0.0;
    }
    let resid = complement_residual(a, b);
    resid.norm().min((r as f64).sqrt())
}

/// QR-orthonormalize the columns of `m` (requires full column rank); the
/// result is deterministic via a positive-diagonal convention on `R`.
pub fn orthonormalize(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, cols) = m.shape();
    if cols > rows {
        return Err(Error::Dimension(format!(
            "cannot orthonormalize {cols} columns in dimension {rows}"
        )));
    }
    let qr = m.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..cols {
        if r[(j, j)].abs() < 1e-12 {
            return Err(Error::Numerical(
                "rank-deficient matrix in orthonormalization".into(),
            ));
        }
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q.columns(0, cols).into_owned())
}

/// Haar-ish random orthonormal `p x r` basis from Gaussian entries + QR.
pub fn random_orthonormal<R: Rng>(rng: &mut R, p: usize, r: usize) -> Result<DMatrix<f64>> {
    let g = DMatrix::from_fn(p, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    orthonormalize(&g)
}

/// Random unit vector in dimension `n`.
pub fn random_unit<R: Rng>(rng: &mut R, n: usize) -> Result<DVector<f64>> {
    let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    unitize(g)
}

/// Lloyd's k-means on the rows of `points` with k-means++ seeding and
/// `restarts` independent starts; returns the best labeling and its
/// within-cluster sum of squares. Deterministic for a fixed RNG state.
pub fn kmeans<R: Rng>(
    points: &DMatrix<f64>,
    k: usize,
    restarts: usize,
    rng: &mut R,
) -> Result<(Labeling, f64)> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::Config(format!(
            "k-means needs 1 <= k <= n, got k={k}, n={n}"
        )));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..restarts.max(1) {
        let (labels, wcss) = kmeans_once(points, k, rng);
        if best.as_ref().map_or(true, |(_, w)| wcss < *w) {
            best = Some((labels, wcss));
        }
    }
    let (labels, wcss) = best.unwrap();
    Ok((
        Labeling::new(labels.iter().map(|&l| l + 1).collect(), k)?,
        wcss,
    ))
}

fn sq_dist(points: &DMatrix<f64>, i: usize, center: &DVector<f64>) -> f64 {
    points
        .row(i)
        .iter()
        .zip(center.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn kmeans_once<R: Rng>(points: &DMatrix<f64>, k: usize, rng: &mut R) -> (Vec<usize>, f64) {
    let n = points.nrows();
    let d = points.ncols();

    // k-means++ seeding
    let mut centers: Vec<DVector<f64>> = Vec::with_capacity(k);
    centers.push(points.row(rng.gen_range(0..n)).transpose());
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total <= 0.0 {
            rng.gen_range(0..n)
        } else {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        };
        centers.push(points.row(idx).transpose());
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(points, i, centers.last().unwrap()));
        }
    }

    let mut labels = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for i in 0..n {
            let mut arg = 0;
            let mut best = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let dist = sq_dist(points, i, center);
                if dist < best {
                    best = dist;
                    arg = c;
                }
            }
            if labels[i] != arg {
                labels[i] = arg;
                changed = true;
            }
        }
        // recompute centers; reseed empties from the farthest point
        let mut counts = vec![0usize; k];
        let mut sums = vec![DVector::<f64>::zeros(d); k];
        for i in 0..n {
            counts[labels[i]] += 1;
            sums[labels[i]] += points.row(i).transpose();
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(points, a, &centers[labels[a]])
                            .partial_cmp(&sq_dist(points, b, &centers[labels[b]]))
                            .unwrap()
                    })
                    .unwrap();
                centers[c] = points.row(far).transpose();
                labels[far] = c;
                changed = true;
            } else {
                centers[c] = &sums[c] / counts[c] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    let wcss = (0..n).map(|i| sq_dist(points, i, &centers[labels[i]])).sum();
    (labels, wcss)
}

/// Adjusted Rand index between two labelings of the same items. Returns 1.0
/// when both partitions are degenerate in the same way (zero denominator).
pub fn adjusted_rand_index(a: &Labeling, b: &Labeling) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "labelings cover {} vs {} items",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    let mut table = vec![vec![0u64; b.k()]; a.k()];
    for (&la, &lb) in a.labels().iter().zip(b.labels()) {
        table[la - 1][lb - 1] += 1;
    }
    let c2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&x| c2(x)).sum();
    let row_sum: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let col_sum: f64 = (0..b.k())
        .map(|j| c2(table.iter().map(|r| r[j]).sum()))
        .sum();
    let expected = row_sum * col_sum / c2(n as u64);
    let max_index = 0.5 * (row_sum + col_sum);
    if (max_index - expected).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

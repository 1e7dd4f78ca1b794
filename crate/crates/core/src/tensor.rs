//! Semi-symmetric third-order tensors.
//!
//! A `SemiSymTensor` holds `N` symmetric `p x p` matrix slices sharing a
//! third (sample) mode. Storage is slice-major with row-major entries inside
//! each slice: entry `(i, j, k)` lives at `k*p*p + i*p + j`. Slices are
//! symmetrized on construction, so row-major and column-major reads agree
//! bitwise and matricizations can reuse the flat buffer directly.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::Result;

/// Relative slice asymmetry beyond which construction refuses to symmetrize.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Order-3 tensor with symmetric frontal slices, dims `(p, p, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiSymTensor {
    p: usize,
    n: usize,
    data: Vec<f64>,
}

impl SemiSymTensor {
    /// Build from a flat slice-major buffer of length `p*p*n`, symmetrizing
    /// each slice as `(A + A')/2`. Rejects slices whose relative asymmetry
    /// `max|a_ij - a_ji| / max|a_ij|` exceeds [`SYMMETRY_TOL`].
    pub fn from_flat(p: usize, n: usize, mut data: Vec<f64>) -> Result<Self> {
        if data.len() != p * p * n {
            return Err(Error::Dimension(format!(
                "expected {} entries for dims ({p}, {p}, {n}), got {}",
                p * p * n,
                data.len()
            )));
        }
        for k in 0..n {
            let slice = &mut data[k * p * p..(k + 1) * p * p];
            let mut max_abs = 0.0f64;
            let mut max_asym = 0.0f64;
            for i in 0..p {
                for j in (i + 1)..p {
                    let a = slice[i * p + j];
                    let b = slice[j * p + i];
                    max_abs = max_abs.max(a.abs()).max(b.abs());
                    max_asym = max_asym.max((a - b).abs());
                }
                max_abs = max_abs.max(slice[i * p + i].abs());
            }
            if max_abs > 0.0 && max_asym / max_abs > SYMMETRY_TOL {
                return Err(Error::Asymmetric {
                    slice: k,
                    asymmetry: max_asym / max_abs,
                });
            }
            for i in 0..p {
                for j in (i + 1)..p {
                    let m = 0.5 * (slice[i * p + j] + slice[j * p + i]);
                    slice[i * p + j] = m;
                    slice[j * p + i] = m;
                }
            }
        }
        Ok(SemiSymTensor { p, n, data })
    }

    /// Build from `n` square matrix slices of identical size.
    pub fn from_slices(slices: &[DMatrix<f64>]) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::Dimension("need at least one slice".into()));
        }
        let p = slices[0].nrows();
        for (k, s) in slices.iter().enumerate() {
            if s.nrows() != p || s.ncols() != p {
                return Err(Error::Dimension(format!(
                    "slice {k} is {}x{}, expected {p}x{p}",
                    s.nrows(),
                    s.ncols()
                )));
            }
        }
        let mut data = Vec::with_capacity(p * p * slices.len());
        for s in slices {
            for i in 0..p {
                for j in 0..p {
                    data.push(s[(i, j)]);
                }
            }
        }
        Self::from_flat(p, slices.len(), data)
    }

    /// All-zero tensor.
    pub fn zeros(p: usize, n: usize) -> Self {
        SemiSymTensor {
            p,
            n,
            data: vec![0.0; p * p * n],
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.p, self.p, self.n)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[k * self.p * self.p + i * self.p + j]
    }

    /// Flat slice-major buffer.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Flat data of slice `k` (row-major, but symmetric).
    pub fn slice_data(&self, k: usize) -> &[f64] {
        &self.data[k * self.p * self.p..(k + 1) * self.p * self.p]
    }

    /// Slice `k` as a matrix.
    pub fn slice_matrix(&self, k: usize) -> DMatrix<f64> {
        // symmetric, so column-major fill of row-major data is a no-op
        DMatrix::from_column_slice(self.p, self.p, self.slice_data(k))
    }

    /// Mode-3 product with a vector: `X x3 u = sum_k u_k S_k`, a `p x p` matrix.
    pub fn mode3_mult(&self, u: &DVector<f64>) -> DMatrix<f64> {
        assert_eq!(u.len(), self.n, "mode-3 vector length");
        let pp = self.p * self.p;
        let mut acc = vec![0.0f64; pp];
        for k in 0..self.n {
            let w = u[k];
            if w == 0.0 {
                continue;
            }
            let slice = &self.data[k * pp..(k + 1) * pp];
            for (a, s) in acc.iter_mut().zip(slice) {
                *a += w * s;
            }
        }
        DMatrix::from_column_slice(self.p, self.p, &acc)
    }

    /// Per-slice inner products with a fixed matrix: returns the length-`n`
    /// vector with entries `<S_k, G>`.
    pub fn slice_inner(&self, g: &DMatrix<f64>) -> DVector<f64> {
        assert_eq!(g.nrows(), self.p);
        assert_eq!(g.ncols(), self.p);
        // row-major flat view of G so it lines up with slice storage
        let gt = g.transpose();
        let gflat = gt.as_slice();
        let pp = self.p * self.p;
        DVector::from_fn(self.n, |k, _| {
            self.data[k * pp..(k + 1) * pp]
                .iter()
                .zip(gflat)
                .map(|(a, b)| a * b)
                .sum()
        })
    }

    /// Trace product `[X; V]`: entry `k` is `tr(V' S_k V) = <S_k, V V'>`.
    pub fn trace_product(&self, v: &DMatrix<f64>) -> DVector<f64> {
        self.slice_inner(&(v * v.transpose()))
    }

    /// Weighted trace product `[X; V, D]` with diagonal weights `d`:
    /// entry `k` is `tr(D V' S_k V) = <S_k, V D V'>`.
    pub fn trace_product_weighted(&self, v: &DMatrix<f64>, d: &[f64]) -> DVector<f64> {
        assert_eq!(v.ncols(), d.len());
        let vd = v * DMatrix::from_diagonal(&DVector::from_row_slice(d));
        self.slice_inner(&(vd * v.transpose()))
    }

    /// Add `alpha * (G o u)` in place: slice `k` gains `alpha * u_k * G`.
    /// With `G = d V V'` and `alpha = -1` this subtracts a rank factor.
    pub fn add_outer(&mut self, g: &DMatrix<f64>, u: &DVector<f64>, alpha: f64) {
        assert_eq!(g.nrows(), self.p);
        assert_eq!(g.ncols(), self.p);
        assert_eq!(u.len(), self.n);
        let gt = g.transpose();
        let gflat = gt.as_slice();
        let pp = self.p * self.p;
        for k in 0..self.n {
            let w = alpha * u[k];
            if w == 0.0 {
                continue;
            }
            let slice = &mut self.data[k * pp..(k + 1) * pp];
            for (s, gval) in slice.iter_mut().zip(gflat) {
                *s += w * gval;
            }
        }
    }

    /// Mode-3 product with `(I - u u')`: removes the `u` direction from the
    /// sample mode, i.e. slice `k` loses `u_k * (X x3 u)`.
    pub fn project_out_mode3(&mut self, u: &DVector<f64>) {
        let m = self.mode3_mult(u);
        self.add_outer(&m, u, -1.0);
    }

    /// Mode-3 product with a matrix: slice `k` of the result is
    /// `sum_l m[k, l] * S_l`. `m` must have `n` columns; its row count sets
    /// the new sample dimension.
    pub fn mode3_transform(&self, m: &DMatrix<f64>) -> SemiSymTensor {
        assert_eq!(m.ncols(), self.n, "mode-3 transform width");
        let pp = self.p * self.p;
        let n_out = m.nrows();
        let mut data = vec![0.0f64; pp * n_out];
        for k in 0..n_out {
            let out = &mut data[k * pp..(k + 1) * pp];
            for l in 0..self.n {
                let w = m[(k, l)];
                if w == 0.0 {
                    continue;
                }
                let src = &self.data[l * pp..(l + 1) * pp];
                for (o, s) in out.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
        SemiSymTensor {
            p: self.p,
            n: n_out,
            data,
        }
    }

    /// Modes 1 and 2 contracted with the same matrix: slice `k` of the
    /// result is `M S_k M'` for `m` with `p` columns. Symmetrized output.
    pub fn contract_slices(&self, m: &DMatrix<f64>) -> SemiSymTensor {
        assert_eq!(m.ncols(), self.p, "slice contraction width");
        let p_out = m.nrows();
        let mut out = SemiSymTensor::zeros(p_out, self.n);
        let pp = p_out * p_out;
        for k in 0..self.n {
            let t = m * self.slice_matrix(k) * m.transpose();
            let slice = &mut out.data[k * pp..(k + 1) * pp];
            for i in 0..p_out {
                slice[i * p_out + i] = t[(i, i)];
                for j in (i + 1)..p_out {
                    let v = 0.5 * (t[(i, j)] + t[(j, i)]);
                    slice[i * p_out + j] = v;
                    slice[j * p_out + i] = v;
                }
            }
        }
        out
    }

    /// Replace every slice `S` by `P S P'` (same `P` on modes 1 and 2), then
    /// re-symmetrize to keep the storage invariant bitwise.
    pub fn transform_slices(&mut self, p_mat: &DMatrix<f64>) {
        assert_eq!(p_mat.nrows(), self.p);
        assert_eq!(p_mat.ncols(), self.p);
        let pp = self.p * self.p;
        for k in 0..self.n {
            let s = self.slice_matrix(k);
            let t = p_mat * s * p_mat.transpose();
            let slice = &mut self.data[k * pp..(k + 1) * pp];
            for i in 0..self.p {
                slice[i * self.p + i] = t[(i, i)];
                for j in (i + 1)..self.p {
                    let m = 0.5 * (t[(i, j)] + t[(j, i)]);
                    slice[i * self.p + j] = m;
                    slice[j * self.p + i] = m;
                }
            }
        }
    }

    /// Center every slice against the all-ones direction: `S -> P S P` with
    /// `P = I - 11'/p`. Standard preprocessing for adjacency-valued slices.
    pub fn project_out_ones(&mut self) {
        let p = self.p;
        let mut proj = DMatrix::from_element(p, p, -1.0 / p as f64);
        for i in 0..p {
            proj[(i, i)] += 1.0;
        }
        self.transform_slices(&proj);
    }

    /// Mode-1 matricization, `p x (p*n)`: entry `(i, j, k)` goes to row `i`,
    /// column `k*p + j`.
    pub fn matricize_mode1(&self) -> DMatrix<f64> {
        let p = self.p;
        let mut m = DMatrix::zeros(p, p * self.n);
        for k in 0..self.n {
            for i in 0..p {
                for j in 0..p {
                    m[(i, k * p + j)] = self.get(i, j, k);
                }
            }
        }
        m
    }

    /// Mode-2 matricization, `p x (p*n)`: entry `(i, j, k)` goes to row `j`,
    /// column `i*n + k`.
    pub fn matricize_mode2(&self) -> DMatrix<f64> {
        let p = self.p;
        let mut m = DMatrix::zeros(p, p * self.n);
        for k in 0..self.n {
            for i in 0..p {
                for j in 0..p {
                    m[(j, i * self.n + k)] = self.get(i, j, k);
                }
            }
        }
        m
    }

    /// Mode-3 matricization, `n x p^2`: entry `(i, j, k)` goes to row `k`,
    /// column `j*p + i`. Row `k` is the flattened slice `k`.
    pub fn matricize_mode3(&self) -> DMatrix<f64> {
        let p = self.p;
        let mut m = DMatrix::zeros(self.n, p * p);
        for k in 0..self.n {
            for i in 0..p {
                for j in 0..p {
                    m[(k, j * p + i)] = self.get(i, j, k);
                }
            }
        }
        m
    }

    /// Gram matrix of mode-1 fibers: `M1(X) M1(X)' = sum_k S_k S_k'` (`p x p`).
    pub fn mode1_gram(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.p, self.p);
        for k in 0..self.n {
            let s = self.slice_matrix(k);
            g += &s * &s;
        }
        g
    }

    /// Gram matrix of mode-3 rows: `M3(X) M3(X)'`, the `n x n` matrix of
    /// slice inner products `<S_k, S_l>`.
    pub fn mode3_gram(&self) -> DMatrix<f64> {
        let pp = self.p * self.p;
        let mut g = DMatrix::zeros(self.n, self.n);
        for k in 0..self.n {
            let sk = &self.data[k * pp..(k + 1) * pp];
            for l in k..self.n {
                let sl = &self.data[l * pp..(l + 1) * pp];
                let dot: f64 = sk.iter().zip(sl).map(|(a, b)| a * b).sum();
                g[(k, l)] = dot;
                g[(l, k)] = dot;
            }
        }
        g
    }

    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Frobenius inner product with an identically shaped tensor.
    pub fn inner(&self, other: &SemiSymTensor) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::Dimension(format!(
                "inner product dims {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum())
    }
}

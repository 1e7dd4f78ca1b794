//! Seeded data generators: low-rank factor pairs with Gaussian noise
//! (unstructured, mutually orthogonal, or graph-structured truths; scalar,
//! diagonal, or matrix second views) and two-cluster populations of
//! stochastic-block-model networks. Every generator returns the exact ground
//! truth used to score fits, and identical specs give bitwise-identical data.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::fit::{Factor, Scale, Variant, YData, YPart};
use crate::linalg::{
    canonicalize_signs, orthonormalize, top_eigs_abs, unitize, Labeling, OrthonormalBasis,
};
use crate::rng::{stream, StreamKind};
use crate::tensor::SemiSymTensor;
use crate::Result;

pub use crate::linalg::{random_orthonormal, random_unit};

/// How the ground-truth factors are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorStructure {
    /// Independent Gaussian entries per layer, orthonormalized within each
    /// layer only; factors of different layers overlap.
    Unstructured,
    /// One shared orthonormalization per mode: layers are mutually
    /// orthogonal along every mode.
    Orthogonal,
    /// Graph-flavored two-layer truth: three-block bases in layer 1,
    /// two-star Laplacian singular vectors in layer 2, and population
    /// factors from a three-component Gaussian mixture.
    Structured,
}

/// Layer strengths derived from a target signal-to-noise ratio.
///
/// The base strength of the first view is `snr · σ · (√p + √N)`, and of the
/// second `snr · σ · (√q + √N)`; per-layer multipliers scale those bases.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub snr: f64,
    /// Per-layer multipliers on the first view's base strength; empty means
    /// all ones.
    #[serde(default)]
    pub d_x: Vec<f64>,
    /// Per-layer multipliers on the second view's base strength; empty means
    /// all ones. Ignored when `y_ratio` is set.
    #[serde(default)]
    pub d_y: Vec<f64>,
    /// When set, the second view's strength is `y_ratio · d_x` per layer
    /// instead of being derived from its own base.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_ratio: Option<f64>,
    /// Per-layer diagonal profiles of the first view (diagonal-strength
    /// variant only): layer `k`'s strengths are `d_{x,k} · diag_x[k]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diag_x: Option<Vec<Vec<f64>>>,
    /// Second-view analog of `diag_x`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diag_y: Option<Vec<Vec<f64>>>,
}

fn default_diag_mult() -> f64 {
    2.0
}

/// Noise level: slice entries are mean-zero Gaussian with off-diagonal
/// variance `σ²` and diagonal variance `diag_mult · σ²`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub sigma: f64,
    #[serde(default = "default_diag_mult")]
    pub diag_mult: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            sigma: 1.0,
            diag_mult: 2.0,
        }
    }
}

/// Factor-model generation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub variant: Variant,
    pub structure: FactorStructure,
    pub ranks_x: Vec<usize>,
    /// Second-view ranks; leave empty for the matrix variant (one direction
    /// per layer).
    #[serde(default)]
    pub ranks_y: Vec<usize>,
    pub signal: SignalSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
}

/// One stochastic block model: ordered row groups assigned to blocks, plus
/// the block-to-block edge probability matrix.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BlockModel {
    /// Row groups as `(fraction of nodes, block index)` in node order;
    /// fractions must sum to 1 and block indices must cover `0..blocks`.
    pub groups: Vec<(f64, usize)>,
    /// Symmetric `blocks x blocks` edge probabilities.
    pub probs: Vec<Vec<f64>>,
}

impl BlockModel {
    fn blocks(&self) -> usize {
        self.probs.len()
    }

    /// Three diagonal blocks with the given fractions, constant within- and
    /// between-block probabilities.
    fn diagonal(fracs: &[f64], within: f64, between: f64) -> BlockModel {
        let b = fracs.len();
        BlockModel {
            groups: fracs.iter().enumerate().map(|(i, &f)| (f, i)).collect(),
            probs: (0..b)
                .map(|i| {
                    (0..b)
                        .map(|j| if i == j { within } else { between })
                        .collect()
                })
                .collect(),
        }
    }
}

/// Two-cluster population of multi-modal SBM graphs: each sample draws the
/// first network pair with probability `cluster_prob`, and its two adjacency
/// slices follow that pair's block models.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmSpec {
    pub cluster_prob: f64,
    /// First-view block model per cluster.
    pub models_x: Vec<BlockModel>,
    /// Second-view block model per cluster.
    pub models_y: Vec<BlockModel>,
}

impl SbmSpec {
    /// The standard two-cluster benchmark configuration: a three-block /
    /// two-block pair on each view, 0.75/0.25 cluster weights, within-block
    /// probabilities 0.8/0.6 (first view) and 0.7/0.5 (second view), all
    /// between-block probabilities 0.3. The second cluster's communities
    /// interleave with the first's.
    pub fn two_cluster() -> SbmSpec {
        SbmSpec {
            cluster_prob: 0.75,
            models_x: vec![
                BlockModel::diagonal(&[0.4, 0.3, 0.3], 0.8, 0.3),
                BlockModel {
                    groups: vec![(0.3, 0), (0.2, 1), (0.2, 0), (0.3, 1)],
                    probs: vec![vec![0.6, 0.3], vec![0.3, 0.6]],
                },
            ],
            models_y: vec![
                BlockModel::diagonal(&[0.4, 0.4, 0.2], 0.7, 0.3),
                BlockModel {
                    groups: vec![(0.3, 0), (0.4, 1), (0.3, 0)],
                    probs: vec![vec![0.5, 0.3], vec![0.3, 0.5]],
                },
            ],
        }
    }
}

/// What kind of data a [`SimSpec`] generates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum SimModel {
    /// Low-rank factor pair plus Gaussian noise.
    Factor(FactorSpec),
    /// Population of SBM adjacency matrices.
    SbmPopulation(SbmSpec),
}

/// Complete generation recipe; serializable as JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSpec {
    /// First-view slice dimension.
    pub p: usize,
    /// Second-view slice (or matrix row) dimension.
    pub q: usize,
    /// Number of samples.
    pub n: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub model: SimModel,
}

/// Generated second view.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratedY {
    Tensor(SemiSymTensor),
    Matrix(DMatrix<f64>),
}

impl GeneratedY {
    pub fn view(&self) -> YData<'_> {
        match self {
            GeneratedY::Tensor(t) => YData::Tensor(t),
            GeneratedY::Matrix(m) => YData::Matrix(m),
        }
    }

    pub fn as_tensor(&self) -> Option<&SemiSymTensor> {
        match self {
            GeneratedY::Tensor(t) => Some(t),
            GeneratedY::Matrix(_) => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&DMatrix<f64>> {
        match self {
            GeneratedY::Tensor(_) => None,
            GeneratedY::Matrix(m) => Some(m),
        }
    }
}

/// The exact factors a dataset was built from, with clustering labels where
/// the generator defines them.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// True factors in layer order.
    pub factors: Vec<Factor>,
    /// Sample cluster labels (SBM populations only).
    pub sample_labels: Option<Labeling>,
    /// Per-layer node block labels of the first view (SBM populations only).
    pub node_labels_x: Vec<Labeling>,
    /// Per-layer node block labels of the second view.
    pub node_labels_y: Vec<Labeling>,
    /// Flat-start suitability of each population factor: the
    /// variance-to-squared-mean ratio of its entries, `None` when the entry
    /// mean is zero.
    pub warm_ratios: Vec<Option<f64>>,
}

/// One generated dataset with its truth.
#[derive(Debug, Clone)]
pub struct SimData {
    pub x: SemiSymTensor,
    pub y: GeneratedY,
    pub truth: GroundTruth,
}

/// Variance-to-squared-mean ratio of a population factor's entries; small
/// values mean a flat start is close to the truth.
pub fn warm_init_diagnostic(u: &DVector<f64>) -> Result<f64> {
    let n = u.len() as f64;
    let mean = u.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(Error::Numerical(
            "flat start inapplicable: factor entries have zero mean".into(),
        ));
    }
    let var = u.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(var / (mean * mean))
}

/// Symmetric Gaussian noise tensor: off-diagonal entries have variance `σ²`,
/// diagonal entries `diag_mult · σ²`, slices independent. Entries are drawn
/// slice by slice, upper triangle in row-major order; a zero noise level
/// yields the zero tensor without consuming draws.
pub fn gen_noise<R: Rng>(
    rng: &mut R,
    p: usize,
    n: usize,
    sigma: f64,
    diag_mult: f64,
) -> SemiSymTensor {
    if sigma == 0.0 {
        return SemiSymTensor::zeros(p, n);
    }
    let diag_sd = sigma * diag_mult.sqrt();
    let mut slices = Vec::with_capacity(n);
    for _ in 0..n {
        let mut s = DMatrix::zeros(p, p);
        for i in 0..p {
            s[(i, i)] = diag_sd * rng.sample::<f64, _>(StandardNormal);
            for j in (i + 1)..p {
                let z = sigma * rng.sample::<f64, _>(StandardNormal);
                s[(i, j)] = z;
                s[(j, i)] = z;
            }
        }
        slices.push(s);
    }
    SemiSymTensor::from_slices(&slices).expect("noise slices are square and symmetric")
}

/// Flip `v`'s sign so its largest-magnitude entry is positive.
fn canonicalize_vec(mut v: DVector<f64>) -> DVector<f64> {
    let mut m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    canonicalize_signs(&mut m);
    v.copy_from_slice(m.as_slice());
    v
}

/// Raw three-block loading: each row is assigned to one of three blocks
/// uniformly and draws its own-block entry from `N(3, 1)`; other entries
/// are zero. Returns the matrix before orthonormalization plus the block
/// labels.
pub fn three_block_loading<R: Rng>(rng: &mut R, p: usize) -> (DMatrix<f64>, Labeling) {
    let mut m = DMatrix::zeros(p, 3);
    let mut labels = Vec::with_capacity(p);
    for i in 0..p {
        let b = rng.gen_range(0..3usize);
        m[(i, b)] = 3.0 + rng.sample::<f64, _>(StandardNormal);
        labels.push(b + 1);
    }
    let labeling = Labeling::new(labels, 3).expect("labels constructed in range");
    (m, labeling)
}

/// Unnormalized Laplacian `D - A` of a random two-star graph: each node
/// joins one of two components uniformly (redrawn until both components
/// have at least two nodes) and every component's nodes attach to its
/// lowest-index member.
pub fn two_star_laplacian<R: Rng>(rng: &mut R, p: usize) -> DMatrix<f64> {
    assert!(p >= 4, "a two-star graph needs at least four nodes");
    let comp = loop {
        let comp: Vec<usize> = (0..p).map(|_| rng.gen_range(0..2usize)).collect();
        let ones = comp.iter().sum::<usize>();
        if ones >= 2 && p - ones >= 2 {
            break comp;
        }
    };
    let hub = |c: usize| comp.iter().position(|&x| x == c).expect("component nonempty");
    let hubs = [hub(0), hub(1)];
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        let h = hubs[comp[i]];
        if i != h {
            a[(i, h)] = 1.0;
            a[(h, i)] = 1.0;
        }
    }
    let mut l = -a.clone();
    for i in 0..p {
        l[(i, i)] = a.row(i).sum();
    }
    l
}

/// Network basis of a structured layer-2 factor: the top two singular
/// vectors of a random two-star Laplacian.
fn two_star_basis<R: Rng>(rng: &mut R, p: usize) -> Result<DMatrix<f64>> {
    let l = two_star_laplacian(rng, p);
    Ok(top_eigs_abs(&l, 2)?.vectors)
}

/// Population factor pair from a three-component Gaussian mixture: each
/// component mean is uniform on `[0, 1]`, each sample joins a component
/// uniformly, and both of its factor entries draw from `N(mean, 0.05²)`.
/// Both vectors are normalized to unit length.
fn gaussian_mixture_pair<R: Rng>(rng: &mut R, n: usize) -> Result<(DVector<f64>, DVector<f64>)> {
    let means: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut u1 = DVector::zeros(n);
    let mut u2 = DVector::zeros(n);
    for i in 0..n {
        let m = means[rng.gen_range(0..3usize)];
        u1[i] = m + 0.05 * rng.sample::<f64, _>(StandardNormal);
        u2[i] = m + 0.05 * rng.sample::<f64, _>(StandardNormal);
    }
    Ok((
        canonicalize_vec(unitize(u1)?),
        canonicalize_vec(unitize(u2)?),
    ))
}

impl SimSpec {
    /// Check every structural constraint that does not require generation.
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.q == 0 || self.n == 0 {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        match &self.model {
            SimModel::Factor(f) => self.validate_factor(f),
            SimModel::SbmPopulation(s) => self.validate_sbm(s),
        }
    }

    fn validate_factor(&self, f: &FactorSpec) -> Result<()> {
        let k = f.ranks_x.len();
        if k == 0 {
            return Err(Error::Config("ranks_x must name at least one layer".into()));
        }
        if k > self.n {
            return Err(Error::Config(format!(
                "{} layers exceed the {} samples",
                k, self.n
            )));
        }
        let ranks_y = f.effective_ranks_y();
        if ranks_y.len() != k {
            return Err(Error::Config(format!(
                "ranks_y lists {} layers but ranks_x lists {k}",
                ranks_y.len()
            )));
        }
        if f.variant.is_matrix() && f.ranks_y.iter().any(|&r| r != 1) {
            return Err(Error::Config(
                "the matrix variant carries one direction per layer; leave ranks_y empty".into(),
            ));
        }
        if f.ranks_x.iter().any(|&r| r == 0) || ranks_y.iter().any(|&r| r == 0) {
            return Err(Error::Config("every layer rank must be at least 1".into()));
        }
        if f.ranks_x.iter().any(|&r| r > self.p) {
            return Err(Error::Config(format!(
                "a first-view rank exceeds the slice dimension {}",
                self.p
            )));
        }
        if !f.variant.is_matrix() && ranks_y.iter().any(|&r| r > self.q) {
            return Err(Error::Config(format!(
                "a second-view rank exceeds the slice dimension {}",
                self.q
            )));
        }
        if f.structure == FactorStructure::Orthogonal {
            let (sx, sy): (usize, usize) = (f.ranks_x.iter().sum(), ranks_y.iter().sum());
            if sx > self.p || (!f.variant.is_matrix() && sy > self.q) || k > self.n {
                return Err(Error::Config(
                    "mutually orthogonal layers need rank sums within each dimension".into(),
                ));
            }
            if f.variant.is_matrix() && k > self.q {
                return Err(Error::Config(
                    "mutually orthogonal directions need at most q layers".into(),
                ));
            }
        }
        if f.structure == FactorStructure::Structured {
            if f.variant.is_matrix() {
                return Err(Error::Config(
                    "structured truths define a tensor-valued second view".into(),
                ));
            }
            if f.ranks_x != [3, 2] || ranks_y != [3, 2] {
                return Err(Error::Config(
                    "structured truths are two layers of ranks (3, 2) on both views".into(),
                ));
            }
            if self.p < 4 || self.q < 4 {
                return Err(Error::Config(
                    "structured truths need at least four nodes per view".into(),
                ));
            }
        }
        let sig = &f.signal;
        if !(sig.snr > 0.0) {
            return Err(Error::Config(format!(
                "signal-to-noise ratio must be positive, got {}",
                sig.snr
            )));
        }
        for (name, mults) in [("d_x", &sig.d_x), ("d_y", &sig.d_y)] {
            if !mults.is_empty() && mults.len() != k {
                return Err(Error::Config(format!(
                    "{name} lists {} multipliers for {k} layers",
                    mults.len()
                )));
            }
            if mults.iter().any(|&m| !(m > 0.0)) {
                return Err(Error::Config(format!(
                    "{name} multipliers must be positive"
                )));
            }
        }
        if let Some(r) = sig.y_ratio {
            if !(r > 0.0) {
                return Err(Error::Config(format!(
                    "y_ratio must be positive, got {r}"
                )));
            }
        }
        match f.variant {
            Variant::Generalized => {
                for (name, profiles, ranks) in [
                    ("diag_x", &sig.diag_x, &f.ranks_x),
                    ("diag_y", &sig.diag_y, &ranks_y),
                ] {
                    if let Some(profs) = profiles {
                        if profs.len() != k {
                            return Err(Error::Config(format!(
                                "{name} lists {} profiles for {k} layers",
                                profs.len()
                            )));
                        }
                        for (prof, &r) in profs.iter().zip(ranks.iter()) {
                            if prof.len() != r {
                                return Err(Error::Config(format!(
                                    "a {name} profile has {} entries for a rank-{r} layer",
                                    prof.len()
                                )));
                            }
                            if prof.iter().any(|&v| !(v > 0.0)) {
                                return Err(Error::Config(format!(
                                    "{name} entries must be positive"
                                )));
                            }
                        }
                    }
                }
            }
            _ => {
                if sig.diag_x.is_some() || sig.diag_y.is_some() {
                    return Err(Error::Config(
                        "diagonal profiles apply to the diagonal-strength variant only".into(),
                    ));
                }
            }
        }
        if !(f.noise.sigma >= 0.0) {
            return Err(Error::Config(format!(
                "noise level must be nonnegative, got {}",
                f.noise.sigma
            )));
        }
        if !(f.noise.diag_mult >= 0.0) {
            return Err(Error::Config(format!(
                "diagonal variance multiplier must be nonnegative, got {}",
                f.noise.diag_mult
            )));
        }
        Ok(())
    }

    fn validate_sbm(&self, s: &SbmSpec) -> Result<()> {
        if !(s.cluster_prob > 0.0 && s.cluster_prob < 1.0) {
            return Err(Error::Config(format!(
                "cluster_prob must lie strictly inside (0, 1), got {}",
                s.cluster_prob
            )));
        }
        if s.models_x.len() != 2 || s.models_y.len() != 2 {
            return Err(Error::Config(
                "the population draws between exactly two network pairs per view".into(),
            ));
        }
        for (dim, models) in [(self.p, &s.models_x), (self.q, &s.models_y)] {
            for m in models.iter() {
                let b = m.blocks();
                if b < 2 {
                    return Err(Error::Config(
                        "every block model needs at least two blocks".into(),
                    ));
                }
                if m.probs.iter().any(|row| row.len() != b) {
                    return Err(Error::Config("block probability matrix must be square".into()));
                }
                for i in 0..b {
                    for j in 0..b {
                        let p = m.probs[i][j];
                        if !(0.0..=1.0).contains(&p) {
                            return Err(Error::Config(format!(
                                "edge probability {p} outside [0, 1]"
                            )));
                        }
                        if (m.probs[i][j] - m.probs[j][i]).abs() > 1e-12 {
                            return Err(Error::Config(
                                "block probability matrix must be symmetric".into(),
                            ));
                        }
                    }
                }
                let frac_sum: f64 = m.groups.iter().map(|&(f, _)| f).sum();
                if (frac_sum - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "group fractions sum to {frac_sum}, expected 1"
                    )));
                }
                if m.groups.iter().any(|&(f, _)| !(f > 0.0)) {
                    return Err(Error::Config("group fractions must be positive".into()));
                }
                let mut seen = vec![false; b];
                for &(_, blk) in &m.groups {
                    if blk >= b {
                        return Err(Error::Config(format!(
                            "group block index {blk} outside 0..{b}"
                        )));
                    }
                    seen[blk] = true;
                }
                if seen.iter().any(|s| !s) {
                    return Err(Error::Config(
                        "every block must receive at least one group".into(),
                    ));
                }
                partition_counts(dim, &m.groups)?;
            }
        }
        Ok(())
    }
}

impl FactorSpec {
    /// Second-view ranks with the matrix-variant default (all ones) applied.
    pub fn effective_ranks_y(&self) -> Vec<usize> {
        if self.variant.is_matrix() && self.ranks_y.is_empty() {
            vec![1; self.ranks_x.len()]
        } else {
            self.ranks_y.clone()
        }
    }

    /// Resolved layer strengths `(d_x, d_y)` for the given dimensions.
    pub fn strengths(&self, p: usize, q: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
        let k = self.ranks_x.len();
        let sigma = self.noise.sigma;
        // strengths stay meaningful for noiseless data
        let sigma = if sigma == 0.0 { 1.0 } else { sigma };
        let base_x = self.signal.snr * sigma * ((p as f64).sqrt() + (n as f64).sqrt());
        let base_y = self.signal.snr * sigma * ((q as f64).sqrt() + (n as f64).sqrt());
        let mult = |m: &[f64], i: usize| if m.is_empty() { 1.0 } else { m[i] };
        let d_x: Vec<f64> = (0..k).map(|i| base_x * mult(&self.signal.d_x, i)).collect();
        let d_y: Vec<f64> = match self.signal.y_ratio {
            Some(r) => d_x.iter().map(|&d| r * d).collect(),
            None => (0..k).map(|i| base_y * mult(&self.signal.d_y, i)).collect(),
        };
        (d_x, d_y)
    }
}

/// Scale for one layer: scalar strength, or the strength times a diagonal
/// profile.
fn layer_scale(variant: Variant, d: f64, profile: Option<&Vec<f64>>) -> Scale {
    match (variant, profile) {
        (Variant::Generalized, Some(p)) => Scale::Diagonal(p.iter().map(|&v| d * v).collect()),
        (Variant::Generalized, None) => Scale::Scalar(d),
        _ => Scale::Scalar(d),
    }
}

/// All per-layer truth bases for one view.
fn layer_bases<R: Rng>(
    rng: &mut R,
    structure: FactorStructure,
    dim: usize,
    ranks: &[usize],
) -> Result<Vec<OrthonormalBasis>> {
    match structure {
        FactorStructure::Unstructured => ranks
            .iter()
            .map(|&r| OrthonormalBasis::new(random_orthonormal(rng, dim, r)?))
            .collect(),
        FactorStructure::Orthogonal => {
            let total: usize = ranks.iter().sum();
            let all = random_orthonormal(rng, dim, total)?;
            let mut out = Vec::with_capacity(ranks.len());
            let mut start = 0;
            for &r in ranks {
                out.push(OrthonormalBasis::new(all.columns(start, r).into_owned())?);
                start += r;
            }
            Ok(out)
        }
        FactorStructure::Structured => {
            let (raw, _) = three_block_loading(rng, dim);
            let first = OrthonormalBasis::new(orthonormalize(&raw)?)?;
            let second = OrthonormalBasis::new(two_star_basis(rng, dim)?)?;
            Ok(vec![first, second])
        }
    }
}

/// Population directions for every layer.
fn population_factors<R: Rng>(
    rng: &mut R,
    structure: FactorStructure,
    n: usize,
    k: usize,
) -> Result<Vec<DVector<f64>>> {
    match structure {
        FactorStructure::Unstructured => (0..k)
            .map(|_| Ok(canonicalize_vec(random_unit(rng, n)?)))
            .collect(),
        FactorStructure::Orthogonal => {
            let all = random_orthonormal(rng, n, k)?;
            Ok((0..k).map(|i| all.column(i).into_owned()).collect())
        }
        FactorStructure::Structured => {
            let (u1, u2) = gaussian_mixture_pair(rng, n)?;
            Ok(vec![u1, u2])
        }
    }
}

/// Fail when stacked per-layer loadings are numerically collinear, which
/// would make the requested truth unidentifiable.
fn check_identifiable(stacked: DMatrix<f64>, what: &str) -> Result<()> {
    if stacked.ncols() < 2 {
        return Ok(());
    }
    let svd = stacked.svd(false, false);
    let smin = svd.singular_values[svd.singular_values.len() - 1];
    if smin <= 1e-8 {
        return Err(Error::Config(format!(
            "{what} layers are linearly dependent (smallest singular value {smin:.3e})"
        )));
    }
    Ok(())
}

/// All layers' loading columns side by side.
fn stack_columns(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let dim = mats[0].nrows();
    let total: usize = mats.iter().map(|m| m.ncols()).sum();
    let mut out = DMatrix::zeros(dim, total);
    let mut start = 0;
    for m in mats {
        out.columns_mut(start, m.ncols()).copy_from(m);
        start += m.ncols();
    }
    out
}

/// Generate a factor-model dataset for one replicate of the spec.
pub fn gen_factor_model(spec: &SimSpec, replicate: u64) -> Result<SimData> {
    spec.validate()?;
    let SimModel::Factor(f) = &spec.model else {
        return Err(Error::Config(
            "spec describes a network population, not a factor model".into(),
        ));
    };
    let (p, q, n) = (spec.p, spec.q, spec.n);
    let k = f.ranks_x.len();
    let ranks_y = f.effective_ranks_y();
    let (d_x, d_y) = f.strengths(p, q, n);
    let mut frng = stream(spec.seed, replicate, StreamKind::Factors);

    // draw order: population factors, first-view bases, second-view loadings
    let us = population_factors(&mut frng, f.structure, n, k)?;
    let vs = layer_bases(&mut frng, f.structure, p, &f.ranks_x)?;
    let ys: Vec<YPart> = if f.variant.is_matrix() {
        match f.structure {
            FactorStructure::Unstructured => (0..k)
                .map(|_| Ok(YPart::Vector(canonicalize_vec(random_unit(&mut frng, q)?))))
                .collect::<Result<_>>()?,
            FactorStructure::Orthogonal => {
                let all = random_orthonormal(&mut frng, q, k)?;
                (0..k)
                    .map(|i| YPart::Vector(all.column(i).into_owned()))
                    .collect()
            }
            FactorStructure::Structured => unreachable!("rejected by validation"),
        }
    } else {
        layer_bases(&mut frng, f.structure, q, &ranks_y)?
            .into_iter()
            .map(YPart::Basis)
            .collect()
    };

    if f.structure == FactorStructure::Unstructured {
        let umat = stack_columns(
            &us.iter()
                .map(|u| DMatrix::from_column_slice(n, 1, u.as_slice()))
                .collect::<Vec<_>>(),
        );
        check_identifiable(umat, "sample-direction")?;
        check_identifiable(
            stack_columns(&vs.iter().map(|b| b.matrix().clone()).collect::<Vec<_>>()),
            "first-view network",
        )?;
        check_identifiable(
            stack_columns(&ys.iter().map(|y| y.as_matrix()).collect::<Vec<_>>()),
            "second-view",
        )?;
    }

    let diag_x = f.signal.diag_x.as_ref();
    let diag_y = f.signal.diag_y.as_ref();
    let factors: Vec<Factor> = (0..k)
        .map(|i| Factor {
            variant: f.variant,
            u: us[i].clone(),
            v: vs[i].clone(),
            y: ys[i].clone(),
            scale_x: layer_scale(f.variant, d_x[i], diag_x.map(|d| &d[i])),
            scale_y: layer_scale(f.variant, d_y[i], diag_y.map(|d| &d[i])),
        })
        .collect();

    let mut nrng = stream(spec.seed, replicate, StreamKind::Noise);
    let mut x = gen_noise(&mut nrng, p, n, f.noise.sigma, f.noise.diag_mult);
    for fac in &factors {
        x.add_outer(&fac.x_loading(), &fac.u, 1.0);
    }
    let y = if f.variant.is_matrix() {
        let mut m = DMatrix::from_fn(q, n, |_, _| {
            f.noise.sigma * nrng.sample::<f64, _>(StandardNormal)
        });
        for fac in &factors {
            m += fac.y_matrix_component().expect("matrix-view factor");
        }
        GeneratedY::Matrix(m)
    } else {
        let mut t = gen_noise(&mut nrng, q, n, f.noise.sigma, f.noise.diag_mult);
        for fac in &factors {
            t.add_outer(
                &fac.y_loading().expect("tensor-view factor"),
                &fac.u,
                1.0,
            );
        }
        GeneratedY::Tensor(t)
    };

    let warm_ratios = factors
        .iter()
        .map(|fac| warm_init_diagnostic(&fac.u).ok())
        .collect();
    Ok(SimData {
        x,
        y,
        truth: GroundTruth {
            factors,
            sample_labels: None,
            node_labels_x: Vec::new(),
            node_labels_y: Vec::new(),
            warm_ratios,
        },
    })
}

/// Node counts per group, rounding cumulative boundaries so counts always
/// sum to the total.
fn partition_counts(total: usize, groups: &[(f64, usize)]) -> Result<Vec<usize>> {
    let mut counts = Vec::with_capacity(groups.len());
    let mut cum = 0.0;
    let mut prev = 0usize;
    for &(frac, _) in groups {
        cum += frac;
        let boundary = (cum * total as f64).round() as usize;
        if boundary <= prev {
            return Err(Error::Config(format!(
                "a group fraction of {frac} leaves no nodes at size {total}"
            )));
        }
        counts.push(boundary - prev);
        prev = boundary;
    }
    if prev != total {
        return Err(Error::Config(
            "group fractions must exhaust all nodes".into(),
        ));
    }
    Ok(counts)
}

/// Node-level block labels (1-based) for one block model.
fn node_labels(dim: usize, model: &BlockModel) -> Result<Labeling> {
    let counts = partition_counts(dim, &model.groups)?;
    let mut labels = Vec::with_capacity(dim);
    for (&count, &(_, blk)) in counts.iter().zip(model.groups.iter()) {
        labels.extend(std::iter::repeat(blk + 1).take(count));
    }
    Labeling::new(labels, model.blocks())
}

/// Dense node-by-node edge probability matrix of one block model.
fn probability_matrix(dim: usize, model: &BlockModel) -> Result<DMatrix<f64>> {
    let labels = node_labels(dim, model)?;
    Ok(DMatrix::from_fn(dim, dim, |i, j| {
        model.probs[labels.labels()[i] - 1][labels.labels()[j] - 1]
    }))
}

/// Center a symmetric matrix against the all-ones direction on both sides.
fn project_ones_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    let dim = m.nrows();
    let c = DMatrix::from_fn(dim, dim, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - 1.0 / dim as f64
    });
    let t = &c * m * &c;
    (&t + t.transpose()) * 0.5
}

/// Truth network basis of one block model: the top `blocks - 1` eigenvectors
/// of its ones-projected probability matrix.
fn sbm_truth_basis(dim: usize, model: &BlockModel) -> Result<OrthonormalBasis> {
    let proj = project_ones_matrix(&probability_matrix(dim, model)?);
    OrthonormalBasis::new(top_eigs_abs(&proj, model.blocks() - 1)?.vectors)
}

/// Generate a two-cluster SBM population for one replicate of the spec.
///
/// Each sample joins cluster 1 with probability `cluster_prob` and its two
/// adjacency slices are symmetric Bernoulli draws (zero diagonal) from that
/// cluster's block models. Both adjacency tensors are centered against the
/// all-ones direction, and the stored truth holds the projected probability
/// matrices' leading eigenvectors plus normalized cluster indicators.
pub fn gen_sbm_population(spec: &SimSpec, replicate: u64) -> Result<SimData> {
    spec.validate()?;
    let SimModel::SbmPopulation(s) = &spec.model else {
        return Err(Error::Config(
            "spec describes a factor model, not a network population".into(),
        ));
    };
    let (p, q, n) = (spec.p, spec.q, spec.n);

    // one graph stream per replicate: cluster draws first, then edges
    let mut grng = stream(spec.seed, replicate, StreamKind::Graph);
    let clusters: Vec<usize> = (0..n)
        .map(|_| if grng.gen::<f64>() < s.cluster_prob { 0 } else { 1 })
        .collect();
    let count1 = clusters.iter().filter(|&&c| c == 0).count();
    if count1 == 0 || count1 == n {
        return Err(Error::Numerical(format!(
            "all {n} samples fell in one cluster; population truth undefined"
        )));
    }

    let px: Vec<DMatrix<f64>> = s
        .models_x
        .iter()
        .map(|m| probability_matrix(p, m))
        .collect::<Result<_>>()?;
    let py: Vec<DMatrix<f64>> = s
        .models_y
        .iter()
        .map(|m| probability_matrix(q, m))
        .collect::<Result<_>>()?;

    let mut draw_adjacency = |probs: &DMatrix<f64>| {
        let dim = probs.nrows();
        let mut a = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in (i + 1)..dim {
                if grng.gen::<f64>() < probs[(i, j)] {
                    a[(i, j)] = 1.0;
                    a[(j, i)] = 1.0;
                }
            }
        }
        a
    };
    // draw order: per sample, the first view's slice then the second's
    let mut x_slices = Vec::with_capacity(n);
    let mut y_slices = Vec::with_capacity(n);
    for &c in &clusters {
        x_slices.push(draw_adjacency(&px[c]));
        y_slices.push(draw_adjacency(&py[c]));
    }
    let mut x = SemiSymTensor::from_slices(&x_slices)?;
    let mut y = SemiSymTensor::from_slices(&y_slices)?;
    x.project_out_ones();
    y.project_out_ones();

    // population truth: normalized cluster indicators, one layer per cluster
    let indicator = |c: usize| {
        let v = DVector::from_fn(n, |i, _| if clusters[i] == c { 1.0 } else { 0.0 });
        unitize(v)
    };
    let mut factors = Vec::with_capacity(2);
    for c in 0..2 {
        factors.push(Factor {
            variant: Variant::Scalar,
            u: indicator(c)?,
            v: sbm_truth_basis(p, &s.models_x[c])?,
            y: YPart::Basis(sbm_truth_basis(q, &s.models_y[c])?),
            // nominal unit strengths: network-population truths compare
            // subspaces and clusterings, never reconstruction scales
            scale_x: Scale::Scalar(1.0),
            scale_y: Scale::Scalar(1.0),
        });
    }
    let warm_ratios = factors
        .iter()
        .map(|fac| warm_init_diagnostic(&fac.u).ok())
        .collect();
    let sample_labels = Labeling::new(clusters.iter().map(|&c| c + 1).collect(), 2)?;
    Ok(SimData {
        x,
        y: GeneratedY::Tensor(y),
        truth: GroundTruth {
            factors,
            sample_labels: Some(sample_labels),
            node_labels_x: s
                .models_x
                .iter()
                .map(|m| node_labels(p, m))
                .collect::<Result<_>>()?,
            node_labels_y: s
                .models_y
                .iter()
                .map(|m| node_labels(q, m))
                .collect::<Result<_>>()?,
            warm_ratios,
        },
    })
}

/// Generate whichever dataset the spec describes.
pub fn generate(spec: &SimSpec, replicate: u64) -> Result<SimData> {
    match &spec.model {
        SimModel::Factor(_) => gen_factor_model(spec, replicate),
        SimModel::SbmPopulation(_) => gen_sbm_population(spec, replicate),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sin_theta_op;
    use approx::assert_abs_diff_eq;

    fn basic_spec(variant: Variant, structure: FactorStructure) -> SimSpec {
        SimSpec {
            p: 12,
            q: 10,
            n: 15,
            seed: 99,
            model: SimModel::Factor(FactorSpec {
                variant,
                structure,
                ranks_x: vec![3, 2],
                ranks_y: if variant.is_matrix() {
                    vec![]
                } else {
                    vec![2, 2]
                },
                signal: SignalSpec {
                    snr: 4.0,
                    d_x: vec![1.0, 0.5],
                    d_y: vec![1.0, 0.5],
                    y_ratio: None,
                    diag_x: None,
                    diag_y: None,
                },
                noise: NoiseSpec {
                    sigma: 1.0,
                    diag_mult: 2.0,
                },
            }),
        }
    }

    #[test]
    fn identical_specs_are_bitwise_identical() {
        let spec = basic_spec(Variant::Scalar, FactorStructure::Unstructured);
        let a = gen_factor_model(&spec, 3).unwrap();
        let b = gen_factor_model(&spec, 3).unwrap();
        assert_eq!(a.x.as_slice(), b.x.as_slice());
        assert_eq!(a.y, b.y);
        assert_eq!(a.truth.factors[0].u, b.truth.factors[0].u);
        // a different replicate draws different data
        let c = gen_factor_model(&spec, 4).unwrap();
        assert_ne!(a.x.as_slice(), c.x.as_slice());
    }

    #[test]
    fn noiseless_single_factor_equals_truth_reconstruction() {
        let mut spec = basic_spec(Variant::Scalar, FactorStructure::Unstructured);
        if let SimModel::Factor(f) = &mut spec.model {
            f.ranks_x = vec![3];
            f.ranks_y = vec![2];
            f.signal.d_x = vec![];
            f.signal.d_y = vec![];
            f.noise.sigma = 0.0;
        }
        let data = gen_factor_model(&spec, 0).unwrap();
        let truth = &data.truth.factors[0];
        assert_eq!(data.x, truth.reconstruct_x());
        assert_eq!(
            data.y.as_tensor().unwrap(),
            &truth.reconstruct_y_tensor().unwrap()
        );
    }

    #[test]
    fn stored_strengths_follow_the_snr_formula_exactly() {
        let spec = basic_spec(Variant::Scalar, FactorStructure::Unstructured);
        let data = gen_factor_model(&spec, 1).unwrap();
        let base_x = 4.0 * ((12f64).sqrt() + (15f64).sqrt());
        let base_y = 4.0 * ((10f64).sqrt() + (15f64).sqrt());
        assert_eq!(
            data.truth.factors[0].scale_x,
            Scale::Scalar(base_x * 1.0)
        );
        assert_eq!(
            data.truth.factors[1].scale_x,
            Scale::Scalar(base_x * 0.5)
        );
        assert_eq!(
            data.truth.factors[1].scale_y,
            Scale::Scalar(base_y * 0.5)
        );

        // ratio rule instead of a second base
        let mut rspec = basic_spec(Variant::Scalar, FactorStructure::Unstructured);
        if let SimModel::Factor(f) = &mut rspec.model {
            f.signal.y_ratio = Some(1.2);
        }
        let rdata = gen_factor_model(&rspec, 1).unwrap();
        assert_eq!(
            rdata.truth.factors[0].scale_y,
            Scale::Scalar(1.2 * base_x)
        );
    }

    #[test]
    fn generalized_spec_stores_scaled_profiles() {
        let mut spec = basic_spec(Variant::Generalized, FactorStructure::Unstructured);
        if let SimModel::Factor(f) = &mut spec.model {
            f.signal.diag_x = Some(vec![vec![2.0, 1.5, 1.2], vec![1.0, 0.8]]);
            f.signal.diag_y = Some(vec![vec![1.0, 0.9], vec![1.0, 0.8]]);
        }
        let data = gen_factor_model(&spec, 0).unwrap();
        let base_x = 4.0 * ((12f64).sqrt() + (15f64).sqrt());
        match &data.truth.factors[0].scale_x {
            Scale::Diagonal(d) => {
                assert_eq!(d.len(), 3);
                assert_abs_diff_eq!(d[0], base_x * 2.0, epsilon = 1e-12);
                assert_abs_diff_eq!(d[2], base_x * 1.2, epsilon = 1e-12);
            }
            s => panic!("expected diagonal strengths, got {s:?}"),
        }
    }

    #[test]
    fn orthogonal_structure_gives_mutually_orthogonal_layers() {
        let spec = basic_spec(Variant::Scalar, FactorStructure::Orthogonal);
        let data = gen_factor_model(&spec, 2).unwrap();
        let f = &data.truth.factors;
        assert!(f[0].u.dot(&f[1].u).abs() <= 1e-10);
        let cross = f[0].v.matrix().transpose() * f[1].v.matrix();
        assert!(cross.abs().max() <= 1e-10);
    }

    #[test]
    fn matrix_variant_builds_a_matrix_second_view() {
        let spec = basic_spec(Variant::MatrixTensor, FactorStructure::Unstructured);
        let data = gen_factor_model(&spec, 0).unwrap();
        let m = data.y.as_matrix().unwrap();
        assert_eq!(m.shape(), (10, 15));
        assert!(data.truth.factors[0].y.vector().is_some());
    }

    #[test]
    fn structured_layers_carry_block_and_star_geometry() {
        let mut spec = basic_spec(Variant::Scalar, FactorStructure::Structured);
        if let SimModel::Factor(f) = &mut spec.model {
            f.ranks_y = vec![3, 2];
        }
        spec.p = 20;
        spec.q = 16;
        spec.n = 30;
        let data = gen_factor_model(&spec, 5).unwrap();
        assert_eq!(data.truth.factors[0].v.ncols(), 3);
        assert_eq!(data.truth.factors[1].v.ncols(), 2);
        // the three-block basis keeps disjoint column supports
        let v1 = data.truth.factors[0].v.matrix();
        for i in 0..20 {
            let nonzero = (0..3).filter(|&c| v1[(i, c)].abs() > 1e-12).count();
            assert!(nonzero <= 1, "row {i} loads on {nonzero} blocks");
        }
    }

    #[test]
    fn three_block_loading_has_one_entry_per_row() {
        let mut rng = stream(7, 0, StreamKind::Factors);
        let (raw, labels) = three_block_loading(&mut rng, 40);
        for i in 0..40 {
            let nonzero: Vec<usize> = (0..3).filter(|&c| raw[(i, c)] != 0.0).collect();
            assert_eq!(nonzero.len(), 1);
            assert_eq!(nonzero[0] + 1, labels.labels()[i]);
        }
        // own-block entries center near 3
        let mean: f64 = raw.iter().filter(|v| **v != 0.0).sum::<f64>() / 40.0;
        assert!((mean - 3.0).abs() < 0.6);
    }

    #[test]
    fn two_star_laplacian_is_a_graph_laplacian() {
        let mut rng = stream(8, 0, StreamKind::Factors);
        let l = two_star_laplacian(&mut rng, 25);
        // symmetric with zero row sums
        assert!((l.clone() - l.transpose()).abs().max() == 0.0);
        for i in 0..25 {
            assert_abs_diff_eq!(l.row(i).sum(), 0.0, epsilon = 1e-12);
        }
        // exactly p - 2 edges: total degree 2(p - 2)
        assert_abs_diff_eq!(l.trace(), 2.0 * 23.0, epsilon = 1e-12);
        // top-2 eigenvectors live on separate star components
        let b = top_eigs_abs(&l, 2).unwrap().vectors;
        let supports: Vec<Vec<usize>> = (0..2)
            .map(|c| {
                (0..25)
                    .filter(|&i| b[(i, c)].abs() > 1e-8)
                    .collect()
            })
            .collect();
        assert!(supports[0].iter().all(|i| !supports[1].contains(i)));
    }

    #[test]
    fn warm_diagnostic_matches_hand_values() {
        let n = 9;
        let flat = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        assert_abs_diff_eq!(warm_init_diagnostic(&flat).unwrap(), 0.0);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        assert_abs_diff_eq!(warm_init_diagnostic(&e1).unwrap(), 1.0, epsilon = 1e-12);
        // definitional oracle on an arbitrary vector
        let v = DVector::from_vec(vec![0.3, -0.1, 0.7, 0.2]);
        let mean = 0.275;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0;
        assert_abs_diff_eq!(
            warm_init_diagnostic(&v).unwrap(),
            var / (mean * mean),
            epsilon = 1e-12
        );
        let zero_mean = DVector::from_vec(vec![1.0, -1.0]);
        assert!(warm_init_diagnostic(&zero_mean).is_err());
    }

    #[test]
    fn noise_moments_match_the_advertised_variances() {
        let mut rng = stream(1234, 0, StreamKind::Noise);
        let sigma = 0.7;
        let t = gen_noise(&mut rng, 20, 6000, sigma, 2.0);
        let mut off = Vec::new();
        let mut diag = Vec::new();
        for k in 0..t.n_samples() {
            for i in 0..20 {
                diag.push(t.get(i, i, k));
                for j in (i + 1)..20 {
                    off.push(t.get(i, j, k));
                }
            }
        }
        assert!(off.len() > 1_000_000);
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
        };
        let off_var = var(&off);
        let diag_var = var(&diag);
        assert!((off_var - sigma * sigma).abs() / (sigma * sigma) < 0.02);
        assert!((diag_var - 2.0 * sigma * sigma).abs() / (2.0 * sigma * sigma) < 0.02);
        // zero noise level gives the zero tensor
        let z = gen_noise(&mut rng, 4, 3, 0.0, 2.0);
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
    }

    fn sbm_spec(p: usize, q: usize, n: usize, seed: u64) -> SimSpec {
        SimSpec {
            p,
            q,
            n,
            seed,
            model: SimModel::SbmPopulation(SbmSpec::two_cluster()),
        }
    }

    #[test]
    fn sbm_spec_round_trips_through_json_with_exact_probabilities() {
        let spec = sbm_spec(80, 50, 40, 11);
        let json = serde_json::to_string(&spec).unwrap();
        let back: SimSpec = serde_json::from_str(&json).unwrap();
        let SimModel::SbmPopulation(s) = &back.model else {
            panic!("model tag lost");
        };
        assert_eq!(s.models_x[0].probs[0], vec![0.8, 0.3, 0.3]);
        assert_eq!(s.models_x[1].probs, vec![vec![0.6, 0.3], vec![0.3, 0.6]]);
        assert_eq!(s.models_y[0].probs[1], vec![0.3, 0.7, 0.3]);
        assert_eq!(s.models_y[1].probs[0], vec![0.5, 0.3]);
        assert_eq!(
            s.models_x[1].groups,
            vec![(0.3, 0), (0.2, 1), (0.2, 0), (0.3, 1)]
        );
        assert_abs_diff_eq!(s.cluster_prob, 0.75);
    }

    #[test]
    fn sbm_population_has_expected_truth_shapes_and_labels() {
        let spec = sbm_spec(80, 50, 40, 12);
        let data = gen_sbm_population(&spec, 0).unwrap();
        assert_eq!(data.x.dims(), (80, 80, 40));
        let y = data.y.as_tensor().unwrap();
        assert_eq!(y.dims(), (50, 50, 40));
        // blocks minus one columns per layer
        assert_eq!(data.truth.factors[0].v.ncols(), 2);
        assert_eq!(data.truth.factors[1].v.ncols(), 1);
        assert_eq!(data.truth.factors[0].y.basis().unwrap().ncols(), 2);
        assert_eq!(data.truth.factors[1].y.basis().unwrap().ncols(), 1);
        // cluster indicators are orthonormal and match the labels
        let u1 = &data.truth.factors[0].u;
        let u2 = &data.truth.factors[1].u;
        assert_abs_diff_eq!(u1.dot(u2), 0.0);
        assert_abs_diff_eq!(u1.norm(), 1.0, epsilon = 1e-12);
        let labels = data.truth.sample_labels.as_ref().unwrap();
        for (i, &l) in labels.labels().iter().enumerate() {
            assert_eq!(u1[i] > 0.0, l == 1);
        }
        // node labels partition by the documented fractions
        let lx = &data.truth.node_labels_x[0];
        assert_eq!(lx.labels().iter().filter(|&&l| l == 1).count(), 32);
        assert_eq!(lx.labels().iter().filter(|&&l| l == 2).count(), 24);
        let lx2 = &data.truth.node_labels_x[1];
        assert_eq!(lx2.labels()[0], 1);
        assert_eq!(lx2.labels()[30], 2);
        assert_eq!(lx2.labels()[45], 1);
        assert_eq!(lx2.labels()[70], 2);
        // slices are centered against the ones direction
        let ones = DVector::from_element(80, 1.0);
        let s0 = data.x.slice_matrix(0);
        assert!((&s0 * &ones).abs().max() <= 1e-10);
    }

    #[test]
    fn sbm_edge_frequencies_match_probabilities() {
        // pool many replicates so every probability level gets a large count
        let spec = sbm_spec(12, 10, 500, 13);
        let SimModel::SbmPopulation(s) = &spec.model else {
            unreachable!()
        };
        let px: Vec<DMatrix<f64>> = s
            .models_x
            .iter()
            .map(|m| probability_matrix(12, m).unwrap())
            .collect();
        // re-draw raw adjacencies exactly as the generator does, per cluster
        let mut sums = vec![DMatrix::<f64>::zeros(12, 12); 2];
        let mut counts = [0usize; 2];
        for rep in 0..20 {
            let mut grng = stream(spec.seed, rep, StreamKind::Graph);
            let clusters: Vec<usize> = (0..500)
                .map(|_| if grng.gen::<f64>() < s.cluster_prob { 0 } else { 1 })
                .collect();
            for &c in &clusters {
                let mut a = DMatrix::zeros(12, 12);
                for i in 0..12 {
                    for j in (i + 1)..12 {
                        if grng.gen::<f64>() < px[c][(i, j)] {
                            a[(i, j)] = 1.0;
                            a[(j, i)] = 1.0;
                        }
                    }
                }
                sums[c] += a;
                counts[c] += 1;
                // skip the second view's draws to stay aligned with the
                // generator's per-sample order
                let qdim = 10;
                for i in 0..qdim {
                    for _ in (i + 1)..qdim {
                        let _ = grng.gen::<f64>();
                    }
                }
            }
        }
        for c in 0..2 {
            assert!(counts[c] > 1000, "cluster {c} drew {} slices", counts[c]);
            // pool entries sharing one probability level
            let mut freq_by_p: std::collections::BTreeMap<u64, (f64, f64)> =
                std::collections::BTreeMap::new();
            for i in 0..12 {
                for j in (i + 1)..12 {
                    let key = px[c][(i, j)].to_bits();
                    let e = freq_by_p.entry(key).or_insert((0.0, 0.0));
                    e.0 += sums[c][(i, j)];
                    e.1 += counts[c] as f64;
                }
            }
            for (bits, (hits, total)) in freq_by_p {
                let p = f64::from_bits(bits);
                let freq = hits / total;
                assert!(
                    (freq - p).abs() / p < 0.02,
                    "cluster {c}: frequency {freq:.4} vs probability {p}"
                );
            }
        }
    }

    #[test]
    fn sbm_truth_bases_match_dense_projected_probability_eigenvectors() {
        let spec = sbm_spec(30, 20, 25, 14);
        let SimModel::SbmPopulation(s) = &spec.model else {
            unreachable!()
        };
        let data = gen_sbm_population(&spec, 0).unwrap();
        let dense = project_ones_matrix(&probability_matrix(30, &s.models_x[0]).unwrap());
        let eig = top_eigs_abs(&dense, 2).unwrap().vectors;
        assert!(sin_theta_op(data.truth.factors[0].v.matrix(), &eig) <= 1e-10);
    }

    #[test]
    fn validation_rejects_malformed_specs() {
        // bad probability
        let mut spec = sbm_spec(20, 20, 10, 0);
        if let SimModel::SbmPopulation(s) = &mut spec.model {
            s.models_x[0].probs[0][1] = 1.2;
            s.models_x[0].probs[1][0] = 1.2;
        }
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        // fractions not summing to one
        let mut spec = sbm_spec(20, 20, 10, 0);
        if let SimModel::SbmPopulation(s) = &mut spec.model {
            s.models_y[0].groups[0].0 = 0.5;
        }
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        // nonpositive SNR
        let mut fspec = basic_spec(Variant::Scalar, FactorStructure::Unstructured);
        if let SimModel::Factor(f) = &mut fspec.model {
            f.signal.snr = 0.0;
        }
        assert!(matches!(fspec.validate(), Err(Error::Config(_))));
        // diagonal profile with the wrong length
        let mut gspec = basic_spec(Variant::Generalized, FactorStructure::Unstructured);
        if let SimModel::Factor(f) = &mut gspec.model {
            f.signal.diag_x = Some(vec![vec![1.0], vec![1.0, 0.8]]);
        }
        assert!(matches!(gspec.validate(), Err(Error::Config(_))));
        // structured matrix view is undefined
        let mut mspec = basic_spec(Variant::MatrixTensor, FactorStructure::Structured);
        if let SimModel::Factor(f) = &mut mspec.model {
            f.ranks_x = vec![3, 2];
        }
        assert!(matches!(mspec.validate(), Err(Error::Config(_))));
        // profiles outside the generalized variant
        let mut sspec = basic_spec(Variant::Scalar, FactorStructure::Unstructured);
        if let SimModel::Factor(f) = &mut sspec.model {
            f.signal.diag_x = Some(vec![vec![1.0, 1.0, 1.0], vec![1.0, 1.0]]);
        }
        assert!(matches!(sspec.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn factor_spec_round_trips_through_json() {
        let spec = basic_spec(Variant::Generalized, FactorStructure::Orthogonal);
        let json = serde_json::to_string_pretty(&spec).unwrap();
        assert!(json.contains("\"model\": \"factor\""));
        assert!(json.contains("\"general\""));
        assert!(json.contains("\"orthogonal\""));
        let back: SimSpec = serde_json::from_str(&json).unwrap();
        let a = gen_factor_model(&spec, 0).unwrap();
        let b = gen_factor_model(&back, 0).unwrap();
        assert_eq!(a.x.as_slice(), b.x.as_slice());
    }
}

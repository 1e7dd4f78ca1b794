//! Experiment harness: seeded replicate runs over method and SNR grids,
//! greedy matching of estimated layers to the truth, sin-theta / strength /
//! clustering metrics, deterministic aggregation with normal confidence
//! half-widths, λ-sensitivity sweeps, and CSV / JSON report serialization.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{ihooi, ihosvd, TuckerFit};
use crate::deflate::{fit_multifactor, variance_explained, Deflation, FactorStack, MultiFitOptions};
use crate::error::Error;
use crate::fit::{default_lambda, Variant, YData};
use crate::linalg::{
    adjusted_rand_index, kmeans, sin_theta_fro, sin_theta_op, sin_theta_vec, Labeling,
};
use crate::rng::{stream, StreamKind};
use crate::select::{fit_multifactor_bic, BicOptions};
use crate::sim::{generate, GroundTruth, SimData, SimModel, SimSpec};
use crate::tensor::SemiSymTensor;
use crate::Result;

/// Restarts used for every k-means call in evaluation.
pub const KMEANS_RESTARTS: usize = 10;

/// CSV header of the per-replicate metric table.
pub const CSV_HEADER: &str = "replicate,method,snr,lambda,metric,value";

/// Default refinement cap for the refined Tucker baseline.
const IHOOI_DEFAULT_CAP: usize = 50;

/// Fitting procedure to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Joint power iteration with scalar strengths (matrix second view when
    /// the data provides one).
    #[serde(rename = "jisst")]
    Jisst,
    /// Joint power iteration with diagonal strengths.
    #[serde(rename = "g-jisst")]
    GJisst,
    /// One-shot joint Tucker decomposition.
    #[serde(rename = "ihosvd")]
    Ihosvd,
    /// Alternating refinement of the joint Tucker decomposition.
    #[serde(rename = "ihooi")]
    Ihooi,
}

impl Method {
    pub fn token(&self) -> &'static str {
        match self {
            Method::Jisst => "jisst",
            Method::GJisst => "g-jisst",
            Method::Ihosvd => "ihosvd",
            Method::Ihooi => "ihooi",
        }
    }

    pub fn is_tucker(&self) -> bool {
        matches!(self, Method::Ihosvd | Method::Ihooi)
    }
}

/// How a method obtains its ranks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMode {
    /// Use the true per-layer ranks.
    Oracle,
    /// Grid-search ranks per factor by BIC.
    Bic,
}

fn default_deflation() -> Deflation {
    Deflation::Subtract
}

fn default_rank_mode() -> RankMode {
    RankMode::Oracle
}

fn default_bic_max() -> usize {
    5
}

/// One method under evaluation, with its options.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: Method,
    /// Report label; defaults to the method token. Must be unique within a
    /// config when two entries share a method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_deflation")]
    pub deflation: Deflation,
    #[serde(default = "default_rank_mode")]
    pub ranks: RankMode,
    /// Upper end of the 1..=bic_max rank grid when `ranks` is `bic`.
    #[serde(default = "default_bic_max")]
    pub bic_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

impl MethodSpec {
    pub fn new(method: Method) -> Self {
        MethodSpec {
            method,
            name: None,
            deflation: default_deflation(),
            ranks: default_rank_mode(),
            bic_max: default_bic_max(),
            t_max: None,
            tol: None,
        }
    }

    /// Label under which this method's rows are reported.
    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.method.token().to_string())
    }
}

/// Complete experiment description; serializable as JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Base generation recipe. Its own seed is ignored: the experiment seed
    /// below drives every replicate.
    pub spec: SimSpec,
    pub methods: Vec<MethodSpec>,
    pub replicates: u64,
    /// Signal levels to sweep; empty runs the spec's own level once.
    #[serde(default)]
    pub snr_grid: Vec<f64>,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("need at least one replicate".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("need at least one method".into()));
        }
        let mut labels = Vec::new();
        for ms in &self.methods {
            let label = ms.label();
            if label.is_empty() || label.contains(',') || label.contains('\n') {
                return Err(Error::Config(format!(
                    "method label {label:?} must be nonempty without commas or newlines"
                )));
            }
            if labels.contains(&label) {
                return Err(Error::Config(format!("duplicate method label {label:?}")));
            }
            labels.push(label);
            if ms.method.is_tucker() && ms.ranks == RankMode::Bic {
                return Err(Error::Config(
                    "rank selection by BIC applies to the joint power methods only".into(),
                ));
            }
            if ms.ranks == RankMode::Bic && ms.bic_max == 0 {
                return Err(Error::Config("bic_max must be at least 1".into()));
            }
        }
        if !self.snr_grid.is_empty() {
            if !matches!(self.spec.model, SimModel::Factor(_)) {
                return Err(Error::Config(
                    "an SNR grid applies to factor-model specs only".into(),
                ));
            }
            if self.snr_grid.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
                return Err(Error::Config("SNR grid values must be positive".into()));
            }
        }
        self.spec.validate()
    }
}

/// One per-replicate measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub replicate: u64,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub metric: String,
    pub value: f64,
}

/// One replicate × method cell that failed, with its cause.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub replicate: u64,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub error: String,
}

/// Aggregated statistics of one metric over successful replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (zero when n < 2).
    pub sd: f64,
    /// Normal 95% half-width `1.96 · sd / √n`.
    pub half_width: f64,
}

/// Reference view-weight positions for a λ sweep: the signal-norm balance
/// (when the truth carries real strengths) and the data-norm balance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaMarker {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<f64>,
    pub surrogate: f64,
}

/// Provenance recorded with every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub version: String,
    pub seed: u64,
    pub replicates: u64,
    /// How the interval column is computed.
    pub interval: String,
}

/// Full experiment output: per-replicate rows, failures, and aggregates
/// recomputable from the rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: ReportMeta,
    pub rows: Vec<MetricRow>,
    pub failures: Vec<FailureRow>,
    pub aggregates: Vec<AggregateRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambda_markers: Vec<LambdaMarker>,
}

impl EvalReport {
    /// Per-replicate rows as CSV (documented header, one row per
    /// replicate × method × metric).
    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.rows)
    }

    /// Whole report as pretty JSON.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Failure fraction over all attempted cells.
    pub fn failure_fraction(&self) -> f64 {
        let cells: std::collections::HashSet<(u64, &str, Option<u64>, Option<u64>)> = self
            .rows
            .iter()
            .map(|r| {
                (
                    r.replicate,
                    r.method.as_str(),
                    r.snr.map(f64::to_bits),
                    r.lambda.map(f64::to_bits),
                )
            })
            .collect();
        let total = cells.len() + self.failures.len();
        if total == 0 {
            0.0
        } else {
            self.failures.len() as f64 / total as f64
        }
    }
}

/// Serialize metric rows with the documented header. Empty fields encode
/// absent SNR / λ columns.
pub fn rows_to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.replicate,
            r.method,
            num(r.snr),
            num(r.lambda),
            r.metric,
            r.value
        ));
    }
    out
}

/// Parse a metric-row CSV produced by [`rows_to_csv`]; values round-trip
/// exactly.
pub fn rows_from_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        Some((_, h)) => {
            return Err(Error::Format(format!(
                "line 1: unexpected header {h:?}, expected {CSV_HEADER:?}"
            )))
        }
        None => return Err(Error::Format("empty metric CSV".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Format(format!(
                "line {lineno}: expected 6 comma-separated fields, found {}",
                fields.len()
            )));
        }
        let fnum = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Format(format!("line {lineno}: bad {what} value {s:?}")))
        };
        let opt = |s: &str, what: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                fnum(s, what).map(Some)
            }
        };
        rows.push(MetricRow {
            replicate: fields[0].parse().map_err(|_| {
                Error::Format(format!("line {lineno}: bad replicate index {:?}", fields[0]))
            })?,
            method: fields[1].to_string(),
            snr: opt(fields[2], "snr")?,
            lambda: opt(fields[3], "lambda")?,
            metric: fields[4].to_string(),
            value: fnum(fields[5], "metric")?,
        });
    }
    Ok(rows)
}

/// Group rows by (method, snr, λ, metric) in first-seen order and compute
/// mean, sample s.d., and the normal 95% half-width.
pub fn aggregate_rows(rows: &[MetricRow]) -> Vec<AggregateRow> {
    type Key = (String, Option<u64>, Option<u64>, String);
    let mut index: HashMap<Key, usize> = HashMap::new();
    let mut groups: Vec<(Key, Vec<f64>)> = Vec::new();
    for r in rows {
        let key = (
            r.method.clone(),
            r.snr.map(f64::to_bits),
            r.lambda.map(f64::to_bits),
            r.metric.clone(),
        );
        let slot = *index.entry(key.clone()).or_insert_with(|| {
            groups.push((key, Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(r.value);
    }
    groups
        .into_iter()
        .map(|((method, snr, lambda, metric), values)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let sd = if n < 2 {
                0.0
            } else {
                let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
                (ss / (n - 1) as f64).sqrt()
            };
            AggregateRow {
                method,
                snr: snr.map(f64::from_bits),
                lambda: lambda.map(f64::from_bits),
                metric,
                n,
                mean,
                sd,
                half_width: 1.96 * sd / (n as f64).sqrt(),
            }
        })
        .collect()
}

/// Per-layer estimates extracted from a fitted model, in the fit's own layer
/// order.
#[derive(Debug, Clone)]
pub struct EstimatedLayers {
    /// Sample direction per layer.
    pub us: Vec<DVector<f64>>,
    /// First-view loading columns per layer.
    pub vs: Vec<DMatrix<f64>>,
    /// Second-view loading columns per layer (one column for a single
    /// direction).
    pub ws: Vec<DMatrix<f64>>,
    /// Per-layer strength diagonals `(x, y)`; `None` for subspace-only
    /// methods.
    pub scales: Option<Vec<(Vec<f64>, Vec<f64>)>>,
}

impl EstimatedLayers {
    pub fn from_stack(stack: &FactorStack) -> Self {
        let scales = stack
            .factors
            .iter()
            .map(|f| {
                (
                    f.scale_x.to_diagonal(f.r_x()),
                    f.scale_y.to_diagonal(f.r_y()),
                )
            })
            .collect();
        EstimatedLayers {
            us: stack.factors.iter().map(|f| f.u.clone()).collect(),
            vs: stack.factors.iter().map(|f| f.v.matrix().clone()).collect(),
            ws: stack.factors.iter().map(|f| f.y.as_matrix()).collect(),
            scales: Some(scales),
        }
    }

    pub fn from_tucker(fit: &TuckerFit) -> Self {
        let k = fit.k();
        EstimatedLayers {
            us: (0..k).map(|i| fit.u_layer(i)).collect(),
            vs: (0..k).map(|i| fit.v_layer(i)).collect(),
            ws: (0..k).map(|i| fit.w_layer(i)).collect(),
            scales: None,
        }
    }
}

/// Pair estimated layers with true ones by sample-direction overlap:
/// repeatedly take the highest remaining |û·u*|. Entry `j` is the estimated
/// index assigned to truth layer `j` (`None` when estimates run out).
pub fn greedy_match(est: &[DVector<f64>], truth: &[DVector<f64>]) -> Vec<Option<usize>> {
    let mut pairs = Vec::with_capacity(est.len() * truth.len());
    for (i, e) in est.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            pairs.push((e.dot(t).abs(), i, j));
        }
    }
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut est_used = vec![false; est.len()];
    let mut assign = vec![None; truth.len()];
    for (_, i, j) in pairs {
        if !est_used[i] && assign[j].is_none() {
            est_used[i] = true;
            assign[j] = Some(i);
        }
    }
    assign
}

/// Relative strength error with sign-insensitive magnitudes; profiles of
/// different lengths are zero-padded to the longer one.
fn scale_rel_err(est: &[f64], truth: &[f64]) -> f64 {
    let len = est.len().max(truth.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..len {
        let d = at(est, i).abs() - at(truth, i).abs();
        num += d * d;
        den += at(truth, i) * at(truth, i);
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

/// Subspace and strength metrics of matched layers, in a fixed emission
/// order (`u/v/w` sin-thetas, strength errors when available, per-layer
/// ranks). Names index layers by truth position, 1-based.
pub fn layer_rows(est: &EstimatedLayers, truth: &GroundTruth) -> Vec<(String, f64)> {
    let truth_us: Vec<DVector<f64>> = truth.factors.iter().map(|f| f.u.clone()).collect();
    let assign = greedy_match(&est.us, &truth_us);
    // nominal unit strengths (clustering truths) carry no scale information
    let score_scales = est.scales.is_some() && truth.sample_labels.is_none();
    let mut rows = Vec::new();
    for (j, tf) in truth.factors.iter().enumerate() {
        let Some(i) = assign[j] else { continue };
        let l = j + 1;
        let u_err = sin_theta_vec(&est.us[i], &tf.u);
        rows.push((format!("u{l}_sin_op"), u_err));
        rows.push((format!("u{l}_sin_fro"), u_err));
        let tv = tf.v.matrix();
        rows.push((format!("v{l}_sin_op"), sin_theta_op(&est.vs[i], tv)));
        rows.push((format!("v{l}_sin_fro"), sin_theta_fro(&est.vs[i], tv)));
        let tw = tf.y.as_matrix();
        rows.push((format!("w{l}_sin_op"), sin_theta_op(&est.ws[i], &tw)));
        rows.push((format!("w{l}_sin_fro"), sin_theta_fro(&est.ws[i], &tw)));
        if score_scales {
            let scales = est.scales.as_ref().expect("checked above");
            let tx = tf.scale_x.to_diagonal(tf.r_x());
            let ty = tf.scale_y.to_diagonal(tf.r_y());
            rows.push((format!("dx{l}_rel_err"), scale_rel_err(&scales[i].0, &tx)));
            rows.push((format!("dy{l}_rel_err"), scale_rel_err(&scales[i].1, &ty)));
        }
        rows.push((format!("rank_x{l}"), est.vs[i].ncols() as f64));
        rows.push((format!("rank_y{l}"), est.ws[i].ncols() as f64));
    }
    rows
}

/// Adjusted Rand indices of k-means clusterings on estimated factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AriSet {
    /// Samples clustered on the rows of the stacked population factors.
    pub samples: f64,
    /// Nodes clustered on each matched first-view basis, truth layer order.
    pub networks_x: Vec<f64>,
    /// Second-view analog of `networks_x`.
    pub networks_y: Vec<f64>,
}

/// Cluster samples on the stacked population factors and nodes on each
/// matched network basis, scoring every clustering against the stored truth
/// labels by adjusted Rand index.
pub fn cluster_eval(stack: &FactorStack, truth: &GroundTruth, seed: u64) -> Result<AriSet> {
    let est = EstimatedLayers::from_stack(stack);
    let mut rng = stream(seed, 0, StreamKind::Clustering);
    cluster_eval_layers(&est, truth, &mut rng)
}

/// [`cluster_eval`] on pre-extracted layers with a caller-owned RNG.
pub fn cluster_eval_layers<R: Rng>(
    est: &EstimatedLayers,
    truth: &GroundTruth,
    rng: &mut R,
) -> Result<AriSet> {
    let sample_labels = truth.sample_labels.as_ref().ok_or_else(|| {
        Error::Config("clustering evaluation needs a truth with sample labels".into())
    })?;
    if est.us.is_empty() {
        return Err(Error::Config("no estimated layers to cluster".into()));
    }
    let n = est.us[0].len();
    let umat = DMatrix::from_fn(n, est.us.len(), |i, c| est.us[c][i]);
    let (found, _) = kmeans(&umat, sample_labels.k(), KMEANS_RESTARTS, rng)?;
    let samples = adjusted_rand_index(&found, sample_labels)?;

    let truth_us: Vec<DVector<f64>> = truth.factors.iter().map(|f| f.u.clone()).collect();
    let assign = greedy_match(&est.us, &truth_us);
    let mut run = |mats: &[DMatrix<f64>], labels: &[Labeling]| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(labels.len());
        for (j, truth_labels) in labels.iter().enumerate() {
            let Some(i) = assign.get(j).copied().flatten() else {
                continue;
            };
            let (found, _) = kmeans(&mats[i], truth_labels.k(), KMEANS_RESTARTS, rng)?;
            out.push(adjusted_rand_index(&found, truth_labels)?);
        }
        Ok(out)
    };
    let networks_x = run(&est.vs, &truth.node_labels_x)?;
    let networks_y = run(&est.ws, &truth.node_labels_y)?;
    Ok(AriSet {
        samples,
        networks_x,
        networks_y,
    })
}

/// Sum of squared elementwise differences between same-shaped tensors.
fn tensor_residual_sq(a: &SemiSymTensor, b: &SemiSymTensor) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Variance explained by a dense reconstruction; a zero-norm view counts as
/// fully explained.
fn recon_varexp(data_norm_sq: f64, resid_sq: f64) -> f64 {
    if data_norm_sq == 0.0 {
        1.0
    } else {
        1.0 - resid_sq / data_norm_sq
    }
}

fn resolve_variant(method: Method, data: &SimData) -> Result<Variant> {
    let matrix_view = data.y.as_matrix().is_some();
    match (method, matrix_view) {
        (Method::Jisst, false) => Ok(Variant::Scalar),
        (Method::Jisst, true) => Ok(Variant::MatrixTensor),
        (Method::GJisst, false) => Ok(Variant::Generalized),
        (Method::GJisst, true) => Err(Error::Config(
            "diagonal strengths need a tensor-valued second view".into(),
        )),
        _ => unreachable!("tucker methods resolve no power-fit variant"),
    }
}

/// Fit one method to one dataset and emit its metric rows (layer metrics,
/// variance explained, and — when the truth carries labels — ARI values).
fn fit_and_score(
    ms: &MethodSpec,
    data: &SimData,
    seed: u64,
    replicate: u64,
    lambda: Option<f64>,
) -> Result<Vec<(String, f64)>> {
    let x = &data.x;
    let y = data.y.view();
    let truth = &data.truth;
    let k = truth.factors.len();

    let (est, varexp) = if ms.method.is_tucker() {
        let yt = data.y.as_tensor().ok_or_else(|| {
            Error::Config("joint Tucker baselines need a tensor-valued second view".into())
        })?;
        let ranks_x: Vec<usize> = truth.factors.iter().map(|f| f.r_x()).collect();
        let ranks_y: Vec<usize> = truth.factors.iter().map(|f| f.r_y()).collect();
        let fit = match ms.method {
            Method::Ihosvd => ihosvd(x, yt, &ranks_x, &ranks_y)?,
            Method::Ihooi => ihooi(
                x,
                yt,
                &ranks_x,
                &ranks_y,
                ms.t_max.unwrap_or(IHOOI_DEFAULT_CAP),
            )?,
            _ => unreachable!(),
        };
        let vx = recon_varexp(x.norm_sq(), tensor_residual_sq(x, &fit.x_hat));
        let vy = recon_varexp(yt.norm_sq(), tensor_residual_sq(yt, &fit.y_hat));
        (EstimatedLayers::from_tucker(&fit), (vx, vy))
    } else {
        let variant = resolve_variant(ms.method, data)?;
        let stack = match ms.ranks {
            RankMode::Oracle => {
                let ranks: Vec<(usize, usize)> =
                    truth.factors.iter().map(|f| (f.r_x(), f.r_y())).collect();
                let mut opts = MultiFitOptions::new(ranks, variant, ms.deflation);
                opts.lambda = lambda;
                if let Some(t) = ms.t_max {
                    opts.t_max = t;
                }
                if let Some(tol) = ms.tol {
                    opts.tol = tol;
                }
                fit_multifactor(x, y, &opts)?
            }
            RankMode::Bic => {
                let mut opts = BicOptions {
                    r_x_max: ms.bic_max.min(x.p()),
                    r_y_max: if variant.is_matrix() {
                        1
                    } else {
                        ms.bic_max.min(data.y.view().q())
                    },
                    lambda,
                    ..BicOptions::default()
                };
                if let Some(t) = ms.t_max {
                    opts.t_max = t;
                }
                if let Some(tol) = ms.tol {
                    opts.tol = tol;
                }
                fit_multifactor_bic(x, y, k, variant, ms.deflation, &opts)?.stack
            }
        };
        let varexp = variance_explained(x, y, &stack, stack.len())?;
        (EstimatedLayers::from_stack(&stack), varexp)
    };

    let mut rows = layer_rows(&est, truth);
    rows.push(("varexp_x".to_string(), varexp.0));
    rows.push(("varexp_y".to_string(), varexp.1));
    if truth.sample_labels.is_some() {
        let mut rng = stream(seed, replicate, StreamKind::Clustering);
        let ari = cluster_eval_layers(&est, truth, &mut rng)?;
        rows.push(("ari_samples".to_string(), ari.samples));
        for (j, a) in ari.networks_x.iter().enumerate() {
            rows.push((format!("ari_x{}", j + 1), *a));
        }
        for (j, a) in ari.networks_y.iter().enumerate() {
            rows.push((format!("ari_y{}", j + 1), *a));
        }
    }
    Ok(rows)
}

/// The spec run in one grid cell: experiment seed applied, SNR overridden.
fn effective_spec(cfg: &ExperimentConfig, snr: Option<f64>) -> SimSpec {
    let mut spec = cfg.spec.clone();
    spec.seed = cfg.seed;
    if let (SimModel::Factor(f), Some(s)) = (&mut spec.model, snr) {
        f.signal.snr = s;
    }
    spec
}

fn run_cell(
    cfg: &ExperimentConfig,
    snr: Option<f64>,
    replicate: u64,
    lambda: Option<f64>,
) -> (Vec<MetricRow>, Vec<FailureRow>) {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let spec = effective_spec(cfg, snr);
    let data = match generate(&spec, replicate) {
        Ok(d) => d,
        Err(e) => {
            for ms in &cfg.methods {
                failures.push(FailureRow {
                    replicate,
                    method: ms.label(),
                    snr,
                    lambda,
                    error: format!("generation: {e}"),
                });
            }
            return (rows, failures);
        }
    };
    for ms in &cfg.methods {
        match fit_and_score(ms, &data, cfg.seed, replicate, lambda) {
            Ok(metrics) => {
                for (metric, value) in metrics {
                    rows.push(MetricRow {
                        replicate,
                        method: ms.label(),
                        snr,
                        lambda,
                        metric,
                        value,
                    });
                }
            }
            Err(e) => failures.push(FailureRow {
                replicate,
                method: ms.label(),
                snr,
                lambda,
                error: e.to_string(),
            }),
        }
    }
    (rows, failures)
}

fn snr_cells(cfg: &ExperimentConfig) -> Vec<Option<f64>> {
    if cfg.snr_grid.is_empty() {
        vec![None]
    } else {
        cfg.snr_grid.iter().copied().map(Some).collect()
    }
}

/// Run every (λ, SNR, replicate) cell concurrently and assemble the report
/// deterministically (rows ordered by λ, then SNR, then replicate, then
/// config method order).
fn run_with_lambdas(cfg: &ExperimentConfig, lambdas: &[Option<f64>]) -> Result<EvalReport> {
    cfg.validate()?;
    let snrs = snr_cells(cfg);
    let mut cells = Vec::new();
    for &lambda in lambdas {
        for &snr in &snrs {
            for replicate in 0..cfg.replicates {
                cells.push((lambda, snr, replicate));
            }
        }
    }
    let outputs: Vec<(Vec<MetricRow>, Vec<FailureRow>)> = cells
        .par_iter()
        .map(|&(lambda, snr, replicate)| run_cell(cfg, snr, replicate, lambda))
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (r, f) in outputs {
        rows.extend(r);
        failures.extend(f);
    }
    let aggregates = aggregate_rows(&rows);
    Ok(EvalReport {
        metadata: ReportMeta {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            replicates: cfg.replicates,
            interval: "mean ± 1.96·sd/√n (normal approximation)".to_string(),
        },
        rows,
        failures,
        aggregates,
        lambda_markers: Vec::new(),
    })
}

/// Run the configured experiment: generate each replicate, fit every
/// method, match layers to the truth, and aggregate metrics.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EvalReport> {
    run_with_lambdas(cfg, &[None])
}

/// View-weight markers for one SNR cell, averaged over replicates.
fn lambda_markers_for(cfg: &ExperimentConfig, snr: Option<f64>) -> Option<LambdaMarker> {
    let spec = effective_spec(cfg, snr);
    let mut oracles = Vec::new();
    let mut surrogates = Vec::new();
    for replicate in 0..cfg.replicates {
        let Ok(data) = generate(&spec, replicate) else {
            continue;
        };
        surrogates.push(default_lambda(&data.x, data.y.view()));
        if data.truth.sample_labels.is_none() {
            // signal-norm balance from the exact truth reconstruction
            let (p, n) = (data.x.p(), data.x.n_samples());
            let mut xs = SemiSymTensor::zeros(p, n);
            for f in &data.truth.factors {
                xs.add_outer(&f.x_loading(), &f.u, 1.0);
            }
            let ynorm = match data.y.view() {
                YData::Tensor(t) => {
                    let mut ys = SemiSymTensor::zeros(t.p(), n);
                    for f in &data.truth.factors {
                        if let Some(g) = f.y_loading() {
                            ys.add_outer(&g, &f.u, 1.0);
                        }
                    }
                    ys.frobenius_norm()
                }
                YData::Matrix(_) => {
                    let mut ym =
                        DMatrix::zeros(data.y.view().q(), data.y.view().n_samples());
                    for f in &data.truth.factors {
                        if let Some(c) = f.y_matrix_component() {
                            ym += c;
                        }
                    }
                    ym.norm()
                }
            };
            let xnorm = xs.frobenius_norm();
            if xnorm + ynorm > 0.0 {
                oracles.push(xnorm / (xnorm + ynorm));
            }
        }
    }
    if surrogates.is_empty() {
        return None;
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Some(LambdaMarker {
        snr,
        oracle: if oracles.is_empty() {
            None
        } else {
            Some(mean(&oracles))
        },
        surrogate: mean(&surrogates),
    })
}

/// Re-run the experiment once per grid value with the view weight pinned,
/// annotating rows with their λ and recording reference markers.
pub fn lambda_sweep(cfg: &ExperimentConfig, lambda_grid: &[f64]) -> Result<EvalReport> {
    if lambda_grid.is_empty() {
        return Err(Error::Config("λ grid must be nonempty".into()));
    }
    if lambda_grid.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
        return Err(Error::Config(
            "λ grid values must lie strictly inside (0, 1)".into(),
        ));
    }
    let lambdas: Vec<Option<f64>> = lambda_grid.iter().copied().map(Some).collect();
    let mut report = run_with_lambdas(cfg, &lambdas)?;
    report.lambda_markers = snr_cells(cfg)
        .into_iter()
        .filter_map(|snr| lambda_markers_for(cfg, snr))
        .collect();
    Ok(report)
}

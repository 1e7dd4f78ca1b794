//! File formats: the binary `.jst` tensor container, CSV matrices and slice
//! directories, and JSON documents for fitted factors, ground truths, and
//! configs. Every reader validates structure and reports malformed input as
//! a format or configuration error, never a panic.

use std::fs;
use std::io::{BufWriter, Read, Write as _};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::deflate::{Deflation, FactorStack};
use crate::error::Error;
use crate::fit::{Factor, Scale, Variant, YPart};
use crate::linalg::{Labeling, OrthonormalBasis};
use crate::select::BicGrid;
use crate::sim::GroundTruth;
use crate::tensor::SemiSymTensor;
use crate::Result;

/// Leading bytes of every `.jst` tensor file.
pub const JST_MAGIC: &[u8; 8] = b"JSSTTNS1";

#[derive(Serialize, Deserialize)]
struct JstHeader {
    dims: [usize; 3],
    dtype: String,
    order: String,
}

/// Write a tensor as `.jst`: the magic, a little-endian `u32` header
/// length, a UTF-8 JSON header `{"dims":[p,p,N],"dtype":"f64",
/// "order":"slice-major"}`, then `p·p·N` little-endian `f64` values in
/// slice-major order.
pub fn write_tensor(path: &Path, t: &SemiSymTensor) -> Result<()> {
    let (p, _, n) = t.dims();
    let header = serde_json::to_vec(&JstHeader {
        dims: [p, p, n],
        dtype: "f64".to_string(),
        order: "slice-major".to_string(),
    })?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(JST_MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for v in t.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a `.jst` tensor, validating magic, header, payload size, and slice
/// symmetry.
pub fn read_tensor(path: &Path) -> Result<SemiSymTensor> {
    let mut f = fs::File::open(path)?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)
        .map_err(|_| Error::Format(format!("{}: shorter than the magic", path.display())))?;
    if &magic != JST_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {:?}, expected {:?}",
            path.display(),
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(JST_MAGIC)
        )));
    }
    let mut len_bytes = [0u8; 4];
    f.read_exact(&mut len_bytes)
        .map_err(|_| Error::Format(format!("{}: missing header length", path.display())))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    f.read_exact(&mut header_bytes)
        .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
    let header: JstHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Format(format!("{}: bad header: {e}", path.display())))?;
    if header.dtype != "f64" {
        return Err(Error::Format(format!(
            "{}: unsupported dtype {:?}",
            path.display(),
            header.dtype
        )));
    }
    if header.order != "slice-major" {
        return Err(Error::Format(format!(
            "{}: unsupported order {:?}",
            path.display(),
            header.order
        )));
    }
    let [p, p2, n] = header.dims;
    if p != p2 {
        return Err(Error::Format(format!(
            "{}: header dims [{p}, {p2}, {n}] are not square slices",
            path.display()
        )));
    }
    if p == 0 || n == 0 {
        return Err(Error::Format(format!(
            "{}: header declares an empty tensor",
            path.display()
        )));
    }
    let count = p * p * n;
    let mut payload = Vec::new();
    f.read_to_end(&mut payload)?;
    if payload.len() != count * 8 {
        return Err(Error::Format(format!(
            "{}: payload holds {} bytes, expected {} for dims [{p}, {p}, {n}]",
            path.display(),
            payload.len(),
            count * 8
        )));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    SemiSymTensor::from_flat(p, n, data)
}

/// Write a dense matrix as CSV, one row per line, full-precision values.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a dense matrix from CSV; every line must carry the same number of
/// comma-separated values.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            row.push(field.trim().parse::<f64>().map_err(|_| {
                Error::Format(format!(
                    "{} line {}: bad number {:?}",
                    path.display(),
                    i + 1,
                    field
                ))
            })?);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Format(format!(
                    "{} line {}: {} values, expected {}",
                    path.display(),
                    i + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format(format!("{}: empty matrix", path.display())));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Slice-per-file CSV manifest: file names in sample order, relative to the
/// manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceManifest {
    pub slices: Vec<String>,
}

/// Assemble a tensor from a directory of per-slice CSV files listed by a
/// JSON manifest.
pub fn read_tensor_csv_dir(manifest_path: &Path) -> Result<SemiSymTensor> {
    let manifest: SliceManifest = load_json(manifest_path)?;
    if manifest.slices.is_empty() {
        return Err(Error::Format(format!(
            "{}: manifest lists no slices",
            manifest_path.display()
        )));
    }
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut slices = Vec::with_capacity(manifest.slices.len());
    for name in &manifest.slices {
        slices.push(read_matrix_csv(&dir.join(name))?);
    }
    SemiSymTensor::from_slices(&slices)
}

/// Write a tensor as per-slice CSV files plus a manifest, the layout
/// [`read_tensor_csv_dir`] ingests.
pub fn write_tensor_csv_dir(dir: &Path, t: &SemiSymTensor) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut names = Vec::with_capacity(t.n_samples());
    for k in 0..t.n_samples() {
        let name = format!("slice_{k:04}.csv");
        write_matrix_csv(&dir.join(&name), &t.slice_matrix(k))?;
        names.push(name);
    }
    save_json(&dir.join("manifest.json"), &SliceManifest { slices: names })
}

/// Load any JSON-encoded value, reporting schema violations as configuration
/// errors with serde's line/column anchor.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Save any JSON-encodable value, pretty-printed.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Dense matrix in JSON: column-major values with explicit shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDto {
    pub rows: usize,
    pub cols: usize,
    /// Column-major entries, `rows · cols` of them.
    pub data: Vec<f64>,
}

impl MatrixDto {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        MatrixDto {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.as_slice().to_vec(),
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Format(format!(
                "matrix data holds {} values for shape {}x{}",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_column_slice(
            self.rows,
            self.cols,
            &self.data,
        ))
    }
}

/// Second-view loading in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum YPartDto {
    Basis { matrix: MatrixDto },
    Vector { data: Vec<f64> },
}

/// One factor in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDto {
    pub variant: Variant,
    pub u: Vec<f64>,
    pub v: MatrixDto,
    pub y: YPartDto,
    pub scale_x: Scale,
    pub scale_y: Scale,
}

impl FactorDto {
    pub fn from_factor(f: &Factor) -> Self {
        FactorDto {
            variant: f.variant,
            u: f.u.as_slice().to_vec(),
            v: MatrixDto::from_matrix(f.v.matrix()),
            y: match &f.y {
                YPart::Basis(b) => YPartDto::Basis {
                    matrix: MatrixDto::from_matrix(b.matrix()),
                },
                YPart::Vector(w) => YPartDto::Vector {
                    data: w.as_slice().to_vec(),
                },
            },
            scale_x: f.scale_x.clone(),
            scale_y: f.scale_y.clone(),
        }
    }

    /// Rebuild the factor, re-validating loading orthonormality.
    pub fn to_factor(&self) -> Result<Factor> {
        Ok(Factor {
            variant: self.variant,
            u: DVector::from_vec(self.u.clone()),
            v: OrthonormalBasis::new(self.v.to_matrix()?)?,
            y: match &self.y {
                YPartDto::Basis { matrix } => {
                    YPart::Basis(OrthonormalBasis::new(matrix.to_matrix()?)?)
                }
                YPartDto::Vector { data } => YPart::Vector(DVector::from_vec(data.clone())),
            },
            scale_x: self.scale_x.clone(),
            scale_y: self.scale_y.clone(),
        })
    }
}

/// A fitted stack in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorStackDto {
    pub variant: Variant,
    pub deflation: Deflation,
    pub factors: Vec<FactorDto>,
    pub lambdas: Vec<f64>,
    pub residual_norms: Vec<(f64, f64)>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
}

impl FactorStackDto {
    pub fn from_stack(s: &FactorStack) -> Self {
        FactorStackDto {
            variant: s.variant,
            deflation: s.deflation,
            factors: s.factors.iter().map(FactorDto::from_factor).collect(),
            lambdas: s.lambdas.clone(),
            residual_norms: s.residual_norms.clone(),
            iterations: s.iterations.clone(),
            converged: s.converged.clone(),
        }
    }

    pub fn to_stack(&self) -> Result<FactorStack> {
        Ok(FactorStack {
            variant: self.variant,
            deflation: self.deflation,
            factors: self
                .factors
                .iter()
                .map(FactorDto::to_factor)
                .collect::<Result<_>>()?,
            lambdas: self.lambdas.clone(),
            residual_norms: self.residual_norms.clone(),
            iterations: self.iterations.clone(),
            converged: self.converged.clone(),
        })
    }
}

/// Labeling in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingDto {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl LabelingDto {
    pub fn from_labeling(l: &Labeling) -> Self {
        LabelingDto {
            labels: l.labels().to_vec(),
            k: l.k(),
        }
    }

    pub fn to_labeling(&self) -> Result<Labeling> {
        Labeling::new(self.labels.clone(), self.k)
    }
}

/// Ground truth in JSON (`truth.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthDto {
    pub factors: Vec<FactorDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_labels: Option<LabelingDto>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub node_labels_x: Vec<LabelingDto>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub node_labels_y: Vec<LabelingDto>,
    pub warm_ratios: Vec<Option<f64>>,
}

impl GroundTruthDto {
    pub fn from_truth(t: &GroundTruth) -> Self {
        GroundTruthDto {
            factors: t.factors.iter().map(FactorDto::from_factor).collect(),
            sample_labels: t.sample_labels.as_ref().map(LabelingDto::from_labeling),
            node_labels_x: t
                .node_labels_x
                .iter()
                .map(LabelingDto::from_labeling)
                .collect(),
            node_labels_y: t
                .node_labels_y
                .iter()
                .map(LabelingDto::from_labeling)
                .collect(),
            warm_ratios: t.warm_ratios.clone(),
        }
    }

    pub fn to_truth(&self) -> Result<GroundTruth> {
        Ok(GroundTruth {
            factors: self
                .factors
                .iter()
                .map(FactorDto::to_factor)
                .collect::<Result<_>>()?,
            sample_labels: self
                .sample_labels
                .as_ref()
                .map(LabelingDto::to_labeling)
                .transpose()?,
            node_labels_x: self
                .node_labels_x
                .iter()
                .map(LabelingDto::to_labeling)
                .collect::<Result<_>>()?,
            node_labels_y: self
                .node_labels_y
                .iter()
                .map(LabelingDto::to_labeling)
                .collect::<Result<_>>()?,
            warm_ratios: self.warm_ratios.clone(),
        })
    }
}

/// Everything a fit run writes (`factors.json`): the stack, per-step view
/// weights (inside the stack), rank-selection grids when used, the
/// variance-explained scan, and wall-clock timing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDocument {
    pub stack: FactorStackDto,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bic_grids: Option<Vec<BicGrid>>,
    /// Cumulative variance explained `(x, y)` after each factor.
    pub variance_scan: Vec<(f64, f64)>,
    pub elapsed_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

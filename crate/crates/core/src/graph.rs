//! Data ingestion, adaptive-bandwidth Gaussian kernels, normalized Laplacians
//! and the multi-kernel family.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SscError};

/// `p × n` feature matrix; column `j` is sample `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    x: DMatrix<f64>,
    labels: Option<Vec<i64>>,
}

impl DataMatrix {
    pub fn new(x: DMatrix<f64>, labels: Option<Vec<i64>>) -> Result<Self> {
        if x.ncols() < 2 {
            return Err(SscError::InvalidParameter(format!(
                "need at least 2 samples, got {}",
                x.ncols()
            )));
        }
        if let Some((k, _)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(SscError::Ingestion {
                row: k % x.nrows() + 1,
                col: k / x.nrows() + 1,
                detail: "non-finite value".into(),
            });
        }
        if let Some(l) = &labels {
            if l.len() != x.ncols() {
                return Err(SscError::dim("labels", x.ncols(), l.len()));
            }
        }
        Ok(Self { x, labels })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn n_samples(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_features(&self) -> usize {
        self.x.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// Each CSV column is a sample (genes × cells layout).
    #[default]
    SamplesInColumns,
    /// Each CSV row is a sample.
    SamplesInRows,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadOptions {
    pub orientation: Orientation,
    pub has_header: bool,
    /// The final column holds integer labels. Only meaningful with
    /// [`Orientation::SamplesInRows`].
    pub label_column: bool,
    pub log_transform: bool,
    pub top_variance_genes: Option<usize>,
}

impl LoadOptions {
    /// scRNA-seq preset: `log2(x + 1)` and the 2000 most variable genes.
    pub fn scrna() -> Self {
        Self {
            log_transform: true,
            top_variance_genes: Some(2000),
            ..Self::default()
        }
    }
}

pub fn load_matrix(path: impl AsRef<Path>, options: &LoadOptions) -> Result<DataMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_data(&text, options)
}

pub fn parse_data(text: &str, options: &LoadOptions) -> Result<DataMatrix> {
    if options.label_column && options.orientation == Orientation::SamplesInColumns {
        return Err(SscError::Config(
            "a label column requires samples-in-rows orientation".into(),
        ));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<i64> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| SscError::Ingestion {
            row: i + 1,
            col: 1,
            detail: e.to_string(),
        })?;
        if i == 0 && options.has_header {
            continue;
        }
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        let mut cells: Vec<&str> = record.iter().collect();
        if options.label_column {
            let last = cells.pop().unwrap_or("");
            let label = last.parse::<f64>().ok().filter(|v| v.fract() == 0.0).ok_or_else(|| {
                SscError::Ingestion {
                    row: i + 1,
                    col: record.len(),
                    detail: format!("cannot parse label {last:?}"),
                }
            })?;
            labels.push(label as i64);
        }
        let row = cells
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<f64>().map_err(|_| SscError::Ingestion {
                    row: i + 1,
                    col: j + 1,
                    detail: format!("cannot parse {cell:?} as a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(SscError::Ingestion {
                    row: i + 1,
                    col: row.len().min(first.len()) + 1,
                    detail: format!("expected {} values, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(SscError::EmptyInput("data file has no numeric body".into()));
    }

    let (r, c) = (rows.len(), rows[0].len());
    let mut x = match options.orientation {
        Orientation::SamplesInColumns => DMatrix::from_fn(r, c, |i, j| rows[i][j]),
        Orientation::SamplesInRows => DMatrix::from_fn(c, r, |i, j| rows[j][i]),
    };
    if options.log_transform {
        x.apply(|v| *v = (*v + 1.0).log2());
    }
    if let Some(k) = options.top_variance_genes {
        x = top_variance_rows(&x, k);
    }
    DataMatrix::new(x, options.label_column.then_some(labels))
}

/// Keeps the `k` rows (genes) with the largest variance across samples, in
/// their original order.
fn top_variance_rows(x: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    if k >= x.nrows() {
        return x.clone();
    }
    let n = x.ncols() as f64;
    let var: Vec<f64> = x
        .row_iter()
        .map(|row| {
            let mean = row.sum() / n;
            row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
        })
        .collect();
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
    let mut keep = order[..k].to_vec();
    keep.sort_unstable();
    DMatrix::from_fn(k, x.ncols(), |i, j| x[(keep[i], j)])
}

/// Pairwise Euclidean distances between samples.
pub fn pairwise_distances(x: &DataMatrix) -> DMatrix<f64> {
    let f = x.features();
    let n = f.ncols();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = (f.column(i) - f.column(j)).norm();
            d[(i, j)] = dist;
            d[(j, i)] = dist;
        }
    }
    d
}

/// `μ_i`: mean distance from sample `i` to its `m` nearest other samples.
/// A zero entry means the sample has at least `m` exact duplicates; see
/// [`degenerate_scales`].
pub fn knn_scales(x: &DataMatrix, m: usize) -> Result<Vec<f64>> {
    knn_scales_from_distances(&pairwise_distances(x), m)
}

pub fn degenerate_scales(mu: &[f64]) -> Vec<usize> {
    mu.iter()
        .enumerate()
        .filter(|(_, &v)| v <= 0.0)
        .map(|(i, _)| i)
        .collect()
}

fn knn_scales_from_distances(d: &DMatrix<f64>, m: usize) -> Result<Vec<f64>> {
    let n = d.nrows();
    if m == 0 || m >= n {
        return Err(SscError::InvalidParameter(format!(
            "neighbor count m must satisfy 1 <= m <= n-1 (m={m}, n={n})"
        )));
    }
    Ok((0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d[(i, j)]).collect();
            row.select_nth_unstable_by(m - 1, f64::total_cmp);
            row[..m].iter().sum::<f64>() / m as f64
        })
        .collect())
}

/// Symmetric nonnegative affinity matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Similarity {
    s: DMatrix<f64>,
    params: Option<(f64, usize)>,
}

impl Similarity {
    /// Wraps a user-supplied affinity. The diagonal is zeroed.
    pub fn from_matrix(mut s: DMatrix<f64>) -> Result<Self> {
        let n = s.nrows();
        if s.ncols() != n {
            return Err(SscError::dim("similarity", "square", format!("{:?}", s.shape())));
        }
        for i in 0..n {
            for j in 0..n {
                let v = s[(i, j)];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(SscError::InvalidParameter(format!(
                        "similarity entry ({i}, {j}) = {v} is not a finite nonnegative number"
                    )));
                }
                if (v - s[(j, i)]).abs() > 1e-12 * (1.0 + v.abs()) {
                    return Err(SscError::InvalidParameter(format!(
                        "similarity is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        s.fill_diagonal(0.0);
        Ok(Self { s, params: None })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    /// `(δ, m)` when built by [`gaussian_kernel`].
    pub fn params(&self) -> Option<(f64, usize)> {
        self.params
    }
}

/// Gaussian kernel with bandwidth `ε_ij = δ(μ_i + μ_j)/2`:
/// `K(i,j) = exp(−‖x_i − x_j‖² / (2 ε_ij²))`, diagonal zeroed.
pub fn gaussian_kernel(x: &DataMatrix, delta: f64, m: usize) -> Result<Similarity> {
    let d = pairwise_distances(x);
    let mu = knn_scales_from_distances(&d, m)?;
    kernel_from_parts(&d, &mu, delta, m)
}

fn kernel_from_parts(d: &DMatrix<f64>, mu: &[f64], delta: f64, m: usize) -> Result<Similarity> {
    if !(delta > 0.0) {
        return Err(SscError::InvalidParameter(format!("delta must be > 0, got {delta}")));
    }
    let scale = d.max();
    if !(scale > 0.0) {
        return Err(SscError::InvalidParameter(
            "all samples are identical; every bandwidth is zero".into(),
        ));
    }
    let floor = 1e-12 * scale;
    let n = d.nrows();
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let eps = (delta * (mu[i] + mu[j]) / 2.0).max(floor);
            let v = (-d[(i, j)].powi(2) / (2.0 * eps * eps)).exp();
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(Similarity {
        s,
        params: Some((delta, m)),
    })
}

/// Normalized graph Laplacian `I − D^{-1/2} S D^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    l: DMatrix<f64>,
}

impl Laplacian {
    /// Wraps a precomputed symmetric matrix (e.g. read back from CSV).
    pub fn from_matrix(l: DMatrix<f64>) -> Result<Self> {
        if l.nrows() != l.ncols() {
            return Err(SscError::dim("laplacian", "square", format!("{:?}", l.shape())));
        }
        let asym = crate::linalg::asymmetry(&l);
        if asym > 1e-8 {
            return Err(SscError::InvalidParameter(format!(
                "laplacian is not symmetric (‖L − Lᵀ‖_F = {asym:.3e})"
            )));
        }
        Ok(Self { l })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn n(&self) -> usize {
        self.l.nrows()
    }
}

pub fn normalized_laplacian(s: &Similarity) -> Result<Laplacian> {
    let s = s.matrix();
    let n = s.nrows();
    let deg: Vec<f64> = s.row_iter().map(|r| r.sum()).collect();
    if let Some(i) = deg.iter().position(|&d| !(d > 0.0)) {
        return Err(SscError::IsolatedNode(i));
    }
    let l = DMatrix::from_fn(n, n, |i, j| {
        let off = s[(i, j)] / (deg[i] * deg[j]).sqrt();
        if i == j {
            1.0 - off
        } else {
            -off
        }
    });
    Ok(Laplacian { l })
}

/// Default bandwidth multipliers `S(δ)`.
pub const DEFAULT_DELTAS: [f64; 5] = [1.0, 1.5, 2.0, 2.5, 3.0];
/// Default neighbor counts `S(m)`.
pub const DEFAULT_NEIGHBORS: [usize; 3] = [10, 15, 20];

/// Laplacians for every `(δ, m)` pair, δ outer and m inner.
#[derive(Debug, Clone)]
pub struct KernelFamily {
    laplacians: Vec<Laplacian>,
    grid: Vec<(f64, usize)>,
}

impl KernelFamily {
    pub fn from_laplacians(laplacians: Vec<Laplacian>) -> Result<Self> {
        let n = laplacians
            .first()
            .map(Laplacian::n)
            .ok_or_else(|| SscError::EmptyInput("kernel family".into()))?;
        if let Some(bad) = laplacians.iter().find(|l| l.n() != n) {
            return Err(SscError::dim("kernel family", n, bad.n()));
        }
        let grid = vec![(f64::NAN, 0); laplacians.len()];
        Ok(Self { laplacians, grid })
    }

    pub fn laplacians(&self) -> &[Laplacian] {
        &self.laplacians
    }

    pub fn grid(&self) -> &[(f64, usize)] {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.laplacians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.laplacians.is_empty()
    }

    pub fn n(&self) -> usize {
        self.laplacians[0].n()
    }

    /// The same family with members reordered: member `i` of the result is
    /// member `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            laplacians: order.iter().map(|&i| self.laplacians[i].clone()).collect(),
            grid: order.iter().map(|&i| self.grid[i]).collect(),
        }
    }
}

pub fn kernel_family(x: &DataMatrix, deltas: &[f64], neighbors: &[usize]) -> Result<KernelFamily> {
    if deltas.is_empty() || neighbors.is_empty() {
        return Err(SscError::EmptyInput("kernel grid".into()));
    }
    let d = pairwise_distances(x);
    let scales: Vec<Vec<f64>> = neighbors
        .iter()
        .map(|&m| knn_scales_from_distances(&d, m))
        .collect::<Result<_>>()?;
    let grid: Vec<(f64, usize, usize)> = deltas
        .iter()
        .flat_map(|&delta| neighbors.iter().enumerate().map(move |(k, &m)| (delta, m, k)))
        .collect();
    let laplacians = grid
        .par_iter()
        .map(|&(delta, m, k)| normalized_laplacian(&kernel_from_parts(&d, &scales[k], delta, m)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(KernelFamily {
        laplacians,
        grid: grid.into_iter().map(|(delta, m, _)| (delta, m)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn line(points: &[f64]) -> DataMatrix {
        DataMatrix::new(DMatrix::from_row_slice(1, points.len(), points), None).unwrap()
    }

    #[test]
    fn reads_columns_as_samples() {
        let d = parse_data("1,3\n2,4", &LoadOptions::default()).unwrap();
        assert_eq!(d.features(), &dmatrix![1.0, 3.0; 2.0, 4.0]);
    }

    #[test]
    fn log_transform_of_zeros() {
        let opts = LoadOptions {
            log_transform: true,
            ..Default::default()
        };
        let d = parse_data("0,0\n0,0\n0,0", &opts).unwrap();
        assert_eq!(d.features(), &DMatrix::zeros(3, 2));
    }

    #[test]
    fn bad_cell_reports_location() {
        let err = parse_data("1,3\nabc,4", &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, SscError::Ingestion { row: 2, col: 1, .. }), "{err}");
    }

    #[test]
    fn empty_file_is_rejected() {
        assert!(matches!(
            parse_data("", &LoadOptions::default()),
            Err(SscError::EmptyInput(_))
        ));
    }

    #[test]
    fn rows_with_labels_and_header() {
        let opts = LoadOptions {
            orientation: Orientation::SamplesInRows,
            has_header: true,
            label_column: true,
            ..Default::default()
        };
        let d = parse_data("a,b,label\n1,2,0\n3,4,1\n5,6,1\n", &opts).unwrap();
        assert_eq!(d.features(), &dmatrix![1.0, 3.0, 5.0; 2.0, 4.0, 6.0]);
        assert_eq!(d.labels(), Some(&[0, 1, 1][..]));
    }

    #[test]
    fn top_variance_keeps_order() {
        let opts = LoadOptions {
            top_variance_genes: Some(2),
            ..Default::default()
        };
        let d = parse_data("1,1,1\n0,5,10\n2,2,3\n0,-9,9", &opts).unwrap();
        assert_eq!(d.features(), &dmatrix![0.0, 5.0, 10.0; 0.0, -9.0, 9.0]);
    }

    #[test]
    fn knn_scales_on_a_line() {
        let x = line(&[0.0, 1.0, 3.0]);
        assert_eq!(knn_scales(&x, 1).unwrap(), vec![1.0, 1.0, 2.0]);
        assert_eq!(knn_scales(&x, 2).unwrap(), vec![2.0, 1.5, 2.5]);
        assert!(knn_scales(&x, 3).is_err());
        assert!(knn_scales(&x, 0).is_err());
    }

    #[test]
    fn duplicates_give_zero_scale() {
        let x = line(&[0.0, 0.0, 5.0]);
        let mu = knn_scales(&x, 1).unwrap();
        assert_eq!(degenerate_scales(&mu), vec![0, 1]);
        // The floor keeps the kernel finite; duplicates get affinity 1.
        let s = gaussian_kernel(&x, 1.0, 1).unwrap();
        assert_eq!(s.matrix()[(0, 1)], 1.0);
        assert!(s.matrix().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn all_duplicates_is_an_error() {
        let x = line(&[2.0, 2.0, 2.0]);
        assert!(gaussian_kernel(&x, 1.0, 1).is_err());
    }

    #[test]
    fn kernel_value_on_a_line() {
        let x = line(&[0.0, 1.0, 3.0]);
        let s = gaussian_kernel(&x, 1.0, 1).unwrap();
        assert!((s.matrix()[(0, 1)] - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(s.matrix()[(0, 0)], 0.0);
        assert_eq!(s.matrix(), &s.matrix().transpose());
    }

    #[test]
    fn two_node_laplacian() {
        let s = Similarity::from_matrix(dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        let l = normalized_laplacian(&s).unwrap();
        assert_eq!(l.matrix(), &dmatrix![1.0, -1.0; -1.0, 1.0]);
    }

    #[test]
    fn isolated_node_is_named() {
        let s = Similarity::from_matrix(dmatrix![0.0, 1.0, 0.0; 1.0, 0.0, 0.0; 0.0, 0.0, 0.0])
            .unwrap();
        assert!(matches!(normalized_laplacian(&s), Err(SscError::IsolatedNode(2))));
    }

    #[test]
    fn family_size_and_order() {
        let x = DataMatrix::new(DMatrix::from_fn(3, 25, |i, j| ((i * 7 + j * 3) % 11) as f64), None)
            .unwrap();
        let fam = kernel_family(&x, &DEFAULT_DELTAS, &DEFAULT_NEIGHBORS).unwrap();
        assert_eq!(fam.len(), 15);
        assert_eq!(fam.grid()[0], (1.0, 10));
        assert_eq!(fam.grid()[1], (1.0, 15));
        assert_eq!(fam.grid()[3], (1.5, 10));
        let single = kernel_family(&x, &[2.0], &[15]).unwrap();
        let direct = normalized_laplacian(&gaussian_kernel(&x, 2.0, 15).unwrap()).unwrap();
        assert_eq!(single.laplacians()[0], direct);
    }
}

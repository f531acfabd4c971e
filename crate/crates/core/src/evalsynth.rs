//! Rounding an embedding to labels (k-means), NMI scoring and the two
//! synthetic data generators.

use std::collections::HashMap;
use std::hash::Hash;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SscError};
use crate::graph::DataMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub nmi_vs_truth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KmeansOptions {
    pub restarts: usize,
    pub normalize_rows: bool,
    pub max_iters: usize,
}

impl Default for KmeansOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            normalize_rows: true,
            max_iters: 300,
        }
    }
}

/// Lloyd's k-means with k-means++ seeding, best of `restarts` runs.
/// Rows are ℓ2-normalized first unless disabled.
pub fn kmeans(rows: &DMatrix<f64>, k: usize, seed: u64, opts: &KmeansOptions) -> Result<ClusterResult> {
    let n = rows.nrows();
    if k == 0 || k > n {
        return Err(SscError::InvalidParameter(format!(
            "k-means needs 1 <= C <= n (C={k}, n={n})"
        )));
    }
    if opts.restarts == 0 {
        return Err(SscError::InvalidParameter("k-means needs at least one restart".into()));
    }
    let points: Vec<Vec<f64>> = rows
        .row_iter()
        .map(|r| {
            let mut v: Vec<f64> = r.iter().copied().collect();
            if opts.normalize_rows {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    v.iter_mut().for_each(|x| *x /= norm);
                }
            }
            v
        })
        .collect();

    let runs: Vec<(Vec<usize>, f64)> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let centers = plus_plus(&points, k, &mut rng);
            let (labels, history) = lloyd(&points, centers, opts.max_iters);
            (labels, *history.last().unwrap_or(&0.0))
        })
        .collect();
    let (labels, inertia) = runs
        .into_iter()
        .reduce(|best, cur| if cur.1 < best.1 { cur } else { best })
        .expect("at least one restart");
    Ok(ClusterResult {
        labels,
        inertia,
        nmi_vs_truth: None,
    })
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center, ties to the lower index.
fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // Every point coincides with a center: take unused indices in order.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

/// Lloyd iterations to a fixed point. Returns labels and the inertia after
/// every assignment step.
fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>, max_iters: usize) -> (Vec<usize>, Vec<f64>) {
    let k = centers.len();
    let dim = points[0].len();
    let mut labels: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    for _ in 0..max_iters.max(1) {
        let assigned: Vec<(usize, f64)> = points.iter().map(|p| nearest(p, &centers)).collect();
        history.push(assigned.iter().map(|a| a.1).sum());
        let new_labels: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        if new_labels == labels {
            break;
        }
        labels = new_labels;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        // Empty clusters restart at the point farthest from its own center.
        for j in 0..k {
            if counts[j] == 0 {
                let far = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, dist2(p, &centers[labels[i]])))
                    .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
                    .0;
                centers[j] = points[far].clone();
                labels[far] = j;
                counts[j] = 1;
            }
        }
    }
    // Inertia of the returned labeling against its own centroids.
    let final_inertia = inertia_of(points, &labels, k);
    if history.last().is_none_or(|&h| final_inertia < h) {
        history.push(final_inertia);
    }
    (labels, history)
}

fn inertia_of(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        sums[l].iter_mut().zip(p).for_each(|(s, x)| *s += x);
    }
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| {
            let c: Vec<f64> = sums[l].iter().map(|s| s / counts[l] as f64).collect();
            dist2(p, &c)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmiNorm {
    /// `I / √(H(a)H(b))`.
    #[default]
    Sqrt,
    /// `2I / (H(a) + H(b))`.
    Mean,
    /// `I / max(H(a), H(b))`.
    Max,
}

impl std::str::FromStr for NmiNorm {
    type Err = SscError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt" => Ok(Self::Sqrt),
            "mean" => Ok(Self::Mean),
            "max" => Ok(Self::Max),
            other => Err(SscError::Config(format!("unknown NMI normalization {other:?}"))),
        }
    }
}

/// Normalized mutual information with natural logarithms.
pub fn nmi<A, B>(a: &[A], b: &[B]) -> Result<f64>
where
    A: Eq + Hash + Copy,
    B: Eq + Hash + Copy,
{
    nmi_with(a, b, NmiNorm::Sqrt)
}

pub fn nmi_with<A, B>(a: &[A], b: &[B], norm: NmiNorm) -> Result<f64>
where
    A: Eq + Hash + Copy,
    B: Eq + Hash + Copy,
{
    if a.len() != b.len() {
        return Err(SscError::dim("nmi labels", a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(SscError::EmptyInput("nmi labels".into()));
    }
    let n = a.len() as f64;
    let ia = index_labels(a);
    let ib = index_labels(b);
    let ka = ia.iter().max().unwrap() + 1;
    let kb = ib.iter().max().unwrap() + 1;
    let mut joint = vec![0usize; ka * kb];
    let mut ca = vec![0usize; ka];
    let mut cb = vec![0usize; kb];
    for (&x, &y) in ia.iter().zip(&ib) {
        joint[x * kb + y] += 1;
        ca[x] += 1;
        cb[y] += 1;
    }
    let entropy = |counts: &[usize]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let (ha, hb) = (entropy(&ca), entropy(&cb));
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for x in 0..ka {
        for y in 0..kb {
            let c = joint[x * kb + y];
            if c > 0 {
                let pxy = c as f64 / n;
                mi += pxy * (pxy * n * n / (ca[x] as f64 * cb[y] as f64)).ln();
            }
        }
    }
    let denom = match norm {
        NmiNorm::Sqrt => (ha * hb).sqrt(),
        NmiNorm::Mean => (ha + hb) / 2.0,
        NmiNorm::Max => ha.max(hb),
    };
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

/// Dense ids in order of first appearance.
fn index_labels<T: Eq + Hash + Copy>(labels: &[T]) -> Vec<usize> {
    let mut ids = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        })
        .collect()
}

/// Circle data: `C` centers equally spaced on the unit circle, latent points
/// uniform in a disk of radius `noise_frac` around their center, mapped to
/// `p` dimensions by a Gaussian `p × 2` matrix, plus per-coordinate Gaussian
/// noise with standard deviation `U[0.5, 1.5] · 0.1 · noise_frac`.
/// Clusters are balanced and stored contiguously.
pub fn synth1(n: usize, p: usize, c: usize, noise_frac: f64, seed: u64) -> Result<DataMatrix> {
    if p < 2 {
        return Err(SscError::InvalidParameter(format!("synth1 needs p >= 2, got {p}")));
    }
    if c == 0 || n < c {
        return Err(SscError::InvalidParameter(format!("synth1 needs n >= C >= 1 (n={n}, C={c})")));
    }
    if !(noise_frac >= 0.0) {
        return Err(SscError::InvalidParameter(format!("noise_frac must be >= 0, got {noise_frac}")));
    }
    let radius = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let proj: DMatrix<f64> = DMatrix::from_fn(p, 2, |_, _| StandardNormal.sample(&mut rng));
    let scales: Vec<f64> = (0..p)
        .map(|_| rng.random_range(0.5..=1.5) * 0.1 * noise_frac * radius)
        .collect();

    let labels: Vec<i64> = (0..n).map(|i| (i * c / n) as i64).collect();
    let mut latent: DMatrix<f64> = DMatrix::zeros(2, n);
    for (i, &l) in labels.iter().enumerate() {
        let (cx, cy) = center(l as usize, c, radius);
        let r = noise_frac * radius * rng.random::<f64>().sqrt();
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        latent[(0, i)] = cx + r * phi.cos();
        latent[(1, i)] = cy + r * phi.sin();
    }
    let mut x = &proj * latent;
    for j in 0..n {
        for (i, &s) in scales.iter().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[(i, j)] += s * z;
        }
    }
    DataMatrix::new(x, Some(labels))
}

/// Center `ℓ` of the `C`-gon on the circle of the given radius.
pub fn center(l: usize, c: usize, radius: f64) -> (f64, f64) {
    let angle = std::f64::consts::TAU * l as f64 / c as f64;
    (radius * angle.cos(), radius * angle.sin())
}

/// Factor data `X = ZB + W`: random labels `Z`, `B = [B′, 0]` with row `ℓ`
/// of `B′` Gaussian of standard deviation `s_ℓ ~ U[1, 3]`, and Gaussian `W`
/// with standard deviation `noise_frac · ‖B′‖_F / √(Cd)`.
pub fn synth2(n: usize, p: usize, c: usize, d: usize, noise_frac: f64, seed: u64) -> Result<DataMatrix> {
    if d == 0 || d >= p {
        return Err(SscError::InvalidParameter(format!("synth2 needs 1 <= d < p (d={d}, p={p})")));
    }
    if c == 0 || n < c {
        return Err(SscError::InvalidParameter(format!("synth2 needs n >= C >= 1 (n={n}, C={c})")));
    }
    if !(noise_frac >= 0.0) {
        return Err(SscError::InvalidParameter(format!("noise_frac must be >= 0, got {noise_frac}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let row_sd: Vec<f64> = (0..c).map(|_| rng.random_range(1.0..=3.0)).collect();
    let b = DMatrix::from_fn(c, d, |l, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        row_sd[l] * z
    });
    let noise_sd = noise_frac * b.norm() / ((c * d) as f64).sqrt();
    let labels: Vec<i64> = (0..n).map(|_| rng.random_range(0..c) as i64).collect();
    let mut x = DMatrix::zeros(p, n);
    for (j, &l) in labels.iter().enumerate() {
        for i in 0..p {
            let signal = if i < d { b[(l as usize, i)] } else { 0.0 };
            let z: f64 = StandardNormal.sample(&mut rng);
            x[(i, j)] = signal + noise_sd * z;
        }
    }
    DataMatrix::new(x, Some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn nmi_examples() {
        assert_eq!(nmi(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert!((nmi(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap().abs() < 1e-15);
        assert_eq!(nmi(&[3, 3, 3], &[7, 7, 7]).unwrap(), 1.0);
        assert!(nmi(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn nmi_normalizations_agree_on_equal_entropies() {
        let a = [0, 0, 1, 1, 2, 2];
        let b = [0, 1, 1, 2, 2, 0];
        let s = nmi_with(&a, &b, NmiNorm::Sqrt).unwrap();
        let m = nmi_with(&a, &b, NmiNorm::Mean).unwrap();
        let x = nmi_with(&a, &b, NmiNorm::Max).unwrap();
        assert!((s - m).abs() < 1e-15 && (s - x).abs() < 1e-15);
    }

    #[test]
    fn kmeans_splits_blobs() {
        let rows = dmatrix![
            0.0, 0.0; 0.1, 0.0; 0.0, 0.1;
            10.0, 10.0; 10.1, 10.0; 10.0, 10.1
        ];
        let opts = KmeansOptions {
            normalize_rows: false,
            ..Default::default()
        };
        let out = kmeans(&rows, 2, 1, &opts).unwrap();
        assert_eq!(out.labels[0], out.labels[1]);
        assert_eq!(out.labels[0], out.labels[2]);
        assert_eq!(out.labels[3], out.labels[5]);
        assert_ne!(out.labels[0], out.labels[3]);
        // Centroid (1/30, 1/30): squared distances 2/900, 5/900, 5/900 per blob.
        let blob = 2.0 * 12.0 / 900.0;
        assert!((out.inertia - blob).abs() < 1e-12, "{} vs {blob}", out.inertia);
    }

    #[test]
    fn kmeans_one_point_per_cluster() {
        let rows = dmatrix![1.0, 0.0; 0.0, 1.0; -1.0, 0.0];
        let out = kmeans(&rows, 3, 5, &KmeansOptions::default()).unwrap();
        let mut l = out.labels.clone();
        l.sort();
        assert_eq!(l, vec![0, 1, 2]);
        assert_eq!(out.inertia, 0.0);
    }

    #[test]
    fn kmeans_duplicates_share_labels() {
        let rows = dmatrix![1.0, 0.2; 1.0, 0.2; 0.0, 1.0; 0.3, 0.9; 1.0, 0.2];
        let out = kmeans(&rows, 2, 2, &KmeansOptions::default()).unwrap();
        assert_eq!(out.labels[0], out.labels[1]);
        assert_eq!(out.labels[0], out.labels[4]);
    }

    #[test]
    fn lloyd_inertia_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        for s in 0..10 {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            let centers = plus_plus(&pts, 4, &mut r);
            let (_, hist) = lloyd(&pts, centers, 300);
            for w in hist.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{hist:?}");
            }
        }
    }

    #[test]
    fn synth1_geometry_and_determinism() {
        let a = synth1(100, 250, 5, 0.3, 1).unwrap();
        let b = synth1(100, 250, 5, 0.3, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.features().shape(), (250, 100));
        let chord = 2.0 * (std::f64::consts::PI / 5.0).sin();
        let (x0, y0) = center(0, 5, 1.0);
        let (x1, y1) = center(1, 5, 1.0);
        assert!((((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt() - chord).abs() < 1e-12);
        let z = synth1(20, 6, 2, 0.0, 3).unwrap();
        let f = z.features();
        assert_eq!(f.column(0), f.column(9));
        assert_ne!(f.column(0), f.column(10));
    }

    #[test]
    fn synth2_structure() {
        let x = synth2(30, 12, 3, 4, 0.0, 9).unwrap();
        let labels = x.labels().unwrap();
        let f = x.features();
        for i in 0..30 {
            for j in 0..30 {
                if labels[i] == labels[j] {
                    assert_eq!(f.column(i), f.column(j));
                }
            }
            assert!(f.column(i).rows(4, 8).iter().all(|&v| v == 0.0));
        }
        assert!(synth2(10, 5, 2, 5, 0.1, 0).is_err());
    }
}

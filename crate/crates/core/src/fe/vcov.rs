use std::collections::HashMap;
use std::hash::Hash;

use super::wls::Qr;
use super::{intern, DesignMatrix};
use crate::error::{Error, Result};
use crate::kernel::WeightVector;

/// Two cluster keys per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub names: (String, String),
    dim_a: Vec<u32>,
    dim_b: Vec<u32>,
}

impl ClusterAssignment {
    pub fn from_keys<A, B, IA, IB>(names: (&str, &str), a: IA, b: IB) -> Result<Self>
    where
        A: Hash + Eq,
        B: Hash + Eq,
        IA: IntoIterator<Item = A>,
        IB: IntoIterator<Item = B>,
    {
        let (dim_a, _) = intern(a);
        let (dim_b, _) = intern(b);
        if dim_a.len() != dim_b.len() {
            return Err(Error::InvalidArgument(
                "cluster dimensions have different lengths".into(),
            ));
        }
        Ok(Self {
            names: (names.0.to_string(), names.1.to_string()),
            dim_a,
            dim_b,
        })
    }

    pub fn len(&self) -> usize {
        self.dim_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dim_a.is_empty()
    }

    pub fn dim_a(&self) -> &[u32] {
        &self.dim_a
    }

    pub fn dim_b(&self) -> &[u32] {
        &self.dim_b
    }

    fn intersection(&self) -> Vec<u32> {
        intern(self.dim_a.iter().zip(&self.dim_b)).0
    }
}

/// `V = V_a + V_b - V_ab`, with and without the `G/(G-1)` corrections.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterVcov {
    pub raw: Vec<Vec<f64>>,
    pub adjusted: Vec<Vec<f64>>,
    /// Cluster counts in dimension a, dimension b and their intersection.
    pub clusters: (usize, usize, usize),
    /// Indices whose raw variance is negative.
    pub negative_diagonal: Vec<usize>,
}

/// `sum_g s_g s_g'` where `s_g` sums the scores `w_i x_i e_i` of cluster `g`.
#[allow(clippy::needless_range_loop)]
fn meat(columns: &[&[f64]], scores_scale: &[f64], keys: &[u32]) -> (Vec<Vec<f64>>, usize) {
    let k = columns.len();
    let mut index: HashMap<u32, usize> = HashMap::new();
    let mut sums: Vec<Vec<f64>> = Vec::new();
    for (i, (&key, &s)) in keys.iter().zip(scores_scale).enumerate() {
        if s == 0.0 {
            continue;
        }
        let g = *index.entry(key).or_insert_with(|| {
            sums.push(vec![0.0; k]);
            sums.len() - 1
        });
        for (acc, c) in sums[g].iter_mut().zip(columns) {
            *acc += c[i] * s;
        }
    }
    let mut m = vec![vec![0.0; k]; k];
    for s in &sums {
        for a in 0..k {
            for b in a..k {
                m[a][b] += s[a] * s[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            m[a][b] = m[b][a];
        }
    }
    (m, sums.len())
}

#[allow(clippy::needless_range_loop)]
fn sandwich(bread: &[Vec<f64>], meat: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = bread.len();
    let mut bm = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            bm[i][j] = (0..k).map(|m| bread[i][m] * meat[m][j]).sum();
        }
    }
    let mut v = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            v[i][j] = (0..k).map(|m| bm[i][m] * bread[m][j]).sum();
        }
    }
    for i in 0..k {
        for j in 0..i {
            let s = 0.5 * (v[i][j] + v[j][i]);
            v[i][j] = s;
            v[j][i] = s;
        }
    }
    v
}

fn combine(ma: &[Vec<f64>], mb: &[Vec<f64>], mab: &[Vec<f64>], c: (f64, f64, f64)) -> Vec<Vec<f64>> {
    ma.iter()
        .zip(mb)
        .zip(mab)
        .map(|((ra, rb), rab)| {
            ra.iter()
                .zip(rb)
                .zip(rab)
                .map(|((a, b), ab)| c.0 * a + c.1 * b - c.2 * ab)
                .collect()
        })
        .collect()
}

pub(crate) fn twoway_with_bread(
    design: &DesignMatrix,
    residuals: &[f64],
    weights: &WeightVector,
    clusters: &ClusterAssignment,
    bread: &[Vec<f64>],
) -> Result<ClusterVcov> {
    let n = design.n_rows();
    if residuals.len() != n || weights.len() != n || clusters.len() != n {
        return Err(Error::InvalidArgument(
            "residuals, weights and clusters must match the design rows".into(),
        ));
    }
    let scale: Vec<f64> = weights
        .as_slice()
        .iter()
        .zip(residuals)
        .map(|(w, e)| w * e)
        .collect();
    let cols: Vec<&[f64]> = design.columns().iter().map(Vec::as_slice).collect();
    let support: Vec<bool> = weights.as_slice().iter().map(|&w| w > 0.0).collect();
    let count = |keys: &[u32]| {
        let mut seen: Vec<u32> = keys
            .iter()
            .zip(&support)
            .filter(|(_, &s)| s)
            .map(|(&k, _)| k)
            .collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    };
    let inter = clusters.intersection();
    let (ga, gb, gab) = (count(&clusters.dim_a), count(&clusters.dim_b), count(&inter));
    if ga < 2 || gb < 2 {
        return Err(Error::SingleCluster(format!(
            "`{}` has {ga} cluster(s), `{}` has {gb}",
            clusters.names.0, clusters.names.1
        )));
    }
    let (ma, _) = meat(&cols, &scale, &clusters.dim_a);
    let (mb, _) = meat(&cols, &scale, &clusters.dim_b);
    let (mab, _) = meat(&cols, &scale, &inter);
    let correction = |g: usize| if g > 1 { g as f64 / (g as f64 - 1.0) } else { 1.0 };
    let raw = sandwich(bread, &combine(&ma, &mb, &mab, (1.0, 1.0, 1.0)));
    let adjusted = sandwich(
        bread,
        &combine(&ma, &mb, &mab, (correction(ga), correction(gb), correction(gab))),
    );
    if raw.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite covariance entry".into()));
    }
    let negative_diagonal: Vec<usize> = (0..raw.len()).filter(|&i| raw[i][i] < 0.0).collect();
    if !negative_diagonal.is_empty() {
        log::warn!(
            "two-way clustered variance is negative for {} coefficient(s)",
            negative_diagonal.len()
        );
    }
    Ok(ClusterVcov {
        raw,
        adjusted,
        clusters: (ga, gb, gab),
        negative_diagonal,
    })
}

/// Two-way cluster-robust sandwich covariance for a WLS fit with the given
/// residuals. The bread `(X' W X)^{-1}` is recomputed from `design`.
pub fn twoway_cluster_vcov(
    design: &DesignMatrix,
    residuals: &[f64],
    weights: &WeightVector,
    clusters: &ClusterAssignment,
) -> Result<ClusterVcov> {
    let sw: Vec<f64> = weights.as_slice().iter().map(|w| w.sqrt()).collect();
    let scaled: Vec<Vec<f64>> = design
        .columns()
        .iter()
        .map(|c| c.iter().zip(&sw).map(|(x, s)| x * s).collect())
        .collect();
    let qr = Qr::factor(&scaled);
    if qr.rank() != design.n_cols() {
        return Err(Error::RankDeficient("covariance needs a full-rank design".into()));
    }
    twoway_with_bread(design, residuals, weights, clusters, &qr.inverse_gram())
}

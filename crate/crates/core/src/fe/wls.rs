use super::{DesignMatrix, RANK_TOLERANCE};
use crate::error::{Error, Result};
use crate::kernel::WeightVector;
use crate::model::DropReason;

/// Weighted least-squares solution.
#[derive(Debug, Clone)]
pub struct WlsFit {
    /// Names of the columns kept, in input order.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// `y - X b` in row order.
    pub residuals: Vec<f64>,
    /// Columns dropped as collinear with earlier columns.
    pub dropped: Vec<(String, DropReason)>,
    /// `(X' W X)^{-1}` over the kept columns, row-major.
    pub bread: Vec<Vec<f64>>,
}

impl WlsFit {
    /// Design restricted to the kept columns.
    pub fn design_columns(&self, design: &DesignMatrix) -> DesignMatrix {
        let mut out = DesignMatrix::new(design.n_rows());
        for name in &self.names {
            let col = design.column(name).expect("kept column exists").to_vec();
            out.push(name.clone(), col).expect("unique names");
        }
        out
    }
}

struct Reflector {
    /// Offset of the first row the reflector touches.
    start: usize,
    v: Vec<f64>,
    beta: f64,
}

impl Reflector {
    fn apply(&self, y: &mut [f64]) {
        let tail = &mut y[self.start..];
        let dot: f64 = self.v.iter().zip(tail.iter()).map(|(a, b)| a * b).sum();
        let s = self.beta * dot;
        for (t, v) in tail.iter_mut().zip(&self.v) {
            *t -= s * v;
        }
    }
}

/// Householder QR that walks the columns in input order and drops any
/// column whose residual norm, after projecting out the columns already
/// kept, is below `RANK_TOLERANCE` times its own norm.
pub(crate) struct Qr {
    kept: Vec<usize>,
    reflectors: Vec<Reflector>,
    /// Upper-triangular factor, `r[i][j]` for `j >= i`.
    r: Vec<Vec<f64>>,
}

impl Qr {
    pub(crate) fn factor(columns: &[Vec<f64>]) -> Self {
        let mut kept = Vec::new();
        let mut reflectors: Vec<Reflector> = Vec::new();
        let mut r_cols: Vec<Vec<f64>> = Vec::new();
        for (j, col) in columns.iter().enumerate() {
            let norm0 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm0 == 0.0 {
                continue;
            }
            let mut a = col.clone();
            for h in &reflectors {
                h.apply(&mut a);
            }
            let rank = reflectors.len();
            let tail = &a[rank..];
            let tail_norm = tail.iter().map(|x| x * x).sum::<f64>().sqrt();
            if tail_norm <= RANK_TOLERANCE * norm0 {
                continue;
            }
            let alpha = if tail[0] >= 0.0 { -tail_norm } else { tail_norm };
            let mut v = tail.to_vec();
            v[0] -= alpha;
            let vv: f64 = v.iter().map(|x| x * x).sum();
            let beta = 2.0 / vv;
            let mut rc = a[..rank].to_vec();
            rc.push(alpha);
            r_cols.push(rc);
            reflectors.push(Reflector { start: rank, v, beta });
            kept.push(j);
        }
        let k = kept.len();
        let mut r = vec![vec![0.0; k]; k];
        for (j, rc) in r_cols.iter().enumerate() {
            for (i, &v) in rc.iter().enumerate() {
                r[i][j] = v;
            }
        }
        Self { kept, reflectors, r }
    }

    pub(crate) fn rank(&self) -> usize {
        self.kept.len()
    }

    /// Least-squares solution of `A b = y` over the kept columns.
    pub(crate) fn solve(&self, y: &[f64]) -> Vec<f64> {
        let mut qty = y.to_vec();
        for h in &self.reflectors {
            h.apply(&mut qty);
        }
        back_substitute(&self.r, &qty[..self.rank()])
    }

    /// `(R' R)^{-1} = R^{-1} R^{-T}`.
    pub(crate) fn inverse_gram(&self) -> Vec<Vec<f64>> {
        let k = self.rank();
        let mut rinv = vec![vec![0.0; k]; k];
        for j in 0..k {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            let col = back_substitute(&self.r, &e);
            for i in 0..k {
                rinv[i][j] = col[i];
            }
        }
        let mut out = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in i..k {
                let s: f64 = (j..k).map(|m| rinv[i][m] * rinv[j][m]).sum();
                out[i][j] = s;
                out[j][i] = s;
            }
        }
        out
    }
}

fn back_substitute(r: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let k = b.len();
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = ((i + 1)..k).map(|j| r[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / r[i][i];
    }
    x
}

/// Minimizes `sum_i w_i (y_i - x_i' b)^2`.
pub fn wls_fit(design: &DesignMatrix, outcome: &[f64], weights: &WeightVector) -> Result<WlsFit> {
    let n = design.n_rows();
    let w = weights.as_slice();
    if outcome.len() != n || w.len() != n {
        return Err(Error::InvalidArgument(format!(
            "outcome ({}) and weights ({}) must match the design's {n} rows",
            outcome.len(),
            w.len()
        )));
    }
    if design.n_cols() == 0 {
        return Err(Error::RankDeficient("design has no columns".into()));
    }
    let sw: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let scaled: Vec<Vec<f64>> = design
        .columns()
        .iter()
        .map(|c| c.iter().zip(&sw).map(|(x, s)| x * s).collect())
        .collect();
    let qr = Qr::factor(&scaled);
    if qr.rank() == 0 {
        return Err(Error::RankDeficient("every column is zero or collinear".into()));
    }
    let sy: Vec<f64> = outcome.iter().zip(&sw).map(|(y, s)| y * s).collect();
    let beta = qr.solve(&sy);
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Numerical("non-finite coefficient in QR solve".into()));
    }
    let mut residuals = outcome.to_vec();
    for (&j, b) in qr.kept.iter().zip(&beta) {
        for (e, x) in residuals.iter_mut().zip(&design.columns()[j]) {
            *e -= b * x;
        }
    }
    let names = qr.kept.iter().map(|&j| design.names()[j].clone()).collect();
    let dropped: Vec<(String, DropReason)> = design
        .names()
        .iter()
        .enumerate()
        .filter(|(j, _)| !qr.kept.contains(j))
        .map(|(_, n)| (n.clone(), DropReason::Collinear))
        .collect();
    for (name, _) in &dropped {
        log::debug!("dropping collinear column `{name}`");
    }
    Ok(WlsFit {
        names,
        coefficients: beta,
        residuals,
        dropped,
        bread: qr.inverse_gram(),
    })
}

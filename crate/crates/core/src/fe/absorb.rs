use rayon::prelude::*;

use super::{DesignMatrix, FixedEffectGroups, RANK_TOLERANCE};
use crate::error::{Error, Result};
use crate::kernel::WeightVector;
use crate::model::DropReason;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorbOptions {
    /// Converged when no group mean removed during a sweep exceeds this.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for AbsorbOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_sweeps: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Absorbed {
    /// Demeaned columns that survived; absorbed ones are listed in `dropped`.
    pub design: DesignMatrix,
    pub outcome: Vec<f64>,
    pub dropped: Vec<(String, DropReason)>,
    /// Largest sweep count over all columns.
    pub sweeps: usize,
    /// Rows alone in their group in at least one dimension (absorbed to zero).
    pub singletons: usize,
}

struct PreparedDim<'a> {
    keys: &'a [u32],
    inv_weight: Vec<f64>,
}

fn prepare<'a>(groups: &'a FixedEffectGroups, w: &[f64]) -> (Vec<PreparedDim<'a>>, usize) {
    let mut singleton = vec![false; w.len()];
    let dims = groups
        .dims()
        .iter()
        .map(|d| {
            let mut total = vec![0.0; d.n_groups()];
            let mut count = vec![0usize; d.n_groups()];
            for (&k, &wi) in d.keys().iter().zip(w) {
                total[k as usize] += wi;
                if wi > 0.0 {
                    count[k as usize] += 1;
                }
            }
            for (i, &k) in d.keys().iter().enumerate() {
                if w[i] > 0.0 && count[k as usize] == 1 {
                    singleton[i] = true;
                }
            }
            let inv_weight = total
                .into_iter()
                .map(|t| if t > 0.0 { 1.0 / t } else { 0.0 })
                .collect();
            PreparedDim {
                keys: d.keys(),
                inv_weight,
            }
        })
        .collect();
    (dims, singleton.into_iter().filter(|&s| s).count())
}

/// Alternating weighted projections for one column. Returns the sweep count,
/// or the last max change when the sweep budget runs out.
/// One pass over every dimension, subtracting weighted group means in
/// place. Returns the largest mean removed.
fn sweep(col: &mut [f64], dims: &[PreparedDim], sums: &mut [Vec<f64>], w: &[f64]) -> f64 {
    let mut max_change = 0.0f64;
    for (d, s) in dims.iter().zip(sums.iter_mut()) {
        s.iter_mut().for_each(|v| *v = 0.0);
        for ((&k, &x), &wi) in d.keys.iter().zip(col.iter()).zip(w) {
            s[k as usize] += wi * x;
        }
        for (v, &inv) in s.iter_mut().zip(&d.inv_weight) {
            *v *= inv;
            max_change = max_change.max(v.abs());
        }
        for (x, &k) in col.iter_mut().zip(d.keys) {
            *x -= s[k as usize];
        }
    }
    max_change
}

/// Alternating projections with Irons-Tuck extrapolation after every pair
/// of sweeps. Every iterate differs from the input by an element of the
/// fixed-effect span, so the limit is the same weighted projection.
fn demean(
    col: &mut [f64],
    dims: &[PreparedDim],
    w: &[f64],
    opts: &AbsorbOptions,
) -> std::result::Result<usize, f64> {
    if dims.is_empty() {
        return Ok(0);
    }
    let mut sums: Vec<Vec<f64>> = dims.iter().map(|d| vec![0.0; d.inv_weight.len()]).collect();
    if dims.len() == 1 {
        sweep(col, dims, &mut sums, w);
        return Ok(1);
    }
    let mut x0 = vec![0.0; col.len()];
    let mut x1 = vec![0.0; col.len()];
    let mut last = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        x0.copy_from_slice(col);
        last = sweep(col, dims, &mut sums, w);
        sweeps += 1;
        if last < opts.tolerance {
            return Ok(sweeps);
        }
        if sweeps == opts.max_sweeps {
            break;
        }
        x1.copy_from_slice(col);
        last = sweep(col, dims, &mut sums, w);
        sweeps += 1;
        if last < opts.tolerance {
            return Ok(sweeps);
        }
        // col = T^2 x0, x1 = T x0.
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..col.len() {
            let d1 = col[i] - x1[i];
            let d2 = d1 - (x1[i] - x0[i]);
            num += w[i] * d1 * d2;
            den += w[i] * d2 * d2;
        }
        if den > 0.0 {
            let c = num / den;
            for i in 0..col.len() {
                col[i] -= c * (col[i] - x1[i]);
            }
        }
    }
    Err(last)
}

/// Drops dimensions whose groups are unions of another dimension's groups:
/// their indicators already lie in the finer dimension's span.
fn prune_nested<'a>(dims: Vec<PreparedDim<'a>>, w: &[f64]) -> Vec<PreparedDim<'a>> {
    let nested_in = |coarse: &PreparedDim, fine: &PreparedDim| {
        let mut map = vec![u32::MAX; fine.inv_weight.len()];
        for ((&f, &c), &wi) in fine.keys.iter().zip(coarse.keys).zip(w) {
            if wi == 0.0 {
                continue;
            }
            let m = &mut map[f as usize];
            if *m == u32::MAX {
                *m = c;
            } else if *m != c {
                return false;
            }
        }
        true
    };
    let mut keep = vec![true; dims.len()];
    for i in 0..dims.len() {
        for j in 0..dims.len() {
            if i != j && keep[j] && nested_in(&dims[i], &dims[j]) {
                // Identical partitions: keep the earlier one.
                if nested_in(&dims[j], &dims[i]) && i < j {
                    continue;
                }
                keep[i] = false;
                break;
            }
        }
    }
    dims.into_iter()
        .zip(keep)
        .filter_map(|(d, k)| k.then_some(d))
        .collect()
}

fn weighted_norm_sq(col: &[f64], w: &[f64]) -> f64 {
    col.iter().zip(w).map(|(x, wi)| wi * x * x).sum()
}

/// Projects the design columns and the outcome onto the orthogonal
/// complement (under the weight inner product) of every group indicator.
/// Columns that vanish in the process are dropped.
pub fn absorb(
    design: &DesignMatrix,
    outcome: &[f64],
    groups: &FixedEffectGroups,
    weights: &WeightVector,
    options: &AbsorbOptions,
) -> Result<Absorbed> {
    let n = design.n_rows();
    let w = weights.as_slice();
    if outcome.len() != n || w.len() != n {
        return Err(Error::InvalidArgument(format!(
            "outcome ({}) and weights ({}) must match the design's {n} rows",
            outcome.len(),
            w.len()
        )));
    }
    if let Some(d) = groups.dims().iter().find(|d| d.keys().len() != n) {
        return Err(Error::InvalidArgument(format!(
            "fixed-effect dimension `{}` does not match the design rows",
            d.name
        )));
    }
    let (dims, singletons) = prepare(groups, w);
    let dims = prune_nested(dims, w);

    let mut work: Vec<Vec<f64>> = design.columns().to_vec();
    work.push(outcome.to_vec());
    let results: Vec<std::result::Result<usize, f64>> = work
        .par_iter_mut()
        .map(|c| demean(c, &dims, w, options))
        .collect();
    let mut sweeps = 0;
    let mut worst: Option<f64> = None;
    for r in &results {
        match *r {
            Ok(s) => sweeps = sweeps.max(s),
            Err(ch) => worst = Some(worst.map_or(ch, |m: f64| m.max(ch))),
        }
    }
    if let Some(achieved) = worst {
        return Err(Error::NonConvergence {
            sweeps: options.max_sweeps,
            achieved,
        });
    }

    let outcome = work.pop().expect("outcome column");
    let mut out = DesignMatrix::new(n);
    let mut dropped = Vec::new();
    for ((name, original), col) in design.names().iter().zip(design.columns()).zip(work) {
        let before = weighted_norm_sq(original, w);
        let after = weighted_norm_sq(&col, w);
        if before == 0.0 {
            dropped.push((name.clone(), DropReason::EmptyCell));
        } else if after <= RANK_TOLERANCE * RANK_TOLERANCE * before {
            dropped.push((name.clone(), DropReason::AbsorbedByFixedEffects));
        } else {
            out.push(name.clone(), col)?;
        }
    }
    for (name, reason) in &dropped {
        log::debug!("dropping `{name}`: {reason:?}");
    }
    Ok(Absorbed {
        design: out,
        outcome,
        dropped,
        sweeps,
        singletons,
    })
}

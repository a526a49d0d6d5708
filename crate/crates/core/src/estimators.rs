//! Event-study, treatment-effect curve, one-sided gap and miscoding
//! estimators built on the fixed-effects WLS engine.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe::{
    absorb, fit_with_fixed_effects, wls_fit, AbsorbOptions, ClusterAssignment, DesignMatrix, FeDimension,
    FeFit, FixedEffectGroups,
};
use crate::kernel::WeightVector;
use crate::model::{
    tau_name, xi_name, Dimension, DropReason, DroppedCoefficient, EstimateSet, EventPanel, KernelSpec,
    LoanRecord, ModelSpec, BELOW_LIMIT, BELOW_X_TREATED,
};
use crate::rng::CounterRng;

/// Default bandwidth grid, in log-distance units.
pub const DEFAULT_BANDWIDTHS: [f64; 8] = [0.01, 0.02, 0.03, 0.04, 0.05, 0.10, 0.15, 0.20];

/// Minimum kernel mass for a curve point to be reported.
pub const DEFAULT_MASS_FLOOR: f64 = 30.0;

/// Name of the miscoding-test intercept.
pub const INTERCEPT: &str = "intercept";

const DLOG_NAMES: [&str; 3] = ["dlog_amount", "dlog_amount_2", "dlog_amount_3"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum GroupKey<'a> {
    Const,
    Year(i32),
    Unit(&'a str),
    Event(Option<&'a str>),
}

fn group_key(r: &LoanRecord, d: Dimension) -> GroupKey<'_> {
    match d {
        Dimension::Year => GroupKey::Year(r.year),
        Dimension::Unit => GroupKey::Unit(&r.unit_id),
        Dimension::Event => GroupKey::Event(r.event_id.as_deref()),
    }
}

/// Fixed-effect dimensions over `rows`. With `crossed`, every dimension is
/// split by the below-limit flag; the plain dimension lies in the span of
/// its crossed version, so it is not absorbed separately.
fn fe_groups(
    panel: &EventPanel,
    rows: &[usize],
    dims: &[Dimension],
    crossed: bool,
) -> Result<FixedEffectGroups> {
    let recs = panel.records();
    let mut keys: Vec<(String, Vec<GroupKey>)> = dims
        .iter()
        .map(|&d| {
            (
                d.as_str().to_string(),
                rows.iter().map(|&i| group_key(&recs[i], d)).collect(),
            )
        })
        .collect();
    if keys.is_empty() {
        keys.push(("constant".into(), vec![GroupKey::Const; rows.len()]));
    }
    let out = keys
        .into_iter()
        .map(|(name, k)| {
            if crossed {
                let below = rows.iter().map(|&i| recs[i].below_limit());
                FeDimension::from_keys(format!("{name}_x_below"), k.into_iter().zip(below))
            } else {
                FeDimension::from_keys(name, k)
            }
        })
        .collect();
    FixedEffectGroups::new(out)
}

fn cluster_assignment(
    panel: &EventPanel,
    rows: &[usize],
    dims: (Dimension, Dimension),
) -> Result<ClusterAssignment> {
    let recs = panel.records();
    ClusterAssignment::from_keys(
        (dims.0.as_str(), dims.1.as_str()),
        rows.iter().map(|&i| group_key(&recs[i], dims.0)),
        rows.iter().map(|&i| group_key(&recs[i], dims.1)),
    )
}

fn indicator(flag: bool) -> f64 {
    if flag {
        1.0
    } else {
        0.0
    }
}

/// Rows whose outcome is defined and whose distance lies in the kernel's support.
fn support_rows(panel: &EventPanel, spec: &ModelSpec, kernel: &KernelSpec) -> Result<Vec<usize>> {
    let mut rows = Vec::new();
    for (i, r) in panel.records().iter().enumerate() {
        if spec.outcome.value(r).is_none() {
            continue;
        }
        if kernel.in_support(r.log_distance()?) {
            rows.push(i);
        }
    }
    Ok(rows)
}

fn weights_for(panel: &EventPanel, rows: &[usize], kernel: &KernelSpec) -> Result<WeightVector> {
    let recs = panel.records();
    let w = rows
        .iter()
        .map(|&i| recs[i].log_distance().map(|d| kernel.weight(d)))
        .collect::<Result<Vec<_>>>()?;
    WeightVector::new(w)
}

fn log_out_of_window(panel: &EventPanel, rows: &[usize], spec: &ModelSpec) {
    let recs = panel.records();
    let t = spec.time_window;
    let outside = rows
        .iter()
        .filter(|&&i| recs[i].treated && recs[i].time_rel.is_some_and(|k| k.abs() > t))
        .count();
    if outside > 0 {
        log::info!("{outside} treated row(s) outside [-{t}, {t}] kept as controls without a time dummy");
    }
    let mut with_post: BTreeSet<&str> = BTreeSet::new();
    let mut all: BTreeSet<&str> = BTreeSet::new();
    for &i in rows {
        let r = &recs[i];
        if let (true, Some(ev), Some(k)) = (r.treated, r.event_id.as_deref(), r.time_rel) {
            all.insert(ev);
            if (0..=t).contains(&k) {
                with_post.insert(ev);
            }
        }
    }
    for ev in all.difference(&with_post) {
        log::info!("event `{ev}` has no treated post-period rows; it only enters the fixed effects");
    }
}

fn to_estimate_set(
    fit: FeFit,
    n_obs: usize,
    sum_weights: f64,
    outcome: &str,
    spec: Option<ModelSpec>,
    kernel: Option<KernelSpec>,
) -> EstimateSet {
    let negative_variance = fit
        .vcov
        .negative_diagonal
        .iter()
        .map(|&i| fit.names[i].clone())
        .collect();
    EstimateSet {
        negative_variance,
        names: fit.names,
        coefficients: fit.coefficients,
        vcov: fit.vcov.raw,
        vcov_adjusted: fit.vcov.adjusted,
        n_obs,
        sum_weights,
        outcome: outcome.to_string(),
        spec,
        kernel,
        dropped: fit
            .dropped
            .into_iter()
            .map(|(name, reason)| DroppedCoefficient { name, reason })
            .collect(),
        clusters: fit.vcov.clusters,
        singletons: fit.singletons,
        absorb_sweeps: fit.sweeps,
    }
}

/// Kernel-weighted event study with below-limit interactions.
///
/// Regressors, in order: `below_limit`, `below_x_treated` (when enabled),
/// `treated_x_time_{t}` and `treated_x_time_{t}_x_below` for every relative
/// time in the window except the reference. Relative time is read from
/// `time_rel`. Coefficients spanned by the fixed effects or with empty cells
/// are listed in `dropped`.
pub fn estimate_event_study(
    panel: &EventPanel,
    spec: &ModelSpec,
    kernel: &KernelSpec,
) -> Result<EstimateSet> {
    estimate_event_study_with(panel, spec, kernel, &AbsorbOptions::default())
}

pub fn estimate_event_study_with(
    panel: &EventPanel,
    spec: &ModelSpec,
    kernel: &KernelSpec,
    options: &AbsorbOptions,
) -> Result<EstimateSet> {
    spec.validate()?;
    kernel.validate()?;
    if panel.is_empty() {
        return Err(Error::EmptyInput("panel has no records".into()));
    }
    let rows = support_rows(panel, spec, kernel)?;
    if rows.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no `{}` rows within the kernel support",
            spec.outcome.as_str()
        )));
    }
    let recs = panel.records();
    let treated = rows.iter().filter(|&&i| recs[i].treated).count();
    if treated == 0 || treated == rows.len() {
        return Err(Error::Unidentified(format!(
            "{} of {} rows are treated; treatment effects need both groups",
            treated,
            rows.len()
        )));
    }
    log_out_of_window(panel, &rows, spec);

    let n = rows.len();
    let below: Vec<bool> = rows.iter().map(|&i| recs[i].below_limit()).collect();
    let mut design = DesignMatrix::new(n);
    design.push(BELOW_LIMIT, below.iter().map(|&b| indicator(b)).collect())?;
    if spec.below_x_treated {
        design.push(
            BELOW_X_TREATED,
            rows.iter()
                .zip(&below)
                .map(|(&i, &b)| indicator(b && recs[i].treated))
                .collect(),
        )?;
    }
    let times = spec.event_times();
    let in_cell = |i: usize, t: i32| recs[i].treated && recs[i].time_rel == Some(t);
    for &t in &times {
        design.push(
            xi_name(t),
            rows.iter().map(|&i| indicator(in_cell(i, t))).collect(),
        )?;
    }
    for &t in &times {
        design.push(
            tau_name(t),
            rows.iter()
                .zip(&below)
                .map(|(&i, &b)| indicator(b && in_cell(i, t)))
                .collect(),
        )?;
    }
    let y: Vec<f64> = rows
        .iter()
        .map(|&i| spec.outcome.value(&recs[i]).expect("filtered"))
        .collect();
    let weights = weights_for(panel, &rows, kernel)?;
    let groups = fe_groups(panel, &rows, &spec.fixed_effects, spec.interact_below_limit)?;
    let clusters = cluster_assignment(panel, &rows, spec.cluster_dims)?;
    let fit = fit_with_fixed_effects(&design, &y, &groups, &weights, &clusters, options)?;
    for (name, reason) in &fit.dropped {
        if *reason == DropReason::EmptyCell {
            log::warn!("`{name}` has an empty cell and is not estimated");
        }
    }
    Ok(to_estimate_set(
        fit,
        n,
        weights.sum(),
        spec.outcome.as_str(),
        Some(spec.clone()),
        Some(*kernel),
    ))
}

/// One event study per bandwidth, in grid order.
pub fn bandwidth_sweep(panel: &EventPanel, spec: &ModelSpec, bandwidths: &[f64]) -> Result<Vec<EstimateSet>> {
    if bandwidths.is_empty() {
        return Err(Error::InvalidArgument("bandwidth grid is empty".into()));
    }
    if let Some(h) = bandwidths.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be positive, got {h}"
        )));
    }
    bandwidths
        .par_iter()
        .map(|&h| estimate_event_study(panel, spec, &KernelSpec::gaussian(h)))
        .collect()
}

/// Segment of the limit a one-sided fit uses. A record whose reported
/// amount equals the limit is on the conforming side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Conforming,
    Jumbo,
}

impl Side {
    /// Side a curve point at `delta` is estimated from.
    pub fn for_delta(delta: f64) -> Side {
        if delta <= 0.0 {
            Side::Conforming
        } else {
            Side::Jumbo
        }
    }

    fn contains(self, r: &LoanRecord) -> bool {
        r.below_limit() == (self == Side::Conforming)
    }
}

/// Treatment-by-time effects from the reduced specification on one side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneSidedFit {
    pub side: Side,
    pub center: f64,
    /// Estimated effect per relative time; times with empty cells are absent.
    pub effects: BTreeMap<i32, f64>,
    pub n_obs: usize,
    pub n_effective: f64,
}

fn one_sided_rows(
    panel: &EventPanel,
    spec: &ModelSpec,
    kernel: &KernelSpec,
    side: Side,
) -> Result<Vec<usize>> {
    let recs = panel.records();
    Ok(support_rows(panel, spec, kernel)?
        .into_iter()
        .filter(|&i| side.contains(&recs[i]))
        .collect())
}

/// Point estimates of the reduced specification over `rows` (repeats allowed).
fn reduced_fit(
    panel: &EventPanel,
    rows: &[usize],
    spec: &ModelSpec,
    kernel: &KernelSpec,
) -> Result<(BTreeMap<i32, f64>, f64)> {
    let recs = panel.records();
    let weights = weights_for(panel, rows, kernel)?;
    let mut design = DesignMatrix::new(rows.len());
    let times = spec.event_times();
    for &t in &times {
        design.push(
            xi_name(t),
            rows.iter()
                .map(|&i| indicator(recs[i].treated && recs[i].time_rel == Some(t)))
                .collect(),
        )?;
    }
    let y: Vec<f64> = rows
        .iter()
        .map(|&i| spec.outcome.value(&recs[i]).expect("filtered"))
        .collect();
    let groups = fe_groups(panel, rows, &spec.fixed_effects, false)?;
    let absorbed = absorb(&design, &y, &groups, &weights, &AbsorbOptions::default())?;
    let mut effects = BTreeMap::new();
    if absorbed.design.n_cols() > 0 {
        let fit = wls_fit(&absorbed.design, &absorbed.outcome, &weights)?;
        for (name, b) in fit.names.iter().zip(&fit.coefficients) {
            let t = times
                .iter()
                .copied()
                .find(|&t| xi_name(t) == *name)
                .expect("known column");
            effects.insert(t, *b);
        }
    }
    Ok((effects, weights.sum()))
}

/// Reduced specification (treated x time dummies and plain fixed effects)
/// fitted on one side of the limit with a kernel centered at `kernel.center`.
pub fn one_sided_fit(
    panel: &EventPanel,
    spec: &ModelSpec,
    kernel: &KernelSpec,
    side: Side,
) -> Result<OneSidedFit> {
    spec.validate()?;
    kernel.validate()?;
    let rows = one_sided_rows(panel, spec, kernel, side)?;
    if rows.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no {side:?} rows within the kernel support at {}",
            kernel.center
        )));
    }
    let (effects, n_effective) = reduced_fit(panel, &rows, spec, kernel)?;
    Ok(OneSidedFit {
        side,
        center: kernel.center,
        effects,
        n_obs: rows.len(),
        n_effective,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub delta: f64,
    pub time: i32,
    /// `None` when the kernel mass is below the floor or the cell is empty.
    pub effect: Option<f64>,
    pub n_effective: f64,
    /// Cluster-bootstrap standard error, when requested.
    pub std_error: Option<f64>,
}

/// Unit-cluster bootstrap settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub draws: usize,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self { draws: 200, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveOptions {
    pub mass_floor: f64,
    pub bootstrap: Option<BootstrapOptions>,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            mass_floor: DEFAULT_MASS_FLOOR,
            bootstrap: None,
        }
    }
}

/// `points` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// 40 evenly spaced distances over `[-0.10, 0.10]`.
pub fn default_delta_grid() -> Vec<f64> {
    linspace(-0.10, 0.10, 40)
}

/// Rows of a unit-cluster bootstrap draw: units sampled with replacement,
/// each bringing all of its rows from `base`.
struct ClusterSampler {
    rows_by_unit: Vec<Vec<usize>>,
}

impl ClusterSampler {
    fn new(panel: &EventPanel, base: &[usize]) -> Self {
        let recs = panel.records();
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut rows_by_unit: Vec<Vec<usize>> = Vec::new();
        for &i in base {
            let next = index.len();
            let g = *index.entry(recs[i].unit_id.as_str()).or_insert(next);
            if g == rows_by_unit.len() {
                rows_by_unit.push(Vec::new());
            }
            rows_by_unit[g].push(i);
        }
        Self { rows_by_unit }
    }

    fn draw(&self, rng: &CounterRng, draw: usize) -> Vec<usize> {
        let mut r = rng.stream(draw as u64);
        let g = self.rows_by_unit.len();
        let mut rows = Vec::new();
        for _ in 0..g {
            rows.extend_from_slice(&self.rows_by_unit[r.random_range(0..g)]);
        }
        rows
    }
}

fn sample_sd(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    let v = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (values.len() - 1) as f64;
    Some(v.sqrt())
}

/// Bootstrap standard deviation per key of `stat` evaluated on resampled rows.
fn bootstrap_sd<F>(panel: &EventPanel, base: &[usize], opts: &BootstrapOptions, stat: F) -> BTreeMap<i32, f64>
where
    F: Fn(&[usize]) -> Option<BTreeMap<i32, f64>> + Sync,
{
    let sampler = ClusterSampler::new(panel, base);
    let rng = CounterRng::new(opts.seed);
    let draws: Vec<Option<BTreeMap<i32, f64>>> = (0..opts.draws)
        .into_par_iter()
        .map(|d| stat(&sampler.draw(&rng, d)))
        .collect();
    let failed = draws.iter().filter(|d| d.is_none()).count();
    if failed > 0 {
        log::warn!(
            "{failed} of {} bootstrap draws failed and were skipped",
            opts.draws
        );
    }
    let mut by_key: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for m in draws.into_iter().flatten() {
        for (k, v) in m {
            by_key.entry(k).or_default().push(v);
        }
    }
    by_key
        .into_iter()
        .filter_map(|(k, v)| sample_sd(&v).map(|s| (k, s)))
        .collect()
}

/// Treatment effect by distance to the limit. Points at `delta <= 0` use
/// conforming-side rows, points at `delta > 0` jumbo-side rows.
pub fn treatment_effect_curve(
    panel: &EventPanel,
    spec: &ModelSpec,
    delta_grid: &[f64],
    bandwidth: f64,
    options: &CurveOptions,
) -> Result<Vec<CurvePoint>> {
    spec.validate()?;
    KernelSpec::gaussian(bandwidth).validate()?;
    if delta_grid.is_empty() {
        return Err(Error::InvalidArgument("delta grid is empty".into()));
    }
    if let Some(d) = delta_grid.iter().find(|d| !d.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta {d} is not finite")));
    }
    let times = spec.event_times();
    let per_delta: Vec<Result<Vec<CurvePoint>>> = delta_grid
        .par_iter()
        .map(|&delta| {
            let kernel = KernelSpec::gaussian(bandwidth).centered(delta);
            let side = Side::for_delta(delta);
            let rows = one_sided_rows(panel, spec, &kernel, side)?;
            let mass: f64 = if rows.is_empty() {
                0.0
            } else {
                weights_for(panel, &rows, &kernel)?.sum()
            };
            let missing = |n_effective| {
                times
                    .iter()
                    .map(|&time| CurvePoint {
                        delta,
                        time,
                        effect: None,
                        n_effective,
                        std_error: None,
                    })
                    .collect()
            };
            if mass < options.mass_floor {
                log::info!("curve point {delta}: kernel mass {mass:.2} below floor");
                return Ok(missing(mass));
            }
            let (effects, n_effective) = reduced_fit(panel, &rows, spec, &kernel)?;
            let se = options.bootstrap.map(|b| {
                bootstrap_sd(panel, &rows, &b, |r| {
                    reduced_fit(panel, r, spec, &kernel).ok().map(|x| x.0)
                })
            });
            Ok(times
                .iter()
                .map(|&time| CurvePoint {
                    delta,
                    time,
                    effect: effects.get(&time).copied(),
                    n_effective,
                    std_error: se.as_ref().and_then(|s| s.get(&time).copied()),
                })
                .collect())
        })
        .collect();
    let mut out = Vec::with_capacity(delta_grid.len() * times.len());
    for p in per_delta {
        out.extend(p?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdGap {
    pub time: i32,
    /// Effect just below the limit.
    pub left: f64,
    /// Effect just above the limit.
    pub right: f64,
    /// `left - right`.
    pub tau_rd: f64,
    /// Cluster-bootstrap standard error of `tau_rd`, when requested.
    pub std_error: Option<f64>,
}

fn gaps_from(left: &BTreeMap<i32, f64>, right: &BTreeMap<i32, f64>) -> BTreeMap<i32, (f64, f64)> {
    left.iter()
        .filter_map(|(t, l)| right.get(t).map(|r| (*t, (*l, *r))))
        .collect()
}

/// Gap in the treatment effect at the limit: two one-sided fits centered at
/// zero, one per segment, differenced per relative time.
pub fn rd_gap(
    panel: &EventPanel,
    spec: &ModelSpec,
    bandwidth: f64,
    bootstrap: Option<BootstrapOptions>,
) -> Result<Vec<RdGap>> {
    let kernel = KernelSpec::gaussian(bandwidth);
    let left = one_sided_fit(panel, spec, &kernel, Side::Conforming)?;
    let right = one_sided_fit(panel, spec, &kernel, Side::Jumbo)?;
    let gaps = gaps_from(&left.effects, &right.effects);
    for t in spec.event_times() {
        if !gaps.contains_key(&t) {
            log::warn!("relative time {t} has an empty cell on one side; no gap reported");
        }
    }
    let se = match bootstrap {
        None => BTreeMap::new(),
        Some(b) => {
            let recs = panel.records();
            let base = support_rows(panel, spec, &kernel)?;
            bootstrap_sd(panel, &base, &b, |rows| {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| Side::Conforming.contains(&recs[i]));
                if l.is_empty() || r.is_empty() {
                    return None;
                }
                let lf = reduced_fit(panel, &l, spec, &kernel).ok()?.0;
                let rf = reduced_fit(panel, &r, spec, &kernel).ok()?.0;
                Some(
                    gaps_from(&lf, &rf)
                        .into_iter()
                        .map(|(t, (a, b))| (t, a - b))
                        .collect(),
                )
            })
        }
    };
    Ok(gaps
        .into_iter()
        .map(|(time, (left, right))| RdGap {
            time,
            left,
            right,
            tau_rd: left - right,
            std_error: se.get(&time).copied(),
        })
        .collect())
}

/// OLS of a per-record wrong-year flag on the below-limit indicator and
/// powers of the log distance up to `poly_order`, unweighted, clustered by
/// unit and year. The sample is every record with an event; `flags` is
/// aligned with the panel.
pub fn miscoding_rd_test(panel: &EventPanel, flags: &[bool], poly_order: usize) -> Result<EstimateSet> {
    if poly_order > 3 {
        return Err(Error::InvalidArgument(format!(
            "polynomial order must be 0 to 3, got {poly_order}"
        )));
    }
    if flags.len() != panel.len() {
        return Err(Error::InvalidArgument(format!(
            "{} flags for {} records",
            flags.len(),
            panel.len()
        )));
    }
    let recs = panel.records();
    let rows: Vec<usize> = (0..recs.len()).filter(|&i| recs[i].event_id.is_some()).collect();
    if rows.is_empty() {
        return Err(Error::EmptyInput("no records with an event".into()));
    }
    let flagged = rows.iter().filter(|&&i| flags[i]).count();
    if flagged == 0 || flagged == rows.len() {
        log::warn!(
            "wrong-year flag is constant ({flagged} of {}); slopes are zero",
            rows.len()
        );
    }
    let n = rows.len();
    let d: Vec<f64> = rows
        .iter()
        .map(|&i| recs[i].log_distance())
        .collect::<Result<_>>()?;
    let mut design = DesignMatrix::new(n);
    design.push(INTERCEPT, vec![1.0; n])?;
    design.push(
        BELOW_LIMIT,
        rows.iter().map(|&i| indicator(recs[i].below_limit())).collect(),
    )?;
    for (p, name) in DLOG_NAMES.iter().enumerate().take(poly_order) {
        design.push(*name, d.iter().map(|x| x.powi(p as i32 + 1)).collect())?;
    }
    let y: Vec<f64> = rows.iter().map(|&i| indicator(flags[i])).collect();
    let weights = WeightVector::ones(n);
    let clusters = cluster_assignment(panel, &rows, (Dimension::Unit, Dimension::Year))?;
    let fit = fit_with_fixed_effects(
        &design,
        &y,
        &FixedEffectGroups::default(),
        &weights,
        &clusters,
        &AbsorbOptions::default(),
    )?;
    Ok(to_estimate_set(fit, n, n as f64, "wrong_year", None, None))
}

/// One row per coefficient: `name,estimate,std_error,t_stat,n_obs,bandwidth,outcome`.
pub fn write_estimates_csv<W: Write>(sets: &[EstimateSet], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "name",
        "estimate",
        "std_error",
        "t_stat",
        "n_obs",
        "bandwidth",
        "outcome",
    ])?;
    for s in sets {
        let se = s.std_errors();
        for (i, name) in s.names.iter().enumerate() {
            w.write_record([
                name.clone(),
                s.coefficients[i].to_string(),
                se[i].to_string(),
                (s.coefficients[i] / se[i]).to_string(),
                s.n_obs.to_string(),
                s.bandwidth().map(|h| h.to_string()).unwrap_or_default(),
                s.outcome.clone(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `delta,time,effect,n_effective,std_error`, blank where a value is missing.
pub fn write_curve_csv<W: Write>(points: &[CurvePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["delta", "time", "effect", "n_effective", "std_error"])?;
    for p in points {
        w.write_record([
            p.delta.to_string(),
            p.time.to_string(),
            p.effect.map(|e| e.to_string()).unwrap_or_default(),
            p.n_effective.to_string(),
            p.std_error.map(|e| e.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `time,left,right,tau_rd,std_error`.
pub fn write_gaps_csv<W: Write>(gaps: &[RdGap], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "left", "right", "tau_rd", "std_error"])?;
    for g in gaps {
        w.write_record([
            g.time.to_string(),
            g.left.to_string(),
            g.right.to_string(),
            g.tau_rd.to_string(),
            g.std_error.map(|e| e.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

//! Monte Carlo study of how the classification scheme biases the estimated
//! discontinuity under a logit approval model.
//!
//! Approval is 1 iff `U <= F(alpha + beta * C*)` with `F` the logistic cdf
//! and `U` uniform, which is the inverse-cdf realization of the latent logit
//! error. Each replication regresses approval on the conforming indicator of
//! every scheme by OLS.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{is_conforming, round_hmda, ClassificationScheme};
use crate::error::{Error, Result};
use crate::rng::CounterRng;

/// Logistic cdf.
pub fn logistic_cdf(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Distribution of the latent exact amount relative to the limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum AmountLaw {
    /// `ln(L*/limit)` uniform on `[-half_width, half_width]`.
    LogUniform { half_width: f64 },
    /// Every amount at `limit * exp(log_offset)`.
    PointMass { log_offset: f64 },
    /// Whole-thousand amounts uniform on `lo..=hi`.
    IntegerUniform { lo: u32, hi: u32 },
}

impl Default for AmountLaw {
    fn default() -> Self {
        AmountLaw::LogUniform { half_width: 0.08 }
    }
}

impl AmountLaw {
    fn validate(&self) -> Result<()> {
        match *self {
            AmountLaw::LogUniform { half_width } if !(half_width.is_finite() && half_width > 0.0) => Err(
                Error::InvalidArgument(format!("half width must be positive, got {half_width}")),
            ),
            AmountLaw::PointMass { log_offset } if !log_offset.is_finite() => {
                Err(Error::InvalidArgument("point-mass offset must be finite".into()))
            }
            AmountLaw::IntegerUniform { lo, hi } if lo == 0 || lo > hi => Err(Error::InvalidArgument(
                format!("integer amount range {lo}..={hi} is invalid"),
            )),
            _ => Ok(()),
        }
    }

    /// Whether both `L* <= limit` and `L* > limit` have positive probability.
    pub fn straddles(&self, limit: f64) -> bool {
        match *self {
            AmountLaw::LogUniform { .. } => true,
            AmountLaw::PointMass { .. } => false,
            AmountLaw::IntegerUniform { lo, hi } => lo as f64 <= limit && (hi as f64) > limit,
        }
    }

    fn draw(&self, limit: f64, u: f64) -> f64 {
        match *self {
            AmountLaw::LogUniform { half_width } => limit * (half_width * (2.0 * u - 1.0)).exp(),
            AmountLaw::PointMass { log_offset } => limit * log_offset.exp(),
            AmountLaw::IntegerUniform { lo, hi } => {
                let span = (hi - lo + 1) as f64;
                (lo + ((u * span) as u32).min(hi - lo)) as f64
            }
        }
    }
}

fn default_alpha() -> f64 {
    0.2
}
fn default_beta() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McDgpParams {
    pub n: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Conforming limit in thousands.
    pub limit: f64,
    #[serde(default)]
    pub amount_law: AmountLaw,
    pub seed: u64,
}

impl McDgpParams {
    pub fn new(n: usize, limit: f64, seed: u64) -> Self {
        Self {
            n,
            alpha: default_alpha(),
            beta: default_beta(),
            limit,
            amount_law: AmountLaw::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!(
                "sample size must be at least 2, got {}",
                self.n
            )));
        }
        if !(self.limit.is_finite() && self.limit > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "limit must be positive, got {}",
                self.limit
            )));
        }
        if !(self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(Error::InvalidArgument("alpha and beta must be finite".into()));
        }
        self.amount_law.validate()
    }

    /// Population contrast `F(alpha + beta) - F(alpha)`.
    pub fn plim_beta(&self) -> f64 {
        logistic_cdf(self.alpha + self.beta) - logistic_cdf(self.alpha)
    }
}

/// One simulated sample, columnar.
#[derive(Debug, Clone, PartialEq)]
pub struct McSample {
    pub limit: f64,
    pub true_amount: Vec<f64>,
    pub reported_amount: Vec<u32>,
    pub approved: Vec<bool>,
}

impl McSample {
    pub fn len(&self) -> usize {
        self.true_amount.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_amount.is_empty()
    }

    /// Conforming indicator of every record under `scheme`.
    pub fn conforming(&self, scheme: ClassificationScheme) -> Vec<bool> {
        self.true_amount
            .iter()
            .zip(&self.reported_amount)
            .map(|(&t, &r)| is_conforming(Some(t), r, self.limit, scheme).expect("true amount present"))
            .collect()
    }
}

/// Draws replication `replication` of `params`. Record `i` uses the random
/// address `(seed, replication, i)`, so samples are reproducible one by one.
/// Single-sided amount laws are allowed here; [`run_study`] rejects them.
pub fn simulate_sample(params: &McDgpParams, replication: u64) -> Result<McSample> {
    params.validate()?;
    let rng = CounterRng::new(params.seed);
    let p = [
        logistic_cdf(params.alpha),
        logistic_cdf(params.alpha + params.beta),
    ];
    let mut s = McSample {
        limit: params.limit,
        true_amount: Vec::with_capacity(params.n),
        reported_amount: Vec::with_capacity(params.n),
        approved: Vec::with_capacity(params.n),
    };
    for i in 0..params.n {
        let mut r = rng.at(replication, i as u64);
        let t = params.amount_law.draw(params.limit, r.random::<f64>());
        let u: f64 = r.random();
        let c_true = t <= params.limit;
        s.true_amount.push(t);
        s.reported_amount.push(round_hmda(t * 1000.0)?);
        s.approved.push(u <= p[c_true as usize]);
    }
    Ok(s)
}

/// Slope and misclassification share of one scheme in one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeFit {
    pub scheme: ClassificationScheme,
    pub beta_hat: f64,
    pub misclassified: usize,
    pub conforming: usize,
}

/// Slope of the bivariate OLS `y = a + b x`.
fn ols_slope(x: &[bool], y: &[bool]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().filter(|&&v| v).count() as f64 / n;
    let my = y.iter().filter(|&&v| v).count() as f64 / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let dx = a as u8 as f64 - mx;
        sxy += dx * (b as u8 as f64 - my);
        sxx += dx * dx;
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

/// OLS of approval on each scheme's conforming indicator.
pub fn run_replication(sample: &McSample, schemes: &[ClassificationScheme]) -> Result<Vec<SchemeFit>> {
    let truth = sample.conforming(ClassificationScheme::TrueAmount);
    schemes
        .iter()
        .map(|&scheme| {
            let c = sample.conforming(scheme);
            let beta_hat = ols_slope(&c, &sample.approved).ok_or_else(|| {
                Error::Unidentified(format!("`{}` classification is constant", scheme.label()))
            })?;
            Ok(SchemeFit {
                scheme,
                beta_hat,
                misclassified: c.iter().zip(&truth).filter(|(a, b)| a != b).count(),
                conforming: c.iter().filter(|&&v| v).count(),
            })
        })
        .collect()
}

/// Summary statistics of one scheme, with deviations taken against the
/// true-amount estimate of the same replication. Variances divide by the
/// number of replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: ClassificationScheme,
    pub mean_beta: f64,
    pub sd_beta: f64,
    pub mean_dev: f64,
    pub mean_abs_dev: f64,
    pub sd_dev: f64,
    /// Mean over replications of the per-replication share.
    pub misclass_mean: f64,
    /// Misclassified records over all records of all replications.
    pub misclass_pooled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McStudyResult {
    pub params: McDgpParams,
    pub s_count: usize,
    /// Indices of the replications that produced estimates.
    pub replications: Vec<u64>,
    /// Replications whose fit failed.
    pub failures: Vec<u64>,
    /// Per-scheme estimates aligned with `replications`.
    pub beta_hat: BTreeMap<ClassificationScheme, Vec<f64>>,
    /// Per-scheme misclassification shares aligned with `replications`.
    pub misclass_share: BTreeMap<ClassificationScheme, Vec<f64>>,
    pub summaries: Vec<SchemeSummary>,
}

impl McStudyResult {
    pub fn summary(&self, scheme: ClassificationScheme) -> &SchemeSummary {
        self.summaries
            .iter()
            .find(|s| s.scheme == scheme)
            .expect("every scheme is summarized")
    }

    /// Deviations `beta_hat^s - beta_hat^*`, in replication order.
    pub fn deviations(&self, scheme: ClassificationScheme) -> Vec<f64> {
        self.beta_hat[&scheme]
            .iter()
            .zip(&self.beta_hat[&ClassificationScheme::TrueAmount])
            .map(|(a, b)| a - b)
            .collect()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn population_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Runs replications `0..s` in parallel and summarizes them in index order.
/// Failed replications are tolerated below 1% of `s`.
pub fn run_study(params: &McDgpParams, s: usize) -> Result<McStudyResult> {
    params.validate()?;
    if s == 0 {
        return Err(Error::InvalidArgument(
            "at least one replication is required".into(),
        ));
    }
    if !params.amount_law.straddles(params.limit) {
        return Err(Error::InvalidArgument(
            "amount law must put mass on both sides of the limit".into(),
        ));
    }
    let schemes = ClassificationScheme::ALL;
    let reps: Vec<(u64, Result<Vec<SchemeFit>>)> = (0..s as u64)
        .into_par_iter()
        .map(|r| {
            (
                r,
                simulate_sample(params, r).and_then(|x| run_replication(&x, &schemes)),
            )
        })
        .collect();
    let mut replications = Vec::new();
    let mut failures = Vec::new();
    let mut beta_hat: BTreeMap<_, Vec<f64>> = schemes.iter().map(|&k| (k, Vec::new())).collect();
    let mut misclass_share: BTreeMap<_, Vec<f64>> = beta_hat.clone();
    let mut misclassified: BTreeMap<_, usize> = schemes.iter().map(|&k| (k, 0)).collect();
    for (r, out) in reps {
        match out {
            Ok(fits) => {
                replications.push(r);
                for f in fits {
                    beta_hat.get_mut(&f.scheme).unwrap().push(f.beta_hat);
                    misclass_share
                        .get_mut(&f.scheme)
                        .unwrap()
                        .push(f.misclassified as f64 / params.n as f64);
                    *misclassified.get_mut(&f.scheme).unwrap() += f.misclassified;
                }
            }
            Err(e) => {
                log::debug!("replication {r} failed: {e}");
                failures.push(r);
            }
        }
    }
    if failures.len() * 100 >= s || replications.is_empty() {
        return Err(Error::Numerical(format!(
            "{} of {s} replications failed",
            failures.len()
        )));
    }
    if !failures.is_empty() {
        log::warn!("{} of {s} replications failed and were skipped", failures.len());
    }
    let truth = &beta_hat[&ClassificationScheme::TrueAmount];
    let summaries = schemes
        .iter()
        .map(|&scheme| {
            let b = &beta_hat[&scheme];
            let dev: Vec<f64> = b.iter().zip(truth).map(|(a, t)| a - t).collect();
            let abs: Vec<f64> = dev.iter().map(|d| d.abs()).collect();
            SchemeSummary {
                scheme,
                mean_beta: mean(b),
                sd_beta: population_sd(b),
                mean_dev: mean(&dev),
                mean_abs_dev: mean(&abs),
                sd_dev: population_sd(&dev),
                misclass_mean: mean(&misclass_share[&scheme]),
                misclass_pooled: misclassified[&scheme] as f64 / (replications.len() * params.n) as f64,
            }
        })
        .collect();
    Ok(McStudyResult {
        params: *params,
        s_count: s,
        replications,
        failures,
        beta_hat,
        misclass_share,
        summaries,
    })
}

pub const DEFAULT_N_GRID: [usize; 6] = [50, 100, 250, 500, 1000, 2000];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub scheme: ClassificationScheme,
    pub mean_abs_dev: f64,
    pub sd_dev: f64,
    pub sd_beta: f64,
}

/// [`run_study`] at each sample size, with the other parameters fixed.
pub fn sample_size_sweep(params: &McDgpParams, n_grid: &[usize], s: usize) -> Result<Vec<SweepRow>> {
    if n_grid.is_empty() {
        return Err(Error::InvalidArgument("sample-size grid is empty".into()));
    }
    let mut rows = Vec::new();
    for &n in n_grid {
        let study = run_study(&McDgpParams { n, ..*params }, s)?;
        for sm in &study.summaries {
            rows.push(SweepRow {
                n,
                scheme: sm.scheme,
                mean_abs_dev: sm.mean_abs_dev,
                sd_dev: sm.sd_dev,
                sd_beta: sm.sd_beta,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub limit: f64,
}

fn default_scenarios() -> Vec<Scenario> {
    vec![
        Scenario {
            name: "clay".into(),
            limit: 424.1,
        },
        Scenario {
            name: "collier".into(),
            limit: 450.8,
        },
    ]
}
fn default_n() -> usize {
    1000
}
fn default_replications() -> usize {
    10_000
}

/// Study configuration read by the `mc` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub amount_law: AmountLaw,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<Scenario>,
    /// Sample sizes for the sweep; no sweep when absent.
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
    /// Replications per sweep point; defaults to `replications`.
    #[serde(default)]
    pub sweep_replications: Option<usize>,
}

impl Default for McConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl McConfig {
    pub fn params(&self, scenario: &Scenario) -> McDgpParams {
        McDgpParams {
            n: self.n,
            alpha: self.alpha,
            beta: self.beta,
            limit: scenario.limit,
            amount_law: self.amount_law,
            seed: self.seed,
        }
    }
}

/// `replication,scheme,beta_hat,misclass_share` under a `# seed=` comment.
pub fn write_replications_csv<W: Write>(scenario: &str, study: &McStudyResult, mut out: W) -> Result<()> {
    writeln!(
        out,
        "# seed={} scenario={scenario} limit={} n={} replications={}",
        study.params.seed, study.params.limit, study.params.n, study.s_count
    )?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replication", "scheme", "beta_hat", "misclass_share"])?;
    for (k, r) in study.replications.iter().enumerate() {
        for scheme in ClassificationScheme::ALL {
            w.write_record([
                r.to_string(),
                scheme.label().to_string(),
                study.beta_hat[&scheme][k].to_string(),
                study.misclass_share[&scheme][k].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per (scenario, scheme) summary.
pub fn write_summary_csv<W: Write>(seed: u64, studies: &[(String, McStudyResult)], mut out: W) -> Result<()> {
    writeln!(out, "# seed={seed} variance=population")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "scenario",
        "limit",
        "n",
        "replications",
        "failures",
        "scheme",
        "mean_beta",
        "sd_beta",
        "mean_dev",
        "mean_abs_dev",
        "sd_dev",
        "misclass_mean",
        "misclass_pooled",
    ])?;
    for (name, st) in studies {
        for s in &st.summaries {
            w.write_record([
                name.clone(),
                st.params.limit.to_string(),
                st.params.n.to_string(),
                st.s_count.to_string(),
                st.failures.len().to_string(),
                s.scheme.label().to_string(),
                s.mean_beta.to_string(),
                s.sd_beta.to_string(),
                s.mean_dev.to_string(),
                s.mean_abs_dev.to_string(),
                s.sd_dev.to_string(),
                s.misclass_mean.to_string(),
                s.misclass_pooled.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `scenario,n,scheme,mean_abs_dev,sd_dev,sd_beta`.
pub fn write_sweep_csv<W: Write>(seed: u64, rows: &[(String, SweepRow)], mut out: W) -> Result<()> {
    writeln!(out, "# seed={seed} variance=population")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "n", "scheme", "mean_abs_dev", "sd_dev", "sd_beta"])?;
    for (name, r) in rows {
        w.write_record([
            name.clone(),
            r.n.to_string(),
            r.scheme.label().to_string(),
            r.mean_abs_dev.to_string(),
            r.sd_dev.to_string(),
            r.sd_beta.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

//! Shared data model: loan records, event calendars, panels and the
//! specifications consumed by the estimators.
//!
//! Amounts are in thousands of dollars. Reported amounts are integers (the
//! public-data rounding); conforming limits are exact reals such as `424.1`
//! and are never pre-rounded.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::classify::round_hmda;
use crate::error::{Error, Result};

/// One mortgage application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoanRecord {
    /// Latent exact amount, known only for synthetic data.
    pub true_amount: Option<f64>,
    pub reported_amount: u32,
    pub limit: f64,
    pub unit_id: String,
    pub year: i32,
    pub event_id: Option<String>,
    pub treated: bool,
    /// Years relative to the event's treatment year.
    pub time_rel: Option<i32>,
    pub approved: bool,
    pub originated: bool,
    /// Defined only for originated loans.
    pub securitized: Option<bool>,
    /// Explicit relative-time indicator columns as supplied by a third-party
    /// file: the list of relative times whose dummy equals one. `None` when
    /// dummies are derived from `time_rel`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_dummies: Option<Vec<i32>>,
}

impl LoanRecord {
    /// Checks the record-level invariants and returns the offending field.
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(self.limit.is_finite() && self.limit > 0.0) {
            return Err(("limit", format!("limit must be positive, got {}", self.limit)));
        }
        if let Some(t) = self.true_amount {
            if !(t.is_finite() && t >= 0.0) {
                return Err(("true_amount", format!("invalid true amount {t}")));
            }
            let expected = round_hmda(t * 1000.0).map_err(|e| ("true_amount", e.to_string()))?;
            if expected != self.reported_amount {
                return Err((
                    "reported_amount",
                    format!(
                        "reported {} does not match rounded true amount {} (expected {})",
                        self.reported_amount, t, expected
                    ),
                ));
            }
        }
        if self.originated != self.securitized.is_some() {
            return Err((
                "securitized",
                if self.originated {
                    "securitized must be present for an originated loan".to_string()
                } else {
                    "securitized must be blank when the loan is not originated".to_string()
                },
            ));
        }
        if self.event_id.is_some() != self.time_rel.is_some() {
            return Err((
                "time_rel",
                "time_rel must be present exactly when event_id is present".to_string(),
            ));
        }
        if self.treated && self.event_id.is_none() {
            return Err(("treated", "a treated record needs an event_id".to_string()));
        }
        Ok(())
    }

    /// `log(reported) - log(limit)`; negative on the conforming side.
    pub fn log_distance(&self) -> Result<f64> {
        log_distance(self.reported_amount as f64, self.limit)
    }

    /// Conforming side of the limit by reported amount, weak inequality.
    pub fn below_limit(&self) -> bool {
        self.reported_amount as f64 <= self.limit
    }

    /// Treatment year implied by `year - time_rel`.
    pub fn implied_treatment_year(&self) -> Option<i32> {
        self.time_rel.map(|t| self.year - t)
    }
}

pub fn log_distance(reported_amount: f64, limit: f64) -> Result<f64> {
    if !(reported_amount.is_finite() && reported_amount > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "log distance needs a positive amount, got {reported_amount}"
        )));
    }
    if !(limit.is_finite() && limit > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "log distance needs a positive limit, got {limit}"
        )));
    }
    Ok(reported_amount.ln() - limit.ln())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarEntry {
    pub event_id: String,
    pub canonical_year: i32,
    #[serde(default)]
    pub label: String,
}

/// Authoritative treatment year for each event.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventCalendar {
    entries: Vec<CalendarEntry>,
    index: HashMap<String, usize>,
}

impl EventCalendar {
    pub fn new(entries: Vec<CalendarEntry>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.event_id.clone(), i).is_some() {
                return Err(Error::Calendar(format!("duplicate event id `{}`", e.event_id)));
            }
        }
        Ok(Self { entries, index })
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let entries: Vec<CalendarEntry> = serde_json::from_slice(bytes)?;
        Self::new(entries)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.entries)?)
    }

    pub fn entries(&self) -> &[CalendarEntry] {
        &self.entries
    }

    pub fn get(&self, event_id: &str) -> Option<&CalendarEntry> {
        self.index.get(event_id).map(|&i| &self.entries[i])
    }

    pub fn canonical_year(&self, event_id: &str) -> Option<i32> {
        self.get(event_id).map(|e| e.canonical_year)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Serialize for EventCalendar {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.entries.serialize(s)
    }
}

impl<'de> Deserialize<'de> for EventCalendar {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<CalendarEntry>::deserialize(d)?;
        EventCalendar::new(entries).map_err(serde::de::Error::custom)
    }
}

/// A validated set of records together with their event calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct EventPanel {
    records: Vec<LoanRecord>,
    calendar: EventCalendar,
    /// Relative times covered by explicit dummy columns, when present.
    dummy_columns: Option<Vec<i32>>,
}

impl EventPanel {
    pub fn new(records: Vec<LoanRecord>, calendar: EventCalendar) -> Result<Self> {
        Self::with_dummy_columns(records, calendar, None)
    }

    pub fn with_dummy_columns(
        records: Vec<LoanRecord>,
        calendar: EventCalendar,
        dummy_columns: Option<Vec<i32>>,
    ) -> Result<Self> {
        for (row, r) in records.iter().enumerate() {
            r.check().map_err(|(field, message)| Error::MalformedRow {
                row,
                field: field.to_string(),
                message,
            })?;
            if let Some(ev) = &r.event_id {
                if calendar.get(ev).is_none() {
                    return Err(Error::UnknownEvent {
                        row,
                        event_id: ev.clone(),
                    });
                }
            }
            match (&dummy_columns, &r.time_dummies) {
                (None, None) => {}
                (Some(cols), Some(active)) => {
                    if let Some(k) = active.iter().find(|k| !cols.contains(k)) {
                        return Err(Error::MalformedRow {
                            row,
                            field: "time_dummies".into(),
                            message: format!("dummy for relative time {k} has no column"),
                        });
                    }
                }
                _ => {
                    return Err(Error::MalformedRow {
                        row,
                        field: "time_dummies".into(),
                        message: "explicit dummy columns must be present on every row or none".into(),
                    })
                }
            }
        }
        Ok(Self {
            records,
            calendar,
            dummy_columns,
        })
    }

    pub fn records(&self) -> &[LoanRecord] {
        &self.records
    }

    pub fn calendar(&self) -> &EventCalendar {
        &self.calendar
    }

    pub fn dummy_columns(&self) -> Option<&[i32]> {
        self.dummy_columns.as_deref()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_parts(self) -> (Vec<LoanRecord>, EventCalendar, Option<Vec<i32>>) {
        (self.records, self.calendar, self.dummy_columns)
    }

    /// Inclusive calendar-year span of the records.
    pub fn year_span(&self) -> Option<(i32, i32)> {
        let min = self.records.iter().map(|r| r.year).min()?;
        let max = self.records.iter().map(|r| r.year).max()?;
        Some((min, max))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(default)]
    pub family: KernelFamily,
    /// Bandwidth in log-distance units (0.01 is a 1% bandwidth).
    pub bandwidth: f64,
    /// Log-distance offset the kernel is centered on.
    #[serde(default)]
    pub center: f64,
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Self {
        Self {
            family: KernelFamily::Gaussian,
            bandwidth,
            center: 0.0,
        }
    }

    pub fn centered(mut self, center: f64) -> Self {
        self.center = center;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        if !self.center.is_finite() {
            return Err(Error::InvalidArgument("kernel center must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Approved,
    Originated,
    SecuritizedGivenOriginated,
}

impl Outcome {
    /// Outcome value, or `None` when the record is outside the outcome's universe.
    pub fn value(self, r: &LoanRecord) -> Option<f64> {
        let b = match self {
            Outcome::Approved => Some(r.approved),
            Outcome::Originated => Some(r.originated),
            Outcome::SecuritizedGivenOriginated => {
                if r.originated {
                    r.securitized
                } else {
                    None
                }
            }
        };
        b.map(|v| if v { 1.0 } else { 0.0 })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Approved => "approved",
            Outcome::Originated => "originated",
            Outcome::SecuritizedGivenOriginated => "securitized_given_originated",
        }
    }
}

impl std::str::FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "approved" | "approval" => Ok(Outcome::Approved),
            "originated" | "origination" => Ok(Outcome::Originated),
            "securitized" | "securitized_given_originated" => Ok(Outcome::SecuritizedGivenOriginated),
            other => Err(Error::InvalidArgument(format!("unknown outcome `{other}`"))),
        }
    }
}

/// Grouping dimensions usable as fixed effects or clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Year,
    Unit,
    Event,
}

impl Dimension {
    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Year => "year",
            Dimension::Unit => "unit",
            Dimension::Event => "event",
        }
    }
}

fn default_fixed_effects() -> Vec<Dimension> {
    vec![Dimension::Year, Dimension::Event, Dimension::Unit]
}
fn default_true() -> bool {
    true
}
fn default_window() -> i32 {
    4
}
fn default_reference() -> i32 {
    -1
}
fn default_clusters() -> (Dimension, Dimension) {
    (Dimension::Unit, Dimension::Year)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub outcome: Outcome,
    #[serde(default = "default_fixed_effects")]
    pub fixed_effects: Vec<Dimension>,
    /// Interact every fixed-effect dimension with the below-limit indicator.
    #[serde(default = "default_true")]
    pub interact_below_limit: bool,
    #[serde(default = "default_window")]
    pub time_window: i32,
    #[serde(default = "default_reference")]
    pub reference_time: i32,
    #[serde(default = "default_clusters")]
    pub cluster_dims: (Dimension, Dimension),
    /// Include the below-limit x treated regressor.
    #[serde(default = "default_true")]
    pub below_x_treated: bool,
}

impl ModelSpec {
    pub fn new(outcome: Outcome) -> Self {
        Self {
            outcome,
            fixed_effects: default_fixed_effects(),
            interact_below_limit: true,
            time_window: default_window(),
            reference_time: default_reference(),
            cluster_dims: default_clusters(),
            below_x_treated: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.time_window < 1 {
            return Err(Error::InvalidArgument(format!(
                "time window must be at least 1, got {}",
                self.time_window
            )));
        }
        let t = self.time_window;
        if !(-t..t).contains(&self.reference_time) {
            return Err(Error::InvalidArgument(format!(
                "reference time {} outside [{}, {}]",
                self.reference_time,
                -t,
                t - 1
            )));
        }
        if self.cluster_dims.0 == self.cluster_dims.1 {
            return Err(Error::InvalidArgument(
                "cluster dimensions must be distinct".into(),
            ));
        }
        let mut fe = self.fixed_effects.clone();
        fe.sort();
        fe.dedup();
        if fe.len() != self.fixed_effects.len() {
            return Err(Error::InvalidArgument("duplicate fixed-effect dimension".into()));
        }
        Ok(())
    }

    /// Relative times that carry a dummy: `[-T, T]` minus the reference.
    pub fn event_times(&self) -> Vec<i32> {
        (-self.time_window..=self.time_window)
            .filter(|&t| t != self.reference_time)
            .collect()
    }
}

/// Why a requested coefficient is absent from an [`EstimateSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// The regressor is zero on every row in the estimation sample.
    EmptyCell,
    /// The regressor lies in the span of the fixed effects.
    AbsorbedByFixedEffects,
    /// The regressor is collinear with earlier regressors.
    Collinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedCoefficient {
    pub name: String,
    pub reason: DropReason,
}

/// Named coefficients with their two-way clustered covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSet {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Covariance without small-sample correction.
    pub vcov: Vec<Vec<f64>>,
    /// Covariance with the per-dimension `G/(G-1)` cluster-count correction.
    pub vcov_adjusted: Vec<Vec<f64>>,
    pub n_obs: usize,
    pub sum_weights: f64,
    pub outcome: String,
    pub spec: Option<ModelSpec>,
    pub kernel: Option<KernelSpec>,
    pub dropped: Vec<DroppedCoefficient>,
    /// Coefficients whose two-way variance came out negative.
    pub negative_variance: Vec<String>,
    pub clusters: (usize, usize, usize),
    pub singletons: usize,
    pub absorb_sweeps: usize,
}

impl EstimateSet {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.coefficients[i])
    }

    /// Raw clustered standard error; NaN when the variance is negative.
    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.std_errors()[i])
    }

    pub fn std_errors(&self) -> Vec<f64> {
        signed_sqrt_diag(&self.vcov)
    }

    pub fn std_errors_adjusted(&self) -> Vec<f64> {
        signed_sqrt_diag(&self.vcov_adjusted)
    }

    pub fn coefficient_map(&self) -> BTreeMap<String, f64> {
        self.names
            .iter()
            .cloned()
            .zip(self.coefficients.iter().copied())
            .collect()
    }

    pub fn bandwidth(&self) -> Option<f64> {
        self.kernel.map(|k| k.bandwidth)
    }
}

fn signed_sqrt_diag(m: &[Vec<f64>]) -> Vec<f64> {
    m.iter()
        .enumerate()
        .map(|(i, row)| if row[i] >= 0.0 { row[i].sqrt() } else { f64::NAN })
        .collect()
}

/// Name of the treated x relative-time coefficient.
pub fn xi_name(t: i32) -> String {
    format!("treated_x_time_{t:+}")
}

/// Name of the below-limit x treated x relative-time coefficient.
pub fn tau_name(t: i32) -> String {
    format!("treated_x_time_{t:+}_x_below")
}

pub const BELOW_LIMIT: &str = "below_limit";
pub const BELOW_X_TREATED: &str = "below_x_treated";

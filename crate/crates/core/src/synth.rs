//! Seeded generator of event panels with planted effects, and injection of
//! the data defects the validator looks for.
//!
//! Outcomes follow a linear-probability model,
//!
//! `p = base + unit_fe + year_fe + event_fe + alpha*B + gamma*B*D
//!      + xi_t*D*1(t) + tau_t*B*D*1(t)`,
//!
//! where `B` is the reported-side below-limit indicator and `D` the treated
//! flag, so the planted coefficients are exactly the estimands of the
//! event-study regression.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::round_hmda;
use crate::error::{Error, Result};
use crate::model::{CalendarEntry, EventCalendar, EventPanel, LoanRecord};
use crate::rng::CounterRng;
use crate::validator::DISTANCE_RANGE;

const STREAM_RECORD: u64 = 0;
const STREAM_UNIT: u64 = 1;
const STREAM_YEAR: u64 = 2;
const STREAM_EVENT: u64 = 3;
const STREAM_INJECT: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthEvent {
    pub event_id: String,
    pub year: i32,
    /// Share of the event's units that are treated.
    pub treated_share: f64,
    #[serde(default)]
    pub label: String,
}

/// Law of the absolute log distance between the true amount and the first
/// amount that reports as jumbo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum DistanceLaw {
    Uniform { max: f64 },
    HalfNormal { sd: f64 },
}

impl Default for DistanceLaw {
    fn default() -> Self {
        DistanceLaw::Uniform { max: 0.20 }
    }
}

impl DistanceLaw {
    fn draw(&self, u1: f64, u2: f64) -> f64 {
        match *self {
            DistanceLaw::Uniform { max } => max * u1,
            DistanceLaw::HalfNormal { sd } => {
                // Box-Muller on (0, 1] uniforms.
                let r = (-2.0 * (1.0 - u1).ln()).sqrt();
                (sd * r * (std::f64::consts::TAU * u2).cos()).abs()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            DistanceLaw::Uniform { max } => max,
            DistanceLaw::HalfNormal { sd } => sd,
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "distance law scale must be positive, got {v}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighCostUnit {
    /// Unit index in `0..n_units`.
    pub unit: usize,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSchedule {
    /// National limit for years not listed in `by_year`.
    pub default: f64,
    #[serde(default)]
    pub by_year: BTreeMap<i32, f64>,
    #[serde(default)]
    pub high_cost: Vec<HighCostUnit>,
}

impl Default for LimitSchedule {
    fn default() -> Self {
        Self {
            default: 424.1,
            by_year: BTreeMap::new(),
            high_cost: Vec::new(),
        }
    }
}

impl LimitSchedule {
    pub fn limit(&self, unit: usize, year: i32) -> f64 {
        self.high_cost
            .iter()
            .find(|h| h.unit == unit)
            .map(|h| h.limit)
            .unwrap_or_else(|| self.by_year.get(&year).copied().unwrap_or(self.default))
    }
}

/// Planted coefficients for one outcome, keyed by relative time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantedEffects {
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub xi: BTreeMap<i32, f64>,
    #[serde(default)]
    pub tau: BTreeMap<i32, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Planted {
    #[serde(default)]
    pub approved: PlantedEffects,
    #[serde(default)]
    pub originated: PlantedEffects,
    #[serde(default)]
    pub securitized: PlantedEffects,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub approved: f64,
    pub originated: f64,
    /// Securitization probability of an originated loan.
    pub securitized: f64,
}

impl Default for Baselines {
    fn default() -> Self {
        Self {
            approved: 0.5,
            originated: 0.5,
            securitized: 0.5,
        }
    }
}

fn d_jumbo() -> f64 {
    0.28
}
fn d_window() -> i32 {
    4
}
fn d_reference() -> i32 {
    -1
}
fn d_fe_scale() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_units: usize,
    pub records_per_unit: usize,
    /// Inclusive calendar-year range.
    pub years: (i32, i32),
    /// Units are assigned to events round-robin.
    pub events: Vec<SynthEvent>,
    #[serde(default = "d_jumbo")]
    pub jumbo_share_target: f64,
    #[serde(default)]
    pub distance_law: DistanceLaw,
    #[serde(default)]
    pub limit_schedule: LimitSchedule,
    #[serde(default)]
    pub planted: Planted,
    #[serde(default)]
    pub baselines: Baselines,
    /// Unit, year and event effects are uniform on `[-fe_scale, fe_scale]`.
    #[serde(default = "d_fe_scale")]
    pub fe_scale: f64,
    #[serde(default = "d_window")]
    pub window: i32,
    #[serde(default = "d_reference")]
    pub reference_time: i32,
    #[serde(default)]
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_units == 0 || self.records_per_unit == 0 {
            return bad("n_units and records_per_unit must be positive".into());
        }
        if self.years.0 > self.years.1 {
            return bad(format!("year range {:?} is empty", self.years));
        }
        if self.events.is_empty() {
            return bad("at least one event is required".into());
        }
        if !(0.0..=1.0).contains(&self.jumbo_share_target) {
            return bad(format!("jumbo share {} outside [0, 1]", self.jumbo_share_target));
        }
        if !(self.fe_scale.is_finite() && self.fe_scale >= 0.0) {
            return bad(format!("fe_scale must be non-negative, got {}", self.fe_scale));
        }
        if self.window < 1 || !(-self.window..self.window).contains(&self.reference_time) {
            return bad(format!(
                "reference time {} outside [-{w}, {}]",
                self.reference_time,
                self.window - 1,
                w = self.window
            ));
        }
        self.distance_law.validate()?;
        let mut ids = std::collections::HashSet::new();
        for e in &self.events {
            if !ids.insert(&e.event_id) {
                return bad(format!("duplicate event `{}`", e.event_id));
            }
            if !(0.0..=1.0).contains(&e.treated_share) {
                return bad(format!("treated share of `{}` outside [0, 1]", e.event_id));
            }
            let (lo, hi) = self.event_years(e);
            if lo > hi {
                return bad(format!("window of `{}` lies outside the year range", e.event_id));
            }
        }
        let schedule = &self.limit_schedule;
        let limits = std::iter::once(schedule.default)
            .chain(schedule.by_year.values().copied())
            .chain(schedule.high_cost.iter().map(|h| h.limit));
        for l in limits {
            if !(l.is_finite() && l >= 1.0) {
                return bad(format!("limit {l} must be at least 1 (thousand)"));
            }
        }
        for (name, p) in [
            ("approved", &self.planted.approved),
            ("originated", &self.planted.originated),
            ("securitized", &self.planted.securitized),
        ] {
            for t in p.xi.keys().chain(p.tau.keys()) {
                if t.abs() > self.window || *t == self.reference_time {
                    return bad(format!(
                        "planted {name} effect at relative time {t} is outside the window or at the reference"
                    ));
                }
            }
        }
        Ok(())
    }

    fn event_years(&self, e: &SynthEvent) -> (i32, i32) {
        (
            (e.year - self.window).max(self.years.0),
            (e.year + self.window).min(self.years.1),
        )
    }

    pub fn calendar(&self) -> Result<EventCalendar> {
        EventCalendar::new(
            self.events
                .iter()
                .map(|e| CalendarEntry {
                    event_id: e.event_id.clone(),
                    canonical_year: e.year,
                    label: if e.label.is_empty() {
                        format!("{} ({})", e.event_id, e.year)
                    } else {
                        e.label.clone()
                    },
                })
                .collect(),
        )
    }
}

pub fn unit_id(u: usize) -> String {
    format!("u{u:05}")
}

fn uniform_effect(rng: &CounterRng, stream: u64, index: u64, scale: f64) -> f64 {
    let u: f64 = rng.at(stream, index).random();
    scale * (2.0 * u - 1.0)
}

fn linear_index(p: &PlantedEffects, below: bool, treated: bool, t: i32) -> f64 {
    let b = below as u8 as f64;
    let d = treated as u8 as f64;
    p.alpha * b
        + p.gamma * b * d
        + d * p.xi.get(&t).copied().unwrap_or(0.0)
        + b * d * p.tau.get(&t).copied().unwrap_or(0.0)
}

fn check_probability(p: f64, cell: impl FnOnce() -> String) -> Result<f64> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(Error::ProbabilityOutOfRange {
            probability: p,
            cell: cell(),
        })
    }
}

/// Generates `n_units * records_per_unit` records. Unit `u` belongs to event
/// `u mod n_events`; each record's year is uniform over its event window,
/// so every record carries an event and a relative time.
///
/// A record is reported jumbo with probability `jumbo_share_target`, and
/// the absolute log distance of its reported amount from the limit follows
/// `distance_law` (snapped to the nearest integer on the chosen side), so
/// the reported jumbo share is close to the target in every window around
/// the limit. The true amount is uniform within the rounding cell of the
/// reported amount.
pub fn generate_panel(config: &SynthConfig) -> Result<EventPanel> {
    config.validate()?;
    let rng = CounterRng::new(config.seed);
    let n_events = config.events.len();
    let fe = config.fe_scale;
    let event_fe: Vec<f64> = (0..n_events)
        .map(|e| uniform_effect(&rng, STREAM_EVENT, e as u64, fe))
        .collect();
    let year_fe: BTreeMap<i32, f64> = (config.years.0..=config.years.1)
        .map(|y| {
            (
                y,
                uniform_effect(&rng, STREAM_YEAR, (y - config.years.0) as u64, fe),
            )
        })
        .collect();

    let mut records = Vec::with_capacity(config.n_units * config.records_per_unit);
    for u in 0..config.n_units {
        let e_idx = u % n_events;
        let event = &config.events[e_idx];
        let mut ur = rng.at(STREAM_UNIT, u as u64);
        let treated = ur.random::<f64>() < event.treated_share;
        let unit_fe = fe * (2.0 * ur.random::<f64>() - 1.0);
        let uid = unit_id(u);
        let (y_lo, y_hi) = config.event_years(event);
        for k in 0..config.records_per_unit {
            let idx = (u * config.records_per_unit + k) as u64;
            let mut r = rng.at(STREAM_RECORD, idx);
            let year = r.random_range(y_lo..=y_hi);
            let limit = config.limit_schedule.limit(u, year);
            let jumbo = r.random::<f64>() < config.jumbo_share_target;
            let m = config.distance_law.draw(r.random(), r.random());
            let target = limit * (if jumbo { m } else { -m }).exp();
            let last_conforming = limit.floor();
            let reported_k = if jumbo {
                target.round().max(last_conforming + 1.0)
            } else {
                target.round().min(last_conforming).max(1.0)
            };
            // Strictly inside the rounding cell of `reported_k`.
            let true_amount = reported_k - 0.4995 + 0.999 * r.random::<f64>();
            let reported = round_hmda(true_amount * 1000.0)?;
            let below = reported as f64 <= limit;
            let t = year - event.year;
            let base_fe = unit_fe + year_fe[&year] + event_fe[e_idx];
            let cell = || {
                format!(
                    "unit {uid}, year {year}, event {}, t={t:+}, below={below}",
                    event.event_id
                )
            };
            let b = &config.baselines;
            let pl = &config.planted;
            let pa = check_probability(
                b.approved + base_fe + linear_index(&pl.approved, below, treated, t),
                || format!("approved: {}", cell()),
            )?;
            let po = check_probability(
                b.originated + base_fe + linear_index(&pl.originated, below, treated, t),
                || format!("originated: {}", cell()),
            )?;
            let ps = check_probability(
                b.securitized + base_fe + linear_index(&pl.securitized, below, treated, t),
                || format!("securitized: {}", cell()),
            )?;
            let approved = r.random::<f64>() < pa;
            let originated = r.random::<f64>() < po;
            let sec_draw = r.random::<f64>() < ps;
            records.push(LoanRecord {
                true_amount: Some(true_amount),
                reported_amount: reported,
                limit,
                unit_id: uid.clone(),
                year,
                event_id: Some(event.event_id.clone()),
                treated,
                time_rel: Some(t),
                approved,
                originated,
                securitized: originated.then_some(sec_draw),
                time_dummies: None,
            });
        }
    }
    EventPanel::new(records, config.calendar()?)
}

/// Rewrites `time_rel` so that a share of an event's records implies
/// `wrong_year` as their treatment year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrongYearRule {
    pub event_id: String,
    pub wrong_year: i32,
    /// Share of the event's records (within the band, when given), rounded
    /// to the nearest count.
    pub share: f64,
    /// Half-open reported log-distance band `[lo, hi)`.
    #[serde(default)]
    pub band: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DummyClass {
    /// Clear the only active dummy.
    DropAll,
    /// Add the dummy of an adjacent relative time.
    DuplicatePair,
    /// Add the dummies of two other relative times.
    Triple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DummyCorruption {
    pub class: DummyClass,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    #[serde(default)]
    pub wrong_year_rules: Vec<WrongYearRule>,
    #[serde(default)]
    pub dummy_corruptions: Vec<DummyCorruption>,
    /// Relative-time window of the materialized dummy columns.
    #[serde(default = "d_window")]
    pub window: i32,
    #[serde(default = "d_reference")]
    pub reference_time: i32,
    #[serde(default)]
    pub seed: u64,
}

impl Default for AnomalySpec {
    fn default() -> Self {
        Self {
            wrong_year_rules: Vec::new(),
            dummy_corruptions: Vec::new(),
            window: d_window(),
            reference_time: d_reference(),
            seed: 0,
        }
    }
}

impl AnomalySpec {
    pub fn is_empty(&self) -> bool {
        self.wrong_year_rules.is_empty() && self.dummy_corruptions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.wrong_year_rules {
            if !(0.0..=1.0).contains(&r.share) {
                return Err(Error::Injection(format!("share {} outside [0, 1]", r.share)));
            }
            if let Some((lo, hi)) = r.band {
                if !(DISTANCE_RANGE.0 <= lo && lo < hi && hi <= DISTANCE_RANGE.1) {
                    return Err(Error::Injection(format!(
                        "band [{lo}, {hi}) must lie within [{}, {}]",
                        DISTANCE_RANGE.0, DISTANCE_RANGE.1
                    )));
                }
            }
        }
        if self.window < 1 || !(-self.window..self.window).contains(&self.reference_time) {
            return Err(Error::Injection("reference time outside the window".into()));
        }
        Ok(())
    }
}

fn pick(rng: &mut ChaCha8Rng, mut eligible: Vec<usize>, count: usize, what: &str) -> Result<Vec<usize>> {
    if count > eligible.len() {
        return Err(Error::Injection(format!(
            "{what}: {count} requested, {} eligible",
            eligible.len()
        )));
    }
    eligible.shuffle(rng);
    eligible.truncate(count);
    eligible.sort_unstable();
    Ok(eligible)
}

/// Returns a corrupted copy of `panel`. Wrong-year rules run first, in
/// order, each drawing from records not rewritten by an earlier rule. Dummy
/// corruptions then materialize explicit `[-window, window]` dummy columns
/// (derived from the possibly rewritten `time_rel`) and corrupt treated
/// records that carry exactly one dummy.
pub fn inject_anomalies(panel: &EventPanel, spec: &AnomalySpec) -> Result<EventPanel> {
    spec.validate()?;
    if spec.is_empty() {
        return Ok(panel.clone());
    }
    let mut rng = CounterRng::new(spec.seed).stream(STREAM_INJECT);
    let (mut records, calendar, dummy_columns) = panel.clone().into_parts();
    let mut rewritten = vec![false; records.len()];
    for rule in &spec.wrong_year_rules {
        let canonical = calendar
            .canonical_year(&rule.event_id)
            .ok_or_else(|| Error::Injection(format!("event `{}` is not in the calendar", rule.event_id)))?;
        if rule.wrong_year == canonical {
            return Err(Error::Injection(format!(
                "wrong year {} equals the calendar year of `{}`",
                rule.wrong_year, rule.event_id
            )));
        }
        let mut pool = Vec::new();
        for (i, r) in records.iter().enumerate() {
            if r.event_id.as_deref() != Some(rule.event_id.as_str()) {
                continue;
            }
            if let Some((lo, hi)) = rule.band {
                let d = r.log_distance()?;
                if !(lo..hi).contains(&d) {
                    continue;
                }
            }
            pool.push(i);
        }
        let count = (rule.share * pool.len() as f64).round() as usize;
        let eligible: Vec<usize> = pool.into_iter().filter(|&i| !rewritten[i]).collect();
        for i in pick(
            &mut rng,
            eligible,
            count,
            &format!("wrong year for `{}`", rule.event_id),
        )? {
            let r = &mut records[i];
            r.time_rel = Some(r.year - rule.wrong_year);
            rewritten[i] = true;
        }
    }
    if spec.dummy_corruptions.is_empty() {
        return EventPanel::with_dummy_columns(records, calendar, dummy_columns);
    }

    let w = spec.window;
    for r in records.iter_mut() {
        r.time_dummies = Some(match (r.treated, r.time_rel) {
            (true, Some(t)) if t.abs() <= w && t != spec.reference_time => vec![t],
            _ => Vec::new(),
        });
    }
    let mut corrupted = vec![false; records.len()];
    let valid = |k: i32| k.abs() <= w && k != spec.reference_time;
    for c in &spec.dummy_corruptions {
        let eligible: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(i, r)| {
                r.treated && !corrupted[*i] && r.time_dummies.as_ref().is_some_and(|d| d.len() == 1)
            })
            .map(|(i, _)| i)
            .collect();
        for i in pick(&mut rng, eligible, c.count, &format!("{:?}", c.class))? {
            let dummies = records[i].time_dummies.as_mut().expect("materialized");
            let k = dummies[0];
            match c.class {
                DummyClass::DropAll => dummies.clear(),
                DummyClass::DuplicatePair => {
                    let extra = [k + 1, k - 1, k + 2, k - 2].into_iter().find(|&j| valid(j));
                    dummies.extend(extra);
                }
                DummyClass::Triple => {
                    let extra: Vec<i32> = [k + 1, k + 2, k - 1, k - 2, k + 3, k - 3]
                        .into_iter()
                        .filter(|&j| valid(j))
                        .take(2)
                        .collect();
                    dummies.extend(extra);
                }
            }
            dummies.sort_unstable();
            corrupted[i] = true;
        }
    }
    EventPanel::with_dummy_columns(records, calendar, Some((-w..=w).collect()))
}

//! Panel-integrity checks: miscoded treatment years, relative-time dummy
//! partition violations, distance-correlated miscoding, and calendar
//! coverage.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CalendarEntry, EventCalendar, EventPanel, LoanRecord};

/// Distance range covered by the binned wrong-year shares.
pub const DISTANCE_RANGE: (f64, f64) = (-0.10, 0.10);
pub const DEFAULT_BIN_WIDTH: f64 = 0.005;

pub const RULE_COVERAGE_MISSING: &str = "event_coverage_missing";
pub const RULE_COVERAGE_OUT_OF_SPAN: &str = "event_coverage_out_of_span";
pub const RULE_NO_OBSERVATION: &str = "event_no_observation";
pub const RULE_MULTIPLE_DUMMIES: &str = "time_dummy_multiple";
pub const RULE_NO_DUMMY: &str = "time_dummy_none";
pub const RULE_WRONG_YEAR: &str = "wrong_treatment_year";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

/// One rule's result. Row rules list every offending row and `count ==
/// rows.len()`; event rules list events and `count == events.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub rule_id: String,
    pub severity: Severity,
    pub count: usize,
    pub per_event: BTreeMap<String, usize>,
    pub rows: Vec<usize>,
    pub events: Vec<String>,
    pub message: String,
}

/// Per record: the implied treatment year `year - time_rel` differs from the
/// calendar year of its event. Records without an event are `false`.
pub fn wrong_year_flags(panel: &EventPanel) -> Vec<bool> {
    panel
        .records()
        .iter()
        .map(|r| is_wrong_year(r, panel.calendar()))
        .collect()
}

fn is_wrong_year(r: &LoanRecord, calendar: &EventCalendar) -> bool {
    match (r.event_id.as_deref(), r.implied_treatment_year()) {
        (Some(ev), Some(y)) => calendar.canonical_year(ev).is_some_and(|c| c != y),
        _ => false,
    }
}

/// Records per relative time `1..=T` for one coded treatment year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodedYearRow {
    pub coded_year: i32,
    pub wrong: bool,
    /// `(t, count)` for `t = 1..=T`.
    pub post_counts: Vec<(i32, usize)>,
    /// All records with this coded year, at any relative time.
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventYearRow {
    pub event_id: String,
    pub label: String,
    pub canonical_year: i32,
    pub n_records: usize,
    pub n_wrong: usize,
    /// `None` for an event without records.
    pub wrong_share: Option<f64>,
    pub coded_years: Vec<CodedYearRow>,
}

impl EventYearRow {
    pub fn no_observation(&self) -> bool {
        self.n_records == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventYearCheck {
    pub events: Vec<EventYearRow>,
    pub flags: Vec<bool>,
}

impl EventYearCheck {
    pub fn flagged_rows(&self) -> Vec<usize> {
        (0..self.flags.len()).filter(|&i| self.flags[i]).collect()
    }
}

/// Per-event table of coded treatment years with their post-period counts;
/// events follow calendar order.
pub fn check_event_year_consistency(panel: &EventPanel, window: i32) -> Result<EventYearCheck> {
    if window < 1 {
        return Err(Error::InvalidArgument(format!(
            "window must be at least 1, got {window}"
        )));
    }
    let cal = panel.calendar();
    let flags = wrong_year_flags(panel);
    let mut by_event: BTreeMap<&str, BTreeMap<i32, (usize, Vec<usize>)>> = BTreeMap::new();
    for r in panel.records() {
        let (Some(ev), Some(t), Some(y)) = (r.event_id.as_deref(), r.time_rel, r.implied_treatment_year())
        else {
            continue;
        };
        if cal.get(ev).is_none() {
            return Err(Error::Calendar(format!("event `{ev}` is not in the calendar")));
        }
        let e = by_event
            .entry(ev)
            .or_default()
            .entry(y)
            .or_insert_with(|| (0, vec![0; window as usize]));
        e.0 += 1;
        if (1..=window).contains(&t) {
            e.1[(t - 1) as usize] += 1;
        }
    }
    let events = cal
        .entries()
        .iter()
        .map(|c| {
            let years = by_event.remove(c.event_id.as_str()).unwrap_or_default();
            let n_records: usize = years.values().map(|v| v.0).sum();
            let n_wrong: usize = years
                .iter()
                .filter(|(y, _)| **y != c.canonical_year)
                .map(|(_, v)| v.0)
                .sum();
            EventYearRow {
                event_id: c.event_id.clone(),
                label: c.label.clone(),
                canonical_year: c.canonical_year,
                n_records,
                n_wrong,
                wrong_share: (n_records > 0).then(|| n_wrong as f64 / n_records as f64),
                coded_years: years
                    .into_iter()
                    .map(|(coded_year, (total, counts))| CodedYearRow {
                        coded_year,
                        wrong: coded_year != c.canonical_year,
                        post_counts: counts
                            .into_iter()
                            .enumerate()
                            .map(|(k, n)| (k as i32 + 1, n))
                            .collect(),
                        total,
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(EventYearCheck { events, flags })
}

/// Histogram of the number of active relative-time dummies over treated
/// records, with the violating rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionAudit {
    /// Dummy sum to treated-record count.
    pub histogram: BTreeMap<usize, usize>,
    /// Treated rows at the reference time with no dummy (compliant).
    pub reference_rows: Vec<usize>,
    /// Treated rows outside the reference time with no dummy.
    pub no_dummy: Vec<usize>,
    /// Treated rows with two or more dummies.
    pub multiple: Vec<usize>,
    /// Active dummy sets among `multiple`, e.g. `"+1,+2"`.
    pub multiple_sets: BTreeMap<String, usize>,
    /// Whether dummies came from explicit columns instead of `time_rel`.
    pub explicit: bool,
}

impl PartitionAudit {
    pub fn treated_total(&self) -> usize {
        self.histogram.values().sum()
    }
}

fn active_dummies(r: &LoanRecord, window: i32, reference: i32) -> Vec<i32> {
    match &r.time_dummies {
        Some(active) => active.iter().copied().filter(|k| k.abs() <= window).collect(),
        None => r
            .time_rel
            .filter(|&t| t.abs() <= window && t != reference)
            .into_iter()
            .collect(),
    }
}

/// Counts the relative-time dummies switched on for every treated record.
/// Explicit dummy columns are audited as supplied; otherwise dummies are
/// derived from `time_rel` over `[-window, window]` without the reference.
pub fn check_time_dummy_partition(panel: &EventPanel, window: i32, reference: i32) -> PartitionAudit {
    let mut a = PartitionAudit {
        histogram: BTreeMap::new(),
        reference_rows: Vec::new(),
        no_dummy: Vec::new(),
        multiple: Vec::new(),
        multiple_sets: BTreeMap::new(),
        explicit: panel.dummy_columns().is_some(),
    };
    for (i, r) in panel.records().iter().enumerate() {
        if !r.treated {
            continue;
        }
        let active = active_dummies(r, window, reference);
        *a.histogram.entry(active.len()).or_default() += 1;
        match active.len() {
            0 if r.time_rel == Some(reference) => a.reference_rows.push(i),
            0 => a.no_dummy.push(i),
            1 => {}
            _ => {
                a.multiple.push(i);
                let mut set = active.clone();
                set.sort_unstable();
                let key = set.iter().map(|k| format!("{k:+}")).collect::<Vec<_>>().join(",");
                *a.multiple_sets.entry(key).or_default() += 1;
            }
        }
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceBin {
    /// Inclusive lower edge.
    pub lo: f64,
    /// Exclusive upper edge.
    pub hi: f64,
    pub n: usize,
    pub wrong: usize,
    /// `None` for an empty bin.
    pub share: Option<f64>,
}

/// Number of half-open bins of `width` that tile `[lo, hi)`; the last bin is
/// clipped at `hi` when `width` does not divide the range.
fn bin_count(width: f64) -> usize {
    let span = DISTANCE_RANGE.1 - DISTANCE_RANGE.0;
    let k = (span / width).round();
    if (k * width - span).abs() <= 1e-9 * span {
        k as usize
    } else {
        (span / width).ceil() as usize
    }
}

fn bin_edge(k: usize, width: f64, bins: usize) -> f64 {
    if k >= bins {
        DISTANCE_RANGE.1
    } else {
        DISTANCE_RANGE.0 + k as f64 * width
    }
}

/// Bin of `d` in `[lo, hi)`, consistent with the edges returned in the table.
fn bin_index(d: f64, width: f64, bins: usize) -> Option<usize> {
    if !(DISTANCE_RANGE.0..DISTANCE_RANGE.1).contains(&d) {
        return None;
    }
    let mut k = (((d - DISTANCE_RANGE.0) / width).floor() as usize).min(bins - 1);
    while k > 0 && d < bin_edge(k, width, bins) {
        k -= 1;
    }
    while k + 1 < bins && d >= bin_edge(k + 1, width, bins) {
        k += 1;
    }
    Some(k)
}

/// Wrong-year share per distance bin over records with an event.
pub fn wrong_year_share_by_distance(panel: &EventPanel, bin_width: f64) -> Result<Vec<DistanceBin>> {
    let span = DISTANCE_RANGE.1 - DISTANCE_RANGE.0;
    if !(bin_width.is_finite() && bin_width > 0.0 && bin_width <= span) {
        return Err(Error::InvalidArgument(format!(
            "bin width must be in (0, {span}], got {bin_width}"
        )));
    }
    let bins = bin_count(bin_width);
    let mut n = vec![0usize; bins];
    let mut wrong = vec![0usize; bins];
    let cal = panel.calendar();
    for r in panel.records() {
        if r.event_id.is_none() {
            continue;
        }
        if let Some(k) = bin_index(r.log_distance()?, bin_width, bins) {
            n[k] += 1;
            if is_wrong_year(r, cal) {
                wrong[k] += 1;
            }
        }
    }
    Ok((0..bins)
        .map(|k| DistanceBin {
            lo: bin_edge(k, bin_width, bins),
            hi: bin_edge(k + 1, bin_width, bins),
            n: n[k],
            wrong: wrong[k],
            share: (n[k] > 0).then(|| wrong[k] as f64 / n[k] as f64),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCheck {
    /// Reference events inside the panel's year span with no records.
    pub missing: Vec<CalendarEntry>,
    /// Reference events outside the span (not expected in the panel).
    pub out_of_span: Vec<CalendarEntry>,
    pub span: Option<(i32, i32)>,
}

/// Compares the events present in the panel with an authoritative list.
pub fn check_event_coverage(panel: &EventPanel, reference: &EventCalendar) -> CoverageCheck {
    let span = panel.year_span();
    let present: std::collections::HashSet<&str> = panel
        .records()
        .iter()
        .filter_map(|r| r.event_id.as_deref())
        .collect();
    let mut out = CoverageCheck {
        missing: Vec::new(),
        out_of_span: Vec::new(),
        span,
    };
    for e in reference.entries() {
        if present.contains(e.event_id.as_str()) {
            continue;
        }
        match span {
            Some((lo, hi)) if (lo..=hi).contains(&e.canonical_year) => out.missing.push(e.clone()),
            _ => out.out_of_span.push(e.clone()),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateOptions {
    pub window: i32,
    pub reference_time: i32,
    pub bin_width: f64,
    pub reference_calendar: Option<EventCalendar>,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            window: 4,
            reference_time: -1,
            bin_width: DEFAULT_BIN_WIDTH,
            reference_calendar: None,
        }
    }
}

/// All findings plus the supporting tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub n_records: usize,
    /// Sorted by `rule_id`.
    pub findings: Vec<Finding>,
    pub histogram: BTreeMap<usize, usize>,
    pub reference_rows: usize,
    pub multiple_sets: BTreeMap<String, usize>,
    pub binned_shares: Vec<DistanceBin>,
    pub event_years: Vec<EventYearRow>,
}

impl AnomalyReport {
    pub fn has_errors(&self) -> bool {
        self.findings
            .iter()
            .any(|f| f.severity == Severity::Error && f.count > 0)
    }

    pub fn finding(&self, rule_id: &str) -> Option<&Finding> {
        self.findings.iter().find(|f| f.rule_id == rule_id)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Plain-text summary for terminals.
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "records: {}", self.n_records);
        for f in &self.findings {
            let sev = match f.severity {
                Severity::Info => "info",
                Severity::Warning => "warning",
                Severity::Error => "error",
            };
            let _ = writeln!(s, "[{sev}] {}: {} ({})", f.rule_id, f.count, f.message);
            for (ev, n) in &f.per_event {
                let _ = writeln!(s, "    {ev}: {n}");
            }
        }
        let _ = writeln!(s, "time-dummy sums over treated records:");
        for (k, n) in &self.histogram {
            let _ = writeln!(s, "    {k}: {n}");
        }
        let _ = writeln!(
            s,
            "    reference-period rows with no dummy: {}",
            self.reference_rows
        );
        let _ = writeln!(s, "treatment years by event:");
        for e in &self.event_years {
            if e.no_observation() {
                let _ = writeln!(s, "    {} ({}): no observation", e.event_id, e.canonical_year);
                continue;
            }
            let _ = writeln!(
                s,
                "    {} ({}): {} records, {} wrong ({:.4})",
                e.event_id,
                e.canonical_year,
                e.n_records,
                e.n_wrong,
                e.wrong_share.unwrap_or(0.0)
            );
            for c in &e.coded_years {
                let counts: Vec<String> = c.post_counts.iter().map(|(t, n)| format!("t+{t}={n}")).collect();
                let _ = writeln!(
                    s,
                    "        coded {}{}: {}",
                    c.coded_year,
                    if c.wrong { " (wrong)" } else { "" },
                    counts.join(" ")
                );
            }
        }
        s
    }
}

fn per_event_counts(panel: &EventPanel, rows: &[usize]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for &i in rows {
        if let Some(ev) = &panel.records()[i].event_id {
            *m.entry(ev.clone()).or_default() += 1;
        }
    }
    m
}

fn row_finding(
    panel: &EventPanel,
    rule_id: &str,
    severity: Severity,
    rows: Vec<usize>,
    message: String,
) -> Finding {
    Finding {
        rule_id: rule_id.into(),
        severity,
        count: rows.len(),
        per_event: per_event_counts(panel, &rows),
        rows,
        events: Vec::new(),
        message,
    }
}

fn event_finding(rule_id: &str, severity: Severity, events: Vec<String>, message: String) -> Finding {
    Finding {
        rule_id: rule_id.into(),
        severity,
        count: events.len(),
        per_event: events.iter().map(|e| (e.clone(), 0)).collect(),
        rows: Vec::new(),
        events,
        message,
    }
}

/// Runs every rule and assembles the report.
pub fn validate_panel(panel: &EventPanel, options: &ValidateOptions) -> Result<AnomalyReport> {
    if !(-options.window..options.window).contains(&options.reference_time) {
        return Err(Error::InvalidArgument(format!(
            "reference time {} outside [-{w}, {}]",
            options.reference_time,
            options.window - 1,
            w = options.window
        )));
    }
    let years = check_event_year_consistency(panel, options.window)?;
    let partition = check_time_dummy_partition(panel, options.window, options.reference_time);
    let bins = wrong_year_share_by_distance(panel, options.bin_width)?;

    let mut findings = vec![
        row_finding(
            panel,
            RULE_WRONG_YEAR,
            Severity::Error,
            years.flagged_rows(),
            "implied treatment year differs from the calendar".into(),
        ),
        row_finding(
            panel,
            RULE_MULTIPLE_DUMMIES,
            Severity::Error,
            partition.multiple.clone(),
            "treated records with more than one relative-time dummy".into(),
        ),
        row_finding(
            panel,
            RULE_NO_DUMMY,
            Severity::Warning,
            partition.no_dummy.clone(),
            "treated records outside the reference period with no relative-time dummy".into(),
        ),
        event_finding(
            RULE_NO_OBSERVATION,
            Severity::Info,
            years
                .events
                .iter()
                .filter(|e| e.no_observation())
                .map(|e| e.event_id.clone())
                .collect(),
            "calendar events without records".into(),
        ),
    ];
    if let Some(reference) = &options.reference_calendar {
        let cov = check_event_coverage(panel, reference);
        findings.push(event_finding(
            RULE_COVERAGE_MISSING,
            Severity::Warning,
            cov.missing.iter().map(|e| e.event_id.clone()).collect(),
            "reference events inside the panel's year span with no records".into(),
        ));
        findings.push(event_finding(
            RULE_COVERAGE_OUT_OF_SPAN,
            Severity::Info,
            cov.out_of_span.iter().map(|e| e.event_id.clone()).collect(),
            "reference events outside the panel's year span".into(),
        ));
    }
    findings.sort_by(|a, b| a.rule_id.cmp(&b.rule_id));
    Ok(AnomalyReport {
        n_records: panel.len(),
        findings,
        histogram: partition.histogram,
        reference_rows: partition.reference_rows.len(),
        multiple_sets: partition.multiple_sets,
        binned_shares: bins,
        event_years: years.events,
    })
}

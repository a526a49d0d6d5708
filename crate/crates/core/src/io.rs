//! CSV and JSON codecs for panels.
//!
//! Header (exact names, any order):
//! `true_amount, reported_amount, limit, unit_id, year, event_id, treated,
//! time_rel, approved, originated, securitized`. Optional audit columns
//! `time_m4 .. time_0 .. time_p4` carry explicit relative-time dummies.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::{EventCalendar, EventPanel, LoanRecord};

pub const COLUMNS: [&str; 11] = [
    "true_amount",
    "reported_amount",
    "limit",
    "unit_id",
    "year",
    "event_id",
    "treated",
    "time_rel",
    "approved",
    "originated",
    "securitized",
];

/// Column name for the explicit dummy of relative time `k`.
pub fn dummy_column_name(k: i32) -> String {
    match k.cmp(&0) {
        std::cmp::Ordering::Less => format!("time_m{}", -k),
        std::cmp::Ordering::Equal => "time_0".to_string(),
        std::cmp::Ordering::Greater => format!("time_p{k}"),
    }
}

fn parse_dummy_column(name: &str) -> Option<i32> {
    let rest = name.strip_prefix("time_")?;
    if rest == "0" {
        return Some(0);
    }
    if let Some(n) = rest.strip_prefix('m') {
        return n.parse::<i32>().ok().filter(|&v| v > 0).map(|v| -v);
    }
    rest.strip_prefix('p')?.parse::<i32>().ok().filter(|&v| v > 0)
}

/// Parses a panel CSV and a calendar JSON array.
pub fn load_panel<R: Read, C: Read>(source: R, mut calendar: C) -> Result<EventPanel> {
    let mut cal_bytes = Vec::new();
    calendar.read_to_end(&mut cal_bytes)?;
    let calendar = EventCalendar::from_json(&cal_bytes)?;
    load_panel_with_calendar(source, calendar)
}

pub fn load_panel_with_calendar<R: Read>(source: R, calendar: EventCalendar) -> Result<EventPanel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyInput("panel CSV has no header".into()));
    }
    let mut col: HashMap<&str, usize> = HashMap::new();
    let mut dummies: Vec<(i32, usize)> = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if let Some(k) = parse_dummy_column(h) {
            dummies.push((k, i));
        } else if COLUMNS.contains(&h) {
            col.insert(h, i);
        }
    }
    for c in COLUMNS {
        if !col.contains_key(c) {
            return Err(Error::MalformedRow {
                row: 0,
                field: c.to_string(),
                message: "missing column in header".into(),
            });
        }
    }
    dummies.sort();
    let dummy_columns = (!dummies.is_empty()).then(|| dummies.iter().map(|d| d.0).collect());

    let mut records = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = |name: &str| rec.get(col[name]).unwrap_or("");
        let bad = |name: &str, message: String| Error::MalformedRow {
            row,
            field: name.to_string(),
            message,
        };
        let opt_f64 = |name: &str| -> Result<Option<f64>> {
            let v = field(name);
            if v.is_empty() {
                return Ok(None);
            }
            v.parse::<f64>()
                .map(Some)
                .map_err(|_| bad(name, format!("not a number: `{v}`")))
        };
        let req_f64 = |name: &str| -> Result<f64> {
            opt_f64(name)?.ok_or_else(|| bad(name, "required value is blank".into()))
        };
        let opt_i32 = |name: &str| -> Result<Option<i32>> {
            let v = field(name);
            if v.is_empty() {
                return Ok(None);
            }
            v.parse::<i32>()
                .map(Some)
                .map_err(|_| bad(name, format!("not an integer: `{v}`")))
        };
        let parse_bool = |name: &str, v: &str| -> Result<bool> {
            match v {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad(name, format!("expected 0 or 1, got `{v}`"))),
            }
        };
        let req_bool = |name: &str| parse_bool(name, field(name));
        let opt_bool = |name: &str| -> Result<Option<bool>> {
            let v = field(name);
            if v.is_empty() {
                Ok(None)
            } else {
                parse_bool(name, v).map(Some)
            }
        };

        let reported = field("reported_amount");
        let reported_amount = reported.parse::<u32>().map_err(|_| {
            bad(
                "reported_amount",
                format!("not a non-negative integer: `{reported}`"),
            )
        })?;
        let unit_id = field("unit_id").to_string();
        if unit_id.is_empty() {
            return Err(bad("unit_id", "required value is blank".into()));
        }
        let event = field("event_id");
        let time_dummies = if dummies.is_empty() {
            None
        } else {
            let mut active = Vec::new();
            for &(k, i) in &dummies {
                let name = dummy_column_name(k);
                if parse_bool(&name, rec.get(i).unwrap_or(""))? {
                    active.push(k);
                }
            }
            Some(active)
        };
        let record = LoanRecord {
            true_amount: opt_f64("true_amount")?,
            reported_amount,
            limit: req_f64("limit")?,
            unit_id,
            year: opt_i32("year")?.ok_or_else(|| bad("year", "required value is blank".into()))?,
            event_id: (!event.is_empty()).then(|| event.to_string()),
            treated: req_bool("treated")?,
            time_rel: opt_i32("time_rel")?,
            approved: req_bool("approved")?,
            originated: req_bool("originated")?,
            securitized: opt_bool("securitized")?,
            time_dummies,
        };
        record.check().map_err(|(f, m)| bad(f, m))?;
        if let Some(ev) = &record.event_id {
            if calendar.get(ev).is_none() {
                return Err(Error::UnknownEvent {
                    row,
                    event_id: ev.clone(),
                });
            }
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::EmptyInput("panel CSV has no data rows".into()));
    }
    EventPanel::with_dummy_columns(records, calendar, dummy_columns)
}

fn b(v: bool) -> &'static str {
    if v {
        "1"
    } else {
        "0"
    }
}

/// Writes the panel in the canonical column order. Floats use the shortest
/// representation that round-trips.
pub fn write_panel_csv<W: Write>(panel: &EventPanel, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let dummy_cols = panel.dummy_columns().unwrap_or(&[]);
    let mut header: Vec<String> = COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(dummy_cols.iter().map(|&k| dummy_column_name(k)));
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for r in panel.records() {
        row.clear();
        row.push(r.true_amount.map(|v| v.to_string()).unwrap_or_default());
        row.push(r.reported_amount.to_string());
        row.push(r.limit.to_string());
        row.push(r.unit_id.clone());
        row.push(r.year.to_string());
        row.push(r.event_id.clone().unwrap_or_default());
        row.push(b(r.treated).into());
        row.push(r.time_rel.map(|v| v.to_string()).unwrap_or_default());
        row.push(b(r.approved).into());
        row.push(b(r.originated).into());
        row.push(r.securitized.map(|v| b(v).to_string()).unwrap_or_default());
        if let Some(active) = &r.time_dummies {
            for k in dummy_cols {
                row.push(b(active.contains(k)).into());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn panel_to_csv_string(panel: &EventPanel) -> Result<String> {
    let mut buf = Vec::new();
    write_panel_csv(panel, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

//! Public-data amount rounding and the three conforming/jumbo labeling rules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EventPanel, LoanRecord};

/// Rule used to label a loan conforming (`true`) or jumbo (`false`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassificationScheme {
    /// Latent exact amount against the exact limit.
    TrueAmount,
    /// Reported (rounded) amount against the exact limit.
    ReportedAmount,
    /// Reported amount against the limit rounded up to the next thousand.
    RoundedLimit,
}

impl ClassificationScheme {
    pub const ALL: [ClassificationScheme; 3] = [
        ClassificationScheme::TrueAmount,
        ClassificationScheme::ReportedAmount,
        ClassificationScheme::RoundedLimit,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ClassificationScheme::TrueAmount => "true",
            ClassificationScheme::ReportedAmount => "reported",
            ClassificationScheme::RoundedLimit => "rounded_limit",
        }
    }
}

/// Rounds a dollar amount to integer thousands, half up: `152_500 -> 153`,
/// `152_499 -> 152`.
pub fn round_hmda(amount_dollars: f64) -> Result<u32> {
    if !amount_dollars.is_finite() || amount_dollars < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "amount must be a non-negative dollar value, got {amount_dollars}"
        )));
    }
    let thousands = ((amount_dollars + 500.0) / 1000.0).floor();
    if thousands > u32::MAX as f64 {
        return Err(Error::InvalidArgument(format!(
            "amount {amount_dollars} too large"
        )));
    }
    Ok(thousands as u32)
}

/// Conforming test on raw fields. `true_amount` is only read by
/// [`ClassificationScheme::TrueAmount`].
pub fn is_conforming(
    true_amount: Option<f64>,
    reported_amount: u32,
    limit: f64,
    scheme: ClassificationScheme,
) -> Option<bool> {
    match scheme {
        ClassificationScheme::TrueAmount => true_amount.map(|t| t <= limit),
        ClassificationScheme::ReportedAmount => Some(reported_amount as f64 <= limit),
        ClassificationScheme::RoundedLimit => Some(reported_amount as f64 <= limit.ceil()),
    }
}

pub fn classify(record: &LoanRecord, scheme: ClassificationScheme) -> Result<bool> {
    is_conforming(record.true_amount, record.reported_amount, record.limit, scheme)
        .ok_or_else(|| Error::InvalidArgument("true-amount scheme needs a record with a true amount".into()))
}

/// Share of records whose label under `scheme` differs from the true label.
pub fn misclassification_share(panel: &EventPanel, scheme: ClassificationScheme) -> Result<f64> {
    if panel.is_empty() {
        return Err(Error::EmptyInput("panel has no records".into()));
    }
    let mut wrong = 0usize;
    for (i, r) in panel.records().iter().enumerate() {
        let truth = classify(r, ClassificationScheme::TrueAmount).map_err(|_| Error::MissingTrueAmount(i))?;
        if classify(r, scheme)? != truth {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / panel.len() as f64)
}

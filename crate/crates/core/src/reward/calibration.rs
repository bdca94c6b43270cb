use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldRce {
    pub value: f64,
    /// Fields left out because their labels sum to zero.
    pub skipped_fields: usize,
}

/// Field-level relative calibration error:
///
/// ```text
/// (1/|D|) * sum_f |sum_{i in D_f} (y_i - yhat_i)| / mean_{i in D_f}(y_i)
/// ```
pub fn field_rce<F: Ord + Copy>(predictions: &[f64], labels: &[f64], fields: &[F]) -> Result<FieldRce> {
    if predictions.len() != labels.len() || labels.len() != fields.len() {
        return Err(Error::config(format!(
            "field_rce: lengths differ ({} predictions, {} labels, {} fields)",
            predictions.len(),
            labels.len(),
            fields.len()
        )));
    }
    // (residual sum, label sum, count)
    let mut per_field: BTreeMap<F, (f64, f64, usize)> = BTreeMap::new();
    for ((&p, &y), &f) in predictions.iter().zip(labels).zip(fields) {
        let e = per_field.entry(f).or_insert((0.0, 0.0, 0));
        e.0 += y - p;
        e.1 += y;
        e.2 += 1;
    }
    let mut total = 0.0;
    let mut used = 0;
    let mut skipped = 0;
    for (resid, label_sum, count) in per_field.into_values() {
        if label_sum == 0.0 {
            skipped += 1;
            continue;
        }
        used += 1;
        total += resid.abs() / (label_sum / count as f64);
    }
    if used == 0 {
        return Err(Error::UndefinedMetric("field_rce: every field has a zero label sum".into()));
    }
    Ok(FieldRce { value: total / labels.len() as f64, skipped_fields: skipped })
}

//! Performance, FLOPs, energy and carbon accounting.
//!
//! ```text
//! EC = PUE * sum_d p_d[kW] * e_d[h]
//! CE = EC * CI / 1000            (kg CO2e, CI in g/kWh)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::allocator::PeriodRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub name: String,
    pub rated_power_watts: f64,
    pub throughput_flops_per_second: f64,
    /// Fraction of the workload's FLOPs attributed to this device's hours.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub pue: f64,
    pub carbon_intensity_g_per_kwh: f64,
    pub devices: Vec<Device>,
}

impl Default for HardwareProfile {
    /// Worldwide-average PUE and a 615 g/kWh grid; one CPU whose RAM is
    /// billed for the same hours.
    fn default() -> Self {
        Self {
            pue: 1.67,
            carbon_intensity_g_per_kwh: 615.0,
            devices: vec![
                Device { name: "cpu".into(), rated_power_watts: 200.0, throughput_flops_per_second: 1e12, share: 1.0 },
                Device { name: "ram".into(), rated_power_watts: 50.0, throughput_flops_per_second: 1e12, share: 1.0 },
            ],
        }
    }
}

impl HardwareProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.pue >= 1.0 && self.pue.is_finite()) {
            return Err(Error::config("profile.pue must be at least 1"));
        }
        if !(self.carbon_intensity_g_per_kwh > 0.0 && self.carbon_intensity_g_per_kwh.is_finite()) {
            return Err(Error::config("profile.carbon_intensity_g_per_kwh must be positive"));
        }
        for (i, d) in self.devices.iter().enumerate() {
            if !(d.throughput_flops_per_second > 0.0 && d.throughput_flops_per_second.is_finite()) {
                return Err(Error::config(format!("profile.devices[{i}].throughput_flops_per_second must be positive")));
            }
            if !(d.rated_power_watts >= 0.0) || !(d.share >= 0.0) {
                return Err(Error::config(format!("profile.devices[{i}]: power and share must be non-negative")));
            }
        }
        Ok(())
    }
}

/// Energy in kWh from per-device usage hours.
pub fn energy(profile: &HardwareProfile, usage_hours: &[(String, f64)]) -> Result<f64> {
    let mut total = 0.0;
    for (name, hours) in usage_hours {
        let device = profile
            .devices
            .iter()
            .find(|d| &d.name == name)
            .ok_or_else(|| Error::config(format!("unknown device {name}")))?;
        if !(*hours >= 0.0) {
            return Err(Error::config(format!("usage of {name} must be non-negative")));
        }
        total += device.rated_power_watts / 1000.0 * hours;
    }
    Ok(profile.pue * total)
}

/// Carbon in kg CO2e.
pub fn carbon(energy_kwh: f64, carbon_intensity_g_per_kwh: f64) -> f64 {
    energy_kwh * carbon_intensity_g_per_kwh / 1000.0
}

/// Device hours needed to execute `flops`.
pub fn flops_to_usage(flops: f64, profile: &HardwareProfile) -> Result<Vec<(String, f64)>> {
    if !(flops >= 0.0) {
        return Err(Error::config("FLOPs must be non-negative"));
    }
    profile
        .devices
        .iter()
        .map(|d| {
            if !(d.throughput_flops_per_second > 0.0) {
                return Err(Error::config(format!("device {} has no throughput", d.name)));
            }
            Ok((d.name.clone(), flops * d.share / (d.throughput_flops_per_second * 3600.0)))
        })
        .collect()
}

/// A method's period log, as produced by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub method: String,
    pub budget: f64,
    pub records: Vec<PeriodRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfecRow {
    pub method: String,
    pub budget: f64,
    pub requests: usize,
    pub revenue: f64,
    /// Cascade inference FLOPs.
    pub rs_flops: f64,
    /// Reward-model scoring plus solver FLOPs of the allocator itself.
    pub overhead_flops: f64,
    pub total_flops: f64,
    pub energy_kwh: f64,
    pub co2_kg: f64,
    pub overhead_pct: f64,
    pub revenue_delta_pct: f64,
    pub flops_delta_pct: f64,
    pub energy_delta_pct: f64,
    pub co2_delta_pct: f64,
}

fn pct(value: f64, base: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        100.0 * (value - base) / base
    }
}

fn totals(run: &Run, profile: &HardwareProfile) -> Result<PfecRow> {
    let rs_flops: f64 = run.records.iter().map(|r| r.consumed_flops).sum();
    let overhead_flops: f64 = run.records.iter().map(|r| r.overhead_flops).sum();
    let total_flops = rs_flops + overhead_flops;
    let energy_kwh = energy(profile, &flops_to_usage(total_flops, profile)?)?;
    Ok(PfecRow {
        method: run.method.clone(),
        budget: run.budget,
        requests: run.records.iter().map(|r| r.requests).sum(),
        revenue: run.records.iter().map(|r| r.revenue).sum(),
        rs_flops,
        overhead_flops,
        total_flops,
        energy_kwh,
        co2_kg: carbon(energy_kwh, profile.carbon_intensity_g_per_kwh),
        overhead_pct: if rs_flops > 0.0 { 100.0 * overhead_flops / rs_flops } else { 0.0 },
        revenue_delta_pct: 0.0,
        flops_delta_pct: 0.0,
        energy_delta_pct: 0.0,
        co2_delta_pct: 0.0,
    })
}

/// PFEC totals per run with deltas against the run named `baseline`.
pub fn report(runs: &[Run], baseline: &str, profile: &HardwareProfile) -> Result<Vec<PfecRow>> {
    profile.validate()?;
    let base = runs
        .iter()
        .find(|r| r.method == baseline)
        .ok_or_else(|| Error::Comparison(format!("baseline {baseline} is not among the runs")))?;
    if let Some(other) = runs.iter().find(|r| r.records.len() != base.records.len()) {
        return Err(Error::Comparison(format!(
            "{} covers {} periods but {baseline} covers {}",
            other.method,
            other.records.len(),
            base.records.len()
        )));
    }
    let b = totals(base, profile)?;
    runs.iter()
        .map(|run| {
            let mut row = totals(run, profile)?;
            row.revenue_delta_pct = pct(row.revenue, b.revenue);
            row.flops_delta_pct = pct(row.total_flops, b.total_flops);
            row.energy_delta_pct = pct(row.energy_kwh, b.energy_kwh);
            row.co2_delta_pct = pct(row.co2_kg, b.co2_kg);
            Ok(row)
        })
        .collect()
}

pub fn write_report_csv(rows: &[PfecRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width text rendering of a report.
pub fn render_table(rows: &[PfecRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>10} {:>12} {:>9} {:>12} {:>9} {:>11} {:>9} {:>10} {:>9} {:>10}",
        "method", "revenue", "rs_flops", "overhead", "total_flops", "d_flops", "energy_kwh", "d_energy", "co2_kg", "d_co2", "d_revenue"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12} {:>10.2} {:>12.4e} {:>8.2}% {:>12.4e} {:>8.2}% {:>11.4} {:>8.2}% {:>10.4} {:>8.2}% {:>9.2}%",
            r.method,
            r.revenue,
            r.rs_flops,
            r.overhead_pct,
            r.total_flops,
            r.flops_delta_pct,
            r.energy_kwh,
            r.energy_delta_pct,
            r.co2_kg,
            r.co2_delta_pct,
            r.revenue_delta_pct
        );
    }
    out
}

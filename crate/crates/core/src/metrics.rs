//! Collision rate and per-cell aggregation.

use crate::error::MetricsError;
use crate::experiment::ResultRow;

/// Distinct collided vehicles per successfully departed vehicle.
pub fn collision_rate(collided: u64, departed: u64) -> Result<f64, MetricsError> {
    if departed == 0 {
        return Err(MetricsError::UndefinedRate);
    }
    Ok(collided as f64 / departed as f64)
}

/// A rate as a percentage with three decimals, e.g. `0.595 %`.
pub fn format_percent(rate: f64) -> String {
    format!("{:.3} %", 100.0 * rate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean: f64,
    /// Sample standard deviation, 0 for a single value.
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Stats {
    pub fn of(values: &[f64]) -> Result<Stats, MetricsError> {
        if values.is_empty() {
            return Err(MetricsError::EmptyAggregate);
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_dev = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Ok(Stats {
            mean,
            std_dev,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: n,
        })
    }
}

/// Pooled standard deviation of two samples.
pub fn pooled_std(a: &Stats, b: &Stats) -> f64 {
    let dof = (a.count + b.count) as f64 - 2.0;
    if dof <= 0.0 {
        return 0.0;
    }
    let ss = (a.count as f64 - 1.0) * a.std_dev.powi(2) + (b.count as f64 - 1.0) * b.std_dev.powi(2);
    (ss / dof).sqrt()
}

/// Summary of the rollouts of one sweep cell. Rows whose rate is undefined
/// (nobody departed) are counted in `undefined` and left out of the statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub config: String,
    pub rv_rate: f64,
    pub demand: u64,
    pub left_turns_removed: bool,
    /// `None` when no rollout of the cell had a defined rate.
    pub stats: Option<Stats>,
    pub undefined: usize,
}

pub fn aggregate(rows: &[ResultRow]) -> Result<CellSummary, MetricsError> {
    let first = rows.first().ok_or(MetricsError::EmptyAggregate)?;
    for r in rows {
        if !r.same_cell(first) {
            return Err(MetricsError::MixedCells(format!("{} vs {}", first.cell_label(), r.cell_label())));
        }
    }
    let rates: Vec<f64> = rows.iter().filter_map(|r| r.collision_rate).collect();
    Ok(CellSummary {
        config: first.config.clone(),
        rv_rate: first.rv_rate,
        demand: first.demand,
        left_turns_removed: first.left_turns_removed,
        stats: Stats::of(&rates).ok(),
        undefined: rows.len() - rates.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_arithmetic() {
        assert_eq!(collision_rate(0, 100).unwrap(), 0.0);
        assert_eq!(collision_rate(3, 200).unwrap(), 0.015);
        assert_eq!(collision_rate(1, 0), Err(MetricsError::UndefinedRate));
    }

    #[test]
    fn percent_has_three_decimals() {
        assert_eq!(format_percent(collision_rate(47, 7897).unwrap()), "0.595 %");
        assert_eq!(format_percent(0.0), "0.000 %");
    }

    #[test]
    fn two_point_deviation() {
        let s = Stats::of(&[0.01, 0.03]).unwrap();
        assert!((s.mean - 0.02).abs() < 1e-15);
        assert!((s.std_dev - 0.02f64.sqrt() / 10.0).abs() < 1e-12);
        assert_eq!(Stats::of(&[0.01]).unwrap().std_dev, 0.0);
        assert_eq!(Stats::of(&[]), Err(MetricsError::EmptyAggregate));
    }

    #[test]
    fn pooled_equal_spreads() {
        let a = Stats::of(&[1.0, 3.0]).unwrap();
        let b = Stats::of(&[5.0, 7.0]).unwrap();
        assert!((pooled_std(&a, &b) - a.std_dev).abs() < 1e-12);
    }
}

//! Empirical distribution tables and quantiles.

use serde::{Deserialize, Serialize};

use uavpower::{Error, Result};

/// Empirical cumulative distribution: sorted sample values with cumulative
/// fractions `i/n` at the i-th order statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfTable {
    /// Sample values in nondecreasing order.
    pub values: Vec<f64>,
    /// Cumulative fraction at and below each value; ends at 1.
    pub fractions: Vec<f64>,
}

impl CdfTable {
    /// Number of samples behind the table.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True when the table holds no samples (never produced by
    /// [`empirical_cdf`]).
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest absolute deviation from another CDF evaluated at this table's
    /// sample points (one-sample Kolmogorov-Smirnov statistic).
    pub fn ks_distance(&self, reference: impl Fn(f64) -> f64) -> f64 {
        let n = self.values.len() as f64;
        let mut worst = 0.0f64;
        for (i, &v) in self.values.iter().enumerate() {
            let r = reference(v);
            let above = (self.fractions[i] - r).abs();
            let below = (i as f64 / n - r).abs();
            worst = worst.max(above).max(below);
        }
        worst
    }

    /// Quantile by inverse CDF: the smallest sample value whose cumulative
    /// fraction reaches `q`.
    pub fn quantile(&self, q: f64) -> f64 {
        assert!((0.0..=1.0).contains(&q), "quantile level out of range");
        let idx = self
            .fractions
            .iter()
            .position(|&f| f >= q)
            .unwrap_or(self.values.len() - 1);
        self.values[idx]
    }

    /// Median sample value.
    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }
}

/// Build the empirical CDF of a nonempty sample set.
pub fn empirical_cdf(samples: &[f64]) -> Result<CdfTable> {
    if samples.is_empty() {
        return Err(Error::Validation("empirical CDF of an empty sample set".into()));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::Validation("empirical CDF input contains NaN".into()));
    }
    let mut values = samples.to_vec();
    values.sort_by(|a, b| a.partial_cmp(b).expect("NaN filtered above"));
    let n = values.len() as f64;
    let fractions = (1..=values.len()).map(|i| i as f64 / n).collect();
    Ok(CdfTable { values, fractions })
}

/// CDF tables of one sample set partitioned by critical-zone membership.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneCdfs {
    /// Distribution over in-zone samples, when any exist.
    pub inside: Option<CdfTable>,
    /// Distribution over out-of-zone samples, when any exist.
    pub outside: Option<CdfTable>,
}

/// Partition samples by their zone label and build one CDF per part.
pub fn zone_cdfs(samples: &[f64], in_zone: &[bool]) -> Result<ZoneCdfs> {
    if samples.len() != in_zone.len() {
        return Err(Error::Validation(format!(
            "zone_cdfs: {} samples but {} labels",
            samples.len(),
            in_zone.len()
        )));
    }
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for (&v, &z) in samples.iter().zip(in_zone) {
        if z {
            inside.push(v);
        } else {
            outside.push(v);
        }
    }
    Ok(ZoneCdfs {
        inside: if inside.is_empty() { None } else { Some(empirical_cdf(&inside)?) },
        outside: if outside.is_empty() { None } else { Some(empirical_cdf(&outside)?) },
    })
}

/// Quantile of a raw sample slice (sorts a copy; see [`CdfTable::quantile`]).
pub fn quantile_of(samples: &[f64], q: f64) -> Result<f64> {
    Ok(empirical_cdf(samples)?.quantile(q))
}

/// Arithmetic mean, computed as `c + sum(x - c) / n` with `c` the first
/// element.  The shift keeps the mean exact when every sample is identical
/// (the deviations are all literally zero) and well conditioned when samples
/// cluster, which matters for report columns that aggregate values such as
/// per-step power fractions that are themselves exact by construction.
pub fn mean(samples: &[f64]) -> f64 {
    let Some(&c) = samples.first() else {
        return f64::NAN;
    };
    let shifted: f64 = samples.iter().map(|x| x - c).sum();
    c + shifted / samples.len() as f64
}

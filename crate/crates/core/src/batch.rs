//! Multi-seed runs and their aggregation.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::config::ScenarioConfig;
use crate::error::{Result, SimError};
use crate::metrics::{fmt_metric, RunReport, SCALAR_KEYS};
use crate::routing::Protocol;
use crate::sim::run_scenario;
use crate::trace::TraceLevel;

/// Mean and sample standard deviation of one metric over the seeds where it is present.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary { n, mean: None, std: None };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = (n > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
    Summary { n, mean: Some(mean), std }
}

#[derive(Debug, Clone)]
pub struct BatchReport {
    pub protocol: Protocol,
    pub runs: Vec<RunReport>,
}

impl BatchReport {
    pub fn summary(&self, key: &str) -> Summary {
        let v: Vec<f64> = self.runs.iter().filter_map(|r| r.scalar(key)).collect();
        summarize(&v)
    }

    pub fn mean(&self, key: &str) -> Option<f64> {
        self.summary(key).mean
    }

    /// Mean alive count at `t` across seeds.
    pub fn mean_alive_at(&self, t: f64) -> Option<f64> {
        let v: Vec<f64> = self.runs.iter().filter_map(|r| r.alive_at(t)).map(|a| a as f64).collect();
        summarize(&v).mean
    }

    /// CSV: one row per seed, then `mean` and `std` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed");
        for k in SCALAR_KEYS {
            s.push(',');
            s.push_str(k);
        }
        s.push('\n');
        for r in &self.runs {
            let _ = write!(s, "{}", r.seed);
            for k in SCALAR_KEYS {
                let _ = write!(s, ",{}", fmt_metric(r.scalar(k)));
            }
            s.push('\n');
        }
        for (label, pick) in [("mean", 0), ("std", 1)] {
            s.push_str(label);
            for k in SCALAR_KEYS {
                let sm = self.summary(k);
                let _ = write!(s, ",{}", fmt_metric(if pick == 0 { sm.mean } else { sm.std }));
            }
            s.push('\n');
        }
        s
    }
}

pub fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(SimError::Batch("no seeds given".into()));
    }
    let mut seen = BTreeSet::new();
    for s in seeds {
        if !seen.insert(s) {
            return Err(SimError::Batch(format!("seed {s} given twice")));
        }
    }
    Ok(())
}

/// Runs every seed in parallel. Any failure fails the batch and names each failing seed.
pub fn run_batch(cfg: &ScenarioConfig, protocol: Option<Protocol>, seeds: &[u64]) -> Result<BatchReport> {
    check_seeds(seeds)?;
    let results: Vec<(u64, Result<RunReport>)> = seeds
        .par_iter()
        .map(|&s| (s, run_scenario(cfg, protocol, s, TraceLevel::Off).map(|(r, _)| r)))
        .collect();
    let mut runs = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (s, r) in results {
        match r {
            Ok(r) => runs.push(r),
            Err(SimError::Config(e)) => return Err(SimError::Config(e)),
            Err(e) => failures.push(format!("seed {s}: {e}")),
        }
    }
    if !failures.is_empty() {
        return Err(SimError::Batch(failures.join("; ")));
    }
    let protocol = runs[0].protocol;
    Ok(BatchReport { protocol, runs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_values() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, Some(2.5));
        assert!((s.std.unwrap() - 1.2909944487358056).abs() < 1e-15);
        let one = summarize(&[0.7]);
        assert_eq!((one.mean, one.std), (Some(0.7), None));
        assert_eq!(summarize(&[]).mean, None);
    }

    #[test]
    fn duplicate_seeds_rejected() {
        assert!(check_seeds(&[1, 1]).is_err());
        assert!(check_seeds(&[]).is_err());
        assert!(check_seeds(&[3, 1, 2]).is_ok());
    }
}

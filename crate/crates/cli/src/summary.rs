use serde::{Deserialize, Serialize};

use delta_core::experiment::{MeanStd, SeedMetrics};

/// One seed's headline numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub average_accuracy: f64,
    pub average_forgetting: Option<f64>,
    pub head_accuracy: Option<f64>,
    pub median_accuracy: Option<f64>,
    pub tail_accuracy: Option<f64>,
    pub wall_clock_secs: f64,
}

impl From<&SeedMetrics> for SeedSummary {
    fn from(m: &SeedMetrics) -> Self {
        Self {
            seed: m.seed,
            average_accuracy: m.average_accuracy,
            average_forgetting: m.average_forgetting,
            head_accuracy: m.breakdown.head,
            median_accuracy: m.breakdown.median,
            tail_accuracy: m.breakdown.tail,
            wall_clock_secs: m.wall_clock_secs,
        }
    }
}

/// The swept setting a point was run with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub name: String,
    pub value: serde_json::Value,
}

/// Aggregate over every seed of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub label: String,
    pub setting: Option<Setting>,
    pub seeds: Vec<SeedSummary>,
    pub average_accuracy: MeanStd,
    pub average_forgetting: Option<MeanStd>,
    pub head_accuracy: Option<MeanStd>,
    pub median_accuracy: Option<MeanStd>,
    pub tail_accuracy: Option<MeanStd>,
    pub wall_clock_secs: MeanStd,
}

impl PointSummary {
    /// `seeds` must be non-empty.
    pub fn new(
        label: impl Into<String>,
        setting: Option<Setting>,
        seeds: Vec<SeedSummary>,
    ) -> Self {
        let stat = |f: &dyn Fn(&SeedSummary) -> Option<f64>| -> Option<MeanStd> {
            let values: Option<Vec<f64>> = seeds.iter().map(f).collect();
            values.and_then(|v| MeanStd::of(&v))
        };
        Self {
            label: label.into(),
            setting,
            average_accuracy: stat(&|s| Some(s.average_accuracy)).expect("at least one seed"),
            average_forgetting: stat(&|s| s.average_forgetting),
            head_accuracy: stat(&|s| s.head_accuracy),
            median_accuracy: stat(&|s| s.median_accuracy),
            tail_accuracy: stat(&|s| s.tail_accuracy),
            wall_clock_secs: stat(&|s| Some(s.wall_clock_secs)).expect("at least one seed"),
            seeds,
        }
    }
}

/// Contents of `summary.json`; the same shape for every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: String,
    pub points: Vec<PointSummary>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(seed: u64, acc: f64, forgetting: Option<f64>) -> SeedSummary {
        SeedSummary {
            seed,
            average_accuracy: acc,
            average_forgetting: forgetting,
            head_accuracy: Some(acc),
            median_accuracy: None,
            tail_accuracy: Some(0.0),
            wall_clock_secs: 1.0,
        }
    }

    #[test]
    fn single_seed_has_zero_std() {
        let p = PointSummary::new("run", None, vec![seed(0, 0.4, None)]);
        assert_eq!(p.average_accuracy.std, 0.0);
        assert_eq!(p.average_accuracy.n, 1);
        assert!(p.average_forgetting.is_none());
        assert!(p.median_accuracy.is_none());
    }

    #[test]
    fn statistics_cover_every_seed() {
        let seeds = (0..5).map(|s| seed(s, 0.1 * s as f64, Some(0.5))).collect();
        let p = PointSummary::new("run", None, seeds);
        assert_eq!(p.average_accuracy.n, 5);
        assert!((p.average_accuracy.mean - 0.2).abs() < 1e-12);
        assert_eq!(p.average_forgetting.unwrap().mean, 0.5);
        assert_eq!(p.tail_accuracy.unwrap().std, 0.0);
    }
}

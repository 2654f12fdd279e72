use std::fmt;

use serde::{Deserialize, Serialize};

use super::config::RegimeThresholds;
use super::records::ExperimentRecord;
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Under,
    Critical,
    Sufficient,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Under => "under",
            Regime::Critical => "critical",
            Regime::Sufficient => "sufficient",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeLabel {
    pub regime: Regime,
    pub thresholds: RegimeThresholds,
}

impl RegimeThresholds {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(in_unit(self.ratio_lo) && in_unit(self.ratio_hi) && in_unit(self.acc_lo) && in_unit(self.acc_hi)) {
            return Err(HarnessError::Thresholds(format!("{self:?} has values outside [0, 1]")));
        }
        if self.ratio_lo > self.ratio_hi || self.acc_lo > self.acc_hi {
            return Err(HarnessError::Thresholds(format!("{self:?} has lo > hi")));
        }
        Ok(())
    }

    /// Sufficient when determinism and k-NN accuracy are both good, under
    /// when either is bad, critical in between.
    pub fn classify(&self, ratio: f64, knn_test: f64) -> Result<Regime, HarnessError> {
        self.validate()?;
        Ok(if ratio <= self.ratio_lo && knn_test >= self.acc_hi {
            Regime::Sufficient
        } else if ratio >= self.ratio_hi || knn_test <= self.acc_lo {
            Regime::Under
        } else {
            Regime::Critical
        })
    }
}

/// Regime of a record from its training-set redundancy (test-set redundancy
/// when the training one is missing) and k-NN test accuracy. Returns `None`
/// when the record lacks either metric.
pub fn label_regime(
    record: &ExperimentRecord,
    thresholds: &RegimeThresholds,
) -> Result<Option<RegimeLabel>, HarnessError> {
    thresholds.validate()?;
    let ratio = record.redundancy_train.or(record.redundancy_test);
    match (ratio, record.knn_test) {
        (Some(ratio), Some(knn)) => Ok(Some(RegimeLabel {
            regime: thresholds.classify(ratio, knn)?,
            thresholds: *thresholds,
        })),
        _ => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_cases() {
        let t = RegimeThresholds::default();
        assert_eq!(t.classify(0.0, 0.95).unwrap(), Regime::Sufficient);
        assert_eq!(t.classify(0.9, 0.2).unwrap(), Regime::Under);
        assert_eq!(t.classify(0.1, 0.7).unwrap(), Regime::Critical);
    }

    #[test]
    fn inconsistent_thresholds_rejected() {
        let t = RegimeThresholds {
            ratio_lo: 0.3,
            ratio_hi: 0.2,
            ..Default::default()
        };
        assert!(t.classify(0.1, 0.5).is_err());
        let t = RegimeThresholds {
            acc_lo: 0.95,
            ..Default::default()
        };
        assert!(t.classify(0.1, 0.5).is_err());
    }

    #[test]
    fn record_without_metrics_is_unlabelled() {
        let r = ExperimentRecord::blank("width", "5", 0, 1);
        assert_eq!(label_regime(&r, &RegimeThresholds::default()).unwrap(), None);
        let r = ExperimentRecord {
            redundancy_test: Some(0.0),
            knn_test: Some(0.99),
            ..r
        };
        let l = label_regime(&r, &RegimeThresholds::default()).unwrap().unwrap();
        assert_eq!(l.regime, Regime::Sufficient);
    }

    proptest! {
        #[test]
        fn total_over_valid_thresholds(a in 0.0f64..=1.0, b in 0.0f64..=1.0, c in 0.0f64..=1.0, d in 0.0f64..=1.0,
                                       ratio in 0.0f64..=1.0, acc in 0.0f64..=1.0) {
            let t = RegimeThresholds { ratio_lo: a.min(b), ratio_hi: a.max(b), acc_lo: c.min(d), acc_hi: c.max(d) };
            let r = t.classify(ratio, acc).unwrap();
            match r {
                Regime::Sufficient => prop_assert!(ratio <= t.ratio_lo && acc >= t.acc_hi),
                Regime::Under => prop_assert!(ratio >= t.ratio_hi || acc <= t.acc_lo),
                Regime::Critical => prop_assert!(!(ratio <= t.ratio_lo && acc >= t.acc_hi) && ratio < t.ratio_hi && acc > t.acc_lo),
            }
        }
    }
}

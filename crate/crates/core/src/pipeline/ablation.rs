use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dataset::Sample;
use super::eval::{evaluate, EvalOverrides};
use super::metrics::MetricsReport;
use super::train::{train, TrainConfig};
use super::{PipelineError, Result};
use crate::featurize::FeatureAblation;

/// A model/preprocessing configuration compared in the ablation table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AblationVariant {
    Full,
    #[serde(rename = "no_GT")]
    NoGaussianTargets,
    #[serde(rename = "no_PM")]
    NoProduct,
    #[serde(rename = "no_EC")]
    NoExtendedCost,
    #[serde(rename = "no_vcycle_shortcut")]
    NoVcycleShortcut,
    #[serde(rename = "none_of_preprocessing")]
    NoneOfPreprocessing,
}

impl AblationVariant {
    pub const ALL: [Self; 6] = [
        Self::NoneOfPreprocessing,
        Self::NoGaussianTargets,
        Self::NoProduct,
        Self::NoExtendedCost,
        Self::NoVcycleShortcut,
        Self::Full,
    ];

    /// The five rows of the published ablation table, in table order.
    pub const TABLE: [Self; 5] =
        [Self::NoneOfPreprocessing, Self::NoExtendedCost, Self::NoProduct, Self::NoVcycleShortcut, Self::Full];

    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::NoGaussianTargets => "no_GT",
            Self::NoProduct => "no_PM",
            Self::NoExtendedCost => "no_EC",
            Self::NoVcycleShortcut => "no_vcycle_shortcut",
            Self::NoneOfPreprocessing => "none_of_preprocessing",
        }
    }

    pub fn ablation(self) -> FeatureAblation {
        let none = FeatureAblation::default();
        match self {
            Self::Full | Self::NoVcycleShortcut => none,
            Self::NoGaussianTargets => FeatureAblation { no_gaussian_targets: true, ..none },
            Self::NoProduct => FeatureAblation { no_product: true, ..none },
            Self::NoExtendedCost => FeatureAblation { no_extended_cost: true, ..none },
            Self::NoneOfPreprocessing => FeatureAblation::NONE_OF_PREPROCESSING,
        }
    }

    /// The base training config adjusted for this variant.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        cfg.ablation = self.ablation();
        cfg.model.shortcut = self != Self::NoVcycleShortcut;
        cfg
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationVariant {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| PipelineError::Config(format!("unknown ablation variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub report: MetricsReport,
    pub epochs: usize,
}

/// Trains every variant under the same base config and evaluates on `test`.
/// The full model is always included.
pub fn run_ablation(
    variants: &[AblationVariant],
    train_samples: &[Sample],
    test_samples: &[Sample],
    base: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    let mut list = variants.to_vec();
    if !list.contains(&AblationVariant::Full) {
        list.push(AblationVariant::Full);
    }
    list.into_iter()
        .map(|variant| {
            let cfg = variant.apply(base);
            let out = train(train_samples, &cfg)?;
            let report =
                evaluate(&out.params, test_samples, &EvalOverrides { r_comm: None, ablation: cfg.ablation })?;
            Ok(AblationRow { variant, report, epochs: out.curve.len() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        assert_eq!(AblationVariant::TABLE.len(), 5);
        assert_eq!(AblationVariant::TABLE[4], AblationVariant::Full);
        let base = TrainConfig::default();
        let nv = AblationVariant::NoVcycleShortcut.apply(&base);
        assert!(!nv.model.shortcut && nv.ablation.is_full());
        let none = AblationVariant::NoneOfPreprocessing.apply(&base);
        assert!(none.model.shortcut && none.ablation == FeatureAblation::NONE_OF_PREPROCESSING);
    }

    #[test]
    fn names_round_trip() {
        for v in AblationVariant::ALL {
            assert_eq!(v.name().parse::<AblationVariant>().unwrap(), v);
        }
        assert!("bogus".parse::<AblationVariant>().is_err());
    }
}

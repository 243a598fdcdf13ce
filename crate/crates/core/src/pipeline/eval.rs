use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Sample;
use super::metrics::MetricsReport;
use super::train::prepare;
use super::Result;
use crate::agent::observe;
use crate::featurize::FeatureAblation;
use crate::model::ModelParams;
use crate::oracle::{greedy_no_comm, random_select};
use crate::seed::derive_seed;

/// Inference-time changes applied to stored samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalOverrides {
    /// Replaces every agent's communication radius.
    pub r_comm: Option<f64>,
    /// Feature preprocessing the checkpoint was trained with.
    pub ablation: FeatureAblation,
}

/// Pooled distances between the model's predictions and expert labels.
pub fn evaluate(params: &ModelParams, samples: &[Sample], overrides: &EvalOverrides) -> Result<MetricsReport> {
    let data = prepare(samples, overrides.ablation, &params.config, overrides.r_comm)?;
    let idx: Vec<usize> = (0..samples.len()).collect();
    data.report(params, &idx)
}

/// One report per communication radius.
pub fn sweep_comm(
    params: &ModelParams,
    samples: &[Sample],
    ranges: &[f64],
    ablation: FeatureAblation,
) -> Result<Vec<(f64, MetricsReport)>> {
    ranges
        .iter()
        .map(|&r| Ok((r, evaluate(params, samples, &EvalOverrides { r_comm: Some(r), ablation })?)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Nearest own-visible target by travel time.
    GreedyNoComm,
    /// Uniform own-visible target.
    Random,
    /// The labelling expert itself (always scores zero).
    Expert,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::GreedyNoComm => "greedy_no_comm",
            Baseline::Random => "random",
            Baseline::Expert => "expert",
        }
    }
}

/// Distances between a baseline's choice and the expert label. An agent that
/// sees no target predicts its own cell.
pub fn evaluate_baseline(samples: &[Sample], baseline: Baseline, seed: u64) -> MetricsReport {
    let d: Vec<Vec<f64>> = samples
        .par_iter()
        .enumerate()
        .map(|(si, s)| {
            let mut out = Vec::new();
            for (a, label) in s.agents.iter().zip(&s.labels) {
                let Some(t) = label else { continue };
                let pick = match baseline {
                    Baseline::Expert => Some(*t),
                    Baseline::GreedyNoComm => greedy_no_comm(a, &observe(&s.world, a)),
                    Baseline::Random => {
                        let stream = derive_seed(seed, si as u64);
                        random_select(a, &observe(&s.world, a), derive_seed(stream, a.id as u64))
                    }
                };
                out.push(pick.unwrap_or(a.position).dist(*t));
            }
            out
        })
        .collect();
    MetricsReport::from_distances(&d.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{generate_test_set, DatasetConfig};

    #[test]
    fn expert_scores_zero_and_baselines_are_ordered() {
        let d = generate_test_set(&DatasetConfig { maps: 4, samples_per_map: 5, ..Default::default() }, 0).unwrap();
        assert_eq!(evaluate_baseline(&d.samples, Baseline::Expert, 0).dist_avg, 0.0);
        let g = evaluate_baseline(&d.samples, Baseline::GreedyNoComm, 0);
        let r = evaluate_baseline(&d.samples, Baseline::Random, 0);
        assert!(g.dist_avg < r.dist_avg, "{g:?} vs {r:?}");
        assert_eq!(r, evaluate_baseline(&d.samples, Baseline::Random, 0));
    }

    #[test]
    fn sweep_emits_one_report_per_range() {
        let d = generate_test_set(&DatasetConfig { maps: 1, samples_per_map: 2, ..Default::default() }, 0).unwrap();
        let p = ModelParams::init(Default::default(), 0).unwrap();
        let ranges: Vec<f64> = (0..=7).map(f64::from).collect();
        let rows = sweep_comm(&p, &d.samples, &ranges, FeatureAblation::default()).unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|(_, m)| m.dist_50 <= m.dist_90));
    }
}

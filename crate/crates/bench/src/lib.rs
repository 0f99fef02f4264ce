//! Fixtures shared by the benchmarks.

use arrival_core::simulator::{simulate_survey, ScenarioConfig};
use arrival_core::{break_ties, resolve_partition, HazardPartition, PartitionSpec, SurveyDataset};

/// The calibrated weekly survey at `population_size`, ties already broken.
pub fn weekly_dataset(population_size: u64) -> SurveyDataset {
    let sim =
        simulate_survey(&ScenarioConfig::fevs_like(population_size, 1)).expect("valid preset");
    break_ties(&sim.dataset, 0)
}

pub fn partition(d: &SurveyDataset, spec: &str) -> HazardPartition {
    let spec: PartitionSpec = spec.parse().expect("known partition");
    resolve_partition(&spec, d.censor_time.days(), d.calendar.as_ref()).expect("resolvable")
}

//! Shared fixtures for the benchmark suite: small deterministic sample
//! clouds and ready-to-run sampler configurations.

use ddpmw2_core::oracle::parse_oracle_spec;
use ddpmw2_core::sampler::{SampleMatrix, SamplerConfig};
use ddpmw2_core::schedule::{build_schedule, ScheduleParams};
use ddpmw2_core::target::TargetSpec;

/// A standard-Gaussian product target in D dimensions.
pub fn gaussian_target(d: usize) -> TargetSpec {
    TargetSpec::Gaussian { mean: vec![0.0; d], var: vec![1.0; d] }
}

/// An n × d cloud drawn from the standard Gaussian, deterministic in `seed`.
pub fn gaussian_cloud(n: usize, d: usize, seed: u64) -> SampleMatrix {
    SampleMatrix { n, d, data: gaussian_target(d).sample(n, seed).unwrap() }
}

/// A complete sampler configuration on the (T1 = 2, a = 1) grid.
pub fn sampler_config(k0: usize, chains: usize, oracle_spec: &str) -> SamplerConfig {
    let schedule = build_schedule(&ScheduleParams::with_default_delta(2.0, 1.0, k0)).unwrap();
    let oracle = parse_oracle_spec(oracle_spec, gaussian_target(2)).unwrap();
    SamplerConfig { schedule, oracle, n_chains: chains, seed: 1, record_trajectory: None }
}

//! Forward-process utilities and the batched reverse iteration.
//!
//! The reverse chain starts at `Z_0 ~ γ^D` and repeats
//!
//! ```text
//! Z_{k+1} = (1 + h_k)·Z_k + 2·h_k·s̃(T − t_k, Z_k) + √(2·h_k)·ξ_{k+1}
//! ```
//!
//! over the grid of a [`Schedule`], querying the score oracle exactly once
//! per step (`2·k0 + 1` queries per chain). Chains are mutually independent
//! and embarrassingly parallel; every chain derives its randomness from
//! `(seed, chain index)` through disjoint substreams for the Brownian
//! increments and the oracle's internal noise, so results are bitwise
//! identical for any worker count.
//!
//! Besides the plain batched run, two coupled drivers serve the error-rate
//! studies:
//!
//! * [`run_paired`] advances an exact-score chain and a noisy-oracle chain
//!   through the *same* Brownian increments, isolating the oracle noise's
//!   contribution to their endpoint gap;
//! * [`run_anchored_family`] advances one chain per grid in a family of
//!   nested resolutions through a shared increment stream drawn on the
//!   finest grid, so that coarse-grid and fine-grid endpoints are coupled
//!   realizations of the same Brownian path.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::{kahan_sum, sq_norm};
use crate::oracle::ScoreOracle;
use crate::rng::{chain_rng, Lane};
use crate::schedule::Schedule;
use crate::target::TargetSpec;

/// Rows processed per parallel work unit; also the granularity of the
/// deterministic in-order reduction.
const CHUNK_ROWS: usize = 4096;

/// Magic bytes opening the binary sample-matrix format.
pub const MATRIX_MAGIC: [u8; 8] = *b"DDPMW2\0\0";

/// A dense row-major `n × d` matrix of samples with simple binary IO.
///
/// On disk: 16-byte header (`DDPMW2\0\0`, then `n` and `d` as little-endian
/// u32) followed by `n·d` little-endian f64 values, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMatrix {
    pub n: usize,
    pub d: usize,
    pub data: Vec<f64>,
}

impl SampleMatrix {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self { n, d, data: vec![0.0; n * d] }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    /// Per-coordinate sample mean.
    pub fn mean_vector(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.d);
        for j in 0..self.d {
            out.push(kahan_sum((0..self.n).map(|i| self.data[i * self.d + j])) / self.n as f64);
        }
        out
    }

    /// Per-coordinate unbiased sample variance.
    pub fn variance_vector(&self) -> Vec<f64> {
        let mean = self.mean_vector();
        let mut out = Vec::with_capacity(self.d);
        for j in 0..self.d {
            let ss = kahan_sum((0..self.n).map(|i| {
                let dev = self.data[i * self.d + j] - mean[j];
                dev * dev
            }));
            out.push(ss / (self.n - 1) as f64);
        }
        out
    }

    /// Writes the binary format described on the type.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let n = u32::try_from(self.n)
            .map_err(|_| Error::validation(format!("matrix too tall for format: {}", self.n)))?;
        let d = u32::try_from(self.d)
            .map_err(|_| Error::validation(format!("matrix too wide for format: {}", self.d)))?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(&MATRIX_MAGIC)?;
        w.write_all(&n.to_le_bytes())?;
        w.write_all(&d.to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the binary format described on the type.
    pub fn read_from(path: &Path) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if header[..8] != MATRIX_MAGIC {
            return Err(Error::validation(format!(
                "{} is not a sample-matrix file (bad magic)",
                path.display()
            )));
        }
        let n = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
        let mut buf = vec![0u8; 8 * n * d];
        r.read_exact(&mut buf)?;
        let data = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { n, d, data })
    }
}

/// Inputs of [`run_ddpm`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub schedule: Schedule,
    pub oracle: ScoreOracle,
    pub n_chains: usize,
    pub seed: u64,
    /// When `Some(m)`, besides the endpoints the run stores the chain state
    /// at every m-th grid index (index 0 and the final index always
    /// included).
    pub record_trajectory: Option<usize>,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::validation("n_chains must be at least 1"));
        }
        if self.record_trajectory == Some(0) {
            return Err(Error::validation("trajectory stride must be at least 1"));
        }
        self.oracle.target.validate()
    }
}

/// Per-run accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    /// Mean of `‖Z_k‖` over chains, for every grid index `k = 0, …, K+1`
    /// (length `2·k0 + 2`; index 0 is the initialization).
    pub mean_norm_per_step: Vec<f64>,
    /// Oracle queries issued at each step index (length `2·k0 + 1`); every
    /// entry equals `n_chains` for a completed run.
    pub oracle_calls_per_step: Vec<u64>,
    /// Total oracle queries across the run, `n_chains · (2·k0 + 1)`.
    pub total_oracle_calls: u64,
}

/// Where a run came from: enough to reproduce it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// Digest of the grid times (see `Schedule::digest`).
    pub schedule_digest: u64,
    /// Oracle spec string (see `ScoreOracle::descriptor`).
    pub oracle: String,
}

/// Chain states recorded along the way, one matrix per stored grid index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Grid indices at which states were stored.
    pub indices: Vec<usize>,
    /// `states[i]` holds all chains at grid index `indices[i]`.
    pub states: Vec<SampleMatrix>,
}

/// Output of [`run_ddpm`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Final states `Z_{K+1}`, one row per chain.
    pub outputs: SampleMatrix,
    pub diagnostics: RunDiagnostics,
    pub provenance: Provenance,
    pub trajectory: Option<Trajectory>,
}

/// One reverse-iteration update:
/// `(1 + h)·z + 2·h·score + √(2·h)·ξ`, elementwise. Pure arithmetic.
pub fn ddpm_step(z: &[f64], h: f64, score_value: &[f64], xi: &[f64]) -> Vec<f64> {
    let mut out = z.to_vec();
    ddpm_step_in_place(&mut out, h, score_value, xi);
    out
}

/// In-place form of [`ddpm_step`]. The drift is evaluated before the noise
/// term is added, in the exact floating-point order the coupled drivers
/// replicate.
#[inline]
pub fn ddpm_step_in_place(z: &mut [f64], h: f64, score_value: &[f64], xi: &[f64]) {
    let noise_scale = (2.0 * h).sqrt();
    for j in 0..z.len() {
        z[j] = ((1.0 + h) * z[j] + 2.0 * h * score_value[j]) + noise_scale * xi[j];
    }
}

/// Draws `n` samples of `α_t·X + β_t·ξ` with `X` from the target and `ξ`
/// standard Gaussian: the forward process at time `t ≥ 0`.
pub fn forward_marginal_sample(
    target: &TargetSpec,
    t: f64,
    n: usize,
    seed: u64,
) -> Result<SampleMatrix> {
    target.validate()?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::validation(format!("forward time must be >= 0, got {t}")));
    }
    if n == 0 {
        return Err(Error::validation("need at least one sample"));
    }
    let d = target.dim();
    let alpha = (-t).exp();
    let beta = (-f64::exp_m1(-2.0 * t)).sqrt();
    let mut out = SampleMatrix::zeros(n, d);
    let mut x = vec![0.0; d];
    for i in 0..n {
        let mut rng = chain_rng(seed, i as u64, Lane::Reference);
        target.sample_into(&mut rng, &mut x);
        let row = &mut out.data[i * d..(i + 1) * d];
        if beta == 0.0 {
            row.copy_from_slice(&x);
        } else {
            for j in 0..d {
                let xi: f64 = StandardNormal.sample(&mut rng);
                row[j] = alpha * x[j] + beta * xi;
            }
        }
    }
    Ok(out)
}

/// Per-chunk partial results of a batched run, reduced in chunk order.
struct ChunkOut {
    rows: Vec<f64>,
    traj_rows: Vec<Vec<f64>>,
    norm_sums: Vec<f64>,
    oracle_calls: Vec<u64>,
}

/// Runs the reverse iteration for every chain and collects the endpoints.
///
/// `Z_0 ~ γ^D`; each step queries the oracle at backward time `T − t_k` and
/// state `Z_k`, then applies [`ddpm_step`]. A non-finite state aborts the
/// run with the chain id and step index. Deterministic given the seed,
/// independent of worker count.
pub fn run_ddpm(config: &SamplerConfig) -> Result<RunResult> {
    config.validate()?;
    let schedule = &config.schedule;
    let d = config.oracle.dim();
    let n = config.n_chains;
    let n_steps = schedule.num_steps();
    let recorded: Vec<usize> = match config.record_trajectory {
        None => Vec::new(),
        Some(m) => {
            let mut idx: Vec<usize> =
                (0..=n_steps).filter(|k| k % m == 0 || *k == n_steps).collect();
            idx.dedup();
            idx
        }
    };

    let n_chunks = n.div_ceil(CHUNK_ROWS);
    let chunk_results: Vec<Result<ChunkOut>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let start = chunk * CHUNK_ROWS;
            let rows_here = CHUNK_ROWS.min(n - start);
            let mut out = ChunkOut {
                rows: vec![0.0; rows_here * d],
                traj_rows: vec![vec![0.0; rows_here * d]; recorded.len()],
                norm_sums: vec![0.0; n_steps + 1],
                oracle_calls: vec![0; n_steps],
            };
            let mut score = vec![0.0; d];
            let mut xi = vec![0.0; d];
            let mut z = vec![0.0; d];
            for local in 0..rows_here {
                let chain = (start + local) as u64;
                let mut rng_xi = chain_rng(config.seed, chain, Lane::Xi);
                let mut rng_oracle = chain_rng(config.seed, chain, Lane::Oracle);
                for v in z.iter_mut() {
                    *v = StandardNormal.sample(&mut rng_xi);
                }
                out.norm_sums[0] += sq_norm(&z).sqrt();
                if let Some(slot) = recorded.iter().position(|&r| r == 0) {
                    out.traj_rows[slot][local * d..(local + 1) * d].copy_from_slice(&z);
                }
                for k in 0..n_steps {
                    let t_query = schedule.query_time(k);
                    config.oracle.query_into(t_query, &z, &mut score, &mut rng_oracle)?;
                    out.oracle_calls[k] += 1;
                    for v in xi.iter_mut() {
                        *v = StandardNormal.sample(&mut rng_xi);
                    }
                    ddpm_step_in_place(&mut z, schedule.steps[k], &score, &xi);
                    if z.iter().any(|v| !v.is_finite()) {
                        return Err(Error::numerical(format!(
                            "non-finite state in chain {chain} after step {k} \
                             (t = {}, oracle {})",
                            schedule.times[k + 1],
                            config.oracle.descriptor()
                        )));
                    }
                    out.norm_sums[k + 1] += sq_norm(&z).sqrt();
                    if let Some(slot) = recorded.iter().position(|&r| r == k + 1) {
                        out.traj_rows[slot][local * d..(local + 1) * d].copy_from_slice(&z);
                    }
                }
                out.rows[local * d..(local + 1) * d].copy_from_slice(&z);
            }
            Ok(out)
        })
        .collect();

    let mut outputs = SampleMatrix::zeros(n, d);
    let mut trajectory_states: Vec<SampleMatrix> =
        recorded.iter().map(|_| SampleMatrix::zeros(n, d)).collect();
    let mut norm_sums = vec![0.0; n_steps + 1];
    let mut norm_carry = vec![0.0; n_steps + 1];
    let mut oracle_calls = vec![0u64; n_steps];
    for (chunk, res) in chunk_results.into_iter().enumerate() {
        let part = res?;
        let start = chunk * CHUNK_ROWS;
        outputs.data[start * d..start * d + part.rows.len()].copy_from_slice(&part.rows);
        for (slot, rows) in part.traj_rows.iter().enumerate() {
            trajectory_states[slot].data[start * d..start * d + rows.len()]
                .copy_from_slice(rows);
        }
        for (k, &s) in part.norm_sums.iter().enumerate() {
            // Kahan accumulation across chunks, in chunk order.
            let y = s - norm_carry[k];
            let t = norm_sums[k] + y;
            norm_carry[k] = (t - norm_sums[k]) - y;
            norm_sums[k] = t;
        }
        for (k, &c) in part.oracle_calls.iter().enumerate() {
            oracle_calls[k] += c;
        }
    }

    let mean_norm_per_step = norm_sums.iter().map(|s| s / n as f64).collect();
    let total_oracle_calls = oracle_calls.iter().sum();
    Ok(RunResult {
        outputs,
        diagnostics: RunDiagnostics {
            mean_norm_per_step,
            oracle_calls_per_step: oracle_calls,
            total_oracle_calls,
        },
        provenance: Provenance {
            seed: config.seed,
            schedule_digest: schedule.digest(),
            oracle: config.oracle.descriptor(),
        },
        trajectory: if recorded.is_empty() {
            None
        } else {
            Some(Trajectory { indices: recorded, states: trajectory_states })
        },
    })
}

/// Output of [`run_paired`].
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRun {
    /// Endpoints of the exact-score chains.
    pub exact: SampleMatrix,
    /// Endpoints of the noisy-oracle chains.
    pub noisy: SampleMatrix,
    /// `√(mean over chains of ‖Z_noisy − Z_exact‖²)`: the coupled endpoint
    /// deviation attributable to the oracle's perturbation.
    pub rms_deviation: f64,
}

/// Advances an exact-score chain and a perturbed-oracle chain through the
/// same initialization and the same Brownian increments, per chain.
///
/// The two endpoint clouds are identically coupled realizations whose gap
/// is caused by the oracle perturbation alone, so `rms_deviation` measures
/// the noise-attributable transport displacement directly — with the
/// statistical noise of the shared Brownian path cancelled.
pub fn run_paired(
    schedule: &Schedule,
    oracle: &ScoreOracle,
    n_chains: usize,
    seed: u64,
) -> Result<PairedRun> {
    if n_chains == 0 {
        return Err(Error::validation("n_chains must be at least 1"));
    }
    let exact_oracle = ScoreOracle::exact(oracle.target.clone())?;
    let d = oracle.dim();
    let n_steps = schedule.num_steps();

    let n_chunks = n_chains.div_ceil(CHUNK_ROWS);
    let chunk_results: Vec<Result<(Vec<f64>, Vec<f64>, f64)>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let start = chunk * CHUNK_ROWS;
            let rows_here = CHUNK_ROWS.min(n_chains - start);
            let mut rows_e = vec![0.0; rows_here * d];
            let mut rows_n = vec![0.0; rows_here * d];
            let mut dev_sq = 0.0;
            let mut score = vec![0.0; d];
            let mut xi = vec![0.0; d];
            let mut z_e = vec![0.0; d];
            let mut z_n = vec![0.0; d];
            for local in 0..rows_here {
                let chain = (start + local) as u64;
                let mut rng_xi = chain_rng(seed, chain, Lane::Xi);
                let mut rng_oracle = chain_rng(seed, chain, Lane::Oracle);
                for j in 0..d {
                    let z0: f64 = StandardNormal.sample(&mut rng_xi);
                    z_e[j] = z0;
                    z_n[j] = z0;
                }
                for k in 0..n_steps {
                    let t_query = schedule.query_time(k);
                    let h = schedule.steps[k];
                    for v in xi.iter_mut() {
                        *v = StandardNormal.sample(&mut rng_xi);
                    }
                    exact_oracle.query_into(t_query, &z_e, &mut score, &mut rng_oracle)?;
                    ddpm_step_in_place(&mut z_e, h, &score, &xi);
                    oracle.query_into(t_query, &z_n, &mut score, &mut rng_oracle)?;
                    ddpm_step_in_place(&mut z_n, h, &score, &xi);
                    if z_e.iter().chain(z_n.iter()).any(|v| !v.is_finite()) {
                        return Err(Error::numerical(format!(
                            "non-finite state in paired chain {chain} after step {k}"
                        )));
                    }
                }
                rows_e[local * d..(local + 1) * d].copy_from_slice(&z_e);
                rows_n[local * d..(local + 1) * d].copy_from_slice(&z_n);
                let mut gap = 0.0;
                for j in 0..d {
                    gap += (z_n[j] - z_e[j]) * (z_n[j] - z_e[j]);
                }
                dev_sq += gap;
            }
            Ok((rows_e, rows_n, dev_sq))
        })
        .collect();

    let mut exact = SampleMatrix::zeros(n_chains, d);
    let mut noisy = SampleMatrix::zeros(n_chains, d);
    let mut dev_parts = Vec::with_capacity(n_chunks);
    for (chunk, res) in chunk_results.into_iter().enumerate() {
        let (rows_e, rows_n, dev_sq) = res?;
        let start = chunk * CHUNK_ROWS;
        exact.data[start * d..start * d + rows_e.len()].copy_from_slice(&rows_e);
        noisy.data[start * d..start * d + rows_n.len()].copy_from_slice(&rows_n);
        dev_parts.push(dev_sq);
    }
    let rms_deviation = (kahan_sum(dev_parts.into_iter()) / n_chains as f64).sqrt();
    Ok(PairedRun { exact, noisy, rms_deviation })
}

/// Advances one chain per grid of a nested family through one shared
/// Brownian increment stream, drawn on the finest grid.
///
/// All grids must share `(t1, a, delta)` and have `k0`s that divide the
/// largest `k0` by a power of two; the grid times then nest bitwise (see
/// the schedule module docs), so each coarse step spans a whole number of
/// fine segments. Per chain, one initialization and one increment per fine
/// segment are drawn; a coarse cell applies its drift at its own
/// boundaries and absorbs every fine-segment increment in between. The
/// returned endpoint clouds are therefore *coupled*: they differ only
/// through discretization, not through sampling noise.
///
/// The anchor (finest) grid's own cell reproduces [`run_ddpm`] on that grid
/// bit for bit.
pub fn run_anchored_family(
    oracle: &ScoreOracle,
    cells: &[Schedule],
    n_chains: usize,
    seed: u64,
) -> Result<Vec<SampleMatrix>> {
    if cells.is_empty() {
        return Err(Error::validation("need at least one grid"));
    }
    if n_chains == 0 {
        return Err(Error::validation("n_chains must be at least 1"));
    }
    let d = oracle.dim();
    let anchor_idx =
        (0..cells.len()).max_by_key(|&i| cells[i].params.k0).expect("nonempty cells");
    let anchor = &cells[anchor_idx];
    let k0_anchor = anchor.params.k0;

    // Validate nesting: shared (t1, a, delta), power-of-two k0 ratios, and
    // bitwise-equal shared time points.
    let mut maps: Vec<Vec<usize>> = Vec::with_capacity(cells.len());
    for cell in cells {
        let p = &cell.params;
        let pa = &anchor.params;
        if p.t1 != pa.t1 || p.a != pa.a || p.delta != pa.delta {
            return Err(Error::validation(
                "anchored family requires identical (t1, a, delta) across grids",
            ));
        }
        if k0_anchor % p.k0 != 0 || !(k0_anchor / p.k0).is_power_of_two() {
            return Err(Error::validation(format!(
                "grid k0 = {} does not divide the anchor k0 = {k0_anchor} by a power of two",
                p.k0
            )));
        }
        let ratio = k0_anchor / p.k0;
        let mut map: Vec<usize> = (0..=2 * p.k0).map(|k| k * ratio).collect();
        map.push(2 * k0_anchor + 1); // terminal point T
        for (k, &anchor_k) in map.iter().enumerate() {
            if cell.times[k].to_bits() != anchor.times[anchor_k].to_bits() {
                return Err(Error::validation(format!(
                    "grid times do not nest bitwise at index {k}; \
                     grids must come from identical parameters"
                )));
            }
        }
        maps.push(map);
    }

    let n_cells = cells.len();
    let anchor_steps = anchor.num_steps();
    let n_chunks = n_chains.div_ceil(CHUNK_ROWS);
    let chunk_results: Vec<Result<Vec<Vec<f64>>>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let start = chunk * CHUNK_ROWS;
            let rows_here = CHUNK_ROWS.min(n_chains - start);
            let mut rows: Vec<Vec<f64>> = vec![vec![0.0; rows_here * d]; n_cells];
            let mut score = vec![0.0; d];
            let mut states: Vec<Vec<f64>> = vec![vec![0.0; d]; n_cells];
            // Next pending step per cell, as (cell step index).
            let mut next_step = vec![0usize; n_cells];
            for local in 0..rows_here {
                let chain = (start + local) as u64;
                let mut rng_xi = chain_rng(seed, chain, Lane::Xi);
                let mut rng_oracle = chain_rng(seed, chain, Lane::Oracle);
                let mut z0 = vec![0.0; d];
                for v in z0.iter_mut() {
                    *v = StandardNormal.sample(&mut rng_xi);
                }
                for (c, state) in states.iter_mut().enumerate() {
                    state.copy_from_slice(&z0);
                    next_step[c] = 0;
                }
                for j in 0..anchor_steps {
                    // Cells whose next boundary sits at anchor index j apply
                    // their drift before this segment's noise is drawn.
                    for c in 0..n_cells {
                        let k = next_step[c];
                        if k < cells[c].num_steps() && maps[c][k] == j {
                            let t_query = cells[c].query_time(k);
                            oracle.query_into(
                                t_query,
                                &states[c],
                                &mut score,
                                &mut rng_oracle,
                            )?;
                            let h = cells[c].steps[k];
                            for v in 0..d {
                                states[c][v] =
                                    (1.0 + h) * states[c][v] + 2.0 * h * score[v];
                            }
                            next_step[c] = k + 1;
                        }
                    }
                    // One shared increment per fine segment, absorbed by
                    // every cell.
                    let noise_scale = (2.0 * anchor.steps[j]).sqrt();
                    for v in 0..d {
                        let xi: f64 = StandardNormal.sample(&mut rng_xi);
                        let push = noise_scale * xi;
                        for state in states.iter_mut() {
                            state[v] += push;
                        }
                    }
                }
                for (c, state) in states.iter().enumerate() {
                    if state.iter().any(|v| !v.is_finite()) {
                        return Err(Error::numerical(format!(
                            "non-finite state in chain {chain}, grid k0 = {}",
                            cells[c].params.k0
                        )));
                    }
                    debug_assert_eq!(next_step[c], cells[c].num_steps());
                    rows[c][local * d..(local + 1) * d].copy_from_slice(state);
                }
            }
            Ok(rows)
        })
        .collect();

    let mut outputs: Vec<SampleMatrix> =
        (0..n_cells).map(|_| SampleMatrix::zeros(n_chains, d)).collect();
    for (chunk, res) in chunk_results.into_iter().enumerate() {
        let rows = res?;
        let start = chunk * CHUNK_ROWS;
        for (c, cell_rows) in rows.into_iter().enumerate() {
            outputs[c].data[start * d..start * d + cell_rows.len()]
                .copy_from_slice(&cell_rows);
        }
    }
    Ok(outputs)
}

//! Regression oracles from trained networks: ground-truth activation
//! profiles over many seeds, per-node per-step likelihood-based surprise
//! via kernel density estimation, and clean/mutant verdicts including
//! structural-change kills.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::episode::{run_episode, EpisodeOptions, GameContext};
use crate::neat::{Genome, IdSource, ScratchIds};
use crate::rng::Pcg32;

/// Default kill threshold on the surprise value.
pub const DEFAULT_LSA_THRESHOLD: f64 = 30.0;

/// Default number of ground-truth recording runs.
pub const DEFAULT_REPETITIONS: u32 = 100;

/// Lower bound for KDE bandwidths.
pub const BANDWIDTH_FLOOR: f64 = 1e-3;

/// Log-density floor; -log of it caps the finite surprise scale.
const LOG_DENSITY_MIN: f64 = -1e12;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum OracleError {
    #[error("ground truth requires at least 2 repetitions, got {0}")]
    TooFewRepetitions(u32),
    #[error("profile was recorded by a structurally different network")]
    SignatureMismatch,
    #[error("no samples for node {node} at any step")]
    UnknownNode { node: u32 },
}

/// Activation samples for one (hidden node, step) cell.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CellProfile {
    pub samples: Vec<f64>,
    pub bandwidth: f64,
    /// All recorded samples are identical: any deviation is suspicious.
    pub constant: bool,
}

/// Ground-truth activation profile of one network on the clean program.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GroundTruthProfile {
    /// (node id, step) -> samples. Serialized with string keys.
    #[serde(with = "cell_map")]
    pub cells: BTreeMap<(u32, u64), CellProfile>,
    /// Per-node pooled samples across all steps, the fallback for steps
    /// never seen during recording.
    #[serde(with = "pooled_map")]
    pub pooled: BTreeMap<u32, CellProfile>,
    pub seeds: Vec<u64>,
    pub repetitions: u32,
    pub structural_signature: u64,
    /// Structural changes observed while recording on the clean program
    /// (episodes were truncated at the change step).
    pub recording_anomalies: u32,
}

mod cell_map {
    use super::CellProfile;
    use std::collections::BTreeMap;

    pub fn serialize<S: serde::Serializer>(
        map: &BTreeMap<(u32, u64), CellProfile>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let stringly: BTreeMap<String, &CellProfile> =
            map.iter().map(|(&(n, t), v)| (format!("{n}:{t}"), v)).collect();
        serde::Serialize::serialize(&stringly, s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<(u32, u64), CellProfile>, D::Error> {
        let stringly: BTreeMap<String, CellProfile> = serde::Deserialize::deserialize(d)?;
        let mut out = BTreeMap::new();
        for (k, v) in stringly {
            let (n, t) = k
                .split_once(':')
                .ok_or_else(|| serde::de::Error::custom("bad cell key"))?;
            out.insert(
                (
                    n.parse().map_err(serde::de::Error::custom)?,
                    t.parse().map_err(serde::de::Error::custom)?,
                ),
                v,
            );
        }
        Ok(out)
    }
}

mod pooled_map {
    use super::CellProfile;
    use std::collections::BTreeMap;

    pub fn serialize<S: serde::Serializer>(
        map: &BTreeMap<u32, CellProfile>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let stringly: BTreeMap<String, &CellProfile> =
            map.iter().map(|(&n, v)| (n.to_string(), v)).collect();
        serde::Serialize::serialize(&stringly, s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<u32, CellProfile>, D::Error> {
        let stringly: BTreeMap<String, CellProfile> = serde::Deserialize::deserialize(d)?;
        let mut out = BTreeMap::new();
        for (k, v) in stringly {
            out.insert(k.parse().map_err(serde::de::Error::custom)?, v);
        }
        Ok(out)
    }
}

/// Gaussian-kernel log density log((1/(n h)) * sum phi((x - xi)/h)),
/// computed with log-sum-exp for stability.
pub fn kde_log_density(samples: &[f64], bandwidth: f64, query: f64) -> f64 {
    assert!(!samples.is_empty(), "kde needs samples");
    assert!(bandwidth > 0.0, "kde needs a positive bandwidth");
    let n = samples.len() as f64;
    let log_norm = -(n * bandwidth * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let exponents: Vec<f64> = samples
        .iter()
        .map(|&x| {
            let z = (query - x) / bandwidth;
            -0.5 * z * z
        })
        .collect();
    let max = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return LOG_DENSITY_MIN;
    }
    let sum: f64 = exponents.iter().map(|e| (e - max).exp()).sum();
    (log_norm + max + sum.ln()).max(LOG_DENSITY_MIN)
}

/// Silverman's rule of thumb with an interquartile-range guard and a
/// floor, for one cell's samples.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return BANDWIDTH_FLOOR;
    }
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    (0.9 * spread * n.powf(-0.2)).max(BANDWIDTH_FLOOR)
}

/// Linear-interpolation quantile on sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Sentinel surprise for deviations from a constant ground truth.
pub const CONSTANT_DEVIATION_LSA: f64 = f64::INFINITY;

/// Likelihood-based surprise of one activation against the profile cell:
/// max(0, -log density). Constant cells score 0 on exact agreement and an
/// infinite sentinel on any deviation. Unknown (node, step) pairs fall
/// back to the node's pooled all-step samples.
pub fn lsa(
    profile: &GroundTruthProfile,
    node: u32,
    step: u64,
    activation: f64,
) -> Result<f64, OracleError> {
    let cell = match profile.cells.get(&(node, step)) {
        Some(cell) => cell,
        None => profile.pooled.get(&node).ok_or(OracleError::UnknownNode { node })?,
    };
    if cell.constant {
        let reference = cell.samples[0];
        return Ok(if activation == reference { 0.0 } else { CONSTANT_DEVIATION_LSA });
    }
    Ok((-kde_log_density(&cell.samples, cell.bandwidth, activation)).max(0.0))
}

/// Records per-(node, step) activation samples by replaying the network on
/// `repetitions` fresh seeds of the clean program.
pub fn collect_ground_truth(
    genome: &Genome,
    ctx: &GameContext,
    repetitions: u32,
    max_steps: u64,
    rng: &mut Pcg32,
) -> Result<GroundTruthProfile, OracleError> {
    if repetitions < 2 {
        return Err(OracleError::TooFewRepetitions(repetitions));
    }
    let seeds: Vec<u64> = (0..repetitions).map(|_| rng.next_u64()).collect();
    let options = EpisodeOptions { max_steps, record_trace: true };

    let episodes: Vec<_> = seeds
        .par_iter()
        .map(|&seed| {
            let mut ids = IdSource::Scratch(ScratchIds::for_genome(genome));
            run_episode(genome, ctx, seed, None, &options, &mut ids)
        })
        .collect();

    let mut cells: BTreeMap<(u32, u64), Vec<f64>> = BTreeMap::new();
    let mut pooled: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut anomalies = 0;
    for episode in &episodes {
        // a structural change on the clean program is recorded and the
        // trace truncated at the step where it happened
        let cutoff = if episode.structural_changes.is_empty() {
            u64::MAX
        } else {
            anomalies += 1;
            episode.activation_trace.steps().saturating_sub(1)
        };
        for (&(node, step), &value) in &episode.activation_trace.values {
            if step >= cutoff {
                continue;
            }
            cells.entry((node, step)).or_default().push(value);
            pooled.entry(node).or_default().push(value);
        }
    }

    let finish = |samples: Vec<f64>| -> CellProfile {
        let constant = samples.windows(2).all(|w| w[0] == w[1]);
        let bandwidth = if constant { BANDWIDTH_FLOOR } else { silverman_bandwidth(&samples) };
        CellProfile { samples, bandwidth, constant }
    };
    Ok(GroundTruthProfile {
        cells: cells.into_iter().map(|(k, v)| (k, finish(v))).collect(),
        pooled: pooled.into_iter().map(|(k, v)| (k, finish(v))).collect(),
        seeds,
        repetitions,
        structural_signature: genome.structural_signature(),
        recording_anomalies: anomalies,
    })
}

/// Why a suspect execution was flagged.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum VerdictReason {
    Exceedance { node: u32, step: u64, lsa: f64 },
    StructuralChange { description: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Clean,
    Mutant,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Verdict {
    pub decision: Decision,
    pub reasons: Vec<VerdictReason>,
    pub max_lsa: f64,
}

/// Runs the network on the suspect program over the given seeds and flags
/// it as a mutant if any single (node, step) surprise exceeds the
/// threshold or the network structure had to change. Reasons list every
/// exceedance.
pub fn judge(
    genome: &Genome,
    suspect: &GameContext,
    profile: &GroundTruthProfile,
    threshold: f64,
    seeds: &[u64],
    max_steps: u64,
) -> Result<Verdict, OracleError> {
    if profile.structural_signature != genome.structural_signature() {
        return Err(OracleError::SignatureMismatch);
    }
    let options = EpisodeOptions { max_steps, record_trace: true };
    let mut reasons = Vec::new();
    let mut max_lsa: f64 = 0.0;
    for &seed in seeds {
        let mut ids = IdSource::Scratch(ScratchIds::for_genome(genome));
        let episode = run_episode(genome, suspect, seed, None, &options, &mut ids);
        for change in &episode.structural_changes {
            reasons.push(VerdictReason::StructuralChange {
                description: format!("{change:?}"),
            });
        }
        for (&(node, step), &value) in &episode.activation_trace.values {
            let s = lsa(profile, node, step, value)?;
            max_lsa = max_lsa.max(s);
            if s > threshold {
                reasons.push(VerdictReason::Exceedance { node, step, lsa: s });
            }
        }
    }
    let decision = if reasons.is_empty() { Decision::Clean } else { Decision::Mutant };
    Ok(Verdict { decision, reasons, max_lsa })
}

pub fn profile_to_json(profile: &GroundTruthProfile) -> String {
    serde_json::to_string(profile).expect("profile serializes")
}

pub fn profile_from_json(text: &str) -> Result<GroundTruthProfile, serde_json::Error> {
    serde_json::from_str(text)
}

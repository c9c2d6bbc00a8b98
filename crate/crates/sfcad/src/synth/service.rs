//! Latent service state: stress trajectories, response time, availability,
//! and SLA labels.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::SlaThresholds;
use crate::error::Result;

use super::{FaultKind, ScenarioConfig};

const KINDS: usize = FaultKind::ALL.len();

/// Per-step, per-VNF, per-kind stress in [0, 1]: severity times the ramp
/// profile of every active fault, summed (and capped at 1).
pub struct StressTrajectory {
    v: usize,
    total_steps: usize,
    values: Vec<f64>,
}

impl StressTrajectory {
    pub fn get(&self, t: usize, vnf: usize, kind: FaultKind) -> f64 {
        self.values[(t * self.v + vnf) * KINDS + kind.index()]
    }

    /// Total stress on one VNF at one step, over all kinds.
    pub fn vnf_total(&self, t: usize, vnf: usize) -> f64 {
        let base = (t * self.v + vnf) * KINDS;
        self.values[base..base + KINDS].iter().sum()
    }

    /// Stress averaged over the trailing `lag` steps (fewer near the start).
    pub fn lagged(&self, t: usize, vnf: usize, kind: FaultKind, lag: usize) -> f64 {
        let from = t.saturating_sub(lag - 1);
        let n = (t - from + 1) as f64;
        (from..=t).map(|s| self.get(s, vnf, kind)).sum::<f64>() / n
    }

    pub fn len(&self) -> usize {
        self.total_steps
    }

    pub fn is_empty(&self) -> bool {
        self.total_steps == 0
    }
}

/// Ramp profile of a fault at step `t`: linear 3-step ramp in and out,
/// plateau 1 in between, 0 outside the window.
pub fn ramp(start: usize, duration: usize, t: usize) -> f64 {
    if t < start || t >= start + duration {
        return 0.0;
    }
    let ramp_in = (t - start + 1) as f64 / 3.0;
    let ramp_out = (start + duration - t) as f64 / 3.0;
    ramp_in.min(ramp_out).min(1.0)
}

/// Expands the fault schedule into the full stress trajectory.
pub fn stress_trajectory(config: &ScenarioConfig) -> Result<StressTrajectory> {
    config.validate()?;
    let v = config.vnf_chain.len();
    let mut values = vec![0.0; config.total_steps * v * KINDS];
    for f in &config.faults {
        for t in f.start..f.start + f.duration {
            let level = f.severity * ramp(f.start, f.duration, t);
            let slot = &mut values[(t * v + f.target_vnf) * KINDS + f.kind.index()];
            *slot = (*slot + level).min(1.0);
        }
    }
    Ok(StressTrajectory {
        v,
        total_steps: config.total_steps,
        values,
    })
}

/// Per-step response time (ms) and request success rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentServiceState {
    pub response_time_ms: Vec<f64>,
    pub success_rate: Vec<f64>,
}

/// Derives the latent service state from the stress trajectory:
/// `rt = base * (1 + sum w_kind * lagged_stress) + noise` and
/// `success = exp(-3 * weighted loss/surge stress) * (1 - |noise|)`.
/// Response time never decreases when any stress increases.
pub fn derive_service_state(
    stress: &StressTrajectory,
    config: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
) -> LatentServiceState {
    let latent = &config.latent;
    let rt_noise = Normal::new(0.0, latent.response_noise_std.max(1e-300)).expect("std");
    let sr_noise = Normal::new(0.0, latent.availability_noise_std.max(1e-300)).expect("std");
    let v = config.vnf_chain.len();
    let lag = latent.lag_steps.max(1);

    let mut response = Vec::with_capacity(stress.len());
    let mut success = Vec::with_capacity(stress.len());
    for t in 0..stress.len() {
        let mut load = 0.0;
        let mut avail_x = 0.0;
        for vnf in 0..v {
            for kind in FaultKind::ALL {
                let s = stress.lagged(t, vnf, kind, lag);
                load += latent.response_weights.get(kind) * s;
                match kind {
                    FaultKind::PacketLoss => {
                        avail_x += latent.availability_weights.packet_loss * s
                    }
                    FaultKind::TrafficSurge => {
                        avail_x += latent.availability_weights.traffic_surge * s
                    }
                    _ => {}
                }
            }
        }
        let rt = latent.base_response_ms * (1.0 + load) + rt_noise.sample(rng);
        response.push(rt.max(0.1));
        let drop_x = (avail_x - latent.availability_deadzone).max(0.0);
        let sr = (-3.0 * drop_x).exp() * (1.0 - sr_noise.sample(rng).abs());
        success.push(sr.clamp(0.0, 1.0));
    }
    LatentServiceState {
        response_time_ms: response,
        success_rate: success,
    }
}

/// `label_t = 1` iff the response-time limit is exceeded or the success rate
/// falls below the availability floor.
pub fn sla_label(state: &LatentServiceState, sla: SlaThresholds) -> Vec<u8> {
    state
        .response_time_ms
        .iter()
        .zip(&state.success_rate)
        .map(|(&rt, &sr)| u8::from(rt > sla.response_time_ms || sr < sla.availability_floor))
        .collect()
}

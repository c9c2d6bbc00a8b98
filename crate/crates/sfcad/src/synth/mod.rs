//! Synthetic SFC monitoring data: per-VNF baseline metric processes,
//! scheduled fault injection with chain propagation, a latent service model
//! (response time and availability), and SLA-derived labels.
//!
//! Labels are a deterministic function of the injected faults through the
//! latent model; metric noise and observation glitches never touch them.

mod generate;
mod service;

pub use generate::generate;
pub use service::{derive_service_state, sla_label, stress_trajectory, LatentServiceState,
                  StressTrajectory};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{SlaThresholds, METRIC_COLUMNS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    CpuStress,
    MemStress,
    DiskIoStress,
    NetLatency,
    PacketLoss,
    TrafficSurge,
}

impl FaultKind {
    pub const ALL: [FaultKind; 6] = [
        FaultKind::CpuStress,
        FaultKind::MemStress,
        FaultKind::DiskIoStress,
        FaultKind::NetLatency,
        FaultKind::PacketLoss,
        FaultKind::TrafficSurge,
    ];

    pub fn index(&self) -> usize {
        Self::ALL.iter().position(|k| k == self).expect("member")
    }
}

/// One injected fault: a stress plateau with a 3-step ramp on each side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub start: usize,
    pub duration: usize,
    pub kind: FaultKind,
    /// Stress level at the plateau, in (0, 1].
    pub severity: f64,
    pub target_vnf: usize,
}

/// Baseline process of one metric: mean plus a slow sinusoidal drift plus
/// Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricBaseline {
    pub mean: f64,
    pub std: f64,
    pub drift_amp: f64,
    pub drift_period: f64,
}

/// Weights mapping per-kind stress onto the latent response time
/// (multiplicative on the base response time).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseWeights {
    pub cpu_stress: f64,
    pub mem_stress: f64,
    pub disk_io_stress: f64,
    pub net_latency: f64,
    pub packet_loss: f64,
    pub traffic_surge: f64,
}

impl Default for ResponseWeights {
    fn default() -> Self {
        ResponseWeights {
            cpu_stress: 2.0,
            mem_stress: 2.1,
            disk_io_stress: 2.1,
            net_latency: 2.2,
            packet_loss: 1.2,
            traffic_surge: 2.0,
        }
    }
}

impl ResponseWeights {
    pub fn get(&self, kind: FaultKind) -> f64 {
        match kind {
            FaultKind::CpuStress => self.cpu_stress,
            FaultKind::MemStress => self.mem_stress,
            FaultKind::DiskIoStress => self.disk_io_stress,
            FaultKind::NetLatency => self.net_latency,
            FaultKind::PacketLoss => self.packet_loss,
            FaultKind::TrafficSurge => self.traffic_surge,
        }
    }
}

/// Weights mapping stress onto the availability drop (success rate falls as
/// `exp(-3x)` of the weighted stress).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityWeights {
    pub packet_loss: f64,
    pub traffic_surge: f64,
}

impl Default for AvailabilityWeights {
    fn default() -> Self {
        AvailabilityWeights {
            packet_loss: 0.9,
            traffic_surge: 0.35,
        }
    }
}

/// Latent service model constants. Response time follows a short moving
/// average of the stress (system inertia), so labels lag the instantaneous
/// metrics by up to `lag_steps`. The availability drop only begins past
/// `availability_deadzone` of weighted stress; without it the success rate
/// would cross the SLA floor at microscopic stress and label fault onsets
/// before any metric shows them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentModel {
    pub base_response_ms: f64,
    pub response_noise_std: f64,
    pub availability_noise_std: f64,
    pub lag_steps: usize,
    pub availability_deadzone: f64,
    pub response_weights: ResponseWeights,
    pub availability_weights: AvailabilityWeights,
}

impl Default for LatentModel {
    fn default() -> Self {
        LatentModel {
            base_response_ms: 120.0,
            response_noise_std: 1.0,
            availability_noise_std: 5e-6,
            lag_steps: 3,
            availability_deadzone: 0.315,
            response_weights: ResponseWeights::default(),
            availability_weights: AvailabilityWeights::default(),
        }
    }
}

/// One-step observation glitches: inside a fault window the fault's metric
/// signature briefly collapses toward baseline; outside, a spurious fault
/// signature appears. Labels are unaffected either way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlitchModel {
    /// Per-(step, VNF) probability of a glitch.
    pub rate: f64,
    /// Multiplier on the fault signature during an in-fault dip.
    pub dampening: f64,
    /// Spurious-signature strength range outside faults.
    pub spike_min: f64,
    pub spike_max: f64,
}

impl Default for GlitchModel {
    fn default() -> Self {
        // spikes stay below the preset fault severities, so a persistent
        // full-strength signature is never mistakable for a glitch
        GlitchModel {
            rate: 0.012,
            dampening: 0.1,
            spike_min: 0.2,
            spike_max: 0.45,
        }
    }
}

/// Full description of one synthetic monitoring scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    /// Ordered VNF type names; also used as instance names.
    pub vnf_chain: Vec<String>,
    pub total_steps: usize,
    /// Per-metric baselines; metrics not listed use the built-in defaults.
    #[serde(default)]
    pub baselines: BTreeMap<String, MetricBaseline>,
    pub faults: Vec<FaultEvent>,
    pub sla: SlaThresholds,
    pub seed: u64,
    #[serde(default)]
    pub latent: LatentModel,
    #[serde(default)]
    pub glitches: GlitchModel,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vnf_chain.is_empty() {
            return Err(Error::Config("scenario needs at least one VNF".into()));
        }
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be positive".into()));
        }
        for (i, f) in self.faults.iter().enumerate() {
            if f.duration == 0 {
                return Err(Error::Config(format!("fault {i}: duration must be >= 1")));
            }
            if f.start >= self.total_steps || f.start + f.duration > self.total_steps {
                return Err(Error::Config(format!(
                    "fault {i}: window [{}, {}) outside [0, {})",
                    f.start,
                    f.start + f.duration,
                    self.total_steps
                )));
            }
            if !(f.severity > 0.0 && f.severity <= 1.0) {
                return Err(Error::Config(format!(
                    "fault {i}: severity {} outside (0, 1]",
                    f.severity
                )));
            }
            if f.target_vnf >= self.vnf_chain.len() {
                return Err(Error::Config(format!(
                    "fault {i}: target VNF {} beyond chain of {}",
                    f.target_vnf,
                    self.vnf_chain.len()
                )));
            }
        }
        for (name, b) in &self.baselines {
            if !METRIC_COLUMNS.contains(&name.as_str()) {
                return Err(Error::Config(format!("unknown metric `{name}`")));
            }
            if b.std < 0.0 || b.drift_period <= 0.0 {
                return Err(Error::Config(format!("metric `{name}`: bad baseline")));
            }
        }
        Ok(())
    }

    /// Baseline for a metric, falling back to the built-in table.
    pub fn baseline(&self, metric: &str) -> MetricBaseline {
        self.baselines
            .get(metric)
            .copied()
            .unwrap_or_else(|| default_baseline(metric))
    }
}

/// Built-in baseline table. CPU metrics are percentages; memory and disk are
/// MB-scale; I/O and traffic are byte/packet rates; latency is ms.
pub fn default_baseline(metric: &str) -> MetricBaseline {
    let (mean, std, drift_amp, drift_period) = match metric {
        "cpu_idle" => (85.0, 2.5, 4.0, 2880.0),
        "cpu_interrupt" => (0.5, 0.15, 0.1, 1440.0),
        "cpu_nice" => (0.2, 0.08, 0.05, 1700.0),
        "cpu_softirq" => (1.2, 0.3, 0.2, 2100.0),
        "cpu_steal" => (0.1, 0.04, 0.02, 1300.0),
        "cpu_system" => (5.0, 1.0, 1.0, 2400.0),
        "cpu_user" => (7.0, 1.5, 2.0, 2880.0),
        "cpu_wait" => (1.2, 0.4, 0.3, 1900.0),
        "mem_free" => (2200.0, 60.0, 120.0, 2880.0),
        "mem_buffered" => (310.0, 15.0, 20.0, 3600.0),
        "mem_cached" => (1250.0, 40.0, 60.0, 3100.0),
        "mem_used" => (1800.0, 50.0, 90.0, 2880.0),
        "disk_free" => (52000.0, 150.0, 100.0, 4000.0),
        "reserved" => (1024.0, 0.0, 0.0, 1.0),
        "disk_used" => (30500.0, 150.0, 120.0, 4100.0),
        "io_read" => (2.0e6, 3.0e5, 4.0e5, 2880.0),
        "io_write" => (1.5e6, 2.5e5, 3.0e5, 2500.0),
        "io_time" => (120.0, 25.0, 30.0, 2200.0),
        "network_rx_bytes" => (1.6e6, 2.0e5, 3.0e5, 2880.0),
        "network_tx_bytes" => (1.4e6, 1.8e5, 2.6e5, 2880.0),
        "network_rx_packets" => (1300.0, 140.0, 200.0, 2880.0),
        "network_tx_packets" => (1150.0, 120.0, 180.0, 2880.0),
        "network_latency" => (2.5, 0.5, 0.4, 2000.0),
        other => unreachable!("unknown metric {other}"),
    };
    MetricBaseline {
        mean,
        std,
        drift_amp,
        drift_period,
    }
}

/// Physical clipping per metric: CPU percentages to [0, 100], everything
/// else nonnegative.
pub fn clip(metric: &str, value: f64) -> f64 {
    if metric.starts_with("cpu_") {
        value.clamp(0.0, 100.0)
    } else {
        value.max(0.0)
    }
}

fn scheduled_faults(
    rng: &mut ChaCha8Rng,
    total_steps: usize,
    v: usize,
    gap_range: (usize, usize),
    duration_range: (usize, usize),
    severity_range: (f64, f64),
) -> Vec<FaultEvent> {
    // cycle through every (kind, target) combination in shuffled rounds so
    // each pattern recurs throughout the series (and thus in every split)
    let mut faults = Vec::new();
    let mut combos: Vec<(FaultKind, usize)> = Vec::new();
    let mut t = 40 + rng.gen_range(0..40);
    loop {
        let duration = rng.gen_range(duration_range.0..=duration_range.1);
        if t + duration + 20 >= total_steps {
            break;
        }
        if combos.is_empty() {
            use rand::seq::SliceRandom;
            combos = FaultKind::ALL
                .iter()
                .flat_map(|&k| (0..v).map(move |vnf| (k, vnf)))
                .collect();
            combos.shuffle(rng);
        }
        let (kind, target_vnf) = combos.pop().expect("refilled");
        faults.push(FaultEvent {
            start: t,
            duration,
            kind,
            severity: rng.gen_range(severity_range.0..=severity_range.1),
            target_vnf,
        });
        t += duration + rng.gen_range(gap_range.0..=gap_range.1);
    }
    faults
}

/// Web-service-like scenario: 5 VNFs (fw, ids, fm, dpi, lb), default SLA.
pub fn wsd_like(total_steps: usize, seed: u64) -> ScenarioConfig {
    let chain = ["fw", "ids", "fm", "dpi", "lb"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x77D5);
    let faults = scheduled_faults(&mut rng, total_steps, chain.len(), (45, 140), (35, 75), (0.65, 1.0));
    ScenarioConfig {
        name: "wsd-like".into(),
        vnf_chain: chain.iter().map(|s| s.to_string()).collect(),
        total_steps,
        baselines: BTreeMap::new(),
        faults,
        sla: SlaThresholds::DEFAULT,
        seed,
        latent: LatentModel::default(),
        glitches: GlitchModel::default(),
    }
}

/// Login-authentication-like scenario: 4 VNFs (fw, fm, dpi, ids), strict SLA.
pub fn lad_like(total_steps: usize, seed: u64) -> ScenarioConfig {
    let chain = ["fw", "fm", "dpi", "ids"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1AD2);
    let faults = scheduled_faults(&mut rng, total_steps, chain.len(), (45, 140), (35, 75), (0.65, 1.0));
    ScenarioConfig {
        name: "lad-like".into(),
        vnf_chain: chain.iter().map(|s| s.to_string()).collect(),
        total_steps,
        baselines: BTreeMap::new(),
        faults,
        sla: SlaThresholds::STRICT,
        seed,
        latent: LatentModel::default(),
        glitches: GlitchModel::default(),
    }
}

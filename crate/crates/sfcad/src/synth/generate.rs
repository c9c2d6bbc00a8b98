//! Metric rendering: baselines, fault signatures, chain propagation, and
//! observation glitches, all drawn from one seeded RNG stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Dataset, METRIC_COLUMNS};
use crate::error::Result;
use crate::tensor::Tensor;

use super::service::{derive_service_state, sla_label, stress_trajectory, LatentServiceState};
use super::{clip, FaultKind, ScenarioConfig};

fn metric_index(name: &str) -> usize {
    METRIC_COLUMNS
        .iter()
        .position(|m| *m == name)
        .expect("known metric")
}

/// Mean shifts a fault kind applies to its target VNF, at severity 1.
fn fault_offsets(kind: FaultKind) -> &'static [(&'static str, f64)] {
    match kind {
        FaultKind::CpuStress => &[
            ("cpu_idle", -45.0),
            ("cpu_user", 28.0),
            ("cpu_system", 12.0),
            ("cpu_wait", 4.0),
            ("cpu_softirq", 2.0),
        ],
        FaultKind::MemStress => &[
            ("mem_free", -900.0),
            ("mem_used", 850.0),
            ("mem_cached", -250.0),
            ("mem_buffered", -80.0),
        ],
        FaultKind::DiskIoStress => &[
            ("io_read", 6.0e6),
            ("io_write", 5.0e6),
            ("io_time", 600.0),
            ("cpu_wait", 8.0),
            ("disk_used", 800.0),
            ("disk_free", -800.0),
        ],
        FaultKind::NetLatency => &[
            ("network_latency", 45.0),
            ("network_rx_bytes", -3.5e5),
            ("network_tx_bytes", -3.0e5),
            ("cpu_wait", 2.0),
        ],
        FaultKind::PacketLoss => &[
            ("network_rx_packets", -650.0),
            ("network_tx_packets", -600.0),
            ("network_latency", 10.0),
            ("network_rx_bytes", -4.0e5),
            ("network_tx_bytes", -3.5e5),
        ],
        FaultKind::TrafficSurge => &[
            ("network_rx_bytes", 4.0e6),
            ("network_tx_bytes", 3.5e6),
            ("network_rx_packets", 2600.0),
            ("network_tx_packets", 2300.0),
            ("cpu_user", 10.0),
            ("cpu_system", 5.0),
            ("network_latency", 18.0),
            ("mem_cached", 150.0),
        ],
    }
}

/// Degradation seen by VNFs downstream of a stressed one (traffic arrives
/// late and thinned), applied at half the upstream severity.
const DOWNSTREAM_OFFSETS: [(&str, f64); 5] = [
    ("network_latency", 30.0),
    ("network_rx_bytes", -2.0e5),
    ("network_tx_bytes", -1.8e5),
    ("network_rx_packets", -250.0),
    ("network_tx_packets", -220.0),
];

/// Generates the labeled dataset for a scenario, deterministically per seed.
/// Also returns the latent service state the labels were derived from.
pub fn generate(config: &ScenarioConfig) -> Result<(Dataset, LatentServiceState)> {
    config.validate()?;
    let v = config.vnf_chain.len();
    let t_total = config.total_steps;
    let d = METRIC_COLUMNS.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let stress = stress_trajectory(config)?;
    let state = derive_service_state(&stress, config, &mut rng);
    let labels = sla_label(&state, config.sla);

    // per-(vnf, metric) drift phases
    let phases: Vec<f64> = (0..v * d)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    let baselines: Vec<_> = METRIC_COLUMNS.iter().map(|m| config.baseline(m)).collect();
    let noise: Vec<Normal<f64>> = baselines
        .iter()
        .map(|b| Normal::new(0.0, b.std.max(1e-300)).expect("std"))
        .collect();

    let mut frames = Vec::with_capacity(t_total);
    for t in 0..t_total {
        // fault signature per (vnf, metric) before glitching
        let mut signature = vec![0.0; v * d];
        for f in &config.faults {
            let level = f.severity * super::service::ramp(f.start, f.duration, t);
            if level == 0.0 {
                continue;
            }
            for &(metric, offset) in fault_offsets(f.kind) {
                signature[f.target_vnf * d + metric_index(metric)] += offset * level;
            }
            for downstream in f.target_vnf + 1..v {
                for &(metric, offset) in &DOWNSTREAM_OFFSETS {
                    signature[downstream * d + metric_index(metric)] += offset * level * 0.5;
                }
            }
        }

        // observation glitches: dampen a faulty VNF's signature or paint a
        // spurious one on a healthy VNF, for this step only
        for vnf in 0..v {
            if !rng.gen_bool(config.glitches.rate) {
                continue;
            }
            let row = &mut signature[vnf * d..(vnf + 1) * d];
            if row.iter().any(|&x| x != 0.0) {
                for x in row.iter_mut() {
                    *x *= config.glitches.dampening;
                }
            } else {
                let kind = FaultKind::ALL[rng.gen_range(0..FaultKind::ALL.len())];
                let strength = rng.gen_range(config.glitches.spike_min..=config.glitches.spike_max);
                for &(metric, offset) in fault_offsets(kind) {
                    row[metric_index(metric)] += offset * strength;
                }
            }
        }

        let mut values = Vec::with_capacity(v * d);
        for vnf in 0..v {
            for (j, metric) in METRIC_COLUMNS.iter().enumerate() {
                let b = &baselines[j];
                let drift = b.drift_amp
                    * (std::f64::consts::TAU * t as f64 / b.drift_period + phases[vnf * d + j])
                        .sin();
                let x = b.mean + drift + noise[j].sample(&mut rng) + signature[vnf * d + j];
                values.push(clip(metric, x));
            }
        }
        frames.push(Tensor::new(vec![v, d], values)?);
    }

    let dataset = Dataset::new(
        config.name.clone(),
        config.vnf_chain.clone(),
        config.sla,
        frames,
        labels,
    )?;
    Ok((dataset, state))
}

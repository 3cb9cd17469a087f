//! Cycle-approximate performance and energy model.

mod sim;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use sim::{simulate, simulate_with_trace, util_csv, SimError, UtilSample, ISSUE_OVERHEAD};

/// Accelerator configuration. All sizes are positive.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardwareConfig {
    pub clock_hz: u64,
    pub mu_count: usize,
    pub mu_rows: u64,
    pub mu_cols: u64,
    pub vu_count: usize,
    pub vu_cores: u64,
    pub vu_lanes: u64,
    pub uem_bytes: u64,
    pub tilehub_bytes: u64,
    /// Off-chip bandwidth in bytes per cycle.
    pub offchip_bw: u64,
    /// Off-chip access latency in cycles.
    pub offchip_latency: u64,
    pub dispatcher_queue: usize,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        Self {
            clock_hz: 1_000_000_000,
            mu_count: 1,
            mu_rows: 32,
            mu_cols: 128,
            vu_count: 2,
            vu_cores: 8,
            vu_lanes: 32,
            uem_bytes: 21 << 20,
            tilehub_bytes: 256 << 10,
            offchip_bw: 256,
            offchip_latency: 100,
            dispatcher_queue: 64,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("hardware parameter `{0}` must be positive")]
    NotPositive(&'static str),
    #[error("dispatcher queue of {queue} entries cannot hold {streams} streams")]
    QueueTooSmall { queue: usize, streams: usize },
}

impl HardwareConfig {
    pub fn validate(&self, streams: usize) -> Result<(), ConfigError> {
        let fields: [(&'static str, u64); 12] = [
            ("clock_hz", self.clock_hz),
            ("mu_count", self.mu_count as u64),
            ("mu_rows", self.mu_rows),
            ("mu_cols", self.mu_cols),
            ("vu_count", self.vu_count as u64),
            ("vu_cores", self.vu_cores),
            ("vu_lanes", self.vu_lanes),
            ("uem_bytes", self.uem_bytes),
            ("tilehub_bytes", self.tilehub_bytes),
            ("offchip_bw", self.offchip_bw),
            ("offchip_latency", self.offchip_latency),
            ("dispatcher_queue", self.dispatcher_queue as u64),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(ConfigError::NotPositive(name));
        }
        if self.dispatcher_queue < streams {
            return Err(ConfigError::QueueTooSmall {
                queue: self.dispatcher_queue,
                streams,
            });
        }
        Ok(())
    }

    pub fn vu_width(&self) -> u64 {
        self.vu_cores * self.vu_lanes
    }
}

/// Systolic-array cycles for an `n x k` by `k x m` product.
pub fn mu_cycles(n: u64, m: u64, k: u64, hw: &HardwareConfig) -> u64 {
    if n == 0 || m == 0 || k == 0 {
        return 0;
    }
    n.div_ceil(hw.mu_rows) * m.div_ceil(hw.mu_cols) * (k + hw.mu_rows + hw.mu_cols - 1)
}

/// Element-wise operator kinds with their vector-unit latency factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElwKind {
    Add,
    Sub,
    Mul,
    Div,
    Max,
    Exp,
    Relu,
    Sigmoid,
}

impl ElwKind {
    pub fn latency_factor(self) -> u64 {
        match self {
            ElwKind::Exp | ElwKind::Div | ElwKind::Sigmoid => 4,
            _ => 1,
        }
    }
}

/// Work submitted to a vector unit.
#[derive(Clone, Copy, Debug)]
pub enum VuWork<'a> {
    Elw { kind: ElwKind, items: u64, dim: u64 },
    Gemv { macs: u64 },
    /// Scatter or gather: per-vertex edge counts within the tile.
    Gop { degrees: &'a [u64], dim: u64 },
}

pub fn vu_cycles(work: VuWork<'_>, hw: &HardwareConfig) -> u64 {
    match work {
        VuWork::Elw { kind, items, dim } => (items * dim).div_ceil(hw.vu_width()) * kind.latency_factor(),
        VuWork::Gemv { macs } => macs.div_ceil(hw.vu_width()),
        VuWork::Gop { degrees, dim } => {
            let per_edge = dim.div_ceil(hw.vu_lanes);
            let n = hw.vu_cores as usize;
            let mut cores = vec![0u64; n];
            for (i, d) in degrees.iter().enumerate() {
                cores[i % n] += d * per_edge;
            }
            cores.into_iter().max().unwrap_or(0)
        }
    }
}

/// Off-chip transfer cycles: fixed latency plus bandwidth serialization.
pub fn mem_cycles(bytes: u64, hw: &HardwareConfig) -> u64 {
    if bytes == 0 {
        0
    } else {
        hw.offchip_latency + bytes.div_ceil(hw.offchip_bw)
    }
}

/// Channel occupancy of one transfer (excludes the latency, which overlaps).
pub fn mem_occupancy(bytes: u64, hw: &HardwareConfig) -> u64 {
    bytes.div_ceil(hw.offchip_bw)
}

/// Aggregate simulation statistics.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimStats {
    pub total_cycles: u64,
    pub unit_busy: BTreeMap<String, u64>,
    pub stream_stall: BTreeMap<String, u64>,
    pub offchip_read_bytes: u64,
    pub offchip_write_bytes: u64,
    pub onchip_bytes: u64,
    pub macs: u64,
    pub instructions: BTreeMap<String, u64>,
    pub tiles: u64,
    pub partitions: u64,
}

impl SimStats {
    pub fn offchip_bytes(&self) -> u64 {
        self.offchip_read_bytes + self.offchip_write_bytes
    }

    pub fn busy_total(&self) -> u64 {
        self.unit_busy.values().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyParams {
    pub e_mac_pj: f64,
    pub e_onchip_pj_per_byte: f64,
    pub e_offchip_pj_per_bit: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            e_mac_pj: 0.5,
            e_onchip_pj_per_byte: 1.0,
            e_offchip_pj_per_bit: 7.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub mac_pj: f64,
    pub onchip_pj: f64,
    pub offchip_pj: f64,
    pub total_pj: f64,
}

impl EnergyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("energy serializes")
    }
}

pub fn energy(stats: &SimStats, p: &EnergyParams) -> EnergyReport {
    let mac_pj = stats.macs as f64 * p.e_mac_pj;
    let onchip_pj = stats.onchip_bytes as f64 * p.e_onchip_pj_per_byte;
    let offchip_pj = (stats.offchip_bytes() * 8) as f64 * p.e_offchip_pj_per_bit;
    EnergyReport {
        mac_pj,
        onchip_pj,
        offchip_pj,
        total_pj: mac_pj + onchip_pj + offchip_pj,
    }
}

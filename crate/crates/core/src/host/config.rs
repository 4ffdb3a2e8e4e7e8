//! Node configuration (TOML) and power-cycle schedules.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::device::{AdcConfig, Injection};
use super::signal::SignalSource;
use crate::memory::Cell;
use crate::sched::energy::{PowerPoint, PowerTrace, TraceError};
use crate::vm::VmConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{0}")]
    Invalid(String),
}

/// Field present with power `p_uw` during `[on_us, off_us)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerInterval {
    pub on_us: u64,
    pub off_us: u64,
    pub p_uw: f64,
}

/// Energy-field schedule. Outside the intervals the harvest is zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerCycle {
    pub intervals: Vec<PowerInterval>,
}

impl PowerCycle {
    pub fn new(mut intervals: Vec<PowerInterval>) -> Result<Self, ConfigError> {
        intervals.sort_by_key(|i| i.on_us);
        for (k, iv) in intervals.iter().enumerate() {
            if iv.off_us <= iv.on_us || iv.p_uw < 0.0 || !iv.p_uw.is_finite() {
                return Err(ConfigError::Invalid(format!("bad power interval {k}")));
            }
            if k > 0 && iv.on_us < intervals[k - 1].off_us {
                return Err(ConfigError::Invalid(format!("power interval {k} overlaps")));
            }
        }
        Ok(PowerCycle { intervals })
    }

    /// Periodic field: on for `on_us`, off for `off_us`, `n` times.
    pub fn periodic(on_us: u64, off_us: u64, n: usize, p_uw: f64) -> Self {
        let intervals = (0..n as u64)
            .map(|k| {
                let t = k * (on_us + off_us);
                PowerInterval { on_us: t, off_us: t + on_us, p_uw }
            })
            .collect();
        PowerCycle { intervals }
    }

    pub fn to_trace(&self) -> PowerTrace {
        let mut pts: Vec<PowerPoint> = Vec::new();
        for iv in &self.intervals {
            match pts.last_mut() {
                Some(last) if last.time_us == iv.on_us => last.p_uw = iv.p_uw,
                _ => pts.push(PowerPoint { time_us: iv.on_us, p_uw: iv.p_uw }),
            }
            pts.push(PowerPoint { time_us: iv.off_us, p_uw: 0.0 });
        }
        PowerTrace::new(pts).expect("validated intervals")
    }

    /// Rows `on_us,off_us,p_uw` with a header.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, ConfigError> {
        let mut rd = csv::Reader::from_reader(r);
        let rows = rd.deserialize().collect::<Result<Vec<PowerInterval>, _>>()?;
        Self::new(rows)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ConfigError> {
        let mut wr = csv::Writer::from_writer(w);
        for iv in &self.intervals {
            wr.serialize(iv)?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    /// Storage capacity C (µJ).
    pub capacity_uj: f64,
    pub e0_uj: f64,
    /// Draw while executing (µW).
    pub p_d1_uw: f64,
    /// Stored energy needed to boot after a power loss.
    pub restart_uj: f64,
    /// Checkpoint and shut down below this level; defaults to two worst-case slices.
    pub save_below_uj: Option<f64>,
    pub cycle: PowerCycle,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            capacity_uj: 1000.0,
            e0_uj: 1000.0,
            p_d1_uw: 1000.0,
            restart_uj: 500.0,
            save_below_uj: None,
            cycle: PowerCycle::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeConfig {
    pub node_id: Cell,
    pub peers: Vec<Cell>,
    pub vm: VmConfig,
    pub adc: AdcConfig,
    pub signal: SignalSource,
    pub injections: Vec<Injection>,
    pub power: Option<PowerConfig>,
    /// Register the DSP library words.
    pub dsp: bool,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            node_id: 0,
            peers: Vec::new(),
            vm: VmConfig { cs: 16384, ..VmConfig::default() },
            adc: AdcConfig::default(),
            signal: SignalSource::default(),
            injections: Vec::new(),
            power: None,
            dsp: true,
        }
    }
}

impl NodeConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

//! Harvested power traces and the stored-energy account.
//!
//! Units: energy in µJ, power in µW, time in µs, so `E = P * t / 1e6`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("trace times must be strictly increasing (row {0})")]
    Order(usize),
    #[error("negative power at row {0}")]
    Negative(usize),
}

pub fn energy_uj(p_uw: f64, dt_us: f64) -> f64 {
    p_uw * dt_us / 1e6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub time_us: u64,
    pub p_uw: f64,
}

/// Piecewise-constant harvester power `P_S(t)`. Each point holds from its
/// time until the next one; before the first point the power is zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace {
    points: Vec<PowerPoint>,
}

impl PowerTrace {
    pub fn new(points: Vec<PowerPoint>) -> Result<Self, TraceError> {
        for (i, p) in points.iter().enumerate() {
            if p.p_uw < 0.0 || !p.p_uw.is_finite() {
                return Err(TraceError::Negative(i));
            }
            if i > 0 && p.time_us <= points[i - 1].time_us {
                return Err(TraceError::Order(i));
            }
        }
        Ok(PowerTrace { points })
    }

    pub fn constant(p_uw: f64) -> Self {
        PowerTrace { points: vec![PowerPoint { time_us: 0, p_uw }] }
    }

    /// Field present with power `p_uw` during each `[on, off)` interval.
    pub fn intervals(iv: &[(u64, u64)], p_uw: f64) -> Result<Self, TraceError> {
        let mut pts = Vec::new();
        for &(on, off) in iv {
            if off <= on {
                continue;
            }
            if let Some(last) = pts.last_mut() {
                let last: &mut PowerPoint = last;
                if last.time_us == on {
                    last.p_uw = p_uw;
                    pts.push(PowerPoint { time_us: off, p_uw: 0.0 });
                    continue;
                }
            }
            pts.push(PowerPoint { time_us: on, p_uw });
            pts.push(PowerPoint { time_us: off, p_uw: 0.0 });
        }
        Self::new(pts)
    }

    pub fn points(&self) -> &[PowerPoint] {
        &self.points
    }

    pub fn power_at(&self, t_us: u64) -> f64 {
        match self.points.partition_point(|p| p.time_us <= t_us) {
            0 => 0.0,
            i => self.points[i - 1].p_uw,
        }
    }

    pub fn max_power(&self) -> f64 {
        self.points.iter().map(|p| p.p_uw).fold(0.0, f64::max)
    }

    /// Time of the next power change strictly after `t_us`.
    pub fn next_change(&self, t_us: u64) -> Option<u64> {
        let i = self.points.partition_point(|p| p.time_us <= t_us);
        self.points.get(i).map(|p| p.time_us)
    }

    /// Constant-power pieces covering `[t0, t1)`.
    pub fn segments(&self, t0: u64, t1: u64) -> Vec<(u64, u64, f64)> {
        let mut out = Vec::new();
        let mut t = t0;
        while t < t1 {
            let end = self.next_change(t).map_or(t1, |n| n.min(t1));
            out.push((t, end, self.power_at(t)));
            t = end;
        }
        out
    }

    /// `∫ P_S dt` over `[t0, t1)` in µJ.
    pub fn energy_between(&self, t0: u64, t1: u64) -> f64 {
        self.segments(t0, t1).iter().map(|&(a, b, p)| energy_uj(p, (b - a) as f64)).sum()
    }

    /// Read `time_us,p_uw` rows; a header row is expected.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, TraceError> {
        let mut rd = csv::Reader::from_reader(r);
        let pts = rd.deserialize().collect::<Result<Vec<PowerPoint>, _>>()?;
        Self::new(pts)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TraceError> {
        let mut wr = csv::Writer::from_writer(w);
        for p in &self.points {
            wr.serialize(p)?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Cumulative energy flows of an account. At all times
/// `E = E0 + harvested - drained - spilled + shortfall`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub harvested: f64,
    pub drained: f64,
    /// Harvest lost because the storage was full.
    pub spilled: f64,
    /// Demand that could not be covered because the storage was empty.
    pub shortfall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyAccount {
    pub e: f64,
    pub e0: f64,
    pub c: f64,
    pub p_d1: f64,
    pub t1_us: f64,
    pub trace: PowerTrace,
    pub ledger: Ledger,
}

impl EnergyAccount {
    pub fn new(e0: f64, c: f64, p_d1: f64, t1_us: f64, trace: PowerTrace) -> Self {
        let e0 = e0.clamp(0.0, c.max(0.0));
        EnergyAccount { e: e0, e0, c: c.max(0.0), p_d1, t1_us, trace, ledger: Ledger::default() }
    }

    /// Advance from `t0` by `dt_us`, harvesting `P_S` and, if `busy`,
    /// draining `P_d1`. Within a constant-power piece the change is linear,
    /// so clamping at 0 or C is exact per piece.
    pub fn advance(&mut self, t0: u64, dt_us: u64, busy: bool) {
        for (a, b, ps) in self.trace.segments(t0, t0 + dt_us) {
            let dt = (b - a) as f64;
            let h = energy_uj(ps, dt);
            let d = if busy { energy_uj(self.p_d1, dt) } else { 0.0 };
            self.ledger.harvested += h;
            self.ledger.drained += d;
            self.settle(self.e + h - d);
        }
    }

    /// Instantaneous drain of `uj`.
    pub fn drain(&mut self, uj: f64) {
        self.ledger.drained += uj;
        self.settle(self.e - uj);
    }

    fn settle(&mut self, e: f64) {
        if e > self.c {
            self.ledger.spilled += e - self.c;
            self.e = self.c;
        } else if e < 0.0 {
            self.ledger.shortfall += -e;
            self.e = 0.0;
        } else {
            self.e = e;
        }
    }

    /// Energy of one VM step.
    pub fn step_cost(&self) -> f64 {
        energy_uj(self.p_d1, self.t1_us)
    }

    /// Predicted run time `t_s` at `t_us` under constant drain: unbounded
    /// when the harvest covers the drain, else `E / (P_d1 - P_S)`. Without
    /// storage any harvest counts as covering.
    pub fn runtime_us(&self, t_us: u64) -> f64 {
        let ps = self.trace.power_at(t_us);
        if self.c == 0.0 {
            return if ps > 0.0 { f64::INFINITY } else { 0.0 };
        }
        if ps >= self.p_d1 {
            f64::INFINITY
        } else {
            self.e * 1e6 / (self.p_d1 - ps)
        }
    }

    /// Left side of the ledger identity minus the stored energy.
    pub fn imbalance(&self) -> f64 {
        let l = &self.ledger;
        self.e0 + l.harvested - l.drained - l.spilled + l.shortfall - self.e
    }
}

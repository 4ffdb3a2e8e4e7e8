//! Simulated ADC and DAC devices.
//!
//! Programs start conversions through FIOS words; the host advances device
//! state between slices with [`Devices::tick`], so `sampled` only changes
//! while no instruction runs.
//!
//! | word | stack effect |
//! |------|--------------|
//! | `adc` | `( trigmode depth gain freq device -- )` |
//! | `dac` | `( wave interval ampl freq device -- )` |
//!
//! Frequencies are in kS/s. ADC depth counts units of `depth_unit` samples.
//! The sample ring is the first `depth` cells of the `samples` DIOS array and
//! `sample0` holds the index of the oldest sample.

use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use super::signal::SignalSource;
use crate::ios::{Ios, IosError};
use crate::vm::{Exception, Vm};

pub const SAMPLES: &str = "samples";
pub const SAMPLE0: &str = "sample0";
pub const SAMPLED: &str = "sampled";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdcConfig {
    /// Capacity of the `samples` array.
    pub capacity: usize,
    /// Samples per unit of the `depth` argument.
    pub depth_unit: usize,
    /// Trigger mode codes.
    pub free_mode: i32,
    pub single_mode: i32,
    /// `|x|` level that fires a single-shot trigger.
    pub threshold: i32,
    /// How long an armed trigger waits before giving up.
    pub arm_timeout_us: u64,
    /// Sample from the DAC output instead of the signal source.
    pub loopback: bool,
}

impl Default for AdcConfig {
    fn default() -> Self {
        AdcConfig {
            capacity: 8192,
            depth_unit: 1024,
            free_mode: 10,
            single_mode: 4,
            threshold: 100,
            arm_timeout_us: 10_000_000,
            loopback: false,
        }
    }
}

/// Override sample `index` of every conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injection {
    pub index: usize,
    pub value: i32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct AdcJob {
    depth: usize,
    gain: i32,
    period_us: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum AdcState {
    Idle,
    Armed { job: AdcJob, from_us: f64, until_us: f64 },
    Converting { job: AdcJob, start_us: f64, skipped: usize },
}

#[derive(Debug, Clone, PartialEq)]
struct DacJob {
    wave: Vec<i32>,
    start_us: f64,
    period_us: f64,
    ampl: i32,
    periodic: bool,
    emitted: u64,
}

impl DacJob {
    fn len(&self) -> Option<u64> {
        (!self.periodic).then_some(self.wave.len() as u64)
    }

    fn sample(&self, k: u64) -> i32 {
        let v = self.wave[(k % self.wave.len() as u64) as usize];
        (v as i64 * self.ampl as i64 / 100) as i32
    }

    /// Held output at `t_us`, if the DAC is emitting.
    fn value_at(&self, t_us: f64) -> Option<i32> {
        if t_us < self.start_us {
            return None;
        }
        let k = ((t_us - self.start_us) / self.period_us).floor() as u64;
        if self.len().is_some_and(|n| k >= n) {
            return None;
        }
        Some(self.sample(k))
    }
}

#[derive(Debug)]
pub struct DeviceBus {
    pub adc_cfg: AdcConfig,
    pub source: SignalSource,
    pub injections: Vec<Injection>,
    /// Emitted DAC samples `(time_us, value)`.
    pub capture: Vec<(u64, i32)>,
    pub capture_limit: usize,
    /// Completed ADC conversions.
    pub conversions: u64,
    adc: AdcState,
    dac: Option<DacJob>,
    write_ptr: usize,
    taken: u64,
}

impl DeviceBus {
    pub fn new(adc_cfg: AdcConfig, source: SignalSource) -> Self {
        DeviceBus {
            adc_cfg,
            source,
            injections: Vec::new(),
            capture: Vec::new(),
            capture_limit: 1 << 16,
            conversions: 0,
            adc: AdcState::Idle,
            dac: None,
            write_ptr: 0,
            taken: 0,
        }
    }

    pub fn adc_busy(&self) -> bool {
        self.adc != AdcState::Idle
    }

    pub fn dac_active(&self) -> bool {
        self.dac.is_some()
    }

    fn adc_start(&mut self, args: &[i32], now_us: u64) -> Result<(), Exception> {
        let [mode, depth, gain, freq, dev] = args[..] else { return Err(Exception::Trap) };
        if dev != 0 || self.adc_busy() {
            return Err(Exception::Io);
        }
        let depth = usize::try_from(depth).map_err(|_| Exception::Io)? * self.adc_cfg.depth_unit;
        if depth == 0 || depth > self.adc_cfg.capacity || freq <= 0 || !(0..=8).contains(&gain) {
            return Err(Exception::Io);
        }
        let job = AdcJob { depth, gain, period_us: 1000.0 / freq as f64 };
        let now = now_us as f64;
        self.adc = if mode == self.adc_cfg.free_mode {
            AdcState::Converting { job, start_us: now, skipped: 0 }
        } else if mode == self.adc_cfg.single_mode {
            AdcState::Armed { job, from_us: now, until_us: now + self.adc_cfg.arm_timeout_us as f64 }
        } else {
            return Err(Exception::Io);
        };
        Ok(())
    }

    fn dac_start(&mut self, wave: Vec<i32>, args: &[i32], now_us: u64) -> Result<(), Exception> {
        let [_, interval, ampl, freq, dev] = args[..] else { return Err(Exception::Trap) };
        if dev != 0 || freq <= 0 || interval < 0 || wave.is_empty() {
            return Err(Exception::Io);
        }
        self.flush_dac(now_us);
        let periodic = interval == 0;
        let start_us = now_us as f64 + if periodic { 0.0 } else { interval as f64 * 1000.0 };
        self.dac = Some(DacJob { wave, start_us, period_us: 1000.0 / freq as f64, ampl, periodic, emitted: 0 });
        Ok(())
    }

    pub fn dac_stop(&mut self, now_us: u64) {
        self.flush_dac(now_us);
        self.dac = None;
    }

    fn raw(&self, index: u64, t_us: f64) -> f64 {
        if self.adc_cfg.loopback {
            self.dac.as_ref().and_then(|d| d.value_at(t_us)).unwrap_or(0) as f64
        } else {
            self.source.sample(index, t_us)
        }
    }

    /// First armed sample at or past the threshold within `[from, min(to, until)]`.
    fn find_trigger(&self, job: &AdcJob, from_us: f64, until_us: f64, to_us: f64) -> Option<(usize, f64)> {
        let end = to_us.min(until_us);
        let mut k = 0usize;
        loop {
            let t = from_us + k as f64 * job.period_us;
            if t > end {
                return None;
            }
            if self.raw(self.taken + k as u64, t).abs() >= self.adc_cfg.threshold as f64 {
                return Some((k, t));
            }
            k += 1;
        }
    }

    fn flush_dac(&mut self, now_us: u64) {
        let Some(d) = &mut self.dac else { return };
        let now = now_us as f64;
        while self.capture.len() < self.capture_limit && d.len().is_none_or(|n| d.emitted < n) {
            let t = d.start_us + d.emitted as f64 * d.period_us;
            if t > now {
                break;
            }
            self.capture.push((t.round() as u64, d.sample(d.emitted)));
            d.emitted += 1;
        }
        if d.len().is_some_and(|n| d.emitted >= n) {
            self.dac = None;
        }
    }

    /// Earliest time at which a tick would change the VM-visible state.
    pub fn next_event_us(&self) -> Option<u64> {
        match self.adc {
            AdcState::Idle => None,
            AdcState::Converting { job, start_us, .. } => Some(end_of(&job, start_us)),
            AdcState::Armed { job, from_us, until_us } => Some(
                self.find_trigger(&job, from_us, until_us, until_us)
                    .map_or(until_us.ceil() as u64, |(_, t)| end_of(&job, t)),
            ),
        }
    }

    /// Advance devices to the VM clock and publish finished conversions.
    pub fn tick(&mut self, vm: &mut Vm) {
        let now_us = vm.now_us();
        let now = now_us as f64;
        if let AdcState::Armed { job, from_us, until_us } = self.adc {
            self.adc = match self.find_trigger(&job, from_us, until_us, now) {
                Some((k, t)) => AdcState::Converting { job, start_us: t, skipped: k },
                None if now >= until_us => AdcState::Idle,
                None => self.adc,
            };
        }
        if let AdcState::Converting { job, start_us, skipped } = self.adc {
            if end_of(&job, start_us) <= now_us {
                self.convert(vm, job, start_us, skipped);
                self.adc = AdcState::Idle;
            }
        }
        self.flush_dac(now_us);
    }

    fn convert(&mut self, vm: &mut Vm, job: AdcJob, start_us: f64, skipped: usize) {
        let pos0 = (self.write_ptr + skipped) % job.depth;
        let first = self.taken + skipped as u64;
        let mut ring = vec![0i32; job.depth];
        for j in 0..job.depth {
            let t = start_us + j as f64 * job.period_us;
            let mut v = self.raw(first + j as u64, t).round() as i64;
            if let Some(inj) = self.injections.iter().find(|i| i.index == j) {
                v = inj.value as i64;
            }
            let v = (v << job.gain).clamp(i16::MIN as i64, i16::MAX as i64) as i32;
            ring[(pos0 + j) % job.depth] = v;
        }
        self.write_ptr += skipped + job.depth;
        self.taken = first + job.depth as u64;
        self.conversions += 1;
        if let Some(s) = vm.ios.dios_by_name_mut(SAMPLES) {
            for (i, v) in ring.into_iter().enumerate() {
                s.set(i, v);
            }
        }
        if let Some(s) = vm.ios.dios_by_name_mut(SAMPLE0) {
            s.set(0, pos0 as i32);
        }
        if let Some(s) = vm.ios.dios_by_name_mut(SAMPLED) {
            s.set(0, 1);
        }
    }
}

fn end_of(job: &AdcJob, start_us: f64) -> u64 {
    (start_us + job.depth as f64 * job.period_us).ceil() as u64
}

/// Shared handle to the device bus, cloned into FIOS callbacks.
#[derive(Debug, Clone)]
pub struct Devices(Arc<Mutex<DeviceBus>>);

impl Devices {
    pub fn new(adc_cfg: AdcConfig, source: SignalSource) -> Self {
        Devices(Arc::new(Mutex::new(DeviceBus::new(adc_cfg, source))))
    }

    pub fn lock(&self) -> MutexGuard<'_, DeviceBus> {
        self.0.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Add the device DIOS entries and FIOS words. DIOS order is fixed so
    /// checkpoints taken on one node restore on another of the same config.
    pub fn register(&self, ios: &mut Ios) -> Result<(), IosError> {
        let cap = self.lock().adc_cfg.capacity;
        ios.dios_add(SAMPLES, cap, 2)?;
        ios.dios_add(SAMPLE0, 1, 2)?;
        ios.dios_add(SAMPLED, 1, 2)?;
        let bus = self.clone();
        ios.fios_add(
            "adc",
            Box::new(move |ctx, a| {
                bus.lock().adc_start(a, ctx.now_us)?;
                let i = ctx.dios.iter().position(|d| d.name == SAMPLED).ok_or(Exception::Io)?;
                ctx.dios[i].set(0, 0);
                Ok(0)
            }),
            5,
            2,
            0,
        )?;
        let bus = self.clone();
        ios.fios_add(
            "dac",
            Box::new(move |ctx, a| {
                let arr = ctx.array(a[0])?;
                let wave = (0..arr.len()).map(|i| ctx.get(arr, i).map(i32::from)).collect::<Result<_, _>>()?;
                bus.lock().dac_start(wave, a, ctx.now_us)?;
                Ok(0)
            }),
            5,
            2,
            0,
        )?;
        Ok(())
    }

    pub fn tick(&self, vm: &mut Vm) {
        self.lock().tick(vm);
    }

    pub fn next_event_us(&self) -> Option<u64> {
        self.lock().next_event_us()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::host::signal::Waveform;
    use crate::vm::VmConfig;

    fn setup(cfg: AdcConfig, wave: Waveform) -> (Vm, Devices) {
        let mut vm = Vm::new(VmConfig { cs: 4096, ..Default::default() }).unwrap();
        let dev = Devices::new(cfg, SignalSource::new(wave));
        dev.register(&mut vm.ios).unwrap();
        (vm, dev)
    }

    fn drive(vm: &mut Vm, dev: &Devices, t: usize) {
        for _ in 0..10_000 {
            dev.tick(vm);
            let Some(task) = vm.task(t) else { return };
            if !task.is_live() {
                return;
            }
            if task.pc < 0 {
                let ev = task.event.unwrap();
                if let Some(w) = vm.event_ready(&ev) {
                    vm.wake(t, w);
                } else {
                    let next = [vm.next_timeout_us(), dev.next_event_us()].into_iter().flatten().min().unwrap();
                    vm.advance_to_us(next);
                    continue;
                }
            }
            vm.run_slice(t);
        }
    }

    #[test]
    fn free_conversion_sets_flag() {
        let (mut vm, dev) = setup(AdcConfig { depth_unit: 16, ..Default::default() }, Waveform::Sine {
            freq_hz: 1000.0,
            amplitude: 100.0,
        });
        let info = vm.compile("10 1 0 100 0 adc 1000 1 sampled await . sampled read .").unwrap();
        let t = vm.spawn_frame(info.frame).unwrap();
        drive(&mut vm, &dev, t);
        assert_eq!(vm.output.take_console(), "0 1 ");
        assert!(vm.now_us() >= 160);
    }

    #[test]
    fn single_trigger_timeout() {
        let cfg = AdcConfig { depth_unit: 16, arm_timeout_us: 1_000_000, ..Default::default() };
        let (mut vm, dev) = setup(cfg, Waveform::Zero);
        let info = vm.compile("4 1 0 100 0 adc 50 1 sampled await .").unwrap();
        let t = vm.spawn_frame(info.frame).unwrap();
        drive(&mut vm, &dev, t);
        assert_eq!(vm.output.take_console(), "1 ");
        assert!(dev.lock().adc_busy());
    }

    #[test]
    fn single_trigger_ring_start() {
        // Square wave: low for 500 µs, then high. The trigger fires on the
        // first high sample, 50 samples after arming.
        let cfg = AdcConfig { depth_unit: 16, threshold: 50, ..Default::default() };
        let (mut vm, dev) =
            setup(cfg, Waveform::Trace { rate_hz: 100_000.0, samples: [vec![0; 50], vec![60; 100]].concat() });
        let info = vm.compile("4 1 0 100 0 adc 1000 1 sampled await .").unwrap();
        let t = vm.spawn_frame(info.frame).unwrap();
        drive(&mut vm, &dev, t);
        assert_eq!(vm.output.take_console(), "0 ");
        assert_eq!(vm.ios.dios_by_name(SAMPLE0).unwrap().data[0], 50 % 16);
        assert!(vm.ios.dios_by_name(SAMPLES).unwrap().data[..16].iter().all(|&v| v == 60));
    }

    #[test]
    fn busy_and_bad_args() {
        let (mut vm, _dev) = setup(AdcConfig::default(), Waveform::Zero);
        let (_, e) = vm.eval("10 1 0 100 0 adc 10 1 0 100 0 adc").unwrap();
        assert_eq!(e, Some(Exception::Io));
        let (mut vm, _dev) = setup(AdcConfig::default(), Waveform::Zero);
        assert_eq!(vm.eval("10 9 0 100 0 adc").unwrap().1, Some(Exception::Io));
        assert_eq!(vm.eval("10 1 0 100 1 adc").unwrap().1, Some(Exception::Io));
        assert_eq!(vm.eval("3 1 0 100 0 adc").unwrap().1, Some(Exception::Io));
    }

    #[test]
    fn dac_single_shot_capture() {
        let (mut vm, dev) = setup(AdcConfig::default(), Waveform::Zero);
        let (_, e) = vm.eval("array w { 100 -100 50 } w 2 50 10 0 dac").unwrap();
        assert_eq!(e, None);
        vm.advance_to_us(vm.now_us() + 10_000);
        dev.tick(&mut vm);
        let b = dev.lock();
        let vals: Vec<i32> = b.capture.iter().map(|c| c.1).collect();
        assert_eq!(vals, vec![50, -50, 25]);
        assert!(b.capture[0].0 >= 2000);
        assert!(!b.dac_active());
    }
}

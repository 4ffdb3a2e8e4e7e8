//! Deterministic analog signal sources sampled by the simulated ADC.

use std::f64::consts::PI;
use std::io::Read;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("empty trace")]
    Empty,
    #[error("trace rate must be positive")]
    Rate,
}

pub fn hamming(i: usize, n: usize) -> f64 {
    if n <= 1 {
        return 1.0;
    }
    0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()
}

/// Hamming-windowed sine burst of `n` samples with `cycles` periods, in
/// `[-amplitude, amplitude]`.
pub fn burst(n: usize, cycles: f64, amplitude: f64) -> Vec<i32> {
    (0..n)
        .map(|i| {
            let s = (2.0 * PI * cycles * i as f64 / n as f64).sin();
            (amplitude * hamming(i, n) * s).round() as i32
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Waveform {
    Zero,
    /// Hamming-windowed sine burst starting at `start_us`.
    Burst { start_us: f64, duration_us: f64, freq_hz: f64, amplitude: f64 },
    Square { period_us: f64, amplitude: f64 },
    Sine { freq_hz: f64, amplitude: f64 },
    /// Recorded samples at a fixed rate; zero after the end.
    Trace { rate_hz: f64, samples: Vec<i32> },
}

impl Waveform {
    /// Noise-free value at time `t_us`.
    pub fn value(&self, t_us: f64) -> f64 {
        match self {
            Waveform::Zero => 0.0,
            Waveform::Burst { start_us, duration_us, freq_hz, amplitude } => {
                let dt = t_us - start_us;
                if dt < 0.0 || dt > *duration_us || *duration_us <= 0.0 {
                    return 0.0;
                }
                let w = 0.54 - 0.46 * (2.0 * PI * dt / duration_us).cos();
                amplitude * w * (2.0 * PI * freq_hz * dt / 1e6).sin()
            }
            Waveform::Square { period_us, amplitude } => {
                if *period_us <= 0.0 {
                    return 0.0;
                }
                if t_us.rem_euclid(*period_us) < period_us / 2.0 {
                    *amplitude
                } else {
                    -amplitude
                }
            }
            Waveform::Sine { freq_hz, amplitude } => amplitude * (2.0 * PI * freq_hz * t_us / 1e6).sin(),
            Waveform::Trace { rate_hz, samples } => {
                let i = (t_us * rate_hz / 1e6).floor();
                if i < 0.0 {
                    return 0.0;
                }
                samples.get(i as usize).map_or(0.0, |&v| v as f64)
            }
        }
    }

    /// Read a one-column CSV (`sample` header) recorded at `rate_hz`.
    pub fn read_trace<R: Read>(r: R, rate_hz: f64) -> Result<Self, SignalError> {
        if rate_hz <= 0.0 {
            return Err(SignalError::Rate);
        }
        #[derive(Deserialize)]
        struct Row {
            sample: i32,
        }
        let mut rd = csv::Reader::from_reader(r);
        let samples = rd.deserialize().map(|r| r.map(|r: Row| r.sample)).collect::<Result<Vec<_>, _>>()?;
        if samples.is_empty() {
            return Err(SignalError::Empty);
        }
        Ok(Waveform::Trace { rate_hz, samples })
    }
}

/// A waveform plus seeded uniform noise. Noise is a pure function of the
/// seed and the sample index, so sampling order does not matter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalSource {
    pub wave: Waveform,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SignalSource {
    fn default() -> Self {
        SignalSource { wave: Waveform::Zero, noise: 0.0, seed: 0 }
    }
}

impl SignalSource {
    pub fn new(wave: Waveform) -> Self {
        SignalSource { wave, ..Default::default() }
    }

    pub fn with_noise(mut self, noise: f64, seed: u64) -> Self {
        self.noise = noise;
        self.seed = seed;
        self
    }

    fn noise_at(&self, index: u64) -> f64 {
        if self.noise == 0.0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_word_pos(index as u128 * 2);
        let u = rng.next_u32() as f64 / u32::MAX as f64;
        self.noise * (2.0 * u - 1.0)
    }

    /// Sample number `index` taken at `t_us`.
    pub fn sample(&self, index: u64, t_us: f64) -> f64 {
        self.wave.value(t_us) + self.noise_at(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burst_envelope() {
        let b = burst(64, 4.0, 1000.0);
        assert_eq!(b.len(), 64);
        for (i, &v) in b.iter().enumerate() {
            assert!((v as f64).abs() <= 1000.0 * hamming(i, 64) + 0.5);
        }
        assert!(b.iter().any(|&v| v > 500));
    }

    #[test]
    fn square_levels() {
        let w = Waveform::Square { period_us: 100.0, amplitude: 7.0 };
        assert_eq!(w.value(10.0), 7.0);
        assert_eq!(w.value(60.0), -7.0);
        assert_eq!(w.value(110.0), 7.0);
    }

    #[test]
    fn noise_is_order_independent() {
        let s = SignalSource::new(Waveform::Zero).with_noise(50.0, 9);
        let a: Vec<f64> = (0..100).map(|i| s.sample(i, 0.0)).collect();
        let b: Vec<f64> = (0..100).rev().map(|i| s.sample(i, 0.0)).collect();
        assert!(a.iter().eq(b.iter().rev()));
        assert!(a.iter().all(|v| v.abs() <= 50.0));
        assert!(a.iter().any(|v| *v != a[0]));
    }

    #[test]
    fn trace_csv() {
        let w = Waveform::read_trace("sample\n1\n2\n3\n".as_bytes(), 1000.0).unwrap();
        assert_eq!(w.value(0.0), 1.0);
        assert_eq!(w.value(1500.0), 2.0);
        assert_eq!(w.value(5000.0), 0.0);
        assert!(Waveform::read_trace("sample\n".as_bytes(), 1000.0).is_err());
    }
}

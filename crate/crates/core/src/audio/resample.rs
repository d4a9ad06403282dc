//! Rational polyphase resampling with a Kaiser-windowed sinc prototype.
//!
//! The ratio `out_rate / in_rate` is reduced to `up / down`. Output sample
//! `m` sits at input time `m * down / up`; it is the dot product of 64 input
//! samples with one of `up` precomputed phases of the prototype filter. The
//! prototype is evaluated centred on the output instant, so there is no
//! group delay to compensate.

use std::f64::consts::PI;

pub const TAPS_PER_PHASE: usize = 64;
pub const KAISER_BETA: f64 = 8.0;

#[derive(Debug, Clone)]
pub struct PolyphaseResampler {
    up: usize,
    down: usize,
    // phases[p][i] weights input sample `q + 32 - i` for an output whose
    // upsampled position is `q * up + p`.
    phases: Vec<[f64; TAPS_PER_PHASE]>,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

impl PolyphaseResampler {
    pub fn new(in_rate: u32, out_rate: u32) -> Self {
        assert!(in_rate > 0 && out_rate > 0, "sample rates must be positive");
        let g = gcd(in_rate as u64, out_rate as u64);
        let up = (out_rate as u64 / g) as usize;
        let down = (in_rate as u64 / g) as usize;

        // Cutoff in cycles per upsampled sample: the lower of the two Nyquists.
        let cutoff = 0.5 / up.max(down) as f64;
        let half_span = (TAPS_PER_PHASE / 2 * up) as f64;
        let i0_beta = bessel_i0(KAISER_BETA);
        let half = (TAPS_PER_PHASE / 2) as isize;

        let phases = (0..up)
            .map(|p| {
                let mut taps = [0.0; TAPS_PER_PHASE];
                for (i, tap) in taps.iter_mut().enumerate() {
                    // offset in upsampled units between output instant and input sample
                    let offset = p as f64 + up as f64 * (i as isize - half) as f64;
                    let r = offset / half_span;
                    let window = if r.abs() <= 1.0 {
                        bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta
                    } else {
                        0.0
                    };
                    *tap = 2.0 * cutoff * sinc(2.0 * cutoff * offset) * window;
                }
                // unity DC gain per phase
                let sum: f64 = taps.iter().sum();
                if sum.abs() > 0.0 {
                    taps.iter_mut().for_each(|t| *t /= sum);
                }
                taps
            })
            .collect();
        Self { up, down, phases }
    }

    pub fn ratio(&self) -> (usize, usize) {
        (self.up, self.down)
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        (input_len * self.up).div_ceil(self.down)
    }

    pub fn process(&self, input: &[f32]) -> Vec<f32> {
        if self.up == self.down {
            return input.to_vec();
        }
        let n_out = self.output_len(input.len());
        let half = (TAPS_PER_PHASE / 2) as isize;
        (0..n_out)
            .map(|m| {
                let pos = m * self.down;
                let q = (pos / self.up) as isize;
                let taps = &self.phases[pos % self.up];
                let mut acc = 0.0f64;
                for (i, &h) in taps.iter().enumerate() {
                    // offset = p + up * (i - half)  =>  input index q - (i - half)
                    let idx = q - (i as isize - half);
                    if idx >= 0 && (idx as usize) < input.len() {
                        acc += h * input[idx as usize] as f64;
                    }
                }
                acc as f32
            })
            .collect()
    }
}

pub fn resample(input: &[f32], in_rate: u32, out_rate: u32) -> Vec<f32> {
    if in_rate == out_rate {
        return input.to_vec();
    }
    PolyphaseResampler::new(in_rate, out_rate).process(input)
}

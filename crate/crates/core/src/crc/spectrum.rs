use super::reservoir::{readout_real, ReservoirParams};
use crate::error::{PhriError, Result};
use crate::rng::stream_rng;
use rand::Rng;
use rustfft::{num_complex::Complex64, FftPlanner};

/// Amplitude spectra of the real readout for a driven and a free phase.
#[derive(Debug, Clone)]
pub struct FreeResponse {
    /// Readout per step (`n_drive + n_free` rows of `n_neurons`).
    pub readout: Vec<Vec<f64>>,
    pub n_drive: usize,
    pub n_free: usize,
    /// `driven[neuron][bin]`, bins `0..=n_drive/2`, amplitude `|X_k| / n`.
    pub driven: Vec<Vec<f64>>,
    pub free: Vec<Vec<f64>>,
}

impl FreeResponse {
    /// Frequency of bin `k` in cycles per step for a phase of length `n`.
    pub fn bin_frequency(k: usize, n: usize) -> f64 {
        k as f64 / n as f64
    }

    pub fn free_readout(&self) -> &[Vec<f64>] {
        &self.readout[self.n_drive..]
    }

    /// Mean `|readout|` over the first and the last quarter of the free phase.
    pub fn quarter_amplitudes(&self) -> (f64, f64) {
        let free = self.free_readout();
        let q = (free.len() / 4).max(1);
        let mean_abs = |rows: &[Vec<f64>]| {
            let (s, c) = rows
                .iter()
                .flat_map(|r| r.iter())
                .fold((0.0, 0usize), |(s, c), v| (s + v.abs(), c + 1));
            if c == 0 {
                0.0
            } else {
                s / c as f64
            }
        };
        (mean_abs(&free[..q]), mean_abs(&free[free.len() - q..]))
    }

    /// Largest ratio, over neurons, of a free-phase spectral peak to the
    /// median of that neuron's spectrum. The DC bin is excluded from both;
    /// silent neurons are skipped.
    pub fn max_free_peak_ratio(&self) -> f64 {
        peak_ratio(&self.free)
    }

    pub fn max_driven_peak_ratio(&self) -> f64 {
        peak_ratio(&self.driven)
    }
}

fn peak_ratio(spectra: &[Vec<f64>]) -> f64 {
    let mut best = 0.0f64;
    for s in spectra {
        if s.len() < 3 {
            continue;
        }
        let mut bins: Vec<f64> = s[1..].to_vec();
        let peak = bins.iter().cloned().fold(0.0, f64::max);
        if peak <= 1e-300 {
            continue;
        }
        bins.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = bins[bins.len() / 2];
        let ratio = if median > 0.0 { peak / median } else { f64::INFINITY };
        best = best.max(ratio);
    }
    best
}

/// Amplitude spectrum `|DFT(x)_k| / n` for `k = 0..=n/2`.
pub fn amplitude_spectrum(signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft.process(&mut buf);
    buf[..=n / 2].iter().map(|z| z.norm() / n as f64).collect()
}

/// Drives the bias-free reservoir with uniform inputs in `[-1, 1]` for
/// `n_drive` steps, lets it run freely for `n_free` steps, and returns the
/// per-neuron amplitude spectra of the real readout for both phases.
pub fn free_response_spectrum(
    params: &ReservoirParams,
    n_drive: usize,
    n_free: usize,
    seed: u64,
) -> Result<FreeResponse> {
    if n_drive < 16 || n_free < 16 {
        return Err(PhriError::param("free-response analysis needs at least 16 steps per phase"));
    }
    let p = params.without_bias();
    let n = p.n_neurons();
    let d = p.input_dim();
    let mut rng = stream_rng(seed, 0x4646_5400);
    let mut state = p.zero_state();
    let mut scratch = vec![Complex64::new(0.0, 0.0); n];
    let mut readout = Vec::with_capacity(n_drive + n_free);
    let mut input = vec![0.0; d];
    for t in 0..n_drive + n_free {
        if t < n_drive {
            input.iter_mut().for_each(|u| *u = rng.random_range(-1.0..=1.0));
        } else {
            input.iter_mut().for_each(|u| *u = 0.0);
        }
        p.step_in_place(&mut state.h, &input, &mut scratch)?;
        readout.push(readout_real(&state));
    }
    let spectra = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let sig: Vec<f64> = rows.iter().map(|r| r[i]).collect();
                amplitude_spectrum(&sig)
            })
            .collect()
    };
    let driven = spectra(&readout[..n_drive]);
    let free = spectra(&readout[n_drive..]);
    Ok(FreeResponse {
        readout,
        n_drive,
        n_free,
        driven,
        free,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_tone_peaks_at_its_bin() {
        let n = 64;
        let sig: Vec<f64> = (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * 5.0 * t as f64 / n as f64).cos())
            .collect();
        let s = amplitude_spectrum(&sig);
        assert_eq!(s.len(), 33);
        assert!((s[5] - 0.5).abs() < 1e-12);
        assert!(s.iter().enumerate().all(|(k, v)| k == 5 || *v < 1e-12));
    }

    #[test]
    fn silent_signal_has_zero_spectrum() {
        assert!(amplitude_spectrum(&[0.0; 40]).iter().all(|v| *v == 0.0));
        let fr = FreeResponse {
            readout: vec![vec![0.0; 2]; 32],
            n_drive: 16,
            n_free: 16,
            driven: vec![vec![0.0; 9]; 2],
            free: vec![vec![0.0; 9]; 2],
        };
        assert_eq!(fr.max_free_peak_ratio(), 0.0);
    }
}

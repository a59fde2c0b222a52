use super::sparse::{spectral_radius, CsrMatrix};
use crate::error::{PhriError, Result};
use crate::rng::stream_rng;
use crate::snapshot::{read_file, Reader, Writer};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReservoirMode {
    Complex,
    Real,
}

/// Divisor applied to the input weights and bias after sparsification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputScaling {
    /// `1 + input_dim`.
    #[default]
    OnePlusInputDim,
    /// `1 + n_neurons`.
    OnePlusNeurons,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirConfig {
    pub n_neurons: usize,
    pub input_dim: usize,
    pub seed: u64,
    pub mode: ReservoirMode,
    pub spectral_target: f64,
    #[serde(default)]
    pub input_scaling: InputScaling,
}

impl ReservoirConfig {
    pub fn new(n_neurons: usize, input_dim: usize, seed: u64, mode: ReservoirMode) -> Self {
        ReservoirConfig {
            n_neurons,
            input_dim,
            seed,
            mode,
            spectral_target: 0.9,
            input_scaling: InputScaling::OnePlusInputDim,
        }
    }
}

/// Fixed reservoir weights.
///
/// Stored in "already transposed" form: the pre-activation is
/// `w_in · u + w_rc · h + b`, so `w_in` is `n_neurons × input_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirParams {
    pub config: ReservoirConfig,
    pub w_in: CsrMatrix,
    pub w_rc: CsrMatrix,
    pub bias: Vec<Complex64>,
    pub gamma: Vec<Complex64>,
    /// Number of degenerate draws discarded during initialization.
    pub redraws: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirState {
    pub h: Vec<Complex64>,
}

impl ReservoirState {
    pub fn zeros(n: usize) -> Self {
        ReservoirState { h: vec![ZERO; n] }
    }

    pub fn inf_norm(&self) -> f64 {
        self.h.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Largest phase keeping `|1 - γ| < 1` for `|γ| = amp`: `arccos(amp / 2)`.
pub fn phase_upper_bound(amp: f64) -> Result<f64> {
    if !(amp > 0.0 && amp <= 1.0) {
        return Err(PhriError::param(format!(
            "leak amplitude must lie in (0, 1], got {amp}"
        )));
    }
    Ok((amp / 2.0).acos())
}

/// Phase-amplitude activation `tanh(|z|) · exp(i·arg z)`, with `arg 0 := 0`.
#[inline]
pub fn complex_tanh(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r == 0.0 {
        return ZERO;
    }
    z * (r.tanh() / r)
}

/// Draws reservoir weights for `config`.
///
/// Every entry is uniform in `[-1, 1]` (real and imaginary parts drawn
/// independently, and always drawn so that real and complex reservoirs built
/// from one seed share the sparsity pattern and real parts). Entries of
/// `w_in`, `w_rc` and `b` survive with probability `n^-0.9`. `w_rc` is then
/// rescaled to the spectral target; `w_in` and `b` are divided by the input
/// scaling divisor. `|γ|` is uniform in `(0, 1]` with phase uniform in
/// `[0, arccos(|γ|/2))`.
pub fn init_reservoir(config: &ReservoirConfig) -> Result<ReservoirParams> {
    let n = config.n_neurons;
    let d = config.input_dim;
    if n == 0 || d == 0 {
        return Err(PhriError::param("reservoir needs n_neurons >= 1 and input_dim >= 1"));
    }
    if !(config.spectral_target > 0.0 && config.spectral_target < 1.0) {
        return Err(PhriError::param(format!(
            "spectral target must lie in (0, 1), got {}",
            config.spectral_target
        )));
    }
    let complex = config.mode == ReservoirMode::Complex;
    let keep = (n as f64).powf(-0.9);
    let divisor = match config.input_scaling {
        InputScaling::OnePlusInputDim => 1.0 + d as f64,
        InputScaling::OnePlusNeurons => 1.0 + n as f64,
    };

    let mut redraws = 0u32;
    loop {
        let mut rng = stream_rng(config.seed, 0x5245_5345 + redraws as u64);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Option<Complex64> {
            let re: f64 = rng.random_range(-1.0..=1.0);
            let im: f64 = rng.random_range(-1.0..=1.0);
            let kept = rng.random::<f64>() < keep;
            kept.then(|| Complex64::new(re, if complex { im } else { 0.0 }))
        };
        let sparse = |rows: usize, cols: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let mut indptr = Vec::with_capacity(rows + 1);
            let mut indices = Vec::new();
            let mut values = Vec::new();
            indptr.push(0);
            for _ in 0..rows {
                for c in 0..cols {
                    if let Some(v) = draw(rng) {
                        indices.push(c);
                        values.push(v);
                    }
                }
                indptr.push(indices.len());
            }
            CsrMatrix::from_parts(rows, cols, indptr, indices, values)
        };
        let mut w_in = sparse(n, d, &mut rng)?;
        let mut w_rc = sparse(n, n, &mut rng)?;
        let mut bias: Vec<Complex64> = (0..n).map(|_| draw(&mut rng).unwrap_or(ZERO)).collect();
        let mut gamma = Vec::with_capacity(n);
        for _ in 0..n {
            let amp = 1.0 - rng.random::<f64>();
            let frac: f64 = rng.random();
            let phase = if complex {
                frac * phase_upper_bound(amp)?
            } else {
                0.0
            };
            gamma.push(Complex64::from_polar(amp, phase));
        }
        // Real mode keeps exact zeros in every imaginary part.
        if !complex {
            for g in &mut gamma {
                g.im = 0.0;
            }
        }

        let rho = if w_rc.is_structurally_nilpotent() {
            0.0
        } else {
            spectral_radius(&w_rc)?
        };
        if !(rho.is_finite() && rho > 1e-12) {
            redraws += 1;
            log::info!(
                "reservoir seed {}: degenerate recurrent draw (rho = {rho}), redraw #{redraws}",
                config.seed
            );
            if redraws > 10_000 {
                return Err(PhriError::numeric("no non-degenerate reservoir draw found"));
            }
            continue;
        }
        w_rc.scale(config.spectral_target / rho);
        w_in.scale(1.0 / divisor);
        for b in &mut bias {
            *b /= divisor;
        }
        return Ok(ReservoirParams {
            config: config.clone(),
            w_in,
            w_rc,
            bias,
            gamma,
            redraws,
        });
    }
}

impl ReservoirParams {
    pub fn n_neurons(&self) -> usize {
        self.config.n_neurons
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn mode(&self) -> ReservoirMode {
        self.config.mode
    }

    pub fn zero_state(&self) -> ReservoirState {
        ReservoirState::zeros(self.n_neurons())
    }

    /// Copy with the bias removed so the free response settles at zero.
    pub fn without_bias(&self) -> Self {
        let mut p = self.clone();
        p.bias.iter_mut().for_each(|b| *b = ZERO);
        p
    }

    /// `max_i |γ_i| / (1 - |1 - γ_i|)`: radius of the ball every update
    /// contracts toward.
    pub fn amplitude_bound(&self) -> f64 {
        self.gamma
            .iter()
            .map(|g| g.norm() / (1.0 - (Complex64::new(1.0, 0.0) - g).norm()))
            .fold(0.0, f64::max)
    }

    /// One leaky update; returns the new state.
    pub fn step(&self, state: &ReservoirState, input: &[f64]) -> Result<ReservoirState> {
        let mut next = state.clone();
        let mut scratch = vec![ZERO; self.n_neurons()];
        self.step_in_place(&mut next.h, input, &mut scratch)?;
        Ok(next)
    }

    /// In-place update `h ← (1-γ)⊙h + γ⊙tanh(w_in u + w_rc h + b)`.
    /// `scratch` must have `n_neurons` entries.
    pub fn step_in_place(
        &self,
        h: &mut [Complex64],
        input: &[f64],
        scratch: &mut [Complex64],
    ) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(PhriError::param(format!(
                "reservoir input has {} entries, expected {}",
                input.len(),
                self.input_dim()
            )));
        }
        if h.len() != self.n_neurons() || scratch.len() != self.n_neurons() {
            return Err(PhriError::param(format!(
                "reservoir state has {} entries, expected {}",
                h.len(),
                self.n_neurons()
            )));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(PhriError::numeric("non-finite reservoir input"));
        }
        scratch.copy_from_slice(&self.bias);
        self.w_in.mul_add_real(input, scratch);
        self.w_rc.mul_add(h, scratch);
        let one = Complex64::new(1.0, 0.0);
        for ((hi, pre), g) in h.iter_mut().zip(scratch.iter()).zip(&self.gamma) {
            *hi = (one - g) * *hi + g * complex_tanh(*pre);
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = Writer::new(SNAPSHOT_MAGIC, SNAPSHOT_VERSION);
        w.u8(match self.config.mode {
            ReservoirMode::Complex => 0,
            ReservoirMode::Real => 1,
        });
        w.u8(match self.config.input_scaling {
            InputScaling::OnePlusInputDim => 0,
            InputScaling::OnePlusNeurons => 1,
        });
        w.u64(self.config.seed);
        w.usize(self.config.n_neurons);
        w.usize(self.config.input_dim);
        w.f64(self.config.spectral_target);
        w.u32(self.redraws);
        for m in [&self.w_in, &self.w_rc] {
            w.usize(m.rows());
            w.usize(m.cols());
            w.usizes(m.indptr());
            w.usizes(m.indices());
            write_complex(&mut w, m.values());
        }
        write_complex(&mut w, &self.bias);
        write_complex(&mut w, &self.gamma);
        w.write_to(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let (mut r, version) = Reader::open(&bytes, SNAPSHOT_MAGIC, path)?;
        if version != SNAPSHOT_VERSION {
            return Err(PhriError::format(path, format!("unsupported version {version}")));
        }
        let mode = match r.u8()? {
            0 => ReservoirMode::Complex,
            1 => ReservoirMode::Real,
            m => return Err(PhriError::format(path, format!("unknown mode tag {m}"))),
        };
        let input_scaling = match r.u8()? {
            0 => InputScaling::OnePlusInputDim,
            1 => InputScaling::OnePlusNeurons,
            m => return Err(PhriError::format(path, format!("unknown scaling tag {m}"))),
        };
        let seed = r.u64()?;
        let n_neurons = r.usize()?;
        let input_dim = r.usize()?;
        let spectral_target = r.f64()?;
        let redraws = r.u32()?;
        let mut mats = Vec::with_capacity(2);
        for _ in 0..2 {
            let rows = r.usize()?;
            let cols = r.usize()?;
            let indptr = r.usizes()?;
            let indices = r.usizes()?;
            let values = read_complex(&mut r)?;
            mats.push(
                CsrMatrix::from_parts(rows, cols, indptr, indices, values)
                    .map_err(|e| PhriError::format(path, e.to_string()))?,
            );
        }
        let bias = read_complex(&mut r)?;
        let gamma = read_complex(&mut r)?;
        r.finish()?;
        let w_rc = mats.pop().unwrap();
        let w_in = mats.pop().unwrap();
        if w_in.rows() != n_neurons
            || w_in.cols() != input_dim
            || w_rc.rows() != n_neurons
            || w_rc.cols() != n_neurons
            || bias.len() != n_neurons
            || gamma.len() != n_neurons
        {
            return Err(PhriError::format(path, "dimension mismatch in reservoir snapshot"));
        }
        Ok(ReservoirParams {
            config: ReservoirConfig {
                n_neurons,
                input_dim,
                seed,
                mode,
                spectral_target,
                input_scaling,
            },
            w_in,
            w_rc,
            bias,
            gamma,
            redraws,
        })
    }
}

/// Element-wise real part of the state; the imaginary parts stay inside the
/// reservoir for later updates.
pub fn readout_real(state: &ReservoirState) -> Vec<f64> {
    state.h.iter().map(|z| z.re).collect()
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"PHRICRC\0";
const SNAPSHOT_VERSION: u32 = 1;

fn write_complex(w: &mut Writer, vs: &[Complex64]) {
    w.usize(vs.len());
    for v in vs {
        w.f64(v.re);
        w.f64(v.im);
    }
}

fn read_complex(r: &mut Reader<'_>) -> Result<Vec<Complex64>> {
    let n = r.usize()?;
    (0..n)
        .map(|_| Ok(Complex64::new(r.f64()?, r.f64()?)))
        .collect()
}

/// `π/2`: the phase bound in the limit of vanishing leak amplitude.
pub const PHASE_BOUND_AT_ZERO: f64 = FRAC_PI_2;

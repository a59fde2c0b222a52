use nalgebra::DMatrix;
use num_complex::Complex64;
use phri_core::crc::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dense_eig_radius(m: &CsrMatrix) -> f64 {
    let n = m.rows();
    let d = m.to_dense();
    let a = DMatrix::from_fn(n, n, |i, j| d[i * n + j]);
    a.schur()
        .eigenvalues()
        .expect("triangular Schur form yields eigenvalues")
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

fn reservoir(n: usize, d: usize, seed: u64, mode: ReservoirMode) -> ReservoirParams {
    init_reservoir(&ReservoirConfig::new(n, d, seed, mode)).unwrap()
}

#[test]
fn phase_bound_examples() {
    // arccos(0.25) evaluated independently at high precision.
    let frozen = 1.318_116_071_652_818;
    assert!((phase_upper_bound(0.5).unwrap() - frozen).abs() < 1e-15);
    assert!((phase_upper_bound(1.0).unwrap() - std::f64::consts::FRAC_PI_3).abs() < 1e-15);
    assert!((phase_upper_bound(1e-300).unwrap() - PHASE_BOUND_AT_ZERO).abs() < 1e-15);
    for bad in [0.0, -0.1, 1.0 + 1e-12, f64::NAN] {
        assert!(phase_upper_bound(bad).is_err(), "{bad}");
    }
}

#[test]
fn phase_bound_is_tight() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10_000 {
        let amp = 1.0 - rng.random::<f64>();
        let bound = phase_upper_bound(amp).unwrap();
        let below = Complex64::from_polar(amp, rng.random::<f64>() * bound);
        assert!((Complex64::new(1.0, 0.0) - below).norm() < 1.0);
        let at = Complex64::from_polar(amp, bound);
        assert!(((Complex64::new(1.0, 0.0) - at).norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn complex_tanh_keeps_phase() {
    let z = complex_tanh(Complex64::new(0.0, 1.0));
    assert!((z.norm() - 1f64.tanh()).abs() < 1e-15);
    assert!((z.arg() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    let w = Complex64::new(-0.3, 2.0);
    let t = complex_tanh(w);
    assert!((t.arg() - w.arg()).abs() < 1e-15);
    assert!(t.norm() < 1.0);
    assert!((complex_tanh(Complex64::new(0.7, 0.0)).re - 0.7f64.tanh()).abs() < 1e-16);
}

#[test]
fn gamma_and_sparsity_invariants() {
    let p = reservoir(1000, 60, 2, ReservoirMode::Complex);
    for g in &p.gamma {
        assert!(g.norm() > 0.0 && g.norm() <= 1.0);
        assert!((Complex64::new(1.0, 0.0) - g).norm() < 1.0);
    }
    // Binomial(1e6, 1000^-0.9): mean about 1995, sd about 45.
    let expect = 1e6 * 1000f64.powf(-0.9);
    let sd = (expect * (1.0 - 1000f64.powf(-0.9))).sqrt();
    assert!((p.w_rc.nnz() as f64 - expect).abs() < 5.0 * sd, "nnz {}", p.w_rc.nnz());
}

#[test]
fn spectral_radius_hits_target() {
    for n in [100, 1000] {
        let p = reservoir(n, 60, 2, ReservoirMode::Complex);
        assert!((spectral_radius(&p.w_rc).unwrap() - 0.9).abs() < 1e-6, "n = {n}");
    }
    let p = reservoir(100, 3, 5, ReservoirMode::Complex);
    assert!((dense_eig_radius(&p.w_rc) - 0.9).abs() < 1e-6);
}

#[test]
fn random_dense_matrix_matches_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let n = 50;
    let vals: Vec<Complex64> = (0..n * n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let m = CsrMatrix::from_dense(n, n, &vals).unwrap();
    let ours = spectral_radius(&m).unwrap();
    let oracle = dense_eig_radius(&m);
    assert!((ours - oracle).abs() < 1e-6 * oracle, "{ours} vs {oracle}");
}

#[test]
fn initialization_is_bit_identical_per_seed() {
    let a = reservoir(1000, 60, 2, ReservoirMode::Complex);
    let b = reservoir(1000, 60, 2, ReservoirMode::Complex);
    assert_eq!(a.w_rc, b.w_rc);
    assert_eq!(a.w_in, b.w_in);
    assert_eq!(a.bias, b.bias);
    assert_eq!(a.gamma, b.gamma);
}

/// Independent real-valued leaky echo-state network on dense arrays.
struct RealEsn {
    n: usize,
    w_in: Vec<f64>,
    w: Vec<f64>,
    b: Vec<f64>,
    leak: Vec<f64>,
}

impl RealEsn {
    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let d = u.len();
        (0..self.n)
            .map(|i| {
                let mut pre = self.b[i];
                for (k, uk) in u.iter().enumerate() {
                    pre += self.w_in[i * d + k] * uk;
                }
                for (j, xj) in x.iter().enumerate() {
                    pre += self.w[i * self.n + j] * xj;
                }
                (1.0 - self.leak[i]) * x[i] + self.leak[i] * pre.tanh()
            })
            .collect()
    }
}

#[test]
fn real_mode_matches_plain_echo_state_network() {
    let p = reservoir(80, 4, 11, ReservoirMode::Real);
    assert!(p.gamma.iter().all(|g| g.im == 0.0));
    let re = |v: Vec<Complex64>| v.into_iter().map(|z| z.re).collect::<Vec<_>>();
    let esn = RealEsn {
        n: 80,
        w_in: re(p.w_in.to_dense()),
        w: re(p.w_rc.to_dense()),
        b: p.bias.iter().map(|z| z.re).collect(),
        leak: p.gamma.iter().map(|z| z.re).collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut s = p.zero_state();
    let mut x = vec![0.0; 80];
    for _ in 0..300 {
        let u: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        s = p.step(&s, &u).unwrap();
        x = esn.step(&x, &u);
        for (a, b) in readout_real(&s).iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(s.h.iter().all(|z| z.im == 0.0));
    }
}

#[test]
fn readout_takes_real_parts() {
    let s = ReservoirState {
        h: vec![Complex64::new(0.3, 0.4), Complex64::new(-1.0, 2.0)],
    };
    assert_eq!(readout_real(&s), vec![0.3, -1.0]);
    assert_eq!(readout_real(&ReservoirState::zeros(3)), vec![0.0; 3]);
}

#[test]
fn free_oscillation_complex_sustains_real_decays() {
    let c = reservoir(1000, 3, 0, ReservoirMode::Complex);
    let fc = free_response_spectrum(&c, 100, 400, 1).unwrap();
    let (early, late) = fc.quarter_amplitudes();
    assert!(late >= 0.5 * early, "complex retention {}", late / early);
    assert!(fc.max_free_peak_ratio() > 10.0);

    let r = reservoir(1000, 3, 0, ReservoirMode::Real);
    let fr = free_response_spectrum(&r, 100, 400, 1).unwrap();
    let (early, late) = fr.quarter_amplitudes();
    assert!(late <= 0.1 * early, "real retention {}", late / early);
}

#[test]
fn spectrum_needs_sixteen_steps_per_phase() {
    let c = reservoir(10, 1, 0, ReservoirMode::Complex);
    assert!(free_response_spectrum(&c, 15, 100, 0).is_err());
    assert!(free_response_spectrum(&c, 100, 15, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn state_stays_within_amplitude_bound(seed in 0u64..1000, complex in any::<bool>(), amp in 0.1f64..5.0) {
        let mode = if complex { ReservoirMode::Complex } else { ReservoirMode::Real };
        let p = reservoir(64, 2, seed, mode);
        let bound = p.amplitude_bound();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = p.zero_state();
        let mut scratch = vec![Complex64::new(0.0, 0.0); 64];
        for _ in 0..10_000 {
            let u = [rng.random_range(-amp..amp), rng.random_range(-amp..amp)];
            p.step_in_place(&mut s.h, &u, &mut scratch).unwrap();
            prop_assert!(s.inf_norm() <= bound + 1e-12);
        }
    }

    #[test]
    fn identical_inputs_give_identical_trajectories(seed in 0u64..1000) {
        let p = reservoir(40, 3, seed, ReservoirMode::Complex);
        let q = reservoir(40, 3, seed, ReservoirMode::Complex);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let (mut a, mut b) = (p.zero_state(), q.zero_state());
        for _ in 0..200 {
            let u: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            a = p.step(&a, &u).unwrap();
            b = q.step(&b, &u).unwrap();
            prop_assert_eq!(&a, &b);
        }
    }
}

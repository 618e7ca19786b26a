mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use common::{fd6, natural, pair_from_psi, random_state, smooth_field};
use noether_lattice::charges::{
    angular_momentum_charge, angular_momentum_charge_about, charge_csv_header,
    momentum_balance_residual, momentum_charge, momentum_charge_reduced,
    momentum_correction_term, momentum_density, pair_norm, phase_charge, write_charge_csv,
    ChargeRecord,
};
use noether_lattice::dynamics::{
    init_adiabatic, DtPolicy, FieldState, Potential, Stepper,
};
use noether_lattice::lattice::{make_grid, spectral_derivative, Grid, RealLattice};
use noether_lattice::quantum::{momentum_expectation, to_wavefunction, Normalization};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn packet(grid: &Arc<Grid>, center: Vec<f64>, width: f64, k0: Vec<f64>) -> (RealLattice, RealLattice) {
    pair_from_psi(grid, move |x| {
        let r2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
        let ph: f64 = x.iter().zip(&k0).map(|(a, b)| a * b).sum();
        Complex64::from_polar((-r2 / (4.0 * width * width)).exp(), ph)
    })
}

/// Shift a field by `d` sites along `axis`.
fn roll(f: &RealLattice, axis: usize, d: isize) -> RealLattice {
    let g = f.grid();
    let n = g.points(axis) as isize;
    let stride = g.stride(axis) as isize;
    let v = f.values();
    let data = (0..v.len())
        .map(|site| {
            let i = g.axis_index(site, axis) as isize;
            let base = site as isize - i * stride;
            v[(base + (i - d).rem_euclid(n) * stride) as usize]
        })
        .collect();
    RealLattice::from_vec(g, data).unwrap()
}

fn roll_state(s: &FieldState, shift: &[isize]) -> FieldState {
    let fields = s
        .fields()
        .into_iter()
        .map(|f| {
            shift
                .iter()
                .enumerate()
                .fold(f.clone(), |acc, (a, &d)| roll(&acc, a, d))
        })
        .collect();
    FieldState::from_fields(fields, s.time).unwrap()
}

fn plane_wave(grid: &Arc<Grid>, kw: f64) -> (RealLattice, RealLattice) {
    let a = (2.0 / grid.length(0)).sqrt();
    (
        RealLattice::from_fn(grid, |x| a * (kw * x[0]).sin()),
        RealLattice::from_fn(grid, |x| a * (kw * x[0]).cos()),
    )
}

#[test]
fn zero_state_charges() {
    let g = make_grid(&[(16, 4.0), (16, 4.0)]).unwrap();
    let z = FieldState::zeros(&g);
    assert!(momentum_density(&z).iter().all(|f| f.max_abs() == 0.0));
    assert_eq!(momentum_charge(&z), vec![0.0, 0.0]);
    assert_eq!(angular_momentum_charge(&z).unwrap().get(0, 1), 0.0);
    assert_eq!(phase_charge(&z), 0.0);
    let one_d = make_grid(&[(16, 4.0)]).unwrap();
    assert!(angular_momentum_charge(&FieldState::zeros(&one_d)).is_err());
}

#[test]
fn single_term_density() {
    let g = make_grid(&[(32, 2.0 * PI)]).unwrap();
    let kw = 2.0;
    let mut s = FieldState::zeros(&g);
    s.p = RealLattice::constant(&g, 1.0);
    s.q = RealLattice::from_fn(&g, |x| (kw * x[0]).sin());
    let d = &momentum_density(&s)[0];
    let want = RealLattice::from_fn(&g, |x| kw * (kw * x[0]).cos());
    assert!((d - &want).max_abs() < 1e-13);
}

#[test]
fn density_matches_finite_difference_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let g = make_grid(&[(64, 2.0 * PI), (64, 2.0 * PI)]).unwrap();
    let s = random_state(&g, 2, &mut rng);
    let got = momentum_density(&s);
    let n = 2;
    for (j, dens) in got.iter().enumerate() {
        let mut want = &s.p * 0.0;
        let term = |a: &RealLattice, b: &RealLattice| {
            a.zip_map(&fd6(b, j), |x, y| x * y).unwrap()
        };
        want = &want + &term(&s.p, &s.q);
        for i in 0..n {
            want = &want + &term(&s.aux_p[i], &s.aux_q[i]);
            want = &want + &term(&s.pi[i], &s.eta[i]);
        }
        // h⁶·|∂⁷f|/140 with h ≈ 0.1 and modes ≤ 2.
        assert!((dens - &want).max_abs() < 1e-5, "{}", (dens - &want).max_abs());
    }
}

#[test]
fn adiabatic_plane_wave_momentum() {
    let l = 2.0 * PI;
    let g = make_grid(&[(64, l)]).unwrap();
    let kw = 3.0;
    let k = natural(50.0);
    let kappa = k.kappa();
    let (p, q) = plane_wave(&g, kw);
    let reduced = momentum_charge_reduced(&p, &q).unwrap()[0];
    assert!((reduced - kw).abs() < 1e-12);
    let corr = momentum_correction_term(&p, &q, &k).unwrap()[0];
    assert!((corr - 2.0 * kappa * kappa * kw.powi(3)).abs() < 1e-12);
    let s = init_adiabatic(&p, &q, &k).unwrap();
    let full = momentum_charge(&s)[0];
    assert!((full - kw * (1.0 + 2.0 * kappa * kappa * kw * kw)).abs() < 1e-12);
    let pc = phase_charge(&s);
    assert!((pc - (1.0 + 2.0 * kappa * kappa * kw * kw)).abs() < 1e-12);
    assert!((pair_norm(&s) - 1.0).abs() < 1e-12);
}

#[test]
fn reduced_and_correction_edge_cases() {
    let g = make_grid(&[(32, 5.0)]).unwrap();
    let q = smooth_field(&g, 3, &mut ChaCha8Rng::seed_from_u64(2));
    assert!(momentum_charge_reduced(&q, &q).unwrap()[0].abs() < 1e-13);
    let p = RealLattice::constant(&g, 0.7);
    assert_eq!(momentum_correction_term(&p, &q, &natural(3.0)).unwrap()[0].abs(), 0.0);
    let other = make_grid(&[(16, 5.0)]).unwrap();
    assert!(momentum_charge_reduced(&p, &RealLattice::zeros(&other)).is_err());
}

#[test]
fn gaussian_packet_momentum_tracks_carrier() {
    let g = make_grid(&[(128, 40.0)]).unwrap();
    let k0 = 1.5;
    let (p, q) = packet(&g, vec![0.0], 2.0, vec![k0]);
    let norm = common::pair_norm(&p, &q);
    for c in [20.0, 40.0, 80.0] {
        let k = natural(c);
        let m = momentum_charge(&init_adiabatic(&p, &q, &k).unwrap())[0];
        let kappa2 = k.kappa().powi(2);
        // Correction is 2κ²⟨k³⟩ ≤ 2κ²(k0 + 3/w)³ per unit norm.
        let bound = 2.0 * kappa2 * (k0 + 1.5f64).powi(3) * norm;
        assert!((m - k0 * norm).abs() <= bound, "c={c}: {m} vs {}", k0 * norm);
    }
}

#[test]
fn vortex_angular_momentum() {
    let g = make_grid(&[(128, 16.0), (128, 16.0)]).unwrap();
    let k = natural(2000.0);
    let vortex = |x: &[f64]| Complex64::new(x[0], x[1]) * (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp();
    let (p, q) = pair_from_psi(&g, vortex);
    let norm = common::pair_norm(&p, &q);
    let l = angular_momentum_charge(&init_adiabatic(&p, &q, &k).unwrap())
        .unwrap()
        .get(0, 1);
    assert!((l - norm).abs() <= 1e-6 * norm + 10.0 * k.kappa().powi(2), "{l} vs {norm}");
    let (p, q) = pair_from_psi(&g, |x| vortex(&[x[1], x[0]]));
    let swapped = angular_momentum_charge(&init_adiabatic(&p, &q, &k).unwrap())
        .unwrap()
        .get(0, 1);
    assert!((swapped + l).abs() <= 1e-12 * norm);
}

#[test]
fn charge_record_and_csv() {
    let g = make_grid(&[(16, 8.0), (16, 8.0)]).unwrap();
    let k = natural(5.0);
    let (p, q) = packet(&g, vec![0.0, 0.0], 1.0, vec![1.0, 0.0]);
    let s = init_adiabatic(&p, &q, &k).unwrap();
    let r = ChargeRecord::measure(&s, &Potential::zero(&g), &k).unwrap();
    assert!(r.is_finite());
    assert_eq!(r.momentum, momentum_charge(&s));
    assert_eq!(r.phase_charge, phase_charge(&s));
    assert_eq!(
        charge_csv_header(2),
        ["time", "energy", "m_1", "m_2", "L_12", "phase_charge", "adiabatic_residual", "norm"]
    );
    assert_eq!(charge_csv_header(1).len(), 6);
    assert_eq!(charge_csv_header(3).len(), 11);
    let mut buf = Vec::new();
    write_charge_csv(&mut buf, 2, &[r.clone(), r]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1], rows[2]);
    assert_eq!(rows[1].split(',').count(), 8);
}

#[test]
fn free_balance_residual_is_small() {
    // Fast-branch admixture of an adiabatic start ripples the reduced
    // momentum at roughly c⁻⁴; c = 1000 puts it near 1e-10.
    let g = make_grid(&[(64, 30.0)]).unwrap();
    let k = natural(1000.0);
    let (p, q) = packet(&g, vec![0.0], 1.5, vec![1.0]);
    let s = init_adiabatic(&p, &q, &k).unwrap();
    let pot = Potential::zero(&g);
    let st = Stepper::new(&pot, &k, 0.4 / k.planck_frequency(), DtPolicy::Enforce).unwrap();
    let mut history = vec![s];
    for _ in 0..8 {
        let next = st.evolve(history.last().unwrap(), 25_000).unwrap();
        history.push(next);
    }
    let res = momentum_balance_residual(&history, &pot, &k).unwrap();
    assert_eq!(res.len(), 7);
    let worst = res.iter().map(|r| r.residual[0].abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-8, "{worst}");
}

#[test]
fn balance_residual_rejects_bad_histories() {
    let g = make_grid(&[(16, 8.0)]).unwrap();
    let k = natural(5.0);
    let pot = Potential::zero(&g);
    let mut a = FieldState::zeros(&g);
    let mut b = a.clone();
    b.time = 1.0;
    assert!(momentum_balance_residual(&[a.clone(), b.clone()], &pot, &k).is_err());
    let mut c = a.clone();
    c.time = 3.0;
    assert!(momentum_balance_residual(&[a.clone(), b.clone(), c], &pot, &k).is_err());
    a.time = -1.0;
    assert!(momentum_balance_residual(&[a, FieldState::zeros(&g), b], &pot, &k).is_ok());
}

#[test]
fn linear_potential_uniform_force() {
    let g = make_grid(&[(128, 40.0)]).unwrap();
    let k = natural(100.0);
    let gforce = 0.3;
    let pot = Potential::linear(&g, &[gforce]);
    let (p, q) = packet(&g, vec![0.0], 1.5, vec![0.0]);
    let s = init_adiabatic(&p, &q, &k).unwrap();
    let norm = common::pair_norm(&p, &q);
    let st = Stepper::new(&pot, &k, 0.4 / k.planck_frequency(), DtPolicy::Enforce).unwrap();
    let mut history = vec![s];
    for _ in 0..10 {
        let next = st.evolve(history.last().unwrap(), 500).unwrap();
        history.push(next);
    }
    let res = momentum_balance_residual(&history, &pot, &k).unwrap();
    let worst = res.iter().map(|r| r.residual[0].abs()).fold(0.0, f64::max);
    // Floor set by the O(κ²) gap between the field and Schrödinger dynamics.
    assert!(worst <= 1e-4 * gforce * norm, "{worst}");
    // Uniform force: reduced momentum decreases linearly at rate g·norm.
    let m0 = momentum_charge_reduced(&history[0].p, &history[0].q).unwrap()[0];
    let m1 = {
        let last = history.last().unwrap();
        momentum_charge_reduced(&last.p, &last.q).unwrap()[0]
    };
    let rate = (m1 - m0) / history.last().unwrap().time;
    assert!((rate + gforce * norm).abs() <= 1e-4 * gforce * norm, "{rate}");
}

#[test]
fn harmonic_balance_residual_is_second_order_in_sampling() {
    let g = make_grid(&[(64, 20.0)]).unwrap();
    let k = natural(100.0);
    let omega = 1.0;
    let pot = Potential::harmonic(&g, 1.0, omega);
    // Coherent state displaced by 2.
    let (p, q) = packet(&g, vec![2.0], (1.0 / (2.0 * omega)).sqrt(), vec![0.0]);
    let s = init_adiabatic(&p, &q, &k).unwrap();
    let fine = 0.1;
    let dt = fine / 2500.0;
    let st = Stepper::new(&pot, &k, dt, DtPolicy::Enforce).unwrap();
    let mut history = vec![s];
    for _ in 0..20 {
        let next = st.evolve(history.last().unwrap(), 2500).unwrap();
        history.push(next);
    }
    let coarse: Vec<FieldState> = history.iter().step_by(2).cloned().collect();
    let worst = |h: &[FieldState]| {
        momentum_balance_residual(h, &pot, &k)
            .unwrap()
            .iter()
            .map(|r| r.residual[0].abs())
            .fold(0.0, f64::max)
    };
    let (rf, rc) = (worst(&history), worst(&coarse));
    let order = (rc / rf).log2();
    assert!((order - 2.0).abs() < 0.2, "order {order}: {rc} -> {rf}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn reduced_momentum_is_quantum_expectation(seed: u64, two_d: bool) {
        let g = if two_d {
            make_grid(&[(32, 6.0), (16, 4.0)]).unwrap()
        } else {
            make_grid(&[(64, 9.0)]).unwrap()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = smooth_field(&g, 3, &mut rng);
        let q = smooth_field(&g, 3, &mut rng);
        let reduced = momentum_charge_reduced(&p, &q).unwrap();
        let w = to_wavefunction(&p, &q).unwrap();
        let e = momentum_expectation(&w, 1.0, Normalization::Raw);
        let scale = p.l2_norm() * q.l2_norm() + 1.0;
        for j in 0..g.ndim() {
            prop_assert!((reduced[j] - e.value[j]).abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn correction_identity(seed: u64, two_d: bool, c in 2.0f64..50.0) {
        let g = if two_d {
            make_grid(&[(32, 6.0), (16, 4.0)]).unwrap()
        } else {
            make_grid(&[(64, 9.0)]).unwrap()
        };
        let k = natural(c);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = smooth_field(&g, 3, &mut rng);
        let q = smooth_field(&g, 3, &mut rng);
        let full = momentum_charge(&init_adiabatic(&p, &q, &k).unwrap());
        let reduced = momentum_charge_reduced(&p, &q).unwrap();
        let corr = momentum_correction_term(&p, &q, &k).unwrap();
        for j in 0..g.ndim() {
            let want = reduced[j] + corr[j];
            prop_assert!((full[j] - want).abs() <= 1e-11 * full[j].abs().max(1.0));
        }
    }

    #[test]
    fn momentum_charge_matches_sign_fixed_density(seed: u64) {
        // m_j = −∫ T⁰_j, with T⁰_j summed independently of the library.
        let g = make_grid(&[(16, 5.0), (16, 7.0)]).unwrap();
        let s = random_state(&g, 2, &mut ChaCha8Rng::seed_from_u64(seed));
        let m = momentum_charge(&s);
        for j in 0..2 {
            let d = |f: &RealLattice| spectral_derivative(f, j).unwrap();
            let mut t = noether_lattice::lattice::inner_product(&s.p, &d(&s.q)).unwrap();
            for i in 0..2 {
                t += noether_lattice::lattice::inner_product(&s.aux_p[i], &d(&s.aux_q[i])).unwrap();
                t += noether_lattice::lattice::inner_product(&s.pi[i], &d(&s.eta[i])).unwrap();
            }
            prop_assert!((m[j] + t).abs() <= 1e-12 * t.abs().max(1.0));
        }
    }

    #[test]
    fn angular_momentum_translation_covariance(
        seed: u64,
        dx in -6isize..=6,
        dy in -6isize..=6,
        k0x in -1.0f64..1.0,
        k0y in -1.0f64..1.0,
    ) {
        let g = make_grid(&[(64, 32.0), (64, 32.0)]).unwrap();
        let k = natural(10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let center = vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let (p, q) = packet(&g, center, 1.2, vec![k0x, k0y]);
        let s = init_adiabatic(&p, &q, &k).unwrap();
        let m = momentum_charge(&s);
        let l0 = angular_momentum_charge(&s).unwrap().get(0, 1);
        let shifted = roll_state(&s, &[dx, dy]);
        let a = [dx as f64 * g.spacing(0), dy as f64 * g.spacing(1)];
        let l1 = angular_momentum_charge(&shifted).unwrap().get(0, 1);
        let want = l0 + a[0] * m[1] - a[1] * m[0];
        let tol = 1e-12 * l0.abs().max(1.0);
        prop_assert!((l1 - want).abs() <= tol, "{l1} vs {want}");
        let about = angular_momentum_charge_about(&shifted, &a).unwrap().get(0, 1);
        prop_assert!((about - l0).abs() <= tol, "{about} vs {l0}");
    }

    #[test]
    fn phase_charge_is_conserved(seed: u64, with_potential: bool) {
        let g = make_grid(&[(32, 10.0)]).unwrap();
        let k = natural(8.0);
        let s = random_state(&g, 3, &mut ChaCha8Rng::seed_from_u64(seed));
        let pot = if with_potential {
            Potential::gaussian_well(&g, 3.0, 1.0)
        } else {
            Potential::zero(&g)
        };
        let st = Stepper::new(&pot, &k, 0.4 / k.planck_frequency(), DtPolicy::Enforce).unwrap();
        let c0 = phase_charge(&s);
        let c1 = phase_charge(&st.evolve(&s, 10_000).unwrap());
        prop_assert!((c1 - c0).abs() <= 1e-10 * c0, "{c0} -> {c1}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn rotational_potential_conserves_angular_momentum(
        seed: u64,
        k0x in -1.0f64..1.0,
        k0y in -1.0f64..1.0,
    ) {
        let g = make_grid(&[(128, 2.0 * PI * 5.0), (128, 2.0 * PI * 5.0)]).unwrap();
        let k = natural(5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let center = vec![rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
        let (p, q) = packet(&g, center, 0.9, vec![k0x, k0y]);
        let s = init_adiabatic(&p, &q, &k).unwrap();
        let pot = Potential::harmonic(&g, 1.0, 1.0);
        let st = Stepper::new(&pot, &k, 0.4 / k.planck_frequency(), DtPolicy::Enforce).unwrap();
        let l0 = angular_momentum_charge(&s).unwrap().get(0, 1);
        let mut cur = s;
        let scale = phase_charge(&cur);
        // Horizon t ≈ 4 keeps the packet clear of the box edge, where V ≫ ω_P.
        for _ in 0..4 {
            cur = st.evolve(&cur, 62).unwrap();
            let l = angular_momentum_charge(&cur).unwrap().get(0, 1);
            prop_assert!((l - l0).abs() <= 1e-8 * scale, "{l0} -> {l}");
        }
    }
}

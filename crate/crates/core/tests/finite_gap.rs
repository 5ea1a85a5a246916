use hillspec::elliptic;
use hillspec::finite_gap::{self, Periodicity};
use hillspec::kdv::KdVField;
use hillspec::kdv;
use hillspec::ode_core::Hill;
use hillspec::spectrum::{self, SpectrumOptions};
use hillspec::C64;
use std::f64::consts::PI;

fn curve_of(pot: &hillspec::ode_core::PeriodicPotential, n_max: usize) -> finite_gap::HyperellipticData {
    let sd = spectrum::spectral_data(&Hill::new(pot.clone()), n_max, SpectrumOptions::default()).unwrap();
    finite_gap::HyperellipticData::from_spectral(&sd).unwrap()
}

#[test]
fn theta_formula_reproduces_lame_potentials() {
    for (two, (p, edges)) in [(false, elliptic::lame1(0.5, PI)), (true, elliptic::lame2(0.3, PI))] {
        let pot = p.translated(0.3 * PI);
        let h = curve_of(&pot, 8);
        assert_eq!(h.genus, if two { 2 } else { 1 });
        for (a, b) in h.edges.iter().zip(&edges) {
            assert!((a + h.shift - b).abs() < 1e-8);
        }
        let th = h.theta().unwrap();
        for k in 0..7 {
            let x = k as f64 * 0.45;
            let u = finite_gap::its_matveev_jet(&h, &th, x, 0.0).unwrap().u;
            assert!((u - pot.eval(x)).abs() < 1e-7, "x={x}: {u} vs {}", pot.eval(x));
        }
    }
}

#[test]
fn theta_solution_matches_spectral_kdv() {
    let (p, _) = elliptic::lame2(0.3, PI);
    let pot = p.translated(0.3 * PI);
    let h = curve_of(&pot, 8);
    let th = h.theta().unwrap();
    let t = 0.05;
    let u0 = KdVField::from_potential(&pot, 128).unwrap();
    let field = kdv::reference_kdv(&u0, t, 4000).unwrap().to_potential().unwrap();
    for k in 0..5 {
        let x = k as f64 * 0.6;
        let u = finite_gap::its_matveev_jet(&h, &th, x, t).unwrap().u;
        assert!((u - field.eval(x)).abs() < 1e-6, "x={x}: {u} vs {}", field.eval(x));
    }
}

#[test]
fn spectral_round_trip() {
    let edges = [0.0, 0.7, 1.9, 2.4, 4.1];
    let h = finite_gap::build_curve(&edges).unwrap();
    let th = h.theta().unwrap();
    let cert = finite_gap::periodicity_certificates(&h, Periodicity::Space, 1e-8);
    // generic edges have no spatial period: sample the genus-1 case instead
    assert!(cert.period.is_none(), "{cert:?}");
    let h1 = finite_gap::build_curve(&[0.4, 1.3, 2.0]).unwrap();
    let th1 = h1.theta().unwrap();
    let period = finite_gap::periodicity_certificates(&h1, Periodicity::Space, 1e-8).period.unwrap();
    let n = 256;
    let samples: Vec<f64> = (0..n)
        .map(|j| finite_gap::its_matveev_jet(&h1, &th1, period * j as f64 / n as f64, 0.0).unwrap().u)
        .collect();
    let pot = KdVField::new(period, 0.0, samples).unwrap().to_potential().unwrap();
    let sd = spectrum::spectral_data(&Hill::new(pot), 4, SpectrumOptions::default()).unwrap();
    let got: Vec<f64> = sd.edges.iter().map(|e| e + sd.shift).collect();
    assert_eq!(got.len(), 3, "{got:?}");
    for (a, b) in got.iter().zip([0.4, 1.3, 2.0]) {
        assert!((a - b).abs() < 1e-5, "{got:?}");
    }
    let _ = th;
}

#[test]
fn x_period_of_the_theta_solution() {
    let h = finite_gap::build_curve(&[0.4, 1.3, 2.0]).unwrap();
    let th = h.theta().unwrap();
    let t1 = finite_gap::periodicity_certificates(&h, Periodicity::Space, 1e-8).period.unwrap();
    for &x in &[0.0, 0.37, 1.2] {
        let a = finite_gap::its_matveev_jet(&h, &th, x, 0.2).unwrap().u;
        let b = finite_gap::its_matveev_jet(&h, &th, x + t1, 0.2).unwrap().u;
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn cnoidal_period_recovered() {
    let (p, _) = elliptic::lame1(0.5, PI);
    let h = curve_of(&p, 8);
    let cert = finite_gap::periodicity_certificates(&h, Periodicity::Space, 1e-8);
    assert!((cert.period.unwrap() - PI).abs() < 1e-6, "{cert:?}");
    assert!(cert.jump_residual < 1e-7);
    let time = finite_gap::periodicity_certificates(&h, Periodicity::Time, 1e-8);
    assert!(time.period.is_some() && time.jump_residual < 1e-7, "{time:?}");
}

#[test]
fn baker_akhiezer_asymptotics_and_poles() {
    let mut h = finite_gap::build_curve(&[0.0, 0.7, 1.9, 2.4, 4.1]).unwrap();
    // interior divisor points, where λ is a local parameter
    h.set_divisor(vec![(1.3, 1), (3.0, -1)]).unwrap();
    let th = h.theta().unwrap();
    let (x, t) = (0.8, 0.1);
    let mut prev = f64::INFINITY;
    let mut ratio = 0.0;
    for j in 0..5 {
        let l = C64::new(-10.0 * 4f64.powi(j), 0.0);
        let k = hillspec::branch::sqrt(l);
        let b = finite_gap::baker_akhiezer_full(&h, &th, x, t, l, 1, None).unwrap();
        let d = ((b.log_psi - C64::i() * k * x - 4.0 * C64::i() * k * k * k * t).exp() - 1.0).norm();
        assert!(d < prev, "{j}: {d}");
        ratio = d / prev;
        prev = d;
    }
    // the defect is O(λ^{-1/2}): it halves for each factor 4 in λ
    assert!(prev < 0.02 && (ratio - 0.5).abs() < 0.1, "{prev} {ratio}");
    for &(mu, sheet) in &h.divisor {
        let ds: Vec<f64> = (0..4).map(|k| 1e-3 * 0.5f64.powi(k)).collect();
        let v: Vec<f64> = ds
            .iter()
            .map(|&d| {
                finite_gap::baker_akhiezer_full(&h, &th, x, t, C64::new(mu, d), sheet, None).unwrap().psi.norm()
            })
            .collect();
        let slope = kdv::local_exponent(&ds, &v);
        assert!((slope + 1.0).abs() < 0.05, "{mu}: {slope}");
        // the other sheet is regular there
        let w: Vec<f64> =
            ds.iter().map(|&d| finite_gap::baker_akhiezer_full(&h, &th, x, t, C64::new(mu, d), -sheet, None).unwrap().psi.norm()).collect();
        assert!(kdv::local_exponent(&ds, &w).abs() < 0.05);
    }
}

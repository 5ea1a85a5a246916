use hillspec::cli_io::parse_grid;
use hillspec::elliptic;
use hillspec::finite_gap::{self, Theta};
use hillspec::floquet;
use hillspec::ode_core::{Hill, PeriodicPotential};
use hillspec::products::{det2, RHPData, TailMode, Which};
use hillspec::rhp_verify;
use hillspec::spectrum::{self, GapEntry, SpectralData, SpectrumOptions};
use hillspec::C64;
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::OnceLock;

fn one_gap() -> &'static (Hill, RHPData) {
    static DATA: OnceLock<(Hill, RHPData)> = OnceLock::new();
    DATA.get_or_init(|| {
        let (p, _) = elliptic::lame1(0.5, PI);
        RHPData::normalized(p.translated(0.3 * PI), 12, 200, TailMode::FreeTail).unwrap()
    })
}

fn mathieu_data() -> &'static SpectralData {
    static DATA: OnceLock<SpectralData> = OnceLock::new();
    DATA.get_or_init(|| {
        let h = Hill::new(PeriodicPotential::mathieu(2.0));
        spectrum::spectral_data(&h, 6, SpectrumOptions::default()).unwrap()
    })
}

fn genus2_theta() -> &'static Theta {
    static DATA: OnceLock<Theta> = OnceLock::new();
    DATA.get_or_init(|| finite_gap::build_curve(&[0.0, 1.0, 2.5, 4.0, 6.0]).unwrap().theta().unwrap())
}

fn off_axis() -> impl Strategy<Value = C64> {
    (-10.0f64..40.0, 0.3f64..5.0, any::<bool>()).prop_map(|(re, im, up)| C64::new(re, if up { im } else { -im }))
}

fn near(a: C64, b: C64, rel: f64) -> bool {
    (a - b).norm() <= rel * a.norm().max(b.norm()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn multiplier_inverts_and_sums_to_discriminant(l in off_axis()) {
        let (h, rhp) = one_gap();
        let rho = floquet::multiplier(h, rhp, l, None).unwrap();
        let d = floquet::discriminant(h, l).unwrap();
        prop_assert!(near(rho + 1.0 / rho, d, 1e-10));
    }

    #[test]
    fn discriminant_is_real_symmetric(l in off_axis()) {
        let (h, rhp) = one_gap();
        let d = floquet::discriminant(h, l).unwrap();
        let dc = floquet::discriminant(h, l.conj()).unwrap();
        prop_assert!(near(dc, d.conj(), 1e-10));
        let r = floquet::multiplier(h, rhp, l, None).unwrap();
        let rc = floquet::multiplier(h, rhp, l.conj(), None).unwrap();
        prop_assert!(near(rc, r.conj(), 1e-8));
    }

    #[test]
    fn sqrt_f0_squares_to_f0(l in off_axis()) {
        let (_, rhp) = one_gap();
        let s = rhp.sqrt_f0(l, None).unwrap();
        prop_assert!(near(s * s, rhp.f_function(Which::Zero, l), 1e-8));
    }

    #[test]
    fn quartic_root_matches_product(l in off_axis()) {
        let (_, rhp) = one_gap();
        let q = rhp.quartic_root_disc(l, None).unwrap();
        let want = rhp.delta_pm2_product(1, l) * rhp.delta_pm2_product(-1, l);
        prop_assert!(near(q.powi(4), want, 1e-8));
    }

    #[test]
    fn jump_matrices_are_unimodular(frac in 0.0f64..1.0, l in 0.01f64..50.0) {
        let (_, rhp) = one_gap();
        let x = frac * rhp.period();
        let e = rhp.edges();
        prop_assume!(e.iter().all(|&k| (l - k).abs() > 1e-3));
        prop_assume!((1..=12).all(|n| (l - rhp.mu(n)).abs() > 1e-3));
        if let Ok(v) = rhp.jump_v(x, l) {
            prop_assert!((det2(&v) - 1.0).norm() < 1e-8, "{}", det2(&v));
        }
    }

    #[test]
    fn phi_is_unimodular(frac in 0.0f64..1.0, l in off_axis()) {
        let (h, rhp) = one_gap();
        let r = rhp_verify::verify_det(h, rhp, frac * rhp.period(), &[l]).unwrap();
        prop_assert!(r < 1e-8, "{r}");
    }

    #[test]
    fn lower_triangular_left_factor_keeps_first_row(frac in 0.0f64..1.0, l in off_axis(), a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let (h, rhp) = one_gap();
        let d = rhp_verify::uniqueness_surrogate(h, rhp, frac * rhp.period(), l, C64::new(a, b)).unwrap();
        prop_assert_eq!(d, 0.0);
    }

    #[test]
    fn theta_is_even(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, d in -3.0f64..3.0) {
        let th = genus2_theta();
        let z = [C64::new(a, b), C64::new(c, d)];
        let mz = [-z[0], -z[1]];
        prop_assert!(near(th.eval(&z).unwrap(), th.eval(&mz).unwrap(), 1e-12));
    }

    #[test]
    fn theta_quasi_periods(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, d in -3.0f64..3.0, j in 0usize..2) {
        let curve = finite_gap::build_curve(&[0.0, 1.0, 2.5, 4.0, 6.0]).unwrap();
        let th = genus2_theta();
        let z = [C64::new(a, b), C64::new(c, d)];
        let base = th.eval(&z).unwrap();
        let mut zi = z;
        zi[j] += C64::new(0.0, 2.0 * PI);
        prop_assert!(near(th.eval(&zi).unwrap(), base, 1e-11));
        let mut zt = z;
        zt[0] += curve.tau[0][j];
        zt[1] += curve.tau[1][j];
        let factor = (-z[j] - 0.5 * curve.tau[j][j]).exp();
        prop_assert!(near(th.eval(&zt).unwrap(), factor * base, 1e-10));
    }

    #[test]
    fn riemann_matrix_is_symmetric(gaps in prop::collection::vec(0.2f64..2.0, 4)) {
        let mut edges = vec![0.0];
        for w in gaps {
            edges.push(edges.last().unwrap() + w);
        }
        let curve = finite_gap::build_curve(&edges).unwrap();
        prop_assert!(curve.symmetry_residual() <= 1e-10, "{}", curve.symmetry_residual());
        prop_assert!(Theta::new(&curve.tau).is_ok());
    }

    #[test]
    fn moving_dirichlet_points_inside_gaps_keeps_admissibility(
        fracs in prop::collection::vec(0.02f64..0.98, 6),
        signs in prop::collection::vec(any::<bool>(), 6),
    ) {
        let sd = mathieu_data();
        let gaps: Vec<GapEntry> = sd
            .gaps
            .iter()
            .zip(fracs.iter().zip(&signs))
            .map(|(g, (f, s))| {
                let (a, b) = (sd.edges[2 * g.k - 1], sd.edges[2 * g.k]);
                GapEntry { mu: a + f * (b - a), sigma: if *s { 1 } else { -1 }, ..*g }
            })
            .collect();
        let rep = spectrum::admissibility_check(&sd.edges, &gaps);
        prop_assert!(rep.passed(), "{:?}", rep.conditions);
    }

    #[test]
    fn grids_are_equispaced(lo in -100.0f64..100.0, w in 0.1f64..50.0, n in 2usize..200) {
        let g = parse_grid(&format!("{lo}:{}:{n}", lo + w)).unwrap();
        prop_assert_eq!(g.len(), n);
        prop_assert!((g[0] - lo).abs() < 1e-12 && (g[n - 1] - lo - w).abs() < 1e-9);
        let step = w / (n - 1) as f64;
        prop_assert!(g.windows(2).all(|p| (p[1] - p[0] - step).abs() < 1e-9));
    }
}

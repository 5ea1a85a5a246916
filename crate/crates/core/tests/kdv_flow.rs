use hillspec::branch::Side;
use hillspec::elliptic;
use hillspec::kdv::{self, EvolveOptions, KdVField, KdVHistory};
use hillspec::ode_core::PeriodicPotential;
use hillspec::products::{det2, RHPData, TailMode};
use hillspec::rhp_verify;
use hillspec::C64;
use std::f64::consts::PI;

struct Flow {
    pot: PeriodicPotential,
    rhp: RHPData,
    hist: KdVHistory,
    traj: kdv::DirichletTrajectory,
}

fn flow(t_end: f64) -> Flow {
    let (p, _) = elliptic::lame1(0.5, PI);
    let pot = p.translated(0.3 * PI);
    let (_, rhp) = RHPData::normalized(pot.clone(), 12, 200, TailMode::FreeTail).unwrap();
    let u0 = KdVField::from_potential(&pot, 128).unwrap();
    let hist = KdVHistory::run(&u0, t_end, (t_end * 40000.0).ceil() as usize).unwrap();
    let traj = kdv::evolve_dirichlet(&hist, &rhp, t_end, EvolveOptions::default()).unwrap();
    Flow { pot, rhp, hist, traj }
}

#[test]
fn e_has_the_expected_zero_and_pole() {
    let f = flow(0.05);
    let t = 0.05;
    let (n, mu_t, s_t) = f.traj.state_at(t)[0];
    let (_, mu_0, s_0) = f.traj.state_at(0.0)[0];
    let (a, b) = f.rhp.edge_pair(n);
    let w = b - a;
    assert!((mu_t - mu_0).abs() > 0.05 * w, "points too close for a clean fit");
    let ds: Vec<f64> = (0..4).map(|k| 4e-3 * w * 0.5f64.powi(k)).collect();
    let at = |c: f64, s: i32| -> Vec<f64> {
        ds.iter().map(|&d| kdv::e_pm(&f.hist, &f.traj, &f.rhp, t, C64::new(c, d), s, None).unwrap().norm()).collect()
    };
    let zero = kdv::local_exponent(&ds, &at(mu_t, s_t as i32));
    let pole = kdv::local_exponent(&ds, &at(mu_0, s_0 as i32));
    assert!((zero - 1.0).abs() < 0.05, "zero exponent {zero}");
    assert!((pole + 1.0).abs() < 0.05, "pole exponent {pole}");
    // only one sign is singular at a point: the other is regular there, so
    // e⁺e⁻ carries exactly the simple zero / pole and nothing doubled
    let other_zero = kdv::local_exponent(&ds, &at(mu_t, -(s_t as i32)));
    let other_pole = kdv::local_exponent(&ds, &at(mu_0, -(s_0 as i32)));
    assert!(other_zero.abs() < 0.05 && other_pole.abs() < 0.05, "{other_zero} {other_pole}");
    for (c, want) in [(mu_t, 1.0), (mu_0, -1.0)] {
        let prod: Vec<f64> = ds
            .iter()
            .map(|&d| {
                let l = C64::new(c, d);
                (kdv::e_pm(&f.hist, &f.traj, &f.rhp, t, l, 1, None).unwrap()
                    * kdv::e_pm(&f.hist, &f.traj, &f.rhp, t, l, -1, None).unwrap())
                .norm()
            })
            .collect();
        let k = kdv::local_exponent(&ds, &prod);
        assert!((k - want).abs() < 0.05, "{k}");
    }
}

#[test]
fn e_boundary_values_swap_on_bands() {
    let f = flow(0.03);
    let e = f.rhp.edges().to_vec();
    for lam in [0.5 * (e[0] + e[1]), e[2] + 0.7] {
        let l = C64::new(lam, 0.0);
        for s in [1, -1] {
            let p = kdv::e_pm(&f.hist, &f.traj, &f.rhp, 0.03, l, s, Some(Side::Plus)).unwrap();
            let m = kdv::e_pm(&f.hist, &f.traj, &f.rhp, 0.03, l, -s, Some(Side::Minus)).unwrap();
            assert!((p - m).norm() < 1e-7 * p.norm().max(1.0), "{lam}: {p} {m}");
        }
    }
}

#[test]
fn phi_kdv_is_unimodular_and_jumps_correctly() {
    let f = flow(0.03);
    let t = 0.03;
    for &l in &[C64::new(1.3, 0.7), C64::new(-4.0, 0.5), C64::new(6.0, -3.0)] {
        for &x in &[0.0, 1.1] {
            let phi = kdv::assemble_phi_kdv(&f.hist, &f.traj, &f.rhp, x, t, l, None).unwrap();
            assert!((det2(&phi) - 1.0).norm() < 1e-7, "{l} {x}: {}", det2(&phi));
        }
    }
    let e = f.rhp.edges().to_vec();
    // gap samples stay off the range swept by μ over [0, t]
    let lo = f.traj.mu.iter().map(|m| m[0]).fold(f64::INFINITY, f64::min) - 0.05;
    let hi = f.traj.mu.iter().map(|m| m[0]).fold(f64::NEG_INFINITY, f64::max) + 0.05;
    let band = [0.5 * (e[0] + e[1]), e[2] + 1.3];
    let gap: Vec<f64> = (1..20).map(|k| e[1] + (e[2] - e[1]) * k as f64 / 20.0).filter(|g| *g < lo || *g > hi).collect();
    assert!(!gap.is_empty());
    for lam in band.into_iter().chain(gap) {
        let r = kdv::jump_residual_kdv(&f.hist, &f.traj, &f.rhp, 0.9, t, lam).unwrap();
        assert!(r < 1e-6, "{lam}: {r}");
    }
}

#[test]
fn reconstruction_at_positive_time() {
    let t = 0.05;
    let f = flow(t);
    let field = f.hist.potential_at(t).unwrap();
    let ray = rhp_verify::default_reconstruction_ray();
    for &x in &[0.0, 0.9, 2.2] {
        let r = kdv::reconstruct_kdv(&f.hist, &f.traj, &f.rhp, x, t, &ray).unwrap();
        let want = field.eval(x);
        assert!((r.u - want).abs() < 1e-3, "x={x}: {} vs {want}", r.u);
    }
    let _ = &f.pot;
}

#[test]
fn edges_do_not_drift() {
    let (p, _) = elliptic::lame2(0.5, PI);
    let u0 = KdVField::from_potential(&p.translated(0.3 * PI), 128).unwrap();
    let rep = kdv::isospectrality_report(&u0, &[0.0, 0.05, 0.1], 3, 40000).unwrap();
    assert!(rep.max_drift < 1e-5, "{rep:?}");
}

#[test]
fn cnoidal_dirichlet_point_flips_twice_per_period() {
    let (p, _) = elliptic::lame1(0.5, PI);
    let a2 = (2.0 * elliptic::complete_k(0.5) / PI).powi(2);
    let period_t = PI / (4.0 * 1.5 * a2);
    let f = {
        let pot = p.translated(0.3 * PI);
        let (_, rhp) = RHPData::normalized(pot.clone(), 12, 200, TailMode::FreeTail).unwrap();
        let u0 = KdVField::from_potential(&pot, 128).unwrap();
        let hist = KdVHistory::run(&u0, period_t, (period_t * 20000.0).ceil() as usize).unwrap();
        let traj = kdv::evolve_dirichlet(&hist, &rhp, period_t, EvolveOptions::default()).unwrap();
        Flow { pot, rhp, hist, traj }
    };
    assert_eq!(f.traj.sigma_flips(0), 2);
    assert!(f.traj.chart.iter().any(|c| c[0] == kdv::Chart::Edge));
    let (_, m0, _) = f.traj.state_at(0.0)[0];
    let (_, m1, _) = f.traj.state_at(period_t)[0];
    assert!((m0 - m1).abs() < 1e-6, "{m0} {m1}");
    let oracle = kdv::dirichlet_oracle(&f.hist, f.rhp.sdata.shift, 0.5 * period_t, 1).unwrap()[0];
    assert!((f.traj.state_at(0.5 * period_t)[0].1 - oracle).abs() < 1e-5);
}

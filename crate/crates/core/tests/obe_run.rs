//! Stage-by-stage behaviour of a coarse Landau run.

use std::sync::OnceLock;

use eitsim::diagnostics::overlap;
use eitsim::drives::{landau_schedule, Beam, LandauTiming, ProbePulse};
use eitsim::obe::{dark_state_residual, run, Scenario};
use eitsim::series::TimeSeries;
use eitsim::{derive_constants, GridSpec, PhysParams};

const T_END: f64 = 0.6e-3;

fn scenario(t_end: f64) -> Scenario {
    let p = PhysParams::landau_reference();
    let c = derive_constants(&p, None).unwrap();
    let grid = GridSpec::centered(45, 41, 2e-4, 2e-4, 8e-8, t_end);
    let s = landau_schedule(&p, &c, 0, 0.0, 0.0, LandauTiming::default(), &grid.mesh()).unwrap();
    let mut sc = Scenario::new(grid, s);
    sc.solver.diffraction = false;
    sc.solver.snapshot_stride = 25;
    sc.solver.keep_full_state = true;
    sc
}

fn reference() -> &'static TimeSeries {
    static S: OnceLock<TimeSeries> = OnceLock::new();
    S.get_or_init(|| run(&scenario(T_END)).unwrap())
}

fn at(s: &TimeSeries, t: f64) -> &eitsim::obe::SimState {
    s.frames[s.nearest(t).unwrap()].state.as_deref().unwrap()
}

#[test]
fn probes_vanish_during_storage() {
    let s = reference();
    let t = LandauTiming::default();
    let peak = s.frames.iter().filter(|f| f.t < t.t_s).map(|f| f.state.as_ref().unwrap().probe[0].max_abs()).fold(0.0, f64::max);
    assert!(peak > 0.0);
    let stored = at(s, 0.5 * (t.t_s + t.t_r));
    for b in 0..4 {
        assert!(stored.probe[b].max_abs() < 1e-3 * peak, "beam {b}: {:e}", stored.probe[b].max_abs());
    }
}

#[test]
fn stored_coherence_is_frozen() {
    let s = reference();
    let t = LandauTiming::default();
    let a = at(s, t.t_s + 0.004e-3);
    let b = at(s, t.t_r - 0.004e-3);
    let drift = a.rho21.sub(&b.rho21).norm() / a.rho21.norm();
    assert!(drift < 1e-3, "{drift:e}");
    assert!(a.rho21.norm() > 0.0);
}

#[test]
fn retrieved_polariton_stays_dark() {
    let s = reference();
    let sc = scenario(T_END);
    for t in [0.45e-3, 0.5e-3, T_END] {
        let st = at(s, t);
        for beam in Beam::ALL {
            let r = dark_state_residual(st, &sc.schedule, beam);
            assert!(r < 0.2, "{} at {t:e}: {r}", beam.label());
        }
    }
}

#[test]
fn vacuum_without_probe_stays_empty() {
    let mut sc = scenario(0.45e-3);
    sc.schedule = sc.schedule.with_probe(ProbePulse::OFF);
    let s = run(&sc).unwrap();
    for f in &s.frames {
        for (name, field) in f.state.as_ref().unwrap().fields() {
            assert_eq!(field.max_abs(), 0.0, "{name} at {}", f.t);
        }
    }
}

/// A write step of two fine steps leaves the stored spin wave intact;
/// three steps are refused.
#[test]
fn coarse_write_step_is_accurate() {
    let t_r = LandauTiming::default().t_r;
    let go = |w: Option<f64>| {
        let mut sc = scenario(t_r);
        sc.solver.write_dt = w;
        sc.solver.keep_full_state = false;
        run(&sc).map(|s| s.frames.last().unwrap().rho21.clone())
    };
    let fine = go(None).unwrap();
    let coarse = go(Some(1.6e-7)).unwrap();
    let err = coarse.sub(&fine).norm() / fine.norm();
    assert!(err < 1e-3, "{err:e}");
    assert!(go(Some(2.4e-7)).is_err());
}

/// Transverse diffraction over the medium is a small correction, which is
/// why the bundled configs leave it off.
#[test]
fn diffraction_is_a_small_correction() {
    let mut sc = scenario(0.5e-3);
    sc.solver.diffraction = true;
    sc.solver.keep_full_state = false;
    let with = run(&sc).unwrap();
    let a = &with.frames.last().unwrap().rho21;
    let b = &at(reference(), 0.5e-3).rho21;
    let o = overlap(a, b).unwrap();
    assert!(o > 0.99, "{o}");
}

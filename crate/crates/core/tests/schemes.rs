//! Implicit and explicit integration of the same discretization agree, and
//! implicit runs stay physically bounded.

use dgmg::cases::CaseSetup;
use dgmg::cli::{integrate, Discretization, Integrator};
use dgmg::dg::dg_weights;
use dgmg::mgprecond::MGConfig;
use dgmg::state::NVAR;
use dgmg::timeint::NewtonParams;

fn theta(disc: &Discretization, u: &[f64]) -> Vec<f64> {
    disc.subcell_rows(u).unwrap().iter().map(|r| r[5]).collect()
}

fn advance(disc: &Discretization, integrator: Integrator, dt: f64, t: f64) -> Vec<f64> {
    let n = (t / dt).ceil() as usize;
    let mg = match integrator {
        Integrator::Implicit => Some(MGConfig::default()),
        Integrator::Explicit => None,
    };
    let u0 = disc.initial_state().unwrap();
    let (u, _) = integrate(disc, integrator, mg, &NewtonParams::default(), u0, t / n as f64, n, |_, _, _, _| Ok(())).unwrap();
    u
}

#[test]
fn implicit_and_explicit_rising_bubble_agree() {
    let case = CaseSetup::by_name("rising-bubble").unwrap();
    let disc = Discretization::new(&case, 3, 5, 10, 0).unwrap();
    let t = 60.0;
    let explicit = advance(&disc, Integrator::Explicit, disc.stable_dt(&disc.initial_state().unwrap(), 0.5).unwrap(), t);
    let implicit = advance(&disc, Integrator::Implicit, 2.0, t);
    let a = theta(&disc, &explicit);
    let b = theta(&disc, &implicit);
    let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let amp = case.perturbation.amplitude();
    assert!(diff <= 0.05 * amp, "max θ′ difference {diff} vs amplitude {amp}");
    // the bubble has moved, so agreement is not trivial
    let moved = a.iter().zip(theta(&disc, &disc.initial_state().unwrap())).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(moved > 0.1 * amp, "{moved}");
}

#[test]
fn density_current_stays_bounded_and_conserves_mass() {
    let case = CaseSetup::by_name("density-current").unwrap();
    let disc = Discretization::new(&case, 3, 16, 4, 0).unwrap();
    let u0 = disc.initial_state().unwrap();
    let u = advance(&disc, Integrator::Implicit, 2.0, 60.0);
    let amp = case.perturbation.amplitude();
    let th = theta(&disc, &u);
    let lo = th.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = th.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(lo > -1.1 * amp && hi < 0.1 * amp, "θ′ in [{lo}, {hi}]");
    let w = dg_weights(&disc.dg.grid, &disc.dg.basis);
    let mass = |u: &[f64]| -> f64 { w.iter().zip(u).step_by(NVAR).map(|(w, r)| w * r).sum() };
    let (m0, m1) = (mass(&u0), mass(&u));
    // stages are solved only to the Newton tolerance, so mass drifts at that level
    let tol = NewtonParams::default().tol;
    assert!((m1 - m0).abs() <= 1e-2 * tol * m0.abs(), "{m0} -> {m1}");
}

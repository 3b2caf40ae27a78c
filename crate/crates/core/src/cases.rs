//! Atmospheric test cases: background atmosphere, initial perturbation,
//! boundary conditions, constants and final times.

use std::f64::consts::PI;

use crate::dg::{node_position, DGBasis, DGField};
use crate::mesh::{BoundaryKind, BoundarySpec, Domain2D, LevelGrid};
use crate::physics::{Atmosphere, EulerGravity, PhysConstants};
use crate::state::ConservedState;
use crate::{Error, Result};

/// Potential temperature perturbation θ′(x, z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    /// θ_c (1 + ((x − x_c)/a)²)⁻¹ sin(π z / Z).
    Sinusoidal {
        theta_c: f64,
        x_c: f64,
        a: f64,
        height: f64,
    },
    /// Plateau of amplitude A0 inside radius a with a Gaussian flank of
    /// width s, cut off at r = a + 3s.
    FlattenedGaussian {
        amplitude: f64,
        center: [f64; 2],
        radius: f64,
        width: f64,
    },
    /// (θ_c/2)(1 + cos(π r)) inside the unit ellipse with semi-axes `radii`.
    CosineEllipse {
        theta_c: f64,
        center: [f64; 2],
        radii: [f64; 2],
    },
    None,
}

impl Perturbation {
    pub fn eval(&self, x: f64, z: f64) -> f64 {
        match *self {
            Perturbation::Sinusoidal {
                theta_c,
                x_c,
                a,
                height,
            } => {
                let d = (x - x_c) / a;
                theta_c / (1.0 + d * d) * (PI * z / height).sin()
            }
            Perturbation::FlattenedGaussian {
                amplitude,
                center,
                radius,
                width,
            } => {
                let r = (x - center[0]).hypot(z - center[1]);
                if r < radius {
                    amplitude
                } else if r - radius <= 3.0 * width {
                    let d = (r - radius) / width;
                    amplitude * (-d * d).exp()
                } else {
                    0.0
                }
            }
            Perturbation::CosineEllipse {
                theta_c,
                center,
                radii,
            } => {
                let r = ((x - center[0]) / radii[0]).hypot((z - center[1]) / radii[1]);
                if r < 1.0 {
                    0.5 * theta_c * (1.0 + (PI * r).cos())
                } else {
                    0.0
                }
            }
            Perturbation::None => 0.0,
        }
    }

    /// Largest |θ′|.
    pub fn amplitude(&self) -> f64 {
        match *self {
            Perturbation::Sinusoidal { theta_c, .. } => theta_c.abs(),
            Perturbation::FlattenedGaussian { amplitude, .. } => amplitude.abs(),
            Perturbation::CosineEllipse { theta_c, .. } => theta_c.abs(),
            Perturbation::None => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseSetup {
    pub name: &'static str,
    pub domain: Domain2D,
    pub consts: PhysConstants,
    pub atmosphere: Atmosphere,
    pub perturbation: Perturbation,
    pub bc: BoundarySpec,
    pub t_final: f64,
    /// Default desk-scale discretization.
    pub base_nx: usize,
    pub base_nz: usize,
    pub dg_level: usize,
    pub dt: f64,
}

pub const CASE_NAMES: [&str; 3] = ["inertia-gravity", "rising-bubble", "density-current"];

impl CaseSetup {
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "inertia-gravity" => Ok(inertia_gravity()),
            "rising-bubble" => Ok(rising_bubble()),
            "density-current" => Ok(density_current()),
            _ => Err(Error::Mesh(format!(
                "unknown case {name:?}, expected one of {}",
                CASE_NAMES.join(", ")
            ))),
        }
    }

    pub fn model(&self) -> EulerGravity {
        EulerGravity {
            consts: self.consts,
        }
    }

    pub fn background(&self, x: f64, z: f64) -> ConservedState {
        self.atmosphere.background(x, z, &self.consts)
    }

    pub fn theta_pert(&self, x: f64, z: f64) -> f64 {
        self.perturbation.eval(x, z)
    }

    /// Full state at (x, z) with the perturbation inserted at the background
    /// pressure, minus the background.
    pub fn initial_perturbation(&self, x: f64, z: f64) -> Result<ConservedState> {
        let full = self
            .atmosphere
            .state_with_theta(z, self.theta_pert(x, z), &self.consts)?;
        Ok(full - self.background(x, z))
    }

    /// Same case with a zero perturbation.
    pub fn unperturbed(mut self) -> Self {
        self.perturbation = Perturbation::None;
        self
    }
}

fn consts(cp: f64, cv: f64, g: f64, mu: f64) -> PhysConstants {
    PhysConstants::new(cp, cv, g, mu, 1.0e5).expect("case constants are valid")
}

fn domain(x_max: f64, z_max: f64) -> Domain2D {
    Domain2D::new(0.0, x_max, 0.0, z_max).expect("case domain is valid")
}

/// Gravity waves in a uniformly stratified atmosphere with mean flow.
pub fn inertia_gravity() -> CaseSetup {
    CaseSetup {
        name: "inertia-gravity",
        domain: domain(300_000.0, 10_000.0),
        consts: consts(1005.0, 717.95, 9.80665, 0.0),
        atmosphere: Atmosphere::Stratified {
            n_bv: 1.0e-2,
            t0: 250.0,
            u_mean: 20.0,
        },
        perturbation: Perturbation::Sinusoidal {
            theta_c: 0.01,
            x_c: 100_000.0,
            a: 5000.0,
            height: 10_000.0,
        },
        bc: BoundarySpec {
            west: BoundaryKind::Periodic,
            east: BoundaryKind::Periodic,
            south: BoundaryKind::Slip,
            north: BoundaryKind::Slip,
        },
        t_final: 3000.0,
        base_nx: 10,
        base_nz: 1,
        dg_level: 2,
        dt: 25.0,
    }
}

/// Warm bubble in a neutral atmosphere.
pub fn rising_bubble() -> CaseSetup {
    CaseSetup {
        name: "rising-bubble",
        domain: domain(1000.0, 2000.0),
        consts: consts(1005.0, 717.95, 9.80665, 0.0),
        atmosphere: Atmosphere::Neutral { theta0: 303.15 },
        perturbation: Perturbation::FlattenedGaussian {
            amplitude: 0.5,
            center: [500.0, 520.0],
            radius: 50.0,
            width: 100.0,
        },
        bc: BoundarySpec::all(BoundaryKind::Slip),
        t_final: 1200.0,
        base_nx: 5,
        base_nz: 10,
        dg_level: 2,
        dt: 6.0,
    }
}

/// Cold bubble falling onto the ground in a neutral viscous atmosphere.
pub fn density_current() -> CaseSetup {
    CaseSetup {
        name: "density-current",
        domain: domain(25_600.0, 6400.0),
        consts: consts(1004.0, 717.0, 9.81, 75.0),
        atmosphere: Atmosphere::Neutral { theta0: 300.0 },
        perturbation: Perturbation::CosineEllipse {
            theta_c: -15.0,
            center: [0.0, 3000.0],
            radii: [4000.0, 2000.0],
        },
        bc: BoundarySpec::all(BoundaryKind::Slip),
        t_final: 900.0,
        base_nx: 16,
        base_nz: 4,
        dg_level: 2,
        dt: 2.0,
    }
}

/// Nodal perturbation field U′ = U(θ̃ + θ′) − U(θ̃) on the DG mesh.
pub fn build_initial_state(case: &CaseSetup, grid: &LevelGrid, basis: &DGBasis) -> Result<DGField> {
    let mut out = DGField::zeros(grid.nx, grid.nz, basis.k);
    for e in 0..grid.n_cells() {
        for node in 0..basis.npe() {
            let (x, z) = node_position(grid, basis, e, node);
            out.set_node(e, node, case.initial_perturbation(x, z)?);
        }
    }
    Ok(out)
}

//! Pointwise physics of the 2D compressible equations with gravity in the
//! (ρ, ρu, ρw, ρθ) variables, the hydrostatic background atmospheres, and the
//! perturbation form of the fluxes used for well-balancing.

use crate::state::ConservedState;
use crate::{Error, Result};

/// x-flux and z-flux columns.
pub type FluxTensor = [ConservedState; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysConstants {
    pub cp: f64,
    pub cv: f64,
    pub g: f64,
    /// Kinematic viscosity-like coefficient μ (m²/s).
    pub mu: f64,
    pub p0: f64,
}

impl PhysConstants {
    pub fn new(cp: f64, cv: f64, g: f64, mu: f64, p0: f64) -> Result<Self> {
        if !(cp > cv && cv > 0.0) || mu < 0.0 || p0 <= 0.0 {
            return Err(Error::Inadmissible(format!(
                "physical constants cp={cp} cv={cv} mu={mu} p0={p0}"
            )));
        }
        Ok(Self { cp, cv, g, mu, p0 })
    }

    pub fn r_d(&self) -> f64 {
        self.cp - self.cv
    }

    pub fn gamma(&self) -> f64 {
        self.cp / self.cv
    }
}

fn check_admissible(u: &ConservedState) -> Result<()> {
    if !(u.rho > 0.0 && u.rho_theta > 0.0 && u.is_finite()) {
        return Err(Error::Inadmissible(format!(
            "rho={:e} rho_theta={:e} (finite: {})",
            u.rho,
            u.rho_theta,
            u.is_finite()
        )));
    }
    Ok(())
}

/// p = p0 (R_d ρθ / p0)^γ
pub fn pressure(u: &ConservedState, c: &PhysConstants) -> Result<f64> {
    if !(u.rho_theta > 0.0) || !u.rho_theta.is_finite() {
        return Err(Error::Inadmissible(format!("rho_theta={:e}", u.rho_theta)));
    }
    Ok(c.p0 * (c.r_d() * u.rho_theta / c.p0).powf(c.gamma()))
}

/// Inverse of [`pressure`]: ρθ for a given pressure.
pub fn rho_theta_from_pressure(p: f64, c: &PhysConstants) -> f64 {
    c.p0 / c.r_d() * (p / c.p0).powf(1.0 / c.gamma())
}

pub fn sound_speed(u: &ConservedState, c: &PhysConstants) -> Result<f64> {
    check_admissible(u)?;
    Ok((c.gamma() * pressure(u, c)? / u.rho).sqrt())
}

pub fn flux_convective(u: &ConservedState, c: &PhysConstants) -> Result<FluxTensor> {
    check_admissible(u)?;
    let p = pressure(u, c)?;
    let vx = u.rho_u / u.rho;
    let vz = u.rho_w / u.rho;
    Ok([
        ConservedState::new(u.rho_u, u.rho_u * vx + p, u.rho_w * vx, u.rho_theta * vx),
        ConservedState::new(u.rho_w, u.rho_u * vz, u.rho_w * vz + p, u.rho_theta * vz),
    ])
}

/// μρ [0; ∇u; ∇w; ∇θ] from the gradients of the primitive fields (u, w, θ).
pub fn flux_viscous(u: &ConservedState, grad: &[[f64; 2]; 3], c: &PhysConstants) -> FluxTensor {
    let k = c.mu * u.rho;
    let col = |d: usize| ConservedState::new(0.0, k * grad[0][d], k * grad[1][d], k * grad[2][d]);
    [col(0), col(1)]
}

pub fn source_gravity(u: &ConservedState, c: &PhysConstants) -> ConservedState {
    ConservedState::new(0.0, 0.0, -u.rho * c.g, 0.0)
}

/// |v·n| + sqrt(γ p / ρ)
pub fn max_wave_speed(u: &ConservedState, n: [f64; 2], c: &PhysConstants) -> Result<f64> {
    let a = sound_speed(u, c)?;
    Ok(((u.rho_u * n[0] + u.rho_w * n[1]) / u.rho).abs() + a)
}

/// HLLC flux through a face with unit normal `n` pointing from `ul` to `ur`.
///
/// ρθ is carried like a passive scalar through the contact, so θ is
/// continuous across the star region. Wave speeds use Davis bounds.
pub fn hllc_flux(
    ul: &ConservedState,
    ur: &ConservedState,
    n: [f64; 2],
    c: &PhysConstants,
) -> Result<ConservedState> {
    check_admissible(ul)?;
    check_admissible(ur)?;
    let (nx, nz) = (n[0], n[1]);
    let gamma = c.gamma();

    let side = |u: &ConservedState| -> Result<[f64; 6]> {
        let vn = (u.rho_u * nx + u.rho_w * nz) / u.rho;
        let vt = (-u.rho_u * nz + u.rho_w * nx) / u.rho;
        let p = pressure(u, c)?;
        let a = (gamma * p / u.rho).sqrt();
        Ok([u.rho, vn, vt, u.rho_theta / u.rho, p, a])
    };
    let [rl, unl, utl, thl, pl, al] = side(ul)?;
    let [rr, unr, utr, thr, pr, ar] = side(ur)?;

    let sl = (unl - al).min(unr - ar);
    let sr = (unl + al).max(unr + ar);

    // rotated-frame physical flux (normal mass, normal mom, tangential mom, ρθ)
    let phys = |r: f64, un: f64, ut: f64, th: f64, p: f64| -> [f64; 4] {
        let m = r * un;
        [m, m * un + p, m * ut, m * th]
    };

    let f = if sl >= 0.0 {
        phys(rl, unl, utl, thl, pl)
    } else if sr <= 0.0 {
        phys(rr, unr, utr, thr, pr)
    } else {
        let dl = rl * (sl - unl);
        let dr = rr * (sr - unr);
        let s_star = (pr - pl + unl * dl - unr * dr) / (dl - dr);
        if !s_star.is_finite() || s_star <= sl || s_star >= sr {
            return Err(Error::Inadmissible(format!(
                "HLLC contact speed {s_star:e} outside [{sl:e}, {sr:e}]"
            )));
        }
        let (r, un, ut, th, p, s) = if s_star >= 0.0 {
            (rl, unl, utl, thl, pl, sl)
        } else {
            (rr, unr, utr, thr, pr, sr)
        };
        let r_star = r * (s - un) / (s - s_star);
        if !(r_star > 0.0) {
            return Err(Error::Inadmissible(format!("HLLC star density {r_star:e}")));
        }
        let fk = phys(r, un, ut, th, p);
        let uk = [r, r * un, r * ut, r * th];
        let us = [r_star, r_star * s_star, r_star * ut, r_star * th];
        [
            fk[0] + s * (us[0] - uk[0]),
            fk[1] + s * (us[1] - uk[1]),
            fk[2] + s * (us[2] - uk[2]),
            fk[3] + s * (us[3] - uk[3]),
        ]
    };
    Ok(ConservedState::new(
        f[0],
        f[1] * nx - f[2] * nz,
        f[1] * nz + f[2] * nx,
        f[3],
    ))
}

/// Mirror the normal momentum: the exterior state of a slip wall.
pub fn mirror_state(u: &ConservedState, n: [f64; 2]) -> ConservedState {
    let mn = u.rho_u * n[0] + u.rho_w * n[1];
    ConservedState::new(
        u.rho,
        u.rho_u - 2.0 * mn * n[0],
        u.rho_w - 2.0 * mn * n[1],
        u.rho_theta,
    )
}

/// Hydrostatic background atmospheres, functions of height only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Atmosphere {
    /// Constant Brunt-Väisälä frequency with surface temperature `t0` and a
    /// uniform horizontal mean flow.
    Stratified { n_bv: f64, t0: f64, u_mean: f64 },
    /// Constant potential temperature, at rest.
    Neutral { theta0: f64 },
    /// Zero background, used with linear models.
    Zero,
}

impl Atmosphere {
    pub fn theta(&self, z: f64, c: &PhysConstants) -> f64 {
        match *self {
            Atmosphere::Stratified { n_bv, t0, .. } => t0 * (z * n_bv * n_bv / c.g).exp(),
            Atmosphere::Neutral { theta0 } => theta0,
            Atmosphere::Zero => 0.0,
        }
    }

    pub fn temperature(&self, z: f64, c: &PhysConstants) -> f64 {
        match *self {
            Atmosphere::Stratified { n_bv, t0, .. } => {
                let h = c.g / (n_bv * n_bv);
                let alpha = c.g * h / (c.cp * t0);
                t0 * (alpha - (alpha - 1.0) * (z / h).exp())
            }
            Atmosphere::Neutral { theta0 } => theta0 - z * c.g / c.cp,
            Atmosphere::Zero => 0.0,
        }
    }

    pub fn pressure(&self, z: f64, c: &PhysConstants) -> f64 {
        match *self {
            Atmosphere::Stratified { n_bv, t0, .. } => {
                let h = c.g / (n_bv * n_bv);
                let t = self.temperature(z, c);
                c.p0 * ((c.cp / c.r_d()) * ((t / t0).ln() - z / h)).exp()
            }
            Atmosphere::Neutral { theta0 } => {
                c.p0 * (self.temperature(z, c) / theta0).powf(c.cp / c.r_d())
            }
            Atmosphere::Zero => 0.0,
        }
    }

    pub fn mean_flow(&self) -> [f64; 2] {
        match *self {
            Atmosphere::Stratified { u_mean, .. } => [u_mean, 0.0],
            _ => [0.0, 0.0],
        }
    }

    /// Full state with potential temperature θ̃(z) + θ′ at the background
    /// pressure: ρ = p0^{R/cp} p̃^{1/γ} / (R (θ̃ + θ′)).
    pub fn state_with_theta(
        &self,
        z: f64,
        theta_pert: f64,
        c: &PhysConstants,
    ) -> Result<ConservedState> {
        if let Atmosphere::Zero = self {
            return Ok(ConservedState::ZERO);
        }
        let theta = self.theta(z, c) + theta_pert;
        if !(theta > 0.0) {
            return Err(Error::Inadmissible(format!("potential temperature {theta}")));
        }
        let p = self.pressure(z, c);
        let rho = c.p0.powf(c.r_d() / c.cp) * p.powf(1.0 / c.gamma()) / (c.r_d() * theta);
        let [u, w] = self.mean_flow();
        Ok(ConservedState::new(rho, rho * u, rho * w, rho * theta))
    }

    pub fn background(&self, _x: f64, z: f64, c: &PhysConstants) -> ConservedState {
        // θ̃ > 0 for all supported atmospheres within their domains
        self.state_with_theta(z, 0.0, c)
            .expect("background potential temperature must be positive")
    }
}

/// F_c(Ū + U′) − F_c(Ū)
pub fn pert_flux_convective(
    up: &ConservedState,
    x: f64,
    z: f64,
    atm: &Atmosphere,
    c: &PhysConstants,
) -> Result<FluxTensor> {
    let bg = atm.background(x, z, c);
    let ft = flux_convective(&(bg + *up), c)?;
    let fb = flux_convective(&bg, c)?;
    Ok([ft[0] - fb[0], ft[1] - fb[1]])
}

/// S(Ū + U′) − S(Ū)
pub fn pert_source(
    up: &ConservedState,
    x: f64,
    z: f64,
    atm: &Atmosphere,
    c: &PhysConstants,
) -> ConservedState {
    let bg = atm.background(x, z, c);
    source_gravity(&(bg + *up), c) - source_gravity(&bg, c)
}

/// Ĥ(Ū + U′_L, Ū + U′_R) − Ĥ(Ū, Ū) with Ū taken at the face point.
pub fn pert_hllc(
    ul: &ConservedState,
    ur: &ConservedState,
    x: f64,
    z: f64,
    n: [f64; 2],
    atm: &Atmosphere,
    c: &PhysConstants,
) -> Result<ConservedState> {
    let bg = atm.background(x, z, c);
    Ok(hllc_flux(&(bg + *ul), &(bg + *ur), n, c)? - hllc_flux(&bg, &bg, n, c)?)
}

/// Pointwise model consumed by the DG and FV operators. All methods act on
/// full (background + perturbation) states; the operators form the
/// perturbation differences.
pub trait BalanceLaw: Sync + Send {
    fn flux(&self, u: &ConservedState) -> Result<FluxTensor>;

    fn source(&self, u: &ConservedState) -> ConservedState;

    fn numerical_flux(
        &self,
        ul: &ConservedState,
        ur: &ConservedState,
        n: [f64; 2],
    ) -> Result<ConservedState>;

    /// Exterior state of a slip wall with outward normal `n`.
    fn wall_ghost(&self, u: &ConservedState, n: [f64; 2]) -> ConservedState;

    /// Flux through a slip wall with outward normal `n`.
    fn wall_flux(&self, u: &ConservedState, n: [f64; 2]) -> Result<ConservedState> {
        self.numerical_flux(u, &self.wall_ghost(u, n), n)
    }

    /// Maximal signal speeds in x and z.
    fn wave_speeds(&self, u: &ConservedState) -> Result<[f64; 2]>;

    fn viscosity(&self) -> f64 {
        0.0
    }

    /// Density and the diffused primitive fields (u, w, θ).
    fn primitives(&self, u: &ConservedState) -> Result<(f64, [f64; 3])> {
        Ok((
            u.rho,
            [u.rho_u / u.rho, u.rho_w / u.rho, u.rho_theta / u.rho],
        ))
    }
}

/// Compressible flow with gravity, HLLC convection, optional viscosity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerGravity {
    pub consts: PhysConstants,
}

impl BalanceLaw for EulerGravity {
    fn flux(&self, u: &ConservedState) -> Result<FluxTensor> {
        flux_convective(u, &self.consts)
    }

    fn source(&self, u: &ConservedState) -> ConservedState {
        source_gravity(u, &self.consts)
    }

    fn numerical_flux(
        &self,
        ul: &ConservedState,
        ur: &ConservedState,
        n: [f64; 2],
    ) -> Result<ConservedState> {
        hllc_flux(ul, ur, n, &self.consts)
    }

    fn wall_ghost(&self, u: &ConservedState, n: [f64; 2]) -> ConservedState {
        mirror_state(u, n)
    }

    /// Mass and ρθ fluxes through a wall vanish identically; they are set to
    /// zero instead of carrying the rounding of the star-state formulas.
    fn wall_flux(&self, u: &ConservedState, n: [f64; 2]) -> Result<ConservedState> {
        let f = hllc_flux(u, &mirror_state(u, n), n, &self.consts)?;
        Ok(ConservedState::new(0.0, f.rho_u, f.rho_w, 0.0))
    }

    fn wave_speeds(&self, u: &ConservedState) -> Result<[f64; 2]> {
        let a = sound_speed(u, &self.consts)?;
        Ok([(u.rho_u / u.rho).abs() + a, (u.rho_w / u.rho).abs() + a])
    }

    fn viscosity(&self) -> f64 {
        self.consts.mu
    }

    fn primitives(&self, u: &ConservedState) -> Result<(f64, [f64; 3])> {
        check_admissible(u)?;
        Ok((
            u.rho,
            [u.rho_u / u.rho, u.rho_w / u.rho, u.rho_theta / u.rho],
        ))
    }
}

/// Every component advected with a constant velocity; upwind numerical flux.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearAdvection {
    pub velocity: [f64; 2],
}

impl BalanceLaw for LinearAdvection {
    fn flux(&self, u: &ConservedState) -> Result<FluxTensor> {
        Ok([*u * self.velocity[0], *u * self.velocity[1]])
    }

    fn source(&self, _u: &ConservedState) -> ConservedState {
        ConservedState::ZERO
    }

    fn numerical_flux(
        &self,
        ul: &ConservedState,
        ur: &ConservedState,
        n: [f64; 2],
    ) -> Result<ConservedState> {
        let an = self.velocity[0] * n[0] + self.velocity[1] * n[1];
        Ok(if an >= 0.0 { *ul * an } else { *ur * an })
    }

    fn wall_ghost(&self, u: &ConservedState, _n: [f64; 2]) -> ConservedState {
        *u
    }

    fn wave_speeds(&self, _u: &ConservedState) -> Result<[f64; 2]> {
        Ok([self.velocity[0].abs(), self.velocity[1].abs()])
    }
}

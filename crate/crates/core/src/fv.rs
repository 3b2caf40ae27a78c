//! First-order finite volumes on one level of the grid hierarchy.
//!
//! This is the k = 0 member of the DG family: cell averages, the same
//! perturbation fluxes and sources, a two-point viscous flux. It exists to
//! build the multigrid preconditioner.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::linalg::{fd_epsilon, is_zero, InnerProduct};
use crate::mesh::{BoundarySpec, LevelGrid};
use crate::physics::BalanceLaw;
use crate::state::{ConservedState, NVAR};
use crate::Result;

/// Piecewise constant field on one level, layout `cell * NVAR + var`.
#[derive(Debug, Clone, PartialEq)]
pub struct FVField {
    pub level: usize,
    pub data: Vec<f64>,
}

impl FVField {
    pub fn zeros(level: usize, n_cells: usize) -> Self {
        Self {
            level,
            data: vec![0.0; n_cells * NVAR],
        }
    }

    pub fn cell(&self, c: usize) -> ConservedState {
        ConservedState::from_slice(&self.data[c * NVAR..])
    }
}

/// f_low on one grid level.
pub struct FvOperator<M: BalanceLaw> {
    model: M,
    pub grid: LevelGrid,
    pub level: usize,
    bc: BoundarySpec,
    bg: Vec<ConservedState>,
    bg_src: Vec<ConservedState>,
    bg_prim: Vec<[f64; 3]>,
    xf_bg: Vec<ConservedState>,
    xf_ref: Vec<ConservedState>,
    zf_bg: Vec<ConservedState>,
    zf_ref: Vec<ConservedState>,
    weights: Vec<f64>,
    ops: AtomicUsize,
}

impl<M: BalanceLaw> FvOperator<M> {
    /// The background is sampled at cell and face centers of this level.
    pub fn new(
        model: M,
        grid: LevelGrid,
        level: usize,
        bc: BoundarySpec,
        background: impl Fn(f64, f64) -> ConservedState,
    ) -> Result<Self> {
        let (nx, nz) = (grid.nx, grid.nz);
        let bg: Vec<ConservedState> = (0..grid.n_cells())
            .map(|c| {
                let (i, j) = grid.unflat(c);
                let (x, z) = grid.cell_center(i, j);
                background(x, z)
            })
            .collect();
        let bg_src = bg.iter().map(|u| model.source(u)).collect();
        let bg_prim = if model.viscosity() > 0.0 {
            bg.iter()
                .enumerate()
                .map(|(c, u)| model.primitives(u).map(|p| p.1).map_err(|e| e.at_cell(level, c)))
                .collect::<Result<Vec<_>>>()?
        } else {
            vec![[0.0; 3]; bg.len()]
        };
        let mut xf_bg = Vec::with_capacity((nx + 1) * nz);
        for fx in 0..=nx {
            for j in 0..nz {
                xf_bg.push(background(grid.x_face(fx), grid.cell_center(0, j).1));
            }
        }
        let mut zf_bg = Vec::with_capacity((nz + 1) * nx);
        for fz in 0..=nz {
            for i in 0..nx {
                zf_bg.push(background(grid.cell_center(i, 0).0, grid.z_face(fz)));
            }
        }
        let xf_ref = xf_bg
            .iter()
            .map(|u| model.numerical_flux(u, u, [1.0, 0.0]))
            .collect::<Result<Vec<_>>>()?;
        let zf_ref = zf_bg
            .iter()
            .map(|u| model.numerical_flux(u, u, [0.0, 1.0]))
            .collect::<Result<Vec<_>>>()?;
        let w = 1.0 / grid.n_cells() as f64;
        Ok(Self {
            model,
            grid,
            level,
            bc,
            bg,
            bg_src,
            bg_prim,
            xf_bg,
            xf_ref,
            zf_bg,
            zf_ref,
            weights: vec![w; grid.n_cells() * NVAR],
            ops: AtomicUsize::new(0),
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    /// Background state at the cell centers.
    pub fn background(&self) -> &[ConservedState] {
        &self.bg
    }

    pub fn n_dofs(&self) -> usize {
        self.bg.len() * NVAR
    }

    /// Norm weights |q| / |Ω| per degree of freedom.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn evaluations(&self) -> usize {
        self.ops.load(Ordering::Relaxed)
    }

    fn pert(&self, u: &[f64], c: usize) -> ConservedState {
        ConservedState::from_slice(&u[c * NVAR..])
    }

    /// Total density and primitive perturbation q′ per cell.
    fn viscous_data(&self, u: &[f64]) -> Result<Vec<(f64, [f64; 3])>> {
        (0..self.bg.len())
            .map(|c| {
                let (r, p) = self
                    .model
                    .primitives(&(self.bg[c] + self.pert(u, c)))
                    .map_err(|e| e.at_cell(self.level, c))?;
                let b = self.bg_prim[c];
                Ok((r, [p[0] - b[0], p[1] - b[1], p[2] - b[2]]))
            })
            .collect()
    }

    fn face(
        &self,
        u: &[f64],
        visc: &[(f64, [f64; 3])],
        bg: &ConservedState,
        reference: &ConservedState,
        n: [f64; 2],
        h: f64,
        l: usize,
        r: usize,
    ) -> Result<ConservedState> {
        let mut f = self.model.numerical_flux(
            &(*bg + self.pert(u, l)),
            &(*bg + self.pert(u, r)),
            n,
        )? - *reference;
        if !visc.is_empty() {
            let ((rl, ql), (rr, qr)) = (visc[l], visc[r]);
            let k = self.model.viscosity() * 0.5 * (rl + rr) / h;
            f -= ConservedState::new(0.0, k * (qr[0] - ql[0]), k * (qr[1] - ql[1]), k * (qr[2] - ql[2]));
        }
        Ok(f)
    }

    fn wall(&self, bg: &ConservedState, u: &ConservedState, outward: [f64; 2], sign: f64) -> Result<ConservedState> {
        let h = self.model.wall_flux(&(*bg + *u), outward)?;
        Ok((h - self.model.wall_flux(bg, outward)?) * sign)
    }

    /// out ← f_low(u).
    pub fn apply(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        assert_eq!(u.len(), self.n_dofs());
        assert_eq!(out.len(), self.n_dofs());
        self.ops.fetch_add(1, Ordering::Relaxed);
        let g = &self.grid;
        let (nx, nz) = (g.nx, g.nz);
        let visc = if self.model.viscosity() > 0.0 {
            self.viscous_data(u)?
        } else {
            Vec::new()
        };
        let px = self.bc.periodic_x();
        let pz = self.bc.periodic_z();

        let xf = (0..(nx + 1) * nz)
            .into_par_iter()
            .map(|idx| {
                let (fx, j) = (idx / nz, idx % nz);
                let bg = &self.xf_bg[idx];
                let cell = |i: usize| j * nx + i;
                if fx == nx && px {
                    return Ok(ConservedState::ZERO);
                }
                if (fx > 0 && fx < nx) || px {
                    let l = cell(if fx == 0 { nx - 1 } else { fx - 1 });
                    let r = cell(fx);
                    self.face(u, &visc, bg, &self.xf_ref[idx], [1.0, 0.0], g.dx, l, r)
                        .map_err(|e| e.at_cell(self.level, r))
                } else if fx == 0 {
                    self.wall(bg, &self.pert(u, cell(0)), [-1.0, 0.0], -1.0)
                        .map_err(|e| e.at_cell(self.level, cell(0)))
                } else {
                    self.wall(bg, &self.pert(u, cell(nx - 1)), [1.0, 0.0], 1.0)
                        .map_err(|e| e.at_cell(self.level, cell(nx - 1)))
                }
            })
            .collect::<Result<Vec<_>>>()?;

        let zf = (0..(nz + 1) * nx)
            .into_par_iter()
            .map(|idx| {
                let (fz, i) = (idx / nx, idx % nx);
                let bg = &self.zf_bg[idx];
                let cell = |j: usize| j * nx + i;
                if fz == nz && pz {
                    return Ok(ConservedState::ZERO);
                }
                if (fz > 0 && fz < nz) || pz {
                    let l = cell(if fz == 0 { nz - 1 } else { fz - 1 });
                    let r = cell(fz);
                    self.face(u, &visc, bg, &self.zf_ref[idx], [0.0, 1.0], g.dz, l, r)
                        .map_err(|e| e.at_cell(self.level, r))
                } else if fz == 0 {
                    self.wall(bg, &self.pert(u, cell(0)), [0.0, -1.0], -1.0)
                        .map_err(|e| e.at_cell(self.level, cell(0)))
                } else {
                    self.wall(bg, &self.pert(u, cell(nz - 1)), [0.0, 1.0], 1.0)
                        .map_err(|e| e.at_cell(self.level, cell(nz - 1)))
                }
            })
            .collect::<Result<Vec<_>>>()?;

        out.par_chunks_mut(NVAR).enumerate().for_each(|(c, o)| {
            let (i, j) = g.unflat(c);
            let east = if i + 1 == nx && px { 0 } else { i + 1 };
            let north = if j + 1 == nz && pz { 0 } else { j + 1 };
            let full = self.bg[c] + self.pert(u, c);
            let r = (xf[i * nz + j] - xf[east * nz + j]) * (1.0 / g.dx)
                + (zf[j * nx + i] - zf[north * nx + i]) * (1.0 / g.dz)
                + (self.model.source(&full) - self.bg_src[c]);
            r.write_to(o);
        });
        Ok(())
    }

    /// Weighted norm of the full state Ū + u′.
    pub fn total_norm(&self, u: &[f64]) -> f64 {
        let full: Vec<f64> = u
            .iter()
            .enumerate()
            .map(|(i, v)| v + self.bg[i / NVAR][i % NVAR])
            .collect();
        InnerProduct::Weighted(&self.weights).norm(&full)
    }

    /// Maximal signal speeds of Ū + u′ per cell.
    pub fn cell_wave_speeds(&self, u: &[f64]) -> Result<Vec<[f64; 2]>> {
        (0..self.bg.len())
            .map(|c| {
                self.model
                    .wave_speeds(&(self.bg[c] + self.pert(u, c)))
                    .map_err(|e| e.at_cell(self.level, c))
            })
            .collect()
    }
}

/// The linearized implicit-stage residual g′(u_s)·w of
/// g(u) = u − αΔt f_low(u) − ū, applied by finite differences.
#[derive(Debug, Clone)]
pub struct FVLinearization {
    pub level: usize,
    pub state: Vec<f64>,
    f_state: Vec<f64>,
    state_norm: f64,
    pub alpha_dt: f64,
}

impl FVLinearization {
    pub fn new<M: BalanceLaw>(op: &FvOperator<M>, state: Vec<f64>, alpha_dt: f64) -> Result<Self> {
        let mut f_state = vec![0.0; state.len()];
        op.apply(&state, &mut f_state)?;
        let state_norm = op.total_norm(&state);
        Ok(Self {
            level: op.level,
            state,
            f_state,
            state_norm,
            alpha_dt,
        })
    }

    /// out ← w − αΔt (f(u + εw) − f(u)) / ε with ε = sqrt(ε_mach)·max(1, ‖Ū + u‖)/‖w‖.
    pub fn apply<M: BalanceLaw>(&self, op: &FvOperator<M>, w: &[f64], out: &mut [f64]) -> Result<()> {
        if is_zero(w) {
            out.fill(0.0);
            return Ok(());
        }
        if self.alpha_dt == 0.0 {
            out.copy_from_slice(w);
            return Ok(());
        }
        let eps = fd_epsilon(InnerProduct::Weighted(op.weights()).norm(w), self.state_norm);
        let shifted: Vec<f64> = self.state.iter().zip(w).map(|(u, w)| u + eps * w).collect();
        op.apply(&shifted, out)?;
        let s = self.alpha_dt / eps;
        for ((o, f0), wi) in out.iter_mut().zip(&self.f_state).zip(w) {
            *o = wi - s * (*o - f0);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{BoundaryKind, Domain2D, GridHierarchy};
    use crate::physics::{Atmosphere, EulerGravity, LinearAdvection, PhysConstants};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn grid(nx: usize, nz: usize, w: f64, h: f64) -> LevelGrid {
        let d = Domain2D::new(0.0, w, 0.0, h).unwrap();
        *GridHierarchy::new(d, nx, nz, 1).unwrap().level(0)
    }

    fn bubble_consts() -> PhysConstants {
        PhysConstants::new(1005.0, 717.95, 9.80665, 0.0, 1e5).unwrap()
    }

    fn euler(nx: usize, nz: usize, atm: Atmosphere, c: PhysConstants, bc: BoundarySpec) -> FvOperator<EulerGravity> {
        FvOperator::new(
            EulerGravity { consts: c },
            grid(nx, nz, 1000.0, 2000.0),
            0,
            bc,
            move |x, z| atm.background(x, z, &c),
        )
        .unwrap()
    }

    fn random(len: usize, seed: u64, scale: [f64; 4]) -> Vec<f64> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        (0..len).map(|i| scale[i % 4] * rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn well_balanced_and_background() {
        let c = bubble_consts();
        let atm = Atmosphere::Neutral { theta0: 303.15 };
        let op = euler(5, 8, atm, c, BoundarySpec::all(BoundaryKind::Slip));
        let mut out = vec![1.0; op.n_dofs()];
        op.apply(&vec![0.0; op.n_dofs()], &mut out).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        for s in op.background() {
            assert!((s.rho_theta / s.rho - 303.15).abs() < 1e-10);
        }
        // hydrostatic balance between vertically adjacent cells
        let g = op.grid;
        for j in 0..g.nz - 1 {
            let (a, b) = (op.background()[g.flat(2, j)], op.background()[g.flat(2, j + 1)]);
            let dp = crate::physics::pressure(&b, &c).unwrap() - crate::physics::pressure(&a, &c).unwrap();
            let expect = -0.5 * (a.rho + b.rho) * c.g * g.dz;
            assert!((dp - expect).abs() < 1e-4 * expect.abs(), "{dp} vs {expect}");
        }
        assert_eq!(atm.pressure(0.0, &c), c.p0);
    }

    #[test]
    fn single_periodic_cell_has_no_flux_divergence() {
        let c = PhysConstants::new(1005.0, 717.95, 0.0, 0.0, 1e5).unwrap();
        let atm = Atmosphere::Neutral { theta0: 300.0 };
        let op = euler(1, 1, atm, c, BoundarySpec::all(BoundaryKind::Periodic));
        let u = vec![1e-3, 0.5, -0.2, 0.1];
        let mut out = vec![0.0; 4];
        op.apply(&u, &mut out).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-9), "{out:?}");
    }

    fn advection_op(n: usize) -> FvOperator<LinearAdvection> {
        FvOperator::new(
            LinearAdvection { velocity: [1.0, 0.5] },
            grid(n, n, 1.0, 1.0),
            0,
            BoundarySpec::all(BoundaryKind::Periodic),
            |_, _| ConservedState::ZERO,
        )
        .unwrap()
    }

    #[test]
    fn first_order_convergence_of_the_operator() {
        // truncation error of the semi-discrete operator on a smooth field,
        // measured against the exact -a·∇u
        let pi2 = 2.0 * std::f64::consts::PI;
        let mut errs = Vec::new();
        for n in [16, 32, 64] {
            let op = advection_op(n);
            let g = op.grid;
            let mut u = vec![0.0; op.n_dofs()];
            let mut exact = vec![0.0; op.n_dofs()];
            for c in 0..g.n_cells() {
                let (i, j) = g.unflat(c);
                let (x, z) = g.cell_center(i, j);
                u[c * 4] = (pi2 * x).sin() * (pi2 * z).sin();
                exact[c * 4] = -pi2 * ((pi2 * x).cos() * (pi2 * z).sin() + 0.5 * (pi2 * x).sin() * (pi2 * z).cos());
            }
            let mut out = vec![0.0; op.n_dofs()];
            op.apply(&u, &mut out).unwrap();
            let d = crate::linalg::sub(&out, &exact);
            errs.push(InnerProduct::Weighted(op.weights()).norm(&d));
        }
        for w in errs.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!((0.8..1.3).contains(&rate), "{errs:?}");
        }
    }

    #[test]
    fn linop_matches_assembled_upwind_jacobian() {
        let op = advection_op(8);
        let n = op.n_dofs();
        let alpha_dt = 0.07;
        let lin = FVLinearization::new(&op, random(n, 1, [1.0; 4]), alpha_dt).unwrap();
        // columns of g′ = I − αΔt J with J assembled from unit vectors of f
        let mut jac = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for k in 0..n {
            e[k] = 1.0;
            op.apply(&e, &mut col).unwrap();
            for i in 0..n {
                jac[i * n + k] = if i == k { 1.0 } else { 0.0 } - alpha_dt * col[i];
            }
            e[k] = 0.0;
        }
        for seed in 0..5 {
            let w = random(n, 100 + seed, [1.0; 4]);
            let mut fd = vec![0.0; n];
            lin.apply(&op, &w, &mut fd).unwrap();
            let exact: Vec<f64> = (0..n).map(|i| (0..n).map(|k| jac[i * n + k] * w[k]).sum()).collect();
            let err = crate::linalg::max_abs(&crate::linalg::sub(&fd, &exact));
            assert!(err <= 1e-6 * crate::linalg::max_abs(&exact), "{err}");
        }
    }

    #[test]
    fn linop_short_circuits_and_identity() {
        let op = advection_op(4);
        let n = op.n_dofs();
        let lin = FVLinearization::new(&op, vec![0.0; n], 0.5).unwrap();
        let before = op.evaluations();
        let mut out = vec![1.0; n];
        lin.apply(&op, &vec![0.0; n], &mut out).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        assert_eq!(op.evaluations(), before);

        let lin = FVLinearization::new(&op, vec![0.0; n], 0.0).unwrap();
        let w = random(n, 3, [1.0; 4]);
        lin.apply(&op, &w, &mut out).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn euler_linop_is_linear() {
        let c = bubble_consts();
        let atm = Atmosphere::Neutral { theta0: 303.15 };
        let op = euler(6, 6, atm, c, BoundarySpec::all(BoundaryKind::Slip));
        let n = op.n_dofs();
        let lin = FVLinearization::new(&op, random(n, 5, [1e-3, 0.3, 0.3, 0.3]), 3.0).unwrap();
        let w = random(n, 6, [1e-3, 1.0, 1.0, 0.3]);
        let mut lw = vec![0.0; n];
        lin.apply(&op, &w, &mut lw).unwrap();
        for a in [2.0, -1.0] {
            let aw: Vec<f64> = w.iter().map(|v| a * v).collect();
            let mut law = vec![0.0; n];
            lin.apply(&op, &aw, &mut law).unwrap();
            let scaled: Vec<f64> = lw.iter().map(|v| a * v).collect();
            let ip = InnerProduct::Weighted(op.weights());
            let rel = ip.norm(&crate::linalg::sub(&law, &scaled)) / ip.norm(&scaled);
            assert!(rel <= 1e-6, "a={a}: {rel:e}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn mass_is_conserved(seed in 0u64..1000, visc in proptest::bool::ANY) {
            let mut c = bubble_consts();
            if visc { c.mu = 75.0; }
            let atm = Atmosphere::Stratified { n_bv: 0.01, t0: 250.0, u_mean: 20.0 };
            let bc = BoundarySpec::new(BoundaryKind::Periodic, BoundaryKind::Periodic, BoundaryKind::Slip, BoundaryKind::Slip).unwrap();
            let op = euler(7, 5, atm, c, bc);
            let u = random(op.n_dofs(), seed, [1e-3, 0.5, 0.5, 0.3]);
            let mut out = vec![0.0; op.n_dofs()];
            op.apply(&u, &mut out).unwrap();
            let total: f64 = out.iter().step_by(NVAR).sum();
            let scale = out.iter().step_by(NVAR).fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(total.abs() <= 1e-12 * scale * out.len() as f64 / 4.0);
        }
    }
}

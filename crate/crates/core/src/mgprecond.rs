//! Multigrid preconditioner Q⁻¹ = T⁻¹ q⁻¹ T.
//!
//! q⁻¹ is one geometric multigrid cycle on the finite-volume re-discretization
//! of the implicit stage system, from the finest subgrid down to the base
//! grid. Coarse states are agglomeration averages, corrections are injected,
//! and every level is smoothed by explicit pseudo-time stepping with a
//! Jacobian-free linearized operator.

use std::fmt;
use std::str::FromStr;

use crate::dg::DgOperator;
use crate::fv::{FVLinearization, FvOperator};
use crate::linalg::is_zero;
use crate::mesh::{GridHierarchy, LevelGrid, SubgridMap};
use crate::physics::BalanceLaw;
use crate::state::{ConservedState, NVAR};
use crate::timeint::StagePreconditioner;
use crate::transfer::{TransferKind, TransferMatrices};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleType {
    V,
    W,
}

impl CycleType {
    fn repeats(self) -> usize {
        match self {
            CycleType::V => 1,
            CycleType::W => 2,
        }
    }
}

/// Smoothing counts of the key "mg abcdef G" plus smoother settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MGConfig {
    /// DG pre/post smoothing steps (a, b).
    pub dg_pre: usize,
    pub dg_post: usize,
    /// Finest FV level pre/post steps (c, d).
    pub fine_pre: usize,
    pub fine_post: usize,
    /// Intermediate level pre/post steps (e, f).
    pub mid_pre: usize,
    pub mid_post: usize,
    pub cycle: CycleType,
    pub pseudo_cfl: f64,
    pub smoother_stages: usize,
    pub transfer: TransferKind,
}

impl Default for MGConfig {
    fn default() -> Self {
        Self {
            dg_pre: 0,
            dg_post: 0,
            fine_pre: 1,
            fine_post: 1,
            mid_pre: 1,
            mid_post: 1,
            cycle: CycleType::V,
            pseudo_cfl: 1.0,
            smoother_stages: 1,
            transfer: TransferKind::Interpolation,
        }
    }
}

impl FromStr for MGConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = |pos: usize, msg: &str| Error::MgKey {
            key: s.to_string(),
            pos,
            msg: msg.to_string(),
        };
        let chars: Vec<char> = s.chars().collect();
        if !s.starts_with("mg") {
            return Err(err(0, "expected prefix \"mg\""));
        }
        let mut counts = [0usize; 6];
        for (i, c) in counts.iter_mut().enumerate() {
            let pos = 2 + i;
            let ch = chars.get(pos).ok_or_else(|| err(pos, "expected six digits"))?;
            *c = ch.to_digit(10).ok_or_else(|| err(pos, "expected a digit"))? as usize;
        }
        let cycle = match chars.get(8) {
            Some('V') => CycleType::V,
            Some('W') => CycleType::W,
            Some(_) => return Err(err(8, "cycle type must be V or W")),
            None => return Err(err(8, "missing cycle type V or W")),
        };
        if chars.len() > 9 {
            return Err(err(9, "trailing characters"));
        }
        Ok(Self {
            dg_pre: counts[0],
            dg_post: counts[1],
            fine_pre: counts[2],
            fine_post: counts[3],
            mid_pre: counts[4],
            mid_post: counts[5],
            cycle,
            ..Default::default()
        })
    }
}

impl fmt::Display for MGConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mg{}{}{}{}{}{}{}",
            self.dg_pre,
            self.dg_post,
            self.fine_pre,
            self.fine_post,
            self.mid_pre,
            self.mid_post,
            match self.cycle {
                CycleType::V => 'V',
                CycleType::W => 'W',
            }
        )
    }
}

/// Agglomeration: (R u)_E = Σ_{q∈C(E)} |q| u_q / |E|.
pub fn restrict(fine: &LevelGrid, coarse: &LevelGrid, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; coarse.n_cells() * NVAR];
    let w = fine.cell_area() / coarse.cell_area();
    for c in 0..coarse.n_cells() {
        let (i, j) = coarse.unflat(c);
        for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            let q = fine.flat(2 * i + di, 2 * j + dj);
            for v in 0..NVAR {
                out[c * NVAR + v] += w * u[q * NVAR + v];
            }
        }
    }
    out
}

/// Injection: every child receives its parent's value.
pub fn prolong(coarse: &LevelGrid, fine: &LevelGrid, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; fine.n_cells() * NVAR];
    for q in 0..fine.n_cells() {
        let (i, j) = fine.unflat(q);
        let c = coarse.flat(i / 2, j / 2);
        out[q * NVAR..(q + 1) * NVAR].copy_from_slice(&u[c * NVAR..(c + 1) * NVAR]);
    }
    out
}

/// Dimensionless pseudo-time step cfl / (1 + αΔt s) for a cell with signal
/// speeds λ, sizes h and viscosity μ, where
/// s = λx/hx + λz/hz + 2μ (1/hx² + 1/hz²) bounds the spectral radius of the
/// spatial Jacobian.
pub fn pseudo_time_step(cfl: f64, alpha_dt: f64, speeds: [f64; 2], h: [f64; 2], mu: f64) -> f64 {
    let s = speeds[0] / h[0] + speeds[1] / h[1] + 2.0 * mu * (1.0 / (h[0] * h[0]) + 1.0 / (h[1] * h[1]));
    cfl / (1.0 + alpha_dt * s)
}

struct Level<M: BalanceLaw> {
    op: FvOperator<M>,
    lin: Option<FVLinearization>,
    dtau: Vec<f64>,
}

pub struct MgPreconditioner<'a, M: BalanceLaw> {
    dg: &'a DgOperator<M>,
    levels: Vec<Level<M>>,
    map: SubgridMap,
    transfer: TransferMatrices,
    pub cfg: MGConfig,
    dg_dtau: Vec<f64>,
    alpha_dt: f64,
}

impl<'a, M: BalanceLaw + Clone> MgPreconditioner<'a, M> {
    /// FV operators are built for every level of `hierarchy` from the base
    /// grid up to the subgrid of `dg`.
    pub fn new(
        dg: &'a DgOperator<M>,
        hierarchy: &GridHierarchy,
        map: SubgridMap,
        cfg: MGConfig,
        background: impl Fn(f64, f64) -> ConservedState,
    ) -> Result<Self> {
        let levels = (0..=map.fv_level)
            .map(|l| {
                let op = FvOperator::new(
                    dg.model().clone(),
                    *hierarchy.level(l),
                    l,
                    *dg.boundary(),
                    &background,
                )?;
                Ok(Level {
                    op,
                    lin: None,
                    dtau: Vec::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let transfer = TransferMatrices::new(&dg.basis)?;
        Ok(Self {
            dg,
            levels,
            map,
            transfer,
            cfg,
            dg_dtau: Vec::new(),
            alpha_dt: 0.0,
        })
    }
}

impl<M: BalanceLaw> MgPreconditioner<'_, M> {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    fn finest(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn fv_operator(&self, level: usize) -> &FvOperator<M> {
        &self.levels[level].op
    }

    /// Freeze the finest-level state and derive the coarse states by
    /// restriction.
    pub fn setup_fv(&mut self, fine_state: Vec<f64>, alpha_dt: f64) -> Result<()> {
        self.alpha_dt = alpha_dt;
        let mu = self.dg.model().viscosity();
        let mut state = fine_state;
        for l in (0..self.levels.len()).rev() {
            let lvl = &mut self.levels[l];
            let g = lvl.op.grid;
            let speeds = lvl.op.cell_wave_speeds(&state)?;
            lvl.dtau = speeds
                .iter()
                .map(|s| pseudo_time_step(self.cfg.pseudo_cfl, alpha_dt, *s, [g.dx, g.dz], mu))
                .collect();
            let next = if l > 0 {
                restrict(&g, &self.levels[l - 1].op.grid, &state)
            } else {
                Vec::new()
            };
            let frozen = std::mem::replace(&mut state, next);
            self.levels[l].lin = Some(FVLinearization::new(&self.levels[l].op, frozen, alpha_dt)?);
        }
        Ok(())
    }

    /// Frozen state on a level.
    pub fn frozen_state(&self, level: usize) -> Option<&[f64]> {
        self.levels[level].lin.as_ref().map(|l| l.state.as_slice())
    }

    fn lin(&self, l: usize) -> Result<&FVLinearization> {
        self.levels[l]
            .lin
            .as_ref()
            .ok_or_else(|| Error::Solver("multigrid preconditioner used before setup".into()))
    }

    /// out ← g′_l x on level l.
    pub fn apply_level(&self, l: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.lin(l)?.apply(&self.levels[l].op, x, out)
    }

    /// `steps` explicit pseudo-time steps x ← x + Δτ (b − g′x).
    pub fn smooth(&self, l: usize, x: &mut [f64], b: &[f64], steps: usize) -> Result<()> {
        let dtau = &self.levels[l].dtau;
        let stages = self.cfg.smoother_stages.max(1);
        let mut gx = vec![0.0; x.len()];
        for _ in 0..steps {
            let x0 = x.to_vec();
            for s in 0..stages {
                // low-storage coefficients 1/(S − s) ending with a full step
                let coef = 1.0 / (stages - s) as f64;
                self.apply_level(l, x, &mut gx)?;
                for i in 0..x.len() {
                    x[i] = x0[i] + coef * dtau[i / NVAR] * (b[i] - gx[i]);
                }
            }
        }
        Ok(())
    }

    fn coarsest_steps(&self) -> usize {
        if self.levels.len() == 1 {
            (self.cfg.fine_pre + self.cfg.fine_post).max(2)
        } else {
            (self.cfg.mid_pre + self.cfg.mid_post).max(2)
        }
    }

    /// One multigrid cycle on level l for g′_l x = b, updating x in place.
    pub fn cycle(&self, l: usize, x: &mut [f64], b: &[f64]) -> Result<()> {
        if l == 0 {
            return self.smooth(0, x, b, self.coarsest_steps());
        }
        let (pre, post) = if l == self.finest() {
            (self.cfg.fine_pre, self.cfg.fine_post)
        } else {
            (self.cfg.mid_pre, self.cfg.mid_post)
        };
        self.smooth(l, x, b, pre)?;
        let mut gx = vec![0.0; x.len()];
        self.apply_level(l, x, &mut gx)?;
        for (g, bi) in gx.iter_mut().zip(b) {
            *g -= bi;
        }
        let (fine, coarse) = (self.levels[l].op.grid, self.levels[l - 1].op.grid);
        let r = restrict(&fine, &coarse, &gx);
        let mut v = vec![0.0; r.len()];
        if !is_zero(&r) {
            for _ in 0..self.cfg.cycle.repeats() {
                self.cycle(l - 1, &mut v, &r)?;
            }
        }
        let pv = prolong(&coarse, &fine, &v);
        for (xi, p) in x.iter_mut().zip(&pv) {
            *xi -= p;
        }
        self.smooth(l, x, b, post)
    }

    /// q⁻¹ b: one cycle on the finest FV level from a zero guess.
    pub fn fv_cycle(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = vec![0.0; b.len()];
        self.cycle(self.finest(), &mut x, b)?;
        Ok(x)
    }

    fn dg_smooth(
        &self,
        jac: &dyn Fn(&[f64], &mut [f64]) -> Result<()>,
        x: &mut [f64],
        y: &[f64],
        steps: usize,
    ) -> Result<()> {
        let mut gx = vec![0.0; x.len()];
        for _ in 0..steps {
            if is_zero(x) {
                gx.fill(0.0);
            } else {
                jac(x, &mut gx)?;
            }
            for i in 0..x.len() {
                x[i] += self.dg_dtau[i / NVAR] * (y[i] - gx[i]);
            }
        }
        Ok(())
    }
}

impl<M: BalanceLaw> StagePreconditioner for MgPreconditioner<'_, M> {
    fn setup(&mut self, u: &[f64], alpha_dt: f64) -> Result<()> {
        let mut fine = vec![0.0; self.levels[self.finest()].op.n_dofs()];
        self.transfer
            .dg_to_fv_slice(&self.map, self.cfg.transfer, u, &mut fine);
        self.setup_fv(fine, alpha_dt)?;
        if self.cfg.dg_pre + self.cfg.dg_post > 0 {
            let g = self.dg.grid;
            let p = (2 * self.dg.basis.k + 1) as f64;
            let mu = self.dg.model().viscosity();
            self.dg_dtau = self
                .dg
                .node_wave_speeds(u)?
                .iter()
                .map(|s| pseudo_time_step(self.cfg.pseudo_cfl, alpha_dt, *s, [g.dx / p, g.dz / p], mu))
                .collect();
        }
        Ok(())
    }

    fn apply(
        &mut self,
        jac: &dyn Fn(&[f64], &mut [f64]) -> Result<()>,
        y: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        out.fill(0.0);
        self.dg_smooth(jac, out, y, self.cfg.dg_pre)?;
        let mut r = y.to_vec();
        if !is_zero(out) {
            let mut gx = vec![0.0; y.len()];
            jac(out, &mut gx)?;
            for (ri, g) in r.iter_mut().zip(&gx) {
                *ri -= g;
            }
        }
        let mut fine = vec![0.0; self.levels[self.finest()].op.n_dofs()];
        self.transfer
            .dg_to_fv_slice(&self.map, self.cfg.transfer, &r, &mut fine);
        let xf = self.fv_cycle(&fine)?;
        let mut corr = vec![0.0; y.len()];
        self.transfer.fv_to_dg_slice(&self.map, &xf, &mut corr);
        for (o, c) in out.iter_mut().zip(&corr) {
            *o += c;
        }
        self.dg_smooth(jac, out, y, self.cfg.dg_post)
    }

    fn fv_evaluations(&self) -> usize {
        self.levels.iter().map(|l| l.op.evaluations()).sum()
    }
}

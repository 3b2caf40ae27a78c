//! Time integration: the two-stage SDIRK2 scheme solved by Jacobian-free
//! Newton-GMRES, and the explicit four-stage third-order SSP reference scheme.

use crate::linalg::{axpy, fd_epsilon, InnerProduct};
use crate::{Error, Result};

/// Semi-discrete right-hand side du/dt = f(u).
pub trait OdeRhs: Sync {
    fn len(&self) -> usize;

    fn eval(&self, u: &[f64], out: &mut [f64]) -> Result<()>;

    /// Weights of the discrete L² inner product.
    fn weights(&self) -> &[f64];

    /// Norm of the full state u represents; operators on perturbations
    /// include their background.
    fn state_norm(&self, u: &[f64]) -> f64 {
        InnerProduct::Weighted(self.weights()).norm(u)
    }

    /// Number of evaluations so far.
    fn evaluations(&self) -> usize {
        0
    }
}

/// Right preconditioner for the stage Jacobian.
pub trait StagePreconditioner {
    /// Freeze the linearization point u of the stage system with shift αΔt.
    fn setup(&mut self, u: &[f64], alpha_dt: f64) -> Result<()>;

    /// out ≈ G′(u)⁻¹ y; `jac` applies G′(u).
    fn apply(
        &mut self,
        jac: &dyn Fn(&[f64], &mut [f64]) -> Result<()>,
        y: &[f64],
        out: &mut [f64],
    ) -> Result<()>;

    /// Low-order operator evaluations so far.
    fn fv_evaluations(&self) -> usize {
        0
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityPreconditioner;

impl StagePreconditioner for IdentityPreconditioner {
    fn setup(&mut self, _u: &[f64], _alpha_dt: f64) -> Result<()> {
        Ok(())
    }

    fn apply(
        &mut self,
        _jac: &dyn Fn(&[f64], &mut [f64]) -> Result<()>,
        y: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        out.copy_from_slice(y);
        Ok(())
    }
}

/// Ellsiepen's method: a11 = α; a21 = 1 − α, a22 = α; b = (1 − α, α).
pub struct Sdirk2Tableau;

impl Sdirk2Tableau {
    pub const ALPHA: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;

    /// Stability function R(z).
    pub fn stability(z: f64) -> f64 {
        let a = Self::ALPHA;
        (1.0 + z * (1.0 - 2.0 * a) + z * z * (a * a - 2.0 * a + 0.5)) / ((1.0 - a * z) * (1.0 - a * z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonParams {
    /// Relative reduction of ‖G‖ that ends the iteration.
    pub tol: f64,
    /// Absolute floor on ‖G‖ below which the iteration stops.
    pub abs_tol: f64,
    pub max_iters: usize,
    pub ew_gamma: f64,
    pub ew_alpha: f64,
    pub eta_initial: f64,
    pub eta_max: f64,
    pub gmres: GmresParams,
}

impl Default for NewtonParams {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            abs_tol: 0.0,
            max_iters: 30,
            ew_gamma: 0.1,
            ew_alpha: 1.0,
            eta_initial: 0.1,
            eta_max: 0.5,
            gmres: GmresParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GmresParams {
    pub restart: usize,
    pub max_iters: usize,
}

impl Default for GmresParams {
    fn default() -> Self {
        Self {
            restart: 30,
            max_iters: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Residual norm estimate after each iteration, starting with ‖b‖.
    pub history: Vec<f64>,
}

/// Right-preconditioned restarted GMRES from a zero initial guess, in its
/// flexible form so a slightly nonlinear preconditioner is tolerated.
/// Stops when the residual norm drops to `eta`·‖b‖.
pub fn gmres(
    a: &dyn Fn(&[f64], &mut [f64]) -> Result<()>,
    m: &mut dyn FnMut(&[f64], &mut [f64]) -> Result<()>,
    b: &[f64],
    ip: InnerProduct<'_>,
    eta: f64,
    params: GmresParams,
) -> Result<GmresOutcome> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut beta = ip.norm(b);
    let mut out = GmresOutcome {
        history: vec![beta],
        ..Default::default()
    };
    if beta == 0.0 {
        out.x = x;
        out.converged = true;
        return Ok(out);
    }
    let target = eta * beta;
    let mut r = b.to_vec();
    let restart = params.restart.max(1);
    let mut w = vec![0.0; n];

    while out.iterations < params.max_iters {
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::new();
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut used = 0;
        let mut done = false;
        for j in 0..restart {
            if out.iterations >= params.max_iters {
                break;
            }
            let mut zj = vec![0.0; n];
            m(&v[j], &mut zj)?;
            a(&zj, &mut w)?;
            z.push(zj);
            for (i, vi) in v.iter().enumerate() {
                h[i][j] = ip.dot(&w, vi);
                axpy(-h[i][j], vi, &mut w);
            }
            h[j + 1][j] = ip.norm(&w);
            let breakdown = h[j + 1][j] <= f64::EPSILON * beta;
            if !breakdown {
                v.push(w.iter().map(|wi| wi / h[j + 1][j]).collect());
            }
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = h[j][j].hypot(h[j + 1][j]);
            cs[j] = h[j][j] / d;
            sn[j] = h[j + 1][j] / d;
            h[j][j] = d;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            out.iterations += 1;
            used = j + 1;
            let res = g[j + 1].abs();
            out.history.push(res);
            if res <= target || breakdown {
                done = true;
                break;
            }
        }
        // back substitution
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let s: f64 = (i + 1..used).map(|l| h[i][l] * y[l]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (yi, zi) in y.iter().zip(&z) {
            axpy(*yi, zi, &mut x);
        }
        if done {
            out.converged = true;
            break;
        }
        if out.iterations >= params.max_iters {
            break;
        }
        a(&x, &mut w)?;
        for i in 0..n {
            r[i] = b[i] - w[i];
        }
        beta = ip.norm(&r);
        if beta <= target {
            out.converged = true;
            break;
        }
    }
    out.x = x;
    Ok(out)
}

/// Second Eisenstat-Walker forcing term with its safeguard.
pub fn eisenstat_walker_eta(norm_k: f64, norm_km1: f64, eta_prev: f64, p: &NewtonParams) -> f64 {
    let mut eta = p.ew_gamma * (norm_k / norm_km1).powf(p.ew_alpha);
    let floor = p.ew_gamma * eta_prev.powf(p.ew_alpha);
    if floor > 0.1 {
        eta = eta.max(floor);
    }
    eta.clamp(1e-8, p.eta_max)
}

/// Statistics of one nonlinear stage solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageStats {
    pub newton_iters: usize,
    pub gmres_iters: usize,
    pub dg_ops: usize,
    pub fv_ops: usize,
    /// Final ‖G‖.
    pub residual: f64,
    pub initial_residual: f64,
}

/// A nonlinear system G(u) = 0 solved by Jacobian-free Newton.
pub trait NonlinearSystem {
    fn len(&self) -> usize;
    fn residual(&self, u: &[f64], out: &mut [f64]) -> Result<()>;
    fn weights(&self) -> &[f64];
    fn state_norm(&self, u: &[f64]) -> f64 {
        InnerProduct::Weighted(self.weights()).norm(u)
    }
}

/// G(U) = U − αΔt f(U) − Ū of one implicit stage.
pub struct StageSystem<'a> {
    pub rhs: &'a dyn OdeRhs,
    pub ubar: &'a [f64],
    pub alpha_dt: f64,
}

impl NonlinearSystem for StageSystem<'_> {
    fn len(&self) -> usize {
        self.rhs.len()
    }

    fn residual(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        self.rhs.eval(u, out)?;
        for i in 0..u.len() {
            out[i] = u[i] - self.alpha_dt * out[i] - self.ubar[i];
        }
        Ok(())
    }

    fn weights(&self) -> &[f64] {
        self.rhs.weights()
    }

    fn state_norm(&self, u: &[f64]) -> f64 {
        self.rhs.state_norm(u)
    }
}

/// Inexact Newton with GMRES inner solves and finite-difference Jacobian
/// products, started from `u0`. Stops when ‖G‖ < tol·‖G(u0)‖.
pub fn newton_solve(
    sys: &dyn NonlinearSystem,
    precond: &mut dyn StagePreconditioner,
    alpha_dt: f64,
    u0: &[f64],
    params: &NewtonParams,
) -> Result<(Vec<f64>, StageStats)> {
    let ip = InnerProduct::Weighted(sys.weights());
    let n = sys.len();
    let mut u = u0.to_vec();
    let mut g = vec![0.0; n];
    sys.residual(&u, &mut g)?;
    let mut norm = ip.norm(&g);
    let mut stats = StageStats {
        residual: norm,
        initial_residual: norm,
        ..Default::default()
    };
    if norm == 0.0 || norm <= params.abs_tol {
        return Ok((u, stats));
    }
    let target = (params.tol * stats.initial_residual).max(params.abs_tol);
    let mut history = vec![norm];
    let mut eta = params.eta_initial;
    let mut shifted = vec![0.0; n];

    for it in 1..=params.max_iters {
        if it > 1 {
            eta = eisenstat_walker_eta(norm, history[history.len() - 2], eta, params);
        }
        precond.setup(&u, alpha_dt)?;
        let unorm = sys.state_norm(&u);
        let base = g.clone();
        let jac = |v: &[f64], out: &mut [f64]| -> Result<()> {
            let vn = ip.norm(v);
            if vn == 0.0 {
                out.fill(0.0);
                return Ok(());
            }
            let eps = fd_epsilon(vn, unorm);
            let mut s = vec![0.0; v.len()];
            for i in 0..v.len() {
                s[i] = u[i] + eps * v[i];
            }
            sys.residual(&s, out)?;
            for i in 0..v.len() {
                out[i] = (out[i] - base[i]) / eps;
            }
            Ok(())
        };
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut m = |y: &[f64], out: &mut [f64]| precond.apply(&jac, y, out);
        let sol = gmres(&jac, &mut m, &rhs, ip, eta, params.gmres)?;
        stats.gmres_iters += sol.iterations;
        for i in 0..n {
            shifted[i] = u[i] + sol.x[i];
        }
        std::mem::swap(&mut u, &mut shifted);
        sys.residual(&u, &mut g)?;
        norm = ip.norm(&g);
        history.push(norm);
        stats.newton_iters = it;
        stats.residual = norm;
        if !norm.is_finite() {
            return Err(Error::Solver(format!("Newton residual not finite at iteration {it}")));
        }
        if norm < target {
            return Ok((u, stats));
        }
        if it >= 3 && norm > (1.0 - 1e-3) * history[it - 3] {
            return Err(Error::Solver(format!(
                "Newton stagnated at iteration {it}: ‖G‖ = {norm:e} from {:e}",
                stats.initial_residual
            )));
        }
    }
    Err(Error::Solver(format!(
        "Newton did not converge in {} iterations: ‖G‖ = {norm:e} from {:e}",
        params.max_iters, stats.initial_residual
    )))
}

/// One SDIRK2 step. Returns the new state and the statistics of both stages.
pub fn sdirk2_step(
    rhs: &dyn OdeRhs,
    precond: &mut dyn StagePreconditioner,
    u: &[f64],
    dt: f64,
    params: &NewtonParams,
) -> Result<(Vec<f64>, [StageStats; 2])> {
    let alpha = Sdirk2Tableau::ALPHA;
    let adt = alpha * dt;
    let mut stats = [StageStats::default(); 2];

    let mut solve_stage = |ubar: &[f64], s: &mut StageStats| -> Result<Vec<f64>> {
        let (d0, f0) = (rhs.evaluations(), precond.fv_evaluations());
        let sys = StageSystem {
            rhs,
            ubar,
            alpha_dt: adt,
        };
        let (v, st) = newton_solve(&sys, precond, adt, ubar, params)?;
        *s = st;
        s.dg_ops = rhs.evaluations() - d0;
        s.fv_ops = precond.fv_evaluations() - f0;
        Ok(v)
    };

    let (first, second) = stats.split_at_mut(1);
    let u1 = solve_stage(u, &mut first[0])?;
    // f(U1) = (U1 − U^n)/(αΔt), so Ū2 = U^n + (1 − α)/α (U1 − U^n)
    let c = (1.0 - alpha) / alpha;
    let ubar2: Vec<f64> = u.iter().zip(&u1).map(|(un, u1)| un + c * (u1 - un)).collect();
    let u2 = solve_stage(&ubar2, &mut second[0])?;
    Ok((u2, stats))
}

/// One step of the four-stage third-order SSP scheme.
pub fn ssprk34_step(rhs: &dyn OdeRhs, u: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = u.len();
    let mut f = vec![0.0; n];
    let h = 0.5 * dt;
    rhs.eval(u, &mut f)?;
    let mut v: Vec<f64> = (0..n).map(|i| u[i] + h * f[i]).collect();
    rhs.eval(&v, &mut f)?;
    axpy(h, &f, &mut v);
    rhs.eval(&v, &mut f)?;
    for i in 0..n {
        v[i] = (2.0 * u[i] + v[i]) / 3.0 + dt / 6.0 * f[i];
    }
    rhs.eval(&v, &mut f)?;
    axpy(h, &f, &mut v);
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Solver("explicit step produced non-finite values".into()));
    }
    Ok(v)
}

/// Explicit step from the CFL condition of a degree-k DG discretization:
/// Δt = cfl / ((2k+1)(λx/hx + λz/hz)).
pub fn explicit_dt(cfl: f64, k: usize, h: [f64; 2], speeds: [f64; 2]) -> f64 {
    cfl / ((2 * k + 1) as f64 * (speeds[0] / h[0] + speeds[1] / h[1]))
}

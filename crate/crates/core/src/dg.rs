//! Nodal tensor-product DG-SEM discretization on a uniform quad grid.
//!
//! Nodes and quadrature points coincide (Gauss-Legendre), so the mass matrix
//! is diagonal. The operator acts on perturbations U′ around a fixed
//! background Ū: every flux, source and numerical flux is evaluated on the
//! full state and the identical background term is subtracted, so U′ = 0
//! maps to zero bit for bit.
//!
//! Face fluxes are computed once per face in a canonical orientation (+x or
//! +z normal) and read by both adjacent elements, so interior contributions
//! telescope exactly in the discrete mass balance.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::mesh::{BoundarySpec, LevelGrid};
use crate::physics::{BalanceLaw, FluxTensor};
use crate::quadrature::{gauss_legendre, QuadRule1D};
use crate::state::{ConservedState, NVAR};
use crate::timeint::OdeRhs;
use crate::Result;

/// Lagrange basis on the Gauss-Legendre nodes of [0, 1].
#[derive(Debug, Clone)]
pub struct DGBasis {
    pub k: usize,
    pub gl: QuadRule1D,
    /// `diff[a * n1 + b]` = ℓ_b′(ξ_a).
    pub diff: Vec<f64>,
    /// `weak[a * n1 + p]` = (w_p / w_a) ℓ_a′(ξ_p).
    weak: Vec<f64>,
    pub at0: Vec<f64>,
    pub at1: Vec<f64>,
    pub d_at0: Vec<f64>,
    pub d_at1: Vec<f64>,
}

impl DGBasis {
    pub fn new(k: usize) -> Self {
        let gl = gauss_legendre(k);
        let n1 = k + 1;
        let mut basis = Self {
            k,
            gl,
            diff: vec![0.0; n1 * n1],
            weak: vec![0.0; n1 * n1],
            at0: Vec::new(),
            at1: Vec::new(),
            d_at0: Vec::new(),
            d_at1: Vec::new(),
        };
        for a in 0..n1 {
            let d = basis.derivatives(basis.gl.nodes[a]);
            basis.diff[a * n1..(a + 1) * n1].copy_from_slice(&d);
        }
        for a in 0..n1 {
            for p in 0..n1 {
                basis.weak[a * n1 + p] =
                    basis.gl.weights[p] / basis.gl.weights[a] * basis.diff[p * n1 + a];
            }
        }
        basis.at0 = basis.values(0.0);
        basis.at1 = basis.values(1.0);
        basis.d_at0 = basis.derivatives(0.0);
        basis.d_at1 = basis.derivatives(1.0);
        basis
    }

    /// Nodes per direction, k+1.
    pub fn n1(&self) -> usize {
        self.k + 1
    }

    /// Nodes per element, (k+1)².
    pub fn npe(&self) -> usize {
        self.n1() * self.n1()
    }

    /// ℓ_b(x) for every b.
    pub fn values(&self, x: f64) -> Vec<f64> {
        let xs = &self.gl.nodes;
        (0..xs.len())
            .map(|b| {
                xs.iter()
                    .enumerate()
                    .filter(|&(m, _)| m != b)
                    .map(|(_, &xm)| (x - xm) / (xs[b] - xm))
                    .product()
            })
            .collect()
    }

    /// ℓ_b′(x) for every b.
    pub fn derivatives(&self, x: f64) -> Vec<f64> {
        let xs = &self.gl.nodes;
        let n = xs.len();
        (0..n)
            .map(|b| {
                let mut s = 0.0;
                for m in (0..n).filter(|&m| m != b) {
                    let mut prod = 1.0 / (xs[b] - xs[m]);
                    for l in (0..n).filter(|&l| l != b && l != m) {
                        prod *= (x - xs[l]) / (xs[b] - xs[l]);
                    }
                    s += prod;
                }
                s
            })
            .collect()
    }

    /// Tensor quadrature weight ω_a ω_b of node `b * n1 + a` on the unit square.
    pub fn node_weight(&self, node: usize) -> f64 {
        let n1 = self.n1();
        self.gl.weights[node % n1] * self.gl.weights[node / n1]
    }
}

/// Nodal DG coefficients, layout `(element * npe + node) * NVAR + var` with
/// elements row-major and nodes x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DGField {
    pub nx: usize,
    pub nz: usize,
    pub k: usize,
    pub data: Vec<f64>,
}

impl DGField {
    pub fn zeros(nx: usize, nz: usize, k: usize) -> Self {
        Self {
            nx,
            nz,
            k,
            data: vec![0.0; nx * nz * (k + 1) * (k + 1) * NVAR],
        }
    }

    pub fn n_elements(&self) -> usize {
        self.nx * self.nz
    }

    pub fn npe(&self) -> usize {
        (self.k + 1) * (self.k + 1)
    }

    pub fn node(&self, e: usize, node: usize) -> ConservedState {
        let o = (e * self.npe() + node) * NVAR;
        ConservedState::from_slice(&self.data[o..o + NVAR])
    }

    pub fn set_node(&mut self, e: usize, node: usize, s: ConservedState) {
        let o = (e * self.npe() + node) * NVAR;
        s.write_to(&mut self.data[o..o + NVAR]);
    }
}

/// Physical coordinates of a node.
pub fn node_position(grid: &LevelGrid, basis: &DGBasis, e: usize, node: usize) -> (f64, f64) {
    let (ei, ej) = grid.unflat(e);
    let n1 = basis.n1();
    let (a, b) = (node % n1, node / n1);
    (
        grid.x_min + (ei as f64 + basis.gl.nodes[a]) * grid.dx,
        grid.z_min + (ej as f64 + basis.gl.nodes[b]) * grid.dz,
    )
}

/// Projection of initial data, realized as interpolation at the GL nodes
/// (the collocated L² projection under the diagonal mass matrix).
pub fn l2_project(
    f: impl Fn(f64, f64) -> ConservedState,
    grid: &LevelGrid,
    basis: &DGBasis,
) -> DGField {
    let mut out = DGField::zeros(grid.nx, grid.nz, basis.k);
    for e in 0..grid.n_cells() {
        for node in 0..basis.npe() {
            let (x, z) = node_position(grid, basis, e, node);
            out.set_node(e, node, f(x, z));
        }
    }
    out
}

/// Tensor Lagrange interpolation inside element (i, j) at reference point `local`.
pub fn evaluate(
    field: &DGField,
    basis: &DGBasis,
    i: usize,
    j: usize,
    local: [f64; 2],
) -> ConservedState {
    let lx = basis.values(local[0]);
    let lz = basis.values(local[1]);
    let n1 = basis.n1();
    let e = j * field.nx + i;
    let mut s = ConservedState::ZERO;
    for b in 0..n1 {
        for a in 0..n1 {
            s += field.node(e, b * n1 + a) * (lx[a] * lz[b]);
        }
    }
    s
}

/// ∫_Ω of one component, exact on the DG space.
pub fn total_mass(field: &DGField, grid: &LevelGrid, basis: &DGBasis, comp: usize) -> f64 {
    let area = grid.cell_area();
    let mut m = 0.0;
    for e in 0..field.n_elements() {
        for node in 0..basis.npe() {
            m += area * basis.node_weight(node) * field.node(e, node)[comp];
        }
    }
    m
}

/// Norm weights |E| ω_a ω_b / |Ω| per degree of freedom.
pub fn dg_weights(grid: &LevelGrid, basis: &DGBasis) -> Vec<f64> {
    let n_el = grid.n_cells();
    let omega = grid.cell_area() * n_el as f64;
    let mut w = Vec::with_capacity(n_el * basis.npe() * NVAR);
    for _ in 0..n_el {
        for node in 0..basis.npe() {
            let v = grid.cell_area() * basis.node_weight(node) / omega;
            w.extend_from_slice(&[v; NVAR]);
        }
    }
    w
}

// side order W, E, S, N as in mesh::Side
const W: usize = 0;
const E: usize = 1;
const S: usize = 2;
const N: usize = 3;

struct ViscousLocal {
    /// Nodal background-subtracted viscous flux.
    flux: Vec<FluxTensor>,
    q: [Vec<[f64; 3]>; 4],
    kappa: [Vec<f64>; 4],
    /// Normal (+x or +z) component of the viscous flux rows 1..=3 on each side.
    normal_flux: [Vec<[f64; 3]>; 4],
}

struct ElementLocal {
    trace: [Vec<ConservedState>; 4],
    visc: Option<ViscousLocal>,
}

#[derive(Clone, Copy, Default)]
struct FaceData {
    flux: ConservedState,
    /// q′_L − q′_R for the symmetric interior-penalty term.
    jump: [f64; 3],
    kappa: [f64; 2],
}

/// The semi-discrete operator f(U′) = M⁻¹ L_h(U′).
pub struct DgOperator<M: BalanceLaw> {
    model: M,
    pub basis: DGBasis,
    pub grid: LevelGrid,
    pub level: usize,
    bc: BoundarySpec,
    bg: Vec<ConservedState>,
    bg_flux: Vec<FluxTensor>,
    bg_src: Vec<ConservedState>,
    bg_prim: Vec<[f64; 3]>,
    bg_grad: Vec<[[f64; 2]; 3]>,
    xf_bg: Vec<ConservedState>,
    xf_ref: Vec<ConservedState>,
    zf_bg: Vec<ConservedState>,
    zf_ref: Vec<ConservedState>,
    weights: Vec<f64>,
    penalty: f64,
    ops: AtomicUsize,
}

impl<M: BalanceLaw> DgOperator<M> {
    pub fn new(
        model: M,
        basis: DGBasis,
        grid: LevelGrid,
        level: usize,
        bc: BoundarySpec,
        background: impl Fn(f64, f64) -> ConservedState,
    ) -> Result<Self> {
        let n1 = basis.n1();
        let npe = basis.npe();
        let n_el = grid.n_cells();
        let mut bg = Vec::with_capacity(n_el * npe);
        for e in 0..n_el {
            for node in 0..npe {
                let (x, z) = node_position(&grid, &basis, e, node);
                bg.push(background(x, z));
            }
        }
        let bg_flux = bg
            .iter()
            .enumerate()
            .map(|(i, u)| model.flux(u).map_err(|err| err.at_cell(level, i / npe)))
            .collect::<Result<Vec<_>>>()?;
        let bg_src = bg.iter().map(|u| model.source(u)).collect();

        let viscous = model.viscosity() > 0.0;
        let mut bg_prim = vec![[0.0; 3]; n_el * npe];
        let mut bg_grad = vec![[[0.0; 2]; 3]; n_el * npe];
        if viscous {
            for (i, u) in bg.iter().enumerate() {
                bg_prim[i] = model.primitives(u).map_err(|err| err.at_cell(level, i / npe))?.1;
            }
            for e in 0..n_el {
                let q = &bg_prim[e * npe..(e + 1) * npe];
                let g = nodal_gradient(&basis, &grid, q);
                bg_grad[e * npe..(e + 1) * npe].copy_from_slice(&g);
            }
        }

        let (nx, nz) = (grid.nx, grid.nz);
        let mut xf_bg = Vec::with_capacity((nx + 1) * nz * n1);
        for fx in 0..=nx {
            for j in 0..nz {
                for b in 0..n1 {
                    let z = grid.z_min + (j as f64 + basis.gl.nodes[b]) * grid.dz;
                    xf_bg.push(background(grid.x_face(fx), z));
                }
            }
        }
        let mut zf_bg = Vec::with_capacity((nz + 1) * nx * n1);
        for fz in 0..=nz {
            for i in 0..nx {
                for a in 0..n1 {
                    let x = grid.x_min + (i as f64 + basis.gl.nodes[a]) * grid.dx;
                    zf_bg.push(background(x, grid.z_face(fz)));
                }
            }
        }
        let reference = |u: &ConservedState, n: [f64; 2]| model.numerical_flux(u, u, n);
        let xf_ref = xf_bg
            .iter()
            .map(|u| reference(u, [1.0, 0.0]))
            .collect::<Result<Vec<_>>>()?;
        let zf_ref = zf_bg
            .iter()
            .map(|u| reference(u, [0.0, 1.0]))
            .collect::<Result<Vec<_>>>()?;

        let weights = dg_weights(&grid, &basis);
        let penalty = ((basis.k + 1) * (basis.k + 1)) as f64;
        Ok(Self {
            model,
            basis,
            grid,
            level,
            bc,
            bg,
            bg_flux,
            bg_src,
            bg_prim,
            bg_grad,
            xf_bg,
            xf_ref,
            zf_bg,
            zf_ref,
            weights,
            penalty,
            ops: AtomicUsize::new(0),
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn boundary(&self) -> &BoundarySpec {
        &self.bc
    }

    /// Background state at every node.
    pub fn background(&self) -> &[ConservedState] {
        &self.bg
    }

    pub fn n_dofs(&self) -> usize {
        self.bg.len() * NVAR
    }

    /// Maximal x and z signal speeds of Ū + U′ over all nodes.
    pub fn max_wave_speeds(&self, u: &[f64]) -> Result<[f64; 2]> {
        let mut m = [0.0f64; 2];
        for (i, bg) in self.bg.iter().enumerate() {
            let s = self
                .model
                .wave_speeds(&(*bg + ConservedState::from_slice(&u[i * NVAR..])))
                .map_err(|err| err.at_cell(self.level, i / self.basis.npe()))?;
            m = [m[0].max(s[0]), m[1].max(s[1])];
        }
        Ok(m)
    }

    /// Per-node signal speeds of Ū + U′.
    pub fn node_wave_speeds(&self, u: &[f64]) -> Result<Vec<[f64; 2]>> {
        self.bg
            .iter()
            .enumerate()
            .map(|(i, bg)| {
                self.model
                    .wave_speeds(&(*bg + ConservedState::from_slice(&u[i * NVAR..])))
                    .map_err(|err| err.at_cell(self.level, i / self.basis.npe()))
            })
            .collect()
    }

    fn east_face(&self, i: usize) -> usize {
        if i + 1 == self.grid.nx && self.bc.periodic_x() {
            0
        } else {
            i + 1
        }
    }

    fn north_face(&self, j: usize) -> usize {
        if j + 1 == self.grid.nz && self.bc.periodic_z() {
            0
        } else {
            j + 1
        }
    }

    fn pert(&self, u: &[f64], e: usize, node: usize) -> ConservedState {
        ConservedState::from_slice(&u[(e * self.basis.npe() + node) * NVAR..])
    }

    fn element_local(&self, e: usize, u: &[f64], viscous: bool) -> Result<ElementLocal> {
        let b = &self.basis;
        let n1 = b.n1();
        let npe = b.npe();
        let trace_of = |vals: &dyn Fn(usize) -> ConservedState| -> [Vec<ConservedState>; 4] {
            let mut t: [Vec<ConservedState>; 4] = Default::default();
            for p in 0..n1 {
                let (mut w, mut ea, mut s, mut n) = (
                    ConservedState::ZERO,
                    ConservedState::ZERO,
                    ConservedState::ZERO,
                    ConservedState::ZERO,
                );
                for m in 0..n1 {
                    w += vals(p * n1 + m) * b.at0[m];
                    ea += vals(p * n1 + m) * b.at1[m];
                    s += vals(m * n1 + p) * b.at0[m];
                    n += vals(m * n1 + p) * b.at1[m];
                }
                t[W].push(w);
                t[E].push(ea);
                t[S].push(s);
                t[N].push(n);
            }
            t
        };
        let trace = trace_of(&|node| self.pert(u, e, node));
        if !viscous {
            return Ok(ElementLocal { trace, visc: None });
        }

        let mu = self.model.viscosity();
        let mut q = Vec::with_capacity(npe);
        let mut rho = Vec::with_capacity(npe);
        for node in 0..npe {
            let bgi = self.bg[e * npe + node];
            let (r, prim) = self.model.primitives(&(bgi + self.pert(u, e, node)))?;
            let qb = self.bg_prim[e * npe + node];
            q.push([prim[0] - qb[0], prim[1] - qb[1], prim[2] - qb[2]]);
            rho.push(r);
        }
        let grad = nodal_gradient(b, &self.grid, &q);
        let mut flux = Vec::with_capacity(npe);
        for node in 0..npe {
            let rp = rho[node] - self.bg[e * npe + node].rho;
            let gb = &self.bg_grad[e * npe + node];
            let col = |d: usize| {
                let c = |r: usize| mu * (rho[node] * grad[node][r][d] + rp * gb[r][d]);
                ConservedState::new(0.0, c(0), c(1), c(2))
            };
            flux.push([col(0), col(1)]);
        }

        // pack (q, ρ, F_v·e_x, F_v·e_z) into states to reuse the trace kernel
        let packed_q = |node: usize| ConservedState::new(q[node][0], q[node][1], q[node][2], rho[node]);
        let tq = trace_of(&packed_q);
        let tfx = trace_of(&|node| flux[node][0]);
        let tfz = trace_of(&|node| flux[node][1]);
        let mut vq: [Vec<[f64; 3]>; 4] = Default::default();
        let mut vk: [Vec<f64>; 4] = Default::default();
        let mut vf: [Vec<[f64; 3]>; 4] = Default::default();
        for side in 0..4 {
            for p in 0..n1 {
                let s = tq[side][p];
                vq[side].push([s.rho, s.rho_u, s.rho_w]);
                vk[side].push(mu * s.rho_theta);
                let f = if side < 2 { tfx[side][p] } else { tfz[side][p] };
                vf[side].push([f.rho_u, f.rho_w, f.rho_theta]);
            }
        }
        Ok(ElementLocal {
            trace,
            visc: Some(ViscousLocal {
                flux,
                q: vq,
                kappa: vk,
                normal_flux: vf,
            }),
        })
    }

    /// Canonical flux through an interior face from left/lower `l` to
    /// right/upper `r`.
    #[allow(clippy::too_many_arguments)]
    fn interior_face(
        &self,
        bg: &ConservedState,
        reference: &ConservedState,
        n: [f64; 2],
        h: f64,
        l: (&ElementLocal, usize),
        r: (&ElementLocal, usize),
        p: usize,
    ) -> Result<FaceData> {
        let (le, ls) = l;
        let (re, rs) = r;
        let mut flux = self
            .model
            .numerical_flux(&(*bg + le.trace[ls][p]), &(*bg + re.trace[rs][p]), n)?
            - *reference;
        let mut fd = FaceData::default();
        if let (Some(lv), Some(rv)) = (&le.visc, &re.visc) {
            let (ql, qr) = (lv.q[ls][p], rv.q[rs][p]);
            let (kl, kr) = (lv.kappa[ls][p], rv.kappa[rs][p]);
            let (fl, fr) = (lv.normal_flux[ls][p], rv.normal_flux[rs][p]);
            let pen = self.penalty / h * 0.5 * (kl + kr);
            let mut g = [0.0; 3];
            for c in 0..3 {
                fd.jump[c] = ql[c] - qr[c];
                g[c] = 0.5 * (fl[c] + fr[c]) - pen * fd.jump[c];
            }
            flux -= ConservedState::new(0.0, g[0], g[1], g[2]);
            fd.kappa = [kl, kr];
        }
        fd.flux = flux;
        Ok(fd)
    }

    /// Canonical flux through a slip wall; `outward` is the normal seen from
    /// the interior element.
    fn wall_face(
        &self,
        bg: &ConservedState,
        u: &ConservedState,
        outward: [f64; 2],
        sign: f64,
    ) -> Result<FaceData> {
        let h = self.model.wall_flux(&(*bg + *u), outward)?;
        let h0 = self.model.wall_flux(bg, outward)?;
        Ok(FaceData {
            flux: (h - h0) * sign,
            ..Default::default()
        })
    }

    fn face_pass(&self, locals: &[ElementLocal]) -> Result<(Vec<FaceData>, Vec<FaceData>)> {
        let g = &self.grid;
        let n1 = self.basis.n1();
        let (nx, nz) = (g.nx, g.nz);
        let elem = |i: usize, j: usize| j * nx + i;

        let xfaces = (0..(nx + 1) * nz * n1).into_par_iter().map(|idx| {
            let (fx, j, b) = (idx / (nz * n1), (idx / n1) % nz, idx % n1);
            let bg = &self.xf_bg[idx];
            let left = if fx > 0 {
                Some(elem(fx - 1, j))
            } else if self.bc.periodic_x() {
                Some(elem(nx - 1, j))
            } else {
                None
            };
            let right = if fx < nx {
                Some(elem(fx, j))
            } else if self.bc.periodic_x() {
                // face nx duplicates face 0 and is never read
                return Ok(FaceData::default());
            } else {
                None
            };
            match (left, right) {
                (Some(l), Some(r)) => self
                    .interior_face(bg, &self.xf_ref[idx], [1.0, 0.0], g.dx, (&locals[l], E), (&locals[r], W), b)
                    .map_err(|err| err.at_cell(self.level, r)),
                (None, Some(r)) => self
                    .wall_face(bg, &locals[r].trace[W][b], [-1.0, 0.0], -1.0)
                    .map_err(|err| err.at_cell(self.level, r)),
                (Some(l), None) => self
                    .wall_face(bg, &locals[l].trace[E][b], [1.0, 0.0], 1.0)
                    .map_err(|err| err.at_cell(self.level, l)),
                (None, None) => unreachable!("a face has at least one element"),
            }
        });
        let xfaces = xfaces.collect::<Result<Vec<_>>>()?;

        let zfaces = (0..(nz + 1) * nx * n1).into_par_iter().map(|idx| {
            let (fz, i, a) = (idx / (nx * n1), (idx / n1) % nx, idx % n1);
            let bg = &self.zf_bg[idx];
            let below = if fz > 0 {
                Some(elem(i, fz - 1))
            } else if self.bc.periodic_z() {
                Some(elem(i, nz - 1))
            } else {
                None
            };
            let above = if fz < nz {
                Some(elem(i, fz))
            } else if self.bc.periodic_z() {
                return Ok(FaceData::default());
            } else {
                None
            };
            match (below, above) {
                (Some(l), Some(r)) => self
                    .interior_face(bg, &self.zf_ref[idx], [0.0, 1.0], g.dz, (&locals[l], N), (&locals[r], S), a)
                    .map_err(|err| err.at_cell(self.level, r)),
                (None, Some(r)) => self
                    .wall_face(bg, &locals[r].trace[S][a], [0.0, -1.0], -1.0)
                    .map_err(|err| err.at_cell(self.level, r)),
                (Some(l), None) => self
                    .wall_face(bg, &locals[l].trace[N][a], [0.0, 1.0], 1.0)
                    .map_err(|err| err.at_cell(self.level, l)),
                (None, None) => unreachable!("a face has at least one element"),
            }
        });
        let zfaces = zfaces.collect::<Result<Vec<_>>>()?;
        Ok((xfaces, zfaces))
    }

    fn assemble_element(
        &self,
        e: usize,
        u: &[f64],
        local: &ElementLocal,
        faces: (&[FaceData], &[FaceData]),
        out: &mut [f64],
    ) -> Result<()> {
        let b = &self.basis;
        let g = &self.grid;
        let n1 = b.n1();
        let npe = b.npe();
        let (ei, ej) = g.unflat(e);
        let (hx, hz) = (g.dx, g.dz);
        let w = &b.gl.weights;

        let mut fx = Vec::with_capacity(npe);
        let mut fz = Vec::with_capacity(npe);
        let mut r = Vec::with_capacity(npe);
        for node in 0..npe {
            let i = e * npe + node;
            let full = self.bg[i] + self.pert(u, e, node);
            let f = self.model.flux(&full)?;
            let mut px = f[0] - self.bg_flux[i][0];
            let mut pz = f[1] - self.bg_flux[i][1];
            if let Some(v) = &local.visc {
                px -= v.flux[node][0];
                pz -= v.flux[node][1];
            }
            fx.push(px);
            fz.push(pz);
            r.push(self.model.source(&full) - self.bg_src[i]);
        }

        for bb in 0..n1 {
            for a in 0..n1 {
                let mut acc = ConservedState::ZERO;
                for p in 0..n1 {
                    acc += fx[bb * n1 + p] * (b.weak[a * n1 + p] / hx);
                    acc += fz[p * n1 + a] * (b.weak[bb * n1 + p] / hz);
                }
                r[bb * n1 + a] += acc;
            }
        }

        let (xfaces, zfaces) = faces;
        let xf = |fx: usize, p: usize| &xfaces[(fx * g.nz + ej) * n1 + p];
        let zf = |fz: usize, p: usize| &zfaces[(fz * g.nx + ei) * n1 + p];
        let (fw, fe) = (ei, self.east_face(ei));
        let (fs, fnn) = (ej, self.north_face(ej));
        let visc = local.visc.is_some();
        let interior_x = |f: usize| self.bc.periodic_x() || (f > 0 && f < g.nx);
        let interior_z = |f: usize| self.bc.periodic_z() || (f > 0 && f < g.nz);

        for bb in 0..n1 {
            for a in 0..n1 {
                let node = bb * n1 + a;
                let mut acc = xf(fw, bb).flux * (b.at0[a] / (hx * w[a]))
                    - xf(fe, bb).flux * (b.at1[a] / (hx * w[a]))
                    + zf(fs, a).flux * (b.at0[bb] / (hz * w[bb]))
                    - zf(fnn, a).flux * (b.at1[bb] / (hz * w[bb]));
                if visc {
                    let mut sym = [0.0; 3];
                    let mut add = |fd: &FaceData, own: usize, coef: f64| {
                        for (c, s) in sym.iter_mut().enumerate() {
                            *s += 0.5 * fd.kappa[own] * fd.jump[c] * coef;
                        }
                    };
                    if interior_x(fe) {
                        add(xf(fe, bb), 0, b.d_at1[a] / (hx * hx * w[a]));
                    }
                    if interior_x(fw) {
                        add(xf(fw, bb), 1, b.d_at0[a] / (hx * hx * w[a]));
                    }
                    if interior_z(fnn) {
                        add(zf(fnn, a), 0, b.d_at1[bb] / (hz * hz * w[bb]));
                    }
                    if interior_z(fs) {
                        add(zf(fs, a), 1, b.d_at0[bb] / (hz * hz * w[bb]));
                    }
                    acc += ConservedState::new(0.0, sym[0], sym[1], sym[2]);
                }
                r[node] += acc;
            }
        }
        for (node, s) in r.iter().enumerate() {
            s.write_to(&mut out[node * NVAR..]);
        }
        Ok(())
    }

    /// out ← f(u).
    pub fn apply(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        assert_eq!(u.len(), self.n_dofs());
        assert_eq!(out.len(), self.n_dofs());
        self.ops.fetch_add(1, Ordering::Relaxed);
        let viscous = self.model.viscosity() > 0.0;
        let n_el = self.grid.n_cells();
        let locals = (0..n_el)
            .into_par_iter()
            .map(|e| {
                self.element_local(e, u, viscous)
                    .map_err(|err| err.at_cell(self.level, e))
            })
            .collect::<Result<Vec<_>>>()?;
        let (xf, zf) = self.face_pass(&locals)?;
        let chunk = self.basis.npe() * NVAR;
        out.par_chunks_mut(chunk)
            .enumerate()
            .try_for_each(|(e, o)| {
                self.assemble_element(e, u, &locals[e], (&xf, &zf), o)
                    .map_err(|err| err.at_cell(self.level, e))
            })
    }
}

/// ∇q at the nodes of one element from nodal values of three fields.
fn nodal_gradient(basis: &DGBasis, grid: &LevelGrid, q: &[[f64; 3]]) -> Vec<[[f64; 2]; 3]> {
    let n1 = basis.n1();
    let mut g = vec![[[0.0; 2]; 3]; n1 * n1];
    for b in 0..n1 {
        for a in 0..n1 {
            let node = b * n1 + a;
            for m in 0..n1 {
                let dx = basis.diff[a * n1 + m] / grid.dx;
                let dz = basis.diff[b * n1 + m] / grid.dz;
                for c in 0..3 {
                    g[node][c][0] += dx * q[b * n1 + m][c];
                    g[node][c][1] += dz * q[m * n1 + a][c];
                }
            }
        }
    }
    g
}

impl<M: BalanceLaw> OdeRhs for DgOperator<M> {
    fn len(&self) -> usize {
        self.n_dofs()
    }

    fn eval(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        self.apply(u, out)
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn state_norm(&self, u: &[f64]) -> f64 {
        let full: Vec<f64> = u
            .iter()
            .enumerate()
            .map(|(i, v)| v + self.bg[i / NVAR][i % NVAR])
            .collect();
        crate::linalg::InnerProduct::Weighted(&self.weights).norm(&full)
    }

    fn evaluations(&self) -> usize {
        self.ops.load(Ordering::Relaxed)
    }
}

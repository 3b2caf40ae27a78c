//! Transfers between DG nodal data and the finest finite-volume subgrid.
//!
//! T interpolates the element polynomial at the (k+1)² subcell centers; its
//! inverse recovers the unique tensor polynomial through those values. Both
//! factor into 1D matrices applied along x and then z.

use nalgebra::DMatrix;

use crate::dg::{DGBasis, DGField};
use crate::fv::FVField;
use crate::mesh::SubgridMap;
use crate::quadrature::{modified_newton_cotes, QuadRule1D};
use crate::state::NVAR;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransferKind {
    #[default]
    Interpolation,
    /// Interpolation followed by the per-cell mass correction.
    MassFix,
}

#[derive(Debug, Clone)]
pub struct TransferMatrices {
    n1: usize,
    /// `t1[c * n1 + i]` = ℓ_i at the center of subcell c.
    t1: Vec<f64>,
    t1_inv: Vec<f64>,
    centers: QuadRule1D,
}

impl TransferMatrices {
    pub fn new(basis: &DGBasis) -> Result<Self> {
        let n1 = basis.n1();
        let centers = modified_newton_cotes(basis.k)?;
        let mut t1 = Vec::with_capacity(n1 * n1);
        for &x in &centers.nodes {
            t1.extend(basis.values(x));
        }
        let inv = DMatrix::from_row_slice(n1, n1, &t1)
            .try_inverse()
            .ok_or_else(|| Error::Quadrature("singular interpolation matrix".into()))?;
        let t1_inv = (0..n1 * n1).map(|i| inv[(i / n1, i % n1)]).collect();
        Ok(Self {
            n1,
            t1,
            t1_inv,
            centers,
        })
    }

    fn tensor(m: &[f64], n1: usize) -> DMatrix<f64> {
        let npe = n1 * n1;
        DMatrix::from_fn(npe, npe, |r, c| {
            let (ra, rb) = (r % n1, r / n1);
            let (ca, cb) = (c % n1, c / n1);
            m[ra * n1 + ca] * m[rb * n1 + cb]
        })
    }

    /// T_E on one element as a dense (k+1)² × (k+1)² matrix.
    pub fn element_matrix(&self) -> DMatrix<f64> {
        Self::tensor(&self.t1, self.n1)
    }

    pub fn element_inverse(&self) -> DMatrix<f64> {
        Self::tensor(&self.t1_inv, self.n1)
    }

    /// out[b][a] = Σ_{q,p} m[b][q] m[a][p] inp[q][p] per component.
    fn apply_tensor(&self, m: &[f64], inp: &[[f64; NVAR]], out: &mut [[f64; NVAR]]) {
        let n1 = self.n1;
        let mut tmp = vec![[0.0; NVAR]; n1 * n1];
        for q in 0..n1 {
            for a in 0..n1 {
                let mut s = [0.0; NVAR];
                for p in 0..n1 {
                    let w = m[a * n1 + p];
                    for v in 0..NVAR {
                        s[v] += w * inp[q * n1 + p][v];
                    }
                }
                tmp[q * n1 + a] = s;
            }
        }
        for b in 0..n1 {
            for a in 0..n1 {
                let mut s = [0.0; NVAR];
                for q in 0..n1 {
                    let w = m[b * n1 + q];
                    for v in 0..NVAR {
                        s[v] += w * tmp[q * n1 + a][v];
                    }
                }
                out[b * n1 + a] = s;
            }
        }
    }

    fn gather(data: &[f64], idx: impl Iterator<Item = usize>) -> Vec<[f64; NVAR]> {
        idx.map(|i| {
            let mut s = [0.0; NVAR];
            s.copy_from_slice(&data[i * NVAR..(i + 1) * NVAR]);
            s
        })
        .collect()
    }

    /// T on flat slices: DG nodal data → finest-level cell values.
    pub fn dg_to_fv_slice(&self, map: &SubgridMap, kind: TransferKind, dg: &[f64], fv: &mut [f64]) {
        let npe = self.n1 * self.n1;
        let n_el = dg.len() / (npe * NVAR);
        let mut out = vec![[0.0; NVAR]; npe];
        for e in 0..n_el {
            let inp = Self::gather(dg, e * npe..(e + 1) * npe);
            self.apply_tensor(&self.t1, &inp, &mut out);
            if kind == TransferKind::MassFix {
                self.mass_fix(&mut out);
            }
            for (local, cell) in map.subcells(e).enumerate() {
                fv[cell * NVAR..(cell + 1) * NVAR].copy_from_slice(&out[local]);
            }
        }
    }

    /// Shift the subcell values of one element so their average equals the
    /// element mean given by the center quadrature rule.
    fn mass_fix(&self, vals: &mut [[f64; NVAR]]) {
        let n1 = self.n1;
        let w = &self.centers.weights;
        for v in 0..NVAR {
            let mut mean = 0.0;
            let mut quad = 0.0;
            for (i, s) in vals.iter().enumerate() {
                mean += s[v];
                quad += w[i % n1] * w[i / n1] * s[v];
            }
            let shift = mean / vals.len() as f64 - quad;
            for s in vals.iter_mut() {
                s[v] -= shift;
            }
        }
    }

    /// T⁻¹ on flat slices.
    pub fn fv_to_dg_slice(&self, map: &SubgridMap, fv: &[f64], dg: &mut [f64]) {
        let npe = self.n1 * self.n1;
        let n_el = dg.len() / (npe * NVAR);
        let mut out = vec![[0.0; NVAR]; npe];
        for e in 0..n_el {
            let inp = Self::gather(fv, map.subcells(e));
            self.apply_tensor(&self.t1_inv, &inp, &mut out);
            for (node, s) in out.iter().enumerate() {
                let o = (e * npe + node) * NVAR;
                dg[o..o + NVAR].copy_from_slice(s);
            }
        }
    }

    pub fn dg_to_fv(&self, map: &SubgridMap, u: &DGField) -> FVField {
        let mut f = FVField::zeros(map.fv_level, u.data.len() / NVAR);
        self.dg_to_fv_slice(map, TransferKind::Interpolation, &u.data, &mut f.data);
        f
    }

    pub fn dg_to_fv_massfix(&self, map: &SubgridMap, u: &DGField) -> FVField {
        let mut f = FVField::zeros(map.fv_level, u.data.len() / NVAR);
        self.dg_to_fv_slice(map, TransferKind::MassFix, &u.data, &mut f.data);
        f
    }

    pub fn fv_to_dg(&self, map: &SubgridMap, u: &FVField, nx: usize, nz: usize) -> DGField {
        let mut d = DGField::zeros(nx, nz, self.n1 - 1);
        self.fv_to_dg_slice(map, &u.data, &mut d.data);
        d
    }
}

//! Nested uniform Cartesian quad grids.
//!
//! Level 0 is the base grid; every further level splits each cell into four
//! children. The DG mesh sits on level `dg_level` and the finest level is the
//! finite-volume subgrid with (k+1)² subcells per DG cell.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain2D {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Domain2D {
    pub fn new(x_min: f64, x_max: f64, z_min: f64, z_max: f64) -> Result<Self> {
        if !(x_max > x_min && z_max > z_min) {
            return Err(Error::Mesh(format!(
                "empty domain [{x_min}, {x_max}] x [{z_min}, {z_max}]"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            z_min,
            z_max,
        })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.z_max - self.z_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Periodic,
    Slip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    West,
    East,
    South,
    North,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::West, Side::East, Side::South, Side::North];

    /// Outward unit normal.
    pub fn normal(self) -> [f64; 2] {
        match self {
            Side::West => [-1.0, 0.0],
            Side::East => [1.0, 0.0],
            Side::South => [0.0, -1.0],
            Side::North => [0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundarySpec {
    pub west: BoundaryKind,
    pub east: BoundaryKind,
    pub south: BoundaryKind,
    pub north: BoundaryKind,
}

impl BoundarySpec {
    pub fn new(
        west: BoundaryKind,
        east: BoundaryKind,
        south: BoundaryKind,
        north: BoundaryKind,
    ) -> Result<Self> {
        if (west == BoundaryKind::Periodic) != (east == BoundaryKind::Periodic)
            || (south == BoundaryKind::Periodic) != (north == BoundaryKind::Periodic)
        {
            return Err(Error::Mesh(
                "periodic boundaries must be paired on opposite sides".into(),
            ));
        }
        Ok(Self {
            west,
            east,
            south,
            north,
        })
    }

    pub fn all(kind: BoundaryKind) -> Self {
        Self {
            west: kind,
            east: kind,
            south: kind,
            north: kind,
        }
    }

    pub fn side(&self, s: Side) -> BoundaryKind {
        match s {
            Side::West => self.west,
            Side::East => self.east,
            Side::South => self.south,
            Side::North => self.north,
        }
    }

    pub fn periodic_x(&self) -> bool {
        self.west == BoundaryKind::Periodic
    }

    pub fn periodic_z(&self) -> bool {
        self.south == BoundaryKind::Periodic
    }
}

/// One uniform grid of the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelGrid {
    pub nx: usize,
    pub nz: usize,
    pub dx: f64,
    pub dz: f64,
    pub x_min: f64,
    pub z_min: f64,
}

impl LevelGrid {
    pub fn n_cells(&self) -> usize {
        self.nx * self.nz
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dz
    }

    /// Row-major flat index, i fastest.
    #[inline]
    pub fn flat(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn unflat(&self, c: usize) -> (usize, usize) {
        (c % self.nx, c / self.nx)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x_min + (i as f64 + 0.5) * self.dx,
            self.z_min + (j as f64 + 0.5) * self.dz,
        )
    }

    /// x coordinate of the vertical face with index `f` in 0..=nx.
    #[inline]
    pub fn x_face(&self, f: usize) -> f64 {
        self.x_min + f as f64 * self.dx
    }

    #[inline]
    pub fn z_face(&self, f: usize) -> f64 {
        self.z_min + f as f64 * self.dz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub level: usize,
    pub i: usize,
    pub j: usize,
}

impl CellIndex {
    pub const fn new(level: usize, i: usize, j: usize) -> Self {
        Self { level, i, j }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neighbor {
    Interior(CellIndex),
    /// Neighbor reached by wrapping across a periodic boundary.
    Periodic(CellIndex),
    Boundary(BoundaryKind),
}

impl Neighbor {
    pub fn cell(&self) -> Option<CellIndex> {
        match *self {
            Neighbor::Interior(c) | Neighbor::Periodic(c) => Some(c),
            Neighbor::Boundary(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridHierarchy {
    pub domain: Domain2D,
    pub base_nx: usize,
    pub base_nz: usize,
    levels: Vec<LevelGrid>,
}

impl GridHierarchy {
    pub fn new(domain: Domain2D, base_nx: usize, base_nz: usize, n_levels: usize) -> Result<Self> {
        if base_nx == 0 || base_nz == 0 {
            return Err(Error::Mesh("base grid needs at least one cell per direction".into()));
        }
        if n_levels == 0 {
            return Err(Error::Mesh("hierarchy needs at least one level".into()));
        }
        let levels = (0..n_levels)
            .map(|l| {
                let nx = base_nx << l;
                let nz = base_nz << l;
                LevelGrid {
                    nx,
                    nz,
                    dx: domain.width() / nx as f64,
                    dz: domain.height() / nz as f64,
                    x_min: domain.x_min,
                    z_min: domain.z_min,
                }
            })
            .collect();
        Ok(Self {
            domain,
            base_nx,
            base_nz,
            levels,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> &LevelGrid {
        &self.levels[l]
    }

    pub fn finest(&self) -> usize {
        self.levels.len() - 1
    }

    fn check(&self, c: CellIndex) -> Result<&LevelGrid> {
        let g = self.levels.get(c.level).ok_or(Error::LevelOutOfRange {
            level: c.level,
            n_levels: self.n_levels(),
        })?;
        if c.i >= g.nx || c.j >= g.nz {
            return Err(Error::Mesh(format!(
                "cell ({}, {}) outside level {} grid {}x{}",
                c.i, c.j, c.level, g.nx, g.nz
            )));
        }
        Ok(g)
    }

    /// The four cells covering `c` on the next finer level, ordered
    /// (0,0), (1,0), (0,1), (1,1) relative to the lower-left child.
    pub fn children(&self, c: CellIndex) -> Result<[CellIndex; 4]> {
        self.check(c)?;
        if c.level + 1 >= self.n_levels() {
            return Err(Error::LevelOutOfRange {
                level: c.level + 1,
                n_levels: self.n_levels(),
            });
        }
        let (l, i, j) = (c.level + 1, 2 * c.i, 2 * c.j);
        Ok([
            CellIndex::new(l, i, j),
            CellIndex::new(l, i + 1, j),
            CellIndex::new(l, i, j + 1),
            CellIndex::new(l, i + 1, j + 1),
        ])
    }

    pub fn parent(&self, c: CellIndex) -> Result<CellIndex> {
        self.check(c)?;
        if c.level == 0 {
            return Err(Error::LevelOutOfRange {
                level: 0,
                n_levels: self.n_levels(),
            });
        }
        Ok(CellIndex::new(c.level - 1, c.i / 2, c.j / 2))
    }

    pub fn area(&self, c: CellIndex) -> f64 {
        self.levels[c.level].cell_area()
    }

    /// Neighbors in the order West, East, South, North.
    pub fn neighbors(&self, c: CellIndex, bc: &BoundarySpec) -> Result<[Neighbor; 4]> {
        let g = *self.check(c)?;
        Ok(Side::ALL.map(|s| neighbor_on(&g, c, s, bc)))
    }
}

fn neighbor_on(g: &LevelGrid, c: CellIndex, side: Side, bc: &BoundarySpec) -> Neighbor {
    let (l, i, j) = (c.level, c.i, c.j);
    let wrap = |n: CellIndex| Neighbor::Periodic(n);
    match side {
        Side::West if i > 0 => Neighbor::Interior(CellIndex::new(l, i - 1, j)),
        Side::East if i + 1 < g.nx => Neighbor::Interior(CellIndex::new(l, i + 1, j)),
        Side::South if j > 0 => Neighbor::Interior(CellIndex::new(l, i, j - 1)),
        Side::North if j + 1 < g.nz => Neighbor::Interior(CellIndex::new(l, i, j + 1)),
        s => match (bc.side(s), s) {
            (BoundaryKind::Periodic, Side::West) => wrap(CellIndex::new(l, g.nx - 1, j)),
            (BoundaryKind::Periodic, Side::East) => wrap(CellIndex::new(l, 0, j)),
            (BoundaryKind::Periodic, Side::South) => wrap(CellIndex::new(l, i, g.nz - 1)),
            (BoundaryKind::Periodic, Side::North) => wrap(CellIndex::new(l, i, 0)),
            (kind, _) => Neighbor::Boundary(kind),
        },
    }
}

/// Relation between DG cells and their finite-volume subcells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgridMap {
    pub dg_level: usize,
    pub fv_level: usize,
    /// Subcells per DG cell and direction, k+1.
    pub ratio: usize,
    dg_nx: usize,
    fv_nx: usize,
}

impl SubgridMap {
    /// Flat finest-level indices of the subcells of DG cell `e`, with
    /// local ordering b*(k+1)+a.
    pub fn subcells(&self, e: usize) -> impl Iterator<Item = usize> + '_ {
        let (ex, ez) = (e % self.dg_nx, e / self.dg_nx);
        (0..self.ratio).flat_map(move |b| {
            (0..self.ratio).map(move |a| (ez * self.ratio + b) * self.fv_nx + ex * self.ratio + a)
        })
    }

    pub fn dg_cell_of(&self, fv_cell: usize) -> usize {
        let (i, j) = (fv_cell % self.fv_nx, fv_cell / self.fv_nx);
        (j / self.ratio) * self.dg_nx + i / self.ratio
    }
}

/// Build the grid hierarchy for a DG mesh on `dg_refine_level` of degree `k`.
pub fn build_hierarchy(
    domain: Domain2D,
    base_nx: usize,
    base_nz: usize,
    dg_refine_level: usize,
    k: usize,
) -> Result<(GridHierarchy, SubgridMap)> {
    let ratio = k + 1;
    if !ratio.is_power_of_two() {
        return Err(Error::UnsupportedDegree(k));
    }
    let fv_level = dg_refine_level + ratio.trailing_zeros() as usize;
    let h = GridHierarchy::new(domain, base_nx, base_nz, fv_level + 1)?;
    let map = SubgridMap {
        dg_level: dg_refine_level,
        fv_level,
        ratio,
        dg_nx: h.level(dg_refine_level).nx,
        fv_nx: h.level(fv_level).nx,
    };
    Ok((h, map))
}

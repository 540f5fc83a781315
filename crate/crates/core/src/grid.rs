//! Uniform rectangular meshes of the unit square, the overlapping subdomain
//! decomposition and the coarse vertex patches.
//!
//! Vertices are addressed by integer pairs `(i, j)` with `0 <= i, j <= n` and
//! flat id `i + (n + 1) * j`; elements by `(i, j)` with `0 <= i, j < n` and
//! flat id `i + n * j`. Coordinates are always computed as `i / n`.

use crate::error::{Error, Result};

/// Uniform `n x n` mesh of `(0,1)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSize(n));
        }
        Ok(Self { n })
    }

    /// Coarse meshes may consist of a single cell.
    pub(crate) fn coarse(n: usize) -> Self {
        debug_assert!(n >= 1);
        Self { n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn num_vertices(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    pub fn num_elements(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn vertex_id(&self, i: usize, j: usize) -> usize {
        i + (self.n + 1) * j
    }

    #[inline]
    pub fn vertex_ij(&self, id: usize) -> (usize, usize) {
        (id % (self.n + 1), id / (self.n + 1))
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    #[inline]
    pub fn vertex_coords(&self, i: usize, j: usize) -> [f64; 2] {
        [self.coord(i), self.coord(j)]
    }

    #[inline]
    pub fn element_id(&self, i: usize, j: usize) -> usize {
        i + self.n * j
    }

    /// Vertex ids of element `(i, j)` in local corner order
    /// `(0,0), (1,0), (0,1), (1,1)`.
    #[inline]
    pub fn element_vertices(&self, i: usize, j: usize) -> [usize; 4] {
        [
            self.vertex_id(i, j),
            self.vertex_id(i + 1, j),
            self.vertex_id(i, j + 1),
            self.vertex_id(i + 1, j + 1),
        ]
    }

    pub fn is_boundary_vertex(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.n || j == self.n
    }

    /// Element containing `p` and the reference coordinates of `p` in it.
    /// Points on interior element edges are assigned to the upper/right element.
    pub fn locate(&self, p: [f64; 2]) -> Result<((usize, usize), [f64; 2])> {
        let [x, y] = p;
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(Error::OutOfDomain { x, y });
        }
        let n = self.n as f64;
        let ei = ((x * n).floor() as usize).min(self.n - 1);
        let ej = ((y * n).floor() as usize).min(self.n - 1);
        Ok(((ei, ej), [x * n - ei as f64, y * n - ej as f64]))
    }
}

pub fn build_fine_grid(n: usize) -> Result<Grid> {
    Grid::new(n)
}

/// Half-open box of cells `[i0, i1) x [j0, j1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellBox {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl CellBox {
    pub fn contains_cell(&self, i: usize, j: usize) -> bool {
        (self.i0..self.i1).contains(&i) && (self.j0..self.j1).contains(&j)
    }

    pub fn num_cells(&self) -> usize {
        (self.i1 - self.i0) * (self.j1 - self.j0)
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.j0..self.j1).flat_map(move |j| (self.i0..self.i1).map(move |i| (i, j)))
    }

    /// All vertices of the closed box, row-major.
    pub fn closed_vertices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.j0..=self.j1).flat_map(move |j| (self.i0..=self.i1).map(move |i| (i, j)))
    }

    /// Vertices whose incident elements (within a grid of `n` cells per side)
    /// all lie inside the box. Functions supported on such vertices extend by
    /// zero to `C^1` functions on the whole grid.
    pub fn inner_vertices(&self, n: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let lo = |a: usize| if a == 0 { 0 } else { a + 1 };
        let hi = |b: usize| if b == n { n } else { b - 1 };
        let (ia, ib, ja, jb) = (lo(self.i0), hi(self.i1), lo(self.j0), hi(self.j1));
        (ja..=jb).flat_map(move |j| (ia..=ib).map(move |i| (i, j)))
    }
}

/// Vertex patch of a coarse vertex: the union of the coarse cells sharing it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Patch {
    /// Coarse vertex indices.
    pub vertex: (usize, usize),
    /// Coordinates of the coarse vertex.
    pub center: [f64; 2],
    /// Fine cells of the patch.
    pub cells: CellBox,
    pub interior: bool,
}

/// Fine grid nested in a coarse grid with integer ratio `m = H/h`.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub fine: Grid,
    pub coarse: Grid,
    pub ratio: usize,
    patches: Vec<Patch>,
}

impl Hierarchy {
    pub fn new(n_fine: usize, ratio: usize) -> Result<Self> {
        let fine = Grid::new(n_fine)?;
        if ratio == 0 || n_fine % ratio != 0 {
            return Err(Error::Config(format!(
                "ratio H/h = {ratio} must divide the fine size {n_fine}"
            )));
        }
        let nc = n_fine / ratio;
        let coarse = Grid::coarse(nc);
        let patches = (0..=nc)
            .flat_map(|jc| (0..=nc).map(move |ic| (ic, jc)))
            .map(|(ic, jc)| Patch {
                vertex: (ic, jc),
                center: coarse.vertex_coords(ic, jc),
                cells: CellBox {
                    i0: ic.saturating_sub(1) * ratio,
                    i1: (ic + 1).min(nc) * ratio,
                    j0: jc.saturating_sub(1) * ratio,
                    j1: (jc + 1).min(nc) * ratio,
                },
                interior: !coarse.is_boundary_vertex(ic, jc),
            })
            .collect();
        Ok(Self { fine, coarse, ratio, patches })
    }

    /// Patches of all coarse vertices, indexed by coarse vertex id.
    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn patch(&self, ic: usize, jc: usize) -> &Patch {
        &self.patches[self.coarse.vertex_id(ic, jc)]
    }

    pub fn interior_patches(&self) -> impl Iterator<Item = &Patch> {
        self.patches.iter().filter(|p| p.interior)
    }
}

/// Overlapping decomposition: every coarse cell dilated by `overlap` fine layers.
#[derive(Debug, Clone)]
pub struct DomainDecomposition {
    pub hierarchy: Hierarchy,
    pub overlap: usize,
    /// Subdomains in row-major coarse-cell order.
    pub subdomains: Vec<CellBox>,
}

impl DomainDecomposition {
    pub fn fine(&self) -> &Grid {
        &self.hierarchy.fine
    }

    pub fn coarse(&self) -> &Grid {
        &self.hierarchy.coarse
    }

    pub fn ratio(&self) -> usize {
        self.hierarchy.ratio
    }

    pub fn num_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn patches(&self) -> &[Patch] {
        self.hierarchy.patches()
    }
}

pub fn build_decomposition(n_fine: usize, ratio: usize, overlap: usize) -> Result<DomainDecomposition> {
    let hierarchy = Hierarchy::new(n_fine, ratio)?;
    let nc = hierarchy.coarse.n();
    // δ < H/2 only matters when neighbouring subdomains exist.
    if nc > 1 && (overlap == 0 || 2 * overlap >= ratio) {
        return Err(Error::Config(format!(
            "overlap δ/h = {overlap} must satisfy 1 <= δ/h < (H/h)/2 = {}",
            ratio as f64 / 2.0
        )));
    }
    let n = n_fine;
    let subdomains = (0..nc)
        .flat_map(|jc| (0..nc).map(move |ic| (ic, jc)))
        .map(|(ic, jc)| CellBox {
            i0: (ic * ratio).saturating_sub(overlap),
            i1: ((ic + 1) * ratio + overlap).min(n),
            j0: (jc * ratio).saturating_sub(overlap),
            j1: ((jc + 1) * ratio + overlap).min(n),
        })
        .collect();
    Ok(DomainDecomposition { hierarchy, overlap, subdomains })
}

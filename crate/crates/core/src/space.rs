//! Subspaces of the Schwarz decomposition: local spaces on the overlapping
//! subdomains, the partition of unity and the coarse space built from it.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use nalgebra_sparse::CsrMatrix;

use crate::assembly::DiscreteProblem;
use crate::bfs::{BilinearForm, DOFS_PER_VERTEX};
use crate::error::{Error, Result};
use crate::field::Jet;
use crate::grid::{CellBox, DomainDecomposition, Grid, Hierarchy, Patch};
use crate::linalg::{csr_from_triplets, csr_mul, csr_mul_transpose, csr_to_dense_principal};

/// Free DOFs of one subdomain. Only vertices whose incident elements all lie
/// in the subdomain are used, so extension by zero stays `C¹` and leaves the
/// obstacle constraint outside the subdomain untouched.
#[derive(Debug, Clone)]
pub struct LocalSpace {
    pub k: usize,
    /// Sorted free indices.
    pub dof_ids: Vec<usize>,
    /// `(local index, row of J)` for each bound-constrained value DOF.
    pub constrained: Vec<(usize, usize)>,
}

impl LocalSpace {
    pub fn dim(&self) -> usize {
        self.dof_ids.len()
    }

    /// `R_k v`.
    pub fn restrict(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.dof_ids.iter().map(|&d| v[d]))
    }

    /// `v += scale · R_kᵀ w`.
    pub fn add_extended(&self, v: &mut DVector<f64>, w: &DVector<f64>, scale: f64) {
        for (&d, &x) in self.dof_ids.iter().zip(w.iter()) {
            v[d] += scale * x;
        }
    }

    /// `R_kᵀ w` as a free-DOF vector.
    pub fn extend(&self, w: &DVector<f64>, num_free: usize) -> DVector<f64> {
        let mut v = DVector::zeros(num_free);
        self.add_extended(&mut v, w, 1.0);
        v
    }
}

fn local_space(k: usize, cells: &CellBox, p: &DiscreteProblem) -> LocalSpace {
    let grid = &p.grid;
    let mut dof_ids = Vec::new();
    let mut constrained = Vec::new();
    for (i, j) in cells.inner_vertices(grid.n()) {
        let vid = grid.vertex_id(i, j);
        for kind in 0..DOFS_PER_VERTEX {
            if let Some(f) = p.free_index(DOFS_PER_VERTEX * vid + kind) {
                if kind == 0 {
                    let row = p.vertex_row(vid).expect("free value DOFs carry a bound");
                    constrained.push((dof_ids.len(), row));
                }
                dof_ids.push(f);
            }
        }
    }
    // vertex-major row-by-row order matches free numbering, so this is sorted
    debug_assert!(dof_ids.windows(2).all(|w| w[0] < w[1]));
    LocalSpace { k, dof_ids, constrained }
}

pub fn build_local_spaces(dd: &DomainDecomposition, p: &DiscreteProblem) -> Result<Vec<LocalSpace>> {
    if dd.fine() != &p.grid {
        return Err(Error::Config("decomposition and problem live on different grids".into()));
    }
    let spaces: Vec<_> = dd.subdomains.iter().enumerate().map(|(k, b)| local_space(k, b, p)).collect();
    let mut covered = vec![false; p.num_free()];
    for s in &spaces {
        for &d in &s.dof_ids {
            covered[d] = true;
        }
    }
    if let Some(d) = covered.iter().position(|&c| !c) {
        return Err(Error::Uncovered(d));
    }
    Ok(spaces)
}

/// Number of colour classes needed so that same-coloured subspaces share no
/// DOF; the coarse space overlaps everything and adds one class.
pub fn coloring_number(dd: &DomainDecomposition, two_level: bool) -> usize {
    let colors = color_subdomains(dd);
    colors.iter().copied().max().map_or(0, |c| c + 1) + usize::from(two_level)
}

/// Greedy colouring in row-major subdomain order of the graph whose edges
/// join subdomains with a common fine vertex.
pub fn color_subdomains(dd: &DomainDecomposition) -> Vec<usize> {
    let boxes = &dd.subdomains;
    let touches = |a: &CellBox, b: &CellBox| a.i0 <= b.i1 && b.i0 <= a.i1 && a.j0 <= b.j1 && b.j0 <= a.j1;
    let mut colors: Vec<usize> = Vec::with_capacity(boxes.len());
    for (k, bk) in boxes.iter().enumerate() {
        let used: Vec<usize> = (0..k).filter(|&l| touches(bk, &boxes[l])).map(|l| colors[l]).collect();
        let c = (0..).find(|c| !used.contains(c)).unwrap();
        colors.push(c);
    }
    colors
}

/// 1D value basis of the cubic Hermite element centred at 0 with unit
/// support radius: `(1−|s|)²(1+2|s|)`. Returns value and two derivatives.
#[inline]
fn hat(s: f64) -> [f64; 3] {
    let a = s.abs();
    if a >= 1.0 {
        return [0.0; 3];
    }
    [(1.0 - a) * (1.0 - a) * (1.0 + 2.0 * a), 6.0 * s * (a - 1.0), 12.0 * a - 6.0]
}

/// Partition of unity from the coarse BFS value basis functions.
#[derive(Debug, Clone, Copy)]
pub struct PartitionOfUnity {
    coarse: Grid,
}

/// Value, gradient and Hessian `[v, v₁, v₂, v₁₁, v₁₂, v₂₂]`.
pub type Hessian = [f64; 6];

pub fn build_pou(coarse: &Grid) -> PartitionOfUnity {
    PartitionOfUnity { coarse: *coarse }
}

impl PartitionOfUnity {
    pub fn coarse(&self) -> &Grid {
        &self.coarse
    }

    /// `φ_i` and its derivatives up to second order at `p`.
    pub fn eval(&self, (ic, jc): (usize, usize), p: [f64; 2]) -> Hessian {
        let hh = self.coarse.h();
        let [cx, cy] = self.coarse.vertex_coords(ic, jc);
        let gx = hat((p[0] - cx) / hh);
        let gy = hat((p[1] - cy) / hh);
        [
            gx[0] * gy[0],
            gx[1] * gy[0] / hh,
            gx[0] * gy[1] / hh,
            gx[2] * gy[0] / (hh * hh),
            gx[1] * gy[1] / (hh * hh),
            gx[0] * gy[2] / (hh * hh),
        ]
    }

    pub fn value(&self, vertex: (usize, usize), p: [f64; 2]) -> f64 {
        self.eval(vertex, p)[0]
    }

    /// `[φ, ∂₁φ, ∂₂φ, ∂₁∂₂φ]`.
    pub fn jet(&self, vertex: (usize, usize), p: [f64; 2]) -> Jet {
        let e = self.eval(vertex, p);
        [e[0], e[1], e[2], e[4]]
    }
}

/// Linear monomials of a patch, centred at its coarse vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monomial {
    One,
    X,
    Y,
}

impl Monomial {
    pub const ALL: [Monomial; 3] = [Monomial::One, Monomial::X, Monomial::Y];

    /// `[ℓ, ∂₁ℓ, ∂₂ℓ]` at `p` relative to `center`.
    fn eval(self, center: [f64; 2], p: [f64; 2]) -> [f64; 3] {
        match self {
            Monomial::One => [1.0, 0.0, 0.0],
            Monomial::X => [p[0] - center[0], 1.0, 0.0],
            Monomial::Y => [p[1] - center[1], 0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CoarseDof {
    pub patch: Patch,
    pub monomial: Monomial,
}

/// Jet of `φ · ℓ` from the jet of `φ` and `ℓ`.
fn product_jet(phi: &Hessian, l: [f64; 3]) -> Jet {
    [
        phi[0] * l[0],
        phi[1] * l[0] + phi[0] * l[1],
        phi[2] * l[0] + phi[0] * l[2],
        phi[4] * l[0] + phi[1] * l[2] + phi[2] * l[1],
    ]
}

/// Coarse space spanned by `φ_i ℓ` for interior coarse vertices `i` and
/// `ℓ ∈ {1, x₁ − x₁ⁱ, x₂ − x₂ⁱ}`. For the simply supported form the edge
/// functions that satisfy the boundary condition follow the interior ones.
pub struct CoarseSpace {
    pub dofs: Vec<CoarseDof>,
    pub pou: PartitionOfUnity,
    /// Prolongation `R₀ᵀ`: free fine DOFs × coarse DOFs (nodal interpolation).
    pub prolongation: CsrMatrix<f64>,
    /// `J R₀ᵀ`: fine vertex values of coarse functions, one row per bound.
    pub value_map: CsrMatrix<f64>,
    /// `A₀ = R₀ A R₀ᵀ`.
    pub matrix: DMatrix<f64>,
    pub factor: Cholesky<f64, Dyn>,
}

impl std::fmt::Debug for CoarseSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoarseSpace").field("dim", &self.dim()).finish_non_exhaustive()
    }
}

pub fn build_coarse_space(dd: &DomainDecomposition, p: &DiscreteProblem) -> Result<CoarseSpace> {
    build_coarse_space_on(&dd.hierarchy, p)
}

pub fn build_coarse_space_on(hierarchy: &Hierarchy, p: &DiscreteProblem) -> Result<CoarseSpace> {
    if hierarchy.fine != p.grid {
        return Err(Error::Config("coarse hierarchy and problem live on different grids".into()));
    }
    let pou = build_pou(&hierarchy.coarse);
    let mut dofs: Vec<CoarseDof> = hierarchy
        .interior_patches()
        .flat_map(|patch| Monomial::ALL.into_iter().map(move |monomial| CoarseDof { patch: *patch, monomial }))
        .collect();
    if matches!(p.form, BilinearForm::Control { .. }) && !dofs.is_empty() {
        dofs.extend(edge_dofs(hierarchy));
    }
    if dofs.is_empty() {
        return Err(Error::Config("the coarse grid has no interior vertices; use one level".into()));
    }
    let grid = &p.grid;
    let mut triplets = Vec::new();
    let mut value_triplets = Vec::new();
    for (col, dof) in dofs.iter().enumerate() {
        for (i, j) in dof.patch.cells.closed_vertices() {
            let x = grid.vertex_coords(i, j);
            let jet = product_jet(&pou.eval(dof.patch.vertex, x), dof.monomial.eval(dof.patch.center, x));
            let vid = grid.vertex_id(i, j);
            for (kind, &val) in jet.iter().enumerate() {
                if val == 0.0 {
                    continue;
                }
                if let Some(f) = p.free_index(DOFS_PER_VERTEX * vid + kind) {
                    triplets.push((f, col, val));
                    if kind == 0 {
                        value_triplets.push((p.vertex_row(vid).unwrap(), col, val));
                    }
                }
            }
        }
    }
    let prolongation = csr_from_triplets(p.num_free(), dofs.len(), &triplets);
    let value_map = csr_from_triplets(p.num_bounds(), dofs.len(), &value_triplets);
    let ap = p.sparse_matrix() * &prolongation;
    let a0 = prolongation.transpose() * &ap;
    let all: Vec<usize> = (0..dofs.len()).collect();
    let mut matrix = csr_to_dense_principal(&a0, &all);
    // symmetrize round-off
    matrix = (&matrix + matrix.transpose()) * 0.5;
    let factor = Cholesky::new(matrix.clone()).ok_or(Error::NotPositiveDefinite)?;
    Ok(CoarseSpace { dofs, pou, prolongation, value_map, matrix, factor })
}

/// Functions `φ_i ℓ` of edge coarse vertices (corners excluded) that vanish on
/// `∂Ω`: `ℓ` is the distance to the edge. They lie in `H² ∩ H₀¹` but not in
/// `H₀²`, and without them the coarse space cannot represent the boundary
/// slope of a simply supported solution.
fn edge_dofs(hierarchy: &Hierarchy) -> impl Iterator<Item = CoarseDof> + '_ {
    let nc = hierarchy.coarse.n();
    hierarchy.patches().iter().filter_map(move |patch| {
        let (i, j) = patch.vertex;
        let on_vertical = (i == 0 || i == nc) && j > 0 && j < nc;
        let on_horizontal = (j == 0 || j == nc) && i > 0 && i < nc;
        let monomial = match (on_vertical, on_horizontal) {
            (true, false) => Monomial::X,
            (false, true) => Monomial::Y,
            _ => return None,
        };
        Some(CoarseDof { patch: *patch, monomial })
    })
}

impl CoarseSpace {
    pub fn dim(&self) -> usize {
        self.dofs.len()
    }

    /// `R₀ᵀ w` (free fine DOFs).
    pub fn prolongate(&self, w: &DVector<f64>) -> DVector<f64> {
        csr_mul(&self.prolongation, w)
    }

    /// `R₀ v`.
    pub fn restrict(&self, v: &DVector<f64>) -> DVector<f64> {
        csr_mul_transpose(&self.prolongation, v)
    }

    /// Value, gradient and Hessian of the coarse function `Σ w_d φ_i ℓ` itself
    /// (not its fine interpolant) at `p`.
    pub fn eval_exact(&self, w: &DVector<f64>, p: [f64; 2]) -> Hessian {
        let mut out = [0.0; 6];
        for (dof, &c) in self.dofs.iter().zip(w.iter()) {
            if c == 0.0 {
                continue;
            }
            let phi = self.pou.eval(dof.patch.vertex, p);
            if phi.iter().all(|&v| v == 0.0) {
                continue;
            }
            let [l, lx, ly] = dof.monomial.eval(dof.patch.center, p);
            out[0] += c * phi[0] * l;
            out[1] += c * (phi[1] * l + phi[0] * lx);
            out[2] += c * (phi[2] * l + phi[0] * ly);
            out[3] += c * (phi[3] * l + 2.0 * phi[1] * lx);
            out[4] += c * (phi[4] * l + phi[1] * ly + phi[2] * lx);
            out[5] += c * (phi[5] * l + 2.0 * phi[2] * ly);
        }
        out
    }
}

pub fn extract_values(p: &DiscreteProblem, v: &DVector<f64>) -> Result<DVector<f64>> {
    p.extract_values(v)
}

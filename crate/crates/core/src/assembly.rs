//! Global discrete obstacle problem: stiffness, load, bounds and boundary
//! condition elimination for both model problems.

use std::sync::Arc;

use nalgebra::DVector;
use nalgebra_sparse::CsrMatrix;

use crate::bfs::{element_load, element_matrices, BilinearForm, DofVector, DOFS_PER_VERTEX};
use crate::error::{Error, Result};
use crate::field::{Constant, Paraboloid, ScalarField, SineLoad};
use crate::grid::Grid;
use crate::linalg::{csr_from_triplets, csr_mul, SpdMatrix};

/// Tolerance of the componentwise bound check, relative to `1 + |ψ|`.
pub const FEASIBILITY_TOL: f64 = 1e-12;

#[derive(Clone)]
pub struct ProblemSpec {
    pub form: BilinearForm,
    pub load: Arc<dyn ScalarField>,
    pub obstacle: Arc<dyn ScalarField>,
}

impl ProblemSpec {
    pub fn new(form: BilinearForm, load: Arc<dyn ScalarField>, obstacle: Arc<dyn ScalarField>) -> Self {
        Self { form, load, obstacle }
    }

    /// Clamped plate pushed against a paraboloid: `f = 10³`.
    pub fn plate_obstacle() -> Self {
        Self::new(BilinearForm::Plate, Arc::new(Constant(1e3)), Arc::new(Paraboloid))
    }

    /// Distributed optimal control with `β = 10⁻⁴`, `f = sin(4πx₁x₂) + 1.5`, `ψ = 1`.
    pub fn optimal_control() -> Self {
        Self::new(BilinearForm::Control { beta: 1e-4 }, Arc::new(SineLoad), Arc::new(Constant(1.0)))
    }

    pub fn with_obstacle(mut self, obstacle: Arc<dyn ScalarField>) -> Self {
        self.obstacle = obstacle;
        self
    }

    pub fn with_load(mut self, load: Arc<dyn ScalarField>) -> Self {
        self.load = load;
        self
    }
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec").field("form", &self.form).finish_non_exhaustive()
    }
}

/// Which of the four vertex DOFs are eliminated by the essential boundary
/// conditions.
fn eliminated(form: BilinearForm, grid: &Grid, i: usize, j: usize) -> [bool; 4] {
    let n = grid.n();
    let on_x = i == 0 || i == n; // vertical edge
    let on_y = j == 0 || j == n; // horizontal edge
    match form {
        // v = ∂ν v = 0: value, both slopes and the twist vanish along straight edges
        BilinearForm::Plate if on_x || on_y => [true; 4],
        BilinearForm::Plate => [false; 4],
        // v = 0: value and the tangential slope vanish; the twist stays free
        BilinearForm::Control { .. } => [on_x || on_y, on_y, on_x, false],
    }
}

/// Assembled element-wise sum over all raw DOFs (no boundary conditions).
pub fn assemble_raw_stiffness(form: BilinearForm, grid: &Grid) -> Result<CsrMatrix<f64>> {
    let em = element_matrices(form, grid.h())?;
    let n = grid.n();
    let mut triplets = Vec::with_capacity(grid.num_elements() * 256);
    for ej in 0..n {
        for ei in 0..n {
            let raw = raw_element_dofs(grid, ei, ej);
            for (a, &ra) in raw.iter().enumerate() {
                for (b, &rb) in raw.iter().enumerate() {
                    triplets.push((ra, rb, em.stiffness[(a, b)]));
                }
            }
        }
    }
    let nd = DOFS_PER_VERTEX * grid.num_vertices();
    Ok(csr_from_triplets(nd, nd, &triplets))
}

/// Raw load vector `(f, N_j)` over all DOFs.
pub fn assemble_raw_load(field: &dyn ScalarField, grid: &Grid) -> DVector<f64> {
    let n = grid.n();
    let mut f = DVector::zeros(DOFS_PER_VERTEX * grid.num_vertices());
    for ej in 0..n {
        for ei in 0..n {
            let le = element_load(field, grid, ei, ej);
            for (a, r) in raw_element_dofs(grid, ei, ej).into_iter().enumerate() {
                f[r] += le[a];
            }
        }
    }
    f
}

fn raw_element_dofs(grid: &Grid, ei: usize, ej: usize) -> [usize; 16] {
    let mut out = [0; 16];
    for (c, v) in grid.element_vertices(ei, ej).into_iter().enumerate() {
        for k in 0..DOFS_PER_VERTEX {
            out[4 * c + k] = DOFS_PER_VERTEX * v + k;
        }
    }
    out
}

/// `min ½ vᵀAv − fᵀv` over free DOFs subject to `J v ≤ ψ`.
#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    pub grid: Grid,
    pub form: BilinearForm,
    pub matrix: SpdMatrix,
    pub load: DVector<f64>,
    /// raw DOF → free index
    free_index: Vec<Option<usize>>,
    /// free index → raw DOF
    free_dofs: Vec<usize>,
    /// Row `r` of `J` picks free index `value_dofs[r]`.
    value_dofs: Vec<usize>,
    /// Grid vertex of each row of `J`.
    bound_vertices: Vec<usize>,
    /// `ψ` at each row of `J`.
    pub bounds: DVector<f64>,
    /// grid vertex → row of `J`
    vertex_row: Vec<Option<usize>>,
}

pub fn assemble(spec: &ProblemSpec, grid: &Grid) -> Result<DiscreteProblem> {
    spec.form.validate()?;
    let n = grid.n();
    let nd = DOFS_PER_VERTEX * grid.num_vertices();
    let mut free_index = vec![None; nd];
    let mut free_dofs = Vec::new();
    let mut value_dofs = Vec::new();
    let mut bound_vertices = Vec::new();
    let mut bounds = Vec::new();
    let mut vertex_row = vec![None; grid.num_vertices()];
    for j in 0..=n {
        for i in 0..=n {
            let vid = grid.vertex_id(i, j);
            let elim = eliminated(spec.form, grid, i, j);
            let psi = spec.obstacle.value(grid.vertex_coords(i, j));
            if elim[0] && psi < -FEASIBILITY_TOL {
                return Err(Error::InvalidParameter(format!(
                    "obstacle is negative ({psi}) at boundary vertex ({i}, {j}); the constraint set is empty"
                )));
            }
            for k in 0..DOFS_PER_VERTEX {
                if !elim[k] {
                    let idx = free_dofs.len();
                    free_index[DOFS_PER_VERTEX * vid + k] = Some(idx);
                    free_dofs.push(DOFS_PER_VERTEX * vid + k);
                    if k == 0 {
                        vertex_row[vid] = Some(value_dofs.len());
                        value_dofs.push(idx);
                        bound_vertices.push(vid);
                        bounds.push(psi);
                    }
                }
            }
        }
    }

    let em = element_matrices(spec.form, grid.h())?;
    let nf = free_dofs.len();
    let mut triplets = Vec::with_capacity(grid.num_elements() * 256);
    let mut load = DVector::zeros(nf);
    for ej in 0..n {
        for ei in 0..n {
            let raw = raw_element_dofs(grid, ei, ej);
            let le = element_load(spec.load.as_ref(), grid, ei, ej);
            for (a, &ra) in raw.iter().enumerate() {
                let Some(fa) = free_index[ra] else { continue };
                load[fa] += le[a];
                for (b, &rb) in raw.iter().enumerate() {
                    if let Some(fb) = free_index[rb] {
                        triplets.push((fa, fb, em.stiffness[(a, b)]));
                    }
                }
            }
        }
    }
    let matrix = SpdMatrix::Sparse(csr_from_triplets(nf, nf, &triplets));
    Ok(DiscreteProblem {
        grid: *grid,
        form: spec.form,
        matrix,
        load,
        free_index,
        free_dofs,
        value_dofs,
        bound_vertices,
        bounds: DVector::from_vec(bounds),
        vertex_row,
    })
}

impl DiscreteProblem {
    pub fn num_free(&self) -> usize {
        self.free_dofs.len()
    }

    /// Number of rows of `J`.
    pub fn num_bounds(&self) -> usize {
        self.value_dofs.len()
    }

    pub fn free_mask(&self) -> Vec<bool> {
        self.free_index.iter().map(Option::is_some).collect()
    }

    pub fn free_index(&self, raw: usize) -> Option<usize> {
        self.free_index[raw]
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    /// Free index of the value DOF behind each row of `J`.
    pub fn value_dofs(&self) -> &[usize] {
        &self.value_dofs
    }

    pub fn bound_vertices(&self) -> &[usize] {
        &self.bound_vertices
    }

    pub fn vertex_row(&self, vertex: usize) -> Option<usize> {
        self.vertex_row[vertex]
    }

    pub fn sparse_matrix(&self) -> &CsrMatrix<f64> {
        match &self.matrix {
            SpdMatrix::Sparse(a) => a,
            SpdMatrix::Dense(_) => unreachable!("the global matrix is assembled sparse"),
        }
    }

    fn check_dim(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.num_free() {
            return Err(Error::DimensionMismatch { expected: self.num_free(), got: v.len() });
        }
        Ok(())
    }

    /// `F_h(v) = ½ vᵀAv − fᵀv`.
    pub fn energy(&self, v: &DVector<f64>) -> Result<f64> {
        self.check_dim(v)?;
        Ok(0.5 * v.dot(&self.matrix.mul_vec(v)) - self.load.dot(v))
    }

    /// `f − A v`.
    pub fn residual(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.load - csr_mul(self.sparse_matrix(), v)
    }

    /// `J v`.
    pub fn extract_values(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(v)?;
        Ok(DVector::from_iterator(self.num_bounds(), self.value_dofs.iter().map(|&d| v[d])))
    }

    /// `Jᵀ λ`.
    pub fn extend_values(&self, lambda: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.num_free());
        for (&d, &l) in self.value_dofs.iter().zip(lambda.iter()) {
            out[d] = l;
        }
        out
    }

    /// `J` as an explicit 0/1 matrix.
    pub fn value_extraction_matrix(&self) -> CsrMatrix<f64> {
        let trip: Vec<_> = self.value_dofs.iter().enumerate().map(|(r, &d)| (r, d, 1.0)).collect();
        csr_from_triplets(self.num_bounds(), self.num_free(), &trip)
    }

    /// `ψ − J v`.
    pub fn slack(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.bounds - self.extract_values(v)?)
    }

    /// Largest `(J v − ψ)_+`.
    pub fn max_violation(&self, v: &DVector<f64>) -> Result<f64> {
        Ok(self.slack(v)?.iter().fold(0.0_f64, |m, &s| m.max(-s)))
    }

    pub fn feasible(&self, v: &DVector<f64>) -> bool {
        let Ok(jv) = self.extract_values(v) else { return false };
        jv.iter()
            .zip(self.bounds.iter())
            .all(|(&x, &b)| x <= b + FEASIBILITY_TOL * (1.0 + b.abs()))
    }

    /// Free-DOF vector → full coefficient vector (eliminated DOFs are zero).
    pub fn expand(&self, v: &DVector<f64>) -> Result<DofVector> {
        self.check_dim(v)?;
        let mut out = DofVector::zeros(self.grid);
        let c = out.coeffs_mut();
        for (f, &raw) in self.free_dofs.iter().enumerate() {
            c[raw] = v[f];
        }
        Ok(out)
    }

    /// Full coefficient vector → free DOFs (eliminated entries are dropped).
    pub fn restrict(&self, v: &DofVector) -> DVector<f64> {
        DVector::from_iterator(self.num_free(), self.free_dofs.iter().map(|&raw| v.coeffs()[raw]))
    }
}

pub fn energy(p: &DiscreteProblem, v: &DVector<f64>) -> Result<f64> {
    p.energy(v)
}

pub fn feasible(p: &DiscreteProblem, v: &DVector<f64>) -> bool {
    p.feasible(v)
}

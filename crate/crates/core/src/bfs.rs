//! Bogner–Fox–Schmit bicubic Hermite element.
//!
//! Each vertex carries `[v, ∂₁v, ∂₂v, ∂₁∂₂v]` in physical units. On an element
//! the local DOF index is `4 * c + k` where `c = cx + 2 cy` enumerates the
//! corners `(0,0), (1,0), (0,1), (1,1)` and `k = kx + 2 ky` the derivative
//! kind, so `k = 0, 1, 2, 3` is value, `∂₁`, `∂₂`, `∂₁∂₂`.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::field::{Jet, ScalarField};
use crate::grid::Grid;

pub const DOFS_PER_VERTEX: usize = 4;
pub const ELEMENT_DOFS: usize = 16;

/// 4-point Gauss–Legendre rule on `[0, 1]`.
pub(crate) const GAUSS4: [(f64, f64); 4] = {
    const A: f64 = 0.339_981_043_584_856_26;
    const B: f64 = 0.861_136_311_594_052_6;
    const WA: f64 = 0.652_145_154_862_546_1;
    const WB: f64 = 0.347_854_845_137_453_9;
    [
        (0.5 - 0.5 * B, 0.5 * WB),
        (0.5 - 0.5 * A, 0.5 * WA),
        (0.5 + 0.5 * A, 0.5 * WA),
        (0.5 + 0.5 * B, 0.5 * WB),
    ]
};

/// Cubic Hermite basis on `[0, 1]`: `node` in {0, 1}, `kind` 0 for the value
/// and 1 for the slope, differentiated `order` times.
#[inline]
fn hermite(node: usize, kind: usize, t: f64, order: usize) -> f64 {
    match (node, kind, order) {
        (0, 0, 0) => (1.0 - t) * (1.0 - t) * (1.0 + 2.0 * t),
        (0, 0, 1) => 6.0 * t * (t - 1.0),
        (0, 0, 2) => 12.0 * t - 6.0,
        (0, 1, 0) => t * (1.0 - t) * (1.0 - t),
        (0, 1, 1) => 1.0 - 4.0 * t + 3.0 * t * t,
        (0, 1, 2) => 6.0 * t - 4.0,
        (1, 0, 0) => t * t * (3.0 - 2.0 * t),
        (1, 0, 1) => 6.0 * t * (1.0 - t),
        (1, 0, 2) => 6.0 - 12.0 * t,
        (1, 1, 0) => t * t * (t - 1.0),
        (1, 1, 1) => t * (3.0 * t - 2.0),
        (1, 1, 2) => 6.0 * t - 2.0,
        _ => 0.0,
    }
}

/// Derivatives `∂₁ᵃ∂₂ᵇ` of the 16 reference basis functions on `[0,1]²`.
pub fn shape_functions(xi: [f64; 2], deriv: (usize, usize)) -> Result<[f64; ELEMENT_DOFS]> {
    if deriv.0 > 2 || deriv.1 > 2 {
        return Err(Error::UnsupportedDerivative(deriv.0, deriv.1));
    }
    Ok(scaled_shape_functions(xi, deriv, 1.0))
}

/// Shape functions of an element of size `h`, differentiated in physical
/// coordinates.
#[inline]
pub(crate) fn scaled_shape_functions(xi: [f64; 2], (a, b): (usize, usize), h: f64) -> [f64; ELEMENT_DOFS] {
    let mut out = [0.0; ELEMENT_DOFS];
    for cy in 0..2 {
        for cx in 0..2 {
            for ky in 0..2 {
                for kx in 0..2 {
                    let scale = h.powi((kx + ky) as i32 - (a + b) as i32);
                    out[4 * (cx + 2 * cy) + kx + 2 * ky] =
                        scale * hermite(cx, kx, xi[0], a) * hermite(cy, ky, xi[1], b);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BilinearForm {
    /// `∫ ∇²v : ∇²w` (clamped plate).
    Plate,
    /// `∫ β ∇²v : ∇²w + v w` (optimal control).
    Control { beta: f64 },
}

impl BilinearForm {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BilinearForm::Control { beta } if !(beta > 0.0 && beta.is_finite()) => {
                Err(Error::InvalidParameter(format!("β must be positive, got {beta}")))
            }
            _ => Ok(()),
        }
    }

    pub fn beta(&self) -> f64 {
        match *self {
            BilinearForm::Plate => 1.0,
            BilinearForm::Control { beta } => beta,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BilinearForm::Plate => "plate",
            BilinearForm::Control { .. } => "control",
        }
    }
}

pub type Matrix16 = SMatrix<f64, ELEMENT_DOFS, ELEMENT_DOFS>;
pub type Vector16 = SVector<f64, ELEMENT_DOFS>;

/// Element stiffness for one form plus the load template `∫ N_j` for `f = 1`.
#[derive(Debug, Clone)]
pub struct ElementMatrix {
    pub stiffness: Matrix16,
    pub load: Vector16,
}

pub fn element_matrices(form: BilinearForm, h: f64) -> Result<ElementMatrix> {
    form.validate()?;
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("element size must be positive, got {h}")));
    }
    let beta = form.beta();
    let mut stiffness = Matrix16::zeros();
    let mut load = Vector16::zeros();
    for &(x, wx) in &GAUSS4 {
        for &(y, wy) in &GAUSS4 {
            let w = wx * wy * h * h;
            let n = Vector16::from(scaled_shape_functions([x, y], (0, 0), h));
            let nxx = Vector16::from(scaled_shape_functions([x, y], (2, 0), h));
            let nyy = Vector16::from(scaled_shape_functions([x, y], (0, 2), h));
            let nxy = Vector16::from(scaled_shape_functions([x, y], (1, 1), h));
            stiffness += (nxx * nxx.transpose() + 2.0 * nxy * nxy.transpose() + nyy * nyy.transpose())
                * (beta * w);
            if let BilinearForm::Control { .. } = form {
                stiffness += n * n.transpose() * w;
            }
            load += n * w;
        }
    }
    Ok(ElementMatrix { stiffness, load })
}

/// Element load vector `∫_T f N_j` by 4x4 Gauss quadrature.
pub(crate) fn element_load(field: &dyn ScalarField, grid: &Grid, ei: usize, ej: usize) -> Vector16 {
    let h = grid.h();
    let [x0, y0] = grid.vertex_coords(ei, ej);
    let mut load = Vector16::zeros();
    for &(x, wx) in &GAUSS4 {
        for &(y, wy) in &GAUSS4 {
            let f = field.value([x0 + h * x, y0 + h * y]);
            load += Vector16::from(scaled_shape_functions([x, y], (0, 0), h)) * (f * wx * wy * h * h);
        }
    }
    load
}

/// Coefficients of a piecewise bicubic `C¹` function: 4 per grid vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct DofVector {
    grid: Grid,
    coeffs: Vec<f64>,
}

impl DofVector {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, coeffs: vec![0.0; DOFS_PER_VERTEX * grid.num_vertices()] }
    }

    pub fn from_coeffs(grid: Grid, coeffs: Vec<f64>) -> Result<Self> {
        let expected = DOFS_PER_VERTEX * grid.num_vertices();
        if coeffs.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: coeffs.len() });
        }
        Ok(Self { grid, coeffs })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// `[v, ∂₁v, ∂₂v, ∂₁∂₂v]` stored at vertex `(i, j)`.
    pub fn vertex_jet(&self, i: usize, j: usize) -> Jet {
        let base = DOFS_PER_VERTEX * self.grid.vertex_id(i, j);
        let c = &self.coeffs[base..base + DOFS_PER_VERTEX];
        [c[0], c[1], c[2], c[3]]
    }

    pub(crate) fn element_coeffs(&self, ei: usize, ej: usize) -> Vector16 {
        let mut out = Vector16::zeros();
        for (c, v) in self.grid.element_vertices(ei, ej).into_iter().enumerate() {
            for k in 0..DOFS_PER_VERTEX {
                out[4 * c + k] = self.coeffs[DOFS_PER_VERTEX * v + k];
            }
        }
        out
    }

    /// `∂₁ᵃ∂₂ᵇ v(p)`.
    pub fn evaluate(&self, p: [f64; 2], deriv: (usize, usize)) -> Result<f64> {
        if deriv.0 > 2 || deriv.1 > 2 {
            return Err(Error::UnsupportedDerivative(deriv.0, deriv.1));
        }
        let ((ei, ej), xi) = self.grid.locate(p)?;
        Ok(self.evaluate_in(ei, ej, xi, deriv))
    }

    /// Evaluation at reference point `xi` of element `(ei, ej)`.
    pub(crate) fn evaluate_in(&self, ei: usize, ej: usize, xi: [f64; 2], deriv: (usize, usize)) -> f64 {
        let n = scaled_shape_functions(xi, deriv, self.grid.h());
        let c = self.element_coeffs(ei, ej);
        n.iter().zip(c.iter()).map(|(a, b)| a * b).sum()
    }
}

/// Nodal interpolation into the BFS space.
pub fn interpolate(field: &dyn ScalarField, grid: &Grid) -> DofVector {
    let mut v = DofVector::zeros(*grid);
    let n = grid.n();
    for j in 0..=n {
        for i in 0..=n {
            let base = DOFS_PER_VERTEX * grid.vertex_id(i, j);
            v.coeffs[base..base + DOFS_PER_VERTEX].copy_from_slice(&field.jet(grid.vertex_coords(i, j)));
        }
    }
    v
}

pub fn evaluate(v: &DofVector, p: [f64; 2], deriv: (usize, usize)) -> Result<f64> {
    v.evaluate(p, deriv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Constant, Monomial, SineLoad};

    #[test]
    fn nodal_duality_at_corners() {
        for (c, xi) in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]].into_iter().enumerate() {
            let n = shape_functions(xi, (0, 0)).unwrap();
            for (l, &val) in n.iter().enumerate() {
                let expected = if l == 4 * c { 1.0 } else { 0.0 };
                assert!((val - expected).abs() < 1e-15, "corner {c} dof {l}");
            }
            // derivative DOFs are dual as well
            for (k, d) in [(1, (1, 0)), (2, (0, 1)), (3, (1, 1))] {
                let n = shape_functions(xi, d).unwrap();
                for (l, &val) in n.iter().enumerate() {
                    let expected = if l == 4 * c + k { 1.0 } else { 0.0 };
                    assert!((val - expected).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn reproduces_linear_function() {
        // f = ξ₁: value DOFs carry the corner x-coordinate, ∂₁ DOFs carry 1
        let corner_x = [0.0, 1.0, 0.0, 1.0];
        for xi in [[0.3, 0.9], [0.71, 0.05], [0.5, 0.5]] {
            let n = shape_functions(xi, (0, 0)).unwrap();
            let f: f64 = (0..4).map(|c| n[4 * c] * corner_x[c] + n[4 * c + 1]).sum();
            assert!((f - xi[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_third_derivatives() {
        assert!(matches!(shape_functions([0.5, 0.5], (3, 0)), Err(Error::UnsupportedDerivative(3, 0))));
    }

    #[test]
    fn element_matrix_symmetry_and_definiteness() {
        let plate = element_matrices(BilinearForm::Plate, 0.25).unwrap();
        assert!((plate.stiffness - plate.stiffness.transpose()).abs().max() < 1e-10);
        let eig = plate.stiffness.symmetric_eigenvalues();
        // kernel: the 3 linear functions
        assert_eq!(eig.iter().filter(|&&e| e.abs() < 1e-8 * eig.max()).count(), 3);
        assert!(eig.min() > -1e-8 * eig.max());

        let control = element_matrices(BilinearForm::Control { beta: 1e-4 }, 0.25).unwrap();
        assert!(control.stiffness.symmetric_eigenvalues().min() > 0.0);
        let total: f64 = (0..4).map(|c| control.load[4 * c]).sum();
        assert!((total - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn invalid_parameters() {
        assert!(element_matrices(BilinearForm::Control { beta: 0.0 }, 0.1).is_err());
        assert!(element_matrices(BilinearForm::Plate, 0.0).is_err());
    }

    #[test]
    fn interpolation_reproduces_quadratics() {
        let g = Grid::new(7).unwrap();
        let v = interpolate(&Monomial { a: 2, b: 0 }, &g);
        assert!((v.evaluate([0.3, 0.7], (0, 0)).unwrap() - 0.09).abs() < 1e-14);
        assert!((v.evaluate([0.3, 0.7], (1, 0)).unwrap() - 0.6).abs() < 1e-13);
        let w = interpolate(&Monomial { a: 1, b: 1 }, &g);
        assert!((w.evaluate([0.25, 0.5], (1, 1)).unwrap() - 1.0).abs() < 1e-12);
        let z = interpolate(&Constant(0.0), &g);
        assert!(z.coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn interpolation_is_nodal() {
        let g = Grid::new(16).unwrap();
        let v = interpolate(&SineLoad, &g);
        for j in 0..=16 {
            for i in 0..=16 {
                let p = g.vertex_coords(i, j);
                assert!((v.evaluate(p, (0, 0)).unwrap() - SineLoad.value(p)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn evaluate_outside_domain() {
        let g = Grid::new(4).unwrap();
        let v = DofVector::zeros(g);
        assert!(matches!(v.evaluate([-0.1, 0.5], (0, 0)), Err(Error::OutOfDomain { .. })));
    }
}

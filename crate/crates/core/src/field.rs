//! Smooth scalar fields used as loads and obstacles.

use std::f64::consts::PI;

/// Value and the derivatives carried by a BFS vertex: `[v, ∂₁v, ∂₂v, ∂₁∂₂v]`.
pub type Jet = [f64; 4];

pub trait ScalarField: Send + Sync {
    fn jet(&self, p: [f64; 2]) -> Jet;

    fn value(&self, p: [f64; 2]) -> f64 {
        self.jet(p)[0]
    }
}

impl<F> ScalarField for F
where
    F: Fn([f64; 2]) -> Jet + Send + Sync,
{
    fn jet(&self, p: [f64; 2]) -> Jet {
        self(p)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);

impl ScalarField for Constant {
    fn jet(&self, _: [f64; 2]) -> Jet {
        [self.0, 0.0, 0.0, 0.0]
    }
}

/// `x₁^a x₂^b`.
#[derive(Debug, Clone, Copy)]
pub struct Monomial {
    pub a: i32,
    pub b: i32,
}

impl ScalarField for Monomial {
    fn jet(&self, [x, y]: [f64; 2]) -> Jet {
        let pow = |t: f64, k: i32| if k < 0 { 0.0 } else { t.powi(k) };
        let (a, b) = (self.a, self.b);
        let (fa, fb) = (a as f64, b as f64);
        [
            pow(x, a) * pow(y, b),
            fa * pow(x, a - 1) * pow(y, b),
            fb * pow(x, a) * pow(y, b - 1),
            fa * fb * pow(x, a - 1) * pow(y, b - 1),
        ]
    }
}

/// Obstacle of the clamped plate experiment: `½ − (x₁−½)² − (x₂−½)²`.
#[derive(Debug, Clone, Copy)]
pub struct Paraboloid;

impl ScalarField for Paraboloid {
    fn jet(&self, [x, y]: [f64; 2]) -> Jet {
        let (dx, dy) = (x - 0.5, y - 0.5);
        [0.5 - dx * dx - dy * dy, -2.0 * dx, -2.0 * dy, 0.0]
    }
}

/// Load of the optimal control experiment: `sin(4π x₁ x₂) + 1.5`.
#[derive(Debug, Clone, Copy)]
pub struct SineLoad;

impl ScalarField for SineLoad {
    fn jet(&self, [x, y]: [f64; 2]) -> Jet {
        let w = 4.0 * PI;
        let (s, c) = (w * x * y).sin_cos();
        [s + 1.5, w * y * c, w * x * c, w * c - w * w * x * y * s]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: &dyn ScalarField, p: [f64; 2]) {
        let e = 1e-5;
        let d1 = (f.value([p[0] + e, p[1]]) - f.value([p[0] - e, p[1]])) / (2.0 * e);
        let d2 = (f.value([p[0], p[1] + e]) - f.value([p[0], p[1] - e])) / (2.0 * e);
        let d12 = (f.jet([p[0], p[1] + e])[1] - f.jet([p[0], p[1] - e])[1]) / (2.0 * e);
        let j = f.jet(p);
        assert!((j[1] - d1).abs() < 1e-6 * (1.0 + d1.abs()));
        assert!((j[2] - d2).abs() < 1e-6 * (1.0 + d2.abs()));
        assert!((j[3] - d12).abs() < 1e-5 * (1.0 + d12.abs()));
    }

    #[test]
    fn jets_match_finite_differences() {
        for p in [[0.3, 0.7], [0.81, 0.12], [0.5, 0.5]] {
            fd_check(&Paraboloid, p);
            fd_check(&SineLoad, p);
            fd_check(&Monomial { a: 3, b: 2 }, p);
            fd_check(&Monomial { a: 0, b: 1 }, p);
        }
    }
}

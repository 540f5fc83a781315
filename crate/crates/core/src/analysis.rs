//! Executable versions of the coarse-space analysis: the minimum angle of
//! lattice triangles, α-biasedness of grid functions and the sign-preserving
//! patch interpolation `J_i` with its global assembly `J_H`.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::bfs::{DofVector, GAUSS4};
use crate::error::{Error, Result};
use crate::grid::{Hierarchy, Patch};
use crate::space::{build_pou, PartitionOfUnity};

pub const MAX_ANGLE_GRID: usize = 16;

/// Smallest sine of a lattice-point triangle angle on `{0..m}²`, with one
/// triple `(p¹, p², p³)` attaining it (angle at `p²`).
pub fn min_sine_angle_triple(m: usize) -> Result<(f64, [[i64; 2]; 3])> {
    if m == 0 || m > MAX_ANGLE_GRID {
        return Err(Error::InvalidSize(m));
    }
    let pts: Vec<[i64; 2]> = (0..=m as i64).flat_map(|y| (0..=m as i64).map(move |x| [x, y])).collect();
    let mut best = (f64::INFINITY, [[0; 2]; 3]);
    for &b in &pts {
        for (ia, &a) in pts.iter().enumerate() {
            let u = [a[0] - b[0], a[1] - b[1]];
            if u == [0, 0] {
                continue;
            }
            let uu = (u[0] * u[0] + u[1] * u[1]) as f64;
            for &c in &pts[ia + 1..] {
                let w = [c[0] - b[0], c[1] - b[1]];
                let det = u[0] * w[1] - u[1] * w[0];
                if det == 0 {
                    continue;
                }
                let ww = (w[0] * w[0] + w[1] * w[1]) as f64;
                let s = det.unsigned_abs() as f64 / (uu * ww).sqrt();
                if s < best.0 {
                    best = (s, [a, b, c]);
                }
            }
        }
    }
    Ok(best)
}

pub fn min_sine_angle(m: usize) -> Result<f64> {
    Ok(min_sine_angle_triple(m)?.0)
}

/// `α(H, h)` for `H/h = ratio`. A vertex patch spans `2·ratio` fine cells per
/// side, so the angle is taken over that lattice.
pub fn alpha_for_ratio(ratio: usize) -> Result<f64> {
    if 2 * ratio > MAX_ANGLE_GRID {
        return Err(Error::InvalidSize(ratio));
    }
    Ok(min_sine_angle(2 * ratio)?.asin())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasReport {
    pub biased: bool,
    /// Angular spread of the sampled gradient directions modulo π.
    pub spread: f64,
    pub samples: usize,
}

/// Fine vertices of the closed patch and element centres, with the
/// corresponding value and gradient of `v − ℓ` for a linear `ℓ`.
struct Samples {
    points: Vec<[f64; 2]>,
    values: Vec<f64>,
    gradients: Vec<[f64; 2]>,
}

/// `ℓ(x) = c₀ + c₁ (x₁ − x₁ⁱ) + c₂ (x₂ − x₂ⁱ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Linear {
    center: [f64; 2],
    c: [f64; 3],
}

impl Linear {
    fn zero(center: [f64; 2]) -> Self {
        Linear { center, c: [0.0; 3] }
    }

    fn at(&self, p: [f64; 2]) -> f64 {
        self.c[0] + self.c[1] * (p[0] - self.center[0]) + self.c[2] * (p[1] - self.center[1])
    }
}

fn sample(v: &DofVector, patch: &Patch, minus: &Linear) -> Samples {
    let grid = v.grid();
    let mut s = Samples { points: Vec::new(), values: Vec::new(), gradients: Vec::new() };
    let mut push = |p: [f64; 2], val: f64, g: [f64; 2]| {
        s.points.push(p);
        s.values.push(val - minus.at(p));
        s.gradients.push([g[0] - minus.c[1], g[1] - minus.c[2]]);
    };
    for (i, j) in patch.cells.closed_vertices() {
        let jet = v.vertex_jet(i, j);
        push(grid.vertex_coords(i, j), jet[0], [jet[1], jet[2]]);
    }
    for (ei, ej) in patch.cells.cells() {
        let c = [0.5, 0.5];
        let p = [grid.coord(ei) + 0.5 * grid.h(), grid.coord(ej) + 0.5 * grid.h()];
        push(p, v.evaluate_in(ei, ej, c, (0, 0)), [v.evaluate_in(ei, ej, c, (1, 0)), v.evaluate_in(ei, ej, c, (0, 1))]);
    }
    s
}

/// Spread of gradient directions modulo π; `None` if a gradient vanishes
/// relative to `scale`.
fn direction_spread(gradients: &[[f64; 2]], scale: f64) -> Option<f64> {
    let mut angles = Vec::with_capacity(gradients.len());
    for g in gradients {
        let norm = g[0].hypot(g[1]);
        if norm <= 1e-12 * scale || norm == 0.0 {
            return None;
        }
        angles.push(g[1].atan2(g[0]).rem_euclid(PI));
    }
    angles.sort_by(f64::total_cmp);
    let mut largest_gap = angles[0] + PI - angles[angles.len() - 1];
    for w in angles.windows(2) {
        largest_gap = largest_gap.max(w[1] - w[0]);
    }
    Some((PI - largest_gap).max(0.0))
}

fn bias(samples: &Samples, alpha: f64, scale: f64) -> BiasReport {
    match direction_spread(&samples.gradients, scale) {
        Some(spread) => BiasReport { biased: spread <= alpha / 2.0, spread, samples: samples.points.len() },
        None => BiasReport { biased: false, spread: PI, samples: samples.points.len() },
    }
}

fn gradient_scale(samples: &Samples) -> f64 {
    samples.gradients.iter().map(|g| g[0].hypot(g[1])).fold(0.0, f64::max)
}

/// Sampled test of α-biasedness on the closed patch: the lines orthogonal to
/// the gradients must all lie within `α/2` of each other.
pub fn alpha_biased(v: &DofVector, patch: &Patch, alpha: f64) -> BiasReport {
    let s = sample(v, patch, &Linear::zero(patch.center));
    bias(&s, alpha, gradient_scale(&s))
}

/// How one step of the patch interpolation was resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    /// `v − ℓ` was not biased; for the first stage this selects the constant case.
    NotBiased { stage: usize, spread: f64 },
    /// The sampled test said biased but the sign separation by the line `L`
    /// failed at `vertex`, which rules biasedness out.
    SeparationFailed { stage: usize, vertex: (usize, usize) },
    Constant { value: f64 },
    Linear { stage: usize, anchor: (usize, usize), touch: (usize, usize) },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchInterpolant {
    pub vertex: (usize, usize),
    pub center: [f64; 2],
    /// `(c₀, c₁, c₂)` of `c₀ + c₁ (x₁ − x₁ⁱ) + c₂ (x₂ − x₂ⁱ)`.
    pub coeffs: [f64; 3],
    pub trace: Vec<TraceEvent>,
}

impl PatchInterpolant {
    pub fn value(&self, p: [f64; 2]) -> f64 {
        Linear { center: self.center, c: self.coeffs }.at(p)
    }

    /// Number of linear stages that fired (0 for the constant case).
    pub fn stages(&self) -> usize {
        self.trace.iter().filter(|e| matches!(e, TraceEvent::Linear { .. })).count()
    }
}

struct Stage {
    slope: [f64; 2],
    anchor: [f64; 2],
    anchor_ij: (usize, usize),
    touch: (usize, usize),
}

enum StageOutcome {
    Built(Stage),
    NotBiased(f64),
    SeparationFailed((usize, usize)),
}

/// One application of the linear construction to `r = v − ℓ`.
fn linear_stage(v: &DofVector, patch: &Patch, current: &Linear, alpha: f64, grad_scale: f64, value_scale: f64) -> Result<StageOutcome> {
    let grid = v.grid();
    let s = sample(v, patch, current);
    let report = bias(&s, alpha, grad_scale);
    if !report.biased {
        return Ok(StageOutcome::NotBiased(report.spread));
    }
    let snap = 1e-13 * value_scale;
    let vertices: Vec<(usize, usize)> = patch.cells.closed_vertices().collect();
    let r: Vec<f64> = (0..vertices.len()).map(|k| if s.values[k].abs() <= snap { 0.0 } else { s.values[k] }).collect();
    let k0 = (0..r.len()).min_by(|&a, &b| r[a].abs().total_cmp(&r[b].abs())).unwrap();
    let (i0, j0) = vertices[k0];
    let g0 = s.gradients[k0];
    let gnorm = g0[0].hypot(g0[1]);
    // tangent of the level line through p⁰
    let t = [-g0[1] / gnorm, g0[0] / gnorm];
    let half = (alpha / 2.0).sin();
    let offset = |k: usize| [vertices[k].0 as i64 - i0 as i64, vertices[k].1 as i64 - j0 as i64];
    let cone: Vec<[i64; 2]> = (0..vertices.len())
        .filter(|&k| k != k0)
        .map(offset)
        .filter(|d| {
            let (dx, dy) = (d[0] as f64, d[1] as f64);
            (t[0] * dy - t[1] * dx).abs() < half * dx.hypot(dy)
        })
        .collect();
    let on_line: Box<dyn Fn([i64; 2]) -> bool> = match cone.first() {
        Some(&d0) => {
            if let Some(bad) = cone.iter().find(|d| d0[0] * d[1] - d0[1] * d[0] != 0) {
                let (i, j) = ((i0 as i64 + bad[0]) as usize, (j0 as i64 + bad[1]) as usize);
                return Err(Error::Construction { i, j, reason: "noncollinear vertices inside the cone".into() });
            }
            Box::new(move |d: [i64; 2]| d0[0] * d[1] - d0[1] * d[0] == 0)
        }
        None => Box::new(|d: [i64; 2]| d == [0, 0]),
    };
    let mut e = match cone.first() {
        Some(d0) => {
            let (dx, dy) = (d0[0] as f64, d0[1] as f64);
            let len = dx.hypot(dy);
            [-dy / len, dx / len]
        }
        None => [g0[0] / gnorm, g0[1] / gnorm],
    };
    if g0[0] * e[0] + g0[1] * e[1] < 0.0 {
        e = [-e[0], -e[1]];
    }
    let h = grid.h();
    let mut best: Option<(f64, usize)> = None;
    for k in 0..vertices.len() {
        let d = offset(k);
        if on_line(d) {
            continue;
        }
        let dist = h * (d[0] as f64 * e[0] + d[1] as f64 * e[1]);
        let separated = (r[k] > 0.0 && dist > 0.0) || (r[k] < 0.0 && dist < 0.0) || r[k] == 0.0;
        if !separated {
            return Ok(StageOutcome::SeparationFailed(vertices[k]));
        }
        let ratio = r[k] / dist;
        if best.is_none_or(|(b, _)| ratio < b) {
            best = Some((ratio, k));
        }
    }
    let (slope, k1) = best.expect("a patch has vertices off any line");
    Ok(StageOutcome::Built(Stage {
        slope: [slope * e[0], slope * e[1]],
        anchor: grid.vertex_coords(i0, j0),
        anchor_ij: (i0, j0),
        touch: vertices[k1],
    }))
}

fn add_stage(l: &mut Linear, st: &Stage) {
    // ℓ_new(x) = slope · (x − p⁰)
    l.c[0] += st.slope[0] * (l.center[0] - st.anchor[0]) + st.slope[1] * (l.center[1] - st.anchor[1]);
    l.c[1] += st.slope[0];
    l.c[2] += st.slope[1];
}

fn value_scale(v: &DofVector, patch: &Patch) -> f64 {
    patch.cells.closed_vertices().map(|(i, j)| v.vertex_jet(i, j)[0].abs()).fold(0.0, f64::max)
}

/// A single linear function `ℓ` that touches `v` at some patch vertex and
/// is sandwiched between 0 and `v` at all of them. Requires `v` to be
/// α-biased on the patch.
pub fn construct_linear(v: &DofVector, patch: &Patch, alpha: f64) -> Result<PatchInterpolant> {
    check_alpha(alpha)?;
    let zero = Linear::zero(patch.center);
    let base = sample(v, patch, &zero);
    let (i, j) = patch.cells.closed_vertices().next().unwrap();
    match linear_stage(v, patch, &zero, alpha, gradient_scale(&base), value_scale(v, patch))? {
        StageOutcome::Built(st) => {
            let mut l = zero;
            add_stage(&mut l, &st);
            let out = PatchInterpolant {
                vertex: patch.vertex,
                center: patch.center,
                coeffs: l.c,
                trace: vec![TraceEvent::Linear { stage: 1, anchor: st.anchor_ij, touch: st.touch }],
            };
            verify_sandwich(v, patch, &out)?;
            Ok(out)
        }
        StageOutcome::NotBiased(spread) => {
            Err(Error::Construction { i, j, reason: format!("not α-biased (spread {spread:.3e})") })
        }
        StageOutcome::SeparationFailed((i, j)) => {
            Err(Error::Construction { i, j, reason: "sign separation by the line L fails".into() })
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < PI / 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("α = {alpha} must lie in (0, π/2)")))
    }
}

/// Sign-preserving linear interpolation on a patch: up to three linear
/// stages while the residual stays α-biased, otherwise the constant closest
/// to zero. The sandwich `0 ≤ J_i v ≤ v` (or `v ≤ J_i v ≤ 0`) is verified at
/// every fine vertex of the closed patch.
pub fn construct_ji(v: &DofVector, patch: &Patch, alpha: f64) -> Result<PatchInterpolant> {
    check_alpha(alpha)?;
    let mut l = Linear::zero(patch.center);
    let base = sample(v, patch, &l);
    let grad_scale = gradient_scale(&base);
    let vscale = value_scale(v, patch);
    let mut trace = Vec::new();
    for stage in 1..=3 {
        match linear_stage(v, patch, &l, alpha, grad_scale, vscale)? {
            StageOutcome::Built(st) => {
                add_stage(&mut l, &st);
                trace.push(TraceEvent::Linear { stage, anchor: st.anchor_ij, touch: st.touch });
                continue;
            }
            StageOutcome::NotBiased(spread) => trace.push(TraceEvent::NotBiased { stage, spread }),
            StageOutcome::SeparationFailed(vertex) => trace.push(TraceEvent::SeparationFailed { stage, vertex }),
        }
        if stage == 1 {
            let value = constant_case(&base.values, 1e-13 * vscale);
            l.c[0] = value;
            trace.push(TraceEvent::Constant { value });
        }
        break;
    }
    let out = PatchInterpolant { vertex: patch.vertex, center: patch.center, coeffs: l.c, trace };
    verify_sandwich(v, patch, &out)?;
    Ok(out)
}

/// `v(q)` for `q` minimizing `|v|` over the samples. Samples of both signs
/// (or a zero) imply a zero of the continuous `v` on the connected patch.
fn constant_case(values: &[f64], snap: f64) -> f64 {
    let has_pos = values.iter().any(|&x| x > snap);
    let has_neg = values.iter().any(|&x| x < -snap);
    let has_zero = values.iter().any(|&x| x.abs() <= snap);
    if has_zero || (has_pos && has_neg) {
        return 0.0;
    }
    values.iter().copied().min_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0)
}

fn verify_sandwich(v: &DofVector, patch: &Patch, ji: &PatchInterpolant) -> Result<()> {
    let grid = v.grid();
    let scale = value_scale(v, patch);
    let tol = 1e-10 * scale;
    for (i, j) in patch.cells.closed_vertices() {
        let vv = v.vertex_jet(i, j)[0];
        let lv = ji.value(grid.vertex_coords(i, j));
        let ok = if vv.abs() <= 1e-13 * scale {
            lv.abs() <= tol
        } else if vv > 0.0 {
            lv >= -tol && lv <= vv + tol
        } else {
            lv <= tol && lv >= vv - tol
        };
        if !ok {
            return Err(Error::Construction {
                i,
                j,
                reason: format!("sign sandwich violated: v = {vv:e}, J_i v = {lv:e}"),
            });
        }
    }
    Ok(())
}

/// Coefficients of `J_H v = Σ_i (J_i v) φ_i` over interior coarse vertices,
/// ordered like the coarse space basis (`1, x₁ − x₁ⁱ, x₂ − x₂ⁱ` per vertex).
pub fn construct_jh(v: &DofVector, hierarchy: &Hierarchy) -> Result<DVector<f64>> {
    Ok(coefficients(&construct_patch_interpolants(v, hierarchy)?))
}

pub fn construct_patch_interpolants(v: &DofVector, hierarchy: &Hierarchy) -> Result<Vec<PatchInterpolant>> {
    if v.grid() != &hierarchy.fine {
        return Err(Error::Config("function and hierarchy live on different grids".into()));
    }
    let alpha = alpha_for_ratio(hierarchy.ratio)?;
    hierarchy.interior_patches().map(|patch| construct_ji(v, patch, alpha)).collect()
}

pub fn coefficients(interpolants: &[PatchInterpolant]) -> DVector<f64> {
    DVector::from_iterator(3 * interpolants.len(), interpolants.iter().flat_map(|p| p.coeffs))
}

/// Evaluates `Σ_i (c₀ + c₁ (x₁ − x₁ⁱ) + c₂ (x₂ − x₂ⁱ)) φ_i(x)`.
pub fn eval_coarse(hierarchy: &Hierarchy, pou: &PartitionOfUnity, coeffs: &DVector<f64>, p: [f64; 2]) -> f64 {
    hierarchy
        .interior_patches()
        .enumerate()
        .map(|(k, patch)| {
            let phi = pou.value(patch.vertex, p);
            if phi == 0.0 {
                return 0.0;
            }
            let l = Linear { center: patch.center, c: [coeffs[3 * k], coeffs[3 * k + 1], coeffs[3 * k + 2]] };
            phi * l.at(p)
        })
        .sum()
}

/// `J_H v` at every fine vertex, row-major.
pub fn jh_vertex_values(hierarchy: &Hierarchy, coeffs: &DVector<f64>) -> Vec<f64> {
    let pou = build_pou(&hierarchy.coarse);
    let fine = &hierarchy.fine;
    let n = fine.n();
    (0..=n)
        .flat_map(|j| (0..=n).map(move |i| (i, j)))
        .map(|(i, j)| eval_coarse(hierarchy, &pou, coeffs, fine.vertex_coords(i, j)))
        .collect()
}

/// `‖v − J_H v‖_{L²}` by 4×4 Gauss quadrature on every fine element.
pub fn jh_l2_error(v: &DofVector, hierarchy: &Hierarchy, coeffs: &DVector<f64>) -> f64 {
    let pou = build_pou(&hierarchy.coarse);
    let grid = v.grid();
    let h = grid.h();
    let mut sum = 0.0;
    for ej in 0..grid.n() {
        for ei in 0..grid.n() {
            for &(x, wx) in &GAUSS4 {
                for &(y, wy) in &GAUSS4 {
                    let p = [grid.coord(ei) + h * x, grid.coord(ej) + h * y];
                    let d = v.evaluate_in(ei, ej, [x, y], (0, 0)) - eval_coarse(hierarchy, &pou, coeffs, p);
                    sum += wx * wy * h * h * d * d;
                }
            }
        }
    }
    sum.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bfs::interpolate;
    use crate::field::{Constant, Monomial};
    use crate::grid::Grid;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hierarchy(n: usize, m: usize) -> Hierarchy {
        Hierarchy::new(n, m).unwrap()
    }

    #[test]
    fn small_lattice_angles() {
        assert!((min_sine_angle(1).unwrap() - 0.5_f64.sqrt()).abs() < 1e-15);
        let (s, [a, b, c]) = min_sine_angle_triple(2).unwrap();
        assert!((s - 0.1_f64.sqrt()).abs() < 1e-12);
        let det = (a[0] - b[0]) * (c[1] - b[1]) - (a[1] - b[1]) * (c[0] - b[0]);
        assert_eq!(det.abs(), 1);
        assert!(min_sine_angle(0).is_err());
        assert!(min_sine_angle(MAX_ANGLE_GRID + 1).is_err());
    }

    #[test]
    fn lattice_angle_lower_bound() {
        for m in 1..=6 {
            let s = min_sine_angle(m).unwrap();
            assert!(s * 2.0 * (m * m) as f64 >= 1.0, "m = {m}: {s}");
        }
    }

    #[test]
    fn bias_of_simple_functions() {
        let h = hierarchy(16, 4);
        let patch = h.patch(2, 2);
        let alpha = alpha_for_ratio(4).unwrap();
        let lin = interpolate(&Monomial { a: 1, b: 0 }, &h.fine);
        let r = alpha_biased(&lin, patch, alpha);
        assert!(r.biased && r.spread == 0.0);

        let c = interpolate(&Constant(2.0), &h.fine);
        assert!(!alpha_biased(&c, patch, alpha).biased);

        let centred = |p: [f64; 2]| {
            let (x, y) = (p[0] - 0.5, p[1] - 0.5);
            [x * x + y * y, 2.0 * x, 2.0 * y, 0.0]
        };
        let bowl = interpolate(&centred, &h.fine);
        // the origin is a patch vertex, so its zero gradient is sampled
        assert!(!alpha_biased(&bowl, patch, alpha).biased);
        let shifted = |p: [f64; 2]| {
            let (x, y) = (p[0] - 0.5 - 1.0 / 64.0, p[1] - 0.5 - 1.0 / 64.0);
            [x * x + y * y, 2.0 * x, 2.0 * y, 0.0]
        };
        let r = alpha_biased(&interpolate(&shifted, &h.fine), patch, alpha);
        assert!(!r.biased && r.spread > 3.0);
    }

    #[test]
    fn linear_construction_on_affine_data() {
        let h = hierarchy(16, 4);
        let alpha = alpha_for_ratio(4).unwrap();
        for (ic, jc) in [(1, 1), (2, 3)] {
            let patch = h.patch(ic, jc);
            let v = interpolate(&|p: [f64; 2]| [p[0] + 2.0, 1.0, 0.0, 0.0], &h.fine);
            let l = construct_linear(&v, patch, alpha).unwrap();
            let mut touches = 0;
            for (i, j) in patch.cells.closed_vertices() {
                let x = h.fine.vertex_coords(i, j);
                let (vv, lv) = (x[0] + 2.0, l.value(x));
                assert!(lv >= -1e-14 && lv <= vv + 1e-14);
                touches += usize::from((lv - vv).abs() < 1e-13);
            }
            assert!(touches >= 1);
        }
    }

    #[test]
    fn linear_construction_with_a_zero_vertex() {
        let h = hierarchy(16, 4);
        let alpha = alpha_for_ratio(4).unwrap();
        let patch = h.patch(2, 2);
        let v = interpolate(&|p: [f64; 2]| [p[0] - 0.5, 1.0, 0.0, 0.0], &h.fine);
        let l = construct_linear(&v, patch, alpha).unwrap();
        for (i, j) in patch.cells.closed_vertices() {
            let x = h.fine.vertex_coords(i, j);
            if i == 8 {
                assert!(l.value(x).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn ji_trivial_cases() {
        let h = hierarchy(16, 4);
        let alpha = alpha_for_ratio(4).unwrap();
        let patch = h.patch(1, 2);
        let zero = DofVector::zeros(h.fine);
        assert_eq!(construct_ji(&zero, patch, alpha).unwrap().coeffs, [0.0; 3]);
        let three = interpolate(&Constant(3.0), &h.fine);
        let j = construct_ji(&three, patch, alpha).unwrap();
        assert_eq!(j.coeffs, [3.0, 0.0, 0.0]);
        assert_eq!(j.stages(), 0);
    }

    /// Strictly positive vertex values with small random derivatives.
    fn random_positive(grid: &Grid, rng: &mut impl Rng) -> DofVector {
        let mut v = DofVector::zeros(*grid);
        for c in v.coeffs_mut().chunks_mut(4) {
            c[0] = rng.random_range(0.1..2.0);
            c[1] = rng.random_range(-0.5..0.5);
            c[2] = rng.random_range(-0.5..0.5);
            c[3] = rng.random_range(-0.5..0.5);
        }
        v
    }

    #[test]
    fn ji_on_random_positive_functions() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let h = hierarchy(8, 4);
        let alpha = alpha_for_ratio(4).unwrap();
        for _ in 0..50 {
            let v = random_positive(&h.fine, &mut rng);
            construct_ji(&v, h.patch(1, 1), alpha).unwrap();
        }
    }

    #[test]
    fn ji_on_tilted_planes_uses_linear_stages() {
        let h = hierarchy(16, 4);
        let alpha = alpha_for_ratio(4).unwrap();
        let v = interpolate(&|p: [f64; 2]| [1.0 + 0.3 * p[0] + 0.7 * p[1], 0.3, 0.7, 0.0], &h.fine);
        let j = construct_ji(&v, h.patch(2, 2), alpha).unwrap();
        assert!(j.stages() >= 1);
    }

    #[test]
    fn jh_zero_and_positive() {
        let h = hierarchy(16, 4);
        assert_eq!(construct_jh(&DofVector::zeros(h.fine), &h).unwrap(), DVector::zeros(27));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random_positive(&h.fine, &mut rng);
        let c = construct_jh(&v, &h).unwrap();
        let vals = jh_vertex_values(&h, &c);
        for (k, &jv) in vals.iter().enumerate() {
            let (i, j) = h.fine.vertex_ij(k);
            let vv = v.vertex_jet(i, j)[0];
            assert!(jv >= -1e-12 && jv <= vv + 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn nonparallel_direction_bounds(theta in 0.0..(2.0 * PI), alpha in 0.05..(PI / 2.0 - 0.01), px in -10.0..10.0f64, py in -10.0..10.0f64) {
            let e1 = [theta.cos(), theta.sin()];
            let e2 = [(theta + alpha).cos(), (theta + alpha).sin()];
            let q = (px * e1[0] + py * e1[1]).powi(2) + (px * e2[0] + py * e2[1]).powi(2);
            let p2 = px * px + py * py;
            prop_assert!(0.5 * q <= p2 * (1.0 + 1e-12));
            prop_assert!(p2 <= 3.0 / alpha.sin().powi(2) * q * (1.0 + 1e-12) + 1e-300);
        }
    }
}

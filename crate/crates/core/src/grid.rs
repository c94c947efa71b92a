//! Truncated spatial domain `[-L, L]`, nodal vector fields and the
//! finite-difference operators acting on them.
//!
//! Values are stored node-major: component `k` of node `j` lives at
//! `values[j * n + k]`. First derivatives and the diffusion operator use
//! five-point fourth-order central stencils. Near the edges the stencils
//! read two ghost nodes per side whose values come from an [`Ends`]
//! (the rest states `u_-`, `u_+` for wave states, zero for perturbations).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Five-point first-derivative weights for offsets `-2..=2` (divide by `dx`).
pub(crate) const D1_WEIGHTS: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
/// Five-point second-derivative weights for offsets `-2..=2` (divide by `dx^2`).
pub(crate) const D2_WEIGHTS: [f64; 5] = [
    -1.0 / 12.0,
    16.0 / 12.0,
    -30.0 / 12.0,
    16.0 / 12.0,
    -1.0 / 12.0,
];

/// Uniform grid on `[-L, L]` carrying `n_components` values per node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    half_width: f64,
    dx: f64,
    n_points: usize,
    n_components: usize,
}

impl GridSpec {
    /// Builds the grid with spacing `dx`; `2L/dx` must be an integer to
    /// within one part in 10^9.
    pub fn new(half_width: f64, dx: f64, n_components: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "half_width must be positive, got {half_width}"
            )));
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dx must be positive, got {dx}"
            )));
        }
        if n_components == 0 {
            return Err(Error::InvalidParameter("n_components must be >= 1".into()));
        }
        let intervals = (2.0 * half_width / dx).round();
        if intervals < 2.0 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 3 points (L = {half_width}, dx = {dx})"
            )));
        }
        if ((intervals * dx) - 2.0 * half_width).abs() > 1e-9 * 2.0 * half_width {
            return Err(Error::InvalidParameter(format!(
                "dx = {dx} does not divide 2L = {}",
                2.0 * half_width
            )));
        }
        Ok(Self {
            half_width,
            dx: 2.0 * half_width / intervals,
            n_points: intervals as usize + 1,
            n_components,
        })
    }

    /// Builds the grid from a node count instead of a spacing.
    pub fn with_points(half_width: f64, n_points: usize, n_components: usize) -> Result<Self> {
        if n_points < 3 {
            return Err(Error::InvalidParameter(format!(
                "n_points must be >= 3, got {n_points}"
            )));
        }
        Self::new(
            half_width,
            2.0 * half_width / (n_points - 1) as f64,
            n_components,
        )
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    /// Total number of stored values, `n_points * n_components`.
    pub fn len(&self) -> usize {
        self.n_points * self.n_components
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinate of node `j`.
    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dx
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |j| self.node(j))
    }

    /// Trapezoidal quadrature weight of node `j`.
    #[inline]
    pub fn weight(&self, j: usize) -> f64 {
        if j == 0 || j + 1 == self.n_points {
            0.5 * self.dx
        } else {
            self.dx
        }
    }

    /// Same grid with a different number of components.
    pub fn with_components(&self, n_components: usize) -> Result<Self> {
        Self::new(self.half_width, self.dx, n_components)
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self.n_points != other.n_points
            || self.n_components != other.n_components
            || (self.dx - other.dx).abs() > 1e-12 * self.dx
        {
            return Err(Error::Shape(format!(
                "grid mismatch: {} x {} (dx {}) vs {} x {} (dx {})",
                self.n_points,
                self.n_components,
                self.dx,
                other.n_points,
                other.n_components,
                other.dx
            )));
        }
        Ok(())
    }
}

/// Extension values used beyond `[-L, L]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ends {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl Ends {
    pub fn new(left: Vec<f64>, right: Vec<f64>) -> Result<Self> {
        if left.len() != right.len() || left.is_empty() {
            return Err(Error::Shape(format!(
                "end states must have equal non-zero length ({} vs {})",
                left.len(),
                right.len()
            )));
        }
        Ok(Self { left, right })
    }

    pub fn zero(n_components: usize) -> Self {
        Self {
            left: vec![0.0; n_components],
            right: vec![0.0; n_components],
        }
    }

    pub fn n_components(&self) -> usize {
        self.left.len()
    }
}

/// Nodal vector field on a [`GridSpec`]. Every entry is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFn {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridFn {
    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            spec,
            values: vec![0.0; spec.len()],
        }
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Shape(format!(
                "expected {} values, got {}",
                spec.len(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite value at index {pos}"
            )));
        }
        Ok(Self { spec, values })
    }

    /// Samples `f(x, out)` at every node.
    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(f64, &mut [f64])) -> Result<Self> {
        let n = spec.n_components();
        let mut values = vec![0.0; spec.len()];
        for (j, chunk) in values.chunks_exact_mut(n).enumerate() {
            f(spec.node(j), chunk);
        }
        Self::from_values(spec, values)
    }

    /// Samples a scalar function into every component.
    pub fn from_scalar_fn(spec: GridSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_fn(spec, |x, out| out.iter_mut().for_each(|o| *o = f(x)))
    }

    /// Constant field with node value `state`.
    pub fn constant(spec: GridSpec, state: &[f64]) -> Result<Self> {
        if state.len() != spec.n_components() {
            return Err(Error::Shape("state length differs from n_components".into()));
        }
        Self::from_fn(spec, |_, out| out.copy_from_slice(state))
    }

    pub(crate) fn from_raw(spec: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.len());
        Self { spec, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Values at node `j`.
    pub fn at(&self, j: usize) -> &[f64] {
        let n = self.spec.n_components();
        &self.values[j * n..(j + 1) * n]
    }

    pub fn component(&self, k: usize) -> Vec<f64> {
        let n = self.spec.n_components();
        self.values.iter().skip(k).step_by(n).copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &GridFn) -> Result<()> {
        self.spec.check_same(&x.spec)?;
        for (s, xv) in self.values.iter_mut().zip(&x.values) {
            *s += a * xv;
        }
        Ok(())
    }

    pub fn scaled(&self, a: f64) -> GridFn {
        Self::from_raw(self.spec, self.values.iter().map(|v| a * v).collect())
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, b: f64, other: &GridFn) -> Result<GridFn> {
        self.spec.check_same(&other.spec)?;
        Ok(Self::from_raw(
            self.spec,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        ))
    }

    pub fn add(&self, other: &GridFn) -> Result<GridFn> {
        self.lin_comb(1.0, 1.0, other)
    }

    pub fn sub(&self, other: &GridFn) -> Result<GridFn> {
        self.lin_comb(1.0, -1.0, other)
    }
}

/// Trapezoidal `sum_j w_j sum_k a_jk b_jk` on raw node-major slices.
#[inline]
pub(crate) fn dot_trapz(a: &[f64], b: &[f64], n: usize, dx: f64) -> f64 {
    let len = a.len();
    debug_assert_eq!(len, b.len());
    let mut interior = 0.0;
    for (x, y) in a[n..len - n].iter().zip(&b[n..len - n]) {
        interior += x * y;
    }
    let mut edges = 0.0;
    for k in 0..n {
        edges += a[k] * b[k] + a[len - n + k] * b[len - n + k];
    }
    dx * (interior + 0.5 * edges)
}

/// Trapezoidal L^2 inner product `∫ Σ_k u_k v_k dξ` over `[-L, L]`.
pub fn inner_product_l2(u: &GridFn, v: &GridFn) -> Result<f64> {
    u.spec.check_same(&v.spec)?;
    Ok(dot_trapz(
        &u.values,
        &v.values,
        u.spec.n_components(),
        u.spec.dx(),
    ))
}

pub fn norm_l2(u: &GridFn) -> f64 {
    dot_trapz(&u.values, &u.values, u.spec.n_components(), u.spec.dx())
        .max(0.0)
        .sqrt()
}

/// Discrete H^1 norm `(‖u‖² + ‖Du‖²)^{1/2}` with `D` the fourth-order
/// central difference (one-sided closures at the two outermost nodes).
pub fn norm_h1(u: &GridFn) -> f64 {
    h1_norm_sq_raw(&u.values, u.spec.n_components(), u.spec.dx(), &mut Vec::new()).sqrt()
}

pub(crate) fn h1_norm_sq_raw(values: &[f64], n: usize, dx: f64, scratch: &mut Vec<f64>) -> f64 {
    scratch.resize(values.len(), 0.0);
    derivative_one_sided_into(values, n, dx, scratch);
    let l2 = dot_trapz(values, values, n, dx);
    let d2 = dot_trapz(scratch, scratch, n, dx);
    (l2 + d2).max(0.0)
}

#[inline]
fn ghost(values: &[f64], n: usize, n_points: usize, j: isize, k: usize, ends: &Ends) -> f64 {
    if j < 0 {
        ends.left[k]
    } else if j as usize >= n_points {
        ends.right[k]
    } else {
        values[j as usize * n + k]
    }
}

/// Applies a five-point stencil `scale * Σ w_o u_{j+o}` with ghost values
/// from `ends`.
pub(crate) fn stencil_into(
    values: &[f64],
    n: usize,
    ends: &Ends,
    weights: &[f64; 5],
    scale: f64,
    out: &mut [f64],
) {
    let n_points = values.len() / n;
    debug_assert!(n_points >= 3);
    let [w0, w1, w2, w3, w4] = *weights;
    if n_points >= 5 {
        // interior: flat index i with neighbours i ± n, i ± 2n
        let len = values.len();
        let m = len - 4 * n;
        let out_mid = &mut out[2 * n..2 * n + m];
        let (a, b, c, d, e) = (
            &values[..m],
            &values[n..n + m],
            &values[2 * n..2 * n + m],
            &values[3 * n..3 * n + m],
            &values[4 * n..4 * n + m],
        );
        for i in 0..m {
            out_mid[i] = scale * (w0 * a[i] + w1 * b[i] + w2 * c[i] + w3 * d[i] + w4 * e[i]);
        }
    }
    let edges = if n_points >= 5 {
        [0..2, n_points - 2..n_points]
    } else {
        [0..n_points, 0..0]
    };
    for j in edges.into_iter().flatten() {
        for k in 0..n {
            let mut acc = 0.0;
            for (o, w) in weights.iter().enumerate() {
                let jj = j as isize + o as isize - 2;
                acc += w * ghost(values, n, n_points, jj, k, ends);
            }
            out[j * n + k] = scale * acc;
        }
    }
}

/// One-sided fourth-order first derivative at the edges, central inside.
pub(crate) fn derivative_one_sided_into(values: &[f64], n: usize, dx: f64, out: &mut [f64]) {
    let n_points = values.len() / n;
    if n_points < 5 {
        // too short for the closures; fall back to second-order differences
        for j in 0..n_points {
            for k in 0..n {
                let (a, b, h) = if j == 0 {
                    (values[k], values[n + k], dx)
                } else if j + 1 == n_points {
                    (values[(j - 1) * n + k], values[j * n + k], dx)
                } else {
                    (values[(j - 1) * n + k], values[(j + 1) * n + k], 2.0 * dx)
                };
                out[j * n + k] = (b - a) / h;
            }
        }
        return;
    }
    let zero = Ends::zero(n);
    stencil_into(values, n, &zero, &D1_WEIGHTS, 1.0 / dx, out);
    let at = |j: usize, k: usize| values[j * n + k];
    let last = n_points - 1;
    for k in 0..n {
        out[k] = (-25.0 * at(0, k) + 48.0 * at(1, k) - 36.0 * at(2, k) + 16.0 * at(3, k)
            - 3.0 * at(4, k))
            / (12.0 * dx);
        out[n + k] = (-3.0 * at(0, k) - 10.0 * at(1, k) + 18.0 * at(2, k) - 6.0 * at(3, k)
            + at(4, k))
            / (12.0 * dx);
        out[last * n + k] = (25.0 * at(last, k) - 48.0 * at(last - 1, k)
            + 36.0 * at(last - 2, k)
            - 16.0 * at(last - 3, k)
            + 3.0 * at(last - 4, k))
            / (12.0 * dx);
        out[(last - 1) * n + k] = (3.0 * at(last, k) + 10.0 * at(last - 1, k)
            - 18.0 * at(last - 2, k)
            + 6.0 * at(last - 3, k)
            - at(last - 4, k))
            / (12.0 * dx);
    }
}

/// Central first derivative with ghost values taken from `ends`.
pub fn derivative(u: &GridFn, ends: &Ends) -> GridFn {
    let mut out = vec![0.0; u.values.len()];
    stencil_into(
        &u.values,
        u.spec.n_components(),
        ends,
        &D1_WEIGHTS,
        1.0 / u.spec.dx(),
        &mut out,
    );
    GridFn::from_raw(u.spec, out)
}

/// Central first derivative with one-sided closures (no ghost values).
pub fn derivative_one_sided(u: &GridFn) -> GridFn {
    let mut out = vec![0.0; u.values.len()];
    derivative_one_sided_into(&u.values, u.spec.n_components(), u.spec.dx(), &mut out);
    GridFn::from_raw(u.spec, out)
}

/// How the diffusion stencil closes at `±L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryRule {
    /// Ghost nodes hold the rest states `u_∓`.
    ClampToRestStates,
}

/// The diffusion operator `A_* = ρ I_n ∂_ξξ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSpec {
    pub rho: f64,
    pub boundary_rule: BoundaryRule,
}

impl DiffusionSpec {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "diffusion coefficient must be positive, got {rho}"
            )));
        }
        Ok(Self {
            rho,
            boundary_rule: BoundaryRule::ClampToRestStates,
        })
    }
}

pub(crate) fn diffusion_into(values: &[f64], n: usize, dx: f64, rho: f64, ends: &Ends, out: &mut [f64]) {
    stencil_into(values, n, ends, &D2_WEIGHTS, rho / (dx * dx), out);
}

/// `ρ u_ξξ` with ghost values from `ends`.
pub fn apply_diffusion(u: &GridFn, d: &DiffusionSpec, ends: &Ends) -> GridFn {
    let mut out = vec![0.0; u.values.len()];
    diffusion_into(
        &u.values,
        u.spec.n_components(),
        u.spec.dx(),
        d.rho,
        ends,
        &mut out,
    );
    GridFn::from_raw(u.spec, out)
}

/// Four-point Lagrange weights at fractional offset `t ∈ [0, 1)` for the
/// nodes `i-1, i, i+1, i+2`.
#[inline]
pub(crate) fn cubic_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// `out_j = u(ξ_j - gamma)` by cubic interpolation, rest-state extension.
pub(crate) fn shift_into(values: &[f64], n: usize, dx: f64, gamma: f64, ends: &Ends, out: &mut [f64]) {
    if gamma == 0.0 {
        out.copy_from_slice(values);
        return;
    }
    let n_points = values.len() / n;
    let offset = -gamma / dx;
    let base = offset.floor();
    let t = offset - base;
    let w = cubic_weights(t);
    let base = base as isize;
    // nodes j with every stencil point inside the grid
    let lo = (1 - base).max(0);
    let hi = (n_points as isize - 3 - base).min(n_points as isize - 1);
    if lo <= hi {
        let (lo_u, hi_u) = (lo as usize, hi as usize);
        let m = (hi_u - lo_u + 1) * n;
        let src = ((lo + base - 1) as usize) * n;
        let out_mid = &mut out[lo_u * n..lo_u * n + m];
        let (a, b, c, d) = (
            &values[src..src + m],
            &values[src + n..src + n + m],
            &values[src + 2 * n..src + 2 * n + m],
            &values[src + 3 * n..src + 3 * n + m],
        );
        for i in 0..m {
            out_mid[i] = w[0] * a[i] + w[1] * b[i] + w[2] * c[i] + w[3] * d[i];
        }
    }
    let np = n_points as isize;
    let (left, right) = if lo <= hi {
        (0..lo.min(np), (hi + 1).max(0)..np)
    } else {
        (0..np, 0..0)
    };
    for j in left.chain(right) {
        let i0 = j + base;
        for k in 0..n {
            let mut acc = 0.0;
            for (m, wm) in w.iter().enumerate() {
                acc += wm * ghost(values, n, n_points, i0 - 1 + m as isize, k, ends);
            }
            out[j as usize * n + k] = acc;
        }
    }
}

/// Right shift `[T_γ u](ξ) = u(ξ - γ)`; samples beyond `±L` take the
/// extension values in `ends`.
pub fn shift(u: &GridFn, gamma: f64, ends: &Ends) -> GridFn {
    let mut out = vec![0.0; u.values.len()];
    shift_into(
        &u.values,
        u.spec.n_components(),
        u.spec.dx(),
        gamma,
        ends,
        &mut out,
    );
    GridFn::from_raw(u.spec, out)
}

/// Cubic interpolation of `u` at an arbitrary coordinate.
pub fn eval_at(u: &GridFn, x: f64, ends: &Ends, out: &mut [f64]) {
    let spec = u.spec;
    let n = spec.n_components();
    let p = (x + spec.half_width()) / spec.dx();
    let base = p.floor();
    let w = cubic_weights(p - base);
    let base = base as isize;
    for (k, o) in out.iter_mut().enumerate().take(n) {
        let mut acc = 0.0;
        for (m, wm) in w.iter().enumerate() {
            acc += wm * ghost(&u.values, n, spec.n_points(), base - 1 + m as isize, k, ends);
        }
        *o = acc;
    }
}

/// Resamples `u` onto another grid by cubic interpolation.
pub fn resample(u: &GridFn, target: GridSpec, ends: &Ends) -> Result<GridFn> {
    if target.n_components() != u.spec.n_components() {
        return Err(Error::Shape("component count differs".into()));
    }
    GridFn::from_fn(target, |x, out| eval_at(u, x, ends, out))
}

/// `ξ ↦ u(α ξ)` on the same grid.
pub fn rescale_argument(u: &GridFn, alpha: f64, ends: &Ends) -> GridFn {
    let spec = u.spec;
    let mut values = vec![0.0; spec.len()];
    let n = spec.n_components();
    for (j, chunk) in values.chunks_exact_mut(n).enumerate() {
        eval_at(u, alpha * spec.node(j), ends, chunk);
    }
    GridFn::from_raw(spec, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn line(l: f64, dx: f64) -> GridSpec {
        GridSpec::new(l, dx, 1).unwrap()
    }

    #[test]
    fn grid_invariants() {
        let g = line(10.0, 0.1);
        assert_eq!(g.n_points(), 201);
        assert!(((g.n_points() - 1) as f64 * g.dx() - 20.0).abs() < 1e-9 * 20.0);
        assert!(GridSpec::new(10.0, 0.3, 1).is_err());
        assert!(GridSpec::new(-1.0, 0.1, 1).is_err());
        assert!(GridSpec::new(1.0, 0.1, 0).is_err());
        assert!(GridSpec::new(1.0, 1.5, 1).is_err());
    }

    #[test]
    fn non_finite_values_rejected() {
        let g = line(1.0, 0.5);
        assert!(GridFn::from_values(g, vec![0.0, f64::NAN, 0.0, 0.0, 0.0]).is_err());
        assert!(GridFn::from_values(g, vec![0.0; 4]).is_err());
    }

    #[test]
    fn inner_product_of_constants() {
        let g = line(10.0, 0.1);
        let one = GridFn::from_scalar_fn(g, |_| 1.0).unwrap();
        assert_abs_diff_eq!(inner_product_l2(&one, &one).unwrap(), 20.0, epsilon = 1e-12);
    }

    #[test]
    fn inner_product_odd_integrand() {
        let g = GridSpec::with_points(PI, 2001, 1).unwrap();
        let s = GridFn::from_scalar_fn(g, f64::sin).unwrap();
        let c = GridFn::from_scalar_fn(g, f64::cos).unwrap();
        assert_abs_diff_eq!(inner_product_l2(&s, &c).unwrap(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn inner_product_shape_error() {
        let a = GridFn::zeros(line(1.0, 0.5));
        let b = GridFn::zeros(line(1.0, 0.25));
        assert!(matches!(inner_product_l2(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn h1_norm_examples() {
        let g = line(10.0, 0.1);
        assert_eq!(norm_h1(&GridFn::zeros(g)), 0.0);
        let c = GridFn::from_scalar_fn(g, |_| -3.0).unwrap();
        assert_abs_diff_eq!(norm_h1(&c), 3.0 * 20f64.sqrt(), epsilon = 1e-9);

        // ∫ sin² + cos² over [-π, π] = 2π
        let g = GridSpec::with_points(PI, 6284, 1).unwrap();
        assert!(g.dx() < 1.001e-3);
        let s = GridFn::from_scalar_fn(g, f64::sin).unwrap();
        assert_abs_diff_eq!(norm_h1(&s), (2.0 * PI).sqrt(), epsilon = 1e-4);
        assert!(norm_h1(&s) >= norm_l2(&s));
    }

    #[test]
    fn zero_shift_is_identity() {
        let g = line(5.0, 0.1);
        let u = GridFn::from_scalar_fn(g, |x| (x * 0.7).tanh()).unwrap();
        let ends = Ends::new(vec![-1.0], vec![1.0]).unwrap();
        assert_eq!(shift(&u, 0.0, &ends), u);
    }

    #[test]
    fn shift_matches_translate() {
        let g = line(20.0, 0.05);
        let f = |x: f64| (-(x * x) / 4.0).exp();
        let u = GridFn::from_scalar_fn(g, f).unwrap();
        let shifted = shift(&u, 0.37, &Ends::zero(1));
        for j in 0..g.n_points() {
            assert_abs_diff_eq!(shifted.values()[j], f(g.node(j) - 0.37), epsilon = 1e-6);
        }
    }

    #[test]
    fn shift_uses_rest_state_extension() {
        let g = line(10.0, 0.05);
        let u = GridFn::from_scalar_fn(g, |x| 0.5 * (1.0 + (x / 2f64.sqrt()).tanh())).unwrap();
        let ends = Ends::new(vec![0.0], vec![1.0]).unwrap();
        let s = shift(&u, 10.0, &ends);
        assert_abs_diff_eq!(s.values()[0], 0.0, epsilon = 1e-6);
        let s = shift(&u, 25.0, &ends);
        assert!(s.values().iter().take(100).all(|v| v.abs() < 1e-12));
        let s = shift(&u, -25.0, &ends);
        assert!(s.values().iter().rev().take(100).all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn diffusion_examples() {
        let g = line(5.0, 0.1);
        let u = GridFn::from_scalar_fn(g, |x| 2.0 * x - 1.0).unwrap();
        let d1 = DiffusionSpec::new(1.0).unwrap();
        let out = apply_diffusion(&u, &d1, &Ends::new(vec![-11.0], vec![9.0]).unwrap());
        for j in 2..g.n_points() - 2 {
            assert_abs_diff_eq!(out.values()[j], 0.0, epsilon = 1e-9);
        }

        let g = GridSpec::with_points(PI, 629, 1).unwrap();
        let s = GridFn::from_scalar_fn(g, f64::sin).unwrap();
        let out = apply_diffusion(&s, &d1, &Ends::zero(1));
        for j in 2..g.n_points() - 2 {
            assert_abs_diff_eq!(out.values()[j], -g.node(j).sin(), epsilon = 1e-4);
        }

        let d2 = DiffusionSpec::new(2.0).unwrap();
        let doubled = apply_diffusion(&s, &d2, &Ends::zero(1));
        for (a, b) in doubled.values().iter().zip(out.values()) {
            assert_eq!(*a, 2.0 * b);
        }
        assert!(DiffusionSpec::new(0.0).is_err());
    }

    #[test]
    fn rescale_argument_matches_closed_form() {
        let g = line(20.0, 0.02);
        let f = |x: f64| 0.5 * (1.0 + (x / 2f64.sqrt()).tanh());
        let u = GridFn::from_scalar_fn(g, f).unwrap();
        let ends = Ends::new(vec![0.0], vec![1.0]).unwrap();
        let r = rescale_argument(&u, 1.3, &ends);
        for j in 0..g.n_points() {
            assert_abs_diff_eq!(r.values()[j], f(1.3 * g.node(j)), epsilon = 1e-8);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn bumps(g: GridSpec, c: &[(f64, f64, f64)]) -> GridFn {
            GridFn::from_scalar_fn(g, |x| {
                c.iter().map(|(a, m, w)| a * (-((x - m) / w).powi(2)).exp()).sum()
            })
            .unwrap()
        }

        fn coeffs() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
            prop::collection::vec((-1.0f64..1.0, -4.0f64..4.0, 0.8f64..2.0), 1..4)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn shift_round_trip(gamma in -3.0f64..3.0) {
                let g = line(15.0, 0.05);
                let u = GridFn::from_scalar_fn(g, |x| 0.5 * (1.0 + (x / 2.0).tanh())).unwrap();
                let ends = Ends::new(vec![0.0], vec![1.0]).unwrap();
                let back = shift(&shift(&u, gamma, &ends), -gamma, &ends);
                prop_assert!(back.sub(&u).unwrap().sup_norm() < 1e-5);
            }

            #[test]
            fn shifts_compose(a in -2.0f64..2.0, b in -2.0f64..2.0) {
                let g = line(15.0, 0.05);
                let u = bumps(g, &[(1.0, 0.5, 1.5)]);
                let z = Ends::zero(1);
                let two = shift(&shift(&u, a, &z), b, &z);
                prop_assert!(two.sub(&shift(&u, a + b, &z)).unwrap().sup_norm() < 1e-5);
            }

            #[test]
            fn whole_cell_shift_is_exact(k in -20i32..20) {
                let g = line(10.0, 0.1);
                let u = bumps(g, &[(1.0, 0.0, 1.0)]);
                let s = shift(&u, k as f64 * g.dx(), &Ends::zero(1));
                let np = g.n_points() as i32;
                for j in 0..np {
                    let src = j - k;
                    let want = if (0..np).contains(&src) { u.values()[src as usize] } else { 0.0 };
                    prop_assert!((s.values()[j as usize] - want).abs() < 1e-12);
                }
            }

            #[test]
            fn operators_are_linear(cu in coeffs(), cv in coeffs(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
                let g = line(10.0, 0.1);
                let (u, v) = (bumps(g, &cu), bumps(g, &cv));
                let z = Ends::zero(1);
                let d = DiffusionSpec::new(1.3).unwrap();
                let w = u.lin_comb(a, b, &v).unwrap();
                let lhs = derivative(&w, &z);
                let rhs = derivative(&u, &z).lin_comb(a, b, &derivative(&v, &z)).unwrap();
                prop_assert!(lhs.sub(&rhs).unwrap().sup_norm() < 1e-11);
                let lhs = apply_diffusion(&w, &d, &z);
                let rhs = apply_diffusion(&u, &d, &z).lin_comb(a, b, &apply_diffusion(&v, &d, &z)).unwrap();
                prop_assert!(lhs.sub(&rhs).unwrap().sup_norm() < 1e-9);
            }

            #[test]
            fn discrete_symmetries(cu in coeffs(), cv in coeffs()) {
                let g = line(12.0, 0.1);
                let (u, v) = (bumps(g, &cu), bumps(g, &cv));
                let z = Ends::zero(1);
                let d = DiffusionSpec::new(1.0).unwrap();
                let skew = inner_product_l2(&derivative(&u, &z), &v).unwrap()
                    + inner_product_l2(&u, &derivative(&v, &z)).unwrap();
                prop_assert!(skew.abs() < 1e-10);
                let sym = inner_product_l2(&apply_diffusion(&u, &d, &z), &v).unwrap()
                    - inner_product_l2(&u, &apply_diffusion(&v, &d, &z)).unwrap();
                prop_assert!(sym.abs() < 1e-9);
                let dissip = inner_product_l2(&apply_diffusion(&u, &d, &z), &u).unwrap();
                prop_assert!(dissip <= 1e-12);
            }

            #[test]
            fn cauchy_schwarz(cu in coeffs(), cv in coeffs()) {
                let g = line(10.0, 0.1);
                let (u, v) = (bumps(g, &cu), bumps(g, &cv));
                let ip = inner_product_l2(&u, &v).unwrap();
                prop_assert_eq!(ip, inner_product_l2(&v, &u).unwrap());
                prop_assert!(ip.abs() <= norm_l2(&u) * norm_l2(&v) * (1.0 + 1e-12));
                prop_assert!(norm_l2(&u) <= norm_h1(&u));
            }
        }
    }
}

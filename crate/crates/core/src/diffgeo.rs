//! Pointwise exterior calculus on coordinate charts.
//!
//! Points and vectors are plain coordinate slices in interleaved complex order
//! `(x1, y1, x2, y2, ...)`. Gram arrays use the convention `G[i][j] = beta(e_i, e_j)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, numeric, Result};

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Agreement required between steps `h` and `h/2` in [`richardson`].
pub const RICHARDSON_TOL: f64 = 1e-6;

/// A point in a named chart.
#[derive(Clone, Debug, PartialEq)]
pub struct RealPoint {
    pub coords: Vec<f64>,
    pub chart_id: u32,
}

impl RealPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        Self::in_chart(0, coords.len(), coords)
    }

    pub fn in_chart(chart_id: u32, dim: usize, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != dim {
            return Err(contract(format!(
                "chart {chart_id} has dimension {dim}, got {} coordinates",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(domain("non-finite coordinate"));
        }
        Ok(Self { coords, chart_id })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// A tangent vector attached to a base point.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVec {
    pub components: Vec<f64>,
    pub base: RealPoint,
}

impl TangentVec {
    pub fn new(base: RealPoint, components: Vec<f64>) -> Result<Self> {
        if components.len() != base.dim() {
            return Err(contract("tangent vector length differs from base dimension"));
        }
        Ok(Self { components, base })
    }
}

type EvalFn = dyn Fn(&[f64], &[f64], &[f64]) -> Result<f64> + Send + Sync;
type GramFn = dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync;
type MapFn = dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync;
type JacFn = dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync;

/// A point-indexed antisymmetric bilinear form.
#[derive(Clone)]
pub struct TwoFormField {
    dim: usize,
    eval: Arc<EvalFn>,
    gram: Option<Arc<GramFn>>,
}

impl std::fmt::Debug for TwoFormField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TwoFormField")
            .field("dim", &self.dim)
            .field("has_gram", &self.gram.is_some())
            .finish()
    }
}

impl TwoFormField {
    /// Form given by a Gram array at each point; evaluation is `v^T G w`.
    pub fn from_gram(
        dim: usize,
        gram: impl Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        let gram: Arc<GramFn> = Arc::new(gram);
        let g2 = gram.clone();
        let eval = move |p: &[f64], v: &[f64], w: &[f64]| -> Result<f64> {
            let g = g2(p)?;
            Ok(bilinear(&g, v, w))
        };
        Self { dim, eval: Arc::new(eval), gram: Some(gram) }
    }

    /// Form given only by its evaluator.
    pub fn from_evaluator(
        dim: usize,
        eval: impl Fn(&[f64], &[f64], &[f64]) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { dim, eval: Arc::new(eval), gram: None }
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn has_gram(&self) -> bool {
        self.gram.is_some()
    }

    pub fn evaluate(&self, p: &[f64], v: &[f64], w: &[f64]) -> Result<f64> {
        if p.len() != self.dim || v.len() != self.dim || w.len() != self.dim {
            return Err(contract("two-form argument dimension mismatch"));
        }
        (self.eval)(p, v, w)
    }

    pub fn evaluate_at(&self, v: &TangentVec, w: &TangentVec) -> Result<f64> {
        if v.base != w.base {
            return Err(contract("tangent vectors at different points"));
        }
        self.evaluate(&v.base.coords, &v.components, &w.components)
    }

    /// Gram array at `p`, from the registered Gram function or by basis evaluation.
    pub fn gram_at(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        if p.len() != self.dim {
            return Err(contract("point dimension mismatch"));
        }
        if let Some(g) = &self.gram {
            return g(p);
        }
        let n = self.dim;
        let mut g = DMatrix::zeros(n, n);
        let mut ei = vec![0.0; n];
        let mut ej = vec![0.0; n];
        for i in 0..n {
            ei[i] = 1.0;
            for j in (i + 1)..n {
                ej[j] = 1.0;
                let x = (self.eval)(p, &ei, &ej)?;
                g[(i, j)] = x;
                g[(j, i)] = -x;
                ej[j] = 0.0;
            }
            ei[i] = 0.0;
        }
        Ok(g)
    }

    /// Pointwise scalar multiple.
    pub fn scaled(&self, c: f64) -> Self {
        let inner = self.clone();
        Self::from_gram(self.dim, move |p| Ok(inner.gram_at(p)? * c))
    }
}

/// `v^T G w`.
pub fn bilinear(g: &DMatrix<f64>, v: &[f64], w: &[f64]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        if v[i] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for j in 0..n {
            row += g[(i, j)] * w[j];
        }
        s += v[i] * row;
    }
    s
}

/// The standard form `sum dx_j ^ dy_j` on R^{2k}.
pub fn omega0_eval(v: &[f64], w: &[f64]) -> f64 {
    v.chunks_exact(2)
        .zip(w.chunks_exact(2))
        .map(|(a, b)| a[0] * b[1] - a[1] * b[0])
        .sum()
}

pub fn omega0_gram(k: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(2 * k, 2 * k);
    for j in 0..k {
        g[(2 * j, 2 * j + 1)] = 1.0;
        g[(2 * j + 1, 2 * j)] = -1.0;
    }
    g
}

pub fn omega0(k: usize) -> TwoFormField {
    let g = omega0_gram(k);
    TwoFormField::from_gram(2 * k, move |_| Ok(g.clone()))
}

/// A map between coordinate charts with optional analytic Jacobian.
#[derive(Clone)]
pub struct SmoothMap {
    pub source_dim: usize,
    pub target_dim: usize,
    apply: Arc<MapFn>,
    jacobian: Option<Arc<JacFn>>,
    pub fd_step: f64,
}

impl std::fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothMap")
            .field("source_dim", &self.source_dim)
            .field("target_dim", &self.target_dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl SmoothMap {
    pub fn new(
        source_dim: usize,
        target_dim: usize,
        apply: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        Self { source_dim, target_dim, apply: Arc::new(apply), jacobian: None, fd_step: FD_STEP }
    }

    pub fn with_jacobian(
        mut self,
        jac: impl Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(dim, dim, |p| Ok(p.to_vec())).with_jacobian(move |_| Ok(DMatrix::identity(dim, dim)))
    }

    /// Linear map `p -> M p`.
    pub fn linear(m: DMatrix<f64>) -> Self {
        let (r, c) = m.shape();
        let m2 = m.clone();
        Self::new(c, r, move |p| {
            let x = &m2 * nalgebra::DVector::from_column_slice(p);
            Ok(x.as_slice().to_vec())
        })
        .with_jacobian(move |_| Ok(m.clone()))
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn apply(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.source_dim {
            return Err(contract("map source dimension mismatch"));
        }
        let out = (self.apply)(p)?;
        if out.len() != self.target_dim {
            return Err(contract("map returned wrong target dimension"));
        }
        Ok(out)
    }

    /// Analytic Jacobian when registered, else central differences.
    pub fn jacobian_at(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        if let Some(j) = &self.jacobian {
            return j(p);
        }
        self.fd_jacobian(p, self.fd_step)
    }

    pub fn fd_jacobian(&self, p: &[f64], h: f64) -> Result<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(self.target_dim, self.source_dim);
        let mut q = p.to_vec();
        for c in 0..self.source_dim {
            q[c] = p[c] + h;
            let fp = self.apply(&q)?;
            q[c] = p[c] - h;
            let fm = self.apply(&q)?;
            q[c] = p[c];
            for r in 0..self.target_dim {
                jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        Ok(jac)
    }

    /// `G ∘ F` with chained Jacobians.
    pub fn compose(&self, outer: &SmoothMap) -> Result<SmoothMap> {
        if self.target_dim != outer.source_dim {
            return Err(contract("composition dimension mismatch"));
        }
        let (f1, g1) = (self.clone(), outer.clone());
        let (f2, g2) = (self.clone(), outer.clone());
        Ok(SmoothMap::new(self.source_dim, outer.target_dim, move |p| g1.apply(&f1.apply(p)?))
            .with_jacobian(move |p| {
                let jf = f2.jacobian_at(p)?;
                let jg = g2.jacobian_at(&f2.apply(p)?)?;
                Ok(jg * jf)
            }))
    }
}

/// `F^* beta`.
pub fn pullback_two_form(f: &SmoothMap, beta: &TwoFormField) -> Result<TwoFormField> {
    if f.target_dim != beta.dimension() {
        return Err(contract(format!(
            "map target dimension {} differs from form dimension {}",
            f.target_dim,
            beta.dimension()
        )));
    }
    let (f, beta) = (f.clone(), beta.clone());
    Ok(TwoFormField::from_gram(f.source_dim, move |p| {
        let q = f.apply(p)?;
        let j = f.jacobian_at(p)?;
        let g = beta.gram_at(&q)?;
        Ok(j.transpose() * g * j)
    }))
}

/// Central-difference `d eta(v, w)` for constant-coefficient extensions of `v`, `w`.
///
/// `eta(p, x)` evaluates the one-form at `p` on the vector `x`.
pub fn exterior_derivative_one_form(
    eta: &dyn Fn(&[f64], &[f64]) -> f64,
    p: &[f64],
    v: &[f64],
    w: &[f64],
    h: f64,
) -> Result<f64> {
    if h <= 0.0 || !h.is_finite() {
        return Err(contract("finite-difference step must be positive"));
    }
    if v.len() != p.len() || w.len() != p.len() {
        return Err(contract("vector dimension mismatch"));
    }
    let shift = |dir: &[f64], s: f64| -> Vec<f64> {
        p.iter().zip(dir).map(|(a, d)| a + s * d).collect()
    };
    let samples = [
        eta(&shift(v, h), w),
        eta(&shift(v, -h), w),
        eta(&shift(w, h), v),
        eta(&shift(w, -h), v),
    ];
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(numeric("non-finite one-form sample"));
    }
    Ok((samples[0] - samples[1] - samples[2] + samples[3]) / (2.0 * h))
}

/// Evaluates a step-dependent estimate at `h` and `h/2`; fails when they disagree by more
/// than [`RICHARDSON_TOL`] relative to `1 + |value|`, else returns the extrapolated value.
pub fn richardson(estimate: impl Fn(f64) -> Result<f64>, h: f64) -> Result<f64> {
    let a = estimate(h)?;
    let b = estimate(h / 2.0)?;
    if (a - b).abs() > RICHARDSON_TOL * (1.0 + b.abs()) {
        return Err(numeric(format!("Richardson check failed: {a} at h vs {b} at h/2")));
    }
    Ok((4.0 * b - a) / 3.0)
}

/// Pfaffian of an antisymmetric matrix by skew Gaussian elimination with pivoting.
pub fn pfaffian(g: &DMatrix<f64>) -> f64 {
    let n = g.nrows();
    if n % 2 == 1 {
        return 0.0;
    }
    let mut a = g.clone();
    let mut pf = 1.0;
    let scale = g.amax().max(f64::MIN_POSITIVE);
    let mut k = 0;
    while k < n {
        // bring the largest entry of row k (beyond the diagonal) to position k+1
        let mut piv = k + 1;
        let mut best = a[(k, k + 1)].abs();
        for j in (k + 2)..n {
            if a[(k, j)].abs() > best {
                best = a[(k, j)].abs();
                piv = j;
            }
        }
        if best <= 1e-300 * scale {
            return 0.0;
        }
        if piv != k + 1 {
            a.swap_rows(k + 1, piv);
            a.swap_columns(k + 1, piv);
            pf = -pf;
        }
        let akk1 = a[(k, k + 1)];
        pf *= akk1;
        for r in (k + 2)..n {
            for s in (k + 2)..n {
                let upd = (a[(k + 1, r)] * a[(k, s)] - a[(k, r)] * a[(k + 1, s)]) / akk1;
                a[(r, s)] += upd;
            }
        }
        k += 2;
    }
    pf
}

/// Gram array and Pfaffian of `beta` at `p`.
pub fn gram_and_pfaffian(beta: &TwoFormField, p: &[f64]) -> Result<(DMatrix<f64>, f64)> {
    if beta.dimension() % 2 == 1 {
        return Err(contract("Pfaffian of an odd-dimensional form"));
    }
    let g = beta.gram_at(p)?;
    let pf = pfaffian(&g);
    Ok((g, pf))
}

/// Which normalization of the top power is used as a volume density.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeConvention {
    /// `beta^n` against coordinate volume.
    Wedge,
    /// `beta^n / n!`.
    #[default]
    Liouville,
}

impl VolumeConvention {
    /// Factor converting a Pfaffian (`beta^n/n!` density) to this convention.
    pub fn factor(self, n: usize) -> f64 {
        match self {
            VolumeConvention::Liouville => 1.0,
            VolumeConvention::Wedge => factorial(n),
        }
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

pub fn top_power_density(beta: &TwoFormField, p: &[f64], convention: VolumeConvention) -> Result<f64> {
    let (_, pf) = gram_and_pfaffian(beta, p)?;
    Ok(convention.factor(beta.dimension() / 2) * pf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_pfaffian(a: &DMatrix<f64>) -> f64 {
        let n = a.nrows();
        if n == 0 {
            return 1.0;
        }
        let mut total = 0.0;
        for j in 1..n {
            let keep: Vec<usize> = (1..n).filter(|&i| i != j).collect();
            let sub = DMatrix::from_fn(n - 2, n - 2, |r, c| a[(keep[r], keep[c])]);
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            total += sign * a[(0, j)] * brute_pfaffian(&sub);
        }
        total
    }

    fn skew(n: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let x = next();
                m[(i, j)] = x;
                m[(j, i)] = -x;
            }
        }
        m
    }

    #[test]
    fn pfaffian_matches_expansion_and_determinant() {
        for n in [2, 4, 6, 8] {
            for seed in 0..5 {
                let m = skew(n, seed + 17 * n as u64);
                let pf = pfaffian(&m);
                assert!((pf - brute_pfaffian(&m)).abs() < 1e-12, "n={n}");
                let det = m.clone().determinant();
                assert!((pf * pf - det).abs() <= 1e-9 * det.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn pfaffian_examples() {
        let w = omega0(2);
        let p = [0.3, -0.1, 0.7, 2.0];
        assert_eq!(gram_and_pfaffian(&w, &p).unwrap().1, 1.0);
        assert_eq!(gram_and_pfaffian(&w.scaled(2.0), &p).unwrap().1, 4.0);
        let degenerate = TwoFormField::from_evaluator(4, |_, v, w| Ok(v[0] * w[1] - v[1] * w[0]));
        assert_eq!(gram_and_pfaffian(&degenerate, &p).unwrap().1, 0.0);
        let odd = TwoFormField::from_evaluator(3, |_, _, _| Ok(0.0));
        assert!(gram_and_pfaffian(&odd, &[0.0; 3]).is_err());
    }

    #[test]
    fn top_power_conventions() {
        let w = omega0(2);
        let p = [0.0; 4];
        assert_eq!(top_power_density(&w, &p, VolumeConvention::Liouville).unwrap(), 1.0);
        assert_eq!(top_power_density(&w, &p, VolumeConvention::Wedge).unwrap(), 2.0);
    }

    #[test]
    fn pullback_examples() {
        let w = omega0(2);
        let e1 = [1.0, 0.0, 0.0, 0.0];
        let e2 = [0.0, 1.0, 0.0, 0.0];
        let p = [0.2, 0.4, -0.5, 1.0];
        let id = pullback_two_form(&SmoothMap::identity(4), &w).unwrap();
        assert_eq!(id.evaluate(&p, &e1, &e2).unwrap(), 1.0);
        let twice = SmoothMap::linear(DMatrix::identity(4, 4) * 2.0);
        let pb = pullback_two_form(&twice, &w).unwrap();
        assert!((pb.evaluate(&p, &e1, &e2).unwrap() - 4.0).abs() < 1e-15);
        // finite-difference Jacobian path
        let fd = SmoothMap::new(4, 4, |p| Ok(p.iter().map(|x| 2.0 * x).collect()));
        let pb = pullback_two_form(&fd, &w).unwrap();
        assert!((pb.evaluate(&p, &e1, &e2).unwrap() - 4.0).abs() < 1e-8);
        assert!(pullback_two_form(&SmoothMap::identity(2), &w).is_err());
    }

    #[test]
    fn exterior_derivative_examples() {
        let eta = |p: &[f64], x: &[f64]| p[0] * x[1];
        let d = exterior_derivative_one_form(&eta, &[0.3, 0.8], &[1.0, 0.0], &[0.0, 1.0], FD_STEP).unwrap();
        assert!((d - 1.0).abs() < 1e-9);
        // dH for H = |z|^2
        let dh = |p: &[f64], x: &[f64]| p.iter().zip(x).map(|(a, b)| 2.0 * a * b).sum::<f64>();
        let v = [0.3, -1.0, 0.2, 0.5];
        let w = [1.1, 0.4, -0.7, 0.0];
        let d = exterior_derivative_one_form(&dh, &[0.1, 0.2, 0.3, 0.4], &v, &w, FD_STEP).unwrap();
        assert!(d.abs() < 1e-8);
        let zero = |_: &[f64], _: &[f64]| 0.0;
        assert_eq!(exterior_derivative_one_form(&zero, &[0.0; 4], &v, &w, FD_STEP).unwrap(), 0.0);
        assert!(exterior_derivative_one_form(&zero, &[0.0; 4], &v, &w, 0.0).is_err());
        let bad = |_: &[f64], _: &[f64]| f64::NAN;
        assert!(exterior_derivative_one_form(&bad, &[0.0; 4], &v, &w, FD_STEP).is_err());
    }

    #[test]
    fn richardson_accepts_smooth_estimates() {
        let eta = |p: &[f64], x: &[f64]| p[0].sin() * p[1] * x[1];
        let est = |h: f64| exterior_derivative_one_form(&eta, &[0.4, 0.9], &[1.0, 0.0], &[0.0, 1.0], h);
        let d = richardson(est, FD_STEP).unwrap();
        assert!((d - 0.4f64.cos() * 0.9).abs() < 1e-9);
    }

    #[test]
    fn gram_agrees_with_basis_evaluation() {
        let f = TwoFormField::from_evaluator(4, |p, v, w| Ok((1.0 + p[0] * p[0]) * omega0_eval(v, w)));
        let p = [0.5, 0.0, 0.0, 0.0];
        let g = f.gram_at(&p).unwrap();
        assert!((g[(0, 1)] - 1.25).abs() < 1e-15);
        assert!((g[(2, 3)] - 1.25).abs() < 1e-15);
        assert_eq!(g[(0, 2)], 0.0);
    }
}

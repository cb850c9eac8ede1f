//! The normal-bundle model `ν = N × C^k` over a surface `N` with a `u(k)` connection, the
//! coupled form `ω_{ν,A}`, its blown-up counterpart and the integral identities used by the
//! action computation.
//!
//! Coordinates on the model are `(b₁, b₂, z)` with `z` interleaved. For a tangent vector
//! `(β, v)` the horizontal fiber part is `v + A(β) z`, and
//! `ω_{ν,A}((β,v),(γ,w)) = ω₀(v + A(β)z, w + A(γ)z) + (β₁γ₂ − β₂γ₁)(a(b) − μ^{F₁₂}(z))`
//! with `F₁₂ = ∂₁A₂ − ∂₂A₁ + [A₁, A₂]` and `μ^ξ(z) = ½ ω₀(ξz, z)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blowup_local::{
    blow_down, blow_down_jacobian, lift_hamiltonian, omega_tilde_glued, sample_shell_points, BlowupPoint,
    StretchProfile,
};
use crate::diffgeo::{exterior_derivative_one_form, factorial, omega0_gram, pfaffian};
use crate::error::{contract, numeric, Result};
use crate::hamloop::LoopSpec;
use crate::local_model::{norm_sq, to_complex, ScalarField};
use crate::quad::{
    ball_integrate, breakpoints, complex_sphere_rule, gauss_legendre, par_map, tube_integrate, tube_integrate_split,
    BundleIntegrand, QuadratureSpec,
};

/// Step for base derivatives of the connection.
pub const CONNECTION_FD_STEP: f64 = 1e-5;

type CMat = DMatrix<Complex64>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    /// Flat torus, chart `[0, 2π)²`.
    #[default]
    Torus2,
    /// Round sphere in the stereographic chart.
    Sphere2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaseManifold {
    pub kind: BaseKind,
    pub area: BigRational,
}

impl BaseManifold {
    pub fn new(kind: BaseKind, area: BigRational) -> Result<Self> {
        if area <= BigRational::from_integer(0.into()) {
            return Err(contract("base area must be positive"));
        }
        Ok(Self { kind, area })
    }

    pub fn area_f64(&self) -> f64 {
        self.area.to_f64().unwrap_or(f64::NAN)
    }

    /// Area density in the chart.
    pub fn density(&self, b: &[f64]) -> f64 {
        let a = self.area_f64();
        match self.kind {
            BaseKind::Torus2 => a / (4.0 * PI * PI),
            BaseKind::Sphere2 => {
                let s = 1.0 + b[0] * b[0] + b[1] * b[1];
                a / PI / (s * s)
            }
        }
    }

    /// Chart points and Lebesgue weights (density not included).
    pub fn chart_nodes(&self, order: usize) -> Vec<([f64; 2], f64)> {
        let m = (2 * order).max(4);
        match self.kind {
            BaseKind::Torus2 => {
                let h = 2.0 * PI / m as f64;
                (0..m * m).map(|i| ([(i / m) as f64 * h, (i % m) as f64 * h], h * h)).collect()
            }
            BaseKind::Sphere2 => {
                let rule = gauss_legendre(order.max(2));
                let h = 2.0 * PI / m as f64;
                let mut out = Vec::new();
                for (lo, hi) in [(0.0, 0.5), (0.5, 1.0)] {
                    for (t, w) in rule.mapped(lo, hi) {
                        let r = t / (1.0 - t);
                        let jac = r / ((1.0 - t) * (1.0 - t));
                        for j in 0..m {
                            let phi = j as f64 * h;
                            out.push(([r * phi.cos(), r * phi.sin()], w * jac * h));
                        }
                    }
                }
                out
            }
        }
    }

    /// A random chart point, uniform for the base area form.
    pub fn sample(&self, rng: &mut impl Rng) -> [f64; 2] {
        match self.kind {
            BaseKind::Torus2 => [2.0 * PI * rng.random::<f64>(), 2.0 * PI * rng.random::<f64>()],
            BaseKind::Sphere2 => {
                let zc: f64 = 2.0 * rng.random::<f64>() - 1.0;
                let phi = 2.0 * PI * rng.random::<f64>();
                let s = (1.0 - zc * zc).sqrt();
                let d = (1.0 - zc).max(1e-12);
                [s * phi.cos() / d, s * phi.sin() / d]
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "preset")]
pub enum ConnectionPreset {
    #[default]
    Flat,
    /// Abelian `A ∝ κ i diag(1, …, k)`.
    Diagonal { kappa: f64 },
    /// Non-commuting coefficients `κ ξ₁`, `κ ξ₂`.
    NonAbelian { kappa: f64 },
}

/// Connection coefficients `(A₁, A₂)` at a base point.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectionData {
    pub a1: CMat,
    pub a2: CMat,
}

fn i_diag(k: usize) -> CMat {
    CMat::from_fn(k, k, |r, c| if r == c { Complex64::new(0.0, (r + 1) as f64) } else { Complex64::new(0.0, 0.0) })
}

fn xi_pair(k: usize) -> (CMat, CMat) {
    let z = Complex64::new(0.0, 0.0);
    let mut x1 = CMat::from_element(k, k, z);
    let mut x2 = CMat::from_element(k, k, z);
    x1[(0, 0)] = Complex64::new(0.0, 1.0);
    x1[(1, 1)] = Complex64::new(0.0, -1.0);
    x2[(0, 1)] = Complex64::new(1.0, 0.0);
    x2[(1, 0)] = Complex64::new(-1.0, 0.0);
    (x1, x2)
}

impl ConnectionPreset {
    pub fn coefficients(&self, kind: BaseKind, k: usize, b: &[f64]) -> ConnectionData {
        let zero = CMat::from_element(k, k, Complex64::new(0.0, 0.0));
        let (b1, b2) = (b[0], b[1]);
        let decay = (-(b1 * b1 + b2 * b2)).exp();
        match (*self, kind) {
            (ConnectionPreset::Flat, _) => ConnectionData { a1: zero.clone(), a2: zero },
            (ConnectionPreset::Diagonal { kappa }, BaseKind::Torus2) => {
                ConnectionData { a1: i_diag(k) * Complex64::new(kappa * b2.sin(), 0.0), a2: zero }
            }
            (ConnectionPreset::Diagonal { kappa }, BaseKind::Sphere2) => ConnectionData {
                a1: i_diag(k) * Complex64::new(-kappa * b2 * decay, 0.0),
                a2: i_diag(k) * Complex64::new(kappa * b1 * decay, 0.0),
            },
            (ConnectionPreset::NonAbelian { kappa }, BaseKind::Torus2) => {
                let (x1, x2) = xi_pair(k);
                ConnectionData { a1: x1 * Complex64::new(kappa * b2.sin(), 0.0), a2: x2 * Complex64::new(kappa * b1.cos(), 0.0) }
            }
            (ConnectionPreset::NonAbelian { kappa }, BaseKind::Sphere2) => {
                let (x1, x2) = xi_pair(k);
                ConnectionData { a1: x1 * Complex64::new(kappa * decay, 0.0), a2: x2 * Complex64::new(kappa * b1 * decay, 0.0) }
            }
        }
    }
}

/// `μ^ξ(z) = ½ ω₀(ξz, z) = −½ Im(z* ξ z)`.
pub fn mu(z: &[Complex64], xi: &CMat) -> f64 {
    let k = z.len();
    let mut s = Complex64::new(0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            s += z[i].conj() * xi[(i, j)] * z[j];
        }
    }
    -0.5 * s.im
}

fn apply(xi: &CMat, z: &[Complex64]) -> Vec<Complex64> {
    (0..z.len()).map(|i| (0..z.len()).map(|j| xi[(i, j)] * z[j]).sum()).collect()
}

fn real(z: &[Complex64]) -> Vec<f64> {
    z.iter().flat_map(|c| [c.re, c.im]).collect()
}

/// Quadrature node on the base with connection data.
#[derive(Clone, Debug)]
pub struct BaseNode {
    pub b: [f64; 2],
    pub weight: f64,
    pub density: f64,
    pub f12: CMat,
}

/// The trivialized normal-bundle model.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalBundleModel {
    pub k: usize,
    pub base: BaseManifold,
    pub conn: ConnectionPreset,
}

impl NormalBundleModel {
    pub fn new(k: usize, base: BaseManifold, conn: ConnectionPreset) -> Result<Self> {
        if k < 2 {
            return Err(contract("fiber rank k must be at least 2"));
        }
        Ok(Self { k, base, conn })
    }

    /// Half-dimension `n = 1 + k`.
    pub fn n(&self) -> usize {
        self.k + 1
    }

    pub fn connection(&self, b: &[f64]) -> ConnectionData {
        self.conn.coefficients(self.base.kind, self.k, b)
    }

    /// `F₁₂ = ∂₁A₂ − ∂₂A₁ + [A₁, A₂]` with central differences on the base.
    pub fn curvature(&self, b: &[f64]) -> CMat {
        let h = CONNECTION_FD_STEP;
        let at = |d1: f64, d2: f64| self.connection(&[b[0] + d1, b[1] + d2]);
        let d1a2 = (at(h, 0.0).a2 - at(-h, 0.0).a2) / Complex64::new(2.0 * h, 0.0);
        let d2a1 = (at(0.0, h).a1 - at(0.0, -h).a1) / Complex64::new(2.0 * h, 0.0);
        let c = self.connection(b);
        d1a2 - d2a1 + &c.a1 * &c.a2 - &c.a2 * &c.a1
    }

    pub fn base_nodes(&self, order: usize) -> Result<Vec<BaseNode>> {
        if order < 2 {
            return Err(contract("base quadrature order must be at least 2"));
        }
        Ok(self
            .base
            .chart_nodes(order)
            .into_iter()
            .map(|(b, weight)| BaseNode { b, weight, density: self.base.density(&b), f12: self.curvature(&b) })
            .collect())
    }

    /// Liouville density of `ω_{ν,A}ⁿ/n!` at a base node: `a(b) − μ^{F₁₂}(z)`.
    pub fn liouville_density_with(&self, node: &BaseNode, z: &[f64]) -> f64 {
        node.density - mu(&to_complex(z), &node.f12)
    }

    pub fn liouville_density(&self, b: &[f64], z: &[f64]) -> f64 {
        self.base.density(b) - mu(&to_complex(z), &self.curvature(b))
    }

    /// Closed-form Liouville volume of the radius-`r` disk bundle.
    pub fn disk_bundle_volume(&self, r: f64) -> f64 {
        PI.powi(self.k as i32) * r.powi(2 * self.k as i32) / factorial(self.k) * self.base.area_f64()
    }
}

/// Gram of the form whose value on `(β, v), (γ, w)` is
/// `Ω(v + β₁X₁ + β₂X₂, w + γ₁X₁ + γ₂X₂) + (β₁γ₂ − β₂γ₁) c`.
pub fn sheared_gram(fiber: &DMatrix<f64>, x1: &[f64], x2: &[f64], c: f64) -> DMatrix<f64> {
    let m = fiber.nrows();
    let mut s = DMatrix::identity(m + 2, m + 2);
    for i in 0..m {
        s[(2 + i, 0)] = x1[i];
        s[(2 + i, 1)] = x2[i];
    }
    let mut b = DMatrix::zeros(m + 2, m + 2);
    b[(0, 1)] = c;
    b[(1, 0)] = -c;
    b.view_mut((2, 2), (m, m)).copy_from(fiber);
    s.transpose() * b * s
}

/// Gram of `ω_{ν,A}` at `(b, z)` in the basis `(∂b₁, ∂b₂, ∂x₁, ∂y₁, …)`, horizontal form.
pub fn omega_nu_a_gram(model: &NormalBundleModel, b: &[f64], z: &[f64]) -> Result<DMatrix<f64>> {
    if b.len() != 2 || z.len() != 2 * model.k {
        return Err(contract("point does not match the model dimensions"));
    }
    let c = model.connection(b);
    let zc = to_complex(z);
    let x1 = real(&apply(&c.a1, &zc));
    let x2 = real(&apply(&c.a2, &zc));
    let coupling = model.base.density(b) - mu(&zc, &model.curvature(b));
    Ok(sheared_gram(&omega0_gram(model.k), &x1, &x2, coupling))
}

/// The same Gram as `ω₀ + π_N^*ω − d⟨μ, A⟩` with the exterior derivative by finite differences.
pub fn omega_nu_a_gram_closed(model: &NormalBundleModel, b: &[f64], z: &[f64], h: f64) -> Result<DMatrix<f64>> {
    if b.len() != 2 || z.len() != 2 * model.k {
        return Err(contract("point does not match the model dimensions"));
    }
    let dim = 2 + 2 * model.k;
    let eta = |p: &[f64], x: &[f64]| {
        let c = model.connection(&p[..2]);
        let a = &c.a1 * Complex64::new(x[0], 0.0) + &c.a2 * Complex64::new(x[1], 0.0);
        mu(&to_complex(&p[2..]), &a)
    };
    let p: Vec<f64> = b.iter().chain(z).copied().collect();
    let mut g = DMatrix::zeros(dim, dim);
    let dens = model.base.density(b);
    g[(0, 1)] = dens;
    g[(1, 0)] = -dens;
    g.view_mut((2, 2), (2 * model.k, 2 * model.k)).copy_from(&omega0_gram(model.k));
    for i in 0..dim {
        for j in (i + 1)..dim {
            let mut ei = vec![0.0; dim];
            let mut ej = vec![0.0; dim];
            ei[i] = 1.0;
            ej[j] = 1.0;
            let d = exterior_derivative_one_form(&eta, &p, &ei, &ej, h)?;
            g[(i, j)] -= d;
            g[(j, i)] += d;
        }
    }
    Ok(g)
}

/// Chart-coordinate velocity of the linear action `ξ` on the blow-up:
/// `δλ = (ξv)_j λ`, `δu = ξv − v (ξv)_j` off slot `j`.
pub fn chart_generator(q: &BlowupPoint, xi: &CMat) -> Vec<f64> {
    let v = q.line();
    let xv = apply(xi, &v);
    let j = q.chart;
    let mut out = vec![xv[j] * q.lambda];
    for (i, (x, vi)) in xv.iter().zip(&v).enumerate() {
        if i != j {
            out.push(x - vi * xv[j]);
        }
    }
    real(&out)
}

/// `μ̃_ρ(q) = μ(F(π(q)))`, with the limit `ρ² μ(w/|w|)` on E.
pub fn lifted_moment(q: &BlowupPoint, xi: &CMat, prof: &StretchProfile) -> f64 {
    let v = q.line();
    let n2: f64 = v.iter().map(|x| x.norm_sqr()).sum();
    let r = q.lambda.norm() * n2.sqrt();
    let f = prof.f(r);
    f * f * mu(&v, xi) / n2
}

/// Gram of `ω̃_{ν̃,A,ρ}` at `(b, q)` in the basis `(∂b₁, ∂b₂, chart coordinates)`.
pub fn omega_tilde_nu_gram(model: &NormalBundleModel, b: &[f64], q: &BlowupPoint, prof: &StretchProfile) -> DMatrix<f64> {
    let c = model.connection(b);
    let x1 = chart_generator(q, &c.a1);
    let x2 = chart_generator(q, &c.a2);
    let coupling = model.base.density(b) - lifted_moment(q, &model.curvature(b), prof);
    sheared_gram(&omega_tilde_glued(q, prof), &x1, &x2, coupling)
}

/// `π̃^* ω_{ν,A}` at `(b, q)` in the same basis.
pub fn pullback_omega_nu_gram(model: &NormalBundleModel, b: &[f64], q: &BlowupPoint) -> Result<DMatrix<f64>> {
    let g = omega_nu_a_gram(model, b, &blow_down(q))?;
    let m = 2 * model.k;
    let mut j = DMatrix::identity(m + 2, m + 2);
    j.view_mut((2, 2), (m, m)).copy_from(&blow_down_jacobian(q));
    Ok(j.transpose() * g * j)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NondegeneracyScan {
    pub radii: Vec<f64>,
    /// Minimum Pfaffian over samples in the radius-`r` disk bundle (cumulative over radii).
    pub min_pfaffian: Vec<f64>,
    /// Largest radius whose disk bundle passes, if any.
    pub verified_radius: Option<f64>,
}

/// Threshold for a nondegenerate Pfaffian.
pub const PFAFFIAN_FLOOR: f64 = 1e-9;

pub fn nondegeneracy_radius_scan(model: &NormalBundleModel, radii: &[f64], samples: usize, seed: u64) -> Result<NondegeneracyScan> {
    if radii.windows(2).any(|w| w[1] <= w[0]) || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(contract("radii must be positive and increasing"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 2 * model.k;
    let pts: Vec<([f64; 2], Vec<f64>)> = (0..samples.max(1))
        .map(|_| (model.base.sample(&mut rng), crate::local_model::sample_ball(&mut rng, dim, 1.0)))
        .collect();
    let mut running = f64::INFINITY;
    let mut min_pfaffian = Vec::with_capacity(radii.len());
    let mut verified_radius = None;
    for &r in radii {
        let vals = par_map(&pts, |(b, y)| -> Result<f64> {
            let z: Vec<f64> = y.iter().map(|x| x * r).collect();
            Ok(pfaffian(&omega_nu_a_gram(model, b, &z)?))
        });
        for v in vals {
            running = running.min(v?);
        }
        min_pfaffian.push(running);
        if running > PFAFFIAN_FLOOR {
            verified_radius = Some(r);
        }
    }
    Ok(NondegeneracyScan { radii: radii.to_vec(), min_pfaffian, verified_radius })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PullbackReport {
    /// Sup over samples with `ρ+ε < |π(q)| < r_max`.
    pub outside: f64,
    /// Sup over samples inside the `(ρ+ε)`-tube (diagnostic).
    pub inside: f64,
}

/// `sup ‖π̃^*ω_{ν,A} − ω̃_{ν̃,A,ρ}‖` (max entry) inside and outside the `(ρ+ε)`-tube.
pub fn pullback_identity_defect(
    model: &NormalBundleModel,
    prof: &StretchProfile,
    r_max: f64,
    samples: usize,
    seed: u64,
) -> Result<PullbackReport> {
    let outer = prof.outer();
    if !(r_max > outer) {
        return Err(contract("test region must extend past rho + eps"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let run = |pts: Vec<BlowupPoint>, rng: &mut ChaCha8Rng| -> Result<f64> {
        let bs: Vec<[f64; 2]> = pts.iter().map(|_| model.base.sample(rng)).collect();
        let mut worst: f64 = 0.0;
        for (q, b) in pts.iter().zip(&bs) {
            let up = omega_tilde_nu_gram(model, b, q, prof);
            let down = pullback_omega_nu_gram(model, b, q)?;
            worst = worst.max((up - down).amax());
        }
        Ok(worst)
    };
    let outside = run(sample_shell_points(model.k, outer * (1.0 + 1e-9), r_max, samples, seed), &mut rng)?;
    let inside = run(sample_shell_points(model.k, 0.1 * outer, outer, samples, seed ^ 0x5eed), &mut rng)?;
    Ok(PullbackReport { outside, inside })
}

/// A point of the blown-up model: downstairs outside the tube, or a chart point over `b`.
#[derive(Clone, Debug, PartialEq)]
pub enum BundlePoint {
    Outside { b: [f64; 2], z: Vec<f64> },
    Chart { b: [f64; 2], q: BlowupPoint },
}

/// `H̃_{N,t}` for a fiberwise S¹-invariant `H` that is constant along the base.
pub fn lifted_hamiltonian_n(
    model: &NormalBundleModel,
    h: &ScalarField,
    prof: &StretchProfile,
    t: f64,
    point: &BundlePoint,
) -> Result<f64> {
    if !h.is_s1_invariant() {
        return Err(contract("lifted Hamiltonian needs a fiberwise S1-invariant H"));
    }
    match point {
        BundlePoint::Outside { z, .. } => {
            if z.len() != 2 * model.k {
                return Err(contract("fiber point has the wrong dimension"));
            }
            if norm_sq(z).sqrt() < prof.outer() {
                return Err(contract("downstairs representative must lie outside the (rho+eps)-tube"));
            }
            Ok(h.evaluate(t, z))
        }
        BundlePoint::Chart { q, .. } => {
            if q.k() != model.k {
                return Err(contract("chart point has the wrong rank"));
            }
            lift_hamiltonian(h, t, q, prof)
        }
    }
}

/// `H̃_{N,t}` for the loop Hamiltonian.
pub fn lifted_loop_hamiltonian_n(spec: &LoopSpec, model: &NormalBundleModel, t: f64, point: &BundlePoint) -> Result<f64> {
    if !(0.0..=2.0).contains(&t) {
        return Err(contract("loop time must lie in [0, 2]"));
    }
    lifted_hamiltonian_n(model, &spec.scalar_field(), &spec.stretch_profile()?, t, point)
}

/// `(π_N)_*(H ω₀ᵏ/k!)(b)` over the radius-`r` fiber ball.
pub fn fiber_integrate(model: &NormalBundleModel, h: &BundleIntegrand, b: &[f64], r: f64, quad: &QuadratureSpec) -> Result<f64> {
    let f = |z: &[f64]| h(b, z);
    Ok(ball_integrate(&f, 2 * model.k, r, quad)?.checked()?.value)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TotalIntegral {
    /// `∫_{𝒰_r} H ω_{ν,A}ⁿ/n!`.
    pub lhs: f64,
    /// `∫_N (π_N)_*(H ω₀ᵏ/k!) ω`.
    pub rhs: f64,
}

pub fn total_integral_check(model: &NormalBundleModel, h: &BundleIntegrand, r: f64, quad: &QuadratureSpec) -> Result<TotalIntegral> {
    let lhs = tube_integrate(model, h, 0.0, r, quad)?.value;
    let nodes = model.base_nodes(quad.order)?;
    let parts = par_map(&nodes, |n| fiber_integrate(model, h, &n.b, r, quad).map(|v| v * n.weight * n.density));
    let mut rhs = 0.0;
    for p in parts {
        rhs += p?;
    }
    Ok(TotalIntegral { lhs, rhs })
}

/// Rational volume and period data of the ambient manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelManifoldBudget {
    pub vol_m: BigRational,
    pub c: BigRational,
}

impl ModelManifoldBudget {
    pub fn new(vol_m: BigRational, c: BigRational) -> Result<Self> {
        let zero = BigRational::from_integer(0.into());
        if vol_m <= zero || c < zero {
            return Err(contract("need VolM > 0 and c >= 0"));
        }
        Ok(Self { vol_m, c })
    }

    pub fn vol_m_f64(&self) -> f64 {
        self.vol_m.to_f64().unwrap_or(f64::NAN)
    }

    /// Checks `VolM` exceeds the volume of the `ε₀` disk bundle.
    pub fn validate(&self, model: &NormalBundleModel, eps0: f64) -> Result<()> {
        let tube = model.disk_bundle_volume(eps0);
        if self.vol_m_f64() <= tube {
            return Err(contract(format!("VolM must exceed the eps0 tube volume {tube}")));
        }
        Ok(())
    }
}

/// Integral over the blow-up chart of `φ(|F(π q)|) · ω̃_{ν̃,A,ρ}ⁿ/n!` for `|π(q)| < r_out`.
///
/// The base enters only through its area and `∫_N F₁₂`, since the integrand is fiberwise radial
/// and the Liouville density is `(a(b) − μ̃^{F₁₂}) Pf(ω̃)`.
pub fn chart_tube_integral(
    model: &NormalBundleModel,
    prof: &StretchProfile,
    phi: &(dyn Fn(f64) -> f64 + Sync),
    radial_breaks: &[f64],
    r_out: f64,
    order: usize,
) -> Result<f64> {
    let nodes = model.base_nodes(order)?;
    let area: f64 = nodes.iter().map(|n| n.weight * n.density).sum();
    let k = model.k;
    let mut fbar = CMat::from_element(k, k, Complex64::new(0.0, 0.0));
    for n in &nodes {
        fbar += &n.f12 * Complex64::new(n.weight, 0.0);
    }
    let mut inner = vec![prof.eps, prof.outer()];
    inner.extend_from_slice(radial_breaks);
    let s_breaks = breakpoints(0.0, r_out, &inner);
    let rule = gauss_legendre(order);
    let s_nodes: Vec<(f64, f64)> = s_breaks.windows(2).flat_map(|w| rule.mapped(w[0], w[1]).collect::<Vec<_>>()).collect();
    let m = k - 1;
    let sphere = complex_sphere_rule(m, order);
    let mut u_nodes = Vec::new();
    for (lo, hi) in [(0.0, 0.5), (0.5, 1.0)] {
        for (tau, w) in rule.mapped(lo, hi) {
            let ru = tau / (1.0 - tau);
            let jac = w * ru.powi(2 * m as i32 - 1) / ((1.0 - tau) * (1.0 - tau));
            for (x, ws) in sphere.iter() {
                let u: Vec<Complex64> = x.chunks_exact(2).map(|c| Complex64::new(ru * c[0], ru * c[1])).collect();
                u_nodes.push((u, jac * ws));
            }
        }
    }
    let parts = par_map(&u_nodes, |(u, wu)| -> Result<f64> {
        let n2 = 1.0 + u.iter().map(|x| x.norm_sqr()).sum::<f64>();
        let nv = n2.sqrt();
        let mut acc = 0.0;
        for &(s, ws) in &s_nodes {
            let q = BlowupPoint::new(0, Complex64::new(s / nv, 0.0), u.clone())?;
            let pf = pfaffian(&omega_tilde_glued(&q, prof));
            let dens = area - lifted_moment(&q, &fbar, prof);
            let f = prof.f(s);
            acc += ws * 2.0 * PI * s / n2 * pf * phi(f) * dens;
        }
        Ok(acc * wu)
    });
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    if !total.is_finite() {
        return Err(numeric("non-finite chart integral"));
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlowupIntegral {
    /// Chart part over `|π(q)| < ε′`.
    pub chart: f64,
    /// Downstairs part over `ε′ < |z| < ε₀`.
    pub exterior: f64,
    pub total: f64,
    pub error_estimate: f64,
}

/// `∫ φ(|F(π q)|) ω̃ⁿ/n!` over the blown-up `ε₀`-tube, split at `ε′`.
pub fn blowup_side_integral(
    model: &NormalBundleModel,
    prof: &StretchProfile,
    phi: &(dyn Fn(f64) -> f64 + Sync),
    radial_breaks: &[f64],
    eps_prime: f64,
    eps0: f64,
    quad: &QuadratureSpec,
) -> Result<BlowupIntegral> {
    if !(prof.outer() < eps_prime && eps_prime < eps0) {
        return Err(contract("need rho + eps < eps' < eps0"));
    }
    let lo = chart_tube_integral(model, prof, phi, radial_breaks, eps_prime, quad.order)?;
    let chart = chart_tube_integral(model, prof, phi, radial_breaks, eps_prime, quad.order + 4)?;
    let f = |_: &[f64], z: &[f64]| phi(norm_sq(z).sqrt());
    let ext = tube_integrate_split(model, &f, eps_prime, eps0, radial_breaks, quad)?;
    Ok(BlowupIntegral {
        chart,
        exterior: ext.value,
        total: chart + ext.value,
        error_estimate: (chart - lo).abs() + ext.error_estimate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HamFuncRel {
    /// `∫_{M̃_N} H̃_{N,t} ω̃ⁿ/n!`, blow-up side.
    pub lhs: f64,
    /// `∫_M H_t ωⁿ/n!`.
    pub rhs1: f64,
    /// `∫_{𝒰_ρ} H_t ωⁿ/n!`.
    pub rhs2: f64,
    /// `∫ |H_t|` over the `ε₀`-tube with unit time coefficient.
    pub scale: f64,
}

impl HamFuncRel {
    pub fn defect(&self) -> f64 {
        (self.lhs - (self.rhs1 - self.rhs2)).abs()
    }
}

/// The identity `∫_{M̃} H̃ ω̃ⁿ = ∫_M H ωⁿ − ∫_{𝒰_ρ} H ωⁿ` for a fiberwise radial `H = φ(|z|)`.
#[allow(clippy::too_many_arguments)]
pub fn hamfuncrel_radial(
    model: &NormalBundleModel,
    prof: &StretchProfile,
    phi: &(dyn Fn(f64) -> f64 + Sync),
    support: f64,
    radial_breaks: &[f64],
    eps_prime: f64,
    eps0: f64,
    quad: &QuadratureSpec,
) -> Result<HamFuncRel> {
    if support > eps0 {
        return Err(contract("Hamiltonian support leaks past eps0"));
    }
    let lhs = blowup_side_integral(model, prof, phi, radial_breaks, eps_prime, eps0, quad)?.total;
    let f = |_: &[f64], z: &[f64]| phi(norm_sq(z).sqrt());
    let rhs1 = tube_integrate_split(model, &f, 0.0, eps0, radial_breaks, quad)?.value;
    let rhs2 = tube_integrate_split(model, &f, 0.0, prof.rho, radial_breaks, quad)?.value;
    let g = |_: &[f64], z: &[f64]| phi(norm_sq(z).sqrt()).abs();
    let scale = tube_integrate_split(model, &g, 0.0, eps0, radial_breaks, quad)?.value;
    Ok(HamFuncRel { lhs, rhs1, rhs2, scale })
}

/// [`hamfuncrel_radial`] for the loop Hamiltonian at time `t`.
pub fn hamfuncrel_check(
    spec: &LoopSpec,
    model: &NormalBundleModel,
    budget: &ModelManifoldBudget,
    eps_prime: f64,
    t: f64,
    quad: &QuadratureSpec,
) -> Result<HamFuncRel> {
    if !(0.0..=2.0).contains(&t) {
        return Err(contract("loop time must lie in [0, 2]"));
    }
    budget.validate(model, spec.eps0)?;
    let prof = spec.stretch_profile()?;
    let a = spec.a(t);
    let phi = |r: f64| a * spec.spatial(r);
    let mut rep = hamfuncrel_radial(model, &prof, &phi, spec.bump.support, &spec.bump.breaks(), eps_prime, spec.eps0, quad)?;
    if a != 0.0 {
        rep.scale /= a.abs();
    } else {
        let unit = |r: f64| spec.spatial(r);
        let f = |_: &[f64], z: &[f64]| unit(norm_sq(z).sqrt()).abs();
        rep.scale = tube_integrate_split(model, &f, 0.0, spec.eps0, &spec.bump.breaks(), quad)?.value;
    }
    Ok(rep)
}

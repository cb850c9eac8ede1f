//! The model `(C^k, ω₀)`: Hamiltonian fields, flows, the U(k) moment map and S¹-invariance.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffgeo::{omega0_eval, FD_STEP};
use crate::error::{contract, domain, numeric, Result};
use crate::quad::gauss_legendre;

type TimeFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync;
type RadialFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// `H(t, z) = value(t, |z|²)` together with `∂H/∂s`.
#[derive(Clone)]
pub struct RadialProfile {
    pub value: Arc<RadialFn>,
    pub ds: Arc<RadialFn>,
}

/// A (possibly time-dependent) function on a chart.
#[derive(Clone)]
pub struct ScalarField {
    pub time_dependent: bool,
    eval: Arc<TimeFn>,
    grad: Option<Arc<GradFn>>,
    radial: Option<RadialProfile>,
    /// Trajectories leaving this radius raise a domain error.
    pub domain_radius: Option<f64>,
    s1_invariant: bool,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("time_dependent", &self.time_dependent)
            .field("analytic_gradient", &self.grad.is_some())
            .field("radial", &self.radial.is_some())
            .field("s1_invariant", &self.s1_invariant)
            .finish()
    }
}

impl ScalarField {
    pub fn new(time_dependent: bool, eval: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { time_dependent, eval: Arc::new(eval), grad: None, radial: None, domain_radius: None, s1_invariant: false }
    }

    pub fn with_gradient(mut self, grad: impl Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn with_domain(mut self, radius: f64) -> Self {
        self.domain_radius = Some(radius);
        self
    }

    /// Declares invariance under scalar unitaries without a radial profile.
    pub fn assume_s1_invariant(mut self) -> Self {
        self.s1_invariant = true;
        self
    }

    /// `H(t, z) = value(t, |z|²)`; gradient `2 ∂_s H · z`.
    pub fn radial(
        time_dependent: bool,
        value: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        ds: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let value: Arc<RadialFn> = Arc::new(value);
        let ds: Arc<RadialFn> = Arc::new(ds);
        let (v2, d2) = (value.clone(), ds.clone());
        Self {
            time_dependent,
            eval: Arc::new(move |t, z| v2(t, norm_sq(z))),
            grad: Some(Arc::new(move |t, z| {
                let d = 2.0 * d2(t, norm_sq(z));
                z.iter().map(|x| d * x).collect()
            })),
            radial: Some(RadialProfile { value, ds }),
            domain_radius: None,
            s1_invariant: true,
        }
    }

    /// `c |z|²`.
    pub fn quadratic(c: f64) -> Self {
        Self::radial(false, move |_, s| c * s, move |_, _| c)
    }

    pub fn zero() -> Self {
        Self::radial(false, |_, _| 0.0, |_, _| 0.0)
    }

    pub fn evaluate(&self, t: f64, z: &[f64]) -> f64 {
        (self.eval)(if self.time_dependent { t } else { 0.0 }, z)
    }

    pub fn radial_profile(&self) -> Option<&RadialProfile> {
        self.radial.as_ref()
    }

    pub fn is_s1_invariant(&self) -> bool {
        self.s1_invariant
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.grad.is_some()
    }

    /// Analytic gradient when registered, else central differences.
    pub fn gradient(&self, t: f64, z: &[f64]) -> Result<Vec<f64>> {
        let t = if self.time_dependent { t } else { 0.0 };
        let g = match &self.grad {
            Some(g) => g(t, z),
            None => self.fd_gradient(t, z, FD_STEP),
        };
        if g.iter().any(|x| !x.is_finite()) {
            return Err(numeric("non-finite gradient"));
        }
        Ok(g)
    }

    pub fn fd_gradient(&self, t: f64, z: &[f64], h: f64) -> Vec<f64> {
        let mut q = z.to_vec();
        (0..z.len())
            .map(|i| {
                q[i] = z[i] + h;
                let a = (self.eval)(t, &q);
                q[i] = z[i] - h;
                let b = (self.eval)(t, &q);
                q[i] = z[i];
                (a - b) / (2.0 * h)
            })
            .collect()
    }

    /// `H - c`.
    pub fn shifted(&self, c: f64) -> Self {
        let inner = self.clone();
        let mut out = Self::new(self.time_dependent, move |t, z| inner.evaluate(t, z) - c);
        if let Some(g) = &self.grad {
            let g = g.clone();
            out.grad = Some(Arc::new(move |t, z| g(t, z)));
        }
        if let Some(r) = &self.radial {
            let (v, d) = (r.value.clone(), r.ds.clone());
            out.radial = Some(RadialProfile { value: Arc::new(move |t, s| v(t, s) - c), ds: d });
        }
        out.domain_radius = self.domain_radius;
        out.s1_invariant = self.s1_invariant;
        out
    }
}

pub fn norm_sq(z: &[f64]) -> f64 {
    z.iter().map(|x| x * x).sum()
}

/// The sign σ in `ω₀(X_H, ·) = σ dH`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignConvention {
    pub sigma: i8,
}

impl Default for SignConvention {
    /// σ = −1: `H = π|z|²` generates `z ↦ e^{2πit} z`.
    fn default() -> Self {
        Self { sigma: -1 }
    }
}

impl SignConvention {
    pub fn new(sigma: i8) -> Result<Self> {
        if sigma == 1 || sigma == -1 {
            Ok(Self { sigma })
        } else {
            Err(contract("sigma must be +1 or -1"))
        }
    }

    pub fn opposite(self) -> Self {
        Self { sigma: -self.sigma }
    }

    pub fn value(self) -> f64 {
        self.sigma as f64
    }
}

/// A k×k anti-Hermitian matrix acting on `C^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct AntiHermitianGenerator {
    pub k: usize,
    /// Row-major entries.
    pub entries: Vec<Complex64>,
}

impl AntiHermitianGenerator {
    pub fn new(k: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != k * k {
            return Err(contract("generator needs k*k entries"));
        }
        for i in 0..k {
            for j in 0..k {
                let d = entries[i * k + j] + entries[j * k + i].conj();
                if d.norm() > 1e-12 {
                    return Err(contract("generator is not anti-Hermitian"));
                }
            }
        }
        Ok(Self { k, entries })
    }

    /// `i·diag(d)`.
    pub fn diagonal(d: &[f64]) -> Self {
        let k = d.len();
        let mut e = vec![Complex64::new(0.0, 0.0); k * k];
        for (i, x) in d.iter().enumerate() {
            e[i * k + i] = Complex64::new(0.0, *x);
        }
        Self { k, entries: e }
    }

    pub fn scalar(k: usize, c: f64) -> Self {
        Self::diagonal(&vec![c; k])
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.k + j]
    }

    pub fn add(&self, o: &Self) -> Self {
        Self { k: self.k, entries: self.entries.iter().zip(&o.entries).map(|(a, b)| a + b).collect() }
    }

    /// `ξ z` on interleaved real coordinates.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let zc = to_complex(z);
        from_complex(&self.apply_complex(&zc))
    }

    pub fn apply_complex(&self, z: &[Complex64]) -> Vec<Complex64> {
        (0..self.k).map(|i| (0..self.k).map(|j| self.get(i, j) * z[j]).sum()).collect()
    }
}

pub fn to_complex(z: &[f64]) -> Vec<Complex64> {
    z.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

pub fn from_complex(z: &[Complex64]) -> Vec<f64> {
    z.iter().flat_map(|c| [c.re, c.im]).collect()
}

/// `X` with `ω₀(X, ·) = σ dH_t` at `p`.
pub fn hamiltonian_vector_field(h: &ScalarField, t: f64, p: &[f64], conv: SignConvention) -> Result<Vec<f64>> {
    if p.len() % 2 == 1 {
        return Err(contract("point must lie in R^{2k}"));
    }
    let g = h.gradient(t, p)?;
    Ok(symplectic_gradient(&g, conv))
}

/// Per complex coordinate: `X_x = σ H_y`, `X_y = −σ H_x`.
pub fn symplectic_gradient(grad: &[f64], conv: SignConvention) -> Vec<f64> {
    let s = conv.value();
    grad.chunks_exact(2).flat_map(|g| [s * g[1], -s * g[0]]).collect()
}

/// Time-dependent vector field on a chart.
pub type VectorField<'a> = dyn Fn(f64, &[f64]) -> Result<Vec<f64>> + 'a;

/// Classical fixed-step RK4 for `dp/dt = field(t, p)`.
pub fn rk4(
    field: &VectorField,
    p0: &[f64],
    t0: f64,
    t1: f64,
    steps: usize,
    mut check: impl FnMut(&[f64]) -> Result<()>,
) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(contract("steps must be at least 1"));
    }
    let h = (t1 - t0) / steps as f64;
    let mut p = p0.to_vec();
    let n = p.len();
    let mut tmp = vec![0.0; n];
    for i in 0..steps {
        let t = t0 + h * i as f64;
        let k1 = field(t, &p)?;
        for j in 0..n {
            tmp[j] = p[j] + 0.5 * h * k1[j];
        }
        let k2 = field(t + 0.5 * h, &tmp)?;
        for j in 0..n {
            tmp[j] = p[j] + 0.5 * h * k2[j];
        }
        let k3 = field(t + 0.5 * h, &tmp)?;
        for j in 0..n {
            tmp[j] = p[j] + h * k3[j];
        }
        let k4 = field(t + h, &tmp)?;
        for j in 0..n {
            p[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        check(&p)?;
    }
    Ok(p)
}

/// RK4 integration of the Hamiltonian flow from `t0` to `t1`.
pub fn flow(h: &ScalarField, p0: &[f64], t0: f64, t1: f64, steps: usize, conv: SignConvention) -> Result<Vec<f64>> {
    let field = |t: f64, p: &[f64]| hamiltonian_vector_field(h, t, p, conv);
    let radius = h.domain_radius;
    rk4(&field, p0, t0, t1, steps, |p| {
        if p.iter().any(|x| !x.is_finite()) {
            return Err(domain("trajectory became non-finite"));
        }
        match radius {
            Some(r) if norm_sq(p).sqrt() > r => Err(domain("trajectory left the declared domain")),
            _ => Ok(()),
        }
    })
}

/// Closed-form flow of a radial Hamiltonian: rotation by `∫ −2σ ∂_sH dt`.
pub fn rotation_oracle(h: &ScalarField, p0: &[f64], t0: f64, t1: f64, conv: SignConvention) -> Result<Vec<f64>> {
    let mut breaks = vec![t0];
    let (lo, hi) = (t0.min(t1), t0.max(t1));
    let mut m = lo.floor() + 1.0;
    while m < hi {
        breaks.push(m);
        m += 1.0;
    }
    if t1 < t0 {
        breaks[1..].reverse();
    }
    breaks.push(t1);
    rotation_oracle_split(h, p0, &breaks, conv)
}

/// [`rotation_oracle`] with the time interval split at `breaks` (first and last are the ends).
pub fn rotation_oracle_split(h: &ScalarField, p0: &[f64], breaks: &[f64], conv: SignConvention) -> Result<Vec<f64>> {
    let rad = h.radial_profile().ok_or_else(|| contract("rotation oracle needs a radial Hamiltonian"))?;
    let s = norm_sq(p0);
    let rule = gauss_legendre(64);
    let rate: f64 = breaks.windows(2).map(|w| rule.integrate(w[0], w[1], |t| (rad.ds)(t, s))).sum();
    let theta = -2.0 * conv.value() * rate;
    Ok(rotate(p0, theta))
}

/// `e^{iθ} z`.
pub fn rotate(z: &[f64], theta: f64) -> Vec<f64> {
    let (s, c) = theta.sin_cos();
    z.chunks_exact(2).flat_map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]]).collect()
}

/// `μ^ξ(z) = (σ/2) ω₀(ξz, z)`, normalized by `μ(0) = 0`.
pub fn moment_map(z: &[f64], xi: &AntiHermitianGenerator, conv: SignConvention) -> Result<f64> {
    if z.len() != 2 * xi.k {
        return Err(contract("rank mismatch between point and generator"));
    }
    Ok(0.5 * conv.value() * omega0_eval(&xi.apply(z), z))
}

/// `sup |H_t(λz) − H_t(z)|` over sampled `z` and `λ ∈ S¹`.
pub fn s1_invariance_defect(h: &ScalarField, t: f64, dim: usize, samples: usize, seed: u64) -> f64 {
    let radius = h.domain_radius.unwrap_or(2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples.max(1) {
        let z = sample_ball(&mut rng, dim, radius);
        let theta = rng.random::<f64>() * 2.0 * PI;
        let d = (h.evaluate(t, &rotate(&z, theta)) - h.evaluate(t, &z)).abs();
        worst = worst.max(d);
    }
    worst
}

/// Uniform sample from the Euclidean ball of the given radius.
pub fn sample_ball(rng: &mut impl Rng, dim: usize, radius: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = norm_sq(&v).sqrt();
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    for x in v.iter_mut() {
        *x *= r / n;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_field_examples() {
        let h = ScalarField::quadratic(PI);
        let z = [0.3, -0.4, 1.0, 0.5];
        let x = hamiltonian_vector_field(&h, 0.0, &z, SignConvention::default()).unwrap();
        // 2πi z
        let expect = [2.0 * PI * 0.4, 2.0 * PI * 0.3, -2.0 * PI * 0.5, 2.0 * PI * 1.0];
        for (a, b) in x.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let c = ScalarField::new(false, |_, _| 3.0);
        let x = hamiltonian_vector_field(&c, 0.0, &z, SignConvention::default()).unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-9));
        let x1 = ScalarField::new(false, |_, z| z[0]);
        let x = hamiltonian_vector_field(&x1, 0.0, &[0.2, 0.7], SignConvention::default()).unwrap();
        assert!(x[0].abs() < 1e-9 && (x[1] - 1.0).abs() < 1e-9);
        let x = hamiltonian_vector_field(&x1, 0.0, &[0.2, 0.7], SignConvention::default().opposite()).unwrap();
        assert!((x[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn defining_identity_of_the_field() {
        // ω₀(X, v) = σ dH(v)
        let h = ScalarField::new(false, |_, z| z[0] * z[0] * z[3] + (z[1] - z[2]).sin());
        let p = [0.3, 0.1, -0.7, 0.9];
        for conv in [SignConvention::default(), SignConvention::default().opposite()] {
            let x = hamiltonian_vector_field(&h, 0.0, &p, conv).unwrap();
            let g = h.gradient(0.0, &p).unwrap();
            for i in 0..4 {
                let mut v = [0.0; 4];
                v[i] = 1.0;
                assert!((omega0_eval(&x, &v) - conv.value() * g[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn flow_examples() {
        let h = ScalarField::quadratic(PI);
        let conv = SignConvention::default();
        let z = [0.3, -0.4, 1.0, 0.5];
        let full = flow(&h, &z, 0.0, 1.0, 2000, conv).unwrap();
        assert!(full.iter().zip(&z).all(|(a, b)| (a - b).abs() < 1e-9));
        let quarter = flow(&h, &z, 0.0, 0.25, 2000, conv).unwrap();
        let iz = [0.4, 0.3, -0.5, 1.0];
        assert!(quarter.iter().zip(iz).all(|(a, b)| (a - b).abs() < 1e-9));
        // H = π α'(t)|z|² with α = t²
        let h2 = ScalarField::radial(true, |t, s| PI * 2.0 * t * s, |t, _| PI * 2.0 * t);
        let rk = flow(&h2, &z, 0.0, 1.0, 2000, conv).unwrap();
        let oracle = rotation_oracle(&h2, &z, 0.0, 1.0, conv).unwrap();
        for ((a, b), c) in rk.iter().zip(&oracle).zip(&z) {
            assert!((a - b).abs() < 1e-8);
            assert!((b - c).abs() < 1e-12);
        }
        assert!(flow(&h, &z, 0.0, 1.0, 0, conv).is_err());
        let escaping = ScalarField::new(false, |_, z| -z[1]).with_domain(1.5);
        assert!(matches!(flow(&escaping, &[1.0, 0.0], 0.0, 2.0, 100, conv), Err(crate::Error::Domain(_))));
    }

    #[test]
    fn moment_map_examples() {
        let conv = SignConvention::default();
        let xi = AntiHermitianGenerator::scalar(1, 1.0);
        let v = moment_map(&[0.6, 0.8], &xi, conv).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        assert!((moment_map(&[0.6, 0.8], &xi, conv.opposite()).unwrap() + 0.5).abs() < 1e-15);
        let a = AntiHermitianGenerator::diagonal(&[1.0, -2.0]);
        let b = AntiHermitianGenerator::diagonal(&[0.5, 3.0]);
        assert_eq!(moment_map(&[0.0; 4], &a, conv).unwrap(), 0.0);
        let z = [0.3, -0.2, 1.1, 0.4];
        let sum = moment_map(&z, &a.add(&b), conv).unwrap();
        let parts = moment_map(&z, &a, conv).unwrap() + moment_map(&z, &b, conv).unwrap();
        assert!((sum - parts).abs() < 1e-14);
        assert!(AntiHermitianGenerator::new(1, vec![Complex64::new(1.0, 0.0)]).is_err());
    }

    #[test]
    fn moment_map_generates_the_action() {
        // dμ^ξ = σ ι_{X_ξ} ω₀ with X_ξ = ξ z
        let e = vec![
            Complex64::new(0.0, 0.7),
            Complex64::new(0.3, -0.2),
            Complex64::new(-0.3, -0.2),
            Complex64::new(0.0, -1.1),
        ];
        let xi = AntiHermitianGenerator::new(2, e).unwrap();
        let z = [0.4, -0.9, 0.2, 0.5];
        for conv in [SignConvention::default(), SignConvention::default().opposite()] {
            let h = 1e-6;
            let xz = xi.apply(&z);
            for i in 0..4 {
                let mut zp = z;
                zp[i] += h;
                let mut zm = z;
                zm[i] -= h;
                let d = (moment_map(&zp, &xi, conv).unwrap() - moment_map(&zm, &xi, conv).unwrap()) / (2.0 * h);
                let mut v = [0.0; 4];
                v[i] = 1.0;
                assert!((d - conv.value() * omega0_eval(&xz, &v)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn invariance_defect_examples() {
        let quad = ScalarField::quadratic(2.5);
        assert!(s1_invariance_defect(&quad, 0.0, 4, 200, 1) < 1e-12);
        let x1 = ScalarField::new(false, |_, z| z[0]);
        assert!(s1_invariance_defect(&x1, 0.0, 4, 200, 1) > 0.1);
    }
}

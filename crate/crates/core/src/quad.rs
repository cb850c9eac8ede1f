//! Integration engines: Gauss–Legendre rules, product rules over balls, radial reduction,
//! tube integrals over disk bundles and seeded Monte Carlo.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bundle::NormalBundleModel;
use crate::error::{contract, numeric, Result};

/// Order used by [`radial_reduce`].
pub const RADIAL_ORDER: usize = 64;

/// Nodes and weights on `[-1, 1]`.
#[derive(Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    fn compute(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// `∫_a^b f`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let (c, h) = ((a + b) / 2.0, (b - a) / 2.0);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(c + h * x);
        }
        s * h
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (c, h) = ((a + b) / 2.0, (b - a) / 2.0);
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (c + h * x, w * h))
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for j in 2..=n {
        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Cached Gauss–Legendre rule of order `n`.
pub fn gauss_legendre(n: usize) -> Arc<GaussRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut guard = cache.lock().expect("gauss cache poisoned");
    guard.entry(n.max(1)).or_insert_with(|| Arc::new(GaussRule::compute(n.max(1)))).clone()
}

/// Sorted, deduplicated breakpoints clipped to `[a, b]`, including both ends.
pub fn breakpoints(a: f64, b: f64, inner: &[f64]) -> Vec<f64> {
    let mut v = vec![a];
    let mut rest: Vec<f64> = inner.iter().copied().filter(|&x| x > a && x < b).collect();
    rest.sort_by(|x, y| x.total_cmp(y));
    for x in rest {
        if x - v[v.len() - 1] > 1e-14 * (1.0 + x.abs()) {
            v.push(x);
        }
    }
    if b > v[v.len() - 1] {
        v.push(b);
    }
    v
}

/// Composite Gauss rule over consecutive breakpoints.
pub fn integrate_split(f: impl Fn(f64) -> f64, breaks: &[f64], order: usize) -> f64 {
    let rule = gauss_legendre(order);
    breaks.windows(2).map(|w| rule.integrate(w[0], w[1], &f)).sum()
}

/// Area of the unit sphere `S^{dim-1}`.
pub fn sphere_area(dim: usize) -> f64 {
    // 2 pi^{d/2} / Gamma(d/2)
    let half = dim as f64 / 2.0;
    2.0 * PI.powf(half) / gamma_half(dim)
}

fn gamma_half(dim: usize) -> f64 {
    // Gamma(dim/2) for positive integer dim
    if dim.is_multiple_of(2) {
        (1..dim / 2).map(|i| i as f64).product()
    } else {
        let mut g = PI.sqrt();
        let mut x = 0.5;
        while x + 1e-9 < dim as f64 / 2.0 {
            g *= x;
            x += 1.0;
        }
        g
    }
}

/// Lebesgue volume of the ball of radius `r` in `R^dim`.
pub fn ball_volume(dim: usize, r: f64) -> f64 {
    sphere_area(dim) * r.powi(dim as i32) / dim as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadMethod {
    /// Gauss radial rule times a symplectic-polar sphere rule (simplex × torus angles).
    GaussRadial,
    /// Gauss radial rule times Gauss rules in hyperspherical angles.
    GaussTensor,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub method: QuadMethod,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_shards")]
    pub shards: usize,
}

fn default_order() -> usize {
    12
}
fn default_samples() -> usize {
    100_000
}
fn default_tolerance() -> f64 {
    1e-8
}
fn default_shards() -> usize {
    8
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self::gauss(default_order())
    }
}

impl QuadratureSpec {
    pub fn gauss(order: usize) -> Self {
        Self {
            method: QuadMethod::GaussRadial,
            order,
            samples: default_samples(),
            seed: 0,
            tolerance: default_tolerance(),
            shards: default_shards(),
        }
    }

    pub fn tensor(order: usize) -> Self {
        Self { method: QuadMethod::GaussTensor, ..Self::gauss(order) }
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Self { method: QuadMethod::MonteCarlo, samples, seed, tolerance: 1e-2, ..Self::gauss(default_order()) }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            QuadMethod::MonteCarlo if self.samples < 1000 => {
                Err(contract("Monte Carlo needs at least 1000 samples"))
            }
            QuadMethod::MonteCarlo if self.shards == 0 => Err(contract("shard count must be positive")),
            QuadMethod::GaussRadial | QuadMethod::GaussTensor if self.order < 2 => {
                Err(contract("Gauss order must be at least 2"))
            }
            _ if !(self.tolerance > 0.0) => Err(contract("tolerance must be positive")),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    /// Error estimate above `tolerance · ∫|f|`.
    pub flagged: bool,
    pub method: QuadMethod,
    /// Gauss order used for the reported value, or sample count.
    pub size: usize,
    pub seed: Option<u64>,
}

impl QuadResult {
    fn gauss(method: QuadMethod, lo: f64, hi: f64, abs: f64, order: usize, tol: f64) -> Self {
        let err = (hi - lo).abs();
        Self { value: hi, error_estimate: err, flagged: err > tol * abs, method, size: order, seed: None }
    }

    /// Fails with a numeric error if the estimate was flagged.
    pub fn checked(self) -> Result<Self> {
        if self.flagged {
            Err(numeric(format!(
                "quadrature residual {:e} above tolerance (value {})",
                self.error_estimate, self.value
            )))
        } else {
            Ok(self)
        }
    }
}

#[cfg(feature = "parallel")]
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.iter().map(f).collect()
}

/// Unit directions and weights with `∫_{R^{2m}} f = ∫_0^∞ r^{2m-1} Σ w_i f(r x_i) dr`.
///
/// Built from `z_j = sqrt(w_j) e^{i φ_j}` with `w` on the simplex (conical Gauss) and
/// trapezoid angles.
pub type SphereRule = Vec<(Vec<f64>, f64)>;

type SphereCache = OnceLock<Mutex<HashMap<(usize, usize), Arc<SphereRule>>>>;

pub fn complex_sphere_rule(m: usize, order: usize) -> Arc<SphereRule> {
    static CACHE: SphereCache = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.lock().expect("sphere cache poisoned").get(&(m, order)) {
        return r.clone();
    }
    let rule = Arc::new(build_complex_sphere_rule(m, order));
    cache.lock().expect("sphere cache poisoned").insert((m, order), rule.clone());
    rule
}

fn build_complex_sphere_rule(m: usize, order: usize) -> SphereRule {
    let gl = gauss_legendre(order);
    // simplex points via conical product
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
    for _ in 0..m.saturating_sub(1) {
        let mut next = Vec::with_capacity(simplex.len() * order);
        for (w, wt) in &simplex {
            let remaining = 1.0 - w.iter().sum::<f64>();
            for (u, wu) in gl.mapped(0.0, 1.0) {
                let mut w2 = w.clone();
                w2.push(remaining * u);
                next.push((w2, wt * wu * remaining));
            }
        }
        simplex = next;
    }
    let n_phi = order.max(2);
    let dphi = 2.0 * PI / n_phi as f64;
    let angle_weight = dphi.powi(m as i32) * 2f64.powi(1 - m as i32);
    let total_angles = n_phi.pow(m as u32);
    let mut out = Vec::with_capacity(simplex.len() * total_angles);
    for (w, wt) in &simplex {
        let mut full = w.clone();
        full.push((1.0 - w.iter().sum::<f64>()).max(0.0));
        let amp: Vec<f64> = full.iter().map(|x| x.sqrt()).collect();
        for idx in 0..total_angles {
            let mut x = vec![0.0; 2 * m];
            let mut rem = idx;
            for j in 0..m {
                let phi = (rem % n_phi) as f64 * dphi;
                rem /= n_phi;
                x[2 * j] = amp[j] * phi.cos();
                x[2 * j + 1] = amp[j] * phi.sin();
            }
            out.push((x, wt * angle_weight));
        }
    }
    out
}

/// Hyperspherical product rule on `S^{dim-1}` with Gauss in the polar angles.
pub fn hyperspherical_rule(dim: usize, order: usize) -> Arc<SphereRule> {
    static CACHE: SphereCache = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.lock().expect("sphere cache poisoned").get(&(dim, order)) {
        return r.clone();
    }
    let gl = gauss_legendre(order);
    let n_phi = (2 * order).max(2);
    let mut pts: Vec<(Vec<f64>, f64)> = Vec::new();
    // angles theta_1..theta_{dim-2} in [0, pi], phi in [0, 2 pi)
    let polar: Vec<(f64, f64)> = gl.mapped(0.0, PI).collect();
    let n_polar = dim.saturating_sub(2);
    let total = polar.len().pow(n_polar as u32);
    for idx in 0..total {
        let mut rem = idx;
        let mut thetas = Vec::with_capacity(n_polar);
        let mut wt = 1.0;
        for j in 0..n_polar {
            let (t, w) = polar[rem % polar.len()];
            rem /= polar.len();
            wt *= w * t.sin().powi((dim - 2 - j) as i32);
            thetas.push(t);
        }
        for a in 0..n_phi {
            let phi = 2.0 * PI * a as f64 / n_phi as f64;
            let mut x = vec![0.0; dim];
            let mut s = 1.0;
            for (j, t) in thetas.iter().enumerate() {
                x[j] = s * t.cos();
                s *= t.sin();
            }
            x[dim - 2] = s * phi.cos();
            x[dim - 1] = s * phi.sin();
            pts.push((x, wt * 2.0 * PI / n_phi as f64));
        }
    }
    let rule = Arc::new(pts);
    cache.lock().expect("sphere cache poisoned").insert((dim, order), rule.clone());
    rule
}

/// Integrand over `R^d`.
pub type Integrand<'a> = dyn Fn(&[f64]) -> f64 + Sync + 'a;

fn product_rule(f: &Integrand, dim: usize, radial: &[(f64, f64)], sphere: &SphereRule) -> (f64, f64) {
    let parts = par_map(radial, |&(r, wr)| {
        let mut buf = vec![0.0; dim];
        let (mut s, mut a) = (0.0, 0.0);
        for (x, w) in sphere {
            for (b, xi) in buf.iter_mut().zip(x) {
                *b = r * xi;
            }
            let v = f(&buf);
            s += w * v;
            a += w * v.abs();
        }
        let jac = wr * r.powi(dim as i32 - 1);
        (s * jac, a * jac)
    });
    parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1))
}

fn radial_nodes(breaks: &[f64], order: usize) -> Vec<(f64, f64)> {
    let gl = gauss_legendre(order);
    breaks.windows(2).flat_map(|w| gl.mapped(w[0], w[1]).collect::<Vec<_>>()).collect()
}

/// `∫_{B_r} f dLeb`.
pub fn ball_integrate(f: &Integrand, dim: usize, radius: f64, spec: &QuadratureSpec) -> Result<QuadResult> {
    shell_integrate(f, dim, 0.0, radius, &[], spec)
}

/// `∫_{r_in < |x| < r_out} f dLeb` with extra radial breakpoints for piecewise integrands.
pub fn shell_integrate(
    f: &Integrand,
    dim: usize,
    r_in: f64,
    r_out: f64,
    radial_breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<QuadResult> {
    spec.validate()?;
    if dim == 0 || !(r_in >= 0.0) || !(r_out >= r_in) {
        return Err(contract("shell needs dim > 0 and 0 <= r_in <= r_out"));
    }
    if r_out == r_in {
        return Ok(QuadResult {
            value: 0.0,
            error_estimate: 0.0,
            flagged: false,
            method: spec.method,
            size: 0,
            seed: None,
        });
    }
    let breaks = breakpoints(r_in, r_out, radial_breaks);
    match spec.method {
        QuadMethod::GaussRadial | QuadMethod::GaussTensor => {
            let sphere_for = |order: usize| -> Result<Arc<SphereRule>> {
                if spec.method == QuadMethod::GaussRadial {
                    if dim % 2 == 1 {
                        return Err(contract("symplectic polar rule needs even dimension"));
                    }
                    Ok(complex_sphere_rule(dim / 2, order))
                } else {
                    if dim < 2 {
                        return Err(contract("hyperspherical rule needs dim >= 2"));
                    }
                    Ok(hyperspherical_rule(dim, order))
                }
            };
            let p = spec.order;
            let (lo, _) = product_rule(f, dim, &radial_nodes(&breaks, p), &*sphere_for(p)?);
            let (hi, abs) = product_rule(f, dim, &radial_nodes(&breaks, p + 4), &*sphere_for(p + 4)?);
            Ok(QuadResult::gauss(spec.method, lo, hi, abs, p + 4, spec.tolerance))
        }
        QuadMethod::MonteCarlo => monte_carlo_shell(f, dim, r_in, r_out, spec),
    }
}

/// Running mean and variance with a deterministic pairwise merge.
#[derive(Clone, Copy, Debug, Default)]
struct Welford {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Welford) -> Welford {
        if self.n == 0.0 {
            return o;
        }
        if o.n == 0.0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Welford { n, mean: self.mean + d * o.n / n, m2: self.m2 + o.m2 + d * d * self.n * o.n / n }
    }
}

fn monte_carlo_shell(f: &Integrand, dim: usize, r_in: f64, r_out: f64, spec: &QuadratureSpec) -> Result<QuadResult> {
    let shards: Vec<usize> = (0..spec.shards).collect();
    let per = spec.samples / spec.shards;
    let extra = spec.samples % spec.shards;
    let (a, b) = (r_in.powi(dim as i32), r_out.powi(dim as i32));
    let stats = par_map(&shards, |&s| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(s as u64);
        let n = per + usize::from(s < extra);
        let mut w = Welford::default();
        let mut x = vec![0.0; dim];
        for _ in 0..n {
            let mut norm = 0.0;
            for xi in x.iter_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *xi = g;
                norm += g * g;
            }
            let u: f64 = rng.random();
            let r = (a + u * (b - a)).powf(1.0 / dim as f64);
            let scale = r / norm.sqrt();
            for xi in x.iter_mut() {
                *xi *= scale;
            }
            w.push(f(&x));
        }
        w
    });
    let total = stats.into_iter().fold(Welford::default(), Welford::merge);
    let vol = ball_volume(dim, r_out) - ball_volume(dim, r_in);
    let var = if total.n > 1.0 { total.m2 / (total.n - 1.0) } else { 0.0 };
    let value = vol * total.mean;
    let err = vol * (var / total.n).sqrt();
    if !value.is_finite() {
        return Err(numeric("non-finite Monte Carlo mean"));
    }
    Ok(QuadResult {
        value,
        error_estimate: err,
        flagged: err > spec.tolerance * value.abs().max(vol * total.mean.abs()),
        method: QuadMethod::MonteCarlo,
        size: spec.samples,
        seed: Some(spec.seed),
    })
}

/// `Area(S^{dim-1}) ∫_0^r f(s) s^{dim-1} ds` at Gauss order [`RADIAL_ORDER`].
pub fn radial_reduce(f: impl Fn(f64) -> f64, dim: usize, radius: f64) -> f64 {
    radial_reduce_split(f, dim, &breakpoints(0.0, radius.max(0.0), &[]))
}

/// [`radial_reduce`] over consecutive breakpoints.
pub fn radial_reduce_split(f: impl Fn(f64) -> f64, dim: usize, breaks: &[f64]) -> f64 {
    let n = dim as i32 - 1;
    sphere_area(dim) * integrate_split(|s| f(s) * s.powi(n), breaks, RADIAL_ORDER)
}

/// Radial marginal of Lebesgue measure: `∫ f(|x|) dLeb ≈ Σ w_i f(r_i)`.
#[derive(Clone, Debug)]
pub struct RadialMeasure {
    pub nodes: Vec<(f64, f64)>,
}

impl RadialMeasure {
    pub fn new(dim: usize, breaks: &[f64], order: usize) -> Self {
        let area = sphere_area(dim);
        let nodes = radial_nodes(breaks, order)
            .into_iter()
            .map(|(r, w)| (r, w * area * r.powi(dim as i32 - 1)))
            .collect();
        Self { nodes }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().map(|&(r, w)| w * f(r)).sum()
    }
}

/// Integrand on the disk bundle, `f(b, z)`.
pub type BundleIntegrand<'a> = dyn Fn(&[f64], &[f64]) -> f64 + Sync + 'a;

/// `∫ f (ω_{ν,A}^n / n!)` over `{(b, z): r_inner < |z| < r_outer}`.
pub fn tube_integrate(
    model: &NormalBundleModel,
    f: &BundleIntegrand,
    r_inner: f64,
    r_outer: f64,
    spec: &QuadratureSpec,
) -> Result<QuadResult> {
    tube_integrate_split(model, f, r_inner, r_outer, &[], spec)
}

/// [`tube_integrate`] with radial breakpoints in the fiber.
pub fn tube_integrate_split(
    model: &NormalBundleModel,
    f: &BundleIntegrand,
    r_inner: f64,
    r_outer: f64,
    radial_breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<QuadResult> {
    spec.validate()?;
    if !(r_inner >= 0.0) || !(r_outer >= r_inner) {
        return Err(contract("tube needs 0 <= r_inner <= r_outer"));
    }
    if r_outer == r_inner {
        return Ok(QuadResult { value: 0.0, error_estimate: 0.0, flagged: false, method: spec.method, size: 0, seed: None });
    }
    let k = model.k;
    let breaks = breakpoints(r_inner, r_outer, radial_breaks);
    let run = |order: usize| -> Result<(f64, f64)> {
        let base = model.base_nodes(order)?;
        let sphere = complex_sphere_rule(k, order);
        let radial = radial_nodes(&breaks, order);
        let parts = par_map(&base, |node| {
            let (mut s, mut a) = (0.0, 0.0);
            let mut z = vec![0.0; 2 * k];
            for &(r, wr) in &radial {
                let jac = wr * r.powi(2 * k as i32 - 1);
                let (mut sr, mut ar) = (0.0, 0.0);
                for (x, w) in sphere.iter() {
                    for (zi, xi) in z.iter_mut().zip(x) {
                        *zi = r * xi;
                    }
                    let v = f(&node.b, &z) * model.liouville_density_with(node, &z);
                    sr += w * v;
                    ar += w * v.abs();
                }
                s += jac * sr;
                a += jac * ar;
            }
            (s * node.weight, a * node.weight)
        });
        Ok(parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1)))
    };
    match spec.method {
        QuadMethod::MonteCarlo => Err(contract("tube integrals use Gauss product rules")),
        _ => {
            let (lo, _) = run(spec.order)?;
            let (hi, abs) = run(spec.order + 4)?;
            Ok(QuadResult::gauss(spec.method, lo, hi, abs, spec.order + 4, spec.tolerance))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_is_exact_for_polynomials() {
        for n in [2, 5, 16, 64] {
            let r = gauss_legendre(n);
            let s: f64 = r.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-13);
            let deg = 2 * n - 1;
            let v = r.integrate(0.0, 1.0, |x| x.powi(deg as i32));
            assert!((v - 1.0 / (deg + 1) as f64).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn sphere_rules_have_correct_area() {
        for m in 1..=3 {
            let s: f64 = complex_sphere_rule(m, 6).iter().map(|p| p.1).sum();
            assert!((s - sphere_area(2 * m)).abs() < 1e-12 * s);
        }
        for d in 2..=5 {
            let s: f64 = hyperspherical_rule(d, 12).iter().map(|p| p.1).sum();
            assert!((s - sphere_area(d)).abs() < 1e-10 * s, "d={d}");
        }
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-14);
    }

    #[test]
    fn ball_examples() {
        let one = |_: &[f64]| 1.0;
        let r = ball_integrate(&one, 4, 1.0, &QuadratureSpec::gauss(8)).unwrap();
        assert!((r.value - PI * PI / 2.0).abs() < 1e-8);
        let sq = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>();
        let r = ball_integrate(&sq, 4, 1.0, &QuadratureSpec::gauss(8)).unwrap();
        assert!((r.value - PI * PI / 3.0).abs() < 1e-7);
        assert!(!r.flagged);
        let odd = |x: &[f64]| x[0] * (1.0 + x[1] * x[1]);
        let r = ball_integrate(&odd, 4, 1.0, &QuadratureSpec::gauss(8)).unwrap();
        assert!(r.value.abs() < 1e-12);
        let t = ball_integrate(&sq, 4, 1.0, &QuadratureSpec::tensor(10)).unwrap();
        assert!((t.value - PI * PI / 3.0).abs() < 1e-7);
    }

    #[test]
    fn radial_examples() {
        assert!((radial_reduce(|_| 1.0, 4, 0.7) - PI * PI * 0.7f64.powi(4) / 2.0).abs() < 1e-12);
        assert!((radial_reduce(|s| s * s, 6, 1.0) - PI.powi(3) / 8.0).abs() < 1e-12);
        assert_eq!(radial_reduce(|s| s, 4, 0.0), 0.0);
        let m = RadialMeasure::new(4, &[0.0, 0.5, 1.0], 16);
        assert!((m.integrate(|r| r * r) - PI * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_is_deterministic_and_consistent() {
        let sq = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>();
        let spec = QuadratureSpec::monte_carlo(20_000, 42);
        let a = ball_integrate(&sq, 4, 1.0, &spec).unwrap();
        let b = ball_integrate(&sq, 4, 1.0, &spec).unwrap();
        assert_eq!(a, b);
        assert!((a.value - PI * PI / 3.0).abs() < 4.0 * a.error_estimate);
        assert!(QuadratureSpec::monte_carlo(10, 1).validate().is_err());
    }

    #[test]
    fn shell_additivity() {
        let f = |x: &[f64]| (x[0] + 2.0).exp() * (1.0 + x[3] * x[3]);
        let s = QuadratureSpec::gauss(12);
        let whole = shell_integrate(&f, 4, 0.2, 1.3, &[], &s).unwrap().value;
        let a = shell_integrate(&f, 4, 0.2, 0.7, &[], &s).unwrap().value;
        let b = shell_integrate(&f, 4, 0.7, 1.3, &[], &s).unwrap().value;
        assert!((whole - a - b).abs() <= 1e-8 * whole.abs());
        assert_eq!(shell_integrate(&f, 4, 0.5, 0.5, &[], &s).unwrap().value, 0.0);
    }
}

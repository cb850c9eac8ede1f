//! The one-point blow-up of `C^k`: affine charts of the tautological bundle, the blow-down
//! map, the Fubini–Study and `ω_ρ` forms, the stretch map `F_{ρ,ε}` with its pullback form,
//! and lifted Hamiltonians and flows.
//!
//! Chart `j` (0-based) has real coordinates `(Re λ, Im λ, Re u_1, Im u_1, ...)` and represents
//! `z = λ v_j(u)` where `v_j(u)` inserts `1` at slot `j`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffgeo::{omega0, omega0_gram, pullback_two_form, SmoothMap, TwoFormField};
use crate::error::{contract, domain, numeric, Result};
use crate::local_model::{from_complex, norm_sq, rk4, ScalarField, SignConvention};
use crate::quad::{gauss_legendre, par_map};

/// A point of the blow-up in an affine chart.
#[derive(Clone, Debug, PartialEq)]
pub struct BlowupPoint {
    /// 0-based chart index.
    pub chart: usize,
    pub lambda: Complex64,
    pub u: Vec<Complex64>,
}

impl BlowupPoint {
    pub fn new(chart: usize, lambda: Complex64, u: Vec<Complex64>) -> Result<Self> {
        if chart > u.len() {
            return Err(contract("chart index exceeds rank"));
        }
        if !lambda.is_finite() || u.iter().any(|c| !c.is_finite()) {
            return Err(domain("non-finite chart data"));
        }
        Ok(Self { chart, lambda, u })
    }

    /// The point `c·w` of `C^k` on the line `[w]`, in the chart of the largest `|w_j|`.
    pub fn on_line(w: &[Complex64], c: Complex64) -> Result<Self> {
        let (j, wj) = w
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .ok_or_else(|| contract("empty line"))?;
        if wj.norm() == 0.0 {
            return Err(contract("zero vector does not span a line"));
        }
        let u = w.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, x)| x / wj).collect();
        Self::new(j, c * wj, u)
    }

    pub fn from_chart_coords(chart: usize, coords: &[f64]) -> Result<Self> {
        if coords.len() < 2 || coords.len() % 2 == 1 {
            return Err(contract("chart coordinates have even length >= 2"));
        }
        let lambda = Complex64::new(coords[0], coords[1]);
        let u = coords[2..].chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
        Self::new(chart, lambda, u)
    }

    pub fn k(&self) -> usize {
        self.u.len() + 1
    }

    pub fn chart_coords(&self) -> Vec<f64> {
        let mut c = vec![self.lambda.re, self.lambda.im];
        for x in &self.u {
            c.push(x.re);
            c.push(x.im);
        }
        c
    }

    /// `v_j(u)`.
    pub fn line(&self) -> Vec<Complex64> {
        let mut v = self.u.clone();
        v.insert(self.chart, Complex64::new(1.0, 0.0));
        v
    }

    pub fn on_exceptional(&self) -> bool {
        self.lambda == Complex64::new(0.0, 0.0)
    }

    /// Same point in chart `j`; fails where `v_j = 0`.
    pub fn to_chart(&self, j: usize) -> Result<Self> {
        let v = self.line();
        if j >= v.len() {
            return Err(contract("chart index exceeds rank"));
        }
        if v[j].norm() < 1e-300 {
            return Err(domain("point not covered by the requested chart"));
        }
        let u = v.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, x)| x / v[j]).collect();
        Self::new(j, self.lambda * v[j], u)
    }

    /// Scalar unitary `e^{iθ}` acting on the blow-up: `λ ↦ e^{iθ}λ`, `u` fixed.
    pub fn rotate_scalar(&self, theta: f64) -> Self {
        Self { lambda: self.lambda * Complex64::from_polar(1.0, theta), ..self.clone() }
    }

    /// Linear action of `g ∈ GL(k)` (row-major), re-charted at the largest coordinate.
    pub fn apply_linear(&self, g: &[Complex64]) -> Result<Self> {
        let k = self.k();
        let v = self.line();
        let gv: Vec<Complex64> = (0..k).map(|i| (0..k).map(|j| g[i * k + j] * v[j]).sum()).collect();
        Self::on_line(&gv, self.lambda)
    }
}

/// `π(λ, u) = λ v(u)` in interleaved real coordinates.
pub fn blow_down(q: &BlowupPoint) -> Vec<f64> {
    from_complex(&q.line().iter().map(|x| q.lambda * x).collect::<Vec<_>>())
}

fn complex_block(m: &mut DMatrix<f64>, r: usize, c: usize, z: Complex64) {
    m[(2 * r, 2 * c)] = z.re;
    m[(2 * r, 2 * c + 1)] = -z.im;
    m[(2 * r + 1, 2 * c)] = z.im;
    m[(2 * r + 1, 2 * c + 1)] = z.re;
}

/// Real Jacobian of `π` in chart coordinates.
pub fn blow_down_jacobian(q: &BlowupPoint) -> DMatrix<f64> {
    let k = q.k();
    let v = q.line();
    let mut j = DMatrix::zeros(2 * k, 2 * k);
    for (m, vm) in v.iter().enumerate() {
        complex_block(&mut j, m, 0, *vm);
    }
    let mut col = 1;
    for m in 0..k {
        if m == q.chart {
            continue;
        }
        complex_block(&mut j, m, col, q.lambda);
        col += 1;
    }
    j
}

/// `π` as a map on chart coordinates.
pub fn blow_down_map(k: usize, chart: usize) -> SmoothMap {
    SmoothMap::new(2 * k, 2 * k, move |c| Ok(blow_down(&BlowupPoint::from_chart_coords(chart, c)?)))
        .with_jacobian(move |c| Ok(blow_down_jacobian(&BlowupPoint::from_chart_coords(chart, c)?)))
}

/// `Im[a*b/(1+s) − (a*u)(u*b)/(1+s)²]` on `C^{k-1}`, `s = |u|²`; a line has area π.
pub fn fs_eval(u: &[Complex64], a: &[Complex64], b: &[Complex64]) -> f64 {
    let s: f64 = u.iter().map(|x| x.norm_sqr()).sum();
    let ab: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let au: Complex64 = a.iter().zip(u).map(|(x, y)| x.conj() * y).sum();
    let ub: Complex64 = u.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    (ab / (1.0 + s) - au * ub / ((1.0 + s) * (1.0 + s))).im
}

/// Gram of `pr^* ω_FS` in chart coordinates (zero on the `λ` block).
pub fn fs_form(q: &BlowupPoint) -> DMatrix<f64> {
    let k = q.k();
    let m = k - 1;
    let mut g = DMatrix::zeros(2 * k, 2 * k);
    let basis = |i: usize| -> Vec<Complex64> {
        let mut e = vec![Complex64::new(0.0, 0.0); m];
        e[i / 2] = if i.is_multiple_of(2) { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 1.0) };
        e
    };
    for a in 0..2 * m {
        for b in (a + 1)..2 * m {
            let x = fs_eval(&q.u, &basis(a), &basis(b));
            g[(a + 2, b + 2)] = x;
            g[(b + 2, a + 2)] = -x;
        }
    }
    g
}

/// Gram of `π^*ω₀` in chart coordinates.
pub fn pullback_omega0(q: &BlowupPoint) -> DMatrix<f64> {
    let j = blow_down_jacobian(q);
    j.transpose() * omega0_gram(q.k()) * j
}

/// Gram of `ω_ρ = π^*ω₀ + ρ² pr^*ω_FS`.
pub fn omega_rho(q: &BlowupPoint, rho: f64) -> DMatrix<f64> {
    pullback_omega0(q) + fs_form(q) * (rho * rho)
}

/// `f_{ρ,ε}`: `√(ρ²+x²)` on `(0, ε]`, identity on `[ρ+ε, ∞)`, quintic Hermite blend between.
#[derive(Clone, Debug, PartialEq)]
pub struct StretchProfile {
    pub rho: f64,
    pub eps: f64,
    /// Coefficients of `p(t)`, `t = (x − ε)/ρ`, with `f(x) = p(t)` on the blend interval.
    pub blend: [f64; 6],
}

/// Size of the monotonicity grid.
pub const MONOTONE_GRID: usize = 10_000;

impl StretchProfile {
    pub fn new(rho: f64, eps: f64) -> Result<Self> {
        if !(rho > 0.0) || !(eps > 0.0 && eps < 1.0) {
            return Err(contract("need rho > 0 and eps in (0, 1)"));
        }
        let a = (rho * rho + eps * eps).sqrt();
        // value, first and second t-derivatives at both ends
        let rhs = [a, eps / a * rho, rho * rho / (a * a * a) * rho * rho, rho + eps, rho, 0.0];
        let m = DMatrix::from_row_slice(
            6,
            6,
            &[
                1., 0., 0., 0., 0., 0., //
                0., 1., 0., 0., 0., 0., //
                0., 0., 2., 0., 0., 0., //
                1., 1., 1., 1., 1., 1., //
                0., 1., 2., 3., 4., 5., //
                0., 0., 2., 6., 12., 20.,
            ],
        );
        let c = m.lu().solve(&DVector::from_column_slice(&rhs)).ok_or_else(|| numeric("singular Hermite system"))?;
        let prof = Self { rho, eps, blend: [c[0], c[1], c[2], c[3], c[4], c[5]] };
        let (min_slope, at) = prof.min_blend_slope();
        if !(min_slope > 0.0) {
            return Err(contract(format!(
                "quintic blend not monotone for rho={rho}, eps={eps}: f'({at}) = {min_slope}"
            )));
        }
        Ok(prof)
    }

    /// Minimum of `f′` over the monotonicity grid on `[ε, ρ+ε]` and its location.
    pub fn min_blend_slope(&self) -> (f64, f64) {
        (0..=MONOTONE_GRID)
            .map(|i| {
                let x = self.eps + self.rho * i as f64 / MONOTONE_GRID as f64;
                (self.fp(x), x)
            })
            .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a })
    }

    pub fn outer(&self) -> f64 {
        self.rho + self.eps
    }

    fn poly(&self, t: f64, d: usize) -> f64 {
        let c = &self.blend;
        match d {
            0 => c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5])))),
            1 => c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5]))),
            _ => 2.0 * c[2] + t * (6.0 * c[3] + t * (12.0 * c[4] + t * 20.0 * c[5])),
        }
    }

    pub fn f(&self, x: f64) -> f64 {
        if x <= self.eps {
            (self.rho * self.rho + x * x).sqrt()
        } else if x >= self.outer() {
            x
        } else {
            self.poly((x - self.eps) / self.rho, 0)
        }
    }

    pub fn fp(&self, x: f64) -> f64 {
        if x <= self.eps {
            x / (self.rho * self.rho + x * x).sqrt()
        } else if x >= self.outer() {
            1.0
        } else {
            self.poly((x - self.eps) / self.rho, 1) / self.rho
        }
    }

    pub fn fpp(&self, x: f64) -> f64 {
        if x <= self.eps {
            let a = self.rho * self.rho + x * x;
            self.rho * self.rho / (a * a.sqrt())
        } else if x >= self.outer() {
            0.0
        } else {
            self.poly((x - self.eps) / self.rho, 2) / (self.rho * self.rho)
        }
    }

    /// `d(f²)/d(x²) = f f′ / x`, equal to 1 on `(0, ε]` and beyond `ρ+ε`.
    pub fn dfsq_dxsq(&self, x: f64) -> f64 {
        if x <= self.eps || x >= self.outer() {
            1.0
        } else {
            self.f(x) * self.fp(x) / x
        }
    }

    /// `F` as a smooth map on `C^k ∖ {0}`.
    pub fn as_smooth_map(&self, k: usize) -> SmoothMap {
        let (p1, p2) = (self.clone(), self.clone());
        SmoothMap::new(2 * k, 2 * k, move |z| stretch_map(z, &p1)).with_jacobian(move |z| stretch_jacobian(z, &p2))
    }
}

/// `F(z) = f(|z|) z / |z|`.
pub fn stretch_map(z: &[f64], prof: &StretchProfile) -> Result<Vec<f64>> {
    let r = norm_sq(z).sqrt();
    if r == 0.0 {
        return Err(domain("stretch map is undefined at the origin"));
    }
    let phi = prof.f(r) / r;
    Ok(z.iter().map(|x| phi * x).collect())
}

/// `dF = φ I + (φ′/r) z zᵀ` with `φ = f/r`.
pub fn stretch_jacobian(z: &[f64], prof: &StretchProfile) -> Result<DMatrix<f64>> {
    let n = z.len();
    let r = norm_sq(z).sqrt();
    if r == 0.0 {
        return Err(domain("stretch map is undefined at the origin"));
    }
    let f = prof.f(r);
    let phi = f / r;
    let dphi_over_r = (prof.fp(r) * r - f) / (r * r * r);
    let mut j = DMatrix::identity(n, n) * phi;
    for a in 0..n {
        for b in 0..n {
            j[(a, b)] += dphi_over_r * z[a] * z[b];
        }
    }
    Ok(j)
}

/// Gram of `(F ∘ π)^* ω₀` at `q ∉ E`.
pub fn omega_tilde(q: &BlowupPoint, prof: &StretchProfile) -> Result<DMatrix<f64>> {
    if q.on_exceptional() {
        return Err(domain("the pullback form is undefined on E; use omega_rho"));
    }
    let z = blow_down(q);
    let j = stretch_jacobian(&z, prof)? * blow_down_jacobian(q);
    Ok(j.transpose() * omega0_gram(q.k()) * j)
}

/// `ω̃_{ρ,ε}` glued: `ω_ρ` on `|π(q)| ≤ ε` (including E), the pullback elsewhere.
pub fn omega_tilde_glued(q: &BlowupPoint, prof: &StretchProfile) -> DMatrix<f64> {
    let r = norm_sq(&blow_down(q)).sqrt();
    if r <= prof.eps {
        omega_rho(q, prof.rho)
    } else {
        omega_tilde(q, prof).expect("off the exceptional divisor")
    }
}

/// `ω̃` as a [`TwoFormField`] on chart `chart` built with the generic pullback machinery.
pub fn omega_tilde_field(k: usize, chart: usize, prof: &StretchProfile) -> Result<TwoFormField> {
    let composite = blow_down_map(k, chart).compose(&prof.as_smooth_map(k))?;
    pullback_two_form(&composite, &omega0(k))
}

/// `H̃_t(q)`: `H_t(F(π(q)))` off E and `H_t(ρ w/|w|)` on E for `ℓ = [w]`.
pub fn lift_hamiltonian(h: &ScalarField, t: f64, q: &BlowupPoint, prof: &StretchProfile) -> Result<f64> {
    if !h.is_s1_invariant() {
        return Err(contract("lifted Hamiltonian needs an S1-invariant H (the lift is otherwise ill-defined)"));
    }
    if q.on_exceptional() {
        let w = q.line();
        let n = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        let p = from_complex(&w.iter().map(|x| x * (prof.rho / n)).collect::<Vec<_>>());
        return Ok(h.evaluate(t, &p));
    }
    Ok(h.evaluate(t, &stretch_map(&blow_down(q), prof)?))
}

/// Which Hamiltonian drives a flow on the blow-up.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LiftKind {
    /// `H ∘ F ∘ π`.
    Stretched,
    /// `H ∘ π` (does not lift the flow in the blend annulus).
    BlowDownOnly,
}

/// Gradient of the lifted radial Hamiltonian in chart coordinates.
pub fn lifted_gradient(h: &ScalarField, t: f64, q: &BlowupPoint, prof: &StretchProfile, kind: LiftKind) -> Result<Vec<f64>> {
    let rad = h.radial_profile().ok_or_else(|| contract("lifted flows need a radial Hamiltonian"))?;
    let z = blow_down(q);
    let r2 = norm_sq(&z);
    let r = r2.sqrt();
    let factor = match kind {
        LiftKind::Stretched => {
            let f = prof.f(r);
            (rad.ds)(t, f * f) * prof.dfsq_dxsq(r)
        }
        LiftKind::BlowDownOnly => (rad.ds)(t, r2),
    };
    let j = blow_down_jacobian(q);
    let g = j.transpose() * DVector::from_column_slice(&z) * (2.0 * factor);
    Ok(g.as_slice().to_vec())
}

/// `X̃ = −σ G̃⁻¹ ∇H̃` on chart coordinates.
pub fn lifted_vector_field(
    h: &ScalarField,
    t: f64,
    coords: &[f64],
    chart: usize,
    prof: &StretchProfile,
    kind: LiftKind,
    conv: SignConvention,
) -> Result<Vec<f64>> {
    let q = BlowupPoint::from_chart_coords(chart, coords)?;
    let g = omega_tilde_glued(&q, prof);
    let grad = DVector::from_vec(lifted_gradient(h, t, &q, prof, kind)?);
    let x = g.lu().solve(&grad).ok_or_else(|| numeric("degenerate lifted form"))?;
    Ok((x * (-conv.value())).as_slice().to_vec())
}

/// RK4 trajectory of the lifted flow sampled at the increasing times `t_grid` (from `t_grid[0]`).
pub fn lifted_flow(
    h: &ScalarField,
    q0: &BlowupPoint,
    t_grid: &[f64],
    steps_per_unit: usize,
    prof: &StretchProfile,
    kind: LiftKind,
    conv: SignConvention,
) -> Result<Vec<BlowupPoint>> {
    let chart = q0.chart;
    let field = |t: f64, c: &[f64]| lifted_vector_field(h, t, c, chart, prof, kind, conv);
    let mut out = vec![q0.clone()];
    let mut c = q0.chart_coords();
    for w in t_grid.windows(2) {
        let steps = ((w[1] - w[0]).abs() * steps_per_unit as f64).ceil().max(1.0) as usize;
        c = rk4(&field, &c, w[0], w[1], steps, |p| {
            if p.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(domain("lifted trajectory became non-finite"))
            }
        })?;
        out.push(BlowupPoint::from_chart_coords(chart, &c)?);
    }
    Ok(out)
}

/// `ψ_t(z)` downstairs.
pub type DownstairsFlow<'a> = dyn Fn(f64, &[f64]) -> Result<Vec<f64>> + Sync + 'a;
/// Lifted trajectory of `q` sampled on a time grid.
pub type LiftedFlow<'a> = dyn Fn(&BlowupPoint, &[f64]) -> Result<Vec<BlowupPoint>> + Sync + 'a;

/// `sup |π(ψ̃_t(q)) − ψ_t(π(q))|` over the given points and the time grid.
///
/// `psi(t, z)` is the downstairs flow; `psi_tilde(q, grid)` the lifted trajectory on `grid`.
pub fn lift_commutation_defect(
    psi: &DownstairsFlow,
    psi_tilde: &LiftedFlow,
    points: &[BlowupPoint],
    t_grid: &[f64],
) -> Result<f64> {
    let per = par_map(points, |q| -> Result<f64> {
        let traj = psi_tilde(q, t_grid)?;
        let z0 = blow_down(q);
        let mut worst: f64 = 0.0;
        for (t, qt) in t_grid.iter().zip(&traj) {
            let down = psi(*t, &z0)?;
            let up = blow_down(qt);
            let d = norm_sq(&up.iter().zip(&down).map(|(a, b)| a - b).collect::<Vec<_>>()).sqrt();
            worst = worst.max(d);
        }
        Ok(worst)
    });
    per.into_iter().try_fold(0.0f64, |a, d| Ok(a.max(d?)))
}

/// Chart-0 points with `|u_i| < 1` and `|π(q)|` uniform in `[0, r_max)`; every tenth lies on E.
pub fn sample_blowup_points(k: usize, r_max: f64, count: usize, seed: u64) -> Vec<BlowupPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let u: Vec<Complex64> = (0..k - 1)
                .map(|_| Complex64::from_polar(rng.random::<f64>().sqrt(), 2.0 * PI * rng.random::<f64>()))
                .collect();
            let vn = (1.0 + u.iter().map(|x| x.norm_sqr()).sum::<f64>()).sqrt();
            let r = if i % 10 == 9 { 0.0 } else { r_max * rng.random::<f64>() };
            let lambda = Complex64::from_polar(r / vn, 2.0 * PI * rng.random::<f64>());
            BlowupPoint { chart: 0, lambda, u }
        })
        .collect()
}

/// Chart-0 points off E with `|π(q)|` uniform in `(r_lo, r_hi)`.
pub fn sample_shell_points(k: usize, r_lo: f64, r_hi: f64, count: usize, seed: u64) -> Vec<BlowupPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let u: Vec<Complex64> = (0..k - 1)
                .map(|_| Complex64::from_polar(rng.random::<f64>().sqrt(), 2.0 * PI * rng.random::<f64>()))
                .collect();
            let vn = (1.0 + u.iter().map(|x| x.norm_sqr()).sum::<f64>()).sqrt();
            let mut r = r_lo + (r_hi - r_lo) * rng.random::<f64>();
            if r <= 0.0 {
                r = 0.5 * (r_hi - r_lo).max(f64::MIN_POSITIVE) * 1e-3;
            }
            let lambda = Complex64::from_polar(r / vn, 2.0 * PI * rng.random::<f64>());
            BlowupPoint { chart: 0, lambda, u }
        })
        .collect()
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Sup-norm defects of `ω̃` against `ω_ρ` on `0 < |z| < ε` and against `π^*ω₀` beyond `ρ+ε`.
pub fn gluing_defects(k: usize, prof: &StretchProfile, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let mut inner: f64 = 0.0;
    for q in sample_shell_points(k, 0.0, prof.eps, samples, seed) {
        inner = inner.max(max_abs_diff(&omega_tilde(&q, prof)?, &omega_rho(&q, prof.rho)));
    }
    let mut outer: f64 = 0.0;
    for q in sample_shell_points(k, prof.outer(), prof.outer() + 1.0, samples, seed ^ 0x5eed) {
        outer = outer.max(max_abs_diff(&omega_tilde(&q, prof)?, &pullback_omega0(&q)));
    }
    Ok((inner, outer))
}

/// `∫_C density(|w|) dA(w)` via `|w| = τ/(1−τ)` and Gauss in `τ`.
pub fn plane_integral(density: impl Fn(Complex64) -> f64, order: usize, angles: usize) -> f64 {
    let rule = gauss_legendre(order);
    let mut total = 0.0;
    for (a, b) in [(0.0, 0.5), (0.5, 1.0)] {
        for (tau, w) in rule.mapped(a, b) {
            let r = tau / (1.0 - tau);
            let dr = 1.0 / ((1.0 - tau) * (1.0 - tau));
            let mut ring = 0.0;
            for i in 0..angles {
                let th = 2.0 * PI * i as f64 / angles as f64;
                ring += density(Complex64::from_polar(r, th));
            }
            total += w * dr * r * ring * 2.0 * PI / angles as f64;
        }
    }
    total
}

/// `∫_{CP¹} ω_FS` over the line `u = (w, 0, ..., 0)` of the chart.
pub fn fs_line_area(k: usize) -> f64 {
    plane_integral(
        |w| {
            let mut u = vec![Complex64::new(0.0, 0.0); k - 1];
            u[0] = w;
            let q = BlowupPoint { chart: 0, lambda: Complex64::new(0.0, 0.0), u };
            fs_form(&q)[(2, 3)]
        },
        64,
        16,
    )
}

/// `ω̃`-area of the line `{λ = 0, u = (w, 0, ...)}` in E (where `ω̃ = ω_ρ`).
pub fn exceptional_line_area(k: usize, prof: &StretchProfile) -> f64 {
    plane_integral(
        |w| {
            let mut u = vec![Complex64::new(0.0, 0.0); k - 1];
            u[0] = w;
            let q = BlowupPoint { chart: 0, lambda: Complex64::new(0.0, 0.0), u };
            omega_tilde_glued(&q, prof)[(2, 3)]
        },
        64,
        16,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffgeo::pfaffian;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn blow_down_examples() {
        let e = BlowupPoint::new(0, c(0.0, 0.0), vec![c(0.3, 2.0)]).unwrap();
        assert_eq!(blow_down(&e), vec![0.0; 4]);
        let p = BlowupPoint::new(0, c(1.0, 0.0), vec![c(0.0, 0.0)]).unwrap();
        assert_eq!(blow_down(&p), vec![1.0, 0.0, 0.0, 0.0]);
        let q = BlowupPoint::new(0, c(0.4, -0.3), vec![c(0.7, 0.2), c(-1.1, 0.5)]).unwrap();
        for j in 0..3 {
            let r = q.to_chart(j).unwrap();
            let d: f64 = blow_down(&q).iter().zip(blow_down(&r)).map(|(a, b)| (a - b).abs()).sum();
            assert!(d < 1e-12);
        }
        let origin_chart = BlowupPoint::new(0, c(1.0, 0.0), vec![c(0.0, 0.0)]).unwrap();
        assert!(origin_chart.to_chart(1).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let q = BlowupPoint::new(1, c(0.4, -0.3), vec![c(0.7, 0.2), c(-1.1, 0.5)]).unwrap();
        let m = blow_down_map(3, 1);
        let fd = m.fd_jacobian(&q.chart_coords(), 1e-6).unwrap();
        assert!((fd - blow_down_jacobian(&q)).amax() < 1e-8);
    }

    #[test]
    fn fs_examples() {
        let q = BlowupPoint::new(0, c(0.7, 0.1), vec![c(0.0, 0.0)]).unwrap();
        assert!((fs_form(&q)[(2, 3)] - 1.0).abs() < 1e-15);
        let q2 = q.rotate_scalar(1.0);
        let q3 = BlowupPoint { lambda: c(5.0, -2.0), ..q.clone() };
        assert_eq!(fs_form(&q), fs_form(&q2));
        assert_eq!(fs_form(&q), fs_form(&q3));
        assert!((fs_line_area(2) - PI).abs() < 1e-6);
        assert!((fs_line_area(3) - PI).abs() < 1e-6);
    }

    #[test]
    fn omega_rho_examples() {
        let rho = 0.8;
        let prof = StretchProfile::new(rho, 0.5).unwrap();
        let area = exceptional_line_area(2, &prof);
        assert!((area - PI * rho * rho).abs() < 1e-6);
        // on E: Pf = |v|² ρ^{2(k-1)} Pf(FS) = ρ²/(1+|u|²) for k = 2
        let u = c(0.6, -0.3);
        let q = BlowupPoint::new(0, c(0.0, 0.0), vec![u]).unwrap();
        let pf = pfaffian(&omega_rho(&q, rho));
        assert!((pf - rho * rho / (1.0 + u.norm_sqr())).abs() < 1e-14);
        assert_eq!(pfaffian(&omega_rho(&q, 0.0)), 0.0);
        // far from E the FS term is bounded while π^*ω₀ grows
        let far = BlowupPoint::new(0, c(50.0, 0.0), vec![u]).unwrap();
        let diff = (omega_rho(&far, rho) - pullback_omega0(&far)).amax();
        assert!(diff <= rho * rho + 1e-12);
        assert!(pullback_omega0(&far).amax() > 100.0);
    }

    #[test]
    fn stretch_profile_examples() {
        let prof = StretchProfile::new(1.0, 0.5).unwrap();
        let z = [0.25, 0.0, 0.0, 0.0];
        let fz = stretch_map(&z, &prof).unwrap();
        assert!((norm_sq(&fz).sqrt() - (1.0f64 + 0.0625).sqrt()).abs() < 1e-15);
        let far = [1.0, 1.5, -0.5, 0.0];
        assert_eq!(stretch_map(&far, &prof).unwrap(), far.to_vec());
        assert!(stretch_map(&[0.0; 4], &prof).is_err());
        // C² at the junctions
        for x in [prof.eps, prof.outer()] {
            let (l, r) = (x - 1e-9, x + 1e-9);
            assert!((prof.f(l) - prof.f(r)).abs() < 1e-8);
            assert!((prof.fp(l) - prof.fp(r)).abs() < 1e-7);
            assert!((prof.fpp(l) - prof.fpp(r)).abs() < 1e-6);
        }
        assert!(prof.min_blend_slope().0 > 0.0);
        assert!(StretchProfile::new(1.0, 0.05).is_err());
        assert!(StretchProfile::new(1.0, 1.5).is_err());
    }

    #[test]
    fn stretch_jacobian_matches_finite_differences() {
        let prof = StretchProfile::new(1.0, 0.5).unwrap();
        let m = prof.as_smooth_map(2);
        for r in [0.3, 0.9, 1.3, 2.0] {
            let z = [r * 0.6, r * 0.0, r * 0.0, r * 0.8];
            let fd = m.fd_jacobian(&z, 1e-6).unwrap();
            assert!((fd - stretch_jacobian(&z, &prof).unwrap()).amax() < 1e-7, "r={r}");
        }
    }

    #[test]
    fn gluing_and_positivity() {
        let prof = StretchProfile::new(1.0, 0.5).unwrap();
        let (inner, outer) = gluing_defects(2, &prof, 200, 3).unwrap();
        assert!(inner <= 1e-6, "inner {inner}");
        assert!(outer <= 1e-8, "outer {outer}");
        for q in sample_shell_points(2, prof.eps, prof.outer(), 200, 9) {
            assert!(pfaffian(&omega_tilde(&q, &prof).unwrap()) > 0.0);
        }
        let e = BlowupPoint::new(0, c(0.0, 0.0), vec![c(0.1, 0.0)]).unwrap();
        assert!(omega_tilde(&e, &prof).is_err());
    }

    #[test]
    fn generic_pullback_agrees_with_chart_formula() {
        let prof = StretchProfile::new(1.0, 0.5).unwrap();
        let field = omega_tilde_field(2, 0, &prof).unwrap();
        for q in sample_shell_points(2, 0.1, 2.5, 20, 4) {
            let g = field.gram_at(&q.chart_coords()).unwrap();
            assert!((g - omega_tilde(&q, &prof).unwrap()).amax() < 1e-9);
        }
    }

    #[test]
    fn lifted_hamiltonian_examples() {
        let prof = StretchProfile::new(1.0, 0.5).unwrap();
        let cst = 1.7;
        let h = ScalarField::quadratic(cst);
        let e = BlowupPoint::new(0, c(0.0, 0.0), vec![c(0.4, 0.9)]).unwrap();
        assert!((lift_hamiltonian(&h, 0.0, &e, &prof).unwrap() - cst).abs() < 1e-9);
        let near = BlowupPoint { lambda: c(1e-7, 0.0), ..e.clone() };
        let diff = lift_hamiltonian(&h, 0.0, &near, &prof).unwrap() - lift_hamiltonian(&h, 0.0, &e, &prof).unwrap();
        assert!(diff.abs() < 1e-6);
        let x = 0.3;
        let q = BlowupPoint::new(0, c(x, 0.0), vec![c(0.0, 0.0)]).unwrap();
        assert!((lift_hamiltonian(&h, 0.0, &q, &prof).unwrap() - cst * (1.0 + x * x)).abs() < 1e-12);
        assert_eq!(lift_hamiltonian(&ScalarField::zero(), 0.0, &q, &prof).unwrap(), 0.0);
        let bad = ScalarField::new(false, |_, z| z[0]);
        assert!(lift_hamiltonian(&bad, 0.0, &q, &prof).is_err());
    }

    #[test]
    fn lifted_gradient_matches_finite_differences() {
        let prof = StretchProfile::new(1.0, 0.5).unwrap();
        let h = ScalarField::radial(false, |_, s| (s * 0.7).sin(), |_, s| 0.7 * (s * 0.7).cos());
        for q in sample_shell_points(2, 0.05, 2.0, 30, 8) {
            let g = lifted_gradient(&h, 0.0, &q, &prof, LiftKind::Stretched).unwrap();
            let base = q.chart_coords();
            for i in 0..4 {
                let mut p = base.clone();
                p[i] += 1e-6;
                let a = lift_hamiltonian(&h, 0.0, &BlowupPoint::from_chart_coords(0, &p).unwrap(), &prof).unwrap();
                p[i] -= 2e-6;
                let b = lift_hamiltonian(&h, 0.0, &BlowupPoint::from_chart_coords(0, &p).unwrap(), &prof).unwrap();
                assert!((g[i] - (a - b) / 2e-6).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn scalar_rotation_commutes_with_blow_down() {
        let q = BlowupPoint::new(1, c(0.4, -0.3), vec![c(0.7, 0.2)]).unwrap();
        let th = 0.77;
        let a = blow_down(&q.rotate_scalar(th));
        let b = crate::local_model::rotate(&blow_down(&q), th);
        assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12));
    }

    #[test]
    fn lift_hamiltonian_is_invariant_on_fiber_circles() {
        let prof = StretchProfile::new(1.0, 0.5).unwrap();
        let h = ScalarField::quadratic(PI);
        for q in sample_blowup_points(2, 2.0, 30, 5) {
            let a = lift_hamiltonian(&h, 0.0, &q, &prof).unwrap();
            let b = lift_hamiltonian(&h, 0.0, &q.rotate_scalar(2.1), &prof).unwrap();
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}

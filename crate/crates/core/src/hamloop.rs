//! The explicit radial Hamiltonian loop: profiles `α`, `β`, the bump `g`, the concatenated
//! Hamiltonian, its flow, closure diagnostics and integrals.
//!
//! With `h(r) = g(r) r²` the Hamiltonian is `H_t(z) = a(t) π h(|z|)` where `a = α′` on the first
//! leg and `a(t) = s β′(2−t)` on the second (`s = ±1` per [`SecondLegSign`]). Writing
//! `F(s) = π h(√s)`, the flow rotates `z` by `θ(t, r) = −2σ A(t) F′(r²)` with `A = ∫₀ᵗ a`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blowup_local::{lift_commutation_defect, lifted_flow, sample_blowup_points, BlowupPoint, LiftKind, StretchProfile};
use crate::diffgeo::{factorial, VolumeConvention};
use crate::error::{contract, numeric, Result};
use crate::local_model::{flow, norm_sq, rotate, ScalarField, SignConvention};
use crate::quad::{gauss_legendre, radial_reduce_split, shell_integrate, QuadratureSpec};

/// Width of the window before `t = 1` on which `α − β` is constant.
pub const PROFILE_DELTA: f64 = 0.25;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondLegSign {
    /// `+H^{β,g}_{2−t}` as printed.
    #[default]
    Literal,
    /// `−H^{β,g}_{2−t}`, the generator of `t ↦ ψ^β_{2−t}`.
    TimeReversed,
}

impl SecondLegSign {
    pub fn value(self) -> f64 {
        match self {
            SecondLegSign::Literal => 1.0,
            SecondLegSign::TimeReversed => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileShape {
    /// `α(t) = α(1)·S(t)`, `S` the quintic smoothstep.
    #[default]
    Smoothstep,
    /// `α(t) = α(1)·t`.
    Linear,
}

/// Quintic smoothstep `S(x) = 10x³ − 15x⁴ + 6x⁵` and its derivative.
pub fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
}

pub fn smoothstep_d(x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    30.0 * x * x * (1.0 - x) * (1.0 - x)
}

/// `α` and `β = α − D·S(t/(1−δ))`, so `α − β ≡ D` on `[1−δ, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Profiles {
    pub shape: ProfileShape,
    pub alpha1: f64,
    pub gap: f64,
    pub delta: f64,
}

impl Profiles {
    pub fn alpha(&self, t: f64) -> f64 {
        match self.shape {
            ProfileShape::Smoothstep => self.alpha1 * smoothstep(t),
            ProfileShape::Linear => self.alpha1 * t.clamp(0.0, 1.0),
        }
    }

    pub fn alpha_d(&self, t: f64) -> f64 {
        match self.shape {
            ProfileShape::Smoothstep => self.alpha1 * smoothstep_d(t),
            ProfileShape::Linear => self.alpha1,
        }
    }

    pub fn beta(&self, t: f64) -> f64 {
        self.alpha(t) - self.gap * smoothstep(t / (1.0 - self.delta))
    }

    pub fn beta_d(&self, t: f64) -> f64 {
        let w = 1.0 - self.delta;
        self.alpha_d(t) - self.gap * smoothstep_d(t / w) / w
    }

    pub fn beta1(&self) -> f64 {
        self.alpha1 - self.gap
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BumpShape {
    /// `g = 1 − S` on the descent annulus.
    #[default]
    Quintic,
    /// Quintic descent plus `c (x(1−x))³` with `∫ g |z|² dLeb = 0`.
    Balanced,
    /// `h = g r²` held at `ρ²` on the middle third of the descent annulus.
    IntegerWinding,
}

/// Polynomial piece of `h(r)` in `x = (r − a)/(b − a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    pub a: f64,
    pub b: f64,
    pub coeffs: Vec<f64>,
}

impl Piece {
    fn eval(&self, r: f64, d: usize) -> f64 {
        let len = self.b - self.a;
        let x = (r - self.a) / len;
        let mut acc = 0.0;
        match d {
            0 => {
                for c in self.coeffs.iter().rev() {
                    acc = acc * x + c;
                }
                acc
            }
            _ => {
                for (i, c) in self.coeffs.iter().enumerate().skip(1).rev() {
                    acc = acc * x + i as f64 * c;
                }
                acc / len
            }
        }
    }
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n).map(|i| a.get(i).copied().unwrap_or(0.0) + b.get(i).copied().unwrap_or(0.0)).collect()
}

/// Quintic with prescribed value, first and second derivative at `x = 0` and `x = 1`.
pub fn hermite_quintic(v0: f64, d0: f64, s0: f64, v1: f64, d1: f64, s1: f64) -> Result<Vec<f64>> {
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
    let c = m
        .lu()
        .solve(&DVector::from_column_slice(&[v0, d0, s0, v1, d1, s1]))
        .ok_or_else(|| numeric("singular Hermite system"))?;
    Ok(c.as_slice().to_vec())
}

/// Radial bump `g`, stored through `h(r) = g(r) r²`: `h = r²` on `[0, r1]`, zero beyond `ε₀`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialBump {
    pub shape: BumpShape,
    pub plateau: f64,
    pub support: f64,
    pub pieces: Vec<Piece>,
}

impl RadialBump {
    /// Bump with `g ≡ 1` on `[0, plateau]` and `g ≡ 0` on `[support, ∞)`.
    pub fn new(shape: BumpShape, plateau: f64, support: f64, rho: f64, k: usize) -> Result<Self> {
        if !(plateau > 0.0 && support > plateau) {
            return Err(contract("bump needs 0 < plateau < support"));
        }
        let (r1, e0) = (plateau, support);
        let len = e0 - r1;
        // r² in x on [r1, e0]
        let r_sq = [r1 * r1, 2.0 * r1 * len, len * len];
        let one_minus_s = [1.0, 0.0, 0.0, -10.0, 15.0, -6.0];
        let pieces = match shape {
            BumpShape::Quintic => vec![Piece { a: r1, b: e0, coeffs: poly_mul(&r_sq, &one_minus_s) }],
            BumpShape::Balanced => {
                // x³(1−x)³
                let bump = [0.0, 0.0, 0.0, 1.0, -3.0, 3.0, -1.0];
                let p = 2 * k as i32 + 1;
                let rule = gauss_legendre(32);
                let descent = rule.integrate(r1, e0, |r| (1.0 - smoothstep((r - r1) / len)) * r.powi(p));
                let extra = rule.integrate(r1, e0, |r| {
                    let x = (r - r1) / len;
                    (x * (1.0 - x)).powi(3) * r.powi(p)
                });
                let inner = r1.powi(p + 1) / (p + 1) as f64;
                let c = -(inner + descent) / extra;
                let g = poly_add(&one_minus_s, &bump.map(|b| b * c));
                vec![Piece { a: r1, b: e0, coeffs: poly_mul(&r_sq, &g) }]
            }
            BumpShape::IntegerWinding => {
                let r2 = r1 + len / 3.0;
                let r3 = r1 + 2.0 * len / 3.0;
                let l = len / 3.0;
                let c = rho * rho;
                let first = hermite_quintic(r1 * r1, 2.0 * r1 * l, 2.0 * l * l, c, 0.0, 0.0)?;
                vec![
                    Piece { a: r1, b: r2, coeffs: first },
                    Piece { a: r2, b: r3, coeffs: vec![c] },
                    Piece { a: r3, b: e0, coeffs: one_minus_s.iter().map(|x| x * c).collect() },
                ]
            }
        };
        Ok(Self { shape, plateau, support, pieces })
    }

    fn piece(&self, r: f64) -> Option<&Piece> {
        self.pieces.iter().find(|p| r >= p.a && r < p.b)
    }

    /// `h(r) = g(r) r²`.
    pub fn h(&self, r: f64) -> f64 {
        if r <= self.plateau {
            r * r
        } else if r >= self.support {
            0.0
        } else {
            self.piece(r).map_or(0.0, |p| p.eval(r, 0))
        }
    }

    pub fn hp(&self, r: f64) -> f64 {
        if r <= self.plateau {
            2.0 * r
        } else if r >= self.support {
            0.0
        } else {
            self.piece(r).map_or(0.0, |p| p.eval(r, 1))
        }
    }

    pub fn g(&self, r: f64) -> f64 {
        if r <= self.plateau {
            1.0
        } else {
            self.h(r) / (r * r)
        }
    }

    /// `F′(s) = π h′(r) / (2r)` with `s = r²`.
    pub fn f_prime(&self, r: f64) -> f64 {
        if r <= self.plateau {
            PI
        } else {
            PI * self.hp(r) / (2.0 * r)
        }
    }

    /// Radii where `h` changes piece.
    pub fn breaks(&self) -> Vec<f64> {
        let mut b = vec![self.plateau];
        for p in &self.pieces {
            b.push(p.b);
        }
        b
    }
}

/// The loop data: rank, blow-up parameters, profiles, bump and sign conventions.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopSpec {
    pub k: usize,
    pub rho: f64,
    pub eps: f64,
    pub eps0: f64,
    pub profiles: Profiles,
    pub bump: RadialBump,
    pub second_leg_sign: SecondLegSign,
    pub conv: SignConvention,
}

/// Parameters for [`LoopSpec`] construction.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopParams {
    pub k: usize,
    pub rho: f64,
    pub eps: f64,
    pub eps0: f64,
    pub alpha1: f64,
    pub beta1: f64,
    pub shape: ProfileShape,
    pub bump: BumpShape,
    pub second_leg_sign: SecondLegSign,
    pub conv: SignConvention,
    /// Defaults to `ρ + ε`.
    pub plateau: Option<f64>,
}

impl Default for LoopParams {
    fn default() -> Self {
        Self {
            k: 2,
            rho: 1.0,
            eps: 0.5,
            eps0: 2.0,
            alpha1: 0.5,
            beta1: -0.5,
            shape: ProfileShape::Smoothstep,
            bump: BumpShape::Quintic,
            second_leg_sign: SecondLegSign::Literal,
            conv: SignConvention::default(),
            plateau: None,
        }
    }
}

impl LoopSpec {
    /// Admissible spec: `α(1) ≠ 0` and `α − β ≡ 1` near `t = 1`.
    pub fn new(p: LoopParams) -> Result<Self> {
        if p.alpha1 == 0.0 {
            return Err(contract("alpha(1) must be nonzero"));
        }
        if (p.alpha1 - p.beta1 - 1.0).abs() > 1e-12 {
            return Err(contract("alpha - beta must equal 1 near t = 1"));
        }
        Self::relaxed(p)
    }

    /// Any profile pair; used for diagnostics such as `α = β`.
    pub fn relaxed(p: LoopParams) -> Result<Self> {
        if p.k < 2 {
            return Err(contract("rank k must be at least 2"));
        }
        if !(p.rho > 0.0) || !(p.eps > 0.0 && p.eps < 1.0) {
            return Err(contract("need rho > 0 and eps in (0, 1)"));
        }
        if !(p.eps0 > p.rho + p.eps) {
            return Err(contract("need eps0 > rho + eps"));
        }
        let plateau = p.plateau.unwrap_or(p.rho + p.eps);
        if plateau < p.rho {
            return Err(contract("bump plateau must contain the rho-ball"));
        }
        Ok(Self {
            k: p.k,
            rho: p.rho,
            eps: p.eps,
            eps0: p.eps0,
            profiles: Profiles { shape: p.shape, alpha1: p.alpha1, gap: p.alpha1 - p.beta1, delta: PROFILE_DELTA },
            bump: RadialBump::new(p.bump, plateau, p.eps0, p.rho, p.k)?,
            second_leg_sign: p.second_leg_sign,
            conv: p.conv,
        })
    }

    pub fn alpha1(&self) -> f64 {
        self.profiles.alpha1
    }

    pub fn beta1(&self) -> f64 {
        self.profiles.beta1()
    }

    /// Time coefficient `a(t)` of `π h(|z|)`.
    pub fn a(&self, t: f64) -> f64 {
        if t <= 1.0 {
            self.profiles.alpha_d(t)
        } else {
            self.second_leg_sign.value() * self.profiles.beta_d(2.0 - t)
        }
    }

    /// `A(t) = ∫₀ᵗ a`.
    pub fn big_a(&self, t: f64) -> f64 {
        if t <= 1.0 {
            self.profiles.alpha(t)
        } else {
            let p = &self.profiles;
            p.alpha(1.0) + self.second_leg_sign.value() * (p.beta(1.0) - p.beta(2.0 - t))
        }
    }

    /// `∫₀² a = α(1) + s β(1)`.
    pub fn time_factor(&self) -> f64 {
        self.alpha1() + self.second_leg_sign.value() * self.beta1()
    }

    /// `α(1) − β(1)`, the factor assumed by the printed constants.
    pub fn paper_time_factor(&self) -> f64 {
        self.profiles.gap
    }

    /// Points where the time profile changes formula.
    pub fn time_breaks(&self) -> Vec<f64> {
        let d = self.profiles.delta;
        vec![0.0, 1.0 - d, 1.0, 1.0 + d, 2.0]
    }

    pub fn radial_breaks(&self) -> Vec<f64> {
        let mut b = vec![self.rho, self.eps, self.rho + self.eps];
        b.extend(self.bump.breaks());
        b
    }

    /// `∫₀² a(t) φ(t) dt` by Gauss over the time breaks.
    pub fn time_integral(&self, phi: impl Fn(f64) -> f64) -> f64 {
        let rule = gauss_legendre(16);
        self.time_breaks().windows(2).map(|w| rule.integrate(w[0], w[1], |t| self.a(t) * phi(t))).sum()
    }

    /// The radial factor `π h(r)`.
    pub fn spatial(&self, r: f64) -> f64 {
        PI * self.bump.h(r)
    }

    /// The loop Hamiltonian as a radial time-dependent field.
    pub fn scalar_field(&self) -> ScalarField {
        let (a, b) = (self.clone(), self.clone());
        ScalarField::radial(
            true,
            move |t, s| a.a(t.clamp(0.0, 2.0)) * PI * a.bump.h(s.sqrt()),
            move |t, s| b.a(t.clamp(0.0, 2.0)) * b.bump.f_prime(s.sqrt()),
        )
    }

    pub fn stretch_profile(&self) -> Result<StretchProfile> {
        StretchProfile::new(self.rho, self.eps)
    }

    /// `θ(t, r) = −2σ A(t) F′(r²)`.
    pub fn theta(&self, t: f64, r: f64) -> f64 {
        -2.0 * self.conv.value() * self.big_a(t) * self.bump.f_prime(r)
    }
}

/// Loop Hamiltonian at `(t, z)`, `t ∈ [0, 2]`.
pub fn loop_hamiltonian(spec: &LoopSpec, t: f64, z: &[f64]) -> Result<f64> {
    if !(0.0..=2.0).contains(&t) {
        return Err(contract("loop time must lie in [0, 2]"));
    }
    Ok(spec.a(t) * spec.spatial(norm_sq(z).sqrt()))
}

/// The Hamiltonian-generated path at time `t` (closed-form rotation).
pub fn loop_flow(spec: &LoopSpec, t: f64, z: &[f64]) -> Vec<f64> {
    let r = norm_sq(z).sqrt();
    if r >= spec.eps0 {
        return z.to_vec();
    }
    rotate(z, spec.theta(t, r))
}

/// RK4 cross-check of [`loop_flow`], integrating across the time breaks.
pub fn loop_flow_rk4(spec: &LoopSpec, t: f64, z: &[f64], steps_per_unit: usize) -> Result<Vec<f64>> {
    let h = spec.scalar_field();
    let mut p = z.to_vec();
    let mut grid: Vec<f64> = spec.time_breaks().into_iter().filter(|&s| s < t).collect();
    grid.push(t);
    for w in grid.windows(2) {
        let steps = ((w[1] - w[0]) * steps_per_unit as f64).ceil().max(1.0) as usize;
        p = flow(&h, &p, w[0], w[1], steps, spec.conv)?;
    }
    Ok(p)
}

/// Sup defects split by region: `|z| ≤ ρ`, `ρ < |z| < ε₀`, `|z| ≥ ε₀`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct RegionSplit {
    pub ball: f64,
    pub annulus: f64,
    pub outside: f64,
}

impl RegionSplit {
    fn record(&mut self, spec: &LoopSpec, r: f64, d: f64) {
        let slot = if r <= spec.rho {
            &mut self.ball
        } else if r >= spec.eps0 {
            &mut self.outside
        } else {
            &mut self.annulus
        };
        *slot = slot.max(d);
    }

    pub fn total(&self) -> f64 {
        self.ball.max(self.annulus).max(self.outside)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClosureReport {
    pub sup_defect_total: f64,
    pub sup_defect_ball: f64,
    pub sup_defect_outside: f64,
    /// `|ψ₂(z) − z|` for the Hamiltonian-generated path, by region.
    pub closure: RegionSplit,
    /// `sup |ψ^{α,g}_1 − ψ^{β,g}_1|` for the literal two-path formula.
    pub continuity_defect_at_1: f64,
    pub continuity: RegionSplit,
}

/// Samples with `|z|` uniform in `[0, 1.25 ε₀]` and uniform directions.
pub fn sample_loop_points(spec: &LoopSpec, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 2 * spec.k;
    (0..samples.max(1))
        .map(|_| {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
            let n = norm_sq(&v).sqrt();
            let r = 1.25 * spec.eps0 * rng.random::<f64>();
            for x in v.iter_mut() {
                *x *= r / n;
            }
            v
        })
        .collect()
}

pub fn closure_defect(spec: &LoopSpec, samples: usize, seed: u64) -> ClosureReport {
    let mut closure = RegionSplit::default();
    let mut continuity = RegionSplit::default();
    let s = -2.0 * spec.conv.value();
    for z in sample_loop_points(spec, samples, seed) {
        let r = norm_sq(&z).sqrt();
        let end = loop_flow(spec, 2.0, &z);
        closure.record(spec, r, dist(&end, &z));
        let fp = if r >= spec.eps0 { 0.0 } else { spec.bump.f_prime(r) };
        let a = rotate(&z, s * spec.profiles.alpha(1.0) * fp);
        let b = rotate(&z, s * spec.profiles.beta(1.0) * fp);
        continuity.record(spec, r, dist(&a, &b));
    }
    ClosureReport {
        sup_defect_total: closure.total(),
        sup_defect_ball: closure.ball,
        sup_defect_outside: closure.outside,
        closure,
        continuity_defect_at_1: continuity.total(),
        continuity,
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LoopIntegralReport {
    /// `∫₀²∫_{B_ρ} H_t` by quadrature.
    pub value: f64,
    pub error_estimate: f64,
    /// Radial-reduction oracle `T·π·Area(S^{2k−1}) ∫₀^ρ g r^{2k+1} dr`.
    pub oracle: f64,
    /// `(πρ²)^{k+1}/(k+1)!` (per convention).
    pub paper_constant: f64,
    /// `value / (paper_time_factor · paper_constant)`.
    pub ratio_to_paper: f64,
    /// Size of the integral for a unit time factor, used as relative scale.
    pub scale: f64,
    pub time_factor: f64,
    pub paper_time_factor: f64,
}

/// `∫₀²∫_{B_ρ} H^{C^k}_t dt` with the chosen volume convention.
pub fn loop_integral(spec: &LoopSpec, convention: VolumeConvention, quad: &QuadratureSpec) -> Result<LoopIntegralReport> {
    let dim = 2 * spec.k;
    let f = |z: &[f64]| {
        let sp = spec.spatial(norm_sq(z).sqrt());
        spec.time_integral(|_| 1.0) * sp
    };
    let q = shell_integrate(&f, dim, 0.0, spec.rho, &[], quad)?;
    let factor = convention.factor(spec.k);
    let unit = factor * PI * radial_reduce_split(|r| spec.bump.g(r) * r * r, dim, &[0.0, spec.rho]);
    let oracle = spec.time_factor() * unit;
    let tau = PI * spec.rho * spec.rho;
    let paper_constant = factor * tau.powi(spec.k as i32 + 1) / factorial(spec.k + 1);
    let value = factor * q.value;
    Ok(LoopIntegralReport {
        value,
        error_estimate: factor * q.error_estimate,
        oracle,
        paper_constant,
        ratio_to_paper: value / (spec.paper_time_factor() * paper_constant),
        scale: unit,
        time_factor: spec.time_factor(),
        paper_time_factor: spec.paper_time_factor(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CalabiReport {
    /// `∫₀²∫_{C^k} H_t dLeb dt`.
    pub value: f64,
    pub error_estimate: f64,
    /// `K = π ∫ g|z|² dLeb`.
    pub k_scale: f64,
    /// `π ∫ |g||z|² dLeb`, a scale that stays positive for balanced bumps.
    pub k_abs: f64,
    pub time_factor: f64,
}

pub fn calabi_integral(spec: &LoopSpec, quad: &QuadratureSpec) -> Result<CalabiReport> {
    let dim = 2 * spec.k;
    let tf = spec.time_integral(|_| 1.0);
    let f = |z: &[f64]| tf * spec.spatial(norm_sq(z).sqrt());
    let q = shell_integrate(&f, dim, 0.0, spec.eps0, &spec.radial_breaks(), quad)?;
    let mut breaks = vec![0.0];
    breaks.extend(spec.bump.breaks());
    let k_scale = PI * radial_reduce_split(|r| spec.bump.h(r), dim, &breaks);
    let k_abs = PI * radial_reduce_split(|r| spec.bump.h(r).abs(), dim, &breaks);
    Ok(CalabiReport { value: q.value, error_estimate: q.error_estimate, k_scale, k_abs, time_factor: spec.time_factor() })
}

/// Lift-commutation defect of the loop on the blow-up (`steps_per_unit` RK4 steps per time unit).
pub fn loop_lift_defect(spec: &LoopSpec, kind: LiftKind, samples: usize, seed: u64, steps_per_unit: usize) -> Result<f64> {
    let prof = spec.stretch_profile()?;
    let h = spec.scalar_field();
    let mut grid = spec.time_breaks();
    for i in 1..8 {
        grid.push(i as f64 * 0.25);
    }
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let points = sample_blowup_points(spec.k, spec.eps0 * 1.05, samples, seed);
    let psi = |t: f64, z: &[f64]| Ok(loop_flow(spec, t, z));
    let psi_tilde = |q: &BlowupPoint, g: &[f64]| lifted_flow(&h, q, g, steps_per_unit, &prof, kind, spec.conv);
    lift_commutation_defect(&psi, &psi_tilde, &points, &grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(p: LoopParams) -> LoopSpec {
        LoopSpec::new(p).unwrap()
    }

    #[test]
    fn profiles_satisfy_the_endpoint_conditions() {
        let s = spec(LoopParams::default());
        let p = &s.profiles;
        assert_eq!(p.alpha(0.0), 0.0);
        assert_eq!(p.beta(0.0), 0.0);
        for t in [0.75, 0.8, 0.9, 1.0] {
            assert!((p.alpha(t) - p.beta(t) - 1.0).abs() < 1e-14);
            assert!((p.alpha_d(t) - p.beta_d(t)).abs() < 1e-14);
        }
        assert!((p.beta(1.0) + 0.5).abs() < 1e-15);
        assert!(LoopSpec::new(LoopParams { beta1: 0.0, ..Default::default() }).is_err());
        assert!(LoopSpec::new(LoopParams { alpha1: 0.0, beta1: -1.0, ..Default::default() }).is_err());
        assert!(LoopSpec::new(LoopParams { eps0: 1.2, ..Default::default() }).is_err());
    }

    #[test]
    fn bumps_are_c2_with_correct_support() {
        for shape in [BumpShape::Quintic, BumpShape::Balanced, BumpShape::IntegerWinding] {
            let s = spec(LoopParams { bump: shape, ..Default::default() });
            let b = &s.bump;
            for r in [0.0, 0.5, 1.0, 1.5] {
                assert_eq!(b.g(r), 1.0);
            }
            assert_eq!(b.g(2.0), 0.0);
            assert_eq!(b.g(3.0), 0.0);
            for x in b.breaks() {
                let (l, r) = (x - 1e-7, x + 1e-7);
                assert!((b.h(l) - b.h(r)).abs() < 1e-5, "{shape:?} at {x}: {} {}", b.h(l), b.h(r));
                assert!((b.hp(l) - b.hp(r)).abs() < 1e-5, "{shape:?} at {x}: {} {}", b.hp(l), b.hp(r));
                let d2 = |y: f64| (b.hp(y + 1e-7) - b.hp(y - 1e-7)) / 2e-7;
                assert!((d2(x - 3e-7) - d2(x + 3e-7)).abs() < 1e-2, "{shape:?} at {x}: {} {}", d2(x - 3e-7), d2(x + 3e-7));
            }
        }
        let s = spec(LoopParams { bump: BumpShape::IntegerWinding, ..Default::default() });
        let mid = 1.5 + 0.5 / 2.0;
        assert!((s.bump.h(mid) - 1.0).abs() < 1e-14);
        assert_eq!(s.bump.f_prime(mid), 0.0);
    }

    #[test]
    fn hamiltonian_examples() {
        let s = spec(LoopParams { shape: ProfileShape::Linear, ..Default::default() });
        let z = [0.3, 0.2, -0.4, 0.1];
        let h = loop_hamiltonian(&s, 0.5, &z).unwrap();
        assert!((h - PI * 0.5 * norm_sq(&z)).abs() < 1e-14);
        let far = [2.5, 0.0, 0.0, 0.0];
        for t in [0.0, 0.3, 1.0, 1.7, 2.0] {
            assert_eq!(loop_hamiltonian(&s, t, &far).unwrap(), 0.0);
        }
        let s = spec(LoopParams::default());
        let l = loop_hamiltonian(&s, 1.0 - 1e-13, &z).unwrap();
        let r = loop_hamiltonian(&s, 1.0 + 1e-13, &z).unwrap();
        assert!((l - r).abs() < 1e-12);
        assert!(loop_hamiltonian(&s, 2.5, &z).is_err());
    }

    #[test]
    fn flow_examples() {
        let s = spec(LoopParams::default());
        let z = [0.3, 0.2, -0.4, 0.1];
        let half = loop_flow(&s, 1.0, &z);
        assert!(half.iter().zip(&z).all(|(a, b)| (a + b).abs() < 1e-12));
        let far = [2.1, 0.3, 0.0, 0.0];
        assert_eq!(loop_flow(&s, 0.7, &far), far.to_vec());
        let end = loop_flow(&s, 2.0, &[1.7, 0.0, 0.2, 0.1]);
        assert!(dist(&end, &[1.7, 0.0, 0.2, 0.1]) < 1e-12);
    }

    #[test]
    fn rk4_matches_closed_form() {
        let s = spec(LoopParams::default());
        for z in sample_loop_points(&s, 12, 5) {
            for t in [0.4, 1.0, 1.3, 2.0] {
                let a = loop_flow(&s, t, &z);
                let b = loop_flow_rk4(&s, t, &z, 2000).unwrap();
                assert!(dist(&a, &b) < 1e-8, "t={t} err={}", dist(&a, &b));
            }
        }
    }

    #[test]
    fn closure_examples() {
        let s = spec(LoopParams::default());
        let rep = closure_defect(&s, 500, 1);
        assert!(rep.sup_defect_total <= 1e-6);
        assert!(rep.continuity.ball <= 1e-6 && rep.continuity.outside <= 1e-6);
        let w = spec(LoopParams { alpha1: 1.0, beta1: 0.0, ..Default::default() });
        let rep = closure_defect(&w, 500, 1);
        assert!(rep.continuity_defect_at_1 > 1e-3);
        assert!(rep.continuity.ball <= 1e-6 && rep.continuity.outside <= 1e-6);
    }

    #[test]
    fn loop_integral_examples() {
        let q = QuadratureSpec::gauss(10);
        let w = spec(LoopParams { alpha1: 1.0, beta1: 0.0, ..Default::default() });
        let rep = loop_integral(&w, VolumeConvention::Liouville, &q).unwrap();
        assert!((rep.oracle - PI.powi(3) / 3.0).abs() < 1e-12);
        assert!((rep.value - rep.oracle).abs() < 1e-6 * rep.oracle);
        assert!((rep.ratio_to_paper - 2.0).abs() < 1e-6);
        let wedge = loop_integral(&w, VolumeConvention::Wedge, &q).unwrap();
        assert!((wedge.value - 2.0 * rep.value).abs() < 1e-12);
        let same = LoopSpec::relaxed(LoopParams {
            alpha1: 0.7,
            beta1: 0.7,
            second_leg_sign: SecondLegSign::TimeReversed,
            ..Default::default()
        })
        .unwrap();
        assert!(loop_integral(&same, VolumeConvention::Liouville, &q).unwrap().value.abs() < 1e-12);
        let half = LoopSpec::new(LoopParams { rho: 0.5, eps: 0.25, eps0: 1.0, alpha1: 1.0, beta1: 0.0, ..Default::default() }).unwrap();
        let r2 = loop_integral(&half, VolumeConvention::Liouville, &q).unwrap();
        assert!((rep.value / r2.value - 64.0).abs() < 1e-4 * 64.0);
    }

    #[test]
    fn calabi_examples() {
        let q = QuadratureSpec::gauss(10);
        let s = spec(LoopParams::default());
        let c = calabi_integral(&s, &q).unwrap();
        assert!(c.value.abs() <= 1e-6 * c.k_scale);
        let w = spec(LoopParams { alpha1: 1.0, beta1: 0.0, ..Default::default() });
        let c = calabi_integral(&w, &q).unwrap();
        assert!((c.value - c.k_scale).abs() < 1e-8 * c.k_scale);
        let b = spec(LoopParams { alpha1: 1.0, beta1: 0.0, bump: BumpShape::Balanced, ..Default::default() });
        let c = calabi_integral(&b, &q).unwrap();
        assert!(c.k_scale.abs() < 1e-10 * c.k_abs);
        assert!(c.value.abs() < 1e-8 * c.k_abs);
    }
}

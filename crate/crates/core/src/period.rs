//! Exact arithmetic in the formal variable `τ = πρ²`: period groups, the closed-form action
//! value, the infinite-order decision, and the numeric action routes it is compared against.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::bundle::{blowup_side_integral, chart_tube_integral, ModelManifoldBudget, NormalBundleModel};
use crate::error::{contract, Error, Result};
use crate::hamloop::{loop_flow, LoopSpec};
use crate::local_model::{norm_sq, ScalarField};
use crate::quad::{par_map, tube_integrate, tube_integrate_split, QuadratureSpec};

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn rat_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Polynomial in `τ` with rational coefficients; zero coefficients are never stored.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TauPoly {
    coeffs: BTreeMap<u32, BigRational>,
}

impl TauPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: BigRational) -> Self {
        Self::monomial(c, 0)
    }

    pub fn monomial(c: BigRational, e: u32) -> Self {
        let mut coeffs = BTreeMap::new();
        if !c.is_zero() {
            coeffs.insert(e, c);
        }
        Self { coeffs }
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (u32, BigRational)>) -> Self {
        terms.into_iter().fold(Self::zero(), |acc, (e, c)| &acc + &Self::monomial(c, e))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, e: u32) -> BigRational {
        self.coeffs.get(&e).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, &BigRational)> {
        self.coeffs.iter().map(|(e, c)| (*e, c))
    }

    pub fn degree(&self) -> Option<u32> {
        self.coeffs.keys().next_back().copied()
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        Self::from_terms(self.coeffs.iter().map(|(e, x)| (*e, x * c)))
    }

    pub fn eval(&self, tau: f64) -> f64 {
        self.coeffs.iter().map(|(e, c)| rat_to_f64(c) * tau.powi(*e as i32)).sum()
    }

    pub fn eval_exact(&self, tau: &BigRational) -> BigRational {
        self.coeffs.iter().map(|(e, c)| c * num_traits::pow(tau.clone(), *e as usize)).sum()
    }
}

impl Add for &TauPoly {
    type Output = TauPoly;
    fn add(self, o: &TauPoly) -> TauPoly {
        let mut coeffs = self.coeffs.clone();
        for (e, c) in &o.coeffs {
            let v = coeffs.remove(e).unwrap_or_else(BigRational::zero) + c;
            if !v.is_zero() {
                coeffs.insert(*e, v);
            }
        }
        TauPoly { coeffs }
    }
}

impl Neg for &TauPoly {
    type Output = TauPoly;
    fn neg(self) -> TauPoly {
        TauPoly { coeffs: self.coeffs.iter().map(|(e, c)| (*e, -c)).collect() }
    }
}

impl Sub for &TauPoly {
    type Output = TauPoly;
    fn sub(self, o: &TauPoly) -> TauPoly {
        self + &(-o)
    }
}

impl Mul for &TauPoly {
    type Output = TauPoly;
    fn mul(self, o: &TauPoly) -> TauPoly {
        let mut out = TauPoly::zero();
        for (e1, c1) in &self.coeffs {
            for (e2, c2) in &o.coeffs {
                out = &out + &TauPoly::monomial(c1 * c2, e1 + e2);
            }
        }
        out
    }
}

impl fmt::Display for TauPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .coeffs
            .iter()
            .map(|(e, c)| match e {
                0 => format!("{c}"),
                1 => format!("({c})τ"),
                _ => format!("({c})τ^{e}"),
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// `cℤ`, or `cℤ + τℤ` when `includes_tau`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodGroup {
    pub c: BigRational,
    pub includes_tau: bool,
}

/// Period group of the blow-up: `cℤ + τℤ`.
pub fn period_group_blowup(c: BigRational) -> Result<PeriodGroup> {
    if c.is_negative() {
        return Err(contract("period generator must be nonnegative"));
    }
    Ok(PeriodGroup { c, includes_tau: true })
}

/// A fraction of τ-polynomials, kept unreduced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeinsteinValue {
    pub numerator: TauPoly,
    pub denominator: TauPoly,
}

impl WeinsteinValue {
    pub fn new(numerator: TauPoly, denominator: TauPoly) -> Result<Self> {
        if denominator.is_zero() {
            return Err(contract("denominator is identically zero"));
        }
        Ok(Self { numerator, denominator })
    }

    pub fn eval(&self, tau: f64) -> f64 {
        self.numerator.eval(tau) / self.denominator.eval(tau)
    }

    /// Multiplies numerator and denominator by the same nonzero rational.
    pub fn rescaled(&self, r: &BigRational) -> Result<Self> {
        if r.is_zero() {
            return Err(contract("rescaling factor must be nonzero"));
        }
        Self::new(self.numerator.scale(r), self.denominator.scale(r))
    }

    pub fn is_degenerate(&self) -> bool {
        self.numerator.is_zero()
    }
}

impl fmt::Display for WeinsteinValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] / [{}]", self.numerator, self.denominator)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstantSource {
    /// The printed constant `VolN/(k+1)!`.
    #[serde(rename = "paper")]
    Published,
    /// The radial-reduction constant `k·VolN/(k+1)!`.
    #[default]
    #[serde(rename = "recomputed")]
    Recomputed,
}

fn factorial_big(n: usize) -> BigRational {
    BigRational::from_integer((1..=n).fold(BigInt::one(), |a, i| a * BigInt::from(i)))
}

/// `A τ^{k+1} / (VolM − (VolN/k!) τᵏ)` with `A` per `source`.
///
/// `rho_sq` is used only to check that the denominator is positive at `τ = πρ²`.
pub fn theorem1_value(
    k: usize,
    rho_sq: &BigRational,
    vol_m: &BigRational,
    vol_n: &BigRational,
    source: ConstantSource,
) -> Result<WeinsteinValue> {
    if k < 2 {
        return Err(contract("rank k must be at least 2"));
    }
    if !vol_m.is_positive() || vol_n.is_negative() || !rho_sq.is_positive() {
        return Err(contract("need VolM > 0, VolN >= 0 and rho^2 > 0"));
    }
    let mut a = vol_n / factorial_big(k + 1);
    if source == ConstantSource::Recomputed {
        a *= rat(k as i64);
    }
    let num = TauPoly::monomial(a, k as u32 + 1);
    let den = &TauPoly::constant(vol_m.clone()) - &TauPoly::monomial(vol_n / factorial_big(k), k as u32);
    let tau = PI * rat_to_f64(rho_sq);
    if den.eval(tau) <= 0.0 {
        return Err(contract("VolM must exceed the rho-ball bundle volume VolN tau^k / k!"));
    }
    WeinsteinValue::new(num, den)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum Verdict {
    Infinite,
    /// `m·V ∈ G` with `m·num = (a c + b τ)·den` exactly.
    Finite { m: String, a: String, b: String },
}

/// `m·num_e − a·c·den_e − b·den_{e−1} = 0` for one exponent `e`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoefficientEquation {
    pub exponent: u32,
    pub row: [BigRational; 3],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderCertificate {
    pub verdict: Verdict,
    pub equations: Vec<CoefficientEquation>,
    /// Rational basis of the solution space in `(m, a, b)`.
    pub nullspace: Vec<[BigRational; 3]>,
    /// Integer witness `(m, a, b)` when finite.
    pub witness: Option<[BigInt; 3]>,
    /// True when the witness `m` is the least positive order.
    pub minimal: bool,
}

impl OrderCertificate {
    pub fn is_infinite(&self) -> bool {
        self.verdict == Verdict::Infinite
    }

    /// Re-checks the witness identity exactly.
    pub fn verify_witness(&self, v: &WeinsteinValue, g: &PeriodGroup) -> bool {
        match &self.witness {
            None => true,
            Some([m, a, b]) => {
                let lhs = v.numerator.scale(&BigRational::from_integer(m.clone()));
                let rhs_factor = TauPoly::from_terms([
                    (0, BigRational::from_integer(a.clone()) * &g.c),
                    (1, if g.includes_tau { BigRational::from_integer(b.clone()) } else { BigRational::zero() }),
                ]);
                lhs == &rhs_factor * &v.denominator && !m.is_zero()
            }
        }
    }
}

/// Reduced row echelon form; returns pivot columns.
fn rref(rows: &mut [Vec<BigRational>], ncols: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else { continue };
        rows.swap(r, p);
        let inv = rows[r][c].recip();
        for x in rows[r].iter_mut() {
            *x = &*x * &inv;
        }
        for i in 0..rows.len() {
            if i != r && !rows[i][c].is_zero() {
                let f = rows[i][c].clone();
                let pivot_row = rows[r].clone();
                for (x, y) in rows[i].iter_mut().zip(&pivot_row) {
                    *x = &*x - &(&f * y);
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    pivots
}

fn nullspace(rows: &[[BigRational; 3]]) -> Vec<[BigRational; 3]> {
    let mut m: Vec<Vec<BigRational>> = rows.iter().map(|r| r.to_vec()).collect();
    let pivots = rref(&mut m, 3);
    let mut basis = Vec::new();
    for free in (0..3).filter(|c| !pivots.contains(c)) {
        let mut v: [BigRational; 3] = [BigRational::zero(), BigRational::zero(), BigRational::zero()];
        v[free] = BigRational::one();
        for (row, &pc) in pivots.iter().enumerate() {
            v[pc] = -m[row][free].clone();
        }
        basis.push(v);
    }
    basis
}

fn lcm_denominators(v: &[BigRational]) -> BigInt {
    v.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()))
}

/// Decides whether some nonzero multiple of `V` lies in `G`, treating `τ` as transcendental.
pub fn order_decision(v: &WeinsteinValue, g: &PeriodGroup) -> Result<OrderCertificate> {
    let den = &v.denominator;
    if den.terms().count() > 1 {
        let k = den.degree().unwrap_or(0);
        let low = den.terms().next().map(|t| t.0).unwrap_or(0);
        let exps = [low, low + 1, k, k + 1];
        for i in 0..4 {
            for j in (i + 1)..4 {
                if exps[i] == exps[j] {
                    return Err(Error::Unsupported(format!(
                        "exponent collision: tau^{} arises from both the constant and the tau period terms (k = {k})",
                        exps[i]
                    )));
                }
            }
        }
    }
    let mut exps: Vec<u32> = v.numerator.terms().map(|t| t.0).collect();
    for (e, _) in den.terms() {
        exps.push(e);
        exps.push(e + 1);
    }
    exps.sort_unstable();
    exps.dedup();
    let tau_coeff = if g.includes_tau { BigRational::one() } else { BigRational::zero() };
    let equations: Vec<CoefficientEquation> = exps
        .iter()
        .map(|&e| CoefficientEquation {
            exponent: e,
            row: [
                v.numerator.coeff(e),
                -(&g.c * den.coeff(e)),
                if e == 0 { BigRational::zero() } else { -(&tau_coeff * den.coeff(e - 1)) },
            ],
        })
        .collect();
    let rows: Vec<[BigRational; 3]> = equations.iter().map(|e| e.row.clone()).collect();
    let basis = nullspace(&rows);
    let with_m: Vec<&[BigRational; 3]> = basis.iter().filter(|b| !b[0].is_zero()).collect();
    let Some(first) = with_m.first() else {
        return Ok(OrderCertificate { verdict: Verdict::Infinite, equations, nullspace: basis, witness: None, minimal: true });
    };
    let mut w: Vec<BigRational> = first.to_vec();
    if w[0].is_negative() {
        w = w.iter().map(|x| -x).collect();
    }
    let l = BigRational::from_integer(lcm_denominators(&w));
    let mut ints: Vec<BigInt> = w.iter().map(|x| (x * &l).to_integer()).collect();
    let gcd = ints.iter().fold(BigInt::zero(), |a, x| a.gcd(x));
    if !gcd.is_zero() {
        ints = ints.iter().map(|x| x / &gcd).collect();
    }
    // Columns that are identically zero leave a coordinate free; pin it to 0 for the witness.
    if g.c.is_zero() {
        ints[1] = BigInt::zero();
    }
    if !g.includes_tau {
        ints[2] = BigInt::zero();
    }
    let minimal = basis.len() == 1 || (basis.len() == 2 && (g.c.is_zero() || !g.includes_tau));
    let m = ints[0].clone();
    Ok(OrderCertificate {
        verdict: Verdict::Finite { m: m.to_string(), a: ints[1].to_string(), b: ints[2].to_string() },
        equations,
        nullspace: basis,
        witness: Some([ints[0].clone(), ints[1].clone(), ints[2].clone()]),
        minimal,
    })
}

/// Closest approach of `m·V(τ)` to `cℤ + τℤ` found by search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BruteForce {
    pub min_residual: f64,
    pub m: u64,
    pub a: i64,
    pub b: i64,
}

/// `π` as an unevaluated double-double.
const PI_LO: f64 = 1.2246467991473532e-16;

/// Exhaustive search over `1 ≤ m ≤ m_max`, `|b| ≤ bound` with `a` chosen optimally per `b`.
///
/// `τ = π·rho_sq`; `b·τ` is formed in double-double arithmetic.
pub fn brute_force_oracle(v: &WeinsteinValue, g: &PeriodGroup, rho_sq: f64, m_max: u64, bound: i64) -> BruteForce {
    let tau_hi = PI * rho_sq;
    let tau_lo = PI_LO * rho_sq + PI.mul_add(rho_sq, -tau_hi);
    let x = v.eval(tau_hi);
    let c = rat_to_f64(&g.c);
    let ms: Vec<u64> = (1..=m_max).collect();
    let best = par_map(&ms, |&m| {
        let target = m as f64 * x;
        let mut best = BruteForce { min_residual: f64::INFINITY, m, a: 0, b: 0 };
        let b_range = if g.includes_tau { -bound..=bound } else { 0..=0 };
        for b in b_range {
            let bf = b as f64;
            let p = bf * tau_hi;
            let e = bf.mul_add(tau_hi, -p);
            let rest = (target - p) - e - bf * tau_lo;
            let (a, r) = if c == 0.0 {
                (0, rest.abs())
            } else {
                let a = (rest / c).round().clamp(-(bound as f64), bound as f64);
                (a as i64, (rest - a * c).abs())
            };
            if r < best.min_residual {
                best = BruteForce { min_residual: r, m, a, b };
            }
        }
        best
    });
    best.into_iter().min_by(|p, q| p.min_residual.total_cmp(&q.min_residual)).expect("m_max >= 1")
}

/// Distance from `x` to `cℤ + τℤ` with `|b| ≤ bound`.
pub fn lattice_distance(x: f64, g: &PeriodGroup, tau: f64, bound: i64) -> f64 {
    let c = rat_to_f64(&g.c);
    let range = if g.includes_tau { -bound..=bound } else { 0..=0 };
    range
        .map(|b| {
            let rest = x - b as f64 * tau;
            if c == 0.0 {
                rest.abs()
            } else {
                (rest - (rest / c).round() * c).abs()
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// `H_t − c_t/VolM`.
pub fn normalize_hamiltonian(h: &ScalarField, vol_m: &BigRational, integral_c_t: f64) -> Result<ScalarField> {
    if !vol_m.is_positive() {
        return Err(contract("VolM must be positive"));
    }
    Ok(h.shifted(integral_c_t / rat_to_f64(vol_m)))
}

/// `A_base + tube_integral / VolM̃`.
pub fn theorem2_combine(a_base: f64, tube_integral: f64, vol_m_tilde: f64) -> Result<f64> {
    if !(vol_m_tilde > 0.0) {
        return Err(contract("blown-up volume must be positive"));
    }
    Ok(a_base + tube_integral / vol_m_tilde)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeinsteinNumeric {
    /// `∫₀² H̃norm(x₀) dt` via the blow-up-side integral.
    pub value: f64,
    /// Time factor `∫₀² a(t) dt`.
    pub time_factor: f64,
    /// Spatial value of the lifted Hamiltonian at the basepoint.
    pub h_basepoint: f64,
    /// `∫_{M̃} (πh)~ ω̃ⁿ/n!` (spatial part).
    pub c_tilde: f64,
    /// `∫_M πh ωⁿ/n!`.
    pub c_downstairs: f64,
    /// `∫_{𝒰_ρ} πh ωⁿ/n!`.
    pub i_rho: f64,
    pub vol_u_rho: f64,
    /// `VolM − Vol(𝒰_ρ)`.
    pub vol_m_tilde: f64,
    /// Blown-up volume from the chart integral plus the budget.
    pub vol_m_tilde_direct: f64,
    /// Base-loop action `∫₀² H^M_norm(x₀) dt`.
    pub a_base: f64,
    /// [`theorem2_combine`] applied to the downstairs data.
    pub combined: f64,
}

/// Both action routes for the loop with a constant cap at `basepoint = (b, z)`.
pub fn weinstein_action_numeric(
    spec: &LoopSpec,
    model: &NormalBundleModel,
    budget: &ModelManifoldBudget,
    basepoint: &[f64],
    eps_prime: f64,
    quad: &QuadratureSpec,
) -> Result<WeinsteinNumeric> {
    budget.validate(model, spec.eps0)?;
    if basepoint.len() != 2 + 2 * model.k {
        return Err(contract("basepoint must be (b1, b2, z)"));
    }
    let z0 = &basepoint[2..];
    let r0 = norm_sq(z0).sqrt();
    if r0 <= spec.rho + spec.eps {
        return Err(contract("basepoint must lie outside the (rho+eps)-tube"));
    }
    for i in 0..=40 {
        let t = i as f64 * 0.05;
        let moved = loop_flow(spec, t, z0);
        if moved.iter().zip(z0).any(|(a, b)| (a - b).abs() > 1e-12) {
            return Err(contract("basepoint is moved by the loop; only constant caps are supported"));
        }
    }
    let prof = spec.stretch_profile()?;
    let breaks = spec.bump.breaks();
    let phi = |r: f64| spec.spatial(r);
    let f = |_: &[f64], z: &[f64]| phi(norm_sq(z).sqrt());
    let one = |_: &[f64], _: &[f64]| 1.0;
    let c_tilde = blowup_side_integral(model, &prof, &phi, &breaks, eps_prime, spec.eps0, quad)?.total;
    let c_downstairs = tube_integrate_split(model, &f, 0.0, spec.eps0, &breaks, quad)?.value;
    let i_rho = tube_integrate(model, &f, 0.0, spec.rho, quad)?.value;
    let vol_u_rho = tube_integrate(model, &one, 0.0, spec.rho, quad)?.value;
    let vol_m = budget.vol_m_f64();
    let vol_m_tilde = vol_m - vol_u_rho;
    let vol_m_tilde_direct = vol_m - tube_integrate(model, &one, 0.0, eps_prime, quad)?.value
        + chart_tube_integral(model, &prof, &|_| 1.0, &[], eps_prime, quad.order + 4)?;
    let tf = spec.time_factor();
    let h0 = phi(r0);
    let value = tf * h0 - tf * c_tilde / vol_m_tilde;
    let a_base = tf * h0 - tf * c_downstairs / vol_m;
    let combined = theorem2_combine(a_base, tf * (i_rho - c_downstairs * vol_u_rho / vol_m), vol_m_tilde)?;
    Ok(WeinsteinNumeric {
        value,
        time_factor: tf,
        h_basepoint: h0,
        c_tilde,
        c_downstairs,
        i_rho,
        vol_u_rho,
        vol_m_tilde,
        vol_m_tilde_direct,
        a_base,
        combined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{BaseKind, BaseManifold, ConnectionPreset};
    use crate::hamloop::{BumpShape, LoopParams, SecondLegSign};

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn t1(source: ConstantSource) -> WeinsteinValue {
        theorem1_value(2, &rat(1), &rat(10), &rat(1), source).unwrap()
    }

    #[test]
    fn tau_poly_arithmetic() {
        let p = TauPoly::from_terms([(0, q(1, 2)), (3, q(-2, 7))]);
        let r = TauPoly::from_terms([(1, q(5, 3)), (3, q(2, 7))]);
        assert_eq!(&(&p + &r) - &r, p);
        assert_eq!((&p + &r).coeff(3), BigRational::zero());
        assert_eq!((&p * &r).degree(), Some(6));
        assert_eq!((&p * &r).coeff(6), q(-4, 49));
        assert!((p.eval(2.0) - (0.5 - 16.0 / 7.0)).abs() < 1e-15);
        assert_eq!(p.eval_exact(&rat(2)), q(1, 2) - q(16, 7));
    }

    #[test]
    fn period_group_examples() {
        assert_eq!(period_group_blowup(rat(1)).unwrap(), PeriodGroup { c: rat(1), includes_tau: true });
        assert_eq!(period_group_blowup(rat(0)).unwrap().c, rat(0));
        assert_eq!(period_group_blowup(q(3, 2)).unwrap().c, q(3, 2));
        assert!(period_group_blowup(rat(-1)).is_err());
    }

    #[test]
    fn theorem1_examples() {
        let p = t1(ConstantSource::Published);
        assert_eq!(p.numerator, TauPoly::monomial(q(1, 6), 3));
        assert_eq!(p.denominator, TauPoly::from_terms([(0, rat(10)), (2, q(-1, 2))]));
        assert_eq!(t1(ConstantSource::Recomputed).numerator, TauPoly::monomial(q(1, 3), 3));
        let z = theorem1_value(2, &rat(1), &rat(10), &rat(0), ConstantSource::Published).unwrap();
        assert!(z.is_degenerate());
        assert!(theorem1_value(2, &rat(1), &rat(0), &rat(1), ConstantSource::Published).is_err());
        assert!(theorem1_value(2, &rat(1), &rat(4), &rat(1), ConstantSource::Published).is_err());
        assert!(theorem1_value(1, &rat(1), &rat(10), &rat(1), ConstantSource::Published).is_err());
    }

    #[test]
    fn order_decision_examples() {
        let g = period_group_blowup(rat(1)).unwrap();
        for s in [ConstantSource::Published, ConstantSource::Recomputed] {
            let c = order_decision(&t1(s), &g).unwrap();
            assert!(c.is_infinite());
        }
        let zero = WeinsteinValue::new(TauPoly::zero(), TauPoly::constant(rat(1))).unwrap();
        let c = order_decision(&zero, &g).unwrap();
        assert_eq!(c.verdict, Verdict::Finite { m: "1".into(), a: "0".into(), b: "0".into() });
        let tau = WeinsteinValue::new(TauPoly::monomial(rat(1), 1), TauPoly::constant(rat(1))).unwrap();
        let c = order_decision(&tau, &g).unwrap();
        assert_eq!(c.verdict, Verdict::Finite { m: "1".into(), a: "0".into(), b: "1".into() });
        assert!(c.verify_witness(&tau, &g));
        let third = WeinsteinValue::new(TauPoly::constant(q(2, 3)), TauPoly::constant(rat(1))).unwrap();
        let c = order_decision(&third, &g).unwrap();
        assert_eq!(c.verdict, Verdict::Finite { m: "3".into(), a: "2".into(), b: "0".into() });
        assert!(c.verify_witness(&third, &g));
        let collide = WeinsteinValue::new(
            TauPoly::monomial(rat(1), 2),
            TauPoly::from_terms([(0, rat(10)), (1, rat(-1))]),
        )
        .unwrap();
        assert!(matches!(order_decision(&collide, &g), Err(Error::Unsupported(_))));
    }

    #[test]
    fn brute_force_finds_planted_witness() {
        let g = period_group_blowup(rat(1)).unwrap();
        let v = WeinsteinValue::new(
            TauPoly::from_terms([(0, q(3, 7)), (1, q(-5, 7))]),
            TauPoly::constant(rat(1)),
        )
        .unwrap();
        let bf = brute_force_oracle(&v, &g, 1.0, 10, 100);
        assert!(bf.min_residual < 1e-12);
        assert_eq!((bf.m, bf.a, bf.b), (7, 3, -5));
        assert!(lattice_distance(PI * 3.0 + 2.0, &g, PI, 10) < 1e-14);
    }

    #[test]
    fn combine_and_normalize() {
        assert_eq!(theorem2_combine(1.5, 0.0, 3.0).unwrap(), 1.5);
        let a = theorem2_combine(0.0, 2.0, 4.0).unwrap();
        let b = theorem2_combine(0.0, 2.0, 8.0).unwrap();
        assert_eq!(a, 2.0 * b);
        assert!(theorem2_combine(0.0, 1.0, 0.0).is_err());
        let h = normalize_hamiltonian(&ScalarField::new(false, |_, _| 5.0), &rat(2), 10.0).unwrap();
        assert_eq!(h.evaluate(0.0, &[0.0; 4]), 0.0);
        let h = normalize_hamiltonian(&ScalarField::quadratic(1.0), &rat(2), 0.0).unwrap();
        assert_eq!(h.evaluate(0.0, &[1.0, 0.0, 0.0, 0.0]), 1.0);
    }

    fn winding() -> LoopSpec {
        LoopSpec::new(LoopParams { alpha1: 1.0, beta1: 0.0, bump: BumpShape::Balanced, ..Default::default() }).unwrap()
    }

    fn model(conn: ConnectionPreset) -> NormalBundleModel {
        NormalBundleModel::new(2, BaseManifold::new(BaseKind::Torus2, rat(1)).unwrap(), conn).unwrap()
    }

    #[test]
    fn routes_agree_with_the_exact_fraction() {
        let budget = ModelManifoldBudget::new(rat(100), rat(1)).unwrap();
        let quad = QuadratureSpec::gauss(8);
        let exact = theorem1_value(2, &rat(1), &rat(100), &rat(1), ConstantSource::Recomputed).unwrap().eval(PI);
        for conn in [ConnectionPreset::Flat, ConnectionPreset::Diagonal { kappa: 0.05 }] {
            let w = weinstein_action_numeric(&winding(), &model(conn), &budget, &[0.0, 0.0, 3.0, 0.0, 0.0, 0.0], 1.75, &quad).unwrap();
            assert!((w.value - w.combined).abs() <= 1e-4 * w.value.abs());
            assert!((w.value - exact).abs() <= 1e-4 * exact, "{} vs {exact}", w.value);
            assert!((w.vol_m_tilde - w.vol_m_tilde_direct).abs() <= 1e-4 * w.vol_m_tilde);
        }
    }

    #[test]
    fn action_vanishes_for_equal_legs() {
        let budget = ModelManifoldBudget::new(rat(100), rat(1)).unwrap();
        let spec = LoopSpec::relaxed(LoopParams {
            alpha1: 0.7,
            beta1: 0.7,
            second_leg_sign: SecondLegSign::TimeReversed,
            ..Default::default()
        })
        .unwrap();
        let w = weinstein_action_numeric(&spec, &model(ConnectionPreset::Flat), &budget, &[0.0, 0.0, 3.0, 0.0, 0.0, 0.0], 1.75, &QuadratureSpec::gauss(6)).unwrap();
        assert!(w.value.abs() <= 1e-6);
        assert!(weinstein_action_numeric(&spec, &model(ConnectionPreset::Flat), &budget, &[0.0, 0.0, 0.5, 0.0, 0.0, 0.0], 1.75, &QuadratureSpec::gauss(6)).is_err());
    }
}

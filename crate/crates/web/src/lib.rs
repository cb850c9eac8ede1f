//! Browser bindings: stretch-profile curve, loop rotation angles and the exact action value.
//!
//! Each export wraps a plain function so the logic is testable natively.

use std::f64::consts::PI;

use blowup_loops::blowup_local::StretchProfile;
use blowup_loops::hamloop::{loop_flow, LoopParams, LoopSpec, SecondLegSign};
use blowup_loops::period::{order_decision, period_group_blowup, theorem1_value, ConstantSource, Verdict};
use num_bigint::BigInt;
use num_rational::BigRational;
use wasm_bindgen::prelude::*;

/// `[x0, f(x0), x1, f(x1), ...]` on `[0, ρ + ε + 1/2]`.
pub fn profile_curve(rho: f64, eps: f64, samples: usize) -> Result<Vec<f64>, String> {
    let prof = StretchProfile::new(rho, eps).map_err(|e| e.to_string())?;
    let n = samples.clamp(2, 10_000);
    let end = prof.outer() + 0.5;
    Ok((0..n)
        .flat_map(|i| {
            let x = end * i as f64 / (n - 1) as f64;
            [x, prof.f(x)]
        })
        .collect())
}

/// `[t0, θ0, t1, θ1, ...]`: unwrapped rotation angle of the point `(r, 0, …)` along the loop.
pub fn rotation_angles(alpha1: f64, beta1: f64, literal: bool, r: f64, samples: usize) -> Result<Vec<f64>, String> {
    let spec = LoopSpec::relaxed(LoopParams {
        alpha1,
        beta1,
        second_leg_sign: if literal { SecondLegSign::Literal } else { SecondLegSign::TimeReversed },
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let n = samples.clamp(2, 10_000);
    let z = [r, 0.0, 0.0, 0.0];
    let mut out = Vec::with_capacity(2 * n);
    let mut prev = 0.0;
    for i in 0..n {
        let t = 2.0 * i as f64 / (n - 1) as f64;
        let w = loop_flow(&spec, t, &z);
        let raw = w[1].atan2(w[0]);
        // unwrap against the previous sample
        let theta = raw + 2.0 * PI * ((prev - raw) / (2.0 * PI)).round();
        out.extend([t, theta]);
        prev = theta;
    }
    Ok(out)
}

fn rat(num: i64, den: i64) -> Result<BigRational, String> {
    if den == 0 {
        return Err("denominator must be nonzero".into());
    }
    Ok(BigRational::new(BigInt::from(num), BigInt::from(den)))
}

/// Exact action value, its size at `τ = πρ²` and the order verdict, as JSON text.
#[allow(clippy::too_many_arguments)]
pub fn action_summary(
    k: usize,
    rho_sq: (i64, i64),
    vol_m: (i64, i64),
    vol_n: (i64, i64),
    c: (i64, i64),
    printed_constant: bool,
) -> Result<String, String> {
    let rho_sq = rat(rho_sq.0, rho_sq.1)?;
    let src = if printed_constant { ConstantSource::Published } else { ConstantSource::Recomputed };
    let v = theorem1_value(k, &rho_sq, &rat(vol_m.0, vol_m.1)?, &rat(vol_n.0, vol_n.1)?, src).map_err(|e| e.to_string())?;
    let g = period_group_blowup(rat(c.0, c.1)?).map_err(|e| e.to_string())?;
    let cert = order_decision(&v, &g).map_err(|e| e.to_string())?;
    let tau = PI * num_traits::ToPrimitive::to_f64(&rho_sq).unwrap_or(f64::NAN);
    let verdict = match cert.verdict {
        Verdict::Infinite => "infinite".to_string(),
        Verdict::Finite { m, a, b } => format!("finite (m={m}, a={a}, b={b})"),
    };
    Ok(format!(
        "{{\"numerator\":\"{}\",\"denominator\":\"{}\",\"value\":\"{:e}\",\"verdict\":\"{}\"}}",
        v.numerator,
        v.denominator,
        v.eval(tau),
        verdict
    ))
}

#[wasm_bindgen(js_name = profileCurve)]
pub fn profile_curve_js(rho: f64, eps: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    profile_curve(rho, eps, samples).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = rotationAngles)]
pub fn rotation_angles_js(alpha1: f64, beta1: f64, literal: bool, r: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    rotation_angles(alpha1, beta1, literal, r, samples).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = actionSummary)]
#[allow(clippy::too_many_arguments)]
pub fn action_summary_js(
    k: usize,
    rho_sq_num: i32,
    rho_sq_den: i32,
    vol_m_num: i32,
    vol_m_den: i32,
    vol_n_num: i32,
    vol_n_den: i32,
    c_num: i32,
    c_den: i32,
    printed_constant: bool,
) -> Result<String, JsError> {
    action_summary(
        k,
        (rho_sq_num.into(), rho_sq_den.into()),
        (vol_m_num.into(), vol_m_den.into()),
        (vol_n_num.into(), vol_n_den.into()),
        (c_num.into(), c_den.into()),
        printed_constant,
    )
    .map_err(|e| JsError::new(&e))
}

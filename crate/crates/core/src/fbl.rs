//! Normal approximation of the finite-blocklength AWGN channel.
//!
//! `D ≈ R C(δ) - Q⁻¹(ς) sqrt(R V(δ))` with `C = log2(1 + δ)` and the AWGN dispersion
//! `V = (1 - (1 + δ)⁻²) (log2 e)²`. The `O(log R)` correction is not modelled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LOG2_E_SQ: f64 = std::f64::consts::LOG2_E * std::f64::consts::LOG2_E;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Gaussian tail probability `Q(x) = ½ erfc(x / √2)`.
#[inline]
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Lower-tail inverse normal CDF, Acklam's rational approximation (relative error ~1.2e-9).
fn inverse_normal_cdf_approx(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

/// Inverse of [`q_function`] on `(0, 1)`.
///
/// Rational approximation followed by one Newton step on `Q(x) - p`.
pub fn q_inverse(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::param("p", format!("must lie in (0, 1), got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let x = -inverse_normal_cdf_approx(p);
    let pdf = INV_SQRT_2PI * (-0.5 * x * x).exp();
    // Q'(x) = -φ(x)
    Ok(x + (q_function(x) - p) / pdf)
}

/// Shannon capacity in bits per channel use.
#[inline]
pub fn capacity(delta: f64) -> f64 {
    delta.ln_1p() * std::f64::consts::LOG2_E
}

/// AWGN channel dispersion in bits² per channel use.
#[inline]
pub fn dispersion(delta: f64) -> f64 {
    let inv = 1.0 / (1.0 + delta);
    (1.0 - inv * inv) * LOG2_E_SQ
}

/// Payload and reliability target of one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodingSpec {
    pub payload_bits: u32,
    pub target_error: f64,
}

impl CodingSpec {
    /// `target_error` must lie in `(0, 0.5]`; `0.5` is the dispersion-free limit.
    pub fn new(payload_bits: u32, target_error: f64) -> Result<Self> {
        if payload_bits == 0 {
            return Err(Error::param("payload_bits", "must be at least 1"));
        }
        if !(target_error > 0.0 && target_error <= 0.5) {
            return Err(Error::param(
                "target_error",
                format!("must lie in (0, 0.5), got {target_error}"),
            ));
        }
        Ok(CodingSpec {
            payload_bits,
            target_error,
        })
    }

    fn q_inv(&self) -> f64 {
        q_inverse(self.target_error).expect("target error validated on construction")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub channel_uses: u64,
    pub predicted_sinr: f64,
    /// Real-valued blocklength from the closed form, before integer rounding.
    pub closed_form: f64,
}

/// Real-valued channel uses solving `D = R C - Q⁻¹(ς) sqrt(R V)` for `R`.
///
/// Returns `+∞` when `delta` has no capacity.
pub fn channel_uses_closed_form(spec: &CodingSpec, delta: f64) -> f64 {
    let c = capacity(delta);
    if !(c > 0.0) {
        return f64::INFINITY;
    }
    let d = f64::from(spec.payload_bits);
    let qv = spec.q_inv().powi(2) * dispersion(delta);
    if qv == 0.0 {
        return d / c;
    }
    d / c + qv / (2.0 * c * c) * (1.0 + (1.0 + 4.0 * d * c / qv).sqrt())
}

/// Decoding error after `r` channel uses at SINR `delta`.
pub fn achieved_error(spec: &CodingSpec, r: u64, delta: f64) -> f64 {
    let d = f64::from(spec.payload_bits);
    let r = r as f64;
    let c = capacity(delta.max(0.0));
    let v = dispersion(delta.max(0.0));
    let margin = r * c - d;
    if v <= 0.0 {
        return if margin < 0.0 {
            1.0
        } else if margin > 0.0 {
            0.0
        } else {
            0.5
        };
    }
    q_function(margin / (r * v).sqrt())
}

/// Smallest integer blocklength meeting the target at SINR `delta_p`.
///
/// Starts from the ceiling of the closed form and corrects by a short local search.
/// Returns `None` when `delta_p` carries no capacity (unallocatable slot).
pub fn required_channel_uses(spec: &CodingSpec, delta_p: f64) -> Option<Allocation> {
    let real = channel_uses_closed_form(spec, delta_p);
    if !real.is_finite() || real >= u64::MAX as f64 {
        return None;
    }
    let meets = |r: u64| achieved_error(spec, r, delta_p) <= spec.target_error;
    let mut r = (real.ceil() as u64).max(1);
    while r > 1 && meets(r - 1) {
        r -= 1;
    }
    while !meets(r) {
        r += 1;
    }
    Some(Allocation {
        channel_uses: r,
        predicted_sinr: delta_p,
        closed_form: real,
    })
}

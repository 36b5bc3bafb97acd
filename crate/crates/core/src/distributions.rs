//! One-dimensional marginal distributions (normal, beta, uniform) and the
//! standard normal CDF / inverse CDF used by the copula transforms.

use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF Φ(x).
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal PDF φ(x).
pub fn std_normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal inverse CDF Φ⁻¹(p), p ∈ (0, 1).
///
/// Rational-approximation initial guess refined by one Halley step against
/// the accurate CDF; the copula transforms call this at every quadrature
/// node, so it must stay cheap.
pub fn std_normal_inv_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "std_normal_inv_cdf requires p in (0,1), got {p}"
        )));
    }
    let x = inv_cdf_initial_guess(p);
    // Halley refinement: u = (Φ(x) − p)/φ(x), x ← x − u / (1 + x·u/2).
    let u = (std_normal_cdf(x) - p) / std_normal_pdf(x);
    Ok(x - u / (1.0 + 0.5 * x * u))
}

/// Acklam-style rational approximation, relative error below 1.2e-9.
fn inv_cdf_initial_guess(p: f64) -> f64 {
    const A: [f64; 6] = [
        -39.696_830_286_653_76,
        220.946_098_424_520_9,
        -275.928_510_446_968_96,
        138.357_751_867_269_1,
        -30.664_798_066_147_16,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -54.476_098_798_224_06,
        161.585_836_858_040_9,
        -155.698_979_859_886_6,
        66.801_311_887_719_72,
        -13.280_681_552_885_72,
    ];
    const C: [f64; 6] = [
        -0.007_784_894_002_430_293,
        -0.322_396_458_041_136_4,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        0.007_784_695_709_041_462,
        0.322_467_129_070_039_8,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p > 1.0 - P_LOW {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// One-dimensional marginal distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Marginal {
    Normal {
        mean: f64,
        std: f64,
    },
    Beta {
        alpha: f64,
        beta: f64,
        lower: f64,
        upper: f64,
    },
    Uniform {
        lower: f64,
        upper: f64,
    },
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Marginal::Normal { mean, std } => {
                if !mean.is_finite() || !std.is_finite() || std <= 0.0 {
                    return Err(Error::Validation(format!(
                        "normal marginal requires finite mean and std > 0, got mean={mean}, std={std}"
                    )));
                }
            }
            Marginal::Beta {
                alpha,
                beta,
                lower,
                upper,
            } => {
                if !(alpha > 0.0 && beta > 0.0) {
                    return Err(Error::Validation(format!(
                        "beta marginal requires alpha > 0 and beta > 0, got alpha={alpha}, beta={beta}"
                    )));
                }
                if !(lower < upper) {
                    return Err(Error::Validation(format!(
                        "beta marginal requires lower < upper, got [{lower}, {upper}]"
                    )));
                }
            }
            Marginal::Uniform { lower, upper } => {
                if !(lower < upper) {
                    return Err(Error::Validation(format!(
                        "uniform marginal requires lower < upper, got [{lower}, {upper}]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Density f(x). Zero outside the support.
    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Normal { mean, std } => {
                let z = (x - mean) / std;
                std_normal_pdf(z) / std
            }
            Marginal::Beta {
                alpha,
                beta,
                lower,
                upper,
            } => {
                if x <= lower || x >= upper {
                    return 0.0;
                }
                let w = upper - lower;
                let t = (x - lower) / w;
                let ln_pdf =
                    (alpha - 1.0) * t.ln() + (beta - 1.0) * (1.0 - t).ln() - ln_beta(alpha, beta);
                ln_pdf.exp() / w
            }
            Marginal::Uniform { lower, upper } => {
                if x < lower || x > upper {
                    0.0
                } else {
                    1.0 / (upper - lower)
                }
            }
        }
    }

    /// Distribution function F(x), clamped to {0, 1} outside the support.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Normal { mean, std } => std_normal_cdf((x - mean) / std),
            Marginal::Beta {
                alpha,
                beta,
                lower,
                upper,
            } => {
                if x <= lower {
                    0.0
                } else if x >= upper {
                    1.0
                } else {
                    beta_reg(alpha, beta, (x - lower) / (upper - lower))
                }
            }
            Marginal::Uniform { lower, upper } => ((x - lower) / (upper - lower)).clamp(0.0, 1.0),
        }
    }

    /// Quantile function F⁻¹(p), p ∈ (0, 1).
    pub fn inv_cdf(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!(
                "inverse CDF requires p in (0,1), got {p}"
            )));
        }
        match *self {
            Marginal::Normal { mean, std } => Ok(mean + std * std_normal_inv_cdf(p)?),
            Marginal::Beta {
                alpha,
                beta,
                lower,
                upper,
            } => {
                let t = beta_inv_reg(alpha, beta, p);
                Ok(lower + (upper - lower) * t)
            }
            Marginal::Uniform { lower, upper } => Ok(lower + (upper - lower) * p),
        }
    }

    /// F⁻¹(Φ(y)) for a latent standard normal value y; exact for normal
    /// marginals (avoids the Φ / Φ⁻¹ round trip).
    pub fn from_latent(&self, y: f64) -> Result<f64> {
        match *self {
            Marginal::Normal { mean, std } => Ok(mean + std * y),
            _ => {
                let u = std_normal_cdf(y).clamp(1e-15, 1.0 - 1e-15);
                self.inv_cdf(u)
            }
        }
    }

    /// Support interval; infinite for the normal family.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Marginal::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Marginal::Beta { lower, upper, .. } | Marginal::Uniform { lower, upper } => {
                (lower, upper)
            }
        }
    }
}

/// Inverse regularized incomplete beta function via bracketed Newton on the CDF.
fn beta_inv_reg(alpha: f64, beta: f64, p: f64) -> f64 {
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    // Mean as a starting point.
    let mut t = (alpha / (alpha + beta)).clamp(1e-12, 1.0 - 1e-12);
    let ln_b = ln_beta(alpha, beta);
    for _ in 0..100 {
        let f = beta_reg(alpha, beta, t) - p;
        if f > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let ln_pdf = (alpha - 1.0) * t.ln() + (beta - 1.0) * (1.0 - t).ln() - ln_b;
        let step = f * (-ln_pdf).exp();
        let mut next = t - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-15 * t.max(1e-3) {
            return next;
        }
        t = next;
    }
    t
}

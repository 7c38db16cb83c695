//! Gallager's `E_o`, the sphere-packing and random-coding exponents, and the
//! tilted output laws and channels attached to a slope parameter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::Channel;
use crate::classify::is_symmetric;
use crate::error::{Error, Result};
use crate::measures::{conditional_divergence, divergence_to_output, mutual_information, output_distribution};
use crate::simplex;

/// Tolerance on the slope parameter returned by the 1-D maximizations.
pub const RHO_TOL: f64 = 1e-10;
/// Upper cap of the slope bracket.
pub const RHO_CAP: f64 = 1_048_576.0;

pub(crate) fn log_sum_exp(v: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.into_iter().collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Per-output pieces of `E_o(rho, Q)`: `ln g_y` and `sum_x Q W^s ln W / g_y`.
struct EoTerms {
    log_g: Vec<f64>,
    weighted_log: Vec<f64>,
}

fn eo_terms(ch: &Channel, rho: f64, q: &[f64]) -> EoTerms {
    let s = 1.0 / (1.0 + rho);
    let mut log_g = Vec::with_capacity(ch.num_outputs());
    let mut weighted_log = Vec::with_capacity(ch.num_outputs());
    for y in 0..ch.num_outputs() {
        let mut logs = Vec::new();
        let mut lw = Vec::new();
        for (x, &qx) in q.iter().enumerate() {
            let w = ch.w(x, y);
            if w > 0.0 && qx > 0.0 {
                logs.push(qx.ln() + s * w.ln());
                lw.push(w.ln());
            }
        }
        let lg = log_sum_exp(logs.iter().cloned());
        let h = logs.iter().zip(&lw).map(|(l, w)| (l - lg).exp() * w).sum::<f64>();
        log_g.push(lg);
        weighted_log.push(h);
    }
    EoTerms { log_g, weighted_log }
}

/// Gallager's function `E_o(rho, Q) = -ln sum_y (sum_x Q(x) W(y|x)^{1/(1+rho)})^{1+rho}`.
pub fn gallager_eo(ch: &Channel, rho: f64, q: &[f64]) -> f64 {
    let t = eo_terms(ch, rho, q);
    -log_sum_exp(t.log_g.iter().map(|lg| (1.0 + rho) * lg))
}

/// `dE_o/drho` in closed form.
pub fn gallager_eo_derivative(ch: &Channel, rho: f64, q: &[f64]) -> f64 {
    let t = eo_terms(ch, rho, q);
    let log_a: Vec<f64> = t.log_g.iter().map(|lg| (1.0 + rho) * lg).collect();
    let z = log_sum_exp(log_a.iter().cloned());
    -log_a
        .iter()
        .zip(&t.log_g)
        .zip(&t.weighted_log)
        .map(|((la, lg), h)| (la - z).exp() * (lg - h / (1.0 + rho)))
        .sum::<f64>()
}

fn uniform(ch: &Channel) -> Vec<f64> {
    simplex::uniform(ch.num_inputs())
}

fn eo_u(ch: &Channel, rho: f64) -> f64 {
    gallager_eo(ch, rho, &uniform(ch))
}

fn eo_u_prime(ch: &Channel, rho: f64) -> f64 {
    gallager_eo_derivative(ch, rho, &uniform(ch))
}

fn require_symmetric(ch: &Channel) -> Result<()> {
    if is_symmetric(ch) {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("channel '{}' is not symmetric", ch.name())))
    }
}

fn require_rate(r: f64) -> Result<()> {
    if r.is_finite() && r >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("rate {r} must be a finite nonnegative number")))
    }
}

/// Maximizer of the concave map `rho -> E_o(rho,U) - rho R` on `[0, hi]`,
/// given `E_o'(0) > R > E_o'(hi)`.
fn maximize_on(ch: &Channel, r: f64, hi: f64) -> f64 {
    let f = |rho: f64| eo_u(ch, rho) - rho * r;
    let g = |rho: f64| eo_u_prime(ch, rho) - r;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..40 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let w = b - a;
    let (mut lo, mut up) = ((a - w).max(0.0), (b + w).min(hi));
    if !(g(lo) >= 0.0 && g(up) <= 0.0) {
        lo = 0.0;
        up = hi;
    }
    while up - lo > 1e-3 * RHO_TOL * up.max(1.0) {
        let mid = 0.5 * (lo + up);
        if mid <= lo || mid >= up {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            up = mid;
        }
    }
    0.5 * (lo + up)
}

/// Output law `q_rho(y) ∝ (sum_x U(x) W(y|x)^{1/(1+rho)})^{1+rho}`.
pub fn tilted_output(ch: &Channel, rho: f64) -> Vec<f64> {
    let t = eo_terms(ch, rho, &uniform(ch));
    let log_a: Vec<f64> = t.log_g.iter().map(|lg| (1.0 + rho) * lg).collect();
    let z = log_sum_exp(log_a.iter().cloned());
    log_a.iter().map(|la| (la - z).exp()).collect()
}

/// Tilted channel `V(y|x) ∝ W(y|x)^{1/(1+rho)} q(y)^{rho/(1+rho)}`.
pub fn tilted_channel(ch: &Channel, rho: f64, q: &[f64]) -> Vec<Vec<f64>> {
    let s = 1.0 / (1.0 + rho);
    (0..ch.num_inputs())
        .map(|x| {
            let logs: Vec<f64> = (0..ch.num_outputs())
                .map(|y| {
                    let w = ch.w(x, y);
                    if w > 0.0 && q[y] > 0.0 {
                        s * w.ln() + (1.0 - s) * q[y].ln()
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            let z = log_sum_exp(logs.iter().cloned());
            logs.iter().map(|l| (l - z).exp()).collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TiltedPair {
    pub rho: f64,
    pub q_rho: Vec<f64>,
    pub v_rho: Vec<Vec<f64>>,
}

pub fn tilted_pair(ch: &Channel, rho: f64) -> Result<TiltedPair> {
    require_symmetric(ch)?;
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::InvalidInput(format!("slope {rho} must be finite and nonnegative")));
    }
    let q_rho = tilted_output(ch, rho);
    let v_rho = tilted_channel(ch, rho, &q_rho);
    Ok(TiltedPair { rho, q_rho, v_rho })
}

/// Where a rate sits relative to the finite-exponent range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateRegime {
    /// `R <= R_inf`: the exponent is infinite.
    Infinite,
    /// `R_inf < R < C`.
    Interior,
    /// `R >= C`: the exponent is zero.
    AtCapacity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpherePacking {
    pub rate: f64,
    pub exponent: f64,
    pub rho: f64,
    pub q: Vec<f64>,
    pub regime: RateRegime,
}

/// `E_SP(R) = sup_{rho >= 0} E_o(rho, U) - rho R`, its maximizer `rho_R` and `q_R`.
pub fn sphere_packing_exponent(ch: &Channel, r: f64) -> Result<SpherePacking> {
    require_symmetric(ch)?;
    require_rate(r)?;
    let c = eo_u_prime(ch, 0.0);
    if r >= c {
        return Ok(SpherePacking {
            rate: r,
            exponent: 0.0,
            rho: 0.0,
            q: tilted_output(ch, 0.0),
            regime: RateRegime::AtCapacity,
        });
    }
    let r_inf = r_infinity_unchecked(ch);
    if r <= r_inf.value {
        return Ok(SpherePacking {
            rate: r,
            exponent: f64::INFINITY,
            rho: f64::INFINITY,
            q: vec![f64::NAN; ch.num_outputs()],
            regime: RateRegime::Infinite,
        });
    }
    let mut hi = 4.0;
    while eo_u_prime(ch, hi) >= r {
        hi *= 2.0;
        if hi > RHO_CAP {
            return Err(Error::NoConvergence(format!(
                "slope bracket exceeded {RHO_CAP} at rate {r}; rate too close to R_inf"
            )));
        }
    }
    let rho = maximize_on(ch, r, hi);
    Ok(SpherePacking {
        rate: r,
        exponent: eo_u(ch, rho) - rho * r,
        rho,
        q: tilted_output(ch, rho),
        regime: RateRegime::Interior,
    })
}

/// `E_r(R) = max_{0 <= rho <= 1} E_o(rho, U) - rho R` and its maximizer.
pub fn random_coding_exponent(ch: &Channel, r: f64) -> Result<(f64, f64)> {
    require_symmetric(ch)?;
    require_rate(r)?;
    let rho = if eo_u_prime(ch, 0.0) <= r {
        0.0
    } else if eo_u_prime(ch, 1.0) >= r {
        1.0
    } else {
        maximize_on(ch, r, 1.0)
    };
    Ok((eo_u(ch, rho) - rho * r, rho))
}

fn require_nondegenerate(ch: &Channel) -> Result<()> {
    if eo_u_prime(ch, 0.0) <= 1e-15 {
        Err(Error::Domain(format!("channel '{}' has zero capacity", ch.name())))
    } else {
        Ok(())
    }
}

/// `R_cr = dE_o(rho,U)/drho` at `rho = 1`.
pub fn critical_rate(ch: &Channel) -> Result<f64> {
    require_symmetric(ch)?;
    require_nondegenerate(ch)?;
    Ok(eo_u_prime(ch, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RInfinity {
    pub value: f64,
    /// Bracket from the last two evaluations of the derivative.
    pub lower: f64,
    pub upper: f64,
    pub converged: bool,
}

fn r_infinity_unchecked(ch: &Channel) -> RInfinity {
    let mut prev = eo_u_prime(ch, 16.0);
    for k in 5..=24 {
        let cur = eo_u_prime(ch, (1u64 << k) as f64);
        if (cur - prev).abs() < 1e-10 {
            return RInfinity { value: cur, lower: cur.min(prev), upper: cur.max(prev), converged: true };
        }
        prev = cur;
        if k == 24 {
            let last = eo_u_prime(ch, (1u64 << 23) as f64);
            return RInfinity { value: cur, lower: cur.min(last), upper: cur.max(last), converged: false };
        }
    }
    unreachable!()
}

/// `R_inf = lim_{rho -> inf} dE_o(rho,U)/drho`, from the derivative at `rho = 2^k`, `k = 4..24`.
pub fn r_infinity(ch: &Channel) -> Result<RInfinity> {
    require_symmetric(ch)?;
    require_nondegenerate(ch)?;
    Ok(r_infinity_unchecked(ch))
}

/// Min-max cost `f(rho, q) = -rho R - (1+rho) sum_x U(x) ln sum_y W^{1/(1+rho)} q^{rho/(1+rho)}`.
pub fn saddle_cost(ch: &Channel, r: f64, rho: f64, q: &[f64]) -> f64 {
    let s = 1.0 / (1.0 + rho);
    let k = ch.num_inputs() as f64;
    let inner: f64 = (0..ch.num_inputs())
        .map(|x| {
            log_sum_exp((0..ch.num_outputs()).filter(|&y| ch.w(x, y) > 0.0).map(|y| {
                if q[y] > 0.0 {
                    s * ch.w(x, y).ln() + (1.0 - s) * q[y].ln()
                } else if rho == 0.0 {
                    s * ch.w(x, y).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }))
        })
        .sum::<f64>()
        / k;
    -rho * r - (1.0 + rho) * inner
}

/// Largest relative deviation of `sum_y W^{1/(1+rho)} g_y^rho` across inputs from `sum_y g_y^{1+rho}`.
pub fn constancy_gap(ch: &Channel, rho: f64) -> f64 {
    let s = 1.0 / (1.0 + rho);
    let t = eo_terms(ch, rho, &uniform(ch));
    let log_z = log_sum_exp(t.log_g.iter().map(|lg| (1.0 + rho) * lg));
    (0..ch.num_inputs())
        .map(|x| {
            let lhs = log_sum_exp(
                (0..ch.num_outputs()).filter(|&y| ch.w(x, y) > 0.0).map(|y| s * ch.w(x, y).ln() + rho * t.log_g[y]),
            );
            (lhs - log_z).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleReport {
    pub rate: f64,
    pub rho: f64,
    pub q: Vec<f64>,
    /// Constancy gap of the per-input sums.
    pub constancy: f64,
    /// `|I(U;V_rho) - D(V_rho || q_rho | U)|`.
    pub information_identity: f64,
    /// `|D(V_rho || W | U) + rho I(U;V_rho) - E_o(rho, U)|`.
    pub exponent_identity: f64,
    /// Largest sampled violation of `f(rho_R,q) >= f(rho_R,q_R) >= f(rho,q_R)`.
    pub saddle_violation: f64,
}

impl SaddleReport {
    pub fn max_residual(&self) -> f64 {
        self.constancy.max(self.information_identity).max(self.exponent_identity).max(self.saddle_violation)
    }
}

/// Residual report for the saddle point `(rho_R, q_R)` at rate `r`.
pub fn verify_saddle_point(ch: &Channel, r: f64, seed: u64) -> Result<SaddleReport> {
    let sp = sphere_packing_exponent(ch, r)?;
    if sp.regime != RateRegime::Interior {
        return Err(Error::Domain(format!("rate {r} is outside (R_inf, C)")));
    }
    let u = uniform(ch);
    let rho = sp.rho;
    let q = sp.q.clone();
    let v = tilted_channel(ch, rho, &q);
    let w = ch.rows();
    let q_v = {
        let mut out = vec![0.0; ch.num_outputs()];
        for row in &v {
            for (o, val) in out.iter_mut().zip(row) {
                *o += val / ch.num_inputs() as f64;
            }
        }
        out
    };
    let info = divergence_to_output(&v, &q_v, &u);
    let information_identity = (info - divergence_to_output(&v, &q, &u)).abs();
    let exponent_identity = (conditional_divergence(&v, &w, &u) + rho * info - eo_u(ch, rho)).abs();

    let center = saddle_cost(ch, r, rho, &q);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violation: f64 = 0.0;
    for i in 0..1000 {
        let trial = if i % 2 == 0 {
            simplex::sample(&mut rng, ch.num_outputs())
        } else {
            let scale = 10f64.powi(-(1 + (i / 2) % 6) as i32);
            let d = simplex::tangent_direction(&mut rng, ch.num_outputs());
            simplex::project(&q.iter().zip(&d).map(|(a, b)| a + scale * b).collect::<Vec<_>>())
        };
        violation = violation.max(center - saddle_cost(ch, r, rho, &trial));
    }
    let top = 3.0 * rho + 1.0;
    for i in 0..=400 {
        let t = top * i as f64 / 400.0;
        violation = violation.max(saddle_cost(ch, r, t, &q) - center);
    }
    Ok(SaddleReport {
        rate: r,
        rho,
        q,
        constancy: constancy_gap(ch, rho),
        information_identity,
        exponent_identity,
        saddle_violation: violation.max(0.0),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentProfile {
    pub rate: f64,
    pub e_r: f64,
    pub e_sp: f64,
    pub rho_r: f64,
    pub q_r: Vec<f64>,
    pub regime: RateRegime,
    pub r_cr: f64,
    pub r_inf: RInfinity,
    pub capacity: f64,
    /// `beta` in the `N^{-beta}` pre-factor of the converse.
    pub prefactor_order: f64,
}

pub fn exponent_profile(ch: &Channel, r: f64) -> Result<ExponentProfile> {
    let sp = sphere_packing_exponent(ch, r)?;
    let (e_r, _) = random_coding_exponent(ch, r)?;
    let singular = crate::classify::singular_xi(ch).is_some();
    let prefactor_order = if singular { 0.5 } else { (1.0 + sp.rho) / 2.0 };
    Ok(ExponentProfile {
        rate: r,
        e_r,
        e_sp: sp.exponent,
        rho_r: sp.rho,
        q_r: sp.q,
        regime: sp.regime,
        r_cr: critical_rate(ch)?,
        r_inf: r_infinity(ch)?,
        capacity: mutual_information(ch, &uniform(ch)),
        prefactor_order,
    })
}

/// Output law under the uniform input.
pub fn uniform_output(ch: &Channel) -> Vec<f64> {
    output_distribution(ch, &uniform(ch))
}

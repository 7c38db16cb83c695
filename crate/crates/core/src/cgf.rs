//! Cumulant generating functions of the log-ratio `ln(q(Y)/W(Y|x_o))` under
//! `W(.|x_o)`, their Fenchel-Legendre transforms, and the constrained
//! exponent `e_SP(r,R)`.

use crate::channel::Channel;
use crate::classify::{is_symmetric, singular_xi};
use crate::error::{Error, Result};
use crate::exponents::{log_sum_exp, sphere_packing_exponent, uniform_output, RateRegime};

/// Finite discrete law given by `(value, probability)` atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLaw {
    values: Vec<f64>,
    log_weights: Vec<f64>,
}

/// `Lambda`, its first two derivatives and the third absolute central moment
/// of the tilted law at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgfPoint {
    pub lambda: f64,
    pub value: f64,
    pub first: f64,
    pub second: f64,
    pub third_abs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FenchelLegendre {
    pub value: f64,
    pub maximizer: f64,
    /// `b` lies on or outside the boundary of the range of `Lambda'`.
    pub boundary: bool,
}

impl DiscreteLaw {
    pub fn new(atoms: &[(f64, f64)]) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if atoms.iter().any(|a| !(a.1 >= 0.0) || !a.0.is_finite()) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput("atoms must carry finite values and probabilities summing to 1".into()));
        }
        let kept: Vec<&(f64, f64)> = atoms.iter().filter(|a| a.1 > 0.0).collect();
        Ok(DiscreteLaw {
            values: kept.iter().map(|a| a.0).collect(),
            log_weights: kept.iter().map(|a| a.1.ln()).collect(),
        })
    }

    pub fn atoms(&self) -> Vec<(f64, f64)> {
        self.values.iter().zip(&self.log_weights).map(|(v, lw)| (*v, lw.exp())).collect()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.point(0.0).first
    }

    pub fn variance(&self) -> f64 {
        self.point(0.0).second
    }

    pub fn log_mgf(&self, lambda: f64) -> f64 {
        log_sum_exp(self.values.iter().zip(&self.log_weights).map(|(v, lw)| lw + lambda * v))
    }

    /// Atom probabilities of the law tilted by `e^{lambda v - Lambda(lambda)}`.
    pub fn tilted_weights(&self, lambda: f64) -> Vec<f64> {
        let z = self.log_mgf(lambda);
        self.values.iter().zip(&self.log_weights).map(|(v, lw)| (lw + lambda * v - z).exp()).collect()
    }

    pub fn point(&self, lambda: f64) -> CgfPoint {
        let p = self.tilted_weights(lambda);
        let first: f64 = p.iter().zip(&self.values).map(|(p, v)| p * v).sum();
        let (mut second, mut third_abs) = (0.0, 0.0);
        for (p, v) in p.iter().zip(&self.values) {
            let d = v - first;
            second += p * d * d;
            third_abs += p * d.abs().powi(3);
        }
        CgfPoint { lambda, value: self.log_mgf(lambda), first, second, third_abs }
    }

    /// `Lambda*(b) = sup_lambda lambda b - Lambda(lambda)`.
    pub fn fenchel_legendre(&self, b: f64) -> FenchelLegendre {
        let (lo, hi) = (self.min_value(), self.max_value());
        let mass_at = |t: f64| {
            log_sum_exp(self.values.iter().zip(&self.log_weights).filter(|(v, _)| **v == t).map(|(_, lw)| *lw))
        };
        if b >= hi || b <= lo {
            if b == hi && b == lo {
                return FenchelLegendre { value: 0.0, maximizer: 0.0, boundary: true };
            }
            let (value, maximizer) = if b == hi {
                (-mass_at(hi), f64::INFINITY)
            } else if b == lo {
                (-mass_at(lo), f64::NEG_INFINITY)
            } else if b > hi {
                (f64::INFINITY, f64::INFINITY)
            } else {
                (f64::INFINITY, f64::NEG_INFINITY)
            };
            return FenchelLegendre { value, maximizer, boundary: true };
        }
        let d = |l: f64| self.point(l).first - b;
        let (mut a, mut c) = (-1.0f64, 1.0f64);
        while d(a) > 0.0 {
            a *= 2.0;
        }
        while d(c) < 0.0 {
            c *= 2.0;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + c);
            if m <= a || m >= c {
                break;
            }
            if d(m) < 0.0 {
                a = m;
            } else {
                c = m;
            }
        }
        let l = 0.5 * (a + c);
        FenchelLegendre { value: (l * b - self.log_mgf(l)).max(0.0), maximizer: l, boundary: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Tilt parameter restricted to `[0,1)`, reference law `q_R`.
    Nonsingular,
    /// Tilt parameter on `[0, inf)`, reference law `q_U`.
    Singular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgfProfile {
    pub reference_input: usize,
    pub branch: Branch,
    /// Rate fixing `q_R`; absent on the singular branch.
    pub rate: Option<f64>,
    /// `q_R` (nonsingular) or `q_U` (singular).
    pub q: Vec<f64>,
    /// Law of `ln(q(Y)/W(Y|x_o))` under `W(.|x_o)`.
    pub law: DiscreteLaw,
    /// `W_R(y|x) = q(y)/q(supp W(.|x))` on the support of each row.
    pub w_r: Vec<Vec<f64>>,
}

impl CgfProfile {
    pub fn lambda_domain(&self) -> (f64, f64) {
        match self.branch {
            Branch::Nonsingular => (0.0, 1.0),
            Branch::Singular => (0.0, f64::INFINITY),
        }
    }

    pub fn point(&self, lambda: f64) -> CgfPoint {
        self.law.point(lambda)
    }

    pub fn fenchel_legendre(&self, b: f64) -> FenchelLegendre {
        self.law.fenchel_legendre(b)
    }

    /// `W~_lambda(y|x) ∝ W(y|x)^{1-lambda} q(y)^lambda`.
    pub fn tilted_channel(&self, ch: &Channel, lambda: f64) -> Result<Vec<Vec<f64>>> {
        let (lo, hi) = self.lambda_domain();
        if !(lambda >= lo && lambda < hi) {
            return Err(Error::Domain(format!("tilt {lambda} outside [{lo}, {hi})")));
        }
        Ok((0..ch.num_inputs())
            .map(|x| {
                let logs: Vec<f64> = (0..ch.num_outputs())
                    .map(|y| {
                        let w = ch.w(x, y);
                        if w > 0.0 {
                            (1.0 - lambda) * w.ln() + lambda * self.q[y].ln()
                        } else {
                            f64::NEG_INFINITY
                        }
                    })
                    .collect();
                let z = log_sum_exp(logs.iter().cloned());
                logs.iter().map(|l| (l - z).exp()).collect()
            })
            .collect())
    }

    /// `D(W_R || q | U) = -Lambda(1) = -ln q(supp W(.|x_o))`.
    pub fn d_w_r(&self) -> f64 {
        let row = &self.w_r[self.reference_input];
        if row.iter().all(|&v| v > 0.0) {
            return 0.0;
        }
        let mass: f64 = row.iter().zip(&self.q).filter(|(v, _)| **v > 0.0).map(|(_, q)| q).sum();
        -mass.ln()
    }

    /// `D(W || q | U) = -Lambda'(0)`.
    pub fn d_w(&self) -> f64 {
        -self.law.mean()
    }
}

fn require_symmetric(ch: &Channel) -> Result<()> {
    if is_symmetric(ch) {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("channel '{}' is not symmetric", ch.name())))
    }
}

fn law_against(ch: &Channel, q: &[f64], x_o: usize) -> Result<DiscreteLaw> {
    let atoms: Vec<(f64, f64)> = (0..ch.num_outputs())
        .filter(|&y| ch.w(x_o, y) > 0.0)
        .map(|y| ((q[y] / ch.w(x_o, y)).ln(), ch.w(x_o, y)))
        .collect();
    DiscreteLaw::new(&atoms)
}

fn w_r(ch: &Channel, q: &[f64]) -> Vec<Vec<f64>> {
    (0..ch.num_inputs())
        .map(|x| {
            let mass: f64 = (0..ch.num_outputs()).filter(|&y| ch.w(x, y) > 0.0).map(|y| q[y]).sum();
            (0..ch.num_outputs()).map(|y| if ch.w(x, y) > 0.0 { q[y] / mass } else { 0.0 }).collect()
        })
        .collect()
}

/// Cumulant profile for a symmetric channel. The nonsingular branch needs a
/// rate to fix `q_R`; the singular branch uses `q_U` and ignores it.
pub fn cgf_profile(ch: &Channel, rate: Option<f64>, reference_input: usize) -> Result<CgfProfile> {
    require_symmetric(ch)?;
    if reference_input >= ch.num_inputs() {
        return Err(Error::InvalidInput(format!("reference input {reference_input} out of range")));
    }
    let (branch, q, rate) = if singular_xi(ch).is_some() {
        (Branch::Singular, uniform_output(ch), None)
    } else {
        let r = rate.ok_or_else(|| Error::InvalidInput("nonsingular profile needs a rate".into()))?;
        let sp = sphere_packing_exponent(ch, r)?;
        if sp.regime != RateRegime::Interior {
            return Err(Error::Domain(format!("rate {r} is outside (R_inf, C)")));
        }
        (Branch::Nonsingular, sp.q, Some(r))
    };
    Ok(CgfProfile {
        reference_input,
        branch,
        rate,
        law: law_against(ch, &q, reference_input)?,
        w_r: w_r(ch, &q),
        q,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstrainedExponent {
    pub r: f64,
    pub e_sp: f64,
    pub s: f64,
    pub eta: f64,
    /// `D(W_R || q_R | U)`, the lower end of the admissible `r` range.
    pub d_w_r: f64,
    /// `r >= D(W || q_R | U)`: the constraint is inactive and `e_SP = 0`.
    pub saturated: bool,
}

/// Dual evaluation of `e_SP(r,R)` on a nonsingular profile: solve
/// `-Lambda(eta) - (1-eta) Lambda'(eta) = r` for `eta` in `(0,1)`.
pub fn constrained_exponent_from(profile: &CgfProfile, r: f64) -> Result<ConstrainedExponent> {
    if profile.branch != Branch::Nonsingular {
        return Err(Error::Unsupported("constrained exponent needs a nonsingular channel".into()));
    }
    let d_w_r = profile.d_w_r();
    if !(r > d_w_r) {
        return Err(Error::Domain(format!("r = {r} must exceed D(W_R||q_R|U) = {d_w_r}")));
    }
    let h = |eta: f64| {
        let p = profile.point(eta);
        -p.value - (1.0 - eta) * p.first
    };
    if r >= h(0.0) {
        return Ok(ConstrainedExponent { r, e_sp: 0.0, s: 0.0, eta: 0.0, d_w_r, saturated: true });
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) > r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let eta = 0.5 * (lo + hi);
    let p = profile.point(eta);
    Ok(ConstrainedExponent { r, e_sp: eta * p.first - p.value, s: eta / (1.0 - eta), eta, d_w_r, saturated: false })
}

/// `e_SP(r,R) = inf { D(V||W|U) : D(V||q_R|U) <= r }` via its dual.
pub fn constrained_exponent(ch: &Channel, r: f64, rate: f64) -> Result<ConstrainedExponent> {
    if singular_xi(ch).is_some() {
        return Err(Error::Unsupported("constrained exponent needs a nonsingular channel".into()));
    }
    constrained_exponent_from(&cgf_profile(ch, Some(rate), 0)?, r)
}

/// Extrema of `Lambda''` and `m_3 / Lambda''` over `[0, top]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrema {
    pub top: f64,
    pub m2_min: f64,
    pub m2_max: f64,
    pub ratio_max: f64,
}

const EXTREMA_GRID: usize = 1000;

fn refine(f: &dyn Fn(f64) -> f64, a: f64, b: f64, maximize: bool) -> f64 {
    let sign = if maximize { 1.0 } else { -1.0 };
    let g = |x: f64| sign * f(x);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a, b);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..60 {
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - inv_phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + inv_phi * (b - a);
            gd = g(d);
        }
    }
    f(0.5 * (a + b))
}

/// Grid scan of 1000 intervals followed by golden-section refinement around the best node.
fn grid_extremum(f: &dyn Fn(f64) -> f64, top: f64, maximize: bool) -> f64 {
    let xs: Vec<f64> = (0..=EXTREMA_GRID).map(|i| top * i as f64 / EXTREMA_GRID as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let better = |a: f64, b: f64| if maximize { a > b } else { a < b };
    let mut best = 0;
    for i in 1..vals.len() {
        if better(vals[i], vals[best]) {
            best = i;
        }
    }
    let a = xs[best.saturating_sub(1)];
    let b = xs[(best + 1).min(EXTREMA_GRID)];
    let refined = refine(f, a, b, maximize);
    if better(refined, vals[best]) {
        refined
    } else {
        vals[best]
    }
}

pub fn extrema(law: &DiscreteLaw, top: f64) -> Extrema {
    let m2 = |l: f64| law.point(l).second;
    let ratio = |l: f64| {
        let p = law.point(l);
        p.third_abs / p.second
    };
    Extrema {
        top,
        m2_min: grid_extremum(&m2, top, false),
        m2_max: grid_extremum(&m2, top, true),
        ratio_max: grid_extremum(&ratio, top, true),
    }
}

/// Quantities shared by the exponent expansion and the nonsingular converse.
#[derive(Debug, Clone, PartialEq)]
pub struct NonsingularGeometry {
    pub profile: CgfProfile,
    pub rate: f64,
    pub e_sp: f64,
    pub rho: f64,
    pub d_w_r: f64,
    pub r_bar: f64,
    pub at_r_bar: ConstrainedExponent,
    pub extrema: Extrema,
}

pub fn nonsingular_geometry(ch: &Channel, rate: f64) -> Result<NonsingularGeometry> {
    if singular_xi(ch).is_some() {
        return Err(Error::Unsupported("channel is singular".into()));
    }
    let sp = sphere_packing_exponent(ch, rate)?;
    let profile = cgf_profile(ch, Some(rate), 0)?;
    let d_w_r = profile.d_w_r();
    let r_bar = 0.5 * (rate + d_w_r);
    let at_r_bar = constrained_exponent_from(&profile, r_bar)?;
    let extrema = extrema(&profile.law, at_r_bar.eta);
    Ok(NonsingularGeometry { profile, rate, e_sp: sp.exponent, rho: sp.rho, d_w_r, r_bar, at_r_bar, extrema })
}

impl NonsingularGeometry {
    /// `eps_N = (k1 + ln sqrt(N)) / N`.
    pub fn eps_n(n: u64, k1: f64) -> f64 {
        (k1 + 0.5 * (n as f64).ln()) / n as f64
    }

    /// Quadratic coefficient `(1+s_Rbar)^2 (1+rho_R) / (2 m2_min)`.
    pub fn quadratic_coefficient(&self) -> f64 {
        (1.0 + self.at_r_bar.s).powi(2) * (1.0 + self.rho) / (2.0 * self.extrema.m2_min)
    }

    pub fn expansion(&self, n: u64, k1: f64) -> Result<f64> {
        let eps = Self::eps_n(n, k1);
        if self.rate - eps < self.r_bar {
            return Err(Error::Domain(format!(
                "R_N = {} is below Rbar = {} at N = {n}",
                self.rate - eps,
                self.r_bar
            )));
        }
        Ok(self.e_sp + eps * self.rho + eps * eps * self.quadratic_coefficient())
    }
}

/// Upper bound on `e_SP(R_N, R)` with `R_N = R - (k1 + ln sqrt(N))/N`.
pub fn exponent_expansion(ch: &Channel, rate: f64, n: u64, k1: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("blocklength must be positive".into()));
    }
    nonsingular_geometry(ch, rate)?.expansion(n, k1)
}

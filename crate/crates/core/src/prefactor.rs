//! Exact-asymptotics bounds: the concentration lower bound, the tilted
//! expectation upper bound, and fully constanted converse bounds for
//! symmetric channels together with the blocklength from which they hold.

use std::collections::BTreeMap;
use std::f64::consts::{E, PI};

use crate::cgf::{cgf_profile, constrained_exponent_from, extrema, nonsingular_geometry, CgfProfile, DiscreteLaw, Extrema, NonsingularGeometry};
use crate::channel::Channel;
use crate::classify::{is_symmetric, singular_xi};
use crate::error::{Error, Result};
use crate::exponents::{r_infinity, sphere_packing_exponent, RateRegime};
use crate::oracle::SUPPORT_CAP;

/// `N` i.i.d. copies of a finite discrete law.
#[derive(Debug, Clone, PartialEq)]
pub struct IidSpec {
    law: DiscreteLaw,
    n: u64,
}

impl IidSpec {
    pub fn new(atoms: &[(f64, f64)], n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("N must be positive".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-14 {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}, not 1")));
        }
        let law = DiscreteLaw::new(atoms)?;
        if law.min_value() == law.max_value() {
            return Err(Error::InvalidInput("law needs two atoms with distinct values".into()));
        }
        Ok(IidSpec { law, n })
    }

    pub fn law(&self) -> &DiscreteLaw {
        &self.law
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn atoms(&self) -> Vec<(f64, f64)> {
        self.law.atoms()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Internals {
    pub eta: f64,
    pub c: f64,
    /// `Lambda*_N(c)`.
    pub rate_function: f64,
    pub m2_n: f64,
    pub m3_n: f64,
    pub t_n: f64,
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Bound {
    /// Lower bound on `Pr[(1/N) sum Z_n >= c]`, possibly non-positive.
    pub bound: f64,
    /// `ln bound` when the bound is positive.
    pub log_bound: Option<f64>,
    /// False when the bracketed correction makes the bound non-positive.
    pub informative: bool,
    pub internals: Lemma1Internals,
}

/// Lower bound on `Pr[(1/N) sum Z_n >= c]` for i.i.d. `Z_n`, valid for any `a > 1`.
pub fn lemma1_lower_bound(spec: &IidSpec, c: f64, a: f64) -> Result<Lemma1Bound> {
    if !(a > 1.0) {
        return Err(Error::InvalidInput(format!("a = {a} must exceed 1")));
    }
    let law = &spec.law;
    if !(c > law.mean()) {
        return Err(Error::Domain(format!("c = {c} does not exceed the mean {}, so eta is not positive", law.mean())));
    }
    if !(c < law.max_value()) {
        return Err(Error::Domain(format!("c = {c} is not below the largest atom {}, so no eta exists", law.max_value())));
    }
    let fl = law.fenchel_legendre(c);
    let eta = fl.maximizer;
    let p = law.point(eta);
    let n = spec.n as f64;
    let (m2_n, m3_n) = (n * p.second, n * p.third_abs);
    let t_n = eta * 2.0 * (2.0 * PI).sqrt() * m3_n / m2_n;
    let at = a * t_n;
    let inv = 1.0 - 1.0 / a;
    let bracket = 1.0 - (1.0 + (1.0 + at).powi(2)) / ((1.0 + at) * eta * inv * 2.0 * (E * m2_n).sqrt());
    let log_rest = -at + inv.ln() + (1.0 + at).ln() - (eta * (2.0 * PI * m2_n).sqrt()).ln() - n * fl.value;
    let (bound, log_bound) = if bracket > 0.0 {
        let lb = log_rest + bracket.ln();
        (lb.exp(), Some(lb))
    } else {
        (bracket * log_rest.exp(), None)
    };
    Ok(Lemma1Bound {
        bound,
        log_bound,
        informative: bracket > 0.0,
        internals: Lemma1Internals { eta, c, rate_function: fl.value, m2_n, m3_n, t_n, a },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma2Bound {
    /// Upper bound on `E[1{sum <= r} exp(-(r - sum))]`.
    pub bound: f64,
    pub m2_n: f64,
    pub m3_n: f64,
    /// The exact left side is small enough to enumerate.
    pub exact_comparable: bool,
}

fn lemma2_value(m2_n: f64, m3_n: f64, factor: f64) -> f64 {
    1.0 / (2.0 * PI * m2_n).sqrt() + factor * m3_n / m2_n.powf(1.5)
}

/// Upper bound on `E[1{sum <= r} exp(-(r - sum))]` for i.i.d. summands. The bound does not depend on `r`.
pub fn lemma2_upper_bound(spec: &IidSpec, r: f64) -> Result<Lemma2Bound> {
    if r.is_nan() {
        return Err(Error::InvalidInput("r is NaN".into()));
    }
    let p = spec.law.point(0.0);
    let n = spec.n as f64;
    let (m2_n, m3_n) = (n * p.second, n * p.third_abs);
    let k = spec.law.atoms().len() as u64;
    let count_vectors = (1..k).fold(1.0, |acc, i| acc * (spec.n + i) as f64 / i as f64);
    Ok(Lemma2Bound { bound: lemma2_value(m2_n, m3_n, 1.0), m2_n, m3_n, exact_comparable: count_vectors <= SUPPORT_CAP as f64 })
}

/// Upper bound for independent, not necessarily identical, summands (factor 2 on the moment term).
pub fn lemma2_upper_bound_independent(laws: &[DiscreteLaw]) -> Result<f64> {
    let (m2_n, m3_n) = laws.iter().fold((0.0, 0.0), |(a, b), l| {
        let p = l.point(0.0);
        (a + p.second, b + p.third_abs)
    });
    if !(m2_n > 0.0) {
        return Err(Error::InvalidInput("total variance must be positive".into()));
    }
    Ok(lemma2_value(m2_n, m3_n, 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoundKind {
    NonsingularConverse,
    SingularConverse,
    Lemma1,
    Lemma2,
}

impl BoundKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundKind::NonsingularConverse => "nonsingular_converse",
            BoundKind::SingularConverse => "singular_converse",
            BoundKind::Lemma1 => "lemma1",
            BoundKind::Lemma2 => "lemma2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundEvaluation {
    pub n: u64,
    pub rate: f64,
    pub kind: BoundKind,
    /// `-N exponent + prefactor_log`.
    pub log_value: f64,
    pub exponent: f64,
    pub prefactor_log: f64,
    pub constants: BTreeMap<String, f64>,
    pub n_min: u64,
}

/// Smallest `N` from which `valid` holds for every larger blocklength, given
/// that `valid` is monotone for `N >= monotone_from`.
pub(crate) fn smallest_valid(monotone_from: u64, valid: impl Fn(u64) -> bool) -> Result<u64> {
    let start = monotone_from.max(1);
    if valid(start) {
        let mut n = start;
        while n > 1 && valid(n - 1) {
            n -= 1;
        }
        return Ok(n);
    }
    let (mut lo, mut hi) = (start, start.saturating_mul(2));
    while !valid(hi) {
        if hi >= 1u64 << 62 {
            return Err(Error::NoConvergence("proof conditions do not hold for any N below 2^62".into()));
        }
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if valid(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverseOptions {
    pub a: f64,
    /// `k1` for the nonsingular converse, `k` for the singular one.
    pub k: Option<f64>,
}

impl Default for ConverseOptions {
    fn default() -> Self {
        ConverseOptions { a: 2.0, k: None }
    }
}

/// How the `q_R`-probability of the typical set is bounded below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TypicalSetBound {
    /// Chebyshev with the mean and variance of `ln(W(Y|x_o)/q_R(Y))` under `q_R`.
    Chebyshev { mean: f64, variance: f64 },
    /// `W(y_o|x_o) = 0`: the complement lies in `(Y - {y_o})^N`.
    ZeroEntry { q_y_o: f64 },
}

/// Constants of the nonsingular converse at one rate.
#[derive(Debug, Clone, PartialEq)]
pub struct NonsingularConverse {
    pub geometry: NonsingularGeometry,
    pub a: f64,
    pub eta_r: f64,
    pub t_max: f64,
    pub k_o: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub typical: TypicalSetBound,
    /// `ln K~1 = ln[(k_o/2)(1 - e^{-k2}/k3)] - k1 rho_R`.
    pub log_k_tilde: f64,
    pub n_min: u64,
}

fn require_rate(ch: &Channel, rate: f64) -> Result<()> {
    if !is_symmetric(ch) {
        return Err(Error::Unsupported(format!("channel '{}' is not symmetric", ch.name())));
    }
    let sp = sphere_packing_exponent(ch, rate)?;
    if sp.regime != RateRegime::Interior {
        return Err(Error::Domain(format!("rate {rate} is outside (R_inf, C)")));
    }
    Ok(())
}

fn k_o(a: f64, top: f64, ex: &Extrema) -> (f64, f64) {
    let t_max = a * 2.0 * (2.0 * PI).sqrt() * top * ex.ratio_max;
    let k_o = (-t_max).exp() * (1.0 - 1.0 / a) / (top * 2.0 * (2.0 * PI * ex.m2_max).sqrt());
    (t_max, k_o)
}

fn largeness(t_max: f64, eta: f64, a: f64, n: f64, m2_min: f64) -> bool {
    (1.0 + (1.0 + t_max).powi(2)) / (eta * (1.0 - 1.0 / a) * 2.0 * (E * n * m2_min).sqrt()) <= 0.5
}

impl NonsingularConverse {
    pub fn new(ch: &Channel, rate: f64, opts: ConverseOptions) -> Result<Self> {
        if singular_xi(ch).is_some() {
            return Err(Error::Unsupported("singular channel: use the singular converse".into()));
        }
        if !(opts.a > 1.0) {
            return Err(Error::InvalidInput(format!("a = {} must exceed 1", opts.a)));
        }
        require_rate(ch, rate)?;
        let geometry = nonsingular_geometry(ch, rate)?;
        let eta_r = constrained_exponent_from(&geometry.profile, rate)?.eta;
        let (t_max, k_o) = k_o(opts.a, geometry.at_r_bar.eta, &geometry.extrema);
        let (k1, k2) = match opts.k {
            Some(k1) => (k1, k1 + k_o.ln()),
            None => {
                let k2 = k_o.ln().max(0.0) + 1.0;
                (k2 - k_o.ln(), k2)
            }
        };
        if !(k1 > 0.0 && k2 > 0.0) {
            return Err(Error::InvalidInput(format!("k1 = {k1} gives k2 = {k2}; both must be positive")));
        }
        let k3 = ((-k2).exp() + 1.0) / 2.0;
        let typical = typical_set_bound(ch, &geometry.profile);
        let log_k_tilde = (k_o / 2.0 * (1.0 - (-k2).exp() / k3)).ln() - k1 * geometry.rho;
        let mut conv = NonsingularConverse { geometry, a: opts.a, eta_r, t_max, k_o, k1, k2, k3, typical, log_k_tilde, n_min: 0 };
        // (k1 + ln sqrt N)/N is decreasing once ln N > 1 - 2 k1, and N eps_N^2 once k1 + ln sqrt N > 1.
        let monotone_from = (2.0 * (1.0 - k1)).exp().max(E.powf(1.0 - 2.0 * k1)).ceil().max(3.0) as u64;
        conv.n_min = smallest_valid(monotone_from, |n| conv.conditions(n).all())?;
        Ok(conv)
    }

    /// The four largeness conditions of the proof at blocklength `n`.
    pub fn conditions(&self, n: u64) -> ConditionCheck {
        let g = &self.geometry;
        let nf = n as f64;
        let eps = NonsingularGeometry::eps_n(n, self.k1);
        let r_n = g.rate - eps;
        let rate_gap = r_n >= g.r_bar;
        let largeness = largeness(self.t_max, self.eta_r, self.a, nf, g.extrema.m2_min);
        let typical = rate_gap
            && match self.typical {
                TypicalSetBound::Chebyshev { mean, variance } => match constrained_exponent_from(&g.profile, r_n) {
                    Ok(e) => {
                        let gap = r_n - e.e_sp - mean;
                        gap > 0.0 && 1.0 - variance / (nf * gap * gap) >= self.k3
                    }
                    Err(_) => false,
                },
                TypicalSetBound::ZeroEntry { q_y_o } => 1.0 - (1.0 - q_y_o).powf(nf) >= self.k3,
            };
        let half = (-nf * eps * eps * g.quadratic_coefficient()).exp() >= 0.5;
        ConditionCheck { rate_gap, largeness, typical, half }
    }

    pub fn evaluate(&self, n: u64) -> Result<BoundEvaluation> {
        if n < self.n_min {
            return Err(Error::BelowValidity { n, n_min: self.n_min });
        }
        let g = &self.geometry;
        let prefactor_log = -((1.0 + g.rho) / 2.0) * (n as f64).ln() + self.log_k_tilde;
        let constants = BTreeMap::from([
            ("a".to_string(), self.a),
            ("k_o".to_string(), self.k_o),
            ("k1".to_string(), self.k1),
            ("k2".to_string(), self.k2),
            ("k3".to_string(), self.k3),
            ("t_max".to_string(), self.t_max),
            ("m2_min".to_string(), g.extrema.m2_min),
            ("m2_max".to_string(), g.extrema.m2_max),
            ("rho_R".to_string(), g.rho),
            ("eta_R".to_string(), self.eta_r),
            ("eta_Rbar".to_string(), g.at_r_bar.eta),
            ("Rbar".to_string(), g.r_bar),
            ("K_tilde".to_string(), self.log_k_tilde.exp()),
            ("N_min".to_string(), self.n_min as f64),
        ]);
        Ok(BoundEvaluation {
            n,
            rate: g.rate,
            kind: BoundKind::NonsingularConverse,
            log_value: -(n as f64) * g.e_sp + prefactor_log,
            exponent: g.e_sp,
            prefactor_log,
            constants,
            n_min: self.n_min,
        })
    }
}

fn typical_set_bound(ch: &Channel, profile: &CgfProfile) -> TypicalSetBound {
    let x_o = profile.reference_input;
    let q = &profile.q;
    let zero = (0..ch.num_outputs()).filter(|&y| ch.w(x_o, y) == 0.0).map(|y| q[y]).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    match zero {
        Some(q_y_o) => TypicalSetBound::ZeroEntry { q_y_o },
        None => {
            let vals: Vec<f64> = (0..ch.num_outputs()).map(|y| (ch.w(x_o, y) / q[y]).ln()).collect();
            let mean: f64 = vals.iter().zip(q).map(|(v, q)| v * q).sum();
            let variance = vals.iter().zip(q).map(|(v, q)| q * (v - mean).powi(2)).sum();
            TypicalSetBound::Chebyshev { mean, variance }
        }
    }
}

/// Which proof conditions hold at one blocklength.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConditionCheck {
    /// `R_N >= Rbar`.
    pub rate_gap: bool,
    /// The Lemma 1 correction is at most one half.
    pub largeness: bool,
    /// The typical set has `q`-probability at least `k3` (always true for the singular converse).
    pub typical: bool,
    /// The quadratic term of the exponent expansion costs at most a factor two.
    pub half: bool,
}

impl ConditionCheck {
    pub fn all(&self) -> bool {
        self.rate_gap && self.largeness && self.typical && self.half
    }
}

/// Constants of the singular converse at one rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularConverse {
    pub profile: CgfProfile,
    pub rate: f64,
    pub e_sp: f64,
    pub rho: f64,
    pub r_inf: f64,
    pub r_bar: f64,
    pub rho_r_bar: f64,
    pub extrema: Extrema,
    pub a: f64,
    pub k: f64,
    pub t_max: f64,
    pub k_o: f64,
    /// `ln K~ = ln k_o - k rho_Rbar`.
    pub log_k_tilde: f64,
    pub n_min: u64,
}

impl SingularConverse {
    pub fn new(ch: &Channel, rate: f64, opts: ConverseOptions) -> Result<Self> {
        if singular_xi(ch).is_none() {
            return Err(Error::Unsupported("nonsingular channel: use the nonsingular converse".into()));
        }
        if !(opts.a > 1.0) {
            return Err(Error::InvalidInput(format!("a = {} must exceed 1", opts.a)));
        }
        let k = opts.k.unwrap_or(1.0);
        if !(k > 0.0) {
            return Err(Error::InvalidInput(format!("k = {k} must be positive")));
        }
        require_rate(ch, rate)?;
        let sp = sphere_packing_exponent(ch, rate)?;
        let r_inf = r_infinity(ch)?.value;
        let r_bar = 0.5 * (rate + r_inf);
        let rho_r_bar = sphere_packing_exponent(ch, r_bar)?.rho;
        let profile = cgf_profile(ch, None, 0)?;
        let extrema = extrema(&profile.law, rho_r_bar);
        let (t_max, k_o) = k_o(opts.a, rho_r_bar, &extrema);
        let log_k_tilde = k_o.ln() - k * rho_r_bar;
        let mut conv = SingularConverse {
            profile,
            rate,
            e_sp: sp.exponent,
            rho: sp.rho,
            r_inf,
            r_bar,
            rho_r_bar,
            extrema,
            a: opts.a,
            k,
            t_max,
            k_o,
            log_k_tilde,
            n_min: 0,
        };
        conv.n_min = smallest_valid(1, |n| conv.conditions(n).all())?;
        Ok(conv)
    }

    /// Lemma 1 is applied at `eta = rho_{R_N}`, which lies in `[rho_R, rho_Rbar]`,
    /// so the largeness condition is checked at the smaller end `rho_R`.
    pub fn conditions(&self, n: u64) -> ConditionCheck {
        let nf = n as f64;
        ConditionCheck {
            rate_gap: self.rate - self.k / nf >= self.r_bar,
            largeness: largeness(self.t_max, self.rho, self.a, nf, self.extrema.m2_min),
            typical: true,
            half: true,
        }
    }

    /// `ln K~2 = ln K~ + ln(1 - e^{-k})`.
    pub fn log_k_tilde_2(&self) -> f64 {
        self.log_k_tilde + (-(-self.k).exp()).ln_1p()
    }

    /// Lower bound on `W{S(R_N) | x_o^N}`: `(K~/sqrt N) e^{-N E_SP(R)}`.
    pub fn typical_set_log_bound(&self, n: u64) -> Result<f64> {
        if n < self.n_min {
            return Err(Error::BelowValidity { n, n_min: self.n_min });
        }
        Ok(self.log_k_tilde - 0.5 * (n as f64).ln() - n as f64 * self.e_sp)
    }

    pub fn evaluate(&self, n: u64) -> Result<BoundEvaluation> {
        if n < self.n_min {
            return Err(Error::BelowValidity { n, n_min: self.n_min });
        }
        let prefactor_log = -0.5 * (n as f64).ln() + self.log_k_tilde_2();
        let constants = BTreeMap::from([
            ("a".to_string(), self.a),
            ("k".to_string(), self.k),
            ("k_o".to_string(), self.k_o),
            ("t_max".to_string(), self.t_max),
            ("m2_min".to_string(), self.extrema.m2_min),
            ("m2_max".to_string(), self.extrema.m2_max),
            ("rho_R".to_string(), self.rho),
            ("rho_Rbar".to_string(), self.rho_r_bar),
            ("Rbar".to_string(), self.r_bar),
            ("R_inf".to_string(), self.r_inf),
            ("K_tilde".to_string(), self.log_k_tilde.exp()),
            ("K_tilde_2".to_string(), self.log_k_tilde_2().exp()),
            ("N_min".to_string(), self.n_min as f64),
        ]);
        Ok(BoundEvaluation {
            n,
            rate: self.rate,
            kind: BoundKind::SingularConverse,
            log_value: -(n as f64) * self.e_sp + prefactor_log,
            exponent: self.e_sp,
            prefactor_log,
            constants,
            n_min: self.n_min,
        })
    }
}

/// Nonsingular converse bound at blocklength `n`.
pub fn nonsingular_converse(ch: &Channel, rate: f64, n: u64, opts: ConverseOptions) -> Result<BoundEvaluation> {
    NonsingularConverse::new(ch, rate, opts)?.evaluate(n)
}

/// Singular converse bound at blocklength `n`.
pub fn singular_converse(ch: &Channel, rate: f64, n: u64, opts: ConverseOptions) -> Result<BoundEvaluation> {
    SingularConverse::new(ch, rate, opts)?.evaluate(n)
}

/// Exponent of `N` in the pre-factor `N^{-order}` of the converse.
#[derive(Debug, Clone, PartialEq)]
pub enum PrefactorOrder {
    /// Singular channels: `1/2` at every rate.
    Constant(f64),
    /// Nonsingular channels: `(1 + rho_R)/2`.
    Slope(Channel),
}

impl PrefactorOrder {
    pub fn at(&self, rate: f64) -> Result<f64> {
        match self {
            PrefactorOrder::Constant(v) => Ok(*v),
            PrefactorOrder::Slope(ch) => Ok((1.0 + sphere_packing_exponent(ch, rate)?.rho) / 2.0),
        }
    }
}

pub fn prefactor_order(ch: &Channel) -> Result<PrefactorOrder> {
    if !is_symmetric(ch) {
        return Err(Error::Unsupported(format!("channel '{}' is not symmetric", ch.name())));
    }
    Ok(if singular_xi(ch).is_some() { PrefactorOrder::Constant(0.5) } else { PrefactorOrder::Slope(ch.clone()) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{exact_tail, exact_tilted_expectation, DiscreteSumDistribution, Side};

    fn bernoulli(n: u64) -> IidSpec {
        IidSpec::new(&[(0.0, 0.5), (1.0, 0.5)], n).unwrap()
    }

    fn bsc_log_ratio() -> Vec<(f64, f64)> {
        vec![((0.5f64 / 0.9).ln(), 0.9), ((0.5f64 / 0.1).ln(), 0.1)]
    }

    #[test]
    fn lemma1_bernoulli_internals() {
        let b = lemma1_lower_bound(&bernoulli(200), 0.75, 2.0).unwrap();
        let i = b.internals;
        assert!((i.eta - 3f64.ln()).abs() < 1e-12);
        // Divergence of Bernoulli(0.75) from Bernoulli(0.5).
        let kl = 0.75 * (1.5f64).ln() + 0.25 * (0.5f64).ln();
        assert!((i.rate_function - kl).abs() < 1e-12);
        assert!((i.rate_function - 0.130812).abs() < 1e-6);
        assert!((i.m2_n / 200.0 - 0.1875).abs() < 1e-12);
        let m3 = 0.75 * 0.25f64.powi(3) + 0.25 * 0.75f64.powi(3);
        assert!((i.m3_n / 200.0 - m3).abs() < 1e-12);
        let t = 3f64.ln() * 2.0 * (2.0 * PI).sqrt() * m3 / 0.1875;
        assert!((i.t_n - t).abs() < 1e-12);
        let again = lemma1_lower_bound(&bernoulli(1000), 0.75, 2.0).unwrap();
        assert!((again.internals.t_n - i.t_n).abs() < 1e-12);
    }

    #[test]
    fn lemma1_below_exact_tail() {
        for n in [50u64, 200, 800, 2000] {
            let b = lemma1_lower_bound(&bernoulli(n), 0.75, 2.0).unwrap();
            let exact = DiscreteSumDistribution::new(&bernoulli(n).atoms(), n).unwrap().log_tail(0.75 * n as f64, Side::AtLeast);
            if let Some(lb) = b.log_bound {
                assert!(lb < exact, "n = {n}: {lb} vs {exact}");
            } else {
                assert!(b.bound <= 0.0);
            }
        }
        let atoms = bsc_log_ratio();
        for (n, c) in [(100u64, 0.0), (400, 0.2), (1000, -0.1), (2000, 0.1)] {
            let spec = IidSpec::new(&atoms, n).unwrap();
            let b = lemma1_lower_bound(&spec, c, 2.0).unwrap();
            let exact = exact_tail(&atoms, n, c * n as f64, Side::AtLeast).unwrap();
            assert!(b.bound <= exact, "n = {n}, c = {c}: {} vs {exact}", b.bound);
        }
    }

    #[test]
    fn lemma1_small_n_is_flagged() {
        let b = lemma1_lower_bound(&bernoulli(2), 0.75, 2.0).unwrap();
        assert!(!b.informative && b.bound <= 0.0 && b.log_bound.is_none());
    }

    #[test]
    fn lemma1_preconditions() {
        assert!(matches!(lemma1_lower_bound(&bernoulli(10), 0.5, 2.0), Err(Error::Domain(_))));
        assert!(matches!(lemma1_lower_bound(&bernoulli(10), 1.0, 2.0), Err(Error::Domain(_))));
        assert!(lemma1_lower_bound(&bernoulli(10), 0.75, 1.0).is_err());
        assert!(IidSpec::new(&[(1.0, 0.5), (1.0, 0.5)], 3).is_err());
        assert!(IidSpec::new(&[(0.0, 0.5), (1.0, 0.4)], 3).is_err());
    }

    #[test]
    fn lemma2_hand_checked() {
        let b = lemma2_upper_bound(&bernoulli(4), 2.0).unwrap();
        let exact = exact_tilted_expectation(&bernoulli(4).atoms(), 4, 2.0).unwrap();
        let by_hand = (-2f64).exp() / 16.0 + 4.0 * (-1f64).exp() / 16.0 + 6.0 / 16.0;
        assert!((exact - by_hand).abs() < 1e-15);
        assert!((exact - 0.475428).abs() < 1e-6);
        assert!((b.bound - 0.898942).abs() < 1e-6);
        assert!(b.exact_comparable);
    }

    #[test]
    fn lemma2_above_exact() {
        for (n, r) in [(16u64, 8.0), (100, 40.0), (2000, 1000.0), (2000, -50.0)] {
            let b = lemma2_upper_bound(&bernoulli(n), r).unwrap();
            let exact = exact_tilted_expectation(&bernoulli(n).atoms(), n, r).unwrap();
            assert!(exact <= b.bound, "{n} {r}");
        }
        let atoms = bsc_log_ratio();
        for n in [10u64, 300, 2000] {
            let b = lemma2_upper_bound(&IidSpec::new(&atoms, n).unwrap(), 0.0).unwrap();
            for r in [-5.0, 0.0, 3.0, 30.0] {
                assert!(exact_tilted_expectation(&atoms, n, r).unwrap() <= b.bound);
            }
        }
    }

    #[test]
    fn lemma2_independent_doubles_moment_term() {
        let law = DiscreteLaw::new(&[(0.0, 0.5), (1.0, 0.5)]).unwrap();
        let ind = lemma2_upper_bound_independent(&vec![law; 4]).unwrap();
        assert!((ind - (1.0 / (2.0 * PI).sqrt() + 1.0)).abs() < 1e-15);
        assert!(lemma2_upper_bound_independent(&[]).is_err());
    }

    /// Dense-grid re-derivation of the nonsingular constants.
    #[test]
    fn nonsingular_constants_match_grid() {
        let bsc = Channel::bsc(0.1).unwrap();
        let conv = NonsingularConverse::new(&bsc, 0.3, ConverseOptions::default()).unwrap();
        let g = &conv.geometry;
        let top = g.at_r_bar.eta;
        let pts: Vec<_> = (0..=200_000).map(|i| g.profile.law.point(top * i as f64 / 200_000.0)).collect();
        let m2_min = pts.iter().map(|p| p.second).fold(f64::INFINITY, f64::min);
        let m2_max = pts.iter().map(|p| p.second).fold(0.0, f64::max);
        let ratio = pts.iter().map(|p| p.third_abs / p.second).fold(0.0, f64::max);
        assert!((m2_min - g.extrema.m2_min).abs() < 1e-9);
        assert!((m2_max - g.extrema.m2_max).abs() < 1e-9);
        assert!((ratio - g.extrema.ratio_max).abs() < 1e-9);
        let t_max = 2.0 * 2.0 * (2.0 * PI).sqrt() * top * ratio;
        let k_o = (-t_max).exp() * 0.5 / (top * 2.0 * (2.0 * PI * m2_max).sqrt());
        assert!((conv.t_max - t_max).abs() < 1e-8);
        assert!((conv.k_o / k_o - 1.0).abs() < 1e-8);
        assert!((conv.k2 - conv.k1 - conv.k_o.ln()).abs() < 1e-12);
        assert!(conv.k3 > (-conv.k2).exp() && conv.k3 < 1.0);
        assert!((conv.eta_r - g.rho / (1.0 + g.rho)).abs() < 1e-9);
        for v in [conv.k_o, conv.k1, conv.k2, conv.k3, conv.t_max, conv.log_k_tilde.exp()] {
            assert!(v > 0.0 && v.is_finite());
        }
    }

    #[test]
    fn nonsingular_n_min_is_exact() {
        let bsc = Channel::bsc(0.1).unwrap();
        let conv = NonsingularConverse::new(&bsc, 0.3, ConverseOptions::default()).unwrap();
        let n = conv.n_min;
        assert!(!conv.conditions(n - 1).all());
        for m in (n..n + 3000).chain((1..40).map(|k| n + k * n / 4)) {
            assert!(conv.conditions(m).all(), "{m}");
        }
        assert!(matches!(conv.evaluate(2), Err(Error::BelowValidity { n: 2, n_min }) if n_min == n));
    }

    #[test]
    fn nonsingular_log_identity() {
        let bsc = Channel::bsc(0.1).unwrap();
        let conv = NonsingularConverse::new(&bsc, 0.3, ConverseOptions::default()).unwrap();
        let rho = conv.geometry.rho;
        for n in [conv.n_min, 2 * conv.n_min, 10 * conv.n_min] {
            let e = conv.evaluate(n).unwrap();
            let nf = n as f64;
            let expected = -nf * e.exponent - (1.0 + rho) / 2.0 * nf.ln() + conv.log_k_tilde;
            assert!((e.log_value - expected).abs() <= 1e-12 * e.log_value.abs());
            assert_eq!(e.log_value, -nf * e.exponent + e.prefactor_log);
            assert!((e.exponent - sphere_packing_exponent(&bsc, 0.3).unwrap().exponent).abs() < 1e-15);
        }
    }

    #[test]
    fn nonsingular_supplied_k1() {
        let bsc = Channel::bsc(0.1).unwrap();
        let def = NonsingularConverse::new(&bsc, 0.3, ConverseOptions::default()).unwrap();
        let c = NonsingularConverse::new(&bsc, 0.3, ConverseOptions { a: 2.0, k: Some(def.k1 + 1.0) }).unwrap();
        assert!((c.k2 - def.k2 - 1.0).abs() < 1e-12);
        assert!(NonsingularConverse::new(&bsc, 0.3, ConverseOptions { a: 2.0, k: Some(1.0) }).is_err());
    }

    #[test]
    fn zero_entry_typical_set() {
        let ch = Channel::from_matrix("cyc", &[vec![0.6, 0.3, 0.1, 0.0], vec![0.0, 0.6, 0.3, 0.1], vec![0.1, 0.0, 0.6, 0.3], vec![0.3, 0.1, 0.0, 0.6]]).unwrap();
        let conv = NonsingularConverse::new(&ch, 0.3, ConverseOptions::default()).unwrap();
        assert!(matches!(conv.typical, TypicalSetBound::ZeroEntry { q_y_o } if (q_y_o - 0.25).abs() < 1e-12));
        assert!(conv.conditions(conv.n_min).all());
    }

    #[test]
    fn converse_dispatch() {
        let bsc = Channel::bsc(0.1).unwrap();
        let bec = Channel::bec(0.5).unwrap();
        let opts = ConverseOptions::default();
        assert!(matches!(nonsingular_converse(&bec, 0.2, 10, opts), Err(Error::Unsupported(_))));
        assert!(matches!(singular_converse(&bsc, 0.3, 10, opts), Err(Error::Unsupported(_))));
        assert!(matches!(nonsingular_converse(&bsc, 0.6, 10, opts), Err(Error::Domain(_))));
    }

    #[test]
    fn singular_bound_below_exact() {
        let bec = Channel::bec(0.5).unwrap();
        let conv = SingularConverse::new(&bec, 0.2, ConverseOptions::default()).unwrap();
        assert!((conv.e_sp - 0.0923).abs() < 1e-4);
        assert!(!conv.conditions(conv.n_min - 1).all() && conv.conditions(conv.n_min).all());
        let atoms = [(0.5f64.ln(), 0.5), (0.0, 0.5)];
        for n in [conv.n_min, conv.n_min + 1, 3 * conv.n_min] {
            let d = DiscreteSumDistribution::new(&atoms, n).unwrap();
            let exact = d.log_tail(-(n as f64) * (0.2 - 1.0 / n as f64), Side::AtLeast);
            assert!(conv.typical_set_log_bound(n).unwrap() < exact);
        }
        let e = conv.evaluate(conv.n_min).unwrap();
        let expected = -0.5 * (conv.n_min as f64).ln() + conv.log_k_tilde + (1.0 - (-1f64).exp()).ln();
        assert!((e.prefactor_log - expected).abs() < 1e-12);
        assert!(matches!(conv.evaluate(100), Err(Error::BelowValidity { .. })));
    }

    #[test]
    fn prefactor_orders() {
        let bec = Channel::bec(0.5).unwrap();
        let o = prefactor_order(&bec).unwrap();
        assert_eq!(o.at(0.1).unwrap(), 0.5);
        assert_eq!(o.at(0.3).unwrap(), 0.5);
        let bsc = Channel::bsc(0.1).unwrap();
        let o = prefactor_order(&bsc).unwrap();
        let rho = sphere_packing_exponent(&bsc, 0.3).unwrap().rho;
        assert!((o.at(0.3).unwrap() - (1.0 + rho) / 2.0).abs() < 1e-15);
        let r_cr = crate::exponents::critical_rate(&bsc).unwrap();
        assert!((o.at(r_cr + 1e-9).unwrap() - 1.0).abs() < 1e-6);
        let asym = Channel::from_matrix("a", &[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        assert!(matches!(prefactor_order(&asym), Err(Error::Unsupported(_))));
    }
}

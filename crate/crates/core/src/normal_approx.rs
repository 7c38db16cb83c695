//! Third-order normal-approximation converses for singular channels, the
//! dichotomy report for symmetric channels, and the minimax meta-converse.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channel::Channel;
use crate::classify::{alpha, is_symmetric, singular_xi};
use crate::error::{Error, Result};
use crate::gaussian;
use crate::measures::{capacity, dispersion, eps_dispersion, kappa_bound, mutual_information, output_distribution, third_moment};
use crate::oracle::{DiscreteSumDistribution, Side};
use crate::prefactor::smallest_valid;
use crate::simplex;

/// Dispersions at or below this value are treated as zero.
pub const ZERO_DISPERSION: f64 = 1e-14;
/// Alphabet limits for the constant-composition constants.
pub const THEOREM4_MAX_INPUTS: usize = 4;
pub const THEOREM4_MAX_OUTPUTS: usize = 6;
/// Compositions sampled to fit and then re-verify the local constants.
pub const BETA_SAMPLES: usize = 10_000;
const BETA1_SAFETY: f64 = 0.9;
const BETA2_SAFETY: f64 = 1.1;

fn check_eps(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps = {eps} outside (0,1)")));
    }
    gaussian::quantile(eps)
}

/// Law of `ln(1/alpha_Y)` under `W(.|0)` for a symmetric singular channel.
fn singular_atoms(ch: &Channel) -> Result<Vec<(f64, f64)>> {
    if !is_symmetric(ch) {
        return Err(Error::Unsupported("the channel is not symmetric".into()));
    }
    if singular_xi(ch).is_none() {
        return Err(Error::Unsupported("the channel is nonsingular".into()));
    }
    let a = alpha(ch, &simplex::uniform(ch.num_inputs()));
    Ok(ch.row(0).iter().zip(&a).filter(|(w, _)| **w > 0.0).map(|(&w, &ay)| (-ay.ln(), w)).collect())
}

/// Law of `ln(1/alpha_Y)` under the capacity-achieving output `q`.
fn singular_output_atoms(ch: &Channel) -> Vec<(f64, f64)> {
    let u = simplex::uniform(ch.num_inputs());
    let a = alpha(ch, &u);
    output_distribution(ch, &u).into_iter().zip(a).filter(|(q, _)| *q > 0.0).map(|(q, ay)| (-ay.ln(), q)).collect()
}

/// Constants of the third-order converse for symmetric singular channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem3Constants {
    pub eps: f64,
    /// `Phi^{-1}(eps)`.
    pub z: f64,
    pub capacity: f64,
    pub dispersion: f64,
    /// Third absolute central moment of `ln(1/alpha_Y)`.
    pub m3: f64,
    /// `k(W) = m3 / V^{3/2}`.
    pub k: f64,
    /// `K(eps,W)`.
    pub big_k: f64,
    /// Smallest `N` with `1 - K/(2 phi(z) sqrt(N V)) > 1/2`.
    pub n_o: u64,
}

impl Theorem3Constants {
    /// `C + sqrt(V/N) z + K/N`, the rate at which `M* < e^{NR}` is proved.
    pub fn recipe_rate(&self, n: u64) -> f64 {
        let nf = n as f64;
        self.capacity + (self.dispersion / nf).sqrt() * self.z + self.big_k / nf
    }

    /// `N C + sqrt(N V) z`.
    pub fn second_order(&self, n: u64) -> f64 {
        let nf = n as f64;
        nf * self.capacity + (nf * self.dispersion).sqrt() * self.z
    }
}

pub fn theorem3_constant(ch: &Channel, eps: f64) -> Result<Theorem3Constants> {
    let z = check_eps(eps)?;
    let atoms = singular_atoms(ch)?;
    let mean: f64 = atoms.iter().map(|(v, p)| v * p).sum();
    let var: f64 = atoms.iter().map(|(v, p)| p * (v - mean).powi(2)).sum();
    if var <= ZERO_DISPERSION {
        return Err(Error::Domain("zero dispersion: the third-order term is degenerate".into()));
    }
    let m3: f64 = atoms.iter().map(|(v, p)| p * (v - mean).abs().powi(3)).sum();
    let phi = gaussian::pdf(z);
    let k = m3 / var.powf(1.5);
    let big_k = k * var.sqrt() / phi + 2.0 / phi * (1.0 / (2.0 * PI).sqrt() + m3 / var);
    let threshold = big_k * big_k / (phi * phi * var);
    let mut n_o = threshold.floor().max(0.0) as u64 + 1;
    while n_o > 1 && 1.0 - big_k / (2.0 * phi * ((n_o - 1) as f64 * var).sqrt()) > 0.5 {
        n_o -= 1;
    }
    while 1.0 - big_k / (2.0 * phi * (n_o as f64 * var).sqrt()) <= 0.5 {
        n_o += 1;
    }
    Ok(Theorem3Constants { eps, z, capacity: mean, dispersion: var, m3, k, big_k, n_o })
}

/// Upper bound on `ln M*_fb(N, eps)` with its parts.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalApproxBound {
    pub n: u64,
    pub eps: f64,
    pub second_order: f64,
    pub third_order: f64,
    pub log_m_bound: f64,
    pub n_min: u64,
}

/// `N C + sqrt(N V) z + K` without the blocklength check.
pub fn theorem3_bound_unchecked(consts: &Theorem3Constants, n: u64) -> NormalApproxBound {
    let second_order = consts.second_order(n);
    NormalApproxBound {
        n,
        eps: consts.eps,
        second_order,
        third_order: consts.big_k,
        log_m_bound: second_order + consts.big_k,
        n_min: consts.n_o,
    }
}

pub fn theorem3_bound(ch: &Channel, eps: f64, n: u64) -> Result<NormalApproxBound> {
    let consts = theorem3_constant(ch, eps)?;
    if n < consts.n_o {
        return Err(Error::BelowValidity { n, n_min: consts.n_o });
    }
    Ok(theorem3_bound_unchecked(&consts, n))
}

/// Exact meta-converse evaluation against the non-product output law.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimaxBeta {
    pub n: u64,
    pub eps: f64,
    pub rate: f64,
    /// `W{S(R) | x_o^N}`.
    pub p_s: f64,
    /// Randomization of the Neyman-Pearson test.
    pub tau: f64,
    /// `ln sum_{S(R)} q(y^N) exp(-N[R - (1/N) sum ln(1/alpha)])`.
    pub log_tilted_sum: f64,
    /// `ln beta_{1-eps}`.
    pub log_beta: f64,
    /// `-ln beta`, an upper bound on `ln M*(N, eps)`.
    pub log_m_bound: f64,
}

impl MinimaxBeta {
    /// Whether the bound proves `M*(N, eps) < e^{NR}`.
    pub fn below_rate(&self) -> bool {
        self.log_m_bound < self.n as f64 * self.rate
    }
}

pub fn minimax_beta(ch: &Channel, eps: f64, n: u64, rate: f64) -> Result<MinimaxBeta> {
    check_eps(eps)?;
    let w_atoms = singular_atoms(ch)?;
    let q_atoms = singular_output_atoms(ch);
    let r = n as f64 * rate;
    let p_s = DiscreteSumDistribution::new(&w_atoms, n)?.tail(r, Side::AtMost);
    let tau = eps / p_s;
    if !(tau <= 1.0) {
        return Err(Error::Domain(format!(
            "infeasible threshold: W(S(R)|x_o^N) = {p_s:e} is below eps = {eps}"
        )));
    }
    let log_tilted_sum = DiscreteSumDistribution::new(&q_atoms, n)?.log_tilted_expectation(r);
    let log_beta = (p_s - eps).ln() - r - log_tilted_sum;
    Ok(MinimaxBeta { n, eps, rate, p_s, tau, log_tilted_sum, log_beta, log_m_bound: -log_beta })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dichotomy {
    /// Nonsingular with positive dispersion: `ln sqrt(N) + Theta(1)`.
    LogSqrtN,
    /// Singular with positive dispersion: `Theta(1)`.
    Constant,
    /// Zero dispersion.
    Degenerate,
}

impl Dichotomy {
    pub fn label(&self) -> &'static str {
        match self {
            Dichotomy::LogSqrtN => "ln sqrt(N) + Theta(1)",
            Dichotomy::Constant => "Theta(1)",
            Dichotomy::Degenerate => "degenerate",
        }
    }

    pub fn branch(&self) -> char {
        match self {
            Dichotomy::LogSqrtN => 'a',
            Dichotomy::Constant => 'b',
            Dichotomy::Degenerate => 'c',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThirdOrderReport {
    pub class: String,
    pub n: u64,
    pub eps: f64,
    pub second_order: f64,
    /// `K(eps,W)` when the third-order term is a proved constant.
    pub third_order_bound: Option<f64>,
    pub dichotomy: Dichotomy,
    pub constants: BTreeMap<String, f64>,
}

/// Third-order behaviour of `ln M*` for a symmetric channel.
pub fn theorem5_report(ch: &Channel, eps: f64, n: u64) -> Result<ThirdOrderReport> {
    let z = check_eps(eps)?;
    if !is_symmetric(ch) {
        return Err(Error::Unsupported("the dichotomy report needs a symmetric channel".into()));
    }
    let singular = singular_xi(ch).is_some();
    let cap = capacity(ch)?;
    let (v_eps, _) = eps_dispersion(ch, eps)?;
    let nf = n as f64;
    let mut constants = BTreeMap::new();
    constants.insert("C".to_string(), cap.value);
    constants.insert("V_eps".to_string(), v_eps);
    let class = format!("symmetric, {}", if singular { "singular" } else { "nonsingular" });
    let second_order = nf * cap.value + (nf * v_eps.max(0.0)).sqrt() * z;
    let (dichotomy, third_order_bound) = if v_eps <= ZERO_DISPERSION {
        (Dichotomy::Degenerate, None)
    } else if singular {
        let t3 = theorem3_constant(ch, eps)?;
        constants.insert("k".to_string(), t3.k);
        constants.insert("K".to_string(), t3.big_k);
        constants.insert("N_o".to_string(), t3.n_o as f64);
        (Dichotomy::Constant, Some(t3.big_k))
    } else {
        (Dichotomy::LogSqrtN, None)
    };
    Ok(ThirdOrderReport { class, n, eps, second_order, third_order_bound, dichotomy, constants })
}

/// Options for the constant-composition constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem4Options {
    /// `a > 2/(1-eps)` for `eps > 1/2`; defaults to `2/(1-eps) + 1`.
    pub a: Option<f64>,
    pub seed: u64,
}

impl Default for Theorem4Options {
    fn default() -> Self {
        Theorem4Options { a: None, seed: 0 }
    }
}

/// Constants of the third-order converse for asymmetric singular channels.
/// Quantities obtained by grids or sampling are estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem4Constants {
    pub eps: f64,
    pub z: f64,
    pub capacity: f64,
    pub achiever: Vec<f64>,
    pub v_eps: f64,
    pub delta: f64,
    pub nu: f64,
    pub a: Option<f64>,
    pub kappa: f64,
    /// Largest `m3/V` over `S1(delta, nu)`.
    pub max_m3_over_v: f64,
    /// `K(W, eps, delta, nu)`.
    pub big_k: f64,
    /// `C - sup I` outside the ball of radius `delta`.
    pub gamma: f64,
    pub sigma2_max: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Fresh-sample re-verification of the `beta1`, `beta2` inequalities.
    pub beta_verified: bool,
    /// `K-tilde` (eps < 1/2) or `K-hat` (eps > 1/2).
    pub third_order: f64,
    pub n_o: u64,
    pub n_o_tilde: u64,
    pub estimated: bool,
}

impl Theorem4Constants {
    pub fn n_min(&self) -> u64 {
        self.n_o.max(self.n_o_tilde)
    }

    pub fn second_order(&self, n: u64) -> f64 {
        let nf = n as f64;
        nf * self.capacity + (nf * self.v_eps).sqrt() * self.z
    }

    /// Upper bound on `ln M*` for constant-composition codes.
    pub fn bound(&self, n: u64) -> Result<NormalApproxBound> {
        if n < self.n_min() {
            return Err(Error::BelowValidity { n, n_min: self.n_min() });
        }
        let second_order = self.second_order(n);
        Ok(NormalApproxBound {
            n,
            eps: self.eps,
            second_order,
            third_order: self.third_order,
            log_m_bound: second_order + self.third_order,
            n_min: self.n_min(),
        })
    }

    /// `1 - exp(-N[gamma/2 + sqrt(V_eps/N) z]) - 4 sigma2_max/(N gamma^2) - eps`.
    pub fn far_composition_margin(&self, n: u64) -> f64 {
        far_margin(self.gamma, self.v_eps, self.z, self.sigma2_max, self.eps, n)
    }

    pub fn constants(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        for (k, v) in [
            ("C", self.capacity),
            ("V_eps", self.v_eps),
            ("delta", self.delta),
            ("nu", self.nu),
            ("kappa", self.kappa),
            ("max_m3_over_V", self.max_m3_over_v),
            ("K", self.big_k),
            ("gamma", self.gamma),
            ("sigma2_max", self.sigma2_max),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("third_order", self.third_order),
            ("N_o", self.n_o as f64),
            ("N_o_tilde", self.n_o_tilde as f64),
        ] {
            m.insert(k.to_string(), v);
        }
        if let Some(a) = self.a {
            m.insert("a".to_string(), a);
        }
        m
    }
}

fn far_margin(gamma: f64, v_eps: f64, z: f64, sigma2_max: f64, eps: f64, n: u64) -> f64 {
    let nf = n as f64;
    1.0 - (-(nf * gamma / 2.0 + (nf * v_eps).sqrt() * z)).exp() - 4.0 * sigma2_max / (nf * gamma * gamma) - eps
}

/// Orthonormal basis of the sum-zero hyperplane in `R^k`.
fn tangent_basis(k: usize) -> Vec<Vec<f64>> {
    (1..k)
        .map(|j| {
            let s = ((j * (j + 1)) as f64).sqrt();
            (0..k).map(|i| if i < j { 1.0 / s } else if i == j { -(j as f64) / s } else { 0.0 }).collect()
        })
        .collect()
}

/// Points of the simplex around a centre, in tangent coordinates.
struct Chart {
    centre: Vec<f64>,
    basis: Vec<Vec<f64>>,
}

impl Chart {
    fn dim(&self) -> usize {
        self.basis.len()
    }

    /// The composition at tangent coordinates `c`, if it is a distribution.
    fn point(&self, c: &[f64]) -> Option<Vec<f64>> {
        let mut p = self.centre.clone();
        for (ci, b) in c.iter().zip(&self.basis) {
            for (pi, bi) in p.iter_mut().zip(b) {
                *pi += ci * bi;
            }
        }
        if p.iter().any(|&v| v < -1e-15) {
            return None;
        }
        p.iter_mut().for_each(|v| *v = v.max(0.0));
        Some(p)
    }
}

/// Points per axis of the tangent grid.
fn grid_points(dim: usize) -> usize {
    match dim {
        1 => 4001,
        2 => 200,
        _ => 60,
    }
}

/// Every grid point of `[-h, h]^dim` (with `grid_points(dim)` per axis).
fn box_grid(dim: usize, h: f64) -> (Vec<Vec<f64>>, f64) {
    let m = grid_points(dim);
    let step = 2.0 * h / (m - 1) as f64;
    let mut out = Vec::with_capacity(m.pow(dim as u32));
    let mut idx = vec![0usize; dim];
    loop {
        out.push(idx.iter().map(|&i| -h + step * i as f64).collect());
        let mut d = 0;
        while d < dim {
            idx[d] += 1;
            if idx[d] < m {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == dim {
            return (out, step);
        }
    }
}

/// Coordinate pattern search maximizing `f` from `start`; `f` returns `None`
/// outside the feasible set.
fn pattern_maximize(start: Vec<f64>, value: f64, step: f64, f: &dyn Fn(&[f64]) -> Option<f64>) -> (Vec<f64>, f64) {
    let (mut best, mut best_v) = (start, value);
    let mut s = step;
    while s > 1e-10 {
        let mut improved = false;
        for d in 0..best.len() {
            for sign in [1.0, -1.0] {
                let mut c = best.clone();
                c[d] += sign * s;
                if let Some(v) = f(&c) {
                    if v > best_v {
                        best = c;
                        best_v = v;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            s *= 0.5;
        }
    }
    (best, best_v)
}

/// Grid maximum of `f` over feasible points of `[-h, h]^dim`, then refined.
fn maximize(chart: &Chart, h: f64, f: &dyn Fn(&[f64]) -> Option<f64>) -> Option<f64> {
    let (grid, step) = box_grid(chart.dim(), h);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for c in grid {
        if let Some(v) = f(&c) {
            if best.as_ref().is_none_or(|b| v > b.1) {
                best = Some((c, v));
            }
        }
    }
    best.map(|(c, v)| pattern_maximize(c, v, step, f).1)
}

/// Directions on the unit sphere of the tangent space.
fn sphere_directions(dim: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => {
            let m = 20_000;
            (0..m).map(|i| {
                let t = 2.0 * PI * i as f64 / m as f64;
                vec![t.cos(), t.sin()]
            }).collect()
        }
        _ => {
            let m = 40_000;
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..m)
                .map(|i| {
                    let y = 1.0 - 2.0 * (i as f64 + 0.5) / m as f64;
                    let r = (1.0 - y * y).sqrt();
                    let t = golden * i as f64;
                    vec![r * t.cos(), y, r * t.sin()]
                })
                .collect()
        }
    }
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = simplex::norm2(v);
    v.iter().map(|x| x / n).collect()
}

/// `sup I` over compositions at distance `delta` from the centre.
fn sup_info_on_sphere(ch: &Channel, chart: &Chart, delta: f64) -> Option<f64> {
    let f = |u: &[f64]| -> Option<f64> {
        let c: Vec<f64> = normalized(u).iter().map(|v| v * delta).collect();
        chart.point(&c).map(|p| mutual_information(ch, &p))
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for u in sphere_directions(chart.dim()) {
        if let Some(v) = f(&u) {
            if best.as_ref().is_none_or(|b| v > b.1) {
                best = Some((u, v));
            }
        }
    }
    let (u, v) = best?;
    if chart.dim() == 1 {
        return Some(v);
    }
    Some(pattern_maximize(u, v, 1e-2, &f).1)
}

/// Uniform sample from `S1(delta, nu)`: the ball around the centre
/// intersected with the simplex and `V >= nu`.
fn sample_s1(ch: &Channel, chart: &Chart, delta: f64, nu: f64, rng: &mut ChaCha8Rng, count: usize) -> Result<Vec<Vec<f64>>> {
    let dim = chart.dim();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 1000 * count {
            return Err(Error::NoConvergence(format!("only {} of {count} compositions found in S1", out.len())));
        }
        let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let radius = delta * rng.random::<f64>().powf(1.0 / dim as f64);
        if radius < 1e-12 {
            continue;
        }
        let c: Vec<f64> = normalized(&g).iter().map(|v| v * radius).collect();
        if let Some(p) = chart.point(&c) {
            if dispersion(ch, &p) >= nu {
                out.push(p);
            }
        }
    }
    Ok(out)
}

/// Ratios `(C - I)/|P - P*|^2` and `|sqrt V - sqrt V*|/|P - P*|` at a composition.
fn local_ratios(ch: &Channel, p: &[f64], centre: &[f64], cap: f64, v_star: f64) -> (f64, f64) {
    let d = simplex::dist2(p, centre);
    let i = mutual_information(ch, p);
    let v = dispersion(ch, p);
    ((cap - i) / (d * d), (v.sqrt() - v_star.sqrt()).abs() / d)
}

/// Constants of the third-order converse for asymmetric singular channels
/// over constant-composition codes.
pub fn theorem4_constants(ch: &Channel, eps: f64, opts: Theorem4Options) -> Result<Theorem4Constants> {
    let z = check_eps(eps)?;
    if eps == 0.5 {
        return Err(Error::Domain("eps = 1/2 is not covered by either branch".into()));
    }
    if is_symmetric(ch) {
        return Err(Error::Unsupported("symmetric channel: use the symmetric third-order constant".into()));
    }
    if singular_xi(ch).is_none() {
        return Err(Error::Unsupported("the channel is nonsingular".into()));
    }
    let (nx, ny) = (ch.num_inputs(), ch.num_outputs());
    if nx > THEOREM4_MAX_INPUTS || ny > THEOREM4_MAX_OUTPUTS {
        return Err(Error::CapExceeded(format!(
            "constant-composition constants are limited to {THEOREM4_MAX_INPUTS} inputs and {THEOREM4_MAX_OUTPUTS} outputs"
        )));
    }
    let cap = capacity(ch)?;
    if !cap.unique {
        return Err(Error::Unsupported("the capacity-achieving input is not certified unique".into()));
    }
    let p_star = cap.achiever.clone();
    let v_eps = dispersion(ch, &p_star);
    let a = if eps > 0.5 {
        if v_eps <= ZERO_DISPERSION {
            return Err(Error::Domain("eps > 1/2 needs a positive eps-dispersion".into()));
        }
        let floor = 2.0 / (1.0 - eps);
        let a = opts.a.unwrap_or(floor + 1.0);
        if !(a > floor) {
            return Err(Error::InvalidInput(format!("a = {a} must exceed 2/(1-eps) = {floor}")));
        }
        Some(a)
    } else {
        if v_eps <= ZERO_DISPERSION {
            return Err(Error::Unsupported(
                "zero eps-dispersion: the third-order term is bounded by a separate argument and no constants are produced".into(),
            ));
        }
        None
    };
    let nu = match a {
        Some(a) => v_eps * z * z / a,
        None => v_eps / 2.0,
    };
    let chart = Chart { centre: p_star.clone(), basis: tangent_basis(nx) };

    // Full output support on the ball: alpha_y(Q) >= alpha_y(P*) - delta |a_y - mean(a_y) 1|.
    let alpha_star = alpha(ch, &p_star);
    let support_margin: Vec<(f64, f64)> = (0..ny)
        .map(|y| {
            let ind: Vec<f64> = (0..nx).map(|x| if ch.w(x, y) > 0.0 { 1.0 } else { 0.0 }).collect();
            let mean = ind.iter().sum::<f64>() / nx as f64;
            (alpha_star[y], simplex::norm2(&ind.iter().map(|v| v - mean).collect::<Vec<_>>()))
        })
        .collect();
    let mut delta = None;
    for j in 1..=20 {
        let d = 0.5f64.powi(j);
        if support_margin.iter().any(|&(a0, g)| a0 - d * g <= 0.0) {
            continue;
        }
        if a.is_none() {
            let in_ball = |c: &[f64]| -> Option<f64> {
                if simplex::norm2(c) > d {
                    return None;
                }
                chart.point(c).map(|p| -dispersion(ch, &p))
            };
            let min_v = -maximize(&chart, d, &in_ball).unwrap_or(f64::NEG_INFINITY);
            if min_v < nu {
                continue;
            }
        }
        delta = Some(d);
        break;
    }
    let delta = delta.ok_or_else(|| Error::NoConvergence("no delta in {2^-1, ..., 2^-20} meets the ball conditions".into()))?;

    let in_s1 = |c: &[f64]| -> Option<Vec<f64>> {
        if simplex::norm2(c) > delta {
            return None;
        }
        chart.point(c).filter(|p| dispersion(ch, p) >= nu)
    };
    let ratio = |c: &[f64]| in_s1(c).map(|p| third_moment(ch, &p) / dispersion(ch, &p));
    let max_m3_over_v = maximize(&chart, delta, &ratio).ok_or_else(|| Error::Domain("S1(delta, nu) is empty".into()))?;
    let kappa = kappa_bound(ch);
    let phi = gaussian::pdf(z);
    let big_k = 2.0 / phi * (max_m3_over_v + 1.0 / (2.0 * PI).sqrt() + kappa / nu);

    let sup_far = sup_info_on_sphere(ch, &chart, delta)
        .ok_or_else(|| Error::Domain("no composition lies at distance delta from the achiever".into()))?;
    let gamma = cap.value - sup_far;
    if !(gamma > 0.0) {
        return Err(Error::NoConvergence(format!("gamma(delta) = {gamma:e} is not positive")));
    }
    let whole = |c: &[f64]| chart.point(c).map(|p| dispersion(ch, &p));
    let sigma2_max = maximize(&chart, 2f64.sqrt(), &whole).unwrap_or(v_eps).max(v_eps);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let fit = sample_s1(ch, &chart, delta, nu, &mut rng, BETA_SAMPLES)?;
    let (mut b1, mut b2) = (f64::INFINITY, 0.0f64);
    for p in &fit {
        let (r1, r2) = local_ratios(ch, p, &p_star, cap.value, v_eps);
        b1 = b1.min(r1);
        b2 = b2.max(r2);
    }
    let (beta1, beta2) = (BETA1_SAFETY * b1, BETA2_SAFETY * b2);
    if !(beta1 > 0.0 && beta2 > 0.0) {
        return Err(Error::NoConvergence(format!("sampled local constants beta1 = {beta1:e}, beta2 = {beta2:e} are not positive")));
    }
    let fresh = sample_s1(ch, &chart, delta, nu, &mut rng, BETA_SAMPLES)?;
    let beta_verified = fresh.iter().all(|p| {
        let (r1, r2) = local_ratios(ch, p, &p_star, cap.value, v_eps);
        r1 >= beta1 && r2 <= beta2
    });

    let quad = (beta2 * z).powi(2) / (4.0 * beta1);
    let third_order = match a {
        Some(a) => quad + big_k - (1.0 - eps - 2.0 / a).ln(),
        None => quad + big_k,
    };

    let monotone_from = if z < 0.0 { (z * z * v_eps / (gamma * gamma)).ceil() as u64 + 1 } else { 1 };
    let n_o = smallest_valid(monotone_from, |n| far_margin(gamma, v_eps, z, sigma2_max, eps, n) > 0.0)?;
    let root = 2.0 * big_k / (phi * nu.sqrt());
    let mut n_o_tilde = (root * root).floor() as u64 + 1;
    while n_o_tilde > 1 && ((n_o_tilde - 1) as f64).sqrt() > root {
        n_o_tilde -= 1;
    }
    while (n_o_tilde as f64).sqrt() <= root {
        n_o_tilde += 1;
    }

    Ok(Theorem4Constants {
        eps,
        z,
        capacity: cap.value,
        achiever: p_star,
        v_eps,
        delta,
        nu,
        a,
        kappa,
        max_m3_over_v,
        big_k,
        gamma,
        sigma2_max,
        beta1,
        beta2,
        beta_verified,
        third_order,
        n_o,
        n_o_tilde,
        estimated: true,
    })
}

/// Draws compositions from `S1(delta, nu)` of the given constants, for
/// independent checks of the sampled inequalities.
pub fn sample_s1_compositions(ch: &Channel, consts: &Theorem4Constants, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let chart = Chart { centre: consts.achiever.clone(), basis: tangent_basis(ch.num_inputs()) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_s1(ch, &chart, consts.delta, consts.nu, &mut rng, count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::parse_channel;
    use std::f64::consts::E;

    fn bec(e: f64) -> Channel {
        Channel::bec(e).unwrap()
    }

    fn bsc(p: f64) -> Channel {
        Channel::bsc(p).unwrap()
    }

    fn paper_channel() -> Channel {
        parse_channel("channel paper3x4\ninputs 3\noutputs 4\nrow 2/3 1/6 0 1/6\nrow 0 0 5/6 1/6\nrow 0 1/6 5/6 0\n").unwrap()
    }

    #[test]
    fn theorem3_bec_constants() {
        let c = theorem3_constant(&bec(0.5), 0.1).unwrap();
        let ln2 = 2f64.ln();
        assert!((c.capacity - 0.5 * ln2).abs() < 1e-15);
        assert!((c.dispersion - 0.25 * ln2 * ln2).abs() < 1e-15);
        assert!((c.k - 1.0).abs() < 1e-12);
        let sigma = 0.5 * ln2;
        let z: f64 = -1.2815515655446004;
        let phi = (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
        let expected = sigma / phi + 2.0 / phi * (1.0 / (2.0 * PI).sqrt() + sigma);
        assert!((c.big_k - expected).abs() < 1e-9, "{} vs {expected}", c.big_k);
        assert!((c.big_k - 10.4706).abs() < 1e-3);
        let threshold = expected * expected / (phi * phi * sigma * sigma);
        assert_eq!(c.n_o, threshold.floor() as u64 + 1);
    }

    #[test]
    fn theorem3_median_and_dispatch() {
        let c = theorem3_constant(&bec(0.5), 0.5).unwrap();
        assert_eq!(c.z, 0.0);
        assert_eq!(c.second_order(1000), 1000.0 * c.capacity);
        assert!(matches!(theorem3_constant(&bsc(0.1), 0.1), Err(Error::Unsupported(_))));
        let noiseless = Channel::noiseless(2).unwrap();
        assert!(matches!(theorem3_constant(&noiseless, 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn theorem3_bound_assembly() {
        let ch = bec(0.5);
        assert!(matches!(theorem3_bound(&ch, 0.1, 1), Err(Error::BelowValidity { .. })));
        let c = theorem3_constant(&ch, 0.1).unwrap();
        let b = theorem3_bound(&ch, 0.1, c.n_o).unwrap();
        assert!((b.log_m_bound - b.second_order - c.big_k).abs() < 1e-9 * b.log_m_bound);
        let u = theorem3_bound_unchecked(&c, 10_000);
        let expected = 1e4 * 0.3465736 + 100.0 * 0.1201133f64.sqrt() * (-1.281552) + c.big_k;
        assert!((u.log_m_bound - expected).abs() < 1e-2);
        let n = 1_000_000;
        let diff = theorem3_bound_unchecked(&c, n).log_m_bound - theorem3_bound_unchecked(&c, n - 1).log_m_bound;
        assert!((diff - c.capacity).abs() < 1e-3);
    }

    fn binomial_log_cdf(n: u64, k: i64, p: f64) -> f64 {
        let lf = |m: u64| (1..=m).map(|i| (i as f64).ln()).sum::<f64>();
        let terms: Vec<f64> = (0..=k.min(n as i64))
            .map(|j| {
                let j = j as u64;
                lf(n) - lf(j) - lf(n - j) + j as f64 * p.ln() + (n - j) as f64 * (1.0 - p).ln()
            })
            .collect();
        crate::exponents::log_sum_exp(terms)
    }

    #[test]
    fn minimax_matches_binomial_oracle() {
        let ch = bec(0.5);
        let c = theorem3_constant(&ch, 0.1).unwrap();
        let n = 100;
        let r = c.recipe_rate(n);
        let m = minimax_beta(&ch, 0.1, n, r).unwrap();
        // Non-erased symbols each add ln 2; the sum is ln 2 times a Binomial(n, 1/2).
        let ln2 = 2f64.ln();
        let kmax = ((n as f64 * r) / ln2 + 1e-9).floor() as i64;
        let p_s = binomial_log_cdf(n, kmax, 0.5).exp();
        assert!((m.p_s - p_s).abs() < 1e-12);
        // Under q, a symbol is unerased with probability 1/2 as well.
        let lf = |m: u64| (1..=m).map(|i| (i as f64).ln()).sum::<f64>();
        let terms: Vec<f64> = (0..=kmax)
            .map(|j| {
                let j = j as u64;
                lf(n) - lf(j) - lf(n - j) - n as f64 * ln2 - (n as f64 * r - j as f64 * ln2)
            })
            .collect();
        assert!((m.log_tilted_sum - crate::exponents::log_sum_exp(terms)).abs() < 1e-10);
        assert!(m.tau > 0.0 && m.tau < 1.0);
        assert!(m.below_rate());
    }

    #[test]
    fn minimax_infeasible_threshold() {
        assert!(matches!(minimax_beta(&bec(0.5), 0.1, 1, -1.0), Err(Error::Domain(_))));
        assert!(matches!(minimax_beta(&bsc(0.1), 0.1, 10, 0.3), Err(Error::Unsupported(_))));
    }

    #[test]
    fn minimax_bound_nondecreasing_in_rate() {
        let ch = bec(0.5);
        for n in [100u64, 400] {
            let values: Vec<f64> = (0..40)
                .filter_map(|i| minimax_beta(&ch, 0.1, n, 0.2 + 0.01 * i as f64).ok())
                .map(|m| m.log_m_bound)
                .collect();
            assert!(values.len() > 20);
            assert!(values.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        }
    }

    #[test]
    fn minimax_and_theorem3_bracket() {
        let ch = bec(0.5);
        let c = theorem3_constant(&ch, 0.1).unwrap();
        for n in (100..=2000).step_by(100) {
            let t3 = theorem3_bound_unchecked(&c, n).log_m_bound;
            let m = minimax_beta(&ch, 0.1, n, c.recipe_rate(n)).unwrap();
            assert!(m.log_m_bound >= t3 - 2.0 * c.big_k, "N = {n}");
            assert!(m.below_rate(), "N = {n}");
        }
    }

    #[test]
    fn dichotomy_dispatch() {
        let a = theorem5_report(&bsc(0.1), 0.1, 1000).unwrap();
        assert_eq!(a.dichotomy, Dichotomy::LogSqrtN);
        assert!(a.third_order_bound.is_none());
        let b = theorem5_report(&bec(0.5), 0.1, 1000).unwrap();
        assert_eq!(b.dichotomy, Dichotomy::Constant);
        assert_eq!(b.third_order_bound, Some(theorem3_constant(&bec(0.5), 0.1).unwrap().big_k));
        let noiseless = Channel::noiseless(2).unwrap();
        assert_eq!(theorem5_report(&noiseless, 0.3, 10).unwrap().dichotomy, Dichotomy::Degenerate);
        assert!(matches!(theorem5_report(&paper_channel(), 0.1, 10), Err(Error::Unsupported(_))));
    }

    #[test]
    fn tangent_basis_is_orthonormal() {
        for k in 2..=4 {
            let b = tangent_basis(k);
            for i in 0..k - 1 {
                assert!(b[i].iter().sum::<f64>().abs() < 1e-15);
                for j in 0..k - 1 {
                    let dot: f64 = b[i].iter().zip(&b[j]).map(|(x, y)| x * y).sum();
                    assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn kappa_uses_both_alphabets() {
        let k = kappa_bound(&paper_channel());
        assert!((k - ((3.0 / E) * (3f64.cbrt() + 4f64.cbrt()) + 3f64.ln()).powi(3)).abs() < 1e-12);
    }

    #[test]
    fn theorem4_dispatch() {
        assert!(matches!(theorem4_constants(&bec(0.5), 0.25, Theorem4Options::default()), Err(Error::Unsupported(_))));
        assert!(matches!(theorem4_constants(&paper_channel(), 0.5, Theorem4Options::default()), Err(Error::Domain(_))));
        let bad_a = Theorem4Options { a: Some(8.0), seed: 0 };
        assert!(matches!(theorem4_constants(&paper_channel(), 0.75, bad_a), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn theorem4_paper_channel() {
        let ch = paper_channel();
        for (eps, a) in [(0.25, None), (0.75, Some(9.0))] {
            let c = theorem4_constants(&ch, eps, Theorem4Options { a, seed: 7 }).unwrap();
            for (name, v) in c.constants() {
                assert!(v > 0.0, "{name} = {v} at eps = {eps}");
            }
            assert!(c.beta_verified);
            let n = c.n_min();
            assert!(c.far_composition_margin(n) > 0.0);
            assert!(c.far_composition_margin(n - 1) <= 0.0 || c.n_o < c.n_o_tilde);
            let samples = sample_s1_compositions(&ch, &c, 2000, 99).unwrap();
            let quad = (c.beta2 * c.z).powi(2) / (4.0 * c.beta1);
            for p in samples {
                assert!(simplex::dist2(&p, &c.achiever) <= c.delta + 1e-12);
                assert!(output_distribution(&ch, &p).iter().all(|&q| q > 0.0));
                for n in [100u64, 1000, 10_000] {
                    let nf = n as f64;
                    let lhs = nf * mutual_information(&ch, &p) + (nf * dispersion(&ch, &p)).sqrt() * c.z;
                    assert!(lhs <= c.second_order(n) + quad + 1e-9);
                }
            }
        }
    }
}

//! Mutual information, capacity and the dispersion family.

use nalgebra::{DMatrix, DVector};

use crate::channel::Channel;
use crate::classify;
use crate::error::{Error, Result};
use crate::simplex;

/// Capacity iteration stops once the upper and lower capacity bounds agree to this.
pub const CAPACITY_TOL: f64 = 1e-12;
pub const CAPACITY_MAX_ITER: usize = 1_000_000;
/// Largest alphabet accepted by the capacity routines.
pub const MAX_ALPHABET: usize = 64;
/// Largest active input set for which achiever vertices are enumerated.
const VERTEX_ENUMERATION_CAP: usize = 16;

/// A probability vector over the channel inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct InputDistribution(Vec<f64>);

impl InputDistribution {
    /// Validates `p` (tolerance 1e-9) and renormalizes it.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if !simplex::is_distribution(&p, 1e-9) {
            return Err(Error::InvalidInput("not a probability vector".into()));
        }
        let p: Vec<f64> = p.into_iter().map(|v| v.max(0.0)).collect();
        let s: f64 = p.iter().sum();
        Ok(InputDistribution(p.into_iter().map(|v| v / s).collect()))
    }

    pub fn uniform(k: usize) -> Self {
        InputDistribution(simplex::uniform(k))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Deref for InputDistribution {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `q_P(y) = sum_x P(x) W(y|x)`.
pub fn output_distribution(ch: &Channel, p: &[f64]) -> Vec<f64> {
    let mut q = vec![0.0; ch.num_outputs()];
    for (x, &px) in p.iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        for (qy, &w) in q.iter_mut().zip(ch.row(x)) {
            *qy += px * w;
        }
    }
    q
}

/// `D(W(.|x) || q)`; infinite when `q` misses part of the row support.
pub fn row_divergence(ch: &Channel, x: usize, q: &[f64]) -> f64 {
    let mut d = 0.0;
    for (&w, &qy) in ch.row(x).iter().zip(q) {
        if w > 0.0 {
            if qy <= 0.0 {
                return f64::INFINITY;
            }
            d += w * (w / qy).ln();
        }
    }
    d
}

/// Conditional divergence `D(V || W | P)` between two channels on the same alphabets.
pub fn conditional_divergence(v: &[Vec<f64>], w: &[Vec<f64>], p: &[f64]) -> f64 {
    let mut d = 0.0;
    for ((vr, wr), &px) in v.iter().zip(w).zip(p) {
        if px == 0.0 {
            continue;
        }
        for (&a, &b) in vr.iter().zip(wr) {
            if a > 0.0 {
                if b <= 0.0 {
                    return f64::INFINITY;
                }
                d += px * a * (a / b).ln();
            }
        }
    }
    d
}

/// `D(V || q | P)` for a channel `V` against a single output law.
pub fn divergence_to_output(v: &[Vec<f64>], q: &[f64], p: &[f64]) -> f64 {
    let w: Vec<Vec<f64>> = vec![q.to_vec(); v.len()];
    conditional_divergence(v, &w, p)
}

/// Per-input mean and variance of the information density under `W(.|x)`.
fn row_moments(ch: &Channel, x: usize, q: &[f64]) -> (f64, f64, f64) {
    let row = ch.row(x);
    let mean: f64 = row.iter().zip(q).filter(|(w, _)| **w > 0.0).map(|(w, qy)| w * (w / qy).ln()).sum();
    let (mut var, mut m3) = (0.0, 0.0);
    for (&w, &qy) in row.iter().zip(q) {
        if w > 0.0 {
            let d = (w / qy).ln() - mean;
            var += w * d * d;
            m3 += w * d.abs().powi(3);
        }
    }
    (mean, var, m3)
}

pub fn mutual_information(ch: &Channel, p: &[f64]) -> f64 {
    let q = output_distribution(ch, p);
    p.iter()
        .enumerate()
        .filter(|(_, &px)| px > 0.0)
        .map(|(x, &px)| px * row_moments(ch, x, &q).0)
        .sum()
}

/// Conditional information variance `V(P,W)`.
pub fn dispersion(ch: &Channel, p: &[f64]) -> f64 {
    let q = output_distribution(ch, p);
    p.iter()
        .enumerate()
        .filter(|(_, &px)| px > 0.0)
        .map(|(x, &px)| px * row_moments(ch, x, &q).1)
        .sum()
}

/// Conditional third absolute central moment `m3(P,W)`.
pub fn third_moment(ch: &Channel, p: &[f64]) -> f64 {
    let q = output_distribution(ch, p);
    p.iter()
        .enumerate()
        .filter(|(_, &px)| px > 0.0)
        .map(|(x, &px)| px * row_moments(ch, x, &q).2)
        .sum()
}

/// Unconditional moments of the information density about `I(P;W)`: (U, third absolute moment).
fn unconditional_moments(ch: &Channel, p: &[f64]) -> (f64, f64) {
    let q = output_distribution(ch, p);
    let i = mutual_information(ch, p);
    let (mut u, mut m3) = (0.0, 0.0);
    for (x, &px) in p.iter().enumerate() {
        for (&w, &qy) in ch.row(x).iter().zip(&q) {
            if px > 0.0 && w > 0.0 {
                let d = (w / qy).ln() - i;
                u += px * w * d * d;
                m3 += px * w * d.abs().powi(3);
            }
        }
    }
    (u, m3)
}

/// Unconditional information variance `U(P,W)`.
pub fn unconditional_dispersion(ch: &Channel, p: &[f64]) -> f64 {
    unconditional_moments(ch, p).0
}

/// Unconditional third absolute moment about `I(P;W)`.
pub fn unconditional_third_moment(ch: &Channel, p: &[f64]) -> f64 {
    unconditional_moments(ch, p).1
}

/// Reverse dispersion `V^r(P,W)`: variance of the information density about its
/// posterior mean given the output.
pub fn reverse_dispersion(ch: &Channel, p: &[f64]) -> f64 {
    let q = output_distribution(ch, p);
    let k = ch.num_inputs();
    let mut post_mean = vec![0.0; ch.num_outputs()];
    for (y, pm) in post_mean.iter_mut().enumerate() {
        if q[y] <= 0.0 {
            continue;
        }
        for z in 0..k {
            let w = ch.w(z, y);
            if p[z] > 0.0 && w > 0.0 {
                *pm += p[z] * w / q[y] * (w / q[y]).ln();
            }
        }
    }
    let mut v = 0.0;
    for x in 0..k {
        for y in 0..ch.num_outputs() {
            let w = ch.w(x, y);
            if p[x] > 0.0 && w > 0.0 {
                let d = (w / q[y]).ln() - post_mean[y];
                v += p[x] * w * d * d;
            }
        }
    }
    v
}

/// `kappa = (3/e (|X|^{1/3} + |Y|^{1/3}) + ln min(|X|,|Y|))^3`.
pub fn kappa(num_inputs: usize, num_outputs: usize) -> f64 {
    let (a, b) = (num_inputs as f64, num_outputs as f64);
    (3.0 / std::f64::consts::E * (a.cbrt() + b.cbrt()) + a.min(b).ln()).powi(3)
}

pub fn kappa_bound(ch: &Channel) -> f64 {
    kappa(ch.num_inputs(), ch.num_outputs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Capacity {
    pub value: f64,
    pub achiever: Vec<f64>,
    pub unique: bool,
    /// Capacity-achieving output distribution (unique for every channel).
    pub output: Vec<f64>,
    /// Vertices of the achiever polytope, when enumerated.
    pub vertices: Vec<Vec<f64>>,
}

fn check_alphabet(ch: &Channel) -> Result<()> {
    if ch.num_inputs() > MAX_ALPHABET || ch.num_outputs() > MAX_ALPHABET {
        return Err(Error::CapExceeded(format!("alphabets are limited to {MAX_ALPHABET} symbols")));
    }
    Ok(())
}

/// Alternating capacity iteration from `start`; returns (lower bound, final input law).
///
/// Each step sets `P(x) ∝ P(x) exp(mu D(W_x||q_P))`, stopping once the
/// certificate `max_x D(W_x||q_P) - I(P)` is below `tol`. The exponent `mu`
/// doubles while the certificate shrinks and falls back towards the classical
/// step `mu = 1` otherwise.
pub fn blahut_arimoto(ch: &Channel, start: &[f64], tol: f64, max_iter: usize) -> Result<(f64, Vec<f64>)> {
    let k = ch.num_inputs();
    let state = |p: Vec<f64>| {
        let q = output_distribution(ch, &p);
        let d: Vec<f64> = (0..k).map(|x| row_divergence(ch, x, &q)).collect();
        let upper = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let info: f64 = p.iter().zip(&d).map(|(px, dx)| px * dx).sum();
        (p, d, upper, info)
    };
    let (mut p, mut d, mut upper, mut info) = state(start.to_vec());
    let mut mu = 1.0f64;
    for _ in 0..max_iter {
        if upper - info < tol {
            return Ok((info, p));
        }
        loop {
            let w: Vec<f64> = p.iter().zip(&d).map(|(px, dx)| px * (mu * (dx - upper)).exp()).collect();
            let s: f64 = w.iter().sum();
            let next = state(w.into_iter().map(|v| v / s).collect());
            if mu <= 1.0 || next.2 - next.3 < upper - info {
                (p, d, upper, info) = next;
                mu *= 2.0;
                break;
            }
            mu = (mu / 4.0).max(1.0);
        }
    }
    Err(Error::NoConvergence(format!("capacity iteration did not reach {tol:e} in {max_iter} steps")))
}

fn rank(m: &DMatrix<f64>) -> usize {
    if m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-10 * top.max(1.0)).count()
}

/// Solves `sum_{x in T} P(x) W(.|x) = q` on the subset `T`; returns P on the full alphabet.
fn solve_on_subset(ch: &Channel, subset: &[usize], q: &[f64]) -> Option<Vec<f64>> {
    let m = DMatrix::from_fn(ch.num_outputs(), subset.len(), |y, j| ch.w(subset[j], y));
    let b = DVector::from_column_slice(q);
    let sol = m.clone().svd(true, true).solve(&b, 1e-14).ok()?;
    let resid = (&m * &sol - &b).amax();
    if resid > 1e-8 || sol.iter().any(|&v| v < -1e-9) {
        return None;
    }
    let mut p = vec![0.0; ch.num_inputs()];
    for (j, &x) in subset.iter().enumerate() {
        p[x] = sol[j].max(0.0);
    }
    let s: f64 = p.iter().sum();
    Some(p.into_iter().map(|v| v / s).collect())
}

/// Vertices of `{P : q_P = q, supp P within active}`, or `None` when too large to enumerate.
fn achiever_vertices(ch: &Channel, active: &[usize], q: &[f64]) -> Option<Vec<Vec<f64>>> {
    let full = DMatrix::from_fn(ch.num_outputs(), active.len(), |y, j| ch.w(active[j], y));
    let r = rank(&full);
    if r == active.len() {
        return solve_on_subset(ch, active, q).map(|p| vec![p]);
    }
    if active.len() > VERTEX_ENUMERATION_CAP {
        return None;
    }
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    for mask in 1u32..(1u32 << active.len()) {
        let subset: Vec<usize> = (0..active.len()).filter(|i| mask & (1 << i) != 0).map(|i| active[i]).collect();
        if subset.len() > r {
            continue;
        }
        let m = DMatrix::from_fn(ch.num_outputs(), subset.len(), |y, j| ch.w(subset[j], y));
        if rank(&m) != subset.len() {
            continue;
        }
        if let Some(p) = solve_on_subset(ch, &subset, q) {
            if !vertices.iter().any(|v| simplex::total_variation(v, &p) < 1e-7) {
                vertices.push(p);
            }
        }
    }
    Some(vertices)
}

/// Capacity, an achieving input, and whether that input is the only one.
///
/// Symmetric channels use the uniform input. Other channels run the alternating
/// iteration. Uniqueness is decided exactly: all achievers share the output law
/// `q*` and live on inputs with `D(W(.|x)||q*) = C`, so the achiever set is a
/// polytope whose vertices are enumerated.
pub fn capacity(ch: &Channel) -> Result<Capacity> {
    check_alphabet(ch)?;
    let k = ch.num_inputs();
    let (value, p) = if classify::is_symmetric(ch) {
        let u = simplex::uniform(k);
        (mutual_information(ch, &u), u)
    } else {
        blahut_arimoto(ch, &simplex::uniform(k), CAPACITY_TOL, CAPACITY_MAX_ITER)?
    };
    let q = output_distribution(ch, &p);
    let active: Vec<usize> = (0..k).filter(|&x| row_divergence(ch, x, &q) > value - 1e-6).collect();
    match achiever_vertices(ch, &active, &q) {
        Some(vertices) if !vertices.is_empty() => {
            let unique = vertices.len() == 1;
            let achiever = if unique && simplex::total_variation(&vertices[0], &p) > 1e-12 {
                vertices[0].clone()
            } else {
                p
            };
            let value = mutual_information(ch, &achiever).max(value);
            let output = output_distribution(ch, &achiever);
            Ok(Capacity { value, achiever, unique, output, vertices })
        }
        _ => Ok(Capacity { value, achiever: p, unique: false, output: q, vertices: Vec::new() }),
    }
}

/// `V_eps`: minimum (eps < 1/2) or maximum (eps >= 1/2) of `V(P,W)` over capacity achievers.
///
/// On the achiever set the output law is fixed, so `V` is linear in `P` and
/// its extremes sit at the polytope vertices.
pub fn eps_dispersion(ch: &Channel, eps: f64) -> Result<(f64, bool)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps = {eps} outside (0,1)")));
    }
    let cap = capacity(ch)?;
    if cap.vertices.is_empty() {
        return Err(Error::NoConvergence(
            "achiever set could not be enumerated; V_eps is undetermined".into(),
        ));
    }
    let values = cap.vertices.iter().map(|v| dispersion(ch, v));
    let v = if eps < 0.5 { values.fold(f64::INFINITY, f64::min) } else { values.fold(f64::NEG_INFINITY, f64::max) };
    Ok((v, cap.unique))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispersionReport {
    pub mutual_information: f64,
    pub dispersion: f64,
    pub unconditional_dispersion: f64,
    pub reverse_dispersion: f64,
    pub third_moment: f64,
    pub capacity: f64,
    pub eps_dispersion: f64,
    pub capacity_achieving_unique: bool,
}

pub fn dispersion_report(ch: &Channel, p: &[f64], eps: f64) -> Result<DispersionReport> {
    if p.len() != ch.num_inputs() || !simplex::is_distribution(p, 1e-9) {
        return Err(Error::InvalidInput("input distribution does not match the channel".into()));
    }
    let cap = capacity(ch)?;
    let (eps_dispersion, unique) = eps_dispersion(ch, eps)?;
    Ok(DispersionReport {
        mutual_information: mutual_information(ch, p),
        dispersion: dispersion(ch, p),
        unconditional_dispersion: unconditional_dispersion(ch, p),
        reverse_dispersion: reverse_dispersion(ch, p),
        third_moment: third_moment(ch, p),
        capacity: cap.value,
        eps_dispersion,
        capacity_achieving_unique: unique,
    })
}

//! Brute-force ground truth: exact laws of i.i.d. sums, grid saddle points of
//! the min-max cost, and a primal solver for the constrained divergence program.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cgf::cgf_profile;
use crate::channel::Channel;
use crate::classify::singular_xi;
use crate::error::{Error, Result};
use crate::exponents::{log_sum_exp, sphere_packing_exponent, RateRegime};
use crate::measures::{conditional_divergence, divergence_to_output};
use crate::simplex;

/// Relative tolerance for merging support points of a sum.
pub const GROUPING_TOL: f64 = 1e-9;
/// Largest number of count vectors enumerated for one sum.
pub const SUPPORT_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    AtMost,
    AtLeast,
}

/// Law of `Z_1 + ... + Z_N` for i.i.d. `Z_n` on finitely many atoms, held as
/// sorted `(value, ln probability)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSumDistribution {
    n: u64,
    support: Vec<(f64, f64)>,
}

fn count_vectors(k: usize, n: u64) -> f64 {
    // C(n + k - 1, k - 1) in floating point, only used against the cap.
    (1..k).map(|i| (n as f64 + i as f64) / i as f64).product()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

impl DiscreteSumDistribution {
    pub fn new(atoms: &[(f64, f64)], n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("number of summands must be positive".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if atoms.is_empty() || atoms.iter().any(|a| !(a.1 >= 0.0) || !a.0.is_finite()) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput("atoms must carry finite values and probabilities summing to 1".into()));
        }
        let mut merged: Vec<(f64, f64)> = Vec::new();
        let mut sorted: Vec<(f64, f64)> = atoms.iter().cloned().filter(|a| a.1 > 0.0).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (v, p) in sorted {
            match merged.last_mut() {
                Some(last) if close(last.0, v, GROUPING_TOL) => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        let k = merged.len();
        if count_vectors(k, n) > SUPPORT_CAP as f64 {
            return Err(Error::CapExceeded(format!(
                "{k} distinct atoms over {n} summands exceed {SUPPORT_CAP} count vectors"
            )));
        }
        let mut ln_fact = vec![0.0f64; n as usize + 1];
        for i in 1..=n as usize {
            ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
        }
        let log_p: Vec<f64> = merged.iter().map(|a| a.1.ln()).collect();
        let mut points: Vec<(f64, f64)> = Vec::new();
        let mut counts = vec![0u64; k];
        enumerate(&mut counts, 0, n, &mut |c: &[u64]| {
            let mut value = 0.0;
            let mut lp = ln_fact[n as usize];
            for (i, &ci) in c.iter().enumerate() {
                if ci > 0 {
                    value += ci as f64 * merged[i].0;
                    lp += ci as f64 * log_p[i] - ln_fact[ci as usize];
                }
            }
            points.push((value, lp));
        });
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support: Vec<(f64, f64)> = Vec::with_capacity(points.len());
        for (v, lp) in points {
            match support.last_mut() {
                Some(last) if close(last.0, v, GROUPING_TOL) => {
                    last.1 = log_sum_exp([last.1, lp]);
                }
                _ => support.push((v, lp)),
            }
        }
        Ok(DiscreteSumDistribution { n, support })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// `(value, probability)` pairs in increasing order of value.
    pub fn support(&self) -> Vec<(f64, f64)> {
        self.support.iter().map(|&(v, lp)| (v, lp.exp())).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.support.iter().map(|s| s.1.exp()).sum()
    }

    fn selected(&self, t: f64, side: Side) -> impl Iterator<Item = &(f64, f64)> {
        let slack = 1e-12 * 1f64.max(t.abs());
        self.support.iter().filter(move |(v, _)| match side {
            Side::AtMost => *v <= t + slack,
            Side::AtLeast => *v >= t - slack,
        })
    }

    /// `ln Pr[sum <= t]` or `ln Pr[sum >= t]`.
    pub fn log_tail(&self, t: f64, side: Side) -> f64 {
        if t.is_nan() {
            return f64::NAN;
        }
        log_sum_exp(self.selected(t, side).map(|s| s.1))
    }

    pub fn tail(&self, t: f64, side: Side) -> f64 {
        self.log_tail(t, side).exp()
    }

    /// `ln E[1{sum <= r} exp(-(r - sum))]`.
    pub fn log_tilted_expectation(&self, r: f64) -> f64 {
        log_sum_exp(self.selected(r, Side::AtMost).map(|&(v, lp)| lp - (r - v).max(0.0)))
    }

    pub fn tilted_expectation(&self, r: f64) -> f64 {
        self.log_tilted_expectation(r).exp()
    }
}

fn enumerate(counts: &mut Vec<u64>, i: usize, left: u64, visit: &mut dyn FnMut(&[u64])) {
    if i + 1 == counts.len() {
        counts[i] = left;
        visit(counts);
        return;
    }
    for c in 0..=left {
        counts[i] = c;
        enumerate(counts, i + 1, left - c, visit);
    }
}

/// Exact `Pr[Z_1 + ... + Z_N <= t]` (or `>= t`).
pub fn exact_tail(atoms: &[(f64, f64)], n: u64, threshold: f64, side: Side) -> Result<f64> {
    Ok(DiscreteSumDistribution::new(atoms, n)?.tail(threshold, side))
}

/// Exact `E[1{sum <= r} exp(-(r - sum))]`.
pub fn exact_tilted_expectation(atoms: &[(f64, f64)], n: u64, r: f64) -> Result<f64> {
    Ok(DiscreteSumDistribution::new(atoms, n)?.tilted_expectation(r))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSaddleReport {
    pub rate: f64,
    pub rho_step: f64,
    pub q_step: f64,
    /// `argmax_rho min_q` of the cost on the grid.
    pub grid_rho: f64,
    /// `argmin_q max_rho` of the cost on the grid.
    pub grid_q: Vec<f64>,
    pub analytic_rho: f64,
    pub analytic_q: Vec<f64>,
    /// Distances in grid cells (sup norm over outputs for `q`).
    pub rho_cells: f64,
    pub q_cells: f64,
    /// Gap between the grid max-min and min-max values.
    pub duality_gap: f64,
}

impl GridSaddleReport {
    pub fn within_one_cell(&self) -> bool {
        self.rho_cells <= 1.0 + 1e-9 && self.q_cells <= 1.0 + 1e-9
    }
}

/// Output laws with coordinates `n/m` for integer vectors within `radius` of `center`.
fn simplex_grid(k: usize, m: u64, center: Option<&[i64]>, radius: i64) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    let mut cur = vec![0u64; k];
    fn rec(
        k: usize,
        i: usize,
        left: u64,
        center: Option<&[i64]>,
        radius: i64,
        cur: &mut Vec<u64>,
        out: &mut Vec<Vec<u64>>,
    ) {
        let ok = |y: usize, v: u64| center.is_none_or(|c| (v as i64 - c[y]).abs() <= radius);
        if i + 1 == k {
            if ok(i, left) {
                cur[i] = left;
                out.push(cur.clone());
            }
            return;
        }
        let (lo, hi) = match center {
            Some(c) => ((c[i] - radius).max(0) as u64, ((c[i] + radius).max(0) as u64).min(left)),
            None => (0, left),
        };
        if lo > hi {
            return;
        }
        for v in lo..=hi {
            cur[i] = v;
            rec(k, i + 1, left - v, center, radius, cur, out);
        }
    }
    rec(k, 0, m, center, radius, &mut cur, &mut out);
    out
}

struct GridSaddle {
    rho: f64,
    q: Vec<u64>,
    gap: f64,
}

fn solve_grid(ch: &Channel, r: f64, rhos: &[f64], qs: &[Vec<u64>], m: u64) -> GridSaddle {
    let (nx, ny) = (ch.num_inputs(), ch.num_outputs());
    // W^s per grid rho, with the exponent 1 - s applied to q.
    let powered: Vec<(f64, Vec<f64>)> = rhos
        .iter()
        .map(|&rho| {
            let s = 1.0 / (1.0 + rho);
            let ws = (0..nx * ny).map(|i| ch.w(i / ny, i % ny).powf(s)).collect();
            (1.0 - s, ws)
        })
        .collect();
    let mut row_min = vec![f64::INFINITY; rhos.len()];
    let mut col_max = vec![f64::NEG_INFINITY; qs.len()];
    let mut qe = vec![0.0; ny];
    for (j, cnt) in qs.iter().enumerate() {
        for (i, (&rho, (e, ws))) in rhos.iter().zip(&powered).enumerate() {
            for (y, &c) in cnt.iter().enumerate() {
                qe[y] = (c as f64 / m as f64).powf(*e);
            }
            let inner: f64 = ws.chunks(ny).map(|row| row.iter().zip(&qe).map(|(a, b)| a * b).sum::<f64>().ln()).sum();
            let f = -rho * r - (1.0 + rho) * inner / nx as f64;
            row_min[i] = row_min[i].min(f);
            col_max[j] = col_max[j].max(f);
        }
    }
    let i = (0..rhos.len()).max_by(|&a, &b| row_min[a].total_cmp(&row_min[b])).unwrap();
    let j = (0..qs.len()).min_by(|&a, &b| col_max[a].total_cmp(&col_max[b])).unwrap();
    GridSaddle { rho: rhos[i], q: qs[j].clone(), gap: col_max[j] - row_min[i] }
}

/// Grid saddle of the min-max cost. An exhaustive grid at `q` step between 0.001
/// and 0.01 and ten times the `rho` step is refined by factors of ten, each level
/// searched exhaustively within ten cells of the previous saddle.
pub fn grid_saddle_check(ch: &Channel, r: f64, rho_step: f64, q_step: f64) -> Result<GridSaddleReport> {
    let k = ch.num_outputs();
    if k > 4 {
        return Err(Error::CapExceeded(format!("grid saddle check needs at most 4 outputs, got {k}")));
    }
    if !(rho_step > 0.0 && q_step > 0.0 && q_step <= 0.1) {
        return Err(Error::InvalidInput("grid steps must be positive and q step at most 0.1".into()));
    }
    let sp = sphere_packing_exponent(ch, r)?;
    if sp.regime == RateRegime::Infinite {
        return Err(Error::Domain(format!("rate {r} is at or below R_inf")));
    }
    let m_fine = (1.0 / q_step).round() as u64;
    let mut m = m_fine;
    while m % 10 == 0 && m / 10 >= 100 {
        m /= 10;
    }
    let window = 10i64;
    let mut rho_h = 10.0 * rho_step;
    let rho_top = 20f64.max(4.0 * sp.rho.min(1e3));
    let rhos: Vec<f64> = (0..=(rho_top / rho_h).ceil() as usize).map(|i| i as f64 * rho_h).collect();
    let points = (1..k as u64).fold(1.0, |acc, i| acc * (m + i) as f64 / i as f64);
    if points * rhos.len() as f64 > 1e9 {
        return Err(Error::CapExceeded(format!("coarse grid of {points} laws is too large; use a power-of-ten q step")));
    }
    let mut best = solve_grid(ch, r, &rhos, &simplex_grid(k, m, None, 0), m);
    while m < m_fine {
        let lo = (best.rho - window as f64 * rho_h).max(0.0);
        let steps = (2.0 * window as f64 * rho_h / rho_step).round() as usize;
        let rhos: Vec<f64> = (0..=steps).map(|i| lo + i as f64 * rho_step).collect();
        let center: Vec<i64> = best.q.iter().map(|&c| c as i64 * 10).collect();
        best = solve_grid(ch, r, &rhos, &simplex_grid(k, m * 10, Some(&center), window * 10), m * 10);
        m *= 10;
        rho_h = rho_step;
    }

    let grid_q: Vec<f64> = best.q.iter().map(|&c| c as f64 / m_fine as f64).collect();
    let q_cells = grid_q.iter().zip(&sp.q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) * m_fine as f64;
    Ok(GridSaddleReport {
        rate: r,
        rho_step,
        q_step: 1.0 / m_fine as f64,
        grid_rho: best.rho,
        analytic_rho: sp.rho,
        rho_cells: (best.rho - sp.rho).abs() / rho_step,
        q_cells,
        duality_gap: best.gap,
        grid_q,
        analytic_q: sp.q,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalEsp {
    pub r: f64,
    /// Best value over both solvers.
    pub value: f64,
    /// Value along the tilted family `V ∝ W^{1-t} q_R^t`.
    pub sweep_value: f64,
    /// Value from projected gradient on the Lagrangian.
    pub gradient_value: f64,
    /// Lagrange multiplier of the divergence constraint.
    pub multiplier: f64,
    /// Largest per-row spread of the Lagrangian gradient on the support.
    pub kkt_residual: f64,
    /// `W` itself is feasible, so the minimum is zero.
    pub saturated: bool,
}

const PG_STARTS: usize = 10;
const PG_MAX_ITER: usize = 5_000;

fn row_objective(v: &[f64], w: &[f64], q: &[f64], mu: f64) -> f64 {
    v.iter()
        .zip(w)
        .zip(q)
        .filter(|((v, _), _)| **v > 0.0)
        .map(|((v, w), q)| v * (v / w).ln() + mu * v * (v / q).ln())
        .sum()
}

fn row_gradient(v: &[f64], w: &[f64], q: &[f64], mu: f64) -> Vec<f64> {
    v.iter()
        .zip(w)
        .zip(q)
        .map(|((v, w), q)| (1.0 + mu) * (v.max(1e-300).ln() + 1.0) - w.ln() - mu * q.ln())
        .collect()
}

/// Projected gradient with backtracking for one row of the Lagrangian,
/// restricted to the support of `w`.
fn minimize_row(start: &[f64], w: &[f64], q: &[f64], mu: f64) -> Vec<f64> {
    let mut v = start.to_vec();
    let mut f = row_objective(&v, w, q, mu);
    let mut step = 1.0;
    for _ in 0..PG_MAX_ITER {
        let g = row_gradient(&v, w, q, mu);
        let mut accepted = None;
        for _ in 0..80 {
            let trial: Vec<f64> = simplex::project(&v.iter().zip(&g).map(|(a, b)| a - step * b).collect::<Vec<_>>())
                .into_iter()
                .map(|x| x.max(1e-300))
                .collect();
            let s: f64 = trial.iter().sum();
            let trial: Vec<f64> = trial.iter().map(|x| x / s).collect();
            let ft = row_objective(&trial, w, q, mu);
            let lin: f64 = g.iter().zip(trial.iter().zip(&v)).map(|(g, (a, b))| g * (a - b)).sum();
            let sq: f64 = trial.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
            if ft <= f + lin + sq / (2.0 * step) + 1e-15 {
                accepted = Some((trial, ft, sq));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, ft, sq)) = accepted else { break };
        v = trial;
        f = ft;
        step *= 2.0;
        if sq.sqrt() < 1e-14 {
            break;
        }
    }
    v
}

struct RowProblem {
    w: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
}

impl RowProblem {
    /// Minimizer of `D(V||W|U) + mu D(V||q|U)` from the given start.
    fn solve(&self, start: &[Vec<f64>], mu: f64) -> Vec<Vec<f64>> {
        start.iter().zip(&self.w).zip(&self.q).map(|((s, w), q)| minimize_row(s, w, q, mu)).collect()
    }
}

/// Minimum of `D(V||W|U)` over channels with `D(V||q_R|U) <= r`, computed by
/// a tilted-family sweep and independently by projected gradient.
pub fn primal_esp(ch: &Channel, r: f64, rate: f64, seed: u64) -> Result<PrimalEsp> {
    if singular_xi(ch).is_some() {
        return Err(Error::Unsupported("primal program needs a nonsingular channel".into()));
    }
    let profile = cgf_profile(ch, Some(rate), 0)?;
    let q_r = profile.q.clone();
    let d_w_r = profile.d_w_r();
    if !(r > d_w_r) {
        return Err(Error::Domain(format!("r = {r} is infeasible: D(W_R||q_R|U) = {d_w_r}")));
    }
    let u = simplex::uniform(ch.num_inputs());
    let w = ch.rows();
    if divergence_to_output(&w, &q_r, &u) <= r {
        return Ok(PrimalEsp {
            r,
            value: 0.0,
            sweep_value: 0.0,
            gradient_value: 0.0,
            multiplier: 0.0,
            kkt_residual: 0.0,
            saturated: true,
        });
    }

    // Route 1: V_t ∝ W^{1-t} q_R^t, with D(V_t||q_R|U) decreasing in t.
    let family = |t: f64| -> Vec<Vec<f64>> {
        w.iter()
            .map(|row| {
                let logs: Vec<f64> = row
                    .iter()
                    .zip(&q_r)
                    .map(|(&a, &b)| if a > 0.0 { (1.0 - t) * a.ln() + t * b.ln() } else { f64::NEG_INFINITY })
                    .collect();
                let z = log_sum_exp(logs.iter().cloned());
                logs.iter().map(|l| (l - z).exp()).collect()
            })
            .collect()
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if divergence_to_output(&family(mid), &q_r, &u) > r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let sweep_value = conditional_divergence(&family(hi), &w, &u);

    // Route 2: projected gradient on the row-separable Lagrangian, with the
    // multiplier bisected until the constraint is active.
    let support_rows: Vec<Vec<usize>> =
        w.iter().map(|row| (0..row.len()).filter(|&y| row[y] > 0.0).collect()).collect();
    let problem = RowProblem {
        w: support_rows.iter().zip(&w).map(|(s, row)| s.iter().map(|&y| row[y]).collect()).collect(),
        q: support_rows.iter().map(|s| s.iter().map(|&y| q_r[y]).collect()).collect(),
    };
    let expand = |v: &[Vec<f64>]| -> Vec<Vec<f64>> {
        v.iter()
            .zip(&support_rows)
            .map(|(row, s)| {
                let mut full = vec![0.0; ch.num_outputs()];
                for (val, &y) in row.iter().zip(s) {
                    full[y] = *val;
                }
                full
            })
            .collect()
    };
    let constraint = |v: &[Vec<f64>]| divergence_to_output(&expand(v), &q_r, &u);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_start = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        support_rows.iter().map(|s| simplex::sample(rng, s.len())).collect()
    };
    // Bisection on the multiplier, warm-started from one random point.
    let mut v = random_start(&mut rng);
    let mut mu_hi = 1.0;
    loop {
        v = problem.solve(&v, mu_hi);
        if constraint(&v) <= r || mu_hi > 1e8 {
            break;
        }
        mu_hi *= 2.0;
    }
    let mut mu_lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (mu_lo + mu_hi);
        v = problem.solve(&v, mid);
        if constraint(&v) > r {
            mu_lo = mid;
        } else {
            mu_hi = mid;
        }
    }
    // Independent descents at the final multiplier.
    let mut best: Option<(f64, f64, Vec<Vec<f64>>)> = None;
    for _ in 0..PG_STARTS {
        let v = problem.solve(&random_start(&mut rng), mu_hi);
        let value = conditional_divergence(&expand(&v), &w, &u);
        if best.as_ref().is_none_or(|b| value < b.0) {
            best = Some((value, mu_hi, v));
        }
    }
    let (gradient_value, multiplier, v) = best.expect("at least one start");
    let kkt_residual = v
        .iter()
        .zip(problem.w.iter().zip(&problem.q))
        .map(|(row, (wr, qr))| {
            let g = row_gradient(row, wr, qr, multiplier);
            let mx = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mn = g.iter().cloned().fold(f64::INFINITY, f64::min);
            mx - mn
        })
        .fold(0.0, f64::max);
    Ok(PrimalEsp {
        r,
        value: sweep_value.min(gradient_value),
        sweep_value,
        gradient_value,
        multiplier,
        kkt_residual,
        saturated: false,
    })
}

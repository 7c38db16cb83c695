//! Verification suites that check the analytic machinery against the
//! brute-force oracles on one channel.

use std::fmt;
use std::str::FromStr;

use crate::cgf::{cgf_profile, constrained_exponent};
use crate::channel::Channel;
use crate::classify::{is_symmetric, singular_xi};
use crate::error::{Error, Result};
use crate::exponents::{gallager_eo, r_infinity, sphere_packing_exponent, verify_saddle_point};
use crate::measures::{capacity, output_distribution};
use crate::normal_approx::{minimax_beta, theorem3_bound_unchecked, theorem3_constant};
use crate::oracle::{grid_saddle_check, primal_esp, DiscreteSumDistribution, Side};
use crate::prefactor::{lemma1_lower_bound, lemma2_upper_bound, IidSpec};
use crate::simplex;

/// Grid steps of the saddle suite.
pub const SADDLE_RHO_STEP: f64 = 1e-3;
pub const SADDLE_Q_STEP: f64 = 1e-4;
/// Largest output alphabet gridded by the saddle suite.
pub const SADDLE_MAX_OUTPUTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Suite {
    Saddle,
    Lemma1,
    Lemma2,
    Primal,
    Meta,
    Cgf,
}

impl Suite {
    pub const ALL: [Suite; 6] = [Suite::Saddle, Suite::Lemma1, Suite::Lemma2, Suite::Primal, Suite::Meta, Suite::Cgf];

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Saddle => "saddle",
            Suite::Lemma1 => "lemma1",
            Suite::Lemma2 => "lemma2",
            Suite::Primal => "primal",
            Suite::Meta => "meta",
            Suite::Cgf => "cgf",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown suite '{s}'")))
    }
}

/// One comparison: passes when `residual <= tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(label: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Check { label: label.into(), residual, tolerance, pass: residual <= tolerance }
    }

    fn failed(label: impl Into<String>, err: &Error) -> Self {
        Check { label: format!("{}: {err}", label.into()), residual: f64::NAN, tolerance: 0.0, pass: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SuiteStatus {
    Pass,
    Fail,
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub status: SuiteStatus,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn from_checks(suite: Suite, checks: Vec<Check>) -> Self {
        let status = if checks.iter().all(|c| c.pass) { SuiteStatus::Pass } else { SuiteStatus::Fail };
        SuiteReport { suite, status, checks }
    }

    fn skipped(suite: Suite, note: impl Into<String>) -> Self {
        SuiteReport { suite, status: SuiteStatus::Skipped(note.into()), checks: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.status != SuiteStatus::Fail
    }

    /// Largest residual among finite checks.
    pub fn max_residual(&self) -> Option<f64> {
        self.checks.iter().map(|c| c.residual).filter(|r| r.is_finite()).reduce(f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Replaces the default tolerance of every equality check.
    pub tol: Option<f64>,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { tol: None, seed: 0 }
    }
}

impl VerifyOptions {
    fn tol(&self, default: f64) -> f64 {
        self.tol.unwrap_or(default)
    }
}

/// Rates `lo + f (C - lo)` with `lo = max(R_inf, 0)`.
fn interior_rates(ch: &Channel, fractions: &[f64]) -> Result<Vec<f64>> {
    let c = capacity(ch)?.value;
    let lo = r_infinity(ch)?.value.max(0.0);
    Ok(fractions.iter().map(|f| lo + f * (c - lo)).collect())
}

/// Law of the information density `ln(W(Y|0)/q*(Y))` under `W(.|0)`.
fn information_density_atoms(ch: &Channel) -> Result<Vec<(f64, f64)>> {
    let q = output_distribution(ch, &capacity(ch)?.achiever);
    Ok(ch.row(0).iter().zip(&q).filter(|(w, _)| **w > 0.0).map(|(&w, &qy)| ((w / qy).ln(), w)).collect())
}

fn nondegenerate(atoms: &[(f64, f64)]) -> bool {
    atoms.iter().any(|a| (a.0 - atoms[0].0).abs() > 1e-12)
}

fn saddle(ch: &Channel, opts: VerifyOptions) -> SuiteReport {
    if !is_symmetric(ch) {
        return SuiteReport::skipped(Suite::Saddle, "asymmetric channel: the saddle point is defined for symmetric channels");
    }
    let rates = match interior_rates(ch, &[0.3, 0.45, 0.6, 0.75, 0.9]) {
        Ok(r) => r,
        Err(e) => return SuiteReport::from_checks(Suite::Saddle, vec![Check::failed("rates", &e)]),
    };
    let mut checks = Vec::new();
    for r in rates {
        match verify_saddle_point(ch, r, opts.seed) {
            Ok(rep) => {
                checks.push(Check::new(format!("R={r:.6} constancy"), rep.constancy, opts.tol(1e-10)));
                checks.push(Check::new(format!("R={r:.6} identities"), rep.information_identity.max(rep.exponent_identity), opts.tol(1e-9)));
                checks.push(Check::new(format!("R={r:.6} sampled saddle violation"), rep.saddle_violation, opts.tol(1e-9)));
            }
            Err(e) => checks.push(Check::failed(format!("R={r:.6} saddle"), &e)),
        }
        if ch.num_outputs() <= SADDLE_MAX_OUTPUTS {
            match grid_saddle_check(ch, r, SADDLE_RHO_STEP, SADDLE_Q_STEP) {
                Ok(g) => checks.push(Check::new(format!("R={r:.6} grid cells (rho, q) = ({:.3}, {:.3})", g.rho_cells, g.q_cells), g.rho_cells.max(g.q_cells), 1.0 + 1e-9)),
                Err(e) => checks.push(Check::failed(format!("R={r:.6} grid"), &e)),
            }
        }
    }
    SuiteReport::from_checks(Suite::Saddle, checks)
}

fn lemma1(ch: &Channel) -> SuiteReport {
    let atoms = match information_density_atoms(ch) {
        Ok(a) if nondegenerate(&a) => a,
        Ok(_) => return SuiteReport::skipped(Suite::Lemma1, "degenerate information density"),
        Err(e) => return SuiteReport::from_checks(Suite::Lemma1, vec![Check::failed("atoms", &e)]),
    };
    let mean: f64 = atoms.iter().map(|a| a.0 * a.1).sum();
    let top = atoms.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
    let mut checks = Vec::new();
    for n in [50u64, 200, 800] {
        for f in [0.1, 0.3, 0.5] {
            let c = mean + f * (top - mean);
            let label = format!("N={n} c={c:.6} bound - exact (log)");
            let run = || -> Result<f64> {
                let b = lemma1_lower_bound(&IidSpec::new(&atoms, n)?, c, 2.0)?;
                let exact = DiscreteSumDistribution::new(&atoms, n)?.log_tail(n as f64 * c, Side::AtLeast);
                Ok(b.log_bound.map_or(f64::NEG_INFINITY, |lb| lb - exact))
            };
            match run() {
                Ok(gap) => checks.push(Check::new(label, gap, 0.0)),
                Err(e) => checks.push(Check::failed(label, &e)),
            }
        }
    }
    SuiteReport::from_checks(Suite::Lemma1, checks)
}

fn lemma2(ch: &Channel) -> SuiteReport {
    let atoms = match information_density_atoms(ch) {
        Ok(a) if nondegenerate(&a) => a,
        Ok(_) => return SuiteReport::skipped(Suite::Lemma2, "degenerate information density"),
        Err(e) => return SuiteReport::from_checks(Suite::Lemma2, vec![Check::failed("atoms", &e)]),
    };
    let mean: f64 = atoms.iter().map(|a| a.0 * a.1).sum();
    let sd = atoms.iter().map(|a| a.1 * (a.0 - mean).powi(2)).sum::<f64>().sqrt();
    let mut checks = Vec::new();
    for n in [4u64, 50, 200, 800] {
        for t in [-1.0, 0.0, 1.0] {
            let r = n as f64 * mean + t * (n as f64).sqrt() * sd;
            let label = format!("N={n} r={r:.6} exact - bound (log)");
            let run = || -> Result<f64> {
                let b = lemma2_upper_bound(&IidSpec::new(&atoms, n)?, r)?;
                let exact = DiscreteSumDistribution::new(&atoms, n)?.log_tilted_expectation(r);
                Ok(exact - b.bound.ln())
            };
            match run() {
                Ok(gap) => checks.push(Check::new(label, gap, 0.0)),
                Err(e) => checks.push(Check::failed(label, &e)),
            }
        }
    }
    SuiteReport::from_checks(Suite::Lemma2, checks)
}

fn primal(ch: &Channel, opts: VerifyOptions) -> SuiteReport {
    if !is_symmetric(ch) {
        return SuiteReport::skipped(Suite::Primal, "asymmetric channel");
    }
    if singular_xi(ch).is_some() {
        return SuiteReport::skipped(Suite::Primal, "singular channel: the constrained program is degenerate");
    }
    let rates = match interior_rates(ch, &[0.6, 0.75, 0.9]) {
        Ok(r) => r,
        Err(e) => return SuiteReport::from_checks(Suite::Primal, vec![Check::failed("rates", &e)]),
    };
    let mut checks = Vec::new();
    for r in rates {
        let run = || -> Result<(f64, f64)> {
            let sp = sphere_packing_exponent(ch, r)?;
            let primal = primal_esp(ch, r, r, opts.seed)?;
            let dual = constrained_exponent(ch, r, r)?;
            Ok(((primal.value - sp.exponent).abs(), (dual.s - sp.rho).abs()))
        };
        match run() {
            Ok((gap, s_gap)) => {
                checks.push(Check::new(format!("R={r:.6} |primal - E_SP|"), gap, opts.tol(1e-6)));
                checks.push(Check::new(format!("R={r:.6} |s_R - rho_R|"), s_gap, opts.tol(1e-6)));
            }
            Err(e) => checks.push(Check::failed(format!("R={r:.6} primal"), &e)),
        }
    }
    SuiteReport::from_checks(Suite::Primal, checks)
}

fn meta(ch: &Channel) -> SuiteReport {
    if !is_symmetric(ch) || singular_xi(ch).is_none() {
        return SuiteReport::skipped(Suite::Meta, "the meta-converse route needs a symmetric singular channel");
    }
    let eps = 0.1;
    let consts = match theorem3_constant(ch, eps) {
        Ok(c) => c,
        Err(Error::Domain(msg)) => return SuiteReport::skipped(Suite::Meta, msg),
        Err(e) => return SuiteReport::from_checks(Suite::Meta, vec![Check::failed("constants", &e)]),
    };
    let mut checks = Vec::new();
    for n in [100u64, 400, 1600] {
        let rate = consts.recipe_rate(n);
        match minimax_beta(ch, eps, n, rate) {
            Ok(m) => {
                let t3 = theorem3_bound_unchecked(&consts, n).log_m_bound;
                checks.push(Check::new(format!("N={n} -ln beta - N R"), m.log_m_bound - n as f64 * rate, 0.0));
                checks.push(Check::new(format!("N={n} (theorem bound - 2K) - (-ln beta)"), t3 - 2.0 * consts.big_k - m.log_m_bound, 0.0));
            }
            Err(e) => checks.push(Check::failed(format!("N={n} minimax"), &e)),
        }
    }
    SuiteReport::from_checks(Suite::Meta, checks)
}

fn cgf(ch: &Channel, opts: VerifyOptions) -> SuiteReport {
    if !is_symmetric(ch) {
        return SuiteReport::skipped(Suite::Cgf, "asymmetric channel");
    }
    let mut checks = Vec::new();
    if singular_xi(ch).is_some() {
        match cgf_profile(ch, None, 0) {
            Ok(prof) => {
                let u = simplex::uniform(ch.num_inputs());
                let worst = (0..=200).map(|i| {
                    let l = i as f64 * 0.05;
                    (prof.point(l).value + gallager_eo(ch, l, &u)).abs()
                });
                checks.push(Check::new("max |Lambda + E_o(lambda,U)| on [0,10]", worst.fold(0.0, f64::max), opts.tol(1e-12)));
            }
            Err(e) => checks.push(Check::failed("profile", &e)),
        }
    } else {
        let rates = match interior_rates(ch, &[0.5, 0.75]) {
            Ok(r) => r,
            Err(e) => return SuiteReport::from_checks(Suite::Cgf, vec![Check::failed("rates", &e)]),
        };
        for r in rates {
            match cgf_profile(ch, Some(r), 0) {
                Ok(prof) => {
                    let h = 1e-5;
                    let (mut first, mut second) = (0.0f64, 0.0f64);
                    for i in 1..20 {
                        let l = i as f64 * 0.05;
                        let p = prof.point(l);
                        let (lo, hi) = (prof.point(l - h), prof.point(l + h));
                        first = first.max(((hi.value - lo.value) / (2.0 * h) - p.first).abs());
                        second = second.max(((hi.first - lo.first) / (2.0 * h) - p.second).abs());
                    }
                    checks.push(Check::new(format!("R={r:.6} Lambda(0)"), prof.point(0.0).value.abs(), opts.tol(1e-14)));
                    checks.push(Check::new(format!("R={r:.6} Lambda' vs differences"), first, opts.tol(1e-7)));
                    checks.push(Check::new(format!("R={r:.6} Lambda'' vs differences"), second, opts.tol(1e-7)));
                }
                Err(e) => checks.push(Check::failed(format!("R={r:.6} profile"), &e)),
            }
        }
    }
    SuiteReport::from_checks(Suite::Cgf, checks)
}

pub fn run_suite(ch: &Channel, suite: Suite, opts: VerifyOptions) -> SuiteReport {
    match suite {
        Suite::Saddle => saddle(ch, opts),
        Suite::Lemma1 => lemma1(ch),
        Suite::Lemma2 => lemma2(ch),
        Suite::Primal => primal(ch, opts),
        Suite::Meta => meta(ch),
        Suite::Cgf => cgf(ch, opts),
    }
}

use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use fbconverse::exponents::exponent_profile;
use fbconverse::exponents::RateRegime;
use fbconverse::measures::{capacity, dispersion_report, kappa_bound};
use fbconverse::normal_approx::{theorem3_bound_unchecked, theorem3_constant, theorem4_constants, Theorem3Constants, Theorem4Constants, Theorem4Options};
use fbconverse::prefactor::{prefactor_order, BoundEvaluation, ConverseOptions, NonsingularConverse, SingularConverse};
use fbconverse::verify::{run_suite, Suite, SuiteStatus, VerifyOptions};
use fbconverse::{classify, parse_channel, Channel, Error};

const EXIT_VERIFY: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_DOMAIN: u8 = 3;

#[derive(Parser)]
#[command(name = "fbconverse", version, about = "Finite-blocklength converse bounds for discrete memoryless channels")]
struct Cli {
    /// Tolerance for the equality checks of `verify`.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Seed for sampling-based routines.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Display information quantities in bits instead of nats.
    #[arg(long, global = true)]
    bits: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Table,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    /// Sphere-packing converse with exact pre-factor.
    Sp,
    /// Third-order normal-approximation converse.
    Na,
}

#[derive(Subcommand)]
enum Command {
    /// Symmetry, singularity and strong symmetry of a channel.
    Classify { file: PathBuf },
    /// Capacity, dispersions and moments at an input law.
    Measures {
        file: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Comma-separated input law; defaults to a capacity achiever.
        #[arg(long, value_delimiter = ',')]
        input: Option<Vec<f64>>,
    },
    /// Error exponents at one rate.
    Exponents {
        file: PathBuf,
        #[arg(long)]
        rate: f64,
    },
    /// Converse bound over a blocklength sweep, one row per N.
    Bound {
        file: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        /// Blocklengths as `start:stop:step`.
        #[arg(long = "N")]
        n: Sweep,
        /// Concentration parameter `a`.
        #[arg(long)]
        a: Option<f64>,
        /// Constant `k1` (nonsingular) or `k` (singular).
        #[arg(long)]
        k: Option<f64>,
    },
    /// Oracle verification suites.
    Verify {
        file: PathBuf,
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Sweep {
    start: u64,
    stop: u64,
    step: u64,
}

impl FromStr for Sweep {
    type Err = String;

    /// Accepts `start:stop:step` or a single blocklength.
    fn from_str(s: &str) -> Result<Self, String> {
        let nums: Vec<u64> = s
            .split(':')
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| format!("bad blocklength in '{s}': {e}"))?;
        let (start, stop, step) = match nums[..] {
            [n] => (n, n, 1),
            [a, b, c] => (a, b, c),
            _ => return Err(format!("expected start:stop:step, got '{s}'")),
        };
        if step == 0 || start == 0 || start > stop {
            return Err(format!("need 0 < start <= stop and step > 0, got '{s}'"));
        }
        Ok(Sweep { start, stop, step })
    }
}

impl Sweep {
    fn values(&self) -> Vec<u64> {
        (self.start..=self.stop).step_by(self.step as usize).collect()
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. } | Error::InvalidInput(_) => EXIT_INPUT,
            _ => EXIT_DOMAIN,
        };
        Failure { code, message: e.to_string() }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_INPUT, message: message.into() }
}

fn load(path: &Path) -> Result<Channel, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    parse_channel(&text).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn fmt_vec(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "))
}

struct Ctx {
    format: Format,
    bits: bool,
}

impl Ctx {
    /// Converts an information quantity for display.
    fn info(&self, nats: f64) -> f64 {
        if self.bits {
            nats / std::f64::consts::LN_2
        } else {
            nats
        }
    }

    fn unit(&self) -> &'static str {
        if self.bits {
            "bits"
        } else {
            "nats"
        }
    }
}

/// Writes `rows` as CSV with a header, or as an aligned table.
fn emit_table(ctx: &Ctx, header: &[&str], rows: &[Vec<String>]) -> Result<(), Failure> {
    let out = std::io::stdout();
    let mut lock = out.lock();
    let io = |e: std::io::Error| Failure { code: EXIT_INPUT, message: e.to_string() };
    match ctx.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut lock);
            let csv_err = |e: csv::Error| Failure { code: EXIT_INPUT, message: e.to_string() };
            w.write_record(header).map_err(csv_err)?;
            for r in rows {
                w.write_record(r).map_err(csv_err)?;
            }
            w.flush().map_err(io)?;
        }
        Format::Table => {
            let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
            for r in rows {
                for (w, c) in widths.iter_mut().zip(r) {
                    *w = (*w).max(c.len());
                }
            }
            let line = |cells: Vec<&str>| cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ");
            writeln!(lock, "{}", line(header.to_vec())).map_err(io)?;
            for r in rows {
                writeln!(lock, "{}", line(r.iter().map(String::as_str).collect())).map_err(io)?;
            }
        }
    }
    Ok(())
}

fn emit_pairs(ctx: &Ctx, pairs: Vec<(String, String)>) -> Result<(), Failure> {
    let rows: Vec<Vec<String>> = pairs.into_iter().map(|(k, v)| vec![k, v]).collect();
    emit_table(ctx, &["key", "value"], &rows)
}

fn pair(k: &str, v: impl Display) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn cmd_classify(ctx: &Ctx, file: &Path) -> Result<(), Failure> {
    let ch = load(file)?;
    let c = classify(&ch);
    let mut summary = format!(
        "{}, {}",
        if c.symmetric { "symmetric" } else { "asymmetric" },
        if c.singular { "singular" } else { "nonsingular" }
    );
    if let Some(cert) = &c.certificate {
        let blocks: Vec<String> = cert
            .partition
            .iter()
            .map(|b| format!("{{{}}}", b.iter().map(|y| y.to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        summary.push_str(&format!("; partition {{{}}}", blocks.join(",")));
    }
    let mut pairs = vec![
        pair("channel", ch.name()),
        pair("summary", summary),
        pair("symmetric", c.symmetric),
        pair("singular", c.singular),
        pair("strongly_symmetric", c.strongly_symmetric),
    ];
    if let Some(cert) = &c.certificate {
        pairs.push(pair("certificate_verified", cert.verified));
    }
    if let Some(xi) = &c.xi {
        pairs.push(pair("xi", fmt_vec(xi)));
    }
    if let Some(alpha) = &c.alpha {
        pairs.push(pair("alpha", fmt_vec(alpha)));
    }
    emit_pairs(ctx, pairs)
}

fn cmd_measures(ctx: &Ctx, file: &Path, eps: f64, input: Option<Vec<f64>>) -> Result<(), Failure> {
    let ch = load(file)?;
    let cap = capacity(&ch)?;
    let p = input.unwrap_or_else(|| cap.achiever.clone());
    let r = dispersion_report(&ch, &p, eps)?;
    let u = ctx.unit();
    let sq = if ctx.bits { std::f64::consts::LN_2.powi(2) } else { 1.0 };
    let cube = if ctx.bits { std::f64::consts::LN_2.powi(3) } else { 1.0 };
    emit_pairs(
        ctx,
        vec![
            pair("channel", ch.name()),
            pair("unit", u),
            pair("capacity", ctx.info(r.capacity)),
            pair("capacity_achiever", fmt_vec(&cap.achiever)),
            pair("capacity_achiever_unique", r.capacity_achieving_unique),
            pair("input", fmt_vec(&p)),
            pair("mutual_information", ctx.info(r.mutual_information)),
            pair("dispersion", r.dispersion / sq),
            pair("unconditional_dispersion", r.unconditional_dispersion / sq),
            pair("reverse_dispersion", r.reverse_dispersion / sq),
            pair("third_moment", r.third_moment / cube),
            pair("eps", eps),
            pair("eps_dispersion", r.eps_dispersion / sq),
            pair("kappa", kappa_bound(&ch)),
        ],
    )
}

fn cmd_exponents(ctx: &Ctx, file: &Path, rate: f64) -> Result<(), Failure> {
    let ch = load(file)?;
    let p = exponent_profile(&ch, rate)?;
    if p.regime != RateRegime::Interior {
        return Err(Error::Domain(format!(
            "rate {rate} is outside (R_inf, C) = ({}, {})",
            p.r_inf.value, p.capacity
        ))
        .into());
    }
    let order = prefactor_order(&ch)?.at(rate)?;
    emit_pairs(
        ctx,
        vec![
            pair("channel", ch.name()),
            pair("unit", ctx.unit()),
            pair("rate", ctx.info(rate)),
            pair("capacity", ctx.info(p.capacity)),
            pair("E_sp", ctx.info(p.e_sp)),
            pair("E_r", ctx.info(p.e_r)),
            pair("rho_R", p.rho_r),
            pair("q_R", fmt_vec(&p.q_r)),
            pair("R_cr", ctx.info(p.r_cr)),
            pair("R_inf", ctx.info(p.r_inf.value)),
            pair("prefactor_order", order),
        ],
    )
}

struct Row {
    n: u64,
    x: f64,
    exponent: f64,
    prefactor_log: Option<f64>,
    log_bound: Option<f64>,
    valid: bool,
    n_min: u64,
}

enum SpConverse {
    Nonsingular(NonsingularConverse),
    Singular(SingularConverse),
}

impl SpConverse {
    fn exponent(&self) -> f64 {
        match self {
            SpConverse::Nonsingular(c) => c.geometry.e_sp,
            SpConverse::Singular(c) => c.e_sp,
        }
    }

    fn n_min(&self) -> u64 {
        match self {
            SpConverse::Nonsingular(c) => c.n_min,
            SpConverse::Singular(c) => c.n_min,
        }
    }

    fn evaluate(&self, n: u64) -> fbconverse::Result<BoundEvaluation> {
        match self {
            SpConverse::Nonsingular(c) => c.evaluate(n),
            SpConverse::Singular(c) => c.evaluate(n),
        }
    }
}

enum NaConverse {
    Symmetric(Theorem3Constants),
    Asymmetric(Theorem4Constants),
}

fn sp_rows(ch: &Channel, rate: f64, sweep: Sweep, opts: ConverseOptions) -> Result<Vec<Row>, Failure> {
    let conv = if classify(ch).singular {
        SpConverse::Singular(SingularConverse::new(ch, rate, opts)?)
    } else {
        SpConverse::Nonsingular(NonsingularConverse::new(ch, rate, opts)?)
    };
    let rows: Vec<fbconverse::Result<Row>> = sweep
        .values()
        .into_par_iter()
        .map(|n| {
            let (prefactor_log, log_bound, valid) = if n >= conv.n_min() {
                let e = conv.evaluate(n)?;
                (Some(e.prefactor_log), Some(e.log_value), true)
            } else {
                (None, None, false)
            };
            Ok(Row { n, x: rate, exponent: conv.exponent(), prefactor_log, log_bound, valid, n_min: conv.n_min() })
        })
        .collect();
    rows.into_iter().map(|r| r.map_err(Failure::from)).collect()
}

fn na_rows(ch: &Channel, eps: f64, sweep: Sweep, a: Option<f64>, seed: u64) -> Result<Vec<Row>, Failure> {
    let conv = if classify(ch).symmetric {
        NaConverse::Symmetric(theorem3_constant(ch, eps)?)
    } else {
        NaConverse::Asymmetric(theorem4_constants(ch, eps, Theorem4Options { a, seed })?)
    };
    Ok(sweep
        .values()
        .into_par_iter()
        .map(|n| {
            let (capacity, third, bound, n_min) = match &conv {
                NaConverse::Symmetric(c) => (c.capacity, c.big_k, theorem3_bound_unchecked(c, n).log_m_bound, c.n_o),
                NaConverse::Asymmetric(c) => (c.capacity, c.third_order, c.second_order(n) + c.third_order, c.n_min()),
            };
            let valid = n >= n_min;
            Row {
                n,
                x: eps,
                exponent: capacity,
                prefactor_log: valid.then_some(third),
                log_bound: valid.then_some(bound),
                valid,
                n_min,
            }
        })
        .collect())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bound(
    ctx: &Ctx,
    file: &Path,
    kind: Kind,
    rate: Option<f64>,
    eps: Option<f64>,
    sweep: Sweep,
    a: Option<f64>,
    k: Option<f64>,
    seed: u64,
) -> Result<(), Failure> {
    let ch = load(file)?;
    let (rows, rate_is_info) = match kind {
        Kind::Sp => {
            let rate = rate.ok_or_else(|| input_error("--kind sp needs --rate"))?;
            let opts = ConverseOptions { a: a.unwrap_or(ConverseOptions::default().a), k };
            (sp_rows(&ch, rate, sweep, opts)?, true)
        }
        Kind::Na => {
            let eps = eps.ok_or_else(|| input_error("--kind na needs --eps"))?;
            (na_rows(&ch, eps, sweep, a, seed)?, false)
        }
    };
    let opt = |v: Option<f64>| v.map(|x| ctx.info(x).to_string()).unwrap_or_default();
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                if rate_is_info { ctx.info(r.x) } else { r.x }.to_string(),
                ctx.info(r.exponent).to_string(),
                opt(r.prefactor_log),
                opt(r.log_bound),
                r.valid.to_string(),
                r.n_min.to_string(),
            ]
        })
        .collect();
    emit_table(ctx, &["N", "rate_or_eps", "exponent", "prefactor_log", "log_bound", "valid", "n_min"], &table)
}

fn cmd_verify(file: &Path, suite: &str, opts: VerifyOptions) -> Result<(), Failure> {
    let ch = load(file)?;
    let suites: Vec<Suite> = if suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![suite.parse::<Suite>().map_err(|e| input_error(e.to_string()))?]
    };
    let reports: Vec<_> = suites.par_iter().map(|&s| run_suite(&ch, s, opts)).collect();
    let mut failed = false;
    for rep in reports {
        let residual = rep.max_residual().map(|r| format!(" (max residual {r:e})")).unwrap_or_default();
        match &rep.status {
            SuiteStatus::Pass => println!("{}: pass{residual}", rep.suite),
            SuiteStatus::Fail => {
                failed = true;
                println!("{}: FAIL{residual}", rep.suite)
            }
            SuiteStatus::Skipped(note) => println!("{}: skipped ({note})", rep.suite),
        }
        for c in &rep.checks {
            println!("  [{}] {}: residual {:e}, tolerance {:e}", if c.pass { "ok" } else { "FAIL" }, c.label, c.residual, c.tolerance);
        }
    }
    if failed {
        return Err(Failure { code: EXIT_VERIFY, message: "verification failed".into() });
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let ctx = Ctx { format: cli.format, bits: cli.bits };
    match cli.command {
        Command::Classify { file } => cmd_classify(&ctx, &file),
        Command::Measures { file, eps, input } => cmd_measures(&ctx, &file, eps, input),
        Command::Exponents { file, rate } => cmd_exponents(&ctx, &file, rate),
        Command::Bound { file, kind, rate, eps, n, a, k } => cmd_bound(&ctx, &file, kind, rate, eps, n, a, k, cli.seed),
        Command::Verify { file, suite } => cmd_verify(&file, &suite, VerifyOptions { tol: cli.tol, seed: cli.seed }),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

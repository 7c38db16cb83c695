//! Channel matrices: parsing, validation and the text format.
//!
//! A channel file looks like
//!
//! ```text
//! # binary erasure channel
//! channel bec05
//! inputs 2
//! outputs 3
//! row 1/2 0 1/2
//! row 0 1/2 1/2
//! ```
//!
//! Entries are either exact rationals (`a/b` or a bare integer) or decimals.

use std::fmt;

use num_rational::Ratio;
use num_traits::CheckedAdd;

use crate::error::{Error, Result};

/// Tolerance used for every comparison that involves a decimal entry.
pub const DECIMAL_TOL: f64 = 1e-12;

/// A single transition probability as it was written in the source.
#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    Exact(Ratio<i128>),
    Decimal { value: f64, text: String },
}

impl Entry {
    pub fn value(&self) -> f64 {
        match self {
            Entry::Exact(r) => *r.numer() as f64 / *r.denom() as f64,
            Entry::Decimal { value, .. } => *value,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Entry::Exact(r) => *r.numer() == 0,
            Entry::Decimal { value, .. } => *value == 0.0,
        }
    }

    /// Equality predicate: exact on two rationals, `DECIMAL_TOL` otherwise.
    pub fn same_as(&self, other: &Entry) -> bool {
        match (self, other) {
            (Entry::Exact(a), Entry::Exact(b)) => a == b,
            _ => (self.value() - other.value()).abs() <= DECIMAL_TOL,
        }
    }

    fn parse(tok: &str, line: usize) -> Result<Entry> {
        if let Some((a, b)) = tok.split_once('/') {
            let num: i128 = a
                .trim()
                .parse()
                .map_err(|_| Error::parse(line, format!("bad rational numerator in '{tok}'")))?;
            let den: i128 = b
                .trim()
                .parse()
                .map_err(|_| Error::parse(line, format!("bad rational denominator in '{tok}'")))?;
            if den == 0 {
                return Err(Error::parse(line, format!("zero denominator in '{tok}'")));
            }
            let r = Ratio::new(num, den);
            if r < Ratio::from_integer(0) {
                return Err(Error::parse(line, format!("negative entry '{tok}'")));
            }
            return Ok(Entry::Exact(r));
        }
        if tok.bytes().all(|c| c.is_ascii_digit() || c == b'-' || c == b'+') {
            if let Ok(n) = tok.parse::<i128>() {
                if n < 0 {
                    return Err(Error::parse(line, format!("negative entry '{tok}'")));
                }
                return Ok(Entry::Exact(Ratio::from_integer(n)));
            }
        }
        let value: f64 = tok
            .parse()
            .map_err(|_| Error::parse(line, format!("cannot parse entry '{tok}'")))?;
        if !value.is_finite() {
            return Err(Error::parse(line, format!("non-finite entry '{tok}'")));
        }
        if value < 0.0 {
            return Err(Error::parse(line, format!("negative entry '{tok}'")));
        }
        Ok(Entry::Decimal { value, text: tok.to_string() })
    }
}

impl fmt::Display for Entry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entry::Exact(r) if *r.denom() == 1 => write!(f, "{}", r.numer()),
            Entry::Exact(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            Entry::Decimal { text, .. } => f.write_str(text),
        }
    }
}

/// A discrete memoryless channel `W(y|x)`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    name: String,
    num_inputs: usize,
    num_outputs: usize,
    entries: Vec<Entry>,
    w: Vec<f64>,
}

impl Channel {
    /// Builds a channel from source entries, running every load-time check.
    pub fn from_entries(name: &str, rows: Vec<Vec<Entry>>) -> Result<Channel> {
        let lines: Vec<usize> = (1..=rows.len()).collect();
        Self::build(name.to_string(), rows, &lines, 0)
    }

    /// Builds a channel from a floating-point matrix (entries become decimals).
    pub fn from_matrix(name: &str, rows: &[Vec<f64>]) -> Result<Channel> {
        let mut out = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let mut r = Vec::with_capacity(row.len());
            for &v in row {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::parse(i + 1, format!("invalid entry {v}")));
                }
                r.push(Entry::Decimal { value: v, text: format!("{v}") });
            }
            out.push(r);
        }
        Self::from_entries(name, out)
    }

    /// Binary symmetric channel with crossover probability `p`.
    pub fn bsc(p: f64) -> Result<Channel> {
        Self::from_matrix(&format!("bsc({p})"), &[vec![1.0 - p, p], vec![p, 1.0 - p]])
    }

    /// Binary erasure channel with erasure probability `d`; the erasure is output 2.
    pub fn bec(d: f64) -> Result<Channel> {
        Self::from_matrix(&format!("bec({d})"), &[vec![1.0 - d, 0.0, d], vec![0.0, 1.0 - d, d]])
    }

    /// Identity channel on `k` symbols.
    pub fn noiseless(k: usize) -> Result<Channel> {
        let rows = (0..k)
            .map(|x| {
                (0..k)
                    .map(|y| Entry::Exact(Ratio::from_integer(i128::from(x == y))))
                    .collect()
            })
            .collect();
        Self::from_entries(&format!("noiseless{k}"), rows)
    }

    fn build(name: String, rows: Vec<Vec<Entry>>, row_lines: &[usize], header_line: usize) -> Result<Channel> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::parse(header_line, "channel has no rows"));
        }
        let m = rows[0].len();
        if m == 0 {
            return Err(Error::parse(row_lines[0], "row has no entries"));
        }
        for (row, &line) in rows.iter().zip(row_lines) {
            if row.len() != m {
                return Err(Error::parse(line, format!("expected {m} entries, found {}", row.len())));
            }
            check_row_sum(row, line)?;
        }
        for y in 0..m {
            if rows.iter().all(|r| r[y].is_zero()) {
                let line = *row_lines.last().unwrap();
                return Err(Error::parse(line, format!("output column {y} is identically zero")));
            }
        }
        let entries: Vec<Entry> = rows.into_iter().flatten().collect();
        let w = entries.iter().map(Entry::value).collect();
        Ok(Channel { name, num_inputs: k, num_outputs: m, entries, w })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn num_outputs(&self) -> usize {
        self.num_outputs
    }

    /// Transition probability `W(y|x)`.
    #[inline]
    pub fn w(&self, x: usize, y: usize) -> f64 {
        self.w[x * self.num_outputs + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.w[x * self.num_outputs..(x + 1) * self.num_outputs]
    }

    pub fn entry(&self, x: usize, y: usize) -> &Entry {
        &self.entries[x * self.num_outputs + y]
    }

    pub fn column_entries(&self, y: usize) -> Vec<&Entry> {
        (0..self.num_inputs).map(|x| self.entry(x, y)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_inputs).map(|x| self.row(x).to_vec()).collect()
    }

    /// True when some transition probability is zero.
    pub fn has_zero_entry(&self) -> bool {
        self.entries.iter().any(Entry::is_zero)
    }

    /// Renders the channel in the text format accepted by [`parse_channel`].
    pub fn to_spec_string(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "channel {}", self.name)?;
        writeln!(f, "inputs {}", self.num_inputs)?;
        writeln!(f, "outputs {}", self.num_outputs)?;
        for x in 0..self.num_inputs {
            f.write_str("row")?;
            for y in 0..self.num_outputs {
                write!(f, " {}", self.entry(x, y))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn check_row_sum(row: &[Entry], line: usize) -> Result<()> {
    let exact: Option<Vec<Ratio<i128>>> = row
        .iter()
        .map(|e| match e {
            Entry::Exact(r) => Some(*r),
            Entry::Decimal { .. } => None,
        })
        .collect();
    match exact {
        Some(rs) => {
            let mut sum = Ratio::from_integer(0i128);
            for r in rs {
                sum = sum
                    .checked_add(&r)
                    .ok_or_else(|| Error::parse(line, "rational overflow in row sum"))?;
            }
            if sum != Ratio::from_integer(1) {
                return Err(Error::parse(line, format!("row sums to {sum}, expected 1")));
            }
        }
        None => {
            let sum: f64 = row.iter().map(Entry::value).sum();
            if (sum - 1.0).abs() > DECIMAL_TOL {
                return Err(Error::parse(line, format!("row sums to {sum}, expected 1")));
            }
        }
    }
    Ok(())
}

/// Parses a channel-spec document.
pub fn parse_channel(text: &str) -> Result<Channel> {
    let mut name: Option<String> = None;
    let mut inputs: Option<usize> = None;
    let mut outputs: Option<usize> = None;
    let mut rows: Vec<Vec<Entry>> = Vec::new();
    let mut row_lines: Vec<usize> = Vec::new();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let key = toks.next().unwrap();
        let rest: Vec<&str> = toks.collect();
        match key {
            "channel" => {
                if name.is_some() {
                    return Err(Error::parse(line, "duplicate 'channel' line"));
                }
                if rest.len() != 1 {
                    return Err(Error::parse(line, "expected 'channel <name>'"));
                }
                name = Some(rest[0].to_string());
            }
            "inputs" | "outputs" => {
                if !rows.is_empty() {
                    return Err(Error::parse(line, format!("'{key}' after the first row")));
                }
                let slot = if key == "inputs" { &mut inputs } else { &mut outputs };
                if slot.is_some() {
                    return Err(Error::parse(line, format!("duplicate '{key}' line")));
                }
                let n = match rest.as_slice() {
                    [v] => v.parse::<usize>().ok().filter(|&n| n > 0),
                    _ => None,
                };
                *slot = Some(n.ok_or_else(|| Error::parse(line, format!("expected '{key} <positive integer>'")))?);
            }
            "row" => {
                let (Some(_), Some(m)) = (inputs, outputs) else {
                    return Err(Error::parse(line, "'row' before 'inputs' and 'outputs'"));
                };
                if rest.len() != m {
                    return Err(Error::parse(line, format!("expected {m} entries, found {}", rest.len())));
                }
                let row = rest.iter().map(|t| Entry::parse(t, line)).collect::<Result<Vec<_>>>()?;
                rows.push(row);
                row_lines.push(line);
            }
            other => return Err(Error::parse(line, format!("unknown keyword '{other}'"))),
        }
    }

    let name = name.ok_or_else(|| Error::parse(last_line, "missing 'channel <name>' line"))?;
    let k = inputs.ok_or_else(|| Error::parse(last_line, "missing 'inputs' line"))?;
    if outputs.is_none() {
        return Err(Error::parse(last_line, "missing 'outputs' line"));
    }
    if rows.len() != k {
        return Err(Error::parse(last_line, format!("expected {k} rows, found {}", rows.len())));
    }
    Channel::build(name, rows, &row_lines, last_line)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAPER_3X4: &str = "channel paper3x4\ninputs 3\noutputs 4\nrow 2/3 1/6 0 1/6\nrow 0 0 5/6 1/6\nrow 0 1/6 5/6 0\n";

    #[test]
    fn parses_decimal_bsc() {
        let ch = parse_channel("# bsc\nchannel bsc01\ninputs 2\noutputs 2\nrow 0.9 0.1\nrow 0.1 0.9\n").unwrap();
        assert_eq!(ch.rows(), vec![vec![0.9, 0.1], vec![0.1, 0.9]]);
        assert_eq!(ch.name(), "bsc01");
    }

    #[test]
    fn rationals_are_exact() {
        let ch = parse_channel(PAPER_3X4).unwrap();
        assert_eq!(ch.entry(0, 0), &Entry::Exact(Ratio::new(2, 3)));
        assert_eq!(ch.entry(1, 2), &Entry::Exact(Ratio::new(5, 6)));
        assert!(ch.entry(0, 2).is_zero());
    }

    #[test]
    fn round_trip_is_identical() {
        let ch = parse_channel(PAPER_3X4).unwrap();
        let again = parse_channel(&ch.to_spec_string()).unwrap();
        assert_eq!(ch, again);
        assert_eq!(ch.to_spec_string(), again.to_spec_string());
    }

    #[test]
    fn row_sum_error_carries_line() {
        let err = parse_channel("channel bad\ninputs 2\noutputs 2\nrow 0.9 0.09\nrow 0.1 0.9\n").unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 4);
                assert!(msg.contains("row sums"));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn exact_row_sum_is_exact() {
        let err = parse_channel("channel bad\ninputs 1\noutputs 2\nrow 1/3 2/3\n");
        assert!(err.is_ok());
        let err = parse_channel("channel bad\ninputs 1\noutputs 2\nrow 1/3 333333333333/1000000000000\n");
        assert!(err.is_err());
    }

    #[test]
    fn negative_entry_rejected() {
        let err = parse_channel("channel bad\ninputs 1\noutputs 2\nrow 1.1 -0.1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, ref msg } if msg.contains("negative")));
    }

    #[test]
    fn zero_column_rejected() {
        let err = parse_channel("channel bad\ninputs 2\noutputs 3\nrow 1 0 0\nrow 0 1 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { ref msg, .. } if msg.contains("identically zero")));
    }

    #[test]
    fn malformed_lines_rejected() {
        for text in [
            "channel a\ninputs 2\noutputs 2\nrow 1 0\n",
            "channel a\ninputs x\noutputs 2\nrow 1 0\n",
            "channel a\ninputs 1\noutputs 2\nrow 1\n",
            "channel a\ninputs 1\noutputs 2\nrow 1 0\nfoo\n",
            "inputs 1\noutputs 2\nrow 1 0\n",
            "channel a\ninputs 1\noutputs 2\nrow 1/0 0\n",
        ] {
            assert!(matches!(parse_channel(text), Err(Error::Parse { .. })), "{text}");
        }
    }

    #[test]
    fn builtins_are_valid() {
        assert_eq!(Channel::bec(0.5).unwrap().num_outputs(), 3);
        assert_eq!(Channel::bsc(0.1).unwrap().w(0, 1), 0.1);
        assert!(Channel::noiseless(3).unwrap().has_zero_entry());
    }
}

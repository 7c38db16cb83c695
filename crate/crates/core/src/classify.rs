//! Gallager symmetry, singularity and strong symmetry.

use crate::channel::{Channel, Entry};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryCertificate {
    pub partition: Vec<Vec<usize>>,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelClassification {
    pub symmetric: bool,
    pub certificate: Option<SymmetryCertificate>,
    pub singular: bool,
    pub strongly_symmetric: bool,
    /// Common positive value of each column, when singular.
    pub xi: Option<Vec<f64>>,
    /// `alpha_y` under the uniform input, when singular.
    pub alpha: Option<Vec<f64>>,
}

fn sorted_by_value<'a>(mut v: Vec<&'a Entry>) -> Vec<&'a Entry> {
    v.sort_by(|a, b| a.value().total_cmp(&b.value()));
    v
}

fn same_multiset(a: &[&Entry], b: &[&Entry]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.same_as(y))
}

fn rows_permuted(ch: &Channel, block: &[usize]) -> bool {
    let first = sorted_by_value(block.iter().map(|&y| ch.entry(0, y)).collect());
    (1..ch.num_inputs()).all(|x| {
        let row = sorted_by_value(block.iter().map(|&y| ch.entry(x, y)).collect());
        same_multiset(&first, &row)
    })
}

fn columns_permuted(ch: &Channel, block: &[usize]) -> bool {
    let first = sorted_by_value(ch.column_entries(block[0]));
    block[1..]
        .iter()
        .all(|&y| same_multiset(&first, &sorted_by_value(ch.column_entries(y))))
}

fn valid_block(ch: &Channel, block: &[usize]) -> bool {
    !block.is_empty() && rows_permuted(ch, block) && columns_permuted(ch, block)
}

/// Checks a proposed output partition against the definition directly.
pub fn verify_certificate(ch: &Channel, partition: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; ch.num_outputs()];
    for block in partition {
        for &y in block {
            if y >= seen.len() || seen[y] {
                return false;
            }
            seen[y] = true;
        }
    }
    seen.iter().all(|&s| s) && partition.iter().all(|b| valid_block(ch, b))
}

/// Groups columns whose sorted entries coincide.
fn column_groups(ch: &Channel) -> Vec<Vec<usize>> {
    let sorted: Vec<Vec<&Entry>> = (0..ch.num_outputs())
        .map(|y| sorted_by_value(ch.column_entries(y)))
        .collect();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for y in 0..ch.num_outputs() {
        match groups.iter_mut().find(|g| same_multiset(&sorted[g[0]], &sorted[y])) {
            Some(g) => g.push(y),
            None => groups.push(vec![y]),
        }
    }
    groups
}

/// Decides Gallager symmetry. Returns the certificate, or `None` when asymmetric.
///
/// Any valid block lies inside one sorted-column group, and a union of
/// row-permuted blocks is row-permuted, so a group admits a valid partition
/// exactly when the whole group is a valid block.
pub fn find_symmetry(ch: &Channel) -> Option<SymmetryCertificate> {
    let mut partition = column_groups(ch);
    if !partition.iter().all(|g| rows_permuted(ch, g)) {
        return None;
    }
    partition.sort();
    let verified = verify_certificate(ch, &partition);
    Some(SymmetryCertificate { partition, verified })
}

/// Common positive value of every column, if the channel is singular.
pub fn singular_xi(ch: &Channel) -> Option<Vec<f64>> {
    (0..ch.num_outputs())
        .map(|y| {
            let positive: Vec<&Entry> = ch.column_entries(y).into_iter().filter(|e| !e.is_zero()).collect();
            let first = positive[0];
            positive.iter().all(|e| e.same_as(first)).then(|| first.value())
        })
        .collect()
}

/// `alpha_y(P)`: input mass on the inputs that can produce `y`.
pub fn alpha(ch: &Channel, p: &[f64]) -> Vec<f64> {
    (0..ch.num_outputs())
        .map(|y| (0..ch.num_inputs()).filter(|&x| ch.w(x, y) > 0.0).map(|x| p[x]).sum())
        .collect()
}

pub fn is_symmetric(ch: &Channel) -> bool {
    find_symmetry(ch).is_some()
}

pub fn classify(ch: &Channel) -> ChannelClassification {
    let certificate = find_symmetry(ch);
    let all: Vec<usize> = (0..ch.num_outputs()).collect();
    let strongly_symmetric = valid_block(ch, &all);
    let xi = singular_xi(ch);
    let uniform = vec![1.0 / ch.num_inputs() as f64; ch.num_inputs()];
    let alpha = xi.as_ref().map(|_| alpha(ch, &uniform));
    ChannelClassification {
        symmetric: certificate.is_some(),
        certificate,
        singular: xi.is_some(),
        strongly_symmetric,
        xi,
        alpha,
    }
}

/// Whether the reverse dispersion vanishes for a full-support input.
pub fn reverse_dispersion_zero(ch: &Channel, p: &[f64]) -> Result<bool> {
    if p.len() != ch.num_inputs() || p.iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidInput("input distribution must have full support".into()));
    }
    Ok(crate::measures::reverse_dispersion(ch, p) <= 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::parse_channel;

    fn paper3x4() -> Channel {
        parse_channel("channel p\ninputs 3\noutputs 4\nrow 2/3 1/6 0 1/6\nrow 0 0 5/6 1/6\nrow 0 1/6 5/6 0\n").unwrap()
    }

    #[test]
    fn bsc_is_symmetric_nonsingular() {
        let c = classify(&Channel::bsc(0.1).unwrap());
        assert!(c.symmetric && !c.singular && c.strongly_symmetric);
        assert_eq!(c.certificate.unwrap().partition, vec![vec![0, 1]]);
    }

    #[test]
    fn bec_is_symmetric_singular() {
        let c = classify(&Channel::bec(0.5).unwrap());
        assert!(c.symmetric && c.singular && !c.strongly_symmetric);
        let cert = c.certificate.unwrap();
        assert_eq!(cert.partition, vec![vec![0, 1], vec![2]]);
        assert!(cert.verified);
        assert_eq!(c.xi.unwrap(), vec![0.5, 0.5, 0.5]);
        assert_eq!(c.alpha.unwrap(), vec![0.5, 0.5, 1.0]);
    }

    #[test]
    fn paper_channel_is_asymmetric_singular() {
        let c = classify(&paper3x4());
        assert!(!c.symmetric && c.singular && !c.strongly_symmetric);
        assert!(c.certificate.is_none());
    }

    /// Brute-force oracle: search every set partition of the outputs.
    fn brute_force_symmetric(ch: &Channel) -> bool {
        fn search(ch: &Channel, rest: &[usize]) -> bool {
            let Some((&head, tail)) = rest.split_first() else {
                return true;
            };
            (0u32..(1 << tail.len())).any(|mask| {
                let mut block = vec![head];
                let mut remaining = Vec::new();
                for (i, &y) in tail.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        block.push(y);
                    } else {
                        remaining.push(y);
                    }
                }
                valid_block(ch, &block) && search(ch, &remaining)
            })
        }
        let all: Vec<usize> = (0..ch.num_outputs()).collect();
        search(ch, &all)
    }

    #[test]
    fn grouping_agrees_with_partition_search() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let levels = [0.0, 1.0, 2.0, 3.0];
        let mut symmetric_seen = 0;
        for _ in 0..3000 {
            let k = rng.random_range(2..=3);
            let m = rng.random_range(2..=6);
            // Random small-integer rows, often built from permutations of one row.
            let base: Vec<f64> = (0..m).map(|_| levels[rng.random_range(0..4)]).collect();
            let mut rows = Vec::new();
            for _ in 0..k {
                let mut r = base.clone();
                if rng.random_bool(0.7) {
                    for i in (1..m).rev() {
                        r.swap(i, rng.random_range(0..=i));
                    }
                } else {
                    r = (0..m).map(|_| levels[rng.random_range(0..4)]).collect();
                }
                rows.push(r);
            }
            let rows: Vec<Vec<f64>> = rows
                .into_iter()
                .map(|r| {
                    let s: f64 = r.iter().sum();
                    if s == 0.0 { vec![1.0 / m as f64; m] } else { r.iter().map(|v| v / s).collect() }
                })
                .collect();
            let Ok(ch) = Channel::from_matrix("r", &rows) else { continue };
            let fast = is_symmetric(&ch);
            assert_eq!(fast, brute_force_symmetric(&ch), "{rows:?}");
            symmetric_seen += usize::from(fast);
        }
        assert!(symmetric_seen > 50);
    }

    #[test]
    fn large_unbalanced_group_is_asymmetric() {
        // Eleven columns share the profile {0, 0.1}; six are active on row 0, five on row 1.
        let mut r0 = vec![0.0; 12];
        let mut r1 = vec![0.0; 12];
        for y in 0..11 {
            if y < 6 {
                r0[y] = 0.1;
            } else {
                r1[y] = 0.1;
            }
        }
        r0[11] = 0.4;
        r1[11] = 0.5;
        let ch = Channel::from_matrix("big", &[r0, r1]).unwrap();
        assert!(!is_symmetric(&ch));
    }

    #[test]
    fn group_with_zeros_is_one_block() {
        let ch = Channel::from_matrix("z", &[vec![0.5, 0.0, 0.5, 0.0], vec![0.0, 0.5, 0.0, 0.5]]).unwrap();
        let cert = find_symmetry(&ch).unwrap();
        assert_eq!(cert.partition, vec![vec![0, 1, 2, 3]]);
        assert!(cert.verified);
    }

    #[test]
    fn reverse_dispersion_flags() {
        let u = [0.5, 0.5];
        assert!(reverse_dispersion_zero(&Channel::bec(0.5).unwrap(), &u).unwrap());
        assert!(!reverse_dispersion_zero(&Channel::bsc(0.1).unwrap(), &u).unwrap());
        assert!(reverse_dispersion_zero(&Channel::noiseless(2).unwrap(), &u).unwrap());
        assert!(reverse_dispersion_zero(&Channel::bsc(0.1).unwrap(), &[1.0, 0.0]).is_err());
    }

    #[test]
    fn singular_output_law_factorizes() {
        for ch in [paper3x4(), Channel::bec(0.3).unwrap()] {
            let xi = singular_xi(&ch).unwrap();
            let u = vec![1.0 / ch.num_inputs() as f64; ch.num_inputs()];
            let a = alpha(&ch, &u);
            for y in 0..ch.num_outputs() {
                let q: f64 = (0..ch.num_inputs()).map(|x| u[x] * ch.w(x, y)).sum();
                assert!((q - xi[y] * a[y]).abs() < 1e-14);
            }
        }
    }
}

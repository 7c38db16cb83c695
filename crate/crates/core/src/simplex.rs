//! Small helpers on the probability simplex.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

pub fn uniform(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

pub fn point_mass(k: usize, i: usize) -> Vec<f64> {
    let mut p = vec![0.0; k];
    p[i] = 1.0;
    p
}

/// Uniform sample from the simplex (flat Dirichlet).
pub fn sample<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Uniformly distributed unit vector in the sum-zero hyperplane.
pub fn tangent_direction<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    loop {
        let mut g: Vec<f64> = (0..k).map(|_| StandardNormal.sample(rng)).collect();
        let mean = g.iter().sum::<f64>() / k as f64;
        g.iter_mut().for_each(|v| *v -= mean);
        let n = norm2(&g);
        if n > 1e-12 {
            g.iter_mut().for_each(|v| *v /= n);
            return g;
        }
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Euclidean projection onto the probability simplex.
pub fn project(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// True when `p` is a probability vector up to `tol`.
pub fn is_distribution(p: &[f64], tol: f64) -> bool {
    !p.is_empty() && p.iter().all(|&v| v >= -tol && v.is_finite()) && (p.iter().sum::<f64>() - 1.0).abs() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn projection_properties() {
        assert_eq!(project(&[0.2, 0.8]), vec![0.2, 0.8]);
        let p = project(&[2.0, 0.0, -1.0]);
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        let p = project(&[0.5, 0.5, 0.5]);
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn samples_are_distributions() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for k in 1..6 {
            assert!(is_distribution(&sample(&mut rng, k), 1e-12));
            if k > 1 {
                let d = tangent_direction(&mut rng, k);
                assert!(d.iter().sum::<f64>().abs() < 1e-12);
                assert!((norm2(&d) - 1.0).abs() < 1e-12);
            }
        }
    }
}

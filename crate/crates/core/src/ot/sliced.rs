//! Sliced W1 estimate for clouds too large for the exact solver.
//!
//! Each projection direction is uniform on the unit sphere; the 1-D W1 of
//! the projected clouds is averaged and divided by `E|θ₁|` so that the
//! estimate is exact for point-to-cloud and translated-cloud pairs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// `E|θ₁|` for `θ` uniform on the unit sphere in `dim` dimensions.
pub(crate) fn mean_abs_coordinate(dim: usize) -> f64 {
    // c₁ = 1, c₂ = 2/π, c_{d+2} = c_d · d / (d + 1).
    let (mut c, mut d) = if dim % 2 == 1 {
        (1.0, 1)
    } else {
        (2.0 / std::f64::consts::PI, 2)
    };
    while d < dim {
        c *= d as f64 / (d as f64 + 1.0);
        d += 2;
    }
    c
}

/// W1 between two uniform 1-D samples, both sorted ascending.
pub(crate) fn w1_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    // Walk the merged quantile breakpoints k/n and l/m with integer
    // arithmetic on the common denominator n·m.
    let (mut i, mut j) = (0usize, 0usize);
    let mut pos = 0usize; // current quantile × n·m
    let total = n * m;
    let mut acc = 0.0;
    while pos < total {
        let next_a = (i + 1) * m;
        let next_b = (j + 1) * n;
        let next = next_a.min(next_b);
        acc += (next - pos) as f64 * (a[i] - b[j]).abs();
        pos = next;
        if next == next_a {
            i += 1;
        }
        if next == next_b {
            j += 1;
        }
    }
    acc / total as f64
}

pub(crate) fn sliced_w1(a: &[&[f32]], b: &[&[f32]], projections: usize, seed: u64) -> f64 {
    let dim = a[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let projections = projections.max(1);
    let mut pa = vec![0.0f64; a.len()];
    let mut pb = vec![0.0f64; b.len()];
    let mut acc = 0.0;
    for _ in 0..projections {
        let mut dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            dir.iter_mut().for_each(|x| *x /= norm);
        }
        let project = |p: &[f32]| p.iter().zip(&dir).map(|(&x, d)| x as f64 * d).sum::<f64>();
        for (out, p) in pa.iter_mut().zip(a) {
            *out = project(p);
        }
        for (out, p) in pb.iter_mut().zip(b) {
            *out = project(p);
        }
        pa.sort_by(f64::total_cmp);
        pb.sort_by(f64::total_cmp);
        acc += w1_sorted(&pa, &pb);
    }
    acc / projections as f64 / mean_abs_coordinate(dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_constants() {
        assert_eq!(mean_abs_coordinate(1), 1.0);
        assert!((mean_abs_coordinate(2) - 2.0 / std::f64::consts::PI).abs() < 1e-15);
        assert!((mean_abs_coordinate(3) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn one_dimensional_w1() {
        assert!((w1_sorted(&[0.0, 2.0], &[1.0, 3.0]) - 1.0).abs() < 1e-15);
        assert!((w1_sorted(&[0.0, 1.0], &[0.0, 0.5, 1.0]) - 1.0 / 6.0).abs() < 1e-15);
        assert!((w1_sorted(&[0.0], &[1.0, 3.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn deterministic_per_seed() {
        let a: Vec<&[f32]> = vec![&[0.0, 1.0], &[2.0, 0.5]];
        let b: Vec<&[f32]> = vec![&[1.0, 1.0]];
        assert_eq!(sliced_w1(&a, &b, 64, 7), sliced_w1(&a, &b, 64, 7));
    }
}

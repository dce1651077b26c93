//! Two-component PCA for embedding exports.
//!
//! Deterministic power iteration with deflation on the covariance matrix:
//! fixed internal seed, 200 iterations, tolerance 1e-10, component sign
//! fixed so each component's largest-magnitude entry is positive.

use crate::rng::Rng;

const MAX_ITERS: usize = 200;
const TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Pca2d {
    /// Row i of the input projected onto the two components.
    pub coords: Vec<[f64; 2]>,
    pub components: [Vec<f64>; 2],
    pub eigenvalues: [f64; 2],
    /// True when the input had (near-)zero variance; coordinates are all 0.
    pub degenerate: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Subtracts the projections of `v` onto each (unit) vector in `basis`.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        for (x, y) in v.iter_mut().zip(b) {
            *x -= c * y;
        }
    }
}

/// Deterministic unit vector orthogonal to `basis` (used when the deflated
/// matrix has no mass left, e.g. rank-1 input).
fn fallback_direction(h: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    for j in 0..h {
        let mut v = vec![0.0; h];
        v[j] = 1.0;
        orthogonalize(&mut v, basis);
        let n = norm(&v);
        if n > 1e-6 {
            for x in &mut v {
                *x /= n;
            }
            return v;
        }
    }
    let mut v = vec![0.0; h];
    v[0] = 1.0;
    v
}

fn matvec(c: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    c.iter().map(|row| dot(row, v)).collect()
}

/// Largest-eigenvalue direction of symmetric `c`, kept orthogonal to `basis`.
fn power_iterate(c: &[Vec<f64>], basis: &[Vec<f64>], rng: &mut Rng) -> Vec<f64> {
    let h = c.len();
    let mut v: Vec<f64> = (0..h).map(|_| rng.next_normal()).collect();
    orthogonalize(&mut v, basis);
    let n = norm(&v);
    if n < 1e-9 {
        return fallback_direction(h, basis);
    }
    for x in &mut v {
        *x /= n;
    }

    for _ in 0..MAX_ITERS {
        let mut w = matvec(c, &v);
        orthogonalize(&mut w, basis);
        let n = norm(&w);
        if n < 1e-300 {
            return fallback_direction(h, basis);
        }
        for x in &mut w {
            *x /= n;
        }
        // Sign-agnostic convergence: the iterate may flip each step when the
        // dominant eigenvalue is negative in the deflated matrix.
        let mut dp = 0.0;
        let mut dm = 0.0;
        for (a, b) in w.iter().zip(&v) {
            dp += (a - b) * (a - b);
            dm += (a + b) * (a + b);
        }
        let delta = dp.min(dm).sqrt();
        v = w;
        if delta < TOL {
            break;
        }
    }
    v
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (j, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = j;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Projects `rows` (n x h, n >= 2) onto the top two principal components of
/// their covariance. Zero-variance input yields all-zero coordinates and the
/// `degenerate` flag instead of an error.
pub fn pca_2d(rows: &[Vec<f64>]) -> Pca2d {
    let n = rows.len();
    assert!(n >= 2, "pca_2d needs at least 2 rows, got {n}");
    let h = rows[0].len();
    assert!(h >= 1, "pca_2d needs at least 1 column");
    assert!(rows.iter().all(|r| r.len() == h), "ragged rows");

    let mut mean = vec![0.0; h];
    for row in rows {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|row| row.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();

    let mut cov = vec![vec![0.0; h]; h];
    for row in &centered {
        for j in 0..h {
            if row[j] == 0.0 {
                continue;
            }
            for k in 0..h {
                cov[j][k] += row[j] * row[k];
            }
        }
    }
    for row in &mut cov {
        for x in row.iter_mut() {
            *x /= n as f64;
        }
    }

    let scale = cov
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, x| acc.max(x.abs()));
    if scale < 1e-14 {
        let mut components = [vec![0.0; h], vec![0.0; h]];
        components[0][0] = 1.0;
        components[1][h.min(2) - 1] = 1.0;
        return Pca2d {
            coords: vec![[0.0, 0.0]; n],
            components,
            eigenvalues: [0.0, 0.0],
            degenerate: true,
        };
    }

    let mut rng = Rng::new(0x5ca1_ab1e);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(2);
    let mut eigenvalues = [0.0; 2];
    for eigenvalue in eigenvalues.iter_mut() {
        let mut v = power_iterate(&cov, &basis, &mut rng);
        fix_sign(&mut v);
        *eigenvalue = dot(&v, &matvec(&cov, &v));
        basis.push(v);
    }

    let coords: Vec<[f64; 2]> = centered
        .iter()
        .map(|row| [dot(row, &basis[0]), dot(row, &basis[1])])
        .collect();
    let mut it = basis.into_iter();
    let components = [it.next().unwrap(), it.next().unwrap()];
    Pca2d { coords, components, eigenvalues, degenerate: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Cyclic Jacobi eigensolver for symmetric matrices; independent oracle
    /// for the power-iteration path. Deliberately textbook index loops.
    #[allow(clippy::needless_range_loop)]
    fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let h = a.len();
        let mut v: Vec<Vec<f64>> = (0..h)
            .map(|i| (0..h).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..h {
                for q in (p + 1)..h {
                    off += a[p][q] * a[p][q];
                }
            }
            if off < 1e-24 {
                break;
            }
            for p in 0..h {
                for q in (p + 1)..h {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..h {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..h {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                    for k in 0..h {
                        let vkp = v[k][p];
                        let vkq = v[k][q];
                        v[k][p] = c * vkp - s * vkq;
                        v[k][q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let eigenvalues: Vec<f64> = (0..h).map(|i| a[i][i]).collect();
        // Columns of v are the eigenvectors.
        (eigenvalues, v)
    }

    fn covariance(rows: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = rows.len();
        let h = rows[0].len();
        let mut mean = vec![0.0; h];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x / n as f64;
            }
        }
        let centered: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
            .collect();
        let mut cov = vec![vec![0.0; h]; h];
        for r in &centered {
            for j in 0..h {
                for k in 0..h {
                    cov[j][k] += r[j] * r[k] / n as f64;
                }
            }
        }
        (cov, centered)
    }

    fn top2_via_jacobi(rows: &[Vec<f64>]) -> (Vec<[f64; 2]>, [Vec<f64>; 2], [f64; 2]) {
        let (cov, centered) = covariance(rows);
        let h = cov.len();
        let (vals, vecs) = jacobi_eigen(cov);
        let mut order: Vec<usize> = (0..h).collect();
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
        let mut comps: Vec<Vec<f64>> = Vec::new();
        for &col in order.iter().take(2) {
            let mut v: Vec<f64> = (0..h).map(|r| vecs[r][col]).collect();
            fix_sign(&mut v);
            comps.push(v);
        }
        let coords: Vec<[f64; 2]> = centered
            .iter()
            .map(|r| [dot(r, &comps[0]), dot(r, &comps[1])])
            .collect();
        let evals = [vals[order[0]], vals[order[1]]];
        let mut it = comps.into_iter();
        (coords, [it.next().unwrap(), it.next().unwrap()], evals)
    }

    fn random_rows(seed: u64, n: usize, h: usize, stretch: &[f64]) -> Vec<Vec<f64>> {
        let mut rng = crate::rng::Rng::new(seed);
        (0..n)
            .map(|_| (0..h).map(|j| rng.next_normal() * stretch[j] + j as f64).collect())
            .collect()
    }

    #[test]
    fn axis_aligned_points_project_to_first_axis() {
        let rows: Vec<Vec<f64>> = [0.0, 1.0, 2.0, 5.0, -3.0]
            .iter()
            .map(|&x| vec![x, 0.0, 0.0])
            .collect();
        let p = pca_2d(&rows);
        assert!(!p.degenerate);
        assert!((p.components[0][0] - 1.0).abs() < 1e-9);
        assert!(p.components[0][1].abs() < 1e-9);
        assert!(p.components[0][2].abs() < 1e-9);
        for c in &p.coords {
            assert!(c[1].abs() < 1e-8, "second coordinate {}", c[1]);
        }
        assert!(p.eigenvalues[1].abs() < 1e-12);
    }

    #[test]
    fn components_are_orthonormal() {
        let rows = random_rows(7, 40, 5, &[3.0, 2.0, 1.0, 0.7, 0.4]);
        let p = pca_2d(&rows);
        assert!((norm(&p.components[0]) - 1.0).abs() < 1e-8);
        assert!((norm(&p.components[1]) - 1.0).abs() < 1e-8);
        assert!(dot(&p.components[0], &p.components[1]).abs() < 1e-8);
        assert!(p.eigenvalues[0] >= p.eigenvalues[1]);
    }

    #[test]
    fn three_points_match_jacobi_oracle() {
        let rows = vec![
            vec![1.0, 0.0, 0.5],
            vec![0.0, 2.0, -0.5],
            vec![-1.0, 1.0, 2.0],
        ];
        let p = pca_2d(&rows);
        let (coords, comps, evals) = top2_via_jacobi(&rows);
        for k in 0..2 {
            assert!((p.eigenvalues[k] - evals[k]).abs() < 1e-6);
            for (j, got) in comps[k].iter().enumerate() {
                assert!(
                    (p.components[k][j] - got).abs() < 1e-6,
                    "component {k} entry {j}: {} vs {got}",
                    p.components[k][j]
                );
            }
        }
        for (a, b) in p.coords.iter().zip(&coords) {
            assert!((a[0] - b[0]).abs() < 1e-6);
            assert!((a[1] - b[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn random_cloud_matches_jacobi_oracle() {
        let rows = random_rows(11, 60, 6, &[4.0, 2.5, 1.5, 1.0, 0.6, 0.3]);
        let p = pca_2d(&rows);
        let (coords, comps, evals) = top2_via_jacobi(&rows);
        for k in 0..2 {
            assert!((p.eigenvalues[k] - evals[k]).abs() < 1e-8 * evals[0].max(1.0));
            for (j, got) in comps[k].iter().enumerate() {
                assert!((p.components[k][j] - got).abs() < 1e-7);
            }
        }
        for (a, b) in p.coords.iter().zip(&coords) {
            assert!((a[0] - b[0]).abs() < 1e-7);
            assert!((a[1] - b[1]).abs() < 1e-7);
        }
    }

    #[test]
    fn row_permutation_only_permutes_coordinates() {
        let rows = random_rows(13, 25, 4, &[3.0, 2.0, 1.0, 0.5]);
        let p = pca_2d(&rows);
        let perm: Vec<usize> = (0..25).rev().collect();
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let q = pca_2d(&permuted);
        for k in 0..2 {
            for j in 0..4 {
                assert!((p.components[k][j] - q.components[k][j]).abs() < 1e-9);
            }
        }
        for (new_pos, &old_pos) in perm.iter().enumerate() {
            assert!((q.coords[new_pos][0] - p.coords[old_pos][0]).abs() < 1e-9);
            assert!((q.coords[new_pos][1] - p.coords[old_pos][1]).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_variance_is_degenerate_with_zero_coords() {
        let rows = vec![vec![2.0, -1.0, 3.0]; 5];
        let p = pca_2d(&rows);
        assert!(p.degenerate);
        assert!(p.coords.iter().all(|c| c[0] == 0.0 && c[1] == 0.0));
        assert_eq!(p.eigenvalues, [0.0, 0.0]);
    }

    #[test]
    fn sign_convention_makes_largest_entry_positive() {
        let rows = random_rows(17, 30, 3, &[2.0, 1.0, 0.5]);
        let p = pca_2d(&rows);
        for comp in &p.components {
            let largest = comp.iter().fold(0.0f64, |acc, x| {
                if x.abs() > acc.abs() {
                    *x
                } else {
                    acc
                }
            });
            assert!(largest > 0.0);
        }
    }

    #[test]
    #[should_panic(expected = "at least 2 rows")]
    fn single_row_panics() {
        pca_2d(&[vec![1.0, 2.0]]);
    }
}

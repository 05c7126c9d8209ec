//! Independent reference computations shared by the test files. Nothing here
//! calls the library's solvers, so agreement is evidence rather than echo.
#![allow(dead_code)]

use proptest::prelude::*;
use supermap_core::{Matrix, MarkovArrivalProcess};

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, p);
        let d = m[c][c];
        assert!(d.abs() > 1e-300, "singular matrix in oracle");
        for v in m[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    let pivot = m[c].clone();
                    for (v, p) in m[r].iter_mut().zip(&pivot) {
                        *v -= f * p;
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn vec_mat(x: &[f64], a: &[Vec<f64>]) -> Vec<f64> {
    let n = a[0].len();
    (0..n).map(|j| x.iter().zip(a).map(|(xi, row)| xi * row[j]).sum()).collect()
}

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum()).collect()
}

/// Stationary law of the background chain by power iteration on the
/// uniformized chain `I + Q / q`.
pub fn uniformized_stationary(map: &MarkovArrivalProcess) -> Vec<f64> {
    let q: Vec<Vec<f64>> = rows(&map.generator());
    let n = q.len();
    let rate = (1.1 * (0..n).map(|i| q[i][i].abs()).fold(0.0, f64::max)).max(1e-12);
    let p: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| q[i][j] / rate + if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut x = vec![1.0 / n as f64; n];
    for _ in 0..1_000_000 {
        let next = vec_mat(&x, &p);
        let diff: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        x = next;
        if diff < 1e-16 {
            break;
        }
    }
    let s: f64 = x.iter().sum();
    x.iter().map(|v| v / s).collect()
}

/// Stationary vector of the phase chain at arrivals, `P = (-D0)^{-1} D1`, by
/// power iteration on the lazy chain `(I + P) / 2`.
pub fn embedded_stationary(map: &MarkovArrivalProcess) -> Vec<f64> {
    let inv = gauss_jordan_inverse(&rows(&map.d0().scaled(-1.0)));
    let d1 = rows(map.d1());
    let n = d1.len();
    let pm: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| inv[i][k] * d1[k][j]).sum()).collect())
        .collect();
    let mut x = vec![1.0 / n as f64; n];
    for _ in 0..200_000 {
        let y = vec_mat(&x, &pm);
        let next: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        let diff: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        x = next;
        if diff < 1e-15 {
            break;
        }
    }
    let s: f64 = x.iter().sum();
    x.iter().map(|v| v / s).collect()
}

/// Moments `E[X^i] = i! φ (-D0)^{-i} 1` with φ from [`embedded_stationary`].
pub fn oracle_moments(map: &MarkovArrivalProcess, n: usize) -> Vec<f64> {
    let phi = embedded_stationary(map);
    let inv = gauss_jordan_inverse(&rows(&map.d0().scaled(-1.0)));
    let mut v = vec![1.0; phi.len()];
    let mut fact = 1.0;
    (1..=n)
        .map(|i| {
            v = mat_vec(&inv, &v);
            fact *= i as f64;
            fact * phi.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect()
}

/// `Corr(A_q^{a1}, A_{q-k}^{a2})` from `E = a1! a2! φ M^{a2} P^k M^{a1} 1`,
/// `M = (-D0)^{-1}`, `P = M D1`, all built from the oracle pieces above. The
/// earlier interval carries `a2`.
pub fn oracle_autocorr(map: &MarkovArrivalProcess, k: usize, a1: usize, a2: usize) -> f64 {
    let phi = embedded_stationary(map);
    let inv = gauss_jordan_inverse(&rows(&map.d0().scaled(-1.0)));
    let d1 = rows(map.d1());
    let m = oracle_moments(map, 2 * a1.max(a2));
    let fact = |n: usize| (1..=n).product::<usize>() as f64;
    let mut v = vec![1.0; phi.len()];
    for _ in 0..a1 {
        v = mat_vec(&inv, &v);
    }
    for _ in 0..k {
        v = mat_vec(&inv, &mat_vec(&d1, &v));
    }
    for _ in 0..a2 {
        v = mat_vec(&inv, &v);
    }
    let joint = fact(a1) * fact(a2) * phi.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
    let var = |a: usize| m[2 * a - 1] - m[a - 1] * m[a - 1];
    (joint - m[a1 - 1] * m[a2 - 1]) / (var(a1) * var(a2)).sqrt()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Random irreducible MAP of dimension `n` from raw positive weights.
pub fn arb_map(max_dim: usize) -> impl Strategy<Value = MarkovArrivalProcess> {
    (1..=max_dim).prop_flat_map(|n| {
        (
            proptest::collection::vec(0.05f64..3.0, n * n),
            proptest::collection::vec(0.05f64..3.0, n * n),
        )
            .prop_map(move |(off, act)| {
                let mut d0 = vec![0.0; n * n];
                let d1 = act.clone();
                for i in 0..n {
                    let mut out = 0.0;
                    for j in 0..n {
                        if i != j {
                            d0[i * n + j] = off[i * n + j];
                            out += off[i * n + j];
                        }
                        out += d1[i * n + j];
                    }
                    d0[i * n + i] = -out;
                }
                MarkovArrivalProcess::new(
                    Matrix::from_row_major(n, n, d0).unwrap(),
                    Matrix::from_row_major(n, n, d1).unwrap(),
                )
                .unwrap()
            })
    })
}

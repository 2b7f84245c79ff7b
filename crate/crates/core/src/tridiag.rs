//! Complex tridiagonal (Thomas) solvers.

use crate::field::C64;

/// Solves a x = d in place for a tridiagonal a with sub-diagonal `lower`
/// (lower[0] unused), diagonal `diag` and super-diagonal `upper`
/// (upper[n−1] unused). `scratch` must hold n entries.
pub fn solve(lower: &[C64], diag: &[C64], upper: &[C64], d: &mut [C64], scratch: &mut [C64]) -> bool {
    let n = d.len();
    if n == 0 {
        return true;
    }
    let mut beta = diag[0];
    if beta.norm_sqr() == 0.0 {
        return false;
    }
    d[0] /= beta;
    for i in 1..n {
        scratch[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * scratch[i];
        if beta.norm_sqr() == 0.0 {
            return false;
        }
        d[i] = (d[i] - lower[i] * d[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        let next = d[i + 1];
        d[i] -= scratch[i + 1] * next;
    }
    d.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// LU factors of a fixed tridiagonal matrix, reused across many right-hand sides.
#[derive(Clone, Debug)]
pub struct Factored {
    lower: Vec<C64>,
    inv_beta: Vec<C64>,
    gamma: Vec<C64>,
}

impl Factored {
    pub fn new(lower: &[C64], diag: &[C64], upper: &[C64]) -> Option<Self> {
        let n = diag.len();
        let mut inv_beta = vec![C64::new(0.0, 0.0); n];
        let mut gamma = vec![C64::new(0.0, 0.0); n];
        let mut beta = diag[0];
        for i in 0..n {
            if i > 0 {
                gamma[i] = upper[i - 1] / beta;
                beta = diag[i] - lower[i] * gamma[i];
            }
            if beta.norm_sqr() == 0.0 || !beta.re.is_finite() {
                return None;
            }
            inv_beta[i] = beta.inv();
        }
        Some(Factored { lower: lower.to_vec(), inv_beta, gamma })
    }

    /// Constant-coefficient matrix (sub, main, super) of size n.
    pub fn constant(n: usize, sub: C64, main: C64, sup: C64) -> Option<Self> {
        let lower = vec![sub; n];
        let diag = vec![main; n];
        let upper = vec![sup; n];
        Factored::new(&lower, &diag, &upper)
    }

    pub fn len(&self) -> usize {
        self.inv_beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_beta.is_empty()
    }

    pub fn solve(&self, d: &mut [C64]) {
        let n = d.len();
        debug_assert_eq!(n, self.len());
        d[0] *= self.inv_beta[0];
        for i in 1..n {
            d[i] = (d[i] - self.lower[i] * d[i - 1]) * self.inv_beta[i];
        }
        for i in (0..n - 1).rev() {
            let next = d[i + 1];
            d[i] -= self.gamma[i + 1] * next;
        }
    }

    /// Solves along a strided view (used for column sweeps).
    pub fn solve_strided(&self, d: &mut [C64], offset: usize, stride: usize) {
        let n = self.len();
        let at = |i: usize| offset + i * stride;
        d[at(0)] *= self.inv_beta[0];
        for i in 1..n {
            d[at(i)] = (d[at(i)] - self.lower[i] * d[at(i - 1)]) * self.inv_beta[i];
        }
        for i in (0..n - 1).rev() {
            let next = d[at(i + 1)];
            d[at(i)] -= self.gamma[i + 1] * next;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matvec(l: &[C64], d: &[C64], u: &[C64], x: &[C64]) -> Vec<C64> {
        let n = x.len();
        (0..n)
            .map(|i| {
                let mut s = d[i] * x[i];
                if i > 0 {
                    s += l[i] * x[i - 1];
                }
                if i + 1 < n {
                    s += u[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    #[test]
    fn thomas_recovers_solution() {
        let n = 17;
        let l: Vec<C64> = (0..n).map(|i| C64::new(0.3, -0.1 * i as f64)).collect();
        let d: Vec<C64> = (0..n).map(|i| C64::new(4.0 + i as f64 * 0.1, 1.0)).collect();
        let u: Vec<C64> = (0..n).map(|i| C64::new(-0.7, 0.2 * (i % 3) as f64)).collect();
        let x: Vec<C64> = (0..n).map(|i| C64::new((i as f64).sin(), (i as f64).cos())).collect();
        let mut b = matvec(&l, &d, &u, &x);
        let mut s = vec![C64::new(0.0, 0.0); n];
        let mut b2 = b.clone();
        assert!(solve(&l, &d, &u, &mut b, &mut s));
        for (a, e) in b.iter().zip(&x) {
            assert!((a - e).norm() < 1e-12);
        }
        let f = Factored::new(&l, &d, &u).unwrap();
        f.solve(&mut b2);
        for (a, e) in b2.iter().zip(&x) {
            assert!((a - e).norm() < 1e-12);
        }
    }

    #[test]
    fn strided_matches_contiguous() {
        let n = 9;
        let f = Factored::constant(n, C64::new(-1.0, 0.2), C64::new(3.0, 0.5), C64::new(-1.0, 0.2)).unwrap();
        let col: Vec<C64> = (0..n).map(|i| C64::new(i as f64, 1.0)).collect();
        let mut a = col.clone();
        f.solve(&mut a);
        let mut grid = vec![C64::new(0.0, 0.0); 3 * n];
        for i in 0..n {
            grid[1 + 3 * i] = col[i];
        }
        f.solve_strided(&mut grid, 1, 3);
        for i in 0..n {
            assert_eq!(grid[1 + 3 * i], a[i]);
        }
    }

    #[test]
    fn singular_pivot_reported() {
        let z = C64::new(0.0, 0.0);
        let mut d = vec![C64::new(1.0, 0.0); 3];
        let mut s = vec![z; 3];
        assert!(!solve(&[z; 3], &[z; 3], &[z; 3], &mut d, &mut s));
        assert!(Factored::constant(3, z, z, z).is_none());
    }
}

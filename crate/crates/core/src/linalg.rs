//! Allocation-free LU for the small dense frames evaluated at every grid node.
//! Matrices are column-major: entry (i, j) lives at `i + j * n`.

#[derive(Debug, Clone)]
pub struct SmallLu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

impl SmallLu {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            lu: vec![0.0; n * n],
            piv: vec![0; n],
        }
    }

    /// Factors `a` with partial pivoting. Returns the ratio of the largest to
    /// the smallest pivot magnitude (infinite when singular), a cheap lower
    /// bound on the condition number.
    pub fn factor(&mut self, a: &[f64]) -> f64 {
        let n = self.n;
        self.lu.copy_from_slice(&a[..n * n]);
        let lu = &mut self.lu;
        let (mut pmax, mut pmin) = (0.0f64, f64::INFINITY);
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k + k * n].abs();
            for i in k + 1..n {
                let v = lu[i + k * n].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            self.piv[k] = p;
            if p != k {
                for j in 0..n {
                    lu.swap(k + j * n, p + j * n);
                }
            }
            pmax = pmax.max(best);
            pmin = pmin.min(best);
            if best == 0.0 {
                continue;
            }
            let d = lu[k + k * n];
            for i in k + 1..n {
                lu[i + k * n] /= d;
            }
            for j in k + 1..n {
                let f = lu[k + j * n];
                if f != 0.0 {
                    for i in k + 1..n {
                        lu[i + j * n] -= lu[i + k * n] * f;
                    }
                }
            }
        }
        if pmin == 0.0 || !pmin.is_finite() {
            f64::INFINITY
        } else {
            pmax / pmin
        }
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let lu = &self.lu;
        for k in 0..n {
            b.swap(k, self.piv[k]);
        }
        for j in 0..n {
            let bj = b[j];
            for i in j + 1..n {
                b[i] -= lu[i + j * n] * bj;
            }
        }
        for j in (0..n).rev() {
            b[j] /= lu[j + j * n];
            let bj = b[j];
            for i in 0..j {
                b[i] -= lu[i + j * n] * bj;
            }
        }
    }

    /// Solves `Aᵀ x = b` in place.
    pub fn solve_transpose(&self, b: &mut [f64]) {
        let n = self.n;
        let lu = &self.lu;
        // Uᵀ y = b
        for j in 0..n {
            let mut s = b[j];
            for i in 0..j {
                s -= lu[i + j * n] * b[i];
            }
            b[j] = s / lu[j + j * n];
        }
        // Lᵀ z = y
        for j in (0..n).rev() {
            let mut s = b[j];
            for i in j + 1..n {
                s -= lu[i + j * n] * b[i];
            }
            b[j] = s;
        }
        for k in (0..n).rev() {
            b.swap(k, self.piv[k]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matvec(a: &[f64], x: &[f64], n: usize, transpose: bool) -> Vec<f64> {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if transpose { a[j + i * n] } else { a[i + j * n] } * x[j])
                    .sum()
            })
            .collect()
    }

    #[test]
    fn solves_and_transposed_solves() {
        let n = 4;
        let a: Vec<f64> = (0..16)
            .map(|k| ((k * 7 + 3) % 11) as f64 - 5.0 + if k % 5 == 0 { 9.0 } else { 0.0 })
            .collect();
        let mut lu = SmallLu::new(n);
        assert!(lu.factor(&a).is_finite());
        let b = [1.0, -2.0, 0.5, 3.0];
        let mut x = b;
        lu.solve(&mut x);
        for (got, want) in matvec(&a, &x, n, false).iter().zip(b) {
            assert!((got - want).abs() < 1e-12);
        }
        let mut y = b;
        lu.solve_transpose(&mut y);
        for (got, want) in matvec(&a, &y, n, true).iter().zip(b) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_matrix_has_infinite_ratio() {
        let a = [1.0, 2.0, 2.0, 4.0];
        assert!(SmallLu::new(2).factor(&a).is_infinite());
    }
}

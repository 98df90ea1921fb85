//! Dense symmetric positive-definite solves.

use crate::error::{Error, Result};

/// Row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(n: usize) -> Self {
        Dense {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Lower Cholesky factor L with A = L Lᵀ, stored row-major.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Dense,
}

impl Cholesky {
    pub fn factor(a: &Dense) -> Result<Self> {
        let n = a.n;
        let mut l = Dense::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let (ri, rj) = (i * n, j * n);
                let mut s = a.data[ri + j];
                s -= l.data[ri..ri + j]
                    .iter()
                    .zip(&l.data[rj..rj + j])
                    .map(|(x, y)| x * y)
                    .sum::<f64>();
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::SingularSystem { pivot: i });
                    }
                    l.data[ri + i] = s.sqrt();
                } else {
                    l.data[ri + j] = s / l.data[rj + j];
                }
            }
        }
        Ok(Cholesky { l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.n;
        let d = &self.l.data;
        let mut y = b.to_vec();
        for i in 0..n {
            let s: f64 = d[i * n..i * n + i].iter().zip(&y[..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / d[i * n + i];
        }
        // back substitution with Lᵀ, column-oriented to stay row-major friendly
        for i in (0..n).rev() {
            y[i] /= d[i * n + i];
            let yi = y[i];
            for (k, yk) in y[..i].iter_mut().enumerate() {
                *yk -= d[i * n + k] * yi;
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn solves_spd_systems(vals in proptest::collection::vec(-1.0f64..1.0, 36), b in proptest::collection::vec(-1.0f64..1.0, 6)) {
            let n = 6;
            let mut a = Dense::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    let s: f64 = (0..n).map(|k| vals[i * n + k] * vals[j * n + k]).sum();
                    a.add(i, j, s + if i == j { 1.0 } else { 0.0 });
                }
            }
            let x = Cholesky::factor(&a).unwrap().solve(&b);
            let r = a.matvec(&x);
            for i in 0..n {
                prop_assert!((r[i] - b[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn indefinite_rejected() {
        let mut a = Dense::zeros(2);
        a.add(0, 0, 1.0);
        a.add(0, 1, 2.0);
        a.add(1, 0, 2.0);
        a.add(1, 1, 1.0);
        assert!(matches!(Cholesky::factor(&a), Err(Error::SingularSystem { pivot: 1 })));
    }
}

//! Banded LU without pivoting plus low-rank corner corrections.
//!
//! The matrices factored here are nonsingular M-matrices (shifted negatives
//! of cooperative operators, or `I − dt D` for diffusion), for which
//! elimination without pivoting is stable. Periodic wrap-around entries fall
//! outside the band and are handled with the Sherman–Morrison–Woodbury
//! identity and a small dense capacitance solve.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Square matrix with `bw` sub- and super-diagonals, stored row by row.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (2 * bw + 1)] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw, "({i}, {j}) outside band {}", self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i.abs_diff(j) <= self.bw
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let hi = (i + self.bw + 1).min(self.n);
            let mut s = 0.0;
            for j in lo..hi {
                s += self.data[self.idx(i, j)] * x[j];
            }
            y[i] = s;
        }
    }
}

/// An entry outside the band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
struct Woodbury {
    cols: Vec<usize>,
    /// `M_b⁻¹ U`, one column of length `n` per corner.
    z: Vec<Vec<f64>>,
    cap: DenseLu,
}

/// Factorization of `band + Σ corners`.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    bw: usize,
    lu: Vec<f64>,
    woodbury: Option<Woodbury>,
}

impl BandedLu {
    pub fn factor(band: BandMatrix, corners: &[Corner]) -> Result<Self> {
        let BandMatrix { n, bw, mut data } = band;
        let w = 2 * bw + 1;
        for k in 0..n {
            let piv = data[k * w + bw];
            if !(piv.abs() > f64::MIN_POSITIVE) || !piv.is_finite() {
                return Err(Error::Singular(k));
            }
            let hi = (k + bw + 1).min(n);
            for i in (k + 1)..hi {
                let ik = i * w + (k + bw - i);
                let l = data[ik] / piv;
                data[ik] = l;
                if l != 0.0 {
                    for j in (k + 1)..hi {
                        data[i * w + (j + bw - i)] -= l * data[k * w + (j + bw - k)];
                    }
                }
            }
        }
        let mut lu = Self { n, bw, lu: data, woodbury: None };
        let corners: Vec<Corner> = corners.iter().copied().filter(|c| c.value != 0.0).collect();
        if !corners.is_empty() {
            let k = corners.len();
            let mut z = Vec::with_capacity(k);
            for c in &corners {
                let mut col = vec![0.0; n];
                col[c.row] = c.value;
                lu.solve_band(&mut col);
                z.push(col);
            }
            let mut cap = vec![0.0; k * k];
            for (r, c) in corners.iter().enumerate() {
                for (l, zl) in z.iter().enumerate() {
                    cap[r * k + l] = zl[c.col] + if r == l { 1.0 } else { 0.0 };
                }
            }
            let cap = DenseLu::factor(k, cap)?;
            lu.woodbury = Some(Woodbury { cols: corners.iter().map(|c| c.col).collect(), z, cap });
        }
        Ok(lu)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn solve_band(&self, x: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        let w = 2 * bw + 1;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = x[i];
            for j in lo..i {
                s -= self.lu[i * w + (j + bw - i)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw + 1).min(n);
            let mut s = x[i];
            for j in (i + 1)..hi {
                s -= self.lu[i * w + (j + bw - i)] * x[j];
            }
            x[i] = s / self.lu[i * w + bw];
        }
    }

    /// Solves in place.
    pub fn solve(&self, x: &mut [f64]) {
        self.solve_band(x);
        if let Some(wb) = &self.woodbury {
            let mut t: Vec<f64> = wb.cols.iter().map(|&c| x[c]).collect();
            wb.cap.solve(&mut t);
            for (zl, tl) in wb.z.iter().zip(&t) {
                for (xi, zi) in x.iter_mut().zip(zl) {
                    *xi -= zi * tl;
                }
            }
        }
    }
}

/// Dense LU with partial pivoting for small systems.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl DenseLu {
    pub fn factor(n: usize, mut a: Vec<f64>) -> Result<Self> {
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs())).unwrap_or(k);
            if !(a[p * n + k].abs() > f64::MIN_POSITIVE) {
                return Err(Error::Singular(k));
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                piv.swap(k, p);
            }
            for i in (k + 1)..n {
                let l = a[i * n + k] / a[k * n + k];
                a[i * n + k] = l;
                for j in (k + 1)..n {
                    a[i * n + j] -= l * a[k * n + j];
                }
            }
        }
        Ok(Self { n, a, piv })
    }

    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.a[i * n + j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                x[i] -= self.a[i * n + j] * x[j];
            }
            x[i] /= self.a[i * n + i];
        }
        b.copy_from_slice(&x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_of(band: &BandMatrix, corners: &[Corner]) -> Vec<f64> {
        let n = band.n();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = band.get(i, j);
            }
        }
        for c in corners {
            m[c.row * n + c.col] += c.value;
        }
        m
    }

    fn periodic_m_matrix(n: usize, bw: usize) -> (BandMatrix, Vec<Corner>) {
        let mut b = BandMatrix::zeros(n, bw);
        let mut corners = Vec::new();
        for i in 0..n {
            b.add(i, i, 4.0 + 0.1 * i as f64);
            for off in 1..=bw {
                let w = -1.0 / (off as f64 + 0.5 * (i % 3) as f64);
                if i + off < n {
                    b.add(i, i + off, w);
                } else {
                    corners.push(Corner { row: i, col: i + off - n, value: w });
                }
                if i >= off {
                    b.add(i, i - off, 0.7 * w);
                } else {
                    corners.push(Corner { row: i, col: i + n - off, value: 0.7 * w });
                }
            }
        }
        (b, corners)
    }

    #[test]
    fn solves_periodic_band_system() {
        for bw in 1..=3 {
            let n = 23;
            let (band, corners) = periodic_m_matrix(n, bw);
            let dense = dense_of(&band, &corners);
            let lu = BandedLu::factor(band, &corners).unwrap();
            let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() + 1.0).collect();
            let mut x = b.clone();
            lu.solve(&mut x);
            for i in 0..n {
                let r: f64 = (0..n).map(|j| dense[i * n + j] * x[j]).sum::<f64>() - b[i];
                assert!(r.abs() < 1e-12, "bw {bw} row {i} residual {r}");
            }
        }
    }

    #[test]
    fn dense_lu_pivots() {
        let lu = DenseLu::factor(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let mut b = [2.0, 3.0];
        lu.solve(&mut b);
        assert_eq!(b, [3.0, 2.0]);
        assert!(DenseLu::factor(2, vec![1.0, 2.0, 2.0, 4.0]).is_err());
    }
}

//! Banded matrices, LU with partial pivoting, and bordered solves.

use crate::error::{Error, Result};

/// Square matrix with `kl` sub- and `ku` super-diagonals.
///
/// Row `i` stores columns `i - kl ..= i + ku + kl`; the extra `kl`
/// columns on the right hold fill-in produced by row interchanges.
#[derive(Clone, Debug)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i < self.n && j < self.n && self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Panics if `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Adds `s` to every diagonal entry.
    pub fn shift_diagonal(&mut self, s: f64) {
        for i in 0..self.n {
            let k = self.idx(i, i);
            self.data[k] += s;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku + 1).min(self.n);
            let row = &self.data[i * self.width..(i + 1) * self.width];
            let mut acc = 0.0;
            for (j, xj) in x.iter().enumerate().take(hi).skip(lo) {
                acc += row[j + self.kl - i] * xj;
            }
            *yi = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> BandedMatrix {
        let mut t = BandedMatrix::zeros(self.n, self.ku, self.kl);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku + 1).min(self.n);
            for j in lo..hi {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku + 1).min(n);
            for j in lo..hi {
                d[i * n + j] = self.get(i, j);
            }
        }
        d
    }

    pub fn max_abs_diagonal(&self) -> f64 {
        (0..self.n).fold(0.0_f64, |m, i| m.max(self.get(i, i).abs()))
    }

    /// Gaussian elimination with partial pivoting inside the band.
    pub fn lu(mut self) -> Result<BandedLu> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::Numerical("banded matrix is zero or non-finite".into()));
        }
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl + 1).min(n);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..last_row {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            let last_col = (k + ku + kl + 1).min(n);
            if p != k {
                for j in k..last_col {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let kk = self.idx(k, k);
            if self.data[kk] == 0.0 {
                // exactly singular column; keep going so near-kernel solves still work
                self.data[kk] = f64::EPSILON * scale;
            }
            let pivot = self.data[kk];
            for i in k + 1..last_row {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.data[ik] = l;
                for j in k + 1..last_col {
                    let kj = self.idx(k, j);
                    let ij = self.idx(i, j);
                    self.data[ij] -= l * self.data[kj];
                }
            }
        }
        let kl = self.kl;
        let mut lower = vec![0.0; n * kl];
        for k in 0..n {
            for r in 0..kl.min(n - k - 1) {
                lower[k * kl + r] = self.data[self.idx(k + 1 + r, k)];
            }
        }
        let inv_diag = (0..n).map(|i| 1.0 / self.data[self.idx(i, i)]).collect();
        // without row swaps U keeps the original upper bandwidth
        let pivoted = piv.iter().enumerate().any(|(k, &p)| p != k);
        let reach = if pivoted { ku + kl } else { ku };
        Ok(BandedLu {
            m: self,
            piv,
            lower,
            inv_diag,
            reach,
            pivoted,
        })
    }
}

/// Factorization `P A = L U` of a [`BandedMatrix`].
#[derive(Clone, Debug)]
pub struct BandedLu {
    m: BandedMatrix,
    piv: Vec<usize>,
    /// Multipliers of column `k` stored at `k * kl..(k + 1) * kl`.
    lower: Vec<f64>,
    inv_diag: Vec<f64>,
    reach: usize,
    pivoted: bool,
}

impl BandedLu {
    pub fn n(&self) -> usize {
        self.m.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        if !self.pivoted && self.m.kl == 2 && self.m.ku == 2 && self.m.n >= 3 {
            self.solve_penta(b);
            return;
        }
        let m = &self.m;
        let (n, kl) = (m.n, m.kl);
        debug_assert_eq!(b.len(), n);
        for k in 0..n {
            if self.pivoted {
                let p = self.piv[k];
                if p != k {
                    b.swap(k, p);
                }
            }
            let bk = b[k];
            if bk != 0.0 {
                let cnt = kl.min(n - k - 1);
                let l = &self.lower[k * kl..k * kl + cnt];
                for (bi, li) in b[k + 1..k + 1 + cnt].iter_mut().zip(l) {
                    *bi -= li * bk;
                }
            }
        }
        let reach = self.reach;
        for i in (0..n).rev() {
            let row = &m.data[i * m.width..(i + 1) * m.width];
            let cnt = reach.min(n - i - 1);
            let u = &row[kl + 1..kl + 1 + cnt];
            let x = &b[i + 1..i + 1 + cnt];
            // far terms first so the newest unknown enters last
            let mut acc = 0.0;
            for j in (1..cnt).rev() {
                acc += u[j] * x[j];
            }
            if cnt > 0 {
                acc += u[0] * x[0];
            }
            b[i] = (b[i] - acc) * self.inv_diag[i];
        }
    }

    /// Unpivoted pentadiagonal case (scalar diffusion operators).
    fn solve_penta(&self, b: &mut [f64]) {
        let n = self.m.n;
        let l = &self.lower[..2 * n];
        for k in 0..n - 2 {
            let bk = b[k];
            b[k + 1] -= l[2 * k] * bk;
            b[k + 2] -= l[2 * k + 1] * bk;
        }
        b[n - 1] -= l[2 * (n - 2)] * b[n - 2];
        let w = self.m.width;
        let data = &self.m.data;
        let inv = &self.inv_diag[..n];
        b[n - 1] *= inv[n - 1];
        b[n - 2] = (b[n - 2] - data[(n - 2) * w + 3] * b[n - 1]) * inv[n - 2];
        for i in (0..n - 2).rev() {
            let row = &data[i * w + 3..i * w + 5];
            b[i] = (b[i] - row[1] * b[i + 2] - row[0] * b[i + 1]) * inv[i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Smallest `|u_kk|` relative to the largest; a cheap singularity hint.
    pub fn pivot_ratio(&self) -> f64 {
        let d: Vec<f64> = (0..self.m.n).map(|i| self.m.get(i, i).abs()).collect();
        let max = d.iter().cloned().fold(0.0, f64::max);
        let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
        min / max
    }
}

/// Solver for `[[A, b], [cᵀ, 0]] [x; y] = [f; g]` with banded `A`.
///
/// `A` may be singular along `b`. The pinned matrix
/// `Â = A + s e_k e_kᵀ` is factored once; each solve closes a 2x2 system.
#[derive(Clone, Debug)]
pub struct BorderedSolver {
    a: BandedMatrix,
    lu: BandedLu,
    col: Vec<f64>,
    row: Vec<f64>,
    k: usize,
    q: Vec<f64>,
    r: Vec<f64>,
}

impl BorderedSolver {
    pub fn new(a: BandedMatrix, col: Vec<f64>, row: Vec<f64>) -> Result<Self> {
        let n = a.n();
        if col.len() != n || row.len() != n {
            return Err(Error::Shape(format!(
                "border length {} / {} does not match matrix size {n}",
                col.len(),
                row.len()
            )));
        }
        let k = col
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |(bi, bv), (i, v)| {
                if v.abs() > bv {
                    (i, v.abs())
                } else {
                    (bi, bv)
                }
            })
            .0;
        let s = a.max_abs_diagonal().max(1.0);
        let mut pinned = a.clone();
        pinned.add(k, k, s);
        let lu = pinned.lu()?;
        let q = lu.solve(&col);
        let mut ek = vec![0.0; n];
        ek[k] = s;
        let r = lu.solve(&ek);
        Ok(Self {
            a,
            lu,
            col,
            row,
            k,
            q,
            r,
        })
    }

    pub fn matrix(&self) -> &BandedMatrix {
        &self.a
    }

    fn solve_once(&self, f: &[f64], g: f64) -> Result<(Vec<f64>, f64)> {
        // A x + y b = f  <=>  Â x + y b - s x_k e_k = f
        // write x = p - y q + z r with z = x_k; Â⁻¹(s e_k) = r
        let p = self.lu.solve(f);
        let k = self.k;
        let dot = |u: &[f64]| -> f64 { self.row.iter().zip(u).map(|(a, b)| a * b).sum() };
        let (cp, cq, cr) = (dot(&p), dot(&self.q), dot(&self.r));
        // cᵀx = g :  cp - y cq + z cr = g
        // x_k = z  :  p_k - y q_k + z r_k = z
        let m11 = -cq;
        let m12 = cr;
        let m21 = -self.q[k];
        let m22 = self.r[k] - 1.0;
        let r1 = g - cp;
        let r2 = -p[k];
        let det = m11 * m22 - m12 * m21;
        let scale = (m11.abs() + m12.abs()) * (m21.abs() + m22.abs());
        if !det.is_finite() || det.abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Numerical(format!(
                "bordered system is singular (det = {det:e})"
            )));
        }
        let y = (r1 * m22 - m12 * r2) / det;
        let z = (m11 * r2 - m21 * r1) / det;
        let x: Vec<f64> = p
            .iter()
            .zip(&self.q)
            .zip(&self.r)
            .map(|((p, q), r)| p - y * q + z * r)
            .collect();
        Ok((x, y))
    }

    /// Solves with one step of iterative refinement.
    pub fn solve(&self, f: &[f64], g: f64) -> Result<(Vec<f64>, f64)> {
        if f.len() != self.a.n() {
            return Err(Error::Shape("right-hand side length".into()));
        }
        let (mut x, mut y) = self.solve_once(f, g)?;
        let ax = self.a.matvec(&x);
        let rf: Vec<f64> = f
            .iter()
            .zip(&ax)
            .zip(&self.col)
            .map(|((f, ax), b)| f - ax - y * b)
            .collect();
        let rg = g - self.row.iter().zip(&x).map(|(c, x)| c * x).sum::<f64>();
        let (dx, dy) = self.solve_once(&rf, rg)?;
        x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
        y += dy;
        Ok((x, y))
    }
}

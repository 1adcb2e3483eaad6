//! Banded `L D Lᵀ` factorization of a symmetric (possibly indefinite) matrix.
//!
//! No pivoting is performed, so the band is preserved and the signs of the
//! pivots give the inertia of the matrix by Sylvester's law. Pivots below
//! `ZERO_PIVOT_RTOL · max|A_ii|` are recorded as zero and their column is
//! dropped from the factor.

use std::fmt;

use super::sparse::CsrMatrix;

pub const ZERO_PIVOT_RTOL: f64 = 1e-12;

/// Counts of negative, zero and positive eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

impl fmt::Display for Inertia {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(-{}, 0:{}, +{})", self.negative, self.zero, self.positive)
    }
}

#[derive(Debug, Clone)]
pub struct BandLdlt {
    n: usize,
    bw: usize,
    /// Row `i` holds columns `i - bw ..= i` at offsets `0 ..= bw`; the
    /// diagonal slot stores the pivot.
    band: Vec<f64>,
    zero: Vec<bool>,
    min_pivot: f64,
    max_pivot: f64,
}

impl BandLdlt {
    pub fn factor(a: &CsrMatrix) -> Self {
        let n = a.nrows;
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut band = vec![0.0; n * w];
        for r in 0..n {
            let (cols, vals) = a.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if c <= r {
                    band[r * w + (c + bw - r)] = v;
                }
            }
        }
        let scale = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let tol = ZERO_PIVOT_RTOL * scale;
        let mut zero = vec![false; n];
        let mut work = vec![0.0; w];
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            let (head, tail) = band.split_at_mut(i * w);
            let row_i = &mut tail[..w];
            // work[k - j0] holds L_ik · d_k for the columns already finished.
            for j in j0..i {
                let k0 = j0.max(j.saturating_sub(bw));
                let row_j = &head[j * w..(j + 1) * w];
                let mut s = 0.0;
                for k in k0..j {
                    s += work[k - j0] * row_j[k + bw - j];
                }
                let t = row_i[j + bw - i] - s;
                work[j - j0] = t;
                let d = row_j[bw];
                row_i[j + bw - i] = if zero[j] { 0.0 } else { t / d };
                if zero[j] {
                    work[j - j0] = 0.0;
                }
            }
            let mut s = 0.0;
            for k in j0..i {
                s += work[k - j0] * row_i[k + bw - i];
            }
            let d = row_i[bw] - s;
            row_i[bw] = d;
            if d.abs() <= tol || !d.is_finite() {
                zero[i] = true;
            }
        }
        let (mut min_pivot, mut max_pivot) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let d = band[i * w + bw].abs();
            min_pivot = min_pivot.min(d);
            max_pivot = max_pivot.max(d);
        }
        Self {
            n,
            bw,
            band,
            zero,
            min_pivot,
            max_pivot,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn pivot(&self, i: usize) -> f64 {
        self.band[i * (self.bw + 1) + self.bw]
    }

    pub fn inertia(&self) -> Inertia {
        let mut out = Inertia::default();
        for i in 0..self.n {
            if self.zero[i] {
                out.zero += 1;
            } else if self.pivot(i) < 0.0 {
                out.negative += 1;
            } else {
                out.positive += 1;
            }
        }
        out
    }

    /// `min |d| / max |d|` over all pivots.
    pub fn pivot_ratio(&self) -> f64 {
        if self.max_pivot > 0.0 {
            self.min_pivot / self.max_pivot
        } else {
            0.0
        }
    }

    pub fn is_singular(&self) -> bool {
        self.zero.iter().any(|&z| z)
    }

    /// Solves in place. Zero pivots act as a pseudo-inverse (component set
    /// to zero), so callers should check [`Self::is_singular`] first.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        let bw = self.bw;
        let w = bw + 1;
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            let row = &self.band[i * w..(i + 1) * w];
            let mut s = 0.0;
            for k in j0..i {
                s += row[k + bw - i] * x[k];
            }
            x[i] -= s;
        }
        for i in 0..n {
            x[i] = if self.zero[i] { 0.0 } else { x[i] / self.pivot(i) };
        }
        for i in (0..n).rev() {
            let j0 = i.saturating_sub(bw);
            let row = &self.band[i * w..(i + 1) * w];
            let xi = x[i];
            for k in j0..i {
                x[k] -= row[k + bw - i] * xi;
            }
        }
    }
}

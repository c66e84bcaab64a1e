//! Symmetric positive definite band matrices with in-place Cholesky.

/// Lower band storage: entry (i, j) with `i - kd <= j <= i` lives at
/// `data[i * (kd + 1) + (i - j)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kd: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotPositiveDefinite {
    pub row: usize,
}

impl BandMatrix {
    pub fn zeros(n: usize, kd: usize) -> Self {
        BandMatrix {
            n,
            kd,
            data: vec![0.0; n * (kd + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.kd
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.kd);
        i * (self.kd + 1) + (i - j)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.kd {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Adds `v` to the symmetric pair (i, j) and (j, i).
    ///
    /// Panics when (i, j) lies outside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.kd, "entry ({i}, {j}) outside band {}", self.kd);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kd);
            for j in lo..=i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// Factorizes `A = L Lᵀ`, consuming the matrix.
    pub fn cholesky(mut self) -> Result<BandCholesky, NotPositiveDefinite> {
        let (n, kd) = (self.n, self.kd);
        for j in 0..n {
            let lo = j.saturating_sub(kd);
            let mut diag = self.data[self.idx(j, j)];
            for k in lo..j {
                let l = self.data[self.idx(j, k)];
                diag -= l * l;
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(NotPositiveDefinite { row: j });
            }
            let ljj = diag.sqrt();
            let jj = self.idx(j, j);
            self.data[jj] = ljj;
            for i in j + 1..(j + kd + 1).min(n) {
                let lo_i = i.saturating_sub(kd).max(lo);
                let mut v = self.data[self.idx(i, j)];
                for k in lo_i..j {
                    v -= self.data[self.idx(i, k)] * self.data[self.idx(j, k)];
                }
                let ij = self.idx(i, j);
                self.data[ij] = v / ljj;
            }
        }
        Ok(BandCholesky { l: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    l: BandMatrix,
}

impl BandCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let l = &self.l;
        let (n, kd) = (l.n, l.kd);
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(kd);
            let mut v = y[i];
            for k in lo..i {
                v -= l.data[l.idx(i, k)] * y[k];
            }
            y[i] = v / l.data[l.idx(i, i)];
        }
        for i in (0..n).rev() {
            let mut v = y[i];
            for k in i + 1..(i + kd + 1).min(n) {
                v -= l.data[l.idx(k, i)] * y[k];
            }
            y[i] = v / l.data[l.idx(i, i)];
        }
        y
    }
}

//! Tridiagonal matrices, the Thomas algorithm and the slope-form solve used by every Newton step.

/// Row `i` reads `sub[i] x[i-1] + diag[i] x[i] + sup[i] x[i+1]`; `sub[0]` and `sup[n-1]` are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Matrix-vector product.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.sub[i] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.sup[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    /// Entry `(i, j)`, zero outside the band.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if j + 1 == i {
            self.sub[i]
        } else if i + 1 == j {
            self.sup[i]
        } else {
            0.0
        }
    }

    /// Thomas algorithm; stable for the diagonally dominant systems assembled here.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut denom = self.diag[0];
        c[0] = if n > 1 { self.sup[0] / denom } else { 0.0 };
        d[0] = rhs[0] / denom;
        for i in 1..n {
            denom = self.diag[i] - self.sub[i] * c[i - 1];
            c[i] = if i + 1 < n { self.sup[i] / denom } else { 0.0 };
            d[i] = (rhs[i] - self.sub[i] * d[i - 1]) / denom;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d[i] - c[i] * x[i + 1];
        }
        x
    }
}

/// Solves `J x = rhs` for a tridiagonal `J` whose rows all sum to `alpha`, returning `x` as
/// `(x_0, slopes)` with `slopes[k] = (x_{k+1} - x_k) / h`.
///
/// Differencing consecutive rows eliminates `x_0` and leaves a tridiagonal system for the slopes;
/// `x_0` then follows from the first row. Slopes come out with relative precision even where the
/// matrix entries span many orders of magnitude, which a solve for `x` itself cannot offer.
pub fn solve_in_slopes(j: &Tridiagonal, alpha: f64, rhs: &[f64], h: f64) -> (f64, Vec<f64>) {
    let n = j.len();
    let m = n - 1;
    let mut sys = Tridiagonal { sub: vec![0.0; m], diag: vec![0.0; m], sup: vec![0.0; m] };
    let mut r = vec![0.0; m];
    for k in 0..m {
        let a_k = if k == 0 { 0.0 } else { j.sub[k] };
        let a_next = j.sub[k + 1];
        let c_k = j.sup[k];
        let c_next = if k + 1 < n - 1 { j.sup[k + 1] } else { 0.0 };
        sys.sub[k] = a_k;
        sys.diag[k] = alpha - a_next - c_k;
        sys.sup[k] = c_next;
        r[k] = (rhs[k + 1] - rhs[k]) / h;
    }
    let dq = sys.solve(&r);
    let x0 = (rhs[0] - h * j.sup[0] * dq[0]) / alpha;
    (x0, dq)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_like(n: usize, alpha: f64, weights: &[f64]) -> Tridiagonal {
        let mut t = Tridiagonal { sub: vec![0.0; n], diag: vec![0.0; n], sup: vec![0.0; n] };
        for i in 0..n {
            let w = weights[i];
            if i > 0 {
                t.sub[i] = -w;
            }
            if i + 1 < n {
                t.sup[i] = -w;
            }
            t.diag[i] = alpha - t.sub[i] - t.sup[i];
        }
        t
    }

    #[test]
    fn thomas_solves_random_dominant_system() {
        let n = 50;
        let w: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.7).sin().abs()).collect();
        let t = laplacian_like(n, 0.3, &w);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.13).cos()).collect();
        let b = t.apply(&x);
        let y = t.solve(&b);
        for (a, c) in x.iter().zip(&y) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn slope_solve_agrees_with_direct_solve() {
        let n = 64;
        let h = 0.1;
        let w: Vec<f64> = (0..n).map(|i| 10f64.powf((i as f64 / 8.0).sin() * 3.0)).collect();
        let alpha = 1.005;
        let t = laplacian_like(n, alpha, &w);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.31).sin()).collect();
        let direct = t.solve(&b);
        let (x0, dq) = solve_in_slopes(&t, alpha, &b, h);
        let mut v = x0;
        assert!((v - direct[0]).abs() < 1e-10);
        for k in 0..n - 1 {
            v += h * dq[k];
            assert!((v - direct[k + 1]).abs() < 1e-9, "{k}: {v} vs {}", direct[k + 1]);
        }
    }
}

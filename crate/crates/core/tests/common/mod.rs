//! Test-side oracles. Nothing here reuses the library's assembly or solver:
//! the quadratic is rebuilt from the raw data and minimized independently.

#![allow(dead_code)]

use std::io::Write;

use hscore::hfuncs::HFunction;
use hscore::truncated_normal::{sample, SamplerOptions, TnParams};
use nalgebra::{DMatrix, DVector};

/// Writes a line straight to the process stderr so it shows up in the test
/// log even when output capture is on.
pub fn report(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

/// Prints one criterion line and returns whether it passed.
pub fn criterion(id: u32, title: &str, pass: bool, detail: &str) -> bool {
    report(&format!("[criterion {id:>2}] {} {title}: {detail}", if pass { "PASS" } else { "FAIL" }));
    pass
}

/// Banded `K` with `0.4` off the diagonal, sampled `n` times.
pub fn banded_data(m: usize, n: usize, seed: u64, mu: Option<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut k = DMatrix::identity(m, m);
    for j in 0..m.saturating_sub(1) {
        k[(j, j + 1)] = 0.4;
        k[(j + 1, j)] = 0.4;
    }
    let p = match mu {
        None => TnParams::centered(k.clone()).unwrap(),
        Some(v) => TnParams::with_mu(k.clone(), DVector::from_element(m, v)).unwrap(),
    };
    (k, sample(&p, n, seed, &SamplerOptions::default()).unwrap().data)
}

/// Score-matching loss pieces rebuilt from the data: per row `j`,
/// `½ ξᵀ B_j ξ − l_jᵀ ξ` with `ξ = (K_j·, η_j)`; `mult` scales diagonals.
pub struct Oracle {
    pub m: usize,
    pub centered: bool,
    pub b: Vec<DMatrix<f64>>,
    pub l: Vec<DVector<f64>>,
}

impl Oracle {
    pub fn new(data: &DMatrix<f64>, h: &HFunction, centered: bool, mult: f64) -> Self {
        let (n, m) = (data.nrows(), data.ncols());
        let q = if centered { m } else { m + 1 };
        let mut b = vec![DMatrix::zeros(q, q); m];
        let mut l = vec![DVector::zeros(q); m];
        for j in 0..m {
            for i in 0..n {
                let w: Vec<f64> = (0..q).map(|k| if k < m { data[(i, k)] } else { -1.0 }).collect();
                let (hv, dh) = h.eval(data[(i, j)]).unwrap();
                for a in 0..q {
                    l[j][a] += dh * w[a] / n as f64;
                    for c in 0..q {
                        b[j][(a, c)] += hv * w[a] * w[c] / n as f64;
                    }
                }
                l[j][j] += hv / n as f64;
            }
            for a in 0..q {
                b[j][(a, a)] *= mult;
            }
        }
        Oracle { m, centered, b, l }
    }

    fn row(&self, k: &DMatrix<f64>, eta: &DVector<f64>, j: usize) -> DVector<f64> {
        let q = self.b[j].nrows();
        DVector::from_fn(q, |a, _| if a < self.m { k[(j, a)] } else { eta[j] })
    }

    pub fn loss(&self, k: &DMatrix<f64>, eta: &DVector<f64>) -> f64 {
        (0..self.m)
            .map(|j| {
                let xi = self.row(k, eta, j);
                0.5 * xi.dot(&(&self.b[j] * &xi)) - self.l[j].dot(&xi)
            })
            .sum()
    }

    /// Penalized objective, `λ` on every off-diagonal entry (both halves).
    pub fn objective(&self, k: &DMatrix<f64>, eta: &DVector<f64>, lambda: f64, lambda_eta: f64) -> f64 {
        let mut off = 0.0;
        for i in 0..self.m {
            for j in 0..self.m {
                if i != j {
                    off += k[(i, j)].abs();
                }
            }
        }
        let e = if self.centered { 0.0 } else { eta.iter().map(|v| v.abs()).sum::<f64>() };
        self.loss(k, eta) + lambda * off + lambda_eta * e
    }

    /// Gradient with respect to the free coordinates (diagonal, tied pairs, η).
    fn gradient(&self, k: &DMatrix<f64>, eta: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.m;
        let r: Vec<DVector<f64>> = (0..m).map(|j| &self.b[j] * self.row(k, eta, j) - &self.l[j]).collect();
        let gk = DMatrix::from_fn(m, m, |i, j| if i == j { r[j][j] } else { r[i][j] + r[j][i] });
        let ge = DVector::from_fn(m, |j, _| if self.centered { 0.0 } else { r[j][m] });
        (gk, ge)
    }

    /// FISTA with gradient restarts; pair penalty `2λ`, `η` penalty `λ_η`.
    pub fn fista(&self, lambda: f64, lambda_eta: f64, iters: usize) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.m;
        let lip = 2.0 * self.b.iter().map(|b| b.symmetric_eigenvalues().max()).fold(0.0, f64::max);
        let t = 1.0 / lip;
        let soft = |v: f64, a: f64| v.signum() * (v.abs() - a).max(0.0);
        let (mut k, mut eta) = (DMatrix::zeros(m, m), DVector::zeros(m));
        let (mut yk, mut ye) = (k.clone(), eta.clone());
        let mut theta = 1.0f64;
        for _ in 0..iters {
            let (gk, ge) = self.gradient(&yk, &ye);
            let nk = DMatrix::from_fn(m, m, |i, j| {
                let v = yk[(i, j)] - t * gk[(i, j)];
                if i == j {
                    v
                } else {
                    soft(v, 2.0 * lambda * t)
                }
            });
            let ne = if self.centered { DVector::zeros(m) } else { ye.map(|_| 0.0) + DVector::from_fn(m, |j, _| soft(ye[j] - t * ge[j], lambda_eta * t)) };
            let next_theta = (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0;
            let beta = (theta - 1.0) / next_theta;
            // restart when the momentum points uphill
            let uphill = (&yk - &nk).dot(&(&nk - &k)) + (&ye - &ne).dot(&(&ne - &eta)) > 0.0;
            if uphill {
                theta = 1.0;
                yk = k.clone();
                ye = eta.clone();
                continue;
            }
            yk = &nk + (&nk - &k) * beta;
            ye = &ne + (&ne - &eta) * beta;
            k = nk;
            eta = ne;
            theta = next_theta;
        }
        (k, eta)
    }

    /// Unpenalized minimizer over unconstrained `K ∈ R^{m×m}` subject to
    /// `K = Kᵀ`, through the Lagrangian KKT system (centered only).
    pub fn equality_constrained(&self) -> DMatrix<f64> {
        assert!(self.centered);
        let m = self.m;
        let r = m * m;
        let idx = |j: usize, k: usize| j * m + k;
        let pairs: Vec<(usize, usize)> = (0..m).flat_map(|j| (j + 1..m).map(move |k| (j, k))).collect();
        let dim = r + pairs.len();
        let mut a = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        for j in 0..m {
            for x in 0..m {
                rhs[idx(j, x)] = self.l[j][x];
                for y in 0..m {
                    a[(idx(j, x), idx(j, y))] = self.b[j][(x, y)];
                }
            }
        }
        for (c, &(j, k)) in pairs.iter().enumerate() {
            a[(r + c, idx(j, k))] = 1.0;
            a[(r + c, idx(k, j))] = -1.0;
            a[(idx(j, k), r + c)] = 1.0;
            a[(idx(k, j), r + c)] = -1.0;
        }
        let sol = a.lu().solve(&rhs).expect("KKT system is nonsingular");
        DMatrix::from_fn(m, m, |j, k| sol[idx(j, k)])
    }
}

/// Newton's method on `f` with central-difference gradient and Hessian.
/// Only evaluates `f`, so it is independent of any assembled quadratic.
pub fn newton_fd<F: Fn(&DVector<f64>) -> f64>(f: F, x0: &DVector<f64>, steps: usize) -> DVector<f64> {
    let r = x0.len();
    let mut x = x0.clone();
    let (hg, hh) = (1e-4, 1e-3);
    for _ in 0..steps {
        let at = |d: &[(usize, f64)]| {
            let mut y = x.clone();
            for &(i, v) in d {
                y[i] += v;
            }
            f(&y)
        };
        let g = DVector::from_fn(r, |i, _| (at(&[(i, hg)]) - at(&[(i, -hg)])) / (2.0 * hg));
        let hess = DMatrix::from_fn(r, r, |i, j| {
            (at(&[(i, hh), (j, hh)]) - at(&[(i, hh), (j, -hh)]) - at(&[(i, -hh), (j, hh)]) + at(&[(i, -hh), (j, -hh)]))
                / (4.0 * hh * hh)
        });
        let step = hess.lu().solve(&g).expect("finite-difference Hessian is nonsingular");
        x -= step;
    }
    x
}

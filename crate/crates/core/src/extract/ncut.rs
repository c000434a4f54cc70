//! Second eigenvector of the symmetric normalized Laplacian.
//!
//! With `M = D^-1/2 A D^-1/2`, the Laplacian `L = I - M` has eigenvalue 0 on
//! `D^1/2 1`. Its second-smallest eigenpair is the largest eigenpair of `M`
//! restricted to the complement of that vector, found here by Lanczos
//! iteration with full reorthogonalization.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::affinity::AffinityMatrix;
use crate::error::{Error, Result};

const RITZ_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct NcutEigen {
    /// Unit-norm eigenvector; its largest-magnitude entry is positive.
    pub vector: Vec<f64>,
    /// Eigenvalue of `L_sym`.
    pub eigenvalue: f64,
    /// `||L x - lambda x||`.
    pub residual: f64,
    /// False when the affinity graph splits into several components, in
    /// which case the eigenvalue 0 is repeated.
    pub connected: bool,
}

pub fn ncut_second_eigenvector(a: &AffinityMatrix) -> Result<NcutEigen> {
    let n = a.len();
    if n < 2 {
        return Err(Error::Invalid(format!("need >= 2 nodes, got {n}")));
    }
    let connected = a.is_connected();
    if !connected {
        warn!("affinity graph is disconnected; second Laplacian eigenvalue is repeated");
    }

    let inv_sqrt_deg: Vec<f64> = a.degrees().iter().map(|d| 1.0 / d.sqrt()).collect();
    let apply_m = |x: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let row = a.row(i);
            let mut acc = 0.0;
            for j in 0..n {
                acc += row[j] * inv_sqrt_deg[j] * x[j];
            }
            out[i] = inv_sqrt_deg[i] * acc;
        }
    };

    // trivial eigenvector D^1/2 1
    let mut trivial: Vec<f64> = inv_sqrt_deg.iter().map(|s| 1.0 / s).collect();
    normalize(&mut trivial);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    project_out(&mut q, &trivial);
    normalize(&mut q);

    let max_steps = n - 1;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_steps);
    let mut alphas = Vec::with_capacity(max_steps);
    let mut betas: Vec<f64> = Vec::with_capacity(max_steps);
    let mut w = vec![0.0; n];
    let mut ritz: Option<(f64, Vec<f64>)> = None;

    for step in 0..max_steps {
        apply_m(&q, &mut w);
        let alpha = dot(&q, &w);
        alphas.push(alpha);
        basis.push(q.clone());
        // full reorthogonalization, twice for stability
        for _ in 0..2 {
            project_out(&mut w, &trivial);
            for b in &basis {
                project_out(&mut w, b);
            }
        }
        let beta = norm(&w);

        let m = alphas.len();
        let check = m <= 40 || m % (m / 20).max(1) == 0 || step + 1 == max_steps || beta < 1e-14;
        if check {
            let (vals, vecs) = tridiagonal_eigen(&alphas, &betas);
            let top = m - 1;
            let y: Vec<f64> = (0..m).map(|r| vecs[r * m + top]).collect();
            let bound = (beta * y[m - 1]).abs();
            ritz = Some((vals[top], y));
            if bound <= RITZ_TOL || beta < 1e-14 {
                break;
            }
        }
        if step + 1 == max_steps {
            break;
        }
        betas.push(beta);
        q = w.iter().map(|v| v / beta).collect();
    }

    let (theta, y) = ritz.expect("at least one Lanczos step");
    let mut x = vec![0.0; n];
    for (coef, b) in y.iter().zip(&basis) {
        for (xi, bi) in x.iter_mut().zip(b) {
            *xi += coef * bi;
        }
    }
    project_out(&mut x, &trivial);
    normalize(&mut x);
    fix_sign(&mut x);

    let eigenvalue = 1.0 - theta;
    let mut mx = vec![0.0; n];
    apply_m(&x, &mut mx);
    // L x - lambda x = x - M x - lambda x
    let residual = x
        .iter()
        .zip(&mx)
        .map(|(xi, mxi)| {
            let r = xi - mxi - eigenvalue * xi;
            r * r
        })
        .sum::<f64>()
        .sqrt();

    Ok(NcutEigen {
        vector: x,
        eigenvalue,
        residual,
        connected,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: &mut [f64]) {
    let n = norm(a);
    if n > 0.0 {
        a.iter_mut().for_each(|v| *v /= n);
    }
}

/// Removes the component along unit vector `u`.
fn project_out(a: &mut [f64], u: &[f64]) {
    let c = dot(a, u);
    for (ai, ui) in a.iter_mut().zip(u) {
        *ai -= c * ui;
    }
}

/// Makes the largest-magnitude entry (first on ties) positive.
pub(crate) fn fix_sign(x: &mut [f64]) {
    let mut best = 0;
    for i in 1..x.len() {
        if x[i].abs() > x[best].abs() {
            best = i;
        }
    }
    if x[best] < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Eigen-decomposition of a symmetric tridiagonal matrix by implicit QL.
///
/// `diag` has length `m`, `off` length `m - 1` (or more; extra entries are
/// ignored). Returns ascending eigenvalues and the row-major `m x m` matrix
/// whose columns are the matching eigenvectors.
pub(crate) fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&off[..n - 1]);
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            loop {
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[k * n + i + 1];
                        v[k * n + i + 1] = s * v[k * n + i] + c * h;
                        v[k * n + i] = c * v[k * n + i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    // selection sort, ascending
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        for j in i + 1..n {
            if d[j] < d[k] {
                k = j;
            }
        }
        if k != i {
            d.swap(i, k);
            for r in 0..n {
                v.swap(r * n + i, r * n + k);
            }
        }
    }
    (d, v)
}

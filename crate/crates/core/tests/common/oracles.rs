//! Reference computations for tests. Plain `std` only: nothing here calls
//! into the library, so each oracle stays an independent route to the value
//! it checks.

#![allow(dead_code, clippy::needless_range_loop)]

/// SplitMix64 generator for reproducible test fixtures.
pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Lcg(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in [lo, hi].
    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() % (hi - lo + 1) as u64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

pub fn sample_covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            mean[j] += r[j] / n as f64;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    for row in &mut cov {
        for v in row.iter_mut() {
            *v /= (n - 1) as f64;
        }
    }
    cov
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues in non-increasing order and the matching unit eigenvectors.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..d).flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..d {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| m[j][j].partial_cmp(&m[i][i]).unwrap());
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..d).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

/// Largest principal angle (radians) between the spans of two sets of
/// orthonormal vectors of equal count, via the sine of the angle:
/// `‖(I − Q Qᵀ) P‖₂`, bounded above by the Frobenius norm.
pub fn max_principal_angle(p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    let mut frob = 0.0;
    for pv in p {
        let mut resid = pv.clone();
        for qv in q {
            let dot: f64 = pv.iter().zip(qv).map(|(a, b)| a * b).sum();
            for (r, b) in resid.iter_mut().zip(qv) {
                *r -= dot * b;
            }
        }
        frob += resid.iter().map(|r| r * r).sum::<f64>();
    }
    frob.sqrt().min(1.0).asin()
}

fn log1pexp_neg(m: f64) -> f64 {
    // log(1 + exp(-m))
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// Weighted elastic-net logistic objective by direct summation.
pub fn naive_objective(x: &[Vec<f64>], y: &[f64], s: &[f64], w: &[f64], b: f64, c: f64, alpha: f64) -> f64 {
    let n = x.len() as f64;
    let mut loss = 0.0;
    for i in 0..x.len() {
        let mut z = b;
        for j in 0..w.len() {
            z += w[j] * x[i][j];
        }
        loss += s[i] * log1pexp_neg(y[i] * z);
    }
    let l1: f64 = w.iter().map(|v| v.abs()).sum();
    let l2: f64 = w.iter().map(|v| v * v).sum();
    loss / n + (alpha * l1 + 0.5 * (1.0 - alpha) * l2) / (c * n)
}

/// Full-batch proximal gradient (FISTA with gradient-based restart) on the
/// same objective. Runs until the max parameter change drops below `tol`.
pub fn prox_gradient_oracle(
    x: &[Vec<f64>],
    y: &[f64],
    s: &[f64],
    c: f64,
    alpha: f64,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let n = x.len();
    let d = x[0].len();
    let nf = n as f64;
    let lam1 = alpha / (c * nf);
    let lam2 = (1.0 - alpha) / (c * nf);
    // Lipschitz bound of the smooth part over (w, b)
    let lip = x.iter().zip(s).map(|(r, si)| si * (r.iter().map(|v| v * v).sum::<f64>() + 1.0)).sum::<f64>() / (4.0 * nf) + lam2;
    let step = 1.0 / lip;

    let grad = |theta: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; d + 1];
        for i in 0..n {
            let mut z = theta[d];
            for j in 0..d {
                z += theta[j] * x[i][j];
            }
            let coef = -s[i] * y[i] / (1.0 + (y[i] * z).exp()) / nf;
            for j in 0..d {
                g[j] += coef * x[i][j];
            }
            g[d] += coef;
        }
        for j in 0..d {
            g[j] += lam2 * theta[j];
        }
        g
    };
    let prox = |v: f64, t: f64| v.signum() * (v.abs() - t).max(0.0);

    let mut theta = vec![0.0; d + 1];
    let mut yk = theta.clone();
    let mut t = 1.0f64;
    for _ in 0..max_iter {
        let g = grad(&yk);
        let mut next = vec![0.0; d + 1];
        for j in 0..d {
            next[j] = prox(yk[j] - step * g[j], step * lam1);
        }
        next[d] = yk[d] - step * g[d];
        let change = next.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        // restart momentum when it points uphill
        let uphill: f64 = (0..=d).map(|j| (yk[j] - next[j]) * (next[j] - theta[j])).sum();
        let t_next = if uphill > 0.0 { 1.0 } else { (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0 };
        let beta = if uphill > 0.0 { 0.0 } else { (t - 1.0) / t_next };
        yk = (0..=d).map(|j| next[j] + beta * (next[j] - theta[j])).collect();
        theta = next;
        t = t_next;
        if change < tol {
            break;
        }
    }
    let b = theta[d];
    let w = theta[..d].to_vec();
    let obj = naive_objective(x, y, s, &w, b, c, alpha);
    (theta, obj)
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// max |a − b| / max(max |b|, floor).
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|v| v.abs()).fold(floor, f64::max);
    diff / scale
}

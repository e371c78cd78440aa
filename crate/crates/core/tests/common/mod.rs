//! Independent reference computations for the integration tests: direct
//! quadrature, brute-force Monte Carlo and explicit matrix inversion. None of
//! these call into the routines they check.

#![allow(dead_code)]

use egpc::{GpcModel, Kernel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn simpson<const N: usize>(fa: [f64; N], fm: [f64; N], fb: [f64; N], h: f64) -> [f64; N] {
    std::array::from_fn(|k| h / 6.0 * (fa[k] + 4.0 * fm[k] + fb[k]))
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<const N: usize, F: Fn(f64) -> [f64; N]>(
    f: &F,
    a: f64,
    b: f64,
    fa: [f64; N],
    fm: [f64; N],
    fb: [f64; N],
    whole: [f64; N],
    tol: f64,
    depth: usize,
) -> [f64; N] {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let err = (0..N)
        .map(|k| (left[k] + right[k] - whole[k]).abs())
        .fold(0.0, f64::max);
    if depth == 0 || err <= 15.0 * tol {
        return std::array::from_fn(|k| left[k] + right[k] + (left[k] + right[k] - whole[k]) / 15.0);
    }
    let l = simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1);
    let r = simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
    std::array::from_fn(|k| l[k] + r[k])
}

/// Adaptive Simpson with Richardson correction, started from a uniform
/// split so narrow features are not missed.
pub fn adaptive_simpson<const N: usize, F: Fn(f64) -> [f64; N]>(f: F, a: f64, b: f64, tol: f64) -> [f64; N] {
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    let mut total = [0.0; N];
    for i in 0..pieces {
        let lo = a + h * i as f64;
        let hi = lo + h;
        let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
        let whole = simpson(fa, fm, fb, hi - lo);
        let part = simpson_step(&f, lo, hi, fa, fm, fb, whole, tol / pieces as f64, 40);
        for k in 0..N {
            total[k] += part[k];
        }
    }
    total
}

/// `(Z, mean, variance)` of `Φ(label·(x − m)/v)·N(x | μ, σ²)`.
pub fn tilted_moments(mu: f64, var: f64, label: f64, m: f64, v: f64) -> (f64, f64, f64) {
    let sd = var.sqrt();
    let s = label * v;
    let integrand = |t: f64| {
        let x = mu + sd * t;
        let w = phi((x - m) / s) * pdf(t);
        [w, t * w, t * t * w]
    };
    let rough = adaptive_simpson(integrand, -14.0, 14.0, 1e-10)[0];
    let [z, t1, t2] = adaptive_simpson(integrand, -14.0, 14.0, 1e-13 * rough.min(1.0));
    // moments of the standardized variable, mapped back
    let mean_t = t1 / z;
    let var_t = t2 / z - mean_t * mean_t;
    (z, mu + sd * mean_t, var * var_t)
}

/// `E[Φ(f)²]` for `f ~ N(0, s²)`.
pub fn expected_phi_squared(s2: f64) -> f64 {
    let s = s2.sqrt();
    adaptive_simpson(|t| [phi(s * t).powi(2) * pdf(t)], -14.0, 14.0, 1e-13)[0]
}

/// Posterior predictive at the training input of a single `+1` point with
/// prior variance `s2`, by quadrature of the exact posterior.
pub fn single_point_predictive(s2: f64) -> f64 {
    let s = s2.sqrt();
    let [num, den] = adaptive_simpson(
        |t| {
            let p = phi(s * t);
            [p * p * pdf(t), p * pdf(t)]
        },
        -14.0,
        14.0,
        1e-13,
    );
    num / den
}

pub fn standard_normal_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Random inputs with both labels present once `n ≥ 2`.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let x = (0..n).map(|_| standard_normal_vec(rng, d)).collect();
    let mut y: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    y[0] = 1.0;
    if n > 1 {
        y[1] = -1.0;
    }
    (x, y)
}

fn gram(kernel: &Kernel, xs: &[Vec<f64>]) -> DMatrix<f64> {
    let n = xs.len();
    DMatrix::from_fn(n, n, |i, j| {
        let d2: f64 = xs[i].iter().zip(&xs[j]).map(|(a, b)| (a - b) * (a - b)).sum();
        kernel.signal_variance * (-0.5 * d2 / (kernel.lengthscale * kernel.lengthscale)).exp()
    })
}

/// `p(y_* = +1)` under the exact posterior, by importance-weighting prior
/// draws with the probit likelihood.
pub fn mc_predict(kernel: &Kernel, x: &[Vec<f64>], y: &[f64], x_star: &[f64], samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut all = x.to_vec();
    all.push(x_star.to_vec());
    let n = all.len();
    let k = gram(kernel, &all) + DMatrix::identity(n, n) * 1e-9;
    let l = k.cholesky().expect("prior covariance").l();
    let mut z = DVector::zeros(n);
    let (mut num, mut den) = (0.0, 0.0);
    for _ in 0..samples {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let f = &l * &z;
        let w: f64 = (0..n - 1).map(|i| phi(y[i] * f[i])).product();
        num += w * phi(f[n - 1]);
        den += w;
    }
    num / den
}

/// Bivariate latent Gaussian at two test inputs, from the model's cached
/// posterior over training latents, by explicit inversion of the Gram
/// matrix.
pub fn latent_pair(model: &GpcModel, a: &[f64], b: &[f64]) -> ([f64; 2], [[f64; 2]; 2]) {
    let kernel = model.kernel;
    let n = model.train_x.len();
    let mut all = model.train_x.clone();
    all.push(a.to_vec());
    all.push(b.to_vec());
    let k = gram(&kernel, &all);
    if n == 0 {
        return ([0.0; 2], [[k[(0, 0)], k[(0, 1)]], [k[(1, 0)], k[(1, 1)]]]);
    }
    let kxx = k.view((0, 0), (n, n)).into_owned() + DMatrix::identity(n, n) * (1e-10 * kernel.signal_variance);
    let ktx = k.view((n, 0), (2, n)).into_owned();
    let ktt = k.view((n, n), (2, 2)).into_owned();
    let inv = kxx.try_inverse().expect("gram invertible");
    let a_mat = &ktx * &inv;
    let mean = &a_mat * &model.posterior_mean;
    let cov = ktt - &a_mat * ktx.transpose() + &a_mat * &model.posterior_cov * a_mat.transpose();
    ([mean[0], mean[1]], [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]])
}

/// `p(y_s, y_*)` table `[y_s][y_*]` by sampling the latent pair and
/// averaging probit products.
pub fn mc_joint(mean: [f64; 2], cov: [[f64; 2]; 2], samples: usize, rng: &mut ChaCha8Rng) -> [[f64; 2]; 2] {
    let l11 = cov[0][0].max(0.0).sqrt();
    let l21 = if l11 > 0.0 { cov[1][0] / l11 } else { 0.0 };
    let l22 = (cov[1][1] - l21 * l21).max(0.0).sqrt();
    let mut t = [[0.0; 2]; 2];
    for _ in 0..samples {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let ps = phi(mean[0] + l11 * z1);
        let pt = phi(mean[1] + l21 * z1 + l22 * z2);
        t[0][0] += (1.0 - ps) * (1.0 - pt);
        t[0][1] += (1.0 - ps) * pt;
        t[1][0] += ps * (1.0 - pt);
        t[1][1] += ps * pt;
    }
    let n = samples as f64;
    t.map(|r| r.map(|v| v / n))
}

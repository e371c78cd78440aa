//! Fast self-checks against independent oracles, small enough to run in a
//! few seconds. The full suites live in the test targets.

use egpc::active::{acquire_alu, acquire_salu};
use egpc::channel::{cascade_channel, estimate_fingerprint, path_loss_db, pilot_matrix};
use egpc::gaussian::probit_gaussian_moments;
use egpc::gpc::ep_fit;
use egpc::quadrature::{integrate, QuadratureOptions};
use egpc::{normal, AcquisitionConfig, EpOptions, Gaussian1D, Kernel};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Check {
    name: &'static str,
    worst: f64,
    tolerance: f64,
}

impl Check {
    fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

fn probit_moments() -> Check {
    let mut worst: f64 = 0.0;
    for &mu in &[-4.0, -1.5, 0.0, 0.7, 3.0] {
        for &var in &[0.05, 0.5, 1.0, 4.0] {
            let sd: f64 = f64::sqrt(var);
            let dens = |x: f64| normal::cdf(x) * (-(x - mu) * (x - mu) / (2.0 * var)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
            let [z, m1, m2] = integrate(
                |x| {
                    let d = dens(x);
                    [d, x * d, x * x * d]
                },
                mu - 12.0 * sd,
                mu + 12.0 * sd,
                QuadratureOptions {
                    abs_tol: 1e-13,
                    max_intervals: 2000,
                },
            )
            .expect("quadrature converges");
            let m = probit_gaussian_moments(Gaussian1D::new(mu, var), 1.0, 0.0, 1.0).expect("moments");
            let mean = m1 / z;
            worst = worst
                .max((m.norm - z).abs())
                .max((m.mean - mean).abs())
                .max((m.variance - (m2 / z - mean * mean)).abs());
        }
    }
    Check {
        name: "probit-Gaussian moments vs quadrature",
        worst,
        tolerance: 1e-8,
    }
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut y: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    y[0] = 1.0;
    if n > 1 {
        y[1] = -1.0;
    }
    (x, y)
}

/// Predictive probability by likelihood-weighted prior sampling.
fn mc_predict(kernel: &Kernel, x: &[Vec<f64>], y: &[f64], x_star: &[f64], samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut all = x.to_vec();
    all.push(x_star.to_vec());
    let n = all.len();
    let k = kernel.gram(&all) + DMatrix::identity(n, n) * 1e-10;
    let l = k.cholesky().expect("prior gram is PD").l();
    let (mut num, mut den) = (0.0, 0.0);
    for _ in 0..samples {
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let f = &l * z;
        let w: f64 = (0..n - 1).map(|i| normal::cdf(y[i] * f[i])).product();
        num += w * normal::cdf(f[n - 1]);
        den += w;
    }
    num / den
}

fn predictive(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let n = rng.random_range(1..=4);
        let d = rng.random_range(2..=8);
        let (x, y) = random_problem(&mut rng, n, d);
        let kernel = Kernel::new(rng.random_range(0.5..3.0), rng.random_range(0.5..3.0)).expect("kernel");
        let model = ep_fit(x.clone(), y.clone(), kernel, EpOptions::default()).expect("fit");
        let x_star: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let p = model.predict(&x_star).expect("predict");
        worst = worst.max((p - mc_predict(&kernel, &x, &y, &x_star, 200_000, &mut rng)).abs());
    }
    Check {
        name: "EP predictive vs Monte-Carlo posterior",
        worst,
        tolerance: 0.03,
    }
}

fn joint_marginals(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let (x, y) = random_problem(&mut rng, 4, 3);
        let model = ep_fit(x, y, Kernel::new(1.0, 1.0).expect("kernel"), EpOptions::default()).expect("fit");
        let a: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let j = model.joint_predict(&a, &b).expect("joint");
        worst = worst
            .max((j.marginal_s(1) - model.predict(&a).expect("predict")).abs())
            .max((j.marginal_star(1) - model.predict(&b).expect("predict")).abs());
    }
    Check {
        name: "joint predictive marginals vs predict",
        worst,
        tolerance: 1e-4,
    }
}

fn salu_limit(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa11);
    let mut mismatches = 0;
    for i in 0..10 {
        let (x, y) = random_problem(&mut rng, 6, 2);
        let model = ep_fit(x, y, Kernel::new(1.0, 1.0).expect("kernel"), EpOptions::default()).expect("fit");
        let pool: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let mut config = AcquisitionConfig {
            m1: 10,
            m2: 10,
            seed: seed.wrapping_add(i),
            ..AcquisitionConfig::default()
        };
        let alu = acquire_alu(&model, &pool, &config).expect("alu");
        config.softmax_k = 1e6;
        let salu = acquire_salu(&model, &pool, &config).expect("salu");
        if alu.chosen_pool_index() != salu.chosen_pool_index() {
            mismatches += 1;
        }
    }
    Check {
        name: "smooth utility at k = 1e6 selects like the hard utility",
        worst: mismatches as f64,
        tolerance: 0.0,
    }
}

fn simulator() -> Check {
    let hand = 32.4 + 21.0 * 25f64.log10() + 20.0 * 3.5f64.log10();
    let mut worst = (path_loss_db(25.0, 3.5, true) - hand).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = DMatrix::from_fn(4, 6, |_, _| Complex64::new(rng.random(), rng.random()));
    let g = DMatrix::from_fn(6, 2, |_, _| Complex64::new(rng.random(), rng.random()));
    let psi = DVector::from_fn(6, |i, _| Complex64::from_polar(0.8, i as f64));
    let q = cascade_channel(&h, &psi, &g).expect("cascade");
    let x = estimate_fingerprint(&q, &pilot_matrix(2, 2.0), 0.0, &mut rng).expect("estimate");
    worst = worst.max((x - q).camax());
    Check {
        name: "path loss and noiseless pilot inversion",
        worst,
        tolerance: 1e-9,
    }
}

/// Run every check, printing one line each. True when all pass.
pub fn run_all(seed: u64) -> bool {
    let checks = [
        probit_moments(),
        predictive(seed),
        joint_marginals(seed),
        salu_limit(seed),
        simulator(),
    ];
    let mut ok = true;
    for c in &checks {
        let tag = if c.passed() { "PASS" } else { "FAIL" };
        println!("{tag} {:<58} worst {:.3e} (tolerance {:.0e})", c.name, c.worst, c.tolerance);
        ok &= c.passed();
    }
    ok
}

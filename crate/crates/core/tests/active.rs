mod common;

use egpc::active::{
    acquire, acquire_alu, acquire_mes, acquire_random, acquire_ro, acquire_salu, bald_score,
    inclusion_probabilities, soft_max2, systematic_sample, TestSet, UtilityForm,
};
use egpc::gpc::GpcModel;
use egpc::metrics::spearman;
use egpc::normal;
use egpc::{
    egpc_loop, ep_fit, AcquisitionConfig, EpOptions, Error, Identity, Kernel, KernelPolicy, LabelOracle, LoopConfig,
    Pools, SimulatedOracle, Strategy,
};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn small_instance(seed: u64, n: usize, pool: usize) -> (GpcModel, Vec<Vec<f64>>) {
    let mut rng = common::rng(seed);
    let (x, y) = common::random_instance(&mut rng, n, 2);
    let model = ep_fit(x, y, Kernel::new(1.0, 1.0).unwrap(), EpOptions::default()).unwrap();
    let pool = (0..pool).map(|_| common::standard_normal_vec(&mut rng, 2)).collect();
    (model, pool)
}

fn config(strategy: Strategy, m1: usize, m2: usize, seed: u64) -> AcquisitionConfig {
    AcquisitionConfig {
        strategy,
        m1,
        m2,
        seed,
        ..AcquisitionConfig::default()
    }
}

/// `E_{y_*}[max_{y_s} p(y_s | x_s, x_*, y_*)] − max_{y_s} p(y_s | x_s)`
/// averaged uniformly over the whole pool, from the conditional predictive.
fn uniform_full_pool_utility(model: &GpcModel, pool: &[Vec<f64>], c: usize) -> f64 {
    let p_star = model.predict(&pool[c]).unwrap();
    let mut total = 0.0;
    for x in pool {
        let p_s = model.predict(x).unwrap();
        let hi = model.conditional_predict(x, &pool[c], 1.0).unwrap();
        let lo = model.conditional_predict(x, &pool[c], -1.0).unwrap();
        let expected = p_star * hi.max(1.0 - hi) + (1.0 - p_star) * lo.max(1.0 - lo);
        total += expected - p_s.max(1.0 - p_s);
    }
    total / pool.len() as f64
}

#[test]
fn soft_max_example() {
    assert!((soft_max2(0.5, 0.5, 10.0) - 0.5693).abs() < 1e-4);
    assert!((soft_max2(0.5, 0.5, 10.0) - (0.5 + 2f64.ln() / 10.0)).abs() < 1e-15);
    assert!((soft_max2(0.9, 0.1, 1e6) - 0.9).abs() < 1e-12);
}

#[test]
fn single_candidate_is_chosen() {
    let (model, pool) = small_instance(1, 4, 10);
    for s in [Strategy::Ro, Strategy::Alu, Strategy::Salu, Strategy::Mes, Strategy::Bald] {
        let r = acquire(&model, &pool, &config(s, 1, 5, 9)).unwrap();
        assert_eq!(r.candidates.len(), 1);
        assert_eq!(r.chosen, 0);
    }
}

#[test]
fn mes_prefers_uncertain_candidates() {
    let x = vec![vec![0.0], vec![1.0]];
    let model = ep_fit(x, vec![-1.0, 1.0], Kernel::new(4.0, 0.5).unwrap(), EpOptions::default()).unwrap();
    // a far point sits at 0.5
    let pool = vec![vec![1.1], vec![500.0], vec![-0.1]];
    let r = acquire_mes(&model, &pool, &config(Strategy::Mes, 3, 1, 0)).unwrap();
    assert_eq!(r.chosen_pool_index(), 1);

    let entropy = |p: f64| normal::binary_entropy(p);
    assert!(entropy(0.6) > entropy(0.9));
}

#[test]
fn mes_ties_go_to_the_first_candidate() {
    let model = GpcModel::prior(Kernel::new(1.0, 1.0).unwrap());
    let pool = vec![vec![0.0], vec![1.0], vec![2.0]];
    let r = acquire_mes(&model, &pool, &config(Strategy::Mes, 3, 1, 0)).unwrap();
    assert_eq!(r.chosen, 0);
}

#[test]
fn bald_examples() {
    assert!(bald_score(0.0, 0.0).abs() < 1e-12);
    let mut prev = 0.0;
    for var in [0.1, 0.5, 1.0, 4.0, 16.0] {
        let s = bald_score(0.0, var);
        assert!(s > prev);
        prev = s;
    }
    for (m, v) in [(0.0, 1.0), (1.5, 0.3), (-2.0, 5.0)] {
        let s = bald_score(m, v);
        let h = normal::binary_entropy(normal::cdf(m / (1.0f64 + v).sqrt()));
        assert!(s <= h + 1e-12 && h <= 2f64.ln() + 1e-12);
    }
}

#[test]
fn bald_matches_monte_carlo_mutual_information() {
    let mut rng = common::rng(17);
    for (m, v) in [(0.0, 1.0), (0.0, 4.0), (0.8, 2.0)] {
        let n = 1_000_000;
        let sd: f64 = f64::sqrt(v);
        let mut expected = 0.0;
        for _ in 0..n {
            let f = m + sd * rng.sample::<f64, _>(StandardNormal);
            expected += normal::binary_entropy(common::phi(f));
        }
        expected /= n as f64;
        let exact = normal::binary_entropy(common::phi(m / (1.0 + v).sqrt())) - expected;
        // the closed form approximates h(Φ(f)) by a Gaussian bump
        assert!((bald_score(m, v) - exact).abs() < 0.01, "{} vs {exact}", bald_score(m, v));
    }
}

/// Pointwise gains can only go negative by as much as the refitted
/// predictives fail to average back to the current one.
#[test]
fn retraining_gains_are_bounded_by_predictive_consistency() {
    for seed in 0..5 {
        let (model, pool) = small_instance(seed, 6, 10);
        let r = acquire_ro(&model, &pool, &config(Strategy::Ro, 10, 10, seed)).unwrap();
        let mut negative = 0;
        for &c in &r.candidates {
            let p_star = model.predict(&pool[c]).unwrap();
            let lo = model.retrain_with(&pool[c], -1.0).unwrap();
            let hi = model.retrain_with(&pool[c], 1.0).unwrap();
            for x in &pool {
                let p_s = model.predict(x).unwrap();
                let cond = [lo.predict(x).unwrap(), hi.predict(x).unwrap()];
                let gain = p_star * cond[1].max(1.0 - cond[1]) + (1.0 - p_star) * cond[0].max(1.0 - cond[0])
                    - p_s.max(1.0 - p_s);
                let drift = ((1.0 - p_star) * cond[0] + p_star * cond[1] - p_s).abs();
                assert!(drift < 2e-3, "seed {seed}: {drift}");
                assert!(gain >= -drift - 1e-12, "seed {seed}: {gain} vs {drift}");
                negative += usize::from(gain < -1e-6);
            }
        }
        assert_eq!(r.eer_violations, negative);
        assert!(r.utilities.iter().all(|&u| u >= -1e-3), "{:?}", r.utilities);
    }
}

#[test]
fn certain_candidates_have_little_utility() {
    let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 * 0.1]).collect();
    let y = vec![1.0; 8];
    let model = ep_fit(x, y, Kernel::new(50.0, 1.0).unwrap(), EpOptions::default()).unwrap();
    let pool = vec![vec![0.35], vec![0.4], vec![0.05]];
    let p = model.predict(&pool[0]).unwrap();
    assert!(p > 0.98, "{p}");
    let ro = acquire_ro(&model, &pool, &config(Strategy::Ro, 3, 3, 0)).unwrap();
    let alu = acquire_alu(&model, &pool, &config(Strategy::Alu, 3, 3, 0)).unwrap();
    for u in ro.utilities.iter().chain(&alu.utilities) {
        assert!(u.abs() < 0.01, "{u}");
    }
}

#[test]
fn far_candidates_only_inform_themselves() {
    let (model, mut pool) = small_instance(2, 4, 5);
    let narrow = ep_fit(
        model.train_x.clone(),
        model.train_y.clone(),
        Kernel::new(1.0, 1e-3).unwrap(),
        EpOptions::default(),
    )
    .unwrap();
    pool.push(vec![1e3, 1e3]);
    let r = acquire_alu(&narrow, &pool, &config(Strategy::Alu, 6, 6, 0)).unwrap();
    let far = r.candidates.iter().position(|&c| c == 5).unwrap();
    // a repeat label at the same input: E[Φ(f)²]/½ − ½, once in six
    let own = common::expected_phi_squared(1.0) / 0.5 - 0.5;
    assert!((r.utilities[far] - own / 6.0).abs() < 1e-6, "{}", r.utilities[far]);
    assert_eq!(r.isolated, 0);
}

#[test]
fn full_pool_importance_sampling_is_exact() {
    for seed in 0..5 {
        let (model, pool) = small_instance(100 + seed, 5, 9);
        let r = acquire_alu(&model, &pool, &config(Strategy::Alu, 9, 9, seed)).unwrap();
        for (i, &c) in r.candidates.iter().enumerate() {
            let oracle = uniform_full_pool_utility(&model, &pool, c);
            assert!((r.utilities[i] - oracle).abs() < 1e-9, "{} vs {oracle}", r.utilities[i]);
        }
    }
}

#[test]
fn inclusion_probabilities_sum_to_sample_size() {
    let w = [5.0, 1.0, 1.0, 0.5, 0.0, 2.5];
    let pi = inclusion_probabilities(&w, 3);
    assert!((pi.iter().sum::<f64>() - 3.0).abs() < 1e-12);
    assert!(pi.iter().all(|&p| (0.0..=1.0).contains(&p)));
    assert_eq!(pi[0], 1.0);
    assert_eq!(pi[4], 0.0);
    let mut rng = common::rng(0);
    let s = systematic_sample(&pi, &mut rng);
    assert_eq!(s.len(), 3);
    assert!(s.contains(&0));
    assert!(!s.contains(&4));
}

#[test]
fn systematic_sampling_hits_inclusion_probabilities() {
    let w = [3.0, 1.0, 1.0, 2.0, 0.5, 0.5];
    let pi = inclusion_probabilities(&w, 2);
    let mut counts = [0usize; 6];
    let mut rng = common::rng(5);
    let draws = 200_000;
    for _ in 0..draws {
        for i in systematic_sample(&pi, &mut rng) {
            counts[i] += 1;
        }
    }
    for i in 0..6 {
        let freq = counts[i] as f64 / draws as f64;
        assert!((freq - pi[i]).abs() < 0.01, "{i}: {freq} vs {}", pi[i]);
    }
}

#[test]
fn acquisitions_are_deterministic_given_the_seed() {
    let (model, pool) = small_instance(7, 5, 12);
    for s in Strategy::ALL {
        let a = acquire(&model, &pool, &config(s, 6, 6, 42)).unwrap();
        let b = acquire(&model, &pool, &config(s, 6, 6, 42)).unwrap();
        assert_eq!(a.candidates, b.candidates);
        assert_eq!(a.utilities, b.utilities);
        assert_eq!(a.chosen, b.chosen);
    }
}

#[test]
fn random_strategy_uses_the_whole_pool() {
    let pool: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
    let mut seen = [false; 5];
    for seed in 0..200 {
        seen[acquire_random(&pool, &config(Strategy::Random, 1, 1, seed)).unwrap().chosen_pool_index()] = true;
    }
    assert!(seen.iter().all(|&s| s));
}

#[test]
fn empty_pool_is_exhausted() {
    let (model, _) = small_instance(0, 3, 0);
    for s in Strategy::ALL {
        assert!(matches!(
            acquire(&model, &[], &config(s, 3, 3, 0)),
            Err(Error::PoolExhausted { .. })
        ));
    }
}

#[test]
fn alu_tracks_retraining_on_small_instances() {
    let mut agree = 0;
    let mut rhos = Vec::new();
    for seed in 0..20 {
        let (model, pool) = small_instance(1000 + seed, 2 + (seed as usize % 7), 12);
        let c = config(Strategy::Alu, 12, 12, seed);
        let alu = acquire_alu(&model, &pool, &c).unwrap();
        let ro = acquire_ro(&model, &pool, &c).unwrap();
        assert_eq!(alu.candidates, ro.candidates);
        agree += usize::from(alu.chosen == ro.chosen);
        let rho = spearman(&alu.utilities, &ro.utilities);
        if rho.is_finite() {
            rhos.push(rho);
        }
        for (a, r) in alu.utilities.iter().zip(&ro.utilities) {
            assert!((a - r).abs() < 0.05, "seed {seed}: {a} vs {r}");
        }
    }
    rhos.sort_by(f64::total_cmp);
    assert!(agree >= 16, "{agree}/20");
    assert!(rhos[rhos.len() / 2] >= 0.8, "{rhos:?}");
}

fn pools_from(x: &[Vec<f64>], truth: &[Identity], labeled: &[usize]) -> Pools {
    let mut pools = Pools::default();
    for (i, v) in x.iter().enumerate() {
        if labeled.contains(&i) {
            pools.labeled.x.push(v.clone());
            pools.labeled.y.push(truth[i]);
        } else {
            pools.unlabeled.x.push(v.clone());
            pools.unlabeled.ids.push(i);
        }
    }
    pools
}

/// Two Gaussian blobs, one per identity.
fn blobs(seed: u64, per_class: usize) -> (Vec<Vec<f64>>, Vec<Identity>) {
    let mut rng = common::rng(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..2 * per_class {
        let id = if i < per_class { Identity::Alice } else { Identity::Eve };
        let c = if id == Identity::Alice { -1.0 } else { 1.0 };
        x.push(vec![c + 0.8 * rng.sample::<f64, _>(StandardNormal), 0.8 * rng.sample::<f64, _>(StandardNormal)]);
        y.push(id);
    }
    (x, y)
}

fn loop_config(strategy: Strategy, iterations: usize) -> LoopConfig {
    LoopConfig {
        acquisition: AcquisitionConfig {
            strategy,
            m1: 10,
            m2: 20,
            seed: 3,
            ..AcquisitionConfig::default()
        },
        iterations,
        ..LoopConfig::default()
    }
}

#[test]
fn zero_iterations_give_one_record() {
    let (x, y) = blobs(1, 30);
    let (tx, ty) = blobs(2, 20);
    let test = TestSet { x: tx, y: ty };
    let mut pools = pools_from(&x, &y, &[0, 30]);
    let mut oracle = SimulatedOracle::new(y.clone());
    let out = egpc_loop(&mut pools, &mut oracle, &test, &loop_config(Strategy::Salu, 0)).unwrap();
    assert_eq!(out.curve.len(), 1);
    assert_eq!(out.curve[0].iteration, 0);
    assert_eq!(out.curve[0].labeled, 2);
    assert_eq!(oracle.queries(), 0);
}

#[test]
fn loop_moves_one_sample_per_iteration() {
    let (x, y) = blobs(3, 30);
    let (tx, ty) = blobs(4, 20);
    let test = TestSet { x: tx, y: ty };
    for s in Strategy::ALL {
        let mut pools = pools_from(&x, &y, &[0, 30]);
        let mut oracle = SimulatedOracle::new(y.clone());
        let out = egpc_loop(&mut pools, &mut oracle, &test, &loop_config(s, 6)).unwrap();
        assert_eq!(out.curve.len(), 7);
        assert_eq!(oracle.queries(), 6);
        assert_eq!(pools.labeled.x.len(), 8);
        assert_eq!(pools.unlabeled.x.len(), 52);
        for (t, r) in out.curve.iter().enumerate() {
            assert_eq!(r.iteration, t);
            assert_eq!(r.labeled, 2 + t);
            assert!((0.0..=1.0).contains(&r.error_rate));
        }
        // no fingerprint sits in both pools
        for v in &pools.labeled.x {
            assert!(!pools.unlabeled.x.contains(v));
        }
    }
}

#[test]
fn loop_is_reproducible() {
    let (x, y) = blobs(5, 25);
    let (tx, ty) = blobs(6, 10);
    let test = TestSet { x: tx, y: ty };
    let run = |s| {
        let mut pools = pools_from(&x, &y, &[0, 25]);
        let mut oracle = SimulatedOracle::new(y.clone());
        let out = egpc_loop(&mut pools, &mut oracle, &test, &loop_config(s, 5)).unwrap();
        (out.curve.iter().map(|r| (r.labeled, r.error_rate)).collect::<Vec<_>>(), pools)
    };
    for s in [Strategy::Random, Strategy::Salu] {
        let (a, pa) = run(s);
        let (b, pb) = run(s);
        assert_eq!(a, b);
        assert_eq!(pa, pb);
    }
}

#[test]
fn loop_learns_separated_blobs() {
    let (x, y) = blobs(7, 60);
    let (tx, ty) = blobs(8, 50);
    let test = TestSet { x: tx, y: ty };
    let mut pools = pools_from(&x, &y, &[0, 60]);
    let mut oracle = SimulatedOracle::new(y.clone());
    let out = egpc_loop(&mut pools, &mut oracle, &test, &loop_config(Strategy::Salu, 15)).unwrap();
    let last = out.curve.last().unwrap().error_rate;
    assert!(last <= out.curve[0].error_rate);
    assert!(last < 0.2, "{last}");
}

#[test]
fn loop_reports_exhaustion_and_missing_classes() {
    let (x, y) = blobs(9, 3);
    let test = TestSet {
        x: x.clone(),
        y: y.clone(),
    };
    let mut pools = pools_from(&x, &y, &[0, 3]);
    let mut oracle = SimulatedOracle::new(y.clone());
    let err = egpc_loop(&mut pools, &mut oracle, &test, &loop_config(Strategy::Random, 5)).unwrap_err();
    assert!(matches!(err.error, Error::PoolExhausted { .. }));
    assert!(err.curve.is_empty());

    let mut one_class = pools_from(&x, &y, &[0, 1]);
    let err = egpc_loop(&mut one_class, &mut oracle, &test, &loop_config(Strategy::Random, 1)).unwrap_err();
    assert!(matches!(err.error, Error::InvalidInput(_)));
}

#[test]
fn fixed_kernel_policy_skips_the_search() {
    let (x, y) = blobs(10, 20);
    let test = TestSet {
        x: x.clone(),
        y: y.clone(),
    };
    let mut pools = pools_from(&x, &y, &[0, 20]);
    let mut oracle = SimulatedOracle::new(y.clone());
    let mut c = loop_config(Strategy::Mes, 2);
    c.kernel_policy = KernelPolicy::Fixed {
        signal_variance: 2.0,
        lengthscale: 0.7,
    };
    let out = egpc_loop(&mut pools, &mut oracle, &test, &c).unwrap();
    assert_eq!(out.kernel, Kernel::new(2.0, 0.7).unwrap());
}

#[test]
fn strategy_names_round_trip() {
    for s in Strategy::ALL {
        assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
    }
    assert!("greedy".parse::<Strategy>().is_err());
}

#[test]
fn soft_ro_utility_switch() {
    let (model, pool) = small_instance(12, 5, 8);
    let mut c = config(Strategy::Ro, 8, 8, 1);
    let hard = acquire_ro(&model, &pool, &c).unwrap();
    c.ro_utility = UtilityForm::Soft;
    let soft = acquire_ro(&model, &pool, &c).unwrap();
    assert_ne!(hard.utilities, soft.utilities);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn smooth_utility_converges_to_the_hard_one(seed in 0u64..10_000, k in 1e4..1e7f64) {
        let (model, pool) = small_instance(seed, 4, 8);
        let c = config(Strategy::Alu, 8, 5, seed);
        let alu = acquire_alu(&model, &pool, &c).unwrap();
        let salu = acquire_salu(&model, &pool, &AcquisitionConfig { softmax_k: k, ..c }).unwrap();
        prop_assert_eq!(&alu.candidates, &salu.candidates);
        for (a, s) in alu.utilities.iter().zip(&salu.utilities) {
            prop_assert!((a - s).abs() <= 2.0 * 2f64.ln() / k + 1e-12);
        }
    }

    #[test]
    fn chosen_candidate_attains_the_maximum(seed in 0u64..10_000, strategy in 0usize..6) {
        let (model, pool) = small_instance(seed, 4, 10);
        let s = Strategy::ALL[strategy];
        let r = acquire(&model, &pool, &config(s, 6, 6, seed)).unwrap();
        let best = r.utilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(r.utilities[r.chosen], best);
        prop_assert!(r.utilities[..r.chosen].iter().all(|&u| u < best));
    }
}

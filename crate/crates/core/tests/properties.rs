use hscore::experiments::{auc, gen_k0, roc_curve, support_of, ExperimentConfig};
use hscore::expfam::{assemble_quadratic, empirical_loss, ExpFamily, TruncatedGaussianFamily};
use hscore::hfuncs::{shared, HFunction};
use hscore::linalg::min_eigenvalue;
use hscore::tggm::{assemble_centered, fit_regularized, FitOptions};
use hscore::truncated_normal::{sample, stream_rng, SamplerMethod, SamplerOptions, TnParams};
use hscore::univariate::{asym_var, Target, UnivariateTask};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn builtin() -> impl Strategy<Value = HFunction> {
    prop_oneof![
        (0.5f64..3.0).prop_map(|a| HFunction::power(a).unwrap()),
        Just(HFunction::log1p()),
        (0.5f64..3.0, 0.5f64..5.0).prop_map(|(a, c)| HFunction::truncated_power(a, c).unwrap()),
        (0.5f64..5.0).prop_map(|c| HFunction::truncated_log1p(c).unwrap()),
        (0.5f64..5.0, 0.2f64..2.0).prop_map(|(k, s)| HFunction::mcp(k, s).unwrap()),
        (0.5f64..5.0, 0.2f64..2.0).prop_map(|(k, s)| HFunction::scad(k, s).unwrap()),
    ]
}

fn data_matrix(max_m: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max_m, 5usize..25).prop_flat_map(|(m, n)| {
        prop::collection::vec(0.0f64..4.0, n * m).prop_map(move |v| DMatrix::from_row_slice(n, m, &v))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derivative_matches_finite_differences(h in builtin(), x in 0.01f64..100.0) {
        let step = 1e-6 * x.max(1.0);
        prop_assume!(h.kink_points().iter().all(|k| (x - k).abs() > 10.0 * step));
        let (_, d) = h.eval(x).unwrap();
        let fd = (h.eval(x + step).unwrap().0 - h.eval(x - step).unwrap().0) / (2.0 * step);
        prop_assert!((d - fd).abs() <= 1e-6 * d.abs().max(1.0), "{h}: {d} vs {fd}");
    }

    #[test]
    fn truncation_follows_the_base_then_flattens(a in 0.5f64..3.0, c in 0.5f64..5.0, x in 0.0f64..10.0) {
        let t = HFunction::truncated_power(a, c).unwrap();
        let base = HFunction::power(a).unwrap();
        let (v, d) = t.eval(x).unwrap();
        if x < c {
            prop_assert_eq!((v, d), base.eval(x).unwrap());
        } else if x > c {
            prop_assert_eq!(d, 0.0);
            prop_assert!((v - c.powf(a)).abs() <= 1e-12 * v);
        }
        let tl = HFunction::truncated_log1p(c).unwrap();
        if x < c {
            prop_assert_eq!(tl.eval(x).unwrap(), HFunction::log1p().eval(x).unwrap());
        } else if x > c {
            prop_assert_eq!(tl.eval(x).unwrap().1, 0.0);
        }
    }

    #[test]
    fn declared_bounds_hold(h in builtin(), x in 0.0f64..100.0) {
        let (v, d) = h.eval(x).unwrap();
        if let Some(b) = h.bound() {
            prop_assert!(v <= b * (1.0 + 1e-12));
        }
        if let Some(b) = h.bound_derivative() {
            prop_assert!(d <= b * (1.0 + 1e-12));
        }
        prop_assert!(v >= 0.0 && d >= 0.0);
    }

    #[test]
    fn gamma_is_psd_and_loss_is_the_quadratic(data in data_matrix(3), centered in any::<bool>(), h in builtin(), seed in 0u64..1000) {
        let m = data.ncols();
        let fam = TruncatedGaussianFamily::new(m, centered);
        let hv = shared(&h, m);
        let q = assemble_quadratic(&fam, &data, &hv).unwrap();
        prop_assert!(min_eigenvalue(&q.gamma) >= -1e-9 * q.gamma.amax().max(1.0));
        let mut rng = stream_rng(seed, 0);
        let consts: Vec<f64> = (0..10)
            .map(|_| {
                let theta = DVector::from_fn(fam.r(), |_, _| rand::Rng::random_range(&mut rng, -2.0..2.0));
                empirical_loss(&fam, &theta, &data, &hv).unwrap() - q.value(&theta)
            })
            .collect();
        let spread = consts.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - consts.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let scale = consts.iter().map(|c| c.abs()).fold(1.0, f64::max) + q.gamma.amax() + q.g.amax();
        prop_assert!(spread <= 1e-10 * scale, "spread {spread}");
    }

    #[test]
    fn fits_are_symmetric_with_consistent_support(data in data_matrix(4), lambda in 0.0f64..0.5) {
        let m = data.ncols();
        prop_assume!(data.column_iter().all(|c| c.amax() > 0.0) && data.nrows() > m);
        let q = assemble_centered(&data, &shared(&HFunction::truncated_power(1.0, 3.0).unwrap(), m)).unwrap();
        if let Ok(fit) = fit_regularized(&q, lambda, &FitOptions::default()) {
            prop_assert_eq!(&fit.k, &fit.k.transpose());
            prop_assert_eq!(&fit.support, &support_of(&fit.k));
            prop_assert!(fit.kkt_residual <= 1e-9);
        }
    }

    #[test]
    fn sampler_is_deterministic(seed in 0u64..1_000_000, gibbs in any::<bool>()) {
        let mut k = DMatrix::identity(3, 3);
        k[(0, 2)] = 0.3;
        k[(2, 0)] = 0.3;
        let p = TnParams::with_mu(k, DVector::from_vec(vec![0.5, -0.5, 0.0])).unwrap();
        let opts = SamplerOptions { method: if gibbs { SamplerMethod::Gibbs } else { SamplerMethod::Rejection }, ..Default::default() };
        let a = sample(&p, 50, seed, &opts).unwrap().data;
        prop_assert_eq!(&a, &sample(&p, 50, seed, &opts).unwrap().data);
        prop_assert!(a.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn roc_points_lie_in_the_unit_square(seed in 0u64..10_000, fits in prop::collection::vec(prop::collection::vec(any::<bool>(), 45), 1..8)) {
        let config = ExperimentConfig { m: 10, ..Default::default() };
        let k = gen_k0(&config, &mut stream_rng(seed, 0)).unwrap();
        let truth = support_of(&k);
        prop_assume!(!truth.is_empty() && truth.len() < 45);
        let pairs: Vec<(usize, usize)> = (0..10).flat_map(|j| (0..j).map(move |i| (i, j))).collect();
        let supports: Vec<Vec<(usize, usize)>> =
            fits.iter().map(|mask| pairs.iter().zip(mask).filter(|(_, &b)| b).map(|(&p, _)| p).collect()).collect();
        let roc = roc_curve(&supports, &truth, 10).unwrap();
        prop_assert!(roc.fpr.iter().chain(&roc.tpr).all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(roc.fpr.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!((roc.fpr[0], roc.tpr[0]), (0.0, 0.0));
        prop_assert_eq!((*roc.fpr.last().unwrap(), *roc.tpr.last().unwrap()), (1.0, 1.0));
        let a = auc(&roc);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn generated_k0_is_block_diagonal(seed in 0u64..10_000, m in 2usize..16, blocks in 1usize..4, pi in 0.0f64..1.0) {
        prop_assume!(m % blocks == 0);
        let config = ExperimentConfig { m, n_blocks: blocks, pi, ..Default::default() };
        let k = gen_k0(&config, &mut stream_rng(seed, 0)).unwrap();
        let size = m / blocks;
        for i in 0..m {
            for j in 0..m {
                if i / size != j / size {
                    prop_assert_eq!(k[(i, j)], 0.0);
                } else if i != j && k[(i, j)] != 0.0 {
                    prop_assert!((0.5..=1.0).contains(&k[(i, j)]));
                }
            }
        }
        prop_assert_eq!(&k, &k.transpose());
        prop_assert!((min_eigenvalue(&k) - 0.1).abs() < 1e-9);
    }

    #[test]
    fn mean_asymptotic_variance_ignores_the_scale_of_h(c in prop::sample::select(vec![0.1, 2.0, 10.0]), mu0 in -1.0f64..2.0) {
        let scaled = HFunction::custom("scaled", move |x| (c * x.ln_1p(), c / (1.0 + x)), None, None);
        let base = HFunction::log1p();
        let v1 = asym_var(&UnivariateTask::new(Target::Mu, 1.0, base).unwrap(), mu0).unwrap();
        let v2 = asym_var(&UnivariateTask::new(Target::Mu, 1.0, scaled).unwrap(), mu0).unwrap();
        prop_assert!((v1 - v2).abs() <= 1e-10 * v1);
    }
}

fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn samplers_agree_in_one_dimension() {
    let p = TnParams::with_mu(DMatrix::from_element(1, 1, 2.0), DVector::from_element(1, 0.3)).unwrap();
    let draw = |method| {
        let opts = SamplerOptions { method, ..Default::default() };
        sample(&p, 100_000, 17, &opts).unwrap().data.column(0).iter().copied().collect::<Vec<f64>>()
    };
    let d = ks_distance(&draw(SamplerMethod::Rejection), &draw(SamplerMethod::Gibbs));
    assert!(d <= 0.01, "KS distance {d}");
}

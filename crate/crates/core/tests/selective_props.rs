use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use ssc_core::linalg::{normalize_columns, random_orthonormal_basis, PointCloud};
use ssc_core::selective::{
    code_pointcloud_selective, reweight_extended, selective_dantzig_extend,
    subspace_selector_extend, ExtendedSupport, SelectionMethod,
};
use ssc_core::solvers::{code_pointcloud, Estimator, PenaltyForm};
use ssc_core::synth::{generate_two_cluster_sphere, mix_seed, SweepConfig};
use ssc_core::SolverSettings;

/// The two sweep clusters at `angle` plus 20 points on an unrelated
/// 3-dimensional subspace, labelled 0, 1 and 2.
fn with_distractor(angle: f64, trial: u64) -> PointCloud {
    let cfg = SweepConfig::default();
    let pair = generate_two_cluster_sphere(&cfg, angle, 0.0, trial).unwrap();
    let b = random_orthonormal_basis(cfg.ambient_dim, 3, mix_seed(&[trial, 99])).unwrap();
    let mut rng_state = mix_seed(&[trial, 100]);
    let coeffs = DMatrix::from_fn(3, 20, |_, _| {
        rng_state = mix_seed(&[rng_state]);
        (rng_state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    });
    let other = b.matrix() * coeffs;
    let n = pair.len();
    let mut data = DMatrix::zeros(cfg.ambient_dim, n + 20);
    data.columns_mut(0, n).copy_from(pair.data());
    data.columns_mut(n, 20).copy_from(&other);
    let mut labels = pair.labels().unwrap().to_vec();
    labels.extend(std::iter::repeat_n(2, 20));
    normalize_columns(&data).unwrap().with_labels(labels).unwrap()
}

struct Recall {
    success: usize,
    total: usize,
    cross_added: usize,
}

fn recall(method: SelectionMethod, trials: u64) -> Recall {
    let cfg = SweepConfig::default();
    let settings = SolverSettings::default().with_lambda(cfg.lambda);
    let mut out = Recall { success: 0, total: 0, cross_added: 0 };
    for trial in 0..trials {
        let cloud = with_distractor(45.0, trial);
        let labels = cloud.labels().unwrap().to_vec();
        let coded = code_pointcloud_selective(&cloud, method, &settings, cfg.delta, 20).unwrap();
        for (j, ext) in coded.extensions.iter().enumerate().take(40) {
            let ext = ext.as_ref().unwrap();
            let other = 1 - labels[j];
            let cross = ext.added.iter().filter(|&&k| labels[k] == other).count();
            let distractors = ext.added.iter().filter(|&&k| labels[k] == 2).count();
            out.total += 1;
            out.cross_added += cross;
            if cross > 0 && distractors == 0 {
                out.success += 1;
            }
        }
    }
    out
}

#[test]
fn extensions_reach_across_the_gap_but_not_into_other_subspaces() {
    let dz = recall(SelectionMethod::Dantzig, 10);
    let sub = recall(SelectionMethod::Subspace, 10);
    eprintln!("dantzig {}/{} (cross {}), subspace {}/{} (cross {})", dz.success, dz.total, dz.cross_added, sub.success, sub.total, sub.cross_added);
    assert!(dz.success as f64 >= 0.9 * dz.total as f64);
    assert!(sub.success as f64 >= 0.9 * sub.total as f64);
    assert!(sub.cross_added >= dz.cross_added);
}

#[test]
fn infinite_delta_keeps_base_supports() {
    let cfg = SweepConfig::default();
    let cloud = generate_two_cluster_sphere(&cfg, 45.0, 0.02, 0).unwrap();
    let settings = SolverSettings::default().with_lambda(cfg.lambda);
    let base = code_pointcloud(&cloud, Estimator::Lasso(PenaltyForm::Unsquared), &settings).unwrap();
    for method in [SelectionMethod::Dantzig, SelectionMethod::Subspace] {
        let coded = code_pointcloud_selective(&cloud, method, &settings, f64::INFINITY, 20).unwrap();
        for (j, ext) in coded.extensions.iter().enumerate() {
            let ext = ext.as_ref().unwrap();
            assert!(ext.added.is_empty());
            assert_eq!(ext.original_support, base.solutions[j].as_ref().unwrap().support);
        }
    }
}

#[test]
fn angle_zero_extension_stays_near_base_connectivity() {
    use ssc_core::graph::{build_affinity, connectivity_xi};
    let cfg = SweepConfig::default();
    let settings = SolverSettings::default().with_lambda(cfg.lambda);
    let mut base_xi = 0.0;
    let mut ext_xi = [0.0; 2];
    for trial in 0..10 {
        let cloud = generate_two_cluster_sphere(&cfg, 0.0, 0.0, trial).unwrap();
        let base = code_pointcloud(&cloud, Estimator::Lasso(PenaltyForm::Unsquared), &settings).unwrap();
        base_xi += connectivity_xi(&build_affinity(&base.coefficients), 20, 20).unwrap().xi / 10.0;
        for (i, m) in [SelectionMethod::Dantzig, SelectionMethod::Subspace].into_iter().enumerate() {
            let e = ssc_core::selective::extend_coding(&cloud, &base, m, cfg.delta, 20).unwrap();
            ext_xi[i] += connectivity_xi(&build_affinity(&e.coding.coefficients), 20, 20).unwrap().xi / 10.0;
        }
    }
    for xi in ext_xi {
        assert!((xi - base_xi).abs() <= 0.05, "{xi} vs {base_xi}");
    }
}

#[test]
fn reweighting_matches_pseudoinverse_on_duplicates() {
    let x = DMatrix::from_row_slice(3, 4, &[
        1.0, 1.0, 0.0, 0.6,
        0.0, 0.0, 1.0, 0.8,
        0.0, 0.0, 0.0, 0.0,
    ]);
    let cloud = normalize_columns(&x).unwrap();
    let ext = ExtendedSupport {
        point_index: 3,
        original_support: vec![0],
        added: vec![1, 2],
        scores: vec![1.0, 0.5],
        delta: 0.1,
        rounds: 2,
    };
    let w = reweight_extended(&cloud, 3, &ext).unwrap();
    let xs = cloud.data().columns(0, 3).into_owned();
    let pinv = xs.clone().pseudo_inverse(1e-12).unwrap();
    let reference = (pinv * cloud.point(3)).abs();
    for k in 0..3 {
        assert!((w[k] - reference[k]).abs() < 1e-10);
    }
    assert_eq!(w[3], 0.0);
    assert!((w[0] - 0.3).abs() < 1e-10 && (w[1] - 0.3).abs() < 1e-10);
}

fn random_cloud(seed: u64, m: usize, n: usize) -> PointCloud {
    let mut s = seed;
    let data = DMatrix::from_fn(m, n, |_, _| {
        s = mix_seed(&[s]);
        (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    });
    normalize_columns(&data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn extension_invariants(seed in any::<u64>(), delta in 0.05f64..0.95, rounds in 0usize..12) {
        let cloud = random_cloud(seed, 4, 12);
        let support = vec![1, 4];
        for ext in [
            selective_dantzig_extend(&cloud, 0, &support, delta, rounds).unwrap(),
            subspace_selector_extend(&cloud, 0, &support, delta, rounds).unwrap(),
        ] {
            prop_assert_eq!(&ext.original_support, &support);
            prop_assert_eq!(ext.added.len(), ext.rounds);
            prop_assert!(ext.rounds <= rounds.min(12 - 1 - support.len()));
            prop_assert!(!ext.added.contains(&0));
            prop_assert!(ext.scores.iter().all(|&s| s > delta));
            let mut set = ext.extended_set();
            set.sort_unstable();
            set.dedup();
            prop_assert_eq!(set.len(), ext.len());
        }
        let sub = subspace_selector_extend(&cloud, 0, &support, delta, rounds).unwrap();
        prop_assert!(sub.scores.iter().all(|&s| s <= 1.0 + 1e-12));
    }

    #[test]
    fn selectors_are_rotation_invariant(seed in any::<u64>(), rot in any::<u64>()) {
        let cloud = random_cloud(seed, 5, 14);
        let q = random_orthonormal_basis(5, 5, rot).unwrap();
        let rotated = cloud.map_data(|x| q.matrix() * x).unwrap();
        let support = vec![2, 3, 7];
        let a = selective_dantzig_extend(&cloud, 0, &support, 0.2, 8).unwrap();
        let b = selective_dantzig_extend(&rotated, 0, &support, 0.2, 8).unwrap();
        prop_assert_eq!(a.added, b.added);
        let a = subspace_selector_extend(&cloud, 0, &support, 0.2, 8).unwrap();
        let b = subspace_selector_extend(&rotated, 0, &support, 0.2, 8).unwrap();
        prop_assert_eq!(a.added, b.added);
    }

    #[test]
    fn reweight_is_nonnegative_and_hollow(seed in any::<u64>()) {
        let cloud = random_cloud(seed, 4, 9);
        let ext = selective_dantzig_extend(&cloud, 3, &[0, 5], 0.1, 5).unwrap();
        let w: DVector<f64> = reweight_extended(&cloud, 3, &ext).unwrap();
        prop_assert!(w.iter().all(|&v| v >= 0.0 && v.is_finite()));
        prop_assert_eq!(w[3], 0.0);
    }
}

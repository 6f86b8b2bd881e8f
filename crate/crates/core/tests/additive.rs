mod common;

use std::collections::BTreeSet;

use common::{randn_vec, rng, uniform};
use kbl_core::additive::{
    fit_mkl, fit_nbp, fit_spam, mu_grid, Basis, BasisFn, BasisSet, Reduction, TrainingSet,
};
use kbl_core::grouplasso::{solve_bcd, BcdOptions, Block, BlockProblem};
use kbl_core::kernels::{gram, ridge_solve, GramMatrix, JitterPolicy, KernelSpec, Point};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

fn scalar_points(v: &[f64]) -> Vec<Point> {
    v.iter().map(|&x| Point::scalar(x).unwrap()).collect()
}

#[test]
fn spam_selects_the_active_coordinate() {
    let mut r = rng(21);
    let n = 40;
    let inputs: Vec<Point> =
        (0..n).map(|_| Point::new(vec![uniform(&mut r, -2.0, 2.0), uniform(&mut r, -2.0, 2.0)]).unwrap()).collect();
    let z = DVector::from_fn(n, |i, _| {
        let x0 = inputs[i].coords()[0];
        (1.5 * x0).sin() + 0.05 * Distribution::<f64>::sample(&StandardNormal, &mut r)
    });
    let data = TrainingSet::new(inputs, z).unwrap();
    let kernels = vec![KernelSpec::gaussian(1.0).unwrap(); 2];
    let red = Reduction::spam(&data, &kernels).unwrap();
    let grid = mu_grid(red.mu_max() / 100.0);
    let models = red.fit_path(&grid, &BcdOptions::default()).unwrap();
    let hit = models.iter().any(|m| m.support(0.0) == BTreeSet::from([0]));
    assert!(hit, "supports: {:?}", models.iter().map(|m| m.support(0.0)).collect::<Vec<_>>());
}

#[test]
fn mkl_single_kernel_matches_ridge_at_calibrated_mu() {
    let mut r = rng(22);
    let xs: Vec<f64> = (0..15).map(|_| uniform(&mut r, 0.0, 5.0)).collect();
    let pts = scalar_points(&xs);
    let z = randn_vec(&mut r, 15);
    let spec = KernelSpec::gaussian(0.7).unwrap();
    let data = TrainingSet::new(pts.clone(), z.clone()).unwrap();
    let red = Reduction::mkl(&data, std::slice::from_ref(&spec)).unwrap();
    let opts = BcdOptions { tol: 1e-15, ..BcdOptions::default() };
    for frac in [0.05, 0.2, 0.6] {
        let mu = frac * red.mu_max();
        let model = red.fit(mu, &opts, None).unwrap();
        let g = &model.gammas()[0];
        let k = gram(&spec, &pts, JitterPolicy::Never).unwrap();
        let norm = g.dot(&(&k.entries * g)).sqrt();
        // Stationarity of the unsquared penalty gives (K + μ/‖γ‖_K I)γ = z.
        let alpha = ridge_solve(&k, &z, mu / norm).unwrap();
        let ridge_fitted = &k.entries * alpha;
        assert!((model.fitted() - ridge_fitted).amax() < 1e-8, "frac {frac}");
    }
}

#[test]
fn mkl_selects_wide_kernel_on_smooth_data() {
    let mut r = rng(23);
    let n = 30;
    let xs: Vec<f64> = (0..n).map(|_| uniform(&mut r, -20.0, 20.0)).collect();
    let pts = scalar_points(&xs);
    // Draw from a GP with the wide kernel.
    let wide = KernelSpec::gaussian(10.0).unwrap();
    let k = gram(&wide, &pts, JitterPolicy::Escalate).unwrap();
    let l = k.entries.clone().cholesky().unwrap().l();
    let z = &l * randn_vec(&mut r, n) + randn_vec(&mut r, n) * 0.01;
    let data = TrainingSet::new(pts, z).unwrap();
    let dict = vec![wide, KernelSpec::gaussian(0.1).unwrap()];
    let red = Reduction::mkl(&data, &dict).unwrap();
    let grid = mu_grid(red.mu_max() / 100.0);
    let models = red.fit_path(&grid, &BcdOptions::default()).unwrap();
    assert!(models.iter().any(|m| m.support(0.0) == BTreeSet::from([0])));
    assert!(fit_mkl(&data, &dict, 0.5 * red.mu_max()).is_ok());
}

fn nbp_instance(seed: u64, n: usize) -> (TrainingSet, Vec<f64>) {
    let mut r = rng(seed);
    let xs: Vec<f64> = (0..n).map(|_| uniform(&mut r, 0.0, 4.0)).collect();
    let ys: Vec<f64> = (0..n).map(|_| uniform(&mut r, 0.0, 1.0)).collect();
    let z = randn_vec(&mut r, n);
    (TrainingSet::with_side(scalar_points(&xs), ys.clone(), z).unwrap(), ys)
}

#[test]
fn nbp_constant_basis_collapses_to_single_block() {
    let (data, _) = nbp_instance(24, 12);
    let spec = KernelSpec::gaussian(1.0).unwrap();
    let red = Reduction::nbp(&data, &BasisSet::constant(), std::slice::from_ref(&spec)).unwrap();
    let mu = 0.3 * red.mu_max();
    let nbp = red.fit(mu, &BcdOptions::default(), None).unwrap();
    let k = gram(&spec, data.inputs(), JitterPolicy::Never).unwrap().entries;
    let direct = BlockProblem::new(data.targets().clone(), vec![Block::new(k.clone(), k)], mu).unwrap();
    let sol = solve_bcd(&direct, 1e-13, 20_000).unwrap();
    assert!((nbp.fitted() - direct.fitted(&sol.gammas)).amax() < 1e-10);
}

#[test]
fn reported_objective_matches_recomputation() {
    let (data, _) = nbp_instance(25, 20);
    let bases = BasisSet::new(
        (0..4)
            .map(|i| Basis { name: format!("b{i}"), func: BasisFn::Hann { center: 0.25 * i as f64 + 0.125, width: 0.5 } })
            .collect(),
    );
    let kernels = vec![KernelSpec::gaussian(0.5).unwrap(), KernelSpec::gaussian(2.0).unwrap()];
    let red = Reduction::nbp(&data, &bases, &kernels).unwrap();
    for frac in [0.01, 0.1, 0.5, 1.1] {
        let model = red.fit(frac * red.mu_max(), &BcdOptions::default(), None).unwrap();
        let recomputed = model.recompute_objective();
        assert!((model.objective() - recomputed).abs() <= 1e-12 * (1.0 + recomputed.abs()));
        // Predictor reproduces the fitted values at the training points.
        let fitted = model.fitted();
        for n in 0..data.len() {
            let p = model.predict(&data.inputs()[n], Some(data.side().unwrap()[n])).unwrap();
            assert!((p - fitted[n]).abs() < 1e-10);
        }
    }
    assert!(red.fit(1.1 * red.mu_max(), &BcdOptions::default(), None).unwrap().support(0.0).is_empty());
}

#[test]
fn nested_mu_solutions_are_optimal_for_their_own_mu() {
    let (data, _) = nbp_instance(26, 16);
    let bases = BasisSet::new(
        (0..3).map(|i| Basis { name: format!("b{i}"), func: BasisFn::Hann { center: 0.33 * i as f64 + 0.17, width: 0.6 } }).collect(),
    );
    let red = Reduction::nbp(&data, &bases, &[KernelSpec::gaussian(1.0).unwrap()]).unwrap();
    let grid = mu_grid(red.mu_max() / 100.0);
    let models = red.fit_path(&grid, &BcdOptions::default()).unwrap();
    for i in 0..grid.len() {
        for j in i + 1..grid.len() {
            let own = models[i].objective();
            let other = models[i].problem.objective(models[j].gammas());
            assert!(other >= own - 1e-9 * (1.0 + own.abs()), "mu {} vs {}", grid[i], grid[j]);
        }
    }
}

#[test]
fn distinct_bases_give_distinct_designs() {
    let (data, _) = nbp_instance(27, 10);
    let bases = BasisSet::new(vec![
        Basis { name: "lo".into(), func: BasisFn::Hann { center: 0.3, width: 1.0 } },
        Basis { name: "hi".into(), func: BasisFn::Hann { center: 0.7, width: 1.0 } },
    ]);
    let red = Reduction::nbp(&data, &bases, &[KernelSpec::gaussian(1.0).unwrap()]).unwrap();
    let blocks = red.problem().blocks();
    assert_eq!(blocks.len(), 2);
    assert!((&blocks[0].design - &blocks[1].design).amax() > 1e-6);
    assert!((&blocks[0].penalty - &blocks[1].penalty).amax() == 0.0);
}

#[test]
fn small_mu_nearly_interpolates() {
    let mut r = rng(28);
    let xs: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
    let z = randn_vec(&mut r, 10);
    let data = TrainingSet::new(scalar_points(&xs), z.clone()).unwrap();
    let kernels = vec![KernelSpec::gaussian(0.5).unwrap(), KernelSpec::gaussian(0.8).unwrap()];
    let coarse = fit_mkl(&data, &kernels, 1e-2).unwrap();
    let fine = fit_mkl(&data, &kernels, 1e-6).unwrap();
    let res = |m: &kbl_core::additive::AdditiveModel| -> f64 {
        (0..10).map(|n| (m.predict(&data.inputs()[n], None).unwrap() - z[n]).abs()).fold(0.0, f64::max)
    };
    assert!(res(&fine) < res(&coarse));
    assert!(res(&fine) < 1e-4, "{}", res(&fine));
}

#[test]
fn zero_targets_give_empty_support() {
    let (mut data, ys) = nbp_instance(29, 8);
    data = TrainingSet::with_side(data.inputs().to_vec(), ys, DVector::zeros(8)).unwrap();
    let spec = KernelSpec::gaussian(1.0).unwrap();
    assert!(fit_nbp(&data, &BasisSet::constant(), std::slice::from_ref(&spec), 0.1).unwrap().support(0.0).is_empty());
    let plain = TrainingSet::new(data.inputs().to_vec(), DVector::zeros(8)).unwrap();
    assert!(fit_spam(&plain, std::slice::from_ref(&spec), 0.1).unwrap().support(0.0).is_empty());
    assert!(fit_mkl(&plain, &[spec.clone(), spec], 0.1).unwrap().support(0.0).is_empty());
}

#[test]
fn nbp_requires_side_values() {
    let (data, _) = nbp_instance(30, 6);
    let model = fit_nbp(&data, &BasisSet::constant(), &[KernelSpec::gaussian(1.0).unwrap()], 0.01).unwrap();
    assert!(model.predict(&data.inputs()[0], None).is_err());
    let plain = TrainingSet::new(data.inputs().to_vec(), data.targets().clone()).unwrap();
    assert!(fit_nbp(&plain, &BasisSet::constant(), &[KernelSpec::gaussian(1.0).unwrap()], 0.01).is_err());
}

#[test]
fn gram_matrix_wrapper_rejects_bad_shapes() {
    assert!(GramMatrix::from_matrix(DMatrix::zeros(2, 3)).is_err());
}

//! Independent reference computations for the library's numerical kernels.

mod common;

use std::f64::consts::PI;

use common::{degenerate_model, deterministic_wmmse, random_matrix, random_psd, random_vector, real_embedding, report, rng};
use limfb::eval::sum_rate;
use limfb::feedback::{
    build_pilot_matrix, estimate_gmm, estimate_lmmse, gmm_feedback_index, omp_recover, oversampled_dictionary,
    OmpStop, PilotSetup,
};
use limfb::gmm::{
    fit_em, log_density, project_to_observation, sample_component, toeplitz_mstep, Constraint, EmOptions,
    GmmModel, ToeplitzDictionary,
};
use limfb::linalg::{c64, real, CMatrix, CVector};
use limfb::precoder::{directional_representative, rci_precoders, swmmse_precoders, SwmmseOptions};
use limfb::rng::complex_normal_vector;
use limfb::scene::{ArrayGeometry, ChannelDataset};

#[test]
fn log_density_matches_explicit_inverse_and_determinant() {
    let mut r = rng(11);
    let cov = random_psd(&mut r, 3, 0.3);
    let mean = random_vector(&mut r, 3);
    let x = random_vector(&mut r, 3);
    let d = &x - &mean;
    let inv = cov.clone().try_inverse().unwrap();
    let quad = (d.adjoint() * inv * &d)[(0, 0)].re;
    let det = cov.determinant().re;
    let expected = -3.0 * PI.ln() - det.ln() - quad;
    assert!((log_density(&x, &mean, &cov).unwrap() - expected).abs() < 1e-10);
}

#[test]
fn em_recovers_two_separated_clusters() {
    let mut r = rng(12);
    let n = 4;
    let std = 0.5;
    let mu = [CVector::from_element(n, c64(2.0, 1.0)), CVector::from_element(n, c64(-2.0, -1.0))];
    let l = 4000;
    let samples: Vec<CVector> =
        (0..l).map(|i| &mu[i % 2] + complex_normal_vector(&mut r, n) * real(std)).collect();
    let ds = ChannelDataset::new(samples, true).unwrap();
    let fit = fit_em(&ds, 2, Constraint::Full, &EmOptions { seed: 5, ..Default::default() }).unwrap();
    let bound = 3.0 * std / ((l / 2) as f64).sqrt();
    let m = &fit.model;
    let order = if (&m.component(0).mean - &mu[0]).norm() < (&m.component(1).mean - &mu[0]).norm() { [0, 1] } else { [1, 0] };
    for (k, truth) in order.iter().zip(&mu) {
        let err = (&m.component(*k).mean - truth).camax();
        assert!(err < bound, "mean error {err} exceeds {bound}");
    }
    for w in fit.report.loglik.windows(2) {
        assert!(w[1] >= w[0] - 1e-8 * w[0].abs());
    }
}

fn nnls_brute_force(design: &nalgebra::DMatrix<f64>, target: &nalgebra::DVector<f64>) -> f64 {
    // Enumerate active sets; the NNLS optimum is the best nonnegative
    // unconstrained fit on some subset.
    let atoms = design.ncols();
    let mut best = target.norm();
    for mask in 1u32..(1 << atoms) {
        let cols: Vec<usize> = (0..atoms).filter(|i| mask & (1 << i) != 0).collect();
        let sub = nalgebra::DMatrix::from_fn(design.nrows(), cols.len(), |i, j| design[(i, cols[j])]);
        let svd = sub.clone().svd(true, true);
        let coef = svd.solve(target, 1e-12).unwrap();
        if coef.iter().all(|&c| c >= -1e-12) {
            best = best.min((&sub * coef - target).norm());
        }
    }
    best
}

#[test]
fn toeplitz_projection_of_identity_matches_nnls() {
    let dict = ToeplitzDictionary::new(2, 2).unwrap();
    let d = dict.matrix();
    let s = CMatrix::identity(4, 4);
    let c = toeplitz_mstep(&dict, &s, 1e-12).unwrap();
    let realized = dict.realize(&c);
    let residual = (&realized - &s).norm();
    // vec(D^H diag(c) D) is linear in c; stack real and imaginary parts.
    let atoms = dict.num_atoms();
    let design = nalgebra::DMatrix::from_fn(32, atoms, |row, a| {
        let idx = row % 16;
        let (i, j) = (idx % 4, idx / 4);
        let v = d[(a, i)].conj() * d[(a, j)];
        if row < 16 {
            v.re
        } else {
            v.im
        }
    });
    let target = nalgebra::DVector::from_fn(32, |row, _| if row < 16 && row % 4 == row / 4 { 1.0 } else { 0.0 });
    let oracle = nnls_brute_force(&design, &target);
    assert!((residual - oracle).abs() < 1e-6, "{residual} vs {oracle}");
}

#[test]
fn component_samples_match_moments() {
    let mut r = rng(13);
    let cov = random_psd(&mut r, 4, 0.5);
    let mean = random_vector(&mut r, 4);
    let model = GmmModel::from_full(vec![0.5, 0.5], vec![CVector::zeros(4), mean.clone()], vec![CMatrix::identity(4, 4), cov.clone()]).unwrap();
    let count = 100_000;
    let draws = sample_component(&model, 1, count, 3).unwrap();
    let emp_mean = draws.iter().fold(CVector::zeros(4), |a, x| a + x) / real(count as f64);
    let scale = cov.diagonal().iter().map(|d| d.re).fold(0.0, f64::max).sqrt();
    assert!((&emp_mean - &mean).camax() < 5.0 * scale / (count as f64).sqrt());
    let mut emp_cov = CMatrix::zeros(4, 4);
    for x in &draws {
        let d = x - &emp_mean;
        emp_cov += &d * d.adjoint();
    }
    emp_cov /= real(count as f64);
    assert!((&emp_cov - &cov).norm() / cov.norm() < 0.05);
}

#[test]
fn pilot_noise_has_the_configured_covariance() {
    let geometry = ArrayGeometry::new(2, 4, 1.0, 0.5).unwrap();
    let setup = build_pilot_matrix(&geometry, 3, 1.0).unwrap().with_noise(0.2);
    let h = random_vector(&mut rng(14), 8);
    let clean = &setup.p * &h;
    let count = 100_000;
    let mut cov = CMatrix::zeros(3, 3);
    for i in 0..count {
        let y = limfb::feedback::observe(&setup, &h, i as u64).unwrap();
        let n = y - &clean;
        cov += &n * n.adjoint();
    }
    cov /= real(count as f64);
    let target = CMatrix::identity(3, 3) * real(0.2);
    assert!((&cov - &target).norm() / target.norm() < 0.05);
}

#[test]
fn separated_observation_model_picks_generating_component() {
    let n = 4;
    let model = GmmModel::from_full(
        vec![0.5, 0.5],
        vec![CVector::from_element(n, c64(3.0, 0.0)), CVector::from_element(n, c64(-3.0, 0.0))],
        vec![CMatrix::identity(n, n) * real(0.5); 2],
    )
    .unwrap();
    let geometry = ArrayGeometry::new(1, n, 0.5, 0.5).unwrap();
    let setup = build_pilot_matrix(&geometry, 2, 1.0).unwrap().with_noise(0.1);
    let obs = project_to_observation(&model, &setup).unwrap();
    let draws = 10_000;
    let h = sample_component(&model, 1, draws, 9).unwrap();
    let hits = h
        .iter()
        .enumerate()
        .filter(|(i, h)| {
            let y = limfb::feedback::observe(&setup, h, 1000 + *i as u64).unwrap();
            gmm_feedback_index(&obs, &y).unwrap().index == 1
        })
        .count();
    assert!(hits as f64 / draws as f64 >= 0.99, "{hits}");
}

#[test]
fn gmm_estimate_matches_scalar_observation_formula() {
    let mut r = rng(15);
    let weights = [0.3, 0.7];
    let means = [random_vector(&mut r, 2), random_vector(&mut r, 2)];
    let covs = [random_psd(&mut r, 2, 0.2), random_psd(&mut r, 2, 0.2)];
    let model = GmmModel::from_full(weights.to_vec(), means.to_vec(), covs.to_vec()).unwrap();
    let p = random_matrix(&mut r, 1, 2);
    let setup = PilotSetup { p: p.clone(), sigma_n2: 0.3, rho: 1.0 };
    let y = random_vector(&mut r, 1);
    // Scalar observation: y ~ CN(p mu_k, p C_k p^H + sigma^2).
    let mut post = [0.0; 2];
    let mut local = Vec::new();
    for k in 0..2 {
        let m = (&p * &means[k])[0];
        let v = (&p * &covs[k] * p.adjoint())[(0, 0)].re + 0.3;
        post[k] = weights[k] / (PI * v) * (-(y[0] - m).norm_sqr() / v).exp();
        local.push(&means[k] + &covs[k] * p.adjoint().column(0) * ((y[0] - m) / v));
    }
    let total: f64 = post.iter().sum();
    let expected = &local[0] * real(post[0] / total) + &local[1] * real(post[1] / total);
    let got = estimate_gmm(&model, &setup, &y).unwrap();
    assert!((got - expected).norm() < 1e-10);
}

#[test]
fn gmm_with_one_component_is_lmmse() {
    let mut r = rng(16);
    let mean = random_vector(&mut r, 6);
    let cov = random_psd(&mut r, 6, 0.1);
    let model = GmmModel::from_full(vec![1.0], vec![mean.clone()], vec![cov.clone()]).unwrap();
    let setup = PilotSetup { p: random_matrix(&mut r, 3, 6), sigma_n2: 0.05, rho: 1.0 };
    for _ in 0..10 {
        let y = random_vector(&mut r, 3);
        let a = estimate_gmm(&model, &setup, &y).unwrap();
        let b = estimate_lmmse(&mean, &cov, &setup, &y).unwrap();
        assert!((a - b).norm() < 1e-10);
    }
}

#[test]
fn omp_two_sparse_support_matches_exhaustive_search() {
    let geometry = ArrayGeometry::new(2, 8, 1.0, 0.5).unwrap();
    let setup = build_pilot_matrix(&geometry, 8, 1.0).unwrap();
    let dict = oversampled_dictionary(2, 8, 2);
    let sensing = &setup.p * &dict;
    // Atoms 0 and 40 sit on sampled pilot beams that differ in both the
    // vertical and the horizontal index, so no atom straddles both.
    let (i, j) = (0, 40);
    let norms = [sensing.column(i).norm(), sensing.column(j).norm()];
    assert!((norms[0] - 1.0).abs() < 1e-12 && (norms[1] - 1.0).abs() < 1e-12);
    assert!(sensing.column(i).dotc(&sensing.column(j)).norm() < 1e-12);
    let h = dict.column(i) * c64(1.0, 0.5) + dict.column(j) * c64(-0.7, 0.2);
    let y = &setup.p * h;
    let stop = OmpStop { residual_threshold: 1e-9, max_support: 2 };
    let got = omp_recover(&sensing, &y, &stop).unwrap();
    let mut best = (f64::INFINITY, (0, 0));
    for a in 0..dict.ncols() {
        for b in a + 1..dict.ncols() {
            let sub = CMatrix::from_columns(&[sensing.column(a), sensing.column(b)]);
            let coef = sub.clone().svd(true, true).solve(&y, 1e-12).unwrap();
            let res = (&sub * coef - &y).norm();
            if res < best.0 {
                best = (res, (a, b));
            }
        }
    }
    let mut support = got.support.clone();
    support.sort();
    assert_eq!(support, vec![best.1 .0, best.1 .1]);
    assert_eq!(support, vec![i, j]);
}

#[test]
fn directional_representative_matches_real_embedding_eigenvector() {
    let mut r = rng(17);
    let cov = random_psd(&mut r, 4, 0.0);
    let mean = random_vector(&mut r, 4) * real(0.3);
    let corr = &cov + &mean * mean.adjoint();
    let model = GmmModel::from_full(vec![1.0], vec![mean], vec![cov]).unwrap();
    let rep = directional_representative(&model, 0).unwrap().vector;
    let eig = real_embedding(&corr).symmetric_eigen();
    let top = eig.eigenvalues.imax();
    let col = eig.eigenvectors.column(top);
    let oracle = CVector::from_fn(4, |i, _| c64(col[i], col[i + 4]));
    let oracle = &oracle / real(oracle.norm());
    let overlap = oracle.dotc(&rep).norm();
    assert!((overlap - 1.0).abs() < 1e-8, "{overlap}");
}

#[test]
fn rci_matches_explicit_regularized_inverse() {
    let mut r = rng(18);
    let reps = vec![random_vector(&mut r, 2), random_vector(&mut r, 2)];
    let (sigma, rho) = (0.4, 2.0);
    let alpha = 2.0 * sigma / rho;
    let mut gram = CMatrix::identity(2, 2) * real(alpha);
    for h in &reps {
        gram += h.conjugate() * h.transpose();
    }
    // 2x2 inverse by the adjugate.
    let det = gram[(0, 0)] * gram[(1, 1)] - gram[(0, 1)] * gram[(1, 0)];
    let inv = CMatrix::from_row_slice(2, 2, &[gram[(1, 1)], -gram[(0, 1)], -gram[(1, 0)], gram[(0, 0)]]) / det;
    let u: Vec<CVector> = reps.iter().map(|h| &inv * h.conjugate()).collect();
    let power: f64 = u.iter().map(|x| x.norm_squared()).sum();
    let beta = (rho / power).sqrt();
    let got = rci_precoders(&reps, sigma, rho).unwrap();
    for (v, x) in got.vectors.iter().zip(&u) {
        assert!((v - x * real(beta)).norm() < 1e-12);
    }
}

#[test]
fn sum_rate_matches_term_by_term_formula() {
    let mut r = rng(19);
    for _ in 0..100 {
        let h = vec![random_vector(&mut r, 2), random_vector(&mut r, 2)];
        let v = vec![random_vector(&mut r, 2), random_vector(&mut r, 2)];
        let sigma = 0.3;
        let gain = |j: usize, m: usize| (h[j][0] * v[m][0] + h[j][1] * v[m][1]).norm_sqr();
        let expected = (1.0 + gain(0, 0) / (gain(0, 1) + sigma)).log2() + (1.0 + gain(1, 1) / (gain(1, 0) + sigma)).log2();
        let got = sum_rate(&h, &v, sigma).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected);
    }
}

#[test]
fn swmmse_single_user_reaches_capacity() {
    let mu = random_vector(&mut rng(20), 4);
    let (sigma, rho) = (0.1, 1.0);
    let model = degenerate_model(vec![mu.clone(), -mu.clone()]);
    let opts = SwmmseOptions { seed: 1, ..Default::default() };
    let p = swmmse_precoders(&model, &[report(0, 0)], sigma, rho, &opts).unwrap();
    let rate = sum_rate(std::slice::from_ref(&mu), &p.vectors, sigma).unwrap();
    let capacity = (1.0 + rho * mu.norm_squared() / sigma).log2();
    assert!((rate - capacity).abs() <= 0.01 * capacity, "{rate} vs {capacity}");
}

#[test]
fn swmmse_two_users_matches_deterministic_wmmse() {
    let mut r = rng(21);
    let mu = vec![random_vector(&mut r, 2), random_vector(&mut r, 2)];
    let (sigma, rho) = (0.1, 1.0);
    let model = degenerate_model(mu.clone());
    let opts = SwmmseOptions { seed: 2, ..Default::default() };
    let reports = [report(0, 0), report(1, 1)];
    let p = swmmse_precoders(&model, &reports, sigma, rho, &opts).unwrap();
    assert!(p.total_power() <= rho + 1e-6);
    let reps: Vec<CVector> = (0..2).map(|k| directional_representative(&model, k).unwrap().vector).collect();
    let init = rci_precoders(&reps, sigma, rho).unwrap().vectors;
    let oracle = deterministic_wmmse(&mu, init, sigma, rho, 300);
    let got = sum_rate(&mu, &p.vectors, sigma).unwrap();
    let expected = sum_rate(&mu, &oracle, sigma).unwrap();
    assert!((got - expected).abs() <= 0.02 * expected, "{got} vs {expected}");
}

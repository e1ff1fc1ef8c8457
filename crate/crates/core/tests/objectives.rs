use armagm::freqgrid::{eval_matrix, eval_scalar};
use armagm::moments::{CepstralSeq, CovarianceSeq};
use armagm::objectives::{
    dual_j, ell_check, ell_tilde, g_lambda, grad_smooth, whittle_nll, Objective, SmoothKind, VarLayout,
};
use armagm::{
    DualPoint, EdgeSet, FrequencyGrid, GammaWeights, MatrixTrigPoly, ProblemData, ScalarTrigPoly, SpectrumGrid,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_point(rng: &mut ChaCha8Rng, m: usize, n_p: usize, n_q: usize) -> DualPoint {
    let p = ScalarTrigPoly::monic((0..n_p).map(|_| rng.random_range(-0.3..0.3)).collect());
    let mut q0 = DMatrix::from_fn(m, m, |_, _| rng.random_range(-0.2..0.2));
    q0 = (&q0 + q0.transpose()) * 0.5 + DMatrix::identity(m, m) * 2.0;
    let qk = (0..n_q).map(|_| DMatrix::from_fn(m, m, |_, _| rng.random_range(-0.2..0.2))).collect();
    DualPoint::new(p, MatrixTrigPoly::new(q0, qk, None).unwrap()).unwrap()
}

fn random_data(rng: &mut ChaCha8Rng, m: usize, n_p: usize, n_q: usize, grid: FrequencyGrid) -> ProblemData {
    // moments of a random rational spectrum, so the problem is well posed
    let model = random_point(rng, m, n_p, n_q);
    let phi = armagm::freqgrid::rational_spectrum(&model.p, &model.q, &grid).unwrap();
    let r = armagm::moments::spectrum_covariances(&phi, n_q).unwrap();
    let c = armagm::moments::cepstral_coefficients(&phi, n_p).unwrap();
    let mut d = ProblemData::new(r, c, EdgeSet::full(m), 1.0, grid).unwrap();
    d.phi_p = Some(phi);
    d.n_obs = Some(200);
    d
}

/// Dual function by direct full-grid quadrature with nalgebra decompositions.
fn oracle_j(x: &DualPoint, d: &ProblemData, grid: &FrequencyGrid) -> f64 {
    let pv = eval_scalar(&x.p, grid);
    let qv = eval_matrix(&x.q, grid);
    let m = x.dim() as f64;
    let mut int = 0.0;
    for (p, q) in pv.iter().zip(&qv.values) {
        let eig = nalgebra::SymmetricEigen::new(q.clone());
        let ld: f64 = eig.eigenvalues.iter().map(|e| e.ln()).sum();
        int += m * p * p.ln() - p * ld;
    }
    int /= grid.len() as f64;
    let mut lin = 0.0;
    for k in 0..=x.q.degree() {
        lin += x.q.coeff(k).dot(&d.r.lags[k]);
    }
    lin -= d.c.values[0];
    for k in 1..=x.p.degree() {
        lin -= x.p.coeffs[k - 1] * d.c.values[k];
    }
    int - m + lin
}

fn fd_gradient(obj: &Objective, x: &[f64]) -> Vec<f64> {
    let h = 1e-6;
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (obj.eval(&a, None).unwrap() - obj.eval(&b, None).unwrap()) / (2.0 * h)
        })
        .collect()
}

#[test]
fn dual_matches_fine_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let grid = FrequencyGrid::new(512).unwrap();
    let fine = FrequencyGrid::new(8192).unwrap();
    for _ in 0..3 {
        let d = random_data(&mut rng, 3, 2, 2, grid);
        let x = random_point(&mut rng, 3, 2, 2);
        let a = dual_j(&x, &d).unwrap();
        let b = oracle_j(&x, &d, &fine);
        assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
    }
}

#[test]
fn dual_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = FrequencyGrid::new(64).unwrap();
    let d = random_data(&mut rng, 3, 2, 2, grid);
    let x = random_point(&mut rng, 3, 2, 2);
    for scale in [1.0, 0.37] {
        let lay = VarLayout::for_data(&d);
        let obj = Objective::new(&d, lay.clone(), SmoothKind::Dual { reg_scale: scale }).unwrap();
        let v = lay.pack(&x).unwrap();
        let mut g = vec![0.0; v.len()];
        obj.eval(&v, Some(&mut g)).unwrap();
        let fd = fd_gradient(&obj, &v);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn masked_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let grid = FrequencyGrid::new(64).unwrap();
    let edges = EdgeSet::from_pairs(4, &[(0, 1), (2, 3)]).unwrap();
    let d = random_data(&mut rng, 4, 1, 2, grid).with_edges(edges.clone());
    let lay = VarLayout::for_data(&d);
    let mut x = random_point(&mut rng, 4, 1, 2);
    x.q = x.q.clone().with_mask(edges.clone());
    let obj = Objective::new(&d, lay.clone(), SmoothKind::Dual { reg_scale: 1.0 }).unwrap();
    let v = lay.pack(&x).unwrap();
    let mut g = vec![0.0; v.len()];
    obj.eval(&v, Some(&mut g)).unwrap();
    let fd = fd_gradient(&obj, &v);
    for (a, b) in g.iter().zip(&fd) {
        assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
    }
    assert_eq!(grad_smooth(&x, &d, None).unwrap(), g);
}

#[test]
fn check_objective_gradient_and_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let grid = FrequencyGrid::new(64).unwrap();
    let d = random_data(&mut rng, 3, 2, 1, grid);
    let x = random_point(&mut rng, 3, 2, 1);
    let lay = VarLayout::for_data(&d);
    let obj = Objective::new(&d, lay.clone(), SmoothKind::Check).unwrap();
    let v = lay.pack(&x).unwrap();
    let mut g = vec![0.0; v.len()];
    let val = obj.eval(&v, Some(&mut g)).unwrap();
    let direct = whittle_nll(&x, d.phi_p.as_ref().unwrap(), 200).unwrap() + g_lambda(&x.p, 1.0, &grid).unwrap();
    assert!((val - direct).abs() < 1e-9 * direct.abs());
    let fd = fd_gradient(&obj, &v);
    for (a, b) in g.iter().zip(&fd) {
        assert!((a - b).abs() < 1e-5 * (1.0 + b.abs()), "{a} vs {b}");
    }
}

fn assert_hessian_matches(obj: &Objective, v: &[f64]) {
    let hess = obj.hessian(v).unwrap();
    let h = 1e-6;
    let n = v.len();
    for i in 0..n {
        let mut a = v.to_vec();
        let mut b = v.to_vec();
        a[i] += h;
        b[i] -= h;
        let mut ga = vec![0.0; n];
        let mut gb = vec![0.0; n];
        obj.eval(&a, Some(&mut ga)).unwrap();
        obj.eval(&b, Some(&mut gb)).unwrap();
        for j in 0..n {
            let fd = (ga[j] - gb[j]) / (2.0 * h);
            let scale = 1.0 + fd.abs().max(hess[(j, j)].abs());
            assert!((hess[(i, j)] - fd).abs() < 1e-5 * scale, "({i},{j}): {} vs {fd}", hess[(i, j)]);
        }
    }
}

#[test]
fn hessian_matches_gradient_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let grid = FrequencyGrid::new(64).unwrap();
    let d = random_data(&mut rng, 3, 2, 2, grid);
    let x = random_point(&mut rng, 3, 2, 2);
    let lay = VarLayout::for_data(&d);
    for kind in [SmoothKind::Dual { reg_scale: 1.0 }, SmoothKind::Dual { reg_scale: 0.01 }, SmoothKind::Check] {
        let obj = Objective::new(&d, lay.clone(), kind).unwrap();
        assert_hessian_matches(&obj, &lay.pack(&x).unwrap());
    }
    let edges = EdgeSet::from_pairs(3, &[(0, 2)]).unwrap();
    let dm = d.with_edges(edges.clone());
    let lay = VarLayout::for_data(&dm);
    let mut xm = x.clone();
    xm.q = xm.q.clone().with_mask(edges);
    let obj = Objective::new(&dm, lay.clone(), SmoothKind::Dual { reg_scale: 1.0 }).unwrap();
    assert_hessian_matches(&obj, &lay.pack(&xm).unwrap());
}

#[test]
fn dual_blows_up_at_cone_boundary() {
    let grid = FrequencyGrid::new(512).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let d = random_data(&mut rng, 2, 1, 1, grid);
    let q = MatrixTrigPoly::identity(2);
    let q = MatrixTrigPoly::new(q.q0, vec![DMatrix::zeros(2, 2)], None).unwrap();
    let mut last = f64::NEG_INFINITY;
    for t in [0.9, 0.99, 0.999, 0.9999] {
        let x = DualPoint::new(ScalarTrigPoly::monic(vec![t]), q.clone()).unwrap();
        let lay = VarLayout::for_data(&d);
        let obj = Objective::new(&d, lay.clone(), SmoothKind::Dual { reg_scale: 1.0 }).unwrap();
        let v = obj.eval(&lay.pack(&x).unwrap(), None).unwrap();
        assert!(v > last);
        last = v;
    }
    assert!(last > 10.0);
}

#[test]
fn upper_bounds_need_positive_gamma() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let grid = FrequencyGrid::new(64).unwrap();
    let d = random_data(&mut rng, 2, 1, 1, grid);
    let x = random_point(&mut rng, 2, 1, 1);
    assert!(ell_tilde(&x, &d, 1.0, &GammaWeights::zeros(2), 1e-4).is_err());
    let g = GammaWeights::constant(2, 0.5);
    let a = ell_tilde(&x, &d, 1.0, &g, 1e-4).unwrap();
    let b = ell_check(&x, &d, &g, 1e-4).unwrap();
    assert!(a.is_finite() && b.is_finite());
}

#[test]
fn whittle_nll_and_itakura_saito_relation() {
    // N/2 (∫ D_IS(Φ̂, Φ) + ∫ log det Φ̂ + m) equals the Whittle term
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let grid = FrequencyGrid::new(64).unwrap();
    let d = random_data(&mut rng, 2, 1, 1, grid);
    let x = random_point(&mut rng, 2, 1, 1);
    let phi_hat = d.phi_p.as_ref().unwrap();
    let phi = armagm::freqgrid::rational_spectrum(&x.p, &x.q, &grid).unwrap();
    let mut s = 0.0;
    for (a, b) in phi_hat.values.iter().zip(&phi.values) {
        let ld = nalgebra::SymmetricEigen::new(a.clone()).eigenvalues.iter().map(|e| e.ln()).sum::<f64>();
        s += armagm::objectives::itakura_saito(a, b).unwrap() + ld + 2.0;
    }
    let want = 100.0 * s / grid.len() as f64;
    let got = whittle_nll(&x, phi_hat, 200).unwrap();
    assert!((want - got).abs() < 1e-9 * got.abs());
}

fn spectrum_data(m: usize) -> (ProblemData, SpectrumGrid) {
    let grid = FrequencyGrid::new(64).unwrap();
    let phi = SpectrumGrid::constant(grid, &DMatrix::<f64>::identity(m, m));
    let r = CovarianceSeq::new(vec![DMatrix::identity(m, m), DMatrix::zeros(m, m)]).unwrap();
    let c = CepstralSeq { values: vec![0.0, 0.0] };
    (ProblemData::new(r, c, EdgeSet::full(m), 1.0, grid).unwrap(), phi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dual_is_convex_along_segments(seed in any::<u64>(), t in 0.05f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, _) = spectrum_data(2);
        let lay = VarLayout::for_data(&d);
        let obj = Objective::new(&d, lay.clone(), SmoothKind::Dual { reg_scale: 1.0 }).unwrap();
        let a = lay.pack(&random_point(&mut rng, 2, 1, 1)).unwrap();
        let b = lay.pack(&random_point(&mut rng, 2, 1, 1)).unwrap();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let fa = obj.eval(&a, None).unwrap();
        let fb = obj.eval(&b, None).unwrap();
        let fm = obj.eval(&mid, None).unwrap();
        prop_assert!(fm <= t * fa + (1.0 - t) * fb + 1e-10);
    }

    #[test]
    fn dual_grows_along_rays(seed in any::<u64>()) {
        // with R positive definite, J(1, sQ) → ∞ as s → ∞
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, _) = spectrum_data(2);
        let x = random_point(&mut rng, 2, 0, 1);
        let d = d.without_cepstra();
        let f = |s: f64| {
            let mut y = x.clone();
            y.q.q0 *= s;
            for c in &mut y.q.qk { *c *= s; }
            dual_j(&y, &d).unwrap()
        };
        prop_assert!(f(1e3) > f(1e2));
        prop_assert!(f(1e4) > f(1e3));
    }

    #[test]
    fn whittle_value_is_finite_inside_cone(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, phi) = spectrum_data(3);
        let x = random_point(&mut rng, 3, 1, 1);
        let v = whittle_nll(&x, &phi, 100).unwrap();
        prop_assert!(v.is_finite());
    }
}

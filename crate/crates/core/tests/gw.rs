use approx::assert_abs_diff_eq;
use gw_core::rng::seeded;
use gw_core::symmat::{sample_gaussian, sample_orthogonal, sample_spd};
use gw_core::{empirical_gaussian, gw2, gw2_extended, gw_hat, gw_hat2, w2_empirical_1d, Error, GaussianMeasure};
use gw_core::{Matrix, SampleSet, Vector};
use proptest::prelude::*;

fn arb_measure(d: usize) -> impl Strategy<Value = GaussianMeasure> {
    (
        prop::collection::vec(-5.0..5.0f64, d),
        any::<u64>(),
        0.05..1.0f64,
        1.0..20.0f64,
    )
        .prop_map(move |(mean, seed, lo, hi)| {
            GaussianMeasure::new(Vector::from_vec(mean), sample_spd(d, lo, hi, &mut seeded(seed))).unwrap()
        })
}

fn arb_triple() -> impl Strategy<Value = (GaussianMeasure, GaussianMeasure, GaussianMeasure)> {
    (1usize..6).prop_flat_map(|d| (arb_measure(d), arb_measure(d), arb_measure(d)))
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #[test]
    fn distance_is_a_squared_metric((p, q, r) in arb_triple()) {
        let (pq, qp) = (gw2(&p, &q).unwrap(), gw2(&q, &p).unwrap());
        prop_assert!(pq >= 0.0);
        prop_assert!(close(pq, qp, 1e-10), "{pq} vs {qp}");
        prop_assert!(gw2(&p, &p).unwrap() <= 1e-10 * p.cov().trace());
        let (qr, pr) = (gw2(&q, &r).unwrap(), gw2(&p, &r).unwrap());
        prop_assert!(pr.sqrt() <= pq.sqrt() + qr.sqrt() + 1e-8);
    }

    #[test]
    fn invariant_under_joint_isometries((p, q, _) in arb_triple(), seed in any::<u64>()) {
        let d = p.dim();
        let mut rng = seeded(seed);
        let rot = sample_orthogonal(d, &mut rng);
        let shift = Vector::from_fn(d, |i, _| i as f64 - 0.5);
        let (pr, qr) = (p.rotated(&rot).unwrap().shifted(&shift), q.rotated(&rot).unwrap().shifted(&shift));
        prop_assert!(close(gw2(&p, &q).unwrap(), gw2(&pr, &qr).unwrap(), 1e-9));
    }

    #[test]
    fn agrees_with_extended_precision((p, q, _) in arb_triple()) {
        let (a, b) = (gw2(&p, &q).unwrap(), gw2_extended(&p, &q).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * (p.cov().trace() + q.cov().trace()), "{a} vs {b}");
    }

    #[test]
    fn scalar_closed_form(m1 in -10.0..10.0f64, m2 in -10.0..10.0f64, v1 in 0.01..50.0f64, v2 in 0.01..50.0f64) {
        let p = GaussianMeasure::from_slices(&[m1], &[v1]).unwrap();
        let q = GaussianMeasure::from_slices(&[m2], &[v2]).unwrap();
        let want = (m1 - m2).powi(2) + (v1.sqrt() - v2.sqrt()).powi(2);
        prop_assert!(close(gw2(&p, &q).unwrap(), want, 1e-12));
    }

    #[test]
    fn commuting_covariances_split_by_axis(diag in prop::collection::vec((0.01..30.0f64, 0.01..30.0f64), 1..6)) {
        let d = diag.len();
        let a: Vec<f64> = diag.iter().map(|x| x.0).collect();
        let b: Vec<f64> = diag.iter().map(|x| x.1).collect();
        let p = GaussianMeasure::new(Vector::zeros(d), gw_core::SpdMatrix::from_diagonal(&a).unwrap()).unwrap();
        let q = GaussianMeasure::new(Vector::zeros(d), gw_core::SpdMatrix::from_diagonal(&b).unwrap()).unwrap();
        let want: f64 = diag.iter().map(|(x, y)| (x.sqrt() - y.sqrt()).powi(2)).sum();
        prop_assert!(close(gw2(&p, &q).unwrap(), want, 1e-10));
    }

    #[test]
    fn scaling_is_quadratic((p, q, _) in arb_triple(), c in 0.1..10.0f64) {
        let scale = Matrix::identity(p.dim(), p.dim()) * c;
        let cov = |g: &GaussianMeasure| gw_core::SpdMatrix::from_matrix(g.cov().matrix() * (c * c)).unwrap();
        let ps = GaussianMeasure::new(&scale * p.mean(), cov(&p)).unwrap();
        let qs = GaussianMeasure::new(&scale * q.mean(), cov(&q)).unwrap();
        prop_assert!(close(gw2(&ps, &qs).unwrap(), c * c * gw2(&p, &q).unwrap(), 1e-9));
    }
}

#[test]
fn empirical_fit_uses_unbiased_covariance() {
    let s = SampleSet::from_rows(&[vec![0.0, 1.0], vec![2.0, 1.0], vec![1.0, 4.0]]).unwrap();
    let g = empirical_gaussian(&s).unwrap();
    assert_abs_diff_eq!(g.mean()[0], 1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(g.mean()[1], 2.0, epsilon = 1e-15);
    let c = g.cov().matrix();
    assert_abs_diff_eq!(c[(0, 0)], 1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(c[(1, 1)], 3.0, epsilon = 1e-15);
    assert_abs_diff_eq!(c[(0, 1)], 0.0, epsilon = 1e-15);
}

#[test]
fn plug_in_estimators_are_the_distance_of_fits() {
    let mut rng = seeded(8);
    let p = GaussianMeasure::from_slices(&[0.0, 1.0, 2.0], &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5]).unwrap();
    let q = GaussianMeasure::standard(3);
    let sx = sample_gaussian(&p, 300, &mut rng);
    let sy = sample_gaussian(&q, 200, &mut rng);
    let (fx, fy) = (empirical_gaussian(&sx).unwrap(), empirical_gaussian(&sy).unwrap());
    assert_eq!(gw_hat(&sx, &q).unwrap(), gw2(&fx, &q).unwrap());
    assert_eq!(gw_hat2(&sx, &sy).unwrap(), gw2(&fx, &fy).unwrap());
}

#[test]
fn estimators_are_consistent() {
    let mut rng = seeded(9);
    let p = GaussianMeasure::from_slices(&[1.0, 0.0], &[2.0, 0.0, 0.0, 0.5]).unwrap();
    let q = GaussianMeasure::standard(2);
    let truth = gw2(&p, &q).unwrap();
    let errors: Vec<f64> = [1_000, 100_000]
        .iter()
        .map(|&n| (gw_hat(&sample_gaussian(&p, n, &mut rng), &q).unwrap() - truth).abs())
        .collect();
    assert!(errors[1] < 0.02, "{errors:?}");
    assert!(errors[1] < errors[0], "{errors:?}");
}

#[test]
fn empirical_quantile_formula() {
    let x = [1.0, 2.0, 3.0];
    let y = [10.0, 20.0, 30.0];
    let want = (81.0 + 324.0 + 729.0) / 3.0;
    assert_abs_diff_eq!(w2_empirical_1d(&x, &y).unwrap(), want, epsilon = 1e-12);
    assert_eq!(w2_empirical_1d(&x, &x).unwrap(), 0.0);
    assert!(w2_empirical_1d(&x, &y[..2]).is_err());
    assert!(w2_empirical_1d(&[3.0, 1.0, 2.0], &y).is_err());
}

#[test]
fn fitted_and_quantile_forms_agree_on_gaussian_data() {
    let mut rng = seeded(10);
    let p = GaussianMeasure::from_slices(&[0.0], &[1.0]).unwrap();
    let q = GaussianMeasure::from_slices(&[2.0], &[0.25]).unwrap();
    let (sx, sy) = (
        sample_gaussian(&p, 50_000, &mut rng),
        sample_gaussian(&q, 50_000, &mut rng),
    );
    let fitted = gw_hat2(&sx, &sy).unwrap();
    let sorted = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v
    };
    let quantile = w2_empirical_1d(&sorted(sx.column(0)), &sorted(sy.column(0))).unwrap();
    assert!((fitted - quantile).abs() <= 0.05 * quantile, "{fitted} vs {quantile}");
}

#[test]
fn dimension_mismatches_are_rejected() {
    let (p2, p3) = (GaussianMeasure::standard(2), GaussianMeasure::standard(3));
    assert!(matches!(gw2(&p2, &p3), Err(Error::InvalidInput(_))));
    assert!(matches!(gw2_extended(&p2, &p3), Err(Error::InvalidInput(_))));
    let s = sample_gaussian(&p2, 10, &mut seeded(1));
    assert!(gw_hat(&s, &p3).is_err());
    let t = sample_gaussian(&p3, 10, &mut seeded(2));
    assert!(gw_hat2(&s, &t).is_err());
}

#[test]
fn degenerate_samples_are_reported() {
    let s = SampleSet::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
    let err = empirical_gaussian(&s).unwrap_err();
    assert!(err.is_degeneracy(), "{err}");
}

use gw_cli::io::{
    format_gaussian, format_samples_csv, format_site_bundle, parse_gaussian, parse_samples_csv, parse_site_bundle,
    read_samples,
};
use gw_cli::CliError;
use gw_core::inference::Site;
use gw_core::rng::seeded;
use gw_core::symmat::sample_spd;
use gw_core::{GaussianMeasure, Matrix, SampleSet, Vector};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, any::<f64>().prop_filter("finite", |x| x.is_finite())]
}

proptest! {
    #[test]
    fn samples_round_trip(d in 1usize..5, values in prop::collection::vec(finite(), 1..60)) {
        let n = values.len() / d;
        prop_assume!(n >= 1);
        let s = SampleSet::new(Matrix::from_row_slice(n, d, &values[..n * d])).unwrap();
        let back = parse_samples_csv(&format_samples_csv(&s), "p").unwrap();
        prop_assert_eq!(back.rows(), s.rows());
    }

    #[test]
    fn gaussian_round_trip(d in 1usize..6, seed in any::<u64>(), mean in prop::collection::vec(-1e3..1e3f64, 6)) {
        let cov = sample_spd(d, 0.01, 100.0, &mut seeded(seed));
        let g = GaussianMeasure::new(Vector::from_column_slice(&mean[..d]), cov).unwrap();
        let back = parse_gaussian(&format_gaussian(&g), "p").unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,200}") {
        let _ = parse_samples_csv(&text, "p");
        let _ = parse_gaussian(&text, "p");
        let _ = parse_site_bundle(&text, &text);
    }

    #[test]
    fn truncated_rows_name_their_line(d in 2usize..5, n in 1usize..20, bad in 0usize..20) {
        let bad = bad % n;
        let mut text = (1..=d).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",");
        text.push('\n');
        for i in 0..n {
            let width = if i == bad { d - 1 } else { d };
            text.push_str(&vec!["1.5"; width].join(","));
            text.push('\n');
        }
        match parse_samples_csv(&text, "p") {
            Err(CliError::Parse { line, .. }) => prop_assert_eq!(line, bad + 2),
            other => prop_assert!(false, "{:?}", other),
        }
    }
}

#[test]
fn reads_files_from_disk() {
    let dir = tempfile::TempDir::new().unwrap();
    let path = dir.path().join("s.csv");
    std::fs::write(&path, "x1,x2\n1,2\n3,4.5\n").unwrap();
    let s = read_samples(&path).unwrap();
    assert_eq!(s.rows()[(1, 1)], 4.5);
    let missing = read_samples(&dir.path().join("none.csv")).unwrap_err();
    assert!(matches!(missing, CliError::Io { .. }));
    assert_eq!(missing.exit_code(), 1);
}

#[test]
fn whitespace_and_crlf_are_tolerated() {
    let s = parse_samples_csv("x1, x2\r\n 1 , 2\r\n3,4\r\n", "p").unwrap();
    assert_eq!((s.n(), s.dim()), (2, 2));
    let g = parse_gaussian("dim 1\r\nmean 3\r\ncov 2\r\n", "p").unwrap();
    assert_eq!(g.cov().matrix()[(0, 0)], 2.0);
}

#[test]
fn site_bundle_round_trip() {
    let mut rng = seeded(1);
    let sites: Vec<Site> = (0..4)
        .map(|k| Site {
            name: format!("site-{k}"),
            samples: gw_core::symmat::sample_gaussian(&GaussianMeasure::standard(3), 5 + k, &mut rng),
            ref_mean: Vector::from_column_slice(&[k as f64, 0.5, -0.25]),
            b_factor: 0.1 * (k + 1) as f64,
        })
        .collect();
    let (obs, refs) = format_site_bundle(&sites);
    let back = parse_site_bundle(&obs, &refs).unwrap();
    for (a, b) in sites.iter().zip(&back) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.samples.rows(), b.samples.rows());
        assert_eq!(a.ref_mean, b.ref_mean);
        assert_eq!(a.b_factor, b.b_factor);
    }
}

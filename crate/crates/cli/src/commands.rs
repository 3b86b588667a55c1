use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gw_core::inference::{
    bootstrap_m_of_n, bootstrap_n_of_n, ci_one_sample, ci_two_sample, default_m, protein_batch_test, test_equality,
    test_neighborhood, BootstrapDistribution, Reference,
};
use gw_core::limitlaw::DEFAULT_NULL_DRAWS;
use gw_core::rng::seeded;
use gw_core::stats::{lower_quantile, mean_var};
use gw_core::{empirical_gaussian, gw2, GaussianMeasure, SampleSet};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::elliptic::{sample_multivariate_t, sinkhorn};
use crate::error::{CliError, CliResult};
use crate::harness::{self, random_measure};
use crate::io::{read_gaussian, read_samples, read_site_bundle, write_text};
use crate::report::{Check, Report};

#[derive(Debug, Parser)]
#[command(
    name = "gw",
    version,
    about = "Gaussian 2-Wasserstein distances, limit laws and tests"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Write the JSON report to this file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print the JSON report on stdout instead of the table.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Closed-form distance between two parameter files.
    Dist(DistArgs),
    /// Plug-in estimate from one or two samples.
    Estimate(SampleArgs),
    /// Wald confidence interval for the distance.
    Ci(CiArgs),
    /// Equality or neighborhood test.
    Test(TestArgs),
    /// n-of-n or m-of-n bootstrap of the one-sample estimator.
    Bootstrap(BootstrapArgs),
    /// Per-site spherical test for a bundle of three-dimensional sites.
    Protein(ProteinArgs),
    /// Monte Carlo reproduction of the limit theorems.
    McClt(McCltArgs),
    /// Gelbrich lower bound on multivariate-t clouds.
    TDemo(TDemoArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Dist(_) => "dist",
            Command::Estimate(_) => "estimate",
            Command::Ci(_) => "ci",
            Command::Test(_) => "test",
            Command::Bootstrap(_) => "bootstrap",
            Command::Protein(_) => "protein",
            Command::McClt(_) => "mc-clt",
            Command::TDemo(_) => "t-demo",
        }
    }

    /// The seed slot of stochastic commands.
    pub fn seed_mut(&mut self) -> Option<&mut Option<u64>> {
        match self {
            Command::Test(a) => Some(&mut a.seed),
            Command::Bootstrap(a) => Some(&mut a.seed),
            Command::Protein(a) => Some(&mut a.seed),
            Command::McClt(a) => Some(&mut a.seed),
            Command::TDemo(a) => Some(&mut a.seed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DistArgs {
    /// Parameter file of the first measure.
    #[arg(long)]
    pub p: PathBuf,
    /// Parameter file of the second measure.
    #[arg(long)]
    pub q: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SampleArgs {
    /// Samples CSV (header x1,...,xd).
    #[arg(long)]
    pub input: PathBuf,
    /// Parameter file of a known reference measure.
    #[arg(long = "ref", conflicts_with = "input2")]
    pub reference: Option<PathBuf>,
    /// Second samples CSV for two-sample procedures.
    #[arg(long)]
    pub input2: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CiArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub samples: SampleArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMode {
    Equality,
    Neighborhood,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub samples: SampleArgs,
    #[arg(long, value_enum, default_value_t = TestMode::Equality)]
    pub mode: TestMode,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Neighborhood radius (neighborhood mode only).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Draws of the simulated null law.
    #[arg(long, default_value_t = DEFAULT_NULL_DRAWS)]
    pub null_draws: usize,
    /// Random seed; a fresh one is drawn and printed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    NOfN,
    MOfN,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BootstrapArgs {
    /// Samples CSV (header x1,...,xd).
    #[arg(long)]
    pub input: PathBuf,
    /// Parameter file of the reference measure.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long, value_enum, default_value_t = Scheme::NOfN)]
    pub scheme: Scheme,
    /// Resample size for m-of-n; defaults to the ceiling of n^(2/3).
    #[arg(long)]
    pub m: Option<usize>,
    /// Number of bootstrap resamples.
    #[arg(long, default_value_t = 2000)]
    pub b_reps: usize,
    /// Random seed; a fresh one is drawn and printed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the replicates as a CSV table.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ProteinArgs {
    /// Observations CSV (site,x1,x2,x3).
    #[arg(long)]
    pub input: PathBuf,
    /// References CSV (site,mean1,mean2,mean3,b_factor).
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_NULL_DRAWS)]
    pub null_draws: usize,
    /// Random seed; a fresh one is drawn and printed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theorem {
    /// `√n(ĜWₙ − GW)/υ` against `N(0, 1)`.
    OneSample,
    /// `√(nm/(n+m))(ĜW_{n,m} − GW)/ϖ` against `N(0, 1)`.
    TwoSample,
    /// `n·ĜWₙ` at `P = Q` against the one-sample null law.
    NullOneSample,
    /// `(2nm/(n+m))·ĜW_{n,m}` at `P = Q` against the two-sample null law.
    NullTwoSample,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct McCltArgs {
    #[arg(long, value_enum, default_value_t = Theorem::OneSample)]
    pub theorem: Theorem,
    /// Parameter file of P; defaults to N(0, I) in two dimensions, or the
    /// spherical N(0, I₃) for the null theorems.
    #[arg(long)]
    pub p: Option<PathBuf>,
    /// Parameter file of Q; defaults to N((1,0), diag(2, 0.5)).
    #[arg(long)]
    pub q: Option<PathBuf>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [500usize, 2000])]
    pub n: Vec<usize>,
    /// Second sample size as a multiple of n.
    #[arg(long, default_value_t = 1.0)]
    pub m_ratio: f64,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub ks_tol: f64,
    #[arg(long, default_value_t = gw_core::limitlaw::DEFAULT_ORACLE_DRAWS)]
    pub oracle_draws: usize,
    #[arg(long, default_value_t = DEFAULT_NULL_DRAWS)]
    pub null_draws: usize,
    /// Sample size of the one-dimensional quantile cross-check (0 skips it).
    #[arg(long, default_value_t = 100_000)]
    pub cross_n: usize,
    /// Random seed; a fresh one is drawn and printed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the replicate values of the largest n as a CSV table.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TDemoArgs {
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 5.0)]
    pub dof: f64,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Entropic regularization relative to the mean pairwise cost.
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    /// Random seed; a fresh one is drawn and printed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn check_alpha(alpha: f64) -> CliResult<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(config_error(format!("--alpha {alpha} must lie in (0, 1)")))
    }
}

fn positive(name: &str, v: usize) -> CliResult<()> {
    if v == 0 {
        Err(config_error(format!("--{name} must be positive")))
    } else {
        Ok(())
    }
}

impl Command {
    /// Rejects configurations that no run could satisfy.
    pub fn validate(&self) -> CliResult<()> {
        match self {
            Command::Dist(_) | Command::Estimate(_) => Ok(()),
            Command::Ci(a) => {
                if a.alpha > 0.0 && a.alpha <= 1.0 {
                    Ok(())
                } else {
                    Err(config_error(format!("--alpha {} must lie in (0, 1]", a.alpha)))
                }
            }
            Command::Test(a) => {
                check_alpha(a.alpha)?;
                positive("null-draws", a.null_draws)?;
                match (a.mode, a.delta, &a.samples.reference) {
                    (TestMode::Neighborhood, None, _) => Err(config_error("neighborhood mode needs --delta")),
                    (TestMode::Neighborhood, Some(d), _) if !(d > 0.0 && d.is_finite()) => {
                        Err(config_error(format!("--delta {d} must be positive")))
                    }
                    (TestMode::Neighborhood, _, None) => Err(config_error("neighborhood mode needs --ref")),
                    (TestMode::Equality, Some(_), _) => Err(config_error("--delta applies to neighborhood mode only")),
                    _ => Ok(()),
                }
            }
            Command::Bootstrap(a) => {
                positive("b-reps", a.b_reps)?;
                if a.scheme == Scheme::NOfN && a.m.is_some() {
                    return Err(config_error("--m applies to the m-of-n scheme only"));
                }
                Ok(())
            }
            Command::Protein(a) => {
                check_alpha(a.alpha)?;
                positive("null-draws", a.null_draws)
            }
            Command::McClt(a) => {
                positive("reps", a.reps)?;
                if a.n.is_empty() || a.n.iter().any(|&n| n < 2) {
                    return Err(config_error("--n needs sample sizes of at least 2"));
                }
                if !(a.m_ratio > 0.0 && a.m_ratio.is_finite()) {
                    return Err(config_error("--m-ratio must be positive"));
                }
                if !(a.ks_tol > 0.0 && a.ks_tol <= 1.0) {
                    return Err(config_error("--ks-tol must lie in (0, 1]"));
                }
                if a.oracle_draws < 10_000 {
                    return Err(config_error("--oracle-draws must be at least 10000"));
                }
                if a.null_draws < 1_000 {
                    return Err(config_error("--null-draws must be at least 1000"));
                }
                Ok(())
            }
            Command::TDemo(a) => {
                if a.dim == 0 || a.dim > 50 {
                    return Err(config_error("--dim must lie in 1..=50"));
                }
                if a.n <= a.dim || a.n > 5_000 {
                    return Err(config_error("--n must exceed --dim and be at most 5000"));
                }
                if !(a.epsilon > 0.0 && a.epsilon.is_finite()) {
                    return Err(config_error("--epsilon must be positive"));
                }
                Ok(())
            }
        }
    }
}

fn samples_reference(a: &SampleArgs) -> CliResult<(SampleSet, Either)> {
    let s = read_samples(&a.input)?;
    let other = match (&a.reference, &a.input2) {
        (Some(r), None) => Either::Known(read_gaussian(r)?),
        (None, Some(p)) => Either::Sample(read_samples(p)?),
        _ => return Err(config_error("give exactly one of --ref and --input2")),
    };
    Ok((s, other))
}

enum Either {
    Known(GaussianMeasure),
    Sample(SampleSet),
}

fn measure_json(g: &GaussianMeasure) -> Value {
    let c = g.cov().matrix();
    let d = g.dim();
    json!({
        "mean": g.mean().iter().collect::<Vec<_>>(),
        "cov": (0..d).map(|i| (0..d).map(|j| c[(i, j)]).collect::<Vec<_>>()).collect::<Vec<_>>(),
    })
}

fn to_value<T: Serialize>(v: &T) -> CliResult<Value> {
    Ok(serde_json::to_value(v)?)
}

fn seed_of(seed: Option<u64>) -> u64 {
    seed.expect("seed resolved before dispatch")
}

/// Executes a validated command whose seed has been resolved.
pub fn run(cmd: &Command) -> CliResult<Report> {
    cmd.validate()?;
    let config = to_value(cmd)?;
    let config = config.get(cmd.name()).cloned().unwrap_or(config);
    let (results, checks) = match cmd {
        Command::Dist(a) => {
            let (p, q) = (read_gaussian(&a.p)?, read_gaussian(&a.q)?);
            let value = gw2(&p, &q)?;
            let gap = (p.mean() - q.mean()).norm_squared();
            (
                json!({"gw2": value, "mean_term": gap, "covariance_term": value - gap, "dim": p.dim()}),
                vec![],
            )
        }
        Command::Estimate(a) => {
            let (s, other) = samples_reference(a)?;
            let fitted = empirical_gaussian(&s)?;
            let v = match &other {
                Either::Known(q) => json!({
                    "estimate": gw2(&fitted, q)?, "n": s.n(), "fitted": measure_json(&fitted),
                }),
                Either::Sample(sy) => {
                    let fy = empirical_gaussian(sy)?;
                    json!({
                        "estimate": gw2(&fitted, &fy)?, "n": s.n(), "m": sy.n(),
                        "fitted": measure_json(&fitted), "fitted2": measure_json(&fy),
                    })
                }
            };
            (v, vec![])
        }
        Command::Ci(a) => {
            let (s, other) = samples_reference(&a.samples)?;
            let ci = match &other {
                Either::Known(q) => ci_one_sample(&s, q, a.alpha)?,
                Either::Sample(sy) => ci_two_sample(&s, sy, a.alpha)?,
            };
            (to_value(&ci)?, vec![])
        }
        Command::Test(a) => {
            let (s, other) = samples_reference(&a.samples)?;
            let mut rng = seeded(seed_of(a.seed));
            let report = match (a.mode, &other) {
                (TestMode::Equality, Either::Known(q)) => {
                    test_equality(&s, Reference::Known(q), a.alpha, a.null_draws, &mut rng)?
                }
                (TestMode::Equality, Either::Sample(sy)) => {
                    test_equality(&s, Reference::Sample(sy), a.alpha, a.null_draws, &mut rng)?
                }
                (TestMode::Neighborhood, Either::Known(q)) => {
                    test_neighborhood(&s, q, a.delta.expect("validated"), a.alpha)?
                }
                (TestMode::Neighborhood, Either::Sample(_)) => unreachable!("validated"),
            };
            (to_value(&report)?, vec![])
        }
        Command::Bootstrap(a) => {
            let s = read_samples(&a.input)?;
            let q = read_gaussian(&a.reference)?;
            let mut rng = seeded(seed_of(a.seed));
            let boot = match a.scheme {
                Scheme::NOfN => bootstrap_n_of_n(&s, &q, a.b_reps, &mut rng)?,
                Scheme::MOfN => bootstrap_m_of_n(&s, &q, a.m.unwrap_or_else(|| default_m(s.n())), a.b_reps, &mut rng)?,
            };
            if let Some(path) = &a.table {
                write_text(path, &harness::values_table("replicate", &boot.replicates))?;
            }
            (bootstrap_summary(&boot)?, vec![])
        }
        Command::Protein(a) => {
            let sites = read_site_bundle(&a.input, &a.reference)?;
            let mut rng = seeded(seed_of(a.seed));
            let outcomes = protein_batch_test(&sites, a.alpha, a.null_draws, &mut rng)?;
            let rejected = outcomes.iter().filter(|o| o.rejected()).count();
            (
                json!({"sites": outcomes, "rejected": rejected, "total": outcomes.len()}),
                vec![],
            )
        }
        Command::McClt(a) => mc_clt(a)?,
        Command::TDemo(a) => t_demo(a)?,
    };
    Ok(Report::new(cmd.name(), config, results).with_checks(checks))
}

fn bootstrap_summary(boot: &BootstrapDistribution) -> CliResult<Value> {
    let mut sorted = boot.replicates.clone();
    sorted.sort_by(f64::total_cmp);
    let (mean, var) = mean_var(&sorted);
    Ok(json!({
        "scheme": boot.scheme, "b": boot.b, "m": boot.m, "skipped": boot.skipped,
        "estimate": boot.estimate, "mean": mean, "sd": var.sqrt(),
        "q025": lower_quantile(&sorted, 0.025)?, "q975": lower_quantile(&sorted, 0.975)?,
        "seed": boot.seed,
    }))
}

fn default_pair() -> (GaussianMeasure, GaussianMeasure) {
    (
        GaussianMeasure::standard(2),
        GaussianMeasure::from_slices(&[1.0, 0.0], &[2.0, 0.0, 0.0, 0.5]).expect("valid"),
    )
}

fn mc_clt(a: &McCltArgs) -> CliResult<(Value, Vec<Check>)> {
    let seed = seed_of(a.seed);
    let null = matches!(a.theorem, Theorem::NullOneSample | Theorem::NullTwoSample);
    let (dp, dq) = default_pair();
    let p = match &a.p {
        Some(path) => read_gaussian(path)?,
        None if null => GaussianMeasure::standard(3),
        None => dp,
    };
    let q = match &a.q {
        Some(path) => read_gaussian(path)?,
        None => dq,
    };
    if !null && p.dim() != q.dim() {
        return Err(config_error("P and Q have different dimensions"));
    }
    let m_of = |n: usize| ((n as f64 * a.m_ratio).round() as usize).max(2);
    let mut runs = Vec::new();
    let mut checks = Vec::new();
    let mut last_values = Vec::new();
    for (k, &n) in a.n.iter().enumerate() {
        let run_seed = seed.wrapping_add(k as u64);
        let (value, ks, values) = match a.theorem {
            Theorem::OneSample => {
                let r = harness::one_sample_clt(&p, &q, n, a.reps, run_seed)?;
                (to_value(&r)?, r.ks, r.values)
            }
            Theorem::TwoSample => {
                let r = harness::two_sample_clt(&p, &q, n, m_of(n), a.reps, run_seed)?;
                (to_value(&r)?, r.ks, r.values)
            }
            Theorem::NullOneSample | Theorem::NullTwoSample => {
                let m = (a.theorem == Theorem::NullTwoSample).then(|| m_of(n));
                let r = harness::null_law_comparison(&p, n, m, a.reps, a.null_draws, a.ks_tol, run_seed)?;
                (to_value(&r)?, r.ks, r.direct)
            }
        };
        checks.push(Check::at_most(format!("ks at n={n}"), ks, a.ks_tol));
        runs.push(value);
        last_values = values;
    }
    if let Some(path) = &a.table {
        write_text(path, &harness::values_table("statistic", &last_values))?;
    }
    let mut results = json!({"theorem": a.theorem, "runs": runs});
    if !null {
        let rows = harness::certify_pair(&p, &q, 1.0 / (1.0 + a.m_ratio), a.oracle_draws, seed ^ 0x0ac1e)?;
        for r in &rows {
            checks.push(Check::at_most(
                format!("variance oracle z-score ({:?})", r.mode),
                r.z_score,
                4.0,
            ));
        }
        results["variance_certification"] = to_value(&rows)?;
    }
    if a.cross_n > 0 {
        let (p1, q1) = harness::scalar_hand_pair();
        let c = harness::quantile_cross_check(&p1, &q1, a.cross_n, seed ^ 0xc055)?;
        checks.push(Check::at_most(
            "one-dimensional quantile cross-check",
            c.relative_difference,
            0.05,
        ));
        results["quantile_cross_check"] = to_value(&c)?;
    }
    Ok((results, checks))
}

fn t_demo(a: &TDemoArgs) -> CliResult<(Value, Vec<Check>)> {
    let mut rng = seeded(seed_of(a.seed));
    let p = random_measure(a.dim, &mut rng);
    let q = random_measure(a.dim, &mut rng);
    let x = sample_multivariate_t(p.mean(), p.cov(), a.dof, a.n, &mut rng)?;
    let y = sample_multivariate_t(q.mean(), q.cov(), a.dof, a.n, &mut rng)?;
    let bound = gw2(&moment_fit(&x)?, &moment_fit(&y)?)?;
    let scale = mean_pairwise_cost(&x, &y);
    let ot = sinkhorn(&x, &y, a.epsilon * scale, 1e-3, 5_000)?;
    let ratio = bound / ot.transport_cost;
    let results = json!({
        "gaussian_bound": bound,
        "entropic_cost": ot.transport_cost,
        "ratio": ratio,
        "sinkhorn_iterations": ot.iterations,
        "marginal_error": ot.marginal_error,
    });
    Ok((results, vec![Check::at_most("bound / entropic cost", ratio, 1.02)]))
}

/// Gaussian with the mean and (biased) covariance of the cloud itself, so
/// that the lower bound applies to the empirical measures exactly.
fn moment_fit(s: &SampleSet) -> CliResult<GaussianMeasure> {
    let fitted = empirical_gaussian(s)?;
    let n = s.n() as f64;
    let cov = gw_core::SpdMatrix::from_matrix(fitted.cov().matrix() * ((n - 1.0) / n))?;
    Ok(GaussianMeasure::new(fitted.mean().clone(), cov)?)
}

fn mean_pairwise_cost(x: &SampleSet, y: &SampleSet) -> f64 {
    let (xr, yr) = (x.rows(), y.rows());
    let mut total = 0.0;
    for i in 0..x.n() {
        for j in 0..y.n() {
            total += (xr.row(i) - yr.row(j)).norm_squared();
        }
    }
    total / (x.n() * y.n()) as f64
}

//! The `shiftkit` command line. Exit codes: 0 success, 2 usage or
//! validation error, 3 solver did not converge (trace still written).

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{ArgGroup, Parser, Subcommand};
use rayon::prelude::*;

use crate::data::io::{
    fmt_f64, read_density, read_factors, read_joint, read_witness, write_density, write_em_trace,
    write_joint, write_posteriors, write_psi_trace, writer,
};
use crate::data::{
    fit_bins, histogram, infer_space, observed_cells, simulate, write_simulation, BinningSpec,
    Histogram, SampleRow, SampleSet, SimulationConfig,
};
use crate::em::{em_estimate, EmConfig};
use crate::error::{AxisName, Error, Result};
use crate::prob::{DensityAxis, JointTable, RelativeDensity, SpaceSpec};
use crate::psi::{solve_psi, PsiConfig};
use crate::ratio::{
    bootstrap_ratio, estimate_phi, estimate_ratio, resampling_robustness, train_classifier,
    ClassifierConfig, PhiConfig, RatioEstimate, ResampleSide,
};
use crate::shift::{characterize_fjs, correct_posterior, decompose_fjs, verify_gls_implies_fjs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "shiftkit", version, about = "Distribution shift on finite feature × label spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw source and target samples from a shift configuration.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Half-open seed range `a..b`; each run goes to `<out-dir>/seed_<s>`.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Bin a dataset and write its normalized histogram.
    Histogram {
        #[arg(long)]
        sample: PathBuf,
        #[arg(long)]
        bin_spec: Option<PathBuf>,
        /// Where to save the fitted binning.
        #[arg(long)]
        bins_out: Option<PathBuf>,
        /// Joint table whose cells define the space (needed for unlabeled data
        /// to keep unobserved cells).
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve for FJS factors matching target feature and label densities.
    SolveFjs {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target_feature_density: PathBuf,
        #[arg(long)]
        target_label_density: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        #[arg(long)]
        psi_init: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        damping: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Estimate target label priors from target features by EM.
    #[command(group(ArgGroup::new("target").required(true).args(["target_features", "target_sample"])))]
    EstimatePriors {
        #[arg(long)]
        source: PathBuf,
        /// Target feature density `h` as `x,value`.
        #[arg(long)]
        target_features: Option<PathBuf>,
        /// Unlabeled target dataset; `h` is its histogram divided by `P_X`.
        #[arg(long)]
        target_sample: Option<PathBuf>,
        #[arg(long)]
        bin_spec: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        #[arg(long)]
        g_init: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Target posteriors `P_Q(y | x)` for every source-supported feature cell.
    CorrectPosterior {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        g: PathBuf,
        /// Defaults to ψ ≡ 1.
        #[arg(long)]
        psi: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classifier-based density ratio between two samples, or the
    /// dependence density of one joint sample.
    DensityRatio {
        #[arg(long, required_unless_present = "phi", conflicts_with = "phi")]
        sample0: Option<PathBuf>,
        #[arg(long, required_unless_present = "phi", conflicts_with = "phi")]
        sample1: Option<PathBuf>,
        #[arg(long, requires = "joint_sample")]
        phi: bool,
        #[arg(long)]
        joint_sample: Option<PathBuf>,
        #[arg(long, default_value_t = 1_000_000)]
        max_pairs: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        l2: f64,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 5000)]
        epochs: usize,
        /// Bootstrap replicates for standard errors.
        #[arg(long, conflicts_with = "phi")]
        bootstrap: Option<usize>,
        /// Resampling factors applied to sample1; prints the largest ratio change.
        #[arg(long, value_delimiter = ',', conflicts_with = "phi")]
        robustness: Vec<f64>,
        #[arg(long)]
        bin_spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split an FJS target into its label-shift and covariate-shift steps.
    Decompose {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        factors: PathBuf,
        /// Receives `Q_L.csv` and `Q_C.csv`.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Classify the shift between two joint tables.
    Characterize {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Feature partition (`x,block`) to check generalized label shift.
        #[arg(long)]
        witness: Option<PathBuf>,
    },
}

/// Runs the tool on the process arguments.
pub fn main() -> i32 {
    run(std::env::args_os())
}

/// Runs the tool on `args` (including the program name) and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_not_converged() {
                EXIT_NOT_CONVERGED
            } else {
                EXIT_INVALID
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            config,
            out_dir,
            seeds,
        } => cmd_simulate(&config, &out_dir, seeds.as_deref()),
        Command::Histogram {
            sample,
            bin_spec,
            bins_out,
            space,
            out,
        } => cmd_histogram(&sample, bin_spec.as_deref(), bins_out.as_deref(), space.as_deref(), &out),
        Command::SolveFjs {
            source,
            target_feature_density,
            target_label_density,
            tol,
            max_iter,
            psi_init,
            damping,
            out,
            trace,
        } => {
            let p = read_joint(&source)?;
            let space = p.space();
            let h = read_density(&target_feature_density, space, DensityAxis::Feature)?;
            let g = read_density(&target_label_density, space, DensityAxis::Label)?;
            let init = psi_init
                .map(|f| read_density(&f, space, DensityAxis::Label).map(RelativeDensity::into_values))
                .transpose()?;
            let config = PsiConfig {
                tol,
                max_iter,
                init,
                damping,
                ..PsiConfig::default()
            };
            match solve_psi(&p, &h, &g, &config) {
                Ok(sol) => {
                    if let Some(t) = &trace {
                        write_psi_trace(t, space, &sol.trace, None)?;
                    }
                    crate::data::io::write_factors(&out, space, &sol.factors, None)
                }
                Err(Error::PsiNotConverged(tr)) => {
                    if let Some(t) = &trace {
                        write_psi_trace(t, space, &tr, None)?;
                    }
                    Err(Error::PsiNotConverged(tr))
                }
                Err(e) => Err(e),
            }
        }
        Command::EstimatePriors {
            source,
            target_features,
            target_sample,
            bin_spec,
            tol,
            max_iter,
            g_init,
            out,
            trace,
        } => {
            let p = read_joint(&source)?;
            let space = p.space().clone();
            let (h, require_positive_h) = match (target_features, target_sample) {
                (Some(f), _) => (read_density(&f, &space, DensityAxis::Feature)?, true),
                (None, Some(s)) => (empirical_feature_density(&p, &s, bin_spec.as_deref())?, false),
                (None, None) => unreachable!("clap requires one target"),
            };
            let g_init = g_init
                .map(|f| read_density(&f, &space, DensityAxis::Label).map(RelativeDensity::into_values))
                .transpose()?;
            let config = EmConfig {
                tol,
                max_iter,
                g_init,
                require_positive_h,
            };
            match em_estimate(&p, &h, &config) {
                Ok(sol) => {
                    if sol.trace.boundary_hit {
                        log::warn!("EM iterate reached the positivity floor");
                    }
                    if let Some(t) = &trace {
                        write_em_trace(t, &space, &sol.trace, None)?;
                    }
                    write_density(&out, &space, &sol.g, None)
                }
                Err(Error::EmNotConverged(tr)) => {
                    if let Some(t) = &trace {
                        write_em_trace(t, &space, &tr, None)?;
                    }
                    Err(Error::EmNotConverged(tr))
                }
                Err(e) => Err(e),
            }
        }
        Command::CorrectPosterior { source, g, psi, out } => {
            let p = read_joint(&source)?;
            let space = p.space();
            let g = read_density(&g, space, DensityAxis::Label)?;
            let psi = match psi {
                Some(f) => read_density(&f, space, DensityAxis::Label)?,
                None => RelativeDensity::ones(DensityAxis::Label, p.n_labels()),
            };
            let px = p.feature_marginal();
            let mut rows = Vec::new();
            for x in 0..p.n_features() {
                if px[x] > 0.0 {
                    rows.push((space.feature_cell(x).to_string(), correct_posterior(&p, &g, &psi, x)?));
                } else {
                    log::warn!("feature cell {} has no source mass; skipped", space.feature_cell(x));
                }
            }
            write_posteriors(&out, space, &rows, None)
        }
        Command::DensityRatio {
            sample0,
            sample1,
            phi,
            joint_sample,
            max_pairs,
            seed,
            l2,
            lr,
            epochs,
            bootstrap,
            robustness,
            bin_spec,
            out,
        } => {
            let classifier = ClassifierConfig { l2, lr, epochs };
            let bins = bin_spec.as_deref().map(load_bins).transpose()?;
            let est = if phi {
                let joint = load_cells(&joint_sample.expect("clap enforces --joint-sample"), bins.as_ref())?;
                let config = PhiConfig {
                    max_pairs,
                    subsample_seed: seed,
                    classifier,
                };
                estimate_phi(&joint, &config)?
            } else {
                let a = load_cells(&sample0.expect("clap enforces --sample0"), bins.as_ref())?;
                let b = load_cells(&sample1.expect("clap enforces --sample1"), bins.as_ref())?;
                if !robustness.is_empty() {
                    let rep =
                        resampling_robustness(&a, &b, &robustness, ResampleSide::Sample1, seed, &classifier)?;
                    for (f, d) in &rep.deviations {
                        println!("robustness factor {f}: max_deviation {d}");
                    }
                }
                match bootstrap {
                    Some(n) if n > 0 => bootstrap_ratio(&a, &b, &classifier, n, seed)?,
                    _ => estimate_ratio(&train_classifier(&a, &b, &classifier)?),
                }
            };
            println!("p_used: {}", est.p_used);
            println!("auc: {}", est.auc);
            let header_seed = (phi || bootstrap.is_some() || !robustness.is_empty()).then_some(seed);
            write_ratio(&out, &est, header_seed)
        }
        Command::Decompose {
            source,
            factors,
            out_dir,
        } => {
            let p = read_joint(&source)?;
            let factors = read_factors(&factors, &p)?;
            let (ql, qc) = decompose_fjs(&p, &factors)?;
            std::fs::create_dir_all(&out_dir)?;
            write_joint(&out_dir.join("Q_L.csv"), &ql, None)?;
            write_joint(&out_dir.join("Q_C.csv"), &qc, None)
        }
        Command::Characterize {
            source,
            target,
            witness,
        } => {
            let p = read_joint(&source)?;
            let q = load_target_on(&p, &target)?;
            print!("{}", characterize_report(&p, &q)?);
            if let Some(w) = witness {
                let v = verify_gls_implies_fjs(&p, &q, &read_witness(&w)?)?;
                println!("gls_sufficiency_residual: {}", v.witness.sufficiency_residual);
                println!("gls_label_shift_residual: {}", v.witness.label_shift_residual);
                println!("gls_applies: {}", v.implication_applies);
                println!("gls_implies_fjs: {}", v.implication_holds);
            }
            Ok(())
        }
    }
}

/// The target table reindexed onto the source's cell order.
fn load_target_on(p: &JointTable, path: &Path) -> Result<JointTable> {
    let q = read_joint(path)?;
    if !p.space().same_cells(q.space()) {
        return Err(Error::SpaceMismatch);
    }
    let (ps, qs) = (p.space(), q.space());
    let mut mass = vec![0.0; ps.n_features() * ps.n_labels()];
    for x in 0..qs.n_features() {
        for y in 0..qs.n_labels() {
            let i = ps.feature_index(qs.feature_cell(x)).unwrap();
            let j = ps.label_index(qs.label_cell(y)).unwrap();
            mass[i * ps.n_labels() + j] = q.mass(x, y);
        }
    }
    JointTable::new(ps.clone(), mass)
}

/// Diagnosis lines: the flags with ψ on one line, then residuals.
pub fn characterize_report(p: &JointTable, q: &JointTable) -> Result<String> {
    let d = characterize_fjs(p, q)?;
    let psi = d.psi.as_ref().map_or_else(
        || "none".to_string(),
        |s| s.values().iter().map(|v| round_10(*v)).collect::<Vec<_>>().join(","),
    );
    let mut out = format!(
        "covariate_shift: {}, label_shift: {}, fjs: {}, psi: {psi}\n",
        d.is_covariate, d.is_label, d.is_fjs
    );
    out.push_str(&format!("support_connected: {}\n", d.support_connected));
    for (k, v) in &d.residuals {
        out.push_str(&format!("residual_{k}: {v:e}\n"));
    }
    Ok(out)
}

/// Rounds to 10 decimals and drops trailing zeros: `1`, `1.5555555556`.
fn round_10(v: f64) -> String {
    let s = format!("{:.10}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn cmd_simulate(config: &Path, out_dir: &Path, seeds: Option<&str>) -> Result<()> {
    let cfg = SimulationConfig::from_json(&std::fs::read_to_string(config)?)?;
    let base = config.parent().unwrap_or(Path::new("."));
    let Some(range) = seeds else {
        let sim = simulate(&cfg, base)?;
        return write_simulation(out_dir, &sim, cfg.seed);
    };
    let (a, b) = parse_seed_range(range)?;
    let rows = (a..b)
        .into_par_iter()
        .map(|seed| {
            let cfg = SimulationConfig { seed, ..cfg.clone() };
            let sim = simulate(&cfg, base)?;
            write_simulation(&out_dir.join(format!("seed_{seed}")), &sim, seed)?;
            let dev = |s: &SampleSet, t: &JointTable| -> Result<f64> {
                let Histogram::Joint(e) = histogram(s, &BinningSpec::default(), t.space())? else {
                    unreachable!("simulated samples are labeled")
                };
                Ok(e.max_abs_diff(t))
            };
            Ok((seed, dev(&sim.source_sample, &sim.p)?, dev(&sim.target_sample, &sim.q)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = writer(&out_dir.join("sweep.csv"), None)?;
    w.write_record(["seed", "n_source", "n_target", "source_max_dev", "target_max_dev"])?;
    for (seed, ds, dt) in rows {
        w.write_record([
            seed.to_string(),
            cfg.n_source.to_string(),
            cfg.n_target.to_string(),
            fmt_f64(ds),
            fmt_f64(dt),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_seed_range(text: &str) -> Result<(u64, u64)> {
    let bad = || Error::Parse(format!("--seeds: expected a..b, got '{text}'"));
    let (a, b) = text.split_once("..").ok_or_else(bad)?;
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    if a >= b {
        return Err(Error::Parse(format!("--seeds: empty range '{text}'")));
    }
    Ok((a, b))
}

fn load_bins(path: &Path) -> Result<BinningSpec> {
    BinningSpec::from_json(&std::fs::read_to_string(path)?)
}

/// Fitted binning: a given spec is fitted on `data` unless it already is;
/// without a spec the defaults are fitted.
fn fitted_bins(data: &SampleSet, spec: Option<&Path>) -> Result<BinningSpec> {
    let spec = spec.map(load_bins).transpose()?.unwrap_or_default();
    if spec.is_fitted() && !spec.columns.is_empty() {
        Ok(spec)
    } else {
        fit_bins(data, &spec)
    }
}

fn cmd_histogram(
    sample: &Path,
    bin_spec: Option<&Path>,
    bins_out: Option<&Path>,
    space: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let data = SampleSet::read_csv(sample)?;
    let bins = fitted_bins(&data, bin_spec)?;
    if let Some(b) = bins_out {
        std::fs::write(b, bins.to_json()? + "\n")?;
    }
    let space = match space {
        Some(t) => read_joint(t)?.space().clone(),
        None if data.is_labeled() => Arc::new(infer_space(&data, &bins)?),
        None => {
            let (xs, _) = observed_cells(&data, &bins)?;
            Arc::new(SpaceSpec::new(xs, vec!["y".into()])?)
        }
    };
    match histogram(&data, &bins, &space)? {
        Histogram::Joint(t) => write_joint(out, &t, None),
        Histogram::Features(v) => {
            let mut w = writer(out, None)?;
            w.write_record(["x", "mass"])?;
            for (c, m) in space.feature_cells().iter().zip(v) {
                w.write_record([c.as_str(), &fmt_f64(m)])?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

/// `h = Q̂_X / P_X` from an unlabeled target sample. Labels, if the file has
/// any, are dropped before counting.
fn empirical_feature_density(p: &JointTable, sample: &Path, bin_spec: Option<&Path>) -> Result<RelativeDensity> {
    let data = SampleSet::read_csv(sample)?.unlabeled();
    let bins = match bin_spec {
        Some(b) => fitted_bins(&data, Some(b))?,
        None => BinningSpec::default(),
    };
    let Histogram::Features(qx) = histogram(&data, &bins, p.space())? else {
        unreachable!("labels were dropped")
    };
    let px = p.feature_marginal();
    let h = qx
        .iter()
        .zip(&px)
        .enumerate()
        .map(|(x, (q, s))| {
            if *s > 0.0 {
                Ok(q / s)
            } else if *q > 0.0 {
                Err(Error::ZeroMarginal {
                    axis: AxisName::Feature,
                    cell: p.space().feature_cell(x).to_string(),
                })
            } else {
                Ok(0.0)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    RelativeDensity::feature(h)
}

/// Reads a dataset and replaces its features (and labels) by their cells
/// under `bins`; without bins the raw values are the cells.
fn load_cells(path: &Path, bins: Option<&BinningSpec>) -> Result<SampleSet> {
    let data = SampleSet::read_csv(path)?;
    let Some(spec) = bins else {
        return Ok(data);
    };
    let bins = if spec.is_fitted() { spec.clone() } else { fit_bins(&data, spec)? };
    let xs = data
        .rows()
        .iter()
        .map(|r| bins.feature_cell(&data, r))
        .collect::<Result<Vec<_>>>()?;
    let ys = data
        .rows()
        .iter()
        .map(|r| bins.label_cell(r))
        .collect::<Result<Option<Vec<_>>>>()?;
    let cells = SampleSet::from_cells(&xs, ys.as_deref())?;
    let rows = cells
        .rows()
        .iter()
        .zip(data.rows())
        .map(|(c, d)| SampleRow {
            weight: d.weight,
            ..c.clone()
        })
        .collect();
    cells.with_rows(rows)
}

/// `cell,lambda,stderr,flag`; `stderr` is empty without bootstrap.
fn write_ratio(path: &Path, est: &RatioEstimate, seed: Option<u64>) -> Result<()> {
    let mut w = writer(path, seed)?;
    w.write_record(["cell", "lambda", "stderr", "flag"])?;
    for (i, c) in est.cells.iter().enumerate() {
        let se = est.standard_error.as_ref().map_or_else(String::new, |s| fmt_f64(s[i]));
        w.write_record([c.as_str(), &fmt_f64(est.values[i]), &se, est.flags[i].as_str()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(round_10(1.0), "1");
        assert_eq!(round_10(14.0 / 9.0), "1.5555555556");
        assert_eq!(round_10(-1e-13), "0");
    }

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seed_range("3..7").unwrap(), (3, 7));
        assert!(parse_seed_range("7..7").is_err());
        assert!(parse_seed_range("x").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["shiftkit", "characterize", "--target", "q.csv"]), EXIT_INVALID);
        assert_eq!(run(["shiftkit", "nope"]), EXIT_INVALID);
        assert_eq!(run(["shiftkit", "--help"]), EXIT_OK);
    }
}

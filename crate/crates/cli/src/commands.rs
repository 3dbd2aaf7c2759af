//! One function per subcommand; each returns the value to emit.

use std::path::Path;

use contour_opt::analysis::{
    compare_scenario_method, estimate_phi_bound, phi_sweep, verify_omega_monotone, verify_varrho, OmegaConfig, PhiOptions,
    ScenarioConfig, VarrhoConfig,
};
use contour_opt::dataset::{write_dataset, DataFormat, DataSet, UncertaintyPoint};
use contour_opt::dda::{assemble, find_boundary_points, ProblemTemplate};
use contour_opt::density::{alpha_process, estimate_density, select_bandwidth, BandwidthSelection};
use contour_opt::instances::{planted_threshold_data, threshold_lp, tilted_halfplane_lp};
use contour_opt::linalg::Matrix;
use contour_opt::opf::{run_pipeline, six_bus_deviations, EtaChoice, GridCase, PipelineConfig, VarianceMode, ZetaChoice};
use contour_opt::qpsolver::{solve, SolveResult, SolverOptions};
use contour_opt::reduction::{reduce as run_reduce, EtaSpec, ReductionConfig};
use contour_opt::synth;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};

use crate::config::{pick, probability, seed, FileConfig, ZetaArg};
use crate::error::CliError;
use crate::{input, AlphaArgs, Cli, DataArgs, Experiment, FilterArgs, GenKind, GenerateArgs, OpfArgs, Output, ReduceArgs, SolverArgs, StageSel, VarianceSel, VerifyArgs};

const DEFAULT_ALPHA: f64 = 0.05;
const DEFAULT_RHO: f64 = 0.9;
const BUNDLED_CASES: [&str; 2] = ["case6", "case39"];

fn to_value<S: serde::Serialize>(v: &S) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::compute(format!("serializing output: {e}")))
}

fn output(name: &str, config: Value, result: Value) -> Output {
    Output { name: name.into(), config, result, tables: Vec::new(), stdout_table: None, raw: None }
}

fn load_data(args: &DataArgs, file: &FileConfig) -> Result<(std::path::PathBuf, DataSet<f64>), CliError> {
    let path = args.data.clone().or_else(|| file.data.clone()).ok_or_else(|| CliError::usage("--data is required"))?;
    let ds = input::load(&path, pick(args.integer_cols, file.integer_cols, 0))?;
    Ok((path, ds))
}

/// Multiples of the median distance from a point to its `⌈αD⌉`-th nearest
/// neighbour, taken over at most 1000 evenly strided points.
pub fn default_zeta_grid(ds: &DataSet<f64>, alpha: f64) -> Result<Vec<f64>, CliError> {
    const FALLBACK: [f64; 1] = [0.5];
    if ds.dims().r2 == 0 || ds.len() < 2 {
        return Ok(FALLBACK.to_vec());
    }
    let k = ((alpha * ds.len() as f64).ceil() as usize).clamp(1, ds.len() - 1);
    let index = ds.index();
    let stride = ds.len().div_ceil(1000);
    let mut dists = Vec::new();
    for j in (0..ds.len()).step_by(stride) {
        let near = index.nearest_others(j, k)?;
        if near.len() == k {
            let q = &ds.points()[near[k - 1]];
            dists.push(ds.points()[j].distance(q).expect("same group"));
        }
    }
    if dists.is_empty() {
        return Ok(FALLBACK.to_vec());
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let median = dists[dists.len() / 2];
    if !(median > 0.0) {
        return Ok(FALLBACK.to_vec());
    }
    Ok([0.75, 1.0, 1.25, 1.5, 2.0].iter().map(|f| f * median).collect())
}

struct ZetaResolved {
    zeta: f64,
    auto: bool,
    grid: Option<Vec<f64>>,
}

fn resolve_zeta(ds: &DataSet<f64>, alpha: f64, args: &FilterArgs, file: &FileConfig) -> Result<ZetaResolved, CliError> {
    let arg = args.zeta.clone().or_else(|| file.zeta.clone()).unwrap_or(ZetaArg::Keyword("auto".into()));
    if arg.is_auto()? {
        let grid = match args.zeta_grid.clone().or_else(|| file.zeta_grid.clone()) {
            Some(g) => g,
            None => default_zeta_grid(ds, alpha)?,
        };
        Ok(ZetaResolved { zeta: f64::NAN, auto: true, grid: Some(grid) })
    } else {
        let ZetaArg::Value(z) = arg else { unreachable!("checked by is_auto") };
        Ok(ZetaResolved { zeta: z, auto: false, grid: None })
    }
}

fn select(ds: &DataSet<f64>, z: &ZetaResolved) -> Result<(f64, Option<BandwidthSelection<f64>>), CliError> {
    match &z.grid {
        Some(grid) => {
            let sel = select_bandwidth(ds, grid)?;
            Ok((sel.zeta, Some(sel)))
        }
        None => Ok((z.zeta, None)),
    }
}

pub fn alpha(_cli: &Cli, file: &FileConfig, a: &AlphaArgs) -> Result<Output, CliError> {
    let (path, ds) = load_data(&a.data, file)?;
    let alpha = probability("alpha", pick(a.filter.alpha, file.alpha, DEFAULT_ALPHA))?;
    let z = resolve_zeta(&ds, alpha, &a.filter, file)?;
    let (zeta, bandwidth) = select(&ds, &z)?;
    let de = estimate_density(&ds, zeta)?;
    let res = alpha_process(&ds, &de, alpha)?;
    let config = json!({
        "data": path,
        "integer_cols": ds.dims().r1,
        "alpha": alpha,
        "zeta": if z.auto { json!("auto") } else { json!(zeta) },
        "zeta_grid": z.grid,
    });
    let result = json!({
        "d": res.d,
        "d_alpha": res.d_alpha,
        "alpha": res.alpha,
        "zeta": res.zeta,
        "bandwidth": bandwidth,
        "kept_indices": res.kept_indices,
    });
    Ok(output("alpha", config, result))
}

pub fn reduce(cli: &Cli, file: &FileConfig, a: &ReduceArgs) -> Result<Output, CliError> {
    let (path, ds) = load_data(&a.data, file)?;
    let alpha = probability("alpha", pick(a.filter.alpha, file.alpha, DEFAULT_ALPHA))?;
    let rho = probability("rho", pick(a.rho, file.rho, DEFAULT_RHO))?;
    let seed = seed(cli.seed, file.seed)?;
    let b_bar = pick(a.b_bar, file.b_bar, ds.dims().total());
    let eta = a.eta.or(file.eta);
    if let Some(e) = eta {
        if !(e >= 0.0 && e.is_finite()) {
            return Err(CliError::usage(format!("eta must be finite and non-negative, got {e}")));
        }
    }
    let z = resolve_zeta(&ds, alpha, &a.filter, file)?;
    let (zeta, bandwidth) = select(&ds, &z)?;
    let cfg = ReductionConfig { alpha, zeta, rho, b_bar, eta: eta.map(EtaSpec::Uniform), seed };
    let red = run_reduce(&ds, &cfg)?;
    let config = json!({
        "data": path,
        "integer_cols": ds.dims().r1,
        "alpha": alpha,
        "rho": rho,
        "zeta": if z.auto { json!("auto") } else { json!(zeta) },
        "zeta_grid": z.grid,
        "eta": eta,
        "b_bar": b_bar,
        "seed": seed,
    });
    let mut result = to_value(&red.report)?;
    result["bandwidth"] = to_value(&bandwidth)?;
    Ok(output("reduce", config, result))
}

fn solver_options(args: &SolverArgs, file: &FileConfig) -> Result<SolverOptions<f64>, CliError> {
    let mut o = SolverOptions::default();
    o.eps_abs = pick(args.eps_abs, file.eps_abs, o.eps_abs);
    o.eps_rel = pick(args.eps_rel, file.eps_rel, o.eps_rel);
    o.max_iter = pick(args.max_iter, file.max_iter, o.max_iter);
    if !(o.eps_abs > 0.0 && o.eps_rel >= 0.0 && o.max_iter > 0) {
        return Err(CliError::usage("solver tolerances must be positive and max-iter at least 1"));
    }
    Ok(o)
}

fn load_case(name: &str) -> Result<GridCase, CliError> {
    match GridCase::bundled(name) {
        Some(c) => Ok(c),
        None if Path::new(name).exists() || name.ends_with(".json") => Ok(GridCase::load(Path::new(name))?),
        None => Err(CliError::usage(format!("unknown case {name:?}: give a JSON path or one of {}", BUNDLED_CASES.join(", ")))),
    }
}

pub fn opf(cli: &Cli, file: &FileConfig, a: &OpfArgs) -> Result<Output, CliError> {
    let case_name = a.case.clone().or_else(|| file.case.clone()).unwrap_or_else(|| "case6".into());
    let case = load_case(&case_name)?;
    let (data_path, data) = match a.data.data.clone().or_else(|| file.data.clone()) {
        Some(p) => (Some(p.clone()), input::load(&p, pick(a.data.integer_cols, file.integer_cols, 0))?),
        None if case_name == "case6" => (None, six_bus_deviations()),
        None => return Err(CliError::usage(format!("--data is required for case {case_name:?}"))),
    };
    let alpha = probability("alpha", pick(a.filter.alpha, file.alpha, DEFAULT_ALPHA))?;
    let rho = probability("rho", pick(a.rho, file.rho, DEFAULT_RHO))?;
    let seed = seed(cli.seed, file.seed)?;
    let z = resolve_zeta(&data, alpha, &a.filter, file)?;
    let zeta = match &z.grid {
        Some(grid) => ZetaChoice::Auto { grid: grid.clone() },
        None => ZetaChoice::Fixed(z.zeta),
    };
    let eta_value = a.eta.or(file.eta);
    let eta = match (a.stage, eta_value) {
        (StageSel::ZOnly, _) => EtaChoice::Skip,
        (StageSel::All, Some(e)) => EtaChoice::Fixed(e),
        (StageSel::All, None) => EtaChoice::MatchZeta,
    };
    let variance = match a.variance {
        VarianceSel::Shared => VarianceMode::Shared,
        VarianceSel::PerStage => VarianceMode::PerStage,
    };
    let b_bar = a.b_bar.or(file.b_bar);
    let solver = solver_options(&a.solver, file)?;
    let cfg = PipelineConfig { alpha, rho, zeta: zeta.clone(), eta: eta.clone(), b_bar, seed, variance, solver: solver.clone(), timing: !cli.no_timestamp, replay_tol: 1e-4 };
    let outcome = run_pipeline(&case, &data, &cfg)?;
    let mut table = Vec::new();
    outcome.report.write_table_csv(&mut table).map_err(|e| CliError::compute(format!("writing table: {e}")))?;
    let config = json!({
        "case": case_name,
        "data": data_path,
        "alpha": alpha,
        "rho": rho,
        "zeta": zeta,
        "eta": eta,
        "b_bar": b_bar,
        "stage": a.stage,
        "variance": a.variance,
        "seed": seed,
        "solver": { "eps_abs": solver.eps_abs, "eps_rel": solver.eps_rel, "max_iter": solver.max_iter },
    });
    let mut out = output("opf", config, to_value(&outcome.report)?);
    out.tables.push(("opf_table.csv".into(), String::from_utf8(table).expect("csv output is UTF-8")));
    Ok(out)
}

fn solve_points(tmpl: &ProblemTemplate<f64>, pts: &[UncertaintyPoint<f64>]) -> Result<SolveResult<f64>, CliError> {
    let prog = assemble(tmpl, pts).map_err(|e| CliError::compute(e.to_string()))?;
    let r = solve(&prog, &SolverOptions::default()).map_err(|e| CliError::compute(e.to_string()))?;
    if !r.is_optimal() {
        return Err(CliError::compute(format!("reference solve ended {:?}", r.status)));
    }
    Ok(r)
}

/// Gaussian cloud behind the tilted half-plane instance.
fn tilted_data(size: usize, seed: u64) -> DataSet<f64> {
    synth::gaussian(size, &[0.0, 0.0], &tilted_chol(), seed)
}

fn tilted_chol() -> Matrix<f64> {
    Matrix::from_rows(&[vec![0.3, 0.0], vec![0.0, 0.1]])
}

fn csv_table(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::compute(format!("writing table: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::compute(format!("writing table: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn positive(name: &str, v: usize) -> Result<usize, CliError> {
    if v == 0 {
        Err(CliError::usage(format!("{name} must be at least 1")))
    } else {
        Ok(v)
    }
}

pub fn verify(cli: &Cli, file: &FileConfig, a: &VerifyArgs) -> Result<Output, CliError> {
    let seed = seed(cli.seed, file.seed)?;
    let opts = SolverOptions::default();
    let name = format!("verify-{}", serde_json::to_value(a.experiment).expect("enum serializes").as_str().expect("string"));
    let mut out = match a.experiment {
        Experiment::Varrho => {
            let trials = positive("trials", pick(a.trials, file.trials, 1000))?;
            let zs = a.zs.clone().unwrap_or_else(|| vec![1, 5, 10, 20, 30, 45, 60, 90, 150, 500]);
            if zs.iter().any(|&z| z == 0 || z > 500) {
                return Err(CliError::usage("subsample sizes must lie in 1..=500"));
            }
            // 500 points: 50 copies of the optimum-defining value, the rest below it
            let data = planted_threshold_data(500, 50, seed);
            let cfg = VarrhoConfig { b_bar: 1, alpha: 0.05, d: 1000, trials, seed, tol: 1e-6 };
            let (check, exps) = verify_varrho(&threshold_lp(), &data, &zs, &cfg, &opts)?;
            let verdict = !check.violated && exps.iter().all(|e| e.verdict && e.solver_failures == 0);
            let config = json!({
                "experiment": a.experiment,
                "instance": { "template": "threshold", "d_alpha": 500, "multiplicity": 50, "d": 1000, "alpha": 0.05, "b_bar": 1 },
                "zs": zs,
                "trials": trials,
                "seed": seed,
            });
            let rows = exps.iter().map(|e| {
                vec![e.z.unwrap_or(0).to_string(), e.observed.to_string(), e.bound.to_string(), e.sigma.to_string(), e.verdict.to_string()]
            });
            let table = csv_table(&["z", "observed", "bound", "sigma", "verdict"], rows)?;
            let mut o = output(&name, config, json!({ "verdict": verdict, "planted_check": to_value(&check)?, "experiments": to_value(&exps)? }));
            o.tables.push(("varrho.csv".into(), table));
            o
        }
        Experiment::Phi => {
            let size = positive("size", a.size.unwrap_or(200))?;
            let etas = a.eta_sweep.clone().map(|s| s.0).unwrap_or_else(|| vec![0.01, 0.0325, 0.055, 0.0775, 0.1]);
            if etas.iter().any(|e| !(*e >= 0.0)) {
                return Err(CliError::usage("radii must be non-negative"));
            }
            let tmpl = tilted_halfplane_lp::<f64>();
            let data = tilted_data(size, seed);
            let opt = solve_points(&tmpl, data.points())?;
            let boundary = find_boundary_points(&tmpl, data.points(), &opt, 1e-6, &opts).map_err(|e| CliError::compute(e.to_string()))?;
            let est = estimate_phi_bound(&tmpl, data.points(), &opt, &boundary, &PhiOptions::default())?;
            let points = phi_sweep(&tmpl, &data, &opt, &est, &etas, seed, 0.0, &opts)?;
            let config = json!({
                "experiment": a.experiment,
                "instance": { "template": "tilted_halfplane", "size": size, "std": [0.3, 0.1] },
                "etas": etas,
                "seed": seed,
            });
            let rows = points.iter().map(|p| {
                vec![p.eta.to_string(), p.z_eta.to_string(), p.lower_bound.to_string(), p.measured.to_string(), p.holds.to_string()]
            });
            let table = csv_table(&["eta", "z_eta", "lower_bound", "measured", "holds"], rows)?;
            let mut o = output(&name, config, json!({ "estimate": to_value(&est)?, "points": to_value(&points)? }));
            o.tables.push(("phi_sweep.csv".into(), table));
            o
        }
        Experiment::Omega => {
            let size = positive("size", a.size.unwrap_or(500))?;
            let trials = positive("trials", pick(a.trials, file.trials, 200))?;
            let etas = a.eta_sweep.clone().map(|s| s.0).unwrap_or_else(|| vec![0.0, 0.025, 0.05, 0.075, 0.1]);
            let tmpl = tilted_halfplane_lp::<f64>();
            let data = tilted_data(size, seed);
            let cfg = OmegaConfig { etas: etas.clone(), z: a.z, trials, seed, tol: 1e-6 };
            let rep = verify_omega_monotone(&tmpl, &data, &cfg, &opts)?;
            let config = json!({
                "experiment": a.experiment,
                "instance": { "template": "tilted_halfplane", "size": size, "std": [0.3, 0.1] },
                "etas": etas,
                "z": a.z,
                "trials": trials,
                "seed": seed,
            });
            let rows = rep.points.iter().map(|p| {
                vec![p.eta.to_string(), p.omega.to_string(), p.sigma.to_string(), p.mean_z_eta.to_string()]
            });
            let table = csv_table(&["eta", "omega", "sigma", "mean_z_eta"], rows)?;
            let mut o = output(&name, config, to_value(&rep)?);
            o.tables.push(("omega.csv".into(), table));
            o
        }
        Experiment::Scenario => {
            let trials = positive("trials", pick(a.trials, file.trials, 100))?;
            let n_samples = positive("n-samples", a.n_samples.unwrap_or(209))?;
            let alpha = probability("alpha", a.alpha.or(file.alpha).unwrap_or(0.01))?;
            let tmpl = tilted_halfplane_lp::<f64>();
            let chol = tilted_chol();
            let sampler = move |rng: &mut rand_chacha::ChaCha8Rng| {
                let u: [f64; 2] = [StandardNormal.sample(rng), StandardNormal.sample(rng)];
                UncertaintyPoint::continuous(vec![chol[(0, 0)] * u[0], chol[(1, 0)] * u[0] + chol[(1, 1)] * u[1]])
            };
            let cfg = ScenarioConfig {
                n_samples,
                alpha,
                zeta: 0.05,
                pool_size: 10_000,
                trials,
                probes: 1000,
                probe_lower: vec![-1.5, -1.5],
                probe_upper: vec![1.5, 1.5],
                seed,
                tol: 1e-12,
                header: Some((0.01, 0.05)),
            };
            let rep = compare_scenario_method(&tmpl, &sampler, &cfg)?;
            let config = json!({
                "experiment": a.experiment,
                "instance": { "template": "tilted_halfplane", "std": [0.3, 0.1], "pool_size": cfg.pool_size, "zeta": cfg.zeta },
                "n_samples": n_samples,
                "alpha": alpha,
                "trials": trials,
                "probes": cfg.probes,
                "seed": seed,
            });
            output(&name, config, to_value(&rep)?)
        }
    };
    if a.csv {
        if out.tables.is_empty() {
            return Err(CliError::usage("--csv is not available for this experiment"));
        }
        out.stdout_table = Some(0);
    }
    Ok(out)
}

pub fn generate(cli: &Cli, file: &FileConfig, a: &GenerateArgs) -> Result<Output, CliError> {
    let seed = seed(cli.seed, file.seed)?;
    let (count, d) = (positive("count", a.count)?, positive("dims", a.dims)?);
    let ds = match a.kind {
        GenKind::Normal => synth::standard_normal(count, d, seed),
        GenKind::Uniform => synth::uniform_box(count, &vec![0.0; d], &vec![1.0; d], seed),
        GenKind::StudentT => synth::student_t(count, d, 3.0, 1.0, seed),
        GenKind::Integer => synth::integer_uniform(count, d, -3, 3, seed),
        GenKind::Mixture => synth::gaussian_mixture(count, &[(0.5, vec![-2.0; d], 1.0), (0.5, vec![2.0; d], 1.0)], seed),
        GenKind::Case6 => {
            let all = six_bus_deviations();
            let idx: Vec<usize> = (0..count.min(all.len())).collect();
            all.subset(&idx)?
        }
    };
    match &a.file {
        Some(path) => {
            let format = DataFormat::from_path(path, true);
            contour_opt::dataset::save_dataset(&ds, path, format)?;
            let config = json!({ "kind": a.kind, "count": count, "dims": d, "seed": seed, "file": path });
            Ok(output("generate", config, json!({ "points": ds.len(), "r1": ds.dims().r1, "r2": ds.dims().r2 })))
        }
        None => {
            let mut buf = Vec::new();
            write_dataset(&ds, &mut buf, DataFormat::Csv { header: true })?;
            let mut o = output("generate", Value::Null, Value::Null);
            o.raw = Some(String::from_utf8(buf).expect("csv output is UTF-8"));
            Ok(o)
        }
    }
}

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use chaoskit::bsde::{invariance_propagation_check, picard_solve, AffineGenerator};
use chaoskit::ergodicity::{check_locally_ergodic, reduce_kernel};
use chaoskit::kernel::{cuboid_deviation, is_invariant, orbit_project};
use chaoskit::levy::{path_rng, sample_path};
use chaoskit::mc::{chaos_coefficients, grid_exponential, isometry_check, isometry_target, verify_diagram};
use chaoskit::stats::RunningStats;
use chaoskit::suite::{random_kernel, random_map, rng, run_suite};
use chaoskit::teugels::{build_basis, ns_covariance_check, ns_parseval_check, ns_transform};
use chaoskit::{CellPartition, CellSet, ChaosVector, DyadicMap, GridKernel, GroupSpec, PathSample};
use serde_json::{json, Value};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::config::{
    read_json, BsdeArgs, DiagramArgs, ErgodicArgs, ExtractArgs, Functional, IsometryArgs, NsArgs,
    ProjectArgs, ReduceArgs, RunConfig, SimulateArgs, DEFAULT_EXTRACT_SAMPLES, DEFAULT_SAMPLES,
};

const MAX_DUMPED_PATHS: u64 = 1000;

pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub dump_paths: bool,
}

pub struct Outcome {
    pub passed: bool,
    pub summary: String,
    pub result: Value,
}

fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value.as_ref().with_context(|| format!("missing --{flag}"))
}

fn cells(level: u32) -> usize {
    1usize << level
}

/// Family-wise error rate for checks that test many estimates at once.
const FAMILY_ALPHA: f64 = 0.01;

/// Two-sided Bonferroni threshold for `count` simultaneous z-tests, never below `floor`.
fn bonferroni_sigmas(count: usize, floor: f64) -> f64 {
    let normal = Normal::standard();
    let z = normal.inverse_cdf(1.0 - FAMILY_ALPHA / (2.0 * count.max(1) as f64));
    z.max(floor)
}

fn z_score(estimate: f64, target: f64, std_error: f64) -> f64 {
    let diff = (estimate - target).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / std_error
    }
}

pub fn simulate(ctx: &Context, args: &SimulateArgs) -> Result<Outcome> {
    let c = &ctx.config;
    let paths = args.paths.unwrap_or(1000);
    if paths < 2 {
        bail!("need at least two paths");
    }
    let dump_dir = ctx.out.join("paths");
    if ctx.dump_paths {
        fs::create_dir_all(&dump_dir).with_context(|| format!("creating {}", dump_dir.display()))?;
        if paths > MAX_DUMPED_PATHS {
            log::warn!("only the first {MAX_DUMPED_PATHS} paths are written");
        }
    }
    let (mut first, mut second) = (RunningStats::new(), RunningStats::new());
    for i in 0..paths {
        let path = sample_path(&c.model, c.level, &mut path_rng(c.seed, i));
        let x = path.increment(&c.model, 0..cells(c.level))?;
        first.push(x);
        second.push(x * x);
        if ctx.dump_paths && i < MAX_DUMPED_PATHS {
            write_path(&dump_dir.join(format!("path_{i:06}.csv")), &path)?;
        }
    }
    let variance: f64 = c.model.states().iter().map(|s| s.weight).sum();
    let z_mean = z_score(first.mean(), 0.0, first.std_error());
    let z_var = z_score(second.mean(), variance, second.std_error());
    Ok(Outcome {
        passed: z_mean.max(z_var) <= c.tolerances.mc_sigmas,
        summary: format!(
            "{paths} paths: mean {:.4} (0), second moment {:.4} ({variance:.4})",
            first.mean(),
            second.mean()
        ),
        result: json!({
            "paths": paths,
            "mean": first.mean(),
            "mean_std_error": first.std_error(),
            "second_moment": second.mean(),
            "second_moment_std_error": second.std_error(),
            "second_moment_target": variance,
            "dumped": if ctx.dump_paths { paths.min(MAX_DUMPED_PATHS) } else { 0 },
        }),
    })
}

fn write_path(file: &Path, path: &PathSample) -> Result<()> {
    let mut out = fs::File::create(file).with_context(|| format!("creating {}", file.display()))?;
    path.write_csv(&mut out)?;
    Ok(())
}

pub fn verify_diagram_cmd(ctx: &Context, args: &DiagramArgs) -> Result<Outcome> {
    let c = &ctx.config;
    let paths = args.paths.unwrap_or(100);
    let fixed_kernel: Option<GridKernel> = args.kernel.as_deref().map(read_json).transpose()?;
    let fixed_map: Option<DyadicMap> = args.map.as_deref().map(read_json).transpose()?;
    let level = fixed_kernel.as_ref().map_or(c.level, GridKernel::level);
    let degree = args.degree.unwrap_or(2);
    if fixed_kernel.is_none() && (degree == 0 || degree > cells(level)) {
        bail!("degree {degree} does not fit {} cells", cells(level));
    }
    let mut r = rng(c.seed, 1);
    let mut residuals = Vec::with_capacity(paths as usize);
    for i in 0..paths {
        let f = match &fixed_kernel {
            Some(f) => f.clone(),
            None => random_kernel(degree, level, c.model.state_count(), 0.5, &mut r)?,
        };
        let g = match &fixed_map {
            Some(g) => g.clone(),
            None => random_map(level, &mut r)?,
        };
        let path = sample_path(&c.model, level, &mut path_rng(c.seed, i));
        residuals.push(verify_diagram(&f, &g, &path, &c.model)?);
    }
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    Ok(Outcome {
        passed: worst <= c.tolerances.exact,
        summary: format!("{paths} paths at level {level}, max residual {worst:.3e}"),
        result: json!({ "level": level, "residuals": residuals, "max_residual": worst }),
    })
}

pub fn isometry(ctx: &Context, args: &IsometryArgs) -> Result<Outcome> {
    let c = &ctx.config;
    let f = match &args.kernel {
        Some(p) => read_json(p)?,
        None => {
            let degree = args.degree.unwrap_or(1);
            random_kernel(degree, c.level, c.model.state_count(), 1.0, &mut rng(c.seed, 2))?
        }
    };
    let target = isometry_target(&f, &c.model)?;
    let mc = isometry_check(&f, &c.model, c.samples.unwrap_or(DEFAULT_SAMPLES), c.seed)?;
    let z = z_score(mc.estimate, target, mc.std_error);
    Ok(Outcome {
        passed: z <= c.tolerances.mc_sigmas,
        summary: format!("E[I_n(f)^2] = {:.5} +- {:.5}, target {target:.5}", mc.estimate, mc.std_error),
        result: json!({ "estimate": mc, "target": target, "z": z }),
    })
}

pub fn extract(ctx: &Context, args: &ExtractArgs) -> Result<Outcome> {
    let c = &ctx.config;
    let functional = args.functional.unwrap_or(Functional::Exponential);
    let n_max = args.n_max.unwrap_or(3);
    let a_cell = args.a_cell.unwrap_or(0);
    let t_cell = args.t_cell.unwrap_or(cells(c.level));
    if a_cell >= t_cell || t_cell > cells(c.level) {
        bail!("cell range {a_cell}..{t_cell} is not inside 0..{}", cells(c.level));
    }
    let model = &c.model;
    let f = |path: &PathSample| match functional {
        Functional::Exponential => grid_exponential(path, model, a_cell, t_cell).unwrap_or(f64::NAN),
        Functional::Increment => path.increment(model, a_cell..t_cell).unwrap_or(f64::NAN),
    };
    let samples = c.samples.unwrap_or(DEFAULT_EXTRACT_SAMPLES);
    let extraction = chaos_coefficients(model, &f, n_max, c.level, samples, c.seed)?;
    let inside = |cells: &[u32]| cells.iter().all(|&k| (a_cell..t_cell).contains(&(k as usize)));
    let target = |n: usize, cells: &[u32]| -> f64 {
        match functional {
            Functional::Exponential if inside(cells) => 1.0 / (1..=n).product::<usize>() as f64,
            Functional::Increment if n == 1 && inside(cells) => 1.0,
            _ => 0.0,
        }
    };
    let constant_target = match functional {
        Functional::Exponential => 1.0,
        Functional::Increment => 0.0,
    };
    let mut worst = z_score(extraction.constant.estimate, constant_target, extraction.constant.std_error);
    for e in &extraction.entries {
        worst = worst.max(z_score(e.estimate, target(e.n, &e.cells), e.std_error));
    }
    let threshold = bonferroni_sigmas(extraction.entries.len() + 1, c.tolerances.extract_sigmas);
    Ok(Outcome {
        passed: worst <= threshold,
        summary: format!(
            "{} coefficients up to degree {n_max}, largest deviation {worst:.2} standard errors (limit {threshold:.2})",
            extraction.entries.len()
        ),
        result: json!({
            "functional": functional,
            "samples": samples,
            "threshold_sigmas": threshold,
            "constant": extraction.constant,
            "entries": extraction.entries,
            "chaos": extraction.chaos,
            "max_z": worst,
        }),
    })
}

pub fn project(ctx: &Context, args: &ProjectArgs) -> Result<Outcome> {
    let f: GridKernel = read_json(required(&args.kernel, "kernel")?)?;
    let group: GroupSpec = read_json(required(&args.group, "group")?)?;
    let projected = orbit_project(&f, &group)?;
    let invariant = is_invariant(&projected, &group, ctx.config.tolerances.exact)?;
    let moved = f.add_scaled(&projected, -1.0)?.l2_norm_sq(&ctx.config.model)?.sqrt();
    Ok(Outcome {
        passed: invariant,
        summary: format!("orbit projection moved the kernel by {moved:.3e}; invariant: {invariant}"),
        result: json!({ "kernel": projected, "distance": moved, "invariant": invariant }),
    })
}

pub fn reduce(ctx: &Context, args: &ReduceArgs) -> Result<Outcome> {
    let f: GridKernel = read_json(required(&args.kernel, "kernel")?)?;
    let partition: CellPartition = read_json(required(&args.partition, "partition")?)?;
    let group = match &args.group {
        Some(p) => read_json(p)?,
        None => GroupSpec::block_group(&partition, f.level())?,
    };
    let reduction = reduce_kernel(&f, &partition, &group, &ctx.config.model)?;
    let deviation = cuboid_deviation(&reduction.kernel, &partition)?;
    Ok(Outcome {
        passed: deviation <= ctx.config.tolerances.exact,
        summary: format!("residual {:.3e}, cuboid spread {deviation:.3e}", reduction.residual),
        result: json!({ "kernel": reduction.kernel, "residual": reduction.residual, "cuboid_deviation": deviation }),
    })
}

pub fn check_ergodic(ctx: &Context, args: &ErgodicArgs) -> Result<Outcome> {
    let set: CellSet = required(&args.set, "set")?.parse()?;
    let d_max = args.d_max.unwrap_or(ctx.config.level.max(set.min_level()));
    let group = match &args.group {
        Some(p) => read_json(p)?,
        None => GroupSpec::restricted(&set, d_max)?,
    };
    let cert = check_locally_ergodic(&set, &group, d_max)?;
    let failing = cert.pairs.iter().filter(|p| !p.transitive).count();
    Ok(Outcome {
        passed: cert.passed,
        summary: format!(
            "{} pairs over levels {}..={}, {failing} without a transitive subgroup",
            cert.pairs.len(),
            cert.checked_levels[0],
            cert.checked_levels[1]
        ),
        result: serde_json::to_value(&cert)?,
    })
}

pub fn ns(ctx: &Context, args: &NsArgs) -> Result<Outcome> {
    let model = &ctx.config.model;
    let f: GridKernel = read_json(required(&args.kernel, "kernel")?)?;
    let basis = build_basis(model);
    let transform = ns_transform(&f, &basis, model)?;
    let parseval = ns_parseval_check(&f, &basis, model)?;
    let covariance = match &args.map {
        Some(p) => Some(ns_covariance_check(&f, &basis, &read_json::<DyadicMap>(p)?, model)?),
        None => None,
    };
    let t = &ctx.config.tolerances;
    Ok(Outcome {
        passed: parseval <= t.parseval && covariance.is_none_or(|c| c <= t.exact),
        summary: format!(
            "{} basis polynomials, Parseval residual {parseval:.3e}{}",
            basis.len(),
            covariance.map_or(String::new(), |c| format!(", covariance residual {c:.3e}"))
        ),
        result: json!({
            "basis": basis,
            "transform": transform,
            "parseval_residual": parseval,
            "covariance_residual": covariance,
        }),
    })
}

pub fn bsde(ctx: &Context, args: &BsdeArgs) -> Result<Outcome> {
    let model = &ctx.config.model;
    let terminal: ChaosVector = read_json(required(&args.terminal, "terminal")?)?;
    let generator: AffineGenerator = read_json(required(&args.generator, "generator")?)?;
    let iterations = args.iters.unwrap_or(10);
    let tol = args.tol.unwrap_or(1e-10);
    let run = picard_solve(&terminal, &generator, iterations, tol, model)?;
    let predictable = run.state.z.is_predictable();
    let propagation = match &args.partition {
        Some(p) => {
            let partition: CellPartition = read_json(p)?;
            Some(invariance_propagation_check(
                &terminal,
                &generator,
                &partition,
                run.history.len(),
                model,
                ctx.config.tolerances.exact,
            )?)
        }
        None => None,
    };
    let invariant = propagation.as_ref().is_none_or(|r| r.passed);
    Ok(Outcome {
        passed: predictable && invariant,
        summary: format!(
            "{} iterations, last distance {:.3e}, converged {}{}",
            run.history.len(),
            run.history.last().copied().unwrap_or(0.0),
            run.converged,
            propagation
                .as_ref()
                .map_or(String::new(), |r| format!(", invariance propagated {}", r.passed))
        ),
        result: json!({
            "y": run.state.y,
            "z": {
                "norm_sq": run.state.z.norm_sq(model)?,
                "predictable": predictable,
                "max_degree": run.state.z.values.iter().map(ChaosVector::max_degree).max().unwrap_or(0),
            },
            "history": run.history,
            "converged": run.converged,
            "propagation": propagation,
        }),
    })
}

pub fn suite(ctx: &Context) -> Result<Outcome> {
    let report = run_suite(ctx.config.seed);
    for c in &report.criteria {
        println!("{}", c.line());
    }
    let passed = report.criteria.iter().filter(|c| c.passed).count();
    Ok(Outcome {
        passed: report.passed,
        summary: format!("{passed}/{} criteria passed", report.criteria.len()),
        result: serde_json::to_value(&report)?,
    })
}

//! `simulate`, `allocate` and `report`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use owc_core::allocate::{compare_to_reference, AllocationProblem, Assignment, Objective};
use owc_core::cache::{key_hex, scenario_digest, CacheStatus, ChannelCache};
use owc_core::linkbudget::{meets_threshold, AmbientPolicy, supported_rate, NoiseModel};
use owc_core::metrics::{build_channel_matrix, Bandwidth, BandwidthConvention, ChannelMatrix};
use owc_core::raytrace::BounceConfig;
use owc_core::scene::builtin::{builtin_scenario, reference_allocation, BUILTIN_NAMES};
use owc_core::scene::schema::load_scenario;
use owc_core::scene::{Scenario, Wavelength};
use serde_json::{json, Value};

use crate::args::{CacheArgs, CommonArgs, SolverArg};
use crate::manifest;
use crate::output::{fmt_num, fmt_opt, write_atomic, write_csv, DirLock, Table};
use crate::CliError;

pub const CHANNEL_CSV: &str = "channel.csv";
pub const ALLOCATION_CSV: &str = "allocation.csv";
pub const OBJECTIVE_TXT: &str = "objective.txt";
pub const VS_TABLE2_TXT: &str = "vs_table2.txt";
pub const FIG3_CSV: &str = "fig3_bandwidth.csv";
pub const FIG4_CSV: &str = "fig4_sinr.csv";
pub const FIG5_CSV: &str = "fig5_rate.csv";

pub const DEFAULT_CACHE_DIR: &str = ".owc-cache";

const CHANNEL_HEADER: [&str; 6] = ["user", "branch", "ap", "dc_gain", "bw_3db_hz", "delay_spread_s"];
const ALLOCATION_HEADER: [&str; 7] =
    ["user", "ap", "wavelength", "branch", "sinr_db", "meets_threshold", "supported_rate_bps"];

/// A scenario plus where it came from.
#[derive(Clone, Debug)]
pub struct LoadedScenario {
    pub scenario: Scenario<f64>,
    pub source: String,
    /// Loaded by built-in name, so a published allocation exists.
    pub builtin: bool,
}

/// An existing file wins over a built-in of the same name.
pub fn resolve_scenario(reference: &str) -> Result<LoadedScenario, CliError> {
    let path = Path::new(reference);
    if path.is_file() {
        return Ok(LoadedScenario { scenario: load_scenario(path)?, source: path.display().to_string(), builtin: false });
    }
    if BUILTIN_NAMES.contains(&reference) {
        return Ok(LoadedScenario {
            scenario: builtin_scenario(reference)?,
            source: format!("builtin:{reference}"),
            builtin: true,
        });
    }
    Err(CliError::Validation(format!(
        "scenario {reference:?} is neither a file nor a built-in layout ({})",
        BUILTIN_NAMES.join(", ")
    )))
}

pub fn bounce_config(args: &CommonArgs, scenario: &Scenario<f64>) -> BounceConfig<f64> {
    match args.resolution {
        Some(r) => BounceConfig::new(r.into(), args.bounces),
        None => BounceConfig::from_room(&scenario.room, args.bounces),
    }
}

pub fn channel_cache(args: &CacheArgs) -> Option<ChannelCache> {
    if args.no_cache {
        return None;
    }
    Some(ChannelCache::new(args.cache_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR))))
}

pub fn channel_matrix(
    scenario: &Scenario<f64>,
    cfg: BounceConfig<f64>,
    convention: BandwidthConvention,
    cache: &CacheArgs,
) -> Result<(ChannelMatrix<f64>, CacheStatus), CliError> {
    cfg.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    match channel_cache(cache) {
        Some(c) => Ok(c.load_or_build(scenario, cfg, convention)?),
        None => Ok((build_channel_matrix(scenario, cfg, convention)?, CacheStatus::Disabled)),
    }
}

/// Runs `f` on a dedicated pool when a thread count is given.
pub fn with_threads<R: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<R, CliError> + Send,
) -> Result<R, CliError> {
    match threads {
        None => f(),
        Some(0) => Err(CliError::Validation("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::internal("starting thread pool", e))?
            .install(f),
    }
}

fn check_common(args: &CommonArgs) -> Result<(), CliError> {
    if !(args.kappa.is_finite() && args.kappa > 0.0) {
        return Err(CliError::Validation(format!("--kappa must be positive, got {}", args.kappa)));
    }
    Ok(())
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn run_section(args: &CommonArgs, loaded: &LoadedScenario, cfg: &BounceConfig<f64>, cache: CacheStatus) -> Value {
    let convention: BandwidthConvention = args.bw_convention.into();
    json!({
        "scenario": {
            "name": loaded.scenario.name,
            "source": loaded.source,
            "sha256": key_hex(&scenario_digest(&loaded.scenario)),
        },
        "bounce_config": cfg,
        "bw_convention": convention,
        "threads": rayon::current_num_threads(),
        "cache": {
            "status": cache.as_str(),
            "dir": channel_cache(&args.cache).map(|c| c.dir().display().to_string()),
        },
    })
}

fn user_order(matrix: &ChannelMatrix<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..matrix.num_users()).collect();
    order.sort_by_key(|&u| matrix.user_ids[u]);
    order
}

fn bandwidth_hz(b: Option<Bandwidth<f64>>) -> Option<f64> {
    b.map(Bandwidth::hz)
}

/// Rows of `channel.csv`: user id, 1-based branch and AP id ascending.
pub fn channel_rows(matrix: &ChannelMatrix<f64>) -> Vec<Vec<String>> {
    let mut aps: Vec<usize> = (0..matrix.num_aps()).collect();
    aps.sort_by_key(|&a| matrix.ap_ids[a]);
    let mut rows = Vec::with_capacity(matrix.links.len());
    for u in user_order(matrix) {
        for b in 0..matrix.num_branches {
            for &a in &aps {
                let l = matrix.link(u, b, a);
                rows.push(vec![
                    matrix.user_ids[u].to_string(),
                    (b + 1).to_string(),
                    matrix.ap_ids[a].to_string(),
                    fmt_num(l.dc_gain),
                    fmt_opt(bandwidth_hz(l.bw_3db)),
                    fmt_opt(l.delay_spread),
                ]);
            }
        }
    }
    rows
}

#[derive(Debug)]
pub struct SimulateOutcome {
    pub matrix: ChannelMatrix<f64>,
    pub cache: CacheStatus,
    pub out: PathBuf,
}

pub fn cmd_simulate(args: &CommonArgs) -> Result<SimulateOutcome, CliError> {
    check_common(args)?;
    with_threads(args.threads, || {
        let _lock = DirLock::acquire(&args.out)?;
        let loaded = resolve_scenario(&args.scenario)?;
        let cfg = bounce_config(args, &loaded.scenario);
        let t = Instant::now();
        let (matrix, cache) = channel_matrix(&loaded.scenario, cfg, args.bw_convention.into(), &args.cache)?;
        let trace_ms = ms(t);
        let t = Instant::now();
        write_csv(&args.out.join(CHANNEL_CSV), &CHANNEL_HEADER, &channel_rows(&matrix))?;
        let mut section = run_section(args, &loaded, &cfg, cache);
        section["outputs"] = json!([CHANNEL_CSV]);
        section["timings_ms"] = json!({"channel": trace_ms, "write": ms(t)});
        manifest::update(&args.out, "simulate", section)?;
        log::info!("simulate: {} links, cache {}", matrix.links.len(), cache.as_str());
        Ok(SimulateOutcome { matrix, cache, out: args.out.clone() })
    })
}

/// Noise model with the requested ambient policy and the effective objective.
pub fn allocation_problem(
    args: &CommonArgs,
    scenario: &Scenario<f64>,
    matrix: &ChannelMatrix<f64>,
) -> Result<AllocationProblem<f64>, CliError> {
    let objective: Objective = args.objective.map(Into::into).unwrap_or(scenario.solver.objective);
    let noise = NoiseModel { ambient: args.ambient.into(), ..scenario.noise.clone() };
    Ok(AllocationProblem::new(matrix, &noise, objective, &Wavelength::ALL)?)
}

pub fn solve(problem: &AllocationProblem<f64>, solver: SolverArg) -> Result<Assignment<f64>, CliError> {
    Ok(match solver {
        SolverArg::Exact => problem.solve_exact()?,
        SolverArg::Exhaustive => problem.solve_exhaustive()?,
        SolverArg::Greedy => problem.solve_greedy()?,
    })
}

/// Data rate a user can carry on its assigned link.
pub fn user_rate(
    scenario: &Scenario<f64>,
    matrix: &ChannelMatrix<f64>,
    user_id: u32,
    branch: usize,
    ap: usize,
    kappa: f64,
) -> f64 {
    let u = matrix.user_ids.iter().position(|&id| id == user_id).expect("user in matrix");
    let bw = match matrix.link(u, branch, ap).bw_3db {
        Some(b) => b.hz(),
        None => 0.0,
    };
    let configured = scenario.rate_overrides.get(&user_id).copied().unwrap_or(scenario.configured_rate_bps);
    supported_rate(bw, scenario.noise.receiver_bandwidth, configured, kappa)
}

pub fn allocation_rows(
    assignment: &Assignment<f64>,
    scenario: &Scenario<f64>,
    matrix: &ChannelMatrix<f64>,
    kappa: f64,
) -> Vec<Vec<String>> {
    assignment
        .users
        .iter()
        .map(|u| {
            vec![
                u.user_id.to_string(),
                u.ap_id.to_string(),
                u.wavelength.name().to_owned(),
                (u.branch + 1).to_string(),
                fmt_num(u.sinr_db),
                meets_threshold(u.sinr_db).to_string(),
                fmt_num(user_rate(scenario, matrix, u.user_id, u.branch, u.ap, kappa)),
            ]
        })
        .collect()
}

fn triple(ap: u32, branch: usize, w: Wavelength) -> String {
    format!("{ap},{},{}", branch + 1, w.name())
}

/// Side-by-side text against the published allocation of a built-in layout.
pub fn reference_report(
    name: &str,
    problem: &AllocationProblem<f64>,
    ours: &Assignment<f64>,
) -> Result<(String, f64, bool), CliError> {
    let published = reference_allocation(name)?;
    let reference = problem.evaluate_reference(&published)?;
    let cmp = compare_to_reference(ours, &reference, problem)?;
    let by_user: BTreeMap<u32, _> = published.iter().map(|e| (e.user_id, e)).collect();
    let mut text = String::new();
    text.push_str(&format!("scenario: {name}\nobjective: {}\n", problem.objective().as_str()));
    text.push_str("columns: user, ours (ap,branch,wavelength), published, published with best branch, match\n");
    let mut published_matches = 0;
    for row in &cmp.rows {
        let p = by_user[&row.user_id];
        let published_triple = (p.ap_id, p.branch as usize - 1, p.wavelength);
        if row.ours == published_triple {
            published_matches += 1;
        }
        text.push_str(&format!(
            "{} {} {} {} {}\n",
            row.user_id,
            triple(row.ours.0, row.ours.1, row.ours.2),
            triple(published_triple.0, published_triple.1, published_triple.2),
            triple(row.reference.0, row.reference.1, row.reference.2),
            if row.matches { "yes" } else { "no" },
        ));
    }
    let published_fraction = published_matches as f64 / cmp.rows.len() as f64;
    text.push_str(&format!("match_fraction_published: {}\n", fmt_num(published_fraction)));
    text.push_str(&format!("match_fraction_best_branch: {}\n", fmt_num(cmp.match_fraction)));
    text.push_str(&format!("objective_ours: {}\n", fmt_num(cmp.objective_ours)));
    text.push_str(&format!("objective_published: {}\n", fmt_num(cmp.objective_reference)));
    text.push_str(&format!("dominates: {}\n", cmp.dominates));
    Ok((text, cmp.match_fraction, cmp.dominates))
}

#[derive(Debug)]
pub struct AllocateOutcome {
    pub assignment: Assignment<f64>,
    pub cache: CacheStatus,
    /// `(match fraction, dominates)` for built-in layouts.
    pub reference: Option<(f64, bool)>,
}

pub fn cmd_allocate(args: &CommonArgs) -> Result<AllocateOutcome, CliError> {
    check_common(args)?;
    with_threads(args.threads, || {
        let _lock = DirLock::acquire(&args.out)?;
        let loaded = resolve_scenario(&args.scenario)?;
        let scenario = &loaded.scenario;
        let cfg = bounce_config(args, scenario);
        let t = Instant::now();
        let (matrix, cache) = channel_matrix(scenario, cfg, args.bw_convention.into(), &args.cache)?;
        let trace_ms = ms(t);

        let problem = allocation_problem(args, scenario, &matrix)?;
        let t = Instant::now();
        let assignment = solve(&problem, args.solver)?;
        let solve_ms = ms(t);

        let rows = allocation_rows(&assignment, scenario, &matrix, args.kappa);
        write_csv(&args.out.join(ALLOCATION_CSV), &ALLOCATION_HEADER, &rows)?;
        let objective_text = format!(
            "objective: {}\nvalue: {}\n",
            assignment.objective.as_str(),
            fmt_num(assignment.objective_value)
        );
        write_atomic(&args.out.join(OBJECTIVE_TXT), objective_text.as_bytes())?;

        let mut outputs = vec![ALLOCATION_CSV, OBJECTIVE_TXT];
        let reference = if loaded.builtin {
            let (text, fraction, dominates) = reference_report(&scenario.name, &problem, &assignment)?;
            write_atomic(&args.out.join(VS_TABLE2_TXT), text.as_bytes())?;
            outputs.push(VS_TABLE2_TXT);
            Some((fraction, dominates))
        } else {
            None
        };

        let mut section = run_section(args, &loaded, &cfg, cache);
        section["solver"] = json!({
            "solver": args.solver.as_str(),
            "objective": assignment.objective,
            "tiebreak": scenario.solver.tiebreak,
            "nodes": assignment.stats.nodes,
            "leaves": assignment.stats.leaves,
        });
        section["ambient"] = json!(AmbientPolicy::from(args.ambient));
        section["kappa"] = json!(args.kappa);
        section["objective_value"] = json!(assignment.objective_value);
        section["outputs"] = json!(outputs);
        section["timings_ms"] = json!({"channel": trace_ms, "solve": solve_ms});
        manifest::update(&args.out, "allocate", section)?;
        Ok(AllocateOutcome { assignment, cache, reference })
    })
}

/// Builds the three per-user figure tables from a run directory.
pub fn cmd_report(out: &Path) -> Result<(), CliError> {
    let missing: Vec<String> = [CHANNEL_CSV, ALLOCATION_CSV]
        .iter()
        .map(|f| out.join(f))
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Validation(format!(
            "report needs a prior simulate and allocate run; missing: {}",
            missing.join(", ")
        )));
    }
    let _lock = DirLock::acquire(out)?;
    let t = Instant::now();

    let channel_path = out.join(CHANNEL_CSV);
    let channel = Table::read(&channel_path)?;
    let (cu, cb, ca, cbw) = (
        channel.column(&channel_path, "user")?,
        channel.column(&channel_path, "branch")?,
        channel.column(&channel_path, "ap")?,
        channel.column(&channel_path, "bw_3db_hz")?,
    );
    let bandwidth: BTreeMap<(&str, &str, &str), &str> =
        channel.rows.iter().map(|r| ((r[cu].as_str(), r[cb].as_str(), r[ca].as_str()), r[cbw].as_str())).collect();

    let alloc_path = out.join(ALLOCATION_CSV);
    let alloc = Table::read(&alloc_path)?;
    let col = |name| alloc.column(&alloc_path, name);
    let (au, aa, ab, asinr, ameets, arate) = (
        col("user")?,
        col("ap")?,
        col("branch")?,
        col("sinr_db")?,
        col("meets_threshold")?,
        col("supported_rate_bps")?,
    );

    let mut fig3 = Vec::new();
    let mut fig4 = Vec::new();
    let mut fig5 = Vec::new();
    for r in &alloc.rows {
        let key = (r[au].as_str(), r[ab].as_str(), r[aa].as_str());
        let bw = bandwidth.get(&key).ok_or_else(|| {
            CliError::Validation(format!(
                "{}: user {} branch {} ap {} has no row in {}",
                alloc_path.display(),
                key.0,
                key.1,
                key.2,
                channel_path.display()
            ))
        })?;
        fig3.push(vec![r[au].clone(), r[aa].clone(), r[ab].clone(), bw.to_string()]);
        fig4.push(vec![r[au].clone(), r[asinr].clone(), r[ameets].clone()]);
        fig5.push(vec![r[au].clone(), r[arate].clone()]);
    }
    write_csv(&out.join(FIG3_CSV), &["user", "ap", "branch", "bw_3db_hz"], &fig3)?;
    write_csv(&out.join(FIG4_CSV), &["user", "sinr_db", "meets_threshold"], &fig4)?;
    write_csv(&out.join(FIG5_CSV), &["user", "supported_rate_bps"], &fig5)?;
    manifest::update(
        out,
        "report",
        json!({
            "inputs": [CHANNEL_CSV, ALLOCATION_CSV],
            "outputs": [FIG3_CSV, FIG4_CSV, FIG5_CSV],
            "timings_ms": {"report": ms(t)},
        }),
    )
}

/// Every regular file in `dir` except the manifest and lock, by name.
pub fn data_files(dir: &Path) -> std::io::Result<BTreeMap<String, Vec<u8>>> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.file_type()?.is_file() && name != manifest::MANIFEST_FILE && name != crate::output::LOCK_FILE {
            files.insert(name, fs::read(entry.path())?);
        }
    }
    Ok(files)
}

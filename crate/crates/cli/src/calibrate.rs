//! Qualitative SINR claims on the built-in layouts.
//!
//! Defaults are checked first. A failing claim is re-checked under every
//! other combination of `--bw-convention` and `--ambient` to name the flags
//! that flip it.

use std::time::Instant;

use owc_core::allocate::{AllocationProblem, Assignment};
use owc_core::linkbudget::{meets_threshold, SINR_THRESHOLD_DB};
use owc_core::scene::builtin::reference_allocation;
use serde_json::json;

use crate::args::{AmbientArg, BwConventionArg, CalibrateArgs, CommonArgs, SolverArg};
use crate::commands::{allocation_problem, bounce_config, channel_matrix, resolve_scenario, solve, with_threads};
use crate::manifest;
use crate::output::{fmt_num, write_atomic, DirLock};
use crate::CliError;

pub const CALIBRATION_TXT: &str = "calibration.txt";

const CONFERENCE: &str = "conference_table";
const COCKTAILS: [&str; 2] = ["cocktail1", "cocktail2"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Variant {
    pub bw_convention: BwConventionArg,
    pub ambient: AmbientArg,
}

impl Variant {
    pub const DEFAULT: Self = Self { bw_convention: BwConventionArg::Optical, ambient: AmbientArg::All };

    const ALL: [Self; 4] = [
        Self::DEFAULT,
        Self { bw_convention: BwConventionArg::Optical, ambient: AmbientArg::ExcludeServing },
        Self { bw_convention: BwConventionArg::Electrical, ambient: AmbientArg::All },
        Self { bw_convention: BwConventionArg::Electrical, ambient: AmbientArg::ExcludeServing },
    ];

    /// Flags that differ from the defaults.
    pub fn flags(self) -> String {
        let mut f = Vec::new();
        if self.bw_convention == BwConventionArg::Electrical {
            f.push("--bw-convention electrical");
        }
        if self.ambient == AmbientArg::ExcludeServing {
            f.push("--ambient exclude-serving");
        }
        if f.is_empty() {
            "(defaults)".into()
        } else {
            f.join(" ")
        }
    }
}

/// Users below threshold for one layout under one variant.
#[derive(Clone, Debug)]
pub struct LayoutOutcome {
    pub name: String,
    pub optimum: Vec<(u32, f64)>,
    pub below: Vec<u32>,
    pub published_below: Vec<u32>,
}

#[derive(Clone, Debug)]
pub struct Claim {
    pub statement: String,
    pub passed: bool,
    /// Non-default variants under which a failing claim holds.
    pub flipped_by: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct CalibrationReport {
    pub layouts: Vec<LayoutOutcome>,
    pub claims: Vec<Claim>,
    pub text: String,
}

fn below(a: &Assignment<f64>) -> Vec<u32> {
    a.users.iter().filter(|u| !meets_threshold(u.sinr_db)).map(|u| u.user_id).collect()
}

fn layout(name: &str, variant: Variant, args: &CalibrateArgs) -> Result<LayoutOutcome, CliError> {
    let mut common = CommonArgs::new(name, &args.out);
    common.resolution = args.resolution;
    common.bounces = args.bounces;
    common.cache = args.cache.clone();
    common.bw_convention = variant.bw_convention;
    common.ambient = variant.ambient;
    common.solver = SolverArg::Exact;
    let loaded = resolve_scenario(name)?;
    let cfg = bounce_config(&common, &loaded.scenario);
    let (matrix, _) = channel_matrix(&loaded.scenario, cfg, variant.bw_convention.into(), &common.cache)?;
    let problem: AllocationProblem<f64> = allocation_problem(&common, &loaded.scenario, &matrix)?;
    let optimum = solve(&problem, SolverArg::Exact)?;
    let published = problem.evaluate_reference(&reference_allocation(name)?)?;
    Ok(LayoutOutcome {
        name: name.to_owned(),
        optimum: optimum.users.iter().map(|u| (u.user_id, u.sinr_db)).collect(),
        below: below(&optimum),
        published_below: below(&published),
    })
}

fn conference_holds(l: &[LayoutOutcome]) -> bool {
    l.iter().filter(|l| l.name == CONFERENCE).all(|l| l.below.is_empty())
}

fn cocktail_holds(l: &[LayoutOutcome]) -> bool {
    l.iter().filter(|l| COCKTAILS.contains(&l.name.as_str())).any(|l| !l.below.is_empty())
}

fn ids(v: &[u32]) -> String {
    if v.is_empty() {
        "none".into()
    } else {
        v.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
    }
}

pub fn calibrate(args: &CalibrateArgs) -> Result<CalibrationReport, CliError> {
    let run = |variant: Variant, names: &[&str]| -> Result<Vec<LayoutOutcome>, CliError> {
        names.iter().map(|n| layout(n, variant, args)).collect()
    };
    let all: Vec<&str> = std::iter::once(CONFERENCE).chain(COCKTAILS).collect();
    let layouts = run(Variant::DEFAULT, &all)?;

    type Check = fn(&[LayoutOutcome]) -> bool;
    let checks: [(String, &[&str], Check); 2] = [
        (format!("{CONFERENCE}: every user at or above {SINR_THRESHOLD_DB} dB"), &[CONFERENCE], conference_holds),
        (format!("cocktail layouts: at least one user below {SINR_THRESHOLD_DB} dB"), &COCKTAILS, cocktail_holds),
    ];
    let mut claims = Vec::new();
    for (statement, names, holds) in checks {
        let passed = holds(&layouts);
        let mut flipped_by = Vec::new();
        if !passed {
            for v in &Variant::ALL[1..] {
                if holds(&run(*v, names)?) {
                    flipped_by.push(v.flags());
                }
            }
        }
        claims.push(Claim { statement, passed, flipped_by });
    }

    let mut text = format!(
        "calibration: exact solver, scenario objective, bounces {}, resolution {}\n",
        args.bounces,
        args.resolution.map_or("scenario", |r| if r == crate::args::ResolutionArg::Paper { "paper" } else { "desk" })
    );
    for l in &layouts {
        let sinr: Vec<String> = l.optimum.iter().map(|(id, s)| format!("{id}:{s:.2}")).collect();
        text.push_str(&format!(
            "{}: optimum below threshold: {}; published allocation below threshold: {}\n  sinr_db {}\n",
            l.name,
            ids(&l.below),
            ids(&l.published_below),
            sinr.join(" ")
        ));
    }
    for c in &claims {
        text.push_str(&format!("{} {}\n", if c.passed { "PASS" } else { "FAIL" }, c.statement));
        if !c.passed {
            let flips = if c.flipped_by.is_empty() { "no flag combination".to_owned() } else { c.flipped_by.join("; ") };
            text.push_str(&format!("  holds under: {flips}\n"));
        }
    }
    Ok(CalibrationReport { layouts, claims, text })
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<CalibrationReport, CliError> {
    with_threads(args.threads, || {
        let _lock = DirLock::acquire(&args.out)?;
        let t = Instant::now();
        let report = calibrate(args)?;
        write_atomic(&args.out.join(CALIBRATION_TXT), report.text.as_bytes())?;
        let claims: Vec<_> = report
            .claims
            .iter()
            .map(|c| json!({"claim": c.statement, "passed": c.passed, "holds_under": c.flipped_by}))
            .collect();
        manifest::update(
            &args.out,
            "calibrate",
            json!({
                "bounces": args.bounces,
                "claims": claims,
                "threads": rayon::current_num_threads(),
                "outputs": [CALIBRATION_TXT],
                "timings_ms": {"calibrate": t.elapsed().as_secs_f64() * 1e3},
            }),
        )?;
        log::info!("calibration written; threshold {}", fmt_num(SINR_THRESHOLD_DB));
        Ok(report)
    })
}

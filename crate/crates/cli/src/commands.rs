//! One function per subcommand. Each returns the report, optional CSV text,
//! a terminal summary and the exit code.

use martingality::feller::{martingale_verdict_with, FellerOptions, FellerReport, VerdictOptions};
use martingality::hilbert::{estimate_hilbert_expectation, mode_statistics};
use martingality::jumpkit::{
    check_jump_bound, jump_mean_direct, jump_stopped_means, simulate_jump_path, validate, verdict_jump,
    verify_compensator_identity, JumpStop,
};
use martingality::mc::{
    doubling_ladder, ensemble_rows, estimate_deficit, estimate_mean_direct, ladder_slope, novikov_samples, DeficitOptions,
    MCEstimate, SimConfig,
};
use martingality::model::{Classification, DeficitCurve};
use serde_json::json;

use crate::acceptance;
use crate::catalog;
use crate::config::{Format, RunConfig};
use crate::report::{csv, num, table, to_value, Report};
use crate::CliError;

/// Jump paths exported to CSV by `jump`.
pub const JUMP_CSV_PATHS: usize = 32;

/// Tolerance on the Monte Carlo deficit when cross-checking a true-martingale
/// verdict.
const CROSS_CHECK_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Classify,
    Deficit,
    Novikov,
    Jump,
    Hilbert,
    Ensemble,
    Selftest,
    Catalog,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Deficit => "deficit",
            Command::Novikov => "novikov",
            Command::Jump => "jump",
            Command::Hilbert => "hilbert",
            Command::Ensemble => "ensemble",
            Command::Selftest => "selftest",
            Command::Catalog => "catalog",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub report: Report,
    pub csv: Option<String>,
    pub summary: String,
    pub exit_code: i32,
}

impl Output {
    fn new(report: Report, summary: String) -> Self {
        Self { report, csv: None, summary, exit_code: 0 }
    }

    /// The bytes written for the requested format.
    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Json => Ok(self.report.to_json()),
            Format::Csv => self
                .csv
                .clone()
                .ok_or_else(|| CliError::Validation(format!("command `{}` has no CSV output", self.report.command))),
        }
    }
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Output, CliError> {
    match cmd {
        Command::Classify => classify(cfg),
        Command::Deficit => deficit(cfg),
        Command::Novikov => novikov(cfg),
        Command::Jump => jump(cfg),
        Command::Hilbert => hilbert(cfg),
        Command::Ensemble => ensemble(cfg),
        Command::Selftest => selftest(),
        Command::Catalog => catalog_list(),
    }
}

fn report(cmd: Command, cfg: &RunConfig) -> Report {
    Report::new(cmd.name(), to_value(cfg))
}

fn verdict_options(cfg: &RunConfig) -> VerdictOptions {
    VerdictOptions {
        feller: FellerOptions::default(),
        xi: cfg.feller.xi,
        gate_on_grid: cfg.feller.gate_on_grid,
        grid_points: cfg.feller.grid_points,
    }
}

fn feller_line(label: &str, r: &Option<FellerReport>) -> String {
    match r {
        Some(r) => format!("{label}: {:?} (left {:?}, right {:?})\n", r.conclusion, r.v_left, r.v_right),
        None => String::new(),
    }
}

fn estimate_line(label: &str, e: &MCEstimate) -> String {
    format!("{label}: {} ± {} ({} samples)\n", num(e.mean), num(e.std_error), e.n_effective)
}

fn curve_rows(curve: &DeficitCurve) -> Vec<Vec<String>> {
    curve
        .entries
        .iter()
        .map(|e| vec![num(e.level), num(e.cap), num(e.time), num(e.survival), num(e.exit_probability()), num(e.std_error)])
        .collect()
}

const CURVE_HEADER: [&str; 6] = ["level", "cap", "time", "survival", "exit_probability", "std_error"];

fn curve_summary(curve: &DeficitCurve) -> String {
    format!(
        "{}deficit {} (converged: {})\n",
        table(&CURVE_HEADER, &curve_rows(curve)),
        num(curve.deficit()),
        curve.converged
    )
}

/// Feller verdict, optionally cross-checked by the localized and direct
/// Monte Carlo estimates.
pub fn classify(cfg: &RunConfig) -> Result<Output, CliError> {
    let spec = cfg.diffusion()?;
    let exp = cfg.exponent()?;
    let mut verdict = martingale_verdict_with(&spec, &exp, &verdict_options(cfg))?;
    let mut rep = report(Command::Classify, cfg);
    let mut summary = format!("classification: {:?}\n", verdict.classification);
    summary += &feller_line("original", &verdict.feller_original);
    summary += &feller_line("modified", &verdict.feller_modified);
    if cfg.with_mc {
        let plan = cfg.plan()?;
        let curve = estimate_deficit(&spec, &exp, &plan, cfg.t, &cfg.mc, DeficitOptions { allow_unconverged: true })?;
        let direct = estimate_mean_direct(&spec, &exp, cfg.t, &cfg.mc)?;
        if !curve.converged {
            rep.diagnostics.push("Monte Carlo deficit curve has not converged over the plan levels".into());
        }
        let agrees = match verdict.classification {
            Classification::TrueMartingale => curve.deficit() <= CROSS_CHECK_TOLERANCE + 3.0 * curve.last().std_error,
            Classification::StrictLocal => curve.deficit() > 3.0 * curve.last().std_error,
            Classification::Inconclusive => true,
        };
        if !agrees {
            rep.diagnostics.push(format!(
                "Monte Carlo deficit {} disagrees with the {:?} verdict",
                num(curve.deficit()),
                verdict.classification
            ));
        }
        summary += &curve_summary(&curve);
        summary += &estimate_line("direct E[Z_t]", &direct);
        rep.estimates = Some(json!({ "direct": direct, "deficit": curve.deficit(), "mc_agrees": agrees }));
        verdict.deficit_curve = Some(curve);
    }
    rep.verdict = Some(to_value(&verdict));
    Ok(Output::new(rep, summary))
}

/// Localized deficit curve under the modified dynamics; exits 2 when the last
/// two levels still disagree.
pub fn deficit(cfg: &RunConfig) -> Result<Output, CliError> {
    let spec = cfg.diffusion()?;
    let exp = cfg.exponent()?;
    let plan = cfg.plan()?;
    let curve = estimate_deficit(&spec, &exp, &plan, cfg.t, &cfg.mc, DeficitOptions { allow_unconverged: true })?;
    let mut rep = report(Command::Deficit, cfg);
    rep.estimates = Some(json!({
        "deficit": curve.deficit(),
        "expectation": curve.extrapolated_expectation,
        "converged": curve.converged,
    }));
    let mut out_code = 0;
    if !curve.converged {
        rep.diagnostics.push("deficit curve did not converge before the levels ran out; extend the plan".into());
        out_code = 2;
    }
    let summary = curve_summary(&curve);
    let text = csv(&CURVE_HEADER, curve_rows(&curve));
    rep.curves = Some(json!({ "deficit": curve }));
    Ok(Output { csv: Some(text), exit_code: out_code, ..Output::new(rep, summary) })
}

/// Shortest rung of the Novikov doubling ladder.
fn ladder_floor(n: usize) -> usize {
    (n / 256).max(1)
}

/// Novikov's functional with a doubling ladder of running means.
pub fn novikov(cfg: &RunConfig) -> Result<Output, CliError> {
    let spec = cfg.diffusion()?;
    let exp = cfg.exponent()?;
    let samples = novikov_samples(&spec, &exp, cfg.t, &cfg.mc)?;
    let est = MCEstimate::from_samples(&samples);
    let ladder = doubling_ladder(&samples, ladder_floor(samples.len()));
    let slope = ladder_slope(&ladder);
    let growing = ladder.len() >= 2 && ladder[ladder.len() - 1].1 > ladder[0].1 && slope > 0.0;
    let mut rep = report(Command::Novikov, cfg);
    if est.heavy_tail_flag || growing {
        rep.diagnostics.push(
            "E[exp(½ ∫ q)] does not stabilize: the sample is dominated by its largest draws, so Novikov's condition is not confirmed"
                .into(),
        );
    }
    let rows: Vec<Vec<String>> = ladder.iter().map(|&(n, m)| vec![n.to_string(), num(m)]).collect();
    let summary = format!(
        "{}{}heavy tail: {}, ladder slope {}\n",
        estimate_line("E[exp(½ ∫ q)]", &est),
        table(&["n", "running_mean"], &rows),
        est.heavy_tail_flag,
        num(slope)
    );
    rep.estimates = Some(json!({ "novikov": est, "ladder_slope": slope, "growing": growing }));
    rep.curves = Some(json!({ "ladder": ladder.iter().map(|&(n, m)| json!({"n": n, "mean": m})).collect::<Vec<_>>() }));
    Ok(Output { csv: Some(csv(&["n", "running_mean"], rows)), ..Output::new(rep, summary) })
}

/// Jump-diffusion diagnostics: pathwise bound on the jumps of `N`, the
/// compensator identity, direct and stopped means, and the verdict from the
/// modified triplet.
pub fn jump(cfg: &RunConfig) -> Result<Output, CliError> {
    let trip = cfg.triplet()?;
    let gd = cfg.girsanov()?;
    validate(&trip, &gd, cfg.mc.horizon)?;
    let t = cfg.t;
    let mut rep = report(Command::Jump, cfg);
    let bound = check_jump_bound(&trip, &gd, t, &cfg.mc)?;
    let comp = verify_compensator_identity(&trip, &gd, &cfg.mc, t)?;
    let direct = jump_mean_direct(&trip, &gd, t, &cfg.mc)?;
    let mut summary = format!("paths with ΔN > -1: {}/{} (min ΔN {})\n", bound.paths_ok, bound.paths, num(bound.min_delta_n));
    summary += &format!(
        "compensator identity: E[bracket - R] = {} ± {} ({})\n",
        num(comp.difference.mean),
        num(comp.difference.std_error),
        if comp.pass { "pass" } else { "FAIL" }
    );
    summary += &estimate_line("direct E[Z_t]", &direct);
    let mut code = 0;
    if !bound.all_ok() {
        rep.diagnostics.push(format!("{} paths had a jump of N at or below -1", bound.paths - bound.paths_ok));
        code = 2;
    }
    if !comp.pass {
        rep.diagnostics.push("compensator identity failed at 3 standard errors".into());
    }
    let mut estimates = json!({ "direct": direct, "jump_bound": bound, "compensator": comp });
    if let Some(plan) = &cfg.plan {
        let stopped = jump_stopped_means(&trip, &gd, t, plan, &cfg.mc)?;
        let rows: Vec<Vec<String>> = plan
            .levels()
            .iter()
            .zip(&stopped)
            .map(|(l, e)| vec![num(*l), num(e.mean), num(e.std_error)])
            .collect();
        summary += &table(&["level", "E[Z_{t∧ρ}]", "std_error"], &rows);
        for (l, e) in plan.levels().iter().zip(&stopped).filter(|(_, e)| !e.within(1.0, 3.0)) {
            rep.diagnostics.push(format!(
                "stopped mean at level {} is {} ± {}, more than 3 standard errors from 1",
                num(*l),
                num(e.mean),
                num(e.std_error)
            ));
        }
        estimates["stopped"] = json!(plan
            .levels()
            .iter()
            .zip(&stopped)
            .map(|(l, e)| json!({"level": l, "estimate": e}))
            .collect::<Vec<_>>());
        let verdict = verdict_jump(&trip, &gd, t, plan, &cfg.mc)?;
        summary += &format!("classification: {:?}\n", verdict.classification);
        rep.verdict = Some(to_value(&verdict));
    } else {
        rep.diagnostics.push("no `plan` section: stopped means and verdict skipped".into());
    }
    rep.estimates = Some(estimates);
    let path_cfg = SimConfig { horizon: t, ..cfg.mc };
    let mut rows = Vec::new();
    for i in 0..cfg.mc.n_paths.min(JUMP_CSV_PATHS) as u64 {
        let rec = simulate_jump_path(&trip, &gd, &path_cfg, i, JumpStop::NONE)?;
        rows.extend(rec.points.iter().map(|p| {
            vec![i.to_string(), num(p.t), num(p.x), num(p.n), num(p.z()), num(p.r), num(p.bracket)]
        }));
    }
    let text = csv(&["path", "t", "x", "n", "z", "r", "bracket"], rows);
    Ok(Output { csv: Some(text), exit_code: code, ..Output::new(rep, summary) })
}

/// Q-Brownian case: mode statistics, condition checks, direct and localized
/// estimates of `E[Z_t]`.
pub fn hilbert(cfg: &RunConfig) -> Result<Output, CliError> {
    let cov = cfg.covariance()?;
    let phi = cfg.functional()?;
    let plan = cfg.plan()?;
    let stats = mode_statistics(&cov, cfg.t, &cfg.mc)?;
    let hr = estimate_hilbert_expectation(&phi, &cov, cfg.t, &plan, &cfg.mc)?;
    let mut rep = report(Command::Hilbert, cfg);
    rep.diagnostics.extend(hr.conditions.warnings.iter().cloned());
    if !stats.all_pass() {
        rep.diagnostics.push("simulated mode statistics deviate from the covariance by more than 3 standard errors".into());
    }
    let mut summary = format!("classification: {:?}\n", hr.classification);
    summary += &format!(
        "Lipschitz estimate {} (claimed {:?}), growth estimate {} (claimed {:?})\n",
        num(hr.conditions.lipschitz_max),
        phi.claimed_lipschitz,
        num(hr.conditions.growth),
        phi.claimed_growth
    );
    summary += &estimate_line("direct E[Z_t]", &hr.direct);
    summary += &curve_summary(&hr.deficit_curve);
    rep.verdict = Some(json!({ "classification": hr.classification, "conditions": hr.conditions }));
    rep.estimates = Some(json!({ "direct": hr.direct, "mode_statistics": stats }));
    let text = csv(&CURVE_HEADER, curve_rows(&hr.deficit_curve));
    rep.curves = Some(json!({ "deficit": hr.deficit_curve }));
    Ok(Output { csv: Some(text), ..Output::new(rep, summary) })
}

/// Per-path table under the original dynamics: status, `Z_t` and the first
/// time each plan level is reached.
pub fn ensemble(cfg: &RunConfig) -> Result<Output, CliError> {
    let spec = cfg.diffusion()?;
    let exp = cfg.exponent()?;
    let plan = cfg.plan()?;
    let rows = ensemble_rows(&spec, &exp, &plan, cfg.t, &cfg.mc)?;
    let mut header = vec!["path".to_string(), "status".into(), "z_t".into()];
    header.extend(plan.levels().iter().map(|l| format!("exit_{}", num(*l))));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let text = csv(
        &header,
        rows.iter().map(|r| {
            let mut cells = vec![r.index.to_string(), r.terminal_status.label().to_string(), num(r.z_t)];
            cells.extend(r.exit_times.iter().map(|e| e.map(num).unwrap_or_default()));
            cells
        }),
    );
    let exploded = rows.iter().filter(|r| r.terminal_status.exploded()).count();
    let summary = format!("{} paths, {} exploded before t = {}\n", rows.len(), exploded, num(cfg.t));
    let mut rep = report(Command::Ensemble, cfg);
    rep.curves = Some(json!({ "rows": rows }));
    Ok(Output { csv: Some(text), ..Output::new(rep, summary) })
}

/// Runs the full acceptance suite; exit code 3 on any failure.
pub fn selftest() -> Result<Output, CliError> {
    let results = acceptance::run_all(|r| eprintln!("{}", r.line()));
    let failed: Vec<u8> = results.iter().filter(|r| !r.pass).map(|r| r.id).collect();
    let mut rep = Report::new(Command::Selftest.name(), serde_json::Value::Null);
    let summary: String = results.iter().map(|r| r.line() + "\n").collect();
    let text = csv(
        &["id", "name", "pass", "detail"],
        results.iter().map(|r| vec![r.id.to_string(), r.name.clone(), r.pass.to_string(), format!("\"{}\"", r.detail.replace('"', "'"))]),
    );
    if !failed.is_empty() {
        rep.diagnostics.push(format!("failed criteria: {failed:?}"));
    }
    rep.estimates = Some(json!({ "criteria": results }));
    let code = if failed.is_empty() { 0 } else { 3 };
    Ok(Output { csv: Some(text), exit_code: code, ..Output::new(rep, summary) })
}

pub fn catalog_list() -> Result<Output, CliError> {
    let presets = catalog::presets();
    let rows: Vec<Vec<String>> =
        presets.iter().map(|p| vec![p.name.to_string(), to_value(&p.kind).as_str().unwrap_or("").to_string(), p.description.to_string()]).collect();
    let summary: String = presets.iter().map(|p| format!("{:<16} {}\n", p.name, p.description)).collect();
    let text = csv(
        &["name", "kind", "description"],
        rows.into_iter().map(|mut r| {
            r[2] = format!("\"{}\"", r[2]);
            r
        }),
    );
    let mut rep = Report::new(Command::Catalog.name(), serde_json::Value::Null);
    rep.estimates = Some(json!({ "presets": presets }));
    Ok(Output { csv: Some(text), ..Output::new(rep, summary) })
}

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

use bbm_core::approx::{solve_lattice, residual_scan, Variant};
use bbm_core::collision::{run_collision, scaling_study, CollisionReport, ExperimentConfig, ExponentFit, ScalingStudy};
use bbm_core::fit::PowerFit;
use bbm_core::grid::norm_h1;
use bbm_core::integrator::{Bbm, EvolutionState, IntegratorConfig};
use bbm_core::omega::{self, SLOTS};
use bbm_core::operator::OperatorL;
use bbm_core::solitons::phi_c_at;
use bbm_core::suites::{self, Check};
use bbm_core::{Grid, GridFunction};
use serde::Serialize;

use crate::config::{self, RunConfig};
use crate::{Cli, CliError, Command, SpeedFlags};

pub const SCHEMA_VERSION: u32 = 1;

pub fn version() -> String {
    format!("{}+{}", env!("CARGO_PKG_VERSION"), env!("BBM_GIT_HASH"))
}

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    schema_version: u32,
    version: String,
    command: &'a str,
    config: &'a C,
    passed: bool,
    result: &'a R,
}

struct Output<'a> {
    json: bool,
    dir: Option<&'a PathBuf>,
}

impl Output<'_> {
    fn file(&self, name: &str) -> Result<Option<BufWriter<File>>, CliError> {
        let Some(dir) = self.dir else { return Ok(None) };
        std::fs::create_dir_all(dir)?;
        Ok(Some(BufWriter::new(File::create(dir.join(name))?)))
    }

    /// Writes `<command>.json` into the output directory and prints it with `--json`.
    fn report<C: Serialize, R: Serialize>(&self, command: &str, config: &C, passed: bool, result: &R) -> Result<(), CliError> {
        let env = Envelope {
            schema_version: SCHEMA_VERSION,
            version: version(),
            command,
            config,
            passed,
            result,
        };
        if let Some(mut f) = self.file(&format!("{command}.json"))? {
            serde_json::to_writer_pretty(&mut f, &env)?;
            writeln!(f)?;
        }
        if self.json {
            println!("{}", serde_json::to_string_pretty(&env)?);
        }
        Ok(())
    }

    fn say(&self, line: impl AsRef<str>) {
        if !self.json {
            println!("{}", line.as_ref());
        }
    }
}

pub fn run(cli: &Cli) -> Result<bool, CliError> {
    let mut cfg = config::load(cli.global.config.as_deref())?;
    let out = Output {
        json: cli.global.json,
        dir: cli.global.out.as_ref(),
    };
    match &cli.command {
        Command::Identities { grid_n, half_length } => {
            if let Some(n) = grid_n {
                cfg.identities.grid_n = *n;
            }
            if let Some(l) = half_length {
                cfg.identities.half_length = *l;
            }
            identities(&cfg, &out)
        }
        Command::Coeffs { lambda, sweep } => coeffs(&cfg, *lambda, *sweep, &out),
        Command::Profiles { lambda, stride } => {
            if let Some(l) = lambda {
                cfg.profiles.lambda = *l;
            }
            if let Some(s) = stride {
                cfg.profiles.stride = *s;
            }
            profiles(&cfg, &out)
        }
        Command::ResidualScan { lambda, sigmas, variant } => {
            if let Some(l) = lambda {
                cfg.residual_scan.lambda = *l;
            }
            if let Some(s) = sigmas {
                cfg.residual_scan.sigmas = s.0.clone();
            }
            if let Some(v) = variant {
                cfg.residual_scan.variant = *v;
            }
            scan(&cfg, &out)
        }
        Command::Simulate { speeds, centers, dt, t_end } => {
            let s = &mut cfg.simulate;
            if let Some(v) = speeds {
                s.speeds = v.0.clone();
            }
            if let Some(v) = centers {
                s.centers = v.0.clone();
            }
            if let Some(v) = dt {
                s.dt = *v;
            }
            if let Some(v) = t_end {
                s.t_end = *v;
            }
            simulate(&cfg, &out)
        }
        Command::Collide(flags) => collide(&experiment(&cfg, flags)?, &out),
        Command::Scaling { c1, c2_values } => {
            if let Some(v) = c2_values {
                cfg.scaling.c2_values = v.0.clone();
            }
            let first = cfg.scaling.c2_values.first().copied().unwrap_or(f64::NAN);
            let mut base = cfg.collide.clone().unwrap_or_else(|| ExperimentConfig::new(2.0, first));
            if let Some(c) = c1 {
                base.c1 = *c;
            }
            scaling(&base, &cfg.scaling.c2_values, &out)
        }
        Command::Diagnostics(flags) => diagnostics(&experiment(&cfg, flags)?, &out),
    }
}

fn experiment(cfg: &RunConfig, flags: &SpeedFlags) -> Result<ExperimentConfig, CliError> {
    let mut e = match (&cfg.collide, flags.c1, flags.c2) {
        (Some(e), _, _) => e.clone(),
        (None, c1, Some(c2)) => ExperimentConfig::new(c1.unwrap_or(2.0), c2),
        (None, _, None) => return Err(CliError::Usage("c2 is required (--c2 or [collide] c2)".into())),
    };
    if let Some(c) = flags.c1 {
        e.c1 = c;
    }
    if let Some(c) = flags.c2 {
        e.c2 = c;
    }
    if let Some(dt) = flags.dt {
        e.dt = dt;
    }
    e.validate()?;
    Ok(e)
}

fn print_checks(out: &Output, title: &str, checks: &[Check]) {
    out.say(title);
    for c in checks {
        out.say(format!(
            "  {}  {:<52} value {:>14.8e}  err {:>9.2e} ({})  tol {:.0e}",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.value,
            c.error,
            if c.relative { "rel" } else { "abs" },
            c.tolerance,
        ));
    }
}

#[derive(Serialize)]
struct CheckGroups {
    identities: Vec<Check>,
    operator: Vec<Check>,
}

fn identities(cfg: &RunConfig, out: &Output) -> Result<bool, CliError> {
    let c = &cfg.identities;
    let grid = Grid::truncated_line(c.half_length, c.grid_n)?;
    let identities = suites::identity_suite(grid);
    let operator = match OperatorL::new(grid).and_then(|op| suites::operator_suite(&op)) {
        Ok(v) => v,
        Err(e) => vec![Check::holds(format!("operator setup: {e}"), false)],
    };
    print_checks(out, "soliton identities", &identities);
    print_checks(out, "operator L", &operator);
    let groups = CheckGroups { identities, operator };
    let failed = groups.identities.iter().chain(&groups.operator).filter(|c| !c.passed).count();
    let total = groups.identities.len() + groups.operator.len();
    out.say(format!("{} of {total} checks passed", total - failed));
    out.report("identities", c, failed == 0, &groups)?;
    Ok(failed == 0)
}

#[derive(Serialize)]
struct CoeffReport {
    rows: Vec<CoeffLine>,
    checks: Vec<Check>,
}

#[derive(Serialize)]
struct CoeffLine {
    #[serde(flatten)]
    row: omega::CoefficientRow,
    g: f64,
    g_positive: bool,
    a10_closed: f64,
    b10_closed: f64,
}

fn coeff_line(row: omega::CoefficientRow) -> CoeffLine {
    let g = omega::g_poly(row.lambda);
    CoeffLine {
        g,
        g_positive: g > 0.0,
        a10_closed: omega::a10(row.lambda),
        b10_closed: omega::b10(row.lambda),
        row,
    }
}

fn coeffs(cfg: &RunConfig, lambda: Option<f64>, sweep: bool, out: &Output) -> Result<bool, CliError> {
    let lambdas = if sweep {
        let n = cfg.coeffs.sweep_points.max(1);
        (1..=n).map(|i| i as f64 / (n + 1) as f64).collect()
    } else if let Some(l) = lambda {
        vec![l]
    } else {
        cfg.coeffs.lambdas.clone()
    };
    if let Some(bad) = lambdas.iter().find(|l| !(0.0..1.0).contains(*l)) {
        return Err(CliError::Usage(format!("λ = {bad} is outside [0, 1)")));
    }
    if lambdas.iter().any(|&l| l == 0.0) {
        if lambdas.len() > 1 {
            return Err(CliError::Usage("λ = 0 is only accepted on its own".into()));
        }
        return kdv_limit(out);
    }
    let op = OperatorL::new(Grid::lattice_default())?;
    let rows: Vec<CoeffLine> = omega::coefficient_sweep(&op, &lambdas)?.into_iter().map(coeff_line).collect();
    let profile_op = OperatorL::new(Grid::profile_default())?;
    let check_lambdas: Vec<f64> = if sweep { vec![0.1, 0.3, 0.5, 0.7, 0.9] } else { lambdas.clone() };
    let mut checks = suites::omega10_suite(&profile_op, &check_lambdas)?;
    checks.extend(suites::coefficient_suite(&profile_op, &check_lambdas)?);
    let passed = suites::all_passed(&checks) && rows.iter().all(|r| r.g_positive);
    if let Some(mut f) = out.file("coeffs.csv")? {
        write_coeff_csv(&rows, &mut f)?;
    }
    if sweep && !out.json {
        write_coeff_csv(&rows, std::io::stdout().lock())?;
    } else {
        for r in &rows {
            let x = &r.row;
            out.say(format!("λ = {}", x.lambda));
            out.say(format!("  a10   {:>16.9}   closed {:>16.9}   Δ {:.1e}", x.a10, r.a10_closed, (x.a10 - r.a10_closed).abs()));
            out.say(format!("  b10   {:>16.9}   closed {:>16.9}   Δ {:.1e}", x.b10, r.b10_closed, (x.b10 - r.b10_closed).abs()));
            out.say(format!("  kappa {:>16.9}", x.kappa));
            out.say(format!("  b20   {:>16.9}   closed {:>16.9}   Δ {:.1e}", x.b20, x.b20_closed, (x.b20 - x.b20_closed).abs()));
            out.say(format!("  d     {:>16.9}", x.d));
            out.say(format!("  g     {:>16.9}", r.g));
            out.say(format!("  b11   {:>16.9}", x.b11));
            out.say(format!(
                "  gamma20 {:.9}  gamma11 {:.9}  gamma30 {:.9}  gamma21 {:.9}  gamma12 {:.9}",
                x.gamma20, x.gamma11, x.gamma30, x.gamma21, x.gamma12
            ));
        }
    }
    print_checks(out, "checks", &checks);
    out.report("coeffs", &lambdas, passed, &CoeffReport { rows, checks })?;
    Ok(passed)
}

fn write_coeff_csv<W: Write>(rows: &[CoeffLine], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{},b20_closed,g,g_positive", omega::COEFFICIENT_HEADER)?;
    for r in rows {
        writeln!(w, "{},{:.12e},{:.12e},{}", r.row.csv_line(), r.row.b20_closed, r.g, r.g_positive)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct KdvLimit {
    lambda: f64,
    a10: f64,
    b10: f64,
    kappa: f64,
    d: f64,
    note: &'static str,
}

fn kdv_limit(out: &Output) -> Result<bool, CliError> {
    let r = KdvLimit {
        lambda: 0.0,
        a10: omega::a10(0.0),
        b10: omega::b10(0.0),
        kappa: omega::kappa_b(0.0),
        d: omega::d_lambda(0.0)?,
        note: "KdV-elastic limit",
    };
    out.say("λ = 0");
    out.say(format!("  a10   {:>16.9}", r.a10));
    out.say(format!("  b10   {:>16.9}", r.b10));
    out.say(format!("  kappa {:>16.9}", r.kappa));
    out.say(format!("  d     {:>16.9}   {}", r.d, r.note));
    out.report("coeffs", &[0.0], r.d == 0.0, &r)?;
    Ok(r.d == 0.0)
}

fn profiles(cfg: &RunConfig, out: &Output) -> Result<bool, CliError> {
    let c = &cfg.profiles;
    if c.stride == 0 {
        return Err(CliError::Usage("stride must be at least 1".into()));
    }
    let lattice = solve_lattice(c.lambda)?;
    let grid = Grid::lattice_default();
    let mut header = vec!["x".to_string()];
    let mut cols: Vec<GridFunction> = Vec::new();
    for (k, l) in SLOTS {
        let set = lattice.set(k, l);
        header.push(format!("A{k}{l}"));
        header.push(format!("B{k}{l}"));
        cols.push(set.a_profile.sampled());
        cols.push(set.b_profile.sampled());
    }
    let write = |mut w: Box<dyn Write + '_>| -> std::io::Result<()> {
        writeln!(w, "{}", header.join(","))?;
        for j in (0..grid.n_points).step_by(c.stride) {
            let mut line = format!("{}", grid.x(j));
            for col in &cols {
                line.push_str(&format!(",{:.12e}", col.values[j]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    };
    match out.file(&format!("profiles_lambda_{}.csv", c.lambda))? {
        Some(f) => write(Box::new(f))?,
        None => write(Box::new(std::io::stdout().lock()))?,
    }
    Ok(true)
}

/// Minimum fitted exponents and the construction's targets.
pub const RESIDUAL_Z: (f64, f64) = (3.4, 3.75);
pub const RESIDUAL_SHARP: (f64, f64) = (2.7, 3.0);

fn slope_line(out: &Output, name: &str, fit: &PowerFit, bound: (f64, f64)) -> bool {
    let ok = fit.slope >= bound.0;
    out.say(format!(
        "{}  {name:<36} slope {:.3} ± {:.3}   target {}   required ≥ {}",
        if ok { "pass" } else { "FAIL" },
        fit.slope,
        fit.slope_stderr,
        bound.1,
        bound.0
    ));
    ok
}

fn scan(cfg: &RunConfig, out: &Output) -> Result<bool, CliError> {
    let c = &cfg.residual_scan;
    if c.sigmas.len() < 2 {
        return Err(CliError::Usage("residual-scan needs at least two σ values".into()));
    }
    let lattice = Arc::new(solve_lattice(c.lambda)?);
    let scan = residual_scan(lattice, &c.sigmas)?;
    let mut ok = true;
    if c.variant.includes(Variant::SymmetricZ) {
        ok &= slope_line(out, "‖S(z)‖_H¹ vs σ", &scan.fits.residual, RESIDUAL_Z);
    }
    if c.variant.includes(Variant::ModifiedZSharp) {
        ok &= slope_line(out, "‖S(z_#)‖_H¹ vs σ", &scan.fits.residual_sharp, RESIDUAL_SHARP);
    }
    let f = &scan.fits;
    out.say(format!(
        "endpoint slopes at ±τ_σ: z {:.3}, z_# {:.3}; at separation: z {:.3}, z_# {:.3}",
        f.endpoint_z.slope, f.endpoint_sharp.slope, f.endpoint_z_separated.slope, f.endpoint_sharp_separated.slope
    ));
    if let Some(mut w) = out.file("residual_scan.csv")? {
        scan.write_csv(&mut w)?;
    }
    out.report("residual_scan", c, ok, &scan)?;
    Ok(ok)
}

#[derive(Serialize)]
struct SimulateSummary {
    half_length: f64,
    n_points: usize,
    energy_drift: f64,
    mass_drift: f64,
    /// Relative H¹ distance from the translated initial data, single soliton only.
    translation_error: Option<f64>,
    cfl_ok: bool,
    snapshots: usize,
}

fn simulate(cfg: &RunConfig, out: &Output) -> Result<bool, CliError> {
    let s = &cfg.simulate;
    if s.speeds.len() != s.centers.len() {
        return Err(CliError::Usage("speeds and centers must have the same length".into()));
    }
    if let Some(c) = s.speeds.iter().find(|c| !(**c > 1.0)) {
        return Err(CliError::Usage(format!("speed {c} must exceed 1")));
    }
    let grid = Grid::periodic(s.half_length, s.n_points)?;
    let profile = |t: f64| {
        GridFunction::from_fn(grid, |x| {
            s.speeds
                .iter()
                .zip(&s.centers)
                .map(|(&c, &x0)| {
                    let y = x - x0 - c * t;
                    let period = 2.0 * s.half_length;
                    let y = y - period * (y / period).round();
                    phi_c_at(c, y)
                })
                .sum()
        })
    };
    let icfg = IntegratorConfig {
        dt: s.dt,
        t_end: s.t_end,
        dealias: s.dealias,
        record_every: s.record_every,
        record_values: s.record_values,
    };
    icfg.validate()?;
    let bbm = Bbm::new(grid, s.dealias)?;
    let traj = bbm.evolve(EvolutionState::new(profile(0.0)), &icfg)?;
    let (energy_drift, mass_drift) = traj.conservation_drift();
    let translation_error = (s.speeds.len() == 1).then(|| {
        let exact = profile(traj.final_state.t);
        norm_h1(&traj.final_state.u.sub(&exact)) / norm_h1(&exact)
    });
    match out.file("trajectory.jsonl")? {
        Some(f) => traj.write_json_lines(f)?,
        None if !out.json => traj.write_json_lines(std::io::stdout().lock())?,
        None => {}
    }
    let summary = SimulateSummary {
        half_length: s.half_length,
        n_points: s.n_points,
        energy_drift,
        mass_drift,
        translation_error,
        cfl_ok: traj.cfl_ok,
        snapshots: traj.snapshots.len(),
    };
    eprintln!("relative drift: E {energy_drift:.2e}, N {mass_drift:.2e}");
    if let Some(e) = translation_error {
        eprintln!("relative H¹ error against the exact translate: {e:.2e}");
    }
    out.report("simulate", s, true, &summary)?;
    Ok(true)
}

fn collide(e: &ExperimentConfig, out: &Output) -> Result<bool, CliError> {
    let r = run_collision(e)?;
    let ok = print_collision(out, &r);
    if let Some(mut w) = out.file("trace.csv")? {
        r.write_trace_csv(&mut w)?;
    }
    out.report("collide", e, ok, &r)?;
    Ok(ok)
}

fn print_collision(out: &Output, r: &CollisionReport) -> bool {
    let c = &r.config;
    let mark = |b: bool| if b { "pass" } else { "FAIL" };
    out.say(format!(
        "c1 = {}, c2 = {}: grid {} points on [-{}, {}), t_end {:.1}, collision at t = {:.2}",
        c.c1, c.c2, r.n_points, r.half_length, r.half_length, r.t_end, r.collision_time
    ));
    let checks = [
        (r.delta_c1 > 0.0, format!("c1+ - c1 = {:.4e} > 0", r.delta_c1)),
        (r.delta_c2 > 0.0, format!("c2 - c2+ = {:.4e} > 0", r.delta_c2)),
        (
            r.gate_passed,
            format!("residue behind the cut above 10x noise (noise {:.2e})", r.noise_floor),
        ),
        (r.ahead_decay < 1.0, format!("residue ahead of the cut decays (last/first {:.3})", r.ahead_decay)),
    ];
    for (ok, text) in &checks {
        out.say(format!("  {}  {text}", mark(*ok)));
    }
    out.say(format!("  residue functional {:.4e}", r.residue_functional));
    out.say(format!("  drift: N {:.2e}, E {:.2e}", r.mass_drift, r.energy_drift));
    if let Some(s) = &r.shift_meas {
        out.say(format!(
            "  shifts: Δ1 {:.4} (leading order {:.4}), Δ2 {:.4} (leading order {:.4})",
            s.delta1, s.delta1_predicted, s.delta2, s.delta2_predicted
        ));
    }
    out.say(format!(
        "  budget ratios: big {:.4e}, small {:.4e}",
        r.budget_check.big_ratio, r.budget_check.small_ratio
    ));
    checks.iter().all(|(ok, _)| *ok)
}

fn exponent_line(out: &Output, name: &str, f: &ExponentFit) -> bool {
    let ok = f.in_window();
    let (slope, ci) = match (f.fit, f.interval) {
        (Some(p), Some((lo, hi))) if lo.is_finite() && hi.is_finite() => {
            (format!("{:.3}", p.slope), format!("[{lo:.3}, {hi:.3}]"))
        }
        (Some(p), _) => (format!("{:.3}", p.slope), "n/a".into()),
        _ => ("n/a".into(), "n/a".into()),
    };
    out.say(format!(
        "{}  {name:<28} exponent {slope}  95% {ci}  target [{}, {}]  window [{}, {}]",
        if ok { "pass" } else { "FAIL" },
        f.target.0,
        f.target.1,
        f.window.0,
        f.window.1
    ));
    ok
}

/// Widest allowed max/min spread of each budget ratio over a sweep.
pub const BUDGET_BAND: f64 = 20.0;

fn scaling(base: &ExperimentConfig, c2_values: &[f64], out: &Output) -> Result<bool, CliError> {
    if c2_values.len() < 2 {
        return Err(CliError::Usage("scaling needs at least two c2 values".into()));
    }
    for &c2 in c2_values {
        let mut e = base.clone();
        e.c2 = c2;
        e.validate()?;
    }
    let study = scaling_study(base, c2_values)?;
    let s: &ScalingStudy = &study;
    for r in &s.rows {
        out.say(format!(
            "c2 = {:<8} c1+ - c1 {:.4e}   c2 - c2+ {:.4e}   residue {:.4e}   gate {}",
            r.c2,
            r.delta_c1,
            r.delta_c2,
            r.residue_functional,
            if r.gate_passed { "pass" } else { "FAIL" }
        ));
    }
    let mut ok = exponent_line(out, "residue functional", &s.residue);
    ok &= exponent_line(out, "c1+ - c1", &s.delta_c1);
    ok &= exponent_line(out, "c2 - c2+", &s.delta_c2);
    let band = s.budget_band.0.max(s.budget_band.1);
    let band_ok = band <= BUDGET_BAND;
    out.say(format!(
        "{}  budget ratio spread {:.2} / {:.2}   allowed ≤ {BUDGET_BAND}",
        if band_ok { "pass" } else { "FAIL" },
        s.budget_band.0,
        s.budget_band.1
    ));
    ok &= band_ok;
    if let Some(mut w) = out.file("scaling.csv")? {
        s.write_csv(&mut w)?;
    }
    #[derive(Serialize)]
    struct ScalingInput<'a> {
        base: &'a ExperimentConfig,
        c2_values: &'a [f64],
    }
    out.report("scaling", &ScalingInput { base, c2_values }, ok, s)?;
    Ok(ok)
}

fn diagnostics(e: &ExperimentConfig, out: &Output) -> Result<bool, CliError> {
    let r = run_collision(e)?;
    let d = &r.diagnostics;
    out.say(format!("ψ scale κ = {:.6}, energy slope a₂ = {:.9}", d.kappa, d.a2));
    out.say(format!("max post-collision increase of the localized mass: {:.4e}", d.n1_max_increase));
    out.say(format!("change of the localized energy before the collision: {:.4e}", d.g_change));
    match out.file("diagnostics_trace.csv")? {
        Some(mut w) => r.write_trace_csv(&mut w)?,
        None if !out.json => r.write_trace_csv(std::io::stdout().lock())?,
        None => {}
    }
    #[derive(Serialize)]
    struct Diag<'a> {
        diagnostics: &'a bbm_core::collision::DiagnosticSummary,
        trace: &'a [bbm_core::collision::TraceRow],
    }
    out.report("diagnostics", e, true, &Diag { diagnostics: d, trace: &r.trace })?;
    Ok(true)
}

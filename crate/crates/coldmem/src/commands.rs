//! Subcommand implementations, independent of argument parsing.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use coldmem_core::analytic::{loss_lifetime, motional_lifetime};
use coldmem_core::ensemble::one_over_e_time;
use coldmem_core::fit::{fit_decay, infer_temperature, AngleLifetime, FitOptions, FitResult, ModelKind, Parameter};
use coldmem_core::photon::{synthesize_curve, DecayCurve, GammaEngine};
use coldmem_core::physics::{
    collision_rate, one_d_speed, radial_speed, spin_wave_vector, BeamGeometry, EnsembleParams, SpeciesConstants,
};
use coldmem_core::runner::{ChunkRunner, Sequential};
use coldmem_core::zeeman::{first_order_zeeman_shift, ZeemanConfig, CLOCK_PAIRS};
use coldmem_core::Error;

use crate::config::{ConfigError, FitPlan, ScenarioConfig};
use crate::output::{self, sig6, SweepRow};

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
    Io(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Numerical(_) => EXIT_NUMERICAL,
            Failure::Io(_) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Io(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Io(e)
    }
}

fn core_failure(e: Error) -> Failure {
    match e {
        Error::Domain(_) | Error::DegenerateGeometry => Failure::Config(e.to_string()),
        _ => Failure::Numerical(e.to_string()),
    }
}

/// A fit that did not produce a usable result.
#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    pub message: String,
    /// Best iterate when the optimizer ran out of iterations.
    pub best: Option<Box<FitResult>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub curve: DecayCurve,
    pub model: ModelKind,
    pub fixed_a: Option<f64>,
    pub fit: Result<FitResult, FitProblem>,
}

pub fn model_for(plan: FitPlan) -> ModelKind {
    match plan {
        FitPlan::Gaussian => ModelKind::Gaussian,
        FitPlan::Combined => ModelKind::Combined,
        FitPlan::Lorentzian => ModelKind::Lorentzian,
    }
}

pub fn fit_curve(curve: &DecayCurve, model: ModelKind, options: &FitOptions) -> Result<FitResult, FitProblem> {
    fit_decay(curve, model, options).map_err(|e| match e {
        Error::FitFailure { iterations, best } => FitProblem {
            message: format!("no convergence after {iterations} iterations"),
            best: Some(best),
        },
        other => FitProblem {
            message: other.to_string(),
            best: None,
        },
    })
}

/// `1/e` time of the closed-form efficiency for `cfg`, or `None` if it stays above `1/e`.
pub fn expected_lifetime(cfg: &ScenarioConfig) -> Result<Option<f64>, Failure> {
    let mut scenario = cfg.scenario()?;
    scenario.engine = GammaEngine::Analytic;
    let mut t_max = 1e-4;
    while t_max <= 1e3 {
        let t = one_over_e_time(|t| Ok(scenario.gamma_curve(&Sequential, &[t], 0)?[0]), t_max).map_err(core_failure)?;
        if t.is_some() {
            return Ok(t);
        }
        t_max *= 10.0;
    }
    Ok(None)
}

/// Sixteen delays spanning `2.5 lifetime`, in µs.
pub fn auto_delays_us(lifetime: f64) -> Vec<f64> {
    let tau_us = lifetime * 1e6;
    std::iter::once(0.02 * tau_us)
        .chain((1..16).map(|k| k as f64 * tau_us / 6.0))
        .map(|d| sig6(d).parse().expect("formatted number"))
        .collect()
}

/// The collinear companion of `cfg` used to measure the loss coefficient.
pub fn collinear_companion(cfg: &ScenarioConfig) -> Result<ScenarioConfig, Failure> {
    let s = cfg.scenario()?;
    let tau_l = loss_lifetime(
        s.ensemble.cloud_radius,
        radial_speed(&s.ensemble).map_err(core_failure)?,
    )
    .map_err(core_failure)?;
    let mut companion = ScenarioConfig {
        theta_deg: 0.0,
        geometry_mode: crate::config::GeometryModeName::Exact,
        fixed_a_per_s2: None,
        ..cfg.clone()
    };
    companion.delays_us = auto_delays_us(tau_l);
    companion.seed = Some(cfg.resolved_seed()? ^ 0x9e37_79b9_7f4a_7c15);
    Ok(companion)
}

/// Synthesize the curve for `cfg` and fit it with the law its angle calls for.
pub fn run_scenario<R: ChunkRunner>(runner: &R, cfg: &ScenarioConfig) -> Result<ScenarioRun, Failure> {
    let scenario = cfg.scenario()?;
    let seed = cfg.resolved_seed()?;
    let curve =
        synthesize_curve(runner, &scenario, &cfg.delays_s(), cfg.trials_per_point, seed).map_err(core_failure)?;
    let model = model_for(cfg.fit_plan());
    let mut fixed_a = None;
    if model == ModelKind::Combined {
        fixed_a = match cfg.fixed_a_per_s2 {
            Some(a) => Some(a),
            None => {
                let companion = collinear_companion(cfg)?;
                let run = run_scenario(runner, &companion)?;
                match run.fit {
                    Ok(fit) => fit.a.map(|a| a.value),
                    Err(p) => {
                        return Ok(ScenarioRun {
                            curve,
                            model,
                            fixed_a: None,
                            fit: Err(FitProblem {
                                message: format!("collinear loss fit failed: {}", p.message),
                                best: None,
                            }),
                        })
                    }
                }
            }
        };
    }
    let options = FitOptions {
        fixed_a,
        exclude_first: cfg.exclude_first_point,
        ..FitOptions::default()
    };
    let fit = fit_curve(&curve, model, &options);
    Ok(ScenarioRun {
        curve,
        model,
        fixed_a,
        fit,
    })
}

fn report_for(run: &ScenarioRun) -> String {
    let mut report = match &run.fit {
        Ok(fit) => output::fit_report(fit, true),
        Err(p) => {
            let mut s = match &p.best {
                Some(best) => output::fit_report(best, false),
                None => format!("model={}\nconverged=false\n", run.model.name()),
            };
            let _ = writeln!(s, "error={}", p.message);
            s
        }
    };
    let _ = writeln!(report, "points={}", run.curve.len());
    for m in run.curve.missing() {
        let why = match &m.reason {
            Error::InsufficientStatistics { record } => format!(
                "n_s={} n_as={} n_coinc={} of {} trials",
                record.n_s, record.n_as, record.n_coinc, record.trials
            ),
            other => other.to_string(),
        };
        let _ = writeln!(report, "missing_point_us={} ({why})", sig6(m.delay * 1e6));
    }
    report
}

/// `simulate`: write `curve.csv` and `fit_report.txt` (and optionally `plot.gp`) into `out_dir`.
pub fn simulate<R: ChunkRunner>(runner: &R, config: &Path, out_dir: &Path, plot: bool) -> Result<ScenarioRun, Failure> {
    let cfg = ScenarioConfig::from_path(config)?;
    let run = run_scenario(runner, &cfg)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("curve.csv"), output::curve_to_string(&run.curve))?;
    fs::write(out_dir.join("fit_report.txt"), report_for(&run))?;
    if plot {
        fs::write(
            out_dir.join("plot.gp"),
            output::gnuplot_script(run.fit.as_ref().ok(), "curve.csv"),
        )?;
    }
    match &run.fit {
        Ok(_) => Ok(run),
        Err(p) => Err(Failure::Numerical(p.message.clone())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub temperature: Option<coldmem_core::fit::TemperatureEstimate>,
    pub report: String,
}

/// Motional lifetime for thermometry: a Gaussian fit also absorbs the atom
/// loss, so with a known loss coefficient the curve is refitted with the
/// combined law at that coefficient.
fn motional_lifetime_fit(
    curve: &DecayCurve,
    fit: &FitResult,
    loss: Option<f64>,
    exclude_first: bool,
) -> Option<Parameter> {
    match (fit.kind, loss) {
        (ModelKind::Gaussian, Some(a)) => {
            let options = FitOptions {
                fixed_a: Some(a),
                exclude_first,
                ..FitOptions::default()
            };
            fit_curve(curve, ModelKind::Combined, &options).ok()?.tau_d
        }
        _ => fit.tau_d,
    }
}

/// Independent seed for the `index`-th angle of a sweep.
pub fn angle_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Run `cfg` at each angle with delays scaled to the expected lifetime, then
/// infer the temperature from the fitted motional lifetimes.
pub fn sweep_angles<R: ChunkRunner>(
    runner: &R,
    cfg: &ScenarioConfig,
    angles_deg: &[f64],
) -> Result<(SweepOutcome, Vec<(f64, DecayCurve)>), Failure> {
    if angles_deg.is_empty() {
        return Err(Failure::Config("angles: at least one angle is required".to_owned()));
    }
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    let mut lifetimes = Vec::new();
    let seed = cfg.resolved_seed()?;
    let loss = match cfg.fixed_a_per_s2 {
        Some(a) => Some(a),
        None => run_scenario(runner, &collinear_companion(cfg)?)?
            .fit
            .ok()
            .and_then(|f| f.a.map(|a| a.value)),
    };
    for (i, &theta) in angles_deg.iter().enumerate() {
        let mut at = ScenarioConfig {
            theta_deg: theta,
            seed: Some(angle_seed(seed, i)),
            fixed_a_per_s2: loss,
            ..cfg.clone()
        };
        at.validate()?;
        let Some(expected) = expected_lifetime(&at)? else {
            rows.push(SweepRow {
                theta_deg: theta,
                fit: None,
                motional: None,
                status: "no decay expected".to_owned(),
            });
            continue;
        };
        at.delays_us = auto_delays_us(expected);
        let run = run_scenario(runner, &at)?;
        curves.push((theta, run.curve.clone()));
        match run.fit {
            Ok(fit) => {
                let motional = if theta > 0.0 {
                    motional_lifetime_fit(&run.curve, &fit, loss, at.exclude_first_point)
                } else {
                    None
                };
                if let Some(tau) = motional {
                    lifetimes.push(AngleLifetime {
                        theta: theta.to_radians(),
                        tau_d: tau.value,
                        sigma: tau.sigma,
                    });
                }
                rows.push(SweepRow {
                    theta_deg: theta,
                    fit: Some(fit),
                    motional,
                    status: "ok".to_owned(),
                });
            }
            Err(p) => rows.push(SweepRow {
                theta_deg: theta,
                fit: p.best.map(|b| *b),
                motional: None,
                status: format!("failed: {}", p.message),
            }),
        }
    }

    let scenario = cfg.scenario()?;
    let mut report = String::new();
    let temperature = if lifetimes.is_empty() {
        let _ = writeln!(report, "temperature=unavailable");
        None
    } else {
        match infer_temperature(&lifetimes, &scenario.geometry, &scenario.ensemble.species) {
            Ok(t) => {
                let _ = writeln!(report, "temperature_uK={}", sig6(t.temperature * 1e6));
                let _ = writeln!(report, "temperature_sigma_uK={}", sig6(t.temperature_sigma * 1e6));
                let _ = writeln!(report, "speed_m_per_s={}", sig6(t.speed));
                let _ = writeln!(report, "speed_sigma_m_per_s={}", sig6(t.speed_sigma));
                let _ = writeln!(report, "angles_used={}", t.points_used);
                Some(t)
            }
            Err(e) => {
                let _ = writeln!(report, "temperature=unavailable ({e})");
                None
            }
        }
    };
    Ok((
        SweepOutcome {
            rows,
            temperature,
            report,
        },
        curves,
    ))
}

/// `sweep`: write `lifetimes.csv`, `temperature.txt` and one curve per angle.
pub fn sweep<R: ChunkRunner>(
    runner: &R,
    config: &Path,
    angles_deg: &[f64],
    out_dir: &Path,
) -> Result<SweepOutcome, Failure> {
    let cfg = ScenarioConfig::from_path(config)?;
    let (outcome, curves) = sweep_angles(runner, &cfg, angles_deg)?;
    fs::create_dir_all(out_dir)?;
    for (theta, curve) in &curves {
        fs::write(
            out_dir.join(format!("curve_theta_{}.csv", sig6(*theta))),
            output::curve_to_string(curve),
        )?;
    }
    let mut buf = Vec::new();
    output::write_sweep(&outcome.rows, &mut buf)?;
    fs::write(out_dir.join("lifetimes.csv"), buf)?;
    fs::write(out_dir.join("temperature.txt"), &outcome.report)?;
    if outcome.rows.iter().any(|r| r.status != "ok") {
        return Err(Failure::Numerical(
            "one or more angles failed; partial results written".to_owned(),
        ));
    }
    Ok(outcome)
}

/// `fit`: fit an external curve CSV and return the report text.
pub fn fit_file(
    path: &Path,
    model: ModelKind,
    fixed_a: Option<f64>,
    exclude_first: bool,
) -> Result<(String, FitResult), Failure> {
    let file = fs::File::open(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let curve = output::read_curve(file).map_err(|e| Failure::Config(format!("{}: {e:#}", path.display())))?;
    let options = FitOptions {
        fixed_a,
        exclude_first,
        ..FitOptions::default()
    };
    if fixed_a.is_some() && model == ModelKind::Gaussian {
        return Err(Failure::Config("--fix-a needs a model with an A parameter".to_owned()));
    }
    match fit_curve(&curve, model, &options) {
        Ok(fit) => Ok((output::fit_report(&fit, true), fit)),
        Err(p) => Err(Failure::Numerical(p.message)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReproRow {
    pub quantity: String,
    pub unit: &'static str,
    pub computed: f64,
    pub reference: f64,
    pub lo: f64,
    pub hi: f64,
}

impl ReproRow {
    pub fn pass(&self) -> bool {
        self.computed >= self.lo && self.computed <= self.hi
    }

    pub fn deviation(&self) -> Option<f64> {
        (self.reference != 0.0).then(|| (self.computed - self.reference) / self.reference)
    }
}

/// Reference quantities at `temperature` (K) with the default cloud and beams.
pub fn reproduce_rows(temperature: f64) -> Result<Vec<ReproRow>, Failure> {
    let species = SpeciesConstants::RB87;
    let params = EnsembleParams {
        temperature,
        ..EnsembleParams::default()
    };
    let sw3 = spin_wave_vector(&BeamGeometry::from_degrees(3.0), &species).map_err(core_failure)?;
    let sw0 = spin_wave_vector(&BeamGeometry::from_degrees(0.0), &species).map_err(core_failure)?;
    let v_s = one_d_speed(&params).map_err(core_failure)?;
    let v_r = radial_speed(&params).map_err(core_failure)?;
    let row = |quantity: &str, unit, computed, reference, lo, hi| ReproRow {
        quantity: quantity.to_owned(),
        unit,
        computed,
        reference,
        lo,
        hi,
    };
    let mut rows = vec![
        row("lambda_SW(3 deg)", "um", sw3.wavelength * 1e6, 15.0, 14.5, 15.5),
        row("lambda_SW(0 deg)", "cm", sw0.wavelength * 1e2, 4.4, 4.3, 4.5),
        row(
            "tau_D(3 deg)",
            "us",
            motional_lifetime(&sw3, v_s).map_err(core_failure)? * 1e6,
            25.0,
            23.0,
            27.0,
        ),
        row(
            "tau_D(0 deg)",
            "ms",
            motional_lifetime(&sw0, v_s).map_err(core_failure)? * 1e3,
            72.0,
            68.0,
            76.0,
        ),
        row(
            "tau_L",
            "us",
            loss_lifetime(params.cloud_radius, v_r).map_err(core_failure)? * 1e6,
            950.0,
            900.0,
            1000.0,
        ),
        row(
            "collision rate",
            "Hz",
            collision_rate(&params).map_err(core_failure)?,
            1.0,
            0.7,
            1.3,
        ),
    ];
    let clock = ZeemanConfig::clock();
    for (g, s) in CLOCK_PAIRS {
        let cfg = ZeemanConfig {
            ground: g,
            storage: s,
            field_gradient: 1.0,
            ..clock
        };
        let shift = first_order_zeeman_shift(&cfg).map_err(core_failure)?;
        let name = format!("clock shift |{g}>-|{s}>");
        rows.push(row(&name, "rad/s", shift, 0.0, -1e-12, 1e-12));
    }
    Ok(rows)
}

pub fn reproduce_table(rows: &[ReproRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<28} {:>12} {:>10} {:>10} {:>6}  status",
        "quantity", "computed", "reference", "rel.dev", "unit"
    );
    for r in rows {
        let dev = r.deviation().map_or("-".to_owned(), |d| format!("{:+.2}%", d * 100.0));
        let _ = writeln!(
            s,
            "{:<28} {:>12} {:>10} {:>10} {:>6}  {}",
            r.quantity,
            sig6(r.computed),
            sig6(r.reference),
            dev,
            r.unit,
            if r.pass() { "PASS" } else { "FAIL" }
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::presets;

    #[test]
    fn reproduce_defaults_pass() {
        let rows = reproduce_rows(100e-6).unwrap();
        assert_eq!(rows.len(), 9);
        for r in &rows {
            assert!(r.pass(), "{r:?}");
        }
    }

    #[test]
    fn reproduce_flags_wrong_temperature() {
        let rows = reproduce_rows(400e-6).unwrap();
        let failing: Vec<_> = rows.iter().filter(|r| !r.pass()).map(|r| r.quantity.as_str()).collect();
        assert!(failing.contains(&"tau_D(3 deg)"));
        assert!(failing.contains(&"tau_L"));
        assert!(!failing.contains(&"lambda_SW(3 deg)"));
    }

    #[test]
    fn reproduce_table_is_stable() {
        let a = reproduce_table(&reproduce_rows(100e-6).unwrap());
        let b = reproduce_table(&reproduce_rows(100e-6).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 10);
    }

    #[test]
    fn auto_delays_span_lifetime() {
        let d = auto_delays_us(25e-6);
        assert_eq!(d.len(), 16);
        assert_eq!(d[0], 0.5);
        assert!((d[15] - 62.5).abs() < 1e-9);
        assert!(d.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn expected_lifetime_tracks_angle() {
        let t3 = expected_lifetime(&presets::fig2()).unwrap().unwrap();
        assert!(t3 > 23e-6 && t3 < 26e-6, "{t3}");
        let t0 = expected_lifetime(&presets::fig4()).unwrap().unwrap();
        assert!(t0 > 0.9e-3 && t0 < 1.0e-3, "{t0}");
    }

    #[test]
    fn fig2_scenario_fits_gaussian() {
        let cfg = ScenarioConfig {
            seed: Some(7),
            ..presets::fig2()
        };
        let run = run_scenario(&Sequential, &cfg).unwrap();
        let fit = run.fit.unwrap();
        assert_eq!(fit.kind, ModelKind::Gaussian);
        assert!((fit.lifetime - 25e-6).abs() < 3e-6, "{}", fit.lifetime);
    }

    #[test]
    fn combined_plan_uses_companion_loss() {
        let cfg = ScenarioConfig {
            seed: Some(3),
            ..presets::fig3c()
        };
        let run = run_scenario(&Sequential, &cfg).unwrap();
        let a = run.fixed_a.unwrap();
        let want = (radial_speed(&cfg.scenario().unwrap().ensemble).unwrap() / 100e-6).powi(2);
        assert!((a / want - 1.0).abs() < 0.1, "{a} vs {want}");
        assert!(run.fit.unwrap().a_fixed);
    }
}

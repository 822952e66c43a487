//! Text formats: curve CSV, fit reports, sweep tables and gnuplot scripts.

use std::fmt::Write as _;
use std::io::{Read, Write};

use anyhow::{bail, Context};
use coldmem_core::fit::{FitResult, Parameter};
use coldmem_core::photon::{CurvePoint, DecayCurve};
use serde::{Deserialize, Serialize};

/// Format `x` with six significant digits, `%g` style.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_owned();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_owned()
        } else if x > 0.0 {
            "inf".to_owned()
        } else {
            "-inf".to_owned()
        };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_owned()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        s
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    delay_us: f64,
    g: f64,
    sigma_g: f64,
}

pub fn write_curve<W: Write>(curve: &DecayCurve, out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["delay_us", "g", "sigma_g"])?;
    for p in curve.points() {
        w.write_record([sig6(p.delay * 1e6), sig6(p.g), sig6(p.sigma_g)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn curve_to_string(curve: &DecayCurve) -> String {
    let mut buf = Vec::new();
    write_curve(curve, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is ASCII")
}

/// Read a `delay_us,g,sigma_g` CSV (header required, delays in µs).
pub fn read_curve<R: Read>(input: R) -> anyhow::Result<DecayCurve> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["delay_us", "g", "sigma_g"] {
        bail!(
            "expected header delay_us,g,sigma_g, found {}",
            headers.iter().collect::<Vec<_>>().join(",")
        );
    }
    let mut points = Vec::new();
    for (i, row) in r.deserialize().enumerate() {
        let row: CurveRow = row.with_context(|| format!("row {}", i + 2))?;
        points.push(CurvePoint {
            delay: row.delay_us * 1e-6,
            g: row.g,
            sigma_g: row.sigma_g,
        });
    }
    DecayCurve::new(points).map_err(|e| anyhow::anyhow!("{e}"))
}

/// Flat `key=value` report; times in µs.
pub fn fit_report(fit: &FitResult, converged: bool) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k}={v}");
    };
    kv("model", fit.kind.name().to_owned());
    kv("converged", converged.to_string());
    kv("C", sig6(fit.c.value));
    kv("C_sigma", sig6(fit.c.sigma));
    if let Some(tau) = fit.tau_d {
        kv("tau_D_us", sig6(tau.value * 1e6));
        kv("tau_D_sigma_us", sig6(tau.sigma * 1e6));
    }
    if let Some(a) = fit.a {
        kv("A_per_s2", sig6(a.value));
        kv("A_sigma_per_s2", sig6(a.sigma));
        kv("A_fixed", fit.a_fixed.to_string());
    }
    kv("lifetime_us", sig6(fit.lifetime * 1e6));
    kv("lifetime_sigma_us", sig6(fit.lifetime_sigma * 1e6));
    kv("chi2", sig6(fit.chi2));
    kv("dof", fit.dof.to_string());
    kv("chi2_reduced", sig6(fit.chi2_reduced));
    kv("iterations", fit.iterations.to_string());
    s
}

/// Parse a report written by [`fit_report`] back into key/value pairs.
pub fn parse_report(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
        .collect()
}

/// One row of the lifetime-versus-angle table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub theta_deg: f64,
    pub fit: Option<FitResult>,
    /// Loss-corrected motional lifetime used for thermometry.
    pub motional: Option<Parameter>,
    pub status: String,
}

pub const SWEEP_HEADER: [&str; 11] = [
    "theta_deg",
    "model",
    "tau_D_us",
    "tau_D_sigma_us",
    "lifetime_us",
    "lifetime_sigma_us",
    "chi2_reduced",
    "points",
    "motional_tau_D_us",
    "motional_tau_D_sigma_us",
    "status",
];

pub fn write_sweep<W: Write>(rows: &[SweepRow], out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for row in rows {
        let mut rec = vec![sig6(row.theta_deg)];
        match &row.fit {
            Some(f) => {
                let (tau, tau_s) = f.tau_d.map_or((String::new(), String::new()), |t| {
                    (sig6(t.value * 1e6), sig6(t.sigma * 1e6))
                });
                rec.extend([
                    f.kind.name().to_owned(),
                    tau,
                    tau_s,
                    sig6(f.lifetime * 1e6),
                    sig6(f.lifetime_sigma * 1e6),
                    sig6(f.chi2_reduced),
                    (f.dof + free_params(f)).to_string(),
                ]);
            }
            None => rec.extend(std::iter::repeat_n(String::new(), 7)),
        }
        match row.motional {
            Some(p) => rec.extend([sig6(p.value * 1e6), sig6(p.sigma * 1e6)]),
            None => rec.extend([String::new(), String::new()]),
        }
        rec.push(row.status.clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn free_params(f: &FitResult) -> usize {
    1 + usize::from(f.tau_d.is_some()) + usize::from(f.a.is_some() && !f.a_fixed)
}

/// A gnuplot script plotting `curve.csv` with the fitted model on top.
pub fn gnuplot_script(fit: Option<&FitResult>, curve_file: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set xlabel 'storage time (us)'");
    let _ = writeln!(s, "set ylabel 'g_{{S,AS}}'");
    let mut plot = format!("plot '{curve_file}' using 1:2:3 with yerrorbars title 'simulated'");
    if let Some(f) = fit {
        let tau = f.tau_d.map_or("1e300".to_owned(), |t| sig6(t.value * 1e6));
        // A in us^-2
        let a = f.a.map_or("0".to_owned(), |a| sig6(a.value * 1e-12));
        let _ = writeln!(s, "C = {}", sig6(f.c.value));
        let _ = writeln!(s, "tau = {tau}");
        let _ = writeln!(s, "A = {a}");
        let _ = writeln!(s, "model(t) = 1 + C * exp(-(t/tau)**2) / (1 + A*t**2)");
        plot.push_str(&format!(", model(x) title '{} fit'", f.kind.name()));
    }
    let _ = writeln!(s, "{plot}");
    s
}

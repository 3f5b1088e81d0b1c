//! Rates CSV, fit report and resolved-config files.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use spinrelax_core::constants::{BOHR_MAGNETON_CM1_PER_T, BOLTZMANN_CM1_PER_K, SPEED_OF_LIGHT_CM_PER_S};
use spinrelax_core::dynamics::{FitModel, FitParameters};

use crate::deck::RunConfig;
use crate::run::{FitEntry, Row, ScanKnob};

pub const RATES_FILE: &str = "rates.csv";
pub const FIT_FILE: &str = "fit_report.txt";
pub const CONFIG_FILE: &str = "resolved_config.toml";

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Fixed-width scientific notation so reruns are byte-identical.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:.12e}")
    }
}

/// `#`-prefixed lines identifying the code, the deck and the constants.
pub fn provenance(config_sha256: &str, workers: usize) -> String {
    let mut s = String::new();
    writeln!(s, "# spinrelax {VERSION}").unwrap();
    writeln!(s, "# config_sha256 = {config_sha256}").unwrap();
    writeln!(s, "# workers = {workers}").unwrap();
    writeln!(s, "# bohr_magneton_cm1_per_T = {BOHR_MAGNETON_CM1_PER_T}").unwrap();
    writeln!(s, "# boltzmann_cm1_per_K = {BOLTZMANN_CM1_PER_K}").unwrap();
    writeln!(s, "# speed_of_light_cm_per_s = {SPEED_OF_LIGHT_CM_PER_S}").unwrap();
    writeln!(s, "# energies in cm^-1, fields in T, temperatures in K, times in s").unwrap();
    writeln!(s, "# order 4 rows include the second-order terms").unwrap();
    s
}

/// Rates table with one row per (field, temperature, order) point.
pub fn rates_csv(rows: &[Row], header: &str, scan: Option<ScanKnob>) -> String {
    let with_field = rows.iter().any(|r| r.field_t.is_some());
    let mut wtr = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut head: Vec<&str> = Vec::new();
    if let Some(k) = scan {
        head.push(k.column());
    }
    if with_field {
        head.extend(["field_x_T", "field_y_T", "field_z_T"]);
    }
    head.extend(["temperature_K", "order", "tau_s", "t1_s", "t2_s", "t2star_s", "overlap_score", "two_t1_s"]);
    wtr.write_record(&head).expect("in-memory write");
    for r in rows {
        let mut rec = Vec::with_capacity(head.len());
        if scan.is_some() {
            rec.push(format_number(r.scan_value.unwrap_or(f64::NAN)));
        }
        if with_field {
            let b = r.field_t.unwrap_or([f64::NAN; 3]);
            rec.extend(b.iter().map(|&x| format_number(x)));
        }
        let p = &r.report;
        rec.push(format_number(p.temperature_k));
        rec.push(p.order.as_u8().to_string());
        for x in [p.tau_s, p.t1_s, p.t2_s, p.t2star_s, p.overlap_score, 2.0 * p.t1_s] {
            rec.push(format_number(x));
        }
        wtr.write_record(&rec).expect("in-memory write");
    }
    let body = String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("ascii output");
    format!("{header}{body}")
}

/// Plain-text report, one `[[fit]]` block per quantity, order, field and model.
pub fn fit_report(fits: &[FitEntry], header: &str) -> String {
    let mut s = String::from(header);
    for f in fits {
        writeln!(s, "\n[[fit]]").unwrap();
        writeln!(s, "quantity = \"{}\"", f.quantity).unwrap();
        writeln!(s, "order = {}", f.order).unwrap();
        if let Some(b) = f.field_t {
            writeln!(s, "field_T = [{}, {}, {}]", format_number(b[0]), format_number(b[1]), format_number(b[2]))
                .unwrap();
        }
        let model = match f.model {
            FitModel::Arrhenius => "arrhenius",
            FitModel::PowerLaw => "power_law",
        };
        writeln!(s, "model = \"{model}\"").unwrap();
        if let Some([lo, hi]) = f.requested_window_k {
            writeln!(s, "requested_window_K = [{}, {}]", format_number(lo), format_number(hi)).unwrap();
        }
        match &f.result {
            Ok(r) => {
                match r.parameters {
                    FitParameters::Arrhenius { u_cm1, prefactor_per_s } => {
                        writeln!(s, "U_cm1 = {}", format_number(u_cm1)).unwrap();
                        writeln!(s, "prefactor_per_s = {}", format_number(prefactor_per_s)).unwrap();
                    }
                    FitParameters::PowerLaw { exponent, scale_per_s } => {
                        writeln!(s, "exponent = {}", format_number(exponent)).unwrap();
                        writeln!(s, "scale_per_s = {}", format_number(scale_per_s)).unwrap();
                    }
                }
                writeln!(s, "rms_log_residual = {}", format_number(r.rms_log_residual)).unwrap();
                writeln!(s, "window_K = [{}, {}]", format_number(r.window_k.0), format_number(r.window_k.1)).unwrap();
                writeln!(s, "points_used = {}", r.points_used).unwrap();
                writeln!(s, "points_rejected = {}", r.rejected.len()).unwrap();
            }
            Err(e) => {
                writeln!(s, "status = \"failed\"").unwrap();
                writeln!(s, "reason = {:?}", e.to_string()).unwrap();
            }
        }
    }
    s
}

fn write(dir: &Path, name: &str, contents: &str) -> io::Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

/// Writes the resolved config next to the results.
pub fn write_config(dir: &Path, cfg: &RunConfig, header: &str) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    write(dir, CONFIG_FILE, &format!("{header}{}", cfg.to_toml()))
}

pub fn write_rates(dir: &Path, name: &str, rows: &[Row], header: &str, scan: Option<ScanKnob>) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    write(dir, name, &rates_csv(rows, header, scan))
}

pub fn write_fits(dir: &Path, fits: &[FitEntry], header: &str) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    write(dir, FIT_FILE, &fit_report(fits, header))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_is_fixed() {
        assert_eq!(format_number(1.5), "1.500000000000e0");
        assert_eq!(format_number(-2.5e-30), "-2.500000000000e-30");
        assert_eq!(format_number(f64::INFINITY), "inf");
        assert_eq!(format_number(f64::NAN), "nan");
        assert_eq!(format_number(1.5).parse::<f64>().unwrap(), 1.5);
    }

    #[test]
    fn provenance_lines_are_comments() {
        let p = provenance("abc", 3);
        assert!(p.lines().all(|l| l.starts_with("# ")));
        assert!(p.contains("config_sha256 = abc"));
    }
}

//! Temperature/field sweeps and convergence scans over a validated deck.

use std::fmt;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use spinrelax_core::bath::{BroadeningPolicy, Channel, PhononMode};
use spinrelax_core::coupling::{HermiticityThresholds, StevensDerivative};
use spinrelax_core::dynamics::{self, FitModel, FitResult, RateReport};
use spinrelax_core::generators::{GeneratorOptions, Order};
use spinrelax_core::linalg::CMatrix;
use spinrelax_core::pipeline::{CouplingSource, CouplingSpec, Prepared, Problem};
use spinrelax_core::spin::{SpinModel, StevensTerm};
use spinrelax_core::Error;

use crate::deck::{self, RunConfig};

/// Where in a sweep a failure happened.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointContext {
    pub field_t: Option<[f64; 3]>,
    pub temperature_k: Option<f64>,
    pub order: Option<u8>,
    pub stage: &'static str,
}

impl fmt::Display for PointContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.stage)?;
        if let Some(b) = self.field_t {
            write!(f, ", field_T = [{}, {}, {}]", b[0], b[1], b[2])?;
        }
        if let Some(t) = self.temperature_k {
            write!(f, ", temperature_K = {t}")?;
        }
        if let Some(o) = self.order {
            write!(f, ", order = {o}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error ({context}): {source}")]
    Config { context: PointContext, source: Error },
    #[error("numerical error ({context}): {source}")]
    Numeric { context: PointContext, source: Error },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config { .. } => 2,
            RunError::Numeric { .. } => 3,
        }
    }
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidTerm { .. }
            | Error::UnsupportedRank(_)
            | Error::InvalidAngularMomentum(_)
            | Error::DimensionMismatch { .. }
            | Error::NotHermitian { .. }
            | Error::InvalidMode(_)
            | Error::InvalidTemperature(_)
            | Error::InvalidBroadening(_)
            | Error::InvalidArgument(_)
    )
}

fn setup_error(context: PointContext) -> impl FnOnce(Error) -> RunError {
    move |source| {
        if is_config_error(&source) {
            RunError::Config { context, source }
        } else {
            RunError::Numeric { context, source }
        }
    }
}

fn numeric_error(context: PointContext) -> impl FnOnce(Error) -> RunError {
    move |source| RunError::Numeric { context, source }
}

/// Wall time spent per stage, summed over the sweep.
#[derive(Debug, Clone, Default)]
pub struct StageTimings {
    pub prepare: Duration,
    pub second_order: Duration,
    pub fourth_order: Duration,
    pub extraction: Duration,
}

impl StageTimings {
    pub fn log(&self) {
        log::info!("stage prepare: {:.3} s", self.prepare.as_secs_f64());
        log::info!("stage second-order generator: {:.3} s", self.second_order.as_secs_f64());
        log::info!("stage fourth-order generator: {:.3} s", self.fourth_order.as_secs_f64());
        log::info!("stage rate extraction: {:.3} s", self.extraction.as_secs_f64());
    }
}

#[derive(Debug, Clone)]
pub struct Row {
    pub field_t: Option<[f64; 3]>,
    /// Value of the scanned knob, for scans.
    pub scan_value: Option<f64>,
    pub report: RateReport,
}

#[derive(Debug, Clone)]
pub struct FitEntry {
    pub quantity: String,
    pub order: u8,
    pub field_t: Option<[f64; 3]>,
    pub model: FitModel,
    pub requested_window_k: Option<[f64; 2]>,
    pub result: Result<FitResult, Error>,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<Row>,
    pub fits: Vec<FitEntry>,
    pub timings: StageTimings,
}

fn orders_of(cfg: &RunConfig) -> Vec<Order> {
    cfg.sweep.orders.iter().map(|&o| if o == 2 { Order::Second } else { Order::Fourth }).collect()
}

/// Translates a deck into a core problem at one field.
pub fn problem(cfg: &RunConfig, field_t: [f64; 3]) -> Result<Problem, Error> {
    let terms = cfg
        .spin
        .stevens
        .iter()
        .map(|s| StevensTerm::new(s.l, s.m, s.b_cm1))
        .collect::<Result<Vec<_>, _>>()?;
    let model = SpinModel::new(cfg.spin.two_j, terms, cfg.spin.g_j, field_t)?;
    let modes = cfg
        .bath
        .modes_cm1
        .iter()
        .enumerate()
        .map(|(k, &w)| PhononMode::new(k, w))
        .collect::<Result<Vec<_>, _>>()?;
    let couplings = cfg
        .coupling
        .iter()
        .map(|c| {
            let source = if let Some(rows) = &c.matrix_cm1 {
                let d = rows.len();
                let matrix = CMatrix::from_fn(d, d, |r, k| Complex64::new(rows[r][k][0], rows[r][k][1]));
                let basis = deck::matrix_basis(c.basis.as_deref().unwrap_or("mj")).expect("validated basis");
                CouplingSource::Matrix { matrix, basis }
            } else {
                let derivs = c.stevens_derivatives.as_deref().unwrap_or(&[]);
                CouplingSource::Stevens(
                    derivs.iter().map(|d| StevensDerivative { l: d.l, m: d.m, value_cm1: d.value_cm1 }).collect(),
                )
            };
            CouplingSpec { mode_index: c.mode, source }
        })
        .collect();
    let b = &cfg.bath.broadening;
    let kind = deck::broadening_kind(&b.kind).expect("validated kind");
    let broadening = BroadeningPolicy::new(kind, b.width_cm1, b.cutoff_sigmas)?;
    let n = &cfg.numerics;
    let options = GeneratorOptions {
        secular_tol_cm1: n.secular_tol_cm1,
        regularizer_cm1: n.regularizer_cm1,
        channels: n.channels.iter().map(|c| Channel::from_name(c).expect("validated channel")).collect(),
        drop_threshold_per_s: n.drop_threshold_per_s,
        pair_cutoff_sigmas: n.pair_cutoff_sigmas,
        same_mode_raman: n.same_mode_raman,
        workers: n.workers,
    };
    Ok(Problem {
        model,
        modes,
        couplings,
        broadening,
        options,
        rotate_to_easy_axis: cfg.spin.rotate_to_easy_axis,
        hermiticity: HermiticityThresholds::default(),
    })
}

fn prepare(cfg: &RunConfig, field_t: [f64; 3], ctx: &PointContext, timings: &mut StageTimings) -> Result<Prepared, RunError> {
    let start = Instant::now();
    let prepared = problem(cfg, field_t).and_then(|p| p.prepare()).map_err(setup_error(ctx.clone()))?;
    for c in prepared.couplings.iter().filter(|c| c.needs_notice) {
        log::warn!(
            "coupling for mode {} was symmetrized (max |V - V^H| = {:e})",
            c.mode_index,
            c.symmetrization_deviation
        );
    }
    timings.prepare += start.elapsed();
    Ok(prepared)
}

/// Reports at one temperature for the requested orders, fourth cumulative.
fn evaluate_point(
    prepared: &Prepared,
    temperature_k: f64,
    orders: &[Order],
    ctx: &PointContext,
    timings: &mut StageTimings,
) -> Result<Vec<RateReport>, RunError> {
    let ctx = PointContext { temperature_k: Some(temperature_k), ..ctx.clone() };
    let bath = prepared.bath(temperature_k).map_err(setup_error(PointContext { stage: "bath", ..ctx.clone() }))?;
    let start = Instant::now();
    let second = prepared
        .second_order(&bath)
        .map_err(numeric_error(PointContext { stage: "second-order generator", order: Some(2), ..ctx.clone() }))?;
    timings.second_order += start.elapsed();
    let mut cumulative = None;
    let mut out = Vec::with_capacity(orders.len());
    for &order in orders {
        let terms = match order {
            Order::Second => &second,
            Order::Fourth => {
                if cumulative.is_none() {
                    let start = Instant::now();
                    let fctx = PointContext { stage: "fourth-order generator", order: Some(4), ..ctx.clone() };
                    let fourth = prepared.fourth_order(&bath).map_err(numeric_error(fctx.clone()))?;
                    cumulative = Some(Prepared::combine(&second, &fourth).map_err(numeric_error(fctx))?);
                    timings.fourth_order += start.elapsed();
                }
                cumulative.as_ref().expect("set above")
            }
        };
        let start = Instant::now();
        let ectx = PointContext { stage: "rate extraction", order: Some(order.as_u8()), ..ctx.clone() };
        out.push(prepared.report(temperature_k, terms).map_err(numeric_error(ectx))?);
        timings.extraction += start.elapsed();
    }
    Ok(out)
}

fn fields_of(cfg: &RunConfig) -> Vec<Option<[f64; 3]>> {
    match &cfg.sweep.fields_t {
        Some(fs) => fs.iter().map(|&f| Some(f)).collect(),
        None => vec![None],
    }
}

/// Runs every field × temperature × order point of the deck and fits the
/// configured quantities.
pub fn run(cfg: &RunConfig) -> Result<SweepOutput, RunError> {
    let orders = orders_of(cfg);
    let mut timings = StageTimings::default();
    let mut rows = Vec::new();
    for field in fields_of(cfg) {
        let ctx = PointContext { field_t: field, stage: "model setup", ..Default::default() };
        let prepared = prepare(cfg, field.unwrap_or(cfg.spin.field_t), &ctx, &mut timings)?;
        for &t in &cfg.sweep.temperatures_k {
            for report in evaluate_point(&prepared, t, &orders, &ctx, &mut timings)? {
                rows.push(Row { field_t: field, scan_value: None, report });
            }
        }
    }
    let fits = fit_rows(cfg, &rows);
    Ok(SweepOutput { rows, fits, timings })
}

pub fn quantity_time(report: &RateReport, quantity: &str) -> f64 {
    match quantity {
        "tau" => report.tau_s,
        "t1" => report.t1_s,
        "t2" => report.t2_s,
        "t2star" => report.t2star_s,
        _ => f64::NAN,
    }
}

fn fit_rows(cfg: &RunConfig, rows: &[Row]) -> Vec<FitEntry> {
    let mut windows = Vec::new();
    if let Some(w) = cfg.fit.arrhenius_window_k {
        windows.push((FitModel::Arrhenius, Some(w)));
    }
    if let Some(w) = cfg.fit.power_law_window_k {
        windows.push((FitModel::PowerLaw, Some(w)));
    }
    if windows.is_empty() {
        windows = vec![(FitModel::Arrhenius, None), (FitModel::PowerLaw, None)];
    }
    let mut fits = Vec::new();
    for field in fields_of(cfg) {
        for &order in &cfg.sweep.orders {
            for quantity in &cfg.fit.quantities {
                for &(model, window) in &windows {
                    let curve: Vec<(f64, f64)> = rows
                        .iter()
                        .filter(|r| r.field_t == field && r.report.order.as_u8() == order)
                        .map(|r| (r.report.temperature_k, 1.0 / quantity_time(&r.report, quantity)))
                        .filter(|&(t, _)| window.is_none_or(|[lo, hi]| t >= lo && t <= hi))
                        .collect();
                    fits.push(FitEntry {
                        quantity: quantity.clone(),
                        order,
                        field_t: field,
                        model,
                        requested_window_k: window,
                        result: dynamics::fit_regimes(&curve, model),
                    });
                }
            }
        }
    }
    fits
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanKnob {
    Regularizer,
    Broadening,
}

impl ScanKnob {
    pub fn column(self) -> &'static str {
        match self {
            ScanKnob::Regularizer => "regularizer_cm1",
            ScanKnob::Broadening => "broadening_width_cm1",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            ScanKnob::Regularizer => "scan_regularizer.csv",
            ScanKnob::Broadening => "scan_broadening.csv",
        }
    }

    pub fn defaults(self) -> Vec<f64> {
        match self {
            ScanKnob::Regularizer => vec![0.25, 0.5, 1.0, 2.0, 4.0],
            ScanKnob::Broadening => vec![1.0, 2.0, 3.0, 5.0, 8.0],
        }
    }
}

/// Re-runs the sweep for each value of one numerical knob.
pub fn scan(cfg: &RunConfig, knob: ScanKnob, values: &[f64]) -> Result<SweepOutput, RunError> {
    let mut rows = Vec::new();
    let mut timings = StageTimings::default();
    for &v in values {
        let mut c = cfg.clone();
        match knob {
            ScanKnob::Regularizer => c.numerics.regularizer_cm1 = v,
            ScanKnob::Broadening => c.bath.broadening.width_cm1 = v,
        }
        let out = run(&c)?;
        timings.prepare += out.timings.prepare;
        timings.second_order += out.timings.second_order;
        timings.fourth_order += out.timings.fourth_order;
        timings.extraction += out.timings.extraction;
        rows.extend(out.rows.into_iter().map(|r| Row { scan_value: Some(v), ..r }));
    }
    Ok(SweepOutput { rows, fits: Vec::new(), timings })
}

//! Input decks: TOML files validated into a fully resolved [`RunConfig`].
//!
//! Validation walks the whole document and reports every problem it finds
//! rather than stopping at the first one.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use spinrelax_core::bath::{BroadeningKind, Channel};
use spinrelax_core::coupling::MatrixBasis;
use spinrelax_core::spin::StevensTerm;
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// Dotted key path, e.g. `sweep.temperatures_K[2]`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DeckError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("{} problem(s) in deck", .0.len())]
    Invalid(Vec<Diagnostic>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StevensEntry {
    pub l: i32,
    pub m: i32,
    #[serde(rename = "B_cm1")]
    pub b_cm1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeEntry {
    pub l: i32,
    pub m: i32,
    pub value_cm1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpinConfig {
    pub two_j: u32,
    pub g_j: f64,
    #[serde(rename = "field_T")]
    pub field_t: [f64; 3],
    pub rotate_to_easy_axis: bool,
    pub stevens: Vec<StevensEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BroadeningConfig {
    pub kind: String,
    pub width_cm1: f64,
    pub cutoff_sigmas: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BathConfig {
    /// Mode `k` of the deck is `modes_cm1[k]`.
    pub modes_cm1: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modes_file: Option<String>,
    pub broadening: BroadeningConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingConfig {
    pub mode: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<String>,
    /// Rows of `[re, im]` entries.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix_cm1: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stevens_derivatives: Option<Vec<DerivativeEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    #[serde(rename = "temperatures_K")]
    pub temperatures_k: Vec<f64>,
    /// Overrides `spin.field_T` when present.
    #[serde(rename = "fields_T", skip_serializing_if = "Option::is_none")]
    pub fields_t: Option<Vec<[f64; 3]>>,
    pub orders: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NumericsConfig {
    pub secular_tol_cm1: f64,
    pub regularizer_cm1: f64,
    pub channels: Vec<String>,
    pub drop_threshold_per_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_cutoff_sigmas: Option<f64>,
    pub same_mode_raman: bool,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitConfig {
    #[serde(rename = "arrhenius_window_K", skip_serializing_if = "Option::is_none")]
    pub arrhenius_window_k: Option<[f64; 2]>,
    #[serde(rename = "power_law_window_K", skip_serializing_if = "Option::is_none")]
    pub power_law_window_k: Option<[f64; 2]>,
    pub quantities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub spin: SpinConfig,
    pub bath: BathConfig,
    pub sweep: SweepConfig,
    pub numerics: NumericsConfig,
    pub output: OutputConfig,
    pub fit: FitConfig,
    pub coupling: Vec<CouplingConfig>,
}

impl RunConfig {
    /// The resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved config is serializable")
    }
}

/// A validated deck together with the hash of its source text.
#[derive(Debug, Clone)]
pub struct Deck {
    pub config: RunConfig,
    pub sha256: String,
    pub path: Option<PathBuf>,
}

pub const FIT_QUANTITIES: [&str; 4] = ["tau", "t1", "t2", "t2star"];

pub const DEFAULT_OUTPUT_DIR: &str = "spinrelax_out";

const SPIN_KEYS: &[&str] = &["two_j", "g_j", "field_T", "rotate_to_easy_axis", "stevens"];
const STEVENS_KEYS: &[&str] = &["l", "m", "B_cm1"];
const BATH_KEYS: &[&str] = &["modes_cm1", "modes_file", "broadening"];
const BROADENING_KEYS: &[&str] = &["kind", "width_cm1", "cutoff_sigmas"];
const COUPLING_KEYS: &[&str] = &["mode", "stevens_derivatives", "matrix_cm1", "basis"];
const DERIVATIVE_KEYS: &[&str] = &["l", "m", "value_cm1"];
const SWEEP_KEYS: &[&str] = &["temperatures_K", "fields_T", "orders"];
const NUMERICS_KEYS: &[&str] = &[
    "secular_tol_cm1",
    "regularizer_cm1",
    "channels",
    "drop_threshold_per_s",
    "pair_cutoff_sigmas",
    "same_mode_raman",
    "workers",
];
const OUTPUT_KEYS: &[&str] = &["dir"];
const FIT_KEYS: &[&str] = &["arrhenius_window_K", "power_law_window_K", "quantities"];
const TOP_KEYS: &[&str] = &["spin", "bath", "coupling", "sweep", "numerics", "output", "fit"];

/// Every accepted key, by section path (`coupling` entries as `coupling[]`).
pub fn known_keys() -> Vec<(&'static str, &'static [&'static str])> {
    vec![
        ("", TOP_KEYS),
        ("spin", SPIN_KEYS),
        ("spin.stevens[]", STEVENS_KEYS),
        ("bath", BATH_KEYS),
        ("bath.broadening", BROADENING_KEYS),
        ("coupling[]", COUPLING_KEYS),
        ("coupling[].stevens_derivatives[]", DERIVATIVE_KEYS),
        ("sweep", SWEEP_KEYS),
        ("numerics", NUMERICS_KEYS),
        ("output", OUTPUT_KEYS),
        ("fit", FIT_KEYS),
    ]
}

const UNIT_SUFFIXES: &[&str] = &["_cm1", "_T", "_K", "_per_s"];

fn unit_suffix(key: &str) -> Option<&'static str> {
    UNIT_SUFFIXES.iter().copied().find(|s| key.ends_with(s))
}

struct Ctx {
    diags: Vec<Diagnostic>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl Ctx {
    fn err(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.diags.push(Diagnostic { path: path.into(), message: message.into() });
    }

    fn check_keys(&mut self, t: &Table, path: &str, allowed: &[&str]) {
        for key in t.keys() {
            if allowed.contains(&key.as_str()) {
                continue;
            }
            let p = join(path, key);
            if let Some(k) = allowed.iter().find(|a| unit_suffix(a).is_some() && a.starts_with(&format!("{key}_"))) {
                self.err(p, format!("missing unit suffix; expected `{k}`"));
            } else if let Some(k) = key.rsplit_once('_').and_then(|(base, _)| {
                allowed.iter().find(|a| unit_suffix(a).is_some_and(|s| a.strip_suffix(s) == Some(base)))
            }) {
                self.err(p, format!("unsupported unit suffix; expected `{k}`"));
            } else {
                self.err(p, "unknown key");
            }
        }
    }

    fn table<'a>(&mut self, v: &'a Value, path: &str) -> Option<&'a Table> {
        match v {
            Value::Table(t) => Some(t),
            _ => {
                self.err(path, "expected a table");
                None
            }
        }
    }

    fn number(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v {
            Value::Float(x) if x.is_finite() => Some(*x),
            Value::Float(_) => {
                self.err(path, "must be finite");
                None
            }
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.err(path, "expected a number");
                None
            }
        }
    }

    fn integer(&mut self, v: &Value, path: &str) -> Option<i64> {
        match v {
            Value::Integer(i) => Some(*i),
            _ => {
                self.err(path, "expected an integer");
                None
            }
        }
    }

    fn boolean(&mut self, v: &Value, path: &str) -> Option<bool> {
        match v {
            Value::Boolean(b) => Some(*b),
            _ => {
                self.err(path, "expected true or false");
                None
            }
        }
    }

    fn string<'a>(&mut self, v: &'a Value, path: &str) -> Option<&'a str> {
        match v {
            Value::String(s) => Some(s),
            _ => {
                self.err(path, "expected a string");
                None
            }
        }
    }

    fn array<'a>(&mut self, v: &'a Value, path: &str) -> Option<&'a [Value]> {
        match v {
            Value::Array(a) => Some(a),
            _ => {
                self.err(path, "expected an array");
                None
            }
        }
    }

    fn numbers(&mut self, v: &Value, path: &str) -> Option<Vec<f64>> {
        let a = self.array(v, path)?;
        let mut out = Vec::with_capacity(a.len());
        let mut ok = true;
        for (k, x) in a.iter().enumerate() {
            match self.number(x, &format!("{path}[{k}]")) {
                Some(x) => out.push(x),
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn vector3(&mut self, v: &Value, path: &str) -> Option<[f64; 3]> {
        let xs = self.numbers(v, path)?;
        match <[f64; 3]>::try_from(xs.as_slice()) {
            Ok(a) => Some(a),
            Err(_) => {
                self.err(path, format!("expected 3 components, got {}", xs.len()));
                None
            }
        }
    }

    fn window(&mut self, v: &Value, path: &str) -> Option<[f64; 2]> {
        let xs = self.numbers(v, path)?;
        match xs.as_slice() {
            &[lo, hi] if lo > 0.0 && hi > lo => Some([lo, hi]),
            &[_, _] => {
                self.err(path, "expected 0 < low < high");
                None
            }
            _ => {
                self.err(path, format!("expected [low, high], got {} values", xs.len()));
                None
            }
        }
    }

    fn positive(&mut self, x: Option<f64>, path: &str) -> Option<f64> {
        match x {
            Some(x) if x > 0.0 => Some(x),
            Some(x) => {
                self.err(path, format!("must be positive, got {x}"));
                None
            }
            None => None,
        }
    }

    fn non_negative(&mut self, x: Option<f64>, path: &str) -> Option<f64> {
        match x {
            Some(x) if x >= 0.0 => Some(x),
            Some(x) => {
                self.err(path, format!("must be non-negative, got {x}"));
                None
            }
            None => None,
        }
    }
}

fn sub<'a>(ctx: &mut Ctx, parent: &'a Table, key: &str, path: &str) -> Option<&'a Table> {
    parent.get(key).and_then(|v| ctx.table(v, &join(path, key)))
}

/// Parses and validates a deck from text. Relative `modes_file` paths are
/// resolved against `base_dir`.
pub fn parse_str(text: &str, base_dir: &Path) -> Result<RunConfig, DeckError> {
    let doc: Table = text.parse().map_err(|e: toml::de::Error| DeckError::Syntax(e.to_string()))?;
    let mut ctx = Ctx { diags: Vec::new() };
    ctx.check_keys(&doc, "", TOP_KEYS);

    let spin = parse_spin(&mut ctx, &doc);
    let bath = parse_bath(&mut ctx, &doc, base_dir);
    let n_modes = bath.as_ref().map(|b| b.modes_cm1.len());
    let dim = spin.as_ref().map(|s| s.two_j as usize + 1);
    let coupling = parse_couplings(&mut ctx, &doc, n_modes, dim);
    let sweep = parse_sweep(&mut ctx, &doc);
    let numerics = parse_numerics(&mut ctx, &doc);
    let output = parse_output(&mut ctx, &doc);
    let fit = parse_fit(&mut ctx, &doc);

    if !ctx.diags.is_empty() {
        return Err(DeckError::Invalid(ctx.diags));
    }
    Ok(RunConfig {
        spin: spin.expect("no diagnostics"),
        bath: bath.expect("no diagnostics"),
        sweep: sweep.expect("no diagnostics"),
        numerics: numerics.expect("no diagnostics"),
        output: output.expect("no diagnostics"),
        fit: fit.expect("no diagnostics"),
        coupling: coupling.expect("no diagnostics"),
    })
}

/// Reads, hashes and validates a deck file.
pub fn load(path: &Path) -> Result<Deck, DeckError> {
    let bytes = std::fs::read(path).map_err(|source| DeckError::Io { path: path.to_path_buf(), source })?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| DeckError::Syntax(format!("deck is not UTF-8: {e}")))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let config = parse_str(&text, base)?;
    Ok(Deck { config, sha256: sha256_hex(&bytes), path: Some(path.to_path_buf()) })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_spin(ctx: &mut Ctx, doc: &Table) -> Option<SpinConfig> {
    let Some(t) = sub(ctx, doc, "spin", "") else {
        if !doc.contains_key("spin") {
            ctx.err("spin", "missing section");
        }
        return None;
    };
    ctx.check_keys(t, "spin", SPIN_KEYS);
    let two_j = match t.get("two_j") {
        None => {
            ctx.err("spin.two_j", "missing");
            None
        }
        Some(v) => match ctx.integer(v, "spin.two_j") {
            Some(n) if (1..=99).contains(&n) => Some(n as u32),
            Some(n) => {
                ctx.err("spin.two_j", format!("must be between 1 and 99, got {n}"));
                None
            }
            None => None,
        },
    };
    let g_j = match t.get("g_j") {
        None => {
            ctx.err("spin.g_j", "missing");
            None
        }
        Some(v) => ctx.number(v, "spin.g_j"),
    };
    let field_t = t.get("field_T").map_or(Some([0.0; 3]), |v| ctx.vector3(v, "spin.field_T"));
    let rotate = t.get("rotate_to_easy_axis").map_or(Some(true), |v| ctx.boolean(v, "spin.rotate_to_easy_axis"));
    let mut stevens = Some(Vec::new());
    if let Some(v) = t.get("stevens") {
        stevens = ctx.array(v, "spin.stevens").and_then(|items| {
            let mut out = Vec::new();
            let mut ok = true;
            for (k, item) in items.iter().enumerate() {
                let p = format!("spin.stevens[{k}]");
                match parse_lm_entry(ctx, item, &p, STEVENS_KEYS, "B_cm1") {
                    Some((l, m, b)) => out.push(StevensEntry { l, m, b_cm1: b }),
                    None => ok = false,
                }
            }
            ok.then_some(out)
        });
    }
    Some(SpinConfig {
        two_j: two_j?,
        g_j: g_j?,
        field_t: field_t?,
        rotate_to_easy_axis: rotate?,
        stevens: stevens?,
    })
}

fn parse_lm_entry(ctx: &mut Ctx, item: &Value, path: &str, keys: &[&str], value_key: &str) -> Option<(i32, i32, f64)> {
    let t = ctx.table(item, path)?;
    ctx.check_keys(t, path, keys);
    let get_int = |ctx: &mut Ctx, key: &str| match t.get(key) {
        None => {
            ctx.err(join(path, key), "missing");
            None
        }
        Some(v) => ctx.integer(v, &join(path, key)).map(|x| x as i32),
    };
    let l = get_int(ctx, "l");
    let m = get_int(ctx, "m");
    let value = match t.get(value_key) {
        None => {
            ctx.err(join(path, value_key), "missing");
            None
        }
        Some(v) => ctx.number(v, &join(path, value_key)),
    };
    let (l, m) = (l?, m?);
    if let Err(e) = StevensTerm::new(l, m, 0.0) {
        ctx.err(path, e.to_string());
        return None;
    }
    Some((l, m, value?))
}

fn read_modes_file(ctx: &mut Ctx, file: &str, base_dir: &Path) -> Option<Vec<f64>> {
    let path = base_dir.join(file);
    let mut reader = match csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_path(&path) {
        Ok(r) => r,
        Err(e) => {
            ctx.err("bath.modes_file", format!("cannot read {}: {e}", path.display()));
            return None;
        }
    };
    let column = match reader.headers() {
        Ok(h) => h.iter().position(|c| c == "omega_cm1"),
        Err(e) => {
            ctx.err("bath.modes_file", format!("cannot read header: {e}"));
            return None;
        }
    };
    let Some(column) = column else {
        ctx.err("bath.modes_file", "missing `omega_cm1` column");
        return None;
    };
    let mut out = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let parsed = rec.ok().and_then(|r| r.get(column).and_then(|s| s.parse::<f64>().ok()));
        match parsed {
            Some(x) => out.push(x),
            None => {
                ctx.err("bath.modes_file", format!("row {}: invalid `omega_cm1`", k + 1));
                return None;
            }
        }
    }
    Some(out)
}

fn parse_bath(ctx: &mut Ctx, doc: &Table, base_dir: &Path) -> Option<BathConfig> {
    let Some(t) = sub(ctx, doc, "bath", "") else {
        if !doc.contains_key("bath") {
            ctx.err("bath", "missing section");
        }
        return None;
    };
    ctx.check_keys(t, "bath", BATH_KEYS);
    let modes_file = t.get("modes_file").and_then(|v| ctx.string(v, "bath.modes_file")).map(str::to_string);
    let modes = match (t.get("modes_cm1"), &modes_file) {
        (Some(_), Some(_)) => {
            ctx.err("bath", "give either `modes_cm1` or `modes_file`, not both");
            None
        }
        (None, None) => {
            ctx.err("bath.modes_cm1", "missing");
            None
        }
        (Some(v), None) => ctx.numbers(v, "bath.modes_cm1"),
        (None, Some(f)) => read_modes_file(ctx, f, base_dir),
    };
    let modes = modes.and_then(|m| {
        let mut ok = true;
        if m.is_empty() {
            ctx.err("bath.modes_cm1", "mode list is empty");
            ok = false;
        }
        for (k, &w) in m.iter().enumerate() {
            if !(w > 0.0) {
                ctx.err(format!("bath.modes_cm1[{k}]"), format!("mode frequency must be positive, got {w}"));
                ok = false;
            }
        }
        ok.then_some(m)
    });
    let broadening = match sub(ctx, t, "broadening", "bath") {
        None if t.contains_key("broadening") => None,
        None => Some(BroadeningConfig { kind: "gaussian".into(), width_cm1: 3.0, cutoff_sigmas: 5.0 }),
        Some(b) => {
            ctx.check_keys(b, "bath.broadening", BROADENING_KEYS);
            let kind = match b.get("kind").map(|v| ctx.string(v, "bath.broadening.kind")) {
                None => Some("gaussian".to_string()),
                Some(Some(k)) if broadening_kind(k).is_some() => Some(k.to_string()),
                Some(Some(k)) => {
                    ctx.err("bath.broadening.kind", format!("unknown kind `{k}` (gaussian, lorentzian, exact)"));
                    None
                }
                Some(None) => None,
            };
            let w = b.get("width_cm1").map_or(Some(3.0), |v| ctx.number(v, "bath.broadening.width_cm1"));
            let w = ctx.positive(w, "bath.broadening.width_cm1");
            let c = b.get("cutoff_sigmas").map_or(Some(5.0), |v| ctx.number(v, "bath.broadening.cutoff_sigmas"));
            let c = ctx.positive(c, "bath.broadening.cutoff_sigmas");
            match (kind, w, c) {
                (Some(kind), Some(width_cm1), Some(cutoff_sigmas)) => {
                    Some(BroadeningConfig { kind, width_cm1, cutoff_sigmas })
                }
                _ => None,
            }
        }
    };
    Some(BathConfig { modes_cm1: modes?, modes_file, broadening: broadening? })
}

pub fn broadening_kind(name: &str) -> Option<BroadeningKind> {
    match name {
        "gaussian" => Some(BroadeningKind::Gaussian),
        "lorentzian" => Some(BroadeningKind::Lorentzian),
        "exact" => Some(BroadeningKind::Exact),
        _ => None,
    }
}

pub fn matrix_basis(name: &str) -> Option<MatrixBasis> {
    match name {
        "mj" => Some(MatrixBasis::Mj),
        "eigen" => Some(MatrixBasis::Eigen),
        _ => None,
    }
}

fn parse_matrix(ctx: &mut Ctx, v: &Value, path: &str, dim: Option<usize>) -> Option<Vec<Vec<[f64; 2]>>> {
    let rows = ctx.array(v, path)?;
    let mut out = Vec::with_capacity(rows.len());
    let mut ok = true;
    for (r, row) in rows.iter().enumerate() {
        let rp = format!("{path}[{r}]");
        let Some(entries) = ctx.array(row, &rp) else {
            ok = false;
            continue;
        };
        let mut parsed = Vec::with_capacity(entries.len());
        for (c, e) in entries.iter().enumerate() {
            let ep = format!("{rp}[{c}]");
            let z = match e {
                Value::Array(_) => ctx.numbers(e, &ep).and_then(|xs| match xs.as_slice() {
                    &[re, im] => Some([re, im]),
                    _ => {
                        ctx.err(&ep, "complex entries are [re, im]");
                        None
                    }
                }),
                _ => ctx.number(e, &ep).map(|re| [re, 0.0]),
            };
            match z {
                Some(z) => parsed.push(z),
                None => ok = false,
            }
        }
        out.push(parsed);
    }
    if let Some(d) = dim {
        if out.len() != d || out.iter().any(|r| r.len() != d) {
            ctx.err(path, format!("expected a {d}x{d} matrix"));
            ok = false;
        }
    }
    ok.then_some(out)
}

fn parse_couplings(
    ctx: &mut Ctx,
    doc: &Table,
    n_modes: Option<usize>,
    dim: Option<usize>,
) -> Option<Vec<CouplingConfig>> {
    let Some(v) = doc.get("coupling") else {
        return Some(Vec::new());
    };
    let items = ctx.array(v, "coupling")?;
    let mut out = Vec::with_capacity(items.len());
    let mut seen = BTreeSet::new();
    let mut ok = true;
    for (k, item) in items.iter().enumerate() {
        let path = format!("coupling[{k}]");
        let Some(t) = ctx.table(item, &path) else {
            ok = false;
            continue;
        };
        ctx.check_keys(t, &path, COUPLING_KEYS);
        let mode = match t.get("mode") {
            None => {
                ctx.err(join(&path, "mode"), "missing");
                None
            }
            Some(v) => match ctx.integer(v, &join(&path, "mode")) {
                Some(m) if m >= 0 && n_modes.is_none_or(|n| (m as usize) < n) => Some(m as usize),
                Some(m) => {
                    ctx.err(join(&path, "mode"), format!("no mode {m} in the bath"));
                    None
                }
                None => None,
            },
        };
        if let Some(m) = mode {
            if !seen.insert(m) {
                ctx.err(join(&path, "mode"), format!("mode {m} coupled more than once"));
            }
        }
        let has_derivs = t.contains_key("stevens_derivatives");
        let has_matrix = t.contains_key("matrix_cm1");
        if has_derivs && has_matrix {
            ctx.err(&path, "`stevens_derivatives` and `matrix_cm1` are mutually exclusive");
            ok = false;
            continue;
        }
        if !has_derivs && !has_matrix {
            ctx.err(&path, "needs `stevens_derivatives` or `matrix_cm1`");
            ok = false;
            continue;
        }
        let basis = match t.get("basis") {
            Some(_) if !has_matrix => {
                ctx.err(join(&path, "basis"), "only applies to `matrix_cm1`");
                None
            }
            Some(v) => match ctx.string(v, &join(&path, "basis")) {
                Some(b) if matrix_basis(b).is_some() => Some(Some(b.to_string())),
                Some(b) => {
                    ctx.err(join(&path, "basis"), format!("unknown basis `{b}` (mj, eigen)"));
                    None
                }
                None => None,
            },
            None if has_matrix => Some(Some("mj".to_string())),
            None => Some(None),
        };
        let derivs = if has_derivs {
            let p = join(&path, "stevens_derivatives");
            ctx.array(&t["stevens_derivatives"], &p).and_then(|entries| {
                let mut d = Vec::new();
                let mut good = true;
                for (q, e) in entries.iter().enumerate() {
                    match parse_lm_entry(ctx, e, &format!("{p}[{q}]"), DERIVATIVE_KEYS, "value_cm1") {
                        Some((l, m, value_cm1)) => d.push(DerivativeEntry { l, m, value_cm1 }),
                        None => good = false,
                    }
                }
                good.then_some(Some(d))
            })
        } else {
            Some(None)
        };
        let matrix = if has_matrix {
            parse_matrix(ctx, &t["matrix_cm1"], &join(&path, "matrix_cm1"), dim).map(Some)
        } else {
            Some(None)
        };
        match (mode, basis, derivs, matrix) {
            (Some(mode), Some(basis), Some(stevens_derivatives), Some(matrix_cm1)) => {
                out.push(CouplingConfig { mode, basis, matrix_cm1, stevens_derivatives })
            }
            _ => ok = false,
        }
    }
    ok.then_some(out)
}

fn parse_sweep(ctx: &mut Ctx, doc: &Table) -> Option<SweepConfig> {
    let Some(t) = sub(ctx, doc, "sweep", "") else {
        if !doc.contains_key("sweep") {
            ctx.err("sweep", "missing section");
        }
        return None;
    };
    ctx.check_keys(t, "sweep", SWEEP_KEYS);
    let temps = match t.get("temperatures_K") {
        None => {
            if !t.keys().any(|k| k == "temperatures") {
                ctx.err("sweep.temperatures_K", "missing");
            }
            None
        }
        Some(v) => ctx.numbers(v, "sweep.temperatures_K").and_then(|ts| {
            let mut ok = !ts.is_empty();
            if ts.is_empty() {
                ctx.err("sweep.temperatures_K", "temperature list is empty");
            }
            for (k, &x) in ts.iter().enumerate() {
                if !(x > 0.0) {
                    ctx.err(format!("sweep.temperatures_K[{k}]"), format!("temperature must be positive, got {x}"));
                    ok = false;
                }
            }
            ok.then_some(ts)
        }),
    };
    let fields = match t.get("fields_T") {
        None => Some(None),
        Some(v) => ctx.array(v, "sweep.fields_T").and_then(|items| {
            let mut out = Vec::new();
            let mut ok = !items.is_empty();
            if items.is_empty() {
                ctx.err("sweep.fields_T", "field list is empty");
            }
            for (k, f) in items.iter().enumerate() {
                match ctx.vector3(f, &format!("sweep.fields_T[{k}]")) {
                    Some(b) => out.push(b),
                    None => ok = false,
                }
            }
            ok.then_some(Some(out))
        }),
    };
    let orders = match t.get("orders") {
        None => Some(vec![2, 4]),
        Some(Value::String(s)) if s == "both" => Some(vec![2, 4]),
        Some(Value::Integer(2)) => Some(vec![2]),
        Some(Value::Integer(4)) => Some(vec![4]),
        Some(Value::Array(a)) => {
            let mut o: Vec<u8> = Vec::new();
            let mut ok = !a.is_empty();
            for x in a {
                match x {
                    Value::Integer(2) => o.push(2),
                    Value::Integer(4) => o.push(4),
                    _ => ok = false,
                }
            }
            o.sort_unstable();
            o.dedup();
            if !ok {
                ctx.err("sweep.orders", "orders are \"both\", 2, 4 or a list of 2 and 4");
            }
            ok.then_some(o)
        }
        Some(_) => {
            ctx.err("sweep.orders", "orders are \"both\", 2, 4 or a list of 2 and 4");
            None
        }
    };
    Some(SweepConfig { temperatures_k: temps?, fields_t: fields?, orders: orders? })
}

fn parse_numerics(ctx: &mut Ctx, doc: &Table) -> Option<NumericsConfig> {
    let empty = Table::new();
    let t = match doc.get("numerics") {
        None => &empty,
        Some(v) => ctx.table(v, "numerics")?,
    };
    ctx.check_keys(t, "numerics", NUMERICS_KEYS);
    let num = |ctx: &mut Ctx, key: &str, default: f64| {
        let p = join("numerics", key);
        let x = t.get(key).map_or(Some(default), |v| ctx.number(v, &p));
        ctx.non_negative(x, &p)
    };
    let secular_tol_cm1 = num(ctx, "secular_tol_cm1", 1e-6);
    let regularizer_cm1 = num(ctx, "regularizer_cm1", 1.0);
    let drop_threshold_per_s = num(ctx, "drop_threshold_per_s", 0.0);
    let pair_cutoff_sigmas = match t.get("pair_cutoff_sigmas") {
        None => Some(None),
        Some(v) => {
            let x = ctx.number(v, "numerics.pair_cutoff_sigmas");
            ctx.positive(x, "numerics.pair_cutoff_sigmas").map(Some)
        }
    };
    let channels = match t.get("channels") {
        None => Some(vec![Channel::AbsorptionEmission.name().to_string()]),
        Some(v) => ctx.array(v, "numerics.channels").and_then(|items| {
            let mut out = Vec::new();
            let mut ok = true;
            for (k, c) in items.iter().enumerate() {
                let p = format!("numerics.channels[{k}]");
                match ctx.string(c, &p) {
                    Some(name) if Channel::from_name(name).is_some() => {
                        if !out.iter().any(|o| o == name) {
                            out.push(name.to_string());
                        }
                    }
                    Some(name) => {
                        ctx.err(
                            p,
                            format!(
                                "unknown channel `{name}` (absorption_emission, double_absorption, double_emission)"
                            ),
                        );
                        ok = false;
                    }
                    None => ok = false,
                }
            }
            ok.then_some(out)
        }),
    };
    let same_mode_raman = t.get("same_mode_raman").map_or(Some(false), |v| ctx.boolean(v, "numerics.same_mode_raman"));
    let workers = match t.get("workers") {
        None => Some(1),
        Some(v) => match ctx.integer(v, "numerics.workers") {
            Some(w) if w >= 1 => Some(w as usize),
            Some(w) => {
                ctx.err("numerics.workers", format!("must be at least 1, got {w}"));
                None
            }
            None => None,
        },
    };
    Some(NumericsConfig {
        secular_tol_cm1: secular_tol_cm1?,
        regularizer_cm1: regularizer_cm1?,
        channels: channels?,
        drop_threshold_per_s: drop_threshold_per_s?,
        pair_cutoff_sigmas: pair_cutoff_sigmas?,
        same_mode_raman: same_mode_raman?,
        workers: workers?,
    })
}

fn parse_output(ctx: &mut Ctx, doc: &Table) -> Option<OutputConfig> {
    let empty = Table::new();
    let t = match doc.get("output") {
        None => &empty,
        Some(v) => ctx.table(v, "output")?,
    };
    ctx.check_keys(t, "output", OUTPUT_KEYS);
    let dir = t.get("dir").map_or(Some(DEFAULT_OUTPUT_DIR), |v| ctx.string(v, "output.dir"))?;
    Some(OutputConfig { dir: dir.to_string() })
}

fn parse_fit(ctx: &mut Ctx, doc: &Table) -> Option<FitConfig> {
    let empty = Table::new();
    let t = match doc.get("fit") {
        None => &empty,
        Some(v) => ctx.table(v, "fit")?,
    };
    ctx.check_keys(t, "fit", FIT_KEYS);
    let arr = match t.get("arrhenius_window_K") {
        None => Some(None),
        Some(v) => ctx.window(v, "fit.arrhenius_window_K").map(Some),
    };
    let pow = match t.get("power_law_window_K") {
        None => Some(None),
        Some(v) => ctx.window(v, "fit.power_law_window_K").map(Some),
    };
    let quantities = match t.get("quantities") {
        None => Some(vec!["tau".to_string(), "t1".to_string()]),
        Some(v) => ctx.array(v, "fit.quantities").and_then(|items| {
            let mut out = Vec::new();
            let mut ok = true;
            for (k, q) in items.iter().enumerate() {
                let p = format!("fit.quantities[{k}]");
                match ctx.string(q, &p) {
                    Some(name) if FIT_QUANTITIES.contains(&name) => out.push(name.to_string()),
                    Some(name) => {
                        ctx.err(p, format!("unknown quantity `{name}` (tau, t1, t2, t2star)"));
                        ok = false;
                    }
                    None => ok = false,
                }
            }
            ok.then_some(out)
        }),
    };
    Some(FitConfig { arrhenius_window_k: arr?, power_law_window_k: pow?, quantities: quantities? })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[spin]
two_j = 1
g_j = 2.0
field_T = [0.0, 0.0, 1.0]

[bath]
modes_cm1 = [5.0]

[[coupling]]
mode = 0
matrix_cm1 = [[0.0, 1.0], [1.0, 0.0]]

[sweep]
temperatures_K = [2.0]
"#;

    fn diags(text: &str) -> Vec<Diagnostic> {
        match parse_str(text, Path::new(".")) {
            Err(DeckError::Invalid(d)) => d,
            other => panic!("expected diagnostics, got {other:?}"),
        }
    }

    #[test]
    fn minimal_deck_gets_defaults() {
        let c = parse_str(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(c.bath.broadening, BroadeningConfig { kind: "gaussian".into(), width_cm1: 3.0, cutoff_sigmas: 5.0 });
        assert_eq!(c.sweep.orders, vec![2, 4]);
        assert_eq!(c.numerics.secular_tol_cm1, 1e-6);
        assert_eq!(c.numerics.regularizer_cm1, 1.0);
        assert_eq!(c.numerics.channels, vec!["absorption_emission".to_string()]);
        assert_eq!(c.numerics.workers, 1);
        assert!(c.spin.rotate_to_easy_axis);
        assert_eq!(c.coupling[0].basis.as_deref(), Some("mj"));
        assert_eq!(c.coupling[0].matrix_cm1.as_ref().unwrap()[0][1], [1.0, 0.0]);
        assert_eq!(c.output.dir, DEFAULT_OUTPUT_DIR);
        let echoed = c.to_toml();
        assert_eq!(parse_str(&echoed, Path::new(".")).unwrap(), c);
    }

    #[test]
    fn negative_temperature_names_the_key() {
        let d = diags(&MINIMAL.replace("temperatures_K = [2.0]", "temperatures_K = [-5.0]"));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].path, "sweep.temperatures_K[0]");
    }

    #[test]
    fn matrix_and_derivatives_conflict() {
        let text = MINIMAL.replace(
            "matrix_cm1 = [[0.0, 1.0], [1.0, 0.0]]",
            "matrix_cm1 = [[0.0, 1.0], [1.0, 0.0]]\nstevens_derivatives = [{ l = 2, m = 0, value_cm1 = 1.0 }]",
        );
        let d = diags(&text);
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("mutually exclusive"), "{d:?}");
    }

    #[test]
    fn all_problems_are_reported() {
        let text = MINIMAL
            .replace("temperatures_K = [2.0]", "temperatures = [2.0]")
            .replace("modes_cm1 = [5.0]", "modes_cm1 = []")
            .replace("g_j = 2.0", "g_j = 2.0\nwidth_meV = 3");
        let d = diags(&text);
        let paths: Vec<&str> = d.iter().map(|x| x.path.as_str()).collect();
        assert!(paths.contains(&"sweep.temperatures"), "{paths:?}");
        assert!(d.iter().any(|x| x.message.contains("missing unit suffix; expected `temperatures_K`")));
        assert!(d.iter().any(|x| x.path == "bath.modes_cm1" && x.message.contains("empty")));
        assert!(d.iter().any(|x| x.path == "spin.width_meV" && x.message == "unknown key"));
    }

    #[test]
    fn wrong_unit_suffix() {
        let text = MINIMAL.replace("[bath]\n", "[bath]\n[bath.broadening]\nwidth_meV = 1.0\n[bath.x]\n");
        let d = diags(&text);
        assert!(d.iter().any(|x| x.path == "bath.broadening.width_meV" && x.message.contains("`width_cm1`")), "{d:?}");
    }

    #[test]
    fn couplings_checked_against_bath_and_spin() {
        let text = MINIMAL.replace("mode = 0", "mode = 3").replace("[1.0, 0.0]]", "[1.0, 0.0], [0.0, 0.0]]");
        let d = diags(&text);
        assert!(d.iter().any(|x| x.path == "coupling[0].mode"));
        assert!(d.iter().any(|x| x.path == "coupling[0].matrix_cm1" && x.message.contains("2x2")));
    }

    #[test]
    fn invalid_stevens_term() {
        let text = MINIMAL.replace("field_T", "stevens = [{ l = 3, m = 0, B_cm1 = 1.0 }]\nfield_T");
        let d = diags(&text);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].path, "spin.stevens[0]");
    }

    #[test]
    fn syntax_error_is_not_a_diagnostic_list() {
        assert!(matches!(parse_str("[spin", Path::new(".")), Err(DeckError::Syntax(_))));
    }
}

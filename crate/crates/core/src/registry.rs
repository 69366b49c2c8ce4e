//! Schedule files and the bundled published schedules.
//!
//! A schedule file is TOML, one schedule per file:
//!
//! ```toml
//! format_version = 1
//! scheduler = "vp"            # "rf" or "vp"
//! model_tag = "dit-xl-2"
//! nfe = 3
//! beta_min = 0.1              # vp only, required
//! beta_max = 20.0             # vp only, required
//! max_order = [0, 0, 1]       # optional, 0 = uncapped
//! deltas = [0.4, 0.35, 0.25]
//! coeffs = [
//!   [],
//!   [-1.1],
//!   [0.2, -0.9],
//! ]
//!
//! [provenance]
//! kind = "searched"           # or "paper_table"
//! config_hash = "9f2c..."     # optional
//! seed = 0                    # optional; quoted above i64::MAX
//! ```
//!
//! `coeffs` row `i` holds the `i` strictly-lower entries; the diagonal is
//! derived so each row of the coefficient matrix sums to one. Deltas whose sum
//! is off by more than `1e-12` are divided by their sum on load.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::schedules::{NoiseSchedule, Scheduler, SchedulerKind};
use crate::solvers::{OrderCap, SolverSchedule};

pub const FORMAT_VERSION: u32 = 1;

/// Largest accepted `|Σ deltas − 1|` in a file.
pub const DELTA_SUM_TOLERANCE: f64 = 2e-3;

/// Largest accepted row-sum error of the reconstructed matrix. Rows are exact
/// whenever a binary64 diagonal allows it; otherwise the error is below one
/// ulp of the diagonal.
pub const ROW_SUM_TOLERANCE: f64 = 1e-14;

/// Deviation below which deltas are kept verbatim instead of renormalized.
const RENORMALIZE_THRESHOLD: f64 = 1e-12;

/// Environment variable naming a directory that replaces the bundled tables.
pub const DATA_ENV: &str = "SOLVER_FORGE_DATA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProvenanceKind {
    PaperTable,
    Searched,
}

impl ProvenanceKind {
    fn as_str(self) -> &'static str {
        match self {
            ProvenanceKind::PaperTable => "paper_table",
            ProvenanceKind::Searched => "searched",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub kind: ProvenanceKind,
    #[serde(default)]
    pub config_hash: Option<String>,
    #[serde(default, deserialize_with = "seed_field")]
    pub seed: Option<u64>,
}

/// TOML integers are signed 64-bit, so seeds above `i64::MAX` are written as
/// quoted decimal strings.
fn seed_field<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<u64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Seed {
        Int(u64),
        Text(String),
    }
    match Seed::deserialize(d)? {
        Seed::Int(v) => Ok(Some(v)),
        Seed::Text(t) => t.parse().map(Some).map_err(serde::de::Error::custom),
    }
}

impl Provenance {
    pub fn paper_table() -> Self {
        Self {
            kind: ProvenanceKind::PaperTable,
            config_hash: None,
            seed: None,
        }
    }

    pub fn searched(config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            kind: ProvenanceKind::Searched,
            config_hash: Some(config_hash.into()),
            seed: Some(seed),
        }
    }
}

/// Parsed contents of a schedule file, before validation.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    pub format_version: u32,
    pub scheduler: SchedulerKind,
    pub model_tag: String,
    pub nfe: usize,
    #[serde(default)]
    pub beta_min: Option<f64>,
    #[serde(default)]
    pub beta_max: Option<f64>,
    #[serde(default)]
    pub max_order: Option<Vec<usize>>,
    pub deltas: Vec<f64>,
    pub coeffs: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

/// A validated schedule together with its file metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSchedule {
    pub schedule: SolverSchedule,
    pub model_tag: String,
    pub noise: NoiseSchedule,
    pub provenance: Provenance,
    /// Deltas exactly as written in the file.
    pub original_deltas: Vec<f64>,
    /// The deltas were divided by this (1 when kept verbatim).
    pub renormalization: f64,
}

impl LoadedSchedule {
    /// Sum of the deltas as written in the file.
    pub fn original_sum(&self) -> f64 {
        self.original_deltas.iter().sum()
    }

    /// Scheduler this schedule was searched for.
    pub fn scheduler(&self) -> Scheduler {
        match self.schedule.kind() {
            SchedulerKind::RectifiedFlow => Scheduler::RectifiedFlow,
            SchedulerKind::VpLinear => Scheduler::vp(self.noise).expect("validated on load"),
        }
    }

    /// Refuse to run under a different scheduler kind or β range.
    pub fn check_scheduler(&self, scheduler: &Scheduler) -> Result<()> {
        if scheduler.kind() != self.schedule.kind() {
            return Err(Error::KindMismatch {
                expected: self.schedule.kind(),
                found: scheduler.kind(),
            });
        }
        if let Scheduler::Vp { noise, .. } = scheduler {
            if noise.beta_min() != self.noise.beta_min() || noise.beta_max() != self.noise.beta_max() {
                return Err(Error::invalid(
                    "scheduler",
                    format!(
                        "schedule {} was searched for beta in [{}, {}], not [{}, {}]",
                        self.model_tag,
                        self.noise.beta_min(),
                        self.noise.beta_max(),
                        noise.beta_min(),
                        noise.beta_max()
                    ),
                ));
            }
        }
        Ok(())
    }
}

impl ScheduleFile {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let file: ScheduleFile = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.message().to_string(),
        })?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Version {
                found: file.format_version,
                expected: FORMAT_VERSION,
            });
        }
        Ok(file)
    }

    fn noise(&self) -> Result<NoiseSchedule> {
        match (self.scheduler, self.beta_min, self.beta_max) {
            (SchedulerKind::RectifiedFlow, None, None) => Ok(NoiseSchedule::rectified_flow()),
            (SchedulerKind::RectifiedFlow, _, _) => {
                Err(Error::invalid("beta_min/beta_max", "only allowed for vp schedules"))
            }
            (SchedulerKind::VpLinear, Some(lo), Some(hi)) => NoiseSchedule::vp_linear(lo, hi),
            (SchedulerKind::VpLinear, _, _) => {
                Err(Error::invalid("beta_min/beta_max", "required for vp schedules"))
            }
        }
    }

    fn cap(&self) -> Result<OrderCap> {
        match &self.max_order {
            None => Ok(OrderCap::none()),
            Some(rows) if rows.len() == self.nfe => Ok(OrderCap::per_row(
                rows.iter().map(|&k| (k > 0).then_some(k)).collect(),
            )),
            Some(rows) => Err(Error::invalid(
                "max_order",
                format!("expected {} entries, found {}", self.nfe, rows.len()),
            )),
        }
    }

    /// Check the file invariants and build the schedule.
    pub fn into_schedule(self) -> Result<LoadedSchedule> {
        let n = self.nfe;
        if n == 0 {
            return Err(Error::invalid("nfe", "must be at least 1"));
        }
        if self.deltas.len() != n {
            return Err(Error::invalid(
                "deltas",
                format!("expected {n} entries, found {}", self.deltas.len()),
            ));
        }
        if let Some(i) = self.deltas.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::invalid(format!("deltas[{i}]"), "must be positive and finite"));
        }
        let sum: f64 = self.deltas.iter().sum();
        if (sum - 1.0).abs() > DELTA_SUM_TOLERANCE {
            return Err(Error::invalid(
                "deltas",
                format!("sum to {sum}, more than {DELTA_SUM_TOLERANCE} from 1"),
            ));
        }
        if self.coeffs.len() != n {
            return Err(Error::invalid(
                "coeffs",
                format!("expected {n} rows, found {}", self.coeffs.len()),
            ));
        }
        for (i, row) in self.coeffs.iter().enumerate() {
            if row.len() != i {
                return Err(Error::invalid(
                    format!("coeffs row {i}"),
                    format!("expected {i} entries, found {}", row.len()),
                ));
            }
        }
        let noise = self.noise()?;
        let cap = self.cap()?;
        if let Some(rows) = &self.max_order {
            for (i, row) in self.coeffs.iter().enumerate() {
                for (j, c) in row.iter().enumerate() {
                    if *c != 0.0 && !cap.allows(i, j) {
                        return Err(Error::invalid(
                            format!("coeffs[{i}][{j}]"),
                            format!("nonzero beyond max_order {}", rows[i]),
                        ));
                    }
                }
            }
        }
        let renormalization = if (sum - 1.0).abs() > RENORMALIZE_THRESHOLD { sum } else { 1.0 };
        let deltas: Vec<f64> = if renormalization == 1.0 {
            self.deltas.clone()
        } else {
            self.deltas.iter().map(|d| d / sum).collect()
        };
        let schedule = SolverSchedule::from_deltas(deltas, self.coeffs, self.scheduler, cap)?;
        if schedule.max_row_sum_error() > ROW_SUM_TOLERANCE {
            return Err(Error::invalid("coeffs", "reconstructed rows do not sum to 1"));
        }
        Ok(LoadedSchedule {
            schedule,
            model_tag: self.model_tag,
            noise,
            provenance: self.provenance,
            original_deltas: self.deltas,
            renormalization,
        })
    }
}

fn fmt_f64(v: f64) -> String {
    // 17 significant digits round-trip every finite double
    format!("{v:.16e}")
}

fn fmt_list(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(", ")
}

/// Serialize a schedule in the file format. VP schedules need their noise
/// schedule for the β range.
pub fn to_toml(
    schedule: &SolverSchedule,
    model_tag: &str,
    noise: Option<&NoiseSchedule>,
    provenance: &Provenance,
) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "format_version = {FORMAT_VERSION}");
    let _ = writeln!(s, "scheduler = \"{}\"", schedule.kind());
    let _ = writeln!(s, "model_tag = {}", toml_string(model_tag));
    let _ = writeln!(s, "nfe = {}", schedule.nfe());
    if schedule.kind() == SchedulerKind::VpLinear {
        let noise = noise
            .filter(|n| n.kind() == SchedulerKind::VpLinear)
            .ok_or_else(|| Error::invalid("noise", "vp schedules need a vp noise schedule"))?;
        let _ = writeln!(s, "beta_min = {}", fmt_f64(noise.beta_min()));
        let _ = writeln!(s, "beta_max = {}", fmt_f64(noise.beta_max()));
    }
    if !schedule.cap().is_none() {
        let caps: Vec<String> = schedule
            .cap()
            .rows()
            .iter()
            .map(|c| c.unwrap_or(0).to_string())
            .collect();
        let _ = writeln!(s, "max_order = [{}]", caps.join(", "));
    }
    let _ = writeln!(s, "deltas = [{}]", fmt_list(schedule.deltas()));
    s.push_str("coeffs = [\n");
    for row in schedule.coeffs() {
        let _ = writeln!(s, "  [{}],", fmt_list(row));
    }
    s.push_str("]\n\n[provenance]\n");
    let _ = writeln!(s, "kind = \"{}\"", provenance.kind.as_str());
    if let Some(h) = &provenance.config_hash {
        let _ = writeln!(s, "config_hash = {}", toml_string(h));
    }
    if let Some(seed) = provenance.seed {
        if i64::try_from(seed).is_ok() {
            let _ = writeln!(s, "seed = {seed}");
        } else {
            let _ = writeln!(s, "seed = \"{seed}\"");
        }
    }
    Ok(s)
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

pub fn save_schedule(
    schedule: &SolverSchedule,
    model_tag: &str,
    noise: Option<&NoiseSchedule>,
    provenance: &Provenance,
    path: impl AsRef<Path>,
) -> Result<()> {
    let text = to_toml(schedule, model_tag, noise, provenance)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn parse_schedule(text: &str, origin: &Path) -> Result<LoadedSchedule> {
    ScheduleFile::parse(text, origin)?.into_schedule()
}

pub fn load_schedule(path: impl AsRef<Path>) -> Result<LoadedSchedule> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_schedule(&text, path)
}

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/data/tables/", $name)))),*]
    };
}

/// File name and contents of each bundled table.
pub const PAPER_TABLES: &[(&str, &str)] = bundled![
    "sit-xl-2-nfe5.toml",
    "sit-xl-2-nfe6.toml",
    "sit-xl-2-nfe7.toml",
    "sit-xl-2-nfe8.toml",
    "sit-xl-2-nfe9.toml",
    "sit-xl-2-nfe10.toml",
    "flowdcn-b-2-nfe5.toml",
    "flowdcn-b-2-nfe6.toml",
    "flowdcn-b-2-nfe7.toml",
    "flowdcn-b-2-nfe8.toml",
    "flowdcn-b-2-nfe9.toml",
    "flowdcn-b-2-nfe10.toml",
    "dit-xl-2-nfe5.toml",
    "dit-xl-2-nfe6.toml",
    "dit-xl-2-nfe7.toml",
    "dit-xl-2-nfe8.toml",
    "dit-xl-2-nfe9.toml",
    "dit-xl-2-nfe10.toml",
];

pub const MODEL_TAGS: [&str; 3] = ["sit-xl-2", "flowdcn-b-2", "dit-xl-2"];

pub fn table_name(model_tag: &str, nfe: usize) -> String {
    format!("{model_tag}-nfe{nfe}.toml")
}

fn data_override() -> Option<PathBuf> {
    std::env::var_os(DATA_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Text and origin path of a bundled table, honoring [`DATA_ENV`].
fn table_source(name: &str) -> Result<(Cow<'static, str>, PathBuf)> {
    if let Some(dir) = data_override() {
        let path = dir.join(name);
        return Ok((Cow::Owned(fs::read_to_string(&path)?), path));
    }
    PAPER_TABLES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, text)| (Cow::Borrowed(*text), PathBuf::from(format!("<bundled>/{n}"))))
        .ok_or_else(|| Error::invalid("table", format!("no bundled table {name}")))
}

/// Load one published table, e.g. `paper_table("sit-xl-2", 5)`.
pub fn paper_table(model_tag: &str, nfe: usize) -> Result<LoadedSchedule> {
    let name = table_name(model_tag, nfe);
    let (text, origin) = table_source(&name)?;
    parse_schedule(&text, &origin)
}

/// Validation summary of one table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableReport {
    pub name: String,
    pub model_tag: String,
    pub nfe: usize,
    pub delta_sum: f64,
    pub delta_sum_deviation: f64,
    pub max_abs_coeff: f64,
    /// Rows from the end whose only nonzero strictly-lower entry is the
    /// previous column.
    pub capped_tail_rows: usize,
    pub max_row_sum_error: f64,
    pub error: Option<String>,
}

impl TableReport {
    pub fn passed(&self) -> bool {
        self.error.is_none()
    }
}

/// Rows `i ≥ 2`, counted back from the last, whose entries before column
/// `i − 1` are all exactly zero.
pub fn capped_tail_rows(coeffs: &[Vec<f64>]) -> usize {
    coeffs
        .iter()
        .enumerate()
        .rev()
        .take_while(|(i, row)| *i >= 2 && row[..i - 1].iter().all(|&c| c == 0.0))
        .count()
}

fn report_for(name: &str, text: &str, origin: &Path) -> TableReport {
    let mut report = TableReport {
        name: name.to_string(),
        model_tag: String::new(),
        nfe: 0,
        delta_sum: f64::NAN,
        delta_sum_deviation: f64::NAN,
        max_abs_coeff: f64::NAN,
        capped_tail_rows: 0,
        max_row_sum_error: f64::NAN,
        error: None,
    };
    let file = match ScheduleFile::parse(text, origin) {
        Ok(f) => f,
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };
    report.model_tag = file.model_tag.clone();
    report.nfe = file.nfe;
    report.delta_sum = file.deltas.iter().sum();
    report.delta_sum_deviation = (report.delta_sum - 1.0).abs();
    report.max_abs_coeff = file.coeffs.iter().flatten().map(|c| c.abs()).fold(0.0, f64::max);
    report.capped_tail_rows = capped_tail_rows(&file.coeffs);
    match file.into_schedule() {
        Ok(loaded) => report.max_row_sum_error = loaded.schedule.max_row_sum_error(),
        Err(e) => report.error = Some(e.to_string()),
    }
    report
}

/// Validate a single file.
pub fn validate_file(path: impl AsRef<Path>) -> Result<TableReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(report_for(&name, &text, path))
}

/// Validate every published table.
pub fn validate_paper_tables() -> Vec<TableReport> {
    PAPER_TABLES
        .iter()
        .map(|(name, _)| match table_source(name) {
            Ok((text, origin)) => report_for(name, &text, &origin),
            Err(e) => TableReport {
                name: name.to_string(),
                model_tag: String::new(),
                nfe: 0,
                delta_sum: f64::NAN,
                delta_sum_deviation: f64::NAN,
                max_abs_coeff: f64::NAN,
                capped_tail_rows: 0,
                max_row_sum_error: f64::NAN,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn origin() -> PathBuf {
        PathBuf::from("test.toml")
    }

    #[test]
    fn sit5_deltas_and_sum() {
        let t = paper_table("sit-xl-2", 5).unwrap();
        assert_eq!(t.original_deltas, vec![0.0424, 0.1225, 0.2144, 0.3073, 0.3135]);
        assert!((t.original_sum() - 1.0001).abs() < 1e-12);
        assert_eq!(t.renormalization, t.original_sum());
        let s: f64 = t.schedule.deltas().iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(*t.schedule.times().last().unwrap(), 1.0);
        assert_eq!(t.provenance.kind, ProvenanceKind::PaperTable);
    }

    #[test]
    fn dit5_deltas() {
        let t = paper_table("dit-xl-2", 5).unwrap();
        assert_eq!(t.original_deltas, vec![0.2582, 0.1766, 0.1766, 0.2156, 0.1731]);
        assert_eq!(t.schedule.kind(), SchedulerKind::VpLinear);
        assert_eq!(t.noise, NoiseSchedule::dit());
    }

    #[test]
    fn tiny_dit_coefficient_kept_verbatim() {
        let t = paper_table("dit-xl-2", 7).unwrap();
        assert_eq!(t.schedule.coeffs()[4][0], -1.4901e-08);
    }

    #[test]
    fn all_tables_validate() {
        let reports = validate_paper_tables();
        assert_eq!(reports.len(), 18);
        for r in &reports {
            assert!(r.passed(), "{}: {:?}", r.name, r.error);
            assert!(r.delta_sum_deviation <= DELTA_SUM_TOLERANCE);
            // exact when a binary64 diagonal can make it so, else within an ulp
            assert!(r.max_row_sum_error <= ROW_SUM_TOLERANCE, "{}", r.name);
            let want_capped = if r.nfe <= 6 { 2 } else { 0 };
            assert_eq!(r.capped_tail_rows, want_capped, "{}", r.name);
        }
        let largest = reports
            .iter()
            .max_by(|a, b| a.max_abs_coeff.total_cmp(&b.max_abs_coeff))
            .unwrap();
        assert_eq!(largest.name, "flowdcn-b-2-nfe10.toml");
        assert_eq!(largest.max_abs_coeff, 7.8801);
    }

    #[test]
    fn sit5_capped_rows_have_one_entry() {
        let t = paper_table("sit-xl-2", 5).unwrap();
        for i in [3, 4] {
            let nonzero = t.schedule.coeffs()[i].iter().filter(|c| **c != 0.0).count();
            assert_eq!(nonzero, 1);
        }
    }

    #[test]
    fn single_step_file() {
        let text = "format_version = 1\nscheduler = \"rf\"\nmodel_tag = \"x\"\nnfe = 1\ndeltas = [1.0]\ncoeffs = [[]]\n[provenance]\nkind = \"searched\"\n";
        let t = parse_schedule(text, &origin()).unwrap();
        assert!(t.schedule.is_euler());
        assert_eq!(t.schedule.matrix(), &[vec![1.0]]);
    }

    #[test]
    fn bad_files_are_named() {
        let base = "format_version = 1\nscheduler = \"rf\"\nmodel_tag = \"x\"\nnfe = 2\n";
        let tail = "[provenance]\nkind = \"searched\"\n";
        let sum = format!("{base}deltas = [0.5, 0.4]\ncoeffs = [[], [0.1]]\n{tail}");
        let e = parse_schedule(&sum, &origin()).unwrap_err().to_string();
        assert!(e.contains("deltas"), "{e}");
        let row = format!("{base}deltas = [0.5, 0.5]\ncoeffs = [[], [0.1, 0.2]]\n{tail}");
        let e = parse_schedule(&row, &origin()).unwrap_err().to_string();
        assert!(e.contains("coeffs row 1"), "{e}");
        let ver = format!("format_version = 2\nscheduler = \"rf\"\nmodel_tag = \"x\"\nnfe = 1\ndeltas = [1.0]\ncoeffs = [[]]\n{tail}");
        assert!(matches!(parse_schedule(&ver, &origin()), Err(Error::Version { found: 2, .. })));
        assert!(matches!(parse_schedule("nfe = ", &origin()), Err(Error::Parse { .. })));
        let vp = format!("format_version = 1\nscheduler = \"vp\"\nmodel_tag = \"x\"\nnfe = 1\ndeltas = [1.0]\ncoeffs = [[]]\n{tail}");
        assert!(parse_schedule(&vp, &origin()).is_err());
    }

    fn random_schedule(rng: &mut ChaCha8Rng, kind: SchedulerKind) -> SolverSchedule {
        let n = rng.random_range(1..=10);
        let r = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c = (0..n)
            .map(|i| (0..i).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        SolverSchedule::build(r, c, kind, OrderCap::none()).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 0..100 {
            let kind = if k % 2 == 0 { SchedulerKind::RectifiedFlow } else { SchedulerKind::VpLinear };
            let s = random_schedule(&mut rng, kind);
            let noise = NoiseSchedule::dit();
            let prov = Provenance::searched("abc123", k);
            let text = to_toml(&s, "toy", Some(&noise), &prov).unwrap();
            let back = parse_schedule(&text, &origin()).unwrap();
            assert_eq!(back.renormalization, 1.0);
            assert_eq!(back.schedule.deltas(), s.deltas());
            assert_eq!(back.schedule.coeffs(), s.coeffs());
            assert_eq!(back.schedule.times(), s.times());
            assert_eq!(back.schedule.matrix(), s.matrix());
            assert_eq!(back.provenance, prov);
        }
    }

    #[test]
    fn paper_tables_round_trip() {
        for tag in MODEL_TAGS {
            for nfe in 5..=10 {
                let t = paper_table(tag, nfe).unwrap();
                let text = to_toml(&t.schedule, &t.model_tag, Some(&t.noise), &t.provenance).unwrap();
                let back = parse_schedule(&text, &origin()).unwrap();
                assert_eq!(back.schedule.deltas(), t.schedule.deltas());
                assert_eq!(back.schedule.coeffs(), t.schedule.coeffs());
            }
        }
    }

    #[test]
    fn capped_schedule_round_trips_cap() {
        let cap = OrderCap::tail(5, 2, 1);
        let s = SolverSchedule::euler(5, SchedulerKind::RectifiedFlow, cap.clone()).unwrap();
        let text = to_toml(&s, "toy", None, &Provenance::searched("h", 0)).unwrap();
        assert!(text.contains("max_order = [0, 0, 0, 1, 1]"));
        let back = parse_schedule(&text, &origin()).unwrap();
        assert_eq!(back.schedule.cap(), &cap);
    }

    #[test]
    fn beta_mismatch_refused() {
        let t = paper_table("dit-xl-2", 6).unwrap();
        assert!(t.check_scheduler(&Scheduler::dit()).is_ok());
        let other = Scheduler::vp(NoiseSchedule::vp_linear(0.1, 10.0).unwrap()).unwrap();
        assert!(t.check_scheduler(&other).is_err());
        assert!(t.check_scheduler(&Scheduler::RectifiedFlow).is_err());
    }
}

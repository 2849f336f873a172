//! Corpus generation across a worker pool.
//!
//! Every county yields one KML file per (scheme, mode) pair and one workbook.
//! Workers claim tasks from a shared cursor; each task renders and writes
//! exactly one file, so output bytes never depend on scheduling.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use thiserror::Error;

use crate::colormap::{density_scale, ColorScheme, NormalizationMode};
use crate::index::{county_geoid, CountryIndex, CountyNode, StateNode};
use crate::kml::{emit_kml, KmlError, KmlRenderSpec, DEFAULT_FILL_ALPHA, DEFAULT_LINE_ALPHA};
use crate::xlsx::{build_workbook, emit_xlsx, XlsxError};

pub const KML_DIR: &str = "GoogleEarth";
pub const XLSX_DIR: &str = "Excel";

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("output root {path} is not writable: {reason}")]
    OutputRootUnwritable { path: PathBuf, reason: String },
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error(transparent)]
    Kml(#[from] KmlError),
    #[error(transparent)]
    Xlsx(#[from] XlsxError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub output_root: PathBuf,
    pub workers: usize,
    pub schemes: Vec<ColorScheme>,
    pub modes: Vec<NormalizationMode>,
    pub fill_alpha: u8,
    pub case_rate: f64,
    pub emit_kml: bool,
    pub emit_xlsx: bool,
}

impl GenerationConfig {
    /// All schemes and modes, both emitters, default alpha, no case column.
    pub fn new(output_root: impl Into<PathBuf>, workers: usize) -> Self {
        GenerationConfig {
            output_root: output_root.into(),
            workers,
            schemes: ColorScheme::ALL.to_vec(),
            modes: NormalizationMode::ALL.to_vec(),
            fill_alpha: DEFAULT_FILL_ALPHA,
            case_rate: 0.0,
            emit_kml: true,
            emit_xlsx: true,
        }
    }

    pub fn validate(&self) -> Result<(), BatchError> {
        let bad = |m: &str| Err(BatchError::InvalidConfig(m.to_string()));
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if !self.emit_kml && !self.emit_xlsx {
            return bad("at least one of KML or workbook output must be enabled");
        }
        if self.emit_kml && (self.schemes.is_empty() || self.modes.is_empty()) {
            return bad("KML output needs at least one scheme and one mode");
        }
        if !(0.0..=1.0).contains(&self.case_rate) {
            return bad("case rate must lie in [0, 1]");
        }
        Ok(())
    }
}

/// What a task produces. Orders KML before workbooks, then by scheme and mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Artifact {
    Kml {
        scheme: ColorScheme,
        mode: NormalizationMode,
    },
    Xlsx,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputTask {
    pub state_fp: u8,
    pub county_fp: u16,
    pub artifact: Artifact,
    /// Relative to the output root.
    pub path: PathBuf,
}

pub fn sanitize_name(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "_".to_string()
    } else {
        s
    }
}

fn county_file_stem(state: &StateNode, county: &CountyNode) -> String {
    let stem = sanitize_name(&county.name);
    let clashes = state
        .counties
        .iter()
        .filter(|c| sanitize_name(&c.name) == stem)
        .count();
    if clashes > 1 {
        format!("{stem}_{:03}", county.county_fp)
    } else {
        stem
    }
}

/// `GoogleEarth/<State>/<County>_<scheme>_<mode>.kml` or `Excel/<State>/<County>.xlsx`.
///
/// Counties whose sanitized names clash within a state all get their
/// three-digit county FIPS appended.
pub fn layout_path(state: &StateNode, county: &CountyNode, artifact: Artifact) -> PathBuf {
    let state_dir = sanitize_name(&state.name);
    let stem = county_file_stem(state, county);
    match artifact {
        Artifact::Kml { scheme, mode } => [KML_DIR, &state_dir, &format!("{stem}_{scheme}_{mode}.kml")]
            .iter()
            .collect(),
        Artifact::Xlsx => [XLSX_DIR, &state_dir, &format!("{stem}.xlsx")].iter().collect(),
    }
}

fn sorted_unique<T: Ord + Copy>(items: &[T]) -> Vec<T> {
    let mut v = items.to_vec();
    v.sort();
    v.dedup();
    v
}

pub fn plan_outputs(index: &CountryIndex, cfg: &GenerationConfig) -> Vec<OutputTask> {
    let schemes = sorted_unique(&cfg.schemes);
    let modes = sorted_unique(&cfg.modes);
    let mut tasks = Vec::new();
    for (state, county) in index.counties() {
        let mut artifacts = Vec::new();
        if cfg.emit_kml {
            for &scheme in &schemes {
                for &mode in &modes {
                    artifacts.push(Artifact::Kml { scheme, mode });
                }
            }
        }
        if cfg.emit_xlsx {
            artifacts.push(Artifact::Xlsx);
        }
        tasks.extend(artifacts.into_iter().map(|artifact| OutputTask {
            state_fp: state.state_fp,
            county_fp: county.county_fp,
            artifact,
            path: layout_path(state, county, artifact),
        }));
    }
    tasks
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountyFailure {
    pub fips: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationReport {
    pub tasks_planned: usize,
    pub files_written: usize,
    pub bytes_written: u64,
    pub elapsed_secs: f64,
    pub tasks_failed: usize,
    /// First failure of each county that had any, in FIPS order.
    pub per_county_failures: Vec<CountyFailure>,
}

impl fmt::Display for GenerationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "files_written={} bytes_written={} tasks_failed={} counties_failed={} elapsed_s={:.3}",
            self.files_written,
            self.bytes_written,
            self.tasks_failed,
            self.per_county_failures.len(),
            self.elapsed_secs
        )
    }
}

/// Renders the bytes for one task.
pub fn render_task(index: &CountryIndex, cfg: &GenerationConfig, task: &OutputTask) -> Result<Vec<u8>, TaskError> {
    let state = index.find_state(task.state_fp).expect("planned from this index");
    let county = state.find_county(task.county_fp).expect("planned from this index");
    match task.artifact {
        Artifact::Kml { scheme, mode } => {
            let scale = density_scale(index, state, county, mode);
            let spec = KmlRenderSpec {
                county,
                scheme,
                scale: &scale,
                fill_alpha: cfg.fill_alpha,
                line_alpha: DEFAULT_LINE_ALPHA,
                document_name: format!("{}, {} ({scheme}, {mode})", county.name, state.name),
            };
            Ok(emit_kml(&spec)?)
        }
        Artifact::Xlsx => Ok(emit_xlsx(&build_workbook(county, cfg.case_rate)?)?),
    }
}

/// Writes via a sibling temporary file and an atomic rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::Builder::new().prefix(".partial-").tempfile_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn run_task(index: &CountryIndex, cfg: &GenerationConfig, task: &OutputTask) -> Result<u64, TaskError> {
    let bytes = render_task(index, cfg, task)?;
    let path = cfg.output_root.join(&task.path);
    write_atomic(&path, &bytes).map_err(|source| TaskError::Io { path, source })?;
    Ok(bytes.len() as u64)
}

fn check_root(root: &Path) -> Result<(), BatchError> {
    let unwritable = |reason: String| BatchError::OutputRootUnwritable {
        path: root.to_path_buf(),
        reason,
    };
    std::fs::create_dir_all(root).map_err(|e| unwritable(e.to_string()))?;
    tempfile::tempfile_in(root).map_err(|e| unwritable(e.to_string()))?;
    Ok(())
}

/// Generates every planned file under `cfg.output_root`.
///
/// The index is shared by reference with all workers. A failing task is
/// recorded in the report and never stops the others.
pub fn generate_all(index: &CountryIndex, cfg: &GenerationConfig) -> Result<GenerationReport, BatchError> {
    cfg.validate()?;
    check_root(&cfg.output_root)?;
    let started = Instant::now();
    let tasks = plan_outputs(index, cfg);
    let cursor = AtomicUsize::new(0);
    let outcomes: Mutex<Vec<Option<Result<u64, String>>>> = Mutex::new(vec![None; tasks.len()]);

    std::thread::scope(|scope| {
        for _ in 0..cfg.workers.min(tasks.len()) {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                let Some(task) = tasks.get(i) else { break };
                let outcome = run_task(index, cfg, task).map_err(|e| e.to_string());
                outcomes.lock().expect("no worker panics while holding the lock")[i] = Some(outcome);
            });
        }
    });

    let outcomes = outcomes.into_inner().expect("workers joined");
    let mut report = GenerationReport {
        tasks_planned: tasks.len(),
        files_written: 0,
        bytes_written: 0,
        elapsed_secs: 0.0,
        tasks_failed: 0,
        per_county_failures: Vec::new(),
    };
    for (task, outcome) in tasks.iter().zip(outcomes) {
        match outcome.expect("every task is claimed exactly once") {
            Ok(n) => {
                report.files_written += 1;
                report.bytes_written += n;
            }
            Err(error) => {
                report.tasks_failed += 1;
                let fips = county_geoid(task.state_fp, task.county_fp);
                if report.per_county_failures.last().map(|f| &f.fips) != Some(&fips) {
                    report.per_county_failures.push(CountyFailure { fips, error });
                }
            }
        }
    }
    report.elapsed_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{BoundingBox, PolygonGeometry};

    fn node_state(name: &str, counties: &[(u16, &str)]) -> StateNode {
        let bbox = BoundingBox::new(0.0, 1.0, 0.0, 1.0);
        StateNode {
            state_fp: 25,
            name: name.into(),
            bbox,
            geometry: PolygonGeometry::rectangle(&bbox),
            counties: counties
                .iter()
                .map(|(fp, n)| CountyNode {
                    county_fp: *fp,
                    name: n.to_string(),
                    bbox,
                    geometry: PolygonGeometry::rectangle(&bbox),
                    blocks: vec![],
                })
                .collect(),
        }
    }

    #[test]
    fn kml_path_template() {
        let s = node_state("Massachusetts", &[(17, "Middlesex")]);
        let p = layout_path(
            &s,
            &s.counties[0],
            Artifact::Kml {
                scheme: ColorScheme::Jet,
                mode: NormalizationMode::Relative,
            },
        );
        assert_eq!(p, PathBuf::from("GoogleEarth/Massachusetts/Middlesex_jet_relative.kml"));
        assert_eq!(
            layout_path(&s, &s.counties[0], Artifact::Xlsx),
            PathBuf::from("Excel/Massachusetts/Middlesex.xlsx")
        );
    }

    #[test]
    fn sanitization() {
        assert_eq!(sanitize_name("St. Mary's"), "St__Mary_s");
        assert_eq!(sanitize_name("Doña Ana"), "Do_a_Ana");
        assert_eq!(sanitize_name(""), "_");
        let s = node_state("New York", &[(1, "St. Mary's")]);
        let p = layout_path(&s, &s.counties[0], Artifact::Xlsx);
        assert_eq!(p, PathBuf::from("Excel/New_York/St__Mary_s.xlsx"));
    }

    #[test]
    fn collisions_disambiguated() {
        let s = node_state("X", &[(3, "A.B"), (5, "A B"), (7, "C")]);
        let paths: Vec<_> = s
            .counties
            .iter()
            .map(|c| layout_path(&s, c, Artifact::Xlsx))
            .collect();
        assert_eq!(paths[0], PathBuf::from("Excel/X/A_B_003.xlsx"));
        assert_eq!(paths[1], PathBuf::from("Excel/X/A_B_005.xlsx"));
        assert_eq!(paths[2], PathBuf::from("Excel/X/C.xlsx"));
    }

    #[test]
    fn config_validation() {
        let mut cfg = GenerationConfig::new("/tmp/x", 0);
        assert!(cfg.validate().is_err());
        cfg.workers = 2;
        assert!(cfg.validate().is_ok());
        cfg.emit_kml = false;
        cfg.emit_xlsx = false;
        assert!(cfg.validate().is_err());
        cfg.emit_xlsx = true;
        cfg.schemes.clear();
        assert!(cfg.validate().is_ok());
        cfg.emit_kml = true;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn artifact_order() {
        let k = |scheme, mode| Artifact::Kml { scheme, mode };
        let mut v = vec![
            Artifact::Xlsx,
            k(ColorScheme::Jet, NormalizationMode::Absolute),
            k(ColorScheme::RedBlue, NormalizationMode::Absolute),
            k(ColorScheme::Jet, NormalizationMode::Relative),
        ];
        v.sort();
        assert_eq!(
            v,
            vec![
                k(ColorScheme::RedBlue, NormalizationMode::Absolute),
                k(ColorScheme::Jet, NormalizationMode::Relative),
                k(ColorScheme::Jet, NormalizationMode::Absolute),
                Artifact::Xlsx,
            ]
        );
    }
}

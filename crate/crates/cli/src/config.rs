//! JSON configuration documents, one per command. Every document carries a
//! `schema_version`; unknown fields are rejected.

use serde::{Deserialize, Serialize};
use vrsverb_core::analysis::{Arrangement, Method, DENSE_VRS};
use vrsverb_core::scene::{
    build_fibonacci_array, build_ring_array_with_radius, fixture, LoudspeakerArray, Placement, Room,
    SUPPORTED_VRS_COUNTS,
};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn check_schema(version: u32) -> CliResult<()> {
    if version != SCHEMA_VERSION {
        return Err(CliError::Config(format!("unsupported schema_version {version}; this tool reads {SCHEMA_VERSION}")));
    }
    Ok(())
}

fn check_vrs_count(n: usize) -> CliResult<()> {
    if SUPPORTED_VRS_COUNTS.contains(&n) {
        Ok(())
    } else {
        Err(CliError::Config(format!("unsupported n_vrs {n}; expected one of {{6, 12, 24, 48, 96}}")))
    }
}

pub fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> CliResult<T> {
    serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ArraySpec {
    /// Five elevation rings plus both poles.
    Ring {
        #[serde(default = "ring_radius")]
        radius: f64,
    },
    /// Points on a Fibonacci lattice.
    Fibonacci { count: usize, radius: f64 },
}

fn ring_radius() -> f64 {
    2.5
}

impl Default for ArraySpec {
    fn default() -> Self {
        ArraySpec::Ring { radius: ring_radius() }
    }
}

impl ArraySpec {
    pub fn build(&self) -> CliResult<LoudspeakerArray> {
        match *self {
            ArraySpec::Ring { radius } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(CliError::Config(format!("array radius must be positive, got {radius}")));
                }
                Ok(build_ring_array_with_radius(radius))
            }
            ArraySpec::Fibonacci { count, radius } => Ok(build_fibonacci_array(count, radius)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    /// Named room fixture; mutually exclusive with `room` + `placement`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room: Option<Room>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<Placement>,
    pub n_vrs: usize,
    #[serde(default)]
    pub array: ArraySpec,
    pub sample_rate: f64,
    #[serde(default = "default_order")]
    pub ism_order: u32,
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_order() -> u32 {
    vrsverb_core::pipeline::DEFAULT_ISM_ORDER
}

impl RenderConfig {
    pub fn validate(&self) -> CliResult<()> {
        check_schema(self.schema_version)?;
        check_vrs_count(self.n_vrs)?;
        if !(self.sample_rate >= 8000.0 && self.sample_rate.is_finite()) {
            return Err(CliError::Config(format!("sample_rate must be at least 8000 Hz, got {}", self.sample_rate)));
        }
        if let Some(d) = self.duration {
            if !(d > 0.0 && d.is_finite()) {
                return Err(CliError::Config(format!("duration must be positive, got {d}")));
            }
        }
        self.scene().map(|_| ())
    }

    /// Room and placement, either from the named fixture or given inline.
    pub fn scene(&self) -> CliResult<(Room, Placement)> {
        match (&self.fixture, &self.room, &self.placement) {
            (Some(name), None, None) => Ok(fixture(name)?),
            (None, Some(room), Some(placement)) => {
                room.validate()?;
                placement.validate(room)?;
                Ok((room.clone(), placement.clone()))
            }
            _ => Err(CliError::Config("give either `fixture` or both `room` and `placement`".into())),
        }
    }

    pub fn label(&self) -> String {
        self.fixture.clone().unwrap_or_else(|| "custom".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Receiver axis fixed at 0° azimuth.
    Static,
    /// Receiver axis rotated through 0°, 2°, …, 358°.
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default = "default_arrangements")]
    pub arrangements: Vec<Arrangement>,
    #[serde(default = "default_counts")]
    pub n_vrs: Vec<usize>,
    #[serde(default = "default_spacings")]
    pub spacings: Vec<f64>,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    #[serde(default = "default_noise_duration")]
    pub duration: f64,
    #[serde(default = "default_fs")]
    pub sample_rate: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
}

fn default_arrangements() -> Vec<Arrangement> {
    vec![Arrangement::Vbap, Arrangement::Dir]
}

fn default_counts() -> Vec<usize> {
    vec![6, 12, 24, 48, 96, DENSE_VRS]
}

fn default_spacings() -> Vec<f64> {
    vec![0.17, 0.0156]
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::Static]
}

fn default_noise_duration() -> f64 {
    30.0
}

fn default_fs() -> f64 {
    96000.0
}

fn default_radius() -> f64 {
    1.25
}

fn default_tolerance() -> f64 {
    0.1
}

fn default_method() -> Method {
    Method::Spectral
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        parse("{}").expect("defaults parse")
    }
}

/// One simulation of the coherence grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub arrangement: Arrangement,
    pub n_vrs: usize,
    pub spacing: f64,
    pub mode: Mode,
}

impl Cell {
    pub fn file_name(&self) -> String {
        let mode = match self.mode {
            Mode::Static => "static",
            Mode::Sweep => "sweep",
        };
        let n = if self.arrangement == Arrangement::Fib { 87 } else { self.n_vrs };
        let mm = vrsverb_core::csv::format_sig(self.spacing * 1000.0).replace('.', "p");
        format!("coherence_{}_{n}_{mm}mm_{mode}.csv", self.arrangement.label().to_lowercase())
    }
}

impl CoherenceConfig {
    pub fn validate(&self) -> CliResult<()> {
        check_schema(self.schema_version)?;
        if self.arrangements.is_empty() || self.n_vrs.is_empty() || self.spacings.is_empty() || self.modes.is_empty() {
            return Err(CliError::Config("arrangements, n_vrs, spacings and modes must be non-empty".into()));
        }
        for &n in &self.n_vrs {
            if !self.arrangements.iter().any(|a| a.check_vrs(n).is_ok()) {
                return Err(CliError::Config(format!(
                    "n_vrs {n} is not valid for any listed arrangement; expected one of {{6, 12, 24, 48, 96}} ({DENSE_VRS} for VBAP/CH86)"
                )));
            }
        }
        for &d in &self.spacings {
            if !(d > 0.0 && d.is_finite()) {
                return Err(CliError::Config(format!("spacing must be positive, got {d}")));
            }
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(CliError::Config(format!("radius must be positive, got {}", self.radius)));
        }
        if !(self.sample_rate >= 8000.0 && self.sample_rate.is_finite()) {
            return Err(CliError::Config(format!("sample_rate must be at least 8000 Hz, got {}", self.sample_rate)));
        }
        if !(self.tolerance > 0.0) {
            return Err(CliError::Config(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if !(self.duration >= vrsverb_core::analysis::MIN_DURATION && self.duration.is_finite()) {
            return Err(CliError::Config(format!(
                "duration must be at least {} s, got {}",
                vrsverb_core::analysis::MIN_DURATION,
                self.duration
            )));
        }
        Ok(())
    }

    /// Grid cells in a fixed order. Counts that do not apply to an
    /// arrangement are skipped; FIB ignores the count and appears once.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &mode in &self.modes {
            for &spacing in &self.spacings {
                for &arrangement in &self.arrangements {
                    let counts: Vec<usize> = if arrangement == Arrangement::Fib {
                        vec![0]
                    } else {
                        self.n_vrs.iter().copied().filter(|&n| arrangement.check_vrs(n).is_ok()).collect()
                    };
                    for n_vrs in counts {
                        let cell = Cell { arrangement, n_vrs, spacing, mode };
                        if !out.contains(&cell) {
                            out.push(cell);
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub n_vrs: usize,
}

impl LayoutConfig {
    pub fn validate(&self) -> CliResult<()> {
        check_schema(self.schema_version)?;
        check_vrs_count(self.n_vrs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coherence_defaults() {
        let c = CoherenceConfig::default();
        c.validate().unwrap();
        assert_eq!(c.spacings, vec![0.17, 0.0156]);
        // VBAP gets all six counts, DIR skips the dense layout
        assert_eq!(c.cells().len(), 2 * (6 + 5));
    }

    #[test]
    fn fib_appears_once() {
        let c: CoherenceConfig = parse(r#"{"arrangements": ["FIB", "DIR"], "n_vrs": [6, 12], "spacings": [0.17]}"#).unwrap();
        let cells = c.cells();
        assert_eq!(cells.len(), 3);
        assert_eq!(cells[0].file_name(), "coherence_fib_87_170mm_static.csv");
    }

    #[test]
    fn rejects_unknown_fields_and_versions() {
        assert!(parse::<CoherenceConfig>(r#"{"spacing": 0.1}"#).is_err());
        let c: CoherenceConfig = parse(r#"{"schema_version": 7}"#).unwrap();
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn render_needs_one_scene_source() {
        let c: RenderConfig = parse(r#"{"n_vrs": 12, "sample_rate": 44100}"#).unwrap();
        assert!(c.validate().is_err());
        let c: RenderConfig = parse(r#"{"fixture": "Laboratory", "n_vrs": 10, "sample_rate": 44100}"#).unwrap();
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("{6, 12, 24, 48, 96}"), "{msg}");
        let c: RenderConfig = parse(r#"{"fixture": "Laboratory", "n_vrs": 12, "sample_rate": 44100}"#).unwrap();
        c.validate().unwrap();
        assert_eq!(c.array, ArraySpec::Ring { radius: 2.5 });
    }

    #[test]
    fn spacing_file_names() {
        let cell = Cell { arrangement: Arrangement::Vbap, n_vrs: 12, spacing: 0.0156, mode: Mode::Sweep };
        assert_eq!(cell.file_name(), "coherence_vbap_12_15p6mm_sweep.csv");
    }
}

//! Room to MRIR: image sources, FDN late reverberation, VRS downmix and
//! VBAP rendering in one call.

use serde::{Deserialize, Serialize};

use crate::dsp::fft_convolve;
use crate::error::{Error, Result};
use crate::fdn::{
    anisotropic_gains, calibrate_level, downmix, eyring_rt60_checked, fdn_inputs, mean_free_time, run_fdn, FdnConfig,
};
use crate::ism::{compute_reflections, last_order_arrivals, Reflection};
use crate::render::{assemble_mrir, Mrir, Panner};
use crate::scene::{build_vrs_layout, LoudspeakerArray, Placement, Room, VrsLayout, FINE_CHANNELS};

/// Reflection order rendered discretely; arrivals of this order also feed
/// the FDN.
pub const DEFAULT_ISM_ORDER: u32 = 3;

#[derive(Debug, Clone)]
pub struct RenderOptions {
    pub n_vrs: usize,
    pub sample_rate: f64,
    pub ism_order: u32,
    /// Response length in seconds; by default long enough for the slowest
    /// band to decay by 60 dB after the last injected arrival.
    pub duration: Option<f64>,
    pub seed: u64,
    pub array: LoudspeakerArray,
    /// Optional per-channel FIR applied after assembly (coloration
    /// compensation). `None` leaves the channels untouched.
    pub compensation: Option<Vec<f64>>,
}

impl RenderOptions {
    pub fn new(n_vrs: usize, sample_rate: f64, array: LoudspeakerArray) -> Self {
        Self { n_vrs, sample_rate, ism_order: DEFAULT_ISM_ORDER, duration: None, seed: 0, array, compensation: None }
    }
}

/// Everything produced while rendering one scene.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub mrir: Mrir,
    pub reflections: Vec<Reflection>,
    pub layout: VrsLayout,
    pub target_rt60: [f64; 7],
    /// Scale applied to the FDN output to meet the diffuse-field level.
    pub calibration: f64,
    /// Largest attenuation-filter error at the band centres (dB).
    pub fit_residual_db: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSummary {
    pub n_reflections: usize,
    pub n_vrs: usize,
    pub vrs_gains: Vec<f64>,
    pub target_rt60: [f64; 7],
    pub calibration: f64,
    pub fit_residual_db: f64,
}

impl Rendered {
    pub fn summary(&self) -> RenderSummary {
        RenderSummary {
            n_reflections: self.reflections.len(),
            n_vrs: self.layout.n_vrs,
            vrs_gains: self.layout.gains.clone(),
            target_rt60: self.target_rt60,
            calibration: self.calibration,
            fit_residual_db: self.fit_residual_db,
        }
    }
}

/// Fine FDN channels (one per line, calibrated) for a scene, with the
/// quantities needed to render them.
pub struct LateField {
    pub lines: Vec<Vec<f64>>,
    pub reflections: Vec<Reflection>,
    pub config: FdnConfig,
    pub calibration: f64,
    pub fit_residual_db: f64,
    pub duration: f64,
}

/// Image sources plus the calibrated 96-channel FDN response.
pub fn late_field(room: &Room, placement: &Placement, sample_rate: f64, order: u32, duration: Option<f64>, seed: u64) -> Result<LateField> {
    let rt60 = eyring_rt60_checked(room)?;
    let reflections = compute_reflections(room, placement, order)?;
    let arrivals = last_order_arrivals(&reflections)?;
    let config = FdnConfig::new(rt60, sample_rate, seed)?;
    let (_, fit_residual_db) = config.attenuation_filters();
    let fine = build_vrs_layout(FINE_CHANNELS)?.dirs();
    let inputs = fdn_inputs(&arrivals, &fine, &config, mean_free_time(room), None);
    let last = arrivals.iter().map(|r| r.delay).fold(0.0, f64::max);
    let max_delay = *config.delays.iter().max().unwrap_or(&0) as f64 / sample_rate;
    let longest = rt60.iter().copied().fold(0.0, f64::max);
    let duration = duration.unwrap_or(last + max_delay + longest);
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid duration {duration}")));
    }
    let mut lines = run_fdn(&config, &inputs, duration)?;
    let calibration = calibrate_level(&mut lines, room, &config, last)?;
    Ok(LateField { lines, reflections, config, calibration, fit_residual_db, duration })
}

/// Renders the MRIR of a shoebox scene on `options.array`.
pub fn render_scene(room: &Room, placement: &Placement, options: &RenderOptions) -> Result<Rendered> {
    options.array.validate()?;
    let field = late_field(room, placement, options.sample_rate, options.ism_order, options.duration, options.seed)?;
    let layout = build_vrs_layout(options.n_vrs)?;
    let gains = anisotropic_gains(room, placement, &layout)?;
    let layout = layout.with_gains(gains)?;
    let vrs = downmix(&field.lines, &layout, options.sample_rate)?;
    drop(field.lines);
    let panner = Panner::new(&options.array)?;
    let mut mrir = assemble_mrir(
        &field.reflections,
        &vrs,
        &layout,
        &panner,
        &placement.listener_frame(),
        options.sample_rate,
    )?;
    if let Some(fir) = &options.compensation {
        let len = mrir.len();
        for ch in mrir.channels.iter_mut() {
            let mut y = fft_convolve(ch, fir);
            y.truncate(len);
            *ch = y;
        }
    }
    mrir.meta.array_label = options.array.label.clone();
    mrir.meta.seed = Some(options.seed);
    Ok(Rendered {
        mrir,
        reflections: field.reflections,
        layout,
        target_rt60: field.config.band_rt60,
        calibration: field.calibration,
        fit_residual_db: field.fit_residual_db,
        duration: field.duration,
    })
}

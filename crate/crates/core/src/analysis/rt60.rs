//! Reverberation time from Schroeder backward integration.

use crate::dsp::octave_bandpass;
use crate::error::{Error, Result};

/// Level range of the linear fit (dB below the start of the decay).
const FIT_START_DB: f64 = -5.0;
const FIT_END_DB: f64 = -25.0;
/// The decay curve must reach this level before its final tenth.
const REQUIRED_DB: f64 = -35.0;

/// Schroeder energy decay curve in dB, normalised to 0 dB at the start.
pub fn energy_decay_curve(energy: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut edc: Vec<f64> = energy
        .iter()
        .rev()
        .map(|e| {
            acc += e;
            acc
        })
        .collect();
    edc.reverse();
    let total = edc.first().copied().unwrap_or(0.0);
    edc.iter().map(|e| 10.0 * (e / total).log10()).collect()
}

/// RT60 in the octave band around `band` of a single response.
pub fn estimate_rt60(rir: &[f64], sample_rate: f64, band: f64) -> Result<f64> {
    estimate_rt60_channels(&[rir], sample_rate, band)
}

/// RT60 of the band energy summed over all channels.
pub fn estimate_rt60_channels<S: AsRef<[f64]>>(channels: &[S], sample_rate: f64, band: f64) -> Result<f64> {
    if !(band > 0.0 && band < sample_rate / 2.0) {
        return Err(Error::InvalidArgument(format!("band {band} Hz outside (0, fs/2)")));
    }
    let len = channels.iter().map(|c| c.as_ref().len()).max().unwrap_or(0);
    if len == 0 {
        return Err(Error::Empty("empty impulse response".into()));
    }
    let mut energy = vec![0.0; len];
    for ch in channels {
        let mut filter = octave_bandpass(band, sample_rate);
        for (e, &x) in energy.iter_mut().zip(ch.as_ref()) {
            let y = filter.process(x);
            *e += y * y;
        }
    }
    fit_decay(&energy, sample_rate)
}

fn fit_decay(energy: &[f64], sample_rate: f64) -> Result<f64> {
    if energy.iter().all(|&e| e == 0.0) {
        return Err(Error::InsufficientDecay("silent response".into()));
    }
    let edc = energy_decay_curve(energy);
    let reach = edc.iter().position(|&v| v <= REQUIRED_DB);
    match reach {
        Some(i) if i < edc.len() * 9 / 10 => {}
        _ => {
            return Err(Error::InsufficientDecay(format!(
                "decay curve does not reach {REQUIRED_DB} dB before the end of the response"
            )))
        }
    }
    let start = edc.iter().position(|&v| v <= FIT_START_DB).unwrap_or(0);
    let end = edc.iter().position(|&v| v <= FIT_END_DB).unwrap_or(edc.len() - 1);
    if end <= start + 1 {
        return Err(Error::InsufficientDecay("fit range too short".into()));
    }
    // least-squares line through (t, edc) over the fit range
    let n = (end - start + 1) as f64;
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for (i, &v) in edc.iter().enumerate().take(end + 1).skip(start) {
        let t = i as f64 / sample_rate;
        st += t;
        sy += v;
        stt += t * t;
        sty += t * v;
    }
    let slope = (n * sty - st * sy) / (n * stt - st * st);
    if !(slope < 0.0) {
        return Err(Error::InsufficientDecay("decay curve is not falling".into()));
    }
    Ok(-60.0 / slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn decaying_noise(t60: f64, fs: f64, secs: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..(secs * fs) as usize)
            .map(|i| {
                let t = i as f64 / fs;
                let n: f64 = StandardNormal.sample(&mut rng);
                n * (-6.91 * t / t60).exp()
            })
            .collect()
    }

    #[test]
    fn exponential_decay_recovered() {
        // one realisation scatters by several percent in the low bands;
        // the energy of 64 independent ones is tight enough for 2 %
        let fs = 48000.0;
        let xs: Vec<Vec<f64>> = (0..64).map(|s| decaying_noise(0.5, fs, 1.5, s)).collect();
        for band in [125.0, 250.0, 1000.0, 4000.0, 8000.0] {
            let t = estimate_rt60_channels(&xs, fs, band).unwrap();
            assert!((t - 0.5).abs() < 0.01, "{band}: {t}");
        }
        let t = estimate_rt60(&xs[0], fs, 4000.0).unwrap();
        assert!((t - 0.5).abs() < 0.025, "{t}");
    }

    #[test]
    fn pure_energy_decay_exact() {
        // noiseless exponential energy: the fit is exact up to truncation
        let fs = 10000.0;
        let e: Vec<f64> = (0..30000).map(|i| (-13.82 * i as f64 / fs / 0.8).exp()).collect();
        let t = fit_decay(&e, fs).unwrap();
        assert!((t - 0.8).abs() < 0.8 * 1e-3, "{t}");
    }

    #[test]
    fn truncated_response_rejected() {
        let fs = 48000.0;
        let x = decaying_noise(2.0, fs, 0.5, 2);
        assert!(matches!(estimate_rt60(&x, fs, 1000.0), Err(Error::InsufficientDecay(_))));
        assert!(estimate_rt60(&vec![0.0; 1000], fs, 1000.0).is_err());
    }

    #[test]
    fn channel_sum_matches_single() {
        let fs = 48000.0;
        let x = decaying_noise(0.4, fs, 1.2, 3);
        let y = decaying_noise(0.4, fs, 1.2, 4);
        let t = estimate_rt60_channels(&[x, y], fs, 1000.0).unwrap();
        assert!((t - 0.4).abs() < 0.01);
    }

    #[test]
    fn edc_starts_at_zero_db() {
        let edc = energy_decay_curve(&[1.0, 1.0, 0.0]);
        assert_eq!(edc[0], 0.0);
        assert!((edc[1] + 10.0 * 2f64.log10()).abs() < 1e-12);
    }
}

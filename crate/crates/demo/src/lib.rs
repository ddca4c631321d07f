//! Browser bindings: filter response, ECOD scoring and model shapes.

use wasm_bindgen::prelude::*;

use mrwave::dsp::{design_bandpass, design_notch, fir_gain};
use mrwave::ecod::{ecod_scores, threshold_rule};
use mrwave::model::{feature_length, ModelConfig, MrEegWaveNet, N_SCALES};
use mrwave::nn::Module;

fn js(e: mrwave::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Magnitude in dB of the band-pass FIR cascaded with the notch, applied
/// forward and backward, at `points` frequencies from 0 to Nyquist.
pub fn response_db(
    low_hz: f64,
    high_hz: f64,
    num_taps: usize,
    notch_hz: f64,
    q_factor: f64,
    sample_rate: f64,
    points: usize,
) -> mrwave::Result<Vec<f64>> {
    let taps = design_bandpass(low_hz, high_hz, sample_rate, num_taps)?;
    let notch = if notch_hz > 0.0 {
        Some(design_notch(notch_hz, q_factor, sample_rate)?)
    } else {
        None
    };
    let nyquist = sample_rate / 2.0;
    Ok((0..points)
        .map(|i| {
            let f = nyquist * i as f64 / (points.max(2) - 1) as f64;
            let mut g = fir_gain(&taps, f, sample_rate);
            if let Some(bq) = &notch {
                g *= bq.gain(f, sample_rate);
            }
            20.0 * (g * g).max(1e-12).log10()
        })
        .collect())
}

/// Parses one point per line, values separated by commas or whitespace.
pub fn parse_rows(text: &str) -> Result<Vec<Vec<f64>>, String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, line)| {
            line.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| format!("line {}: bad number {t:?}", i + 1))
                })
                .collect()
        })
        .collect()
}

/// ECOD scores followed by a 0/1 flag for each score above the mean.
pub fn score_points(text: &str) -> Result<Vec<f64>, String> {
    let rows = parse_rows(text)?;
    let scores = ecod_scores(&rows).map_err(|e| e.to_string())?;
    let result = threshold_rule(&scores);
    Ok(result
        .scores
        .iter()
        .copied()
        .chain(result.flags.iter().map(|&f| f as f64))
        .collect())
}

/// Text summary of every tensor shape from the input window to the feature vector.
pub fn describe(
    window_sec: f64,
    resolutions: &[f64],
    channels: usize,
    sample_rate: f64,
) -> mrwave::Result<String> {
    let config = ModelConfig::new(window_sec, resolutions.to_vec(), channels, sample_rate);
    config.validate()?;
    let net = MrEegWaveNet::new(config.clone(), 0)?;
    let mut out = format!("input      ({channels}, {})\n", config.window_len());
    for (r, &d) in resolutions.iter().enumerate() {
        let (n, len) = (config.sub_count(d), config.sub_len(d));
        out += &format!("branch {r}   d = {d} s: {n} sub-segment(s) of ({channels}, {len})\n");
        let mut l = len;
        let scales: Vec<String> = (0..N_SCALES)
            .map(|_| {
                l /= 2;
                l.to_string()
            })
            .collect();
        out += &format!("  scales   {}\n", scales.join(" -> "));
        out += &format!(
            "  features {n} x {} = {}\n",
            config.feature_width,
            n * config.feature_width
        );
    }
    out += &format!("feature vector K = {}\n", feature_length(&config));
    out += &format!("trainable parameters {}\n", net.param_count());
    Ok(out)
}

#[wasm_bindgen(js_name = filterResponse)]
pub fn filter_response(
    low_hz: f64,
    high_hz: f64,
    num_taps: usize,
    notch_hz: f64,
    q_factor: f64,
    sample_rate: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    response_db(
        low_hz,
        high_hz,
        num_taps,
        notch_hz,
        q_factor,
        sample_rate,
        points,
    )
    .map_err(js)
}

#[wasm_bindgen(js_name = ecodScores)]
pub fn ecod_scores_js(text: &str) -> Result<Vec<f64>, JsError> {
    score_points(text).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = describeModel)]
pub fn describe_model(
    window_sec: f64,
    resolutions: &[f64],
    channels: usize,
    sample_rate: f64,
) -> Result<String, JsError> {
    describe(window_sec, resolutions, channels, sample_rate).map_err(js)
}

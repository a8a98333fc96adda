//! Synthesis of labeled power-quality disturbance waveforms.
//!
//! Seventeen classes: a clean reference signal (C0), five transient classes
//! (interruption, sag, swell, oscillatory transient, impulse transient), two
//! steady-state classes (flicker, harmonics), and nine composites. The
//! generator is fully deterministic: the spec carries every parameter, and
//! identical specs produce bit-identical signals. Randomness enters only in
//! [`default_spec`], seeded explicitly.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::series::TimeSeries;

#[derive(Debug, thiserror::Error)]
pub enum SgadError {
    #[error("unknown disturbance class {0:?}")]
    UnknownClass(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

/// Amplitude of the damped oscillation when it rides along another
/// disturbance (C13, C15, C16). For C4/C12 the spec magnitude is the
/// oscillation amplitude itself.
const OSC_SECONDARY_AMPLITUDE: f64 = 0.4;
/// Impulse decay constant; keeps the transient within a millisecond.
const IMPULSE_TAU_S: f64 = 0.0002;
/// Impulse support half-width.
const IMPULSE_HALF_SUPPORT_S: f64 = 0.0005;
/// Tolerance for "no disturbance here" amplitude checks in [`validate`].
const CLEAN_TOL: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DisturbanceClass {
    C0,
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
    C8,
    C9,
    C10,
    C11,
    C12,
    C13,
    C14,
    C15,
    C16,
}

/// Envelope-modulating constituent of a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AmplitudeKind {
    None,
    Interruption,
    Sag,
    Swell,
    Flicker,
}

/// Structural decomposition of a class into its constituents.
#[derive(Debug, Clone, Copy)]
struct ClassTraits {
    amplitude: AmplitudeKind,
    harmonics: bool,
    oscillatory: bool,
    impulse: bool,
}

impl DisturbanceClass {
    pub const ALL: [DisturbanceClass; 17] = [
        Self::C0,
        Self::C1,
        Self::C2,
        Self::C3,
        Self::C4,
        Self::C5,
        Self::C6,
        Self::C7,
        Self::C8,
        Self::C9,
        Self::C10,
        Self::C11,
        Self::C12,
        Self::C13,
        Self::C14,
        Self::C15,
        Self::C16,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|c| *c == self).unwrap()
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::C0 => "normal signal",
            Self::C1 => "voltage interruption",
            Self::C2 => "voltage sag",
            Self::C3 => "voltage swell",
            Self::C4 => "oscillatory transient",
            Self::C5 => "impulse transient",
            Self::C6 => "voltage flicker",
            Self::C7 => "harmonics",
            Self::C8 => "voltage sag with harmonics",
            Self::C9 => "voltage swell with harmonics",
            Self::C10 => "voltage interruption with harmonics",
            Self::C11 => "voltage flicker with harmonics",
            Self::C12 => "harmonics with oscillatory transient",
            Self::C13 => "voltage flicker with oscillatory transient",
            Self::C14 => "impulse transient with harmonics",
            Self::C15 => "voltage sag with oscillatory transient",
            Self::C16 => "voltage swell with oscillatory transient",
        }
    }

    fn traits(self) -> ClassTraits {
        let amplitude = match self {
            Self::C1 | Self::C10 => AmplitudeKind::Interruption,
            Self::C2 | Self::C8 | Self::C15 => AmplitudeKind::Sag,
            Self::C3 | Self::C9 | Self::C16 => AmplitudeKind::Swell,
            Self::C6 | Self::C11 | Self::C13 => AmplitudeKind::Flicker,
            _ => AmplitudeKind::None,
        };
        ClassTraits {
            amplitude,
            harmonics: matches!(
                self,
                Self::C7 | Self::C8 | Self::C9 | Self::C10 | Self::C11 | Self::C12 | Self::C14
            ),
            oscillatory: matches!(
                self,
                Self::C4 | Self::C12 | Self::C13 | Self::C15 | Self::C16
            ),
            impulse: matches!(self, Self::C5 | Self::C14),
        }
    }

    /// Whether any constituent is confined to the disturbance window.
    fn is_windowed(self) -> bool {
        let t = self.traits();
        t.impulse
            || t.oscillatory
            || matches!(
                t.amplitude,
                AmplitudeKind::Interruption | AmplitudeKind::Sag | AmplitudeKind::Swell
            )
    }
}

impl fmt::Display for DisturbanceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.index())
    }
}

impl FromStr for DisturbanceClass {
    type Err = SgadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        let digits = trimmed
            .strip_prefix('C')
            .or_else(|| trimmed.strip_prefix('c'))
            .unwrap_or(trimmed);
        digits
            .parse::<usize>()
            .ok()
            .and_then(|i| Self::ALL.get(i).copied())
            .ok_or_else(|| SgadError::UnknownClass(s.to_string()))
    }
}

/// Full parameterization of one synthetic signal.
///
/// `magnitude_pu` is interpreted per class: the in-window envelope level for
/// interruption/sag/swell classes, the envelope extremum for flicker classes,
/// the oscillation amplitude for C4/C12, the signed impulse peak for C5/C14,
/// and 1.0 for C0/C7.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSpec {
    pub class_id: DisturbanceClass,
    pub base_freq_hz: f64,
    pub sample_rate_hz: f64,
    pub n_cycles: u32,
    pub magnitude_pu: f64,
    pub start_frac: f64,
    pub end_frac: f64,
    pub harmonic_orders: Vec<(u32, f64)>,
    pub osc_freq_hz: f64,
    pub flicker_freq_hz: f64,
    pub seed: u64,
}

impl DisturbanceSpec {
    /// Expected sample count: `n_cycles * sample_rate / base_freq`, rounded.
    pub fn sample_count(&self) -> usize {
        (self.n_cycles as f64 * self.sample_rate_hz / self.base_freq_hz).round() as usize
    }

    pub fn samples_per_cycle(&self) -> usize {
        (self.sample_rate_hz / self.base_freq_hz).round() as usize
    }

    /// Check structural invariants and the class magnitude band.
    pub fn validate(&self) -> Result<(), SgadError> {
        if !(self.base_freq_hz.is_finite() && self.base_freq_hz > 0.0)
            || !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0)
        {
            return Err(SgadError::InvalidSpec(
                "frequencies must be positive".into(),
            ));
        }
        if self.sample_rate_hz < 20.0 * self.base_freq_hz {
            return Err(SgadError::InvalidSpec(format!(
                "sample rate {} below 20x base frequency {}",
                self.sample_rate_hz, self.base_freq_hz
            )));
        }
        if self.n_cycles == 0 {
            return Err(SgadError::InvalidSpec("n_cycles must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.start_frac) || !(0.0..=1.0).contains(&self.end_frac) {
            return Err(SgadError::InvalidSpec(
                "window fractions must lie in [0,1]".into(),
            ));
        }
        if self.class_id.is_windowed() {
            if self.start_frac >= self.end_frac {
                return Err(SgadError::InvalidSpec(
                    "disturbance window requires start_frac < end_frac".into(),
                ));
            }
            let cycles_in_window = (self.end_frac - self.start_frac) * self.n_cycles as f64;
            if cycles_in_window < 0.5 {
                return Err(SgadError::InvalidSpec(
                    "disturbance must last at least half a cycle".into(),
                ));
            }
        }
        let traits = self.class_id.traits();
        if traits.harmonics {
            if self.harmonic_orders.is_empty() {
                return Err(SgadError::InvalidSpec(
                    "harmonic classes need at least one harmonic order".into(),
                ));
            }
            for &(order, amp) in &self.harmonic_orders {
                if order < 2 || amp < 0.0 {
                    return Err(SgadError::InvalidSpec(format!(
                        "harmonic order {order} amplitude {amp} invalid"
                    )));
                }
                if order as f64 * self.base_freq_hz >= self.sample_rate_hz / 2.0 {
                    return Err(SgadError::InvalidSpec(format!(
                        "harmonic order {order} exceeds Nyquist"
                    )));
                }
            }
        }
        if traits.oscillatory
            && !(self.osc_freq_hz > 0.0 && self.osc_freq_hz < self.sample_rate_hz / 2.0)
        {
            return Err(SgadError::InvalidSpec(
                "oscillation frequency out of range".into(),
            ));
        }
        if matches!(traits.amplitude, AmplitudeKind::Flicker)
            && !(self.flicker_freq_hz > 0.0 && self.flicker_freq_hz < self.base_freq_hz)
        {
            return Err(SgadError::InvalidSpec(
                "flicker frequency out of range".into(),
            ));
        }
        let m = self.magnitude_pu;
        let band_ok = match traits.amplitude {
            AmplitudeKind::Interruption => (0.0..0.1).contains(&m),
            AmplitudeKind::Sag => (0.1..=0.9).contains(&m),
            AmplitudeKind::Swell => (1.1..=1.8).contains(&m),
            AmplitudeKind::Flicker => (0.95..=1.05).contains(&m) && (m - 1.0).abs() >= 1e-6,
            AmplitudeKind::None => {
                if traits.impulse {
                    (0.2..=2.0).contains(&m.abs())
                } else if matches!(self.class_id, DisturbanceClass::C4 | DisturbanceClass::C12) {
                    (0.05..=1.0).contains(&m)
                } else {
                    (m - 1.0).abs() <= 1e-9
                }
            }
        };
        if !band_ok {
            return Err(SgadError::InvalidSpec(format!(
                "magnitude {m} outside the {} band",
                self.class_id
            )));
        }
        Ok(())
    }
}

/// A synthesized waveform together with the spec that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSignal {
    pub series: TimeSeries,
    pub spec: DisturbanceSpec,
    pub label: DisturbanceClass,
}

/// Sample a legal spec for the class; deterministic given the seed.
/// Disturbance windows are aligned to whole cycles with at least one clean
/// cycle on each side.
pub fn default_spec(class_id: DisturbanceClass, seed: u64) -> DisturbanceSpec {
    sampled_spec(class_id, seed, 50.0, 3200.0, 10).expect("default parameters are valid")
}

/// [`default_spec`] with explicit signal parameters.
pub fn sampled_spec(
    class_id: DisturbanceClass,
    seed: u64,
    base_freq_hz: f64,
    sample_rate_hz: f64,
    n_cycles: u32,
) -> Result<DisturbanceSpec, SgadError> {
    if !(base_freq_hz.is_finite() && base_freq_hz > 0.0) || sample_rate_hz < 20.0 * base_freq_hz {
        return Err(SgadError::InvalidSpec(format!(
            "sample rate {sample_rate_hz} must be at least 20x the base frequency {base_freq_hz}"
        )));
    }
    if n_cycles < 4 {
        return Err(SgadError::InvalidSpec(
            "sampling a disturbance window needs at least 4 cycles".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(
        seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ class_id.index() as u64,
    );
    let traits = class_id.traits();
    let magnitude_pu = match traits.amplitude {
        AmplitudeKind::Interruption => rng.gen_range(0.0..0.095),
        AmplitudeKind::Sag => rng.gen_range(0.105..0.895),
        AmplitudeKind::Swell => rng.gen_range(1.105..1.795),
        AmplitudeKind::Flicker => 1.0 + rng.gen_range(0.01..0.045),
        AmplitudeKind::None => {
            if traits.impulse {
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                sign * rng.gen_range(0.8..1.6)
            } else if matches!(class_id, DisturbanceClass::C4 | DisturbanceClass::C12) {
                rng.gen_range(0.2..0.8)
            } else {
                1.0
            }
        }
    };

    let (start_frac, end_frac) = if class_id.is_windowed() {
        let start_cycle = rng.gen_range(1..=n_cycles - 3);
        let duration = rng.gen_range(1..=n_cycles - 1 - start_cycle);
        (
            start_cycle as f64 / n_cycles as f64,
            (start_cycle + duration) as f64 / n_cycles as f64,
        )
    } else if class_id == DisturbanceClass::C0 {
        (0.0, 0.0)
    } else {
        (0.0, 1.0)
    };

    let harmonic_orders = if traits.harmonics {
        vec![(3, 0.10), (5, 0.05)]
    } else {
        Vec::new()
    };

    // Keep the oscillation an exact harmonic of the base frequency so it
    // stays orthogonal to the fundamental over whole cycles, and clear of
    // both the declared harmonics and the Nyquist limit.
    let osc_freq_hz = if traits.oscillatory {
        let nyquist_order = ((sample_rate_hz / (2.0 * base_freq_hz)).floor() as u32).max(10) - 1;
        let hi = nyquist_order.min(24);
        let lo = (hi / 2).clamp(6, hi);
        rng.gen_range(lo..=hi) as f64 * base_freq_hz
    } else {
        0.0
    };
    let flicker_freq_hz = if matches!(traits.amplitude, AmplitudeKind::Flicker) {
        // a few envelope periods per signal, well below the base frequency
        let periods = rng.gen_range(2..=3) as f64;
        periods * base_freq_hz / n_cycles as f64
    } else {
        0.0
    };

    Ok(DisturbanceSpec {
        class_id,
        base_freq_hz,
        sample_rate_hz,
        n_cycles,
        magnitude_pu,
        start_frac,
        end_frac,
        harmonic_orders,
        osc_freq_hz,
        flicker_freq_hz,
        seed,
    })
}

/// Render the waveform described by the spec.
pub fn synthesize(spec: &DisturbanceSpec) -> Result<LabeledSignal, SgadError> {
    spec.validate()?;
    let traits = spec.class_id.traits();
    let n = spec.sample_count();
    let total_duration = n as f64 / spec.sample_rate_hz;
    let window_start = spec.start_frac * total_duration;
    let window_end = spec.end_frac * total_duration;
    let osc_amplitude = match spec.class_id {
        DisturbanceClass::C4 | DisturbanceClass::C12 => spec.magnitude_pu,
        _ => OSC_SECONDARY_AMPLITUDE,
    };
    let osc_tau = ((window_end - window_start) / 4.0).max(1e-4);
    let impulse_center = window_start;

    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / spec.sample_rate_hz;
        let mut carrier = (2.0 * PI * spec.base_freq_hz * t).sin();
        if traits.harmonics {
            for &(order, amp) in &spec.harmonic_orders {
                carrier += amp * (2.0 * PI * order as f64 * spec.base_freq_hz * t).sin();
            }
        }
        let in_window = t >= window_start && t < window_end;
        let mut envelope = 1.0;
        match traits.amplitude {
            AmplitudeKind::Interruption | AmplitudeKind::Sag | AmplitudeKind::Swell => {
                if in_window {
                    envelope = spec.magnitude_pu;
                }
            }
            AmplitudeKind::Flicker => {
                let depth = spec.magnitude_pu - 1.0;
                envelope = 1.0 + depth * (2.0 * PI * spec.flicker_freq_hz * t).sin();
            }
            AmplitudeKind::None => {}
        }
        let mut x = envelope * carrier;
        if traits.oscillatory && in_window {
            let dt = t - window_start;
            x += osc_amplitude * (-dt / osc_tau).exp() * (2.0 * PI * spec.osc_freq_hz * dt).sin();
        }
        if traits.impulse {
            let dt = (t - impulse_center).abs();
            if dt <= IMPULSE_HALF_SUPPORT_S {
                x += spec.magnitude_pu * (-dt / IMPULSE_TAU_S).exp();
            }
        }
        values.push(x);
    }

    let series = TimeSeries::new(values)
        .map_err(|e| SgadError::InvalidSpec(e.to_string()))?
        .with_sample_rate(spec.sample_rate_hz)
        .map_err(|e| SgadError::InvalidSpec(e.to_string()))?
        .with_name(spec.class_id.to_string());
    Ok(LabeledSignal {
        series,
        label: spec.class_id,
        spec: spec.clone(),
    })
}

/// Per-cycle amplitude of harmonic `order` (1 = fundamental), normalized so
/// a pure unit sine reports 1.0.
fn cycle_bin_amplitude(cycle: &[f64], order: usize) -> f64 {
    let n = cycle.len() as f64;
    let mut re = 0.0;
    let mut im = 0.0;
    for (k, &x) in cycle.iter().enumerate() {
        let phase = 2.0 * PI * order as f64 * k as f64 / n;
        re += x * phase.cos();
        im -= x * phase.sin();
    }
    2.0 * (re * re + im * im).sqrt() / n
}

/// Residual of one cycle after removing the fundamental and the listed
/// harmonic orders via per-cycle spectral bins.
fn cycle_residual(cycle: &[f64], orders: &[usize]) -> Vec<f64> {
    let n = cycle.len() as f64;
    let mut residual = cycle.to_vec();
    for &order in orders {
        let mut re = 0.0;
        let mut im = 0.0;
        for (k, &x) in cycle.iter().enumerate() {
            let phase = 2.0 * PI * order as f64 * k as f64 / n;
            re += x * phase.cos();
            im -= x * phase.sin();
        }
        for (k, r) in residual.iter_mut().enumerate() {
            let phase = 2.0 * PI * order as f64 * k as f64 / n;
            *r -= 2.0 / n * (re * phase.cos() - im * phase.sin());
        }
    }
    residual
}

struct CycleView {
    fundamental: Vec<f64>,
    rms_pu: Vec<f64>,
    in_window: Vec<bool>,
    out_window: Vec<bool>,
    residual_peak_pos: Vec<f64>,
    residual_peak_neg: Vec<f64>,
    residual_rms: Vec<f64>,
    residual_wide_support: Vec<usize>,
    harmonic_ratio: Vec<Vec<f64>>,
}

fn analyze_cycles(signal: &LabeledSignal) -> Option<CycleView> {
    let spec = &signal.spec;
    let xs = signal.series.single_channel().ok()?;
    let spc = spec.samples_per_cycle();
    if spc < 8 || xs.len() < spc {
        return None;
    }
    let n_cycles = xs.len() / spc;
    let start_idx = (spec.start_frac * xs.len() as f64).round() as usize;
    let end_idx = (spec.end_frac * xs.len() as f64).round() as usize;
    let declared: Vec<usize> = spec
        .harmonic_orders
        .iter()
        .map(|(o, _)| *o as usize)
        .collect();
    let mut subtract = vec![1usize];
    subtract.extend(&declared);

    let mut view = CycleView {
        fundamental: Vec::new(),
        rms_pu: Vec::new(),
        in_window: Vec::new(),
        out_window: Vec::new(),
        residual_peak_pos: Vec::new(),
        residual_peak_neg: Vec::new(),
        residual_rms: Vec::new(),
        residual_wide_support: Vec::new(),
        harmonic_ratio: Vec::new(),
    };
    for c in 0..n_cycles {
        let cycle = &xs[c * spc..(c + 1) * spc];
        let fund = cycle_bin_amplitude(cycle, 1);
        view.fundamental.push(fund);
        let rms = (cycle.iter().map(|x| x * x).sum::<f64>() / spc as f64).sqrt();
        view.rms_pu.push(rms * std::f64::consts::SQRT_2);
        view.in_window
            .push(c * spc >= start_idx && (c + 1) * spc <= end_idx);
        view.out_window
            .push((c + 1) * spc <= start_idx || c * spc >= end_idx);
        let residual = cycle_residual(cycle, &subtract);
        let peak_pos = residual.iter().copied().fold(0.0f64, f64::max);
        let peak_neg = -residual.iter().copied().fold(0.0f64, f64::min);
        let peak = peak_pos.max(peak_neg);
        view.residual_peak_pos.push(peak_pos);
        view.residual_peak_neg.push(peak_neg);
        view.residual_rms
            .push((residual.iter().map(|r| r * r).sum::<f64>() / spc as f64).sqrt());
        view.residual_wide_support
            .push(residual.iter().filter(|r| r.abs() >= 0.5 * peak).count());
        view.harmonic_ratio.push(
            declared
                .iter()
                .map(|&o| {
                    if fund > 1e-6 {
                        cycle_bin_amplitude(cycle, o) / fund
                    } else {
                        0.0
                    }
                })
                .collect(),
        );
    }
    Some(view)
}

/// Recompute per-cycle amplitudes and spectra and check the signal against
/// its label's defining bands.
pub fn validate(signal: &LabeledSignal) -> bool {
    let Some(view) = analyze_cycles(signal) else {
        return false;
    };
    let traits = signal.label.traits();
    let windowed = signal.label.is_windowed();

    // Cycles fully outside the disturbance window must sit at 1 pu. Flicker
    // classes are judged by their own band below.
    if !matches!(traits.amplitude, AmplitudeKind::Flicker) {
        for c in 0..view.fundamental.len() {
            let clean_cycle = if windowed { view.out_window[c] } else { true };
            if clean_cycle && (view.fundamental[c] - 1.0).abs() > CLEAN_TOL {
                return false;
            }
        }
    }

    match traits.amplitude {
        AmplitudeKind::Interruption | AmplitudeKind::Sag | AmplitudeKind::Swell => {
            let mut hit = false;
            for c in 0..view.fundamental.len() {
                if view.in_window[c] {
                    hit = true;
                    let a = view.fundamental[c];
                    let ok = match traits.amplitude {
                        AmplitudeKind::Interruption => a < 0.1,
                        AmplitudeKind::Sag => (0.1..=0.9).contains(&a),
                        _ => (1.1..=1.8).contains(&a),
                    };
                    if !ok {
                        return false;
                    }
                }
            }
            if !hit {
                return false;
            }
        }
        AmplitudeKind::Flicker => {
            let mut min_a = f64::INFINITY;
            let mut max_a = f64::NEG_INFINITY;
            for &a in &view.fundamental {
                if !(0.95..=1.05).contains(&a) {
                    return false;
                }
                min_a = min_a.min(a);
                max_a = max_a.max(a);
            }
            // a flicker must actually fluctuate, in both directions
            if max_a - min_a < 0.005 || max_a < 1.003 || min_a > 0.997 {
                return false;
            }
        }
        AmplitudeKind::None => {}
    }

    if traits.harmonics {
        // every declared order of meaningful strength must show a spectral
        // line of at least 1% of the fundamental, cycle-averaged
        for (h, &(_, amp)) in signal.spec.harmonic_orders.iter().enumerate() {
            if amp < 0.01 {
                continue;
            }
            let mean_ratio: f64 = view.harmonic_ratio.iter().map(|r| r[h]).sum::<f64>()
                / view.harmonic_ratio.len() as f64;
            if mean_ratio < 0.01 {
                return false;
            }
        }
    }

    if traits.oscillatory {
        let mut seen = false;
        for c in 0..view.fundamental.len() {
            if view.in_window[c]
                && view.residual_peak_pos[c] >= 0.05
                && view.residual_peak_neg[c] >= 0.05
            {
                seen = true;
            }
        }
        if !seen {
            return false;
        }
    }

    if traits.impulse {
        let wide_limit = (0.004 * signal.spec.sample_rate_hz).ceil().max(4.0) as usize;
        let mut seen = false;
        for c in 0..view.fundamental.len() {
            let peak = view.residual_peak_pos[c].max(view.residual_peak_neg[c]);
            let minor = view.residual_peak_pos[c].min(view.residual_peak_neg[c]);
            if peak >= 0.2 && minor <= 0.25 * peak && view.residual_wide_support[c] <= wide_limit {
                seen = true;
            }
        }
        if !seen {
            return false;
        }
    }

    if signal.label == DisturbanceClass::C0 {
        for c in 0..view.fundamental.len() {
            if (view.rms_pu[c] - 1.0).abs() > 0.015 || view.residual_rms[c] > 0.02 {
                return false;
            }
        }
    }

    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compress::{compress, CompressionKind};

    #[test]
    fn default_c0_is_clean_unit_signal() {
        let spec = default_spec(DisturbanceClass::C0, 42);
        assert_eq!(spec.magnitude_pu, 1.0);
        assert_eq!(spec.start_frac, spec.end_frac);
        let sig = synthesize(&spec).unwrap();
        assert_eq!(sig.series.len(), 640);
        // per-cycle RMS of a unit sine
        let xs = sig.series.values();
        for cycle in xs.chunks(64) {
            let rms = (cycle.iter().map(|x| x * x).sum::<f64>() / 64.0).sqrt();
            assert!((rms - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.01);
        }
    }

    #[test]
    fn default_specs_stay_in_class_bands() {
        let sag = default_spec(DisturbanceClass::C2, 7);
        assert!((0.1..=0.9).contains(&sag.magnitude_pu));
        let swell = default_spec(DisturbanceClass::C3, 7);
        assert!((1.1..=1.8).contains(&swell.magnitude_pu));
        let interruption = default_spec(DisturbanceClass::C1, 7);
        assert!(interruption.magnitude_pu < 0.1);
        let flicker = default_spec(DisturbanceClass::C6, 7);
        assert!((0.95..=1.05).contains(&flicker.magnitude_pu));
    }

    #[test]
    fn sag_window_rms_ratio_matches_magnitude() {
        let mut spec = default_spec(DisturbanceClass::C2, 1);
        spec.magnitude_pu = 0.5;
        spec.start_frac = 0.3;
        spec.end_frac = 0.6;
        let sig = synthesize(&spec).unwrap();
        let xs = sig.series.values();
        let rms = |r: std::ops::Range<usize>| {
            let len = r.len();
            let s: f64 = xs[r].iter().map(|x| x * x).sum();
            (s / len as f64).sqrt()
        };
        let inside = rms(192..384); // cycles 3..6 of 10
        let outside = rms(0..192);
        let ratio = inside / outside;
        assert!((0.1..=0.9).contains(&ratio), "ratio {ratio}");
        assert!((ratio - 0.5).abs() < 0.02);
    }

    #[test]
    fn sag_with_harmonics_passes_both_constituent_checks() {
        let spec = default_spec(DisturbanceClass::C8, 3);
        let sig = synthesize(&spec).unwrap();
        assert!(validate(&sig));
        // third-harmonic spectral line above 1% of the fundamental, via the
        // full-signal DFT: bins at n_cycles and 3 * n_cycles.
        let repr = compress(&sig.series, CompressionKind::Dft).unwrap();
        let mag = |k: usize| {
            let re = repr.coefficients[2 * k];
            let im = repr.coefficients[2 * k + 1];
            (re * re + im * im).sqrt()
        };
        let fundamental = mag(10);
        let third = mag(30);
        assert!(
            third > 0.01 * fundamental,
            "third/fund = {}",
            third / fundamental
        );
    }

    #[test]
    fn every_class_validates_and_relabeled_signal_fails() {
        for class in DisturbanceClass::ALL {
            for seed in [1u64, 2, 3] {
                let sig = synthesize(&default_spec(class, seed)).unwrap();
                assert!(
                    validate(&sig),
                    "class {class} seed {seed} failed validation"
                );
            }
        }
        let mut c0 = synthesize(&default_spec(DisturbanceClass::C0, 9)).unwrap();
        c0.label = DisturbanceClass::C2;
        assert!(!validate(&c0));
    }

    #[test]
    fn synthesis_is_bit_deterministic() {
        let spec = default_spec(DisturbanceClass::C13, 77);
        let a = synthesize(&spec).unwrap();
        let b = synthesize(&spec).unwrap();
        assert_eq!(a.series.values(), b.series.values());
        assert_eq!(default_spec(DisturbanceClass::C13, 77), spec);
    }

    #[test]
    fn out_of_band_magnitude_rejected() {
        let mut spec = default_spec(DisturbanceClass::C2, 5);
        spec.magnitude_pu = 0.95;
        assert!(synthesize(&spec).is_err());
        let mut swell = default_spec(DisturbanceClass::C3, 5);
        swell.magnitude_pu = 1.05;
        assert!(synthesize(&swell).is_err());
    }

    #[test]
    fn class_names_round_trip() {
        for class in DisturbanceClass::ALL {
            let parsed: DisturbanceClass = class.to_string().parse().unwrap();
            assert_eq!(parsed, class);
        }
        assert!("C17".parse::<DisturbanceClass>().is_err());
        assert!("x".parse::<DisturbanceClass>().is_err());
    }
}

//! Synthetic epoch and transition-trace generation.
//!
//! Each context class has a signal signature (satellite count range, C/N0
//! range, azimuth visibility mask, elevation range) from which epochs are
//! drawn. Traces evolve a persistent constellation with small per-epoch
//! drift and occasional satellite appearance/disappearance, so consecutive
//! windows are correlated but not identical. Values are quantized to whole
//! degrees/dB-Hz on emission, which is exactly what a GSV sentence can
//! carry, so emitted NMEA parses back to identical observations.
//!
//! The signature parameters are generator defaults, not measured values.

use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::class::ContextClass;
use crate::dataset::LabeledRecording;
use crate::nmea::{checksum, format_time_of_day, Constellation, Epoch, SatelliteObservation};

/// Default trace start: 10:00:00 UTC.
pub const DEFAULT_START_TIME: f64 = 36_000.0;

/// Default epoch rate.
pub const DEFAULT_RATE_HZ: f64 = 5.0;

/// Azimuth visibility mask of a class signature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VisibilityMask {
    /// Whole sky visible.
    FullSky,
    /// One half of the sky blocked below this elevation.
    OneSideBlocked { open_above: f64 },
    /// Strong satellites only above `strong_above`; a weak sparse remainder
    /// sits low on both sides with its own C/N0 range.
    HighElevationOnly { strong_above: f64, weak_cn0: (f64, f64), weak_fraction: f64 },
    /// Two low-elevation clusters on opposite sides.
    LowElevationBothSides { half_spread: f64 },
    /// All signal from one azimuth sector (the window side).
    WindowSector { width: f64 },
    /// Almost nothing tracked.
    NearEmpty,
}

/// Per-class generator parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassSignature {
    pub sat_count: (usize, usize),
    pub cn0: (f64, f64),
    pub elevation: (f64, f64),
    pub mask: VisibilityMask,
}

/// Default signature for a class.
pub fn signature(class: ContextClass) -> ClassSignature {
    match class {
        ContextClass::OpenSky => ClassSignature {
            sat_count: (15, 25),
            cn0: (40.0, 52.0),
            elevation: (10.0, 85.0),
            mask: VisibilityMask::FullSky,
        },
        ContextClass::TreeLinedAvenue => ClassSignature {
            sat_count: (12, 20),
            cn0: (22.0, 36.0),
            elevation: (10.0, 85.0),
            mask: VisibilityMask::FullSky,
        },
        ContextClass::SemiOutdoor => ClassSignature {
            sat_count: (8, 15),
            cn0: (32.0, 48.0),
            elevation: (5.0, 85.0),
            mask: VisibilityMask::OneSideBlocked { open_above: 45.0 },
        },
        ContextClass::UrbanCanyon => ClassSignature {
            sat_count: (6, 12),
            cn0: (35.0, 48.0),
            elevation: (5.0, 85.0),
            mask: VisibilityMask::HighElevationOnly {
                strong_above: 60.0,
                weak_cn0: (15.0, 30.0),
                weak_fraction: 0.3,
            },
        },
        ContextClass::ViaductDown => ClassSignature {
            sat_count: (4, 8),
            cn0: (18.0, 35.0),
            elevation: (5.0, 30.0),
            // each side opening runs the length of the viaduct, so the
            // visible low-elevation band is wide; narrow clusters would let
            // every satellite fit one half-sky and blow up the ratio
            mask: VisibilityMask::LowElevationBothSides { half_spread: 80.0 },
        },
        ContextClass::ShallowIndoor => ClassSignature {
            sat_count: (3, 6),
            cn0: (12.0, 30.0),
            elevation: (10.0, 60.0),
            mask: VisibilityMask::WindowSector { width: 120.0 },
        },
        ContextClass::DeepIndoor => ClassSignature {
            sat_count: (0, 2),
            cn0: (8.0, 20.0),
            elevation: (5.0, 70.0),
            mask: VisibilityMask::NearEmpty,
        },
    }
}

/// One scripted segment: hold `class` for `seconds`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptSegment {
    pub class: ContextClass,
    pub seconds: f64,
}

/// A transition scenario: ordered segments generated at `rate_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioScript {
    pub segments: Vec<ScriptSegment>,
    pub rate_hz: f64,
    pub seed: u64,
}

impl ScenarioScript {
    pub fn new(segments: Vec<(ContextClass, f64)>, rate_hz: f64, seed: u64) -> Self {
        ScenarioScript {
            segments: segments
                .into_iter()
                .map(|(class, seconds)| ScriptSegment { class, seconds })
                .collect(),
            rate_hz,
            seed,
        }
    }

    /// Reads the script file format: a JSON list of `{class, seconds}`.
    pub fn read_json<R: BufRead>(reader: R, rate_hz: f64, seed: u64) -> io::Result<Self> {
        let segments: Vec<ScriptSegment> = serde_json::from_reader(reader)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        Ok(ScenarioScript { segments, rate_hz, seed })
    }

    pub fn total_epochs(&self) -> usize {
        self.segments.iter().map(|s| (s.seconds * self.rate_hz).round() as usize).sum()
    }
}

/// A generated labeled epoch sequence.
#[derive(Debug, Clone)]
pub struct Trace {
    pub epochs: Vec<Epoch>,
    pub labels: Vec<ContextClass>,
    pub rate_hz: f64,
}

/// The four scripted transition scenarios used for evaluation; segments of
/// `segment_seconds` each, 10 transitions in total.
pub fn standard_transition_scripts(segment_seconds: f64, seed: u64) -> Vec<ScenarioScript> {
    use ContextClass::*;
    let scenarios: [&[ContextClass]; 4] = [
        &[OpenSky, SemiOutdoor, ShallowIndoor, DeepIndoor],
        &[DeepIndoor, ShallowIndoor, SemiOutdoor, OpenSky],
        &[OpenSky, ViaductDown, OpenSky],
        &[OpenSky, TreeLinedAvenue, OpenSky],
    ];
    scenarios
        .iter()
        .enumerate()
        .map(|(i, classes)| {
            ScenarioScript::new(
                classes.iter().map(|&c| (c, segment_seconds)).collect(),
                DEFAULT_RATE_HZ,
                mix_seed(seed, 0xE0, i as u64),
            )
        })
        .collect()
}

/// splitmix64-style seed derivation so per-recording streams are independent.
fn mix_seed(base: u64, tag: u64, index: u64) -> u64 {
    let mut x = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn gaussian(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    // Box-Muller; one draw per call is plenty here
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    std * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Signed smallest angle from `to` to `from`, in (-180, 180].
fn wrap_angle(delta: f64) -> f64 {
    let d = delta.rem_euclid(360.0);
    if d > 180.0 { d - 360.0 } else { d }
}

fn clamp_to_sector(az: f64, center: f64, half_width: f64) -> f64 {
    let delta = wrap_angle(az - center).clamp(-half_width, half_width);
    (center + delta).rem_euclid(360.0)
}

#[derive(Debug, Clone, Copy)]
struct SatState {
    constellation: Constellation,
    prn: u16,
    azimuth: f64,
    elevation: f64,
    cn0: f64,
    /// Strong/weak flag for the high-elevation mask and side flag for the
    /// one-side-blocked mask (1 = weak / blocked side).
    group: u8,
}

/// Evolving constellation for one scripted segment.
struct SegmentState {
    sig: ClassSignature,
    /// Mask orientation: blocked-half center, cluster axis, or sector center.
    orientation: f64,
    sats: Vec<SatState>,
    next_prn: [u16; 4],
    next_constellation: usize,
}

const CONSTELLATION_CYCLE: [Constellation; 4] = [
    Constellation::Gps,
    Constellation::Glonass,
    Constellation::Galileo,
    Constellation::BeiDou,
];

impl SegmentState {
    fn new(class: ContextClass, rng: &mut ChaCha8Rng) -> Self {
        let sig = signature(class);
        let mut state = SegmentState {
            sig,
            orientation: rng.gen_range(0.0..360.0),
            sats: Vec::new(),
            next_prn: [1, 65, 1, 1],
            next_constellation: 0,
        };
        let count = rng.gen_range(sig.sat_count.0..=sig.sat_count.1);
        for _ in 0..count {
            state.spawn(rng);
        }
        state
    }

    fn spawn(&mut self, rng: &mut ChaCha8Rng) {
        let slot = self.next_constellation % CONSTELLATION_CYCLE.len();
        self.next_constellation += 1;
        let constellation = CONSTELLATION_CYCLE[slot];
        let prn = self.next_prn[slot];
        self.next_prn[slot] += 1;

        let sig = &self.sig;
        let (el_lo, el_hi) = sig.elevation;
        let mut cn0 = rng.gen_range(sig.cn0.0..=sig.cn0.1);
        let mut elevation = rng.gen_range(el_lo..=el_hi);
        let mut group = 0u8;
        let azimuth = match sig.mask {
            VisibilityMask::FullSky | VisibilityMask::NearEmpty => rng.gen_range(0.0..360.0),
            VisibilityMask::OneSideBlocked { open_above } => {
                // blocked half is centered on the orientation and keeps only
                // high elevations, so it carries less of the signal mass
                if rng.gen_bool(0.35) {
                    group = 1;
                    elevation = rng.gen_range(open_above..=el_hi.max(open_above));
                    clamp_to_sector(rng.gen_range(0.0..360.0), self.orientation, 90.0)
                } else {
                    clamp_to_sector(rng.gen_range(0.0..360.0), self.orientation + 180.0, 90.0)
                }
            }
            VisibilityMask::HighElevationOnly { strong_above, weak_cn0, weak_fraction } => {
                if rng.gen_bool(weak_fraction) {
                    group = 1;
                    cn0 = rng.gen_range(weak_cn0.0..=weak_cn0.1);
                    elevation = rng.gen_range(el_lo..=40.0);
                } else {
                    elevation = rng.gen_range(strong_above..=el_hi);
                }
                rng.gen_range(0.0..360.0)
            }
            VisibilityMask::LowElevationBothSides { half_spread } => {
                // signal reaches the antenna through both side openings, so
                // satellites pair up along diametric axes and no half-sky
                // captures much more C/N0 mass than the other; a pair only
                // splits across every bisector when it is exactly antipodal
                let unpaired = self.sats.iter().find(|s| {
                    let antipode = (s.azimuth + 180.0).rem_euclid(360.0);
                    !self.sats.iter().any(|o| (o.azimuth - antipode).abs() < 1e-9)
                });
                match unpaired {
                    Some(s) => (s.azimuth + 180.0).rem_euclid(360.0),
                    None => (self.orientation + rng.gen_range(-half_spread..=half_spread))
                        .rem_euclid(360.0),
                }
            }
            VisibilityMask::WindowSector { width } => {
                let half = width / 2.0;
                clamp_to_sector(
                    self.orientation + rng.gen_range(-half..=half),
                    self.orientation,
                    half,
                )
            }
        };
        self.sats.push(SatState { constellation, prn, azimuth, elevation, cn0, group });
    }

    /// One epoch of drift: small azimuth/elevation/C/N0 movement projected
    /// back into the mask region, plus rare appearance/disappearance.
    fn step(&mut self, rng: &mut ChaCha8Rng) {
        let sig = self.sig;
        let orientation = self.orientation;
        let drift_azimuth = !matches!(sig.mask, VisibilityMask::LowElevationBothSides { .. });
        for sat in &mut self.sats {
            if drift_azimuth {
                sat.azimuth = (sat.azimuth + gaussian(rng, 0.8)).rem_euclid(360.0);
            }
            sat.elevation += gaussian(rng, 0.4);
            sat.cn0 += gaussian(rng, 0.5);

            let (el_lo, el_hi) = sig.elevation;
            let (cn0_lo, cn0_hi) = sig.cn0;
            match sig.mask {
                VisibilityMask::FullSky | VisibilityMask::NearEmpty => {
                    sat.elevation = sat.elevation.clamp(el_lo, el_hi);
                    sat.cn0 = sat.cn0.clamp(cn0_lo, cn0_hi);
                }
                VisibilityMask::OneSideBlocked { open_above } => {
                    if sat.group == 1 {
                        sat.azimuth = clamp_to_sector(sat.azimuth, orientation, 90.0);
                        sat.elevation = sat.elevation.clamp(open_above, el_hi.max(open_above));
                    } else {
                        sat.azimuth = clamp_to_sector(sat.azimuth, orientation + 180.0, 90.0);
                        sat.elevation = sat.elevation.clamp(el_lo, el_hi);
                    }
                    sat.cn0 = sat.cn0.clamp(cn0_lo, cn0_hi);
                }
                VisibilityMask::HighElevationOnly { strong_above, weak_cn0, .. } => {
                    if sat.group == 1 {
                        sat.elevation = sat.elevation.clamp(el_lo, 40.0);
                        sat.cn0 = sat.cn0.clamp(weak_cn0.0, weak_cn0.1);
                    } else {
                        sat.elevation = sat.elevation.clamp(strong_above, el_hi);
                        sat.cn0 = sat.cn0.clamp(cn0_lo, cn0_hi);
                    }
                }
                VisibilityMask::LowElevationBothSides { .. } => {
                    // azimuths hold still so the antipodal pairing survives
                    // the whole segment; elevation and C/N0 still move
                    sat.elevation = sat.elevation.clamp(el_lo, el_hi);
                    sat.cn0 = sat.cn0.clamp(cn0_lo, cn0_hi);
                }
                VisibilityMask::WindowSector { width } => {
                    sat.azimuth = clamp_to_sector(sat.azimuth, orientation, width / 2.0);
                    sat.elevation = sat.elevation.clamp(el_lo, el_hi);
                    sat.cn0 = sat.cn0.clamp(cn0_lo, cn0_hi);
                }
            }
        }
        if self.sats.len() > sig.sat_count.0 && rng.gen_bool(0.03) {
            let victim = rng.gen_range(0..self.sats.len());
            self.sats.remove(victim);
        }
        if self.sats.len() < sig.sat_count.1 && rng.gen_bool(0.03) {
            self.spawn(rng);
        }
    }

    /// Quantizes the current state to whole degrees/dB-Hz, the resolution a
    /// GSV sentence carries.
    fn emit(&self, time_of_day: f64) -> Epoch {
        let observations = self
            .sats
            .iter()
            .map(|s| SatelliteObservation {
                constellation: s.constellation,
                prn: s.prn,
                elevation: Some(s.elevation.round().clamp(0.0, 90.0)),
                azimuth: Some(s.azimuth.round().rem_euclid(360.0)),
                cn0: Some(s.cn0.round().clamp(0.0, 99.0)),
            })
            .collect();
        Epoch { time_of_day: Some(time_of_day), partial: false, observations }
    }
}

/// Draws one independent epoch of the class (no timestamp).
pub fn sample_epoch(class: ContextClass, rng: &mut ChaCha8Rng) -> Epoch {
    let state = SegmentState::new(class, rng);
    let mut epoch = state.emit(0.0);
    epoch.time_of_day = None;
    epoch
}

/// Generates a labeled epoch sequence from a script, starting at
/// [`DEFAULT_START_TIME`].
pub fn generate_trace(script: &ScenarioScript) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    let dt = 1.0 / script.rate_hz;
    let mut epochs = Vec::with_capacity(script.total_epochs());
    let mut labels = Vec::with_capacity(script.total_epochs());
    let mut t = DEFAULT_START_TIME;
    for segment in &script.segments {
        let count = (segment.seconds * script.rate_hz).round() as usize;
        let mut state = SegmentState::new(segment.class, &mut rng);
        for _ in 0..count {
            epochs.push(state.emit(t));
            labels.push(segment.class);
            state.step(&mut rng);
            t += dt;
        }
    }
    Trace { epochs, labels, rate_hz: script.rate_hz }
}

/// Generates the isolated dataset: `sets_per_class` single-class recordings
/// of `epochs_per_set` epochs each, with independent per-recording streams.
pub fn generate_isolated_dataset(
    sets_per_class: usize,
    epochs_per_set: usize,
    seed: u64,
) -> Vec<LabeledRecording> {
    let mut recordings = Vec::with_capacity(sets_per_class * ContextClass::ALL.len());
    for class in ContextClass::ALL {
        for set in 0..sets_per_class {
            let script = ScenarioScript::new(
                vec![(class, epochs_per_set as f64 / DEFAULT_RATE_HZ)],
                DEFAULT_RATE_HZ,
                mix_seed(seed, class.index() as u64, set as u64),
            );
            let trace = generate_trace(&script);
            recordings.push(LabeledRecording {
                class,
                set_id: format!("{}_{set:02}", class.dir_name()),
                epochs: trace.epochs,
            });
        }
    }
    recordings
}

fn talker_for(constellation: Constellation) -> &'static str {
    match constellation {
        Constellation::Gps => "GP",
        Constellation::Glonass => "GL",
        Constellation::Galileo => "GA",
        Constellation::BeiDou => "GB",
        Constellation::Qzss => "GQ",
    }
}

fn push_sentence<W: Write>(w: &mut W, payload: &str) -> io::Result<()> {
    writeln!(w, "${payload}*{:02X}", checksum(payload.as_bytes()))
}

/// Emits an epoch stream as checksum-valid NMEA text: one RMC delimiter
/// per epoch followed by per-constellation GSV sentences (4 satellites per
/// message). Parses back to the identical observation multisets.
pub fn write_nmea<W: Write>(w: &mut W, epochs: &[Epoch]) -> io::Result<()> {
    for (i, epoch) in epochs.iter().enumerate() {
        let t = epoch.time_of_day.unwrap_or(DEFAULT_START_TIME + i as f64 * 0.2);
        push_sentence(w, &format!("GNRMC,{},A,,,,,,,010124,,,A", format_time_of_day(t)))?;

        for constellation in [
            Constellation::Gps,
            Constellation::Glonass,
            Constellation::Galileo,
            Constellation::BeiDou,
            Constellation::Qzss,
        ] {
            let sats: Vec<&SatelliteObservation> = epoch
                .observations
                .iter()
                .filter(|o| o.constellation == constellation)
                .collect();
            if sats.is_empty() {
                continue;
            }
            let messages = sats.len().div_ceil(4);
            for (index, chunk) in sats.chunks(4).enumerate() {
                let mut payload = format!(
                    "{}GSV,{},{},{:02}",
                    talker_for(constellation),
                    messages,
                    index + 1,
                    sats.len()
                );
                for obs in chunk {
                    let field = |v: Option<f64>, width: usize| match v {
                        Some(v) => format!("{:0width$}", v.round() as i64, width = width),
                        None => String::new(),
                    };
                    payload.push_str(&format!(
                        ",{:02},{},{},{}",
                        obs.prn,
                        field(obs.elevation, 2),
                        field(obs.azimuth, 3),
                        field(obs.cn0, 2),
                    ));
                }
                push_sentence(w, &payload)?;
            }
        }
    }
    Ok(())
}

//! NMEA-0183 ingestion: checksum validation, sentence splitting, GSV
//! satellite extraction, and epoch assembly.
//!
//! Parsing is total: arbitrary byte streams produce a (possibly empty)
//! epoch stream without aborting. Lines that are not checksum-valid
//! sentences from a recognized talker are skipped with a reason code, and
//! GSV sentences that fail structural validation are counted but do not
//! stop ingestion.

use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Two-character talker prefix of a sentence address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Talker {
    Gp,
    Gl,
    Ga,
    Gb,
    Bd,
    Gq,
    Gn,
}

impl Talker {
    pub fn from_prefix(prefix: &str) -> Option<Self> {
        match prefix {
            "GP" => Some(Talker::Gp),
            "GL" => Some(Talker::Gl),
            "GA" => Some(Talker::Ga),
            "GB" => Some(Talker::Gb),
            "BD" => Some(Talker::Bd),
            "GQ" => Some(Talker::Gq),
            "GN" => Some(Talker::Gn),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Talker::Gp => "GP",
            Talker::Gl => "GL",
            Talker::Ga => "GA",
            Talker::Gb => "GB",
            Talker::Bd => "BD",
            Talker::Gq => "GQ",
            Talker::Gn => "GN",
        }
    }

    /// Constellation whose satellites this talker reports.
    ///
    /// GN is the combined-GNSS talker; receivers emit per-constellation GSV,
    /// so a GN GSV is mapped to GPS rather than rejected.
    pub fn constellation(self) -> Constellation {
        match self {
            Talker::Gp | Talker::Gn => Constellation::Gps,
            Talker::Gl => Constellation::Glonass,
            Talker::Ga => Constellation::Galileo,
            Talker::Gb | Talker::Bd => Constellation::BeiDou,
            Talker::Gq => Constellation::Qzss,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Constellation {
    #[serde(rename = "GPS")]
    Gps,
    #[serde(rename = "GLONASS")]
    Glonass,
    #[serde(rename = "Galileo")]
    Galileo,
    #[serde(rename = "BeiDou")]
    BeiDou,
    #[serde(rename = "QZSS")]
    Qzss,
}

impl Constellation {
    pub fn as_str(self) -> &'static str {
        match self {
            Constellation::Gps => "GPS",
            Constellation::Glonass => "GLONASS",
            Constellation::Galileo => "Galileo",
            Constellation::BeiDou => "BeiDou",
            Constellation::Qzss => "QZSS",
        }
    }
}

impl fmt::Display for Constellation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A checksum-valid sentence split into its comma-separated fields.
///
/// `fields` excludes the address; empty fields are preserved as empty
/// strings (meaning "absent").
#[derive(Debug, Clone, PartialEq)]
pub struct RawSentence {
    pub talker: Talker,
    pub type_code: String,
    pub fields: Vec<String>,
    pub checksum_ok: bool,
}

/// Why a line was skipped instead of parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    BadChecksum,
    UnknownTalker,
    Malformed,
}

#[derive(Debug, Error)]
pub enum NmeaError {
    #[error("GSV field count {count} invalid (want 3 header fields plus 4 per satellite, optional signal id): {context}")]
    GsvFieldCount { count: usize, context: String },
    #[error("non-numeric PRN {value:?} in GSV sentence: {context}")]
    BadPrn { value: String, context: String },
}

/// One satellite's view data within an epoch.
///
/// `cn0` absent means the satellite was reported in view but not tracked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatelliteObservation {
    #[serde(rename = "const")]
    pub constellation: Constellation,
    pub prn: u16,
    #[serde(rename = "el")]
    pub elevation: Option<f64>,
    #[serde(rename = "az")]
    pub azimuth: Option<f64>,
    pub cn0: Option<f64>,
}

/// All observations sharing one receiver output cycle (0.2 s at 5 Hz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    /// UTC time of day in seconds, from the opening delimiter sentence.
    #[serde(rename = "t")]
    pub time_of_day: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub partial: bool,
    #[serde(rename = "obs")]
    pub observations: Vec<SatelliteObservation>,
}

impl Epoch {
    pub fn empty(time_of_day: Option<f64>) -> Self {
        Epoch { time_of_day, partial: false, observations: Vec::new() }
    }

    /// Satellites that contribute to features: C/N0 present.
    pub fn available(&self) -> impl Iterator<Item = &SatelliteObservation> {
        self.observations.iter().filter(|o| o.cn0.is_some())
    }

    /// Number of available (tracked) satellites.
    pub fn available_count(&self) -> usize {
        self.available().count()
    }
}

/// Result of parsing one GSV sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct GsvData {
    pub message_count: u32,
    pub message_index: u32,
    pub sats_in_view: u32,
    pub observations: Vec<SatelliteObservation>,
    /// NMEA >= 4.10 trailing signal id, when present.
    pub signal_id: Option<u8>,
}

/// XOR of the payload bytes between `$` and `*`.
pub fn checksum(payload: &[u8]) -> u8 {
    payload.iter().fold(0, |acc, b| acc ^ b)
}

/// True iff `line` is `$<payload>*<hex><hex>` and the checksum matches
/// (hex digits case-insensitive). Trailing CR/LF is ignored.
pub fn validate_checksum(line: &str) -> bool {
    let line = line.trim_end_matches(['\r', '\n']);
    let Some(rest) = line.strip_prefix('$') else {
        return false;
    };
    let Some(star) = rest.rfind('*') else {
        return false;
    };
    let (payload, hex) = rest.split_at(star);
    let hex = &hex[1..];
    if hex.len() != 2 {
        return false;
    }
    let Ok(expect) = u8::from_str_radix(hex, 16) else {
        return false;
    };
    checksum(payload.as_bytes()) == expect
}

/// Splits a checksum-valid line from a recognized talker into a
/// [`RawSentence`]; everything else becomes a [`SkipReason`].
pub fn parse_sentence(line: &str) -> Result<RawSentence, SkipReason> {
    let line = line.trim_end_matches(['\r', '\n']);
    if !line.starts_with('$') || !line.contains('*') {
        return Err(SkipReason::Malformed);
    }
    if !validate_checksum(line) {
        return Err(SkipReason::BadChecksum);
    }
    let payload = &line[1..line.rfind('*').expect("checked")];
    let mut parts = payload.split(',');
    let address = parts.next().unwrap_or("");
    if address.len() < 2 || !address.is_char_boundary(2) {
        return Err(SkipReason::Malformed);
    }
    let Some(talker) = Talker::from_prefix(&address[..2]) else {
        return Err(SkipReason::UnknownTalker);
    };
    let type_code = &address[2..];
    if type_code.len() != 3 || !type_code.bytes().all(|b| b.is_ascii_alphanumeric()) {
        return Err(SkipReason::Malformed);
    }
    Ok(RawSentence {
        talker,
        type_code: type_code.to_string(),
        fields: parts.map(str::to_string).collect(),
        checksum_ok: true,
    })
}

fn parse_field_f64(s: &str) -> Option<f64> {
    if s.is_empty() {
        None
    } else {
        s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
    }
}

/// Extracts the per-satellite groups of a GSV sentence.
///
/// Field layout: `total_msgs,msg_index,sats_in_view` then 4 fields per
/// satellite (`prn,elevation,azimuth,snr`), plus an optional trailing
/// signal-id field. Empty elevation/azimuth/snr map to absent; elevation is
/// clamped to [0, 90], azimuth normalized to [0, 360), C/N0 clamped to
/// [0, 99].
pub fn parse_gsv(sentence: &RawSentence) -> Result<GsvData, NmeaError> {
    debug_assert_eq!(sentence.type_code, "GSV");
    let fields = &sentence.fields;
    let context = || format!("{}GSV,{}", sentence.talker.as_str(), fields.join(","));
    if fields.len() < 3 {
        return Err(NmeaError::GsvFieldCount { count: fields.len(), context: context() });
    }
    let group_fields = fields.len() - 3;
    let (group_count, signal_id) = match group_fields % 4 {
        0 => (group_fields / 4, None),
        1 => {
            let sig = fields.last().and_then(|s| u8::from_str_radix(s, 16).ok());
            (group_fields / 4, sig)
        }
        _ => {
            return Err(NmeaError::GsvFieldCount { count: fields.len(), context: context() });
        }
    };

    let header_u32 = |i: usize| fields[i].trim().parse::<u32>().unwrap_or(0);
    let constellation = sentence.talker.constellation();
    let mut observations = Vec::with_capacity(group_count);
    for g in 0..group_count {
        let base = 3 + g * 4;
        let prn_text = fields[base].trim();
        let Ok(prn) = prn_text.parse::<u16>() else {
            return Err(NmeaError::BadPrn { value: prn_text.to_string(), context: context() });
        };
        observations.push(SatelliteObservation {
            constellation,
            prn,
            elevation: parse_field_f64(&fields[base + 1]).map(|e| e.clamp(0.0, 90.0)),
            azimuth: parse_field_f64(&fields[base + 2]).map(|a| a.rem_euclid(360.0)),
            cn0: parse_field_f64(&fields[base + 3]).map(|c| c.clamp(0.0, 99.0)),
        });
    }
    Ok(GsvData {
        message_count: header_u32(0),
        message_index: header_u32(1),
        sats_in_view: header_u32(2),
        observations,
        signal_id,
    })
}

/// Parses an `hhmmss.ss` time-of-day field into seconds since midnight.
pub fn parse_time_of_day(field: &str) -> Option<f64> {
    let field = field.trim();
    if field.len() < 6 || !field.is_char_boundary(2) || !field.is_char_boundary(4) {
        return None;
    }
    let hours: f64 = field[..2].parse().ok()?;
    let minutes: f64 = field[2..4].parse().ok()?;
    let seconds: f64 = field[4..].parse().ok()?;
    if !(0.0..24.0).contains(&hours) || !(0.0..60.0).contains(&minutes) || !(0.0..61.0).contains(&seconds) {
        return None;
    }
    Some(hours * 3600.0 + minutes * 60.0 + seconds)
}

/// Formats seconds since midnight as an `hhmmss.ss` field.
pub fn format_time_of_day(seconds: f64) -> String {
    let s = seconds.rem_euclid(86_400.0);
    let hours = (s / 3600.0).floor();
    let minutes = ((s - hours * 3600.0) / 60.0).floor();
    let secs = s - hours * 3600.0 - minutes * 60.0;
    format!("{:02}{:02}{:05.2}", hours as u32, minutes as u32, secs)
}

/// Ingestion counters, reported after a parse run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseStats {
    pub lines: u64,
    pub sentences: u64,
    pub skipped_checksum: u64,
    pub skipped_talker: u64,
    pub skipped_malformed: u64,
    pub gsv_errors: u64,
    pub epochs: u64,
}

/// Streaming epoch assembler.
///
/// An epoch closes when a new RMC sentence arrives (GGA acts as the
/// delimiter only until the first RMC is seen in the stream); all GSV
/// observations between consecutive delimiters belong to one epoch stamped
/// with the opening delimiter's time. Duplicate (constellation, PRN) pairs
/// within an epoch keep the observation with the highest C/N0, so
/// multi-band receivers contribute one record per satellite.
#[derive(Debug, Default)]
pub struct EpochAssembler {
    rmc_seen: bool,
    opened: bool,
    time_of_day: Option<f64>,
    observations: Vec<SatelliteObservation>,
    pub stats: ParseStats,
}

impl EpochAssembler {
    pub fn new() -> Self {
        Self::default()
    }

    fn merge_observation(&mut self, obs: SatelliteObservation) {
        if let Some(existing) = self
            .observations
            .iter_mut()
            .find(|o| o.constellation == obs.constellation && o.prn == obs.prn)
        {
            // max C/N0 across signals; absent loses to present
            if obs.cn0.unwrap_or(f64::NEG_INFINITY) > existing.cn0.unwrap_or(f64::NEG_INFINITY) {
                *existing = obs;
            }
        } else {
            self.observations.push(obs);
        }
    }

    fn close_epoch(&mut self, next_time: Option<f64>) -> Option<Epoch> {
        let closed = if self.opened || !self.observations.is_empty() {
            self.stats.epochs += 1;
            Some(Epoch {
                time_of_day: self.time_of_day,
                partial: !self.opened,
                observations: std::mem::take(&mut self.observations),
            })
        } else {
            None
        };
        self.opened = true;
        self.time_of_day = next_time;
        closed
    }

    /// Feeds one text line; returns the epoch it closed, if any.
    pub fn push_line(&mut self, line: &str) -> Option<Epoch> {
        self.stats.lines += 1;
        let sentence = match parse_sentence(line) {
            Ok(s) => s,
            Err(SkipReason::BadChecksum) => {
                self.stats.skipped_checksum += 1;
                return None;
            }
            Err(SkipReason::UnknownTalker) => {
                self.stats.skipped_talker += 1;
                return None;
            }
            Err(SkipReason::Malformed) => {
                self.stats.skipped_malformed += 1;
                return None;
            }
        };
        self.stats.sentences += 1;
        self.push_sentence(&sentence)
    }

    /// Feeds an already-parsed sentence; returns the epoch it closed, if any.
    pub fn push_sentence(&mut self, sentence: &RawSentence) -> Option<Epoch> {
        match sentence.type_code.as_str() {
            "RMC" => {
                let t = sentence.fields.first().and_then(|f| parse_time_of_day(f));
                self.rmc_seen = true;
                self.close_epoch(t)
            }
            "GGA" if !self.rmc_seen => {
                let t = sentence.fields.first().and_then(|f| parse_time_of_day(f));
                self.close_epoch(t)
            }
            "GSV" => {
                match parse_gsv(sentence) {
                    Ok(gsv) => {
                        for obs in gsv.observations {
                            self.merge_observation(obs);
                        }
                    }
                    Err(_) => self.stats.gsv_errors += 1,
                }
                None
            }
            _ => None, // other sentence types are not used by the pipeline
        }
    }

    /// Flushes the epoch in progress at end of stream, flagged partial.
    pub fn finish(mut self) -> (Option<Epoch>, ParseStats) {
        let epoch = if self.opened || !self.observations.is_empty() {
            self.stats.epochs += 1;
            Some(Epoch {
                time_of_day: self.time_of_day,
                partial: true,
                observations: std::mem::take(&mut self.observations),
            })
        } else {
            None
        };
        (epoch, self.stats)
    }
}

/// Parses a whole reader into epochs. Invalid UTF-8 is replaced
/// lossily; valid sentences are ASCII, so they are unaffected.
pub fn parse_epochs<R: BufRead>(reader: R) -> io::Result<(Vec<Epoch>, ParseStats)> {
    let mut assembler = EpochAssembler::new();
    let mut epochs = Vec::new();
    for line in reader.split(b'\n') {
        let bytes = line?;
        let text = String::from_utf8_lossy(&bytes);
        if let Some(epoch) = assembler.push_line(&text) {
            epochs.push(epoch);
        }
    }
    let (last, stats) = assembler.finish();
    epochs.extend(last);
    Ok((epochs, stats))
}

/// Median gap between consecutive epoch timestamps, in seconds.
pub fn median_epoch_gap(epochs: &[Epoch]) -> Option<f64> {
    let times: Vec<f64> = epochs.iter().filter_map(|e| e.time_of_day).collect();
    if times.len() < 2 {
        return None;
    }
    let mut gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(|a, b| a.total_cmp(b));
    let n = gaps.len();
    Some(if n % 2 == 1 { gaps[n / 2] } else { 0.5 * (gaps[n / 2 - 1] + gaps[n / 2]) })
}

/// JSON-lines epoch record; `label` is present only on labeled traces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    #[serde(flatten)]
    pub epoch: Epoch,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<crate::class::ContextClass>,
}

/// Writes one epoch object per line: `{"t":..,"obs":[{"const":..,"prn":..,
/// "el":..,"az":..,"cn0":..},..]}` plus `label` when given.
pub fn write_epoch_jsonl<W: Write>(
    w: &mut W,
    epochs: &[Epoch],
    labels: Option<&[crate::class::ContextClass]>,
) -> io::Result<()> {
    for (i, epoch) in epochs.iter().enumerate() {
        let record = EpochRecord {
            epoch: epoch.clone(),
            label: labels.map(|l| l[i]),
        };
        serde_json::to_writer(&mut *w, &record)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_epoch_jsonl<R: BufRead>(reader: R) -> io::Result<Vec<EpochRecord>> {
    let mut records = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EpochRecord = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_checksum(payload: &str) -> String {
        format!("${}*{:02X}", payload, checksum(payload.as_bytes()))
    }

    #[test]
    fn checksum_examples() {
        assert!(validate_checksum("$A*41"));
        assert!(!validate_checksum("$A*42"));
        assert!(validate_checksum("$AB*03"));
        assert!(validate_checksum("$ab*03")); // payload bytes as-is
        assert!(validate_checksum("$A*41\r\n"));
        assert!(!validate_checksum("A*41"));
        assert!(!validate_checksum("$A41"));
        assert!(!validate_checksum("$A*4"));
        assert!(!validate_checksum("$A*411"));
    }

    #[test]
    fn checksum_hex_case_insensitive() {
        let line = with_checksum("GPGSV,1,1,01,23,12,045,30");
        assert!(validate_checksum(&line));
        let (head, hex) = line.split_at(line.len() - 2);
        let lower = format!("{head}{}", hex.to_lowercase());
        assert!(validate_checksum(&lower));
    }

    #[test]
    fn parse_sentence_happy_path() {
        let line = with_checksum("GPGSV,2,1,08,01,40,083,46,02,17,308,41");
        let s = parse_sentence(&line).unwrap();
        assert_eq!(s.talker, Talker::Gp);
        assert_eq!(s.type_code, "GSV");
        assert_eq!(s.fields.len(), 11);
        assert!(s.checksum_ok);
    }

    #[test]
    fn parse_sentence_skip_reasons() {
        assert_eq!(parse_sentence("garbage"), Err(SkipReason::Malformed));
        assert_eq!(parse_sentence(""), Err(SkipReason::Malformed));
        let bad = "$GPGSV,1,1,00*00";
        assert_eq!(parse_sentence(bad), Err(SkipReason::BadChecksum));
        let unknown = with_checksum("XXGSV,1,1,00");
        assert_eq!(parse_sentence(&unknown), Err(SkipReason::UnknownTalker));
        let proprietary = with_checksum("PUBX,03,0");
        assert_eq!(parse_sentence(&proprietary), Err(SkipReason::UnknownTalker));
    }

    fn gsv_sentence(fields: &[&str]) -> RawSentence {
        RawSentence {
            talker: Talker::Gp,
            type_code: "GSV".to_string(),
            fields: fields.iter().map(|s| s.to_string()).collect(),
            checksum_ok: true,
        }
    }

    #[test]
    fn gsv_two_groups() {
        let s = gsv_sentence(&["2", "1", "08", "01", "40", "083", "46", "02", "17", "308", "41"]);
        let gsv = parse_gsv(&s).unwrap();
        assert_eq!((gsv.message_count, gsv.message_index, gsv.sats_in_view), (2, 1, 8));
        assert_eq!(gsv.observations.len(), 2);
        let o = &gsv.observations[0];
        assert_eq!((o.prn, o.elevation, o.azimuth, o.cn0), (1, Some(40.0), Some(83.0), Some(46.0)));
        let o = &gsv.observations[1];
        assert_eq!((o.prn, o.elevation, o.azimuth, o.cn0), (2, Some(17.0), Some(308.0), Some(41.0)));
        assert_eq!(gsv.signal_id, None);
    }

    #[test]
    fn gsv_empty_snr_is_untracked() {
        let s = gsv_sentence(&["1", "1", "01", "23", "12", "045", ""]);
        let gsv = parse_gsv(&s).unwrap();
        assert_eq!(gsv.observations.len(), 1);
        let o = &gsv.observations[0];
        assert_eq!((o.prn, o.elevation, o.azimuth, o.cn0), (23, Some(12.0), Some(45.0), None));
    }

    #[test]
    fn gsv_bad_prn_is_error() {
        let s = gsv_sentence(&["1", "1", "01", "xx", "12", "045", "30"]);
        assert!(matches!(parse_gsv(&s), Err(NmeaError::BadPrn { .. })));
        let s = gsv_sentence(&["1", "1", "01", "", "12", "045", "30"]);
        assert!(matches!(parse_gsv(&s), Err(NmeaError::BadPrn { .. })));
    }

    #[test]
    fn gsv_field_count_must_be_3_mod_4() {
        let s = gsv_sentence(&["1", "1", "01", "23", "12"]);
        assert!(matches!(parse_gsv(&s), Err(NmeaError::GsvFieldCount { .. })));
        let s = gsv_sentence(&["1", "1"]);
        assert!(matches!(parse_gsv(&s), Err(NmeaError::GsvFieldCount { .. })));
    }

    #[test]
    fn gsv_signal_id_recorded() {
        // NMEA 4.10: one trailing signal-id field
        let s = gsv_sentence(&["1", "1", "01", "23", "12", "045", "30", "7"]);
        let gsv = parse_gsv(&s).unwrap();
        assert_eq!(gsv.signal_id, Some(7));
        assert_eq!(gsv.observations.len(), 1);
    }

    #[test]
    fn gsv_normalizes_ranges() {
        let s = gsv_sentence(&["1", "1", "02", "05", "95", "360", "30", "06", "10", "725", "105"]);
        let gsv = parse_gsv(&s).unwrap();
        assert_eq!(gsv.observations[0].elevation, Some(90.0));
        assert_eq!(gsv.observations[0].azimuth, Some(0.0));
        assert_eq!(gsv.observations[1].azimuth, Some(5.0));
        assert_eq!(gsv.observations[1].cn0, Some(99.0));
    }

    #[test]
    fn time_of_day_parsing() {
        assert_eq!(parse_time_of_day("120500.00"), Some(12.0 * 3600.0 + 5.0 * 60.0));
        assert_eq!(parse_time_of_day("000000.20"), Some(0.2));
        assert_eq!(parse_time_of_day(""), None);
        assert_eq!(parse_time_of_day("9912"), None);
        assert_eq!(parse_time_of_day("250000.00"), None);
        assert_eq!(format_time_of_day(43500.0), "120500.00");
        assert_eq!(format_time_of_day(0.2), "000000.20");
    }

    fn rmc_line(t: &str) -> String {
        with_checksum(&format!("GNRMC,{t},A,,,,,,,010124,,,A"))
    }

    #[test]
    fn assembles_epochs_between_rmc_delimiters() {
        let mut lines = vec![rmc_line("120500.00")];
        lines.push(with_checksum("GPGSV,2,1,05,01,40,083,46,02,17,308,41,03,10,120,35,04,55,200,44"));
        lines.push(with_checksum("GPGSV,2,2,05,05,66,020,48"));
        lines.push(with_checksum("GLGSV,1,1,03,65,10,030,30,66,20,060,31,67,30,090,32"));
        lines.push(rmc_line("120500.20"));

        let text = lines.join("\r\n") + "\r\n";
        let (epochs, stats) = parse_epochs(text.as_bytes()).unwrap();
        assert_eq!(epochs.len(), 2);
        let first = &epochs[0];
        assert_eq!(first.time_of_day, Some(parse_time_of_day("120500.00").unwrap()));
        assert_eq!(first.observations.len(), 8);
        assert!(!first.partial);
        // trailing epoch opened by the second RMC, flushed as partial
        assert!(epochs[1].partial);
        assert_eq!(stats.sentences, 5);
    }

    #[test]
    fn duplicate_satellite_keeps_max_cn0() {
        let lines = [
            rmc_line("120500.00"),
            with_checksum("GPGSV,1,1,01,05,40,083,40,1"),
            with_checksum("GPGSV,1,1,01,05,40,083,44,6"),
            rmc_line("120500.20"),
        ];
        let text = lines.join("\n");
        let (epochs, _) = parse_epochs(text.as_bytes()).unwrap();
        assert_eq!(epochs[0].observations.len(), 1);
        assert_eq!(epochs[0].observations[0].cn0, Some(44.0));
    }

    #[test]
    fn empty_epoch_still_emitted() {
        let text = [rmc_line("120500.00"), rmc_line("120500.20")].join("\n");
        let (epochs, _) = parse_epochs(text.as_bytes()).unwrap();
        assert_eq!(epochs.len(), 2);
        assert!(epochs[0].observations.is_empty());
        assert!(!epochs[0].partial);
    }

    #[test]
    fn gga_delimits_only_until_first_rmc() {
        let gga = |t: &str| with_checksum(&format!("GPGGA,{t},,,,,1,08,1.0,10.0,M,,M,,"));
        let text = [
            gga("080000.00"),
            with_checksum("GPGSV,1,1,01,07,40,083,40"),
            rmc_line("080000.20"),
            gga("080000.20"), // same cycle: must not open a new epoch
            with_checksum("GPGSV,1,1,01,08,40,083,40"),
            rmc_line("080000.40"),
        ]
        .join("\n");
        let (epochs, _) = parse_epochs(text.as_bytes()).unwrap();
        // GGA epoch, RMC epoch (absorbing the second GGA), trailing partial
        assert_eq!(epochs.len(), 3);
        assert_eq!(epochs[0].observations[0].prn, 7);
        assert_eq!(epochs[1].observations[0].prn, 8);
    }

    #[test]
    fn leading_observations_form_partial_epoch() {
        let text = [
            with_checksum("GPGSV,1,1,01,09,40,083,40"),
            rmc_line("080000.00"),
            rmc_line("080000.20"),
        ]
        .join("\n");
        let (epochs, _) = parse_epochs(text.as_bytes()).unwrap();
        assert_eq!(epochs.len(), 3);
        assert!(epochs[0].partial);
        assert_eq!(epochs[0].time_of_day, None);
        assert_eq!(epochs[0].observations.len(), 1);
    }

    #[test]
    fn garbage_never_aborts() {
        let mut text = Vec::new();
        text.extend_from_slice(b"\x00\xff\xfe binary junk $*zz\n");
        text.extend_from_slice(rmc_line("100000.00").as_bytes());
        text.extend_from_slice(b"\nnot,a,sentence\n$GPGSV,bad*00\n");
        text.extend_from_slice(rmc_line("100000.20").as_bytes());
        let (epochs, stats) = parse_epochs(&text[..]).unwrap();
        assert_eq!(epochs.len(), 2);
        assert_eq!(stats.sentences, 2);
        assert!(stats.skipped_malformed >= 1);
    }

    #[test]
    fn median_gap_on_5hz_stream() {
        let epochs: Vec<Epoch> = (0..100)
            .map(|i| Epoch::empty(Some(36_000.0 + 0.2 * i as f64)))
            .collect();
        let gap = median_epoch_gap(&epochs).unwrap();
        assert!((gap - 0.2).abs() < 1e-9);
    }

    #[test]
    fn epoch_jsonl_round_trip() {
        let epoch = Epoch {
            time_of_day: Some(43500.0),
            partial: false,
            observations: vec![SatelliteObservation {
                constellation: Constellation::Gps,
                prn: 5,
                elevation: Some(40.0),
                azimuth: Some(83.0),
                cn0: Some(46.0),
            }],
        };
        let mut buf = Vec::new();
        write_epoch_jsonl(&mut buf, &[epoch.clone()], Some(&[crate::class::ContextClass::OpenSky]))
            .unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"const\":\"GPS\""));
        assert!(text.contains("\"label\":\"open_sky\""));
        let records = read_epoch_jsonl(&buf[..]).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].epoch, epoch);
        assert_eq!(records[0].label, Some(crate::class::ContextClass::OpenSky));
    }
}

//! CSI packet streams: ingestion, lost-packet detection and gap filling.
//!
//! Losses show up only as oversized timestamp gaps. Between two received
//! packets `t_i < t_next` sampled at nominal rate `f2`, the lost count is
//! `max(round((t_next - t_i) * f2 - 1), 0)` with ties rounded up. Each gap is
//! filled with uniformly spaced packets whose per-subcarrier amplitude,
//! unwrapped phase and RSSI are interpolated linearly between the neighbors.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SUBCARRIERS: usize = 52;
pub const DEFAULT_RATE_HZ: f64 = 100.0;

/// Pushes exact `.5` ties upward when float noise lands just below them.
const HALF_UP_SLACK: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum CsiError {
    #[error("schema error at row {row}: {message}")]
    Schema { row: usize, message: String },
    #[error("non-finite {field} at row {row}")]
    NonFiniteValue { row: usize, field: String },
    #[error("negative gap: t_next {t_next} < t_i {t_i}")]
    NegativeGap { t_i: f64, t_next: f64 },
    #[error("sequence has {0} packets, need at least 2")]
    TooShort(usize),
    #[error("invalid sequence: {0}")]
    Invalid(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsiPacket {
    pub timestamp: f64,
    pub rssi: f64,
    pub csi: Vec<Complex64>,
    pub interpolated: bool,
}

impl CsiPacket {
    pub fn new(timestamp: f64, rssi: f64, csi: Vec<Complex64>) -> Self {
        Self {
            timestamp,
            rssi,
            csi,
            interpolated: false,
        }
    }

    pub fn amplitudes(&self) -> impl Iterator<Item = f64> + '_ {
        self.csi.iter().map(|c| c.norm())
    }
}

/// Time-ordered packets with strictly increasing timestamps and uniform width.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiSequence {
    packets: Vec<CsiPacket>,
    nominal_rate: f64,
    subcarrier_count: usize,
}

impl CsiSequence {
    pub fn new(packets: Vec<CsiPacket>, nominal_rate: f64, subcarrier_count: usize) -> Result<Self, CsiError> {
        if !(nominal_rate.is_finite() && nominal_rate > 0.0) {
            return Err(CsiError::Invalid(format!("nominal rate {nominal_rate} must be positive")));
        }
        for (i, p) in packets.iter().enumerate() {
            if p.csi.len() != subcarrier_count {
                return Err(CsiError::Invalid(format!(
                    "packet {i} has {} subcarriers, expected {subcarrier_count}",
                    p.csi.len()
                )));
            }
            if !p.timestamp.is_finite() {
                return Err(CsiError::Invalid(format!("packet {i} has non-finite timestamp")));
            }
        }
        if let Some(i) = packets.windows(2).position(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(CsiError::Invalid(format!(
                "timestamps not strictly increasing at packet {}",
                i + 1
            )));
        }
        Ok(Self {
            packets,
            nominal_rate,
            subcarrier_count,
        })
    }

    pub fn packets(&self) -> &[CsiPacket] {
        &self.packets
    }

    pub fn into_packets(self) -> Vec<CsiPacket> {
        self.packets
    }

    pub fn nominal_rate(&self) -> f64 {
        self.nominal_rate
    }

    pub fn subcarrier_count(&self) -> usize {
        self.subcarrier_count
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub kept: usize,
    pub duplicates_dropped: usize,
    pub reordered: bool,
    pub warnings: Vec<String>,
}

/// Sorts rows by timestamp and drops exact-duplicate timestamps, keeping the
/// first row seen.
pub fn ingest(
    rows: Vec<CsiPacket>,
    nominal_rate: f64,
    subcarrier_count: usize,
) -> Result<(CsiSequence, IngestReport), CsiError> {
    let mut report = IngestReport {
        rows: rows.len(),
        ..IngestReport::default()
    };
    for (row, p) in rows.iter().enumerate() {
        if p.csi.len() != subcarrier_count {
            return Err(CsiError::Schema {
                row,
                message: format!("{} subcarriers, expected {subcarrier_count}", p.csi.len()),
            });
        }
        check_finite(row, p)?;
    }
    report.reordered = rows.windows(2).any(|w| w[1].timestamp < w[0].timestamp);
    let mut rows = rows;
    rows.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let before = rows.len();
    rows.dedup_by(|later, first| later.timestamp == first.timestamp);
    report.duplicates_dropped = before - rows.len();
    if report.reordered {
        report.warnings.push("rows were out of timestamp order and have been sorted".into());
    }
    if report.duplicates_dropped > 0 {
        report.warnings.push(format!(
            "{} rows with duplicate timestamps dropped",
            report.duplicates_dropped
        ));
    }
    report.kept = rows.len();
    Ok((CsiSequence::new(rows, nominal_rate, subcarrier_count)?, report))
}

fn check_finite(row: usize, p: &CsiPacket) -> Result<(), CsiError> {
    let bad = |field: String| Err(CsiError::NonFiniteValue { row, field });
    if !p.timestamp.is_finite() {
        return bad("ts".into());
    }
    if !p.rssi.is_finite() {
        return bad("rssi".into());
    }
    if let Some(k) = p.csi.iter().position(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return bad(format!("csi subcarrier {k}"));
    }
    Ok(())
}

/// Number of packets lost between two received timestamps at rate `f2`.
pub fn count_lost(t_i: f64, t_next: f64, f2: f64) -> Result<u64, CsiError> {
    if t_next < t_i {
        return Err(CsiError::NegativeGap { t_i, t_next });
    }
    let expected = (t_next - t_i) * f2 - 1.0;
    let k = (expected + 0.5 + HALF_UP_SLACK).floor();
    Ok(if k > 0.0 { k as u64 } else { 0 })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompletionReport {
    pub input_packets: usize,
    pub gaps: usize,
    pub lost_detected: u64,
    pub filled: u64,
    pub output_packets: usize,
}

fn wrap_phase(d: f64) -> f64 {
    let w = (d + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

fn interpolate(a: &CsiPacket, b: &CsiPacket, timestamp: f64, alpha: f64) -> CsiPacket {
    let csi = a
        .csi
        .iter()
        .zip(&b.csi)
        .map(|(ca, cb)| {
            let (ra, pa) = ca.to_polar();
            let (rb, pb) = cb.to_polar();
            let amp = ra + alpha * (rb - ra);
            let phase = pa + alpha * wrap_phase(pb - pa);
            Complex64::from_polar(amp, phase)
        })
        .collect();
    CsiPacket {
        timestamp,
        rssi: a.rssi + alpha * (b.rssi - a.rssi),
        csi,
        interpolated: true,
    }
}

/// Fills every detected gap; original packets are carried through untouched.
pub fn complete(seq: &CsiSequence) -> Result<(CsiSequence, CompletionReport), CsiError> {
    let packets = seq.packets();
    if packets.len() < 2 {
        return Err(CsiError::TooShort(packets.len()));
    }
    let mut report = CompletionReport {
        input_packets: packets.len(),
        ..CompletionReport::default()
    };
    let mut out = Vec::with_capacity(packets.len());
    for pair in packets.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        out.push(a.clone());
        let k = count_lost(a.timestamp, b.timestamp, seq.nominal_rate())?;
        if k == 0 {
            continue;
        }
        report.gaps += 1;
        report.lost_detected += k;
        let span = b.timestamp - a.timestamp;
        for j in 1..=k {
            let alpha = j as f64 / (k + 1) as f64;
            out.push(interpolate(a, b, a.timestamp + alpha * span, alpha));
        }
        report.filled += k;
    }
    out.push(packets[packets.len() - 1].clone());
    report.output_packets = out.len();
    Ok((
        CsiSequence::new(out, seq.nominal_rate(), seq.subcarrier_count())?,
        report,
    ))
}

fn header(subcarriers: usize, with_interp: bool) -> Vec<String> {
    let mut h = vec!["ts".to_string(), "rssi".to_string()];
    for k in 0..subcarriers {
        h.push(format!("re_{k}"));
        h.push(format!("im_{k}"));
    }
    if with_interp {
        h.push("interp".into());
    }
    h
}

/// Reads `ts,rssi,re_0,im_0,...` with an optional trailing `interp` column.
pub fn read_csv<R: Read>(reader: R, subcarriers: usize) -> Result<Vec<CsiPacket>, CsiError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let with_interp = names.last().map(String::as_str) == Some("interp");
    if names != header(subcarriers, with_interp) {
        return Err(CsiError::Schema {
            row: 0,
            message: format!(
                "header has {} columns, expected `ts,rssi,re_0,im_0,...` for {subcarriers} subcarriers",
                names.len()
            ),
        });
    }
    let width = names.len();
    let mut rows = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CsiError::Schema {
            row: row + 1,
            message: e.to_string(),
        })?;
        if record.len() != width {
            return Err(CsiError::Schema {
                row: row + 1,
                message: format!("{} columns, expected {width}", record.len()),
            });
        }
        let field = |i: usize| -> Result<f64, CsiError> {
            let v: f64 = record[i].parse().map_err(|_| CsiError::Schema {
                row: row + 1,
                message: format!("column `{}` is not a number: {:?}", names[i], &record[i]),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(CsiError::NonFiniteValue {
                    row: row + 1,
                    field: names[i].clone(),
                })
            }
        };
        let csi = (0..subcarriers)
            .map(|k| Ok(Complex64::new(field(2 + 2 * k)?, field(3 + 2 * k)?)))
            .collect::<Result<Vec<_>, CsiError>>()?;
        let interpolated = if with_interp {
            match &record[width - 1] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(CsiError::Schema {
                        row: row + 1,
                        message: format!("interp must be 0 or 1, got {other:?}"),
                    })
                }
            }
        } else {
            false
        };
        rows.push(CsiPacket {
            timestamp: field(0)?,
            rssi: field(1)?,
            csi,
            interpolated,
        });
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(out: W, packets: &[CsiPacket], subcarriers: usize, with_interp: bool) -> Result<(), CsiError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(subcarriers, with_interp))?;
    let mut record = Vec::with_capacity(3 + 2 * subcarriers);
    for p in packets {
        record.clear();
        record.push(p.timestamp.to_string());
        record.push(p.rssi.to_string());
        for c in &p.csi {
            record.push(c.re.to_string());
            record.push(c.im.to_string());
        }
        if with_interp {
            record.push(if p.interpolated { "1" } else { "0" }.to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

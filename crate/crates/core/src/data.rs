//! Right-censored survival samples with a forcing variable, plus the
//! counting-process views the estimators consume.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::format;
use crate::kernel::KernelSpec;

/// Side of the cutoff. Treatment is `1{Z >= z0}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Control,
    Treated,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Control, Side::Treated];

    /// `g` in `{0, 1}`.
    pub fn index(self) -> usize {
        match self {
            Side::Control => 0,
            Side::Treated => 1,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Control => Side::Treated,
            Side::Treated => Side::Control,
        }
    }

    pub fn of(forcing: f64, cutoff: f64) -> Side {
        if forcing >= cutoff {
            Side::Treated
        } else {
            Side::Control
        }
    }
}

/// One subject: observed time `min(T, C)`, event indicator, forcing value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub time: f64,
    pub event: bool,
    pub forcing: f64,
}

/// A validated sample observed over `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    records: Vec<Record>,
    cutoff: f64,
    horizon: f64,
}

impl SurvivalDataset {
    /// Validates the records and applies the observation window: any record
    /// with `time > horizon` becomes `(horizon, censored)`.
    pub fn new(records: Vec<Record>, cutoff: f64, horizon: f64) -> Result<Self> {
        if !cutoff.is_finite() {
            return Err(Error::InvalidData(format!("cutoff must be finite, got {cutoff}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidData(format!("horizon must be positive and finite, got {horizon}")));
        }
        let mut records = records;
        for (i, r) in records.iter_mut().enumerate() {
            if r.time.is_nan() || r.time < 0.0 {
                return Err(Error::InvalidRow { row: i + 1, message: format!("time must be nonnegative, got {}", r.time) });
            }
            if !r.forcing.is_finite() {
                return Err(Error::InvalidRow { row: i + 1, message: format!("forcing must be finite, got {}", r.forcing) });
            }
            if r.time > horizon {
                r.time = horizon;
                r.event = false;
            }
        }
        Ok(Self { records, cutoff, horizon })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn side(&self, i: usize) -> Side {
        Side::of(self.records[i].forcing, self.cutoff)
    }

    /// Number of records on each side, indexed by [`Side::index`].
    pub fn side_counts(&self) -> [usize; 2] {
        let mut counts = [0, 0];
        for r in &self.records {
            counts[Side::of(r.forcing, self.cutoff).index()] += 1;
        }
        counts
    }

    /// The same data with every forcing value and the cutoff shifted by
    /// `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        let records = self.records.iter().map(|r| Record { forcing: r.forcing + delta, ..*r }).collect();
        Self { records, cutoff: self.cutoff + delta, horizon: self.horizon }
    }
}

/// Column names plus the design constants that are not stored in the file.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub time: String,
    pub event: String,
    pub forcing: String,
    pub cutoff: f64,
    pub horizon: f64,
}

impl CsvSchema {
    pub fn new(cutoff: f64, horizon: f64) -> Self {
        Self { time: "time".into(), event: "event".into(), forcing: "forcing".into(), cutoff, horizon }
    }
}

pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<SurvivalDataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

/// Reads `time,event,forcing` rows; lines starting with `#` are skipped.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<SurvivalDataset> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidData(format!("missing column '{name}'")))
    };
    let (ti, ei, fi) = (column(&schema.time)?, column(&schema.event)?, column(&schema.forcing)?);

    let mut records = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let row_no = k + 1;
        let row = row.map_err(|e| Error::InvalidRow { row: row_no, message: e.to_string() })?;
        let field = |i: usize, name: &str| {
            row.get(i)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::InvalidRow { row: row_no, message: format!("missing {name}") })
        };
        let number = |i: usize, name: &str| -> Result<f64> {
            let s = field(i, name)?;
            let v: f64 = s
                .parse()
                .map_err(|_| Error::InvalidRow { row: row_no, message: format!("{name} '{s}' is not a number") })?;
            if v.is_nan() {
                return Err(Error::InvalidRow { row: row_no, message: format!("{name} is NaN") });
            }
            Ok(v)
        };
        let time = number(ti, "time")?;
        if time < 0.0 {
            return Err(Error::InvalidRow { row: row_no, message: format!("negative time {time}") });
        }
        let forcing = number(fi, "forcing")?;
        let event = match field(ei, "event")? {
            "1" | "true" | "TRUE" => true,
            "0" | "false" | "FALSE" => false,
            other => {
                return Err(Error::InvalidRow { row: row_no, message: format!("event '{other}' is not 0/1") })
            }
        };
        records.push(Record { time, event, forcing });
    }
    SurvivalDataset::new(records, schema.cutoff, schema.horizon)
}

/// Writes the dataset with a `#` metadata header and a `time,event,forcing`
/// table.
pub fn write_csv<W: Write>(ds: &SurvivalDataset, mut out: W) -> Result<()> {
    writeln!(out, "# cutoff = {}", format::num(ds.cutoff))?;
    writeln!(out, "# horizon = {}", format::num(ds.horizon))?;
    writeln!(out, "time,event,forcing")?;
    for r in &ds.records {
        writeln!(out, "{},{},{}", format::num(r.time), u8::from(r.event), format::num(r.forcing))?;
    }
    Ok(())
}

pub fn emit_csv(ds: &SurvivalDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv(ds, file)
}

/// `Σ_i 1{X_i = g} K_h(Z_i - z0) 1{T_i >= t}`.
pub fn at_risk_count(ds: &SurvivalDataset, t: f64, side: Side, kernel: &KernelSpec, h: f64) -> f64 {
    ds.records
        .iter()
        .filter(|r| Side::of(r.forcing, ds.cutoff) == side && r.time >= t)
        .map(|r| kernel.scaled(r.forcing - ds.cutoff, h))
        .sum()
}

/// Distinct observed event times with the records that fail at each, split
/// by side. Within a time, indices are in record order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventSchedule {
    pub entries: Vec<ScheduleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleEntry {
    pub time: f64,
    pub control: Vec<usize>,
    pub treated: Vec<usize>,
}

impl ScheduleEntry {
    pub fn events(&self, side: Side) -> &[usize] {
        match side {
            Side::Control => &self.control,
            Side::Treated => &self.treated,
        }
    }

    pub fn multiplicity(&self) -> usize {
        self.control.len() + self.treated.len()
    }
}

impl EventSchedule {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.time)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_events(&self) -> usize {
        self.entries.iter().map(ScheduleEntry::multiplicity).sum()
    }
}

pub fn event_schedule(ds: &SurvivalDataset) -> EventSchedule {
    let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.records[i].event).collect();
    idx.sort_by(|&a, &b| ds.records[a].time.total_cmp(&ds.records[b].time).then(a.cmp(&b)));
    let mut entries: Vec<ScheduleEntry> = Vec::new();
    for i in idx {
        let t = ds.records[i].time;
        if entries.last().map_or(true, |e| e.time != t) {
            entries.push(ScheduleEntry { time: t, control: Vec::new(), treated: Vec::new() });
        }
        let e = entries.last_mut().expect("entry pushed above");
        match ds.side(i) {
            Side::Control => e.control.push(i),
            Side::Treated => e.treated.push(i),
        }
    }
    EventSchedule { entries }
}

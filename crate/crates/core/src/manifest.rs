//! Dataset manifests.
//!
//! A manifest is a CSV file preceded by a `#` header block:
//!
//! ```text
//! # format=cf32le
//! # num_tx=4
//! # sample_rate_hz=20000000
//! # window_len=256
//! path,waveform,tx_id,day,provenance,policy,seed
//! day1/tx0_5g_b0.bin,5g,0,day1,original,,
//! aug/r0000_c0.bin,5g,0,day1,augmented,cdl+tdl,1234
//! ```
//!
//! Record paths are relative to the directory holding the manifest unless
//! they are absolute.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iq::{self, IqBuffer, RECORD_BYTES};

pub const FORMAT_TAG: &str = "cf32le";
pub const CSV_COLUMNS: [&str; 7] = ["path", "waveform", "tx_id", "day", "provenance", "policy", "seed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WaveformKind {
    #[serde(rename = "5g")]
    FiveG,
    #[serde(rename = "wifi")]
    Wifi,
    #[serde(rename = "lte")]
    Lte,
}

impl WaveformKind {
    pub const ALL: [WaveformKind; 3] = [WaveformKind::FiveG, WaveformKind::Wifi, WaveformKind::Lte];

    pub fn as_str(self) -> &'static str {
        match self {
            WaveformKind::FiveG => "5g",
            WaveformKind::Wifi => "wifi",
            WaveformKind::Lte => "lte",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for WaveformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WaveformKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "5g" | "fiveg" | "nr" => Ok(WaveformKind::FiveG),
            "wifi" => Ok(WaveformKind::Wifi),
            "lte" | "4g" => Ok(WaveformKind::Lte),
            other => Err(format!("unknown waveform kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Day {
    #[serde(rename = "day1")]
    Day1,
    #[serde(rename = "day2")]
    Day2,
}

impl Day {
    pub fn as_str(self) -> &'static str {
        match self {
            Day::Day1 => "day1",
            Day::Day2 => "day2",
        }
    }
}

impl fmt::Display for Day {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Day {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "day1" | "1" => Ok(Day::Day1),
            "day2" | "2" => Ok(Day::Day2),
            other => Err(format!("unknown day `{other}`")),
        }
    }
}

/// Where a recording came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Provenance {
    Original,
    Augmented { policy: String, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RecordingMeta {
    pub waveform: WaveformKind,
    pub transmitter_id: usize,
    pub day: Day,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestHeader {
    pub num_transmitters: usize,
    pub sample_rate_hz: f64,
    pub window_len: usize,
    pub format: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub path: PathBuf,
    pub meta: RecordingMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn new(num_transmitters: usize, sample_rate_hz: f64, window_len: usize) -> Self {
        Self {
            header: ManifestHeader {
                num_transmitters,
                sample_rate_hz,
                window_len,
                format: FORMAT_TAG.to_string(),
            },
            records: Vec::new(),
        }
    }

    /// Header and per-record checks that need no file access.
    pub fn check(&self) -> Result<()> {
        let h = &self.header;
        if h.window_len < 16 {
            return Err(Error::Validation(format!("window_len {} is below 16", h.window_len)));
        }
        if !(h.sample_rate_hz.is_finite() && h.sample_rate_hz > 0.0) {
            return Err(Error::Validation(format!("bad sample rate {}", h.sample_rate_hz)));
        }
        if h.format != FORMAT_TAG {
            return Err(Error::Validation(format!("unsupported sample format `{}`", h.format)));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.meta.transmitter_id >= h.num_transmitters {
                return Err(Error::Validation(format!(
                    "record {i} ({}): tx_id {} not below num_tx {}",
                    r.path.display(),
                    r.meta.transmitter_id,
                    h.num_transmitters
                )));
            }
        }
        Ok(())
    }

    /// Checks that every referenced file exists and has a whole number of records.
    pub fn check_files(&self, base_dir: &Path) -> Result<()> {
        for r in &self.records {
            let p = resolve(base_dir, &r.path);
            let len = fs::metadata(&p)
                .map_err(|e| Error::Validation(format!("dangling path {}: {e}", p.display())))?
                .len();
            if len % RECORD_BYTES as u64 != 0 {
                return Err(Error::Validation(format!(
                    "{} has length {len}, not a multiple of {RECORD_BYTES}",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    /// Fully decodes every referenced file.
    pub fn verify_decode(&self, base_dir: &Path) -> Result<()> {
        for r in &self.records {
            self.load(base_dir, r)?;
        }
        Ok(())
    }

    pub fn load(&self, base_dir: &Path, record: &ManifestRecord) -> Result<IqBuffer> {
        iq::read_iq_bin(resolve(base_dir, &record.path), self.header.sample_rate_hz)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let h = &self.header;
        let mut out = String::new();
        out.push_str(&format!("# format={}\n", h.format));
        out.push_str(&format!("# num_tx={}\n", h.num_transmitters));
        out.push_str(&format!("# sample_rate_hz={}\n", h.sample_rate_hz));
        out.push_str(&format!("# window_len={}\n", h.window_len));

        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Validation(format!("csv encode: {e}"));
        w.write_record(CSV_COLUMNS).map_err(csv_err)?;
        for r in &self.records {
            let path = r.path.to_str().ok_or_else(|| {
                Error::Validation(format!("non UTF-8 path {}", r.path.display()))
            })?;
            let (prov, policy, seed) = match &r.meta.provenance {
                Provenance::Original => ("original", String::new(), String::new()),
                Provenance::Augmented { policy, seed } => {
                    ("augmented", policy.clone(), seed.to_string())
                }
            };
            let tx = r.meta.transmitter_id.to_string();
            w.write_record([
                path,
                r.meta.waveform.as_str(),
                tx.as_str(),
                r.meta.day.as_str(),
                prov,
                policy.as_str(),
                seed.as_str(),
            ])
            .map_err(csv_err)?;
        }
        let body = w
            .into_inner()
            .map_err(|e| Error::Validation(format!("csv flush: {e}")))?;
        out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut format = None;
        let mut num_tx = None;
        let mut sample_rate = None;
        let mut window_len = None;

        let mut header_lines = 0;
        for (i, line) in text.lines().enumerate() {
            let Some(rest) = line.strip_prefix('#') else {
                break;
            };
            header_lines += 1;
            let rest = rest.trim();
            if rest.is_empty() {
                continue;
            }
            let lineno = i + 1;
            let (key, value) = rest.split_once('=').ok_or_else(|| Error::Parse {
                line: lineno,
                reason: format!("expected `key=value` in header, got `{rest}`"),
            })?;
            let value = value.trim();
            let bad = |what: &str| Error::Parse {
                line: lineno,
                reason: format!("invalid {what} `{value}`"),
            };
            match key.trim() {
                "format" => format = Some(value.to_string()),
                "num_tx" => num_tx = Some(value.parse::<usize>().map_err(|_| bad("num_tx"))?),
                "sample_rate_hz" => {
                    sample_rate = Some(value.parse::<f64>().map_err(|_| bad("sample_rate_hz"))?)
                }
                "window_len" => {
                    window_len = Some(value.parse::<usize>().map_err(|_| bad("window_len"))?)
                }
                _ => {}
            }
        }
        let missing = |k: &str| Error::Parse {
            line: header_lines.max(1),
            reason: format!("header is missing `{k}`"),
        };
        let header = ManifestHeader {
            num_transmitters: num_tx.ok_or_else(|| missing("num_tx"))?,
            sample_rate_hz: sample_rate.ok_or_else(|| missing("sample_rate_hz"))?,
            window_len: window_len.ok_or_else(|| missing("window_len"))?,
            format: format.unwrap_or_else(|| FORMAT_TAG.to_string()),
        };

        let body_start: usize = text
            .split_inclusive('\n')
            .take(header_lines)
            .map(str::len)
            .sum();
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(text[body_start..].as_bytes());

        let to_line = |pos: Option<&csv::Position>| header_lines + pos.map_or(1, |p| p.line() as usize);
        let columns = rdr.headers().map_err(|e| Error::Parse {
            line: header_lines + 1,
            reason: e.to_string(),
        })?;
        if columns.iter().collect::<Vec<_>>() != CSV_COLUMNS {
            return Err(Error::Parse {
                line: header_lines + 1,
                reason: format!("expected columns {}", CSV_COLUMNS.join(",")),
            });
        }

        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| Error::Parse {
                line: to_line(e.position()),
                reason: e.to_string(),
            })?;
            let line = to_line(row.position());
            let field = |i: usize| row.get(i).unwrap_or("");
            let perr = |reason: String| Error::Parse { line, reason };

            let waveform = field(1).parse::<WaveformKind>().map_err(perr)?;
            let transmitter_id = field(2)
                .parse::<usize>()
                .map_err(|_| perr(format!("invalid tx_id `{}`", field(2))))?;
            let day = field(3).parse::<Day>().map_err(perr)?;
            let provenance = match field(4) {
                "original" => Provenance::Original,
                "augmented" => Provenance::Augmented {
                    policy: field(5).to_string(),
                    seed: field(6)
                        .parse::<u64>()
                        .map_err(|_| perr(format!("invalid seed `{}`", field(6))))?,
                },
                other => return Err(perr(format!("unknown provenance `{other}`"))),
            };
            if field(0).is_empty() {
                return Err(perr("empty path".into()));
            }
            records.push(ManifestRecord {
                path: PathBuf::from(field(0)),
                meta: RecordingMeta {
                    waveform,
                    transmitter_id,
                    day,
                    provenance,
                },
            });
        }
        Ok(Self { header, records })
    }
}

pub fn resolve(base_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base_dir.join(path)
    }
}

/// Directory that relative record paths of a manifest file are resolved against.
pub fn base_dir_of(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, manifest.to_csv_string()?).map_err(|e| Error::io(path, e))
}

/// Parses a manifest file and checks that its records point at valid files.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest = DatasetManifest::parse(&text)?;
    manifest.check()?;
    manifest.check_files(&base_dir_of(path))?;
    Ok(manifest)
}

//! Desk-scale cross-day experiment.
//!
//! For each master seed: synthesize Day-1 and Day-2 recordings of every
//! (transmitter, waveform kind), hold out a fraction of Day-1 files, and for
//! each policy augment the Day-1 training files, train a fresh classifier and
//! score it on the held-out Day-1 windows and on all Day-2 windows.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{self, AugmentationPlan, AugmentationPolicy, ConditionSet};
use crate::channel::{self, ChannelConfig, ChannelModel, ProfileId};
use crate::classifier::{self, NetConfig, TrainedModel};
use crate::error::{Error, Result, ResultExt};
use crate::impairments::{self, FingerprintBank};
use crate::iq::{self, Example};
use crate::manifest::{self, DatasetManifest, Day, ManifestRecord, Provenance, RecordingMeta, WaveformKind};
use crate::seed;
use crate::wavegen;

/// The five compared policies, in report order.
pub const TABLE_POLICIES: [AugmentationPolicy; 5] = [
    AugmentationPolicy::DecoupledCdlTdl,
    AugmentationPolicy::FiveGOnlyCdl,
    AugmentationPolicy::WifiOnlyTdl,
    AugmentationPolicy::UniformTdl,
    AugmentationPolicy::NoAug,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub num_tx: usize,
    /// Bursts per (transmitter, waveform kind, day).
    pub bursts_per_class: usize,
    /// Target burst length; rounded to whole OFDM symbols per waveform.
    pub burst_samples: usize,
    pub sample_rate_hz: f64,
    pub window_len: usize,
    pub stride: usize,
    /// Fraction of Day-1 bursts per (transmitter, kind) held out for validation.
    pub holdout_fraction: f64,
    pub seeds: Vec<u64>,
    pub policies: Vec<AugmentationPolicy>,
    /// Fingerprint bank file; the bundled bank when absent.
    pub fingerprints: Option<PathBuf>,
    pub day1: ConditionSet,
    pub day2: ConditionSet,
    /// Base plan; `policy` is replaced per run and `master_seed` is mixed
    /// with the experiment seed.
    pub plan: AugmentationPlan,
    pub net: NetConfig,
    /// One channel realization per (transmitter, day), shared by all its
    /// bursts and waveform kinds, as for a fixed base-station link. SNR and
    /// noise are still drawn per burst. When false every burst gets its own
    /// channel draw.
    pub static_links: bool,
    /// Write per-policy feature CSVs for the first seed.
    pub export_features: bool,
}

fn models(family: fn(ProfileId) -> ChannelModel, ids: &[ProfileId]) -> Vec<ChannelModel> {
    ids.iter().map(|&id| family(id)).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        use ProfileId::*;
        let mut day1 = models(ChannelModel::tdl, &[D, E]);
        day1.extend(models(ChannelModel::cdl, &[D, E]));
        let mut day2 = models(ChannelModel::tdl, &[A, B, C]);
        day2.extend(models(ChannelModel::cdl, &[A, B, C]));
        Self {
            num_tx: 4,
            bursts_per_class: 5,
            burst_samples: 17600,
            sample_rate_hz: 20e6,
            window_len: 512,
            stride: 512,
            holdout_fraction: 0.2,
            seeds: vec![1, 2, 3],
            policies: TABLE_POLICIES.to_vec(),
            fingerprints: None,
            day1: ConditionSet {
                models: day1,
                ds_range_s: (30e-9, 100e-9),
                doppler_range_hz: (0.0, 5.0),
                snr_range_db: (20.0, 30.0),
            },
            day2: ConditionSet {
                models: day2,
                ds_range_s: (100e-9, 300e-9),
                doppler_range_hz: (0.0, 10.0),
                snr_range_db: (10.0, 20.0),
            },
            plan: AugmentationPlan::default(),
            net: NetConfig::default(),
            static_links: true,
            export_features: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.day1.validate().context(|| "day1 conditions".into())?;
        self.day2.validate().context(|| "day2 conditions".into())?;
        let (a, b) = (&self.day1, &self.day2);
        if a.ds_range_s == b.ds_range_s && a.doppler_range_hz == b.doppler_range_hz && a.snr_range_db == b.snr_range_db {
            return Err(Error::Config(
                "day1 and day2 condition sets must differ in at least one range".into(),
            ));
        }
        if self.num_tx < 2 {
            return Err(Error::Config("need at least 2 transmitters".into()));
        }
        let held = self.holdout_bursts();
        if held == 0 || held >= self.bursts_per_class {
            return Err(Error::Config(format!(
                "holdout fraction {} of {} bursts leaves no train or no held-out bursts",
                self.holdout_fraction, self.bursts_per_class
            )));
        }
        if self.window_len < 16 || self.stride == 0 {
            return Err(Error::Config("window_len must be >= 16 and stride >= 1".into()));
        }
        if self.burst_samples < self.window_len {
            return Err(Error::Config("bursts are shorter than one window".into()));
        }
        if self.seeds.is_empty() || self.policies.is_empty() {
            return Err(Error::Config("need at least one seed and one policy".into()));
        }
        if self.net.window_len != self.window_len || self.net.num_classes != self.num_tx {
            return Err(Error::Config(format!(
                "net expects window {} / {} classes, experiment has {} / {}",
                self.net.window_len, self.net.num_classes, self.window_len, self.num_tx
            )));
        }
        self.net.validate()?;
        for &p in &self.policies {
            AugmentationPlan {
                policy: p,
                ..self.plan.clone()
            }
            .validate()
            .context(|| format!("plan for {p}"))?;
        }
        Ok(())
    }

    pub fn holdout_bursts(&self) -> usize {
        (self.bursts_per_class as f64 * self.holdout_fraction).round() as usize
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).context(|| format!("config {}", path.display()))
    }

    pub fn bank(&self) -> Result<FingerprintBank> {
        let bank = match &self.fingerprints {
            Some(p) => FingerprintBank::load(p)?,
            None => FingerprintBank::default_bank(),
        };
        if bank.len() < self.num_tx {
            return Err(Error::Config(format!(
                "fingerprint bank has {} transmitters, need {}",
                bank.len(),
                self.num_tx
            )));
        }
        Ok(bank)
    }
}

const DATA_STREAM: u64 = 1;
const LINK_STREAM: u64 = 4;
const PLAN_STREAM: u64 = 2;
const NET_STREAM: u64 = 3;

fn day_index(day: Day) -> u64 {
    match day {
        Day::Day1 => 1,
        Day::Day2 => 2,
    }
}

/// Writes Day-1 and Day-2 recordings under `out_dir/day1` and `out_dir/day2`
/// and returns their manifests (also written as `manifest.csv` in each).
///
/// Every (transmitter, kind, day, burst) gets its own payload, noise and SNR
/// draw, and the transmitter's fingerprint, which is the same on both days.
/// The channel comes from that day's condition set, drawn per link or per
/// burst according to `static_links`.
pub fn synth_dataset(cfg: &ExperimentConfig, seed_value: u64, out_dir: &Path) -> Result<(DatasetManifest, DatasetManifest)> {
    cfg.validate()?;
    let bank = cfg.bank()?;
    let data_seed = seed::mix(seed_value, DATA_STREAM);
    let mut out = Vec::with_capacity(2);
    for day in [Day::Day1, Day::Day2] {
        let conditions = match day {
            Day::Day1 => &cfg.day1,
            Day::Day2 => &cfg.day2,
        };
        let dir = out_dir.join(day.as_str());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut m = DatasetManifest::new(cfg.num_tx, cfg.sample_rate_hz, cfg.window_len);
        for tx in 0..cfg.num_tx {
            let link = conditions.draw(seed::mix_all(data_seed, &[LINK_STREAM, day_index(day), tx as u64]), cfg.sample_rate_hz);
            for kind in WaveformKind::ALL {
                let spec = wavegen::default_spec(kind);
                let symbols = spec.symbols_for(cfg.burst_samples);
                for burst in 0..cfg.bursts_per_class {
                    let key = [day_index(day), tx as u64, kind.index() as u64, burst as u64];
                    let stream = |s: u64| seed::mix_all(seed::mix(data_seed, s), &key);
                    let x = wavegen::gen_burst(&spec, symbols, stream(0), cfg.sample_rate_hz)?;
                    let x = impairments::apply_fingerprint(&x, &bank.transmitters[tx], stream(1))?;
                    let draw = conditions.draw(stream(2), cfg.sample_rate_hz);
                    let y = if cfg.static_links {
                        let snr = draw.config.snr_db.expect("condition draws carry an snr");
                        let faded = channel::transmit(&x, link.model, &ChannelConfig { snr_db: None, ..link.config })?;
                        channel::add_awgn(&faded, snr, stream(3))?
                    } else {
                        draw.apply(&x)?
                    };
                    let name = PathBuf::from(format!("tx{tx}_{kind}_b{burst:02}.bin"));
                    iq::write_iq_bin(&y, dir.join(&name))?;
                    m.records.push(ManifestRecord {
                        path: name,
                        meta: RecordingMeta {
                            waveform: kind,
                            transmitter_id: tx,
                            day,
                            provenance: Provenance::Original,
                        },
                    });
                }
            }
        }
        manifest::write_manifest(&m, dir.join("manifest.csv"))?;
        out.push(m);
    }
    let day2 = out.pop().expect("two days");
    let day1 = out.pop().expect("two days");
    Ok((day1, day2))
}

/// Splits Day-1 records into (train, held-out): the last `holdout` bursts of
/// each (transmitter, kind) are held out.
pub fn split_day1(manifest: &DatasetManifest, holdout: usize) -> (DatasetManifest, DatasetManifest) {
    let mut train = DatasetManifest {
        header: manifest.header.clone(),
        records: Vec::new(),
    };
    let mut held = train.clone();
    for r in &manifest.records {
        let siblings: Vec<&ManifestRecord> = manifest
            .records
            .iter()
            .filter(|o| o.meta.transmitter_id == r.meta.transmitter_id && o.meta.waveform == r.meta.waveform)
            .collect();
        let pos = siblings.iter().position(|o| std::ptr::eq(*o, r)).expect("record is its own sibling");
        if pos + holdout >= siblings.len() {
            held.records.push(r.clone());
        } else {
            train.records.push(r.clone());
        }
    }
    (train, held)
}

/// Loads every record of `manifest` and cuts it into windows.
pub fn load_examples(manifest: &DatasetManifest, base_dir: &Path, window_len: usize, stride: usize) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for r in &manifest.records {
        let x = manifest.load(base_dir, r)?;
        out.extend(iq::slice_examples(&x, &r.meta, window_len, stride)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub policy: AugmentationPolicy,
    pub day1_acc: f64,
    pub day2_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn get(&self, policy: AugmentationPolicy) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.policy == policy)
    }

    /// `policy,day1_acc,day2_acc` with six decimals.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("policy,day1_acc,day2_acc\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.6},{:.6}", r.policy, r.day1_acc, r.day2_acc);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "policy,day1_acc,day2_acc")) => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    reason: "expected header policy,day1_acc,day2_acc".into(),
                })
            }
        }
        let rows = lines
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                let bad = |reason: String| Error::Parse { line: i + 1, reason };
                let f: Vec<&str> = l.split(',').collect();
                if f.len() != 3 {
                    return Err(bad(format!("expected 3 fields, got {}", f.len())));
                }
                let acc = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(e.to_string()));
                Ok(ResultRow {
                    policy: f[0].parse().map_err(bad)?,
                    day1_acc: acc(f[1])?,
                    day2_acc: acc(f[2])?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(ResultTable { rows })
    }

    /// Fixed-width text table with accuracies in percent.
    pub fn to_text(&self, header: &str) -> String {
        let mut s = String::new();
        for line in header.lines() {
            let _ = writeln!(s, "# {line}");
        }
        let _ = writeln!(s, "{:<20} {:>8} {:>8}", "policy", "day1 %", "day2 %");
        for r in &self.rows {
            let _ = writeln!(s, "{:<20} {:>8.2} {:>8.2}", r.policy.name(), 100.0 * r.day1_acc, 100.0 * r.day2_acc);
        }
        s
    }

    /// Row-wise mean of tables with the same policy order.
    pub fn mean(tables: &[ResultTable]) -> ResultTable {
        let Some(first) = tables.first() else {
            return ResultTable::default();
        };
        let n = tables.len() as f64;
        let rows = first
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| ResultRow {
                policy: r.policy,
                day1_acc: tables.iter().map(|t| t.rows[i].day1_acc).sum::<f64>() / n,
                day2_acc: tables.iter().map(|t| t.rows[i].day2_acc).sum::<f64>() / n,
            })
            .collect();
        ResultTable { rows }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    /// Mean over seeds.
    pub table: ResultTable,
    pub per_seed: Vec<(u64, ResultTable)>,
}

/// Trains one policy for one seed and returns (model, day1 acc, day2 acc).
pub fn run_policy(
    cfg: &ExperimentConfig,
    seed_value: u64,
    policy: AugmentationPolicy,
    data: &SeedData,
    work_dir: &Path,
) -> Result<(TrainedModel, f64, f64, Vec<Example>)> {
    let plan = AugmentationPlan {
        policy,
        master_seed: seed::mix(seed::mix(seed_value, PLAN_STREAM), cfg.plan.master_seed),
        ..cfg.plan.clone()
    };
    let aug_dir = work_dir.join(policy.name());
    let augmented = augment::augment_dataset(&data.train, &data.day1_dir, &plan, &aug_dir).context(|| "augment".into())?;
    let train_set = load_examples(&augmented, &aug_dir, cfg.window_len, cfg.stride)?;
    if let Some(e) = train_set.iter().find(|e| e.meta.day != Day::Day1) {
        return Err(Error::Validation(format!("{} example in the training set", e.meta.day)));
    }
    let net = NetConfig {
        seed: seed::mix(seed::mix(seed_value, NET_STREAM), cfg.net.seed),
        ..cfg.net.clone()
    };
    let model = classifier::train(&train_set, &net).context(|| "train".into())?;
    let day1 = classifier::evaluate(&model.network, &data.held_out).context(|| "eval day1".into())?;
    let day2 = classifier::evaluate(&model.network, &data.day2).context(|| "eval day2".into())?;
    Ok((model, day1.accuracy, day2.accuracy, train_set))
}

/// Synthesized data of one seed, split and windowed.
pub struct SeedData {
    pub day1_dir: PathBuf,
    pub train: DatasetManifest,
    pub held_out: Vec<Example>,
    pub day2: Vec<Example>,
}

pub fn prepare_seed(cfg: &ExperimentConfig, seed_value: u64, work_dir: &Path) -> Result<SeedData> {
    let data_dir = work_dir.join("data");
    let (day1, day2) = synth_dataset(cfg, seed_value, &data_dir).context(|| "synth".into())?;
    let (train, held) = split_day1(&day1, cfg.holdout_bursts());
    let day1_dir = data_dir.join(Day::Day1.as_str());
    Ok(SeedData {
        held_out: load_examples(&held, &day1_dir, cfg.window_len, cfg.stride)?,
        day2: load_examples(&day2, &data_dir.join(Day::Day2.as_str()), cfg.window_len, cfg.stride)?,
        day1_dir,
        train,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    run_experiment_with_progress(cfg, out_dir, &mut |_| {})
}

/// Runs every seed and policy, writing `results.csv` (seed mean),
/// `results_per_seed.csv`, `results.txt` and, when enabled, per-policy
/// `features_<policy>.csv` for the first seed into `out_dir`.
pub fn run_experiment_with_progress(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    progress: &mut dyn FnMut(&str),
) -> Result<ExperimentReport> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut per_seed = Vec::with_capacity(cfg.seeds.len());
    for (si, &s) in cfg.seeds.iter().enumerate() {
        let work = out_dir.join(format!("seed_{s}"));
        let data = prepare_seed(cfg, s, &work).context(|| format!("seed {s}"))?;
        progress(&format!(
            "seed {s}: {} train files, {} held-out and {} day2 windows",
            data.train.records.len(),
            data.held_out.len(),
            data.day2.len()
        ));
        let mut table = ResultTable::default();
        for &policy in &cfg.policies {
            let (model, d1, d2, train_set) =
                run_policy(cfg, s, policy, &data, &work).context(|| format!("seed {s}, policy {policy}"))?;
            progress(&format!(
                "seed {s} {policy}: {} train windows, day1 {:.4}, day2 {:.4}",
                train_set.len(),
                d1,
                d2
            ));
            if cfg.export_features && si == 0 {
                let mut ex = train_set;
                ex.extend(data.day2.iter().cloned());
                let path = out_dir.join(format!("features_{}.csv", policy.name()));
                classifier::export_features(&model.network, &ex, &path).context(|| "features".into())?;
            }
            table.rows.push(ResultRow {
                policy,
                day1_acc: d1,
                day2_acc: d2,
            });
        }
        per_seed.push((s, table));
    }
    let tables: Vec<ResultTable> = per_seed.iter().map(|(_, t)| t.clone()).collect();
    let report = ExperimentReport {
        table: ResultTable::mean(&tables),
        per_seed,
    };
    write_report(cfg, &report, out_dir)?;
    Ok(report)
}

fn write_report(cfg: &ExperimentConfig, report: &ExperimentReport, out_dir: &Path) -> Result<()> {
    let write = |name: &str, text: &str| {
        let p = out_dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("results.csv", &report.table.to_csv())?;
    let mut per = String::from("seed,policy,day1_acc,day2_acc\n");
    for (s, t) in &report.per_seed {
        for r in &t.rows {
            let _ = writeln!(per, "{s},{},{:.6},{:.6}", r.policy, r.day1_acc, r.day2_acc);
        }
    }
    write("results_per_seed.csv", &per)?;
    let header = format!(
        "day1: train on {}/{} bursts per (tx, kind), held-out {}; day2: all bursts\n\
         seeds {:?}, {} epochs, window {}, stride {}",
        cfg.bursts_per_class - cfg.holdout_bursts(),
        cfg.bursts_per_class,
        cfg.holdout_bursts(),
        cfg.seeds,
        cfg.net.epochs,
        cfg.window_len,
        cfg.stride
    );
    write("results.txt", &report.table.to_text(&header))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.holdout_bursts(), 1);
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn identical_days_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.day2 = cfg.day1.clone();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn result_csv_round_trip() {
        let t = ResultTable {
            rows: vec![
                ResultRow {
                    policy: AugmentationPolicy::NoAug,
                    day1_acc: 0.99,
                    day2_acc: 0.5,
                },
                ResultRow {
                    policy: AugmentationPolicy::DecoupledCdlTdl,
                    day1_acc: 0.97,
                    day2_acc: 0.625,
                },
            ],
        };
        assert_eq!(ResultTable::from_csv(&t.to_csv()).unwrap(), t);
        assert!(ResultTable::from_csv("a,b\n").is_err());
        assert!(matches!(
            ResultTable::from_csv("policy,day1_acc,day2_acc\nno-aug,x,0.1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn mean_of_tables() {
        let row = |a, b| ResultTable {
            rows: vec![ResultRow {
                policy: AugmentationPolicy::NoAug,
                day1_acc: a,
                day2_acc: b,
            }],
        };
        let m = ResultTable::mean(&[row(1.0, 0.5), row(0.5, 0.25)]);
        assert_eq!(m.rows[0].day1_acc, 0.75);
        assert_eq!(m.rows[0].day2_acc, 0.375);
    }
}

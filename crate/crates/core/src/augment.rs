//! Waveform-aware augmentation policies and dataset expansion.
//!
//! A policy routes each waveform kind to a CDL transform, a TDL transform, or
//! passthrough. Routed recordings get `copies_per_example` channel-impaired
//! copies, each from its own seeded draw, with AWGN added after the channel.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelConfig, ChannelModel, Family, ProfileId};
use crate::error::{Error, Result, ResultExt};
use crate::iq::{self, IqBuffer};
use crate::manifest::{self, DatasetManifest, Day, ManifestRecord, Provenance, RecordingMeta, WaveformKind};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AugmentationPolicy {
    NoAug,
    UniformTdl,
    UniformCdl,
    FiveGOnlyCdl,
    WifiOnlyTdl,
    DecoupledCdlTdl,
}

impl AugmentationPolicy {
    pub const ALL: [AugmentationPolicy; 6] = [
        AugmentationPolicy::NoAug,
        AugmentationPolicy::UniformTdl,
        AugmentationPolicy::UniformCdl,
        AugmentationPolicy::FiveGOnlyCdl,
        AugmentationPolicy::WifiOnlyTdl,
        AugmentationPolicy::DecoupledCdlTdl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AugmentationPolicy::NoAug => "no-aug",
            AugmentationPolicy::UniformTdl => "uniform-tdl",
            AugmentationPolicy::UniformCdl => "uniform-cdl",
            AugmentationPolicy::FiveGOnlyCdl => "5g-only-cdl",
            AugmentationPolicy::WifiOnlyTdl => "wifi-only-tdl",
            AugmentationPolicy::DecoupledCdlTdl => "decoupled-cdl-tdl",
        }
    }

    /// True if at least one waveform kind is routed to `family`.
    pub fn uses(self, family: Family) -> bool {
        WaveformKind::ALL
            .iter()
            .any(|&k| select_transform(self, k).family() == Some(family))
    }
}

impl fmt::Display for AugmentationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugmentationPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim().to_ascii_lowercase();
        AugmentationPolicy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown policy `{s}`"))
    }
}

impl TryFrom<String> for AugmentationPolicy {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<AugmentationPolicy> for String {
    fn from(p: AugmentationPolicy) -> String {
        p.name().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transform {
    Cdl,
    Tdl,
    Passthrough,
}

impl Transform {
    pub fn family(self) -> Option<Family> {
        match self {
            Transform::Cdl => Some(Family::Cdl),
            Transform::Tdl => Some(Family::Tdl),
            Transform::Passthrough => None,
        }
    }
}

pub fn select_transform(policy: AugmentationPolicy, kind: WaveformKind) -> Transform {
    use AugmentationPolicy::*;
    use WaveformKind::*;
    match (policy, kind) {
        (NoAug, _) => Transform::Passthrough,
        (UniformTdl, _) => Transform::Tdl,
        (UniformCdl, _) => Transform::Cdl,
        (FiveGOnlyCdl, FiveG) => Transform::Cdl,
        (FiveGOnlyCdl, _) => Transform::Passthrough,
        (WifiOnlyTdl, Wifi) => Transform::Tdl,
        (WifiOnlyTdl, _) => Transform::Passthrough,
        (DecoupledCdlTdl, FiveG) => Transform::Cdl,
        (DecoupledCdlTdl, Wifi) => Transform::Tdl,
        (DecoupledCdlTdl, Lte) => Transform::Passthrough,
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64), min_allowed: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= min_allowed) {
        return Err(Error::Config(format!("{name} range ({lo}, {hi}) is invalid")));
    }
    Ok(())
}

fn uniform(rng: &mut seed::Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// A distribution of channel conditions: models to pick from and ranges for
/// delay spread, Doppler and SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSet {
    pub models: Vec<ChannelModel>,
    pub ds_range_s: (f64, f64),
    pub doppler_range_hz: (f64, f64),
    pub snr_range_db: (f64, f64),
}

/// One concrete channel condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelDraw {
    pub model: ChannelModel,
    pub config: ChannelConfig,
}

impl ChannelDraw {
    pub fn apply(&self, x: &IqBuffer) -> Result<IqBuffer> {
        channel::transmit(x, self.model, &self.config)
    }
}

impl ConditionSet {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("condition set has no channel models".into()));
        }
        check_range("delay spread", self.ds_range_s, 0.0)?;
        check_range("doppler", self.doppler_range_hz, 0.0)?;
        check_range("snr", self.snr_range_db, f64::NEG_INFINITY)
    }

    pub fn draw(&self, seed_value: u64, sample_rate_hz: f64) -> ChannelDraw {
        draw_from(&self.models, self.ds_range_s, self.doppler_range_hz, self.snr_range_db, seed_value, sample_rate_hz)
    }
}

fn draw_from(
    models: &[ChannelModel],
    ds: (f64, f64),
    doppler: (f64, f64),
    snr: (f64, f64),
    seed_value: u64,
    sample_rate_hz: f64,
) -> ChannelDraw {
    let mut rng = seed::rng(seed_value);
    let model = models[rng.gen_range(0..models.len())];
    let delay_spread_s = uniform(&mut rng, ds);
    let max_doppler_hz = uniform(&mut rng, doppler);
    let snr_db = uniform(&mut rng, snr);
    ChannelDraw {
        model,
        config: ChannelConfig {
            delay_spread_s,
            max_doppler_hz,
            sample_rate_hz,
            snr_db: Some(snr_db),
            seed: seed::mix(seed_value, 1),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationPlan {
    pub policy: AugmentationPolicy,
    pub copies_per_example: usize,
    pub tdl_ids: Vec<ProfileId>,
    pub cdl_ids: Vec<ProfileId>,
    pub ds_range_s: (f64, f64),
    pub doppler_range_hz: (f64, f64),
    pub snr_range_db: (f64, f64),
    pub master_seed: u64,
}

impl Default for AugmentationPlan {
    fn default() -> Self {
        Self {
            policy: AugmentationPolicy::DecoupledCdlTdl,
            copies_per_example: 4,
            tdl_ids: vec![ProfileId::A, ProfileId::B, ProfileId::C],
            cdl_ids: vec![ProfileId::A, ProfileId::B, ProfileId::C],
            ds_range_s: (30e-9, 300e-9),
            doppler_range_hz: (0.0, 10.0),
            snr_range_db: (10.0, 25.0),
            master_seed: 0,
        }
    }
}

impl AugmentationPlan {
    pub fn with_policy(policy: AugmentationPolicy) -> Self {
        Self {
            policy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.copies_per_example == 0 {
            return Err(Error::Config("copies_per_example must be positive".into()));
        }
        if self.policy.uses(Family::Tdl) && self.tdl_ids.is_empty() {
            return Err(Error::Config(format!("policy {} needs tdl_ids", self.policy)));
        }
        if self.policy.uses(Family::Cdl) && self.cdl_ids.is_empty() {
            return Err(Error::Config(format!("policy {} needs cdl_ids", self.policy)));
        }
        check_range("ds_range_s", self.ds_range_s, 0.0)?;
        check_range("doppler_range_hz", self.doppler_range_hz, 0.0)?;
        check_range("snr_range_db", self.snr_range_db, f64::NEG_INFINITY)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).context(|| format!("plan {}", path.display()))
    }

    fn models(&self, family: Family) -> Vec<ChannelModel> {
        match family {
            Family::Tdl => self.tdl_ids.iter().map(|&id| ChannelModel::tdl(id)).collect(),
            Family::Cdl => self.cdl_ids.iter().map(|&id| ChannelModel::cdl(id)).collect(),
        }
    }

    /// Seed of copy `copy` of item `item_index`.
    pub fn copy_seed(&self, item_index: u64, copy: usize) -> u64 {
        seed::mix(seed::mix(self.master_seed, item_index), copy as u64)
    }
}

/// Channel-impaired copies of one original recording.
///
/// Returns an empty list when the policy routes the recording's waveform kind
/// to passthrough.
pub fn augment_recording(
    x: &IqBuffer,
    meta: &RecordingMeta,
    plan: &AugmentationPlan,
    item_index: u64,
) -> Result<Vec<(IqBuffer, RecordingMeta)>> {
    plan.validate()?;
    if meta.provenance != Provenance::Original {
        return Err(Error::Validation("only original recordings can be augmented".into()));
    }
    let Some(family) = select_transform(plan.policy, meta.waveform).family() else {
        return Ok(Vec::new());
    };
    let models = plan.models(family);
    (0..plan.copies_per_example)
        .map(|copy| {
            let s = plan.copy_seed(item_index, copy);
            let draw = draw_from(
                &models,
                plan.ds_range_s,
                plan.doppler_range_hz,
                plan.snr_range_db,
                s,
                x.sample_rate_hz(),
            );
            let y = draw.apply(x)?;
            let meta = RecordingMeta {
                provenance: Provenance::Augmented {
                    policy: plan.policy.name().to_string(),
                    seed: s,
                },
                ..meta.clone()
            };
            Ok((y, meta))
        })
        .collect()
}

/// Expands a Day-1 dataset. Originals keep their files; augmented copies are
/// written under `out_dir/aug/`. The returned manifest lists originals then
/// their copies, in input order, with paths relative to `out_dir`, and is
/// also written to `out_dir/manifest.csv`.
pub fn augment_dataset(
    manifest: &DatasetManifest,
    base_dir: &Path,
    plan: &AugmentationPlan,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    plan.validate()?;
    manifest.check()?;
    if let Some(r) = manifest.records.iter().find(|r| r.meta.day != Day::Day1) {
        return Err(Error::Validation(format!(
            "augmentation is restricted to Day-1 data, found {} for {}",
            r.meta.day,
            r.path.display()
        )));
    }
    let aug_dir = out_dir.join("aug");
    fs::create_dir_all(&aug_dir).map_err(|e| Error::io(&aug_dir, e))?;

    let copies: Vec<Vec<ManifestRecord>> = manifest
        .records
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            let run = || -> Result<Vec<ManifestRecord>> {
                if select_transform(plan.policy, rec.meta.waveform) == Transform::Passthrough {
                    return Ok(Vec::new());
                }
                let x = manifest.load(base_dir, rec)?;
                let stem = rec
                    .path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                augment_recording(&x, &rec.meta, plan, i as u64)?
                    .into_iter()
                    .enumerate()
                    .map(|(c, (y, meta))| {
                        let rel = PathBuf::from("aug").join(format!("{i:04}_{stem}_c{c}.bin"));
                        iq::write_iq_bin(&y, out_dir.join(&rel))?;
                        Ok(ManifestRecord { path: rel, meta })
                    })
                    .collect()
            };
            run().context(|| format!("augmenting record {i} ({})", rec.path.display()))
        })
        .collect::<Result<_>>()?;

    let mut out = DatasetManifest {
        header: manifest.header.clone(),
        records: manifest
            .records
            .iter()
            .map(|r| ManifestRecord {
                path: rebase(base_dir, &r.path, out_dir),
                meta: r.meta.clone(),
            })
            .collect(),
    };
    out.records.extend(copies.into_iter().flatten());
    manifest::write_manifest(&out, out_dir.join("manifest.csv"))?;
    Ok(out)
}

/// Expresses `base_dir/path` relative to `out_dir` where possible.
fn rebase(base_dir: &Path, path: &Path, out_dir: &Path) -> PathBuf {
    let target = manifest::resolve(base_dir, path);
    let abs = |p: &Path| fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    pathdiff::diff_paths(abs(&target), abs(out_dir)).unwrap_or(target)
}

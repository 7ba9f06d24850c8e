//! Synthetic site generator.
//!
//! Per row, in this order: one uniform decides the label (positive when
//! below [`POSITIVE_PRIOR`]); four Gaussians give the features, each
//! `±CLASS_MEAN + noise + shift * SHIFT_DIRECTION[j]`; one more uniform
//! flips the label when below `label_noise`. The last draw happens even
//! when `label_noise` is zero so the stream does not depend on it.

use std::fs;
use std::io;
use std::path::Path;

use crate::rng::SplitMix64;
use crate::{fmt_value, FEATURES};

pub const POSITIVE_PRIOR: f64 = 0.4;
pub const CLASS_MEAN: f64 = 0.75;
pub const SHIFT_DIRECTION: [f64; FEATURES] = [2.0, -1.5, 1.0, 0.5];
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteConfig {
    pub seed: u64,
    pub n: usize,
    pub shift: f64,
    pub label_noise: f64,
}

impl SiteConfig {
    pub fn new(seed: u64, n: usize, shift: f64) -> Self {
        SiteConfig {
            seed,
            n,
            shift,
            label_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteData {
    pub features: Vec<[f64; FEATURES]>,
    pub labels: Vec<u8>,
}

pub fn generate(cfg: &SiteConfig) -> SiteData {
    let mut rng = SplitMix64::new(cfg.seed);
    let mut features = Vec::with_capacity(cfg.n);
    let mut labels = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let positive = rng.next_f64() < POSITIVE_PRIOR;
        let mean = if positive { CLASS_MEAN } else { -CLASS_MEAN };
        let mut row = [0.0; FEATURES];
        for (j, x) in row.iter_mut().enumerate() {
            *x = mean + rng.next_gaussian() + cfg.shift * SHIFT_DIRECTION[j];
        }
        let flip = rng.next_f64() < cfg.label_noise;
        features.push(row);
        labels.push(u8::from(positive != flip));
    }
    SiteData { features, labels }
}

/// Writes `features.csv` and `labels.csv`. With a sentinel, every feature
/// row gets a `record_id` column `<sentinel>-<row>`, standing in for the
/// identifying data a real site would hold.
pub fn write_site(cfg: &SiteConfig, dir: &Path, sentinel: Option<&str>) -> io::Result<SiteData> {
    let data = generate(cfg);
    fs::create_dir_all(dir)?;
    let mut features = csv::Writer::from_path(dir.join(FEATURES_FILE))?;
    let mut header: Vec<String> = (0..FEATURES).map(|j| format!("f{j}")).collect();
    if sentinel.is_some() {
        header.push("record_id".into());
    }
    features.write_record(&header)?;
    for (i, row) in data.features.iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|&v| fmt_value(v)).collect();
        if let Some(s) = sentinel {
            rec.push(format!("{s}-{i}"));
        }
        features.write_record(&rec)?;
    }
    features.flush()?;
    let mut labels = csv::Writer::from_path(dir.join(LABELS_FILE))?;
    labels.write_record(["label"])?;
    for l in &data.labels {
        labels.write_record([l.to_string()])?;
    }
    labels.flush()?;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sized() {
        let cfg = SiteConfig::new(1, 100, 0.0);
        assert_eq!(generate(&cfg), generate(&cfg));
        assert_eq!(generate(&SiteConfig::new(1, 1, 0.0)).labels.len(), 1);
        assert_ne!(generate(&cfg), generate(&SiteConfig::new(2, 100, 0.0)));
    }

    #[test]
    fn noise_flips_without_moving_features() {
        let clean = generate(&SiteConfig::new(3, 500, 0.2));
        let noisy = generate(&SiteConfig {
            label_noise: 0.5,
            ..SiteConfig::new(3, 500, 0.2)
        });
        assert_eq!(clean.features, noisy.features);
        let flips = clean
            .labels
            .iter()
            .zip(&noisy.labels)
            .filter(|(a, b)| a != b)
            .count();
        assert!((150..350).contains(&flips), "{flips}");
    }
}

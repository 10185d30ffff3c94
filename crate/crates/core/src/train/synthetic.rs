//! Synthetic ladders for desk-scale training and tests.
//!
//! Originals are smooth random colour patterns with a per-ladder amount of
//! fine texture. Rung `k` blends in a 3x3 box blur with weight `(k - 1) / 5`
//! (capped at 1) and quantizes with step `2k + 2`, so quality falls with `k`
//! at a content-dependent rate.
//! A simulated human panel and machine population judge each rung by its
//! PSNR against per-subject tolerances, giving learnable SUR and SMR curves.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::data::{curve_values, merge_labels, Dataset, Labels};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::image::RasterImage;
use crate::io::{tables, write_manifest, Manifest};
use crate::labelgen::{proxy_sur_all, psnr, ssim, BuiltinScorer, LabelGenConfig, ProxyLabelSet, ScoreTable, ScorerOrigin};
use crate::model::BackboneConfig;
use crate::quality::{
    ratio_curve, simulate_machine_population, MachinePopulation, QualityLadder, RatioCurve, RatioKind, Rung,
    SatisfactionRecord, SubjectKind,
};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub ladders: usize,
    pub rungs: usize,
    pub width: usize,
    pub height: usize,
    pub panel_size: usize,
    pub machines: usize,
    /// Random verdict flips in the machine population.
    pub flip_rate: f64,
    /// Human tolerance distribution (PSNR in dB).
    pub human_mean_db: f64,
    pub human_std_db: f64,
    /// Machine tolerance distribution (PSNR in dB).
    pub machine_mean_db: f64,
    pub machine_std_db: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            ladders: 8,
            rungs: 6,
            width: 64,
            height: 64,
            panel_size: 24,
            machines: 16,
            flip_rate: 0.0,
            human_mean_db: 37.0,
            human_std_db: 3.0,
            machine_mean_db: 34.0,
            machine_std_db: 4.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticLadder {
    pub ladder: QualityLadder,
    pub original: RasterImage,
    pub rungs: Vec<RasterImage>,
    pub psnr: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub spec: SyntheticSpec,
    pub items: Vec<SyntheticLadder>,
    pub human: Vec<SatisfactionRecord>,
    pub machine: Vec<SatisfactionRecord>,
    /// Built-in PSNR and SSIM scores for every rung.
    pub scores: ScoreTable,
}

const PSNR_CAP: f64 = 100.0;

fn original_image(rng: &mut impl Rng, w: usize, h: usize) -> RasterImage {
    let base: Vec<f64> = (0..3).map(|_| rng.random_range(60.0..190.0)).collect();
    let waves: Vec<(f64, f64, f64, f64, [f64; 3])> = (0..4)
        .map(|_| {
            (
                rng.random_range(10.0..45.0),
                rng.random_range(-0.12..0.12),
                rng.random_range(-0.12..0.12),
                rng.random_range(0.0..2.0 * PI),
                [rng.random_range(0.5..1.5), rng.random_range(0.5..1.5), rng.random_range(0.5..1.5)],
            )
        })
        .collect();
    let texture = rng.random_range(0.0..24.0);
    let mut data = vec![0.0; 3 * w * h];
    for y in 0..h {
        for x in 0..w {
            let noise = texture * rng.random_range(-1.0..1.0);
            for c in 0..3 {
                let mut v = base[c] + noise;
                for (a, fx, fy, ph, mix) in &waves {
                    v += a * mix[c] * (2.0 * PI * (fx * x as f64 + fy * y as f64) + ph).sin();
                }
                data[c * w * h + y * w + x] = v.clamp(0.0, 255.0).round();
            }
        }
    }
    RasterImage::new(w, h, 3, data).expect("consistent dimensions")
}

fn box_blur(img: &RasterImage, radius: usize) -> RasterImage {
    if radius == 0 {
        return img.clone();
    }
    let (w, h) = (img.width, img.height);
    let r = radius as isize;
    let mut data = vec![0.0; img.data.len()];
    for c in 0..img.channels {
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut sum = 0.0;
                let mut n = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (yy, xx) = (y + dy, x + dx);
                        if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                            sum += img.at(c, yy as usize, xx as usize);
                            n += 1.0;
                        }
                    }
                }
                data[c * w * h + y as usize * w + x as usize] = sum / n;
            }
        }
    }
    RasterImage::new(w, h, img.channels, data).expect("same dimensions")
}

/// The distortion applied at rung `k` (1-based).
pub fn distort(img: &RasterImage, k: usize) -> RasterImage {
    let blurred = box_blur(img, 1);
    let a = ((k - 1) as f64 / 5.0).min(1.0);
    let step = (2 * k + 2) as f64;
    let data = img
        .data
        .iter()
        .zip(&blurred.data)
        .map(|(v, b)| {
            let mixed = (1.0 - a) * v + a * b;
            ((mixed / step).round() * step).clamp(0.0, 255.0)
        })
        .collect();
    RasterImage::new(img.width, img.height, img.channels, data).expect("same dimensions")
}

fn tolerances(rng: &mut impl Rng, n: usize, mean: f64, std: f64) -> Result<Vec<f64>> {
    let dist = Normal::new(mean, std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

/// Count of leading rungs whose PSNR meets `tolerance`.
fn prefix_threshold(psnr: &[f64], tolerance: f64) -> u32 {
    psnr.iter().take_while(|&&p| p >= tolerance).count() as u32
}

impl SyntheticData {
    pub fn generate(spec: &SyntheticSpec, exec: Exec) -> Result<Self> {
        if spec.ladders == 0 || spec.rungs == 0 || spec.width < 11 || spec.height < 11 {
            return Err(Error::InvalidConfig(
                "synthetic data needs ladders, rungs and images of at least 11x11".into(),
            ));
        }
        let items = exec.map_indexed(spec.ladders, |i| -> Result<SyntheticLadder> {
            let mut rng = seed::rng(spec.seed, &[seed::hash_str("synthetic"), i as u64]);
            let id = format!("syn{i:03}");
            let original = original_image(&mut rng, spec.width, spec.height);
            let rungs: Vec<RasterImage> = (1..=spec.rungs).map(|k| distort(&original, k)).collect();
            let psnr = rungs
                .iter()
                .map(|r| psnr(&original, r, PSNR_CAP))
                .collect::<Result<Vec<_>>>()?;
            let ladder = QualityLadder::new(
                id.clone(),
                format!("images/{id}_orig.png"),
                "synthetic",
                (1..=spec.rungs)
                    .map(|k| Rung {
                        rung_index: k as u32,
                        q_param: 10 * k as i64,
                        image_ref: format!("images/{id}_r{k}.png"),
                    })
                    .collect(),
            )?;
            Ok(SyntheticLadder {
                ladder,
                original,
                rungs,
                psnr,
            })
        });
        let items = items.into_iter().collect::<Result<Vec<_>>>()?;

        let mut rng = seed::rng(spec.seed, &[seed::hash_str("panel")]);
        let human_tol = tolerances(&mut rng, spec.panel_size, spec.human_mean_db, spec.human_std_db)?;
        let machine_tol = tolerances(&mut rng, spec.machines, spec.machine_mean_db, spec.machine_std_db)?;

        let mut human = Vec::new();
        let mut machine = Vec::new();
        let mut scores = ScoreTable::default();
        for item in &items {
            let l = &item.ladder;
            for (s, tol) in human_tol.iter().enumerate() {
                for (k, p) in item.psnr.iter().enumerate() {
                    human.push(SatisfactionRecord {
                        ladder_id: l.ladder_id.clone(),
                        rung_index: k as u32 + 1,
                        subject_id: format!("human_{:03}", s + 1),
                        subject_kind: SubjectKind::Human,
                        satisfied: *p >= *tol,
                    });
                }
            }
            let population = MachinePopulation::new(
                machine_tol.iter().map(|&t| prefix_threshold(&item.psnr, t)).collect(),
                spec.flip_rate,
            );
            machine.extend(simulate_machine_population(l, &population, spec.seed)?);
            for (k, r) in item.rungs.iter().enumerate() {
                let rung = k as u32 + 1;
                for (scorer, value) in [
                    (BuiltinScorer::Psnr, item.psnr[k]),
                    (BuiltinScorer::Ssim, ssim(&item.original, r)?),
                ] {
                    scores.insert_with_origin(
                        &l.ladder_id,
                        rung,
                        scorer.id(),
                        value,
                        scorer.polarity(),
                        ScorerOrigin::Builtin,
                    )?;
                }
            }
        }
        Ok(SyntheticData {
            spec: spec.clone(),
            items,
            human,
            machine,
            scores,
        })
    }

    pub fn ladders(&self) -> Vec<QualityLadder> {
        self.items.iter().map(|i| i.ladder.clone()).collect()
    }

    pub fn curves(&self, kind: RatioKind) -> Result<Vec<RatioCurve>> {
        let records = match kind {
            RatioKind::Sur => &self.human,
            RatioKind::Smr => &self.machine,
        };
        self.items.iter().map(|i| ratio_curve(&i.ladder, records, kind)).collect()
    }

    pub fn proxy_labels(&self, scorers: &[BuiltinScorer]) -> Result<ProxyLabelSet> {
        let all = self.scores.scorers();
        let chosen: Vec<_> = all
            .into_iter()
            .filter(|d| scorers.iter().any(|s| s.id() == d.scorer_id))
            .collect();
        proxy_sur_all(&self.scores, &chosen, &self.ladders(), &LabelGenConfig::default(), Exec::Sequential)
    }

    /// Ground-truth SUR and SMR targets.
    pub fn ground_truth(&self) -> Result<Labels> {
        let sur = curve_values(&self.curves(RatioKind::Sur)?);
        let smr = curve_values(&self.curves(RatioKind::Smr)?);
        Ok(merge_labels(Some(&sur), Some(&smr)))
    }

    /// Proxy SUR (from `scorers`) plus SMR targets, as used for pre-training.
    pub fn proxy_targets(&self, scorers: &[BuiltinScorer]) -> Result<Labels> {
        let sur = self.proxy_labels(scorers)?.labels;
        let smr = curve_values(&self.curves(RatioKind::Smr)?);
        Ok(merge_labels(Some(&sur), Some(&smr)))
    }

    pub fn dataset(&self, labels: &Labels, backbone: &BackboneConfig, exec: Exec) -> Result<Dataset> {
        let originals: Vec<RasterImage> = self.items.iter().map(|i| i.original.clone()).collect();
        let rungs: Vec<Vec<RasterImage>> = self.items.iter().map(|i| i.rungs.clone()).collect();
        Dataset::from_images(&self.ladders(), &originals, &rungs, labels, backbone, exec)
    }

    /// Writes `manifest.json`, `images/*.png`, `human.csv`, `machine.csv` and
    /// `scores.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        let images = dir.join("images");
        std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
        for item in &self.items {
            item.original.save_png(&dir.join(&item.ladder.original_ref))?;
            for (rung, img) in item.ladder.rungs.iter().zip(&item.rungs) {
                img.save_png(&dir.join(&rung.image_ref))?;
            }
        }
        write_manifest(&dir.join("manifest.json"), &Manifest::new(self.ladders())?)?;
        tables::write_records(&dir.join("human.csv"), &self.human)?;
        tables::write_records(&dir.join("machine.csv"), &self.machine)?;
        self.scores.write(&dir.join("scores.csv"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            ladders: 3,
            rungs: 4,
            width: 32,
            height: 32,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_and_degrading() {
        let a = SyntheticData::generate(&small(), Exec::Sequential).unwrap();
        let b = SyntheticData::generate(&small(), Exec::Parallel).unwrap();
        assert_eq!(a.human, b.human);
        assert_eq!(a.machine, b.machine);
        for item in &a.items {
            assert!(item.psnr[0] > item.psnr[3], "{:?}", item.psnr);
            assert!(item.original.data.iter().all(|v| v.fract() == 0.0));
        }
        let sur = a.curves(RatioKind::Sur).unwrap();
        assert_eq!(sur.len(), 3);
        assert_eq!(sur[0].population_size, 24);
    }

    #[test]
    fn write_dir_roundtrips_images() {
        let data = SyntheticData::generate(&small(), Exec::Sequential).unwrap();
        let dir = tempfile::tempdir().unwrap();
        data.write_dir(dir.path()).unwrap();
        let back = RasterImage::load(&dir.path().join(&data.items[0].ladder.rungs[1].image_ref)).unwrap();
        assert_eq!(back.data, data.items[0].rungs[1].data);
        let m = crate::io::read_manifest(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(m.ladders, data.ladders());
    }
}

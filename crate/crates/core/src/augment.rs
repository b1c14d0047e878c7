//! Corpus augmentation: mirrored copies and contrast-adjusted copies.

use serde::{Deserialize, Serialize};

use crate::corpus::{BodyPartAnnotation, FrameImage, Point, SampleRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub contrast_factor: f32,
    pub enabled: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            contrast_factor: 1.5,
            enabled: true,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.contrast_factor > 0.0 && self.contrast_factor.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "contrast factor must be positive, got {}",
                self.contrast_factor
            )));
        }
        Ok(())
    }
}

/// Mirrors a frame left to right.
pub fn hflip(frame: &FrameImage) -> FrameImage {
    let w = frame.width();
    FrameImage::from_fn(frame.height(), w, frame.channels(), |y, x, c| {
        frame.get(y, w - 1 - x, c)
    })
}

/// Scales every channel's deviation from its mean by `factor`, clamped to
/// `[0, 1]`.
pub fn adjust_contrast(frame: &FrameImage, factor: f32) -> FrameImage {
    let (h, w, c) = frame.dims();
    let n = (h * w) as f64;
    let means: Vec<f32> = (0..c)
        .map(|ch| {
            let sum: f64 = frame.data()[ch..].iter().step_by(c).map(|&v| f64::from(v)).sum();
            (sum / n) as f32
        })
        .collect();
    FrameImage::from_fn(h, w, c, |y, x, ch| {
        let m = means[ch];
        m + factor * (frame.get(y, x, ch) - m)
    })
}

fn mirror(p: Point, width: u32) -> Point {
    Point::new(width - 1 - p.x, p.y)
}

fn flip_record(r: &SampleRecord) -> SampleRecord {
    let width = r.frames[0].width() as u32;
    SampleRecord {
        name: format!("{}_flip", r.name),
        frames: r.frames.iter().map(hflip).collect(),
        // Mirroring swaps the anatomical sides.
        annotations: r
            .annotations
            .iter()
            .map(|a| BodyPartAnnotation {
                frame_index: a.frame_index,
                right_hand: mirror(a.left_hand, width),
                left_hand: mirror(a.right_hand, width),
                nose: mirror(a.nose, width),
            })
            .collect(),
        ..r.clone()
    }
}

fn contrast_record(r: &SampleRecord, factor: f32) -> SampleRecord {
    SampleRecord {
        name: format!("{}_contrast", r.name),
        frames: r.frames.iter().map(|f| adjust_contrast(f, factor)).collect(),
        ..r.clone()
    }
}

/// Originals, then flipped copies, then contrast copies (`3·n` records).
/// With `enabled = false` the input is returned unchanged.
pub fn augment_corpus(records: &[SampleRecord], cfg: &AugmentConfig) -> Result<Vec<SampleRecord>> {
    cfg.validate()?;
    if !cfg.enabled {
        return Ok(records.to_vec());
    }
    let mut out = Vec::with_capacity(3 * records.len());
    out.extend_from_slice(records);
    out.extend(records.iter().map(flip_record));
    out.extend(records.iter().map(|r| contrast_record(r, cfg.contrast_factor)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::tiny_record;
    use proptest::prelude::*;

    #[test]
    fn flip_reverses_columns() {
        let f = FrameImage::new(1, 3, 1, vec![1.0 / 3.0, 2.0 / 3.0, 1.0]).unwrap();
        assert_eq!(hflip(&f).data(), [1.0, 2.0 / 3.0, 1.0 / 3.0]);
        let sym = FrameImage::new(1, 3, 1, vec![0.2, 0.7, 0.2]).unwrap();
        assert_eq!(hflip(&sym), sym);
    }

    #[test]
    fn flip_keeps_channels_together() {
        let f = FrameImage::new(1, 2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(hflip(&f).data(), [0.4, 0.5, 0.6, 0.1, 0.2, 0.3]);
    }

    #[test]
    fn contrast_examples() {
        let f = FrameImage::new(1, 2, 1, vec![0.25, 0.75]).unwrap();
        assert_eq!(adjust_contrast(&f, 2.0).data(), [0.0, 1.0]);
        let flat = FrameImage::filled(3, 3, 3, 0.4);
        assert_eq!(adjust_contrast(&flat, 7.0), flat);
    }

    #[test]
    fn single_record_triples_with_suffixes() {
        let r = tiny_record("n", &["A"], 2);
        let out = augment_corpus(&[r], &AugmentConfig::default()).unwrap();
        let names: Vec<_> = out.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["n", "n_flip", "n_contrast"]);
        assert!(out.iter().all(|o| o.gloss == out[0].gloss && o.text == out[0].text));
    }

    #[test]
    fn flipped_annotations_mirror_and_swap() {
        let mut r = tiny_record("n", &["A"], 1);
        r.frames = vec![FrameImage::filled(4, 100, 1, 0.5)];
        r.annotations[0].left_hand = Point::new(10, 2);
        r.annotations[0].right_hand = Point::new(70, 1);
        let out = augment_corpus(&[r], &AugmentConfig::default()).unwrap();
        let flipped = &out[1].annotations[0];
        assert_eq!(flipped.right_hand, Point::new(89, 2));
        assert_eq!(flipped.left_hand, Point::new(29, 1));
        out[1].validate().unwrap();
    }

    #[test]
    fn invalid_factor_rejected() {
        let cfg = AugmentConfig {
            contrast_factor: 0.0,
            enabled: true,
        };
        assert!(augment_corpus(&[], &cfg).is_err());
    }

    #[test]
    fn disabled_is_identity() {
        let r = vec![tiny_record("n", &["A"], 1)];
        let cfg = AugmentConfig {
            enabled: false,
            ..Default::default()
        };
        assert_eq!(augment_corpus(&r, &cfg).unwrap(), r);
    }

    proptest! {
        #[test]
        fn flip_is_involution(d in prop::collection::vec(0.0f32..=1.0, 24)) {
            let f = FrameImage::new(2, 4, 3, d).unwrap();
            prop_assert_eq!(hflip(&hflip(&f)), f);
        }

        #[test]
        fn unit_contrast_is_identity(d in prop::collection::vec(0.0f32..=1.0, 16)) {
            let f = FrameImage::new(4, 4, 1, d).unwrap();
            let g = adjust_contrast(&f, 1.0);
            for (a, b) in f.data().iter().zip(g.data()) {
                prop_assert!((a - b).abs() <= 1e-7);
            }
        }

        #[test]
        fn output_triples(n in 0usize..6) {
            let recs: Vec<_> = (0..n).map(|i| tiny_record(&format!("r{i}"), &["A"], 1)).collect();
            prop_assert_eq!(augment_corpus(&recs, &AugmentConfig::default()).unwrap().len(), 3 * n);
        }
    }
}

//! Synthetic corpora with controlled homonyms.
//!
//! Every gloss draws a coarse block pattern in both hand regions and a fine
//! stripe pattern in the mouth region. Members of a homonym pair share the
//! hand pattern and differ only in the mouth pattern. All mouth patterns have
//! the same mean over every aligned `2·stripe` block, so once a full frame is
//! average-pooled with cells of at least `2·stripe` pixels the pair members
//! look identical; a zoomed mouth crop keeps them apart.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BodyPartAnnotation, FrameImage, Point, SampleRecord};
use crate::{rng, Error, Result};

const BACKGROUND: f32 = 0.5;
const HAND_LO: f32 = 0.1;
const HAND_HI: f32 = 0.9;
const MOUTH_LO: f32 = 0.2;
const MOUTH_HI: f32 = 0.8;
const MOUTH_PATTERNS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Gloss inventory.
    pub glosses: Vec<String>,
    /// Spoken word for each gloss (same order as `glosses`).
    pub words: Vec<String>,
    /// Pairs of glosses rendered with identical hands.
    pub homonym_pairs: Vec<(String, String)>,
    pub frames_per_gloss: usize,
    pub height: usize,
    pub width: usize,
    pub samples: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Uniform pixel noise amplitude.
    pub noise: f32,
    pub signers: usize,
}

impl SyntheticSpec {
    /// Eight weather-domain glosses; `pairs` (0..=2) of them form homonym
    /// pairs.
    pub fn weather(pairs: usize, samples: usize) -> Self {
        let glosses = [
            "REGEN", "SONNE", "WIND", "SCHNEE", "MORGEN", "TAG", "ESSEN", "FRUEHSTUECK",
        ];
        let words = [
            "regen", "sonne", "wind", "schnee", "morgen", "tag", "essen", "fruehstueck",
        ];
        let all_pairs = [("MORGEN", "TAG"), ("ESSEN", "FRUEHSTUECK")];
        Self {
            glosses: glosses.iter().map(|s| s.to_string()).collect(),
            words: words.iter().map(|s| s.to_string()).collect(),
            homonym_pairs: all_pairs
                .iter()
                .take(pairs.min(all_pairs.len()))
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            frames_per_gloss: 2,
            height: 64,
            width: 64,
            samples,
            min_len: 2,
            max_len: 4,
            noise: 0.05,
            signers: 3,
        }
    }

    pub fn geometry(&self) -> SyntheticGeometry {
        SyntheticGeometry::for_frame(self.height, self.width)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.glosses.is_empty() || self.glosses.len() != self.words.len() {
            return bad("glosses and words must be non-empty and equally long".into());
        }
        if self.frames_per_gloss == 0 {
            return bad("frames_per_gloss must be at least 1".into());
        }
        if self.height < 32 || self.width < 32 || !self.height.is_multiple_of(16) || !self.width.is_multiple_of(16) {
            return bad(format!(
                "synthetic frames must be multiples of 16 and at least 32 px, got {}x{}",
                self.height, self.width
            ));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad(format!("invalid length range {}..={}", self.min_len, self.max_len));
        }
        if self.glosses.len() < 2 && self.max_len > 1 {
            return bad("need at least two glosses to avoid adjacent repeats".into());
        }
        if !(0.0..=0.25).contains(&self.noise) {
            return bad(format!("noise amplitude {} outside [0, 0.25]", self.noise));
        }
        if self.signers == 0 {
            return bad("signers must be at least 1".into());
        }
        for (a, b) in &self.homonym_pairs {
            for g in [a, b] {
                if !self.glosses.contains(g) {
                    return bad(format!("homonym pair references unknown gloss `{g}`"));
                }
            }
            if a == b {
                return bad(format!("homonym pair ({a}, {b}) repeats a gloss"));
            }
        }
        Ok(())
    }
}

/// Where the generator draws body parts, derived from the frame size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticGeometry {
    /// Side lengths of every body-part box.
    pub box_w: usize,
    pub box_h: usize,
    /// Width of one mouth stripe.
    pub stripe: usize,
    pub nose: Point,
    pub mouth_center: Point,
    pub right_hand: Point,
    pub left_hand: Point,
}

impl SyntheticGeometry {
    pub fn for_frame(height: usize, width: usize) -> Self {
        let (box_w, box_h) = (width / 4, height / 4);
        let mouth_center = Point::new((width / 2) as u32, (height / 4) as u32);
        Self {
            box_w,
            box_h,
            stripe: (box_w / 8).max(1),
            nose: Point::new(mouth_center.x, (height / 4 - box_h / 4) as u32),
            mouth_center,
            right_hand: Point::new((width / 4) as u32, (3 * height / 4) as u32),
            left_hand: Point::new((3 * width / 4) as u32, (3 * height / 4) as u32),
        }
    }

    /// Top-left corner of the box centred on `c`.
    fn origin(&self, c: Point) -> (usize, usize) {
        (c.y as usize - self.box_h / 2, c.x as usize - self.box_w / 2)
    }
}

#[derive(Debug, Clone, Copy)]
struct GlossStyle {
    hand_code: u8,
    mouth_pattern: usize,
}

fn styles(spec: &SyntheticSpec) -> Vec<GlossStyle> {
    let index: HashMap<&str, usize> = spec
        .glosses
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();
    // Manual form: each gloss its own, except pair partners share the first's.
    let mut form: Vec<usize> = (0..spec.glosses.len()).collect();
    let mut mouth: Vec<usize> = (0..spec.glosses.len()).map(|i| i % MOUTH_PATTERNS).collect();
    for (a, b) in &spec.homonym_pairs {
        let (ia, ib) = (index[a.as_str()], index[b.as_str()]);
        form[ib] = form[ia];
        if mouth[ib] == mouth[ia] {
            mouth[ib] = (mouth[ia] + 1) % MOUTH_PATTERNS;
        }
    }
    form.iter()
        .zip(&mouth)
        .map(|(&f, &m)| GlossStyle {
            // 37 is odd, so distinct forms get distinct 8-bit codes.
            hand_code: ((f * 37 + 11) % 256) as u8,
            mouth_pattern: m,
        })
        .collect()
}

fn mouth_value(pattern: usize, u: usize, v: usize, stripe: usize) -> f32 {
    let (cu, cv) = (u / stripe, v / stripe);
    let on = match pattern % 3 {
        0 => cu % 2 == 0,
        1 => cv % 2 == 0,
        _ => (cu + cv) % 2 == 0,
    };
    if on ^ (pattern >= 3) {
        MOUTH_HI
    } else {
        MOUTH_LO
    }
}

fn render(style: GlossStyle, spec: &SyntheticSpec, geo: &SyntheticGeometry) -> Vec<f32> {
    let (h, w) = (spec.height, spec.width);
    let mut img = vec![BACKGROUND; h * w];
    let (my, mx) = geo.origin(geo.mouth_center);
    for v in 0..geo.box_h {
        for u in 0..geo.box_w {
            img[(my + v) * w + mx + u] = mouth_value(style.mouth_pattern, u, v, geo.stripe);
        }
    }
    // Each hand box is a 2x2 grid of quadrants, one code bit per quadrant.
    for (hand, centre) in [geo.right_hand, geo.left_hand].into_iter().enumerate() {
        let (hy, hx) = geo.origin(centre);
        for v in 0..geo.box_h {
            for u in 0..geo.box_w {
                let quadrant = 2 * (2 * v / geo.box_h) + 2 * u / geo.box_w;
                let bit = (style.hand_code >> (4 * hand + quadrant)) & 1;
                img[(hy + v) * w + hx + u] = if bit == 1 { HAND_HI } else { HAND_LO };
            }
        }
    }
    img
}

/// Generates `spec.samples` records, bit-identical for a given `(spec, seed)`.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec, seed: u64) -> Result<Vec<SampleRecord>> {
    spec.validate()?;
    let geo = spec.geometry();
    let patterns: Vec<Vec<f32>> = styles(spec)
        .into_iter()
        .map(|s| render(s, spec, &geo))
        .collect();
    let mut rng = rng::derived(seed, "synthetic");

    let mut records = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let len = rng.gen_range(spec.min_len..=spec.max_len);
        let mut seq: Vec<usize> = Vec::with_capacity(len);
        while seq.len() < len {
            let g = rng.gen_range(0..spec.glosses.len());
            if seq.last() != Some(&g) {
                seq.push(g);
            }
        }
        let signer = format!("signer{:02}", rng.gen_range(0..spec.signers) + 1);

        let mut frames = Vec::with_capacity(len * spec.frames_per_gloss);
        for &g in &seq {
            for _ in 0..spec.frames_per_gloss {
                let data = patterns[g]
                    .iter()
                    .map(|&v| {
                        let n = if spec.noise > 0.0 {
                            rng.gen_range(-spec.noise..=spec.noise)
                        } else {
                            0.0
                        };
                        (v + n).clamp(0.0, 1.0)
                    })
                    .collect();
                frames.push(FrameImage::new(spec.height, spec.width, 1, data)?);
            }
        }
        let annotations = (0..frames.len() as u32)
            .map(|f| BodyPartAnnotation {
                frame_index: f,
                right_hand: geo.right_hand,
                left_hand: geo.left_hand,
                nose: geo.nose,
            })
            .collect();
        records.push(SampleRecord {
            name: format!("synth_{i:04}"),
            signer,
            frames,
            annotations,
            gloss: seq.iter().map(|&g| spec.glosses[g].clone()).collect(),
            text: seq.iter().map(|&g| spec.words[g].clone()).collect(),
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(f: &FrameImage, c: Point, geo: &SyntheticGeometry) -> Vec<f32> {
        let (y0, x0) = geo.origin(c);
        let mut out = Vec::new();
        for y in y0..y0 + geo.box_h {
            for x in x0..x0 + geo.box_w {
                out.push(f.get(y, x, 0));
            }
        }
        out
    }

    #[test]
    fn six_gloss_example_shapes() {
        let mut spec = SyntheticSpec::weather(1, 20);
        spec.glosses.truncate(6);
        spec.words.truncate(6);
        let recs = generate_synthetic_corpus(&spec, 1).unwrap();
        assert_eq!(recs.len(), 20);
        for r in &recs {
            r.validate().unwrap();
            assert_eq!(r.frames.len(), 2 * r.gloss.len());
            assert_eq!(r.text.len(), r.gloss.len());
            assert!(r.gloss.windows(2).all(|w| w[0] != w[1]));
        }
    }

    #[test]
    fn deterministic() {
        let spec = SyntheticSpec::weather(2, 5);
        assert_eq!(
            generate_synthetic_corpus(&spec, 3).unwrap(),
            generate_synthetic_corpus(&spec, 3).unwrap()
        );
        assert_ne!(
            generate_synthetic_corpus(&spec, 3).unwrap(),
            generate_synthetic_corpus(&spec, 4).unwrap()
        );
    }

    #[test]
    fn unknown_pair_member_rejected() {
        let mut spec = SyntheticSpec::weather(0, 5);
        spec.homonym_pairs.push(("REGEN".into(), "HAGEL".into()));
        assert!(generate_synthetic_corpus(&spec, 0).is_err());
    }

    #[test]
    fn homonym_hands_match_and_mouths_differ() {
        let spec = SyntheticSpec::weather(2, 1);
        let geo = spec.geometry();
        let st = styles(&spec);
        for (a, b) in &spec.homonym_pairs {
            let ia = spec.glosses.iter().position(|g| g == a).unwrap();
            let ib = spec.glosses.iter().position(|g| g == b).unwrap();
            let pa = FrameImage::new(64, 64, 1, render(st[ia], &spec, &geo)).unwrap();
            let pb = FrameImage::new(64, 64, 1, render(st[ib], &spec, &geo)).unwrap();
            for hand in [geo.right_hand, geo.left_hand] {
                assert_eq!(region(&pa, hand, &geo), region(&pb, hand, &geo));
            }
            let (ma, mb) = (region(&pa, geo.mouth_center, &geo), region(&pb, geo.mouth_center, &geo));
            let differing = ma.iter().zip(&mb).filter(|(x, y)| (*x - *y).abs() >= 0.2).count();
            assert!(differing * 10 >= ma.len());
        }
    }

    #[test]
    fn mouth_patterns_share_block_means() {
        let stripe = 2;
        for p in 0..MOUTH_PATTERNS {
            for by in 0..4 {
                for bx in 0..4 {
                    let mut s = 0.0;
                    for v in 0..2 * stripe {
                        for u in 0..2 * stripe {
                            s += mouth_value(p, bx * 2 * stripe + u, by * 2 * stripe + v, stripe);
                        }
                    }
                    assert!((s / 16.0 - 0.5).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn distinct_glosses_without_pairs_have_distinct_hands() {
        let spec = SyntheticSpec::weather(0, 1);
        let st = styles(&spec);
        let mut codes: Vec<u8> = st.iter().map(|s| s.hand_code).collect();
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), spec.glosses.len());
    }
}

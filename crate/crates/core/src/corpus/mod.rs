//! Corpus data model, on-disk format, splitting and vocabularies.

mod io;
mod split;
mod synthetic;
mod vocab;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{load_corpus, read_annotations, read_frame_tensor, write_corpus, write_frame_tensor};
pub use split::{split_corpus, split_sizes, CorpusSplit};
pub use synthetic::{generate_synthetic_corpus, SyntheticGeometry, SyntheticSpec};
pub use vocab::{build_vocabularies, GlossVocabulary, TextVocabulary, Vocabulary};

/// One video frame, `height × width × channels`, row-major with interleaved
/// channels, every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FrameImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "frame dimensions must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "frames have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "frame data has {} values, expected {height}x{width}x{channels}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "frame value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// A frame where every value is `value` (clamped into `[0, 1]`).
    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Self::from_fn(height, width, channels, |_, _, _| value)
    }

    /// Builds a frame from `f(y, x, c)`; results are clamped into `[0, 1]`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        assert!(height > 0 && width > 0 && (channels == 1 || channels == 3));
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c).clamp(0.0, 1.0));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Applies `f` to every value, clamping results into `[0, 1]`.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect(),
            ..*self
        }
    }

    pub fn same_dims(&self, other: &FrameImage) -> bool {
        self.dims() == other.dims()
    }
}

/// Pixel coordinate in a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

impl Point {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

/// Gold body-part coordinates for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BodyPartAnnotation {
    pub frame_index: u32,
    pub right_hand: Point,
    pub left_hand: Point,
    pub nose: Point,
}

impl BodyPartAnnotation {
    fn points(&self) -> [(&'static str, Point); 3] {
        [
            ("right_hand", self.right_hand),
            ("left_hand", self.left_hand),
            ("nose", self.nose),
        ]
    }
}

/// One signed sentence with its frames, annotations, glosses and translation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub name: String,
    pub signer: String,
    pub frames: Vec<FrameImage>,
    pub annotations: Vec<BodyPartAnnotation>,
    pub gloss: Vec<String>,
    pub text: Vec<String>,
}

impl SampleRecord {
    /// Number of frames (`T`).
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    /// Checks every record invariant, naming the offending field on failure.
    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, msg: String| Err(Error::record(&self.name, field, msg));
        if self.name.is_empty() {
            return err("name", "empty record name".into());
        }
        if self.frames.is_empty() {
            return err("frames", "record has no frames".into());
        }
        if self.gloss.is_empty() {
            return err("gloss", "empty gloss sequence".into());
        }
        if self.text.is_empty() {
            return err("text", "empty text".into());
        }
        if self.annotations.len() != self.frames.len() {
            return err(
                "annotations",
                format!(
                    "{} annotation rows for {} frames",
                    self.annotations.len(),
                    self.frames.len()
                ),
            );
        }
        let first = &self.frames[0];
        if let Some(i) = self.frames.iter().position(|f| !f.same_dims(first)) {
            return err("frames", format!("frame {i} differs in size from frame 0"));
        }
        let mut prev: Option<u32> = None;
        for ann in &self.annotations {
            if prev.is_some_and(|p| ann.frame_index <= p) {
                return err(
                    "annotations.frame",
                    format!("frame index {} not strictly increasing", ann.frame_index),
                );
            }
            prev = Some(ann.frame_index);
            for (part, p) in ann.points() {
                if p.x as usize >= first.width() || p.y as usize >= first.height() {
                    return err(
                        part,
                        format!(
                            "coordinate ({}, {}) out of bounds for {}x{} frame at frame {}",
                            p.x,
                            p.y,
                            first.width(),
                            first.height(),
                            ann.frame_index
                        ),
                    );
                }
            }
        }
        if self.gloss.len() > self.frames.len() {
            return err(
                "gloss",
                format!(
                    "U > T: {} glosses but only {} frames",
                    self.gloss.len(),
                    self.frames.len()
                ),
            );
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn tiny_record(name: &str, gloss: &[&str], frames: usize) -> SampleRecord {
        SampleRecord {
            name: name.into(),
            signer: "s1".into(),
            frames: (0..frames).map(|i| FrameImage::filled(4, 4, 1, i as f32 / 10.0)).collect(),
            annotations: (0..frames as u32)
                .map(|i| BodyPartAnnotation {
                    frame_index: i,
                    right_hand: Point::new(1, 1),
                    left_hand: Point::new(2, 2),
                    nose: Point::new(3, 0),
                })
                .collect(),
            gloss: gloss.iter().map(|s| s.to_string()).collect(),
            text: vec!["wort".into()],
        }
    }

    #[test]
    fn frame_rejects_out_of_range_values() {
        assert!(FrameImage::new(1, 2, 1, vec![0.0, 1.5]).is_err());
        assert!(FrameImage::new(1, 2, 2, vec![0.0; 4]).is_err());
        assert!(FrameImage::new(1, 2, 1, vec![0.0]).is_err());
        assert!(FrameImage::new(1, 2, 1, vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn valid_record_passes() {
        tiny_record("a", &["X", "Y"], 3).validate().unwrap();
    }

    #[test]
    fn gloss_longer_than_frames_rejected() {
        let r = tiny_record("a", &["A", "B", "C", "D", "E"], 3);
        let e = r.validate().unwrap_err().to_string();
        assert!(e.contains("U > T"), "{e}");
        assert!(e.contains("`a`"), "{e}");
    }

    #[test]
    fn coordinate_on_width_is_out_of_bounds() {
        let mut r = tiny_record("a", &["A"], 2);
        r.annotations[1].nose.x = 4;
        let e = r.validate().unwrap_err().to_string();
        assert!(e.contains("nose") && e.contains("out of bounds"), "{e}");
    }

    #[test]
    fn frame_indices_must_increase() {
        let mut r = tiny_record("a", &["A"], 2);
        r.annotations[1].frame_index = 0;
        assert!(r.validate().is_err());
    }
}

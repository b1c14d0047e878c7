//! Body-part crops and multiplicative stream fusion.
//!
//! A variant takes the full frame plus zero or more crops (mouth, hands),
//! resizes every crop back to the full-frame size and multiplies all streams
//! element-wise, so the fused frame has exactly the input dimensions.
//! Fusion happens in image space, before the frame embedder.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{FrameImage, Point, SampleRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyPart {
    RightHand,
    LeftHand,
    Mouth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropSpec {
    pub part: BodyPart,
    pub box_width: usize,
    pub box_height: usize,
    /// Downward shift of the mouth box centre relative to the nose point.
    pub mouth_y_offset: i64,
}

/// One crop spec per body part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropSet {
    pub right_hand: CropSpec,
    pub left_hand: CropSpec,
    pub mouth: CropSpec,
}

impl CropSet {
    /// Same box for every part.
    pub fn uniform(box_width: usize, box_height: usize, mouth_y_offset: i64) -> Self {
        let spec = |part| CropSpec {
            part,
            box_width,
            box_height,
            mouth_y_offset,
        };
        Self {
            right_hand: spec(BodyPart::RightHand),
            left_hand: spec(BodyPart::LeftHand),
            mouth: spec(BodyPart::Mouth),
        }
    }

    /// Boxes a quarter of the frame per side; mouth 25% of the box height
    /// below the nose.
    pub fn default_for(height: usize, width: usize) -> Self {
        let (bw, bh) = ((width / 4).max(1), (height / 4).max(1));
        Self::uniform(bw, bh, (bh / 4) as i64)
    }

    pub fn get(&self, part: BodyPart) -> &CropSpec {
        match part {
            BodyPart::RightHand => &self.right_hand,
            BodyPart::LeftHand => &self.left_hand,
            BodyPart::Mouth => &self.mouth,
        }
    }
}

/// Which streams are fused with the full frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamVariant {
    #[default]
    Baseline,
    MouthFull,
    HandsFull,
    MouthHandsFull,
}

impl StreamVariant {
    pub const ALL: [StreamVariant; 4] = [
        StreamVariant::Baseline,
        StreamVariant::MouthFull,
        StreamVariant::HandsFull,
        StreamVariant::MouthHandsFull,
    ];

    /// Body parts cropped in addition to the full frame.
    pub fn parts(self) -> &'static [BodyPart] {
        match self {
            StreamVariant::Baseline => &[],
            StreamVariant::MouthFull => &[BodyPart::Mouth],
            StreamVariant::HandsFull => &[BodyPart::RightHand, BodyPart::LeftHand],
            StreamVariant::MouthHandsFull => {
                &[BodyPart::Mouth, BodyPart::RightHand, BodyPart::LeftHand]
            }
        }
    }

    /// Number of fused streams, the full frame included.
    pub fn num_streams(self) -> usize {
        1 + self.parts().len()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StreamVariant::Baseline => "baseline",
            StreamVariant::MouthFull => "mouth_full",
            StreamVariant::HandsFull => "hands_full",
            StreamVariant::MouthHandsFull => "mouth_hands_full",
        }
    }
}

impl fmt::Display for StreamVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StreamVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StreamVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown variant `{s}` (expected baseline, mouth_full, hands_full or mouth_hands_full)"
                ))
            })
    }
}

/// Cuts a `box_height × box_width` crop centred on `center` (for the mouth:
/// the nose shifted down by `mouth_y_offset`). Boxes crossing the border are
/// shifted inward so the crop always has the exact size.
pub fn crop_at(frame: &FrameImage, center: Point, spec: &CropSpec) -> Result<FrameImage> {
    let (h, w, c) = frame.dims();
    if spec.box_width == 0 || spec.box_height == 0 {
        return Err(Error::InvalidArgument("crop box must be non-empty".into()));
    }
    if spec.box_width > w || spec.box_height > h {
        return Err(Error::InvalidArgument(format!(
            "{}x{} crop box larger than {}x{} frame",
            spec.box_width, spec.box_height, w, h
        )));
    }
    if center.x as usize >= w || center.y as usize >= h {
        return Err(Error::InvalidArgument(format!(
            "crop centre ({}, {}) outside {}x{} frame",
            center.x, center.y, w, h
        )));
    }
    let cy = i64::from(center.y)
        + if spec.part == BodyPart::Mouth {
            spec.mouth_y_offset
        } else {
            0
        };
    let y0 = (cy - (spec.box_height / 2) as i64).clamp(0, (h - spec.box_height) as i64) as usize;
    let x0 = (i64::from(center.x) - (spec.box_width / 2) as i64)
        .clamp(0, (w - spec.box_width) as i64) as usize;
    Ok(FrameImage::from_fn(spec.box_height, spec.box_width, c, |y, x, ch| {
        frame.get(y0 + y, x0 + x, ch)
    }))
}

/// Bilinear resize with corner-aligned sampling (output corners map exactly
/// onto input corners).
pub fn resize_bilinear(frame: &FrameImage, out_h: usize, out_w: usize) -> Result<FrameImage> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument("resize target must be positive".into()));
    }
    let (h, w, c) = frame.dims();
    if (h, w) == (out_h, out_w) {
        return Ok(frame.clone());
    }
    let scale = |inp: usize, out: usize| {
        if out > 1 {
            (inp - 1) as f64 / (out - 1) as f64
        } else {
            0.0
        }
    };
    let (sy, sx) = (scale(h, out_h), scale(w, out_w));
    let taps = |pos: f64, n: usize| {
        let lo = (pos.floor() as usize).min(n - 1);
        let hi = (lo + 1).min(n - 1);
        (lo, hi, pos - lo as f64)
    };
    Ok(FrameImage::from_fn(out_h, out_w, c, |y, x, ch| {
        let (y0, y1, fy) = taps(y as f64 * sy, h);
        let (x0, x1, fx) = taps(x as f64 * sx, w);
        let p = |yy, xx| f64::from(frame.get(yy, xx, ch));
        let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
        let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
        (top * (1.0 - fy) + bottom * fy) as f32
    }))
}

/// Element-wise product of equally sized streams.
pub fn fuse_frames(streams: &[FrameImage]) -> Result<FrameImage> {
    let (first, rest) = streams
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("fusion needs at least one stream".into()))?;
    if let Some(bad) = rest.iter().find(|s| !s.same_dims(first)) {
        return Err(Error::Shape(format!(
            "cannot fuse {:?} with {:?}",
            first.dims(),
            bad.dims()
        )));
    }
    let mut data = first.data().to_vec();
    for s in rest {
        for (d, v) in data.iter_mut().zip(s.data()) {
            *d *= v;
        }
    }
    let (h, w, c) = first.dims();
    FrameImage::new(h, w, c, data)
}

/// Replaces every frame of `record` by the variant's fused stream. Metadata
/// and annotations are copied unchanged.
pub fn build_variant(
    record: &SampleRecord,
    variant: StreamVariant,
    crops: &CropSet,
) -> Result<SampleRecord> {
    if variant == StreamVariant::Baseline {
        return Ok(record.clone());
    }
    let frames = record
        .frames
        .iter()
        .zip(&record.annotations)
        .map(|(frame, ann)| {
            let mut streams = Vec::with_capacity(variant.num_streams());
            streams.push(frame.clone());
            for &part in variant.parts() {
                let anchor = match part {
                    BodyPart::RightHand => ann.right_hand,
                    BodyPart::LeftHand => ann.left_hand,
                    BodyPart::Mouth => ann.nose,
                };
                let crop = crop_at(frame, anchor, crops.get(part))
                    .map_err(|e| Error::record(&record.name, "frames", e.to_string()))?;
                streams.push(resize_bilinear(&crop, frame.height(), frame.width())?);
            }
            fuse_frames(&streams)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleRecord {
        frames,
        ..record.clone()
    })
}

//! Manifest, annotation CSV and frame container I/O.
//!
//! A corpus is a JSON-lines manifest; each line names a record and points at
//! its frames and its annotation CSV, both relative to the manifest's
//! directory. Frames are either numbered PNGs (`frame_0000.png`, ...) inside
//! a directory, or a raw `SLTT` tensor container (see [`read_frame_tensor`]).

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BodyPartAnnotation, FrameImage, Point, SampleRecord};
use crate::{Error, Result};

const TENSOR_MAGIC: &[u8; 4] = b"SLTT";
const TENSOR_VERSION: u32 = 1;
const TENSOR_FILE: &str = "frames.sltt";
const ANNOTATION_HEADER: [&str; 7] = ["frame", "rx", "ry", "lx", "ly", "nx", "ny"];

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    name: String,
    signer: String,
    gloss: Vec<String>,
    text: Vec<String>,
    frames_dir: String,
    annotations: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationRow {
    frame: u32,
    rx: u32,
    ry: u32,
    lx: u32,
    ly: u32,
    nx: u32,
    ny: u32,
}

/// Loads and validates every record of a manifest, in manifest order.
pub fn load_corpus(manifest_path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let manifest_path = manifest_path.as_ref();
    let file = File::open(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(manifest_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: format!("malformed manifest entry: {e}"),
        })?;
        records.push(load_entry(base, entry)?);
    }
    Ok(records)
}

fn load_entry(base: &Path, entry: ManifestEntry) -> Result<SampleRecord> {
    let frames = load_frames(&base.join(&entry.frames_dir))
        .map_err(|e| Error::record(&entry.name, "frames_dir", e.to_string()))?;
    let annotations = read_annotations(base.join(&entry.annotations))
        .map_err(|e| Error::record(&entry.name, "annotations", e.to_string()))?;
    let record = SampleRecord {
        name: entry.name,
        signer: entry.signer,
        frames,
        annotations,
        gloss: entry.gloss,
        text: entry.text,
    };
    record.validate()?;
    Ok(record)
}

fn load_frames(path: &Path) -> Result<Vec<FrameImage>> {
    if path.is_file() {
        return read_frame_tensor(path);
    }
    if !path.is_dir() {
        return Err(Error::InvalidArgument(format!(
            "missing frame file or directory {}",
            path.display()
        )));
    }
    let tensor = path.join(TENSOR_FILE);
    if tensor.is_file() {
        return read_frame_tensor(tensor);
    }
    let mut frames = Vec::new();
    loop {
        let png = path.join(format!("frame_{:04}.png", frames.len()));
        if !png.is_file() {
            break;
        }
        frames.push(read_png(&png)?);
    }
    if frames.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "missing frame file: no {TENSOR_FILE} or frame_0000.png in {}",
            path.display()
        )));
    }
    Ok(frames)
}

fn read_png(path: &Path) -> Result<FrameImage> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = if img.color().has_color() {
        (3, img.to_rgb8().into_raw())
    } else {
        (1, img.to_luma8().into_raw())
    };
    let data = raw.into_iter().map(|b| f32::from(b) / 255.0).collect();
    FrameImage::new(h, w, channels, data)
}

/// Reads an annotation CSV with header `frame,rx,ry,lx,ly,nx,ny`.
pub fn read_annotations(path: impl AsRef<Path>) -> Result<Vec<BodyPartAnnotation>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().ne(ANNOTATION_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "annotation header must be `{}`, found `{}`",
                ANNOTATION_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<AnnotationRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            line: i + 2,
            message: e.to_string(),
        })?;
        out.push(BodyPartAnnotation {
            frame_index: row.frame,
            right_hand: Point::new(row.rx, row.ry),
            left_hand: Point::new(row.lx, row.ly),
            nose: Point::new(row.nx, row.ny),
        });
    }
    Ok(out)
}

fn write_annotations(path: &Path, annotations: &[BodyPartAnnotation]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv write failed: {e}"));
    for a in annotations {
        writer
            .serialize(AnnotationRow {
                frame: a.frame_index,
                rx: a.right_hand.x,
                ry: a.right_hand.y,
                lx: a.left_hand.x,
                ly: a.left_hand.y,
                nx: a.nose.x,
                ny: a.nose.y,
            })
            .map_err(csv_err)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Reads an `SLTT` container: magic, `u32` version, `u32` T, H, W, C, then
/// `T·H·W·C` little-endian `f32` values.
pub fn read_frame_tensor(path: impl AsRef<Path>) -> Result<Vec<FrameImage>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::InvalidArgument(format!("{}: {msg}", path.display()));
    if bytes.len() < 24 || &bytes[..4] != TENSOR_MAGIC {
        return Err(bad("not an SLTT frame container"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    if word(0) != TENSOR_VERSION {
        return Err(bad(&format!("unsupported SLTT version {}", word(0))));
    }
    let (t, h, w, c) = (
        word(1) as usize,
        word(2) as usize,
        word(3) as usize,
        word(4) as usize,
    );
    let per_frame = h * w * c;
    if bytes.len() != 24 + 4 * t * per_frame {
        return Err(bad("payload length does not match header"));
    }
    let values: Vec<f32> = bytes[24..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    values
        .chunks_exact(per_frame.max(1))
        .take(t)
        .map(|chunk| FrameImage::new(h, w, c, chunk.to_vec()))
        .collect()
}

/// Writes frames as an `SLTT` container. All frames must share dimensions.
pub fn write_frame_tensor(path: impl AsRef<Path>, frames: &[FrameImage]) -> Result<()> {
    let path = path.as_ref();
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot write an empty frame sequence".into()))?;
    if frames.iter().any(|f| !f.same_dims(first)) {
        return Err(Error::Shape("frames in one container must share dimensions".into()));
    }
    let (h, w, c) = first.dims();
    let mut buf = Vec::with_capacity(24 + 4 * frames.len() * h * w * c);
    buf.extend_from_slice(TENSOR_MAGIC);
    for v in [TENSOR_VERSION, frames.len() as u32, h as u32, w as u32, c as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for f in frames {
        for v in f.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Writes `records` under `out_dir` as `manifest.jsonl`, `frames/<name>.sltt`
/// and `annotations/<name>.csv`. Returns the manifest path.
pub fn write_corpus(records: &[SampleRecord], out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    write_corpus_as(records, out_dir, "manifest.jsonl")
}

pub(crate) fn write_corpus_as(
    records: &[SampleRecord],
    out_dir: &Path,
    manifest_name: &str,
) -> Result<PathBuf> {
    let frames_dir = out_dir.join("frames");
    let ann_dir = out_dir.join("annotations");
    for d in [&frames_dir, &ann_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let manifest_path = out_dir.join(manifest_name);
    let file = File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut manifest = BufWriter::new(file);
    for r in records {
        r.validate()?;
        if r.name.contains(['/', '\\']) || r.name.starts_with('.') {
            return Err(Error::record(&r.name, "name", "not usable as a file name"));
        }
        let frames_rel = format!("frames/{}.sltt", r.name);
        let ann_rel = format!("annotations/{}.csv", r.name);
        write_frame_tensor(out_dir.join(&frames_rel), &r.frames)?;
        write_annotations(&out_dir.join(&ann_rel), &r.annotations)?;
        let entry = ManifestEntry {
            name: r.name.clone(),
            signer: r.signer.clone(),
            gloss: r.gloss.clone(),
            text: r.text.clone(),
            frames_dir: frames_rel,
            annotations: ann_rel,
        };
        serde_json::to_writer(&mut manifest, &entry)?;
        manifest
            .write_all(b"\n")
            .map_err(|e| Error::io(&manifest_path, e))?;
    }
    manifest.flush().map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::tiny_record;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = tiny_record("a", &["X", "Y"], 3);
        a.frames[1] = FrameImage::from_fn(4, 4, 1, |y, x, _| (y * 4 + x) as f32 / 17.0);
        let b = tiny_record("b", &["Z"], 1);
        let manifest = write_corpus(&[a.clone(), b.clone()], dir.path()).unwrap();
        let back = load_corpus(&manifest).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn missing_frames_named_in_error() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_corpus(&[tiny_record("rec1", &["X"], 2)], dir.path()).unwrap();
        fs::remove_file(dir.path().join("frames/rec1.sltt")).unwrap();
        let e = load_corpus(&manifest).unwrap_err().to_string();
        assert!(e.contains("rec1") && e.contains("frames_dir"), "{e}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        fs::write(&path, "{\"name\": \"x\"\n").unwrap();
        let e = load_corpus(&path).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }), "{e}");
    }

    #[test]
    fn png_directory_is_loaded_in_frame_order() {
        let dir = tempfile::tempdir().unwrap();
        let frames = dir.path().join("clip");
        fs::create_dir(&frames).unwrap();
        for i in 0..2u8 {
            let img = image::GrayImage::from_pixel(3, 2, image::Luma([i * 255]));
            img.save(frames.join(format!("frame_{i:04}.png"))).unwrap();
        }
        fs::write(
            dir.path().join("clip.csv"),
            "frame,rx,ry,lx,ly,nx,ny\n0,0,0,1,1,2,1\n1,0,0,1,1,2,1\n",
        )
        .unwrap();
        let line = r#"{"name":"clip","signer":"s","gloss":["A"],"text":["a"],"frames_dir":"clip","annotations":"clip.csv"}"#;
        fs::write(dir.path().join("m.jsonl"), format!("{line}\n")).unwrap();
        let recs = load_corpus(dir.path().join("m.jsonl")).unwrap();
        assert_eq!(recs[0].frames.len(), 2);
        assert_eq!(recs[0].frames[0].dims(), (2, 3, 1));
        assert_eq!(recs[0].frames[0].get(0, 0, 0), 0.0);
        assert_eq!(recs[0].frames[1].get(1, 2, 0), 1.0);
    }

    #[test]
    fn bad_annotation_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        fs::write(&p, "frame,x,y\n0,1,2\n").unwrap();
        assert!(read_annotations(&p).is_err());
    }

    #[test]
    fn tensor_container_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.sltt");
        let f = FrameImage::new(1, 2, 1, vec![0.25, 1.0]).unwrap();
        write_frame_tensor(&p, &[f]).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"SLTT");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(bytes.len(), 24 + 8);
        assert_eq!(f32::from_le_bytes(bytes[24..28].try_into().unwrap()), 0.25);
    }
}

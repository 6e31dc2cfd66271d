//! `CCO1` binary tensor container.
//!
//! Layout: magic `CCO1`, version `u32`, header length `u64`, a UTF-8 JSON
//! header, then the raw payload. All integers and floats are little-endian;
//! tensors are row-major `f32`. Header offsets are relative to the payload
//! start and the tensors must tile the payload exactly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assembly::{HeadVariant, CONDINST_PARAMS};
use crate::error::{Error, Result};
use crate::heads::AnchorConfig;
use crate::primitives::BBox;
use crate::tensor::Cube;

pub const MAGIC: &[u8; 4] = b"CCO1";
pub const VERSION: u32 = 1;
const PREAMBLE: usize = 4 + 4 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::from_f32(shape, data.into_iter().map(|v| v as f32).collect())
    }

    pub fn from_f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if shape.is_empty() || n != data.len() {
            return Err(Error::dims(format!("{n} values for shape {shape:?}"), data.len()));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    /// Rows along the first axis, widened to `f64`.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        let width: usize = self.shape[1..].iter().product();
        if width == 0 {
            return vec![Vec::new(); self.shape[0]];
        }
        self.data
            .chunks(width)
            .map(|r| r.iter().map(|&v| v as f64).collect())
            .collect()
    }

    fn byte_len(&self) -> usize {
        4 * self.data.len()
    }
}

/// Metadata of one clip's network outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipMeta {
    pub video_id: u64,
    pub clip_index: usize,
    pub frame_start: usize,
    /// Inclusive.
    pub frame_end: usize,
    pub video_length: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub head_variant: HeadVariant,
    /// Present exactly when boxes are stored in regression form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchors: Option<AnchorConfig>,
}

impl ClipMeta {
    pub fn frames(&self) -> usize {
        self.frame_end + 1 - self.frame_start
    }

    pub fn tensor_name(&self, field: &str) -> String {
        format!("v{}/c{}/{field}", self.video_id, self.clip_index)
    }

    fn validate(&self) -> Result<()> {
        let ctx = format!("clip v{}/c{}", self.video_id, self.clip_index);
        if self.frame_end < self.frame_start || self.frame_end >= self.video_length {
            return Err(Error::format(
                ctx,
                format!(
                    "window [{}, {}] invalid for {} frames",
                    self.frame_start, self.frame_end, self.video_length
                ),
            ));
        }
        if self.image_height == 0
            || self.image_width == 0
            || !self.image_height.is_multiple_of(4)
            || !self.image_width.is_multiple_of(4)
        {
            return Err(Error::format(
                ctx,
                format!(
                    "image size {}x{} must be positive multiples of 4",
                    self.image_height, self.image_width
                ),
            ));
        }
        if let Some(a) = &self.anchors {
            a.validate()?;
        }
        Ok(())
    }
}

/// Boxes of every prediction, either decoded per frame or as anchor regression.
#[derive(Debug, Clone, PartialEq)]
pub enum ClipBoxes {
    /// `[N][T]`; `None` where the instance is absent in that frame.
    Decoded(Vec<Vec<Option<BBox>>>),
    /// `[N][4T]`, decoded against the anchors of the clip's anchor config.
    Regression(Vec<Vec<f64>>),
}

/// Network outputs for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipNetOut {
    pub meta: ClipMeta,
    pub prototypes: Cube,
    /// `[N][c+1]` class probabilities, column 0 is background.
    pub scores: Vec<Vec<f64>>,
    pub embeddings: Vec<Vec<f64>>,
    pub boxes: ClipBoxes,
    pub mask_params: Vec<Vec<f64>>,
}

impl ClipNetOut {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    clips: Vec<ClipMeta>,
    tensors: Vec<TensorEntry>,
}

/// Named tensors plus clip metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    clips: Vec<ClipMeta>,
    tensors: BTreeMap<String, Tensor>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate tensor {name}")));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn clips(&self) -> &[ClipMeta] {
        &self.clips
    }

    pub fn add_clip(&mut self, clip: &ClipNetOut) -> Result<()> {
        let meta = &clip.meta;
        meta.validate()?;
        let n = clip.len();
        let t = meta.frames();
        let (pt, ph, pw, k) = clip.prototypes.shape();
        if pt != t {
            return Err(Error::dims(format!("{t} prototype frames"), pt));
        }
        let mut put = |field: &str, shape: Vec<usize>, data: Vec<f64>| -> Result<()> {
            self.insert(meta.tensor_name(field), Tensor::new(shape, data)?)
        };
        put("prototypes", vec![t, ph, pw, k], clip.prototypes.as_slice().to_vec())?;
        put("scores", vec![n, row_width(&clip.scores)?], clip.scores.concat())?;
        put(
            "embeddings",
            vec![n, row_width(&clip.embeddings)?],
            clip.embeddings.concat(),
        )?;
        put(
            "mask_params",
            vec![n, row_width(&clip.mask_params)?],
            clip.mask_params.concat(),
        )?;
        match &clip.boxes {
            ClipBoxes::Decoded(rows) => {
                let mut data = Vec::with_capacity(n * t * 4);
                for row in rows {
                    if row.len() != t {
                        return Err(Error::dims(format!("{t} boxes per prediction"), row.len()));
                    }
                    for b in row {
                        match b {
                            Some(b) => data.extend([b.x1, b.y1, b.x2, b.y2]),
                            None => data.extend([f64::NAN; 4]),
                        }
                    }
                }
                put("boxes", vec![rows.len(), t, 4], data)?;
            }
            ClipBoxes::Regression(rows) => put("box_regression", vec![rows.len(), 4 * t], rows.concat())?,
        }
        self.clips.push(meta.clone());
        // re-read to enforce every shape rule
        self.clip(self.clips.len() - 1).map(|_| ())
    }

    /// Typed, validated view of clip `idx`.
    pub fn clip(&self, idx: usize) -> Result<ClipNetOut> {
        let meta = self
            .clips
            .get(idx)
            .ok_or_else(|| Error::invalid(format!("no clip at position {idx}")))?
            .clone();
        meta.validate()?;
        let ctx = format!("clip v{}/c{}", meta.video_id, meta.clip_index);
        let fetch = |field: &str| -> Result<&Tensor> {
            let name = meta.tensor_name(field);
            self.tensors
                .get(&name)
                .ok_or_else(|| Error::format(ctx.clone(), format!("missing tensor {name}")))
        };
        let expect_rank = |t: &Tensor, field: &str, rank: usize| -> Result<()> {
            if t.shape.len() != rank {
                return Err(Error::format(
                    ctx.clone(),
                    format!("tensor {field} has shape {:?}, expected rank {rank}", t.shape),
                ));
            }
            Ok(())
        };
        let t = meta.frames();
        let protos = fetch("prototypes")?;
        expect_rank(protos, "prototypes", 4)?;
        let [pt, ph, pw, k] = [protos.shape[0], protos.shape[1], protos.shape[2], protos.shape[3]];
        if pt != t || ph * 4 != meta.image_height || pw * 4 != meta.image_width {
            return Err(Error::format(
                ctx,
                format!(
                    "prototypes shape {:?} inconsistent with {t} frames at {}x{} / 4",
                    protos.shape, meta.image_height, meta.image_width
                ),
            ));
        }
        let prototypes = Cube::new(pt, ph, pw, k, protos.to_f64())
            .map_err(|e| Error::format(ctx.clone(), format!("prototypes: {e}")))?;

        let scores = fetch("scores")?;
        expect_rank(scores, "scores", 2)?;
        let n = scores.shape[0];
        if scores.shape[1] < 2 {
            return Err(Error::format(
                ctx,
                "scores need a background column and at least one class",
            ));
        }
        let embeddings = fetch("embeddings")?;
        expect_rank(embeddings, "embeddings", 2)?;
        let mask_params = fetch("mask_params")?;
        expect_rank(mask_params, "mask_params", 2)?;
        let want_params = match meta.head_variant {
            HeadVariant::Yolact => k,
            HeadVariant::CondInst => CONDINST_PARAMS,
        };
        if embeddings.shape[0] != n || mask_params.shape[0] != n || mask_params.shape[1] != want_params {
            return Err(Error::format(
                ctx,
                format!(
                    "per-prediction tensors disagree: scores {:?}, embeddings {:?}, mask_params {:?} (expected {want_params} params)",
                    scores.shape, embeddings.shape, mask_params.shape
                ),
            ));
        }

        let boxes =
            match (
                self.tensors.get(&meta.tensor_name("boxes")),
                self.tensors.get(&meta.tensor_name("box_regression")),
            ) {
                (Some(b), None) => {
                    if b.shape != [n, t, 4] {
                        return Err(Error::format(
                            ctx,
                            format!("boxes shape {:?}, expected [{n}, {t}, 4]", b.shape),
                        ));
                    }
                    if meta.anchors.is_some() {
                        return Err(Error::format(ctx, "decoded boxes must not carry an anchor config"));
                    }
                    let mut rows = Vec::with_capacity(n);
                    for (i, pred) in b.data.chunks(t * 4).enumerate() {
                        let mut row = Vec::with_capacity(t);
                        for (f, c) in pred.chunks(4).enumerate() {
                            let nan = c.iter().filter(|v| v.is_nan()).count();
                            row.push(match nan {
                                4 => None,
                                0 => Some(BBox::new(c[0] as f64, c[1] as f64, c[2] as f64, c[3] as f64).map_err(
                                    |e| Error::format(ctx.clone(), format!("prediction {i} frame {f}: {e}")),
                                )?),
                                _ => {
                                    return Err(Error::format(
                                        ctx,
                                        format!("prediction {i} frame {f}: partially NaN box"),
                                    ));
                                }
                            });
                        }
                        rows.push(row);
                    }
                    ClipBoxes::Decoded(rows)
                }
                (None, Some(r)) => {
                    if r.shape != [n, 4 * t] {
                        return Err(Error::format(
                            ctx,
                            format!("box_regression shape {:?}, expected [{n}, {}]", r.shape, 4 * t),
                        ));
                    }
                    let anchors = meta
                        .anchors
                        .as_ref()
                        .ok_or_else(|| Error::format(ctx.clone(), "box_regression requires an anchor config"))?;
                    let total: usize = anchors
                        .level_dims(meta.image_height, meta.image_width)
                        .iter()
                        .map(|(h, w)| h * w * anchors.anchors_per_cell())
                        .sum();
                    if total != n {
                        return Err(Error::format(
                            ctx,
                            format!("{n} predictions but the anchor config yields {total}"),
                        ));
                    }
                    ClipBoxes::Regression(r.rows())
                }
                (Some(_), Some(_)) => return Err(Error::format(ctx, "both boxes and box_regression present")),
                (None, None) => return Err(Error::format(ctx, "neither boxes nor box_regression present")),
            };
        let finite_rows = |t: &Tensor, field: &str| -> Result<Vec<Vec<f64>>> {
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(
                    ctx.clone(),
                    format!("tensor {field} has non-finite values"),
                ));
            }
            Ok(t.rows())
        };
        Ok(ClipNetOut {
            scores: finite_rows(scores, "scores")?,
            embeddings: finite_rows(embeddings, "embeddings")?,
            mask_params: finite_rows(mask_params, "mask_params")?,
            meta,
            prototypes,
            boxes,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let mut entries = Vec::with_capacity(self.tensors.len());
        for (name, t) in &self.tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape.clone(),
                dtype: "f32".into(),
                offset,
            });
            offset += t.byte_len() as u64;
        }
        let header = serde_json::to_vec(&Header {
            clips: self.clips.clone(),
            tensors: entries,
        })
        .map_err(|e| Error::format("CCO1 header", e.to_string()))?;
        let mut out = Vec::with_capacity(PREAMBLE + header.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.tensors.values() {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |msg: String| Error::format("CCO1", msg);
        if bytes.len() < PREAMBLE {
            return Err(err(format!(
                "file is {} bytes, shorter than the {PREAMBLE}-byte preamble",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(err(format!(
                "bad magic {:?}, expected \"CCO1\"",
                String::from_utf8_lossy(&bytes[..4])
            )));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(err(format!("unsupported version {version}, expected {VERSION}")));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let header_end = (PREAMBLE as u64)
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len() as u64)
            .ok_or_else(|| err(format!("header length {header_len} runs past end of file")))?
            as usize;
        let header: Header = serde_json::from_slice(&bytes[PREAMBLE..header_end]).map_err(|e| {
            err(format!(
                "header JSON at byte {}: {e}",
                PREAMBLE as u64 + e.column() as u64
            ))
        })?;
        let payload = &bytes[header_end..];

        let mut spans: Vec<(u64, u64, &str)> = Vec::new();
        let mut tensors = BTreeMap::new();
        for entry in &header.tensors {
            if entry.dtype != "f32" {
                return Err(err(format!(
                    "tensor {} has dtype {:?}, only \"f32\" is supported",
                    entry.name, entry.dtype
                )));
            }
            let count = entry
                .shape
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
                .ok_or_else(|| err(format!("tensor {} shape overflows", entry.name)))?;
            let len = count * 4;
            let end = entry
                .offset
                .checked_add(len)
                .ok_or_else(|| err(format!("tensor {} offset overflows", entry.name)))?;
            if end > payload.len() as u64 {
                return Err(err(format!(
                    "tensor {} needs bytes [{}, {end}) of the payload but only {} are present",
                    entry.name,
                    entry.offset,
                    payload.len()
                )));
            }
            let data = payload[entry.offset as usize..end as usize]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let tensor =
                Tensor::from_f32(entry.shape.clone(), data).map_err(|e| err(format!("tensor {}: {e}", entry.name)))?;
            if tensors.insert(entry.name.clone(), tensor).is_some() {
                return Err(err(format!("duplicate tensor {}", entry.name)));
            }
            spans.push((entry.offset, end, &entry.name));
        }
        spans.sort();
        let mut cursor = 0u64;
        for (start, end, name) in &spans {
            if *start < cursor {
                return Err(err(format!("tensor {name} overlaps the previous tensor")));
            }
            if *start > cursor {
                return Err(err(format!(
                    "unused payload bytes [{cursor}, {start}) before tensor {name}"
                )));
            }
            cursor = *end;
        }
        if cursor != payload.len() as u64 {
            return Err(err(format!(
                "payload has {} bytes but tensors cover {cursor}",
                payload.len()
            )));
        }

        let container = Container {
            clips: header.clips,
            tensors,
        };
        for i in 0..container.clips.len() {
            container.clip(i)?;
        }
        Ok(container)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| e.in_file(path))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }
}

fn row_width(rows: &[Vec<f64>]) -> Result<usize> {
    let w = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != w) {
        return Err(Error::invalid("ragged prediction rows"));
    }
    Ok(w)
}

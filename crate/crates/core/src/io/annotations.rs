//! Ground-truth annotation sets (YouTube-VIS style JSON).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{rle_decode, BBox, BinaryMask, Rle};
use crate::training::{GroundTruthClip, GtInstance};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Video {
    pub id: u64,
    pub width: usize,
    pub height: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Category {
    pub id: u32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub id: u64,
    pub video_id: u64,
    pub category_id: u32,
    /// One entry per video frame.
    pub segmentations: Vec<Option<Rle>>,
    /// `[x, y, w, h]` per video frame.
    pub bboxes: Vec<Option<[f64; 4]>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationSet {
    pub videos: Vec<Video>,
    pub categories: Vec<Category>,
    pub annotations: Vec<Annotation>,
}

impl AnnotationSet {
    pub fn validate(&self) -> Result<()> {
        let mut videos = BTreeMap::new();
        for (i, v) in self.videos.iter().enumerate() {
            let ctx = format!("videos[{i}]");
            if v.width == 0 || v.height == 0 || v.length == 0 {
                return Err(Error::format(ctx, format!("video {} has a zero dimension", v.id)));
            }
            if videos.insert(v.id, v).is_some() {
                return Err(Error::format(ctx, format!("duplicate video id {}", v.id)));
            }
        }
        let mut categories = BTreeSet::new();
        for (i, c) in self.categories.iter().enumerate() {
            if c.id == 0 {
                return Err(Error::format(
                    format!("categories[{i}]"),
                    "category id 0 is reserved for background",
                ));
            }
            if !categories.insert(c.id) {
                return Err(Error::format(
                    format!("categories[{i}]"),
                    format!("duplicate category id {}", c.id),
                ));
            }
        }
        let mut ids = BTreeSet::new();
        for (i, a) in self.annotations.iter().enumerate() {
            let ctx = format!("annotations[{i}]");
            if !ids.insert(a.id) {
                return Err(Error::format(ctx, format!("duplicate annotation id {}", a.id)));
            }
            let v = videos
                .get(&a.video_id)
                .ok_or_else(|| Error::format(ctx.clone(), format!("unknown video id {}", a.video_id)))?;
            if !categories.contains(&a.category_id) {
                return Err(Error::format(ctx, format!("unknown category id {}", a.category_id)));
            }
            if a.segmentations.len() != v.length || a.bboxes.len() != v.length {
                return Err(Error::format(
                    ctx,
                    format!(
                        "{} segmentations and {} bboxes for a {}-frame video",
                        a.segmentations.len(),
                        a.bboxes.len(),
                        v.length
                    ),
                ));
            }
            for (t, (seg, b)) in a.segmentations.iter().zip(&a.bboxes).enumerate() {
                match (seg, b) {
                    (None, None) => {}
                    (Some(r), Some(b)) => {
                        if (r.height, r.width) != (v.height, v.width) {
                            return Err(Error::format(
                                format!("{ctx} frame {t}"),
                                format!("mask {}x{} in a {}x{} video", r.height, r.width, v.height, v.width),
                            ));
                        }
                        BBox::from_xywh(*b).map_err(|e| Error::format(format!("{ctx} frame {t}"), e.to_string()))?;
                    }
                    _ => {
                        return Err(Error::format(
                            format!("{ctx} frame {t}"),
                            "segmentation and bbox must be both present or both null",
                        ))
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: AnnotationSet = serde_json::from_str(text).map_err(|e| Error::format("annotations", e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::format("annotations", e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| e.in_file(path))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn video(&self, id: u64) -> Option<&Video> {
        self.videos.iter().find(|v| v.id == id)
    }

    pub fn annotations_for(&self, video_id: u64) -> impl Iterator<Item = &Annotation> {
        self.annotations.iter().filter(move |a| a.video_id == video_id)
    }

    /// Decoded instances of one video, frames keyed by absolute index.
    pub fn instances(&self, video_id: u64) -> Result<Vec<GtInstance>> {
        self.annotations_for(video_id).map(Annotation::to_instance).collect()
    }

    /// Ground truth restricted to a clip window; instances absent throughout are dropped.
    pub fn clip(&self, video_id: u64, frame_start: usize, frame_end: usize) -> Result<GroundTruthClip> {
        let instances = self
            .instances(video_id)?
            .into_iter()
            .filter_map(|mut inst| {
                inst.boxes = inst.boxes.window(frame_start, frame_end);
                inst.masks.retain(|t, _| (frame_start..=frame_end).contains(t));
                (!inst.boxes.is_empty()).then_some(inst)
            })
            .collect();
        GroundTruthClip::new(frame_start, frame_end, instances)
    }
}

impl Annotation {
    pub fn decode_masks(&self) -> Result<Vec<Option<BinaryMask>>> {
        self.segmentations
            .iter()
            .map(|s| s.as_ref().map(rle_decode).transpose())
            .collect()
    }

    pub fn to_instance(&self) -> Result<GtInstance> {
        let mut boxes = crate::primitives::BoxTrack::new();
        let mut masks = BTreeMap::new();
        for (t, (seg, b)) in self.segmentations.iter().zip(&self.bboxes).enumerate() {
            if let (Some(seg), Some(b)) = (seg, b) {
                boxes.insert(t, BBox::from_xywh(*b)?)?;
                masks.insert(t, rle_decode(seg)?);
            }
        }
        Ok(GtInstance {
            id: self.id,
            category: self.category_id,
            boxes,
            masks,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::rle_encode;

    pub(crate) fn sample() -> AnnotationSet {
        let m = BinaryMask::from_fn(4, 6, |y, x| y < 2 && x < 3).unwrap();
        AnnotationSet {
            videos: vec![Video {
                id: 3,
                width: 6,
                height: 4,
                length: 2,
            }],
            categories: vec![Category {
                id: 1,
                name: "rectangle".into(),
            }],
            annotations: vec![Annotation {
                id: 10,
                video_id: 3,
                category_id: 1,
                segmentations: vec![Some(rle_encode(&m)), None],
                bboxes: vec![Some([0., 0., 3., 2.]), None],
            }],
        }
    }

    #[test]
    fn roundtrip() {
        let set = sample();
        let back = AnnotationSet::from_json(&set.to_json().unwrap()).unwrap();
        assert_eq!(back, set);
        let inst = back.instances(3).unwrap();
        assert_eq!(inst[0].boxes.len(), 1);
        assert_eq!(inst[0].masks[&0].area(), 6);
    }

    #[test]
    fn rejects_inconsistent() {
        let mut s = sample();
        s.annotations[0].bboxes.pop();
        assert!(s.validate().is_err());

        let mut s = sample();
        s.annotations[0].bboxes[1] = Some([0., 0., 1., 1.]);
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("annotations[0] frame 1"), "{err}");

        let mut s = sample();
        s.annotations[0].category_id = 9;
        assert!(s.validate().is_err());

        assert!(AnnotationSet::from_json(r#"{"videos":[],"categories":[],"annotations":[],"extra":1}"#).is_err());
    }

    #[test]
    fn clip_window() {
        let s = sample();
        assert_eq!(s.clip(3, 0, 1).unwrap().instances.len(), 1);
        assert!(s.clip(3, 1, 1).unwrap().instances.is_empty());
    }
}

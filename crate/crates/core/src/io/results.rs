//! Tracked results: one JSON entry per video-level instance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{rle_decode, rle_encode, BinaryMask, Rle};
use crate::tracking::VideoTrack;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultEntry {
    pub video_id: u64,
    pub category_id: u32,
    pub score: f64,
    /// One entry per video frame.
    pub segmentations: Vec<Option<Rle>>,
}

impl ResultEntry {
    pub fn from_track(video_id: u64, track: &VideoTrack) -> Self {
        ResultEntry {
            video_id,
            category_id: track.category,
            score: track.score,
            segmentations: track.masks.iter().map(|m| m.as_ref().map(rle_encode)).collect(),
        }
    }

    pub fn decode_masks(&self) -> Result<Vec<Option<BinaryMask>>> {
        self.segmentations
            .iter()
            .map(|s| s.as_ref().map(rle_decode).transpose())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResultsFile(pub Vec<ResultEntry>);

impl ResultsFile {
    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.0.iter().enumerate() {
            if !(0.0..=1.0).contains(&r.score) {
                return Err(Error::format(
                    format!("results[{i}]"),
                    format!("score {} outside [0, 1]", r.score),
                ));
            }
            if r.segmentations.is_empty() {
                return Err(Error::format(format!("results[{i}]"), "no frames"));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: ResultsFile = serde_json::from_str(text).map_err(|e| Error::format("results", e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::format("results", e.to_string()))
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
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in absolute pixel coordinates, `(x1, y1)` top-left and
/// `(x2, y2)` bottom-right. Areas use the continuous convention `(x2-x1)(y2-y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = BBox { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    /// Build from COCO `[x, y, w, h]`.
    pub fn from_xywh(xywh: [f64; 4]) -> Result<Self> {
        let [x, y, w, h] = xywh;
        Self::new(x, y, x + w, y + h)
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2 - self.x1, self.y2 - self.y1]
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite());
        if !finite || self.x1 > self.x2 || self.y1 > self.y2 {
            return Err(Error::invalid(format!("malformed box {:?}", self)));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) * 0.5, (self.y1 + self.y2) * 0.5)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    /// Smallest box containing both.
    pub fn union_hull(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }

    pub fn scaled(&self, factor: f64) -> BBox {
        BBox {
            x1: self.x1 * factor,
            y1: self.y1 * factor,
            x2: self.x2 * factor,
            y2: self.y2 * factor,
        }
    }
}

/// Boxes of one instance keyed by frame index. Frames where the instance is
/// absent are simply missing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoxTrack {
    frames: BTreeMap<usize, BBox>,
}

impl BoxTrack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, frame: usize, b: BBox) -> Result<()> {
        b.validate()?;
        self.frames.insert(frame, b);
        Ok(())
    }

    pub fn get(&self, frame: usize) -> Option<&BBox> {
        self.frames.get(&frame)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &BBox)> {
        self.frames.iter().map(|(t, b)| (*t, b))
    }

    /// Restrict to frames within `[start, end]`.
    pub fn window(&self, start: usize, end: usize) -> BoxTrack {
        BoxTrack {
            frames: self.frames.range(start..=end).map(|(t, b)| (*t, *b)).collect(),
        }
    }
}

impl FromIterator<(usize, BBox)> for BoxTrack {
    fn from_iter<I: IntoIterator<Item = (usize, BBox)>>(iter: I) -> Self {
        BoxTrack {
            frames: iter.into_iter().collect(),
        }
    }
}

/// Elementwise `(min x1, min y1, max x2, max y2)` envelope of every box in the track.
pub fn circumscribed_box(track: &BoxTrack) -> Result<BBox> {
    circumscribe(track.frames.values()).ok_or_else(|| Error::invalid("circumscribed box of an empty track"))
}

/// Envelope of an arbitrary box sequence, `None` when empty.
pub fn circumscribe<'a>(boxes: impl IntoIterator<Item = &'a BBox>) -> Option<BBox> {
    boxes.into_iter().copied().reduce(|acc, b| acc.union_hull(&b))
}

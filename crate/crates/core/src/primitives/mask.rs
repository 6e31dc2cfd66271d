use crate::error::{Error, Result};
use crate::primitives::BBox;

/// Row-major `{0,1}` bitmap.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        check_dims(height, width)?;
        Ok(BinaryMask {
            height,
            width,
            data: vec![0; height * width],
        })
    }

    /// Build from row-major data; any nonzero byte counts as foreground.
    pub fn from_vec(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(Error::dims(
                format!("{} values for {height}x{width}", height * width),
                data.len(),
            ));
        }
        let data = data.into_iter().map(|v| (v != 0) as u8).collect();
        Ok(BinaryMask { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        check_dims(height, width)?;
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x) as u8);
            }
        }
        Ok(BinaryMask { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    pub fn set(&mut self, y: usize, x: usize, value: bool) {
        self.data[y * self.width + x] = value as u8;
    }

    pub fn area(&self) -> u64 {
        self.data.iter().map(|&v| v as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    /// `(intersection, union)` pixel counts.
    pub fn overlap_counts(&self, other: &BinaryMask) -> Result<(u64, u64)> {
        if self.dims() != other.dims() {
            return Err(Error::dims(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.height, other.width),
            ));
        }
        let (mut inter, mut union) = (0u64, 0u64);
        for (&a, &b) in self.data.iter().zip(&other.data) {
            inter += (a & b) as u64;
            union += (a | b) as u64;
        }
        Ok((inter, union))
    }

    /// Tight pixel-extent bounding box (`x2 = last column + 1`), `None` when empty.
    pub fn bounding_box(&self) -> Option<BBox> {
        let (mut x1, mut y1, mut x2, mut y2) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(y, x) {
                    x1 = x1.min(x);
                    y1 = y1.min(y);
                    x2 = x2.max(x + 1);
                    y2 = y2.max(y + 1);
                }
            }
        }
        (x1 != usize::MAX).then_some(BBox {
            x1: x1 as f64,
            y1: y1 as f64,
            x2: x2 as f64,
            y2: y2 as f64,
        })
    }
}

/// Row-major real-valued mask with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatMask {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FloatMask {
    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(Error::dims(
                format!("{} values for {height}x{width}", height * width),
                data.len(),
            ));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("mask value {v} outside [0, 1]")));
        }
        Ok(FloatMask { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::from_vec(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        FloatMask { height, width, data }
    }
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::invalid(format!(
            "mask dims must be positive, got {height}x{width}"
        )));
    }
    Ok(())
}

/// Anything laid out on a 2D grid.
pub trait Grid {
    fn grid_dims(&self) -> (usize, usize);
}

impl Grid for BinaryMask {
    fn grid_dims(&self) -> (usize, usize) {
        self.dims()
    }
}

impl Grid for FloatMask {
    fn grid_dims(&self) -> (usize, usize) {
        self.dims()
    }
}

/// Per-frame masks of one instance over a clip, all with the same spatial dims.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskClip<M> {
    frames: Vec<M>,
}

pub type FloatClip = MaskClip<FloatMask>;
pub type BinaryClip = MaskClip<BinaryMask>;

impl<M: Grid> MaskClip<M> {
    pub fn new(frames: Vec<M>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::invalid("mask clip needs at least one frame"))?
            .grid_dims();
        if let Some(bad) = frames.iter().find(|m| m.grid_dims() != first) {
            return Err(Error::dims(
                format!("{}x{}", first.0, first.1),
                format!("{}x{}", bad.grid_dims().0, bad.grid_dims().1),
            ));
        }
        Ok(MaskClip { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].grid_dims()
    }

    pub fn frames(&self) -> &[M] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &M {
        &self.frames[t]
    }

    pub fn into_frames(self) -> Vec<M> {
        self.frames
    }
}

/// Integer pixel span `[lo, hi)` covered by `box` after rounding outward,
/// clamped to the grid. Zero-area boxes cover nothing.
pub fn rounded_span(b: &BBox, height: usize, width: usize) -> (usize, usize, usize, usize) {
    if b.width() <= 0.0 || b.height() <= 0.0 {
        return (0, 0, 0, 0);
    }
    let clamp = |v: f64, hi: usize| -> usize { v.max(0.0).min(hi as f64) as usize };
    let x0 = clamp(b.x1.floor(), width);
    let x1 = clamp(b.x2.ceil(), width);
    let y0 = clamp(b.y1.floor(), height);
    let y1 = clamp(b.y2.ceil(), height);
    (y0, y1, x0, x1)
}

/// Zero every value outside the outward-rounded box. The box must be in the
/// mask's own coordinate scale.
pub fn crop(mask: &FloatMask, b: &BBox) -> FloatMask {
    let (y0, y1, x0, x1) = rounded_span(b, mask.height, mask.width);
    let mut data = vec![0.0; mask.data.len()];
    for y in y0..y1 {
        let row = y * mask.width;
        data[row + x0..row + x1].copy_from_slice(&mask.data[row + x0..row + x1]);
    }
    FloatMask::from_raw(mask.height, mask.width, data)
}

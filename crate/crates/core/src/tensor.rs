use crate::error::{Error, Result};

/// Dense `T×H×W×C` tensor, channel-last row-major.
///
/// Serves both as a feature cube over a clip and as a clip of prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    t: usize,
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f64>,
}

pub type FeatureCube = Cube;
pub type PrototypeCube = Cube;

impl Cube {
    pub fn new(t: usize, h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if t == 0 || h == 0 || w == 0 || c == 0 {
            return Err(Error::invalid(format!(
                "cube dims must be positive, got {t}x{h}x{w}x{c}"
            )));
        }
        if data.len() != t * h * w * c {
            return Err(Error::dims(
                format!("{} values for {t}x{h}x{w}x{c}", t * h * w * c),
                data.len(),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("cube contains non-finite values"));
        }
        Ok(Cube { t, h, w, c, data })
    }

    pub fn zeros(t: usize, h: usize, w: usize, c: usize) -> Result<Self> {
        Self::new(t, h, w, c, vec![0.0; t * h * w * c])
    }

    pub fn from_fn(
        t: usize,
        h: usize,
        w: usize,
        c: usize,
        f: impl Fn(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(t * h * w * c);
        for ti in 0..t {
            for y in 0..h {
                for x in 0..w {
                    for ch in 0..c {
                        data.push(f(ti, y, x, ch));
                    }
                }
            }
        }
        Self::new(t, h, w, c, data)
    }

    pub(crate) fn from_raw(t: usize, h: usize, w: usize, c: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), t * h * w * c);
        Cube { t, h, w, c, data }
    }

    /// `(T, H, W, C)`.
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.t, self.h, self.w, self.c)
    }

    pub fn frames(&self) -> usize {
        self.t
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn index(&self, t: usize, y: usize, x: usize, ch: usize) -> usize {
        ((t * self.h + y) * self.w + x) * self.c + ch
    }

    #[inline]
    pub fn get(&self, t: usize, y: usize, x: usize, ch: usize) -> f64 {
        self.data[self.index(t, y, x, ch)]
    }

    /// Channel vector at one location.
    #[inline]
    pub fn pixel(&self, t: usize, y: usize, x: usize) -> &[f64] {
        let start = self.index(t, y, x, 0);
        &self.data[start..start + self.c]
    }

    /// Copy of frames `[start, start + len)`.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Cube> {
        if len == 0 || start + len > self.t {
            return Err(Error::invalid(format!("frame slice {start}+{len} out of {}", self.t)));
        }
        let plane = self.h * self.w * self.c;
        Ok(Cube::from_raw(
            len,
            self.h,
            self.w,
            self.c,
            self.data[start * plane..(start + len) * plane].to_vec(),
        ))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Cube {
        Cube::from_raw(
            self.t,
            self.h,
            self.w,
            self.c,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

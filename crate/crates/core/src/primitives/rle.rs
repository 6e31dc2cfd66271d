//! Uncompressed COCO run-length encoding: column-major scan, first run counts zeros.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::BinaryMask;

/// Serialized as `{"size": [h, w], "counts": [...]}`; validated on read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "RleJson", try_from = "RleJson")]
pub struct Rle {
    pub height: usize,
    pub width: usize,
    pub counts: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RleJson {
    size: [usize; 2],
    counts: Vec<u32>,
}

impl From<Rle> for RleJson {
    fn from(r: Rle) -> Self {
        RleJson {
            size: [r.height, r.width],
            counts: r.counts,
        }
    }
}

impl TryFrom<RleJson> for Rle {
    type Error = Error;

    fn try_from(j: RleJson) -> Result<Self> {
        let r = Rle {
            height: j.size[0],
            width: j.size[1],
            counts: j.counts,
        };
        r.validate()?;
        Ok(r)
    }
}

impl Rle {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::format(
                "rle",
                format!("non-positive size {}x{}", self.height, self.width),
            ));
        }
        let total: u64 = self.counts.iter().map(|&c| c as u64).sum();
        let expected = (self.height * self.width) as u64;
        if total != expected {
            return Err(Error::format(
                "rle",
                format!(
                    "counts sum to {total}, expected {}x{} = {expected}",
                    self.height, self.width
                ),
            ));
        }
        Ok(())
    }

    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }
}

pub fn rle_encode(mask: &BinaryMask) -> Rle {
    let (h, w) = mask.dims();
    let data = mask.as_slice();
    let mut counts = Vec::new();
    let mut current = 0u8;
    let mut run = 0u32;
    for x in 0..w {
        for y in 0..h {
            let v = data[y * w + x];
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    Rle {
        height: h,
        width: w,
        counts,
    }
}

pub fn rle_decode(rle: &Rle) -> Result<BinaryMask> {
    rle.validate()?;
    let (h, w) = (rle.height, rle.width);
    let mut data = vec![0u8; h * w];
    let mut pos = 0usize;
    for (i, &c) in rle.counts.iter().enumerate() {
        let value = (i % 2) as u8;
        for p in pos..pos + c as usize {
            if value == 1 {
                let (x, y) = (p / h, p % h);
                data[y * w + x] = 1;
            }
        }
        pos += c as usize;
    }
    BinaryMask::from_vec(h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn json_shape() {
        let r = rle_encode(&BinaryMask::from_fn(2, 3, |y, x| y == 1 && x == 0).unwrap());
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(text, r#"{"size":[2,3],"counts":[1,1,4]}"#);
        assert_eq!(serde_json::from_str::<Rle>(&text).unwrap(), r);
        assert!(serde_json::from_str::<Rle>(r#"{"size":[2,3],"counts":[1,1]}"#).is_err());
    }

    #[test]
    fn fixed_vectors() {
        assert_eq!(rle_encode(&BinaryMask::zeros(3, 3).unwrap()).counts, vec![9]);
        let ones = BinaryMask::from_fn(3, 3, |_, _| true).unwrap();
        assert_eq!(rle_encode(&ones).counts, vec![0, 9]);
        let corner = BinaryMask::from_fn(3, 3, |y, x| y == 0 && x == 0).unwrap();
        assert_eq!(rle_encode(&corner).counts, vec![0, 1, 8]);
    }

    #[test]
    fn scan_is_column_major() {
        // single pixel at row 0, col 1 sits after the 3 pixels of column 0
        let m = BinaryMask::from_fn(3, 3, |y, x| y == 0 && x == 1).unwrap();
        assert_eq!(rle_encode(&m).counts, vec![3, 1, 5]);
    }

    #[test]
    fn decode_rejects_bad_sum() {
        let bad = Rle {
            height: 3,
            width: 3,
            counts: vec![4, 4],
        };
        let err = rle_decode(&bad).unwrap_err().to_string();
        assert!(err.contains("counts sum to 8"), "{err}");
    }

    #[test]
    fn decode_accepts_zero_length_runs() {
        let rle = Rle {
            height: 2,
            width: 2,
            counts: vec![1, 0, 2, 1],
        };
        assert_eq!(rle_decode(&rle).unwrap().as_slice(), &[0, 0, 0, 1]);
    }

    proptest! {
        #[test]
        fn roundtrip(h in 1usize..20, w in 1usize..20, seed in proptest::collection::vec(0u8..2, 400)) {
            let m = BinaryMask::from_vec(h, w, seed[..h * w].to_vec()).unwrap();
            let rle = rle_encode(&m);
            prop_assert_eq!(rle.area(), m.area());
            prop_assert_eq!(rle_decode(&rle).unwrap(), m);
        }
    }
}

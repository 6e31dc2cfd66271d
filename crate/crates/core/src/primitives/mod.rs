//! Boxes, masks, the IoU family and RLE.

mod geometry;
mod iou;
mod mask;
mod rle;

pub use geometry::{circumscribe, circumscribed_box, BBox, BoxTrack};
pub use iou::{box_iou, mask_iou, st_miou, t_biou, t_miou, volume_iou, MaskTrack};
pub use mask::{crop, rounded_span, BinaryClip, BinaryMask, FloatClip, FloatMask, Grid, MaskClip};
pub use rle::{rle_decode, rle_encode, Rle};

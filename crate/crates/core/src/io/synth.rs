//! Moving-shape scenes with exactly recoverable oracle network outputs.
//!
//! Shapes live on the prototype grid (a quarter of the image resolution). The
//! image-resolution ground truth of each shape is the bilinear upsampling of its
//! grid indicator thresholded at 0.5, the same rule inference applies to
//! assembled masks, so the oracle outputs reproduce the ground truth exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{resize_bilinear, HeadVariant, BINARIZE_THRESHOLD};
use crate::error::{Error, Result};
use crate::heads::{encode_boxes, generate_anchors, AnchorConfig};
use crate::inference::{partition_clips, ClipPartitionConfig};
use crate::io::annotations::{Annotation, AnnotationSet, Category, Video};
use crate::io::config::EngineConfig;
use crate::io::container::{ClipBoxes, ClipMeta, ClipNetOut, Container};
use crate::primitives::{rle_encode, BBox, BinaryMask, FloatMask};
use crate::tensor::PrototypeCube;
use crate::training::{match_samples, matcher_box, Assignment, MatcherConfig};

/// Prototype logit magnitude of the oracle.
pub const ORACLE_LOGIT: f64 = 10.0;
pub const ORACLE_SCORE: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub videos: usize,
    pub frames: usize,
    pub shapes: usize,
    pub image_height: usize,
    pub image_width: usize,
    /// Speed range in prototype cells per frame.
    pub min_speed: f64,
    pub max_speed: f64,
    /// Let shapes roam the whole frame and overlap; otherwise each keeps its own horizontal lane.
    pub crossings: bool,
    pub seed: u64,
    pub partition: ClipPartitionConfig,
    /// Emit per-anchor regression outputs instead of decoded boxes.
    pub regression: Option<AnchorConfig>,
    pub matcher: MatcherConfig,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            videos: 2,
            frames: 12,
            shapes: 3,
            image_height: 96,
            image_width: 128,
            min_speed: 0.25,
            max_speed: 1.5,
            crossings: false,
            seed: 0,
            partition: ClipPartitionConfig::default(),
            regression: None,
            matcher: MatcherConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub annotations: AnnotationSet,
    pub netout: Container,
    pub config: EngineConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Rectangle,
    Ellipse,
}

impl ShapeKind {
    pub fn category(self) -> u32 {
        match self {
            ShapeKind::Rectangle => 1,
            ShapeKind::Ellipse => 2,
        }
    }
}

#[derive(Debug, Clone)]
struct Shape {
    kind: ShapeKind,
    half_w: f64,
    half_h: f64,
    cx: f64,
    cy: f64,
    vx: f64,
    vy: f64,
    /// Vertical bounds for the center.
    y_lo: f64,
    y_hi: f64,
}

impl Shape {
    fn covers(&self, y: usize, x: usize) -> bool {
        let dx = (x as f64 + 0.5 - self.cx) / self.half_w;
        let dy = (y as f64 + 0.5 - self.cy) / self.half_h;
        match self.kind {
            ShapeKind::Rectangle => dx.abs() <= 1.0 && dy.abs() <= 1.0,
            ShapeKind::Ellipse => dx * dx + dy * dy <= 1.0,
        }
    }

    fn step(&mut self, grid_w: f64) {
        let bounce = |pos: &mut f64, vel: &mut f64, lo: f64, hi: f64| {
            *pos += *vel;
            if *pos < lo {
                *pos = lo;
                *vel = -*vel;
            } else if *pos > hi {
                *pos = hi;
                *vel = -*vel;
            }
        };
        bounce(&mut self.cx, &mut self.vx, self.half_w, grid_w - self.half_w);
        bounce(&mut self.cy, &mut self.vy, self.y_lo, self.y_hi);
    }
}

/// Image-resolution mask of a prototype-grid indicator.
pub fn upsample_indicator(coarse: &BinaryMask, out_h: usize, out_w: usize) -> Result<BinaryMask> {
    let (h, w) = coarse.dims();
    let soft = FloatMask::from_vec(h, w, coarse.as_slice().iter().map(|&v| v as f64).collect())?;
    let up = resize_bilinear(&soft, out_h, out_w);
    BinaryMask::from_fn(out_h, out_w, |y, x| up.get(y, x) > BINARIZE_THRESHOLD)
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.videos == 0 || self.frames == 0 || self.shapes == 0 {
            return Err(Error::invalid("synthesis needs at least one video, frame and shape"));
        }
        if !self.image_height.is_multiple_of(4)
            || !self.image_width.is_multiple_of(4)
            || self.image_height < 16
            || self.image_width < 16
        {
            return Err(Error::invalid(format!(
                "image size {}x{} must be multiples of 4 and at least 16",
                self.image_height, self.image_width
            )));
        }
        if !(0.0 <= self.min_speed && self.min_speed <= self.max_speed && self.max_speed.is_finite()) {
            return Err(Error::invalid("speed range must satisfy 0 <= min <= max"));
        }
        if !self.crossings && self.image_height / 4 / self.shapes < 4 {
            return Err(Error::invalid(format!(
                "{} lanes do not fit a {}-pixel-high image; lower --shapes or enable crossings",
                self.shapes, self.image_height
            )));
        }
        self.partition.validate()?;
        self.matcher.validate()
    }
}

fn spawn(rng: &mut ChaCha8Rng, p: &SynthParams, lane: usize, grid_h: f64, grid_w: f64) -> Shape {
    let kind = if rng.random_bool(0.5) {
        ShapeKind::Rectangle
    } else {
        ShapeKind::Ellipse
    };
    let (lane_lo, lane_hi) = if p.crossings {
        (0.0, grid_h)
    } else {
        let lane_h = (grid_h as usize / p.shapes) as f64;
        (lane as f64 * lane_h, (lane + 1) as f64 * lane_h)
    };
    let max_half_h = ((lane_hi - lane_lo) / 2.0 - 0.5).min(grid_h / 4.0).max(1.5);
    let half_h = rng.random_range(1.5..=max_half_h);
    let half_w = rng.random_range(1.5..=(grid_w / 6.0).max(1.5));
    let speed = rng.random_range(p.min_speed..=p.max_speed);
    let angle: f64 = if p.crossings {
        rng.random_range(0.0..std::f64::consts::TAU)
    } else {
        rng.random_range(-0.3..0.3)
            + if rng.random_bool(0.5) {
                0.0
            } else {
                std::f64::consts::PI
            }
    };
    let (y_lo, y_hi) = (lane_lo + half_h, lane_hi - half_h);
    Shape {
        kind,
        half_w,
        half_h,
        cx: rng.random_range(half_w..=grid_w - half_w),
        cy: rng.random_range(y_lo..=y_hi),
        vx: speed * angle.cos(),
        vy: speed * angle.sin(),
        y_lo,
        y_hi,
    }
}

/// Render one video: per shape, per frame, the visible prototype-grid indicator.
fn render_video(rng: &mut ChaCha8Rng, p: &SynthParams) -> (Vec<ShapeKind>, Vec<Vec<Option<BinaryMask>>>) {
    let (gh, gw) = (p.image_height / 4, p.image_width / 4);
    let mut shapes: Vec<Shape> = (0..p.shapes).map(|i| spawn(rng, p, i, gh as f64, gw as f64)).collect();
    let mut masks = vec![Vec::with_capacity(p.frames); p.shapes];
    for _ in 0..p.frames {
        let mut taken = BinaryMask::zeros(gh, gw).expect("positive grid");
        for j in (0..p.shapes).rev() {
            let s = &shapes[j];
            let m = BinaryMask::from_fn(gh, gw, |y, x| s.covers(y, x) && !taken.get(y, x)).expect("positive grid");
            for y in 0..gh {
                for x in 0..gw {
                    if m.get(y, x) {
                        taken.set(y, x, true);
                    }
                }
            }
            masks[j].push((!m.is_empty()).then_some(m));
        }
        for s in &mut shapes {
            s.step(gw as f64);
        }
    }
    (shapes.iter().map(|s| s.kind).collect(), masks)
}

fn one_hot(n: usize, i: usize) -> Vec<f64> {
    (0..n).map(|j| if j == i { 1.0 } else { 0.0 }).collect()
}

fn score_row(categories: usize, category: u32) -> Vec<f64> {
    let mut row = vec![0.0; categories + 1];
    row[0] = 1.0 - ORACLE_SCORE;
    row[category as usize] = ORACLE_SCORE;
    row
}

/// Generate scenes, their annotations and per-clip oracle network outputs.
pub fn synth_generate(p: &SynthParams) -> Result<SynthOutput> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let (h, w) = (p.image_height, p.image_width);
    let (gh, gw) = (h / 4, w / 4);
    let categories = vec![
        Category {
            id: 1,
            name: "rectangle".into(),
        },
        Category {
            id: 2,
            name: "ellipse".into(),
        },
    ];
    let mut annotations = AnnotationSet {
        videos: Vec::new(),
        categories: categories.clone(),
        annotations: Vec::new(),
    };
    let mut coarse_all = Vec::new();
    for v in 0..p.videos {
        let video_id = v as u64 + 1;
        annotations.videos.push(Video {
            id: video_id,
            width: w,
            height: h,
            length: p.frames,
        });
        let (kinds, coarse) = render_video(&mut rng, p);
        for (j, frames) in coarse.iter().enumerate() {
            let mut segmentations = Vec::with_capacity(p.frames);
            let mut bboxes = Vec::with_capacity(p.frames);
            for m in frames {
                match m {
                    Some(m) => {
                        let img = upsample_indicator(m, h, w)?;
                        let b = img.bounding_box().expect("visible cells always leave image pixels on");
                        segmentations.push(Some(rle_encode(&img)));
                        bboxes.push(Some(b.to_xywh()));
                    }
                    None => {
                        segmentations.push(None);
                        bboxes.push(None);
                    }
                }
            }
            annotations.annotations.push(Annotation {
                id: annotations.annotations.len() as u64 + 1,
                video_id,
                category_id: kinds[j].category(),
                segmentations,
                bboxes,
            });
        }
        coarse_all.push(coarse);
    }
    annotations.validate()?;

    let windows = partition_clips(p.frames, &p.partition)?;
    let mut netout = Container::new();
    for (v, coarse) in coarse_all.iter().enumerate() {
        let video_id = v as u64 + 1;
        let anns: Vec<&Annotation> = annotations.annotations_for(video_id).collect();
        for win in &windows {
            let t = win.len();
            let prototypes = PrototypeCube::from_fn(t, gh, gw, p.shapes, |f, y, x, j| {
                let on = coarse[j][win.start + f].as_ref().is_some_and(|m| m.get(y, x));
                if on {
                    ORACLE_LOGIT
                } else {
                    -ORACLE_LOGIT
                }
            })?;
            let meta = ClipMeta {
                video_id,
                clip_index: win.index,
                frame_start: win.start,
                frame_end: win.end,
                video_length: p.frames,
                image_height: h,
                image_width: w,
                head_variant: HeadVariant::Yolact,
                anchors: p.regression.clone(),
            };
            let gt_boxes: Vec<Vec<Option<BBox>>> = anns
                .iter()
                .map(|a| {
                    (win.start..=win.end)
                        .map(|f| a.bboxes[f].map(BBox::from_xywh).transpose())
                        .collect::<Result<_>>()
                })
                .collect::<Result<_>>()?;
            let clip = match &p.regression {
                None => ClipNetOut {
                    meta,
                    prototypes,
                    scores: anns
                        .iter()
                        .map(|a| score_row(categories.len(), a.category_id))
                        .collect(),
                    embeddings: (0..p.shapes).map(|j| one_hot(p.shapes, j)).collect(),
                    boxes: ClipBoxes::Decoded(gt_boxes),
                    mask_params: (0..p.shapes).map(|j| one_hot(p.shapes, j)).collect(),
                },
                Some(anchor_cfg) => regression_clip(
                    meta,
                    prototypes,
                    &annotations,
                    &anns,
                    anchor_cfg,
                    &p.matcher,
                    categories.len(),
                )?,
            };
            netout.add_clip(&clip)?;
        }
    }

    let config = EngineConfig {
        partition: p.partition,
        matcher: p.matcher,
        anchors: p.regression.clone().unwrap_or_default(),
        model: crate::io::config::ModelConfig {
            embed_dim: p.shapes,
            prototypes: p.shapes,
        },
        ..EngineConfig::default()
    };
    config.validate()?;
    Ok(SynthOutput {
        annotations,
        netout,
        config,
    })
}

/// Per-anchor oracle: positives of the matcher predict their instance exactly,
/// every other anchor predicts background.
fn regression_clip(
    meta: ClipMeta,
    prototypes: PrototypeCube,
    set: &AnnotationSet,
    anns: &[&Annotation],
    anchor_cfg: &AnchorConfig,
    matcher: &MatcherConfig,
    categories: usize,
) -> Result<ClipNetOut> {
    let anchors = generate_anchors(anchor_cfg, &anchor_cfg.level_dims(meta.image_height, meta.image_width))?;
    let gt = set.clip(meta.video_id, meta.frame_start, meta.frame_end)?;
    let center = meta.frame_start + (meta.frames() - 1) / 2;
    let matched: Vec<usize> = (0..gt.instances.len())
        .filter(|&i| gt.instances[i].boxes.get(center).is_some())
        .collect();
    let boxes = matched
        .iter()
        .map(|&i| matcher_box(&gt.instances[i], center, matcher.use_circumscribed))
        .collect::<Result<Vec<_>>>()?;
    let result = match_samples(&anchors, &boxes, matcher)?;
    let k = anns.len();
    let t = meta.frames();
    let mut scores = Vec::with_capacity(anchors.len());
    let mut embeddings = Vec::with_capacity(anchors.len());
    let mut regression = Vec::with_capacity(anchors.len());
    let mut params = Vec::with_capacity(anchors.len());
    for (a, assignment) in result.assignments.iter().enumerate() {
        match assignment {
            Assignment::Positive(g) => {
                let inst = &gt.instances[matched[*g]];
                let j = anns
                    .iter()
                    .position(|x| x.id == inst.id)
                    .expect("instance from this video");
                let mut reg = Vec::with_capacity(4 * t);
                for f in meta.frame_start..=meta.frame_end {
                    match inst.boxes.get(f) {
                        Some(b) => reg.extend(encode_boxes(&anchors[a], std::slice::from_ref(b))?),
                        None => reg.extend([0.0; 4]),
                    }
                }
                scores.push(score_row(categories, inst.category));
                embeddings.push(one_hot(k, j));
                regression.push(reg);
                params.push(one_hot(k, j));
            }
            _ => {
                let mut row = vec![0.0; categories + 1];
                row[0] = ORACLE_SCORE;
                row[1] = 1.0 - ORACLE_SCORE;
                scores.push(row);
                embeddings.push(vec![1.0; k]);
                regression.push(vec![0.0; 4 * t]);
                params.push(vec![0.0; k]);
            }
        }
    }
    Ok(ClipNetOut {
        meta,
        prototypes,
        scores,
        embeddings,
        boxes: ClipBoxes::Regression(regression),
        mask_params: params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::circumscribed_box;

    #[test]
    fn deterministic_bytes() {
        let p = SynthParams {
            seed: 7,
            ..Default::default()
        };
        let a = synth_generate(&p).unwrap();
        let b = synth_generate(&p).unwrap();
        assert_eq!(a.netout.to_bytes().unwrap(), b.netout.to_bytes().unwrap());
        assert_eq!(a.annotations.to_json().unwrap(), b.annotations.to_json().unwrap());
        let c = synth_generate(&SynthParams { seed: 8, ..p }).unwrap();
        assert_ne!(a.annotations.to_json().unwrap(), c.annotations.to_json().unwrap());
    }

    #[test]
    fn counts_and_box_consistency() {
        let p = SynthParams {
            videos: 2,
            frames: 12,
            shapes: 3,
            seed: 1,
            ..Default::default()
        };
        let out = synth_generate(&p).unwrap();
        for v in &out.annotations.videos {
            assert_eq!(out.annotations.annotations_for(v.id).count(), 3);
        }
        for a in &out.annotations.annotations {
            let inst = a.to_instance().unwrap();
            for (t, b) in inst.boxes.iter() {
                assert_eq!(inst.masks[&t].bounding_box().unwrap(), *b);
            }
            let cb = circumscribed_box(&inst.boxes).unwrap();
            for (_, b) in inst.boxes.iter() {
                assert!(cb.contains(b));
            }
        }
        assert_eq!(out.netout.clips().len(), 2 * 6);
    }

    #[test]
    fn lanes_keep_boxes_apart() {
        let out = synth_generate(&SynthParams {
            videos: 3,
            shapes: 4,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        for v in &out.annotations.videos {
            let anns: Vec<_> = out.annotations.annotations_for(v.id).collect();
            for t in 0..v.length {
                for i in 0..anns.len() {
                    for j in i + 1..anns.len() {
                        let (a, b) = (anns[i].bboxes[t].unwrap(), anns[j].bboxes[t].unwrap());
                        let (a, b) = (BBox::from_xywh(a).unwrap(), BBox::from_xywh(b).unwrap());
                        assert_eq!(a.intersection_area(&b), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn crossings_may_occlude() {
        let p = SynthParams {
            crossings: true,
            shapes: 5,
            frames: 20,
            seed: 11,
            ..Default::default()
        };
        let out = synth_generate(&p).unwrap();
        out.annotations.validate().unwrap();
    }

    #[test]
    fn regression_mode_matches_anchor_count() {
        let p = SynthParams {
            videos: 1,
            frames: 3,
            regression: Some(AnchorConfig::default()),
            seed: 2,
            ..Default::default()
        };
        let out = synth_generate(&p).unwrap();
        let clip = out.netout.clip(0).unwrap();
        let cfg = AnchorConfig::default();
        let n = generate_anchors(&cfg, &cfg.level_dims(96, 128)).unwrap().len();
        assert_eq!(clip.len(), n);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(synth_generate(&SynthParams {
            shapes: 0,
            ..Default::default()
        })
        .is_err());
        assert!(synth_generate(&SynthParams {
            shapes: 7,
            ..Default::default()
        })
        .is_err());
        assert!(synth_generate(&SynthParams {
            image_height: 30,
            ..Default::default()
        })
        .is_err());
    }
}

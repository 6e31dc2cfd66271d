//! Container in, tracked results out.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::inference::{run_container, ClipDetection};
use crate::io::{Container, EngineConfig, ResultEntry, ResultsFile};
use crate::tracking::{merge_video, Association, TrackState};

/// Per video: declared length and the detections of each clip.
type VideoClips = BTreeMap<u64, (usize, Vec<(usize, Vec<ClipDetection>)>)>;

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub results: ResultsFile,
    pub associations: Vec<Association>,
}

/// Run inference on every clip, link identities clip by clip within each video,
/// and stitch the tracks. Output order is by video id, then track id.
pub fn infer_and_track(container: &Container, cfg: &EngineConfig, workers: usize) -> Result<PipelineOutput> {
    cfg.validate()?;
    let per_clip = run_container(container, &cfg.inference_config(), workers)?;
    let mut videos: VideoClips = BTreeMap::new();
    for (meta, dets) in per_clip {
        let entry = videos.entry(meta.video_id).or_insert((meta.video_length, Vec::new()));
        if entry.0 != meta.video_length {
            return Err(crate::Error::invalid(format!(
                "video {} declared with lengths {} and {}",
                meta.video_id, entry.0, meta.video_length
            )));
        }
        entry.1.push((meta.clip_index, dets));
    }
    let mut results = Vec::new();
    let mut associations = Vec::new();
    for (video_id, (length, mut clips)) in videos {
        clips.sort_by_key(|(idx, _)| *idx);
        let mut state = TrackState::new();
        let mut tracked: Vec<(u64, &ClipDetection)> = Vec::new();
        for (_, dets) in &clips {
            let assoc = state.link_clips(video_id, dets, &cfg.tracking)?;
            tracked.extend(assoc.iter().map(|a| a.id).zip(dets.iter()));
            associations.extend(assoc);
        }
        for track in merge_video(&tracked, length)? {
            results.push(ResultEntry::from_track(video_id, &track));
        }
    }
    Ok(PipelineOutput {
        results: ResultsFile(results),
        associations,
    })
}

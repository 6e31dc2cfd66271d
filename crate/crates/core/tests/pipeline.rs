use cico_core::analytics::evaluate;
use cico_core::inference::ClipPartitionConfig;
use cico_core::io::synth::{synth_generate, SynthParams};
use cico_core::io::Container;
use cico_core::pipeline::infer_and_track;

fn params(seed: u64, length: usize, overlap: usize) -> SynthParams {
    SynthParams {
        videos: 3,
        frames: 13,
        shapes: 3,
        seed,
        partition: ClipPartitionConfig { length, overlap },
        ..SynthParams::default()
    }
}

#[test]
fn oracle_outputs_score_perfectly_across_partitions() {
    for (seed, t, o) in [(1, 1, 0), (2, 3, 1), (3, 4, 0), (4, 5, 2), (5, 13, 0), (6, 20, 0)] {
        let synth = synth_generate(&params(seed, t, o)).unwrap();
        let out = infer_and_track(&synth.netout, &synth.config, 1).unwrap();
        let report = evaluate(&out.results, &synth.annotations).unwrap();
        assert_eq!(report.ap, 1.0, "seed {seed} T={t} To={o}");
        assert_eq!(out.results.0.len(), synth.annotations.annotations.len());
    }
}

#[test]
fn container_bytes_roundtrip_preserves_results() {
    let synth = synth_generate(&params(8, 3, 1)).unwrap();
    let back = Container::from_bytes(&synth.netout.to_bytes().unwrap()).unwrap();
    let a = infer_and_track(&synth.netout, &synth.config, 1).unwrap();
    let b = infer_and_track(&back, &synth.config, 1).unwrap();
    assert_eq!(a.results.to_json().unwrap(), b.results.to_json().unwrap());
}

#[test]
fn worker_count_does_not_change_output() {
    let synth = synth_generate(&params(9, 3, 1)).unwrap();
    let one = infer_and_track(&synth.netout, &synth.config, 1).unwrap();
    let many = infer_and_track(&synth.netout, &synth.config, 3).unwrap();
    assert_eq!(one.results.to_json().unwrap(), many.results.to_json().unwrap());
    assert_eq!(one.associations.len(), many.associations.len());
}

#[test]
fn crossings_stay_mostly_trackable() {
    let p = SynthParams {
        videos: 4,
        frames: 14,
        seed: 11,
        crossings: true,
        ..SynthParams::default()
    };
    let synth = synth_generate(&p).unwrap();
    let out = infer_and_track(&synth.netout, &synth.config, 1).unwrap();
    let report = evaluate(&out.results, &synth.annotations).unwrap();
    // full occlusion can hide an instance for a whole clip and split its track
    assert!(report.ap50 >= 0.9, "{report:?}");
    assert!(out.results.0.len() >= synth.annotations.annotations.len());
}

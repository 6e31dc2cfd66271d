use std::ffi::{c_char, CStr, CString};
use std::ptr;

use cico::*;
use cico_core::io::synth::{synth_generate, SynthParams};

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe {
        cico_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn rle_roundtrip_and_short_buffer() {
    // 3x3 with only the top-left pixel set
    let mask = [1u8, 0, 0, 0, 0, 0, 0, 0, 0];
    let mut counts = [0u32; 8];
    let mut len = 0usize;
    unsafe {
        assert_eq!(
            cico_rle_encode(mask.as_ptr(), 3, 3, counts.as_mut_ptr(), 8, &mut len),
            CicoStatus::Ok
        );
        assert_eq!(&counts[..len], &[0, 1, 8]);
        assert_eq!(
            cico_rle_encode(mask.as_ptr(), 3, 3, counts.as_mut_ptr(), 2, &mut len),
            CicoStatus::BufferTooSmall
        );
        assert_eq!(len, 3);
        let mut back = [9u8; 9];
        assert_eq!(
            cico_rle_decode([0u32, 1, 8].as_ptr(), 3, 3, 3, back.as_mut_ptr()),
            CicoStatus::Ok
        );
        assert_eq!(back, mask);
        assert_eq!(
            cico_rle_decode([5u32].as_ptr(), 1, 3, 3, back.as_mut_ptr()),
            CicoStatus::Format
        );
    }
}

#[test]
fn iou_and_null_arguments() {
    let a = [0.0, 0.0, 10.0, 10.0];
    let b = [5.0, 0.0, 15.0, 10.0];
    let mut iou = 0.0;
    unsafe {
        assert_eq!(cico_box_iou(a.as_ptr(), b.as_ptr(), &mut iou), CicoStatus::Ok);
        assert!((iou - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            cico_box_iou(ptr::null(), b.as_ptr(), &mut iou),
            CicoStatus::InvalidArgument
        );
    }
    assert!(last_error().contains("null"));
    let m1 = [1u8, 1, 0, 0];
    let m2 = [1u8, 0, 0, 0];
    unsafe {
        assert_eq!(cico_mask_iou(m1.as_ptr(), m2.as_ptr(), 2, 2, &mut iou), CicoStatus::Ok);
    }
    assert_eq!(iou, 0.5);
    assert_eq!(last_error(), "");
}

#[test]
fn last_error_truncates() {
    unsafe {
        cico_box_iou(ptr::null(), ptr::null(), ptr::null_mut());
        let mut buf = [0 as c_char; 4];
        let full = cico_last_error(buf.as_mut_ptr(), buf.len());
        assert!(full > 3);
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_bytes().len(), 3);
    }
}

#[test]
fn assembly_entry_points() {
    let (t, h, w, k) = (2, 3, 4, 8);
    let protos: Vec<f64> = (0..t * h * w * k).map(|i| ((i % 7) as f64 - 3.0) * 0.5).collect();
    let cbox = [0.0, 0.0, 16.0, 12.0];
    let mut out = vec![-1.0; t * h * w];
    let theta = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    unsafe {
        let st = cico_assemble_yolact(
            protos.as_ptr(),
            t,
            h,
            w,
            k,
            theta.as_ptr(),
            cbox.as_ptr(),
            out.as_mut_ptr(),
        );
        assert_eq!(st, CicoStatus::Ok);
    }
    // box covers the whole grid, coefficient picks channel 0
    for (i, v) in out.iter().enumerate() {
        let p = protos[i * k];
        assert!((v - 1.0 / (1.0 + (-p).exp())).abs() < 1e-15);
    }
    let params = vec![0.0; 169];
    unsafe {
        let st = cico_assemble_condinst(
            protos.as_ptr(),
            t,
            h,
            w,
            k,
            params.as_ptr(),
            169,
            cbox.as_ptr(),
            out.as_mut_ptr(),
        );
        assert_eq!(st, CicoStatus::Ok);
        assert!(out.iter().all(|&v| v == 0.5));
        let st = cico_assemble_condinst(
            protos.as_ptr(),
            t,
            h,
            w,
            k,
            params.as_ptr(),
            168,
            cbox.as_ptr(),
            out.as_mut_ptr(),
        );
        assert_eq!(st, CicoStatus::Validation);
    }
}

#[test]
fn config_errors_map_to_codes() {
    let mut cfg: *mut CicoConfig = ptr::null_mut();
    let bad = CString::new("[partition]\nlength = \"three\"").unwrap();
    let missing = CString::new("/nonexistent/engine.toml").unwrap();
    let invalid = CString::new("[partition]\nlength = 2\noverlap = 2").unwrap();
    unsafe {
        assert_eq!(cico_config_from_toml(bad.as_ptr(), &mut cfg), CicoStatus::Format);
        assert_eq!(cico_config_read(missing.as_ptr(), &mut cfg), CicoStatus::Io);
        assert_eq!(
            cico_config_from_toml(invalid.as_ptr(), &mut cfg),
            CicoStatus::Validation
        );
        assert!(cfg.is_null());
        assert_eq!(cico_config_default(&mut cfg), CicoStatus::Ok);
        cico_config_free(cfg);
        cico_config_free(ptr::null_mut());
    }
}

#[test]
fn infer_and_evaluate_through_handles() {
    let synth = synth_generate(&SynthParams {
        videos: 2,
        frames: 10,
        seed: 5,
        ..SynthParams::default()
    })
    .unwrap();
    let bytes = synth.netout.to_bytes().unwrap();
    let gt_json = CString::new(synth.annotations.to_json().unwrap()).unwrap();
    let cfg_toml = CString::new(synth.config.to_toml().unwrap()).unwrap();
    unsafe {
        let mut net = ptr::null_mut();
        assert_eq!(
            cico_netout_from_bytes(bytes.as_ptr(), bytes.len(), &mut net),
            CicoStatus::Ok
        );
        let mut clips = 0;
        assert_eq!(cico_netout_clip_count(net, &mut clips), CicoStatus::Ok);
        assert_eq!(clips, synth.netout.clips().len());

        let mut cfg = ptr::null_mut();
        assert_eq!(cico_config_from_toml(cfg_toml.as_ptr(), &mut cfg), CicoStatus::Ok);
        let mut gt = ptr::null_mut();
        assert_eq!(cico_annotations_from_json(gt_json.as_ptr(), &mut gt), CicoStatus::Ok);

        let mut results = ptr::null_mut();
        assert_eq!(cico_infer(net, cfg, 1, &mut results), CicoStatus::Ok);
        let mut n = 0;
        assert_eq!(cico_results_count(results, &mut n), CicoStatus::Ok);
        let mut n_gt = 0;
        assert_eq!(cico_annotations_count(gt, &mut n_gt), CicoStatus::Ok);
        assert_eq!(n, n_gt);

        let mut summary = CicoEvalSummary::default();
        assert_eq!(cico_evaluate(results, gt, &mut summary), CicoStatus::Ok);
        assert_eq!(summary.ap, 1.0);

        let mut json: *mut c_char = ptr::null_mut();
        assert_eq!(cico_results_to_json(results, &mut json), CicoStatus::Ok);
        assert!(CStr::from_ptr(json).to_str().unwrap().starts_with('['));
        cico_string_free(json);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("r.json").to_str().unwrap()).unwrap();
        assert_eq!(cico_results_write(results, path.as_ptr()), CicoStatus::Ok);
        let mut reread = ptr::null_mut();
        assert_eq!(cico_results_read(path.as_ptr(), &mut reread), CicoStatus::Ok);

        cico_results_free(reread);
        cico_results_free(results);
        cico_annotations_free(gt);
        cico_config_free(cfg);
        cico_netout_free(net);
    }
}

#[test]
fn garbage_container_is_a_format_error() {
    let junk = b"not a container";
    let mut net = ptr::null_mut();
    unsafe {
        assert_eq!(
            cico_netout_from_bytes(junk.as_ptr(), junk.len(), &mut net),
            CicoStatus::Format
        );
    }
    assert!(net.is_null());
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/cico.h");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{header}\"\nint main(void) {{ CicoConfig *c = 0; CicoStatus s = cico_config_default(&c); cico_config_free(c); return s == CICO_STATUS_OK ? 0 : 1; }}\n"
        ),
    )
    .unwrap();
    let status = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"])
        .arg(&src)
        .status()
        .expect("C compiler available");
    assert!(status.success());
}

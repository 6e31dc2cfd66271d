//! C ABI over `cico_core`.
//!
//! Every function returns a [`CicoStatus`]. On failure the message is kept
//! per thread and can be copied out with [`cico_last_error`]. Objects cross
//! the boundary as opaque handles that must be released with their `_free`
//! function. Masks are row-major `u8` arrays, cubes are `[t][h][w][c]`
//! `double` arrays and boxes are `x1, y1, x2, y2`.
//!
//! # Safety
//!
//! All functions share one contract: pointer arguments are either null
//! (reported as `InvalidArgument`) or valid for the documented length,
//! strings are NUL-terminated, and handles come from this library and are
//! freed at most once.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use cico_core::analytics::evaluate;
use cico_core::assembly::{assemble_condinst, assemble_yolact, CondInstParams, YolactParams};
use cico_core::io::{AnnotationSet, Container, EngineConfig, ResultsFile};
use cico_core::pipeline::infer_and_track;
use cico_core::primitives::{box_iou, mask_iou, rle_decode, rle_encode, BBox, BinaryMask, Rle};
use cico_core::tensor::Cube;
use cico_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CicoStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or an impossible size.
    InvalidArgument = 1,
    /// Inputs were well-formed but violate a precondition.
    Validation = 2,
    Io = 3,
    /// Malformed JSON, TOML or container bytes.
    Format = 4,
    /// Output buffer too small. The required length was still written.
    BufferTooSmall = 5,
    /// Internal panic, caught at the boundary.
    Panic = 6,
}

pub struct CicoConfig(EngineConfig);
pub struct CicoAnnotations(AnnotationSet);
pub struct CicoNetOut(Container);
pub struct CicoResults(ResultsFile);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CicoEvalSummary {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ar1: f64,
    pub ar10: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Fail(CicoStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => CicoStatus::Io,
            Error::Format { .. } => CicoStatus::Format,
            _ => CicoStatus::Validation,
        };
        Fail(status, e.to_string())
    }
}

fn bad_arg(msg: &str) -> Fail {
    Fail(CicoStatus::InvalidArgument, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CicoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CicoStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CicoStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(bad_arg(&format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| bad_arg(&format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if p.is_null() {
        return Err(bad_arg(&format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(bad_arg(&format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| bad_arg(&format!("{what} is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(bad_arg("output handle pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn area(h: usize, w: usize) -> Result<usize, Fail> {
    h.checked_mul(w).ok_or_else(|| bad_arg("mask size overflows"))
}

unsafe fn mask_arg(p: *const u8, h: usize, w: usize, what: &str) -> Result<BinaryMask, Fail> {
    let data = slice_arg(p, area(h, w)?, what)?;
    Ok(BinaryMask::from_vec(
        h,
        w,
        data.iter().map(|&v| (v != 0) as u8).collect(),
    )?)
}

unsafe fn box_arg(p: *const f64, what: &str) -> Result<BBox, Fail> {
    let b = slice_arg(p, 4, what)?;
    Ok(BBox::new(b[0], b[1], b[2], b[3])?)
}

unsafe fn cube_arg(p: *const f64, t: usize, h: usize, w: usize, k: usize) -> Result<Cube, Fail> {
    let n = [t, h, w, k]
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad_arg("prototype size overflows"))?;
    Ok(Cube::new(t, h, w, k, slice_arg(p, n, "prototypes")?.to_vec())?)
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length without the NUL.
#[no_mangle]
pub unsafe extern "C" fn cico_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Release a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn cico_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---- config

#[no_mangle]
pub unsafe extern "C" fn cico_config_default(out: *mut *mut CicoConfig) -> CicoStatus {
    guard(|| put(out, CicoConfig(EngineConfig::default())))
}

/// Parse TOML engine configuration text.
#[no_mangle]
pub unsafe extern "C" fn cico_config_from_toml(text: *const c_char, out: *mut *mut CicoConfig) -> CicoStatus {
    guard(|| {
        let cfg = EngineConfig::from_toml(str_arg(text, "text")?)?;
        put(out, CicoConfig(cfg))
    })
}

#[no_mangle]
pub unsafe extern "C" fn cico_config_read(path: *const c_char, out: *mut *mut CicoConfig) -> CicoStatus {
    guard(|| {
        let cfg = EngineConfig::read(str_arg(path, "path")?)?;
        put(out, CicoConfig(cfg))
    })
}

#[no_mangle]
pub unsafe extern "C" fn cico_config_free(cfg: *mut CicoConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

// ---- annotations

#[no_mangle]
pub unsafe extern "C" fn cico_annotations_read(path: *const c_char, out: *mut *mut CicoAnnotations) -> CicoStatus {
    guard(|| {
        let set = AnnotationSet::read(str_arg(path, "path")?)?;
        put(out, CicoAnnotations(set))
    })
}

#[no_mangle]
pub unsafe extern "C" fn cico_annotations_from_json(text: *const c_char, out: *mut *mut CicoAnnotations) -> CicoStatus {
    guard(|| {
        let set = AnnotationSet::from_json(str_arg(text, "text")?)?;
        put(out, CicoAnnotations(set))
    })
}

#[no_mangle]
pub unsafe extern "C" fn cico_annotations_count(set: *const CicoAnnotations, count: *mut usize) -> CicoStatus {
    guard(|| {
        let n = handle(set, "annotations")?.0.annotations.len();
        out_slice(count, 1, "count")?[0] = n;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cico_annotations_free(set: *mut CicoAnnotations) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

// ---- network outputs

#[no_mangle]
pub unsafe extern "C" fn cico_netout_read(path: *const c_char, out: *mut *mut CicoNetOut) -> CicoStatus {
    guard(|| {
        let c = Container::read(str_arg(path, "path")?)?;
        put(out, CicoNetOut(c))
    })
}

/// Parse an in-memory network-output container.
#[no_mangle]
pub unsafe extern "C" fn cico_netout_from_bytes(bytes: *const u8, len: usize, out: *mut *mut CicoNetOut) -> CicoStatus {
    guard(|| {
        let c = Container::from_bytes(slice_arg(bytes, len, "bytes")?)?;
        put(out, CicoNetOut(c))
    })
}

#[no_mangle]
pub unsafe extern "C" fn cico_netout_clip_count(net: *const CicoNetOut, count: *mut usize) -> CicoStatus {
    guard(|| {
        let n = handle(net, "netout")?.0.clips().len();
        out_slice(count, 1, "count")?[0] = n;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cico_netout_free(net: *mut CicoNetOut) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

// ---- pipeline

/// Run per-clip inference and cross-clip tracking. `workers == 0` uses the
/// global thread pool. A null `cfg` means the default configuration.
#[no_mangle]
pub unsafe extern "C" fn cico_infer(
    net: *const CicoNetOut,
    cfg: *const CicoConfig,
    workers: usize,
    out: *mut *mut CicoResults,
) -> CicoStatus {
    guard(|| {
        let net = handle(net, "netout")?;
        let default;
        let cfg = match cfg.as_ref() {
            Some(c) => &c.0,
            None => {
                default = EngineConfig::default();
                &default
            }
        };
        let result = infer_and_track(&net.0, cfg, workers)?;
        put(out, CicoResults(result.results))
    })
}

#[no_mangle]
pub unsafe extern "C" fn cico_results_read(path: *const c_char, out: *mut *mut CicoResults) -> CicoStatus {
    guard(|| {
        let r = ResultsFile::read(str_arg(path, "path")?)?;
        put(out, CicoResults(r))
    })
}

#[no_mangle]
pub unsafe extern "C" fn cico_results_count(results: *const CicoResults, count: *mut usize) -> CicoStatus {
    guard(|| {
        let n = handle(results, "results")?.0 .0.len();
        out_slice(count, 1, "count")?[0] = n;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cico_results_write(results: *const CicoResults, path: *const c_char) -> CicoStatus {
    guard(|| Ok(handle(results, "results")?.0.write(str_arg(path, "path")?)?))
}

/// Serialize results to JSON. Release the string with [`cico_string_free`].
#[no_mangle]
pub unsafe extern "C" fn cico_results_to_json(results: *const CicoResults, out: *mut *mut c_char) -> CicoStatus {
    guard(|| {
        let text = handle(results, "results")?.0.to_json()?;
        if out.is_null() {
            return Err(bad_arg("output string pointer is null"));
        }
        *out = CString::new(text).map_err(|_| bad_arg("json contains NUL"))?.into_raw();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cico_results_free(results: *mut CicoResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}

#[no_mangle]
pub unsafe extern "C" fn cico_evaluate(
    results: *const CicoResults,
    gt: *const CicoAnnotations,
    summary: *mut CicoEvalSummary,
) -> CicoStatus {
    guard(|| {
        let report = evaluate(&handle(results, "results")?.0, &handle(gt, "annotations")?.0)?;
        out_slice(summary, 1, "summary")?[0] = CicoEvalSummary {
            ap: report.ap,
            ap50: report.ap50,
            ap75: report.ap75,
            ar1: report.ar1,
            ar10: report.ar10,
        };
        Ok(())
    })
}

// ---- primitives

/// Column-major run-length encode an `h x w` mask (nonzero is foreground).
/// Writes at most `cap` counts; `len` always receives the required count.
#[no_mangle]
pub unsafe extern "C" fn cico_rle_encode(
    mask: *const u8,
    h: usize,
    w: usize,
    counts: *mut u32,
    cap: usize,
    len: *mut usize,
) -> CicoStatus {
    guard(|| {
        let rle = rle_encode(&mask_arg(mask, h, w, "mask")?);
        out_slice(len, 1, "len")?[0] = rle.counts.len();
        if rle.counts.len() > cap {
            return Err(Fail(
                CicoStatus::BufferTooSmall,
                format!("need {} counts, have {cap}", rle.counts.len()),
            ));
        }
        out_slice(counts, rle.counts.len(), "counts")?.copy_from_slice(&rle.counts);
        Ok(())
    })
}

/// Decode RLE counts into an `h x w` row-major mask of 0/1 bytes.
#[no_mangle]
pub unsafe extern "C" fn cico_rle_decode(
    counts: *const u32,
    n: usize,
    h: usize,
    w: usize,
    mask: *mut u8,
) -> CicoStatus {
    guard(|| {
        let rle = Rle {
            height: h,
            width: w,
            counts: slice_arg(counts, n, "counts")?.to_vec(),
        };
        let m = rle_decode(&rle)?;
        out_slice(mask, area(h, w)?, "mask")?.copy_from_slice(m.as_slice());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cico_box_iou(a: *const f64, b: *const f64, iou: *mut f64) -> CicoStatus {
    guard(|| {
        let v = box_iou(&box_arg(a, "a")?, &box_arg(b, "b")?);
        out_slice(iou, 1, "iou")?[0] = v;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cico_mask_iou(a: *const u8, b: *const u8, h: usize, w: usize, iou: *mut f64) -> CicoStatus {
    guard(|| {
        let v = mask_iou(&mask_arg(a, h, w, "a")?, &mask_arg(b, h, w, "b")?)?;
        out_slice(iou, 1, "iou")?[0] = v;
        Ok(())
    })
}

unsafe fn write_clip(
    clip: &cico_core::primitives::FloatClip,
    out: *mut f64,
    t: usize,
    h: usize,
    w: usize,
) -> Result<(), Fail> {
    let dst = out_slice(out, t * h * w, "out")?;
    for (f, frame) in clip.frames().iter().enumerate() {
        dst[f * h * w..(f + 1) * h * w].copy_from_slice(frame.as_slice());
    }
    Ok(())
}

/// Linear-combination clip mask: `k` coefficients, output `[t][h][w]`
/// probabilities at prototype resolution.
#[no_mangle]
pub unsafe extern "C" fn cico_assemble_yolact(
    protos: *const f64,
    t: usize,
    h: usize,
    w: usize,
    k: usize,
    theta: *const f64,
    cbox: *const f64,
    out: *mut f64,
) -> CicoStatus {
    guard(|| {
        let cube = cube_arg(protos, t, h, w, k)?;
        let params = YolactParams::new(slice_arg(theta, k, "theta")?.to_vec())?;
        let clip = assemble_yolact(&cube, &params, &box_arg(cbox, "cbox")?)?;
        write_clip(&clip, out, t, h, w)
    })
}

/// Dynamic-FCN clip mask: `n_theta` must be 169 and `k` must be 8.
#[no_mangle]
pub unsafe extern "C" fn cico_assemble_condinst(
    protos: *const f64,
    t: usize,
    h: usize,
    w: usize,
    k: usize,
    theta: *const f64,
    n_theta: usize,
    cbox: *const f64,
    out: *mut f64,
) -> CicoStatus {
    guard(|| {
        let cube = cube_arg(protos, t, h, w, k)?;
        let params = CondInstParams::new(slice_arg(theta, n_theta, "theta")?.to_vec())?;
        let clip = assemble_condinst(&cube, &params, &box_arg(cbox, "cbox")?)?;
        write_clip(&clip, out, t, h, w)
    })
}

//! C ABI over `diffmotion-core`.
//!
//! Objects are opaque heap handles created by `dm_*_new`/`dm_*_load` and
//! released with the matching `dm_*_free`. Every fallible call returns a
//! [`DmStatus`]; on failure `dm_last_error` describes the problem for the
//! calling thread. Tensors cross the boundary as row-major `double` buffers
//! of `frames * joints * 3` values.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use diffmotion::checkpoint::Checkpoint;
use diffmotion::data::{load_motion, save_motion, synth_generate, MotionSet, SynthConfig};
use diffmotion::generator::Generator;
use diffmotion::metrics;
use diffmotion::sampling::sample_many_indexed;
use diffmotion::schedule::{ScheduleKind, ScheduleTable};
use diffmotion::{Error, Tensor};

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Format = 4,
    Io = 5,
    Numeric = 6,
    Shape = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmScheduleKind {
    Linear = 0,
    CosineStandard = 1,
    CosineOffset1 = 2,
}

/// Tabulated noise schedule.
pub struct DmSchedule(ScheduleTable);

/// Clips sharing one skeleton.
pub struct DmMotionSet(MotionSet);

/// Trained generator loaded from a checkpoint.
pub struct DmModel {
    generator: Generator,
    schedule: ScheduleTable,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> DmStatus {
    match err {
        Error::Config(_) => DmStatus::Config,
        Error::InvalidArgument(_) | Error::OutOfRange { .. } => DmStatus::InvalidArgument,
        Error::Format { .. } | Error::Json(_) => DmStatus::Format,
        Error::Io { .. } => DmStatus::Io,
        Error::ShapeMismatch { .. } => DmStatus::Shape,
        _ => DmStatus::Numeric,
    }
}

struct Fail(DmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DmStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DmStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            DmStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(DmStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn read_buf<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_buf<'a>(p: *mut f64, len: usize, needed: usize) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null("output buffer"));
    }
    if len < needed {
        return Err(Fail(
            DmStatus::BufferTooSmall,
            format!("output buffer holds {len} values, {needed} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, needed))
}

/// `count` poses of shape `[frames, joints, 3]` laid out back to back.
unsafe fn read_poses(p: *const f64, count: usize, frames: usize, joints: usize) -> Result<Vec<Tensor>, Fail> {
    if count == 0 || frames == 0 || joints == 0 {
        return Err(Fail(DmStatus::InvalidArgument, "count, frames and joints must be positive".into()));
    }
    let per = frames * joints * 3;
    let data = read_buf(p, count * per, "pose buffer")?;
    Ok(data
        .chunks_exact(per)
        .map(|c| Tensor::new(&[frames, joints, 3], c.to_vec()))
        .collect::<Result<_, _>>()?)
}

/// Message for the most recent failure on this thread, or null. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---- schedule ----

/// # Safety
/// `out` must be a valid pointer to write the new handle into.
#[no_mangle]
pub unsafe extern "C" fn dm_schedule_new(kind: DmScheduleKind, steps: usize, out: *mut *mut DmSchedule) -> DmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let kind = match kind {
            DmScheduleKind::Linear => ScheduleKind::Linear,
            DmScheduleKind::CosineStandard => ScheduleKind::CosineStandard,
            DmScheduleKind::CosineOffset1 => ScheduleKind::CosineOffset1,
        };
        *out = Box::into_raw(Box::new(DmSchedule(ScheduleTable::build(kind, steps)?)));
        Ok(())
    })
}

/// Signal weight at step `t` in `0..=T`.
///
/// # Safety
/// `schedule` must come from `dm_schedule_new`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dm_schedule_alpha_bar(schedule: *const DmSchedule, t: usize, out: *mut f64) -> DmStatus {
    guard(|| {
        *out_ptr(out, "out")? = handle(schedule, "schedule")?.0.alpha_bar(t)?;
        Ok(())
    })
}

/// Number of diffusion steps, or 0 for a null handle.
///
/// # Safety
/// `schedule` must be null or come from `dm_schedule_new`.
#[no_mangle]
pub unsafe extern "C" fn dm_schedule_steps(schedule: *const DmSchedule) -> usize {
    schedule.as_ref().map_or(0, |s| s.0.steps())
}

/// # Safety
/// `schedule` must be null or an unfreed handle from `dm_schedule_new`.
#[no_mangle]
pub unsafe extern "C" fn dm_schedule_free(schedule: *mut DmSchedule) {
    if !schedule.is_null() {
        drop(Box::from_raw(schedule));
    }
}

// ---- motion data ----

/// Reads a motion file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dm_motion_load(path: *const c_char, out: *mut *mut DmMotionSet) -> DmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(DmMotionSet(load_motion(&path_arg(path)?)?)));
        Ok(())
    })
}

/// Generates synthetic data from a JSON synthesis config (null for defaults).
///
/// # Safety
/// `config_json` must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dm_motion_synth(config_json: *const c_char, out: *mut *mut DmMotionSet) -> DmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let config: SynthConfig = if config_json.is_null() {
            SynthConfig::default()
        } else {
            let text = CStr::from_ptr(config_json)
                .to_str()
                .map_err(|_| Fail(DmStatus::InvalidArgument, "config is not UTF-8".into()))?;
            serde_json::from_str(text).map_err(|e| Fail(DmStatus::Config, e.to_string()))?
        };
        *out = Box::into_raw(Box::new(DmMotionSet(synth_generate(&config)?)));
        Ok(())
    })
}

/// # Safety
/// `set` must be a live handle; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dm_motion_save(set: *const DmMotionSet, path: *const c_char) -> DmStatus {
    guard(|| {
        save_motion(&handle(set, "set")?.0, &path_arg(path)?)?;
        Ok(())
    })
}

/// Clip count, or 0 for a null handle.
///
/// # Safety
/// `set` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dm_motion_clip_count(set: *const DmMotionSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.clips.len())
}

/// Joint count, or 0 for a null handle.
///
/// # Safety
/// `set` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dm_motion_joints(set: *const DmMotionSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.skeleton.joints())
}

/// Frame count of clip `index`.
///
/// # Safety
/// `set` must be a live handle; `frames` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dm_motion_clip_frames(set: *const DmMotionSet, index: usize, frames: *mut usize) -> DmStatus {
    guard(|| {
        let set = handle(set, "set")?;
        let clip = set.0.clips.get(index).ok_or_else(|| {
            Fail(DmStatus::InvalidArgument, format!("clip {index} out of range"))
        })?;
        *out_ptr(frames, "frames")? = clip.len();
        Ok(())
    })
}

/// Copies clip `index` into `buf` (`frames * joints * 3` values).
///
/// # Safety
/// `set` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dm_motion_clip_copy(set: *const DmMotionSet, index: usize, buf: *mut f64, len: usize) -> DmStatus {
    guard(|| {
        let set = handle(set, "set")?;
        let clip = set.0.clips.get(index).ok_or_else(|| {
            Fail(DmStatus::InvalidArgument, format!("clip {index} out of range"))
        })?;
        let data = clip.frames.data();
        write_buf(buf, len, data.len())?.copy_from_slice(data);
        Ok(())
    })
}

/// Parent of every joint (`-1` for the root) into `buf` of `len` entries.
///
/// # Safety
/// `set` must be a live handle; `buf` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn dm_motion_parents(set: *const DmMotionSet, buf: *mut i64, len: usize) -> DmStatus {
    guard(|| {
        let parents = handle(set, "set")?.0.skeleton.parents();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < parents.len() {
            return Err(Fail(DmStatus::BufferTooSmall, format!("{} entries needed", parents.len())));
        }
        let out = std::slice::from_raw_parts_mut(buf, parents.len());
        for (o, p) in out.iter_mut().zip(parents) {
            *o = p.map_or(-1, |p| p as i64);
        }
        Ok(())
    })
}

/// # Safety
/// `set` must be null or an unfreed handle.
#[no_mangle]
pub unsafe extern "C" fn dm_motion_free(set: *mut DmMotionSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

// ---- model ----

/// Loads a checkpoint and rebuilds its generator and schedule.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dm_model_load(path: *const c_char, out: *mut *mut DmModel) -> DmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let ck = Checkpoint::load(&path_arg(path)?)?;
        let model = DmModel {
            generator: ck.to_generator()?,
            schedule: ck.train.schedule_table()?,
        };
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// History length, future length, joint count and diffusion steps.
///
/// # Safety
/// `model` must be a live handle; every output pointer must be writable.
#[no_mangle]
pub unsafe extern "C" fn dm_model_dims(
    model: *const DmModel,
    history: *mut usize,
    future: *mut usize,
    joints: *mut usize,
    steps: *mut usize,
) -> DmStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let c = m.generator.config();
        *out_ptr(history, "history")? = c.history;
        *out_ptr(future, "future")? = c.future;
        *out_ptr(joints, "joints")? = c.joints;
        *out_ptr(steps, "steps")? = m.schedule.steps();
        Ok(())
    })
}

/// Draws `count` futures for one history. `history` holds
/// `H * J * 3` values; `out` receives `count * F * J * 3`. Results depend
/// only on `(seed, history_index, sample index)`.
///
/// # Safety
/// `model` must be a live handle; buffers must hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn dm_model_sample(
    model: *const DmModel,
    history: *const f64,
    history_len: usize,
    count: usize,
    seed: u64,
    history_index: u64,
    out: *mut f64,
    out_len: usize,
) -> DmStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let c = m.generator.config();
        let needed = c.history * c.joints * 3;
        if history_len != needed {
            return Err(Fail(
                DmStatus::Shape,
                format!("history holds {history_len} values, {needed} expected"),
            ));
        }
        let x = Tensor::new(&[c.history, c.joints, 3], read_buf(history, history_len, "history")?.to_vec())?;
        let per = c.future * c.joints * 3;
        let dst = write_buf(out, out_len, count * per)?;
        let samples = sample_many_indexed(&m.generator, &x, count, &m.schedule, seed, history_index)?;
        for (chunk, s) in dst.chunks_exact_mut(per).zip(&samples) {
            chunk.copy_from_slice(s.data());
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be null or an unfreed handle.
#[no_mangle]
pub unsafe extern "C" fn dm_model_free(model: *mut DmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// ---- metrics ----

/// Average pairwise distance among `count` samples of `[frames, joints, 3]`.
///
/// # Safety
/// `samples` must hold `count * frames * joints * 3` doubles.
#[no_mangle]
pub unsafe extern "C" fn dm_metric_apd(
    samples: *const f64,
    count: usize,
    frames: usize,
    joints: usize,
    out: *mut f64,
) -> DmStatus {
    guard(|| {
        let s = read_poses(samples, count, frames, joints)?;
        *out_ptr(out, "out")? = metrics::apd(&s);
        Ok(())
    })
}

/// Best-of-`count` average and final displacement errors against `truth`.
///
/// # Safety
/// `samples` must hold `count * frames * joints * 3` doubles and `truth`
/// `frames * joints * 3`.
#[no_mangle]
pub unsafe extern "C" fn dm_metric_ade_fde(
    samples: *const f64,
    count: usize,
    truth: *const f64,
    frames: usize,
    joints: usize,
    ade: *mut f64,
    fde: *mut f64,
) -> DmStatus {
    guard(|| {
        let s = read_poses(samples, count, frames, joints)?;
        let gt = read_poses(truth, 1, frames, joints)?.remove(0);
        *out_ptr(ade, "ade")? = metrics::ade(&s, &gt)?;
        *out_ptr(fde, "fde")? = metrics::fde(&s, &gt)?;
        Ok(())
    })
}

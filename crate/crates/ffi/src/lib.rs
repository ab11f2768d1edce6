//! C ABI over `beats-core`.
//!
//! Every entry point returns a [`BeatsStatus`]. On failure a message is kept
//! per thread and can be read with [`beats_last_error`]. Handles are opaque
//! and must be released with their `_free` function. Arrays are row-major
//! `double` buffers whose sizes the caller passes explicitly.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use beats_core::data::{self, GeneratorConfig, Vocabulary};
use beats_core::encoders::{FeatureSequence, Language, Modality, Waveform};
use beats_core::fusion::{self, SinkhornConfig};
use beats_core::model::{self, LossWeights, Model, ModelConfig, ModelVariant, NUM_CLASSES};
use beats_core::numcore::RealArray;

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BeatsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numeric = 3,
    Io = 4,
    Format = 5,
    Panic = 6,
}

/// A trained or freshly initialized classifier.
pub struct BeatsModel {
    inner: Model,
}

/// Mono audio with its sample rate.
pub struct BeatsWaveform {
    inner: Waveform,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(BeatsStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(BeatsStatus::NullPointer, format!("{what} is null"))
    }
    fn arg(msg: impl Into<String>) -> Self {
        Failure(BeatsStatus::InvalidArgument, msg.into())
    }
}

impl From<fusion::FusionError> for Failure {
    fn from(e: fusion::FusionError) -> Self {
        let status = match e {
            fusion::FusionError::Config(_) | fusion::FusionError::TooLarge { .. } => BeatsStatus::InvalidArgument,
            _ => BeatsStatus::Numeric,
        };
        Failure(status, e.to_string())
    }
}

impl From<model::ModelError> for Failure {
    fn from(e: model::ModelError) -> Self {
        let status = match e {
            model::ModelError::Fusion(e) => return e.into(),
            model::ModelError::Io { .. } => BeatsStatus::Io,
            model::ModelError::Serde { .. } => BeatsStatus::Format,
            model::ModelError::Config(_) | model::ModelError::Weights(_) | model::ModelError::Encoder(_) => {
                BeatsStatus::InvalidArgument
            }
            _ => BeatsStatus::Numeric,
        };
        Failure(status, e.to_string())
    }
}

impl From<data::DataError> for Failure {
    fn from(e: data::DataError) -> Self {
        let status = match e {
            data::DataError::Io { .. } => BeatsStatus::Io,
            data::DataError::Wav { .. } | data::DataError::Manifest { .. } => BeatsStatus::Format,
            data::DataError::Config(_) | data::DataError::Modality { .. } => BeatsStatus::InvalidArgument,
            data::DataError::Encoder(_) => BeatsStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<beats_core::numcore::NumError> for Failure {
    fn from(e: beats_core::numcore::NumError) -> Self {
        Failure(BeatsStatus::InvalidArgument, e.to_string())
    }
}

impl From<beats_core::encoders::EncoderError> for Failure {
    fn from(e: beats_core::encoders::EncoderError) -> Self {
        Failure(BeatsStatus::InvalidArgument, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BeatsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            BeatsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            BeatsStatus::Panic
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if ptr.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if ptr.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn out<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn string(ptr: *const c_char, what: &str) -> Result<String, Failure> {
    if ptr.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::arg(format!("{what} is not UTF-8")))
}

fn matrix(data: &[f64], rows: usize, cols: usize) -> Result<RealArray, Failure> {
    Ok(RealArray::matrix(rows, cols, data.to_vec())?)
}

fn checked_len(a: usize, b: usize) -> Result<usize, Failure> {
    a.checked_mul(b).ok_or_else(|| Failure::arg(format!("{a}x{b} overflows")))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn beats_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn beats_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Entropic transport plan between uniform marginals for an `n×p` cost.
///
/// `plan_out` receives `n*p` values. `iterations_out` and `residual_out`
/// may be null. A run that hits `max_iter` still fills the plan but returns
/// `BEATS_STATUS_NUMERIC`.
///
/// # Safety
/// `cost` and `plan_out` must point to `n*p` doubles.
#[no_mangle]
pub unsafe extern "C" fn beats_sinkhorn(
    cost: *const f64,
    n: usize,
    p: usize,
    epsilon: f64,
    tol: f64,
    max_iter: usize,
    plan_out: *mut f64,
    iterations_out: *mut usize,
    residual_out: *mut f64,
) -> BeatsStatus {
    guard(|| {
        let len = checked_len(n, p)?;
        let cost = matrix(slice(cost, len, "cost")?, n, p)?;
        let plan_out = slice_mut(plan_out, len, "plan_out")?;
        let cfg = SinkhornConfig { epsilon, tol, max_iter };
        let plan = fusion::sinkhorn(&cost, &cfg)?;
        plan_out.copy_from_slice(plan.plan.data());
        if let Some(it) = iterations_out.as_mut() {
            *it = plan.iterations;
        }
        if let Some(r) = residual_out.as_mut() {
            *r = plan.residual;
        }
        if !plan.converged {
            return Err(Failure(
                BeatsStatus::Numeric,
                format!("no convergence after {} sweeps, residual {:e}", plan.iterations, plan.residual),
            ));
        }
        Ok(())
    })
}

/// Exact optimal transport for a square `n×n` cost (n at most 6).
///
/// # Safety
/// `cost` and `plan_out` must point to `n*n` doubles; `cost_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn beats_exact_ot(cost: *const f64, n: usize, plan_out: *mut f64, cost_out: *mut f64) -> BeatsStatus {
    guard(|| {
        let len = checked_len(n, n)?;
        let cost = matrix(slice(cost, len, "cost")?, n, n)?;
        let plan_out = slice_mut(plan_out, len, "plan_out")?;
        let exact = fusion::exact_ot_oracle(&cost)?;
        plan_out.copy_from_slice(exact.plan.data());
        if let Some(c) = cost_out.as_mut() {
            *c = exact.cost;
        }
        Ok(())
    })
}

/// Transport-based pooling of `n×d` features onto `p×d` references.
/// `out` receives the `p×d` pooled matrix.
///
/// # Safety
/// `features` must hold `n*d` doubles, `references` and `out` `p*d`.
#[no_mangle]
pub unsafe extern "C" fn beats_otk_pool(
    features: *const f64,
    n: usize,
    d: usize,
    references: *const f64,
    p: usize,
    epsilon: f64,
    tol: f64,
    max_iter: usize,
    out: *mut f64,
) -> BeatsStatus {
    guard(|| {
        let features = FeatureSequence {
            values: matrix(slice(features, checked_len(n, d)?, "features")?, n, d)?,
            modality: Modality::Fused,
        };
        let references = matrix(slice(references, checked_len(p, d)?, "references")?, p, d)?;
        let out = slice_mut(out, p * d, "out")?;
        let pooled = fusion::otk_pool(&features, &references, &SinkhornConfig { epsilon, tol, max_iter })?;
        out.copy_from_slice(pooled.data());
        Ok(())
    })
}

/// Weighted sum of the three head losses. The weights must be nonnegative
/// and sum to one.
///
/// # Safety
/// `loss_out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn beats_joint_loss(
    alpha: f64,
    beta: f64,
    gamma: f64,
    speech: f64,
    fused: f64,
    text: f64,
    loss_out: *mut f64,
) -> BeatsStatus {
    guard(|| {
        let loss_out = out(loss_out, "loss_out")?;
        let w = LossWeights::new(alpha, beta, gamma)?;
        *loss_out = model::joint_loss(&w, speech, fused, text)?;
        Ok(())
    })
}

/// Writes the default synthetic corpus with root `seed` into `out_dir`.
/// If `checksum_out` is not null it receives the 64-character sha256 of the
/// manifest and audio plus a nul, so it needs room for 65 bytes.
///
/// # Safety
/// `out_dir` must be a nul-terminated path; `checksum_out` must be null or
/// hold `checksum_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn beats_generate_dataset(
    out_dir: *const c_char,
    seed: u64,
    checksum_out: *mut c_char,
    checksum_len: usize,
) -> BeatsStatus {
    guard(|| {
        let dir = PathBuf::from(string(out_dir, "out_dir")?);
        if !checksum_out.is_null() && checksum_len < 65 {
            return Err(Failure::arg(format!("checksum buffer holds {checksum_len} bytes, need 65")));
        }
        let cfg = GeneratorConfig { seed, ..GeneratorConfig::default() };
        let manifest = data::generate_dataset(&cfg, &dir)?;
        if !checksum_out.is_null() {
            let sum = manifest.checksum()?;
            let buf = std::slice::from_raw_parts_mut(checksum_out.cast::<u8>(), 65);
            buf[..64].copy_from_slice(sum.as_bytes());
            buf[64] = 0;
        }
        Ok(())
    })
}

/// Waveform from `len` samples in [-1, 1].
///
/// # Safety
/// `samples` must hold `len` doubles and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn beats_waveform_new(
    samples: *const f64,
    len: usize,
    sample_rate: u32,
    out_handle: *mut *mut BeatsWaveform,
) -> BeatsStatus {
    guard(|| {
        let out_handle = out(out_handle, "out")?;
        let inner = Waveform::new(slice(samples, len, "samples")?.to_vec(), sample_rate)?;
        *out_handle = Box::into_raw(Box::new(BeatsWaveform { inner }));
        Ok(())
    })
}

/// Reads a 16-bit PCM mono WAV file.
///
/// # Safety
/// `path` must be nul-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn beats_waveform_read(path: *const c_char, out_handle: *mut *mut BeatsWaveform) -> BeatsStatus {
    guard(|| {
        let out_handle = out(out_handle, "out")?;
        let inner = data::read_wav(&PathBuf::from(string(path, "path")?))?;
        *out_handle = Box::into_raw(Box::new(BeatsWaveform { inner }));
        Ok(())
    })
}

/// Writes the waveform as 16-bit PCM mono WAV.
///
/// # Safety
/// `wave` must come from this library and `path` must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn beats_waveform_write(wave: *const BeatsWaveform, path: *const c_char) -> BeatsStatus {
    guard(|| {
        let wave = wave.as_ref().ok_or_else(|| Failure::null("wave"))?;
        data::write_wav(&wave.inner, &PathBuf::from(string(path, "path")?))?;
        Ok(())
    })
}

/// Number of samples, 0 for a null handle.
///
/// # Safety
/// `wave` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn beats_waveform_len(wave: *const BeatsWaveform) -> usize {
    wave.as_ref().map_or(0, |w| w.inner.len())
}

/// Sample rate in Hz, 0 for a null handle.
///
/// # Safety
/// `wave` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn beats_waveform_sample_rate(wave: *const BeatsWaveform) -> u32 {
    wave.as_ref().map_or(0, |w| w.inner.sample_rate())
}

/// Borrowed pointer to the samples, valid until the handle is freed.
///
/// # Safety
/// `wave` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn beats_waveform_samples(wave: *const BeatsWaveform) -> *const f64 {
    wave.as_ref().map_or(std::ptr::null(), |w| w.inner.samples().as_ptr())
}

/// # Safety
/// `wave` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn beats_waveform_free(wave: *mut BeatsWaveform) {
    if !wave.is_null() {
        drop(Box::from_raw(wave));
    }
}

/// Untrained model with default architecture. `variant` is one of
/// `speech_only`, `bimodal_concat`, `beats_xformer`, `beats_otk`.
///
/// # Safety
/// `variant` must be nul-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn beats_model_new(variant: *const c_char, seed: u64, out_handle: *mut *mut BeatsModel) -> BeatsStatus {
    guard(|| {
        let out_handle = out(out_handle, "out")?;
        let variant = string(variant, "variant")?.parse::<ModelVariant>()?;
        let vocab = Vocabulary::for_language(Language::English).len();
        let config = ModelConfig { seed, ..ModelConfig::new(variant, vocab) };
        let inner = Model::new(config)?;
        *out_handle = Box::into_raw(Box::new(BeatsModel { inner }));
        Ok(())
    })
}

/// Loads a model saved by `beats train` or [`beats_model_save`].
///
/// # Safety
/// `path` must be nul-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn beats_model_load(path: *const c_char, out_handle: *mut *mut BeatsModel) -> BeatsStatus {
    guard(|| {
        let out_handle = out(out_handle, "out")?;
        let inner = Model::load(&PathBuf::from(string(path, "path")?))?;
        *out_handle = Box::into_raw(Box::new(BeatsModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and `path` must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn beats_model_save(model: *const BeatsModel, path: *const c_char) -> BeatsStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| Failure::null("model"))?;
        model.inner.save(&PathBuf::from(string(path, "path")?))?;
        Ok(())
    })
}

/// Class probabilities for one utterance, in the order request, question,
/// order. `english` is the space-separated transcript; it is ignored by the
/// speech-only variant. `label_out` (may be null) receives the argmax.
///
/// # Safety
/// Handles must come from this library, `english` must be nul-terminated
/// and `probs_out` must hold 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn beats_model_predict(
    model: *const BeatsModel,
    wave: *const BeatsWaveform,
    english: *const c_char,
    probs_out: *mut f64,
    label_out: *mut u32,
) -> BeatsStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| Failure::null("model"))?;
        let wave = wave.as_ref().ok_or_else(|| Failure::null("wave"))?;
        let text = string(english, "english")?;
        let words: Vec<&str> = text.split_whitespace().collect();
        let tokens = Vocabulary::for_language(Language::English).encode(&words)?;
        let probs_out = slice_mut(probs_out, NUM_CLASSES, "probs_out")?;
        let probs = model.inner.predict(&wave.inner, &tokens)?;
        probs_out.copy_from_slice(&probs);
        if let Some(l) = label_out.as_mut() {
            let best = (0..NUM_CLASSES).fold(0, |b, i| if probs[i] > probs[b] { i } else { b });
            *l = best as u32;
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn beats_model_free(model: *mut BeatsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

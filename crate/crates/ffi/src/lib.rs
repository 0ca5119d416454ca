//! C ABI for the capsrl semantic role labeler.
//!
//! Conventions: every function returns a [`CapsrlStatus`]; on failure a
//! thread-local message is retrievable via [`capsrl_last_error`] until the
//! next failing call on the same thread. Models are opaque handles
//! created by [`capsrl_model_load`] and released by [`capsrl_model_free`].
//! All paths are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use capsrl::capsule::{Checkpoint, ModelError, SrlModel, Variant};
use capsrl::config::RunConfig;
use capsrl::pipeline::{evaluate_files, predict_file, run_training_job};
use capsrl::synthetic::{generate, GrammarSpec};

/// ABI revision; bump on breaking changes to this header.
pub const CAPSRL_ABI_VERSION: u32 = 1;

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapsrlStatus {
    Ok = 0,
    /// File could not be read or written.
    Io = 1,
    /// Malformed input file (CoNLL, embeddings, checkpoint, config).
    Parse = 2,
    /// Invalid configuration or mismatched shapes.
    Config = 3,
    /// Non-finite values during computation.
    Numeric = 4,
    /// Null pointer, bad UTF-8 or otherwise invalid argument.
    InvalidArgument = 5,
    /// Internal panic; state may be inconsistent.
    Internal = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(err: &ModelError) -> CapsrlStatus {
    match err {
        ModelError::Io { .. } => CapsrlStatus::Io,
        ModelError::Data(_) | ModelError::Checkpoint(_) => CapsrlStatus::Parse,
        ModelError::NonFinite(_) => CapsrlStatus::Numeric,
        ModelError::Tensor(_)
        | ModelError::EmptySentence
        | ModelError::BadIterations
        | ModelError::Config(_)
        | ModelError::Training(_) => CapsrlStatus::Config,
    }
}

fn fail(status: CapsrlStatus, msg: impl Into<String>) -> CapsrlStatus {
    set_error(msg.into());
    status
}

fn fail_model(err: ModelError) -> CapsrlStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

/// Last error message of this thread, or NULL when no error is recorded.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn capsrl_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|c| c.as_ptr())
            .unwrap_or(ptr::null())
    })
}

#[no_mangle]
pub extern "C" fn capsrl_abi_version() -> u32 {
    CAPSRL_ABI_VERSION
}

enum ModelImpl {
    F64(SrlModel<f64>),
    F32(SrlModel<f32>),
}

/// Opaque model handle.
pub struct CapsrlModel {
    inner: ModelImpl,
}

/// # Safety
/// `ptr` must be non-null and point to a NUL-terminated string.
unsafe fn path_arg(ptr: *const c_char, what: &str) -> Result<PathBuf, CapsrlStatus> {
    if ptr.is_null() {
        return Err(fail(
            CapsrlStatus::InvalidArgument,
            format!("{what} is null"),
        ));
    }
    match unsafe { CStr::from_ptr(ptr) }.to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(fail(
            CapsrlStatus::InvalidArgument,
            format!("{what} is not valid UTF-8"),
        )),
    }
}

fn guarded(body: impl FnOnce() -> CapsrlStatus) -> CapsrlStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(CapsrlStatus::Internal, "internal panic"),
    }
}

/// Load a checkpoint file into a new model handle.
///
/// # Safety
/// `checkpoint_path` must be a valid NUL-terminated string and `out` a
/// valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn capsrl_model_load(
    checkpoint_path: *const c_char,
    out: *mut *mut CapsrlModel,
) -> CapsrlStatus {
    guarded(|| {
        if out.is_null() {
            return fail(CapsrlStatus::InvalidArgument, "out pointer is null");
        }
        let path = match unsafe { path_arg(checkpoint_path, "checkpoint path") } {
            Ok(p) => p,
            Err(status) => return status,
        };
        let cp = match Checkpoint::load(&path) {
            Ok(cp) => cp,
            Err(e) => return fail_model(e),
        };
        let inner = match cp.precision.as_str() {
            "f64" => SrlModel::<f64>::from_checkpoint(&cp).map(ModelImpl::F64),
            "f32" => SrlModel::<f32>::from_checkpoint(&cp).map(ModelImpl::F32),
            other => {
                return fail(
                    CapsrlStatus::Parse,
                    format!("checkpoint has unknown precision '{other}'"),
                )
            }
        };
        match inner {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(CapsrlModel { inner })) };
                CapsrlStatus::Ok
            }
            Err(e) => fail_model(e),
        }
    })
}

/// Release a model handle. NULL is ignored.
///
/// # Safety
/// `model` must be a handle returned by [`capsrl_model_load`] that has not
/// been freed yet.
#[no_mangle]
pub unsafe extern "C" fn capsrl_model_free(model: *mut CapsrlModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Model metadata, filled by [`capsrl_model_info`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapsrlModelInfo {
    /// 0 baseline, 1 mean_capsules, 2 capsule_no_global, 3 capsule_global.
    pub variant: u32,
    /// Trained routing iterations T.
    pub iterations: u32,
    /// Role inventory size, the none role included.
    pub roles: u32,
    pub capsule_size: u32,
    pub embedding_dim: u32,
    pub encoder_dim: u32,
    /// 32 or 64.
    pub precision_bits: u32,
}

/// # Safety
/// `model` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn capsrl_model_info(
    model: *const CapsrlModel,
    out: *mut CapsrlModelInfo,
) -> CapsrlStatus {
    guarded(|| {
        if model.is_null() || out.is_null() {
            return fail(CapsrlStatus::InvalidArgument, "null pointer");
        }
        let handle = unsafe { &*model };
        let info = match &handle.inner {
            ModelImpl::F64(m) => model_info(m, 64),
            ModelImpl::F32(m) => model_info(m, 32),
        };
        unsafe { *out = info };
        CapsrlStatus::Ok
    })
}

fn model_info<T: capsrl::tensor::Real>(m: &SrlModel<T>, bits: u32) -> CapsrlModelInfo {
    CapsrlModelInfo {
        variant: match m.config.mode.variant {
            Variant::Baseline => 0,
            Variant::MeanCapsules => 1,
            Variant::CapsuleNoGlobal => 2,
            Variant::CapsuleGlobal => 3,
        },
        iterations: m.config.mode.iterations as u32,
        roles: m.vocab.n_roles() as u32,
        capsule_size: m.config.capsule_k as u32,
        embedding_dim: m.config.encoder.d_e as u32,
        encoder_dim: m.config.encoder.d_l as u32,
        precision_bits: bits,
    }
}

/// Label a CoNLL file and write the predictions in the same column
/// layout. `iterations` of 0 keeps the trained count; a positive value
/// overrides it at inference. `trajectory_path` may be NULL; when given,
/// per-iteration coupling distributions are dumped there as JSON lines.
///
/// # Safety
/// `model` must be a live handle; paths must be valid NUL-terminated
/// strings (or NULL where documented).
#[no_mangle]
pub unsafe extern "C" fn capsrl_predict_file(
    model: *const CapsrlModel,
    input_path: *const c_char,
    output_path: *const c_char,
    iterations: u32,
    trajectory_path: *const c_char,
) -> CapsrlStatus {
    guarded(|| {
        if model.is_null() {
            return fail(CapsrlStatus::InvalidArgument, "model handle is null");
        }
        let input = match unsafe { path_arg(input_path, "input path") } {
            Ok(p) => p,
            Err(s) => return s,
        };
        let output = match unsafe { path_arg(output_path, "output path") } {
            Ok(p) => p,
            Err(s) => return s,
        };
        let dump: Option<PathBuf> = if trajectory_path.is_null() {
            None
        } else {
            match unsafe { path_arg(trajectory_path, "trajectory path") } {
                Ok(p) => Some(p),
                Err(s) => return s,
            }
        };
        let t_override = if iterations == 0 {
            None
        } else {
            Some(iterations as usize)
        };
        let handle = unsafe { &*model };
        let result = match &handle.inner {
            ModelImpl::F64(m) => {
                predict_file(m, &input, &output, t_override, dump.as_deref(), None)
            }
            ModelImpl::F32(m) => {
                predict_file(m, &input, &output, t_override, dump.as_deref(), None)
            }
        };
        match result {
            Ok(_) => CapsrlStatus::Ok,
            Err(e) => fail_model(e),
        }
    })
}

/// Evaluation counts and ratios, filled by [`capsrl_evaluate_files`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapsrlEvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub exact_match: f64,
    pub token_accuracy: f64,
    pub predicted_args: u64,
    pub gold_args: u64,
    pub correct_args: u64,
    pub propositions: u64,
}

/// Score a predicted CoNLL file against gold (role part only; senses are
/// echoed through unscored).
///
/// # Safety
/// Paths must be valid NUL-terminated strings; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn capsrl_evaluate_files(
    gold_path: *const c_char,
    predicted_path: *const c_char,
    out: *mut CapsrlEvalReport,
) -> CapsrlStatus {
    guarded(|| {
        if out.is_null() {
            return fail(CapsrlStatus::InvalidArgument, "out pointer is null");
        }
        let gold = match unsafe { path_arg(gold_path, "gold path") } {
            Ok(p) => p,
            Err(s) => return s,
        };
        let predicted = match unsafe { path_arg(predicted_path, "predicted path") } {
            Ok(p) => p,
            Err(s) => return s,
        };
        match evaluate_files(&gold, &predicted) {
            Ok(report) => {
                unsafe {
                    *out = CapsrlEvalReport {
                        precision: report.precision,
                        recall: report.recall,
                        f1: report.f1,
                        exact_match: report.exact_match,
                        token_accuracy: report.token_accuracy,
                        predicted_args: report.predicted_args as u64,
                        gold_args: report.gold_args as u64,
                        correct_args: report.correct_args as u64,
                        propositions: report.propositions as u64,
                    };
                }
                CapsrlStatus::Ok
            }
            Err(e) => fail_model(e),
        }
    })
}

/// Generate a synthetic corpus: `n_train` training sentences plus dev and
/// test splits under `out_dir`. `spec_toml_path` may be NULL for the
/// default grammar; `seed` overrides the spec's seed when nonzero.
///
/// # Safety
/// Paths must be valid NUL-terminated strings (or NULL where documented).
#[no_mangle]
pub unsafe extern "C" fn capsrl_generate_corpus(
    spec_toml_path: *const c_char,
    n_train: u32,
    seed: u64,
    out_dir: *const c_char,
) -> CapsrlStatus {
    guarded(|| {
        let dir = match unsafe { path_arg(out_dir, "output directory") } {
            Ok(p) => p,
            Err(s) => return s,
        };
        let mut spec = if spec_toml_path.is_null() {
            GrammarSpec::default()
        } else {
            let path = match unsafe { path_arg(spec_toml_path, "spec path") } {
                Ok(p) => p,
                Err(s) => return s,
            };
            let text = match std::fs::read_to_string(&path) {
                Ok(t) => t,
                Err(e) => return fail(CapsrlStatus::Io, format!("{}: {e}", path.display())),
            };
            match toml::from_str(&text) {
                Ok(s) => s,
                Err(e) => return fail(CapsrlStatus::Parse, format!("bad grammar spec: {e}")),
            }
        };
        if seed != 0 {
            spec.seed = seed;
        }
        let corpus = match generate(&spec, n_train as usize) {
            Ok(c) => c,
            Err(e) => return fail(CapsrlStatus::Config, e.to_string()),
        };
        match corpus.write(&dir) {
            Ok(_) => CapsrlStatus::Ok,
            Err(e) => fail(CapsrlStatus::Io, e.to_string()),
        }
    })
}

/// Run a full training job from a TOML run configuration. Writes the
/// checkpoint, log and resolved config under the configured output
/// directory (or `out_dir_override` when non-NULL).
///
/// # Safety
/// Paths must be valid NUL-terminated strings (or NULL where documented).
#[no_mangle]
pub unsafe extern "C" fn capsrl_train_file(
    config_toml_path: *const c_char,
    out_dir_override: *const c_char,
) -> CapsrlStatus {
    guarded(|| {
        let config_path = match unsafe { path_arg(config_toml_path, "config path") } {
            Ok(p) => p,
            Err(s) => return s,
        };
        let mut cfg = match RunConfig::load(&config_path) {
            Ok(c) => c,
            Err(e) => return fail_model(e),
        };
        if !out_dir_override.is_null() {
            match unsafe { path_arg(out_dir_override, "output directory") } {
                Ok(p) => cfg.out_dir = p,
                Err(s) => return s,
            }
        }
        match run_training_job(&cfg) {
            Ok(_) => CapsrlStatus::Ok,
            Err(e) => fail_model(e),
        }
    })
}

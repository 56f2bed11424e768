//! C ABI over the evacnet library.
//!
//! Every function returns an [`EvacStatus`]. On failure the message is kept
//! per thread and read back with [`evac_last_error_message`]. Models are
//! opaque handles released with [`evac_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, UnwindSafe};
use std::path::PathBuf;

use evacnet::checkpoint::CheckpointError;
use evacnet::data::DataError;
use evacnet::metrics::{self, MetricReport, MetricsError};
use evacnet::synth::{self, Scenario, SynthError};
use evacnet::trainer::{evaluate_model, load_model, run_train, TrainConfig, TrainError, TrainedModel};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvacStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Schema = 4,
    Config = 5,
    RegistryMismatch = 6,
    Numeric = 7,
    Internal = 8,
    BufferTooSmall = 9,
}

/// Error metrics over paired samples. `mape` and `r2` are meaningful only
/// when the matching `*_defined` flag is set.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvacMetricReport {
    pub rmse: f64,
    pub mae: f64,
    /// percent
    pub mape: f64,
    pub r2: f64,
    pub mape_defined: bool,
    pub r2_defined: bool,
    pub n: u64,
    pub mape_skipped: u64,
}

impl From<&MetricReport> for EvacMetricReport {
    fn from(m: &MetricReport) -> Self {
        EvacMetricReport {
            rmse: m.rmse,
            mae: m.mae,
            mape: m.mape.unwrap_or(f64::NAN),
            r2: m.r2.unwrap_or(f64::NAN),
            mape_defined: m.mape.is_some(),
            r2_defined: m.r2.is_some(),
            n: m.n as u64,
            mape_skipped: m.mape_skipped as u64,
        }
    }
}

/// Trained model handle.
pub struct EvacModel {
    inner: TrainedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(EvacStatus, String);

impl Failure {
    fn new(status: EvacStatus, msg: impl Into<String>) -> Self {
        Failure(status, msg.into())
    }
}

fn data_status(e: &DataError) -> EvacStatus {
    match e {
        DataError::Io(_) => EvacStatus::Io,
        _ => EvacStatus::Schema,
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        let status = match &e {
            TrainError::Config(_) => EvacStatus::Config,
            TrainError::Data(d) => data_status(d),
            TrainError::Io { .. } | TrainError::Checkpoint(CheckpointError::Io { .. }) => EvacStatus::Io,
            TrainError::Checkpoint(_) | TrainError::NoWindows(_) => EvacStatus::Schema,
            TrainError::RegistryMismatch { .. } => EvacStatus::RegistryMismatch,
            TrainError::Divergence { .. } | TrainError::Num(_) => EvacStatus::Numeric,
            _ if e.is_user_error() => EvacStatus::Config,
            _ => EvacStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        let status = match &e {
            SynthError::Io { .. } | SynthError::Read { .. } => EvacStatus::Io,
            SynthError::Data(d) => data_status(d),
            _ => EvacStatus::Config,
        };
        Failure(status, e.to_string())
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        Failure(EvacStatus::Config, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure> + UnwindSafe) -> EvacStatus {
    match catch_unwind(f) {
        Ok(Ok(())) => EvacStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            EvacStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(EvacStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(EvacStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn opt_path(p: *const c_char, name: &str) -> Result<Option<PathBuf>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(|s| Some(PathBuf::from(s)))
    }
}

unsafe fn model_ref<'a>(m: *const EvacModel) -> Result<&'a TrainedModel, Failure> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| Failure::new(EvacStatus::NullPointer, "model is null"))
}

fn out_ptr<T>(p: *mut T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(EvacStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn evac_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn evac_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Writes a synthetic scenario (builtin name or JSON path) into `out_dir`.
/// `seed` overrides the scenario seed when `override_seed` is set.
///
/// # Safety
/// `scenario` and `out_dir` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn evac_generate_scenario(
    scenario: *const c_char,
    out_dir: *const c_char,
    override_seed: bool,
    seed: u64,
) -> EvacStatus {
    guard(|| {
        let name = str_arg(scenario, "scenario")?;
        let out = str_arg(out_dir, "out_dir")?;
        let mut sc = Scenario::resolve(name)?;
        if override_seed {
            sc.seed = seed;
        }
        let g = synth::generate(&sc)?;
        synth::write_scenario(&g, out.as_ref())?;
        Ok(())
    })
}

/// Trains from a JSON config and writes artifacts to `out_dir` (the
/// config's `out_dir` when NULL). When `model_out` is non-NULL it receives
/// a handle to the trained model, to be released with `evac_model_free`.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out_dir` NULL or one;
/// `model_out` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn evac_train(
    config_path: *const c_char,
    out_dir: *const c_char,
    model_out: *mut *mut EvacModel,
) -> EvacStatus {
    guard(|| {
        let path = str_arg(config_path, "config_path")?;
        let mut cfg = TrainConfig::from_file(path.as_ref())?;
        if let Some(out) = opt_path(out_dir, "out_dir")? {
            cfg.out_dir = Some(out);
        }
        let art = run_train(&cfg)?;
        if !model_out.is_null() {
            let inner = load_model(&art.checkpoint)?;
            *model_out = Box::into_raw(Box::new(EvacModel { inner }));
        }
        Ok(())
    })
}

/// Loads a model checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `model_out` writable.
#[no_mangle]
pub unsafe extern "C" fn evac_model_load(path: *const c_char, model_out: *mut *mut EvacModel) -> EvacStatus {
    guard(|| {
        out_ptr(model_out, "model_out")?;
        let p = str_arg(path, "path")?;
        let inner = load_model(p.as_ref())?;
        *model_out = Box::into_raw(Box::new(EvacModel { inner }));
        Ok(())
    })
}

/// Releases a handle from `evac_model_load` or `evac_train`. NULL is a no-op.
///
/// # Safety
/// `model` must be NULL or a live handle not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn evac_model_free(model: *mut EvacModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of input features in the model's registry.
///
/// # Safety
/// `model` must be a live handle and `count_out` writable.
#[no_mangle]
pub unsafe extern "C" fn evac_model_feature_count(model: *const EvacModel, count_out: *mut usize) -> EvacStatus {
    guard(|| {
        out_ptr(count_out, "count_out")?;
        *count_out = model_ref(model)?.registry.names.len();
        Ok(())
    })
}

/// Copies feature `index`'s name into `buf` with a trailing NUL.
/// `needed_out`, when non-NULL, receives the required size including the
/// NUL; a short buffer yields `BufferTooSmall` and is left untouched.
///
/// # Safety
/// `model` must be a live handle, `buf` writable for `buf_len` bytes (or
/// NULL with `buf_len` 0), `needed_out` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn evac_model_feature_name(
    model: *const EvacModel,
    index: usize,
    buf: *mut c_char,
    buf_len: usize,
    needed_out: *mut usize,
) -> EvacStatus {
    guard(|| {
        let names = &model_ref(model)?.registry.names;
        let name = names.get(index).ok_or_else(|| {
            Failure::new(EvacStatus::Config, format!("feature index {index} out of range ({} features)", names.len()))
        })?;
        let needed = name.len() + 1;
        if !needed_out.is_null() {
            *needed_out = needed;
        }
        if buf.is_null() || buf_len < needed {
            return Err(Failure::new(EvacStatus::BufferTooSmall, format!("feature name needs {needed} bytes")));
        }
        std::ptr::copy_nonoverlapping(name.as_ptr(), buf.cast::<u8>(), name.len());
        *buf.add(name.len()) = 0;
        Ok(())
    })
}

/// Forecast horizon `p` of the model.
///
/// # Safety
/// `model` must be a live handle and `horizon_out` writable.
#[no_mangle]
pub unsafe extern "C" fn evac_model_horizon(model: *const EvacModel, horizon_out: *mut usize) -> EvacStatus {
    guard(|| {
        out_ptr(horizon_out, "horizon_out")?;
        *horizon_out = model_ref(model)?.config.p;
        Ok(())
    })
}

/// Scores `model` on every window of the dataset in `data_dir`. Fills
/// `reports` with one entry per horizon followed by the pooled overall entry
/// (`horizon + 1` in total); `written_out` receives that count. `out_dir`,
/// when non-NULL, receives the metrics CSV.
///
/// # Safety
/// `model` must be a live handle; `data_dir` NUL-terminated; `out_dir` NULL
/// or NUL-terminated; `reports` writable for `capacity` entries;
/// `written_out` writable.
#[no_mangle]
pub unsafe extern "C" fn evac_model_evaluate(
    model: *const EvacModel,
    data_dir: *const c_char,
    out_dir: *const c_char,
    reports: *mut EvacMetricReport,
    capacity: usize,
    written_out: *mut usize,
) -> EvacStatus {
    guard(|| {
        out_ptr(written_out, "written_out")?;
        let tm = model_ref(model)?;
        let data = str_arg(data_dir, "data_dir")?;
        let out = opt_path(out_dir, "out_dir")?;
        let needed = tm.config.p + 1;
        *written_out = needed;
        if reports.is_null() || capacity < needed {
            return Err(Failure::new(EvacStatus::BufferTooSmall, format!("need room for {needed} reports")));
        }
        let report = evaluate_model(tm, data.as_ref(), out.as_deref())?;
        let rows: Vec<EvacMetricReport> = report.horizons.iter().chain([&report.overall]).map(Into::into).collect();
        std::ptr::copy_nonoverlapping(rows.as_ptr(), reports, rows.len());
        Ok(())
    })
}

/// Computes RMSE, MAE, MAPE and R² over `n` paired samples.
///
/// # Safety
/// `actual` and `predicted` must be readable for `n` values; `report_out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn evac_metrics_compute(
    actual: *const f64,
    predicted: *const f64,
    n: usize,
    report_out: *mut EvacMetricReport,
) -> EvacStatus {
    guard(|| {
        out_ptr(report_out, "report_out")?;
        if n > 0 && (actual.is_null() || predicted.is_null()) {
            return Err(Failure::new(EvacStatus::NullPointer, "sample array is null"));
        }
        let (a, p) = if n == 0 {
            (&[][..], &[][..])
        } else {
            (std::slice::from_raw_parts(actual, n), std::slice::from_raw_parts(predicted, n))
        };
        *report_out = (&metrics::compute(a, p)?).into();
        Ok(())
    })
}

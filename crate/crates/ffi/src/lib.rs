//! C ABI over `cfkit`.
//!
//! Every function returns a [`CfkStatus`]; on failure the message is
//! available from [`cfk_last_error`] on the same thread. Ratings and factor
//! models are opaque handles released with their `_free` function. Indices
//! are 0-based.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cfkit::data::{load_ratings, rmse_values, LoadOptions, Rating, RatingMatrix};
use cfkit::factor::{als_train, funksvd_train, svd_baseline, AlsConfig, FactorModel, FunkConfig};
use cfkit::presets::Preset;
use cfkit::CfError;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CfkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Range = 4,
    Config = 5,
    Numeric = 6,
    Key = 7,
    Shape = 8,
    Io = 9,
    Model = 10,
    Internal = 11,
    Panic = 12,
}

/// Opaque rating matrix.
pub struct CfkRatings(RatingMatrix);

/// Opaque trained latent-factor model.
pub struct CfkFactorModel(FactorModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &CfError) -> CfkStatus {
    match e {
        CfError::Parse { .. } | CfError::Duplicate { .. } => CfkStatus::Parse,
        CfError::Range { .. } => CfkStatus::Range,
        CfError::Config(_) => CfkStatus::Config,
        CfError::Numeric(_) => CfkStatus::Numeric,
        CfError::Key(_) => CfkStatus::Key,
        CfError::Shape { .. } => CfkStatus::Shape,
        CfError::Model { .. } => CfkStatus::Model,
        CfError::Internal(_) => CfkStatus::Internal,
        CfError::Io(_) => CfkStatus::Io,
    }
}

struct Failure(CfkStatus, String);

impl From<CfError> for Failure {
    fn from(e: CfError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure(CfkStatus::Io, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CfkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CfkStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside cfkit".into());
            CfkStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(CfkStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: the caller passes null or a live pointer of the right type.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null and, per the contract, NUL-terminated.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure(CfkStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null and the caller promises `n` readable elements.
    Ok(unsafe { std::slice::from_raw_parts(p, n) })
}

unsafe fn slice_out<'a, T>(p: *mut T, n: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null and the caller promises `n` writable elements.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, n) })
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null, caller-owned slot.
    unsafe { out.write(value) };
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next cfkit call on the same thread.
#[no_mangle]
pub extern "C" fn cfk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a ratings file (`Id,Prediction` header, `r<u>_c<i>,<value>` rows).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cfk_ratings_load(path: *const c_char, out: *mut *mut CfkRatings) -> CfkStatus {
    guard(|| {
        let path = unsafe { str_arg(path, "path")? };
        let m = load_ratings(BufReader::new(File::open(path)?), LoadOptions::default())?;
        unsafe { write_out(out, Box::into_raw(Box::new(CfkRatings(m))), "out") }
    })
}

/// Builds a rating matrix from `n` parallel arrays of 0-based coordinates.
///
/// # Safety
/// `users`, `items` and `values` must each hold `n` readable elements.
#[no_mangle]
pub unsafe extern "C" fn cfk_ratings_from_triples(
    n_users: usize,
    n_items: usize,
    users: *const usize,
    items: *const usize,
    values: *const f64,
    n: usize,
    out: *mut *mut CfkRatings,
) -> CfkStatus {
    guard(|| {
        let (us, is, vs) = unsafe {
            (slice_arg(users, n, "users")?, slice_arg(items, n, "items")?, slice_arg(values, n, "values")?)
        };
        let entries = us
            .iter()
            .zip(is)
            .zip(vs)
            .map(|((&user, &item), &value)| Rating { user, item, value })
            .collect();
        let m = RatingMatrix::new(n_users, n_items, entries)?;
        unsafe { write_out(out, Box::into_raw(Box::new(CfkRatings(m))), "out") }
    })
}

/// # Safety
/// `r` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cfk_ratings_free(r: *mut CfkRatings) {
    if !r.is_null() {
        // SAFETY: created by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(r) });
    }
}

/// # Safety
/// `r` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cfk_ratings_shape(
    r: *const CfkRatings,
    n_users: *mut usize,
    n_items: *mut usize,
    n_ratings: *mut usize,
) -> CfkStatus {
    guard(|| {
        let m = unsafe { &borrow(r, "ratings")?.0 };
        unsafe {
            write_out(n_users, m.n_users(), "n_users")?;
            write_out(n_items, m.n_items(), "n_items")?;
            write_out(n_ratings, m.len(), "n_ratings")
        }
    })
}

unsafe fn train(
    r: *const CfkRatings,
    out: *mut *mut CfkFactorModel,
    f: impl FnOnce(&RatingMatrix) -> cfkit::Result<FactorModel>,
) -> CfkStatus {
    guard(|| {
        let m = unsafe { &borrow(r, "ratings")?.0 };
        let model = f(m)?;
        unsafe { write_out(out, Box::into_raw(Box::new(CfkFactorModel(model))), "out") }
    })
}

/// Rank-`rank` truncated SVD of the column-normalized matrix.
///
/// # Safety
/// `r` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cfk_train_svd(r: *const CfkRatings, rank: usize, out: *mut *mut CfkFactorModel) -> CfkStatus {
    unsafe { train(r, out, |m| svd_baseline(m, rank)) }
}

/// # Safety
/// `r` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cfk_train_als(
    r: *const CfkRatings,
    rank: usize,
    lambda: f64,
    iterations: usize,
    out: *mut *mut CfkFactorModel,
) -> CfkStatus {
    unsafe { train(r, out, |m| als_train(m, &AlsConfig { rank, lambda, iterations })) }
}

/// FunkSVD with equal user and item penalties `reg`.
///
/// # Safety
/// `r` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cfk_train_funksvd(
    r: *const CfkRatings,
    rank: usize,
    eta: f64,
    reg: f64,
    epochs: usize,
    seed: u64,
    out: *mut *mut CfkFactorModel,
) -> CfkStatus {
    let cfg = FunkConfig { rank, eta, alpha: reg, beta: reg, epochs, seed, ..FunkConfig::default() };
    unsafe { train(r, out, |m| funksvd_train(m, &cfg)) }
}

/// # Safety
/// `m` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cfk_model_free(m: *mut CfkFactorModel) {
    if !m.is_null() {
        // SAFETY: created by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(m) });
    }
}

/// # Safety
/// `m` must be a live handle and `rank` writable.
#[no_mangle]
pub unsafe extern "C" fn cfk_model_rank(m: *const CfkFactorModel, rank: *mut usize) -> CfkStatus {
    guard(|| unsafe { write_out(rank, borrow(m, "model")?.0.rank(), "rank") })
}

/// Unclipped prediction for `n` (user, item) pairs.
///
/// # Safety
/// `users`, `items` must hold `n` readable and `out` `n` writable elements.
#[no_mangle]
pub unsafe extern "C" fn cfk_model_predict(
    m: *const CfkFactorModel,
    users: *const usize,
    items: *const usize,
    n: usize,
    out: *mut f64,
) -> CfkStatus {
    guard(|| {
        let model = unsafe { &borrow(m, "model")?.0 };
        let (us, is) = unsafe { (slice_arg(users, n, "users")?, slice_arg(items, n, "items")?) };
        let dst = unsafe { slice_out(out, n, "out")? };
        for ((d, &u), &i) in dst.iter_mut().zip(us).zip(is) {
            *d = model.predict(u, i)?;
        }
        Ok(())
    })
}

/// # Safety
/// `m` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cfk_model_save(m: *const CfkFactorModel, path: *const c_char) -> CfkStatus {
    guard(|| {
        let model = unsafe { &borrow(m, "model")?.0 };
        let path = unsafe { str_arg(path, "path")? };
        model.save(BufWriter::new(File::create(path)?))?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cfk_model_load(path: *const c_char, out: *mut *mut CfkFactorModel) -> CfkStatus {
    guard(|| {
        let path = unsafe { str_arg(path, "path")? };
        let model = FactorModel::load(BufReader::new(File::open(path)?))?;
        unsafe { write_out(out, Box::into_raw(Box::new(CfkFactorModel(model))), "out") }
    })
}

/// Trains the named preset (inline overrides allowed, e.g. `als:rank=5`) on
/// `train` and writes unclipped predictions for `n` query pairs.
///
/// # Safety
/// `preset` must be NUL-terminated; `users`, `items` must hold `n` readable
/// and `out` `n` writable elements.
#[no_mangle]
pub unsafe extern "C" fn cfk_preset_fit_predict(
    train: *const CfkRatings,
    preset: *const c_char,
    seed: u64,
    users: *const usize,
    items: *const usize,
    n: usize,
    out: *mut f64,
) -> CfkStatus {
    guard(|| {
        let m = unsafe { &borrow(train, "train")?.0 };
        let mut p = Preset::parse(unsafe { str_arg(preset, "preset")? })?;
        p.set_seed(seed);
        let (us, is) = unsafe { (slice_arg(users, n, "users")?, slice_arg(items, n, "items")?) };
        let pairs: Vec<(usize, usize)> = us.iter().copied().zip(is.iter().copied()).collect();
        let preds = p.fit_predict(m, &pairs)?;
        unsafe { slice_out(out, n, "out")? }.copy_from_slice(&preds);
        Ok(())
    })
}

/// Root mean squared error of `n` predictions.
///
/// # Safety
/// `pred` and `truth` must hold `n` readable elements, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cfk_rmse(pred: *const f64, truth: *const f64, n: usize, out: *mut f64) -> CfkStatus {
    guard(|| {
        if n == 0 {
            return Err(Failure(CfkStatus::Shape, "rmse of zero values".into()));
        }
        let (p, t) = unsafe { (slice_arg(pred, n, "pred")?, slice_arg(truth, n, "truth")?) };
        unsafe { write_out(out, rmse_values(p, t), "out") }
    })
}

//! C ABI over the copb core.
//!
//! Every function returns a [`CopbStatus`] and writes results through out-pointers. On failure
//! a message is kept per thread and can be read with [`copb_last_error`]. Strings handed out by
//! the library are freed with [`copb_string_free`]; POI indexes with [`copb_poi_index_free`].
//!
//! # Safety
//!
//! Pointer arguments must be null or valid for the access the function makes: out-pointers
//! writable, strings nul-terminated, arrays readable (or writable) for the stated length, and
//! handles live and produced by this library. Null is always reported as
//! [`CopbStatus::NullPointer`] rather than dereferenced.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use copb::gravity::{build_index, fit_decay_exponent, load_pois, sample_index, SpatialIndex};
use copb::metrics::{evaluate, jsd_vectors, Corpus, EvalConfig};
use copb::model::{haversine_km, parse_time_window, GeoPoint};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CopbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Compute = 5,
    Panic = 6,
}

/// Opaque spatial index over a POI table.
pub struct CopbPoiIndex {
    inner: SpatialIndex,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(CopbStatus, String);

impl Failure {
    fn new(status: CopbStatus, msg: impl ToString) -> Self {
        Self(status, msg.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CopbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CopbStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CopbStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: callers pass either null or a valid, writable pointer.
    unsafe { p.as_mut() }.ok_or_else(|| Failure::new(CopbStatus::NullPointer, format!("{name} is null")))
}

unsafe fn string<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(CopbStatus::NullPointer, format!("{name} is null")));
    }
    // SAFETY: non-null and nul-terminated per the API contract.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure::new(CopbStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::new(CopbStatus::NullPointer, format!("{name} is null")));
    }
    // SAFETY: `p` points to `len` readable doubles per the API contract.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn point(lat: f64, lon: f64) -> Result<GeoPoint, Failure> {
    GeoPoint::new(lat, lon).map_err(|e| Failure::new(CopbStatus::InvalidArgument, e))
}

/// Message for the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn copb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn copb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Great-circle distance in km.
#[no_mangle]
pub unsafe extern "C" fn copb_haversine_km(
    lat1: f64,
    lon1: f64,
    lat2: f64,
    lon2: f64,
    out_km: *mut f64,
) -> CopbStatus {
    guard(|| {
        let d = haversine_km(point(lat1, lon1)?, point(lat2, lon2)?);
        *out(out_km, "out_km")? = d;
        Ok(())
    })
}

/// Parses `"(HH:MM, HH:MM)"` into minutes after midnight.
#[no_mangle]
pub unsafe extern "C" fn copb_parse_time_window(
    text: *const c_char,
    out_start: *mut u16,
    out_end: *mut u16,
) -> CopbStatus {
    guard(|| {
        let w = parse_time_window(string(text, "text")?).map_err(|e| Failure::new(CopbStatus::Parse, e))?;
        *out(out_start, "out_start")? = w.start();
        *out(out_end, "out_end")? = w.end();
        Ok(())
    })
}

/// Jensen-Shannon divergence (base 2) of two equal-length distributions.
#[no_mangle]
pub unsafe extern "C" fn copb_jsd(
    p: *const f64,
    q: *const f64,
    len: usize,
    out_value: *mut f64,
) -> CopbStatus {
    guard(|| {
        let v = jsd_vectors(slice(p, len, "p")?, slice(q, len, "q")?)
            .map_err(|e| Failure::new(CopbStatus::InvalidArgument, e))?;
        *out(out_value, "out_value")? = v;
        Ok(())
    })
}

/// Loads an `id,name,category,lat,lon` CSV into a new index.
#[no_mangle]
pub unsafe extern "C" fn copb_poi_index_load(
    path: *const c_char,
    cell_km: f64,
    out_index: *mut *mut CopbPoiIndex,
) -> CopbStatus {
    guard(|| {
        let slot = out(out_index, "out_index")?;
        *slot = ptr::null_mut();
        let pois =
            load_pois(Path::new(string(path, "path")?)).map_err(|e| Failure::new(CopbStatus::Io, e))?;
        let inner =
            build_index(pois, cell_km, None).map_err(|e| Failure::new(CopbStatus::InvalidArgument, e))?;
        *slot = Box::into_raw(Box::new(CopbPoiIndex { inner }));
        Ok(())
    })
}

/// Frees an index; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn copb_poi_index_free(index: *mut CopbPoiIndex) {
    if !index.is_null() {
        // SAFETY: produced by `copb_poi_index_load` and not freed before.
        drop(unsafe { Box::from_raw(index) });
    }
}

unsafe fn index_ref<'a>(index: *const CopbPoiIndex) -> Result<&'a SpatialIndex, Failure> {
    // SAFETY: null or a live handle from `copb_poi_index_load`.
    unsafe { index.as_ref() }
        .map(|i| &i.inner)
        .ok_or_else(|| Failure::new(CopbStatus::NullPointer, "index is null"))
}

#[no_mangle]
pub unsafe extern "C" fn copb_poi_index_len(index: *const CopbPoiIndex, out_len: *mut usize) -> CopbStatus {
    guard(|| {
        let n = index_ref(index)?.len();
        *out(out_len, "out_len")? = n;
        Ok(())
    })
}

/// Number of POIs within `radius_km` of a point.
#[no_mangle]
pub unsafe extern "C" fn copb_poi_index_count_within(
    index: *const CopbPoiIndex,
    lat: f64,
    lon: f64,
    radius_km: f64,
    out_count: *mut usize,
) -> CopbStatus {
    guard(|| {
        let idx = index_ref(index)?;
        if radius_km.is_nan() || radius_km < 0.0 {
            return Err(Failure::new(CopbStatus::InvalidArgument, format!("radius {radius_km}")));
        }
        let n = idx.within(point(lat, lon)?, radius_km).len();
        *out(out_count, "out_count")? = n;
        Ok(())
    })
}

/// Draws `n` indices proportional to `weights`, deterministically for a given seed.
#[no_mangle]
pub unsafe extern "C" fn copb_sample_weighted(
    weights: *const f64,
    len: usize,
    seed: u64,
    n: usize,
    out_indices: *mut usize,
) -> CopbStatus {
    guard(|| {
        let w = slice(weights, len, "weights")?;
        if n > 0 && out_indices.is_null() {
            return Err(Failure::new(CopbStatus::NullPointer, "out_indices is null"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut drawn = Vec::with_capacity(n);
        for _ in 0..n {
            drawn.push(sample_index(w, &mut rng).map_err(|e| Failure::new(CopbStatus::InvalidArgument, e))?);
        }
        if n > 0 {
            // SAFETY: `out_indices` has room for `n` values per the API contract.
            unsafe { std::slice::from_raw_parts_mut(out_indices, n) }.copy_from_slice(&drawn);
        }
        Ok(())
    })
}

/// Fits the distance-decay exponent to displacements in `(min_km, max_km]`.
#[no_mangle]
pub unsafe extern "C" fn copb_fit_decay_exponent(
    displacements_km: *const f64,
    len: usize,
    min_km: f64,
    max_km: f64,
    out_exponent: *mut f64,
    out_stderr: *mut f64,
) -> CopbStatus {
    guard(|| {
        let f = fit_decay_exponent(slice(displacements_km, len, "displacements_km")?, min_km, max_km)
            .map_err(|e| Failure::new(CopbStatus::Compute, e))?;
        *out(out_exponent, "out_exponent")? = f.exponent;
        if !out_stderr.is_null() {
            *out(out_stderr, "out_stderr")? = f.stderr;
        }
        Ok(())
    })
}

/// Evaluates two JSON Lines corpora and returns the report as a JSON string, freed with
/// [`copb_string_free`].
#[no_mangle]
pub unsafe extern "C" fn copb_evaluate_files(
    generated: *const c_char,
    reference: *const c_char,
    cell_km: f64,
    out_json: *mut *mut c_char,
) -> CopbStatus {
    guard(|| {
        let slot = out(out_json, "out_json")?;
        *slot = ptr::null_mut();
        let io = |e: copb::metrics::MetricError| Failure::new(CopbStatus::Io, e);
        let gen = Corpus::load(Path::new(string(generated, "generated")?)).map_err(io)?;
        let reference = Corpus::load(Path::new(string(reference, "reference")?)).map_err(io)?;
        let cfg = EvalConfig { cell_size_km: cell_km, ..EvalConfig::default() };
        let report = evaluate(&gen, &reference, &cfg).map_err(|e| Failure::new(CopbStatus::Compute, e))?;
        let text = serde_json::to_string(&report).map_err(|e| Failure::new(CopbStatus::Compute, e))?;
        *slot = CString::new(text).expect("JSON has no nul").into_raw();
        Ok(())
    })
}

/// Frees a string returned by this library; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn copb_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: produced by `CString::into_raw` in this library.
        drop(unsafe { CString::from_raw(s) });
    }
}

//! C interface to `spindoe`.
//!
//! Objects are opaque handles created by `*_new`/`*_from_*` functions and
//! released with the matching `*_free`. Every fallible function returns a
//! [`SpindoeStatus`]; on failure a description is available from
//! [`spindoe_last_error`] on the same thread. Vectors are passed as flat
//! `double` arrays, three components per dot and quaternions as `w,x,y,z`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spindoe::geometry::{Rotation, UnitVector3};
use spindoe::hashing::{recognize, DotPattern, HashTable, ObservedDotSet, RecognitionConfig};
use spindoe::kent::DotModel;
use spindoe::pattern::{optimize_pattern, random_pattern, StepSchedule};
use spindoe::spin::{
    dampening_fit, quatera_fit, ransac_spin, theoretical_dampening, OrientationSample,
    RansacConfig,
};
use spindoe::Error;

/// Result of every fallible call. Codes 1 to 17 mirror the library errors.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpindoeStatus {
    Ok = 0,
    LengthMismatch = 1,
    DegenerateConfiguration = 2,
    InvalidParams = 3,
    NonConvergence = 4,
    SingularBasis = 5,
    OutsideDisk = 6,
    TooFewDots = 7,
    NoBasisAboveThreshold = 8,
    EmptyCorrespondences = 9,
    InfeasibleSeparation = 10,
    TooFewSamples = 11,
    NonUniqueAxis = 12,
    NoConsensus = 13,
    NonPositiveNorm = 14,
    NonMonotonicTime = 15,
    Format = 16,
    Io = 17,
    NullPointer = 100,
    InvalidUtf8 = 101,
    BufferTooSmall = 102,
    Panic = 103,
}

impl SpindoeStatus {
    fn from_error(e: &Error) -> Self {
        use SpindoeStatus::*;
        match e.code() {
            1 => LengthMismatch,
            2 => DegenerateConfiguration,
            3 => InvalidParams,
            4 => NonConvergence,
            5 => SingularBasis,
            6 => OutsideDisk,
            7 => TooFewDots,
            8 => NoBasisAboveThreshold,
            9 => EmptyCorrespondences,
            10 => InfeasibleSeparation,
            11 => TooFewSamples,
            12 => NonUniqueAxis,
            13 => NoConsensus,
            14 => NonPositiveNorm,
            15 => NonMonotonicTime,
            16 => Format,
            _ => Io,
        }
    }
}

/// Reference dot layout.
pub struct SpindoePattern(DotPattern);

/// Hash table of a pattern, ready for recognition.
pub struct SpindoeTable(HashTable);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SpindoeOrientation {
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    /// Radians.
    pub rmse: f64,
    pub n_matched: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SpindoeSpin {
    /// rad/s.
    pub wx: f64,
    pub wy: f64,
    pub wz: f64,
    pub rps: f64,
    pub residual_rms: f64,
    pub n_inliers: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SpindoeDampening {
    pub coefficient: f64,
    /// rad/s.
    pub omega0: f64,
    pub r2: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: SpindoeStatus, msg: &str) -> SpindoeStatus {
    set_last_error(msg);
    status
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), SpindoeStatus>) -> SpindoeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            SpindoeStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(SpindoeStatus::Panic, "internal panic"),
    }
}

fn lib(e: Error) -> SpindoeStatus {
    fail(SpindoeStatus::from_error(&e), &e.to_string())
}

fn null(what: &str) -> SpindoeStatus {
    fail(SpindoeStatus::NullPointer, &format!("{what} is NULL"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], SpindoeStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn vectors(xyz: *const f64, n: usize, what: &str) -> Result<Vec<UnitVector3>, SpindoeStatus> {
    slice(xyz, 3 * n, what)?
        .chunks_exact(3)
        .map(|c| UnitVector3::new(c[0], c[1], c[2]).map_err(lib))
        .collect()
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), SpindoeStatus> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn spindoe_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn spindoe_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Pattern from `n` unit vectors (`3n` doubles).
///
/// # Safety
/// `xyz` must point to `3n` doubles and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn spindoe_pattern_new(
    xyz: *const f64,
    n: usize,
    out: *mut *mut SpindoePattern,
) -> SpindoeStatus {
    guard(|| {
        let dots = vectors(xyz, n, "xyz")?;
        let p = DotPattern::new(dots).map_err(lib)?;
        put(out, Box::into_raw(Box::new(SpindoePattern(p))), "out")
    })
}

/// Pattern from its JSON file contents.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spindoe_pattern_from_json(
    json: *const c_char,
    out: *mut *mut SpindoePattern,
) -> SpindoeStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| fail(SpindoeStatus::InvalidUtf8, "json is not UTF-8"))?;
        let p = DotPattern::from_json(text).map_err(lib)?;
        put(out, Box::into_raw(Box::new(SpindoePattern(p))), "out")
    })
}

/// Uniform random pattern with pairwise separation at least `min_separation`
/// radians; with `iterations > 0` it is then optimized for hash-space spread.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spindoe_pattern_generate(
    n: usize,
    min_separation: f64,
    iterations: usize,
    seed: u64,
    out: *mut *mut SpindoePattern,
) -> SpindoeStatus {
    guard(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = if iterations == 0 {
            random_pattern(n, min_separation, &mut rng)
        } else {
            optimize_pattern(n, iterations, &StepSchedule::default(), &mut rng)
        }
        .map_err(lib)?;
        put(out, Box::into_raw(Box::new(SpindoePattern(p))), "out")
    })
}

/// Number of dots; 0 for NULL.
///
/// # Safety
/// `pattern` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spindoe_pattern_len(pattern: *const SpindoePattern) -> usize {
    pattern.as_ref().map_or(0, |p| p.0.len())
}

/// Copies the dots into `xyz`, which holds `capacity` doubles.
///
/// # Safety
/// `pattern` must be a live handle and `xyz` writable for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn spindoe_pattern_dots(
    pattern: *const SpindoePattern,
    xyz: *mut f64,
    capacity: usize,
) -> SpindoeStatus {
    guard(|| {
        let p = pattern.as_ref().ok_or_else(|| null("pattern"))?;
        let need = 3 * p.0.len();
        if capacity < need {
            return Err(fail(
                SpindoeStatus::BufferTooSmall,
                &format!("need {need} doubles, got {capacity}"),
            ));
        }
        if xyz.is_null() {
            return Err(null("xyz"));
        }
        let out = std::slice::from_raw_parts_mut(xyz, need);
        for (c, d) in out.chunks_exact_mut(3).zip(p.0.dots()) {
            c.copy_from_slice(&d.to_array());
        }
        Ok(())
    })
}

/// Writes the pattern JSON, NUL-terminated, into `buf`. `needed` receives
/// the buffer size required, including the NUL, even when `buf` is too
/// small or NULL.
///
/// # Safety
/// `pattern` must be a live handle, `buf` NULL or writable for `capacity`
/// bytes, `needed` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn spindoe_pattern_to_json(
    pattern: *const SpindoePattern,
    buf: *mut c_char,
    capacity: usize,
    needed: *mut usize,
) -> SpindoeStatus {
    guard(|| {
        let p = pattern.as_ref().ok_or_else(|| null("pattern"))?;
        let text = p.0.to_json();
        let n = text.len() + 1;
        if !needed.is_null() {
            needed.write(n);
        }
        if buf.is_null() || capacity < n {
            return Err(fail(
                SpindoeStatus::BufferTooSmall,
                &format!("need {n} bytes, got {capacity}"),
            ));
        }
        ptr::copy_nonoverlapping(text.as_ptr(), buf.cast::<u8>(), text.len());
        buf.add(text.len()).write(0);
        Ok(())
    })
}

/// # Safety
/// `pattern` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spindoe_pattern_free(pattern: *mut SpindoePattern) {
    if !pattern.is_null() {
        drop(Box::from_raw(pattern));
    }
}

/// Hash table of `pattern` with dot model `(kappa, beta, alpha)`.
///
/// # Safety
/// `pattern` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spindoe_table_build(
    pattern: *const SpindoePattern,
    kappa: f64,
    beta: f64,
    alpha: f64,
    out: *mut *mut SpindoeTable,
) -> SpindoeStatus {
    guard(|| {
        let p = pattern.as_ref().ok_or_else(|| null("pattern"))?;
        let t = HashTable::build(&p.0, DotModel { kappa, beta, alpha }).map_err(lib)?;
        put(out, Box::into_raw(Box::new(SpindoeTable(t))), "out")
    })
}

/// Hash table with the default dot model.
///
/// # Safety
/// `pattern` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spindoe_table_build_default(
    pattern: *const SpindoePattern,
    out: *mut *mut SpindoeTable,
) -> SpindoeStatus {
    let m = DotModel::default();
    spindoe_table_build(pattern, m.kappa, m.beta, m.alpha, out)
}

/// Number of entries; 0 for NULL.
///
/// # Safety
/// `table` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spindoe_table_len(table: *const SpindoeTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.len())
}

/// # Safety
/// `table` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spindoe_table_free(table: *mut SpindoeTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Orientation of the ball from `n` observed unit vectors (camera frame,
/// `z` towards the camera) with default recognition settings.
///
/// # Safety
/// `table` must be a live handle, `xyz` must hold `3n` doubles and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn spindoe_recognize(
    table: *const SpindoeTable,
    xyz: *const f64,
    n: usize,
    out: *mut SpindoeOrientation,
) -> SpindoeStatus {
    guard(|| {
        let t = table.as_ref().ok_or_else(|| null("table"))?;
        let obs = ObservedDotSet::new(vectors(xyz, n, "xyz")?, 0.0).map_err(lib)?;
        let r = recognize(&t.0, &obs, &RecognitionConfig::default()).map_err(lib)?;
        let [qw, qx, qy, qz] = r.orientation.wxyz();
        put(
            out,
            SpindoeOrientation {
                qw,
                qx,
                qy,
                qz,
                rmse: r.rmse,
                n_matched: r.correspondences.len(),
            },
            "out",
        )
    })
}

unsafe fn samples(t: *const f64, wxyz: *const f64, n: usize) -> Result<Vec<OrientationSample>, SpindoeStatus> {
    let t = slice(t, n, "t")?;
    let q = slice(wxyz, 4 * n, "wxyz")?;
    t.iter()
        .zip(q.chunks_exact(4))
        .map(|(&t, q)| {
            let r = Rotation::from_wxyz(q[0], q[1], q[2], q[3]).map_err(lib)?;
            Ok(OrientationSample::new(t, r))
        })
        .collect()
}

/// Spin of `n` timestamped orientations (`t`: `n` seconds, `wxyz`: `4n`
/// quaternion components). With `robust` non-zero outliers are rejected by
/// RANSAC seeded with `seed`, and `inlier_mask` (if not NULL, `n` bytes)
/// receives 1 for inliers and 0 otherwise.
///
/// # Safety
/// Array arguments must have the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spindoe_spin_fit(
    t: *const f64,
    wxyz: *const f64,
    n: usize,
    robust: i32,
    seed: u64,
    out: *mut SpindoeSpin,
    inlier_mask: *mut u8,
) -> SpindoeStatus {
    guard(|| {
        let s = samples(t, wxyz, n)?;
        let est = if robust != 0 {
            ransac_spin(&s, &RansacConfig { seed, ..RansacConfig::default() })
        } else {
            quatera_fit(&s)
        }
        .map_err(lib)?;
        if !inlier_mask.is_null() {
            let mask = std::slice::from_raw_parts_mut(inlier_mask, n);
            mask.fill(0);
            for &i in &est.inliers {
                mask[i] = 1;
            }
        }
        put(
            out,
            SpindoeSpin {
                wx: est.omega[0],
                wy: est.omega[1],
                wz: est.omega[2],
                rps: est.rps(),
                residual_rms: est.residual_rms,
                n_inliers: est.inliers.len(),
            },
            "out",
        )
    })
}

/// Exponential decay fit of spin norms (`n` times and norms in rad/s).
///
/// # Safety
/// `t` and `norms` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spindoe_dampening_fit(
    t: *const f64,
    norms: *const f64,
    n: usize,
    out: *mut SpindoeDampening,
) -> SpindoeStatus {
    guard(|| {
        let t = slice(t, n, "t")?;
        let w = slice(norms, n, "norms")?;
        let series: Vec<(f64, f64)> = t.iter().copied().zip(w.iter().copied()).collect();
        let f = dampening_fit(&series).map_err(lib)?;
        put(
            out,
            SpindoeDampening {
                coefficient: f.coefficient,
                omega0: f.omega0,
                r2: f.r2,
            },
            "out",
        )
    })
}

/// Decay rate `12 pi nu r / m` (1/s).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spindoe_theoretical_dampening(
    nu: f64,
    radius: f64,
    mass: f64,
    out: *mut f64,
) -> SpindoeStatus {
    guard(|| {
        let k = theoretical_dampening(nu, radius, mass).map_err(lib)?;
        put(out, k, "out")
    })
}

//! C ABI over `sepgan`.
//!
//! Every fallible function returns a [`SepganStatus`]. On failure the
//! message is kept per thread and can be read with [`sepgan_last_error`].
//! Generators are opaque handles created by [`sepgan_generator_load`] and
//! released with [`sepgan_generator_free`]. Images cross the boundary as
//! `3 * size * size` doubles in channel-major order, values in `[-1, 1]`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use sepgan::checkpoint::Checkpoint;
use sepgan::cost::{model_cost, reduction_ratio};
use sepgan::fid::{frechet_distance, gaussian_stats, GaussianStats};
use sepgan::models::{discriminator_plan, generator_plan, one_hot};
use sepgan::train::generator_from_checkpoint;
use sepgan::{Error, Generator, ModelConfig, Scale, Tensor, Variant};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SepganStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Numeric = 5,
    BufferSize = 6,
    Panic = 7,
}

/// Values accepted wherever a variant is passed as `uint32_t`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SepganVariant {
    Baseline = 0,
    DepthwiseG = 1,
    DeeperDepthwiseG = 2,
    DepthwiseDG = 3,
}

/// Values accepted wherever a scale is passed as `uint32_t`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SepganScale {
    Desk = 0,
    Paper = 1,
}

/// Opaque generator handle.
pub struct SepganGenerator {
    inner: Generator,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> SepganStatus {
    match e {
        Error::Io { .. } => SepganStatus::Io,
        Error::Parse { .. } => SepganStatus::Parse,
        Error::NonFinite { .. } => SepganStatus::Numeric,
        _ => SepganStatus::InvalidArgument,
    }
}

fn fail(status: SepganStatus, msg: impl Into<String>) -> SepganStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), SepganStatus>) -> SepganStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SepganStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(SepganStatus::Panic, "internal panic"),
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, SepganStatus>;
}

impl<T> OrStatus<T> for sepgan::Result<T> {
    fn or_status(self) -> Result<T, SepganStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), SepganStatus> {
    if p.is_null() {
        Err(fail(SepganStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn variant(v: u32) -> Result<Variant, SepganStatus> {
    Variant::ALL.get(v as usize).copied().ok_or_else(|| {
        fail(
            SepganStatus::InvalidArgument,
            format!("unknown variant {v}"),
        )
    })
}

fn scale(s: u32) -> Result<Scale, SepganStatus> {
    match s {
        0 => Ok(Scale::Desk),
        1 => Ok(Scale::Paper),
        _ => Err(fail(
            SepganStatus::InvalidArgument,
            format!("unknown scale {s}"),
        )),
    }
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sepgan_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Total parameter counts (weights, biases and norm affines) of a preset.
///
/// # Safety
/// `generator` and `discriminator` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sepgan_count_params(
    variant_id: u32,
    scale_id: u32,
    generator: *mut u64,
    discriminator: *mut u64,
) -> SepganStatus {
    guard(|| {
        non_null(generator, "generator")?;
        non_null(discriminator, "discriminator")?;
        let cfg = ModelConfig::preset(scale(scale_id)?, variant(variant_id)?);
        let g = model_cost(&generator_plan(&cfg).or_status()?)
            .totals()
            .params();
        let d = model_cost(&discriminator_plan(&cfg).or_status()?)
            .totals()
            .params();
        *generator = g;
        *discriminator = d;
        Ok(())
    })
}

/// Separable over standard convolution cost, `1/cout + 1/k^2`. Returns NaN
/// if any argument is zero.
#[no_mangle]
pub extern "C" fn sepgan_reduction_ratio(cin: usize, cout: usize, kernel: usize) -> f64 {
    if cin == 0 || cout == 0 || kernel == 0 {
        set_error("channels and kernel must be positive");
        return f64::NAN;
    }
    reduction_ratio(cin, cout, kernel)
}

/// Loads the generator stored in a training checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes. On
/// success `*out` owns a handle that must be passed to
/// [`sepgan_generator_free`].
#[no_mangle]
pub unsafe extern "C" fn sepgan_generator_load(
    path: *const c_char,
    out: *mut *mut SepganGenerator,
) -> SepganStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(out, "out")?;
        *out = std::ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(SepganStatus::InvalidArgument, "path is not UTF-8"))?;
        let ckpt = Checkpoint::load(Path::new(path)).or_status()?;
        let inner = generator_from_checkpoint(&ckpt).or_status()?;
        *out = Box::into_raw(Box::new(SepganGenerator { inner }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `g` must come from [`sepgan_generator_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sepgan_generator_free(g: *mut SepganGenerator) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Image side length and number of domains of a loaded generator.
///
/// # Safety
/// `g` must be a live handle; the out pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sepgan_generator_shape(
    g: *const SepganGenerator,
    image_size: *mut usize,
    num_domains: *mut usize,
) -> SepganStatus {
    guard(|| {
        non_null(g, "generator")?;
        non_null(image_size, "image_size")?;
        non_null(num_domains, "num_domains")?;
        let cfg = (*g).inner.config();
        *image_size = cfg.image_size;
        *num_domains = cfg.num_domains;
        Ok(())
    })
}

/// Translates one image into `target_domain`. `input` and `output` hold
/// `len = 3 * size * size` doubles and may not overlap.
///
/// # Safety
/// `g` must be a live handle; `input` valid for `len` reads and `output`
/// for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn sepgan_generator_translate(
    g: *const SepganGenerator,
    input: *const f64,
    output: *mut f64,
    len: usize,
    target_domain: usize,
) -> SepganStatus {
    guard(|| {
        non_null(g, "generator")?;
        non_null(input, "input")?;
        non_null(output, "output")?;
        let g = &(*g).inner;
        let (s, n) = (g.config().image_size, g.config().num_domains);
        if len != 3 * s * s {
            return Err(fail(
                SepganStatus::BufferSize,
                format!("expected {} values, got {len}", 3 * s * s),
            ));
        }
        if target_domain >= n {
            return Err(fail(
                SepganStatus::InvalidArgument,
                format!("target domain {target_domain} out of range for {n} domains"),
            ));
        }
        let x = Tensor::from_vec(
            [1, 3, s, s],
            std::slice::from_raw_parts(input, len).to_vec(),
        )
        .or_status()?;
        let y = g
            .generate(&x, &one_hot(&[target_domain], n).or_status()?)
            .or_status()?;
        std::slice::from_raw_parts_mut(output, len).copy_from_slice(y.data());
        Ok(())
    })
}

/// Frechet distance between two Gaussians given as `d`-vectors of means and
/// row-major `d x d` symmetric PSD covariances.
///
/// # Safety
/// Mean pointers must be valid for `d` reads, covariance pointers for
/// `d * d` reads, `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn sepgan_frechet_distance(
    mu_r: *const f64,
    sigma_r: *const f64,
    mu_g: *const f64,
    sigma_g: *const f64,
    d: usize,
    out: *mut f64,
) -> SepganStatus {
    guard(|| {
        for (p, what) in [
            (mu_r, "mu_r"),
            (sigma_r, "sigma_r"),
            (mu_g, "mu_g"),
            (sigma_g, "sigma_g"),
        ] {
            non_null(p, what)?;
        }
        non_null(out, "out")?;
        if d == 0 {
            return Err(fail(
                SepganStatus::InvalidArgument,
                "dimension must be positive",
            ));
        }
        let stats = |mu: *const f64, sigma: *const f64| GaussianStats {
            mu: DVector::from_column_slice(std::slice::from_raw_parts(mu, d)),
            sigma: DMatrix::from_row_slice(d, d, std::slice::from_raw_parts(sigma, d * d)),
            n: 0,
        };
        *out = frechet_distance(&stats(mu_r, sigma_r), &stats(mu_g, sigma_g)).or_status()?;
        Ok(())
    })
}

/// Fits Gaussians to two feature sets (row-major, one sample per row) and
/// returns their Frechet distance.
///
/// # Safety
/// `real` must be valid for `n_real * d` reads, `generated` for
/// `n_gen * d` reads, `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn sepgan_fid_from_features(
    real: *const f64,
    n_real: usize,
    generated: *const f64,
    n_gen: usize,
    d: usize,
    out: *mut f64,
) -> SepganStatus {
    guard(|| {
        non_null(real, "real")?;
        non_null(generated, "generated")?;
        non_null(out, "out")?;
        if d == 0 {
            return Err(fail(
                SepganStatus::InvalidArgument,
                "dimension must be positive",
            ));
        }
        let rows = |p: *const f64, n: usize| {
            DMatrix::from_row_slice(n, d, std::slice::from_raw_parts(p, n * d))
        };
        let r = gaussian_stats(&rows(real, n_real)).or_status()?;
        let g = gaussian_stats(&rows(generated, n_gen)).or_status()?;
        *out = frechet_distance(&r, &g).or_status()?;
        Ok(())
    })
}

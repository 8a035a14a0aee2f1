//! C ABI over `cylmimo`.
//!
//! Objects are opaque heap handles created by `cm_*_new`/producer calls and
//! released with the matching `cm_*_free`. Every fallible call returns a
//! status code; on failure the message is available from
//! [`cm_last_error_message`] on the same thread. Complex buffers are
//! interleaved `re, im` doubles in row-major order.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use cylmimo::bp::reconstruct_bp;
use cylmimo::forward::{simulate_echo, EchoTensor};
use cylmimo::geometry::{ArrayLayout, FrequencyGrid, Point3, Scatterer, Scene, SubarraySpec};
use cylmimo::rma::{reconstruct_rma, GridSpec, ImageVolume, KernelPhase, RmaConfig, SpectrumFilter};
use cylmimo::Error;
use num_complex::Complex64;

/// Status code returned by every fallible call.
pub type CmStatus = i32;

pub const CM_OK: CmStatus = 0;
/// A required pointer argument was null.
pub const CM_ERR_NULL: CmStatus = 1;
/// Arguments or configuration rejected by validation.
pub const CM_ERR_INVALID: CmStatus = 2;
/// A numerical stage failed.
pub const CM_ERR_NUMERIC: CmStatus = 3;
pub const CM_ERR_IO: CmStatus = 4;
/// A Rust panic was caught at the boundary.
pub const CM_ERR_PANIC: CmStatus = 5;

pub const CM_FILTER_AUTO: i32 = 0;
pub const CM_FILTER_NONE: i32 = 1;
pub const CM_KERNEL_LEADING: i32 = 0;
pub const CM_KERNEL_DEBYE: i32 = 1;

/// Array layout handle.
pub struct CmLayout(ArrayLayout);

/// Scatterer list handle.
pub struct CmScene(Vec<Scatterer>);

/// Echo tensor handle, shape [k, θ_T, θ_R, z_T, z_R].
pub struct CmEcho(EchoTensor);

/// Reconstructed volume handle, shape [x, y, z].
pub struct CmImage(ImageVolume);

/// One subarray: columns along the arc and rows along z.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CmSubarray {
    pub arc_count: usize,
    /// Arc length between columns (m).
    pub arc_spacing: f64,
    pub z_count: usize,
    pub z_spacing: f64,
}

/// Image grid. Non-positive voxel sizes select a quarter of the theoretical resolution.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CmGrid {
    pub center: [f64; 3],
    pub voxel: [f64; 3],
    pub n: [usize; 3],
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CmRmaParams {
    /// Target extent D for the automatic spectral support filter (m).
    pub target_extent: f64,
    pub evanescent_guard: f64,
    pub interp_oversampling: f64,
    /// `CM_FILTER_AUTO` or `CM_FILTER_NONE`.
    pub spectrum_filter: i32,
    /// `CM_KERNEL_LEADING` or `CM_KERNEL_DEBYE`.
    pub kernel_phase: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> CmStatus {
    match e.exit_code() {
        3 => CM_ERR_NUMERIC,
        4 => CM_ERR_IO,
        _ => CM_ERR_INVALID,
    }
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CM_OK
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            CM_ERR_NULL
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            CM_ERR_PANIC
        }
    }
}

/// # Safety
/// `p` must be null or valid for reads of `T`.
unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

/// # Safety
/// `out` must be null or valid for writes of `T`.
unsafe fn put<T>(out: *mut T, v: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    out.write(v);
    Ok(())
}

/// Moves `v` to the heap and hands ownership to `*out`.
///
/// # Safety
/// `out` must be null or valid for writes.
unsafe fn put_box<T>(out: *mut *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    out.write(Box::into_raw(Box::new(v)));
    Ok(())
}

/// # Safety
/// `p` must be null or a pointer from `Box::into_raw` not yet freed.
unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Writes `data` as interleaved doubles into `out[0..2*len]`.
///
/// # Safety
/// `out` must be null or valid for `2 * len` writes.
unsafe fn copy_complex(data: &[Complex64], out: *mut f64, len: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    if len != data.len() {
        return Err(Error::invalid(format!("buffer holds {len} complex values, need {}", data.len())).into());
    }
    let dst = std::slice::from_raw_parts_mut(out, 2 * len);
    for (d, v) in dst.chunks_exact_mut(2).zip(data) {
        d[0] = v.re;
        d[1] = v.im;
    }
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next `cm_*` call on the same thread.
#[no_mangle]
pub extern "C" fn cm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Two subarrays on a cylinder of `radius`, each centred on θ = 0, z = 0.
///
/// # Safety
/// `tx` and `rx` must point to valid structs; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_layout_new(radius: f64, tx: *const CmSubarray, rx: *const CmSubarray, out: *mut *mut CmLayout) -> CmStatus {
    guard(|| {
        let spec = |s: &CmSubarray| SubarraySpec { arc_count: s.arc_count, arc_spacing: s.arc_spacing, z_count: s.z_count, z_spacing: s.z_spacing };
        let (tx, rx) = (deref(tx, "tx")?, deref(rx, "rx")?);
        let l = ArrayLayout::centered(radius, spec(tx), spec(rx))?;
        put_box(out, CmLayout(l))
    })
}

/// The 5×5 sparse Tx / 41×41 dense Rx layout on R0 = 1.5 m.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_layout_benchmark(out: *mut *mut CmLayout) -> CmStatus {
    guard(|| put_box(out, CmLayout(ArrayLayout::benchmark())))
}

/// # Safety
/// `layout` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cm_layout_free(layout: *mut CmLayout) {
    release(layout)
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_scene_new(out: *mut *mut CmScene) -> CmStatus {
    guard(|| put_box(out, CmScene(Vec::new())))
}

/// Appends a point scatterer with complex reflectivity `re + j·im`.
///
/// # Safety
/// `scene` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cm_scene_add(scene: *mut CmScene, x: f64, y: f64, z: f64, re: f64, im: f64) -> CmStatus {
    guard(|| {
        let s = scene.as_mut().ok_or(Fail::Null("scene"))?;
        let sc = Scatterer { position: Point3::new(x, y, z), reflectivity: Complex64::new(re, im) };
        Scene::new(vec![sc])?;
        s.0.push(sc);
        Ok(())
    })
}

/// Number of scatterers in the scene.
///
/// # Safety
/// `scene` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_scene_len(scene: *const CmScene, out: *mut usize) -> CmStatus {
    guard(|| put(out, deref(scene, "scene")?.0.len(), "out"))
}

/// # Safety
/// `scene` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cm_scene_free(scene: *mut CmScene) {
    release(scene)
}

/// Simulates the echo of `scene` over `count` frequencies in [start_hz, stop_hz].
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_simulate(
    layout: *const CmLayout,
    scene: *const CmScene,
    start_hz: f64,
    stop_hz: f64,
    count: usize,
    out: *mut *mut CmEcho,
) -> CmStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let (l, s) = (deref(layout, "layout")?, deref(scene, "scene")?);
        let scene = Scene::new(s.0.clone())?;
        scene.check_inside(l.0.radius())?;
        let f = FrequencyGrid::new(start_hz, stop_hz, count)?;
        let e = simulate_echo(&scene, &l.0, &f)?;
        put_box(out, CmEcho(e))
    })
}

/// Echo shape [k, θ_T, θ_R, z_T, z_R].
///
/// # Safety
/// `echo` must be live; `shape` must hold 5 values.
#[no_mangle]
pub unsafe extern "C" fn cm_echo_shape(echo: *const CmEcho, shape: *mut usize) -> CmStatus {
    guard(|| {
        let s = deref(echo, "echo")?.0.shape().as_array();
        if shape.is_null() {
            return Err(Fail::Null("shape"));
        }
        std::slice::from_raw_parts_mut(shape, 5).copy_from_slice(&s);
        Ok(())
    })
}

/// Number of complex samples in the echo.
///
/// # Safety
/// `echo` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_echo_len(echo: *const CmEcho, out: *mut usize) -> CmStatus {
    guard(|| put(out, deref(echo, "echo")?.0.data().len(), "out"))
}

/// Copies the echo into `out` (2·`len` doubles); `len` must equal [`cm_echo_len`].
///
/// # Safety
/// `echo` must be live; `out` must hold 2·`len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cm_echo_copy(echo: *const CmEcho, out: *mut f64, len: usize) -> CmStatus {
    guard(|| copy_complex(deref(echo, "echo")?.0.data(), out, len))
}

/// Adds white Gaussian noise at `snr_db` relative to the mean echo power.
///
/// # Safety
/// `echo` must be live.
#[no_mangle]
pub unsafe extern "C" fn cm_echo_add_noise(echo: *mut CmEcho, snr_db: f64, seed: u64) -> CmStatus {
    guard(|| {
        let e = echo.as_mut().ok_or(Fail::Null("echo"))?;
        e.0 = e.0.with_noise(snr_db, seed)?;
        Ok(())
    })
}

/// # Safety
/// `echo` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cm_echo_free(echo: *mut CmEcho) {
    release(echo)
}

/// Library defaults: automatic filter, D = 0.26 m, guard 0.95, oversampling 2, leading kernel.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_rma_params_default(out: *mut CmRmaParams) -> CmStatus {
    guard(|| {
        let c = RmaConfig::for_layout(&ArrayLayout::benchmark(), &FrequencyGrid::benchmark())?;
        let p = CmRmaParams {
            target_extent: c.target_extent,
            evanescent_guard: c.evanescent_guard,
            interp_oversampling: c.interp_oversampling,
            spectrum_filter: CM_FILTER_AUTO,
            kernel_phase: CM_KERNEL_LEADING,
        };
        put(out, p, "out")
    })
}

fn grid_spec(e: &EchoTensor, g: &CmGrid) -> Result<GridSpec, Error> {
    let c = Point3::new(g.center[0], g.center[1], g.center[2]);
    if g.voxel.iter().all(|v| *v > 0.0) {
        return GridSpec::centered(c, g.voxel, g.n);
    }
    let q = GridSpec::quarter_resolution(e.layout(), e.freqs(), c, 1)?;
    GridSpec::centered(c, [q.x.step, q.y.step, q.z.step], g.n)
}

/// Wavenumber-domain reconstruction of `echo` on `grid`. `params` may be null for defaults.
///
/// # Safety
/// `echo` must be live, `grid` valid, `params` null or valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cm_reconstruct_rma(echo: *const CmEcho, params: *const CmRmaParams, grid: *const CmGrid, out: *mut *mut CmImage) -> CmStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let e = &deref(echo, "echo")?.0;
        let g = deref(grid, "grid")?;
        let mut cfg = RmaConfig::for_layout(e.layout(), e.freqs())?;
        cfg.grid = grid_spec(e, g)?;
        if let Some(p) = params.as_ref() {
            cfg.target_extent = p.target_extent;
            cfg.evanescent_guard = p.evanescent_guard;
            cfg.interp_oversampling = p.interp_oversampling;
            cfg.spectrum_filter = match p.spectrum_filter {
                CM_FILTER_AUTO => SpectrumFilter::Auto,
                CM_FILTER_NONE => SpectrumFilter::None,
                v => return Err(Error::invalid(format!("unknown spectrum filter {v}")).into()),
            };
            cfg.kernel_phase = match p.kernel_phase {
                CM_KERNEL_LEADING => KernelPhase::Leading,
                CM_KERNEL_DEBYE => KernelPhase::Debye,
                v => return Err(Error::invalid(format!("unknown kernel phase {v}")).into()),
            };
        }
        let img = reconstruct_rma(e, e.layout(), &cfg)?;
        put_box(out, CmImage(img))
    })
}

/// Back-projection of `echo` on `grid`.
///
/// # Safety
/// `echo` must be live, `grid` valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cm_reconstruct_bp(echo: *const CmEcho, grid: *const CmGrid, out: *mut *mut CmImage) -> CmStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let e = &deref(echo, "echo")?.0;
        let g = grid_spec(e, deref(grid, "grid")?)?;
        let img = reconstruct_bp(e, e.layout(), &g)?;
        put_box(out, CmImage(img))
    })
}

/// Image shape [nx, ny, nz]; data index is (ix·ny + iy)·nz + iz.
///
/// # Safety
/// `image` must be live; `dims` must hold 3 values.
#[no_mangle]
pub unsafe extern "C" fn cm_image_dims(image: *const CmImage, dims: *mut usize) -> CmStatus {
    guard(|| {
        let s = deref(image, "image")?.0.grid().shape();
        if dims.is_null() {
            return Err(Fail::Null("dims"));
        }
        std::slice::from_raw_parts_mut(dims, 3).copy_from_slice(&s);
        Ok(())
    })
}

/// Grid origin and step per axis: `start[3]`, `step[3]`.
///
/// # Safety
/// `image` must be live; `start` and `step` must hold 3 values each.
#[no_mangle]
pub unsafe extern "C" fn cm_image_axes(image: *const CmImage, start: *mut f64, step: *mut f64) -> CmStatus {
    guard(|| {
        let g = *deref(image, "image")?.0.grid();
        if start.is_null() || step.is_null() {
            return Err(Fail::Null("start/step"));
        }
        let (a, b) = (std::slice::from_raw_parts_mut(start, 3), std::slice::from_raw_parts_mut(step, 3));
        for i in 0..3 {
            a[i] = g.axis(i).start;
            b[i] = g.axis(i).step;
        }
        Ok(())
    })
}

/// Copies the volume into `out` (2·`len` doubles); `len` must be nx·ny·nz.
///
/// # Safety
/// `image` must be live; `out` must hold 2·`len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cm_image_copy(image: *const CmImage, out: *mut f64, len: usize) -> CmStatus {
    guard(|| copy_complex(deref(image, "image")?.0.data(), out, len))
}

/// Position (`xyz[3]`) and magnitude of the largest voxel.
///
/// # Safety
/// `image` must be live; `xyz` must hold 3 values; `magnitude` may be null.
#[no_mangle]
pub unsafe extern "C" fn cm_image_peak(image: *const CmImage, xyz: *mut f64, magnitude: *mut f64) -> CmStatus {
    guard(|| {
        let img = &deref(image, "image")?.0;
        if xyz.is_null() {
            return Err(Fail::Null("xyz"));
        }
        let p = img.peak_position();
        std::slice::from_raw_parts_mut(xyz, 3).copy_from_slice(&[p.x, p.y, p.z]);
        if !magnitude.is_null() {
            magnitude.write(img.max_magnitude());
        }
        Ok(())
    })
}

/// # Safety
/// `image` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cm_image_free(image: *mut CmImage) {
    release(image)
}

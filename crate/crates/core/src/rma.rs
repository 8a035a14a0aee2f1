//! Cylindrical range-migration reconstruction.
//!
//! Stage order: vertical spectra over (z_T, z_R) with zero-filling of the
//! sparse axis, angular deconvolution over (θ_T, θ_R), dimension increase
//! k → (k_T, k_R), polar → Cartesian resampling per side, reduction onto
//! (k_x, k_y, k_z), spectral window, and an inverse transform onto the
//! requested image grid.
//!
//! The full vertical spectrum is held once; every (k_zT, k_zR) pair is then
//! processed as an independent slice. Slices are grouped by k_zT row, and
//! row results are merged in row order, so the output does not depend on
//! the worker count.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::EchoTensor;
use crate::geometry::{ArrayLayout, FrequencyGrid, Point3, Side, UniformGrid};
use crate::lab::resolution_formulas;
use crate::spectral::{
    apply_window, cell_taps, CellTaps, dft_axis, pad_axis, support_bound_kz, zero_fill, Axis,
    AxisLabel, CartesianGrid, Direction, SpectralWindow, SpectrumTensor,
};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rma,
    Bp,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Rma => "rma",
            Method::Bp => "bp",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rma" => Ok(Method::Rma),
            "bp" => Ok(Method::Bp),
            other => Err(Error::invalid(format!("unknown method '{other}' (expected rma or bp)"))),
        }
    }
}

/// Cartesian image grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x: UniformGrid,
    pub y: UniformGrid,
    pub z: UniformGrid,
}

impl GridSpec {
    pub fn centered(center: Point3, voxel: [f64; 3], n: [usize; 3]) -> Result<Self> {
        Ok(GridSpec {
            x: UniformGrid::centered(center.x, voxel[0], n[0])?,
            y: UniformGrid::centered(center.y, voxel[1], n[1])?,
            z: UniformGrid::centered(center.z, voxel[2], n[2])?,
        })
    }

    /// n³ grid around `center` with voxels of one quarter of the theoretical resolution.
    pub fn quarter_resolution(layout: &ArrayLayout, freqs: &FrequencyGrid, center: Point3, n: usize) -> Result<Self> {
        let res = theoretical_resolution(layout, freqs)?;
        GridSpec::centered(center, [res.dx / 4.0, res.dy / 4.0, res.dz / 4.0], [n, n, n])
    }

    /// Midpoint of the grid.
    pub fn center(&self) -> Point3 {
        let mid = |g: &UniformGrid| 0.5 * (g.start + g.last());
        Point3::new(mid(&self.x), mid(&self.y), mid(&self.z))
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.x.len, self.y.len, self.z.len]
    }

    pub fn len(&self) -> usize {
        self.x.len * self.y.len * self.z.len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis(&self, i: usize) -> &UniformGrid {
        match i {
            0 => &self.x,
            1 => &self.y,
            _ => &self.z,
        }
    }

    pub fn point(&self, ix: usize, iy: usize, iz: usize) -> Point3 {
        Point3::new(self.x.coord(ix), self.y.coord(iy), self.z.coord(iz))
    }
}

/// Resolutions predicted for a cylindrical layout: cross-range x, range y, height z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

pub fn theoretical_resolution(layout: &ArrayLayout, freqs: &FrequencyGrid) -> Result<Resolution> {
    let theta_h = layout.angular_extent();
    let theta_z = 2.0 * (layout.height_extent() / 2.0).atan2(layout.radius());
    let r = resolution_formulas(freqs.center_wavelength(), theta_h, theta_z, freqs.bandwidth())?;
    Ok(Resolution {
        dx: r.dx,
        dy: r.dy,
        dz: r.dz,
    })
}

/// Complex reflectivity on a Cartesian grid, stored [x][y][z].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageVolume {
    grid: GridSpec,
    data: Vec<Complex64>,
    method: Method,
    config_hash: String,
}

impl ImageVolume {
    pub fn new(grid: GridSpec, data: Vec<Complex64>, method: Method, config_hash: String) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::axis(format!(
                "image has {} voxels, grid requires {}",
                data.len(),
                grid.len()
            )));
        }
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::numeric("image contains non-finite voxels"));
        }
        Ok(ImageVolume {
            grid,
            data,
            method,
            config_hash,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn with_config_hash(mut self, hash: String) -> Self {
        self.config_hash = hash;
        self
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.grid.y.len + iy) * self.grid.z.len + iz
    }

    pub fn get(&self, ix: usize, iy: usize, iz: usize) -> Complex64 {
        self.data[self.index(ix, iy, iz)]
    }

    /// Voxel index of the largest magnitude (first one on ties).
    pub fn peak_index(&self) -> [usize; 3] {
        let mut best = 0;
        let mut best_v = -1.0;
        for (i, v) in self.data.iter().enumerate() {
            let m = v.norm();
            if m > best_v {
                best_v = m;
                best = i;
            }
        }
        let nz = self.grid.z.len;
        let ny = self.grid.y.len;
        [best / (ny * nz), (best / nz) % ny, best % nz]
    }

    pub fn peak_position(&self) -> Point3 {
        let [ix, iy, iz] = self.peak_index();
        self.grid.point(ix, iy, iz)
    }

    pub fn max_magnitude(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Complex samples along `axis` (0 = x, 1 = y, 2 = z) through voxel `at`.
    pub fn line(&self, axis: usize, at: [usize; 3]) -> Vec<Complex64> {
        let n = self.grid.axis(axis).len;
        (0..n)
            .map(|i| {
                let mut p = at;
                p[axis] = i;
                self.get(p[0], p[1], p[2])
            })
            .collect()
    }

    /// Magnitude over the range axis (y) maximised, as [x][z].
    pub fn max_projection_y(&self) -> Vec<f64> {
        let [nx, ny, nz] = self.grid.shape();
        let mut out = vec![0.0; nx * nz];
        for ix in 0..nx {
            for iy in 0..ny {
                for iz in 0..nz {
                    let m = self.get(ix, iy, iz).norm();
                    let o = &mut out[ix * nz + iz];
                    if m > *o {
                        *o = m;
                    }
                }
            }
        }
        out
    }
}

/// What the final spectral window does.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumFilter {
    /// Support bound from the aperture height and target extent.
    Auto,
    None,
    Window(SpectralWindow),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmaConfig {
    pub zero_fill_p_vertical: usize,
    pub zero_fill_p_arc: usize,
    pub spectrum_filter: SpectrumFilter,
    /// Target extent D used by the automatic support filter (m).
    pub target_extent: f64,
    /// Angular orders beyond this fraction of k_ρR0 are discarded.
    pub evanescent_guard: f64,
    pub kernel_phase: KernelPhase,
    pub grid: GridSpec,
    /// Unaliased image period of the Cartesian spectrum, relative to the image grid extent.
    pub interp_oversampling: f64,
}

impl RmaConfig {
    /// Defaults for a layout: P factors from its spacing ratios, 64³ quarter-resolution grid.
    pub fn for_layout(layout: &ArrayLayout, freqs: &FrequencyGrid) -> Result<Self> {
        Ok(RmaConfig {
            zero_fill_p_vertical: spacing_ratio(layout.spacing_z(Side::Tx), layout.spacing_z(Side::Rx)),
            zero_fill_p_arc: spacing_ratio(layout.angle_spacing(Side::Tx), layout.angle_spacing(Side::Rx)),
            spectrum_filter: SpectrumFilter::Auto,
            target_extent: 0.26,
            evanescent_guard: 0.95,
            kernel_phase: KernelPhase::Leading,
            grid: GridSpec::quarter_resolution(layout, freqs, Point3::ORIGIN, 64)?,
            interp_oversampling: 2.0,
        })
    }

    pub fn validate(&self, layout: &ArrayLayout) -> Result<()> {
        let pv = spacing_ratio(layout.spacing_z(Side::Tx), layout.spacing_z(Side::Rx));
        let pa = spacing_ratio(layout.angle_spacing(Side::Tx), layout.angle_spacing(Side::Rx));
        if self.zero_fill_p_vertical != pv {
            return Err(Error::invalid(format!(
                "vertical zero-fill factor {} does not match the layout spacing ratio {pv}",
                self.zero_fill_p_vertical
            )));
        }
        if self.zero_fill_p_arc != pa {
            return Err(Error::invalid(format!(
                "arc zero-fill factor {} does not match the layout spacing ratio {pa}",
                self.zero_fill_p_arc
            )));
        }
        if !(self.evanescent_guard > 0.0 && self.evanescent_guard <= 1.0) {
            return Err(Error::invalid("evanescent guard must lie in (0, 1]"));
        }
        if !(self.target_extent >= 0.0) {
            return Err(Error::invalid("target extent must be non-negative"));
        }
        if !(self.interp_oversampling >= 1.0) {
            return Err(Error::invalid("interpolation oversampling must be at least 1"));
        }
        Ok(())
    }
}

fn spacing_ratio(a: Option<f64>, b: Option<f64>) -> usize {
    match (a, b) {
        (Some(a), Some(b)) => {
            let r = if a > b { a / b } else { b / a };
            r.round() as usize
        }
        _ => 1,
    }
}

/// The (sparse, dense) spacing of a pair of sample axes; single-element axes borrow the other's.
fn dense_step(a: Option<f64>, b: Option<f64>) -> f64 {
    match (a, b) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => 1.0,
    }
}

fn echo_tensor(e: &EchoTensor) -> Result<SpectrumTensor> {
    let l = e.layout();
    let f = e.freqs();
    let ks = f.wavenumbers();
    let dz = dense_step(l.spacing_z(Side::Tx), l.spacing_z(Side::Rx));
    let dth = dense_step(l.angle_spacing(Side::Tx), l.angle_spacing(Side::Rx));
    let axes = vec![
        Axis::uniform(AxisLabel::K, ks[0], f.wavenumber_step(), ks.len()),
        Axis::uniform(AxisLabel::ThetaT, l.angles(Side::Tx)[0], l.angle_spacing(Side::Tx).unwrap_or(dth), l.angles(Side::Tx).len()),
        Axis::uniform(AxisLabel::ThetaR, l.angles(Side::Rx)[0], l.angle_spacing(Side::Rx).unwrap_or(dth), l.angles(Side::Rx).len()),
        Axis::uniform(AxisLabel::ZT, l.heights(Side::Tx)[0], l.spacing_z(Side::Tx).unwrap_or(dz), l.heights(Side::Tx).len()),
        Axis::uniform(AxisLabel::ZR, l.heights(Side::Rx)[0], l.spacing_z(Side::Rx).unwrap_or(dz), l.heights(Side::Rx).len()),
    ];
    SpectrumTensor::new(axes, e.data().to_vec())
}

/// Smallest length ≥ n whose only prime factors are 2, 3 and 5.
pub fn fft_len(n: usize) -> usize {
    (n.max(1)..)
        .find(|&m| {
            let mut m = m;
            for p in [2, 3, 5] {
                while m % p == 0 {
                    m /= p;
                }
            }
            m == 1
        })
        .unwrap_or(n)
}

/// Zero-fills the coarser of two sample axes onto the finer spacing and pads
/// both to a shared [`fft_len`] length, so their transforms share one grid.
fn match_axes(t: &SpectrumTensor, a: AxisLabel, b: AxisLabel, expected_p: Option<usize>, min_len: usize) -> Result<SpectrumTensor> {
    let (sa, sb) = (t.axis(a)?.step, t.axis(b)?.step);
    let (coarse, fine) = if sa >= sb { (a, b) } else { (b, a) };
    let ratio = sa.max(sb) / sa.min(sb);
    let p = ratio.round();
    if (ratio - p).abs() > 1e-6 * p {
        return Err(Error::invalid(format!("spacing ratio {ratio} between {a} and {b} is not an integer")));
    }
    let p = p as usize;
    if let Some(e) = expected_p {
        if e != p {
            return Err(Error::invalid(format!("zero-fill factor {e} does not match spacing ratio {p} of {a}/{b}")));
        }
    }
    let t = zero_fill(t, coarse, p)?;
    let n = t.axis(coarse)?.len.max(t.axis(fine)?.len).max(min_len);
    let n = fft_len(n);
    let t = pad_axis(&t, coarse, n)?;
    pad_axis(&t, fine, n)
}

/// Transforms the echo over (z_T, z_R) after zero-filling the sparse axis.
/// Output axes: [k, θ_T, θ_R, k_zT, k_zR] with k_z in transform order.
///
/// The transform length is also raised until its z period N·Δz spans the
/// image grid (|z| up to the farthest grid row plus one step) on both sides
/// of the origin, so no wrapped copy of a target falls on the grid.
pub fn vertical_spectra(e: &EchoTensor, cfg: &RmaConfig) -> Result<SpectrumTensor> {
    let t = echo_tensor(e)?;
    let dz = t.axis(AxisLabel::ZT)?.step.min(t.axis(AxisLabel::ZR)?.step);
    let gz = &cfg.grid.z;
    let zmax = gz.start.abs().max(gz.last().abs()) + gz.step;
    let min_len = (2.0 * zmax / dz).ceil() as usize;
    let t = match_axes(&t, AxisLabel::ZT, AxisLabel::ZR, Some(cfg.zero_fill_p_vertical), min_len)?;
    let t = dft_axis(&t, AxisLabel::ZT, Direction::Forward)?;
    dft_axis(&t, AxisLabel::ZR, Direction::Forward)
}

/// Phase model of the angular Hankel factor H_ξ(a)·exp(jπξ/2), a = k_ρR0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelPhase {
    /// exp(j·sqrt(a² - ξ²)), the small-order form.
    #[default]
    Leading,
    /// Adds ξ·asin(ξ/a) from the Debye expansion; removes the x·y-dependent
    /// cross-range shift of off-centre targets.
    Debye,
}

/// Divisor for one angular order: conj of the Hankel factor with its
/// exp(-jπξ/2) removed. Zero inside the guard band or when k_ρ is not positive.
pub fn angular_kernel(xi: f64, k_rho: f64, r0: f64, guard: f64, phase: KernelPhase) -> Complex64 {
    let a = k_rho * r0;
    if !(k_rho > 0.0) || xi * xi >= (guard * a) * (guard * a) {
        return ZERO;
    }
    let extra = match phase {
        KernelPhase::Leading => 0.0,
        KernelPhase::Debye => xi * (xi / a).asin(),
    };
    (crate::spectral::hankel_factor(xi, k_rho, r0) * Complex64::from_polar(1.0, PI * xi / 2.0 + extra)).conj()
}

/// Removes the Hankel-function convolutions along θ_T and θ_R.
///
/// The θ axes are matched (zero-fill of the sparse one, padding to an
/// [`fft_len`] of at least `min_len`), transformed to (ξ_T, ξ_R), divided by k_ρT·k_ρR
/// times both angular kernels, and transformed back onto a θ grid centred on 0.
pub fn angular_deconvolve(t: &SpectrumTensor, r0: f64, guard: f64, phase: KernelPhase, min_len: usize) -> Result<SpectrumTensor> {
    for l in [AxisLabel::ThetaT, AxisLabel::ThetaR, AxisLabel::KzT, AxisLabel::KzR, AxisLabel::K] {
        t.axis_pos(l)?;
    }
    let t = match_axes(t, AxisLabel::ThetaT, AxisLabel::ThetaR, None, min_len)?;
    let n = t.axis(AxisLabel::ThetaT)?.len;
    let dth = t.axis(AxisLabel::ThetaT)?.step;
    let t = dft_axis(&t, AxisLabel::ThetaT, Direction::Forward)?;
    let mut t = dft_axis(&t, AxisLabel::ThetaR, Direction::Forward)?;

    let pos = |l| t.axis_pos(l);
    let (pk, pxt, pxr, pzt, pzr) = (pos(AxisLabel::K)?, pos(AxisLabel::XiT)?, pos(AxisLabel::XiR)?, pos(AxisLabel::KzT)?, pos(AxisLabel::KzR)?);
    // 1/(k_ρ·kernel) per (k, k_z, ξ) for each side; zero where excluded.
    let table = |pz: usize, px: usize| -> Vec<Complex64> {
        let (ka, za, xa) = (&t.axes()[pk], &t.axes()[pz], &t.axes()[px]);
        let mut out = Vec::with_capacity(ka.len * za.len * xa.len);
        for ik in 0..ka.len {
            let k = ka.coord(ik);
            for iz in 0..za.len {
                let kz = za.coord(iz);
                let kr = if k * k > kz * kz { (k * k - kz * kz).sqrt() } else { 0.0 };
                for ix in 0..xa.len {
                    let h = angular_kernel(xa.coord(ix), kr, r0, guard, phase);
                    out.push(if h == ZERO { ZERO } else { (h * kr).inv() });
                }
            }
        }
        out
    };
    let tt = table(pzt, pxt);
    let tr = table(pzr, pxr);
    let shape = t.shape();
    let (nzt, nxt, nzr, nxr) = (shape[pzt], shape[pxt], shape[pzr], shape[pxr]);
    let mut idx = vec![0usize; shape.len()];
    for v in t.data_mut().iter_mut() {
        let a = tt[(idx[pk] * nzt + idx[pzt]) * nxt + idx[pxt]];
        let b = tr[(idx[pk] * nzr + idx[pzr]) * nxr + idx[pxr]];
        *v = if a == ZERO || b == ZERO { ZERO } else { *v * a * b };
        crate::spectral::increment(&mut idx, &shape);
    }
    let origin = -((n / 2) as f64) * dth;
    t.set_dual_origin(AxisLabel::XiT, origin)?;
    t.set_dual_origin(AxisLabel::XiR, origin)?;
    let t = dft_axis(&t, AxisLabel::XiT, Direction::Inverse)?;
    dft_axis(&t, AxisLabel::XiR, Direction::Inverse)
}

/// Number of (k_T, k_R) cells on anti-diagonal `n` of an N_k × N_k grid.
pub fn multiplicity(nk: usize, n: usize) -> usize {
    (2 * n).min(2 * (nk - 1) - 2 * n) + 1
}

/// Splits the k axis into independent (k_T, k_R) axes.
///
/// Both new axes start at k_0/2 with spacing Δk/2, so cell (i, j) has
/// k_T + k_R = k_0 + (i + j)Δk/2. The sample at k_n is copied to every cell
/// with i + j = 2n; odd anti-diagonals have no source and are masked.
pub fn dimension_increase(t: &SpectrumTensor) -> Result<SpectrumTensor> {
    spread_anti_diagonals(t, false)
}

/// [`dimension_increase`] with each copy scaled by 1/M, M the number of
/// cells on its anti-diagonal, so every source sample carries unit total weight.
pub fn dimension_increase_weighted(t: &SpectrumTensor) -> Result<SpectrumTensor> {
    spread_anti_diagonals(t, true)
}

fn spread_anti_diagonals(t: &SpectrumTensor, weighted: bool) -> Result<SpectrumTensor> {
    let p = t.axis_pos(AxisLabel::K)?;
    let k = t.axis(AxisLabel::K)?.clone();
    let nk = k.len;
    let shape = t.shape();
    let outer: usize = shape[..p].iter().product();
    let inner: usize = shape[p + 1..].iter().product();
    let mut axes = t.axes().to_vec();
    let half = Axis::uniform(AxisLabel::KT, k.start / 2.0, k.step / 2.0, nk);
    axes[p] = half.clone();
    axes.insert(p + 1, Axis { label: AxisLabel::KR, ..half });
    let n_out = outer * nk * nk * inner;
    let mut data = vec![ZERO; n_out];
    let mut mask = vec![false; n_out];
    for o in 0..outer {
        for i in 0..nk {
            for j in 0..nk {
                if (i + j) % 2 != 0 {
                    continue;
                }
                let n = (i + j) / 2;
                let src = &t.data()[(o * nk + n) * inner..(o * nk + n + 1) * inner];
                let dst = ((o * nk + i) * nk + j) * inner;
                if weighted {
                    let w = 1.0 / multiplicity(nk, n) as f64;
                    for (d, s) in data[dst..dst + inner].iter_mut().zip(src) {
                        *d = s * w;
                    }
                } else {
                    data[dst..dst + inner].copy_from_slice(src);
                }
                mask[dst..dst + inner].iter_mut().for_each(|m| *m = true);
            }
        }
    }
    SpectrumTensor::new(axes, data)?.with_mask(mask)
}

/// Adjoint companion of [`dimension_increase`]: 1/M-weighted sums along anti-diagonals.
pub fn collapse_anti_diagonals(t: &SpectrumTensor) -> Result<SpectrumTensor> {
    let p = t.axis_pos(AxisLabel::KT)?;
    if t.axis_pos(AxisLabel::KR)? != p + 1 {
        return Err(Error::axis("k_T and k_R axes must be adjacent"));
    }
    let kt = t.axes()[p].clone();
    let nk = kt.len;
    let shape = t.shape();
    let outer: usize = shape[..p].iter().product();
    let inner: usize = shape[p + 2..].iter().product();
    let mut axes = t.axes().to_vec();
    axes.remove(p + 1);
    axes[p] = Axis::uniform(AxisLabel::K, 2.0 * kt.start, 2.0 * kt.step, nk);
    let mut data = vec![ZERO; outer * nk * inner];
    for o in 0..outer {
        for n in 0..nk {
            let m = multiplicity(nk, n);
            let dst = (o * nk + n) * inner;
            for i in 0..nk {
                let Some(j) = (2 * n).checked_sub(i) else { continue };
                if j >= nk {
                    continue;
                }
                let s = ((o * nk + i) * nk + j) * inner;
                for q in 0..inner {
                    data[dst + q] += t.data()[s + q];
                }
            }
            data[dst..dst + inner].iter_mut().for_each(|v| *v /= m as f64);
        }
    }
    SpectrumTensor::new(axes, data)
}

/// Sums every (T, R) cell pair onto (k_x, k_y, k_z) = T + R.
/// Masked input cells are skipped. Output axes: [k_x, k_y, k_z].
pub fn reduce_to_image_spectrum(t: &SpectrumTensor) -> Result<SpectrumTensor> {
    use AxisLabel::*;
    let labels = [KxT, KxR, KyT, KyR, KzT, KzR];
    if t.axes().len() != 6 {
        return Err(Error::axis("reduction expects exactly the six per-side wavenumber axes"));
    }
    let mut pos = [0usize; 6];
    for (p, l) in pos.iter_mut().zip(labels) {
        *p = t.axis_pos(l)?;
    }
    let ax = |i: usize| &t.axes()[pos[i]];
    for (a, b) in [(0, 1), (2, 3)] {
        if !ax(a).same_grid(ax(b)) {
            return Err(Error::axis(format!(
                "{} and {} grids differ; both sides must share one Cartesian grid",
                labels[a], labels[b]
            )));
        }
    }
    if (ax(4).step - ax(5).step).abs() > 1e-9 * ax(4).step.abs().max(1e-300) && ax(4).len > 1 && ax(5).len > 1 {
        return Err(Error::axis("k_zT and k_zR spacings differ"));
    }
    if labels.iter().enumerate().any(|(i, _)| ax(i).wrapped) {
        return Err(Error::axis("reduction needs axes in increasing order"));
    }
    let sum_axis = |a: &Axis, b: &Axis, label| {
        let step = if a.len > 1 { a.step } else { b.step };
        Axis::uniform(label, a.start + b.start, step, a.len + b.len - 1)
    };
    let out_axes = vec![sum_axis(ax(0), ax(1), Kx), sum_axis(ax(2), ax(3), Ky), sum_axis(ax(4), ax(5), Kz)];
    let (nx, ny, nz) = (out_axes[0].len, out_axes[1].len, out_axes[2].len);
    let mut out = vec![ZERO; nx * ny * nz];
    let shape = t.shape();
    let mut idx = vec![0usize; 6];
    for (flat, v) in t.data().iter().enumerate() {
        if t.is_valid(flat) && *v != ZERO {
            let gx = idx[pos[0]] + idx[pos[1]];
            let gy = idx[pos[2]] + idx[pos[3]];
            let gz = idx[pos[4]] + idx[pos[5]];
            out[(gx * ny + gy) * nz + gz] += *v;
        }
        crate::spectral::increment(&mut idx, &shape);
    }
    SpectrumTensor::new(out_axes, out)
}

/// g(x, y, z) = (1/N) Σ G(k_x, k_y, k_z)·exp(j(k_x x + k_y y + k_z z)), evaluated separably.
pub fn image_from_spectrum(spec: &SpectrumTensor, grid: &GridSpec, method: Method, config_hash: String) -> Result<ImageVolume> {
    let labels: Vec<AxisLabel> = spec.axes().iter().map(|a| a.label).collect();
    if labels != [AxisLabel::Kx, AxisLabel::Ky, AxisLabel::Kz] {
        return Err(Error::axis("image transform expects [k_x, k_y, k_z] axes"));
    }
    let ka: Vec<Vec<f64>> = spec.axes().iter().map(|a| a.coords()).collect();
    let [mx, my, mz] = [ka[0].len(), ka[1].len(), ka[2].len()];
    let [nx, ny, nz] = grid.shape();
    let phasors = |k: &[f64], g: &UniformGrid| -> Vec<Complex64> {
        // [sample][wavenumber]
        let mut e = Vec::with_capacity(g.len * k.len());
        for i in 0..g.len {
            let x = g.coord(i);
            e.extend(k.iter().map(|kk| Complex64::from_polar(1.0, kk * x)));
        }
        e
    };
    let ex = phasors(&ka[0], &grid.x);
    let ey = phasors(&ka[1], &grid.y);
    let ez = phasors(&ka[2], &grid.z);
    let g = spec.data();

    // Contract k_z: a[kx][ky][z].
    let mut a = vec![ZERO; mx * my * nz];
    a.par_chunks_mut(my * nz).enumerate().for_each(|(ix, blk)| {
        for iy in 0..my {
            let row = &g[(ix * my + iy) * mz..(ix * my + iy + 1) * mz];
            for iz in 0..nz {
                let e = &ez[iz * mz..(iz + 1) * mz];
                blk[iy * nz + iz] = row.iter().zip(e).map(|(u, w)| u * w).sum();
            }
        }
    });
    // Contract k_y: b[kx][y][z].
    let mut b = vec![ZERO; mx * ny * nz];
    b.par_chunks_mut(ny * nz).enumerate().for_each(|(ix, blk)| {
        for y in 0..ny {
            for iky in 0..my {
                let w = ey[y * my + iky];
                let src = &a[(ix * my + iky) * nz..(ix * my + iky + 1) * nz];
                for (o, s) in blk[y * nz..(y + 1) * nz].iter_mut().zip(src) {
                    *o += s * w;
                }
            }
        }
    });
    // Contract k_x: out[x][y][z].
    let norm = 1.0 / (mx * my * mz) as f64;
    let mut out = vec![ZERO; nx * ny * nz];
    out.par_chunks_mut(ny * nz).enumerate().for_each(|(x, blk)| {
        for ikx in 0..mx {
            let w = ex[x * mx + ikx] * norm;
            let src = &b[ikx * ny * nz..(ikx + 1) * ny * nz];
            for (o, s) in blk.iter_mut().zip(src) {
                *o += s * w;
            }
        }
    });
    ImageVolume::new(*grid, out, method, config_hash)
}

/// Per-side Cartesian grid covering the polar support of the angular stage.
fn side_grid(k_min_rho: f64, k_max_rho: f64, theta_edge: f64, dk: f64) -> Result<CartesianGrid> {
    let nxh = (k_max_rho * theta_edge.sin() / dk).ceil() as usize;
    let ky0 = (k_min_rho * theta_edge.cos() / dk).floor() - 1.0;
    let ky1 = (k_max_rho / dk).ceil() + 1.0;
    Ok(CartesianGrid {
        kx: UniformGrid::new(-(nxh as f64) * dk, dk, 2 * nxh + 1)?,
        ky: UniformGrid::new(ky0 * dk, dk, (ky1 - ky0) as usize + 1)?,
    })
}

/// Indices of an axis whose |coordinate| is at most `bound`, sorted by coordinate.
fn select_sorted(a: &Axis, bound: f64) -> Vec<usize> {
    let mut v: Vec<usize> = (0..a.len).filter(|&i| a.coord(i).abs() <= bound).collect();
    v.sort_by(|&i, &j| a.coord(i).total_cmp(&a.coord(j)));
    v
}

/// Zeroes k samples whose k_zT or k_zR lies outside the per-k support bound.
fn filter_k_support(t: &mut SpectrumTensor, r0: f64, aperture: f64, extent: f64) -> Result<()> {
    let p = t.axis_pos(AxisLabel::K)?;
    let kzt = t.axis(AxisLabel::KzT)?.start;
    let kzr = t.axis(AxisLabel::KzR)?.start;
    if t.axis(AxisLabel::KzT)?.len != 1 || t.axis(AxisLabel::KzR)?.len != 1 {
        return Err(Error::axis("per-k support filter expects a single (k_zT, k_zR) pair"));
    }
    let k = t.axes()[p].clone();
    let shape = t.shape();
    let outer: usize = shape[..p].iter().product();
    let inner: usize = shape[p + 1..].iter().product();
    let data = t.data_mut();
    for o in 0..outer {
        for i in 0..k.len {
            let b = support_bound_kz(r0, aperture, extent, k.coord(i));
            if kzt.abs() > b || kzr.abs() > b {
                let s = (o * k.len + i) * inner;
                data[s..s + inner].iter_mut().for_each(|v| *v = ZERO);
            }
        }
    }
    Ok(())
}

/// Per-k support filter followed by angular deconvolution of one (k_zT, k_zR) slice.
fn prepare_slice(slice: SpectrumTensor, cfg: &RmaConfig, r0: f64, aperture: f64, nth: usize) -> Result<SpectrumTensor> {
    let mut slice = slice;
    if cfg.spectrum_filter == SpectrumFilter::Auto {
        filter_k_support(&mut slice, r0, aperture, cfg.target_extent)?;
    }
    angular_deconvolve(&slice, r0, cfg.evanescent_guard, cfg.kernel_phase, nth)
}

/// Stage-by-stage chain for one deconvolved slice; reference for [`fused_slice`].
#[cfg(test)]
fn staged_slice(g: &SpectrumTensor, grid: &CartesianGrid) -> Result<SpectrumTensor> {
    use crate::spectral::interp_polar_to_cartesian;
    let g = dimension_increase_weighted(g)?;
    let g = interp_polar_to_cartesian(&g, Side::Tx, grid)?;
    let g = interp_polar_to_cartesian(&g, Side::Rx, grid)?;
    reduce_to_image_spectrum(&g)
}

/// exp(j(k_x·c_x + k_y·c_y)) on one side's polar grid ([k_T index][θ]) at fixed k_z.
///
/// Moves the spectrum's phase reference to (c_x, c_y) so the resampling sees
/// phase slopes set by the distance from the grid centre, not from the origin.
fn demod_table(radial: &Axis, angle: &Axis, kz: f64, cx: f64, cy: f64) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(radial.len * angle.len);
    for i in 0..radial.len {
        let r = radial.coord(i);
        let k_rho = (4.0 * r * r - kz * kz).max(0.0).sqrt();
        for a in 0..angle.len {
            let th = angle.coord(a);
            out.push(Complex64::from_polar(1.0, k_rho * (-th.sin() * cx + th.cos() * cy)));
        }
    }
    out
}

/// Largest horizontal distance from the z axis to the grid, plus one voxel diagonal.
fn grid_radius(g: &GridSpec) -> f64 {
    let far = |a: &UniformGrid| a.start.abs().max(a.last().abs());
    far(&g.x).hypot(far(&g.y)) + g.x.step.hypot(g.y.step)
}

/// Reusable buffers for [`fused_slice`].
#[derive(Default)]
struct Workspace {
    tv: Vec<Complex64>,
    tvalid: Vec<bool>,
}

/// Weighted dimension increase, both polar resamplings and the reduction for
/// one deconvolved slice G[k][θ_T][θ_R], accumulated into `plane`
/// ([k_x][k_y], row length `out_ny`). Polar samples are multiplied by the
/// per-side `demod` tables ([k index][θ]) before resampling.
///
/// Equivalent to the staged chain: the (k_T, k_R) cell (i, j) is read as
/// G[(i+j)/2]/M on demand, and the receive-side resampling feeds the
/// reduction directly, so neither intermediate grid is stored.
#[allow(clippy::too_many_arguments)]
fn fused_slice(
    g: &[Complex64],
    nk: usize,
    nth: usize,
    taps_t: &[CellTaps],
    taps_r: &[CellTaps],
    demod_t: &[Complex64],
    demod_r: &[Complex64],
    ny: usize,
    out_ny: usize,
    ws: &mut Workspace,
    plane: &mut [Complex64],
) {
    let nct = taps_t.len();
    ws.tv.clear();
    ws.tv.resize(nct * nk * nth, ZERO);
    ws.tvalid.clear();
    ws.tvalid.resize(nct * nk, false);
    let inv_m: Vec<f64> = (0..nk).map(|n| 1.0 / multiplicity(nk, n) as f64).collect();

    // Transmit side: one row over θ_R per (cell, k_R index).
    for (c, (_, tp)) in taps_t.iter().enumerate() {
        for j in 0..nk {
            let mut terms = [(0usize, ZERO); 4];
            let mut nt = 0;
            let mut wsum = 0.0;
            let mut dropped = false;
            for &(i, a, w) in tp {
                if (i + j) % 2 == 0 {
                    let n = (i + j) / 2;
                    terms[nt] = ((n * nth + a) * nth, demod_t[i * nth + a] * (w * inv_m[n]));
                    nt += 1;
                    wsum += w;
                } else if w > 0.0 {
                    dropped = true;
                }
            }
            let scale = if !dropped {
                1.0
            } else if wsum > 1e-12 {
                1.0 / wsum
            } else {
                continue;
            };
            let row = &mut ws.tv[(c * nk + j) * nth..(c * nk + j + 1) * nth];
            for &(off, w) in &terms[..nt] {
                for (d, v) in row.iter_mut().zip(&g[off..off + nth]) {
                    *d += v * w;
                }
            }
            if scale != 1.0 {
                row.iter_mut().for_each(|v| *v *= scale);
            }
            ws.tvalid[c * nk + j] = true;
        }
    }

    // Receive side, summed straight onto (k_xT + k_xR, k_yT + k_yR).
    for (c, (cell_t, _)) in taps_t.iter().enumerate() {
        let valid = &ws.tvalid[c * nk..(c + 1) * nk];
        if !valid.iter().any(|v| *v) {
            continue;
        }
        let tv = &ws.tv[c * nk * nth..(c + 1) * nk * nth];
        let (ixt, iyt) = (cell_t / ny, cell_t % ny);
        for (cell_r, tp) in taps_r {
            let mut acc = ZERO;
            let mut wsum = 0.0;
            let mut dropped = false;
            for &(j, b, w) in tp {
                if valid[j] {
                    acc += tv[j * nth + b] * demod_r[j * nth + b] * w;
                    wsum += w;
                } else if w > 0.0 {
                    dropped = true;
                }
            }
            let v = if !dropped {
                acc
            } else if wsum > 1e-12 {
                acc / wsum
            } else {
                continue;
            };
            let (ixr, iyr) = (cell_r / ny, cell_r % ny);
            plane[(ixt + ixr) * out_ny + iyt + iyr] += v;
        }
    }
}

/// Full reconstruction from echo to image volume.
pub fn reconstruct_rma(e: &EchoTensor, layout: &ArrayLayout, cfg: &RmaConfig) -> Result<ImageVolume> {
    if e.layout() != layout {
        return Err(Error::invalid("echo layout differs from the reconstruction layout"));
    }
    cfg.validate(layout)?;
    let r0 = layout.radius();
    let aperture = layout.height_extent();
    let ks = e.freqs().wavenumbers();
    let (k_min, k_max) = (ks[0], ks[ks.len() - 1]);

    let spec = vertical_spectra(e, cfg)?;
    let kzt_axis = spec.axis(AxisLabel::KzT)?.clone();
    let kzr_axis = spec.axis(AxisLabel::KzR)?.clone();
    let kz_bound = match cfg.spectrum_filter {
        SpectrumFilter::Auto => support_bound_kz(r0, aperture, cfg.target_extent, k_max),
        _ => k_max,
    };
    let sel_t = select_sorted(&kzt_axis, kz_bound);
    let sel_r = select_sorted(&kzr_axis, kz_bound);
    if sel_t.is_empty() || sel_r.is_empty() {
        return Err(Error::numeric("empty spectrum: no propagating k_z samples"));
    }

    // θ grid after deconvolution: n samples of the dense spacing, centred on 0.
    // The deconvolved spectrum of a target at distance ρ from the axis spans
    // the aperture shifted by up to asin(ρ/R0), so the period covers both signs.
    let dth = dense_step(layout.angle_spacing(Side::Tx), layout.angle_spacing(Side::Rx));
    let nth = {
        let nt = layout.angles(Side::Tx).len() * spacing_ratio_for(layout.angle_spacing(Side::Tx), dth);
        let nr = layout.angles(Side::Rx).len() * spacing_ratio_for(layout.angle_spacing(Side::Rx), dth);
        let spread = 2.0 * (grid_radius(&cfg.grid) / r0).min(1.0).asin();
        fft_len(nt.max(nr) + (spread / dth).ceil() as usize)
    };
    let theta_edge = (nth / 2) as f64 * dth;
    let kz_sel_max = sel_t
        .iter()
        .map(|&i| kzt_axis.coord(i).abs())
        .chain(sel_r.iter().map(|&i| kzr_axis.coord(i).abs()))
        .fold(0.0, f64::max);
    let k_rho_min = (k_min * k_min - kz_sel_max * kz_sel_max).max(0.0).sqrt();
    let image_extent = grid_extent(&cfg.grid);
    let dkc = 2.0 * PI / (cfg.interp_oversampling * image_extent);
    let cart = side_grid(k_rho_min, k_max, theta_edge.min(PI / 2.0), dkc)?;

    let kz_step = kzt_axis.step;
    let kz0 = kzt_axis.coord(sel_t[0]) + kzr_axis.coord(sel_r[0]);
    let kz_last = kzt_axis.coord(*sel_t.last().unwrap()) + kzr_axis.coord(*sel_r.last().unwrap());
    let nkz = ((kz_last - kz0) / kz_step).round() as usize + 1;
    let (nx, ny) = (2 * cart.kx.len - 1, 2 * cart.ky.len - 1);
    let plane = nx * ny;

    // Polar grids seen by the resampling: (k_T or k_R, θ) after deconvolution.
    let nk = ks.len();
    let dk = e.freqs().wavenumber_step();
    let radial = Axis::uniform(AxisLabel::KT, k_min / 2.0, dk / 2.0, nk);
    let angle = Axis::uniform(AxisLabel::ThetaT, -((nth / 2) as f64) * dth, dth, nth);
    let taps_for = |axis: &Axis, sel: &[usize]| -> Vec<Vec<CellTaps>> {
        sel.iter().map(|&i| cell_taps(&cart, &radial, &angle, axis.coord(i), true)).collect()
    };
    let taps_t = taps_for(&kzt_axis, &sel_t);
    let taps_r = taps_for(&kzr_axis, &sel_r);
    let center = cfg.grid.center();
    let demod_for = |axis: &Axis, sel: &[usize]| -> Vec<Vec<Complex64>> {
        sel.iter().map(|&i| demod_table(&radial, &angle, axis.coord(i), center.x, center.y)).collect()
    };
    let demod_t = demod_for(&kzt_axis, &sel_t);
    let demod_r = demod_for(&kzr_axis, &sel_r);

    let rows: Vec<Result<Vec<Complex64>>> = sel_t
        .par_iter()
        .zip(taps_t.par_iter().zip(demod_t.par_iter()))
        .map(|(&it, (tt, dt))| {
            let mut acc = vec![ZERO; plane * nkz];
            let mut ws = Workspace::default();
            let mut part = vec![ZERO; plane];
            for ((&ir, tr), dr) in sel_r.iter().zip(&taps_r).zip(&demod_r) {
                let slice = spec.select(&[(AxisLabel::KzT, it), (AxisLabel::KzR, ir)])?;
                let g = prepare_slice(slice, cfg, r0, aperture, nth)?;
                if g.axis(AxisLabel::ThetaT)?.len != nth || g.axis(AxisLabel::ThetaR)?.len != nth {
                    return Err(Error::axis("deconvolved θ grid differs from the planned grid"));
                }
                part.iter_mut().for_each(|v| *v = ZERO);
                fused_slice(g.data(), nk, nth, tt, tr, dt, dr, cart.ky.len, ny, &mut ws, &mut part);
                let kz = kzt_axis.coord(it) + kzr_axis.coord(ir);
                let iz = ((kz - kz0) / kz_step).round() as usize;
                for (q, v) in part.iter().enumerate() {
                    acc[q * nkz + iz] += *v;
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![ZERO; plane * nkz];
    for r in rows {
        for (t, v) in total.iter_mut().zip(r?) {
            *t += v;
        }
    }
    let axes = vec![
        Axis::uniform(AxisLabel::Kx, 2.0 * cart.kx.start, dkc, nx),
        Axis::uniform(AxisLabel::Ky, 2.0 * cart.ky.start, dkc, ny),
        Axis::uniform(AxisLabel::Kz, kz0, kz_step, nkz),
    ];
    let mut full = SpectrumTensor::new(axes, total)?;
    match &cfg.spectrum_filter {
        SpectrumFilter::Auto => {
            let w = SpectralWindow::rectangular(AxisLabel::Kz, -2.0 * kz_bound, 2.0 * kz_bound)?;
            full = apply_window(&full, &w)?;
        }
        SpectrumFilter::Window(w) => full = apply_window(&full, w)?,
        SpectrumFilter::None => {}
    }
    if full.energy() == 0.0 {
        return Err(Error::numeric("empty spectrum: masking removed all energy"));
    }
    let hash = crate::io::config_hash(&format!("{cfg:?}"));
    // The spectrum is referenced to the grid centre in x and y.
    let mut local = cfg.grid;
    local.x.start -= center.x;
    local.y.start -= center.y;
    let img = image_from_spectrum(&full, &local, Method::Rma, hash.clone())?;
    ImageVolume::new(cfg.grid, img.data().to_vec(), Method::Rma, hash)
}

fn spacing_ratio_for(spacing: Option<f64>, dense: f64) -> usize {
    spacing.map_or(1, |s| (s / dense).round().max(1.0) as usize)
}

fn grid_extent(g: &GridSpec) -> f64 {
    g.x.extent().max(g.y.extent())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::simulate_echo;
    use crate::geometry::{Scene, SubarraySpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rand_c(rng: &mut ChaCha8Rng) -> Complex64 {
        c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn dimension_increase_examples() {
        let t = SpectrumTensor::new(vec![Axis::uniform(AxisLabel::K, 600.0, 5.0, 1)], vec![c(2.0, 1.0)]).unwrap();
        let d = dimension_increase(&t).unwrap();
        assert_eq!(d.shape(), vec![1, 1]);
        assert_eq!(d.data()[0], c(2.0, 1.0));

        let t = SpectrumTensor::new(vec![Axis::uniform(AxisLabel::K, 600.0, 5.0, 4)], vec![c(1.5, 0.0); 4]).unwrap();
        let d = dimension_increase(&t).unwrap();
        let m = d.mask().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let f = i * 4 + j;
                assert_eq!(m[f], (i + j) % 2 == 0);
                if m[f] {
                    assert_eq!(d.data()[f], c(1.5, 0.0));
                    let kt = d.axes()[0].coord(i);
                    let kr = d.axes()[1].coord(j);
                    assert!((kt + kr - (600.0 + 5.0 * ((i + j) / 2) as f64)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn anti_diagonal_adjoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for nk in 1..=8 {
            let axes = vec![
                Axis::uniform(AxisLabel::ThetaT, 0.0, 0.1, 2),
                Axis::uniform(AxisLabel::K, 500.0, 3.0, nk),
                Axis::uniform(AxisLabel::KzT, 0.0, 1.0, 3),
            ];
            let data: Vec<Complex64> = (0..2 * nk * 3).map(|_| rand_c(&mut rng)).collect();
            let t = SpectrumTensor::new(axes, data.clone()).unwrap();
            let back = collapse_anti_diagonals(&dimension_increase(&t).unwrap()).unwrap();
            for (u, v) in back.data().iter().zip(&data) {
                assert!((u - v).norm() <= 1e-14 * v.norm().max(1.0), "nk={nk}");
            }
            // Weighted copies along each anti-diagonal sum back to the source.
            let w = dimension_increase_weighted(&t).unwrap();
            let summed = collapse_anti_diagonals(&w).unwrap();
            for n in 0..nk {
                let m = multiplicity(nk, n) as f64;
                for o in 0..2 {
                    for q in 0..3 {
                        let f = (o * nk + n) * 3 + q;
                        assert!((summed.data()[f] * m - data[f]).norm() <= 1e-14 * data[f].norm().max(1.0));
                    }
                }
            }
            // Brute force: anti-diagonal n carries M copies.
            let d = dimension_increase(&t).unwrap();
            for n in 0..nk {
                let count = (0..nk).filter(|&i| (2 * n).checked_sub(i).is_some_and(|j| j < nk)).count();
                assert_eq!(count, multiplicity(nk, n));
            }
            assert_eq!(d.mask().unwrap().iter().filter(|m| **m).count(), 2 * 3 * (0..nk).map(|n| multiplicity(nk, n)).sum::<usize>());
        }
    }

    fn six_axes(n: usize, kz_start: (f64, f64)) -> Vec<Axis> {
        vec![
            Axis::uniform(AxisLabel::KxT, -3.0, 2.0, n),
            Axis::uniform(AxisLabel::KyT, 10.0, 2.0, n),
            Axis::uniform(AxisLabel::KzT, kz_start.0, 1.5, n),
            Axis::uniform(AxisLabel::KxR, -3.0, 2.0, n),
            Axis::uniform(AxisLabel::KyR, 10.0, 2.0, n),
            Axis::uniform(AxisLabel::KzR, kz_start.1, 1.5, n),
        ]
    }

    #[test]
    fn reduction_matches_six_loop_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n: usize = 4;
        let data: Vec<Complex64> = (0..n.pow(6)).map(|_| rand_c(&mut rng)).collect();
        let t = SpectrumTensor::new(six_axes(n, (-2.0, 1.0)), data.clone()).unwrap();
        let r = reduce_to_image_spectrum(&t).unwrap();
        let m = 2 * n - 1;
        let mut want = vec![ZERO; m * m * m];
        for a in 0..n {
            for b in 0..n {
                for cz in 0..n {
                    for d in 0..n {
                        for e in 0..n {
                            for f in 0..n {
                                let v = data[((((a * n + b) * n + cz) * n + d) * n + e) * n + f];
                                want[((a + d) * m + (b + e)) * m + (cz + f)] += v;
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(r.data(), &want[..]);
        assert_eq!(r.axes()[0].start, -6.0);
        assert_eq!(r.axes()[2].start, -1.0);
    }

    #[test]
    fn reduction_single_cell_and_symmetry() {
        let n: usize = 3;
        let mut data = vec![ZERO; n.pow(6)];
        let t0 = SpectrumTensor::new(six_axes(n, (0.0, 0.0)), data.clone()).unwrap();
        let idx = [1, 2, 0, 2, 1, 1];
        data[t0.flat_index(&idx)] = c(4.0, -1.0);
        let t = SpectrumTensor::new(six_axes(n, (0.0, 0.0)), data).unwrap();
        let r = reduce_to_image_spectrum(&t).unwrap();
        let nz: Vec<usize> = (0..r.data().len()).filter(|&i| r.data()[i] != ZERO).collect();
        assert_eq!(nz, vec![r.flat_index(&[3, 3, 1])]);

        // Swapping the T and R blocks leaves the output unchanged.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let data: Vec<Complex64> = (0..n.pow(6)).map(|_| rand_c(&mut rng)).collect();
        let a = SpectrumTensor::new(six_axes(n, (0.0, 0.0)), data.clone()).unwrap();
        let mut swapped = vec![ZERO; data.len()];
        let mut ix = vec![0usize; 6];
        let shape = vec![n; 6];
        for v in &data {
            let j = [ix[3], ix[4], ix[5], ix[0], ix[1], ix[2]];
            swapped[a.flat_index(&j)] = *v;
            crate::spectral::increment(&mut ix, &shape);
        }
        let b = SpectrumTensor::new(six_axes(n, (0.0, 0.0)), swapped).unwrap();
        let (ra, rb) = (reduce_to_image_spectrum(&a).unwrap(), reduce_to_image_spectrum(&b).unwrap());
        for (u, v) in ra.data().iter().zip(rb.data()) {
            assert!((u - v).norm() < 1e-12);
        }
    }

    #[test]
    fn reduction_rejects_mismatched_grids() {
        let mut axes = six_axes(2, (0.0, 0.0));
        axes[3] = Axis::uniform(AxisLabel::KxR, -3.0, 2.5, 2);
        let t = SpectrumTensor::zeros(axes).unwrap();
        assert!(reduce_to_image_spectrum(&t).is_err());
    }

    /// Forward model of the angular stage, written out directly: circular
    /// convolution in θ with the kernel whose DFT is k_ρ·h(ξ).
    #[test]
    fn angular_deconvolution_round_trip() {
        for phase in [KernelPhase::Leading, KernelPhase::Debye] {
            deconvolution_round_trip(phase);
        }
    }

    #[test]
    fn kernel_phase_models() {
        let (kr, r0) = (700.0, 1.5);
        for xi in [-800.0, -30.0, 0.0, 12.0, 900.0] {
            let l = angular_kernel(xi, kr, r0, 0.95, KernelPhase::Leading);
            let d = angular_kernel(xi, kr, r0, 0.95, KernelPhase::Debye);
            assert!((l.norm() - 1.0).abs() < 1e-12 && (d.norm() - 1.0).abs() < 1e-12);
            let a = kr * r0;
            let want = (a * a - xi * xi).sqrt() + xi * (xi / a).asin();
            assert!((d - Complex64::from_polar(1.0, -want)).norm() < 1e-9);
        }
        assert_eq!(angular_kernel(0.0, kr, r0, 0.95, KernelPhase::Debye), angular_kernel(0.0, kr, r0, 0.95, KernelPhase::Leading));
        assert_eq!(angular_kernel(1000.0, kr, r0, 0.95, KernelPhase::Debye), ZERO);
    }

    fn deconvolution_round_trip(phase: KernelPhase) {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let (n, dth, r0) = (32usize, 0.01, 1.2);
        let ks: [f64; 2] = [300.0, 320.0];
        let (kzt, kzr): (f64, f64) = (40.0, -25.0);
        let theta0 = -((n / 2) as f64) * dth;
        let xi_step = 2.0 * PI / (n as f64 * dth);
        let xi = |m: usize| if m < n / 2 { m as f64 * xi_step } else { (m as f64 - n as f64) * xi_step };
        let mut g0 = vec![ZERO; ks.len() * n * n];
        let mut input = vec![ZERO; ks.len() * n * n];
        for (ik, &k) in ks.iter().enumerate() {
            let krt = (k * k - kzt * kzt).sqrt();
            let krr = (k * k - kzr * kzr).sqrt();
            // Band-limited G0 from random coefficients on orders |ξ| < 0.5 k_ρR0.
            let mut coef = vec![ZERO; n * n];
            for a in 0..n {
                for b in 0..n {
                    if xi(a).abs() < 0.5 * krt * r0 && xi(b).abs() < 0.5 * krr * r0 && (a < 5 || a > n - 5) && (b < 5 || b > n - 5) {
                        coef[a * n + b] = rand_c(&mut rng);
                    }
                }
            }
            // Time-domain G0 and its convolution, by direct sums.
            for i in 0..n {
                for j in 0..n {
                    let (ti, tj) = (theta0 + i as f64 * dth, theta0 + j as f64 * dth);
                    let mut gv = ZERO;
                    let mut sv = ZERO;
                    for a in 0..n {
                        for b in 0..n {
                            let cf = coef[a * n + b];
                            if cf == ZERO {
                                continue;
                            }
                            let ph = Complex64::from_polar(1.0, xi(a) * ti + xi(b) * tj) / (n * n) as f64;
                            let h = angular_kernel(xi(a), krt, r0, 0.95, phase) * angular_kernel(xi(b), krr, r0, 0.95, phase) * (krt * krr);
                            gv += cf * ph;
                            sv += cf * h * ph;
                        }
                    }
                    g0[(ik * n + i) * n + j] = gv;
                    input[(ik * n + i) * n + j] = sv;
                }
            }
        }
        let axes = vec![
            Axis::uniform(AxisLabel::K, ks[0], 20.0, 2),
            Axis::uniform(AxisLabel::ThetaT, theta0, dth, n),
            Axis::uniform(AxisLabel::ThetaR, theta0, dth, n),
            Axis::uniform(AxisLabel::KzT, kzt, 1.0, 1),
            Axis::uniform(AxisLabel::KzR, kzr, 1.0, 1),
        ];
        let t = SpectrumTensor::new(axes, input).unwrap();
        let out = angular_deconvolve(&t, r0, 0.95, phase, 0).unwrap();
        assert!((out.axis(AxisLabel::ThetaT).unwrap().start - theta0).abs() < 1e-12);
        let scale = g0.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (u, v) in out.data().iter().zip(&g0) {
            assert!((u - v).norm() <= 1e-6 * scale, "{u} vs {v}");
        }

        let zero = SpectrumTensor::zeros(t.axes().to_vec()).unwrap();
        assert!(angular_deconvolve(&zero, r0, 0.95, KernelPhase::Leading, 0).unwrap().data().iter().all(|v| *v == ZERO));
    }

    #[test]
    fn evanescent_slice_is_zeroed() {
        let axes = vec![
            Axis::uniform(AxisLabel::K, 100.0, 1.0, 1),
            Axis::uniform(AxisLabel::ThetaT, -0.08, 0.01, 16),
            Axis::uniform(AxisLabel::ThetaR, -0.08, 0.01, 16),
            Axis::uniform(AxisLabel::KzT, 150.0, 1.0, 1),
            Axis::uniform(AxisLabel::KzR, 0.0, 1.0, 1),
        ];
        let t = SpectrumTensor::new(axes, vec![c(1.0, 0.5); 256]).unwrap();
        let out = angular_deconvolve(&t, 1.0, 0.95, KernelPhase::Leading, 0).unwrap();
        assert!(out.data().iter().all(|v| *v == ZERO));
        assert!(angular_deconvolve(&SpectrumTensor::zeros(vec![Axis::uniform(AxisLabel::K, 1.0, 1.0, 1)]).unwrap(), 1.0, 0.95, KernelPhase::Leading, 0).is_err());
    }

    #[test]
    fn image_transform_is_real_for_even_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let (n, dk) = (5usize, 4.0);
        let m = 2 * n + 1;
        let mut g = vec![ZERO; m * m * m];
        for a in 0..m {
            for b in 0..m {
                for cz in 0..m {
                    let (ma, mb, mc) = (m - 1 - a, m - 1 - b, m - 1 - cz);
                    let fi = (a * m + b) * m + cz;
                    let fm = (ma * m + mb) * m + mc;
                    if fm < fi {
                        g[fi] = g[fm];
                    } else {
                        g[fi] = c(rng.gen_range(-1.0..1.0), 0.0);
                    }
                }
            }
        }
        let ax = |l| Axis::uniform(l, -(n as f64) * dk, dk, m);
        let spec = SpectrumTensor::new(vec![ax(AxisLabel::Kx), ax(AxisLabel::Ky), ax(AxisLabel::Kz)], g).unwrap();
        let grid = GridSpec::centered(Point3::new(0.01, -0.02, 0.03), [0.01, 0.012, 0.02], [7, 6, 5]).unwrap();
        let img = image_from_spectrum(&spec, &grid, Method::Rma, String::new()).unwrap();
        let peak = img.max_magnitude();
        assert!(img.data().iter().all(|v| v.im.abs() <= 1e-9 * peak));
    }

    #[test]
    fn image_transform_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let axes = vec![
            Axis::uniform(AxisLabel::Kx, -6.0, 3.0, 4),
            Axis::uniform(AxisLabel::Ky, 100.0, 3.0, 3),
            Axis::uniform(AxisLabel::Kz, -2.0, 2.0, 5),
        ];
        let data: Vec<Complex64> = (0..60).map(|_| rand_c(&mut rng)).collect();
        let spec = SpectrumTensor::new(axes.clone(), data.clone()).unwrap();
        let grid = GridSpec::centered(Point3::ORIGIN, [0.05, 0.04, 0.03], [3, 4, 2]).unwrap();
        let img = image_from_spectrum(&spec, &grid, Method::Rma, String::new()).unwrap();
        for ix in 0..3 {
            for iy in 0..4 {
                for iz in 0..2 {
                    let p = grid.point(ix, iy, iz);
                    let mut want = ZERO;
                    for a in 0..4 {
                        for b in 0..3 {
                            for cz in 0..5 {
                                let ph = axes[0].coord(a) * p.x + axes[1].coord(b) * p.y + axes[2].coord(cz) * p.z;
                                want += data[(a * 3 + b) * 5 + cz] * Complex64::from_polar(1.0, ph);
                            }
                        }
                    }
                    want /= 60.0;
                    assert!((img.get(ix, iy, iz) - want).norm() < 1e-12);
                }
            }
        }
    }

    fn small_setup() -> (ArrayLayout, FrequencyGrid) {
        let layout = ArrayLayout::centered(
            1.0,
            SubarraySpec {
                arc_count: 3,
                arc_spacing: 0.06,
                z_count: 3,
                z_spacing: 0.06,
            },
            SubarraySpec {
                arc_count: 13,
                arc_spacing: 0.01,
                z_count: 13,
                z_spacing: 0.01,
            },
        )
        .unwrap();
        (layout, FrequencyGrid::new(30e9, 36e9, 7).unwrap())
    }

    #[test]
    fn vertical_spectra_examples() {
        let (layout, freqs) = small_setup();
        let mut cfg = RmaConfig::for_layout(&layout, &freqs).unwrap();
        assert_eq!(cfg.zero_fill_p_vertical, 6);
        cfg.grid = GridSpec::quarter_resolution(&layout, &freqs, Point3::ORIGIN, 16).unwrap();
        let scene = Scene::single(Point3::new(0.0, 0.1, 0.0), c(1.0, 0.0));
        let e = simulate_echo(&scene, &layout, &freqs).unwrap();
        let s = vertical_spectra(&e, &cfg).unwrap();
        let (zt, zr) = (s.axis(AxisLabel::KzT).unwrap(), s.axis(AxisLabel::KzR).unwrap());
        assert_eq!(zt.len, 18);
        assert!((zt.step - zr.step).abs() < 1e-12);
        assert!((zt.step - 2.0 * PI / (18.0 * 0.01)).abs() < 1e-9);
        // Even geometry: |S(k_zT, k_zR)| = |S(-k_zT, -k_zR)|.
        let n = 18;
        for k in [0, 6] {
            for it in [0, 2] {
                for ir in [0, 6, 12] {
                    for a in 0..n {
                        for b in 0..n {
                            let u = s.get(&[k, it, ir, a, b]).norm();
                            let v = s.get(&[k, 2 - it, 12 - ir, (n - a) % n, (n - b) % n]).norm();
                            assert!((u - v).abs() < 1e-9 * (1.0 + u), "{u} {v}");
                        }
                    }
                }
            }
        }
        let bad = RmaConfig {
            zero_fill_p_vertical: 4,
            ..cfg
        };
        assert!(vertical_spectra(&e, &bad).is_err());
    }

    #[test]
    fn vertical_sparse_spectrum_tiles() {
        // Sparse transmit column alone: after zero-filling by P its spectrum
        // repeats with period 2π/Δz_T, giving P replicas across the band.
        let (layout, freqs) = small_setup();
        let cfg = RmaConfig::for_layout(&layout, &freqs).unwrap();
        let e = simulate_echo(&Scene::single(Point3::new(0.0, 0.0, 0.02), c(1.0, 0.0)), &layout, &freqs).unwrap();
        let s = vertical_spectra(&e, &cfg).unwrap();
        let ax = s.axis(AxisLabel::KzT).unwrap().clone();
        let period = 2.0 * PI / 0.06;
        let bins_per_period = period / ax.step;
        for a in 0..ax.len {
            let shifted = ((a as f64 + bins_per_period).round() as usize) % ax.len;
            if ((a as f64 + bins_per_period) - (a as f64 + bins_per_period).round()).abs() > 1e-9 {
                continue;
            }
            let u = s.get(&[3, 1, 6, a, 4]);
            let v = s.get(&[3, 1, 6, shifted, 4]);
            assert!((u.norm() - v.norm()).abs() < 1e-9 * (1.0 + u.norm()));
        }
    }

    #[test]
    fn fused_slice_matches_staged_chain() {
        let (layout, freqs) = small_setup();
        let mut cfg = RmaConfig::for_layout(&layout, &freqs).unwrap();
        cfg.grid = GridSpec::quarter_resolution(&layout, &freqs, Point3::ORIGIN, 16).unwrap();
        let scene = Scene::new(vec![
            crate::geometry::Scatterer { position: Point3::new(0.01, 0.02, -0.01), reflectivity: c(1.0, 0.3) },
            crate::geometry::Scatterer { position: Point3::new(-0.03, -0.01, 0.02), reflectivity: c(-0.4, 0.8) },
        ])
        .unwrap();
        let e = simulate_echo(&scene, &layout, &freqs).unwrap();
        let spec = vertical_spectra(&e, &cfg).unwrap();
        let nth = 18;
        let dth = 0.01;
        let cart = side_grid(500.0, freqs.wavenumbers()[6], 0.16, 15.0).unwrap();
        let ks = freqs.wavenumbers();
        let radial = Axis::uniform(AxisLabel::KT, ks[0] / 2.0, freqs.wavenumber_step() / 2.0, ks.len());
        let angle = Axis::uniform(AxisLabel::ThetaT, -((nth / 2) as f64) * dth, dth, nth);
        let kz_axis = spec.axis(AxisLabel::KzT).unwrap().clone();
        let mut ws = Workspace::default();
        for (it, ir) in [(0, 0), (1, 17), (3, 2)] {
            let slice = spec.select(&[(AxisLabel::KzT, it), (AxisLabel::KzR, ir)]).unwrap();
            let g = prepare_slice(slice, &cfg, layout.radius(), layout.height_extent(), 0).unwrap();
            assert_eq!(g.axis(AxisLabel::ThetaT).unwrap().len, nth);
            let staged = staged_slice(&g, &cart).unwrap();
            let tt = cell_taps(&cart, &radial, &angle, kz_axis.coord(it), true);
            let tr = cell_taps(&cart, &radial, &angle, kz_axis.coord(ir), true);
            let ny = 2 * cart.ky.len - 1;
            let mut plane = vec![ZERO; (2 * cart.kx.len - 1) * ny];
            let dt = demod_table(&radial, &angle, kz_axis.coord(it), 0.0, 0.0);
            let dr = demod_table(&radial, &angle, kz_axis.coord(ir), 0.0, 0.0);
            assert!(dt.iter().chain(&dr).all(|v| *v == Complex64::new(1.0, 0.0)));
            fused_slice(g.data(), ks.len(), nth, &tt, &tr, &dt, &dr, cart.ky.len, ny, &mut ws, &mut plane);
            let scale = staged.data().iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!(scale > 0.0);
            for (u, v) in plane.iter().zip(staged.data()) {
                assert!((u - v).norm() <= 1e-12 * scale, "{u} {v}");
            }
        }
    }

    #[test]
    fn fft_len_values() {
        let got: Vec<usize> = [0, 1, 7, 11, 13, 41, 78, 97, 128].iter().map(|&n| fft_len(n)).collect();
        assert_eq!(got, [1, 1, 8, 12, 15, 45, 80, 100, 128]);
    }

    #[test]
    fn multiplicity_values() {
        assert_eq!((0..15).map(|n| multiplicity(15, n)).collect::<Vec<_>>(), vec![1, 3, 5, 7, 9, 11, 13, 15, 13, 11, 9, 7, 5, 3, 1]);
        assert_eq!(multiplicity(1, 0), 1);
    }
}

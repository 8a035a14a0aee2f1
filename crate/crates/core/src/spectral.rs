//! Wavenumber-domain kernels on labelled tensors.
//!
//! Conventions:
//! * forward DFT is unnormalised, inverse carries 1/N;
//! * a forward transform includes the spatial-origin phase, so bin m holds
//!   Σ_n x[n]·exp(-j·κ_m·(x0 + nΔ)) and the inverse may reconstruct on any
//!   origin (see [`SpectrumTensor::set_dual_origin`]);
//! * transformed axes keep FFT bin order (`wrapped`); their coordinates run
//!   0, Δκ, …, then the negative frequencies.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::geometry::{Side, UniformGrid};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AxisLabel {
    ZT,
    ZR,
    ThetaT,
    ThetaR,
    K,
    KzT,
    KzR,
    XiT,
    XiR,
    KT,
    KR,
    KrhoT,
    KrhoR,
    KxT,
    KyT,
    KxR,
    KyR,
    Kx,
    Ky,
    Kz,
}

impl AxisLabel {
    pub fn name(self) -> &'static str {
        use AxisLabel::*;
        match self {
            ZT => "z_T",
            ZR => "z_R",
            ThetaT => "theta_T",
            ThetaR => "theta_R",
            K => "k",
            KzT => "k_zT",
            KzR => "k_zR",
            XiT => "xi_T",
            XiR => "xi_R",
            KT => "k_T",
            KR => "k_R",
            KrhoT => "k_rhoT",
            KrhoR => "k_rhoR",
            KxT => "k_xT",
            KyT => "k_yT",
            KxR => "k_xR",
            KyR => "k_yR",
            Kx => "k_x",
            Ky => "k_y",
            Kz => "k_z",
        }
    }

    /// Fourier partner of a transformable axis.
    pub fn dual(self) -> Option<AxisLabel> {
        use AxisLabel::*;
        match self {
            ZT => Some(KzT),
            ZR => Some(KzR),
            ThetaT => Some(XiT),
            ThetaR => Some(XiR),
            KzT => Some(ZT),
            KzR => Some(ZR),
            XiT => Some(ThetaT),
            XiR => Some(ThetaR),
            _ => None,
        }
    }

    fn is_sample_domain(self) -> bool {
        matches!(self, AxisLabel::ZT | AxisLabel::ZR | AxisLabel::ThetaT | AxisLabel::ThetaR)
    }
}

impl fmt::Display for AxisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// One uniformly sampled tensor axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub label: AxisLabel,
    pub start: f64,
    pub step: f64,
    pub len: usize,
    /// Coordinates are in FFT bin order.
    pub wrapped: bool,
    /// Origin of the conjugate domain, used when transforming back.
    pub dual_origin: f64,
    /// Trailing zero samples appended by [`pad_axis`].
    pub padding: usize,
}

impl Axis {
    pub fn uniform(label: AxisLabel, start: f64, step: f64, len: usize) -> Self {
        Axis {
            label,
            start,
            step,
            len,
            wrapped: false,
            dual_origin: 0.0,
            padding: 0,
        }
    }

    pub fn from_grid(label: AxisLabel, g: &UniformGrid) -> Self {
        Axis::uniform(label, g.start, g.step, g.len)
    }

    /// Builds an axis from explicit coordinates; they must be uniform and increasing.
    pub fn from_coords(label: AxisLabel, coords: &[f64]) -> Result<Self> {
        let step = crate::geometry::uniform_spacing(coords)
            .map_err(|e| Error::axis(format!("axis {label}: {e}")))?
            .unwrap_or(0.0);
        Ok(Axis::uniform(label, coords[0], step, coords.len()))
    }

    fn signed_bin(&self, i: usize) -> isize {
        if i < self.len.div_ceil(2) {
            i as isize
        } else {
            i as isize - self.len as isize
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        if self.wrapped {
            self.start + self.signed_bin(i) as f64 * self.step
        } else {
            self.start + i as f64 * self.step
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.coord(i)).collect()
    }

    pub fn min_coord(&self) -> f64 {
        self.coords().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn max_coord(&self) -> f64 {
        self.coords().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn same_grid(&self, other: &Axis) -> bool {
        let tol = 1e-9 * self.step.abs().max(other.step.abs()).max(1e-300);
        self.len == other.len
            && self.wrapped == other.wrapped
            && (self.start - other.start).abs() <= tol * self.len.max(1) as f64
            && (self.step - other.step).abs() <= tol
    }
}

/// Complex samples on labelled axes, row-major (last axis fastest),
/// with an optional per-sample validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTensor {
    axes: Vec<Axis>,
    data: Vec<Complex64>,
    mask: Option<Vec<bool>>,
}

impl SpectrumTensor {
    pub fn new(axes: Vec<Axis>, data: Vec<Complex64>) -> Result<Self> {
        let n: usize = axes.iter().map(|a| a.len).product();
        if n != data.len() {
            return Err(Error::axis(format!(
                "data has {} samples but axes require {n}",
                data.len()
            )));
        }
        for (i, a) in axes.iter().enumerate() {
            if axes[..i].iter().any(|b| b.label == a.label) {
                return Err(Error::axis(format!("duplicate axis {}", a.label)));
            }
            if a.len > 1 && !(a.step > 0.0) {
                return Err(Error::axis(format!("axis {} must have a positive step", a.label)));
            }
        }
        Ok(SpectrumTensor { axes, data, mask: None })
    }

    pub fn zeros(axes: Vec<Axis>) -> Result<Self> {
        let n = axes.iter().map(|a| a.len).product();
        SpectrumTensor::new(axes, vec![ZERO; n])
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.data.len() {
            return Err(Error::axis("mask length differs from data length"));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.len).collect()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn is_valid(&self, flat: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[flat])
    }

    pub fn has_axis(&self, label: AxisLabel) -> bool {
        self.axes.iter().any(|a| a.label == label)
    }

    pub fn axis_pos(&self, label: AxisLabel) -> Result<usize> {
        self.axes
            .iter()
            .position(|a| a.label == label)
            .ok_or_else(|| Error::axis(format!("unknown axis {label}")))
    }

    pub fn axis(&self, label: AxisLabel) -> Result<&Axis> {
        Ok(&self.axes[self.axis_pos(label)?])
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape())
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    pub fn get(&self, idx: &[usize]) -> Complex64 {
        self.data[self.flat_index(idx)]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Origin used by the next inverse transform of a wrapped axis.
    pub fn set_dual_origin(&mut self, label: AxisLabel, origin: f64) -> Result<()> {
        let p = self.axis_pos(label)?;
        self.axes[p].dual_origin = origin;
        Ok(())
    }

    pub fn relabel(&mut self, from: AxisLabel, to: AxisLabel) -> Result<()> {
        if from != to && self.has_axis(to) {
            return Err(Error::axis(format!("axis {to} already present")));
        }
        let p = self.axis_pos(from)?;
        self.axes[p].label = to;
        Ok(())
    }

    /// Fixes the listed axes at one index each; they remain as length-1 axes.
    pub fn select(&self, picks: &[(AxisLabel, usize)]) -> Result<SpectrumTensor> {
        let mut axes = self.axes.clone();
        let mut ranges: Vec<(usize, usize)> = self.axes.iter().map(|a| (0, a.len)).collect();
        for &(label, i) in picks {
            let p = self.axis_pos(label)?;
            let a = &self.axes[p];
            if i >= a.len {
                return Err(Error::IndexOutOfRange {
                    what: label.name(),
                    index: i,
                    len: a.len,
                });
            }
            let c = a.coord(i);
            axes[p] = Axis {
                start: c,
                len: 1,
                wrapped: false,
                ..a.clone()
            };
            ranges[p] = (i, 1);
        }
        let shape = self.shape();
        let strides = self.strides();
        let out_shape: Vec<usize> = ranges.iter().map(|r| r.1).collect();
        let n: usize = out_shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut mask = self.mask.as_ref().map(|_| Vec::with_capacity(n));
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..n {
            let flat: usize = idx
                .iter()
                .zip(&ranges)
                .zip(&strides)
                .map(|((i, r), s)| (i + r.0) * s)
                .sum();
            data.push(self.data[flat]);
            if let (Some(m), Some(src)) = (mask.as_mut(), self.mask.as_ref()) {
                m.push(src[flat]);
            }
            increment(&mut idx, &out_shape);
        }
        Ok(SpectrumTensor { axes, data, mask })
    }
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Odometer increment, last index fastest.
pub(crate) fn increment(idx: &mut [usize], shape: &[usize]) {
    for d in (0..idx.len()).rev() {
        idx[d] += 1;
        if idx[d] < shape[d] {
            return;
        }
        idx[d] = 0;
    }
}

/// (outer, len, inner) decomposition of the shape around axis `p`.
fn lane_dims(shape: &[usize], p: usize) -> (usize, usize, usize) {
    let outer = shape[..p].iter().product();
    let inner = shape[p + 1..].iter().product();
    (outer, shape[p], inner)
}

/// Transforms along one axis and relabels it to its Fourier dual.
pub fn dft_axis(t: &SpectrumTensor, label: AxisLabel, dir: Direction) -> Result<SpectrumTensor> {
    let p = t.axis_pos(label)?;
    let ax = &t.axes[p];
    let dual = label
        .dual()
        .ok_or_else(|| Error::axis(format!("axis {label} has no Fourier dual")))?;
    match dir {
        Direction::Forward if !label.is_sample_domain() => {
            return Err(Error::axis(format!("axis {label} is already a wavenumber axis")))
        }
        Direction::Inverse if label.is_sample_domain() => {
            return Err(Error::axis(format!("axis {label} is not a wavenumber axis")))
        }
        Direction::Inverse if !ax.wrapped => {
            return Err(Error::axis(format!("axis {label} is not in transform order")))
        }
        Direction::Forward if ax.wrapped => {
            return Err(Error::axis(format!("axis {label} is in transform order")))
        }
        _ => {}
    }
    if !(ax.step > 0.0) || ax.len == 0 {
        return Err(Error::axis(format!("axis {label} is not uniformly sampled")));
    }
    let n = ax.len;
    let new_step = 2.0 * PI / (n as f64 * ax.step);
    let new_axis = match dir {
        Direction::Forward => Axis {
            label: dual,
            start: 0.0,
            step: new_step,
            len: n,
            wrapped: true,
            dual_origin: ax.start,
            padding: 0,
        },
        Direction::Inverse => Axis::uniform(dual, ax.dual_origin, new_step, n),
    };
    // Per-bin phase for the origin shift, skipped when the origin is zero.
    let origin = match dir {
        Direction::Forward => ax.start,
        Direction::Inverse => ax.dual_origin,
    };
    let phase: Option<Vec<Complex64>> = (origin != 0.0).then(|| {
        let spectral = if dir == Direction::Forward { &new_axis } else { ax };
        let sign = if dir == Direction::Forward { -1.0 } else { 1.0 };
        (0..n)
            .map(|m| Complex64::from_polar(1.0, sign * spectral.coord(m) * origin))
            .collect()
    });

    let mut planner = FftPlanner::<f64>::new();
    let fft = match dir {
        Direction::Forward => planner.plan_fft_forward(n),
        Direction::Inverse => planner.plan_fft_inverse(n),
    };
    let scale = if dir == Direction::Inverse { 1.0 / n as f64 } else { 1.0 };
    let (_, len, inner) = lane_dims(&t.shape(), p);
    let mut data = t.data.clone();
    if !data.is_empty() {
        data.par_chunks_mut(len * inner).for_each(|block| {
            let mut lane = vec![ZERO; len];
            let mut scratch = vec![ZERO; fft.get_inplace_scratch_len()];
            for i in 0..inner {
                for (m, v) in lane.iter_mut().enumerate() {
                    *v = block[m * inner + i];
                }
                if dir == Direction::Inverse {
                    if let Some(ph) = &phase {
                        lane.iter_mut().zip(ph).for_each(|(v, p)| *v *= p);
                    }
                }
                fft.process_with_scratch(&mut lane, &mut scratch);
                if dir == Direction::Forward {
                    if let Some(ph) = &phase {
                        lane.iter_mut().zip(ph).for_each(|(v, p)| *v *= p);
                    }
                }
                for (m, v) in lane.iter().enumerate() {
                    block[m * inner + i] = if scale == 1.0 { *v } else { v * scale };
                }
            }
        });
    }
    let mut axes = t.axes.clone();
    axes[p] = new_axis;
    Ok(SpectrumTensor { axes, data, mask: None })
}

/// Inserts P-1 zeros after every sample along `label`.
pub fn zero_fill(t: &SpectrumTensor, label: AxisLabel, factor_p: usize) -> Result<SpectrumTensor> {
    if factor_p < 1 {
        return Err(Error::invalid("zero-fill factor must be at least 1"));
    }
    let p = t.axis_pos(label)?;
    if t.axes[p].wrapped {
        return Err(Error::axis(format!("cannot zero-fill transform-order axis {label}")));
    }
    if factor_p == 1 {
        return Ok(t.clone());
    }
    let (outer, len, inner) = lane_dims(&t.shape(), p);
    let new_len = len * factor_p;
    let mut data = vec![ZERO; outer * new_len * inner];
    let mut mask = t.mask.as_ref().map(|_| vec![true; data.len()]);
    for o in 0..outer {
        for n in 0..len {
            let src = (o * len + n) * inner;
            let dst = (o * new_len + n * factor_p) * inner;
            data[dst..dst + inner].copy_from_slice(&t.data[src..src + inner]);
            if let (Some(m), Some(sm)) = (mask.as_mut(), t.mask.as_ref()) {
                m[dst..dst + inner].copy_from_slice(&sm[src..src + inner]);
            }
        }
    }
    let mut axes = t.axes.clone();
    axes[p].len = new_len;
    axes[p].step /= factor_p as f64;
    Ok(SpectrumTensor { axes, data, mask })
}

/// Appends trailing zeros along `label` up to `new_len` samples.
pub fn pad_axis(t: &SpectrumTensor, label: AxisLabel, new_len: usize) -> Result<SpectrumTensor> {
    let p = t.axis_pos(label)?;
    if t.axes[p].wrapped {
        return Err(Error::axis(format!("cannot pad transform-order axis {label}")));
    }
    let (outer, len, inner) = lane_dims(&t.shape(), p);
    if new_len < len {
        return Err(Error::invalid(format!("cannot pad axis {label} from {len} down to {new_len}")));
    }
    let mut data = vec![ZERO; outer * new_len * inner];
    let mut mask = t.mask.as_ref().map(|_| vec![true; data.len()]);
    for o in 0..outer {
        let src = o * len * inner;
        let dst = o * new_len * inner;
        data[dst..dst + len * inner].copy_from_slice(&t.data[src..src + len * inner]);
        if let (Some(m), Some(sm)) = (mask.as_mut(), t.mask.as_ref()) {
            m[dst..dst + len * inner].copy_from_slice(&sm[src..src + len * inner]);
        }
    }
    let mut axes = t.axes.clone();
    axes[p].padding += new_len - len;
    axes[p].len = new_len;
    Ok(SpectrumTensor { axes, data, mask })
}

/// Reorders a transform-order axis into increasing coordinates.
pub fn center_axis(t: &SpectrumTensor, label: AxisLabel) -> Result<SpectrumTensor> {
    let p = t.axis_pos(label)?;
    let ax = &t.axes[p];
    if !ax.wrapped {
        return Ok(t.clone());
    }
    let (outer, len, inner) = lane_dims(&t.shape(), p);
    let neg = len / 2; // bins with negative coordinates
    let order: Vec<usize> = (len - neg..len).chain(0..len - neg).collect();
    let mut data = vec![ZERO; t.data.len()];
    let mut mask = t.mask.clone();
    for o in 0..outer {
        for (dst_i, &src_i) in order.iter().enumerate() {
            let src = (o * len + src_i) * inner;
            let dst = (o * len + dst_i) * inner;
            data[dst..dst + inner].copy_from_slice(&t.data[src..src + inner]);
            if let (Some(m), Some(sm)) = (mask.as_mut(), t.mask.as_ref()) {
                m[dst..dst + inner].copy_from_slice(&sm[src..src + inner]);
            }
        }
    }
    let mut axes = t.axes.clone();
    axes[p].start = ax.coord(order[0]);
    axes[p].wrapped = false;
    Ok(SpectrumTensor { axes, data, mask })
}

/// exp(j·sqrt(a² - ξ²))·exp(-jπξ/2) with a = k_ρR0; exactly 0 once ξ² ≥ a².
pub fn hankel_factor(xi: f64, k_rho: f64, r0: f64) -> Complex64 {
    let a = k_rho * r0;
    if xi * xi < a * a {
        Complex64::from_polar(1.0, (a * a - xi * xi).sqrt()) * Complex64::from_polar(1.0, -PI * xi / 2.0)
    } else {
        ZERO
    }
}

/// k_z half-extent of the target spectrum for aperture L and target extent D.
pub fn support_bound_kz(r0: f64, l: f64, d: f64, k: f64) -> f64 {
    let h = (l + d) / 2.0;
    if h <= 0.0 {
        return 0.0;
    }
    k * h / (r0 * r0 + h * h).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Taper {
    Rectangular,
    /// Cosine roll-off over `rolloff` of the band width at each edge.
    RaisedCosine { rolloff: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub axis: AxisLabel,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralWindow {
    bands: Vec<Band>,
    taper: Taper,
}

impl SpectralWindow {
    pub fn new(bands: Vec<Band>, taper: Taper) -> Result<Self> {
        for b in &bands {
            if !(b.lo < b.hi) {
                return Err(Error::invalid(format!("window band on {} needs lo < hi", b.axis)));
            }
        }
        if let Taper::RaisedCosine { rolloff } = taper {
            if !(0.0..=0.5).contains(&rolloff) {
                return Err(Error::invalid(format!("roll-off fraction {rolloff} outside [0, 0.5]")));
            }
        }
        Ok(SpectralWindow { bands, taper })
    }

    pub fn rectangular(axis: AxisLabel, lo: f64, hi: f64) -> Result<Self> {
        SpectralWindow::new(vec![Band { axis, lo, hi }], Taper::Rectangular)
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn taper(&self) -> Taper {
        self.taper
    }

    fn weight(&self, b: &Band, x: f64) -> f64 {
        if x < b.lo || x > b.hi {
            return 0.0;
        }
        match self.taper {
            Taper::Rectangular => 1.0,
            Taper::RaisedCosine { rolloff } => {
                let ramp = rolloff * (b.hi - b.lo);
                let e = (x - b.lo).min(b.hi - x);
                if ramp <= 0.0 || e >= ramp {
                    1.0
                } else {
                    0.5 * (1.0 - (PI * e / ramp).cos())
                }
            }
        }
    }
}

/// Multiplies by the window; samples outside every pass band become 0.
pub fn apply_window(t: &SpectrumTensor, w: &SpectralWindow) -> Result<SpectrumTensor> {
    let mut out = t.clone();
    let shape = t.shape();
    for b in &w.bands {
        let p = t.axis_pos(b.axis)?;
        let ax = &t.axes[p];
        if b.hi < ax.min_coord() || b.lo > ax.max_coord() {
            return Err(Error::invalid(format!(
                "window band [{}, {}] does not overlap axis {} range [{}, {}]",
                b.lo,
                b.hi,
                b.axis,
                ax.min_coord(),
                ax.max_coord()
            )));
        }
        let weights: Vec<f64> = (0..ax.len).map(|i| w.weight(b, ax.coord(i))).collect();
        let (outer, len, inner) = lane_dims(&shape, p);
        for o in 0..outer {
            for (i, &wt) in weights.iter().enumerate() {
                if wt == 1.0 {
                    continue;
                }
                let s = (o * len + i) * inner;
                for v in &mut out.data[s..s + inner] {
                    *v = if wt == 0.0 { ZERO } else { *v * wt };
                }
            }
        }
    }
    Ok(out)
}

/// Cartesian output grid for one side's polar resampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianGrid {
    pub kx: UniformGrid,
    pub ky: UniformGrid,
}

/// Labels (radial, angle, k_z, k_x out, k_y out) used by one side.
fn polar_labels(t: &SpectrumTensor, side: Side) -> Result<(AxisLabel, AxisLabel, AxisLabel, AxisLabel, AxisLabel)> {
    let (rho, kk, theta, kz, kx, ky) = match side {
        Side::Tx => (AxisLabel::KrhoT, AxisLabel::KT, AxisLabel::ThetaT, AxisLabel::KzT, AxisLabel::KxT, AxisLabel::KyT),
        Side::Rx => (AxisLabel::KrhoR, AxisLabel::KR, AxisLabel::ThetaR, AxisLabel::KzR, AxisLabel::KxR, AxisLabel::KyR),
    };
    let radial = if t.has_axis(rho) {
        rho
    } else if t.has_axis(kk) {
        kk
    } else {
        return Err(Error::axis(format!("no {rho} or {kk} axis for {side} interpolation")));
    };
    Ok((radial, theta, kz, kx, ky))
}

/// Bilinear source taps of one output cell: (radial index, angle index, weight).
pub(crate) type CellTaps = (usize, [(usize, usize, f64); 4]);

pub(crate) fn cell_taps(grid: &CartesianGrid, radial: &Axis, angle: &Axis, kz: f64, half_k: bool) -> Vec<CellTaps> {
    let mut out = Vec::new();
    let nr = radial.len;
    let na = angle.len;
    let tol = 1e-9;
    for ix in 0..grid.kx.len {
        let kx = grid.kx.coord(ix);
        for iy in 0..grid.ky.len {
            let ky = grid.ky.coord(iy);
            let k_rho = kx.hypot(ky);
            let r = if half_k { 0.5 * (k_rho * k_rho + kz * kz).sqrt() } else { k_rho };
            // Wavevector angle: k_x = -k_ρ sin θ, k_y = k_ρ cos θ.
            let th = (-kx).atan2(ky);
            let fr = if nr > 1 { (r - radial.start) / radial.step } else { 0.0 };
            let ft = if na > 1 { (th - angle.start) / angle.step } else { 0.0 };
            let in_r = if nr > 1 { fr >= -tol && fr <= (nr - 1) as f64 + tol } else { (r - radial.start).abs() <= tol * r.abs().max(1.0) };
            let in_t = if na > 1 { ft >= -tol && ft <= (na - 1) as f64 + tol } else { (th - angle.start).abs() <= tol };
            if !(in_r && in_t) {
                continue;
            }
            let (r0, wr) = split(fr, nr);
            let (t0, wt) = split(ft, na);
            let r1 = (r0 + 1).min(nr - 1);
            let t1 = (t0 + 1).min(na - 1);
            out.push((
                ix * grid.ky.len + iy,
                [
                    (r0, t0, (1.0 - wr) * (1.0 - wt)),
                    (r0, t1, (1.0 - wr) * wt),
                    (r1, t0, wr * (1.0 - wt)),
                    (r1, t1, wr * wt),
                ],
            ));
        }
    }
    out
}

fn split(f: f64, n: usize) -> (usize, f64) {
    if n < 2 {
        return (0, 0.0);
    }
    let f = f.clamp(0.0, (n - 1) as f64);
    let i = (f.floor() as usize).min(n - 2);
    (i, f - i as f64)
}

/// Resamples one side's (radial, θ) axes onto a Cartesian (k_x, k_y) grid.
///
/// The radial axis is k_ρ, or k_T/k_R, in which case the polar preimage uses
/// k = ½·sqrt(k_ρ² + k_z²) with k_z taken from the same side's k_z axis.
/// Taps landing on masked source samples are dropped and the remaining
/// weights renormalised. Cells outside the sampled polar region are 0 and
/// flagged invalid in the output mask.
pub fn interp_polar_to_cartesian(t: &SpectrumTensor, side: Side, grid: &CartesianGrid) -> Result<SpectrumTensor> {
    let (radial_l, theta_l, kz_l, kx_l, ky_l) = polar_labels(t, side)?;
    let pr = t.axis_pos(radial_l)?;
    let pa = t.axis_pos(theta_l)?;
    let radial = t.axes[pr].clone();
    let angle = t.axes[pa].clone();
    if radial.wrapped || angle.wrapped {
        return Err(Error::axis("polar axes must be in increasing order"));
    }
    let half_k = matches!(radial_l, AxisLabel::KT | AxisLabel::KR);
    let pz = if half_k { t.axis_pos(kz_l).ok() } else { None };

    let shape = t.shape();
    let strides = t.strides();
    let mut out_axes = t.axes.clone();
    out_axes[pr] = Axis::from_grid(kx_l, &grid.kx);
    out_axes[pa] = Axis::from_grid(ky_l, &grid.ky);
    let out_shape: Vec<usize> = out_axes.iter().map(|a| a.len).collect();
    let out_strides = strides_of(&out_shape);
    let n_out: usize = out_shape.iter().product();
    let mut data = vec![ZERO; n_out];
    let mut valid = vec![false; n_out];

    // Taps per k_z index (only one entry when k_z plays no role).
    let kz_axis = pz.map(|p| t.axes[p].clone());
    let n_kz = kz_axis.as_ref().map_or(1, |a| a.len);
    let taps: Vec<Vec<CellTaps>> = (0..n_kz)
        .map(|i| {
            let kz = kz_axis.as_ref().map_or(0.0, |a| a.coord(i));
            cell_taps(grid, &radial, &angle, kz, half_k)
        })
        .collect();
    if taps.iter().all(|v| v.is_empty()) {
        return Err(Error::invalid(format!(
            "Cartesian grid does not overlap the {side} polar support"
        )));
    }

    // Iterate over every index combination of the remaining axes.
    let others: Vec<usize> = (0..shape.len()).filter(|&d| d != pr && d != pa).collect();
    let other_shape: Vec<usize> = others.iter().map(|&d| shape[d]).collect();
    let n_other: usize = other_shape.iter().product();
    let mut oidx = vec![0usize; others.len()];
    let ny = grid.ky.len;
    for _ in 0..n_other {
        let mut src_base = 0;
        let mut dst_base = 0;
        let mut kz_i = 0;
        for (j, &d) in others.iter().enumerate() {
            src_base += oidx[j] * strides[d];
            dst_base += oidx[j] * out_strides[d];
            if Some(d) == pz {
                kz_i = oidx[j];
            }
        }
        for (cell, tp) in &taps[kz_i] {
            let (ix, iy) = (cell / ny, cell % ny);
            let mut acc = ZERO;
            let mut wsum = 0.0;
            let mut dropped = false;
            for &(ri, ai, w) in tp {
                let s = src_base + ri * strides[pr] + ai * strides[pa];
                if t.is_valid(s) {
                    acc += t.data[s] * w;
                    wsum += w;
                } else if w > 0.0 {
                    dropped = true;
                }
            }
            let dst = dst_base + ix * out_strides[pr] + iy * out_strides[pa];
            if !dropped {
                data[dst] = acc;
                valid[dst] = true;
            } else if wsum > 1e-12 {
                data[dst] = acc / wsum;
                valid[dst] = true;
            }
        }
        increment(&mut oidx, &other_shape);
    }
    Ok(SpectrumTensor {
        axes: out_axes,
        data,
        mask: Some(valid),
    })
}

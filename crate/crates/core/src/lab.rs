//! One-dimensional linear-array studies: near-field beam patterns by
//! backprojection or by the 1-D wavenumber-domain method, sampling and
//! grating-lobe calculators, resolution formulas and pattern metrics.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{UniformGrid, C0};
use crate::spectral::{dft_axis, pad_axis, support_bound_kz, zero_fill, Axis, AxisLabel, Direction, SpectrumTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayRole {
    Tx,
    Rx,
    /// Co-located transmit and receive: two-way phase per element.
    Monostatic,
}

impl fmt::Display for ArrayRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArrayRole::Tx => "tx",
            ArrayRole::Rx => "rx",
            ArrayRole::Monostatic => "monostatic",
        })
    }
}

impl std::str::FromStr for ArrayRole {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tx" => Ok(ArrayRole::Tx),
            "rx" => Ok(ArrayRole::Rx),
            "monostatic" | "mono" => Ok(ArrayRole::Monostatic),
            other => Err(Error::invalid(format!("unknown array role '{other}'"))),
        }
    }
}

/// Uniform linear array along z, observed at broadside distance `r0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearArraySpec {
    length: f64,
    spacing: f64,
    role: ArrayRole,
    r0: f64,
    freq_hz: f64,
}

impl LinearArraySpec {
    pub fn new(length: f64, spacing: f64, role: ArrayRole, r0: f64, freq_hz: f64) -> Result<Self> {
        for (name, v) in [("length", length), ("spacing", spacing), ("distance", r0), ("frequency", freq_hz)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("array {name} must be positive, got {v}")));
            }
        }
        let n = length / spacing;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::invalid(format!(
                "spacing {spacing} m does not divide length {length} m into whole intervals"
            )));
        }
        Ok(LinearArraySpec {
            length,
            spacing,
            role,
            r0,
            freq_hz,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn role(&self) -> ArrayRole {
        self.role
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn freq_hz(&self) -> f64 {
        self.freq_hz
    }

    pub fn wavelength(&self) -> f64 {
        C0 / self.freq_hz
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength()
    }

    /// Element heights -L/2 + nΔz for n = 0..=L/Δz (both ends populated).
    pub fn elements(&self) -> Vec<f64> {
        let n = (self.length / self.spacing).round() as usize;
        (0..=n).map(|i| -self.length / 2.0 + i as f64 * self.spacing).collect()
    }

    fn phase_factor(&self) -> f64 {
        match self.role {
            ArrayRole::Monostatic => 2.0,
            _ => 1.0,
        }
    }

    /// Effective propagation wavenumber of one element's measurement.
    fn k_eff(&self) -> f64 {
        self.phase_factor() * self.wavenumber()
    }

    /// Samples received from a unit point target at (R0, z = 0).
    pub fn point_echo(&self) -> Vec<Complex64> {
        let k = self.k_eff();
        self.elements()
            .iter()
            .map(|z| Complex64::from_polar(1.0, -k * (self.r0 * self.r0 + z * z).sqrt()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternMethod {
    Bp,
    Rma,
}

impl fmt::Display for PatternMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternMethod::Bp => "bp",
            PatternMethod::Rma => "rma",
        })
    }
}

impl std::str::FromStr for PatternMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bp" => Ok(PatternMethod::Bp),
            "rma" => Ok(PatternMethod::Rma),
            other => Err(Error::invalid(format!("unknown pattern method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PatternOptions {
    /// Zero-fill the sparser aperture onto the denser spacing (or `reference_spacing`).
    pub zero_fill: bool,
    pub spectrum_filter: bool,
    /// Dense spacing for zero-filling a lone array.
    pub reference_spacing: Option<f64>,
}

/// Peak-normalised magnitude profile over cross-range z.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPatternResult {
    pub coords: UniformGrid,
    pub magnitude: Vec<f64>,
    pub method: String,
}

impl BeamPatternResult {
    pub fn new(coords: UniformGrid, magnitude: Vec<f64>, method: String) -> Result<Self> {
        if magnitude.len() != coords.len {
            return Err(Error::axis("profile length differs from its coordinate grid"));
        }
        let peak = magnitude.iter().cloned().fold(0.0, f64::max);
        if !(peak > 0.0 && peak.is_finite()) {
            return Err(Error::numeric("beam pattern has no finite positive peak"));
        }
        Ok(BeamPatternResult {
            coords,
            magnitude: magnitude.iter().map(|m| m / peak).collect(),
            method,
        })
    }

    pub fn db(&self) -> Vec<f64> {
        self.magnitude.iter().map(|m| 20.0 * m.log10()).collect()
    }

    /// Elementwise product of two patterns on the same grid.
    pub fn product(&self, other: &BeamPatternResult) -> Result<BeamPatternResult> {
        if self.coords != other.coords {
            return Err(Error::axis("beam patterns are on different grids"));
        }
        let m = self.magnitude.iter().zip(&other.magnitude).map(|(a, b)| a * b).collect();
        BeamPatternResult::new(self.coords, m, format!("{}x{}", self.method, other.method))
    }
}

/// Cross-range grid over ±L with λ0/20 spacing.
pub fn default_profile_grid(spec: &LinearArraySpec) -> Result<UniformGrid> {
    let step = spec.wavelength() / 20.0;
    let half = (spec.length() / step).ceil() as usize;
    UniformGrid::centered(0.0, step, 2 * half + 1)
}

fn bp_one_way(spec: &LinearArraySpec, zout: &UniformGrid) -> Vec<Complex64> {
    let s = spec.point_echo();
    let zs = spec.elements();
    let k = spec.k_eff();
    let r0 = spec.r0();
    (0..zout.len)
        .into_par_iter()
        .map(|i| {
            let z = zout.coord(i);
            zs.iter()
                .zip(&s)
                .map(|(zn, sn)| sn * Complex64::from_polar(1.0, k * (r0 * r0 + (zn - z) * (zn - z)).sqrt()))
                .sum()
        })
        .collect()
}

/// Spatial DFT, matched focus at R0, optional support window, inverse DTFT onto `zout`.
fn rma_one_way(spec: &LinearArraySpec, zout: &UniformGrid, p: usize, filter: bool) -> Result<Vec<Complex64>> {
    let zs = spec.elements();
    let t = SpectrumTensor::new(vec![Axis::uniform(AxisLabel::ZT, zs[0], spec.spacing(), zs.len())], spec.point_echo())?;
    let t = zero_fill(&t, AxisLabel::ZT, p)?;
    let d = spec.spacing() / p as f64;
    // Pad so the image period comfortably exceeds the evaluated cross-range span.
    let span = 8.0f64.max(2.0 * (zout.extent() + spec.length()));
    let mut n = t.axis(AxisLabel::ZT)?.len.next_power_of_two();
    while (n as f64) * d < span {
        n *= 2;
    }
    let t = pad_axis(&t, AxisLabel::ZT, n)?;
    let s = dft_axis(&t, AxisLabel::ZT, Direction::Forward)?;
    let kz_axis = s.axes()[0].clone();
    let kk = spec.k_eff();
    let bound = support_bound_kz(spec.r0(), spec.length(), 0.0, kk);
    let mut bins = Vec::new();
    for (i, v) in s.data().iter().enumerate() {
        let kz = kz_axis.coord(i);
        if kz.abs() >= kk || (filter && kz.abs() > bound) {
            continue;
        }
        let h = Complex64::from_polar(1.0, (kk * kk - kz * kz).sqrt() * spec.r0());
        bins.push((kz, v * h));
    }
    let norm = 1.0 / n as f64;
    Ok((0..zout.len)
        .into_par_iter()
        .map(|i| {
            let z = zout.coord(i);
            bins.iter().map(|(kz, v)| v * Complex64::from_polar(norm, kz * z)).sum()
        })
        .collect())
}

fn zero_fill_factor(sparse: f64, dense: f64) -> Result<usize> {
    let r = sparse / dense;
    let p = r.round();
    if p < 1.0 || (r - p).abs() > 1e-6 * p {
        return Err(Error::invalid(format!(
            "zero filling needs an integer spacing ratio, got {sparse}/{dense} = {r}"
        )));
    }
    Ok(p as usize)
}

fn one_way(spec: &LinearArraySpec, method: PatternMethod, p: usize, filter: bool, zout: &UniformGrid) -> Result<Vec<f64>> {
    let v = match method {
        PatternMethod::Bp => bp_one_way(spec, zout),
        PatternMethod::Rma => rma_one_way(spec, zout, p, filter)?,
    };
    Ok(v.iter().map(|c| c.norm()).collect())
}

/// One-way pattern of one array, or the two-way product of a transmit/receive pair.
pub fn beam_pattern(
    specs: &[LinearArraySpec],
    method: PatternMethod,
    opts: PatternOptions,
    zout: &UniformGrid,
) -> Result<BeamPatternResult> {
    let tag = format!(
        "{method}{}{}",
        if opts.zero_fill { "+zf" } else { "" },
        if opts.spectrum_filter { "+filter" } else { "" }
    );
    match specs {
        [one] => {
            let p = match (opts.zero_fill, opts.reference_spacing) {
                (false, _) => 1,
                (true, Some(d)) => zero_fill_factor(one.spacing(), d)?,
                (true, None) => return Err(Error::invalid("zero filling a single array needs a reference spacing")),
            };
            BeamPatternResult::new(*zout, one_way(one, method, p, opts.spectrum_filter, zout)?, tag)
        }
        [a, b] => {
            let dense = a.spacing().min(b.spacing());
            let pa = if opts.zero_fill { zero_fill_factor(a.spacing(), dense)? } else { 1 };
            let pb = if opts.zero_fill { zero_fill_factor(b.spacing(), dense)? } else { 1 };
            let ma = one_way(a, method, pa, opts.spectrum_filter, zout)?;
            let mb = one_way(b, method, pb, opts.spectrum_filter, zout)?;
            let m = ma.iter().zip(&mb).map(|(x, y)| x * y).collect();
            BeamPatternResult::new(*zout, m, format!("{tag}:two-way"))
        }
        _ => Err(Error::invalid("beam_pattern takes one array or a transmit/receive pair")),
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {v}")))
    }
}

/// Element spacing placing the first grating lobe at offset D (exact near-field form).
pub fn grating_lobe_spacing(lambda0: f64, r0: f64, l: f64, d: f64) -> Result<f64> {
    positive("wavelength", lambda0)?;
    positive("distance", r0)?;
    positive("array length", l)?;
    if d == 0.0 {
        return Err(Error::invalid("target offset D = 0 gives no grating lobe"));
    }
    if !(d > 0.0 && d <= l) {
        return Err(Error::invalid(format!("offset D must lie in (0, L], got {d}")));
    }
    let s = |u: f64| u / (r0 * r0 + u * u).sqrt();
    let diff = s(l / 2.0) - s(l / 2.0 - d);
    Ok(lambda0 / diff)
}

/// Far-field form λ0·R0/D.
pub fn grating_lobe_spacing_approx(lambda0: f64, r0: f64, d: f64) -> Result<f64> {
    positive("wavelength", lambda0)?;
    positive("distance", r0)?;
    positive("offset D", d)?;
    Ok(lambda0 * r0 / d)
}

/// Largest spacing free of spectral aliasing for aperture L and target extent D.
pub fn nyquist_spacing(lambda0: f64, r0: f64, l: f64, d: f64) -> Result<f64> {
    positive("wavelength", lambda0)?;
    let w = l + d;
    if !(w > 0.0) {
        return Err(Error::invalid("L + D must be positive"));
    }
    Ok(lambda0 * (r0 * r0 + w * w / 4.0).sqrt() / w)
}

/// Largest angular element interval for target extent D (rad).
pub fn angular_sampling_bound(lambda0: f64, d: f64) -> Result<f64> {
    positive("wavelength", lambda0)?;
    positive("target extent", d)?;
    Ok(lambda0 / d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolutionSet {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

pub fn resolution_formulas(lambda_c: f64, theta_h: f64, theta_z: f64, bandwidth: f64) -> Result<ResolutionSet> {
    positive("wavelength", lambda_c)?;
    positive("bandwidth", bandwidth)?;
    for (n, a) in [("horizontal angle", theta_h), ("vertical angle", theta_z)] {
        if !(a > 0.0 && a <= PI) {
            return Err(Error::invalid(format!("{n} must lie in (0, π], got {a}")));
        }
    }
    Ok(ResolutionSet {
        dx: lambda_c / (4.0 * (theta_h / 2.0).sin()),
        dz: lambda_c / (4.0 * (theta_z / 2.0).sin()),
        dy: C0 / (2.0 * bandwidth),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityMetrics {
    /// Full width at 1/√2 of the peak (m).
    pub resolution: f64,
    /// Strongest sidelobe relative to the peak (dB); `None` when no sidelobe exists.
    pub pslr: Option<f64>,
    pub grating_lobe_offset: Option<f64>,
}

/// Level (relative to the peak) above which a secondary lobe counts as a grating lobe.
pub const GRATING_LOBE_THRESHOLD_DB: f64 = -15.0;

fn peak_index(a: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in a.iter().enumerate() {
        if *v > a[best] {
            best = i;
        }
    }
    best
}

/// Indices of the first local minima on each side of `i`.
fn mainlobe_bounds(a: &[f64], i: usize) -> (usize, usize) {
    let mut r = i;
    while r + 1 < a.len() && a[r + 1] <= a[r] {
        r += 1;
    }
    let mut l = i;
    while l > 0 && a[l - 1] <= a[l] {
        l -= 1;
    }
    (l, r)
}

fn local_maxima(a: &[f64]) -> impl Iterator<Item = usize> + '_ {
    (1..a.len().saturating_sub(1)).filter(move |&q| a[q] >= a[q - 1] && a[q] >= a[q + 1])
}

/// Resolution, PSLR and grating-lobe offset of a profile.
pub fn measure_metrics(p: &BeamPatternResult) -> Result<QualityMetrics> {
    measure_metrics_within(p, None)
}

/// As [`measure_metrics`], with sidelobes for the PSLR restricted to
/// |z - z_peak| < `half_window`.
pub fn measure_metrics_within(p: &BeamPatternResult, half_window: Option<f64>) -> Result<QualityMetrics> {
    let a = &p.magnitude;
    let n = a.len();
    let i = peak_index(a);
    let peak = a[i];
    if !(peak > 0.0) {
        return Err(Error::numeric("profile has no positive peak"));
    }
    let a: Vec<f64> = a.iter().map(|v| v / peak).collect();
    let x = |q: usize| p.coords.coord(q);
    let t = std::f64::consts::FRAC_1_SQRT_2;
    if n < 3 || i == 0 || i == n - 1 {
        if n == 1 {
            return Ok(QualityMetrics {
                resolution: f64::NAN,
                pslr: None,
                grating_lobe_offset: None,
            });
        }
        return Err(Error::numeric("profile peak lies on the boundary"));
    }

    let mut j = i;
    while j < n && a[j] >= t {
        j += 1;
    }
    if j == n {
        return Err(Error::numeric("profile never falls below -3 dB to the right of the peak"));
    }
    let xr = x(j - 1) + (a[j - 1] - t) / (a[j - 1] - a[j]) * (x(j) - x(j - 1));
    let mut j = i as isize;
    while j >= 0 && a[j as usize] >= t {
        j -= 1;
    }
    if j < 0 {
        return Err(Error::numeric("profile never falls below -3 dB to the left of the peak"));
    }
    let j = j as usize;
    let xl = x(j + 1) - (a[j + 1] - t) / (a[j + 1] - a[j]) * (x(j + 1) - x(j));

    let (l, r) = mainlobe_bounds(&a, i);
    let outside = |q: usize| q < l || q > r;
    let pslr = local_maxima(&a)
        .filter(|&q| outside(q))
        .filter(|&q| half_window.is_none_or(|w| (x(q) - x(i)).abs() < w))
        .map(|q| a[q])
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
        .map(|v| 20.0 * v.log10());
    let thr = 10f64.powf(GRATING_LOBE_THRESHOLD_DB / 20.0);
    let grating_lobe_offset = local_maxima(&a)
        .filter(|&q| outside(q) && a[q] > thr)
        .max_by(|&u, &v| a[u].total_cmp(&a[v]))
        .map(|q| (x(q) - x(i)).abs());
    Ok(QualityMetrics {
        resolution: xr - xl,
        pslr,
        grating_lobe_offset,
    })
}

/// Peak level (dB re. the two-way peak) of `two_way` inside each grating lobe of `one_way`.
///
/// A lobe's region spans the local minima of `one_way` flanking it.
pub fn two_way_grating_lobe_levels(one_way: &BeamPatternResult, two_way: &BeamPatternResult) -> Result<Vec<(f64, f64)>> {
    if one_way.coords != two_way.coords {
        return Err(Error::axis("patterns are on different grids"));
    }
    let a = &one_way.magnitude;
    let b = &two_way.magnitude;
    let i = peak_index(a);
    let (l, r) = mainlobe_bounds(a, i);
    let thr = 10f64.powf(GRATING_LOBE_THRESHOLD_DB / 20.0) * a[i];
    let bpk = b.iter().cloned().fold(0.0, f64::max);
    let mut out = Vec::new();
    for q in local_maxima(a).filter(|&q| (q < l || q > r) && a[q] > thr) {
        let (lo, hi) = mainlobe_bounds(a, q);
        let lvl = b[lo..=hi].iter().cloned().fold(0.0, f64::max) / bpk;
        out.push((one_way.coords.coord(q) - one_way.coords.coord(i), 20.0 * lvl.log10()));
    }
    Ok(out)
}

/// The nine 1-D comparison scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    FullBp,
    FullRma,
    SparseRmaNoZeroFill,
    SparseRmaZeroFill,
    SparseRmaZeroFillFiltered,
    MimoBp,
    MimoRma,
    MimoRmaFiltered,
    MonostaticRma,
}

impl Scenario {
    pub const ALL: [Scenario; 9] = [
        Scenario::FullBp,
        Scenario::FullRma,
        Scenario::SparseRmaNoZeroFill,
        Scenario::SparseRmaZeroFill,
        Scenario::SparseRmaZeroFillFiltered,
        Scenario::MimoBp,
        Scenario::MimoRma,
        Scenario::MimoRmaFiltered,
        Scenario::MonostaticRma,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            Scenario::FullBp => "full_bp",
            Scenario::FullRma => "full_rma",
            Scenario::SparseRmaNoZeroFill => "sparse_rma_no_zero_fill",
            Scenario::SparseRmaZeroFill => "sparse_rma_zero_fill",
            Scenario::SparseRmaZeroFillFiltered => "sparse_rma_zero_fill_filtered",
            Scenario::MimoBp => "mimo_bp",
            Scenario::MimoRma => "mimo_rma",
            Scenario::MimoRmaFiltered => "mimo_rma_filtered",
            Scenario::MonostaticRma => "monostatic_rma",
        }
    }

    /// Whether the pattern contains the sparse array (and hence grating lobes).
    pub fn involves_sparse(self) -> bool {
        !matches!(self, Scenario::FullBp | Scenario::FullRma | Scenario::MonostaticRma)
    }
}

/// Parameters of the 1-D comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyConfig {
    pub length: f64,
    pub freq_hz: f64,
    pub r0: f64,
    pub sparse_spacing: f64,
    pub factor_p: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            length: 1.0,
            freq_hz: 30e9,
            r0: 1.0,
            sparse_spacing: 0.1,
            factor_p: 20,
        }
    }
}

impl StudyConfig {
    pub fn dense_spacing(&self) -> f64 {
        self.sparse_spacing / self.factor_p as f64
    }

    pub fn sparse(&self) -> Result<LinearArraySpec> {
        LinearArraySpec::new(self.length, self.sparse_spacing, ArrayRole::Tx, self.r0, self.freq_hz)
    }

    pub fn dense(&self) -> Result<LinearArraySpec> {
        LinearArraySpec::new(self.length, self.dense_spacing(), ArrayRole::Rx, self.r0, self.freq_hz)
    }

    pub fn monostatic(&self) -> Result<LinearArraySpec> {
        LinearArraySpec::new(self.length, self.dense_spacing(), ArrayRole::Monostatic, self.r0, self.freq_hz)
    }

    /// Half-width of the grating-lobe-free zone around the mainlobe.
    pub fn clear_zone(&self) -> f64 {
        C0 / self.freq_hz * self.r0 / self.sparse_spacing / 2.0
    }

    pub fn pattern(&self, s: Scenario, zout: &UniformGrid) -> Result<BeamPatternResult> {
        use PatternMethod::*;
        let zf = |filter| PatternOptions {
            zero_fill: true,
            spectrum_filter: filter,
            reference_spacing: Some(self.dense_spacing()),
        };
        let plain = PatternOptions::default();
        let (sp, de) = (self.sparse()?, self.dense()?);
        let r = match s {
            Scenario::FullBp => beam_pattern(&[de], Bp, plain, zout)?,
            Scenario::FullRma => beam_pattern(&[de], Rma, plain, zout)?,
            Scenario::SparseRmaNoZeroFill => beam_pattern(&[sp], Rma, plain, zout)?,
            Scenario::SparseRmaZeroFill => beam_pattern(&[sp], Rma, zf(false), zout)?,
            Scenario::SparseRmaZeroFillFiltered => beam_pattern(&[sp], Rma, zf(true), zout)?,
            Scenario::MimoBp => beam_pattern(&[sp, de], Bp, plain, zout)?,
            Scenario::MimoRma => beam_pattern(&[sp, de], Rma, zf(false), zout)?,
            Scenario::MimoRmaFiltered => beam_pattern(&[sp, de], Rma, zf(true), zout)?,
            Scenario::MonostaticRma => beam_pattern(&[self.monostatic()?], Rma, plain, zout)?,
        };
        Ok(BeamPatternResult {
            method: s.slug().to_string(),
            ..r
        })
    }

    /// Metrics with the PSLR searched inside the grating-lobe-free zone for sparse scenarios.
    pub fn metrics(&self, s: Scenario, p: &BeamPatternResult) -> Result<QualityMetrics> {
        let w = s.involves_sparse().then(|| self.clear_zone());
        measure_metrics_within(p, w)
    }

    pub fn profile_grid(&self) -> Result<UniformGrid> {
        default_profile_grid(&self.dense()?)
    }
}

/// Runs all nine scenarios on the default profile grid.
pub fn compare_scenarios(cfg: &StudyConfig) -> Result<Vec<(Scenario, QualityMetrics)>> {
    let zout = cfg.profile_grid()?;
    Scenario::ALL
        .iter()
        .map(|&s| {
            let p = cfg.pattern(s, &zout)?;
            Ok((s, cfg.metrics(s, &p)?))
        })
        .collect()
}

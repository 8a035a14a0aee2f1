//! Cylindrical aperture, antenna placement, point scenes and frequency grids.
//!
//! Angles are measured from the -y axis, so an element at angle θ on a
//! cylinder of radius R0 sits at (R0 sin θ, -R0 cos θ, z). The aperture
//! midline is θ = 0.

use std::fmt;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const C0: f64 = 299_792_458.0;

const UNIFORM_TOL: f64 = 1e-9;
const RATIO_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn rho(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Rotation about the z axis by `angle` radians.
    pub fn rotated_z(&self, angle: f64) -> Point3 {
        let (s, c) = angle.sin_cos();
        Point3::new(c * self.x - s * self.y, s * self.x + c * self.y, self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Tx,
    Rx,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Tx => f.write_str("tx"),
            Side::Rx => f.write_str("rx"),
        }
    }
}

/// Count and spacing of one subarray along the arc and along z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubarraySpec {
    pub arc_count: usize,
    /// Arc length between neighbouring columns (m).
    pub arc_spacing: f64,
    pub z_count: usize,
    pub z_spacing: f64,
}

/// Returns the spacing of a uniformly sampled, strictly increasing list.
/// `None` for a single element.
pub fn uniform_spacing(values: &[f64]) -> Result<Option<f64>> {
    match values.len() {
        0 => Err(Error::invalid("empty coordinate list")),
        1 => {
            if values[0].is_finite() {
                Ok(None)
            } else {
                Err(Error::invalid("non-finite coordinate"))
            }
        }
        n => {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("non-finite coordinate"));
            }
            let step = (values[n - 1] - values[0]) / (n - 1) as f64;
            if step <= 0.0 || values.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::invalid("coordinates are not strictly increasing"));
            }
            for (i, v) in values.iter().enumerate() {
                let dev = (v - (values[0] + i as f64 * step)).abs();
                if dev >= UNIFORM_TOL * step {
                    return Err(Error::invalid(format!(
                        "coordinates are not uniformly spaced (element {i} off by {dev:e})"
                    )));
                }
            }
            Ok(Some(step))
        }
    }
}

/// Integer ratio between two spacings, if one divides the other.
fn integer_ratio(a: f64, b: f64) -> Option<usize> {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    let r = hi / lo;
    let n = r.round();
    if n >= 1.0 && (r - n).abs() <= RATIO_TOL * n {
        Some(n as usize)
    } else {
        None
    }
}

fn centered(count: usize, step: f64) -> Vec<f64> {
    let mid = (count as f64 - 1.0) / 2.0;
    (0..count).map(|i| (i as f64 - mid) * step).collect()
}

/// Transmit and receive element grids on a cylinder of radius R0.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayLayout {
    radius: f64,
    tx_angles: Vec<f64>,
    rx_angles: Vec<f64>,
    tx_heights: Vec<f64>,
    rx_heights: Vec<f64>,
}

impl ArrayLayout {
    pub fn new(
        radius: f64,
        tx_angles: Vec<f64>,
        rx_angles: Vec<f64>,
        tx_heights: Vec<f64>,
        rx_heights: Vec<f64>,
    ) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!("radius must be positive, got {radius}")));
        }
        let spacings = [
            ("tx angles", uniform_spacing(&tx_angles)?),
            ("rx angles", uniform_spacing(&rx_angles)?),
            ("tx heights", uniform_spacing(&tx_heights)?),
            ("rx heights", uniform_spacing(&rx_heights)?),
        ];
        for pair in [(&spacings[0], &spacings[1]), (&spacings[2], &spacings[3])] {
            if let ((na, Some(a)), (nb, Some(b))) = pair {
                if integer_ratio(*a, *b).is_none() {
                    return Err(Error::invalid(format!(
                        "spacing ratio between {na} ({a}) and {nb} ({b}) is not an integer"
                    )));
                }
            }
        }
        Ok(ArrayLayout {
            radius,
            tx_angles,
            rx_angles,
            tx_heights,
            rx_heights,
        })
    }

    /// Builds a layout with both subarrays centred on θ = 0, z = 0.
    pub fn centered(radius: f64, tx: SubarraySpec, rx: SubarraySpec) -> Result<Self> {
        for (side, s) in [(Side::Tx, &tx), (Side::Rx, &rx)] {
            if s.arc_count == 0 || s.z_count == 0 {
                return Err(Error::invalid(format!("{side} subarray has no elements")));
            }
            if !(s.arc_spacing > 0.0 && s.z_spacing > 0.0) {
                return Err(Error::invalid(format!("{side} spacings must be positive")));
            }
        }
        if !(radius > 0.0) {
            return Err(Error::invalid(format!("radius must be positive, got {radius}")));
        }
        ArrayLayout::new(
            radius,
            centered(tx.arc_count, tx.arc_spacing / radius),
            centered(rx.arc_count, rx.arc_spacing / radius),
            centered(tx.z_count, tx.z_spacing),
            centered(rx.z_count, rx.z_spacing),
        )
    }

    /// 1.5 m cylinder: 5 × 5 transmitters at 10 cm, 41 × 41 receivers at 1 cm (arc 0.99 cm).
    pub fn benchmark() -> Self {
        let tx = SubarraySpec {
            arc_count: 5,
            arc_spacing: 0.099,
            z_count: 5,
            z_spacing: 0.1,
        };
        let rx = SubarraySpec {
            arc_count: 41,
            arc_spacing: 0.0099,
            z_count: 41,
            z_spacing: 0.01,
        };
        ArrayLayout::centered(1.5, tx, rx).expect("benchmark layout is valid")
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn angles(&self, side: Side) -> &[f64] {
        match side {
            Side::Tx => &self.tx_angles,
            Side::Rx => &self.rx_angles,
        }
    }

    pub fn heights(&self, side: Side) -> &[f64] {
        match side {
            Side::Tx => &self.tx_heights,
            Side::Rx => &self.rx_heights,
        }
    }

    /// Angular spacing; `None` for a single column.
    pub fn angle_spacing(&self, side: Side) -> Option<f64> {
        spacing_of(self.angles(side))
    }

    /// Vertical spacing; `None` for a single row.
    pub fn spacing_z(&self, side: Side) -> Option<f64> {
        spacing_of(self.heights(side))
    }

    /// Arc spacing R0·Δθ.
    pub fn spacing_arc(&self, side: Side) -> Option<f64> {
        self.angle_spacing(side).map(|d| d * self.radius)
    }

    pub fn element_count(&self, side: Side) -> usize {
        self.angles(side).len() * self.heights(side).len()
    }

    /// Vertical extent spanned by either subarray (m).
    pub fn height_extent(&self) -> f64 {
        [Side::Tx, Side::Rx]
            .iter()
            .map(|&s| {
                let h = self.heights(s);
                h[h.len() - 1] - h[0]
            })
            .fold(0.0, f64::max)
    }

    /// Angle subtended by the widest subarray (rad).
    pub fn angular_extent(&self) -> f64 {
        [Side::Tx, Side::Rx]
            .iter()
            .map(|&s| {
                let a = self.angles(s);
                a[a.len() - 1] - a[0]
            })
            .fold(0.0, f64::max)
    }

    pub fn antenna_position(&self, side: Side, angle_index: usize, height_index: usize) -> Result<Point3> {
        let angles = self.angles(side);
        let heights = self.heights(side);
        let theta = *angles.get(angle_index).ok_or(Error::IndexOutOfRange {
            what: "angle index",
            index: angle_index,
            len: angles.len(),
        })?;
        let z = *heights.get(height_index).ok_or(Error::IndexOutOfRange {
            what: "height index",
            index: height_index,
            len: heights.len(),
        })?;
        Ok(self.position_at(theta, z))
    }

    pub(crate) fn position_at(&self, theta: f64, z: f64) -> Point3 {
        let (s, c) = theta.sin_cos();
        Point3::new(self.radius * s, -self.radius * c, z)
    }

    /// Element positions of one side in [angle][height] order.
    pub fn positions(&self, side: Side) -> Vec<Point3> {
        let mut out = Vec::with_capacity(self.element_count(side));
        for &t in self.angles(side) {
            for &z in self.heights(side) {
                out.push(self.position_at(t, z));
            }
        }
        out
    }
}

fn spacing_of(v: &[f64]) -> Option<f64> {
    (v.len() > 1).then(|| (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64)
}

/// Uniform 1-D sample positions start + i·step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl UniformGrid {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self> {
        if !(start.is_finite() && step.is_finite() && step > 0.0) || len == 0 {
            return Err(Error::invalid(format!(
                "grid needs finite start, positive step and len > 0 (got {start}, {step}, {len})"
            )));
        }
        Ok(UniformGrid { start, step, len })
    }

    /// Grid whose sample `len / 2` sits on `center`.
    pub fn centered(center: f64, step: f64, len: usize) -> Result<Self> {
        UniformGrid::new(center - (len / 2) as f64 * step, step, len)
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.coord(i)).collect()
    }

    pub fn last(&self) -> f64 {
        self.coord(self.len - 1)
    }

    pub fn extent(&self) -> f64 {
        self.step * self.len as f64
    }
}

/// R_T + R_R for one transmit/receive pair and a target point.
pub fn two_way_distance(tx: &Point3, rx: &Point3, target: &Point3) -> f64 {
    tx.distance(target) + rx.distance(target)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub position: Point3,
    pub reflectivity: Complex64,
}

/// Ideal point scatterers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    scatterers: Vec<Scatterer>,
}

impl Scene {
    pub fn new(scatterers: Vec<Scatterer>) -> Result<Self> {
        for (i, s) in scatterers.iter().enumerate() {
            if !s.position.is_finite() || !s.reflectivity.re.is_finite() || !s.reflectivity.im.is_finite() {
                return Err(Error::invalid(format!("scatterer {i} has non-finite values")));
            }
        }
        Ok(Scene { scatterers })
    }

    pub fn empty() -> Self {
        Scene::default()
    }

    pub fn single(position: Point3, reflectivity: Complex64) -> Self {
        Scene {
            scatterers: vec![Scatterer {
                position,
                reflectivity,
            }],
        }
    }

    pub fn scatterers(&self) -> &[Scatterer] {
        &self.scatterers
    }

    pub fn len(&self) -> usize {
        self.scatterers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scatterers.is_empty()
    }

    /// Rejects scatterers on or outside the cylinder.
    pub fn check_inside(&self, radius: f64) -> Result<()> {
        for (i, s) in self.scatterers.iter().enumerate() {
            if s.position.rho() >= radius {
                return Err(Error::invalid(format!(
                    "scatterer {i} at rho = {} lies outside the cylinder of radius {radius}",
                    s.position.rho()
                )));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, alpha: Complex64) -> Scene {
        Scene {
            scatterers: self
                .scatterers
                .iter()
                .map(|s| Scatterer {
                    position: s.position,
                    reflectivity: s.reflectivity * alpha,
                })
                .collect(),
        }
    }

    pub fn union(&self, other: &Scene) -> Scene {
        let mut scatterers = self.scatterers.clone();
        scatterers.extend_from_slice(&other.scatterers);
        Scene { scatterers }
    }

    /// Parses `x,y,z,re,im` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(Error::invalid(format!(
                    "scene line {}: expected 5 fields x,y,z,re,im, found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let mut v = [0.0; 5];
            for (slot, f) in v.iter_mut().zip(&fields) {
                *slot = f
                    .parse()
                    .map_err(|_| Error::invalid(format!("scene line {}: bad number '{f}'", lineno + 1)))?;
            }
            out.push(Scatterer {
                position: Point3::new(v[0], v[1], v[2]),
                reflectivity: Complex64::new(v[3], v[4]),
            });
        }
        Scene::new(out)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Scene::parse(&text)
    }
}

/// Uniform stepped-frequency sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    start_hz: f64,
    stop_hz: f64,
    count: usize,
}

impl FrequencyGrid {
    pub fn new(start_hz: f64, stop_hz: f64, count: usize) -> Result<Self> {
        if !(start_hz > 0.0 && stop_hz > start_hz && stop_hz.is_finite()) {
            return Err(Error::invalid(format!(
                "frequency grid needs 0 < start < stop, got {start_hz}..{stop_hz}"
            )));
        }
        if count == 0 {
            return Err(Error::invalid("frequency count must be positive"));
        }
        Ok(FrequencyGrid {
            start_hz,
            stop_hz,
            count,
        })
    }

    /// 31–39 GHz in 15 steps.
    pub fn benchmark() -> Self {
        FrequencyGrid::new(31e9, 39e9, 15).expect("benchmark band is valid")
    }

    pub fn start_hz(&self) -> f64 {
        self.start_hz
    }

    pub fn stop_hz(&self) -> f64 {
        self.stop_hz
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn frequencies(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start_hz];
        }
        let step = (self.stop_hz - self.start_hz) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.stop_hz } else { self.start_hz + i as f64 * step })
            .collect()
    }

    /// k = 2πf/c in rad/m.
    pub fn wavenumbers(&self) -> Vec<f64> {
        self.frequencies().into_iter().map(wavenumber).collect()
    }

    /// Wavenumber step; zero for a single tone.
    pub fn wavenumber_step(&self) -> f64 {
        if self.count == 1 {
            0.0
        } else {
            (wavenumber(self.stop_hz) - wavenumber(self.start_hz)) / (self.count - 1) as f64
        }
    }

    pub fn center_wavenumber(&self) -> f64 {
        0.5 * (wavenumber(self.start_hz) + wavenumber(self.stop_hz))
    }

    pub fn center_wavelength(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.center_wavenumber()
    }

    pub fn bandwidth(&self) -> f64 {
        self.stop_hz - self.start_hz
    }
}

pub fn wavenumber(freq_hz: f64) -> f64 {
    2.0 * std::f64::consts::PI * freq_hz / C0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn benchmark_layout() -> ArrayLayout {
        ArrayLayout::centered(
            1.5,
            SubarraySpec {
                arc_count: 5,
                arc_spacing: 0.099,
                z_count: 5,
                z_spacing: 0.1,
            },
            SubarraySpec {
                arc_count: 41,
                arc_spacing: 0.0099,
                z_count: 41,
                z_spacing: 0.01,
            },
        )
        .unwrap()
    }

    fn single(radius: f64, theta: f64, z: f64) -> ArrayLayout {
        ArrayLayout::new(radius, vec![theta], vec![theta], vec![z], vec![z]).unwrap()
    }

    #[test]
    fn position_examples() {
        let p = single(1.5, 0.0, 0.0).antenna_position(Side::Tx, 0, 0).unwrap();
        assert_eq!((p.x, p.y, p.z), (0.0, -1.5, 0.0));

        let p = single(1.5, std::f64::consts::FRAC_PI_2, 0.2)
            .antenna_position(Side::Rx, 0, 0)
            .unwrap();
        assert!((p.x - 1.5).abs() < 1e-15 && p.y.abs() < 1e-15 && p.z == 0.2);

        let p = single(1.5, 0.132, 0.0).antenna_position(Side::Tx, 0, 0).unwrap();
        assert!((p.x - 0.197_426).abs() < 1e-6, "{}", p.x);
        assert!((p.y + 1.486_951).abs() < 1e-6, "{}", p.y);
    }

    #[test]
    fn position_index_out_of_range() {
        let l = benchmark_layout();
        assert!(matches!(
            l.antenna_position(Side::Tx, 5, 0),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(l.antenna_position(Side::Rx, 40, 41).is_err());
    }

    #[test]
    fn distance_examples() {
        let a = Point3::new(0.0, -1.0, 0.0);
        assert_eq!(two_way_distance(&a, &a, &Point3::ORIGIN), 2.0);
        let b = Point3::new(0.0, -1.0, 0.1);
        let d = two_way_distance(&a, &b, &Point3::ORIGIN);
        assert!((d - 2.004_987_562_112_089).abs() < 1e-12);
        assert_eq!(two_way_distance(&a, &b, &a), b.distance(&a));
    }

    #[test]
    fn benchmark_layout_shape() {
        let l = benchmark_layout();
        assert_eq!(l.angles(Side::Tx).len(), 5);
        assert_eq!(l.heights(Side::Rx).len(), 41);
        assert!((l.spacing_arc(Side::Tx).unwrap() - 0.099).abs() < 1e-12);
        assert!((l.angle_spacing(Side::Rx).unwrap() - 0.0066).abs() < 1e-12);
        assert!((l.height_extent() - 0.4).abs() < 1e-12);
        assert!((l.angular_extent() - 0.264).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_integer_ratio() {
        let r = ArrayLayout::centered(
            1.0,
            SubarraySpec {
                arc_count: 3,
                arc_spacing: 0.03,
                z_count: 3,
                z_spacing: 0.025,
            },
            SubarraySpec {
                arc_count: 3,
                arc_spacing: 0.01,
                z_count: 3,
                z_spacing: 0.01,
            },
        );
        assert!(r.is_err());
    }

    #[test]
    fn rejects_perturbed_element() {
        let mut z: Vec<f64> = (0..11).map(|i| i as f64 * 0.01).collect();
        assert!(uniform_spacing(&z).unwrap().is_some());
        z[4] += 1e-3 * 0.01;
        assert!(uniform_spacing(&z).is_err());
        let a = vec![0.0];
        assert!(ArrayLayout::new(1.0, a.clone(), a.clone(), z, a).is_err());
    }

    #[test]
    fn rejects_bad_radius_and_decreasing() {
        let a = vec![0.0];
        assert!(ArrayLayout::new(0.0, a.clone(), a.clone(), a.clone(), a.clone()).is_err());
        assert!(uniform_spacing(&[0.2, 0.1, 0.0]).is_err());
    }

    #[test]
    fn scene_parse_and_bounds() {
        let s = Scene::parse("# header\n0,0,0,1,0\n 0.1, 0.0, 0.05, 0.5, -0.5 # tail\n\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.scatterers()[1].reflectivity, Complex64::new(0.5, -0.5));
        assert!(s.check_inside(1.5).is_ok());
        assert!(Scene::parse("1,2,3").is_err());
        assert!(Scene::parse("a,0,0,1,0").is_err());
        assert!(Scene::single(Point3::new(1.6, 0.0, 0.0), Complex64::new(1.0, 0.0))
            .check_inside(1.5)
            .is_err());
        assert!(Scene::parse("nan,0,0,1,0").is_err());
    }

    #[test]
    fn frequency_grid_derived() {
        let f = FrequencyGrid::new(31e9, 39e9, 15).unwrap();
        let k = f.wavenumbers();
        assert_eq!(k.len(), 15);
        assert!(k.windows(2).all(|w| w[1] > w[0]));
        assert!((f.center_wavenumber() - 0.5 * (k[0] + k[14])).abs() < 1e-9);
        assert!((f.center_wavelength() - C0 / 35e9).abs() < 1e-15);
        assert_eq!(f.bandwidth(), 8e9);
        assert!(FrequencyGrid::new(39e9, 31e9, 3).is_err());
        assert!(FrequencyGrid::new(31e9, 39e9, 0).is_err());
    }

    proptest! {
        #[test]
        fn positions_lie_on_cylinder(r in 0.1f64..10.0, th in -3.0f64..3.0, z in -1.0f64..1.0) {
            let p = single(r, th, z).antenna_position(Side::Tx, 0, 0).unwrap();
            prop_assert!(((p.x * p.x + p.y * p.y) / (r * r) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rotation_leaves_distances(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let l = benchmark_layout();
            let target = Point3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.2..0.2));
            for _ in 0..10 {
                let phi: f64 = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                let rot = ArrayLayout::new(
                    l.radius(),
                    l.angles(Side::Tx).iter().map(|a| a + phi).collect(),
                    l.angles(Side::Rx).iter().map(|a| a + phi).collect(),
                    l.heights(Side::Tx).to_vec(),
                    l.heights(Side::Rx).to_vec(),
                ).unwrap();
                let t2 = target.rotated_z(phi);
                for (i, j) in [(0usize, 0usize), (4, 3), (2, 2)] {
                    let a = two_way_distance(
                        &l.antenna_position(Side::Tx, i, j).unwrap(),
                        &l.antenna_position(Side::Rx, 7 * i, 9 * j).unwrap(),
                        &target,
                    );
                    let b = two_way_distance(
                        &rot.antenna_position(Side::Tx, i, j).unwrap(),
                        &rot.antenna_position(Side::Rx, 7 * i, 9 * j).unwrap(),
                        &t2,
                    );
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn two_way_at_least_baseline(ax in -1.0f64..1.0, az in -1.0f64..1.0, tx in -1.0f64..1.0, tz in -1.0f64..1.0) {
            let t = Point3::new(ax, -1.0, az);
            let r = Point3::new(-ax, -1.2, -az);
            let p = Point3::new(tx, 0.3, tz);
            prop_assert!(two_way_distance(&t, &r, &p) >= t.distance(&r) - 1e-12);
        }
    }
}

//! Experiment configuration: TOML sections parsed into validated runtime values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::{ArrayLayout, FrequencyGrid, Point3, Scene, Side, SubarraySpec, C0};
use crate::io::{config_hash, FORMAT_VERSION};
use crate::lab::{angular_sampling_bound, nyquist_spacing, Scenario, StudyConfig};
use crate::rma::{GridSpec, KernelPhase, Method, RmaConfig, SpectrumFilter};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    version: u32,
    array: Option<RawArray>,
    frequency: Option<RawFrequency>,
    scene: Option<RawScene>,
    #[serde(default)]
    reconstruction: RawReconstruction,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    output: RawOutput,
    noise: Option<NoiseSpec>,
    #[serde(default)]
    beampattern: RawStudy,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArray {
    radius: f64,
    tx_arc_count: usize,
    tx_arc_spacing: f64,
    tx_z_count: usize,
    tx_z_spacing: f64,
    rx_arc_count: usize,
    rx_arc_spacing: f64,
    rx_z_count: usize,
    rx_z_spacing: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrequency {
    start_hz: f64,
    stop_hz: f64,
    steps: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    file: Option<PathBuf>,
    #[serde(default = "default_extent")]
    target_extent: f64,
}

fn default_extent() -> f64 {
    0.26
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawReconstruction {
    method: Method,
    spectrum_filter: FilterChoice,
    evanescent_guard: f64,
    kernel_phase: KernelPhase,
    interp_oversampling: f64,
}

impl Default for RawReconstruction {
    fn default() -> Self {
        RawReconstruction {
            method: Method::Rma,
            spectrum_filter: FilterChoice::Auto,
            evanescent_guard: 0.95,
            kernel_phase: KernelPhase::Leading,
            interp_oversampling: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum FilterChoice {
    Auto,
    None,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawGrid {
    n: [usize; 3],
    /// Absent means a quarter of the theoretical resolution.
    voxel: Option<[f64; 3]>,
    center: [f64; 3],
}

impl Default for RawGrid {
    fn default() -> Self {
        RawGrid {
            n: [64; 3],
            voxel: None,
            center: [0.0; 3],
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    dir: PathBuf,
}

impl Default for RawOutput {
    fn default() -> Self {
        RawOutput { dir: PathBuf::from(".") }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStudy {
    scenario: String,
    length: f64,
    freq_hz: f64,
    r0: f64,
    sparse_spacing: f64,
    factor_p: usize,
}

impl Default for RawStudy {
    fn default() -> Self {
        let s = StudyConfig::default();
        RawStudy {
            scenario: Scenario::MimoRmaFiltered.slug().into(),
            length: s.length,
            freq_hz: s.freq_hz,
            r0: s.r0,
            sparse_spacing: s.sparse_spacing,
            factor_p: s.factor_p,
        }
    }
}

pub fn parse_scenario(slug: &str) -> Result<Scenario> {
    Scenario::ALL.into_iter().find(|s| s.slug() == slug).ok_or_else(|| {
        let known: Vec<&str> = Scenario::ALL.iter().map(|s| s.slug()).collect();
        Error::invalid(format!("unknown scenario '{slug}' (known: {})", known.join(", ")))
    })
}

/// Everything needed to simulate and image the cylindrical array.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagingSetup {
    pub layout: ArrayLayout,
    pub freqs: FrequencyGrid,
    pub scene_file: Option<PathBuf>,
    pub method: Method,
    pub rma: RmaConfig,
    pub noise: Option<NoiseSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub version: u32,
    imaging: Option<ImagingSetup>,
    pub study: StudyConfig,
    pub scenario: Scenario,
    pub output_dir: PathBuf,
    pub hash: String,
}

impl ExperimentConfig {
    /// Parses and validates; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {}", e.message())))?;
        if raw.version != FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "config version {} is not supported (expected {FORMAT_VERSION})",
                raw.version
            )));
        }
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
        let imaging = match (raw.array, raw.frequency) {
            (Some(a), Some(f)) => Some(imaging_setup(a, f, raw.scene, &raw.reconstruction, &raw.grid, raw.noise, &resolve)?),
            (None, None) => {
                if raw.scene.is_some() || raw.noise.is_some() {
                    return Err(Error::invalid("[scene] and [noise] need [array] and [frequency] sections"));
                }
                None
            }
            _ => return Err(Error::invalid("[array] and [frequency] must be given together")),
        };
        let b = raw.beampattern;
        let study = StudyConfig {
            length: b.length,
            freq_hz: b.freq_hz,
            r0: b.r0,
            sparse_spacing: b.sparse_spacing,
            factor_p: b.factor_p,
        };
        study.sparse()?;
        study.dense()?;
        Ok(ExperimentConfig {
            version: raw.version,
            imaging,
            study,
            scenario: parse_scenario(&b.scenario)?,
            output_dir: resolve(&raw.output.dir),
            hash: config_hash(text),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn imaging(&self) -> Result<&ImagingSetup> {
        self.imaging
            .as_ref()
            .ok_or_else(|| Error::invalid("config has no [array]/[frequency] sections"))
    }

    /// Scene named by the config; an empty scene when none is given.
    pub fn load_scene(&self) -> Result<Scene> {
        let im = self.imaging()?;
        let scene = match &im.scene_file {
            Some(p) => Scene::from_file(p)?,
            None => Scene::empty(),
        };
        scene.check_inside(im.layout.radius())?;
        Ok(scene)
    }
}

fn imaging_setup(
    a: RawArray,
    f: RawFrequency,
    scene: Option<RawScene>,
    rec: &RawReconstruction,
    g: &RawGrid,
    noise: Option<NoiseSpec>,
    resolve: &dyn Fn(&Path) -> PathBuf,
) -> Result<ImagingSetup> {
    for (what, counts, sparse, dense) in [
        ("vertical", [a.tx_z_count, a.rx_z_count], a.tx_z_spacing, a.rx_z_spacing),
        ("arc", [a.tx_arc_count, a.rx_arc_count], a.tx_arc_spacing, a.rx_arc_spacing),
    ] {
        if counts.iter().all(|&n| n > 1) {
            check_integer_ratio(what, sparse, dense)?;
        }
    }
    let layout = ArrayLayout::centered(
        a.radius,
        SubarraySpec {
            arc_count: a.tx_arc_count,
            arc_spacing: a.tx_arc_spacing,
            z_count: a.tx_z_count,
            z_spacing: a.tx_z_spacing,
        },
        SubarraySpec {
            arc_count: a.rx_arc_count,
            arc_spacing: a.rx_arc_spacing,
            z_count: a.rx_z_count,
            z_spacing: a.rx_z_spacing,
        },
    )?;
    let freqs = FrequencyGrid::new(f.start_hz, f.stop_hz, f.steps)?;
    let (scene_file, target_extent) = match scene {
        Some(s) => (s.file.map(|p| resolve(&p)), s.target_extent),
        None => (None, default_extent()),
    };
    if let Some(p) = &scene_file {
        if !p.is_file() {
            return Err(Error::invalid(format!("scene file {} does not exist", p.display())));
        }
    }
    check_sampling(&layout, &freqs, target_extent)?;
    if let Some(n) = noise {
        if !n.snr_db.is_finite() {
            return Err(Error::invalid("noise snr_db must be finite"));
        }
    }

    let center = Point3::new(g.center[0], g.center[1], g.center[2]);
    let grid = match g.voxel {
        Some(v) => GridSpec::centered(center, v, g.n)?,
        None => {
            let q = GridSpec::quarter_resolution(&layout, &freqs, center, 1)?;
            GridSpec::centered(center, [q.x.step, q.y.step, q.z.step], g.n)?
        }
    };
    check_grid_inside(&grid, layout.radius())?;
    let mut rma = RmaConfig::for_layout(&layout, &freqs)?;
    rma.grid = grid;
    rma.target_extent = target_extent;
    rma.evanescent_guard = rec.evanescent_guard;
    rma.kernel_phase = rec.kernel_phase;
    rma.interp_oversampling = rec.interp_oversampling;
    rma.spectrum_filter = match rec.spectrum_filter {
        FilterChoice::Auto => SpectrumFilter::Auto,
        FilterChoice::None => SpectrumFilter::None,
    };
    rma.validate(&layout)?;
    Ok(ImagingSetup {
        layout,
        freqs,
        scene_file,
        method: rec.method,
        rma,
        noise,
    })
}

fn check_integer_ratio(what: &str, sparse: f64, dense: f64) -> Result<()> {
    let r = sparse / dense;
    if !(r.is_finite() && r >= 1.0 && (r - r.round()).abs() <= 1e-6 * r) {
        return Err(Error::invalid(format!(
            "spectrum grid matching: {what} tx/rx spacing ratio {sparse}/{dense} = {r} is not an integer"
        )));
    }
    Ok(())
}

/// Dense-subarray sampling checks at the shortest wavelength of the band.
fn check_sampling(layout: &ArrayLayout, freqs: &FrequencyGrid, d: f64) -> Result<()> {
    let lambda = C0 / freqs.stop_hz();
    let dense = Side::Rx;
    if let Some(dz) = layout.spacing_z(dense) {
        let bound = nyquist_spacing(lambda, layout.radius(), layout.height_extent(), d)?;
        if dz > bound * (1.0 + 1e-9) {
            return Err(Error::invalid(format!(
                "vertical Nyquist criterion: dense spacing {dz} m exceeds {bound:.6} m"
            )));
        }
    }
    if d > 0.0 {
        if let Some(dt) = layout.angle_spacing(dense) {
            let bound = angular_sampling_bound(lambda, d)?;
            if dt > bound * (1.0 + 1e-9) {
                return Err(Error::invalid(format!(
                    "angular sampling criterion: dense interval {dt} rad exceeds {bound:.6} rad"
                )));
            }
        }
    }
    Ok(())
}

fn check_grid_inside(grid: &GridSpec, radius: f64) -> Result<()> {
    let corners = [grid.x.start, grid.x.last()]
        .into_iter()
        .flat_map(|x| [grid.y.start, grid.y.last()].map(|y| x.hypot(y)));
    let worst = corners.fold(0.0_f64, f64::max);
    if worst >= radius {
        return Err(Error::invalid(format!(
            "image grid reaches radius {worst:.4} m, outside the aperture cylinder of radius {radius} m"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const BENCHMARK: &str = r#"
version = 1

[array]
radius = 1.5
tx_arc_count = 5
tx_arc_spacing = 0.099
tx_z_count = 5
tx_z_spacing = 0.1
rx_arc_count = 41
rx_arc_spacing = 0.0099
rx_z_count = 41
rx_z_spacing = 0.01

[frequency]
start_hz = 31e9
stop_hz = 39e9
steps = 15
"#;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("/tmp"))
    }

    #[test]
    fn benchmark_config_matches_preset() {
        let c = parse(BENCHMARK).unwrap();
        let im = c.imaging().unwrap();
        assert_eq!(im.layout, ArrayLayout::benchmark());
        assert_eq!(im.freqs, FrequencyGrid::benchmark());
        assert_eq!(im.rma.zero_fill_p_vertical, 10);
        assert_eq!(im.rma.zero_fill_p_arc, 10);
        assert_eq!(im.rma.grid.shape(), [64, 64, 64]);
        assert_eq!(im.method, Method::Rma);
        assert_eq!(im.rma.kernel_phase, KernelPhase::Leading);
        let d = parse(&(BENCHMARK.to_string() + "[reconstruction]\nkernel_phase = \"debye\"\n")).unwrap();
        assert_eq!(d.imaging().unwrap().rma.kernel_phase, KernelPhase::Debye);
        assert_eq!(c.output_dir, PathBuf::from("/tmp/."));
        assert_eq!(c.hash, config_hash(BENCHMARK));
    }

    #[test]
    fn study_only_config() {
        let c = parse("version = 1\n[beampattern]\nscenario = \"mimo_bp\"\nlength = 1\nfreq_hz = 30e9\nr0 = 1\nsparse_spacing = 0.1\nfactor_p = 20\n").unwrap();
        assert_eq!(c.scenario, Scenario::MimoBp);
        assert_eq!(c.study, StudyConfig::default());
        assert!(c.imaging().is_err());
    }

    #[test]
    fn rejects_non_integer_ratio() {
        let text = BENCHMARK.replace("tx_z_spacing = 0.1", "tx_z_spacing = 0.105");
        let msg = parse(&text).unwrap_err().to_string();
        assert!(msg.contains("spectrum grid matching"), "{msg}");
    }

    #[test]
    fn rejects_vertical_undersampling() {
        let text = BENCHMARK
            .replace("rx_z_spacing = 0.01", "rx_z_spacing = 0.025")
            .replace("rx_z_count = 41", "rx_z_count = 17");
        let msg = parse(&text).unwrap_err().to_string();
        assert!(msg.contains("vertical Nyquist"), "{msg}");
    }

    #[test]
    fn rejects_angular_undersampling() {
        let text = BENCHMARK
            .replace("tx_arc_spacing = 0.099", "tx_arc_spacing = 0.1")
            .replace("rx_arc_spacing = 0.0099", "rx_arc_spacing = 0.05")
            .replace("rx_arc_count = 41", "rx_arc_count = 9");
        let msg = parse(&text).unwrap_err().to_string();
        assert!(msg.contains("angular sampling"), "{msg}");
        assert!(parse(&(text + "\n[scene]\ntarget_extent = 0.2\n")).is_ok());
    }

    #[test]
    fn rejects_grid_outside_cylinder() {
        let text = BENCHMARK.to_string() + "\n[grid]\nn = [64, 64, 64]\nvoxel = [0.05, 0.05, 0.05]\n";
        let msg = parse(&text).unwrap_err().to_string();
        assert!(msg.contains("cylinder"), "{msg}");
    }

    #[test]
    fn rejects_missing_scene_file_and_unknown_keys() {
        let text = BENCHMARK.to_string() + "\n[scene]\nfile = \"no/such/file.txt\"\n";
        assert!(parse(&text).unwrap_err().to_string().contains("does not exist"));
        let text = BENCHMARK.replace("radius", "raduis");
        assert!(parse(&text).is_err());
        assert!(parse(&BENCHMARK.replace("version = 1", "version = 2")).is_err());
        assert!(parse("version = 1\n[array]\nradius = 1.5\n").is_err());
    }

    proptest! {
        /// Any dense spacing beyond the vertical bound is rejected by name.
        #[test]
        fn vertical_bound_is_enforced(dz in 0.005f64..0.05, d in 0.0f64..0.3) {
            let count = 11usize;
            let text = format!(
                "version = 1\n[array]\nradius = 1.0\ntx_arc_count = 3\ntx_arc_spacing = 0.01\ntx_z_count = 1\ntx_z_spacing = {sz}\n\
                 rx_arc_count = 3\nrx_arc_spacing = 0.01\nrx_z_count = {count}\nrx_z_spacing = {dz}\n\
                 [frequency]\nstart_hz = 28e9\nstop_hz = 32e9\nsteps = 3\n[scene]\ntarget_extent = {d}\n[grid]\nn = [4, 4, 4]\nvoxel = [0.01, 0.01, 0.01]\n",
                sz = dz * 2.0
            );
            let lambda = C0 / 32e9;
            let extent = dz * (count - 1) as f64;
            let bound = nyquist_spacing(lambda, 1.0, extent, d).unwrap();
            let r = parse(&text);
            if dz > bound * (1.0 + 1e-6) {
                let msg = r.unwrap_err().to_string();
                prop_assert!(msg.contains("vertical Nyquist"), "{}", msg);
            } else if dz < bound * (1.0 - 1e-6) {
                prop_assert!(r.is_ok(), "{:?}", r);
            }
        }
    }
}

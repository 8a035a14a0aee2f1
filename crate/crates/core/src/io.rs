//! On-disk formats: TOML sidecars with raw little-endian f32 complex
//! payloads, PGM projections and CSV profiles.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forward::{EchoShape, EchoTensor};
use crate::geometry::{ArrayLayout, FrequencyGrid, Side, UniformGrid};
use crate::lab::{BeamPatternResult, QualityMetrics};
use crate::rma::{GridSpec, ImageVolume, Method};

pub const FORMAT_VERSION: u32 = 1;
const SAMPLE_FORMAT: &str = "complex64le";

pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EchoSidecar {
    format: String,
    version: u32,
    axes: Vec<String>,
    shape: Vec<usize>,
    radius: f64,
    tx_angles: Vec<f64>,
    rx_angles: Vec<f64>,
    tx_heights: Vec<f64>,
    rx_heights: Vec<f64>,
    freq_start_hz: f64,
    freq_stop_hz: f64,
    freq_count: usize,
    sample: String,
    config_hash: String,
    data: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridAxis {
    start: f64,
    step: f64,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImageSidecar {
    format: String,
    version: u32,
    order: Vec<String>,
    method: String,
    config_hash: String,
    sample: String,
    data: String,
    x: GridAxis,
    y: GridAxis,
    z: GridAxis,
}

fn read_sidecar<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::format(path, e.message().to_string()))
}

fn check(path: &Path, what: &str, got: &str, want: &str) -> Result<()> {
    if got != want {
        return Err(Error::format(path, format!("{what} is '{got}', expected '{want}'")));
    }
    Ok(())
}

fn check_header(path: &Path, format: &str, want: &str, version: u32, sample: &str) -> Result<()> {
    check(path, "format", format, want)?;
    if version != FORMAT_VERSION {
        return Err(Error::format(path, format!("unsupported format version {version}")));
    }
    check(path, "sample", sample, SAMPLE_FORMAT)
}

/// Payload path named in a sidecar, resolved against the sidecar's directory.
fn payload_path(sidecar: &Path, name: &str) -> Result<PathBuf> {
    if name.is_empty() || Path::new(name).components().count() != 1 {
        return Err(Error::format(sidecar, format!("payload name '{name}' must be a bare file name")));
    }
    Ok(sidecar.parent().unwrap_or(Path::new(".")).join(name))
}

fn encode(data: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() * 8);
    for v in data {
        out.extend_from_slice(&(v.re as f32).to_le_bytes());
        out.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
    out
}

fn decode(path: &Path, bytes: &[u8], expected: usize) -> Result<Vec<Complex64>> {
    if bytes.len() != expected * 8 {
        return Err(Error::format(
            path,
            format!("payload has {} bytes, expected {}", bytes.len(), expected * 8),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn payload_name(sidecar: &Path) -> String {
    let stem = sidecar.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    format!("{stem}.bin")
}

fn to_toml<T: Serialize>(v: &T) -> Result<String> {
    toml::to_string(v).map_err(|e| Error::invalid(format!("cannot encode sidecar: {e}")))
}

/// Writes the sidecar at `path` and the `.bin` payload beside it.
pub fn write_echo(path: &Path, e: &EchoTensor, config_hash: &str) -> Result<()> {
    let l = e.layout();
    let f = e.freqs();
    let bin = payload_name(path);
    let sc = EchoSidecar {
        format: "echo".into(),
        version: FORMAT_VERSION,
        axes: ["k", "theta_T", "theta_R", "z_T", "z_R"].map(String::from).to_vec(),
        shape: e.shape().as_array().to_vec(),
        radius: l.radius(),
        tx_angles: l.angles(Side::Tx).to_vec(),
        rx_angles: l.angles(Side::Rx).to_vec(),
        tx_heights: l.heights(Side::Tx).to_vec(),
        rx_heights: l.heights(Side::Rx).to_vec(),
        freq_start_hz: f.start_hz(),
        freq_stop_hz: f.stop_hz(),
        freq_count: f.count(),
        sample: SAMPLE_FORMAT.into(),
        config_hash: config_hash.into(),
        data: bin.clone(),
    };
    let text = to_toml(&sc)?;
    write_file(&payload_path(path, &bin)?, &encode(e.data()))?;
    write_file(path, text.as_bytes())
}

/// Echo plus the config hash it was produced under.
pub fn read_echo(path: &Path) -> Result<(EchoTensor, String)> {
    let sc: EchoSidecar = read_sidecar(path)?;
    check_header(path, &sc.format, "echo", sc.version, &sc.sample)?;
    let layout = ArrayLayout::new(sc.radius, sc.tx_angles, sc.rx_angles, sc.tx_heights, sc.rx_heights)
        .map_err(|e| Error::format(path, format!("layout: {e}")))?;
    let freqs = FrequencyGrid::new(sc.freq_start_hz, sc.freq_stop_hz, sc.freq_count)
        .map_err(|e| Error::format(path, format!("frequencies: {e}")))?;
    let shape = EchoShape::of(&layout, &freqs);
    if sc.shape != shape.as_array() {
        return Err(Error::format(
            path,
            format!("shape {:?} disagrees with the layout {:?}", sc.shape, shape.as_array()),
        ));
    }
    let bin = payload_path(path, &sc.data)?;
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let data = decode(&bin, &bytes, shape.len())?;
    let e = EchoTensor::from_data(&layout, &freqs, data).map_err(|e| Error::format(&bin, e.to_string()))?;
    Ok((e, sc.config_hash))
}

fn grid_axis(g: &UniformGrid) -> GridAxis {
    GridAxis {
        start: g.start,
        step: g.step,
        len: g.len,
    }
}

/// Writes the volume sidecar at `path` and its `.bin` payload.
pub fn write_image(path: &Path, img: &ImageVolume) -> Result<()> {
    let g = img.grid();
    let bin = payload_name(path);
    let sc = ImageSidecar {
        format: "image".into(),
        version: FORMAT_VERSION,
        order: ["x", "y", "z"].map(String::from).to_vec(),
        method: img.method().to_string(),
        config_hash: img.config_hash().into(),
        sample: SAMPLE_FORMAT.into(),
        data: bin.clone(),
        x: grid_axis(&g.x),
        y: grid_axis(&g.y),
        z: grid_axis(&g.z),
    };
    let text = to_toml(&sc)?;
    write_file(&payload_path(path, &bin)?, &encode(img.data()))?;
    write_file(path, text.as_bytes())
}

pub fn read_image(path: &Path) -> Result<ImageVolume> {
    let sc: ImageSidecar = read_sidecar(path)?;
    check_header(path, &sc.format, "image", sc.version, &sc.sample)?;
    if sc.order != ["x", "y", "z"] {
        return Err(Error::format(path, "index order must be x, y, z"));
    }
    let axis = |a: &GridAxis| UniformGrid::new(a.start, a.step, a.len).map_err(|e| Error::format(path, e.to_string()));
    let grid = GridSpec {
        x: axis(&sc.x)?,
        y: axis(&sc.y)?,
        z: axis(&sc.z)?,
    };
    let method: Method = sc.method.parse().map_err(|e: Error| Error::format(path, e.to_string()))?;
    let bin = payload_path(path, &sc.data)?;
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let data = decode(&bin, &bytes, grid.len())?;
    ImageVolume::new(grid, data, method, sc.config_hash).map_err(|e| Error::format(&bin, e.to_string()))
}

/// 8-bit P5 maximum projection over y: x across, z up (top row = largest z).
pub fn mip_pgm(img: &ImageVolume) -> Vec<u8> {
    let [nx, _, nz] = img.grid().shape();
    let mip = img.max_projection_y();
    let peak = mip.iter().cloned().fold(0.0, f64::max);
    let mut out = format!("P5\n{nx} {nz}\n255\n").into_bytes();
    for row in 0..nz {
        let iz = nz - 1 - row;
        for ix in 0..nx {
            let v = if peak > 0.0 { mip[ix * nz + iz] / peak } else { 0.0 };
            out.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

fn db(v: f64) -> f64 {
    if v > 0.0 {
        20.0 * v.log10()
    } else {
        f64::NEG_INFINITY
    }
}

/// Lines through the global peak along x, y and z, normalised to the peak.
pub fn peak_profiles_csv(img: &ImageVolume) -> String {
    let peak = img.peak_index();
    let pm = img.max_magnitude();
    let mut s = String::from("axis,coordinate_m,magnitude_linear,magnitude_db\n");
    for (axis, name) in ["x", "y", "z"].iter().enumerate() {
        let g = img.grid().axis(axis);
        for (i, v) in img.line(axis, peak).iter().enumerate() {
            let m = if pm > 0.0 { v.norm() / pm } else { 0.0 };
            let _ = writeln!(s, "{name},{:.9e},{:.6e},{:.4}", g.coord(i), m, db(m));
        }
    }
    s
}

pub fn pattern_csv(p: &BeamPatternResult) -> String {
    let mut s = String::from("coordinate_m,magnitude_linear,magnitude_db\n");
    for (i, m) in p.magnitude.iter().enumerate() {
        let _ = writeln!(s, "{:.9e},{:.6e},{:.4}", p.coords.coord(i), m, db(*m));
    }
    s
}

fn opt(v: Option<f64>, scale: f64, prec: usize) -> String {
    v.map_or_else(|| "~".to_string(), |x| format!("{:.*}", prec, x * scale))
}

pub fn metrics_header() -> &'static str {
    "resolution_m,pslr_db,grating_lobe_offset_m"
}

pub fn metrics_fields(m: &QualityMetrics) -> String {
    format!("{:.6e},{},{}", m.resolution, opt(m.pslr, 1.0, 3), opt(m.grating_lobe_offset, 1.0, 6))
}

/// Parses `coordinate_m,magnitude_linear[,...]` rows; an optional leading
/// `axis` column selects rows whose axis equals `axis`.
pub fn read_profile_csv(path: &Path, axis: Option<&str>) -> Result<BeamPatternResult> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty profile"))?
        .split(',')
        .map(str::trim)
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::format(path, format!("missing column '{name}'")))
    };
    let (cc, cm) = (col("coordinate_m")?, col("magnitude_linear")?);
    let ca = header.iter().position(|h| *h == "axis");
    let mut xs = Vec::new();
    let mut ms = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != header.len() {
            return Err(Error::format(path, format!("row {}: wrong field count", n + 2)));
        }
        if let (Some(a), Some(want)) = (ca, axis) {
            if f[a] != want {
                continue;
            }
        }
        let p = |i: usize| {
            f[i].parse::<f64>()
                .map_err(|_| Error::format(path, format!("row {}: '{}' is not a number", n + 2, f[i])))
        };
        xs.push(p(cc)?);
        ms.push(p(cm)?);
    }
    if xs.len() < 2 {
        return Err(Error::format(path, "profile needs at least two rows"));
    }
    let step = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    // Rows may carry rounded coordinates; a thousandth of a step is the slack.
    for (i, x) in xs.iter().enumerate() {
        if (x - (xs[0] + i as f64 * step)).abs() > 1e-3 * step.abs() + 1e-12 {
            return Err(Error::format(path, "profile coordinates are not uniform"));
        }
    }
    let g = UniformGrid::new(xs[0], step, xs.len()).map_err(|e| Error::format(path, e.to_string()))?;
    BeamPatternResult::new(g, ms, "file".into()).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::simulate_echo;
    use crate::geometry::{Point3, Scene, SubarraySpec};

    fn layout() -> ArrayLayout {
        let s = SubarraySpec {
            arc_count: 2,
            arc_spacing: 0.02,
            z_count: 3,
            z_spacing: 0.02,
        };
        ArrayLayout::centered(1.0, s, SubarraySpec { arc_count: 4, arc_spacing: 0.01, z_count: 5, z_spacing: 0.01 }).unwrap()
    }

    #[test]
    fn hash_is_sha256_hex() {
        assert_eq!(config_hash(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn echo_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = FrequencyGrid::new(30e9, 31e9, 3).unwrap();
        let e = simulate_echo(&Scene::single(Point3::new(0.01, 0.0, 0.02), Complex64::new(0.5, 0.25)), &layout(), &f).unwrap();
        let p = dir.path().join("echo.txt");
        write_echo(&p, &e, "abc").unwrap();
        let (back, h) = read_echo(&p).unwrap();
        assert_eq!(h, "abc");
        assert_eq!(back.layout(), e.layout());
        assert_eq!(back.freqs(), e.freqs());
        for (u, v) in back.data().iter().zip(e.data()) {
            assert!((u - v).norm() < 1e-6);
        }
        let first = fs::read(dir.path().join("echo.bin")).unwrap();
        write_echo(&p, &e, "abc").unwrap();
        assert_eq!(first, fs::read(dir.path().join("echo.bin")).unwrap());
    }

    #[test]
    fn corrupt_echo_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let f = FrequencyGrid::new(30e9, 31e9, 3).unwrap();
        let e = EchoTensor::zeros(&layout(), &f);
        let p = dir.path().join("echo.txt");
        write_echo(&p, &e, "h").unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.contains("shape = [3, 2, 4, 3, 5]"), "{text}");
        fs::write(&p, text.replace("shape = [3, 2, 4, 3, 5]", "shape = [3, 2, 4, 3, 6]")).unwrap();
        assert!(matches!(read_echo(&p), Err(Error::Format { .. })));
        fs::write(&p, "garbage").unwrap();
        assert!(matches!(read_echo(&p), Err(Error::Format { .. })));
        write_echo(&p, &e, "h").unwrap();
        fs::write(dir.path().join("echo.bin"), [0u8; 5]).unwrap();
        assert!(matches!(read_echo(&p), Err(Error::Format { .. })));
        assert_eq!(read_echo(&dir.path().join("none.txt")).unwrap_err().exit_code(), 4);
    }

    #[test]
    fn image_round_trip_and_projection() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridSpec::centered(Point3::ORIGIN, [0.01, 0.02, 0.03], [3, 2, 4]).unwrap();
        let mut data = vec![Complex64::new(0.0, 0.0); 24];
        data[(2 * 2 + 1) * 4 + 3] = Complex64::new(0.0, 2.0);
        data[0] = Complex64::new(1.0, 0.0);
        let img = ImageVolume::new(grid, data, Method::Bp, "h".into()).unwrap();
        let p = dir.path().join("image.txt");
        write_image(&p, &img).unwrap();
        let back = read_image(&p).unwrap();
        assert_eq!(back, img);
        let pgm = mip_pgm(&img);
        let head = b"P5\n3 4\n255\n";
        assert_eq!(&pgm[..head.len()], head);
        let px = &pgm[head.len()..];
        assert_eq!(px.len(), 12);
        // Peak at x = 2, z = 3 lands in the top row, rightmost column.
        assert_eq!(px[2], 255);
        // (x = 0, z = 0): bottom-left, half the peak.
        assert_eq!(px[9], 128);
        let csv = peak_profiles_csv(&img);
        assert_eq!(csv.lines().count(), 1 + 3 + 2 + 4);
    }

    #[test]
    fn profile_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = UniformGrid::centered(0.0, 0.001, 5).unwrap();
        let p = BeamPatternResult::new(g, vec![0.1, 0.5, 1.0, 0.5, 0.1], "t".into()).unwrap();
        let path = dir.path().join("p.csv");
        fs::write(&path, pattern_csv(&p)).unwrap();
        let back = read_profile_csv(&path, None).unwrap();
        assert_eq!(back.magnitude.len(), 5);
        assert!((back.coords.step - 0.001).abs() < 1e-12);
    }
}

//! Phase-only multistatic scattering model and the echo container.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{ArrayLayout, FrequencyGrid, Point3, Scene, Side};

/// Multistatic samples s(k, θ_T, θ_R, z_T, z_R), stored row-major in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoTensor {
    layout: ArrayLayout,
    freqs: FrequencyGrid,
    data: Vec<Complex64>,
}

/// Axis lengths in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EchoShape {
    pub k: usize,
    pub theta_t: usize,
    pub theta_r: usize,
    pub z_t: usize,
    pub z_r: usize,
}

impl EchoShape {
    pub fn of(layout: &ArrayLayout, freqs: &FrequencyGrid) -> Self {
        EchoShape {
            k: freqs.count(),
            theta_t: layout.angles(Side::Tx).len(),
            theta_r: layout.angles(Side::Rx).len(),
            z_t: layout.heights(Side::Tx).len(),
            z_r: layout.heights(Side::Rx).len(),
        }
    }

    pub fn len(&self) -> usize {
        self.k * self.theta_t * self.theta_r * self.z_t * self.z_r
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_array(&self) -> [usize; 5] {
        [self.k, self.theta_t, self.theta_r, self.z_t, self.z_r]
    }

    pub fn index(&self, k: usize, it: usize, ir: usize, jt: usize, jr: usize) -> usize {
        (((k * self.theta_t + it) * self.theta_r + ir) * self.z_t + jt) * self.z_r + jr
    }
}

impl EchoTensor {
    pub fn zeros(layout: &ArrayLayout, freqs: &FrequencyGrid) -> Self {
        let n = EchoShape::of(layout, freqs).len();
        EchoTensor {
            layout: layout.clone(),
            freqs: freqs.clone(),
            data: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn from_data(layout: &ArrayLayout, freqs: &FrequencyGrid, data: Vec<Complex64>) -> Result<Self> {
        let shape = EchoShape::of(layout, freqs);
        if data.len() != shape.len() {
            return Err(Error::axis(format!(
                "echo data has {} samples, axes require {}",
                data.len(),
                shape.len()
            )));
        }
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::numeric("echo contains non-finite samples"));
        }
        Ok(EchoTensor {
            layout: layout.clone(),
            freqs: freqs.clone(),
            data,
        })
    }

    pub fn layout(&self) -> &ArrayLayout {
        &self.layout
    }

    pub fn freqs(&self) -> &FrequencyGrid {
        &self.freqs
    }

    pub fn shape(&self) -> EchoShape {
        EchoShape::of(&self.layout, &self.freqs)
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, k: usize, it: usize, ir: usize, jt: usize, jr: usize) -> Complex64 {
        self.data[self.shape().index(k, it, ir, jt, jr)]
    }

    fn same_axes(&self, other: &EchoTensor) -> Result<()> {
        if self.layout != other.layout || self.freqs != other.freqs {
            return Err(Error::axis("echo tensors have different axes"));
        }
        Ok(())
    }

    /// Elementwise sum of two echoes on identical axes.
    pub fn superpose(&self, other: &EchoTensor) -> Result<EchoTensor> {
        self.same_axes(other)?;
        Ok(EchoTensor {
            layout: self.layout.clone(),
            freqs: self.freqs.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn scaled(&self, alpha: Complex64) -> EchoTensor {
        EchoTensor {
            layout: self.layout.clone(),
            freqs: self.freqs.clone(),
            data: self.data.iter().map(|v| v * alpha).collect(),
        }
    }

    /// Adds circular complex Gaussian noise at `snr_db` relative to the mean sample power.
    /// Samples are drawn sequentially from a ChaCha stream seeded with `seed`.
    pub fn with_noise(&self, snr_db: f64, seed: u64) -> Result<EchoTensor> {
        if !snr_db.is_finite() {
            return Err(Error::invalid("snr_db must be finite"));
        }
        let power = self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.data.len().max(1) as f64;
        if power == 0.0 {
            return Ok(self.clone());
        }
        let sigma = (power / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::numeric(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = self
            .data
            .iter()
            .map(|v| v + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
            .collect();
        Ok(EchoTensor {
            layout: self.layout.clone(),
            freqs: self.freqs.clone(),
            data,
        })
    }
}

/// s = Σ g · exp(-j k (R_T + R_R)) for every (k, tx, rx) sample.
pub fn simulate_echo(scene: &Scene, layout: &ArrayLayout, freqs: &FrequencyGrid) -> Result<EchoTensor> {
    scene.check_inside(layout.radius())?;
    let shape = EchoShape::of(layout, freqs);
    let ks = freqs.wavenumbers();
    let scat = scene.scatterers();

    // Distances [scatterer][angle][height] per side.
    let dist = |side: Side| -> Vec<f64> {
        let mut out = Vec::with_capacity(scat.len() * layout.element_count(side));
        for s in scat {
            for &t in layout.angles(side) {
                for &z in layout.heights(side) {
                    out.push(layout.position_at(t, z).distance(&s.position));
                }
            }
        }
        out
    };
    let rt = dist(Side::Tx);
    let rr = dist(Side::Rx);
    let (nt, nr) = (layout.element_count(Side::Tx), layout.element_count(Side::Rx));

    let mut data = vec![Complex64::new(0.0, 0.0); shape.len()];
    let block = shape.theta_t * shape.theta_r * shape.z_t * shape.z_r;
    if block == 0 {
        return EchoTensor::from_data(layout, freqs, data);
    }
    let rows = shape.theta_r * shape.z_t * shape.z_r;
    data.par_chunks_mut(rows).enumerate().for_each(|(row, out)| {
        let ik = row / shape.theta_t;
        let it = row % shape.theta_t;
        let k = ks[ik];
        for ir in 0..shape.theta_r {
            for jt in 0..shape.z_t {
                for jr in 0..shape.z_r {
                    let t_idx = it * shape.z_t + jt;
                    let r_idx = ir * shape.z_r + jr;
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (is, s) in scat.iter().enumerate() {
                        let d = rt[is * nt + t_idx] + rr[is * nr + r_idx];
                        acc += s.reflectivity * Complex64::from_polar(1.0, -k * d);
                    }
                    out[(ir * shape.z_t + jt) * shape.z_r + jr] = acc;
                }
            }
        }
    });
    EchoTensor::from_data(layout, freqs, data)
}

/// Echo of a single element pair; used by tests and the 1-D tools.
pub fn pair_sample(scene: &Scene, tx: &Point3, rx: &Point3, k: f64) -> Complex64 {
    scene
        .scatterers()
        .iter()
        .map(|s| s.reflectivity * Complex64::from_polar(1.0, -k * (tx.distance(&s.position) + rx.distance(&s.position))))
        .sum()
}

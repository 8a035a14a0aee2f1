//! Backprojection: the matched-filter sum used as the reference image.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{EchoShape, EchoTensor};
use crate::geometry::{ArrayLayout, Point3, Side};
use crate::rma::{GridSpec, ImageVolume, Method};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Uniformly spaced points start + i·step, i < len.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSpec {
    pub start: Point3,
    pub step: Point3,
    pub len: usize,
}

impl LineSpec {
    pub fn point(&self, i: usize) -> Point3 {
        let t = i as f64;
        Point3::new(
            self.start.x + t * self.step.x,
            self.start.y + t * self.step.y,
            self.start.z + t * self.step.z,
        )
    }

    /// The grid line along `axis` (0 = x, 1 = y, 2 = z) through voxel `at`.
    pub fn grid_line(grid: &GridSpec, axis: usize, at: [usize; 3]) -> LineSpec {
        let mut s = at;
        s[axis] = 0;
        let g = grid.axis(axis);
        let step = match axis {
            0 => Point3::new(g.step, 0.0, 0.0),
            1 => Point3::new(0.0, g.step, 0.0),
            _ => Point3::new(0.0, 0.0, g.step),
        };
        LineSpec {
            start: grid.point(s[0], s[1], s[2]),
            step,
            len: g.len,
        }
    }
}

/// Σ over (k, tx, rx) of s·exp(+jk(R_T + R_R)) at one point.
fn bp_point(e: &EchoTensor, ks: &[f64], tx: &[Point3], rx: &[Point3], sh: &EchoShape, p: &Point3) -> Complex64 {
    let rt: Vec<f64> = tx.iter().map(|a| a.distance(p)).collect();
    let rr: Vec<f64> = rx.iter().map(|a| a.distance(p)).collect();
    let data = e.data();
    let mut total = ZERO;
    let mut at = vec![ZERO; rt.len()];
    let mut ar = vec![ZERO; rr.len()];
    for (ik, &k) in ks.iter().enumerate() {
        for (a, r) in at.iter_mut().zip(&rt) {
            *a = Complex64::from_polar(1.0, k * r);
        }
        for (a, r) in ar.iter_mut().zip(&rr) {
            *a = Complex64::from_polar(1.0, k * r);
        }
        for it in 0..sh.theta_t {
            for ir in 0..sh.theta_r {
                for jt in 0..sh.z_t {
                    let base = sh.index(ik, it, ir, jt, 0);
                    let row = &data[base..base + sh.z_r];
                    let rxs = &ar[ir * sh.z_r..(ir + 1) * sh.z_r];
                    let inner: Complex64 = row.iter().zip(rxs).map(|(s, a)| s * a).sum();
                    total += inner * at[it * sh.z_t + jt];
                }
            }
        }
    }
    total
}

/// Backprojection at arbitrary points, one independent sum per point.
pub fn bp_points(e: &EchoTensor, points: &[Point3]) -> Vec<Complex64> {
    let layout = e.layout();
    let tx = layout.positions(Side::Tx);
    let rx = layout.positions(Side::Rx);
    let ks = e.freqs().wavenumbers();
    let sh = EchoShape::of(layout, e.freqs());
    points.par_iter().map(|p| bp_point(e, &ks, &tx, &rx, &sh, p)).collect()
}

fn check_layout(e: &EchoTensor, layout: &ArrayLayout) -> Result<()> {
    if e.layout() != layout {
        return Err(Error::invalid("echo layout differs from the reconstruction layout"));
    }
    Ok(())
}

pub fn reconstruct_bp(e: &EchoTensor, layout: &ArrayLayout, grid: &GridSpec) -> Result<ImageVolume> {
    check_layout(e, layout)?;
    let [nx, ny, nz] = grid.shape();
    let mut points = Vec::with_capacity(grid.len());
    for ix in 0..nx {
        for iy in 0..ny {
            for iz in 0..nz {
                points.push(grid.point(ix, iy, iz));
            }
        }
    }
    let data = bp_points(e, &points);
    let hash = crate::io::config_hash(&format!("bp {grid:?}"));
    ImageVolume::new(*grid, data, Method::Bp, hash)
}

pub fn bp_profile_1d(e: &EchoTensor, layout: &ArrayLayout, line: &LineSpec) -> Result<Vec<Complex64>> {
    check_layout(e, layout)?;
    let points: Vec<Point3> = (0..line.len).map(|i| line.point(i)).collect();
    Ok(bp_points(e, &points))
}

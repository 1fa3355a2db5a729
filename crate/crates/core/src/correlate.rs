//! Dense 3D correlation over scalar grids and the Gaussian stencil.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::voxel::{Dims, ScalarGrid};

/// A cubic correlation stencil with odd side length.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel3 {
    side: usize,
    weights: Vec<f64>,
}

impl Kernel3 {
    pub fn new(side: usize, weights: Vec<f64>) -> Result<Self> {
        if side == 0 || side % 2 == 0 {
            return Err(Error::invalid(format!(
                "kernel side must be odd, got {side}"
            )));
        }
        if weights.len() != side * side * side {
            return Err(Error::invalid(format!(
                "kernel of side {side} needs {} weights, got {}",
                side * side * side,
                weights.len()
            )));
        }
        Ok(Self { side, weights })
    }

    /// Single-cell identity stencil.
    pub fn identity() -> Self {
        Self {
            side: 1,
            weights: vec![1.0],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn radius(&self) -> i64 {
        (self.side / 2) as i64
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at offset `(dx, dy, dz)` with each component in
    /// `-radius..=radius`.
    #[inline]
    pub fn weight(&self, dx: i64, dy: i64, dz: i64) -> f64 {
        let r = self.radius();
        let s = self.side;
        let i = (dx + r) as usize + s * ((dy + r) as usize + s * ((dz + r) as usize));
        self.weights[i]
    }
}

/// Isotropic 3D Gaussian stencil, normalized so the weights sum to one.
/// Interior responses on a 0/1 field therefore stay in [0, 1], with strict
/// interior voxels reading exactly 0 or 1 and boundary voxels in between.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel3D {
    kernel: Kernel3,
    sigma: f64,
}

impl GaussianKernel3D {
    pub fn new(side: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
        }
        let r = (side / 2) as i64;
        let mut weights = Vec::with_capacity(side * side * side);
        let mut sum = 0.0;
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    let d2 = (dx * dx + dy * dy + dz * dz) as f64;
                    let w = (-d2 / (2.0 * sigma * sigma)).exp();
                    weights.push(w);
                    sum += w;
                }
            }
        }
        for w in weights.iter_mut() {
            *w /= sum;
        }
        Ok(Self {
            kernel: Kernel3::new(side, weights)?,
            sigma,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn kernel(&self) -> &Kernel3 {
        &self.kernel
    }
}

impl std::ops::Deref for GaussianKernel3D {
    type Target = Kernel3;

    fn deref(&self) -> &Kernel3 {
        &self.kernel
    }
}

impl Default for GaussianKernel3D {
    /// 5x5x5, sigma of one voxel.
    fn default() -> Self {
        Self::new(5, 1.0).expect("default kernel parameters are valid")
    }
}

/// Sub-box of a grid, `lo` inclusive, `hi` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub lo: Dims,
    pub hi: Dims,
}

impl Region {
    pub fn full(dims: Dims) -> Self {
        Self {
            lo: [0, 0, 0],
            hi: dims,
        }
    }

    fn check(&self, dims: Dims) -> Result<()> {
        for a in 0..3 {
            if self.lo[a] > self.hi[a] || self.hi[a] > dims[a] {
                return Err(Error::RegionOutOfBounds {
                    lo: self.lo,
                    hi: self.hi,
                    dims,
                });
            }
        }
        Ok(())
    }
}

/// Correlates `field` with `kernel`:
///
/// `out(i) = sum_o kernel(o) * field(i + o)`
///
/// Out-of-bounds reads replicate the nearest in-bounds value. When a region
/// is given, only voxels inside it are computed; the rest stay zero. Output
/// voxels are summed in a fixed kernel order, so results are bit-identical
/// regardless of how the work is scheduled across threads.
pub fn correlate3d(
    field: &ScalarGrid,
    kernel: &Kernel3,
    region: Option<Region>,
) -> Result<ScalarGrid> {
    let dims = field.dims;
    let region = region.unwrap_or_else(|| Region::full(dims));
    region.check(dims)?;
    let [nx, ny, nz] = dims;
    let r = kernel.radius();
    let side = kernel.side();
    let mut out = ScalarGrid::zeros(dims);

    let slice_len = nx * ny;
    out.values
        .par_chunks_mut(slice_len)
        .enumerate()
        .for_each(|(z, slice)| {
            if z < region.lo[2] || z >= region.hi[2] {
                return;
            }
            for y in region.lo[1]..region.hi[1] {
                for x in region.lo[0]..region.hi[0] {
                    let mut acc = 0.0;
                    let mut wi = 0;
                    for dz in -r..=r {
                        let sz = (z as i64 + dz).clamp(0, nz as i64 - 1) as usize;
                        for dy in -r..=r {
                            let sy = (y as i64 + dy).clamp(0, ny as i64 - 1) as usize;
                            let row = nx * (sy + ny * sz);
                            for dx in -r..=r {
                                let sx = (x as i64 + dx).clamp(0, nx as i64 - 1) as usize;
                                acc += kernel.weights()[wi] * field.values[row + sx];
                                wi += 1;
                            }
                        }
                    }
                    debug_assert_eq!(wi, side * side * side);
                    slice[x + nx * y] = acc;
                }
            }
        });
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Naive seven-loop reference with the same replicate padding.
    pub(crate) fn naive_correlate(field: &ScalarGrid, kernel: &Kernel3) -> ScalarGrid {
        let [nx, ny, nz] = field.dims;
        let r = kernel.radius();
        let mut out = ScalarGrid::zeros(field.dims);
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let mut acc = 0.0;
                    for dz in -r..=r {
                        for dy in -r..=r {
                            for dx in -r..=r {
                                let sx = (x as i64 + dx).clamp(0, nx as i64 - 1) as usize;
                                let sy = (y as i64 + dy).clamp(0, ny as i64 - 1) as usize;
                                let sz = (z as i64 + dz).clamp(0, nz as i64 - 1) as usize;
                                acc += kernel.weight(dx, dy, dz) * field.get(sx, sy, sz);
                            }
                        }
                    }
                    out.set(x, y, z, acc);
                }
            }
        }
        out
    }

    fn random_field(dims: Dims, rng: &mut ChaCha8Rng, integer: bool) -> ScalarGrid {
        let n = dims[0] * dims[1] * dims[2];
        let values = (0..n)
            .map(|_| {
                if integer {
                    rng.gen_range(0..2) as f64
                } else {
                    rng.gen_range(-1.0..1.0)
                }
            })
            .collect();
        ScalarGrid::from_values(dims, values).unwrap()
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let field = random_field([7, 6, 5], &mut rng, false);
        let out = correlate3d(&field, &Kernel3::identity(), None).unwrap();
        assert_eq!(out.values, field.values);
    }

    #[test]
    fn normalized_kernel_preserves_constant_field() {
        let g = GaussianKernel3D::default();
        let field = ScalarGrid::from_values([9, 9, 9], vec![2.5; 9 * 9 * 9]).unwrap();
        let out = correlate3d(&field, g.kernel(), None).unwrap();
        // Replicate padding keeps the constant everywhere, boundary included.
        for &v in &out.values {
            assert!((v - 2.5).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &side in &[3usize, 5] {
            let kernel = Kernel3::new(
                side,
                (0..side * side * side)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect(),
            )
            .unwrap();
            let field = random_field([16, 16, 16], &mut rng, false);
            let fast = correlate3d(&field, &kernel, None).unwrap();
            let slow = naive_correlate(&field, &kernel);
            for (a, b) in fast.values.iter().zip(slow.values.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn integer_fields_match_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let kernel = Kernel3::new(3, vec![1.0; 27]).unwrap();
        let field = random_field([12, 10, 8], &mut rng, true);
        let fast = correlate3d(&field, &kernel, None).unwrap();
        let slow = naive_correlate(&field, &kernel);
        assert_eq!(fast.values, slow.values);
    }

    #[test]
    fn region_limits_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let field = random_field([8, 8, 8], &mut rng, false);
        let kernel = GaussianKernel3D::default();
        let region = Region {
            lo: [2, 3, 1],
            hi: [5, 6, 4],
        };
        let out = correlate3d(&field, kernel.kernel(), Some(region)).unwrap();
        let full = correlate3d(&field, kernel.kernel(), None).unwrap();
        for z in 0..8 {
            for y in 0..8 {
                for x in 0..8 {
                    let inside = (2..5).contains(&x) && (3..6).contains(&y) && (1..4).contains(&z);
                    if inside {
                        assert_eq!(out.get(x, y, z), full.get(x, y, z));
                    } else {
                        assert_eq!(out.get(x, y, z), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn region_out_of_bounds_rejected() {
        let field = ScalarGrid::zeros([4, 4, 4]);
        let region = Region {
            lo: [0, 0, 0],
            hi: [5, 4, 4],
        };
        assert!(matches!(
            correlate3d(&field, &Kernel3::identity(), Some(region)),
            Err(Error::RegionOutOfBounds { .. })
        ));
    }

    #[test]
    fn linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_field([10, 9, 8], &mut rng, false);
        let b = random_field([10, 9, 8], &mut rng, false);
        let kernel = GaussianKernel3D::new(3, 0.8).unwrap();
        let (alpha, beta) = (1.7, -0.4);
        let mixed = ScalarGrid::from_values(
            a.dims,
            a.values
                .iter()
                .zip(b.values.iter())
                .map(|(x, y)| alpha * x + beta * y)
                .collect(),
        )
        .unwrap();
        let lhs = correlate3d(&mixed, kernel.kernel(), None).unwrap();
        let ca = correlate3d(&a, kernel.kernel(), None).unwrap();
        let cb = correlate3d(&b, kernel.kernel(), None).unwrap();
        for i in 0..lhs.values.len() {
            let rhs = alpha * ca.values[i] + beta * cb.values[i];
            assert!((lhs.values[i] - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn translation_equivariance_in_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let dims = [14, 14, 14];
        let base = random_field(dims, &mut rng, false);
        // Shift field content by (1, 2, 1).
        let mut shifted = ScalarGrid::zeros(dims);
        for z in 1..14 {
            for y in 2..14 {
                for x in 1..14 {
                    shifted.set(x, y, z, base.get(x - 1, y - 2, z - 1));
                }
            }
        }
        let kernel = GaussianKernel3D::new(3, 1.0).unwrap();
        let ca = correlate3d(&base, kernel.kernel(), None).unwrap();
        let cb = correlate3d(&shifted, kernel.kernel(), None).unwrap();
        // Compare away from all boundaries of both fields.
        for z in 3..11 {
            for y in 4..11 {
                for x in 3..11 {
                    let a = ca.get(x - 1, y - 2, z - 1);
                    let b = cb.get(x, y, z);
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gaussian_kernel_invariants() {
        for (side, sigma) in [(3usize, 0.6), (5, 1.0), (7, 2.0)] {
            let g = GaussianKernel3D::new(side, sigma).unwrap();
            let total: f64 = g.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            let r = g.radius();
            for dz in -r..=r {
                for dy in -r..=r {
                    for dx in -r..=r {
                        let w = g.weight(dx, dy, dz);
                        assert_eq!(w, g.weight(-dx, dy, dz));
                        assert_eq!(w, g.weight(dx, -dy, dz));
                        assert_eq!(w, g.weight(dx, dy, -dz));
                    }
                }
            }
        }
        assert!(GaussianKernel3D::new(4, 1.0).is_err());
        assert!(GaussianKernel3D::new(5, 0.0).is_err());
    }
}

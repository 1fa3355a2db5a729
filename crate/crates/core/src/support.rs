//! Support-surface detection: the boundary- and upward-masked Gaussian
//! response over the support-source grid.

use crate::correlate::{correlate3d, GaussianKernel3D};
use crate::error::{Error, Result};
use crate::voxel::{build_support_source_grid, ScalarGrid, SceneVoxelGrid};

/// Default band half-width for the boundary test: responses must lie in
/// `(eps, 1 - eps)` to count as a surface voxel.
pub const DEFAULT_SURFACE_EPS: f64 = 0.05;

/// The detected support surface. `values` holds the Gaussian response at
/// surface voxels and zero elsewhere; `surface` lists the nonzero voxels in
/// (z, y, x) scan order.
#[derive(Debug, Clone)]
pub struct SupportField {
    pub values: ScalarGrid,
    pub surface: Vec<[usize; 3]>,
    /// Which grid z layers hold any surface voxel; lets hot loops skip
    /// slabs that contribute exact zeros.
    layer_nonempty: Vec<bool>,
}

impl SupportField {
    pub fn new(values: ScalarGrid, surface: Vec<[usize; 3]>) -> Self {
        let mut layer_nonempty = vec![false; values.dims[2]];
        for &[_, _, z] in &surface {
            layer_nonempty[z] = true;
        }
        Self {
            values,
            surface,
            layer_nonempty,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values.get(x, y, z)
    }

    #[inline]
    pub fn layer_nonempty(&self, z: usize) -> bool {
        self.layer_nonempty[z]
    }

    /// Keeps only surface voxels whose scene label passes `keep`; everything
    /// else is zeroed.
    pub fn restrict_by_label(
        &self,
        scene: &SceneVoxelGrid,
        keep: impl Fn(u8) -> bool,
    ) -> SupportField {
        let mut values = ScalarGrid::zeros(self.values.dims);
        let mut surface = Vec::new();
        for &[x, y, z] in &self.surface {
            if keep(scene.label(x, y, z)) {
                values.set(x, y, z, self.get(x, y, z));
                surface.push([x, y, z]);
            }
        }
        SupportField::new(values, surface)
    }

    /// Surface restricted to floor-labeled voxels. When the label table has
    /// no floor label at all, any upward surface qualifies and the field is
    /// returned unchanged.
    pub fn floor_restricted(&self, scene: &SceneVoxelGrid) -> SupportField {
        if !scene.label_table.has_floor_label() {
            return self.clone();
        }
        self.restrict_by_label(scene, |l| scene.label_table.is_floor(l))
    }
}

/// Whether the voxel directly above `(x, y, z)` along the scene's up axis is
/// free. Above the grid top counts as free.
fn free_above(scene: &SceneVoxelGrid, x: usize, y: usize, z: usize) -> bool {
    let mut v = [x, y, z];
    v[scene.up_axis] += 1;
    if v[scene.up_axis] >= scene.dims[scene.up_axis] {
        return true;
    }
    !scene.occupied(v[0], v[1], v[2])
}

/// Detects support-surface voxels: correlate the support-source grid with a
/// normalized Gaussian, keep responses strictly inside `(eps, 1 - eps)`, and
/// mask to affordable voxels that have free space directly above.
pub fn detect_support_surface(
    scene: &SceneVoxelGrid,
    kernel: &GaussianKernel3D,
    eps: f64,
) -> Result<SupportField> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::invalid(format!(
            "surface eps must lie in (0, 0.5), got {eps}"
        )));
    }
    let vs = build_support_source_grid(scene);
    let response = correlate3d(&vs.to_scalar(), kernel.kernel(), None)?;
    let [nx, ny, nz] = scene.dims;
    let mut values = ScalarGrid::zeros(scene.dims);
    let mut surface = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let b = response.get(x, y, z);
                if b > eps
                    && b < 1.0 - eps
                    && scene.label_table.is_affordable(scene.label(x, y, z))
                    && free_above(scene, x, y, z)
                {
                    values.set(x, y, z, b);
                    surface.push([x, y, z]);
                }
            }
        }
    }
    Ok(SupportField::new(values, surface))
}

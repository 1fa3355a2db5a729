//! Labeled scene voxel grids, derived binary grids, and the `.svx` format.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

pub type Dims = [usize; 3];

/// One entry of the label-table sidecar JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelDef {
    pub label: u8,
    pub name: String,
    pub occupies_space: bool,
    pub affordable: bool,
}

/// Per-label flags, indexed by label byte. Label 0 is reserved for empty
/// space and may not be redefined.
#[derive(Debug, Clone)]
pub struct LabelTable {
    defs: Vec<LabelDef>,
    known: [bool; 256],
    occupies: [bool; 256],
    affordable: [bool; 256],
    floor: [bool; 256],
}

impl LabelTable {
    pub fn new(defs: Vec<LabelDef>) -> Result<Self> {
        let mut known = [false; 256];
        let mut occupies = [false; 256];
        let mut affordable = [false; 256];
        let mut floor = [false; 256];
        known[0] = true;
        for d in &defs {
            if d.label == 0 {
                return Err(Error::invalid("label 0 is reserved for empty space"));
            }
            if known[d.label as usize] {
                return Err(Error::invalid(format!("duplicate label {}", d.label)));
            }
            known[d.label as usize] = true;
            occupies[d.label as usize] = d.occupies_space;
            affordable[d.label as usize] = d.affordable;
            floor[d.label as usize] = d.name.eq_ignore_ascii_case("floor");
        }
        Ok(Self {
            defs,
            known,
            occupies,
            affordable,
            floor,
        })
    }

    pub fn defs(&self) -> &[LabelDef] {
        &self.defs
    }

    pub fn is_known(&self, label: u8) -> bool {
        self.known[label as usize]
    }

    pub fn occupies_space(&self, label: u8) -> bool {
        self.occupies[label as usize]
    }

    pub fn is_affordable(&self, label: u8) -> bool {
        self.affordable[label as usize]
    }

    pub fn is_floor(&self, label: u8) -> bool {
        self.floor[label as usize]
    }

    pub fn has_floor_label(&self) -> bool {
        self.defs.iter().any(|d| self.floor[d.label as usize])
    }
}

/// Reads the label-table sidecar JSON.
pub fn load_label_table(path: &Path) -> Result<LabelTable> {
    let text = std::fs::read_to_string(path)?;
    let defs: Vec<LabelDef> = serde_json::from_str(&text)?;
    LabelTable::new(defs)
}

pub fn save_label_table(path: &Path, table: &LabelTable) -> Result<()> {
    let text = serde_json::to_string_pretty(table.defs())?;
    crate::io::write_atomic(path, text.as_bytes())
}

/// A labeled occupancy grid over an axis-aligned box of space. Voxels are
/// cubes of `voxel_size` meters; `origin` is the world position of the
/// low corner of voxel (0, 0, 0); labels are stored x-fastest.
#[derive(Debug, Clone)]
pub struct SceneVoxelGrid {
    pub dims: Dims,
    pub voxel_size: f64,
    pub origin: Vector3<f64>,
    pub up_axis: usize,
    labels: Vec<u8>,
    pub label_table: LabelTable,
}

impl SceneVoxelGrid {
    pub fn new(
        dims: Dims,
        voxel_size: f64,
        origin: Vector3<f64>,
        up_axis: usize,
        labels: Vec<u8>,
        label_table: LabelTable,
    ) -> Result<Self> {
        if !(voxel_size > 0.0) || !voxel_size.is_finite() {
            return Err(Error::invalid(format!(
                "voxel_size must be > 0, got {voxel_size}"
            )));
        }
        if up_axis > 2 {
            return Err(Error::invalid(format!(
                "up_axis must be 0, 1 or 2, got {up_axis}"
            )));
        }
        let count = dims[0]
            .checked_mul(dims[1])
            .and_then(|n| n.checked_mul(dims[2]))
            .ok_or_else(|| Error::invalid("grid dimensions overflow"))?;
        if count == 0 {
            return Err(Error::invalid("grid dimensions must all be positive"));
        }
        if labels.len() != count {
            return Err(Error::invalid(format!(
                "label buffer holds {} voxels, dims imply {count}",
                labels.len()
            )));
        }
        for &l in &labels {
            if !label_table.is_known(l) {
                return Err(Error::invalid(format!(
                    "label {l} appears in the grid but not in the label table"
                )));
            }
        }
        Ok(Self {
            dims,
            voxel_size,
            origin,
            up_axis,
            labels,
            label_table,
        })
    }

    /// All-empty grid, handy for fixtures.
    pub fn empty(
        dims: Dims,
        voxel_size: f64,
        origin: Vector3<f64>,
        up_axis: usize,
        label_table: LabelTable,
    ) -> Result<Self> {
        let count = dims[0] * dims[1] * dims[2];
        Self::new(dims, voxel_size, origin, up_axis, vec![0; count], label_table)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize, z: usize) -> u8 {
        self.labels[self.index(x, y, z)]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn set_label(&mut self, x: usize, y: usize, z: usize, label: u8) -> Result<()> {
        if !self.label_table.is_known(label) {
            return Err(Error::invalid(format!("unknown label {label}")));
        }
        let i = self.index(x, y, z);
        self.labels[i] = label;
        Ok(())
    }

    /// Fills an axis-aligned box `[lo, hi)` with one label.
    pub fn fill_box(&mut self, lo: Dims, hi: Dims, label: u8) -> Result<()> {
        if !self.label_table.is_known(label) {
            return Err(Error::invalid(format!("unknown label {label}")));
        }
        if hi[0] > self.dims[0] || hi[1] > self.dims[1] || hi[2] > self.dims[2] {
            return Err(Error::invalid("fill box exceeds grid dims"));
        }
        for z in lo[2]..hi[2] {
            for y in lo[1]..hi[1] {
                for x in lo[0]..hi[0] {
                    let i = self.index(x, y, z);
                    self.labels[i] = label;
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn in_bounds(&self, v: [i64; 3]) -> bool {
        (0..3).all(|a| v[a] >= 0 && (v[a] as usize) < self.dims[a])
    }

    /// World position to containing voxel index (floor).
    pub fn world_to_voxel(&self, w: &Vector3<f64>) -> [i64; 3] {
        [
            ((w.x - self.origin.x) / self.voxel_size).floor() as i64,
            ((w.y - self.origin.y) / self.voxel_size).floor() as i64,
            ((w.z - self.origin.z) / self.voxel_size).floor() as i64,
        ]
    }

    /// Center of a voxel in world coordinates.
    pub fn voxel_to_world(&self, v: [i64; 3]) -> Vector3<f64> {
        Vector3::new(
            self.origin.x + (v[0] as f64 + 0.5) * self.voxel_size,
            self.origin.y + (v[1] as f64 + 0.5) * self.voxel_size,
            self.origin.z + (v[2] as f64 + 0.5) * self.voxel_size,
        )
    }

    pub fn occupied(&self, x: usize, y: usize, z: usize) -> bool {
        self.label_table.occupies_space(self.label(x, y, z))
    }
}

/// Semantics tag carried by derived binary grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridSemantics {
    /// 1 = occupied, 0 = free space.
    FreeSpace,
    /// 0 = affordable object, 1 = everything else (including empty space).
    SupportSource,
    /// 1 = detected surface voxel.
    SurfaceMask,
}

/// A 0/1 grid with the same dims as its parent scene.
#[derive(Debug, Clone)]
pub struct BinaryGrid {
    pub dims: Dims,
    pub semantics: GridSemantics,
    values: Vec<u8>,
}

impl BinaryGrid {
    pub fn new(dims: Dims, semantics: GridSemantics, values: Vec<u8>) -> Self {
        debug_assert_eq!(values.len(), dims[0] * dims[1] * dims[2]);
        debug_assert!(values.iter().all(|&v| v <= 1));
        Self {
            dims,
            semantics,
            values,
        }
    }

    pub fn zeros(dims: Dims, semantics: GridSemantics) -> Self {
        Self::new(dims, semantics, vec![0; dims[0] * dims[1] * dims[2]])
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.values[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: u8) {
        let i = self.index(x, y, z);
        self.values[i] = v;
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    /// 0/1 values as f64, for correlation.
    pub fn to_scalar(&self) -> ScalarGrid {
        ScalarGrid {
            dims: self.dims,
            values: self.values.iter().map(|&v| v as f64).collect(),
        }
    }
}

/// A dense f64 grid (correlation responses, support fields).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub dims: Dims,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            values: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_values(dims: Dims, values: Vec<f64>) -> Result<Self> {
        if values.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::invalid("scalar grid size mismatch"));
        }
        Ok(Self { dims, values })
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f64) {
        let i = self.index(x, y, z);
        self.values[i] = v;
    }
}

/// V_f: voxel = 1 iff its label occupies space.
pub fn build_free_space_grid(scene: &SceneVoxelGrid) -> BinaryGrid {
    let values = scene
        .labels
        .iter()
        .map(|&l| scene.label_table.occupies_space(l) as u8)
        .collect();
    BinaryGrid::new(scene.dims, GridSemantics::FreeSpace, values)
}

/// V_s: voxel = 0 iff its label is affordable; empty and non-affordable
/// voxels are 1.
pub fn build_support_source_grid(scene: &SceneVoxelGrid) -> BinaryGrid {
    let values = scene
        .labels
        .iter()
        .map(|&l| (!scene.label_table.is_affordable(l)) as u8)
        .collect();
    BinaryGrid::new(scene.dims, GridSemantics::SupportSource, values)
}

// ---------------------------------------------------------------------------
// .svx binary format
// ---------------------------------------------------------------------------

const SVX_MAGIC: &[u8; 4] = b"SVX1";

/// Writes the scene grid in the `.svx` binary layout (little-endian):
/// magic "SVX1"; u32 nx, ny, nz; f64 voxel_size; f64 origin x, y, z;
/// u8 up_axis; then nx*ny*nz label bytes, x-fastest.
pub fn write_svx(path: &Path, scene: &SceneVoxelGrid) -> Result<()> {
    let mut buf = Vec::with_capacity(4 + 12 + 32 + 1 + scene.labels.len());
    buf.extend_from_slice(SVX_MAGIC);
    for d in scene.dims {
        buf.extend_from_slice(&u32::try_from(d).map_err(|_| {
            Error::invalid("grid dimension exceeds u32")
        })?.to_le_bytes());
    }
    buf.extend_from_slice(&scene.voxel_size.to_le_bytes());
    for a in 0..3 {
        buf.extend_from_slice(&scene.origin[a].to_le_bytes());
    }
    buf.push(scene.up_axis as u8);
    buf.extend_from_slice(&scene.labels);
    crate::io::write_atomic(path, &buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Reads a `.svx` file; the label table comes from its sidecar JSON.
pub fn read_svx(path: &Path, label_table: LabelTable) -> Result<SceneVoxelGrid> {
    let file = std::fs::File::open(path)?;
    let mut r = std::io::BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SVX_MAGIC {
        return Err(Error::invalid(format!(
            "{}: bad magic, not an SVX1 file",
            path.display()
        )));
    }
    let nx = read_u32(&mut r)? as usize;
    let ny = read_u32(&mut r)? as usize;
    let nz = read_u32(&mut r)? as usize;
    let voxel_size = read_f64(&mut r)?;
    let origin = Vector3::new(read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?);
    let mut up = [0u8; 1];
    r.read_exact(&mut up)?;
    let count = nx
        .checked_mul(ny)
        .and_then(|n| n.checked_mul(nz))
        .ok_or_else(|| Error::invalid("svx dimensions overflow"))?;
    let mut labels = vec![0u8; count];
    r.read_exact(&mut labels)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::invalid(format!(
            "{}: trailing bytes after label data",
            path.display()
        )));
    }
    SceneVoxelGrid::new(
        [nx, ny, nz],
        voxel_size,
        origin,
        up[0] as usize,
        labels,
        label_table,
    )
}

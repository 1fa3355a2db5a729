//! Pose voxelization, the free-space and support constraints, local argmax
//! pose adjustment, and the validity check behind the geometry score.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::correlate::GaussianKernel3D;
use crate::error::{Error, Result};
use crate::pose::Pose3D;
use crate::skeleton::{PoseCategory, BONES, JOINT_COUNT, PELVIS};
use crate::support::{detect_support_surface, SupportField, DEFAULT_SURFACE_EPS};
use crate::voxel::{build_free_space_grid, BinaryGrid, SceneVoxelGrid};

/// Guard against degenerate inputs blowing up the rasterizer.
const MAX_RELATIVE_OFFSET: i64 = 10_000;

/// Thresholds and search parameters for the constraint engine.
///
/// `t_s` is expressed in summed surface-response units and therefore depends
/// on the voxel resolution and the kernel normalization; the default matches
/// a 0.02 m grid with the sum-normalized 5x5x5 Gaussian.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstraintConfig {
    /// Max tolerated intersecting voxels for the free-space constraint.
    pub t_f: u32,
    /// Min support response for a placement to be valid.
    pub t_s: f64,
    /// Chebyshev radius, in voxels, for the score-time support tests.
    pub support_proximity: i64,
    /// Half-width of the local adjustment window, meters.
    pub search_radius_m: f64,
    /// Chebyshev dilation radius for bone capsules, voxels.
    pub bone_radius: i64,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self {
            t_f: 5,
            t_s: 100.0,
            support_proximity: 8,
            search_radius_m: 0.3,
            bone_radius: 2,
        }
    }
}

impl ConstraintConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_s > 0.0) {
            return Err(Error::invalid(format!("t_s must be > 0, got {}", self.t_s)));
        }
        if self.search_radius_m < 0.0 || !self.search_radius_m.is_finite() {
            return Err(Error::invalid(format!(
                "search_radius_m must be >= 0, got {}",
                self.search_radius_m
            )));
        }
        if self.support_proximity < 0 {
            return Err(Error::invalid("support_proximity must be >= 0"));
        }
        if self.bone_radius < 0 {
            return Err(Error::invalid("bone_radius must be >= 0"));
        }
        Ok(())
    }

    /// Window half-width in voxels for a given grid resolution.
    pub fn search_radius_voxels(&self, voxel_size: f64) -> i64 {
        (self.search_radius_m / voxel_size).round() as i64
    }
}

/// 3D integer line stepping between two cells, both endpoints included.
/// The error terms depend only on absolute deltas, so mirrored endpoints
/// produce mirrored cells.
fn line_cells(a: [i32; 3], b: [i32; 3]) -> Vec<[i32; 3]> {
    let d = [
        (b[0] - a[0]).abs(),
        (b[1] - a[1]).abs(),
        (b[2] - a[2]).abs(),
    ];
    let step = [
        if b[0] >= a[0] { 1 } else { -1 },
        if b[1] >= a[1] { 1 } else { -1 },
        if b[2] >= a[2] { 1 } else { -1 },
    ];
    let n = d[0].max(d[1]).max(d[2]);
    let mut cells = Vec::with_capacity(n as usize + 1);
    let mut p = a;
    if d[0] >= d[1] && d[0] >= d[2] {
        let (mut e1, mut e2) = (2 * d[1] - d[0], 2 * d[2] - d[0]);
        loop {
            cells.push(p);
            if p[0] == b[0] {
                break;
            }
            if e1 >= 0 {
                p[1] += step[1];
                e1 -= 2 * d[0];
            }
            if e2 >= 0 {
                p[2] += step[2];
                e2 -= 2 * d[0];
            }
            e1 += 2 * d[1];
            e2 += 2 * d[2];
            p[0] += step[0];
        }
    } else if d[1] >= d[0] && d[1] >= d[2] {
        let (mut e1, mut e2) = (2 * d[0] - d[1], 2 * d[2] - d[1]);
        loop {
            cells.push(p);
            if p[1] == b[1] {
                break;
            }
            if e1 >= 0 {
                p[0] += step[0];
                e1 -= 2 * d[1];
            }
            if e2 >= 0 {
                p[2] += step[2];
                e2 -= 2 * d[1];
            }
            e1 += 2 * d[0];
            e2 += 2 * d[2];
            p[1] += step[1];
        }
    } else {
        let (mut e1, mut e2) = (2 * d[0] - d[2], 2 * d[1] - d[2]);
        loop {
            cells.push(p);
            if p[2] == b[2] {
                break;
            }
            if e1 >= 0 {
                p[0] += step[0];
                e1 -= 2 * d[2];
            }
            if e2 >= 0 {
                p[1] += step[1];
                e2 -= 2 * d[2];
            }
            e1 += 2 * d[0];
            e2 += 2 * d[1];
            p[2] += step[2];
        }
    }
    cells
}

/// A maximal run of consecutive-x offsets at one (y, z), inclusive bounds.
#[derive(Debug, Clone, Copy)]
struct XRun {
    y: i32,
    z: i32,
    x0: i32,
    x1: i32,
}

/// An axis-aligned box of pelvis-relative offsets, all bounds inclusive.
/// The non-contact cell set is decomposed into disjoint boxes so the window
/// scan can count occupancy with a summed-volume table instead of walking
/// cells.
#[derive(Debug, Clone, Copy)]
struct OffsetBox {
    x0: i32,
    x1: i32,
    y0: i32,
    y1: i32,
    z0: i32,
    z1: i32,
}

impl OffsetBox {
    fn volume(&self) -> u32 {
        ((self.x1 - self.x0 + 1) * (self.y1 - self.y0 + 1) * (self.z1 - self.z0 + 1)) as u32
    }
}

/// A pose rasterized into pelvis-relative voxel offsets.
///
/// Each offset carries a bit mask of the body parts whose bone capsules
/// cover it. Offsets whose mask intersects the category's contact parts form
/// the contact set; the rest are checked against the free-space grid.
#[derive(Debug, Clone)]
pub struct PoseVoxelization {
    pub category: PoseCategory,
    /// Pelvis voxel in grid coordinates at voxelization time.
    pub anchor: [i64; 3],
    /// All offsets with their part masks, sorted by (z, y, x).
    offsets: Vec<([i32; 3], u8)>,
    contact: Vec<[i32; 3]>,
    non_contact: Vec<[i32; 3]>,
    contact_z_groups: Vec<(i32, usize, usize)>,
    non_contact_boxes: Vec<OffsetBox>,
}

impl PoseVoxelization {
    pub fn offsets(&self) -> &[([i32; 3], u8)] {
        &self.offsets
    }

    pub fn contact_offsets(&self) -> &[[i32; 3]] {
        &self.contact
    }

    pub fn non_contact_offsets(&self) -> &[[i32; 3]] {
        &self.non_contact
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

fn extract_x_runs(sorted: &[[i32; 3]]) -> Vec<XRun> {
    let mut runs: Vec<XRun> = Vec::new();
    for &[x, y, z] in sorted {
        match runs.last_mut() {
            Some(r) if r.z == z && r.y == y && r.x1 + 1 == x => r.x1 = x,
            _ => runs.push(XRun { y, z, x0: x, x1: x }),
        }
    }
    runs
}

/// Contiguous ranges of equal z in a (z, y, x)-sorted offset list.
fn z_ranges(sorted: &[[i32; 3]]) -> Vec<(i32, usize, usize)> {
    let mut groups: Vec<(i32, usize, usize)> = Vec::new();
    for (i, &[_, _, z]) in sorted.iter().enumerate() {
        match groups.last_mut() {
            Some((gz, _, end)) if *gz == z => *end = i + 1,
            _ => groups.push((z, i, i + 1)),
        }
    }
    groups
}

/// Greedy exact cover of the cell set by disjoint boxes: identical x-runs on
/// consecutive y rows merge into rectangles, identical rectangles on
/// consecutive z slices merge into boxes. Capsule-shaped sets collapse to a
/// few boxes per bone.
fn decompose_boxes(runs: &[XRun]) -> Vec<OffsetBox> {
    #[derive(Clone, Copy)]
    struct Rect {
        x0: i32,
        x1: i32,
        y0: i32,
        y1: i32,
        z: i32,
    }
    let mut rects: Vec<Rect> = Vec::new();
    let mut open: BTreeMap<(i32, i32), Rect> = BTreeMap::new();
    let mut current_z = None;
    for r in runs {
        if current_z != Some(r.z) {
            rects.extend(open.values().copied());
            open.clear();
            current_z = Some(r.z);
        }
        match open.get_mut(&(r.x0, r.x1)) {
            Some(rect) if rect.y1 + 1 == r.y => rect.y1 = r.y,
            Some(rect) => {
                rects.push(*rect);
                *rect = Rect {
                    x0: r.x0,
                    x1: r.x1,
                    y0: r.y,
                    y1: r.y,
                    z: r.z,
                };
            }
            None => {
                open.insert(
                    (r.x0, r.x1),
                    Rect {
                        x0: r.x0,
                        x1: r.x1,
                        y0: r.y,
                        y1: r.y,
                        z: r.z,
                    },
                );
            }
        }
    }
    rects.extend(open.values().copied());

    rects.sort_by_key(|r| (r.z, r.y0, r.x0, r.y1, r.x1));
    let mut boxes: Vec<OffsetBox> = Vec::new();
    let mut open: BTreeMap<(i32, i32, i32, i32), OffsetBox> = BTreeMap::new();
    let mut current_z = None;
    for r in &rects {
        if current_z != Some(r.z) {
            // Close boxes that did not continue into this slice.
            let mut keep = BTreeMap::new();
            for (k, b) in std::mem::take(&mut open) {
                if b.z1 + 1 == r.z {
                    keep.insert(k, b);
                } else {
                    boxes.push(b);
                }
            }
            open = keep;
            current_z = Some(r.z);
        }
        match open.get_mut(&(r.x0, r.x1, r.y0, r.y1)) {
            Some(b) if b.z1 + 1 == r.z => b.z1 = r.z,
            Some(b) if b.z1 == r.z => unreachable!("duplicate rect in one slice"),
            Some(b) => {
                boxes.push(*b);
                *b = OffsetBox {
                    x0: r.x0,
                    x1: r.x1,
                    y0: r.y0,
                    y1: r.y1,
                    z0: r.z,
                    z1: r.z,
                };
            }
            None => {
                open.insert(
                    (r.x0, r.x1, r.y0, r.y1),
                    OffsetBox {
                        x0: r.x0,
                        x1: r.x1,
                        y0: r.y0,
                        y1: r.y1,
                        z0: r.z,
                        z1: r.z,
                    },
                );
            }
        }
    }
    boxes.extend(open.into_values());
    boxes
}

/// Rasterizes a pose into the grid: every bone becomes an integer line
/// between its joint cells, dilated by a Chebyshev ball of `bone_radius`.
/// Offsets are relative to the pelvis voxel.
pub fn voxelize_pose(
    pose: &Pose3D,
    scene: &SceneVoxelGrid,
    cfg: &ConstraintConfig,
) -> Result<PoseVoxelization> {
    let pelvis = pose.pelvis();
    let anchor = scene.world_to_voxel(&pelvis);
    let mut rel = [[0i32; 3]; JOINT_COUNT];
    for (j, w) in pose.joints().iter().enumerate() {
        let r = (w - pelvis) / scene.voxel_size;
        for a in 0..3 {
            let v = r[a].round();
            if !v.is_finite() || v.abs() as i64 > MAX_RELATIVE_OFFSET {
                return Err(Error::DegeneratePose(format!(
                    "joint {j} lies {v} voxels from the pelvis"
                )));
            }
            rel[j][a] = v as i32;
        }
    }
    debug_assert_eq!(rel[PELVIS], [0, 0, 0]);

    // Key order (z, y, x) keeps the final offset list sorted for run
    // extraction and fixed summation order.
    let mut cells: BTreeMap<(i32, i32, i32), u8> = BTreeMap::new();
    let br = cfg.bone_radius as i32;
    for bone in BONES {
        let part = bone.part.bit();
        for cell in line_cells(rel[bone.a], rel[bone.b]) {
            for dz in -br..=br {
                for dy in -br..=br {
                    for dx in -br..=br {
                        let key = (cell[2] + dz, cell[1] + dy, cell[0] + dx);
                        *cells.entry(key).or_insert(0) |= part;
                    }
                }
            }
        }
    }

    let contact_parts = pose.category.contact_parts();
    let mut offsets = Vec::with_capacity(cells.len());
    let mut contact = Vec::new();
    let mut non_contact = Vec::new();
    for (&(z, y, x), &mask) in &cells {
        offsets.push(([x, y, z], mask));
        if mask & contact_parts != 0 {
            contact.push([x, y, z]);
        } else {
            non_contact.push([x, y, z]);
        }
    }
    let contact_z_groups = z_ranges(&contact);
    let non_contact_boxes = decompose_boxes(&extract_x_runs(&non_contact));
    Ok(PoseVoxelization {
        category: pose.category,
        anchor,
        offsets,
        contact,
        non_contact,
        contact_z_groups,
        non_contact_boxes,
    })
}

/// Free-space response: how many non-contact body voxels land on occupied
/// scene voxels when the pelvis sits at `anchor`. Offsets outside the grid
/// count as occupied.
pub fn free_space_response(vox: &PoseVoxelization, v_f: &BinaryGrid, anchor: [i64; 3]) -> u32 {
    let [nx, ny, nz] = v_f.dims;
    let mut count = 0u32;
    for &[ox, oy, oz] in &vox.non_contact {
        let x = anchor[0] + ox as i64;
        let y = anchor[1] + oy as i64;
        let z = anchor[2] + oz as i64;
        if x < 0 || y < 0 || z < 0 || x >= nx as i64 || y >= ny as i64 || z >= nz as i64 {
            count += 1;
        } else {
            count += v_f.get(x as usize, y as usize, z as usize) as u32;
        }
    }
    count
}

/// Support response: the summed surface field under the contact voxels when
/// the pelvis sits at `anchor`. Offsets outside the grid contribute zero.
///
/// Contact voxels are visited in (z, y, x) order; slabs whose grid layer
/// holds no surface voxel are skipped, which leaves the IEEE sum bit-for-bit
/// unchanged because every skipped term is exactly zero.
pub fn support_response(vox: &PoseVoxelization, field: &SupportField, anchor: [i64; 3]) -> f64 {
    let [nx, ny, nz] = field.values.dims;
    let mut acc = 0.0;
    for &(oz, start, end) in &vox.contact_z_groups {
        let z = anchor[2] + oz as i64;
        if z < 0 || z >= nz as i64 || !field.layer_nonempty(z as usize) {
            continue;
        }
        let z = z as usize;
        for &[ox, oy, _] in &vox.contact[start..end] {
            let x = anchor[0] + ox as i64;
            let y = anchor[1] + oy as i64;
            if x >= 0 && y >= 0 && x < nx as i64 && y < ny as i64 {
                acc += field.get(x as usize, y as usize, z);
            }
        }
    }
    acc
}

/// Summed-volume table over the free-space grid: occupied-cell counts of
/// axis-aligned boxes in eight lookups, which turns the window scan's
/// response into a handful of table queries per pose box.
#[derive(Debug, Clone)]
struct FreeSpaceIndex {
    dims: [usize; 3],
    /// `sums[x + (nx+1) * (y + (ny+1) * z)]` counts occupied cells in
    /// `[0, x) x [0, y) x [0, z)`.
    sums: Vec<u32>,
}

impl FreeSpaceIndex {
    fn build(v_f: &BinaryGrid) -> Self {
        let [nx, ny, nz] = v_f.dims;
        let (sx, sy) = (nx + 1, ny + 1);
        let mut sums = vec![0u32; sx * sy * (nz + 1)];
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let v = v_f.get(x, y, z) as u32;
                    sums[(x + 1) + sx * ((y + 1) + sy * (z + 1))] = v
                        + sums[x + sx * ((y + 1) + sy * (z + 1))]
                        + sums[(x + 1) + sx * (y + sy * (z + 1))]
                        + sums[(x + 1) + sx * ((y + 1) + sy * z)]
                        - sums[x + sx * (y + sy * (z + 1))]
                        - sums[x + sx * ((y + 1) + sy * z)]
                        - sums[(x + 1) + sx * (y + sy * z)]
                        + sums[x + sx * (y + sy * z)];
                }
            }
        }
        Self { dims: v_f.dims, sums }
    }

    /// Occupied count inside the in-bounds box [x0..=x1] x [y0..=y1] x
    /// [z0..=z1] (all usize, inclusive).
    #[inline]
    fn box_count(&self, x0: usize, x1: usize, y0: usize, y1: usize, z0: usize, z1: usize) -> u32 {
        let sx = self.dims[0] + 1;
        let sy = self.dims[1] + 1;
        let at = |x: usize, y: usize, z: usize| self.sums[x + sx * (y + sy * z)];
        at(x1 + 1, y1 + 1, z1 + 1)
            .wrapping_sub(at(x0, y1 + 1, z1 + 1))
            .wrapping_sub(at(x1 + 1, y0, z1 + 1))
            .wrapping_sub(at(x1 + 1, y1 + 1, z0))
            .wrapping_add(at(x0, y0, z1 + 1))
            .wrapping_add(at(x0, y1 + 1, z0))
            .wrapping_add(at(x1 + 1, y0, z0))
            .wrapping_sub(at(x0, y0, z0))
    }

    /// Free-space response via the box decomposition; exactly equal to
    /// [`free_space_response`]. Out-of-grid cells count as occupied.
    fn response(&self, vox: &PoseVoxelization, anchor: [i64; 3]) -> u32 {
        let [nx, ny, nz] = self.dims;
        let mut count = 0u32;
        for b in &vox.non_contact_boxes {
            let x0 = anchor[0] + b.x0 as i64;
            let x1 = anchor[0] + b.x1 as i64;
            let y0 = anchor[1] + b.y0 as i64;
            let y1 = anchor[1] + b.y1 as i64;
            let z0 = anchor[2] + b.z0 as i64;
            let z1 = anchor[2] + b.z1 as i64;
            let volume = b.volume();
            let cx0 = x0.max(0);
            let cx1 = x1.min(nx as i64 - 1);
            let cy0 = y0.max(0);
            let cy1 = y1.min(ny as i64 - 1);
            let cz0 = z0.max(0);
            let cz1 = z1.min(nz as i64 - 1);
            if cx0 > cx1 || cy0 > cy1 || cz0 > cz1 {
                count += volume;
                continue;
            }
            let inside =
                ((cx1 - cx0 + 1) * (cy1 - cy0 + 1) * (cz1 - cz0 + 1)) as u32;
            count += volume - inside
                + self.box_count(
                    cx0 as usize,
                    cx1 as usize,
                    cy0 as usize,
                    cy1 as usize,
                    cz0 as usize,
                    cz1 as usize,
                );
        }
        count
    }
}

/// Precomputed per-scene grids shared by the whole pipeline: the free-space
/// grid, the support surface field, and its floor-only restriction.
#[derive(Debug, Clone)]
pub struct SceneGrids {
    pub scene: SceneVoxelGrid,
    pub v_f: BinaryGrid,
    pub support: SupportField,
    pub floor: SupportField,
    index: FreeSpaceIndex,
}

impl SceneGrids {
    pub fn build(scene: SceneVoxelGrid) -> Result<Self> {
        Self::build_with(scene, &GaussianKernel3D::default(), DEFAULT_SURFACE_EPS)
    }

    pub fn build_with(
        scene: SceneVoxelGrid,
        kernel: &GaussianKernel3D,
        eps: f64,
    ) -> Result<Self> {
        let v_f = build_free_space_grid(&scene);
        let support = detect_support_surface(&scene, kernel, eps)?;
        let floor = support.floor_restricted(&scene);
        let index = FreeSpaceIndex::build(&v_f);
        Ok(Self {
            scene,
            v_f,
            support,
            floor,
            index,
        })
    }

    /// The surface field a pose of this category must rest on: standing
    /// poses bind to the floor, sitting poses to any affordable surface.
    pub fn support_for(&self, category: PoseCategory) -> &SupportField {
        match category {
            PoseCategory::Standing => &self.floor,
            PoseCategory::Sitting => &self.support,
        }
    }
}

/// A successful local adjustment.
#[derive(Debug, Clone)]
pub struct Adjusted {
    pub pose: Pose3D,
    /// Applied translation in voxels.
    pub translation: [i64; 3],
    pub r_f: u32,
    pub r_s: f64,
}

/// Why a pose was discarded, with the best responses seen in the window.
#[derive(Debug, Clone, Copy)]
pub struct DiscardInfo {
    /// Smallest free-space response over the window.
    pub best_r_f: u32,
    /// Largest support response among feasible translations, if any were.
    pub best_r_s: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum AdjustOutcome {
    Adjusted(Adjusted),
    Discarded(DiscardInfo),
}

#[derive(Clone, Copy)]
struct Candidate {
    delta: [i64; 3],
    d2: i64,
    r_f: u32,
    r_s: f64,
}

impl Candidate {
    /// Strict total order: higher support first, then smaller displacement,
    /// then lexicographically smaller offset.
    fn beats(&self, other: &Candidate) -> bool {
        if self.r_s != other.r_s {
            return self.r_s > other.r_s;
        }
        if self.d2 != other.d2 {
            return self.d2 < other.d2;
        }
        self.delta < other.delta
    }
}

/// Scans every integer translation within the search window, keeps those
/// whose free-space response stays within `t_f`, and picks the one with the
/// maximal support response. Ties break toward the smallest displacement and
/// then lexicographically, so the zero translation wins when the input is
/// already optimal. Returns `Discarded` when no feasible translation reaches
/// `t_s`.
pub fn adjust_pose(
    pose: &Pose3D,
    grids: &SceneGrids,
    cfg: &ConstraintConfig,
) -> Result<AdjustOutcome> {
    cfg.validate()?;
    let vox = voxelize_pose(pose, &grids.scene, cfg)?;
    let field = grids.support_for(pose.category);
    let rv = cfg.search_radius_voxels(grids.scene.voxel_size);

    let (best, min_r_f) = (-rv..=rv)
        .into_par_iter()
        .map(|dz| {
            let mut best: Option<Candidate> = None;
            let mut min_r_f = u32::MAX;
            for dy in -rv..=rv {
                for dx in -rv..=rv {
                    let delta = [dx, dy, dz];
                    let anchor = [
                        vox.anchor[0] + dx,
                        vox.anchor[1] + dy,
                        vox.anchor[2] + dz,
                    ];
                    let r_f = grids.index.response(&vox, anchor);
                    min_r_f = min_r_f.min(r_f);
                    if r_f > cfg.t_f {
                        continue;
                    }
                    let cand = Candidate {
                        delta,
                        d2: dx * dx + dy * dy + dz * dz,
                        r_f,
                        r_s: support_response(&vox, field, anchor),
                    };
                    if best.map_or(true, |b| cand.beats(&b)) {
                        best = Some(cand);
                    }
                }
            }
            (best, min_r_f)
        })
        .reduce(
            || (None, u32::MAX),
            |(a, fa), (b, fb)| {
                let best = match (a, b) {
                    (Some(a), Some(b)) => Some(if b.beats(&a) { b } else { a }),
                    (a, b) => a.or(b),
                };
                (best, fa.min(fb))
            },
        );

    match best {
        Some(cand) if cand.r_s >= cfg.t_s => {
            let shift = Vector3::new(
                cand.delta[0] as f64 * grids.scene.voxel_size,
                cand.delta[1] as f64 * grids.scene.voxel_size,
                cand.delta[2] as f64 * grids.scene.voxel_size,
            );
            Ok(AdjustOutcome::Adjusted(Adjusted {
                pose: pose.translated(shift),
                translation: cand.delta,
                r_f: cand.r_f,
                r_s: cand.r_s,
            }))
        }
        Some(cand) => Ok(AdjustOutcome::Discarded(DiscardInfo {
            best_r_f: min_r_f,
            best_r_s: Some(cand.r_s),
        })),
        None => Ok(AdjustOutcome::Discarded(DiscardInfo {
            best_r_f: min_r_f,
            best_r_s: None,
        })),
    }
}

/// Support evidence reported by [`check_pose`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportEvidence {
    /// Chebyshev distance from the nearest foot voxel to the nearest floor
    /// surface voxel, when one lies within the proximity radius.
    Standing { nearest_floor_distance: Option<i64> },
    /// Best support response over placements within the proximity radius.
    Sitting { best_response: f64 },
}

/// Validity report for one pose in a scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckReport {
    pub free_ok: bool,
    pub support_ok: bool,
    pub r_f: u32,
    pub support: SupportEvidence,
}

impl CheckReport {
    pub fn valid(&self) -> bool {
        self.free_ok && self.support_ok
    }
}

/// Checks both constraints at the pose's current location: the free-space
/// response must stay within `t_f`; standing poses need a floor surface
/// voxel within `support_proximity` (Chebyshev) of a foot voxel, sitting
/// poses a placement within that radius whose support response reaches `t_s`.
pub fn check_pose(
    pose: &Pose3D,
    grids: &SceneGrids,
    cfg: &ConstraintConfig,
) -> Result<CheckReport> {
    cfg.validate()?;
    let vox = voxelize_pose(pose, &grids.scene, cfg)?;
    let anchor = vox.anchor;
    let r_f = free_space_response(&vox, &grids.v_f, anchor);
    let free_ok = r_f <= cfg.t_f;

    let support = match pose.category {
        PoseCategory::Standing => {
            let nearest = nearest_surface_distance(
                &vox,
                &grids.floor,
                anchor,
                cfg.support_proximity,
            );
            SupportEvidence::Standing {
                nearest_floor_distance: nearest,
            }
        }
        PoseCategory::Sitting => {
            let r = cfg.support_proximity;
            let mut best = f64::NEG_INFINITY;
            for dz in -r..=r {
                for dy in -r..=r {
                    for dx in -r..=r {
                        let a = [anchor[0] + dx, anchor[1] + dy, anchor[2] + dz];
                        let v = support_response(&vox, &grids.support, a);
                        if v > best {
                            best = v;
                        }
                    }
                }
            }
            SupportEvidence::Sitting {
                best_response: best,
            }
        }
    };
    let support_ok = match support {
        SupportEvidence::Standing {
            nearest_floor_distance,
        } => nearest_floor_distance.is_some(),
        SupportEvidence::Sitting { best_response } => best_response >= cfg.t_s,
    };
    Ok(CheckReport {
        free_ok,
        support_ok,
        r_f,
        support,
    })
}

/// Smallest Chebyshev distance from any contact voxel to a surface voxel,
/// searched up to `radius`; `None` when no surface voxel lies that close.
fn nearest_surface_distance(
    vox: &PoseVoxelization,
    field: &SupportField,
    anchor: [i64; 3],
    radius: i64,
) -> Option<i64> {
    let [nx, ny, nz] = field.values.dims;
    let mut best: Option<i64> = None;
    for &[ox, oy, oz] in &vox.contact {
        let cx = anchor[0] + ox as i64;
        let cy = anchor[1] + oy as i64;
        let cz = anchor[2] + oz as i64;
        for dz in -radius..=radius {
            let z = cz + dz;
            if z < 0 || z >= nz as i64 {
                continue;
            }
            for dy in -radius..=radius {
                let y = cy + dy;
                if y < 0 || y >= ny as i64 {
                    continue;
                }
                for dx in -radius..=radius {
                    let x = cx + dx;
                    if x < 0 || x >= nx as i64 {
                        continue;
                    }
                    if field.get(x as usize, y as usize, z as usize) > 0.0 {
                        let d = dx.abs().max(dy.abs()).max(dz.abs());
                        if best.map_or(true, |b| d < b) {
                            best = Some(d);
                        }
                    }
                }
            }
        }
    }
    best
}

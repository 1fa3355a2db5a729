//! Exact rasterization of skeleton depth heat maps: every pixel on a bone
//! carries the interpolated joint-chain depth, everything else is -1.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::skeleton::{BONES, JOINT_COUNT};

/// Background value for pixels not covered by any bone.
pub const BACKGROUND_DEPTH: f64 = -1.0;

/// A rendered depth heat map, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthHeatmap {
    pub h: usize,
    pub w: usize,
    pub values: Vec<f64>,
}

impl DepthHeatmap {
    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.w + x]
    }
}

/// Rasterizes the 16 skeleton bones into an `h` by `w` map. Each bone is a
/// one-pixel-wide segment between its joints' rounded pixels; the value at a
/// step is the linear interpolation of the endpoint depths by arclength
/// fraction. Where bones overlap, the smaller depth wins. Joints may project
/// outside the image; those steps are clipped but the interpolation still
/// walks the full segment.
pub fn render_depth_heatmap(
    joints2d: &[[f64; 2]; JOINT_COUNT],
    depths: &[f64; JOINT_COUNT],
    h: usize,
    w: usize,
) -> Result<DepthHeatmap> {
    if h == 0 || w == 0 {
        return Err(Error::invalid("depth map dims must be positive"));
    }
    for (j, (p, d)) in joints2d.iter().zip(depths.iter()).enumerate() {
        if !(p[0].is_finite() && p[1].is_finite() && d.is_finite()) {
            return Err(Error::invalid(format!(
                "joint {j} has non-finite pixel or depth"
            )));
        }
    }
    let mut map = DepthHeatmap {
        h,
        w,
        values: vec![BACKGROUND_DEPTH; h * w],
    };
    let mut plot = |x: i64, y: i64, depth: f64| {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            return;
        }
        let i = y as usize * w + x as usize;
        let cur = map.values[i];
        if cur == BACKGROUND_DEPTH || depth < cur {
            map.values[i] = depth;
        }
    };
    for bone in BONES {
        let (a, b) = (joints2d[bone.a], joints2d[bone.b]);
        let (da, db) = (depths[bone.a], depths[bone.b]);
        let (x0, y0) = (a[0].round() as i64, a[1].round() as i64);
        let (x1, y1) = (b[0].round() as i64, b[1].round() as i64);
        let steps = (x1 - x0).abs().max((y1 - y0).abs());
        if steps == 0 {
            plot(x0, y0, da.min(db));
            continue;
        }
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let x = x0 as f64 + (x1 - x0) as f64 * t;
            let y = y0 as f64 + (y1 - y0) as f64 * t;
            plot(x.round() as i64, y.round() as i64, da + (db - da) * t);
        }
    }
    Ok(map)
}

// ---------------------------------------------------------------------------
// .dhm binary format
// ---------------------------------------------------------------------------

const DHM_MAGIC: &[u8; 4] = b"DHM1";

/// Writes a depth heat map: magic "DHM1"; u32 h, w; f64 values row-major.
/// Little-endian.
pub fn write_dhm(path: &Path, map: &DepthHeatmap) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + map.values.len() * 8);
    buf.extend_from_slice(DHM_MAGIC);
    buf.extend_from_slice(
        &u32::try_from(map.h)
            .map_err(|_| Error::invalid("depth map height exceeds u32"))?
            .to_le_bytes(),
    );
    buf.extend_from_slice(
        &u32::try_from(map.w)
            .map_err(|_| Error::invalid("depth map width exceeds u32"))?
            .to_le_bytes(),
    );
    for v in &map.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    crate::io::write_atomic(path, &buf)
}

pub fn read_dhm(path: &Path) -> Result<DepthHeatmap> {
    let file = std::fs::File::open(path)?;
    let mut r = std::io::BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DHM_MAGIC {
        return Err(Error::invalid(format!(
            "{}: bad magic, not a DHM1 file",
            path.display()
        )));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let h = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let w = u32::from_le_bytes(b4) as usize;
    let count = h
        .checked_mul(w)
        .ok_or_else(|| Error::invalid("dhm dimensions overflow"))?;
    let mut values = Vec::with_capacity(count);
    let mut b8 = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut b8)?;
        values.push(f64::from_le_bytes(b8));
    }
    Ok(DepthHeatmap { h, w, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton;

    /// A pose whose bones are laid out on integer pixels, far apart enough
    /// that no two bones overlap except at shared joints.
    fn fixture() -> ([[f64; 2]; JOINT_COUNT], [f64; JOINT_COUNT]) {
        let mut px = [[0.0; 2]; JOINT_COUNT];
        let mut d = [0.0; JOINT_COUNT];
        // Spread joints over a 64x64 image; a plain vertical chain plus legs
        // and arms at distinct rows.
        px[skeleton::PELVIS] = [32.0, 32.0];
        px[skeleton::R_HIP] = [28.0, 32.0];
        px[skeleton::R_KNEE] = [28.0, 42.0];
        px[skeleton::R_ANKLE] = [28.0, 52.0];
        px[skeleton::L_HIP] = [36.0, 32.0];
        px[skeleton::L_KNEE] = [36.0, 42.0];
        px[skeleton::L_ANKLE] = [36.0, 52.0];
        px[skeleton::SPINE] = [32.0, 26.0];
        px[skeleton::THORAX] = [32.0, 20.0];
        px[skeleton::NECK] = [32.0, 16.0];
        px[skeleton::HEAD] = [32.0, 10.0];
        px[skeleton::L_SHOULDER] = [38.0, 20.0];
        px[skeleton::L_ELBOW] = [44.0, 24.0];
        px[skeleton::L_WRIST] = [50.0, 28.0];
        px[skeleton::R_SHOULDER] = [26.0, 20.0];
        px[skeleton::R_ELBOW] = [20.0, 24.0];
        px[skeleton::R_WRIST] = [14.0, 28.0];
        for (j, dj) in d.iter_mut().enumerate() {
            *dj = 2.0 + 0.1 * j as f64;
        }
        (px, d)
    }

    #[test]
    fn joint_pixels_carry_joint_depths() {
        let (px, d) = fixture();
        let map = render_depth_heatmap(&px, &d, 64, 64).unwrap();
        // Leaf joints belong to exactly one bone, so their pixels must hold
        // their own depth exactly.
        for j in [
            skeleton::HEAD,
            skeleton::R_ANKLE,
            skeleton::L_ANKLE,
            skeleton::R_WRIST,
            skeleton::L_WRIST,
        ] {
            assert_eq!(map.get(px[j][1] as usize, px[j][0] as usize), d[j]);
        }
    }

    #[test]
    fn bone_midpoint_interpolates() {
        let (px, d) = fixture();
        let map = render_depth_heatmap(&px, &d, 64, 64).unwrap();
        // Midpoint of the right thigh (28, 32) -> (28, 42): pixel (28, 37).
        let expect = (d[skeleton::R_HIP] + d[skeleton::R_KNEE]) / 2.0;
        assert_eq!(map.get(37, 28), expect);
    }

    #[test]
    fn background_is_minus_one() {
        let (px, d) = fixture();
        let map = render_depth_heatmap(&px, &d, 64, 64).unwrap();
        assert_eq!(map.get(0, 0), BACKGROUND_DEPTH);
        assert_eq!(map.get(63, 63), BACKGROUND_DEPTH);
        let covered = map
            .values
            .iter()
            .filter(|&&v| v != BACKGROUND_DEPTH)
            .count();
        assert!(covered > 50, "skeleton should cover many pixels");
    }

    #[test]
    fn overlap_keeps_minimum_depth() {
        // Two bones crossing at one pixel: collapse the pose to make the
        // right arm and left arm cross at (32, 24).
        let mut px = [[100.0, 100.0]; JOINT_COUNT];
        let mut d = [5.0; JOINT_COUNT];
        px[skeleton::THORAX] = [32.0, 20.0];
        px[skeleton::L_SHOULDER] = [28.0, 28.0]; // crosses x=30..32 diagonal
        px[skeleton::R_SHOULDER] = [36.0, 28.0];
        d[skeleton::THORAX] = 4.0;
        d[skeleton::L_SHOULDER] = 2.0;
        d[skeleton::R_SHOULDER] = 6.0;
        let map = render_depth_heatmap(&px, &d, 64, 64).unwrap();
        // The thorax pixel belongs to both shoulder bones (and the neck
        // chain at (100,100) is clipped); both bones start at depth 4 there.
        assert_eq!(map.get(20, 32), 4.0);
        // One step along each bone differs; the shared midpoint row keeps
        // the smaller interpolated value.
        let left_mid = 4.0 + (2.0 - 4.0) * 0.5;
        assert_eq!(map.get(24, 30), left_mid);
    }

    #[test]
    fn out_of_image_joints_are_clipped() {
        let mut px = [[-50.0, -50.0]; JOINT_COUNT];
        px[skeleton::HEAD] = [200.0, 200.0];
        let d = [3.0; JOINT_COUNT];
        let map = render_depth_heatmap(&px, &d, 32, 32).unwrap();
        // The neck-head bone crosses the image diagonally.
        assert!(map.values.iter().any(|&v| v != BACKGROUND_DEPTH));
    }

    #[test]
    fn dhm_roundtrip() {
        let (px, d) = fixture();
        let map = render_depth_heatmap(&px, &d, 48, 40).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pose.dhm");
        write_dhm(&p, &map).unwrap();
        let again = read_dhm(&p).unwrap();
        assert_eq!(map, again);
    }
}

//! 31-channel pose location heat maps: the `.hm31` format and location
//! sampling.

use rand::distributions::{Distribution, WeightedIndex};
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pose::{BACKGROUND_CLASS, CLASS_COUNT};

/// Channel count: 30 foreground pose classes plus the background channel.
pub const CHANNEL_COUNT: usize = BACKGROUND_CLASS as usize;

/// Per-pixel class probabilities over an image. Channel `c` (0-based) holds
/// class `c + 1` for `c < 30`; channel 30 is the background. Values are
/// stored channel-major, row-major within a channel, and each pixel's
/// channel values sum to one.
#[derive(Debug, Clone)]
pub struct LocationHeatmap {
    pub h: usize,
    pub w: usize,
    values: Vec<f32>,
}

impl LocationHeatmap {
    pub fn new(h: usize, w: usize, values: Vec<f32>) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::invalid("heat map dims must be positive"));
        }
        if values.len() != CHANNEL_COUNT * h * w {
            return Err(Error::invalid(format!(
                "heat map needs {} values, got {}",
                CHANNEL_COUNT * h * w,
                values.len()
            )));
        }
        let hm = Self { h, w, values };
        for y in 0..h {
            for x in 0..w {
                let mut sum = 0.0_f64;
                for c in 0..CHANNEL_COUNT {
                    let v = hm.get(c, y, x);
                    if v < 0.0 || !v.is_finite() {
                        return Err(Error::invalid(format!(
                            "heat map value at channel {c}, pixel ({x}, {y}) is {v}"
                        )));
                    }
                    sum += v as f64;
                }
                if (sum - 1.0).abs() > 1e-6 {
                    return Err(Error::invalid(format!(
                        "channel values at pixel ({x}, {y}) sum to {sum}, expected 1"
                    )));
                }
            }
        }
        Ok(hm)
    }

    #[inline]
    pub fn get(&self, channel: usize, y: usize, x: usize) -> f32 {
        self.values[channel * self.h * self.w + y * self.w + x]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Max foreground probability at a pixel and its class id (1..=30);
    /// ties go to the smallest class.
    pub fn foreground_max(&self, y: usize, x: usize) -> (f32, u32) {
        let mut best = (self.get(0, y, x), 1_u32);
        for c in 1..CLASS_COUNT as usize {
            let v = self.get(c, y, x);
            if v > best.0 {
                best = (v, c as u32 + 1);
            }
        }
        best
    }
}

/// One sampled pose location.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocationSample {
    pub x: usize,
    pub y: usize,
    pub class: u32,
}

/// Draws `n` locations (with replacement) from the categorical distribution
/// proportional to each pixel's max foreground probability, restricted to
/// pixels where that probability exceeds `tau`. Each sample carries the
/// argmax foreground class at its pixel.
pub fn sample_locations<R: rand::Rng>(
    hm: &LocationHeatmap,
    n: usize,
    tau: f64,
    rng: &mut R,
) -> Result<Vec<LocationSample>> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::invalid(format!("tau must lie in [0, 1), got {tau}")));
    }
    let mut eligible: Vec<(LocationSample, f64)> = Vec::new();
    for y in 0..hm.h {
        for x in 0..hm.w {
            let (p, class) = hm.foreground_max(y, x);
            if p as f64 > tau {
                eligible.push((LocationSample { x, y, class }, p as f64));
            }
        }
    }
    if eligible.is_empty() {
        return Err(Error::NoForeground(tau));
    }
    let weights = WeightedIndex::new(eligible.iter().map(|(_, w)| *w))
        .map_err(|e| Error::invalid(format!("bad sampling weights: {e}")))?;
    Ok((0..n).map(|_| eligible[weights.sample(rng)].0).collect())
}

// ---------------------------------------------------------------------------
// .hm31 binary format
// ---------------------------------------------------------------------------

const HM31_MAGIC: &[u8; 4] = b"HM31";

/// Writes the heat map: magic "HM31"; u32 h, w; f32 values channel-major,
/// row-major within each channel. Little-endian.
pub fn write_hm31(path: &Path, hm: &LocationHeatmap) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + hm.values.len() * 4);
    buf.extend_from_slice(HM31_MAGIC);
    buf.extend_from_slice(
        &u32::try_from(hm.h)
            .map_err(|_| Error::invalid("heat map height exceeds u32"))?
            .to_le_bytes(),
    );
    buf.extend_from_slice(
        &u32::try_from(hm.w)
            .map_err(|_| Error::invalid("heat map width exceeds u32"))?
            .to_le_bytes(),
    );
    for v in &hm.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    crate::io::write_atomic(path, &buf)
}

pub fn read_hm31(path: &Path) -> Result<LocationHeatmap> {
    let file = std::fs::File::open(path)?;
    let mut r = std::io::BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != HM31_MAGIC {
        return Err(Error::invalid(format!(
            "{}: bad magic, not an HM31 file",
            path.display()
        )));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let h = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let w = u32::from_le_bytes(b4) as usize;
    let count = CHANNEL_COUNT
        .checked_mul(h)
        .and_then(|n| n.checked_mul(w))
        .ok_or_else(|| Error::invalid("hm31 dimensions overflow"))?;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut b4)?;
        values.push(f32::from_le_bytes(b4));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::invalid(format!(
            "{}: trailing bytes after heat map data",
            path.display()
        )));
    }
    LocationHeatmap::new(h, w, values)
}

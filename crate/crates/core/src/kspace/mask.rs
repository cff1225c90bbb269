use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// 1-D Cartesian sampling pattern: a sampled column spans all rows of
/// centered k-space.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    pub columns: Vec<bool>,
    pub acceleration: u32,
    pub center_fraction: f64,
    pub seed: u64,
}

/// Low-frequency fraction kept for a given acceleration.
pub fn default_center_fraction(acceleration: u32) -> f64 {
    match acceleration {
        a if a >= 6 => 0.06,
        _ => 0.08,
    }
}

impl SamplingMask {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn sampled(&self) -> usize {
        self.columns.iter().filter(|&&c| c).count()
    }

    pub fn density(&self) -> f64 {
        self.sampled() as f64 / self.width() as f64
    }

    /// Every column kept; the identity sampling operator.
    pub fn full(width: usize) -> Self {
        Self {
            columns: vec![true; width],
            acceleration: 1,
            center_fraction: 1.0,
            seed: 0,
        }
    }

    /// Nothing kept. Only useful for degenerate-case checks.
    pub fn empty(width: usize) -> Self {
        Self {
            columns: vec![false; width],
            acceleration: 0,
            center_fraction: 0.0,
            seed: 0,
        }
    }

    /// Indices of the fully kept low-frequency band around DC at `width / 2`.
    pub fn center_columns(width: usize, center_fraction: f64) -> std::ops::Range<usize> {
        let n = ((width as f64 * center_fraction).round() as usize).clamp(1, width);
        let start = (width / 2).saturating_sub(n / 2).min(width - n);
        start..start + n
    }
}

/// Builds a mask with `round(width / acceleration)` sampled columns: the
/// center band plus columns drawn uniformly without replacement.
pub fn make_cartesian_mask(width: usize, acceleration: u32, center_fraction: f64, seed: u64) -> Result<SamplingMask> {
    if width == 0 || acceleration == 0 {
        return Err(Error::Config(format!(
            "mask needs positive width and acceleration, got {width} / {acceleration}"
        )));
    }
    if !(0.0..=1.0).contains(&center_fraction) || center_fraction * (width as f64) < 1.0 {
        return Err(Error::Config(format!(
            "center fraction {center_fraction} keeps less than one of {width} columns"
        )));
    }
    let target = (width as f64 / acceleration as f64).round() as usize;
    let center = SamplingMask::center_columns(width, center_fraction);
    if center.len() > target {
        return Err(Error::Config(format!(
            "center band of {} columns exceeds the {target} lines allowed at {acceleration}x",
            center.len()
        )));
    }
    let mut columns = vec![false; width];
    for c in center.clone() {
        columns[c] = true;
    }
    let mut rest: Vec<usize> = (0..width).filter(|c| !center.contains(c)).collect();
    let mut rng = rng::stream(seed, &["mask"]);
    rest.shuffle(&mut rng);
    for &c in rest.iter().take(target - center.len()) {
        columns[c] = true;
    }
    Ok(SamplingMask {
        columns,
        acceleration,
        center_fraction,
        seed,
    })
}

/// One-line text form `W acceleration center_fraction seed : bitstring`.
impl fmt::Display for SamplingMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {:?} {} : ",
            self.columns.len(),
            self.acceleration,
            self.center_fraction,
            self.seed
        )?;
        for &c in &self.columns {
            f.write_str(if c { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for SamplingMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Data(format!("mask line {s:?}: {why}"));
        let (head, bits) = s.trim().split_once(':').ok_or_else(|| bad("missing ':'"))?;
        let fields: Vec<&str> = head.split_whitespace().collect();
        let [w, acc, cf, seed] = fields[..] else {
            return Err(bad("expected 4 header fields"));
        };
        let width: usize = w.parse().map_err(|_| bad("width"))?;
        let acceleration: u32 = acc.parse().map_err(|_| bad("acceleration"))?;
        let center_fraction: f64 = cf.parse().map_err(|_| bad("center fraction"))?;
        let seed: u64 = seed.parse().map_err(|_| bad("seed"))?;
        let columns = bits
            .trim()
            .chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                _ => Err(bad("bitstring")),
            })
            .collect::<Result<Vec<bool>>>()?;
        if columns.len() != width {
            return Err(bad("bitstring length differs from width"));
        }
        Ok(SamplingMask {
            columns,
            acceleration,
            center_fraction,
            seed,
        })
    }
}

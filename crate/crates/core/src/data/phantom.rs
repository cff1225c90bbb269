use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Nonnegative real image before preprocessing.
#[derive(Clone, Debug, PartialEq)]
pub struct RawImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl RawImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Data(format!(
                "raw image {height}x{width} holds {} values",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }
}

/// Intensity law: normal mean and spread, raised to `gamma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intensity {
    pub mean: f64,
    pub std: f64,
    pub gamma: f64,
}

impl Intensity {
    fn sample(&self, r: &mut rng::Rng) -> f64 {
        let n = Normal::new(self.mean, self.std).expect("finite intensity law");
        n.sample(r).max(0.0).powf(self.gamma)
    }
}

/// Structure and intensity priors of one synthetic anatomy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnatomyProfile {
    pub label: String,
    pub background: f64,
    /// Semi-axes of the body outline in normalized coordinates, x then y.
    pub body_axes: (f64, f64),
    pub body: Intensity,
    /// Thickness of a bright rim around the body, 0 for none.
    pub rim: f64,
    pub rim_intensity: Intensity,
    pub structures: (usize, usize),
    /// Major semi-axis range of inner structures.
    pub structure_size: (f64, f64),
    /// Minor / major axis ratio range.
    pub aspect: (f64, f64),
    pub structure: Intensity,
    /// Maximum rotation of inner structures, radians.
    pub max_tilt: f64,
    pub texture_frequency: f64,
    pub texture_amplitude: f64,
    pub edge: f64,
}

impl AnatomyProfile {
    /// Elongated bright structures on a mid-gray body with fine texture.
    pub fn knee() -> Self {
        Self {
            label: "knee".into(),
            background: 0.02,
            body_axes: (0.62, 0.9),
            body: Intensity { mean: 0.55, std: 0.05, gamma: 1.0 },
            rim: 0.0,
            rim_intensity: Intensity { mean: 0.0, std: 0.0, gamma: 1.0 },
            structures: (2, 4),
            structure_size: (0.3, 0.55),
            aspect: (0.25, 0.45),
            structure: Intensity { mean: 1.1, std: 0.15, gamma: 1.0 },
            max_tilt: 0.35,
            texture_frequency: 14.0,
            texture_amplitude: 0.18,
            edge: 0.03,
        }
    }

    /// Round head with a bright skull rim and many small blobs.
    pub fn brain() -> Self {
        Self {
            label: "brain".into(),
            background: 0.0,
            body_axes: (0.78, 0.88),
            body: Intensity { mean: 0.35, std: 0.04, gamma: 1.0 },
            rim: 0.08,
            rim_intensity: Intensity { mean: 1.2, std: 0.1, gamma: 1.0 },
            structures: (5, 9),
            structure_size: (0.08, 0.22),
            aspect: (0.6, 1.0),
            structure: Intensity { mean: 0.7, std: 0.2, gamma: 1.0 },
            max_tilt: PI,
            texture_frequency: 6.0,
            texture_amplitude: 0.06,
            edge: 0.02,
        }
    }

    /// Wide dark torso with a few very bright round chambers.
    pub fn cardiac() -> Self {
        Self {
            label: "cardiac".into(),
            background: 0.05,
            body_axes: (0.92, 0.66),
            body: Intensity { mean: 0.25, std: 0.05, gamma: 1.0 },
            rim: 0.0,
            rim_intensity: Intensity { mean: 0.0, std: 0.0, gamma: 1.0 },
            structures: (1, 3),
            structure_size: (0.16, 0.3),
            aspect: (0.7, 1.0),
            structure: Intensity { mean: 1.6, std: 0.3, gamma: 2.0 },
            max_tilt: PI,
            texture_frequency: 3.0,
            texture_amplitude: 0.04,
            edge: 0.05,
        }
    }

    pub fn defaults() -> Vec<Self> {
        vec![Self::knee(), Self::brain(), Self::cardiac()]
    }

    pub fn by_label(label: &str) -> Result<Self> {
        Self::defaults()
            .into_iter()
            .find(|p| p.label == label)
            .ok_or_else(|| Error::Config(format!("no phantom profile named {label:?} (knee|brain|cardiac)")))
    }
}

struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    fn new(cx: f64, cy: f64, a: f64, b: f64, tilt: f64) -> Self {
        Self {
            cx,
            cy,
            a,
            b,
            cos: tilt.cos(),
            sin: tilt.sin(),
        }
    }

    /// Normalized radius: 1 on the outline.
    fn radius(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = (dx * self.cos + dy * self.sin) / self.a;
        let v = (-dx * self.sin + dy * self.cos) / self.b;
        (u * u + v * v).sqrt()
    }
}

fn soft_inside(r: f64, edge: f64) -> f64 {
    1.0 / (1.0 + ((r - 1.0) / edge).exp())
}

fn phantom(profile: &AnatomyProfile, height: usize, width: usize, r: &mut rng::Rng) -> RawImage {
    let (bx, by) = profile.body_axes;
    let body = Ellipse::new(
        r.gen_range(-0.04..0.04),
        r.gen_range(-0.04..0.04),
        bx * r.gen_range(0.92..1.0),
        by * r.gen_range(0.92..1.0),
        r.gen_range(-0.1..0.1),
    );
    let body_level = profile.body.sample(r);
    let rim_level = profile.rim_intensity.sample(r);
    let n = r.gen_range(profile.structures.0..=profile.structures.1);
    let shapes: Vec<(Ellipse, f64)> = (0..n)
        .map(|_| {
            let a = r.gen_range(profile.structure_size.0..=profile.structure_size.1);
            let b = a * r.gen_range(profile.aspect.0..=profile.aspect.1);
            let reach = (1.0 - a.max(b)).max(0.05) * 0.6;
            let e = Ellipse::new(
                body.cx + r.gen_range(-reach..reach) * body.a,
                body.cy + r.gen_range(-reach..reach) * body.b,
                a,
                b,
                r.gen_range(-profile.max_tilt..=profile.max_tilt),
            );
            (e, profile.structure.sample(r))
        })
        .collect();
    let phase = r.gen_range(0.0..2.0 * PI);
    let angle = r.gen_range(0.0..PI);
    let (fx, fy) = (angle.cos() * profile.texture_frequency, angle.sin() * profile.texture_frequency);

    let mut data = Vec::with_capacity(height * width);
    for i in 0..height {
        let y = 2.0 * (i as f64 + 0.5) / height as f64 - 1.0;
        for j in 0..width {
            let x = 2.0 * (j as f64 + 0.5) / width as f64 - 1.0;
            let rb = body.radius(x, y);
            let inside = soft_inside(rb, profile.edge);
            let mut v = body_level;
            if profile.rim > 0.0 {
                let rim = inside * (1.0 - soft_inside(rb + profile.rim, profile.edge));
                v = v * (1.0 - rim) + rim_level * rim;
            }
            for (e, level) in &shapes {
                let w = soft_inside(e.radius(x, y), profile.edge);
                v = v * (1.0 - w) + level * w;
            }
            let texture = 1.0 + profile.texture_amplitude * (fx * x + fy * y + phase).sin();
            let value = profile.background * (1.0 - inside) + inside * v * texture;
            data.push(value.max(0.0));
        }
    }
    RawImage { height, width, data }
}

/// `count` phantoms for `profile`, deterministic in `seed`.
pub fn generate_phantoms(profile: &AnatomyProfile, count: usize, height: usize, width: usize, seed: u64) -> Result<Vec<RawImage>> {
    crate::kspace::check_extent(height)?;
    crate::kspace::check_extent(width)?;
    Ok((0..count)
        .into_par_iter()
        .map(|index| {
            let mut r = rng::stream(seed, &["phantom", &profile.label, &index.to_string()]);
            phantom(profile, height, width, &mut r)
        })
        .collect())
}

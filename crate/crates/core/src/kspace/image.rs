use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Image,
    Kspace,
}

/// Complex H x W field stored as separate real and imaginary planes.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    height: usize,
    width: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub domain: Domain,
}

impl ComplexImage {
    pub fn new(height: usize, width: usize, re: Vec<f64>, im: Vec<f64>, domain: Domain) -> Result<Self> {
        if re.len() != height * width || im.len() != height * width {
            return Err(Error::shape(
                "complex_image",
                format!("{height}x{width} with {} real / {} imaginary values", re.len(), im.len()),
            ));
        }
        Ok(Self {
            height,
            width,
            re,
            im,
            domain,
        })
    }

    pub fn zeros(height: usize, width: usize, domain: Domain) -> Self {
        Self {
            height,
            width,
            re: vec![0.0; height * width],
            im: vec![0.0; height * width],
            domain,
        }
    }

    /// Zero-phase image from real values.
    pub fn from_real(height: usize, width: usize, re: Vec<f64>) -> Result<Self> {
        let im = vec![0.0; re.len()];
        Self::new(height, width, re, im, Domain::Image)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.re.iter().zip(&self.im).map(|(a, b)| a.hypot(*b)).collect()
    }

    pub fn energy(&self) -> f64 {
        self.re.iter().chain(&self.im).map(|v| v * v).sum()
    }

    pub fn same_shape(&self, other: &ComplexImage) -> bool {
        self.dims() == other.dims()
    }

    /// Packs into a `[1, 2, H, W]` tensor: channel 0 real, channel 1 imaginary.
    pub fn to_network(&self) -> Tensor {
        let mut data = Vec::with_capacity(2 * self.re.len());
        data.extend_from_slice(&self.re);
        data.extend_from_slice(&self.im);
        Tensor::new(vec![1, 2, self.height, self.width], data).expect("extent checked at construction")
    }

    /// Unpacks batch item `b` of a `[B, 2, H, W]` tensor into an image-domain field.
    pub fn from_network(t: &Tensor, b: usize) -> Result<Self> {
        let (bs, c, h, w) = t.dims4()?;
        if c != 2 {
            return Err(Error::shape("from_network", format!("expected 2 channels, got {c}")));
        }
        if b >= bs {
            return Err(Error::shape("from_network", format!("batch index {b} of {bs}")));
        }
        let plane = h * w;
        let base = b * 2 * plane;
        let d = t.data();
        Self::new(
            h,
            w,
            d[base..base + plane].to_vec(),
            d[base + plane..base + 2 * plane].to_vec(),
            Domain::Image,
        )
    }
}

/// Stacks images into a `[B, 2, H, W]` network tensor.
pub fn batch_to_network(images: &[&ComplexImage]) -> Result<Tensor> {
    let items: Vec<Tensor> = images.iter().map(|x| x.to_network()).collect();
    Tensor::stack(&items)
}

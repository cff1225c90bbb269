//! MRI physics: complex images, centered FFT, Cartesian masks, the
//! undersampling operator and the data-consistency projection.

mod fft;
mod image;
mod mask;

pub use fft::{check_extent, fft2, ifft2};
pub use image::{batch_to_network, ComplexImage, Domain};
pub use mask::{default_center_fraction, make_cartesian_mask, SamplingMask};

use crate::error::{Error, Result};
use crate::numerics::{CustomOp, Graph, Tensor, Var};

fn check_mask(op: &'static str, width: usize, mask: &SamplingMask) -> Result<()> {
    if mask.width() != width {
        return Err(Error::shape(op, format!("mask width {} for {width} columns", mask.width())));
    }
    Ok(())
}

/// `s = M . F x`: centered k-space with unsampled columns exactly zero.
pub fn undersample(x: &ComplexImage, mask: &SamplingMask) -> Result<ComplexImage> {
    if x.domain != Domain::Image {
        return Err(Error::shape("undersample", "input must be in the image domain"));
    }
    check_mask("undersample", x.width(), mask)?;
    let mut k = fft2(x)?;
    apply_mask(&mut k, mask);
    Ok(k)
}

fn apply_mask(k: &mut ComplexImage, mask: &SamplingMask) {
    let w = k.width();
    for (i, (re, im)) in k.re.iter_mut().zip(k.im.iter_mut()).enumerate() {
        if !mask.columns[i % w] {
            *re = 0.0;
            *im = 0.0;
        }
    }
}

/// Zero-filled reconstruction `ifft2(s)`.
pub fn zero_filled(measured: &ComplexImage) -> Result<ComplexImage> {
    ifft2(measured)
}

/// Hard data consistency: measured values on sampled columns, prediction elsewhere.
pub fn data_consistency(pred: &ComplexImage, measured: &ComplexImage, mask: &SamplingMask) -> Result<ComplexImage> {
    if pred.domain != Domain::Kspace || measured.domain != Domain::Kspace {
        return Err(Error::shape("data_consistency", "inputs must be in k-space"));
    }
    if !pred.same_shape(measured) {
        return Err(Error::shape(
            "data_consistency",
            format!("{:?} vs {:?}", pred.dims(), measured.dims()),
        ));
    }
    check_mask("data_consistency", pred.width(), mask)?;
    let mut out = pred.clone();
    blend(&mut out, measured, mask, None);
    Ok(out)
}

/// Replaces (or, with `lambda`, averages `(k + lambda s) / (1 + lambda)`)
/// sampled columns.
fn blend(k: &mut ComplexImage, measured: &ComplexImage, mask: &SamplingMask, lambda: Option<f64>) {
    let w = k.width();
    for i in 0..k.re.len() {
        if mask.columns[i % w] {
            match lambda {
                None => {
                    k.re[i] = measured.re[i];
                    k.im[i] = measured.im[i];
                }
                Some(l) => {
                    k.re[i] = (k.re[i] + l * measured.re[i]) / (1.0 + l);
                    k.im[i] = (k.im[i] + l * measured.im[i]) / (1.0 + l);
                }
            }
        }
    }
}

/// Image-domain data-consistency layer on a `[B, 2, H, W]` batch as a graph
/// node: `x -> F^H DC(F x, s)`. With `lambda` the soft weighted form is used
/// and the weight is learned.
pub fn dc_layer(
    graph: &mut Graph,
    x: Var,
    measured: &[ComplexImage],
    masks: &[SamplingMask],
    lambda: Option<Var>,
) -> Result<Var> {
    let (b, c, h, w) = graph.value(x).dims4()?;
    if c != 2 || measured.len() != b || masks.len() != b {
        return Err(Error::shape(
            "dc_layer",
            format!("{b} items, {c} channels, {} measurements, {} masks", measured.len(), masks.len()),
        ));
    }
    let lam = match lambda {
        Some(v) => Some(graph.value(v).data()[0]),
        None => None,
    };
    let mut outs = Vec::with_capacity(b);
    for i in 0..b {
        if measured[i].dims() != (h, w) {
            return Err(Error::shape("dc_layer", "measurement extent differs from input"));
        }
        check_mask("dc_layer", w, &masks[i])?;
        let img = ComplexImage::from_network(graph.value(x), i)?;
        let mut k = fft2(&img)?;
        blend(&mut k, &measured[i], &masks[i], lam);
        outs.push(ifft2(&k)?.to_network());
    }
    let out = Tensor::stack(&outs)?;
    let mut inputs = vec![x];
    inputs.extend(lambda);
    let op = DcOp {
        measured: measured.to_vec(),
        masks: masks.to_vec(),
        soft: lambda.is_some(),
    };
    Ok(graph.custom(inputs, out, Box::new(op)))
}

struct DcOp {
    measured: Vec<ComplexImage>,
    masks: Vec<SamplingMask>,
    soft: bool,
}

impl CustomOp for DcOp {
    fn name(&self) -> &'static str {
        "data_consistency"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Result<Vec<Option<Tensor>>> {
        let lam = self.soft.then(|| inputs[1].data()[0]);
        let mut gx = Vec::with_capacity(self.masks.len());
        let mut glam = 0.0;
        for (i, mask) in self.masks.iter().enumerate() {
            let g = ComplexImage::from_network(grad, i)?;
            let mut gk = fft2(&g)?;
            let w = gk.width();
            if let Some(l) = lam {
                let xk = fft2(&ComplexImage::from_network(inputs[0], i)?)?;
                let s = &self.measured[i];
                for j in 0..gk.re.len() {
                    if mask.columns[j % w] {
                        glam += (gk.re[j] * (s.re[j] - xk.re[j]) + gk.im[j] * (s.im[j] - xk.im[j]))
                            / ((1.0 + l) * (1.0 + l));
                    }
                }
            }
            for j in 0..gk.re.len() {
                if mask.columns[j % w] {
                    let f = lam.map_or(0.0, |l| 1.0 / (1.0 + l));
                    gk.re[j] *= f;
                    gk.im[j] *= f;
                }
            }
            gx.push(ifft2(&gk)?.to_network());
        }
        let mut out = vec![Some(Tensor::stack(&gx)?)];
        if self.soft {
            out.push(Some(Tensor::new(inputs[1].shape().to_vec(), vec![glam])?));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests;

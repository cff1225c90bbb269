//! Independent oracles shared by the integration tests and the acceptance
//! binary.
#![allow(dead_code)]

use std::collections::BTreeMap;

use mapn::kspace::{make_cartesian_mask, undersample, ComplexImage, Domain, SamplingMask};
use mapn::learners::{Forward, Mode, Parameterization, ParamRegistry, ParamRole, PnBlock, PnKind};
use mapn::models::{build_model, Batch, DcMode, DccnnConfig, ModelKind, ModelSpec, Network, UnetConfig};
use mapn::numerics::{Graph, Tensor, Var};
use mapn::rng;
use rand::Rng as _;

pub const LABELS: [&str; 3] = ["knee", "brain", "cardiac"];

pub fn labels() -> Vec<String> {
    LABELS.map(String::from).to_vec()
}

pub fn random_tensor(r: &mut rng::Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| r.gen_range(lo..hi))
}

pub fn random_image(r: &mut rng::Rng, h: usize, w: usize) -> ComplexImage {
    let re = (0..h * w).map(|_| r.gen_range(-1.0..1.0)).collect();
    let im = (0..h * w).map(|_| r.gen_range(-1.0..1.0)).collect();
    ComplexImage::new(h, w, re, im, Domain::Image).unwrap()
}

// ---------------------------------------------------------------- DFT

/// Centered orthonormal 2-D DFT by direct summation.
pub fn naive_dft(x: &ComplexImage) -> ComplexImage {
    let (h, w) = x.dims();
    let mut re = vec![0.0; h * w];
    let mut im = vec![0.0; h * w];
    let norm = 1.0 / ((h * w) as f64).sqrt();
    let c = |i: usize, n: usize| i as f64 - (n / 2) as f64;
    for u in 0..h {
        for v in 0..w {
            let (mut sr, mut si) = (0.0, 0.0);
            for y in 0..h {
                for z in 0..w {
                    let phase = -2.0
                        * std::f64::consts::PI
                        * (c(u, h) * c(y, h) / h as f64 + c(v, w) * c(z, w) / w as f64);
                    let (s, co) = phase.sin_cos();
                    let (a, b) = (x.re[y * w + z], x.im[y * w + z]);
                    sr += a * co - b * s;
                    si += a * s + b * co;
                }
            }
            re[u * w + v] = sr * norm;
            im[u * w + v] = si * norm;
        }
    }
    ComplexImage::new(h, w, re, im, Domain::Kspace).unwrap()
}

pub fn max_diff(a: &ComplexImage, b: &ComplexImage) -> f64 {
    a.re.iter()
        .chain(&a.im)
        .zip(b.re.iter().chain(&b.im))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------- SSIM

/// Sliding-window SSIM with explicit window loops, after scaling both
/// images by the target's range.
pub fn brute_ssim(recon: &[f64], target: &[f64], h: usize, w: usize, weights: &[Vec<f64>]) -> f64 {
    let lo = target.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = target.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let x: Vec<f64> = recon.iter().map(|v| (v - lo) / (hi - lo)).collect();
    let y: Vec<f64> = target.iter().map(|v| (v - lo) / (hi - lo)).collect();
    let k = weights.len();
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..=h - k {
        for j in 0..=w - k {
            let at = |v: &[f64], a: usize, b: usize| v[(i + a) * w + j + b];
            let (mut mx, mut my) = (0.0, 0.0);
            for a in 0..k {
                for b in 0..k {
                    mx += weights[a][b] * at(&x, a, b);
                    my += weights[a][b] * at(&y, a, b);
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for a in 0..k {
                for b in 0..k {
                    let (dx, dy) = (at(&x, a, b) - mx, at(&y, a, b) - my);
                    vx += weights[a][b] * dx * dx;
                    vy += weights[a][b] * dy * dy;
                    cxy += weights[a][b] * dx * dy;
                }
            }
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

pub fn gaussian_window(size: usize, sigma: f64) -> Vec<Vec<f64>> {
    let c = (size / 2) as f64;
    let g: Vec<f64> = (0..size).map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let s = g.iter().sum::<f64>().powi(2);
    (0..size).map(|a| (0..size).map(|b| g[a] * g[b] / s).collect()).collect()
}

// ---------------------------------------------------------------- counts

/// Layerwise closed-form parameter count of a DCCNN. Per block with `cin`
/// inputs and `cout` outputs:
///
/// | tensor              | count                         |
/// |---------------------|-------------------------------|
/// | 3x3 conv (no bias)  | `9 cin cout`                  |
/// | BN gamma, beta, running mean, running var | `4 cout` |
/// | PN2 SE (two FCs, no bias) | `2 cout max(1, cout/2)` |
/// | PN3 series 1x1 + channel affine | `cout^2 + 2 cout`   |
/// | PN4 parallel 1x1 (no bias) | `cin cout`             |
///
/// Each sub-CNN has blocks `(2, C)`, `(C, C)` x `(B - 2)`, `(C, 2)`. A soft
/// DC layer adds one weight per cascade.
///
/// Returns `(shared, specific_per_anatomy)`. With `per_anatomy` the BN
/// tensors and learners are specific (PN0 stays fully shared); otherwise
/// everything is shared and PN4 carries one parallel branch per anatomy.
pub fn dccnn_closed_form(c: &DccnnConfig, pn: PnKind, per_anatomy: bool, anatomies: usize) -> (usize, usize) {
    let ch = c.channels;
    let mut blocks = vec![(2, ch)];
    blocks.extend(std::iter::repeat_n((ch, ch), c.blocks - 2));
    blocks.push((ch, 2));
    let (mut shared, mut specific) = (0, 0);
    for &(cin, cout) in &blocks {
        let conv = 9 * cin * cout;
        let bn = 4 * cout;
        let learner = match pn {
            PnKind::Pn0 | PnKind::Pn1 => 0,
            PnKind::Pn2 => 2 * cout * (cout / 2).max(1),
            PnKind::Pn3 => cout * cout + 2 * cout,
            PnKind::Pn4 if per_anatomy => cin * cout,
            PnKind::Pn4 => anatomies * cin * cout,
        };
        shared += conv;
        if per_anatomy && pn != PnKind::Pn0 {
            specific += bn + learner;
        } else {
            shared += bn + learner;
        }
    }
    let dc = if c.dc == DcMode::Soft { 1 } else { 0 };
    (c.cascades * (shared + dc), c.cascades * specific)
}

// ---------------------------------------------------------------- gradients

/// Relative error `|a - n| / max(|a|, |n|, floor)` in the 2-norm over the
/// sampled coordinates. The floor keeps gradients that vanish exactly (a BN
/// shift cancelled by a following normalization) from turning rounding
/// noise of the difference quotient into a large ratio.
pub fn relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / na.max(nn).max(floor)
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
/// Coordinates sampled per tensor.
const FD_SAMPLES: usize = 24;

/// Central finite differences against analytic gradients.
///
/// `eval(params)` returns the scalar loss and the gradient of every entry
/// of `params` by name. Returns the worst relative error per tensor.
pub fn finite_difference_check(
    params: &BTreeMap<String, Tensor>,
    eval: impl Fn(&BTreeMap<String, Tensor>) -> (f64, BTreeMap<String, Tensor>),
    seed: u64,
) -> Vec<(String, f64)> {
    let (loss, grads) = eval(params);
    // rounding noise of the quotient is about 1e-16 |loss| / FD_STEP
    let floor = 1e-5 * loss.abs().max(1.0);
    let mut r = rng::stream(seed, &["fd-coordinates"]);
    let mut out = Vec::new();
    for (name, value) in params {
        let n = value.numel();
        let coords: Vec<usize> = if n <= FD_SAMPLES {
            (0..n).collect()
        } else {
            (0..FD_SAMPLES).map(|_| r.gen_range(0..n)).collect()
        };
        let zero = Tensor::zeros(value.shape());
        let g = grads.get(name).unwrap_or(&zero);
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for &i in &coords {
            let mut p = params.clone();
            let t = p.get_mut(name).unwrap();
            let v = t.data()[i];
            t.data_mut()[i] = v + FD_STEP;
            let plus = eval(&p).0;
            p.get_mut(name).unwrap().data_mut()[i] = v - FD_STEP;
            let minus = eval(&p).0;
            numeric.push((plus - minus) / (2.0 * FD_STEP));
            analytic.push(g.data()[i]);
        }
        out.push((name.clone(), relative_error(&analytic, &numeric, floor)));
    }
    out
}

/// Builds `op` on leaf tensors named `x0, x1, ...` and reduces the output
/// with a fixed random projection, so every output element contributes.
pub fn op_eval(
    op: &dyn Fn(&mut Graph, &[Var]) -> Var,
    params: &BTreeMap<String, Tensor>,
    projection_seed: u64,
) -> (f64, BTreeMap<String, Tensor>) {
    let mut g = Graph::new();
    let vars: Vec<Var> = (0..params.len())
        .map(|i| {
            let name = format!("x{i}");
            g.param(name.clone(), params[&name].clone())
        })
        .collect();
    let y = op(&mut g, &vars);
    let shape = g.value(y).shape().to_vec();
    let mut r = rng::stream(projection_seed, &["projection"]);
    let p = g.input(random_tensor(&mut r, &shape, -1.0, 1.0));
    let prod = g.mul(y, p).unwrap();
    let loss = g.sum(prod);
    let value = g.value(loss).data()[0];
    (value, g.backward(loss).unwrap().into_named())
}

type OpCase = (String, Vec<Tensor>, Box<dyn Fn(&mut Graph, &[Var]) -> Var>);

fn named(inputs: Vec<Tensor>) -> BTreeMap<String, Tensor> {
    inputs.into_iter().enumerate().map(|(i, t)| (format!("x{i}"), t)).collect()
}

/// Operator cases with shapes drawn from `seed`.
pub fn operator_cases(seed: u64) -> Vec<OpCase> {
    let mut r = rng::stream(seed, &["op-shapes"]);
    let t = |shape: &[usize]| random_tensor(&mut rng::stream(seed, &["op-values", &format!("{shape:?}")]), shape, -1.0, 1.0);
    let b = r.gen_range(1..=3);
    let cin = r.gen_range(1..=3);
    let cout = r.gen_range(1..=3);
    let (h, w) = (2 * r.gen_range(2..=4), 2 * r.gen_range(2..=4));
    let k = [1, 3][r.gen_range(0..2)];
    let stride = r.gen_range(1..=2);
    let pad = if k == 3 { r.gen_range(0..=1) } else { 0 };
    let x = t(&[b, cin, h, w]);
    let mut cases: Vec<OpCase> = Vec::new();
    // the kernel only accepts extents that tile exactly
    let ch = stride * r.gen_range(2..=4) + k - 2 * pad;
    let cw = stride * r.gen_range(2..=4) + k - 2 * pad;
    cases.push((
        format!("conv2d k{k} s{stride} p{pad}"),
        vec![t(&[b, cin, ch, cw]), t(&[cout, cin, k, k]), t(&[cout])],
        Box::new(move |g, v| g.conv2d(v[0], v[1], Some(v[2]), stride, pad).expect("conv2d")),
    ));
    cases.push((
        "conv2d no bias".into(),
        vec![x.clone(), t(&[cout, cin, 3, 3])],
        Box::new(|g, v| g.conv2d(v[0], v[1], None, 1, 1).unwrap()),
    ));
    let tk = r.gen_range(2..=3);
    let ts = r.gen_range(1..=2);
    cases.push((
        format!("conv_transpose2d k{tk} s{ts}"),
        vec![x.clone(), t(&[cin, cout, tk, tk]), t(&[cout])],
        Box::new(move |g, v| g.conv_transpose2d(v[0], v[1], Some(v[2]), ts).unwrap()),
    ));
    let xb = t(&[b + 1, cin, h, w]);
    cases.push((
        "batchnorm train".into(),
        vec![xb.clone(), t(&[cin]), t(&[cin])],
        Box::new(|g, v| g.batchnorm(v[0], v[1], v[2], None, 1e-5).unwrap().0),
    ));
    let mean: Vec<f64> = (0..cin).map(|i| 0.1 * i as f64).collect();
    let var: Vec<f64> = (0..cin).map(|i| 0.5 + 0.25 * i as f64).collect();
    cases.push((
        "batchnorm eval".into(),
        vec![xb, t(&[cin]), t(&[cin])],
        Box::new(move |g, v| g.batchnorm(v[0], v[1], v[2], Some((&mean, &var)), 1e-5).unwrap().0),
    ));
    cases.push(("leaky_relu".into(), vec![x.clone()], Box::new(|g, v| g.leaky_relu(v[0], 0.01))));
    cases.push(("sigmoid".into(), vec![x.clone()], Box::new(|g, v| g.sigmoid(v[0]))));
    cases.push(("global_avg_pool".into(), vec![x.clone()], Box::new(|g, v| g.global_avg_pool(v[0]).unwrap())));
    cases.push((
        "dense".into(),
        vec![t(&[b, cin + 2]), t(&[cout, cin + 2]), t(&[cout])],
        Box::new(|g, v| g.dense(v[0], v[1], Some(v[2])).unwrap()),
    ));
    cases.push(("max_pool2".into(), vec![x.clone()], Box::new(|g, v| g.max_pool2(v[0]).unwrap())));
    cases.push(("add".into(), vec![x.clone(), t(&[b, cin, h, w])], Box::new(|g, v| g.add(v[0], v[1]).unwrap())));
    cases.push(("scale".into(), vec![x.clone()], Box::new(|g, v| g.scale(v[0], -1.7))));
    cases.push(("mul".into(), vec![x.clone(), t(&[b, cin, h, w])], Box::new(|g, v| g.mul(v[0], v[1]).unwrap())));
    cases.push((
        "channel_gate".into(),
        vec![x.clone(), t(&[b, cin])],
        Box::new(|g, v| g.channel_gate(v[0], v[1]).unwrap()),
    ));
    cases.push((
        "channel_affine".into(),
        vec![x.clone(), t(&[cin]), t(&[cin])],
        Box::new(|g, v| g.channel_affine(v[0], v[1], v[2]).unwrap()),
    ));
    cases.push((
        "concat".into(),
        vec![x.clone(), t(&[b, cout, h, w])],
        Box::new(|g, v| g.concat(v[0], v[1]).unwrap()),
    ));
    cases.push(("sum".into(), vec![x.clone()], Box::new(|g, v| g.sum(v[0]))));
    cases.push((
        "l1_loss".into(),
        vec![x.clone(), t(&[b, cin, h, w])],
        Box::new(|g, v| g.l1_loss(v[0], v[1]).unwrap()),
    ));

    let (dh, dw) = (4 << r.gen_range(0..2), 4 << r.gen_range(0..2));
    let mut ir = rng::stream(seed, &["dc-data"]);
    let masks: Vec<SamplingMask> = (0..b)
        .map(|i| make_cartesian_mask(dw, 4, 0.25, seed + i as u64).unwrap())
        .collect();
    let measured: Vec<ComplexImage> = masks
        .iter()
        .map(|m| undersample(&random_image(&mut ir, dh, dw), m).unwrap())
        .collect();
    let xd = t(&[b, 2, dh, dw]);
    let (m1, s1) = (measured.clone(), masks.clone());
    cases.push((
        "dc hard".into(),
        vec![xd.clone()],
        Box::new(move |g, v| mapn::kspace::dc_layer(g, v[0], &m1, &s1, None).unwrap()),
    ));
    cases.push((
        "dc soft".into(),
        vec![xd, Tensor::new(vec![1], vec![0.7]).unwrap()],
        Box::new(move |g, v| mapn::kspace::dc_layer(g, v[0], &measured, &masks, Some(v[1])).unwrap()),
    ));
    cases
}

/// Worst relative error of every operator case.
pub fn check_operators(seed: u64) -> Vec<(String, f64)> {
    operator_cases(seed)
        .into_iter()
        .map(|(name, inputs, op)| {
            let params = named(inputs);
            let worst = finite_difference_check(&params, |p| op_eval(op.as_ref(), p, seed), seed)
                .into_iter()
                .map(|(_, e)| e)
                .fold(0.0, f64::max);
            (name, worst)
        })
        .collect()
}

/// Overwrites every trainable registry tensor with random values so that
/// zero-initialized learners do not hide gradient paths.
pub fn randomize(reg: &mut ParamRegistry, seed: u64) {
    let mut r = rng::stream(seed, &["randomize"]);
    let keys: Vec<String> = reg.records().map(|(tag, name, _)| format!("{tag}/{name}")).collect();
    for key in keys {
        let e = reg.by_key_mut(&key).unwrap();
        if e.role != ParamRole::BnStat {
            let shape = e.value.shape().to_vec();
            e.value = random_tensor(&mut r, &shape, -0.5, 0.5);
            if key.ends_with("gamma") || key.ends_with("series.scale") {
                e.value = e.value.map(|v| v + 1.0);
            }
        }
    }
}

fn registry_params(reg: &ParamRegistry, active: usize) -> BTreeMap<String, Tensor> {
    let label = &reg.labels()[active];
    reg.records()
        .filter(|(tag, _, e)| e.role.trainable() && (tag == "shared" || tag == &format!("specific:{label}")))
        .map(|(tag, name, e)| (format!("{tag}/{name}"), e.value.clone()))
        .collect()
}

fn load_params(reg: &mut ParamRegistry, params: &BTreeMap<String, Tensor>) {
    for (k, v) in params {
        reg.by_key_mut(k).unwrap().value = v.clone();
    }
}

/// Gradient check of one PN block for the active anatomy, in train mode.
pub fn check_block(kind: PnKind, parameterization: Parameterization, seed: u64) -> Vec<(String, f64)> {
    let block = PnBlock::new("b", kind, 3, 4, parameterization, 3);
    let mut reg = ParamRegistry::new(labels()).unwrap();
    block.register(&mut reg, &mut rng::stream(seed, &["init"])).unwrap();
    randomize(&mut reg, seed);
    reg.switch_anatomy(1).unwrap();
    let x = random_tensor(&mut rng::stream(seed, &["block-x"]), &[2, 3, 6, 6], -1.0, 1.0);
    let proj = random_tensor(&mut rng::stream(seed, &["block-p"]), &[2, 4, 6, 6], -1.0, 1.0);
    let params = registry_params(&reg, 1);
    let eval = |p: &BTreeMap<String, Tensor>| {
        let mut reg = reg.clone();
        load_params(&mut reg, p);
        let mut fw = Forward::new(&mut reg, Mode::Train);
        let xv = fw.input(x.clone());
        let y = block.forward(&mut fw, xv).unwrap();
        let pv = fw.input(proj.clone());
        let mut g = fw.into_graph();
        let prod = g.mul(y, pv).unwrap();
        let loss = g.sum(prod);
        (g.value(loss).data()[0], g.backward(loss).unwrap().into_named())
    };
    finite_difference_check(&params, eval, seed)
}

/// Gradient check of a whole small network for anatomy 2.
pub fn check_network(kind: ModelKind, pn: PnKind, dc: DcMode, seed: u64) -> Vec<(String, f64)> {
    let spec = ModelSpec {
        kind,
        pn,
        parameterization: Parameterization::PerAnatomy,
        anatomies: labels(),
        dccnn: DccnnConfig {
            cascades: 2,
            blocks: 3,
            channels: 3,
            residual: true,
            dc,
        },
        unet: UnetConfig {
            levels: 2,
            base_channels: 2,
        },
    };
    let mut net = build_model(&spec, seed).unwrap();
    randomize(&mut net.registry, seed);
    let mut r = rng::stream(seed, &["net-data"]);
    let masks: Vec<SamplingMask> = (0..2).map(|i| make_cartesian_mask(8, 4, 0.25, seed + i).unwrap()).collect();
    let measured: Vec<ComplexImage> = masks.iter().map(|m| undersample(&random_image(&mut r, 8, 8), m).unwrap()).collect();
    let target = random_tensor(&mut r, &[2, 2, 8, 8], -1.0, 1.0);
    net.switch_anatomy(2).unwrap();
    let params = registry_params(&net.registry, 2);
    let eval = |p: &BTreeMap<String, Tensor>| {
        let mut n: Network = net.clone();
        load_params(&mut n.registry, p);
        let batch = Batch::new(&measured, &masks).unwrap();
        let mut pass = n.forward(&batch, Mode::Train, &[]).unwrap();
        let t = pass.graph.input(target.clone());
        // squared error keeps the loss smooth for the difference quotient
        let d = pass.graph.scale(t, -1.0);
        let e = pass.graph.add(pass.output, d).unwrap();
        let sq = pass.graph.mul(e, e).unwrap();
        let loss = pass.graph.sum(sq);
        (pass.graph.value(loss).data()[0], pass.graph.backward(loss).unwrap().into_named())
    };
    finite_difference_check(&params, eval, seed)
}

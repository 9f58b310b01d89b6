use rand::{Rng, RngCore};

use super::{Activation, LayerParams, LayerSpec, Location, NetworkSpec, NnError, ParameterSet, Result, Tensor};

/// Forward-pass mode. Dropout draws its masks from the training RNG and is
/// the identity during inference.
pub enum Mode<'a> {
    Infer,
    Train(&'a mut dyn RngCore),
}

enum LayerCache {
    /// Dense, Conv1d and SoftmaxHead: layer input and post-activation output.
    Affine { input: Tensor, output: Tensor },
    Relayout { input_shape: Vec<usize> },
    Dropout { mask: Option<Vec<f64>> },
}

/// Head outputs plus everything backward needs.
pub struct ForwardPass {
    pub outputs: Vec<Tensor>,
    input_shape: Vec<usize>,
    cache: Vec<LayerCache>,
    locations: Vec<Location>,
}

impl ForwardPass {
    pub fn output(&self, head: usize) -> &Tensor {
        &self.outputs[head]
    }

    /// Sign pattern of every ReLU unit (`output > 0`), in layer order.
    pub fn relu_pattern(&self, spec: &NetworkSpec) -> Result<Vec<bool>> {
        let plan = spec.plan()?;
        let mut pattern = Vec::new();
        for (p, c) in plan.iter().zip(&self.cache) {
            if let (Activation::Relu, LayerCache::Affine { output, .. }) = (p.layer.activation(), c) {
                pattern.extend(output.data().iter().map(|&v| v > 0.0));
            }
        }
        Ok(pattern)
    }
}

pub struct Gradients {
    pub params: ParameterSet,
    pub input: Tensor,
}

pub fn forward(
    spec: &NetworkSpec,
    params: &ParameterSet,
    input: &Tensor,
    mut mode: Mode<'_>,
) -> Result<ForwardPass> {
    let plan = spec.plan()?;
    if input.shape().len() != spec.input_shape.len() + 1 || input.shape()[1..] != spec.input_shape[..] {
        return Err(NnError::Shape(format!(
            "input shape {:?} does not match network input (batch, {:?})",
            input.shape(),
            spec.input_shape
        )));
    }
    if params.layers.len() != plan.iter().filter(|p| p.param_slot.is_some()).count() {
        return Err(NnError::Shape("parameter set does not match network spec".into()));
    }
    let batch = input.batch();
    let mut cache = Vec::with_capacity(plan.len());
    let mut outputs = Vec::with_capacity(spec.heads.len());
    let mut x = input.clone();
    let mut trunk_out = None;
    for (idx, p) in plan.iter().enumerate() {
        if let Location::Head(_, 0) = p.location {
            let t = trunk_out.get_or_insert_with(|| x.clone());
            x = t.clone();
        }
        let layer_params = p.param_slot.map(|s| &params.layers[s]);
        let (y, c) = apply(p.layer, layer_params, x, batch, &p.output, &mut mode)?;
        if !y.all_finite() {
            return Err(NnError::NonFinite { layer: idx });
        }
        cache.push(c);
        x = y;
        let head_ends = match p.location {
            Location::Head(h, i) => i + 1 == spec.heads[h].layers.len(),
            Location::Trunk(_) => false,
        };
        if head_ends {
            outputs.push(std::mem::replace(&mut x, Tensor::zeros(&[0])));
        }
    }
    let trunk_out = trunk_out.unwrap_or(x);
    // Heads without layers expose the trunk output directly.
    let mut assembled = Vec::with_capacity(spec.heads.len());
    let mut produced = outputs.into_iter();
    for head in &spec.heads {
        if head.layers.is_empty() {
            assembled.push(trunk_out.clone());
        } else {
            assembled.push(produced.next().expect("one output per non-empty head"));
        }
    }
    Ok(ForwardPass {
        outputs: assembled,
        input_shape: input.shape().to_vec(),
        cache,
        locations: plan.iter().map(|p| p.location).collect(),
    })
}

fn with_batch(batch: usize, shape: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(shape.len() + 1);
    s.push(batch);
    s.extend_from_slice(shape);
    s
}

fn apply(
    layer: &LayerSpec,
    params: Option<&LayerParams>,
    x: Tensor,
    batch: usize,
    out_shape: &[usize],
    mode: &mut Mode<'_>,
) -> Result<(Tensor, LayerCache)> {
    let full_out = with_batch(batch, out_shape);
    match layer {
        LayerSpec::Dense { .. } | LayerSpec::SoftmaxHead { .. } => {
            let p = params.expect("dense layer has parameters");
            let mut y = dense_forward(&x, p, &full_out);
            match layer.activation() {
                Activation::Relu => relu_in_place(&mut y),
                Activation::Softmax => softmax_rows_in_place(&mut y),
                Activation::None => {}
            }
            Ok((y.clone(), LayerCache::Affine { input: x, output: y }))
        }
        LayerSpec::Conv1d { kernel, activation, .. } => {
            let p = params.expect("conv layer has parameters");
            let mut y = conv_forward(&x, p, *kernel, &full_out);
            if *activation == Activation::Relu {
                relu_in_place(&mut y);
            }
            Ok((y.clone(), LayerCache::Affine { input: x, output: y }))
        }
        LayerSpec::UpSample1d { factor } => {
            let input_shape = x.shape().to_vec();
            let len = input_shape[1];
            let unit: usize = input_shape[2..].iter().product();
            let mut out = Vec::with_capacity(x.len() * factor);
            for b in 0..batch {
                let row = x.row(b);
                for l in 0..len {
                    let chunk = &row[l * unit..(l + 1) * unit];
                    for _ in 0..*factor {
                        out.extend_from_slice(chunk);
                    }
                }
            }
            Ok((Tensor::from_vec(&full_out, out)?, LayerCache::Relayout { input_shape }))
        }
        LayerSpec::Flatten | LayerSpec::Reshape { .. } => {
            let input_shape = x.shape().to_vec();
            Ok((x.reshaped(&full_out)?, LayerCache::Relayout { input_shape }))
        }
        LayerSpec::Dropout { rate } => match mode {
            Mode::Train(rng) if *rate > 0.0 => {
                let keep = 1.0 / (1.0 - rate);
                let mask: Vec<f64> = (0..x.len())
                    .map(|_| if rng.random::<f64>() < *rate { 0.0 } else { keep })
                    .collect();
                let mut y = x;
                for (v, m) in y.data_mut().iter_mut().zip(&mask) {
                    *v *= m;
                }
                Ok((y, LayerCache::Dropout { mask: Some(mask) }))
            }
            _ => Ok((x, LayerCache::Dropout { mask: None })),
        },
    }
}

fn dense_forward(x: &Tensor, p: &LayerParams, out_shape: &[usize]) -> Tensor {
    let (batch, fan_in) = (x.batch(), x.row_len());
    let units = p.bias.len();
    let w = p.weight.data();
    let mut y = Tensor::zeros(out_shape);
    let yd = y.data_mut();
    for b in 0..batch {
        let out = &mut yd[b * units..(b + 1) * units];
        out.copy_from_slice(p.bias.data());
        for (i, &xi) in x.row(b).iter().enumerate().take(fan_in) {
            if xi == 0.0 {
                continue;
            }
            let wrow = &w[i * units..(i + 1) * units];
            for (o, &wij) in out.iter_mut().zip(wrow) {
                *o += xi * wij;
            }
        }
    }
    y
}

fn conv_forward(x: &Tensor, p: &LayerParams, kernel: usize, out_shape: &[usize]) -> Tensor {
    let (batch, len, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let filters = p.bias.len();
    let pad = kernel / 2;
    let w = p.weight.data();
    let mut y = Tensor::zeros(out_shape);
    let yd = y.data_mut();
    for b in 0..batch {
        let xr = x.row(b);
        for l in 0..len {
            let out = &mut yd[(b * len + l) * filters..(b * len + l + 1) * filters];
            out.copy_from_slice(p.bias.data());
            for k in 0..kernel {
                let Some(src) = (l + k).checked_sub(pad).filter(|&s| s < len) else {
                    continue;
                };
                for ci in 0..cin {
                    let xv = xr[src * cin + ci];
                    if xv == 0.0 {
                        continue;
                    }
                    let wrow = &w[(k * cin + ci) * filters..(k * cin + ci + 1) * filters];
                    for (o, &wv) in out.iter_mut().zip(wrow) {
                        *o += xv * wv;
                    }
                }
            }
        }
    }
    y
}

fn relu_in_place(t: &mut Tensor) {
    for v in t.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

pub(crate) fn softmax_rows_in_place(t: &mut Tensor) {
    let w = t.row_len();
    for row in t.data_mut().chunks_mut(w) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Backpropagates per-head output gradients. Heads given `None` contribute
/// nothing; their parameter gradients come back as zeros.
pub fn backward(
    spec: &NetworkSpec,
    params: &ParameterSet,
    pass: &ForwardPass,
    head_grads: &[Option<&Tensor>],
) -> Result<Gradients> {
    let plan = spec.plan()?;
    if pass.cache.len() != plan.len()
        || pass.locations.iter().zip(&plan).any(|(l, p)| *l != p.location)
        || head_grads.len() != spec.heads.len()
    {
        return Err(NnError::CacheMismatch);
    }
    params.check_matches(spec)?;
    let mut grads = ParameterSet::zeros(spec)?;

    let trunk_out_shape = with_batch(pass.input_shape[0], &spec.trunk_output_shape()?);
    let mut trunk_grad = Tensor::zeros(&trunk_out_shape);

    for (h, head) in spec.heads.iter().enumerate() {
        let Some(g) = head_grads[h] else { continue };
        if g.shape() != pass.outputs[h].shape() {
            return Err(NnError::Shape(format!(
                "gradient shape {:?} does not match head {:?} output {:?}",
                g.shape(),
                head.name,
                pass.outputs[h].shape()
            )));
        }
        let mut dx = g.clone();
        for (idx, p) in plan.iter().enumerate().rev() {
            if matches!(p.location, Location::Head(hh, _) if hh == h) {
                dx = layer_backward(p.layer, p.param_slot, params, &mut grads, &pass.cache[idx], dx);
            }
        }
        trunk_grad.add_assign(&dx);
    }

    let mut dx = trunk_grad;
    for (idx, p) in plan.iter().enumerate().rev() {
        if let Location::Trunk(_) = p.location {
            dx = layer_backward(p.layer, p.param_slot, params, &mut grads, &pass.cache[idx], dx);
        }
    }
    Ok(Gradients { params: grads, input: dx })
}

fn layer_backward(
    layer: &LayerSpec,
    slot: Option<usize>,
    params: &ParameterSet,
    grads: &mut ParameterSet,
    cache: &LayerCache,
    dout: Tensor,
) -> Tensor {
    match (layer, cache) {
        (_, LayerCache::Affine { input, output }) => {
            let slot = slot.expect("affine layer has a parameter slot");
            let dz = activation_backward(layer.activation(), output, dout);
            let (p, g) = (&params.layers[slot], &mut grads.layers[slot]);
            match layer {
                LayerSpec::Conv1d { kernel, .. } => conv_backward(input, p, g, *kernel, &dz),
                _ => dense_backward(input, p, g, &dz),
            }
        }
        (LayerSpec::UpSample1d { factor }, LayerCache::Relayout { input_shape }) => {
            let mut dx = Tensor::zeros(input_shape);
            let (batch, len) = (input_shape[0], input_shape[1]);
            let unit: usize = input_shape[2..].iter().product();
            let d = dout.data();
            let dxd = dx.data_mut();
            for b in 0..batch {
                for l in 0..len {
                    let dst = (b * len + l) * unit;
                    for r in 0..*factor {
                        let src = ((b * len + l) * factor + r) * unit;
                        for u in 0..unit {
                            dxd[dst + u] += d[src + u];
                        }
                    }
                }
            }
            dx
        }
        (_, LayerCache::Relayout { input_shape }) => {
            dout.reshaped(input_shape).expect("relayout preserves element count")
        }
        (_, LayerCache::Dropout { mask }) => match mask {
            Some(mask) => {
                let mut dx = dout;
                for (v, m) in dx.data_mut().iter_mut().zip(mask) {
                    *v *= m;
                }
                dx
            }
            None => dout,
        },
    }
}

fn activation_backward(act: Activation, output: &Tensor, mut dout: Tensor) -> Tensor {
    match act {
        Activation::None => dout,
        Activation::Relu => {
            for (d, &y) in dout.data_mut().iter_mut().zip(output.data()) {
                if y <= 0.0 {
                    *d = 0.0;
                }
            }
            dout
        }
        Activation::Softmax => {
            let w = output.row_len();
            for (drow, prow) in dout.data_mut().chunks_mut(w).zip(output.data().chunks(w)) {
                let dot: f64 = drow.iter().zip(prow).map(|(d, p)| d * p).sum();
                for (d, &p) in drow.iter_mut().zip(prow) {
                    *d = p * (*d - dot);
                }
            }
            dout
        }
    }
}

fn dense_backward(x: &Tensor, p: &LayerParams, g: &mut LayerParams, dz: &Tensor) -> Tensor {
    let (batch, fan_in) = (x.batch(), x.row_len());
    let units = p.bias.len();
    let w = p.weight.data();
    let mut dx = Tensor::zeros(x.shape());
    for b in 0..batch {
        let dzr = dz.row(b);
        for (gb, &d) in g.bias.data_mut().iter_mut().zip(dzr) {
            *gb += d;
        }
        let xr = x.row(b);
        let gw = g.weight.data_mut();
        for i in 0..fan_in {
            let xi = xr[i];
            if xi != 0.0 {
                for (gwij, &d) in gw[i * units..(i + 1) * units].iter_mut().zip(dzr) {
                    *gwij += xi * d;
                }
            }
        }
        let dxr = &mut dx.data_mut()[b * fan_in..(b + 1) * fan_in];
        for (i, dxi) in dxr.iter_mut().enumerate() {
            *dxi = w[i * units..(i + 1) * units].iter().zip(dzr).map(|(a, b)| a * b).sum();
        }
    }
    dx
}

fn conv_backward(x: &Tensor, p: &LayerParams, g: &mut LayerParams, kernel: usize, dz: &Tensor) -> Tensor {
    let (batch, len, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let filters = p.bias.len();
    let pad = kernel / 2;
    let w = p.weight.data();
    let mut dx = Tensor::zeros(x.shape());
    let dzd = dz.data();
    for b in 0..batch {
        let xr = x.row(b);
        for l in 0..len {
            let dzr = &dzd[(b * len + l) * filters..(b * len + l + 1) * filters];
            for (gb, &d) in g.bias.data_mut().iter_mut().zip(dzr) {
                *gb += d;
            }
            for k in 0..kernel {
                let Some(src) = (l + k).checked_sub(pad).filter(|&s| s < len) else {
                    continue;
                };
                for ci in 0..cin {
                    let off = (k * cin + ci) * filters;
                    let xv = xr[src * cin + ci];
                    if xv != 0.0 {
                        let gw = &mut g.weight.data_mut()[off..off + filters];
                        for (gwv, &d) in gw.iter_mut().zip(dzr) {
                            *gwv += xv * d;
                        }
                    }
                    let s: f64 = w[off..off + filters].iter().zip(dzr).map(|(a, b)| a * b).sum();
                    dx.data_mut()[(b * len + src) * cin + ci] += s;
                }
            }
        }
    }
    dx
}

use super::conv::{conv1d_backward, conv1d_forward};
use super::{AcousticError, ModelParams, NetworkSpec, Nonlinearity};
use crate::criterion::EmissionTable;
use crate::features::FeatureSequence;
use crate::matrix::Matrix;
use crate::scalar::Real;

/// What the last layer's scores are turned into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputMode {
    /// Un-normalized scores, as ASG expects.
    #[default]
    Raw,
    /// Row-wise log-softmax, as CTC expects.
    LogSoftmax,
}

/// Gradients share the parameter layout.
pub type NetworkGrads<R> = ModelParams<R>;

/// Composed kernel width and stride of the whole network, in input frames.
pub fn receptive_field(spec: &NetworkSpec) -> (usize, usize) {
    let mut kw = 1;
    let mut stride = 1;
    for l in spec.layers() {
        kw += (l.kw - 1) * stride;
        stride *= l.dw;
    }
    (kw, stride)
}

/// Layer inputs and pre-activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<R> {
    inputs: Vec<Matrix<R>>,
    pre: Vec<Matrix<R>>,
}

fn too_short(spec: &NetworkSpec, frames: usize) -> AcousticError {
    AcousticError::TooShort {
        frames,
        min_frames: receptive_field(spec).0,
    }
}

pub fn network_forward_cached<R: Real>(
    x: &Matrix<R>,
    spec: &NetworkSpec,
    params: &ModelParams<R>,
) -> Result<(Matrix<R>, ForwardCache<R>), AcousticError> {
    params.check(spec)?;
    if spec.output_len(x.rows()).is_none() {
        return Err(too_short(spec, x.rows()));
    }
    let mut cache = ForwardCache {
        inputs: Vec::with_capacity(spec.layers().len()),
        pre: Vec::with_capacity(spec.layers().len()),
    };
    let mut cur = x.clone();
    for (l, p) in spec.layers().iter().zip(&params.layers) {
        let pre = conv1d_forward(&cur, l, p)?;
        let act = match l.nonlinearity {
            Nonlinearity::None => pre.clone(),
            nl => pre.map(|v| nl.apply(v)),
        };
        cache.inputs.push(std::mem::replace(&mut cur, act));
        cache.pre.push(pre);
    }
    Ok((cur, cache))
}

/// Runs the network on a feature sequence and returns per-frame label scores.
pub fn network_forward<R: Real>(
    features: &FeatureSequence<R>,
    spec: &NetworkSpec,
    params: &ModelParams<R>,
    mode: OutputMode,
) -> Result<EmissionTable<R>, AcousticError> {
    let (out, _) = network_forward_cached(features.frames(), spec, params)?;
    let table = EmissionTable::new(out);
    Ok(match mode {
        OutputMode::Raw => table,
        OutputMode::LogSoftmax => table.log_softmax(),
    })
}

/// Backpropagates `d_out` (gradient w.r.t. the raw network output).
pub fn network_backward<R: Real>(
    spec: &NetworkSpec,
    params: &ModelParams<R>,
    cache: &ForwardCache<R>,
    d_out: &Matrix<R>,
) -> Result<NetworkGrads<R>, AcousticError> {
    let n = spec.layers().len();
    let mut grads = ModelParams::zeros(spec);
    let mut upstream = d_out.clone();
    for idx in (0..n).rev() {
        let l = &spec.layers()[idx];
        let pre = &cache.pre[idx];
        if pre.shape() != upstream.shape() {
            return Err(AcousticError::Shape(format!(
                "layer {idx} output is {:?}, gradient {:?}",
                pre.shape(),
                upstream.shape()
            )));
        }
        if l.nonlinearity != Nonlinearity::None {
            for (g, &z) in upstream.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                *g *= l.nonlinearity.derivative(z);
            }
        }
        let g = conv1d_backward(&cache.inputs[idx], l, &params.layers[idx], &upstream)?;
        grads.layers[idx].weight = g.d_weight;
        grads.layers[idx].bias = g.d_bias;
        upstream = g.d_x;
    }
    Ok(grads)
}

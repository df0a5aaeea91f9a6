use super::{AcousticError, ConvLayerSpec, LayerParams};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// `y[t][i] = b[i] + sum_j sum_k w[i][j][k] * x[dw*t + k][j]` (zero-based), no nonlinearity.
///
/// `x` is `T_x x d_in`; the result is `T_y x d_out` with `T_y = floor((T_x - kw)/dw) + 1`.
pub fn conv1d_forward<R: Real>(
    x: &Matrix<R>,
    layer: &ConvLayerSpec,
    params: &LayerParams<R>,
) -> Result<Matrix<R>, AcousticError> {
    params.check(layer)?;
    if x.cols() != layer.d_in {
        return Err(AcousticError::Shape(format!(
            "input has {} channels, layer expects {}",
            x.cols(),
            layer.d_in
        )));
    }
    let t_out = layer.output_len(x.rows()).ok_or(AcousticError::TooShort {
        frames: x.rows(),
        min_frames: layer.kw,
    })?;
    let (d_in, kw) = (layer.d_in, layer.kw);
    let mut y = Matrix::zeros(t_out, layer.d_out);
    for t in 0..t_out {
        let base = layer.dw * t;
        for i in 0..layer.d_out {
            let mut acc = params.bias[i].wide();
            let wi = &params.weight[i * d_in * kw..(i + 1) * d_in * kw];
            for k in 0..kw {
                let xr = x.row(base + k);
                for j in 0..d_in {
                    acc += wi[j * kw + k].wide() * xr[j].wide();
                }
            }
            y[(t, i)] = R::lit(acc);
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<R> {
    pub d_x: Matrix<R>,
    pub d_weight: Vec<R>,
    pub d_bias: Vec<R>,
}

/// Gradients of the linear convolution with respect to its input and parameters.
pub fn conv1d_backward<R: Real>(
    x: &Matrix<R>,
    layer: &ConvLayerSpec,
    params: &LayerParams<R>,
    d_y: &Matrix<R>,
) -> Result<ConvGrads<R>, AcousticError> {
    params.check(layer)?;
    let t_out = layer.output_len(x.rows());
    if x.cols() != layer.d_in || t_out != Some(d_y.rows()) || d_y.cols() != layer.d_out {
        return Err(AcousticError::Shape(format!(
            "input {}x{}, upstream gradient {}x{} for layer {:?}",
            x.rows(),
            x.cols(),
            d_y.rows(),
            d_y.cols(),
            layer
        )));
    }
    let (d_in, kw) = (layer.d_in, layer.kw);
    let mut d_x = vec![0f64; x.rows() * d_in];
    let mut d_w = vec![0f64; layer.num_weights()];
    let mut d_b = vec![0f64; layer.d_out];
    for t in 0..d_y.rows() {
        let base = layer.dw * t;
        for i in 0..layer.d_out {
            let g = d_y[(t, i)].wide();
            if g == 0.0 {
                continue;
            }
            d_b[i] += g;
            let off = i * d_in * kw;
            for k in 0..kw {
                let xr = x.row(base + k);
                let dxr = &mut d_x[(base + k) * d_in..(base + k + 1) * d_in];
                for j in 0..d_in {
                    let wi = off + j * kw + k;
                    d_w[wi] += g * xr[j].wide();
                    dxr[j] += g * params.weight[wi].wide();
                }
            }
        }
    }
    Ok(ConvGrads {
        d_x: Matrix::from_vec(x.rows(), d_in, d_x.into_iter().map(R::lit).collect()),
        d_weight: d_w.into_iter().map(R::lit).collect(),
        d_bias: d_b.into_iter().map(R::lit).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustic::Nonlinearity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_layer(rng: &mut ChaCha8Rng, spec: &ConvLayerSpec) -> LayerParams<f64> {
        LayerParams {
            weight: (0..spec.num_weights()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            bias: (0..spec.d_out).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix<f64> {
        Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Triple loop written straight from the one-based formula.
    fn naive(x: &Matrix<f64>, l: &ConvLayerSpec, p: &LayerParams<f64>) -> Matrix<f64> {
        let t_y = (x.rows() - l.kw) / l.dw + 1;
        Matrix::from_fn(t_y, l.d_out, |t0, i0| {
            let t = t0 + 1;
            let mut v = p.bias[i0];
            for j in 1..=l.d_in {
                for k in 1..=l.kw {
                    v += p.w(l, i0, j - 1, k - 1) * x[(l.dw * (t - 1) + k - 1, j - 1)];
                }
            }
            v
        })
    }

    #[test]
    fn identity_kernel() {
        let spec = ConvLayerSpec::new(3, 3, 1, 1, Nonlinearity::None);
        let mut p = LayerParams::zeros(&spec);
        for i in 0..3 {
            p.weight[i * 3 + i] = 1.0;
        }
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert_eq!(conv1d_forward(&x, &spec, &p).unwrap(), x);
    }

    #[test]
    fn output_length_and_too_short() {
        let spec = ConvLayerSpec::new(1, 1, 5, 2, Nonlinearity::None);
        let p = LayerParams::zeros(&spec);
        let y = conv1d_forward(&Matrix::<f64>::zeros(100, 1), &spec, &p).unwrap();
        assert_eq!(y.rows(), 48);
        assert!(matches!(
            conv1d_forward(&Matrix::<f64>::zeros(4, 1), &spec, &p),
            Err(AcousticError::TooShort {
                frames: 4,
                min_frames: 5
            })
        ));
    }

    #[test]
    fn matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let spec = ConvLayerSpec::new(
                rng.gen_range(1..4),
                rng.gen_range(1..4),
                rng.gen_range(1..5),
                rng.gen_range(1..4),
                Nonlinearity::None,
            );
            let p = random_layer(&mut rng, &spec);
            let t_x = spec.kw + rng.gen_range(0..9);
            let x = random_matrix(&mut rng, t_x, spec.d_in);
            let y = conv1d_forward(&x, &spec, &p).unwrap();
            let r = naive(&x, &spec, &p);
            assert_eq!(y.shape(), r.shape());
            for (a, b) in y.as_slice().iter().zip(r.as_slice()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bias_gradient_is_channel_sum_and_zero_upstream_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = ConvLayerSpec::new(2, 3, 3, 2, Nonlinearity::None);
        let p = random_layer(&mut rng, &spec);
        let x = random_matrix(&mut rng, 9, 2);
        let dy = random_matrix(&mut rng, 4, 3);
        let g = conv1d_backward(&x, &spec, &p, &dy).unwrap();
        for i in 0..3 {
            let s: f64 = (0..4).map(|t| dy[(t, i)]).sum();
            assert!((g.d_bias[i] - s).abs() < 1e-12);
        }
        let z = conv1d_backward(&x, &spec, &p, &Matrix::zeros(4, 3)).unwrap();
        assert!(z
            .d_x
            .as_slice()
            .iter()
            .chain(&z.d_weight)
            .chain(&z.d_bias)
            .all(|&v| v == 0.0));
        assert!(conv1d_backward(&x, &spec, &p, &Matrix::zeros(5, 3)).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-4;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-3);
        for _ in 0..10 {
            let spec = ConvLayerSpec::new(
                rng.gen_range(1..4),
                rng.gen_range(1..4),
                rng.gen_range(1..4),
                rng.gen_range(1..3),
                Nonlinearity::None,
            );
            let p = random_layer(&mut rng, &spec);
            let t_x = spec.kw + rng.gen_range(0..6);
            let x = random_matrix(&mut rng, t_x, spec.d_in);
            let t_y = spec.output_len(x.rows()).unwrap();
            // loss = sum(c * y) for a fixed random c, so dL/dy = c
            let c = random_matrix(&mut rng, t_y, spec.d_out);
            let loss = |x: &Matrix<f64>, p: &LayerParams<f64>| -> f64 {
                let y = conv1d_forward(x, &spec, p).unwrap();
                y.as_slice().iter().zip(c.as_slice()).map(|(a, b)| a * b).sum()
            };
            let g = conv1d_backward(&x, &spec, &p, &c).unwrap();
            for idx in 0..p.weight.len() {
                let (mut up, mut dn) = (p.clone(), p.clone());
                up.weight[idx] += h;
                dn.weight[idx] -= h;
                let fd = (loss(&x, &up) - loss(&x, &dn)) / (2.0 * h);
                assert!(rel(g.d_weight[idx], fd) < 1e-5);
            }
            for idx in 0..p.bias.len() {
                let (mut up, mut dn) = (p.clone(), p.clone());
                up.bias[idx] += h;
                dn.bias[idx] -= h;
                let fd = (loss(&x, &up) - loss(&x, &dn)) / (2.0 * h);
                assert!(rel(g.d_bias[idx], fd) < 1e-5);
            }
            for idx in 0..x.as_slice().len() {
                let (mut up, mut dn) = (x.clone(), x.clone());
                up.as_mut_slice()[idx] += h;
                dn.as_mut_slice()[idx] -= h;
                let fd = (loss(&up, &p) - loss(&dn, &p)) / (2.0 * h);
                assert!(rel(g.d_x.as_slice()[idx], fd) < 1e-5);
            }
        }
    }
}

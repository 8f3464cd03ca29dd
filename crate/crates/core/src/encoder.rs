//! A small rectified MLP embedding network with hand-written backprop, an
//! L2-normalised output, SGD with momentum, and the momentum (EMA) key encoder.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{all_finite, dot, norm, Scalar};
use crate::subspace::Embedding;

/// Pre-normalisation norms below this get the same amount added before dividing.
pub const NORM_GUARD: f64 = 1e-12;

/// One affine layer, `y = W x + b` with `W` of shape out×in.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn forward_into(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend((0..self.out_dim()).map(|i| dot(self.weight.row(i), x) + self.bias[i]));
    }
}

/// Layers applied in order with a rectifier between consecutive layers and
/// none after the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Linear<T>>,
}

impl<T: Scalar> Mlp<T> {
    pub fn new(layers: Vec<Linear<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ShapeMismatch(
                "an MLP needs at least one layer".into(),
            ));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i}: bias has {} entries for {} outputs",
                    l.bias.len(),
                    l.out_dim()
                )));
            }
            if !all_finite(l.weight.as_slice()) || !all_finite(&l.bias) {
                return Err(Error::NonFinite("mlp parameters"));
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} expects {} inputs, previous layer emits {}",
                    l.in_dim(),
                    layers[i - 1].out_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Fan-in scaled uniform initialisation, `U(−1/√fan_in, 1/√fan_in)` for
    /// weights and biases. `dims` lists every width from input to output.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::ShapeMismatch(format!(
                "invalid layer widths {dims:?}"
            )));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut draw = || T::lit(rng.random_range(-bound..bound));
                let weight = (0..fan_in * fan_out).map(|_| draw()).collect();
                let bias = (0..fan_out).map(|_| draw()).collect();
                Linear {
                    weight: Matrix::from_row_major(fan_out, fan_in, weight).expect("sizes match"),
                    bias,
                }
            })
            .collect();
        Self::new(layers)
    }

    /// Single identity layer with zero bias.
    pub fn identity(dim: usize) -> Self {
        Self {
            layers: vec![Linear {
                weight: Matrix::identity(dim),
                bias: vec![T::zero(); dim],
            }],
        }
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Linear {
                    weight: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![T::zero(); l.out_dim()],
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Linear<T>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// `(out, in)` per layer.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .map(|l| (l.out_dim(), l.in_dim()))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Parameters in layer order, each layer's weights (row-major) then bias.
    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.as_slice().iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.as_mut_slice().iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.params().copied().collect()
    }

    pub fn set_flat(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} parameters",
                values.len(),
                self.num_params()
            )));
        }
        for (p, &v) in self.params_mut().zip(values) {
            *p = v;
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shapes() == other.shapes()
    }

    fn require_same_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shapes(),
                other.shapes()
            )))
        }
    }

    /// `self += alpha · other`.
    pub fn add_scaled(&mut self, other: &Self, alpha: T) -> Result<()> {
        self.require_same_shape(other)?;
        for (p, &q) in self.params_mut().zip(other.params()) {
            *p += alpha * q;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|x| x.is_finite())
    }
}

/// Activations kept by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// Input to each layer.
    inputs: Vec<Vec<T>>,
    /// Output of the final layer before normalisation.
    feature: Vec<T>,
    /// Divisor used for normalisation (norm plus guard when tiny).
    divisor: T,
    embedding: Vec<T>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn feature(&self) -> &[T] {
        &self.feature
    }
}

/// Runs the network and L2-normalises the result.
pub fn forward<T: Scalar>(params: &Mlp<T>, input: &[T]) -> Result<(Embedding<T>, ForwardCache<T>)> {
    if input.len() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "encoder input",
            expected: params.input_dim(),
            got: input.len(),
        });
    }
    let n = params.layers.len();
    let mut inputs = Vec::with_capacity(n);
    let mut x = input.to_vec();
    let mut y = Vec::new();
    for (i, layer) in params.layers.iter().enumerate() {
        layer.forward_into(&x, &mut y);
        if !all_finite(&y) {
            return Err(Error::NonFiniteActivation { layer: i });
        }
        inputs.push(std::mem::take(&mut x));
        if i + 1 < n {
            x = y.iter().map(|&v| v.max(T::zero())).collect();
        }
    }
    let feature = y;
    let (divisor, embedding) = normalize_guarded(&feature);
    let cache = ForwardCache {
        inputs,
        feature,
        divisor,
        embedding: embedding.clone(),
    };
    Ok((Embedding::from_guarded(embedding), cache))
}

/// Embedding only, without keeping activations.
pub fn embed<T: Scalar>(params: &Mlp<T>, input: &[T]) -> Result<Embedding<T>> {
    forward(params, input).map(|(e, _)| e)
}

fn normalize_guarded<T: Scalar>(f: &[T]) -> (T, Vec<T>) {
    let n = norm(f);
    let guard = T::lit(NORM_GUARD);
    let divisor = if n < guard { n + guard } else { n };
    (divisor, f.iter().map(|&x| x / divisor).collect())
}

/// Parameter gradients given the gradient with respect to the embedding.
///
/// The embedding gradient is first mapped through the normalisation Jacobian
/// `(I − v vᵀ) / ‖f‖`.
pub fn backward<T: Scalar>(
    params: &Mlp<T>,
    cache: &ForwardCache<T>,
    grad_wrt_embedding: &[T],
) -> Result<Mlp<T>> {
    let mut grads = params.zeros_like();
    backward_accumulate(params, cache, grad_wrt_embedding, T::one(), &mut grads)?;
    Ok(grads)
}

/// Adds `scale ·` (parameter gradients) into `grads`.
pub fn backward_accumulate<T: Scalar>(
    params: &Mlp<T>,
    cache: &ForwardCache<T>,
    grad_wrt_embedding: &[T],
    scale: T,
    grads: &mut Mlp<T>,
) -> Result<()> {
    if cache.inputs.len() != params.layers.len()
        || cache.feature.len() != params.output_dim()
        || grad_wrt_embedding.len() != params.output_dim()
    {
        return Err(Error::ShapeMismatch(
            "forward cache or embedding gradient does not match the network".into(),
        ));
    }
    params.require_same_shape(grads)?;

    let mut g = feature_gradient(&cache.embedding, cache.divisor, grad_wrt_embedding);
    for li in (0..params.layers.len()).rev() {
        let layer = &params.layers[li];
        let x = &cache.inputs[li];
        if x.len() != layer.in_dim() {
            return Err(Error::ShapeMismatch(format!("cached input of layer {li}")));
        }
        let gl = &mut grads.layers[li];
        let in_dim = layer.in_dim();
        for (o, &go) in g.iter().enumerate() {
            if go == T::zero() {
                continue;
            }
            let s = go * scale;
            gl.bias[o] += s;
            let row = &mut gl.weight.as_mut_slice()[o * in_dim..(o + 1) * in_dim];
            for (w, &xi) in row.iter_mut().zip(x) {
                *w += s * xi;
            }
        }
        if li > 0 {
            let gin = layer.weight.transpose_matvec(&g)?;
            // x is the rectified output of the previous layer: zero exactly where it was clipped
            g = gin
                .into_iter()
                .zip(x)
                .map(|(gi, &xi)| if xi > T::zero() { gi } else { T::zero() })
                .collect();
        }
    }
    Ok(())
}

/// `(I − v vᵀ) g / divisor`.
pub fn feature_gradient<T: Scalar>(embedding: &[T], divisor: T, g: &[T]) -> Vec<T> {
    let vg = dot(embedding, g);
    g.iter()
        .zip(embedding)
        .map(|(&gi, &vi)| (gi - vi * vg) / divisor)
        .collect()
}

/// Query encoder plus its momentum-averaged key encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderPair<T> {
    pub query: Mlp<T>,
    key: Mlp<T>,
    momentum: T,
}

pub const DEFAULT_KEY_MOMENTUM: f64 = 0.999;

impl<T: Scalar> EncoderPair<T> {
    /// The key encoder starts as an exact copy of `query`.
    pub fn new(query: Mlp<T>, momentum: T) -> Result<Self> {
        check_momentum(momentum, "key_momentum")?;
        Ok(Self {
            key: query.clone(),
            query,
            momentum,
        })
    }

    pub fn from_parts(query: Mlp<T>, key: Mlp<T>, momentum: T) -> Result<Self> {
        check_momentum(momentum, "key_momentum")?;
        query.require_same_shape(&key)?;
        Ok(Self {
            query,
            key,
            momentum,
        })
    }

    /// Read-only: the key encoder only changes through [`Self::momentum_update`].
    pub fn key(&self) -> &Mlp<T> {
        &self.key
    }

    pub fn momentum(&self) -> T {
        self.momentum
    }

    /// `key ← m·key + (1 − m)·query`.
    pub fn momentum_update(&mut self) -> Result<()> {
        self.query.require_same_shape(&self.key)?;
        let m = self.momentum;
        let one_minus = T::one() - m;
        for (k, &q) in self.key.params_mut().zip(self.query.params()) {
            *k = m * *k + one_minus * q;
        }
        Ok(())
    }
}

fn check_momentum<T: Scalar>(m: T, key: &'static str) -> Result<()> {
    if !(m >= T::zero() && m < T::one()) {
        return Err(Error::InvalidConfig {
            key,
            reason: format!("must lie in [0, 1), got {m}"),
        });
    }
    Ok(())
}

/// SGD with heavy-ball momentum; weight decay is added to the gradient.
///
/// `buf ← μ·buf + (g + λ·p)`, then `p ← p − η·buf`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd<T> {
    pub momentum: T,
    pub weight_decay: T,
    velocity: Mlp<T>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(params: &Mlp<T>, momentum: T, weight_decay: T) -> Result<Self> {
        check_momentum(momentum, "sgd_momentum")?;
        if !(weight_decay >= T::zero()) {
            return Err(Error::InvalidConfig {
                key: "weight_decay",
                reason: format!("must be non-negative, got {weight_decay}"),
            });
        }
        Ok(Self {
            momentum,
            weight_decay,
            velocity: params.zeros_like(),
        })
    }

    pub fn from_parts(momentum: T, weight_decay: T, velocity: Mlp<T>) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity,
        }
    }

    pub fn velocity(&self) -> &Mlp<T> {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut Mlp<T>, grads: &Mlp<T>, learning_rate: T) -> Result<()> {
        if !(learning_rate >= T::zero()) {
            return Err(Error::InvalidConfig {
                key: "lr",
                reason: format!("must be non-negative, got {learning_rate}"),
            });
        }
        params.require_same_shape(grads)?;
        params.require_same_shape(&self.velocity)?;
        if !grads.is_finite() {
            return Err(Error::NonFiniteGradient);
        }
        let (mu, wd) = (self.momentum, self.weight_decay);
        for ((p, &g), v) in params
            .params_mut()
            .zip(grads.params())
            .zip(self.velocity.params_mut())
        {
            *v = mu * *v + g + wd * *p;
            *p -= learning_rate * *v;
        }
        Ok(())
    }
}

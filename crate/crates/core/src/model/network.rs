use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::CleegnConfig;
use crate::error::{Error, Result};
use crate::neuralcore::{
    adam_step, batchnorm_backward, batchnorm_infer, batchnorm_train, conv2d_backward, conv2d_forward, permute_ch,
    permute_hc, AdamConfig, AdamState, BatchNormLayer, BnCache, ConvLayer, Dims4, Mode, Padding, Real, Tensor4,
};

/// Names of the learnable arrays, in storage order.
pub const PARAM_NAMES: [&str; 18] = [
    "enc_spatial.weight",
    "enc_spatial.bias",
    "bn1.gamma",
    "bn1.beta",
    "enc_temporal.weight",
    "enc_temporal.bias",
    "bn2.gamma",
    "bn2.beta",
    "dec_temporal.weight",
    "dec_temporal.bias",
    "bn3.gamma",
    "bn3.beta",
    "dec_spatial.weight",
    "dec_spatial.bias",
    "bn4.gamma",
    "bn4.beta",
    "dec_out.weight",
    "dec_out.bias",
];

/// Names of the batch-norm running statistics, in storage order.
pub const RUNNING_STAT_NAMES: [&str; 8] = [
    "bn1.running_mean",
    "bn1.running_var",
    "bn2.running_mean",
    "bn2.running_var",
    "bn3.running_mean",
    "bn3.running_var",
    "bn4.running_mean",
    "bn4.running_var",
];

/// Borrowed view of one named array with its logical shape.
#[derive(Clone, Debug)]
pub struct ArrayRef<'a, R> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub data: &'a [R],
}

/// The encoder/decoder stack:
///
/// ```text
/// (B,C,T,1) -enc_spatial-> (B,1,T,C) -permute-> (B,C,T,1) -bn1-
///           -enc_temporal-> (B,C,T,N_F) -bn2- -dec_temporal-> (B,C,T,N_F) -bn3-
///           -dec_spatial-> (B,C,T,C) -bn4- -dec_out-> (B,C,T,1)
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct CleegnModel<R> {
    config: CleegnConfig,
    enc_spatial: ConvLayer<R>,
    bn1: BatchNormLayer<R>,
    enc_temporal: ConvLayer<R>,
    bn2: BatchNormLayer<R>,
    dec_temporal: ConvLayer<R>,
    bn3: BatchNormLayer<R>,
    dec_spatial: ConvLayer<R>,
    bn4: BatchNormLayer<R>,
    dec_out: ConvLayer<R>,
    version: u64,
}

/// Everything a train-mode forward pass keeps for the backward pass.
#[derive(Debug)]
pub struct ForwardCache<R> {
    version: u64,
    consumed: bool,
    input: Tensor4<R>,
    z1: Tensor4<R>,
    z2: Tensor4<R>,
    z3: Tensor4<R>,
    z4: Tensor4<R>,
    bn: [BnCache<R>; 4],
}

/// Gradients for every learnable array (ordered as [`PARAM_NAMES`]) plus the
/// gradient with respect to the network input.
#[derive(Clone, Debug)]
pub struct Gradients<R> {
    pub arrays: Vec<Vec<R>>,
    pub input: Tensor4<R>,
}

/// Post-convolution activations of the four hidden convolution layers.
#[derive(Clone, Debug)]
pub struct LatentTaps<R> {
    pub enc_spatial: Tensor4<R>,
    pub enc_temporal: Tensor4<R>,
    pub dec_temporal: Tensor4<R>,
    pub dec_spatial: Tensor4<R>,
}

fn glorot<R: Real>(layer: &mut ConvLayer<R>, rng: &mut ChaCha8Rng) {
    let d = layer.weights.dims();
    let receptive = d.height * d.width;
    let fan_in = receptive * d.features;
    let fan_out = receptive * d.batch;
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for w in layer.weights.as_mut_slice() {
        *w = R::from_f64_lossy(rng.gen_range(-limit..=limit));
    }
}

impl<R: Real> CleegnModel<R> {
    /// Allocate every layer for `config` and initialize it deterministically
    /// from `seed`: Glorot-uniform conv weights, zero biases, unit/zero
    /// batch-norm affine terms and identity running statistics.
    pub fn build(config: CleegnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let nf = config.n_filters;
        let k = config.kernel_width();
        let eps = R::from_f64_lossy(config.bn_eps as f64);
        let mom = R::from_f64_lossy(config.bn_momentum as f64);
        let mut model = CleegnModel {
            config,
            enc_spatial: ConvLayer::zeros(c, (c, 1), 1, Padding::Valid)?,
            bn1: BatchNormLayer::new(1, eps, mom),
            enc_temporal: ConvLayer::zeros(nf, (1, k), 1, Padding::SameZero)?,
            bn2: BatchNormLayer::new(nf, eps, mom),
            dec_temporal: ConvLayer::zeros(nf, (1, k), nf, Padding::SameZero)?,
            bn3: BatchNormLayer::new(nf, eps, mom),
            dec_spatial: ConvLayer::zeros(c, (c, 1), nf, Padding::SameZero)?,
            bn4: BatchNormLayer::new(c, eps, mom),
            dec_out: ConvLayer::zeros(1, (c, 1), c, Padding::SameZero)?,
            version: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in [
            &mut model.enc_spatial,
            &mut model.enc_temporal,
            &mut model.dec_temporal,
            &mut model.dec_spatial,
            &mut model.dec_out,
        ] {
            glorot(layer, &mut rng);
        }
        Ok(model)
    }

    pub fn config(&self) -> &CleegnConfig {
        &self.config
    }

    pub fn conv_layers(&self) -> [&ConvLayer<R>; 5] {
        [&self.enc_spatial, &self.enc_temporal, &self.dec_temporal, &self.dec_spatial, &self.dec_out]
    }

    pub fn bn_layers(&self) -> [&BatchNormLayer<R>; 4] {
        [&self.bn1, &self.bn2, &self.bn3, &self.bn4]
    }

    /// Total number of learnable scalars actually allocated.
    pub fn learnable_count(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }

    pub fn params(&self) -> Vec<ArrayRef<'_, R>> {
        let mut out = Vec::with_capacity(PARAM_NAMES.len());
        let convs = self.conv_layers();
        let bns = self.bn_layers();
        let mut names = PARAM_NAMES.iter();
        for (i, conv) in convs.iter().enumerate() {
            out.push(ArrayRef {
                name: names.next().unwrap(),
                shape: conv.weights.dims().as_array().to_vec(),
                data: conv.weights.as_slice(),
            });
            out.push(ArrayRef {
                name: names.next().unwrap(),
                shape: vec![conv.bias.len()],
                data: &conv.bias,
            });
            if let Some(bn) = bns.get(i) {
                out.push(ArrayRef {
                    name: names.next().unwrap(),
                    shape: vec![bn.gamma.len()],
                    data: &bn.gamma,
                });
                out.push(ArrayRef {
                    name: names.next().unwrap(),
                    shape: vec![bn.beta.len()],
                    data: &bn.beta,
                });
            }
        }
        out
    }

    /// Mutable access to every learnable array in [`PARAM_NAMES`] order.
    /// Invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> Vec<&mut [R]> {
        self.version += 1;
        let CleegnModel {
            enc_spatial,
            bn1,
            enc_temporal,
            bn2,
            dec_temporal,
            bn3,
            dec_spatial,
            bn4,
            dec_out,
            ..
        } = self;
        vec![
            enc_spatial.weights.as_mut_slice(),
            &mut enc_spatial.bias,
            &mut bn1.gamma,
            &mut bn1.beta,
            enc_temporal.weights.as_mut_slice(),
            &mut enc_temporal.bias,
            &mut bn2.gamma,
            &mut bn2.beta,
            dec_temporal.weights.as_mut_slice(),
            &mut dec_temporal.bias,
            &mut bn3.gamma,
            &mut bn3.beta,
            dec_spatial.weights.as_mut_slice(),
            &mut dec_spatial.bias,
            &mut bn4.gamma,
            &mut bn4.beta,
            dec_out.weights.as_mut_slice(),
            &mut dec_out.bias,
        ]
    }

    pub fn running_stats(&self) -> Vec<ArrayRef<'_, R>> {
        let mut names = RUNNING_STAT_NAMES.iter();
        let mut out = Vec::with_capacity(RUNNING_STAT_NAMES.len());
        for bn in self.bn_layers() {
            for data in [&bn.running_mean, &bn.running_var] {
                out.push(ArrayRef {
                    name: names.next().unwrap(),
                    shape: vec![data.len()],
                    data,
                });
            }
        }
        out
    }

    pub fn running_stats_mut(&mut self) -> Vec<&mut [R]> {
        self.version += 1;
        let CleegnModel { bn1, bn2, bn3, bn4, .. } = self;
        let mut out: Vec<&mut [R]> = Vec::with_capacity(8);
        for bn in [bn1, bn2, bn3, bn4] {
            out.push(&mut bn.running_mean);
            out.push(&mut bn.running_var);
        }
        out
    }

    /// Same network in another precision.
    pub fn cast<S: Real>(&self) -> CleegnModel<S> {
        fn conv<R: Real, S: Real>(l: &ConvLayer<R>) -> ConvLayer<S> {
            ConvLayer {
                weights: l.weights.cast(),
                bias: l.bias.iter().map(|v| S::from_f64_lossy(v.as_f64())).collect(),
                padding: l.padding,
            }
        }
        fn bn<R: Real, S: Real>(l: &BatchNormLayer<R>) -> BatchNormLayer<S> {
            let c = |v: &Vec<R>| v.iter().map(|x| S::from_f64_lossy(x.as_f64())).collect();
            BatchNormLayer {
                gamma: c(&l.gamma),
                beta: c(&l.beta),
                running_mean: c(&l.running_mean),
                running_var: c(&l.running_var),
                eps: S::from_f64_lossy(l.eps.as_f64()),
                momentum: S::from_f64_lossy(l.momentum.as_f64()),
            }
        }
        CleegnModel {
            config: self.config,
            enc_spatial: conv(&self.enc_spatial),
            bn1: bn(&self.bn1),
            enc_temporal: conv(&self.enc_temporal),
            bn2: bn(&self.bn2),
            dec_temporal: conv(&self.dec_temporal),
            bn3: bn(&self.bn3),
            dec_spatial: conv(&self.dec_spatial),
            bn4: bn(&self.bn4),
            dec_out: conv(&self.dec_out),
            version: 0,
        }
    }

    /// Fold a fixed amplitude scale into the first and last convolutions.
    ///
    /// A model trained on `x / scale -> y / scale` becomes one that maps raw
    /// `x -> y`: the spatial encoder weights are divided by `scale` and the
    /// output convolution is multiplied by it.
    pub fn fold_amplitude_scale(&mut self, scale: R) {
        self.version += 1;
        for w in self.enc_spatial.weights.as_mut_slice() {
            *w /= scale;
        }
        for w in self.dec_out.weights.as_mut_slice().iter_mut().chain(self.dec_out.bias.iter_mut()) {
            *w *= scale;
        }
    }

    fn check_input(&self, x: &Tensor4<R>) -> Result<()> {
        let d = x.dims();
        let c = self.config.channels;
        let k = self.config.kernel_width();
        if d.height != c || d.features != 1 || d.width < k || d.batch == 0 {
            return Err(Error::shape(
                "CleegnModel::forward",
                format!("(B >= 1, C = {c}, T >= {k}, 1)"),
                d,
            ));
        }
        Ok(())
    }

    /// Inference-mode forward pass (batch norm uses running statistics).
    pub fn infer(&self, x: &Tensor4<R>) -> Result<Tensor4<R>> {
        self.infer_with_taps(x).map(|(y, _)| y)
    }

    /// Inference forward that also returns each hidden convolution's output.
    pub fn infer_with_taps(&self, x: &Tensor4<R>) -> Result<(Tensor4<R>, LatentTaps<R>)> {
        self.check_input(x)?;
        let a1 = conv2d_forward(x, &self.enc_spatial)?;
        let z1 = batchnorm_infer(&permute_hc(&a1)?, &self.bn1)?;
        let a2 = conv2d_forward(&z1, &self.enc_temporal)?;
        let z2 = batchnorm_infer(&a2, &self.bn2)?;
        let a3 = conv2d_forward(&z2, &self.dec_temporal)?;
        let z3 = batchnorm_infer(&a3, &self.bn3)?;
        let a4 = conv2d_forward(&z3, &self.dec_spatial)?;
        let z4 = batchnorm_infer(&a4, &self.bn4)?;
        let y = conv2d_forward(&z4, &self.dec_out)?;
        Ok((
            y,
            LatentTaps {
                enc_spatial: a1,
                enc_temporal: a2,
                dec_temporal: a3,
                dec_spatial: a4,
            },
        ))
    }

    /// Train-mode forward: batch statistics are used and running statistics
    /// updated; the returned cache feeds [`CleegnModel::backward`].
    pub fn forward_train(&mut self, x: &Tensor4<R>) -> Result<(Tensor4<R>, ForwardCache<R>)> {
        self.check_input(x)?;
        let a1 = conv2d_forward(x, &self.enc_spatial)?;
        let (z1, c1) = batchnorm_train(&permute_hc(&a1)?, &mut self.bn1)?;
        let a2 = conv2d_forward(&z1, &self.enc_temporal)?;
        let (z2, c2) = batchnorm_train(&a2, &mut self.bn2)?;
        let a3 = conv2d_forward(&z2, &self.dec_temporal)?;
        let (z3, c3) = batchnorm_train(&a3, &mut self.bn3)?;
        let a4 = conv2d_forward(&z3, &self.dec_spatial)?;
        let (z4, c4) = batchnorm_train(&a4, &mut self.bn4)?;
        let y = conv2d_forward(&z4, &self.dec_out)?;
        let cache = ForwardCache {
            version: self.version,
            consumed: false,
            input: x.clone(),
            z1,
            z2,
            z3,
            z4,
            bn: [c1, c2, c3, c4],
        };
        Ok((y, cache))
    }

    pub fn forward(&mut self, x: &Tensor4<R>, mode: Mode) -> Result<(Tensor4<R>, Option<ForwardCache<R>>)> {
        match mode {
            Mode::Train => self.forward_train(x).map(|(y, c)| (y, Some(c))),
            Mode::Infer => self.infer(x).map(|y| (y, None)),
        }
    }

    pub fn backward(&self, cache: &mut ForwardCache<R>, grad_out: &Tensor4<R>) -> Result<Gradients<R>> {
        if cache.consumed || cache.bn.iter().any(BnCache::is_consumed) {
            return Err(Error::CacheConsumed);
        }
        if cache.version != self.version {
            return Err(Error::StaleCache);
        }
        grad_out.expect_dims(cache.input.dims(), "CleegnModel::backward grad_out")?;
        cache.consumed = true;
        let [c1, c2, c3, c4] = &mut cache.bn;

        let g5 = conv2d_backward(&cache.z4, &self.dec_out, grad_out)?;
        let b4 = batchnorm_backward(c4, &g5.input)?;
        let g4 = conv2d_backward(&cache.z3, &self.dec_spatial, &b4.input)?;
        let b3 = batchnorm_backward(c3, &g4.input)?;
        let g3 = conv2d_backward(&cache.z2, &self.dec_temporal, &b3.input)?;
        let b2 = batchnorm_backward(c2, &g3.input)?;
        let g2 = conv2d_backward(&cache.z1, &self.enc_temporal, &b2.input)?;
        let b1 = batchnorm_backward(c1, &g2.input)?;
        let ga1 = permute_ch(&b1.input)?;
        let g1 = conv2d_backward(&cache.input, &self.enc_spatial, &ga1)?;

        let arrays = vec![
            g1.weights.into_vec(),
            g1.bias,
            b1.gamma,
            b1.beta,
            g2.weights.into_vec(),
            g2.bias,
            b2.gamma,
            b2.beta,
            g3.weights.into_vec(),
            g3.bias,
            b3.gamma,
            b3.beta,
            g4.weights.into_vec(),
            g4.bias,
            b4.gamma,
            b4.beta,
            g5.weights.into_vec(),
            g5.bias,
        ];
        Ok(Gradients { arrays, input: g1.input })
    }

    /// Shapes of every intermediate tensor for an input of `input` dims, in
    /// layer order (conv, permute, bn, conv, bn, ...).
    pub fn layer_shapes(&self, input: Dims4) -> Result<Vec<(&'static str, Dims4)>> {
        let a1 = self.enc_spatial.output_dims(input)?;
        let p = Dims4::new(a1.batch, a1.features, a1.width, 1);
        let a2 = self.enc_temporal.output_dims(p)?;
        let a3 = self.dec_temporal.output_dims(a2)?;
        let a4 = self.dec_spatial.output_dims(a3)?;
        let y = self.dec_out.output_dims(a4)?;
        Ok(vec![
            ("enc_spatial", a1),
            ("permute", p),
            ("bn1", p),
            ("enc_temporal", a2),
            ("bn2", a2),
            ("dec_temporal", a3),
            ("bn3", a3),
            ("dec_spatial", a4),
            ("bn4", a4),
            ("dec_out", y),
        ])
    }
}

/// Adam moments for every learnable array of one model.
#[derive(Clone, Debug)]
pub struct ModelOptimizer<R> {
    pub config: AdamConfig,
    states: Vec<AdamState<R>>,
}

impl<R: Real> ModelOptimizer<R> {
    pub fn new(model: &CleegnModel<R>, config: AdamConfig) -> Self {
        ModelOptimizer {
            config,
            states: model.params().iter().map(|p| AdamState::new(p.data.len())).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.states.first().map_or(0, |s| s.t)
    }

    /// Apply one Adam step to every array. Non-finite gradients abort before
    /// any parameter changes.
    pub fn step(&mut self, model: &mut CleegnModel<R>, grads: &Gradients<R>, lr: f64) -> Result<()> {
        if grads.arrays.len() != PARAM_NAMES.len() {
            return Err(Error::shape("ModelOptimizer::step", PARAM_NAMES.len(), grads.arrays.len()));
        }
        for (name, g) in PARAM_NAMES.iter().zip(&grads.arrays) {
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {name}[{i}]")));
            }
        }
        let cfg = self.config;
        for (((name, params), g), state) in PARAM_NAMES
            .iter()
            .zip(model.params_mut())
            .zip(&grads.arrays)
            .zip(&mut self.states)
        {
            adam_step(name, params, g, state, lr, &cfg)?;
        }
        Ok(())
    }
}

//! Parameter registry and the two parameterized primitives (convolution and
//! channel layer norm) every block is assembled from.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{ConvOptions, PaddingMode, Scalar, Shape, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Uniform weight init, bound derived from the fan-in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightInit {
    /// `√(1/fan_in)`.
    #[default]
    FanIn,
    /// `√(6/fan_in)`. Blows up the quadratic SFAM path at any useful depth.
    He,
}

impl WeightInit {
    pub fn bound(self, fan_in: usize) -> f64 {
        let k = match self {
            WeightInit::FanIn => 1.0,
            WeightInit::He => 6.0,
        };
        (k / fan_in.max(1) as f64).sqrt()
    }
}

/// Ordered, named parameter tensors.
#[derive(Clone, Debug, Default)]
pub struct Params<T: Scalar = f32> {
    entries: Vec<(String, Tensor<T>)>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Params<T> {
    pub fn new() -> Self {
        Params {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn register(&mut self, name: String, value: Tensor<T>) -> Result<ParamId> {
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, value));
        Ok(ParamId(self.entries.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].1
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].1
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].0
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    /// Replaces a parameter's value; the shape must not change.
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let (name, slot) = &mut self.entries[id.0];
        if slot.shape() != value.shape() {
            return Err(Error::ParamShape {
                name: name.clone(),
                expected: slot.shape(),
                found: value.shape(),
            });
        }
        *slot = value;
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), t.cast()))
                .collect(),
            index: self.index.clone(),
        }
    }

    /// Overwrites every parameter with `U(-scale, scale)` draws. Handy for
    /// exercising code paths that the deterministic init leaves at zero.
    pub fn randomize(&mut self, seed: u64, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, t) in &mut self.entries {
            for v in t.data_mut() {
                *v = T::of(rng.random_range(-scale..scale));
            }
        }
    }

    /// Puts every parameter on `tape`. Trainable parameters accumulate
    /// gradients; frozen ones are constants.
    pub fn bind<'t>(&self, tape: &'t Tape<T>, trainable: bool) -> Ctx<'t, T> {
        let vars = self
            .entries
            .iter()
            .map(|(_, t)| {
                if trainable {
                    tape.var(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        Ctx { tape, vars }
    }

    /// Binds an explicit list of tensors (one per registered parameter, in
    /// order) instead of the stored values.
    pub fn bind_vars<'t>(&self, tape: &'t Tape<T>, vars: Vec<Var<'t, T>>) -> Result<Ctx<'t, T>> {
        if vars.len() != self.entries.len() {
            return Err(Error::invalid(
                "bind_vars",
                format!("{} vars for {} parameters", vars.len(), self.entries.len()),
            ));
        }
        for ((name, t), v) in self.entries.iter().zip(&vars) {
            if t.shape() != v.shape() {
                return Err(Error::ParamShape {
                    name: name.clone(),
                    expected: t.shape(),
                    found: v.shape(),
                });
            }
        }
        Ok(Ctx { tape, vars })
    }
}

/// Parameters bound to one tape for one forward pass.
pub struct Ctx<'t, T: Scalar = f32> {
    tape: &'t Tape<T>,
    vars: Vec<Var<'t, T>>,
}

impl<'t, T: Scalar> Ctx<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn param(&self, id: ParamId) -> &Var<'t, T> {
        &self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var<'t, T>] {
        &self.vars
    }
}

/// Registers parameters under a dotted name prefix with deterministic init.
pub struct ParamBuilder<'a, T: Scalar> {
    params: &'a mut Params<T>,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
    init: WeightInit,
}

impl<'a, T: Scalar> ParamBuilder<'a, T> {
    pub fn new(params: &'a mut Params<T>, rng: &'a mut ChaCha8Rng) -> Self {
        ParamBuilder {
            params,
            rng,
            prefix: String::new(),
            init: WeightInit::default(),
        }
    }

    pub fn with_init(mut self, init: WeightInit) -> Self {
        self.init = init;
        self
    }

    pub fn scope(&mut self, name: &str) -> ParamBuilder<'_, T> {
        let prefix = self.qualify(name);
        ParamBuilder {
            params: self.params,
            rng: self.rng,
            prefix,
            init: self.init,
        }
    }

    fn qualify(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_owned()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    pub fn constant(&mut self, name: &str, shape: impl Into<Shape>, v: f64) -> Result<ParamId> {
        let name = self.qualify(name);
        self.params.register(name, Tensor::full(shape, T::of(v)))
    }

    /// `U(-b, b)` with `b` from the builder's [`WeightInit`].
    pub fn fan_in_uniform(&mut self, name: &str, shape: impl Into<Shape>) -> Result<ParamId> {
        let shape = shape.into();
        let bound = self.init.bound(shape.c() * shape.h() * shape.w());
        let rng = &mut *self.rng;
        let t = Tensor::from_fn(shape, |_| T::of(rng.random_range(-bound..bound)));
        let name = self.qualify(name);
        self.params.register(name, t)
    }
}

/// Convolution layer: `weight` `(out, in/groups, k, k)`, optional `bias`.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub opts: ConvOptions,
}

impl Conv {
    pub fn new<T: Scalar>(
        b: &mut ParamBuilder<'_, T>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        opts: ConvOptions,
    ) -> Result<Self> {
        if opts.groups == 0 || cin % opts.groups != 0 || cout % opts.groups != 0 {
            return Err(Error::Config(format!(
                "{name}: groups={} must divide {cin} -> {cout} channels",
                opts.groups
            )));
        }
        let mut s = b.scope(name);
        let weight = s.fan_in_uniform("weight", [cout, cin / opts.groups, k, k])?;
        let bias = Some(s.constant("bias", [1, cout, 1, 1], 0.0)?);
        Ok(Conv { weight, bias, opts })
    }

    /// 1×1 channel mixing.
    pub fn pointwise<T: Scalar>(
        b: &mut ParamBuilder<'_, T>,
        name: &str,
        cin: usize,
        cout: usize,
    ) -> Result<Self> {
        Self::new(b, name, cin, cout, 1, ConvOptions::default())
    }

    /// Dense `k×k`, zero-padded to keep the spatial size.
    pub fn dense<T: Scalar>(
        b: &mut ParamBuilder<'_, T>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
    ) -> Result<Self> {
        Self::new(b, name, cin, cout, k, ConvOptions::same(k))
    }

    /// Depthwise `k×k` over `c` channels, zero-padded.
    pub fn depthwise<T: Scalar>(
        b: &mut ParamBuilder<'_, T>,
        name: &str,
        c: usize,
        k: usize,
    ) -> Result<Self> {
        Self::new(b, name, c, c, k, ConvOptions::depthwise(k, c))
    }

    pub fn with_padding_mode(mut self, mode: PaddingMode) -> Self {
        self.opts.padding_mode = mode;
        self
    }

    pub fn forward<'t, T: Scalar>(&self, ctx: &Ctx<'t, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        x.conv2d(
            ctx.param(self.weight),
            self.bias.map(|b| ctx.param(b)),
            self.opts,
        )
    }
}

/// Per-pixel layer norm over channels with a learned affine map.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new<T: Scalar>(b: &mut ParamBuilder<'_, T>, name: &str, c: usize) -> Result<Self> {
        let mut s = b.scope(name);
        Ok(LayerNorm {
            gain: s.constant("gain", [1, c, 1, 1], 1.0)?,
            bias: s.constant("bias", [1, c, 1, 1], 0.0)?,
        })
    }

    pub fn forward<'t, T: Scalar>(&self, ctx: &Ctx<'t, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        x.layer_norm(ctx.param(self.gain), ctx.param(self.bias), LAYER_NORM_EPS)
    }
}

use crate::gnn::layers::{init_params, layer_forward, param_shapes, GraphContext};
use crate::gnn::{GnnError, ModelSpec};
use crate::numcore::{softmax_rows, Tape, Tensor, Var};
use crate::scalar::Real;

/// A model specification with one concrete set of weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T: Real = f64> {
    spec: ModelSpec,
    params: Vec<Tensor<T>>,
}

impl<T: Real> Model<T> {
    /// Freshly initialised weights.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self, GnnError> {
        spec.validate()?;
        let params = init_params(&spec.layers, seed);
        Ok(Self { spec, params })
    }

    pub fn from_params(spec: ModelSpec, params: Vec<Tensor<T>>) -> Result<Self, GnnError> {
        spec.validate()?;
        let shapes: Vec<_> = spec.layers.iter().flat_map(param_shapes).collect();
        let got: Vec<_> = params.iter().map(Tensor::shape).collect();
        if shapes != got {
            return Err(GnnError::Spec(format!(
                "parameter shapes {got:?} do not match {shapes:?}"
            )));
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<Tensor<T>> {
        self.params
    }

    /// Records a forward pass on `tape`; returns the logits and the leaf
    /// handle of every parameter.
    pub fn record(
        &self,
        tape: &mut Tape<T>,
        ctx: &GraphContext<T>,
        features: &Tensor<T>,
    ) -> Result<(Var, Vec<Var>), GnnError> {
        let x = tape.leaf(features.clone());
        let vars: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.clone())).collect();
        let logits = forward_vars(&self.spec, tape, ctx, x, &vars)?;
        Ok((logits, vars))
    }

    pub fn logits(&self, ctx: &GraphContext<T>, features: &Tensor<T>) -> Result<Tensor<T>, GnnError> {
        let mut tape = Tape::new();
        let (logits, _) = self.record(&mut tape, ctx, features)?;
        Ok(tape.value(logits).clone())
    }

    /// Row-wise class probabilities.
    pub fn predict_proba(&self, ctx: &GraphContext<T>, features: &Tensor<T>) -> Result<Tensor<T>, GnnError> {
        Ok(softmax_rows(&self.logits(ctx, features)?))
    }

    pub fn predict(&self, ctx: &GraphContext<T>, features: &Tensor<T>) -> Result<Vec<usize>, GnnError> {
        Ok(self.logits(ctx, features)?.argmax_rows())
    }
}

/// Chains every layer of `spec` over `x` with parameters `params` in
/// storage order.
pub fn forward_vars<T: Real>(
    spec: &ModelSpec,
    tape: &mut Tape<T>,
    ctx: &GraphContext<T>,
    x: Var,
    params: &[Var],
) -> Result<Var, GnnError> {
    let mut h = x;
    let mut at = 0;
    for layer in &spec.layers {
        let k = param_shapes(layer).len();
        let slice = params
            .get(at..at + k)
            .ok_or_else(|| GnnError::Spec("too few parameters for the spec".into()))?;
        h = layer_forward(tape, ctx, layer, h, slice)?;
        at += k;
    }
    if at != params.len() {
        return Err(GnnError::Spec("too many parameters for the spec".into()));
    }
    Ok(h)
}

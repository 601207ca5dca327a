use crate::numcore::{NumError, Tape, Tensor, Var};
use crate::scalar::Real;

/// Gradients smaller than this are compared in absolute rather than relative
/// terms, so round-off in near-zero central differences is not amplified.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Outcome of comparing tape gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck<T: Real = f64> {
    pub max_relative_error: T,
    /// Distance of the unperturbed evaluation to the nearest kink; a check
    /// with a margin below `eps` may straddle a non-differentiable point.
    pub kink_margin: Option<T>,
}

/// Checks the gradient of a scalar map of one tensor.
pub fn grad_check<T, F>(f: F, x: &Tensor<T>, eps: T) -> Result<T, NumError>
where
    T: Real,
    F: Fn(&mut Tape<T>, Var) -> Result<Var, NumError>,
{
    let report = grad_check_params(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), eps)?;
    Ok(report.max_relative_error)
}

/// Checks the gradient of a scalar map with respect to several tensors.
pub fn grad_check_params<T, F>(f: F, params: &[Tensor<T>], eps: T) -> Result<GradCheck<T>, NumError>
where
    T: Real,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var, NumError>,
{
    let eval = |inputs: &[Tensor<T>]| -> Result<T, NumError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        scalar_of(&tape, out)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    scalar_of(&tape, out)?;
    tape.backward(out)?;
    let analytic: Vec<Tensor<T>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| {
            tape.grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols()))
        })
        .collect();

    let floor = T::lit(RELATIVE_ERROR_FLOOR);
    let two_eps = eps + eps;
    let mut work: Vec<Tensor<T>> = params.to_vec();
    let mut worst = T::zero();
    for (pi, p) in params.iter().enumerate() {
        for k in 0..p.len() {
            let orig = p.data()[k];
            work[pi].data_mut()[k] = orig + eps;
            let plus = eval(&work)?;
            work[pi].data_mut()[k] = orig - eps;
            let minus = eval(&work)?;
            work[pi].data_mut()[k] = orig;

            let numeric = (plus - minus) / two_eps;
            let a = analytic[pi].data()[k];
            let denom = a.abs().max(numeric.abs()).max(floor);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(GradCheck {
        max_relative_error: worst,
        kink_margin: tape.kink_margin(),
    })
}

fn scalar_of<T: Real>(tape: &Tape<T>, v: Var) -> Result<T, NumError> {
    let t = tape.value(v);
    if t.shape() != (1, 1) {
        return Err(NumError::NotScalar(t.shape()));
    }
    Ok(t.get(0, 0))
}

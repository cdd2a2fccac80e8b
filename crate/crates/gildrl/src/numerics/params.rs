use super::{NumericsError, Tape, Tensor, Var};

/// Flat, ordered collection of parameter tensors for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    tensors: Vec<Tensor>,
}

impl ParamVector {
    pub fn new(tensors: Vec<Tensor>) -> Self {
        ParamVector { tensors }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn count(&self) -> usize {
        self.tensors.len()
    }

    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        ParamVector {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.shape().to_vec()))
                .collect(),
        }
    }

    pub fn same_shapes(&self, other: &Self) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.shape() == b.shape())
    }

    /// `self += c * other`, elementwise.
    pub fn axpy(&mut self, c: f64, other: &Self) {
        debug_assert!(self.same_shapes(other));
        for (t, o) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in t.data_mut().iter_mut().zip(o.data()) {
                *x += c * y;
            }
        }
    }

    pub fn add_scaled(&self, c: f64, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(c, other);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter())
            .fold(0.0, |m, &v| m.max(v.abs()))
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_len());
        for t in &self.tensors {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Rebuild from a flat slice using `self` as the shape template.
    pub fn unflatten_like(&self, flat: &[f64]) -> Result<Self, NumericsError> {
        if flat.len() != self.total_len() {
            return Err(NumericsError::BadShape {
                op: "unflatten_like",
                detail: format!("expected {} values, got {}", self.total_len(), flat.len()),
            });
        }
        let mut tensors = Vec::with_capacity(self.tensors.len());
        let mut off = 0;
        for t in &self.tensors {
            let n = t.len();
            tensors.push(Tensor::from_vec(t.shape().to_vec(), flat[off..off + n].to_vec())?);
            off += n;
        }
        Ok(ParamVector { tensors })
    }

    /// Register every tensor as a differentiable leaf on `tape`.
    pub fn leaf_vars(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.leaf(t)).collect()
    }

    /// Register every tensor as a constant on `tape`.
    pub fn const_vars(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.constant(t)).collect()
    }
}

/// Gradient of a scalar function of one parameter set. Parameters a
/// path never reaches get an exact zero gradient.
pub fn grad<F>(params: &ParamVector, f: F) -> Result<ParamVector, NumericsError>
where
    F: FnOnce(&mut Tape, &[Var]) -> Result<Var, NumericsError>,
{
    Ok(grad_with_value(params, f)?.1)
}

/// [`grad`] that also returns the scalar value.
pub fn grad_with_value<F>(params: &ParamVector, f: F) -> Result<(f64, ParamVector), NumericsError>
where
    F: FnOnce(&mut Tape, &[Var]) -> Result<Var, NumericsError>,
{
    let mut tape = Tape::new();
    let vars = params.leaf_vars(&mut tape);
    let out = f(&mut tape, &vars)?;
    if !tape.shape(out).is_empty() {
        return Err(NumericsError::NotScalar {
            op: "grad",
            shape: tape.shape(out).to_vec(),
        });
    }
    let grads = tape.backward(out)?;
    let gv = collect_grads(params, &vars, |v| grads.get(v).map(<[f64]>::to_vec))?;
    Ok((tape.scalar_value(out), gv))
}

/// `∂/∂ω [ outer_vec · ∂ inner/∂φ ]` evaluated at `(phi, omega)`:
/// the vector–mixed-Jacobian product that drives the meta update.
///
/// The inner scalar's φ-gradient is recorded as tape nodes
/// ([`Tape::backward_graph`]), dotted with `outer_vec`, and the
/// resulting scalar is differentiated w.r.t. ω by an ordinary sweep.
pub fn grad_of_grad_expression<F>(
    outer_vec: &ParamVector,
    inner: F,
    phi: &ParamVector,
    omega: &ParamVector,
) -> Result<ParamVector, NumericsError>
where
    F: FnOnce(&mut Tape, &[Var], &[Var]) -> Result<Var, NumericsError>,
{
    if !outer_vec.same_shapes(phi) {
        return Err(NumericsError::BadShape {
            op: "grad_of_grad_expression",
            detail: format!(
                "outer_vec has {} values but phi has {}",
                outer_vec.total_len(),
                phi.total_len()
            ),
        });
    }
    let mut tape = Tape::new();
    let phi_vars = phi.leaf_vars(&mut tape);
    let omega_vars = omega.leaf_vars(&mut tape);
    let inner_out = inner(&mut tape, &phi_vars, &omega_vars)?;
    if !tape.shape(inner_out).is_empty() {
        return Err(NumericsError::NotScalar {
            op: "grad_of_grad_expression",
            shape: tape.shape(inner_out).to_vec(),
        });
    }
    let adj = tape.backward_graph(inner_out)?;

    // m = sum_i outer_i · (∂inner/∂φ)_i, built on the same tape.
    let mut dot: Option<Var> = None;
    for (pv, outer) in phi_vars.iter().zip(outer_vec.tensors()) {
        if let Some(gvar) = adj[pv.0] {
            let ov = tape.constant(outer);
            let prod = tape.mul(ov, gvar)?;
            let s = tape.sum(prod)?;
            dot = Some(match dot {
                Some(acc) => tape.add(acc, s)?,
                None => s,
            });
        }
    }
    let Some(m) = dot else {
        // inner never touched φ: the mixed partial is identically zero.
        return Ok(omega.zeros_like());
    };
    let grads = tape.backward(m)?;
    collect_grads(omega, &omega_vars, |v| grads.get(v).map(<[f64]>::to_vec))
}

fn collect_grads(
    template: &ParamVector,
    vars: &[Var],
    mut get: impl FnMut(Var) -> Option<Vec<f64>>,
) -> Result<ParamVector, NumericsError> {
    let mut tensors = Vec::with_capacity(vars.len());
    for (v, t) in vars.iter().zip(template.tensors()) {
        match get(*v) {
            Some(data) => tensors.push(Tensor::from_vec(t.shape().to_vec(), data)?),
            None => tensors.push(Tensor::zeros(t.shape().to_vec())),
        }
    }
    Ok(ParamVector::new(tensors))
}

/// Per-sample log-density of a diagonal Gaussian, `[m,n] -> [m,1]`.
/// All three operands may carry gradients.
pub fn diag_gaussian_log_density(
    tape: &mut Tape,
    x: Var,
    mean: Var,
    log_std: Var,
) -> Result<Var, NumericsError> {
    const LN_2PI: f64 = 1.8378770664093453;
    let d = tape.sub(x, mean)?;
    let dsq = tape.square(d)?;
    let inv_var = {
        let s = tape.scale(log_std, -2.0)?;
        tape.exp(s)?
    };
    let q = tape.mul(dsq, inv_var)?;
    let half_q = tape.scale(q, 0.5)?;
    let with_s = tape.add(half_q, log_std)?;
    let per_dim = tape.add_scalar(with_s, 0.5 * LN_2PI)?;
    let neg = tape.neg(per_dim)?;
    tape.sum_cols(neg)
}

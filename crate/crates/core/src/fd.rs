//! Central finite-difference gradient oracle.
//!
//! Checks analytic gradients from [`crate::graph::Graph::backward`] against
//! numerical differentiation of the same forward construction. The oracle
//! only ever evaluates forward passes, so it stays independent of every
//! backward rule it verifies.

use crate::error::Result;
use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;

/// Builds a scalar loss from leaves created for `inputs`, in order.
pub trait LossBuilder: Fn(&mut Graph, &[NodeId]) -> Result<NodeId> {}
impl<F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>> LossBuilder for F {}

fn eval<F: LossBuilder>(build: &F, inputs: &[Tensor]) -> Result<f64> {
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone(), false)).collect();
    let loss = build(&mut g, &ids)?;
    Ok(g.value(loss).item())
}

/// Analytic gradients of the loss w.r.t. every input.
pub fn analytic<F: LossBuilder>(build: &F, inputs: &[Tensor]) -> Result<Vec<Tensor>> {
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let loss = build(&mut g, &ids)?;
    let grads = g.backward(loss)?;
    Ok(ids
        .iter()
        .zip(inputs)
        .map(|(&id, t)| grads.for_leaf(id, t.shape()))
        .collect())
}

/// Central-difference gradients with step `eps`.
pub fn numeric<F: LossBuilder>(build: &F, inputs: &[Tensor], eps: f64) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut grad = vec![0.0; inputs[i].numel()];
        for (j, gslot) in grad.iter_mut().enumerate() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += eps;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= eps;
            *gslot = (eval(build, &plus)? - eval(build, &minus)?) / (2.0 * eps);
        }
        out.push(Tensor::new(inputs[i].shape().to_vec(), grad)?);
    }
    Ok(out)
}

/// Max over all elements of |analytic - numeric| / max(1, |numeric|).
pub fn max_rel_error<F: LossBuilder>(build: &F, inputs: &[Tensor], eps: f64) -> Result<f64> {
    let a = analytic(build, inputs)?;
    let n = numeric(build, inputs, eps)?;
    let mut worst = 0.0_f64;
    for (ta, tn) in a.iter().zip(&n) {
        for (&av, &nv) in ta.data().iter().zip(tn.data()) {
            let rel = (av - nv).abs() / nv.abs().max(1.0);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catches_wrong_gradient() {
        // d/dx of mean(x*x) is 2x/n; a builder that scales the forward pass
        // differently from its own backward cannot exist here, so fake a
        // mismatch by comparing against a deliberately different function.
        let x = Tensor::from_vec(vec![1.0, -2.0, 3.0]);
        let quad = |g: &mut Graph, ids: &[NodeId]| -> Result<NodeId> {
            let sq = g.mul(ids[0], ids[0])?;
            Ok(g.mean_all(sq))
        };
        let cube = |g: &mut Graph, ids: &[NodeId]| -> Result<NodeId> {
            let sq = g.mul(ids[0], ids[0])?;
            let cu = g.mul(sq, ids[0])?;
            Ok(g.mean_all(cu))
        };
        let a = analytic(&quad, std::slice::from_ref(&x)).unwrap();
        let n = numeric(&cube, std::slice::from_ref(&x), 1e-5).unwrap();
        let differ = a[0]
            .data()
            .iter()
            .zip(n[0].data())
            .any(|(p, q)| (p - q).abs() > 1e-3);
        assert!(differ);
    }

    #[test]
    fn self_consistent_on_composite() {
        let x = Tensor::matrix(2, 3, vec![0.3, -0.7, 1.1, 0.2, -0.1, 0.9]).unwrap();
        let build = |g: &mut Graph, ids: &[NodeId]| -> Result<NodeId> {
            let r = g.gelu(ids[0]);
            let s = g.softmax(r);
            Ok(g.mean_all(s))
        };
        let err = max_rel_error(&build, std::slice::from_ref(&x), 1e-5).unwrap();
        assert!(err < 1e-6, "rel err {err}");
    }
}

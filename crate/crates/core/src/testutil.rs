//! Finite-difference helpers shared by unit tests.

use std::collections::BTreeMap;

use crate::tensor::Tensor;

/// Central differences of `f` at every coordinate of every named tensor.
pub fn numeric_grads(
    params: &BTreeMap<String, Tensor>,
    h: f64,
    f: impl Fn(&BTreeMap<String, Tensor>) -> f64,
) -> BTreeMap<String, Tensor> {
    let mut work = params.clone();
    let mut out = BTreeMap::new();
    for (name, t) in params {
        let mut g = vec![0.0; t.numel()];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = t.data()[i];
            work.get_mut(name).unwrap().data_mut()[i] = orig + h;
            let up = f(&work);
            work.get_mut(name).unwrap().data_mut()[i] = orig - h;
            let down = f(&work);
            work.get_mut(name).unwrap().data_mut()[i] = orig;
            *gi = (up - down) / (2.0 * h);
        }
        out.insert(name.clone(), Tensor::new(t.shape(), g).unwrap());
    }
    out
}

/// `|a - b| / max(|a| + |b|, floor)` over flattened tensors.
pub fn rel_err(a: &Tensor, b: &Tensor, floor: f64) -> f64 {
    let diff: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    diff / (a.norm() + b.norm()).max(floor)
}

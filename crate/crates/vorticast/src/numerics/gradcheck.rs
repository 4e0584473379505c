//! Central-difference gradient checking, always in double precision.
//!
//! Every tape op and every model gets verified through one of these two
//! entry points before it is trusted in training. The returned figure is the
//! worst relative error over all coordinates,
//! `|analytic - numeric| / (|analytic| + |numeric| + 1e-12)`.

use super::params::{ParamBinding, ParameterStore};
use super::scalar::Scalar;
use super::tape::{NodeId, Tape};
use super::tensor::Tensor;
use super::NumericsError;

const FLOOR: f64 = 1e-12;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs() + FLOOR)
}

fn scalar_value<T: Scalar>(tape: &Tape<T>, id: NodeId) -> f64 {
    let t = tape.real(id);
    assert_eq!(t.len(), 1, "loss node must hold a single value");
    t.data()[0].to_f64().unwrap()
}

/// Check the gradient of `f` with respect to a single real input grid.
/// `f` must build a single-element real loss from the given input node.
pub fn grad_check<F>(f: F, point: &Tensor<f64>, step: f64) -> Result<f64, NumericsError>
where
    F: Fn(&mut Tape<f64>, NodeId) -> Result<NodeId, NumericsError>,
{
    let mut tape = Tape::new();
    let x = tape.leaf(point.clone());
    let loss = f(&mut tape, x)?;
    tape.backward(loss)?;
    let analytic: Vec<f64> = tape
        .grad_real(x)
        .expect("input leaf should receive a gradient")
        .to_vec();

    let eval = |p: Tensor<f64>| -> Result<f64, NumericsError> {
        let mut t = Tape::new();
        let xx = t.constant(p);
        let l = f(&mut t, xx)?;
        Ok(scalar_value(&t, l))
    };

    let mut worst = 0.0f64;
    for i in 0..point.len() {
        let base = point.data()[i];
        let mut plus = point.clone();
        plus.data_mut()[i] = base + step;
        let mut minus = point.clone();
        minus.data_mut()[i] = base - step;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * step);
        worst = worst.max(rel_err(analytic[i], numeric));
    }
    Ok(worst)
}

/// Check gradients with respect to every scalar in a parameter store
/// (complex entries are probed on their real and imaginary parts
/// independently). `f` builds a single-element real loss from bound params.
pub fn grad_check_params<F>(
    store: &ParameterStore<f64>,
    f: F,
    step: f64,
) -> Result<f64, NumericsError>
where
    F: Fn(&mut Tape<f64>, &ParamBinding) -> Result<NodeId, NumericsError>,
{
    let mut tape = Tape::new();
    let binding = store.bind(&mut tape);
    let loss = f(&mut tape, &binding)?;
    tape.backward(loss)?;

    let mut analytic = Vec::with_capacity(store.n_scalars());
    for i in 0..store.len() {
        let id = binding.id(i);
        if let Some(g) = tape.grad_real(id) {
            analytic.extend(g.iter().copied());
        } else if let Some(g) = tape.grad_complex(id) {
            for z in g {
                analytic.push(z.re);
                analytic.push(z.im);
            }
        } else {
            // Loss does not touch this entry; its gradient is exactly zero.
            analytic.extend(std::iter::repeat(0.0).take(store.entry(i).1.n_scalars()));
        }
    }

    let flat = store.to_f64_vec();
    let eval = |coords: &[f64]| -> Result<f64, NumericsError> {
        let mut probe = store.clone();
        probe.load_f64_slice(coords);
        let mut t = Tape::new();
        let b = probe.bind(&mut t);
        let l = f(&mut t, &b)?;
        Ok(scalar_value(&t, l))
    };

    let mut worst = 0.0f64;
    let mut coords = flat.clone();
    for i in 0..flat.len() {
        coords[i] = flat[i] + step;
        let fp = eval(&coords)?;
        coords[i] = flat[i] - step;
        let fm = eval(&coords)?;
        coords[i] = flat[i];
        let numeric = (fp - fm) / (2.0 * step);
        worst = worst.max(rel_err(analytic[i], numeric));
    }
    Ok(worst)
}

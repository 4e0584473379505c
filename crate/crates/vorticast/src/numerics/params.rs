use std::collections::HashMap;

use super::scalar::Scalar;
use super::tape::{NodeId, Tape};
use super::tensor::{ComplexTensor, Tensor};
use num_complex::Complex;

#[derive(Clone, Debug)]
pub enum ParamValue<T> {
    Real(Tensor<T>),
    Complex(ComplexTensor<T>),
}

impl<T: Scalar> ParamValue<T> {
    pub fn shape(&self) -> &[usize] {
        match self {
            ParamValue::Real(t) => t.shape(),
            ParamValue::Complex(t) => t.shape(),
        }
    }

    /// Number of real scalars backing this value (complex elements count 2).
    pub fn n_scalars(&self) -> usize {
        match self {
            ParamValue::Real(t) => t.len(),
            ParamValue::Complex(t) => 2 * t.len(),
        }
    }
}

/// Named, ordered collection of trainable arrays. Insertion order is the
/// canonical order everywhere downstream: optimizer state, checkpoints, and
/// flattened views all follow it, so two stores built by the same code path
/// line up coordinate by coordinate.
#[derive(Clone, Debug, Default)]
pub struct ParameterStore<T> {
    entries: Vec<(String, ParamValue<T>)>,
    index: HashMap<String, usize>,
}

/// Tape handles for one bound store, aligned with the store's entry order.
pub struct ParamBinding {
    ids: Vec<NodeId>,
    by_name: HashMap<String, NodeId>,
}

impl ParamBinding {
    pub fn id(&self, i: usize) -> NodeId {
        self.ids[i]
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn get(&self, name: &str) -> NodeId {
        *self
            .by_name
            .get(name)
            .unwrap_or_else(|| panic!("no parameter named {name:?} in binding"))
    }
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        ParameterStore {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert_real(&mut self, name: &str, value: Tensor<T>) {
        self.insert(name, ParamValue::Real(value));
    }

    pub fn insert_complex(&mut self, name: &str, value: ComplexTensor<T>) {
        self.insert(name, ParamValue::Complex(value));
    }

    fn insert(&mut self, name: &str, value: ParamValue<T>) {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name:?}"
        );
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push((name.to_string(), value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue<T>> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn entry(&self, i: usize) -> (&str, &ParamValue<T>) {
        let (n, v) = &self.entries[i];
        (n, v)
    }

    pub fn entry_mut(&mut self, i: usize) -> &mut ParamValue<T> {
        &mut self.entries[i].1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamValue<T>)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), v))
    }

    /// Total real scalar count across all entries.
    pub fn n_scalars(&self) -> usize {
        self.entries.iter().map(|(_, v)| v.n_scalars()).sum()
    }

    /// Register every entry as a differentiable tape leaf, in entry order.
    pub fn bind(&self, tape: &mut Tape<T>) -> ParamBinding {
        let mut ids = Vec::with_capacity(self.entries.len());
        let mut by_name = HashMap::with_capacity(self.entries.len());
        for (name, value) in &self.entries {
            let id = match value {
                ParamValue::Real(t) => tape.leaf(t.clone()),
                ParamValue::Complex(t) => tape.leaf_complex(t.clone()),
            };
            ids.push(id);
            by_name.insert(name.clone(), id);
        }
        ParamBinding { ids, by_name }
    }

    /// Flatten to f64, entry order, complex elements as (re, im) pairs.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_scalars());
        for (_, value) in &self.entries {
            match value {
                ParamValue::Real(t) => out.extend(t.data().iter().map(|v| v.to_f64().unwrap())),
                ParamValue::Complex(t) => {
                    for z in t.data() {
                        out.push(z.re.to_f64().unwrap());
                        out.push(z.im.to_f64().unwrap());
                    }
                }
            }
        }
        out
    }

    /// Overwrite all values from a flat f64 slice laid out like `to_f64_vec`.
    pub fn load_f64_slice(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_scalars(), "flat parameter size mismatch");
        let mut k = 0usize;
        for (_, value) in self.entries.iter_mut() {
            match value {
                ParamValue::Real(t) => {
                    for v in t.data_mut() {
                        *v = T::from_f64(flat[k]).unwrap();
                        k += 1;
                    }
                }
                ParamValue::Complex(t) => {
                    for z in t.data_mut() {
                        *z = Complex::new(
                            T::from_f64(flat[k]).unwrap(),
                            T::from_f64(flat[k + 1]).unwrap(),
                        );
                        k += 2;
                    }
                }
            }
        }
    }

    /// Cast every entry through f64 into another precision.
    pub fn cast<U: Scalar>(&self) -> ParameterStore<U> {
        let mut out = ParameterStore::new();
        for (name, value) in &self.entries {
            match value {
                ParamValue::Real(t) => out.insert_real(name, t.cast::<U>()),
                ParamValue::Complex(t) => {
                    let data = t
                        .data()
                        .iter()
                        .map(|z| {
                            Complex::new(
                                U::from_f64(z.re.to_f64().unwrap()).unwrap(),
                                U::from_f64(z.im.to_f64().unwrap()).unwrap(),
                            )
                        })
                        .collect();
                    out.insert_complex(name, ComplexTensor::from_vec(t.shape(), data));
                }
            }
        }
        out
    }
}

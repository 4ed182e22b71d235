use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Declared parameter: name, shape and whether the optimizer updates it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    pub init: Init,
}

impl ParamSpec {
    pub fn weight(name: impl Into<String>, shape: Vec<usize>, init: Init) -> Self {
        Self { name: name.into(), shape, trainable: true, init }
    }

    pub fn buffer(name: impl Into<String>, shape: Vec<usize>, init: Init) -> Self {
        Self { name: name.into(), shape, trainable: false, init }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    Glorot { fan_in: usize, fan_out: usize },
    /// Zeros except the second quarter of the vector, which is set to one
    /// (the LSTM forget-gate bias).
    ForgetBias,
}

impl Init {
    fn sample(self, n: usize, rng: &mut impl Rng) -> Vec<f64> {
        match self {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Glorot { fan_in, fan_out } => {
                let a = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
                (0..n).map(|_| rng.gen_range(-a..a)).collect()
            }
            Init::ForgetBias => {
                let q = n / 4;
                (0..n).map(|i| if i >= q && i < 2 * q { 1.0 } else { 0.0 }).collect()
            }
        }
    }
}

pub fn count_trainable(specs: &[ParamSpec]) -> u64 {
    specs.iter().filter(|s| s.trainable).map(|s| s.numel() as u64).sum()
}

#[derive(Debug, Clone)]
struct Entry {
    tensor: Tensor,
    trainable: bool,
}

/// Named parameters and non-trainable buffers, iterated in name order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, Entry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Allocates every spec, drawing random initial values in spec order.
    pub fn from_specs(specs: &[ParamSpec], rng: &mut impl Rng) -> Result<Self> {
        let mut store = Self::new();
        for s in specs {
            let t = Tensor::new(s.shape.clone(), s.init.sample(s.numel(), rng))?;
            store.insert_entry(&s.name, t, s.trainable)?;
        }
        Ok(store)
    }

    fn insert_entry(&mut self, name: &str, tensor: Tensor, trainable: bool) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::DuplicateParam(name.to_string()));
        }
        self.entries.insert(name.to_string(), Entry { tensor, trainable });
        Ok(())
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        self.insert_entry(name, tensor, true)
    }

    pub fn insert_buffer(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        self.insert_entry(name, tensor, false)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries.get(name).map(|e| &e.tensor).ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries.get_mut(name).map(|e| &mut e.tensor).ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    /// Replaces a value, keeping its shape.
    pub fn set(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        let slot = self.get_mut(name)?;
        if slot.shape() != tensor.shape() {
            return Err(Error::Shape { op: "set_param", left: slot.shape().to_vec(), right: tensor.shape().to_vec() });
        }
        *slot = tensor;
        Ok(())
    }

    pub fn is_trainable(&self, name: &str) -> Result<bool> {
        self.entries.get(name).map(|e| e.trainable).ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn trainable_names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(|(_, e)| e.trainable).map(|(k, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor, bool)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), &e.tensor, e.trainable))
    }

    pub fn num_trainable(&self) -> u64 {
        self.entries.values().filter(|e| e.trainable).map(|e| e.tensor.len() as u64).sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn specs_allocate_in_order_and_count() {
        let specs = vec![
            ParamSpec::weight("a/w", vec![3, 4], Init::Glorot { fan_in: 3, fan_out: 4 }),
            ParamSpec::weight("a/b", vec![8], Init::ForgetBias),
            ParamSpec::buffer("a/mean", vec![4], Init::Zeros),
        ];
        assert_eq!(count_trainable(&specs), 20);
        let store = ParamStore::from_specs(&specs, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(store.num_trainable(), 20);
        assert_eq!(store.get("a/b").unwrap().data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(!store.is_trainable("a/mean").unwrap());
        let again = ParamStore::from_specs(&specs, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(store.get("a/w").unwrap(), again.get("a/w").unwrap());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new();
        s.insert("x", Tensor::scalar(1.0)).unwrap();
        assert!(matches!(s.insert("x", Tensor::scalar(2.0)), Err(Error::DuplicateParam(_))));
        assert!(s.set("x", Tensor::zeros(&[2])).is_err());
    }
}

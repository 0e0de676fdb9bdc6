use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::util::seeded_rng;

/// Initial value distribution for a freshly created parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Const(f64),
    Normal { std: f64 },
    /// Truncated at two standard deviations.
    TruncNormal { std: f64 },
    Uniform { bound: f64 },
    /// He initialisation with `fan_out` (torchvision's conv default).
    KaimingFanOut,
    /// PyTorch's `nn.Linear` default: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    LinearDefault,
}

impl Init {
    fn sample(self, shape: &[usize], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n: usize = shape.iter().product();
        let normal = |std: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
            let d = Normal::new(0.0, std).expect("finite std");
            (0..n).map(|_| d.sample(rng)).collect()
        };
        match self {
            Init::Const(v) => vec![v; n],
            Init::Normal { std } => normal(std, rng),
            Init::TruncNormal { std } => {
                let d = Normal::new(0.0, std).expect("finite std");
                (0..n)
                    .map(|_| loop {
                        let x: f64 = d.sample(rng);
                        if x.abs() <= 2.0 * std {
                            break x;
                        }
                    })
                    .collect()
            }
            Init::Uniform { bound } => (0..n).map(|_| rng.random_range(-bound..=bound)).collect(),
            Init::KaimingFanOut => {
                let receptive: usize = shape.iter().skip(2).product();
                let fan_out = shape[0] * receptive.max(1);
                normal((2.0 / fan_out as f64).sqrt(), rng)
            }
            Init::LinearDefault => {
                let fan_in = shape.get(1).copied().unwrap_or(1).max(1);
                let b = 1.0 / (fan_in as f64).sqrt();
                (0..n).map(|_| rng.random_range(-b..=b)).collect()
            }
        }
    }
}

/// All tensors of a model: trainable variables and frozen buffers (batch
/// norm running statistics), keyed by dotted parameter path.
#[derive(Debug, Default)]
pub struct ParamStore {
    pub vars: BTreeMap<String, Var>,
    pub buffers: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn trainable(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn trainable_with_prefix(&self, prefix: &str) -> Vec<Var> {
        self.vars
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| v.clone())
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Every tensor by name, variables and buffers together.
    pub fn named_tensors(&self) -> BTreeMap<String, Tensor> {
        let mut out: BTreeMap<String, Tensor> = self
            .vars
            .iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect();
        out.extend(self.buffers.iter().map(|(k, v)| (k.clone(), v.clone())));
        out
    }
}

struct State {
    store: ParamStore,
    source: Option<HashMap<String, Tensor>>,
    strict: bool,
    missing: Vec<String>,
}

/// Hierarchical, seeded parameter factory. Each parameter is drawn from
/// its own stream keyed by `(seed, path)`, so adding a layer never shifts
/// the initial values of the others. When a source table is attached,
/// tensors found there replace the random draw.
#[derive(Clone)]
pub struct ParamBuilder {
    state: Rc<RefCell<State>>,
    seed: u64,
    prefix: String,
    dtype: DType,
    device: Device,
}

impl ParamBuilder {
    pub fn new(seed: u64, dtype: DType, device: &Device) -> Self {
        Self {
            state: Rc::new(RefCell::new(State {
                store: ParamStore::default(),
                source: None,
                strict: false,
                missing: Vec::new(),
            })),
            seed,
            prefix: String::new(),
            dtype,
            device: device.clone(),
        }
    }

    /// Takes values from `source` where present. With `strict`, a missing
    /// name is recorded and reported by [`ParamBuilder::finish`].
    pub fn with_source(self, source: HashMap<String, Tensor>, strict: bool) -> Self {
        {
            let mut st = self.state.borrow_mut();
            st.source = Some(source);
            st.strict = strict;
        }
        self
    }

    pub fn pp(&self, name: impl AsRef<str>) -> Self {
        let name = name.as_ref();
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        Self {
            prefix,
            ..self.clone()
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn path(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    fn make(&self, path: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        let mut st = self.state.borrow_mut();
        if let Some(src) = st.source.as_ref().and_then(|s| s.get(path)) {
            if src.dims() != shape {
                return Err(Error::shape(
                    format!("{path} {shape:?}"),
                    format!("{:?}", src.dims()),
                ));
            }
            return Ok(src.to_dtype(self.dtype)?.to_device(&self.device)?);
        }
        if st.strict {
            st.missing.push(path.to_string());
        }
        let mut rng = seeded_rng(self.seed, &[b"param", path.as_bytes()]);
        let values = init.sample(shape, &mut rng);
        Ok(Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?)
    }

    /// Trainable parameter.
    pub fn var(&self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        let path = self.path(name);
        let t = self.make(&path, shape, init)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        let mut st = self.state.borrow_mut();
        if st.store.vars.insert(path.clone(), var).is_some() {
            return Err(Error::InvalidConfig(format!("parameter `{path}` created twice")));
        }
        Ok(out)
    }

    /// Frozen tensor, stored but excluded from optimisation.
    pub fn buffer(&self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        let path = self.path(name);
        let t = self.make(&path, shape, init)?.detach();
        let mut st = self.state.borrow_mut();
        if st.store.buffers.insert(path.clone(), t.clone()).is_some() {
            return Err(Error::InvalidConfig(format!("buffer `{path}` created twice")));
        }
        Ok(t)
    }

    /// Consumes the builder and returns the collected parameters. Fails with
    /// [`Error::UninitializedModel`] if a strict source lacked any tensor.
    pub fn finish(self) -> Result<ParamStore> {
        let mut st = self.state.borrow_mut();
        if !st.missing.is_empty() {
            let n = st.missing.len();
            let head: Vec<_> = st.missing.iter().take(5).cloned().collect();
            return Err(Error::UninitializedModel(format!(
                "{n} tensors missing from checkpoint, e.g. {}",
                head.join(", ")
            )));
        }
        Ok(std::mem::take(&mut st.store))
    }
}

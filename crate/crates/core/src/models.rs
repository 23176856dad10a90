//! Linear classifiers that train one sample at a time.
//!
//! Both models are binary (`{0, 1}`) and immutable: [`OnlineModel::update`]
//! returns the next state. The canonical encoding is
//!
//! ```text
//! kind\n
//! learning_rate\n
//! bias\n
//! w1,w2,...,wd\n
//! ```
//!
//! with `kind` one of `perceptron` / `logistic` and numbers in shortest
//! round-trip decimal. This is encoding version 1; a future layout change
//! gets a new kind tag. Decoding only accepts canonical text, so every
//! accepted byte string re-encodes to itself.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ClassId, Sample};
use crate::scalar::{parse_finite, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Perceptron,
    Logistic,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Perceptron => "perceptron",
            ModelKind::Logistic => "logistic",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "perceptron" => Some(ModelKind::Perceptron),
            "logistic" => Some(ModelKind::Logistic),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("expected {expected} features, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("non-finite feature value")]
    NonFinite,
    #[error("label {0} outside the binary class set {{0, 1}}")]
    Label(ClassId),
    #[error("cannot evaluate on an empty dataset")]
    EmptyDataset,
    #[error("invalid hyperparameter: {0}")]
    Hyperparameter(String),
    #[error("malformed model encoding: {0}")]
    Decode(String),
}

/// The binary class set every bundled model supports.
pub const BINARY_CLASSES: [ClassId; 2] = [0, 1];

pub trait OnlineModel<F: Scalar>: Clone + Send + Sync {
    fn kind(&self) -> ModelKind;

    fn dim(&self) -> usize;

    fn predict(&self, features: &[F]) -> Result<ClassId, ModelError>;

    /// One training step on `sample`, returning the next state.
    fn update(&self, sample: &Sample<F>) -> Result<Self, ModelError>;

    /// Canonical byte encoding.
    fn encode(&self) -> Vec<u8>;
}

/// Weights, bias and step size shared by both linear models.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams<F> {
    pub weights: Vec<F>,
    pub bias: F,
    pub learning_rate: F,
}

impl<F: Scalar> LinearParams<F> {
    pub fn zeros(dim: usize, learning_rate: F) -> Result<Self, ModelError> {
        let params = LinearParams { weights: vec![F::zero(); dim], bias: F::zero(), learning_rate };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.weights.is_empty() {
            return Err(ModelError::Hyperparameter("feature dimension must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > F::zero()) {
            return Err(ModelError::Hyperparameter("learning rate must be finite and > 0".into()));
        }
        if !self.bias.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(ModelError::Hyperparameter("parameters must be finite".into()));
        }
        Ok(())
    }

    fn check_input(&self, features: &[F]) -> Result<(), ModelError> {
        if features.len() != self.weights.len() {
            return Err(ModelError::Dimension { expected: self.weights.len(), found: features.len() });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        Ok(())
    }

    /// `w·x + b`, accumulated left to right.
    pub fn score(&self, features: &[F]) -> F {
        self.weights
            .iter()
            .zip(features)
            .fold(F::zero(), |acc, (w, x)| acc + *w * *x)
            + self.bias
    }

    fn encode(&self, kind: ModelKind) -> Vec<u8> {
        let weights: Vec<String> = self.weights.iter().map(ToString::to_string).collect();
        format!("{}\n{}\n{}\n{}\n", kind.tag(), self.learning_rate, self.bias, weights.join(",")).into_bytes()
    }

    fn decode(bytes: &[u8], kind: ModelKind) -> Result<Self, ModelError> {
        let (found, params) = decode_any::<F>(bytes)?;
        if found != kind {
            return Err(ModelError::Decode(format!("expected kind `{kind}`, found `{found}`")));
        }
        Ok(params)
    }
}

fn decode_any<F: Scalar>(bytes: &[u8]) -> Result<(ModelKind, LinearParams<F>), ModelError> {
    let text = std::str::from_utf8(bytes).map_err(|_| ModelError::Decode("not UTF-8".into()))?;
    let body = text
        .strip_suffix('\n')
        .ok_or_else(|| ModelError::Decode("missing trailing newline".into()))?;
    let lines: Vec<&str> = body.split('\n').collect();
    let [kind, lr, bias, weights] = lines.as_slice() else {
        return Err(ModelError::Decode(format!("expected 4 lines, found {}", lines.len())));
    };
    let kind = ModelKind::from_tag(kind).ok_or_else(|| ModelError::Decode(format!("unknown kind `{kind}`")))?;
    let num = |s: &str| parse_finite::<F>(s).ok_or_else(|| ModelError::Decode(format!("bad number `{s}`")));
    let params = LinearParams {
        learning_rate: num(lr)?,
        bias: num(bias)?,
        weights: weights.split(',').map(num).collect::<Result<_, _>>()?,
    };
    params.validate().map_err(|e| ModelError::Decode(e.to_string()))?;
    if params.encode(kind) != bytes {
        return Err(ModelError::Decode("non-canonical encoding".into()));
    }
    Ok((kind, params))
}

fn signed_label<F: Scalar>(label: ClassId) -> Result<F, ModelError> {
    match label {
        0 => Ok(-F::one()),
        1 => Ok(F::one()),
        other => Err(ModelError::Label(other)),
    }
}

/// Rosenblatt perceptron. Predicts 1 iff `w·x + b > 0`, so a zero score is
/// class 0.
#[derive(Clone, Debug, PartialEq)]
pub struct PerceptronModel<F> {
    pub params: LinearParams<F>,
}

impl<F: Scalar> PerceptronModel<F> {
    pub fn new(dim: usize, learning_rate: F) -> Result<Self, ModelError> {
        Ok(PerceptronModel { params: LinearParams::zeros(dim, learning_rate)? })
    }

    pub fn from_params(params: LinearParams<F>) -> Result<Self, ModelError> {
        params.validate()?;
        Ok(PerceptronModel { params })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ModelError> {
        Ok(PerceptronModel { params: LinearParams::decode(bytes, ModelKind::Perceptron)? })
    }
}

impl<F: Scalar> OnlineModel<F> for PerceptronModel<F> {
    fn kind(&self) -> ModelKind {
        ModelKind::Perceptron
    }

    fn dim(&self) -> usize {
        self.params.weights.len()
    }

    fn predict(&self, features: &[F]) -> Result<ClassId, ModelError> {
        self.params.check_input(features)?;
        Ok(ClassId::from(self.params.score(features) > F::zero()))
    }

    fn update(&self, sample: &Sample<F>) -> Result<Self, ModelError> {
        self.params.check_input(&sample.features)?;
        let y = signed_label::<F>(sample.label)?;
        if y * self.params.score(&sample.features) > F::zero() {
            return Ok(self.clone());
        }
        let step = self.params.learning_rate * y;
        let mut next = self.params.clone();
        for (w, x) in next.weights.iter_mut().zip(&sample.features) {
            *w = *w + step * *x;
        }
        next.bias = next.bias + step;
        Ok(PerceptronModel { params: next })
    }

    fn encode(&self) -> Vec<u8> {
        self.params.encode(ModelKind::Perceptron)
    }
}

/// Logistic regression trained by one SGD step on log-loss per sample.
/// Predicts 1 iff `sigmoid(w·x + b) >= 0.5`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel<F> {
    pub params: LinearParams<F>,
}

/// Numerically stable logistic function.
pub fn sigmoid<F: Scalar>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

impl<F: Scalar> LogisticModel<F> {
    pub fn new(dim: usize, learning_rate: F) -> Result<Self, ModelError> {
        Ok(LogisticModel { params: LinearParams::zeros(dim, learning_rate)? })
    }

    pub fn from_params(params: LinearParams<F>) -> Result<Self, ModelError> {
        params.validate()?;
        Ok(LogisticModel { params })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ModelError> {
        Ok(LogisticModel { params: LinearParams::decode(bytes, ModelKind::Logistic)? })
    }

    pub fn probability(&self, features: &[F]) -> Result<F, ModelError> {
        self.params.check_input(features)?;
        Ok(sigmoid(self.params.score(features)))
    }
}

impl<F: Scalar> OnlineModel<F> for LogisticModel<F> {
    fn kind(&self) -> ModelKind {
        ModelKind::Logistic
    }

    fn dim(&self) -> usize {
        self.params.weights.len()
    }

    fn predict(&self, features: &[F]) -> Result<ClassId, ModelError> {
        let p = self.probability(features)?;
        Ok(ClassId::from(p >= F::from_f64_lossy(0.5)))
    }

    fn update(&self, sample: &Sample<F>) -> Result<Self, ModelError> {
        let p = self.probability(&sample.features)?;
        let y = match sample.label {
            0 => F::zero(),
            1 => F::one(),
            other => return Err(ModelError::Label(other)),
        };
        let step = self.params.learning_rate * (p - y);
        let mut next = self.params.clone();
        for (w, x) in next.weights.iter_mut().zip(&sample.features) {
            *w = *w - step * *x;
        }
        next.bias = next.bias - step;
        Ok(LogisticModel { params: next })
    }

    fn encode(&self) -> Vec<u8> {
        self.params.encode(ModelKind::Logistic)
    }
}

/// Either bundled model, selected at runtime by its kind tag.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyModel<F> {
    Perceptron(PerceptronModel<F>),
    Logistic(LogisticModel<F>),
}

impl<F: Scalar> AnyModel<F> {
    pub fn new(kind: ModelKind, dim: usize, learning_rate: F) -> Result<Self, ModelError> {
        Ok(match kind {
            ModelKind::Perceptron => AnyModel::Perceptron(PerceptronModel::new(dim, learning_rate)?),
            ModelKind::Logistic => AnyModel::Logistic(LogisticModel::new(dim, learning_rate)?),
        })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ModelError> {
        let (kind, params) = decode_any::<F>(bytes)?;
        Ok(match kind {
            ModelKind::Perceptron => AnyModel::Perceptron(PerceptronModel { params }),
            ModelKind::Logistic => AnyModel::Logistic(LogisticModel { params }),
        })
    }

    pub fn params(&self) -> &LinearParams<F> {
        match self {
            AnyModel::Perceptron(m) => &m.params,
            AnyModel::Logistic(m) => &m.params,
        }
    }
}

impl<F: Scalar> OnlineModel<F> for AnyModel<F> {
    fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Perceptron(_) => ModelKind::Perceptron,
            AnyModel::Logistic(_) => ModelKind::Logistic,
        }
    }

    fn dim(&self) -> usize {
        self.params().weights.len()
    }

    fn predict(&self, features: &[F]) -> Result<ClassId, ModelError> {
        match self {
            AnyModel::Perceptron(m) => m.predict(features),
            AnyModel::Logistic(m) => m.predict(features),
        }
    }

    fn update(&self, sample: &Sample<F>) -> Result<Self, ModelError> {
        Ok(match self {
            AnyModel::Perceptron(m) => AnyModel::Perceptron(m.update(sample)?),
            AnyModel::Logistic(m) => AnyModel::Logistic(m.update(sample)?),
        })
    }

    fn encode(&self) -> Vec<u8> {
        match self {
            AnyModel::Perceptron(m) => m.encode(),
            AnyModel::Logistic(m) => m.encode(),
        }
    }
}

/// Applies `update` for each sample in order.
pub fn fold<'a, F, M, I>(model: &M, samples: I) -> Result<M, ModelError>
where
    F: Scalar,
    M: OnlineModel<F>,
    I: IntoIterator<Item = &'a Sample<F>>,
{
    samples.into_iter().try_fold(model.clone(), |m, s| m.update(s))
}

/// `epochs` sequential passes of [`fold`] over `samples`.
pub fn train<F: Scalar, M: OnlineModel<F>>(model: &M, samples: &[Sample<F>], epochs: usize) -> Result<M, ModelError> {
    (0..epochs).try_fold(model.clone(), |m, _| fold(&m, samples))
}

/// Fraction of `samples` classified correctly.
pub fn evaluate<F: Scalar, M: OnlineModel<F>>(model: &M, samples: &[Sample<F>]) -> Result<f64, ModelError> {
    if samples.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut correct = 0usize;
    for s in samples {
        if model.predict(&s.features)? == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

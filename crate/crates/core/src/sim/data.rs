//! Seeded synthetic classification data: one isotropic Gaussian blob per
//! class, with class means `±(margin/2)·u` along a random unit direction `u`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::dataset::{ClassId, Sample};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct DataSpec {
    pub dim: usize,
    pub classes: usize,
    /// Distance between the two class means, in units of the per-axis
    /// standard deviation.
    pub margin: f64,
    pub train_size: usize,
    pub test_size: usize,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec { dim: 10, classes: 2, margin: 2.0, train_size: 1000, test_size: 500 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("feature dimension must be at least 1")]
    Dimension,
    #[error("only binary data is supported (classes = 2), got {0}")]
    Classes(usize),
    #[error("margin must be finite and non-negative")]
    Margin,
    #[error("train and test sizes must be at least 1")]
    Size,
}

impl DataSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.dim == 0 {
            return Err(DataError::Dimension);
        }
        if self.classes != 2 {
            return Err(DataError::Classes(self.classes));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(DataError::Margin);
        }
        if self.train_size == 0 || self.test_size == 0 {
            return Err(DataError::Size);
        }
        Ok(())
    }
}

/// Ground truth for every sample the generator has produced, keyed by the
/// exact bit pattern of the features.
#[derive(Clone, Debug, Default)]
pub struct Labeler {
    truth: HashMap<Vec<u64>, ClassId>,
}

impl Labeler {
    fn key<F: Scalar>(features: &[F]) -> Vec<u64> {
        features.iter().map(|v| v.to_f64_lossy().to_bits()).collect()
    }

    pub fn label_of<F: Scalar>(&self, features: &[F]) -> Option<ClassId> {
        self.truth.get(&Self::key(features)).copied()
    }

    fn register<F: Scalar>(&mut self, sample: &Sample<F>) -> bool {
        self.truth.insert(Self::key(&sample.features), sample.label).is_none()
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }
}

/// Seeded source of fresh samples from the scenario distribution.
#[derive(Clone, Debug)]
pub struct DataGenerator {
    rng: ChaCha8Rng,
    direction: Vec<f64>,
    half_margin: f64,
}

impl DataGenerator {
    pub fn new(spec: &DataSpec, seed: u64) -> Result<Self, DataError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut direction: Vec<f64> = (0..spec.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            direction.iter_mut().for_each(|v| *v /= norm);
        } else {
            direction[0] = 1.0;
        }
        Ok(DataGenerator { rng, direction, half_margin: spec.margin / 2.0 })
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    fn draw<F: Scalar>(&mut self) -> Sample<F> {
        let label: ClassId = self.rng.random_range(0..2);
        let sign = if label == 1 { 1.0 } else { -1.0 };
        let features = self
            .direction
            .iter()
            .map(|u| {
                let noise: f64 = StandardNormal.sample(&mut self.rng);
                F::from_f64_lossy(sign * self.half_margin * u + noise)
            })
            .collect();
        Sample { features, label }
    }

    /// Draws a sample whose features were never produced before and records
    /// its label in `labeler`.
    pub fn next_sample<F: Scalar>(&mut self, labeler: &mut Labeler) -> Sample<F> {
        loop {
            let s = self.draw::<F>();
            if labeler.register(&s) {
                return s;
            }
        }
    }
}

/// Output of [`generate_data`]. `stream` continues the same distribution for
/// contributors once the train split is exhausted.
#[derive(Clone, Debug)]
pub struct GeneratedData<F> {
    pub train: Vec<Sample<F>>,
    pub test: Vec<Sample<F>>,
    pub labeler: Labeler,
    pub stream: DataGenerator,
}

/// Disjoint train and test sets drawn from the seeded distribution.
pub fn generate_data<F: Scalar>(spec: &DataSpec, seed: u64) -> Result<GeneratedData<F>, DataError> {
    let mut stream = DataGenerator::new(spec, seed)?;
    let mut labeler = Labeler::default();
    let train = (0..spec.train_size).map(|_| stream.next_sample(&mut labeler)).collect();
    let test = (0..spec.test_size).map(|_| stream.next_sample(&mut labeler)).collect();
    Ok(GeneratedData { train, test, labeler, stream })
}

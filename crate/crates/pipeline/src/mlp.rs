//! The diagnosis classifier: a fully connected 44 -> 256 -> 128 -> 64 ->
//! 32 -> 4 network with ReLU hidden activations, trained full-batch by SGD
//! under softmax cross-entropy.

use crate::error::{PipelineError, Result};
use crate::features::{FeatureVector, FEATURE_DIMS};
use std::path::Path;
use ynet_model::checkpoint;
use ynet_model::init::Initializer;
use ynet_model::layers::Linear;
use ynet_tensor::{optim::Sgd, Tensor};

pub const HIDDEN: [usize; 4] = [256, 128, 64, 32];
pub const DIAGNOSTIC_CLASSES: usize = 4;

pub const DEFAULT_EPOCHS: usize = 500;
pub const DEFAULT_LR: f64 = 1e-3;

pub struct DiagnosisMlp {
    layers: Vec<Linear<f32>>,
}

impl DiagnosisMlp {
    pub fn new(seed: u64) -> Result<Self> {
        let mut init = Initializer::new(seed);
        let dims: Vec<usize> = std::iter::once(FEATURE_DIMS)
            .chain(HIDDEN)
            .chain(std::iter::once(DIAGNOSTIC_CLASSES))
            .collect();
        let layers = dims
            .windows(2)
            .map(|d| Linear::new(&mut init, d[0], d[1]))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(DiagnosisMlp { layers })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn params(&self) -> Vec<(String, Tensor<f32>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            l.collect_params(&format!("mlp.fc{i}"), &mut out);
        }
        out
    }

    fn logits(&self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        let mut x = batch.clone();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            x = l.forward(&x)?;
            if i != last {
                x = x.relu()?;
            }
        }
        Ok(x)
    }

    fn batch_tensor(features: &[FeatureVector]) -> Result<Tensor<f32>> {
        let n = features.len();
        let mut data = Vec::with_capacity(n * FEATURE_DIMS);
        for f in features {
            data.extend(f.to_vec().into_iter().map(|v| v as f32));
        }
        Ok(Tensor::from_vec(&[n, FEATURE_DIMS], data)?)
    }

    /// Full-batch SGD; returns the per-epoch loss history.
    pub fn train(
        &self,
        features: &[FeatureVector],
        labels: &[usize],
        epochs: usize,
        lr: f64,
    ) -> Result<Vec<f64>> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(PipelineError::Input(format!(
                "{} feature rows vs {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= DIAGNOSTIC_CLASSES) {
            return Err(PipelineError::Input(format!(
                "diagnosis label {} out of range 0..{}",
                bad, DIAGNOSTIC_CLASSES
            )));
        }
        let batch = Self::batch_tensor(features)?;
        let opt = Sgd::new(self.params());
        let mut history = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let loss = self.logits(&batch)?.softmax_cross_entropy(labels, None)?;
            let v = loss.item()? as f64;
            if !v.is_finite() {
                return Err(PipelineError::Numeric("mlp loss is not finite".into()));
            }
            loss.backward()?;
            opt.step(lr)?;
            history.push(v);
        }
        Ok(history)
    }

    /// Class argmax plus the full probability vector.
    pub fn predict(&self, feature: &FeatureVector) -> Result<(usize, Vec<f32>)> {
        let logits = self.logits(&Self::batch_tensor(std::slice::from_ref(feature))?)?;
        let probs = logits.softmax()?.to_vec();
        let label = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        Ok((label, probs))
    }

    pub fn accuracy_on(&self, features: &[FeatureVector], labels: &[usize]) -> Result<f64> {
        let preds = features
            .iter()
            .map(|f| self.predict(f).map(|(l, _)| l))
            .collect::<Result<Vec<_>>>()?;
        crate::metrics::accuracy(&preds, labels)
    }

    pub fn save(&self, path: &Path, config_json: &str) -> Result<()> {
        checkpoint::save(path, &self.params(), config_json).map_err(Into::into)
    }

    pub fn load(path: &Path, seed: u64) -> Result<Self> {
        let mlp = Self::new(seed)?;
        let loaded = checkpoint::load::<f32>(path)?;
        let params = mlp.params();
        if loaded.tensors.len() != params.len() {
            return Err(PipelineError::Input(format!(
                "mlp checkpoint has {} tensors, expected {}",
                loaded.tensors.len(),
                params.len()
            )));
        }
        let by_name: std::collections::HashMap<&str, &Tensor<f32>> =
            params.iter().map(|(n, t)| (n.as_str(), t)).collect();
        for (name, data, shape) in &loaded.tensors {
            let t = by_name.get(name.as_str()).ok_or_else(|| {
                PipelineError::Input(format!("unexpected tensor `{name}` in mlp checkpoint"))
            })?;
            if t.shape() != shape.as_slice() {
                return Err(PipelineError::Input(format!(
                    "tensor `{name}` shape {:?} does not match {:?}",
                    shape,
                    t.shape()
                )));
            }
            t.set_data(data)?;
        }
        Ok(mlp)
    }
}

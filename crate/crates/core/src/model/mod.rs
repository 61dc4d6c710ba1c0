//! Tree-ensemble classifiers: gradient-boosted trees with logistic loss
//! and random forests, plus training-set sampling and a versioned binary
//! model format.

pub mod sampling;
pub mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use sampling::{assemble_training_set, select_training_rows, SamplingPolicy};
pub use tree::{Node, Tree};

use crate::error::{Error, Result};
use crate::features::{ByteReader, FeatureMatrix};
use crate::{exec, hashing};
use tree::{Criterion, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "gbdt")]
    Gbdt,
    #[serde(rename = "rf", alias = "random_forest")]
    RandomForest,
}

impl ModelKind {
    fn code(self) -> u8 {
        match self {
            ModelKind::Gbdt => 1,
            ModelKind::RandomForest => 2,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Gbdt => "gbdt",
            ModelKind::RandomForest => "rf",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gbdt" => Ok(ModelKind::Gbdt),
            "rf" => Ok(ModelKind::RandomForest),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

/// L2 penalty on GBDT leaf values.
const LAMBDA: f64 = 1.0;
const MAX_LEAF_HALVINGS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model_kind: ModelKind,
    pub n_trees: usize,
    pub max_depth: usize,
    /// GBDT shrinkage.
    pub learning_rate: f64,
    /// Fraction of features examined per split (random forest).
    pub feature_subsample: f64,
    pub min_samples_leaf: usize,
    pub seed: u64,
    pub sampling_policy: SamplingPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model_kind: ModelKind::Gbdt,
            n_trees: 200,
            max_depth: 6,
            learning_rate: 0.1,
            feature_subsample: 0.3,
            min_samples_leaf: 1,
            seed: 0,
            sampling_policy: SamplingPolicy::WholePhasePositivesLastDayNegatives,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config("learning_rate must be in (0, 1]".into()));
        }
        if !(self.feature_subsample > 0.0 && self.feature_subsample <= 1.0) {
            return Err(Error::Config("feature_subsample must be in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> u64 {
        hashing::sha256_u64(serde_json::to_string(self).expect("serializable").as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub schema_hash: u64,
    pub config_fingerprint: u64,
    /// Initial log-odds (GBDT); zero for forests.
    pub base_score: f64,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

/// Per-stage training loss of a boosted model (mean log loss).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub losses: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn log_loss(margin: &[f64], y: &[f64]) -> f64 {
    margin
        .iter()
        .zip(y)
        .map(|(m, y)| {
            // log(1 + e^m) - y m, written to avoid overflow
            let softplus = if *m > 0.0 {
                m + (-m).exp().ln_1p()
            } else {
                m.exp().ln_1p()
            };
            softplus - y * m
        })
        .sum::<f64>()
        / margin.len() as f64
}

/// Trains on `matrix` rows with binary `labels`. Rows are first put in
/// canonical `(serial, day)` order, so the result does not depend on the
/// input order.
pub fn train(matrix: &FeatureMatrix, labels: &[u8], cfg: &TrainConfig) -> Result<TrainedModel> {
    train_logged(matrix, labels, cfg).map(|(m, _)| m)
}

pub fn train_logged(matrix: &FeatureMatrix, labels: &[u8], cfg: &TrainConfig) -> Result<(TrainedModel, TrainingLog)> {
    cfg.validate()?;
    if labels.len() != matrix.n_rows() {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} rows",
            labels.len(),
            matrix.n_rows()
        )));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..matrix.n_rows()).collect();
    order.sort_by(|&a, &b| matrix.keys[a].cmp(&matrix.keys[b]).then(a.cmp(&b)));
    let n_cols = matrix.n_cols();
    let columns: Vec<Vec<f64>> = (0..n_cols)
        .map(|c| order.iter().map(|&r| matrix.values[r * n_cols + c]).collect())
        .collect();
    let y: Vec<f64> = order.iter().map(|&r| f64::from(labels[r])).collect();
    let sorted = tree::presort(&columns);
    let (trees, base_score, log) = match cfg.model_kind {
        ModelKind::Gbdt => train_gbdt(&columns, &y, sorted, cfg),
        ModelKind::RandomForest => (train_forest(&columns, &y, &sorted, cfg), 0.0, TrainingLog::default()),
    };
    Ok((
        TrainedModel {
            kind: cfg.model_kind,
            schema_hash: matrix.schema_hash(),
            config_fingerprint: cfg.fingerprint(),
            base_score,
            n_features: n_cols,
            trees,
        },
        log,
    ))
}

fn row_of(columns: &[Vec<f64>], r: usize, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend(columns.iter().map(|c| c[r]));
}

fn train_gbdt(
    columns: &[Vec<f64>],
    y: &[f64],
    sorted: Vec<Vec<u32>>,
    cfg: &TrainConfig,
) -> (Vec<Tree>, f64, TrainingLog) {
    let n = y.len();
    let p = (y.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let base = (p / (1.0 - p)).ln();
    let mut margin = vec![base; n];
    let mut loss = log_loss(&margin, y);
    let mut log = TrainingLog { losses: vec![loss] };
    let params = TreeParams {
        criterion: Criterion::Newton { lambda: LAMBDA },
        max_depth: cfg.max_depth,
        min_samples_leaf: cfg.min_samples_leaf,
        feature_fraction: 1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(hashing::mix_seed(cfg.seed, 0x6762));
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut buf = Vec::with_capacity(columns.len());
    for _ in 0..cfg.n_trees {
        let prob: Vec<f64> = margin.iter().map(|m| sigmoid(*m)).collect();
        let g: Vec<f64> = prob.iter().zip(y).map(|(p, y)| p - y).collect();
        let h: Vec<f64> = prob.iter().map(|p| (p * (1.0 - p)).max(1e-16)).collect();
        let mut t = tree::grow(columns, &g, &h, sorted.clone(), &params, &mut rng);
        for v in t.leaves_mut() {
            *v *= cfg.learning_rate;
        }
        let step: Vec<f64> = (0..n)
            .map(|r| {
                row_of(columns, r, &mut buf);
                t.predict(&buf)
            })
            .collect();
        // shrink the stage until the training loss does not go up
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_LEAF_HALVINGS {
            let candidate: Vec<f64> = margin.iter().zip(&step).map(|(m, s)| m + scale * s).collect();
            let new_loss = log_loss(&candidate, y);
            if new_loss <= loss {
                accepted = Some((candidate, new_loss));
                break;
            }
            scale *= 0.5;
        }
        let Some((candidate, new_loss)) = accepted else {
            break;
        };
        if scale != 1.0 {
            for v in t.leaves_mut() {
                *v *= scale;
            }
        }
        margin = candidate;
        loss = new_loss;
        log.losses.push(loss);
        trees.push(t);
    }
    (trees, base, log)
}

fn train_forest(columns: &[Vec<f64>], y: &[f64], sorted: &[Vec<u32>], cfg: &TrainConfig) -> Vec<Tree> {
    let n = y.len();
    let params = TreeParams {
        criterion: Criterion::Gini,
        max_depth: cfg.max_depth,
        min_samples_leaf: cfg.min_samples_leaf,
        feature_fraction: cfg.feature_subsample,
    };
    exec::map_range(cfg.n_trees, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(hashing::mix_seed(cfg.seed, 0x7266_0000 + t as u64));
        let mut w = vec![0.0; n];
        for _ in 0..n {
            w[rng.random_range(0..n)] += 1.0;
        }
        let a: Vec<f64> = w.iter().zip(y).map(|(w, y)| w * y).collect();
        let active: Vec<Vec<u32>> = sorted
            .iter()
            .map(|o| o.iter().copied().filter(|&r| w[r as usize] > 0.0).collect())
            .collect();
        let mut tree = tree::grow(columns, &a, &w, active, &params, &mut rng);
        for v in tree.leaves_mut() {
            *v = if *v > 0.5 { 1.0 } else { 0.0 };
        }
        tree
    })
}

impl TrainedModel {
    /// Score of one feature row.
    pub fn score_row(&self, row: &[f64]) -> f64 {
        match self.kind {
            ModelKind::Gbdt => sigmoid(self.base_score + self.trees.iter().map(|t| t.predict(row)).sum::<f64>()),
            ModelKind::RandomForest => self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MODEL_MAGIC);
        b.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        b.push(self.kind.code());
        b.extend_from_slice(&self.schema_hash.to_le_bytes());
        b.extend_from_slice(&self.config_fingerprint.to_le_bytes());
        b.extend_from_slice(&self.base_score.to_le_bytes());
        b.extend_from_slice(&(self.n_features as u32).to_le_bytes());
        b.extend_from_slice(&(self.trees.len() as u32).to_le_bytes());
        for t in &self.trees {
            b.extend_from_slice(&(t.nodes.len() as u32).to_le_bytes());
            for n in &t.nodes {
                b.extend_from_slice(&n.feature.to_le_bytes());
                b.extend_from_slice(&n.threshold.to_le_bytes());
                b.extend_from_slice(&n.left.to_le_bytes());
                b.extend_from_slice(&n.right.to_le_bytes());
                b.extend_from_slice(&n.value.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TrainedModel> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(8)? != MODEL_MAGIC {
            return Err(Error::Format("not a model file".into()));
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let kind = match r.take(1)?[0] {
            1 => ModelKind::Gbdt,
            2 => ModelKind::RandomForest,
            k => return Err(Error::Format(format!("unknown model kind {k}"))),
        };
        let schema_hash = r.u64()?;
        let config_fingerprint = r.u64()?;
        let base_score = r.f64()?;
        let n_features = r.u32()? as usize;
        let n_trees = r.u32()? as usize;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let n_nodes = r.u32()? as usize;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                nodes.push(Node {
                    feature: r.u32()?,
                    threshold: r.f64()?,
                    left: r.u32()?,
                    right: r.u32()?,
                    value: r.f64()?,
                });
            }
            validate_tree(&nodes, n_features)?;
            trees.push(Tree { nodes });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes in model file".into()));
        }
        Ok(TrainedModel {
            kind,
            schema_hash,
            config_fingerprint,
            base_score,
            n_features,
            trees,
        })
    }

    /// Hex SHA-256 of the serialized model.
    pub fn fingerprint(&self) -> String {
        hashing::sha256_hex(&self.to_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        TrainedModel::from_bytes(&bytes)
    }
}

const MODEL_MAGIC: &[u8; 8] = b"DPMODEL\0";
const MODEL_VERSION: u32 = 1;

/// Children must point forward and features must exist, so prediction on a
/// loaded model always terminates.
fn validate_tree(nodes: &[Node], n_features: usize) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::Format("empty tree".into()));
    }
    for (i, n) in nodes.iter().enumerate() {
        if n.is_leaf() {
            continue;
        }
        let ok = (n.feature as usize) < n_features
            && (n.left as usize) > i
            && (n.right as usize) > i
            && (n.left as usize) < nodes.len()
            && (n.right as usize) < nodes.len();
        if !ok {
            return Err(Error::Format(format!("malformed tree node {i}")));
        }
    }
    Ok(())
}

/// Scores every row of `matrix`. The matrix must have the schema the model
/// was trained on.
pub fn predict_scores(model: &TrainedModel, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
    let found = matrix.schema_hash();
    if found != model.schema_hash {
        return Err(Error::SchemaMismatch {
            expected: model.schema_hash,
            found,
        });
    }
    Ok(exec::map_range(matrix.n_rows(), |i| model.score_row(matrix.row(i))))
}

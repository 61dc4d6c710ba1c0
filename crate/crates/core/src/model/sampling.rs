//! Training-row selection from a label plan.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backtrack::{Label, LabelPlan};
use crate::data::{Dataset, Day};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::hashing;

/// Negatives drawn per positive under [`SamplingPolicy::Undersample1to10`].
pub const UNDERSAMPLE_RATIO: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingPolicy {
    /// Every positive sample plus one negative per healthy disk, taken on
    /// its last observed day outside the dropped span.
    #[serde(rename = "lastday")]
    WholePhasePositivesLastDayNegatives,
    /// Every positive plus uniformly drawn negatives, ten per positive.
    #[serde(rename = "undersample")]
    Undersample1to10,
}

impl fmt::Display for SamplingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingPolicy::WholePhasePositivesLastDayNegatives => "lastday",
            SamplingPolicy::Undersample1to10 => "undersample",
        })
    }
}

impl FromStr for SamplingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lastday" => Ok(SamplingPolicy::WholePhasePositivesLastDayNegatives),
            "undersample" => Ok(SamplingPolicy::Undersample1to10),
            other => Err(Error::Config(format!(
                "unknown sampling policy `{other}` (expected lastday or undersample)"
            ))),
        }
    }
}

/// Picks rows among `keys` (sorted by serial, then day). Returns
/// `(index into keys, label)` in ascending index order.
fn choose(keys: &[(&str, Day)], plan: &LabelPlan, policy: SamplingPolicy, seed: u64) -> Result<Vec<(usize, u8)>> {
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (i, (serial, day)) in keys.iter().enumerate() {
        match plan.label(serial, *day) {
            Some(Label::Positive) => positives.push(i),
            Some(Label::Negative) => negatives.push(i),
            Some(Label::Dropped) | None => {}
        }
    }
    if positives.is_empty() {
        return Err(Error::NoPositives);
    }
    let chosen_negatives: Vec<usize> = match policy {
        SamplingPolicy::WholePhasePositivesLastDayNegatives => {
            let last: BTreeMap<&str, Day> = plan
                .healthy_disks()
                .filter_map(|(s, d)| d.map(|d| (s.as_str(), d)))
                .collect();
            negatives
                .into_iter()
                .filter(|&i| last.get(keys[i].0) == Some(&keys[i].1))
                .collect()
        }
        SamplingPolicy::Undersample1to10 => {
            let want = (positives.len() * UNDERSAMPLE_RATIO).min(negatives.len());
            let mut rng = ChaCha8Rng::seed_from_u64(hashing::mix_seed(seed, 0x756e64));
            let mut picked = rand::seq::index::sample(&mut rng, negatives.len(), want).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|j| negatives[j]).collect()
        }
    };
    let mut rows: Vec<(usize, u8)> = positives
        .into_iter()
        .map(|i| (i, 1))
        .chain(chosen_negatives.into_iter().map(|i| (i, 0)))
        .collect();
    rows.sort_unstable();
    Ok(rows)
}

/// Training rows drawn straight from the dataset's training-phase samples:
/// `(serial, day, label)` sorted by serial and day.
pub fn select_training_rows(
    plan: &LabelPlan,
    dataset: &Dataset,
    policy: SamplingPolicy,
    seed: u64,
) -> Result<Vec<(String, Day, u8)>> {
    let keys: Vec<(&str, Day)> = dataset
        .disks
        .iter()
        .flat_map(|(s, d)| {
            d.samples
                .iter()
                .take_while(|x| x.day <= plan.train_end_day)
                .map(move |x| (s.as_str(), x.day))
        })
        .collect();
    Ok(choose(&keys, plan, policy, seed)?
        .into_iter()
        .map(|(i, y)| (keys[i].0.to_string(), keys[i].1, y))
        .collect())
}

/// Selects and labels training rows from an already featurized matrix.
pub fn assemble_training_set(
    matrix: &FeatureMatrix,
    plan: &LabelPlan,
    policy: SamplingPolicy,
    seed: u64,
) -> Result<(FeatureMatrix, Vec<u8>)> {
    let mut order: Vec<usize> = (0..matrix.n_rows()).collect();
    order.sort_by(|&a, &b| matrix.keys[a].cmp(&matrix.keys[b]));
    let keys: Vec<(&str, Day)> = order
        .iter()
        .map(|&i| (matrix.keys[i].0.as_str(), matrix.keys[i].1))
        .collect();
    let chosen = choose(&keys, plan, policy, seed)?;
    let rows: Vec<usize> = chosen.iter().map(|(i, _)| order[*i]).collect();
    let labels: Vec<u8> = chosen.iter().map(|(_, y)| *y).collect();
    let mut selected = matrix.select(&rows);
    selected.labels = Some(labels.clone());
    Ok((selected, labels))
}

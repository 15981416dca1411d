use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ForestError, Matrix};
use crate::features::{ActionFeatures, NUM_FEATURES};
use crate::seed::{rng_for, TAG_DATASET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Genuine,
    Impostor,
}

/// Balanced two-class dataset for one user: all of the user's actions plus
/// the same number of actions drawn from the other users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserDataset {
    pub genuine_user: u32,
    pub rows: Vec<(ActionFeatures, Label)>,
}

impl UserDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.rows.iter().filter(|(_, l)| *l == label).count()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.rows.iter().map(|(_, l)| *l == Label::Genuine).collect()
    }

    pub fn to_matrix(&self) -> (Matrix, Vec<bool>) {
        let mut data = Vec::with_capacity(self.rows.len() * NUM_FEATURES);
        for (f, _) in &self.rows {
            data.extend_from_slice(&f.to_vector());
        }
        (Matrix::new(data, NUM_FEATURES), self.labels())
    }
}

/// Genuine rows come first in their original order. Each of the `n - 1`
/// other users with actions contributes `N / (n - 1)` impostor rows, the
/// remainder going one each to the lowest user ids. Picks are uniform
/// without replacement (with replacement, and a warning, when a user has
/// too few actions) and keep each user's original order.
pub fn build_user_dataset(
    all: &BTreeMap<u32, Vec<ActionFeatures>>,
    genuine_user: u32,
    seed: u64,
) -> Result<UserDataset, ForestError> {
    let genuine = match all.get(&genuine_user) {
        Some(g) if !g.is_empty() => g,
        _ => return Err(ForestError::NoGenuineActions(genuine_user)),
    };
    let impostors: Vec<(&u32, &Vec<ActionFeatures>)> = all
        .iter()
        .filter(|(u, acts)| **u != genuine_user && !acts.is_empty())
        .collect();
    if impostors.is_empty() {
        return Err(ForestError::NotEnoughUsers(1));
    }
    let n_genuine = genuine.len();
    let base = n_genuine / impostors.len();
    let extra = n_genuine % impostors.len();

    let mut rng = rng_for(seed, &[TAG_DATASET, u64::from(genuine_user)]);
    let mut rows: Vec<(ActionFeatures, Label)> = genuine.iter().map(|a| (a.clone(), Label::Genuine)).collect();
    for (k, (user, acts)) in impostors.iter().enumerate() {
        let quota = base + usize::from(k < extra);
        let mut picks: Vec<usize> = if quota <= acts.len() {
            sample(&mut rng, acts.len(), quota).into_vec()
        } else {
            log::warn!(
                "user {user} has {} actions, fewer than its impostor quota {quota} for user {genuine_user}; sampling with replacement",
                acts.len()
            );
            (0..quota).map(|_| rng.gen_range(0..acts.len())).collect()
        };
        picks.sort_unstable();
        rows.extend(picks.into_iter().map(|i| (acts[i].clone(), Label::Impostor)));
    }
    Ok(UserDataset { genuine_user, rows })
}

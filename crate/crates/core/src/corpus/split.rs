use std::collections::BTreeMap;

use super::{CorpusError, Dataset};
use crate::rng::{derive_seed, rng_from_seed, shuffle, stream};

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    /// False when stratification was impossible and a plain random split
    /// was used instead; `warning` then says why.
    pub stratified: bool,
    pub warning: Option<String>,
}

/// Random train/test split, stratified on the joint slice-membership
/// pattern. The test side gets exactly `round(test_fraction * n)` examples
/// (at least one on each side). Per-stratum test counts are allotted by
/// largest remainder, so every slice's prevalence on either side tracks the
/// whole. Both sides keep the original example order.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<Split, CorpusError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::InvalidConfig(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = ds.len();
    if n < 2 {
        return Err(CorpusError::InvalidConfig(format!(
            "cannot split a dataset of {n} example(s)"
        )));
    }
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = rng_from_seed(derive_seed(seed, &[stream::SPLIT]));

    let warning = stratification_blocker(ds);
    let mut test_rows = match &warning {
        None => stratified_pick(ds, n_test, test_fraction, &mut rng),
        Some(_) => {
            let mut order: Vec<usize> = (0..n).collect();
            shuffle(&mut rng, &mut order);
            order.truncate(n_test);
            order
        }
    };
    test_rows.sort_unstable();
    let mut in_test = vec![false; n];
    for &i in &test_rows {
        in_test[i] = true;
    }
    let train_rows: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
    Ok(Split {
        train: ds.select(&train_rows),
        test: ds.select(&test_rows),
        stratified: warning.is_none(),
        warning,
    })
}

fn stratification_blocker(ds: &Dataset) -> Option<String> {
    if ds.k() == 0 {
        return Some("dataset declares no slices".into());
    }
    for j in 0..ds.k() {
        match ds.slice_column(j) {
            None => return Some("some records carry no slice labels".into()),
            Some(col) => {
                let pos = col.iter().filter(|&&v| v == 1).count();
                if pos < 2 {
                    return Some(format!(
                        "slice {:?} has {pos} positive(s); need at least 2 to stratify",
                        ds.slice_names[j]
                    ));
                }
            }
        }
    }
    None
}

fn stratified_pick(
    ds: &Dataset,
    n_test: usize,
    fraction: f64,
    rng: &mut crate::rng::Rng,
) -> Vec<usize> {
    let mut strata: BTreeMap<Vec<u8>, Vec<usize>> = BTreeMap::new();
    for (i, rec) in ds.records.iter().enumerate() {
        let key = rec.s.clone().expect("checked by stratification_blocker");
        strata.entry(key).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = strata.into_values().collect();

    let quotas: Vec<f64> = groups.iter().map(|g| g.len() as f64 * fraction).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut remaining = n_test.saturating_sub(assigned);
    for &g in order.iter().cycle().take(order.len() * 2) {
        if remaining == 0 {
            break;
        }
        if alloc[g] < groups[g].len() {
            alloc[g] += 1;
            remaining -= 1;
        }
    }

    let mut picked = Vec::with_capacity(n_test);
    for (group, take) in groups.iter_mut().zip(alloc) {
        shuffle(rng, group);
        picked.extend_from_slice(&group[..take]);
    }
    picked
}

use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    None,
    /// Scale each nonzero row to unit Euclidean norm.
    L2Row,
    /// Standardize each column to mean 0, variance 1. Sparse input is
    /// densified. Constant columns become all-zero.
    ZscoreCol,
}

pub fn normalize(ds: &Dataset, scheme: Normalization) -> Dataset {
    let features = match scheme {
        Normalization::None => ds.features.clone(),
        Normalization::L2Row => l2_rows(&ds.features),
        Normalization::ZscoreCol => zscore_columns(&ds.features),
    };
    Dataset {
        features,
        records: ds.records.clone(),
        slice_names: ds.slice_names.clone(),
        provenance: ds.provenance.clone(),
    }
}

fn l2_rows(m: &FeatureMatrix) -> FeatureMatrix {
    let mut out = m.clone();
    out.map_rows_in_place(|_, row| {
        let norm = row.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in row.iter_mut() {
                *x = (*x as f64 / norm) as f32;
            }
        }
    });
    out
}

fn zscore_columns(m: &FeatureMatrix) -> FeatureMatrix {
    let mut out = m.to_dense();
    let (n, d) = (m.n_rows(), m.n_cols());
    if n == 0 {
        return out;
    }
    let mut mean = vec![0.0f64; d];
    for i in 0..n {
        out.row(i).add_scaled_to(1.0, &mut mean);
    }
    mean.iter_mut().for_each(|x| *x /= n as f64);
    let mut var = vec![0.0f64; d];
    for i in 0..n {
        for (c, &x) in out.row(i).values().iter().enumerate() {
            var[c] += (x as f64 - mean[c]).powi(2);
        }
    }
    let scale: Vec<Option<f64>> = var
        .iter()
        .map(|&v| {
            let sd = (v / n as f64).sqrt();
            (sd > 0.0).then_some(sd)
        })
        .collect();
    out.map_rows_in_place(|_, row| {
        for (c, x) in row.iter_mut().enumerate() {
            *x = match scale[c] {
                Some(sd) => ((*x as f64 - mean[c]) / sd) as f32,
                None => 0.0,
            };
        }
    });
    out
}

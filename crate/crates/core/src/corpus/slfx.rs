//! SLFX bundles: a JSON manifest next to a binary feature payload and a
//! JSON-lines records file.
//!
//! Dense payload: little-endian `f32`, row-major, exactly `n * d * 4` bytes.
//! Sparse payload: per row a little-endian `u32` count `m`, then `m` pairs of
//! (`u32` column, `f32` value) with strictly increasing columns.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset, ExampleRecord, FeatureMatrix, Row, Storage};

pub const MANIFEST_FILE: &str = "manifest.json";
const FEATURES_FILE: &str = "features.bin";
const RECORDS_FILE: &str = "records.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub layout: Layout,
    pub features: String,
    pub records: String,
    pub slice_names: Vec<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub provenance: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset, CorpusError> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| CorpusError::Format(format!("{}: {e}", manifest_path.display())))?;
    if manifest.version != 1 {
        return Err(CorpusError::Format(format!(
            "unsupported SLFX version {}",
            manifest.version
        )));
    }
    if manifest.slice_names.len() != manifest.k {
        return Err(CorpusError::DimensionMismatch(format!(
            "manifest declares k={} but lists {} slice names",
            manifest.k,
            manifest.slice_names.len()
        )));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let feature_path = base.join(&manifest.features);
    let payload = fs::read(&feature_path).map_err(io_err(&feature_path))?;
    let features = match manifest.layout {
        Layout::Dense => decode_dense(&payload, manifest.n, manifest.d)?,
        Layout::Sparse => decode_sparse(&payload, manifest.n, manifest.d)?,
    };

    let records_path = base.join(&manifest.records);
    let records = read_records(&records_path)?;
    if records.len() != manifest.n {
        return Err(CorpusError::DimensionMismatch(format!(
            "manifest declares n={} but records file has {} entries",
            manifest.n,
            records.len()
        )));
    }

    Dataset::new(features, records, manifest.slice_names, manifest.provenance)
}

fn decode_dense(payload: &[u8], n: usize, d: usize) -> Result<FeatureMatrix, CorpusError> {
    let expected = n * d * 4;
    if payload.len() != expected {
        return Err(CorpusError::DimensionMismatch(format!(
            "dense payload is {} bytes, expected n*d*4 = {expected}",
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    FeatureMatrix::dense(n, d, values)
}

fn decode_sparse(payload: &[u8], n: usize, d: usize) -> Result<FeatureMatrix, CorpusError> {
    let mut cursor = payload;
    let mut take_u32 = |what: &str, row: usize| -> Result<[u8; 4], CorpusError> {
        if cursor.len() < 4 {
            return Err(CorpusError::DimensionMismatch(format!(
                "sparse payload truncated reading {what} of row {row}"
            )));
        }
        let (head, rest) = cursor.split_at(4);
        cursor = rest;
        Ok([head[0], head[1], head[2], head[3]])
    };
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let m = u32::from_le_bytes(take_u32("count", i)?) as usize;
        if m > d {
            return Err(CorpusError::DimensionMismatch(format!(
                "row {i} declares {m} nonzeros with d={d}"
            )));
        }
        let mut row = Vec::with_capacity(m);
        for _ in 0..m {
            let j = u32::from_le_bytes(take_u32("index", i)?);
            let x = f32::from_le_bytes(take_u32("value", i)?);
            row.push((j, x));
        }
        rows.push(row);
    }
    if !cursor.is_empty() {
        return Err(CorpusError::DimensionMismatch(format!(
            "sparse payload has {} trailing bytes after {n} rows",
            cursor.len()
        )));
    }
    FeatureMatrix::sparse(d, rows)
}

fn read_records(path: &Path) -> Result<Vec<ExampleRecord>, CorpusError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ExampleRecord = serde_json::from_str(&line).map_err(|e| {
            CorpusError::Format(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        records.push(rec);
    }
    Ok(records)
}

/// Writes `ds` as an SLFX bundle into `dir` (created if needed) and returns
/// the manifest path.
pub fn save_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<PathBuf, CorpusError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let layout = if ds.features.is_sparse() {
        Layout::Sparse
    } else {
        Layout::Dense
    };

    let feature_path = dir.join(FEATURES_FILE);
    fs::write(&feature_path, encode_features(&ds.features)).map_err(io_err(&feature_path))?;

    let records_path = dir.join(RECORDS_FILE);
    let file = fs::File::create(&records_path).map_err(io_err(&records_path))?;
    let mut out = BufWriter::new(file);
    for rec in &ds.records {
        let line = serde_json::to_string(rec).expect("records serialize");
        writeln!(out, "{line}").map_err(io_err(&records_path))?;
    }
    out.flush().map_err(io_err(&records_path))?;

    let manifest = Manifest {
        version: 1,
        n: ds.len(),
        d: ds.dim(),
        k: ds.k(),
        layout,
        features: FEATURES_FILE.into(),
        records: RECORDS_FILE.into(),
        slice_names: ds.slice_names.clone(),
        provenance: ds.provenance.clone(),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&manifest_path, text).map_err(io_err(&manifest_path))?;
    Ok(manifest_path)
}

fn encode_features(m: &FeatureMatrix) -> Vec<u8> {
    match m.storage() {
        Storage::Dense(values) => values.iter().flat_map(|x| x.to_le_bytes()).collect(),
        Storage::Sparse { .. } => {
            let mut out = Vec::new();
            for i in 0..m.n_rows() {
                if let Row::Sparse { indices, values } = m.row(i) {
                    out.extend_from_slice(&(indices.len() as u32).to_le_bytes());
                    for (&j, &x) in indices.iter().zip(values) {
                        out.extend_from_slice(&j.to_le_bytes());
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_from_seed, unit_f64, Gaussian};

    fn write_bundle(dir: &Path, n: usize, d: usize, payload: &[u8], records: &str) -> PathBuf {
        fs::write(dir.join("f.bin"), payload).unwrap();
        fs::write(dir.join("r.jsonl"), records).unwrap();
        let manifest = format!(
            r#"{{"version":1,"n":{n},"d":{d},"k":1,"layout":"dense","features":"f.bin","records":"r.jsonl","slice_names":["s0"]}}"#
        );
        let p = dir.join("m.json");
        fs::write(&p, manifest).unwrap();
        p
    }

    const THREE_RECORDS: &str = "{\"id\":\"a\",\"y\":0,\"s\":[1]}\n{\"id\":\"b\",\"y\":1,\"s\":[0]}\n{\"id\":\"c\",\"y\":1}\n";

    #[test]
    fn smallest_dense_bundle_loads() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_bundle(dir.path(), 3, 2, &[0u8; 24], THREE_RECORDS);
        let ds = load_dataset(p).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.records[2].s, None);
    }

    #[test]
    fn short_payload_is_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_bundle(dir.path(), 3, 2, &[0u8; 16], THREE_RECORDS);
        assert!(matches!(load_dataset(p), Err(CorpusError::DimensionMismatch(_))));
    }

    #[test]
    fn nan_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut payload = vec![0u8; 24];
        payload[4..8].copy_from_slice(&f32::NAN.to_le_bytes());
        let p = write_bundle(dir.path(), 3, 2, &payload, THREE_RECORDS);
        assert!(matches!(load_dataset(p), Err(CorpusError::NonFinite(_))));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let recs = "{\"id\":\"a\",\"y\":0}\n{\"id\":\"a\",\"y\":1}\n{\"id\":\"c\",\"y\":1}\n";
        let p = write_bundle(dir.path(), 3, 2, &[0u8; 24], recs);
        assert!(matches!(load_dataset(p), Err(CorpusError::DuplicateId(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_bundle(dir.path(), 3, 2, &[0u8; 24], THREE_RECORDS);
        fs::remove_file(dir.path().join("f.bin")).unwrap();
        assert!(matches!(load_dataset(&p), Err(CorpusError::Io { .. })));
        assert!(matches!(
            load_dataset(dir.path().join("nope.json")),
            Err(CorpusError::Io { .. })
        ));
    }

    #[test]
    fn record_count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_bundle(dir.path(), 3, 2, &[0u8; 24], "{\"id\":\"a\",\"y\":0}\n");
        assert!(matches!(load_dataset(p), Err(CorpusError::DimensionMismatch(_))));
    }

    fn random_dataset(seed: u64, sparse: bool) -> Dataset {
        let mut rng = rng_from_seed(seed);
        let mut g = Gaussian::new();
        let n = 1 + crate::rng::uniform_index(&mut rng, 40);
        let d = 1 + crate::rng::uniform_index(&mut rng, 12);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        if unit_f64(&mut rng) < 0.4 {
                            0.0
                        } else {
                            (g.sample(&mut rng) * 1e3) as f32 as f64
                        }
                    })
                    .collect()
            })
            .collect();
        let mut features = FeatureMatrix::from_dense_rows(d, &rows).unwrap();
        if sparse {
            features = features.to_sparse();
        }
        let records = (0..n)
            .map(|i| ExampleRecord {
                id: format!("ex-{i}"),
                y: (i % 3) as i64,
                s: Some(vec![(i % 2) as u8, ((i / 2) % 2) as u8]),
                text: (i % 4 == 0).then(|| format!("text {i}")),
                correct: (i % 5 == 0).then_some(i % 2 == 0),
            })
            .collect();
        Dataset::new(features, records, vec!["a".into(), "b".into()], "random").unwrap()
    }

    #[test]
    fn save_load_round_trip_is_identity() {
        for seed in 0..20 {
            for sparse in [false, true] {
                let ds = random_dataset(seed, sparse);
                let dir = tempfile::tempdir().unwrap();
                let manifest = save_dataset(&ds, dir.path()).unwrap();
                let back = load_dataset(manifest).unwrap();
                assert_eq!(back, ds);
                let bits = |m: &FeatureMatrix| match m.storage() {
                    Storage::Dense(v) => v.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                    Storage::Sparse { values, .. } => values.iter().map(|x| x.to_bits()).collect(),
                };
                assert_eq!(bits(&back.features), bits(&ds.features));
            }
        }
    }
}

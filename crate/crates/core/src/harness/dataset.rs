use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::Tensor;

use super::HarnessError;

// Gaussian blob geometry for the synthetic noisy-surface dataset: two
// interleaved blobs per class in a checkerboard arrangement.
const BLOB_CENTERS: [[(f64, f64); 2]; 2] = [
    [(-1.0, -1.0), (1.0, 1.0)],  // class 0
    [(-1.0, 1.0), (1.0, -1.0)],  // class 1
];
const BLOB_SIGMA: f64 = 0.5;

// Standard-deviation floor for z-score normalization of constant columns.
const SIGMA_FLOOR: f64 = 1e-12;

/// Labeled samples: one feature row per sample plus an integer class.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(
        features: Tensor,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self, HarnessError> {
        if features.shape()[0] != labels.len() {
            return Err(HarnessError::Dataset(format!(
                "{} feature rows but {} labels",
                features.shape()[0],
                labels.len()
            )));
        }
        if classes == 0 || labels.iter().any(|&l| l >= classes) {
            return Err(HarnessError::Dataset(format!(
                "labels must lie in [0, {classes})"
            )));
        }
        Ok(Self {
            features,
            labels,
            classes,
            feature_names: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample feature shape.
    pub fn sample_shape(&self) -> &[usize] {
        &self.features.shape()[1..]
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let row: usize = self.sample_shape().iter().product();
        let mut shape = self.features.shape().to_vec();
        shape[0] = indices.len();
        let mut data = Vec::with_capacity(indices.len() * row);
        for &i in indices {
            data.extend_from_slice(&self.features.data()[i * row..(i + 1) * row]);
        }
        Dataset {
            features: Tensor::new(shape, data).expect("subset of valid tensor"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Train/validation/test partition of one dataset.
#[derive(Debug, Clone)]
pub struct DataSplits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Shuffle deterministically and partition by the given fractions
/// (train, val; the remainder is test).
pub fn split_dataset(ds: &Dataset, train_frac: f64, val_frac: f64, seed: u64) -> DataSplits {
    let n = ds.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates, fixed draw order.
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    let n_train = (train_frac * n as f64).floor() as usize;
    let n_val = (val_frac * n as f64).floor() as usize;
    DataSplits {
        train: ds.subset(&indices[..n_train]),
        val: ds.subset(&indices[n_train..n_train + n_val]),
        test: ds.subset(&indices[n_train + n_val..]),
    }
}

/// Load a tabular dataset from a headered CSV file.
///
/// Every column except `label_column` is parsed as a float feature. Label
/// values map to class indices by lexicographic order of their string form,
/// so reloading the same file always yields the same encoding. With
/// `normalize`, each feature column is z-scored with a floored standard
/// deviation, so constant columns map to zero.
pub fn load_csv(path: &Path, label_column: &str, normalize: bool) -> Result<Dataset, HarnessError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| HarnessError::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| HarnessError::MissingLabel(label_column.to_string()))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();
    let dim = feature_names.len();
    if dim == 0 {
        return Err(HarnessError::Dataset("no feature columns".into()));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| HarnessError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(HarnessError::Parse {
                line,
                msg: format!("expected {} fields, got {}", headers.len(), record.len()),
            });
        }
        let mut row = Vec::with_capacity(dim);
        for (i, field) in record.iter().enumerate() {
            if i == label_idx {
                raw_labels.push(field.trim().to_string());
            } else {
                row.push(field.trim().parse::<f64>().map_err(|e| HarnessError::Parse {
                    line,
                    msg: format!("column '{}': {e}", headers.get(i).unwrap_or("")),
                })?);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(HarnessError::Dataset("csv has no data rows".into()));
    }

    // Lexicographic label-to-index mapping.
    let mut class_map = BTreeMap::new();
    for l in &raw_labels {
        class_map.entry(l.clone()).or_insert(0usize);
    }
    for (rank, (_, v)) in class_map.iter_mut().enumerate() {
        *v = rank;
    }
    let labels: Vec<usize> = raw_labels.iter().map(|l| class_map[l]).collect();

    let n = rows.len();
    let mut data = Vec::with_capacity(n * dim);
    for row in &rows {
        data.extend_from_slice(row);
    }
    let mut features = Tensor::new(vec![n, dim], data).map_err(|e| {
        HarnessError::Dataset(format!("feature matrix invalid: {e}"))
    })?;

    if normalize {
        for j in 0..dim {
            let mean: f64 = (0..n).map(|i| features.at2(i, j)).sum::<f64>() / n as f64;
            let var: f64 =
                (0..n).map(|i| (features.at2(i, j) - mean).powi(2)).sum::<f64>() / n as f64;
            let sigma = var.sqrt().max(SIGMA_FLOOR);
            for i in 0..n {
                features.set2(i, j, (features.at2(i, j) - mean) / sigma);
            }
        }
    }

    let mut ds = Dataset::new(features, labels, class_map.len())?;
    ds.feature_names = Some(feature_names);
    Ok(ds)
}

/// Two-class 2-D dataset from interleaved Gaussian blobs, with each label
/// independently flipped at the given probability. Same seed, same dataset.
pub fn make_noisy_surface_dataset(n: usize, noise: f64, seed: u64) -> Dataset {
    assert!(n >= 10, "need at least 10 samples");
    assert!((0.0..0.5).contains(&noise), "noise must lie in [0, 0.5)");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let blob = (i / 2) % 2;
        let (cx, cy) = BLOB_CENTERS[class][blob];
        // Box-Muller from two uniforms.
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let (z1, z2) = (r * (TAU * u2).cos(), r * (TAU * u2).sin());
        data.push(cx + BLOB_SIGMA * z1);
        data.push(cy + BLOB_SIGMA * z2);
        let flip = rng.gen::<f64>() < noise;
        labels.push(if flip { 1 - class } else { class });
    }
    Dataset {
        features: Tensor::new(vec![n, 2], data).expect("finite by construction"),
        labels,
        classes: 2,
        feature_names: Some(vec!["x1".into(), "x2".into()]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn toy_csv_maps_labels_lexicographically() {
        let (_d, path) = write_csv("a,b,label\n1,2,pos\n3,4,neg\n5,6,pos\n7,8,neg\n");
        let ds = load_csv(&path, "label", false).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.classes, 2);
        // "neg" < "pos" lexicographically
        assert_eq!(ds.labels, vec![1, 0, 1, 0]);
        assert_eq!(ds.feature_names.as_deref(), Some(&["a".to_string(), "b".to_string()][..]));
    }

    #[test]
    fn constant_column_normalizes_to_zero() {
        let (_d, path) = write_csv("a,b,label\n5,1,x\n5,2,x\n5,3,y\n");
        let ds = load_csv(&path, "label", true).unwrap();
        for i in 0..3 {
            assert_eq!(ds.features.at2(i, 0), 0.0);
        }
    }

    #[test]
    fn reloading_gives_identical_dataset() {
        let (_d, path) = write_csv("a,b,label\n1.5,-2,u\n0.25,4,v\n9,8,u\n");
        let first = load_csv(&path, "label", true).unwrap();
        let second = load_csv(&path, "label", true).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn missing_label_and_bad_field_are_reported() {
        let (_d, path) = write_csv("a,b,label\n1,2,x\n");
        assert!(matches!(
            load_csv(&path, "target", false),
            Err(HarnessError::MissingLabel(_))
        ));
        let (_d2, path2) = write_csv("a,b,label\n1,2,x\n1,oops,y\n");
        match load_csv(&path2, "label", false) {
            Err(HarnessError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn zero_noise_labels_follow_regions() {
        let ds = make_noisy_surface_dataset(200, 0.0, 5);
        for (i, &label) in ds.labels.iter().enumerate() {
            assert_eq!(label, i % 2);
        }
    }

    #[test]
    fn same_seed_reproduces_dataset() {
        let a = make_noisy_surface_dataset(100, 0.3, 9);
        let b = make_noisy_surface_dataset(100, 0.3, 9);
        assert_eq!(a, b);
        let c = make_noisy_surface_dataset(100, 0.3, 10);
        assert_ne!(a, c);
    }

    #[test]
    fn flip_fraction_tracks_noise_rate() {
        let n = 10_000;
        let ds = make_noisy_surface_dataset(n, 0.3, 7);
        let flipped = ds
            .labels
            .iter()
            .enumerate()
            .filter(|(i, &l)| l != i % 2)
            .count() as f64;
        let frac = flipped / n as f64;
        assert!((frac - 0.3).abs() < 0.01, "flip fraction {frac}");
    }

    #[test]
    fn split_partitions_without_overlap_or_loss() {
        let ds = make_noisy_surface_dataset(100, 0.1, 3);
        let splits = split_dataset(&ds, 0.6, 0.2, 77);
        assert_eq!(splits.train.len(), 60);
        assert_eq!(splits.val.len(), 20);
        assert_eq!(splits.test.len(), 20);
        let again = split_dataset(&ds, 0.6, 0.2, 77);
        assert_eq!(splits.train, again.train);
    }
}

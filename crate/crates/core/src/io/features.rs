use std::collections::HashSet;
use std::path::Path;

use ndarray::Array2;

use super::npy::{read_matrix, DType};
use crate::error::{Error, Result};

/// Penultimate-layer activations of one model over the shared image set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub model_id: String,
    /// `N × d`, one row per image.
    pub values: Array2<f64>,
    pub image_ids: Vec<String>,
    /// Element type the values were read as (or will be stored as).
    pub dtype: DType,
}

impl FeatureMatrix {
    pub fn new(model_id: impl Into<String>, values: Array2<f64>, image_ids: Vec<String>) -> Result<Self> {
        let fm = FeatureMatrix {
            model_id: model_id.into(),
            values,
            image_ids,
            dtype: DType::F8,
        };
        fm.validate()?;
        Ok(fm)
    }

    /// Builds a matrix with image ids `"0"`, `"1"`, … for tests and fixtures.
    pub fn anonymous(model_id: impl Into<String>, values: Array2<f64>) -> Result<Self> {
        let ids = (0..values.nrows()).map(|i| i.to_string()).collect();
        Self::new(model_id, values, ids)
    }

    pub fn n_images(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = self.values.dim();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "{}: need at least 2 images, got {n}",
                self.model_id
            )));
        }
        if d < 1 {
            return Err(Error::InsufficientData(format!("{}: zero feature columns", self.model_id)));
        }
        check_finite(&self.values)?;
        if self.image_ids.len() != n {
            return Err(Error::Consistency(format!(
                "{}: {} image ids for {n} rows",
                self.model_id,
                self.image_ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &self.image_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Consistency(format!("duplicate image id {id:?}")));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_finite(m: &Array2<f64>) -> Result<()> {
    for ((row, col), v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row, col });
        }
    }
    Ok(())
}

/// Loads a feature matrix from NPY, rounding to `width` and checking the row
/// count against the run's image order when one is given.
pub fn load_feature_matrix(
    path: &Path,
    model_id: &str,
    image_ids: Option<&[String]>,
    width: DType,
) -> Result<FeatureMatrix> {
    let (mut values, dtype) = read_matrix(path)?;
    check_finite(&values)?;
    if let Some(ids) = image_ids {
        if ids.len() != values.nrows() {
            return Err(Error::Consistency(format!(
                "{}: {} rows but the manifest lists {} images",
                path.display(),
                values.nrows(),
                ids.len()
            )));
        }
    }
    if width == DType::F4 && dtype == DType::F8 {
        values.mapv_inplace(|v| width.quantize(v));
    }
    let ids = match image_ids {
        Some(ids) => ids.to_vec(),
        None => (0..values.nrows()).map(|i| i.to_string()).collect(),
    };
    let mut fm = FeatureMatrix::new(model_id, values, ids)?;
    fm.dtype = dtype;
    Ok(fm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::npy::{write_matrix, write_npy, MAGIC};
    use ndarray::array;
    use std::io::Write;

    #[test]
    fn loads_small_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.npy");
        write_matrix(&path, &array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], DType::F8).unwrap();
        let fm = load_feature_matrix(&path, "m", None, DType::F8).unwrap();
        assert_eq!((fm.n_images(), fm.dim()), (3, 2));
        assert_eq!(fm.values, array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
    }

    #[test]
    fn non_finite_entry_is_located() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.npy");
        let mut f = std::fs::File::create(&path).unwrap();
        write_npy(&mut f, &[2, 2], &[1.0, 2.0, f64::NAN, 4.0], DType::F8).unwrap();
        f.flush().unwrap();
        match load_feature_matrix(&path, "m", None, DType::F8) {
            Err(Error::NonFinite { row: 1, col: 0 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn row_count_must_match_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.npy");
        write_matrix(&path, &array![[1.0], [2.0]], DType::F4).unwrap();
        let ids: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        assert!(matches!(
            load_feature_matrix(&path, "m", Some(&ids), DType::F4),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn bad_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.npy");
        let mut bytes = MAGIC.to_vec();
        bytes[0] = b'P';
        bytes.extend_from_slice(&[1, 0, 0, 0]);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_feature_matrix(&path, "m", None, DType::F8),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn f4_width_rounds_f8_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.npy");
        write_matrix(&path, &array![[0.1], [0.2]], DType::F8).unwrap();
        let fm = load_feature_matrix(&path, "m", None, DType::F4).unwrap();
        assert_eq!(fm.values[[0, 0]], 0.1f32 as f64);
        assert_eq!(fm.dtype, DType::F8);
    }
}

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Object-category membership of every image in the run order.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryIndex {
    pub image_ids: Vec<String>,
    /// Category index of each image, parallel to `image_ids`.
    pub category_of: Vec<usize>,
    /// Category labels in order of first appearance.
    pub categories: Vec<String>,
    /// Row index of the image that represents each category in
    /// category-level analyses, if one is marked.
    pub designated: Vec<Option<usize>>,
}

impl CategoryIndex {
    pub fn from_labels(image_ids: Vec<String>, labels: &[String]) -> Result<Self> {
        if image_ids.len() != labels.len() {
            return Err(Error::Consistency(format!(
                "{} image ids but {} category labels",
                image_ids.len(),
                labels.len()
            )));
        }
        let mut lookup: HashMap<&str, usize> = HashMap::new();
        let mut categories = Vec::new();
        let mut category_of = Vec::with_capacity(labels.len());
        for label in labels {
            let next = categories.len();
            let c = *lookup.entry(label.as_str()).or_insert_with(|| {
                categories.push(label.clone());
                next
            });
            category_of.push(c);
        }
        let designated = vec![None; categories.len()];
        Ok(CategoryIndex {
            image_ids,
            category_of,
            categories,
            designated,
        })
    }

    /// `C` categories of `J` consecutive images each.
    pub fn balanced(n_categories: usize, per_category: usize) -> Self {
        let n = n_categories * per_category;
        CategoryIndex {
            image_ids: (0..n).map(|i| i.to_string()).collect(),
            category_of: (0..n).map(|i| i / per_category).collect(),
            categories: (0..n_categories).map(|c| format!("c{c}")).collect(),
            designated: (0..n_categories).map(|c| Some(c * per_category)).collect(),
        }
    }

    pub fn n_images(&self) -> usize {
        self.category_of.len()
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.categories.len()];
        for &c in &self.category_of {
            counts[c] += 1;
        }
        counts
    }

    /// `Some(J)` when every category has exactly `J` images.
    pub fn exemplars_per_category(&self) -> Option<usize> {
        let counts = self.counts();
        let first = *counts.first()?;
        counts.iter().all(|&c| c == first).then_some(first)
    }

    /// Row indices of the designated image of every category, in category order.
    pub fn designated_rows(&self) -> Result<Vec<usize>> {
        self.designated
            .iter()
            .enumerate()
            .map(|(c, d)| {
                d.ok_or_else(|| {
                    Error::Consistency(format!(
                        "category {:?} has no designated image",
                        self.categories[c]
                    ))
                })
            })
            .collect()
    }
}

/// Reads `image_id,category[,designated]` rows. `designated` accepts
/// `1/0/true/false`; at most one image per category may be designated.
pub fn load_categories(path: &Path) -> Result<CategoryIndex> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col = col("image_id").ok_or_else(|| Error::Format("image index lacks an image_id column".into()))?;
    let cat_col = col("category").ok_or_else(|| Error::Format("image index lacks a category column".into()))?;
    let des_col = col("designated");

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut flags = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        ids.push(rec[id_col].to_string());
        labels.push(rec[cat_col].to_string());
        let flag = match des_col.map(|c| rec[c].trim().to_ascii_lowercase()) {
            None => false,
            Some(s) => match s.as_str() {
                "1" | "true" => true,
                "" | "0" | "false" => false,
                other => return Err(Error::Format(format!("bad designated flag {other:?}"))),
            },
        };
        flags.push(flag);
    }
    let mut index = CategoryIndex::from_labels(ids, &labels)?;
    for (row, flag) in flags.into_iter().enumerate() {
        if flag {
            let c = index.category_of[row];
            if index.designated[c].replace(row).is_some() {
                return Err(Error::Consistency(format!(
                    "category {:?} has more than one designated image",
                    index.categories[c]
                )));
            }
        }
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_layout() {
        let idx = CategoryIndex::balanced(3, 4);
        assert_eq!(idx.n_images(), 12);
        assert_eq!(idx.exemplars_per_category(), Some(4));
        assert_eq!(idx.designated_rows().unwrap(), vec![0, 4, 8]);
    }

    #[test]
    fn loads_csv_with_designated_images() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("images.csv");
        std::fs::write(
            &p,
            "image_id,category,designated\na1,apple,0\na2,apple,1\nb1,boat,true\nb2,boat,\nc1,cat,1\n",
        )
        .unwrap();
        let idx = load_categories(&p).unwrap();
        assert_eq!(idx.n_categories(), 3);
        assert_eq!(idx.category_of, vec![0, 0, 1, 1, 2]);
        assert_eq!(idx.exemplars_per_category(), None);
        assert_eq!(idx.designated_rows().unwrap(), vec![1, 2, 4]);
    }

    #[test]
    fn two_designated_images_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("images.csv");
        std::fs::write(&p, "image_id,category,designated\na1,apple,1\na2,apple,1\n").unwrap();
        assert!(matches!(load_categories(&p), Err(Error::Consistency(_))));
    }
}

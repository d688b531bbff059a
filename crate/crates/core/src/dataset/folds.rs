//! K-fold splitting with optional case-level grouping.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, ImageRecord};
use super::DatasetError;

#[derive(Clone, Debug, PartialEq)]
pub struct FoldAssignment {
    pub fold_index: usize,
    pub train_records: Vec<ImageRecord>,
    pub val_records: Vec<ImageRecord>,
}

/// Splits the manifest into `k` folds. With grouping, distinct case ids are
/// shuffled by `seed` and dealt round-robin; otherwise records are. Records
/// keep manifest order inside each fold.
pub fn make_folds(
    manifest: &DatasetManifest,
    k: usize,
    seed: u64,
    group_by_case: bool,
) -> Result<Vec<FoldAssignment>, DatasetError> {
    if k < 2 {
        return Err(DatasetError::TooFewForFolds {
            k,
            available: 0,
            unit: "folds",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fold_of: Vec<usize> = if group_by_case {
        // sorted first so the result does not depend on manifest order of cases
        let mut cases: Vec<&str> = manifest.case_ids();
        cases.sort_unstable();
        if cases.len() < k {
            return Err(DatasetError::TooFewForFolds {
                k,
                available: cases.len(),
                unit: "cases",
            });
        }
        cases.shuffle(&mut rng);
        let case_fold: HashMap<&str, usize> =
            cases.iter().enumerate().map(|(i, c)| (*c, i % k)).collect();
        manifest
            .records
            .iter()
            .map(|r| case_fold[r.case_id.as_str()])
            .collect()
    } else {
        let n = manifest.records.len();
        if n < k {
            return Err(DatasetError::TooFewForFolds {
                k,
                available: n,
                unit: "records",
            });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut fold_of = vec![0; n];
        for (slot, &rec) in order.iter().enumerate() {
            fold_of[rec] = slot % k;
        }
        fold_of
    };

    Ok((0..k)
        .map(|fold_index| {
            let (val, train): (Vec<_>, Vec<_>) = manifest
                .records
                .iter()
                .zip(&fold_of)
                .partition(|(_, &f)| f == fold_index);
            FoldAssignment {
                fold_index,
                train_records: train.into_iter().map(|(r, _)| r.clone()).collect(),
                val_records: val.into_iter().map(|(r, _)| r.clone()).collect(),
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldFileEntry {
    pub fold_index: usize,
    pub train: Vec<PathBuf>,
    pub val: Vec<PathBuf>,
}

/// On-disk fold listing used for exact reruns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldFile {
    pub k: usize,
    pub seed: u64,
    pub group_by_case: bool,
    pub folds: Vec<FoldFileEntry>,
}

impl FoldFile {
    pub fn from_folds(folds: &[FoldAssignment], seed: u64, group_by_case: bool) -> Self {
        let paths = |rs: &[ImageRecord]| rs.iter().map(|r| r.image_path.clone()).collect();
        Self {
            k: folds.len(),
            seed,
            group_by_case,
            folds: folds
                .iter()
                .map(|f| FoldFileEntry {
                    fold_index: f.fold_index,
                    train: paths(&f.train_records),
                    val: paths(&f.val_records),
                })
                .collect(),
        }
    }

    /// Rebuilds assignments by looking the listed image paths up in `manifest`.
    pub fn resolve(&self, manifest: &DatasetManifest) -> Result<Vec<FoldAssignment>, DatasetError> {
        let by_path: HashMap<&Path, &ImageRecord> = manifest
            .records
            .iter()
            .map(|r| (r.image_path.as_path(), r))
            .collect();
        let lookup = |ps: &[PathBuf]| -> Result<Vec<ImageRecord>, DatasetError> {
            ps.iter()
                .map(|p| {
                    by_path
                        .get(p.as_path())
                        .map(|r| (*r).clone())
                        .ok_or_else(|| DatasetError::UnknownRecord(p.clone()))
                })
                .collect()
        };
        self.folds
            .iter()
            .map(|f| {
                Ok(FoldAssignment {
                    fold_index: f.fold_index,
                    train_records: lookup(&f.train)?,
                    val_records: lookup(&f.val)?,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::manifest::SourceId;
    use proptest::prelude::*;
    use std::collections::HashSet;

    pub(crate) fn synthetic(frames_per_case: &[usize]) -> DatasetManifest {
        let mut records = Vec::new();
        for (c, &n) in frames_per_case.iter().enumerate() {
            for f in 0..n {
                records.push(ImageRecord {
                    image_path: PathBuf::from(format!("case{c:02}/frame{f:03}.png")),
                    mask_path: PathBuf::from(format!("case{c:02}/mask{f:03}.png")),
                    case_id: format!("case{c:02}"),
                    source_id: SourceId::PancreaticVideo,
                    crop: None,
                });
            }
        }
        DatasetManifest {
            root: PathBuf::from("."),
            records,
        }
    }

    fn check_integrity(m: &DatasetManifest, folds: &[FoldAssignment], grouped: bool) {
        let mut seen = HashSet::new();
        for f in folds {
            let val: HashSet<_> = f.val_records.iter().map(|r| &r.image_path).collect();
            let train: HashSet<_> = f.train_records.iter().map(|r| &r.image_path).collect();
            assert!(val.is_disjoint(&train));
            assert_eq!(val.len() + train.len(), m.len());
            for p in &val {
                assert!(seen.insert((*p).clone()), "record in two val sets");
            }
            if grouped {
                let vc: HashSet<_> = f.val_records.iter().map(|r| &r.case_id).collect();
                assert!(f.train_records.iter().all(|r| !vc.contains(&r.case_id)));
            }
        }
        assert_eq!(seen.len(), m.len());
    }

    #[test]
    fn even_division() {
        let m = synthetic(&[1; 10]);
        let folds = make_folds(&m, 5, 7, true).unwrap();
        assert!(folds.iter().all(|f| f.val_records.len() == 2));
        assert_eq!(make_folds(&m, 5, 7, true).unwrap(), folds);
    }

    #[test]
    fn eighteen_uneven_cases() {
        let frames: Vec<usize> = (0..18).map(|i| 3 + (i * 7) % 11).collect();
        let m = synthetic(&frames);
        let folds = make_folds(&m, 5, 42, true).unwrap();
        check_integrity(&m, &folds, true);
        let counts: Vec<usize> = folds
            .iter()
            .map(|f| f.val_records.iter().map(|r| &r.case_id).collect::<HashSet<_>>().len())
            .collect();
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn errors_for_too_few() {
        let m = synthetic(&[5, 5, 5]);
        assert!(matches!(
            make_folds(&m, 5, 0, true),
            Err(DatasetError::TooFewForFolds { available: 3, .. })
        ));
        assert!(make_folds(&m, 5, 0, false).is_ok());
        assert!(make_folds(&m, 1, 0, false).is_err());
    }

    #[test]
    fn fold_file_resolves_back() {
        let m = synthetic(&[2, 3, 1, 4]);
        let folds = make_folds(&m, 2, 3, true).unwrap();
        let file = FoldFile::from_folds(&folds, 3, true);
        let text = serde_json::to_string(&file).unwrap();
        let back: FoldFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.resolve(&m).unwrap(), folds);
    }

    proptest! {
        #[test]
        fn folds_partition_for_any_seed(seed in any::<u64>(), k in 2usize..7, grouped in any::<bool>(),
                                        frames in proptest::collection::vec(1usize..6, 7..14)) {
            let m = synthetic(&frames);
            let folds = make_folds(&m, k, seed, grouped).unwrap();
            prop_assert_eq!(folds.len(), k);
            check_integrity(&m, &folds, grouped);
        }
    }
}

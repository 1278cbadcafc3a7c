//! Split files: `train.csv` and `test.csv` in the feature layout, a
//! `test_roles.txt` with one role per test row (`kc`, `kuc` or `uuc`) and the
//! role manifest.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{load_features, save_features, Category, Label, OpenSetDataset, Sample, TestSample};
use crate::error::{Error, Result};

pub fn write_split(ds: &OpenSetDataset, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let train = dir.join("train.csv");
    save_features(&train, &ds.train)?;
    let test_samples: Vec<Sample> = ds
        .test
        .iter()
        .map(|t| match &t.category {
            Category::Known(c) => Sample::known(t.features.clone(), c),
            _ => Sample::unknown(t.features.clone()),
        })
        .collect();
    let test = dir.join("test.csv");
    save_features(&test, &test_samples)?;
    let roles: String = ds
        .test
        .iter()
        .map(|t| match t.category {
            Category::Known(_) => "kc\n",
            Category::KnownUnknown => "kuc\n",
            Category::UnknownUnknown => "uuc\n",
        })
        .collect();
    let roles_path = dir.join("test_roles.txt");
    fs::write(&roles_path, roles)?;
    let manifest = dir.join("manifest.txt");
    fs::write(&manifest, ds.roles.to_manifest())?;
    Ok(vec![train, test, roles_path, manifest])
}

/// Reads a test file with its roles file. Without roles, every unknown row
/// counts as an unknown unknown.
pub fn load_test_split(test: impl AsRef<Path>, roles: Option<&Path>, header: bool) -> Result<Vec<TestSample>> {
    let samples = load_features(test, header)?;
    let roles: Vec<String> = match roles {
        Some(p) => fs::read_to_string(p)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect(),
        None => samples
            .iter()
            .map(|s| if s.label.is_unknown() { "uuc" } else { "kc" }.to_string())
            .collect(),
    };
    if roles.len() != samples.len() {
        return Err(Error::invalid(format!(
            "{} roles for {} test rows",
            roles.len(),
            samples.len()
        )));
    }
    samples
        .into_iter()
        .zip(roles)
        .map(|(s, role)| {
            let category = match (role.as_str(), s.label) {
                ("kc", Label::Known(c)) => Category::Known(c),
                ("kuc", Label::Unknown) => Category::KnownUnknown,
                ("uuc", Label::Unknown) => Category::UnknownUnknown,
                (r, l) => return Err(Error::invalid(format!("role {r} does not fit label {l}"))),
            };
            Ok(TestSample {
                features: s.features,
                category,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_toy, ToySpec};

    #[test]
    fn split_files_round_trip() {
        let ds = synth_toy(
            &ToySpec {
                per_class: 10,
                ..ToySpec::default()
            },
            2,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_split(&ds, dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        let test = load_test_split(&files[1], Some(&files[2]), false).unwrap();
        assert_eq!(test, ds.test);
        let train = load_features(&files[0], false).unwrap();
        assert_eq!(train, ds.train);
    }
}

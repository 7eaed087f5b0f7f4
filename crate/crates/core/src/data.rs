//! Material tables, capacity models and scenario documents.
//!
//! A set of files is compiled into the crate. A data directory, given
//! explicitly or through `CRYOCHAIN_DATA_DIR`, can add to or shadow them:
//!
//! ```text
//! <dir>/materials/<id>.tbl
//! <dir>/capacity/<name>.cap
//! <dir>/scenarios/<name>.scenario
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{DataError, Error};
use crate::scenario::{Scenario, ScenarioDocument};
use crate::tables::DataTable;
use crate::thermal::{CapacityModel, CoaxMaterial, MaterialLibrary};

pub const DATA_DIR_ENV: &str = "CRYOCHAIN_DATA_DIR";

const MATERIALS: &[(&str, &str)] = &[
    ("NbTi_086", include_str!("../data/materials/NbTi_086.tbl")),
    ("SCuNi_086", include_str!("../data/materials/SCuNi_086.tbl")),
];

const CAPACITY: &[(&str, &str)] = &[
    ("ld400", include_str!("../data/capacity/ld400.cap")),
    (
        "xld1000s_2xpt420",
        include_str!("../data/capacity/xld1000s_2xpt420.cap"),
    ),
];

const SCENARIOS: &[(&str, &str)] = &[
    (
        "all_coax",
        include_str!("../data/scenarios/all_coax.scenario"),
    ),
    ("empty", include_str!("../data/scenarios/empty.scenario")),
    (
        "experiment",
        include_str!("../data/scenarios/experiment.scenario"),
    ),
    (
        "optical_coax_normal",
        include_str!("../data/scenarios/optical_coax_normal.scenario"),
    ),
    (
        "optical_coax_sc",
        include_str!("../data/scenarios/optical_coax_sc.scenario"),
    ),
    (
        "optical_coax_sc_4k",
        include_str!("../data/scenarios/optical_coax_sc_4k.scenario"),
    ),
];

#[derive(Debug, Clone)]
pub struct DataStore {
    dir: Option<PathBuf>,
    materials: MaterialLibrary,
}

impl DataStore {
    /// Only the compiled-in files.
    pub fn bundled() -> Self {
        Self::open(None).expect("bundled material tables are valid")
    }

    pub fn open(dir: Option<&Path>) -> Result<Self, Error> {
        let mut materials = MaterialLibrary::new();
        for (id, text) in MATERIALS {
            let table = DataTable::parse(&format!("bundled:{id}.tbl"), text)?;
            materials.insert(CoaxMaterial::from_table(&table)?);
        }
        if let Some(dir) = dir {
            if !dir.is_dir() {
                return Err(Error::io(
                    format!("data directory {}", dir.display()),
                    std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
                ));
            }
            for (_, path) in list(&dir.join("materials"), "tbl")? {
                let table = DataTable::parse(&path.display().to_string(), &read(&path)?)?;
                materials.insert(CoaxMaterial::from_table(&table)?);
            }
        }
        Ok(DataStore {
            dir: dir.map(Path::to_path_buf),
            materials,
        })
    }

    /// Uses `dir` if given, otherwise `CRYOCHAIN_DATA_DIR` if set.
    pub fn from_env_or(dir: Option<PathBuf>) -> Result<Self, Error> {
        let dir = dir.or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from));
        Self::open(dir.as_deref())
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn materials(&self) -> &MaterialLibrary {
        &self.materials
    }

    fn sources(
        &self,
        bundled: &[(&str, &'static str)],
        sub: &str,
        ext: &str,
    ) -> Result<BTreeMap<String, Source>, Error> {
        let mut out: BTreeMap<String, Source> = bundled
            .iter()
            .map(|(name, text)| (name.to_string(), Source::Bundled(text)))
            .collect();
        if let Some(dir) = &self.dir {
            for (name, path) in list(&dir.join(sub), ext)? {
                out.insert(name, Source::File(path));
            }
        }
        Ok(out)
    }

    fn text(
        &self,
        bundled: &[(&str, &'static str)],
        sub: &str,
        ext: &str,
        name: &str,
    ) -> Result<(String, String), Error> {
        match self.sources(bundled, sub, ext)?.remove(name) {
            Some(Source::Bundled(text)) => Ok((format!("bundled:{name}.{ext}"), text.to_string())),
            Some(Source::File(path)) => Ok((path.display().to_string(), read(&path)?)),
            None => Err(DataError::NotFound(format!("{name}.{ext}")).into()),
        }
    }

    pub fn capacity_names(&self) -> Result<Vec<String>, Error> {
        Ok(self
            .sources(CAPACITY, "capacity", "cap")?
            .into_keys()
            .collect())
    }

    pub fn has_capacity(&self, name: &str) -> bool {
        self.capacity_names()
            .map(|names| names.iter().any(|n| n == name))
            .unwrap_or(false)
    }

    pub fn capacity(&self, name: &str) -> Result<CapacityModel, Error> {
        let (source, text) = self.text(CAPACITY, "capacity", "cap", name)?;
        Ok(CapacityModel::from_table(&DataTable::parse(
            &source, &text,
        )?)?)
    }

    /// Sorted and free of duplicates.
    pub fn scenario_names(&self) -> Result<Vec<String>, Error> {
        Ok(self
            .sources(SCENARIOS, "scenarios", "scenario")?
            .into_keys()
            .collect())
    }

    pub fn scenario_text(&self, name: &str) -> Result<String, Error> {
        Ok(self.text(SCENARIOS, "scenarios", "scenario", name)?.1)
    }

    pub fn scenario_document(&self, name: &str) -> Result<ScenarioDocument, Error> {
        Ok(ScenarioDocument::parse(&self.scenario_text(name)?)?)
    }

    /// A bundled or data-dir scenario by name, or a scenario file by path.
    pub fn load_scenario(&self, name_or_path: &str) -> Result<Scenario, Error> {
        let path = Path::new(name_or_path);
        if path.is_file() {
            return crate::scenario::load_scenario(path, self);
        }
        Ok(self.scenario_document(name_or_path)?.validate(self)?)
    }
}

enum Source {
    Bundled(&'static str),
    File(PathBuf),
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

/// `(stem, path)` of every `*.ext` file in `dir`; a missing directory is empty.
fn list(dir: &Path, ext: &str) -> Result<Vec<(String, PathBuf)>, Error> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let entries =
        std::fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    for entry in entries {
        let path = entry
            .map_err(|e| Error::io(format!("listing {}", dir.display()), e))?
            .path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_files_load() {
        let store = DataStore::bundled();
        assert!(store.materials().contains("SCuNi_086"));
        assert!(store.materials().contains("NbTi_086"));
        for name in store.capacity_names().unwrap() {
            store.capacity(&name).unwrap();
        }
        for name in store.scenario_names().unwrap() {
            store
                .load_scenario(&name)
                .unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn data_dir_adds_and_shadows() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("scenarios")).unwrap();
        let text = DataStore::bundled().scenario_text("empty").unwrap();
        std::fs::write(dir.path().join("scenarios/empty.scenario"), &text).unwrap();
        std::fs::write(dir.path().join("scenarios/mine.scenario"), &text).unwrap();
        let store = DataStore::open(Some(dir.path())).unwrap();
        let names = store.scenario_names().unwrap();
        assert_eq!(names.iter().filter(|n| *n == "empty").count(), 1);
        assert!(names.contains(&"mine".to_string()));
        assert!(matches!(
            store.capacity("nope"),
            Err(Error::Data(DataError::NotFound(_)))
        ));
    }
}

//! On-disk store served by `trajsim serve`:
//!
//! ```text
//! <root>/runs.log          run log (read once at startup)
//! <root>/params/<ref>.json params documents, one per ref, never rewritten
//! ```
//!
//! The run set is immutable for the life of the process. Params are
//! append-only: new refs are allocated under a lock and written with
//! create-new semantics, so an existing ref always resolves to the same
//! bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use trajsim::fitting::ParamsDocument;
use trajsim::run_model::parse_run_log;
use trajsim::{RunSet, SimulatorVariant, TestId};

pub const RUNS_FILE: &str = "runs.log";
pub const PARAMS_DIR: &str = "params";

/// A stored params document and its canonical bytes.
#[derive(Debug)]
pub struct StoredParams {
    pub document: ParamsDocument,
    pub bytes: Vec<u8>,
}

/// One `GET /params` entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamsSummary {
    #[serde(rename = "ref")]
    pub reference: String,
    pub n: usize,
    pub test_ids: Vec<TestId>,
    pub variants: Vec<SimulatorVariant>,
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    runs: RunSet,
    params: RwLock<BTreeMap<String, Arc<StoredParams>>>,
    append: Mutex<()>,
}

fn valid_ref(reference: &str) -> bool {
    !reference.is_empty()
        && reference.len() <= 128
        && reference.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Store> {
        let root = root.into();
        let runs_path = root.join(RUNS_FILE);
        let bytes = fs::read(&runs_path).with_context(|| format!("reading {}", runs_path.display()))?;
        let runs = parse_run_log(&bytes).with_context(|| format!("parsing {}", runs_path.display()))?;
        let params_dir = root.join(PARAMS_DIR);
        fs::create_dir_all(&params_dir).with_context(|| format!("creating {}", params_dir.display()))?;
        let mut params = BTreeMap::new();
        for entry in fs::read_dir(&params_dir)? {
            let path = entry?.path();
            let Some(reference) = path.file_stem().and_then(|s| s.to_str()).map(str::to_owned) else { continue };
            if path.extension().and_then(|e| e.to_str()) != Some("json") || !valid_ref(&reference) {
                continue;
            }
            let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
            let document = ParamsDocument::from_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))?;
            params.insert(reference, Arc::new(StoredParams { document, bytes }));
        }
        Ok(Store { root, runs, params: RwLock::new(params), append: Mutex::new(()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn runs(&self) -> &RunSet {
        &self.runs
    }

    pub fn params(&self, reference: &str) -> Option<Arc<StoredParams>> {
        self.params.read().expect("params lock").get(reference).cloned()
    }

    pub fn list_params(&self) -> Vec<ParamsSummary> {
        self.params
            .read()
            .expect("params lock")
            .iter()
            .map(|(reference, stored)| {
                let sims = &stored.document.simulators;
                let mut variants: Vec<SimulatorVariant> = Vec::new();
                for p in sims {
                    if !variants.contains(&p.variant) {
                        variants.push(p.variant);
                    }
                }
                ParamsSummary {
                    reference: reference.clone(),
                    n: stored.document.n,
                    test_ids: sims.iter().map(|p| p.test_example_id).collect(),
                    variants,
                }
            })
            .collect()
    }

    /// Writes `document` under a fresh ref `fit-NNNN` and returns the ref.
    pub fn append_params(&self, document: ParamsDocument) -> Result<String> {
        let _guard = self.append.lock().expect("append lock");
        let bytes = document.to_bytes();
        let mut index = self.params.read().expect("params lock").len() + 1;
        loop {
            let reference = format!("fit-{index:04}");
            let path = self.root.join(PARAMS_DIR).join(format!("{reference}.json"));
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut file) => {
                    file.write_all(&bytes).with_context(|| format!("writing {}", path.display()))?;
                    file.sync_all()?;
                    let stored = Arc::new(StoredParams { document, bytes });
                    self.params.write().expect("params lock").insert(reference.clone(), stored);
                    return Ok(reference);
                }
                Err(e) if e.kind() == ErrorKind::AlreadyExists => index += 1,
                Err(e) => return Err(e).with_context(|| format!("creating {}", path.display())),
            }
        }
    }

    /// Stores `document` under a caller-chosen ref; fails if the ref exists.
    pub fn insert_params(&self, reference: &str, document: ParamsDocument) -> Result<()> {
        if !valid_ref(reference) {
            bail!("invalid params ref {reference:?}: use letters, digits, '-' and '_'");
        }
        let _guard = self.append.lock().expect("append lock");
        let path = self.root.join(PARAMS_DIR).join(format!("{reference}.json"));
        let bytes = document.to_bytes();
        let mut file = fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .with_context(|| format!("creating {}", path.display()))?;
        file.write_all(&bytes)?;
        file.sync_all()?;
        self.params
            .write()
            .expect("params lock")
            .insert(reference.to_owned(), Arc::new(StoredParams { document, bytes }));
        Ok(())
    }
}

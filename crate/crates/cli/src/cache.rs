//! Content-addressed cache for scattering tables and M-kernels.

use anyhow::{Context, Result};
use distorted::grids::Grids;
use distorted::pseudoproduct::{build_m_kernel, MKernel, MKernelOptions};
use distorted::scattering::{build_scattering_table, Potential, ScatteringTable};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::config::GridSpec;

#[derive(Serialize)]
struct TableKey<'a> {
    kind: &'static str,
    version: &'static str,
    potential: &'a distorted::scattering::PotentialForm,
    grid: &'a GridSpec,
    allow_unsafe: bool,
}

#[derive(Serialize)]
struct KernelKey<'a> {
    table: String,
    options: &'a MKernelOptions,
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct Cache {
    dir: PathBuf,
    pub hits: usize,
    pub misses: usize,
}

impl Cache {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating cache directory {}", dir.display()))?;
        Ok(Cache { dir: dir.to_path_buf(), hits: 0, misses: 0 })
    }

    pub fn table_key(v: &Potential, grid: &GridSpec, allow_unsafe: bool) -> String {
        let key = TableKey { kind: "table", version: env!("CARGO_PKG_VERSION"), potential: &v.form, grid, allow_unsafe };
        hash_bytes(&serde_json::to_vec(&key).expect("key serializes"))
    }

    pub fn table(&mut self, v: &Potential, spec: &GridSpec, grids: &Arc<Grids>, allow_unsafe: bool) -> Result<ScatteringTable> {
        let key = Self::table_key(v, spec, allow_unsafe);
        let path = self.dir.join(format!("table-{key}.bin"));
        if let Ok(bytes) = std::fs::read(&path) {
            if let Ok(t) = ScatteringTable::from_bytes(grids, v, &bytes) {
                self.hits += 1;
                return Ok(t);
            }
            eprintln!("cache: discarding unreadable {}", path.display());
        }
        self.misses += 1;
        eprintln!("cache miss: scattering table {}", &key[..16]);
        let t = build_scattering_table(v, grids, allow_unsafe).context("building scattering table")?;
        std::fs::write(&path, t.to_bytes()).with_context(|| format!("writing {}", path.display()))?;
        Ok(t)
    }

    pub fn kernel(&mut self, table: &ScatteringTable, spec: &GridSpec, allow_unsafe: bool, opts: &MKernelOptions) -> Result<MKernel> {
        let key = KernelKey { table: Self::table_key(&table.potential, spec, allow_unsafe), options: opts };
        let key = hash_bytes(&serde_json::to_vec(&key).expect("key serializes"));
        let path = self.dir.join(format!("mkernel-{key}.bin"));
        if let Ok(bytes) = std::fs::read(&path) {
            if let Ok(k) = MKernel::from_bytes(&table.grids, &bytes) {
                self.hits += 1;
                return Ok(k);
            }
            eprintln!("cache: discarding unreadable {}", path.display());
        }
        self.misses += 1;
        eprintln!("cache miss: M-kernel {}", &key[..16]);
        let k = build_m_kernel(table, opts).context("building M-kernel")?;
        std::fs::write(&path, k.to_bytes()).with_context(|| format!("writing {}", path.display()))?;
        Ok(k)
    }
}

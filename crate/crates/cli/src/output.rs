use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

/// A fresh directory for one command's artifacts. Existing directories are
/// never reused.
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    pub fn create(out: &Path, seed: u64) -> anyhow::Result<Self> {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
        let base = format!("{stamp}-seed{seed}");
        for n in 1.. {
            let name = if n == 1 { base.clone() } else { format!("{base}-{n}") };
            let path = out.join(name);
            match std::fs::create_dir(&path) {
                Ok(()) => return Ok(RunDir { path }),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e).with_context(|| format!("creating {}", path.display())),
            }
        }
        unreachable!()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn target(&self, name: &str) -> anyhow::Result<PathBuf> {
        let p = self.path.join(name);
        if p.exists() {
            anyhow::bail!("{} already exists", p.display());
        }
        Ok(p)
    }

    pub fn write_text(&self, name: &str, text: &str) -> anyhow::Result<PathBuf> {
        let p = self.target(name)?;
        std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<PathBuf> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write_text(name, &text)
    }

    pub fn write_csv<R: Serialize>(&self, name: &str, rows: &[R]) -> anyhow::Result<PathBuf> {
        let p = self.target(name)?;
        let mut w = csv::Writer::from_path(&p).with_context(|| format!("writing {}", p.display()))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(p)
    }
}

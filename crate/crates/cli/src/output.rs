//! Output directory bookkeeping: every file a run creates is recorded so a
//! failed run can remove what it wrote.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use qdgf_core::io::save_field;
use qdgf_core::Field;

#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
}

impl Outputs {
    pub fn create(dir: &Path) -> io::Result<Self> {
        let mut out = Outputs { dir: dir.to_path_buf(), files: Vec::new(), dirs: Vec::new() };
        out.ensure_dir(dir)?;
        Ok(out)
    }

    fn ensure_dir(&mut self, dir: &Path) -> io::Result<()> {
        let mut missing = Vec::new();
        let mut d = Some(dir);
        while let Some(p) = d {
            if p.as_os_str().is_empty() || p.exists() {
                break;
            }
            missing.push(p.to_path_buf());
            d = p.parent();
        }
        fs::create_dir_all(dir)?;
        self.dirs.extend(missing.into_iter().rev());
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Relative names of the files written so far.
    pub fn names(&self) -> Vec<String> {
        self.files
            .iter()
            .map(|p| p.strip_prefix(&self.dir).unwrap_or(p).to_string_lossy().replace('\\', "/"))
            .collect()
    }

    fn target(&mut self, name: &str) -> io::Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            self.ensure_dir(parent)?;
        }
        self.files.push(path.clone());
        Ok(path)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> io::Result<()> {
        let path = self.target(name)?;
        fs::write(path, contents)
    }

    pub fn field(&mut self, name: &str, field: &Field) -> qdgf_core::Result<()> {
        let path = self.target(name)?;
        save_field(path, field)
    }

    /// Removes every file and directory this run created.
    pub fn rollback(self) {
        for f in self.files.iter().rev() {
            let _ = fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rollback_removes_created_tree_only() {
        let root = tempfile::tempdir().unwrap();
        fs::write(root.path().join("keep.txt"), "x").unwrap();
        let mut out = Outputs::create(&root.path().join("a/b")).unwrap();
        out.write("one.csv", "1").unwrap();
        out.write("fields/two.csv", "2").unwrap();
        assert_eq!(out.names(), vec!["one.csv", "fields/two.csv"]);
        out.rollback();
        assert!(!root.path().join("a").exists());
        assert!(root.path().join("keep.txt").exists());
    }
}

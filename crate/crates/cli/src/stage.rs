//! All-or-nothing output sets.
//!
//! Outputs are held in memory until the run succeeds, then written as
//! hidden temporaries and renamed into place only once every temporary is
//! on disk.

use std::fs;
use std::path::{Path, PathBuf};

use spectral_attr::io::{temp_sibling, ResultDocument};
use spectral_attr::Result;

#[derive(Debug, Default)]
pub struct Staged {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Staged {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, relative: impl AsRef<Path>, bytes: impl Into<Vec<u8>>) {
        self.files
            .push((relative.as_ref().to_path_buf(), bytes.into()));
    }

    pub fn add_result(&mut self, relative: &str, doc: &ResultDocument) -> Result<()> {
        let mut text = doc.to_json()?;
        text.push('\n');
        self.add(relative, text);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    pub fn commit(self, out_dir: &Path) -> Result<()> {
        let mut written: Vec<(PathBuf, PathBuf)> = Vec::with_capacity(self.files.len());
        let cleanup = |written: &[(PathBuf, PathBuf)]| {
            for (tmp, _) in written {
                let _ = fs::remove_file(tmp);
            }
        };
        for (rel, bytes) in &self.files {
            let target = out_dir.join(rel);
            let staged = target
                .parent()
                .map_or(Ok(()), fs::create_dir_all)
                .and_then(|_| {
                    let tmp = temp_sibling(&target);
                    fs::write(&tmp, bytes).map(|_| tmp)
                });
            match staged {
                Ok(tmp) => written.push((tmp, target)),
                Err(e) => {
                    cleanup(&written);
                    return Err(e.into());
                }
            }
        }
        for (i, (tmp, target)) in written.iter().enumerate() {
            if let Err(e) = fs::rename(tmp, target) {
                cleanup(&written[i..]);
                return Err(e.into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_writes_nested_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Staged::new();
        s.add("a.txt", "one");
        s.add("sub/b.txt", "two");
        s.commit(dir.path()).unwrap();
        assert_eq!(
            fs::read_to_string(dir.path().join("sub/b.txt")).unwrap(),
            "two"
        );
        let names: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names.len(), 2);
    }

    #[test]
    fn failed_commit_leaves_nothing_behind() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("blocker"), "file, not a dir").unwrap();
        let mut s = Staged::new();
        s.add("ok.txt", "fine");
        s.add("blocker/inner.txt", "cannot");
        assert!(s.commit(dir.path()).is_err());
        let names: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names, vec![std::ffi::OsString::from("blocker")]);
    }
}

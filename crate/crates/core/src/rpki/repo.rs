//! Object repositories.
//!
//! Layout: `<ca-path>/ca.rc`, `<ca-path>/manifest.mft` and
//! `<ca-path>/roas/<name>.roa`, where the CA path is its hierarchical
//! name with `||` turned into `/`.

use std::collections::HashMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use crate::seed::ID_SEPARATOR;

/// URI prefix that maps onto repository paths.
pub const REPO_BASE: &str = "rsync://rpki.example.net/repository/";
pub const NOTIFY_URI: &str = "https://rrdp.example.net/notification.xml";
pub const RC_FILE: &str = "ca.rc";
pub const MANIFEST_FILE: &str = "manifest.mft";
pub const ROA_DIR: &str = "roas";

pub fn ca_path(name: &str) -> String {
    name.replace(ID_SEPARATOR, "/")
}

pub fn rc_path(name: &str) -> String {
    format!("{}/{RC_FILE}", ca_path(name))
}

pub fn manifest_path(name: &str) -> String {
    format!("{}/{MANIFEST_FILE}", ca_path(name))
}

pub fn roa_path(name: &str, roa: &str) -> String {
    format!("{}/{ROA_DIR}/{roa}.roa", ca_path(name))
}

pub fn uri(path: &str) -> String {
    format!("{REPO_BASE}{path}")
}

/// The repository path behind a URI, if it points into the repository.
pub fn path_of(uri: &str) -> Option<&str> {
    uri.strip_prefix(REPO_BASE)
}

pub trait Repository: Send + Sync {
    fn put(&self, path: &str, bytes: &[u8]) -> io::Result<()>;
    fn get(&self, path: &str) -> io::Result<Option<Vec<u8>>>;
}

#[derive(Debug, Default)]
pub struct MemoryRepo {
    objects: RwLock<HashMap<String, Vec<u8>>>,
}

impl MemoryRepo {
    pub fn new() -> Self {
        MemoryRepo::default()
    }

    pub fn paths(&self) -> Vec<String> {
        let mut v: Vec<_> = self.objects.read().expect("lock").keys().cloned().collect();
        v.sort();
        v
    }
}

impl Repository for MemoryRepo {
    fn put(&self, path: &str, bytes: &[u8]) -> io::Result<()> {
        self.objects
            .write()
            .expect("lock")
            .insert(path.to_owned(), bytes.to_vec());
        Ok(())
    }

    fn get(&self, path: &str) -> io::Result<Option<Vec<u8>>> {
        Ok(self.objects.read().expect("lock").get(path).cloned())
    }
}

/// A repository rooted at a directory.
#[derive(Debug, Clone)]
pub struct DirRepo {
    root: PathBuf,
}

impl DirRepo {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirRepo { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn resolve(&self, path: &str) -> io::Result<PathBuf> {
        let rel = Path::new(path);
        let ok = rel
            .components()
            .all(|c| matches!(c, std::path::Component::Normal(_)));
        if !ok || path.is_empty() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("repository path {path:?} escapes the root"),
            ));
        }
        Ok(self.root.join(rel))
    }
}

impl Repository for DirRepo {
    fn put(&self, path: &str, bytes: &[u8]) -> io::Result<()> {
        let full = self.resolve(path)?;
        if let Some(dir) = full.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(full, bytes)
    }

    fn get(&self, path: &str) -> io::Result<Option<Vec<u8>>> {
        match std::fs::read(self.resolve(path)?) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        assert_eq!(rc_path("APNIC||CNNIC||ISP1"), "APNIC/CNNIC/ISP1/ca.rc");
        assert_eq!(roa_path("APNIC", "7"), "APNIC/roas/7.roa");
        assert_eq!(path_of(&uri("APNIC/ca.rc")), Some("APNIC/ca.rc"));
        assert_eq!(path_of("https://elsewhere/x"), None);
    }

    #[test]
    fn dir_repo_round_trip_and_confinement() {
        let tmp = tempfile::tempdir().unwrap();
        let repo = DirRepo::new(tmp.path());
        repo.put("A/B/ca.rc", b"rc").unwrap();
        assert_eq!(repo.get("A/B/ca.rc").unwrap().unwrap(), b"rc");
        assert_eq!(repo.get("A/none").unwrap(), None);
        assert!(repo.put("../x", b"").is_err());
        assert!(repo.get("/etc/passwd").is_err());
    }
}

//! On-disk layout of a CLI data directory.
//!
//! ```text
//! <dir>/center/      key center: sealed.bin, file_pk.bin, registrations.jsonl
//! <dir>/published/   what `center publish` hands to relying parties
//! <dir>/repo/        the RPKI repository (certificates, manifests, ROAs)
//! <dir>/keys/        CA private state, one ca.key.json per CA
//! <dir>/tal.json     trust anchor locator for standard validation
//! ```

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ipkpq_core::center::KeyCenter;
use ipkpq_core::rpki::{repo, CaKeys, CaNode, DirRepo, Manifest, Mode, Repository, ResourceCert};
use serde::{Deserialize, Serialize};

pub const PASSPHRASE_ENV: &str = "IPKPQ_SEAL_PASSPHRASE";

pub struct DataDir {
    root: PathBuf,
}

/// A CA's private key material and issuance counter. Stored unencrypted.
#[derive(Serialize, Deserialize)]
struct StoredCa {
    mode: Mode,
    sk: String,
    pk: String,
    id: Option<String>,
    r: Option<String>,
    next_serial: u64,
}

/// Pins the trust anchor certificate by location and digest.
#[derive(Debug, Serialize, Deserialize)]
pub struct Tal {
    pub uri: String,
    pub digest: String,
}

pub fn passphrase() -> Result<Vec<u8>> {
    std::env::var(PASSPHRASE_ENV)
        .map(String::into_bytes)
        .map_err(|_| anyhow!("set {PASSPHRASE_ENV} to the key center passphrase"))
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DataDir { root: root.into() }
    }

    pub fn center_dir(&self) -> PathBuf {
        self.root.join("center")
    }

    pub fn published_dir(&self) -> PathBuf {
        self.root.join("published")
    }

    pub fn repo_dir(&self) -> PathBuf {
        self.root.join("repo")
    }

    pub fn tal_path(&self) -> PathBuf {
        self.root.join("tal.json")
    }

    pub fn repo(&self) -> DirRepo {
        DirRepo::new(self.repo_dir())
    }

    fn key_path(&self, name: &str) -> PathBuf {
        self.root.join("keys").join(repo::ca_path(name)).join("ca.key.json")
    }

    pub fn open_center(&self) -> Result<KeyCenter> {
        KeyCenter::open(&self.center_dir(), &passphrase()?).context("opening the key center")
    }

    pub fn save_center(&self, kc: &KeyCenter) -> Result<()> {
        kc.save(&self.center_dir(), &passphrase()?, &mut rand::rngs::OsRng)
            .context("saving the key center")
    }

    pub fn ca_exists(&self, name: &str) -> bool {
        self.key_path(name).exists()
    }

    pub fn load_ca(&self, name: &str) -> Result<CaNode> {
        let path = self.key_path(name);
        let text = std::fs::read_to_string(&path).with_context(|| format!("no CA named {name:?}"))?;
        let stored: StoredCa = serde_json::from_str(&text).with_context(|| format!("reading {}", path.display()))?;
        let sk = hex::decode(&stored.sk)?;
        let pk = hex::decode(&stored.pk)?;
        let keys = match stored.mode {
            Mode::Standard => CaKeys::Standard { sk, pk },
            Mode::Ipkpq => {
                let id = stored.id.ok_or_else(|| anyhow!("identity CA without an id"))?;
                let r = hex::decode(stored.r.unwrap_or_default())?
                    .try_into()
                    .map_err(|_| anyhow!("R must be 32 bytes"))?;
                CaKeys::Ipkpq { sk, pk, id, r }
            }
        };
        let store = self.repo();
        let fetch = |p: String| -> Result<Vec<u8>> {
            store.get(&p)?.ok_or_else(|| anyhow!("{p} missing from the repository"))
        };
        let rc = ResourceCert::decode(&fetch(repo::rc_path(name))?)?;
        let manifest = Manifest::decode(&fetch(repo::manifest_path(name))?)?;
        Ok(CaNode::restore(keys, rc, manifest, stored.next_serial)?)
    }

    /// Publish the CA's certificate and manifest and store its keys.
    pub fn save_ca(&self, node: &CaNode) -> Result<()> {
        node.publish(&self.repo())?;
        let (id, r) = match node.keys() {
            CaKeys::Ipkpq { id, r, .. } => (Some(id.clone()), Some(hex::encode(r))),
            CaKeys::Standard { .. } => (None, None),
        };
        let stored = StoredCa {
            mode: node.mode(),
            sk: hex::encode(node.keys().sk()),
            pk: hex::encode(node.keys().pk()),
            id,
            r,
            next_serial: node.next_serial(),
        };
        let path = self.key_path(node.name());
        std::fs::create_dir_all(path.parent().expect("key path has a parent"))?;
        std::fs::write(&path, serde_json::to_string_pretty(&stored)?)?;
        Ok(())
    }

    pub fn write_tal(&self, root: &CaNode) -> Result<()> {
        let tal = Tal {
            uri: repo::uri(&repo::rc_path(root.name())),
            digest: hex::encode(root.rc().digest()),
        };
        std::fs::write(self.tal_path(), serde_json::to_string_pretty(&tal)?)?;
        Ok(())
    }
}

pub fn read_tal(path: &Path) -> Result<(Tal, [u8; 32])> {
    let tal: Tal = serde_json::from_str(&std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?;
    let digest = hex::decode(&tal.digest)?
        .try_into()
        .map_err(|_| anyhow!("TAL digest must be 32 bytes"))?;
    if repo::path_of(&tal.uri).is_none() {
        bail!("TAL uri {} is outside the repository", tal.uri);
    }
    Ok((tal, digest))
}

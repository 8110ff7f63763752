//! A simplified RPKI: resource certificates, ROAs and manifests, a
//! repository to publish them in, and issuance over a CA hierarchy in
//! either key mode.

pub mod inr;
pub mod issue;
pub mod objects;
pub mod repo;
pub mod tlv;
pub mod tree;

pub use inr::{AsRange, InrError, InrSet, IpPrefix};
pub use issue::{CaKeys, CaNode, IssueError, IssueStats, SignerBackend, Software};
pub use objects::{
    digest, Locations, Manifest, Mode, ResourceCert, RoaAuth, RoaObject, SubjectKey, Validity,
};
pub use repo::{DirRepo, MemoryRepo, Repository};
pub use tlv::TlvError;
pub use tree::{build_tree, Naming, Tree, TreeSpec};

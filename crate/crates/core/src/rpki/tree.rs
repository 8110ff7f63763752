//! Generated CA hierarchies for tests, benchmarks and the CLI.
//!
//! Level 0 is the trust anchor holding all resources. Each further level
//! splits its parent's IPv4 prefix among `fanout` children; every
//! non-root CA holds the documentation AS range 64496-64511. The last
//! level is made of ISPs, which issue ROAs for their own prefix and
//! AS 64500.

use chrono::{DateTime, Utc};
use ipkpq_mldsa::Level;
use rand_core::{CryptoRng, RngCore};

use super::inr::{AsRange, InrSet, IpPrefix};
use super::issue::{CaKeys, CaNode, IssueError, IssueStats, Software};
use super::objects::{Mode, RoaObject, Validity};
use super::repo::Repository;
use crate::center::{CenterError, KeyCenter};
use crate::protocol::{run_keygen, ProtocolError};

pub const ROOT_NAME: &str = "RIR";
pub const FLAT_ROOT_NAME: &str = "CA000000";
pub const ORIGIN_AS: u32 = 64500;
const CA_AS_RANGE: (u32, u32) = (64496, 64511);

/// How identity-mode CAs are named at the key center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Naming {
    /// The full hierarchical name, e.g. `RIR||L1N0||L2N0`.
    #[default]
    Hierarchical,
    /// A fixed 8-byte name and identity per CA (`CA000000`, `CA000001`,
    /// ...), so object sizes do not depend on depth. The issuer link is
    /// kept in each certificate.
    Flat,
}

#[derive(Debug, thiserror::Error)]
pub enum TreeError {
    #[error("identity mode needs a key center")]
    MissingCenter,
    #[error("key center level {center} differs from tree level {tree}")]
    CenterLevel { center: u8, tree: u8 },
    #[error("depth must be at least 1 and fanout at least 1")]
    Shape,
    #[error("prefixes run out at depth {0} with this fanout")]
    PrefixSpace(usize),
    #[error(transparent)]
    Issue(#[from] IssueError),
    #[error(transparent)]
    Center(#[from] CenterError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, Copy)]
pub struct TreeSpec {
    pub mode: Mode,
    pub level: Level,
    /// Number of CA levels including the root.
    pub depth: usize,
    pub fanout: usize,
    pub naming: Naming,
    pub validity: Validity,
}

/// A built hierarchy, nodes in breadth-first order.
#[derive(Debug, Clone)]
pub struct Tree {
    pub spec: TreeSpec,
    pub nodes: Vec<CaNode>,
    /// Index of each node's parent.
    pub parents: Vec<Option<usize>>,
    /// Signing and key generation done while building.
    pub stats: IssueStats,
    leaf_start: usize,
}

impl Tree {
    pub fn root(&self) -> &CaNode {
        &self.nodes[0]
    }

    pub fn leaves(&self) -> &[CaNode] {
        &self.nodes[self.leaf_start..]
    }

    pub fn leaf_mut(&mut self, i: usize) -> &mut CaNode {
        let n = self.nodes.len() - self.leaf_start;
        &mut self.nodes[self.leaf_start + i % n]
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.len() - self.leaf_start
    }

    /// The chain from the root down to node `i`.
    pub fn chain(&self, mut i: usize) -> Vec<&CaNode> {
        let mut out = vec![&self.nodes[i]];
        while let Some(p) = self.parents[i] {
            out.push(&self.nodes[p]);
            i = p;
        }
        out.reverse();
        out
    }

    /// The resources the `i`-th leaf issues ROAs for.
    pub fn roa_inr(&self, i: usize) -> InrSet {
        let leaf = &self.leaves()[i % self.leaf_count()];
        InrSet::new(vec![leaf.inr().prefixes()[0]], vec![AsRange::single(ORIGIN_AS)])
    }

    /// Issue a ROA from leaf `i` (round-robin over leaves).
    pub fn issue_roa<R: RngCore + CryptoRng>(
        &mut self,
        i: usize,
        signing_time: DateTime<Utc>,
        rng: &mut R,
    ) -> Result<(RoaObject, IssueStats), IssueError> {
        let inr = self.roa_inr(i);
        self.leaf_mut(i).issue_roa(inr, signing_time, rng)
    }

    pub fn publish(&self, repo: &dyn Repository) -> Result<(), IssueError> {
        self.nodes.iter().try_for_each(|n| n.publish(repo))
    }
}

fn bits_for(fanout: usize) -> u8 {
    (usize::BITS - (fanout - 1).leading_zeros()) as u8
}

fn child_prefix(parent: Option<IpPrefix>, j: usize, fanout: usize) -> Option<IpPrefix> {
    match parent {
        None => IpPrefix::v4(std::net::Ipv4Addr::new(10u8.checked_add(j as u8)?, 0, 0, 0), 8).ok(),
        Some(IpPrefix::V4 { addr, len }) => {
            let len = len.checked_add(bits_for(fanout)).filter(|&l| l <= 32)?;
            let shift = 32 - u32::from(len);
            let addr = addr | (j as u32).checked_shl(shift).unwrap_or(0);
            IpPrefix::v4(addr.into(), len).ok()
        }
        Some(IpPrefix::V6 { .. }) => None,
    }
}

fn make_keys<R: RngCore + CryptoRng>(
    spec: &TreeSpec,
    name: &str,
    center: Option<&mut KeyCenter>,
    rng: &mut R,
) -> Result<CaKeys, TreeError> {
    match spec.mode {
        Mode::Standard => Ok(CaKeys::generate_standard(spec.level, &Software, rng)),
        Mode::Ipkpq => {
            let kc = center.ok_or(TreeError::MissingCenter)?;
            kc.register(name, name, spec.validity.not_before, spec.validity.not_after, rng)?;
            let key = run_keygen(kc, name, rng)?;
            Ok(CaKeys::from_protocol(name, key))
        }
    }
}

/// Build the hierarchy. Identity mode registers every CA at `center` and
/// runs key generation with it.
pub fn build_tree<R: RngCore + CryptoRng>(
    spec: TreeSpec,
    mut center: Option<&mut KeyCenter>,
    rng: &mut R,
) -> Result<Tree, TreeError> {
    if spec.depth == 0 || spec.fanout == 0 {
        return Err(TreeError::Shape);
    }
    if let Some(kc) = center.as_deref() {
        if kc.level() != spec.level {
            return Err(TreeError::CenterLevel {
                center: kc.level().number(),
                tree: spec.level.number(),
            });
        }
    }
    let mut stats = IssueStats::default();
    let root_name = match spec.naming {
        Naming::Hierarchical => ROOT_NAME,
        Naming::Flat => FLAT_ROOT_NAME,
    };
    let keys = make_keys(&spec, root_name, center.as_deref_mut(), rng)?;
    stats.keygens += 1;
    let (root, s) = CaNode::root(root_name, spec.level, keys, InrSet::all(), spec.validity)?;
    stats += s;
    let mut nodes = vec![root];
    let mut parents = vec![None];
    let mut level_start = 0;
    for depth in 1..spec.depth {
        let level_end = nodes.len();
        for p in level_start..level_end {
            let parent_prefix = (p != 0).then(|| nodes[p].inr().prefixes()[0]);
            for j in 0..spec.fanout {
                let label = format!("L{depth}N{}", (p - level_start) * spec.fanout + j);
                let prefix = child_prefix(parent_prefix, j, spec.fanout).ok_or(TreeError::PrefixSpace(depth))?;
                let inr = InrSet::new(vec![prefix], vec![AsRange::new(CA_AS_RANGE.0, CA_AS_RANGE.1).expect("ordered")]);
                let name = match spec.naming {
                    Naming::Hierarchical => format!("{}||{label}", nodes[p].name()),
                    Naming::Flat => format!("CA{:06}", nodes.len()),
                };
                let keys = make_keys(&spec, &name, center.as_deref_mut(), rng)?;
                stats.keygens += 1;
                let (child, s) = nodes[p].issue_rc_named(&name, keys, inr, spec.validity)?;
                stats += s;
                nodes.push(child);
                parents.push(Some(p));
            }
        }
        level_start = level_end;
    }
    Ok(Tree {
        spec,
        nodes,
        parents,
        stats,
        leaf_start: level_start,
    })
}

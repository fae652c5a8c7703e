//! Launching a full deployment (P0, P1, P3, dealer, tail and a coordinator)
//! in one process, over in-memory delivery or localhost sockets, and
//! describing multi-process deployments with a topology file.
//!
//! ```toml
//! [parties]
//! p0 = "127.0.0.1:7100"
//! p1 = "127.0.0.1:7101"
//! p3 = "127.0.0.1:7102"
//! dealer = "127.0.0.1:7103"
//! tail = "127.0.0.1:7104"
//! ```

use std::collections::{BTreeMap, HashMap};
use std::net::{SocketAddr, TcpListener};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;

use crate::channel::DEFAULT_TIMEOUT;
use crate::sharing::DEFAULT_MASK_BOUND;

use super::coordinator::Coordinator;
use super::party::{Party, PartyConfig};
use super::transport::{serve, InProcTransport, Server, TcpTransport};
use super::wire::PartyRole;
use super::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    InProcess,
    /// Every party listens on its own localhost port.
    Tcp,
}

#[derive(Debug, Clone)]
pub struct ClusterConfig {
    pub seed: u64,
    pub mask_bound: f64,
    pub timeout: Duration,
    pub noise_sigma: f64,
}

impl ClusterConfig {
    pub fn new(seed: u64) -> Self {
        ClusterConfig {
            seed,
            mask_bound: DEFAULT_MASK_BOUND,
            timeout: DEFAULT_TIMEOUT,
            noise_sigma: 0.0,
        }
    }

    pub fn party(&self, role: PartyRole) -> PartyConfig {
        PartyConfig {
            noise_sigma: self.noise_sigma,
            mask_bound: self.mask_bound,
            timeout: self.timeout,
            ..PartyConfig::new(role, self.seed)
        }
    }

    /// Socket timeout: long enough to cover a party that is itself waiting
    /// the full party timeout for a peer.
    pub fn socket_timeout(&self) -> Duration {
        self.timeout * 2
    }
}

/// Running parties plus a coordinator connected to them.
pub struct Cluster {
    pub coordinator: Coordinator,
    parties: Vec<Arc<Party>>,
    servers: Vec<Server>,
}

impl Cluster {
    pub fn start(config: &ClusterConfig, backend: Backend) -> Result<Cluster, NetError> {
        match backend {
            Backend::InProcess => Ok(Self::in_process(config)),
            Backend::Tcp => Self::localhost(config),
        }
    }

    pub fn in_process(config: &ClusterConfig) -> Cluster {
        let transport = InProcTransport::new();
        let parties: Vec<Arc<Party>> = PartyRole::SERVING
            .iter()
            .map(|&role| Arc::new(Party::new(config.party(role))))
            .collect();
        for p in &parties {
            transport.register(p);
            p.connect(transport.clone());
        }
        Cluster {
            coordinator: Coordinator::new(transport),
            parties,
            servers: Vec::new(),
        }
    }

    pub fn localhost(config: &ClusterConfig) -> Result<Cluster, NetError> {
        let mut listeners = Vec::new();
        let mut addrs = HashMap::new();
        for role in PartyRole::SERVING {
            let l = TcpListener::bind("127.0.0.1:0")?;
            addrs.insert(role, l.local_addr()?);
            listeners.push((role, l));
        }
        let mut parties = Vec::new();
        let mut servers = Vec::new();
        for (role, listener) in listeners {
            let party = Arc::new(Party::new(config.party(role)));
            party.connect(Arc::new(TcpTransport::with_timeout(addrs.clone(), config.socket_timeout())));
            servers.push(serve(party.clone(), listener)?);
            parties.push(party);
        }
        let transport = Arc::new(TcpTransport::with_timeout(addrs, config.socket_timeout()));
        Ok(Cluster {
            coordinator: Coordinator::new(transport),
            parties,
            servers,
        })
    }

    pub fn party(&self, role: PartyRole) -> Option<&Arc<Party>> {
        self.parties.iter().find(|p| p.role() == role)
    }

    /// Listening addresses (empty for the in-process backend).
    pub fn addresses(&self) -> Vec<SocketAddr> {
        self.servers.iter().map(Server::addr).collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
struct TopologyFile {
    parties: BTreeMap<String, String>,
}

/// Where each party listens.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub parties: BTreeMap<PartyRole, String>,
}

impl Topology {
    pub fn parse(text: &str) -> Result<Topology, NetError> {
        let file: TopologyFile = toml::from_str(text).map_err(|e| NetError::Config(e.to_string()))?;
        let mut parties = BTreeMap::new();
        for (name, addr) in file.parties {
            let role: PartyRole = name.parse().map_err(NetError::Config)?;
            if role == PartyRole::Coordinator {
                return Err(NetError::Config("the coordinator does not listen".into()));
            }
            parties.insert(role, addr);
        }
        for role in PartyRole::SERVING {
            if !parties.contains_key(&role) {
                return Err(NetError::Config(format!("topology has no address for {}", role.name())));
            }
        }
        Ok(Topology { parties })
    }

    pub fn load(path: &Path) -> Result<Topology, NetError> {
        let text = std::fs::read_to_string(path).map_err(|e| NetError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// `role=host:port` pairs separated by commas.
    pub fn parse_peers(list: &str) -> Result<Topology, NetError> {
        let mut parties = BTreeMap::new();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (role, addr) = item
                .split_once('=')
                .ok_or_else(|| NetError::Config(format!("expected role=host:port, got {item:?}")))?;
            parties.insert(role.trim().parse().map_err(NetError::Config)?, addr.trim().to_string());
        }
        Ok(Topology { parties })
    }

    pub fn resolve(&self) -> Result<HashMap<PartyRole, SocketAddr>, NetError> {
        TcpTransport::resolve(self.parties.iter().map(|(r, a)| (*r, a.as_str())))
    }

    /// A coordinator for parties already running at these addresses.
    pub fn coordinator(&self, timeout: Duration) -> Result<Coordinator, NetError> {
        Ok(Coordinator::new(Arc::new(TcpTransport::with_timeout(self.resolve()?, timeout))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topology_file() {
        let t = Topology::parse(
            "[parties]\np0 = \"127.0.0.1:1\"\np1 = \"127.0.0.1:2\"\np3 = \"127.0.0.1:3\"\ndealer = \"127.0.0.1:4\"\ntail = \"127.0.0.1:5\"\n",
        )
        .unwrap();
        assert_eq!(t.parties[&PartyRole::Tail], "127.0.0.1:5");
        assert_eq!(t.resolve().unwrap().len(), 5);
        assert!(Topology::parse("[parties]\np0 = \"127.0.0.1:1\"\n").is_err());
        assert!(Topology::parse("[parties]\nboss = \"x\"\n").is_err());
    }

    #[test]
    fn peer_list() {
        let t = Topology::parse_peers("p1=127.0.0.1:9001, p3=localhost:9002").unwrap();
        assert_eq!(t.parties.len(), 2);
        assert!(Topology::parse_peers("p1").is_err());
    }
}

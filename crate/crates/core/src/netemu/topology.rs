//! Node/link graphs for the four production setups plus custom layouts.
//!
//! Every preset has the same platform core: the robot on a local 5G SA
//! campus link to the platform edge, the aggregation server and jump host on
//! the platform LAN. Shore nodes reach the platform only through the jump
//! host, over a microwave link with a satellite fallback. The on-grid setups
//! (1 and 2) additionally wire the shore cloud to the control room; the
//! decentralised setups (2 and 4) hang turbine nodes off the campus network.

use std::fmt;
use std::str::FromStr;

use petgraph::graph::{NodeIndex, UnGraph};
use petgraph::visit::{Bfs, NodeFiltered};
use serde::{Deserialize, Serialize};

use super::link::LinkProfile;
use super::profiles::{self, DEFAULT_MTU};
use super::NetemuError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Robot,
    PlatformEdge,
    Aggregation,
    JumpHost,
    ShoreCloud,
    ControlRoom,
    Turbine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Zone {
    Platform,
    /// The jump host: the only node bridging shore and platform.
    Gateway,
    Shore,
}

impl NodeRole {
    pub fn zone(self) -> Zone {
        match self {
            NodeRole::Robot | NodeRole::PlatformEdge | NodeRole::Aggregation | NodeRole::Turbine => {
                Zone::Platform
            }
            NodeRole::JumpHost => Zone::Gateway,
            NodeRole::ShoreCloud | NodeRole::ControlRoom => Zone::Shore,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkMedium {
    Campus5g,
    Cellular,
    Wired,
    Microwave,
    Satellite,
}

impl LinkMedium {
    /// Medium implied by a built-in profile name.
    pub fn for_profile(name: &str) -> LinkMedium {
        match profiles::canonical_name(name).as_str() {
            profiles::NR_SA => LinkMedium::Campus5g,
            profiles::MICROWAVE => LinkMedium::Microwave,
            profiles::SATELLITE => LinkMedium::Satellite,
            profiles::WIRED => LinkMedium::Wired,
            _ => LinkMedium::Cellular,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub role: NodeRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub a: NodeId,
    pub b: NodeId,
    pub medium: LinkMedium,
    pub profile: LinkProfile,
}

impl Link {
    pub fn other(&self, n: NodeId) -> Option<NodeId> {
        if n == self.a {
            Some(self.b)
        } else if n == self.b {
            Some(self.a)
        } else {
            None
        }
    }

    pub fn connects(&self, x: NodeId, y: NodeId) -> bool {
        (self.a == x && self.b == y) || (self.a == y && self.b == x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SetupId {
    Setup1,
    Setup2,
    Setup3,
    Setup4,
}

impl SetupId {
    pub fn off_grid(self) -> bool {
        matches!(self, SetupId::Setup3 | SetupId::Setup4)
    }

    pub fn decentralised(self) -> bool {
        matches!(self, SetupId::Setup2 | SetupId::Setup4)
    }
}

impl fmt::Display for SetupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = match self {
            SetupId::Setup1 => 1,
            SetupId::Setup2 => 2,
            SetupId::Setup3 => 3,
            SetupId::Setup4 => 4,
        };
        write!(f, "setup{n}")
    }
}

impl FromStr for SetupId {
    type Err = NetemuError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase().replace(['_', '-', ' '], "");
        match t.trim_start_matches("setup") {
            "1" => Ok(SetupId::Setup1),
            "2" => Ok(SetupId::Setup2),
            "3" => Ok(SetupId::Setup3),
            "4" => Ok(SetupId::Setup4),
            _ => Err(NetemuError::UnknownPreset(s.to_string())),
        }
    }
}

/// Knobs for preset construction.
#[derive(Debug, Clone)]
pub struct PresetOptions {
    /// Turbine nodes in the decentralised setups; at least 2.
    pub turbines: usize,
    pub campus: LinkProfile,
    pub lan: LinkProfile,
    pub microwave: LinkProfile,
    pub satellite: LinkProfile,
}

impl Default for PresetOptions {
    fn default() -> Self {
        let b = |n| profiles::builtin(n).expect("builtin profile");
        Self {
            turbines: 3,
            campus: b(profiles::NR_SA),
            lan: b(profiles::WIRED),
            microwave: b(profiles::MICROWAVE),
            satellite: b(profiles::SATELLITE),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    /// `None` for custom layouts.
    pub preset: Option<SetupId>,
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
}

/// Preset with default options.
pub fn build_topology(preset: SetupId) -> Result<Topology, NetemuError> {
    build_topology_with(preset, &PresetOptions::default())
}

pub fn build_topology_with(preset: SetupId, opts: &PresetOptions) -> Result<Topology, NetemuError> {
    let mut t = Topology::empty(Some(preset));
    let robot = t.add_node("robot", NodeRole::Robot);
    let edge = t.add_node("platform_edge", NodeRole::PlatformEdge);
    let agg = t.add_node("aggregation", NodeRole::Aggregation);
    let jump = t.add_node("jump_host", NodeRole::JumpHost);
    let cloud = t.add_node("shore_cloud", NodeRole::ShoreCloud);
    let control = t.add_node("control_room", NodeRole::ControlRoom);

    t.add_link(robot, edge, LinkMedium::Campus5g, opts.campus.clone());
    t.add_link(edge, agg, LinkMedium::Wired, opts.lan.clone());
    t.add_link(edge, jump, LinkMedium::Wired, opts.lan.clone());
    t.add_link(jump, cloud, LinkMedium::Microwave, opts.microwave.clone());
    t.add_link(jump, cloud, LinkMedium::Satellite, opts.satellite.clone());

    if preset.off_grid() {
        t.add_link(jump, control, LinkMedium::Microwave, opts.microwave.clone());
        t.add_link(jump, control, LinkMedium::Satellite, opts.satellite.clone());
    } else {
        // Grid-connected onshore synthesis side.
        t.add_link(cloud, control, LinkMedium::Wired, opts.lan.clone());
    }

    if preset.decentralised() {
        if opts.turbines < 2 {
            return Err(NetemuError::InvalidTopology(format!(
                "{preset} needs at least 2 turbine nodes, got {}",
                opts.turbines
            )));
        }
        for i in 1..=opts.turbines {
            let tn = t.add_node(&format!("turbine_{i}"), NodeRole::Turbine);
            t.add_link(tn, edge, LinkMedium::Campus5g, opts.campus.clone());
        }
    }

    t.validate()?;
    Ok(t)
}

impl Topology {
    pub fn empty(preset: Option<SetupId>) -> Self {
        Self {
            preset,
            nodes: Vec::new(),
            links: Vec::new(),
        }
    }

    /// Two nodes joined by one link; used by point-to-point experiments.
    pub fn pair(a: (&str, NodeRole), b: (&str, NodeRole), profile: LinkProfile) -> Self {
        let mut t = Self::empty(None);
        let x = t.add_node(a.0, a.1);
        let y = t.add_node(b.0, b.1);
        let medium = LinkMedium::for_profile(&profile.name);
        t.add_link(x, y, medium, profile);
        t
    }

    pub fn add_node(&mut self, name: &str, role: NodeRole) -> NodeId {
        let id = NodeId(self.nodes.len() as u16);
        self.nodes.push(Node {
            id,
            name: name.to_string(),
            role,
        });
        id
    }

    pub fn add_link(&mut self, a: NodeId, b: NodeId, medium: LinkMedium, profile: LinkProfile) -> LinkId {
        let id = LinkId(self.links.len() as u16);
        self.links.push(Link {
            id,
            a,
            b,
            medium,
            profile,
        });
        id
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0 as usize]
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0 as usize]
    }

    pub fn link_mut(&mut self, id: LinkId) -> &mut Link {
        &mut self.links[id.0 as usize]
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.name == name).map(|n| n.id)
    }

    pub fn first(&self, role: NodeRole) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.role == role).map(|n| n.id)
    }

    pub fn with_role(&self, role: NodeRole) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| n.role == role).map(|n| n.id).collect()
    }

    pub fn links_between(&self, x: NodeId, y: NodeId) -> impl Iterator<Item = &Link> {
        self.links.iter().filter(move |l| l.connects(x, y))
    }

    pub fn links_of(&self, n: NodeId) -> impl Iterator<Item = &Link> {
        self.links.iter().filter(move |l| l.a == n || l.b == n)
    }

    /// Fastest direct link between two adjacent nodes, by median frame delay.
    pub fn best_link(&self, x: NodeId, y: NodeId) -> Option<LinkId> {
        self.links_between(x, y)
            .min_by(|p, q| weight(p).total_cmp(&weight(q)).then(p.id.cmp(&q.id)))
            .map(|l| l.id)
    }

    fn graph(&self) -> UnGraph<NodeId, LinkId> {
        let mut g = UnGraph::with_capacity(self.nodes.len(), self.links.len());
        for n in &self.nodes {
            g.add_node(n.id);
        }
        for l in &self.links {
            g.add_edge(NodeIndex::new(l.a.0 as usize), NodeIndex::new(l.b.0 as usize), l.id);
        }
        g
    }

    pub fn is_connected(&self) -> bool {
        self.nodes.is_empty() || petgraph::algo::connected_components(&self.graph()) == 1
    }

    /// Lowest-latency path as the sequence of nodes from `from` to `to`.
    pub fn route(&self, from: NodeId, to: NodeId) -> Option<Vec<NodeId>> {
        let g = self.graph();
        let goal = NodeIndex::new(to.0 as usize);
        let (_, path) = petgraph::algo::astar(
            &g,
            NodeIndex::new(from.0 as usize),
            |n| n == goal,
            |e| weight(self.link(*e.weight())),
            |_| 0.0,
        )?;
        Some(path.into_iter().map(|ix| g[ix]).collect())
    }

    /// Can `to` be reached from `from` without passing through `avoid`?
    pub fn reachable_avoiding(&self, from: NodeId, to: NodeId, avoid: NodeId) -> bool {
        let g = self.graph();
        let avoid_ix = NodeIndex::new(avoid.0 as usize);
        let filtered = NodeFiltered::from_fn(&g, |n| n != avoid_ix);
        let mut bfs = Bfs::new(&filtered, NodeIndex::new(from.0 as usize));
        while let Some(n) = bfs.next(&filtered) {
            if n.index() == to.0 as usize {
                return true;
            }
        }
        false
    }

    pub fn validate(&self) -> Result<(), NetemuError> {
        for l in &self.links {
            if l.a.0 as usize >= self.nodes.len() || l.b.0 as usize >= self.nodes.len() {
                return Err(NetemuError::InvalidTopology(format!("link {} has a dangling endpoint", l.id.0)));
            }
            if l.a == l.b {
                return Err(NetemuError::InvalidTopology(format!("link {} is a self-loop", l.id.0)));
            }
            l.profile.validate()?;
        }
        if !self.is_connected() {
            return Err(NetemuError::InvalidTopology("graph is not connected".into()));
        }
        if self.preset.is_some_and(SetupId::off_grid) {
            for l in &self.links {
                let crosses_shore = [l.a, l.b].iter().any(|n| self.node(*n).role.zone() == Zone::Shore);
                if crosses_shore && !matches!(l.medium, LinkMedium::Microwave | LinkMedium::Satellite) {
                    return Err(NetemuError::InvalidTopology(format!(
                        "off-grid setup has a {:?} link touching the shore",
                        l.medium
                    )));
                }
            }
        }
        if let Some(jump) = self.first(NodeRole::JumpHost) {
            for p in self.nodes.iter().filter(|n| n.role.zone() == Zone::Platform) {
                for s in self.nodes.iter().filter(|n| n.role.zone() == Zone::Shore) {
                    if self.reachable_avoiding(s.id, p.id, jump) {
                        return Err(NetemuError::InvalidTopology(format!(
                            "{} reaches {} without passing the jump host",
                            s.name, p.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn weight(l: &Link) -> f64 {
    l.profile.median_delay_us(DEFAULT_MTU)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shore_links(t: &Topology) -> Vec<&Link> {
        t.links
            .iter()
            .filter(|l| [l.a, l.b].iter().any(|n| t.node(*n).role.zone() == Zone::Shore))
            .collect()
    }

    #[test]
    fn setup3_is_off_grid() {
        let t = build_topology(SetupId::Setup3).unwrap();
        let sl = shore_links(&t);
        assert!(!sl.is_empty());
        assert!(sl
            .iter()
            .all(|l| matches!(l.medium, LinkMedium::Microwave | LinkMedium::Satellite)));
        assert!(t.with_role(NodeRole::Turbine).is_empty());
    }

    #[test]
    fn setup1_has_wired_shore_link() {
        let t = build_topology(SetupId::Setup1).unwrap();
        let cloud = t.find("shore_cloud").unwrap();
        let control = t.find("control_room").unwrap();
        assert!(t
            .links_between(cloud, control)
            .any(|l| l.medium == LinkMedium::Wired));
    }

    #[test]
    fn setup4_turbines() {
        let opts = PresetOptions {
            turbines: 3,
            ..Default::default()
        };
        let t = build_topology_with(SetupId::Setup4, &opts).unwrap();
        let edge = t.find("platform_edge").unwrap();
        let turbines = t.with_role(NodeRole::Turbine);
        assert_eq!(turbines.len(), 3);
        for tn in turbines {
            let links: Vec<_> = t.links_of(tn).collect();
            assert_eq!(links.len(), 1);
            assert_eq!(links[0].medium, LinkMedium::Campus5g);
            assert_eq!(links[0].other(tn), Some(edge));
        }
        let too_few = PresetOptions {
            turbines: 1,
            ..Default::default()
        };
        assert!(build_topology_with(SetupId::Setup2, &too_few).is_err());
    }

    #[test]
    fn every_preset_has_local_5g_and_zoning() {
        for s in [SetupId::Setup1, SetupId::Setup2, SetupId::Setup3, SetupId::Setup4] {
            let t = build_topology(s).unwrap();
            let robot = t.find("robot").unwrap();
            let edge = t.find("platform_edge").unwrap();
            assert!(t.links_between(robot, edge).any(|l| l.medium == LinkMedium::Campus5g));
            let jump = t.find("jump_host").unwrap();
            let control = t.find("control_room").unwrap();
            assert!(!t.reachable_avoiding(control, robot, jump));
        }
    }

    #[test]
    fn teleop_route_prefers_microwave() {
        let t = build_topology(SetupId::Setup3).unwrap();
        let control = t.find("control_room").unwrap();
        let robot = t.find("robot").unwrap();
        let path = t.route(control, robot).unwrap();
        let names: Vec<_> = path.iter().map(|n| t.node(*n).name.as_str()).collect();
        assert_eq!(names, ["control_room", "jump_host", "platform_edge", "robot"]);
        let first = t.best_link(path[0], path[1]).unwrap();
        assert_eq!(t.link(first).medium, LinkMedium::Microwave);
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!("setup9".parse::<SetupId>(), Err(NetemuError::UnknownPreset(_))));
        assert_eq!("Setup3".parse::<SetupId>().unwrap(), SetupId::Setup3);
        assert_eq!("3".parse::<SetupId>().unwrap(), SetupId::Setup3);
    }

    #[test]
    fn bypass_link_is_rejected() {
        let mut t = build_topology(SetupId::Setup1).unwrap();
        let cloud = t.find("shore_cloud").unwrap();
        let agg = t.find("aggregation").unwrap();
        t.add_link(cloud, agg, LinkMedium::Microwave, profiles::builtin("microwave").unwrap());
        assert!(t.validate().is_err());
    }

    #[test]
    fn disconnected_is_rejected() {
        let mut t = Topology::empty(None);
        t.add_node("a", NodeRole::Robot);
        t.add_node("b", NodeRole::PlatformEdge);
        assert!(t.validate().is_err());
    }
}

//! Network topology, channel-set bookkeeping, and derived system parameters.
//!
//! A [`Topology`] is immutable after construction and validated on every
//! construction path, so downstream code (engines, bound calculators) can rely
//! on its invariants without re-checking:
//!
//! * node ids are dense and contiguous from 0, channel sets are non-empty
//!   ordered sets;
//! * the directed link set is symmetric (unless explicitly opted out), every
//!   span is a non-empty subset of the endpoints' intersection;
//! * without bands, every span equals the full intersection ("one-for-all");
//!   with bands, each link spans all common channels of a band or none of them.
//!
//! [`derive_params`] computes the scalar parameters (N, S, Delta, Delta0, rho,
//! B) consumed by the bound calculators in `analysis`.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense non-negative node index, unique and contiguous from 0 in a topology.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Dense non-negative channel index, unique within a scenario's universal set.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelId(pub u32);

impl ChannelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Debug for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ordered set of channels; stored sorted ascending with no duplicates.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct ChannelSet {
    members: Vec<ChannelId>,
}

impl ChannelSet {
    /// Builds a set from arbitrary order; rejects duplicates.
    pub fn new(mut channels: Vec<ChannelId>) -> Result<Self, ModelError> {
        channels.sort_unstable();
        for w in channels.windows(2) {
            if w[0] == w[1] {
                return Err(ModelError::DuplicateChannel { channel: w[0] });
            }
        }
        Ok(Self { members: channels })
    }

    pub fn from_ids<I: IntoIterator<Item = u32>>(ids: I) -> Result<Self, ModelError> {
        Self::new(ids.into_iter().map(ChannelId).collect())
    }

    pub fn empty() -> Self {
        Self { members: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, c: ChannelId) -> bool {
        self.members.binary_search(&c).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = ChannelId> + '_ {
        self.members.iter().copied()
    }

    pub fn as_slice(&self) -> &[ChannelId] {
        &self.members
    }

    /// Member at ordinal position `i` (sets are ordered ascending).
    pub fn nth(&self, i: usize) -> ChannelId {
        self.members[i]
    }

    pub fn intersection(&self, other: &Self) -> Self {
        let members = self
            .members
            .iter()
            .copied()
            .filter(|c| other.contains(*c))
            .collect();
        Self { members }
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut members = self.members.clone();
        members.extend(other.members.iter().copied());
        members.sort_unstable();
        members.dedup();
        Self { members }
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.members.iter().all(|c| other.contains(*c))
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.members.iter().all(|c| !other.contains(*c))
    }
}

impl fmt::Debug for ChannelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.members.iter()).finish()
    }
}

impl TryFrom<Vec<u32>> for ChannelSet {
    type Error = ModelError;
    fn try_from(v: Vec<u32>) -> Result<Self, Self::Error> {
        Self::from_ids(v)
    }
}

impl From<ChannelSet> for Vec<u32> {
    fn from(s: ChannelSet) -> Vec<u32> {
        s.members.into_iter().map(|c| c.0).collect()
    }
}

/// Directed communication link with the channels it operates on.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Link {
    pub from: NodeId,
    pub to: NodeId,
    pub span: ChannelSet,
}

/// Validation errors carry the identity of the first offending node or link.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("duplicate channel {channel} in a channel set")]
    DuplicateChannel { channel: ChannelId },
    #[error("node ids must be contiguous from 0: {detail}")]
    BadNodeIds { detail: String },
    #[error("node {node} has an empty channel set")]
    EmptyChannelSet { node: NodeId },
    #[error("link {index} references unknown node {node}")]
    UnknownNode { index: usize, node: NodeId },
    #[error("link {index} is a self-loop on node {node}")]
    SelfLoop { index: usize, node: NodeId },
    #[error("link {from}->{to} has an empty span")]
    EmptySpan { from: NodeId, to: NodeId },
    #[error("link {from}->{to} span contains channel {channel} outside A({from}) ∩ A({to})")]
    SpanOutsideIntersection {
        from: NodeId,
        to: NodeId,
        channel: ChannelId,
    },
    #[error("links {from}->{to} have overlapping spans (duplicate link)")]
    DuplicateLink { from: NodeId, to: NodeId },
    #[error("link {from}->{to} has no reverse link with an identical span")]
    MissingReverse { from: NodeId, to: NodeId },
    #[error("link {from}->{to} span must equal the full intersection when bands are absent")]
    NotOneForAll { from: NodeId, to: NodeId },
    #[error("band {index} is empty")]
    EmptyBand { index: usize },
    #[error("channel {channel} appears in more than one band")]
    BandsOverlap { channel: ChannelId },
    #[error("channel {channel} of node {node} is not covered by any band")]
    BandsNotCovering { node: NodeId, channel: ChannelId },
    #[error("link {from}->{to} spans only part of its common channels in band {band}")]
    BandPartialSpan { from: NodeId, to: NodeId, band: usize },
    #[error("topology has an asymmetric link set; derived parameters are defined for symmetric graphs only")]
    Asymmetric,
    #[error("topology has no bands to expand")]
    NoBands,
    #[error("invalid topology JSON: {0}")]
    Json(String),
}

/// Loader options; symmetry is enforced unless explicitly opted out.
#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    /// Accept asymmetric link sets. No running-time bound is claimed for such
    /// inputs and `derive_params` refuses them.
    pub allow_asymmetric: bool,
}

/// File-format mirror of a topology: the documented JSON schema.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyJson {
    pub nodes: Vec<NodeJson>,
    pub links: Vec<LinkJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bands: Option<Vec<Vec<u32>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeJson {
    pub id: u32,
    pub channels: Vec<u32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkJson {
    pub from: u32,
    pub to: u32,
    pub span: Vec<u32>,
}

/// Communication graph: nodes with their available channel sets, a directed
/// link set, and an optional band partition of the universal channel set.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(try_from = "TopologyJson", into = "TopologyJson")]
pub struct Topology {
    /// Channel set of node `i` at index `i`.
    nodes: Vec<ChannelSet>,
    links: Vec<Link>,
    bands: Option<Vec<ChannelSet>>,
    /// Whether the symmetry check passed at construction time.
    symmetric: bool,
}

impl Topology {
    pub fn new(
        nodes: Vec<ChannelSet>,
        links: Vec<Link>,
        bands: Option<Vec<ChannelSet>>,
    ) -> Result<Self, ModelError> {
        Self::new_with(nodes, links, bands, LoadOptions::default())
    }

    pub fn new_with(
        nodes: Vec<ChannelSet>,
        links: Vec<Link>,
        bands: Option<Vec<ChannelSet>>,
        opts: LoadOptions,
    ) -> Result<Self, ModelError> {
        let missing_reverse = validate(&nodes, &links, bands.as_deref())?;
        if let Some((from, to)) = missing_reverse {
            if !opts.allow_asymmetric {
                return Err(ModelError::MissingReverse { from, to });
            }
        }
        let symmetric = missing_reverse.is_none();
        Ok(Self {
            nodes,
            links,
            bands,
            symmetric,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self, ModelError> {
        Self::from_json_str_with(s, LoadOptions::default())
    }

    pub fn from_json_str_with(s: &str, opts: LoadOptions) -> Result<Self, ModelError> {
        let file: TopologyJson =
            serde_json::from_str(s).map_err(|e| ModelError::Json(e.to_string()))?;
        Self::from_file_with(file, opts)
    }

    pub fn from_file_with(file: TopologyJson, opts: LoadOptions) -> Result<Self, ModelError> {
        let n = file.nodes.len();
        let mut nodes: Vec<Option<ChannelSet>> = vec![None; n];
        for entry in &file.nodes {
            let idx = entry.id as usize;
            if idx >= n {
                return Err(ModelError::BadNodeIds {
                    detail: format!("id {} out of range for {} nodes", entry.id, n),
                });
            }
            if nodes[idx].is_some() {
                return Err(ModelError::BadNodeIds {
                    detail: format!("id {} appears twice", entry.id),
                });
            }
            nodes[idx] = Some(ChannelSet::from_ids(entry.channels.iter().copied())?);
        }
        let nodes: Vec<ChannelSet> = nodes.into_iter().map(|s| s.unwrap()).collect();
        let links = file
            .links
            .iter()
            .map(|l| {
                Ok(Link {
                    from: NodeId(l.from),
                    to: NodeId(l.to),
                    span: ChannelSet::from_ids(l.span.iter().copied())?,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        let bands = file
            .bands
            .map(|bs| {
                bs.into_iter()
                    .map(ChannelSet::from_ids)
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()?;
        Self::new_with(nodes, links, bands, opts)
    }

    pub fn to_json_string(&self) -> String {
        let file: TopologyJson = self.clone().into();
        serde_json::to_string_pretty(&file).expect("topology serializes")
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn channels(&self, u: NodeId) -> &ChannelSet {
        &self.nodes[u.index()]
    }

    pub fn channel_sets(&self) -> &[ChannelSet] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn bands(&self) -> Option<&[ChannelSet]> {
        self.bands.as_deref()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Union of all nodes' channel sets.
    pub fn universal_channels(&self) -> ChannelSet {
        let mut u = ChannelSet::empty();
        for s in &self.nodes {
            u = u.union(s);
        }
        u
    }

    /// All channel sets identical (so every |A(u)| = S) and spans full.
    /// Jamming analysis applies only to such topologies.
    pub fn is_homogeneous(&self) -> bool {
        if self.bands.is_some() {
            return false;
        }
        // One-for-all construction already guarantees full spans.
        self.nodes.windows(2).all(|w| w[0] == w[1])
    }

    /// Replaces each link by one link per band its span intersects, with the
    /// span restricted to that band. The band partition is kept.
    pub fn expand_bands(&self) -> Result<Self, ModelError> {
        let bands = self.bands.as_ref().ok_or(ModelError::NoBands)?;
        let mut links = Vec::new();
        for l in &self.links {
            for band in bands {
                let restricted = l.span.intersection(band);
                if !restricted.is_empty() {
                    links.push(Link {
                        from: l.from,
                        to: l.to,
                        span: restricted,
                    });
                }
            }
        }
        Self::new_with(
            self.nodes.clone(),
            links,
            self.bands.clone(),
            LoadOptions {
                allow_asymmetric: !self.symmetric,
            },
        )
    }
}

impl TryFrom<TopologyJson> for Topology {
    type Error = ModelError;
    fn try_from(file: TopologyJson) -> Result<Self, Self::Error> {
        Self::from_file_with(file, LoadOptions::default())
    }
}

impl From<Topology> for TopologyJson {
    fn from(t: Topology) -> TopologyJson {
        TopologyJson {
            nodes: t
                .nodes
                .iter()
                .enumerate()
                .map(|(i, s)| NodeJson {
                    id: i as u32,
                    channels: s.clone().into(),
                })
                .collect(),
            links: t
                .links
                .iter()
                .map(|l| LinkJson {
                    from: l.from.0,
                    to: l.to.0,
                    span: l.span.clone().into(),
                })
                .collect(),
            bands: t
                .bands
                .map(|bs| bs.into_iter().map(|b| b.into()).collect()),
        }
    }
}

/// Runs all structural checks; returns the first link missing its exact
/// reverse, or None when the link set is symmetric.
fn validate(
    nodes: &[ChannelSet],
    links: &[Link],
    bands: Option<&[ChannelSet]>,
) -> Result<Option<(NodeId, NodeId)>, ModelError> {
    if nodes.is_empty() {
        return Err(ModelError::BadNodeIds {
            detail: "topology has no nodes".to_string(),
        });
    }
    for (i, s) in nodes.iter().enumerate() {
        if s.is_empty() {
            return Err(ModelError::EmptyChannelSet {
                node: NodeId(i as u32),
            });
        }
    }

    if let Some(bands) = bands {
        for (i, b) in bands.iter().enumerate() {
            if b.is_empty() {
                return Err(ModelError::EmptyBand { index: i });
            }
        }
        let mut seen: HashMap<ChannelId, usize> = HashMap::new();
        for b in bands {
            for c in b.iter() {
                if seen.insert(c, 1).is_some() {
                    return Err(ModelError::BandsOverlap { channel: c });
                }
            }
        }
        for (i, s) in nodes.iter().enumerate() {
            for c in s.iter() {
                if !seen.contains_key(&c) {
                    return Err(ModelError::BandsNotCovering {
                        node: NodeId(i as u32),
                        channel: c,
                    });
                }
            }
        }
    }

    for (index, l) in links.iter().enumerate() {
        for node in [l.from, l.to] {
            if node.index() >= nodes.len() {
                return Err(ModelError::UnknownNode { index, node });
            }
        }
        if l.from == l.to {
            return Err(ModelError::SelfLoop {
                index,
                node: l.from,
            });
        }
        if l.span.is_empty() {
            return Err(ModelError::EmptySpan {
                from: l.from,
                to: l.to,
            });
        }
        let inter = nodes[l.from.index()].intersection(&nodes[l.to.index()]);
        for c in l.span.iter() {
            if !inter.contains(c) {
                return Err(ModelError::SpanOutsideIntersection {
                    from: l.from,
                    to: l.to,
                    channel: c,
                });
            }
        }
        match bands {
            None => {
                if l.span != inter {
                    return Err(ModelError::NotOneForAll {
                        from: l.from,
                        to: l.to,
                    });
                }
            }
            Some(bands) => {
                for (bi, band) in bands.iter().enumerate() {
                    let span_in_band = l.span.intersection(band);
                    let common_in_band = inter.intersection(band);
                    if !span_in_band.is_empty() && span_in_band != common_in_band {
                        return Err(ModelError::BandPartialSpan {
                            from: l.from,
                            to: l.to,
                            band: bi,
                        });
                    }
                }
            }
        }
    }

    // Per directed pair, spans must be pairwise disjoint (several links per
    // pair arise only from band expansion).
    let mut by_pair: HashMap<(NodeId, NodeId), Vec<&ChannelSet>> = HashMap::new();
    for l in links {
        let spans = by_pair.entry((l.from, l.to)).or_default();
        if spans.iter().any(|s| !s.is_disjoint(&l.span)) {
            return Err(ModelError::DuplicateLink {
                from: l.from,
                to: l.to,
            });
        }
        spans.push(&l.span);
    }

    'outer: for l in links {
        for r in links {
            if r.from == l.to && r.to == l.from && r.span == l.span {
                continue 'outer;
            }
        }
        return Ok(Some((l.from, l.to)));
    }

    Ok(None)
}

/// Scalar parameters derived from a topology, consumed by bound calculators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    /// Node count N.
    pub n: usize,
    /// Largest available channel set size S.
    pub s: usize,
    /// Max over (u, c ∈ A(u)) of the neighbor count d_u(c).
    pub delta: usize,
    /// Smallest power of two ≥ max(Delta, 1).
    pub delta0: usize,
    /// Minimum span-ratio |span(u,v)| / |A(v)| over links, v the receiver;
    /// 1.0 with `no_links` set when the topology has no links.
    pub rho: f64,
    /// Max bands per original link (1 when bands are absent).
    pub b: usize,
    pub no_links: bool,
}

/// Computes every derived parameter by exhaustive scan.
///
/// Refuses asymmetric topologies: no bound is claimed for them.
pub fn derive_params(t: &Topology) -> Result<DerivedParams, ModelError> {
    if !t.is_symmetric() {
        return Err(ModelError::Asymmetric);
    }
    let n = t.num_nodes();
    let s = t.channel_sets().iter().map(|a| a.len()).max().unwrap_or(0);

    let mut delta = 0usize;
    for u in t.node_ids() {
        for c in t.channels(u).iter() {
            let mut count = 0usize;
            for l in t.links() {
                if l.from == u && l.span.contains(c) {
                    count += 1;
                }
            }
            delta = delta.max(count);
        }
    }
    let delta0 = delta.max(1).next_power_of_two();

    // Track the minimum ratio as an exact fraction; compare by cross
    // multiplication to avoid floating-point ordering artifacts.
    let mut min_ratio: Option<(usize, usize)> = None;
    for l in t.links() {
        let num = l.span.len();
        let den = t.channels(l.to).len();
        let better = match min_ratio {
            None => true,
            Some((bn, bd)) => num * bd < bn * den,
        };
        if better {
            min_ratio = Some((num, den));
        }
    }
    let no_links = min_ratio.is_none();
    let rho = match min_ratio {
        Some((num, den)) => num as f64 / den as f64,
        None => 1.0,
    };

    let b = match t.bands() {
        None => 1,
        Some(bands) => {
            let mut max_b = 1usize;
            // Unexpanded form: count bands intersecting each span.
            for l in t.links() {
                let cnt = bands
                    .iter()
                    .filter(|band| !l.span.is_disjoint(band))
                    .count();
                max_b = max_b.max(cnt);
            }
            // Expanded form: count band-links per directed pair.
            let mut per_pair: HashMap<(NodeId, NodeId), usize> = HashMap::new();
            for l in t.links() {
                *per_pair.entry((l.from, l.to)).or_insert(0) += 1;
            }
            max_b.max(per_pair.values().copied().max().unwrap_or(1))
        }
    };

    Ok(DerivedParams {
        n,
        s,
        delta,
        delta0,
        rho,
        b,
        no_links,
    })
}

/// How node channel sets are drawn by the random topology generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelLaw {
    /// Every node gets the full universal set 0..universal.
    Full,
    /// Set size uniform in [min, max] (clamped to [1, universal]), then a
    /// uniform subset of that size.
    UniformSize { min: usize, max: usize },
}

/// Generates a symmetric one-for-all topology, deterministic in `seed`.
///
/// Each node's channel set follows `law`; each undirected pair with a
/// non-empty channel intersection is admitted with probability `density` and
/// given the full intersection as span in both directions.
pub fn generate_random_topology(
    n: usize,
    universal: usize,
    density: f64,
    law: &ChannelLaw,
    seed: u64,
) -> Topology {
    assert!(n >= 1 && universal >= 1, "n and universal must be positive");
    assert!((0.0..=1.0).contains(&density), "density must be in [0,1]");
    let mut rng = crate::rng::stream(seed, &["topology"]);

    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let set = match law {
            ChannelLaw::Full => ChannelSet::from_ids(0..universal as u32).unwrap(),
            ChannelLaw::UniformSize { min, max } => {
                let lo = (*min).clamp(1, universal);
                let hi = (*max).clamp(lo, universal);
                let size = lo + crate::rng::uniform_index(&mut rng, hi - lo + 1);
                let mut pool: Vec<u32> = (0..universal as u32).collect();
                // Partial Fisher-Yates: the first `size` entries are a uniform
                // subset once shuffled into place.
                for i in 0..size {
                    let j = i + crate::rng::uniform_index(&mut rng, pool.len() - i);
                    pool.swap(i, j);
                }
                pool.truncate(size);
                ChannelSet::from_ids(pool).unwrap()
            }
        };
        nodes.push(set);
    }

    let mut links = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let inter = nodes[u].intersection(&nodes[v]);
            if inter.is_empty() {
                continue;
            }
            if crate::rng::uniform_f64(&mut rng) < density {
                links.push(Link {
                    from: NodeId(u as u32),
                    to: NodeId(v as u32),
                    span: inter.clone(),
                });
                links.push(Link {
                    from: NodeId(v as u32),
                    to: NodeId(u as u32),
                    span: inter,
                });
            }
        }
    }

    Topology::new(nodes, links, None).expect("generator output is always valid")
}

/// Precomputed directed adjacency: for each (node, channel), the neighbors
/// reachable on that channel, plus plain graph-neighbor sets.
pub struct Adjacency {
    /// per node: sorted (channel, neighbors-with-channel-in-span) pairs.
    span_neighbors: Vec<Vec<(ChannelId, Vec<NodeId>)>>,
    /// per node: all graph neighbors (either direction), sorted.
    graph_neighbors: Vec<Vec<NodeId>>,
}

impl Adjacency {
    pub fn build(t: &Topology) -> Self {
        let n = t.num_nodes();
        let mut span_neighbors: Vec<Vec<(ChannelId, Vec<NodeId>)>> = vec![Vec::new(); n];
        let mut graph_neighbors: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for u in t.node_ids() {
            let mut per_channel: Vec<(ChannelId, Vec<NodeId>)> = t
                .channels(u)
                .iter()
                .map(|c| (c, Vec::new()))
                .collect();
            for l in t.links() {
                if l.from != u {
                    continue;
                }
                graph_neighbors[u.index()].push(l.to);
                for c in l.span.iter() {
                    let slot = per_channel
                        .binary_search_by_key(&c, |(ch, _)| *ch)
                        .expect("span channel is in A(u)");
                    per_channel[slot].1.push(l.to);
                }
            }
            for (_, v) in per_channel.iter_mut() {
                v.sort_unstable();
                v.dedup();
            }
            graph_neighbors[u.index()].sort_unstable();
            graph_neighbors[u.index()].dedup();
            span_neighbors[u.index()] = per_channel;
        }
        Self {
            span_neighbors,
            graph_neighbors,
        }
    }

    /// Neighbors v of u with c in the span of some link u->v.
    pub fn span_neighbors_on(&self, u: NodeId, c: ChannelId) -> &[NodeId] {
        match self.span_neighbors[u.index()].binary_search_by_key(&c, |(ch, _)| *ch) {
            Ok(i) => &self.span_neighbors[u.index()][i].1,
            Err(_) => &[],
        }
    }

    /// All graph neighbors of u regardless of channel.
    pub fn graph_neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.graph_neighbors[u.index()]
    }

    /// Number of span neighbors of u on channel c (the degree d_u(c)).
    pub fn degree(&self, u: NodeId, c: ChannelId) -> usize {
        self.span_neighbors_on(u, c).len()
    }
}

/// Maps (sender, receiver, channel) to the link index whose span holds the
/// channel. Spans of one directed pair are pairwise disjoint, so the index
/// is unique.
pub struct LinkIndex {
    by_pair: HashMap<(u32, u32), Vec<usize>>,
    spans: Vec<ChannelSet>,
}

impl LinkIndex {
    pub fn build(t: &Topology) -> Self {
        let mut by_pair: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
        let mut spans = Vec::with_capacity(t.links().len());
        for (i, l) in t.links().iter().enumerate() {
            by_pair.entry((l.from.0, l.to.0)).or_default().push(i);
            spans.push(l.span.clone());
        }
        Self { by_pair, spans }
    }

    pub fn index_of(&self, from: NodeId, to: NodeId, channel: ChannelId) -> Option<usize> {
        self.by_pair
            .get(&(from.0, to.0))?
            .iter()
            .copied()
            .find(|&i| self.spans[i].contains(channel))
    }
}

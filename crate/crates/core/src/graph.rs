//! Single-relation co-occurrence and the multi-relation fused user graph.
//!
//! Two users are related in dimension `r` on day `d` when both bought the
//! same product on `d` and their transactions carry the same non-empty value
//! for `r`. Frequencies count distinct days.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::txn::{RelationKind, Transaction};

const R: usize = RelationKind::COUNT;

/// Sorted, de-duplicated user ids. Indices are positions in the list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UserIndex {
    ids: Vec<String>,
}

impl UserIndex {
    pub fn from_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<&str> = ids.into_iter().collect();
        UserIndex {
            ids: set.into_iter().map(String::from).collect(),
        }
    }

    pub fn position(&self, id: &str) -> Option<u32> {
        self.ids
            .binary_search_by(|p| p.as_str().cmp(id))
            .ok()
            .map(|i| i as u32)
    }

    pub fn id(&self, index: u32) -> &str {
        &self.ids[index as usize]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// `(a, relation, b, day)` with `a < b` as indices into a [`UserIndex`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationEvent {
    pub a: u32,
    pub b: u32,
    pub relation: RelationKind,
    pub day: i64,
}

#[derive(Debug, Clone, Default)]
pub struct RelationEvents {
    pub users: UserIndex,
    /// Sorted by `(a, b, relation, day)`, no duplicates.
    pub events: Vec<RelationEvent>,
}

impl RelationEvents {
    /// The events as `(user_i, relation, user_j, day)` id tuples.
    pub fn as_tuples(&self) -> impl Iterator<Item = (&str, RelationKind, &str, i64)> + '_ {
        self.events
            .iter()
            .map(|e| (self.users.id(e.a), e.relation, self.users.id(e.b), e.day))
    }
}

/// All relation events in a transaction window.
pub fn relate(txns: &[Transaction]) -> RelationEvents {
    let users = UserIndex::from_ids(txns.iter().map(|t| t.user_id.as_str()));
    let mut keyed: Vec<(i64, &str, usize, &str, u32)> = Vec::new();
    for t in txns {
        let u = users.position(&t.user_id).expect("indexed above");
        for r in RelationKind::ALL {
            if let Some(v) = t.relation(r) {
                keyed.push((t.day, t.product_id.as_str(), r.index(), v, u));
            }
        }
    }
    keyed.sort_unstable();
    keyed.dedup();

    let mut events = Vec::new();
    let mut start = 0;
    while start < keyed.len() {
        let (day, product, r, value, _) = keyed[start];
        let mut end = start + 1;
        while end < keyed.len() {
            let k = &keyed[end];
            if k.0 != day || k.1 != product || k.2 != r || k.3 != value {
                break;
            }
            end += 1;
        }
        // users within a run are sorted and unique
        let relation = RelationKind::ALL[r];
        for x in start..end {
            for y in x + 1..end {
                events.push(RelationEvent {
                    a: keyed[x].4,
                    b: keyed[y].4,
                    relation,
                    day,
                });
            }
        }
        start = end;
    }
    events.sort_unstable();
    events.dedup();
    RelationEvents { users, events }
}

/// Day-level co-occurrence counts for one window.
#[derive(Debug, Clone, Default)]
pub struct FreqTables {
    /// `solo[r][u]`: distinct days on which user `u` has a value in `r`.
    pub solo: [Vec<u32>; R],
    /// `pair[r][(a, b)]`, `a < b`: distinct days on which `a` and `b`
    /// co-occur in `r`.
    pub pair: [BTreeMap<(u32, u32), u32>; R],
}

impl FreqTables {
    pub fn from_window(txns: &[Transaction], events: &RelationEvents) -> Self {
        let n = events.users.len();
        let mut seen: BTreeSet<(usize, u32, i64)> = BTreeSet::new();
        for t in txns {
            let u = events.users.position(&t.user_id).expect("same window");
            for r in RelationKind::ALL {
                if t.relation(r).is_some() {
                    seen.insert((r.index(), u, t.day));
                }
            }
        }
        let mut solo: [Vec<u32>; R] = Default::default();
        for s in solo.iter_mut() {
            *s = alloc::vec![0; n];
        }
        for (r, u, _) in seen {
            solo[r][u as usize] += 1;
        }
        let mut pair: [BTreeMap<(u32, u32), u32>; R] = Default::default();
        // events are unique per (a, b, r, day)
        for e in &events.events {
            *pair[e.relation.index()].entry((e.a, e.b)).or_insert(0) += 1;
        }
        FreqTables { solo, pair }
    }

    pub fn pair_freq(&self, r: RelationKind, a: u32, b: u32) -> u32 {
        let key = if a < b { (a, b) } else { (b, a) };
        self.pair[r.index()].get(&key).copied().unwrap_or(0)
    }

    pub fn solo_freq(&self, r: RelationKind, u: u32) -> u32 {
        self.solo[r.index()][u as usize]
    }
}

/// Co-occurrence weight: `pair / max(solo_i, solo_j) * sigmoid(lambda * max)`.
pub fn cooccurrence_weight(pair_freq: u32, solo_i: u32, solo_j: u32, lambda: f64) -> Result<f64> {
    let max = solo_i.max(solo_j);
    if pair_freq > max {
        return Err(Error::FrequencyInvariant { pair: pair_freq, max });
    }
    if pair_freq == 0 {
        return Ok(0.0);
    }
    let max = f64::from(max);
    Ok(f64::from(pair_freq) / max * sigmoid(lambda * max))
}

/// Set of relation dimensions present on an edge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationMask(pub u8);

impl RelationMask {
    pub const EMPTY: RelationMask = RelationMask(0);

    pub fn of(kinds: &[RelationKind]) -> Self {
        RelationMask(kinds.iter().fold(0, |m, r| m | r.bit()))
    }

    #[inline]
    pub fn contains(self, r: RelationKind) -> bool {
        self.0 & r.bit() != 0
    }

    pub fn insert(&mut self, r: RelationKind) {
        self.0 |= r.bit();
    }

    pub fn count(self) -> u32 {
        self.0.count_ones()
    }

    pub fn iter(self) -> impl Iterator<Item = RelationKind> {
        RelationKind::ALL.into_iter().filter(move |r| self.contains(*r))
    }
}

impl fmt::LowerHex for RelationMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::LowerHex::fmt(&self.0, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub a: u32,
    pub b: u32,
    pub relations: RelationMask,
    pub weights: [f64; R],
}

impl Edge {
    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn other(&self, node: u32) -> u32 {
        if node == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// Undirected user graph; one edge per related pair, carrying the relation
/// bitmap and per-relation co-occurrence weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FusedGraph {
    users: UserIndex,
    edges: Vec<Edge>,
    /// `adjacency[node]` holds `(neighbor, edge index)`, sorted by neighbor.
    adjacency: Vec<Vec<(u32, u32)>>,
}

impl FusedGraph {
    /// Assembles a graph from explicit edges given as user-id pairs. Nodes
    /// are exactly the endpoints; edge order and orientation are normalized.
    pub fn from_edges<'a>(
        edges: impl IntoIterator<Item = (&'a str, &'a str, RelationMask, [f64; R])>,
    ) -> Result<Self> {
        let raw: Vec<_> = edges.into_iter().collect();
        let users = UserIndex::from_ids(raw.iter().flat_map(|e| [e.0, e.1]));
        let mut out = Vec::with_capacity(raw.len());
        for (i, j, relations, weights) in raw {
            if i == j {
                return Err(Error::Shape(alloc::format!("self loop on {i}")));
            }
            for r in RelationKind::ALL {
                let w = weights[r.index()];
                if !(0.0..1.0).contains(&w) {
                    return Err(Error::Shape(alloc::format!("weight {w} out of [0,1) on ({i},{j})")));
                }
                if w > 0.0 && !relations.contains(r) {
                    return Err(Error::Shape(alloc::format!(
                        "positive weight without relation bit {r} on ({i},{j})"
                    )));
                }
            }
            let (a, b) = (users.position(i).unwrap(), users.position(j).unwrap());
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            out.push(Edge { a, b, relations, weights });
        }
        out.sort_by_key(|e| (e.a, e.b));
        if out.windows(2).any(|w| w[0].a == w[1].a && w[0].b == w[1].b) {
            return Err(Error::Shape("duplicate edge".into()));
        }
        Ok(Self::assemble(users, out))
    }

    fn assemble(users: UserIndex, edges: Vec<Edge>) -> Self {
        let mut adjacency = alloc::vec![Vec::new(); users.len()];
        for (k, e) in edges.iter().enumerate() {
            adjacency[e.a as usize].push((e.b, k as u32));
            adjacency[e.b as usize].push((e.a, k as u32));
        }
        for list in adjacency.iter_mut() {
            list.sort_unstable();
        }
        FusedGraph { users, edges, adjacency }
    }

    pub fn users(&self) -> &UserIndex {
        &self.users
    }

    pub fn node_count(&self) -> usize {
        self.users.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, node: u32) -> &[(u32, u32)] {
        &self.adjacency[node as usize]
    }

    pub fn node(&self, user: &str) -> Option<u32> {
        self.users.position(user)
    }

    pub fn edge_between(&self, a: u32, b: u32) -> Option<&Edge> {
        let list = &self.adjacency[a as usize];
        list.binary_search_by_key(&b, |p| p.0)
            .ok()
            .map(|k| &self.edges[list[k].1 as usize])
    }

    pub fn edge_by_ids(&self, i: &str, j: &str) -> Option<&Edge> {
        self.edge_between(self.node(i)?, self.node(j)?)
    }

    /// Sum of `w_r` over all edges at `node`.
    pub fn strength(&self, node: u32, r: RelationKind) -> f64 {
        self.adjacency[node as usize]
            .iter()
            .map(|&(_, e)| self.edges[e as usize].weights[r.index()])
            .sum()
    }
}

/// Builds the fused graph of a window.
pub fn build_fused_graph(txns: &[Transaction], lambda: f64) -> FusedGraph {
    let events = relate(txns);
    let freq = FreqTables::from_window(txns, &events);
    let mut pairs: BTreeMap<(u32, u32), RelationMask> = BTreeMap::new();
    for e in &events.events {
        pairs.entry((e.a, e.b)).or_default().insert(e.relation);
    }
    let nodes = UserIndex::from_ids(
        pairs
            .keys()
            .flat_map(|&(a, b)| [events.users.id(a), events.users.id(b)]),
    );
    let mut edges = Vec::with_capacity(pairs.len());
    for (&(a, b), &relations) in &pairs {
        let mut weights = [0.0; R];
        for r in relations.iter() {
            weights[r.index()] = cooccurrence_weight(
                freq.pair_freq(r, a, b),
                freq.solo_freq(r, a),
                freq.solo_freq(r, b),
                lambda,
            )
            .expect("pair frequency never exceeds solo frequency");
        }
        // node indices are monotone in the event indices
        let na = nodes.position(events.users.id(a)).unwrap();
        let nb = nodes.position(events.users.id(b)).unwrap();
        edges.push(Edge { a: na, b: nb, relations, weights });
    }
    edges.sort_by_key(|e| (e.a, e.b));
    FusedGraph::assemble(nodes, edges)
}

/// Temporal cohesion of a group in relation `r`: intra-group weight mass over
/// the group's total weight mass, both over ordered pairs. `None` when the
/// group has no weight in `r`. Members outside the graph contribute nothing.
pub fn tcs<'a>(graph: &FusedGraph, group: impl IntoIterator<Item = &'a str>, r: RelationKind) -> Option<f64> {
    let members: BTreeSet<u32> = group.into_iter().filter_map(|u| graph.node(u)).collect();
    let mut inner = 0.0;
    let mut total = 0.0;
    for &i in &members {
        for &(j, e) in graph.neighbors(i) {
            let w = graph.edges[e as usize].weights[r.index()];
            total += w;
            if members.contains(&j) {
                inner += w;
            }
        }
    }
    if total > 0.0 {
        Some(inner / total)
    } else {
        None
    }
}

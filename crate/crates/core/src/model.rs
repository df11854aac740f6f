//! Topology, link and path representations.
//!
//! Links are directional: the transmitter sits at `a`, the receiver at `b`.
//! A link that should be usable in both directions must be declared twice.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("max_hops must be at least 1")]
    ZeroHops,
    #[error("invalid path: {0}")]
    InvalidPath(String),
}

/// Failure to read a topology file. Line numbers are 1-based.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeSpec {
    pub id: String,
}

impl NodeSpec {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into() }
    }
}

/// Physical and buffer parameters of one directed hop.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    /// Transmitter end.
    pub a: String,
    /// Receiver end.
    pub b: String,
    pub loss_db: f64,
    pub length_km: f64,
    pub tx_qubits: u32,
    pub rx_qubits: u32,
}

impl LinkSpec {
    pub fn new(a: impl Into<String>, b: impl Into<String>, loss_db: f64, length_km: f64) -> Self {
        Self {
            a: a.into(),
            b: b.into(),
            loss_db,
            length_km,
            tx_qubits: 25,
            rx_qubits: 25,
        }
    }

    pub fn with_qubits(mut self, tx: u32, rx: u32) -> Self {
        self.tx_qubits = tx;
        self.rx_qubits = rx;
        self
    }

    /// Identifier used in calibration tables, `a-b`.
    pub fn key(&self) -> String {
        format!("{}-{}", self.a, self.b)
    }

    fn violations(&self, index: usize, out: &mut Vec<Violation>) {
        if !(self.loss_db.is_finite() && self.loss_db >= 0.0) {
            out.push(Violation::InvalidLoss {
                link: index,
                loss_db: self.loss_db,
            });
        }
        if !(self.length_km.is_finite() && self.length_km > 0.0) {
            out.push(Violation::InvalidLength {
                link: index,
                length_km: self.length_km,
            });
        }
        if self.a == self.b {
            out.push(Violation::SelfLoop {
                link: index,
                node: self.a.clone(),
            });
        }
        if self.tx_qubits == 0 || self.rx_qubits == 0 {
            out.push(Violation::EmptyBuffer { link: index });
        }
    }
}

/// One broken invariant found by [`validate_topology`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateNode(String),
    UnknownNode { link: usize, node: String },
    DuplicateLink { a: String, b: String },
    SelfLoop { link: usize, node: String },
    InvalidLoss { link: usize, loss_db: f64 },
    InvalidLength { link: usize, length_km: f64 },
    EmptyBuffer { link: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateNode(id) => write!(f, "duplicate node `{id}`"),
            Violation::UnknownNode { link, node } => {
                write!(f, "link #{link} references unknown node `{node}`")
            }
            Violation::DuplicateLink { a, b } => write!(f, "duplicate link `{a}` -> `{b}`"),
            Violation::SelfLoop { link, node } => {
                write!(f, "link #{link} connects `{node}` to itself")
            }
            Violation::InvalidLoss { link, loss_db } => {
                write!(f, "link #{link} has invalid loss {loss_db} dB")
            }
            Violation::InvalidLength { link, length_km } => {
                write!(f, "link #{link} has invalid length {length_km} km")
            }
            Violation::EmptyBuffer { link } => write!(f, "link #{link} has an empty qubit buffer"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
}

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: impl Into<String>) -> &mut Self {
        self.nodes.push(NodeSpec::new(id));
        self
    }

    pub fn add_link(&mut self, link: LinkSpec) -> &mut Self {
        self.links.push(link);
        self
    }

    pub fn has_node(&self, id: &str) -> bool {
        self.nodes.iter().any(|n| n.id == id)
    }

    pub fn link(&self, a: &str, b: &str) -> Option<&LinkSpec> {
        self.links.iter().find(|l| l.a == a && l.b == b)
    }

    /// Outgoing links keyed by transmitter, each list sorted by receiver id.
    pub fn adjacency(&self) -> BTreeMap<&str, Vec<&LinkSpec>> {
        let mut adj: BTreeMap<&str, Vec<&LinkSpec>> = BTreeMap::new();
        for l in &self.links {
            adj.entry(l.a.as_str()).or_default().push(l);
        }
        for v in adj.values_mut() {
            v.sort_by(|x, y| x.b.cmp(&y.b));
        }
        adj
    }

    /// Parses the line-oriented topology format:
    ///
    /// ```text
    /// node A
    /// link A B loss_db=3.4 length_km=20 tx_qubits=25 rx_qubits=25
    /// ```
    pub fn parse(text: &str) -> Result<Topology, ParseError> {
        let mut topo = Topology::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = strip_comment(raw);
            let mut words = line.split_whitespace();
            let Some(head) = words.next() else { continue };
            match head {
                "node" => {
                    let id = words
                        .next()
                        .ok_or_else(|| ParseError::new(line_no, "`node` needs an id"))?;
                    if let Some(extra) = words.next() {
                        return Err(ParseError::new(
                            line_no,
                            format!("unexpected token `{extra}` after node id"),
                        ));
                    }
                    topo.add_node(id);
                }
                "link" => {
                    let a = words
                        .next()
                        .ok_or_else(|| ParseError::new(line_no, "`link` needs two node ids"))?;
                    let b = words
                        .next()
                        .ok_or_else(|| ParseError::new(line_no, "`link` needs two node ids"))?;
                    let params = LinkParams::parse(words, line_no)?;
                    topo.add_link(params.into_link(a, b));
                }
                other => {
                    return Err(ParseError::new(
                        line_no,
                        format!("unknown directive `{other}`"),
                    ))
                }
            }
        }
        Ok(topo)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&format!("node {}\n", n.id));
        }
        for l in &self.links {
            out.push_str(&format!(
                "link {} {} {}\n",
                l.a,
                l.b,
                LinkParams::from_link(l).render()
            ));
        }
        out
    }
}

pub(crate) fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// The `key=value` tail shared by topology links and path-set classes.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LinkParams {
    pub loss_db: f64,
    pub length_km: f64,
    pub tx_qubits: u32,
    pub rx_qubits: u32,
}

impl LinkParams {
    pub(crate) fn parse<'a>(
        words: impl Iterator<Item = &'a str>,
        line: usize,
    ) -> Result<Self, ParseError> {
        let mut loss = None;
        let mut length = None;
        let mut tx = None;
        let mut rx = None;
        for w in words {
            let (key, value) = w
                .split_once('=')
                .ok_or_else(|| ParseError::new(line, format!("expected key=value, got `{w}`")))?;
            let float = || {
                value
                    .parse::<f64>()
                    .map_err(|_| ParseError::new(line, format!("bad number `{value}` for {key}")))
            };
            let int = || {
                value
                    .parse::<u32>()
                    .map_err(|_| ParseError::new(line, format!("bad count `{value}` for {key}")))
            };
            let slot_filled = match key {
                "loss_db" => loss.replace(float()?).is_some(),
                "length_km" => length.replace(float()?).is_some(),
                "tx_qubits" => tx.replace(int()?).is_some(),
                "rx_qubits" => rx.replace(int()?).is_some(),
                _ => return Err(ParseError::new(line, format!("unknown key `{key}`"))),
            };
            if slot_filled {
                return Err(ParseError::new(line, format!("key `{key}` given twice")));
            }
        }
        let missing = |k: &str| ParseError::new(line, format!("missing key `{k}`"));
        Ok(Self {
            loss_db: loss.ok_or_else(|| missing("loss_db"))?,
            length_km: length.ok_or_else(|| missing("length_km"))?,
            tx_qubits: tx.ok_or_else(|| missing("tx_qubits"))?,
            rx_qubits: rx.ok_or_else(|| missing("rx_qubits"))?,
        })
    }

    pub(crate) fn from_link(l: &LinkSpec) -> Self {
        Self {
            loss_db: l.loss_db,
            length_km: l.length_km,
            tx_qubits: l.tx_qubits,
            rx_qubits: l.rx_qubits,
        }
    }

    pub(crate) fn into_link(self, a: &str, b: &str) -> LinkSpec {
        LinkSpec {
            a: a.to_string(),
            b: b.to_string(),
            loss_db: self.loss_db,
            length_km: self.length_km,
            tx_qubits: self.tx_qubits,
            rx_qubits: self.rx_qubits,
        }
    }

    pub(crate) fn render(&self) -> String {
        format!(
            "loss_db={} length_km={} tx_qubits={} rx_qubits={}",
            self.loss_db, self.length_km, self.tx_qubits, self.rx_qubits
        )
    }
}

/// Checks every topology invariant; an empty result means the topology is valid.
pub fn validate_topology(t: &Topology) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for n in &t.nodes {
        if !seen.insert(n.id.as_str()) {
            out.push(Violation::DuplicateNode(n.id.clone()));
        }
    }
    let mut pairs = BTreeSet::new();
    for (i, l) in t.links.iter().enumerate() {
        for end in [&l.a, &l.b] {
            if !seen.contains(end.as_str()) {
                out.push(Violation::UnknownNode {
                    link: i,
                    node: end.clone(),
                });
            }
        }
        if !pairs.insert((l.a.as_str(), l.b.as_str())) {
            out.push(Violation::DuplicateLink {
                a: l.a.clone(),
                b: l.b.clone(),
            });
        }
        l.violations(i, &mut out);
    }
    out
}

/// An ordered, simple chain of directed links.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    links: Vec<LinkSpec>,
}

impl Path {
    pub fn new(links: Vec<LinkSpec>) -> Result<Self, ModelError> {
        if links.is_empty() {
            return Err(ModelError::InvalidPath("a path needs at least one link".into()));
        }
        for w in links.windows(2) {
            if w[0].b != w[1].a {
                return Err(ModelError::InvalidPath(format!(
                    "link {} does not continue from {}",
                    w[1].key(),
                    w[0].key()
                )));
            }
        }
        let mut seen = BTreeSet::new();
        seen.insert(links[0].a.as_str());
        for l in &links {
            if !seen.insert(l.b.as_str()) {
                return Err(ModelError::InvalidPath(format!("node `{}` repeats", l.b)));
            }
        }
        Ok(Self { links })
    }

    /// Follows the named node sequence through the topology's links.
    pub fn through(t: &Topology, nodes: &[&str]) -> Result<Self, ModelError> {
        if nodes.len() < 2 {
            return Err(ModelError::InvalidPath("need at least two nodes".into()));
        }
        for n in nodes {
            if !t.has_node(n) {
                return Err(ModelError::UnknownNode(n.to_string()));
            }
        }
        let links = nodes
            .windows(2)
            .map(|w| {
                t.link(w[0], w[1])
                    .cloned()
                    .ok_or_else(|| ModelError::InvalidPath(format!("no link {}-{}", w[0], w[1])))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(links)
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn hops(&self) -> usize {
        self.links.len()
    }

    pub fn source(&self) -> &str {
        &self.links[0].a
    }

    pub fn destination(&self) -> &str {
        &self.links[self.links.len() - 1].b
    }

    pub fn nodes(&self) -> Vec<&str> {
        let mut v = vec![self.links[0].a.as_str()];
        v.extend(self.links.iter().map(|l| l.b.as_str()));
        v
    }

    pub fn length_km(&self) -> f64 {
        self.links.iter().map(|l| l.length_km).sum()
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.nodes().join("-"))
    }
}

/// All simple paths from `src` to `dst` using at most `max_hops` links,
/// ordered lexicographically by their node-id sequence.
pub fn enumerate_paths(
    t: &Topology,
    src: &str,
    dst: &str,
    max_hops: usize,
) -> Result<Vec<Path>, ModelError> {
    for n in [src, dst] {
        if !t.has_node(n) {
            return Err(ModelError::UnknownNode(n.to_string()));
        }
    }
    if max_hops == 0 {
        return Err(ModelError::ZeroHops);
    }
    let adj = t.adjacency();
    let mut found = Vec::new();
    let mut stack: Vec<&LinkSpec> = Vec::new();
    let mut visited = BTreeSet::from([src]);
    walk(&adj, src, dst, max_hops, &mut stack, &mut visited, &mut found);
    // DFS over sorted adjacency already yields lexicographic order.
    Ok(found)
}

fn walk<'a>(
    adj: &BTreeMap<&'a str, Vec<&'a LinkSpec>>,
    at: &'a str,
    dst: &str,
    budget: usize,
    stack: &mut Vec<&'a LinkSpec>,
    visited: &mut BTreeSet<&'a str>,
    found: &mut Vec<Path>,
) {
    if at == dst && !stack.is_empty() {
        found.push(Path {
            links: stack.iter().map(|l| (*l).clone()).collect(),
        });
        return;
    }
    if budget == 0 {
        return;
    }
    let Some(out) = adj.get(at) else { return };
    for l in out {
        if visited.contains(l.b.as_str()) {
            continue;
        }
        visited.insert(l.b.as_str());
        stack.push(l);
        walk(adj, l.b.as_str(), dst, budget - 1, stack, visited, found);
        stack.pop();
        visited.remove(l.b.as_str());
    }
}

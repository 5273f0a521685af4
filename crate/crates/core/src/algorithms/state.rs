use std::fmt::Write as _;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::rng::{self, Purpose, Stream};

/// Per-node variables. Baselines leave the fields they do not use at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub x: DVector<f64>,
    pub m: DVector<f64>,
    pub v: DVector<f64>,
    pub s: DVector<f64>,
    /// Stochastic gradient drawn at the current `x`.
    pub g: DVector<f64>,
}

impl NodeState {
    pub(crate) fn has_non_finite(&self) -> bool {
        [&self.x, &self.m, &self.v, &self.s, &self.g].iter().any(|v| v.iter().any(|c| !c.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    /// Iteration counter, starting at 1 after initialization.
    pub t: usize,
    pub nodes: Vec<NodeState>,
}

impl NetworkState {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn dim(&self) -> usize {
        self.nodes.first().map_or(0, |s| s.x.len())
    }

    pub fn xs(&self) -> Vec<DVector<f64>> {
        self.nodes.iter().map(|s| s.x.clone()).collect()
    }

    pub fn collect(&self, f: impl Fn(&NodeState) -> &DVector<f64>) -> Vec<DVector<f64>> {
        self.nodes.iter().map(|s| f(s).clone()).collect()
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        match self.nodes.iter().position(NodeState::has_non_finite) {
            Some(node) => Err(Error::NonFiniteState { t: self.t, node }),
            None => Ok(()),
        }
    }

    /// CSV dump with columns `t,node,field,j,value`, one row per coordinate of
    /// `x, m, v, s, g`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,node,field,j,value\n");
        for (i, node) in self.nodes.iter().enumerate() {
            for (name, vec) in [("x", &node.x), ("m", &node.m), ("v", &node.v), ("s", &node.s), ("g", &node.g)] {
                for (j, value) in vec.iter().enumerate() {
                    let _ = writeln!(out, "{},{i},{name},{j},{value:.16e}", self.t);
                }
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut t = None;
        let mut rows: Vec<(usize, String, usize, f64)> = Vec::new();
        for (k, line) in text.lines().enumerate().skip(1) {
            let err = |message: &str| Error::Parse { location: format!("line {}", k + 1), message: message.into() };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(err("expected 5 fields"));
            }
            let tt: usize = f[0].parse().map_err(|_| err("bad iteration"))?;
            if *t.get_or_insert(tt) != tt {
                return Err(err("mixed iterations"));
            }
            let node = f[1].parse().map_err(|_| err("bad node"))?;
            let j = f[3].parse().map_err(|_| err("bad coordinate"))?;
            let value = f[4].parse().map_err(|_| err("bad value"))?;
            rows.push((node, f[2].to_string(), j, value));
        }
        let n = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let d = rows.iter().map(|r| r.2 + 1).max().unwrap_or(0);
        let blank = NodeState {
            x: DVector::zeros(d),
            m: DVector::zeros(d),
            v: DVector::zeros(d),
            s: DVector::zeros(d),
            g: DVector::zeros(d),
        };
        let mut nodes = vec![blank; n];
        for (node, field, j, value) in rows {
            let target = match field.as_str() {
                "x" => &mut nodes[node].x,
                "m" => &mut nodes[node].m,
                "v" => &mut nodes[node].v,
                "s" => &mut nodes[node].s,
                "g" => &mut nodes[node].g,
                other => return Err(Error::Parse { location: "field".into(), message: format!("unknown field `{other}`") }),
            };
            target[j] = value;
        }
        Ok(NetworkState { t: t.unwrap_or(1), nodes })
    }
}

/// How gradient-noise streams are assigned to nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StreamPolicy {
    /// Node `i` draws from `stream(seed, i, Gradient)`.
    #[default]
    PerNode,
    /// Every node draws from an identical copy of `stream(seed, 0, Gradient)`;
    /// identical nodes then see identical noise.
    Shared,
}

/// One gradient-noise stream per node.
#[derive(Debug, Clone)]
pub struct NoiseStreams {
    streams: Vec<Stream>,
}

impl NoiseStreams {
    pub fn new(seed: u64, n: usize, policy: StreamPolicy) -> Self {
        let streams = (0..n)
            .map(|i| {
                let id = match policy {
                    StreamPolicy::PerNode => i as u64,
                    StreamPolicy::Shared => 0,
                };
                rng::stream(seed, id, Purpose::Gradient)
            })
            .collect();
        NoiseStreams { streams }
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    pub fn node(&mut self, i: usize) -> &mut Stream {
        &mut self.streams[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let node = |k: f64| NodeState {
            x: DVector::from_vec(vec![k, 1.0 / 3.0]),
            m: DVector::from_vec(vec![-k, 0.1]),
            v: DVector::from_vec(vec![1.0, 2.0]),
            s: DVector::from_vec(vec![1e-300, -7.5]),
            g: DVector::from_vec(vec![0.0, k * k]),
        };
        let st = NetworkState { t: 7, nodes: vec![node(1.5), node(-2.25), node(std::f64::consts::PI)] };
        assert_eq!(NetworkState::from_csv(&st.to_csv()).unwrap(), st);
    }

    #[test]
    fn non_finite_is_reported_with_node() {
        let mut st = NetworkState {
            t: 4,
            nodes: vec![
                NodeState {
                    x: DVector::zeros(1),
                    m: DVector::zeros(1),
                    v: DVector::zeros(1),
                    s: DVector::zeros(1),
                    g: DVector::zeros(1),
                };
                3
            ],
        };
        assert!(st.check_finite().is_ok());
        st.nodes[2].s[0] = f64::NAN;
        assert!(matches!(st.check_finite(), Err(Error::NonFiniteState { t: 4, node: 2 })));
    }
}

use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{labels, linspace, streams, substream, SimulatedWorld, Truth};
use crate::error::{NsumError, Result};
use crate::survey::ArdSurvey;

/// A stochastic block model whose groups double as the ARD subpopulations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmConfig {
    pub nodes: usize,
    pub group_sizes: Vec<usize>,
    /// Edge probability inside each group.
    pub within: Vec<f64>,
    /// Edge probability between any two distinct groups.
    pub between: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    1
}

impl SbmConfig {
    /// Equal-size groups with `within` evenly spaced over `[lo, hi]`.
    pub fn equal_groups(groups: usize, group_size: usize, within: (f64, f64), between: f64) -> Self {
        SbmConfig {
            nodes: groups * group_size,
            group_sizes: vec![group_size; groups],
            within: linspace(within.0, within.1, groups),
            between,
            seed: 1,
        }
    }

    /// 20 groups of 1000, within 0.25..0.5, between 0.05.
    pub fn full() -> Self {
        SbmConfig::equal_groups(20, 1000, (0.25, 0.5), 0.05)
    }

    /// 10 groups of 500 with the same connectivities; fast enough for CI.
    pub fn ci() -> Self {
        SbmConfig::equal_groups(10, 500, (0.25, 0.5), 0.05)
    }

    pub fn groups(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NsumError::Config(m));
        if self.groups() < 2 {
            return bad(format!("need at least 2 groups, got {}", self.groups()));
        }
        if self.group_sizes.contains(&0) {
            return bad("group sizes must be positive".into());
        }
        let total: usize = self.group_sizes.iter().sum();
        if total != self.nodes {
            return bad(format!("group sizes sum to {total}, expected {} nodes", self.nodes));
        }
        if self.within.len() != self.groups() {
            return bad(format!("{} within-group probabilities for {} groups", self.within.len(), self.groups()));
        }
        let valid = |p: f64| (0.0..=1.0).contains(&p);
        if let Some(p) = self.within.iter().find(|&&p| !valid(p)) {
            return bad(format!("within-group probability {p} is outside [0, 1]"));
        }
        if !valid(self.between) {
            return bad(format!("between-group probability {} is outside [0, 1]", self.between));
        }
        Ok(())
    }

    fn offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.groups() + 1);
        offsets.push(0);
        for s in &self.group_sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        offsets
    }

    fn blocks(&self) -> Vec<(usize, usize)> {
        let g = self.groups();
        (0..g).flat_map(|a| (a..g).map(move |b| (a, b))).collect()
    }

    /// Calls `visit(i, j)` for every edge of block `(g, h)`, `g <= h`, with
    /// local indices into group `g` and group `h` respectively (`i < j` when
    /// `g == h`).
    fn sample_block(&self, g: usize, h: usize, mut visit: impl FnMut(usize, usize)) {
        let (sg, sh) = (self.group_sizes[g], self.group_sizes[h]);
        let q = if g == h { self.within[g] } else { self.between };
        let pairs = if g == h { sg * (sg - 1) / 2 } else { sg * sh };
        let locate = |t: usize| if g == h { unrank_pair(t) } else { (t / sh, t % sh) };
        if q <= 0.0 || pairs == 0 {
            return;
        }
        if q >= 1.0 {
            (0..pairs).for_each(|t| {
                let (i, j) = locate(t);
                visit(i, j)
            });
            return;
        }
        let mut rng = substream(self.seed, streams::SBM_BLOCKS + (g * self.groups() + h) as u64);
        let skip = Geometric::new(q).expect("probability checked");
        let mut t: u64 = 0;
        loop {
            t += skip.sample(&mut rng);
            if t >= pairs as u64 {
                break;
            }
            let (i, j) = locate(t as usize);
            visit(i, j);
            t += 1;
        }
    }
}

/// Maps `t` to the pair `(i, j)`, `i < j`, in the order `(0,1), (0,2), (1,2), (0,3), ...`.
fn unrank_pair(t: usize) -> (usize, usize) {
    let mut j = ((1.0 + (1.0 + 8.0 * t as f64).sqrt()) / 2.0) as usize;
    while j * (j - 1) / 2 > t {
        j -= 1;
    }
    while (j + 1) * j / 2 <= t {
        j += 1;
    }
    (t - j * (j - 1) / 2, j)
}

/// Every edge of the sampled graph as `(u, v)` with `u < v`, in block order.
/// Intended for small graphs; [`simulate_sbm`] never materialises the edge list.
pub fn sbm_edges(config: &SbmConfig) -> Result<Vec<(usize, usize)>> {
    config.validate()?;
    let offsets = config.offsets();
    let mut edges = Vec::new();
    for (g, h) in config.blocks() {
        config.sample_block(g, h, |i, j| edges.push((offsets[g] + i, offsets[h] + j)));
    }
    Ok(edges)
}

/// Block id with its per-node row and column tallies.
type BlockCounts = ((usize, usize), Vec<u32>, Vec<u32>);

/// Samples the network and reports, for every node, how many neighbours it has
/// in each group. Every node is a respondent and the true degrees are the row
/// sums of the adjacency matrix.
pub fn simulate_sbm(config: &SbmConfig) -> Result<SimulatedWorld> {
    config.validate()?;
    let offsets = config.offsets();
    let n = config.nodes;

    let counts: Vec<BlockCounts> = config
        .blocks()
        .into_par_iter()
        .map(|(g, h)| {
            let mut row = vec![0u32; config.group_sizes[g]];
            let mut col = vec![0u32; config.group_sizes[h]];
            config.sample_block(g, h, |i, j| {
                if g == h {
                    row[i] += 1;
                    row[j] += 1;
                } else {
                    row[i] += 1;
                    col[j] += 1;
                }
            });
            ((g, h), row, col)
        })
        .collect();

    let mut columns = vec![vec![0u32; n]; config.groups()];
    for ((g, h), row, col) in counts {
        columns[h][offsets[g]..offsets[g + 1]].copy_from_slice(&row);
        if g != h {
            columns[g][offsets[h]..offsets[h + 1]].copy_from_slice(&col);
        }
    }

    let degrees: Vec<f64> = (0..n).map(|i| columns.iter().map(|c| c[i] as f64).sum()).collect();
    let membership: Vec<usize> =
        (0..config.groups()).flat_map(|g| std::iter::repeat_n(g, config.group_sizes[g])).collect();
    let survey = ArdSurvey::new(
        labels("g", config.groups()),
        columns,
        config.group_sizes.iter().map(|&s| Some(s as u64)).collect(),
        n as u64,
    )?;
    Ok(SimulatedWorld {
        survey,
        truth: Truth::Sbm { degrees, membership, within: config.within.clone(), between: config.between },
    })
}

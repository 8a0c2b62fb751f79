use std::sync::Arc;

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::graph::{mean_neighbor_operator, normalize_adjacency, receptive_field_of_set, SparseGraph};
use crate::linalg::CsrMatrix;

/// Left operand of one propagation hop.
#[derive(Clone, Debug)]
pub enum Operator {
    /// Constant sparse operator; no gradient reaches its values.
    Sparse(Arc<CsrMatrix>),
    /// Dense operator living on the tape, e.g. a normalized generated A′.
    Dense(Var),
    Identity,
}

/// Feature matrix fed to the first layer.
#[derive(Clone, Debug)]
pub enum Input {
    Sparse(Arc<CsrMatrix>),
    Dense(Var),
}

/// The normalized and mean-neighbour operators of a graph.
#[derive(Clone, Debug)]
pub struct GraphOperators {
    pub num_nodes: usize,
    pub normalized: Arc<CsrMatrix>,
    pub mean: Arc<CsrMatrix>,
    graph: SparseGraph,
}

impl GraphOperators {
    pub fn new(g: &SparseGraph) -> Result<Self> {
        Ok(Self {
            num_nodes: g.num_nodes(),
            normalized: Arc::new(normalize_adjacency(g, true)?.as_csr().clone()),
            mean: Arc::new(mean_neighbor_operator(g)),
            graph: g.clone(),
        })
    }

    pub fn graph(&self) -> &SparseGraph {
        &self.graph
    }
}

/// One propagation step, mapping the rows of the previous level to the
/// rows of this level.
#[derive(Clone, Debug)]
pub struct Hop {
    pub prop: Operator,
    /// Mean-neighbour operator for SAGE.
    pub mean: Option<Operator>,
    /// Position of each output row among the input rows, when they differ.
    pub self_rows: Option<Arc<[usize]>>,
    /// Position of each output row among the plan's input rows.
    pub outer_rows: Option<Arc<[usize]>>,
}

/// Propagation hops, outermost first, plus the node sets the plan reads and
/// produces. `None` means every node of the graph.
#[derive(Clone, Debug)]
pub struct Plan {
    pub hops: Vec<Hop>,
    pub input_rows: Option<Vec<usize>>,
    pub output_rows: Option<Vec<usize>>,
}

impl Plan {
    /// Whole-graph propagation.
    pub fn full(ops: &GraphOperators, hops: usize) -> Self {
        let hop = Hop {
            prop: Operator::Sparse(Arc::clone(&ops.normalized)),
            mean: Some(Operator::Sparse(Arc::clone(&ops.mean))),
            self_rows: None,
            outer_rows: None,
        };
        Self {
            hops: vec![hop; hops],
            input_rows: None,
            output_rows: None,
        }
    }

    /// Dense propagation with the same operator at every hop.
    pub fn dense(normalized: Var, mean: Option<Var>, hops: usize) -> Self {
        let hop = Hop {
            prop: Operator::Dense(normalized),
            mean: mean.map(Operator::Dense),
            self_rows: None,
            outer_rows: None,
        };
        Self {
            hops: vec![hop; hops],
            input_rows: None,
            output_rows: None,
        }
    }

    /// Propagation over a graph without edges besides self-loops.
    pub fn identity(hops: usize) -> Self {
        let hop = Hop {
            prop: Operator::Identity,
            mean: None,
            self_rows: None,
            outer_rows: None,
        };
        Self {
            hops: vec![hop; hops],
            input_rows: None,
            output_rows: None,
        }
    }

    /// Propagation that only computes the rows of `targets`, reading only
    /// their `hops`-hop receptive field. Output rows are the sorted,
    /// deduplicated targets. Every output value is bitwise equal to the
    /// corresponding row of the whole-graph plan.
    pub fn restricted(ops: &GraphOperators, targets: &[usize], hops: usize) -> Result<Self> {
        if let Some(&bad) = targets.iter().find(|&&t| t >= ops.num_nodes) {
            return Err(Error::InvalidConfig(format!("target node {bad} out of range")));
        }
        let levels: Vec<Vec<usize>> = (0..=hops)
            .map(|k| receptive_field_of_set(&ops.graph, targets, k))
            .collect();
        let outer = &levels[hops];
        let positions = |rows: &[usize], within: &[usize]| -> Arc<[usize]> {
            rows.iter()
                .map(|r| within.binary_search(r).expect("levels are nested"))
                .collect()
        };
        let mut plan_hops = Vec::with_capacity(hops);
        for k in (1..=hops).rev() {
            let (out_rows, in_rows) = (&levels[k - 1], &levels[k]);
            plan_hops.push(Hop {
                prop: Operator::Sparse(Arc::new(ops.normalized.submatrix(out_rows, in_rows)?)),
                mean: Some(Operator::Sparse(Arc::new(ops.mean.submatrix(out_rows, in_rows)?))),
                self_rows: Some(positions(out_rows, in_rows)),
                outer_rows: Some(positions(out_rows, outer)),
            });
        }
        Ok(Self {
            hops: plan_hops,
            input_rows: Some(outer.clone()),
            output_rows: Some(levels[0].clone()),
        })
    }

    /// Rows of a full feature matrix this plan reads.
    pub fn restrict_input(&self, features: &Arc<CsrMatrix>) -> Arc<CsrMatrix> {
        match &self.input_rows {
            Some(rows) => Arc::new(features.select_rows(rows)),
            None => Arc::clone(features),
        }
    }

    pub fn num_input_rows(&self) -> Option<usize> {
        self.input_rows.as_ref().map(Vec::len)
    }
}

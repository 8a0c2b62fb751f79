use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, LabelVector, SparseGraph, SplitMasks};
use crate::linalg::CsrMatrix;
use crate::models::GraphOperators;

/// Graph, features, labels and splits of one node-classification dataset,
/// together with the propagation operators derived from the graph.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    graph: SparseGraph,
    features: FeatureMatrix,
    labels: LabelVector,
    splits: SplitMasks,
    sparse_features: Arc<CsrMatrix>,
    ops: GraphOperators,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        graph: SparseGraph,
        features: FeatureMatrix,
        labels: LabelVector,
        splits: SplitMasks,
    ) -> Result<Self> {
        let n = graph.num_nodes();
        if features.rows() != n {
            return Err(Error::CountMismatch {
                what: "feature rows".into(),
                expected: n,
                found: features.rows(),
            });
        }
        if labels.len() != n {
            return Err(Error::CountMismatch {
                what: "labels".into(),
                expected: n,
                found: labels.len(),
            });
        }
        if !features.is_finite() {
            return Err(Error::Numeric("dataset features contain non-finite values".into()));
        }
        splits.validate(n)?;
        let ops = GraphOperators::new(&graph)?;
        let sparse_features = Arc::new(CsrMatrix::from_dense(&features));
        Ok(Self {
            name: name.into(),
            graph,
            features,
            labels,
            splits,
            sparse_features,
            ops,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.num_classes()
    }

    pub fn graph(&self) -> &SparseGraph {
        &self.graph
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    /// Features in CSR form, as fed to first layers.
    pub fn sparse_features(&self) -> &Arc<CsrMatrix> {
        &self.sparse_features
    }

    pub fn labels(&self) -> &LabelVector {
        &self.labels
    }

    pub fn splits(&self) -> &SplitMasks {
        &self.splits
    }

    pub fn operators(&self) -> &GraphOperators {
        &self.ops
    }
}

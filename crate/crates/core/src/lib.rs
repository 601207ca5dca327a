//! Emergency triage as node classification on a patient-similarity graph.
//!
//! Patients are cleaned and encoded by [`ingest`], linked by feature
//! similarity in [`simgraph`] and classified by the graph networks in
//! [`gnn`], which run on the small autodiff engine in [`numcore`]. The
//! numeric types are generic over [`Real`]; the aliases below fix them to
//! `f64`, the precision everything is persisted in.

pub mod baselines;
pub mod binio;
pub mod evalmetrics;
pub mod gnn;
pub mod ingest;
pub mod numcore;
pub mod scalar;
pub mod simgraph;

pub use scalar::Real;

pub type Tensor = numcore::Tensor<f64>;
pub type SparseMatrix = numcore::SparseMatrix<f64>;
pub type FeatureMatrix = ingest::FeatureMatrix<f64>;
pub type SimilarityGraph = simgraph::SimilarityGraph<f64>;
pub type Model = gnn::Model<f64>;
pub type KnnModel = baselines::KnnModel<f64>;

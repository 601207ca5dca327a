use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gnn::{Activation, Aggregator, GnnError, LayerKind, LayerSpec};
use crate::numcore::{SparseMatrix, Tape, Tensor, Var};
use crate::scalar::Real;
use crate::simgraph::{Orientation, SimilarityGraph};

/// How stored edge weights enter GCN propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeWeighting {
    /// Similarities as stored; distances converted to `1/(1+d)`.
    #[default]
    Affinity,
    /// Every edge weighs 1.
    Unweighted,
}

/// Negative-side slope inside the GATv2 scoring function.
pub const GAT_NEGATIVE_SLOPE: f64 = 0.2;

/// Graph-derived operands shared by every layer of a forward pass.
pub struct GraphContext<T: Real = f64> {
    nodes: usize,
    gcn: Arc<SparseMatrix<T>>,
    gcn_t: Arc<SparseMatrix<T>>,
    mean: Arc<SparseMatrix<T>>,
    mean_t: Arc<SparseMatrix<T>>,
    pub(crate) pattern: SparseMatrix<T>,
    /// Edges with self loops, grouped by destination.
    edge_src: Arc<Vec<usize>>,
    edge_dst: Arc<Vec<usize>>,
    edge_offsets: Arc<Vec<usize>>,
}

impl<T: Real> GraphContext<T> {
    pub fn new(graph: &SimilarityGraph<T>, weighting: EdgeWeighting) -> Result<Self, GnnError> {
        let n = graph.node_count();
        let offsets = graph.offsets();
        let ids = graph.neighbor_ids();
        let affinity = |w: T| match (weighting, graph.metric().orientation()) {
            (EdgeWeighting::Unweighted, _) => T::one(),
            (EdgeWeighting::Affinity, Orientation::Similarity) => w,
            (EdgeWeighting::Affinity, Orientation::Distance) => T::one() / (T::one() + w),
        };

        // Symmetric normalisation of A + I.
        let mut degree = vec![T::one(); n];
        for (i, d) in degree.iter_mut().enumerate() {
            let (_, ws) = graph.neighbors(i);
            for &w in ws {
                *d += affinity(w);
            }
        }
        // NaN degrees are rejected too
        if let Some(i) = degree
            .iter()
            .position(|d| d.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater))
        {
            return Err(GnnError::Spec(format!("node {i} has non-positive weighted degree")));
        }
        let dinv: Vec<T> = degree.iter().map(|d| T::one() / d.sqrt()).collect();
        let mut g_off = Vec::with_capacity(n + 1);
        let mut g_idx = Vec::with_capacity(ids.len() + n);
        let mut g_val = Vec::with_capacity(ids.len() + n);
        g_off.push(0);
        for i in 0..n {
            let (nb, ws) = graph.neighbors(i);
            let mut self_done = false;
            for (&j, &w) in nb.iter().zip(ws) {
                let j = j as usize;
                if !self_done && j > i {
                    g_idx.push(i);
                    g_val.push(dinv[i] * dinv[i]);
                    self_done = true;
                }
                g_idx.push(j);
                g_val.push(affinity(w) * (dinv[i] * dinv[j]));
            }
            if !self_done {
                g_idx.push(i);
                g_val.push(dinv[i] * dinv[i]);
            }
            g_off.push(g_idx.len());
        }
        let gcn = SparseMatrix::from_csr(n, n, g_off, g_idx, g_val)?;

        let plain_idx: Vec<usize> = ids.iter().map(|&j| j as usize).collect();
        let mut mean_val = Vec::with_capacity(ids.len());
        for i in 0..n {
            let deg = graph.degree(i);
            let inv = T::one() / T::from_usize(deg.max(1)).unwrap();
            mean_val.extend(std::iter::repeat_n(inv, deg));
        }
        let mean = SparseMatrix::from_csr(n, n, offsets.to_vec(), plain_idx.clone(), mean_val)?;
        let pattern = SparseMatrix::from_csr(n, n, offsets.to_vec(), plain_idx, vec![T::one(); ids.len()])?;

        let mut edge_src = Vec::with_capacity(ids.len() + n);
        let mut edge_dst = Vec::with_capacity(ids.len() + n);
        let mut edge_offsets = Vec::with_capacity(n + 1);
        edge_offsets.push(0);
        for i in 0..n {
            let (nb, _) = graph.neighbors(i);
            let mut self_done = false;
            for &j in nb {
                let j = j as usize;
                if !self_done && j > i {
                    edge_src.push(i);
                    edge_dst.push(i);
                    self_done = true;
                }
                edge_src.push(j);
                edge_dst.push(i);
            }
            if !self_done {
                edge_src.push(i);
                edge_dst.push(i);
            }
            edge_offsets.push(edge_src.len());
        }

        Ok(Self {
            nodes: n,
            gcn_t: Arc::new(gcn.transpose()),
            gcn: Arc::new(gcn),
            mean_t: Arc::new(mean.transpose()),
            mean: Arc::new(mean),
            pattern,
            edge_src: Arc::new(edge_src),
            edge_dst: Arc::new(edge_dst),
            edge_offsets: Arc::new(edge_offsets),
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    /// `D̂^{-1/2} (A + I) D̂^{-1/2}`.
    pub fn gcn_operator(&self) -> &SparseMatrix<T> {
        &self.gcn
    }
}

/// Parameter shapes of one layer, in storage order.
pub fn param_shapes(layer: &LayerSpec) -> Vec<(usize, usize)> {
    let (i, o) = (layer.in_dim, layer.out_dim);
    match layer.kind {
        LayerKind::Gcn => vec![(i, o), (1, o)],
        LayerKind::GatV2 { heads, .. } => {
            let c = layer.head_width().unwrap();
            vec![(i, heads * c), (i, heads * c), (heads, c)]
        }
        LayerKind::Sage {
            aggregator: Aggregator::Max,
        } => vec![(i, i), (1, i), (i, o), (i, o)],
        LayerKind::Sage {
            aggregator: Aggregator::Mean,
        } => vec![(i, o), (i, o)],
    }
}

/// Glorot-uniform matrices and zero bias rows.
pub fn init_layer<T: Real>(layer: &LayerSpec, rng: &mut ChaCha8Rng) -> Vec<Tensor<T>> {
    param_shapes(layer)
        .into_iter()
        .map(|(r, c)| {
            if r == 1 {
                return Tensor::zeros(r, c);
            }
            let limit = (6.0 / (r + c) as f64).sqrt();
            let data = (0..r * c).map(|_| T::lit(rng.random_range(-limit..limit))).collect();
            Tensor::from_vec(r, c, data).expect("shape matches data")
        })
        .collect()
}

pub fn init_params<T: Real>(layers: &[LayerSpec], seed: u64) -> Vec<Tensor<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    layers.iter().flat_map(|l| init_layer(l, &mut rng)).collect()
}

fn activate<T: Real>(tape: &mut Tape<T>, x: Var, act: Activation) -> Var {
    match act {
        Activation::Identity => x,
        Activation::Relu => tape.relu(x),
    }
}

fn check_input<T: Real>(tape: &Tape<T>, h: Var, layer: &LayerSpec, ctx: &GraphContext<T>) -> Result<(), GnnError> {
    let shape = tape.value(h).shape();
    if shape != (ctx.nodes, layer.in_dim) {
        return Err(GnnError::Spec(format!(
            "layer expects {}x{} input, got {shape:?}",
            ctx.nodes, layer.in_dim
        )));
    }
    Ok(())
}

/// `act(Â_norm · H · W + b)`.
pub fn gcn_forward<T: Real>(
    tape: &mut Tape<T>,
    ctx: &GraphContext<T>,
    layer: &LayerSpec,
    h: Var,
    params: &[Var],
) -> Result<Var, GnnError> {
    check_input(tape, h, layer, ctx)?;
    let hw = tape.matmul(h, params[0])?;
    let prop = tape.sparse_matmul(&ctx.gcn, ctx.gcn_t.clone(), hw)?;
    let out = tape.add_row(prop, params[1])?;
    Ok(activate(tape, out, layer.activation))
}

/// GATv2 layer; also returns the `E×heads` attention coefficients, one
/// row per (destination, source) pair in destination order.
pub fn gatv2_forward_with_attention<T: Real>(
    tape: &mut Tape<T>,
    ctx: &GraphContext<T>,
    layer: &LayerSpec,
    h: Var,
    params: &[Var],
) -> Result<(Var, Var), GnnError> {
    check_input(tape, h, layer, ctx)?;
    let LayerKind::GatV2 { heads, concat } = layer.kind else {
        return Err(GnnError::Spec("not a GATv2 layer".into()));
    };
    let src = tape.matmul(h, params[0])?;
    let dst = tape.matmul(h, params[1])?;
    let src_e = tape.gather_rows(src, ctx.edge_src.clone())?;
    let dst_e = tape.gather_rows(dst, ctx.edge_dst.clone())?;
    let pre = tape.add(src_e, dst_e)?;
    let act = tape.leaky_relu(pre, T::lit(GAT_NEGATIVE_SLOPE));
    let scores = tape.head_dot(act, params[2])?;
    let alpha = tape.segment_softmax(scores, ctx.edge_offsets.clone())?;
    let msg = tape.head_scale(src_e, alpha)?;
    let mut out = tape.scatter_add_rows(msg, ctx.edge_dst.clone(), ctx.nodes)?;
    if !concat {
        out = tape.head_mean(out, heads)?;
    }
    Ok((activate(tape, out, layer.activation), alpha))
}

pub fn gatv2_forward<T: Real>(
    tape: &mut Tape<T>,
    ctx: &GraphContext<T>,
    layer: &LayerSpec,
    h: Var,
    params: &[Var],
) -> Result<Var, GnnError> {
    gatv2_forward_with_attention(tape, ctx, layer, h, params).map(|(out, _)| out)
}

/// Neighbourhood aggregate of a SAGE layer; zero rows for isolated nodes.
pub fn sage_aggregate<T: Real>(
    tape: &mut Tape<T>,
    ctx: &GraphContext<T>,
    aggregator: Aggregator,
    h: Var,
    params: &[Var],
) -> Result<Var, GnnError> {
    Ok(match aggregator {
        Aggregator::Max => {
            let lin = tape.matmul(h, params[0])?;
            let lin = tape.add_row(lin, params[1])?;
            let pooled = tape.relu(lin);
            tape.neighbor_max(pooled, &ctx.pattern)?
        }
        Aggregator::Mean => tape.sparse_matmul(&ctx.mean, ctx.mean_t.clone(), h)?,
    })
}

/// `act(H · W_self + agg · W_neigh)`.
pub fn sage_forward<T: Real>(
    tape: &mut Tape<T>,
    ctx: &GraphContext<T>,
    layer: &LayerSpec,
    h: Var,
    params: &[Var],
) -> Result<Var, GnnError> {
    check_input(tape, h, layer, ctx)?;
    let LayerKind::Sage { aggregator } = layer.kind else {
        return Err(GnnError::Spec("not a SAGE layer".into()));
    };
    let agg = sage_aggregate(tape, ctx, aggregator, h, params)?;
    let k = params.len();
    let own = tape.matmul(h, params[k - 2])?;
    let nb = tape.matmul(agg, params[k - 1])?;
    let out = tape.add(own, nb)?;
    Ok(activate(tape, out, layer.activation))
}

pub fn layer_forward<T: Real>(
    tape: &mut Tape<T>,
    ctx: &GraphContext<T>,
    layer: &LayerSpec,
    h: Var,
    params: &[Var],
) -> Result<Var, GnnError> {
    match layer.kind {
        LayerKind::Gcn => gcn_forward(tape, ctx, layer, h, params),
        LayerKind::GatV2 { .. } => gatv2_forward(tape, ctx, layer, h, params),
        LayerKind::Sage { .. } => sage_forward(tape, ctx, layer, h, params),
    }
}

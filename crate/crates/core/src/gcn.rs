//! Two-layer graph convolutional autoencoder.
//!
//! Encoder: `Z = S · ReLU(S · X · W0) · W1` with `S` the normalized adjacency.
//! Decoder: `X_hat = Z · W_dec + b_dec`. Training minimizes the mean squared
//! row reconstruction error with full-batch gradient descent; a step that
//! would raise the loss halves the learning rate and is retried.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;

#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub w0: Array2<f64>,
    pub w1: Array2<f64>,
    pub w_dec: Array2<f64>,
    pub b_dec: Array1<f64>,
    pub seed: u64,
}

impl GcnParams {
    pub fn d_in(&self) -> usize {
        self.w0.nrows()
    }
    pub fn d_h(&self) -> usize {
        self.w0.ncols()
    }
    pub fn d_z(&self) -> usize {
        self.w1.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.w0.iter().all(|v| v.is_finite())
            && self.w1.iter().all(|v| v.is_finite())
            && self.w_dec.iter().all(|v| v.is_finite())
            && self.b_dec.iter().all(|v| v.is_finite())
    }

    fn check_shapes(&self) -> Result<()> {
        if self.w1.nrows() != self.d_h() {
            return Err(Error::shape("W1 rows", self.d_h(), self.w1.nrows()));
        }
        if self.w_dec.nrows() != self.d_z() {
            return Err(Error::shape("W_dec rows", self.d_z(), self.w_dec.nrows()));
        }
        if self.w_dec.ncols() != self.d_in() || self.b_dec.len() != self.d_in() {
            return Err(Error::shape(
                "decoder output width",
                self.d_in(),
                format!("{} / {}", self.w_dec.ncols(), self.b_dec.len()),
            ));
        }
        Ok(())
    }

    fn step(&self, grads: &Gradients, lr: f64) -> Self {
        Self {
            w0: &self.w0 - &(lr * &grads.w0),
            w1: &self.w1 - &(lr * &grads.w1),
            w_dec: &self.w_dec - &(lr * &grads.w_dec),
            b_dec: &self.b_dec - &(lr * &grads.b_dec),
            seed: self.seed,
        }
    }
}

/// Gradients of the reconstruction loss, shaped like [`GcnParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w0: Array2<f64>,
    pub w1: Array2<f64>,
    pub w_dec: Array2<f64>,
    pub b_dec: Array1<f64>,
}

impl Gradients {
    fn is_finite(&self) -> bool {
        self.w0.iter().all(|v| v.is_finite())
            && self.w1.iter().all(|v| v.is_finite())
            && self.w_dec.iter().all(|v| v.is_finite())
            && self.b_dec.iter().all(|v| v.is_finite())
    }
}

/// Latent node embeddings, one row per node in feature-matrix order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub z: Array2<f64>,
    pub node_index: Vec<u32>,
    pub year: Option<i32>,
}

impl EmbeddingSet {
    pub fn n_nodes(&self) -> usize {
        self.z.nrows()
    }
    pub fn d_z(&self) -> usize {
        self.z.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub loss_curve: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epochs: usize,
    /// Learning rate in effect at the end of training.
    pub learning_rate: f64,
    pub halvings: usize,
    pub rejected_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub d_h: usize,
    pub d_z: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub max_halvings: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d_h: 16,
            d_z: 8,
            epochs: 200,
            learning_rate: 0.01,
            seed: 0,
            max_halvings: 20,
        }
    }
}

/// Uniform fan-based initialization on `±sqrt(6 / (fan_in + fan_out))`,
/// drawn in the order W0, W1, W_dec from one seeded stream.
pub fn init_params(d_in: usize, d_h: usize, d_z: usize, seed: u64) -> Result<GcnParams> {
    if d_in == 0 || d_h == 0 || d_z == 0 {
        return Err(Error::InvalidInput("layer dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |rows: usize, cols: usize| {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..=a))
    };
    let w0 = uniform(d_in, d_h);
    let w1 = uniform(d_h, d_z);
    let w_dec = uniform(d_z, d_in);
    Ok(GcnParams {
        w0,
        w1,
        w_dec,
        b_dec: Array1::zeros(d_in),
        seed,
    })
}

struct Forward {
    a1: Array2<f64>,
    p: Array2<f64>,
    z: Array2<f64>,
    x_hat: Array2<f64>,
}

fn check_inputs(params: &GcnParams, s: &NormalizedAdjacency, x: &Array2<f64>) -> Result<()> {
    params.check_shapes()?;
    if x.nrows() != s.n_nodes {
        return Err(Error::shape("feature rows vs graph nodes", s.n_nodes, x.nrows()));
    }
    if x.ncols() != params.d_in() {
        return Err(Error::shape("feature columns vs W0 rows", params.d_in(), x.ncols()));
    }
    Ok(())
}

fn forward(params: &GcnParams, s: &NormalizedAdjacency, sx: &Array2<f64>) -> Forward {
    let a1 = sx.dot(&params.w0);
    let h1 = a1.mapv(relu);
    let p = s.matmul(&h1);
    let z = p.dot(&params.w1);
    let x_hat = z.dot(&params.w_dec) + &params.b_dec;
    Forward { a1, p, z, x_hat }
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Embeddings `S · ReLU(S X W0) · W1`.
pub fn encode(params: &GcnParams, s: &NormalizedAdjacency, x: &Array2<f64>) -> Result<Array2<f64>> {
    check_inputs(params, s, x)?;
    Ok(forward(params, s, &s.matmul(x)).z)
}

pub fn decode(params: &GcnParams, z: &Array2<f64>) -> Result<Array2<f64>> {
    params.check_shapes()?;
    if z.ncols() != params.d_z() {
        return Err(Error::shape("embedding width vs W_dec rows", params.d_z(), z.ncols()));
    }
    Ok(z.dot(&params.w_dec) + &params.b_dec)
}

/// Mean over rows of the squared Euclidean residual norm.
pub fn reconstruction_loss(x: &Array2<f64>, x_hat: &Array2<f64>) -> Result<f64> {
    if x.dim() != x_hat.dim() {
        return Err(Error::shape(
            "reconstruction",
            format!("{:?}", x.dim()),
            format!("{:?}", x_hat.dim()),
        ));
    }
    if x.nrows() == 0 {
        return Err(Error::EmptySample);
    }
    let ss: f64 = x.iter().zip(x_hat.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(ss / x.nrows() as f64)
}

pub fn loss(params: &GcnParams, s: &NormalizedAdjacency, x: &Array2<f64>) -> Result<f64> {
    check_inputs(params, s, x)?;
    let fwd = forward(params, s, &s.matmul(x));
    reconstruction_loss(x, &fwd.x_hat)
}

/// Exact gradients of [`reconstruction_loss`] by reverse-mode differentiation
/// of the forward pass; the ReLU subgradient at zero is taken as zero.
pub fn loss_gradients(
    params: &GcnParams,
    s: &NormalizedAdjacency,
    x: &Array2<f64>,
) -> Result<Gradients> {
    check_inputs(params, s, x)?;
    let sx = s.matmul(x);
    Ok(gradients_with(params, s, x, &sx).1)
}

fn gradients_with(
    params: &GcnParams,
    s: &NormalizedAdjacency,
    x: &Array2<f64>,
    sx: &Array2<f64>,
) -> (f64, Gradients) {
    let n = x.nrows() as f64;
    let fwd = forward(params, s, sx);
    let resid = &fwd.x_hat - x;
    let loss = resid.iter().map(|r| r * r).sum::<f64>() / n;
    let g_xhat = resid * (2.0 / n);

    let w_dec = fwd.z.t().dot(&g_xhat);
    let b_dec = g_xhat.sum_axis(Axis(0));
    let g_z = g_xhat.dot(&params.w_dec.t());
    let w1 = fwd.p.t().dot(&g_z);
    let g_p = g_z.dot(&params.w1.t());
    // S is symmetric, so S^T g = S g
    let mut g_a1 = s.matmul(&g_p);
    ndarray::Zip::from(&mut g_a1)
        .and(&fwd.a1)
        .for_each(|g, &a| {
            if a <= 0.0 {
                *g = 0.0;
            }
        });
    let w0 = sx.t().dot(&g_a1);
    (
        loss,
        Gradients {
            w0,
            w1,
            w_dec,
            b_dec,
        },
    )
}

/// Full-batch gradient descent from `init_params(seed)`.
///
/// Every epoch computes the gradient once and tries a step; if the step does
/// not lower the loss (or produces a non-finite loss), the learning rate is
/// halved and the step retried, up to `max_halvings` times per epoch. The
/// reduced rate carries over to later epochs. A step that cannot be accepted
/// leaves the parameters unchanged, so the recorded loss curve never
/// increases.
pub fn train(
    s: &NormalizedAdjacency,
    x: &Array2<f64>,
    node_index: &[u32],
    cfg: &TrainConfig,
) -> Result<(GcnParams, EmbeddingSet, TrainReport)> {
    if x.nrows() < 2 {
        return Err(Error::InsufficientObservations {
            needed: 2,
            got: x.nrows(),
        });
    }
    if node_index.len() != x.nrows() {
        return Err(Error::shape("node index length", x.nrows(), node_index.len()));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::Config(format!(
            "learning rate must be positive, got {}",
            cfg.learning_rate
        )));
    }
    let mut params = init_params(x.ncols(), cfg.d_h, cfg.d_z, cfg.seed)?;
    check_inputs(&params, s, x)?;
    let sx = s.matmul(x);

    let (mut current, mut grads) = gradients_with(&params, s, x, &sx);
    if !current.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0 });
    }
    let initial_loss = current;
    let mut lr = cfg.learning_rate;
    let mut halvings = 0;
    let mut rejected = 0;
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        if !grads.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let mut tries = 0;
        loop {
            let candidate = params.step(&grads, lr);
            let (cand_loss, cand_grads) = gradients_with(&candidate, s, x, &sx);
            if cand_loss.is_finite() && cand_loss <= current {
                params = candidate;
                current = cand_loss;
                grads = cand_grads;
                break;
            }
            if tries >= cfg.max_halvings {
                rejected += 1;
                break;
            }
            lr *= 0.5;
            tries += 1;
            halvings += 1;
        }
        curve.push(current);
    }

    let z = forward(&params, s, &sx).z;
    let emb = EmbeddingSet {
        z,
        node_index: node_index.to_vec(),
        year: None,
    };
    Ok((
        params,
        emb,
        TrainReport {
            loss_curve: curve,
            initial_loss,
            final_loss: current,
            epochs: cfg.epochs,
            learning_rate: lr,
            halvings,
            rejected_steps: rejected,
        },
    ))
}

/// Flips the latent sign convention (`W1`, `W_dec` and `Z` negated together,
/// which leaves the reconstruction unchanged) when the row means of `Z` are
/// negatively correlated with `reference`. Returns whether a flip happened.
pub fn orient_embeddings(params: &mut GcnParams, z: &mut Array2<f64>, reference: &[f64]) -> bool {
    let scores: Vec<f64> = z.rows().into_iter().map(|r| r.mean().unwrap_or(0.0)).collect();
    let n = scores.len() as f64;
    let ms = scores.iter().sum::<f64>() / n;
    let mr = reference.iter().sum::<f64>() / n;
    let cov: f64 = scores
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - ms) * (b - mr))
        .sum();
    if cov < 0.0 {
        params.w1.mapv_inplace(|v| -v);
        params.w_dec.mapv_inplace(|v| -v);
        z.mapv_inplace(|v| -v);
        true
    } else {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_knn_graph, normalize_adjacency};
    use ndarray::array;

    fn single_node_op() -> NormalizedAdjacency {
        NormalizedAdjacency::from_triples(1, &[(0, 0, 1.0)]).unwrap()
    }

    #[test]
    fn init_shapes_and_determinism() {
        let a = init_params(4, 16, 8, 7).unwrap();
        assert_eq!(a.w0.dim(), (4, 16));
        assert_eq!(a.w1.dim(), (16, 8));
        assert_eq!(a.w_dec.dim(), (8, 4));
        assert_eq!(a.b_dec.len(), 4);
        let b = init_params(4, 16, 8, 7).unwrap();
        assert_eq!(a, b);
        let c = init_params(4, 16, 8, 8).unwrap();
        assert_ne!(a.w0, c.w0);
        let bound = (6.0_f64 / 20.0).sqrt();
        assert!(a.w0.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn zero_weights_encode_to_zero() {
        let mut p = init_params(2, 3, 2, 1).unwrap();
        p.w0.fill(0.0);
        p.w1.fill(0.0);
        let s = normalize_adjacency(&build_knn_graph(&[(0.0, 0.0), (1.0, 0.0)], 1).unwrap());
        let z = encode(&p, &s, &array![[1.0, 2.0], [3.0, -4.0]]).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_pass_single_node() {
        let p = GcnParams {
            w0: array![[1.0]],
            w1: array![[1.0]],
            w_dec: array![[1.0]],
            b_dec: array![0.0],
            seed: 0,
        };
        let z = encode(&p, &single_node_op(), &array![[2.0]]).unwrap();
        assert_eq!(z, array![[2.0]]);
    }

    #[test]
    fn two_node_encode_matches_dense_products() {
        let p = GcnParams {
            w0: array![[0.5, -1.0, 0.25], [2.0, 0.1, -0.3]],
            w1: array![[1.0, -2.0], [0.3, 0.7], [-0.5, 0.5]],
            w_dec: array![[1.0, 0.0], [0.0, 1.0]],
            b_dec: array![0.0, 0.0],
            seed: 0,
        };
        let s = normalize_adjacency(&build_knn_graph(&[(0.0, 0.0), (1.0, 0.0)], 1).unwrap());
        let x = array![[1.0, -2.0], [0.5, 3.0]];
        let dense = s.to_dense();
        let h1 = dense.dot(&x).dot(&p.w0).mapv(|v| v.max(0.0));
        let expected = dense.dot(&h1).dot(&p.w1);
        let z = encode(&p, &s, &x).unwrap();
        for (a, b) in z.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_cases() {
        let mut p = init_params(3, 2, 3, 5).unwrap();
        let z0 = Array2::zeros((4, 3));
        assert!(decode(&p, &z0).unwrap().iter().all(|&v| v == 0.0));
        p.w_dec = Array2::eye(3);
        let z = array![[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]];
        assert_eq!(decode(&p, &z).unwrap(), z);
        p.b_dec = array![1.0, -1.0, 0.5];
        let manual = z.dot(&p.w_dec) + &p.b_dec;
        assert_eq!(decode(&p, &z).unwrap(), manual);
        assert!(decode(&p, &array![[1.0, 2.0]]).is_err());
    }

    #[test]
    fn loss_cases() {
        let x = array![[1.0, 0.0, 0.0, 0.0]];
        assert_eq!(reconstruction_loss(&x, &x).unwrap(), 0.0);
        assert_eq!(reconstruction_loss(&x, &Array2::zeros((1, 4))).unwrap(), 1.0);
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        let b = array![[0.5, 2.5], [2.0, 4.0]];
        let l1 = reconstruction_loss(&a, &b).unwrap();
        let b2 = &a + &((&b - &a) * 2.0);
        assert!((reconstruction_loss(&a, &b2).unwrap() - 4.0 * l1).abs() < 1e-12);
        assert!(reconstruction_loss(&a, &x).is_err());
    }

    #[test]
    fn gradients_vanish_at_exact_reconstruction() {
        // d_z = d_in with identity-like weights on a single node and positive input
        let p = GcnParams {
            w0: Array2::eye(2),
            w1: Array2::eye(2),
            w_dec: Array2::eye(2),
            b_dec: array![0.0, 0.0],
            seed: 0,
        };
        let g = loss_gradients(&p, &single_node_op(), &array![[1.0, 2.0]]).unwrap();
        assert!(g.w0.iter().chain(g.w1.iter()).chain(g.w_dec.iter()).all(|&v| v == 0.0));
        assert!(g.b_dec.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_vanish_for_zero_input() {
        let p = init_params(4, 5, 3, 2).unwrap();
        let s = normalize_adjacency(
            &build_knn_graph(&[(0.0, 0.0), (1.0, 0.0), (0.0, 2.0)], 1).unwrap(),
        );
        let g = loss_gradients(&p, &s, &Array2::zeros((3, 4))).unwrap();
        assert!(g.w0.iter().chain(g.w1.iter()).chain(g.w_dec.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn zero_epochs_is_plain_encode() {
        let coords: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 0.0)).collect();
        let s = normalize_adjacency(&build_knn_graph(&coords, 2).unwrap());
        let x = Array2::from_shape_fn((6, 4), |(i, j)| ((i * 3 + j) as f64).sin());
        let cfg = TrainConfig {
            epochs: 0,
            seed: 3,
            ..Default::default()
        };
        let (_, emb, report) = train(&s, &x, &[0, 1, 2, 3, 4, 5], &cfg).unwrap();
        let init = init_params(4, cfg.d_h, cfg.d_z, 3).unwrap();
        assert_eq!(emb.z, encode(&init, &s, &x).unwrap());
        assert!(report.loss_curve.is_empty());
        assert_eq!(report.final_loss, report.initial_loss);
    }

    #[test]
    fn non_finite_input_aborts() {
        let coords: Vec<(f64, f64)> = (0..3).map(|i| (i as f64, 0.0)).collect();
        let s = normalize_adjacency(&build_knn_graph(&coords, 1).unwrap());
        let mut x = Array2::ones((3, 4));
        x[(1, 2)] = f64::INFINITY;
        let err = train(&s, &x, &[0, 1, 2], &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 0 }));
    }

    #[test]
    fn orientation_flip_keeps_reconstruction() {
        let coords: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 0.0)).collect();
        let s = normalize_adjacency(&build_knn_graph(&coords, 2).unwrap());
        let x = Array2::from_shape_fn((5, 4), |(i, j)| ((i + 2 * j) as f64).cos());
        let mut p = init_params(4, 6, 3, 9).unwrap();
        let mut z = encode(&p, &s, &x).unwrap();
        let before = decode(&p, &z).unwrap();
        let scores: Vec<f64> = z.rows().into_iter().map(|r| r.mean().unwrap()).collect();
        let anti: Vec<f64> = scores.iter().map(|v| -v).collect();
        assert!(orient_embeddings(&mut p, &mut z, &anti));
        assert_eq!(decode(&p, &z).unwrap(), before);
        assert_eq!(encode(&p, &s, &x).unwrap(), z);
        assert!(!orient_embeddings(&mut p, &mut z, &anti));
    }
}

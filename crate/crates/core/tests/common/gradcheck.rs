//! Central finite-difference checks of the graph's backward pass.

use hypercert::hypernet::{downstream_forward, Architecture, Hypernet, HypernetConfig, Noise};
use hypercert::tensor::{Graph, NodeId, Rng, Tensor};

pub const STEP: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub rel_err: f64,
}

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

type Build<'a> = dyn Fn(&mut Graph, &[NodeId]) -> NodeId + 'a;

/// Builds the graph over fresh parameter leaves holding `inputs`.
fn eval(inputs: &[Tensor], soft: bool, build: &Build) -> (f64, Vec<Vec<f64>>) {
    let mut g = if soft { Graph::soft() } else { Graph::new() };
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.param(t.rows(), t.cols(), t.values.clone()).unwrap()).collect();
    let loss = build(&mut g, &ids);
    g.backward(loss).unwrap();
    let grads = ids.iter().map(|&id| g.grad(id).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; g.values(id).len()])).collect();
    (g.values(loss)[0], grads)
}

pub fn fd_check(name: &str, inputs: Vec<Tensor>, soft: bool, build: &Build) -> Check {
    let (_, analytic) = eval(&inputs, soft, build);
    let mut worst: f64 = 0.0;
    for (i, t) in inputs.iter().enumerate() {
        for j in 0..t.values.len() {
            let mut plus = inputs.clone();
            plus[i].values[j] += STEP;
            let mut minus = inputs.clone();
            minus[i].values[j] -= STEP;
            let numeric = (eval(&plus, soft, build).0 - eval(&minus, soft, build).0) / (2.0 * STEP);
            worst = worst.max(rel(analytic[i][j], numeric));
        }
    }
    Check { name: name.to_string(), rel_err: worst }
}

fn rand_t(rng: &mut Rng, r: usize, c: usize) -> Tensor {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).unwrap()
}

/// Values bounded away from zero, for ops with a kink there.
fn away_from_zero(rng: &mut Rng, r: usize, c: usize) -> Tensor {
    Tensor::matrix(
        r,
        c,
        (0..r * c).map(|_| rng.uniform_range(0.1, 1.0) * if rng.below(2) == 0 { -1.0 } else { 1.0 }).collect(),
    )
    .unwrap()
}

/// Contracts a node of any shape to a scalar with fixed random weights.
fn contract(g: &mut Graph, x: NodeId) -> NodeId {
    let (r, c) = g.shape(x);
    let mut rng = Rng::from_seed(99);
    let w = g.constant(r, c, (0..r * c).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).unwrap();
    let p = g.mul(x, w).unwrap();
    g.sum(p)
}

pub fn op_checks() -> Vec<Check> {
    let mut rng = Rng::from_seed(2024);
    let mut out = Vec::new();
    let mut add = |name: &str, inputs: Vec<Tensor>, soft: bool, f: &Build| out.push(fd_check(name, inputs, soft, f));

    add("matmul", vec![rand_t(&mut rng, 3, 4), rand_t(&mut rng, 4, 2)], false, &|g, x| {
        let y = g.matmul(x[0], x[1]).unwrap();
        contract(g, y)
    });
    add("transpose", vec![rand_t(&mut rng, 3, 2)], false, &|g, x| {
        let y = g.transpose(x[0]);
        contract(g, y)
    });
    add("add", vec![rand_t(&mut rng, 2, 3), rand_t(&mut rng, 2, 3)], false, &|g, x| {
        let y = g.add(x[0], x[1]).unwrap();
        contract(g, y)
    });
    add("add_bias", vec![rand_t(&mut rng, 3, 2), rand_t(&mut rng, 1, 2)], false, &|g, x| {
        let y = g.add_bias(x[0], x[1]).unwrap();
        contract(g, y)
    });
    add("sub", vec![rand_t(&mut rng, 2, 3), rand_t(&mut rng, 2, 3)], false, &|g, x| {
        let y = g.sub(x[0], x[1]).unwrap();
        contract(g, y)
    });
    add("sub_row", vec![rand_t(&mut rng, 3, 2), rand_t(&mut rng, 1, 2)], false, &|g, x| {
        let y = g.sub_row(x[0], x[1]).unwrap();
        contract(g, y)
    });
    add("mul", vec![rand_t(&mut rng, 2, 3), rand_t(&mut rng, 2, 3)], false, &|g, x| {
        let y = g.mul(x[0], x[1]).unwrap();
        contract(g, y)
    });
    add("mul_scalar", vec![rand_t(&mut rng, 2, 3)], false, &|g, x| {
        let y = g.mul_scalar(x[0], -1.7);
        contract(g, y)
    });
    add("div_scalar", vec![rand_t(&mut rng, 2, 3), Tensor::matrix(1, 1, vec![0.8]).unwrap()], false, &|g, x| {
        let y = g.div_scalar(x[0], x[1]).unwrap();
        contract(g, y)
    });
    add("mean", vec![rand_t(&mut rng, 3, 3)], false, &|g, x| {
        let y = g.mean(x[0]);
        let y = g.mul(y, y).unwrap();
        contract(g, y)
    });
    add("sum", vec![rand_t(&mut rng, 3, 3)], false, &|g, x| {
        let y = g.sum(x[0]);
        let y = g.tanh(y);
        contract(g, y)
    });
    add("concat_rows", vec![rand_t(&mut rng, 2, 3), rand_t(&mut rng, 1, 3)], false, &|g, x| {
        let y = g.concat(&[x[0], x[1]], 0).unwrap();
        contract(g, y)
    });
    add("concat_cols", vec![rand_t(&mut rng, 2, 3), rand_t(&mut rng, 2, 1)], false, &|g, x| {
        let y = g.concat(&[x[0], x[1]], 1).unwrap();
        contract(g, y)
    });
    add("row_select", vec![rand_t(&mut rng, 4, 2)], false, &|g, x| {
        let y = g.row_select(x[0], &[2, 0, 2]).unwrap();
        contract(g, y)
    });
    add("slice", vec![rand_t(&mut rng, 2, 4)], false, &|g, x| {
        let y = g.slice(x[0], 3, 4).unwrap();
        contract(g, y)
    });
    add("cols", vec![rand_t(&mut rng, 3, 4)], false, &|g, x| {
        let y = g.cols(x[0], 1, 2).unwrap();
        contract(g, y)
    });
    add("reshape", vec![rand_t(&mut rng, 2, 3)], false, &|g, x| {
        let y = g.reshape(x[0], 3, 2).unwrap();
        contract(g, y)
    });
    add("tanh", vec![rand_t(&mut rng, 2, 3)], false, &|g, x| {
        let y = g.tanh(x[0]);
        contract(g, y)
    });
    add("relu", vec![away_from_zero(&mut rng, 2, 3)], false, &|g, x| {
        let y = g.relu(x[0]);
        contract(g, y)
    });
    add("sigmoid", vec![rand_t(&mut rng, 2, 3)], false, &|g, x| {
        let y = g.sigmoid(x[0]);
        contract(g, y)
    });
    add("sqrt", vec![Tensor::matrix(1, 3, vec![0.3, 1.2, 2.5]).unwrap()], false, &|g, x| {
        let y = g.sqrt(x[0]);
        contract(g, y)
    });
    add("softmax_rows", vec![rand_t(&mut rng, 2, 4)], false, &|g, x| {
        let y = g.softmax(x[0], 1).unwrap();
        contract(g, y)
    });
    add("softmax_cols", vec![rand_t(&mut rng, 3, 2)], false, &|g, x| {
        let y = g.softmax(x[0], 0).unwrap();
        contract(g, y)
    });
    add("sign_st", vec![away_from_zero(&mut rng, 2, 3)], true, &|g, x| {
        let y = g.sign_st(x[0]);
        let y = g.mul(y, y).unwrap();
        contract(g, y)
    });
    add("hard_select_st", vec![rand_t(&mut rng, 1, 3), rand_t(&mut rng, 3, 2)], true, &|g, x| {
        let p = g.softmax(x[0], 1).unwrap();
        let y = g.hard_select_st(p, x[1]).unwrap();
        let y = g.tanh(y);
        contract(g, y)
    });
    add("weighted_set_mean", vec![rand_t(&mut rng, 4, 3), rand_t(&mut rng, 4, 1)], false, &|g, x| {
        let y = g.weighted_set_mean(x[0], x[1]).unwrap();
        contract(g, y)
    });
    add("bce", vec![rand_t(&mut rng, 5, 1)], false, &|g, x| g.bce(x[0], &[1.0, -1.0, -1.0, 1.0, 1.0]).unwrap());
    out
}

fn toy_task(rng: &mut Rng, m: usize) -> (Tensor, Vec<f64>) {
    let x = Tensor::matrix(m, 2, (0..2 * m).map(|_| rng.uniform_range(-3.0, 3.0)).collect()).unwrap();
    let y = (0..m).map(|i| if x.at(i, 0) + 0.5 * x.at(i, 1) > 0.0 { 1.0 } else { -1.0 }).collect();
    (x, y)
}

/// Query-set loss of the whole hypernetwork as a function of its flat
/// parameters, evaluated with the surrogate forward.
fn net_loss(net: &Hypernet, flat: &[f64], sx: &Tensor, sy: &[f64], qx: &Tensor, qy: &[f64], noise: &[f64]) -> (f64, Vec<f64>) {
    let mut net = net.clone();
    net.params.assign_flat(flat);
    let mut g = Graph::soft();
    let bound = net.bind(&mut g, true);
    let noise = if net.config.architecture.gaussian_message() { Noise::Given(noise) } else { Noise::Zero };
    let out = net.forward(&mut g, &bound, sx, sy, noise).unwrap();
    let q = g.constant(qx.rows(), qx.cols(), qx.values.clone()).unwrap();
    let logits = downstream_forward(&mut g, out.gamma, &net.config.layer_sizes(), q).unwrap();
    let loss = g.bce(logits, qy).unwrap();
    g.backward(loss).unwrap();
    (g.values(loss)[0], net.params.collect_grads(&g, &bound))
}

pub fn hypernet_checks() -> Vec<Check> {
    let configs = [(Architecture::SchPlus, 2, 3, 31), (Architecture::PbSch, 2, 2, 32), (Architecture::Pbh, 0, 3, 33)];
    configs
        .iter()
        .map(|&(architecture, c, b, seed)| {
            let cfg = HypernetConfig {
                architecture,
                input_dim: 2,
                c,
                b,
                mlp1: vec![5],
                mlp2: vec![4],
                mlp3: vec![3],
                embed_dim: 3,
                key_dim: 3,
            };
            // First seed whose heads pick distinct rows, so the frame path is exercised.
            let (net, flat, sx, sy, qx, qy, noise) = (seed..)
                .map(|s| {
                    let mut rng = Rng::from_seed(s);
                    let net = Hypernet::new(cfg.clone(), &mut rng).unwrap();
                    let (sx, sy) = toy_task(&mut rng, 10);
                    let (qx, qy) = toy_task(&mut rng, 6);
                    let noise = rng.normals(b);
                    // Zero-initialised biases would put relu units exactly on their kink.
                    let flat: Vec<f64> = net.params.flatten().iter().map(|v| v + 0.1 * rng.normal()).collect();
                    (net, flat, sx, sy, qx, qy, noise)
                })
                .find(|(net, flat, sx, sy, ..)| {
                    let mut tuned = net.clone();
                    tuned.params.assign_flat(flat);
                    tuned.infer(sx, sy, Noise::Zero).unwrap().distinct_indices().len() == c
                })
                .unwrap();
            let (_, analytic) = net_loss(&net, &flat, &sx, &sy, &qx, &qy, &noise);
            let mut worst: f64 = 0.0;
            for j in 0..flat.len() {
                let mut p = flat.clone();
                p[j] += STEP;
                let up = net_loss(&net, &p, &sx, &sy, &qx, &qy, &noise).0;
                p[j] -= 2.0 * STEP;
                let down = net_loss(&net, &p, &sx, &sy, &qx, &qy, &noise).0;
                worst = worst.max(rel(analytic[j], (up - down) / (2.0 * STEP)));
            }
            Check { name: format!("hypernet {architecture} c={c} b={b}"), rel_err: worst }
        })
        .collect()
}

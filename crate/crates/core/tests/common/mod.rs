//! Oracles shared by the integration tests: a central-difference gradient
//! checker and a brute-force NT-Xent.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skelrep_core::contrastive::nt_xent;
use skelrep_core::encoders::{project, Encoder, EncoderPlan, Projection, ProjectionPlan};
use skelrep_core::nn::loss::{cross_entropy, mse};
use skelrep_core::nn::{affine, Tape, Tensor, Var};
use skelrep_core::skeleton::build_adjacency;
use skelrep_core::Result;

pub const H: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Coordinates probed per input tensor; small tensors are probed fully.
const PROBES: usize = 24;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

type Build<'a> = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + 'a;

/// Scalar objective: the output itself, or its dot product with fixed
/// random weights when it is not a scalar.
fn objective(inputs: &[Tensor<f64>], build: &Build<'_>, seed: u64) -> Result<(Tape<f64>, Vec<Var>, Var)> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars)?;
    let shape = tape.shape(out).to_vec();
    let loss = if tape.value(out).numel() == 1 {
        out
    } else {
        let w = random_tensor(&mut rng(seed ^ 0x5eed), &shape, -1.0, 1.0);
        let w = tape.constant(w);
        let p = tape.mul(out, w)?;
        tape.sum(p)
    };
    Ok((tape, vars, loss))
}

fn eval(inputs: &[Tensor<f64>], build: &Build<'_>, seed: u64) -> f64 {
    let (tape, _, loss) = objective(inputs, build, seed).unwrap();
    tape.value(loss).data[0]
}

/// Worst norm-wise relative error ‖analytic − numeric‖ / max(‖analytic‖,
/// ‖numeric‖) over every input tensor, using central differences.
pub fn gradcheck(seed: u64, inputs: Vec<Tensor<f64>>, build: &Build<'_>) -> f64 {
    check(seed, inputs, build, false)
}

/// [`gradcheck`] for objectives that are piecewise linear in each single
/// coordinate (relu networks). A probe whose ±h interval straddles a relu
/// kink shows up as unequal one-sided differences; such probes are redrawn,
/// since no derivative exists across them.
pub fn gradcheck_piecewise(seed: u64, inputs: Vec<Tensor<f64>>, build: &Build<'_>) -> f64 {
    check(seed, inputs, build, true)
}

fn check(seed: u64, inputs: Vec<Tensor<f64>>, build: &Build<'_>, piecewise: bool) -> f64 {
    let (tape, vars, loss) = objective(&inputs, build, seed).unwrap();
    let base = tape.value(loss).data[0];
    let mut grads = tape.backward(loss).unwrap();
    let mut pick = rng(seed ^ 0x9e37);
    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.take_or_zeros(vars[i], input.numel());
        let exhaustive = input.numel() <= PROBES;
        let mut probes = 0;
        let mut attempts = 0;
        let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
        while probes < PROBES.min(input.numel()) && attempts < 4 * PROBES {
            let c = if exhaustive { attempts } else { pick.random_range(0..input.numel()) };
            attempts += 1;
            if exhaustive && c >= input.numel() {
                break;
            }
            let mut shifted = inputs.clone();
            shifted[i].data[c] = input.data[c] + H;
            let up = eval(&shifted, build, seed);
            shifted[i].data[c] = input.data[c] - H;
            let down = eval(&shifted, build, seed);
            let (fwd, bwd) = ((up - base) / H, (base - down) / H);
            if piecewise && (fwd - bwd).abs() > 1e-6 * fwd.abs().max(bwd.abs()).max(1.0) {
                continue;
            }
            let numeric = (up - down) / (2.0 * H);
            diff += (analytic[c] - numeric).powi(2);
            na += analytic[c].powi(2);
            nn += numeric.powi(2);
            probes += 1;
        }
        let scale = na.sqrt().max(nn.sqrt());
        if scale > 1e-12 {
            worst = worst.max(diff.sqrt() / scale);
        }
    }
    worst
}

/// Parameters with every bias redrawn from U(−0.5, 0.5), so that checks run
/// away from the zero-bias relu kinks of a fresh initialization.
fn with_random_biases(params: &skelrep_core::nn::ParamSet<f64>, r: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
    params
        .iter()
        .map(|(n, p)| {
            if n.ends_with(".b") {
                random_tensor(r, &p.shape, -0.5, 0.5)
            } else {
                p.clone()
            }
        })
        .collect()
}

pub type Case = (&'static str, fn(u64) -> f64);

fn t(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    random_tensor(rng, shape, -1.0, 1.0)
}

/// Every tape primitive, each probed through a small graph.
pub fn primitive_cases() -> Vec<Case> {
    vec![
        ("matmul", |s| {
            let mut r = rng(s);
            gradcheck(s, vec![t(&mut r, &[3, 4]), t(&mut r, &[4, 5])], &|tp, v| tp.matmul(v[0], v[1]))
        }),
        ("matmul_t (transposed operands)", |s| {
            let mut r = rng(s);
            let ins = vec![t(&mut r, &[4, 3]), t(&mut r, &[5, 4]), t(&mut r, &[3, 4]), t(&mut r, &[4, 5])];
            gradcheck(s, ins, &|tp, v| {
                let a = tp.matmul_t(v[0], v[1], true, true)?;
                let b = tp.matmul_t(v[2], v[3], false, false)?;
                let c = tp.matmul_t(v[0], v[3], true, false)?;
                let d = tp.matmul_t(v[2], v[1], false, true)?;
                let ab = tp.add(a, b)?;
                let cd = tp.add(c, d)?;
                tp.add(ab, cd)
            })
        }),
        ("bmm", |s| {
            let mut r = rng(s);
            let ins = vec![t(&mut r, &[2, 3, 4]), t(&mut r, &[1, 3, 3]), t(&mut r, &[2, 4, 2])];
            gradcheck(s, ins, &|tp, v| {
                let full = tp.bmm(v[0], v[2])?;
                tp.bmm(v[1], full)
            })
        }),
        ("add / sub / mul", |s| {
            let mut r = rng(s);
            gradcheck(s, vec![t(&mut r, &[3, 4]), t(&mut r, &[3, 4])], &|tp, v| {
                let a = tp.add(v[0], v[1])?;
                let b = tp.sub(v[0], v[1])?;
                tp.mul(a, b)
            })
        }),
        ("add_row / affine", |s| {
            let mut r = rng(s);
            let ins = vec![t(&mut r, &[2, 3, 4]), t(&mut r, &[4]), t(&mut r, &[5, 4]), t(&mut r, &[4, 3]), t(&mut r, &[3])];
            gradcheck(s, ins, &|tp, v| {
                let a = tp.add_row(v[0], v[1])?;
                let b = affine(tp, v[2], v[3], v[4])?;
                let sa = tp.sum(a);
                let sb = tp.mul(b, b)?;
                let sb = tp.sum(sb);
                tp.add(sa, sb)
            })
        }),
        ("scale / relu", |s| {
            let mut r = rng(s);
            gradcheck(s, vec![t(&mut r, &[4, 6])], &|tp, v| {
                let a = tp.scale(v[0], -1.7);
                Ok(tp.relu(a))
            })
        }),
        ("log", |s| {
            let mut r = rng(s);
            gradcheck(s, vec![random_tensor(&mut r, &[3, 5], 0.2, 3.0)], &|tp, v| Ok(tp.log(v[0])))
        }),
        ("sum / mean", |s| {
            let mut r = rng(s);
            gradcheck(s, vec![t(&mut r, &[3, 5])], &|tp, v| {
                let sq = tp.mul(v[0], v[0])?;
                let a = tp.sum(sq);
                let b = tp.mean(v[0]);
                let b = tp.scale(b, 3.0);
                tp.mul(a, b)
            })
        }),
        ("mean_axes", |s| {
            let mut r = rng(s);
            gradcheck(s, vec![t(&mut r, &[2, 3, 4, 5])], &|tp, v| {
                let a = tp.mean_axes(v[0], 1..3)?;
                let b = tp.mean_axes(v[0], 0..1)?;
                let b = tp.mean_axes(b, 2..3)?;
                let sa = tp.mul(a, a)?;
                let sa = tp.sum(sa);
                let sb = tp.mul(b, b)?;
                let sb = tp.sum(sb);
                tp.add(sa, sb)
            })
        }),
        ("reshape / transpose", |s| {
            let mut r = rng(s);
            gradcheck(s, vec![t(&mut r, &[2, 6]), t(&mut r, &[3, 4])], &|tp, v| {
                let a = tp.reshape(v[0], &[4, 3])?;
                let a = tp.transpose(a)?;
                tp.mul(a, v[1])
            })
        }),
        ("concat", |s| {
            let mut r = rng(s);
            let ins = vec![t(&mut r, &[2, 3, 2]), t(&mut r, &[2, 1, 2]), t(&mut r, &[1, 4, 2])];
            gradcheck(s, ins, &|tp, v| {
                let a = tp.concat(&[v[0], v[1]], 1)?;
                let b = tp.concat(&[a, v[2]], 0)?;
                tp.mul(b, b)
            })
        }),
        ("temporal_conv", |s| {
            let mut r = rng(s);
            let kernel = [3, 5, 9][s as usize % 3];
            let stride = 1 + s as usize % 2;
            let ins = vec![t(&mut r, &[2, 11, 3, 2]), t(&mut r, &[kernel * 2, 3])];
            gradcheck(s, ins, &move |tp, v| tp.temporal_conv(v[0], v[1], kernel, stride))
        }),
        ("softmax", |s| {
            let mut r = rng(s);
            gradcheck(s, vec![random_tensor(&mut r, &[3, 5], -2.0, 2.0)], &|tp, v| tp.softmax(v[0]))
        }),
        ("log_softmax", |s| {
            let mut r = rng(s);
            gradcheck(s, vec![random_tensor(&mut r, &[3, 5], -2.0, 2.0)], &|tp, v| tp.log_softmax(v[0]))
        }),
        ("l2_normalize", |s| {
            let mut r = rng(s);
            gradcheck(s, vec![t(&mut r, &[4, 3])], &|tp, v| tp.l2_normalize(v[0]))
        }),
        ("mask_diagonal / gather", |s| {
            let mut r = rng(s);
            gradcheck(s, vec![t(&mut r, &[4, 4])], &|tp, v| {
                let m = tp.mask_diagonal(v[0])?;
                let l = tp.log_softmax(m)?;
                tp.gather(l, &[1, 0, 3, 2])
            })
        }),
    ]
}

fn small_stgcn() -> EncoderPlan {
    EncoderPlan::Stgcn {
        channels: vec![3, 4, 5],
        strides: vec![1, 2],
        kernel: 3,
        feature: 6,
    }
}

/// Encoders, the projection head and the three losses.
pub fn model_cases() -> Vec<Case> {
    vec![
        ("st-gcn encoder", |s| {
            let mut r = rng(s);
            let plan = if s % 2 == 0 { EncoderPlan::stgcn() } else { small_stgcn() };
            let frames = if s % 2 == 0 { 8 } else { 10 };
            let enc = Encoder::<f64>::init(plan, &mut r).unwrap();
            let mut ins = vec![t(&mut r, &[2, frames, 15, 3])];
            ins.extend(with_random_biases(&enc.params, &mut r));
            let graph = build_adjacency();
            gradcheck_piecewise(s, ins, &move |tp, v| {
                let bound = bind_as(&enc.params, &v[1..]);
                enc.forward(tp, &bound, v[0], &graph)
            })
        }),
        ("mlp encoder", |s| {
            let mut r = rng(s);
            let enc = Encoder::<f64>::init(EncoderPlan::mlp(), &mut r).unwrap();
            let mut ins = vec![t(&mut r, &[2, 50, 15, 3])];
            ins.extend(with_random_biases(&enc.params, &mut r));
            let graph = build_adjacency();
            gradcheck_piecewise(s, ins, &move |tp, v| {
                let bound = bind_as(&enc.params, &v[1..]);
                enc.forward(tp, &bound, v[0], &graph)
            })
        }),
        ("projection head", |s| {
            let mut r = rng(s);
            let head = Projection::<f64>::init(ProjectionPlan::default(), &mut r);
            let mut ins = vec![t(&mut r, &[3, 128])];
            ins.extend(with_random_biases(&head.params, &mut r));
            gradcheck_piecewise(s, ins, &move |tp, v| {
                let bound = bind_as(&head.params, &v[1..]);
                project(tp, &bound, &head.plan, v[0])
            })
        }),
        ("nt-xent", |s| {
            let mut r = rng(s);
            let n = 2 + s as usize % 5;
            let tau = [0.1, 0.5, 1.0][s as usize % 3];
            gradcheck(s, vec![t(&mut r, &[2 * n, 7])], &move |tp, v| nt_xent(tp, v[0], tau))
        }),
        ("mse", |s| {
            let mut r = rng(s);
            gradcheck(s, vec![t(&mut r, &[4, 6]), t(&mut r, &[4, 6])], &|tp, v| mse(tp, v[0], v[1]))
        }),
        ("cross-entropy", |s| {
            let mut r = rng(s);
            let labels: Vec<usize> = (0..5).map(|_| r.random_range(0..4)).collect();
            gradcheck(s, vec![random_tensor(&mut r, &[5, 4], -2.0, 2.0)], &move |tp, v| {
                cross_entropy(tp, v[0], &labels)
            })
        }),
    ]
}

/// A [`skelrep_core::nn::Bound`] whose variables are the given leaves, in
/// parameter order.
fn bind_as(params: &skelrep_core::nn::ParamSet<f64>, vars: &[Var]) -> skelrep_core::nn::Bound {
    let mut scratch = Tape::<f64>::new();
    let mut bound = params.bind(&mut scratch, true);
    bound.vars = vars.to_vec();
    bound
}

/// Direct O((2N)²) NT-Xent over rows of `z`, written from the definition:
/// cosine similarities over τ, positives at i xor 1, all j ≠ i in the
/// denominator.
pub fn brute_nt_xent(z: &[Vec<f64>], tau: f64) -> f64 {
    let m = z.len();
    let norm = |v: &Vec<f64>| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cos = |a: &Vec<f64>, b: &Vec<f64>| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (norm(a) * norm(b));
    let mut total = 0.0;
    for i in 0..m {
        let pos = i ^ 1;
        let denom: f64 = (0..m).filter(|&j| j != i).map(|j| (cos(&z[i], &z[j]) / tau).exp()).sum();
        total += -((cos(&z[i], &z[pos]) / tau).exp() / denom).ln();
    }
    total / m as f64
}

pub fn nt_xent_value(z: &[Vec<f64>], tau: f64) -> f64 {
    let mut tape = Tape::<f64>::new();
    let flat: Vec<f64> = z.iter().flatten().copied().collect();
    let v = tape.constant(Tensor::new(&[z.len(), z[0].len()], flat).unwrap());
    let l = nt_xent(&mut tape, v, tau).unwrap();
    tape.value(l).data[0]
}


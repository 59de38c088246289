//! Central finite-difference gradient checker shared by the integration
//! suites. It only evaluates forward passes; gradients it reports are
//! independent of the tape's backward rules.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ruledist::autodiff::{AutodiffError, GradBuffer, ParamStore, Tape, Var};
use ruledist::domain::{generate_instance, GeneratorConfig};
use ruledist::env::{RewardConfig, RewardKind};
use ruledist::model::{Actor, Critic, ModelConfig, SelectMode};
use ruledist::trainer::{actor_loss, critic_loss, rollout};

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-3;
pub const ABS_FLOOR: f64 = 1e-6;

/// Passes when the absolute difference is under the floor or the relative
/// difference is under the tolerance.
pub fn agrees(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= ABS_FLOOR || diff / analytic.abs().max(numeric.abs()) <= REL_TOL
}

#[derive(Debug, Default)]
pub struct Report {
    pub checked: usize,
    pub worst_rel: f64,
    pub failures: Vec<String>,
}

impl Report {
    fn record(&mut self, label: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        self.checked += 1;
        let diff = (analytic - numeric).abs();
        if diff > ABS_FLOOR {
            self.worst_rel = self.worst_rel.max(diff / analytic.abs().max(numeric.abs()));
        }
        if !agrees(analytic, numeric) || !analytic.is_finite() {
            self.failures.push(format!("{}: analytic {analytic:e} numeric {numeric:e}", label()));
        }
    }

    pub fn merge(&mut self, other: Report) {
        self.checked += other.checked;
        self.worst_rel = self.worst_rel.max(other.worst_rel);
        self.failures.extend(other.failures);
    }

    pub fn ok(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }
}

pub fn central<F: FnMut(f64) -> f64>(x: f64, mut f: F) -> f64 {
    (f(x + STEP) - f(x - STEP)) / (2.0 * STEP)
}

pub struct Input {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Input {
    pub fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        Input {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    /// Values bounded away from zero, for ops with a kink or pole there.
    pub fn away_from_zero(rows: usize, cols: usize, lo: f64, rng: &mut ChaCha8Rng) -> Self {
        Input {
            rows,
            cols,
            data: (0..rows * cols)
                .map(|_| {
                    let m = rng.gen_range(lo..1.0);
                    if rng.gen_bool(0.5) { m } else { -m }
                })
                .collect(),
        }
    }

    pub fn positive(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        Input {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.gen_range(0.2..2.0)).collect(),
        }
    }
}

pub type Build = dyn for<'p> Fn(&mut Tape<'p, f64>, &[Var]) -> Result<Var, AutodiffError>;

/// Projects the op output onto fixed random weights so any output shape
/// yields a scalar loss, then compares d loss / d input.
pub fn check_op(name: &str, inputs: &[Input], build: &Build, seed: u64) -> Result<Report, AutodiffError> {
    let loss = |data: &[Vec<f64>], grads: bool| -> Result<(f64, Vec<Vec<f64>>), AutodiffError> {
        let mut tape = Tape::<f64>::new();
        let vars = inputs
            .iter()
            .zip(data)
            .map(|(i, d)| tape.input(i.rows, i.cols, d.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let out = build(&mut tape, &vars)?;
        let (r, c) = tape.dims(out);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
        let weights: Vec<f64> = (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = tape.constant(r, c, weights)?;
        let prod = tape.mul(out, w)?;
        let total = tape.sum(prod);
        let value = tape.scalar(total);
        if !grads {
            return Ok((value, Vec::new()));
        }
        let g = tape.backward(total)?;
        let per_input = vars
            .iter()
            .zip(inputs)
            .map(|(v, i)| g.wrt(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; i.data.len()]))
            .collect();
        Ok((value, per_input))
    };

    let base: Vec<Vec<f64>> = inputs.iter().map(|i| i.data.clone()).collect();
    let (_, analytic) = loss(&base, true)?;
    let mut report = Report::default();
    for (k, input) in inputs.iter().enumerate() {
        for j in 0..input.data.len() {
            let mut probe = base.clone();
            let numeric = central(base[k][j], |x| {
                probe[k][j] = x;
                loss(&probe, false).map(|(v, _)| v).unwrap_or(f64::NAN)
            });
            report.record(|| format!("{name} input {k}[{j}]"), analytic[k][j], numeric);
        }
    }
    Ok(report)
}

/// Compares parameter gradients against finite differences of `loss`,
/// probing up to `per_tensor` coordinates of every parameter tensor.
pub fn check_params<M>(
    model: &mut M,
    store: fn(&mut M) -> &mut ParamStore<f64>,
    analytic: &GradBuffer<f64>,
    per_tensor: usize,
    seed: u64,
    loss: impl Fn(&M) -> f64,
) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = Report::default();
    let ids: Vec<_> = store(model).ids().collect();
    for id in ids {
        let len = store(model).get(id).len();
        let name = store(model).name(id).to_string();
        let coords: Vec<usize> = if len <= per_tensor {
            (0..len).collect()
        } else {
            rand::seq::index::sample(&mut rng, len, per_tensor).into_vec()
        };
        for j in coords {
            let original = store(model).get(id).data()[j];
            let numeric = central(original, |x| {
                store(model).get_mut(id).data_mut()[j] = x;
                loss(&*model)
            });
            store(model).get_mut(id).data_mut()[j] = original;
            report.record(|| format!("{name}[{j}]"), analytic.get(id)[j], numeric);
        }
    }
    report
}

pub struct Case {
    pub name: &'static str,
    pub inputs: Vec<Input>,
    pub build: Box<Build>,
}

fn case(name: &'static str, inputs: Vec<Input>, build: impl for<'p> Fn(&mut Tape<'p, f64>, &[Var]) -> Result<Var, AutodiffError> + 'static) -> Case {
    Case {
        name,
        inputs,
        build: Box::new(build),
    }
}

/// One case per differentiable tape operation, with inputs drawn from `rng`.
pub fn primitive_cases(rng: &mut ChaCha8Rng) -> Vec<Case> {
    let r = |rows, cols, rng: &mut ChaCha8Rng| Input::random(rows, cols, rng);
    let mask = vec![true, false, true, true, false];
    let mask2 = mask.clone();
    let mask3 = mask.clone();
    vec![
        case("matmul", vec![r(3, 4, rng), r(4, 2, rng)], |t, v| t.matmul(v[0], v[1])),
        case("matmul_t", vec![r(3, 4, rng), r(5, 4, rng)], |t, v| t.matmul_t(v[0], v[1])),
        case("add", vec![r(2, 3, rng), r(2, 3, rng)], |t, v| t.add(v[0], v[1])),
        case("add_row", vec![r(3, 4, rng), r(1, 4, rng)], |t, v| t.add_row(v[0], v[1])),
        case("sub", vec![r(2, 3, rng), r(2, 3, rng)], |t, v| t.sub(v[0], v[1])),
        case("mul", vec![r(2, 3, rng), r(2, 3, rng)], |t, v| t.mul(v[0], v[1])),
        case("mul_self", vec![r(2, 3, rng)], |t, v| t.mul(v[0], v[0])),
        case("scale", vec![r(2, 3, rng)], |t, v| Ok(t.scale(v[0], -1.7))),
        case("tanh", vec![r(3, 3, rng)], |t, v| Ok(t.tanh(v[0]))),
        case("relu", vec![Input::away_from_zero(3, 3, 0.05, rng)], |t, v| Ok(t.relu(v[0]))),
        case("log", vec![Input::positive(2, 3, rng)], |t, v| Ok(t.log(v[0]))),
        case("sum", vec![r(2, 3, rng)], |t, v| Ok(t.sum(v[0]))),
        case("mean", vec![r(2, 3, rng)], |t, v| Ok(t.mean(v[0]))),
        case("mean_rows", vec![r(4, 3, rng)], |t, v| Ok(t.mean_rows(v[0]))),
        case("transpose", vec![r(2, 5, rng)], |t, v| Ok(t.transpose(v[0]))),
        case("reshape", vec![r(2, 6, rng)], |t, v| t.reshape(v[0], 4, 3)),
        case("concat_rows", vec![r(1, 3, rng), r(2, 3, rng)], |t, v| t.concat_rows(&[v[0], v[1], v[0]])),
        case("concat_cols", vec![r(2, 1, rng), r(2, 3, rng)], |t, v| t.concat_cols(&[v[1], v[0]])),
        case("narrow_cols", vec![r(3, 6, rng)], |t, v| t.narrow_cols(v[0], 2, 3)),
        case("narrow_rows", vec![r(5, 2, rng)], |t, v| t.narrow_rows(v[0], 1, 3)),
        case("gather_rows", vec![r(4, 3, rng)], |t, v| t.gather_rows(v[0], &[3, 0, 3])),
        case("layer_norm", vec![r(3, 5, rng), r(1, 5, rng), r(1, 5, rng)], |t, v| t.layer_norm(v[0], v[1], v[2])),
        case("masked_softmax", vec![r(1, 5, rng)], move |t, v| t.masked_softmax(v[0], &mask)),
        case("masked_log_softmax", vec![r(1, 5, rng)], move |t, v| t.masked_log_softmax(v[0], &mask2)),
        // tanh keeps the -1e9 sentinel from swamping the projected loss.
        case("mask_fill", vec![r(1, 5, rng)], move |t, v| {
            let filled = t.mask_fill(v[0], &mask3)?;
            Ok(t.tanh(filled))
        }),
        case("pick", vec![r(1, 5, rng)], |t, v| t.pick(v[0], 3)),
        case("attention_chain", vec![r(3, 4, rng), r(4, 4, rng)], |t, v| {
            let q = t.matmul(v[0], v[1])?;
            let s = t.matmul_t(q, v[0])?;
            let a = t.tanh(s);
            let picked = t.narrow_rows(a, 0, 1)?;
            t.masked_softmax(picked, &[true, true, true])
        }),
    ]
}

/// Reduced network used for the full-loss checks; small enough that
/// probing many coordinates stays cheap.
pub fn tiny_model() -> ModelConfig {
    ModelConfig {
        embed_dim: 8,
        num_heads: 2,
        actor_ffn_dim: 8,
        critic_ffn_dim: 8,
        critic_head_dim: 4,
        ..ModelConfig::desk()
    }
}

/// Actor-loss gradient check on a 2-node, 3-rule instance: the episode is
/// rolled out once, then the loss with fixed actions and advantages is
/// differentiated both ways.
pub fn actor_loss_report(seed: u64, per_tensor: usize) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instance = generate_instance(&GeneratorConfig::sized(2, 3), seed).expect("valid generator");
    let mut actor = Actor::<f64>::new(tiny_model(), seed).expect("valid model");
    let critic = Critic::<f64>::new(tiny_model(), seed + 1).expect("valid model");
    let transitions = rollout(&instance, &actor, &critic, RewardKind::Greedy, &RewardConfig::default(), SelectMode::Stochastic, &mut rng)
        .expect("rollout");
    let advantages: Vec<f64> = transitions.iter().map(|_| rng.gen_range(-2.0..2.0)).collect();

    let value = |a: &Actor<f64>| {
        let mut tape = Tape::new();
        let l = actor_loss(&mut tape, a, &transitions, &advantages, 0.01, 1).expect("loss");
        tape.scalar(l)
    };
    let mut grads = GradBuffer::zeros_like(actor.params());
    {
        let mut tape = Tape::new();
        let l = actor_loss(&mut tape, &actor, &transitions, &advantages, 0.01, 1).expect("loss");
        tape.backward(l).expect("backward").accumulate_params(&mut grads);
    }
    check_params(&mut actor, |a| a.params_mut(), &grads, per_tensor, seed, value)
}

/// Same check for the critic's squared-error loss against random targets.
pub fn critic_loss_report(seed: u64, per_tensor: usize) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instance = generate_instance(&GeneratorConfig::sized(2, 3), seed).expect("valid generator");
    let actor = Actor::<f64>::new(tiny_model(), seed).expect("valid model");
    let mut critic = Critic::<f64>::new(tiny_model(), seed + 1).expect("valid model");
    let transitions = rollout(&instance, &actor, &critic, RewardKind::Greedy, &RewardConfig::default(), SelectMode::Stochastic, &mut rng)
        .expect("rollout");
    let targets: Vec<f64> = transitions.iter().map(|_| rng.gen_range(-2.0..2.0)).collect();

    let value = |c: &Critic<f64>| {
        let mut tape = Tape::new();
        let l = critic_loss(&mut tape, c, &transitions, &targets, transitions.len()).expect("loss");
        tape.scalar(l)
    };
    let mut grads = GradBuffer::zeros_like(critic.params());
    {
        let mut tape = Tape::new();
        let l = critic_loss(&mut tape, &critic, &transitions, &targets, transitions.len()).expect("loss");
        tape.backward(l).expect("backward").accumulate_params(&mut grads);
    }
    check_params(&mut critic, |c| c.params_mut(), &grads, per_tensor, seed, value)
}

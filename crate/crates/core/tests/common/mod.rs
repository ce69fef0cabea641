#![allow(dead_code)]

use boxtm::diffcore::{Matrix, Tape, Var};
use boxtm::model::{BoxParams, ModelConfig, ModelState, WORD_SLOT};
use boxtm::train::{batch_loss, loss_and_grads, BatchInputs, LossWeights};
use boxtm::BoxAlgebraConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Matrix {
    Matrix::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
}

/// Relative error with a small floor so that gradients near zero are
/// compared absolutely.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Builds `Σ out ∘ R` for a random fixed `R` and compares its tape gradient
/// with central differences in every input entry. Returns the worst
/// relative error.
pub fn check_op(inputs: &[Matrix], build: &dyn Fn(&mut Tape, &[Var]) -> Var, seed: u64) -> f64 {
    let weights = {
        let mut t = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|m| t.constant(m.clone())).collect();
        let out = build(&mut t, &vars);
        let (r, c) = t.value(out).dim();
        uniform(r, c, -1.0, 1.0, &mut rng(seed))
    };
    let eval = |xs: &[Matrix]| -> (f64, Option<(Tape, Var, Vec<Var>)>) {
        let mut t = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|m| t.param(m.clone())).collect();
        let out = build(&mut t, &vars);
        let w = t.constant(weights.clone());
        let prod = t.mul(out, w).expect("weight shape");
        let loss = t.reduce_sum(prod);
        (t.scalar(loss), Some((t, loss, vars)))
    };
    let (_, built) = eval(inputs);
    let (tape, loss, vars) = built.expect("graph");
    let mut grads = tape.backward(loss).expect("backward");
    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let g = grads.take(*v).unwrap_or_else(|| Matrix::zeros(inputs[k].dim()));
        for idx in 0..inputs[k].len() {
            let (r, c) = (idx / inputs[k].ncols(), idx % inputs[k].ncols());
            let mut plus = inputs.to_vec();
            plus[k][[r, c]] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k][[r, c]] -= FD_STEP;
            let numeric = (eval(&plus).0 - eval(&minus).0) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(g[[r, c]], numeric));
        }
    }
    worst
}

/// Toy instance: 5 documents, 10 words, D = 4, 3 leaf topics under 2 upper
/// topics.
pub fn toy_problem(seed: u64) -> (ModelState, BatchInputs, LossWeights) {
    let mut r = rng(seed);
    let config = ModelConfig {
        vocab_size: 10,
        hidden: 8,
        latent: 3,
        leaf_topics: 3,
        depth: 2,
        boxes: BoxAlgebraConfig {
            dim: 4,
            ..Default::default()
        },
        cv_eps: 1e-10,
    };
    let mut state = ModelState::init(config, seed).expect("toy config");
    let upper = BoxParams {
        min: uniform(2, 4, -1.0, 0.0, &mut r),
        size: uniform(2, 4, 0.0, 1.0, &mut r),
    };
    state.set_upper_levels(vec![upper], vec![vec![0, 1, 0]]);
    let counts = Matrix::from_shape_fn((5, 10), |_| r.random_range(0..4) as f64);
    let tfidf = counts.mapv(|c| c * 0.7);
    let noise = uniform(5, 3, -1.0, 1.0, &mut r);
    let co_pairs = (0..6)
        .map(|_| (r.random_range(0..10), r.random_range(0..10), r.random_range(0.05..1.0)))
        .collect();
    let inputs = BatchInputs {
        tfidf,
        counts,
        noise,
        co_pairs,
    };
    let weights = LossWeights {
        alpha: 3.0,
        beta: 0.5,
        margin: 10.0,
    };
    (state, inputs, weights)
}

type Maker = Box<dyn Fn(&mut ChaCha8Rng) -> Vec<Matrix>>;
type Builder = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;

/// One differentiable op with an input generator.
pub struct OpCase {
    pub name: &'static str,
    pub make: Maker,
    pub build: Builder,
}

impl OpCase {
    /// Worst relative error over `instances` random inputs.
    pub fn worst_error(&self, instances: u64) -> f64 {
        (0..instances)
            .map(|i| {
                let inputs = (self.make)(&mut rng(1000 + i));
                check_op(&inputs, &*self.build, i)
            })
            .fold(0.0, f64::max)
    }
}

fn case(
    name: &'static str,
    make: impl Fn(&mut ChaCha8Rng) -> Vec<Matrix> + 'static,
    build: impl Fn(&mut Tape, &[Var]) -> Var + 'static,
) -> OpCase {
    OpCase {
        name,
        make: Box::new(make),
        build: Box::new(build),
    }
}

fn m(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    uniform(rows, cols, -2.0, 2.0, r)
}

fn pos(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    uniform(rows, cols, 0.2, 2.0, r)
}

/// Values bounded away from zero, for ops with a kink there.
fn off_zero(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_shape_fn((rows, cols), |_| {
        let v: f64 = r.random_range(0.05..2.0);
        if r.random::<bool>() {
            v
        } else {
            -v
        }
    })
}

fn corners(r: &mut ChaCha8Rng, n: usize) -> Vec<Matrix> {
    let lo = uniform(n, 3, 0.0, 0.6, r);
    let hi = &lo + &uniform(n, 3, -0.1, 0.4, r);
    vec![lo, hi]
}

/// Every tape op.
pub fn op_cases() -> Vec<OpCase> {
    vec![
        case("affine", |r| vec![m(r, 3, 4), m(r, 4, 2), m(r, 1, 2)], |t, v| {
            t.affine(v[0], v[1], v[2]).unwrap()
        }),
        case("matmul", |r| vec![m(r, 2, 3), m(r, 3, 4)], |t, v| t.matmul(v[0], v[1]).unwrap()),
        case("transpose", |r| vec![m(r, 2, 3)], |t, v| t.transpose(v[0])),
        case("add", |r| vec![m(r, 2, 3), m(r, 2, 3)], |t, v| t.add(v[0], v[1]).unwrap()),
        case("sub", |r| vec![m(r, 2, 3), m(r, 2, 3)], |t, v| t.sub(v[0], v[1]).unwrap()),
        case("mul", |r| vec![m(r, 2, 3), m(r, 2, 3)], |t, v| t.mul(v[0], v[1]).unwrap()),
        case("scale", |r| vec![m(r, 2, 3)], |t, v| t.scale(v[0], -1.7)),
        case("add_scalar", |r| vec![m(r, 2, 3)], |t, v| t.add_scalar(v[0], 0.3)),
        case("add_row", |r| vec![m(r, 3, 2), m(r, 1, 2)], |t, v| t.add_row(v[0], v[1]).unwrap()),
        case("add_col", |r| vec![m(r, 3, 2), m(r, 3, 1)], |t, v| t.add_col(v[0], v[1]).unwrap()),
        case("mul_row", |r| vec![m(r, 3, 2), m(r, 1, 2)], |t, v| t.mul_row(v[0], v[1]).unwrap()),
        case("relu", |r| vec![off_zero(r, 2, 3)], |t, v| t.relu(v[0])),
        case("softplus", |r| vec![m(r, 2, 3)], |t, v| t.softplus(v[0])),
        case("sigmoid", |r| vec![m(r, 2, 3)], |t, v| t.sigmoid(v[0])),
        case("exp", |r| vec![m(r, 2, 3)], |t, v| t.exp(v[0])),
        case("log", |r| vec![pos(r, 2, 3)], |t, v| t.log(v[0], 1e-10)),
        case("row_softmax", |r| vec![m(r, 3, 4)], |t, v| t.row_softmax(v[0])),
        case("logsumexp", |r| vec![m(r, 3, 4)], |t, v| t.logsumexp(v[0])),
        case("reduce_sum", |r| vec![m(r, 3, 4)], |t, v| t.reduce_sum(v[0])),
        case("mean", |r| vec![m(r, 3, 4)], |t, v| t.mean(v[0])),
        case("column_cv", |r| vec![pos(r, 4, 3)], |t, v| t.column_cv(v[0], 1e-10)),
        case("row_l2_normalize", |r| vec![m(r, 3, 4)], |t, v| t.row_l2_normalize(v[0])),
        case("row_sum_normalize", |r| vec![pos(r, 3, 4)], |t, v| t.row_sum_normalize(v[0])),
        case("gaussian_sample", |r| vec![m(r, 2, 3), pos(r, 2, 3)], |t, v| {
            let noise = Matrix::from_shape_fn((2, 3), |(i, j)| (i as f64 - 0.5) * (j as f64 + 0.3));
            t.gaussian_sample(v[0], v[1], noise).unwrap()
        }),
        case("gather_rows", |r| vec![m(r, 4, 3)], |t, v| {
            t.gather_rows(v[0], &[2, 0, 2, 3]).unwrap()
        }),
        case("smooth_max", |r| vec![m(r, 2, 3), m(r, 2, 3)], |t, v| {
            t.smooth_max(v[0], v[1], 0.3).unwrap()
        }),
        case("smooth_min", |r| vec![m(r, 2, 3), m(r, 2, 3)], |t, v| {
            t.smooth_min(v[0], v[1], 0.3).unwrap()
        }),
        case("box_log_volume", |r| corners(r, 3), |t, v| {
            t.box_log_volume(v[0], v[1], 0.1).unwrap()
        }),
        case(
            "pairwise_intersect_log_volume",
            |r| {
                let mut a = corners(r, 3);
                a.extend(corners(r, 2));
                a
            },
            |t, v| {
                t.pairwise_intersect_log_volume(v[0], v[1], v[2], v[3], 0.2, 0.1)
                    .unwrap()
            },
        ),
    ]
}

/// Compares the gradient of the full training loss on the toy instance with
/// central differences: every box parameter plus three sampled entries of
/// each encoder matrix. Returns `(entries checked, worst relative error)`.
pub fn composite_loss_error(seed: u64) -> (usize, f64) {
    let (state, inputs, w) = toy_problem(seed);
    let (_, grads) = loss_and_grads(&state, &inputs, &w).unwrap();
    let mut r = rng(seed);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for slot in 0..state.params().len() {
        let (len, cols) = (state.params()[slot].len(), state.params()[slot].ncols());
        let picks: Vec<usize> = if slot >= WORD_SLOT {
            (0..len).collect()
        } else {
            (0..3).map(|_| r.random_range(0..len)).collect()
        };
        for idx in picks {
            let (i, j) = (idx / cols, idx % cols);
            let mut plus = state.clone();
            let mut minus = state.clone();
            plus.params_mut()[slot][[i, j]] += FD_STEP;
            minus.params_mut()[slot][[i, j]] -= FD_STEP;
            let numeric = (batch_loss(&plus, &inputs, &w).unwrap().total
                - batch_loss(&minus, &inputs, &w).unwrap().total)
                / (2.0 * FD_STEP);
            let analytic = grads[slot].as_ref().map_or(0.0, |g| g[[i, j]]);
            worst = worst.max(rel_err(analytic, numeric));
            checked += 1;
        }
    }
    (checked, worst)
}

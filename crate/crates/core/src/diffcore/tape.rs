use ndarray::{Array2, Axis, Zip};

use super::Matrix;
use crate::boxalg::{log_side, log_side_grad, smooth_max, smooth_min};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Var },
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    AddRow(Var, Var),
    AddCol(Var, Var),
    MulRow(Var, Var),
    Relu(Var),
    Softplus(Var),
    Sigmoid(Var),
    Exp(Var),
    Log { x: Var, eps: f64 },
    RowSoftmax(Var),
    RowLogSumExp(Var),
    ReduceSum(Var),
    Transpose(Var),
    GaussianSample { mu: Var, sigma: Var, noise: Matrix },
    GatherRows { x: Var, idx: Vec<usize> },
    SmoothMax { a: Var, b: Var, t: f64 },
    SmoothMin { a: Var, b: Var, t: f64 },
    BoxLogVolume { lo: Var, hi: Var, vol_temp: f64 },
    PairwiseIntersectLogVolume {
        a_lo: Var,
        a_hi: Var,
        b_lo: Var,
        b_hi: Var,
        int_temp: f64,
        vol_temp: f64,
    },
    ColumnCv { x: Var },
    RowL2Normalize(Var),
    RowSumNormalize(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Recorded computation graph.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    log_clamps: usize,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or `None` if `v` did not influence the loss.
    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn shape(m: &Matrix) -> (usize, usize) {
    m.dim()
}

fn same_shape(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.dim() == b.dim() {
        Ok(())
    } else {
        Err(Error::Shape {
            op,
            lhs: shape(a),
            rhs: shape(b),
        })
    }
}

fn softplus_elem(x: f64) -> f64 {
    crate::boxalg::softplus(x)
}

fn sigmoid_elem(x: f64) -> f64 {
    crate::boxalg::sigmoid(x)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of `log` inputs that had to be clamped at the floor.
    pub fn log_clamp_count(&self) -> usize {
        self.log_clamps
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    // --- linear algebra -----------------------------------------------------

    /// `x · w + b`, with `b` a `1 × out` row broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.ncols() != wv.nrows() {
            return Err(Error::Shape {
                op: "affine",
                lhs: shape(xv),
                rhs: shape(wv),
            });
        }
        if bv.nrows() != 1 || bv.ncols() != wv.ncols() {
            return Err(Error::Shape {
                op: "affine bias",
                lhs: shape(wv),
                rhs: shape(bv),
            });
        }
        let out = xv.dot(wv) + bv;
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        Ok(self.push(out, Op::Affine { x, w, b }, ng))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.ncols() != bv.nrows() {
            return Err(Error::Shape {
                op: "matmul",
                lhs: shape(av),
                rhs: shape(bv),
            });
        }
        let out = av.dot(bv);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).t().to_owned();
        let ng = self.ng(a);
        self.push(out, Op::Transpose(a), ng)
    }

    // --- elementwise --------------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let out = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("sub", self.value(a), self.value(b))?;
        let out = self.value(a) - self.value(b);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.value(a), self.value(b))?;
        let out = self.value(a) * self.value(b);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) * c;
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, c), ng)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) + c;
        let ng = self.ng(a);
        self.push(out, Op::AddScalar(a), ng)
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.nrows() != 1 || rv.ncols() != av.ncols() {
            return Err(Error::Shape {
                op: "add_row",
                lhs: shape(av),
                rhs: shape(rv),
            });
        }
        let out = av + rv;
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(out, Op::AddRow(a, row), ng))
    }

    /// Adds an `m × 1` column to every column of `a`.
    pub fn add_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (av, cv) = (self.value(a), self.value(col));
        if cv.ncols() != 1 || cv.nrows() != av.nrows() {
            return Err(Error::Shape {
                op: "add_col",
                lhs: shape(av),
                rhs: shape(cv),
            });
        }
        let out = av + cv;
        let ng = self.ng(a) || self.ng(col);
        Ok(self.push(out, Op::AddCol(a, col), ng))
    }

    /// Multiplies every row of `a` elementwise by a `1 × n` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.nrows() != 1 || rv.ncols() != av.ncols() {
            return Err(Error::Shape {
                op: "mul_row",
                lhs: shape(av),
                rhs: shape(rv),
            });
        }
        let out = av * rv;
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(out, Op::MulRow(a, row), ng))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x.max(0.0));
        let ng = self.ng(a);
        self.push(out, Op::Relu(a), ng)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(softplus_elem);
        let ng = self.ng(a);
        self.push(out, Op::Softplus(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(sigmoid_elem);
        let ng = self.ng(a);
        self.push(out, Op::Sigmoid(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::exp);
        let ng = self.ng(a);
        self.push(out, Op::Exp(a), ng)
    }

    /// Natural log with inputs below `eps` clamped to `eps`; clamped entries
    /// get zero gradient and bump [`Tape::log_clamp_count`].
    pub fn log(&mut self, a: Var, eps: f64) -> Var {
        let mut clamps = 0;
        let out = self.value(a).mapv(|x| {
            if x < eps {
                clamps += 1;
                eps.ln()
            } else {
                x.ln()
            }
        });
        if clamps > 0 {
            log::debug!("log clamped {clamps} entries at {eps:e}");
        }
        self.log_clamps += clamps;
        let ng = self.ng(a);
        self.push(out, Op::Log { x: a, eps }, ng)
    }

    // --- reductions and normalizations ---------------------------------------

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for mut row in out.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
            row.mapv_inplace(|x| (x - m).exp());
            let s = row.sum();
            row.mapv_inplace(|x| x / s);
        }
        let ng = self.ng(a);
        self.push(out, Op::RowSoftmax(a), ng)
    }

    /// Row-wise log-sum-exp, producing an `m × 1` column.
    pub fn logsumexp(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut out = Matrix::zeros((av.nrows(), 1));
        for (i, row) in av.rows().into_iter().enumerate() {
            let m = row.fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
            out[[i, 0]] = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        }
        let ng = self.ng(a);
        self.push(out, Op::RowLogSumExp(a), ng)
    }

    /// Sum of all entries as a `1 × 1` node.
    pub fn reduce_sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let ng = self.ng(a);
        self.push(Matrix::from_elem((1, 1), s), Op::ReduceSum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.reduce_sum(a);
        self.scale(s, 1.0 / n)
    }

    /// `mu + noise ∘ sigma` with externally drawn noise.
    pub fn gaussian_sample(&mut self, mu: Var, sigma: Var, noise: Matrix) -> Result<Var> {
        same_shape("gaussian_sample", self.value(mu), self.value(sigma))?;
        same_shape("gaussian_sample noise", self.value(mu), &noise)?;
        let out = self.value(mu) + &(&noise * self.value(sigma));
        let ng = self.ng(mu) || self.ng(sigma);
        Ok(self.push(out, Op::GaussianSample { mu, sigma, noise }, ng))
    }

    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= xv.nrows()) {
            return Err(Error::Precondition(format!(
                "gather index {bad} out of range for {} rows",
                xv.nrows()
            )));
        }
        let out = xv.select(Axis(0), idx);
        let ng = self.ng(x);
        Ok(self.push(
            out,
            Op::GatherRows {
                x,
                idx: idx.to_vec(),
            },
            ng,
        ))
    }

    /// Per-column `population std / mean`, plus `eps`, as a `1 × n` row.
    pub fn column_cv(&mut self, x: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.dim();
        let mut out = Matrix::zeros((1, cols));
        for j in 0..cols {
            let col = xv.column(j);
            let mean = col.sum() / rows as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows as f64;
            out[[0, j]] = if mean > 0.0 { var.sqrt() / mean } else { 0.0 } + eps;
        }
        let ng = self.ng(x);
        self.push(out, Op::ColumnCv { x }, ng)
    }

    /// Divides each row by its Euclidean norm.
    pub fn row_l2_normalize(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for mut row in out.rows_mut() {
            let n = row.dot(&row).sqrt().max(1e-300);
            row.mapv_inplace(|x| x / n);
        }
        let ng = self.ng(a);
        self.push(out, Op::RowL2Normalize(a), ng)
    }

    /// Divides each row by its sum.
    pub fn row_sum_normalize(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for mut row in out.rows_mut() {
            let s = row.sum();
            row.mapv_inplace(|x| x / s);
        }
        let ng = self.ng(a);
        self.push(out, Op::RowSumNormalize(a), ng)
    }

    // --- box kernels ----------------------------------------------------------

    pub fn smooth_max(&mut self, a: Var, b: Var, t: f64) -> Result<Var> {
        same_shape("smooth_max", self.value(a), self.value(b))?;
        let out = Zip::from(self.value(a))
            .and(self.value(b))
            .map_collect(|&x, &y| smooth_max(x, y, t).0);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::SmoothMax { a, b, t }, ng))
    }

    pub fn smooth_min(&mut self, a: Var, b: Var, t: f64) -> Result<Var> {
        same_shape("smooth_min", self.value(a), self.value(b))?;
        let out = Zip::from(self.value(a))
            .and(self.value(b))
            .map_collect(|&x, &y| smooth_min(x, y, t).0);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::SmoothMin { a, b, t }, ng))
    }

    /// Per-row log-volume of boxes given as `n × D` corner matrices; `n × 1`.
    pub fn box_log_volume(&mut self, lo: Var, hi: Var, vol_temp: f64) -> Result<Var> {
        same_shape("box_log_volume", self.value(lo), self.value(hi))?;
        let (l, h) = (self.value(lo), self.value(hi));
        let mut out = Matrix::zeros((l.nrows(), 1));
        for i in 0..l.nrows() {
            out[[i, 0]] = l
                .row(i)
                .iter()
                .zip(h.row(i))
                .map(|(a, b)| log_side(b - a, vol_temp))
                .sum();
        }
        let ng = self.ng(lo) || self.ng(hi);
        Ok(self.push(out, Op::BoxLogVolume { lo, hi, vol_temp }, ng))
    }

    /// `out[i][j]` = log-volume of the smooth intersection of box `i` of the
    /// first set with box `j` of the second.
    pub fn pairwise_intersect_log_volume(
        &mut self,
        a_lo: Var,
        a_hi: Var,
        b_lo: Var,
        b_hi: Var,
        int_temp: f64,
        vol_temp: f64,
    ) -> Result<Var> {
        same_shape("pairwise a", self.value(a_lo), self.value(a_hi))?;
        same_shape("pairwise b", self.value(b_lo), self.value(b_hi))?;
        let (al, ah, bl, bh) = (
            self.value(a_lo),
            self.value(a_hi),
            self.value(b_lo),
            self.value(b_hi),
        );
        if al.ncols() != bl.ncols() {
            return Err(Error::Shape {
                op: "pairwise",
                lhs: shape(al),
                rhs: shape(bl),
            });
        }
        let (n, m, d) = (al.nrows(), bl.nrows(), al.ncols());
        let mut out = Matrix::zeros((n, m));
        for i in 0..n {
            let (ali, ahi) = (al.row(i), ah.row(i));
            for j in 0..m {
                let (blj, bhj) = (bl.row(j), bh.row(j));
                let mut acc = 0.0;
                for k in 0..d {
                    let lo = smooth_max(ali[k], blj[k], int_temp).0;
                    let hi = smooth_min(ahi[k], bhj[k], int_temp).0;
                    acc += log_side(hi - lo, vol_temp);
                }
                out[[i, j]] = acc;
            }
        }
        let ng = self.ng(a_lo) || self.ng(a_hi) || self.ng(b_lo) || self.ng(b_hi);
        Ok(self.push(
            out,
            Op::PairwiseIntersectLogVolume {
                a_lo,
                a_hi,
                b_lo,
                b_hi,
                int_temp,
                vol_temp,
            },
            ng,
        ))
    }

    // --- backward -----------------------------------------------------------------

    /// Reverse pass from a `1 × 1` loss node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.dim() != (1, 1) {
            return Err(Error::Precondition(format!(
                "backward needs a scalar loss, got {:?}",
                lv.dim()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::ones((1, 1)));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let mut acc = |v: Var, delta: Matrix| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &delta,
                slot @ None => *slot = Some(delta),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        let ng = |v: Var| self.nodes[v.0].needs_grad;
        let y = &node.value;

        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                if ng(*x) {
                    acc(*x, g.dot(&val(*w).t()));
                }
                if ng(*w) {
                    acc(*w, val(*x).t().dot(g));
                }
                if ng(*b) {
                    acc(*b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::MatMul(a, b) => {
                if ng(*a) {
                    acc(*a, g.dot(&val(*b).t()));
                }
                if ng(*b) {
                    acc(*b, val(*a).t().dot(g));
                }
            }
            Op::Transpose(a) => acc(*a, g.t().to_owned()),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, -g);
            }
            Op::Mul(a, b) => {
                if ng(*a) {
                    acc(*a, g * val(*b));
                }
                if ng(*b) {
                    acc(*b, g * val(*a));
                }
            }
            Op::Scale(a, c) => acc(*a, g * *c),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                acc(*row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::AddCol(a, col) => {
                acc(*a, g.clone());
                acc(*col, g.sum_axis(Axis(1)).insert_axis(Axis(1)));
            }
            Op::MulRow(a, row) => {
                if ng(*a) {
                    acc(*a, g * val(*row));
                }
                if ng(*row) {
                    acc(*row, (g * val(*a)).sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::Relu(a) => {
                let d = Zip::from(g)
                    .and(val(*a))
                    .map_collect(|&g, &x| if x > 0.0 { g } else { 0.0 });
                acc(*a, d);
            }
            Op::Softplus(a) => {
                let d = Zip::from(g)
                    .and(val(*a))
                    .map_collect(|&g, &x| g * sigmoid_elem(x));
                acc(*a, d);
            }
            Op::Sigmoid(a) => {
                let d = Zip::from(g).and(y).map_collect(|&g, &s| g * s * (1.0 - s));
                acc(*a, d);
            }
            Op::Exp(a) => acc(*a, g * y),
            Op::Log { x, eps } => {
                let d = Zip::from(g)
                    .and(val(*x))
                    .map_collect(|&g, &v| if v < *eps { 0.0 } else { g / v });
                acc(*x, d);
            }
            Op::RowSoftmax(a) => {
                let mut d = g * y;
                for (mut drow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
                    let s = drow.sum();
                    Zip::from(&mut drow).and(&yrow).for_each(|dv, &yv| *dv -= yv * s);
                }
                acc(*a, d);
            }
            Op::RowLogSumExp(a) => {
                let av = val(*a);
                let mut d = Matrix::zeros(av.dim());
                for i in 0..av.nrows() {
                    let (lse, gi) = (y[[i, 0]], g[[i, 0]]);
                    for j in 0..av.ncols() {
                        d[[i, j]] = gi * (av[[i, j]] - lse).exp();
                    }
                }
                acc(*a, d);
            }
            Op::ReduceSum(a) => acc(*a, Matrix::from_elem(val(*a).dim(), g[[0, 0]])),
            Op::GaussianSample { mu, sigma, noise } => {
                acc(*mu, g.clone());
                if ng(*sigma) {
                    acc(*sigma, g * noise);
                }
            }
            Op::GatherRows { x, idx } => {
                let mut d = Matrix::zeros(val(*x).dim());
                for (r, &i) in idx.iter().enumerate() {
                    let mut row = d.row_mut(i);
                    row += &g.row(r);
                }
                acc(*x, d);
            }
            Op::SmoothMax { a, b, t } | Op::SmoothMin { a, b, t } => {
                let is_max = matches!(node.op, Op::SmoothMax { .. });
                let wa = Zip::from(val(*a)).and(val(*b)).map_collect(|&x, &z| {
                    if is_max {
                        smooth_max(x, z, *t).1
                    } else {
                        smooth_min(x, z, *t).1
                    }
                });
                if ng(*a) {
                    acc(*a, g * &wa);
                }
                if ng(*b) {
                    acc(*b, g * &wa.mapv(|w| 1.0 - w));
                }
            }
            Op::BoxLogVolume { lo, hi, vol_temp } => {
                let (l, h) = (val(*lo), val(*hi));
                let mut dh = Matrix::zeros(l.dim());
                for i in 0..l.nrows() {
                    let gi = g[[i, 0]];
                    for k in 0..l.ncols() {
                        dh[[i, k]] = gi * log_side_grad(h[[i, k]] - l[[i, k]], *vol_temp);
                    }
                }
                acc(*lo, -&dh);
                acc(*hi, dh);
            }
            Op::PairwiseIntersectLogVolume {
                a_lo,
                a_hi,
                b_lo,
                b_hi,
                int_temp,
                vol_temp,
            } => {
                let (al, ah, bl, bh) = (val(*a_lo), val(*a_hi), val(*b_lo), val(*b_hi));
                let (n, m, d) = (al.nrows(), bl.nrows(), al.ncols());
                let mut dal = Matrix::zeros((n, d));
                let mut dah = Matrix::zeros((n, d));
                let mut dbl = Matrix::zeros((m, d));
                let mut dbh = Matrix::zeros((m, d));
                for i in 0..n {
                    for j in 0..m {
                        let gij = g[[i, j]];
                        if gij == 0.0 {
                            continue;
                        }
                        for k in 0..d {
                            let (lo, wl) = smooth_max(al[[i, k]], bl[[j, k]], *int_temp);
                            let (hi, wh) = smooth_min(ah[[i, k]], bh[[j, k]], *int_temp);
                            let s = gij * log_side_grad(hi - lo, *vol_temp);
                            dah[[i, k]] += s * wh;
                            dbh[[j, k]] += s * (1.0 - wh);
                            dal[[i, k]] -= s * wl;
                            dbl[[j, k]] -= s * (1.0 - wl);
                        }
                    }
                }
                acc(*a_lo, dal);
                acc(*a_hi, dah);
                acc(*b_lo, dbl);
                acc(*b_hi, dbh);
            }
            Op::ColumnCv { x } => {
                let xv = val(*x);
                let (rows, cols) = xv.dim();
                let t = rows as f64;
                let mut d = Matrix::zeros((rows, cols));
                for j in 0..cols {
                    let col = xv.column(j);
                    let mean = col.sum() / t;
                    if mean <= 0.0 {
                        continue;
                    }
                    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t;
                    let sd = var.sqrt();
                    let gj = g[[0, j]];
                    for i in 0..rows {
                        let dsd = if sd > 0.0 { (col[i] - mean) / (t * sd) } else { 0.0 };
                        d[[i, j]] = gj * (dsd / mean - sd / (mean * mean * t));
                    }
                }
                acc(*x, d);
            }
            Op::RowL2Normalize(a) => {
                let av = val(*a);
                let mut d = Matrix::zeros(av.dim());
                for i in 0..av.nrows() {
                    let n = av.row(i).dot(&av.row(i)).sqrt().max(1e-300);
                    let proj = y.row(i).dot(&g.row(i));
                    for j in 0..av.ncols() {
                        d[[i, j]] = (g[[i, j]] - y[[i, j]] * proj) / n;
                    }
                }
                acc(*a, d);
            }
            Op::RowSumNormalize(a) => {
                let av = val(*a);
                let mut d = Matrix::zeros(av.dim());
                for i in 0..av.nrows() {
                    let s = av.row(i).sum();
                    let proj = y.row(i).dot(&g.row(i));
                    for j in 0..av.ncols() {
                        d[[i, j]] = (g[[i, j]] - proj) / s;
                    }
                }
                acc(*a, d);
            }
        }
    }
}

impl Tape {
    /// Convenience for building a `1 × 1` constant.
    pub fn scalar_constant(&mut self, v: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), v))
    }
}

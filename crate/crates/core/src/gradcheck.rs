//! Central finite-difference gradient checker.
//!
//! The analytic gradient comes from [`Graph::backward`] at precision `T`;
//! the numeric side always re-evaluates the same objective in `f64` at the
//! identical (rounded-to-`T`) point, so a 32-bit check measures the 32-bit
//! backward pass rather than 32-bit finite-difference noise.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

/// A scalar-valued function of tensors, evaluable at any precision.
pub trait Objective {
    fn eval<'a, T: Scalar>(&self, g: &mut Graph<'a, T>, inputs: &[Var]) -> Result<Var>;
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (input index, element index) of the worst element.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Relative error with denominator `max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn eval_f64<F: Objective>(f: &F, inputs: &[Tensor2<f64>]) -> Result<f64> {
    let mut g = Graph::<f64>::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant_ref(t)).collect();
    let root = f.eval(&mut g, &vars)?;
    Ok(g.value(root).item())
}

/// How the numeric derivative is estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) − f(x−h)) / 2h`.
    Central,
    /// Richardson extrapolation of two central differences,
    /// `(4·D(h/2) − D(h)) / 3`, which cancels the `h²` error term. Lets `h`
    /// be large enough that round-off stays far below tiny gradients.
    Richardson,
}

/// Checks `backward()` against central finite differences with step `eps`.
pub fn grad_check<T: Scalar, F: Objective>(
    f: &F,
    inputs: &[Tensor2<f64>],
    eps: f64,
) -> Result<GradCheckReport> {
    grad_check_with::<T, F>(f, inputs, eps, Stencil::Central)
}

pub fn grad_check_with<T: Scalar, F: Objective>(
    f: &F,
    inputs: &[Tensor2<f64>],
    eps: f64,
    stencil: Stencil,
) -> Result<GradCheckReport> {
    let typed: Vec<Tensor2<T>> = inputs.iter().map(|t| t.cast::<T>()).collect();
    let mut g = Graph::<T>::new();
    let vars: Vec<Var> = typed.iter().map(|t| g.param_ref(t)).collect();
    let root = f.eval(&mut g, &vars)?;
    let grads = g.backward(root)?;

    let mut point: Vec<Tensor2<f64>> = typed.iter().map(|t| t.cast::<f64>()).collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (i, &v) in vars.iter().enumerate() {
        let analytic = grads.wrt(v);
        for e in 0..point[i].len() {
            let mut central = |h: f64| -> Result<f64> {
                let orig = point[i].data()[e];
                point[i].data_mut()[e] = orig + h;
                let plus = eval_f64(f, &point);
                point[i].data_mut()[e] = orig - h;
                let minus = eval_f64(f, &point);
                point[i].data_mut()[e] = orig;
                Ok((plus? - minus?) / (2.0 * h))
            };
            let numeric = match stencil {
                Stencil::Central => central(eps)?,
                Stencil::Richardson => (4.0 * central(eps / 2.0)? - central(eps)?) / 3.0,
            };
            let a = analytic.data()[e].to_f64().unwrap();
            let err = relative_error(a, numeric);
            if report.checked == 0 || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (i, e);
                report.analytic = a;
                report.numeric = numeric;
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Fixed non-uniform weights so that reductions of an op's output do not
/// hide gradient errors (e.g. softmax rows always sum to one).
fn probe_weights<T: Scalar>(rows: usize, cols: usize) -> Result<Tensor2<T>> {
    let data = (0..rows * cols)
        .map(|i| T::from_f64_lossy((0.7 * i as f64 + 0.3).sin()))
        .collect();
    Tensor2::from_vec(rows, cols, data)
}

fn weighted_sum<T: Scalar>(g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
    let (r, c) = g.value(x).shape();
    let w = g.constant(probe_weights(r, c)?);
    let y = g.hadamard(x, w)?;
    g.sum(y)
}

/// One differentiable op, reduced to a scalar.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpCase {
    MatMul,
    MatMulNt,
    Transpose,
    Add,
    AddRow,
    Scale,
    Hadamard,
    Sigmoid,
    Gelu,
    Softmax,
    SoftmaxCausal,
    LayerNorm,
    SliceCols,
    ConcatCols,
    GatherRows,
    CrossEntropy,
    FrobeniusSq,
    Sum,
}

impl OpCase {
    pub const ALL: [OpCase; 18] = [
        OpCase::MatMul,
        OpCase::MatMulNt,
        OpCase::Transpose,
        OpCase::Add,
        OpCase::AddRow,
        OpCase::Scale,
        OpCase::Hadamard,
        OpCase::Sigmoid,
        OpCase::Gelu,
        OpCase::Softmax,
        OpCase::SoftmaxCausal,
        OpCase::LayerNorm,
        OpCase::SliceCols,
        OpCase::ConcatCols,
        OpCase::GatherRows,
        OpCase::CrossEntropy,
        OpCase::FrobeniusSq,
        OpCase::Sum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpCase::MatMul => "matmul",
            OpCase::MatMulNt => "matmul_nt",
            OpCase::Transpose => "transpose",
            OpCase::Add => "add",
            OpCase::AddRow => "add_row",
            OpCase::Scale => "scale",
            OpCase::Hadamard => "hadamard",
            OpCase::Sigmoid => "sigmoid",
            OpCase::Gelu => "gelu",
            OpCase::Softmax => "softmax_rows",
            OpCase::SoftmaxCausal => "softmax_rows_causal",
            OpCase::LayerNorm => "layer_norm",
            OpCase::SliceCols => "slice_cols",
            OpCase::ConcatCols => "concat_cols",
            OpCase::GatherRows => "gather_rows",
            OpCase::CrossEntropy => "cross_entropy_logits",
            OpCase::FrobeniusSq => "frobenius_sq",
            OpCase::Sum => "sum",
        }
    }

    /// Input shapes and scales.
    fn shapes(self) -> Vec<(usize, usize, f64)> {
        match self {
            OpCase::MatMul => vec![(3, 4, 1.0), (4, 2, 1.0)],
            OpCase::MatMulNt => vec![(3, 4, 1.0), (2, 4, 1.0)],
            OpCase::Add | OpCase::Hadamard => vec![(3, 4, 1.0), (3, 4, 1.0)],
            OpCase::AddRow => vec![(3, 4, 1.0), (1, 4, 1.0)],
            OpCase::Sigmoid | OpCase::Gelu => vec![(3, 4, 2.0)],
            OpCase::Softmax => vec![(3, 5, 1.5)],
            OpCase::SoftmaxCausal => vec![(4, 4, 1.5)],
            OpCase::LayerNorm => vec![(3, 6, 1.0), (1, 6, 1.0), (1, 6, 1.0)],
            OpCase::SliceCols => vec![(3, 6, 1.0)],
            OpCase::ConcatCols => vec![(3, 2, 1.0), (3, 3, 1.0)],
            OpCase::GatherRows => vec![(5, 3, 1.0)],
            OpCase::CrossEntropy => vec![(4, 7, 2.0)],
            OpCase::FrobeniusSq => vec![(3, 3, 1.0)],
            OpCase::Transpose | OpCase::Scale | OpCase::Sum => vec![(3, 4, 1.0)],
        }
    }

    /// Deterministic random inputs for this case.
    pub fn inputs(self, rng: &mut crate::rng::Rng) -> Result<Vec<Tensor2<f64>>> {
        self.shapes()
            .into_iter()
            .map(|(r, c, s)| crate::rng::randn(r, c, s, rng))
            .collect()
    }
}

impl Objective for OpCase {
    fn eval<'a, T: Scalar>(&self, g: &mut Graph<'a, T>, x: &[Var]) -> Result<Var> {
        let y = match self {
            OpCase::MatMul => g.matmul(x[0], x[1])?,
            OpCase::MatMulNt => g.matmul_nt(x[0], x[1])?,
            OpCase::Transpose => g.transpose(x[0])?,
            OpCase::Add => g.add(x[0], x[1])?,
            OpCase::AddRow => g.add_row(x[0], x[1])?,
            OpCase::Scale => g.scale(x[0], T::from_f64_lossy(0.7))?,
            OpCase::Hadamard => g.hadamard(x[0], x[1])?,
            OpCase::Sigmoid => g.sigmoid(x[0])?,
            OpCase::Gelu => g.gelu(x[0])?,
            OpCase::Softmax => g.softmax_rows(x[0])?,
            OpCase::SoftmaxCausal => g.softmax_rows_causal(x[0])?,
            OpCase::LayerNorm => g.layer_norm(x[0], x[1], x[2], 1e-5)?,
            OpCase::SliceCols => g.slice_cols(x[0], 2, 3)?,
            OpCase::ConcatCols => g.concat_cols(&[x[0], x[1]])?,
            OpCase::GatherRows => g.gather_rows(x[0], &[4, 0, 4, 2])?,
            OpCase::CrossEntropy => {
                return g.cross_entropy_logits(x[0], &[3, 0, 6, 2], &[true, true, false, true]);
            }
            OpCase::FrobeniusSq => return g.frobenius_sq(x[0]),
            OpCase::Sum => return g.sum(x[0]),
        };
        weighted_sum(g, y)
    }
}

/// Full training loss (cross-entropy plus synaptic regulariser) of a model
/// whose parameters are the checked inputs.
#[derive(Clone, Debug)]
pub struct ModelLoss {
    pub config: crate::model::ModelConfig,
    pub tokens: Vec<usize>,
    pub targets: Vec<usize>,
    pub mask: Vec<bool>,
    pub reg_weight: f64,
}

impl ModelLoss {
    /// The reference case: 2 layers, d = 8, 2 heads, n = 5, V = 11.
    pub fn reference() -> Self {
        Self {
            config: crate::model::ModelConfig {
                vocab_size: 11,
                d_model: 8,
                n_heads: 2,
                n_layers: 2,
                d_ff: 16,
                max_seq_len: 5,
                sigma_init: 0.02,
                gate_mode: crate::model::GateMode::Learned,
            },
            tokens: vec![1, 7, 3, 10, 3],
            targets: vec![7, 3, 10, 3, 0],
            mask: vec![true, true, false, true, true],
            reg_weight: 0.05,
        }
    }

    /// Parameters drawn at a scale where every gradient is comfortably nonzero.
    pub fn inputs(&self, rng: &mut crate::rng::Rng) -> Result<Vec<Tensor2<f64>>> {
        crate::model::tensor_layout(&self.config)
            .into_iter()
            .map(|(name, r, c)| {
                let mut t = crate::rng::randn(r, c, 0.3, rng)?;
                if name.ends_with("gain") {
                    t = t.map(|v| 1.0 + 0.3 * v);
                }
                Ok(t)
            })
            .collect()
    }
}

impl Objective for ModelLoss {
    fn eval<'a, T: Scalar>(&self, g: &mut Graph<'a, T>, x: &[Var]) -> Result<Var> {
        let pv = crate::model::ParamVars::from_list(&self.config, x)?;
        let mode = self.config.gate_mode;
        let (logits, _) =
            crate::model::forward_graph(g, &self.config, &pv, &self.tokens, mode, false)?;
        let synaptic: Vec<Var> = pv.layers.iter().map(|l| l.w_s).collect();
        Ok(crate::train::loss(
            g,
            logits,
            &self.targets,
            &self.mask,
            &synaptic,
            self.reg_weight,
        )?
        .total)
    }
}

/// Runs every [`OpCase`] and the reference [`ModelLoss`] at precision `T`.
pub fn standard_suite<T: Scalar>(
    seed: u64,
    eps: f64,
    stencil: Stencil,
) -> Result<Vec<(&'static str, GradCheckReport)>> {
    let mut rng = crate::rng::Rng::new(seed);
    let mut out = Vec::new();
    for case in OpCase::ALL {
        let inputs = case.inputs(&mut rng)?;
        out.push((
            case.name(),
            grad_check_with::<T, _>(&case, &inputs, eps, stencil)?,
        ));
    }
    let model = ModelLoss::reference();
    let inputs = model.inputs(&mut rng)?;
    out.push((
        "model_loss",
        grad_check_with::<T, _>(&model, &inputs, eps, stencil)?,
    ));
    Ok(out)
}

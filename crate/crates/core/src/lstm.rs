//! LSTM recurrence with full-matrix state connections:
//!
//! ```text
//! i  = σ(W_xi x + W_yi y + W_si s + b_i)
//! f  = σ(W_xf x + W_yf y + W_sf s + b_f)
//! s' = f⊙s + i⊙g(W_xs x + W_ys y + b_s)        g = σ by default
//! o  = σ(W_xo x + W_yo y + W_so s' + b_o)
//! y' = o⊙tanh(s')
//! ```
//!
//! The output gate reads the *new* state. Parameters are named
//! `{scope}.W_xi`, `{scope}.b_i`, and so on.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numeric::{sigmoid, Gradients, ParamId, ParamStore, Rng};

/// Nonlinearity applied to the cell candidate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CandidateActivation {
    #[default]
    Sigmoid,
    Tanh,
}

impl CandidateActivation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            CandidateActivation::Sigmoid => sigmoid(x),
            CandidateActivation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            CandidateActivation::Sigmoid => y * (1.0 - y),
            CandidateActivation::Tanh => 1.0 - y * y,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CandidateActivation::Sigmoid => "sigmoid",
            CandidateActivation::Tanh => "tanh",
        }
    }
}

impl FromStr for CandidateActivation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(CandidateActivation::Sigmoid),
            "tanh" => Ok(CandidateActivation::Tanh),
            other => Err(Error::Config(format!(
                "candidate_activation must be sigmoid or tanh, got {other:?}"
            ))),
        }
    }
}

// Gate order inside the arrays below.
const I: usize = 0;
const F: usize = 1;
const S: usize = 2;
const O: usize = 3;
const GATES: [&str; 4] = ["i", "f", "s", "o"];

/// Handles to the fifteen tensors of one LSTM layer.
#[derive(Clone, Debug)]
pub struct LstmParams {
    input_dim: usize,
    width: usize,
    candidate: CandidateActivation,
    /// `W_xi, W_xf, W_xs, W_xo`, each `H×I`.
    w_x: [ParamId; 4],
    /// `W_yi, W_yf, W_ys, W_yo`, each `H×H`.
    w_y: [ParamId; 4],
    /// `W_si, W_sf, W_so`, each `H×H`.
    w_s: [ParamId; 3],
    /// `b_i, b_f, b_s, b_o`, each `H×1`.
    b: [ParamId; 4],
}

impl LstmParams {
    /// Registers a layer: uniform Glorot weights, zero biases.
    pub fn register(
        store: &mut ParamStore,
        scope: &str,
        input_dim: usize,
        width: usize,
        candidate: CandidateActivation,
        rng: &mut Rng,
    ) -> Self {
        let w_x = GATES.map(|g| store.glorot(&format!("{scope}.W_x{g}"), width, input_dim, rng));
        let w_y = GATES.map(|g| store.glorot(&format!("{scope}.W_y{g}"), width, width, rng));
        let w_s = ["i", "f", "o"].map(|g| store.glorot(&format!("{scope}.W_s{g}"), width, width, rng));
        let b = GATES.map(|g| store.zeros(&format!("{scope}.b_{g}"), width, 1));
        LstmParams {
            input_dim,
            width,
            candidate,
            w_x,
            w_y,
            w_s,
            b,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn candidate(&self) -> CandidateActivation {
        self.candidate
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.w_x
            .iter()
            .chain(&self.w_y)
            .chain(&self.w_s)
            .chain(&self.b)
            .copied()
            .collect()
    }

    /// `(W_x, W_y, W_s, b)` of gate `g` in the order i, f, s (candidate), o.
    pub(crate) fn gate(&self, g: usize) -> (ParamId, ParamId, Option<ParamId>, ParamId) {
        let w_s = (g != S).then(|| self.w_s_for(g));
        (self.w_x[g], self.w_y[g], w_s, self.b[g])
    }

    // Index into w_s for gate i/f/o.
    fn w_s_for(&self, gate: usize) -> ParamId {
        match gate {
            I => self.w_s[0],
            F => self.w_s[1],
            O => self.w_s[2],
            _ => unreachable!("candidate has no state connection"),
        }
    }
}

/// Everything one step needs for its backward pass.
#[derive(Clone, Debug)]
pub struct StepTrace {
    pub x: Vec<f64>,
    pub s_prev: Vec<f64>,
    pub y_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub candidate: Vec<f64>,
    pub o: Vec<f64>,
    pub s: Vec<f64>,
    pub tanh_s: Vec<f64>,
    pub y: Vec<f64>,
}

/// Steps in processing order; for a reversed pass step `k` belongs to
/// position `len - 1 - k`.
#[derive(Clone, Debug)]
pub struct LstmTrace {
    pub reverse: bool,
    pub steps: Vec<StepTrace>,
}

impl LstmTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    fn position(&self, k: usize) -> usize {
        if self.reverse {
            self.steps.len() - 1 - k
        } else {
            k
        }
    }
}

fn pre_activation(
    store: &ParamStore,
    p: &LstmParams,
    gate: usize,
    x: &[f64],
    y_prev: &[f64],
    s: Option<&[f64]>,
) -> Vec<f64> {
    let mut z = store.value(p.b[gate]).as_slice().to_vec();
    store.value(p.w_x[gate]).matvec_acc(x, &mut z);
    store.value(p.w_y[gate]).matvec_acc(y_prev, &mut z);
    if let Some(s) = s {
        store.value(p.w_s_for(gate)).matvec_acc(s, &mut z);
    }
    z
}

/// One recurrence step.
pub fn lstm_step(
    store: &ParamStore,
    p: &LstmParams,
    x: &[f64],
    s_prev: &[f64],
    y_prev: &[f64],
) -> Result<StepTrace> {
    if x.len() != p.input_dim || s_prev.len() != p.width || y_prev.len() != p.width {
        return Err(Error::Shape(format!(
            "lstm step expects x:{} s:{} y:{}, got x:{} s:{} y:{}",
            p.input_dim,
            p.width,
            p.width,
            x.len(),
            s_prev.len(),
            y_prev.len()
        )));
    }
    let i: Vec<f64> = pre_activation(store, p, I, x, y_prev, Some(s_prev))
        .into_iter()
        .map(sigmoid)
        .collect();
    let f: Vec<f64> = pre_activation(store, p, F, x, y_prev, Some(s_prev))
        .into_iter()
        .map(sigmoid)
        .collect();
    let candidate: Vec<f64> = pre_activation(store, p, S, x, y_prev, None)
        .into_iter()
        .map(|z| p.candidate.apply(z))
        .collect();
    let s: Vec<f64> = (0..p.width)
        .map(|k| f[k] * s_prev[k] + i[k] * candidate[k])
        .collect();
    let o: Vec<f64> = pre_activation(store, p, O, x, y_prev, Some(&s))
        .into_iter()
        .map(sigmoid)
        .collect();
    let tanh_s: Vec<f64> = s.iter().map(|v| v.tanh()).collect();
    let y = o.iter().zip(&tanh_s).map(|(a, b)| a * b).collect();
    Ok(StepTrace {
        x: x.to_vec(),
        s_prev: s_prev.to_vec(),
        y_prev: y_prev.to_vec(),
        i,
        f,
        candidate,
        o,
        s,
        tanh_s,
        y,
    })
}

/// Runs the layer over `xs` from zero state. Outputs are aligned with input
/// positions in both directions.
pub fn lstm_forward(
    store: &ParamStore,
    p: &LstmParams,
    xs: &[Vec<f64>],
    reverse: bool,
) -> Result<(Vec<Vec<f64>>, LstmTrace)> {
    if xs.is_empty() {
        return Err(Error::InvalidInput("empty sequence".into()));
    }
    let n = xs.len();
    let mut s = vec![0.0; p.width];
    let mut y = vec![0.0; p.width];
    let mut steps = Vec::with_capacity(n);
    for k in 0..n {
        let pos = if reverse { n - 1 - k } else { k };
        let step = lstm_step(store, p, &xs[pos], &s, &y)?;
        s.clone_from(&step.s);
        y.clone_from(&step.y);
        steps.push(step);
    }
    let trace = LstmTrace { reverse, steps };
    let mut ys = vec![Vec::new(); n];
    for (k, step) in trace.steps.iter().enumerate() {
        ys[trace.position(k)] = step.y.clone();
    }
    Ok((ys, trace))
}

/// Backpropagation through time. `dys` is position-aligned; returns
/// position-aligned input gradients and accumulates parameter gradients.
pub fn lstm_backward(
    store: &ParamStore,
    p: &LstmParams,
    trace: &LstmTrace,
    dys: &[Vec<f64>],
    grads: &mut Gradients,
) -> Result<Vec<Vec<f64>>> {
    let n = trace.len();
    if dys.len() != n {
        return Err(Error::Shape(format!(
            "lstm backward: trace has {n} steps, got {} output gradients",
            dys.len()
        )));
    }
    let h = p.width;
    let mut dxs = vec![Vec::new(); n];
    let mut dy_rec = vec![0.0; h];
    let mut ds_rec = vec![0.0; h];

    for k in (0..n).rev() {
        let st = &trace.steps[k];
        let pos = trace.position(k);
        if dys[pos].len() != h {
            return Err(Error::Shape(format!(
                "lstm backward: output gradient of length {} at position {pos}, width {h}",
                dys[pos].len()
            )));
        }
        let dy: Vec<f64> = (0..h).map(|j| dys[pos][j] + dy_rec[j]).collect();

        let dpre_o: Vec<f64> = (0..h)
            .map(|j| dy[j] * st.tanh_s[j] * st.o[j] * (1.0 - st.o[j]))
            .collect();
        let mut ds: Vec<f64> = (0..h)
            .map(|j| dy[j] * st.o[j] * (1.0 - st.tanh_s[j] * st.tanh_s[j]) + ds_rec[j])
            .collect();
        store.value(p.w_s[2]).matvec_t_acc(&dpre_o, &mut ds);

        let dpre_i: Vec<f64> = (0..h)
            .map(|j| ds[j] * st.candidate[j] * st.i[j] * (1.0 - st.i[j]))
            .collect();
        let dpre_f: Vec<f64> = (0..h)
            .map(|j| ds[j] * st.s_prev[j] * st.f[j] * (1.0 - st.f[j]))
            .collect();
        let dpre_c: Vec<f64> = (0..h)
            .map(|j| ds[j] * st.i[j] * p.candidate.derivative_from_output(st.candidate[j]))
            .collect();
        let dpre = [&dpre_i, &dpre_f, &dpre_c, &dpre_o];

        // Parameter gradients.
        for g in 0..4 {
            grads.get_mut(p.w_x[g]).add_outer(dpre[g], &st.x);
            grads.get_mut(p.w_y[g]).add_outer(dpre[g], &st.y_prev);
            for (acc, d) in grads.get_mut(p.b[g]).as_mut_slice().iter_mut().zip(dpre[g]) {
                *acc += d;
            }
        }
        grads.get_mut(p.w_s[0]).add_outer(&dpre_i, &st.s_prev);
        grads.get_mut(p.w_s[1]).add_outer(&dpre_f, &st.s_prev);
        grads.get_mut(p.w_s[2]).add_outer(&dpre_o, &st.s);

        // Input gradient.
        let mut dx = vec![0.0; p.input_dim];
        for g in 0..4 {
            store.value(p.w_x[g]).matvec_t_acc(dpre[g], &mut dx);
        }
        dxs[pos] = dx;

        // Recurrent gradients into step k-1.
        let mut next_dy = vec![0.0; h];
        for g in 0..4 {
            store.value(p.w_y[g]).matvec_t_acc(dpre[g], &mut next_dy);
        }
        let mut next_ds: Vec<f64> = (0..h).map(|j| ds[j] * st.f[j]).collect();
        store.value(p.w_s[0]).matvec_t_acc(&dpre_i, &mut next_ds);
        store.value(p.w_s[1]).matvec_t_acc(&dpre_f, &mut next_ds);
        dy_rec = next_dy;
        ds_rec = next_ds;
    }
    Ok(dxs)
}

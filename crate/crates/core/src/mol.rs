//! Mixture-of-logistics location attention.
//!
//! Each decoder step predicts, for `K` logistic components, a positive
//! increment of the component mean, a scale and a mixture weight. The
//! attention weight of encoder position `j` is the mixture probability mass
//! falling in `[j - 0.5, j + 0.5]`. Means only move forward, so alignments
//! are monotone by construction.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};

/// Numerically stable logistic sigmoid.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// CDF of the logistic distribution with location `mu` and scale `s`.
pub fn logistic_cdf(x: f64, mu: f64, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::OutOfRange(format!("logistic scale must be positive, got {s}")));
    }
    Ok(sigmoid((x - mu) / s))
}

/// Mass of a logistic in `[lo, hi]`, evaluated on whichever tail keeps precision.
fn interval_mass(lo: f64, hi: f64, mu: f64, s: f64) -> f64 {
    let (zl, zh) = ((lo - mu) / s, (hi - mu) / s);
    if zl > 0.0 {
        sigmoid(-zl) - sigmoid(-zh)
    } else {
        sigmoid(zh) - sigmoid(zl)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoLParams {
    pub mu: Vec<f64>,
    pub s: Vec<f64>,
    pub w: Vec<f64>,
}

impl MoLParams {
    pub fn components(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.mu.len();
        if k == 0 || self.s.len() != k || self.w.len() != k {
            return Err(Error::Dimension(format!(
                "mixture parameter lengths {} / {} / {}",
                k,
                self.s.len(),
                self.w.len()
            )));
        }
        let all = self.mu.iter().chain(&self.s).chain(&self.w);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mixture parameters"));
        }
        if self.s.iter().any(|&s| s <= 0.0) {
            return Err(Error::OutOfRange("mixture scales must be positive".into()));
        }
        if self.w.iter().any(|&w| w < 0.0) || (self.w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::OutOfRange("mixture weights must lie on the simplex".into()));
        }
        Ok(())
    }
}

/// Component means carried from one decoder step to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionState {
    pub mu_prev: Vec<f64>,
    pub step: usize,
}

impl AttentionState {
    /// All means start at encoder position 0.
    pub fn new(components: usize) -> Self {
        Self {
            mu_prev: vec![0.0; components],
            step: 0,
        }
    }
}

/// Two dense layers mapping a query vector to the `3K` raw mixture outputs:
/// `w2 · tanh(w1 · h + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryProjection {
    /// `[proj x hidden]`
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `[3K x proj]`
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl QueryProjection {
    pub fn new(w1: Array2<f64>, b1: Array1<f64>, w2: Array2<f64>, b2: Array1<f64>) -> Result<Self> {
        let p = Self { w1, b1, w2, b2 };
        if p.b1.len() != p.w1.nrows()
            || p.w2.ncols() != p.w1.nrows()
            || p.b2.len() != p.w2.nrows()
            || p.w2.nrows() == 0
            || p.w2.nrows() % 3 != 0
        {
            return Err(Error::Dimension(format!(
                "projection shapes w1 {:?}, b1 {}, w2 {:?}, b2 {}",
                p.w1.dim(),
                p.b1.len(),
                p.w2.dim(),
                p.b2.len()
            )));
        }
        let finite = p.w1.iter().chain(&p.b1).chain(&p.w2).chain(&p.b2).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("query projection"));
        }
        Ok(p)
    }

    pub fn zeros(hidden: usize, proj: usize, components: usize) -> Self {
        Self {
            w1: Array2::zeros((proj, hidden)),
            b1: Array1::zeros(proj),
            w2: Array2::zeros((3 * components, proj)),
            b2: Array1::zeros(3 * components),
        }
    }

    /// Uniform weights in `[-scale, scale]`, zero biases.
    pub fn random<R: Rng>(hidden: usize, proj: usize, components: usize, scale: f64, rng: &mut R) -> Self {
        let mut u = |shape: (usize, usize)| Array2::from_shape_fn(shape, |_| rng.gen_range(-scale..=scale));
        let w1 = u((proj, hidden));
        let w2 = u((3 * components, proj));
        Self {
            w1,
            b1: Array1::zeros(proj),
            w2,
            b2: Array1::zeros(3 * components),
        }
    }

    pub fn components(&self) -> usize {
        self.w2.nrows() / 3
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }
}

/// Unconstrained mixture outputs before the exp / softmax maps.
#[derive(Debug, Clone, PartialEq)]
pub struct RawParams {
    pub mu_hat: Vec<f64>,
    pub s_hat: Vec<f64>,
    pub w_hat: Vec<f64>,
}

pub fn project_query(h: ArrayView1<f64>, p: &QueryProjection) -> Result<RawParams> {
    if h.len() != p.hidden() {
        return Err(Error::Dimension(format!(
            "query has {} dims, projection expects {}",
            h.len(),
            p.hidden()
        )));
    }
    let hidden = (p.w1.dot(&h) + &p.b1).mapv(f64::tanh);
    let out = p.w2.dot(&hidden) + &p.b2;
    let k = p.components();
    let out = out.to_vec();
    Ok(RawParams {
        mu_hat: out[..k].to_vec(),
        s_hat: out[k..2 * k].to_vec(),
        w_hat: out[2 * k..].to_vec(),
    })
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// `mu = mu_prev + exp(mu_hat)`, `s = exp(s_hat)`, `w = softmax(w_hat)`.
pub fn step_params(raw: &RawParams, state: &AttentionState) -> Result<(MoLParams, AttentionState)> {
    let k = state.mu_prev.len();
    if raw.mu_hat.len() != k || raw.s_hat.len() != k || raw.w_hat.len() != k {
        return Err(Error::Dimension(format!(
            "raw parameters do not match {k} components"
        )));
    }
    let all = raw.mu_hat.iter().chain(&raw.s_hat).chain(&raw.w_hat);
    if all.clone().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("raw attention parameters"));
    }
    let mu: Vec<f64> = state
        .mu_prev
        .iter()
        .zip(&raw.mu_hat)
        .map(|(m, d)| m + d.exp())
        .collect();
    let params = MoLParams {
        mu: mu.clone(),
        s: raw.s_hat.iter().map(|v| v.exp()).collect(),
        w: softmax(&raw.w_hat),
    };
    Ok((
        params,
        AttentionState {
            mu_prev: mu,
            step: state.step + 1,
        },
    ))
}

/// Mixture mass over each of `n` encoder positions.
pub fn attention_weights(params: &MoLParams, n: usize) -> Result<Array1<f64>> {
    params.validate()?;
    if n == 0 {
        return Err(Error::Empty("encoder sequence"));
    }
    let mut a = Array1::zeros(n);
    for (j, slot) in a.iter_mut().enumerate() {
        let x = j as f64;
        *slot = (0..params.components())
            .map(|k| params.w[k] * interval_mass(x - 0.5, x + 0.5, params.mu[k], params.s[k]))
            .sum();
    }
    Ok(a)
}

/// Attention-weighted sum of encoder rows (`e` is `[n x d]`).
pub fn context_vector(a: ArrayView1<f64>, e: ArrayView2<f64>) -> Result<Array1<f64>> {
    if a.len() != e.nrows() {
        return Err(Error::Dimension(format!(
            "{} weights for {} encoder vectors",
            a.len(),
            e.nrows()
        )));
    }
    Ok(e.t().dot(&a))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentRun {
    /// `[steps x n]`
    pub alignment: Array2<f64>,
    /// `[steps x d]`
    pub contexts: Array2<f64>,
    /// Component means after each step, `[steps x K]`.
    pub mu_trajectory: Array2<f64>,
}

/// Runs the attention recurrence over `queries` (`[steps x hidden]`) against
/// encoder outputs `e` (`[n x d]`), starting from a fresh state.
pub fn run_alignment(
    queries: ArrayView2<f64>,
    e: ArrayView2<f64>,
    p: &QueryProjection,
) -> Result<AlignmentRun> {
    let (steps, n, k) = (queries.nrows(), e.nrows(), p.components());
    let mut alignment = Array2::zeros((steps, n));
    let mut contexts = Array2::zeros((steps, e.ncols()));
    let mut mu_trajectory = Array2::zeros((steps, k));
    let mut state = AttentionState::new(k);
    for (i, h) in queries.rows().into_iter().enumerate() {
        let raw = project_query(h, p)?;
        let (params, next) = step_params(&raw, &state)?;
        let a = attention_weights(&params, n)?;
        contexts.row_mut(i).assign(&context_vector(a.view(), e)?);
        alignment.row_mut(i).assign(&a);
        mu_trajectory.row_mut(i).assign(&ArrayView1::from(&params.mu));
        state = next;
    }
    Ok(AlignmentRun {
        alignment,
        contexts,
        mu_trajectory,
    })
}

/// One row per decoder step, one column per encoder position.
pub fn alignment_to_csv(alignment: &Array2<f64>) -> String {
    let mut out = String::from("step");
    for j in 0..alignment.ncols() {
        write!(out, ",j{j}").unwrap();
    }
    out.push('\n');
    for (i, row) in alignment.rows().into_iter().enumerate() {
        write!(out, "{i}").unwrap();
        for v in row {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_alignment_csv(path: impl AsRef<Path>, alignment: &Array2<f64>) -> Result<()> {
    crate::io::write_atomic(path.as_ref(), alignment_to_csv(alignment).as_bytes())
}

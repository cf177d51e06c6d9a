//! Construction of near-martingale measures on the N-period sign tree from
//! a volatility candidate, by the explicit recursion
//!
//!   sigma_n = clamp(sigmat_{(n-1)/N}(B), [sigma_low, sigma_high])
//!   kappa_n = (sigmat^2 / sigma_n^2 - 1) / 2
//!   X_n     = sigma_n xi_n / sqrt(N),  xi_n = +-1
//!   B_n     = B_{n-1} + (exp((1+kappa_n)X_n - kappa_{n-1}X_{n-1}) - 1)
//!                        / (sqrt(1+2 kappa_n) sigma_n)
//!   q_n     = (exp(kappa_{n-1}X_{n-1}) - e^{-(1+kappa_n)sigma_n/sqrt N})
//!              / (e^{(1+kappa_n)sigma_n/sqrt N} - e^{-(1+kappa_n)sigma_n/sqrt N})
//!   M_n     = S_n exp(kappa_n X_n)
//!
//! under which both B and M are exact one-step martingales; the validity
//! window q_n in (0,1) is a runtime check, not an assumption.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dual::DualMeasure;
use crate::error::{EngineError, Result};

/// Full sign-tree enumeration refuses beyond this depth (2^17 nodes).
pub const MAX_FULL_TREE_PERIODS: usize = 16;

type VolEval = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// A progressively measurable volatility candidate `sigmat_t(B)`; the
/// evaluator receives the time and the already-constructed values of the
/// driving process (piecewise-constant reading, latest value last).
#[derive(Clone)]
pub struct VolCandidate {
    eval: VolEval,
    pub lipschitz_const: f64,
    /// Margin of the squared-volatility band and width of the constant tail.
    pub delta: f64,
    /// Candidate equals sigma_low on `[1 - delta, 1]`.
    pub constant_tail: bool,
    pub label: String,
}

impl std::fmt::Debug for VolCandidate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "VolCandidate({})", self.label)
    }
}

impl VolCandidate {
    pub fn constant(sigma: f64) -> VolCandidate {
        VolCandidate {
            eval: Arc::new(move |_, _| sigma),
            lipschitz_const: 0.0,
            delta: 1e-3,
            constant_tail: false,
            label: format!("const {sigma}"),
        }
    }

    pub fn custom<F>(
        f: F,
        lipschitz_const: f64,
        delta: f64,
        constant_tail: bool,
        label: &str,
    ) -> VolCandidate
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        VolCandidate { eval: Arc::new(f), lipschitz_const, delta, constant_tail, label: label.into() }
    }

    pub fn evaluate(&self, t: f64, b_prefix: &[f64]) -> f64 {
        (self.eval)(t, b_prefix)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KusuokaNode {
    /// Log-return taken into this node (0 at the root).
    pub x: f64,
    /// Clamped volatility of that step.
    pub sigma: f64,
    /// Excess-variance tilt of that step.
    pub kappa: f64,
    pub b: f64,
    pub stock: f64,
    pub m: f64,
    /// Running quadratic-variation diagnostic.
    pub q_diag: f64,
    /// Measure weight of the path to this node.
    pub weight: f64,
    /// Up-probability of the step out of this node (last level: unused 0).
    pub q_up: f64,
}

/// Fully enumerated sign tree; node ids at level n are the n-bit sign
/// words, earliest period in the highest bit, bit 1 = up.
#[derive(Debug, Clone)]
pub struct KusuokaTree {
    pub periods: usize,
    pub sigma_low: f64,
    pub sigma_high: f64,
    pub slope_cap: f64,
    pub levels: Vec<Vec<KusuokaNode>>,
}

struct StepInput {
    t: f64,
    kappa_prev: f64,
    x_prev: f64,
}

struct StepOutput {
    sigma: f64,
    kappa: f64,
    q_up: f64,
}

fn band_checked_sigma(
    cand: &VolCandidate,
    sigma_low: f64,
    sigma_high: f64,
    slope_cap: f64,
    t: f64,
    b_prefix: &[f64],
) -> Result<(f64, f64)> {
    let tilde = cand.evaluate(t, b_prefix);
    let tilde2 = tilde * tilde;
    let lo = sigma_low * (sigma_low - 2.0 * slope_cap).max(0.0) + cand.delta;
    let hi = sigma_high * (sigma_high + 2.0 * slope_cap) - cand.delta;
    if !(tilde2 >= lo - 1e-12 && tilde2 <= hi + 1e-12) {
        return Err(EngineError::Validation(format!(
            "candidate '{}' value {tilde} at t = {t} leaves the admissible variance band [{lo}, {hi}]",
            cand.label
        )));
    }
    let clamped = tilde.clamp(sigma_low, sigma_high);
    Ok((tilde, clamped))
}

fn step(
    cand: &VolCandidate,
    tree_sigma_low: f64,
    tree_sigma_high: f64,
    slope_cap: f64,
    sqrt_n: f64,
    input: &StepInput,
    b_prefix: &[f64],
) -> Result<StepOutput> {
    let (tilde, sigma) =
        band_checked_sigma(cand, tree_sigma_low, tree_sigma_high, slope_cap, input.t, b_prefix)?;
    let kappa = 0.5 * (tilde * tilde / (sigma * sigma) - 1.0);
    let step_arg = (1.0 + kappa) * sigma / sqrt_n;
    let up = step_arg.exp();
    let down = (-step_arg).exp();
    let q_up = ((input.kappa_prev * input.x_prev).exp() - down) / (up - down);
    Ok(StepOutput { sigma, kappa, q_up })
}

fn advance(node: &KusuokaNode, out: &StepOutput, xi: f64, sqrt_n: f64) -> KusuokaNode {
    let x = out.sigma * xi / sqrt_n;
    let stock = node.stock * x.exp();
    let m = stock * (out.kappa * x).exp();
    let b = node.b
        + (((1.0 + out.kappa) * x - node.kappa * node.x).exp() - 1.0)
            / ((1.0 + 2.0 * out.kappa).sqrt() * out.sigma);
    let q_diag = node.q_diag + x * x + 2.0 * ((m - stock) / stock) * x;
    let weight = node.weight * if xi > 0.0 { out.q_up } else { 1.0 - out.q_up };
    KusuokaNode {
        x,
        sigma: out.sigma,
        kappa: out.kappa,
        b,
        stock,
        m,
        q_diag,
        weight,
        q_up: 0.0,
    }
}

/// Builds the measure and the full per-node state on the sign tree.
pub fn kusuoka_measure(
    candidate: &VolCandidate,
    s0: f64,
    sigma_low: f64,
    sigma_high: f64,
    slope_cap: f64,
    periods: usize,
) -> Result<(DualMeasure, KusuokaTree)> {
    if !(s0 > 0.0 && 0.0 < sigma_low && sigma_low <= sigma_high && slope_cap > 0.0) {
        return Err(EngineError::Parameter(
            "need s0 > 0, 0 < sigma_low <= sigma_high, slope cap > 0".into(),
        ));
    }
    if periods == 0 {
        return Err(EngineError::Parameter("periods must be >= 1".into()));
    }
    if periods > MAX_FULL_TREE_PERIODS {
        return Err(EngineError::Capacity(format!(
            "full sign tree refuses {periods} periods (cap {MAX_FULL_TREE_PERIODS}); use sampled paths"
        )));
    }
    let sqrt_n = (periods as f64).sqrt();
    let root = KusuokaNode {
        x: 0.0,
        sigma: 0.0,
        kappa: 0.0,
        b: 0.0,
        stock: s0,
        m: s0,
        q_diag: 0.0,
        weight: 1.0,
        q_up: 0.0,
    };
    let mut levels = vec![vec![root]];
    for n in 1..=periods {
        let t = (n - 1) as f64 / periods as f64;
        let mut next = Vec::with_capacity(1usize << n);
        let mut updated_parents = Vec::with_capacity(levels[n - 1].len());
        for (id, node) in levels[n - 1].iter().enumerate() {
            // reconstruct the B prefix from ancestors: the ancestor of this
            // node at level m is its id's top m bits
            let b_prefix: Vec<f64> =
                (0..n).map(|m| levels[m][id >> (n - 1 - m)].b).collect();
            let input = StepInput { t, kappa_prev: node.kappa, x_prev: node.x };
            let out = step(candidate, sigma_low, sigma_high, slope_cap, sqrt_n, &input, &b_prefix)?;
            if !(out.q_up > 0.0 && out.q_up < 1.0) {
                return Err(EngineError::Degenerate(format!(
                    "q = {} at node (level {}, id {id}): N = {periods} too small for candidate '{}'",
                    out.q_up,
                    n - 1,
                    candidate.label
                )));
            }
            let mut parent = *node;
            parent.q_up = out.q_up;
            updated_parents.push(parent);
            next.push(advance(node, &out, -1.0, sqrt_n));
            next.push(advance(node, &out, 1.0, sqrt_n));
        }
        levels[n - 1] = updated_parents;
        levels.push(next);
    }
    let transition = (0..periods)
        .map(|n| levels[n].iter().map(|nd| vec![1.0 - nd.q_up, nd.q_up]).collect())
        .collect();
    let tree = KusuokaTree { periods, sigma_low, sigma_high, slope_cap, levels };
    Ok((DualMeasure { transition }, tree))
}

impl KusuokaTree {
    /// Exact one-step martingale identities for B and M at every node,
    /// the M-versus-S proximity bound, the leaf-measure total, and the
    /// increment band of the diagnostic process.
    pub fn check_invariants(&self, constant_tail: Option<f64>) -> Result<()> {
        let n_per = self.periods as f64;
        let band_lo = self.sigma_low * self.sigma_low - 2.0 * self.slope_cap * self.sigma_high;
        let band_hi = self.sigma_high * self.sigma_high + 2.0 * self.slope_cap * self.sigma_high;
        for n in 0..self.periods {
            for (id, node) in self.levels[n].iter().enumerate() {
                let down = &self.levels[n + 1][2 * id];
                let up = &self.levels[n + 1][2 * id + 1];
                let q = node.q_up;
                let b_exp = q * up.b + (1.0 - q) * down.b;
                if (b_exp - node.b).abs() > 1e-12 {
                    return Err(EngineError::Contract(format!(
                        "B martingale identity fails at ({n}, {id}): {b_exp} vs {}",
                        node.b
                    )));
                }
                let m_exp = q * up.m + (1.0 - q) * down.m;
                if (m_exp - node.m).abs() > 1e-12 * node.m.abs().max(1.0) {
                    return Err(EngineError::Contract(format!(
                        "M martingale identity fails at ({n}, {id}): {m_exp} vs {}",
                        node.m
                    )));
                }
                for child in [down, up] {
                    if ((child.m - child.stock) / child.stock).abs()
                        > self.slope_cap / n_per.sqrt() + 1e-12
                    {
                        return Err(EngineError::Contract(format!(
                            "|M - S|/S bound fails below ({n}, {id})"
                        )));
                    }
                    let dq = n_per * (child.q_diag - node.q_diag);
                    if dq < band_lo - 1e-10 || dq > band_hi + 1e-10 {
                        return Err(EngineError::Contract(format!(
                            "diagnostic increment {dq} outside [{band_lo}, {band_hi}] below ({n}, {id})"
                        )));
                    }
                }
            }
        }
        let mass: f64 = self.levels[self.periods].iter().map(|nd| nd.weight).sum();
        if (mass - 1.0).abs() > 1e-10 {
            return Err(EngineError::Contract(format!("leaf measure mass {mass} != 1")));
        }
        if let Some(delta) = constant_tail {
            // the last step reads the candidate inside its constant tail,
            // so the tilt vanishes and M merges with S at maturity
            if ((self.periods - 1) as f64 / n_per) >= 1.0 - delta {
                for leaf in &self.levels[self.periods] {
                    if (leaf.m - leaf.stock).abs() > 1e-12 * leaf.stock {
                        return Err(EngineError::Contract(
                            "terminal M differs from S despite the constant tail".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// One sampled path of the recursion with exact local checks at every
/// visited node (both successors are computed at each step).
#[derive(Debug, Clone)]
pub struct KusuokaPath {
    pub xi: Vec<i8>,
    pub sigma: Vec<f64>,
    pub kappa: Vec<f64>,
    pub b: Vec<f64>,
    pub stock: Vec<f64>,
    pub m: Vec<f64>,
    pub q_diag: Vec<f64>,
    pub q_up: Vec<f64>,
}

/// Monte Carlo mode for depths beyond the full-tree cap. Each visited node
/// still gets the exact one-step identities verified (no statistics).
pub fn kusuoka_sample_paths(
    candidate: &VolCandidate,
    s0: f64,
    sigma_low: f64,
    sigma_high: f64,
    slope_cap: f64,
    periods: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<KusuokaPath>> {
    if count == 0 {
        return Err(EngineError::Parameter("need at least one path".into()));
    }
    if !(s0 > 0.0 && 0.0 < sigma_low && sigma_low <= sigma_high && slope_cap > 0.0) {
        return Err(EngineError::Parameter(
            "need s0 > 0, 0 < sigma_low <= sigma_high, slope cap > 0".into(),
        ));
    }
    let sqrt_n = (periods as f64).sqrt();
    let band_lo = sigma_low * sigma_low - 2.0 * slope_cap * sigma_high;
    let band_hi = sigma_high * sigma_high + 2.0 * slope_cap * sigma_high;
    let mut out = Vec::with_capacity(count);
    for path_id in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_id as u64);
        let mut node = KusuokaNode {
            x: 0.0,
            sigma: 0.0,
            kappa: 0.0,
            b: 0.0,
            stock: s0,
            m: s0,
            q_diag: 0.0,
            weight: 1.0,
            q_up: 0.0,
        };
        let mut b_prefix = vec![0.0];
        let mut path = KusuokaPath {
            xi: Vec::new(),
            sigma: Vec::new(),
            kappa: Vec::new(),
            b: vec![0.0],
            stock: vec![s0],
            m: vec![s0],
            q_diag: vec![0.0],
            q_up: Vec::new(),
        };
        for n in 1..=periods {
            let t = (n - 1) as f64 / periods as f64;
            let input = StepInput { t, kappa_prev: node.kappa, x_prev: node.x };
            let o = step(candidate, sigma_low, sigma_high, slope_cap, sqrt_n, &input, &b_prefix)?;
            if !(o.q_up > 0.0 && o.q_up < 1.0) {
                return Err(EngineError::Degenerate(format!(
                    "q = {} at step {n} of path {path_id}: N = {periods} too small for candidate '{}'",
                    o.q_up, candidate.label
                )));
            }
            let down = advance(&node, &o, -1.0, sqrt_n);
            let up = advance(&node, &o, 1.0, sqrt_n);
            // exact local martingale identities
            let b_exp = o.q_up * up.b + (1.0 - o.q_up) * down.b;
            let m_exp = o.q_up * up.m + (1.0 - o.q_up) * down.m;
            if (b_exp - node.b).abs() > 1e-12 || (m_exp - node.m).abs() > 1e-12 * node.m.max(1.0) {
                return Err(EngineError::Contract(format!(
                    "one-step martingale identity fails at step {n} of path {path_id}"
                )));
            }
            for child in [&down, &up] {
                if ((child.m - child.stock) / child.stock).abs()
                    > slope_cap / sqrt_n + 1e-12
                {
                    return Err(EngineError::Contract(format!(
                        "|M - S|/S bound fails at step {n} of path {path_id}"
                    )));
                }
                let dq = periods as f64 * (child.q_diag - node.q_diag);
                if dq < band_lo - 1e-10 || dq > band_hi + 1e-10 {
                    return Err(EngineError::Contract(format!(
                        "diagnostic increment {dq} out of band at step {n} of path {path_id}"
                    )));
                }
            }
            let go_up = rng.gen_bool(o.q_up);
            node = if go_up { up } else { down };
            b_prefix.push(node.b);
            path.xi.push(if go_up { 1 } else { -1 });
            path.sigma.push(o.sigma);
            path.kappa.push(o.kappa);
            path.b.push(node.b);
            path.stock.push(node.stock);
            path.m.push(node.m);
            path.q_diag.push(node.q_diag);
            path.q_up.push(o.q_up);
        }
        out.push(path);
    }
    Ok(out)
}

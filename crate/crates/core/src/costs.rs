//! Trading cost functions, their convex conjugates, truncations and the
//! volatility penalties used by the scaling limit.
//!
//! A cost assigns `g(n, history, beta) >= 0` to trading `beta` currency
//! units of stock at period `n`, convex in `beta` with `g(.., 0) = 0`. The
//! same type doubles as the limiting cost `h` of the large-`N` regime, in
//! which case the history argument carries the interpolated price path.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{EngineError, Result};
use crate::extreal::ExtReal;

/// Certified tolerance of the numeric conjugate search for custom costs.
pub const CONJUGATE_TOL: f64 = 1e-9;

type CustomEval = Arc<dyn Fn(usize, &[f64], f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum CostKind {
    Zero,
    /// `rate * |beta|`.
    Proportional { rate: f64 },
    /// `lambda * beta^2`.
    Quadratic { lambda: f64 },
    /// Quadratic capped at marginal slope `cap`, linear beyond the kink.
    TruncatedQuadratic { lambda: f64, cap: f64 },
    /// Max-affine convex function: `max_i (slope_i * beta + intercept_i)`.
    PiecewiseLinear { pieces: Vec<(f64, f64)> },
    /// Arbitrary convex evaluator `(n, history, beta) -> cost`.
    Custom { eval: CustomEval, path_dependent: bool, label: String },
}

#[derive(Clone)]
pub struct CostSpec {
    pub kind: CostKind,
}

impl fmt::Debug for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            CostKind::Zero => write!(f, "CostSpec::Zero"),
            CostKind::Proportional { rate } => write!(f, "CostSpec::Proportional({rate})"),
            CostKind::Quadratic { lambda } => write!(f, "CostSpec::Quadratic({lambda})"),
            CostKind::TruncatedQuadratic { lambda, cap } => {
                write!(f, "CostSpec::TruncatedQuadratic({lambda}, cap={cap})")
            }
            CostKind::PiecewiseLinear { pieces } => {
                write!(f, "CostSpec::PiecewiseLinear({} pieces)", pieces.len())
            }
            CostKind::Custom { label, .. } => write!(f, "CostSpec::Custom({label})"),
        }
    }
}

impl CostSpec {
    pub fn zero() -> CostSpec {
        CostSpec { kind: CostKind::Zero }
    }

    pub fn proportional(rate: f64) -> Result<CostSpec> {
        if !(rate >= 0.0) {
            return Err(EngineError::Parameter(format!("proportional rate must be >= 0, got {rate}")));
        }
        Ok(CostSpec { kind: CostKind::Proportional { rate } })
    }

    pub fn quadratic(lambda: f64) -> Result<CostSpec> {
        if !(lambda > 0.0) {
            return Err(EngineError::Parameter(format!("quadratic lambda must be > 0, got {lambda}")));
        }
        Ok(CostSpec { kind: CostKind::Quadratic { lambda } })
    }

    pub fn truncated_quadratic(lambda: f64, cap: f64) -> Result<CostSpec> {
        if !(lambda > 0.0 && cap > 0.0) {
            return Err(EngineError::Parameter("truncated quadratic needs lambda > 0, cap > 0".into()));
        }
        Ok(CostSpec { kind: CostKind::TruncatedQuadratic { lambda, cap } })
    }

    /// Piecewise-linear convex cost from interior breakpoints and segment
    /// slopes (`slopes.len() == breakpoints.len() + 1`, nondecreasing).
    /// The function is anchored at `g(0) = 0`.
    pub fn piecewise_linear(breakpoints: &[f64], slopes: &[f64]) -> Result<CostSpec> {
        if slopes.len() != breakpoints.len() + 1 {
            return Err(EngineError::Parameter("need one more slope than breakpoints".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EngineError::Parameter("breakpoints must be strictly increasing".into()));
        }
        if slopes.windows(2).any(|w| w[0] > w[1] + 1e-15) {
            return Err(EngineError::Parameter("slopes must be nondecreasing (convexity)".into()));
        }
        // Anchor intercepts so the function passes through the breakpoint
        // chain with value 0 at beta = 0.
        let seg_of = |x: f64| breakpoints.iter().filter(|&&b| b <= x).count();
        let seg0 = seg_of(0.0);
        let mut intercepts = vec![0.0; slopes.len()];
        intercepts[seg0] = 0.0; // line through origin on the segment containing 0
        for i in seg0..slopes.len() - 1 {
            let b = breakpoints[i];
            intercepts[i + 1] = intercepts[i] + (slopes[i] - slopes[i + 1]) * b;
        }
        for i in (0..seg0).rev() {
            let b = breakpoints[i];
            intercepts[i] = intercepts[i + 1] + (slopes[i + 1] - slopes[i]) * b;
        }
        let pieces: Vec<(f64, f64)> = slopes.iter().copied().zip(intercepts).collect();
        let spec = CostSpec { kind: CostKind::PiecewiseLinear { pieces } };
        // nonnegativity: convex with g(0)=0 requires 0 to be a minimizer
        let left = seg0.checked_sub(1).map(|i| slopes[i + 1]).unwrap_or(slopes[seg0]);
        if slopes[seg0] > 1e-15 && seg0 == 0 || left < -1e-15 && seg0 == slopes.len() - 1 {
            // fallthrough to the generic check below
        }
        if spec.evaluate(0, &[], 1e-6) < -1e-12 || spec.evaluate(0, &[], -1e-6) < -1e-12 {
            return Err(EngineError::Parameter("piecewise-linear cost must be nonnegative".into()));
        }
        Ok(spec)
    }

    /// Custom cost from a tabulated `(beta, g(beta))` grid. The table must
    /// contain `(0, 0)`, be convex, and nonnegative; evaluation is linear
    /// interpolation inside and end-slope extrapolation outside.
    pub fn custom_table(points: &[(f64, f64)]) -> Result<CostSpec> {
        if points.len() < 2 {
            return Err(EngineError::Parameter("tabulated cost needs at least 2 points".into()));
        }
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if pts.windows(2).any(|w| w[1].0 - w[0].0 <= 0.0) {
            return Err(EngineError::Parameter("tabulated betas must be distinct".into()));
        }
        if !pts.iter().any(|&(b, g)| b == 0.0 && g.abs() <= 1e-14) {
            return Err(EngineError::Parameter("table must contain the point (0, 0)".into()));
        }
        if pts.iter().any(|&(_, g)| !(g >= 0.0) || !g.is_finite()) {
            return Err(EngineError::Parameter("tabulated costs must be finite and >= 0".into()));
        }
        let slopes: Vec<f64> =
            pts.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
        if slopes.windows(2).any(|w| w[0] > w[1] + 1e-10) {
            return Err(EngineError::Parameter("tabulated cost is not convex".into()));
        }
        let eval = move |_n: usize, _h: &[f64], beta: f64| -> f64 {
            match pts.iter().position(|&(b, _)| b >= beta) {
                Some(0) => pts[0].1 + slopes[0] * (beta - pts[0].0),
                Some(i) => pts[i - 1].1 + slopes[i - 1] * (beta - pts[i - 1].0),
                None => {
                    let last = *pts.last().unwrap();
                    last.1 + slopes[slopes.len() - 1] * (beta - last.0)
                }
            }
        };
        Ok(CostSpec {
            kind: CostKind::Custom {
                eval: Arc::new(eval),
                path_dependent: false,
                label: "tabulated".into(),
            },
        })
    }

    pub fn custom_fn<F>(f: F, path_dependent: bool, label: &str) -> CostSpec
    where
        F: Fn(usize, &[f64], f64) -> f64 + Send + Sync + 'static,
    {
        CostSpec {
            kind: CostKind::Custom { eval: Arc::new(f), path_dependent, label: label.into() },
        }
    }

    pub fn is_path_dependent(&self) -> bool {
        matches!(self.kind, CostKind::Custom { path_dependent: true, .. })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, CostKind::Zero)
    }

    /// Max-affine pieces when the cost is exactly piecewise linear;
    /// this is what the LP backend consumes.
    pub fn max_affine_pieces(&self) -> Option<Vec<(f64, f64)>> {
        match &self.kind {
            CostKind::Zero => Some(vec![(0.0, 0.0)]),
            CostKind::Proportional { rate } => Some(vec![(-rate, 0.0), (*rate, 0.0)]),
            CostKind::PiecewiseLinear { pieces } => Some(pieces.clone()),
            _ => None,
        }
    }

    /// `g(n, history, beta)`. The history is the discrete price prefix
    /// `S_0..=S_n` (or the sampled interpolated path for limiting costs);
    /// all closed-form kinds ignore it.
    pub fn evaluate(&self, n: usize, history: &[f64], beta: f64) -> f64 {
        match &self.kind {
            CostKind::Zero => 0.0,
            CostKind::Proportional { rate } => rate * beta.abs(),
            CostKind::Quadratic { lambda } => lambda * beta * beta,
            CostKind::TruncatedQuadratic { lambda, cap } => {
                let kink = cap / (2.0 * lambda);
                if beta.abs() <= kink {
                    lambda * beta * beta
                } else {
                    cap * beta.abs() - cap * cap / (4.0 * lambda)
                }
            }
            CostKind::PiecewiseLinear { pieces } => pieces
                .iter()
                .map(|&(s, c)| s * beta + c)
                .fold(f64::NEG_INFINITY, f64::max),
            CostKind::Custom { eval, .. } => eval(n, history, beta),
        }
    }

    /// Legendre-Fenchel transform `G(alpha) = sup_beta { alpha*beta - g(beta) }`.
    ///
    /// Closed-form for the structured kinds; for custom costs a bracket
    /// doubling plus ternary search with tolerance [`CONJUGATE_TOL`].
    pub fn conjugate(&self, n: usize, history: &[f64], alpha: f64) -> Result<ExtReal> {
        self.conjugate_slack(n, history, alpha, 0.0)
    }

    /// Conjugate with the finiteness region widened by `slack`; lets
    /// consumers tolerate solver round-off that lands exactly on the
    /// boundary of the slope range (the value there is unchanged).
    pub fn conjugate_slack(
        &self,
        n: usize,
        history: &[f64],
        alpha: f64,
        slack: f64,
    ) -> Result<ExtReal> {
        match &self.kind {
            CostKind::Zero => {
                Ok(if alpha.abs() <= slack { ExtReal::Finite(0.0) } else { ExtReal::PosInf })
            }
            CostKind::Proportional { rate } => Ok(if alpha.abs() <= *rate + slack {
                ExtReal::Finite(0.0)
            } else {
                ExtReal::PosInf
            }),
            CostKind::Quadratic { lambda } => Ok(ExtReal::Finite(alpha * alpha / (4.0 * lambda))),
            CostKind::TruncatedQuadratic { lambda, cap } => Ok(if alpha.abs() <= *cap + slack {
                ExtReal::Finite(alpha * alpha / (4.0 * lambda))
            } else {
                ExtReal::PosInf
            }),
            CostKind::PiecewiseLinear { pieces } => {
                let min_slope = pieces.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
                let max_slope = pieces.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
                if alpha < min_slope - 1e-15 - slack || alpha > max_slope + 1e-15 + slack {
                    return Ok(ExtReal::PosInf);
                }
                // sup attained at a kink of g; kinks are intersections of
                // consecutive pieces in slope order. Also include 0.
                let mut sorted = pieces.clone();
                sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                let mut best = -self.evaluate(n, history, 0.0);
                for w in sorted.windows(2) {
                    let ((s1, c1), (s2, c2)) = (w[0], w[1]);
                    if (s2 - s1).abs() > 1e-300 {
                        let kink = (c1 - c2) / (s2 - s1);
                        best = best.max(alpha * kink - self.evaluate(n, history, kink));
                    }
                }
                Ok(ExtReal::Finite(best.max(0.0)))
            }
            CostKind::Custom { eval, .. } => {
                numeric_conjugate(|beta| eval(n, history, beta), alpha)
            }
        }
    }

    /// Spot-check of midpoint convexity and `g(0) = 0` on random triples.
    pub fn spot_check_convexity(
        &self,
        n: usize,
        history: &[f64],
        beta_range: f64,
        samples: usize,
        seed: u64,
    ) -> Result<()> {
        let g0 = self.evaluate(n, history, 0.0);
        if g0.abs() > 1e-12 {
            return Err(EngineError::Validation(format!("g(0) = {g0}, expected 0")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let a = rng.gen_range(-beta_range..beta_range);
            let b = rng.gen_range(-beta_range..beta_range);
            let ga = self.evaluate(n, history, a);
            let gb = self.evaluate(n, history, b);
            let gm = self.evaluate(n, history, 0.5 * (a + b));
            if !(ga >= 0.0 && gb >= 0.0) {
                return Err(EngineError::Validation("cost takes a negative value".into()));
            }
            if gm > 0.5 * (ga + gb) + 1e-9 * (1.0 + ga.abs() + gb.abs()) {
                return Err(EngineError::Validation(format!(
                    "midpoint convexity violated between {a} and {b}"
                )));
            }
        }
        Ok(())
    }

    /// Upper bound on `|g'|` over `|beta| <= beta_max` (numeric for custom).
    pub fn slope_bound(&self, beta_max: f64) -> f64 {
        match &self.kind {
            CostKind::Zero => 0.0,
            CostKind::Proportional { rate } => *rate,
            CostKind::Quadratic { lambda } => 2.0 * lambda * beta_max,
            CostKind::TruncatedQuadratic { lambda, cap } => cap.min(2.0 * lambda * beta_max),
            CostKind::PiecewiseLinear { pieces } => {
                pieces.iter().map(|p| p.0.abs()).fold(0.0, f64::max)
            }
            CostKind::Custom { eval, .. } => {
                let h = beta_max.max(1.0) * 1e-6;
                let right = (eval(0, &[], beta_max + h) - eval(0, &[], beta_max)) / h;
                let left = (eval(0, &[], -beta_max) - eval(0, &[], -beta_max - h)) / h;
                right.abs().max(left.abs())
            }
        }
    }

    /// Upper bound on `g''` over `|beta| <= beta_max`, when available.
    pub fn curvature_bound(&self, beta_max: f64) -> Option<f64> {
        match &self.kind {
            CostKind::Zero | CostKind::Proportional { .. } | CostKind::PiecewiseLinear { .. } => {
                None
            }
            CostKind::Quadratic { lambda } | CostKind::TruncatedQuadratic { lambda, .. } => {
                Some(2.0 * lambda)
            }
            CostKind::Custom { eval, .. } => {
                // crude numeric scan; convexity makes second differences >= 0
                let m = 32;
                let mut worst = 0.0f64;
                let h = 2.0 * beta_max / m as f64;
                for i in 1..m {
                    let b = -beta_max + i as f64 * h;
                    let d2 =
                        (eval(0, &[], b + h) - 2.0 * eval(0, &[], b) + eval(0, &[], b - h)) / (h * h);
                    worst = worst.max(d2);
                }
                Some(worst * 1.5)
            }
        }
    }
}

/// Numeric conjugate by bracket doubling plus ternary search.
fn numeric_conjugate<F: Fn(f64) -> f64>(g: F, alpha: f64) -> Result<ExtReal> {
    let phi = |beta: f64| -> Result<f64> {
        let c = g(beta);
        if c.is_nan() || c < -1e-12 {
            return Err(EngineError::Validation(format!(
                "custom cost returned invalid value {c} at beta = {beta}"
            )));
        }
        Ok(alpha * beta - c)
    };
    let mut lo = -1.0f64;
    let mut hi = 1.0f64;
    let h = 1e-7;
    for _ in 0..60 {
        let grow_right = phi(hi)? > phi(hi - h * hi.abs().max(1.0))?;
        let grow_left = phi(lo)? > phi(lo + h * lo.abs().max(1.0))?;
        if !grow_right && !grow_left {
            // sup certified interior
            let (mut a, mut b) = (lo, hi);
            while b - a > CONJUGATE_TOL {
                let m1 = a + (b - a) / 3.0;
                let m2 = b - (b - a) / 3.0;
                if phi(m1)? < phi(m2)? {
                    a = m1;
                } else {
                    b = m2;
                }
            }
            let arg = 0.5 * (a + b);
            return Ok(ExtReal::Finite(phi(arg)?.max(-0.0)));
        }
        lo *= 2.0;
        hi *= 2.0;
    }
    Ok(ExtReal::PosInf)
}

/// Argmax of `alpha*beta - g(beta)` for finite conjugates (test support for
/// the Fenchel-Young equality check).
pub fn conjugate_argmax(cost: &CostSpec, n: usize, history: &[f64], alpha: f64) -> Option<f64> {
    match &cost.kind {
        CostKind::Zero => Some(0.0),
        CostKind::Proportional { rate } => {
            if alpha.abs() <= *rate {
                Some(0.0)
            } else {
                None
            }
        }
        CostKind::Quadratic { lambda } => Some(alpha / (2.0 * lambda)),
        CostKind::TruncatedQuadratic { lambda, cap } => {
            if alpha.abs() <= *cap {
                Some(alpha / (2.0 * lambda))
            } else {
                None
            }
        }
        _ => {
            let g = |b: f64| cost.evaluate(n, history, b);
            let phi = |b: f64| alpha * b - g(b);
            let (mut a, mut b) = (-1e6, 1e6);
            while b - a > 1e-10 {
                let m1 = a + (b - a) / 3.0;
                let m2 = b - (b - a) / 3.0;
                if phi(m1) < phi(m2) {
                    a = m1;
                } else {
                    b = m2;
                }
            }
            Some(0.5 * (a + b))
        }
    }
}

/// Linear extrapolation of `h` beyond the band where its slope reaches `c`.
///
/// Equivalently the infimal convolution of `h` with `c * |.|`; that form is
/// used for custom kinds, closed forms otherwise.
pub fn truncate(h: &CostSpec, c: f64) -> Result<CostSpec> {
    if !(c > 0.0) {
        return Err(EngineError::Parameter(format!("truncation slope cap must be > 0, got {c}")));
    }
    match &h.kind {
        CostKind::Zero => Ok(CostSpec::zero()),
        CostKind::Proportional { rate } => CostSpec::proportional(rate.min(c)),
        CostKind::Quadratic { lambda } => CostSpec::truncated_quadratic(*lambda, c),
        CostKind::TruncatedQuadratic { lambda, cap } => {
            CostSpec::truncated_quadratic(*lambda, cap.min(c))
        }
        CostKind::PiecewiseLinear { pieces } => {
            let mut kept: Vec<(f64, f64)> =
                pieces.iter().copied().filter(|&(s, _)| s.abs() <= c).collect();
            for alpha in [c, -c] {
                if let ExtReal::Finite(g_alpha) = h.conjugate(0, &[], alpha)? {
                    kept.push((alpha, -g_alpha));
                }
            }
            Ok(CostSpec { kind: CostKind::PiecewiseLinear { pieces: kept } })
        }
        CostKind::Custom { eval, path_dependent, label } => {
            let inner = eval.clone();
            let cap = c;
            let trunc = move |n: usize, hist: &[f64], beta: f64| -> f64 {
                // inf-convolution with cap*|.|: minimize psi(gamma) = h(gamma) + cap*|beta - gamma|
                let psi = |gamma: f64| inner(n, hist, gamma) + cap * (beta - gamma).abs();
                let mut a = -1.0 - beta.abs();
                let mut b = 1.0 + beta.abs();
                for _ in 0..60 {
                    if psi(a) > psi(a + 1e-9 * (1.0 + a.abs()))
                        || psi(b) > psi(b - 1e-9 * (1.0 + b.abs()))
                    {
                        // still decreasing towards an endpoint; widen
                        a *= 2.0;
                        b *= 2.0;
                    } else {
                        break;
                    }
                }
                while b - a > 1e-11 * (1.0 + a.abs().max(b.abs())) {
                    let m1 = a + (b - a) / 3.0;
                    let m2 = b - (b - a) / 3.0;
                    if psi(m1) > psi(m2) {
                        a = m1;
                    } else {
                        b = m2;
                    }
                }
                psi(0.5 * (a + b)).max(0.0)
            };
            Ok(CostSpec {
                kind: CostKind::Custom {
                    eval: Arc::new(trunc),
                    path_dependent: *path_dependent,
                    label: format!("{label}^({c})"),
                },
            })
        }
    }
}

/// Per-period cost of the `N`-step rescaled model: the limiting cost at
/// time `n/N`, truncated at slope `c/sqrt(N)`, fed the interpolated price
/// path of the discrete scenario.
pub fn scaled_cost(
    h: &CostSpec,
    c: f64,
    periods: usize,
    n: usize,
    interpolated_path: &[f64],
) -> Result<CostSpec> {
    if periods == 0 {
        return Err(EngineError::Parameter("periods must be >= 1".into()));
    }
    if n > periods {
        return Err(EngineError::Parameter(format!("period {n} outside 0..={periods}")));
    }
    let cap = c / (periods as f64).sqrt();
    let truncated = truncate(h, cap)?;
    match &truncated.kind {
        CostKind::Custom { eval, path_dependent, label } => {
            // pin the interpolated path and the time index
            let inner = eval.clone();
            let path = interpolated_path.to_vec();
            let label = label.clone();
            Ok(CostSpec {
                kind: CostKind::Custom {
                    eval: Arc::new(move |_ignored, _h, beta| inner(n, &path, beta)),
                    path_dependent: *path_dependent,
                    label,
                },
            })
        }
        _ => Ok(truncated),
    }
}

/// Volatility band penalties of the scaling limit.
#[derive(Debug, Clone, Copy)]
pub struct Penalty {
    pub sigma_low: f64,
    pub sigma_high: f64,
}

impl Penalty {
    pub fn new(sigma_low: f64, sigma_high: f64) -> Result<Penalty> {
        if !(0.0 < sigma_low && sigma_low <= sigma_high) {
            return Err(EngineError::Parameter(format!(
                "need 0 < sigma_low <= sigma_high, got [{sigma_low}, {sigma_high}]"
            )));
        }
        Ok(Penalty { sigma_low, sigma_high })
    }

    /// Penalty rate `a(sigma)`: zero on the uncertainty band, quadratic
    /// variance excess scaled by the nearest band edge outside it.
    pub fn a(&self, sigma: f64) -> Result<f64> {
        if sigma < 0.0 {
            return Err(EngineError::Domain(format!("sigma must be >= 0, got {sigma}")));
        }
        let (lo, hi) = (self.sigma_low, self.sigma_high);
        Ok(if sigma <= lo {
            0.5 * (lo * lo - sigma * sigma) / lo
        } else if sigma <= hi {
            0.0
        } else {
            0.5 * (sigma * sigma - hi * hi) / hi
        })
    }

    /// Convex envelope `b(u)` with `b(u) = a(sqrt(u))^2` for `u >= 0`.
    pub fn b(&self, u: f64) -> f64 {
        let lo2 = self.sigma_low * self.sigma_low;
        if u <= -lo2 {
            -u
        } else if u < 0.0 {
            let d = lo2 - u;
            0.25 * d * d / lo2
        } else {
            let a = self.a(u.sqrt()).expect("u >= 0");
            a * a
        }
    }

    /// The elementary inequality `b(x^2 + 2xy) <= y^2` for `|x|` in the band.
    pub fn lemma_inequality_holds(&self, x: f64, y: f64) -> Result<bool> {
        let m = x.abs();
        if m < self.sigma_low - 1e-12 || m > self.sigma_high + 1e-12 {
            return Err(EngineError::Domain(format!(
                "|x| = {m} outside [{}, {}]",
                self.sigma_low, self.sigma_high
            )));
        }
        Ok(self.b(x * x + 2.0 * x * y) <= y * y + 1e-12)
    }
}

/// Limiting curvature of the conjugate cost, `Hhat_t(w)`.
#[derive(Clone)]
pub struct LimitCurvature {
    eval: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>,
    pub label: String,
}

impl fmt::Debug for LimitCurvature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LimitCurvature({})", self.label)
    }
}

impl LimitCurvature {
    pub fn constant(v: f64) -> LimitCurvature {
        LimitCurvature { eval: Arc::new(move |_, _| v), label: format!("const {v}") }
    }

    /// The quadratic-cost case `h = lambda * beta^2`: `Hhat = 1/(4 lambda)`.
    pub fn quadratic(lambda: f64) -> LimitCurvature {
        LimitCurvature {
            eval: Arc::new(move |_, _| 1.0 / (4.0 * lambda)),
            label: format!("1/(4*{lambda})"),
        }
    }

    pub fn custom<F>(f: F, label: &str) -> LimitCurvature
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        LimitCurvature { eval: Arc::new(f), label: label.into() }
    }

    pub fn evaluate(&self, t: f64, price_path: &[f64]) -> f64 {
        (self.eval)(t, price_path)
    }
}

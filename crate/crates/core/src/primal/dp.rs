//! Holding-grid dynamic program for general convex costs.
//!
//! The cost-to-go at a node is convex in the inherited holding, so it is
//! sampled on a uniform grid and linearly interpolated (which can only
//! overestimate a convex function, keeping the result an upper bound on
//! the tree value). The inner minimization over the new holding runs a
//! golden-section search, valid because the objective is convex. The grid
//! extent adapts: a coarse pass over the a-priori holding bound locates
//! the realized holdings, a fine pass resolves them; touching the fine
//! boundary triggers widening.

use crate::costs::CostSpec;
use crate::error::{EngineError, Result};
use crate::lattice::LatticeModel;
use crate::payoff::PayoffSpec;

use super::{apriori_bound, build_ledger, Backend, PriceReport, Strategy, WealthLedger};

pub(crate) const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy)]
pub struct GridConfig {
    /// Grid resolution of the fine pass.
    pub points: usize,
    /// Fixed symmetric extent `[-e, e]`; disables the adaptive passes.
    pub extent: Option<f64>,
    /// Stop width of the golden-section search, relative to the extent.
    pub gs_rel_tol: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { points: 513, extent: None, gs_rel_tol: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct DpSolution {
    pub value: f64,
    pub strategy: Strategy,
    pub ledger: WealthLedger,
    pub report: PriceReport,
}

enum ValueFn {
    Const(f64),
    Grid(Vec<f64>),
}

struct Level {
    nodes: Vec<ValueFn>,
}

pub(crate) struct Grid {
    pub(crate) lo: f64,
    pub(crate) hi: f64,
    pub(crate) step: f64,
    pub(crate) points: usize,
}

impl Grid {
    pub(crate) fn new(lo: f64, hi: f64, points: usize) -> Grid {
        Grid { lo, hi, step: (hi - lo) / (points - 1) as f64, points }
    }

    pub(crate) fn at(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.hi
        } else {
            self.lo + i as f64 * self.step
        }
    }

    pub(crate) fn interp(&self, values: &[f64], x: f64) -> f64 {
        let t = ((x - self.lo) / self.step).clamp(0.0, (self.points - 1) as f64);
        let i = (t as usize).min(self.points - 2);
        let frac = t - i as f64;
        values[i] * (1.0 - frac) + values[i + 1] * frac
    }
}

struct Solver<'a> {
    tree: &'a LatticeModel,
    cost: &'a CostSpec,
    grid: Grid,
    gs_tol: f64,
    /// Value functions per level, leaves first computed, root last.
    levels: Vec<Level>,
    histories: Vec<Vec<Vec<f64>>>,
}

impl<'a> Solver<'a> {
    fn child_value(&self, level: usize, child_id: usize, gamma: f64) -> f64 {
        match &self.levels[level].nodes[child_id] {
            ValueFn::Const(v) => *v,
            ValueFn::Grid(vals) => self.grid.interp(vals, gamma),
        }
    }

    /// Worst-case continuation for holding `gamma` taken at node `(n, id)`.
    fn continuation(&self, n: usize, id: usize, gamma: f64) -> f64 {
        let s = self.tree.levels[n][id].stock;
        let mut worst = f64::NEG_INFINITY;
        for child_id in self.tree.children_ids(id) {
            let s_child = self.tree.levels[n + 1][child_id].stock;
            let v = -gamma * (s_child - s) + self.child_value(n + 1, child_id, gamma);
            worst = worst.max(v);
        }
        worst
    }

    fn objective(&self, n: usize, id: usize, gamma_prev: f64, gamma: f64) -> f64 {
        let s = self.tree.levels[n][id].stock;
        let charge = self.cost.evaluate(n, &self.histories[n][id], (gamma - gamma_prev) * s);
        charge + self.continuation(n, id, gamma)
    }

    /// Golden-section over the grid extent; convex objective.
    fn minimize(&self, n: usize, id: usize, gamma_prev: f64) -> (f64, f64) {
        let (mut a, mut b) = (self.grid.lo, self.grid.hi);
        let mut x1 = b - GOLDEN * (b - a);
        let mut x2 = a + GOLDEN * (b - a);
        let mut f1 = self.objective(n, id, gamma_prev, x1);
        let mut f2 = self.objective(n, id, gamma_prev, x2);
        while b - a > self.gs_tol {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - GOLDEN * (b - a);
                f1 = self.objective(n, id, gamma_prev, x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + GOLDEN * (b - a);
                f2 = self.objective(n, id, gamma_prev, x2);
            }
        }
        if f1 <= f2 {
            (x1, f1)
        } else {
            (x2, f2)
        }
    }

    fn backward(&mut self, payoff: &PayoffSpec) -> Result<()> {
        let n_periods = self.tree.periods();
        let mut levels: Vec<Level> = Vec::with_capacity(n_periods + 1);
        let leaf_vals: Result<Vec<ValueFn>> = (0..self.tree.leaves().len())
            .map(|l| {
                let path = self.tree.leaf_scenario(l);
                Ok(ValueFn::Const(payoff.evaluate(&path.prices)?))
            })
            .collect();
        levels.push(Level { nodes: leaf_vals? });
        self.levels = levels;
        // self.levels is indexed by tree level; prepend placeholders so that
        // index arithmetic stays direct
        let leaves = self.levels.pop().unwrap();
        self.levels = (0..n_periods).map(|_| Level { nodes: Vec::new() }).collect();
        self.levels.push(leaves);
        for n in (0..n_periods).rev() {
            let mut nodes = Vec::with_capacity(self.tree.levels[n].len());
            for id in 0..self.tree.levels[n].len() {
                let mut vals = Vec::with_capacity(self.grid.points);
                for i in 0..self.grid.points {
                    let gp = self.grid.at(i);
                    let (_, v) = self.minimize(n, id, gp);
                    vals.push(v);
                }
                nodes.push(ValueFn::Grid(vals));
            }
            self.levels[n] = Level { nodes };
        }
        Ok(())
    }

    /// Forward pass re-running the inner minimization at the realized
    /// inherited holdings.
    fn extract(&self) -> (f64, Vec<Vec<f64>>) {
        let n_periods = self.tree.periods();
        let mut holdings: Vec<Vec<f64>> = Vec::with_capacity(n_periods);
        let mut value = 0.0;
        let mut prev: Vec<f64> = vec![0.0]; // inherited holding per node at level n
        for n in 0..n_periods {
            let mut level_h = Vec::with_capacity(self.tree.levels[n].len());
            let mut next_prev = vec![0.0; self.tree.levels[n + 1].len()];
            for id in 0..self.tree.levels[n].len() {
                let (g, v) = self.minimize(n, id, prev[id]);
                if n == 0 {
                    value = v;
                }
                level_h.push(g);
                for child_id in self.tree.children_ids(id) {
                    next_prev[child_id] = g;
                }
            }
            holdings.push(level_h);
            prev = next_prev;
        }
        (value, holdings)
    }
}

fn payoff_cap(tree: &LatticeModel, payoff: &PayoffSpec) -> Result<f64> {
    let mut cap = 0.0f64;
    for l in 0..tree.leaves().len() {
        let path = tree.leaf_scenario(l);
        cap = cap.max(payoff.evaluate(&path.prices)?);
    }
    Ok(cap)
}

fn certified_error(tree: &LatticeModel, cost: &CostSpec, grid: &Grid, gs_tol: f64) -> f64 {
    let s_max = tree
        .levels
        .iter()
        .flat_map(|lvl| lvl.iter().map(|nd| nd.stock))
        .fold(0.0f64, f64::max);
    let beta_max = (grid.hi - grid.lo) * s_max;
    let slope = cost.slope_bound(beta_max);
    // interpolation error of a convex function: curvature * step^2 / 8 when a
    // curvature bound exists, else slope-variation * step / 4
    let per_level = match cost.curvature_bound(beta_max) {
        Some(curv) => (curv * s_max * s_max * grid.step * grid.step / 8.0)
            .min(slope * s_max * grid.step / 2.0),
        None => slope * s_max * grid.step / 2.0,
    };
    let n = tree.periods() as f64;
    // the golden-section window contributes at most its width times the
    // objective's Lipschitz bound in gamma
    let obj_lipschitz = slope * s_max + 2.0 * s_max;
    n * (per_level + gs_tol * obj_lipschitz)
}

pub fn solve_primal_dp(
    tree: &LatticeModel,
    cost: &CostSpec,
    payoff: &PayoffSpec,
    grid: &GridConfig,
) -> Result<DpSolution> {
    if grid.points < 3 {
        return Err(EngineError::Parameter("grid needs at least 3 points".into()));
    }
    let histories: Vec<Vec<Vec<f64>>> = (0..tree.periods())
        .map(|n| (0..tree.levels[n].len()).map(|id| tree.price_prefix(n, id)).collect())
        .collect();

    let solve_once = |lo: f64, hi: f64, points: usize| -> Result<(f64, Vec<Vec<f64>>, Grid)> {
        let g = Grid::new(lo, hi, points);
        let gs_tol = grid.gs_rel_tol * (hi - lo);
        let mut solver = Solver {
            tree,
            cost,
            grid: Grid::new(lo, hi, points),
            gs_tol,
            levels: Vec::new(),
            histories: histories.clone(),
        };
        solver.backward(payoff)?;
        let (value, holdings) = solver.extract();
        Ok((value, holdings, g))
    };

    let (value, holdings, final_grid) = match grid.extent {
        Some(e) => {
            if !(e > 0.0) {
                return Err(EngineError::Parameter("grid extent must be > 0".into()));
            }
            solve_once(-e, e, grid.points)?
        }
        None => {
            let cap = payoff_cap(tree, payoff)? + 1.0;
            let bound = apriori_bound(&tree.params, cap)?;
            let mut lo = -bound;
            let mut hi = bound;
            let coarse = grid.points.min(129);
            let (_, coarse_holdings, coarse_grid) = solve_once(lo, hi, coarse)?;
            let flat: Vec<f64> =
                coarse_holdings.iter().flat_map(|l| l.iter().copied()).chain([0.0]).collect();
            let gmin = flat.iter().copied().fold(f64::INFINITY, f64::min);
            let gmax = flat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = (gmax - gmin).max(0.5);
            lo = gmin - 0.25 * span - 2.0 * coarse_grid.step;
            hi = gmax + 0.25 * span + 2.0 * coarse_grid.step;
            let mut result = None;
            for _ in 0..6 {
                let (v, h, g) = solve_once(lo, hi, grid.points)?;
                let flat: Vec<f64> = h.iter().flat_map(|l| l.iter().copied()).collect();
                let fmin = flat.iter().copied().fold(f64::INFINITY, f64::min);
                let fmax = flat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let margin = 2.0 * g.step + self_tol(&g);
                if fmin > lo + margin && fmax < hi - margin {
                    result = Some((v, h, g));
                    break;
                }
                let width = hi - lo;
                if fmin <= lo + margin {
                    lo -= width;
                }
                if fmax >= hi - margin {
                    hi += width;
                }
            }
            result.ok_or_else(|| {
                EngineError::Capacity("holding-grid widening did not stabilize".into())
            })?
        }
    };

    let mut strategy = Strategy { initial_capital: value, holdings };
    let mut ledger = build_ledger(tree, &strategy, cost)?;
    // close any golden-section residue so the ledger super-replicates exactly
    let mut worst = f64::INFINITY;
    for (l, y) in ledger.values[tree.periods()].iter().enumerate() {
        let f = payoff.evaluate(&tree.leaf_scenario(l).prices)?;
        worst = worst.min(y - f);
    }
    let mut value = value;
    if worst < 0.0 {
        value -= worst;
        strategy.initial_capital = value;
        for level in ledger.values.iter_mut() {
            for y in level.iter_mut() {
                *y -= worst;
            }
        }
    }
    let grid_error_bound =
        certified_error(tree, cost, &final_grid, grid.gs_rel_tol * (final_grid.hi - final_grid.lo));
    Ok(DpSolution {
        value,
        strategy,
        ledger,
        report: PriceReport {
            value,
            backend: Backend::Dp,
            grid_error_bound,
            solver_iterations: 0,
        },
    })
}

fn self_tol(g: &Grid) -> f64 {
    1e-9 * (g.hi - g.lo)
}

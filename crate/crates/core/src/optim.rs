//! Limited-memory BFGS with box constraints handled by projection.
//!
//! Variables sitting on a bound whose gradient points outward are frozen for
//! the current iteration; the two-loop recursion runs on the remaining free
//! variables and the step is taken along the projected path with an Armijo
//! backtracking search. Convergence is declared when the infinity norm of
//! the projected gradient drops below the tolerance, or when an accepted step
//! improves the objective by less than `function_tolerance` relative to its
//! magnitude (large sums cannot resolve smaller changes).

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub function_tolerance: f64,
    pub armijo_c1: f64,
    pub max_line_search_steps: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 2000,
            gradient_tolerance: 1e-6,
            function_tolerance: 2.2e-9,
            armijo_c1: 1e-4,
            max_line_search_steps: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub projected_gradient_norm: f64,
}

/// Closed interval bound for one variable; infinite ends are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub lower: f64,
    pub upper: f64,
}

impl Bound {
    pub const FREE: Bound = Bound { lower: f64::NEG_INFINITY, upper: f64::INFINITY };

    fn clamp(self, v: f64) -> f64 {
        v.max(self.lower).min(self.upper)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn projected_gradient(x: &[f64], g: &[f64], bounds: &[Bound]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(bounds)
        .map(|((&xi, &gi), b)| {
            if (xi <= b.lower && gi > 0.0) || (xi >= b.upper && gi < 0.0) {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Minimises `f`, which writes the gradient into its second argument and
/// returns the objective. `bounds` is either empty (unconstrained) or has one
/// entry per variable.
pub fn minimize<F>(mut f: F, x0: &[f64], bounds: &[Bound], config: &LbfgsConfig) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let bounds: Vec<Bound> = if bounds.is_empty() { vec![Bound::FREE; n] } else { bounds.to_vec() };
    assert_eq!(bounds.len(), n, "one bound per variable");

    let mut x: Vec<f64> = x0.iter().zip(&bounds).map(|(&v, b)| b.clamp(v)).collect();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(config.memory);

    let mut pg = projected_gradient(&x, &g, &bounds);
    let mut pg_norm = inf_norm(&pg);
    let mut iterations = 0;
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];

    while iterations < config.max_iterations {
        if pg_norm < config.gradient_tolerance {
            return Minimum { x, value: fx, iterations, converged: true, projected_gradient_norm: pg_norm };
        }
        iterations += 1;

        // two-loop recursion on the free variables
        let mut d: Vec<f64> = pg.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            if gamma.is_finite() && gamma > 0.0 {
                d.iter_mut().for_each(|di| *di *= gamma);
            }
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        for i in 0..n {
            if pg[i] == 0.0 {
                d[i] = 0.0;
            }
        }
        if !(dot(&g, &d) < 0.0) {
            history.clear();
            d = pg.iter().map(|v| -v).collect();
        }
        if history.is_empty() {
            // first step or restart: keep the initial move modest
            let scale = 1.0 / inf_norm(&d).max(1.0);
            d.iter_mut().for_each(|di| *di *= scale);
        }

        let mut step = 1.0;
        let mut accepted = false;
        let mut stalled = false;
        for _ in 0..config.max_line_search_steps {
            for i in 0..n {
                trial[i] = bounds[i].clamp(x[i] + step * d[i]);
            }
            let f_trial = f(&trial, &mut g_trial);
            let s: Vec<f64> = trial.iter().zip(&x).map(|(t, xi)| t - xi).collect();
            let decrease = dot(&g, &s);
            if f_trial.is_finite() && decrease < 0.0 && f_trial <= fx + config.armijo_c1 * decrease {
                let y: Vec<f64> = g_trial.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-10 * libm::sqrt(dot(&s, &s) * dot(&y, &y)) {
                    if history.len() == config.memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                stalled = fx - f_trial <= config.function_tolerance * fx.abs().max(f_trial.abs()).max(1.0);
                x.copy_from_slice(&trial);
                g.copy_from_slice(&g_trial);
                fx = f_trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        pg = projected_gradient(&x, &g, &bounds);
        pg_norm = inf_norm(&pg);
        if stalled {
            return Minimum { x, value: fx, iterations, converged: true, projected_gradient_norm: pg_norm };
        }
        if !accepted {
            if history.is_empty() {
                break;
            }
            history.clear();
        }
    }
    let converged = pg_norm < config.gradient_tolerance;
    Minimum { x, value: fx, iterations, converged, projected_gradient_norm: pg_norm }
}

//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LbfgsConfig<T> {
    /// Number of correction pairs kept.
    pub memory: usize,
    pub max_iters: usize,
    /// Converged when `|g|_inf <= grad_tol * max(1, |f|)`.
    pub grad_tol: T,
    /// Armijo constant.
    pub c1: T,
    /// Curvature constant.
    pub c2: T,
    pub max_line_search: usize,
}

impl<T: Real> Default for LbfgsConfig<T> {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iters: 100,
            grad_tol: T::lit(1e-8),
            c1: T::lit(1e-4),
            c2: T::lit(0.9),
            max_line_search: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// The line search could not find a decreasing step; `x` is the best point seen.
    LineSearchFailed,
    NonFinite,
}

#[derive(Clone, Debug)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub f: T,
    pub grad: Vec<T>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm_inf<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

fn is_finite<T: Real>(f: T, g: &[T]) -> bool {
    f.is_finite() && g.iter().all(|v| v.is_finite())
}

struct Evaluator<F> {
    f: F,
    count: usize,
}

impl<F> Evaluator<F> {
    fn eval<T: Real>(&mut self, x: &[T], g: &mut [T]) -> T
    where
        F: FnMut(&[T], &mut [T]) -> T,
    {
        self.count += 1;
        (self.f)(x, g)
    }
}

/// Minimizes `f`, which returns the objective and writes the gradient into
/// its second argument.
pub fn minimize<T, F>(f: F, x0: &[T], cfg: &LbfgsConfig<T>) -> Minimum<T>
where
    T: Real,
    F: FnMut(&[T], &mut [T]) -> T,
{
    let n = x0.len();
    let mut ev = Evaluator { f, count: 0 };
    let mut x = x0.to_vec();
    let mut g = vec![T::zero(); n];
    let mut fx = ev.eval(&x, &mut g);
    let done = |fx: T, g: &[T]| norm_inf(g) <= cfg.grad_tol * fx.abs().max(T::one());

    if !is_finite(fx, &g) {
        return Minimum {
            x,
            f: fx,
            grad: g,
            iterations: 0,
            evaluations: ev.count,
            termination: Termination::NonFinite,
        };
    }
    let mut history: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::with_capacity(cfg.memory);
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    for iter in 0..cfg.max_iters {
        if done(fx, &g) {
            termination = Termination::Converged;
            break;
        }
        iterations = iter + 1;

        // two-loop recursion
        let mut d: Vec<T> = g.iter().map(|&v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = *rho * dot(s, &d);
            for (di, &yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = match history.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => T::one() / norm_inf(&g).max(T::one()),
        };
        d.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = *rho * dot(y, &d);
            for (di, &si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        let mut slope = dot(&g, &d);
        if !(slope < T::zero()) {
            // lost descent; restart from steepest descent
            history.clear();
            let scale = T::one() / norm_inf(&g).max(T::one());
            d = g.iter().map(|&v| -v * scale).collect();
            slope = dot(&g, &d);
        }

        match line_search(&mut ev, &x, fx, &d, slope, cfg) {
            Some((alpha, f_new, g_new)) => {
                let s: Vec<T> = d.iter().map(|&v| alpha * v).collect();
                let y: Vec<T> = g_new.iter().zip(&g).map(|(&a, &b)| a - b).collect();
                x.iter_mut().zip(&s).for_each(|(xi, &si)| *xi += si);
                let sy = dot(&s, &y);
                if sy > T::epsilon() * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
                    if history.len() == cfg.memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, T::one() / sy));
                }
                fx = f_new;
                g = g_new;
                if !is_finite(fx, &g) {
                    termination = Termination::NonFinite;
                    break;
                }
            }
            None => {
                termination = Termination::LineSearchFailed;
                break;
            }
        }
    }
    if termination == Termination::MaxIterations && done(fx, &g) {
        termination = Termination::Converged;
    }
    Minimum {
        x,
        f: fx,
        grad: g,
        iterations,
        evaluations: ev.count,
        termination,
    }
}

/// Strong-Wolfe bracketing and zoom. Returns the step, objective and gradient.
fn line_search<T, F>(
    ev: &mut Evaluator<F>,
    x: &[T],
    f0: T,
    d: &[T],
    slope0: T,
    cfg: &LbfgsConfig<T>,
) -> Option<(T, T, Vec<T>)>
where
    T: Real,
    F: FnMut(&[T], &mut [T]) -> T,
{
    let n = x.len();
    let mut xt = vec![T::zero(); n];
    let mut gt = vec![T::zero(); n];
    let mut phi = |alpha: T, ev: &mut Evaluator<F>, gt: &mut Vec<T>| -> (T, T) {
        for i in 0..n {
            xt[i] = x[i] + alpha * d[i];
        }
        let f = ev.eval(&xt, gt);
        (f, dot(gt, d))
    };

    let mut a_prev = T::zero();
    let mut f_prev = f0;
    let mut s_prev = slope0;
    let mut alpha = T::one();
    let mut best: Option<(T, T, Vec<T>)> = None;
    let mut evals = 0;

    loop {
        if evals >= cfg.max_line_search {
            return best;
        }
        evals += 1;
        let (fa, sa) = phi(alpha, ev, &mut gt);
        if !fa.is_finite() || fa > f0 + cfg.c1 * alpha * slope0 || (evals > 1 && fa >= f_prev) {
            return zoom(
                ev,
                &mut phi,
                (a_prev, f_prev, s_prev),
                (alpha, fa, sa),
                f0,
                slope0,
                cfg,
                evals,
                &mut gt,
                best,
            );
        }
        if fa < f0 {
            best = Some((alpha, fa, gt.clone()));
        }
        if sa.abs() <= -cfg.c2 * slope0 {
            return Some((alpha, fa, gt));
        }
        if sa >= T::zero() {
            return zoom(
                ev,
                &mut phi,
                (alpha, fa, sa),
                (a_prev, f_prev, s_prev),
                f0,
                slope0,
                cfg,
                evals,
                &mut gt,
                best,
            );
        }
        a_prev = alpha;
        f_prev = fa;
        s_prev = sa;
        alpha *= T::lit(2.0);
    }
}

/// Minimizer of the cubic interpolating two points with slopes, clamped to
/// the interior of the bracket; bisection when degenerate.
fn cubic_step<T: Real>(a: (T, T, T), b: (T, T, T)) -> T {
    let (a0, f0, s0) = a;
    let (a1, f1, s1) = b;
    let lo = a0.min(a1);
    let hi = a0.max(a1);
    let width = hi - lo;
    let d1 = s0 + s1 - T::lit(3.0) * (f0 - f1) / (a0 - a1);
    let disc = d1 * d1 - s0 * s1;
    let mid = (a0 + a1) * T::lit(0.5);
    if !(disc >= T::zero()) {
        return mid;
    }
    let d2 = disc.sqrt() * (a1 - a0).signum();
    let t = a1 - (a1 - a0) * (s1 + d2 - d1) / (s1 - s0 + T::lit(2.0) * d2);
    let margin = T::lit(0.1) * width;
    if !t.is_finite() || t < lo + margin || t > hi - margin {
        mid
    } else {
        t
    }
}

#[allow(clippy::too_many_arguments)]
fn zoom<T, F, P>(
    ev: &mut Evaluator<F>,
    phi: &mut P,
    mut lo: (T, T, T),
    mut hi: (T, T, T),
    f0: T,
    slope0: T,
    cfg: &LbfgsConfig<T>,
    mut evals: usize,
    gt: &mut Vec<T>,
    mut best: Option<(T, T, Vec<T>)>,
) -> Option<(T, T, Vec<T>)>
where
    T: Real,
    F: FnMut(&[T], &mut [T]) -> T,
    P: FnMut(T, &mut Evaluator<F>, &mut Vec<T>) -> (T, T),
{
    while evals < cfg.max_line_search {
        evals += 1;
        let alpha = if hi.1.is_finite() {
            cubic_step(lo, hi)
        } else {
            (lo.0 + hi.0) * T::lit(0.5)
        };
        let (fa, sa) = phi(alpha, ev, gt);
        if fa.is_finite() && fa < f0 && best.as_ref().is_none_or(|b| fa < b.1) {
            best = Some((alpha, fa, gt.clone()));
        }
        if !fa.is_finite() || fa > f0 + cfg.c1 * alpha * slope0 || fa >= lo.1 {
            hi = (alpha, fa, sa);
        } else {
            if sa.abs() <= -cfg.c2 * slope0 {
                return Some((alpha, fa, gt.clone()));
            }
            if sa * (hi.0 - lo.0) >= T::zero() {
                hi = lo;
            }
            lo = (alpha, fa, sa);
        }
        if (hi.0 - lo.0).abs() <= T::epsilon() * lo.0.abs().max(T::one()) {
            break;
        }
    }
    best
}

//! Proximal-gradient stages with adaptive line search, the homotopy
//! continuation over `lambda`, and the fixed-`lambda` / greedy baselines.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model_space::{LeastSquaresProblem, Vector};
use crate::norms::{self, NormFamily};

/// Cap on `L <- gamma_inc * L` multiplications inside one line search.
pub const MAX_DOUBLINGS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomotopyParams {
    pub lambda_tgt: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub delta_prime: f64,
    pub l_min: f64,
    pub gamma_inc: f64,
    pub gamma_dec: f64,
    pub max_stage_iters: usize,
    pub max_total_iters: usize,
}

impl HomotopyParams {
    pub const DEFAULT_ETA: f64 = 0.6;
    pub const DEFAULT_DELTA_PRIME: f64 = 0.2;
    pub const DEFAULT_L_MIN: f64 = 1e-6;
    pub const DEFAULT_GAMMA_INC: f64 = 2.0;
    pub const DEFAULT_GAMMA_DEC: f64 = 2.0;
    pub const DEFAULT_MAX_STAGE_ITERS: usize = 10_000;
    pub const DEFAULT_MAX_TOTAL_ITERS: usize = 100_000;

    pub fn new(lambda_tgt: f64, epsilon: f64) -> Self {
        HomotopyParams {
            lambda_tgt,
            epsilon,
            eta: Self::DEFAULT_ETA,
            delta_prime: Self::DEFAULT_DELTA_PRIME,
            l_min: Self::DEFAULT_L_MIN,
            gamma_inc: Self::DEFAULT_GAMMA_INC,
            gamma_dec: Self::DEFAULT_GAMMA_DEC,
            max_stage_iters: Self::DEFAULT_MAX_STAGE_ITERS,
            max_total_iters: Self::DEFAULT_MAX_TOTAL_ITERS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let unit = |v: f64| v.is_finite() && v > 0.0 && v < 1.0;
        if !pos(self.lambda_tgt) {
            return Err(Error::contract("lambda_tgt must be > 0"));
        }
        if !pos(self.epsilon) {
            return Err(Error::contract("epsilon must be > 0"));
        }
        if !unit(self.eta) {
            return Err(Error::contract("eta must lie in (0, 1)"));
        }
        if !unit(self.delta_prime) {
            return Err(Error::contract("delta_prime must lie in (0, 1)"));
        }
        if !pos(self.l_min) {
            return Err(Error::contract("l_min must be > 0"));
        }
        if !(self.gamma_inc.is_finite() && self.gamma_inc > 1.0) {
            return Err(Error::contract("gamma_inc must be > 1"));
        }
        if !(self.gamma_dec.is_finite() && self.gamma_dec >= 1.0) {
            return Err(Error::contract("gamma_dec must be >= 1"));
        }
        if self.max_stage_iters == 0 || self.max_total_iters == 0 {
            return Err(Error::contract("iteration caps must be positive"));
        }
        Ok(())
    }
}

/// One logged iterate. Record 0 of every trace is the starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub stage: usize,
    pub lambda: f64,
    pub iter_stage: usize,
    pub iter_global: usize,
    /// `f(x) + lambda ||x||` at this record's `lambda`.
    pub objective: f64,
    pub loss: f64,
    pub norm: f64,
    pub stop_quantity: Option<f64>,
    pub k: usize,
    pub m: Option<f64>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterateTrace {
    pub records: Vec<TraceRecord>,
}

impl IterateTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Number of iterations taken (the initial record is not an iteration).
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    /// `(stage, lambda, iterations)` for every stage that ran, in order.
    pub fn stages(&self) -> Vec<(usize, f64, usize)> {
        let mut out: Vec<(usize, f64, usize)> = Vec::new();
        for r in self.records.iter().skip(1) {
            match out.last_mut() {
                Some(last) if last.0 == r.stage => last.2 += 1,
                _ => out.push((r.stage, r.lambda, 1)),
            }
        }
        out
    }
}

/// What a capped run had reached when it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialRun {
    pub x: Vector,
    pub trace: IterateTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutput {
    pub x: Vector,
    /// Last accepted line-search constant (`None` for SVP).
    pub m: Option<f64>,
    pub trace: IterateTrace,
}

pub type Observer<'a> = &'a mut dyn FnMut(&TraceRecord, &Vector);

/// `m_{lambda,L}(y, x) = f(y) + <grad f(y), x - y> + L/2 ||x - y||^2 + lambda ||x||`.
pub fn model_value(
    problem: &LeastSquaresProblem,
    fam: &NormFamily,
    lambda: f64,
    l: f64,
    y: &Vector,
    x: &Vector,
) -> Result<f64> {
    if !(l > 0.0) || !(lambda >= 0.0) {
        return Err(Error::contract("model_value needs L > 0 and lambda >= 0"));
    }
    check_dim("model_value (x)", problem.dim(), x.len())?;
    let (fy, gy) = problem.value_and_gradient(y)?;
    let metric = problem.metric();
    let d = x - y;
    Ok(fy + metric.inner_unchecked(&gy, &d) + 0.5 * l * metric.norm_sq_unchecked(&d) + lambda * fam.norm_value(x)?)
}

/// `Prox_{lambda,L}(y) = prox_{lambda/L}(y - grad f(y) / L)`.
pub fn prox_step(problem: &LeastSquaresProblem, fam: &NormFamily, lambda: f64, l: f64, y: &Vector) -> Result<Vector> {
    if !(l > 0.0) {
        return Err(Error::contract("prox_step needs L > 0"));
    }
    fam.check_metric(problem.metric())?;
    let (_, g) = problem.value_and_gradient(y)?;
    fam.prox(&(y - g / l), lambda / l)
}

/// Line search: grow `L` by `gamma_inc` until the proximal point lies under
/// the quadratic model. Returns the accepted point and `M = L`.
pub fn backtrack(
    problem: &LeastSquaresProblem,
    fam: &NormFamily,
    lambda: f64,
    x: &Vector,
    l: f64,
    gamma_inc: f64,
) -> Result<(Vector, f64)> {
    if !(l > 0.0 && l.is_finite()) || !(gamma_inc > 1.0) {
        return Err(Error::contract("backtrack needs L > 0 and gamma_inc > 1"));
    }
    fam.check_metric(problem.metric())?;
    let state = State::at(problem, fam, x)?;
    let (next, m) = backtrack_state(problem, fam, lambda, &state, l, gamma_inc)?;
    Ok((next.x, m))
}

/// One proximal-gradient stage at fixed `lambda`, stopped once
/// `||M_t (x_{t-1} - x_t) + grad f(x_t) - grad f(x_{t-1})||* <= eps`.
pub fn prox_grad_stage(
    problem: &LeastSquaresProblem,
    fam: &NormFamily,
    lambda: f64,
    x0: &Vector,
    l0: f64,
    eps: f64,
    params: &HomotopyParams,
) -> Result<SolveOutput> {
    prox_grad_stage_with(problem, fam, lambda, x0, l0, eps, params, &mut |_, _| {})
}

#[allow(clippy::too_many_arguments)]
pub fn prox_grad_stage_with(
    problem: &LeastSquaresProblem,
    fam: &NormFamily,
    lambda: f64,
    x0: &Vector,
    l0: f64,
    eps: f64,
    params: &HomotopyParams,
    observer: Observer<'_>,
) -> Result<SolveOutput> {
    check_inputs(problem, fam, params)?;
    check_dim("prox_grad_stage (x0)", problem.dim(), x0.len())?;
    if !(lambda > 0.0 && eps > 0.0) {
        return Err(Error::contract("prox_grad_stage needs lambda > 0 and eps > 0"));
    }
    if !(l0 >= params.l_min && l0.is_finite()) {
        return Err(Error::contract("prox_grad_stage needs L0 >= L_min"));
    }
    let mut engine = Engine::new(problem, fam, params, observer);
    let start = State::at(problem, fam, x0)?;
    engine.record_start(lambda, &start);
    let (s, m) = engine.stage(1, lambda, start, l0, eps)?;
    Ok(engine.finish(s.x, Some(m)))
}

/// Number of intermediate stages, `floor(log(lambda_tgt / lambda_0) / log(eta))`,
/// or 0 when `lambda_tgt >= lambda_0`.
pub fn stage_count(lambda0: f64, lambda_tgt: f64, eta: f64) -> usize {
    if !(lambda_tgt < lambda0) {
        return 0;
    }
    ((lambda_tgt / lambda0).ln() / eta.ln()).floor() as usize
}

/// The `(lambda, tolerance)` pair of every stage, final stage last.
pub fn stage_schedule(lambda0: f64, params: &HomotopyParams) -> Vec<(f64, f64)> {
    let n = stage_count(lambda0, params.lambda_tgt, params.eta);
    let mut out = Vec::with_capacity(n + 1);
    let mut lam = lambda0;
    for _ in 0..n {
        let next = params.eta * lam;
        out.push((next, params.delta_prime * lam));
        lam = next;
    }
    out.push((params.lambda_tgt, params.epsilon));
    out
}

/// Proximal-gradient homotopy: start at 0 with `lambda_0 = ||A* b||*`, shrink
/// `lambda` by `eta` per stage, warm-start every stage, and finish at
/// `lambda_tgt` with tolerance `epsilon`.
pub fn homotopy(problem: &LeastSquaresProblem, fam: &NormFamily, params: &HomotopyParams) -> Result<SolveOutput> {
    homotopy_with(problem, fam, params, &mut |_, _| {})
}

pub fn homotopy_with(
    problem: &LeastSquaresProblem,
    fam: &NormFamily,
    params: &HomotopyParams,
    observer: Observer<'_>,
) -> Result<SolveOutput> {
    check_inputs(problem, fam, params)?;
    let atb = problem.op().adjoint_unchecked(problem.b(), problem.metric());
    let lambda0 = fam.dual_unchecked(&atb);
    let mut engine = Engine::new(problem, fam, params, observer);
    let mut state = State::at(problem, fam, &Vector::zeros(problem.dim()))?;
    if lambda0 == 0.0 {
        // b in the null space of A*: zero is optimal for every lambda
        engine.record_start(params.lambda_tgt, &state);
        return Ok(engine.finish(state.x, None));
    }
    let schedule = stage_schedule(lambda0, params);
    engine.record_start(schedule[0].0, &state);
    let mut m = params.l_min;
    for (i, (lambda, tol)) in schedule.into_iter().enumerate() {
        let (s, mm) = engine.stage(i + 1, lambda, state, m, tol)?;
        state = s;
        m = mm;
    }
    Ok(engine.finish(state.x, Some(m)))
}

/// `||A* b||*`, the smallest `lambda` for which 0 is optimal.
pub fn lambda_max(problem: &LeastSquaresProblem, fam: &NormFamily) -> Result<f64> {
    let atb = problem.op().adjoint_unchecked(problem.b(), problem.metric());
    fam.dual_norm_value(&atb)
}

/// Plain proximal gradient at fixed `lambda` from zero.
pub fn baseline_pg(
    problem: &LeastSquaresProblem,
    fam: &NormFamily,
    lambda: f64,
    eps: f64,
    params: &HomotopyParams,
) -> Result<SolveOutput> {
    baseline_pg_with(problem, fam, lambda, eps, params, &mut |_, _| {})
}

pub fn baseline_pg_with(
    problem: &LeastSquaresProblem,
    fam: &NormFamily,
    lambda: f64,
    eps: f64,
    params: &HomotopyParams,
    observer: Observer<'_>,
) -> Result<SolveOutput> {
    let x0 = Vector::zeros(problem.dim());
    prox_grad_stage_with(problem, fam, lambda, &x0, params.l_min, eps, params, observer)
}

/// Accelerated proximal gradient (Nesterov/FISTA momentum) with the same line
/// search. The stopping quantity is evaluated at each proximal point.
pub fn baseline_apg(
    problem: &LeastSquaresProblem,
    fam: &NormFamily,
    lambda: f64,
    eps: f64,
    params: &HomotopyParams,
) -> Result<SolveOutput> {
    baseline_apg_with(problem, fam, lambda, eps, params, false, &mut |_, _| {})
}

/// `restart` resets the momentum whenever it points against the last step.
pub fn baseline_apg_with(
    problem: &LeastSquaresProblem,
    fam: &NormFamily,
    lambda: f64,
    eps: f64,
    params: &HomotopyParams,
    restart: bool,
    observer: Observer<'_>,
) -> Result<SolveOutput> {
    check_inputs(problem, fam, params)?;
    if !(lambda > 0.0 && eps > 0.0) {
        return Err(Error::contract("APG needs lambda > 0 and eps > 0"));
    }
    let metric = problem.metric();
    let mut engine = Engine::new(problem, fam, params, observer);
    let mut x_prev = State::at(problem, fam, &Vector::zeros(problem.dim()))?;
    engine.record_start(lambda, &x_prev);
    let mut y = x_prev.clone();
    let mut t = 1.0_f64;
    let mut l = params.l_min;
    let cap = params.max_stage_iters;
    for it in 1..=cap {
        engine.check_total(&x_prev)?;
        let (x, m) = backtrack_state(problem, fam, lambda, &y, l, params.gamma_inc)?;
        l = params.l_min.max(m / params.gamma_dec);
        let stop = stop_quantity(fam, &y, &x, m);
        engine.record(1, lambda, it, Some(stop), Some(m), &x);
        if stop <= eps {
            return Ok(engine.finish(x.x, Some(m)));
        }
        let mut t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mut beta = (t - 1.0) / t_next;
        if restart {
            let step = &x.x - &x_prev.x;
            if metric.inner_unchecked(&(&y.x - &x.x), &step) > 0.0 {
                t_next = 1.0;
                beta = 0.0;
            }
        }
        let yx = &x.x + (&x.x - &x_prev.x) * beta;
        let ay = &x.ax + (&x.ax - &x_prev.ax) * beta;
        let (loss, grad) = problem.eval_from_image(&ay)?;
        y = State {
            norm: fam.norm_unchecked(&yx),
            x: yx,
            ax: ay,
            loss,
            grad,
        };
        x_prev = x;
        t = t_next;
    }
    Err(engine.limit(cap, x_prev.x))
}

/// Singular value projection: gradient step followed by the best rank-`rank_k`
/// approximation, for a fixed number of iterations.
pub fn baseline_svp(
    problem: &LeastSquaresProblem,
    fam: &NormFamily,
    rank_k: usize,
    step: f64,
    iters: usize,
) -> Result<SolveOutput> {
    baseline_svp_with(problem, fam, rank_k, step, iters, &mut |_, _| {})
}

pub fn baseline_svp_with(
    problem: &LeastSquaresProblem,
    fam: &NormFamily,
    rank_k: usize,
    step: f64,
    iters: usize,
    observer: Observer<'_>,
) -> Result<SolveOutput> {
    let NormFamily::Nuclear { d1, d2 } = *fam else {
        return Err(Error::contract("SVP needs the nuclear (matrix) family"));
    };
    fam.validate()?;
    fam.check_metric(problem.metric())?;
    if rank_k == 0 || !(step > 0.0 && step.is_finite()) {
        return Err(Error::contract("SVP needs rank_k >= 1 and step > 0"));
    }
    // SVP has no lambda; the line-search fields are unused
    let params = HomotopyParams {
        max_stage_iters: iters.max(1),
        max_total_iters: iters.max(1),
        ..HomotopyParams::new(1.0, 1.0)
    };
    let mut engine = Engine::new(problem, fam, &params, observer);
    let mut state = State::at(problem, fam, &Vector::zeros(problem.dim()))?;
    engine.record_start(0.0, &state);
    for it in 1..=iters {
        let z = &state.x - &state.grad * step;
        let svd = norms::thin_svd(norms::as_matrix(&z, d1, d2))?.keep(rank_k);
        let sigma: Vec<f64> = svd.sigma.iter().cloned().collect();
        let x = norms::flatten(&svd.reconstruct(&sigma));
        state = State::at(problem, fam, &x)?;
        engine.record(1, 0.0, it, None, None, &state);
    }
    Ok(engine.finish(state.x, None))
}

fn check_inputs(problem: &LeastSquaresProblem, fam: &NormFamily, params: &HomotopyParams) -> Result<()> {
    params.validate()?;
    fam.validate()?;
    fam.check_metric(problem.metric())
}

fn stop_quantity(fam: &NormFamily, prev: &State, next: &State, m: f64) -> f64 {
    let diff = (&prev.x - &next.x) * m + &next.grad - &prev.grad;
    fam.dual_unchecked(&diff)
}

/// An iterate with its cached image, loss, gradient and norm.
#[derive(Debug, Clone)]
struct State {
    x: Vector,
    ax: Vector,
    loss: f64,
    grad: Vector,
    norm: f64,
}

impl State {
    fn at(problem: &LeastSquaresProblem, fam: &NormFamily, x: &Vector) -> Result<State> {
        check_dim("iterate", problem.dim(), x.len())?;
        let ax = problem.op().apply_unchecked(x);
        let (loss, grad) = problem.eval_from_image(&ax)?;
        Ok(State {
            x: x.clone(),
            ax,
            loss,
            grad,
            norm: fam.norm_unchecked(x),
        })
    }
}

// The acceptance test `phi(x+) <= m_{lambda,L}(x, x+)` is evaluated in its
// equivalent form `||A d||^2 <= L ||d||_u^2` with `d = x+ - x`, which is free
// of the cancellation between nearly equal objective values.
fn backtrack_state(
    problem: &LeastSquaresProblem,
    fam: &NormFamily,
    lambda: f64,
    s: &State,
    l: f64,
    gamma_inc: f64,
) -> Result<(State, f64)> {
    let metric = problem.metric();
    let mut l = l;
    for _ in 0..=MAX_DOUBLINGS {
        let xp = fam.prox(&(&s.x - &s.grad / l), lambda / l)?;
        let d = &xp - &s.x;
        let ad = problem.op().apply_unchecked(&d);
        if ad.norm_squared() <= l * metric.norm_sq_unchecked(&d) {
            let ax = &s.ax + ad;
            let (loss, grad) = problem.eval_from_image(&ax)?;
            let norm = fam.norm_unchecked(&xp);
            return Ok((
                State {
                    x: xp,
                    ax,
                    loss,
                    grad,
                    norm,
                },
                l,
            ));
        }
        l *= gamma_inc;
        if !l.is_finite() {
            break;
        }
    }
    Err(Error::numerical(format!(
        "line search failed after {MAX_DOUBLINGS} increases of L"
    )))
}

struct Engine<'a, 'o> {
    problem: &'a LeastSquaresProblem,
    fam: &'a NormFamily,
    params: &'a HomotopyParams,
    observer: Observer<'o>,
    trace: IterateTrace,
    global: usize,
    start: Instant,
}

impl<'a, 'o> Engine<'a, 'o> {
    fn new(
        problem: &'a LeastSquaresProblem,
        fam: &'a NormFamily,
        params: &'a HomotopyParams,
        observer: Observer<'o>,
    ) -> Self {
        Engine {
            problem,
            fam,
            params,
            observer,
            trace: IterateTrace::default(),
            global: 0,
            start: Instant::now(),
        }
    }

    fn record_start(&mut self, lambda: f64, s: &State) {
        self.record(0, lambda, 0, None, None, s);
    }

    fn record(&mut self, stage: usize, lambda: f64, iter_stage: usize, stop: Option<f64>, m: Option<f64>, s: &State) {
        let rec = TraceRecord {
            stage,
            lambda,
            iter_stage,
            iter_global: self.global,
            objective: s.loss + lambda * s.norm,
            loss: s.loss,
            norm: s.norm,
            stop_quantity: stop,
            k: self.fam.k_default(&s.x).unwrap_or(0),
            m,
            elapsed_ms: self.start.elapsed().as_secs_f64() * 1e3,
        };
        (self.observer)(&rec, &s.x);
        self.trace.records.push(rec);
        self.global += 1;
    }

    fn check_total(&self, s: &State) -> Result<()> {
        if self.global > self.params.max_total_iters {
            return Err(Error::IterationLimit {
                limit: self.params.max_total_iters,
                partial: Box::new(PartialRun {
                    x: s.x.clone(),
                    trace: self.trace.clone(),
                }),
            });
        }
        Ok(())
    }

    fn limit(&mut self, limit: usize, x: Vector) -> Error {
        Error::IterationLimit {
            limit,
            partial: Box::new(PartialRun {
                x,
                trace: std::mem::take(&mut self.trace),
            }),
        }
    }

    fn stage(&mut self, stage: usize, lambda: f64, start: State, l0: f64, eps: f64) -> Result<(State, f64)> {
        let p = *self.params;
        let mut s = start;
        let mut l = l0;
        for it in 1..=p.max_stage_iters {
            self.check_total(&s)?;
            let (next, m) = backtrack_state(self.problem, self.fam, lambda, &s, l, p.gamma_inc)?;
            l = p.l_min.max(m / p.gamma_dec);
            let stop = stop_quantity(self.fam, &s, &next, m);
            self.record(stage, lambda, it, Some(stop), Some(m), &next);
            s = next;
            if stop <= eps {
                return Ok((s, m));
            }
        }
        Err(self.limit(p.max_stage_iters, s.x))
    }

    fn finish(self, x: Vector, m: Option<f64>) -> SolveOutput {
        SolveOutput {
            x,
            m,
            trace: self.trace,
        }
    }
}

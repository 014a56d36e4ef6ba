//! Two-phase bounded-variable revised simplex with dual extraction.
//!
//! Each inequality row gets a slack `s_i >= 0` so the working system is
//! `[A I; A_eq 0] (x, s) = (b, b_eq)`. Structural variables keep their
//! native bounds, which may be infinite in either direction; free
//! nonbasic variables sit at zero. Rows whose starting residual cannot be
//! covered by a slack receive an artificial variable that phase one drives
//! to zero.
//!
//! The basis inverse is kept dense and updated by elementary row operations,
//! with a fresh Gauss-Jordan inversion every `refactor_every` pivots and once
//! more before duals are read off. Pricing is largest-coefficient; after
//! `10 * (rows + cols)` pivots in a phase it falls back to Bland's rule.
//!
//! Multipliers follow the convention `c + A' lambda + A_eq' mu = 0` with
//! `lambda >= 0`, i.e. the signs a Lagrangian `c'x + lambda'(Ax - b) +
//! mu'(A_eq x - b_eq)` produces.

use log::{debug, trace};

use crate::error::{Error, Result};
use crate::problem::{ConstraintIndex, ConstraintKind, LpStandardForm, RowRef};
use crate::scalar::{max_of, pos, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions<T> {
    /// Primal feasibility tolerance.
    pub feas_tol: T,
    /// Reduced-cost tolerance for optimality.
    pub opt_tol: T,
    /// Smallest accepted pivot magnitude.
    pub pivot_tol: T,
    pub max_iter: usize,
    pub refactor_every: usize,
    /// Scale each row by its largest coefficient before solving.
    pub equilibrate: bool,
    /// Pivots per phase before switching to Bland's rule; `None` means
    /// `10 * (rows + cols)`.
    pub bland_after: Option<usize>,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            feas_tol: T::solver_tol(),
            opt_tol: T::solver_tol(),
            pivot_tol: T::pivot_tol(),
            max_iter: 100_000,
            refactor_every: 50,
            equilibrate: false,
            bland_after: None,
        }
    }
}

/// Proof of infeasibility: multipliers `lambda >= 0`, `mu` such that
/// `g = A' lambda + A_eq' mu` satisfies `min_{l<=x<=u} g'x > lambda'b + mu'b_eq`.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasCertificate<T> {
    pub ineq: Vec<T>,
    pub eq: Vec<T>,
}

impl<T: Scalar> FarkasCertificate<T> {
    /// Rows carrying a nonzero multiplier.
    pub fn rows(&self, tol: T) -> Vec<RowRef> {
        let ineq = self
            .ineq
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > tol)
            .map(|(i, _)| RowRef::Ineq(i));
        let eq = self
            .eq
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > tol)
            .map(|(i, _)| RowRef::Eq(i));
        ineq.chain(eq).collect()
    }

    /// Checks the certificate against `lp` independently of the solver.
    pub fn verify(&self, lp: &LpStandardForm<T>, tol: T) -> bool {
        if self.ineq.len() != lp.n_ineq() || self.eq.len() != lp.n_eq() {
            return false;
        }
        if self.ineq.iter().any(|&l| l < -tol) {
            return false;
        }
        let mut g = vec![T::zero(); lp.n_vars()];
        for (row, &l) in lp.a.iter().zip(&self.ineq) {
            for &(j, v) in row {
                g[j] = g[j] + l * v;
            }
        }
        for (row, &m) in lp.a_eq.iter().zip(&self.eq) {
            for &(j, v) in row {
                g[j] = g[j] + m * v;
            }
        }
        let mut lhs = T::zero();
        for (j, &gj) in g.iter().enumerate() {
            if gj.abs() <= tol {
                continue;
            }
            let bound = if gj > T::zero() { lp.lower[j] } else { lp.upper[j] };
            if !bound.is_finite() {
                return false;
            }
            lhs = lhs + gj * bound;
        }
        let rhs: T = lp.b.iter().zip(&self.ineq).map(|(&b, &l)| b * l).sum::<T>()
            + lp.b_eq.iter().zip(&self.eq).map(|(&b, &m)| b * m).sum::<T>();
        lhs - rhs > tol
    }
}

/// Direction `d` with `c'd < 0` along which the LP stays feasible forever.
#[derive(Debug, Clone, PartialEq)]
pub struct ImprovingRay<T> {
    pub direction: Vec<T>,
}

impl<T: Scalar> ImprovingRay<T> {
    pub fn verify(&self, lp: &LpStandardForm<T>, tol: T) -> bool {
        let d = &self.direction;
        if d.len() != lp.n_vars() || lp.objective(d) >= -tol {
            return false;
        }
        let rows_ok = lp.a.iter().all(|r| LpStandardForm::row_dot(r, d) <= tol)
            && lp.a_eq.iter().all(|r| LpStandardForm::row_dot(r, d).abs() <= tol);
        let bounds_ok = d.iter().enumerate().all(|(j, &dj)| {
            (dj >= -tol || !lp.lower[j].is_finite()) && (dj <= tol || !lp.upper[j].is_finite())
        });
        rows_ok && bounds_ok
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveStatus<T> {
    Optimal,
    Infeasible(FarkasCertificate<T>),
    Unbounded(ImprovingRay<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome<T> {
    pub status: SolveStatus<T>,
    /// Structural variable values (meaningful when optimal).
    pub primal: Vec<T>,
    /// Inequality multipliers, `>= 0` at optimality.
    pub ineq_duals: Vec<T>,
    /// Equality multipliers, free sign.
    pub eq_duals: Vec<T>,
    pub objective: T,
    pub iterations: usize,
}

impl<T: Scalar> SolveOutcome<T> {
    pub fn is_optimal(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal)
    }

    /// `c + A' lambda + A_eq' mu`, the Lagrangian gradient per variable.
    pub fn reduced_costs(&self, lp: &LpStandardForm<T>) -> Vec<T> {
        let mut r = lp.c.clone();
        for (row, &l) in lp.a.iter().zip(&self.ineq_duals) {
            for &(j, v) in row {
                r[j] = r[j] + l * v;
            }
        }
        for (row, &m) in lp.a_eq.iter().zip(&self.eq_duals) {
            for &(j, v) in row {
                r[j] = r[j] + m * v;
            }
        }
        r
    }

    /// Lagrange dual objective; bound multipliers are taken from the
    /// reduced costs where the corresponding native bound is finite.
    pub fn dual_objective(&self, lp: &LpStandardForm<T>) -> T {
        let mut d = -lp.b.iter().zip(&self.ineq_duals).map(|(&b, &l)| b * l).sum::<T>()
            - lp.b_eq.iter().zip(&self.eq_duals).map(|(&b, &m)| b * m).sum::<T>();
        for (j, r) in self.reduced_costs(lp).into_iter().enumerate() {
            if r > T::zero() && lp.lower[j].is_finite() {
                d = d + r * lp.lower[j];
            } else if r < T::zero() && lp.upper[j].is_finite() {
                d = d + r * lp.upper[j];
            }
        }
        d
    }

    pub fn duality_gap(&self, lp: &LpStandardForm<T>) -> T {
        (self.objective - self.dual_objective(lp)).abs()
    }

    /// `sum_i |lambda_i * slack_i|`.
    pub fn complementarity(&self, lp: &LpStandardForm<T>) -> T {
        lp.slacks(&self.primal)
            .into_iter()
            .zip(&self.ineq_duals)
            .map(|(s, &l)| (s * l).abs())
            .sum()
    }
}

/// Multiplier of the named constraint in an optimal outcome.
pub fn dual_by_constraint<T: Scalar>(
    outcome: &SolveOutcome<T>,
    index: &ConstraintIndex,
    kind: ConstraintKind,
    step: usize,
) -> Result<T> {
    if !outcome.is_optimal() {
        return Err(Error::NotOptimal);
    }
    match index.row(kind, step) {
        Some(RowRef::Ineq(i)) => Ok(outcome.ineq_duals[i]),
        Some(RowRef::Eq(i)) => Ok(outcome.eq_duals[i]),
        None => Err(Error::MissingConstraint { kind, step }),
    }
}

pub fn solve<T: Scalar>(lp: &LpStandardForm<T>, opts: &SolveOptions<T>) -> Result<SolveOutcome<T>> {
    lp.validate()?;
    let mut s = Simplex::new(lp, opts);
    s.run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
    /// Free nonbasic variable held at zero.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rule {
    Dantzig,
    Bland,
}

enum Step {
    Optimal,
    Unbounded { entering: usize, dir: i8, alpha: Vec<f64> },
    Continue,
}

struct Simplex<'a, T> {
    lp: &'a LpStandardForm<T>,
    opts: SolveOptions<T>,
    m: usize,
    m_ineq: usize,
    n_struct: usize,
    /// Sparse columns of the working matrix.
    cols: Vec<Vec<(usize, T)>>,
    lo: Vec<T>,
    up: Vec<T>,
    cost: Vec<T>,
    rhs: Vec<T>,
    row_scale: Vec<T>,
    first_artificial: usize,
    state: Vec<State>,
    basis: Vec<usize>,
    x: Vec<T>,
    /// Row-major dense basis inverse.
    binv: Vec<T>,
    iterations: usize,
    since_refactor: usize,
}

impl<'a, T: Scalar> Simplex<'a, T> {
    fn new(lp: &'a LpStandardForm<T>, opts: &SolveOptions<T>) -> Self {
        let m_ineq = lp.n_ineq();
        let m = m_ineq + lp.n_eq();
        let n_struct = lp.n_vars();

        let row_scale: Vec<T> = lp
            .a
            .iter()
            .chain(&lp.a_eq)
            .map(|row| {
                let mx = max_of(row.iter().map(|&(_, v)| v.abs()));
                if opts.equilibrate && mx > T::zero() {
                    T::one() / mx
                } else {
                    T::one()
                }
            })
            .collect();

        let mut cols: Vec<Vec<(usize, T)>> = vec![Vec::new(); n_struct];
        for (i, row) in lp.a.iter().chain(&lp.a_eq).enumerate() {
            for &(j, v) in row {
                if v != T::zero() {
                    cols[j].push((i, v * row_scale[i]));
                }
            }
        }
        let rhs: Vec<T> = lp
            .b
            .iter()
            .chain(&lp.b_eq)
            .zip(&row_scale)
            .map(|(&b, &s)| b * s)
            .collect();

        let mut lo = lp.lower.clone();
        let mut up = lp.upper.clone();
        for i in 0..m_ineq {
            cols.push(vec![(i, T::one())]);
            lo.push(T::zero());
            up.push(T::infinity());
        }

        Self {
            lp,
            opts: *opts,
            m,
            m_ineq,
            n_struct,
            cols,
            lo,
            up,
            cost: Vec::new(),
            rhs,
            row_scale,
            first_artificial: n_struct + m_ineq,
            state: Vec::new(),
            basis: vec![usize::MAX; m],
            x: Vec::new(),
            binv: vec![T::zero(); m * m],
            iterations: 0,
            since_refactor: 0,
        }
    }

    fn run(&mut self) -> Result<SolveOutcome<T>> {
        self.initial_basis();
        let n_art = self.cols.len() - self.first_artificial;
        debug!(
            "simplex: {} rows, {} structurals, {} artificials",
            self.m, self.n_struct, n_art
        );

        if n_art > 0 {
            self.cost = (0..self.cols.len())
                .map(|j| if j >= self.first_artificial { T::one() } else { T::zero() })
                .collect();
            match self.iterate()? {
                Step::Optimal => {}
                _ => unreachable!("phase one is bounded below"),
            }
            self.refactor()?;
            let infeas: T = (self.first_artificial..self.cols.len()).map(|j| self.x[j]).sum();
            let scale = T::one() + max_of(self.rhs.iter().map(|v| v.abs()));
            debug!("phase one residual {infeas}");
            if infeas > self.opts.feas_tol * scale {
                let y = self.duals();
                let (ineq, eq) = self.unscale_duals(&y);
                return Ok(self.outcome(SolveStatus::Infeasible(FarkasCertificate { ineq, eq })));
            }
            for j in self.first_artificial..self.cols.len() {
                self.up[j] = T::zero();
                if self.state[j] != State::Basic {
                    self.x[j] = T::zero();
                    self.state[j] = State::Lower;
                }
            }
            self.drive_out_artificials()?;
        }

        self.cost = (0..self.cols.len())
            .map(|j| if j < self.n_struct { self.lp.c[j] } else { T::zero() })
            .collect();
        match self.iterate()? {
            Step::Optimal => {
                self.refactor()?;
                let y = self.duals();
                let (ineq, eq) = self.unscale_duals(&y);
                let mut out = self.outcome(SolveStatus::Optimal);
                out.ineq_duals = ineq;
                out.eq_duals = eq;
                Ok(out)
            }
            Step::Unbounded {
                entering,
                dir,
                alpha,
            } => {
                let mut d = vec![T::zero(); self.n_struct];
                if entering < self.n_struct {
                    d[entering] = T::lit(dir as f64);
                }
                for (i, &k) in self.basis.iter().enumerate() {
                    if k < self.n_struct {
                        d[k] = T::lit(-(dir as f64) * alpha[i]);
                    }
                }
                Ok(self.outcome(SolveStatus::Unbounded(ImprovingRay { direction: d })))
            }
            Step::Continue => unreachable!(),
        }
    }

    fn outcome(&self, status: SolveStatus<T>) -> SolveOutcome<T> {
        let primal = self.x[..self.n_struct].to_vec();
        SolveOutcome {
            objective: self.lp.objective(&primal),
            primal,
            status,
            ineq_duals: vec![T::zero(); self.m_ineq],
            eq_duals: vec![T::zero(); self.m - self.m_ineq],
            iterations: self.iterations,
        }
    }

    fn initial_basis(&mut self) {
        let n = self.cols.len();
        self.state = vec![State::Lower; n];
        self.x = vec![T::zero(); n];
        for j in 0..self.n_struct {
            let (l, u) = (self.lo[j], self.up[j]);
            if l.is_finite() {
                self.x[j] = l;
                self.state[j] = State::Lower;
            } else if u.is_finite() {
                self.x[j] = u;
                self.state[j] = State::Upper;
            } else {
                self.state[j] = State::Zero;
            }
        }
        let mut r = self.rhs.clone();
        for j in 0..self.n_struct {
            if self.x[j] != T::zero() {
                for &(i, v) in &self.cols[j] {
                    r[i] = r[i] - v * self.x[j];
                }
            }
        }
        for (i, &ri) in r.iter().enumerate() {
            let needs_artificial = i >= self.m_ineq || ri < T::zero();
            if needs_artificial {
                let sign = if ri < T::zero() { -T::one() } else { T::one() };
                let j = self.cols.len();
                self.cols.push(vec![(i, sign)]);
                self.lo.push(T::zero());
                self.up.push(T::infinity());
                self.state.push(State::Basic);
                self.x.push(ri.abs());
                self.basis[i] = j;
                self.binv[i * self.m + i] = sign;
            } else {
                let j = self.n_struct + i;
                self.state[j] = State::Basic;
                self.x[j] = ri;
                self.basis[i] = j;
                self.binv[i * self.m + i] = T::one();
            }
        }
    }

    /// `y' = c_B' B^{-1}` in the working (scaled) row space.
    fn duals(&self) -> Vec<T> {
        let m = self.m;
        let mut y = vec![T::zero(); m];
        for (i, &k) in self.basis.iter().enumerate() {
            let cb = self.cost[k];
            if cb != T::zero() {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, &b) in y.iter_mut().zip(row) {
                    *yk = *yk + cb * b;
                }
            }
        }
        y
    }

    fn unscale_duals(&self, y: &[T]) -> (Vec<T>, Vec<T>) {
        let lam: Vec<T> = y
            .iter()
            .zip(&self.row_scale)
            .map(|(&yi, &s)| -(yi * s))
            .collect();
        let (ineq, eq) = lam.split_at(self.m_ineq);
        (ineq.to_vec(), eq.to_vec())
    }

    fn column(&self, j: usize) -> Vec<T> {
        let m = self.m;
        let mut alpha = vec![T::zero(); m];
        for &(r, v) in &self.cols[j] {
            for (i, a) in alpha.iter_mut().enumerate() {
                *a = *a + self.binv[i * m + r] * v;
            }
        }
        alpha
    }

    fn reduced_cost(&self, j: usize, y: &[T]) -> T {
        self.cost[j] - self.cols[j].iter().map(|&(r, v)| y[r] * v).sum::<T>()
    }

    fn iterate(&mut self) -> Result<Step> {
        let n = self.cols.len();
        let bland_after = self.opts.bland_after.unwrap_or(10 * (self.m + n));
        let mut phase_iters = 0usize;
        loop {
            if self.since_refactor >= self.opts.refactor_every {
                self.refactor()?;
            }
            let rule = if phase_iters >= bland_after {
                Rule::Bland
            } else {
                Rule::Dantzig
            };
            match self.pivot(rule)? {
                Step::Continue => {}
                other => return Ok(other),
            }
            phase_iters += 1;
            self.iterations += 1;
            if self.iterations >= self.opts.max_iter {
                return Err(Error::IterationLimit(self.opts.max_iter));
            }
        }
    }

    fn pivot(&mut self, rule: Rule) -> Result<Step> {
        let y = self.duals();
        let tol = self.opts.opt_tol;

        let mut entering: Option<(usize, T, i8)> = None;
        for j in 0..self.cols.len() {
            let st = self.state[j];
            if st == State::Basic || self.lo[j] == self.up[j] {
                continue;
            }
            let d = self.reduced_cost(j, &y);
            let dir = match st {
                State::Lower if d < -tol => 1,
                State::Upper if d > tol => -1,
                State::Zero if d < -tol => 1,
                State::Zero if d > tol => -1,
                _ => continue,
            };
            match rule {
                Rule::Bland => {
                    entering = Some((j, d, dir));
                    break;
                }
                Rule::Dantzig => {
                    if entering.is_none_or(|(_, best, _)| d.abs() > best.abs()) {
                        entering = Some((j, d, dir));
                    }
                }
            }
        }
        let Some((q, _, dir)) = entering else {
            return Ok(Step::Optimal);
        };
        let dir_t = if dir > 0 { T::one() } else { -T::one() };
        let alpha = self.column(q);

        // Ratio test; `theta` is the step length of the entering variable.
        let mut theta = if self.lo[q].is_finite() && self.up[q].is_finite() {
            self.up[q] - self.lo[q]
        } else {
            T::infinity()
        };
        let mut leave: Option<(usize, T, bool)> = None; // (row, |alpha|, hits_upper)
        for (i, &a) in alpha.iter().enumerate() {
            if a.abs() <= self.opts.pivot_tol {
                continue;
            }
            let k = self.basis[i];
            let rate = -dir_t * a;
            let (limit, hits_upper) = if rate < T::zero() && self.lo[k].is_finite() {
                (pos(self.x[k] - self.lo[k]) / -rate, false)
            } else if rate > T::zero() && self.up[k].is_finite() {
                (pos(self.up[k] - self.x[k]) / rate, true)
            } else {
                continue;
            };
            let better = match leave {
                None => limit < theta || (limit == theta && !theta.is_infinite()),
                Some((r, best_a, _)) => {
                    let tie = (limit - theta).abs() <= T::epsilon() * (T::one() + theta.abs());
                    if limit < theta && !tie {
                        true
                    } else if tie {
                        match rule {
                            Rule::Dantzig => a.abs() > best_a,
                            Rule::Bland => k < self.basis[r],
                        }
                    } else {
                        false
                    }
                }
            };
            if better {
                theta = theta.min(limit);
                leave = Some((i, a.abs(), hits_upper));
            }
        }

        if theta.is_infinite() {
            let alpha64 = alpha.iter().map(|a| a.as_f64()).collect();
            return Ok(Step::Unbounded {
                entering: q,
                dir,
                alpha: alpha64,
            });
        }

        // Move along the edge.
        self.x[q] = self.x[q] + dir_t * theta;
        for (i, &a) in alpha.iter().enumerate() {
            let k = self.basis[i];
            self.x[k] = self.x[k] - dir_t * a * theta;
        }

        match leave {
            None => {
                // Bound flip of the entering variable.
                if dir > 0 {
                    self.x[q] = self.up[q];
                    self.state[q] = State::Upper;
                } else {
                    self.x[q] = self.lo[q];
                    self.state[q] = State::Lower;
                }
                trace!("bound flip on {q}");
            }
            Some((r, _, hits_upper)) => {
                let k = self.basis[r];
                if hits_upper {
                    self.x[k] = self.up[k];
                    self.state[k] = State::Upper;
                } else {
                    self.x[k] = self.lo[k];
                    self.state[k] = State::Lower;
                }
                self.state[q] = State::Basic;
                self.basis[r] = q;
                self.update_inverse(r, &alpha);
                trace!("pivot: {q} enters, {k} leaves at row {r}, theta {theta}");
            }
        }
        Ok(Step::Continue)
    }

    fn update_inverse(&mut self, r: usize, alpha: &[T]) {
        let m = self.m;
        let piv = alpha[r];
        for v in &mut self.binv[r * m..(r + 1) * m] {
            *v = *v / piv;
        }
        let pivot_row: Vec<T> = self.binv[r * m..(r + 1) * m].to_vec();
        for (i, &a) in alpha.iter().enumerate() {
            if i == r || a == T::zero() {
                continue;
            }
            let row = &mut self.binv[i * m..(i + 1) * m];
            for (v, &p) in row.iter_mut().zip(&pivot_row) {
                *v = *v - a * p;
            }
        }
        self.since_refactor += 1;
    }

    /// Rebuilds `B^{-1}` from scratch and recomputes basic values.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        // Augmented [B | I], Gauss-Jordan with partial pivoting.
        let w = 2 * m;
        let mut aug = vec![T::zero(); m * w];
        for (c, &k) in self.basis.iter().enumerate() {
            for &(r, v) in &self.cols[k] {
                aug[r * w + c] = v;
            }
        }
        for i in 0..m {
            aug[i * w + m + i] = T::one();
        }
        for col in 0..m {
            let (p, best) = (col..m)
                .map(|r| (r, aug[r * w + col].abs()))
                .fold((col, -T::one()), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            if best <= T::epsilon() {
                return Err(Error::Config(format!(
                    "singular basis during refactorization (column {col})"
                )));
            }
            if p != col {
                for k in 0..w {
                    aug.swap(p * w + k, col * w + k);
                }
            }
            let piv = aug[col * w + col];
            for k in 0..w {
                aug[col * w + k] = aug[col * w + k] / piv;
            }
            let prow: Vec<T> = aug[col * w..(col + 1) * w].to_vec();
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = aug[r * w + col];
                if f == T::zero() {
                    continue;
                }
                for k in 0..w {
                    aug[r * w + k] = aug[r * w + k] - f * prow[k];
                }
            }
        }
        for i in 0..m {
            self.binv[i * m..(i + 1) * m].copy_from_slice(&aug[i * w + m..(i + 1) * w]);
        }

        let mut r = self.rhs.clone();
        for j in 0..self.cols.len() {
            if self.state[j] != State::Basic && self.x[j] != T::zero() {
                for &(i, v) in &self.cols[j] {
                    r[i] = r[i] - v * self.x[j];
                }
            }
        }
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            let v: T = row.iter().zip(&r).map(|(&b, &ri)| b * ri).sum();
            self.x[self.basis[i]] = v;
        }
        self.since_refactor = 0;
        Ok(())
    }

    /// Degenerate pivots that replace basic artificials (all at zero after
    /// phase one) by real columns. Rows with no usable column are redundant
    /// and keep their artificial fixed at zero.
    fn drive_out_artificials(&mut self) -> Result<()> {
        let m = self.m;
        for r in 0..m {
            if self.basis[r] < self.first_artificial {
                continue;
            }
            let mut best: Option<(usize, T)> = None;
            for j in 0..self.first_artificial {
                if self.state[j] == State::Basic {
                    continue;
                }
                let a: T = self.cols[j]
                    .iter()
                    .map(|&(i, v)| self.binv[r * m + i] * v)
                    .sum();
                if a.abs() > self.opts.pivot_tol.max(T::lit(1e-9))
                    && best.is_none_or(|(_, b)| a.abs() > b.abs())
                {
                    best = Some((j, a));
                }
            }
            if let Some((j, _)) = best {
                let alpha = self.column(j);
                let k = self.basis[r];
                self.x[k] = T::zero();
                self.state[k] = State::Lower;
                self.state[j] = State::Basic;
                self.basis[r] = j;
                self.update_inverse(r, &alpha);
            }
        }
        self.refactor()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EssParams, ExogenousProfile, Tariff};
    use crate::problem::{build_p1, extract_trajectory};

    fn opts() -> SolveOptions<f64> {
        SolveOptions::default()
    }

    #[test]
    fn one_variable_lp() {
        // min 0.11 g  s.t.  -g <= -1
        let lp = LpStandardForm::new(vec![0.11], vec![vec![(0, -1.0)]], vec![-1.0], vec![], vec![]);
        let out = solve(&lp, &opts()).unwrap();
        assert!(out.is_optimal());
        assert!((out.primal[0] - 1.0).abs() < 1e-12);
        assert!((out.objective - 0.11).abs() < 1e-12);
        assert!((out.ineq_duals[0] - 0.11).abs() < 1e-12);
        assert!(out.duality_gap(&lp) < 1e-12);
    }

    #[test]
    fn single_step_grid_only() {
        // Load 1 kW, no solar, battery already at its floor.
        let mut p = EssParams::residential_default();
        p.e0 = p.e_min;
        let prof = ExogenousProfile::new(vec![0.0], vec![1.0]);
        let tariff = Tariff::flat(0.11, 1, 0.0, 0.0, false);
        let (lp, idx) = build_p1(&p, &prof, &tariff).unwrap();
        let out = solve(&lp, &opts()).unwrap();
        let x = extract_trajectory(&out.primal, 1).unwrap();
        assert!((x.p_grid[0] - 1.0).abs() < 1e-12);
        assert!((out.objective - 0.11).abs() < 1e-12);
        let mu = dual_by_constraint(&out, &idx, ConstraintKind::Balance, 0).unwrap();
        assert!((mu - 0.11).abs() < 1e-12, "mu = {mu}");
    }

    #[test]
    fn zero_inputs_zero_optimum() {
        let p = EssParams::residential_default();
        let prof = ExogenousProfile::zeros(6);
        let tariff = Tariff::flat(0.11, 6, 0.001, 0.001, false);
        let (lp, _) = build_p1(&p, &prof, &tariff).unwrap();
        let out = solve(&lp, &opts()).unwrap();
        assert!(out.is_optimal());
        assert!(out.objective.abs() < 1e-12);
        assert!(out.primal.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn single_step_discharge_covers_load() {
        // Brute-force value from a 0.01 kW sweep of (grid, ch, dis): the
        // optimum serves the 1 kW load from the battery at cost beta * 1.
        let p = EssParams::residential_default();
        let prof = ExogenousProfile::new(vec![0.0], vec![1.0]);
        let tariff = Tariff::flat(0.11, 1, 0.001, 0.001, false);
        let (lp, _) = build_p1(&p, &prof, &tariff).unwrap();
        let out = solve(&lp, &opts()).unwrap();
        let x = extract_trajectory(&out.primal, 1).unwrap();
        assert!((x.p_dis[0] - 1.0).abs() < 1e-12);
        assert!(x.p_grid[0].abs() < 1e-12);
        assert!((out.objective - 0.001).abs() < 1e-12);

        let mut best = f64::INFINITY;
        for g in 0..=300 {
            for ch in 0..=300 {
                for dis in 0..=300 {
                    let (g, ch, dis) = (g as f64 / 100.0, ch as f64 / 100.0, dis as f64 / 100.0);
                    // balance with no solar: g = 1 + ch - dis
                    if (g - (1.0 + ch - dis)).abs() > 1e-9 {
                        continue;
                    }
                    let e = 2.0 + 0.95 * ch - dis / 0.95;
                    if !(0.75 - 1e-12..=4.25 + 1e-12).contains(&e) {
                        continue;
                    }
                    best = best.min(0.11 * g + 0.001 * ch + 0.001 * dis);
                }
            }
        }
        assert!((best - 0.001).abs() < 1e-12);
    }

    #[test]
    fn slack_rows_have_zero_duals() {
        let p = EssParams::residential_default();
        let prof = ExogenousProfile::new(vec![0.0, 2.0, 3.0, 0.5], vec![1.0, 0.5, 0.4, 1.2]);
        let tariff = Tariff::new(vec![0.08, 0.13, 0.18, 0.13], 0.001, 0.0, false);
        let (lp, idx) = build_p1(&p, &prof, &tariff).unwrap();
        let out = solve(&lp, &opts()).unwrap();
        let slacks = lp.slacks(&out.primal);
        for (i, (&s, &l)) in slacks.iter().zip(&out.ineq_duals).enumerate() {
            assert!(l >= -1e-12, "row {i} dual {l}");
            if s > 1e-7 {
                assert!(l.abs() < 1e-9, "slack row {i} has dual {l}");
            }
        }
        assert!(out.complementarity(&lp) < 1e-10);
        assert!(out.duality_gap(&lp) < 1e-10);
        assert!(lp.primal_residual(&out.primal) < 1e-9);
        // equality multipliers may have either sign; just check they exist
        assert!(dual_by_constraint(&out, &idx, ConstraintKind::Balance, 3).is_ok());
    }

    #[test]
    fn grid_lower_query_fails_under_export() {
        let p = EssParams::residential_default();
        let prof = ExogenousProfile::new(vec![2.0], vec![1.0]);
        let tariff = Tariff::flat(0.11, 1, 0.001, 0.001, true);
        let (lp, idx) = build_p1(&p, &prof, &tariff).unwrap();
        let out = solve(&lp, &opts()).unwrap();
        assert!(matches!(
            dual_by_constraint(&out, &idx, ConstraintKind::GridLower, 0),
            Err(Error::MissingConstraint { .. })
        ));
    }

    #[test]
    fn infeasible_lp_has_farkas_certificate() {
        // x <= 1, -x <= -2
        let lp = LpStandardForm::new(
            vec![1.0],
            vec![vec![(0, 1.0)], vec![(0, -1.0)]],
            vec![1.0, -2.0],
            vec![],
            vec![],
        );
        let out = solve(&lp, &opts()).unwrap();
        let SolveStatus::Infeasible(cert) = &out.status else {
            panic!("expected infeasible, got {:?}", out.status)
        };
        assert!(cert.verify(&lp, 1e-9));
        assert_eq!(cert.rows(1e-9), vec![RowRef::Ineq(0), RowRef::Ineq(1)]);

        // equality variant with native bounds: x + y = 5, 0 <= x, y <= 1
        let mut lp = LpStandardForm::new(vec![0.0, 0.0], vec![], vec![], vec![vec![(0, 1.0), (1, 1.0)]], vec![5.0]);
        lp.lower = vec![0.0, 0.0];
        lp.upper = vec![1.0, 1.0];
        let out = solve(&lp, &opts()).unwrap();
        let SolveStatus::Infeasible(cert) = &out.status else { panic!() };
        assert!(cert.verify(&lp, 1e-9));
    }

    #[test]
    fn unbounded_lp_has_ray() {
        // min -x - y  s.t.  x - y <= 1, x, y >= 0
        let mut lp = LpStandardForm::new(vec![-1.0, -1.0], vec![vec![(0, 1.0), (1, -1.0)]], vec![1.0], vec![], vec![]);
        lp.lower = vec![0.0, 0.0];
        let out = solve(&lp, &opts()).unwrap();
        let SolveStatus::Unbounded(ray) = &out.status else {
            panic!("expected unbounded, got {:?}", out.status)
        };
        assert!(ray.verify(&lp, 1e-9), "{ray:?}");
    }

    #[test]
    fn iteration_limit_is_distinct() {
        let p = EssParams::residential_default();
        let prof = ExogenousProfile::new(vec![2.0, 0.0, 3.0], vec![1.0, 2.0, 0.0]);
        let tariff = Tariff::flat(0.11, 3, 0.001, 0.0, false);
        let (lp, _) = build_p1(&p, &prof, &tariff).unwrap();
        let o = SolveOptions {
            max_iter: 2,
            ..opts()
        };
        assert!(matches!(solve(&lp, &o), Err(Error::IterationLimit(2))));
    }

    #[test]
    fn native_bounds_and_bound_flips() {
        // max x + 2y (min -x - 2y)  s.t.  x + y <= 3, 0 <= x <= 2, 0 <= y <= 2
        let mut lp = LpStandardForm::new(vec![-1.0, -2.0], vec![vec![(0, 1.0), (1, 1.0)]], vec![3.0], vec![], vec![]);
        lp.lower = vec![0.0, 0.0];
        lp.upper = vec![2.0, 2.0];
        let out = solve(&lp, &opts()).unwrap();
        assert!(out.is_optimal());
        assert!((out.primal[0] - 1.0).abs() < 1e-12);
        assert!((out.primal[1] - 2.0).abs() < 1e-12);
        assert!((out.objective + 5.0).abs() < 1e-12);
        assert!(out.duality_gap(&lp) < 1e-12);
    }

    #[test]
    fn equilibration_gives_same_optimum() {
        let p = EssParams::residential_default();
        let prof = ExogenousProfile::new(vec![0.0, 2.5, 3.5, 1.0, 0.0], vec![1.0, 0.5, 0.3, 1.5, 2.0]);
        let tariff = Tariff::new(vec![0.08, 0.13, 0.18, 0.18, 0.13], 0.001, 0.0, false);
        let (lp, _) = build_p1(&p, &prof, &tariff).unwrap();
        let a = solve(&lp, &opts()).unwrap();
        let b = solve(
            &lp,
            &SolveOptions {
                equilibrate: true,
                ..opts()
            },
        )
        .unwrap();
        assert!((a.objective - b.objective).abs() < 1e-10);
        assert!(b.duality_gap(&lp) < 1e-9);
    }

    #[test]
    fn deterministic() {
        let p = EssParams::residential_default();
        let prof = ExogenousProfile::new(vec![0.0, 2.5, 3.5, 1.0], vec![1.0, 0.5, 0.3, 1.5]);
        let tariff = Tariff::flat(0.11, 4, 0.0, 0.0, false);
        let (lp, _) = build_p1(&p, &prof, &tariff).unwrap();
        let a = solve(&lp, &opts()).unwrap();
        let b = solve(&lp, &opts()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bland_only_still_optimal() {
        let p = EssParams::residential_default();
        let prof = ExogenousProfile::new(vec![0.0, 2.5, 3.5, 1.0, 0.0, 0.0], vec![1.0, 0.5, 0.3, 1.5, 2.0, 1.0]);
        let tariff = Tariff::new(vec![0.08, 0.13, 0.18, 0.18, 0.13, 0.08], 0.001, 0.001, false);
        let (lp, _) = build_p1(&p, &prof, &tariff).unwrap();
        let a = solve(&lp, &opts()).unwrap();
        let b = solve(
            &lp,
            &SolveOptions {
                bland_after: Some(0),
                ..opts()
            },
        )
        .unwrap();
        assert!((a.objective - b.objective).abs() < 1e-10);
    }

    #[test]
    fn single_precision_solve() {
        let p = EssParams::<f32>::residential_default();
        let prof = ExogenousProfile::new(vec![0.0f32], vec![1.0]);
        let tariff = Tariff::flat(0.11f32, 1, 0.001, 0.001, false);
        let (lp, _) = build_p1(&p, &prof, &tariff).unwrap();
        let out = solve(&lp, &SolveOptions::default()).unwrap();
        assert!((out.objective - 0.001).abs() < 1e-5);
    }
}

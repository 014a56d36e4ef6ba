//! Assembly of the dispatch problem as an explicit-row linear program.
//!
//! Variables are ordered `[P_grid(0..N), P_ch(0..N), P_dis(0..N), P_c(0..N)]`.
//! Every bound, including the box bounds on individual variables, is emitted
//! as its own `<=` row so that each one carries a dual multiplier. The SOC
//! state is eliminated: the limits at the end of step `t` become prefix-sum
//! rows over steps `0..=t`.
//!
//! ```text
//! grid lower   -P_grid(t)                                   <= 0      (absent with export)
//! ch lower     -P_ch(t)                                     <= 0
//! ch upper      P_ch(t)                                     <= P_ch,max
//! dis lower    -P_dis(t)                                    <= 0
//! dis upper     P_dis(t)                                    <= P_dis,max
//! soc lower     dt * sum_{n<=t} (eta_d P_dis(n) - eta_c P_ch(n)) <= E0 - E_min
//! soc upper     dt * sum_{n<=t} (eta_c P_ch(n) - eta_d P_dis(n)) <= E_max - E0
//! sol lower    -P_c(t)                                      <= 0
//! sol upper     P_c(t)                                      <= P_sol(t)
//! balance      -P_grid + P_ch - P_dis + P_c                  = P_sol - P_load
//! ```
//!
//! The balance row is the gradient of the balance function itself, so its
//! dual is the power-balance multiplier with its natural sign.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DecisionTrajectory, EssParams, ExogenousProfile, Tariff};
use crate::scalar::{max_of, pos, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    GridLower,
    ChLower,
    ChUpper,
    DisLower,
    DisUpper,
    SocLower,
    SocUpper,
    SolLower,
    SolUpper,
    Balance,
}

impl ConstraintKind {
    /// Inequality kinds in row-emission order.
    pub const INEQUALITIES: [ConstraintKind; 9] = [
        ConstraintKind::GridLower,
        ConstraintKind::ChLower,
        ConstraintKind::ChUpper,
        ConstraintKind::DisLower,
        ConstraintKind::DisUpper,
        ConstraintKind::SocLower,
        ConstraintKind::SocUpper,
        ConstraintKind::SolLower,
        ConstraintKind::SolUpper,
    ];

    pub fn is_equality(self) -> bool {
        self == ConstraintKind::Balance
    }

    pub fn label(self) -> &'static str {
        match self {
            ConstraintKind::GridLower => "grid_lower",
            ConstraintKind::ChLower => "ch_lower",
            ConstraintKind::ChUpper => "ch_upper",
            ConstraintKind::DisLower => "dis_lower",
            ConstraintKind::DisUpper => "dis_upper",
            ConstraintKind::SocLower => "soc_lower",
            ConstraintKind::SocUpper => "soc_upper",
            ConstraintKind::SolLower => "sol_lower",
            ConstraintKind::SolUpper => "sol_upper",
            ConstraintKind::Balance => "balance",
        }
    }
}

/// Decision variable families, in column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Grid = 0,
    Ch = 1,
    Dis = 2,
    Curt = 3,
}

/// Location of a row in the LP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowRef {
    Ineq(usize),
    Eq(usize),
}

/// Bijection between named constraints `(kind, step)` and LP rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintIndex {
    n: usize,
    net_metering: bool,
    ineq_rows: Vec<(ConstraintKind, usize)>,
    eq_rows: Vec<(ConstraintKind, usize)>,
    lookup: BTreeMap<(ConstraintKind, usize), RowRef>,
}

impl ConstraintIndex {
    fn new(n: usize, net_metering: bool) -> Self {
        let mut ineq_rows = Vec::new();
        for kind in ConstraintKind::INEQUALITIES {
            if kind == ConstraintKind::GridLower && net_metering {
                continue;
            }
            ineq_rows.extend((0..n).map(|t| (kind, t)));
        }
        let eq_rows: Vec<_> = (0..n).map(|t| (ConstraintKind::Balance, t)).collect();
        let mut lookup = BTreeMap::new();
        for (i, key) in ineq_rows.iter().enumerate() {
            lookup.insert(*key, RowRef::Ineq(i));
        }
        for (i, key) in eq_rows.iter().enumerate() {
            lookup.insert(*key, RowRef::Eq(i));
        }
        Self {
            n,
            net_metering,
            ineq_rows,
            eq_rows,
            lookup,
        }
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn net_metering(&self) -> bool {
        self.net_metering
    }

    pub fn row(&self, kind: ConstraintKind, step: usize) -> Option<RowRef> {
        self.lookup.get(&(kind, step)).copied()
    }

    pub fn constraint(&self, row: RowRef) -> Option<(ConstraintKind, usize)> {
        match row {
            RowRef::Ineq(i) => self.ineq_rows.get(i).copied(),
            RowRef::Eq(i) => self.eq_rows.get(i).copied(),
        }
    }

    pub fn n_ineq(&self) -> usize {
        self.ineq_rows.len()
    }

    pub fn n_eq(&self) -> usize {
        self.eq_rows.len()
    }

    pub fn var(&self, kind: VarKind, step: usize) -> usize {
        kind as usize * self.n + step
    }
}

pub type SparseRow<T> = Vec<(usize, T)>;

/// `min c'x  s.t.  A x <= b,  A_eq x = b_eq,  lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpStandardForm<T> {
    pub c: Vec<T>,
    pub a: Vec<SparseRow<T>>,
    pub b: Vec<T>,
    pub a_eq: Vec<SparseRow<T>>,
    pub b_eq: Vec<T>,
    /// Native variable bounds. P1 keeps these infinite and states every
    /// bound as a row.
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> LpStandardForm<T> {
    /// LP with free variables; use the public fields to add native bounds.
    pub fn new(c: Vec<T>, a: Vec<SparseRow<T>>, b: Vec<T>, a_eq: Vec<SparseRow<T>>, b_eq: Vec<T>) -> Self {
        let n = c.len();
        Self {
            c,
            a,
            b,
            a_eq,
            b_eq,
            lower: vec![T::neg_infinity(); n],
            upper: vec![T::infinity(); n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn n_ineq(&self) -> usize {
        self.a.len()
    }

    pub fn n_eq(&self) -> usize {
        self.a_eq.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        let mismatch = |what, expected, got| Error::LengthMismatch { what, expected, got };
        if self.b.len() != self.a.len() {
            return Err(mismatch("inequality rhs", self.a.len(), self.b.len()));
        }
        if self.b_eq.len() != self.a_eq.len() {
            return Err(mismatch("equality rhs", self.a_eq.len(), self.b_eq.len()));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(mismatch("variable bounds", n, self.lower.len().min(self.upper.len())));
        }
        for row in self.a.iter().chain(&self.a_eq) {
            if let Some(&(j, _)) = row.iter().find(|(j, _)| *j >= n) {
                return Err(mismatch("row column index", n, j));
            }
        }
        Ok(())
    }

    pub fn row_dot(row: &[(usize, T)], x: &[T]) -> T {
        row.iter().map(|&(j, v)| v * x[j]).sum()
    }

    pub fn objective(&self, x: &[T]) -> T {
        self.c.iter().zip(x).map(|(&c, &v)| c * v).sum()
    }

    /// `b - A x` per inequality row.
    pub fn slacks(&self, x: &[T]) -> Vec<T> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(row, &b)| b - Self::row_dot(row, x))
            .collect()
    }

    /// Largest violation of any row or native bound.
    pub fn primal_residual(&self, x: &[T]) -> T {
        let ineq = max_of(self.slacks(x).into_iter().map(|s| pos(-s)));
        let eq = max_of(
            self.a_eq
                .iter()
                .zip(&self.b_eq)
                .map(|(row, &b)| (Self::row_dot(row, x) - b).abs()),
        );
        let bounds = max_of(
            x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .map(|(&v, (&l, &u))| pos(l - v).max(pos(v - u))),
        );
        ineq.max(eq).max(bounds)
    }

    /// Largest absolute entry across objective, matrix and right-hand sides.
    pub fn data_norm(&self) -> T {
        let rows = self
            .a
            .iter()
            .chain(&self.a_eq)
            .flat_map(|r| r.iter().map(|&(_, v)| v.abs()));
        max_of(
            self.c
                .iter()
                .chain(&self.b)
                .chain(&self.b_eq)
                .map(|v| v.abs())
                .chain(rows),
        )
    }

    /// Human-readable dump, used in diagnostics when a solve fails.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "min c = {:?}", self.c);
        for (i, (row, b)) in self.a.iter().zip(&self.b).enumerate() {
            let _ = writeln!(s, "ineq {i}: {row:?} <= {b}");
        }
        for (i, (row, b)) in self.a_eq.iter().zip(&self.b_eq).enumerate() {
            let _ = writeln!(s, "eq {i}: {row:?} = {b}");
        }
        s
    }
}

/// Builds the dispatch LP for the given battery, forecast and tariff.
pub fn build_p1<T: Scalar>(
    params: &EssParams<T>,
    prof: &ExogenousProfile<T>,
    tariff: &Tariff<T>,
) -> Result<(LpStandardForm<T>, ConstraintIndex)> {
    params.validate()?;
    prof.validate()?;
    tariff.validate()?;
    let n = prof.len();
    if n == 0 {
        return Err(Error::EmptyHorizon);
    }
    if tariff.len() != n {
        return Err(Error::LengthMismatch {
            what: "tariff prices",
            expected: n,
            got: tariff.len(),
        });
    }

    let index = ConstraintIndex::new(n, tariff.net_metering);
    let v = |k: VarKind, t: usize| index.var(k, t);

    let mut c = vec![T::zero(); 4 * n];
    for t in 0..n {
        c[v(VarKind::Grid, t)] = tariff.price(t);
        c[v(VarKind::Ch, t)] = tariff.charge_penalty();
        c[v(VarKind::Dis, t)] = tariff.discharge_penalty();
    }

    let ch_coef = params.eta_c * params.dt;
    let dis_coef = params.eta_d * params.dt;
    let one = T::one();

    let mut a = Vec::with_capacity(index.n_ineq());
    let mut b = Vec::with_capacity(index.n_ineq());
    for &(kind, t) in &index.ineq_rows {
        let (row, rhs): (SparseRow<T>, T) = match kind {
            ConstraintKind::GridLower => (vec![(v(VarKind::Grid, t), -one)], T::zero()),
            ConstraintKind::ChLower => (vec![(v(VarKind::Ch, t), -one)], T::zero()),
            ConstraintKind::ChUpper => (vec![(v(VarKind::Ch, t), one)], params.p_ch_max),
            ConstraintKind::DisLower => (vec![(v(VarKind::Dis, t), -one)], T::zero()),
            ConstraintKind::DisUpper => (vec![(v(VarKind::Dis, t), one)], params.p_dis_max),
            ConstraintKind::SocLower => {
                let mut row = Vec::with_capacity(2 * (t + 1));
                row.extend((0..=t).map(|s| (v(VarKind::Ch, s), -ch_coef)));
                row.extend((0..=t).map(|s| (v(VarKind::Dis, s), dis_coef)));
                (row, params.e0 - params.e_min)
            }
            ConstraintKind::SocUpper => {
                let mut row = Vec::with_capacity(2 * (t + 1));
                row.extend((0..=t).map(|s| (v(VarKind::Ch, s), ch_coef)));
                row.extend((0..=t).map(|s| (v(VarKind::Dis, s), -dis_coef)));
                (row, params.e_max - params.e0)
            }
            ConstraintKind::SolLower => (vec![(v(VarKind::Curt, t), -one)], T::zero()),
            ConstraintKind::SolUpper => (vec![(v(VarKind::Curt, t), one)], prof.p_sol[t]),
            ConstraintKind::Balance => unreachable!("balance is an equality row"),
        };
        a.push(row);
        b.push(rhs);
    }

    let mut a_eq = Vec::with_capacity(n);
    let mut b_eq = Vec::with_capacity(n);
    for t in 0..n {
        a_eq.push(vec![
            (v(VarKind::Grid, t), -one),
            (v(VarKind::Ch, t), one),
            (v(VarKind::Dis, t), -one),
            (v(VarKind::Curt, t), one),
        ]);
        b_eq.push(prof.p_sol[t] - prof.p_load[t]);
    }

    let lp = LpStandardForm::new(c, a, b, a_eq, b_eq);
    Ok((lp, index))
}

/// Stacks a trajectory into the LP variable order.
pub fn pack_trajectory<T: Scalar>(x: &DecisionTrajectory<T>) -> Vec<T> {
    let mut v = Vec::with_capacity(4 * x.len());
    v.extend_from_slice(&x.p_grid);
    v.extend_from_slice(&x.p_ch);
    v.extend_from_slice(&x.p_dis);
    v.extend_from_slice(&x.p_c);
    v
}

/// Inverse of [`pack_trajectory`] for an `n`-step horizon.
pub fn extract_trajectory<T: Scalar>(lp_solution: &[T], n: usize) -> Result<DecisionTrajectory<T>> {
    if lp_solution.len() != 4 * n {
        return Err(Error::LengthMismatch {
            what: "LP primal vector",
            expected: 4 * n,
            got: lp_solution.len(),
        });
    }
    let block = |k: usize| lp_solution[k * n..(k + 1) * n].to_vec();
    Ok(DecisionTrajectory {
        p_grid: block(0),
        p_ch: block(1),
        p_dis: block(2),
        p_c: block(3),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::cost;
    use proptest::prelude::*;

    fn setup(n: usize, net: bool) -> (EssParams<f64>, ExogenousProfile<f64>, Tariff<f64>) {
        let p = EssParams::residential_default();
        let prof = ExogenousProfile::new(vec![1.5; n], vec![1.0; n]);
        let t = Tariff::flat(0.11, n, 0.001, 0.0, net);
        (p, prof, t)
    }

    #[test]
    fn census_single_step() {
        let (p, prof, t) = setup(1, false);
        let (lp, idx) = build_p1(&p, &prof, &t).unwrap();
        assert_eq!(lp.n_vars(), 4);
        assert_eq!(lp.n_eq(), 1);
        assert_eq!(lp.n_ineq(), 9);
        let kinds: Vec<_> = (0..9).map(|i| idx.constraint(RowRef::Ineq(i)).unwrap().0).collect();
        assert_eq!(kinds, ConstraintKind::INEQUALITIES.to_vec());
        let ch_up = idx.row(ConstraintKind::ChUpper, 0).unwrap();
        let RowRef::Ineq(i) = ch_up else { panic!() };
        assert_eq!(lp.b[i], 3.0);
        let RowRef::Ineq(i) = idx.row(ConstraintKind::SolUpper, 0).unwrap() else { panic!() };
        assert_eq!(lp.b[i], 1.5);
        let RowRef::Ineq(i) = idx.row(ConstraintKind::SocLower, 0).unwrap() else { panic!() };
        assert!((lp.b[i] - 1.25).abs() < 1e-15);
        let RowRef::Ineq(i) = idx.row(ConstraintKind::SocUpper, 0).unwrap() else { panic!() };
        assert!((lp.b[i] - 2.25).abs() < 1e-15);
    }

    #[test]
    fn census_net_metering() {
        let (p, prof, t) = setup(1, true);
        let (lp, idx) = build_p1(&p, &prof, &t).unwrap();
        assert_eq!(lp.n_ineq(), 8);
        assert!(idx.row(ConstraintKind::GridLower, 0).is_none());
        assert!(lp.lower.iter().all(|l| l.is_infinite()));

        let (p, prof, t) = setup(5, true);
        let (lp_nm, _) = build_p1(&p, &prof, &t).unwrap();
        let (lp_no, _) = build_p1(&p, &prof, &Tariff { net_metering: false, ..t }).unwrap();
        assert_eq!(lp_no.n_ineq() - lp_nm.n_ineq(), 5);
    }

    #[test]
    fn soc_rows_are_prefix_sums() {
        let (p, prof, t) = setup(2, false);
        let (lp, idx) = build_p1(&p, &prof, &t).unwrap();
        let RowRef::Ineq(i) = idx.row(ConstraintKind::SocUpper, 1).unwrap() else { panic!() };
        let row = &lp.a[i];
        assert_eq!(row.len(), 4);
        let coef = |k, s| row.iter().find(|(j, _)| *j == idx.var(k, s)).unwrap().1;
        assert!((coef(VarKind::Ch, 0) - 0.95).abs() < 1e-15);
        assert!((coef(VarKind::Ch, 1) - 0.95).abs() < 1e-15);
        assert!((coef(VarKind::Dis, 0) + 1.0 / 0.95).abs() < 1e-15);
        assert!((coef(VarKind::Dis, 1) + 1.0 / 0.95).abs() < 1e-15);
    }

    #[test]
    fn index_is_bijective() {
        for net in [false, true] {
            let (p, prof, t) = setup(6, net);
            let (lp, idx) = build_p1(&p, &prof, &t).unwrap();
            for i in 0..lp.n_ineq() {
                let (k, s) = idx.constraint(RowRef::Ineq(i)).unwrap();
                assert_eq!(idx.row(k, s), Some(RowRef::Ineq(i)));
            }
            for i in 0..lp.n_eq() {
                let (k, s) = idx.constraint(RowRef::Eq(i)).unwrap();
                assert_eq!(idx.row(k, s), Some(RowRef::Eq(i)));
            }
        }
    }

    #[test]
    fn build_rejects_bad_input() {
        let (p, prof, t) = setup(3, false);
        assert!(build_p1(&p, &prof, &t.window(0, 2)).is_err());
        let empty = ExogenousProfile::<f64>::zeros(0);
        assert!(matches!(
            build_p1(&p, &empty, &Tariff::flat(0.1, 0, 0.0, 0.0, false)),
            Err(Error::EmptyHorizon)
        ));
        let mut bad = p;
        bad.p_ch_max = 0.0;
        assert!(build_p1(&bad, &prof, &t).is_err());
    }

    #[test]
    fn extract_examples() {
        let z = extract_trajectory(&[0.0; 8], 2).unwrap();
        assert_eq!(z, DecisionTrajectory::zeros(2));
        // basis vector at the second-step discharge slot
        let mut v = vec![0.0; 8];
        v[2 * 2 + 1] = 1.0;
        let x = extract_trajectory(&v, 2).unwrap();
        assert_eq!(x.p_dis, vec![0.0, 1.0]);
        assert_eq!(x.p_grid.iter().chain(&x.p_ch).chain(&x.p_c).sum::<f64>(), 0.0);
        assert!(extract_trajectory(&[0.0; 7], 2).is_err());
    }

    proptest! {
        #[test]
        fn pack_unpack_identity(v in prop::collection::vec(-10.0f64..10.0, 4..=40usize)) {
            let n = v.len() / 4;
            let v = &v[..4 * n];
            let x = extract_trajectory(v, n).unwrap();
            prop_assert_eq!(pack_trajectory(&x), v.to_vec());
        }

        #[test]
        fn packed_objective_matches_cost(
            g in prop::collection::vec(-3.0f64..3.0, 3),
            ch in prop::collection::vec(0.0f64..3.0, 3),
            dis in prop::collection::vec(0.0f64..3.0, 3),
            curt in prop::collection::vec(0.0f64..3.0, 3),
        ) {
            let (p, prof, t) = setup(3, true);
            let (lp, _) = build_p1(&p, &prof, &t).unwrap();
            let x = DecisionTrajectory { p_grid: g, p_ch: ch, p_dis: dis, p_c: curt };
            prop_assert!((lp.objective(&pack_trajectory(&x)) - cost(&x, &t)).abs() < 1e-12);
        }
    }
}

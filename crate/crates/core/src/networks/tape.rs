//! Minimal reverse-mode differentiation on a thread-local tape, used by the
//! trainer where a scalar loss depends on a few hundred raw parameters.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::autodiff::Scalar;

const CONST: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    a: u32,
    da: f64,
    b: u32,
    db: f64,
}

thread_local! {
    static TAPE: RefCell<Vec<Node>> = const { RefCell::new(Vec::new()) };
}

/// A value recorded on the tape. Constants carry no tape entry.
#[derive(Clone, Copy)]
pub(crate) struct Var {
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var({})", self.val)
    }
}

fn push(a: u32, da: f64, b: u32, db: f64) -> u32 {
    TAPE.with(|t| {
        let mut t = t.borrow_mut();
        let idx = t.len() as u32;
        assert!(idx < CONST, "tape overflow");
        t.push(Node { a, da, b, db });
        idx
    })
}

/// Clears the tape. Variables created before the call become invalid.
pub(crate) fn reset() {
    TAPE.with(|t| t.borrow_mut().clear());
}

/// Registers an independent variable.
pub(crate) fn input(val: f64) -> Var {
    Var { idx: push(CONST, 0.0, CONST, 0.0), val }
}

/// Adjoints of `out` with respect to the first `n` entries of the tape,
/// i.e. the inputs registered right after [`reset`].
pub(crate) fn gradient(out: Var, n: usize) -> Vec<f64> {
    TAPE.with(|t| {
        let t = t.borrow();
        let mut adj = vec![0.0; t.len()];
        if out.idx == CONST {
            return vec![0.0; n];
        }
        adj[out.idx as usize] = 1.0;
        for i in (0..=out.idx as usize).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let node = t[i];
            if node.a != CONST {
                adj[node.a as usize] += g * node.da;
            }
            if node.b != CONST {
                adj[node.b as usize] += g * node.db;
            }
        }
        adj.truncate(n);
        adj
    })
}

impl Var {
    fn constant(val: f64) -> Self {
        Var { idx: CONST, val }
    }

    fn unary(self, val: f64, d: f64) -> Self {
        if self.idx == CONST {
            return Var::constant(val);
        }
        Var { idx: push(self.idx, d, CONST, 0.0), val }
    }

    fn binary(self, other: Var, val: f64, da: f64, db: f64) -> Self {
        match (self.idx, other.idx) {
            (CONST, CONST) => Var::constant(val),
            (a, CONST) => Var { idx: push(a, da, CONST, 0.0), val },
            (CONST, b) => Var { idx: push(b, db, CONST, 0.0), val },
            (a, b) => Var { idx: push(a, da, b, db), val },
        }
    }
}

impl PartialEq for Var {
    fn eq(&self, other: &Self) -> bool {
        self.val == other.val
    }
}

impl PartialOrd for Var {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.val.partial_cmp(&other.val)
    }
}

impl Add for Var {
    type Output = Var;
    fn add(self, o: Var) -> Var {
        self.binary(o, self.val + o.val, 1.0, 1.0)
    }
}

impl Sub for Var {
    type Output = Var;
    fn sub(self, o: Var) -> Var {
        self.binary(o, self.val - o.val, 1.0, -1.0)
    }
}

impl Mul for Var {
    type Output = Var;
    fn mul(self, o: Var) -> Var {
        self.binary(o, self.val * o.val, o.val, self.val)
    }
}

impl Div for Var {
    type Output = Var;
    fn div(self, o: Var) -> Var {
        let v = self.val / o.val;
        self.binary(o, v, 1.0 / o.val, -v / o.val)
    }
}

impl Neg for Var {
    type Output = Var;
    fn neg(self) -> Var {
        self.unary(-self.val, -1.0)
    }
}

impl Add<f64> for Var {
    type Output = Var;
    fn add(self, o: f64) -> Var {
        self.unary(self.val + o, 1.0)
    }
}

impl Sub<f64> for Var {
    type Output = Var;
    fn sub(self, o: f64) -> Var {
        self.unary(self.val - o, 1.0)
    }
}

impl Mul<f64> for Var {
    type Output = Var;
    fn mul(self, o: f64) -> Var {
        self.unary(self.val * o, o)
    }
}

impl Div<f64> for Var {
    type Output = Var;
    fn div(self, o: f64) -> Var {
        self.unary(self.val / o, 1.0 / o)
    }
}

impl AddAssign for Var {
    fn add_assign(&mut self, o: Var) {
        *self = *self + o;
    }
}

impl SubAssign for Var {
    fn sub_assign(&mut self, o: Var) {
        *self = *self - o;
    }
}

impl MulAssign for Var {
    fn mul_assign(&mut self, o: Var) {
        *self = *self * o;
    }
}

impl Scalar for Var {
    fn from_f64(v: f64) -> Self {
        Var::constant(v)
    }
    fn value(&self) -> f64 {
        self.val
    }
    fn ln(self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val)
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }
    fn powf(self, p: f64) -> Self {
        self.unary(self.val.powf(p), p * self.val.powf(p - 1.0))
    }
    fn softplus(self) -> Self {
        self.unary(self.val.softplus(), self.val.sigmoid())
    }
    fn sigmoid(self) -> Self {
        let s = self.val.sigmoid();
        self.unary(s, s * (1.0 - s))
    }
    fn max_const(self, c: f64) -> Self {
        if self.val > c {
            self
        } else {
            Var::constant(c)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_polynomial() {
        reset();
        let x = input(2.0);
        let y = input(3.0);
        let f = x * x * y + y.exp() - (x / y).ln() * 2.0;
        let g = gradient(f, 2);
        assert_eq!(f.value(), 12.0 + 3f64.exp() - 2.0 * (2.0f64 / 3.0).ln());
        assert!((g[0] - (2.0 * 2.0 * 3.0 - 2.0 / 2.0)).abs() < 1e-13);
        assert!((g[1] - (4.0 + 3f64.exp() + 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn matches_forward_mode_through_network() {
        use crate::autodiff::Dual;
        use crate::networks::IcnnWeights;
        let raw: Vec<f64> =
            (0..IcnnWeights::zeros().parameter_count()).map(|i| ((i * 37 % 17) as f64 - 8.0) / 10.0).collect();
        reset();
        let vars: Vec<Var> = raw.iter().map(|&r| input(r)).collect();
        let out = IcnnWeights::from_raw(&vars).psi_iso(Var::from_f64(3.4), Var::from_f64(3.9));
        let g = gradient(out, raw.len());
        for k in [0, 5, 20, 60, 100, 122] {
            let duals: Vec<Dual<f64, 1>> = raw
                .iter()
                .enumerate()
                .map(|(i, &r)| if i == k { Dual::variable(r, 0) } else { Dual::constant(r) })
                .collect();
            let d = IcnnWeights::from_raw(&duals).psi_iso(Dual::constant(3.4), Dual::constant(3.9));
            assert!((d.eps[0] - g[k]).abs() <= 1e-12 * g[k].abs().max(1.0));
            assert!((d.re - out.value()).abs() < 1e-14);
        }
    }

    #[test]
    fn constants_do_not_grow_the_tape() {
        reset();
        let c = Var::from_f64(2.0) * Var::from_f64(3.0) + 1.0;
        assert_eq!(c.value(), 7.0);
        assert_eq!(TAPE.with(|t| t.borrow().len()), 0);
        assert_eq!(gradient(c, 0), Vec::<f64>::new());
    }
}

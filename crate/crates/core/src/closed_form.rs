//! Reference formulas for three families of rational nodal curves, in plain
//! arithmetic with no solver calls. All charts have unit radius: `z_e = z - q_e`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::kernel::{Genus0Kernel, KernelEvaluator};
use crate::ratdiff::{RationalDifferential, Term};

/// `(a, b; c, d) = (a - c)(b - d) / ((a - d)(b - c))`.
pub fn cross_ratio(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Complex64 {
    (a - c) * (b - d) / ((a - d) * (b - c))
}

/// Value at `q` of the part of `omega` that is regular at `q`, computed
/// term by term.
pub fn regular_value(omega: &RationalDifferential, q: Complex64) -> Complex64 {
    omega
        .terms()
        .iter()
        .filter(|t| !(t.is_at(q) && t.order >= 1))
        .map(|t| t.coeff * t.displacement(q).powi(-t.order))
        .sum()
}

fn double_pole(q: Complex64, coeff: Complex64) -> RationalDifferential {
    RationalDifferential::from_terms([Term::new(q, 2, coeff)])
}

/// A single self-node on a rational component, `q_1 ↔ q_2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneNode {
    pub q1: Complex64,
    pub q2: Complex64,
}

impl OneNode {
    /// First-order correction `-s (ω(z, q_1) ξ̃_2 + ω(z, q_2) ξ̃_1)` of a
    /// differential with simple poles at the node.
    pub fn nonseparating_correction(
        &self,
        omega: &RationalDifferential,
        s: Complex64,
    ) -> RationalDifferential {
        let xi1 = regular_value(omega, self.q1);
        let xi2 = regular_value(omega, self.q2);
        &double_pole(self.q1, -s * xi2) + &double_pole(self.q2, -s * xi1)
    }
}

/// Coefficients of the separating-node expansion on side `i`:
/// `Ω_{i,s} = Ω_i + first·s·ω_i(z, q_i) + second·s²·ω_i(z, q_i) + O(s³)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparatingTerms {
    pub first: Complex64,
    pub second: Complex64,
}

/// `first = -ξ̃_{i'}`, `second = β_{i'} ξ̃_i`, where `β_{i'}` is the
/// same-chart regular part of the other side's bidifferential.
pub fn separating_terms(
    xi_here: Complex64,
    xi_other: Complex64,
    beta_other: Complex64,
) -> SeparatingTerms {
    SeparatingTerms {
        first: -xi_other,
        second: beta_other * xi_here,
    }
}

/// The separating-node expansion on a rational side at `q` as a differential.
pub fn separating_correction(
    q: Complex64,
    terms: SeparatingTerms,
    s: Complex64,
) -> RationalDifferential {
    double_pole(q, terms.first * s + terms.second * s * s)
}

/// Two rational components `a`, `b` meeting at `q_{e_i} ∈ a`, `q_{-e_i} ∈ b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Banana {
    /// `q_{e_1}, q_{e_2}` on `a`.
    pub on_a: [Complex64; 2],
    /// `q_{-e_1}, q_{-e_2}` on `b`.
    pub on_b: [Complex64; 2],
}

impl Banana {
    /// `β^b_{jk}` between the `b`-side chart centres.
    pub fn beta_b(&self, j: usize, k: usize) -> Complex64 {
        Genus0Kernel.beta((self.on_b[j], 1.0), (self.on_b[k], 1.0))
    }

    /// First-order `η_b^(1)` for data supported on `a` with no node residues.
    pub fn eta_b1(&self, omega_a: &RationalDifferential, s: [Complex64; 2]) -> RationalDifferential {
        (0..2)
            .map(|i| double_pole(self.on_b[i], -s[i] * regular_value(omega_a, self.on_a[i])))
            .sum()
    }

    /// Second-order `η_a^(2)` for the same data.
    pub fn eta_a2(&self, omega_a: &RationalDifferential, s: [Complex64; 2]) -> RationalDifferential {
        let xi = [
            regular_value(omega_a, self.on_a[0]),
            regular_value(omega_a, self.on_a[1]),
        ];
        let at = |i: usize, c: Complex64| double_pole(self.on_a[i], c);
        let mut out = &at(0, s[0] * s[0] * self.beta_b(0, 0) * xi[0])
            + &at(1, s[1] * s[1] * self.beta_b(1, 1) * xi[1]);
        out = &out + &at(0, s[0] * s[1] * self.beta_b(0, 1) * xi[1]);
        &out + &at(1, s[0] * s[1] * self.beta_b(1, 0) * xi[0])
    }

    /// `ξ̃` of `v_1 = ω_{q_{e_2} - q_{e_1}} + ω_{q_{-e_1} - q_{-e_2}}` at
    /// `(e_1, e_2, -e_1, -e_2)`.
    fn v1_xi_tilde(&self) -> [Complex64; 4] {
        let da = self.on_a[0] - self.on_a[1];
        let db = self.on_b[0] - self.on_b[1];
        [1.0 / da, 1.0 / da, -1.0 / db, -1.0 / db]
    }

    /// `τ_11` through linear order, for the cycle leaving `a` through `e_2`
    /// and returning through `e_1`.
    pub fn tau11(&self, s: [Complex64; 2]) -> Complex64 {
        let x = self.v1_xi_tilde();
        let log_part = s[0].ln() + s[1].ln();
        let constant = -2.0 * (self.on_a[0] - self.on_a[1]).ln()
            - 2.0 * (self.on_b[0] - self.on_b[1]).ln();
        let linear = -2.0 * s[0] * x[2] * x[0] - 2.0 * s[1] * x[3] * x[1];
        log_part + constant + linear
    }
}

/// One rational component with `g` self-nodes `q_i ↔ q_{-i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotallyDegenerate {
    pub pairs: Vec<(Complex64, Complex64)>,
}

impl TotallyDegenerate {
    pub fn genus(&self) -> usize {
        self.pairs.len()
    }

    fn q(&self, i: usize) -> Complex64 {
        self.pairs[i].0
    }

    fn qm(&self, i: usize) -> Complex64 {
        self.pairs[i].1
    }

    /// `v_i = dz (1/(z - q_i) - 1/(z - q_{-i}))`.
    pub fn v(&self, i: usize) -> RationalDifferential {
        RationalDifferential::third_kind(self.q(i), self.qm(i))
    }

    /// `(ξ̃_k, ξ̃_{-k})` of `v_i` for every `k`.
    pub fn xi_tilde_of_v(&self, i: usize) -> Vec<(Complex64, Complex64)> {
        let d = self.q(i) - self.qm(i);
        (0..self.genus())
            .map(|k| {
                if k == i {
                    let x = 1.0 / (self.qm(i) - self.q(i));
                    (x, x)
                } else {
                    let at = |p: Complex64| d / ((p - self.q(i)) * (p - self.qm(i)));
                    (at(self.q(k)), at(self.qm(k)))
                }
            })
            .collect()
    }

    /// `Ω_s` through first order for stable `omega`.
    pub fn omega_first_order(
        &self,
        omega: &RationalDifferential,
        s: &[Complex64],
    ) -> RationalDifferential {
        let mut out = omega.clone();
        for k in 0..self.genus() {
            let xk = regular_value(omega, self.q(k));
            let xmk = regular_value(omega, self.qm(k));
            out = &out + &double_pole(self.q(k), -s[k] * xmk);
            out = &out + &double_pole(self.qm(k), -s[k] * xk);
        }
        out
    }

    /// Diagonal entry through linear order. The constant is
    /// `-2 Log(q_i - q_{-i})`.
    pub fn tau_ii(&self, s: &[Complex64], i: usize) -> Complex64 {
        let (qi, qmi) = (self.q(i), self.qm(i));
        let d = qi - qmi;
        let mut total = s[i].ln() - 2.0 * d.ln() - 2.0 * s[i] / (d * d);
        for k in (0..self.genus()).filter(|&k| k != i) {
            let (qk, qmk) = (self.q(k), self.qm(k));
            total -= 2.0 * s[k] * d * d / ((qk - qmi) * (qk - qi) * (qmk - qmi) * (qmk - qi));
        }
        total
    }

    /// Off-diagonal entry through linear order.
    pub fn tau_ij(&self, s: &[Complex64], i: usize, j: usize) -> Complex64 {
        let (qi, qmi, qj, qmj) = (self.q(i), self.qm(i), self.q(j), self.qm(j));
        let (di, dj) = (qi - qmi, qj - qmj);
        let mut total = cross_ratio(qi, qmi, qj, qmj).ln();
        for k in (0..self.genus()).filter(|&k| k != i && k != j) {
            let (qk, qmk) = (self.q(k), self.qm(k));
            total -= s[k]
                * (di * dj / ((qk - qi) * (qk - qmi) * (qmk - qj) * (qmk - qmj))
                    + di * dj / ((qk - qj) * (qk - qmj) * (qmk - qi) * (qmk - qmi)));
        }
        total -= s[i] * dj / (qmi - qi)
            * (1.0 / ((qi - qj) * (qi - qmj)) + 1.0 / ((qmi - qj) * (qmi - qmj)));
        total -= s[j] * di / (qmj - qj)
            * (1.0 / ((qj - qi) * (qj - qmi)) + 1.0 / ((qmj - qi) * (qmj - qmi)));
        total
    }

    pub fn tau(&self, s: &[Complex64]) -> Vec<Vec<Complex64>> {
        let g = self.genus();
        (0..g)
            .map(|i| {
                (0..g)
                    .map(|j| if i == j { self.tau_ii(s, i) } else { self.tau_ij(s, i, j) })
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn genus_one_diagonal() {
        let td = TotallyDegenerate {
            pairs: vec![(c(2.0, 0.0), c(-2.0, 0.0))],
        };
        let s: f64 = 1e-3;
        let want = s.ln() - 2.0 * 4f64.ln() - s / 8.0;
        assert!((td.tau_ii(&[c(s, 0.0)], 0) - c(want, 0.0)).norm() < 1e-14);
        assert_eq!(td.xi_tilde_of_v(0)[0], (c(-0.25, 0.0), c(-0.25, 0.0)));
    }

    #[test]
    fn zero_s_leaves_constants() {
        let td = TotallyDegenerate {
            pairs: vec![(c(2.0, 0.0), c(-2.0, 0.0)), (c(0.0, 2.0), c(0.0, -2.0))],
        };
        let zero = [c(0.0, 0.0); 2];
        let cr = cross_ratio(c(2.0, 0.0), c(-2.0, 0.0), c(0.0, 2.0), c(0.0, -2.0));
        assert!((td.tau_ij(&zero, 0, 1) - cr.ln()).norm() < 1e-15);
        assert!((cr - c(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn regular_values_match_partial_fractions() {
        let td = TotallyDegenerate {
            pairs: vec![(c(2.0, 0.0), c(-2.0, 0.0)), (c(3.0, 5.0), c(-1.0, 5.0))],
        };
        for i in 0..2 {
            let v = td.v(i);
            for (k, (x, xm)) in td.xi_tilde_of_v(i).into_iter().enumerate() {
                assert!((regular_value(&v, td.pairs[k].0) - x).norm() < 1e-15);
                assert!((regular_value(&v, td.pairs[k].1) - xm).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn one_node_matches_totally_degenerate_genus_one() {
        let node = OneNode {
            q1: c(2.0, 0.0),
            q2: c(-2.0, 0.0),
        };
        let td = TotallyDegenerate {
            pairs: vec![(node.q1, node.q2)],
        };
        let v = td.v(0);
        let s = c(1e-3, 0.0);
        let a = &v + &node.nonseparating_correction(&v, s);
        let b = td.omega_first_order(&v, &[s]);
        assert_eq!(a, b);
    }

    #[test]
    fn separating_terms_without_beta() {
        let t = separating_terms(c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0));
        assert_eq!(t.first, c(-2.0, 0.0));
        assert_eq!(t.second, c(0.0, 0.0));
    }
}

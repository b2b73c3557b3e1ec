//! Period matrix of a plumbed one-component curve from its Schottky group.
//!
//! The gluing maps `γ_i(z) = q_{-i} + C_i/(z - q_i)`, `C_i = ρ_i ρ_{-i} s_i`,
//! generate a free group whose quotient is the plumbed surface. Entries are
//! sums of log cross-ratios over double cosets `⟨γ_k⟩ \ G / ⟨γ_j⟩`; the
//! identity coset on the diagonal contributes the log multiplier.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{OrientedEdge, PlumbingParams, StableCurve};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("the oracle needs a single component with self-loops only")]
    NotTotallyDegenerate,
    #[error("generator {index} is not loxodromic (|multiplier| = {modulus:.3e})")]
    NotLoxodromic { index: usize, modulus: f64 },
    #[error("word length must be at least 1")]
    ZeroLength,
}

/// 2×2 complex matrix acting by Möbius transformation.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Mobius([Complex64; 4]);

impl Mobius {
    fn mul(&self, other: &Self) -> Self {
        let [a, b, c, d] = self.0;
        let [e, f, g, h] = other.0;
        Mobius([a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h])
    }

    fn inverse(&self) -> Self {
        let [a, b, c, d] = self.0;
        Mobius([d, -b, -c, a])
    }

    /// Images of `z1`, `z2` and their difference `(z1 - z2)/((c z1 + d)(c z2 + d))`
    /// for a unit-determinant map, free of cancellation.
    fn apply_pair(&self, z1: Complex64, z2: Complex64) -> (Complex64, Complex64, Complex64) {
        let [a, b, c, d] = self.0;
        let (d1, d2) = (c * z1 + d, c * z2 + d);
        ((a * z1 + b) / d1, (a * z2 + b) / d2, (z1 - z2) / (d1 * d2))
    }

    /// Rescale to unit determinant. Products of generators then have unit
    /// determinant too, which is never recomputed: `ad - bc` cancels for long words.
    fn normalized(&self) -> Self {
        let [a, b, c, d] = self.0;
        let k = (a * d - b * c).sqrt();
        Mobius([a / k, b / k, c / k, d / k])
    }
}

/// One loxodromic generator with its fixed points and multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    /// Repelling fixed point, near `q_i`.
    pub repelling: Complex64,
    /// Attracting fixed point, near `q_{-i}`.
    pub attracting: Complex64,
    pub multiplier: Complex64,
}

impl Generator {
    /// Fixed points of `z ↦ q_- + c/(z - q)` solve `(z - q)(z - q_-) = c`.
    pub fn new(q: Complex64, q_minus: Complex64, c: Complex64) -> Self {
        let d = q - q_minus;
        let mut root = (d * d + 4.0 * c).sqrt();
        if (root * d.conj()).re < 0.0 {
            root = -root;
        }
        // Small root of δ² + dδ - c = 0 without cancellation.
        let delta = 2.0 * c / (d + root);
        let attracting = q_minus - delta;
        let repelling = q + delta;
        let multiplier = -c / ((attracting - q) * (attracting - q));
        Self {
            repelling,
            attracting,
            multiplier,
        }
    }
}

/// Truncated series with its error estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTau {
    pub tau: Vec<Vec<Complex64>>,
    /// `Σ |term|` over words of the maximal length.
    pub shell: f64,
    /// Shell magnitudes for lengths `1..=L`.
    pub shells: Vec<f64>,
    pub generators: Vec<Generator>,
}

impl OracleTau {
    /// False if the shells stop shrinking, which signals divergence.
    pub fn shells_decrease(&self) -> bool {
        self.shells.windows(2).all(|w| w[1] <= w[0] || w[1] < 1e-300)
    }
}

/// `ln(1 + x)` accurate for small `x`.
fn ln_1p(x: Complex64) -> Complex64 {
    if x.norm() < 1e-4 {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut power = x;
        for n in 1..=6 {
            let term = power / n as f64;
            acc += if n % 2 == 1 { term } else { -term };
            power *= x;
        }
        acc
    } else {
        (1.0 + x).ln()
    }
}

/// `log (a, b; c, d)` via `(a, b; c, d) - 1 = (a - b)(c - d)/((a - d)(b - c))`,
/// with `c - d` supplied separately so that it can be computed accurately.
fn log_cross_ratio(
    a: Complex64,
    b: Complex64,
    (c, d): (Complex64, Complex64),
    c_minus_d: Complex64,
) -> Complex64 {
    ln_1p((a - b) * c_minus_d / ((a - d) * (b - c)))
}

/// Period matrix of the totally degenerate `curve` plumbed with `params`,
/// from reduced words of length at most `max_len`.
pub fn oracle_tau(
    curve: &StableCurve,
    params: &PlumbingParams,
    max_len: usize,
) -> Result<OracleTau, OracleError> {
    if max_len == 0 {
        return Err(OracleError::ZeroLength);
    }
    if curve.n_vertices() != 1 {
        return Err(OracleError::NotTotallyDegenerate);
    }
    let g = curve.n_edges();
    let mut gens = Vec::with_capacity(g);
    // letters[2i] = γ_i, letters[2i + 1] = γ_i^{-1}
    let mut letters = Vec::with_capacity(2 * g);
    for i in 0..g {
        let e = OrientedEdge::forward(i);
        let (q, qm) = (curve.node_point(e), curve.node_point(e.reversed()));
        let c = params.get(e) * curve.radius(e) * curve.radius(e.reversed());
        let gen = Generator::new(q, qm, c);
        if gen.multiplier.norm() >= 1.0 - 1e-12 {
            return Err(OracleError::NotLoxodromic {
                index: i,
                modulus: gen.multiplier.norm(),
            });
        }
        gens.push(gen);
        let m = Mobius([qm, c - qm * q, Complex64::new(1.0, 0.0), -q]).normalized();
        letters.push(m);
        letters.push(m.inverse());
    }

    let zero = Complex64::new(0.0, 0.0);
    let mut tau = vec![vec![zero; g]; g];
    for k in 0..g {
        tau[k][k] = gens[k].multiplier.ln();
        for j in 0..g {
            if j != k {
                let (pk, ak) = (gens[k].repelling, gens[k].attracting);
                let (pj, aj) = (gens[j].repelling, gens[j].attracting);
                tau[k][j] = log_cross_ratio(pk, ak, (pj, aj), pj - aj);
            }
        }
    }

    // Breadth-first enumeration of reduced words; `first` and `last` are
    // generator indices.
    struct Word {
        map: Mobius,
        first: usize,
        last_letter: usize,
    }
    let mut layer: Vec<Word> = (0..2 * g)
        .map(|l| Word {
            map: letters[l],
            first: l / 2,
            last_letter: l,
        })
        .collect();
    let mut shells = Vec::with_capacity(max_len);
    for len in 1..=max_len {
        let mut shell = 0.0;
        for w in &layer {
            let last = w.last_letter / 2;
            for k in (0..g).filter(|&k| k != w.first) {
                for j in (0..g).filter(|&j| j != last) {
                    let (c, d, diff) =
                        w.map.apply_pair(gens[j].repelling, gens[j].attracting);
                    let term =
                        log_cross_ratio(gens[k].repelling, gens[k].attracting, (c, d), diff);
                    tau[k][j] += term;
                    shell += term.norm();
                }
            }
        }
        shells.push(shell);
        if len == max_len {
            break;
        }
        let mut next = Vec::with_capacity(layer.len() * (2 * g - 1));
        for w in &layer {
            for l in 0..2 * g {
                if l == (w.last_letter ^ 1) {
                    continue;
                }
                next.push(Word {
                    map: w.map.mul(&letters[l]),
                    first: w.first,
                    last_letter: l,
                });
            }
        }
        layer = next;
    }
    Ok(OracleTau {
        tau,
        shell: *shells.last().expect("max_len >= 1"),
        shells,
        generators: gens,
    })
}


#[cfg(test)]
mod solver_agreement {
    use super::*;
    use crate::curve::presets;
    use crate::jump::SolverSettings;
    use crate::numerics::dist_mod_2pi_i;
    use crate::period::period_matrix_numeric;

    #[test]
    fn matches_jump_solver_on_genus_two() {
        let curve = presets::genus_two();
        let params = PlumbingParams::uniform(2, 1e-4);
        let orc = oracle_tau(&curve, &params, 8).unwrap();
        let (tau, _) = period_matrix_numeric(&curve, &params, &SolverSettings::default()).unwrap();
        for h in 0..2 {
            for k in 0..2 {
                let d = dist_mod_2pi_i(orc.tau[h][k], tau.entries[h][k]);
                assert!(d < 1e-8, "({h},{k}) {} vs {}", orc.tau[h][k], tau.entries[h][k]);
            }
        }
    }
}

//! Rational differentials on a genus-0 component.
//!
//! A [`RationalDifferential`] is stored as a finite list of terms
//! `c (z - p)^{-m} dz`. Terms with `m >= 1` are principal parts at the pole
//! `p`; terms with `m <= 0` are polynomial pieces centred at `p`, which only
//! show up transiently when principal parts are pulled back through a gluing
//! map. A differential without polynomial pieces whose residues sum to zero
//! is holomorphic at infinity.

use std::cmp::Ordering;
use std::f64::consts::FRAC_PI_2;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coefficients smaller than this are flushed to zero during canonicalization.
pub const FLUSH_THRESHOLD: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RatDiffError {
    #[error("evaluation at a pole {0}")]
    EvaluationAtPole(Complex64),
    #[error("integration path passes through the pole {0}")]
    PathThroughPole(Complex64),
    #[error("pole {pole} lies on or inside the expansion circle of radius {radius} around {center}")]
    PoleInsideChart {
        pole: Complex64,
        center: Complex64,
        radius: f64,
    },
    #[error("{zeros} zeros against total pole order {pole_order}: not holomorphic at infinity")]
    PoleAtInfinity { zeros: usize, pole_order: u32 },
}

/// One partial-fraction term `coeff * (z - pole)^(-order) dz`.
///
/// The pole is stored as `anchor + offset`. Poles produced by gluing sit a
/// tiny distance from a node point; keeping that distance separately
/// preserves its relative precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "TermRepr", into = "TermRepr")]
pub struct Term {
    pub anchor: Complex64,
    pub offset: Complex64,
    pub order: i32,
    pub coeff: Complex64,
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    pole: Complex64,
    order: i32,
    coeff: Complex64,
}

impl From<TermRepr> for Term {
    fn from(r: TermRepr) -> Self {
        Term::new(r.pole, r.order, r.coeff)
    }
}

impl From<Term> for TermRepr {
    fn from(t: Term) -> Self {
        TermRepr {
            pole: t.pole(),
            order: t.order,
            coeff: t.coeff,
        }
    }
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

impl Term {
    pub fn new(pole: Complex64, order: i32, coeff: Complex64) -> Self {
        Self::anchored(pole, ZERO, order, coeff)
    }

    pub fn anchored(anchor: Complex64, offset: Complex64, order: i32, coeff: Complex64) -> Self {
        Self {
            anchor,
            offset,
            order,
            coeff,
        }
    }

    /// Pole location, rounded to a single complex number.
    pub fn pole(&self) -> Complex64 {
        self.anchor + self.offset
    }

    /// True for a pole exactly at `p` with no offset.
    pub fn is_at(&self, p: Complex64) -> bool {
        self.offset == ZERO && self.anchor == p
    }

    /// `z - pole`, computed without rounding the pole first.
    pub fn displacement(&self, z: Complex64) -> Complex64 {
        (z - self.anchor) - self.offset
    }

    fn with_coeff(&self, coeff: Complex64) -> Self {
        Self { coeff, ..*self }
    }

    fn key_cmp(&self, other: &Self) -> Ordering {
        let key = |t: &Self| [t.anchor.re, t.anchor.im, t.offset.re, t.offset.im];
        let (a, b) = (key(self), key(other));
        a.iter()
            .zip(&b)
            .fold(Ordering::Equal, |acc, (x, y)| acc.then(x.total_cmp(y)))
            .then(self.order.cmp(&other.order))
    }

    fn same_key(&self, other: &Self) -> bool {
        self.anchor == other.anchor && self.offset == other.offset && self.order == other.order
    }

    /// Value of the coefficient function `coeff * (z - pole)^(-order)`.
    fn eval(&self, z: Complex64) -> Complex64 {
        self.coeff * self.displacement(z).powi(-self.order)
    }
}

/// The gluing map `w = target + scale / (z - source)`.
///
/// For an oriented edge `e` it sends the chart around `q_e` on `v(e)` to the
/// chart around `q_{-e}` on `v(-e)`, with `scale = rho_e rho_{-e} s_e`. The map
/// is its own inverse after swapping `source` and `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GluingMap {
    pub source: Complex64,
    pub target: Complex64,
    pub scale: Complex64,
}

impl GluingMap {
    pub fn apply(&self, z: Complex64) -> Complex64 {
        self.target + self.scale / (z - self.source)
    }

    /// `dw/dz` at `z`.
    pub fn derivative(&self, z: Complex64) -> Complex64 {
        let d = z - self.source;
        -self.scale / (d * d)
    }

    pub fn inverse(&self) -> Self {
        Self {
            source: self.target,
            target: self.source,
            scale: self.scale,
        }
    }
}

/// Laurent coefficients `a_k` for `k` in `min_index..=max_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laurent {
    pub min_index: i32,
    pub coeffs: Vec<Complex64>,
}

impl Laurent {
    pub fn coeff(&self, k: i32) -> Complex64 {
        let idx = k - self.min_index;
        if idx < 0 {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs
            .get(idx as usize)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn residue(&self) -> Complex64 {
        self.coeff(-1)
    }

    /// Constant coefficient, the chart value of the holomorphic part.
    pub fn constant(&self) -> Complex64 {
        self.coeff(0)
    }
}

/// A meromorphic differential `f(z) dz` on the Riemann sphere in
/// partial-fraction form.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Term>", into = "Vec<Term>")]
pub struct RationalDifferential {
    terms: Vec<Term>,
}

impl From<Vec<Term>> for RationalDifferential {
    fn from(terms: Vec<Term>) -> Self {
        Self::from_terms(terms)
    }
}

impl From<RationalDifferential> for Vec<Term> {
    fn from(d: RationalDifferential) -> Self {
        d.terms
    }
}

impl RationalDifferential {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    /// Builds a canonical differential: equal (pole, order) pairs merged,
    /// zero coefficients pruned, deterministic term order.
    pub fn from_terms(terms: impl IntoIterator<Item = Term>) -> Self {
        let mut terms: Vec<Term> = terms.into_iter().collect();
        terms.sort_by(|a, b| a.key_cmp(b));
        let mut merged: Vec<Term> = Vec::with_capacity(terms.len());
        for t in terms {
            match merged.last_mut() {
                Some(last) if last.same_key(&t) => last.coeff += t.coeff,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coeff.norm() >= FLUSH_THRESHOLD);
        Self { terms: merged }
    }

    /// `coeff * (z - pole)^(-order) dz`.
    pub fn monomial(pole: Complex64, order: i32, coeff: Complex64) -> Self {
        Self::from_terms([Term::new(pole, order, coeff)])
    }

    /// `dz/(z - a) - dz/(z - b)`: simple poles with residues `+1` at `a` and
    /// `-1` at `b`.
    pub fn third_kind(a: Complex64, b: Complex64) -> Self {
        let one = Complex64::new(1.0, 0.0);
        Self::from_terms([Term::new(a, 1, one), Term::new(b, 1, -one)])
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_pole_order(&self) -> i32 {
        self.terms.iter().map(|t| t.order).max().unwrap_or(0)
    }

    /// True when some term is a polynomial piece (a pole at infinity).
    pub fn has_polynomial_part(&self) -> bool {
        self.terms.iter().any(|t| t.order <= 0)
    }

    /// Largest coefficient magnitude; a crude scale for tolerances.
    pub fn scale(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.norm()).fold(0.0, f64::max)
    }

    pub fn residue(&self, p: Complex64) -> Complex64 {
        self.terms
            .iter()
            .filter(|t| t.order == 1 && t.is_at(p))
            .map(|t| t.coeff)
            .sum()
    }

    pub fn residue_sum(&self) -> Complex64 {
        self.terms
            .iter()
            .filter(|t| t.order == 1)
            .map(|t| t.coeff)
            .sum()
    }

    /// Holomorphic at infinity up to the relative tolerance `rel_tol`.
    pub fn is_holomorphic_at_infinity(&self, rel_tol: f64) -> bool {
        if self.has_polynomial_part() {
            return false;
        }
        let mass: f64 = self
            .terms
            .iter()
            .filter(|t| t.order == 1)
            .map(|t| t.coeff.norm())
            .sum();
        self.residue_sum().norm() <= rel_tol * mass.max(f64::MIN_POSITIVE)
    }

    /// Distinct pole locations (order >= 1), in canonical order.
    pub fn poles(&self) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = Vec::new();
        for t in self.terms.iter().filter(|t| t.order >= 1) {
            if out.last() != Some(&t.pole()) {
                out.push(t.pole());
            }
        }
        out
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self::from_terms(self.terms.iter().map(|t| t.with_coeff(t.coeff * c)))
    }

    /// Coefficient function `f(z)` of `f(z) dz`.
    pub fn eval(&self, z: Complex64) -> Result<Complex64, RatDiffError> {
        let mut acc = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            if t.order >= 1 && t.displacement(z) == ZERO {
                return Err(RatDiffError::EvaluationAtPole(z));
            }
            acc += t.eval(z);
        }
        Ok(acc)
    }

    /// `f(base + offset)`, with the displacement from each pole formed
    /// before adding `base`. Accurate near node points when `base` is the
    /// node and `offset` is small.
    pub fn eval_near(&self, base: Complex64, offset: Complex64) -> Result<Complex64, RatDiffError> {
        let mut acc = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            let d = (base - t.anchor) + (offset - t.offset);
            if t.order >= 1 && d == ZERO {
                return Err(RatDiffError::EvaluationAtPole(base + offset));
            }
            acc += t.coeff * d.powi(-t.order);
        }
        Ok(acc)
    }

    /// `Σ |term|` at `base + offset`: the magnitude that sets the rounding
    /// error of [`Self::eval_near`].
    pub fn gross_near(&self, base: Complex64, offset: Complex64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let d = (base - t.anchor) + (offset - t.offset);
                (t.coeff * d.powi(-t.order)).norm()
            })
            .sum()
    }

    /// Derivative `f'(z)` of the coefficient function.
    pub fn eval_derivative(&self, z: Complex64) -> Result<Complex64, RatDiffError> {
        let mut acc = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            if t.order >= 1 && t.displacement(z) == ZERO {
                return Err(RatDiffError::EvaluationAtPole(z));
            }
            if t.order != 0 {
                acc += -f64::from(t.order) * t.coeff * t.displacement(z).powi(-t.order - 1);
            }
        }
        Ok(acc)
    }

    /// Terms with a pole exactly at `q`.
    pub fn principal_part_at(&self, q: Complex64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .filter(|t| t.order >= 1 && t.is_at(q))
                .copied()
                .collect(),
        }
    }

    /// Everything except the principal part at `q`.
    pub fn holomorphic_part_at(&self, q: Complex64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .filter(|t| !(t.order >= 1 && t.is_at(q)))
                .copied()
                .collect(),
        }
    }

    /// Principal parts whose poles lie strictly inside the disk.
    ///
    /// This is the residue-calculus value of the Cauchy integral
    /// `∮ dz / (2πi (z - w)) ω(w)` over the counter-clockwise circle, for `z`
    /// outside the disk.
    pub fn principal_parts_inside(&self, center: Complex64, radius: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .filter(|t| t.order >= 1 && t.displacement(center).norm() < radius)
                .copied()
                .collect(),
        }
    }

    /// Sum of residues at poles strictly inside the disk.
    pub fn residues_inside(&self, center: Complex64, radius: f64) -> Complex64 {
        self.terms
            .iter()
            .filter(|t| t.order == 1 && t.displacement(center).norm() < radius)
            .map(|t| t.coeff)
            .sum()
    }

    /// Laurent coefficients in the affine chart `z = center + radius * u`,
    /// including the chart factor: `f(center + radius u) radius du`.
    ///
    /// Returns coefficients from the most negative index present up to
    /// `max_index`. Fails if another pole lies in the closed unit chart disk.
    pub fn chart_expansion(
        &self,
        center: Complex64,
        radius: f64,
        max_index: i32,
    ) -> Result<Laurent, RatDiffError> {
        let min_index = self
            .terms
            .iter()
            .filter(|t| t.is_at(center))
            .map(|t| -t.order)
            .min()
            .unwrap_or(0)
            .min(0);
        let len = (max_index - min_index + 1).max(0) as usize;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); len];
        let rho = Complex64::new(radius, 0.0);
        for t in &self.terms {
            if t.is_at(center) {
                let k = -t.order;
                if k <= max_index {
                    coeffs[(k - min_index) as usize] += t.coeff * rho.powi(1 - t.order);
                }
                continue;
            }
            let d = t.displacement(center);
            if t.order >= 1 && d.norm() <= radius {
                return Err(RatDiffError::PoleInsideChart {
                    pole: t.pole(),
                    center,
                    radius,
                });
            }
            // (d + rho u)^n with n = -order, expanded by the generalized
            // binomial series.
            let n = -t.order;
            let mut c = t.coeff * rho * d.powi(n);
            let step = rho / d;
            for k in 0..=max_index.max(-1) {
                if k >= 0 {
                    coeffs[(k - min_index) as usize] += c;
                }
                c *= step * f64::from(n - k) / f64::from(k + 1);
                if c == Complex64::new(0.0, 0.0) {
                    break;
                }
            }
        }
        Ok(Laurent { min_index, coeffs })
    }

    /// Pull back through the gluing map `w = g(z)`: the differential
    /// `f(g(z)) g'(z) dz`, again in partial-fraction form.
    ///
    /// `self` lives in the `w` coordinate.
    pub fn pullback(&self, map: &GluingMap) -> Self {
        let q = map.source;
        let qt = map.target;
        let c = map.scale;
        let mut out: Vec<Term> = Vec::with_capacity(self.terms.len() * 2);
        for t in &self.terms {
            let m = t.order;
            if t.is_at(qt) {
                // (w - qt) = c / (z - q)
                // (w - qt)^{-m} dw = -c^{1-m} (z - q)^{m-2} dz
                out.push(Term::new(q, 2 - m, -t.coeff * c.powi(1 - m)));
                continue;
            }
            let a = t.displacement(qt);
            // w - p = a (z - p*) / (z - q) with p* = q - c / a.
            let delta = -c / a; // p* - q
            if m == 1 {
                out.push(Term::anchored(q, delta, 1, t.coeff));
                out.push(Term::new(q, 1, -t.coeff));
            } else if m >= 2 {
                // -c a^{-m} (z - q)^{m-2} (z - p*)^{-m}, expanding
                // (z - q) = (z - p*) + delta.
                let lead = -t.coeff * c * a.powi(-m);
                let n = m - 2;
                let mut binom = 1.0;
                for j in 0..=n {
                    let coeff = lead * binom * delta.powi(n - j);
                    out.push(Term::anchored(q, delta, m - j, coeff));
                    binom = binom * f64::from(n - j) / f64::from(j + 1);
                }
            } else {
                // Polynomial piece (w - p)^n dw with n = -m >= 0:
                // -c a^n (z - p*)^n (z - q)^{-n-2}, expanding
                // (z - p*) = (z - q) - delta.
                let n = -m;
                let lead = -t.coeff * c * a.powi(n);
                let mut binom = 1.0;
                for j in 0..=n {
                    let coeff = lead * binom * (-delta).powi(n - j);
                    out.push(Term::new(q, n + 2 - j, coeff));
                    binom = binom * f64::from(n - j) / f64::from(j + 1);
                }
            }
        }
        Self::from_terms(out)
    }

    /// `∫ f(z) dz` along a polyline, with the logarithm branch tracked
    /// continuously.
    pub fn integrate_along(&self, path: &[Complex64]) -> Result<Complex64, RatDiffError> {
        self.integrate_near(ZERO, path)
    }

    /// `∫ f(z) dz` along the polyline `base + offsets[j]`; see [`Self::eval_near`].
    pub fn integrate_near(
        &self,
        base: Complex64,
        offsets: &[Complex64],
    ) -> Result<Complex64, RatDiffError> {
        let mut total = Complex64::new(0.0, 0.0);
        for pair in offsets.windows(2) {
            total += self.integrate_segment(base, pair[0], pair[1])?;
        }
        Ok(total)
    }

    fn integrate_segment(
        &self,
        base: Complex64,
        a: Complex64,
        b: Complex64,
    ) -> Result<Complex64, RatDiffError> {
        let disp = |t: &Term, z: Complex64| (base - t.anchor) + (z - t.offset);
        let len = (b - a).norm();
        for t in self.terms.iter().filter(|t| t.order >= 1) {
            let p = t.anchor - base + t.offset;
            if distance_to_segment(p, a, b) <= 1e-15 * (1.0 + len) {
                return Err(RatDiffError::PathThroughPole(t.pole()));
            }
        }
        let mut total = Complex64::new(0.0, 0.0);
        // Subdivide until every logarithmic term turns by less than π/2 per
        // piece. A straight segment subtends less than π, so this is a
        // safety margin rather than a correctness requirement.
        let mut stack = vec![(a, b, 0u32)];
        while let Some((z0, z1, depth)) = stack.pop() {
            let too_wide = depth < 40
                && self.terms.iter().any(|t| {
                    t.order == 1 && (disp(t, z1) / disp(t, z0)).arg().abs() > FRAC_PI_2
                });
            if too_wide {
                let mid = (z0 + z1) * 0.5;
                stack.push((mid, z1, depth + 1));
                stack.push((z0, mid, depth + 1));
                continue;
            }
            for t in &self.terms {
                let (d0, d1) = (disp(t, z0), disp(t, z1));
                total += if t.order == 1 {
                    t.coeff * (d1 / d0).ln()
                } else {
                    let m = t.order;
                    -t.coeff * (d1.powi(1 - m) - d0.powi(1 - m)) / f64::from(m - 1)
                };
            }
        }
        Ok(total)
    }

    /// Zero coefficients with magnitude below `rel * scale`; only applied on
    /// explicit request.
    /// `scale * Π (z - zeros_k) / Π (z - p_j)^{n_j} dz` in partial fractions.
    ///
    /// Needs `zeros.len() + 2 <= Σ n_j`, i.e. no pole at infinity.
    pub fn from_factored(
        scale: Complex64,
        zeros: &[Complex64],
        poles: &[(Complex64, u32)],
    ) -> Result<Self, RatDiffError> {
        let pole_order: u32 = poles.iter().map(|p| p.1).sum();
        if zeros.len() as u32 + 2 > pole_order {
            return Err(RatDiffError::PoleAtInfinity {
                zeros: zeros.len(),
                pole_order,
            });
        }
        let mut terms = Vec::new();
        for (i, &(p, n)) in poles.iter().enumerate() {
            let len = n as usize;
            // Taylor series of the cofactor at p, truncated to n terms.
            let mut series = vec![ZERO; len];
            series[0] = scale;
            for &z in zeros {
                series = series_mul(&series, &[p - z, Complex64::new(1.0, 0.0)]);
            }
            for (j, &(pj, nj)) in poles.iter().enumerate() {
                if j == i {
                    continue;
                }
                let x = p - pj;
                let mut b = Vec::with_capacity(len);
                let mut c = x.powi(-(nj as i32));
                for l in 0..len {
                    b.push(c);
                    c *= -(f64::from(nj) + l as f64) / ((l + 1) as f64 * x);
                }
                series = series_mul(&series, &b);
            }
            for (l, &a) in series.iter().enumerate() {
                terms.push(Term::new(p, n as i32 - l as i32, a));
            }
        }
        Ok(Self::from_terms(terms))
    }

    /// Zeros in the finite plane, from the numerator of the partial-fraction
    /// sum, polished by Newton steps on the differential itself.
    pub fn zeros(&self) -> Vec<Complex64> {
        let mut poles: Vec<(Complex64, i32)> = Vec::new();
        for t in self.terms.iter().filter(|t| t.order >= 1) {
            match poles.iter_mut().find(|(p, _)| *p == t.pole()) {
                Some(entry) => entry.1 = entry.1.max(t.order),
                None => poles.push((t.pole(), t.order)),
            }
        }
        let power = |p: Complex64, k: i32| {
            let mut out = vec![Complex64::new(1.0, 0.0)];
            for _ in 0..k {
                out = poly_mul(&out, &[-p, Complex64::new(1.0, 0.0)]);
            }
            out
        };
        let mut numerator: Vec<Complex64> = Vec::new();
        for t in &self.terms {
            let own = poles.iter().find(|(p, _)| *p == t.pole()).map_or(0, |e| e.1);
            let mut piece = vec![t.coeff];
            piece = poly_mul(&piece, &power(t.pole(), own - t.order));
            for &(p, m) in poles.iter().filter(|(p, _)| *p != t.pole()) {
                piece = poly_mul(&piece, &power(p, m));
            }
            if numerator.len() < piece.len() {
                numerator.resize(piece.len(), ZERO);
            }
            for (a, b) in numerator.iter_mut().zip(&piece) {
                *a += b;
            }
        }
        crate::numerics::polynomial_roots(&numerator)
            .into_iter()
            .map(|mut z| {
                for _ in 0..3 {
                    match (self.eval(z), self.eval_derivative(z)) {
                        (Ok(f), Ok(df)) if df != ZERO => {
                            let step = f / df;
                            if !step.is_finite() {
                                break;
                            }
                            z -= step;
                        }
                        _ => break,
                    }
                }
                z
            })
            .collect()
    }

    /// Order of vanishing at `p`: minus the pole order at a pole, otherwise
    /// the index of the first Taylor coefficient above `rel_tol` times the
    /// largest of the first few (in a chart reaching halfway to the nearest
    /// pole). `None` for the zero differential.
    pub fn order_at(&self, p: Complex64, rel_tol: f64) -> Option<i32> {
        if self.is_zero() {
            return None;
        }
        let at_p = self
            .terms
            .iter()
            .filter(|t| t.order >= 1 && t.pole() == p)
            .map(|t| t.order)
            .max();
        if let Some(m) = at_p {
            return Some(-m);
        }
        let reach = self
            .terms
            .iter()
            .filter(|t| t.order >= 1)
            .map(|t| t.displacement(p).norm())
            .fold(f64::INFINITY, f64::min);
        let radius = if reach.is_finite() { 0.5 * reach } else { 1.0 };
        let lau = self.chart_expansion(p, radius, 12).ok()?;
        let big = (0..=12).map(|k| lau.coeff(k).norm()).fold(0.0, f64::max);
        (0..=12).find(|&k| lau.coeff(k).norm() > rel_tol * big)
    }

    pub fn cleaned(&self, rel: f64) -> Self {
        let cut = rel * self.scale();
        Self::from_terms(self.terms.iter().copied().filter(|t| t.coeff.norm() >= cut))
    }
}

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Product of power series, truncated to the length of `a`.
fn series_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = poly_mul(a, b);
    out.truncate(a.len());
    out
}

fn distance_to_segment(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a) * ab.conj()).re / len2;
    let t = t.clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

impl Add for &RationalDifferential {
    type Output = RationalDifferential;
    fn add(self, rhs: Self) -> RationalDifferential {
        RationalDifferential::from_terms(self.terms.iter().chain(rhs.terms.iter()).copied())
    }
}

impl Add for RationalDifferential {
    type Output = RationalDifferential;
    fn add(self, rhs: Self) -> RationalDifferential {
        &self + &rhs
    }
}

impl Neg for &RationalDifferential {
    type Output = RationalDifferential;
    fn neg(self) -> RationalDifferential {
        RationalDifferential {
            terms: self
                .terms
                .iter()
                .map(|t| t.with_coeff(-t.coeff))
                .collect(),
        }
    }
}

impl Neg for RationalDifferential {
    type Output = RationalDifferential;
    fn neg(self) -> RationalDifferential {
        -&self
    }
}

impl Sub for &RationalDifferential {
    type Output = RationalDifferential;
    fn sub(self, rhs: Self) -> RationalDifferential {
        self + &(-rhs)
    }
}

impl Sub for RationalDifferential {
    type Output = RationalDifferential;
    fn sub(self, rhs: Self) -> RationalDifferential {
        &self - &rhs
    }
}

impl Mul<Complex64> for &RationalDifferential {
    type Output = RationalDifferential;
    fn mul(self, c: Complex64) -> RationalDifferential {
        self.scaled(c)
    }
}

impl Mul<Complex64> for RationalDifferential {
    type Output = RationalDifferential;
    fn mul(self, c: Complex64) -> RationalDifferential {
        self.scaled(c)
    }
}

impl std::iter::Sum for RationalDifferential {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        Self::from_terms(iter.flat_map(|d| d.terms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn omega_pm2() -> RationalDifferential {
        RationalDifferential::third_kind(c(2.0, 0.0), c(-2.0, 0.0))
    }

    #[test]
    fn residue_reads_simple_pole_coefficient() {
        let w = omega_pm2();
        assert_eq!(w.residue(c(2.0, 0.0)), c(1.0, 0.0));
        assert_eq!(w.residue(c(0.0, 0.0)), c(0.0, 0.0));
        assert_eq!(w.residue_sum(), c(0.0, 0.0));
    }

    #[test]
    fn chart_expansion_of_pure_pole() {
        let w = RationalDifferential::monomial(c(1.0, 1.0), 1, c(1.0, 0.0));
        let l = w.chart_expansion(c(1.0, 1.0), 1.0, 5).unwrap();
        assert_eq!(l.residue(), c(1.0, 0.0));
        for k in 0..=5 {
            assert_eq!(l.coeff(k), c(0.0, 0.0));
        }
    }

    #[test]
    fn chart_expansion_constant_term() {
        let l = omega_pm2().chart_expansion(c(2.0, 0.0), 1.0, 3).unwrap();
        assert!((l.constant() - c(-0.25, 0.0)).norm() < 1e-16);
        // -1/(z+2) at z = 2 + u is -1/4 + u/16 - u^2/64 + ...
        assert!((l.coeff(1) - c(1.0 / 16.0, 0.0)).norm() < 1e-16);
        assert!((l.coeff(2) - c(-1.0 / 64.0, 0.0)).norm() < 1e-16);
    }

    #[test]
    fn chart_expansion_rejects_pole_in_chart() {
        let w = RationalDifferential::third_kind(c(0.5, 0.0), c(-0.5, 0.0));
        assert!(w.chart_expansion(c(0.5, 0.0), 1.0, 2).is_err());
    }

    #[test]
    fn chart_expansion_includes_chart_factor() {
        // dz/(z-3)^2 at center 0 with radius 0.5: 0.5 * (0.5 u - 3)^{-2}.
        let w = RationalDifferential::monomial(c(3.0, 0.0), 2, c(1.0, 0.0));
        let l = w.chart_expansion(c(0.0, 0.0), 0.5, 1).unwrap();
        assert!((l.constant() - c(0.5 / 9.0, 0.0)).norm() < 1e-16);
        assert!((l.coeff(1) - c(0.25 * 2.0 / 27.0, 0.0)).norm() < 1e-16);
    }

    #[test]
    fn linear_structure() {
        let w = omega_pm2();
        assert!((&w - &w).is_zero());
        assert!((&w + &(&w * c(-1.0, 0.0))).is_zero());
        let t = c(0.3, -2.0);
        assert_eq!((&w * t).residue(c(2.0, 0.0)), t);
    }

    #[test]
    fn evaluate_double_pole() {
        let w = RationalDifferential::monomial(c(1.0, 0.0), 2, c(1.0, 0.0));
        assert_eq!(w.eval(c(0.0, 0.0)).unwrap(), c(1.0, 0.0));
        assert!(w.eval(c(1.0, 0.0)).is_err());
    }

    fn glue() -> GluingMap {
        GluingMap {
            source: c(2.0, 0.0),
            target: c(-2.0, 0.0),
            scale: c(1e-3, 0.0),
        }
    }

    #[test]
    fn pullback_of_log_pole_flips_sign() {
        let r = c(0.7, 0.2);
        let g = glue();
        let w = RationalDifferential::monomial(g.target, 1, r);
        let pb = w.pullback(&g);
        assert_eq!(pb, RationalDifferential::monomial(g.source, 1, -r));
    }

    #[test]
    fn pullback_of_double_pole_in_chart() {
        // With unit radii the chart coordinate is z - q, and
        // dw_{-e}/w_{-e}^2 pulls back to -s dz_e/z_e^2.
        let g = glue();
        let w = RationalDifferential::monomial(g.target, 2, c(1.0, 0.0));
        let pb = w.pullback(&g);
        assert_eq!(pb.terms().len(), 1);
        let t = pb.terms()[0];
        assert_eq!(t.pole(), g.source);
        assert_eq!(t.order, 0);
        assert!((t.coeff - c(-1.0 / 1e-3, 0.0)).norm() < 1e-9);
        // The inverse direction: dz_e/z_e^0 = dz pulls back to -s dz_{-e}/z_{-e}^2.
        let back = RationalDifferential::monomial(g.source, 0, c(1.0, 0.0)).pullback(&g.inverse());
        let t = back.terms()[0];
        assert_eq!((t.pole(), t.order), (g.target, 2));
        assert!((t.coeff + g.scale).norm() < 1e-18);
    }

    #[test]
    fn pullback_matches_pointwise_substitution() {
        let g = GluingMap {
            source: c(1.0, 0.5),
            target: c(-1.5, 0.2),
            scale: c(2e-3, 1e-3),
        };
        let w = RationalDifferential::from_terms([
            Term::new(c(3.0, 1.0), 1, c(1.0, -0.5)),
            Term::new(c(-4.0, 0.0), 3, c(0.2, 0.1)),
            Term::new(c(0.0, 2.0), 2, c(-0.3, 0.0)),
            Term::new(c(0.0, 0.0), 0, c(0.1, 0.0)),
            Term::new(c(0.5, -1.0), -2, c(0.05, 0.02)),
        ]);
        let pb = w.pullback(&g);
        for &z in &[c(0.3, 0.1), c(1.2, 0.9), c(5.0, -3.0)] {
            let direct = w.eval(g.apply(z)).unwrap() * g.derivative(z);
            let exact = pb.eval(z).unwrap();
            assert!((direct - exact).norm() < 1e-11 * (1.0 + direct.norm()), "{direct} vs {exact}");
        }
    }

    #[test]
    fn pullback_is_an_involution() {
        let g = glue();
        let w = RationalDifferential::from_terms([
            Term::new(c(5.0, 1.0), 1, c(1.0, 0.0)),
            Term::new(c(-5.0, 1.0), 1, c(-1.0, 0.0)),
            Term::new(c(0.0, 4.0), 2, c(0.5, 0.5)),
        ]);
        let back = w.pullback(&g.inverse()).pullback(&g);
        for &z in &[c(0.3, 0.1), c(7.0, 2.0)] {
            let a = w.eval(z).unwrap();
            let b = back.eval(z).unwrap();
            assert!((a - b).norm() < 1e-12 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn integrate_log_along_radius() {
        let w = RationalDifferential::monomial(c(0.0, 0.0), 1, c(1.0, 0.0));
        let x: f64 = 0.37;
        let v = w.integrate_along(&[c(1.0, 0.0), c(x, 0.0)]).unwrap();
        assert!((v - c(x.ln(), 0.0)).norm() < 1e-15);
    }

    #[test]
    fn closed_loop_gives_enclosed_residues() {
        let w = RationalDifferential::from_terms([
            Term::new(c(0.0, 0.0), 1, c(1.0, 0.0)),
            Term::new(c(3.0, 0.0), 1, c(-1.0, 0.0)),
            Term::new(c(0.1, 0.2), 2, c(4.0, 0.0)),
        ]);
        let square = [c(1.0, 1.0), c(-1.0, 1.0), c(-1.0, -1.0), c(1.0, -1.0), c(1.0, 1.0)];
        let v = w.integrate_along(&square).unwrap();
        assert!((v - c(0.0, 2.0 * PI)).norm() < 1e-13);
        let away = [c(5.0, 1.0), c(4.0, 1.0), c(4.0, 2.0), c(5.0, 1.0)];
        assert!(w.integrate_along(&away).unwrap().norm() < 1e-13);
    }

    #[test]
    fn path_through_pole_is_an_error() {
        let w = omega_pm2();
        assert!(w.integrate_along(&[c(0.0, 0.0), c(4.0, 0.0)]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let w = omega_pm2();
        let s = serde_json::to_string(&w).unwrap();
        assert!(s.contains("\"pole\":[2.0,0.0]"));
        let back: RationalDifferential = serde_json::from_str(&s).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn factored_form_round_trips() {
        let (a, b) = (c(1.5, 0.0), c(-1.5, 0.2));
        let zeros = [c(0.1, 0.7), c(-0.3, -0.5)];
        let f = RationalDifferential::from_factored(c(0.7, 0.1), &zeros, &[(a, 2), (b, 2)]).unwrap();
        assert!(f.is_holomorphic_at_infinity(1e-12));
        for z in [c(0.4, 1.1), c(-2.0, 0.3)] {
            let direct = c(0.7, 0.1) * (z - zeros[0]) * (z - zeros[1])
                / ((z - a) * (z - a) * (z - b) * (z - b));
            assert!((f.eval(z).unwrap() - direct).norm() < 1e-13);
        }
        let mut found = f.zeros();
        found.sort_by(|x, y| x.re.total_cmp(&y.re));
        assert!(crate::numerics::max_abs_diff(&found, &[zeros[1], zeros[0]]) < 1e-13);
        assert_eq!(f.order_at(zeros[0], 1e-9), Some(1));
        assert_eq!(f.order_at(a, 1e-9), Some(-2));
        assert_eq!(f.order_at(c(3.0, 3.0), 1e-9), Some(0));
        assert!(RationalDifferential::from_factored(c(1.0, 0.0), &zeros, &[(a, 3)]).is_err());
    }
}

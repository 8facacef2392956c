//! Shifted, possibly deformed (r,s) spectral curves: x = z^r, y = z^{s−r}.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::exact::{gcd, rint, CycContext, CycNum, Rat};
use crate::series::LaurentForm;

pub const DEFAULT_MAX_INDEX: u32 = 24;

/// Raw curve input. `f01` entries override the default ω_{0,1} = r z^{s−1}dz.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveSpec {
    pub r: u32,
    pub s: u32,
    pub f01: BTreeMap<u32, Rat>,
    pub f12: BTreeMap<u32, Rat>,
    /// Stored with k ≤ l.
    pub f02: BTreeMap<(u32, u32), Rat>,
    /// S_{i,ℓ}, keyed by (i, ℓ).
    pub shifts: BTreeMap<(u32, u32), Rat>,
    pub max_index: u32,
}

impl CurveSpec {
    pub fn new(r: u32, s: u32) -> Self {
        CurveSpec {
            r,
            s,
            f01: BTreeMap::new(),
            f12: BTreeMap::new(),
            f02: BTreeMap::new(),
            shifts: BTreeMap::new(),
            max_index: DEFAULT_MAX_INDEX,
        }
    }

    pub fn shift(mut self, i: u32, l: u32, v: Rat) -> Self {
        self.shifts.insert((i, l), v);
        self
    }

    pub fn with_f01(mut self, k: u32, v: Rat) -> Self {
        self.f01.insert(k, v);
        self
    }

    pub fn with_f12(mut self, k: u32, v: Rat) -> Self {
        self.f12.insert(k, v);
        self
    }

    pub fn with_f02(mut self, k: u32, l: u32, v: Rat) -> Self {
        self.f02.insert((k.min(l), k.max(l)), v);
        self
    }

    pub fn is_undeformed(&self) -> bool {
        let f01_ok = self
            .f01
            .iter()
            .all(|(k, v)| (*k == self.s && *v == rint(self.r as i64)) || v.is_zero());
        f01_ok && self.f12.values().all(|v| v.is_zero()) && self.f02.values().all(|v| v.is_zero())
    }

    /// Checks r ≡ ±1 mod s and the structural constraints on deformations.
    fn check_shape(&self) -> Result<()> {
        let (r, s) = (self.r, self.s);
        if r < 2 {
            return Err(Error::InvalidParameter(format!("r must be ≥ 2, got {r}")));
        }
        if s < 1 || s > r + 1 {
            return Err(Error::InvalidParameter(format!(
                "s must lie in [1, r+1], got {s}"
            )));
        }
        let lo = s.min(r);
        for (&k, v) in &self.f01 {
            if k < lo && !v.is_zero() {
                return Err(Error::InvalidParameter(format!(
                    "F01[{k}] below min(s,r) = {lo}"
                )));
            }
        }
        if self.f01.get(&s).is_some_and(|v| v.is_zero()) {
            return Err(Error::InvalidParameter(format!("F01[{s}] must be nonzero")));
        }
        for &k in self.f12.keys() {
            if k < 1 {
                return Err(Error::InvalidParameter("F12 keys must be ≥ 1".into()));
            }
        }
        for &(k, l) in self.f02.keys() {
            if k < 1 || k > l {
                return Err(Error::InvalidParameter(format!(
                    "F02 key ({k},{l}) must satisfy 1 ≤ k ≤ l"
                )));
            }
        }
        let too_big = self
            .f01
            .keys()
            .chain(self.f12.keys())
            .copied()
            .chain(self.f02.keys().map(|&(_, l)| l))
            .find(|&k| k > self.max_index);
        if let Some(k) = too_big {
            return Err(Error::InvalidParameter(format!(
                "deformation index {k} exceeds max index {}",
                self.max_index
            )));
        }
        for &(i, l) in self.shifts.keys() {
            if i < 1 || i > r || l < 1 {
                return Err(Error::InvalidParameter(format!(
                    "shift S_{{{i},{l}}} needs 1 ≤ i ≤ r, ℓ ≥ 1"
                )));
            }
        }
        Ok(())
    }

    fn check_admissible(&self) -> Result<()> {
        let (r, s) = (self.r, self.s);
        let m = r % s;
        if s > 1 && m != 1 && m != s - 1 {
            return Err(Error::Inadmissible { r, s });
        }
        debug_assert_eq!(gcd(r, s), 1);
        Ok(())
    }

    /// s-consistency of the shift table; zero entries are ignored.
    fn check_consistent(&self) -> Result<()> {
        let (r, s) = (self.r, self.s);
        for (&(i, l), v) in &self.shifts {
            if v.is_zero() || s == 1 {
                continue;
            }
            if r % s == 1 {
                if i != 1 {
                    return Err(Error::InconsistentShift {
                        i,
                        l,
                        clause: format!("r ≡ 1 mod s with s = {s} ≥ 2 allows only S_{{1,ℓ}}"),
                    });
                }
            } else {
                return Err(Error::InconsistentShift {
                    i,
                    l,
                    clause: format!("r ≡ −1 mod s with s = {s} ≥ 3 allows no shifts"),
                });
            }
        }
        Ok(())
    }

    /// Admissibility plus s-consistency. The result is the single source of truth for the engines.
    pub fn validate(&self) -> Result<Arc<Curve>> {
        self.check_shape()?;
        self.check_admissible()?;
        self.check_consistent()?;
        Curve::build(self.clone(), false)
    }

    /// Builds a curve skipping admissibility and s-consistency, so that
    /// their failure modes can be observed downstream.
    #[cfg(any(test, feature = "fixtures"))]
    pub fn build_unchecked(&self) -> Result<Arc<Curve>> {
        self.check_shape()?;
        if gcd(self.r, self.s) != 1 {
            return Err(Error::Inadmissible {
                r: self.r,
                s: self.s,
            });
        }
        Curve::build(self.clone(), true)
    }
}

/// A validated curve with its cyclotomic context.
#[derive(Debug)]
pub struct Curve {
    spec: CurveSpec,
    ctx: Arc<CycContext>,
    /// Full F01 including the default leading term.
    f01: BTreeMap<u32, Rat>,
    unchecked: bool,
}

impl PartialEq for Curve {
    fn eq(&self, o: &Self) -> bool {
        self.spec == o.spec
    }
}

impl Curve {
    fn build(spec: CurveSpec, unchecked: bool) -> Result<Arc<Curve>> {
        let ctx = CycContext::new(spec.r)?;
        let mut f01 = BTreeMap::new();
        f01.insert(spec.s, rint(spec.r as i64));
        for (k, v) in &spec.f01 {
            f01.insert(*k, v.clone());
        }
        f01.retain(|_, v| !v.is_zero());
        let mut spec = spec;
        spec.shifts.retain(|_, v| !v.is_zero());
        spec.f02.retain(|_, v| !v.is_zero());
        spec.f12.retain(|_, v| !v.is_zero());
        Ok(Arc::new(Curve {
            spec,
            ctx,
            f01,
            unchecked,
        }))
    }

    pub fn spec(&self) -> &CurveSpec {
        &self.spec
    }

    pub fn ctx(&self) -> &Arc<CycContext> {
        &self.ctx
    }

    pub fn r(&self) -> u32 {
        self.spec.r
    }

    pub fn s(&self) -> u32 {
        self.spec.s
    }

    /// True for s = r+1, which the quantum-curve and WKB modules refuse.
    pub fn is_r_airy(&self) -> bool {
        self.spec.s == self.spec.r + 1
    }

    pub fn is_unchecked(&self) -> bool {
        self.unchecked
    }

    pub fn f01(&self) -> &BTreeMap<u32, Rat> {
        &self.f01
    }

    pub fn shift_value(&self, i: u32, l: u32) -> Rat {
        self.spec
            .shifts
            .get(&(i, l))
            .cloned()
            .unwrap_or_else(Rat::zero)
    }

    pub fn shifts(&self) -> &BTreeMap<(u32, u32), Rat> {
        &self.spec.shifts
    }

    pub fn f02(&self, k: u32, l: u32) -> Rat {
        self.spec
            .f02
            .get(&(k.min(l), k.max(l)))
            .cloned()
            .unwrap_or_else(Rat::zero)
    }

    /// Pairs (l, F02[k,l]) with nonzero value.
    pub fn f02_row(&self, k: u32) -> Vec<(u32, Rat)> {
        let mut v: Vec<(u32, Rat)> = self
            .spec
            .f02
            .iter()
            .filter_map(|(&(a, b), q)| {
                if a == k {
                    Some((b, q.clone()))
                } else if b == k {
                    Some((a, q.clone()))
                } else {
                    None
                }
            })
            .collect();
        v.sort_by_key(|p| p.0);
        v.dedup_by_key(|p| p.0);
        v
    }

    fn rat_form(&self, terms: impl IntoIterator<Item = (i64, Rat)>, deg: i32) -> LaurentForm {
        LaurentForm::from_terms(
            &self.ctx,
            deg,
            terms
                .into_iter()
                .map(|(e, q)| (e, CycNum::from_rat(&self.ctx, q))),
        )
    }

    /// ω_{0,1}(z) = Σ F01[k] z^{k−1}dz.
    pub fn omega01(&self) -> LaurentForm {
        self.rat_form(self.f01.iter().map(|(k, v)| (*k as i64 - 1, v.clone())), 1)
    }

    /// ω_{½,1}(z) = Σ F12[k] z^{k−1}dz + Σ_i (−1)^{i−1} S_{i,1} dz/z^{s(i−1)+1}.
    pub fn omega_half(&self) -> LaurentForm {
        let s = self.spec.s as i64;
        let mut f = self.rat_form(
            self.spec
                .f12
                .iter()
                .map(|(k, v)| (*k as i64 - 1, v.clone())),
            1,
        );
        for i in 1..=self.spec.r {
            let v = self.shift_value(i, 1);
            if !v.is_zero() {
                let v = if i % 2 == 1 { v } else { -v };
                f.add_term(-s * (i as i64 - 1) - 1, &CycNum::from_rat(&self.ctx, v));
            }
        }
        f
    }

    /// ξ_{−k}(z) = z^{−k−1}dz + (1/k) Σ_l F02[k,l] z^{l−1}dz.
    pub fn xi_minus(&self, k: u32) -> Result<LaurentForm> {
        if k < 1 {
            return Err(Error::InvalidParameter("ξ_{-k} needs k ≥ 1".into()));
        }
        let kk = rint(k as i64);
        let mut terms = vec![(-(k as i64) - 1, Rat::one())];
        for (l, v) in self.f02_row(k) {
            terms.push((l as i64 - 1, v / &kk));
        }
        Ok(self.rat_form(terms, 1))
    }

    /// ξ_k(z) = z^{k−1}dz.
    pub fn xi_plus(&self, k: u32) -> LaurentForm {
        self.rat_form([(k as i64 - 1, Rat::one())], 1)
    }

    /// ω_{0,2}(θ^a z, θ^b z) for a ≠ b, as a 2-form in z.
    pub fn omega02_sheets(&self, a: i64, b: i64) -> LaurentForm {
        let ta = CycNum::theta(&self.ctx, a);
        let tb = CycNum::theta(&self.ctx, b);
        let d = &ta - &tb;
        let lead = &(&ta * &tb) * &(&d * &d).inv().expect("distinct sheets");
        let mut f = LaurentForm::monomial(lead, -2, 2);
        for (&(k, l), v) in &self.spec.f02 {
            let pairs: &[(u32, u32)] = if k == l { &[(k, l)] } else { &[(k, l), (l, k)] };
            for &(p, q) in pairs {
                let c = &CycNum::theta(&self.ctx, a * p as i64)
                    * &CycNum::theta(&self.ctx, b * q as i64);
                f.add_term(p as i64 + q as i64 - 2, &c.scale(v));
            }
        }
        f
    }

    /// ω_{0,1}(θ^a z) − ω_{0,1}(z).
    pub fn kernel_factor(&self, a: i64) -> LaurentForm {
        let w = self.omega01();
        w.sheet_substitute(a).sub(&w)
    }

    /// ∏_{a∈Z} (ω_{0,1}(θ^a z) − ω_{0,1}(z)).
    pub fn kernel_denominator(&self, sheets: &[i64]) -> LaurentForm {
        let mut d = LaurentForm::one(&self.ctx);
        for &a in sheets {
            d = d.mul(&self.kernel_factor(a));
        }
        d
    }

    /// The kernel denominator's inverse, exact through exponent `cap`.
    pub fn recursion_kernel(&self, sheets: &[i64], cap: i64) -> Result<LaurentForm> {
        if sheets.is_empty() {
            return Err(Error::InvalidParameter(
                "recursion kernel needs a nonempty sheet set".into(),
            ));
        }
        let d = self.kernel_denominator(sheets);
        let m = d
            .valuation()
            .ok_or_else(|| Error::NotInvertible("kernel denominator".into()))?;
        // inverse has valuation −m; keep up to cap
        d.invert_series(cap + m)
    }

    /// Lowest exponent of the kernel inverse for |Z| = n sheets.
    pub fn kernel_valuation(&self, n: usize) -> i64 {
        // for s = r+1 the k = r terms of ω_{0,1} cancel in the differences
        -(self.spec.s as i64 - 1) * n as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;

    fn spec(r: u32, s: u32) -> CurveSpec {
        CurveSpec::new(r, s)
    }

    #[test]
    fn admissibility() {
        assert_eq!(
            spec(7, 5).validate().unwrap_err(),
            Error::Inadmissible { r: 7, s: 5 }
        );
        for (r, s) in [
            (2, 1),
            (3, 1),
            (2, 3),
            (3, 2),
            (4, 3),
            (3, 4),
            (5, 2),
            (5, 3),
            (7, 4),
        ] {
            assert!(spec(r, s).validate().is_ok(), "({r},{s})");
        }
        assert!(spec(4, 2).validate().is_err());
        assert!(spec(3, 5).validate().is_err());
        assert!(spec(1, 1).validate().is_err());
    }

    #[test]
    fn consistency_clauses() {
        assert!(spec(4, 3)
            .shift(1, 1, rint(2))
            .shift(1, 4, rat(1, 3))
            .validate()
            .is_ok());
        assert!(matches!(
            spec(4, 3).shift(2, 2, rint(1)).validate(),
            Err(Error::InconsistentShift { i: 2, l: 2, .. })
        ));
        assert!(matches!(
            spec(5, 3).shift(1, 1, rint(1)).validate(),
            Err(Error::InconsistentShift { i: 1, l: 1, .. })
        ));
        assert!(spec(3, 1)
            .shift(2, 2, rint(1))
            .shift(3, 1, rint(1))
            .validate()
            .is_ok());
        assert!(spec(2, 3).shift(1, 2, rint(1)).validate().is_err());
        // zero-valued shifts are not violations
        assert!(spec(5, 3).shift(1, 1, rint(0)).validate().is_ok());
    }

    #[test]
    fn validation_is_idempotent() {
        let s = spec(3, 2).shift(1, 1, rint(1)).with_f02(1, 2, rat(1, 2));
        let c = s.validate().unwrap();
        assert_eq!(c.spec().validate().unwrap().spec(), c.spec());
    }

    #[test]
    fn deformation_limits() {
        assert!(spec(2, 1).with_f01(30, rint(1)).validate().is_err());
        assert!(spec(3, 2).with_f01(1, rint(1)).validate().is_err());
        assert!(spec(3, 2).with_f01(2, rint(0)).validate().is_err());
        assert!(spec(3, 2).with_f01(3, rint(5)).validate().is_ok());
        assert!(spec(2, 3).with_f01(2, rint(5)).validate().is_ok());
    }

    #[test]
    fn omega_half_structure() {
        let c = spec(3, 1)
            .shift(1, 1, rint(2))
            .shift(2, 1, rint(5))
            .shift(3, 1, rint(7))
            .with_f12(2, rat(1, 3));
        let c = c.validate().unwrap();
        let f = c.omega_half();
        let ctx = c.ctx();
        let expect = LaurentForm::from_terms(
            ctx,
            1,
            [(-1, rint(2)), (-2, rint(-5)), (-3, rint(7)), (1, rat(1, 3))]
                .into_iter()
                .map(|(e, q)| (e, CycNum::from_rat(ctx, q))),
        );
        assert_eq!(f, expect);
    }

    #[test]
    fn xi_examples() {
        let c = spec(2, 3).validate().unwrap();
        let x = c.xi_minus(2).unwrap();
        assert_eq!(x.terms().map(|(e, _)| e).collect::<Vec<_>>(), vec![-3]);
        let d = spec(2, 3).with_f02(1, 1, rat(3, 4)).validate().unwrap();
        let x = d.xi_minus(1).unwrap();
        assert_eq!(x.coeff(-2).rational_of().unwrap(), rint(1));
        assert_eq!(x.coeff(0).rational_of().unwrap(), rat(3, 4));
        assert!(c.xi_minus(0).is_err());
    }

    /// Oracle: Res_{w=0} ∫_0^w ω_{0,2}(·,z) dw/w^{k+1}, from the raw bidifferential.
    fn xi_oracle(c: &Curve, k: u32) -> BTreeMap<i64, Rat> {
        let mut out = BTreeMap::new();
        // dw dz/(w−z)² = Σ_{m≥0} (m+1) w^m z^{−m−2} dw dz; the primitive in w from 0
        // has coefficient z^{−m−2} at w^{m+1}
        out.insert(-(k as i64) - 1, Rat::one());
        for l in 1..=c.spec().max_index {
            // F02[p,l] w^{p−1} z^{l−1}: primitive F02[p,l] w^p/p z^{l−1}
            let v = c.f02(k, l) / rint(k as i64);
            if !v.is_zero() {
                *out.entry(l as i64 - 1).or_insert_with(Rat::zero) += v;
            }
        }
        out
    }

    #[test]
    fn xi_matches_oracle() {
        let c = spec(3, 2)
            .with_f02(1, 1, rat(1, 2))
            .with_f02(1, 3, rint(-2))
            .with_f02(2, 5, rat(7, 3))
            .validate()
            .unwrap();
        for k in 1..=20 {
            assert_eq!(
                c.xi_minus(k).unwrap().rational_terms().unwrap(),
                xi_oracle(&c, k),
                "k={k}"
            );
        }
    }

    #[test]
    fn kernel_examples() {
        let c = spec(2, 3).validate().unwrap();
        let d = c.kernel_factor(1);
        assert_eq!(d.terms().count(), 1);
        assert_eq!(d.coeff(2).rational_of().unwrap(), rint(-4));
        let k = c.recursion_kernel(&[1], 5).unwrap();
        assert_eq!(k.coeff(-2).rational_of().unwrap(), rat(-1, 4));
        assert_eq!(k.len(), 1);
        for (r, s) in [(3, 1), (5, 2), (4, 3), (5, 3)] {
            let c = spec(r, s).validate().unwrap();
            for a in 1..r as i64 {
                let f = c.kernel_factor(a);
                assert_eq!(f.valuation(), Some(s as i64 - 1));
                assert!(!f.coeff(s as i64 - 1).is_zero());
            }
        }
        // deformed: geometric correction
        let c = spec(2, 1).with_f01(2, rint(3)).validate().unwrap();
        let k = c.recursion_kernel(&[1], 3).unwrap();
        let d = c.kernel_denominator(&[1]);
        let p = d.mul(&k).truncate(3);
        assert_eq!(p, LaurentForm::one(c.ctx()));
        assert!(c.recursion_kernel(&[], 3).is_err());
    }

    #[test]
    fn r_airy_leading_term() {
        let c = spec(3, 4).with_f01(3, rint(2)).validate().unwrap();
        assert!(c.is_r_airy());
        for a in 1..3 {
            let f = c.kernel_factor(a);
            assert_eq!(f.valuation(), Some(3));
        }
    }
}

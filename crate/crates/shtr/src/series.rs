//! Laurent forms in the local coordinate z, ℏ-graded series, and the correlator table.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_traits::Zero;

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::exact::{fmt_rat, rint, CycContext, CycNum, Rat};

/// Σ c_m z^m (dz)^deg with finitely many nonzero c_m.
#[derive(Clone, Debug, PartialEq)]
pub struct LaurentForm {
    ctx: Arc<CycContext>,
    deg: i32,
    c: BTreeMap<i64, CycNum>,
}

impl LaurentForm {
    pub fn zero(ctx: &Arc<CycContext>, deg: i32) -> Self {
        LaurentForm {
            ctx: ctx.clone(),
            deg,
            c: BTreeMap::new(),
        }
    }

    pub fn one(ctx: &Arc<CycContext>) -> Self {
        Self::monomial(CycNum::one(ctx), 0, 0)
    }

    pub fn monomial(coeff: CycNum, exp: i64, deg: i32) -> Self {
        let mut f = Self::zero(coeff.ctx(), deg);
        if !coeff.is_zero() {
            f.c.insert(exp, coeff);
        }
        f
    }

    pub fn rat_monomial(ctx: &Arc<CycContext>, q: Rat, exp: i64, deg: i32) -> Self {
        Self::monomial(CycNum::from_rat(ctx, q), exp, deg)
    }

    pub fn from_terms(
        ctx: &Arc<CycContext>,
        deg: i32,
        terms: impl IntoIterator<Item = (i64, CycNum)>,
    ) -> Self {
        let mut f = Self::zero(ctx, deg);
        for (e, c) in terms {
            f.add_term(e, &c);
        }
        f
    }

    pub fn ctx(&self) -> &Arc<CycContext> {
        &self.ctx
    }

    pub fn deg(&self) -> i32 {
        self.deg
    }

    pub fn with_deg(mut self, deg: i32) -> Self {
        self.deg = deg;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.c.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (i64, &CycNum)> {
        self.c.iter().map(|(e, c)| (*e, c))
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn coeff(&self, e: i64) -> CycNum {
        self.c
            .get(&e)
            .cloned()
            .unwrap_or_else(|| CycNum::zero(&self.ctx))
    }

    /// Lowest exponent present.
    pub fn valuation(&self) -> Option<i64> {
        self.c.keys().next().copied()
    }

    pub fn max_exp(&self) -> Option<i64> {
        self.c.keys().next_back().copied()
    }

    pub fn add_term(&mut self, e: i64, v: &CycNum) {
        if v.is_zero() {
            return;
        }
        match self.c.get_mut(&e) {
            Some(x) => {
                *x += v;
                if x.is_zero() {
                    self.c.remove(&e);
                }
            }
            None => {
                self.c.insert(e, v.clone());
            }
        }
    }

    fn same_deg(&self, o: &Self) {
        assert_eq!(self.deg, o.deg, "form degree mismatch in Laurent addition");
    }

    pub fn add_assign_ref(&mut self, o: &Self) {
        self.same_deg(o);
        for (e, v) in &o.c {
            self.add_term(*e, v);
        }
    }

    pub fn sub_assign_ref(&mut self, o: &Self) {
        self.same_deg(o);
        for (e, v) in &o.c {
            self.add_term(*e, &-v);
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut f = self.clone();
        f.add_assign_ref(o);
        f
    }

    pub fn sub(&self, o: &Self) -> Self {
        let mut f = self.clone();
        f.sub_assign_ref(o);
        f
    }

    pub fn neg(&self) -> Self {
        LaurentForm {
            ctx: self.ctx.clone(),
            deg: self.deg,
            c: self.c.iter().map(|(e, v)| (*e, -v)).collect(),
        }
    }

    pub fn scale(&self, k: &CycNum) -> Self {
        if k.is_zero() {
            return Self::zero(&self.ctx, self.deg);
        }
        let c = self
            .c
            .iter()
            .map(|(e, v)| (*e, v * k))
            .filter(|(_, v)| !v.is_zero())
            .collect();
        LaurentForm {
            ctx: self.ctx.clone(),
            deg: self.deg,
            c,
        }
    }

    pub fn scale_rat(&self, q: &Rat) -> Self {
        if q.is_zero() {
            return Self::zero(&self.ctx, self.deg);
        }
        let c = self.c.iter().map(|(e, v)| (*e, v.scale(q))).collect();
        LaurentForm {
            ctx: self.ctx.clone(),
            deg: self.deg,
            c,
        }
    }

    /// Multiplication by z^e.
    pub fn shift(&self, e: i64) -> Self {
        LaurentForm {
            ctx: self.ctx.clone(),
            deg: self.deg,
            c: self.c.iter().map(|(k, v)| (k + e, v.clone())).collect(),
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        self.mul_capped(o, i64::MAX)
    }

    /// Product keeping only exponents ≤ cap.
    pub fn mul_capped(&self, o: &Self, cap: i64) -> Self {
        let mut out = Self::zero(&self.ctx, self.deg + o.deg);
        let Some(ov) = o.valuation() else { return out };
        for (e1, v1) in &self.c {
            if e1.saturating_add(ov) > cap {
                break;
            }
            for (e2, v2) in &o.c {
                let e = e1 + e2;
                if e > cap {
                    break;
                }
                out.add_term(e, &(v1 * v2));
            }
        }
        out
    }

    pub fn truncate(&self, cap: i64) -> Self {
        LaurentForm {
            ctx: self.ctx.clone(),
            deg: self.deg,
            c: self.c.range(..=cap).map(|(e, v)| (*e, v.clone())).collect(),
        }
    }

    pub fn pow_capped(&self, n: u32, cap: i64) -> Self {
        let mut acc = Self::one(&self.ctx);
        for _ in 0..n {
            acc = acc.mul_capped(self, cap);
        }
        acc
    }

    /// Coefficient of z^{-1}dz.
    pub fn residue_at_zero(&self) -> Result<CycNum> {
        if self.deg != 1 {
            return Err(Error::DegreeMismatch {
                expected: 1,
                found: self.deg,
            });
        }
        Ok(self.coeff(-1))
    }

    /// z ↦ θ^a z, including the Jacobian θ^{a·deg} of (dz)^deg.
    pub fn sheet_substitute(&self, a: i64) -> Self {
        let r = self.ctx.r() as i64;
        let c = self
            .c
            .iter()
            .map(|(e, v)| {
                let p = (a * (e + self.deg as i64)).rem_euclid(r);
                (
                    *e,
                    if p == 0 {
                        v.clone()
                    } else {
                        v * &CycNum::theta(&self.ctx, p)
                    },
                )
            })
            .collect();
        LaurentForm {
            ctx: self.ctx.clone(),
            deg: self.deg,
            c,
        }
    }

    /// g with f·g = 1 + O(z^{order+1}), where f is normalized by its leading term.
    /// Concretely g keeps exponents up to −val(f) + order.
    pub fn invert_series(&self, order: i64) -> Result<Self> {
        let Some(m) = self.valuation() else {
            return Err(Error::NotInvertible("zero Laurent series".into()));
        };
        let lead_inv = self.c[&m].inv()?;
        let out_deg = -self.deg;
        if order < 0 {
            return Ok(Self::zero(&self.ctx, out_deg));
        }
        // f = c z^m (1 + h), h has positive exponents
        let h = self.shift(-m).scale(&lead_inv).with_deg(0);
        let mut h = h;
        h.c.remove(&0);
        let mut g = Self::one(&self.ctx);
        if !h.is_zero() {
            // Σ (−h)^j, truncated at order
            let nh = h.neg();
            let mut p = Self::one(&self.ctx);
            loop {
                p = p.mul_capped(&nh, order);
                if p.is_zero() {
                    break;
                }
                g.add_assign_ref(&p);
            }
        }
        Ok(g.scale(&lead_inv).shift(-m).with_deg(out_deg))
    }

    /// d/dz on the coefficient function; the form degree is unchanged.
    pub fn deriv(&self) -> Self {
        let c = self
            .c
            .iter()
            .filter(|(e, _)| **e != 0)
            .map(|(e, v)| (e - 1, v.scale(&rint(*e))))
            .collect();
        LaurentForm {
            ctx: self.ctx.clone(),
            deg: self.deg,
            c,
        }
    }

    /// Term-by-term antiderivative with zero constant; requires no z^{-1} term.
    pub fn primitive(&self) -> Result<Self> {
        if self.c.contains_key(&-1) {
            return Err(Error::Unsupported(
                "primitive of a form with nonzero residue".into(),
            ));
        }
        let c = self
            .c
            .iter()
            .map(|(e, v)| (e + 1, v.scale(&Rat::new(1.into(), (e + 1).into()))))
            .collect();
        Ok(LaurentForm {
            ctx: self.ctx.clone(),
            deg: self.deg,
            c,
        })
    }

    /// Rational coefficients, if every coefficient is rational.
    pub fn rational_terms(&self) -> Result<BTreeMap<i64, Rat>> {
        self.c
            .iter()
            .map(|(e, v)| Ok((*e, v.rational_of()?)))
            .collect()
    }
}

impl fmt::Display for LaurentForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.c.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self.c.iter().map(|(e, v)| format!("({v}) z^{e}")).collect();
        write!(f, "{}", parts.join(" + "))?;
        match self.deg {
            0 => Ok(()),
            1 => write!(f, " dz"),
            d => write!(f, " dz^{d}"),
        }
    }
}

/// Antiderivatives from the base point z = ∞.
#[derive(Clone, Debug)]
pub enum Primitive<'a> {
    /// ∫_∞^z ξ_{−k}, the deformation tail (pairs (l, F02[k,l])) integrated term by term.
    Xi { k: u32, tail: &'a [(u32, Rat)] },
    /// Coinciding-point value of ∫_∞^{z'} (ω_{0,2}(·,z) − dx·dx(·)/(x − x(·))²) at z' = z, for x = z^r.
    BSubtracted { r: u32 },
}

pub fn integrate_from_infinity(ctx: &Arc<CycContext>, kind: Primitive<'_>) -> Result<LaurentForm> {
    match kind {
        Primitive::Xi { k, tail } => {
            if k < 1 {
                return Err(Error::InvalidParameter("ξ_{-k} needs k ≥ 1".into()));
            }
            let k = k as i64;
            let mut f = LaurentForm::rat_monomial(ctx, Rat::new((-1).into(), k.into()), -k, 0);
            for (l, q) in tail {
                let l = *l as i64;
                f.add_term(
                    l,
                    &CycNum::from_rat(ctx, q / Rat::from_integer((k * l).into())),
                );
            }
            Ok(f)
        }
        Primitive::BSubtracted { r } => {
            // lim_{z'→z} [1/(z − z') − r z^{r−1}/(z^r − z'^r)] = −(r−1)/(2z)
            Ok(LaurentForm::rat_monomial(
                ctx,
                Rat::new((1 - r as i64).into(), 2.into()),
                -1,
                1,
            ))
        }
    }
}

/// Truncated series Σ_{p ≤ order} ℏ^p T_p.
#[derive(Clone, Debug, PartialEq)]
pub struct HSeries<T> {
    order: i64,
    c: BTreeMap<i64, T>,
}

impl<T: Clone> HSeries<T> {
    pub fn new(order: i64) -> Self {
        HSeries {
            order,
            c: BTreeMap::new(),
        }
    }

    pub fn order(&self) -> i64 {
        self.order
    }

    pub fn get(&self, p: i64) -> Option<&T> {
        self.c.get(&p)
    }

    /// Stores ℏ^p T; powers above the truncation order are dropped.
    pub fn set(&mut self, p: i64, v: T) {
        if p <= self.order {
            self.c.insert(p, v);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, &T)> {
        self.c.iter().map(|(p, v)| (*p, v))
    }

    pub fn powers(&self) -> Vec<i64> {
        self.c.keys().copied().collect()
    }

    pub fn get_mut(&mut self, p: i64) -> Option<&mut T> {
        self.c.get_mut(&p)
    }
}

impl HSeries<LaurentForm> {
    pub fn add_at(&mut self, p: i64, v: &LaurentForm) {
        if p > self.order || v.is_zero() {
            return;
        }
        match self.c.get_mut(&p) {
            Some(x) => x.add_assign_ref(v),
            None => {
                self.c.insert(p, v.clone());
            }
        }
        if self.c.get(&p).is_some_and(|x| x.is_zero()) {
            self.c.remove(&p);
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let order = self.order.min(o.order);
        let mut out = HSeries::new(order);
        for (p, a) in &self.c {
            for (q, b) in &o.c {
                if p + q <= order {
                    out.add_at(p + q, &a.mul(b));
                }
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.c.values().all(|v| v.is_zero())
    }
}

/// Sparse F_{g,n}[k_1..k_n] over Q, stored in full (every ordering of the keys).
pub type Tensor = BTreeMap<Vec<u32>, Rat>;

/// Memoized correlators, keyed by (2g, n).
#[derive(Clone, Debug)]
pub struct CorrelatorTable {
    curve: Arc<Curve>,
    chi_max: u32,
    data: BTreeMap<(u32, u32), Tensor>,
}

impl PartialEq for CorrelatorTable {
    fn eq(&self, o: &Self) -> bool {
        self.curve.spec() == o.curve.spec() && self.chi_max == o.chi_max && self.data == o.data
    }
}

/// χ = 2g − 2 + n, with genus carried as 2g.
pub fn chi(two_g: u32, n: u32) -> i64 {
    two_g as i64 - 2 + n as i64
}

impl CorrelatorTable {
    pub fn new(curve: Arc<Curve>) -> Self {
        CorrelatorTable {
            curve,
            chi_max: 0,
            data: BTreeMap::new(),
        }
    }

    pub fn curve(&self) -> &Arc<Curve> {
        &self.curve
    }

    pub fn chi_max(&self) -> u32 {
        self.chi_max
    }

    pub fn set_chi_max(&mut self, c: u32) {
        self.chi_max = c;
    }

    /// The stable (2g, n) pairs with 0 < χ ≤ chi_max, in evaluation order.
    pub fn stable_indices(chi_max: u32) -> Vec<(u32, u32)> {
        let mut out = vec![];
        for c in 1..=chi_max as i64 {
            for n in 1..=(c + 2) {
                let two_g = c + 2 - n;
                if two_g >= 0 {
                    out.push((two_g as u32, n as u32));
                }
            }
        }
        out
    }

    pub fn insert(&mut self, two_g: u32, n: u32, t: Tensor) {
        self.data.insert((two_g, n), t);
    }

    pub fn get(&self, two_g: u32, n: u32) -> Option<&Tensor> {
        self.data.get(&(two_g, n))
    }

    pub fn contains(&self, two_g: u32, n: u32) -> bool {
        self.data.contains_key(&(two_g, n))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(u32, u32), &Tensor)> {
        self.data.iter()
    }

    pub fn value(&self, two_g: u32, keys: &[u32]) -> Rat {
        self.get(two_g, keys.len() as u32)
            .and_then(|t| t.get(keys))
            .cloned()
            .unwrap_or_else(Rat::zero)
    }

    /// Sets one entry, and all its permutations when `symmetric`.
    pub fn set_value(&mut self, two_g: u32, keys: &[u32], v: Rat, symmetric: bool) {
        let t = self.data.entry((two_g, keys.len() as u32)).or_default();
        let all = if symmetric {
            permutations(keys)
        } else {
            vec![keys.to_vec()]
        };
        for k in all {
            if v.is_zero() {
                t.remove(&k);
            } else {
                t.insert(k, v.clone());
            }
        }
    }

    /// Largest key index stored anywhere.
    pub fn max_key(&self) -> u32 {
        self.data
            .values()
            .flat_map(|t| t.keys().flatten().copied())
            .max()
            .unwrap_or(0)
    }

    /// Canonical representatives: (2g, n, nondecreasing keys, value), in evaluation order.
    pub fn canonical_entries(&self) -> Vec<(u32, u32, Vec<u32>, Rat)> {
        let mut idx: Vec<(u32, u32)> = self.data.keys().copied().collect();
        idx.sort_by_key(|&(g, n)| (chi(g, n), n));
        let mut out = vec![];
        for (g, n) in idx {
            for (k, v) in &self.data[&(g, n)] {
                if k.windows(2).all(|w| w[0] <= w[1]) {
                    out.push((g, n, k.clone(), v.clone()));
                }
            }
        }
        out
    }

    /// First (2g, n, keys) whose value differs between two tables.
    pub fn first_difference(&self, o: &Self) -> Option<(u32, u32, Vec<u32>)> {
        let a = self.canonical_entries();
        let b = o.canonical_entries();
        let key = |e: &(u32, u32, Vec<u32>, Rat)| (chi(e.0, e.1), e.1, e.2.clone());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) => {
                    let (kx, ky) = (key(x), key(y));
                    if kx == ky {
                        if x.3 != y.3 {
                            return Some((x.0, x.1, x.2.clone()));
                        }
                        i += 1;
                        j += 1;
                    } else if kx < ky {
                        return Some((x.0, x.1, x.2.clone()));
                    } else {
                        return Some((y.0, y.1, y.2.clone()));
                    }
                }
                (Some(x), None) | (None, Some(x)) => return Some((x.0, x.1, x.2.clone())),
                (None, None) => break,
            }
        }
        None
    }
}

pub fn permutations(keys: &[u32]) -> Vec<Vec<u32>> {
    let mut v = keys.to_vec();
    v.sort_unstable();
    let mut out = vec![v.clone()];
    // lexicographic successor enumeration over the multiset
    loop {
        let Some(i) = (0..v.len().saturating_sub(1))
            .rev()
            .find(|&i| v[i] < v[i + 1])
        else {
            break;
        };
        let j = (i + 1..v.len()).rev().find(|&j| v[j] > v[i]).unwrap();
        v.swap(i, j);
        v[i + 1..].reverse();
        out.push(v.clone());
    }
    out
}

/// The canonical display of a rational coefficient.
pub fn rat_str(q: &Rat) -> String {
    fmt_rat(q)
}

//! Quantum curves: the resolvent F = ℏ d/dx log ψ assembled from a correlator
//! table, normal-ordered differential operators in x and ℏ d/dx, and the
//! check that the operator annihilates ψ order by order in ℏ.
//!
//! ψ is never built. Everything happens at the level of (op·ψ)/ψ, which lives in
//! log-free Laurent series in z (x = z^r, so x^a needs a·r ∈ ℤ).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::exact::{fmt_rat, rat, rint, CycContext, CycNum, Rat};
use crate::report::Report;
use crate::series::{integrate_from_infinity, CorrelatorTable, HSeries, LaurentForm, Primitive};

fn check_supported(curve: &Curve) -> Result<()> {
    let (r, s) = (curve.r(), curve.s());
    if curve.is_r_airy() || s >= r {
        return Err(Error::Unsupported(format!(
            "quantum curve for (r,s)=({r},{s}) needs 1 ≤ s ≤ r−1"
        )));
    }
    Ok(())
}

/// ⌊α_i⌋ with α_i = i(r−s)/r.
pub fn alpha_floor(r: u32, s: u32, i: u32) -> i64 {
    (i as i64 * (r as i64 - s as i64)).div_euclid(r as i64)
}

/// F = ℏ d/dx log ψ, coefficientwise a function of z.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolvent {
    curve: Arc<Curve>,
    series: HSeries<LaurentForm>,
}

impl Resolvent {
    pub fn curve(&self) -> &Arc<Curve> {
        &self.curve
    }

    pub fn series(&self) -> &HSeries<LaurentForm> {
        &self.series
    }

    pub fn order(&self) -> i64 {
        self.series.order()
    }

    pub fn coeff(&self, p: i64) -> LaurentForm {
        self.series
            .get(p)
            .cloned()
            .unwrap_or_else(|| LaurentForm::zero(self.curve.ctx(), 0))
    }
}

/// Σ_{a ∈ sheets} Σ_keys F[k0, k⃗] ξ_{−k0}(θ^a z) ∏_j ∫_∞^z ξ_{−kj}, as a one-form in z.
fn integrated_entry(
    table: &CorrelatorTable,
    g2: u32,
    n: u32,
    sheets: &[i64],
) -> Result<LaurentForm> {
    let curve = table.curve();
    let ctx = curve.ctx();
    let t = table
        .get(g2, n)
        .ok_or(Error::MissingDependency { two_g: g2, n })?;
    let mut out = LaurentForm::zero(ctx, 1);
    for (keys, v) in t {
        let k0 = keys[0] as i64;
        let mut c = v.clone();
        let mut e = -k0 - 1;
        for &k in &keys[1..] {
            // ∫_∞^z z'^{−k−1}dz' = −z^{−k}/k
            c = -c / rint(k as i64);
            e -= k as i64;
        }
        for &a in sheets {
            let th = CycNum::theta(ctx, -a * k0).scale(&c);
            out.add_term(e, &th);
        }
    }
    Ok(out)
}

/// ω_{g,1} with its residue part S_{1,2g} dz/z, for 2g ≥ 2.
fn omega_g1(table: &CorrelatorTable, g2: u32) -> Result<LaurentForm> {
    let curve = table.curve();
    let mut f = integrated_entry(table, g2, 1, &[0])?;
    f.add_term(-1, &CycNum::from_rat(curve.ctx(), curve.shift_value(1, g2)));
    Ok(f)
}

/// Divides a one-form by dx = r z^{r−1}dz.
fn over_dx(f: &LaurentForm, r: u32) -> LaurentForm {
    f.shift(1 - r as i64)
        .scale_rat(&rat(1, r as i64))
        .with_deg(0)
}

fn factorial(n: u32) -> Rat {
    (1..=n as i64).fold(Rat::one(), |a, k| a * rint(k))
}

fn check_table(table: &CorrelatorTable, order: i64) -> Result<()> {
    let curve = table.curve();
    check_supported(curve)?;
    if !curve.spec().is_undeformed() {
        return Err(Error::Unsupported(
            "the resolvent needs an undeformed curve".into(),
        ));
    }
    if order < 0 {
        return Err(Error::InvalidParameter("ℏ-order must be ≥ 0".into()));
    }
    if (table.chi_max() as i64) < order - 1 {
        return Err(Error::InvalidParameter(format!(
            "resolvent to ℏ^{order} needs the table through χ = {}, have {}",
            order - 1,
            table.chi_max()
        )));
    }
    Ok(())
}

/// F = Σ ℏ^{2g+n}/n! (∫…∫ ω_{g,n+1}(z, ·))/dx, truncated at ℏ^N.
pub fn resolvent(table: &CorrelatorTable, order: i64) -> Result<Resolvent> {
    check_table(table, order)?;
    let curve = table.curve().clone();
    let ctx = curve.ctx().clone();
    let r = curve.r();
    let mut f = HSeries::new(order);
    f.add_at(0, &over_dx(&curve.omega01(), r));
    let b = integrate_from_infinity(&ctx, Primitive::BSubtracted { r })?;
    f.add_at(1, &over_dx(&b, r));
    f.add_at(1, &over_dx(&curve.omega_half(), r));
    for (&(g2, n), _) in table.entries() {
        let p = g2 as i64 + n as i64 - 1;
        if p > order {
            continue;
        }
        let mut w = if n == 1 {
            omega_g1(table, g2)?
        } else {
            integrated_entry(table, g2, n, &[0])?
        };
        w = w.scale_rat(&(Rat::one() / factorial(n - 1)));
        f.add_at(p, &over_dx(&w, r));
    }
    Ok(Resolvent { curve, series: f })
}

/// ξ¹ = −Σ ℏ^{2g+n}/n! 𝒢¹_{g,n}/dx, assembled from the r−1 other sheets.
pub fn xi_one(table: &CorrelatorTable, order: i64) -> Result<HSeries<LaurentForm>> {
    check_table(table, order)?;
    let curve = table.curve();
    let ctx = curve.ctx();
    let r = curve.r();
    let others: Vec<i64> = (1..r as i64).collect();
    let mut u = HSeries::new(order);
    let mut w01 = LaurentForm::zero(ctx, 1);
    let mut whalf = LaurentForm::zero(ctx, 1);
    let mut b = LaurentForm::zero(ctx, 1);
    for &a in &others {
        w01.add_assign_ref(&curve.omega01().sheet_substitute(a));
        whalf.add_assign_ref(&curve.omega_half().sheet_substitute(a));
        // ∫_∞^z ω_{0,2}(θ^a z, z₁) in z₁ = θ^a dz/((θ^a − 1) z)
        let th = CycNum::theta(ctx, a);
        let c = &th * &(&th - &CycNum::one(ctx)).inv()?;
        b.add_term(-1, &c);
    }
    u.add_at(0, &w01);
    u.add_at(1, &b);
    u.add_at(1, &whalf);
    for (&(g2, n), _) in table.entries() {
        let p = g2 as i64 + n as i64 - 1;
        if p > order {
            continue;
        }
        let mut w = integrated_entry(table, g2, n, &others)?;
        if n == 1 {
            w.add_term(
                -1,
                &CycNum::from_rat(ctx, curve.shift_value(1, g2) * rint(r as i64 - 1)),
            );
        }
        u.add_at(p, &w.scale_rat(&(Rat::one() / factorial(n - 1))));
    }
    let mut out = HSeries::new(order);
    for (p, w) in u.iter() {
        out.add_at(p, &over_dx(&w.neg(), r));
    }
    Ok(out)
}

/// The identity p₀F = p₀ξ¹ + (p₀/x)Σ_{g≥½}ℏ^{2g}S_{1,2g}, with p₀ = x^{r−s}, checked exactly.
pub fn check_psi1_contract(table: &CorrelatorTable, order: i64) -> Result<Report> {
    let f = resolvent(table, order)?;
    let xi = xi_one(table, order)?;
    let curve = table.curve();
    let ctx = curve.ctx();
    let (r, s) = (curve.r() as i64, curve.s() as i64);
    let p0 = r * (r - s);
    for p in 0..=order {
        let mut d = f.coeff(p);
        if let Some(x) = xi.get(p) {
            d.sub_assign_ref(x);
        }
        if p >= 1 {
            d.add_term(-r, &-CycNum::from_rat(ctx, curve.shift_value(1, p as u32)));
        }
        let d = d.shift(p0);
        if let Some(e) = d.valuation() {
            return Ok(Report::fail(
                "psi1-contract",
                format!("ℏ^{p}"),
                format!("z^{e}: {}", d.coeff(e)),
            ));
        }
    }
    Ok(Report::pass("psi1-contract", format!("through ℏ^{order}")))
}

/// One factor of an operator word: x^a or ℏ d/dx.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Factor {
    X(Rat),
    D,
}

/// c ℏ^h · (product of factors, left to right).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Word {
    pub coeff: Rat,
    pub hpow: i64,
    pub factors: Vec<Factor>,
}

impl Word {
    pub fn new(coeff: Rat, hpow: i64, factors: Vec<Factor>) -> Self {
        let mut out: Vec<Factor> = Vec::new();
        for f in factors {
            match (out.last_mut(), f) {
                (Some(Factor::X(a)), Factor::X(b)) => *a += b,
                (_, f) => out.push(f),
            }
            if matches!(out.last(), Some(Factor::X(a)) if a.is_zero()) {
                out.pop();
            }
        }
        Word {
            coeff,
            hpow,
            factors: out,
        }
    }
}

fn fmt_x(a: &Rat) -> String {
    if a.is_one() {
        "x".into()
    } else if a.is_integer() && a.is_positive() {
        format!("x^{a}")
    } else {
        format!("x^({})", fmt_rat(a))
    }
}

fn fmt_hbar(h: i64) -> Option<String> {
    match h {
        0 => None,
        1 => Some("ℏ".into()),
        h => Some(format!("ℏ^{h}")),
    }
}

/// Joins signed terms as "a + b − c"; each entry is (negative, body).
fn join_terms(terms: Vec<(bool, String)>) -> String {
    if terms.is_empty() {
        return "0".into();
    }
    let mut s = String::new();
    for (i, (neg, body)) in terms.into_iter().enumerate() {
        match (i, neg) {
            (0, false) => {}
            (0, true) => s.push('−'),
            (_, false) => s.push_str(" + "),
            (_, true) => s.push_str(" − "),
        }
        s.push_str(&body);
    }
    s
}

fn term_body(c: &Rat, parts: Vec<String>) -> String {
    let c = c.abs();
    let mut v = Vec::new();
    if !c.is_one() || parts.is_empty() {
        v.push(fmt_rat(&c));
    }
    v.extend(parts);
    v.join(" ")
}

/// Renders a sum of words, e.g. "ℏ^3 d/dx d/dx x d/dx − 1".
pub fn pretty_words(words: &[Word]) -> String {
    let terms = words
        .iter()
        .filter(|w| !w.coeff.is_zero())
        .map(|w| {
            let nd = w.factors.iter().filter(|f| **f == Factor::D).count() as i64;
            let mut parts: Vec<String> = fmt_hbar(w.hpow + nd).into_iter().collect();
            for f in &w.factors {
                parts.push(match f {
                    Factor::X(a) => fmt_x(a),
                    Factor::D => "d/dx".into(),
                });
            }
            (w.coeff.is_negative(), term_body(&w.coeff, parts))
        })
        .collect();
    join_terms(terms)
}

/// Laurent polynomial in ℏ over ℚ.
pub type HPoly = BTreeMap<i64, Rat>;

fn hpoly_add(p: &mut HPoly, h: i64, c: &Rat) {
    if c.is_zero() {
        return;
    }
    let e = p.entry(h).or_insert_with(Rat::zero);
    *e += c;
    if e.is_zero() {
        p.remove(&h);
    }
}

/// Σ c_{a,b}(ℏ) x^a (ℏ d/dx)^b, normal-ordered.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiffOp {
    terms: BTreeMap<(Rat, u32), HPoly>,
}

fn binom(n: u32, k: u32) -> Rat {
    (0..k).fold(Rat::one(), |acc, j| {
        acc * rint((n - j) as i64) / rint(j as i64 + 1)
    })
}

fn falling(a: &Rat, j: u32) -> Rat {
    (0..j).fold(Rat::one(), |acc, i| acc * (a - rint(i as i64)))
}

impl DiffOp {
    pub fn zero() -> Self {
        Self::default()
    }

    /// c ℏ^h x^a (ℏ d/dx)^b.
    pub fn monomial(c: Rat, h: i64, a: Rat, b: u32) -> Self {
        let mut op = Self::zero();
        op.add_term(a, b, h, &c);
        op
    }

    pub fn scalar(c: Rat) -> Self {
        Self::monomial(c, 0, Rat::zero(), 0)
    }

    pub fn x_pow(a: Rat) -> Self {
        Self::monomial(Rat::one(), 0, a, 0)
    }

    pub fn hbar_d() -> Self {
        Self::monomial(Rat::one(), 0, Rat::zero(), 1)
    }

    pub fn add_term(&mut self, a: Rat, b: u32, h: i64, c: &Rat) {
        let key = (a, b);
        let p = self.terms.entry(key.clone()).or_default();
        hpoly_add(p, h, c);
        if p.is_empty() {
            self.terms.remove(&key);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(Rat, u32), &HPoly)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Highest power of ℏ d/dx present.
    pub fn order(&self) -> Option<u32> {
        self.terms.keys().map(|k| k.1).max()
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for ((a, b), p) in &o.terms {
            for (h, c) in p {
                out.add_term(a.clone(), *b, *h, c);
            }
        }
        out
    }

    pub fn scale(&self, c: &Rat, h: i64) -> Self {
        let mut out = Self::zero();
        for ((a, b), p) in &self.terms {
            for (hh, cc) in p {
                out.add_term(a.clone(), *b, hh + h, &(cc * c));
            }
        }
        out
    }

    /// Product, normal-ordered through (ℏ d/dx)^b x^c = Σ_j C(b,j) ℏ^j (c)_j x^{c−j} (ℏ d/dx)^{b−j}.
    pub fn mul(&self, o: &Self) -> Self {
        let mut out = Self::zero();
        for ((a, b), p) in &self.terms {
            for ((c, e), q) in &o.terms {
                for j in 0..=*b {
                    let k = binom(*b, j) * falling(c, j);
                    if k.is_zero() {
                        continue;
                    }
                    let xa = a + c - rint(j as i64);
                    for (h1, c1) in p {
                        for (h2, c2) in q {
                            out.add_term(
                                xa.clone(),
                                b - j + e,
                                h1 + h2 + j as i64,
                                &(&k * c1 * c2),
                            );
                        }
                    }
                }
            }
        }
        out
    }

    pub fn from_word(w: &Word) -> Self {
        let mut op = Self::scalar(w.coeff.clone()).scale(&Rat::one(), w.hpow);
        for f in &w.factors {
            let g = match f {
                Factor::X(a) => Self::x_pow(a.clone()),
                Factor::D => Self::hbar_d(),
            };
            op = op.mul(&g);
        }
        op
    }

    pub fn from_words(ws: &[Word]) -> Self {
        ws.iter()
            .fold(Self::zero(), |acc, w| acc.add(&Self::from_word(w)))
    }

    /// Normal-ordered rendering, highest derivative first.
    pub fn pretty(&self) -> String {
        let mut terms = Vec::new();
        for ((a, b), p) in self.terms.iter().rev() {
            for (h, c) in p.iter().rev() {
                let mut parts: Vec<String> = fmt_hbar(*h).into_iter().collect();
                if !a.is_zero() {
                    parts.push(fmt_x(a));
                }
                match b {
                    0 => {}
                    1 => parts.push("(ℏ d/dx)".into()),
                    b => parts.push(format!("(ℏ d/dx)^{b}")),
                }
                terms.push((c.is_negative(), term_body(c, parts)));
            }
        }
        join_terms(terms)
    }

    /// Serializable form [{a_num, a_den, b, c: [{hpow, "p/q"}]}].
    pub fn to_doc(&self) -> Vec<DiffOpTerm> {
        self.terms
            .iter()
            .map(|((a, b), p)| DiffOpTerm {
                a_num: a.numer().to_string(),
                a_den: a.denom().to_string(),
                b: *b,
                c: p.iter()
                    .map(|(h, c)| HCoeff {
                        hpow: *h,
                        value: fmt_rat(c),
                    })
                    .collect(),
            })
            .collect()
    }

    pub fn from_doc(doc: &[DiffOpTerm]) -> Result<Self> {
        let mut op = Self::zero();
        for t in doc {
            let a = crate::exact::parse_rat(&format!("{}/{}", t.a_num, t.a_den))?;
            for c in &t.c {
                op.add_term(a.clone(), t.b, c.hpow, &crate::exact::parse_rat(&c.value)?);
            }
        }
        Ok(op)
    }
}

impl fmt::Display for DiffOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.pretty())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct HCoeff {
    pub hpow: i64,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct DiffOpTerm {
    pub a_num: String,
    pub a_den: String,
    pub b: u32,
    pub c: Vec<HCoeff>,
}

/// D_1⋯D_m as factors, D_i = ℏ x^{⌊α_i⌋−⌊α_{i−1}⌋} d/dx.
fn d_chain(r: u32, s: u32, m: u32) -> Vec<Factor> {
    let mut v = Vec::new();
    for i in 1..=m {
        let e = alpha_floor(r, s, i) - alpha_floor(r, s, i - 1);
        v.push(Factor::X(rint(e)));
        v.push(Factor::D);
    }
    v
}

/// The quantum curve as a sum of words:
/// D₁⋯D_r + Σ_{2g ≤ N} Σ_i (−1)^i ℏ^{2g} S_{i,2g} D₁⋯D_{r−i} x^{r−s−⌊α_{r−i}⌋−i} − 1.
pub fn quantum_operator_words(curve: &Curve, order: i64) -> Result<Vec<Word>> {
    check_supported(curve)?;
    let (r, s) = (curve.r(), curve.s());
    let mut out = vec![Word::new(Rat::one(), 0, d_chain(r, s, r))];
    for g2 in 1..=order.max(0) as u32 {
        for i in 1..=r {
            let v = curve.shift_value(i, g2);
            if v.is_zero() {
                continue;
            }
            let v = if i % 2 == 0 { v } else { -v };
            let mut f = d_chain(r, s, r - i);
            let e = r as i64 - s as i64 - alpha_floor(r, s, r - i) - i as i64;
            f.push(Factor::X(rint(e)));
            out.push(Word::new(v, g2 as i64, f));
        }
    }
    out.push(Word::new(-Rat::one(), 0, vec![]));
    Ok(out)
}

pub fn build_quantum_operator(curve: &Curve, order: i64) -> Result<DiffOp> {
    Ok(DiffOp::from_words(&quantum_operator_words(curve, order)?))
}

/// Outcome of applying an operator to ψ through its resolvent.
#[derive(Clone, Debug, PartialEq)]
pub struct Vanishing {
    /// Largest N′ ≤ N with (op·ψ)/ψ ≡ 0 mod ℏ^{N′+1}; None when already ℏ⁰ (or below) survives.
    pub order: Option<i64>,
    pub requested: i64,
    /// First surviving coefficient: (ℏ-power, its z-series).
    pub witness: Option<(i64, LaurentForm)>,
}

impl Vanishing {
    pub fn passed(&self) -> bool {
        self.order == Some(self.requested)
    }

    pub fn order_str(&self) -> String {
        self.order.map_or("-inf".into(), |o| o.to_string())
    }

    pub fn report(&self) -> Report {
        let loc = format!("vanishing through ℏ^{}", self.order_str());
        match &self.witness {
            None => Report::pass("quantum-curve", loc),
            Some((p, f)) => {
                let e = f.valuation().unwrap_or(0);
                Report::fail("quantum-curve", loc, format!("ℏ^{p} z^{e}: {}", f.coeff(e)))
            }
        }
    }
}

/// ℏ d/dx on a function-valued ℏ-series, with d/dx = (r z^{r−1})^{−1} d/dz.
fn hbar_ddx(a: &HSeries<LaurentForm>, r: u32) -> HSeries<LaurentForm> {
    let mut out = HSeries::new(a.order());
    for (p, f) in a.iter() {
        out.add_at(p + 1, &over_dx(&f.deriv().with_deg(1), r));
    }
    out
}

/// Computes Q = (op·ψ)/ψ through ℏ^N, with (ℏ d/dx)^{b+1}ψ = (ℏ dA_b/dx + A_b F)ψ.
pub fn apply_to_psi(op: &DiffOp, f: &Resolvent, order: i64) -> Result<HSeries<LaurentForm>> {
    let curve = f.curve();
    let ctx: &Arc<CycContext> = curve.ctx();
    let r = curve.r();
    let order = order.min(f.order());
    let bmax = op.order().unwrap_or(0);
    let mut fs = HSeries::new(order);
    for (p, v) in f.series().iter() {
        fs.add_at(p, v);
    }
    let mut a = HSeries::new(order);
    a.add_at(0, &LaurentForm::one(ctx));
    let mut powers = vec![a];
    for b in 0..bmax as usize {
        let next = {
            let mut n = hbar_ddx(&powers[b], r);
            let prod = powers[b].mul(&fs);
            for (p, v) in prod.iter() {
                n.add_at(p, v);
            }
            n
        };
        powers.push(next);
    }
    let mut q = HSeries::new(order);
    for ((xa, b), poly) in op.terms() {
        let e = xa * rint(r as i64);
        if !e.is_integer() {
            return Err(Error::Unsupported(format!(
                "x^{} is not a power of z",
                fmt_rat(xa)
            )));
        }
        let e: i64 = e
            .to_integer()
            .try_into()
            .map_err(|_| Error::InvalidParameter("x exponent".into()))?;
        for (h, c) in poly {
            for (p, v) in powers[*b as usize].iter() {
                if p + h <= order {
                    q.add_at(p + h, &v.shift(e).scale_rat(c));
                }
            }
        }
    }
    Ok(q)
}

pub fn verify_quantum_curve(op: &DiffOp, f: &Resolvent, order: i64) -> Result<Vanishing> {
    let q = apply_to_psi(op, f, order)?;
    let order = order.min(f.order());
    let first = q
        .iter()
        .find(|(_, v)| !v.is_zero())
        .map(|(p, v)| (p, v.clone()));
    Ok(match first {
        None => Vanishing {
            order: Some(order),
            requested: order,
            witness: None,
        },
        Some((p, v)) => Vanishing {
            order: (p > 0).then(|| p - 1),
            requested: order,
            witness: Some((p, v)),
        },
    })
}

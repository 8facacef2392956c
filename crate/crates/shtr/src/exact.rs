//! Exact rationals and the cyclotomic field Q(ζ_r) = Q[t]/Φ_r(t).

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

pub type Rat = BigRational;

pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn rint(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Parses "p", "p/q" or "-p/q".
pub fn parse_rat(s: &str) -> Result<Rat> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational: {s:?}"));
    match s.split_once('/') {
        None => s
            .parse::<BigInt>()
            .map(Rat::from_integer)
            .map_err(|_| bad()),
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().map_err(|_| bad())?;
            let q: BigInt = q.trim().parse().map_err(|_| bad())?;
            if q.is_zero() {
                return Err(bad());
            }
            Ok(Rat::new(p, q))
        }
    }
}

/// "p/q", with q omitted when 1. This is `Ratio`'s own Display.
pub fn fmt_rat(q: &Rat) -> String {
    q.to_string()
}

fn poly_divrem(num: &[Rat], den: &[Rat]) -> (Vec<Rat>, Vec<Rat>) {
    let mut rem = num.to_vec();
    trim(&mut rem);
    let dd = den.len() - 1;
    let lead = den[dd].clone();
    if rem.len() < den.len() {
        return (vec![], rem);
    }
    let mut quo = vec![Rat::zero(); rem.len() - dd];
    while rem.len() >= den.len() {
        let k = rem.len() - den.len();
        let c = rem.last().unwrap() / &lead;
        for (j, dj) in den.iter().enumerate() {
            rem[k + j] -= &c * dj;
        }
        quo[k] = c;
        rem.pop();
        trim(&mut rem);
    }
    (quo, rem)
}

fn trim(p: &mut Vec<Rat>) {
    while p.last().is_some_and(|c| c.is_zero()) {
        p.pop();
    }
}

/// Data for Q(ζ_r): the cyclotomic polynomial and a table of θ^m.
#[derive(Debug)]
pub struct CycContext {
    r: u32,
    /// Φ_r coefficients, low degree first; monic with integer entries.
    phi: Vec<BigInt>,
    deg: usize,
    powers: Vec<Vec<Rat>>,
}

impl PartialEq for CycContext {
    fn eq(&self, o: &Self) -> bool {
        self.r == o.r
    }
}

pub fn cyclotomic_poly(r: u32) -> Result<Vec<BigInt>> {
    if r == 0 {
        return Err(Error::InvalidParameter(
            "cyclotomic order r must be ≥ 1".into(),
        ));
    }
    let mut p = vec![Rat::zero(); r as usize + 1];
    p[0] = -Rat::one();
    p[r as usize] = Rat::one();
    for d in 1..r {
        if r % d == 0 {
            let q: Vec<Rat> = cyclotomic_poly(d)?
                .into_iter()
                .map(Rat::from_integer)
                .collect();
            let (quo, rem) = poly_divrem(&p, &q);
            debug_assert!(rem.is_empty());
            p = quo;
        }
    }
    Ok(p.into_iter().map(|c| c.to_integer()).collect())
}

impl CycContext {
    pub fn new(r: u32) -> Result<Arc<Self>> {
        let phi = cyclotomic_poly(r)?;
        let deg = phi.len() - 1;
        let mut ctx = CycContext {
            r,
            phi,
            deg,
            powers: Vec::new(),
        };
        let mut cur = vec![Rat::zero(); deg];
        cur[0] = Rat::one();
        for _ in 0..r {
            ctx.powers.push(cur.clone());
            let mut next = vec![Rat::zero(); deg + 1];
            for (j, c) in cur.iter().enumerate() {
                next[j + 1] = c.clone();
            }
            ctx.reduce(&mut next);
            cur = next;
        }
        Ok(Arc::new(ctx))
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn degree(&self) -> usize {
        self.deg
    }

    pub fn phi(&self) -> &[BigInt] {
        &self.phi
    }

    /// Reduces a coefficient vector of any length mod Φ_r, truncating it to `deg`.
    fn reduce(&self, v: &mut Vec<Rat>) {
        let d = self.deg;
        for k in (d..v.len()).rev() {
            if v[k].is_zero() {
                continue;
            }
            let c = std::mem::take(&mut v[k]);
            for (j, pj) in self.phi[..d].iter().enumerate() {
                if !pj.is_zero() {
                    v[k - d + j] -= &c * pj;
                }
            }
        }
        v.truncate(d);
    }
}

/// An element of Q(ζ_r), stored as its residue mod Φ_r.
#[derive(Clone, Debug)]
pub struct CycNum {
    ctx: Arc<CycContext>,
    c: Vec<Rat>,
}

impl PartialEq for CycNum {
    fn eq(&self, o: &Self) -> bool {
        self.ctx.r == o.ctx.r && self.c == o.c
    }
}
impl Eq for CycNum {}

impl CycNum {
    pub fn zero(ctx: &Arc<CycContext>) -> Self {
        CycNum {
            ctx: ctx.clone(),
            c: vec![Rat::zero(); ctx.deg],
        }
    }

    pub fn one(ctx: &Arc<CycContext>) -> Self {
        Self::from_rat(ctx, Rat::one())
    }

    pub fn from_rat(ctx: &Arc<CycContext>, q: Rat) -> Self {
        let mut z = Self::zero(ctx);
        z.c[0] = q;
        z
    }

    pub fn from_int(ctx: &Arc<CycContext>, n: i64) -> Self {
        Self::from_rat(ctx, rint(n))
    }

    /// θ^m with θ = ζ_r; m is taken mod r.
    pub fn theta(ctx: &Arc<CycContext>, m: i64) -> Self {
        let k = m.rem_euclid(ctx.r as i64) as usize;
        CycNum {
            ctx: ctx.clone(),
            c: ctx.powers[k].clone(),
        }
    }

    pub fn from_coeffs(ctx: &Arc<CycContext>, coeffs: &[Rat]) -> Self {
        let mut v = coeffs.to_vec();
        if v.len() < ctx.deg {
            v.resize(ctx.deg, Rat::zero());
        }
        ctx.reduce(&mut v);
        CycNum {
            ctx: ctx.clone(),
            c: v,
        }
    }

    pub fn ctx(&self) -> &Arc<CycContext> {
        &self.ctx
    }

    pub fn coeffs(&self) -> &[Rat] {
        &self.c
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|q| q.is_zero())
    }

    pub fn is_one(&self) -> bool {
        self.c[0].is_one() && self.c[1..].iter().all(|q| q.is_zero())
    }

    fn check(&self, o: &Self) -> Result<()> {
        if self.ctx.r != o.ctx.r {
            return Err(Error::ContextMismatch(self.ctx.r, o.ctx.r));
        }
        Ok(())
    }

    pub fn try_add(&self, o: &Self) -> Result<Self> {
        self.check(o)?;
        Ok(self + o)
    }

    pub fn try_mul(&self, o: &Self) -> Result<Self> {
        self.check(o)?;
        Ok(self * o)
    }

    pub fn scale(&self, q: &Rat) -> Self {
        if q.is_zero() {
            return Self::zero(&self.ctx);
        }
        CycNum {
            ctx: self.ctx.clone(),
            c: self.c.iter().map(|a| a * q).collect(),
        }
    }

    /// Inverse via the extended Euclidean algorithm on Q[t].
    pub fn inv(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::NotInvertible("zero element of Q(ζ_r)".into()));
        }
        let d = self.ctx.deg;
        if d == 1 {
            return Ok(Self::from_rat(&self.ctx, self.c[0].recip()));
        }
        // invariant: s_i * a ≡ r_i (mod Φ)
        let mut r0: Vec<Rat> = self
            .ctx
            .phi
            .iter()
            .cloned()
            .map(Rat::from_integer)
            .collect();
        let mut r1 = self.c.clone();
        trim(&mut r1);
        let mut s0: Vec<Rat> = vec![];
        let mut s1: Vec<Rat> = vec![Rat::one()];
        while r1.len() > 1 {
            let (q, rem) = poly_divrem(&r0, &r1);
            let qs = poly_mul(&q, &s1);
            let mut s2 = s0.clone();
            if s2.len() < qs.len() {
                s2.resize(qs.len(), Rat::zero());
            }
            for (j, c) in qs.into_iter().enumerate() {
                s2[j] -= c;
            }
            trim(&mut s2);
            r0 = std::mem::replace(&mut r1, rem);
            s0 = std::mem::replace(&mut s1, s2);
        }
        // r1 is a nonzero constant since Φ_r is irreducible
        let c = r1[0].recip();
        let v: Vec<Rat> = s1.iter().map(|x| x * &c).collect();
        Ok(Self::from_coeffs(&self.ctx, &v))
    }

    pub fn pow(&self, e: i64) -> Result<Self> {
        let base = if e < 0 { self.inv()? } else { self.clone() };
        let mut e = e.unsigned_abs();
        let mut acc = Self::one(&self.ctx);
        let mut b = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &b;
            }
            b = &b * &b;
            e >>= 1;
        }
        Ok(acc)
    }

    /// The rational value, if this element lies in Q.
    pub fn rational_of(&self) -> Result<Rat> {
        if self.c[1..].iter().all(|q| q.is_zero()) {
            Ok(self.c[0].clone())
        } else {
            Err(Error::NotRational(self.to_string()))
        }
    }
}

fn poly_mul(a: &[Rat], b: &[Rat]) -> Vec<Rat> {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut out = vec![Rat::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            if !y.is_zero() {
                out[i + j] += x * y;
            }
        }
    }
    out
}

impl<'a> Add<&'a CycNum> for &'a CycNum {
    type Output = CycNum;
    fn add(self, o: &CycNum) -> CycNum {
        debug_assert_eq!(self.ctx.r, o.ctx.r);
        CycNum {
            ctx: self.ctx.clone(),
            c: self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<'a> Sub<&'a CycNum> for &'a CycNum {
    type Output = CycNum;
    fn sub(self, o: &CycNum) -> CycNum {
        debug_assert_eq!(self.ctx.r, o.ctx.r);
        CycNum {
            ctx: self.ctx.clone(),
            c: self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect(),
        }
    }
}

impl<'a> Mul<&'a CycNum> for &'a CycNum {
    type Output = CycNum;
    fn mul(self, o: &CycNum) -> CycNum {
        debug_assert_eq!(self.ctx.r, o.ctx.r);
        let d = self.ctx.deg;
        if d == 1 {
            return CycNum {
                ctx: self.ctx.clone(),
                c: vec![&self.c[0] * &o.c[0]],
            };
        }
        let mut v = vec![Rat::zero(); 2 * d - 1];
        for (i, x) in self.c.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for (j, y) in o.c.iter().enumerate() {
                if !y.is_zero() {
                    v[i + j] += x * y;
                }
            }
        }
        self.ctx.reduce(&mut v);
        CycNum {
            ctx: self.ctx.clone(),
            c: v,
        }
    }
}

impl Neg for &CycNum {
    type Output = CycNum;
    fn neg(self) -> CycNum {
        CycNum {
            ctx: self.ctx.clone(),
            c: self.c.iter().map(|a| -a).collect(),
        }
    }
}

impl Neg for CycNum {
    type Output = CycNum;
    fn neg(mut self) -> CycNum {
        for a in self.c.iter_mut() {
            *a = -std::mem::take(a);
        }
        self
    }
}

impl AddAssign<&CycNum> for CycNum {
    fn add_assign(&mut self, o: &CycNum) {
        debug_assert_eq!(self.ctx.r, o.ctx.r);
        for (a, b) in self.c.iter_mut().zip(&o.c) {
            if !b.is_zero() {
                *a += b;
            }
        }
    }
}

impl SubAssign<&CycNum> for CycNum {
    fn sub_assign(&mut self, o: &CycNum) {
        for (a, b) in self.c.iter_mut().zip(&o.c) {
            if !b.is_zero() {
                *a -= b;
            }
        }
    }
}

impl fmt::Display for CycNum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, q) in self.c.iter().enumerate() {
            if q.is_zero() {
                continue;
            }
            let sign = if q.is_negative() { "-" } else { "+" };
            if first {
                if q.is_negative() {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            first = false;
            let a = q.abs();
            match k {
                0 => write!(f, "{a}")?,
                _ => {
                    if !a.is_one() {
                        write!(f, "{a}*")?;
                    }
                    write!(f, "ζ{}", self.ctx.r)?;
                    if k > 1 {
                        write!(f, "^{k}")?;
                    }
                }
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

impl Serialize for CycNum {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("CycNum", 2)?;
        st.serialize_field("r", &self.ctx.r)?;
        let v: Vec<String> = self.c.iter().map(fmt_rat).collect();
        st.serialize_field("zeta_r", &v)?;
        st.end()
    }
}

/// Exact gcd of machine integers, used for index bookkeeping.
pub fn gcd(a: u32, b: u32) -> u32 {
    a.gcd(&b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ints(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn small_cyclotomics() {
        assert!(cyclotomic_poly(0).is_err());
        assert_eq!(cyclotomic_poly(1).unwrap(), ints(&[-1, 1]));
        assert_eq!(cyclotomic_poly(2).unwrap(), ints(&[1, 1]));
        assert_eq!(cyclotomic_poly(6).unwrap(), ints(&[1, -1, 1]));
        assert_eq!(cyclotomic_poly(12).unwrap(), ints(&[1, 0, -1, 0, 1]));
    }

    #[test]
    fn degree_is_euler_phi() {
        for r in 1..=30u32 {
            let phi = (1..=r).filter(|&k| gcd(k, r) == 1).count();
            assert_eq!(CycContext::new(r).unwrap().degree(), phi, "r={r}");
        }
    }

    #[test]
    fn root_of_unity_identities() {
        for r in 2..=12 {
            let ctx = CycContext::new(r).unwrap();
            let z = CycNum::theta(&ctx, 1);
            assert!(z.pow(r as i64).unwrap().is_one());
            assert!((&z * &z.pow(r as i64 - 1).unwrap()).is_one());
            let mut s = CycNum::zero(&ctx);
            for m in 0..r as i64 {
                s += &CycNum::theta(&ctx, m);
            }
            assert!(s.is_zero(), "r={r}");
            // Φ_r(ζ) = 0
            let mut acc = CycNum::zero(&ctx);
            for (k, c) in ctx.phi().iter().enumerate() {
                acc += &z
                    .pow(k as i64)
                    .unwrap()
                    .scale(&Rat::from_integer(c.clone()));
            }
            assert!(acc.is_zero());
        }
    }

    #[test]
    fn rationality() {
        let ctx = CycContext::new(4).unwrap();
        assert_eq!(
            CycNum::from_rat(&ctx, rat(3, 2)).rational_of().unwrap(),
            rat(3, 2)
        );
        assert!(CycNum::theta(&ctx, 1).rational_of().is_err());
        let ctx5 = CycContext::new(5).unwrap();
        // a Galois-invariant sum
        let mut s = CycNum::zero(&ctx5);
        for a in 1..5 {
            let t = CycNum::theta(&ctx5, a);
            let d = &t - &CycNum::one(&ctx5);
            s += &(&t * &(&d * &d).inv().unwrap());
        }
        assert_eq!(s.rational_of().unwrap(), rint(-2));
    }

    #[test]
    fn errors() {
        let c3 = CycContext::new(3).unwrap();
        let c4 = CycContext::new(4).unwrap();
        assert!(CycNum::zero(&c3).inv().is_err());
        assert!(CycNum::one(&c3).try_add(&CycNum::one(&c4)).is_err());
    }

    #[test]
    fn rat_strings() {
        assert_eq!(fmt_rat(&rat(-6, 4)), "-3/2");
        assert_eq!(fmt_rat(&rint(5)), "5");
        assert_eq!(parse_rat("-3/2").unwrap(), rat(-3, 2));
        assert_eq!(parse_rat("7").unwrap(), rint(7));
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("x").is_err());
    }

    fn cyc(r: u32, v: Vec<(i64, i64)>) -> CycNum {
        let ctx = CycContext::new(r).unwrap();
        let q: Vec<Rat> = v.into_iter().map(|(n, d)| rat(n, d)).collect();
        CycNum::from_coeffs(&ctx, &q)
    }

    fn arb_coeffs() -> impl Strategy<Value = Vec<(i64, i64)>> {
        prop::collection::vec((-9i64..10, 1i64..6), 1..12)
    }

    proptest! {
        #[test]
        fn field_axioms(r in 2u32..=12, a in arb_coeffs(), b in arb_coeffs(), c in arb_coeffs()) {
            let (a, b, c) = (cyc(r, a), cyc(r, b), cyc(r, c));
            prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
            prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
            prop_assert_eq!(&a * &b, &b * &a);
            if !a.is_zero() {
                prop_assert!((&a * &a.inv().unwrap()).is_one());
            }
        }

        #[test]
        fn rational_embedding_roundtrip(r in 1u32..=12, n in -1000i64..1000, d in 1i64..100) {
            let ctx = CycContext::new(r).unwrap();
            prop_assert_eq!(CycNum::from_rat(&ctx, rat(n, d)).rational_of().unwrap(), rat(n, d));
        }
    }

    #[test]
    fn exhaustive_small_field() {
        // all elements of Q(ζ_3) with coefficients in {-1,0,1}
        let ctx = CycContext::new(3).unwrap();
        let vals = [-1i64, 0, 1];
        let mut els = vec![];
        for &x in &vals {
            for &y in &vals {
                els.push(CycNum::from_coeffs(&ctx, &[rint(x), rint(y)]));
            }
        }
        for a in &els {
            for b in &els {
                for c in &els {
                    assert_eq!(&(a * b) * c, a * &(b * c));
                    assert_eq!(a * &(b + c), &(a * b) + &(a * c));
                }
                if !a.is_zero() {
                    assert!((a * &a.inv().unwrap()).is_one());
                }
            }
        }
    }
}

//! W(gl_r) modes in the Heisenberg representation, the shifted (r,s)
//! representation obtained by conjugation, and the constraint check
//! H^i_k Z = 0 against a partition function built from a correlator table.
//!
//! Conjugation is realised on the generators only: J_{−s} ↦ J_{−s} + F01[s]/ℏ,
//! the pole part of ω_{½,1} enters Z as ℏ⁰ linear terms, and the zero mode J_0
//! (which has no variable) acts as the scalar Σ_ℓ ℏ^{ℓ−1} S_{1,ℓ}.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use num_traits::{One, Zero};

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::exact::{fmt_rat, rint, CycContext, CycNum, Rat};
use crate::exec::Exec;
use crate::report::Report;
use crate::series::{chi, CorrelatorTable};
use crate::tr::set_partitions;

/// (ℏ-power, x indices, ∂ indices), both index lists nondecreasing.
pub type WeylKey = (i32, Vec<u32>, Vec<u32>);

/// A normal-ordered differential operator Σ c ℏ^h x_{a…} ∂_{b…}.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeylPoly {
    terms: BTreeMap<WeylKey, Rat>,
}

impl WeylPoly {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_term(&mut self, h: i32, mut xs: Vec<u32>, mut ds: Vec<u32>, c: &Rat) {
        if c.is_zero() {
            return;
        }
        xs.sort_unstable();
        ds.sort_unstable();
        let key = (h, xs, ds);
        let v = self.terms.entry(key.clone()).or_insert_with(Rat::zero);
        *v += c;
        if v.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&WeylKey, &Rat)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, h: i32, xs: &[u32], ds: &[u32]) -> Rat {
        self.terms
            .get(&(h, xs.to_vec(), ds.to_vec()))
            .cloned()
            .unwrap_or_else(Rat::zero)
    }

    pub fn min_hbar(&self) -> Option<i32> {
        self.terms.keys().map(|k| k.0).min()
    }

    /// The ℏ^h slice.
    pub fn at_hbar(&self, h: i32) -> WeylPoly {
        WeylPoly {
            terms: self
                .terms
                .iter()
                .filter(|(k, _)| k.0 == h)
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Largest variable index touched.
    pub fn max_index(&self) -> u32 {
        self.terms
            .keys()
            .flat_map(|(_, x, d)| x.iter().chain(d))
            .copied()
            .max()
            .unwrap_or(0)
    }
}

/// Ψ^{(j)}_r(a_{2j+1}, …, a_i) with i = 2j + a.len(), computed in Q(ζ_r).
pub fn psi_coefficient(ctx: &Arc<CycContext>, j: usize, a: &[i64]) -> Result<CycNum> {
    let r = ctx.r() as usize;
    let i = 2 * j + a.len();
    if i > r {
        return Err(Error::InvalidParameter(format!(
            "Ψ needs i = 2j + |a| ≤ r, got i={i}, r={r}"
        )));
    }
    let theta: Vec<CycNum> = (0..r as i64).map(|m| CycNum::theta(ctx, m)).collect();
    let mut pair = vec![vec![CycNum::zero(ctx); r]; r];
    for (m, row) in pair.iter_mut().enumerate() {
        for (n, p) in row.iter_mut().enumerate() {
            if m != n {
                let d = &theta[m] - &theta[n];
                *p = &CycNum::theta(ctx, (m + n) as i64) * &(&d * &d).inv()?;
            }
        }
    }
    let mut total = CycNum::zero(ctx);
    let mut used = vec![false; r];
    let mut ms = vec![0usize; i];
    fn rec(
        pos: usize,
        j: usize,
        a: &[i64],
        ctx: &Arc<CycContext>,
        pair: &[Vec<CycNum>],
        used: &mut Vec<bool>,
        ms: &mut Vec<usize>,
        total: &mut CycNum,
    ) {
        if pos == ms.len() {
            let mut t = CycNum::one(ctx);
            for k in 0..j {
                t = &t * &pair[ms[2 * k]][ms[2 * k + 1]];
            }
            let e: i64 = a
                .iter()
                .zip(&ms[2 * j..])
                .map(|(al, &m)| -(m as i64) * al)
                .sum();
            *total += &(&t * &CycNum::theta(ctx, e));
            return;
        }
        for m in 0..used.len() {
            if !used[m] {
                used[m] = true;
                ms[pos] = m;
                rec(pos + 1, j, a, ctx, pair, used, ms, total);
                used[m] = false;
            }
        }
    }
    rec(0, j, a, ctx, &pair, &mut used, &mut ms, &mut total);
    let fact: i64 = (1..=i as i64).product();
    Ok(total.scale(&Rat::new(1.into(), fact.into())))
}

/// Memoized rational Ψ values, keyed by j and the sorted residues of a mod r.
pub struct PsiMemo {
    ctx: Arc<CycContext>,
    cache: Mutex<HashMap<(usize, Vec<i64>), Rat>>,
}

impl PsiMemo {
    pub fn new(ctx: &Arc<CycContext>) -> Self {
        PsiMemo {
            ctx: ctx.clone(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Ψ is symmetric in its arguments and depends on them only mod r; the value must be rational.
    pub fn get(&self, j: usize, a: &[i64]) -> Result<Rat> {
        let r = self.ctx.r() as i64;
        let mut key: Vec<i64> = a.iter().map(|x| x.rem_euclid(r)).collect();
        key.sort_unstable();
        if let Some(v) = self.cache.lock().unwrap().get(&(j, key.clone())) {
            return Ok(v.clone());
        }
        let v = psi_coefficient(&self.ctx, j, &key)?.rational_of()?;
        self.cache.lock().unwrap().insert((j, key), v.clone());
        Ok(v)
    }
}

/// λ as a list of parts together with the mode floors −⌊s(i−1)/r⌋, i = 1..r.
pub fn lambda_partition(r: u32, s: u32) -> Result<(Vec<u32>, Vec<i64>)> {
    if r < 2 || s < 1 || s > r + 1 {
        return Err(Error::InvalidParameter(format!(
            "(r,s)=({r},{s}) out of range"
        )));
    }
    let lam: Vec<u32> = if s == 1 {
        vec![r]
    } else if s == r + 1 {
        vec![1; r as usize]
    } else {
        let (rp, rpp) = (r / s, r % s);
        if rpp != 1 && rpp != s - 1 {
            return Err(Error::Inadmissible { r, s });
        }
        (0..s).map(|t| if t < rpp { rp + 1 } else { rp }).collect()
    };
    let floors: Vec<i64> = (1..=r as i64)
        .map(|i| -((s as i64 * (i - 1)).div_euclid(r as i64)))
        .collect();
    for (idx, f) in floors.iter().enumerate() {
        let i = idx as u32 + 1;
        // λ(i) = least t with λ_1 + … + λ_t ≥ i
        let mut acc = 0;
        let li = lam.iter().position(|&p| {
            acc += p;
            acc >= i
        });
        let li = li.map(|t| t as i64 + 1).unwrap_or(i64::MAX);
        if 1 - li != *f {
            return Err(Error::Inadmissible { r, s });
        }
    }
    Ok((lam, floors))
}

/// Which W-mode: W^{ℏ,i}_k.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModeSpec {
    pub i: u32,
    pub k: i64,
}

impl ModeSpec {
    pub fn lowest_k(r: u32, s: u32, i: u32) -> i64 {
        -((s as i64 * (i as i64 - 1)).div_euclid(r as i64))
    }

    /// Index of the leading term ℏ J_{rk+s(i−1)}.
    pub fn leading_index(&self, r: u32, s: u32) -> i64 {
        r as i64 * self.k + s as i64 * (self.i as i64 - 1)
    }
}

/// Nondecreasing tuples of length q from [lo, hi] with the given sum.
fn sorted_tuples(q: usize, lo: i64, hi: i64, sum: i64) -> Vec<Vec<i64>> {
    let mut out = vec![];
    let mut cur = vec![];
    fn rec(q: usize, lo: i64, hi: i64, sum: i64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if q == 0 {
            if sum == 0 {
                out.push(cur.clone());
            }
            return;
        }
        for v in lo..=hi {
            // the remaining q−1 entries are all ≥ v and ≤ hi
            let rest = sum - v;
            let q1 = q as i64 - 1;
            if rest < v * q1 {
                break;
            }
            if rest > hi * q1 {
                continue;
            }
            cur.push(v);
            rec(q - 1, v, hi, rest, cur, out);
            cur.pop();
        }
    }
    rec(q, lo, hi, sum, &mut cur, &mut out);
    out
}

fn distinct_orderings(t: &[i64]) -> Rat {
    let mut n: i64 = (1..=t.len() as i64).product();
    let mut i = 0;
    while i < t.len() {
        let mut j = i;
        while j < t.len() && t[j] == t[i] {
            j += 1;
        }
        n /= (1..=(j - i) as i64).product::<i64>();
        i = j;
    }
    rint(n)
}

/// ρ(W^{ℏ,i}_k(S)): the mode of the Heisenberg representation restricted to J_p with
/// |p| ≤ window, conjugated, shifted, and truncated above ℏ^order.
pub fn build_shifted_mode(
    curve: &Curve,
    psi: &PsiMemo,
    m: ModeSpec,
    window: u32,
    order: i32,
) -> Result<WeylPoly> {
    let (r, s) = (curve.r(), curve.s());
    if !curve.spec().is_undeformed() {
        return Err(Error::Unsupported(
            "W-modes are built for undeformed curves only".into(),
        ));
    }
    if m.i < 1 || m.i > r {
        return Err(Error::InvalidParameter(format!(
            "mode W^{}: need 1 ≤ i ≤ r",
            m.i
        )));
    }
    if m.k < ModeSpec::lowest_k(r, s, m.i) {
        return Err(Error::InvalidParameter(format!(
            "mode W^{}_{} below the admissible floor",
            m.i, m.k
        )));
    }
    let lead = m.leading_index(r, s);
    if lead > window as i64 {
        return Err(Error::InvalidParameter(format!(
            "window {window} cannot hold the leading term J_{lead}"
        )));
    }
    let i = m.i as usize;
    let f01 = curve.f01()[&s].clone();
    // J_0 as an ℏ-series: h ↦ coefficient of ℏ^h
    let j0: Vec<(i32, Rat)> = curve
        .shifts()
        .iter()
        .filter(|((ii, _), _)| *ii == 1)
        .map(|(&(_, l), v)| (l as i32 - 1, v.clone()))
        .collect();
    let pref = Rat::one() / Rat::from_integer(num_bigint::BigInt::from(r).pow(m.i));
    let fact = |n: usize| -> Rat { rint((1..=n as i64).product()) };
    let mut out = WeylPoly::new();
    for j in 0..=i / 2 {
        let q = i - 2 * j;
        let comb = fact(i) / (fact(j) * fact(q) * rint(1i64 << j));
        let tuples = if q == 0 {
            if m.k == 0 {
                vec![vec![]]
            } else {
                vec![]
            }
        } else {
            sorted_tuples(q, -(window as i64), window as i64, r as i64 * m.k)
        };
        for t in tuples {
            let ps = psi.get(j, &t)?;
            if ps.is_zero() {
                continue;
            }
            let c = &pref * &comb * &ps * distinct_orderings(&t);
            // expand :∏ J_p: with the affine substitutions
            let mut acc: Vec<(i32, Rat, Vec<u32>, Vec<u32>)> =
                vec![(m.i as i32, c, vec![], vec![])];
            for &p in &t {
                let mut next = vec![];
                for (h, c, xs, ds) in &acc {
                    if p > 0 {
                        let mut d = ds.clone();
                        d.push(p as u32);
                        next.push((*h, c.clone(), xs.clone(), d));
                    } else if p == 0 {
                        for (dh, v) in &j0 {
                            next.push((h + dh, c * v, xs.clone(), ds.clone()));
                        }
                    } else {
                        let mut x = xs.clone();
                        x.push((-p) as u32);
                        next.push((*h, c * rint(-p), x, ds.clone()));
                        if -p == s as i64 {
                            next.push((h - 1, c * &f01, xs.clone(), ds.clone()));
                        }
                    }
                }
                acc = next;
            }
            for (h, c, xs, ds) in acc {
                if h <= order {
                    out.add_term(h, xs, ds, &c);
                }
            }
        }
    }
    if m.k == 0 {
        for (&(ii, l), v) in curve.shifts() {
            if ii == m.i && l as i32 <= order {
                out.add_term(l as i32, vec![], vec![], &-v.clone());
            }
        }
    }
    if let Some(h) = out.min_hbar() {
        if h < 1 {
            return Err(Error::Unsupported(format!(
                "mode W^{}_{} keeps a term at ℏ^{h}",
                m.i, m.k
            )));
        }
    }
    Ok(out)
}

/// Polynomial in x with ℏ-graded rational coefficients: (ℏ-power, sorted monomial) ↦ c.
type Poly = HashMap<(i32, Vec<u32>), Rat>;

fn poly_add(p: &mut Poly, k: (i32, Vec<u32>), c: Rat) {
    if c.is_zero() {
        return;
    }
    let v = p.entry(k.clone()).or_insert_with(Rat::zero);
    *v += c;
    if v.is_zero() {
        p.remove(&k);
    }
}

fn merge_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v.sort_unstable();
    v
}

fn poly_mul(a: &Poly, b: &Poly, hmax: i32) -> Poly {
    let mut out = Poly::new();
    for ((ha, ma), ca) in a {
        for ((hb, mb), cb) in b {
            if ha + hb <= hmax {
                poly_add(&mut out, (ha + hb, merge_sorted(ma, mb)), ca * cb);
            }
        }
    }
    out
}

fn poly_deriv(p: &Poly, var: u32) -> Poly {
    let mut out = Poly::new();
    for ((h, mono), c) in p {
        let mult = mono.iter().filter(|&&v| v == var).count();
        if mult == 0 {
            continue;
        }
        let mut m = mono.clone();
        let pos = m.iter().position(|&v| v == var).unwrap();
        m.remove(pos);
        poly_add(&mut out, (*h, m), c * rint(mult as i64));
    }
    out
}

/// log Z = Σ ℏ^{2g−2+n}/n! F_{g,n}[k] x_k, plus the ℏ⁰ pole part of ω_{½,1}.
fn free_energy(table: &CorrelatorTable, chi_cap: i64) -> Poly {
    let curve = table.curve();
    let s = curve.s();
    let mut f = Poly::new();
    for i in 2..=curve.r() {
        let v = curve.shift_value(i, 1);
        if !v.is_zero() {
            let v = if i % 2 == 1 { v } else { -v };
            poly_add(&mut f, (0, vec![s * (i - 1)]), v);
        }
    }
    for (g2, n, keys, v) in table.canonical_entries() {
        let c = chi(g2, n);
        if c > chi_cap {
            continue;
        }
        // Σ over orderings / n! leaves 1/|Aut(keys)|
        let t: Vec<i64> = keys.iter().map(|&k| k as i64).collect();
        let aut = rint((1..=n as i64).product()) / distinct_orderings(&t);
        poly_add(&mut f, (c as i32, keys), v / aut);
    }
    f
}

struct ZAction<'a> {
    f: &'a Poly,
    order: i32,
    cache: HashMap<Vec<u32>, Poly>,
}

impl ZAction<'_> {
    /// ∂_B log Z for a sorted multiset B.
    fn deriv(&mut self, b: &[u32]) -> Poly {
        if let Some(p) = self.cache.get(b) {
            return p.clone();
        }
        let p = match b.split_last() {
            None => self.f.clone(),
            Some((&last, rest)) => poly_deriv(&self.deriv(rest), last),
        };
        self.cache.insert(b.to_vec(), p.clone());
        p
    }

    /// Z^{−1} ∂_{ds} Z truncated at ℏ^hmax: a sum over set partitions of products of derivatives.
    fn apply(&mut self, ds: &[u32], hmax: i32) -> Poly {
        let mut out = Poly::new();
        for blocks in set_partitions(ds.len()) {
            let mut acc = Poly::new();
            acc.insert((0, vec![]), Rat::one());
            for blk in blocks {
                let mut b: Vec<u32> = blk.iter().map(|&t| ds[t]).collect();
                b.sort_unstable();
                let d = self.deriv(&b);
                acc = poly_mul(&acc, &d, hmax);
                if acc.is_empty() {
                    break;
                }
            }
            for (k, c) in acc {
                poly_add(&mut out, k, c);
            }
        }
        out
    }

    /// Z^{−1} H Z through ℏ^order.
    fn residual(&mut self, h: &WeylPoly) -> Poly {
        let mut out = Poly::new();
        for ((hp, xs, ds), c) in h.terms() {
            let hmax = self.order - hp;
            if hmax < 0 {
                continue;
            }
            for ((h2, mono), c2) in self.apply(ds, hmax) {
                poly_add(&mut out, (hp + h2, merge_sorted(xs, &mono)), c * &c2);
            }
        }
        out
    }
}

/// Window M: the larger of r·K + s(r−1) + max key and the bound (r−1)P + s(r−1)
/// under which no J_p with |p| > M can act nontrivially on Z.
pub fn window(curve: &Curve, k_max: i64, max_key: u32) -> u32 {
    let (r, s) = (curve.r() as i64, curve.s() as i64);
    let p = (max_key as i64).max(s * (r - 1));
    (r * k_max + s * (r - 1) + max_key as i64).max((r - 1) * p + s * (r - 1)) as u32
}

/// Checks H^i_k Z ≡ 0 mod ℏ^{order+1} for i ∈ [r] and admissible k ≤ k_max.
pub fn verify_w_constraints(
    table: &CorrelatorTable,
    order: i32,
    k_max: i64,
    exec: Exec,
) -> Vec<Report> {
    let curve = table.curve();
    let name = "w-constraint";
    if !curve.spec().is_undeformed() || curve.is_r_airy() && !curve.shifts().is_empty() {
        return vec![Report::fail(
            name,
            "setup",
            "the W verifier needs an undeformed curve",
        )];
    }
    if (table.chi_max() as i64) < order as i64 - 1 {
        return vec![Report::fail(
            name,
            "setup",
            format!(
                "table has χ ≤ {}, order {order} needs χ ≤ {}",
                table.chi_max(),
                order - 1
            ),
        )];
    }
    let f = free_energy(table, order as i64 - 1);
    let max_key = f
        .keys()
        .flat_map(|(_, m)| m.iter().copied())
        .max()
        .unwrap_or(0);
    let m_win = window(curve, k_max, max_key);
    let psi = PsiMemo::new(curve.ctx());
    let (r, s) = (curve.r(), curve.s());
    let mut jobs = vec![];
    for i in 1..=r {
        for k in ModeSpec::lowest_k(r, s, i)..=k_max {
            jobs.push(ModeSpec { i, k });
        }
    }
    exec.map(jobs, |m| {
        let l = format!("i={} k={}", m.i, m.k);
        let h = match build_shifted_mode(curve, &psi, m, m_win, order) {
            Ok(h) => h,
            Err(e) => return Report::fail(name, l, e.to_string()),
        };
        let mut z = ZAction {
            f: &f,
            order,
            cache: HashMap::new(),
        };
        let res = z.residual(&h);
        match res.iter().min_by(|a, b| a.0.cmp(b.0)) {
            None => Report::pass(name, l),
            Some(((hp, mono), c)) => {
                Report::fail(name, l, format!("ℏ^{hp} x{mono:?}: {}", fmt_rat(c)))
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::CurveSpec;
    use crate::exact::rat;
    use crate::report::all_pass;
    use crate::tr::run;

    #[test]
    fn psi_examples() {
        let c2 = CycContext::new(2).unwrap();
        assert_eq!(
            psi_coefficient(&c2, 1, &[]).unwrap().rational_of().unwrap(),
            rat(-1, 4)
        );
        for r in 2..=6 {
            let ctx = CycContext::new(r).unwrap();
            for a in -3..=7i64 {
                let v = psi_coefficient(&ctx, 0, &[a])
                    .unwrap()
                    .rational_of()
                    .unwrap();
                assert_eq!(
                    v,
                    if a.rem_euclid(r as i64) == 0 {
                        rint(r as i64)
                    } else {
                        rint(0)
                    }
                );
            }
        }
    }

    #[test]
    fn psi_values_are_rational() {
        for r in 2..=5u32 {
            let ctx = CycContext::new(r).unwrap();
            let memo = PsiMemo::new(&ctx);
            for i in 1..=r as usize {
                for j in 0..=i / 2 {
                    let q = i - 2 * j;
                    for code in 0..(r as usize).pow(q as u32) {
                        let a: Vec<i64> = (0..q)
                            .map(|t| ((code / (r as usize).pow(t as u32)) % r as usize) as i64)
                            .collect();
                        memo.get(j, &a).unwrap();
                    }
                }
            }
        }
        assert!(psi_coefficient(&CycContext::new(3).unwrap(), 2, &[]).is_err());
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(lambda_partition(5, 2).unwrap().0, vec![3, 2]);
        assert_eq!(lambda_partition(4, 1).unwrap().0, vec![4]);
        assert_eq!(lambda_partition(3, 4).unwrap().0, vec![1, 1, 1]);
        assert!(matches!(
            lambda_partition(7, 5),
            Err(Error::Inadmissible { .. })
        ));
        for r in 2..=12u32 {
            for s in 1..=r + 1 {
                let adm = s == 1 || r % s == 1 || r % s == s - 1;
                assert_eq!(lambda_partition(r, s).is_ok(), adm, "({r},{s})");
                if let Ok((lam, _)) = lambda_partition(r, s) {
                    assert_eq!(lam.iter().sum::<u32>(), r);
                }
            }
        }
    }

    #[test]
    fn leading_term_is_signed_hbar_j() {
        for spec in [
            CurveSpec::new(2, 3),
            CurveSpec::new(3, 1),
            CurveSpec::new(3, 2),
            CurveSpec::new(4, 3),
        ] {
            let c = spec.validate().unwrap();
            let psi = PsiMemo::new(c.ctx());
            let (r, s) = (c.r(), c.s());
            for i in 1..=r {
                for k in ModeSpec::lowest_k(r, s, i)..=2 {
                    let m = ModeSpec { i, k };
                    let w = build_shifted_mode(&c, &psi, m, 20, 4).unwrap();
                    let lead = w.at_hbar(1);
                    let idx = m.leading_index(r, s) as u32;
                    let mut want = WeylPoly::new();
                    // with F01[s] = r the leading term is (−1)^{i−1} ℏ J; J_0 acts as 0 unshifted
                    if idx > 0 {
                        want.add_term(1, vec![], vec![idx], &rint(if i % 2 == 1 { 1 } else { -1 }));
                    }
                    assert_eq!(lead, want, "({r},{s}) W^{i}_{k}");
                    assert!(w.min_hbar().map_or(true, |h| h >= 1));
                }
            }
        }
    }

    #[test]
    fn zero_table_leaves_the_shift() {
        // against F ≡ 0 the shifted and unshifted residuals differ by −Σ ℏ^ℓ S_{i,ℓ}
        let sh = CurveSpec::new(3, 1)
            .shift(2, 2, rint(3))
            .shift(3, 4, rint(1))
            .validate()
            .unwrap();
        let plain = CurveSpec::new(3, 1).validate().unwrap();
        let residual = |c: &Arc<Curve>, i: u32| {
            let mut t = CorrelatorTable::new(c.clone());
            t.set_chi_max(3);
            let f = free_energy(&t, 3);
            let mut z = ZAction {
                f: &f,
                order: 4,
                cache: HashMap::new(),
            };
            let h =
                build_shifted_mode(c, &PsiMemo::new(c.ctx()), ModeSpec { i, k: 0 }, 12, 4).unwrap();
            z.residual(&h)
        };
        for (i, h, v) in [(2, 2, rint(-3)), (3, 4, rint(-1))] {
            let (a, b) = (residual(&sh, i), residual(&plain, i));
            let mut diff = a.clone();
            for (k, c) in b {
                poly_add(&mut diff, k, -c);
            }
            assert_eq!(diff.len(), 1);
            assert_eq!(diff[&(h, vec![])], v);
        }
    }

    #[test]
    fn airy_virasoro() {
        let c = CurveSpec::new(2, 3).validate().unwrap();
        let t = run(&c, 3, Exec::Sequential).unwrap();
        let rep = verify_w_constraints(&t, 4, 3, Exec::Sequential);
        assert!(all_pass(&rep), "{:?}", rep.iter().find(|r| !r.passed()));
    }

    #[test]
    fn shifted_constraints() {
        for spec in [
            CurveSpec::new(2, 1)
                .shift(1, 1, rint(1))
                .shift(2, 2, rint(2)),
            CurveSpec::new(3, 1)
                .shift(1, 1, rint(1))
                .shift(2, 2, rat(1, 2)),
            CurveSpec::new(3, 1)
                .shift(2, 1, rint(1))
                .shift(3, 1, rint(2))
                .shift(1, 2, rint(1)),
            CurveSpec::new(3, 2).shift(1, 1, rint(1)),
        ] {
            let c = spec.validate().unwrap();
            let t = run(&c, 2, Exec::Sequential).unwrap();
            let rep = verify_w_constraints(&t, 3, 2, Exec::Sequential);
            assert!(
                all_pass(&rep),
                "{:?} {:?}",
                c.spec(),
                rep.iter().find(|r| !r.passed())
            );
        }
    }

    #[test]
    fn window_stability() {
        let c = CurveSpec::new(3, 1)
            .shift(1, 1, rint(1))
            .shift(2, 2, rint(1))
            .validate()
            .unwrap();
        let mut t = run(&c, 2, Exec::Sequential).unwrap();
        // corrupt one entry so the residuals are nonzero and comparable
        t.set_value(0, &[1, 1, 1], rint(7), true);
        let f = free_energy(&t, 2);
        let psi = PsiMemo::new(c.ctx());
        let m = window(&c, 2, 3);
        for i in 1..=3 {
            let mode = ModeSpec { i, k: 1 };
            let a = ZAction {
                f: &f,
                order: 3,
                cache: HashMap::new(),
            }
            .residual(&build_shifted_mode(&c, &psi, mode, m, 3).unwrap());
            let b = ZAction {
                f: &f,
                order: 3,
                cache: HashMap::new(),
            }
            .residual(&build_shifted_mode(&c, &psi, mode, m + 6, 3).unwrap());
            assert_eq!(a, b);
        }
    }

    #[test]
    fn conjugation_on_generators() {
        // T_s J_m T_s^{-1} = J_m + δ_{m,−s} F01[s]/ℏ: W^1_k with k = −1 is ℏ/r Σ Ψ J_{−r}
        let c = CurveSpec::new(3, 4).validate().unwrap();
        let psi = PsiMemo::new(c.ctx());
        let w = build_shifted_mode(&c, &psi, ModeSpec { i: 1, k: 0 }, 8, 4).unwrap();
        assert!(w.is_empty());
        let c = CurveSpec::new(2, 1).validate().unwrap();
        let psi = PsiMemo::new(c.ctx());
        // W^2_{0} contains (ℏ/2)² J_{−1}J_{1} terms; the J_{−1} ↦ J_{−1} + 2/ℏ substitution
        // produces the leading −ℏ J_1 and keeps ℏ² x_1 ∂_1
        let w = build_shifted_mode(&c, &psi, ModeSpec { i: 2, k: 0 }, 6, 4).unwrap();
        assert_eq!(w.coeff(1, &[], &[1]), rint(-1));
        assert!(!w.coeff(2, &[1], &[1]).is_zero());
    }

    #[test]
    fn flipped_shift_is_detected() {
        let good = CurveSpec::new(3, 1)
            .shift(1, 1, rint(1))
            .shift(2, 2, rint(2))
            .validate()
            .unwrap();
        let t = run(&good, 3, Exec::Sequential).unwrap();
        let flipped = CurveSpec::new(3, 1)
            .shift(1, 1, rint(1))
            .shift(2, 2, rint(-2))
            .validate()
            .unwrap();
        let mut t2 = CorrelatorTable::new(flipped);
        for (&(g2, n), tensor) in t.entries() {
            t2.insert(g2, n, tensor.clone());
        }
        t2.set_chi_max(3);
        let rep = verify_w_constraints(&t2, 4, 3, Exec::Sequential);
        let bad = rep.iter().find(|r| !r.passed()).unwrap();
        // S_{2,2} first enters at ℏ², in the zero mode W^2_0
        assert_eq!(bad.location, "i=2 k=0");
        assert!(bad.witness.as_deref().unwrap().starts_with("ℏ^2"));
    }

    #[test]
    fn perturbed_entry_fails() {
        let c = CurveSpec::new(2, 3).validate().unwrap();
        let t = run(&c, 3, Exec::Sequential).unwrap();
        for (g2, _, keys, v) in t.canonical_entries() {
            let mut t2 = t.clone();
            t2.set_value(g2, &keys, v + rint(1), true);
            assert!(
                !all_pass(&verify_w_constraints(&t2, 4, 3, Exec::Sequential)),
                "{g2} {keys:?}"
            );
        }
    }
}

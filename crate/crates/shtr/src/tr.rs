//! The shifted topological recursion engine and its loop-equation verifiers.
//!
//! Spectator dependence is carried as tensor slots: a stable correlator
//! contributes F[k…] times ξ_{−k}(θ^a z) on its sheet arguments, and
//! ω_{0,2}(θ^a z, z_j) = Σ_k k ξ_k(θ^a z) ξ_{−k}(z_j) puts key k in slot j.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;
use std::sync::Arc;

use num_traits::Zero;

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::exact::{fmt_rat, rint, CycNum, Rat};
use crate::exec::Exec;
use crate::report::Report;
use crate::series::{chi, permutations, CorrelatorTable, LaurentForm, Tensor};

/// Spectator keys (length n, 0 = unassigned) to a form in z.
pub type FormTensor = HashMap<Vec<u32>, LaurentForm>;

/// Set partitions of {0..m}, as lists of blocks.
pub fn set_partitions(m: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = vec![];
    let mut rgs = vec![0usize; m];
    fn rec(i: usize, max: usize, rgs: &mut Vec<usize>, out: &mut Vec<Vec<Vec<usize>>>) {
        let m = rgs.len();
        if i == m {
            let nb = rgs.iter().copied().max().map_or(0, |x| x + 1);
            let mut blocks = vec![vec![]; nb];
            for (j, &b) in rgs.iter().enumerate() {
                blocks[b].push(j);
            }
            out.push(blocks);
            return;
        }
        let hi = if i == 0 { 0 } else { max + 1 };
        for b in 0..=hi {
            rgs[i] = b;
            rec(i + 1, max.max(b), rgs, out);
        }
    }
    if m == 0 {
        return vec![vec![]];
    }
    rec(0, 0, &mut rgs, &mut out);
    out
}

/// Weak compositions of `total` into `parts` nonnegative parts.
pub fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    if parts == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = vec![];
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

#[derive(Clone, Debug)]
enum Factor {
    Omega01(i64),
    Half(i64),
    Bergman(i64, i64),
    /// ω_{0,2}(θ^a z, z_slot).
    Spectator(i64, usize),
    Stable {
        g2: u32,
        sheets: Vec<i64>,
        slots: Vec<usize>,
    },
}

type Entries = Rc<Vec<(Vec<u32>, LaurentForm)>>;

/// Evaluates 𝒲, 𝒲′ and ℰ combinations against a read-only table.
pub struct Evaluator<'a> {
    curve: &'a Curve,
    table: &'a CorrelatorTable,
    stable_cache: RefCell<HashMap<(u32, Vec<i64>, usize), Entries>>,
    xi_cache: RefCell<HashMap<(u32, i64), LaurentForm>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(table: &'a CorrelatorTable) -> Self {
        Evaluator {
            curve: table.curve(),
            table,
            stable_cache: RefCell::new(HashMap::new()),
            xi_cache: RefCell::new(HashMap::new()),
        }
    }

    fn xi_at(&self, k: u32, a: i64) -> Result<LaurentForm> {
        if let Some(f) = self.xi_cache.borrow().get(&(k, a)) {
            return Ok(f.clone());
        }
        let f = self.curve.xi_minus(k)?.sheet_substitute(a);
        self.xi_cache.borrow_mut().insert((k, a), f.clone());
        Ok(f)
    }

    /// ω_{g,m}(θ^{a_1}z, …, z_slots…) with spectator keys in local order.
    fn stable_entries(&self, g2: u32, sheets: &[i64], ns: usize) -> Result<Entries> {
        let key = (g2, sheets.to_vec(), ns);
        if let Some(e) = self.stable_cache.borrow().get(&key) {
            return Ok(e.clone());
        }
        let n = (sheets.len() + ns) as u32;
        let t = self
            .table
            .get(g2, n)
            .ok_or(Error::MissingDependency { two_g: g2, n })?;
        let ctx = self.curve.ctx();
        let mut acc: BTreeMap<Vec<u32>, LaurentForm> = BTreeMap::new();
        for (keys, v) in t {
            let mut f = LaurentForm::rat_monomial(ctx, v.clone(), 0, 0);
            for (p, &a) in sheets.iter().enumerate() {
                f = f.mul(&self.xi_at(keys[p], a)?);
            }
            let spec = keys[sheets.len()..].to_vec();
            match acc.get_mut(&spec) {
                Some(x) => x.add_assign_ref(&f),
                None => {
                    acc.insert(spec, f);
                }
            }
        }
        if n == 1 {
            // the residue part S_{1,2g} dz/z of ω_{g,1}, invisible to the ξ-basis table
            let sv = self.curve.shift_value(1, g2);
            if !sv.is_zero() {
                let f = LaurentForm::rat_monomial(ctx, sv, -1, 1);
                acc.entry(vec![])
                    .or_insert_with(|| LaurentForm::zero(ctx, 1))
                    .add_assign_ref(&f);
            }
        }
        let e: Entries = Rc::new(acc.into_iter().filter(|(_, f)| !f.is_zero()).collect());
        self.stable_cache.borrow_mut().insert(key, e.clone());
        Ok(e)
    }

    /// Entries of a finite factor with the global slots they occupy.
    fn finite_entries(&self, f: &Factor) -> Result<(Vec<usize>, Entries)> {
        let one = |form: LaurentForm| -> Entries { Rc::new(vec![(vec![], form)]) };
        Ok(match f {
            Factor::Omega01(a) => (vec![], one(self.curve.omega01().sheet_substitute(*a))),
            Factor::Half(a) => (vec![], one(self.curve.omega_half().sheet_substitute(*a))),
            Factor::Bergman(a, b) => (vec![], one(self.curve.omega02_sheets(*a, *b))),
            Factor::Stable { g2, sheets, slots } => (
                slots.clone(),
                self.stable_entries(*g2, sheets, slots.len())?,
            ),
            Factor::Spectator(..) => unreachable!(),
        })
    }

    /// Adds ∏ factors into `out`, exact through exponent `cap`.
    fn add_term(&self, factors: &[Factor], n: usize, cap: i64, out: &mut FormTensor) -> Result<()> {
        let ctx = self.curve.ctx();
        let mut finite = vec![];
        let mut spect = vec![];
        for f in factors {
            match f {
                Factor::Spectator(a, j) => spect.push((*a, *j)),
                _ => {
                    let (slots, e) = self.finite_entries(f)?;
                    let Some(v) = e.iter().filter_map(|(_, x)| x.valuation()).min() else {
                        return Ok(());
                    };
                    finite.push((slots, e, v));
                }
            }
        }
        // spectator factors start at z^0
        let total: i64 = finite.iter().map(|f| f.2).sum();
        let mut acc: Vec<(Vec<u32>, LaurentForm)> = vec![(vec![0; n], LaurentForm::one(ctx))];
        let mut remaining = total;
        for (slots, e, v) in &finite {
            remaining -= v;
            let c = cap - remaining;
            let mut next = Vec::with_capacity(acc.len() * e.len());
            for (k, f) in &acc {
                for (lk, g) in e.iter() {
                    let p = f.mul_capped(g, c);
                    if p.is_zero() {
                        continue;
                    }
                    let mut k = k.clone();
                    for (s, kk) in slots.iter().zip(lk) {
                        k[*s] = *kk;
                    }
                    next.push((k, p));
                }
            }
            acc = next;
            if acc.is_empty() {
                return Ok(());
            }
        }
        for (a, j) in spect {
            let c = cap - remaining;
            let mut next = vec![];
            for (k, f) in &acc {
                let Some(fv) = f.valuation() else { continue };
                // ξ_k(θ^a z) has exponent k−1
                let kmax = c - fv + 1;
                for kk in 1..=kmax.max(0) {
                    let coeff = CycNum::theta(ctx, a * kk).scale(&rint(kk));
                    let g = LaurentForm::monomial(coeff, kk - 1, 1);
                    let p = f.mul_capped(&g, c);
                    if p.is_zero() {
                        continue;
                    }
                    let mut k = k.clone();
                    k[j] = kk as u32;
                    next.push((k, p));
                }
            }
            acc = next;
        }
        for (k, f) in acc {
            match out.get_mut(&k) {
                Some(x) => x.add_assign_ref(&f),
                None => {
                    out.insert(k, f);
                }
            }
        }
        Ok(())
    }

    /// 𝒲_{g,m,n}(θ^{sheets} z; z_[n]) when `full`, else 𝒲′ (ω_{0,1} factors omitted),
    /// exact through exponent `cap`.
    pub fn w_sum(
        &self,
        g2: i64,
        sheets: &[i64],
        n: usize,
        full: bool,
        cap: i64,
    ) -> Result<FormTensor> {
        let m = sheets.len();
        let mut out = FormTensor::new();
        if g2 < 0 {
            return Ok(out);
        }
        for blocks in set_partitions(m) {
            let p = blocks.len();
            let gtot = g2 - 2 * m as i64 + 2 * p as i64;
            if gtot < 0 {
                continue;
            }
            let assignments = (p as u64).pow(n as u32);
            for mut code in 0..assignments {
                let mut slots = vec![vec![]; p];
                for j in 0..n {
                    slots[(code % p as u64) as usize].push(j);
                    code /= p as u64;
                }
                'comp: for comp in compositions(gtot as u32, p) {
                    let mut factors = vec![];
                    for (b, blk) in blocks.iter().enumerate() {
                        let gb = comp[b];
                        let sh: Vec<i64> = blk.iter().map(|&i| sheets[i]).collect();
                        let nb = sh.len() + slots[b].len();
                        let chi_b = gb as i64 - 2 + nb as i64;
                        let f = match (gb, nb) {
                            (0, 1) if full => Factor::Omega01(sh[0]),
                            (0, 1) => continue 'comp,
                            (1, 1) => Factor::Half(sh[0]),
                            (0, 2) if sh.len() == 2 => Factor::Bergman(sh[0], sh[1]),
                            (0, 2) => Factor::Spectator(sh[0], slots[b][0]),
                            _ if chi_b > 0 => Factor::Stable {
                                g2: gb,
                                sheets: sh,
                                slots: slots[b].clone(),
                            },
                            _ => continue 'comp,
                        };
                        factors.push(f);
                    }
                    self.add_term(&factors, n, cap, &mut out)?;
                }
            }
        }
        out.retain(|_, f| !f.is_zero());
        Ok(out)
    }

    /// ℰ^i_{g,n}: the sum of 𝒲_{g,i,n} over i-element subsets of the fiber.
    pub fn e_sum(&self, i: usize, g2: i64, n: usize, cap: i64) -> Result<FormTensor> {
        let r = self.curve.r() as usize;
        let mut out = FormTensor::new();
        for mask in 0u32..(1 << r) {
            if mask.count_ones() as usize != i {
                continue;
            }
            let sheets: Vec<i64> = (0..r as i64).filter(|a| mask >> a & 1 == 1).collect();
            merge(&mut out, self.w_sum(g2, &sheets, n, true, cap)?);
        }
        out.retain(|_, f| !f.is_zero());
        Ok(out)
    }

    /// The integrand T_k(z) whose residues against z^{k0} give −F_{g,n+1}[k0, k].
    fn integrand(&self, g2: u32, n: usize) -> Result<FormTensor> {
        let r = self.curve.r() as i64;
        let cap = -2;
        let mut out = FormTensor::new();
        for mask in 1u32..(1 << (r - 1)) {
            let z: Vec<i64> = (1..r).filter(|a| mask >> (a - 1) & 1 == 1).collect();
            let mut sheets = vec![0];
            sheets.extend(&z);
            let kv = self.curve.kernel_valuation(z.len());
            let w = self.w_sum(g2 as i64, &sheets, n, false, cap - kv)?;
            let Some(wv) = w.values().filter_map(|f| f.valuation()).min() else {
                continue;
            };
            let kernel = self.curve.recursion_kernel(&z, cap - wv)?;
            for (k, f) in w {
                let p = f.mul_capped(&kernel, cap);
                merge_one(&mut out, k, p);
            }
        }
        if n == 0 {
            let full: Vec<i64> = (1..r).collect();
            let shift = self.shift_term(g2, &full, cap)?;
            if !shift.is_zero() {
                merge_one(&mut out, vec![], shift.neg());
            }
        }
        out.retain(|_, f| !f.is_zero());
        Ok(out)
    }

    /// Σ_i S_{i,2g} (r dz/z)^i (−ω_{0,1}(z))^{r−i} / ∏_{a≠0}(ω_{0,1}(θ^a z) − ω_{0,1}(z)).
    fn shift_term(&self, g2: u32, others: &[i64], cap: i64) -> Result<LaurentForm> {
        let ctx = self.curve.ctx();
        let r = self.curve.r();
        let w = self.curve.omega01().neg();
        let mut num = LaurentForm::zero(ctx, r as i32);
        for i in 1..=r {
            let sv = self.curve.shift_value(i, g2);
            if sv.is_zero() {
                continue;
            }
            let ri = Rat::from_integer(num_bigint::BigInt::from(r).pow(i));
            let t = LaurentForm::rat_monomial(ctx, ri * sv, -(i as i64), i as i32)
                .mul(&w.pow_capped(r - i, i64::MAX));
            num.add_assign_ref(&t);
        }
        let Some(nv) = num.valuation() else {
            return Ok(num);
        };
        let kernel = self.curve.recursion_kernel(others, cap - nv)?;
        Ok(num.mul_capped(&kernel, cap))
    }
}

fn merge_one(out: &mut FormTensor, k: Vec<u32>, f: LaurentForm) {
    if f.is_zero() {
        return;
    }
    match out.get_mut(&k) {
        Some(x) => x.add_assign_ref(&f),
        None => {
            out.insert(k, f);
        }
    }
}

fn merge(out: &mut FormTensor, other: FormTensor) {
    for (k, f) in other {
        merge_one(out, k, f);
    }
}

/// One recursion step: the full tensor F_{g,n+1}[k0, k_1..k_n].
pub fn tr_step(table: &CorrelatorTable, g2: u32, n: u32) -> Result<Tensor> {
    if chi(g2, n + 1) <= 0 {
        return Err(Error::InvalidParameter(format!(
            "(2g,n+1)=({g2},{}) is unstable",
            n + 1
        )));
    }
    let ev = Evaluator::new(table);
    let t = ev.integrand(g2, n as usize)?;
    let mut out = Tensor::new();
    for (k, f) in t {
        if k.contains(&0) {
            return Err(Error::Unsupported(format!(
                "unassigned spectator slot in {k:?}"
            )));
        }
        for (e, c) in f.terms() {
            if e > -2 {
                continue;
            }
            let v = -c.rational_of()?;
            if !v.is_zero() {
                let mut key = vec![(-e - 1) as u32];
                key.extend(&k);
                out.insert(key, v);
            }
        }
    }
    Ok(out)
}

/// Fills the table for 0 < χ ≤ chi_max, level by level; steps within a level run under `exec`.
pub fn run(curve: &Arc<Curve>, chi_max: u32, exec: Exec) -> Result<CorrelatorTable> {
    match run_partial(curve, chi_max, exec) {
        (t, None) => Ok(t),
        (_, Some((_, e))) => Err(e),
    }
}

/// Like `run`, but keeps the levels completed before the first failing one and
/// returns that level's χ with the error. Unchecked curves typically end this way.
pub fn run_partial(
    curve: &Arc<Curve>,
    chi_max: u32,
    exec: Exec,
) -> (CorrelatorTable, Option<(u32, Error)>) {
    let mut table = CorrelatorTable::new(curve.clone());
    for c in 1..=chi_max {
        let level: Vec<(u32, u32)> = CorrelatorTable::stable_indices(c)
            .into_iter()
            .filter(|&(g, n)| chi(g, n) == c as i64)
            .collect();
        let snapshot = &table;
        let results = exec.map(level.clone(), |(g2, n)| tr_step(snapshot, g2, n - 1));
        let mut done = vec![];
        for ((g2, n), t) in level.into_iter().zip(results) {
            match t {
                Ok(t) => done.push((g2, n, t)),
                Err(e) => return (table, Some((c, e))),
            }
        }
        for (g2, n, t) in done {
            table.insert(g2, n, t);
        }
        table.set_chi_max(c);
    }
    (table, None)
}

fn loc(i: usize, g2: u32, n: u32) -> String {
    format!("i={i} 2g={g2} n={n}")
}

fn witness(k: &[u32], e: i64, c: &CycNum) -> String {
    format!("keys {k:?} z^{e}: {c}")
}

/// The (2g, n) spectator indices whose loop equations are checked: every stored
/// ω_{g,n+1} plus (½, 0).
fn loop_indices(table: &CorrelatorTable) -> Vec<(u32, u32)> {
    let mut v: Vec<(u32, u32)> = table.entries().map(|(&(g, n), _)| (g, n - 1)).collect();
    v.push((1, 0));
    v.sort_by_key(|&(g, n)| (chi(g, n + 1), n));
    v
}

/// Shifted loop equations: ℰ^i_{g,n} − δ_{n,0} S_{i,2g}(dx/x)^i vanishes below
/// z^{r(⌊s(i−1)/r⌋+1) − i}; for undeformed curves also ℰ¹ − δ_{n,0}S_{1,2g} dx/x = 0 exactly.
pub fn verify_loop_equations(table: &CorrelatorTable, exec: Exec) -> Vec<Report> {
    let curve = table.curve();
    let (r, s) = (curve.r() as i64, curve.s() as i64);
    let mut jobs = vec![];
    for (g2, n) in loop_indices(table) {
        for i in 1..=r as usize {
            jobs.push((i, g2, n, false));
        }
        if curve.spec().is_undeformed() && chi(g2, n + 1) > 0 {
            jobs.push((1, g2, n, true));
        }
    }
    exec.map(jobs, |(i, g2, n, exact)| {
        let ev = Evaluator::new(table);
        let ctx = curve.ctx();
        let name = if exact {
            "loop-equation-E1-exact"
        } else {
            "loop-equation"
        };
        let cap = if exact {
            i64::MAX / 4
        } else {
            r * ((s * (i as i64 - 1)).div_euclid(r) + 1) - i as i64 - 1
        };
        let mut e = match ev.e_sum(i, g2 as i64, n as usize, cap) {
            Ok(e) => e,
            Err(err) => return Report::fail(name, loc(i, g2, n), err.to_string()),
        };
        if n == 0 {
            let sv = curve.shift_value(i as u32, g2);
            if !sv.is_zero() {
                let ri = Rat::from_integer(num_bigint::BigInt::from(r).pow(i as u32));
                let sh = LaurentForm::rat_monomial(ctx, ri * sv, -(i as i64), i as i32);
                merge_one(&mut e, vec![], sh.neg());
            }
        }
        let mut keys: Vec<&Vec<u32>> = e.keys().collect();
        keys.sort();
        for k in keys {
            if let Some((ex, c)) = e[k].terms().find(|(ex, _)| *ex <= cap) {
                return Report::fail(name, loc(i, g2, n), witness(k, ex, c));
            }
        }
        Report::pass(name, loc(i, g2, n))
    })
}

/// Every stored tensor must equal its symmetrization.
pub fn check_symmetry(table: &CorrelatorTable) -> Vec<Report> {
    let mut out = vec![];
    for (&(g2, n), t) in table.entries() {
        let mut bad = None;
        'outer: for (k, v) in t {
            for p in permutations(k) {
                let w = t.get(&p).cloned().unwrap_or_else(Rat::zero);
                if &w != v {
                    bad = Some(format!(
                        "F{k:?} = {} but F{p:?} = {}",
                        fmt_rat(v),
                        fmt_rat(&w)
                    ));
                    break 'outer;
                }
            }
        }
        let l = format!("2g={g2} n={n}");
        out.push(match bad {
            None => Report::pass("symmetry", l),
            Some(w) => Report::fail("symmetry", l, w),
        });
    }
    out
}

/// Σ_{Z∋z} 𝒲′_{g,|Z|,n}(Z) ∏_{z′∈𝔣(z)∖Z}(ω_{0,1}(z′)−ω_{0,1}(z)) = Σ_i ℰ^i_{g,n} (−ω_{0,1}(z))^{r−i},
/// compared coefficient-wise through exponent `cap`.
pub fn check_identity(
    table: &CorrelatorTable,
    g2: u32,
    n: u32,
    cap: i64,
) -> Result<Option<String>> {
    let curve = table.curve();
    let ev = Evaluator::new(table);
    let r = curve.r() as i64;
    let w01 = curve.omega01();
    let v01 = w01.valuation().unwrap_or(0);
    let mut lhs = FormTensor::new();
    for mask in 0u32..(1 << (r - 1)) {
        let mut z = vec![0i64];
        z.extend((1..r).filter(|a| mask >> (a - 1) & 1 == 1));
        let rest: Vec<i64> = (1..r).filter(|a| !z.contains(a)).collect();
        let w = ev.w_sum(
            g2 as i64,
            &z,
            n as usize,
            false,
            cap - v01 * rest.len() as i64,
        )?;
        let mut prod = LaurentForm::one(curve.ctx());
        for &a in &rest {
            prod = prod.mul(&curve.kernel_factor(a));
        }
        for (k, f) in w {
            merge_one(&mut lhs, k, f.mul_capped(&prod, cap));
        }
    }
    let mut rhs = FormTensor::new();
    let mw = w01.neg();
    for i in 1..=r as usize {
        let e = ev.e_sum(i, g2 as i64, n as usize, cap - v01 * (r - i as i64))?;
        let p = mw.pow_capped(r as u32 - i as u32, i64::MAX);
        for (k, f) in e {
            merge_one(&mut rhs, k, f.mul_capped(&p, cap));
        }
    }
    for (k, f) in rhs {
        merge_one(&mut lhs, k, f.neg());
    }
    lhs.retain(|_, f| !f.is_zero());
    let mut keys: Vec<&Vec<u32>> = lhs.keys().collect();
    keys.sort();
    if let Some(k) = keys.first() {
        let (e, c) = lhs[*k].terms().next().unwrap();
        return Ok(Some(witness(k, e, c)));
    }
    Ok(None)
}

/// Symmetry of every tensor and the combinatorial identity for every stored (2g, n).
pub fn verify_symmetry_and_identity(table: &CorrelatorTable, exec: Exec) -> Vec<Report> {
    let mut out = check_symmetry(table);
    let curve = table.curve();
    // the window read by the recursion residue, plus one sheet period of margin
    let (r, s) = (curve.r() as i64, curve.s() as i64);
    let cap = (s - 1) * (r - 1) + r;
    let jobs: Vec<(u32, u32)> = loop_indices(table);
    out.extend(exec.map(jobs, |(g2, n)| {
        let l = format!("2g={g2} n={n}");
        match check_identity(table, g2, n, cap) {
            Ok(None) => Report::pass("combinatorial-identity", l),
            Ok(Some(w)) => Report::fail("combinatorial-identity", l, w),
            Err(e) => Report::fail("combinatorial-identity", l, e.to_string()),
        }
    }));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::CurveSpec;
    use crate::exact::rat;
    use crate::report::all_pass;

    #[test]
    fn partitions_and_compositions() {
        let bell = [1, 1, 2, 5, 15, 52];
        for (m, &b) in bell.iter().enumerate() {
            assert_eq!(set_partitions(m).len(), b);
        }
        assert_eq!(compositions(3, 2).len(), 4);
        assert_eq!(compositions(0, 3), vec![vec![0, 0, 0]]);
        assert!(compositions(2, 0).is_empty());
    }

    #[test]
    fn airy_omega03() {
        let c = CurveSpec::new(2, 3).validate().unwrap();
        let t = run(&c, 1, Exec::Sequential).unwrap();
        let w = t.get(0, 3).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[&vec![1, 1, 1]], rat(-1, 2));
        assert!(t.get(1, 2).unwrap().is_empty());
    }

    #[test]
    fn chi_zero_is_empty() {
        let c = CurveSpec::new(2, 3).validate().unwrap();
        let t = run(&c, 0, Exec::Sequential).unwrap();
        assert_eq!(t.entries().count(), 0);
        assert!(tr_step(&t, 0, 1).is_err());
    }

    #[test]
    fn missing_dependency() {
        let c = CurveSpec::new(2, 3).validate().unwrap();
        let t = CorrelatorTable::new(c);
        assert!(matches!(
            tr_step(&t, 0, 3),
            Err(Error::MissingDependency { .. })
        ));
    }

    #[test]
    fn empty_genus_sum() {
        let c = CurveSpec::new(3, 2).validate().unwrap();
        let t = CorrelatorTable::new(c);
        assert!(Evaluator::new(&t)
            .w_sum(-1, &[0, 1], 1, false, 10)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn single_sheet_w_is_the_correlator() {
        let c = CurveSpec::new(3, 1)
            .shift(1, 1, rint(1))
            .validate()
            .unwrap();
        let t = run(&c, 2, Exec::Sequential).unwrap();
        let ev = Evaluator::new(&t);
        let w = ev.w_sum(0, &[0], 2, false, 100).unwrap();
        // ω_{0,3}(z, z1, z2) = Σ F[k0,k1,k2] ξ_{−k0}(z) in slots (k1,k2)
        for (keys, v) in t.get(0, 3).unwrap() {
            let f = &w[&keys[1..].to_vec()];
            assert_eq!(f.coeff(-(keys[0] as i64) - 1).rational_of().unwrap(), *v);
        }
    }

    #[test]
    fn zero_shifts_match_unshifted() {
        let a = CurveSpec::new(3, 1).validate().unwrap();
        let b = CurveSpec::new(3, 1)
            .shift(2, 2, rint(0))
            .validate()
            .unwrap();
        let ta = run(&a, 2, Exec::Sequential).unwrap();
        let tb = run(&b, 2, Exec::Sequential).unwrap();
        assert_eq!(ta.canonical_entries(), tb.canonical_entries());
    }

    #[test]
    fn shifted_omega11_on_21() {
        // ω_{1,1} picks up a term linear in S_{2,2} and quadratic in S_{1,1}
        let base = run(
            &CurveSpec::new(2, 1).validate().unwrap(),
            1,
            Exec::Sequential,
        )
        .unwrap();
        let sh = CurveSpec::new(2, 1)
            .shift(1, 1, rint(1))
            .shift(2, 2, rint(1))
            .validate()
            .unwrap();
        let t = run(&sh, 1, Exec::Sequential).unwrap();
        assert_ne!(base.get(2, 1), t.get(2, 1));
        let sq = CurveSpec::new(2, 1)
            .shift(1, 1, rint(2))
            .validate()
            .unwrap();
        let t2 = run(&sq, 1, Exec::Sequential).unwrap();
        let sq1 = CurveSpec::new(2, 1)
            .shift(1, 1, rint(1))
            .validate()
            .unwrap();
        let t1 = run(&sq1, 1, Exec::Sequential).unwrap();
        // quadratic dependence on σ: f(2) − f(0) = 4 (f(1) − f(0)) for the σ² part
        for (k, v0) in base.get(2, 1).unwrap() {
            let v1 = t1.value(2, k);
            let v2 = t2.value(2, k);
            assert_eq!(&v2 - v0, (&v1 - v0) * rint(4), "key {k:?}");
        }
    }

    #[test]
    fn small_runs_verify() {
        for spec in [
            CurveSpec::new(2, 3),
            CurveSpec::new(2, 1)
                .shift(1, 1, rat(1, 2))
                .shift(2, 2, rint(3)),
            CurveSpec::new(3, 2).shift(1, 1, rint(1)),
        ] {
            let c = spec.validate().unwrap();
            let t = run(&c, 2, Exec::Sequential).unwrap();
            let le = verify_loop_equations(&t, Exec::Sequential);
            assert!(all_pass(&le), "{:?}", le.iter().find(|r| !r.passed()));
            let si = verify_symmetry_and_identity(&t, Exec::Sequential);
            assert!(all_pass(&si), "{:?}", si.iter().find(|r| !r.passed()));
        }
    }

    #[test]
    fn higher_first_shift_enters_as_residue() {
        // S_{1,2} only shows up through the dz/z part of ω_{1,1}
        let c = CurveSpec::new(3, 2)
            .shift(1, 2, rint(5))
            .validate()
            .unwrap();
        let t = run(&c, 2, Exec::Sequential).unwrap();
        let plain = run(
            &CurveSpec::new(3, 2).validate().unwrap(),
            2,
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(t.get(2, 1), plain.get(2, 1));
        assert_ne!(t.get(2, 2), plain.get(2, 2));
        assert!(all_pass(&verify_loop_equations(&t, Exec::Sequential)));
    }

    #[test]
    fn forced_shift_breaks_symmetry() {
        let c = CurveSpec::new(5, 3)
            .shift(1, 1, rint(1))
            .build_unchecked()
            .unwrap();
        let t = run(&c, 1, Exec::Sequential).unwrap();
        let bad = check_symmetry(&t)
            .into_iter()
            .find(|r| !r.passed())
            .unwrap();
        assert_eq!(bad.location, "2g=1 n=2");
        assert_eq!(
            bad.witness.as_deref(),
            Some("F[1, 2] = 6/5 but F[2, 1] = 1/5")
        );
        let (partial, err) = run_partial(&c, 3, Exec::Sequential);
        assert_eq!(partial.chi_max(), 2);
        assert!(matches!(err, Some((3, Error::NotRational(_)))));
    }
}

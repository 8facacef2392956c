//! Brute-force shifted TR on undeformed (r,s) curves. Every term of the recursion
//! is expanded as a raw multivariate Laurent series in (z, z₀, w₁…w_n): the kernel
//! numerator ∫₀^z ω₀,₂(·,z₀) and the mixed ω₀,₂(θ^a z, w) are series truncated by
//! a valuation budget, W′ is enumerated straight from its definition, and the result
//! is read off as coefficients of z₀^{−k₀−1}∏w^{−k−1}.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::Zero;
use shtr::curve::Curve;
use shtr::exact::{rint, CycContext, CycNum, Rat};
use shtr::series::{CorrelatorTable, Tensor};

/// Exponents of (z, z₀, w₁, …).
type Mono = Vec<i64>;
type Poly = BTreeMap<Mono, CycNum>;

struct Oracle<'a> {
    ctx: Arc<CycContext>,
    r: i64,
    s: i64,
    shifts: &'a BTreeMap<(u32, u32), Rat>,
    /// ω_{g,m} computed so far, full tensors.
    done: BTreeMap<(u32, u32), Tensor>,
}

fn add(p: &mut Poly, m: Mono, v: CycNum) {
    if v.is_zero() {
        return;
    }
    match p.get_mut(&m) {
        Some(x) => {
            *x += &v;
            if x.is_zero() {
                p.remove(&m);
            }
        }
        None => {
            p.insert(m, v);
        }
    }
}

fn z_val(p: &Poly) -> Option<i64> {
    p.keys().map(|m| m[0]).min()
}

/// Product keeping z-exponents ≤ cap.
fn mul_capped(a: &Poly, b: &Poly, cap: i64) -> Poly {
    let mut out = Poly::new();
    for (ma, va) in a {
        for (mb, vb) in b {
            if ma[0] + mb[0] > cap {
                continue;
            }
            let m: Mono = ma.iter().zip(mb).map(|(x, y)| x + y).collect();
            add(&mut out, m, va * vb);
        }
    }
    out
}

/// A factor of a recursion term: either finite, or a series in z generated up to a cap.
enum Factor {
    Finite(Poly),
    /// ω₀,₂(θ^a z, w_j): Σ_{k≥1} k θ^{ak} z^{k−1} w_j^{−k−1}.
    MixedBergman { a: i64, j: usize },
    /// ∫₀^z ω₀,₂(·, z₀) = Σ_{k≥1} z^k z₀^{−k−1}.
    KernelNumerator,
}

impl Factor {
    fn val(&self) -> i64 {
        match self {
            Factor::Finite(p) => z_val(p).unwrap_or(0),
            Factor::MixedBergman { .. } => 0,
            Factor::KernelNumerator => 1,
        }
    }
}

impl<'a> Oracle<'a> {
    fn theta(&self, m: i64) -> CycNum {
        CycNum::theta(&self.ctx, m)
    }

    fn mono(&self, dims: usize, z: i64) -> Mono {
        let mut m = vec![0; dims];
        m[0] = z;
        m
    }

    fn expand(&self, f: &Factor, dims: usize, cap: i64) -> Poly {
        let mut p = Poly::new();
        match f {
            Factor::Finite(q) => {
                for (m, v) in q {
                    if m[0] <= cap {
                        p.insert(m.clone(), v.clone());
                    }
                }
            }
            Factor::MixedBergman { a, j } => {
                for k in 1..=cap + 1 {
                    let mut m = self.mono(dims, k - 1);
                    m[2 + j] = -k - 1;
                    add(&mut p, m, self.theta(a * k).scale(&rint(k)));
                }
            }
            Factor::KernelNumerator => {
                for k in 1..=cap {
                    let mut m = self.mono(dims, k);
                    m[1] = -k - 1;
                    add(&mut p, m, CycNum::one(&self.ctx));
                }
            }
        }
        p
    }

    /// Residue in z of the product, using only as many series terms as can reach z^{−1}.
    fn residue(&self, factors: &[Factor], dims: usize) -> Poly {
        let vals: Vec<i64> = factors.iter().map(Factor::val).collect();
        let total: i64 = vals.iter().sum();
        let mut acc = Poly::new();
        acc.insert(vec![0; dims], CycNum::one(&self.ctx));
        for (i, f) in factors.iter().enumerate() {
            let rest: i64 = vals[i + 1..].iter().sum();
            let own_cap = -1 - (total - vals[i]);
            let e = self.expand(f, dims, own_cap);
            acc = mul_capped(&acc, &e, -1 - rest);
            if acc.is_empty() {
                return acc;
            }
        }
        let mut out = Poly::new();
        for (m, v) in acc {
            if m[0] == -1 {
                let mut m = m;
                m[0] = 0;
                add(&mut out, m, v);
            }
        }
        out
    }

    /// ω_{½,1}(θ^a z) with its shift poles.
    fn omega_half(&self, a: i64, dims: usize) -> Poly {
        let mut p = Poly::new();
        for i in 1..=self.r {
            let v = self.shifts.get(&(i as u32, 1)).cloned().unwrap_or_else(Rat::zero);
            let v = if i % 2 == 1 { v } else { -v };
            let e = -self.s * (i - 1) - 1;
            // (θ^a z)^e θ^a dz
            add(&mut p, self.mono(dims, e), self.theta(a * (e + 1)).scale(&v));
        }
        p
    }

    /// ω_{g,m}(θ^{a₁}z, …, w_{j₁}, …) from the computed table, including S_{1,2g}dz/z for m = 1.
    fn stable(&self, g2: u32, sheets: &[i64], specs: &[usize], dims: usize) -> Poly {
        let m = (sheets.len() + specs.len()) as u32;
        let mut p = Poly::new();
        if let Some(t) = self.done.get(&(g2, m)) {
            for (keys, v) in t {
                let mut mono = vec![0; dims];
                let mut c = CycNum::from_rat(&self.ctx, v.clone());
                for (i, &a) in sheets.iter().enumerate() {
                    let k = keys[i] as i64;
                    mono[0] += -k - 1;
                    c = &c * &self.theta(-a * k);
                }
                for (i, &j) in specs.iter().enumerate() {
                    mono[2 + j] += -(keys[sheets.len() + i] as i64) - 1;
                }
                add(&mut p, mono, c);
            }
        }
        if m == 1 && g2 >= 2 {
            if let Some(v) = self.shifts.get(&(1, g2)) {
                add(&mut p, self.mono(dims, -1), CycNum::from_rat(&self.ctx, v.clone()));
            }
        }
        p
    }

    /// All W′ terms for the sheets `zs` (the base sheet 0 first) and n spectators, as factor lists.
    fn w_prime(&self, g2: u32, zs: &[i64], n: usize, dims: usize) -> Vec<Vec<Factor>> {
        let mut out = vec![];
        for part in set_partitions(zs.len()) {
            let p = part.len();
            // Σ_S (2g_S − 2) = 2g − 2|Z|
            let budget = g2 as i64 - 2 * zs.len() as i64 + 2 * p as i64;
            if budget < 0 {
                continue;
            }
            for assign in 0..(p as u64).pow(n as u32) {
                let mut owner = vec![0; n];
                let mut x = assign;
                for o in owner.iter_mut() {
                    *o = (x % p as u64) as usize;
                    x /= p as u64;
                }
                for genera in compositions(budget as u32, p) {
                    let mut factors = vec![];
                    let mut skip = false;
                    for (si, block) in part.iter().enumerate() {
                        let sheets: Vec<i64> = block.iter().map(|&b| zs[b]).collect();
                        let specs: Vec<usize> = (0..n).filter(|&j| owner[j] == si).collect();
                        let g = genera[si];
                        let m = sheets.len() + specs.len();
                        match (g, m) {
                            (0, 1) => {
                                skip = true;
                                break;
                            }
                            (0, 2) if specs.is_empty() => {
                                let (a, b) = (sheets[0], sheets[1]);
                                let d = &self.theta(a) - &self.theta(b);
                                let c = &self.theta(a + b) * &(&d * &d).inv().unwrap();
                                let mut q = Poly::new();
                                add(&mut q, self.mono(dims, -2), c);
                                factors.push(Factor::Finite(q));
                            }
                            (0, 2) => factors.push(Factor::MixedBergman { a: sheets[0], j: specs[0] }),
                            (1, 1) => factors.push(Factor::Finite(self.omega_half(sheets[0], dims))),
                            _ => factors.push(Factor::Finite(self.stable(g, &sheets, &specs, dims))),
                        }
                    }
                    if !skip {
                        out.push(factors);
                    }
                }
            }
        }
        out
    }

    /// 1/∏_{a∈Z}(ω₀,₁(θ^a z) − ω₀,₁(z)) = 1/∏ r(θ^{as} − 1) z^{s−1}.
    fn kernel_denominator(&self, others: &[i64], dims: usize) -> Factor {
        let mut c = CycNum::one(&self.ctx);
        for &a in others {
            let d = (&self.theta(a * self.s) - &CycNum::one(&self.ctx)).scale(&rint(self.r));
            c = &c * &d.inv().unwrap();
        }
        let mut p = Poly::new();
        add(&mut p, self.mono(dims, -(self.s - 1) * others.len() as i64), c);
        Factor::Finite(p)
    }

    fn step(&self, g2: u32, n: usize) -> Tensor {
        let dims = 2 + n;
        let r = self.r;
        let mut total = Poly::new();
        for mask in 1u32..(1 << (r - 1)) {
            let others: Vec<i64> = (1..r).filter(|a| mask >> (a - 1) & 1 == 1).collect();
            let mut zs = vec![0];
            zs.extend(&others);
            for w in self.w_prime(g2, &zs, n, dims) {
                let mut f = vec![Factor::KernelNumerator, self.kernel_denominator(&others, dims)];
                f.extend(w);
                for (m, v) in self.residue(&f, dims) {
                    add(&mut total, m, -v);
                }
            }
        }
        if n == 0 {
            // + Res Σ_i S_{i,2g} K^r (r dz/z)^i (−r z^{s−1} dz)^{r−i}
            let all: Vec<i64> = (1..r).collect();
            for i in 1..=r {
                let Some(v) = self.shifts.get(&(i as u32, g2)) else { continue };
                let c = rint(r).pow(r as i32) * v * rint(if (r - i) % 2 == 0 { 1 } else { -1 });
                let mut q = Poly::new();
                add(&mut q, self.mono(dims, -i + (self.s - 1) * (r - i)), CycNum::from_rat(&self.ctx, c));
                let f = vec![Factor::KernelNumerator, self.kernel_denominator(&all, dims), Factor::Finite(q)];
                for (m, v) in self.residue(&f, dims) {
                    add(&mut total, m, v);
                }
            }
        }
        let mut t = Tensor::new();
        for (m, v) in total {
            let keys: Vec<i64> = m[1..].iter().map(|e| -e - 1).collect();
            assert!(keys.iter().all(|&k| k >= 1), "term outside the ξ-basis: {m:?}");
            let q = v.rational_of().expect("F values are rational");
            t.insert(keys.iter().map(|&k| k as u32).collect(), q);
        }
        t
    }
}

pub fn set_partitions(m: usize) -> Vec<Vec<Vec<usize>>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = vec![];
    for p in set_partitions(m - 1) {
        for i in 0..p.len() {
            let mut q = p.clone();
            q[i].push(m - 1);
            out.push(q);
        }
        let mut q = p;
        q.push(vec![m - 1]);
        out.push(q);
    }
    out
}

fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
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

/// Runs the brute-force recursion through χ ≤ chi_max on an undeformed curve.
pub fn brute_force_table(curve: &Arc<Curve>, chi_max: u32) -> CorrelatorTable {
    assert!(curve.spec().is_undeformed(), "the oracle covers undeformed curves");
    let mut o = Oracle {
        ctx: curve.ctx().clone(),
        r: curve.r() as i64,
        s: curve.s() as i64,
        shifts: curve.shifts(),
        done: BTreeMap::new(),
    };
    let mut table = CorrelatorTable::new(curve.clone());
    for c in 1..=chi_max as i64 {
        for n in 1..=(c + 2) {
            let g2 = c + 2 - n;
            if g2 < 0 {
                continue;
            }
            let t = o.step(g2 as u32, n as usize - 1);
            o.done.insert((g2 as u32, n as u32), t.clone());
            table.insert(g2 as u32, n as u32, t);
        }
        table.set_chi_max(c as u32);
    }
    table
}

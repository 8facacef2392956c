//! The ℏ-connection ℏd − Φ_ℏ of the quantum curve in system form: diagonalization
//! data, the formal gauge to all orders in ℏ, the amplitudes W₁, W₂ built from
//! M_ℏ = Û e_a Û⁻¹, and the determinant diagnostic for the topological type property.
//!
//! Matrices hold dz-coefficients. The eigenvector matrix V is used without its
//! scalar prefactor θ z^{(r−s)(r+1)/2}/Δ(θ)^{1/r}: the constant part cancels in
//! every observable, and its logarithmic derivative is restored in Ŷ₁.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_traits::{One, Zero};
use serde::Serialize;

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::exact::{gcd, rat, rint, CycContext, CycNum, Rat};
use crate::qcurve::alpha_floor;
use crate::report::Report;
use crate::series::{CorrelatorTable, HSeries, LaurentForm};

/// r×r matrix of Laurent functions of z.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    r: usize,
    e: Vec<LaurentForm>,
}

impl Mat {
    pub fn zero(ctx: &Arc<CycContext>, r: usize) -> Self {
        Mat {
            r,
            e: vec![LaurentForm::zero(ctx, 0); r * r],
        }
    }

    pub fn identity(ctx: &Arc<CycContext>, r: usize) -> Self {
        let mut m = Self::zero(ctx, r);
        for i in 0..r {
            m.e[i * r + i] = LaurentForm::one(ctx);
        }
        m
    }

    /// The diagonal basis matrix e_{ii}.
    pub fn unit(ctx: &Arc<CycContext>, r: usize, i: usize) -> Self {
        let mut m = Self::zero(ctx, r);
        m.e[i * r + i] = LaurentForm::one(ctx);
        m
    }

    pub fn dim(&self) -> usize {
        self.r
    }

    pub fn get(&self, i: usize, j: usize) -> &LaurentForm {
        &self.e[i * self.r + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: LaurentForm) {
        self.e[i * self.r + j] = v.with_deg(0);
    }

    pub fn add(&self, o: &Self) -> Self {
        Mat {
            r: self.r,
            e: self.e.iter().zip(&o.e).map(|(a, b)| a.add(b)).collect(),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        Mat {
            r: self.r,
            e: self.e.iter().zip(&o.e).map(|(a, b)| a.sub(b)).collect(),
        }
    }

    pub fn scale_rat(&self, q: &Rat) -> Self {
        Mat {
            r: self.r,
            e: self.e.iter().map(|a| a.scale_rat(q)).collect(),
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let r = self.r;
        let ctx = self.e[0].ctx().clone();
        let mut out = Self::zero(&ctx, r);
        for i in 0..r {
            for k in 0..r {
                let a = &self.e[i * r + k];
                if a.is_zero() {
                    continue;
                }
                for j in 0..r {
                    let b = &o.e[k * r + j];
                    if !b.is_zero() {
                        out.e[i * r + j].add_assign_ref(&a.mul(b));
                    }
                }
            }
        }
        out
    }

    /// d/dz entrywise.
    pub fn deriv(&self) -> Self {
        Mat {
            r: self.r,
            e: self.e.iter().map(|a| a.deriv()).collect(),
        }
    }

    /// Entries as functions of θz.
    pub fn sheet_substitute(&self, a: i64) -> Self {
        Mat {
            r: self.r,
            e: self.e.iter().map(|f| f.sheet_substitute(a)).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.e.iter().all(|a| a.is_zero())
    }

    pub fn trace(&self) -> LaurentForm {
        let ctx = self.e[0].ctx().clone();
        (0..self.r).fold(LaurentForm::zero(&ctx, 0), |acc, i| {
            acc.add(&self.e[i * self.r + i])
        })
    }

    /// First nonzero off-diagonal entry.
    pub fn off_diagonal(&self) -> Option<(usize, usize, &LaurentForm)> {
        let r = self.r;
        (0..r * r)
            .find(|&k| k / r != k % r && !self.e[k].is_zero())
            .map(|k| (k / r, k % r, &self.e[k]))
    }
}

/// ℏ-series of matrices, index = ℏ-power 0..=L.
pub type MatSeries = Vec<Mat>;

fn ms_zero(ctx: &Arc<CycContext>, r: usize, order: usize) -> MatSeries {
    vec![Mat::zero(ctx, r); order + 1]
}

fn ms_mul(a: &MatSeries, b: &MatSeries) -> MatSeries {
    let order = a.len().min(b.len()) - 1;
    let ctx = a[0].e[0].ctx().clone();
    let mut out = ms_zero(&ctx, a[0].r, order);
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate().take(order + 1 - i) {
            if !y.is_zero() {
                out[i + j] = out[i + j].add(&x.mul(y));
            }
        }
    }
    out
}

fn ms_const(m: &Mat, order: usize) -> MatSeries {
    let ctx = m.e[0].ctx().clone();
    let mut out = ms_zero(&ctx, m.r, order);
    out[0] = m.clone();
    out
}

/// exp(±ℏ^l u), truncated at ℏ^order.
fn ms_exp(u: &Mat, l: usize, sign: i64, order: usize) -> MatSeries {
    let ctx = u.e[0].ctx().clone();
    let mut out = ms_zero(&ctx, u.r, order);
    let mut p = Mat::identity(&ctx, u.r);
    let mut fact = Rat::one();
    let mut m = 0;
    while m * l <= order {
        out[m * l] = p.scale_rat(&(Rat::one() / &fact));
        m += 1;
        fact *= rint(m as i64);
        p = p.mul(u).scale_rat(&rint(sign));
    }
    out
}

/// Φ_ℏ (as dz-coefficients), the eigenvector data and the deck permutation.
#[derive(Clone, Debug)]
pub struct ConnectionData {
    curve: Arc<Curve>,
    order: usize,
    pub phi: MatSeries,
    pub v: Mat,
    pub v_inv: Mat,
    /// Eigenvalues of φ as dz-coefficients, θ^b r z^{s−1}.
    pub y: Vec<LaurentForm>,
    /// V(θz) = V(z)τ with τ_{c,b} = δ_{c, tau[b]}.
    pub tau: Vec<usize>,
    /// Exponent p of the dropped prefactor z^p of V.
    pub prefactor: Rat,
}

impl ConnectionData {
    pub fn curve(&self) -> &Arc<Curve> {
        &self.curve
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn tau_matrix(&self) -> Mat {
        let ctx = self.curve.ctx();
        let r = self.tau.len();
        let mut m = Mat::zero(ctx, r);
        for (b, &c) in self.tau.iter().enumerate() {
            m.set(c, b, LaurentForm::one(ctx));
        }
        m
    }
}

fn check_wkb_curve(curve: &Curve) -> Result<()> {
    let (r, s) = (curve.r(), curve.s());
    if !curve.spec().is_undeformed() {
        return Err(Error::Unsupported(
            "the ℏ-connection is built for undeformed curves".into(),
        ));
    }
    if s > r + 1 || s == 0 {
        return Err(Error::Unsupported(format!(
            "no ℏ-connection for (r,s)=({r},{s})"
        )));
    }
    Ok(())
}

fn zmono(c: CycNum, e: i64) -> LaurentForm {
    LaurentForm::monomial(c, e, 0)
}

fn fatal(what: &str) -> Error {
    Error::Unsupported(format!("connection data failed its own check: {what}"))
}

/// Builds Φ_ℏ, V, V⁻¹, Y and τ, and checks V·V⁻¹ = Id, V⁻¹φV = Y,
/// V(θz) = V(z)τ and Y(θz) = τ⁻¹Y(z)τ.
pub fn build_connection_data(curve: &Arc<Curve>, order: usize) -> Result<ConnectionData> {
    check_wkb_curve(curve)?;
    let ctx = curve.ctx();
    let (r, s) = (curve.r(), curve.s());
    let (ri, si) = (r as i64, s as i64);
    let n = r as usize;
    let af = |i: u32| alpha_floor(r, s, i);
    // Φ/dx in x-powers, then times dx/dz = r z^{r−1}
    let mut phi = ms_zero(ctx, n, order);
    let dxdz = |e: i64| e * ri + ri - 1;
    let rr = CycNum::from_int(ctx, ri);
    for k in 1..r {
        // superdiagonal row k: x^{⌊α_{r−k}⌋ − ⌊α_{r+1−k}⌋}
        let e = af(r - k) - af(r + 1 - k);
        phi[0].set(k as usize - 1, k as usize, zmono(rr.clone(), dxdz(e)));
    }
    let corner = phi[0].get(n - 1, 0).add(&zmono(rr.clone(), dxdz(-af(1))));
    phi[0].set(n - 1, 0, corner);
    for k in 1..=r {
        let e = af(r) - af(r + 1 - k) - k as i64;
        for l in 1..=order as u32 {
            let v = curve.shift_value(k, l);
            if v.is_zero() {
                continue;
            }
            let v = if k % 2 == 1 { v } else { -v };
            let c = rr.scale(&v);
            let cur = phi[l as usize]
                .get(k as usize - 1, 0)
                .add(&zmono(c, dxdz(e)));
            phi[l as usize].set(k as usize - 1, 0, cur);
        }
    }
    // V_{k,b} = z^{−r⌊α_{r+1−k}⌋} (θ^b y)^k with y = z^{s−r}
    let mut v = Mat::zero(ctx, n);
    let mut v_inv = Mat::zero(ctx, n);
    let rinv = rat(1, ri);
    for k in 1..=r {
        let e = -ri * af(r + 1 - k) + k as i64 * (si - ri);
        for b in 0..r {
            let bk = b as i64 * k as i64;
            v.set(k as usize - 1, b as usize, zmono(CycNum::theta(ctx, bk), e));
            v_inv.set(
                b as usize,
                k as usize - 1,
                zmono(CycNum::theta(ctx, -bk).scale(&rinv), -e),
            );
        }
    }
    let y: Vec<LaurentForm> = (0..r)
        .map(|b| LaurentForm::monomial(CycNum::theta(ctx, b as i64).scale(&rint(ri)), si - 1, 1))
        .collect();
    // V(θz)_{k,b} = V_{k,b+s}
    let tau: Vec<usize> = (0..n).map(|b| (b + s as usize) % n).collect();
    let data = ConnectionData {
        curve: curve.clone(),
        order,
        phi,
        v,
        v_inv,
        y,
        tau,
        prefactor: rat((ri - si) * (ri + 1), 2),
    };

    if data.v.mul(&data.v_inv) != Mat::identity(ctx, n) {
        return Err(fatal("V·V⁻¹ = Id"));
    }
    let conj = data.v_inv.mul(&data.phi[0]).mul(&data.v);
    let mut ymat = Mat::zero(ctx, n);
    for (b, f) in data.y.iter().enumerate() {
        ymat.set(b, b, f.clone());
    }
    if conj != ymat {
        return Err(fatal("φ = V·Y·V⁻¹"));
    }
    let t = data.tau_matrix();
    if data.v.sheet_substitute(1) != data.v.mul(&t) {
        return Err(fatal("V(θz) = V(z)τ"));
    }
    // Y as one-forms: entry b at θz picks up θ^{s} (θ^{s−1} from z^{s−1}, θ from dz)
    for b in 0..n {
        if data.y[b].sheet_substitute(1) != data.y[data.tau[b]] {
            return Err(fatal("Y(θz) = τ⁻¹Y(z)τ"));
        }
    }
    Ok(data)
}

/// The off-diagonal gauge u₁…u_L, the diagonal Ŷ_ℏ and Û_ℏ, Û_ℏ⁻¹.
#[derive(Clone, Debug)]
pub struct Gauge {
    pub u: Vec<Mat>,
    /// Ŷ_ℓ diagonal entries as one-forms, ℓ = 0..=L.
    pub y_hat: Vec<Vec<LaurentForm>>,
    pub u_hat: MatSeries,
    pub u_hat_inv: MatSeries,
    /// Φ^{(L)}, diagonal through ℏ^L.
    pub transformed: MatSeries,
}

/// g⁻¹ A g − ℏ g⁻¹ dg/dz on ℏ-series.
fn gauge_transform(a: &MatSeries, g: &MatSeries, g_inv: &MatSeries) -> MatSeries {
    let mut out = ms_mul(&ms_mul(g_inv, a), g);
    let dg: MatSeries = g.iter().map(Mat::deriv).collect();
    let t = ms_mul(g_inv, &dg);
    for p in 1..out.len() {
        out[p] = out[p].sub(&t[p - 1]);
    }
    out
}

/// Solves Y_{L+1} = Φ^{(L)}_{L+1} + [Y₀, u_{L+1}] + … for off-diagonal u_{L+1},
/// dividing by the eigenvalue differences of Y₀.
pub fn solve_formal_gauge(data: &ConnectionData) -> Result<Gauge> {
    let ctx = data.curve.ctx();
    let n = data.v.dim();
    let order = data.order;
    let s = data.curve.s() as i64;
    let r = data.curve.r() as i64;
    let v = ms_const(&data.v, order);
    let vi = ms_const(&data.v_inv, order);
    let mut cur = gauge_transform(&data.phi, &v, &vi);
    let mut u_hat = v;
    let mut u_hat_inv = vi;
    let mut us = Vec::new();
    for l in 1..=order {
        let c = &cur[l];
        let mut u = Mat::zero(ctx, n);
        for i in 0..n {
            for j in 0..n {
                if i == j || c.get(i, j).is_zero() {
                    continue;
                }
                // y_i − y_j = (θ^i − θ^j) r z^{s−1}
                let d =
                    (&CycNum::theta(ctx, i as i64) - &CycNum::theta(ctx, j as i64)).scale(&rint(r));
                let dinv = d
                    .inv()
                    .map_err(|_| Error::NotInvertible("eigenvalue difference".into()))?;
                u.set(i, j, c.get(i, j).scale(&-dinv).shift(1 - s));
            }
        }
        let e = ms_exp(&u, l, 1, order);
        let ei = ms_exp(&u, l, -1, order);
        cur = gauge_transform(&cur, &e, &ei);
        if let Some((i, j, f)) = cur[l].off_diagonal() {
            return Err(fatal(&format!("ℏ^{l} entry ({i},{j}) not diagonal: {f}")));
        }
        u_hat = ms_mul(&u_hat, &e);
        u_hat_inv = ms_mul(&ei, &u_hat_inv);
        us.push(u);
    }
    let mut y_hat = Vec::new();
    for (p, m) in cur.iter().enumerate() {
        let mut d: Vec<LaurentForm> = (0..n).map(|i| m.get(i, i).clone().with_deg(1)).collect();
        if p == 1 {
            // −ℏ d log z^p of the dropped prefactor
            for f in &mut d {
                f.add_term(-1, &CycNum::from_rat(ctx, -data.prefactor.clone()));
            }
        }
        y_hat.push(d);
    }
    Ok(Gauge {
        u: us,
        y_hat,
        u_hat,
        u_hat_inv,
        transformed: cur,
    })
}

/// M_ℏ(z, e_a) = Û e_a Û⁻¹, with e_a the diagonal unit at index a mod r (e_r ↔ index 0).
pub fn adjoint_solution(u_hat: &MatSeries, u_hat_inv: &MatSeries, a: u32) -> MatSeries {
    let n = u_hat[0].dim();
    let ctx = u_hat[0].get(0, 0).ctx().clone();
    let order = u_hat.len() - 1;
    let e = ms_const(&Mat::unit(&ctx, n, a as usize % n), order);
    ms_mul(&ms_mul(u_hat, &e), u_hat_inv)
}

/// W₁(z.e_a) = (1/ℏ)Tr(M_ℏ Φ_ℏ), powers ℏ^{−1}…ℏ^{L−1}, as one-forms.
pub fn amplitude_w1(data: &ConnectionData, gauge: &Gauge, a: u32) -> HSeries<LaurentForm> {
    let m = adjoint_solution(&gauge.u_hat, &gauge.u_hat_inv, a);
    let prod = ms_mul(&m, &data.phi);
    let mut out = HSeries::new(data.order as i64 - 1);
    for (p, x) in prod.iter().enumerate() {
        out.add_at(p as i64 - 1, &x.trace().with_deg(1));
    }
    out
}

/// Bivariate Laurent polynomial in (z₁, z₂).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Bivar {
    c: BTreeMap<(i64, i64), CycNum>,
}

impl Bivar {
    pub fn add_term(&mut self, e: (i64, i64), v: &CycNum) {
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

    pub fn outer(f: &LaurentForm, g: &LaurentForm) -> Self {
        let mut b = Bivar::default();
        for (e1, v1) in f.terms() {
            for (e2, v2) in g.terms() {
                b.add_term((e1, e2), &(v1 * v2));
            }
        }
        b
    }

    pub fn add_assign(&mut self, o: &Self) {
        for (e, v) in &o.c {
            self.add_term(*e, v);
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut b = Bivar::default();
        for ((a1, a2), v) in &self.c {
            for ((b1, b2), w) in &o.c {
                b.add_term((a1 + b1, a2 + b2), &(v * w));
            }
        }
        b
    }

    pub fn is_zero(&self) -> bool {
        self.c.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(i64, i64), &CycNum)> {
        self.c.iter()
    }

    pub fn sub(&self, o: &Self) -> Self {
        let mut b = self.clone();
        for (e, v) in &o.c {
            b.add_term(*e, &-v);
        }
        b
    }
}

impl fmt::Display for Bivar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.c.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .c
            .iter()
            .map(|((a, b), v)| format!("({v}) z1^{a} z2^{b}"))
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// W₂(z₁.e_a, z₂.e_b) = Tr(M(z₁,e_a)M(z₂,e_b)) dx₁dx₂/(x₁−x₂)²; entry p is the
/// numerator at ℏ^p, for p = 0..=L.
pub fn amplitude_w2(gauge: &Gauge, a: u32, b: u32) -> Vec<Bivar> {
    let m1 = adjoint_solution(&gauge.u_hat, &gauge.u_hat_inv, a);
    let m2 = adjoint_solution(&gauge.u_hat, &gauge.u_hat_inv, b);
    let order = m1.len() - 1;
    let n = m1[0].dim();
    let mut out = vec![Bivar::default(); order + 1];
    for (p, x) in m1.iter().enumerate() {
        for (q, y) in m2.iter().enumerate().take(order + 1 - p) {
            for i in 0..n {
                for j in 0..n {
                    let (f, g) = (x.get(i, j), y.get(j, i));
                    if !f.is_zero() && !g.is_zero() {
                        out[p + q].add_assign(&Bivar::outer(f, g));
                    }
                }
            }
        }
    }
    out
}

/// (z₁^r − z₂^r)² · T  versus  r² z₁^{r−1} z₂^{r−1} · N: the W₂ numerator N matches
/// the bidifferential T dz₁dz₂ exactly.
fn w2_matches(ctx: &Arc<CycContext>, r: u32, numer: &Bivar, target: &Bivar) -> Option<Bivar> {
    let ri = r as i64;
    let mut sq = Bivar::default();
    sq.add_term((ri, 0), &CycNum::one(ctx));
    sq.add_term((0, ri), &-CycNum::one(ctx));
    let sq = sq.mul(&sq);
    let mut jac = Bivar::default();
    jac.add_term((ri - 1, ri - 1), &CycNum::from_int(ctx, ri * ri));
    let d = numer.mul(&jac).sub(&target.mul(&sq));
    (!d.is_zero()).then_some(d)
}

/// dz₁dz₂/(z₁−z₂)² multiplied through by (z₁^r − z₂^r)², as a polynomial.
fn bergman_times_sq(ctx: &Arc<CycContext>, r: u32) -> Bivar {
    let mut s = Bivar::default();
    for j in 0..r as i64 {
        s.add_term((j, r as i64 - 1 - j), &CycNum::one(ctx));
    }
    s.mul(&s)
}

/// [ℏ⁰]W₂(·.e_r, ·.e_r) = dz₁dz₂/(z₁−z₂)², including regularity at 0 and ∞.
pub fn check_bergman(data: &ConnectionData, w2: &[Bivar]) -> Report {
    let ctx = data.curve.ctx();
    let r = data.curve.r();
    let ri = r as i64;
    let mut jac = Bivar::default();
    jac.add_term((ri - 1, ri - 1), &CycNum::from_int(ctx, ri * ri));
    let d = w2[0].mul(&jac).sub(&bergman_times_sq(ctx, r));
    if d.is_zero() {
        Report::pass("wkb-bergman", "ℏ^0")
    } else {
        Report::fail("wkb-bergman", "ℏ^0", first_bivar(&d))
    }
}

fn first_bivar(b: &Bivar) -> String {
    b.terms()
        .next()
        .map_or("0".into(), |((a, c), v)| format!("z1^{a} z2^{c}: {v}"))
}

fn omega_g2(table: &CorrelatorTable, g2: u32) -> Option<Bivar> {
    let ctx = table.curve().ctx();
    let t = table.get(g2, 2)?;
    let mut b = Bivar::default();
    for (k, v) in t {
        b.add_term(
            (-(k[0] as i64) - 1, -(k[1] as i64) - 1),
            &CycNum::from_rat(ctx, v.clone()),
        );
    }
    Some(b)
}

/// ω_{g,1} with its residue part S_{1,2g}dz/z.
fn omega_g1(table: &CorrelatorTable, g2: u32) -> Option<LaurentForm> {
    let curve = table.curve();
    let ctx = curve.ctx();
    match g2 {
        0 => Some(curve.omega01()),
        1 => Some(curve.omega_half()),
        _ => {
            let t = table.get(g2, 1)?;
            let mut f = LaurentForm::zero(ctx, 1);
            for (k, v) in t {
                f.add_term(-(k[0] as i64) - 1, &CycNum::from_rat(ctx, v.clone()));
            }
            f.add_term(-1, &CycNum::from_rat(ctx, curve.shift_value(1, g2)));
            Some(f)
        }
    }
}

/// [ℏ^{2g−1}]W₁(z.e_r) = ω_{g,1} and [ℏ^{2g}]W₂ = ω_{g,2}, for every order available
/// both in the amplitudes and in the table.
pub fn cross_check(
    table: &CorrelatorTable,
    w1: &HSeries<LaurentForm>,
    w2: &[Bivar],
) -> Vec<Report> {
    let curve = table.curve();
    let ctx = curve.ctx();
    let mut out = Vec::new();
    for p in -1..=w1.order() {
        let g2 = (p + 1) as u32;
        if p >= 1 && p > table.chi_max() as i64 {
            break;
        }
        let Some(want) = omega_g1(table, g2) else {
            break;
        };
        let got = w1
            .get(p)
            .cloned()
            .unwrap_or_else(|| LaurentForm::zero(ctx, 1));
        let d = got.sub(&want);
        let loc = format!("W1 ℏ^{p}");
        out.push(match d.valuation() {
            None => Report::pass("wkb-cross-check", loc),
            Some(e) => Report::fail("wkb-cross-check", loc, format!("z^{e}: {}", d.coeff(e))),
        });
    }
    for (p, numer) in w2.iter().enumerate() {
        let loc = format!("W2 ℏ^{p}");
        let target = if p == 0 {
            None
        } else if p as u32 <= table.chi_max() {
            Some(omega_g2(table, p as u32).unwrap_or_default())
        } else {
            break;
        };
        let mismatch = match target {
            None => {
                let mut jac = Bivar::default();
                let ri = curve.r() as i64;
                jac.add_term((ri - 1, ri - 1), &CycNum::from_int(ctx, ri * ri));
                let d = numer.mul(&jac).sub(&bergman_times_sq(ctx, curve.r()));
                (!d.is_zero()).then_some(d)
            }
            Some(t) => w2_matches(ctx, curve.r(), numer, &t),
        };
        out.push(match mismatch {
            None => Report::pass("wkb-cross-check", loc),
            Some(d) => Report::fail("wkb-cross-check", loc, first_bivar(&d)),
        });
    }
    out
}

/// Rational Laurent polynomial in z.
pub type ZPoly = BTreeMap<i64, Rat>;

fn zp_add(a: &mut ZPoly, b: &ZPoly, sign: i64) {
    for (e, v) in b {
        let x = a.entry(*e).or_insert_with(Rat::zero);
        *x += v * rint(sign);
        if x.is_zero() {
            a.remove(e);
        }
    }
}

fn zp_mul(a: &ZPoly, b: &ZPoly) -> ZPoly {
    let mut out = ZPoly::new();
    for (e1, v1) in a {
        for (e2, v2) in b {
            let x = out.entry(e1 + e2).or_insert_with(Rat::zero);
            *x += v1 * v2;
        }
    }
    out.retain(|_, v| !v.is_zero());
    out
}

fn zp_mono(c: Rat, e: i64) -> ZPoly {
    let mut p = ZPoly::new();
    if !c.is_zero() {
        p.insert(e, c);
    }
    p
}

/// Entry polynomial linear in the formal S^ℏ_j: part 0 is S-free, part j multiplies S^ℏ_j.
#[derive(Clone, Debug, PartialEq)]
pub struct SLin(pub Vec<ZPoly>);

impl SLin {
    fn zero(r: usize) -> Self {
        SLin(vec![ZPoly::new(); r + 1])
    }

    fn is_zero(&self) -> bool {
        self.0.iter().all(|p| p.is_empty())
    }

    fn add_scaled(&mut self, o: &Self, sign: i64) {
        for (a, b) in self.0.iter_mut().zip(&o.0) {
            zp_add(a, b, sign);
        }
    }

    /// Product; the result must stay linear in S (column 0 is the only S-carrier).
    fn mul(&self, o: &Self) -> Self {
        let mut out = SLin::zero(self.0.len() - 1);
        for (i, a) in self.0.iter().enumerate() {
            if a.is_empty() {
                continue;
            }
            for (j, b) in o.0.iter().enumerate() {
                if b.is_empty() {
                    continue;
                }
                assert!(i == 0 || j == 0, "determinant term quadratic in S");
                let k = i.max(j);
                let p = zp_mul(a, b);
                zp_add(&mut out.0[k], &p, 1);
            }
        }
        out
    }
}

/// y·Id − Φ_ℏ/dx with y = z^{s−r}, in z, S^ℏ_j kept formal.
fn diagnostic_matrix(r: u32, s: u32) -> Vec<Vec<SLin>> {
    let n = r as usize;
    let ri = r as i64;
    let af = |i: u32| alpha_floor(r, s, i);
    let mut b = vec![vec![SLin::zero(n); n]; n];
    for (i, row) in b.iter_mut().enumerate() {
        row[i].0[0] = zp_mono(Rat::one(), s as i64 - ri);
    }
    for k in 1..r {
        let e = af(r - k) - af(r + 1 - k);
        zp_add(
            &mut b[k as usize - 1][k as usize].0[0],
            &zp_mono(-Rat::one(), ri * e),
            1,
        );
    }
    zp_add(&mut b[n - 1][0].0[0], &zp_mono(-Rat::one(), -ri * af(1)), 1);
    for k in 1..=r {
        let e = af(r) - af(r + 1 - k) - k as i64;
        let sign = if k % 2 == 1 { -1 } else { 1 };
        zp_add(
            &mut b[k as usize - 1][0].0[k as usize],
            &zp_mono(rint(sign), ri * e),
            1,
        );
    }
    b
}

/// All minors of `b` with row set `rows`: column mask → determinant.
fn minors_for_rows(b: &[Vec<SLin>], rows: &[usize]) -> BTreeMap<u32, SLin> {
    let n = b.len();
    let mut states: BTreeMap<u32, SLin> = BTreeMap::new();
    let mut one = SLin::zero(n);
    one.0[0].insert(0, Rat::one());
    states.insert(0, one);
    for &i in rows {
        let mut next: BTreeMap<u32, SLin> = BTreeMap::new();
        for (mask, val) in &states {
            for (c, entry) in b[i].iter().enumerate() {
                if mask & (1 << c) != 0 || entry.is_zero() {
                    continue;
                }
                let inv = (mask >> (c + 1)).count_ones();
                let sign = if inv % 2 == 0 { 1 } else { -1 };
                let t = val.mul(entry);
                next.entry(mask | (1 << c))
                    .or_insert_with(|| SLin::zero(n))
                    .add_scaled(&t, sign);
            }
        }
        next.retain(|_, v| !v.is_zero());
        states = next;
    }
    states
}

/// Plain determinant of a matrix of rational Laurent polynomials.
pub fn zdet(m: &[Vec<ZPoly>]) -> ZPoly {
    let n = m.len();
    let b: Vec<Vec<SLin>> = m
        .iter()
        .map(|row| {
            row.iter()
                .map(|p| {
                    let mut e = SLin::zero(0);
                    e.0[0] = p.clone();
                    e
                })
                .collect()
        })
        .collect();
    let rows: Vec<usize> = (0..n).collect();
    minors_for_rows(&b, &rows)
        .remove(&((1u32 << n) - 1))
        .map_or(ZPoly::new(), |v| v.0[0].clone())
}

/// D(z,0) and the pole structure of D(z,M) − D(z,0) with symbolic M.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub r: u32,
    pub s: u32,
    /// D(z,0)/dz split by S-part.
    pub constant: SLin,
    /// Minimal z-exponent (of the dz-coefficient) over all M-dependent terms, per S-part.
    pub min_exponent: Vec<Option<i64>>,
}

/// Which of the three conditions applies, if any.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Classification {
    pub r: u32,
    pub s: u32,
    pub shifts: String,
    pub min_exponent: Option<i64>,
    pub holomorphic: bool,
    pub condition_hit: Option<u32>,
}

impl Classification {
    pub fn condition_str(&self) -> String {
        self.condition_hit.map_or("none".into(), |c| c.to_string())
    }

    pub fn agrees(&self) -> bool {
        self.holomorphic == self.condition_hit.is_some()
    }
}

/// The three conditions, given which S^ℏ_j are nonzero.
pub fn predicted_condition(r: u32, s: u32, nonzero: &BTreeSet<u32>) -> Option<u32> {
    if s == 1 {
        return Some(1);
    }
    let rem = r % s;
    if rem != 1 && rem != s - 1 {
        return None;
    }
    if rem == 1 && nonzero.iter().all(|&j| j == 1) {
        return Some(2);
    }
    if nonzero.is_empty() {
        return Some(3);
    }
    None
}

/// Computes D(z,M) = det(y dx − Φ_ℏ − M dx)/E_ω with symbolic M. The coefficient of
/// each M-monomial is ± a complementary minor of y − Φ_ℏ/dx, so the minimal exponent
/// is read off all minors with at least one row removed.
pub fn determinant_diagnostic(r: u32, s: u32) -> Result<Diagnostic> {
    if r < 2 || r > 16 || s == 0 || s >= r || gcd(r, s) != 1 {
        return Err(Error::InvalidParameter(format!(
            "diagnostic needs coprime 1 ≤ s < r ≤ 16, got ({r},{s})"
        )));
    }
    let n = r as usize;
    let b = diagnostic_matrix(r, s);
    // dx/(r y^{r−1}) = z^{(r−1)(r+1−s)} dz
    let pre = (r as i64 - 1) * (r as i64 + 1 - s as i64);
    let mut min: Vec<Option<i64>> = vec![None; n + 1];
    let mut constant = SLin::zero(n);
    for rmask in 0u32..(1 << n) {
        let rows: Vec<usize> = (0..n).filter(|i| rmask & (1 << i) != 0).collect();
        let minors = minors_for_rows(&b, &rows);
        if rows.len() == n {
            if let Some(d) = minors.get(&((1 << n) - 1)) {
                for (j, p) in d.0.iter().enumerate() {
                    constant.0[j] = p.iter().map(|(e, v)| (e + pre, v.clone())).collect();
                }
            }
            continue;
        }
        for val in minors.values() {
            for (j, p) in val.0.iter().enumerate() {
                if let Some((&e, _)) = p.iter().next() {
                    let e = e + pre;
                    min[j] = Some(min[j].map_or(e, |m: i64| m.min(e)));
                }
            }
        }
    }
    // the empty minor (all rows removed) is the constant 1
    min[0] = Some(min[0].map_or(pre, |m| m.min(pre)));
    Ok(Diagnostic {
        r,
        s,
        constant,
        min_exponent: min,
    })
}

impl Diagnostic {
    /// The closed form Σ_j (−1)^j S^ℏ_j z^{(1−j)s−1}.
    pub fn constant_matches(&self) -> bool {
        if !self.constant.0[0].is_empty() {
            return false;
        }
        (1..=self.r).all(|j| {
            let sign = if j % 2 == 0 { 1 } else { -1 };
            self.constant.0[j as usize] == zp_mono(rint(sign), (1 - j as i64) * self.s as i64 - 1)
        })
    }

    /// Minimal exponent of the M-dependent part when exactly the S^ℏ_j in `nonzero` are present.
    pub fn min_exponent_for(&self, nonzero: &BTreeSet<u32>) -> Option<i64> {
        std::iter::once(0usize)
            .chain(nonzero.iter().map(|&j| j as usize))
            .filter_map(|j| self.min_exponent.get(j).copied().flatten())
            .min()
    }

    pub fn classify(&self, nonzero: &BTreeSet<u32>) -> Classification {
        let m = self.min_exponent_for(nonzero);
        let shifts = if nonzero.is_empty() {
            "none".into()
        } else {
            nonzero
                .iter()
                .map(|j| format!("S{j}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        Classification {
            r: self.r,
            s: self.s,
            shifts,
            min_exponent: m,
            holomorphic: m.is_none_or(|e| e >= 0),
            condition_hit: predicted_condition(self.r, self.s, nonzero),
        }
    }
}

/// Indices j with S^ℏ_j ≠ 0 on a curve.
pub fn nonzero_shift_series(curve: &Curve) -> BTreeSet<u32> {
    curve
        .shifts()
        .iter()
        .filter(|(_, v)| !v.is_zero())
        .map(|(&(i, _), _)| i)
        .collect()
}

/// Evaluates the k-th Casimir C^{(k)} on E through its tensor coordinates
/// C^{(k)}_{(i₁,j₁)…(i_k,j_k)} = (1/k!) Σ_σ sgn σ ∏_m δ_{j_m, i_{σ(m)}}.
pub fn casimir(k: usize, e: &[Vec<ZPoly>]) -> ZPoly {
    let n = e.len();
    let perms = crate::series::permutations(&(0..k as u32).collect::<Vec<_>>());
    let mut out = ZPoly::new();
    let mut idx = vec![0usize; k];
    let fact: i64 = (1..=k as i64).product();
    loop {
        for p in &perms {
            let inv = (0..k)
                .flat_map(|a| (a + 1..k).map(move |b| (a, b)))
                .filter(|&(a, b)| p[a] > p[b])
                .count();
            let mut term = zp_mono(rat(if inv % 2 == 0 { 1 } else { -1 }, fact), 0);
            for m in 0..k {
                term = zp_mul(&term, &e[idx[m]][idx[p[m] as usize]]);
                if term.is_empty() {
                    break;
                }
            }
            zp_add(&mut out, &term, 1);
        }
        let mut pos = 0;
        loop {
            if pos == k {
                return out;
            }
            idx[pos] += 1;
            if idx[pos] < n {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Φ_ℏ/dx on a curve with each S^ℏ_j collapsed to the number Σ_ℓ S_{j,ℓ}.
pub fn collapsed_higgs(curve: &Curve) -> Vec<Vec<ZPoly>> {
    let (r, s) = (curve.r(), curve.s());
    let b = diagnostic_matrix(r, s);
    let sv: Vec<Rat> = (0..=r)
        .map(|j| {
            curve
                .shifts()
                .iter()
                .filter(|(&(i, _), _)| i == j)
                .fold(Rat::zero(), |a, (_, v)| a + v)
        })
        .collect();
    let n = r as usize;
    (0..n)
        .map(|i| {
            (0..n)
                .map(|c| {
                    // F = y δ − B
                    let mut f = ZPoly::new();
                    if i == c {
                        zp_add(&mut f, &zp_mono(Rat::one(), s as i64 - r as i64), 1);
                    }
                    zp_add(&mut f, &b[i][c].0[0], -1);
                    for (j, p) in b[i][c].0.iter().enumerate().skip(1) {
                        let scaled: ZPoly = p.iter().map(|(e, v)| (*e, v * &sv[j])).collect();
                        zp_add(&mut f, &scaled, -1);
                    }
                    f.retain(|_, v| !v.is_zero());
                    f
                })
                .collect()
        })
        .collect()
}

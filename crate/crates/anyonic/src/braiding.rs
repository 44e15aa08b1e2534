//! Hexagon-equation solutions, topological twists and the modular S-matrix.
//!
//! R-symbols follow `R[a][b][c] = R^{ab}_c`. The two hexagon identities solved are
//!
//! ```text
//! R^{ca}_e F(a,c,b,d,e,g) R^{cb}_g = sum_f F(c,a,b,d,e,f) R^{cf}_d F(a,b,c,d,f,g)
//! (R^{ac}_e)^-1 F(a,c,b,d,e,g) (R^{bc}_g)^-1 = sum_f F(c,a,b,d,e,f) (R^{fc}_d)^-1 F(a,b,c,d,f,g)
//! ```
//!
//! with every R-symbol that involves the unit fixed to 1.
//!
//! At fixed `c` the first identity only involves `R^{c x}_y`, so it is solved
//! block by block. Within a block, when some label `g` generates the fusion
//! ring, the identity at `a = g` expresses every `R^{c x}_y` through the few
//! `R^{c g}_e`; those are seeded on a phase grid and the roots are then polished
//! on the whole block. Products of block roots are finally screened against both
//! identities.

use crate::category::{CategoryData, ConsistencyReport};
use crate::error::{Error, Result};
use crate::scalar::Real;
use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

/// Seeds per unknown in the phase lattice.
pub const SEEDS_PER_UNKNOWN: usize = 20;
/// Solutions closer than this (max-norm over all R) are merged.
pub const DEDUP_RADIUS: f64 = 1e-6;
const MAX_ITER: usize = 200;
/// A seed is abandoned when its cost fell by less than 1% over this many steps.
const STALL_WINDOW: usize = 15;
/// Reduced solutions are refined on the full block only below this residual.
const POLISH_RADIUS: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct RSymbols<T: Real> {
    r: BTreeMap<[usize; 3], Complex<T>>,
    pub branch: String,
    /// Largest hexagon residual reached by the solver.
    pub residual: f64,
}

impl<T: Real> RSymbols<T> {
    /// `R^{ab}_c`, zero on inadmissible triples.
    pub fn get(&self, a: usize, b: usize, c: usize) -> Complex<T> {
        self.r
            .get(&[a, b, c])
            .copied()
            .unwrap_or_else(|| Complex::new(T::zero(), T::zero()))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&[usize; 3], &Complex<T>)> {
        self.r.iter()
    }

    /// The reverse braiding `R'^{ab}_c = 1 / R^{ba}_c`, which solves the hexagons
    /// whenever `self` does.
    pub fn reverse(&self) -> Self {
        let r = self
            .r
            .keys()
            .map(|&[a, b, c]| ([a, b, c], self.get(b, a, c).inv()))
            .collect();
        RSymbols {
            r,
            branch: format!("reverse of {}", self.branch),
            residual: self.residual,
        }
    }

    /// Max-norm distance between two solutions on the same category.
    pub fn distance(&self, other: &Self) -> f64 {
        self.r
            .iter()
            .map(|(k, v)| (*v - other.get(k[0], k[1], k[2])).norm().as_f64())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Entry {
            idx: [usize; 3],
            re: f64,
            im: f64,
        }
        #[derive(Serialize)]
        struct Doc {
            branch: String,
            #[serde(rename = "R")]
            r: Vec<Entry>,
        }
        let doc = Doc {
            branch: self.branch.clone(),
            r: self
                .r
                .iter()
                .map(|(k, v)| Entry {
                    idx: *k,
                    re: v.re.as_f64(),
                    im: v.im.as_f64(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

#[derive(Clone, Debug)]
pub struct TwistData<T: Real> {
    pub theta: Vec<Complex<T>>,
    /// Topological spins in (-1/2, 1/2] with `theta = exp(2 pi i h)`.
    pub h: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SMatrix<T: Real> {
    pub s: Vec<Vec<Complex<T>>>,
    pub condition: f64,
}

/// Reduces a phase measured in turns to (-1/2, 1/2].
pub fn reduce_turns(x: f64) -> f64 {
    let mut y = x - x.round();
    if y <= -0.5 {
        y += 1.0;
    }
    y
}

/// Smallest-denominator fraction within `tol` of `x`.
pub fn rationalize(x: f64, max_den: i64, tol: f64) -> Option<(i64, i64)> {
    (1..=max_den).find_map(|den| {
        let num = (x * den as f64).round();
        ((x - num / den as f64).abs() <= tol).then_some((num as i64, den))
    })
}

pub fn format_fraction(x: f64) -> String {
    match rationalize(x, 1000, 1e-8) {
        Some((n, 1)) => format!("{n}"),
        Some((n, d)) => format!("{n}/{d}"),
        None => format!("{x:.8}"),
    }
}

/// Unknown R-symbols: admissible triples with both upper labels non-unit.
fn unknown_triples<T: Real>(cat: &CategoryData<T>) -> Vec<[usize; 3]> {
    cat.fusion_triples()
        .into_iter()
        .filter(|t| t[0] != 0 && t[1] != 0)
        .collect()
}

#[derive(Clone, Debug)]
struct Term<T: Real> {
    coef: Complex<T>,
    factors: Vec<(usize, i32)>,
}

#[derive(Clone, Debug)]
struct HexagonSystem<T: Real> {
    unknowns: Vec<[usize; 3]>,
    equations: Vec<Vec<Term<T>>>,
    /// For equations of the first identity, the shared first index `c` of all
    /// their R-symbols.
    block: Vec<Option<usize>>,
}

impl<T: Real> HexagonSystem<T> {
    fn new(cat: &CategoryData<T>) -> Self {
        let unknowns = unknown_triples(cat);
        let slot: BTreeMap<[usize; 3], usize> =
            unknowns.iter().enumerate().map(|(i, t)| (*t, i)).collect();
        let factor = |a: usize, b: usize, c: usize, p: i32| -> Option<(usize, i32)> {
            slot.get(&[a, b, c]).map(|&i| (i, p))
        };
        let n = cat.len();
        let mut equations = Vec::new();
        let mut block = Vec::new();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for &e in cat.channels(a, c) {
                        for d in 0..n {
                            if !cat.fuses(e, b, d) {
                                continue;
                            }
                            for &g in cat.channels(c, b) {
                                if !cat.fuses(a, g, d) {
                                    continue;
                                }
                                let left = cat.f(a, c, b, d, e, g);
                                for p in [1, -1] {
                                    let mut terms = Vec::new();
                                    let (x, y) = if p == 1 {
                                        (factor(c, a, e, 1), factor(c, b, g, 1))
                                    } else {
                                        (factor(a, c, e, -1), factor(b, c, g, -1))
                                    };
                                    terms.push(Term {
                                        coef: left,
                                        factors: x.into_iter().chain(y).collect(),
                                    });
                                    for f in 0..n {
                                        let coef = cat.f(c, a, b, d, e, f) * cat.f(a, b, c, d, f, g);
                                        if coef.norm() == T::zero() {
                                            continue;
                                        }
                                        let z = if p == 1 {
                                            factor(c, f, d, 1)
                                        } else {
                                            factor(f, c, d, -1)
                                        };
                                        terms.push(Term {
                                            coef: -coef,
                                            factors: z.into_iter().collect(),
                                        });
                                    }
                                    equations.push(terms);
                                    block.push((p == 1).then_some(c));
                                }
                            }
                        }
                    }
                }
            }
        }
        HexagonSystem {
            unknowns,
            equations,
            block,
        }
    }

    /// The first identity at fixed `c`: it only involves `R^{c x}_y`.
    /// Returns the subsystem and the positions of its unknowns in `self`.
    fn restrict(&self, c: usize) -> (Self, Vec<usize>) {
        let map: Vec<usize> = (0..self.unknowns.len()).filter(|&i| self.unknowns[i][0] == c).collect();
        let local: BTreeMap<usize, usize> = map.iter().enumerate().map(|(l, &g)| (g, l)).collect();
        let equations = self
            .equations
            .iter()
            .zip(&self.block)
            .filter(|(_, b)| **b == Some(c))
            .map(|(terms, _)| {
                terms
                    .iter()
                    .map(|t| Term {
                        coef: t.coef,
                        factors: t.factors.iter().map(|&(i, p)| (local[&i], p)).collect(),
                    })
                    .collect()
            })
            .collect::<Vec<_>>();
        let sub = HexagonSystem {
            unknowns: map.iter().map(|&g| self.unknowns[g]).collect(),
            block: vec![Some(c); equations.len()],
            equations,
        };
        (sub, map)
    }

    fn residuals(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        self.equations
            .iter()
            .map(|terms| {
                terms.iter().fold(Complex::new(T::zero(), T::zero()), |s, t| {
                    s + t
                        .factors
                        .iter()
                        .fold(t.coef, |acc, &(i, p)| acc * x[i].powi(p))
                })
            })
            .collect()
    }

    /// Jacobian of the residuals, one sparse row per equation.
    fn jacobian(&self, x: &[Complex<T>]) -> Vec<Vec<(usize, Complex<T>)>> {
        self.equations
            .iter()
            .map(|terms| {
                let mut row: Vec<(usize, Complex<T>)> = Vec::new();
                for t in terms {
                    for (k, &(i, p)) in t.factors.iter().enumerate() {
                        let mut v = t.coef * x[i].powi(p - 1) * T::lit(p as f64);
                        for (l, &(j, q)) in t.factors.iter().enumerate() {
                            if l != k {
                                v = v * x[j].powi(q);
                            }
                        }
                        match row.iter_mut().find(|(c, _)| *c == i) {
                            Some(slot) => slot.1 = slot.1 + v,
                            None => row.push((i, v)),
                        }
                    }
                }
                row
            })
            .collect()
    }
}

fn max_norm<T: Real>(v: &[Complex<T>]) -> f64 {
    v.iter().map(|z| z.norm().as_f64()).fold(0.0, f64::max)
}

fn sum_sq<T: Real>(v: &[Complex<T>]) -> T {
    v.iter().fold(T::zero(), |s, z| s + z.norm_sqr())
}

/// Solves a small dense complex system by Gaussian elimination with partial pivoting.
fn solve_dense<T: Real>(mut a: Vec<Complex<T>>, mut b: Vec<Complex<T>>, n: usize) -> Option<Vec<Complex<T>>> {
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| {
            a[i * n + col]
                .norm()
                .partial_cmp(&a[j * n + col].norm())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[piv * n + col].norm() == T::zero() {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        let p = a[col * n + col];
        for i in col + 1..n {
            let m = a[i * n + col] / p;
            if m.norm() == T::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[i * n + k] = a[i * n + k] - m * v;
            }
            let v = b[col];
            b[i] = b[i] - m * v;
        }
    }
    let mut x = vec![Complex::new(T::zero(), T::zero()); n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s = s - a[i * n + k] * x[k];
        }
        x[i] = s / a[i * n + i];
    }
    Some(x)
}

struct SeedOutcome<T: Real> {
    x: Vec<Complex<T>>,
    residual: f64,
    stationary: bool,
}

type Residual<'a, T> = dyn Fn(&[Complex<T>]) -> Option<Vec<Complex<T>>> + Sync + 'a;
type Jacobian<'a, T> = dyn Fn(&[Complex<T>]) -> Vec<Vec<(usize, Complex<T>)>> + Sync + 'a;

/// Levenberg-Marquardt iteration on a holomorphic system; `residual` returns
/// `None` where the system is undefined.
fn levenberg_marquardt<T: Real>(
    residual: &Residual<'_, T>,
    jacobian: &Jacobian<'_, T>,
    mut x: Vec<Complex<T>>,
    tol: f64,
) -> SeedOutcome<T> {
    let m = x.len();
    let Some(mut r) = residual(&x) else {
        return SeedOutcome {
            x,
            residual: f64::INFINITY,
            stationary: true,
        };
    };
    let mut cost = sum_sq(&r);
    let mut mu = T::lit(1e-3);
    let mut stationary = false;
    let mut history = Vec::with_capacity(MAX_ITER);
    for it in 0..MAX_ITER {
        history.push(cost);
        if it >= STALL_WINDOW && cost > T::lit(0.99) * history[it - STALL_WINDOW] {
            stationary = true;
            break;
        }
        if max_norm(&r) <= tol * 1e-3 {
            break;
        }
        let jac = jacobian(&x);
        let mut jhj = vec![Complex::new(T::zero(), T::zero()); m * m];
        let mut jhr = vec![Complex::new(T::zero(), T::zero()); m];
        for (row, jr) in jac.iter().enumerate() {
            for &(i, ji) in jr {
                let ci = ji.conj();
                jhr[i] = jhr[i] + ci * r[row];
                for &(j, jj) in jr {
                    jhj[i * m + j] = jhj[i * m + j] + ci * jj;
                }
            }
        }
        let grad = jhr.iter().map(|z| z.norm().as_f64()).fold(0.0, f64::max);
        if grad <= 1e-14 * (1.0 + cost.as_f64().sqrt()) {
            stationary = true;
            break;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jhj.clone();
            for i in 0..m {
                let diag = a[i * m + i].re;
                a[i * m + i] = a[i * m + i] + mu * (T::one() + diag);
            }
            let rhs: Vec<Complex<T>> = jhr.iter().map(|z| -*z).collect();
            let Some(step) = solve_dense(a, rhs, m) else {
                mu = mu * T::lit(10.0);
                continue;
            };
            let trial: Vec<Complex<T>> = x.iter().zip(&step).map(|(a, b)| *a + *b).collect();
            if trial.iter().any(|z| z.norm() < T::lit(1e-6) || !z.re.is_finite() || !z.im.is_finite()) {
                mu = mu * T::lit(10.0);
                continue;
            }
            let Some(tr) = residual(&trial) else {
                mu = mu * T::lit(10.0);
                continue;
            };
            let tc = sum_sq(&tr);
            if tc < cost {
                x = trial;
                r = tr;
                cost = tc;
                mu = (mu / T::lit(3.0)).max(T::lit(1e-12));
                improved = true;
                break;
            }
            mu = mu * T::lit(4.0);
        }
        if !improved {
            stationary = true;
            break;
        }
    }
    SeedOutcome {
        residual: max_norm(&r),
        x,
        stationary,
    }
}

/// Phase of seed `s` for unknown `j`: a Kronecker lattice with irrational steps.
fn seed_phase(s: usize, j: usize) -> f64 {
    const PRIMES: [f64; 16] = [
        2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0, 41.0, 43.0, 47.0, 53.0,
    ];
    let base = PRIMES[j % PRIMES.len()].sqrt() + (j / PRIMES.len()) as f64 * 0.618_033_988_749_894_8;
    ((s + 1) as f64 * base).fract()
}

/// A label whose repeated fusion with itself reaches every label.
fn generator<T: Real>(cat: &CategoryData<T>) -> Option<usize> {
    (1..cat.len()).find(|&g| {
        let mut reach = vec![false; cat.len()];
        reach[0] = true;
        let mut frontier = vec![0];
        while let Some(x) = frontier.pop() {
            for &y in cat.channels(g, x) {
                if !reach[y] {
                    reach[y] = true;
                    frontier.push(y);
                }
            }
        }
        reach.iter().all(|&r| r)
    })
}

fn inverse<T: Real>(a: &[Complex<T>], n: usize) -> Option<Vec<Complex<T>>> {
    let zero = Complex::new(T::zero(), T::zero());
    let mut inv = vec![zero; n * n];
    for j in 0..n {
        let mut e = vec![zero; n];
        e[j] = Complex::new(T::one(), T::zero());
        let col = solve_dense(a.to_vec(), e, n)?;
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    Some(inv)
}

fn matmul_sq<T: Real>(a: &[Complex<T>], b: &[Complex<T>], n: usize) -> Vec<Complex<T>> {
    let mut out = vec![Complex::new(T::zero(), T::zero()); n * n];
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                out[i * n + j] = out[i * n + j] + a[i * n + k] * b[k * n + j];
            }
        }
    }
    out
}

struct Step<T: Real> {
    k: usize,
    /// Slots of `R^{c g}_e` and `R^{c b}_h`.
    es: Vec<usize>,
    hs: Vec<usize>,
    /// `F(g,c,b,d,e,h)`, row-major over `(e, h)`.
    mid: Vec<Complex<T>>,
    left: Vec<Complex<T>>,
    right: Vec<Complex<T>>,
    /// Diagonal entries of the solved block that fill new slots.
    assign: Vec<(usize, usize)>,
}

/// One block of the first identity, parametrised by `R^{c g}_e` alone: the
/// identity at `a = g` fixes `R^{c f}_d` for every `f` in `g ⊗ b` once the
/// `R^{c b}` are known. The elimination order and the F-blocks do not depend
/// on the values, so they are computed once.
struct Propagation<T: Real> {
    slots: usize,
    unit: usize,
    free: Vec<usize>,
    steps: Vec<Step<T>>,
    /// Slot of each block unknown.
    targets: Vec<usize>,
}

impl<T: Real> Propagation<T> {
    fn new(cat: &CategoryData<T>, c: usize, g: usize, unknowns: &[[usize; 3]]) -> Option<Self> {
        let n = cat.len();
        let mut slot: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for x in 0..n {
            for &y in cat.channels(c, x) {
                let next = slot.len();
                slot.insert((x, y), next);
            }
        }
        let mut known = vec![false; slot.len()];
        let unit = slot[&(0, c)];
        known[unit] = true;
        let free: Vec<usize> = cat.channels(c, g).iter().map(|&e| slot[&(g, e)]).collect();
        for &i in &free {
            known[i] = true;
        }
        let complete = |known: &[bool], x: usize| cat.channels(c, x).iter().all(|&y| known[slot[&(x, y)]]);
        let mut done = vec![false; n];
        let mut steps = Vec::new();
        while let Some(b) = (0..n).find(|&b| !done[b] && complete(&known, b)) {
            done[b] = true;
            for d in 0..n {
                let fs: Vec<usize> = cat.channels(g, b).iter().copied().filter(|&f| cat.fuses(c, f, d)).collect();
                if fs.iter().all(|&f| known[slot[&(f, d)]]) {
                    continue;
                }
                let es: Vec<usize> = cat.channels(c, g).iter().copied().filter(|&e| cat.fuses(e, b, d)).collect();
                let hs: Vec<usize> = cat.channels(c, b).iter().copied().filter(|&h| cat.fuses(g, h, d)).collect();
                let k = fs.len();
                if es.len() != k || hs.len() != k {
                    return None;
                }
                let a: Vec<Complex<T>> = es.iter().flat_map(|&e| fs.iter().map(move |&f| cat.f(c, g, b, d, e, f))).collect();
                let m: Vec<Complex<T>> = fs.iter().flat_map(|&f| hs.iter().map(move |&h| cat.f(g, b, c, d, f, h))).collect();
                let mid = es.iter().flat_map(|&e| hs.iter().map(move |&h| cat.f(g, c, b, d, e, h))).collect();
                let mut assign = Vec::new();
                for (i, &f) in fs.iter().enumerate() {
                    let s = slot[&(f, d)];
                    if !known[s] {
                        known[s] = true;
                        assign.push((i, s));
                    }
                }
                steps.push(Step {
                    k,
                    es: es.iter().map(|&e| slot[&(g, e)]).collect(),
                    hs: hs.iter().map(|&h| slot[&(b, h)]).collect(),
                    mid,
                    left: inverse(&a, k)?,
                    right: inverse(&m, k)?,
                    assign,
                });
            }
        }
        let targets = unknowns.iter().map(|t| slot.get(&(t[1], t[2])).copied().filter(|&s| known[s])).collect::<Option<_>>()?;
        Some(Propagation {
            slots: slot.len(),
            unit,
            free,
            steps,
            targets,
        })
    }

    fn expand(&self, z: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut v = vec![Complex::new(T::zero(), T::zero()); self.slots];
        v[self.unit] = Complex::new(T::one(), T::zero());
        for (&i, &x) in self.free.iter().zip(z) {
            v[i] = x;
        }
        for st in &self.steps {
            let k = st.k;
            let l: Vec<Complex<T>> = (0..k * k).map(|ij| v[st.es[ij / k]] * st.mid[ij] * v[st.hs[ij % k]]).collect();
            let x = matmul_sq(&matmul_sq(&st.left, &l, k), &st.right, k);
            for &(i, s) in &st.assign {
                v[s] = x[i * k + i];
            }
        }
        self.targets.iter().map(|&s| v[s]).collect()
    }
}

fn lattice_seed<T: Real>(s: usize, m: usize) -> Vec<Complex<T>> {
    (0..m).map(|j| unit_phase(seed_phase(s, j))).collect()
}

fn unit_phase<T: Real>(turns: f64) -> Complex<T> {
    let t = T::lit(2.0 * std::f64::consts::PI * turns);
    Complex::new(t.cos(), t.sin())
}

/// Local minima of the cost on a periodic phase grid with at least `budget`
/// points and at least `SEEDS_PER_UNKNOWN` phases per unknown.
fn grid_minima<T: Real>(residual: &Residual<'_, T>, dim: usize, budget: usize) -> Vec<Vec<Complex<T>>> {
    if dim == 0 {
        return vec![Vec::new()];
    }
    let mut side = SEEDS_PER_UNKNOWN;
    while side.pow(dim as u32) < budget {
        side += 1;
    }
    let total = side.pow(dim as u32);
    let point = |idx: usize| -> Vec<Complex<T>> {
        (0..dim).map(|j| unit_phase((idx / side.pow(j as u32) % side) as f64 / side as f64)).collect()
    };
    let cost: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|idx| residual(&point(idx)).map_or(f64::INFINITY, |r| sum_sq(&r).as_f64()))
        .collect();
    (0..total)
        .filter(|&idx| {
            (0..dim).all(|j| {
                let stride = side.pow(j as u32);
                let digit = idx / stride % side;
                let up = idx - digit * stride + (digit + 1) % side * stride;
                let down = idx - digit * stride + (digit + side - 1) % side * stride;
                cost[idx] <= cost[up] && cost[idx] <= cost[down]
            })
        })
        .map(point)
        .collect()
}

/// Runs the seeded solver on one block and returns its distinct roots.
fn seeded_solutions<T: Real>(cat: &CategoryData<T>, c: usize, sys: &HexagonSystem<T>, tol: f64) -> Result<Vec<Vec<Complex<T>>>> {
    let m = sys.unknowns.len();
    let seeds = (SEEDS_PER_UNKNOWN * m).max(1);
    let full_res = |x: &[Complex<T>]| Some(sys.residuals(x));
    let full_jac = |x: &[Complex<T>]| sys.jacobian(x);
    let prop = generator(cat).and_then(|g| Propagation::new(cat, c, g, &sys.unknowns));
    let outcomes: Vec<SeedOutcome<T>> = match &prop {
        None => (0..seeds)
            .into_par_iter()
            .map(|s| levenberg_marquardt(&full_res, &full_jac, lattice_seed(s, m), tol))
            .collect(),
        Some(prop) => {
            let red_res = |z: &[Complex<T>]| Some(sys.residuals(&prop.expand(z)));
            let red_jac = |z: &[Complex<T>]| central_difference(&red_res, z);
            grid_minima(&red_res, prop.free.len(), seeds)
                .into_par_iter()
                .map(|z0| {
                    let reduced = levenberg_marquardt(&red_res, &red_jac, z0, tol);
                    if reduced.residual > POLISH_RADIUS {
                        return reduced;
                    }
                    levenberg_marquardt(&full_res, &full_jac, prop.expand(&reduced.x), tol)
                })
                .collect()
        }
    };
    let best = outcomes.iter().map(|o| o.residual).fold(f64::INFINITY, f64::min);
    let all_stationary = outcomes.iter().all(|o| o.stationary);
    let found: Vec<Vec<Complex<T>>> = outcomes
        .into_iter()
        .filter(|o| o.residual <= tol)
        .map(|o| o.x)
        .collect();
    if found.is_empty() {
        return Err(if all_stationary {
            Error::NotBraided { best_residual: best }
        } else {
            Error::SolverFailure { best_residual: best }
        });
    }
    Ok(canonical_unique(found))
}

/// Dense complex-step Jacobian of a holomorphic map, stored as full rows.
fn central_difference<T: Real>(f: &Residual<'_, T>, z: &[Complex<T>]) -> Vec<Vec<(usize, Complex<T>)>> {
    let cols: Vec<Vec<Complex<T>>> = (0..z.len())
        .map(|j| {
            let h = T::lit(1e-6) * (T::one() + z[j].norm());
            let shifted = |sign: T| {
                let mut w = z.to_vec();
                w[j] = w[j] + Complex::new(sign * h, T::zero());
                f(&w)
            };
            match (shifted(T::one()), shifted(-T::one())) {
                (Some(p), Some(q)) => p.iter().zip(&q).map(|(a, b)| (*a - *b) / (h + h)).collect(),
                _ => Vec::new(),
            }
        })
        .collect();
    let rows = cols.iter().map(Vec::len).max().unwrap_or(0);
    (0..rows)
        .map(|i| cols.iter().enumerate().filter_map(|(j, col)| col.get(i).map(|v| (j, *v))).collect())
        .collect()
}

/// Sorts by the phases of the entries (in turns) and merges near-duplicates.
fn canonical_unique<T: Real>(mut found: Vec<Vec<Complex<T>>>) -> Vec<Vec<Complex<T>>> {
    let key = |x: &Vec<Complex<T>>| -> Vec<f64> {
        x.iter()
            .map(|z| {
                let t = z.im.as_f64().atan2(z.re.as_f64()) / (2.0 * std::f64::consts::PI);
                let t = t.rem_euclid(1.0);
                if 1.0 - t < 1e-9 {
                    0.0
                } else {
                    t
                }
            })
            .collect()
    };
    found.sort_by(|a, b| {
        key(a)
            .iter()
            .zip(key(b).iter())
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut unique: Vec<Vec<Complex<T>>> = Vec::new();
    for x in found {
        let dup = unique.iter().any(|u| max_norm(&u.iter().zip(&x).map(|(a, b)| *a - *b).collect::<Vec<_>>()) < DEDUP_RADIUS);
        if !dup {
            unique.push(x);
        }
    }
    unique
}

/// All hexagon solutions reachable from the seeds, deduplicated and in
/// canonical order (lexicographic in the phases of the unknowns, in turns).
pub fn solve_hexagon<T: Real>(cat: &CategoryData<T>, tol: f64) -> Result<Vec<RSymbols<T>>> {
    let sys = HexagonSystem::new(cat);
    let m = sys.unknowns.len();
    // Each block of the first identity is solved on its own; products of block
    // solutions are then screened against the full system.
    let mut blocks: Vec<(Vec<usize>, Vec<Vec<Complex<T>>>)> = Vec::new();
    for c in 1..cat.len() {
        let (sub, map) = sys.restrict(c);
        if map.is_empty() {
            continue;
        }
        let found = seeded_solutions(cat, c, &sub, tol)?;
        blocks.push((map, found));
    }
    let mut found = Vec::new();
    let mut best = f64::INFINITY;
    let mut pick = vec![0usize; blocks.len()];
    let mut x = vec![Complex::new(T::one(), T::zero()); m];
    loop {
        for ((map, sols), &k) in blocks.iter().zip(&pick) {
            for (l, &g) in map.iter().enumerate() {
                x[g] = sols[k][l];
            }
        }
        let res = max_norm(&sys.residuals(&x));
        best = best.min(res);
        if res <= tol {
            found.push(x.clone());
        }
        // odometer over the block solutions
        let mut i = 0;
        while i < pick.len() {
            pick[i] += 1;
            if pick[i] < blocks[i].1.len() {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
        if i == pick.len() {
            break;
        }
    }
    if found.is_empty() {
        return Err(Error::NotBraided { best_residual: best });
    }
    let unique = canonical_unique(found);
    let one = Complex::new(T::one(), T::zero());
    let mut out = Vec::new();
    for (i, x) in unique.into_iter().enumerate() {
        let mut r: BTreeMap<[usize; 3], Complex<T>> = cat
            .fusion_triples()
            .into_iter()
            .filter(|t| t[0] == 0 || t[1] == 0)
            .map(|t| (t, one))
            .collect();
        for (t, v) in sys.unknowns.iter().zip(&x) {
            r.insert(*t, *v);
        }
        let mut sol = RSymbols {
            r,
            branch: String::new(),
            residual: max_norm(&sys.residuals(&x)),
        };
        let spins = topological_twists(cat, &sol)
            .map(|t| t.h.iter().map(|&h| format_fraction(h)).collect::<Vec<_>>().join(","))
            .unwrap_or_else(|_| "non-unimodular".into());
        sol.branch = format!("solution {i} (h = [{spins}])");
        out.push(sol);
    }
    Ok(out)
}

/// Evaluates both hexagon identities directly from `cat` and `r`.
pub fn verify_hexagon<T: Real>(cat: &CategoryData<T>, r: &RSymbols<T>, tol: f64) -> ConsistencyReport {
    let n = cat.len();
    let zero = Complex::new(T::zero(), T::zero());
    let mut checked = 0;
    let mut max_res: f64 = 0.0;
    let mut worst = None;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    for e in 0..n {
                        for g in 0..n {
                            if !(cat.fuses(a, c, e) && cat.fuses(e, b, d) && cat.fuses(c, b, g) && cat.fuses(a, g, d)) {
                                continue;
                            }
                            let l1 = r.get(c, a, e) * cat.f(a, c, b, d, e, g) * r.get(c, b, g);
                            let l2 = cat.f(a, c, b, d, e, g) / (r.get(a, c, e) * r.get(b, c, g));
                            let (mut r1, mut r2) = (zero, zero);
                            for f in 0..n {
                                let coef = cat.f(c, a, b, d, e, f) * cat.f(a, b, c, d, f, g);
                                if coef.norm() == T::zero() {
                                    continue;
                                }
                                r1 = r1 + coef * r.get(c, f, d);
                                r2 = r2 + coef / r.get(f, c, d);
                            }
                            for res in [(l1 - r1).norm().as_f64(), (l2 - r2).norm().as_f64()] {
                                checked += 1;
                                if res > max_res || res.is_nan() {
                                    max_res = res;
                                    worst = Some(vec![a, b, c, d, e, g]);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    ConsistencyReport {
        check: "hexagon".into(),
        checked,
        max_residual: max_res,
        tol,
        passed: max_res <= tol,
        worst,
    }
}

/// `theta_a = sum_c (d_c / d_a) R^{aa}_c`.
pub fn topological_twists<T: Real>(cat: &CategoryData<T>, r: &RSymbols<T>) -> Result<TwistData<T>> {
    let mut theta = Vec::with_capacity(cat.len());
    let mut h = Vec::with_capacity(cat.len());
    for a in 0..cat.len() {
        let t = cat
            .channels(a, a)
            .iter()
            .fold(Complex::new(T::zero(), T::zero()), |s, &c| {
                s + cat.dim(c) / cat.dim(a) * r.get(a, a, c)
            });
        let modulus = t.norm().as_f64();
        if (modulus - 1.0).abs() > 1e-6 {
            return Err(Error::InconsistentBraiding { label: a, modulus });
        }
        h.push(reduce_turns(t.arg().as_f64() / (2.0 * std::f64::consts::PI)));
        theta.push(t);
    }
    Ok(TwistData { theta, h })
}

/// Spins `h[a] - h[b]` of the doubled sectors `(a, b̄)`, reduced to (-1/2, 1/2].
pub fn doubled_spins<T: Real>(t: &TwistData<T>) -> BTreeMap<(usize, usize), f64> {
    let n = t.h.len();
    let mut out = BTreeMap::new();
    for a in 0..n {
        for b in 0..n {
            out.insert((a, b), reduce_turns(t.h[a] - t.h[b]));
        }
    }
    out
}

/// Checks `theta_c = theta_a theta_b R^{ab}_c R^{ba}_c` on every admissible triple.
pub fn verify_ribbon<T: Real>(cat: &CategoryData<T>, r: &RSymbols<T>, t: &TwistData<T>, tol: f64) -> ConsistencyReport {
    let mut max_res: f64 = 0.0;
    let mut checked = 0;
    let mut worst = None;
    for [a, b, c] in cat.fusion_triples() {
        let lhs = t.theta[c];
        let rhs = t.theta[a] * t.theta[b] * r.get(a, b, c) * r.get(b, a, c);
        let res = (lhs - rhs).norm().as_f64();
        checked += 1;
        if res > max_res {
            max_res = res;
            worst = Some(vec![a, b, c]);
        }
    }
    ConsistencyReport {
        check: "ribbon".into(),
        checked,
        max_residual: max_res,
        tol,
        passed: max_res <= tol,
        worst,
    }
}

/// Unnormalized `S[a][b] = sum_c N[a][b][c] theta_c / (theta_a theta_b) d_c`.
pub fn modular_s_matrix<T: Real>(cat: &CategoryData<T>, r: &RSymbols<T>) -> Result<SMatrix<T>> {
    let t = topological_twists(cat, r)?;
    let n = cat.len();
    let s: Vec<Vec<Complex<T>>> = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| {
                    cat.channels(a, b).iter().fold(Complex::new(T::zero(), T::zero()), |acc, &c| {
                        acc + t.theta[c] / (t.theta[a] * t.theta[b]) * cat.dim(c)
                    })
                })
                .collect()
        })
        .collect();
    let m = faer::Mat::from_fn(n, n, |i, j| {
        crate::linalg::c64::new(s[i][j].re.as_f64(), s[i][j].im.as_f64())
    });
    let sv = crate::linalg::singular_values(m.as_ref())?;
    let smallest = sv.last().copied().unwrap_or(0.0);
    let condition = if smallest > 0.0 { sv[0] / smallest } else { f64::INFINITY };
    if !(condition < 1e12) {
        return Err(Error::NotModular { condition });
    }
    Ok(SMatrix { s, condition })
}

/// Index of the solution whose twists equal `q^{j(j+1)}` for the su(2)_k data the
/// category descends from. `None` if the provenance is unknown or nothing matches.
pub fn reference_braiding<T: Real>(cat: &CategoryData<T>, solutions: &[RSymbols<T>]) -> Option<usize> {
    let (params, spins) = cat.provenance().su2k_equivalent()?;
    solutions.iter().position(|sol| {
        topological_twists(cat, sol).is_ok_and(|t| {
            t.h.iter().zip(&spins).all(|(&h, &s)| {
                reduce_turns(h - params.twist_turns(s)).abs() < 1e-6
            })
        })
    })
}

//! Ocneanu tube algebra: basis, structure constants from ring representations,
//! primitive central idempotents and their sector labels.

use crate::braiding::reduce_turns;
use crate::category::CategoryData;
use crate::cylinder::{Cylinder, RingBasis};
use crate::error::{Error, Result};
use crate::linalg::{self, c64, one, zero};
use faer::Mat;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

/// Seed of the generic central element used to split the center.
pub const DEFAULT_SEED: u64 = 0x5EED;

/// Tube `(a, b, c, d)`: top boundary `a`, wrapping label `b`, bottom boundary `c`,
/// vertical internal label `d`. As an operator it maps flux `c` to flux `a`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Tube {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub d: usize,
}

impl Tube {
    pub fn new(a: usize, b: usize, c: usize, d: usize) -> Self {
        Tube { a, b, c, d }
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.a, self.b, self.c, self.d]
    }
}

/// All tubes with `N[b][a][d] = N[d][b][c] = 1`, lexicographically ordered.
pub fn enumerate_tubes(cat: &CategoryData<f64>) -> Vec<Tube> {
    let n = cat.len();
    let mut out = Vec::new();
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    if cat.fuses(b, a, d) && cat.fuses(d, b, c) {
                        out.push(Tube { a, b, c, d });
                    }
                }
            }
        }
    }
    out
}

/// Multiplication table `A_s A_t = sum_u m[s][t][u] A_u` (with `A_t` acting first).
#[derive(Clone, Debug)]
pub struct StructureConstants {
    pub tubes: Vec<Tube>,
    table: Vec<c64>,
    pub unit: Vec<c64>,
    /// Largest relative least-squares residual over all products and probe lengths.
    pub residual: f64,
    /// Largest entrywise difference between tables from different probe lengths.
    pub length_deviation: f64,
    pub probe_lengths: Vec<usize>,
}

impl StructureConstants {
    pub fn len(&self) -> usize {
        self.tubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tubes.is_empty()
    }

    pub fn get(&self, s: usize, t: usize, u: usize) -> c64 {
        let n = self.len();
        self.table[(s * n + t) * n + u]
    }

    pub fn basis_vector(&self, s: usize) -> Vec<c64> {
        let mut v = vec![zero(); self.len()];
        v[s] = one();
        v
    }

    pub fn index_of(&self, tube: Tube) -> Option<usize> {
        self.tubes.iter().position(|&t| t == tube)
    }

    pub fn mult(&self, x: &[c64], y: &[c64]) -> Vec<c64> {
        let n = self.len();
        let mut out = vec![zero(); n];
        for s in 0..n {
            if x[s] == zero() {
                continue;
            }
            for t in 0..n {
                let xy = x[s] * y[t];
                if xy == zero() {
                    continue;
                }
                for (u, o) in out.iter_mut().enumerate() {
                    *o += xy * self.get(s, t, u);
                }
            }
        }
        out
    }

    /// `max |(A_s A_t) A_u - A_s (A_t A_u)|` over basis triples.
    pub fn associativity_residual(&self) -> f64 {
        let n = self.len();
        let mut worst: f64 = 0.0;
        for s in 0..n {
            for t in 0..n {
                let st = self.mult(&self.basis_vector(s), &self.basis_vector(t));
                for u in 0..n {
                    let lhs = self.mult(&st, &self.basis_vector(u));
                    let tu = self.mult(&self.basis_vector(t), &self.basis_vector(u));
                    let rhs = self.mult(&self.basis_vector(s), &tu);
                    worst = worst.max(max_diff(&lhs, &rhs));
                }
            }
        }
        worst
    }

    /// Largest deviation of the unit from a two-sided identity on basis elements.
    pub fn unit_residual(&self) -> f64 {
        (0..self.len())
            .map(|s| {
                let e = self.basis_vector(s);
                max_diff(&self.mult(&self.unit, &e), &e).max(max_diff(&self.mult(&e, &self.unit), &e))
            })
            .fold(0.0, f64::max)
    }

    /// Matrix of left multiplication by `x` (column `u` holds `x A_u`).
    pub fn left_regular(&self, x: &[c64]) -> Mat<c64> {
        let n = self.len();
        let cols: Vec<Vec<c64>> = (0..n).map(|u| self.mult(x, &self.basis_vector(u))).collect();
        Mat::from_fn(n, n, |i, j| cols[j][i])
    }
}

fn max_diff(a: &[c64], b: &[c64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Block-diagonal matrices of every tube over all fluxes at one ring length.
struct StackedRep {
    mats: Vec<Mat<c64>>,
    dim: usize,
}

fn stacked_rep(cyl: &Cylinder, tubes: &[Tube], l: usize) -> Result<StackedRep> {
    let n = cyl.category().len();
    let bases: Vec<Option<RingBasis>> = (0..n)
        .map(|f| match cyl.probe_basis(l, f) {
            Ok(b) => Ok(Some(b)),
            Err(Error::FluxNotRealizable(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let mut offsets = Vec::with_capacity(n);
    let mut dim = 0;
    for b in &bases {
        offsets.push(dim);
        dim += b.as_ref().map_or(0, |b| b.len());
    }
    let mats = tubes
        .par_iter()
        .map(|&tube| {
            let mut m = Mat::<c64>::zeros(dim, dim);
            if let (Some(bin), Some(_)) = (&bases[tube.c], &bases[tube.a]) {
                let op = cyl.build_tube_operator(tube, bin)?;
                for (i, j, re, im) in op.to_triplets(0.0).entries {
                    m[(offsets[tube.a] + i, offsets[tube.c] + j)] = c64::new(re, im);
                }
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StackedRep { mats, dim })
}

fn flatten(m: &Mat<c64>) -> Vec<c64> {
    let mut v = Vec::with_capacity(m.nrows() * m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            v.push(m[(i, j)]);
        }
    }
    v
}

fn span_matrix(rep: &StackedRep) -> Mat<c64> {
    let cols: Vec<Vec<c64>> = rep.mats.iter().map(flatten).collect();
    let rows = rep.dim * rep.dim;
    Mat::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

/// Least-squares fit of `targets` (columns) in the span; returns coefficients and
/// the worst residual relative to `max(1, |target|)`.
fn fit(x: &Mat<c64>, targets: &[Vec<c64>]) -> Result<(Mat<c64>, f64)> {
    let b = Mat::from_fn(x.nrows(), targets.len(), |i, j| targets[j][i]);
    let c = linalg::lstsq(x.as_ref(), b.as_ref())?;
    let fitted = linalg::matmul(x.as_ref(), c.as_ref());
    let mut worst: f64 = 0.0;
    for (j, t) in targets.iter().enumerate() {
        let r = linalg::norm(&(0..x.nrows()).map(|i| fitted[(i, j)] - t[i]).collect::<Vec<_>>());
        worst = worst.max(r / linalg::norm(t).max(1.0));
    }
    Ok((c, worst))
}

const FIT_TOL: f64 = 1e-8;
const LENGTH_TOL: f64 = 1e-6;

/// Structure constants from faithful ring representations at each probe length.
pub fn tube_structure_constants(cyl: &Cylinder, probe_lengths: &[usize]) -> Result<StructureConstants> {
    if probe_lengths.is_empty() {
        return Err(Error::Parameter("at least one probe length is required".into()));
    }
    let tubes = enumerate_tubes(cyl.category());
    let n = tubes.len();
    let mut tables: Vec<Vec<c64>> = Vec::new();
    let mut unit = Vec::new();
    let mut residual: f64 = 0.0;
    for &l in probe_lengths {
        let rep = stacked_rep(cyl, &tubes, l)?;
        let x = span_matrix(&rep);
        let rank = linalg::rank(x.as_ref(), 1e-10)?;
        if rank < n {
            return Err(Error::NotFaithful {
                residual: f64::INFINITY,
                length: l,
            });
        }
        let products: Vec<Vec<c64>> = (0..n * n)
            .map(|st| flatten(&linalg::matmul(rep.mats[st / n].as_ref(), rep.mats[st % n].as_ref())))
            .collect();
        let (c, res) = fit(&x, &products)?;
        if res > FIT_TOL {
            return Err(Error::NotFaithful { residual: res, length: l });
        }
        residual = residual.max(res);
        let mut table = vec![zero(); n * n * n];
        for st in 0..n * n {
            for u in 0..n {
                table[st * n + u] = c[(u, st)];
            }
        }
        tables.push(table);
        if unit.is_empty() {
            let id = flatten(&linalg::identity(rep.dim));
            let (u, res) = fit(&x, &[id])?;
            if res > FIT_TOL {
                return Err(Error::NotFaithful { residual: res, length: l });
            }
            unit = linalg::column(u.as_ref(), 0);
        }
    }
    let length_deviation = tables
        .iter()
        .skip(1)
        .map(|t| max_diff(t, &tables[0]))
        .fold(0.0, f64::max);
    if length_deviation > LENGTH_TOL {
        return Err(Error::Convention {
            deviation: length_deviation,
        });
    }
    Ok(StructureConstants {
        tubes,
        table: tables.swap_remove(0),
        unit,
        residual,
        length_deviation,
        probe_lengths: probe_lengths.to_vec(),
    })
}

/// Relative residual of the conjugate transpose of tube `tube` against the span of
/// all tube operators at ring length `l`.
pub fn adjoint_span_residual(cyl: &Cylinder, l: usize, tube: Tube) -> Result<f64> {
    let tubes = enumerate_tubes(cyl.category());
    let idx = tubes
        .iter()
        .position(|&t| t == tube)
        .ok_or_else(|| Error::Parameter(format!("tube {tube:?} is not admissible")))?;
    let rep = stacked_rep(cyl, &tubes, l)?;
    let x = span_matrix(&rep);
    let m = &rep.mats[idx];
    let adj = Mat::from_fn(m.ncols(), m.nrows(), |i, j| m[(j, i)].conj());
    let target = flatten(&adj);
    let b = Mat::from_fn(target.len(), 1, |i, _| target[i]);
    let c = linalg::lstsq(x.as_ref(), b.as_ref())?;
    let fitted = linalg::matmul(x.as_ref(), c.as_ref());
    let r: Vec<c64> = (0..target.len()).map(|i| fitted[(i, 0)] - target[i]).collect();
    Ok(linalg::norm(&r) / linalg::norm(&target))
}

/// Flux component of a primitive central idempotent.
#[derive(Clone, Debug)]
pub struct Idempotent {
    pub sector: String,
    pub flux: usize,
    /// Dimension of the matrix block of the parent central idempotent.
    pub dim: usize,
    pub spin: Option<f64>,
    /// Coefficients over the tube basis.
    pub coeffs: Vec<c64>,
    /// Index of the parent central idempotent.
    pub block: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoeffRecord {
    pub tube: [usize; 4],
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct IdempotentRecord {
    pub sector: String,
    pub flux: String,
    pub dim: usize,
    pub spin: Option<f64>,
    pub coeffs: Vec<CoeffRecord>,
}

impl Idempotent {
    pub fn record(&self, cat: &CategoryData<f64>, tubes: &[Tube]) -> IdempotentRecord {
        IdempotentRecord {
            sector: self.sector.clone(),
            flux: cat.label_name(self.flux).to_string(),
            dim: self.dim,
            spin: self.spin,
            coeffs: tubes
                .iter()
                .zip(&self.coeffs)
                .filter(|(_, c)| c.norm() > 1e-14)
                .map(|(t, c)| CoeffRecord {
                    tube: t.as_array(),
                    re: c.re,
                    im: c.im,
                })
                .collect(),
        }
    }

    /// Tag naming both the flux and the sector, e.g. `P_{τ,τ1̄}`.
    pub fn component_tag(&self, cat: &CategoryData<f64>) -> String {
        format!("P_{{{},{}}}", cat.label_name(self.flux), self.sector)
    }
}

/// Complex Gaussian coefficients from a seeded ChaCha stream.
fn gaussian_vector(seed: u64, n: usize) -> Vec<c64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            c64::new(re, im)
        })
        .collect()
}

const CENTER_TOL: f64 = 1e-9;
const SPLIT_TOL: f64 = 1e-6;
const IDEMPOTENT_TOL: f64 = 1e-8;

/// Primitive central idempotents split into flux components. Components of one
/// central idempotent share `block` and `dim`; `sector` is a placeholder until
/// [`classify_sectors`] runs.
pub fn central_idempotents(sc: &StructureConstants, seed: u64) -> Result<Vec<Idempotent>> {
    let n = sc.len();
    // x -> x A_t - A_t x for every t, stacked.
    let mut comm = Mat::<c64>::zeros(n * n, n);
    for t in 0..n {
        for k in 0..n {
            for u in 0..n {
                comm[(t * n + u, k)] = sc.get(k, t, u) - sc.get(t, k, u);
            }
        }
    }
    let z_basis = linalg::null_space(comm.as_ref(), CENTER_TOL)?;
    let m = z_basis.ncols();
    if m == 0 {
        return Err(Error::Semisimplicity("center is trivial".into()));
    }
    let center: Vec<Vec<c64>> = (0..m).map(|j| linalg::column(z_basis.as_ref(), j)).collect();
    let g = gaussian_vector(seed, m);
    let z: Vec<c64> = (0..n)
        .map(|i| (0..m).fold(zero(), |s, j| s + center[j][i] * g[j]))
        .collect();
    let images: Vec<Vec<c64>> = center.iter().map(|c| sc.mult(&z, c)).collect();
    let (action, res) = fit(&z_basis, &images)?;
    if res > IDEMPOTENT_TOL {
        return Err(Error::Numerical(format!("center is not closed (residual {res:.3e})")));
    }
    let (vals, vecs) = linalg::eig(action.as_ref())?;
    let scale = vals.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1.0);
    for i in 0..m {
        for j in 0..i {
            if (vals[i] - vals[j]).norm() < SPLIT_TOL * scale {
                return Err(Error::Semisimplicity(format!(
                    "generic central element has a repeated eigenvalue {}",
                    vals[i]
                )));
            }
        }
    }
    let mut blocks = Vec::with_capacity(m);
    for i in 0..m {
        let x: Vec<c64> = (0..n)
            .map(|r| (0..m).fold(zero(), |s, j| s + center[j][r] * vecs[(j, i)]))
            .collect();
        let xx = sc.mult(&x, &x);
        let c = linalg::dot(&x, &xx) / linalg::dot(&x, &x);
        if c.norm() < 1e-12 {
            return Err(Error::Semisimplicity("central element is nilpotent".into()));
        }
        let p: Vec<c64> = x.iter().map(|v| v / c).collect();
        let err = max_diff(&sc.mult(&p, &p), &p);
        if err > IDEMPOTENT_TOL * linalg::norm(&p).max(1.0) {
            return Err(Error::Numerical(format!("P^2 - P = {err:.3e} after normalization")));
        }
        let rank = linalg::rank(sc.left_regular(&p).as_ref(), 1e-8)?;
        let dim = (rank as f64).sqrt().round() as usize;
        if dim * dim != rank {
            return Err(Error::Semisimplicity(format!("block of rank {rank} is not a full matrix algebra")));
        }
        blocks.push((p, dim));
    }
    // Deterministic block order: by lowest flux touched, then by the sorted tube support.
    let flux_of = |p: &[c64]| -> Vec<usize> {
        let mut fl: Vec<usize> = sc
            .tubes
            .iter()
            .zip(p)
            .filter(|(t, c)| t.a == t.c && c.norm() > 1e-9)
            .map(|(t, _)| t.a)
            .collect();
        fl.dedup();
        fl
    };
    blocks.sort_by(|x, y| {
        let (fx, fy) = (flux_of(&x.0), flux_of(&y.0));
        fx.cmp(&fy).then(x.1.cmp(&y.1)).then_with(|| {
            let kx: Vec<f64> = x.0.iter().map(|c| c.arg()).collect();
            let ky: Vec<f64> = y.0.iter().map(|c| c.arg()).collect();
            kx.partial_cmp(&ky).unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut out = Vec::new();
    for (block, (p, dim)) in blocks.into_iter().enumerate() {
        let stray = sc
            .tubes
            .iter()
            .zip(&p)
            .filter(|(t, _)| t.a != t.c)
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max);
        if stray > IDEMPOTENT_TOL {
            return Err(Error::Numerical(format!("central idempotent mixes fluxes ({stray:.3e})")));
        }
        for f in flux_of(&p) {
            let coeffs = sc
                .tubes
                .iter()
                .zip(&p)
                .map(|(t, &c)| if t.a == f && t.c == f { c } else { zero() })
                .collect();
            out.push(Idempotent {
                sector: format!("block{block}"),
                flux: f,
                dim,
                spin: None,
                coeffs,
                block,
            });
        }
    }
    Ok(out)
}

/// Doubled-sector tag `ab̄` from label names.
pub fn sector_name(cat: &CategoryData<f64>, a: usize, b: usize) -> String {
    format!("{}{}\u{304}", cat.label_name(a), cat.label_name(b))
}

/// Ring length used to evaluate the Dehn rotation on idempotent ranges.
const DEHN_LENGTH: usize = 4;

/// Spin of each flux component from the full seam rotation `D^L` restricted to the
/// range of the component: it acts as `exp(-2 pi i h)`.
pub fn dehn_spins(cyl: &Cylinder, sc: &StructureConstants, idems: &[Idempotent]) -> Result<Vec<Option<f64>>> {
    idems
        .iter()
        .map(|p| {
            let basis = match cyl.build_ring_basis(DEHN_LENGTH, p.flux) {
                Ok(b) => b,
                Err(Error::FluxNotRealizable(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let op = idempotent_operator(cyl, sc, p, &basis)?;
            let dense = op.to_dense();
            let rank = linalg::rank(dense.as_ref(), 1e-8)?;
            if rank == 0 {
                return Ok(None);
            }
            let range = column_space(&dense, rank)?;
            let dehn = cyl.build_dehn_twist(&basis)?.to_dense();
            let moved = linalg::matmul(dehn.as_ref(), range.as_ref());
            let adj = Mat::from_fn(range.ncols(), range.nrows(), |i, j| range[(j, i)].conj());
            let restricted = linalg::matmul(adj.as_ref(), moved.as_ref());
            let vals = linalg::eigenvalues(restricted.as_ref())?;
            let turns: Vec<f64> = vals.iter().map(|v| reduce_turns(-v.arg() / (2.0 * std::f64::consts::PI))).collect();
            let h = turns[0];
            if turns.iter().any(|t| reduce_turns(t - h).abs() > 1e-6) {
                return Ok(None);
            }
            Ok(Some(h))
        })
        .collect()
}

fn column_space(a: &Mat<c64>, rank: usize) -> Result<Mat<c64>> {
    linalg::ensure_sequential();
    let svd = a
        .svd()
        .map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    let u = svd.U();
    Ok(Mat::from_fn(a.nrows(), rank, |i, j| u[(i, j)]))
}

/// Ring operator of a flux component: `sum_t p_t A_t` on `basis`.
pub fn idempotent_operator(
    cyl: &Cylinder,
    sc: &StructureConstants,
    p: &Idempotent,
    basis: &RingBasis,
) -> Result<crate::cylinder::RingOperator> {
    if basis.flux() != p.flux {
        return Err(Error::BasisMismatch("idempotent lives on a different flux".into()));
    }
    let dim = basis.len();
    let mut m = Mat::<c64>::zeros(dim, dim);
    for (tube, c) in sc.tubes.iter().zip(&p.coeffs) {
        if *c == zero() {
            continue;
        }
        let op = cyl.build_tube_operator(*tube, basis)?;
        for (i, j, re, im) in op.to_triplets(0.0).entries {
            m[(i, j)] += c * c64::new(re, im);
        }
    }
    Ok(crate::cylinder::RingOperator::from_dense(basis.l(), p.flux, p.flux, m))
}

/// Result of sector labelling.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SectorReport {
    pub warnings: Vec<String>,
}

/// Names each central idempotent after the doubled sector `(a, b̄)` whose spin
/// `h_a - h_b` and flux content `{f : N[a][b][f] = 1}` it matches, then sorts the
/// components by flux and spin. `dehn` holds per-component spins when available;
/// without them a block is matched on flux content alone.
pub fn classify_sectors(
    cat: &CategoryData<f64>,
    idems: &mut Vec<Idempotent>,
    spins: &BTreeMap<(usize, usize), f64>,
    dehn: Option<&[Option<f64>]>,
) -> SectorReport {
    let mut report = SectorReport::default();
    let n = cat.len();
    let nblocks = idems.iter().map(|p| p.block + 1).max().unwrap_or(0);
    for block in 0..nblocks {
        let members: Vec<usize> = (0..idems.len()).filter(|&i| idems[i].block == block).collect();
        let fluxes: Vec<usize> = members.iter().map(|&i| idems[i].flux).collect();
        let measured: Option<f64> = dehn.and_then(|d| {
            let hs: Vec<f64> = members.iter().filter_map(|&i| d[i]).collect();
            if hs.len() == members.len() && hs.iter().all(|h| reduce_turns(h - hs[0]).abs() < 1e-6) {
                hs.first().copied()
            } else {
                None
            }
        });
        let candidates: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .filter(|&(a, b)| {
                let content: Vec<usize> = (0..n).filter(|&f| cat.fuses(a, b, f)).collect();
                content == fluxes
                    && measured.is_none_or(|h| spins.get(&(a, b)).is_some_and(|s| reduce_turns(s - h).abs() < 1e-6))
            })
            .collect();
        // (a, b) and (b, a) are distinguished only by spin; with equal spins they
        // describe the same block when a == b.
        match candidates.as_slice() {
            [(a, b)] => {
                let name = sector_name(cat, *a, *b);
                let h = spins.get(&(*a, *b)).copied();
                for &i in &members {
                    idems[i].sector = name.clone();
                    idems[i].spin = h;
                }
            }
            [] => {
                report.warnings.push(format!(
                    "unresolved sector for block {block}: no doubled pair matches fluxes {fluxes:?} and spin {measured:?}"
                ));
                for &i in &members {
                    idems[i].sector = format!("unresolved{block}");
                    idems[i].spin = measured;
                }
            }
            many => {
                let names: Vec<String> = many.iter().map(|&(a, b)| sector_name(cat, a, b)).collect();
                report.warnings.push(format!(
                    "unresolved sector for block {block}: candidates {}",
                    names.join(", ")
                ));
                for &i in &members {
                    idems[i].sector = format!("unresolved{block}");
                    idems[i].spin = measured;
                }
            }
        }
    }
    idems.sort_by(|x, y| {
        x.flux
            .cmp(&y.flux)
            .then(x.spin.unwrap_or(f64::NAN).total_cmp(&y.spin.unwrap_or(f64::NAN)))
            .then(x.sector.cmp(&y.sector))
    });
    report
}

//! Eigenpairs of ring operators and the conformal data read off from them.

use crate::cylinder::{Cylinder, RingBasis, RingOperator, DENSE_LIMIT};
use crate::error::{Error, Result};
use crate::linalg::{self, c64, zero};
use crate::tube::{Idempotent, StructureConstants};
use faer::Mat;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

/// Residual bound accepted for every returned eigenpair, relative to `|λ_0|`.
pub const EIG_TOL: f64 = 1e-8;
/// Relative eigenvalue distance below which eigenpairs are treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;
/// Weight below which a record's sector assignment is flagged as mixed.
pub const CLEAN_WEIGHT: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Method {
    Dense,
    Subspace,
}

/// Leading eigenpairs by descending modulus, vectors normalized to unit length.
#[derive(Clone, Debug)]
pub struct EigenSolution {
    pub values: Vec<c64>,
    pub vectors: Vec<Vec<c64>>,
    pub residuals: Vec<f64>,
    pub method: Method,
}

impl EigenSolution {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn descending(a: &c64, b: &c64) -> std::cmp::Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then(a.arg().total_cmp(&b.arg()))
}

/// Grows a cut after `k` leading values so that no degenerate group is split.
fn complete_groups(sorted: &[c64], k: usize) -> usize {
    let mut k = k.min(sorted.len());
    while k > 0 && k < sorted.len() {
        let (last, next) = (sorted[k - 1], sorted[k]);
        if (last - next).norm() > DEGENERACY_TOL * last.norm().max(next.norm()) {
            break;
        }
        k += 1;
    }
    k
}

fn normalized(v: Vec<c64>) -> Vec<c64> {
    let n = linalg::norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

fn residual(op: &RingOperator, lambda: c64, v: &[c64]) -> f64 {
    let tv = op.apply(v);
    let r: Vec<c64> = tv.iter().zip(v).map(|(a, b)| a - lambda * b).collect();
    linalg::norm(&r) / linalg::norm(v)
}

/// The `n_states` leading eigenpairs, extended so that the last degenerate group
/// is complete. Dimensions up to [`DENSE_LIMIT`] use a dense
/// eigendecomposition; larger ones use subspace iteration with Rayleigh-Ritz
/// extraction started from a seeded random block.
pub fn eigendecompose(op: &RingOperator, n_states: usize, seed: u64) -> Result<EigenSolution> {
    eigendecompose_with(op, n_states, seed, DENSE_LIMIT)
}

/// [`eigendecompose`] with an explicit dense/iterative switch-over dimension.
pub fn eigendecompose_with(op: &RingOperator, n_states: usize, seed: u64, dense_limit: usize) -> Result<EigenSolution> {
    if op.dim_in() != op.dim_out() {
        return Err(Error::BasisMismatch("eigendecomposition needs a square operator".into()));
    }
    let n = op.dim_in();
    let k = n_states.min(n);
    let (values, vectors, method) = if n <= dense_limit {
        let (vals, vecs) = linalg::eig(op.to_dense().as_ref())?;
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&i, &j| descending(&vals[i], &vals[j]));
        let sorted: Vec<c64> = order.iter().map(|&i| vals[i]).collect();
        order.truncate(complete_groups(&sorted, k));
        let values = order.iter().map(|&i| vals[i]).collect();
        let vectors = order
            .iter()
            .map(|&i| normalized(linalg::column(vecs.as_ref(), i)))
            .collect();
        (values, vectors, Method::Dense)
    } else {
        let (values, vectors) = subspace_iteration(op, k, seed)?;
        (values, vectors, Method::Subspace)
    };
    let scale = values.first().map_or(1.0, |v: &c64| v.norm()).max(f64::MIN_POSITIVE);
    let residuals: Vec<f64> = values
        .iter()
        .zip(&vectors)
        .map(|(&l, v)| residual(op, l, v) / scale)
        .collect();
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    if worst > EIG_TOL {
        return Err(Error::Eigensolver { residual: worst });
    }
    Ok(EigenSolution {
        values,
        vectors,
        residuals,
        method,
    })
}

const SUBSPACE_MAX_ITER: usize = 20000;

fn subspace_iteration(op: &RingOperator, k: usize, seed: u64) -> Result<(Vec<c64>, Vec<Vec<c64>>)> {
    let n = op.dim_in();
    let m = (2 * k + 8).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut block: Vec<Vec<c64>> = (0..m)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    c64::new(re, im)
                })
                .collect()
        })
        .collect();
    let mut q = linalg::orthonormalize(&block, 1e-12);
    let mut best = f64::INFINITY;
    for _ in 0..SUBSPACE_MAX_ITER {
        let w: Vec<Vec<c64>> = q.par_iter().map(|v| op.apply(v)).collect();
        let r = q.len();
        let h = Mat::from_fn(r, r, |i, j| linalg::dot(&q[i], &w[j]));
        let (theta, s) = linalg::eig(h.as_ref())?;
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&i, &j| descending(&theta[i], &theta[j]));
        let combine = |basis: &[Vec<c64>], col: usize| -> Vec<c64> {
            let mut out = vec![zero(); n];
            for (b, v) in basis.iter().enumerate() {
                let c = s[(b, col)];
                for (o, x) in out.iter_mut().zip(v) {
                    *o += c * x;
                }
            }
            out
        };
        let ritz: Vec<Vec<c64>> = order.par_iter().map(|&i| combine(&q, i)).collect();
        let images: Vec<Vec<c64>> = order.par_iter().map(|&i| combine(&w, i)).collect();
        let scale = theta[order[0]].norm().max(f64::MIN_POSITIVE);
        let sorted: Vec<c64> = order.iter().map(|&i| theta[i]).collect();
        let k = complete_groups(&sorted[..r.saturating_sub(1).max(k.min(r))], k);
        let worst = (0..k)
            .map(|p| {
                let lam = theta[order[p]];
                let res: Vec<c64> = images[p].iter().zip(&ritz[p]).map(|(a, b)| a - lam * b).collect();
                linalg::norm(&res) / (linalg::norm(&ritz[p]) * scale)
            })
            .fold(0.0, f64::max);
        best = best.min(worst);
        if worst < 1e-11 {
            let values = order[..k].iter().map(|&i| theta[i]).collect();
            let vectors = ritz.into_iter().take(k).map(normalized).collect();
            return Ok((values, vectors));
        }
        block = images;
        q = linalg::orthonormalize(&block, 1e-12);
    }
    Err(Error::Eigensolver { residual: best })
}

/// Ring operator of one idempotent component, applied term by term so that it
/// never needs a dense matrix.
#[derive(Clone, Debug)]
pub struct SectorProjector {
    pub tag: String,
    pub flux: usize,
    terms: Vec<(c64, RingOperator)>,
}

impl SectorProjector {
    pub fn new(cyl: &Cylinder, sc: &StructureConstants, idem: &Idempotent, basis: &RingBasis) -> Result<Self> {
        if basis.flux() != idem.flux {
            return Err(Error::BasisMismatch("projector built on a different flux".into()));
        }
        let terms = sc
            .tubes
            .iter()
            .zip(&idem.coeffs)
            .filter(|(_, c)| **c != zero())
            .map(|(t, c)| Ok((*c, cyl.build_tube_operator(*t, basis)?)))
            .collect::<Result<_>>()?;
        Ok(SectorProjector {
            tag: idem.component_tag(cyl.category()),
            flux: idem.flux,
            terms,
        })
    }

    pub fn apply(&self, v: &[c64]) -> Vec<c64> {
        let mut out = vec![zero(); v.len()];
        for (c, op) in &self.terms {
            for (o, x) in out.iter_mut().zip(op.apply(v)) {
                *o += c * x;
            }
        }
        out
    }

    pub fn to_dense(&self, dim: usize) -> Mat<c64> {
        let mut m = Mat::<c64>::zeros(dim, dim);
        for (c, op) in &self.terms {
            let d = op.to_dense();
            for j in 0..dim {
                for i in 0..dim {
                    m[(i, j)] += c * d[(i, j)];
                }
            }
        }
        m
    }
}

/// `||P_i v||^2 / sum_j ||P_j v||^2` for every vector and projector.
pub fn project_sectors(vectors: &[Vec<c64>], projectors: &[SectorProjector]) -> Vec<Vec<f64>> {
    vectors
        .par_iter()
        .map(|v| {
            let w: Vec<f64> = projectors
                .iter()
                .map(|p| linalg::norm(&p.apply(v)).powi(2))
                .collect();
            let total: f64 = w.iter().sum();
            if total == 0.0 {
                w
            } else {
                w.into_iter().map(|x| x / total).collect()
            }
        })
        .collect()
}

/// Finite-size fit `log|λ_0(L)| = -f L + π v c_eff / (6 L)`.
#[derive(Clone, Debug, Serialize)]
pub struct Calibration {
    pub free_energy: f64,
    pub c_eff: f64,
    pub velocity: f64,
    /// Root-mean-square misfit of the two-parameter fit.
    pub rms_residual: f64,
    pub sizes: Vec<usize>,
}

/// Sound velocity of the isotropic checkerboard lattice in units of the row spacing.
pub fn isotropic_velocity() -> f64 {
    2.0 / 3f64.sqrt()
}

pub fn calibrate(samples: &[(usize, f64)], velocity: f64) -> Result<Calibration> {
    if samples.len() < 3 {
        return Err(Error::Parameter(format!(
            "calibration needs at least 3 sizes, got {}",
            samples.len()
        )));
    }
    // Normal equations for y = a L + b / L.
    let (mut sll, mut sl, mut sii, mut syl, mut syi) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(l, y) in samples {
        let l = l as f64;
        sll += l * l;
        sl += 1.0;
        sii += 1.0 / (l * l);
        syl += y * l;
        syi += y / l;
    }
    let det = sll * sii - sl * sl;
    if det.abs() < 1e-300 {
        return Err(Error::Parameter("calibration sizes must be distinct".into()));
    }
    let a = (syl * sii - syi * sl) / det;
    let b = (sll * syi - sl * syl) / det;
    let rms = (samples
        .iter()
        .map(|&(l, y)| {
            let l = l as f64;
            (a * l + b / l - y).powi(2)
        })
        .sum::<f64>()
        / samples.len() as f64)
        .sqrt();
    let mut sizes: Vec<usize> = samples.iter().map(|s| s.0).collect();
    sizes.sort();
    Ok(Calibration {
        free_energy: -a,
        c_eff: 6.0 * b / (PI * velocity),
        velocity,
        rms_residual: rms,
        sizes,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumRecord {
    pub index: usize,
    pub delta: f64,
    /// `Δ - Δ_0`: the measured part, independent of the anchor.
    pub gap: f64,
    pub spin: f64,
    pub sector: String,
    pub weights: Vec<(String, f64)>,
    pub weight_max: f64,
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub flagged: bool,
}

/// Conventions for turning eigenvalues into conformal data.
#[derive(Clone, Debug)]
pub struct ScaleSettings {
    pub l: usize,
    pub velocity: f64,
    pub delta0: f64,
    /// `log|λ_0|` of the defect-free ground state at the same `L`.
    pub reference_log: f64,
}

/// Conformal spin `arg(μ) (L/2) / 2π` of a two-site translation eigenvalue `μ`,
/// reduced into `(-L/4, L/4]`.
pub fn spin_from_translation(mu: c64, l: usize) -> f64 {
    let period = l as f64 / 2.0;
    let s = mu.arg() * period / (2.0 * PI);
    let r = s - period * (s / period).round();
    if r <= -period / 2.0 {
        r + period
    } else {
        r
    }
}

/// Groups of indices whose eigenvalues agree to `DEGENERACY_TOL` relative.
fn degenerate_groups(values: &[c64], tol: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, v) in values.iter().enumerate() {
        match groups
            .iter_mut()
            .find(|g| g.iter().any(|&j| (values[j] - v).norm() <= tol * v.norm().max(values[j].norm())))
        {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    groups
}

/// Diagonalizes `apply` restricted to span(`vectors`); returns rotated unit vectors
/// and the restricted eigenvalues.
fn diagonalize_within(vectors: &[Vec<c64>], apply: &dyn Fn(&[c64]) -> Vec<c64>) -> Result<(Vec<Vec<c64>>, Vec<c64>)> {
    let q = linalg::orthonormalize(vectors, 1e-10);
    let k = q.len();
    let images: Vec<Vec<c64>> = q.iter().map(|v| apply(v)).collect();
    let m = Mat::from_fn(k, k, |i, j| linalg::dot(&q[i], &images[j]));
    let (vals, s) = linalg::eig(m.as_ref())?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| vals[a].arg().total_cmp(&vals[b].arg()).then(vals[a].norm().total_cmp(&vals[b].norm())));
    let n = vectors[0].len();
    let rotated = order
        .iter()
        .map(|&c| {
            let mut out = vec![zero(); n];
            for (b, v) in q.iter().enumerate() {
                for (o, x) in out.iter_mut().zip(v) {
                    *o += s[(b, c)] * x;
                }
            }
            normalized(out)
        })
        .collect();
    Ok((rotated, order.iter().map(|&c| vals[c]).collect()))
}

/// Scaling dimensions, spins and sector weights of every eigenpair, sorted by
/// `(Δ, s, sector)` and indexed in that order.
pub fn extract_spectrum(
    sol: &EigenSolution,
    translation: &RingOperator,
    projectors: &[SectorProjector],
    scale: &ScaleSettings,
) -> Result<Vec<SpectrumRecord>> {
    let mut vectors = sol.vectors.clone();
    let mut mus: Vec<Option<c64>> = vec![None; sol.len()];
    for group in degenerate_groups(&sol.values, DEGENERACY_TOL) {
        if group.len() < 2 {
            continue;
        }
        let block: Vec<Vec<c64>> = group.iter().map(|&i| vectors[i].clone()).collect();
        let (rot, vals) = diagonalize_within(&block, &|v| translation.apply(v))?;
        if rot.len() != group.len() {
            return Err(Error::Numerical("degenerate eigenvectors are linearly dependent".into()));
        }
        // still degenerate under translation: split by sector projectors
        let mut rot = rot;
        for sub in degenerate_groups(&vals, DEGENERACY_TOL) {
            if sub.len() < 2 || projectors.is_empty() {
                continue;
            }
            let sb: Vec<Vec<c64>> = sub.iter().map(|&i| rot[i].clone()).collect();
            let weighted = |v: &[c64]| {
                let mut out = vec![zero(); v.len()];
                for (k, p) in projectors.iter().enumerate() {
                    for (o, x) in out.iter_mut().zip(p.apply(v)) {
                        *o += (k as f64 + 1.0) * x;
                    }
                }
                out
            };
            let (r2, _) = diagonalize_within(&sb, &weighted)?;
            for (&i, v) in sub.iter().zip(r2) {
                rot[i] = v;
            }
        }
        for (&i, (v, mu)) in group.iter().zip(rot.into_iter().zip(vals)) {
            vectors[i] = v;
            mus[i] = Some(mu);
        }
    }
    let mus: Vec<c64> = vectors
        .iter()
        .zip(mus)
        .map(|(v, mu)| mu.unwrap_or_else(|| linalg::dot(v, &translation.apply(v)) / linalg::dot(v, v)))
        .collect();
    let weights = project_sectors(&vectors, projectors);
    let factor = scale.l as f64 / (2.0 * PI * scale.velocity);
    let mut records: Vec<SpectrumRecord> = sol
        .values
        .iter()
        .enumerate()
        .map(|(i, lam)| {
            let gap = factor * (scale.reference_log - lam.norm().ln());
            let (best, weight_max) = weights[i]
                .iter()
                .enumerate()
                .fold((None, 0.0), |acc, (k, &w)| if w > acc.1 { (Some(k), w) } else { acc });
            SpectrumRecord {
                index: i,
                delta: scale.delta0 + gap,
                gap,
                spin: spin_from_translation(mus[i], scale.l),
                sector: best.map_or_else(|| "none".to_string(), |k| projectors[k].tag.clone()),
                weights: projectors.iter().zip(&weights[i]).map(|(p, &w)| (p.tag.clone(), w)).collect(),
                weight_max,
                lambda_re: lam.re,
                lambda_im: lam.im,
                // a mixed translation eigenvector has |μ| < 1 and no definite spin
                flagged: weight_max < CLEAN_WEIGHT || (mus[i].norm() - 1.0).abs() > 1e-6,
            }
        })
        .collect();
    sort_canonical(&mut records);
    Ok(records)
}

fn round6(x: f64) -> i64 {
    (x * 1e6).round() as i64
}

/// Orders by Δ, then spin, then sector (values compared at printed precision) and
/// renumbers.
pub fn sort_canonical(records: &mut [SpectrumRecord]) {
    records.sort_by(|a, b| {
        round6(a.delta)
            .cmp(&round6(b.delta))
            .then(round6(a.spin).cmp(&round6(b.spin)))
            .then(a.sector.cmp(&b.sector))
            .then(a.lambda_re.total_cmp(&b.lambda_re))
            .then(a.lambda_im.total_cmp(&b.lambda_im))
    });
    for (i, r) in records.iter_mut().enumerate() {
        r.index = i;
    }
}

/// Velocity that puts the first spin ±1 state of the ground sector exactly one unit
/// above the ground state.
pub fn refined_velocity(records: &[SpectrumRecord], velocity: f64) -> Option<f64> {
    let ground = records.iter().min_by(|a, b| a.gap.total_cmp(&b.gap))?;
    let desc = records
        .iter()
        .filter(|r| r.sector == ground.sector && !r.flagged && ((r.spin.abs() - 1.0).abs() < 1e-6))
        .min_by(|a, b| a.gap.total_cmp(&b.gap))?;
    let gap = desc.gap - ground.gap;
    (gap > 0.0).then_some(velocity * gap)
}

/// Rescales the measured part of every Δ for a new velocity.
pub fn rescale(records: &mut [SpectrumRecord], old_velocity: f64, new_velocity: f64, delta0: f64) {
    let f = old_velocity / new_velocity;
    for r in records.iter_mut() {
        r.gap *= f;
        r.delta = delta0 + r.gap;
    }
}

fn fixed6(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

fn sig12(x: f64) -> String {
    format!("{x:.11e}")
}

pub const CSV_HEADER: &str = "index,delta,spin,sector,weight_max,lambda_re,lambda_im,flagged";

/// Spectrum table; sector tags contain commas and are quoted.
pub fn to_csv(records: &[SpectrumRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let row = |w: &mut csv::Writer<Vec<u8>>, fields: &[&str]| w.write_record(fields).expect("in-memory write");
    row(&mut w, &CSV_HEADER.split(',').collect::<Vec<_>>());
    for r in records {
        row(
            &mut w,
            &[
                &r.index.to_string(),
                &fixed6(r.delta),
                &fixed6(r.spin),
                &r.sector,
                &fixed6(r.weight_max),
                &sig12(r.lambda_re),
                &sig12(r.lambda_im),
                &r.flagged.to_string(),
            ],
        );
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

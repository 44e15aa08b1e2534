//! Strange-correlator transfer matrix and symmetry operators on a periodic chain.
//!
//! A ring state at flux `f` is a label string `(x_1, ..., x_L, μ)`. Consecutive
//! labels, including `x_L -> μ`, are joined by the line label `t` (`N[x_i][t][x_{i+1}] = 1`),
//! and the seam bond `μ -> x_1` carries the flux (`N[μ][f][x_1] = 1`). At zero flux the
//! seam forces `μ = x_1` and the basis is the plain periodic one.
//!
//! Face updates act on `x_i` given its neighbours, through the fusion channel of the
//! two line legs entering the face: `W = sum_c w_c P^(c)` with
//! `P^(c)_{x' <- x} = F(l,t,t,r,x',c) F(l,t,t,r,x,c)`, `w_0 = 1 - d_t^2` and `w_c = 1`
//! otherwise. The result is divided by the all-`t` face weight, so an empty face
//! has weight 1.

use crate::category::CategoryData;
use crate::error::{Error, Result};
use crate::linalg::{self, c64, one, zero, Sparse};
use crate::scalar::principal_sqrt_c;
use crate::tube::Tube;
use faer::Mat;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;

/// Largest ring dimension converted to a dense matrix without complaint.
pub const DENSE_LIMIT: usize = 6000;

#[derive(Clone, Debug)]
pub struct RingBasis {
    l: usize,
    flux: usize,
    line: usize,
    states: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
}

impl RingBasis {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn flux(&self) -> usize {
        self.flux
    }

    pub fn line(&self) -> usize {
        self.line
    }

    /// State `i` as `(x_1, ..., x_L, μ)`.
    pub fn state(&self, i: usize) -> &[u8] {
        &self.states[i]
    }

    pub fn states(&self) -> &[Vec<u8>] {
        &self.states
    }

    pub fn index_of(&self, s: &[u8]) -> Option<usize> {
        self.index.get(s).copied()
    }
}

#[derive(Clone, Debug)]
enum Repr {
    Sparse(Sparse),
    Dense(Mat<c64>),
    /// Factors applied first to last.
    Product(Vec<Sparse>),
}

/// Linear map between two ring bases with dense matrix semantics.
#[derive(Clone, Debug)]
pub struct RingOperator {
    pub l: usize,
    pub flux_in: usize,
    pub flux_out: usize,
    dim_in: usize,
    dim_out: usize,
    repr: Repr,
}

#[derive(Clone, Debug, Serialize)]
pub struct TripletExport {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, f64, f64)>,
}

impl RingOperator {
    fn sparse(l: usize, flux_in: usize, flux_out: usize, m: Sparse) -> Self {
        RingOperator {
            l,
            flux_in,
            flux_out,
            dim_in: m.ncols(),
            dim_out: m.nrows(),
            repr: Repr::Sparse(m),
        }
    }

    pub fn from_dense(l: usize, flux_in: usize, flux_out: usize, m: Mat<c64>) -> Self {
        RingOperator {
            l,
            flux_in,
            flux_out,
            dim_in: m.ncols(),
            dim_out: m.nrows(),
            repr: Repr::Dense(m),
        }
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn apply(&self, x: &[c64]) -> Vec<c64> {
        match &self.repr {
            Repr::Sparse(s) => s.apply(x),
            Repr::Dense(m) => (0..m.nrows())
                .map(|i| (0..m.ncols()).fold(zero(), |s, j| s + m[(i, j)] * x[j]))
                .collect(),
            Repr::Product(fs) => fs.iter().fold(x.to_vec(), |v, f| f.apply(&v)),
        }
    }

    pub fn to_dense(&self) -> Mat<c64> {
        match &self.repr {
            Repr::Sparse(s) => s.to_dense(),
            Repr::Dense(m) => m.clone(),
            Repr::Product(fs) => {
                let mut m = linalg::identity(self.dim_in);
                for f in fs {
                    m = f.mul_dense(m.as_ref());
                }
                m
            }
        }
    }

    /// `self * other` (apply `other` first).
    pub fn compose(&self, other: &RingOperator) -> Result<RingOperator> {
        if self.dim_in != other.dim_out || self.flux_in != other.flux_out {
            return Err(Error::BasisMismatch(format!(
                "cannot compose {}x{} after {}x{}",
                self.dim_out, self.dim_in, other.dim_out, other.dim_in
            )));
        }
        let repr = match (&self.repr, &other.repr) {
            (Repr::Sparse(a), Repr::Sparse(b)) => Repr::Sparse(a.mul_sparse(b)),
            _ => Repr::Dense(linalg::matmul(self.to_dense().as_ref(), other.to_dense().as_ref())),
        };
        Ok(RingOperator {
            l: self.l,
            flux_in: other.flux_in,
            flux_out: self.flux_out,
            dim_in: other.dim_in,
            dim_out: self.dim_out,
            repr,
        })
    }

    /// Entries with modulus above `tol`, row-major.
    pub fn to_triplets(&self, tol: f64) -> TripletExport {
        let entries = match &self.repr {
            Repr::Sparse(s) => s
                .triplets()
                .filter(|t| t.2.norm() > tol)
                .map(|(i, j, v)| (i, j, v.re, v.im))
                .collect(),
            _ => {
                let m = self.to_dense();
                let mut out = Vec::new();
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        let v = m[(i, j)];
                        if v.norm() > tol {
                            out.push((i, j, v.re, v.im));
                        }
                    }
                }
                out
            }
        };
        TripletExport {
            rows: self.dim_out,
            cols: self.dim_in,
            entries,
        }
    }
}

/// Checkerboard order of the two half-rows of the transfer matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    /// `T = T_even T_odd`: faces at even 0-based positions act first.
    EvenAfterOdd,
    /// `T = T_odd T_even`.
    OddAfterEven,
}

/// Crossing tensor of a defect seam at flux `f`:
/// `(x_1, μ | x_2, y) -> F(f, x_1, t, y, μ, x_2)`.
#[derive(Clone, Debug)]
pub struct DefectSeam {
    pub flux: usize,
    /// Entries keyed by `[x_1, μ, x_2, y]`, restricted to admissible bulk bonds
    /// `x_1 -> x_2` and `μ -> y`.
    pub entries: Vec<([usize; 4], c64)>,
}

impl DefectSeam {
    /// True when every entry is `δ(μ, x_1) δ(y, x_2)`.
    pub fn is_identity(&self) -> bool {
        self.entries.iter().all(|([x1, mu, x2, y], v)| {
            if x1 == mu && x2 == y {
                (*v - one()).norm() < 1e-14
            } else {
                v.norm() < 1e-14
            }
        })
    }
}

/// Single-particle data of the constructed local weights, with the unit label as
/// the particle and the line label as the empty site.
#[derive(Clone, Debug)]
pub struct HardHexagonWeights {
    pub fugacity: c64,
    /// Weight for a particle persisting through its own face update (must vanish).
    pub exclusion: c64,
    /// Deviation of a face between two particles from the product of single-neighbour factors.
    pub multiplicativity_residual: f64,
}

/// Category plus line label: everything needed to assemble ring operators.
#[derive(Clone, Debug)]
pub struct Cylinder {
    cat: CategoryData<f64>,
    line: usize,
    face_norm: c64,
}

impl Cylinder {
    pub fn new(cat: CategoryData<f64>, line: usize) -> Result<Self> {
        if line == 0 || line >= cat.len() {
            return Err(Error::Parameter(format!("line label {line} must be a non-unit label")));
        }
        let mut cyl = Cylinder {
            cat,
            line,
            face_norm: one(),
        };
        let raw = cyl.raw_face_weight(line, line, line, line);
        if raw.norm() < 1e-12 {
            return Err(Error::DegenerateCategory("all-line face weight vanishes".into()));
        }
        cyl.face_norm = raw;
        Ok(cyl)
    }

    pub fn category(&self) -> &CategoryData<f64> {
        &self.cat
    }

    pub fn line(&self) -> usize {
        self.line
    }

    fn f(&self, a: usize, b: usize, c: usize, d: usize, e: usize, f: usize) -> c64 {
        self.cat.f(a, b, c, d, e, f)
    }

    fn raw_face_weight(&self, l: usize, x: usize, xp: usize, r: usize) -> c64 {
        let t = self.line;
        let dt = self.cat.dim(t);
        let mut w = zero();
        for &c in self.cat.channels(t, t) {
            let wc = if c == 0 { one() - dt * dt } else { one() };
            w += wc * self.f(l, t, t, r, xp, c) * self.f(l, t, t, r, x, c);
        }
        w
    }

    /// Face weight for `x -> x'` between neighbours `l` and `r`.
    pub fn face_weight(&self, l: usize, x: usize, xp: usize, r: usize) -> c64 {
        self.raw_face_weight(l, x, xp, r) / self.face_norm
    }

    pub fn hard_hexagon_weights(&self) -> HardHexagonWeights {
        let t = self.line;
        let w = |l, x, xp, r| self.face_weight(l, x, xp, r);
        let empty = w(t, t, t, t);
        let fugacity = w(t, t, 0, t) * w(t, 0, t, t) * w(0, t, t, t) * w(t, t, t, 0)
            / (empty * empty * empty * empty);
        let exclusion = w(t, 0, 0, t);
        let multiplicativity_residual =
            (w(0, t, t, 0) * empty - w(0, t, t, t) * w(t, t, t, 0)).norm();
        HardHexagonWeights {
            fugacity,
            exclusion,
            multiplicativity_residual,
        }
    }

    /// Ring basis for even `L >= 4`.
    pub fn build_ring_basis(&self, l: usize, flux: usize) -> Result<RingBasis> {
        if l < 4 || l % 2 != 0 {
            return Err(Error::Parameter(format!("ring length must be even and >= 4, got {l}")));
        }
        self.probe_basis(l, flux)
    }

    /// Ring basis for any `L >= 1`; short rings are used to probe the tube algebra.
    pub fn probe_basis(&self, l: usize, flux: usize) -> Result<RingBasis> {
        if l == 0 {
            return Err(Error::Parameter("ring length must be positive".into()));
        }
        if flux >= self.cat.len() {
            return Err(Error::UnknownLabel(flux.to_string()));
        }
        let n = self.cat.len();
        let t = self.line;
        let mut states = Vec::new();
        let mut cur = vec![0u8; l + 1];
        fn dfs(cyl: &Cylinder, pos: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>, n: usize, t: usize, flux: usize) {
            let l = cur.len() - 1;
            for v in 0..n {
                if pos > 0 && !cyl.cat.fuses(cur[pos - 1] as usize, t, v) {
                    continue;
                }
                if pos == l && !cyl.cat.fuses(v, flux, cur[0] as usize) {
                    continue;
                }
                cur[pos] = v as u8;
                if pos == l {
                    out.push(cur.clone());
                } else {
                    dfs(cyl, pos + 1, cur, out, n, t, flux);
                }
            }
        }
        dfs(self, 0, &mut cur, &mut states, n, t, flux);
        if states.is_empty() {
            return Err(Error::FluxNotRealizable(self.cat.label_name(flux).to_string()));
        }
        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(RingBasis {
            l,
            flux,
            line: t,
            states,
            index,
        })
    }

    fn check_basis(&self, basis: &RingBasis) -> Result<()> {
        if basis.line != self.line {
            return Err(Error::BasisMismatch("basis built for a different line label".into()));
        }
        Ok(())
    }

    fn other_flux(&self, basis: &RingBasis, flux: usize) -> Result<RingBasis> {
        if flux == basis.flux {
            Ok(basis.clone())
        } else {
            self.probe_basis(basis.l, flux)
        }
    }

    /// Face update at 0-based position `1 <= i <= L - 1` (position `L` is μ).
    pub fn local_face(&self, basis: &RingBasis, i: usize) -> Result<Sparse> {
        self.check_basis(basis)?;
        let l = basis.l;
        if i == 0 || i >= l {
            return Err(Error::Parameter(format!("bulk face position {i} outside 1..{l}")));
        }
        let n = self.cat.len();
        let cols: Vec<Vec<(usize, c64)>> = basis
            .states
            .par_iter()
            .map(|x| {
                let (left, right) = (x[i - 1] as usize, x[i + 1] as usize);
                let mut y = x.clone();
                let mut col = Vec::new();
                for xp in 0..n {
                    y[i] = xp as u8;
                    if let Some(j) = basis.index_of(&y) {
                        let w = self.face_weight(left, x[i] as usize, xp, right);
                        if w != zero() {
                            col.push((j, w));
                        }
                    }
                }
                col
            })
            .collect();
        Ok(Sparse::from_columns(basis.len(), basis.len(), cols))
    }

    pub fn defect_seam(&self, flux: usize) -> DefectSeam {
        let n = self.cat.len();
        let t = self.line;
        let mut entries = Vec::new();
        for x1 in 0..n {
            for mu in 0..n {
                for x2 in 0..n {
                    for y in 0..n {
                        if !(self.cat.fuses(x1, t, x2) && self.cat.fuses(mu, t, y)) {
                            continue;
                        }
                        entries.push(([x1, mu, x2, y], self.f(flux, x1, t, y, mu, x2)));
                    }
                }
            }
        }
        DefectSeam { flux, entries }
    }

    /// Moves the seam one site to the right:
    /// `(x_1, ..., x_L, μ) -> (x_2, ..., x_L, μ, y)` with weight `F(f, x_1, t, y, μ, x_2)`.
    pub fn defect_move(&self, basis: &RingBasis) -> Result<Sparse> {
        self.check_basis(basis)?;
        let l = basis.l;
        if l < 2 {
            return Err(Error::Parameter("defect move needs L >= 2".into()));
        }
        let (f, t, n) = (basis.flux, self.line, self.cat.len());
        let cols: Vec<Vec<(usize, c64)>> = basis
            .states
            .par_iter()
            .map(|x| {
                let mut y = Vec::with_capacity(l + 1);
                y.extend_from_slice(&x[1..]);
                y.push(0);
                let mut col = Vec::new();
                for v in 0..n {
                    y[l] = v as u8;
                    let w = self.f(f, x[0] as usize, t, v, x[l] as usize, x[1] as usize);
                    if w != zero() {
                        if let Some(j) = basis.index_of(&y) {
                            col.push((j, w));
                        }
                    }
                }
                col
            })
            .collect();
        Ok(Sparse::from_columns(basis.len(), basis.len(), cols))
    }

    /// Inverse of [`Cylinder::defect_move`], assembled block by block: the move only
    /// mixes the dropped label `x_1` into the new label `y` at fixed `(x_2, ..., x_L, μ)`.
    pub fn defect_move_inverse(&self, basis: &RingBasis) -> Result<Sparse> {
        let d = self.defect_move(basis)?;
        let l = basis.l;
        let mut blocks: HashMap<&[u8], (Vec<usize>, Vec<usize>)> = HashMap::new();
        for (i, s) in basis.states.iter().enumerate() {
            blocks.entry(&s[1..]).or_default().0.push(i);
        }
        for (j, s) in basis.states.iter().enumerate() {
            if let Some(b) = blocks.get_mut(&s[..l]) {
                b.1.push(j);
            }
        }
        let mut rows: Vec<Vec<(usize, c64)>> = vec![Vec::new(); basis.len()];
        let mut keys: Vec<&&[u8]> = blocks.keys().collect();
        keys.sort();
        for key in keys {
            let (ins, outs) = &blocks[*key];
            if ins.len() != outs.len() {
                return Err(Error::Numerical("defect move is not invertible".into()));
            }
            let m = Mat::from_fn(outs.len(), ins.len(), |r, c| d.get(outs[r], ins[c]));
            let sv = linalg::singular_values(m.as_ref())?;
            if sv.last().copied().unwrap_or(0.0) < 1e-12 * sv[0].max(1.0) {
                return Err(Error::Numerical("defect move block is singular".into()));
            }
            let inv = linalg::inverse(m.as_ref());
            for (r, &i) in ins.iter().enumerate() {
                for (c, &j) in outs.iter().enumerate() {
                    let v = inv[(r, c)];
                    if v.norm() > 0.0 {
                        rows[i].push((j, v));
                    }
                }
            }
        }
        Ok(Sparse::from_rows(basis.len(), basis.len(), rows))
    }

    /// All face updates, position 0 being the seam face `D^-1 W_{L-1} D`.
    pub fn faces(&self, basis: &RingBasis) -> Result<Vec<Sparse>> {
        let l = basis.l;
        let mut faces = Vec::with_capacity(l);
        faces.push(Sparse::identity(0));
        for i in 1..l {
            faces.push(self.local_face(basis, i)?);
        }
        let d = self.defect_move(basis)?;
        let di = self.defect_move_inverse(basis)?;
        faces[0] = di.mul_sparse(&faces[l - 1].mul_sparse(&d));
        Ok(faces)
    }

    /// Two-row checkerboard transfer matrix `T = T_even T_odd` (or the reverse order).
    pub fn build_transfer_matrix(&self, basis: &RingBasis) -> Result<RingOperator> {
        self.build_transfer_matrix_ordered(basis, Order::EvenAfterOdd)
    }

    pub fn build_transfer_matrix_ordered(&self, basis: &RingBasis, order: Order) -> Result<RingOperator> {
        if basis.l % 2 != 0 {
            return Err(Error::Parameter("transfer matrix needs even L".into()));
        }
        let faces = self.faces(basis)?;
        let even: Vec<Sparse> = faces.iter().step_by(2).cloned().collect();
        let odd: Vec<Sparse> = faces.iter().skip(1).step_by(2).cloned().collect();
        let factors = match order {
            Order::EvenAfterOdd => [even, odd].concat(),
            Order::OddAfterEven => [odd, even].concat(),
        };
        Ok(RingOperator {
            l: basis.l,
            flux_in: basis.flux,
            flux_out: basis.flux,
            dim_in: basis.len(),
            dim_out: basis.len(),
            repr: Repr::Product(factors),
        })
    }

    /// Two-site translation `(D^-1)^2`; at zero flux this is the cyclic shift by two sites.
    pub fn build_translation(&self, basis: &RingBasis) -> Result<RingOperator> {
        let di = self.defect_move_inverse(basis)?;
        Ok(RingOperator::sparse(basis.l, basis.flux, basis.flux, di.mul_sparse(&di)))
    }

    /// Full rotation `D^L` of the seam around the cylinder.
    pub fn build_dehn_twist(&self, basis: &RingBasis) -> Result<RingOperator> {
        let d = self.defect_move(basis)?;
        let mut acc = d.clone();
        for _ in 1..basis.l {
            acc = d.mul_sparse(&acc);
        }
        Ok(RingOperator::sparse(basis.l, basis.flux, basis.flux, acc))
    }

    /// Wrapping MPO of label `a`. Across a nonzero flux `f` the crossing is resolved as
    /// `sum_d sqrt(d_d) / (sqrt(d_a) sqrt(d_f)) A_(f, a, f, d)`.
    pub fn build_mpo_symmetry(&self, a: usize, basis: &RingBasis) -> Result<RingOperator> {
        let f = basis.flux;
        let dims = self.cat.dims();
        let sq = |z: c64| principal_sqrt_c(z);
        let mut total: Option<Sparse> = None;
        for d in 0..self.cat.len() {
            if !(self.cat.fuses(a, f, d) && self.cat.fuses(d, a, f)) {
                continue;
            }
            let coef = sq(dims[d]) / (sq(dims[a]) * sq(dims[f]));
            let op = self.tube_sparse(Tube { a: f, b: a, c: f, d }, basis, basis)?.scale(coef);
            total = Some(match total {
                None => op,
                Some(acc) => add_sparse(&acc, &op),
            });
        }
        let m = total.ok_or_else(|| Error::Parameter(format!("label {a} cannot wrap flux {f}")))?;
        Ok(RingOperator::sparse(basis.l, f, f, m))
    }

    /// Operator of tube `(a, b, c, d)` from the flux-`c` basis to the flux-`a` basis.
    pub fn build_tube_operator(&self, tube: Tube, basis_in: &RingBasis) -> Result<RingOperator> {
        if tube.c != basis_in.flux {
            return Err(Error::Parameter(format!(
                "tube {tube:?} needs input flux {}, basis has {}",
                tube.c, basis_in.flux
            )));
        }
        let out = self.other_flux(basis_in, tube.a)?;
        let m = self.tube_sparse(tube, basis_in, &out)?;
        Ok(RingOperator::sparse(basis_in.l, tube.c, tube.a, m))
    }

    fn tube_sparse(&self, tube: Tube, bin: &RingBasis, bout: &RingBasis) -> Result<Sparse> {
        let Tube { a, b, c, d } = tube;
        if !(self.cat.fuses(b, a, d) && self.cat.fuses(d, b, c)) {
            return Err(Error::Parameter(format!("tube {tube:?} is not admissible")));
        }
        self.check_basis(bin)?;
        let l = bin.l;
        let t = self.line;
        let dims = self.cat.dims();
        let norm = principal_sqrt_c(dims[b]) * principal_sqrt_c(dims[c]) / principal_sqrt_c(dims[d]);
        let cols: Vec<Vec<(usize, c64)>> = bin
            .states
            .par_iter()
            .map(|x| {
                let mut col = Vec::new();
                let mut y = vec![0u8; l + 1];
                for &y0 in self.cat.channels(b, x[0] as usize) {
                    y[0] = y0 as u8;
                    self.tube_dfs(x, &mut y, 0, one(), tube, t, bout, norm, &mut col);
                }
                col
            })
            .collect();
        let _ = (a, d);
        Ok(Sparse::from_columns(bout.len(), bin.len(), cols))
    }

    #[allow(clippy::too_many_arguments)]
    fn tube_dfs(&self, x: &[u8], y: &mut Vec<u8>, i: usize, acc: c64, tube: Tube, t: usize, bout: &RingBasis, norm: c64, col: &mut Vec<(usize, c64)>) {
        let l = x.len() - 1;
        if i == l {
            let (mu, x1, mup, x1p) = (x[l] as usize, x[0] as usize, y[l] as usize, y[0] as usize);
            let seam = self.f(mup, x1, tube.c, tube.b, tube.d, mu) * self.f(mup, x1, tube.b, tube.a, tube.d, x1p);
            let v = acc * seam * norm;
            if v != zero() {
                if let Some(j) = bout.index_of(y) {
                    col.push((j, v));
                }
            }
            return;
        }
        let (xi, xn, yi) = (x[i] as usize, x[i + 1] as usize, y[i] as usize);
        for &yn in self.cat.channels(tube.b, xn) {
            if !self.cat.fuses(yi, t, yn) {
                continue;
            }
            let w = self.f(tube.b, xi, t, yn, yi, xn);
            if w == zero() {
                continue;
            }
            y[i + 1] = yn as u8;
            self.tube_dfs(x, y, i + 1, acc * w, tube, t, bout, norm, col);
        }
    }
}

fn add_sparse(a: &Sparse, b: &Sparse) -> Sparse {
    let rows = (0..a.nrows())
        .map(|i| a.row(i).chain(b.row(i)).collect())
        .collect();
    Sparse::from_rows(a.nrows(), a.ncols(), rows)
}

//! Fusion-category data: labels, fusion rules, F-symbols and quantum dimensions.
//!
//! F-symbols use the convention `F(a, b, c, d, e, f) = [F^{abc}_d]_{e f}`, the
//! amplitude for re-bracketing `(a b) c -> d` through intermediate `e` into
//! `a (b c) -> d` through intermediate `f`. An entry can be nonzero only when
//! the four vertices `(a b -> e)`, `(e c -> d)`, `(b c -> f)` and `(a f -> d)`
//! are admissible.

use crate::error::{Error, Result};
use crate::scalar::{cast_complex, principal_sqrt, Real};
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub type Index6 = [usize; 6];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelId {
    pub index: usize,
    pub name: String,
}

/// Level and Galois index of an su(2)_k deformation root `q = exp(2 pi i p / (k + 2))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QParams {
    pub k: u32,
    pub p: u32,
}

impl QParams {
    pub fn new(k: u32, p: u32) -> Result<Self> {
        let params = QParams { k, p };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.k + 2;
        if self.p < 1 || 2 * self.p > n {
            return Err(Error::Parameter(format!(
                "p = {} outside 1..=(k+2)/2 for k = {}",
                self.p, self.k
            )));
        }
        if gcd(self.p, n) != 1 {
            return Err(Error::Parameter(format!(
                "gcd(p, k+2) = gcd({}, {}) != 1",
                self.p, n
            )));
        }
        Ok(())
    }

    /// Every admissible Galois index for level `k`.
    pub fn all_for_level(k: u32) -> Vec<QParams> {
        (1..=(k + 2) / 2)
            .filter(|&p| gcd(p, k + 2) == 1)
            .map(|p| QParams { k, p })
            .collect()
    }

    /// Twist `q^{j(j+1)}` of the label with spin `j = twice_spin / 2`, as a phase in turns.
    pub fn twist_turns(&self, twice_spin: u32) -> f64 {
        let s = twice_spin as f64;
        self.p as f64 * s * (s + 2.0) / (4.0 * (self.k + 2) as f64)
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FibVariant {
    Unitary,
    Galois,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    Su2k { params: QParams, twice_spins: Vec<u32> },
    Builtin { tag: String },
    Custom,
}

impl Provenance {
    /// The su(2)_k data this category is equivalent to, when known.
    ///
    /// The builtin Fibonacci tables are the integer-spin part of su(2)_3.
    pub fn su2k_equivalent(&self) -> Option<(QParams, Vec<u32>)> {
        match self {
            Provenance::Su2k { params, twice_spins } => Some((*params, twice_spins.clone())),
            Provenance::Builtin { tag } if tag == "fibonacci-unitary" => {
                Some((QParams { k: 3, p: 1 }, vec![0, 2]))
            }
            Provenance::Builtin { tag } if tag == "fibonacci-galois" => {
                Some((QParams { k: 3, p: 2 }, vec![0, 2]))
            }
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConsistencyReport {
    pub check: String,
    pub checked: usize,
    pub max_residual: f64,
    pub tol: f64,
    pub passed: bool,
    /// Index tuple at which the largest residual occurred.
    pub worst: Option<Vec<usize>>,
}

impl ConsistencyReport {
    /// Report for a single scalar residual.
    pub fn scalar(check: &str, residual: f64, tol: f64) -> Self {
        let mut r = ConsistencyReport::new(check, tol);
        r.record(residual, &[]);
        r.finish()
    }

    fn new(check: &str, tol: f64) -> Self {
        ConsistencyReport {
            check: check.to_string(),
            checked: 0,
            max_residual: 0.0,
            tol,
            passed: true,
            worst: None,
        }
    }

    fn record(&mut self, residual: f64, at: &[usize]) {
        self.checked += 1;
        if residual > self.max_residual || residual.is_nan() {
            self.max_residual = residual;
            self.worst = Some(at.to_vec());
        }
    }

    fn finish(mut self) -> Self {
        self.passed = self.max_residual <= self.tol;
        self
    }
}

/// Immutable fusion-category data for one multiplicity-free, self-dual category.
#[derive(Clone, Debug)]
pub struct CategoryData<T: Real> {
    labels: Vec<LabelId>,
    fusion: Vec<bool>,
    products: Vec<Vec<usize>>,
    f: BTreeMap<Index6, Complex<T>>,
    dense: Vec<Complex<T>>,
    dims: Vec<Complex<T>>,
    provenance: Provenance,
}

impl<T: Real> CategoryData<T> {
    /// Assembles and validates category data.
    ///
    /// `fusion` lists the admissible triples `(a, b, c)` with `N[a][b][c] = 1`.
    pub fn from_parts(
        names: Vec<String>,
        fusion: &[[usize; 3]],
        entries: BTreeMap<Index6, Complex<T>>,
        provenance: Provenance,
    ) -> Result<Self> {
        let n = names.len();
        if n == 0 {
            return Err(Error::InvalidCategory("at least one label is required".into()));
        }
        let mut table = vec![false; n * n * n];
        for t in fusion {
            if t.iter().any(|&x| x >= n) {
                return Err(Error::Parse(format!("fusion triple {t:?} out of range")));
            }
            table[(t[0] * n + t[1]) * n + t[2]] = true;
        }
        let nn = |a: usize, b: usize, c: usize| table[(a * n + b) * n + c];
        for a in 0..n {
            for b in 0..n {
                if nn(0, a, b) != (a == b) || nn(a, 0, b) != (a == b) {
                    return Err(Error::InvalidCategory(format!(
                        "unit law at labels ({a}, {b})"
                    )));
                }
                if nn(a, b, 0) != (a == b) {
                    return Err(Error::InvalidCategory(format!(
                        "self-duality: N[{a}][{b}][0] = {}",
                        nn(a, b, 0) as u8
                    )));
                }
            }
        }
        let mut dense = vec![Complex::new(T::zero(), T::zero()); n.pow(6)];
        for (idx, v) in &entries {
            let [a, b, c, d, e, f] = *idx;
            if idx.iter().any(|&x| x >= n) {
                return Err(Error::Parse(format!("F index {idx:?} out of range")));
            }
            if !(nn(a, b, e) && nn(e, c, d) && nn(b, c, f) && nn(a, f, d)) {
                return Err(Error::InvalidCategory(format!(
                    "F entry at inadmissible index {idx:?}"
                )));
            }
            dense[flat(n, idx)] = *v;
        }
        let products = (0..n * n)
            .map(|ab| (0..n).filter(|&c| table[ab * n + c]).collect())
            .collect();
        let labels = names
            .into_iter()
            .enumerate()
            .map(|(index, name)| LabelId { index, name })
            .collect();
        let mut cat = CategoryData {
            labels,
            fusion: table,
            products,
            f: entries,
            dense,
            dims: Vec::new(),
            provenance,
        };
        cat.dims = (0..n)
            .map(|a| cat.quantum_dimension(a))
            .collect::<Result<Vec<_>>>()?;
        Ok(cat)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[LabelId] {
        &self.labels
    }

    pub fn label_name(&self, a: usize) -> &str {
        &self.labels[a].name
    }

    /// Looks up a label by display name, accepting a few spellings of the
    /// Fibonacci labels (`tau`, `t`, `τ`; `1`, `0`).
    pub fn label_index(&self, name: &str) -> Result<usize> {
        let canon = match name {
            "tau" | "t" | "τ" => "τ",
            "0" | "1" if self.labels.iter().all(|l| l.name != name) => {
                return Ok(0);
            }
            other => other,
        };
        self.labels
            .iter()
            .position(|l| l.name == canon)
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    #[inline]
    pub fn fuses(&self, a: usize, b: usize, c: usize) -> bool {
        let n = self.len();
        self.fusion[(a * n + b) * n + c]
    }

    /// Admissible fusion channels of `a x b`, without bounds checking.
    #[inline]
    pub fn channels(&self, a: usize, b: usize) -> &[usize] {
        &self.products[a * self.len() + b]
    }

    /// `{c : N[a][b][c] = 1}` in increasing order.
    pub fn fusion_product(&self, a: usize, b: usize) -> Result<Vec<usize>> {
        self.check_label(a)?;
        self.check_label(b)?;
        Ok(self.channels(a, b).to_vec())
    }

    pub fn fusion_triples(&self) -> Vec<[usize; 3]> {
        let n = self.len();
        let mut out = Vec::new();
        for a in 0..n {
            for b in 0..n {
                for &c in self.channels(a, b) {
                    out.push([a, b, c]);
                }
            }
        }
        out
    }

    fn check_label(&self, a: usize) -> Result<()> {
        if a < self.len() {
            Ok(())
        } else {
            Err(Error::UnknownLabel(a.to_string()))
        }
    }

    /// F-symbol `[F^{abc}_d]_{ef}`; zero when absent.
    #[inline]
    pub fn f(&self, a: usize, b: usize, c: usize, d: usize, e: usize, f: usize) -> Complex<T> {
        self.dense[flat(self.len(), &[a, b, c, d, e, f])]
    }

    /// Stored F entries in lexicographic index order.
    pub fn f_entries(&self) -> impl Iterator<Item = (&Index6, &Complex<T>)> {
        self.f.iter()
    }

    pub fn dims(&self) -> &[Complex<T>] {
        &self.dims
    }

    pub fn dim(&self, a: usize) -> Complex<T> {
        self.dims[a]
    }

    /// `d_a = 1 / F^{aaa}_a[0, 0]`; the unit has dimension 1.
    pub fn quantum_dimension(&self, a: usize) -> Result<Complex<T>> {
        self.check_label(a)?;
        if a == 0 {
            return Ok(Complex::new(T::one(), T::zero()));
        }
        let v = self.f(a, a, a, a, 0, 0);
        if v.norm() <= T::epsilon() {
            return Err(Error::DegenerateCategory(format!(
                "F^{{{a}{a}{a}}}_{a}[0,0] vanishes"
            )));
        }
        Ok(v.inv())
    }

    /// Checks `sum_h F(a,b,c,g,f,h) F(a,h,d,e,g,k) F(b,c,d,k,h,l) = F(f,c,d,e,g,l) F(a,b,l,e,f,k)`
    /// for every label assignment with admissible outer vertices.
    pub fn verify_pentagon(&self, tol: f64) -> ConsistencyReport {
        let mut rep = ConsistencyReport::new("pentagon", tol);
        let n = self.len();
        for a in 0..n {
            for b in 0..n {
                for &f in self.channels(a, b) {
                    for c in 0..n {
                        for &g in self.channels(f, c) {
                            for d in 0..n {
                                for &e in self.channels(g, d) {
                                    for &l in self.channels(c, d) {
                                        for &k in self.channels(b, l) {
                                            if !self.fuses(a, k, e) {
                                                continue;
                                            }
                                            let lhs = self.f(f, c, d, e, g, l)
                                                * self.f(a, b, l, e, f, k);
                                            let mut rhs = Complex::new(T::zero(), T::zero());
                                            for h in 0..n {
                                                rhs = rhs
                                                    + self.f(a, b, c, g, f, h)
                                                        * self.f(a, h, d, e, g, k)
                                                        * self.f(b, c, d, k, h, l);
                                            }
                                            rep.record(
                                                (lhs - rhs).norm().as_f64(),
                                                &[a, b, c, d, e, f, g, k, l],
                                            );
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        rep.finish()
    }

    /// Checks that `F^{abc}_d` is inverted by `F^{cba}_d` on its admissible block.
    ///
    /// For `a = c` this says the F-matrix is its own inverse.
    pub fn verify_involution(&self, tol: f64) -> ConsistencyReport {
        let mut rep = ConsistencyReport::new("involution", tol);
        let n = self.len();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let rows: Vec<usize> = self
                            .channels(a, b)
                            .iter()
                            .copied()
                            .filter(|&e| self.fuses(e, c, d))
                            .collect();
                        if rows.is_empty() {
                            continue;
                        }
                        let mids: Vec<usize> = self
                            .channels(b, c)
                            .iter()
                            .copied()
                            .filter(|&f| self.fuses(a, f, d))
                            .collect();
                        for &e in &rows {
                            for &e2 in &rows {
                                let mut s = Complex::new(T::zero(), T::zero());
                                for &f in &mids {
                                    s = s + self.f(a, b, c, d, e, f) * self.f(c, b, a, d, f, e2);
                                }
                                let target = if e == e2 { T::one() } else { T::zero() };
                                rep.record(
                                    (s - Complex::new(target, T::zero())).norm().as_f64(),
                                    &[a, b, c, d, e, e2],
                                );
                            }
                        }
                    }
                }
            }
        }
        rep.finish()
    }

    /// Checks `d_a d_b = sum_c N[a][b][c] d_c`.
    pub fn verify_dimensions(&self, tol: f64) -> ConsistencyReport {
        let mut rep = ConsistencyReport::new("dimension homomorphism", tol);
        let n = self.len();
        for a in 0..n {
            for b in 0..n {
                let lhs = self.dims[a] * self.dims[b];
                let rhs = self
                    .channels(a, b)
                    .iter()
                    .fold(Complex::new(T::zero(), T::zero()), |s, &c| s + self.dims[c]);
                rep.record((lhs - rhs).norm().as_f64(), &[a, b]);
            }
        }
        rep.finish()
    }

    /// Checks that every F-move with a unit among its three upper labels equals 1 exactly.
    pub fn verify_unit_moves(&self) -> ConsistencyReport {
        let mut rep = ConsistencyReport::new("unit moves", 0.0);
        for (idx, v) in &self.f {
            if idx[0] == 0 || idx[1] == 0 || idx[2] == 0 {
                let r = (*v - Complex::new(T::one(), T::zero())).norm().as_f64();
                rep.record(r, idx);
            }
        }
        rep.finish()
    }

    /// Same data under new label names.
    pub fn with_label_names(&self, names: &[&str]) -> Result<Self> {
        if names.len() != self.len() {
            return Err(Error::Parameter(format!("expected {} label names", self.len())));
        }
        let mut out = self.clone();
        for (l, n) in out.labels.iter_mut().zip(names) {
            l.name = n.to_string();
        }
        Ok(out)
    }

    /// Sub-category on the given labels. The unit must be kept and the set must be
    /// closed under fusion.
    pub fn restrict(&self, keep: &[usize]) -> Result<Self> {
        if keep.first() != Some(&0) {
            return Err(Error::Parameter("restriction must keep the unit first".into()));
        }
        let n = self.len();
        let mut new_of = vec![usize::MAX; n];
        for (i, &a) in keep.iter().enumerate() {
            self.check_label(a)?;
            new_of[a] = i;
        }
        let mut triples = Vec::new();
        for &a in keep {
            for &b in keep {
                for &c in self.channels(a, b) {
                    if new_of[c] == usize::MAX {
                        return Err(Error::Parameter(format!(
                            "label set not closed under fusion: {a} x {b} contains {c}"
                        )));
                    }
                    triples.push([new_of[a], new_of[b], new_of[c]]);
                }
            }
        }
        let entries = self
            .f
            .iter()
            .filter(|(idx, _)| idx.iter().all(|&x| new_of[x] != usize::MAX))
            .map(|(idx, v)| (idx.map(|x| new_of[x]), *v))
            .collect();
        let names = keep.iter().map(|&a| self.labels[a].name.clone()).collect();
        let provenance = match &self.provenance {
            Provenance::Su2k { params, twice_spins } => Provenance::Su2k {
                params: *params,
                twice_spins: keep.iter().map(|&a| twice_spins[a]).collect(),
            },
            other => other.clone(),
        };
        CategoryData::from_parts(names, &triples, entries, provenance)
    }

    /// The integer-spin part of an su(2)_k category.
    pub fn integer_subcategory(&self) -> Result<Self> {
        let Provenance::Su2k { twice_spins, .. } = &self.provenance else {
            return Err(Error::Parameter(
                "integer restriction needs su(2)_k spin data".into(),
            ));
        };
        let keep: Vec<usize> = (0..self.len()).filter(|&a| twice_spins[a] % 2 == 0).collect();
        self.restrict(&keep)
    }

    /// Applies the vertex gauge transformation
    /// `F(a,b,c,d,e,f) -> F(a,b,c,d,e,f) u(a,b,e) u(e,c,d) / (u(b,c,f) u(a,f,d))`.
    ///
    /// Vertices involving the unit should carry `u = 1` so that unit moves stay trivial.
    pub fn gauge_transform<G>(&self, u: G) -> Result<Self>
    where
        G: Fn(usize, usize, usize) -> Complex<T>,
    {
        let entries = self
            .f
            .iter()
            .map(|(idx, v)| {
                let [a, b, c, d, e, f] = *idx;
                (*idx, *v * u(a, b, e) * u(e, c, d) / (u(b, c, f) * u(a, f, d)))
            })
            .collect();
        CategoryData::from_parts(
            self.labels.iter().map(|l| l.name.clone()).collect(),
            &self.fusion_triples(),
            entries,
            self.provenance.clone(),
        )
    }

    /// Returns a copy with one F entry replaced. Intended for robustness checks.
    pub fn with_entry(&self, idx: Index6, value: Complex<T>) -> Result<Self> {
        let mut entries = self.f.clone();
        entries.insert(idx, value);
        CategoryData::from_parts(
            self.labels.iter().map(|l| l.name.clone()).collect(),
            &self.fusion_triples(),
            entries,
            self.provenance.clone(),
        )
    }

    /// Converts the scalar type.
    pub fn cast<U: Real>(&self) -> CategoryData<U> {
        let entries = self.f.iter().map(|(k, v)| (*k, cast_complex(*v))).collect();
        CategoryData::from_parts(
            self.labels.iter().map(|l| l.name.clone()).collect(),
            &self.fusion_triples(),
            entries,
            self.provenance.clone(),
        )
        .expect("casting preserves validity")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn to_document(&self) -> CategoryDocument {
        CategoryDocument {
            labels: self.labels.iter().map(|l| l.name.clone()).collect(),
            fusion: self.fusion_triples(),
            f: self
                .f
                .iter()
                .map(|(idx, v)| FEntry {
                    idx: *idx,
                    re: v.re.as_f64(),
                    im: v.im.as_f64(),
                })
                .collect(),
            provenance: ProvenanceDocument::from(&self.provenance),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CategoryDocument = serde_json::from_str(text)?;
        let entries = doc
            .f
            .iter()
            .map(|e| (e.idx, Complex::new(T::lit(e.re), T::lit(e.im))))
            .collect();
        CategoryData::from_parts(doc.labels, &doc.fusion, entries, doc.provenance.into())
    }
}

#[inline]
fn flat(n: usize, idx: &Index6) -> usize {
    idx.iter().fold(0, |acc, &x| acc * n + x)
}

/// Serialized form of a category table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CategoryDocument {
    pub labels: Vec<String>,
    pub fusion: Vec<[usize; 3]>,
    #[serde(rename = "F")]
    pub f: Vec<FEntry>,
    pub provenance: ProvenanceDocument,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FEntry {
    pub idx: Index6,
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ProvenanceDocument {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub twice_spins: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
}

impl From<&Provenance> for ProvenanceDocument {
    fn from(p: &Provenance) -> Self {
        match p {
            Provenance::Su2k { params, twice_spins } => ProvenanceDocument {
                k: Some(params.k),
                p: Some(params.p),
                twice_spins: Some(twice_spins.clone()),
                builtin: None,
            },
            Provenance::Builtin { tag } => ProvenanceDocument {
                builtin: Some(tag.clone()),
                ..Default::default()
            },
            Provenance::Custom => ProvenanceDocument::default(),
        }
    }
}

impl From<ProvenanceDocument> for Provenance {
    fn from(d: ProvenanceDocument) -> Self {
        match (d.k, d.p, d.twice_spins, d.builtin) {
            (Some(k), Some(p), Some(twice_spins), _) => Provenance::Su2k {
                params: QParams { k, p },
                twice_spins,
            },
            (_, _, _, Some(tag)) => Provenance::Builtin { tag },
            _ => Provenance::Custom,
        }
    }
}

/// The two-label Fibonacci category `{1, τ}` with `τ x τ = 1 + τ`.
///
/// `F^{τττ}_τ = (1/φ) [[1, √φ], [√φ, -1]]` with `φ = (1 + √5)/2` for the unitary
/// variant and `φ' = (1 - √5)/2` for the Galois conjugate. Every other admissible
/// entry is 1.
pub fn build_fibonacci<T: Real>(variant: FibVariant) -> CategoryData<T> {
    let five = T::lit(5.0).sqrt();
    let two = T::lit(2.0);
    let (phi, tag) = match variant {
        FibVariant::Unitary => ((T::one() + five) / two, "fibonacci-unitary"),
        FibVariant::Galois => ((T::one() - five) / two, "fibonacci-galois"),
    };
    let sp = principal_sqrt(phi);
    let inv = Complex::new(T::one() / phi, T::zero());
    let block = [[inv, sp * inv], [sp * inv, -inv]];
    let triples = vec![[0, 0, 0], [0, 1, 1], [1, 0, 1], [1, 1, 0], [1, 1, 1]];
    let ok = |a: usize, b: usize, c: usize| match (a, b) {
        (0, _) => b == c,
        (_, 0) => a == c,
        _ => true,
    };
    let one = Complex::new(T::one(), T::zero());
    let mut entries = BTreeMap::new();
    for idx in 0..64usize {
        let i = [
            (idx >> 5) & 1,
            (idx >> 4) & 1,
            (idx >> 3) & 1,
            (idx >> 2) & 1,
            (idx >> 1) & 1,
            idx & 1,
        ];
        let [a, b, c, d, e, f] = i;
        if !(ok(a, b, e) && ok(e, c, d) && ok(b, c, f) && ok(a, f, d)) {
            continue;
        }
        let v = if a == 1 && b == 1 && c == 1 && d == 1 {
            block[e][f]
        } else {
            one
        };
        entries.insert(i, v);
    }
    CategoryData::from_parts(
        vec!["1".to_string(), "τ".to_string()],
        &triples,
        entries,
        Provenance::Builtin { tag: tag.to_string() },
    )
    .expect("builtin Fibonacci data is valid")
}

/// The vertex gauge mapping the integer part of su(2)_3 onto [`build_fibonacci`]:
/// the `τ τ -> 1` vertex is multiplied by -1, every other vertex is untouched.
pub fn su2k_fibonacci_gauge<T: Real>(a: usize, b: usize, c: usize) -> Complex<T> {
    if a == 1 && b == 1 && c == 0 {
        Complex::new(-T::one(), T::zero())
    } else {
        Complex::new(T::one(), T::zero())
    }
}

/// Display name of the su(2)_k label with the given twice-spin.
pub fn spin_name(twice_spin: u32) -> String {
    if twice_spin % 2 == 0 {
        format!("j={}", twice_spin / 2)
    } else {
        format!("j={twice_spin}/2")
    }
}

/// Quantum-group data for su(2)_k at `q = exp(2 pi i p / (k + 2))`.
struct QGroup<T: Real> {
    k: i64,
    h: T,
}

impl<T: Real> QGroup<T> {
    fn qint(&self, n: i64) -> T {
        (self.h * T::lit(n as f64)).sin() / self.h.sin()
    }

    fn qfact(&self, n: i64) -> T {
        (1..=n).fold(T::one(), |acc, m| acc * self.qint(m))
    }

    /// Product of principal roots `sqrt([1]) sqrt([2]) ... sqrt([n])`.
    fn sqrt_qfact(&self, n: i64) -> Complex<T> {
        (1..=n).fold(Complex::new(T::one(), T::zero()), |acc, m| {
            acc * principal_sqrt(self.qint(m))
        })
    }

    /// Twice-spin admissibility of `(a, b, c)` at level k.
    fn admissible(&self, a: i64, b: i64, c: i64) -> bool {
        (a + b + c) % 2 == 0 && (a - b).abs() <= c && c <= a + b && a + b + c <= 2 * self.k
    }

    fn triangle(&self, a: i64, b: i64, c: i64) -> Complex<T> {
        self.sqrt_qfact((a + b - c) / 2) * self.sqrt_qfact((a - b + c) / 2)
            * self.sqrt_qfact((-a + b + c) / 2)
            / self.sqrt_qfact((a + b + c) / 2 + 1)
    }

    /// q-deformed Racah-Wigner symbol `{j1 j2 j3; j4 j5 j6}` in twice-spin arguments.
    fn six_j(&self, j: [i64; 6]) -> Complex<T> {
        let [j1, j2, j3, j4, j5, j6] = j;
        let tri = [(j1, j2, j3), (j1, j5, j6), (j4, j2, j6), (j4, j5, j3)];
        if !tri.iter().all(|&(a, b, c)| self.admissible(a, b, c)) {
            return Complex::new(T::zero(), T::zero());
        }
        let lower: Vec<i64> = tri.iter().map(|&(a, b, c)| (a + b + c) / 2).collect();
        let upper = [
            (j1 + j2 + j4 + j5) / 2,
            (j2 + j3 + j5 + j6) / 2,
            (j3 + j1 + j6 + j4) / 2,
        ];
        let zmin = *lower.iter().max().unwrap();
        let zmax = *upper.iter().min().unwrap();
        let mut sum = T::zero();
        for z in zmin..=zmax {
            let mut den = T::one();
            for &x in &lower {
                den = den * self.qfact(z - x);
            }
            for &y in &upper {
                den = den * self.qfact(y - z);
            }
            let sign = if z % 2 == 0 { T::one() } else { -T::one() };
            sum = sum + sign * self.qfact(z + 1) / den;
        }
        tri.iter()
            .fold(Complex::new(sum, T::zero()), |acc, &(a, b, c)| acc * self.triangle(a, b, c))
    }
}

/// Builds su(2)_k with labels `j = 0, 1/2, ..., k/2` (label index = twice-spin).
///
/// F-symbols are q-6j symbols in the normalization
/// `F(a,b,c,d,e,f) = (-1)^{(a+b+c+d)/2} sqrt([e+1]) sqrt([f+1]) {a b e; c d f}` (twice-spins),
/// with every square root taken on the principal branch factor by factor. Entries
/// with a unit among the three upper labels are set to exactly 1 after checking
/// that the formula gives 1 to rounding.
pub fn build_su2k_category<T: Real>(params: QParams) -> Result<CategoryData<T>> {
    params.validate()?;
    let k = params.k as i64;
    let g = QGroup {
        k,
        h: T::PI() * T::lit(params.p as f64) / T::lit((k + 2) as f64),
    };
    let n = (k + 1) as usize;
    let mut triples = Vec::new();
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                if g.admissible(a as i64, b as i64, c as i64) {
                    triples.push([a, b, c]);
                }
            }
        }
    }
    let adm = |a: usize, b: usize, c: usize| g.admissible(a as i64, b as i64, c as i64);
    let one = Complex::new(T::one(), T::zero());
    let snap_tol = T::lit(1e3) * T::epsilon();
    let mut entries = BTreeMap::new();
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    for e in 0..n {
                        if !(adm(a, b, e) && adm(e, c, d)) {
                            continue;
                        }
                        for f in 0..n {
                            if !(adm(b, c, f) && adm(a, f, d)) {
                                continue;
                            }
                            let [ai, bi, ci, di, ei, fi] = [a, b, c, d, e, f].map(|x| x as i64);
                            let sign = if ((ai + bi + ci + di) / 2) % 2 == 0 {
                                T::one()
                            } else {
                                -T::one()
                            };
                            let mut v = principal_sqrt(g.qint(ei + 1))
                                * principal_sqrt(g.qint(fi + 1))
                                * g.six_j([ai, bi, ei, ci, di, fi])
                                * sign;
                            if a == 0 || b == 0 || c == 0 {
                                if (v - one).norm() > snap_tol {
                                    return Err(Error::InvalidCategory(format!(
                                        "unit F-move at {:?} evaluates to {v}",
                                        [a, b, c, d, e, f]
                                    )));
                                }
                                v = one;
                            }
                            entries.insert([a, b, c, d, e, f], v);
                        }
                    }
                }
            }
        }
    }
    let names = (0..n as u32).map(spin_name).collect();
    CategoryData::from_parts(
        names,
        &triples,
        entries,
        Provenance::Su2k {
            params,
            twice_spins: (0..n as u32).collect(),
        },
    )
}

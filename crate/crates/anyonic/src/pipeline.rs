//! End-to-end runs behind the command-line tool: settings, stages and output files.

use crate::braiding::{
    doubled_spins, modular_s_matrix, reduce_turns, reference_braiding, solve_hexagon, topological_twists,
    verify_hexagon, verify_ribbon,
};
use crate::category::{
    build_fibonacci, build_su2k_category, su2k_fibonacci_gauge, CategoryData, ConsistencyReport, FibVariant, QParams,
};
use crate::cylinder::{Cylinder, RingOperator, DENSE_LIMIT};
use crate::error::{Error, Result};
use crate::linalg::{self, c64};
use crate::spectra::{
    calibrate, eigendecompose_with, extract_spectrum, isotropic_velocity, refined_velocity, rescale, to_csv,
    Calibration, EigenSolution, ScaleSettings, SectorProjector, SpectrumRecord,
};
use crate::tube::{
    central_idempotents, classify_sectors, dehn_spins, tube_structure_constants, Idempotent, IdempotentRecord,
    StructureConstants, DEFAULT_SEED,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Model {
    Fibonacci,
    YangLee,
    Su2k { k: u32, p: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Flux {
    /// No defect.
    Trivial,
    /// Defect carrying the line label.
    Line,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Verify,
    Tubes,
    Spectrum,
}

/// Partially specified settings, as read from a config file or from flags.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub model: Option<String>,
    pub k: Option<u32>,
    pub p: Option<u32>,
    #[serde(rename = "L")]
    pub l: Option<usize>,
    pub flux: Option<String>,
    pub n_states: Option<usize>,
    pub sizes: Option<Vec<usize>>,
    pub out: Option<PathBuf>,
    pub seed: Option<String>,
    pub format: Option<String>,
    /// Scaling dimension assigned to the ground state; derived from the spins if absent.
    pub delta0: Option<f64>,
    /// Rescale the velocity with the first descendant of the ground sector.
    pub refine: Option<bool>,
    pub dense_limit: Option<usize>,
    /// Lattice subcategory; only `"integer"` is supported.
    pub restrict: Option<String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    /// Fields set in `self` win over those in `base`.
    pub fn over(self, base: ConfigFile) -> ConfigFile {
        ConfigFile {
            model: self.model.or(base.model),
            k: self.k.or(base.k),
            p: self.p.or(base.p),
            l: self.l.or(base.l),
            flux: self.flux.or(base.flux),
            n_states: self.n_states.or(base.n_states),
            sizes: self.sizes.or(base.sizes),
            out: self.out.or(base.out),
            seed: self.seed.or(base.seed),
            format: self.format.or(base.format),
            delta0: self.delta0.or(base.delta0),
            refine: self.refine.or(base.refine),
            dense_limit: self.dense_limit.or(base.dense_limit),
            restrict: self.restrict.or(base.restrict),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Settings {
    pub model: Model,
    #[serde(rename = "L")]
    pub l: usize,
    pub flux: Flux,
    /// States per spectrum; `None` keeps every state of a dense solve and
    /// [`ITERATIVE_STATES`] of an iterative one.
    pub n_states: Option<usize>,
    pub sizes: Vec<usize>,
    pub out: PathBuf,
    pub seed: u64,
    pub format: Format,
    pub delta0: Option<f64>,
    pub refine: bool,
    pub dense_limit: usize,
}

/// Default number of states when the spectrum comes from subspace iteration.
pub const ITERATIVE_STATES: usize = 32;

pub fn parse_seed(s: &str) -> Result<u64> {
    let digits = s.trim_start_matches("0x").trim_start_matches("0X");
    u64::from_str_radix(digits, 16).map_err(|_| Error::Parse(format!("seed `{s}` is not hexadecimal")))
}

impl Settings {
    pub fn resolve(cfg: ConfigFile) -> Result<Settings> {
        let model = match cfg.model.as_deref().unwrap_or("yang-lee") {
            "fibonacci" => Model::Fibonacci,
            "yang-lee" => Model::YangLee,
            "su2k" => {
                let k = cfg.k.ok_or_else(|| Error::Parameter("--model su2k needs --k".into()))?;
                let p = cfg.p.unwrap_or(1);
                QParams::new(k, p)?;
                Model::Su2k { k, p }
            }
            other => return Err(Error::Parameter(format!("unknown model `{other}`"))),
        };
        if let Some(r) = cfg.restrict.as_deref().filter(|&r| r != "integer") {
            return Err(Error::Parameter(format!(
                "restrict `{r}`: the lattice is built on the integer-label subcategory only"
            )));
        }
        let flux = match cfg.flux.as_deref().unwrap_or("1") {
            "1" => Flux::Trivial,
            "tau" | "τ" => Flux::Line,
            other => return Err(Error::Parameter(format!("flux must be 1 or tau, got `{other}`"))),
        };
        let format = match cfg.format.as_deref().unwrap_or("csv") {
            "csv" => Format::Csv,
            "json" => Format::Json,
            other => return Err(Error::Parameter(format!("unknown format `{other}`"))),
        };
        let l = cfg.l.unwrap_or(12);
        if l < 4 || l % 2 != 0 {
            return Err(Error::Parameter(format!("L must be even and >= 4, got {l}")));
        }
        let sizes = cfg.sizes.unwrap_or_else(|| vec![8, 10, 12, 14]);
        if let Some(bad) = sizes.iter().find(|&&s| s < 4 || s % 2 != 0) {
            return Err(Error::Parameter(format!("calibration size {bad} must be even and >= 4")));
        }
        Ok(Settings {
            model,
            l,
            flux,
            n_states: cfg.n_states.map(|n| n.max(1)),
            sizes,
            out: cfg.out.unwrap_or_else(|| PathBuf::from(".")),
            seed: cfg.seed.as_deref().map(parse_seed).transpose()?.unwrap_or(DEFAULT_SEED),
            format,
            delta0: cfg.delta0,
            refine: cfg.refine.unwrap_or(true),
            dense_limit: cfg.dense_limit.unwrap_or(DENSE_LIMIT),
        })
    }
}

/// Full category of a model (what `verify` checks).
pub fn model_category(model: Model) -> Result<CategoryData<f64>> {
    match model {
        Model::Fibonacci => Ok(build_fibonacci(FibVariant::Unitary)),
        Model::YangLee => Ok(build_fibonacci(FibVariant::Galois)),
        Model::Su2k { k, p } => build_su2k_category(QParams::new(k, p)?),
    }
}

/// Category placed on the lattice. For su(2)_k this is the integer-spin part; at
/// k = 3 it is brought to the Fibonacci gauge and labels.
pub fn lattice_category(model: Model) -> Result<CategoryData<f64>> {
    match model {
        Model::Su2k { k, p } => {
            let cat = build_su2k_category::<f64>(QParams::new(k, p)?)?.integer_subcategory()?;
            if cat.len() < 2 {
                return Err(Error::Parameter(format!("su(2)_{k} has no integer-spin line label")));
            }
            if k == 3 {
                cat.gauge_transform(su2k_fibonacci_gauge)?.with_label_names(&["1", "τ"])
            } else {
                Ok(cat)
            }
        }
        other => model_category(other),
    }
}

/// Consistency checks that need only F.
pub fn category_checks(cat: &CategoryData<f64>, tol: f64) -> Vec<ConsistencyReport> {
    vec![
        cat.verify_pentagon(tol),
        cat.verify_involution(tol),
        cat.verify_dimensions(tol),
        cat.verify_unit_moves(),
    ]
}

#[derive(Clone, Debug)]
pub struct BraidingSummary {
    pub solutions: usize,
    pub reference: usize,
    pub h: Vec<f64>,
    pub spins: BTreeMap<(usize, usize), f64>,
    pub reports: Vec<ConsistencyReport>,
    pub warnings: Vec<String>,
}

pub fn braiding_stage(cat: &CategoryData<f64>, tol: f64) -> Result<BraidingSummary> {
    let sols = solve_hexagon(cat, tol)?;
    let reference = reference_braiding(cat, &sols).unwrap_or(0);
    let r = &sols[reference];
    let twists = topological_twists(cat, r)?;
    let mut reports = vec![verify_hexagon(cat, r, tol), verify_ribbon(cat, r, &twists, tol)];
    let mut warnings = Vec::new();
    match modular_s_matrix(cat, r) {
        Ok(s) => reports.push(ConsistencyReport::scalar("s-matrix-condition", s.condition, 1e12)),
        Err(Error::NotModular { condition }) => {
            warnings.push(format!("braided but not modular (S condition number {condition:.3e})"))
        }
        Err(e) => return Err(e),
    }
    Ok(BraidingSummary {
        solutions: sols.len(),
        reference,
        h: twists.h.clone(),
        spins: doubled_spins(&twists),
        reports,
        warnings,
    })
}

pub struct TubeStage {
    pub cylinder: Cylinder,
    pub constants: StructureConstants,
    pub idempotents: Vec<Idempotent>,
    pub reports: Vec<ConsistencyReport>,
    pub warnings: Vec<String>,
}

pub const PROBE_LENGTHS: [usize; 2] = [2, 3];

pub fn tube_stage(cat: &CategoryData<f64>, braiding: &BraidingSummary, seed: u64) -> Result<TubeStage> {
    let cylinder = Cylinder::new(cat.clone(), 1)?;
    let constants = tube_structure_constants(&cylinder, &PROBE_LENGTHS)?;
    let mut idempotents = central_idempotents(&constants, seed)?;
    let dehn = dehn_spins(&cylinder, &constants, &idempotents)?;
    let report = classify_sectors(cat, &mut idempotents, &braiding.spins, Some(&dehn));
    let n = constants.len();
    let mut idem_res: f64 = 0.0;
    let mut central_res: f64 = 0.0;
    let mut sum = vec![c64::new(0.0, 0.0); n];
    for (i, p) in idempotents.iter().enumerate() {
        for (s, c) in sum.iter_mut().zip(&p.coeffs) {
            *s += c;
        }
        for (j, q) in idempotents.iter().enumerate() {
            let pq = constants.mult(&p.coeffs, &q.coeffs);
            for (k, v) in pq.iter().enumerate() {
                let target = if i == j { p.coeffs[k] } else { c64::new(0.0, 0.0) };
                idem_res = idem_res.max((v - target).norm());
            }
        }
    }
    let blocks = idempotents.iter().map(|p| p.block + 1).max().unwrap_or(0);
    for b in 0..blocks {
        let mut p = vec![c64::new(0.0, 0.0); n];
        for q in idempotents.iter().filter(|q| q.block == b) {
            for (s, c) in p.iter_mut().zip(&q.coeffs) {
                *s += c;
            }
        }
        for t in 0..n {
            let e = constants.basis_vector(t);
            let l = constants.mult(&p, &e);
            let r = constants.mult(&e, &p);
            central_res = central_res.max(l.iter().zip(&r).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
        }
    }
    let unit_res = sum
        .iter()
        .zip(&constants.unit)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let mut dim_sq = 0;
    for b in 0..blocks {
        if let Some(p) = idempotents.iter().find(|p| p.block == b) {
            dim_sq += p.dim * p.dim;
        }
    }
    let reports = vec![
        ConsistencyReport::scalar("tube-fit-residual", constants.residual, 1e-8),
        ConsistencyReport::scalar("tube-length-agreement", constants.length_deviation, 1e-6),
        ConsistencyReport::scalar("tube-associativity", constants.associativity_residual(), 1e-8),
        ConsistencyReport::scalar("tube-unit", constants.unit_residual(), 1e-8),
        ConsistencyReport::scalar("idempotent-orthogonality", idem_res, 1e-8),
        ConsistencyReport::scalar("idempotent-centrality", central_res, 1e-8),
        ConsistencyReport::scalar("idempotent-completeness", unit_res, 1e-8),
        ConsistencyReport::scalar("block-dimension-count", (dim_sq as f64 - n as f64).abs(), 0.0),
    ];
    Ok(TubeStage {
        cylinder,
        constants,
        idempotents,
        reports,
        warnings: report.warnings,
    })
}

pub fn idempotent_records(stage: &TubeStage) -> Vec<IdempotentRecord> {
    stage
        .idempotents
        .iter()
        .map(|p| p.record(stage.cylinder.category(), &stage.constants.tubes))
        .collect()
}

/// Ground-state scaling dimension `2 min_a h_a`, with spins taken in `(-1/2, 1/2]`.
pub fn default_delta0(h: &[f64]) -> f64 {
    2.0 * h.iter().map(|&x| reduce_turns(x)).fold(0.0, f64::min)
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumStage {
    #[serde(rename = "L")]
    pub l: usize,
    pub flux: String,
    pub delta0: f64,
    pub velocity: f64,
    pub refined: bool,
    pub calibration: Calibration,
    pub records: Vec<SpectrumRecord>,
    #[serde(skip)]
    pub reports: Vec<ConsistencyReport>,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

/// `|(A B - B A) v| / (|A B v| + |B A v|)` for a seeded random `v`.
fn commutator_probe(a: &RingOperator, b: &RingOperator, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<c64> = (0..a.dim_in())
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            c64::new(re, im)
        })
        .collect();
    let ab = a.apply(&b.apply(&v));
    let ba = b.apply(&a.apply(&v));
    let d: Vec<c64> = ab.iter().zip(&ba).map(|(x, y)| x - y).collect();
    linalg::norm(&d) / (linalg::norm(&ab) + linalg::norm(&ba)).max(f64::MIN_POSITIVE)
}

struct SectorSpectrum {
    records: Vec<SpectrumRecord>,
    reports: Vec<ConsistencyReport>,
}

fn sector_spectrum(
    tubes: &TubeStage,
    flux: usize,
    settings: &Settings,
    scale: &ScaleSettings,
) -> Result<(SectorSpectrum, EigenSolution)> {
    let cyl = &tubes.cylinder;
    let basis = cyl.build_ring_basis(settings.l, flux)?;
    let t = cyl.build_transfer_matrix(&basis)?;
    let wanted = settings.n_states.unwrap_or(if basis.len() <= settings.dense_limit {
        basis.len()
    } else {
        ITERATIVE_STATES
    });
    let sol = eigendecompose_with(&t, wanted, settings.seed, settings.dense_limit)?;
    let tr = cyl.build_translation(&basis)?;
    let projectors: Vec<SectorProjector> = tubes
        .idempotents
        .iter()
        .filter(|p| p.flux == flux)
        .map(|p| SectorProjector::new(cyl, &tubes.constants, p, &basis))
        .collect::<Result<_>>()?;
    let mut scale = scale.clone();
    if flux == 0 {
        scale.reference_log = sol.values[0].norm().ln();
    }
    let records = extract_spectrum(&sol, &tr, &projectors, &scale)?;
    let mpo = cyl.build_mpo_symmetry(cyl.line(), &basis)?;
    let weight_sum = records
        .iter()
        .map(|r| (r.weights.iter().map(|w| w.1).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let tag = cyl.category().label_name(flux).to_string();
    let reports = vec![
        ConsistencyReport::scalar(&format!("eigen-residual[f={tag}]"), sol.residuals.iter().copied().fold(0.0, f64::max), 1e-8),
        ConsistencyReport::scalar(&format!("commute-T-translation[f={tag}]"), commutator_probe(&t, &tr, settings.seed), 1e-8),
        ConsistencyReport::scalar(&format!("commute-T-mpo[f={tag}]"), commutator_probe(&t, &mpo, settings.seed), 1e-8),
        ConsistencyReport::scalar(&format!("sector-weight-sum[f={tag}]"), weight_sum, 1e-6),
    ];
    Ok((SectorSpectrum { records, reports }, sol))
}

pub fn spectrum_stage(tubes: &TubeStage, braiding: &BraidingSummary, settings: &Settings) -> Result<SpectrumStage> {
    let cyl = &tubes.cylinder;
    let velocity = isotropic_velocity();
    let samples = settings
        .sizes
        .iter()
        .map(|&l| {
            let basis = cyl.build_ring_basis(l, 0)?;
            let t = cyl.build_transfer_matrix(&basis)?;
            let sol = eigendecompose_with(&t, 1, settings.seed, settings.dense_limit)?;
            Ok((l, sol.values[0].norm().ln()))
        })
        .collect::<Result<Vec<_>>>()?;
    let calibration = calibrate(&samples, velocity)?;
    let delta0 = settings.delta0.unwrap_or_else(|| default_delta0(&braiding.h));
    let scale = ScaleSettings {
        l: settings.l,
        velocity,
        delta0,
        reference_log: 0.0,
    };
    let (ground, sol0) = sector_spectrum(tubes, 0, settings, &scale)?;
    let refined_v = if settings.refine { refined_velocity(&ground.records, velocity) } else { None };
    let mut warnings = Vec::new();
    if settings.refine && refined_v.is_none() {
        warnings.push("no clean spin-1 descendant of the ground sector; velocity left at the lattice value".into());
    }
    let (mut records, reports) = match settings.flux {
        Flux::Trivial => (ground.records, ground.reports),
        Flux::Line => {
            let scale = ScaleSettings {
                reference_log: sol0.values[0].norm().ln(),
                ..scale.clone()
            };
            let (defect, _) = sector_spectrum(tubes, cyl.line(), settings, &scale)?;
            let mut reports = ground.reports;
            reports.extend(defect.reports);
            (defect.records, reports)
        }
    };
    if let Some(v) = refined_v {
        rescale(&mut records, velocity, v, delta0);
    }
    crate::spectra::sort_canonical(&mut records);
    Ok(SpectrumStage {
        l: settings.l,
        flux: cyl.category().label_name(if settings.flux == Flux::Line { cyl.line() } else { 0 }).to_string(),
        delta0,
        velocity: refined_v.unwrap_or(velocity),
        refined: refined_v.is_some(),
        calibration,
        records,
        reports,
        warnings,
    })
}

#[derive(Debug, Serialize)]
struct ConsistencyDocument<'a> {
    model: Model,
    checks: &'a [ConsistencyReport],
    warnings: &'a [String],
    passed: bool,
}

#[derive(Debug, Serialize)]
struct IdempotentDocument<'a> {
    labels: Vec<&'a str>,
    tubes: Vec<[usize; 4]>,
    seed: String,
    idempotents: Vec<IdempotentRecord>,
}

#[derive(Debug, Serialize)]
struct FileEntry {
    name: String,
    bytes: usize,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: Command,
    settings: &'a Settings,
    version: &'static str,
    files: Vec<FileEntry>,
    passed: bool,
}

/// Outcome of a full run.
#[derive(Debug)]
pub struct RunSummary {
    pub passed: bool,
    pub files: Vec<PathBuf>,
    pub failed_checks: Vec<String>,
    pub warnings: Vec<String>,
}

fn write(out: &Path, name: &str, contents: &str, files: &mut Vec<FileEntry>, paths: &mut Vec<PathBuf>) -> Result<()> {
    let path = out.join(name);
    std::fs::write(&path, contents)?;
    files.push(FileEntry {
        name: name.to_string(),
        bytes: contents.len(),
    });
    paths.push(path);
    Ok(())
}

pub fn run(command: Command, settings: &Settings) -> Result<RunSummary> {
    std::fs::create_dir_all(&settings.out)?;
    let mut files = Vec::new();
    let mut paths = Vec::new();
    let mut reports = Vec::new();
    let mut warnings = Vec::new();

    let full = model_category(settings.model)?;
    reports.extend(category_checks(&full, 1e-10));
    if command != Command::Verify {
        let cat = lattice_category(settings.model)?;
        if !matches!(settings.model, Model::Fibonacci | Model::YangLee) {
            reports.extend(category_checks(&cat, 1e-10).into_iter().map(|mut r| {
                r.check = format!("lattice-{}", r.check);
                r
            }));
        }
        let braiding = braiding_stage(&cat, 1e-10)?;
        reports.extend(braiding.reports.iter().cloned());
        warnings.extend(braiding.warnings.iter().cloned());
        let tubes = tube_stage(&cat, &braiding, settings.seed)?;
        reports.extend(tubes.reports.iter().cloned());
        warnings.extend(tubes.warnings.iter().cloned());
        let doc = IdempotentDocument {
            labels: cat.labels().iter().map(|l| l.name.as_str()).collect(),
            tubes: tubes.constants.tubes.iter().map(|t| t.as_array()).collect(),
            seed: format!("{:#x}", settings.seed),
            idempotents: idempotent_records(&tubes),
        };
        write(&settings.out, "idempotents.json", &serde_json::to_string_pretty(&doc)?, &mut files, &mut paths)?;
        if command == Command::Spectrum {
            let spec = spectrum_stage(&tubes, &braiding, settings)?;
            reports.extend(spec.reports.iter().cloned());
            warnings.extend(spec.warnings.iter().cloned());
            match settings.format {
                Format::Csv => write(&settings.out, "spectrum.csv", &to_csv(&spec.records), &mut files, &mut paths)?,
                Format::Json => write(&settings.out, "spectrum.json", &serde_json::to_string_pretty(&spec)?, &mut files, &mut paths)?,
            }
        }
    } else {
        match braiding_stage(&full, 1e-10) {
            Ok(b) => {
                reports.extend(b.reports);
                warnings.extend(b.warnings);
            }
            Err(Error::NotBraided { best_residual }) => {
                warnings.push(format!("no braiding found (best hexagon residual {best_residual:.3e})"))
            }
            Err(e) => return Err(e),
        }
    }
    let passed = reports.iter().all(|r| r.passed);
    let doc = ConsistencyDocument {
        model: settings.model,
        checks: &reports,
        warnings: &warnings,
        passed,
    };
    write(&settings.out, "consistency.json", &serde_json::to_string_pretty(&doc)?, &mut files, &mut paths)?;
    let manifest = Manifest {
        command,
        settings,
        version: env!("CARGO_PKG_VERSION"),
        files,
        passed,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(settings.out.join("manifest.json"), text)?;
    paths.push(settings.out.join("manifest.json"));
    Ok(RunSummary {
        passed,
        files: paths,
        failed_checks: reports.iter().filter(|r| !r.passed).map(|r| r.check.clone()).collect(),
        warnings,
    })
}

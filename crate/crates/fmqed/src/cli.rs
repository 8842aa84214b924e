//! Config-driven study runner behind the `fmqed` binary.
//!
//! Every subcommand reads a [`SimulationConfig`], writes CSV/JSON tables into
//! the output directory, and finishes with `manifest.json` listing the config
//! snapshot, the arguments and a SHA-256 per output file.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::action::{ActionModel, BrokenPath, Subdivision};
use crate::config::SimulationConfig;
use crate::coulomb::{
    anisotropic_counterexample, coulomb_limit_table, riemann_sum, LatticeSummand,
};
use crate::error::{Error, Result};
use crate::field::FieldModel;
use crate::fock::{diagonal_spectrum, FockSpace, ParticleBasis, StateVector};
use crate::lattice::{
    build_field_modes, build_mode_set, build_polarization, mode_table, BoxDims, ModeRole,
};
use crate::propagator::{
    convergence_study, fundamental_step, g_epsilon_extrapolated, g_epsilon_step, residual_study,
    rho_star_search, xi_factor, AnalyticBackend, GalerkinBackend, GalerkinParams, SampleBox,
    StepBackend, FRESNEL_EPSILONS,
};
use crate::Complex64;

#[derive(Debug, Parser)]
#[command(name = "fmqed", version, about = "Finite-mode QED studies")]
pub struct Cli {
    /// Config file (TOML); defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Mode lattice and polarization frame.
    Modes(ModesArgs),
    /// Mollified two-charge lattice sums along an (L, ε) refinement.
    CoulombLimit(CoulombArgs),
    /// Riemann sums of |k|^-2-type summands and the anisotropic counterexample.
    Riemann(RiemannArgs),
    /// Diagonal spectrum of H_rad with multiplicities.
    FockSpectrum,
    /// Broken-line action of a path file.
    ActionEval(ActionArgs),
    /// Composed steps against spectral evolution under mesh halving.
    Propagate(PropagateArgs),
    /// Residual of the one-step operator against the Schrödinger equation.
    Residual(ResidualArgs),
    /// Sampled Jacobian certificate for the largest admissible step.
    RhoStar(RhoStarArgs),
    /// G_ε against the one-step operator.
    GEquivalence(GArgs),
    /// Re-run a manifest and check every output hash.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoleArg {
    Coulomb,
    Coupling,
    Field,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ModesArgs {
    #[arg(long, value_enum, default_value = "field")]
    pub role: RoleArg,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CoulombArgs {
    #[arg(long, default_value_t = 1.0)]
    pub separation: f64,
    /// Comma-separated `L:eps` pairs.
    #[arg(long, default_value = "10:1,20:0.5,40:0.25,80:0.125")]
    pub steps: String,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SummandArg {
    /// 1/(|k|²(1+|k|²)), integral 2π².
    Lorentzian,
    /// e^{−|k|²}/|k|², integral 2π^{3/2}.
    GaussianCutoff,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RiemannArgs {
    #[arg(long, value_enum, default_value = "lorentzian")]
    pub summand: SummandArg,
    #[arg(long, value_delimiter = ',', default_value = "15,30,60")]
    pub sides: Vec<f64>,
    /// Scales a of the (a², a, a) counterexample boxes.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    pub scales: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ActionArgs {
    /// JSON path file: {"times", "particles", "fields", optional "offsets"}.
    #[arg(long)]
    pub path: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum BackendArg {
    /// Analytic when the coupling vanishes, Galerkin otherwise.
    Auto,
    Analytic,
    Galerkin,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PropagateArgs {
    #[arg(long, value_enum, default_value = "auto")]
    pub backend: BackendArg,
    /// Final time; a quarter period of the softest mode when omitted.
    #[arg(long)]
    pub t_final: Option<f64>,
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32,64")]
    pub steps: Vec<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ResidualArgs {
    #[arg(long, value_enum, default_value = "auto")]
    pub backend: BackendArg,
    /// Step sizes 2^-p for p in this list.
    #[arg(long, value_delimiter = ',', default_value = "3,4,5,6,7,8,9")]
    pub exponents: Vec<i32>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RhoStarArgs {
    #[arg(long, default_value_t = 16)]
    pub samples: usize,
    #[arg(long, default_value_t = 4.0)]
    pub ceiling: f64,
    #[arg(long, default_value_t = 20)]
    pub iterations: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2")]
    pub rho: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seed: u64,
    pub jobs: usize,
    pub config: SimulationConfig,
    pub elapsed_seconds: f64,
    pub outputs: Vec<OutputEntry>,
}

struct Sink {
    dir: PathBuf,
    written: Vec<String>,
}

impl Sink {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.dir.join(name);
        let text = serde_json::to_string_pretty(value)?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(path.display().to_string(), e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn entries(&self) -> Result<Vec<OutputEntry>> {
        self.written
            .iter()
            .map(|name| {
                let path = self.dir.join(name);
                let bytes =
                    fs::read(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
                Ok(OutputEntry {
                    path: name.clone(),
                    bytes: bytes.len() as u64,
                    sha256: Sha256::digest(&bytes)
                        .iter()
                        .map(|b| format!("{b:02x}"))
                        .collect(),
                })
            })
            .collect()
    }
}

/// Parse, run, and write the manifest.
pub fn run(cli: &Cli) -> Result<RunManifest> {
    if let Command::Replay(r) = &cli.command {
        return replay(&r.manifest, &cli.out, cli.jobs);
    }
    let cfg = match &cli.config {
        Some(p) => SimulationConfig::load(p)?,
        None => {
            let c = SimulationConfig::default();
            c.validate()?;
            c
        }
    };
    execute(&cli.command, cfg, cli.seed, cli.jobs, &cli.out)
}

fn execute(
    command: &Command,
    cfg: SimulationConfig,
    seed: u64,
    jobs: usize,
    out: &Path,
) -> Result<RunManifest> {
    // every subcommand needs Λ'₂ ⊆ Λ'₃, even those that never build the field
    build_field_modes(&cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Input(format!("thread pool: {e}")))?;
    let start = std::time::Instant::now();
    let mut sink = Sink::new(out)?;
    pool.install(|| dispatch(command, &cfg, seed, &mut sink))?;
    let manifest = RunManifest {
        tool: "fmqed".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.clone(),
        seed,
        jobs,
        config: cfg,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        outputs: sink.entries()?,
    };
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(manifest)
}

/// Re-run a manifest into `out`; any CSV whose hash differs is an invariant
/// violation.
pub fn replay(manifest: &Path, out: &Path, jobs: usize) -> Result<RunManifest> {
    let text =
        fs::read_to_string(manifest).map_err(|e| Error::io(manifest.display().to_string(), e))?;
    let old: RunManifest = serde_json::from_str(&text)?;
    if matches!(old.command, Command::Replay(_)) {
        return Err(Error::Input("cannot replay a replay manifest".into()));
    }
    old.config.validate()?;
    let new = execute(&old.command, old.config.clone(), old.seed, jobs, out)?;
    for entry in old.outputs.iter().filter(|e| e.path.ends_with(".csv")) {
        match new.outputs.iter().find(|n| n.path == entry.path) {
            Some(n) if n.sha256 == entry.sha256 => {}
            Some(_) => {
                return Err(Error::Invariant(format!(
                    "{} differs from the manifest",
                    entry.path
                )))
            }
            None => {
                return Err(Error::Invariant(format!(
                    "{} was not reproduced",
                    entry.path
                )))
            }
        }
    }
    Ok(new)
}

fn dispatch(cmd: &Command, cfg: &SimulationConfig, seed: u64, sink: &mut Sink) -> Result<()> {
    match cmd {
        Command::Modes(a) => modes(cfg, a, sink),
        Command::CoulombLimit(a) => coulomb_limit(cfg, a, sink),
        Command::Riemann(a) => riemann(a, sink),
        Command::FockSpectrum => fock_spectrum(cfg, sink),
        Command::ActionEval(a) => action_eval(cfg, a, sink),
        Command::Propagate(a) => propagate(cfg, a, sink),
        Command::Residual(a) => residual(cfg, a, sink),
        Command::RhoStar(a) => rho_star(cfg, a, seed, sink),
        Command::GEquivalence(a) => g_equivalence(cfg, a, sink),
        Command::Replay(_) => Err(Error::Input("nested replay".into())),
    }
}

fn modes(cfg: &SimulationConfig, a: &ModesArgs, sink: &mut Sink) -> Result<()> {
    let role = match a.role {
        RoleArg::Coulomb => ModeRole::Coulomb,
        RoleArg::Coupling => ModeRole::Coupling,
        RoleArg::Field => ModeRole::Field,
    };
    let set = build_mode_set(cfg, role)?;
    let frame = build_polarization(&set)?;
    sink.csv("modes.csv", &mode_table(&set, &frame))
}

fn parse_steps(text: &str) -> Result<Vec<(f64, f64)>> {
    text.split(',')
        .map(|pair| {
            let (l, e) = pair
                .split_once(':')
                .ok_or_else(|| Error::Input(format!("expected L:eps, got {pair:?}")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Input(format!("not a number: {s:?}")))
            };
            Ok((parse(l)?, parse(e)?))
        })
        .collect()
}

fn coulomb_limit(cfg: &SimulationConfig, a: &CoulombArgs, sink: &mut Sink) -> Result<()> {
    let charges = if cfg.charges.len() == 2 {
        [cfg.charges[0], cfg.charges[1]]
    } else {
        [1.0, 1.0]
    };
    let rows = coulomb_limit_table(a.separation, charges, &parse_steps(&a.steps)?)?;
    sink.csv("coulomb_limit.csv", &rows)
}

#[derive(Serialize)]
struct RiemannRow {
    side: f64,
    value: f64,
    tail_bound: f64,
    integral: f64,
    rel_error: f64,
    points: u64,
}

fn riemann(a: &RiemannArgs, sink: &mut Sink) -> Result<()> {
    let summand = match a.summand {
        SummandArg::Lorentzian => LatticeSummand::lorentzian_coulomb(),
        SummandArg::GaussianCutoff => LatticeSummand::gaussian_cutoff_coulomb(),
    };
    let integral = summand.integral.unwrap_or(f64::NAN);
    let rows = a
        .sides
        .iter()
        .map(|&side| {
            let r = riemann_sum(&summand, &BoxDims::cube(side))?;
            Ok(RiemannRow {
                side,
                value: r.value,
                tail_bound: r.tail_bound,
                integral,
                rel_error: (r.value - integral).abs() / integral,
                points: r.points,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    sink.csv("riemann.csv", &rows)?;
    sink.csv(
        "counterexample.csv",
        &anisotropic_counterexample(&a.scales)?,
    )
}

#[derive(Serialize)]
struct SpectrumRow {
    energy: f64,
    multiplicity: usize,
}

fn fock_spectrum(cfg: &SimulationConfig, sink: &mut Sink) -> Result<()> {
    let model = FieldModel::from_config(cfg)?;
    let fock = FockSpace::new(&model, cfg.occupation_cap)?;
    let rows: Vec<SpectrumRow> = diagonal_spectrum(&fock.h_rad())
        .into_iter()
        .map(|l| SpectrumRow {
            energy: l.energy,
            multiplicity: l.multiplicity,
        })
        .collect();
    sink.csv("spectrum.csv", &rows)
}

/// Path file for `action-eval`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathFile {
    pub times: Vec<f64>,
    pub particles: Vec<Vec<[f64; 3]>>,
    pub fields: Vec<Vec<f64>>,
    #[serde(default)]
    pub offsets: Option<Vec<Vec<[f64; 2]>>>,
}

impl PathFile {
    pub fn into_path(self) -> Result<BrokenPath> {
        let particles = self
            .particles
            .into_iter()
            .map(|v| v.into_iter().map(Vector3::from).collect())
            .collect();
        let mut path = BrokenPath::new(Subdivision::new(self.times)?, particles, self.fields)?;
        path.offsets = self.offsets;
        Ok(path)
    }
}

#[derive(Serialize)]
struct SegmentRow {
    t: f64,
    s: f64,
    kinetic: f64,
    coulomb: f64,
    gauge: f64,
    field_kinetic: f64,
    field_potential: f64,
    total: f64,
}

fn action_eval(cfg: &SimulationConfig, a: &ActionArgs, sink: &mut Sink) -> Result<()> {
    let text =
        fs::read_to_string(&a.path).map_err(|e| Error::io(a.path.display().to_string(), e))?;
    let file: PathFile =
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("path file: {e}")))?;
    let path = file.into_path()?;
    let model = ActionModel::from_config(cfg)?;
    let mut rows = Vec::new();
    for (l, (t, s)) in path.subdivision.segments().enumerate() {
        let terms = model.segment_terms(
            t,
            s,
            &path.particles[l + 1],
            &path.particles[l],
            &path.fields[l + 1],
            &path.fields[l],
        )?;
        rows.push(SegmentRow {
            t,
            s,
            kinetic: terms.kinetic,
            coulomb: terms.coulomb,
            gauge: terms.gauge,
            field_kinetic: terms.field_kinetic,
            field_potential: terms.field_potential,
            total: terms.total(),
        });
    }
    sink.csv("action_segments.csv", &rows)?;
    #[derive(Serialize)]
    struct Total {
        action: f64,
        segments: usize,
    }
    sink.json(
        "action.json",
        &Total {
            action: model.broken_action(&path)?,
            segments: rows.len(),
        },
    )
}

/// Backend for the config, plus a normalized test state on its basis.
pub fn build_backend(
    cfg: &SimulationConfig,
    choice: BackendArg,
) -> Result<(Box<dyn StepBackend>, StateVector)> {
    let model = FieldModel::from_config(cfg)?;
    let fock = FockSpace::new(&model, cfg.occupation_cap)?;
    let coupled = model.layout.n_coupled > 0 && cfg.charges.iter().any(|&e| e != 0.0);
    let use_galerkin = match choice {
        BackendArg::Auto => coupled,
        BackendArg::Analytic => false,
        BackendArg::Galerkin => true,
    };
    let field_state = {
        let vac = fock.vacuum();
        if cfg.occupation_cap >= 1 && model.layout.modes.n_half() > 0 {
            let s = model.layout.modes.half[0].s;
            let one = fock.photon_state(&[(s, 1, 1)])?;
            StateVector(vac.0 + one.0).normalized()?
        } else {
            vac
        }
    };
    if use_galerkin {
        if cfg.n_particles != 1 {
            return Err(Error::Unsupported(
                "the galerkin backend needs exactly one particle".into(),
            ));
        }
        let params = GalerkinParams {
            eps: cfg.epsilon_reg,
            ..GalerkinParams::default()
        };
        let g = GalerkinBackend::new(
            fock,
            cfg.masses[0],
            cfg.charges[0],
            cfg.plane_wave_max,
            params,
        )?;
        let state = with_particle(&g.particles, &field_state)?;
        return Ok((Box::new(g), state));
    }
    match cfg.n_particles {
        0 => Ok((
            Box::new(AnalyticBackend::new(fock, &[], None)?),
            field_state,
        )),
        1 => {
            let pb = ParticleBasis::cube(cfg.plane_wave_max);
            let state = with_particle(&pb, &field_state)?;
            let b = AnalyticBackend::new(fock, &cfg.charges, Some((pb, cfg.masses[0])))?;
            Ok((Box::new(b), state))
        }
        _ => Err(Error::Unsupported(
            "propagation is limited to at most one particle".into(),
        )),
    }
}

/// Plane waves n = 0 and the first positive one, tensored with the field state.
fn with_particle(pb: &ParticleBasis, field: &StateVector) -> Result<StateVector> {
    let fd = field.len();
    let mut v = DVector::from_element(pb.len() * fd, Complex64::new(0.0, 0.0));
    let rest = pb.momenta.iter().position(|n| *n == [0, 0, 0]);
    let moving = pb
        .momenta
        .iter()
        .position(|n| n.iter().filter(|&&c| c != 0).count() == 1 && n.iter().sum::<i64>() == 1);
    for p in [rest, moving].into_iter().flatten() {
        for j in 0..fd {
            v[p * fd + j] += field.0[j];
        }
    }
    StateVector(v).normalized()
}

fn propagate(cfg: &SimulationConfig, a: &PropagateArgs, sink: &mut Sink) -> Result<()> {
    let (backend, f) = build_backend(cfg, a.backend)?;
    let t_final = match a.t_final {
        Some(t) => t,
        None => {
            let model = FieldModel::from_config(cfg)?;
            let omega = (0..model.layout.len())
                .map(|o| model.frequency(o))
                .fold(f64::INFINITY, f64::min);
            if !omega.is_finite() {
                return Err(Error::Input("no field modes; pass --t-final".into()));
            }
            std::f64::consts::PI / (2.0 * omega)
        }
    };
    let rows = convergence_study(backend.as_ref(), &f, t_final, &a.steps)?;
    sink.csv("convergence.csv", &rows)
}

fn residual(cfg: &SimulationConfig, a: &ResidualArgs, sink: &mut Sink) -> Result<()> {
    let (backend, f) = build_backend(cfg, a.backend)?;
    let rhos: Vec<f64> = a.exponents.iter().map(|&p| 2f64.powi(-p)).collect();
    let table = residual_study(backend.as_ref(), &f, &rhos)?;
    sink.csv("residual.csv", &table.rows)?;
    #[derive(Serialize)]
    struct Fit {
        backend: &'static str,
        slope: f64,
        monotone: bool,
    }
    sink.json(
        "residual_fit.json",
        &Fit {
            backend: backend.name(),
            slope: table.slope,
            monotone: table.is_monotone(),
        },
    )
}

fn rho_star(cfg: &SimulationConfig, a: &RhoStarArgs, seed: u64, sink: &mut Sink) -> Result<()> {
    let model = ActionModel::from_config(cfg)?;
    let bx = SampleBox::for_model(&model);
    let report = rho_star_search(&model, bx, a.samples, seed, a.ceiling, a.iterations)?;
    sink.csv("rho_star_certificates.csv", &report.certificates)?;
    #[derive(Serialize)]
    struct Summary {
        rho_star: f64,
        ceiling: f64,
        samples: usize,
        seed: u64,
        min_det_at_rho_star: f64,
        sample_box: SampleBox,
        note: &'static str,
    }
    sink.json(
        "rho_star.json",
        &Summary {
            rho_star: report.rho_star,
            ceiling: report.ceiling,
            samples: report.samples,
            seed: report.seed,
            min_det_at_rho_star: report.min_det_at_rho_star,
            sample_box: bx,
            note: "certified at the sampled points only",
        },
    )
}

#[derive(Serialize)]
struct GRow {
    rho: f64,
    eps: f64,
    distance_to_step: f64,
}

#[derive(Serialize)]
struct XiRow {
    s1: i64,
    s2: i64,
    s3: i64,
    rho: f64,
    closed_form_im: f64,
    squared_fresnel_re: f64,
    squared_fresnel_im: f64,
    rel_diff: f64,
}

fn g_equivalence(cfg: &SimulationConfig, a: &GArgs, sink: &mut Sink) -> Result<()> {
    let (backend, f) = build_backend(cfg, BackendArg::Auto)?;
    let coulomb = build_mode_set(cfg, ModeRole::Coulomb)?;
    let volume = cfg.volume();
    let mut rows = Vec::new();
    let mut xi_rows = Vec::new();
    for &rho in &a.rho {
        let c = fundamental_step(backend.as_ref(), &f, rho, 0.0)?;
        for &eps in &FRESNEL_EPSILONS {
            let g = g_epsilon_step(backend.as_ref(), &coulomb, volume, &f, rho, 0.0, eps)?;
            rows.push(GRow {
                rho,
                eps,
                distance_to_step: g.distance(&c),
            });
        }
        let g = g_epsilon_extrapolated(backend.as_ref(), &coulomb, volume, &f, rho, 0.0)?;
        rows.push(GRow {
            rho,
            eps: 0.0,
            distance_to_step: g.distance(&c),
        });
        for w in &coulomb.half {
            let xi = xi_factor(w.norm_sq(), rho, cfg.hbar, volume)?;
            let b = rho * w.norm_sq() / (4.0 * std::f64::consts::PI * cfg.hbar * volume);
            let fr = crate::propagator::fresnel_gaussian(b)?.powi(2);
            xi_rows.push(XiRow {
                s1: w.s[0],
                s2: w.s[1],
                s3: w.s[2],
                rho,
                closed_form_im: xi.im,
                squared_fresnel_re: fr.re,
                squared_fresnel_im: fr.im,
                rel_diff: (xi - fr).norm() / xi.norm(),
            });
        }
    }
    sink.csv("g_equivalence.csv", &rows)?;
    sink.csv("xi_factor.csv", &xi_rows)
}

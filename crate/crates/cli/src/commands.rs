//! The commands behind the CLI. Each takes a [`RunConfig`] and returns a
//! [`Report`] whose table becomes the CSV output.

use finite_energy::dense::{DenseModel, DenseObservable, DenseState, Pauli, Sector};
use finite_energy::device::{
    reconstruct_signed, split_seed, wrap_noisy, AmplitudeSource, DenseSource, FreeFermionSource, NoiseSpec,
    NoisySource,
};
use finite_energy::estimators::{
    double_filtered_observable, filtered_observable, find_valid_energy, ldos, EstimatorOptions,
};
use finite_energy::filter::{cosine_power, gaussian_cos_gap, truncation_error_bound};
use finite_energy::ising::{exact_canonical, exact_microcanonical, BlockObservable, FockState, IsingModel};
use finite_energy::qamc::{
    exhaustive_microcanonical, metropolis_canonical, metropolis_micro, run_chains, EnergyGrid, McConfig,
    McTrace, WeightRule,
};
use finite_energy::{Error, FilterExpansion, FilterSpec, Grid};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::output::{Cell, Report, Status, Table};
use crate::{CliError, CliResult, RunConfig};

pub const COMMANDS: &[&str] = &[
    "ldos",
    "filtered",
    "double-filtered",
    "find-energy",
    "qamc-micro",
    "qamc-canonical",
    "bounds-check",
    "sign-reconstruct",
    "crosscheck",
];

/// Crossover of `e^{-x²/2}` and `|cos x|`.
pub const GAUSSIAN_CROSSOVER: f64 = 0.566 * std::f64::consts::PI;

pub fn execute(cfg: &RunConfig) -> CliResult<Report> {
    let run: fn(&RunConfig) -> CliResult<Report> = match cfg.command.as_str() {
        "ldos" => |c| state_command(c, Kind::Ldos),
        "filtered" => |c| state_command(c, Kind::Single),
        "double-filtered" => |c| state_command(c, Kind::Double),
        "find-energy" => cmd_find_energy,
        "qamc-micro" => cmd_qamc_micro,
        "qamc-canonical" => cmd_qamc_canonical,
        "bounds-check" => cmd_bounds_check,
        "sign-reconstruct" => cmd_sign_reconstruct,
        "crosscheck" => cmd_crosscheck,
        "" => return Err(CliError::Usage("no command given".into())),
        other => {
            return Err(CliError::Usage(format!(
                "unknown command {other:?}; expected one of {}",
                COMMANDS.join(", ")
            )))
        }
    };
    if cfg.couplings.is_empty() {
        return run(cfg);
    }
    let mut table = Table::new(Vec::<String>::new());
    let mut notes = Vec::new();
    for (i, pair) in cfg.couplings.iter().enumerate() {
        let (g, h) = parse_pair(pair)?;
        let sub = RunConfig {
            g,
            h,
            couplings: vec![],
            seed: split_seed(cfg.seed, i as u64),
            ..cfg.clone()
        };
        let mut report = run(&sub)?;
        report.table.header.splice(0..0, ["g".to_string(), "h".to_string()]);
        for (cells, _) in &mut report.table.rows {
            cells.splice(0..0, [Cell::Float(g), Cell::Float(h)]);
        }
        table.extend(report.table);
        notes.extend(report.notes);
    }
    Ok(Report { table, notes })
}

fn parse_pair(text: &str) -> CliResult<(f64, f64)> {
    let bad = || CliError::Config(format!("coupling pair {text:?} is not g:h"));
    let (g, h) = text.split_once(':').ok_or_else(bad)?;
    Ok((g.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?))
}

/// Grid family of a variant; `Natural` is `s = N` for the Ising chains and
/// the model's own scale for the tilted chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridChoice {
    Natural,
    Optimized(f64),
    Scaled(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub delta: f64,
    pub grid: GridChoice,
    pub label: String,
}

impl Variant {
    pub fn spec(&self, cfg: &RunConfig, n: usize, natural: Grid, factor: f64) -> CliResult<FilterSpec> {
        let grid = match self.grid {
            GridChoice::Natural => natural,
            GridChoice::Optimized(r) => Grid::Optimized { r },
            GridChoice::Scaled(scale) => Grid::Scaled { scale },
        };
        Ok(FilterSpec::with_x(self.delta * factor, cfg.x, n, grid)?)
    }
}

/// Parses `delta@full`, `delta@opt:r` and `delta@scaled:s`.
pub fn parse_variants(list: &[String]) -> CliResult<Vec<Variant>> {
    if list.is_empty() {
        return Err(CliError::Config("need at least one filter variant".into()));
    }
    let mut out = Vec::new();
    for text in list {
        let bad = || CliError::Config(format!("variant {text:?} is not delta@full, delta@opt:r or delta@scaled:s"));
        let (delta, grid) = text.split_once('@').ok_or_else(bad)?;
        let delta: f64 = delta.trim().parse().map_err(|_| bad())?;
        let (grid, label) = match grid.trim().split_once(':') {
            None if grid.trim() == "full" => (GridChoice::Natural, "full".to_string()),
            Some(("opt", r)) => (GridChoice::Optimized(r.parse().map_err(|_| bad())?), format!("opt_r{r}")),
            Some(("scaled", s)) => (GridChoice::Scaled(s.parse().map_err(|_| bad())?), format!("scaled_s{s}")),
            _ => return Err(bad()),
        };
        out.push(Variant { delta, grid, label });
    }
    if out.iter().any(|v| v.delta != out[0].delta) {
        for v in &mut out {
            v.label = format!("d{}_{}", v.delta, v.label);
        }
    }
    Ok(out)
}

/// `δ(N) = δ · (n_ref/N)^k` for schedules `const`, `inv_n`, `inv_n2`.
pub fn schedule_factor(name: &str, n_ref: usize, n: usize) -> CliResult<f64> {
    let k = match name {
        "const" => 0,
        "inv_n" => 1,
        "inv_n2" => 2,
        other => return Err(CliError::Config(format!("unknown width schedule {other:?}"))),
    };
    Ok((n_ref as f64 / n as f64).powi(k))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Method {
    Series,
    Exact,
    Both,
}

impl Method {
    fn parse(text: &str) -> CliResult<Self> {
        match text {
            "series" => Ok(Method::Series),
            "exact" => Ok(Method::Exact),
            "both" => Ok(Method::Both),
            other => Err(CliError::Config(format!("unknown method {other:?}"))),
        }
    }

    fn series(self) -> bool {
        self != Method::Exact
    }

    fn exact(self) -> bool {
        self != Method::Series
    }
}

fn is_dense(model: &str) -> CliResult<bool> {
    match model {
        "ising" => Ok(false),
        "ising-dense" | "tilted" => Ok(true),
        other => Err(CliError::Config(format!(
            "model {other:?} not usable here; expected ising, ising-dense or tilted"
        ))),
    }
}

pub fn dense_model(cfg: &RunConfig, n: usize) -> CliResult<DenseModel> {
    Ok(match cfg.model.as_str() {
        "ising-dense" => DenseModel::transverse_ising(cfg.g, cfg.h, n)?,
        "tilted" => DenseModel::tilted_ising(cfg.j, cfg.h, cfg.g, n, Sector::ReflectionEven)?,
        other => return Err(CliError::Config(format!("{other:?} is not a dense model"))),
    })
}

fn natural_grid(model: &DenseModel) -> Grid {
    model.tilted_scale().map_or(Grid::Full, |scale| Grid::Scaled { scale })
}

fn label_text(p: &FockState) -> String {
    p.labels().iter().map(|l| char::from(b'0' + l)).collect()
}

/// Explicit labels, or `states` seeded random Fock states.
pub fn fock_states(cfg: &RunConfig, n_blocks: usize) -> CliResult<Vec<FockState>> {
    if cfg.labels.trim().is_empty() {
        return Ok((0..cfg.states)
            .map(|i| FockState::random(n_blocks, &mut ChaCha8Rng::seed_from_u64(split_seed(cfg.seed, i as u64))))
            .collect());
    }
    cfg.labels
        .split(|c: char| c == ';' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            let labels = s
                .chars()
                .map(|c| c.to_digit(10).map(|d| d as u8))
                .collect::<Option<Vec<u8>>>()
                .ok_or_else(|| CliError::Config(format!("label string {s:?} is not digits 1-4")))?;
            if labels.len() != n_blocks {
                return Err(CliError::Config(format!("label string {s:?} needs {n_blocks} blocks")));
            }
            Ok(FockState::new(labels)?)
        })
        .collect()
}

fn dense_states(cfg: &RunConfig, n: usize) -> CliResult<Vec<(String, DenseState)>> {
    if !cfg.thetas.is_empty() {
        return cfg
            .thetas
            .iter()
            .map(|&t| Ok((format!("theta={t}"), DenseState::product_theta(t, n)?)))
            .collect();
    }
    if cfg.model == "tilted" {
        return Err(CliError::Config("tilted runs need product-state angles (thetas)".into()));
    }
    fock_states(cfg, n / 2)?
        .into_iter()
        .map(|p| Ok((label_text(&p), DenseState::fock(n, &p)?)))
        .collect()
}

pub fn block_observable(name: &str, model: &IsingModel) -> CliResult<BlockObservable> {
    Ok(match name {
        "magnetization" => BlockObservable::magnetization(model),
        "energy_density" => BlockObservable::energy_density(model),
        "identity" => BlockObservable::identity(model.n_blocks()),
        other => {
            return Err(CliError::Config(format!(
                "observable {other:?} unavailable for free fermions; use magnetization, energy_density or identity"
            )))
        }
    })
}

/// Named observables; single-site and bond operators sit at the chain centre.
pub fn dense_observable(name: &str, model: &DenseModel) -> CliResult<DenseObservable> {
    let n = model.n_sites();
    let (a, b) = (n / 2 - 1, n / 2);
    Ok(match name {
        "magnetization" if model.tilted_scale().is_none() => DenseObservable::fermion_density(n)?,
        "magnetization" => {
            let mut terms = vec![(0.5, vec![])];
            terms.extend((0..n).map(|i| (0.5 / n as f64, vec![(i, Pauli::Z)])));
            DenseObservable::pauli_sum(n, &terms)?
        }
        "energy_density" => model.hamiltonian_observable(1.0 / n as f64)?,
        "identity" => DenseObservable::pauli_sum(n, &[(1.0, vec![])])?,
        "zz" => DenseObservable::pauli_sum(n, &[(1.0, vec![(a, Pauli::Z), (b, Pauli::Z)])])?,
        "x" => DenseObservable::pauli(n, a, Pauli::X)?,
        "z" => DenseObservable::pauli(n, a, Pauli::Z)?,
        other => {
            return Err(CliError::Config(format!(
                "unknown observable {other:?}; use magnetization, energy_density, identity, zz, x or z"
            )))
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Ldos,
    Single,
    Double,
}

type ExactFn<'a, S> = Box<
    dyn Fn(
            Kind,
            &<S as AmplitudeSource>::State,
            Option<&<S as AmplitudeSource>::Observable>,
            f64,
            &FilterSpec,
        ) -> finite_energy::Result<f64>
        + 'a,
>;
type ReferenceFn<'a, S> = Box<dyn Fn(&<S as AmplitudeSource>::Observable, f64) -> finite_energy::Result<f64> + 'a>;

struct Setup<'a, S: AmplitudeSource> {
    n: usize,
    source: S,
    states: Vec<(String, S::State)>,
    observables: Vec<S::Observable>,
    natural: Grid,
    exact: Option<ExactFn<'a, S>>,
    reference: Option<ReferenceFn<'a, S>>,
}

fn series_value<S: AmplitudeSource>(
    kind: Kind,
    source: &mut S,
    state: &S::State,
    obs: Option<&S::Observable>,
    energy: f64,
    expansion: &FilterExpansion,
) -> finite_energy::Result<f64> {
    let opts = EstimatorOptions::default();
    Ok(match (kind, obs) {
        (Kind::Ldos, _) => ldos(source, state, energy, expansion)?.value,
        (Kind::Single, Some(o)) => filtered_observable(source, state, o, energy, expansion, opts)?.value,
        (Kind::Double, Some(o)) => double_filtered_observable(source, state, o, energy, expansion, opts)?.value,
        _ => unreachable!("filtered values need an observable"),
    })
}

/// Fills an empty cell and degrades the row status on an unresolvable energy.
fn resolve(value: finite_energy::Result<f64>, status: &mut Status) -> CliResult<Cell> {
    match value {
        Ok(v) => Ok(Cell::Float(v)),
        Err(Error::UnresolvableEnergy { .. }) => {
            *status = Status::Unresolvable;
            Ok(Cell::Empty)
        }
        Err(e) => Err(e.into()),
    }
}

fn state_command(cfg: &RunConfig, kind: Kind) -> CliResult<Report> {
    let dense = is_dense(&cfg.model)?;
    let method = Method::parse(&cfg.method)?;
    if method.exact() && !dense {
        return Err(CliError::Config("exact filters need a dense model".into()));
    }
    let variants = parse_variants(&cfg.variants)?;
    let observables: Vec<String> = if kind == Kind::Ldos { vec![] } else { cfg.observables.clone() };
    if kind != Kind::Ldos && observables.is_empty() {
        return Err(CliError::Config("need at least one observable".into()));
    }
    let reference = dense && kind != Kind::Ldos && cfg.window > 0.0;
    let mut header: Vec<String> = ["n", "state", "e_mean", "sigma", "energy", "energy_per_site", "schedule", "factor"]
        .map(String::from)
        .to_vec();
    let quantities: Vec<String> = if kind == Kind::Ldos { vec!["D".into()] } else { observables.clone() };
    for q in &quantities {
        for v in &variants {
            if method.series() {
                header.push(format!("{q}_{}", v.label));
            }
            if method.exact() {
                header.push(format!("{q}_{}_exact", v.label));
            }
        }
        if reference {
            header.push(format!("ref_{q}"));
            for v in &variants {
                header.push(format!("dev_{q}_{}", v.label));
            }
        }
    }
    header.push("truncation_bound".into());
    let mut table = Table::new(header);
    let sizes = if cfg.sizes.is_empty() { vec![cfg.n] } else { cfg.sizes.clone() };
    for &n in &sizes {
        if dense {
            let model = dense_model(cfg, n)?;
            let observables = observables
                .iter()
                .map(|o| dense_observable(o, &model))
                .collect::<CliResult<Vec<_>>>()?;
            let m = &model;
            let exact: ExactFn<'_, DenseSource<'_>> = Box::new(move |kind, psi, obs, e, spec| match (kind, obs) {
                (Kind::Ldos, _) => m.exact_ldos(psi, e, spec),
                (Kind::Single, Some(o)) => m.single_filtered_exact(psi, o, e, spec),
                (Kind::Double, Some(o)) => m.filtered_expectation_exact(psi, o, e, spec),
                _ => unreachable!("filtered values need an observable"),
            });
            let w = cfg.window * n as f64;
            let window: ReferenceFn<'_, DenseSource<'_>> = Box::new(move |o, e| m.eigenwindow_average(o, e, w));
            let mut setup = Setup {
                n,
                source: DenseSource::new(m),
                states: dense_states(cfg, n)?,
                observables,
                natural: natural_grid(m),
                exact: Some(exact),
                reference: Some(window),
            };
            state_rows(cfg, kind, method, reference, &variants, &mut setup, &mut table)?;
        } else {
            let model = IsingModel::new(cfg.g, cfg.h, n)?;
            let observables = observables
                .iter()
                .map(|o| block_observable(o, &model))
                .collect::<CliResult<Vec<_>>>()?;
            let states = fock_states(cfg, model.n_blocks())?
                .into_iter()
                .map(|p| (label_text(&p), p))
                .collect();
            let mut setup = Setup {
                n,
                source: FreeFermionSource::new(model),
                states,
                observables,
                natural: Grid::Full,
                exact: None,
                reference: None,
            };
            state_rows(cfg, kind, method, false, &variants, &mut setup, &mut table)?;
        }
    }
    Ok(Report { table, notes: vec![] })
}

fn state_rows<S: AmplitudeSource>(
    cfg: &RunConfig,
    kind: Kind,
    method: Method,
    reference: bool,
    variants: &[Variant],
    setup: &mut Setup<'_, S>,
    table: &mut Table,
) -> CliResult<()> {
    let n = setup.n;
    let schedules = if cfg.schedules.is_empty() { vec!["const".to_string()] } else { cfg.schedules.clone() };
    let obs_list: Vec<Option<usize>> = if kind == Kind::Ldos {
        vec![None]
    } else {
        (0..setup.observables.len()).map(Some).collect()
    };
    for (name, state) in &setup.states {
        let (mean, sigma) = setup.source.moments(state)?;
        let energies = if cfg.energies.is_empty() { vec![mean] } else { cfg.energies.clone() };
        for &e in &energies {
            for sched in &schedules {
                let factor = schedule_factor(sched, cfg.n_ref, n)?;
                let specs = variants
                    .iter()
                    .map(|v| v.spec(cfg, n, setup.natural, factor))
                    .collect::<CliResult<Vec<_>>>()?;
                let expansions = if method.series() {
                    specs
                        .iter()
                        .map(|s| FilterExpansion::build(*s))
                        .collect::<finite_energy::Result<Vec<_>>>()?
                } else {
                    vec![]
                };
                let mut status = Status::Ok;
                let mut cells: Vec<Cell> = vec![
                    n.into(),
                    name.clone().into(),
                    mean.into(),
                    sigma.into(),
                    e.into(),
                    (e / n as f64).into(),
                    sched.clone().into(),
                    factor.into(),
                ];
                for &oi in &obs_list {
                    let obs = oi.map(|i| &setup.observables[i]);
                    let mut best = Vec::with_capacity(variants.len());
                    for (vi, spec) in specs.iter().enumerate() {
                        let mut value = None;
                        if method.series() {
                            let r = series_value(kind, &mut setup.source, state, obs, e, &expansions[vi]);
                            let cell = resolve(r, &mut status)?;
                            value = cell.as_f64();
                            cells.push(cell);
                        }
                        if method.exact() {
                            let exact = setup.exact.as_ref().expect("exact filters on dense models");
                            let cell = resolve(exact(kind, state, obs, e, spec), &mut status)?;
                            value = cell.as_f64().or(value);
                            cells.push(cell);
                        }
                        best.push(value);
                    }
                    if reference {
                        let f = setup.reference.as_ref().expect("references on dense models");
                        let r = match f(obs.expect("references need an observable"), e) {
                            Ok(v) => Some(v),
                            Err(Error::EmptyWindow { .. }) => None,
                            Err(err) => return Err(err.into()),
                        };
                        cells.push(r.into());
                        for b in best {
                            cells.push(b.zip(r).map(|(b, r)| (b - r).abs()).into());
                        }
                    }
                }
                cells.push(truncation_error_bound(cfg.x).into());
                table.push(cells, status);
            }
        }
    }
    Ok(())
}

fn cmd_find_energy(cfg: &RunConfig) -> CliResult<Report> {
    let variants = parse_variants(&cfg.variants)?;
    let mut table = Table::new([
        "n",
        "state",
        "variant",
        "delta",
        "e_mean",
        "sigma",
        "interval_lo",
        "interval_hi",
        "slices",
        "evaluated",
        "chosen_energy",
        "n_at_e",
        "threshold",
        "q_at_e",
        "q_threshold",
        "success",
    ]);
    let sizes = if cfg.sizes.is_empty() { vec![cfg.n] } else { cfg.sizes.clone() };
    for &n in &sizes {
        if is_dense(&cfg.model)? {
            let model = dense_model(cfg, n)?;
            let mut src = DenseSource::new(&model);
            let natural = natural_grid(&model);
            for (name, psi) in dense_states(cfg, n)? {
                search_rows(cfg, &variants, n, natural, &mut src, &name, &psi, &mut table)?;
            }
        } else {
            let model = IsingModel::new(cfg.g, cfg.h, n)?;
            let states = fock_states(cfg, model.n_blocks())?;
            let mut src = FreeFermionSource::new(model);
            for p in states {
                search_rows(cfg, &variants, n, Grid::Full, &mut src, &label_text(&p), &p, &mut table)?;
            }
        }
    }
    Ok(Report { table, notes: vec![] })
}

#[allow(clippy::too_many_arguments)]
fn search_rows<S: AmplitudeSource>(
    cfg: &RunConfig,
    variants: &[Variant],
    n: usize,
    natural: Grid,
    src: &mut S,
    name: &str,
    state: &S::State,
    table: &mut Table,
) -> CliResult<()> {
    for v in variants {
        let spec = v.spec(cfg, n, natural, 1.0)?;
        let r = find_valid_energy(src, state, &spec)?;
        let status = if r.success { Status::Ok } else { Status::NoValidEnergy };
        table.push(
            vec![
                n.into(),
                name.into(),
                v.label.clone().into(),
                spec.delta.into(),
                r.energy_mean.into(),
                r.sigma.into(),
                r.interval.0.into(),
                r.interval.1.into(),
                r.slices.into(),
                r.evaluated.into(),
                r.chosen_energy.into(),
                r.n_at_e.into(),
                r.threshold.into(),
                r.q_at_e.into(),
                r.q_threshold.into(),
                (if r.success { "true" } else { "false" }).into(),
            ],
            status,
        );
    }
    Ok(())
}

fn mc_config(cfg: &RunConfig, seed: u64, cutoff: f64, energy_grid: Option<EnergyGrid>) -> McConfig {
    McConfig {
        samples: cfg.samples,
        burn_in: cfg.burn_in,
        seed,
        cutoff,
        energy_grid,
        blocks: cfg.blocks,
    }
}

fn noisy_source(model: &IsingModel, cfg: &RunConfig, cutoff: f64, seed: u64) -> finite_energy::Result<NoisySource<FreeFermionSource>> {
    let noise = NoiseSpec {
        cutoff,
        shots: (cfg.shots > 0).then_some(cfg.shots),
        seed,
    };
    wrap_noisy(FreeFermionSource::new(model.clone()), noise)
}

/// Runs the chains for one row; cold starts and frozen chains become statuses.
fn chain_row<F>(cfg: &RunConfig, model: &IsingModel, mc: &McConfig, run: F) -> CliResult<(Option<McTrace>, Status)>
where
    F: Fn(&mut NoisySource<FreeFermionSource>, &McConfig) -> finite_energy::Result<McTrace> + Sync,
{
    let noise_seed = split_seed(mc.seed, u64::MAX);
    let result = run_chains(
        cfg.chains,
        cfg.threads,
        mc,
        |i| noisy_source(model, cfg, mc.cutoff, split_seed(noise_seed, i as u64)),
        run,
    );
    match result {
        Ok(t) => {
            let status = if t.converged() { Status::Ok } else { Status::NotConverged };
            Ok((Some(t), status))
        }
        Err(Error::ColdStart { .. }) => Ok((None, Status::ColdStart)),
        Err(Error::UnresolvableEnergy { .. }) => Ok((None, Status::Unresolvable)),
        Err(e) => Err(e.into()),
    }
}

fn trace_cells(t: &Option<McTrace>) -> Vec<Cell> {
    match t {
        Some(t) => vec![
            t.estimate.into(),
            t.standard_error.into(),
            t.acceptance_rate.into(),
            t.unresolved_fraction.into(),
            t.samples_used.into(),
            t.d_evaluations.into(),
        ],
        None => vec![Cell::Empty; 6],
    }
}

fn micro_energies(cfg: &RunConfig) -> CliResult<Vec<f64>> {
    if !cfg.energies.is_empty() {
        return Ok(cfg.energies.clone());
    }
    let grid = EnergyGrid::new(cfg.e_min, cfg.e_max, cfg.e_step)?;
    Ok((0..grid.len()).map(|i| grid.energy(i)).collect())
}

/// `M - 1/2 - 0.004 E/N`.
pub fn shifted_magnetization(m: f64, energy: f64, n: usize) -> f64 {
    m - 0.5 - 0.004 * energy / n as f64
}

fn cmd_qamc_micro(cfg: &RunConfig) -> CliResult<Report> {
    let model = IsingModel::new(cfg.g, cfg.h, cfg.n)?;
    let variants = parse_variants(&cfg.variants)?;
    let energies = micro_energies(cfg)?;
    let mut header: Vec<String> = [
        "observable",
        "variant",
        "delta",
        "cutoff",
        "energy",
        "estimate",
        "standard_error",
        "acceptance",
        "unresolved_fraction",
        "samples",
        "d_evaluations",
        "exact",
    ]
    .map(String::from)
    .to_vec();
    if cfg.exhaustive {
        header.push("exhaustive".into());
    }
    if cfg.shifted {
        header.extend(["estimate_shifted".into(), "exact_shifted".into()]);
    }
    let mut table = Table::new(header);
    let mut row = 0u64;
    for name in &cfg.observables {
        let obs = block_observable(name, &model)?;
        for v in &variants {
            let exp = FilterExpansion::build(v.spec(cfg, cfg.n, Grid::Full, 1.0)?)?;
            for &cutoff in &cfg.cutoffs {
                for &e in &energies {
                    let mc = mc_config(cfg, split_seed(cfg.seed, row), cutoff, None);
                    row += 1;
                    let (trace, status) = chain_row(cfg, &model, &mc, |src, c| {
                        metropolis_micro(src, &model, &obs, e, &exp, c)
                    })?;
                    let exact = match v.grid {
                        GridChoice::Natural => exact_microcanonical(&model, &obs, e, &exp).ok(),
                        _ => None,
                    };
                    let mut cells: Vec<Cell> = vec![
                        name.clone().into(),
                        v.label.clone().into(),
                        v.delta.into(),
                        cutoff.into(),
                        e.into(),
                    ];
                    cells.extend(trace_cells(&trace));
                    cells.push(exact.into());
                    if cfg.exhaustive {
                        let rule = WeightRule::Sampling { cutoff };
                        cells.push(exhaustive_microcanonical(&model, &obs, e, &exp, rule).ok().into());
                    }
                    if cfg.shifted {
                        let shift = |m: f64| shifted_magnetization(m, e, cfg.n);
                        cells.push(trace.as_ref().map(|t| shift(t.estimate)).into());
                        cells.push(exact.map(shift).into());
                    }
                    table.push(cells, status);
                }
            }
        }
    }
    Ok(Report { table, notes: vec![] })
}

fn cmd_qamc_canonical(cfg: &RunConfig) -> CliResult<Report> {
    let model = IsingModel::new(cfg.g, cfg.h, cfg.n)?;
    let variants = parse_variants(&cfg.variants)?;
    let grid = EnergyGrid::new(cfg.e_min, cfg.e_max, cfg.e_step)?;
    if cfg.betas.is_empty() {
        return Err(CliError::Config("canonical sampling needs at least one beta".into()));
    }
    let mut table = Table::new([
        "observable",
        "variant",
        "delta",
        "cutoff",
        "beta",
        "estimate",
        "standard_error",
        "acceptance",
        "unresolved_fraction",
        "samples",
        "d_evaluations",
        "exact",
    ]);
    let mut row = 0u64;
    for name in &cfg.observables {
        let obs = block_observable(name, &model)?;
        for v in &variants {
            let exp = FilterExpansion::build(v.spec(cfg, cfg.n, Grid::Full, 1.0)?)?;
            for &cutoff in &cfg.cutoffs {
                for &beta in &cfg.betas {
                    let mc = mc_config(cfg, split_seed(cfg.seed, row), cutoff, Some(grid));
                    row += 1;
                    let (trace, status) = chain_row(cfg, &model, &mc, |src, c| {
                        metropolis_canonical(src, &model, &obs, beta, &exp, c)
                    })?;
                    let mut cells: Vec<Cell> = vec![
                        name.clone().into(),
                        v.label.clone().into(),
                        v.delta.into(),
                        cutoff.into(),
                        beta.into(),
                    ];
                    cells.extend(trace_cells(&trace));
                    cells.push(exact_canonical(&model, &obs, beta)?.into());
                    table.push(cells, status);
                }
            }
        }
    }
    Ok(Report { table, notes: vec![] })
}

/// Worst ratio `|value| / bound` over a batch, and the violations.
#[derive(Default)]
struct BoundTally {
    cases: usize,
    violations: usize,
    worst: f64,
}

impl BoundTally {
    fn record(&mut self, value: f64, bound: f64, slack: f64) {
        self.cases += 1;
        if value > bound * (1.0 + slack) + 1e-300 {
            self.violations += 1;
        }
        if bound > 0.0 {
            self.worst = self.worst.max(value / bound);
        }
    }
}

/// Randomised checks of the cosine-vs-Gaussian bounds and the truncation bound.
pub fn bound_checks(cases: usize, seed: u64) -> CliResult<Vec<(&'static str, usize, usize, f64)>> {
    let pi = std::f64::consts::PI;
    let x1 = GAUSSIAN_CROSSOVER;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = |rng: &mut ChaCha8Rng| 2 * rng.random_range(1u64..=5_000);
    let mut out = Vec::new();

    let mut t = BoundTally::default();
    for _ in 0..cases {
        let m = order(&mut rng);
        let x = rng.random_range(-x1..x1);
        t.record(gaussian_cos_gap(m, x).abs(), (-(m as f64) * x * x / 2.0).exp(), 1e-12);
    }
    out.push(("gaussian", t.cases, t.violations, t.worst));

    let mut t = BoundTally::default();
    for _ in 0..cases {
        let m = order(&mut rng);
        let mu = (pi - x1) * (1.0 - rng.random_range(0.0..1.0));
        let x = x1 + (pi - mu - x1) * rng.random_range(0.0..=1.0);
        let x = if rng.random_bool(0.5) { -x } else { x };
        t.record(gaussian_cos_gap(m, x).abs(), cosine_power(mu, m), 1e-9);
    }
    out.push(("cosine_floor", t.cases, t.violations, t.worst));

    let mut t = BoundTally::default();
    for _ in 0..cases {
        let m = order(&mut rng);
        let x: f64 = rng.random_range(-0.1..0.1);
        let f = gaussian_cos_gap(m, x);
        if f < 0.0 {
            t.violations += 1;
        }
        t.record(f, m as f64 * x.powi(4) / 12.0, 1e-12);
    }
    out.push(("quartic", t.cases, t.violations, t.worst));

    let mut t = BoundTally::default();
    for _ in 0..cases {
        let delta = rng.random_range(0.2..3.0);
        let x = rng.random_range(1.0..4.0);
        let n = rng.random_range(4usize..40);
        let offset = rng.random_range(-20.0..20.0);
        let exp = FilterExpansion::build(FilterSpec::with_x(delta, x, n, Grid::Full)?)?;
        let err = (exp.scalar_filter(offset) - exp.exact_filter(offset)).abs();
        t.record(err, truncation_error_bound(x) + 1e-10, 0.0);
    }
    out.push(("truncation", t.cases, t.violations, t.worst));
    Ok(out)
}

fn cmd_bounds_check(cfg: &RunConfig) -> CliResult<Report> {
    let mut table = Table::new(["regime", "cases", "violations", "worst_ratio"]);
    for (name, cases, violations, worst) in bound_checks(cfg.samples, cfg.seed)? {
        let status = if violations == 0 { Status::Ok } else { Status::Failed };
        table.push(vec![name.into(), cases.into(), violations.into(), worst.into()], status);
    }
    Ok(Report { table, notes: vec![] })
}

/// Open XX chain with seeded couplings in `[0.5, 1.5]` and fields in `[-1, 1]`,
/// and the product state `|+x⟩` on even sites, `(|0⟩ + i|1⟩)/√2` on odd sites.
pub fn xy_instance(n: usize, seed: u64) -> CliResult<(DenseModel, DenseState)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jx: Vec<f64> = (0..n - 1).map(|_| rng.random_range(0.5..1.5)).collect();
    let fields: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let model = DenseModel::xy_chain(jx, fields)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let c = |re, im| Complex64::new(re, im);
    let sites: Vec<[Complex64; 2]> = (0..n)
        .map(|i| if i % 2 == 0 { [c(s, 0.0), c(s, 0.0)] } else { [c(s, 0.0), c(0.0, s)] })
        .collect();
    Ok((model, DenseState::product(&sites)?))
}

fn cmd_sign_reconstruct(cfg: &RunConfig) -> CliResult<Report> {
    if cfg.model != "xy" {
        return Err(CliError::Config("sign reconstruction runs on model = xy".into()));
    }
    if !(cfg.dt > 0.0 && cfg.t_max > 0.0) {
        return Err(CliError::Config("need dt > 0 and t_max > 0".into()));
    }
    let (model, psi) = xy_instance(cfg.n, cfg.seed)?;
    let steps = (cfg.t_max / cfg.dt).round() as usize;
    let amps = (0..=steps)
        .map(|j| model.amplitude(&psi, j as f64 * cfg.dt))
        .collect::<finite_energy::Result<Vec<_>>>()?;
    let abs2: Vec<f64> = amps.iter().map(|a| a.norm_sqr()).collect();
    let signed = reconstruct_signed(&abs2, cfg.dt, 0.0, cfg.zero_tol)?;
    let mut table = Table::new(["t", "abs2", "signed", "direct_re", "direct_im", "error"]);
    let mut worst = 0.0f64;
    for (j, a) in amps.iter().enumerate() {
        let err = (signed.amplitude(j) - a).norm();
        worst = worst.max(err);
        table.push(
            vec![
                (j as f64 * cfg.dt).into(),
                abs2[j].into(),
                signed.values[j].into(),
                a.re.into(),
                a.im.into(),
                err.into(),
            ],
            Status::Ok,
        );
    }
    Ok(Report {
        table,
        notes: vec![format!("{} sign flips, max error {worst:e}", signed.flips.len())],
    })
}

fn cmd_crosscheck(cfg: &RunConfig) -> CliResult<Report> {
    let mut table = Table::new(["check", "max_error", "tolerance"]);
    let mut notes = Vec::new();
    for (name, err, tol) in crosscheck(cfg.n, cfg.g, cfg.h, cfg.seed)? {
        let pass = err <= tol;
        if !pass {
            notes.push(format!("{name}: {err:e} > {tol:e}"));
        }
        table.push(
            vec![name.into(), err.into(), tol.into()],
            if pass { Status::Ok } else { Status::Failed },
        );
    }
    Ok(Report { table, notes })
}

/// Backend-equivalence checks between the free-fermion and dense Ising
/// chains: `(name, max error, tolerance)`.
pub fn crosscheck(n: usize, g: f64, h: f64, seed: u64) -> CliResult<Vec<(&'static str, f64, f64)>> {
    if n % 2 != 0 || n > 12 {
        return Err(CliError::Config("crosscheck needs an even N <= 12".into()));
    }
    let ff = IsingModel::new(g, h, n)?;
    let dense = DenseModel::transverse_ising(g, h, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fock: Vec<FockState> = (0..6).map(|_| FockState::random(n / 2, &mut rng)).collect();
    let psis = fock
        .iter()
        .map(|p| DenseState::fock(n, p))
        .collect::<finite_energy::Result<Vec<_>>>()?;
    let times = [0.0, 0.3, 1.1, 2.5, 7.0];
    let mut a_ff = FreeFermionSource::new(ff.clone());
    let mut a_dense = DenseSource::new(&dense);
    let max = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, f64::max);
    let mut out = Vec::new();

    let mut errs = Vec::new();
    for (p, psi) in fock.iter().zip(&psis) {
        for &t in &times {
            errs.push((a_ff.amplitude(p, t)? - a_dense.amplitude(psi, t)?).norm());
        }
    }
    out.push(("amplitude", max(&mut errs.into_iter()), 1e-10));

    let h_ff = BlockObservable::energy_density(&ff);
    let h_dense = dense.hamiltonian_observable(1.0 / n as f64)?;
    let mut errs = Vec::new();
    for (p, psi) in fock.iter().zip(&psis) {
        for (t1, t2) in [(0.0, 0.0), (0.4, 1.3), (-2.0, 0.7)] {
            let a = a_ff.observable_amplitude(p, &h_ff, t1, t2)?;
            let b = a_dense.observable_amplitude(psi, &h_dense, t1, t2)?;
            errs.push((a - b).norm());
        }
    }
    out.push(("observable_amplitude", max(&mut errs.into_iter()), 1e-10));

    let mut errs = Vec::new();
    for (p, psi) in fock.iter().zip(&psis) {
        for &t in &times[1..] {
            errs.push((a_ff.amplitude(p, -t)? - a_ff.amplitude(p, t)?.conj()).norm());
            errs.push((a_dense.amplitude(psi, -t)? - a_dense.amplitude(psi, t)?.conj()).norm());
        }
    }
    out.push(("conjugation", max(&mut errs.into_iter()), 1e-12));

    // Series estimators against the exact filter operator; the error bound
    // of a quotient is the operator bound over the denominator.
    let spec = FilterSpec::new(1.0, n, Grid::Full)?;
    let exp = FilterExpansion::build(spec)?;
    let bound = exp.truncation_bound();
    let opts = EstimatorOptions::default();
    let (mut ratio_ldos, mut ratio_single, mut ratio_double) = (0.0f64, 0.0f64, 0.0f64);
    for (p, psi) in fock.iter().zip(&psis) {
        let e = ff.state_energy(p) + 0.5;
        let d = ldos(&mut a_ff, p, e, &exp)?.value;
        ratio_ldos = ratio_ldos.max((d - dense.exact_ldos(psi, e, &spec)?).abs() / (bound + 1e-10));
        let s = filtered_observable(&mut a_ff, p, &h_ff, e, &exp, opts)?.value;
        let s_exact = dense.single_filtered_exact(psi, &h_dense, e, &spec)?;
        ratio_single = ratio_single.max((s - s_exact).abs() / (2.0 * bound / d.abs() + 1e-8));
        let q = double_filtered_observable(&mut a_ff, p, &h_ff, e, &exp, opts)?.value;
        let q_exact = dense.filtered_expectation_exact(psi, &h_dense, e, &spec)?;
        ratio_double = ratio_double.max((q - q_exact).abs() / (2.0 * bound / d.abs() + 1e-8));
    }
    out.push(("ldos_error_over_bound", ratio_ldos, 1.0));
    out.push(("filtered_error_over_bound", ratio_single, 1.0));
    out.push(("double_filtered_error_over_bound", ratio_double, 1.0));

    let opt = FilterExpansion::build(FilterSpec::new(1.0, n, Grid::Optimized { r: (n as f64).sqrt() })?)?;
    let mut errs = Vec::new();
    for p in &fock {
        let e = ff.state_energy(p);
        errs.push((ldos(&mut a_ff, p, e, &exp)?.value - ldos(&mut a_ff, p, e, &opt)?.value).abs());
    }
    out.push(("full_vs_optimized_grid", max(&mut errs.into_iter()), 1e-12));

    // x = 6 keeps the truncation error of the trace sums below 1e-7.
    let fine_spec = FilterSpec::with_x(1.0, 6.0, n, Grid::Full)?;
    let fine = FilterExpansion::build(fine_spec)?;
    let mag_ff = BlockObservable::magnetization(&ff);
    let mag_dense = DenseObservable::fermion_density(n)?;
    let mut errs = Vec::new();
    for p in fock.iter().take(3) {
        let e = ff.state_energy(p);
        let a = exact_microcanonical(&ff, &mag_ff, e, &fine)?;
        errs.push((a - dense.microcanonical_trace(&mag_dense, e, &fine_spec)?).abs());
        let b = exhaustive_microcanonical(&ff, &mag_ff, e, &fine, WeightRule::Raw)?;
        errs.push((a - b).abs());
    }
    out.push(("microcanonical_trace", max(&mut errs.into_iter()), 1e-6));

    let mut errs = Vec::new();
    for beta in [0.0, 0.5, 1.0] {
        let a = exact_canonical(&ff, &mag_ff, beta)?;
        errs.push((a - dense.canonical_trace(&mag_dense, beta)?).abs());
    }
    out.push(("canonical_trace", max(&mut errs.into_iter()), 1e-10));
    Ok(out)
}

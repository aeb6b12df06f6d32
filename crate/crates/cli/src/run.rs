//! Subcommand drivers: train, solve, optimize, postprocess, and sweep.
//!
//! Every run resolves its config, creates the output directory, and leaves a
//! provenance block (seed, library checksum, config hash) plus the resolved
//! config echo next to its artifacts, so any emitted result can be re-run
//! bit-identically from the files alone (timing columns excepted).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use nalgebra::DVector;

use trellis_core::fem::Material;
use trellis_core::ground::{instantiate, GroundStructure, Layout};
use trellis_core::library::ComponentLibrary;
use trellis_core::mesh::ComponentSet;
use trellis_core::offline::{OfflineSet, PortBasisSet};
use trellis_core::optimizer::{build_nlp, run_optimization};
use trellis_core::oracle::solve_oracle;
use trellis_core::postprocess::{
    drop_components, error_metrics, full_order_relaxed_stress, substitute_streamlined,
    validate_full_order, ErrorReport,
};
use trellis_core::sensitivity::objective_gradient;
use trellis_core::solver::{assemble_condensed, reconstruct, solve_condensed};
use trellis_core::storage::file_checksum;
use trellis_core::stress::{
    assign_regions, build_stress_operators, compute_alpha, evaluate_stress, AggregationPlan,
    KsConfig, StressOperators,
};
use trellis_core::vtk::{export_mesh, per_cell, point_vectors, write_legacy_vtk};

use crate::config::RunConfig;
use crate::problems::build_layout;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct CliArgs {
    pub config: Option<PathBuf>,
    pub library: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub fom: bool,
    pub oracle: bool,
}

/// Which forward model a solve runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ModelKind {
    Reduced,
    FullBases,
    Oracle,
}

impl ModelKind {
    fn label(self) -> &'static str {
        match self {
            ModelKind::Reduced => "reduced",
            ModelKind::FullBases => "full_bases",
            ModelKind::Oracle => "oracle",
        }
    }
}

/// Config file plus CLI overrides, validated.
pub fn resolve_config(args: &CliArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Everything the online stage shares: the calibrated problem, the
/// untruncated reference model, and optionally a trained reduced one.
pub struct Bench {
    pub cfg: RunConfig,
    pub set: ComponentSet,
    pub material: Material,
    pub layout: Layout,
    pub gs: GroundStructure,
    /// Untruncated port bases: the exact static-condensation reference.
    pub full: OfflineSet,
    /// Trained offline data and the checksum of the file it came from.
    pub rom: Option<(OfflineSet, String)>,
    /// Resolved load multiplier applied on top of the nominal magnitude.
    pub load_scale: f64,
}

fn check_library_matches(lib: &ComponentLibrary, set: &ComponentSet, material: &Material) -> Result<()> {
    if lib.set.order != set.order
        || lib.set.port_res != set.port_res
        || lib.set.cell_size != set.cell_size
        || lib.set.thickness != set.thickness
        || lib.material.youngs != material.youngs
        || lib.material.poisson != material.poisson
    {
        bail!("library was trained for a different geometry or material; retrain it or fix the config");
    }
    Ok(())
}

/// Builds the problem and calibrates its loads. When `load_scale` is not
/// given, a probe solve of the untruncated model at the solid design sets it
/// so the peak stress ratio starts at 40% of the bound; linearity makes the
/// single probe exact.
pub fn prepare(cfg: &RunConfig, library: Option<&Path>) -> Result<Bench> {
    let set = cfg.component_set()?;
    let material = cfg.material()?;
    let rom = match library {
        Some(path) => {
            let lib = ComponentLibrary::load(path)
                .with_context(|| format!("loading library {}", path.display()))?;
            check_library_matches(&lib, &set, &material)?;
            let checksum = file_checksum(path)?;
            Some((lib.offline, checksum))
        }
        None => None,
    };
    let bases = PortBasisSet::full(set.order, set.port_res, set.cell_size / 3.0)?;
    let full = OfflineSet::build(&set, &material, bases)?;

    let mut layout = build_layout(cfg)?;
    let load_scale = if cfg.load_scale > 0.0 {
        cfg.load_scale
    } else {
        let gs = instantiate(&layout, &set)?;
        let ops = build_stress_operators(&full, &material);
        let plan = assign_regions(&gs, &full, 1, 0)?;
        let rho = vec![1.0; gs.n_instances()];
        let sys = assemble_condensed(&gs, &full, &cfg.simp(), &rho)?;
        let sol = solve_condensed(sys)?;
        let probe = evaluate_stress(&gs, &full, &ops, &plan, &rho, &sol);
        let peak = probe.relaxed.amax();
        if !(peak > 0.0) {
            bail!("probe solve produced no stress; check the load specification");
        }
        0.4 * cfg.sigma_hat_pa() / peak
    };
    for (_, f) in &mut layout.loads {
        f[0] *= load_scale;
        f[1] *= load_scale;
    }
    let gs = instantiate(&layout, &set)?;
    Ok(Bench {
        cfg: cfg.clone(),
        set,
        material,
        layout,
        gs,
        full,
        rom,
        load_scale,
    })
}

/// One forward solve: per-instance nodal fields, per-point relaxed stress,
/// and the assemble+factor+solve wall time.
struct Forward {
    fields: Vec<DVector<f64>>,
    relaxed: DVector<f64>,
    elapsed: f64,
}

fn solve_reduced_forward(
    bench: &Bench,
    offline: &OfflineSet,
    ops: &StressOperators,
    plan: &AggregationPlan,
    rho: &[f64],
) -> Result<Forward> {
    let t = Instant::now();
    let sys = assemble_condensed(&bench.gs, offline, &bench.cfg.simp(), rho)?;
    let sol = solve_condensed(sys)?;
    let elapsed = t.elapsed().as_secs_f64();
    let fields = reconstruct(&bench.gs, offline, &sol);
    let field = evaluate_stress(&bench.gs, offline, ops, plan, rho, &sol);
    Ok(Forward {
        fields,
        relaxed: field.relaxed,
        elapsed,
    })
}

fn solve_oracle_forward(bench: &Bench, rho: &[f64]) -> Result<Forward> {
    let t = Instant::now();
    let osol = solve_oracle(&bench.gs, &bench.set, &bench.material, &bench.cfg.simp(), rho)?;
    let elapsed = t.elapsed().as_secs_f64();
    let fields = (0..bench.gs.n_instances())
        .map(|i| osol.instance_field(&bench.set, &bench.gs, i))
        .collect();
    let relaxed = full_order_relaxed_stress(&bench.gs, &bench.set, &bench.material, rho, &osol);
    Ok(Forward {
        fields,
        relaxed,
        elapsed,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.output_dir);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// Seed, config hash, and library checksum: enough to re-run and to tell two
/// result sets apart.
fn write_provenance(dir: &Path, cfg: &RunConfig, library_checksum: Option<&str>) -> Result<()> {
    let block = format!(
        "seed = {}\nconfig_sha256 = {}\nlibrary_sha256 = {}\n",
        cfg.seed,
        cfg.hash(),
        library_checksum.unwrap_or("none"),
    );
    write_text(&dir.join("provenance.txt"), &block)?;
    write_text(&dir.join("resolved_config.toml"), &cfg.canonical_toml())
}

fn error_report_text(r: &ErrorReport) -> String {
    format!(
        "{{\n  \"e_u\": {:e},\n  \"e_stress\": {:e},\n  \"e_stress_max\": {:e}\n}}\n",
        r.e_u, r.e_stress, r.e_stress_max
    )
}

fn timing_report_text(model: ModelKind, model_s: f64, fom_sc_s: f64) -> String {
    format!(
        "model = {}\nmodel_solve_s = {:.6}\nfom_sc_solve_s = {:.6}\nspeedup = {:.3}\n",
        model.label(),
        model_s,
        fom_sc_s,
        fom_sc_s / model_s.max(1e-12),
    )
}

/// One result line of a run: the sweep table row.
pub struct ResultRow {
    pub n_agg: usize,
    pub p: f64,
    pub n_cons: usize,
    pub n_jac: usize,
    pub time_s: f64,
    pub m_frac_opt: f64,
    pub m_frac_pp: f64,
    pub max_sigma_r_mpa: f64,
    pub max_sigma_vm_mpa: f64,
}

pub const RESULTS_HEADER: &str =
    "n_agg,p,n_cons,n_jac,time_s,m_frac_opt,m_frac_pp,max_sigma_r_mpa,max_sigma_vm_mpa";

impl ResultRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:.3},{},{},{},{}",
            self.n_agg,
            self.p,
            self.n_cons,
            self.n_jac,
            self.time_s,
            self.m_frac_opt,
            self.m_frac_pp,
            self.max_sigma_r_mpa,
            self.max_sigma_vm_mpa,
        )
    }
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut text = String::from(RESULTS_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row.to_csv());
        text.push('\n');
    }
    write_text(path, &text)
}

/// Trains a reduced component library and saves it (default
/// `<out>/library.prsc`, override with `--library`).
pub fn cmd_train(args: &CliArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let dir = out_dir(&cfg)?;
    let lib_path = args
        .library
        .clone()
        .unwrap_or_else(|| dir.join("library.prsc"));
    let set = cfg.component_set()?;
    let material = cfg.material()?;
    let t = Instant::now();
    let lib = ComponentLibrary::train(set, material, &cfg.training())?;
    let elapsed = t.elapsed().as_secs_f64();
    lib.save(&lib_path)?;
    let checksum = file_checksum(&lib_path)?;
    let r = &lib.report;
    let report = format!(
        "snapshots_per_pair = {}\neta = {}\nenergy_fraction = {}\nport_basis_dims = {:?}\nsnapshot_counts = {:?}\ntrain_s = {:.3}\n",
        r.n_snapshots_per_pair, r.eta, r.energy_fraction, r.dims, r.snapshot_counts, elapsed,
    );
    write_text(&dir.join("train_report.txt"), &report)?;
    write_provenance(&dir, &cfg, Some(&checksum))?;
    println!("trained library -> {}", lib_path.display());
    Ok(())
}

/// One forward solve of the configured problem at the solid design, with an
/// accuracy report against the untruncated condensation and a timing
/// comparison.
pub fn cmd_solve(args: &CliArgs) -> Result<()> {
    if args.fom && args.oracle {
        bail!("--fom and --oracle are mutually exclusive");
    }
    let model = if args.oracle {
        ModelKind::Oracle
    } else if args.fom || args.library.is_none() {
        ModelKind::FullBases
    } else {
        ModelKind::Reduced
    };
    let cfg = resolve_config(args)?;
    let bench = prepare(
        &cfg,
        match model {
            ModelKind::Reduced => args.library.as_deref(),
            _ => None,
        },
    )?;
    let dir = out_dir(&cfg)?;
    let rho = vec![1.0; bench.gs.n_instances()];
    let plan = assign_regions(&bench.gs, &bench.full, cfg.n_agg, cfg.seed)?;
    let ops_full = build_stress_operators(&bench.full, &bench.material);

    let fwd = match model {
        ModelKind::Oracle => solve_oracle_forward(&bench, &rho)?,
        ModelKind::FullBases => solve_reduced_forward(&bench, &bench.full, &ops_full, &plan, &rho)?,
        ModelKind::Reduced => {
            let (rom, _) = bench.rom.as_ref().unwrap();
            let ops = build_stress_operators(rom, &bench.material);
            solve_reduced_forward(&bench, rom, &ops, &plan, &rho)?
        }
    };
    let reference = solve_reduced_forward(&bench, &bench.full, &ops_full, &plan, &rho)?;
    let report = error_metrics(
        &bench.gs,
        &bench.set,
        &fwd.fields,
        &reference.fields,
        &fwd.relaxed,
        &reference.relaxed,
        &plan.weights,
    )?;

    let export = export_mesh(&bench.gs, &bench.set);
    let mut peak = vec![0.0f64; bench.gs.n_instances()];
    for (q, &s) in fwd.relaxed.iter().enumerate() {
        let i = plan.qp_instance[q];
        peak[i] = peak[i].max(s);
    }
    write_legacy_vtk(
        &dir.join("solution.vtk"),
        "forward solve at the solid design",
        &export,
        &[("sigma_r_peak", &per_cell(&export, &peak))],
        &[("displacement", &point_vectors(&export, &fwd.fields))],
    )?;
    write_text(&dir.join("error_report.txt"), &error_report_text(&report))?;
    write_text(
        &dir.join("timing.txt"),
        &timing_report_text(model, fwd.elapsed, reference.elapsed),
    )?;
    write_provenance(&dir, &cfg, bench.rom.as_ref().map(|(_, c)| c.as_str()))?;
    println!(
        "{} solve: e_u {:.3e}, peak sigma_r {:.4e} Pa, model {:.4} ms vs FOM-SC {:.4} ms",
        model.label(),
        report.e_u,
        fwd.relaxed.amax(),
        fwd.elapsed * 1e3,
        reference.elapsed * 1e3,
    );
    Ok(())
}

/// The full optimization pipeline on an already-prepared bench; shared by
/// `optimize` and each `sweep` job. Writes this run's artifacts into `dir`
/// and returns the result row.
pub fn optimize_pipeline(cfg: &RunConfig, bench: &Bench, dir: &Path) -> Result<ResultRow> {
    let t0 = Instant::now();
    let (rom, checksum) = bench
        .rom
        .as_ref()
        .context("optimization needs a trained library")?;
    let gs = &bench.gs;
    let simp = cfg.simp();
    let ops = build_stress_operators(rom, &bench.material);
    let plan = assign_regions(gs, rom, cfg.n_agg, cfg.seed)?;

    // Anchor the aggregation at the solid design: the normalization makes
    // every aggregate an upper bound of its region's ratio there.
    let rho0 = vec![1.0; gs.n_instances()];
    let sys = assemble_condensed(gs, rom, &simp, &rho0)?;
    let sol0 = solve_condensed(sys)?;
    let field0 = evaluate_stress(gs, rom, &ops, &plan, &rho0, &sol0);
    let alpha = compute_alpha(&plan, &field0.relaxed, cfg.ks_p, cfg.sigma_hat_pa())?;
    let ks = KsConfig {
        p: cfg.ks_p,
        sigma_max: cfg.sigma_max_pa(),
        sigma_hat: cfg.sigma_hat_pa(),
        alpha,
    };

    let mut nlp = build_nlp(gs, &bench.set, rom, &ops, &plan, ks, simp)?;
    let res = run_optimization(&mut nlp, &cfg.solver.to_core())?;
    let rho_star: Vec<f64> = res.best_feasible.iter().copied().collect();
    let volumes = objective_gradient(gs, &bench.set);
    let solid_mass = volumes.sum();
    let m_frac_opt = res.best_objective / solid_mass;

    let rom_fwd = solve_reduced_forward(bench, rom, &ops, &plan, &rho_star)?;
    let max_sigma_r = rom_fwd.relaxed.amax();

    // Black-and-white extraction and its full-order re-analysis.
    let bw = drop_components(gs, &rho_star, cfg.drop_tolerance)?;
    let post = substitute_streamlined(&bw, &bench.set)?;
    let m_frac_pp = post.mass / solid_mass;
    let check = validate_full_order(&post.layout, &bench.set, &bench.material)?;

    let ops_full = build_stress_operators(&bench.full, &bench.material);
    let fom_fwd = solve_reduced_forward(bench, &bench.full, &ops_full, &plan, &rho_star)?;
    let report = error_metrics(
        gs,
        &bench.set,
        &rom_fwd.fields,
        &fom_fwd.fields,
        &rom_fwd.relaxed,
        &fom_fwd.relaxed,
        &plan.weights,
    )?;

    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut density_csv = String::from("ix,iy,kind,rho\n");
    for (i, inst) in gs.instances.iter().enumerate() {
        density_csv.push_str(&format!(
            "{},{},{},{}\n",
            inst.cell[0],
            inst.cell[1],
            inst.kind.code(),
            rho_star[i]
        ));
    }
    write_text(&dir.join("density.csv"), &density_csv)?;

    let export = export_mesh(gs, &bench.set);
    write_legacy_vtk(
        &dir.join("density.vtk"),
        "optimized density field",
        &export,
        &[("rho", &per_cell(&export, &rho_star))],
        &[("displacement", &point_vectors(&export, &rom_fwd.fields))],
    )?;

    let post_gs = check.gs;
    let post_export = export_mesh(&post_gs, &bench.set);
    let post_rho = vec![1.0; post_gs.n_instances()];
    let post_stress = full_order_relaxed_stress(
        &post_gs,
        &bench.set,
        &bench.material,
        &post_rho,
        &check.solution,
    );
    let post_plan = assign_regions(&post_gs, &bench.full, 1, 0)?;
    let mut post_peak = vec![0.0f64; post_gs.n_instances()];
    for (q, &s) in post_stress.iter().enumerate() {
        let i = post_plan.qp_instance[q];
        post_peak[i] = post_peak[i].max(s);
    }
    let post_fields: Vec<DVector<f64>> = (0..post_gs.n_instances())
        .map(|i| check.solution.instance_field(&bench.set, &post_gs, i))
        .collect();
    write_legacy_vtk(
        &dir.join("postprocessed.vtk"),
        "extracted black-and-white design",
        &post_export,
        &[("sigma_vm_peak", &per_cell(&post_export, &post_peak))],
        &[("displacement", &point_vectors(&post_export, &post_fields))],
    )?;
    write_text(
        &dir.join("postprocessed_layout.txt"),
        &format!("{}\n", post.layout.render_grid()),
    )?;

    write_text(&dir.join("error_report.txt"), &error_report_text(&report))?;
    write_text(
        &dir.join("timing.txt"),
        &timing_report_text(ModelKind::Reduced, rom_fwd.elapsed, fom_fwd.elapsed),
    )?;

    let mut summary = format!(
        "converged = {}\ncycles = {}\nkkt_residual = {:e}\nload_scale = {}\nalpha = {}\nmass_solid = {}\nmass_opt = {}\nmass_pp = {}\nm_frac_opt = {}\nm_frac_pp = {}\nmax_sigma_r_mpa = {}\nmax_sigma_vm_mpa = {}\nsubstitutions = {}\n",
        res.trace.converged,
        res.trace.iterations.len(),
        res.trace.kkt_residual,
        bench.load_scale,
        alpha,
        solid_mass,
        res.best_objective,
        post.mass,
        m_frac_opt,
        m_frac_pp,
        max_sigma_r / 1e6,
        check.max_von_mises / 1e6,
        post.substitutions.len(),
    );
    for w in &post.warnings {
        summary.push_str(&format!("warning = {w}\n"));
    }
    write_text(&dir.join("summary.txt"), &summary)?;
    write_provenance(dir, cfg, Some(checksum))?;

    Ok(ResultRow {
        n_agg: cfg.n_agg,
        p: cfg.ks_p,
        n_cons: res.trace.n_cons,
        n_jac: res.trace.n_jac,
        time_s: t0.elapsed().as_secs_f64(),
        m_frac_opt,
        m_frac_pp,
        max_sigma_r_mpa: max_sigma_r / 1e6,
        max_sigma_vm_mpa: check.max_von_mises / 1e6,
    })
}

/// Mass minimization under the aggregated stress bound; needs a trained
/// library.
pub fn cmd_optimize(args: &CliArgs) -> Result<()> {
    let Some(lib_path) = args.library.as_deref() else {
        bail!("optimize needs --library LIB; run `trellis train` first");
    };
    if args.fom || args.oracle {
        bail!("optimize always runs the reduced model; --fom/--oracle apply to solve");
    }
    let cfg = resolve_config(args)?;
    let bench = prepare(&cfg, Some(lib_path))?;
    let dir = out_dir(&cfg)?;
    let row = optimize_pipeline(&cfg, &bench, &dir)?;
    write_results_csv(&dir.join("results.csv"), &[row])?;
    let summary = fs::read_to_string(dir.join("summary.txt")).unwrap_or_default();
    print!("{summary}");
    println!("results -> {}", dir.join("results.csv").display());
    Ok(())
}

/// Re-extracts a black-and-white design from a previously written density
/// field and validates it at full order.
pub fn cmd_postprocess(args: &CliArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let dir = out_dir(&cfg)?;
    let density_path = dir.join("density.csv");
    if !density_path.exists() {
        bail!(
            "no density field at {}; run `trellis optimize` into this output directory first",
            density_path.display()
        );
    }
    let bench = prepare(&cfg, None)?;
    let text = fs::read_to_string(&density_path)
        .with_context(|| format!("reading {}", density_path.display()))?;
    let mut rho = vec![f64::NAN; bench.gs.n_instances()];
    for (ln, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            bail!("{}:{}: expected ix,iy,kind,rho", density_path.display(), ln + 1);
        }
        let ix: usize = cols[0].parse().context("bad ix")?;
        let iy: usize = cols[1].parse().context("bad iy")?;
        let value: f64 = cols[3].parse().context("bad rho")?;
        let i = bench
            .gs
            .instance_at(ix, iy)
            .with_context(|| format!("density lists ({ix}, {iy}) but the problem has no component there"))?;
        rho[i] = value;
    }
    if rho.iter().any(|v| v.is_nan()) {
        bail!("density field does not cover every component of the configured problem");
    }
    let bw = drop_components(&bench.gs, &rho, cfg.drop_tolerance)?;
    let post = substitute_streamlined(&bw, &bench.set)?;
    let check = validate_full_order(&post.layout, &bench.set, &bench.material)?;
    let solid_mass = objective_gradient(&bench.gs, &bench.set).sum();

    let post_export = export_mesh(&check.gs, &bench.set);
    let post_fields: Vec<DVector<f64>> = (0..check.gs.n_instances())
        .map(|i| check.solution.instance_field(&bench.set, &check.gs, i))
        .collect();
    write_legacy_vtk(
        &dir.join("postprocessed.vtk"),
        "extracted black-and-white design",
        &post_export,
        &[],
        &[("displacement", &point_vectors(&post_export, &post_fields))],
    )?;
    write_text(
        &dir.join("postprocessed_layout.txt"),
        &format!("{}\n", post.layout.render_grid()),
    )?;
    let mut report = format!(
        "kept_components = {}\ndropped_components = {}\nsubstitutions = {}\npasses = {}\nm_frac_pp = {}\nmax_sigma_vm_mpa = {}\nsigma_max_mpa = {}\nwithin_bound = {}\n",
        post.layout.n_occupied(),
        bench.gs.n_instances() - post.layout.n_occupied(),
        post.substitutions.len(),
        post.passes,
        post.mass / solid_mass,
        check.max_von_mises / 1e6,
        cfg.sigma_max_mpa,
        check.max_von_mises <= cfg.sigma_max_pa(),
    );
    for w in &post.warnings {
        report.push_str(&format!("warning = {w}\n"));
    }
    write_text(&dir.join("postprocess_report.txt"), &report)?;
    write_provenance(&dir, &cfg, None)?;
    print!("{report}");
    Ok(())
}

/// Parses `key=v1,v2,...` sweep arguments; supported keys are `p` and
/// `n_agg`.
fn parse_sweep(gridspec: &[String]) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut ps: Vec<f64> = Vec::new();
    let mut naggs: Vec<usize> = Vec::new();
    for arg in gridspec {
        let Some((key, values)) = arg.split_once('=') else {
            bail!("sweep arguments look like p=10,15 or n_agg=1,5; got {arg:?}");
        };
        match key {
            "p" => {
                for v in values.split(',') {
                    let p: f64 = v.parse().with_context(|| format!("in {arg:?}"))?;
                    if p <= 0.0 {
                        bail!("KS multiplier must be positive, got {p}");
                    }
                    ps.push(p);
                }
            }
            "n_agg" => {
                for v in values.split(',') {
                    let n: usize = v.parse().with_context(|| format!("in {arg:?}"))?;
                    if n == 0 {
                        bail!("n_agg must be at least 1");
                    }
                    naggs.push(n);
                }
            }
            other => bail!("unknown sweep key {other:?}; supported: p, n_agg"),
        }
    }
    if ps.is_empty() || naggs.is_empty() {
        bail!("sweep needs both p=... and n_agg=... value lists");
    }
    Ok((ps, naggs))
}

/// Grid of optimizations over the aggregation parameters, one results.csv
/// row per combination. Jobs run in a worker pool; rows keep grid order, so
/// scheduling cannot change the output.
pub fn cmd_sweep(args: &CliArgs, gridspec: &[String]) -> Result<()> {
    let Some(lib_path) = args.library.as_deref() else {
        bail!("sweep needs --library LIB; run `trellis train` first");
    };
    let cfg = resolve_config(args)?;
    let (ps, naggs) = parse_sweep(gridspec)?;
    let bench = prepare(&cfg, Some(lib_path))?;
    let dir = out_dir(&cfg)?;

    let mut jobs: Vec<(f64, usize)> = Vec::new();
    for &p in &ps {
        for &n in &naggs {
            jobs.push((p, n));
        }
    }
    let slots: Vec<Mutex<Option<Result<ResultRow>>>> =
        jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                if j >= jobs.len() {
                    break;
                }
                let (p, n_agg) = jobs[j];
                let mut job_cfg = cfg.clone();
                job_cfg.ks_p = p;
                job_cfg.n_agg = n_agg;
                let job_dir = dir.join(format!("p{p}_nagg{n_agg}"));
                let row = optimize_pipeline(&job_cfg, &bench, &job_dir);
                *slots[j].lock().unwrap() = Some(row);
            });
        }
    });
    let mut rows = Vec::with_capacity(jobs.len());
    for (j, slot) in slots.into_iter().enumerate() {
        let (p, n_agg) = jobs[j];
        let Some(row) = slot.into_inner().unwrap() else {
            bail!("sweep job p={p} n_agg={n_agg} never ran");
        };
        rows.push(row.with_context(|| format!("sweep job p={p} n_agg={n_agg}"))?);
    }
    write_results_csv(&dir.join("results.csv"), &rows)?;
    write_provenance(&dir, &cfg, bench.rom.as_ref().map(|(_, c)| c.as_str()))?;
    println!(
        "{} sweep rows -> {}",
        rows.len(),
        dir.join("results.csv").display()
    );
    Ok(())
}

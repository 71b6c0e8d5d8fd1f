//! `nestcell`: file-driven runs of the nested delay-cell model.
//!
//! Exit codes: 0 success, 2 configuration or output error, 3 physics/trace
//! error, 4 estimator error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use nestcell::channel::{
    apply_channel_signal, bell_phi_plus, channel_for_bounces, chi_from_kraus, fully_entangled_fraction,
    process_fidelity, state_fidelity, fringe_samples, visibility_report, FringeBasis, VisibilityReport,
    ChiMatrix, DensityMatrix, KrausSet,
};
use nestcell::delay::{
    bandwidth_nm_to_thz, cell_for_setting, delay_table, delay_time_ns, reflectance_from_efficiency,
    time_bandwidth_product, transmission_efficiency, DelayError, EfficiencyReport, REFERENCE_MEASUREMENTS,
};
use nestcell::geometry::{
    calibrate_injection, ring_analysis, trace_cell, CalibrationOptions, CellConfig, MirrorId, PatternTemplate,
    Surface, TracePath,
};
use nestcell::io::{
    comment_header, format_uncertainty, write_delay_table, write_histogram, write_histogram_overlay, write_json,
    write_trace_csv, CellFragment, ConfigError, DelayRow, RunConfig, SvgScene,
};
use nestcell::linalg::to_rows;
use nestcell::tomography::{
    coincidence_histogram, linear_qst_with, mle_qst_with, process_tomography, simulate_counts,
    simulate_process_counts, write_records, PeakEstimate,
};
use nestcell::{Error, Result, SPEED_OF_LIGHT_MM_PER_NS};

#[derive(Parser)]
#[command(name = "nestcell", version, about = "Nested multipass delay-cell simulator")]
struct Cli {
    /// Run configuration (TOML); the built-in reference run when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for stochastic steps, overriding the configured seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    wavelength_nm: Option<f64>,
    /// Ring step i (exit after 6i reflections), overriding `[delay]`.
    #[arg(long, global = true)]
    setting_i: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace the beam; write spots.csv, per-mirror SVGs and a summary.
    Trace,
    /// Delay, reflection count and efficiency for every ring step.
    DelayTable,
    /// Retrieval efficiency and reflectance inversion.
    Efficiency,
    /// Time-bandwidth product of the longest delay.
    Tbp,
    /// Retrieval efficiency of fiber delays versus the cell.
    FiberCompare,
    /// Polarization channel of one transit.
    Channel,
    /// Simulated tomography through the cell.
    Tomography {
        #[arg(value_enum)]
        mode: TomoMode,
    },
    /// Start-stop delay histograms.
    Histogram,
    /// Search the injection producing the nested ring pattern.
    CalibrateInjection,
}

#[derive(Clone, Copy, ValueEnum)]
enum TomoMode {
    Qst,
    Qpt,
    Histogram,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    seed: Option<u64>,
    wavelength: f64,
    setting: Option<usize>,
    setting_flag: Option<usize>,
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::reference(),
    };
    if let Some(i) = cli.setting_i {
        if i > cfg.delay.i_max {
            return Err(ConfigError::Invalid {
                field: "--setting-i".into(),
                reason: format!("{i} exceeds delay.i_max = {}", cfg.delay.i_max),
            }
            .into());
        }
        cfg.delay.setting_i = Some(i);
        cfg.delay.exit_azimuth = None;
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&out).map_err(|e| ConfigError::Output { path: out.clone(), source: e })?;
    let ctx = Ctx {
        wavelength: cli.wavelength_nm.unwrap_or(cfg.delay.wavelength_nm),
        setting: cfg.delay.setting_i,
        setting_flag: cli.setting_i,
        seed: cli.seed,
        out,
        cfg,
    };
    match &cli.command {
        Command::Trace => cmd_trace(&ctx),
        Command::DelayTable => cmd_delay_table(&ctx),
        Command::Efficiency => cmd_efficiency(&ctx),
        Command::Tbp => cmd_tbp(&ctx),
        Command::FiberCompare => cmd_fiber(&ctx),
        Command::Channel => cmd_channel(&ctx),
        Command::Tomography { mode } => match mode {
            TomoMode::Qst => cmd_qst(&ctx),
            TomoMode::Qpt => cmd_qpt(&ctx),
            TomoMode::Histogram => cmd_histogram(&ctx),
        },
        Command::Histogram => cmd_histogram(&ctx),
        Command::CalibrateInjection => cmd_calibrate(&ctx),
    }
}

fn header(reproduces: &str, ctx: &Ctx) -> String {
    comment_header(&[
        ("reproduces", reproduces.to_string()),
        ("generator", format!("nestcell {}", env!("CARGO_PKG_VERSION"))),
        ("setting_i", ctx.setting.map_or("none".into(), |i| i.to_string())),
    ])
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Cell with the exit pupil placed for the selected delay.
    fn cell(&self) -> Result<CellConfig> {
        let c = &self.cfg;
        if let Some(i) = self.setting {
            return Ok(cell_for_setting(&c.cell, &c.injection, i, &PatternTemplate::default())?);
        }
        let mut cell = c.cell.clone();
        if let Some(a) = c.delay.exit_azimuth {
            cell.pupil_azimuth_exit = a;
        }
        Ok(cell)
    }

    fn max_passes(&self) -> usize {
        let t = PatternTemplate::default();
        t.cycle_len * (self.cfg.delay.i_max + 1) + t.exit_index
    }

    fn trace(&self) -> Result<(CellConfig, TracePath)> {
        let cell = self.cell()?;
        let mut path = trace_cell(&cell, &cell.entry_ray(&self.cfg.injection), self.max_passes())?;
        if let Some(b) = &self.cfg.beam {
            path = path.with_spot_radii(&b.q_at_entry(self.wavelength), &cell)?;
        }
        Ok((cell, path))
    }

    /// Reflection count of the selected delay; fails unless the beam exits.
    fn reflections(&self) -> Result<usize> {
        let (_, path) = self.trace()?;
        if !path.exited() {
            return Err(DelayError::NoExit(path.exit_event.kind()).into());
        }
        Ok(path.n_reflections())
    }

    fn tomo_seed(&self) -> Result<u64> {
        Ok(self.cfg.tomography_seed(self.seed)?)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| ConfigError::Output { path: path.to_path_buf(), source: e }.into())
}

fn cmd_trace(ctx: &Ctx) -> Result<()> {
    let (cell, path) = ctx.trace()?;
    let anchor = "concentric ring spot patterns on the cell mirrors";
    write_trace_csv(&ctx.path("spots.csv"), &path, &header(anchor, ctx))?;
    for (mirror, name) in [(MirrorId::Exit, "exit_mirror.svg"), (MirrorId::Entry, "entry_mirror.svg")] {
        write_text(&ctx.path(name), &SvgScene::for_mirror(&path, &cell, mirror, 600.0).render())?;
    }
    let mut s = String::new();
    s.push_str(&format!("# reproduces: {anchor}\n"));
    s.push_str(&format!("exit_event: {}\n", path.exit_event.kind()));
    s.push_str(&format!("passes: {}\n", path.n_passes()));
    s.push_str(&format!("reflections: {}\n", path.n_reflections()));
    for m in [MirrorId::Entry, MirrorId::Exit] {
        s.push_str(&format!("spots_mirror_{}: {}\n", m.number(), path.spots_on(m).count()));
    }
    let inner = path.spots.iter().filter(|p| p.surface_id == Surface::Inner).count();
    s.push_str(&format!("inner_surface_hits: {inner}\n"));
    match ring_analysis(&path) {
        Ok(r) => {
            for m in [MirrorId::Entry, MirrorId::Exit] {
                let radii: Vec<String> = r.rings_on(m).iter().map(|g| format!("{:.2}", g.mean_radius)).collect();
                s.push_str(&format!("rings_mirror_{}: {} [{}] mm\n", m.number(), radii.len(), radii.join(", ")));
            }
            s.push_str(&format!("rings_inner_surface: {}\n", r.count_on_surface(Surface::Inner)));
        }
        Err(e) => s.push_str(&format!("rings: unavailable ({e})\n")),
    }
    s.push_str(&format!("total_path_mm: {:.3}\n", path.total_path));
    if let Ok(d) = delay_time_ns(&path) {
        s.push_str(&format!("delay_ns: {d:.3}\n"));
    }
    write_text(&ctx.path("summary.txt"), &s)?;
    print!("{s}");
    if !path.exited() {
        return Err(DelayError::NoExit(path.exit_event.kind()).into());
    }
    Ok(())
}

fn cmd_delay_table(ctx: &Ctx) -> Result<()> {
    let c = &ctx.cfg;
    let curve = c.coating()?;
    let reflectance = curve.reflectance_at(ctx.wavelength)?;
    let mut rows: Vec<DelayRow> = delay_table(&c.cell, &c.injection, c.delay.i_max)
        .into_iter()
        .enumerate()
        .map(|(i, r)| match r {
            Ok(s) => {
                let measured = REFERENCE_MEASUREMENTS.iter().find(|m| m.0 == s.n_spots);
                Ok(DelayRow {
                    i,
                    n_spots: Some(s.n_spots),
                    delay_ns: Some(s.delay_ns),
                    increment_ns: None,
                    calibrated_delay_ns: Some(s.delay_ns + i as f64 * c.delay.step_offset_ns),
                    exit_azimuth_deg: Some(s.exit_azimuth),
                    total_path_mm: Some(s.total_path_mm),
                    coating_reflectance: Some(reflectance),
                    predicted_efficiency: Some(transmission_efficiency(
                        s.n_spots,
                        &curve,
                        ctx.wavelength,
                        c.delay.excess_loss,
                    )?),
                    measured_delay_ns: measured.map(|m| m.1),
                    measured_efficiency: measured.map(|m| m.2),
                    measured_reflectance: measured.map(|m| m.3),
                    efficiency_from_measured_reflectance: measured.map(|m| m.3.powi(m.0 as i32)),
                    status: "ok".into(),
                })
            }
            Err(e) => Ok(DelayRow {
                i,
                n_spots: None,
                delay_ns: None,
                increment_ns: None,
                calibrated_delay_ns: None,
                exit_azimuth_deg: None,
                total_path_mm: None,
                coating_reflectance: None,
                predicted_efficiency: None,
                measured_delay_ns: None,
                measured_efficiency: None,
                measured_reflectance: None,
                efficiency_from_measured_reflectance: None,
                status: format!("error: {e}"),
            }),
        })
        .collect::<std::result::Result<_, DelayError>>()?;
    for k in 1..rows.len() {
        if let (Some(a), Some(b)) = (rows[k - 1].delay_ns, rows[k].delay_ns) {
            rows[k].increment_ns = Some(b - a);
        }
    }
    let anchor = "measured reflection counts, delays and retrieval efficiencies";
    let mut h = header(anchor, ctx);
    let step = PatternTemplate::default().cycle_len as f64 * c.cell.separation / SPEED_OF_LIGHT_MM_PER_NS;
    h.push_str(&comment_header(&[
        ("wavelength_nm", ctx.wavelength.to_string()),
        ("geometric_step_ns", format!("{step:.4}")),
        ("step_offset_ns", c.delay.step_offset_ns.to_string()),
    ]));
    write_delay_table(&ctx.path("delay_table.csv"), &rows, &h)?;
    let ok = rows.iter().filter(|r| r.status == "ok").count();
    println!("delay_table.csv: {} rows, {ok} ok", rows.len());
    if ok == 0 {
        return Err(DelayError::NoExit("no delay setting exits").into());
    }
    Ok(())
}

fn cmd_efficiency(ctx: &Ctx) -> Result<()> {
    let c = &ctx.cfg;
    let curve = c.coating()?;
    let n = ctx.reflections()?;
    let report = EfficiencyReport::new(n, &curve, ctx.wavelength, c.delay.excess_loss)?;
    let inversion = REFERENCE_MEASUREMENTS
        .iter()
        .map(|&(n, _, eta, r)| {
            let inv = reflectance_from_efficiency(eta, n)?;
            Ok(json!({
                "n_reflections": n,
                "efficiency": eta,
                "reflectance_quoted": r,
                "reflectance_inverted": inv,
                "abs_difference": (inv - r).abs(),
            }))
        })
        .collect::<std::result::Result<Vec<_>, DelayError>>()?;
    let (lo, hi) = curve.range();
    let mut spectrum = String::from("wavelength_nm,reflectance,efficiency\n");
    let mut lam = lo.ceil();
    while lam <= hi {
        let r = curve.reflectance_at(lam)?;
        let e = transmission_efficiency(n, &curve, lam, c.delay.excess_loss)?;
        spectrum.push_str(&format!("{lam},{r},{e}\n"));
        lam += 1.0;
    }
    let anchor = "retrieval efficiency versus wavelength and per-reflection reflectance";
    write_text(&ctx.path("efficiency_spectrum.csv"), &(header(anchor, ctx) + &spectrum))?;
    let value = json!({
        "reproduces": anchor,
        "report": report,
        "reflectance_inversion": inversion,
    });
    write_json(&ctx.path("efficiency.json"), &value)?;
    println!(
        "{n} reflections at {} nm: efficiency {:.5} (R = {:.6})",
        ctx.wavelength, report.efficiency, report.reflectance_per_bounce
    );
    Ok(())
}

fn cmd_tbp(ctx: &Ctx) -> Result<()> {
    let c = &ctx.cfg;
    let thz = bandwidth_nm_to_thz(ctx.wavelength, c.delay.bandwidth_nm)?;
    let longest = delay_table(&c.cell, &c.injection, c.delay.i_max)
        .pop()
        .expect("at least one row")?;
    let measured = REFERENCE_MEASUREMENTS[5].1;
    let value = json!({
        "reproduces": "headline time-bandwidth product",
        "center_nm": ctx.wavelength,
        "bandwidth_nm": c.delay.bandwidth_nm,
        "bandwidth_thz": thz,
        "longest_delay_model_ns": longest.delay_ns,
        "tbp_model": time_bandwidth_product(thz, longest.delay_ns),
        "longest_delay_measured_ns": measured,
        "tbp_measured_delay": time_bandwidth_product(thz, measured),
    });
    write_json(&ctx.path("tbp.json"), &value)?;
    println!(
        "bandwidth {thz:.2} THz; TBP {:.3e} (model delay {:.1} ns), {:.3e} (687 ns)",
        time_bandwidth_product(thz, longest.delay_ns),
        longest.delay_ns,
        time_bandwidth_product(thz, measured)
    );
    Ok(())
}

fn cmd_fiber(ctx: &Ctx) -> Result<()> {
    let f = &ctx.cfg.fiber;
    let mut csv = String::from("delay_ns,fiber_ull,fiber_visible\n");
    for k in 0..f.points {
        let d = f.max_delay_ns * k as f64 / (f.points - 1) as f64;
        csv.push_str(&format!("{d},{},{}\n", f.ull.efficiency(d)?, f.visible.efficiency(d)?));
    }
    let anchor = "retrieval efficiency of the cell versus fiber delay lines";
    write_text(&ctx.path("fiber_compare.csv"), &(header(anchor, ctx) + &csv))?;
    let points: Vec<_> = REFERENCE_MEASUREMENTS
        .iter()
        .map(|&(n, d, eta, _)| {
            Ok(json!({
                "n_reflections": n,
                "delay_ns": d,
                "cell_efficiency": eta,
                "fiber_ull": f.ull.efficiency(d)?,
                "fiber_visible": f.visible.efficiency(d)?,
                "cell_exceeds_ull": eta > f.ull.efficiency(d)?,
            }))
        })
        .collect::<std::result::Result<_, DelayError>>()?;
    let value = json!({
        "reproduces": anchor,
        "ull": f.ull,
        "visible": f.visible,
        "fiber_length_m_at_687ns": f.ull.length_m(687.0),
        "cell_points": points,
    });
    write_json(&ctx.path("fiber_compare.json"), &value)?;
    println!(
        "687 ns: cell 0.95390, ULL fiber {:.4}, visible fiber {:.4}",
        f.ull.efficiency(687.0)?,
        f.visible.efficiency(687.0)?
    );
    Ok(())
}

fn visibilities(rho: &DensityMatrix) -> Result<VisibilityReport> {
    let angles: Vec<f64> = (0..8).map(|k| 22.5 * k as f64).collect();
    let hv = fringe_samples(rho, FringeBasis::HV, &angles, 1.0)?;
    let da = fringe_samples(rho, FringeBasis::DA, &angles, 1.0)?;
    Ok(visibility_report(&hv, &da)?)
}

/// Normalized process matrix of `k` (loss only rescales it).
fn normalized_chi(k: &KrausSet) -> Result<ChiMatrix> {
    let chi = chi_from_kraus(k);
    Ok(ChiMatrix::new(chi.matrix().scale(1.0 / chi.trace()))?)
}

fn cmd_channel(ctx: &Ctx) -> Result<()> {
    let n = ctx.reflections()?;
    let kraus = channel_for_bounces(n, &ctx.cfg.channel)?;
    let chi = normalized_chi(&kraus)?;
    let pf = process_fidelity(&chi, &ChiMatrix::identity_channel())?;
    let input = bell_phi_plus();
    let out = apply_channel_signal(&input, &kraus)?;
    let value = json!({
        "reproduces": "polarization-entanglement preservation through one transit",
        "n_reflections": n,
        "channel": ctx.cfg.channel,
        "process_fidelity_to_identity": pf,
        "chi": to_rows(chi.matrix()),
        "survival": out.survival,
        "state_fidelity_to_input": state_fidelity(&out.state, &input)?,
        "fully_entangled_fraction": fully_entangled_fraction(&out.state)?,
        "visibility": visibilities(&out.state)?,
    });
    write_json(&ctx.path("channel.json"), &value)?;
    println!("{n} reflections: process fidelity {pf:.6}, survival {:.5}", out.survival);
    Ok(())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v.sqrt())
}

fn cmd_qst(ctx: &Ctx) -> Result<()> {
    let t = &ctx.cfg.tomography;
    let seed = ctx.tomo_seed()?;
    let n = ctx.reflections()?;
    let kraus = channel_for_bounces(n, &ctx.cfg.channel)?;
    let input = bell_phi_plus();
    let truth = apply_channel_signal(&input, &kraus)?.state;
    let settings = t.design.settings();
    let acq = t.acquisition();
    let reconstruct = |seed: u64| -> Result<_> {
        let recs = simulate_counts(&truth, &settings, &acq, seed)?;
        let mle = mle_qst_with(&recs, None, &t.mle_options())?;
        Ok((recs, mle))
    };
    let (records, mle) = reconstruct(seed)?;
    let linear = linear_qst_with(&records, t.accidental_rate)?;
    let fidelity = state_fidelity(&mle.state, &input)?;
    let stochastic = acq.model == nestcell::tomography::CountModel::Poisson;
    let mut spread = Vec::new();
    if stochastic {
        for r in 0..t.resamples as u64 {
            let (_, m) = reconstruct(seed.wrapping_add(1 + r))?;
            spread.push(state_fidelity(&m.state, &input)?);
        }
    }
    let sigma = if spread.len() > 1 { mean_std(&spread).1 } else { 0.0 };

    let anchor = "two-photon state tomography after one transit";
    let counts_path = ctx.path("qst_counts.csv");
    let mut buf = header(anchor, ctx).into_bytes();
    write_records(&mut buf, &records).map_err(|e| ConfigError::Output {
        path: counts_path.clone(),
        source: std::io::Error::other(e.to_string()),
    })?;
    fs::write(&counts_path, buf).map_err(|e| ConfigError::Output { path: counts_path.clone(), source: e })?;

    let value = json!({
        "reproduces": anchor,
        "seed": seed,
        "n_reflections": n,
        "design": t.design,
        "fidelity": fidelity,
        "fidelity_uncertainty": sigma,
        "fidelity_text": format_uncertainty(fidelity, sigma),
        "resamples": spread.len(),
        "fidelity_to_channel_output": state_fidelity(&mle.state, &truth)?,
        "fully_entangled_fraction": fully_entangled_fraction(&mle.state)?,
        "purity": mle.state.purity(),
        "eigenvalues": mle.state.eigenvalues(),
        "visibility": visibilities(&mle.state)?,
        "linear_min_eigenvalue": linear.min_eigenvalue,
        "converged": mle.converged,
        "iterations": mle.iterations,
        "grad_norm": mle.grad_norm,
        "log_likelihood": mle.log_likelihood,
        "state": mle.state,
    });
    write_json(&ctx.path("qst.json"), &value)?;
    println!("state fidelity {}", format_uncertainty(fidelity, sigma));
    Ok(())
}

fn cmd_qpt(ctx: &Ctx) -> Result<()> {
    let t = &ctx.cfg.tomography;
    let seed = ctx.tomo_seed()?;
    let n = ctx.reflections()?;
    let kraus = channel_for_bounces(n, &ctx.cfg.channel)?;
    let acq = t.acquisition();
    let identity = ChiMatrix::identity_channel();
    let data = simulate_process_counts(&kraus, &acq, seed)?;
    let result = process_tomography(&data, &t.qpt_options())?;
    let pf = process_fidelity(&result.chi, &identity)?;
    let mut spread = Vec::new();
    if acq.model == nestcell::tomography::CountModel::Poisson {
        for r in 0..t.resamples as u64 {
            let d = simulate_process_counts(&kraus, &acq, seed.wrapping_add(1 + r))?;
            spread.push(process_fidelity(&process_tomography(&d, &t.qpt_options())?.chi, &identity)?);
        }
    }
    let sigma = if spread.len() > 1 { mean_std(&spread).1 } else { 0.0 };
    let anchor = "single-photon process tomography of one transit";
    write_json(&ctx.path("qpt_counts.json"), &data)?;
    let value = json!({
        "reproduces": anchor,
        "seed": seed,
        "n_reflections": n,
        "process_fidelity": pf,
        "process_fidelity_uncertainty": sigma,
        "process_fidelity_text": format_uncertainty(pf, sigma),
        "resamples": spread.len(),
        "fidelity_to_model_channel": process_fidelity(&result.chi, &normalized_chi(&kraus)?)?,
        "chi": result.chi,
        "chi_eigenvalues": result.chi.eigenvalues(),
        "residual": result.residual,
        "raw_min_eigenvalue": result.raw_min_eigenvalue,
    });
    write_json(&ctx.path("qpt.json"), &value)?;
    println!(
        "process fidelity {}; residual {:.2e}",
        format_uncertainty(pf, sigma),
        result.residual
    );
    Ok(())
}

fn cmd_histogram(ctx: &Ctx) -> Result<()> {
    let c = &ctx.cfg;
    let seed = c.histogram_seed(ctx.seed)?;
    // an explicit --setting-i selects a single histogram
    let settings: Vec<usize> = match ctx.setting_flag {
        Some(i) => vec![i],
        None if c.histogram.overlay_settings.is_empty() => vec![c.delay.i_max],
        None => c.histogram.overlay_settings.clone(),
    };
    let i_max = *settings.iter().max().expect("non-empty");
    let table = delay_table(&c.cell, &c.injection, i_max);
    let mut hists = Vec::new();
    let mut peaks = Vec::new();
    let anchor = "start-stop delay histograms at several delay settings";
    for &i in &settings {
        let row = table[i].as_ref().map_err(|e| Error::from(DelayError::InvalidInput(e.to_string())))?;
        let res = coincidence_histogram(&c.histogram.params(row.delay_ns, seed.wrapping_add(i as u64)))?;
        write_histogram(&ctx.path(&format!("histogram_i{i}.csv")), &res.histogram, &header(anchor, ctx))?;
        let p: PeakEstimate = res.peak;
        peaks.push(json!({
            "i": i,
            "n_reflections": row.n_spots,
            "true_delay_ns": row.delay_ns,
            "peak": p,
        }));
        println!(
            "i = {i}: {} reflections, peak {:.4} ± {:.4} ns (σ {:.0} ps)",
            row.n_spots, p.delay_ns, p.uncertainty_ns, p.sigma_ps
        );
        hists.push((format!("count_i{i}"), res.histogram));
    }
    write_histogram_overlay(&ctx.path("histogram_overlay.csv"), &hists, &header(anchor, ctx))?;
    let value = json!({
        "reproduces": anchor,
        "seed": seed,
        "jitter_ps": c.histogram.jitter_ps,
        "n_events": c.histogram.n_events,
        "bin_width_ps": c.histogram.bin_width_ps,
        "systemic_offset_ns": c.histogram.systemic_offset_ns,
        "peaks": peaks,
    });
    write_json(&ctx.path("histogram.json"), &value)?;
    Ok(())
}

fn cmd_calibrate(ctx: &Ctx) -> Result<()> {
    let c = &ctx.cfg;
    let result = calibrate_injection(&c.cell, &CalibrationOptions::default())?;
    let fragment = CellFragment {
        cell: result.apply(&c.cell),
        injection: result.injection(),
    };
    let text = format!(
        "# calibrated injection: {} passes, ring spread {:.2e} mm, pupil clearance {:.3} mm\n{}",
        result.passes,
        result.ring_spread,
        result.pupil_clearance,
        fragment.to_toml()
    );
    write_text(&ctx.path("calibrated.toml"), &text)?;
    write_json(&ctx.path("calibration.json"), &result)?;
    print!("{text}");
    Ok(())
}

//! Acceptance run: eight numbered criteria, one PASS/FAIL line each, with the
//! measured values and wall time. Exits non-zero if any criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nestcell::channel::random::{random_density, random_kraus};
use nestcell::channel::{
    apply_channel_signal, bell_phi_plus, channel_for_bounces, chi_from_kraus, process_fidelity, state_fidelity,
    BounceParams, ChannelParams, ChiMatrix, DensityMatrix, KrausSet,
};
use nestcell::delay::{
    bandwidth_nm_to_thz, cell_for_setting, delay_table, fiber_efficiency, reflectance_from_efficiency, time_bandwidth_product,
    REFERENCE_MEASUREMENTS,
};
use nestcell::geometry::{ring_analysis, trace_cell, CellConfig, Injection, MirrorId, PatternTemplate, Surface};
use nestcell::linalg::{self, eigenvalues, hermiticity_error, CMatrix};
use nestcell::tomography::{
    coincidence_histogram, mle_qst, process_tomography, settings_16, simulate_counts, simulate_process_counts,
    AcquisitionParams, HistogramParams, QptOptions,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn ring_steps() -> [usize; 6] {
    REFERENCE_MEASUREMENTS.map(|(n, ..)| n / 6)
}

fn reflectance_inversion() -> Outcome {
    let mut worst: f64 = 0.0;
    for (n, _, eta, r) in REFERENCE_MEASUREMENTS {
        match reflectance_from_efficiency(eta, n) {
            Ok(got) => worst = worst.max((got - r).abs()),
            Err(e) => return outcome(false, format!("N = {n}: {e}")),
        }
    }
    outcome(worst <= 2e-5, format!("max |η^(1/N) − R| = {worst:.2e} (≤ 2e-5)"))
}

fn tbp_chain() -> Outcome {
    let bw = bandwidth_nm_to_thz(565.0, 60.0).unwrap();
    let tbp = time_bandwidth_product(56.4, 687.0);
    let (e_bw, e_tbp) = ((bw - 56.4).abs() / 56.4, (tbp - 3.87e7).abs() / 3.87e7);
    outcome(
        e_bw <= 0.005 && e_tbp <= 0.01,
        format!("Δν = {bw:.3} THz ({:.2}%), TBP = {tbp:.4e} ({:.2}%)", 100.0 * e_bw, 100.0 * e_tbp),
    )
}

fn geometry_reproduction() -> Outcome {
    let (cfg, inj) = (CellConfig::reference(), Injection::reference());
    let table = delay_table(&cfg, &inj, 63);
    let mut notes = Vec::new();
    let mut pass = true;
    let mut worst_rel: f64 = 0.0;
    for ((n, measured, ..), i) in REFERENCE_MEASUREMENTS.iter().zip(ring_steps()) {
        match &table[i] {
            Ok(row) => {
                pass &= row.n_spots == *n;
                let rel = (row.delay_ns - measured).abs() / measured;
                worst_rel = worst_rel.max(rel);
                notes.push(format!("{}→{:.1}", row.n_spots, row.delay_ns));
            }
            Err(e) => {
                pass = false;
                notes.push(format!("i = {i}: {e}"));
            }
        }
    }
    pass &= worst_rel <= 0.06;

    let cell = cell_for_setting(&cfg, &inj, 63, &PatternTemplate::default()).unwrap();
    let path = trace_cell(&cell, &cell.entry_ray(&inj), 400).unwrap();
    let rings = ring_analysis(&path).unwrap();
    let entry_rings = rings.rings_on(MirrorId::Entry).len();
    let inner_rings = rings.count_on_surface(Surface::Inner);
    let inner: Vec<usize> = path.spots.iter().filter(|s| s.surface_id == Surface::Inner).map(|s| s.pass_index).collect();
    let every_six = !inner.is_empty() && inner.windows(2).all(|w| w[1] - w[0] == 6);
    pass &= entry_rings == 2 && inner_rings == 1 && every_six;
    outcome(
        pass,
        format!(
            "spots/delays [{}] ns, max delay error {:.1}% (≤ 6%), entry rings {entry_rings}, inner rings {inner_rings}, {} inner hits {}",
            notes.join(", "),
            100.0 * worst_rel,
            inner.len(),
            if every_six { "every 6 passes" } else { "NOT every 6 passes" }
        ),
    )
}

fn delay_histogram() -> Outcome {
    let params = |delay: f64, seed: u64| HistogramParams {
        true_delay_ns: delay,
        jitter_ps: 450.0,
        n_events: 100_000,
        bin_width_ps: 50.0,
        systemic_offset_ns: 0.0,
        seed,
    };
    let main = coincidence_histogram(&params(687.0, 7)).unwrap().peak;
    let z = (main.delay_ns - 687.0).abs() / main.uncertainty_ns;
    let mut pass = z <= 3.0;

    // three-peak overlay at short, middle and long settings: each peak
    // recovered, well separated and in order
    let table = delay_table(&CellConfig::reference(), &Injection::reference(), 63);
    let mut peaks = Vec::new();
    for i in [3, 32, 63] {
        let d = table[i].as_ref().unwrap().delay_ns;
        let p = coincidence_histogram(&params(d, 7 + i as u64)).unwrap().peak;
        pass &= (p.delay_ns - d).abs() <= 3.0 * p.uncertainty_ns;
        peaks.push(p.delay_ns);
    }
    pass &= peaks.windows(2).all(|w| w[1] - w[0] > 100.0);
    outcome(
        pass,
        format!(
            "peak {:.4} ± {:.4} ns ({z:.2} SE), σ {:.0} ps; overlay peaks {:.2}, {:.2}, {:.2} ns",
            main.delay_ns, main.uncertainty_ns, main.sigma_ps, peaks[0], peaks[1], peaks[2]
        ),
    )
}

fn noiseless_round_trip() -> Outcome {
    let bell = bell_phi_plus();
    let out = apply_channel_signal(&bell, &KrausSet::identity()).unwrap().state;
    let records = simulate_counts(&out, &settings_16(), &AcquisitionParams::noiseless(), 0).unwrap();
    let f = state_fidelity(&mle_qst(&records, None).unwrap().state, &bell).unwrap();
    let data = simulate_process_counts(&KrausSet::identity(), &AcquisitionParams::noiseless(), 0).unwrap();
    let chi00 = process_tomography(&data, &QptOptions::default()).unwrap().chi.entry(0, 0).re;
    outcome(
        f >= 1.0 - 1e-6 && chi00 >= 1.0 - 1e-6,
        format!("QST fidelity 1 − {:.1e}, QPT χ₀₀ 1 − {:.1e}", 1.0 - f, 1.0 - chi00),
    )
}

/// Channel of a full 378-reflection transit with a small per-bounce
/// retardance: total retardance 0.038 rad.
fn near_identity_channel() -> KrausSet {
    let params = ChannelParams {
        bounce: BounceParams { retardance: 1e-4, diattenuation: 0.0, axis_azimuth: 0.3 },
        ..Default::default()
    };
    channel_for_bounces(378, &params).unwrap()
}

fn statistical_tomography() -> Outcome {
    let acq = AcquisitionParams::poisson(1e4, 1.0);
    let bell = bell_phi_plus();
    let channel = near_identity_channel();
    let target = apply_channel_signal(&bell, &channel).unwrap().state;
    let identity = ChiMatrix::identity_channel();
    let (mut f_sum, mut f_min) = (0.0, f64::INFINITY);
    let (mut pf_sum, mut pf_lo, mut pf_hi) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
    let seeds = 200;
    for seed in 0..seeds {
        let rec = simulate_counts(&target, &settings_16(), &acq, seed).unwrap();
        let f = state_fidelity(&mle_qst(&rec, None).unwrap().state, &bell).unwrap();
        f_sum += f;
        f_min = f_min.min(f);
        let data = simulate_process_counts(&channel, &acq, seed).unwrap();
        let pf = process_fidelity(&process_tomography(&data, &QptOptions::default()).unwrap().chi, &identity).unwrap();
        pf_sum += pf;
        pf_lo = pf_lo.min(pf);
        pf_hi = pf_hi.max(pf);
    }
    let n = seeds as f64;
    let mean_f = f_sum / n;
    outcome(
        mean_f >= 0.99 && pf_lo >= 0.98 && pf_hi <= 1.0 + 1e-12,
        format!(
            "{seeds} seeds: mean QST fidelity {mean_f:.4} (min {f_min:.4}); QPT process fidelity mean {:.4}, range [{pf_lo:.4}, {pf_hi:.4}]",
            pf_sum / n
        ),
    )
}

fn fiber_comparison() -> Outcome {
    let ull = fiber_efficiency(687.0, 0.15, 0.2, 1.46).unwrap();
    let visible = fiber_efficiency(687.0, 28.0, 0.2, 1.46).unwrap();
    let cell = REFERENCE_MEASUREMENTS[5].2;
    outcome(
        (0.94..=0.96).contains(&ull) && (visible - 0.40).abs() <= 0.05 && cell > ull,
        format!("ULL {ull:.4}, 460HP-like {visible:.4}, cell {cell:.5} > ULL"),
    )
}

fn physicality_error(m: &CMatrix) -> f64 {
    let herm = hermiticity_error(m);
    let trace = (linalg::trace(m) - nestcell::linalg::c(1.0, 0.0)).norm();
    let neg = eigenvalues(m).iter().fold(0.0f64, |a, &e| a.max(-e));
    herm.max(trace).max(neg)
}

fn frobenius(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm()
}

/// Distance of the first reconstruction from the truth, and the RMS spread of
/// `resamples` further reconstructions around their mean.
fn distance_and_spread(truth: &CMatrix, mut estimate: impl FnMut(u64) -> CMatrix, seed: u64, resamples: u64) -> (f64, f64) {
    let first = estimate(seed);
    let runs: Vec<CMatrix> = (1..=resamples).map(|r| estimate(seed.wrapping_mul(1000) + r)).collect();
    let mut mean = CMatrix::zeros(truth.nrows(), truth.ncols());
    for r in &runs {
        mean += r;
    }
    mean /= nestcell::linalg::c(runs.len() as f64, 0.0);
    let var = runs.iter().map(|r| frobenius(r, &mean).powi(2)).sum::<f64>() / (runs.len() as f64 - 1.0);
    (frobenius(&first, truth), var.sqrt())
}

fn physicality_suite() -> Outcome {
    let acq = AcquisitionParams::poisson(1e4, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let trials = 1000;
    let resamples = 4;
    let mut worst_phys: f64 = 0.0;
    let (mut worst_qst, mut worst_qpt): (f64, f64) = (0.0, 0.0);
    let mut failures = Vec::new();
    for t in 0..trials {
        let rank = rng.random_range(1..=4);
        let rho: DensityMatrix = random_density(&mut rng, 4, rank);
        let n_ops = rng.random_range(1..=4);
        let k = random_kraus(&mut rng, n_ops);
        let truth = apply_channel_signal(&rho, &k).unwrap().state;
        let truth_chi = chi_from_kraus(&k);

        let (d, s) = distance_and_spread(
            truth.matrix(),
            |seed| {
                let rec = simulate_counts(&truth, &settings_16(), &acq, seed).unwrap();
                let est = mle_qst(&rec, None).unwrap().state;
                worst_phys = worst_phys.max(physicality_error(est.matrix()));
                est.matrix().clone()
            },
            t,
            resamples,
        );
        let qst_ratio = d / s;
        worst_qst = worst_qst.max(qst_ratio);

        let (d, s) = distance_and_spread(
            truth_chi.matrix(),
            |seed| {
                let data = simulate_process_counts(&k, &acq, seed).unwrap();
                let chi = process_tomography(&data, &QptOptions::default()).unwrap().chi;
                worst_phys = worst_phys.max(physicality_error(chi.matrix()));
                chi.matrix().clone()
            },
            t,
            resamples,
        );
        let qpt_ratio = d / s;
        worst_qpt = worst_qpt.max(qpt_ratio);
        if qst_ratio > 5.0 || qpt_ratio > 5.0 {
            failures.push(t);
        }
    }
    outcome(
        worst_phys <= nestcell::channel::PHYSICALITY_TOL && failures.is_empty(),
        format!(
            "{trials} states+channels: worst physicality violation {worst_phys:.1e}; worst |est − truth|/σ_MC: QST {worst_qst:.2}, QPT {worst_qpt:.2} (≤ 5); {} over",
            failures.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 8] = [
        ("reflectance inversion", Duration::from_secs(1), reflectance_inversion),
        ("time-bandwidth product", Duration::from_secs(1), tbp_chain),
        ("geometry reproduction", Duration::from_secs(10), geometry_reproduction),
        ("delay histogram", Duration::from_secs(5), delay_histogram),
        ("noiseless tomography round trip", Duration::from_secs(10), noiseless_round_trip),
        ("statistical tomography", Duration::from_secs(300), statistical_tomography),
        ("fiber comparison", Duration::from_secs(1), fiber_comparison),
        ("physicality suite", Duration::from_secs(600), physicality_suite),
    ];
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let pass = o.pass && elapsed <= *budget;
        failed += !pass as usize;
        println!(
            "criterion {}: {} — {name}: {} [{:.2} s / {} s]",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}

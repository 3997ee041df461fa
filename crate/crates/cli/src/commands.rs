use copolymer::asymptotics::{
    copolymer_localization_check, interpolation_inputs, interpolation_matrix, verify_asymptotics, ConvergenceTable,
    LocalizationCheck,
};
use copolymer::kernel::build_bundle;
use copolymer::polymer::{sample_many, sign_constants, PathMode, PolymerSampler, SignConstants, StatReference};
use copolymer::renewal::{c_beta, doney_check, green_function};
use copolymer::rng::stream_rng;
use copolymer::spectral::{free_energy_with, gamma_kernel, log_perron_second_differences};
use copolymer::walk::{return_law, ReturnLaw, WalkModel};
use copolymer::{build_tables, ChargeSet, Endpoint, KernelBundle, Regime, RegimeReport, SpectralData};
use rand::Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, LoadedConfig};
use crate::output::Output;
use crate::CliError;

/// Random copolymers below this spread are treated as trivial and redrawn.
const MIN_SPREAD: f64 = 1e-3;
/// Grid of the interpolation parameter for the log-convexity check.
const CONVEXITY_GRID: (f64, f64, usize) = (-2.0, 0.25, 17);
const CONVEXITY_SLACK: f64 = 1e-12;
/// `δ − 1` below this counts as not localized.
const LOCALIZATION_GAP: f64 = 1e-12;

/// Everything downstream of the charges and the walk.
struct Model {
    raw: ChargeSet<f64>,
    charges: ChargeSet<f64>,
    law: ReturnLaw<f64>,
    bundle: KernelBundle<f64>,
    spectral: SpectralData<f64>,
    report: RegimeReport<f64>,
}

impl Model {
    fn build(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let raw = cfg.charge_set()?;
        let charges = raw.canonicalize();
        let law = return_law(&WalkModel::new(cfg.p)?, cfg.x_max)?;
        let bundle = build_bundle(&charges, &law, cfg.x_max)?;
        let spectral = free_energy_with(&bundle, cfg.tolerances.eps_crit)?;
        let report = copolymer::constants(&spectral, &bundle)?;
        Ok(Self { raw, charges, law, bundle, spectral, report })
    }

    fn regime(&self) -> Regime {
        self.report.regime
    }
}

fn headline(m: &Model) -> String {
    format!("{}, delta={:.6}, F={:.6}", m.regime(), m.report.delta, m.report.f)
}

#[derive(Serialize)]
struct Classification<'a> {
    regime: Regime,
    delta: f64,
    free_energy: f64,
    /// `null` outside the localized regime.
    mu: f64,
    h: f64,
    in_p: bool,
    tail_error: f64,
    mirrored: bool,
    report: &'a RegimeReport<f64>,
}

pub fn classify(loaded: &LoadedConfig, out: &Output) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let m = Model::build(cfg)?;
    out.say(headline(&m));
    let body = Classification {
        regime: m.regime(),
        delta: m.report.delta,
        free_energy: m.report.f,
        mu: m.report.mu,
        h: m.bundle.h(),
        in_p: m.charges.in_p(m.report.delta, cfg.tolerances.zero_tol),
        tail_error: m.bundle.tail_error(),
        mirrored: m.charges.is_mirrored(),
        report: &m.report,
    };
    out.json("classify.json", &body)
}

#[derive(Serialize)]
struct ConstantsReport<'a> {
    report: &'a RegimeReport<f64>,
    zeta: &'a [f64],
    xi: &'a [f64],
    nu: &'a [f64],
    h: f64,
    c_k: f64,
    /// Tail prefactor of the return time to each residue; absent when
    /// delocalized.
    c_beta: Option<Vec<f64>>,
    /// Absent when localized.
    signs: Option<SignConstants<f64>>,
}

pub fn constants(loaded: &LoadedConfig, out: &Output) -> Result<(), CliError> {
    let m = Model::build(&loaded.config)?;
    out.say(headline(&m));
    let t = m.bundle.period();
    let c_beta = match m.regime() {
        Regime::Delocalized => None,
        _ => Some((0..t).map(|b| c_beta(&m.spectral, &m.bundle, b)).collect::<Result<Vec<_>, _>>()?),
    };
    let signs = match m.regime() {
        Regime::Localized => None,
        _ => Some(sign_constants(&m.spectral, &m.bundle)?),
    };
    let body = ConstantsReport {
        report: &m.report,
        zeta: &m.spectral.zeta,
        xi: &m.spectral.xi,
        nu: &m.spectral.nu,
        h: m.bundle.h(),
        c_k: m.law.c_k(),
        c_beta,
        signs,
    };
    out.json("constants.json", &body)
}

/// Powers of two in the residue class `eta` (rounded down into it), closed
/// by the largest length in the class not beyond `horizon`.
fn default_lengths(t: usize, eta: usize, horizon: usize) -> Vec<usize> {
    let into_class = |n: usize| n.checked_sub((n + t - eta) % t).filter(|&m| m > 0);
    let mut v: Vec<usize> = (4..usize::BITS).map(|k| 1usize << k).take_while(|&n| n <= horizon).filter_map(into_class).collect();
    v.extend(into_class(horizon));
    v.sort_unstable();
    v.dedup();
    v
}

#[derive(Serialize)]
struct VerifyRow {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "Z")]
    z: f64,
    prediction: f64,
    ratio: f64,
    #[serde(rename = "log_Z")]
    log_z: f64,
    log_prediction: f64,
}

/// Rows for the raw charges: both columns carry the canonicalization offset,
/// which cancels in the ratio.
fn verify_rows(table: &ConvergenceTable<f64>, raw: &ChargeSet<f64>) -> Vec<VerifyRow> {
    table
        .rows
        .iter()
        .map(|r| {
            let offset = raw.partition_offset(r.n);
            let (log_z, log_prediction) = (r.log_z + offset, r.log_prediction + offset);
            VerifyRow { n: r.n, z: log_z.exp(), prediction: log_prediction.exp(), ratio: r.ratio, log_z, log_prediction }
        })
        .collect()
}

#[derive(Serialize)]
struct TrendCheck {
    endpoint: Endpoint,
    final_ratio: f64,
    band: [f64; 2],
    monotone: bool,
    monotone_required: bool,
    pass: bool,
}

#[derive(Serialize)]
struct VerifyMeta<'a> {
    regime: Regime,
    eta: usize,
    n_list: &'a [usize],
    checks: &'a [TrendCheck],
    pass: bool,
}

#[derive(Serialize)]
struct DoneyCsvRow {
    alpha: usize,
    beta: usize,
    x: usize,
    ratio: f64,
}

pub fn verify(loaded: &LoadedConfig, out: &Output) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let m = Model::build(cfg)?;
    let t = m.bundle.period();
    let eta = cfg.verify.eta.unwrap_or(cfg.horizon) % t;
    let n_list = match &cfg.verify.n_list {
        Some(v) => v.clone(),
        None => default_lengths(t, eta, cfg.horizon),
    };
    if n_list.is_empty() {
        return Err(CliError::Config(format!("no length in class {eta} mod {t} up to {}", cfg.horizon)));
    }
    let horizon = n_list.iter().copied().max().unwrap_or(cfg.horizon);
    let table = build_tables(&m.bundle, horizon)?;
    let tol = &cfg.tolerances;
    let (con_band, free_band, monotone_required) = match m.regime() {
        Regime::Localized => (tol.localized_band, tol.localized_band, false),
        Regime::Critical => (tol.critical_band, tol.critical_band, true),
        Regime::Delocalized => (tol.delocalized_band, tol.delocalized_free_band, false),
    };
    let mut checks = Vec::new();
    for (endpoint, band, name) in [
        (Endpoint::Constrained, con_band, "verify_constrained.csv"),
        (Endpoint::Free, free_band, "verify_free.csv"),
    ] {
        let conv = verify_asymptotics(&m.report, &table, eta, &n_list, endpoint)?;
        let final_ratio = conv.final_ratio().unwrap_or(f64::NAN);
        let pass = band[0] <= final_ratio && final_ratio <= band[1] && (conv.monotone || !monotone_required);
        let check = TrendCheck { endpoint, final_ratio, band, monotone: conv.monotone, monotone_required, pass };
        out.say(format!(
            "{endpoint:?}: final ratio {final_ratio:.6} at N = {}, monotone {}: {}",
            n_list.last().copied().unwrap_or(0),
            conv.monotone,
            if pass { "pass" } else { "FAIL" }
        ));
        out.csv(name, &verify_rows(&conv, &m.raw), &check)?;
        checks.push(check);
    }
    if m.regime() == Regime::Critical {
        let gamma = gamma_kernel(&m.spectral, &m.bundle)?;
        let green = green_function(&gamma, horizon)?;
        let mut rows = Vec::new();
        for beta in 0..t {
            let cb = c_beta(&m.spectral, &m.bundle, beta)?;
            for alpha in 0..t {
                let all = doney_check(&green, cb, alpha, beta)?;
                // The first point past each power of two, and the last.
                let mut picked: Vec<usize> = (0..usize::BITS)
                    .map(|k| 1usize << k)
                    .take_while(|&x| x <= horizon)
                    .filter_map(|x| all.iter().position(|r| r.x >= x))
                    .collect();
                picked.push(all.len().saturating_sub(1));
                picked.dedup();
                rows.extend(picked.into_iter().filter_map(|i| all.get(i)).map(|r| DoneyCsvRow { alpha, beta, x: r.x, ratio: r.ratio }));
            }
        }
        out.csv("doney.csv", &rows, &serde_json::json!({ "columns": "sqrt(x) U(x) 2 pi c_beta / T^2" }))?;
    }
    let pass = checks.iter().all(|c| c.pass);
    out.json("verify_meta.json", &VerifyMeta { regime: m.regime(), eta, n_list: &n_list, checks: &checks, pass })?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Check(format!("{} asymptotics outside the configured band", m.regime())))
    }
}

#[derive(Serialize)]
struct SampleMeta {
    mode: PathMode,
    count: usize,
}

pub fn sample(loaded: &LoadedConfig, out: &Output, workers: usize) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let m = Model::build(cfg)?;
    let endpoint = cfg.sample.endpoint;
    let n = cfg.horizon;
    let table = build_tables(&m.bundle, n)?;
    let mode = match (m.regime(), endpoint) {
        (Regime::Localized, _) => PathMode::Full,
        (Regime::Critical, Endpoint::Free) => PathMode::Endpoint,
        _ => PathMode::Skeleton,
    };
    let sampler = PolymerSampler::new(&m.bundle, &table, endpoint, n, mode)?;
    let summaries = sample_many(&sampler, cfg.sample.count, cfg.seed, workers)?;
    let reference = StatReference {
        free_energy: m.report.f,
        sigma: WalkModel::new(cfg.p)?.sigma2().sqrt(),
        signs: sign_constants(&m.spectral, &m.bundle).ok(),
    };
    let stats = copolymer::polymer::scaling_statistics(&summaries, m.regime(), &reference)?;
    out.say(format!("{}: {} paths of length {n} ({endpoint:?}, {mode:?})", m.regime(), stats.samples));
    #[derive(Serialize)]
    struct Body<'a> {
        sampling: SampleMeta,
        stats: &'a copolymer::polymer::StatReport,
    }
    let sampling = SampleMeta { mode, count: cfg.sample.count };
    out.json("stats.json", &Body { sampling, stats: &stats })?;
    if cfg.sample.paths > 0 {
        let full = PolymerSampler::new(&m.bundle, &table, endpoint, n, PathMode::Full)?;
        let paths: Vec<_> = (0..cfg.sample.paths).map(|i| full.sample(&mut stream_rng(cfg.seed, i as u64))).collect();
        out.jsonl("paths.jsonl", &paths)?;
    }
    Ok(())
}

fn random_copolymer<R: Rng>(rng: &mut R, t: usize) -> Result<ChargeSet<f64>, CliError> {
    loop {
        let mut minus: Vec<f64> = (0..t).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let mean = minus.iter().sum::<f64>() / t as f64;
        minus.iter_mut().for_each(|x| *x -= mean);
        if minus.iter().any(|x| x.abs() > MIN_SPREAD) {
            return Ok(ChargeSet::copolymer(minus)?.canonicalize());
        }
    }
}

#[derive(Serialize)]
struct CopolymerRow {
    period: usize,
    omega_minus: Vec<f64>,
    check: LocalizationCheck<f64>,
    /// Smallest second difference of `log η(t)` along the interpolation.
    min_second_difference: f64,
    pass: bool,
}

#[derive(Serialize)]
struct LocalizationReport {
    count: usize,
    failures: usize,
    min_delta_gap: f64,
    min_second_difference: f64,
    /// The configured charges, when they form a zero-mean copolymer.
    configured: Option<CopolymerRow>,
    rows: Vec<CopolymerRow>,
}

fn check_copolymer(c: &ChargeSet<f64>, law: &ReturnLaw<f64>, x_max: usize) -> Result<CopolymerRow, CliError> {
    let bundle = build_bundle(c, law, x_max)?;
    let check = copolymer_localization_check(c, &bundle)?;
    let (q, w) = interpolation_inputs(c, &bundle);
    let (start, step, len) = CONVEXITY_GRID;
    let grid: Vec<f64> = (0..len).map(|i| start + step * i as f64).collect();
    let d2 = log_perron_second_differences(|s| interpolation_matrix(&q, &w, s), &grid)?;
    let min_second_difference = d2.into_iter().fold(f64::INFINITY, f64::min);
    let pass = check.localized && check.chain_holds && check.delta - 1.0 > LOCALIZATION_GAP && min_second_difference >= -CONVEXITY_SLACK;
    Ok(CopolymerRow { period: c.period(), omega_minus: c.omega_minus().to_vec(), check, min_second_difference, pass })
}

pub fn localization_check(loaded: &LoadedConfig, out: &Output) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let law = return_law(&WalkModel::new(cfg.p)?, cfg.x_max)?;
    let periods = &cfg.localization.periods;
    let mut rows = Vec::with_capacity(cfg.localization.count);
    for i in 0..cfg.localization.count {
        let mut rng = stream_rng(cfg.seed, i as u64);
        let c = random_copolymer(&mut rng, periods[i % periods.len()])?;
        rows.push(check_copolymer(&c, &law, cfg.x_max)?);
    }
    let configured = match check_copolymer(&cfg.charge_set()?.canonicalize(), &law, cfg.x_max) {
        Ok(row) => Some(row),
        Err(CliError::Config(_)) => None,
        Err(e) => return Err(e),
    };
    let all = rows.iter().chain(&configured);
    let failures = all.clone().filter(|r| !r.pass).count();
    let min_delta_gap = all.clone().map(|r| r.check.delta - 1.0).fold(f64::INFINITY, f64::min);
    let min_second_difference = all.map(|r| r.min_second_difference).fold(f64::INFINITY, f64::min);
    out.say(format!(
        "{} copolymers: {failures} failures, min delta - 1 = {min_delta_gap:.3e}, min second difference = {min_second_difference:.2e}",
        rows.len() + configured.is_some() as usize
    ));
    let count = rows.len();
    out.json(
        "localization.json",
        &LocalizationReport { count, failures, min_delta_gap, min_second_difference, configured, rows },
    )?;
    if failures == 0 {
        Ok(())
    } else {
        Err(CliError::Check(format!("{failures} copolymers failed the localization check")))
    }
}

//! Subcommand key tables and handlers.

use num_complex::Complex64;
use pathint_core::gaussian::{
    dirichlet_green, feynman_green_ladder, feynman_green_qm, free_propagator, ho_partition_function, ho_propagator,
    infinite_line_green, lattice_propagator, trace_by_quadrature, PolePrescription,
};
use pathint_core::instanton::{
    bandwidth, calibrate_r_from_oracle, dilute_gas_propagator, energy_splitting, periodic_band_energy,
    periodic_propagator, profile_action_quadrature, r_stability, semiclassical_trend, Endpoints, InstantonParams,
};
use pathint_core::model::{Boundary, Lattice, Potential, Signature};
use pathint_core::perturbation::ground_state_routes;
use pathint_core::pimc::{correlation_function, effective_gap, gap_between, run_sampler, GapForm, Observable, SamplerConfig};
use pathint_core::spectral::{convergence_check, diagonalize_with, partition_from_spectrum, Scheme, SpectralGrid};
use pathint_core::stats::EstimatorResult;
use pathint_core::topology::{
    ab_relative_phase, dirac_charge_unit, dirac_string_phase, statistics_solutions, two_slit_intensity,
    InterferenceSetup, StatisticsPhase,
};
use pathint_core::wick::{
    disconnected_cancellation_check, enumerate_pairings, euclidean_first_order_ke_ratio, euclidean_first_order_log_ke,
    first_order_two_point_terms, KernelChoice, VertexSignature,
};
use pathint_core::Error;
use serde_json::{json, Map, Value};

use crate::output::{Report, Table};
use crate::params::{key, Key, Params};

pub struct Command {
    pub name: &'static str,
    pub about: &'static str,
    pub keys: fn() -> Vec<Key>,
    pub run: fn(&mut Params) -> Result<Report, Error>,
}

pub const COMMANDS: [Command; 9] = [
    Command { name: "propagator", about: "Free or harmonic propagator, closed form or sliced lattice", keys: propagator_keys, run: propagator },
    Command { name: "partition", about: "Partition function by closed form, trace quadrature or spectrum", keys: partition_keys, run: partition },
    Command { name: "green", about: "Dirichlet, infinite-line and Feynman two-point functions", keys: green_keys, run: green },
    Command { name: "wick", about: "Wick pairings and first-order contraction bookkeeping", keys: wick_keys, run: wick },
    Command { name: "perturb", about: "Anharmonic ground-state energy by three routes", keys: perturb_keys, run: perturb },
    Command { name: "pimc", about: "Path-integral Monte Carlo with error analysis", keys: pimc_keys, run: pimc },
    Command { name: "spectrum", about: "Finite-difference eigenvalues of a one-dimensional Hamiltonian", keys: spectrum_keys, run: spectrum },
    Command { name: "instanton", about: "Instanton action, dilute-gas sums and tunnelling splittings", keys: instanton_keys, run: instanton },
    Command { name: "topology", about: "Aharonov-Bohm phases, exchange statistics and Dirac quantization", keys: topology_keys, run: topology },
];

fn to_value(x: impl serde::Serialize) -> Value {
    serde_json::to_value(x).expect("result types serialize")
}

fn potential_keys(default: &'static str) -> Vec<Key> {
    vec![
        key("potential", Some(default), "free | harmonic | anharmonic | double-well | periodic"),
        key("m", Some("1"), "particle mass"),
        key("hbar", Some("1"), "Planck constant"),
        key("omega", Some("1"), "oscillator frequency (harmonic, anharmonic)"),
        key("lambda", None, "quartic coupling (anharmonic, double-well)"),
        key("a", None, "well position (double-well)"),
        key("period", None, "lattice period (periodic)"),
        key("depth", None, "barrier depth (periodic)"),
    ]
}

const POTENTIALS: [&str; 5] = ["free", "harmonic", "anharmonic", "double-well", "periodic"];

fn read_potential(p: &mut Params) -> Result<Potential, Error> {
    let kind = match p.choice("potential", &POTENTIALS)? {
        0 => Potential::free(),
        1 => Potential::harmonic(p.f64("omega")?),
        2 => Potential::anharmonic(p.f64("omega")?, p.f64("lambda")?),
        3 => Potential::double_well(p.f64("lambda")?, p.f64("a")?),
        _ => Potential::periodic(p.f64("period")?, p.f64("depth")?),
    };
    kind.with_mass(p.f64("m")?).with_hbar(p.f64("hbar")?).validated()
}

fn propagator_keys() -> Vec<Key> {
    vec![
        key("potential", Some("harmonic"), "free | harmonic"),
        key("m", Some("1"), "particle mass"),
        key("omega", Some("1"), "oscillator frequency"),
        key("hbar", Some("1"), "Planck constant"),
        key("signature", Some("euclidean"), "euclidean | real-time"),
        key("beta", Some("1"), "Euclidean time extent"),
        key("t", None, "real-time extent"),
        key("q", Some("0"), "initial position"),
        key("qp", Some("0"), "final position"),
        key("method", Some("closed"), "closed | lattice"),
        key("n-slices", Some("64"), "time slices (lattice)"),
    ]
}

fn propagator(p: &mut Params) -> Result<Report, Error> {
    let harmonic = p.choice("potential", &["free", "harmonic"])? == 1;
    let m = p.f64("m")?;
    let omega = if harmonic { p.f64("omega")? } else { 0.0 };
    let hbar = p.f64("hbar")?;
    let signature = [Signature::Euclidean, Signature::RealTime][p.choice("signature", &["euclidean", "real-time"])?];
    let extent = match signature {
        Signature::Euclidean => p.f64("beta")?,
        Signature::RealTime => p.f64("t")?,
    };
    let (q, qp) = (p.f64("q")?, p.f64("qp")?);
    let lattice = p.choice("method", &["closed", "lattice"])? == 1;
    let n_slices = if lattice { Some(p.usize("n-slices")?) } else { None };
    p.finish()?;

    let closed = if harmonic {
        ho_propagator(q, qp, extent, m, omega, hbar, signature)?
    } else {
        free_propagator(q, qp, extent, m, hbar, signature)?
    };
    let result = match n_slices {
        None => {
            let value = match signature {
                Signature::Euclidean => json!(closed.euclidean()),
                Signature::RealTime => json!([closed.value().re, closed.value().im]),
            };
            json!({
                "method": "closed",
                "value": value,
                "modulus": closed.modulus(),
                "prefactor_modulus": closed.prefactor_modulus,
                "phase": closed.phase,
                "classical_action": closed.classical_action,
                "signature": signature,
            })
        }
        Some(n) => {
            let pot = if harmonic { Potential::harmonic(omega) } else { Potential::free() };
            let pot = pot.with_mass(m).with_hbar(hbar).validated()?;
            let value = lattice_propagator(&pot, q, qp, &Lattice::new(n, extent, signature)?)?;
            let exact = closed.euclidean();
            json!({
                "method": "lattice",
                "value": value,
                "n_slices": n,
                "closed_form": exact,
                "relative_error": (value - exact).abs() / exact.abs(),
                "signature": signature,
            })
        }
    };
    Ok(Report { result, ..Report::default() })
}

fn partition_keys() -> Vec<Key> {
    let mut k = vec![
        key("method", Some("closed"), "closed | quadrature | spectral"),
        key("beta", Some("1"), "inverse temperature"),
        key("n-states", Some("64"), "eigenvalues summed (spectral)"),
    ];
    k.extend(potential_keys("harmonic"));
    k
}

fn partition(p: &mut Params) -> Result<Report, Error> {
    let method = p.choice("method", &["closed", "quadrature", "spectral"])?;
    let beta = p.f64("beta")?;
    let result = if method == 2 {
        let pot = read_potential(p)?;
        let n_states = p.usize("n-states")?;
        p.finish()?;
        let spectrum = diagonalize_with(&pot, &SpectralGrid::default_for(&pot), n_states, Scheme::default())?;
        json!({
            "method": "spectral",
            "beta": beta,
            "value": partition_from_spectrum(&spectrum, beta)?,
            "n_states": n_states,
            "potential": pot,
        })
    } else {
        let (m, omega, hbar) = (p.f64("m")?, p.f64("omega")?, p.f64("hbar")?);
        p.finish()?;
        let closed = ho_partition_function(beta, omega, hbar)?;
        let value = if method == 0 { closed } else { trace_by_quadrature(beta, m, omega, hbar)? };
        json!({
            "method": (["closed", "quadrature"][method]),
            "beta": beta,
            "value": value,
            "closed_form": closed,
            "relative_error": (value - closed).abs() / closed,
        })
    };
    Ok(Report { result, ..Report::default() })
}

fn green_keys() -> Vec<Key> {
    vec![
        key("kind", Some("dirichlet"), "dirichlet | infinite-line | feynman"),
        key("tau", None, "first Euclidean time"),
        key("taup", None, "second Euclidean time"),
        key("beta", None, "Euclidean extent (dirichlet)"),
        key("m", Some("1"), "particle mass"),
        key("omega", Some("1"), "oscillator frequency"),
        key("dt", None, "real-time separation (feynman)"),
        key("epsilon", None, "pole shift (feynman); omitted: extrapolate over a ladder"),
    ]
}

fn green(p: &mut Params) -> Result<Report, Error> {
    let kind = p.choice("kind", &["dirichlet", "infinite-line", "feynman"])?;
    let result = match kind {
        0 | 1 => {
            let (tau, taup) = (p.f64("tau")?, p.f64("taup")?);
            let beta = if kind == 0 { Some(p.f64("beta")?) } else { None };
            let (m, omega) = (p.f64("m")?, p.f64("omega")?);
            p.finish()?;
            let value = match beta {
                Some(b) => dirichlet_green(tau, taup, b, m, omega)?,
                None => infinite_line_green(tau, taup, m, omega),
            };
            json!({ "kind": (["dirichlet", "infinite-line"][kind]), "value": value })
        }
        _ => {
            let dt = p.f64("dt")?;
            let omega = p.f64("omega")?;
            let eps = p.opt_f64("epsilon")?;
            p.finish()?;
            match eps {
                Some(e) => {
                    let g = feynman_green_qm(dt, omega, PolePrescription::new(e)?)?;
                    json!({ "kind": "feynman", "value": g.value, "epsilon": e, "residual": g.residual })
                }
                None => {
                    let ladder = feynman_green_ladder(dt, omega, &PolePrescription::default_ladder())?;
                    json!({ "kind": "feynman", "value": ladder.extrapolated, "rungs": ladder.rungs })
                }
            }
        }
    };
    Ok(Report { result, ..Report::default() })
}

fn wick_keys() -> Vec<Key> {
    vec![
        key("report", Some("first-order"), "pairings | first-order | vacuum | cancellation"),
        key("n", Some("4"), "number of points (pairings)"),
        key("list", Some("false"), "list every pairing (pairings)"),
        key("vertex", Some("euclidean"), "euclidean | real-time (first-order)"),
        key("beta", Some("40"), "Euclidean extent (vacuum, cancellation)"),
        key("m", Some("1"), "particle mass"),
        key("omega", Some("1"), "oscillator frequency"),
        key("lambda", Some("0.1"), "quartic coupling"),
        key("hbar", Some("1"), "Planck constant (vacuum)"),
        key("kernel", Some("infinite-line"), "infinite-line | dirichlet (vacuum)"),
    ]
}

fn wick(p: &mut Params) -> Result<Report, Error> {
    let report = p.choice("report", &["pairings", "first-order", "vacuum", "cancellation"])?;
    let result = match report {
        0 => {
            let n = p.usize("n")?;
            let list = p.bool("list")?;
            p.finish()?;
            let pairings = enumerate_pairings(n)?;
            let mut out = json!({ "report": "pairings", "n_points": n, "count": pairings.len() });
            if list {
                out["pairings"] = to_value(pairings.iter().map(|x| x.pairs()).collect::<Vec<_>>());
            }
            out
        }
        1 => {
            let vertex = [VertexSignature::Euclidean, VertexSignature::RealTime][p.choice("vertex", &["euclidean", "real-time"])?];
            p.finish()?;
            let terms = first_order_two_point_terms(vertex);
            let total = |connected: Option<bool>| -> u64 {
                terms.iter().filter(|t| connected.is_none_or(|c| t.is_connected() == c)).map(|t| t.multiplicity).sum()
            };
            let listed: Vec<Value> = terms
                .iter()
                .map(|t| {
                    json!({
                        "expression": t.describe(),
                        "multiplicity": t.multiplicity,
                        "coefficient": t.coefficient.to_string(),
                        "connected": t.is_connected(),
                        "kernel_factors": t.kernel_factors,
                    })
                })
                .collect();
            json!({
                "report": "first-order",
                "vertex": vertex,
                "total_multiplicity": total(None),
                "connected_multiplicity": total(Some(true)),
                "disconnected_multiplicity": total(Some(false)),
                "terms": listed,
            })
        }
        2 => {
            let beta = p.f64("beta")?;
            let (m, omega, lambda, hbar) = (p.f64("m")?, p.f64("omega")?, p.f64("lambda")?, p.f64("hbar")?);
            let kernel = [KernelChoice::InfiniteLine, KernelChoice::Dirichlet][p.choice("kernel", &["infinite-line", "dirichlet"])?];
            p.finish()?;
            json!({
                "report": "vacuum",
                "kernel": kernel,
                "log_ke_first_order": euclidean_first_order_log_ke(beta, m, omega, lambda, hbar, kernel)?,
                "energy_shift": euclidean_first_order_ke_ratio(beta, m, omega, lambda, hbar, kernel)?,
                "energy_shift_limit": lambda * hbar / (32.0 * m * m * omega * omega),
            })
        }
        _ => {
            let beta = p.f64("beta")?;
            let (m, omega, lambda) = (p.f64("m")?, p.f64("omega")?, p.f64("lambda")?);
            p.finish()?;
            let r = disconnected_cancellation_check(beta, m, omega, lambda)?;
            let mut out = to_value(&r);
            out["report"] = json!("cancellation");
            out["cancelled"] = json!(*r.disconnected_coefficient.numer() == 0);
            out
        }
    };
    Ok(Report { result, ..Report::default() })
}

fn perturb_keys() -> Vec<Key> {
    vec![
        key("m", Some("1"), "particle mass"),
        key("omega", Some("1"), "oscillator frequency"),
        key("lambda", Some("0.1"), "quartic coupling"),
        key("hbar", Some("1"), "Planck constant"),
    ]
}

fn perturb(p: &mut Params) -> Result<Report, Error> {
    let (m, omega, lambda, hbar) = (p.f64("m")?, p.f64("omega")?, p.f64("lambda")?, p.f64("hbar")?);
    p.finish()?;
    let routes = ground_state_routes(m, omega, lambda, hbar)?;
    let mut result = to_value(routes);
    result["max_pairwise_gap"] = json!(routes.max_pairwise_gap());
    let rows = [("formula", &routes.formula), ("contraction", &routes.contraction), ("oracle", &routes.oracle)]
        .iter()
        .map(|(name, e)| vec![json!(name), json!(e.value), to_value(e.order), json!(e.error_bar)])
        .collect();
    let table = Table { header: vec!["route", "value", "order", "error_bar"], rows };
    Ok(Report { result, table: Some(table), ..Report::default() })
}

fn pimc_keys() -> Vec<Key> {
    let mut k = potential_keys("harmonic");
    k.extend([
        key("beta", Some("10"), "Euclidean extent"),
        key("n-slices", Some("100"), "time slices"),
        key("n-sweeps", Some("20000"), "sweeps per chain, thermalization included"),
        key("n-thermalization", Some("2000"), "discarded sweeps per chain"),
        key("n-chains", Some("4"), "independent chains"),
        key("seed", Some("1"), "random seed"),
        key("step-width", None, "initial proposal width; default 2*sqrt(hbar*delta/m)"),
        key("auto-tune", Some("true"), "tune the step width before sampling"),
        key("boundary", Some("periodic"), "periodic | fixed"),
        key("q-start", Some("0"), "first endpoint (fixed)"),
        key("q-end", Some("0"), "last endpoint (fixed)"),
        key("shift-width", None, "whole-path shift distance; default 2a for double wells, else 0"),
        key("shift-jitter", None, "uniform jitter added to shifts; default 0.05a for double wells, else 0"),
        key("measure-every", Some("1"), "sweeps between measurements"),
        key("max-separation", None, "largest correlator separation in slices"),
        key("position-quantum", None, "restrict positions to a grid of this spacing"),
        key("gap-form", Some("cosh"), "cosh | log"),
        key("gap-window", None, "tau1,tau2 for a two-point gap estimate"),
    ]);
    k
}

fn estimate_json(e: &EstimatorResult) -> Value {
    json!({ "mean": e.mean, "std_error": e.std_error, "n_effective": e.n_effective })
}

fn estimate_row(name: &str, tau: Option<f64>, e: &EstimatorResult) -> Vec<Value> {
    vec![json!(name), tau.map_or(Value::Null, |t| json!(t)), json!(e.mean), json!(e.std_error), json!(e.n_effective)]
}

fn pimc(p: &mut Params) -> Result<Report, Error> {
    let potential = read_potential(p)?;
    let lattice = Lattice::euclidean(p.usize("n-slices")?, p.f64("beta")?)?;
    let mut cfg = SamplerConfig::new(lattice, potential);
    cfg.n_sweeps = p.usize("n-sweeps")?;
    cfg.n_thermalization = p.usize("n-thermalization")?;
    cfg.n_chains = p.usize("n-chains")?;
    cfg.seed = p.u64("seed")?;
    if let Some(w) = p.opt_f64("step-width")? {
        cfg.step_width = w;
    }
    cfg.auto_tune = p.bool("auto-tune")?;
    if p.choice("boundary", &["periodic", "fixed"])? == 1 {
        cfg.boundary = Boundary::FixedEndpoints { start: p.f64("q-start")?, end: p.f64("q-end")? };
    }
    if let Some(w) = p.opt_f64("shift-width")? {
        cfg.shift_width = w;
    }
    if let Some(j) = p.opt_f64("shift-jitter")? {
        cfg.shift_jitter = j;
    }
    cfg.measure_every = p.usize("measure-every")?;
    cfg.max_separation = p.opt_usize("max-separation")?;
    cfg.position_quantum = p.opt_f64("position-quantum")?;
    let periodic = matches!(cfg.boundary, Boundary::Periodic);
    let (form, window) = if periodic {
        let form = [GapForm::Cosh, GapForm::Log][p.choice("gap-form", &["cosh", "log"])?];
        let window = p.opt_f64_list("gap-window")?;
        (form, window)
    } else {
        (GapForm::Cosh, None)
    };
    if let Some(w) = &window {
        if w.len() != 2 {
            return Err(Error::Usage(format!("--gap-window: expected tau1,tau2, got {} values", w.len())));
        }
    }
    p.finish()?;
    cfg.validate()?;

    let ensemble = run_sampler(&cfg)?;
    let observables: Vec<Observable> =
        Observable::ALL.into_iter().filter(|o| periodic || *o != Observable::EnergyVirial).collect();
    let mut obs_json = Map::new();
    let mut rows = Vec::new();
    for obs in &observables {
        let b = ensemble.blocking(*obs)?;
        let mut v = estimate_json(&b.estimate);
        v["block_size"] = json!(b.block_size);
        v["plateau"] = json!(b.plateau);
        obs_json.insert(obs.name().to_string(), v);
        rows.push(estimate_row(obs.name(), None, &b.estimate));
    }
    let mut result = json!({ "observables": obs_json });
    if periodic {
        let dt = cfg.lattice.spacing();
        let n_corr = ensemble.chains.first().map_or(0, |c| c.correlator.len());
        let seps: Vec<f64> = (0..n_corr).map(|k| k as f64 * dt).collect();
        let corr = correlation_function(&ensemble, &seps)?;
        result["correlator"] = Value::Array(
            seps.iter().zip(&corr).map(|(t, e)| { let mut v = estimate_json(e); v["tau"] = json!(t); v }).collect(),
        );
        rows.extend(seps.iter().zip(&corr).map(|(t, e)| estimate_row("correlator", Some(*t), e)));
        let gaps = effective_gap(&ensemble, form)?;
        result["gap_form"] = to_value(form);
        result["effective_gap"] = Value::Array(
            gaps.iter().map(|g| { let mut v = estimate_json(&g.gap); v["tau"] = json!(g.tau); v }).collect(),
        );
        rows.extend(gaps.iter().map(|g| estimate_row("effective_gap", Some(g.tau), &g.gap)));
        if let Some(w) = window {
            let g = gap_between(&ensemble, w[0], w[1], form)?;
            let mut v = estimate_json(&g);
            v["tau1"] = json!(w[0]);
            v["tau2"] = json!(w[1]);
            result["gap"] = v;
            rows.push(estimate_row("gap", Some(w[1]), &g));
        }
    }
    result["chains"] = Value::Array(
        ensemble
            .chains
            .iter()
            .map(|c| {
                json!({
                    "chain": c.chain,
                    "acceptance_rate": c.acceptance_rate,
                    "shift_acceptance_rate": c.shift_acceptance_rate,
                    "step_width": c.step_width,
                    "bin_size": c.bin_size,
                })
            })
            .collect(),
    );
    let mut run = Map::new();
    run.insert("acceptance_rate".into(), json!(ensemble.acceptance_rate));
    run.insert("step_width".into(), json!(ensemble.chains.first().map(|c| c.step_width)));
    run.insert("warnings".into(), json!(ensemble.warnings));
    let table = Table { header: vec!["observable", "tau", "mean", "std_error", "n_effective"], rows };
    Ok(Report { result, table: Some(table), seed: Some(cfg.seed), run })
}

fn spectrum_keys() -> Vec<Key> {
    let mut k = potential_keys("harmonic");
    k.extend([
        key("n-states", Some("4"), "eigenpairs returned"),
        key("q-min", None, "grid start; default sized from the potential"),
        key("q-max", None, "grid end"),
        key("n-points", None, "grid points"),
        key("scheme", Some("richardson"), "richardson | second-order"),
        key("eigenfunctions", Some("false"), "include eigenfunctions on the grid"),
        key("convergence", Some("false"), "report the change of E0, E1 under grid refinement"),
    ]);
    k
}

fn spectrum(p: &mut Params) -> Result<Report, Error> {
    let pot = read_potential(p)?;
    let n_states = p.usize("n-states")?;
    let base = SpectralGrid::default_for(&pot);
    let q_min = p.opt_f64("q-min")?.unwrap_or(base.q_min);
    let q_max = p.opt_f64("q-max")?.unwrap_or(base.q_max);
    let n_points = p.opt_usize("n-points")?.unwrap_or(base.n_points);
    let scheme = [Scheme::Richardson, Scheme::SecondOrder][p.choice("scheme", &["richardson", "second-order"])?];
    let with_functions = p.bool("eigenfunctions")?;
    let with_convergence = p.bool("convergence")?;
    p.finish()?;

    let grid = SpectralGrid::new(q_min, q_max, n_points)?;
    let s = diagonalize_with(&pot, &grid, n_states, scheme)?;
    let mut result = json!({
        "potential": pot,
        "grid": s.grid,
        "scheme": s.scheme,
        "eigenvalues": s.eigenvalues,
        "edge_amplitude": s.edge_amplitude,
    });
    if s.eigenvalues.len() >= 2 {
        result["splitting"] = json!(s.eigenvalues[1] - s.eigenvalues[0]);
    }
    if with_functions {
        result["q"] = json!((0..grid.n_points).map(|i| grid.point(i)).collect::<Vec<_>>());
        result["eigenfunctions"] = json!(s.eigenfunctions);
    }
    if with_convergence {
        result["convergence"] = to_value(convergence_check(&pot, &grid)?);
    }
    let rows = s.eigenvalues.iter().enumerate().map(|(j, e)| vec![json!(j), json!(e)]).collect();
    let table = Table { header: vec!["state", "energy"], rows };
    Ok(Report { result, table: Some(table), ..Report::default() })
}

fn instanton_keys() -> Vec<Key> {
    vec![
        key("report", Some("summary"), "summary | dilute-gas | band | trend | stability"),
        key("lambda", Some("1"), "quartic coupling"),
        key("a", Some("2"), "well position"),
        key("hbar", Some("1"), "Planck constant"),
        key("r", None, "fluctuation ratio; omitted: calibrate against the finite-difference splitting"),
        key("beta", Some("10"), "Euclidean extent (dilute-gas, band)"),
        key("endpoints", Some("same"), "same | opposite (dilute-gas)"),
        key("n-theta", Some("256"), "theta quadrature points (band)"),
        key("hbars", Some("0.5,0.6,0.8,1.0"), "comma-separated hbar values (trend, stability)"),
        key("reference-hbar", Some("1"), "reference hbar for R (trend)"),
    ]
}

fn instanton_params(p: &mut Params) -> Result<InstantonParams, Error> {
    let base = InstantonParams::new(p.f64("lambda")?, p.f64("a")?, p.f64("hbar")?)?;
    match p.opt_f64("r")? {
        Some(r) => base.with_r(r),
        None => Ok(base),
    }
}

fn calibrated(params: InstantonParams) -> Result<InstantonParams, Error> {
    if params.r.is_some() { Ok(params) } else { calibrate_r_from_oracle(&params) }
}

fn instanton(p: &mut Params) -> Result<Report, Error> {
    let report = p.choice("report", &["summary", "dilute-gas", "band", "trend", "stability"])?;
    let result = match report {
        0 => {
            let params = instanton_params(p)?;
            p.finish()?;
            let params = calibrated(params)?;
            let splitting = energy_splitting(&params)?;
            let half = 0.5 * params.hbar * params.omega;
            json!({
                "report": "summary",
                "params": params,
                "s_inst_quadrature": profile_action_quadrature(params.lambda, params.a)?,
                "tunnelling_rate": params.tunnelling_rate()?,
                "splitting": splitting,
                "energies": [half - 0.5 * splitting, half + 0.5 * splitting],
            })
        }
        1 => {
            let params = instanton_params(p)?;
            let beta = p.f64("beta")?;
            let ends = [Endpoints::SameWell, Endpoints::OppositeWell][p.choice("endpoints", &["same", "opposite"])?];
            p.finish()?;
            let params = calibrated(params)?;
            let mut out = to_value(dilute_gas_propagator(beta, &params, ends)?);
            out["report"] = json!("dilute-gas");
            out["endpoints"] = to_value(ends);
            out["params"] = to_value(params);
            out
        }
        2 => {
            let params = instanton_params(p)?;
            let beta = p.f64("beta")?;
            let n_theta = p.usize("n-theta")?;
            p.finish()?;
            let params = calibrated(params)?;
            let thetas: Vec<f64> = (0..16).map(|i| i as f64 * std::f64::consts::TAU / 16.0).collect();
            let band: Vec<Value> = thetas
                .iter()
                .map(|&t| Ok(json!({ "theta": t, "energy": periodic_band_energy(t, &params)? })))
                .collect::<Result<_, Error>>()?;
            let mut out = to_value(periodic_propagator(beta, &params, n_theta)?);
            out["report"] = json!("band");
            out["bandwidth"] = json!(bandwidth(&params)?);
            out["band"] = Value::Array(band);
            out["params"] = to_value(params);
            out
        }
        3 => {
            let (lambda, a) = (p.f64("lambda")?, p.f64("a")?);
            let hbars = p.f64_list("hbars")?;
            let reference = p.f64("reference-hbar")?;
            p.finish()?;
            json!({ "report": "trend", "points": semiclassical_trend(lambda, a, reference, &hbars)? })
        }
        _ => {
            let (lambda, a) = (p.f64("lambda")?, p.f64("a")?);
            let hbars = p.f64_list("hbars")?;
            p.finish()?;
            let mut out = to_value(r_stability(lambda, a, &hbars)?);
            out["report"] = json!("stability");
            out
        }
    };
    Ok(Report { result, ..Report::default() })
}

fn topology_keys() -> Vec<Key> {
    vec![
        key("report", Some("ab"), "ab | statistics | dirac"),
        key("base-phase", Some("0"), "relative phase without flux (ab)"),
        key("flux", Some("0"), "enclosed flux (ab)"),
        key("charge", Some("1"), "particle charge (ab)"),
        key("a1", Some("1"), "amplitude through slit 1 (ab)"),
        key("a2", Some("1"), "amplitude through slit 2 (ab)"),
        key("hbar", Some("1"), "Planck constant (ab, dirac)"),
        key("c", Some("1"), "speed of light (ab, dirac)"),
        key("dimension", Some("3"), "2 | 3 (statistics)"),
        key("phi", None, "exchange phase to test (statistics)"),
        key("n", Some("1"), "integer quantum (dirac)"),
        key("g", Some("1"), "magnetic charge (dirac)"),
    ]
}

fn topology(p: &mut Params) -> Result<Report, Error> {
    let report = p.choice("report", &["ab", "statistics", "dirac"])?;
    let result = match report {
        0 => {
            let (base, flux, charge) = (p.f64("base-phase")?, p.f64("flux")?, p.f64("charge")?);
            let (a1, a2) = (p.f64("a1")?, p.f64("a2")?);
            let (hbar, c) = (p.f64("hbar")?, p.f64("c")?);
            p.finish()?;
            let setup = InterferenceSetup::new(base, flux, charge, hbar, c)?;
            let phase = ab_relative_phase(&setup);
            json!({
                "report": "ab",
                "relative_phase": phase,
                "flux_phase": setup.flux_phase(),
                "flux_quantum": setup.flux_quantum(),
                "intensity": two_slit_intensity(Complex64::new(a1, 0.0), Complex64::new(a2, 0.0), &setup),
            })
        }
        1 => {
            let dim = p.u64("dimension")?;
            let phi = p.opt_f64("phi")?;
            p.finish()?;
            let dim = u32::try_from(dim).map_err(|_| Error::Unsupported(format!("dimension {dim}")))?;
            let allowed = statistics_solutions(dim)?;
            let mut out = json!({ "report": "statistics", "dimension": dim, "allowed": allowed });
            if let Some(phi) = phi {
                out["phi"] = json!(phi);
                out["phi_allowed"] = json!(StatisticsPhase::new(dim, phi).is_ok());
            }
            out
        }
        _ => {
            let (n, g) = (p.i64("n")?, p.f64("g")?);
            let (hbar, c) = (p.f64("hbar")?, p.f64("c")?);
            p.finish()?;
            let e = dirac_charge_unit(n, g, hbar, c)?;
            json!({
                "report": "dirac",
                "charge": e,
                "product": e * g,
                "product_in_hbar_c_over_2": e * g / (0.5 * hbar * c),
                "string_phase": dirac_string_phase(e, g, hbar, c),
            })
        }
    };
    Ok(Report { result, ..Report::default() })
}

pub fn find(name: &str) -> Option<&'static Command> {
    COMMANDS.iter().find(|c| c.name == name)
}

//! Subcommand implementations.

use std::path::Path;

use serde::Serialize;

use penfair_core::btcscript::{self, IdMode, Locking, MlScenario};
use penfair_core::cml::{run_cml_fresh, sample_inputs, xor_inputs, AdversaryPolicy, Behavior, CmlConfig, PartyOutcome};
use penfair_core::efficiency::{self, EfficiencyModel, EfficiencyReport};
use penfair_core::fairness::{annual_bps_to_continuous, rate_grid, rescale_rate, DiscountSpec, FairnessReport, TimeUnit};
use penfair_core::figures;
use penfair_core::schedule::{generate_schedule, Abort, ProtocolKind, ScenarioParams};

use crate::config::{FileConfig, Overrides, RunConfig};
use crate::output::{emit, sig, table, to_json};
use crate::{Cli, Command, Failure, Format, ProtocolArgs, RateArgs};

pub fn run(cli: Cli) -> Result<(), Failure> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let mut flags = Overrides { output: cli.output, format: cli.format, ..Overrides::default() };
    let absorb_protocol = |flags: &mut Overrides, p: &ProtocolArgs| {
        flags.protocol = p.protocol.clone();
        flags.n = p.n;
        flags.stages = p.stages;
        flags.q = p.q;
    };
    let absorb_rate = |flags: &mut Overrides, r: &RateArgs| {
        flags.rate_bps = r.rate_bps;
        flags.minutes_per_round = r.minutes_per_round;
    };
    match &cli.command {
        Command::Simulate { protocol, .. } => absorb_protocol(&mut flags, protocol),
        Command::Fairness { protocol, rate, .. } | Command::Efficiency { protocol, rate } => {
            absorb_protocol(&mut flags, protocol);
            absorb_rate(&mut flags, rate);
        }
        Command::Figures { rate, .. } | Command::Rates { rate } => absorb_rate(&mut flags, rate),
        Command::CmlDemo { parties, penalty_q, seed, .. } => {
            flags.n = *parties;
            flags.q = *penalty_q;
            flags.seed = *seed;
        }
        Command::BtcDemo { parties, penalty_q, .. } => {
            flags.n = *parties;
            flags.q = *penalty_q;
        }
    }
    let cfg = RunConfig::resolve(file, flags);
    match cli.command {
        Command::Simulate { executions, abort, .. } => simulate(&cfg, executions, abort.as_deref()),
        Command::Fairness { grid_points, grid_lo, grid_hi, tol, .. } => fairness(&cfg, grid_points, grid_lo, grid_hi, tol),
        Command::Efficiency { .. } => efficiency(&cfg),
        Command::Figures { out_dir, only, .. } => figures_cmd(&cfg, &out_dir, only.as_deref()),
        Command::Rates { .. } => rates(&cfg),
        Command::CmlDemo { timeout, adversary, .. } => cml_demo(&cfg, timeout, &adversary),
        Command::BtcDemo { timeout_height, scenario, .. } => btc_demo(&cfg, timeout_height, &scenario),
    }
}

fn protocol_of(cfg: &RunConfig) -> Result<ProtocolKind, Failure> {
    let name = cfg.protocol.as_deref().ok_or_else(|| Failure::Usage("--protocol is required".into()))?;
    name.parse().map_err(|e| Failure::Usage(format!("{e}")))
}

fn n_of(cfg: &RunConfig) -> Result<usize, Failure> {
    cfg.n.ok_or_else(|| Failure::Usage("--n is required".into()))
}

fn params_of(cfg: &RunConfig) -> Result<ScenarioParams, Failure> {
    let protocol = protocol_of(cfg)?;
    let n = n_of(cfg)?;
    Ok(ScenarioParams::new(protocol, n).with_q(cfg.q).with_stages(cfg.stages.unwrap_or(protocol.default_stages())))
}

fn spec_of(cfg: &RunConfig) -> DiscountSpec {
    DiscountSpec::from_annual_bps(cfg.rate_bps).with_minutes_per_round(cfg.minutes_per_round)
}

/// Parses `party@round` or `party@deposit|claim|lock|redeem`.
pub fn resolve_abort(text: &str, protocol: ProtocolKind, n: usize) -> Result<Abort, Failure> {
    let usage = || Failure::Usage(format!("bad --abort `{text}`; expected party@round or party@deposit|claim|lock|redeem"));
    let (party, when) = text.split_once('@').ok_or_else(usage)?;
    let party: usize = party.trim().parse().map_err(|_| usage())?;
    if party == 0 || party > n {
        return Err(Failure::Usage(format!("abort party {party} is outside 1..={n}")));
    }
    let (nn, i) = (n as u64, party as u64);
    let round = match (when.trim(), protocol.is_multilock_family()) {
        (w, _) if w.parse::<u64>().is_ok() => w.parse().map_err(|_| usage())?,
        ("deposit" | "lock", true) => 1,
        ("claim" | "redeem", true) => 2,
        ("deposit", false) if party == 1 => 1,
        ("deposit", false) => nn - i + 2,
        ("claim", false) if party == n => 2 * nn,
        ("claim", false) => nn + i,
        ("lock" | "redeem", false) => {
            return Err(Failure::Usage(format!("{protocol} has no {when} phase; use deposit or claim")));
        }
        _ => return Err(usage()),
    };
    Ok(Abort { party, round })
}

fn simulate(cfg: &RunConfig, executions: Option<usize>, abort: Option<&str>) -> Result<(), Failure> {
    let mut params = params_of(cfg)?;
    if let Some(e) = executions {
        params = params.with_executions(e);
    }
    if let Some(text) = abort {
        let a = resolve_abort(text, params.protocol, params.n)?;
        params = params.with_abort(a.party, a.round);
    }
    let schedule = generate_schedule(&params)?;
    let text = match cfg.format {
        Format::Csv => schedule.to_csv(),
        Format::Json => to_json(&schedule)?,
    };
    emit(cfg.output.as_deref(), &text)
}

fn fairness(cfg: &RunConfig, points: usize, lo: f64, hi: f64, tol: f64) -> Result<(), Failure> {
    if points == 0 || !(lo > 0.0 && hi >= lo) {
        return Err(Failure::Usage("the rate grid needs at least one point and 0 < lo ≤ hi".into()));
    }
    let schedule = generate_schedule(&params_of(cfg)?)?;
    let grid = rate_grid(lo, hi, points, cfg.minutes_per_round);
    let report = FairnessReport::build(&schedule, &spec_of(cfg), &grid, tol)?;
    emit(cfg.output.as_deref(), &to_json(&report)?)
}

fn model_of(cfg: &RunConfig) -> EfficiencyModel {
    EfficiencyModel { minutes_per_round: cfg.minutes_per_round, ..EfficiencyModel::default() }
}

fn efficiency(cfg: &RunConfig) -> Result<(), Failure> {
    let model = model_of(cfg);
    let protocols = match cfg.protocol {
        Some(_) => vec![protocol_of(cfg)?],
        None => figures::CONCRETE.to_vec(),
    };
    let ns = match cfg.n {
        Some(n) => vec![n],
        None => figures::N_GRID.to_vec(),
    };
    let mut reports: Vec<EfficiencyReport> = Vec::new();
    for p in protocols {
        for &n in &ns {
            reports.push(efficiency::report(p, n, cfg.stages.unwrap_or(p.default_stages()), &model)?);
        }
    }
    let text = match cfg.format {
        Format::Json => to_json(&reports)?,
        Format::Csv => table(
            &["protocol", "n", "stages", "tx_count", "rounds", "script_bits", "fee_usd", "exec_days"],
            reports.iter().map(|r| {
                vec![
                    r.protocol.short_name().to_string(),
                    r.n.to_string(),
                    r.r.to_string(),
                    r.tx_count.to_string(),
                    r.rounds.to_string(),
                    r.script_bits.to_string(),
                    sig(r.fee_usd, 6),
                    r.exec_days.to_string(),
                ]
            }),
        ),
    };
    emit(cfg.output.as_deref(), &text)
}

fn write_figure<T: Serialize>(
    dir: &Path,
    name: &str,
    format: Format,
    rows: &[T],
    header: &[&str],
    cells: impl Fn(&T) -> Vec<String>,
) -> Result<String, Failure> {
    let (file, text) = match format {
        Format::Csv => (format!("{name}.csv"), table(header, rows.iter().map(cells))),
        Format::Json => (format!("{name}.json"), to_json(rows)?),
    };
    let path = dir.join(&file);
    std::fs::write(&path, text)?;
    Ok(path.display().to_string())
}

pub const FIGURES: [&str; 6] = ["fig5", "fig6", "fig7", "fig8", "fig9", "fig10"];

fn figures_cmd(cfg: &RunConfig, dir: &Path, only: Option<&str>) -> Result<(), Failure> {
    if let Some(o) = only {
        if !FIGURES.contains(&o) {
            return Err(Failure::Usage(format!("unknown figure `{o}`; choose one of {}", FIGURES.join(", "))));
        }
    }
    std::fs::create_dir_all(dir)?;
    let model = model_of(cfg);
    let wanted = |name: &str| only.map_or(true, |o| o == name);
    let f = cfg.format;
    let mut written = Vec::new();
    if wanted("fig5") {
        let rows = figures::fig5(&model)?;
        written.push(write_figure(dir, "fig5", f, &rows, &["protocol", "n", "fee_usd"], |r| {
            vec![r.protocol.clone(), r.n.to_string(), sig(r.fee_usd, 6)]
        })?);
    }
    if wanted("fig6") {
        let rows = figures::fig6(&model)?;
        written.push(write_figure(dir, "fig6", f, &rows, &["protocol", "n", "days"], |r| {
            vec![r.protocol.clone(), r.n.to_string(), r.days.to_string()]
        })?);
    }
    if wanted("fig7") {
        let rows = figures::fig7()?;
        written.push(write_figure(dir, "fig7", f, &rows, &["protocol", "n", "bits"], |r| {
            vec![r.protocol.clone(), r.n.to_string(), r.bits.to_string()]
        })?);
    }
    if wanted("fig8") {
        let rows = figures::fig8(55)?;
        written.push(write_figure(dir, "fig8", f, &rows, &["protocol", "party", "total_q"], |r| {
            vec![r.protocol.clone(), r.party.to_string(), r.total_q.to_string()]
        })?);
    }
    if wanted("fig9") {
        let rows = figures::fig9(55)?;
        written.push(write_figure(dir, "fig9", f, &rows, &["protocol", "party", "rounds"], |r| {
            vec![r.protocol.clone(), r.party.to_string(), r.rounds.to_string()]
        })?);
    }
    if wanted("fig10") {
        let rows = figures::fig10(55, &spec_of(cfg))?;
        written.push(write_figure(dir, "fig10", f, &rows, &["protocol", "party", "chi_bps"], |r| {
            vec![r.protocol.clone(), r.party.to_string(), sig(r.chi_bps, 6)]
        })?);
    }
    let mut text = written.join("\n");
    text.push('\n');
    emit(cfg.output.as_deref(), &text)
}

#[derive(Serialize)]
struct RateRow {
    unit: &'static str,
    delta: f64,
}

fn rates(cfg: &RunConfig) -> Result<(), Failure> {
    if !(cfg.rate_bps >= 0.0) || !(cfg.minutes_per_round > 0.0) {
        return Err(Failure::Usage("--bps must be non-negative and --minutes-per-round positive".into()));
    }
    let year = annual_bps_to_continuous(cfg.rate_bps);
    let minute = rescale_rate(year, TimeUnit::Minute)?;
    let rows = vec![
        RateRow { unit: "year", delta: year },
        RateRow { unit: "hour", delta: rescale_rate(year, TimeUnit::Hour)? },
        RateRow { unit: "minute", delta: minute },
        RateRow { unit: "round", delta: minute * cfg.minutes_per_round },
    ];
    let text = match cfg.format {
        Format::Json => to_json(&rows)?,
        Format::Csv => table(&["unit", "delta"], rows.iter().map(|r| vec![r.unit.to_string(), sig(r.delta, 6)])),
    };
    emit(cfg.output.as_deref(), &text)
}

fn party_list(text: &str) -> Result<Vec<usize>, Failure> {
    text.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| Failure::Usage(format!("bad party list `{text}`"))))
        .collect()
}

/// `none`, `lock-abort[:i,…]`, `redeem-abort:i,…` or `wrong-witness:i,…`.
pub fn parse_adversary(text: &str, n: usize) -> Result<AdversaryPolicy, Failure> {
    let (kind, list) = match text.split_once(':') {
        Some((k, l)) => (k, Some(l)),
        None => (text, None),
    };
    let behavior = match kind {
        "none" | "honest" => return Ok(AdversaryPolicy::honest()),
        "lock-abort" => Behavior::AbortAtLock,
        "redeem-abort" => Behavior::AbortAtRedeem,
        "wrong-witness" => Behavior::WrongWitness,
        _ => return Err(Failure::Usage(format!("unknown adversary `{text}`"))),
    };
    let parties = match list {
        Some(l) => party_list(l)?,
        None if behavior == Behavior::AbortAtLock => vec![n],
        None => return Err(Failure::Usage(format!("`{kind}` needs a party list, e.g. {kind}:1"))),
    };
    if let Some(&p) = parties.iter().find(|&&p| p == 0 || p > n) {
        return Err(Failure::Usage(format!("adversary party {p} is outside 1..={n}")));
    }
    Ok(AdversaryPolicy::new(behavior, parties))
}

fn outcome_label(o: &PartyOutcome) -> String {
    match o {
        PartyOutcome::Output(y) => format!("output:{}", hex::encode(y)),
        PartyOutcome::Compensated(c) => format!("compensated:{c}"),
        PartyOutcome::Penalized(c) => format!("penalized:{c}"),
        PartyOutcome::AbortedCleanly => "aborted".into(),
    }
}

fn cml_demo(cfg: &RunConfig, timeout: u64, adversary: &str) -> Result<(), Failure> {
    let n = cfg.n.unwrap_or(3);
    let adv = parse_adversary(adversary, n)?;
    let config = CmlConfig { n, q: cfg.q, timeout, seed: cfg.seed };
    let inputs = sample_inputs(n, 8, cfg.seed);
    let (run, ledger) = run_cml_fresh(config, &inputs, &xor_inputs, &adv)?;
    ledger.invariant_check()?;
    let text = match cfg.format {
        Format::Json => to_json(&run)?,
        Format::Csv => {
            let mut t = table(
                &["party", "role", "outcome", "net_change"],
                run.outcomes.iter().enumerate().map(|(k, o)| {
                    let p = k + 1;
                    let role = if adv.corrupted.contains(&p) { "corrupted" } else { "honest" };
                    vec![p.to_string(), role.into(), outcome_label(o), run.net_change[k].to_string()]
                }),
            );
            t.push('\n');
            t.push_str(&run.schedule.to_csv());
            t
        }
    };
    emit(cfg.output.as_deref(), &text)
}

fn describe_tx(out: &mut String, title: &str, tx: &btcscript::Tx) {
    out.push_str(&format!("# {title} txid(segwit)={}\n", hex::encode(tx.txid(IdMode::Segwit))));
    out.push_str(&tx.to_hex());
    out.push('\n');
    for o in &tx.outputs {
        if let Locking::Inline(s) = &o.locking {
            out.push_str(&format!("## output {} value {}\n{}\n", o.idx, o.value, s.disassemble()));
        }
    }
    for (k, i) in tx.inputs.iter().enumerate() {
        if !i.witness.is_empty() {
            out.push_str(&format!("## witness {k}: {}\n", i.witness));
        }
    }
}

fn btc_demo(cfg: &RunConfig, tau: u64, scenario: &str) -> Result<(), Failure> {
    let n = cfg.n.unwrap_or(2);
    let scenario = match scenario {
        "honest" => Some(MlScenario::Honest),
        "malleate" => None,
        s => match s.strip_prefix("abort:").map(str::parse::<usize>) {
            Some(Ok(i)) if (1..=n).contains(&i) => Some(MlScenario::Abort(i)),
            _ => return Err(Failure::Usage(format!("bad --scenario `{s}`; expected honest, abort:<1..={n}> or malleate"))),
        },
    };
    let text = match scenario {
        None => {
            let report = btcscript::malleability_demo(cfg.q, tau)?;
            match cfg.format {
                Format::Json => to_json(&report)?,
                Format::Csv => table(
                    &["mode", "lock_id_before", "lock_id_after", "dependent_valid", "simplified_mutation_accepted", "dependent_error"],
                    report.cases.iter().map(|c| {
                        vec![
                            format!("{:?}", c.mode).to_lowercase(),
                            c.lock_id_before.clone(),
                            c.lock_id_after.clone(),
                            c.dependent_valid.to_string(),
                            c.simplified_mutation_accepted.to_string(),
                            c.dependent_error.clone().unwrap_or_default(),
                        ]
                    }),
                ),
            }
        }
        Some(s) => {
            let report = btcscript::run_ml_flow(n, cfg.q, tau, s, IdMode::Segwit)?;
            let escrow = btcscript::escrow_ml_balances(n, cfg.q, tau, s)?;
            if escrow != report.balances {
                return Err(Failure::Invariant(format!(
                    "script balances {:?} differ from escrow balances {escrow:?}",
                    report.balances
                )));
            }
            match cfg.format {
                Format::Json => to_json(&report)?,
                Format::Csv => {
                    let mut out = String::new();
                    describe_tx(&mut out, "lock", &report.lock_tx);
                    for (k, tx) in report.redeems.iter().enumerate() {
                        describe_tx(&mut out, &format!("redeem {k}"), tx);
                    }
                    for (k, tx) in report.compensations.iter().enumerate() {
                        describe_tx(&mut out, &format!("compensate {k}"), tx);
                    }
                    out.push_str(&table(
                        &["party", "initial", "final", "net"],
                        (0..n).map(|k| {
                            vec![
                                (k + 1).to_string(),
                                report.initial[k].to_string(),
                                report.balances[k].to_string(),
                                report.net[k].to_string(),
                            ]
                        }),
                    ));
                    out
                }
            }
        }
    };
    emit(cfg.output.as_deref(), &text)
}

//! Command-line front end: every run logs its resolved auction spec to
//! stderr and writes results to stdout or, with `--out`, to files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use auction_levelk::design::{distance, optimize_p};
use auction_levelk::equilibrium::{continuous_equilibrium, solve_equilibrium, verify_equilibrium};
use auction_levelk::estimation::{
    assign_levels, correlate, fit_mixture, jackknife_se, prediction_rmse, simulate_dataset, BidDataset, ChoiceLevelMap,
    FitConfig, Grouping, Predictor, SimulationConfig, TypeSet,
};
use auction_levelk::levelk::{ch_levels, iterate_levels, Level0Spec, Tiebreak};
use auction_levelk::rational::{self, Q};
use auction_levelk::strategy::BehaviouralStrategy;
use auction_levelk::{AuctionSpec, Format};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "auction-levelk", version, about = "Equilibrium, level-k and mixture-model tools for discrete auctions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Args, Clone, Debug)]
struct Output {
    /// Directory for output files; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    output_format: Option<OutputFormat>,
}

/// Auction spec, from a JSON file or inline flags.
#[derive(Args, Clone, Debug)]
struct SpecArgs {
    #[arg(long, conflicts_with_all = ["format", "n", "x", "p", "bid_step", "alpha"])]
    spec: Option<PathBuf>,
    /// all_pay or first_price.
    #[arg(long)]
    format: Option<Format>,
    #[arg(long, default_value_t = 2)]
    n: u32,
    #[arg(long, default_value_t = 100)]
    x: u32,
    /// Bid survival probability, e.g. 1/2 or 0.5 (first-price only).
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    bid_step: Option<u32>,
    /// CRRA exponent.
    #[arg(long)]
    alpha: Option<f64>,
}

impl SpecArgs {
    fn resolve(&self) -> Result<AuctionSpec> {
        let spec = match &self.spec {
            Some(path) => {
                AuctionSpec::from_json_file(path).with_context(|| format!("reading spec {}", path.display()))?
            }
            None => {
                let Some(format) = self.format else {
                    bail!("either --spec or --format is required");
                };
                let mut spec = AuctionSpec::new(format, self.n, self.x)?;
                if let Some(p) = &self.p {
                    spec = spec.with_p(rational::parse(p)?)?;
                }
                if let Some(step) = self.bid_step {
                    spec = spec.with_bid_step(step)?;
                }
                if let Some(alpha) = self.alpha {
                    spec = spec.with_alpha(alpha)?;
                }
                spec
            }
        };
        eprintln!("resolved spec: {}", spec.to_json());
        Ok(spec)
    }
}

#[derive(Args, Clone, Debug)]
struct LevelArgs {
    /// Level-0 anchor: uniform or truthful.
    #[arg(long, default_value = "uniform")]
    l0: Level0Spec,
    /// Level-k tie-break among optimal bids: low or high.
    #[arg(long, default_value = "low")]
    tiebreak: Tiebreak,
}

#[derive(Subcommand)]
enum Command {
    /// Symmetric equilibrium: strategy CSV and jump vector JSON.
    Solve {
        #[command(flatten)]
        spec: SpecArgs,
        /// Emit the continuous-value approximation at every integer value instead.
        #[arg(long)]
        continuous: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Level-k bidding functions (`level,value,bid`) and cycle metadata.
    Levelk {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 10)]
        k_max: u32,
        #[command(flatten)]
        levels: LevelArgs,
        /// Poisson mean; switches to cognitive-hierarchy levels.
        #[arg(long)]
        ch_tau: Option<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Cycle detection and the maximum bid of every level.
    Cycle {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 100)]
        k_max: u32,
        #[command(flatten)]
        levels: LevelArgs,
        #[command(flatten)]
        output: Output,
    },
    /// Survival probability that best separates equilibrium from level-1.
    OptimizeP {
        #[arg(long)]
        n: u32,
        #[arg(long, default_value_t = 100.0)]
        x: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Area between the continuous equilibrium and level-1 curves.
    Distance {
        #[arg(long, default_value_t = 2)]
        n: u32,
        #[arg(long, default_value_t = 100.0)]
        x: f64,
        #[arg(long)]
        p: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Fit the mixture model to a bid dataset.
    Estimate {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated types: eq, l1, l2, ...
        #[arg(long, default_value = "eq,l1,l2,l3", value_delimiter = ',')]
        types: Vec<String>,
        #[arg(long, default_value = "subject")]
        grouping: Grouping,
        /// Keep only records of this treatment.
        #[arg(long)]
        treatment: Option<String>,
        #[arg(long)]
        shared_sigma: bool,
        #[arg(long, default_value_t = 10)]
        starts: usize,
        /// Add leave-one-subject-out standard errors.
        #[arg(long)]
        jackknife: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        levels: LevelArgs,
        #[command(flatten)]
        output: Output,
    },
    /// Draw a synthetic bid dataset from the mixture model.
    Simulate {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, value_delimiter = ',')]
        types: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        shares: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        sigmas: Vec<f64>,
        #[arg(long, default_value_t = 84)]
        subjects: usize,
        #[arg(long, default_value_t = 2)]
        rounds: u32,
        #[arg(long, default_value_t = 10)]
        values_per_round: usize,
        #[arg(long, default_value = "subject")]
        grouping: Grouping,
        #[arg(long, default_value = "T1")]
        treatment: String,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        levels: LevelArgs,
        #[command(flatten)]
        output: Output,
    },
    /// Most likely level and noise for every subject.
    AssignLevels {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        data: PathBuf,
        /// Candidate levels.
        #[arg(long, default_value = "1,2,3", value_delimiter = ',')]
        levels_to_try: Vec<u32>,
        /// CSV `subject_id,choice` to correlate assigned levels with.
        #[arg(long)]
        against: Option<PathBuf>,
        /// JSON map from choices in `--against` to levels; without it the
        /// choices are taken as levels.
        #[arg(long)]
        choice_map: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        levels: LevelArgs,
        #[command(flatten)]
        output: Output,
    },
    /// Largest regret of a strategy CSV (`value,bid,probability`).
    Verify {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        strategy: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Root-mean-square prediction error of a model on a bid dataset.
    Rmse {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        data: PathBuf,
        /// eq, lK, or levelk (best of levels 1-3 per bid).
        #[arg(long)]
        predictor: String,
        #[command(flatten)]
        levels: LevelArgs,
        #[command(flatten)]
        output: Output,
    },
}

/// Writes `content` to `dir/name`, or to stdout without `--out`.
fn emit(output: &Output, name: &str, content: &str) -> Result<()> {
    match &output.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(name);
            fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content.as_bytes())?;
        }
    }
    Ok(())
}

fn to_json(value: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn read_dataset(path: &Path) -> Result<BidDataset> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BidDataset::read_csv(file, &path.display().to_string())?)
}

fn strategy_csv(spec: &AuctionSpec, s: &BehaviouralStrategy) -> Result<String> {
    let mut buf = Vec::new();
    s.write_csv(spec, &mut buf)?;
    Ok(String::from_utf8(buf)?)
}

fn solve(spec: &AuctionSpec, continuous: bool, output: &Output) -> Result<()> {
    let fmt = output.output_format.unwrap_or(OutputFormat::Csv);
    if continuous {
        let curve = (0..=spec.x())
            .map(|v| continuous_equilibrium(spec, f64::from(v)).map(|b| (v, b)))
            .collect::<auction_levelk::Result<Vec<_>>>()?;
        let content = match fmt {
            OutputFormat::Csv => {
                std::iter::once("value,bid\n".to_string()).chain(curve.iter().map(|(v, b)| format!("{v},{b}\n"))).collect()
            }
            OutputFormat::Json => to_json(&curve.iter().map(|(v, b)| json!({"value": v, "bid": b})).collect::<Vec<_>>())?,
        };
        let name = if fmt == OutputFormat::Csv { "continuous.csv" } else { "continuous.json" };
        return emit(output, name, &content);
    }
    let eq = solve_equilibrium(spec)?;
    let summary = to_json(&eq.summary())?;
    let csv = strategy_csv(spec, &eq.strategy)?;
    if output.out.is_some() {
        emit(output, "strategy.csv", &csv)?;
        emit(output, "jumps.json", &summary)
    } else {
        match fmt {
            OutputFormat::Csv => emit(output, "strategy.csv", &csv),
            OutputFormat::Json => emit(output, "jumps.json", &summary),
        }
    }
}

fn levelk(spec: &AuctionSpec, k_max: u32, args: &LevelArgs, ch_tau: Option<&str>, output: &Output) -> Result<()> {
    if k_max == 0 {
        bail!("--k-max must be at least 1");
    }
    let (levels, cycle) = match ch_tau {
        Some(tau) => {
            let tau: Q = rational::parse(tau)?;
            (ch_levels(spec, &args.l0, &tau, k_max, args.tiebreak)?, None)
        }
        None => {
            let pred = iterate_levels(spec, &args.l0, k_max, args.tiebreak)?;
            (pred.levels().to_vec(), pred.cycle)
        }
    };
    let mut csv = String::from("level,value,bid\n");
    for (k, level) in levels.iter().enumerate() {
        for (v, b) in level.bids().iter().enumerate() {
            csv.push_str(&format!("{},{v},{b}\n", k + 1));
        }
    }
    let meta = to_json(&json!({
        "tiebreak": args.tiebreak,
        "cognitive_hierarchy_tau": ch_tau,
        "cycle": cycle,
        "max_bids": levels.iter().map(|l| l.max_bid()).collect::<Vec<_>>(),
    }))?;
    if output.out.is_some() {
        emit(output, "levels.csv", &csv)?;
        emit(output, "cycle.json", &meta)
    } else {
        match output.output_format.unwrap_or(OutputFormat::Csv) {
            OutputFormat::Csv => emit(output, "levels.csv", &csv),
            OutputFormat::Json => {
                let bids: Vec<&[u32]> = levels.iter().map(|l| l.bids()).collect();
                emit(output, "levels.json", &to_json(&json!({
                    "tiebreak": args.tiebreak,
                    "cognitive_hierarchy_tau": ch_tau,
                    "cycle": cycle,
                    "levels": bids,
                }))?)
            }
        }
    }
}

fn cycle(spec: &AuctionSpec, k_max: u32, args: &LevelArgs, output: &Output) -> Result<()> {
    if k_max == 0 {
        bail!("--k-max must be at least 1");
    }
    let pred = iterate_levels(spec, &args.l0, k_max, args.tiebreak)?;
    let maxes = pred.max_bids();
    match output.output_format.unwrap_or(OutputFormat::Json) {
        OutputFormat::Json => emit(output, "cycle.json", &to_json(&json!({"cycle": pred.cycle, "max_bids": maxes}))?),
        OutputFormat::Csv => {
            let mut csv = String::from("level,max_bid\n");
            for (k, m) in maxes.iter().enumerate() {
                csv.push_str(&format!("{},{m}\n", k + 1));
            }
            if let Some(c) = pred.cycle {
                eprintln!("cycle: period {} from level {}", c.period, c.start_level);
            }
            emit(output, "max_bids.csv", &csv)
        }
    }
}

fn scalar_or_json(output: &Output, name: &str, value: f64, object: serde_json::Value) -> Result<()> {
    match output.output_format {
        Some(OutputFormat::Json) => emit(output, &format!("{name}.json"), &to_json(&object)?),
        Some(OutputFormat::Csv) => emit(output, &format!("{name}.csv"), &format!("{name}\n{value}\n")),
        None => emit(output, &format!("{name}.txt"), &format!("{value}\n")),
    }
}

#[allow(clippy::too_many_arguments)]
fn estimate(
    spec: &AuctionSpec,
    data: &Path,
    types: &[String],
    grouping: Grouping,
    treatment: Option<&str>,
    config: &FitConfig,
    jackknife: bool,
    levels: &LevelArgs,
    output: &Output,
) -> Result<()> {
    let mut dataset = read_dataset(data)?;
    if let Some(t) = treatment {
        dataset = dataset.filter(|r| r.treatment == t);
        if dataset.is_empty() {
            bail!("no records for treatment {t:?}");
        }
    }
    let ts = TypeSet::from_names(spec, types, &levels.l0, levels.tiebreak)?;
    let mut fit = fit_mixture(&dataset, spec, &ts, grouping, config)?;
    if jackknife {
        fit.standard_errors = Some(jackknife_se(&dataset, spec, &ts, grouping, config, &fit)?);
    }
    match output.output_format.unwrap_or(OutputFormat::Json) {
        OutputFormat::Json => emit(output, "fit.json", &to_json(&fit)?),
        OutputFormat::Csv => {
            let mut csv = String::from("type,share,sigma,share_se,sigma_se\n");
            for (i, name) in fit.types.iter().enumerate() {
                let se = fit.standard_errors.as_ref();
                let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
                csv.push_str(&format!(
                    "{name},{},{},{},{}\n",
                    fit.shares[i],
                    opt(fit.sigmas[i]),
                    opt(se.map(|s| s.shares[i])),
                    opt(se.map(|s| s.sigmas[i]))
                ));
            }
            eprintln!("log-likelihood {} bic {} observations {}", fit.log_likelihood, fit.bic, fit.n_obs);
            emit(output, "fit.csv", &csv)
        }
    }
}

fn read_against(path: &Path, map: Option<&Path>) -> Result<Vec<(String, f64)>> {
    let map = match map {
        Some(p) => Some(ChoiceLevelMap::from_json_str(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?),
        None => None,
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "subject_id,choice" => {}
        _ => bail!("{}:1: expected header subject_id,choice", path.display()),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [subject, choice] = fields[..] else {
            bail!("{}:{}: expected two fields", path.display(), i + 1);
        };
        let choice: u32 =
            choice.parse().with_context(|| format!("{}:{}: field choice: cannot parse {choice:?}", path.display(), i + 1))?;
        let level = match &map {
            Some(m) => m.level(choice).with_context(|| format!("{}:{}", path.display(), i + 1))?,
            None => choice,
        };
        out.push((subject.to_string(), f64::from(level)));
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { spec, continuous, output } => solve(&spec.resolve()?, continuous, &output),
        Command::Levelk { spec, k_max, levels, ch_tau, output } => {
            levelk(&spec.resolve()?, k_max, &levels, ch_tau.as_deref(), &output)
        }
        Command::Cycle { spec, k_max, levels, output } => cycle(&spec.resolve()?, k_max, &levels, &output),
        Command::OptimizeP { n, x, output } => {
            eprintln!("resolved design: n={n} x={x}");
            let r = optimize_p(n, x)?;
            match output.output_format.unwrap_or(OutputFormat::Json) {
                OutputFormat::Json => emit(&output, "optimize_p.json", &to_json(&json!({
                    "n": n,
                    "x": x,
                    "p_star": r.p_star,
                    "distance": r.distance_at_p_star,
                    "roots": r.roots,
                }))?),
                OutputFormat::Csv => {
                    let mut csv = String::from("p,distance,optimal\n");
                    for c in &r.roots {
                        csv.push_str(&format!("{},{},{}\n", c.p, c.distance, c.p == r.p_star));
                    }
                    emit(&output, "optimize_p.csv", &csv)
                }
            }
        }
        Command::Distance { n, x, p, output } => {
            eprintln!("resolved design: n={n} x={x} p={p}");
            let d = distance(n, x, p)?;
            scalar_or_json(&output, "distance", d, json!({"n": n, "x": x, "p": p, "distance": d}))
        }
        Command::Estimate {
            spec,
            data,
            types,
            grouping,
            treatment,
            shared_sigma,
            starts,
            jackknife,
            seed,
            levels,
            output,
        } => {
            let config = FitConfig { starts, seed, shared_sigma, ..Default::default() };
            estimate(&spec.resolve()?, &data, &types, grouping, treatment.as_deref(), &config, jackknife, &levels, &output)
        }
        Command::Simulate {
            spec,
            types,
            shares,
            sigmas,
            subjects,
            rounds,
            values_per_round,
            grouping,
            treatment,
            seed,
            levels,
            output,
        } => {
            let spec = spec.resolve()?;
            if types.is_empty() {
                bail!("--types is required");
            }
            let ts = TypeSet::from_names(&spec, &types, &levels.l0, levels.tiebreak)?;
            let config = SimulationConfig { n_subjects: subjects, rounds, values_per_round, grouping, treatment, seed };
            let data = simulate_dataset(&spec, &ts, &shares, &sigmas, &config)?;
            let mut buf = Vec::new();
            data.write_csv(&mut buf)?;
            emit(&output, "bids.csv", &String::from_utf8(buf)?)
        }
        Command::AssignLevels {
            spec,
            data,
            levels_to_try,
            against,
            choice_map,
            bootstrap,
            seed,
            levels,
            output,
        } => {
            let spec = spec.resolve()?;
            let dataset = read_dataset(&data)?;
            let names: Vec<String> = levels_to_try.iter().map(|k| format!("l{k}")).collect();
            let ts = TypeSet::from_names(&spec, &names, &levels.l0, levels.tiebreak)?;
            let assigned = assign_levels(&dataset, &spec, &ts)?;
            let level_of = |i: usize| f64::from(levels_to_try[i]);
            let correlation = match &against {
                Some(path) => {
                    let other = read_against(path, choice_map.as_deref())?;
                    let (xs, ys): (Vec<f64>, Vec<f64>) = assigned
                        .iter()
                        .filter_map(|a| {
                            other.iter().find(|(s, _)| *s == a.subject_id).map(|(_, l)| (level_of(a.type_index), *l))
                        })
                        .unzip();
                    Some(correlate(&xs, &ys, bootstrap, seed)?)
                }
                None => None,
            };
            match output.output_format.unwrap_or(OutputFormat::Csv) {
                OutputFormat::Json => {
                    let rows: Vec<_> = assigned
                        .iter()
                        .map(|a| {
                            json!({
                                "subject_id": a.subject_id,
                                "level": levels_to_try[a.type_index],
                                "sigma": a.sigma,
                                "log_likelihood": a.log_likelihood,
                                "tie": a.tie,
                            })
                        })
                        .collect();
                    emit(&output, "levels.json", &to_json(&json!({"assignments": rows, "correlation": correlation}))?)
                }
                OutputFormat::Csv => {
                    let mut csv = String::from("subject_id,level,sigma,log_likelihood,tie\n");
                    for a in &assigned {
                        csv.push_str(&format!(
                            "{},{},{},{},{}\n",
                            a.subject_id, levels_to_try[a.type_index], a.sigma, a.log_likelihood, a.tie
                        ));
                    }
                    if let Some(c) = &correlation {
                        let content = to_json(c)?;
                        if output.out.is_some() {
                            emit(&output, "correlation.json", &content)?;
                        } else {
                            eprint!("correlation: {content}");
                        }
                    }
                    emit(&output, "levels.csv", &csv)
                }
            }
        }
        Command::Verify { spec, strategy, output } => {
            let spec = spec.resolve()?;
            let file = fs::File::open(&strategy).with_context(|| format!("opening {}", strategy.display()))?;
            let s = BehaviouralStrategy::read_csv(&spec, file, &strategy.display().to_string())?;
            let regret = verify_equilibrium(&spec, &s)?;
            let value = rational::to_f64(&regret);
            let object = json!({
                "max_regret": rational::display(&regret),
                "max_regret_decimal": value,
                "is_equilibrium": regret <= Q::from_float(1e-9).expect("finite"),
            });
            scalar_or_json(&output, "max_regret", value, object)
        }
        Command::Rmse { spec, data, predictor, levels, output } => {
            let spec = spec.resolve()?;
            let dataset = read_dataset(&data)?;
            dataset.validate(&spec)?;
            let pred = if predictor == "levelk" {
                let ts = TypeSet::from_names(&spec, &["l1", "l2", "l3"], &levels.l0, levels.tiebreak)?;
                Predictor::BestOf(ts.types().iter().map(|t| t.prediction.clone()).collect())
            } else {
                let ts = TypeSet::from_names(&spec, &[predictor.as_str()], &levels.l0, levels.tiebreak)?;
                Predictor::Single(ts.types()[0].prediction.clone())
            };
            let r = prediction_rmse(&dataset, &pred)?;
            scalar_or_json(&output, "rmse", r, json!({"predictor": predictor, "rmse": r, "n": dataset.len()}))
        }
    }
}

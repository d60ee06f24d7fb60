use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nacart_core::bench::{
    emit_svg, estimate_bayes_rate, render_curves, run_experiment, selection_frequency_experiment, write_csv, ExperimentConfig, Learner,
    Method, MissingOn, PlotKind, Series,
};
use nacart_core::csvio::{default_names, format_f64, format_sig17, read_matrix_file, read_target_file, write_matrix, write_target};
use nacart_core::ensemble::{fit_boosting, fit_forest, BoostParams, EnsembleModel, ForestParams};
use nacart_core::impute::{fit_constant, fit_gaussian_em, ConstantKind, EmConfig, GaussianImputer, ShrinkMode};
use nacart_core::seed::{self, tag};
use nacart_core::synth::{ampute, gen_model, gen_predictive, AmputationSpec, Mechanism, ModelKind, ModelSpec};
use nacart_core::theory::{mc_stump_risk, theory_curves};
use nacart_core::tree::{dump, fit_tree, ProbMode, Strategy, TreeParams};
use nacart_core::IncompleteMatrix;

use crate::config::ConfigError;
use crate::{
    AmputeArgs, BenchArgs, Cli, Command, EmArgs, FitArgs, Format, ImputeArgs, LearnerArgs, ModelArgs, PatternArgs, SelectArgs,
    SimulateArgs, TheoryArgs,
};

fn bad(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Core errors raised while checking arguments are configuration errors.
fn conf<T>(r: nacart_core::Result<T>) -> Result<T> {
    r.map_err(|e| bad(e.to_string()))
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn csv_only(cli: &Cli, what: &str) -> Result<()> {
    if cli.format == Format::Svg {
        return Err(bad(format!("{what} has no SVG output")));
    }
    Ok(())
}

fn svg_path(cli: &Cli) -> Result<&Path> {
    cli.out.as_deref().ok_or_else(|| bad("--format svg needs --out"))
}

fn read_features(path: &Path) -> Result<(Vec<String>, IncompleteMatrix)> {
    read_matrix_file(path).with_context(|| format!("reading {}", path.display()))
}

/// Parses `start:stop:step` (inclusive) or a comma list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad(format!("bad number {t:?} in grid {s:?}")));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if !(step > 0.0) || b < a {
                return Err(bad(format!("grid {s:?} needs start <= stop and step > 0")));
            }
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|k| a + k as f64 * step).collect())
        }
        [_] => s.split(',').map(num).collect(),
        _ => Err(bad(format!("grid {s:?} is neither start:stop:step nor a comma list"))),
    }
}

fn model_spec(a: &ModelArgs) -> Result<ModelSpec> {
    let kind = conf(ModelKind::parse(&a.model))?;
    let spec = ModelSpec { kind, d: a.d, rho: a.rho, noise_sd: a.noise_sd };
    conf(spec.validate())?;
    Ok(spec)
}

fn pattern_spec(a: &PatternArgs, d: usize) -> Result<Option<AmputationSpec>> {
    let mechanism = match a.pattern.as_str() {
        "none" => return Ok(None),
        "mcar" => Mechanism::Mcar { p: a.p },
        "mnar" => Mechanism::QuantileMnar { p: a.p },
        "predictive" => Mechanism::Predictive { p: a.p, shift: a.shift },
        other => return Err(bad(format!("unknown pattern {other:?} (mcar|mnar|predictive|none)"))),
    };
    if a.cols.contains(&0) {
        return Err(bad("columns are 1-based"));
    }
    let target_columns = match (a.cols.is_empty(), mechanism) {
        (false, _) => a.cols.iter().map(|c| c - 1).collect(),
        (true, Mechanism::Predictive { .. }) => vec![0],
        (true, _) => (0..d).collect(),
    };
    let spec = AmputationSpec { mechanism, target_columns };
    conf(spec.validate(d))?;
    Ok(Some(spec))
}

fn tree_params(a: &LearnerArgs, base: TreeParams) -> TreeParams {
    TreeParams {
        max_depth: a.max_depth.unwrap_or(base.max_depth),
        min_leaf: a.min_leaf.unwrap_or(base.min_leaf),
        min_split: a.min_split.unwrap_or(base.min_split),
        cp: a.cp.unwrap_or(base.cp),
        ..base
    }
}

struct Params {
    tree: TreeParams,
    forest: ForestParams,
    boost: BoostParams,
}

fn learner_params(a: &LearnerArgs, d: usize) -> Result<Params> {
    let tree = TreeParams { mtry: a.mtry.or(TreeParams::default().mtry), ..tree_params(a, TreeParams::default()) };
    let fd = ForestParams::default();
    let forest = ForestParams { b: a.trees.unwrap_or(fd.b), mtry: a.mtry.or(fd.mtry), tree: tree_params(a, fd.tree.clone()), ..fd };
    let bd = BoostParams::default();
    let boost = BoostParams {
        rounds: a.rounds.unwrap_or(bd.rounds),
        learning_rate: a.lr.unwrap_or(bd.learning_rate),
        tree: tree_params(a, bd.tree.clone()),
    };
    for t in [&tree, &forest.tree, &boost.tree] {
        conf(t.validate(d))?;
    }
    if forest.b == 0 {
        return Err(bad("--trees must be at least 1"));
    }
    if let Some(m) = forest.mtry {
        if m == 0 || m > d {
            return Err(bad(format!("--mtry {m} outside 1..={d}")));
        }
    }
    if !(boost.learning_rate > 0.0 && boost.learning_rate.is_finite()) {
        return Err(bad("--lr must be positive"));
    }
    Ok(Params { tree, forest, boost })
}

fn sibling_target(path: &Path) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.y.csv"))
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Ampute(a) => ampute_cmd(cli, a),
        Command::Impute(a) => impute(cli, a),
        Command::Em(a) => em(cli, a),
        Command::Fit(a) => fit(cli, a),
        Command::Theory(a) => theory(cli, a),
        Command::Bench(a) => bench(cli, a),
        Command::Selectfreq(a) => selectfreq(cli, a),
    }
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    csv_only(cli, "simulate")?;
    let out = cli.out.as_ref().ok_or_else(|| bad("simulate needs --out (the response goes to a sibling .y.csv)"))?;
    let spec = model_spec(&a.model)?;
    if a.n == 0 {
        return Err(bad("--n must be positive"));
    }
    let pattern = pattern_spec(&a.pattern, spec.d)?;
    let data_seed = seed::derive(cli.seed, &[tag::TRAIN]);
    let ds = match &pattern {
        Some(AmputationSpec { mechanism: Mechanism::Predictive { p, shift }, target_columns }) => {
            gen_predictive(&spec, a.n, target_columns[0], *p, *shift, data_seed)?
        }
        Some(pat) => {
            let mut ds = gen_model(&spec, a.n, data_seed)?;
            ds.features = ampute(&ds.features, pat, seed::derive(cli.seed, &[tag::AMPUTE_TRAIN]))?;
            ds
        }
        None => gen_model(&spec, a.n, data_seed)?,
    };
    write_matrix(sink(&cli.out)?, &default_names(spec.d), &ds.features)?;
    write_target(sink(&Some(sibling_target(out)))?, &ds.y)?;
    Ok(())
}

fn ampute_cmd(cli: &Cli, a: &AmputeArgs) -> Result<()> {
    csv_only(cli, "ampute")?;
    let (names, x) = read_features(&a.input)?;
    let pattern = pattern_spec(&a.pattern, x.d())?.ok_or_else(|| bad("ampute needs --pattern mcar|mnar"))?;
    if matches!(pattern.mechanism, Mechanism::Predictive { .. }) {
        return Err(bad("the predictive pattern depends on the response; use simulate"));
    }
    let out = ampute(&x, &pattern, seed::derive(cli.seed, &[tag::AMPUTE_TRAIN]))?;
    write_matrix(sink(&cli.out)?, &names, &out)?;
    Ok(())
}

fn impute(cli: &Cli, a: &ImputeArgs) -> Result<()> {
    csv_only(cli, "impute")?;
    let (names, train) = read_features(&a.train)?;
    let (_, target) = match &a.apply {
        Some(p) => read_features(p)?,
        None => (names.clone(), train.clone()),
    };
    if target.d() != train.d() {
        return Err(bad(format!("training file has {} columns, applied file has {}", train.d(), target.d())));
    }
    let mask = a.mask && !a.no_mask;
    let filled = match a.method.as_str() {
        "mean" => fit_constant(&train, ConstantKind::Mean)?.transform(&target, mask)?,
        "oor" => fit_constant(&train, ConstantKind::OutOfRange)?.transform(&target, mask)?,
        "gaussian" => {
            let x = GaussianImputer::fit(&train, EmConfig::default(), ShrinkMode::Trace)?.transform(&target)?;
            if mask {
                let d = target.d();
                let values: Vec<f64> = (0..x.n())
                    .flat_map(|i| x.row_values(i).iter().copied().chain(target.row_mask(i).iter().map(|&m| if m { 1.0 } else { 0.0 })))
                    .collect();
                IncompleteMatrix::complete(x.n(), 2 * d, values)?
            } else {
                x
            }
        }
        other => return Err(bad(format!("unknown imputation method {other:?} (mean|oor|gaussian)"))),
    };
    let mut out_names = names;
    if mask {
        out_names.extend(out_names.clone().iter().map(|n| format!("{n}_missing")));
    }
    write_matrix(sink(&cli.out)?, &out_names, &filled)?;
    Ok(())
}

fn em(cli: &Cli, a: &EmArgs) -> Result<()> {
    csv_only(cli, "em")?;
    if a.max_iter == 0 || !(a.tol > 0.0) {
        return Err(bad("--max-iter must be positive and --tol > 0"));
    }
    let (_, x) = read_features(&a.input)?;
    let fit = fit_gaussian_em(&x, EmConfig { max_iter: a.max_iter, tol: a.tol })?;
    eprintln!("iterations={} converged={} loglik={}", fit.iterations, fit.converged, fit.trace.last().copied().unwrap_or(f64::NAN));
    let mut w = sink(&cli.out)?;
    let line = |v: &mut dyn Iterator<Item = f64>| v.map(format_sig17).collect::<Vec<_>>().join(" ");
    writeln!(w, "{}", line(&mut fit.params.mu.iter().copied()))?;
    let s = &fit.params.sigma;
    for i in 0..s.nrows() {
        writeln!(w, "{}", line(&mut (0..s.ncols()).map(|j| s[(i, j)])))?;
    }
    w.flush()?;
    Ok(())
}

fn fit(cli: &Cli, a: &FitArgs) -> Result<()> {
    csv_only(cli, "fit")?;
    let strategy = conf(Strategy::parse(&a.learner.strategy))?;
    let learner = conf(Learner::parse(&a.learner.learner))?;
    let (_, x) = read_features(&a.train)?;
    let y = read_target_file(&a.target).with_context(|| format!("reading {}", a.target.display()))?;
    if y.len() != x.n() {
        return Err(bad(format!("{} feature rows but {} responses", x.n(), y.len())));
    }
    let params = learner_params(&a.learner, x.d())?;
    let fit_seed = seed::derive(cli.seed, &[tag::FIT]);
    let model = match learner {
        Learner::Tree => Fitted::Tree(fit_tree(&x, &y, strategy, &params.tree, fit_seed)?),
        Learner::Forest => Fitted::Ensemble(EnsembleModel::Forest(fit_forest(&x, &y, strategy, &params.forest, fit_seed)?)),
        Learner::Boost => Fitted::Ensemble(EnsembleModel::Boost(fit_boosting(&x, &y, strategy, &params.boost, fit_seed)?)),
    };
    let predict_seed = seed::derive(cli.seed, &[tag::PREDICT]);
    let train_pred = model.predict(&x, predict_seed)?;
    let r2 = nacart_core::bench::r2_score(&y, &train_pred).map_or(f64::NAN, |v| v);
    eprintln!("learner={} strategy={} trees={} train_r2={}", learner.name(), a.learner.strategy, model.trees().len(), format_f64(r2));
    if let Some(path) = &a.dump {
        let mut w = BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
        let trees = model.trees();
        for (t, tree) in trees.iter().enumerate() {
            if trees.len() > 1 {
                writeln!(w, "# tree {}", t + 1)?;
            }
            w.write_all(dump(tree).as_bytes())?;
        }
        w.flush()?;
    }
    if let Some(path) = &a.predict {
        let (_, test) = read_features(path)?;
        if test.d() != x.d() {
            return Err(bad(format!("model has {} features, {} has {}", x.d(), path.display(), test.d())));
        }
        write_target(sink(&cli.out)?, &model.predict(&test, predict_seed)?)?;
    }
    Ok(())
}

enum Fitted {
    Tree(nacart_core::tree::TreeModel),
    Ensemble(EnsembleModel),
}

impl Fitted {
    fn predict(&self, x: &IncompleteMatrix, seed: u64) -> nacart_core::Result<Vec<f64>> {
        match self {
            Fitted::Tree(t) => t.predict_matrix(x, seed, ProbMode::Stochastic),
            Fitted::Ensemble(e) => e.predict_matrix(x, seed, ProbMode::Stochastic),
        }
    }

    fn trees(&self) -> Vec<&nacart_core::tree::TreeModel> {
        match self {
            Fitted::Tree(t) => vec![t],
            Fitted::Ensemble(EnsembleModel::Forest(f)) => f.trees.iter().collect(),
            Fitted::Ensemble(EnsembleModel::Boost(b)) => b.stages.iter().map(|s| &s.0).collect(),
        }
    }
}

const MC_STRATEGIES: [(&str, Strategy); 4] = [
    ("mia", Strategy::Mia),
    ("block", Strategy::ObservedBlock),
    ("prob", Strategy::ObservedProbabilistic),
    ("surr", Strategy::ObservedSurrogate),
];

fn theory(cli: &Cli, a: &TheoryArgs) -> Result<()> {
    let grid = parse_grid(&a.p_grid)?;
    if a.eta.is_empty() {
        return Err(bad("--eta needs at least one value"));
    }
    let points = conf(theory_curves(&grid, &a.eta))?;
    if a.mc_check && (a.mc_n < 2 || a.mc_reps == 0) {
        return Err(bad("--mc-n must be at least 2 and --mc-reps at least 1"));
    }
    if cli.format == Format::Svg {
        let path = svg_path(cli)?;
        let mut series = Vec::new();
        for &eta in &a.eta {
            let pts: Vec<_> = points.iter().filter(|t| t.eta == eta).collect();
            let x: Vec<f64> = pts.iter().map(|t| t.p).collect();
            series.push(Series { name: format!("mia eta={eta}"), x: x.clone(), y: pts.iter().map(|t| t.risks.mia).collect(), band: None });
            series.push(Series { name: format!("surr eta={eta}"), x, y: pts.iter().map(|t| t.risks.surr).collect(), band: None });
        }
        let first: Vec<_> = points.iter().filter(|t| t.eta == a.eta[0]).collect();
        let x: Vec<f64> = first.iter().map(|t| t.p).collect();
        series.push(Series { name: "block".into(), x: x.clone(), y: first.iter().map(|t| t.risks.block).collect(), band: None });
        series.push(Series {
            name: "block (closed form)".into(),
            x: x.clone(),
            y: first.iter().map(|t| t.risks.block_closed_form).collect(),
            band: None,
        });
        series.push(Series { name: "prob".into(), x, y: first.iter().map(|t| t.risks.prob).collect(), band: None });
        std::fs::write(path, render_curves("single-split risks", "missing fraction p", "risk", &series, false))?;
        return Ok(());
    }
    let mut w = csv::Writer::from_writer(sink(&cli.out)?);
    let mut header: Vec<String> =
        ["p", "eta", "s_star_L", "risk_mia", "risk_block", "risk_block_cf", "risk_prob", "risk_surr"].map(String::from).to_vec();
    if a.mc_check {
        for (name, _) in MC_STRATEGIES {
            header.push(format!("mc_{name}"));
            header.push(format!("mc_{name}_se"));
        }
    }
    w.write_record(&header)?;
    for (i, t) in points.iter().enumerate() {
        let r = t.risks;
        let mut rec = vec![
            format_f64(t.p),
            format_f64(t.eta),
            t.s_star_mia.map(format_f64).unwrap_or_default(),
            format_f64(r.mia),
            format_f64(r.block),
            format_f64(r.block_closed_form),
            format_f64(r.prob),
            format_f64(r.surr),
        ];
        if a.mc_check {
            for (k, (_, s)) in MC_STRATEGIES.iter().enumerate() {
                let mc = mc_stump_risk(*s, t.p, t.eta, a.mc_n, a.mc_reps, seed::derive(cli.seed, &[i as u64, k as u64]))?;
                rec.push(format_f64(mc.mean));
                rec.push(format_f64(mc.std_error));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn bench(cli: &Cli, a: &BenchArgs) -> Result<()> {
    let model = model_spec(&a.model)?;
    let pattern =
        pattern_spec(&a.pattern, model.d)?.unwrap_or(AmputationSpec { mechanism: Mechanism::Mcar { p: 0.0 }, target_columns: Vec::new() });
    let learner = conf(Learner::parse(&a.learner.learner))?;
    let methods = if a.methods.is_empty() {
        Method::ALL.to_vec()
    } else {
        a.methods.iter().map(|m| conf(Method::parse(m))).collect::<Result<_>>()?
    };
    let plot = conf(PlotKind::parse(&a.plot))?;
    let params = learner_params(&a.learner, model.d)?;
    let mut records = Vec::new();
    for &n in &a.n {
        let mut cfg = ExperimentConfig::new(model, pattern.clone(), n, a.reps, learner, methods.clone(), cli.seed);
        cfg.n_test = a.n_test.unwrap_or(n);
        cfg.threads = a.threads;
        cfg.timings = a.timings;
        cfg.tree = params.tree.clone();
        cfg.forest = params.forest.clone();
        cfg.boost = params.boost.clone();
        conf(cfg.validate())?;
        records.extend(run_experiment(&cfg)?);
    }
    if let Some(k) = a.bayes_k {
        let n_large = a.n.iter().copied().max().unwrap_or(1000).max(a.n_test.unwrap_or(0));
        let r2 = conf(estimate_bayes_rate(&model, &pattern, n_large, k, seed::derive(cli.seed, &[tag::HIDDEN])))?;
        eprintln!("bayes_r2={}", format_f64(r2));
    }
    match cli.format {
        Format::Csv => {
            let mut w = sink(&cli.out)?;
            write_csv(&mut w, &records)?;
            w.flush()?;
        }
        Format::Svg => emit_svg(&records, svg_path(cli)?, plot)?,
    }
    Ok(())
}

fn selectfreq(cli: &Cli, a: &SelectArgs) -> Result<()> {
    let p_grid = parse_grid(&a.p_grid)?;
    let missing_on = conf(MissingOn::parse(&a.missing_on))?;
    let rows = conf(selection_frequency_experiment(&p_grid, &a.n_grid, missing_on, a.reps, cli.seed))?;
    if cli.format == Format::Svg {
        let series: Vec<Series> = a
            .n_grid
            .iter()
            .map(|&n| {
                let r: Vec<_> = rows.iter().filter(|r| r.n == n).collect();
                Series {
                    name: format!("n={n}"),
                    x: r.iter().map(|r| r.p).collect(),
                    y: r.iter().map(|r| r.frequency).collect(),
                    band: None,
                }
            })
            .collect();
        let title = format!("X1 selection frequency, missing on {}", missing_on.name());
        std::fs::write(svg_path(cli)?, render_curves(&title, "missing fraction p", "frequency", &series, false))?;
        return Ok(());
    }
    let mut w = csv::Writer::from_writer(sink(&cli.out)?);
    w.write_record(["p", "n", "missing_on", "reps", "x1_count", "no_split", "frequency"])?;
    for r in &rows {
        w.write_record([
            format_f64(r.p),
            r.n.to_string(),
            r.missing_on.name().to_string(),
            r.reps.to_string(),
            r.x1_count.to_string(),
            r.no_split.to_string(),
            format_f64(r.frequency),
        ])?;
    }
    w.flush()?;
    Ok(())
}

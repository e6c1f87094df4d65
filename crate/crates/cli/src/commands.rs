use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{Context, Result};
use multiplicity::dataset::{
    drop_columns_matching, load_csv, load_healthcare, orthonormalize, write_csv, Schema,
};
use multiplicity::fairness::{
    fairness_workflow, group_count, group_rate_extremes_with, GroupRateReport, RateDirection, WorkflowConfig,
};
use multiplicity::index_model::{ambiguity_multi, build_ensemble, IndexEnsemble, MultiTarget, Standardization};
use multiplicity::linear_fit::{fit_ols, EpsilonMode, RashomonBall};
use multiplicity::metrics::{ambiguity_curve, stable_points, write_curve_csv, write_stable_csv, CurveOptions, Family};
use multiplicity::oracle::{angle_sweep_single, monte_carlo_flips, simplex_sweep_k2, SampleFamily, SweepQuery};
use multiplicity::rashomon::{write_reports_jsonl, AmbiguityMode, FlipReport, SearchConfig, SingleTarget};
use multiplicity::solver::SolveStatus;
use multiplicity::synth::{generate, SynthConfig};
use multiplicity::{Dataset, KappaSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::output::{create, write_csv_with, write_json, CertifyError, Metadata};
use crate::{Cli, Command, Global};

/// Whether every solve finished inside its budget.
pub enum Outcome {
    Complete,
    Partial,
}

impl Outcome {
    fn from_complete(done: bool) -> Self {
        if done {
            Outcome::Complete
        } else {
            Outcome::Partial
        }
    }
}

/// Largest input on which `--certify` runs the exact oracles.
const CERTIFY_MAX_ROWS: usize = 200;
const CERTIFY_SAMPLES: usize = 20_000;

pub fn run(cli: &Cli) -> Result<Outcome> {
    let g = &cli.global;
    match &cli.command {
        Command::Fit { data, targets, out } => fit(g, data, targets, out),
        Command::AmbiguitySingle {
            data,
            target,
            kappa,
            epsilons,
            epsilon_mode,
            mode,
            reports,
            out,
        } => ambiguity_single(
            g,
            data,
            target,
            kappa,
            epsilons,
            epsilon_mode,
            mode,
            reports.as_deref(),
            out,
        ),
        Command::AmbiguityMulti {
            data,
            targets,
            kappa,
            standardize,
            out,
        } => ambiguity_multi_cmd(g, data, targets, kappa, standardize, out),
        Command::FairnessRange {
            data,
            targets,
            group,
            kappa,
            direction,
            standardize,
            workflow,
            table,
            out,
        } => {
            if *workflow {
                fairness_workflow_cmd(g, data, targets, group, kappa, standardize, table.as_deref(), out)
            } else {
                fairness_range(g, data, targets, group, kappa, direction, standardize, out)
            }
        }
        Command::StablePoints {
            data,
            family,
            target,
            targets,
            epsilon,
            epsilon_mode,
            standardize,
            kappa_sweep,
            out,
        } => stable(
            g,
            data,
            family,
            target.as_deref(),
            targets,
            *epsilon,
            epsilon_mode,
            standardize,
            kappa_sweep,
            out,
        ),
        Command::Synth {
            n,
            b,
            noise_sd,
            curvature,
            out,
        } => synth(g, *n, *b, *noise_sd, *curvature, out),
    }
}

fn parse<T>(s: &str) -> Result<T>
where
    T: std::str::FromStr<Err = multiplicity::Error>,
{
    Ok(s.parse::<T>()?)
}

fn search(g: &Global) -> SearchConfig {
    SearchConfig {
        budget: g.budget(),
        ..SearchConfig::default()
    }
}

fn base_meta(command: &'static str, g: &Global, data: &Path) -> Metadata {
    Metadata::new(command)
        .with("data", data.display().to_string())
        .with("format", &g.format)
        .with("seed", g.seed)
        .with("node_budget", g.node_budget)
        .with("time_budget_secs", g.time_budget)
        .with("drop_regex", &g.drop_regex)
        .with("max_rows", g.max_rows)
}

/// Leading `# key: value` lines of a CSV file.
fn comment_header(path: &Path) -> Result<Vec<(String, String)>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        let Some(rest) = line.strip_prefix('#') else { break };
        if let Some((k, v)) = rest.trim().split_once(':') {
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    Ok(out)
}

fn csv_columns(path: &Path) -> Result<Vec<String>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(f);
    Ok(rdr.headers()?.iter().map(|h| h.trim().to_string()).collect())
}

/// Loads `path` with the given targets. Feature columns come from
/// `--features`, then from a `# features:` line written by `synth`, then
/// from every unclaimed column.
pub fn load(g: &Global, path: &Path, targets: &[String]) -> Result<Dataset> {
    let ds = match g.format.as_str() {
        "csv" => {
            let columns = csv_columns(path)?;
            let mut schema = Schema::new(targets.to_vec(), g.group_col.clone());
            schema.split_seed = g.seed;
            if columns.iter().any(|c| c == "split") {
                schema.split = Some("split".into());
            }
            if columns.iter().any(|c| c == "row_id") {
                schema.id = Some("row_id".into());
            }
            schema.features = match &g.features {
                Some(f) => Some(f.clone()),
                None => comment_header(path)?
                    .into_iter()
                    .find(|(k, _)| k == "features")
                    .map(|(_, v)| serde_json::from_str::<Vec<String>>(&v))
                    .transpose()
                    .context("malformed `# features:` line")?,
            };
            let full = load_csv(path, &schema)?;
            match g.max_rows {
                Some(m) if m < full.n() => full.subset(&(0..m).collect::<Vec<_>>())?,
                _ => full,
            }
        }
        "healthcare" | "healthcare-subset" => {
            let ds = load_healthcare(path, g.format == "healthcare-subset", g.max_rows, g.seed)?;
            for t in targets {
                ds.target_index(t)?;
            }
            ds
        }
        other => {
            return Err(multiplicity::Error::Config(format!(
                "unknown format `{other}` (csv, healthcare, healthcare-subset)"
            ))
            .into())
        }
    };
    if g.drop_regex.is_empty() {
        return Ok(ds);
    }
    let patterns: Vec<&str> = g.drop_regex.iter().map(String::as_str).collect();
    Ok(drop_columns_matching(&ds, &patterns)?)
}

fn kappa_of(spec: &str, n: usize) -> Result<usize> {
    Ok(parse::<KappaSpec>(spec)?.resolve(n)?)
}

fn all_certified(reports: &[FlipReport]) -> bool {
    reports.iter().all(FlipReport::is_certified)
}

fn fit(g: &Global, data: &Path, targets: &[String], out: &Path) -> Result<Outcome> {
    let ds = load(g, data, targets)?;
    let (o, basis) = orthonormalize(&ds)?;
    let mut models = Vec::new();
    for t in targets {
        let m = fit_ols(&o, t)?;
        let raw = basis.raw_weights(&m.weights);
        let coefficients: serde_json::Map<String, serde_json::Value> = basis
            .source_columns
            .iter()
            .zip(raw.iter())
            .map(|(c, w)| (c.clone(), json!(w)))
            .collect();
        models.push(json!({
            "target": t,
            "rss": m.rss,
            "coefficients": coefficients,
            "basis_weights": m.weights.as_slice(),
        }));
    }
    let meta = base_meta("fit", g, data).with("targets", targets);
    write_json(
        out,
        &json!({
            "metadata": meta,
            "n": o.n(),
            "rank": basis.rank,
            "dropped_columns": basis.dropped_columns.iter().map(|&c| &basis.source_columns[c]).collect::<Vec<_>>(),
            "models": models,
        }),
    )?;
    Ok(Outcome::Complete)
}

#[allow(clippy::too_many_arguments)]
fn ambiguity_single(
    g: &Global,
    data: &Path,
    target: &str,
    kappa: &str,
    epsilons: &[f64],
    epsilon_mode: &str,
    mode: &str,
    reports_path: Option<&Path>,
    out: &Path,
) -> Result<Outcome> {
    let eps_mode: EpsilonMode = parse(epsilon_mode)?;
    let amb_mode: AmbiguityMode = parse(mode)?;
    let ds = load(g, data, &[target.to_string()])?;
    let k = kappa_of(kappa, ds.n())?;
    let opts = CurveOptions {
        epsilon_mode: eps_mode,
        search: search(g),
        reuse: true,
    };
    let (points, reports) = ambiguity_curve(&ds, target, k, epsilons, &opts)?;
    if g.certify {
        certify_single(&ds, target, k, epsilons, eps_mode, &reports, g.seed)?;
    }
    let meta = base_meta("ambiguity-single", g, data)
        .with("target", target)
        .with("kappa", k)
        .with("epsilons", epsilons)
        .with("epsilon_mode", eps_mode)
        .with("mode", amb_mode);
    write_csv_with(out, &meta, |buf| write_curve_csv(&points, target, buf))?;
    if let (Some(p), Some(last)) = (reports_path, reports.last()) {
        let mut w = create(p)?;
        serde_json::to_writer(&mut w, &json!({ "metadata": meta }))?;
        w.write_all(b"\n")?;
        write_reports_jsonl(last, &mut w)?;
        w.flush()?;
    }
    for p in &points {
        let a = match amb_mode {
            AmbiguityMode::All => p.all,
            AmbiguityMode::Top => p.top,
        };
        println!("epsilon={} ambiguity={:.6} undetermined={}", p.epsilon, a.value, a.undetermined);
    }
    Ok(Outcome::from_complete(reports.iter().all(|r| all_certified(r))))
}

fn certify_single(
    ds: &Dataset,
    target: &str,
    kappa: usize,
    epsilons: &[f64],
    mode: EpsilonMode,
    reports: &[Vec<FlipReport>],
    seed: u64,
) -> Result<()> {
    if ds.n() > CERTIFY_MAX_ROWS {
        eprintln!("certify: skipped, {} rows exceed {CERTIFY_MAX_ROWS}", ds.n());
        return Ok(());
    }
    let (o, _) = orthonormalize(ds)?;
    let center = fit_ols(&o, target)?;
    for (eps, reps) in epsilons.iter().zip(reports) {
        let ball = RashomonBall::new(center.clone(), *eps, mode)?;
        if o.features().ncols() == 2 {
            for r in reps {
                let (lo, hi) = angle_sweep_single(o.features(), &ball, r.row)?;
                check_rank_report(r, lo, hi, kappa)?;
            }
        } else {
            let found = monte_carlo_flips(
                SampleFamily::Ball {
                    design: o.features(),
                    center: &ball.center.weights,
                    epsilon: ball.epsilon,
                },
                kappa,
                CERTIFY_SAMPLES,
                seed,
            )?;
            check_sampled_flips(reps, &found)?;
        }
    }
    eprintln!("certify: single-target results agree with the oracles");
    Ok(())
}

/// The sweeps only visit open cells; the reference model may sit on an
/// exact tie, where index order decides, so its rank is admitted too.
fn check_rank_report(r: &FlipReport, lo: usize, hi: usize, kappa: usize) -> Result<()> {
    let (lo, hi) = (lo.min(r.baseline_rank), hi.max(r.baseline_rank));
    let want = lo <= kappa && kappa < hi;
    if r.flippable.is_some_and(|f| f != want) || r.min_rank < lo || r.max_rank > hi {
        return Err(CertifyError(format!(
            "row {}: ranks {}..{} flippable {:?}, oracle {lo}..{hi}",
            r.row_id, r.min_rank, r.max_rank, r.flippable
        ))
        .into());
    }
    if r.exact && (r.min_rank, r.max_rank) != (lo, hi) {
        return Err(CertifyError(format!(
            "row {}: exact ranks {}..{}, oracle {lo}..{hi}",
            r.row_id, r.min_rank, r.max_rank
        ))
        .into());
    }
    Ok(())
}

fn check_sampled_flips(reports: &[FlipReport], found: &BTreeSet<usize>) -> Result<()> {
    for r in reports {
        if found.contains(&r.row) && r.flippable == Some(false) {
            return Err(CertifyError(format!("row {} flips under sampling but was certified stable", r.row_id)).into());
        }
    }
    Ok(())
}

fn ensemble(ds: &Dataset, targets: &[String], std: Standardization) -> Result<IndexEnsemble> {
    let (o, _) = orthonormalize(ds)?;
    let models = targets.iter().map(|t| fit_ols(&o, t)).collect::<multiplicity::Result<Vec<_>>>()?;
    Ok(build_ensemble(&models, &o, std)?)
}

fn ambiguity_multi_cmd(
    g: &Global,
    data: &Path,
    targets: &[String],
    kappa: &str,
    standardize: &str,
    out: &Path,
) -> Result<Outcome> {
    let std: Standardization = parse(standardize)?;
    let ds = load(g, data, targets)?;
    let k = kappa_of(kappa, ds.n())?;
    let ens = ensemble(&ds, targets, std)?;
    let mt = MultiTarget::new(ens.clone(), k)?.with_config(search(g));
    let reports = mt.flip_search_all();
    let sample: Vec<usize> = (0..ds.n()).collect();
    let amb = ambiguity_multi(&reports, &sample)?;
    if g.certify {
        certify_multi(&ens, k, &reports, g.seed)?;
    }
    let meta = base_meta("ambiguity-multi", g, data)
        .with("targets", targets)
        .with("kappa", k)
        .with("standardization", std);
    let mut w = create(out)?;
    serde_json::to_writer(&mut w, &json!({ "metadata": meta, "ambiguity": amb }))?;
    w.write_all(b"\n")?;
    write_reports_jsonl(&reports, &mut w)?;
    w.flush()?;
    println!("ambiguity={:.6} undetermined={}", amb.value, amb.undetermined);
    Ok(Outcome::from_complete(all_certified(&reports)))
}

fn certify_multi(ens: &IndexEnsemble, kappa: usize, reports: &[FlipReport], seed: u64) -> Result<()> {
    if ens.n() > CERTIFY_MAX_ROWS {
        eprintln!("certify: skipped, {} rows exceed {CERTIFY_MAX_ROWS}", ens.n());
        return Ok(());
    }
    if ens.k() == 2 {
        for r in reports {
            let (lo, hi) = simplex_sweep_k2(&ens.predictions, kappa, &SweepQuery::Rank(r.row))?;
            check_rank_report(r, lo, hi, kappa)?;
        }
    } else {
        let found = monte_carlo_flips(
            SampleFamily::Simplex {
                predictions: &ens.predictions,
            },
            kappa,
            CERTIFY_SAMPLES,
            seed,
        )?;
        check_sampled_flips(reports, &found)?;
    }
    eprintln!("certify: multi-target results agree with the oracles");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn fairness_range(
    g: &Global,
    data: &Path,
    targets: &[String],
    group: &str,
    kappa: &str,
    direction: &str,
    standardize: &str,
    out: &Path,
) -> Result<Outcome> {
    let dir: RateDirection = parse(direction)?;
    let std: Standardization = parse(standardize)?;
    let ds = load(g, data, targets)?;
    let k = kappa_of(kappa, ds.n())?;
    let ens = ensemble(&ds, targets, std)?;
    let report = group_rate_extremes_with(&ens, ds.groups(), group, k, dir, search(g))?;
    if g.certify {
        certify_group(&ens, &ds.group_members(group)?, k, &report, g.seed)?;
    }
    let meta = base_meta("fairness-range", g, data)
        .with("targets", targets)
        .with("group", group)
        .with("kappa", k)
        .with("direction", dir)
        .with("standardization", std);
    write_json(out, &json!({ "metadata": meta, "report": report }))?;
    for (name, e) in [("min", &report.min), ("max", &report.max)] {
        if let Some(e) = e {
            println!("{name}: count={} bound={} rate={:.6} status={:?}", e.count, e.bound, e.rate, e.status);
        }
    }
    Ok(Outcome::from_complete(report.is_exact()))
}

fn certify_group(
    ens: &IndexEnsemble,
    members: &[usize],
    kappa: usize,
    report: &GroupRateReport,
    seed: u64,
) -> Result<()> {
    if ens.n() > CERTIFY_MAX_ROWS {
        eprintln!("certify: skipped, {} rows exceed {CERTIFY_MAX_ROWS}", ens.n());
        return Ok(());
    }
    let (lo, hi) = if ens.k() == 2 {
        simplex_sweep_k2(
            &ens.predictions,
            kappa,
            &SweepQuery::GroupCount {
                members: members.to_vec(),
            },
        )?
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut lo, mut hi) = (usize::MAX, 0);
        for _ in 0..CERTIFY_SAMPLES {
            let raw: Vec<f64> = (0..ens.k()).map(|_| -rng.random::<f64>().ln()).collect();
            let s: f64 = raw.iter().sum();
            let alpha = nalgebra::DVector::from_vec(raw.iter().map(|v| v / s).collect());
            let c = group_count(ens.combined_with(&alpha).as_slice(), members, kappa)?;
            lo = lo.min(c);
            hi = hi.max(c);
        }
        // Sampling only brackets the range from inside.
        let ok_min = report.min.as_ref().is_none_or(|e| e.count <= lo);
        let ok_max = report.max.as_ref().is_none_or(|e| e.count >= hi);
        if !(ok_min && ok_max) {
            return Err(CertifyError(format!("sampled counts {lo}..{hi} escape the reported range")).into());
        }
        eprintln!("certify: group range contains every sampled count");
        return Ok(());
    };
    let base = group_count(ens.combined().as_slice(), members, kappa)?;
    let (lo, hi) = (lo.min(base), hi.max(base));
    let exact_ok = |e: &Option<multiplicity::fairness::GroupExtreme>, want: usize| {
        e.as_ref()
            .is_none_or(|e| e.status != SolveStatus::Optimal || e.count == want)
    };
    if !(exact_ok(&report.min, lo) && exact_ok(&report.max, hi)) {
        return Err(CertifyError(format!(
            "group range {:?}..{:?}, oracle {lo}..{hi}",
            report.min_count(),
            report.max_count()
        ))
        .into());
    }
    eprintln!("certify: group range agrees with the oracle");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn fairness_workflow_cmd(
    g: &Global,
    data: &Path,
    targets: &[String],
    group: &str,
    kappa: &str,
    standardize: &str,
    table: Option<&Path>,
    out: &Path,
) -> Result<Outcome> {
    let std: Standardization = parse(standardize)?;
    let ds = load(g, data, targets)?;
    let spec: KappaSpec = parse(kappa)?;
    let cfg = WorkflowConfig {
        targets: targets.to_vec(),
        group_label: group.to_string(),
        kappa: spec,
        standardization: std,
        search: search(g),
    };
    let rep = fairness_workflow(&ds, &cfg)?;
    let meta = base_meta("fairness-range", g, data)
        .with("workflow", true)
        .with("targets", targets)
        .with("group", group)
        .with("kappa", spec)
        .with("standardization", std);
    write_json(out, &json!({ "metadata": meta, "report": rep }))?;
    if let Some(t) = table {
        write_csv_with(t, &meta, |buf| rep.write_table(buf))?;
    }
    for s in &rep.summaries {
        println!("{} {}: group_rate={:.6}", s.split, s.model, s.group_rate);
    }
    Ok(Outcome::from_complete(rep.tune.is_exact()))
}

#[allow(clippy::too_many_arguments)]
fn stable(
    g: &Global,
    data: &Path,
    family: &str,
    target: Option<&str>,
    targets: &[String],
    epsilon: f64,
    epsilon_mode: &str,
    standardize: &str,
    kappa_sweep: &[String],
    out: &Path,
) -> Result<Outcome> {
    let fam: Family = parse(family)?;
    let eps_mode: EpsilonMode = parse(epsilon_mode)?;
    let std: Standardization = parse(standardize)?;
    let names: Vec<String> = match fam {
        Family::Rashomon => vec![target
            .ok_or_else(|| multiplicity::Error::Config("--family rashomon needs --target".into()))?
            .to_string()],
        Family::Index => {
            if targets.is_empty() {
                return Err(multiplicity::Error::Config("--family index needs --targets".into()).into());
            }
            targets.to_vec()
        }
    };
    let ds = load(g, data, &names)?;
    let kappas = kappa_sweep
        .iter()
        .map(|s| kappa_of(s, ds.n()))
        .collect::<Result<Vec<_>>>()?;
    let mut sets = Vec::new();
    let mut complete = true;
    match fam {
        Family::Rashomon => {
            let (o, _) = orthonormalize(&ds)?;
            let ball = RashomonBall::new(fit_ols(&o, &names[0])?, epsilon, eps_mode)?;
            for &k in &kappas {
                let reports = SingleTarget::from_dataset(&o, ball.clone(), k)?
                    .with_config(search(g))
                    .flip_search_all();
                complete &= all_certified(&reports);
                sets.push(stable_points(&reports, k, fam)?);
            }
        }
        Family::Index => {
            let ens = ensemble(&ds, &names, std)?;
            for &k in &kappas {
                let reports = MultiTarget::new(ens.clone(), k)?.with_config(search(g)).flip_search_all();
                complete &= all_certified(&reports);
                sets.push(stable_points(&reports, k, fam)?);
            }
        }
    }
    let mut meta = base_meta("stable-points", g, data)
        .with("family", fam)
        .with("targets", &names)
        .with("kappas", &kappas);
    meta = match fam {
        Family::Rashomon => meta.with("epsilon", epsilon).with("epsilon_mode", eps_mode),
        Family::Index => meta.with("standardization", std),
    };
    write_csv_with(out, &meta, |buf| write_stable_csv(&sets, buf))?;
    for s in &sets {
        println!("kappa={} stable_fraction={:.6}", s.kappa, s.stable_fraction);
    }
    Ok(Outcome::from_complete(complete))
}

fn synth(g: &Global, n: usize, b: f64, noise_sd: f64, curvature: f64, out: &Path) -> Result<Outcome> {
    let cfg = SynthConfig {
        n,
        b,
        noise_sd,
        curvature,
        seed: g.seed,
        ..SynthConfig::default()
    };
    let ds = generate(&cfg)?;
    let meta = Metadata::new("synth")
        .with("config", &cfg)
        .with("features", ds.feature_names());
    write_csv_with(out, &meta, |buf| write_csv(&ds, buf))?;
    Ok(Outcome::Complete)
}

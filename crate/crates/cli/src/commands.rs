use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use sifa::metrics::{
    combined_loadings, grassmannian, max_principal_angle, recovery_error, variance_explained,
    CovariateGroup,
};
use sifa::{
    check_conditions, e_step, estimate_signal_rank, fit, gen_setting, lcv, two_step_ranks,
    Configuration, FitOptions, FitReport, InitMethod, Mode, Noise, RankSet, RegressionFamily,
    Setting, SifaParams, SimSpec,
};

use crate::args::{BenchArgs, Cli, Command, FitArgs, MetricsArgs, RankArgs, RunConfig, SimulateArgs};
use crate::data::{load, parse_mode, parse_normalize, parse_ranks, required, Normalize};
use crate::error::{CliError, CliResult};
use crate::matrix_io::{read_matrix, write_atomic, write_matrix};
use crate::report::*;

pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

pub fn run(cli: Cli) -> CliResult<()> {
    let config = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(n) = cli.threads.or(config.threads) {
        if n == 0 {
            return Err(CliError::invalid("--threads must be at least 1"));
        }
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let seed = cli.seed.or(config.seed);
    match cli.command {
        Command::Simulate(a) => simulate(a.merge(config.simulate.unwrap_or_default()), seed),
        Command::Fit(a) => fit_cmd(a.merge(config.fit.unwrap_or_default()), seed),
        Command::Rank(a) => rank(a.merge(config.rank.unwrap_or_default()), seed),
        Command::Metrics(a) => metrics(a.merge(config.metrics.unwrap_or_default())),
        Command::Bench(a) => bench(a.merge(config.bench.unwrap_or_default()), seed),
    }
}

fn parse_regression(s: Option<&str>) -> CliResult<RegressionFamily> {
    s.map_or(Ok(RegressionFamily::Linear), |r| r.parse().map_err(CliError::from))
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn simulate(a: SimulateArgs, seed: Option<u64>) -> CliResult<()> {
    let setting = Setting::from_number(required(a.setting, "--setting")?)?;
    let seed = seed.unwrap_or(0);
    let mut spec = SimSpec::new(setting, seed);
    if let Some(n) = a.n {
        spec.n = n;
    }
    if let Some(p) = a.p {
        spec.dims = p;
    }
    if let Some(q) = a.q {
        spec.q = q;
    }
    if let Some(r) = &a.ranks {
        spec.ranks = parse_ranks(r)?;
    }
    let k = spec.dims.len();
    let sd = match a.noise_sd {
        Some(sd) if sd.len() == 1 => vec![sd[0]; k],
        Some(sd) => sd,
        None => {
            let base = spec.noise.sd().first().copied().unwrap_or(1.0);
            vec![base; k]
        }
    };
    spec.noise = match a.noise.as_deref().unwrap_or("gaussian") {
        "gaussian" => Noise::Gaussian(sd),
        "t" => Noise::StudentT {
            df: required(a.df, "--df for t noise")?,
            sd,
        },
        other => return Err(CliError::invalid(format!("unknown noise '{other}'"))),
    };
    spec.validate()?;
    let ext = match a.format.as_deref().unwrap_or("csv") {
        "csv" => "csv",
        "tsv" => "tsv",
        other => return Err(CliError::invalid(format!("unknown format '{other}'"))),
    };
    let (data, truth) = gen_setting(&spec)?;

    let dir = a.out.unwrap_or_else(|| PathBuf::from("."));
    create_dir(&dir)?;
    let mut view_files = Vec::new();
    for v in &data.views {
        let name = format!("y{}.{ext}", v.view_id);
        write_matrix(&dir.join(&name), &v.values, None)?;
        view_files.push(name);
    }
    let x_file = match &data.covariates {
        Some(x) => {
            let name = format!("x.{ext}");
            write_matrix(&dir.join(&name), x, None)?;
            Some(name)
        }
        None => None,
    };
    let files = TruthFiles {
        views: view_files,
        covariates: x_file,
        factors: format!("factors.{ext}"),
        deterministic: format!("deterministic.{ext}"),
        signal: format!("signal.{ext}"),
    };
    write_matrix(&dir.join(&files.factors), &truth.factors, None)?;
    write_matrix(&dir.join(&files.deterministic), &truth.deterministic, None)?;
    write_matrix(&dir.join(&files.signal), &truth.signal, None)?;
    let manifest = TruthManifest {
        schema: TRUTH_SCHEMA.into(),
        version: VERSION.into(),
        setting: setting.number(),
        mode: truth.mode.to_string(),
        ranks: spec.ranks.to_string(),
        n: spec.n,
        dims: spec.dims.clone(),
        q: spec.q,
        seed,
        params: (&truth.params).into(),
        files,
    };
    write_json(&dir.join("truth.json"), &manifest)?;
    let (noise, df) = match &spec.noise {
        Noise::Gaussian(_) => ("gaussian".to_string(), None),
        Noise::StudentT { df, .. } => ("t".to_string(), Some(*df)),
    };
    let provenance = Provenance {
        schema: PROVENANCE_SCHEMA.into(),
        version: VERSION.into(),
        command: "simulate".into(),
        seed,
        spec: SimSpecData {
            setting: setting.number(),
            n: spec.n,
            dims: spec.dims.clone(),
            q: spec.q,
            ranks: spec.ranks.to_string(),
            noise,
            df,
            noise_sd: spec.noise.sd().to_vec(),
            joint_variance: spec.joint_variance,
            individual_variance: spec.individual_variance,
            decay: spec.decay,
            coef_sd: spec.coef_sd,
        },
    };
    write_json(&dir.join("provenance.json"), &provenance)?;
    println!(
        "setting {} (n = {}, p = {:?}, q = {}, ranks {}) written to {}",
        setting.number(),
        spec.n,
        spec.dims,
        spec.q,
        spec.ranks,
        dir.display()
    );
    Ok(())
}

fn fit_options(
    mode: Mode,
    regression: RegressionFamily,
    tol: Option<f64>,
    max_iters: Option<usize>,
    seed: Option<u64>,
) -> FitOptions {
    let d = FitOptions::default();
    FitOptions {
        mode,
        regression,
        tol: tol.unwrap_or(d.tol),
        max_iters: max_iters.unwrap_or(d.max_iters),
        seed: seed.unwrap_or(d.seed),
        ..d
    }
}

pub fn fit_cmd(a: FitArgs, seed: Option<u64>) -> CliResult<()> {
    let start = Instant::now();
    let views = required(a.views, "--views")?;
    let ranks = parse_ranks(&required(a.ranks, "--ranks")?)?;
    let mode = parse_mode(a.mode.as_deref())?;
    let regression = parse_regression(a.regression.as_deref())?;
    let init: InitMethod = a.init.as_deref().unwrap_or("svd").parse()?;
    let normalize = parse_normalize(a.normalize.as_deref(), mode)?;
    let mut options = fit_options(mode, regression, a.tol, a.max_iters, seed);
    options.init = init;
    options.validate()?;
    let center = !a.no_center.unwrap_or(false);
    let loaded = load(&views, a.covariates.as_deref(), center, normalize, None)?;
    let load_seconds = start.elapsed().as_secs_f64();

    let rep = fit(&loaded.data, &ranks, &options)?;
    let conditions = check_conditions(&rep.params);
    let out = a.out.unwrap_or_else(|| PathBuf::from("fit.json"));
    let doc = FitReportFile {
        schema: FIT_SCHEMA.into(),
        version: VERSION.into(),
        configuration: rep.configuration.to_string(),
        ranks: ranks.to_string(),
        settings: FitSettings {
            mode: mode.to_string(),
            regression: regression.to_string(),
            tol: options.tol,
            max_iters: options.max_iters,
            init: a.init.unwrap_or_else(|| "svd".into()),
            seed: options.seed,
        },
        views: views.iter().map(|p| path_string(p)).collect(),
        covariates: a.covariates.as_deref().map(path_string),
        centering: loaded.centering,
        normalization: loaded.normalization,
        params: (&rep.params).into(),
        scores: (&rep.moments.eu).into(),
        loglik_trace: rep.loglik_trace.clone(),
        final_loglik: rep.final_loglik(),
        iterations: rep.iterations,
        converged: rep.converged,
        conditions: (&conditions).into(),
        timings: Timings {
            load_seconds,
            fit_seconds: rep.elapsed,
            total_seconds: start.elapsed().as_secs_f64(),
        },
        warnings: rep.warnings.clone(),
    };
    write_json(&out, &doc)?;
    println!(
        "{} fit, ranks {}, {}: log-likelihood {:.6} after {} iterations ({}), {:.2}s -> {}",
        mode,
        ranks,
        rep.configuration,
        rep.final_loglik(),
        rep.iterations,
        if rep.converged { "converged" } else { "not converged" },
        rep.elapsed,
        out.display()
    );
    if a.strict.unwrap_or(false) && !rep.converged {
        return Err(CliError::NotConverged(format!(
            "EM did not converge within {} iterations",
            rep.iterations
        )));
    }
    Ok(())
}

pub fn parse_candidates(list: &[String]) -> CliResult<Vec<RankSet>> {
    let c: Vec<RankSet> = list
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_ranks(s))
        .collect::<CliResult<_>>()?;
    if c.is_empty() {
        return Err(CliError::invalid("--candidates is empty"));
    }
    Ok(c)
}

pub fn rank(a: RankArgs, seed: Option<u64>) -> CliResult<()> {
    let views = required(a.views, "--views")?;
    let use_lcv = a.lcv.unwrap_or(false);
    if a.threshold.is_none() && !use_lcv {
        return Err(CliError::invalid("give --threshold (two-step) or --lcv"));
    }
    let candidates = if use_lcv {
        Some(parse_candidates(&required(a.candidates, "--candidates")?)?)
    } else {
        None
    };
    let center = !a.no_center.unwrap_or(false);
    let loaded = load(&views, a.covariates.as_deref(), center, Normalize::None, None)?;
    let data = &loaded.data;

    let two_step = match a.threshold {
        Some(t) => {
            let view_ranks: Vec<usize> = data
                .views
                .iter()
                .map(|v| estimate_signal_rank(&v.values, t))
                .collect::<sifa::Result<_>>()?;
            let combined = estimate_signal_rank(&data.stacked(), t)?;
            let out = two_step_ranks(combined, &view_ranks)?;
            println!(
                "two-step (threshold {t}): signal ranks {view_ranks:?}, combined {combined} -> {}",
                out.ranks
            );
            Some(TwoStepData {
                threshold: t,
                view_signal_ranks: view_ranks,
                combined_signal_rank: combined,
                r0_raw: out.r0_raw,
                r0_clamped: out.r0_clamped,
                clamped_views: out.clamped_views,
                ranks: out.ranks.to_string(),
            })
        }
        None => None,
    };
    let lcv_data = match candidates {
        Some(c) => {
            let mode = parse_mode(a.mode.as_deref())?;
            let regression = parse_regression(a.regression.as_deref())?;
            let options = fit_options(mode, regression, a.tol, a.max_iters, seed);
            let folds = a.folds.unwrap_or(10);
            let res = lcv(data, &c, folds, &options)?;
            for (cand, m) in res.candidates.iter().zip(&res.means) {
                println!("lcv {cand}: mean held-out -loglik {m:.4}");
            }
            println!("lcv selected {}", res.selected());
            Some(LcvData {
                folds,
                candidates: res.candidates.iter().map(|c| c.to_string()).collect(),
                scores: res.scores.clone(),
                means: res.means.clone(),
                selected: res.selected().to_string(),
                unconverged: res.unconverged.clone(),
            })
        }
        None => None,
    };
    let doc = RankReport {
        schema: RANK_SCHEMA.into(),
        version: VERSION.into(),
        views: views.iter().map(|p| path_string(p)).collect(),
        two_step,
        lcv: lcv_data,
    };
    write_json(&a.out.unwrap_or_else(|| PathBuf::from("ranks.json")), &doc)
}

/// Parses `name:0-4,7` into a group with columns 0,1,2,3,4,7.
pub fn parse_group(s: &str) -> CliResult<CovariateGroup> {
    let bad = || CliError::invalid(format!("malformed covariate group '{s}'"));
    let (name, cols) = s.split_once(':').ok_or_else(bad)?;
    let mut columns = Vec::new();
    for part in cols.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((lo, hi)) => {
                let lo: usize = lo.trim().parse().map_err(|_| bad())?;
                let hi: usize = hi.trim().parse().map_err(|_| bad())?;
                if hi < lo {
                    return Err(bad());
                }
                columns.extend(lo..=hi);
            }
            None => columns.push(part.parse().map_err(|_| bad())?),
        }
    }
    if name.trim().is_empty() || columns.is_empty() {
        return Err(bad());
    }
    Ok(CovariateGroup {
        name: name.trim().to_string(),
        columns,
    })
}

/// Parameters and scores from a fit report or a truth manifest.
struct Estimate {
    params: SifaParams<f64>,
    scores: Option<DMatrix<f64>>,
    fit: Option<FitReportFile>,
}

fn load_estimate(path: &Path) -> CliResult<Estimate> {
    match schema_of(path)?.as_str() {
        FIT_SCHEMA => {
            let doc: FitReportFile = read_json(path, FIT_SCHEMA)?;
            Ok(Estimate {
                params: doc.params.to_params()?,
                scores: Some(doc.scores.to_matrix()?),
                fit: Some(doc),
            })
        }
        TRUTH_SCHEMA => {
            let doc: TruthManifest = read_json(path, TRUTH_SCHEMA)?;
            let dir = path.parent().unwrap_or(Path::new("."));
            Ok(Estimate {
                params: doc.params.to_params()?,
                scores: Some(read_matrix(&dir.join(&doc.files.factors))?.values),
                fit: None,
            })
        }
        other => Err(CliError::invalid(format!(
            "{}: not a fit report or truth manifest (schema '{other}')",
            path.display()
        ))),
    }
}

fn check_same_shape(est: &SifaParams<f64>, truth: &SifaParams<f64>) -> CliResult<()> {
    if est.dims() != truth.dims() {
        return Err(CliError::invalid(format!(
            "view widths differ: fit {:?}, truth {:?}",
            est.dims(),
            truth.dims()
        )));
    }
    Ok(())
}

pub fn subspace_metrics(
    est: &SifaParams<f64>,
    scores: Option<&DMatrix<f64>>,
    truth: &SifaParams<f64>,
    signal: Option<&DMatrix<f64>>,
) -> CliResult<SubspaceMetrics> {
    check_same_shape(est, truth)?;
    let grassmannian_individual = est
        .v
        .iter()
        .zip(&truth.v)
        .map(|(a, b)| grassmannian(b, a))
        .collect::<sifa::Result<_>>()?;
    let recovery = match (signal, scores) {
        (Some(s), Some(u)) => Some(recovery_error(s, u, &combined_loadings(est))?),
        _ => None,
    };
    Ok(SubspaceMetrics {
        grassmannian_joint: grassmannian(&truth.stacked_v0(), &est.stacked_v0())?,
        grassmannian_individual,
        max_principal_angle: max_principal_angle(&combined_loadings(truth), &combined_loadings(est))?,
        recovery_error: recovery,
    })
}

pub fn metrics(a: MetricsArgs) -> CliResult<()> {
    let report_path = required(a.report, "--report")?;
    let est = load_estimate(&report_path)?;
    let subspace = match &a.truth {
        Some(tp) => {
            let truth: TruthManifest = read_json(tp, TRUTH_SCHEMA)?;
            let dir = tp.parent().unwrap_or(Path::new("."));
            let signal = read_matrix(&dir.join(&truth.files.signal))?.values;
            let m = subspace_metrics(
                &est.params,
                est.scores.as_ref(),
                &truth.params.to_params()?,
                Some(&signal),
            )?;
            println!(
                "d_G(V0) {:.4}, d_G(V_k) {:?}, max principal angle {:.3}°, recovery error {}",
                m.grassmannian_joint,
                m.grassmannian_individual,
                m.max_principal_angle,
                m.recovery_error.map_or("n/a".into(), |r| format!("{r:.3}"))
            );
            Some(m)
        }
        None => None,
    };
    let variance = if a.variance.unwrap_or(false) {
        let fit_doc = est
            .fit
            .as_ref()
            .ok_or_else(|| CliError::invalid("the variance table needs a fit report"))?;
        let views: Vec<PathBuf> = a
            .views
            .clone()
            .unwrap_or_else(|| fit_doc.views.iter().map(PathBuf::from).collect());
        let covariates = a.covariates.clone().or_else(|| fit_doc.covariates.as_ref().map(PathBuf::from));
        let loaded = load(
            &views,
            covariates.as_deref(),
            fit_doc.centering.is_some(),
            Normalize::None,
            fit_doc.normalization.as_deref(),
        )?;
        let data = loaded.data;
        if data.dims() != est.params.dims() {
            return Err(CliError::invalid(format!(
                "data widths {:?} do not match the fit {:?}",
                data.dims(),
                est.params.dims()
            )));
        }
        let groups = match &a.groups {
            Some(g) => g.iter().map(|s| parse_group(s)).collect::<CliResult<Vec<_>>>()?,
            None if data.q() > 0 => vec![CovariateGroup {
                name: "covariates".into(),
                columns: (0..data.q()).collect(),
            }],
            None => Vec::new(),
        };
        let moments = e_step(&est.params, &data)?;
        let mode: Mode = fit_doc.settings.mode.parse()?;
        let report = FitReport {
            params: est.params.clone(),
            loglik_trace: fit_doc.loglik_trace.clone(),
            iterations: fit_doc.iterations,
            converged: fit_doc.converged,
            elapsed: fit_doc.timings.fit_seconds,
            mode,
            regression: None,
            configuration: if data.covariates.is_some() {
                Configuration::Supervised
            } else {
                Configuration::Jive
            },
            moments,
            structure: None,
            warnings: Vec::new(),
        };
        let table = variance_explained(&report, &data, &groups)?;
        let rows: Vec<VarianceRowData> = table
            .rows
            .iter()
            .map(|r| VarianceRowData {
                view: r.view,
                joint: r.joint,
                individual: r.individual,
                noise: r.noise,
                joint_groups: r.joint_attribution.groups.clone(),
                joint_unknown: r.joint_attribution.unknown,
                individual_groups: r.individual_attribution.groups.clone(),
                individual_unknown: r.individual_attribution.unknown,
            })
            .collect();
        for r in &rows {
            println!(
                "view {}: joint {:.4}, individual {:.4}, noise {:.4}",
                r.view, r.joint, r.individual, r.noise
            );
        }
        Some(VarianceData {
            group_names: table.group_names.clone(),
            rows,
        })
    } else {
        None
    };
    if subspace.is_none() && variance.is_none() {
        return Err(CliError::invalid("nothing to compute: give --truth and/or --variance"));
    }
    if let (Some(path), Some(v)) = (&a.table, &variance) {
        write_atomic(path, variance_table(v, crate::matrix_io::delimiter_for(path)).as_bytes())?;
    }
    let doc = MetricsReport {
        schema: METRICS_SCHEMA.into(),
        version: VERSION.into(),
        report: path_string(&report_path),
        truth: a.truth.as_deref().map(path_string),
        subspace,
        variance,
    };
    write_json(&a.out.unwrap_or_else(|| PathBuf::from("metrics.json")), &doc)
}

/// One row per view and structure: share of the view's variance, then the
/// within-structure shares of each covariate group and of "unknown".
pub fn variance_table(v: &VarianceData, delimiter: u8) -> String {
    let sep = (delimiter as char).to_string();
    let mut header = vec!["view".to_string(), "part".into(), "share".into()];
    header.extend(v.group_names.iter().cloned());
    header.push("unknown".into());
    let mut lines = vec![header.join(&sep)];
    let blank = vec![String::new(); v.group_names.len() + 1];
    for r in &v.rows {
        let mut structure = |part: &str, share: f64, groups: &[f64], unknown: f64| {
            let mut cells = vec![r.view.to_string(), part.to_string(), share.to_string()];
            cells.extend(groups.iter().map(|g| g.to_string()));
            cells.push(unknown.to_string());
            lines.push(cells.join(&sep));
        };
        structure("joint", r.joint, &r.joint_groups, r.joint_unknown);
        structure("individual", r.individual, &r.individual_groups, r.individual_unknown);
        let mut cells = vec![r.view.to_string(), "noise".into(), r.noise.to_string()];
        cells.extend(blank.iter().cloned());
        lines.push(cells.join(&sep));
    }
    lines.join("\n") + "\n"
}

/// Parses `n,p1,..,pK,q`.
pub fn parse_size(s: &str) -> CliResult<(usize, Vec<usize>, usize)> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::invalid(format!("malformed size '{s}', expected n,p1,..,pK,q")))?;
    if v.len() < 3 {
        return Err(CliError::invalid(format!("malformed size '{s}', expected n,p1,..,pK,q")));
    }
    Ok((v[0], v[1..v.len() - 1].to_vec(), v[v.len() - 1]))
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    if x.len() < 2 {
        return (m, 0.0);
    }
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
    (m, var.sqrt())
}

pub fn bench(a: BenchArgs, seed: Option<u64>) -> CliResult<()> {
    let sizes: Vec<(usize, Vec<usize>, usize)> = a
        .sizes
        .unwrap_or_else(|| vec!["100,100,100,10".into()])
        .iter()
        .map(|s| parse_size(s))
        .collect::<CliResult<_>>()?;
    let repeats = a.repeats.unwrap_or(3).max(1);
    let seed = seed.unwrap_or(0);
    let mut rows = Vec::new();
    let mut ranks_used = String::new();
    for (n, dims, q) in sizes {
        let ranks = match &a.ranks {
            Some(r) => parse_ranks(r)?,
            None => RankSet::new(2, vec![3; dims.len()]),
        };
        ranks_used = ranks.to_string();
        let mut spec = SimSpec::new(Setting::Orthogonal, seed);
        spec.n = n;
        spec.noise = Noise::Gaussian(vec![spec.noise.sd()[0]; dims.len()]);
        spec.dims = dims.clone();
        spec.q = q;
        spec.ranks = ranks.clone();
        spec.validate()?;
        let (data, _) = gen_setting(&spec)?;
        for mode in [Mode::General, Mode::Orthogonal] {
            let options = fit_options(mode, RegressionFamily::Linear, a.tol, a.max_iters, Some(seed));
            let mut seconds = Vec::with_capacity(repeats);
            let mut iterations = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                let t = Instant::now();
                let rep = fit(&data, &ranks, &options)?;
                seconds.push(t.elapsed().as_secs_f64());
                iterations.push(rep.iterations);
            }
            let (mean, sd) = mean_sd(&seconds);
            let entries = n * dims.iter().sum::<usize>();
            println!("n {n}, p {dims:?}, q {q}, {mode}: {mean:.3}s ± {sd:.3}s over {repeats} runs");
            rows.push(BenchRow {
                n,
                dims: dims.clone(),
                q,
                entries,
                mode: mode.to_string(),
                seconds,
                mean_seconds: mean,
                sd_seconds: sd,
                iterations,
            });
        }
    }
    if let Some(path) = &a.table {
        let sep = (crate::matrix_io::delimiter_for(path) as char).to_string();
        let mut lines = vec![["n", "p", "q", "entries", "mode", "mean_seconds", "sd_seconds"].join(&sep)];
        for r in &rows {
            let p: Vec<String> = r.dims.iter().map(|d| d.to_string()).collect();
            lines.push(
                [
                    r.n.to_string(),
                    p.join("+"),
                    r.q.to_string(),
                    r.entries.to_string(),
                    r.mode.clone(),
                    r.mean_seconds.to_string(),
                    r.sd_seconds.to_string(),
                ]
                .join(&sep),
            );
        }
        write_atomic(path, (lines.join("\n") + "\n").as_bytes())?;
    }
    let doc = BenchReport {
        schema: BENCH_SCHEMA.into(),
        version: VERSION.into(),
        ranks: ranks_used,
        repeats,
        seed,
        rows,
    };
    write_json(&a.out.unwrap_or_else(|| PathBuf::from("bench.json")), &doc)
}

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bbgc::data::{
    read_csv, write_csv, write_mask_csv, write_matrix_csv, MixedDataset, Schema,
    DEFAULT_MISSING_TOKEN,
};
use bbgc::eval::{
    coverage_experiment, impute_knn, impute_mean, nrmse, reports_to_csv, reports_to_table,
    run_benchmark, simulate_dataset, BenchmarkConfig, BenchmarkSource, CoverageConfig, Method,
    SimulationDesign, DEFAULT_KNN_K,
};
use bbgc::gibbs::{run_bbgc, ChainConfig, MarginalMode, OrdinalPoint};
use bbgc::kernels::DEFAULT_SEED;
use bbgc::missingness::{ampute, Amount, Mechanism, MissingnessSpec};
use serde_json::{json, Value};

use crate::config::ConfigFile;
use crate::{
    io_err, AmputeArgs, BenchmarkArgs, ChainArgs, Cli, CliError, Command, CoverageArgs, DesignArgs,
    ImputeArgs, SimulateArgs,
};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: Cli) -> Result<()> {
    let cfg = ConfigFile::load(cli.config.as_deref())?;
    let threads = cfg.pick_opt(cli.threads, "threads")?;
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => simulate(&cfg, a),
        Command::Ampute(a) => ampute_cmd(&cfg, a),
        Command::Impute(a) => impute(&cfg, a, threads),
        Command::Benchmark(a) => benchmark(&cfg, a, threads),
        Command::Coverage(a) => coverage(&cfg, a),
    }
}

fn required(path: Option<PathBuf>, cfg: &ConfigFile, key: &str) -> Result<PathBuf> {
    cfg.pick_opt(path, key)?
        .ok_or_else(|| CliError::Usage(format!("missing required --{key}")))
}

fn design(cfg: &ConfigFile, a: DesignArgs) -> Result<SimulationDesign> {
    let d = SimulationDesign::default();
    let design = SimulationDesign {
        n: cfg.pick(a.n, "n", d.n)?,
        p: cfg.pick(a.p, "p", d.p)?,
        seed: cfg.pick(a.seed, "seed", d.seed)?,
        ..d
    };
    design.validate()?;
    Ok(design)
}

fn chain(cfg: &ConfigFile, a: &ChainArgs, seed: u64) -> Result<(ChainConfig<f64>, usize)> {
    let d = ChainConfig::<f64>::default();
    let c = ChainConfig {
        m_marginal_draws: cfg.pick(a.m, "m", d.m_marginal_draws)?,
        iters_per_draw: cfg.pick(a.iters, "iters", d.iters_per_draw)?,
        burn_in: cfg.pick(a.burnin, "burnin", d.burn_in)?,
        thin: cfg.pick(a.thin, "thin", d.thin)?,
        marginals: cfg.pick(a.marginals, "marginals", MarginalMode::Bootstrap)?,
        seed,
        ..d
    };
    c.validate()?;
    let k = cfg.pick(a.k, "k", DEFAULT_KNN_K)?;
    Ok((c, k))
}

fn load(
    cfg: &ConfigFile,
    input: Option<PathBuf>,
    schema: Option<PathBuf>,
    token: Option<String>,
) -> Result<(MixedDataset<f64>, PathBuf, PathBuf, String)> {
    let input = required(input, cfg, "input")?;
    let schema_path = required(schema, cfg, "schema")?;
    let token = cfg.pick(token, "missing-token", DEFAULT_MISSING_TOKEN.to_string())?;
    let schema = Schema::read(&schema_path)?;
    let data = read_csv(&input, &schema, &token)?;
    Ok((data, input, schema_path, token))
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).expect("serializable report");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

fn simulate(cfg: &ConfigFile, a: SimulateArgs) -> Result<()> {
    let out_dir = required(a.out_dir, cfg, "out-dir")?;
    let design = design(cfg, a.design)?;
    let sim = simulate_dataset::<f64>(&design)?;
    mkdir(&out_dir)?;
    let data = out_dir.join("data.csv");
    let schema = out_dir.join("data.schema");
    let r = out_dir.join("r_true.csv");
    write_csv(&sim.data, &data, DEFAULT_MISSING_TOKEN)?;
    sim.data.schema().write(&schema)?;
    write_matrix_csv(&sim.r_true, sim.data.names(), &r)?;
    write_json(
        &out_dir.join("simulation.json"),
        &json!({
            "command": "simulate",
            "design": design,
            "ordinal_offsets": sim.offsets,
            "files": { "data": show(&data), "schema": show(&schema), "r_true": show(&r) },
        }),
    )?;
    eprintln!(
        "wrote {}x{} dataset to {}",
        design.n,
        design.p,
        out_dir.display()
    );
    Ok(())
}

fn ampute_cmd(cfg: &ConfigFile, a: AmputeArgs) -> Result<()> {
    let (data, _, _, token) = load(cfg, a.input.input, a.input.schema, a.input.missing_token)?;
    let out = required(a.out, cfg, "out")?;
    let mechanism = cfg.pick(a.mechanism, "mechanism", Mechanism::Mcar)?;
    let rate = cfg.pick_opt(a.rate, "rate")?;
    let count = cfg.pick_opt(a.count, "count")?;
    let amount = match (rate, count) {
        (Some(r), None) => Amount::Rate(r),
        (None, Some(c)) => Amount::Count(c),
        _ => {
            return Err(CliError::Usage(
                "give exactly one of --rate and --count".into(),
            ))
        }
    };
    let anchors = cfg.pick_list(
        a.anchors,
        "anchors",
        if mechanism == Mechanism::Mar {
            vec![0]
        } else {
            vec![]
        },
    )?;
    let spec = MissingnessSpec {
        mechanism,
        amount,
        anchors,
        seed: cfg.pick(a.seed, "seed", DEFAULT_SEED)?,
        beta: cfg.pick(a.beta, "beta", 1.0)?,
    };
    let masked = ampute(&data, &spec)?;
    write_csv(&masked, &out, &token)?;
    if let Some(mask) = cfg.pick_opt(a.mask, "mask")? {
        write_mask_csv(&masked, &mask)?;
    }
    eprintln!(
        "masked {} cells ({} missing in total) -> {}",
        masked.missing_count() - data.missing_count(),
        masked.missing_count(),
        out.display()
    );
    Ok(())
}

fn impute(cfg: &ConfigFile, a: ImputeArgs, threads: Option<usize>) -> Result<()> {
    let (data, input, schema, token) =
        load(cfg, a.input.input, a.input.schema, a.input.missing_token)?;
    let out = required(a.out, cfg, "out")?;
    let method = cfg.pick(a.method, "method", Method::Bbgc)?;
    let seed = cfg.pick(a.seed, "seed", DEFAULT_SEED)?;
    let (chain_cfg, k) = chain(cfg, &a.chain, seed)?;
    let truth_path = cfg.pick_opt(a.truth, "truth")?;
    let report_path = cfg.pick_opt(a.report, "report")?;

    let start = Instant::now();
    let mut details = json!({});
    let imputed = match method {
        Method::Mean => impute_mean(&data)?,
        Method::Knn => impute_knn(&data, k)?,
        Method::Bbgc => {
            let s = run_bbgc(&data, &chain_cfg)?;
            let p = s.active_columns.len();
            details = json!({
                "active_columns": s.active_columns,
                "retained_draws": s.retained,
                "r_mean": (0..p).map(|i| s.r_mean.row(i).to_vec()).collect::<Vec<_>>(),
                "constant_fills": s.constant_fills,
                "diagnostics": s.diagnostics,
            });
            s.imputed_dataset(&data)
        }
    };
    eprintln!(
        "{} imputed {} cells in {:.2}s",
        method,
        data.missing_count(),
        start.elapsed().as_secs_f64()
    );
    write_csv(&imputed, &out, &token)?;

    let score = match &truth_path {
        None => None,
        Some(t) => {
            let truth = read_csv::<f64>(t, &data.schema(), &token)?;
            if (truth.n_rows(), truth.n_cols()) != (data.n_rows(), data.n_cols()) {
                return Err(CliError::Usage(
                    "--truth has a different shape from --input".into(),
                ));
            }
            let cells: Vec<(usize, usize)> = data
                .index_sets()
                .missing()
                .filter(|&(i, j)| truth.is_observed(i, j))
                .collect();
            Some(nrmse(
                &truth.to_matrix(f64::NAN),
                &imputed.to_matrix(f64::NAN),
                &cells,
            )?)
        }
    };
    if let Some(score) = score {
        println!("NRMSE {score}");
    }

    if let Some(path) = report_path {
        write_json(
            &path,
            &json!({
                "command": "impute",
                "config": {
                    "input": show(&input),
                    "schema": show(&schema),
                    "out": show(&out),
                    "missing_token": token,
                    "method": method,
                    "seed": seed,
                    "chain": chain_cfg,
                    "k": k,
                    "threads": threads,
                    "truth": truth_path.as_deref().map(show),
                },
                "n_rows": data.n_rows(),
                "n_cols": data.n_cols(),
                "n_missing": data.missing_count(),
                "nrmse": score,
                "bbgc": details,
            }),
        )?;
    }
    Ok(())
}

fn benchmark(cfg: &ConfigFile, a: BenchmarkArgs, threads: Option<usize>) -> Result<()> {
    let defaults = BenchmarkConfig::<f64>::default();
    let input = cfg.pick_opt(a.input, "input")?;
    let seed = cfg.pick(a.design.seed, "seed", DEFAULT_SEED)?;
    let (source, source_echo) = match input {
        Some(input) => {
            let (data, input, schema, _) = load(cfg, Some(input), a.schema, a.missing_token)?;
            let offsets = vec![0.0; data.n_cols()];
            (
                BenchmarkSource::Fixed { data, offsets },
                json!({ "input": show(&input), "schema": show(&schema) }),
            )
        }
        None => {
            let d = design(cfg, a.design)?;
            let echo = json!({ "design": d });
            (BenchmarkSource::Simulated(d), echo)
        }
    };
    let (chain_cfg, k) = chain(cfg, &a.chain, seed)?;
    let bench = BenchmarkConfig {
        mechanisms: cfg.pick_list(a.mechanisms, "mechanisms", defaults.mechanisms)?,
        rates: cfg.pick_list(a.rates, "rates", defaults.rates)?,
        methods: cfg.pick_list(a.methods, "methods", defaults.methods)?,
        replications: cfg.pick(a.reps, "reps", defaults.replications)?,
        base_seed: seed,
        chain: chain_cfg,
        knn_k: k,
        anchors: cfg.pick_list_opt(a.anchors, "anchors")?,
        ordinal_point: cfg.pick(a.ordinal_point, "ordinal-point", OrdinalPoint::Mean)?,
    };
    bench.validate()?;
    let out = cfg.pick_opt(a.out, "out")?;
    let table_path = cfg.pick_opt(a.table, "table")?;
    let report_path = cfg.pick_opt(a.report, "report")?;

    let start = Instant::now();
    let result = run_benchmark(&source, &bench)?;
    for r in &result.reports {
        eprintln!(
            "{} {} {:.0}%: {:.2}s per replication",
            r.method,
            r.mechanism,
            r.rate * 100.0,
            r.mean_seconds
        );
    }
    eprintln!(
        "benchmark finished in {:.1}s",
        start.elapsed().as_secs_f64()
    );

    let csv = reports_to_csv(&result.reports);
    let table = reports_to_table(&result.reports);
    print!("{table}");
    if let Some(p) = &out {
        write_text(p, &csv)?;
    }
    if let Some(p) = &table_path {
        write_text(p, &table)?;
    }
    if let Some(p) = report_path {
        // runtimes stay on stderr so the report depends only on the seeds
        let rows: Vec<Value> = result
            .reports
            .iter()
            .map(|r| {
                json!({
                    "method": r.method,
                    "mechanism": r.mechanism,
                    "rate": r.rate,
                    "nrmse_mean": r.nrmse_mean,
                    "nrmse_sd": r.nrmse_sd,
                    "sd_defined": r.sd_defined,
                    "replications": r.replications,
                })
            })
            .collect();
        let runs: Vec<Value> = result
            .runs
            .iter()
            .map(|r| json!({ "method": r.method, "mechanism": r.mechanism, "rate": r.rate, "replication": r.replication, "nrmse": r.nrmse }))
            .collect();
        write_json(
            &p,
            &json!({
                "command": "benchmark",
                "config": {
                    "source": source_echo,
                    "benchmark": bench,
                    "threads": threads,
                    "out": out.as_deref().map(show),
                    "table": table_path.as_deref().map(show),
                },
                "reports": rows,
                "runs": runs,
            }),
        )?;
    }
    Ok(())
}

fn coverage(cfg: &ConfigFile, a: CoverageArgs) -> Result<()> {
    let design = design(cfg, a.design)?;
    let d = CoverageConfig::default();
    let cc = CoverageConfig {
        rate: cfg.pick(a.rate, "rate", d.rate)?,
        n_draws: cfg.pick(a.draws, "draws", d.n_draws)?,
        level: cfg.pick(a.level, "level", d.level)?,
        columns: cfg.pick_list_opt(a.columns, "columns")?,
        seed: design.seed,
    };
    let out_dir = required(a.out_dir, cfg, "out-dir")?;
    let cov = coverage_experiment::<f64>(&design, &cc)?;
    mkdir(&out_dir)?;
    let mut csv = format!("# level={}\ncolumn,block,n_observed,coverage\n", cc.level);
    let mut bands = Vec::new();
    for c in &cov {
        csv.push_str(
            &format!(
                "{},{:?},{},{}\n",
                c.column, c.block, c.n_observed, c.coverage
            )
            .to_lowercase(),
        );
        let path = out_dir.join(format!("band_x{}.csv", c.column + 1));
        write_text(
            &path,
            &format!("# level={}\n{}", cc.level, c.band.to_csv_string()),
        )?;
        bands.push(show(&path));
        eprintln!(
            "x{} ({:?}): coverage {:.4}",
            c.column + 1,
            c.block,
            c.coverage
        );
    }
    write_text(&out_dir.join("coverage.csv"), &csv)?;
    write_json(
        &out_dir.join("coverage.json"),
        &json!({
            "command": "coverage",
            "config": { "design": design, "coverage": cc },
            "columns": cov,
            "band_files": bands,
        }),
    )?;
    Ok(())
}

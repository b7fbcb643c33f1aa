use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use schmidt_cli::config::ExperimentConfig;
use rayon::prelude::*;
use schmidt_games::dynamics::{log_derivative_lipschitz, SystemSpec};
use schmidt_games::games::{play_game, GameKind, GameTranscript};
use schmidt_games::strategies::*;
use schmidt_games::tilings::{certify_tiling, CertificationReport, TilingFamily};
use schmidt_games::verification::*;
use schmidt_games::{MetricBall, TorusPoint};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

/// Exit status when a run completes but misses its acceptance threshold.
const THRESHOLD_FAILED: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "schmidt", version, about = "Play, verify and measure Schmidt-type games for torus maps")]
struct Cli {
    /// TOML experiment file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[arg(long, global = true, env = "SCHMIDT_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "SCHMIDT_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the strategy constants for a configuration.
    Derive(Overrides),
    /// Play one game and write its transcript.
    Play {
        #[command(flatten)]
        o: Overrides,
        /// Transcript path; defaults to `<out>/game-<seed>.jsonl`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Play many games and write a CSV summary sorted by seed.
    Batch {
        #[command(flatten)]
        o: Overrides,
        /// Summary path; defaults to `<out>/summary.csv`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Add a runtime_ms column (makes the file scheduling dependent).
        #[arg(long)]
        timing: bool,
        /// Also write every transcript.
        #[arg(long)]
        transcripts: bool,
    },
    /// Replay a transcript and print its avoidance report.
    Verify { transcript: PathBuf },
    /// Build and certify an f-induced tiling.
    Tiling {
        #[command(flatten)]
        o: Overrides,
        #[arg(long)]
        levels: Option<u32>,
    },
    /// Box-counting dimension of the survivor set of a hole.
    Dimension {
        #[arg(long, default_value = "tripling")]
        system: String,
        /// Hole given as the digit string of a branch cylinder, e.g. `1` or `00`.
        #[arg(long, conflicts_with_all = ["hole_center", "hole_radius"])]
        hole_cylinder: Option<String>,
        #[arg(long, requires = "hole_radius")]
        hole_center: Option<f64>,
        #[arg(long, requires = "hole_center")]
        hole_radius: Option<f64>,
        #[arg(long, default_value_t = 14)]
        depth: u32,
    },
    /// Empirical distortion constant over a range of scales.
    Distortion {
        #[arg(long, default_value = "circle:2:0.05")]
        system: String,
        #[arg(long = "c", value_delimiter = ',', default_values_t = [0.1, 0.01, 0.001])]
        scales: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        k_max: u32,
        #[arg(long, default_value_t = 10_000)]
        samples: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// `doubling`, `tripling`, `circle:m:delta`, `cat`, `perturbed_cat:delta`, `conformal:a:b`.
    #[arg(long)]
    system: Option<String>,
    /// `potential`, `schmidt` or `modified`.
    #[arg(long)]
    game: Option<String>,
    /// Comma-separated target coordinates.
    #[arg(long, value_delimiter = ',')]
    target: Option<Vec<f64>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    a: Option<u32>,
    #[arg(long)]
    b: Option<u32>,
    /// Radius of Bob's opening ball.
    #[arg(long, alias = "rho1")]
    rho: Option<f64>,
    #[arg(long)]
    depth: Option<u32>,
    #[arg(long)]
    games: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// `random`, `concentric` or `hole_seeking`.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    tiling_seed: Option<u64>,
}

struct Ctx {
    json: bool,
    out_dir: PathBuf,
    workers: Option<usize>,
    base: ExperimentConfig,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(THRESHOLD_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let base = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let ctx = Ctx {
        json: cli.json,
        out_dir: cli.out_dir.clone().unwrap_or_else(|| base.output.dir.clone()),
        workers: cli.workers,
        base,
    };
    match cli.command {
        Command::Derive(o) => derive(&ctx, &o),
        Command::Play { o, output } => play(&ctx, &o, output),
        Command::Batch { o, output, timing, transcripts } => batch(&ctx, &o, output, timing, transcripts),
        Command::Verify { transcript } => verify(&ctx, &transcript),
        Command::Tiling { o, levels } => tiling(&ctx, &o, levels),
        Command::Dimension { system, hole_cylinder, hole_center, hole_radius, depth } => {
            dimension(&ctx, &system, hole_cylinder.as_deref(), hole_center.zip(hole_radius), depth)
        }
        Command::Distortion { system, scales, k_max, samples, seed } => distortion(&ctx, &system, &scales, k_max, samples, seed),
    }
}

fn apply(base: &ExperimentConfig, o: &Overrides) -> Result<ExperimentConfig> {
    let mut c = base.clone();
    if let Some(s) = &o.system {
        c.system = SystemSpec::parse_short(s)?;
        if o.target.is_none() && c.target.len() != c.system.dim() {
            c.target = if c.system.dim() == 2 { vec![0.5, 0.5] } else { vec![0.0] };
        }
    }
    if let Some(g) = &o.game {
        c.game = g.parse()?;
    } else if o.system.is_some() && c.system.is_anosov() && c.game == GameKind::Potential {
        c.game = GameKind::Schmidt;
    }
    macro_rules! set {
        ($src:expr => $dst:expr) => {
            if let Some(v) = $src.clone() {
                $dst = v;
            }
        };
    }
    set!(o.target => c.target);
    set!(o.beta => c.params.beta);
    set!(o.gamma => c.params.gamma);
    set!(o.rho => c.params.rho);
    set!(o.games => c.games);
    set!(o.seed => c.seed);
    set!(o.epsilon => c.tiling.epsilon);
    set!(o.tiling_seed => c.tiling.seed);
    c.params.alpha = o.alpha.or(c.params.alpha);
    c.params.a = o.a.or(c.params.a);
    c.params.b = o.b.or(c.params.b);
    c.depth = o.depth.or(c.depth);
    if let Some(p) = &o.policy {
        c.policy = p.parse()?;
    }
    c.validate()?;
    Ok(c)
}

/// Derived constants plus, for modified games, the certified tiling.
struct Prepared {
    constants: StrategyConstants,
    tiling: Option<Arc<TilingFamily>>,
    depth: u32,
    notes: Vec<String>,
}

fn certified_tiling(c: &ExperimentConfig) -> Result<(TilingFamily, CertificationReport)> {
    let mut t = TilingFamily::new(c.system.clone(), c.tiling.epsilon, c.tiling.seed)?;
    let rep = certify_tiling(&mut t, c.tiling.levels, c.tiling.seed)?;
    Ok((t, rep))
}

fn prepare(c: &ExperimentConfig) -> Result<Prepared> {
    let y = TorusPoint::from_f64(&c.target, 128);
    let p = &c.params;
    let mut notes = Vec::new();
    let (constants, tiling) = match c.game {
        GameKind::Potential => match derive_potential_constants(&c.system, p.beta, p.gamma, p.rho, &y) {
            Err(schmidt_games::Error::Infeasible(_)) => {
                // ρ₁ above c′/100: clamp it rather than refuse
                let probe = derive_potential_constants(&c.system, p.beta, p.gamma, 1e-12, &y)?;
                let rho = probe.c_prime / 100.0;
                notes.push(format!("rho1 = {} exceeds c'/100; clamped to {rho:e}", p.rho));
                (StrategyConstants::Potential(derive_potential_constants(&c.system, p.beta, p.gamma, rho, &y)?), None)
            }
            k => (StrategyConstants::Potential(k?), None),
        },
        GameKind::Schmidt => {
            let k = derive_anosov_constants(&c.system, p.beta, p.rho, &y)?;
            if let Some(a) = p.alpha {
                if (a - k.alpha).abs() > 1e-12 * k.alpha {
                    bail!("alpha is derived from beta and rho ({}), got {a}", k.alpha);
                }
            }
            (StrategyConstants::Anosov(k), None)
        }
        GameKind::Modified => {
            let (t, _) = certified_tiling(c)?;
            let mut k = derive_modified_constants(&c.system, p.b, &t, c.tiling.seed, &y)?;
            if let Some(a) = p.a {
                if a <= k.a_star {
                    bail!("a = {a} must exceed a_* = {}", k.a_star);
                }
                if a < k.a {
                    bail!("a = {a} is below the smallest admissible value {}", k.a);
                }
                let extra = k.n1 - (k.a + k.b) * k.r;
                k.a = a;
                k.r = modified_r(k.eta, k.a, k.b);
                k.n1 = (k.a + k.b) * k.r + extra;
            }
            (StrategyConstants::Modified(k), Some(Arc::new(t)))
        }
        GameKind::Absolute => unreachable!("rejected by validation"),
    };
    let r = match &constants {
        StrategyConstants::Potential(k) => k.r,
        StrategyConstants::Anosov(k) => k.r,
        StrategyConstants::Modified(k) => k.r,
    };
    Ok(Prepared { constants, tiling, depth: c.depth.unwrap_or(10 * r), notes })
}

fn print_table(rows: &[(String, String)]) {
    let w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    for (k, v) in rows {
        println!("{k:<w$}  {v}");
    }
}

fn emit<T: Serialize>(ctx: &Ctx, value: &T, human: impl FnOnce()) -> Result<()> {
    if ctx.json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        human();
    }
    Ok(())
}

fn derive(ctx: &Ctx, o: &Overrides) -> Result<bool> {
    let c = apply(&ctx.base, o)?;
    let p = prepare(&c)?;
    let problems = p.constants.check();
    emit(ctx, &serde_json::json!({ "constants": p.constants, "depth": p.depth, "problems": problems, "notes": p.notes }), || {
        print_table(&p.constants.table());
        for n in &p.notes {
            println!("note: {n}");
        }
        for m in &problems {
            println!("check failed: {m}");
        }
    })?;
    Ok(problems.is_empty())
}

#[derive(Debug, Serialize, serde::Deserialize)]
struct SummaryRow {
    seed: u64,
    kind: GameKind,
    depth: u32,
    pass: bool,
    min_distance: f64,
    horizon: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    runtime_ms: Option<u64>,
}

fn play_one(p: &Prepared, c: &ExperimentConfig, seed: u64) -> Result<(GameTranscript, AvoidanceReport)> {
    let mut g = prepare_game(&p.constants, c.policy, p.depth, p.tiling.clone())?;
    let t = play_game(&g.setup, g.alice.as_mut(), g.bob.as_mut(), p.depth, seed)?;
    let rep = verify_transcript_with(&t, &p.constants, p.tiling.clone())?;
    Ok((t, rep))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn play(ctx: &Ctx, o: &Overrides, output: Option<PathBuf>) -> Result<bool> {
    let c = apply(&ctx.base, o)?;
    let p = prepare(&c)?;
    p.notes.iter().for_each(|n| eprintln!("note: {n}"));
    let (t, rep) = play_one(&p, &c, c.seed)?;
    let path = output.unwrap_or_else(|| ctx.out_dir.join(format!("game-{}.jsonl", c.seed)));
    write_file(&path, &t.to_jsonl())?;
    emit(ctx, &rep, || {
        println!("transcript  {}", path.display());
        print_report(&rep);
    })?;
    Ok(rep.pass)
}

fn print_report(rep: &AvoidanceReport) {
    println!("kind        {}", rep.kind);
    println!("pass        {}", rep.pass);
    println!("horizon     {}", rep.horizon);
    println!("min_dist    {:e}", rep.min_distance);
    println!("threshold   {:e}", rep.threshold);
    println!("removal_win {}", rep.removal_win);
    if !rep.uncovered.is_empty() {
        println!("uncovered   {:?}", rep.uncovered);
    }
    for n in &rep.notes {
        println!("note        {n}");
    }
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            bail!("SCHMIDT_WORKERS must be positive");
        }
        b = b.num_threads(w);
    }
    Ok(b.build()?)
}

fn batch(ctx: &Ctx, o: &Overrides, output: Option<PathBuf>, timing: bool, transcripts: bool) -> Result<bool> {
    let c = apply(&ctx.base, o)?;
    let p = prepare(&c)?;
    p.notes.iter().for_each(|n| eprintln!("note: {n}"));
    let transcripts = transcripts || c.output.transcripts;
    let seeds: Vec<u64> = (c.seed..c.seed + c.games as u64).collect();
    let results: Vec<Result<(SummaryRow, Option<String>)>> = pool(ctx.workers)?.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let t0 = Instant::now();
                let (t, rep) = play_one(&p, &c, seed)?;
                let row = SummaryRow {
                    seed,
                    kind: t.kind,
                    depth: t.depth,
                    pass: rep.pass,
                    min_distance: rep.min_distance,
                    horizon: rep.horizon,
                    runtime_ms: timing.then(|| t0.elapsed().as_millis() as u64),
                };
                Ok((row, transcripts.then(|| t.to_jsonl())))
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        let (row, text) = r?;
        if let Some(text) = text {
            write_file(&ctx.out_dir.join(format!("game-{}.jsonl", row.seed)), &text)?;
        }
        rows.push(row);
    }
    rows.sort_by_key(|r| r.seed);
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    let text = String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?)?;
    let path = output.unwrap_or_else(|| ctx.out_dir.join("summary.csv"));
    write_file(&path, &text)?;
    let passed = rows.iter().filter(|r| r.pass).count();
    emit(ctx, &serde_json::json!({ "summary": path, "games": rows.len(), "passed": passed, "rows": rows }), || {
        println!("{passed}/{} games passed; summary in {}", rows.len(), path.display());
    })?;
    Ok(passed == rows.len())
}

fn verify(ctx: &Ctx, path: &Path) -> Result<bool> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let t = GameTranscript::from_jsonl(&text)?;
    let value = t.constants.clone().ok_or_else(|| anyhow!("transcript carries no strategy constants"))?;
    let constants: StrategyConstants = serde_json::from_value(value)?;
    let tiling = match &constants {
        StrategyConstants::Modified(k) => {
            let mut t = TilingFamily::new(k.system.clone(), k.epsilon, k.tiling_seed)?;
            t.a_star = Some(k.a_star);
            Some(Arc::new(t))
        }
        _ => None,
    };
    let rep = verify_transcript_with(&t, &constants, tiling)?;
    emit(ctx, &rep, || print_report(&rep))?;
    Ok(rep.pass)
}

fn tiling(ctx: &Ctx, o: &Overrides, levels: Option<u32>) -> Result<bool> {
    let mut c = ctx.base.clone();
    c.game = GameKind::Modified;
    if let Some(l) = levels {
        c.tiling.levels = l;
    }
    let c = apply(&c, o)?;
    let (_, rep) = certified_tiling(&c)?;
    // MSG2: the fitted rate may not fall noticeably below log σ₁
    let rate_ok = rep.sigma >= 0.98 * rep.log_sigma1;
    let ok = rep.condition1_ok && rep.disjoint_ok && rep.cover_ok && rate_ok;
    let path = ctx.out_dir.join("tiling.csv");
    write_file(&path, &rep.to_csv())?;
    emit(ctx, &rep, || {
        println!("a_*         {}", rep.a_star);
        println!("sigma       {:.6} (log sigma1 {:.6})", rep.sigma, rep.log_sigma1);
        println!("C           {:e}", rep.c_const);
        println!("condition1  {}", rep.condition1_ok);
        println!("disjoint    {}", rep.disjoint_ok);
        println!("cover       {}", rep.cover_ok);
        println!("levels      {}", path.display());
    })?;
    Ok(ok)
}

/// Ball equal to the cylinder of points whose base-`m` expansion starts with `digits`.
fn cylinder_hole(m: u32, digits: &str) -> Result<MetricBall> {
    if digits.is_empty() {
        bail!("empty cylinder");
    }
    let (mut lo, mut width) = (0.0, 1.0);
    for ch in digits.chars() {
        let d = ch.to_digit(10).filter(|&d| d < m).ok_or_else(|| anyhow!("{ch:?} is not a base-{m} digit"))?;
        width /= m as f64;
        lo += d as f64 * width;
    }
    Ok(MetricBall::from_f64(&[lo + width / 2.0], width / 2.0, 64)?)
}

fn dimension(ctx: &Ctx, system: &str, cylinder: Option<&str>, ball: Option<(f64, f64)>, depth: u32) -> Result<bool> {
    let sys = SystemSpec::parse_short(system)?;
    let SystemSpec::CircleExpanding { m, .. } = sys else { bail!("dimension estimates need a circle map") };
    let hole = match (cylinder, ball) {
        (Some(d), _) => cylinder_hole(m, d)?,
        (None, Some((x, r))) => MetricBall::from_f64(&[x], r, 64)?,
        (None, None) => bail!("give --hole-cylinder or --hole-center with --hole-radius"),
    };
    let est = survivor_box_dimension(&sys, &hole, depth)?;
    let ok = est.discrepancy.is_none_or(|d| d <= 0.05);
    emit(ctx, &est, || {
        println!("fit     {:.5}", est.slope);
        match est.oracle {
            Some(o) => println!("oracle  {o:.5}"),
            None => println!("oracle  none (nonlinear map or unaligned hole)"),
        }
    })?;
    Ok(ok)
}

#[derive(Serialize)]
struct DistortionRow {
    c: f64,
    k_hat: f64,
    bound: f64,
}

fn distortion(ctx: &Ctx, system: &str, scales: &[f64], k_max: u32, samples: u32, seed: u64) -> Result<bool> {
    let sys = SystemSpec::parse_short(system)?;
    if sys.dim() != 1 {
        bail!("distortion sweeps need a circle map");
    }
    let sigma1 = sys.expansion_bounds()?.sigma1;
    let l = log_derivative_lipschitz(&sys);
    let rows: Vec<DistortionRow> = scales
        .iter()
        .map(|&c| DistortionRow { c, k_hat: empirical_distortion(&sys, c, k_max, samples, seed), bound: (2.0 * l * 2.0 * c / (1.0 - 1.0 / sigma1)).exp() })
        .collect();
    let ok = rows.iter().all(|r| r.k_hat <= r.bound);
    emit(ctx, &rows, || {
        for r in &rows {
            println!("c={:<8} K_hat={:.6} bound={:.6}", r.c, r.k_hat, r.bound);
        }
    })?;
    Ok(ok)
}

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context as _};
use evitlab_core::decision::{
    evit_curve, null_expected_utility, optimize_strategy, positive_transfer_threshold, rank_candidates, unit_grid,
    write_evit_csv, Candidate, EvitResult, Recommendation,
};
use evitlab_core::regressor::{density_on_simplex, predict_quality, write_loss_csv, QualityForecast};
use evitlab_core::taskgen::bundles_from_population;
use evitlab_core::{
    build_transfer_dataset, generate_population, modal_analysis, similarity_score, train, ModalModel, Population,
    TrainedModel, TransferDataset,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::svg::{simplex_heatmap, Chart};

pub const POPULATION_FILE: &str = "population.json";
pub const TASKS_FILE: &str = "tasks.csv";
pub const MODEL_FILE: &str = "model.json";
pub const LOSS_FILE: &str = "loss.csv";
pub const QUALITY_FILES: [&str; 3] = ["quality_tr.svg", "quality_fpr.svg", "quality_fnr.svg"];
pub const EVIT_FILE: &str = "evit.csv";
pub const EVIT_PLOT: &str = "evit.svg";
pub const RECOMMENDATION_FILE: &str = "recommendation.json";
pub const RANKING_FILE: &str = "ranking.csv";
pub const FORECAST_FILE: &str = "forecast.json";
pub const SIMPLEX_PLOT: &str = "simplex.svg";

/// Why a command failed; decides the process exit code.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Compute(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Compute(_) => 3,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Compute(e) => e,
        }
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;

pub trait Classify<T> {
    fn config_err(self) -> Outcome<T>;
    fn compute_err(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config_err(self) -> Outcome<T> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn compute_err(self) -> Outcome<T> {
        self.map_err(|e| Failure::Compute(e.into()))
    }
}

pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub force: bool,
    pub parallelism: usize,
}

impl Context {
    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Refuses to clobber existing outputs unless forced, then makes sure
    /// the output directory exists.
    pub fn claim(&self, names: &[&str]) -> Outcome {
        if !self.force {
            if let Some(existing) = names.iter().map(|n| self.path(n)).find(|p| p.exists()) {
                return Err(Failure::Config(anyhow!(
                    "{} already exists; pass --force to overwrite",
                    existing.display()
                )));
            }
        }
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display())).compute_err()
    }

    /// Like [`Context::claim`] but for a whole run: the directory must be
    /// empty or absent.
    pub fn claim_directory(&self) -> Outcome {
        if !self.force && self.out.is_dir() {
            let occupied = fs::read_dir(&self.out).map(|mut d| d.next().is_some()).unwrap_or(false);
            if occupied {
                return Err(Failure::Config(anyhow!(
                    "output directory {} is not empty; pass --force to overwrite",
                    self.out.display()
                )));
            }
        }
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display())).compute_err()
    }

    /// Writes through a temporary sibling so a failed stage never leaves a
    /// truncated artifact behind.
    fn write(&self, name: &str, fill: impl FnOnce(&mut BufWriter<fs::File>) -> anyhow::Result<()>) -> Outcome {
        let path = self.path(name);
        let tmp = self.path(&format!(".{name}.tmp"));
        let result = (|| {
            let mut w = BufWriter::new(fs::File::create(&tmp)?);
            fill(&mut w)?;
            w.flush()?;
            drop(w);
            fs::rename(&tmp, &path)?;
            Ok::<_, anyhow::Error>(())
        })();
        if result.is_err() {
            let _ = fs::remove_file(&tmp);
        }
        result.with_context(|| format!("writing {}", path.display())).compute_err()
    }

    fn write_text(&self, name: &str, text: &str) -> Outcome {
        self.write(name, |w| Ok(w.write_all(text.as_bytes())?))
    }
}

fn open(path: &Path) -> Outcome<BufReader<fs::File>> {
    fs::File::open(path).map(BufReader::new).with_context(|| format!("opening {}", path.display())).compute_err()
}

pub fn read_population(path: &Path) -> Outcome<Population> {
    Population::read_json(open(path)?).with_context(|| format!("reading {}", path.display())).compute_err()
}

pub fn read_tasks(path: &Path) -> Outcome<TransferDataset> {
    TransferDataset::read_csv(open(path)?).with_context(|| format!("reading {}", path.display())).compute_err()
}

pub fn read_model(path: &Path) -> Outcome<TrainedModel> {
    TrainedModel::read_json(open(path)?).with_context(|| format!("reading {}", path.display())).compute_err()
}

pub fn generate(ctx: &Context) -> Outcome {
    ctx.claim(&[POPULATION_FILE])?;
    let pop = generate_population(&ctx.config.population, ctx.parallelism).compute_err()?;
    ctx.write(POPULATION_FILE, |w| Ok(pop.write_json(w)?))?;
    println!("generated {} structures -> {}", pop.structures.len(), ctx.path(POPULATION_FILE).display());
    for s in &pop.structures {
        let grounds: Vec<String> = s.system.ground_connections.iter().map(|g| g.mass_index.to_string()).collect();
        let rows = s.dataset.as_ref().map_or(0, |d| d.len());
        println!("  structure {:>3}: ground springs at masses [{}], {} rows", s.system.id, grounds.join(", "), rows);
    }
    Ok(())
}

pub fn tasks(ctx: &Context, population: &Path) -> Outcome {
    ctx.claim(&[TASKS_FILE])?;
    let pop = read_population(population)?;
    let n_modes = ctx.config.tasks.n_modes;
    if n_modes > pop.config.n_dof {
        return Err(Failure::Config(anyhow!(
            "tasks.n_modes {n_modes} exceeds the population's {} modes",
            pop.config.n_dof
        )));
    }
    let bundles = bundles_from_population(&pop).compute_err()?;
    let dataset = build_transfer_dataset(&bundles, n_modes, ctx.parallelism).compute_err()?;
    ctx.write(TASKS_FILE, |w| Ok(dataset.write_csv(w)?))?;
    println!("{} transfer tasks -> {}", dataset.len(), ctx.path(TASKS_FILE).display());
    Ok(())
}

pub fn fit(ctx: &Context, tasks: &Path) -> Outcome {
    let mut outputs = vec![MODEL_FILE, LOSS_FILE];
    outputs.extend(QUALITY_FILES);
    ctx.claim(&outputs)?;
    let dataset = read_tasks(tasks)?;
    let outcome = train(&dataset, &ctx.config.training).compute_err()?;
    let model = TrainedModel::new(outcome.params.clone(), ctx.config.training.clone());
    ctx.write(MODEL_FILE, |w| Ok(model.write_json(w)?))?;
    ctx.write(LOSS_FILE, |w| Ok(write_loss_csv(&outcome.loss_history, w)?))?;

    let d = &ctx.config.decision;
    let grid = unit_grid(d.grid_points);
    let forecasts = grid
        .iter()
        .map(|&s| predict_quality(&outcome.params, s, d.forecast_samples, ctx.config.forecast_seed()))
        .collect::<Result<Vec<QualityForecast>, _>>()
        .compute_err()?;
    let names = ["TR", "FPR", "FNR"];
    for (k, file) in QUALITY_FILES.iter().enumerate() {
        let observed: Vec<(f64, f64)> =
            dataset.records.iter().map(|r| (r.varsigma, r.quality().as_array()[k])).collect();
        let series = |f: &dyn Fn(&QualityForecast) -> f64| -> Vec<(f64, f64)> {
            forecasts.iter().map(|q| (q.varsigma, f(q))).collect()
        };
        let mut chart = Chart::new(
            &format!(
                "p({} | similarity): median and {:.0}% credible band",
                names[k],
                100.0 * evitlab_core::regressor::CREDIBLE_LEVEL
            ),
            "similarity",
            names[k],
            (0.0, 1.0),
            (0.0, 1.0),
        );
        chart.band("band", &series(&|q| q.lower[k]), &series(&|q| q.upper[k]), "#3b528b");
        chart.scatter("observed", &observed, "#21918c");
        chart.line("median", &series(&|q| q.median[k]), "#440154", None);
        ctx.write_text(file, &chart.render())?;
    }
    let first = outcome.loss_history.first().copied().unwrap_or(f64::NAN);
    let last = outcome.loss_history.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {} epochs on {} records: loss {first:.4} -> {last:.4}",
        outcome.loss_history.len(),
        dataset.len()
    );
    println!("model -> {}", ctx.path(MODEL_FILE).display());
    Ok(())
}

pub fn curve(ctx: &Context, model: &Path) -> Outcome {
    ctx.claim(&[EVIT_FILE, EVIT_PLOT])?;
    let params = read_model(model)?.params();
    let d = &ctx.config.decision;
    let results = evit_curve(&params, &unit_grid(d.grid_points), d.m_points, &d.utilities).compute_err()?;
    let threshold = positive_transfer_threshold(&params, d.m_points, &d.utilities, d.threshold_tol).compute_err()?;
    ctx.write(EVIT_FILE, |w| Ok(write_evit_csv(&results, w)?))?;

    let points: Vec<(f64, f64)> = results.iter().map(|r| (r.varsigma, r.evit)).collect();
    let lo = points.iter().map(|p| p.1).fold(0.0, f64::min);
    let hi = points.iter().map(|p| p.1).fold(0.0, f64::max);
    let pad = 0.05 * (hi - lo).max(1.0);
    let mut chart =
        Chart::new("Expected value of information transfer", "similarity", "EVIT", (0.0, 1.0), (lo - pad, hi + pad));
    chart.hline("zero", 0.0, "2,4");
    if let Some(t) = threshold {
        chart.vline("threshold", t, "8,5");
    }
    chart.line("evit", &points, "#440154", None);
    ctx.write_text(EVIT_PLOT, &chart.render())?;

    if let Some(w) = d.utilities.ordering_warning() {
        eprintln!("warning: {w}");
    }
    println!("eu_null = {:.2}", null_expected_utility(d.m_points, &d.utilities));
    match threshold {
        Some(t) if t == 0.0 => println!("positive-transfer threshold = {t:.4} (EVIT >= 0 on all of [0, 1])"),
        Some(t) => println!("positive-transfer threshold = {t:.4}"),
        None => println!("positive-transfer threshold = none (EVIT < 0 on all of [0, 1])"),
    }
    println!("EVIT curve -> {}", ctx.path(EVIT_FILE).display());
    Ok(())
}

pub enum Target {
    /// Structure of the population held out from the candidate sources.
    HeldOut(usize),
    /// Externally supplied modal model; every structure is a candidate.
    External(PathBuf),
}

#[derive(Serialize)]
struct ForecastReport {
    forecast: QualityForecast,
    evit: EvitResult,
    simplex_resolution: usize,
    density_integral: f64,
}

/// Forecast and simplex density at one similarity value.
fn illustrate(ctx: &Context, params: &evitlab_core::MlpParams, varsigma: f64) -> Outcome {
    let d = &ctx.config.decision;
    let forecast = predict_quality(params, varsigma, d.forecast_samples, ctx.config.forecast_seed()).compute_err()?;
    let evit = evitlab_core::evit(params, varsigma, d.m_points, &d.utilities).compute_err()?;
    let density = density_on_simplex(forecast.alpha, d.simplex_resolution).compute_err()?;
    let report =
        ForecastReport { forecast, evit, simplex_resolution: density.resolution, density_integral: density.integral() };
    ctx.write(FORECAST_FILE, |w| Ok(serde_json::to_writer_pretty(w, &report)?))?;
    let title = format!("Forecast quality density at similarity {varsigma:.2}");
    ctx.write_text(SIMPLEX_PLOT, &simplex_heatmap(&density, &title))?;
    let f = &report.forecast;
    println!(
        "forecast at similarity {varsigma:.4}: mean TR {:.3} FPR {:.3} FNR {:.3}, EVIT {:.2}",
        f.mean[0], f.mean[1], f.mean[2], report.evit.evit
    );
    Ok(())
}

pub fn illustration(ctx: &Context, model: &Path, varsigma: Option<f64>) -> Outcome {
    ctx.claim(&[FORECAST_FILE, SIMPLEX_PLOT])?;
    let params = read_model(model)?.params();
    illustrate(ctx, &params, varsigma.unwrap_or(ctx.config.decision.illustration_varsigma))
}

pub fn recommend(ctx: &Context, model: &Path, population: &Path, target: &Target, varsigma: Option<f64>) -> Outcome {
    ctx.claim(&[RECOMMENDATION_FILE, RANKING_FILE, FORECAST_FILE, SIMPLEX_PLOT])?;
    let params = read_model(model)?.params();
    let pop = read_population(population)?;
    let (target_modal, excluded): (ModalModel, Option<usize>) = match target {
        Target::HeldOut(id) => {
            let s = pop.structure(*id).ok_or_else(|| anyhow!("population has no structure {id}")).config_err()?;
            (modal_analysis(&s.system).compute_err()?, Some(*id))
        }
        Target::External(path) => {
            let m: ModalModel = serde_json::from_reader(open(path)?)
                .with_context(|| format!("reading modal model {}", path.display()))
                .compute_err()?;
            (m, None)
        }
    };
    let n_modes = ctx.config.tasks.n_modes;
    let d = &ctx.config.decision;
    let candidates = pop
        .structures
        .iter()
        .filter(|s| Some(s.system.id) != excluded)
        .map(|s| {
            let source = modal_analysis(&s.system)?;
            let score = similarity_score(&source.mode_shapes, &target_modal.mode_shapes, n_modes)?;
            Ok(Candidate { source_id: s.system.id, varsigma: score.value, transfer_cost: d.transfer_cost })
        })
        .collect::<evitlab_core::Result<Vec<_>>>()
        .compute_err()?;
    let ranked = rank_candidates(&candidates, &params, d.m_points, &d.utilities).compute_err()?;
    let strategy = optimize_strategy(&candidates, &params, d.m_points, &d.utilities).compute_err()?;
    let rec = Recommendation::from_ranking(&strategy, &ranked);
    ctx.write(RECOMMENDATION_FILE, |w| Ok(serde_json::to_writer_pretty(w, &rec)?))?;
    ctx.write(RANKING_FILE, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["rank", "source_id", "varsigma", "transfer_cost", "evit", "value"])?;
        for (i, r) in ranked.iter().enumerate() {
            csv.serialize((i + 1, r.source_id, r.varsigma, r.transfer_cost, r.evit, r.value))?;
        }
        csv.flush()?;
        Ok(())
    })?;

    println!("{:>4}  {:>9}  {:>8}  {:>10}", "rank", "source", "sim", "EVIT");
    for (i, r) in ranked.iter().take(10).enumerate() {
        println!("{:>4}  {:>9}  {:>8.4}  {:>10.2}", i + 1, r.source_id, r.varsigma, r.evit);
    }
    match rec.source_id {
        Some(id) => println!("decision: transfer from structure {id}"),
        None => println!("decision: no transfer"),
    }
    let at = varsigma.or(ranked.first().map(|r| r.varsigma)).unwrap_or(d.illustration_varsigma);
    illustrate(ctx, &params, at)
}

pub fn pipeline(ctx: &Context, target: Option<&Target>) -> Outcome {
    ctx.claim_directory()?;
    // Individual stages re-check their outputs; the directory is ours now.
    let stage_ctx =
        Context { config: ctx.config.clone(), out: ctx.out.clone(), force: true, parallelism: ctx.parallelism };
    let started = std::time::Instant::now();
    generate(&stage_ctx)?;
    tasks(&stage_ctx, &stage_ctx.path(POPULATION_FILE))?;
    fit(&stage_ctx, &stage_ctx.path(TASKS_FILE))?;
    curve(&stage_ctx, &stage_ctx.path(MODEL_FILE))?;
    match target {
        Some(t) => recommend(&stage_ctx, &stage_ctx.path(MODEL_FILE), &stage_ctx.path(POPULATION_FILE), t, None)?,
        None => illustration(&stage_ctx, &stage_ctx.path(MODEL_FILE), None)?,
    }
    eprintln!("pipeline finished in {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}

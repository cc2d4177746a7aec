use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use dscope_core::distill::{read_dataset_csv, save_activations, write_dataset_csv, DatasetFile, TrainReport};
use dscope_core::experiment::{
    model_correlation, run_noise, run_student, run_teacher, student_jobs, tap_activations, triplet_config_for,
    tsne_config_for, Benchmark, ExperimentReport, NoiseComparison, RunRecord, StudentJob, TapEmbedding,
    student_metrics, noise_data,
};
use dscope_core::metrics::{kde2d, scott_bandwidth};
use dscope_core::nn::{load_model, save_model};
use dscope_core::synth::NoiseLiftDataset;
use dscope_core::triplet::{embedding_to_csv, fit, parse_embedding_csv, EmbeddingSummary};
use dscope_core::tsne::fit_tsne;
use dscope_core::viz::{render_density, render_scatter, Palette};
use dscope_core::{write_atomic, Matrix, MlpModel, TapPoint};

use crate::layout::Method;
use crate::{par_map, Context};

fn missing(path: &Path) -> String {
    format!("missing artifact {}", path.display())
}

fn write_json(path: PathBuf, value: &impl Serialize) -> Result<PathBuf> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(&path, &bytes)?;
    Ok(path)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| missing(path))?;
    serde_json::from_str(&text).with_context(|| format!("invalid JSON in {}", path.display()))
}

fn write_bytes(path: PathBuf, bytes: &[u8]) -> Result<PathBuf> {
    write_atomic(&path, bytes)?;
    Ok(path)
}

fn read_dataset(path: &Path) -> Result<DatasetFile> {
    if !path.exists() {
        anyhow::bail!(missing(path));
    }
    read_dataset_csv(path).with_context(|| format!("reading {}", path.display()))
}

fn read_embedding(path: &Path) -> Result<(Matrix, Vec<usize>)> {
    let file = fs::File::open(path).with_context(|| missing(path))?;
    parse_embedding_csv(file).with_context(|| format!("reading {}", path.display()))
}

fn read_model(path: &Path) -> Result<MlpModel> {
    if !path.exists() {
        anyhow::bail!(missing(path));
    }
    load_model(path).with_context(|| format!("reading {}", path.display()))
}

fn load_bench(ctx: &Context) -> Result<Benchmark> {
    let l = &ctx.layout;
    let train = read_dataset(&l.train_csv())?;
    let test = read_dataset(&l.test_csv())?;
    let embed = read_dataset(&l.embed_csv())?;
    Ok(Benchmark::from_files(&train, &test, &embed)?)
}

fn load_noise(ctx: &Context) -> Result<NoiseLiftDataset> {
    let lifted = read_dataset(&ctx.layout.noise_csv())?;
    let (base, quadrants) = read_embedding(&ctx.layout.noise_base_csv())?;
    let (lifted, labels) = lifted.labeled();
    if labels != quadrants {
        anyhow::bail!("noise data and its base points disagree on quadrants");
    }
    Ok(NoiseLiftDataset { base, lifted, quadrants })
}

pub(crate) fn synth(ctx: &Context) -> Result<Vec<PathBuf>> {
    let l = &ctx.layout;
    let bench = Benchmark::generate(&ctx.config.dataset)?;
    let [train, test, embed] = bench.to_files();
    let mut written = Vec::new();
    for (path, file) in [(l.train_csv(), train), (l.test_csv(), test), (l.embed_csv(), embed)] {
        write_dataset_csv(&path, &file)?;
        written.push(path);
    }
    let noise = noise_data(&ctx.config)?;
    let lifted = DatasetFile {
        features: noise.lifted.clone(),
        labels: noise.quadrants.iter().map(|&q| Some(q)).collect(),
        superclasses: None,
    };
    write_dataset_csv(&l.noise_csv(), &lifted)?;
    written.push(l.noise_csv());
    written.push(write_bytes(l.noise_base_csv(), &embedding_to_csv(&noise.base, &noise.quadrants)?)?);
    Ok(written)
}

pub(crate) fn train(ctx: &Context) -> Result<Vec<PathBuf>> {
    let l = &ctx.layout;
    let bench = load_bench(ctx)?;
    let (teacher, report) = run_teacher(&bench, &ctx.config)?;
    save_model(&l.teacher_model(), &teacher)?;
    let mut written = vec![l.teacher_model(), write_json(l.teacher_report(), &report)?];
    let jobs = student_jobs(&ctx.config);
    let per_job = par_map(ctx.threads, &jobs, |&job| {
        let (model, report) = run_student(&bench, &teacher, &ctx.config, job)
            .with_context(|| format!("training {}", job.stem()))?;
        save_model(&l.student_model(job), &model)?;
        Ok(vec![l.student_model(job), write_json(l.student_report(job), &report)?])
    })?;
    written.extend(per_job.into_iter().flatten());
    Ok(written)
}

fn embed_job(ctx: &Context, bench: &Benchmark, job: StudentJob) -> Result<Vec<PathBuf>> {
    let l = &ctx.layout;
    let model = read_model(&l.student_model(job))?;
    let mut written = Vec::new();
    for (tap, acts) in tap_activations(&model, bench)? {
        save_activations(&l.activations(job, tap), &acts, tap)?;
        written.push(l.activations(job, tap));
        let cfg = triplet_config_for(&ctx.config, job, tap);
        let result = fit(&acts, &cfg).with_context(|| format!("embedding {} tap {tap}", job.stem()))?;
        let csv = embedding_to_csv(&result.coords, &bench.embed_labels)?;
        written.push(write_bytes(l.embedding(Method::Triplet, job, tap), &csv)?);
        written.push(write_json(l.embedding_summary(job, tap), &result.summary(&cfg))?);
        if job.seed == ctx.config.tsne_seed() {
            let tsne = fit_tsne(&acts, &tsne_config_for(&ctx.config, job, tap))?;
            let csv = embedding_to_csv(&tsne.coords, &bench.embed_labels)?;
            written.push(write_bytes(l.embedding(Method::Tsne, job, tap), &csv)?);
        }
    }
    Ok(written)
}

pub(crate) fn embed(ctx: &Context) -> Result<Vec<PathBuf>> {
    let l = &ctx.layout;
    let bench = load_bench(ctx)?;
    let noise = load_noise(ctx)?;
    let run = run_noise(&noise, &ctx.config)?;
    let mut written = vec![
        write_bytes(
            l.noise_embedding(Method::Triplet),
            &embedding_to_csv(&run.triplet.coords, &noise.quadrants)?,
        )?,
        write_bytes(l.noise_embedding(Method::Tsne), &embedding_to_csv(&run.tsne.coords, &noise.quadrants)?)?,
        write_json(l.noise_comparison(), &run.comparison)?,
    ];
    let jobs = student_jobs(&ctx.config);
    let per_job = par_map(ctx.threads, &jobs, |&job| embed_job(ctx, &bench, job))?;
    written.extend(per_job.into_iter().flatten());
    Ok(written)
}

fn job_metrics(ctx: &Context, bench: &Benchmark, job: StudentJob) -> Result<RunRecord> {
    let l = &ctx.layout;
    let model = read_model(&l.student_model(job))?;
    let report: TrainReport = read_json(&l.student_report(job))?;
    let mut embeddings = Vec::with_capacity(TapPoint::ALL.len());
    for (tap, activations) in tap_activations(&model, bench)? {
        let (coords, labels) = read_embedding(&l.embedding(Method::Triplet, job, tap))?;
        if labels != bench.embed_labels {
            anyhow::bail!("labels of {} do not match the embedding set", l.embedding(Method::Triplet, job, tap).display());
        }
        let summary: EmbeddingSummary = read_json(&l.embedding_summary(job, tap))?;
        embeddings.push(TapEmbedding {
            tap,
            activations,
            coords,
            converged_loss: summary.converged_loss,
        });
    }
    let metrics = student_metrics(&model, &report, bench, &embeddings, &ctx.config.metrics)?;
    Ok(RunRecord {
        condition: job.condition,
        budget: job.budget,
        seed: job.seed,
        metrics,
    })
}

pub(crate) fn metrics(ctx: &Context) -> Result<Vec<PathBuf>> {
    let l = &ctx.layout;
    let bench = load_bench(ctx)?;
    let teacher = read_model(&l.teacher_model())?;
    let teacher_report: TrainReport = read_json(&l.teacher_report())?;
    let noise: NoiseComparison = read_json(&l.noise_comparison())?;
    let jobs = student_jobs(&ctx.config);
    let runs = par_map(ctx.threads, &jobs, |&job| job_metrics(ctx, &bench, job))?;
    let report = ExperimentReport {
        teacher_accuracy: teacher_report.test_accuracy,
        teacher_correlation: model_correlation(&teacher, &bench)?,
        runs,
        noise: Some(noise),
    };
    Ok(vec![write_json(l.report(), &report)?])
}

fn scatter_figure(path: PathBuf, source: &Path, title: &str) -> Result<PathBuf> {
    let (coords, labels) = read_embedding(source)?;
    write_bytes(path, render_scatter(&coords, &labels, &Palette::default(), title)?.as_bytes())
}

pub(crate) fn plot(ctx: &Context) -> Result<Vec<PathBuf>> {
    let l = &ctx.layout;
    let mut written = Vec::new();
    for (name, source) in [
        ("noise_base", l.noise_base_csv()),
        ("noise_triplet", l.noise_embedding(Method::Triplet)),
        ("noise_tsne", l.noise_embedding(Method::Tsne)),
    ] {
        written.push(scatter_figure(l.figure(name), &source, name)?);
    }
    let seed = ctx.config.tsne_seed();
    let jobs: Vec<StudentJob> = student_jobs(&ctx.config).into_iter().filter(|j| j.seed == seed).collect();
    let per_job = par_map(ctx.threads, &jobs, |&job| {
        let mut out = Vec::new();
        for tap in TapPoint::ALL {
            for method in [Method::Triplet, Method::Tsne] {
                let name = format!("{}_{}_{tap}", method.name(), job.stem());
                let title = format!(
                    "{} student, {} labels, seed {}, tap {tap} ({})",
                    job.condition.name(),
                    job.budget,
                    job.seed,
                    method.name()
                );
                out.push(scatter_figure(l.figure(&name), &l.embedding(method, job, tap), &title)?);
            }
        }
        let (coords, _) = read_embedding(&l.embedding(Method::Triplet, job, TapPoint::E))?;
        let grid = kde2d(&coords, scott_bandwidth(&coords), ctx.config.metrics.area.resolution)?;
        let title = format!("{} student, {} labels, tap E density", job.condition.name(), job.budget);
        out.push(write_bytes(
            l.figure(&format!("density_{}_E", job.stem())),
            render_density(&grid, &title).as_bytes(),
        )?);
        Ok(out)
    })?;
    written.extend(per_job.into_iter().flatten());
    Ok(written)
}

/// Scatter plot of one `x,y,label` file, written as `<out>/<input stem>.svg`.
pub fn plot_embedding_file(input: &Path, out: &Path, title: Option<&str>) -> Result<PathBuf> {
    let stem = input
        .file_stem()
        .with_context(|| format!("{} has no file name", input.display()))?;
    let mut path = out.join(stem);
    path.set_extension("svg");
    scatter_figure(path, input, title.unwrap_or(""))
}

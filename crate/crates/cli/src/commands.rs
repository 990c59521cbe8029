//! Subcommand bodies. Stages hand data to each other through fixed file names
//! in the output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use qsta_core::attack::{adversarial_training, robustness_eval, RobustnessReport, Surrogate, Threat};
use qsta_core::data::{
    augment, label_trajectories, mmd_rbf, simulate_trajectories, tstr_trts_eval, windows_dataset, CellKind, Dataset,
    MetricDeltas, Trajectory, STABLE, UNSTABLE,
};
use qsta_core::harness::{
    ablation_suite, compare_models, eval_subset, evaluate, mean_std, split_dataset, sweep_quantum, sweep_sampling_window,
    train_run, AblationInputs, Metrics, RunRecord,
};
use qsta_core::model::{Model, Variant};
use qsta_core::rng::derive_seed;

use crate::config::{Config, SweepKind};
use crate::error::{CliError, CliResult};
use crate::formats::{
    read_dataset, read_json, read_trajectories, write_dataset, write_json, write_trajectories, Checkpoint, Provenance,
};
use crate::report::{num, opt, Report, Summary, Table};

pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const PROVENANCE_FILE: &str = "trajectories.provenance.json";
pub const LABELS_FILE: &str = "labels.csv";
pub const REAL_FILE: &str = "real.csv";
pub const SYNTHETIC_FILE: &str = "synthetic.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Datagen,
    Label,
    Augment,
    Train,
    Attack,
    Defend,
    Sweep,
    Ablate,
    Report,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Datagen => "datagen",
            Stage::Label => "label",
            Stage::Augment => "augment",
            Stage::Train => "train",
            Stage::Attack => "attack",
            Stage::Defend => "defend",
            Stage::Sweep => "sweep",
            Stage::Ablate => "ablate",
            Stage::Report => "report",
        }
    }
}

/// Resolved settings shared by every stage of one invocation.
pub struct Ctx {
    pub cfg: Config,
    pub dir: PathBuf,
    pub hash: String,
}

impl Ctx {
    pub fn new(cfg: Config, dir: PathBuf) -> CliResult<Self> {
        let hash = cfg.hash()?;
        Ok(Self { cfg, dir, hash })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn report(&self, stage: Stage) -> Report {
        Report::new(stage.as_str(), self.cfg.seed, &self.hash)
    }

    fn checkpoint_name(&self, variant: Variant, robust: bool) -> String {
        format!("model_{}_seed{}{}.json", variant.as_str(), self.cfg.seed, if robust { "_robust" } else { "" })
    }
}

/// Writes the effective configuration snapshot, then runs `stage`.
pub fn run_stage(stage: Stage, ctx: &Ctx) -> CliResult<Report> {
    std::fs::create_dir_all(&ctx.dir)
        .map_err(|e| CliError::Runtime(format!("cannot create output directory {}: {e}", ctx.dir.display())))?;
    let text = ctx.cfg.to_toml()?;
    let snap = ctx.path(&format!("{}_seed{}_config.toml", stage.as_str(), ctx.cfg.seed));
    std::fs::write(&snap, &text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", snap.display())))?;
    info!("effective configuration (sha256 {}), saved to {}:\n{}", ctx.hash, snap.display(), text);
    let t = Instant::now();
    let mut report = match stage {
        Stage::Datagen => datagen(ctx),
        Stage::Label => label(ctx),
        Stage::Augment => augment_stage(ctx),
        Stage::Train => train_stage(ctx),
        Stage::Attack => attack_stage(ctx),
        Stage::Defend => defend(ctx),
        Stage::Sweep => sweep(ctx),
        Stage::Ablate => ablate(ctx),
        Stage::Report => report_stage(ctx),
    }?;
    report.timings.insert("total".into(), t.elapsed().as_secs_f64());
    Ok(report)
}

fn require(path: &Path, producer: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("{} not found; run `qsta {producer}` first", path.display())))
    }
}

fn provenance(ctx: &Ctx, stage: Stage, records: usize) -> Provenance {
    Provenance {
        schema_version: crate::config::SCHEMA_VERSION,
        stage: stage.as_str().into(),
        seed: ctx.cfg.seed,
        config_hash: ctx.hash.clone(),
        records,
        tool_version: env!("CARGO_PKG_VERSION").into(),
    }
}

fn kind_str(k: CellKind) -> &'static str {
    match k {
        CellKind::Stable => "stable",
        CellKind::Unstable => "unstable",
        CellKind::Ambiguous => "ambiguous",
    }
}

fn class_str(c: Option<usize>) -> &'static str {
    match c {
        Some(STABLE) => "stable",
        Some(UNSTABLE) => "unstable",
        Some(_) => "other",
        None => "undecided",
    }
}

fn datagen(ctx: &Ctx) -> CliResult<Report> {
    let d = &ctx.cfg.datagen;
    let trajs = simulate_trajectories(&d.grid, &d.generator, d.n_per_cell, ctx.cfg.seed)?;
    let tpath = ctx.path(TRAJECTORIES_FILE);
    write_trajectories(&tpath, &trajs)?;
    let ppath = ctx.path(PROVENANCE_FILE);
    write_json(&ppath, &provenance(ctx, Stage::Datagen, trajs.len()))?;
    info!("wrote {} trajectories to {}", trajs.len(), tpath.display());

    let mut r = ctx.report(Stage::Datagen);
    let mut t = Table::new("composition", &["cell_kind", "trajectories", "latent_stable", "latent_unstable"]);
    for k in [CellKind::Stable, CellKind::Ambiguous, CellKind::Unstable] {
        let of: Vec<&Trajectory> = trajs.iter().filter(|x| x.kind == k).collect();
        let st = of.iter().filter(|x| x.latent == STABLE).count();
        t.push(vec![kind_str(k).into(), of.len().to_string(), st.to_string(), (of.len() - st).to_string()]);
    }
    r.tables.push(t);
    r.values.insert("trajectories".into(), trajs.len() as f64);
    r.artifacts = vec![TRAJECTORIES_FILE.into(), PROVENANCE_FILE.into()];
    Ok(r)
}

fn label(ctx: &Ctx) -> CliResult<Report> {
    let tpath = ctx.path(TRAJECTORIES_FILE);
    require(&tpath, "datagen")?;
    let trajs = read_trajectories(&tpath)?;
    let lab = label_trajectories(&trajs, &ctx.cfg.label)?;

    let mut w = csv::Writer::from_path(ctx.path(LABELS_FILE))?;
    w.write_record(["id", "cell", "cell_kind", "latent", "heuristic", "label", "membership_unstable"])?;
    for (i, t) in trajs.iter().enumerate() {
        let m = lab.sfcm.as_ref().map(|s| s.membership.u[i * s.membership.n_clusters + UNSTABLE]);
        w.write_record([
            t.id.to_string(),
            t.scenario.cell.to_string(),
            kind_str(t.kind).into(),
            t.latent.to_string(),
            class_str(lab.heuristic[i]).into(),
            lab.labels[i].to_string(),
            opt(m),
        ])?;
    }
    w.flush()?;
    let real = windows_dataset(&trajs, &lab.labels, ctx.cfg.data.window_steps)?;
    write_dataset(&ctx.path(REAL_FILE), &real)?;

    let mut r = ctx.report(Stage::Label);
    let mut t = Table::new("labels", &["source", "stable", "unstable", "undecided"]);
    let count = |c: Option<usize>| lab.heuristic.iter().filter(|h| **h == c).count().to_string();
    t.push(vec!["heuristic".into(), count(Some(STABLE)), count(Some(UNSTABLE)), count(None)]);
    let counts = real.class_counts(2);
    t.push(vec!["final".into(), counts[STABLE].to_string(), counts[UNSTABLE].to_string(), "0".into()]);
    r.tables.push(t);
    if let Some(s) = &lab.sfcm {
        let mut t = Table::new("sfcm_objective", &["iteration", "objective"]);
        for (i, v) in s.objective.iter().enumerate() {
            t.push(vec![(i + 1).to_string(), num(*v)]);
        }
        r.tables.push(t);
        r.values.insert("sfcm_iterations".into(), s.iterations as f64);
    }
    let agree = trajs.iter().zip(&lab.labels).filter(|(t, l)| t.latent == **l).count();
    r.values.insert("latent_agreement".into(), agree as f64 / trajs.len().max(1) as f64);
    r.artifacts = vec![LABELS_FILE.into(), REAL_FILE.into()];
    Ok(r)
}

fn class_rows(d: &Dataset, c: usize, limit: usize) -> Vec<f64> {
    let per = d.sample_len();
    let mut out = Vec::new();
    for i in (0..d.len()).filter(|&i| d.labels[i] == c).take(limit) {
        out.extend_from_slice(&d.xs[i * per..(i + 1) * per]);
    }
    out
}

fn delta_row(setting: &str, m: &Metrics, d: Option<&MetricDeltas>) -> Vec<String> {
    vec![
        setting.into(),
        num(m.accuracy),
        num(m.f1),
        opt(m.auc),
        d.map_or(String::new(), |d| num(d.accuracy)),
        d.map_or(String::new(), |d| num(d.f1)),
        d.map_or(String::new(), |d| opt(d.auc)),
    ]
}

fn augment_stage(ctx: &Ctx) -> CliResult<Report> {
    let rpath = ctx.path(REAL_FILE);
    require(&rpath, "label")?;
    let real = read_dataset(&rpath)?;
    let t0 = Instant::now();
    let aug = augment(&real, &ctx.cfg.augment, derive_seed(ctx.cfg.seed, "augment"))?;
    let syn = aug.synthetic;
    write_dataset(&ctx.path(SYNTHETIC_FILE), &syn)?;
    let mut r = ctx.report(Stage::Augment);
    r.timings.insert("lsgan".into(), t0.elapsed().as_secs_f64());

    let (rc, sc) = (real.class_counts(2), syn.class_counts(2));
    let mut t = Table::new("augment", &["class", "real", "synthetic", "total"]);
    for c in [STABLE, UNSTABLE] {
        t.push(vec![class_str(Some(c)).into(), rc[c].to_string(), sc[c].to_string(), (rc[c] + sc[c]).to_string()]);
    }
    r.tables.push(t);
    let mut t = Table::new("gan_history", &["class", "iteration", "d_loss", "g_loss"]);
    for (c, h) in &aug.histories {
        for (i, (d, g)) in h.d_loss.iter().zip(&h.g_loss).enumerate() {
            t.push(vec![class_str(Some(*c)).into(), (i + 1).to_string(), num(*d), num(*g)]);
        }
        if h.degenerate {
            warn!("class {c}: training windows have no spread; generated samples copy them");
        }
    }
    r.tables.push(t);

    let v = &ctx.cfg.validation;
    if v.enabled && !syn.is_empty() {
        let t0 = Instant::now();
        let mut t = Table::new("mmd", &["class", "real", "synthetic", "mmd", "bandwidth"]);
        let mut worst = 0.0f64;
        for c in [STABLE, UNSTABLE] {
            let (x, y) = (class_rows(&real, c, usize::MAX), class_rows(&syn, c, v.mmd_samples));
            if x.is_empty() || y.is_empty() {
                continue;
            }
            let m = mmd_rbf(&x, &y, real.sample_len(), None)?;
            worst = worst.max(m.value);
            let n = real.sample_len();
            t.push(vec![class_str(Some(c)).into(), (x.len() / n).to_string(), (y.len() / n).to_string(), num(m.raw), num(m.bandwidth)]);
        }
        r.tables.push(t);
        r.values.insert("mmd_max".into(), worst);
        r.timings.insert("mmd".into(), t0.elapsed().as_secs_f64());

        let t0 = Instant::now();
        let mut mcfg = ctx.cfg.model.with_variant(v.tstr_variant);
        mcfg.seq_len = real.seq_len;
        mcfg.feature_dim = real.feature_dim;
        let rep = tstr_trts_eval(&real, &syn, &mcfg, &v.tstr_training, derive_seed(ctx.cfg.seed, "tstr"))?;
        let mut t = Table::new("tstr", &["setting", "accuracy", "f1", "auc", "delta_accuracy", "delta_f1", "delta_auc"]);
        t.push(delta_row("real_real", &rep.rr, None));
        t.push(delta_row("tstr", &rep.tstr, Some(&rep.tstr_delta)));
        t.push(delta_row("trts", &rep.trts, Some(&rep.trts_delta)));
        r.tables.push(t);
        r.values.insert("tstr_trts_max_delta".into(), rep.max_delta());
        r.timings.insert("tstr".into(), t0.elapsed().as_secs_f64());
    }
    r.artifacts = vec![SYNTHETIC_FILE.into()];
    Ok(r)
}

/// Originals, plus generated windows when configured and present.
fn training_data(ctx: &Ctx) -> CliResult<Dataset> {
    let rpath = ctx.path(REAL_FILE);
    require(&rpath, "label")?;
    let real = read_dataset(&rpath)?;
    if !ctx.cfg.data.use_synthetic {
        return Ok(real);
    }
    let spath = ctx.path(SYNTHETIC_FILE);
    if !spath.exists() {
        warn!("{} not found; using the original windows only", spath.display());
        return Ok(real);
    }
    Ok(real.concat(&read_dataset(&spath)?)?)
}

fn metrics_header() -> [&'static str; 9] {
    ["variant", "seed", "accuracy", "f1", "auc", "tp", "fp", "tn", "fn"]
}

fn metrics_row(v: Variant, seed: u64, m: &Metrics) -> Vec<String> {
    let c = &m.confusion;
    vec![
        v.as_str().into(),
        seed.to_string(),
        num(m.accuracy),
        num(m.f1),
        opt(m.auc),
        c.tp.to_string(),
        c.fp.to_string(),
        c.tn.to_string(),
        c.fn_.to_string(),
    ]
}

fn train_stage(ctx: &Ctx) -> CliResult<Report> {
    let data = training_data(ctx)?;
    let t0 = Instant::now();
    let (model, run) = train_run(&data, &ctx.cfg.model, &ctx.cfg.training, ctx.cfg.seed)?;
    let name = ctx.checkpoint_name(model.config.variant, false);
    Checkpoint::from_model(&model).save(&ctx.path(&name))?;
    info!("test accuracy {:.4}; model saved to {}", run.metrics.accuracy, name);

    let mut r = ctx.report(Stage::Train);
    r.timings.insert("training".into(), t0.elapsed().as_secs_f64());
    let mut t = Table::new("metrics", &metrics_header());
    t.push(metrics_row(run.variant, run.seed, &run.metrics));
    r.tables.push(t);
    r.traces.push((run.variant.as_str().into(), run.loss_trace.clone()));
    r.values.insert("accuracy".into(), run.metrics.accuracy);
    r.values.insert("f1".into(), run.metrics.f1);
    if let Some(a) = run.metrics.auc {
        r.values.insert("auc".into(), a);
    }
    r.artifacts = vec![name];
    Ok(r)
}

fn load_model(ctx: &Ctx, robust: bool) -> CliResult<(Model, String)> {
    let name = ctx.checkpoint_name(ctx.cfg.model.variant, robust);
    let path = ctx.path(&name);
    require(&path, if robust { "defend" } else { "train" })?;
    let model = Checkpoint::load(&path)?.to_model()?;
    Ok((model, name))
}

/// Held-out evaluation subset and, for gray-box cells, a surrogate distilled
/// from `model` on queries drawn from the training part.
fn attack_setup(ctx: &Ctx, model: &Model, train: &Dataset, test: &Dataset) -> CliResult<(Dataset, Option<Surrogate>)> {
    let a = &ctx.cfg.attack;
    let ev = eval_subset(test, a.eval_samples, ctx.cfg.seed);
    let surrogate = if a.threats.contains(&Threat::GrayBox) {
        let q = eval_subset(train, a.surrogate_queries, derive_seed(ctx.cfg.seed, "queries"));
        let cfg = model.config.with_variant(Variant::Transformer);
        Some(Surrogate::distill(model, &q.xs, q.len(), cfg, &a.surrogate_training, derive_seed(ctx.cfg.seed, "surrogate"))?)
    } else {
        None
    };
    Ok((ev, surrogate))
}

fn robustness_table(name: &str, model: &str, rep: &RobustnessReport) -> Table {
    let mut t = Table::new(name, &["model", "method", "threat", "epsilon", "clean_accuracy", "accuracy", "success_rate"]);
    for c in &rep.cells {
        t.push(vec![
            model.into(),
            c.method.as_str().into(),
            c.threat.as_str().into(),
            num(c.epsilon),
            num(rep.clean_accuracy),
            num(c.accuracy),
            num(c.success_rate),
        ]);
    }
    t
}

fn attack_stage(ctx: &Ctx) -> CliResult<Report> {
    let data = training_data(ctx)?;
    let (model, name) = load_model(ctx, false)?;
    let (tr, te) = split_dataset(&data, ctx.cfg.seed);
    let t0 = Instant::now();
    let (ev, sur) = attack_setup(ctx, &model, &tr, &te)?;
    let mut r = ctx.report(Stage::Attack);
    r.timings.insert("surrogate".into(), t0.elapsed().as_secs_f64());
    let t0 = Instant::now();
    let rep = robustness_eval(&model, sur.as_ref(), &ev, &ctx.cfg.attack.grid(), derive_seed(ctx.cfg.seed, "attack"))?;
    r.timings.insert("attacks".into(), t0.elapsed().as_secs_f64());
    r.tables.push(robustness_table("robustness", "undefended", &rep));
    r.values.insert("clean_accuracy".into(), rep.clean_accuracy);
    r.values.insert("mean_robust_accuracy".into(), rep.mean_robust_accuracy);
    r.values.insert("robustness_drop".into(), rep.robustness_drop);
    r.artifacts = vec![name];
    Ok(r)
}

fn defend(ctx: &Ctx) -> CliResult<Report> {
    let data = training_data(ctx)?;
    let (mut model, _) = load_model(ctx, false)?;
    let (tr, te) = split_dataset(&data, ctx.cfg.seed);
    let grid = ctx.cfg.attack.grid();
    let ev = eval_subset(&te, ctx.cfg.attack.eval_samples, ctx.cfg.seed);
    let before = evaluate(&model, &ev)?;
    let mut r = ctx.report(Stage::Defend);

    let t0 = Instant::now();
    let rep = adversarial_training(&mut model, &tr, None, &ctx.cfg.defense, derive_seed(ctx.cfg.seed, "defense"))?;
    r.timings.insert("adversarial_training".into(), t0.elapsed().as_secs_f64());
    let name = ctx.checkpoint_name(model.config.variant, true);
    Checkpoint::from_model(&model).save(&ctx.path(&name))?;

    let t0 = Instant::now();
    let (ev, sur) = attack_setup(ctx, &model, &tr, &te)?;
    let robust = robustness_eval(&model, sur.as_ref(), &ev, &grid, derive_seed(ctx.cfg.seed, "attack"))?;
    r.timings.insert("attacks".into(), t0.elapsed().as_secs_f64());

    let mut t = Table::new("defense", &["model", "clean_accuracy", "mean_robust_accuracy", "robustness_drop"]);
    t.push(vec!["undefended".into(), num(before.accuracy), String::new(), String::new()]);
    t.push(vec![
        "defended".into(),
        num(robust.clean_accuracy),
        num(robust.mean_robust_accuracy),
        num(robust.robustness_drop),
    ]);
    r.tables.push(t);
    r.tables.push(robustness_table("robustness", "defended", &robust));
    r.traces.push(("adversarial".into(), rep.loss_trace));
    r.values.insert("undefended_clean_accuracy".into(), before.accuracy);
    r.values.insert("clean_accuracy".into(), robust.clean_accuracy);
    r.values.insert("mean_robust_accuracy".into(), robust.mean_robust_accuracy);
    r.values.insert("robustness_drop".into(), robust.robustness_drop);
    r.artifacts = vec![name];
    Ok(r)
}

fn runs_table(runs: &[RunRecord]) -> Table {
    let mut t = Table::new("runs", &metrics_header());
    for run in runs {
        t.push(metrics_row(run.variant, run.seed, &run.metrics));
    }
    t
}

/// Labels written by the label stage, in trajectory order.
fn read_labels(path: &Path, n: usize) -> CliResult<Vec<usize>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", path.display())))?;
    let col = rd
        .headers()?
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| CliError::Runtime(format!("{}: no 'label' column", path.display())))?;
    let mut out = Vec::with_capacity(n);
    for rec in rd.records() {
        let rec = rec?;
        out.push(rec[col].parse().map_err(|e| CliError::Runtime(format!("{}: bad label: {e}", path.display())))?);
    }
    if out.len() != n {
        return Err(CliError::Runtime(format!("{} holds {} labels for {} trajectories", path.display(), out.len(), n)));
    }
    Ok(out)
}

fn sweep(ctx: &Ctx) -> CliResult<Report> {
    let s = &ctx.cfg.sweep;
    let seeds: Vec<u64> = s.seeds.iter().map(|o| ctx.cfg.seed.wrapping_add(*o)).collect();
    let mut r = ctx.report(Stage::Sweep);
    match s.kind {
        SweepKind::Models => {
            let data = training_data(ctx)?;
            let cmp = compare_models(&data, &ctx.cfg.model, &s.variants, &seeds, &s.training)?;
            let mut t = Table::new(
                "summary",
                &["variant", "accuracy_mean", "accuracy_std", "f1_mean", "f1_std", "auc_mean", "auc_std"],
            );
            for row in &cmp.rows {
                t.push(vec![
                    row.variant.as_str().into(),
                    num(row.accuracy.mean),
                    num(row.accuracy.std),
                    num(row.f1.mean),
                    num(row.f1.std),
                    num(row.auc.mean),
                    num(row.auc.std),
                ]);
                r.values.insert(format!("{}_accuracy", row.variant.as_str()), row.accuracy.mean);
            }
            r.tables.push(t);
            r.tables.push(runs_table(&cmp.runs));
            for run in &cmp.runs {
                r.traces.push((format!("{}_s{}", run.variant.as_str(), run.seed), run.loss_trace.clone()));
            }
        }
        SweepKind::Quantum => {
            let data = training_data(ctx)?;
            let cells = sweep_quantum(&data, &ctx.cfg.model, &s.qubits, &s.layers, &seeds, &s.training)?;
            let mut t = Table::new("cells", &["qubits", "layers", "seed", "accuracy", "f1", "auc"]);
            for c in &cells {
                t.push(vec![
                    c.n_qubits.to_string(),
                    c.n_layers.to_string(),
                    c.seed.to_string(),
                    num(c.metrics.accuracy),
                    num(c.metrics.f1),
                    opt(c.metrics.auc),
                ]);
            }
            r.tables.push(t);
            let mut t = Table::new("heatmap", &["qubits", "layers", "accuracy_mean", "accuracy_std"]);
            for chunk in cells.chunks(seeds.len()) {
                let acc: Vec<f64> = chunk.iter().map(|c| c.metrics.accuracy).collect();
                let m = mean_std(&acc);
                t.push(vec![chunk[0].n_qubits.to_string(), chunk[0].n_layers.to_string(), num(m.mean), num(m.std)]);
            }
            r.tables.push(t);
        }
        SweepKind::Window => {
            let tpath = ctx.path(TRAJECTORIES_FILE);
            let lpath = ctx.path(LABELS_FILE);
            require(&tpath, "datagen")?;
            require(&lpath, "label")?;
            let trajs = read_trajectories(&tpath)?;
            let labels = read_labels(&lpath, trajs.len())?;
            let rate = trajs.first().map_or(ctx.cfg.datagen.generator.rate_hz, |t| t.rate_hz);
            let longest = s
                .windows_s
                .iter()
                .map(|w| qsta_core::harness::window_steps(*w, rate))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .max()
                .ok_or_else(|| CliError::Usage("sweep.windows_s must not be empty".into()))?;
            let data = windows_dataset(&trajs, &labels, longest)?;
            let rows = sweep_sampling_window(&data, &s.windows_s, rate, &ctx.cfg.model, &seeds, &s.training)?;
            let mut t = Table::new("windows", &["window_s", "steps", "accuracy_mean", "accuracy_std"]);
            let mut header = vec!["window_s"];
            header.extend(metrics_header());
            let mut runs = Table::new("runs", &header);
            for row in &rows {
                t.push(vec![num(row.window_s), row.steps.to_string(), num(row.accuracy.mean), num(row.accuracy.std)]);
                for run in &row.runs {
                    let mut cells = vec![num(row.window_s)];
                    cells.extend(metrics_row(run.variant, run.seed, &run.metrics));
                    runs.push(cells);
                }
            }
            r.tables.push(t);
            r.tables.push(runs);
        }
    }
    Ok(r)
}

fn ablate(ctx: &Ctx) -> CliResult<Report> {
    let tpath = ctx.path(TRAJECTORIES_FILE);
    require(&tpath, "datagen")?;
    let trajs = read_trajectories(&tpath)?;
    let acfg = ctx.cfg.ablation_config();
    let seeds: Vec<u64> = ctx.cfg.ablation.seeds.iter().map(|o| ctx.cfg.seed.wrapping_add(*o)).collect();
    let mut r = ctx.report(Stage::Ablate);
    let t0 = Instant::now();
    let inputs = AblationInputs::build(&trajs, &acfg, ctx.cfg.seed)?;
    r.timings.insert("inputs".into(), t0.elapsed().as_secs_f64());
    let t0 = Instant::now();
    let rows = ablation_suite(&inputs, &acfg, &seeds)?;
    r.timings.insert("suite".into(), t0.elapsed().as_secs_f64());
    let mut t = Table::new(
        "ablation",
        &["pipeline", "clean_accuracy_mean", "clean_accuracy_std", "robust_accuracy_mean", "robust_accuracy_std", "robustness_drop"],
    );
    let mut runs = Table::new("runs", &["pipeline", "seed", "samples", "clean_accuracy", "mean_robust_accuracy"]);
    for row in &rows {
        let p = row.pipeline.as_str();
        t.push(vec![
            p.into(),
            num(row.clean_accuracy.mean),
            num(row.clean_accuracy.std),
            num(row.robust_accuracy.mean),
            num(row.robust_accuracy.std),
            num(row.robustness_drop),
        ]);
        for run in &row.runs {
            runs.push(vec![
                p.into(),
                run.seed.to_string(),
                run.n_samples.to_string(),
                num(run.report.clean_accuracy),
                num(run.report.mean_robust_accuracy),
            ]);
        }
        r.values.insert(format!("{p}_clean_accuracy"), row.clean_accuracy.mean);
        r.values.insert(format!("{p}_robustness_drop"), row.robustness_drop);
    }
    r.tables.push(t);
    r.tables.push(runs);
    Ok(r)
}

/// Collects every summary in the output directory into one index.
fn report_stage(ctx: &Ctx) -> CliResult<Report> {
    let mut r = ctx.report(Stage::Report);
    let own = format!("{}_summary.json", r.prefix());
    let mut names: Vec<String> = std::fs::read_dir(&ctx.dir)?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .filter(|n| n.ends_with("_summary.json") && *n != own)
        .collect();
    names.sort();
    let mut index = Table::new("index", &["summary", "id", "seed", "config_hash", "tables", "traces"]);
    let mut values = Table::new("values", &["id", "seed", "key", "value"]);
    for n in &names {
        let s: Summary = read_json(&ctx.path(n))?;
        let tables: Vec<&str> = s.tables.iter().map(|t| t.name.as_str()).collect();
        let traces: Vec<&str> = s.traces.iter().map(|t| t.name.as_str()).collect();
        index.push(vec![n.clone(), s.id.clone(), s.seed.to_string(), s.config_hash.clone(), tables.join(";"), traces.join(";")]);
        for (k, v) in &s.values {
            values.push(vec![s.id.clone(), s.seed.to_string(), k.clone(), num(*v)]);
        }
    }
    r.values.insert("summaries".into(), names.len() as f64);
    r.tables.push(index);
    r.tables.push(values);
    Ok(r)
}

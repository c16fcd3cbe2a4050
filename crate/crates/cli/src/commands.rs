use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use claimgate::backends::{Backend, HttpBackend, StubBackend};
use claimgate::data::{compute_stats, load_split, DialogueInstance, Subset};
use claimgate::eval::{
    hypothesis, protocol_sweep, run_protocol, EvalInputs, Protocol, ProtocolConfig, Provenance,
    ReportMetrics, SurfaceSelector,
};
use claimgate::gate::{
    calibrate_temperature, compute_all_signals, default_tau_grid, CandidateKind, GateSignals,
    SweepTable,
};
use claimgate::pipeline::{
    build_all, read_surfaces, write_surfaces, ClaimSurfaces, PipelineConfig, PronounLexicon,
    SurfaceBuilder,
};
use claimgate::retrieval::{read_corpus, CascadeStage, Index};
use claimgate::text::{join_turns, sha256_hex};
use claimgate::Error;
use serde::Serialize;

use crate::config::{read_file_config, resolve, FileConfig, Overrides, Settings};
use crate::{Cli, Command, DataArgs, Global, SurfaceArgs};

/// Written next to every output so a run can be traced to its inputs.
#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    settings: &'a Settings,
    backend: claimgate::backends::BackendDescriptor,
    inputs: &'a BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

struct Ctx {
    global: Global,
    settings: Settings,
    backend: Box<dyn Backend>,
    inputs: BTreeMap<String, String>,
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn settings(global: &Global) -> Result<(Settings, BTreeMap<String, String>)> {
    let mut inputs = BTreeMap::new();
    let (file, dir) = match &global.config {
        Some(p) => {
            inputs.insert("config".into(), hash_file(p)?);
            (read_file_config(p)?, p.parent().map(Path::to_path_buf))
        }
        None => (FileConfig::default(), None),
    };
    let flags = Overrides {
        tau: global.tau,
        surface: global.surface,
        k_turns: global.k_turns,
        tier: global.tier,
        concurrency: global.concurrency,
    };
    let s = resolve(file, dir.as_deref(), |k| std::env::var(k).ok(), &flags)?;
    if let crate::config::BackendChoice::Stub { script: Some(p) } = &s.backend {
        inputs.insert("stub_script".into(), hash_file(p)?);
    }
    Ok((s, inputs))
}

fn open_backend(s: &Settings) -> Result<Box<dyn Backend>> {
    if let Some((url, opts)) = s.http_options() {
        let b = HttpBackend::connect(&url, opts).map_err(Error::from)?;
        return Ok(Box::new(b));
    }
    let stub = StubBackend::new();
    Ok(Box::new(match s.stub_script()? {
        Some(script) => stub.with_script(script),
        None => stub,
    }))
}

impl Ctx {
    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self
            .global
            .out
            .clone()
            .ok_or_else(|| Error::Config("--out is required for this command".into()))?;
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    fn data(&mut self, args: &DataArgs) -> Result<Vec<DialogueInstance>> {
        self.inputs.insert("data".into(), hash_file(&args.data)?);
        Ok(load_split(&args.data, args.subset.map(Subset::from))?)
    }

    fn index(&mut self, dir: &Path) -> Result<Index> {
        self.inputs
            .insert("index".into(), hash_file(&dir.join("manifest.json"))?);
        Ok(Index::load(dir)?)
    }

    fn surfaces(
        &mut self,
        args: &SurfaceArgs,
        insts: &[DialogueInstance],
    ) -> Result<Vec<ClaimSurfaces>> {
        match &args.surfaces {
            Some(p) => {
                self.inputs.insert("surfaces".into(), hash_file(p)?);
                let all = read_surfaces(p)?;
                let by_id: BTreeMap<&str, &ClaimSurfaces> =
                    all.iter().map(|s| (s.instance_id.as_str(), s)).collect();
                insts
                    .iter()
                    .map(|i| {
                        by_id
                            .get(i.instance_id.as_str())
                            .filter(|s| s.r0 == i.response)
                            .map(|s| (*s).clone())
                            .ok_or_else(|| {
                                Error::Data(format!(
                                    "surfaces file {} has no current entry for `{}`",
                                    p.display(),
                                    i.instance_id
                                ))
                                .into()
                            })
                    })
                    .collect()
            }
            None => {
                let b = SurfaceBuilder::new(&*self.backend, PipelineConfig::default());
                b.check_capabilities().map_err(Error::from)?;
                Ok(build_all(&b, insts))
            }
        }
    }

    fn signals(
        &mut self,
        args: &SurfaceArgs,
        insts: &[DialogueInstance],
        surfaces: &[ClaimSurfaces],
        kind: CandidateKind,
    ) -> Result<Vec<GateSignals>> {
        match &args.signals {
            Some(p) => {
                self.inputs.insert("signals".into(), hash_file(p)?);
                let file = File::open(p).map_err(|e| Error::io(p, e))?;
                let mut by_id = BTreeMap::new();
                for (n, line) in BufReader::new(file).lines().enumerate() {
                    let line = line.map_err(|e| Error::io(p, e))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let s: GateSignals =
                        serde_json::from_str(&line).map_err(|e| Error::Record {
                            path: p.clone(),
                            line: n + 1,
                            message: e.to_string(),
                        })?;
                    by_id.insert(s.instance_id.clone(), s);
                }
                insts
                    .iter()
                    .map(|i| {
                        by_id
                            .get(&i.instance_id)
                            .filter(|s| s.candidate_kind == kind && s.original == i.response)
                            .cloned()
                            .ok_or_else(|| {
                                Error::Data(format!(
                                    "no {kind:?} gate signal for `{}`",
                                    i.instance_id
                                ))
                                .into()
                            })
                    })
                    .collect()
            }
            None => Ok(compute_all_signals(
                insts,
                surfaces,
                kind,
                &self.settings.gate,
                &*self.backend,
            )?),
        }
    }

    fn provenance(&self) -> Provenance {
        Provenance {
            backend: self.backend.descriptor().clone(),
            inputs: self.inputs.clone(),
        }
    }

    fn protocol_config(&self, surface: SurfaceSelector) -> ProtocolConfig {
        ProtocolConfig {
            surface,
            k_turns: self.settings.k_turns,
            tau: matches!(surface, SurfaceSelector::Gated(_)).then_some(self.settings.gate.tau),
            depths: self.settings.depths.clone(),
        }
    }

    fn finish(&self, command: &str, dir: &Path, files: &[&str]) -> Result<()> {
        let mut outputs = BTreeMap::new();
        for f in files {
            outputs.insert(f.to_string(), hash_file(&dir.join(f))?);
        }
        let manifest = RunManifest {
            tool: "claimgate",
            version: env!("CARGO_PKG_VERSION"),
            command,
            settings: &self.settings,
            backend: self.backend.descriptor().clone(),
            inputs: &self.inputs,
            outputs,
        };
        write_file(dir, "manifest.json", &to_pretty(&manifest))?;
        Ok(())
    }
}

fn to_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

fn write_jsonl<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<()> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    for r in rows {
        serde_json::to_writer(&mut w, r).context("serialising row")?;
        w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}

fn sweep_tsv(table: &SweepTable<ReportMetrics>) -> String {
    table.to_tsv(|m| match m {
        ReportMetrics::Fv(r) => {
            let m = &r.metrics;
            vec![
                ("accuracy".into(), format!("{:.6}", m.accuracy)),
                ("macro_f1".into(), format!("{:.6}", m.macro_f1)),
                ("f1_supports".into(), format!("{:.6}", m.classes[0].f1)),
                ("f1_refutes".into(), format!("{:.6}", m.classes[1].f1)),
                ("f1_nei".into(), format!("{:.6}", m.classes[2].f1)),
            ]
        }
        ReportMetrics::Ir(r) => r
            .stages
            .iter()
            .flat_map(|st| {
                let name = match st.stage {
                    CascadeStage::Bm25 => "bm25",
                    CascadeStage::Dense => "dense",
                    CascadeStage::CrossEncoder => "ce",
                };
                st.sentence.metrics.iter().map(move |m| {
                    (
                        format!("{name}_recall@{}", m.k),
                        format!("{:.6}", m.macro_recall),
                    )
                })
            })
            .collect(),
    })
}

fn report_command(
    ctx: &mut Ctx,
    name: &str,
    protocol: Protocol,
    data: &DataArgs,
    sargs: &SurfaceArgs,
    index: Option<&Path>,
) -> Result<()> {
    let dir = ctx.out_dir()?;
    let insts = ctx.data(data)?;
    let index = index.map(|p| ctx.index(p)).transpose()?;
    let surfaces = ctx.surfaces(sargs, &insts)?;
    let surface = ctx.settings.surface;
    let signals = match surface {
        SurfaceSelector::Gated(kind) => Some(ctx.signals(sargs, &insts, &surfaces, kind)?),
        SurfaceSelector::Fixed(_) => None,
    };
    let cfg = ctx.protocol_config(surface);
    let prov = ctx.provenance();
    let inputs = EvalInputs {
        instances: &insts,
        surfaces: &surfaces,
        signals: signals.as_deref(),
        index: index.as_ref(),
        cascade: &ctx.settings.cascade,
        gate: &ctx.settings.gate,
        backend: &*ctx.backend,
        provenance: &prov,
    };
    let report = run_protocol(protocol, &cfg, &inputs)?;
    report.write_to(&dir)?;
    print!("{}", report.to_table());
    ctx.finish(
        name,
        &dir,
        &["report.json", "report.txt", "metrics.tsv", "routing.jsonl"],
    )
}

pub fn run(cli: Cli) -> Result<()> {
    let (settings, inputs) = settings(&cli.global)?;
    if let Some(n) = settings.concurrency {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let backend = open_backend(&settings)?;
    let mut ctx = Ctx {
        global: cli.global,
        settings,
        backend,
        inputs,
    };

    match &cli.command {
        Command::Index { corpus } => {
            let dir = ctx.out_dir()?;
            ctx.inputs.insert("corpus".into(), hash_file(corpus)?);
            let docs = read_corpus(corpus)?;
            let index = Index::build(docs, ctx.settings.chunk, ctx.settings.bm25)?;
            let m = index.save(&dir)?;
            println!(
                "indexed {} documents into {} passages ({} terms)",
                m.documents, m.passages, m.terms
            );
            Ok(())
        }
        Command::Rewrite { data } => {
            let dir = ctx.out_dir()?;
            let insts = ctx.data(data)?;
            let surfaces = ctx.surfaces(
                &SurfaceArgs {
                    surfaces: None,
                    signals: None,
                },
                &insts,
            )?;
            let path = dir.join("surfaces.jsonl");
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_surfaces(BufWriter::new(file), &surfaces).map_err(|e| Error::io(&path, e))?;
            let changed = surfaces.iter().filter(|s| s.r4 != s.r0).count();
            println!("{} instances, {} with R4 != R0", surfaces.len(), changed);
            ctx.finish("rewrite", &dir, &["surfaces.jsonl"])
        }
        Command::Calibrate { data } => {
            let dir = ctx.out_dir()?;
            let insts = ctx.data(data)?;
            let pairs: Vec<(String, String, claimgate::data::Label)> = insts
                .iter()
                .filter(|i| !i.evidence.is_empty())
                .map(|i| {
                    (
                        join_turns(i.evidence.iter().map(|e| e.text.as_str())),
                        hypothesis(&i.context_turns, ctx.settings.k_turns, &i.response),
                        i.label,
                    )
                })
                .collect();
            let r = calibrate_temperature(&pairs, &*ctx.backend)?;
            write_file(&dir, "calibration.json", &to_pretty(&r))?;
            println!(
                "T = {:.4} over {} pairs (NLL {:.4} -> {:.4})",
                r.temperature, r.samples, r.nll_before, r.nll_after
            );
            ctx.finish("calibrate", &dir, &["calibration.json"])
        }
        Command::GateSweep {
            data,
            surfaces: sargs,
            index,
            protocol,
            candidate,
            grid,
        } => {
            let dir = ctx.out_dir()?;
            let insts = ctx.data(data)?;
            let protocol = Protocol::from(*protocol);
            let index = match (protocol, index) {
                (Protocol::Fv, _) => None,
                (_, Some(p)) => Some(ctx.index(p)?),
                (_, None) => {
                    return Err(
                        Error::Config("--index is required for ir and e2e sweeps".into()).into(),
                    )
                }
            };
            let surfaces = ctx.surfaces(sargs, &insts)?;
            let kind = CandidateKind::from(*candidate);
            let signals = ctx.signals(sargs, &insts, &surfaces, kind)?;
            write_jsonl(&dir, "signals.jsonl", &signals)?;
            let grid = grid.clone().unwrap_or_else(default_tau_grid);
            let cfg = ctx.protocol_config(SurfaceSelector::Gated(kind));
            let prov = ctx.provenance();
            let inputs = EvalInputs {
                instances: &insts,
                surfaces: &surfaces,
                signals: Some(&signals),
                index: index.as_ref(),
                cascade: &ctx.settings.cascade,
                gate: &ctx.settings.gate,
                backend: &*ctx.backend,
                provenance: &prov,
            };
            let table = protocol_sweep(protocol, &cfg, &inputs, kind, &grid)?;
            let tsv = sweep_tsv(&table);
            write_file(&dir, "sweep.tsv", &tsv)?;
            write_file(&dir, "sweep.json", &to_pretty(&table))?;
            print!("{tsv}");
            ctx.finish(
                "gate-sweep",
                &dir,
                &["signals.jsonl", "sweep.tsv", "sweep.json"],
            )
        }
        Command::EvalIr {
            data,
            surfaces,
            index,
        } => report_command(
            &mut ctx,
            "eval-ir",
            Protocol::Ir,
            data,
            surfaces,
            Some(index),
        ),
        Command::EvalFv { data, surfaces } => {
            report_command(&mut ctx, "eval-fv", Protocol::Fv, data, surfaces, None)
        }
        Command::EvalE2e {
            data,
            surfaces,
            index,
        } => report_command(
            &mut ctx,
            "eval-e2e",
            Protocol::E2e,
            data,
            surfaces,
            Some(index),
        ),
        Command::Stats { data } => {
            let insts = ctx.data(data)?;
            let stats = compute_stats(&insts, PronounLexicon::builtin());
            let table = stats.to_table();
            print!("{table}");
            if ctx.global.out.is_some() {
                let dir = ctx.out_dir()?;
                write_file(&dir, "stats.txt", &table)?;
                write_file(&dir, "stats.json", &to_pretty(&stats))?;
                ctx.finish("stats", &dir, &["stats.txt", "stats.json"])?;
            }
            Ok(())
        }
    }
}

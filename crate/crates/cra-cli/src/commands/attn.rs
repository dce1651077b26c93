//! Exports support-pair attention weights beside fingerprint Tanimoto
//! similarities for one episode, as aligned square CSV matrices.
//!
//! The joint attention runs over the [support : query] stack, so a support
//! row's softmax spreads mass over query columns too. Each exported row is
//! the support block re-normalized to sum 1, which equals the softmax the
//! head would produce over support logits alone: dropping columns from a
//! softmax and rescaling never changes the ratios of the kept entries.

use crate::commands::{draw_episode, pick_task, reference_for};
use crate::config::resolve_seed;
use crate::data;
use crate::error::CliError;
use crate::outdir::OutDir;
use cra_core::chem::parse_smiles;
use cra_core::episodes::SampleMode;
use cra_core::featurize::{circular_fingerprint, tanimoto, DEFAULT_NBITS, DEFAULT_RADIUS};
use cra_core::model::{checkpoint, forward_episode, EncoderConfig, EpisodeBatch, Variant};
use cra_core::ndiff::Tape;
use std::path::PathBuf;

pub struct Args {
    pub checkpoint: PathBuf,
    pub tasks: PathBuf,
    pub out: PathBuf,
    pub task_id: Option<String>,
    pub reference: Option<PathBuf>,
    pub n_support: usize,
    pub n_query: usize,
    pub mode: SampleMode,
    pub seed_flag: Option<u64>,
}

fn matrix_csv(ids: &[&str], matrix: &[Vec<f64>]) -> String {
    let mut out = String::from("id");
    for id in ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for (id, row) in ids.iter().zip(matrix) {
        out.push_str(id);
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn run(args: Args) -> Result<(), CliError> {
    let ckpt = checkpoint::load(&args.checkpoint)?;
    if ckpt.variant == Variant::EncoderOnly {
        return Err(CliError::usage(
            "the encoder-only variant has no attention weights to export",
        ));
    }
    let reference_path = reference_for(ckpt.variant, args.reference.as_deref())?;
    let data = data::load_all(&args.tasks, None, reference_path)?;
    let task = pick_task(&data.tasks, args.task_id.as_deref(), &args.tasks)?;
    let seed = resolve_seed(args.seed_flag, None)?;

    let episode = draw_episode(
        &ckpt,
        task,
        &data.reference,
        args.n_support,
        args.n_query,
        args.mode,
        seed,
    )?;
    let ns = episode.support.len();
    let ids: Vec<&str> = episode.support.iter().map(|r| r.id.as_str()).collect();

    // Fingerprints first: a support record without SMILES is a data
    // problem, best reported before the forward pass runs.
    let mut fingerprints = Vec::with_capacity(ns);
    for r in &episode.support {
        let smiles = r.smiles.as_deref().ok_or_else(|| {
            CliError::domain(format!(
                "record {:?} has no smiles; the Tanimoto matrix needs fingerprints",
                r.id
            ))
        })?;
        let mol = parse_smiles(smiles).map_err(|e| {
            CliError::domain(format!("record {:?}: cannot parse {smiles:?}: {e}", r.id))
        })?;
        fingerprints.push(circular_fingerprint(&mol.graph, DEFAULT_RADIUS, DEFAULT_NBITS));
    }
    let tani: Vec<Vec<f64>> = fingerprints
        .iter()
        .map(|a| fingerprints.iter().map(|b| tanimoto(a, b)).collect())
        .collect();

    let want_graphs = matches!(ckpt.config.encoder, EncoderConfig::Gin { .. });
    let batch = EpisodeBatch::from_episode(&episode, want_graphs)?;
    let mut tape = Tape::new();
    let bound = ckpt.params.bind(&mut tape);
    let out = forward_episode(
        &mut tape,
        &bound,
        &ckpt.config,
        ckpt.variant,
        &batch,
        ckpt.config.mask_queries,
    )?;
    assert!(!out.aam_weights.is_empty(), "attention variants record weights");

    let mut dir = OutDir::create(&args.out)?;
    let mut mean = vec![vec![0.0; ns]; ns];
    for (h, &weights) in out.aam_weights.iter().enumerate() {
        let full = tape.value(weights);
        let mut block = Vec::with_capacity(ns);
        for i in 0..ns {
            let row: Vec<f64> = (0..ns).map(|j| full.get(i, j)).collect();
            let total: f64 = row.iter().sum();
            block.push(row.into_iter().map(|v| v / total).collect::<Vec<f64>>());
        }
        for (acc, row) in mean.iter_mut().zip(&block) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v / out.aam_weights.len() as f64;
            }
        }
        dir.write(&format!("attention_head{h}.csv"), matrix_csv(&ids, &block))?;
    }
    dir.write("attention.csv", matrix_csv(&ids, &mean))?;
    dir.write("tanimoto.csv", matrix_csv(&ids, &tani))?;
    dir.finish("attn", seed)?;
    println!(
        "exported {}x{} attention ({} heads) and Tanimoto matrices for task {} to {}",
        ns,
        ns,
        out.aam_weights.len(),
        task.task_id,
        args.out.display()
    );
    Ok(())
}

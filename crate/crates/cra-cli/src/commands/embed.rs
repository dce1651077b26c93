//! Exports one episode's embeddings before and after anchor augmentation,
//! projected to 2-D by PCA, anchors included. Two CSVs: the pre file holds
//! raw encoder embeddings with the initial class-mean anchors, the post file
//! holds augmented embeddings with the enriched anchors. Each file gets its
//! own PCA fit over exactly its rows.

use crate::commands::{draw_episode, pick_task, reference_for};
use crate::config::resolve_seed;
use crate::data;
use crate::error::CliError;
use crate::outdir::OutDir;
use cra_core::episodes::{Episode, SampleMode};
use cra_core::metrics::pca_2d;
use cra_core::model::{
    checkpoint, forward_episode, EncoderConfig, EpisodeBatch, Variant,
};
use cra_core::ndiff::{Tape, Tensor};
use serde::Serialize;
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

fn tensor_rows(t: &Tensor) -> Vec<Vec<f64>> {
    t.data.chunks(t.cols).map(|row| row.to_vec()).collect()
}

struct LabeledRow {
    id: String,
    role: &'static str,
    /// Empty for unlabeled reference rows.
    label: String,
}

fn embedding_csv(rows: &[LabeledRow], embeddings: &[Vec<f64>]) -> String {
    let pca = pca_2d(embeddings);
    let mut out = String::from("id,pc1,pc2,role,label\n");
    for (row, coord) in rows.iter().zip(&pca.coords) {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.id, coord[0], coord[1], row.role, row.label
        ));
    }
    out
}

fn episode_rows(episode: &Episode) -> Vec<LabeledRow> {
    let record_row = |r: &cra_core::episodes::MoleculeRecord, role: &'static str| LabeledRow {
        id: r.id.clone(),
        role,
        label: r.label.map(|l| l.to_string()).unwrap_or_default(),
    };
    let mut rows: Vec<LabeledRow> =
        episode.support.iter().map(|r| record_row(r, "support")).collect();
    rows.extend(episode.query.iter().map(|r| record_row(r, "query")));
    rows.extend(episode.reference.iter().map(|r| record_row(r, "reference")));
    rows.push(LabeledRow { id: "anchor-neg".to_string(), role: "anchor", label: "-1".to_string() });
    rows.push(LabeledRow { id: "anchor-pos".to_string(), role: "anchor", label: "1".to_string() });
    rows
}

pub fn run(args: Args) -> Result<(), CliError> {
    let ckpt = checkpoint::load(&args.checkpoint)?;
    if !matches!(ckpt.variant, Variant::Aam | Variant::Full) {
        return Err(CliError::usage(format!(
            "embedding export needs anchors; checkpoint variant is {} \
             (expected aam or full)",
            ckpt.variant.name()
        )));
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
    let anchors = out.anchor_set(&tape).expect("anchor variants produce anchors");

    let rows = episode_rows(&episode);
    let stack = |a: &Tensor, b: &Tensor, reference: Option<&Tensor>, anchors: &Tensor| {
        let mut all = tensor_rows(a);
        all.extend(tensor_rows(b));
        if let Some(r) = reference {
            all.extend(tensor_rows(r));
        }
        all.extend(tensor_rows(anchors));
        all
    };
    let reference_emb = out.reference_emb.map(|id| tape.value(id).clone());
    let pre = stack(
        tape.value(out.support_emb),
        tape.value(out.query_emb),
        reference_emb.as_ref(),
        &anchors.initial,
    );
    let post = stack(
        tape.value(out.support_aug),
        tape.value(out.query_aug),
        reference_emb.as_ref(),
        &anchors.augmented,
    );
    assert_eq!(rows.len(), pre.len(), "one labeled row per embedding");

    let mut dir = OutDir::create(&args.out)?;
    dir.write("embeddings_pre.csv", embedding_csv(&rows, &pre))?;
    dir.write("embeddings_post.csv", embedding_csv(&rows, &post))?;
    #[derive(Serialize)]
    struct Meta<'a> {
        task_id: &'a str,
        variant: &'a str,
        n_support: usize,
        n_query: usize,
        reference_rows: usize,
        seed: u64,
    }
    dir.write_json(
        "episode.json",
        &Meta {
            task_id: &task.task_id,
            variant: ckpt.variant.name(),
            n_support: episode.support.len(),
            n_query: episode.query.len(),
            reference_rows: episode.reference.len(),
            seed,
        },
    )?;
    dir.finish("embed", seed)?;
    println!(
        "exported {} embedding rows (pre and post) for task {} to {}",
        rows.len(),
        task.task_id,
        args.out.display()
    );
    Ok(())
}

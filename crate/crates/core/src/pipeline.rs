//! End-to-end training: pseudo-labeling, stage one, reconstruction, stage two
//! and the out-of-sample encoder. Also hosts the random-projection baseline
//! and the no-reconstruction ablation used for comparisons.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::LinearEncoder;
use crate::linalg;
use crate::pseudo_label::{self, PseudoLabelTable};
use crate::reconstruction::{self, ReconstructedFeatures};
use crate::retrieval::{self, EvalReport, Scenario};
use crate::stage_one::{self, HyperParams, StageOneState};
use crate::stage_two::{self, HashCodes, QuantizerPair};
use crate::{DomainDataset, Matrix, PscaError, Result};

/// Which features stage two quantizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// Reconstructed semantics stacked on the projection (`C = 2q`).
    #[default]
    Full,
    /// Ablation: quantize `P^T X` directly (`C = q`).
    DirectQuantization,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    /// Hyperparameters with `q` resolved.
    pub hp: HyperParams,
    pub variant: Variant,
    pub pseudo_labels: PseudoLabelTable,
    pub stage_one: StageOneState,
    /// Features fed to stage two (`C x n_s`, `C x n_t`).
    pub quantized_source: Matrix,
    pub quantized_target: Matrix,
    pub quantizers: QuantizerPair,
    pub codes: HashCodes,
    pub stage_two_trace: Vec<f64>,
    pub encoder: LinearEncoder,
}

impl TrainedModel {
    /// Pseudo-labels of the training target samples.
    pub fn target_pseudo_labels(&self) -> &[usize] {
        &self.pseudo_labels.hard_labels
    }
}

/// Initial projection and the pseudo-label table computed from it.
pub fn initial_pseudo_labels(ds: &DomainDataset, hp: &HyperParams) -> Result<(Matrix, PseudoLabelTable)> {
    let q = hp.subspace_dim(ds.num_classes, ds.feature_dim());
    let p0 = stage_one::initial_projection(&ds.combined_features(), q);
    let pt = p0.transpose();
    let table = pseudo_label::pseudo_label(
        &(&pt * &ds.source_features),
        &ds.source_labels,
        &(&pt * &ds.target_features),
        ds.num_classes,
        hp.centroid_rounds,
    )?;
    Ok((p0, table))
}

/// Trains on every target column of `ds` (pass the training subset).
pub fn train(ds: &DomainDataset, hp: &HyperParams) -> Result<TrainedModel> {
    train_variant(ds, hp, Variant::Full)
}

pub fn train_variant(ds: &DomainDataset, hp: &HyperParams, variant: Variant) -> Result<TrainedModel> {
    let (c, d) = (ds.num_classes, ds.feature_dim());
    hp.validate(c, d)?;
    let q = hp.subspace_dim(c, d);
    let hp = HyperParams { q: Some(q), ..hp.clone() };
    let fused = match variant {
        Variant::Full => 2 * q,
        Variant::DirectQuantization => q,
    };
    if hp.r > fused {
        return Err(PscaError::Config(format!(
            "code length {} exceeds the quantized feature dimension {fused} (q = {q})",
            hp.r
        )));
    }

    let (p0, table) = initial_pseudo_labels(ds, &hp)?;
    let s1 = stage_one::run_stage_one_from(ds, &table, p0, &hp, |_| {})?;

    let pt = s1.projection.transpose();
    let (d_source, d_target) = match variant {
        Variant::Full => {
            let rs = reconstruction::reconstruct_source(&ds.source_labels, &s1.prototypes);
            let rt = reconstruction::reconstruct_target(&s1.membership, &s1.prototypes);
            let ReconstructedFeatures { source, target, .. } = reconstruction::assemble(
                &rs,
                &rt,
                &s1.projection,
                &ds.source_features,
                &ds.target_features,
            )?;
            (source, target)
        }
        Variant::DirectQuantization => (&pt * &ds.source_features, &pt * &ds.target_features),
    };

    let s2 = stage_two::run_stage_two_observed(&d_source, &d_target, &hp, |_, _| {})?;
    let encoder = LinearEncoder::fit(&s2.codes.combined(), &ds.combined_features(), hp.beta)?;

    Ok(TrainedModel {
        hp,
        variant,
        pseudo_labels: table,
        stage_one: s1,
        quantized_source: d_source,
        quantized_target: d_target,
        quantizers: s2.quantizers,
        codes: s2.codes,
        stage_two_trace: s2.trace,
        encoder,
    })
}

/// Random row-orthonormal projection of the raw features followed by `sgn`.
///
/// Returned as a [`LinearEncoder`] so it encodes queries exactly like a
/// trained model.
pub fn random_projection_baseline(ds: &DomainDataset, bits: usize, seed: u64) -> Result<(LinearEncoder, HashCodes)> {
    let d = ds.feature_dim();
    if bits == 0 || bits > d {
        return Err(PscaError::Config(format!(
            "baseline needs 1 <= r <= d, got r = {bits}, d = {d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = linalg::random_row_orthonormal(bits, d, &mut rng);
    let encoder = LinearEncoder { phi: w, beta: 0.0 };
    let codes = HashCodes {
        source: encoder.encode(&ds.source_features)?,
        target: encoder.encode(&ds.target_features)?,
    };
    Ok((encoder, codes))
}

/// Encodes `query_features` and ranks them against `db_codes`.
pub fn evaluate(
    encoder: &LinearEncoder,
    query_features: &Matrix,
    query_labels: &[usize],
    db_codes: &Matrix,
    db_labels: &[usize],
    scenario: Scenario,
) -> Result<EvalReport> {
    let queries = encoder.encode(query_features)?;
    retrieval::map_score(&queries, db_codes, query_labels, db_labels, scenario)
}

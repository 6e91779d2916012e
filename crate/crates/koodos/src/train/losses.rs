//! The five loss terms and the tape plumbing shared by the trainer and
//! the public loss functions.
//!
//! Pairwise terms integrate each anchored latent state forward with its
//! own matrix-exponential (or RK4) flow, exactly as the objective sums
//! are written; all distances are Euclidean norms, summed raw over
//! domains and pairs (the loss weights absorb scale).

use super::{KoodosSystem, PairSchedule, TrainError};
use crate::diffcore::{Graph, NodeId, Tensor};
use crate::domains::{Domain, DomainSequence};
use crate::nets::{
    decode_node, encode_node, latent_field_node, materialize_node, predict_node, AutoencoderNodes,
    MlpSpec, OperatorKind, TaskKind,
};
use crate::odeflow::{integrate_field_node, integrate_linear_node, IntegrationConfig, IntegrationMethod};

/// Borrowed view over everything a loss graph needs.
pub(crate) struct Pieces<'a> {
    pub spec: &'a MlpSpec,
    pub timestamps: &'a [f64],
    pub thetas: &'a [Tensor],
    pub enc: &'a [(Tensor, Tensor)],
    pub dec: &'a [(Tensor, Tensor)],
    pub op_kind: &'a OperatorKind,
    pub op_mats: &'a [Tensor],
    pub integration: IntegrationConfig,
}

impl<'a> Pieces<'a> {
    pub fn from_system(system: &'a KoodosSystem, thetas: &'a [Tensor]) -> Self {
        Pieces {
            spec: &system.spec,
            timestamps: &system.timestamps,
            thetas,
            enc: &system.autoencoder.encoder,
            dec: &system.autoencoder.decoder,
            op_kind: &system.operator.kind,
            op_mats: &system.operator.mats,
            integration: system.config.integration,
        }
    }
}

/// Node handles for the pieces inserted into one graph.
pub(crate) struct PieceNodes {
    pub thetas: Vec<NodeId>,
    pub ae: AutoencoderNodes,
    pub op_mats: Vec<NodeId>,
}

/// Insert parameters/weights as trainable leaves or plain inputs.
pub(crate) fn insert_pieces(g: &mut Graph, pieces: &Pieces, trainable: bool) -> PieceNodes {
    let leaf = |g: &mut Graph, t: &Tensor| {
        if trainable {
            g.param(t.clone())
        } else {
            g.input(t.clone())
        }
    };
    let thetas = pieces.thetas.iter().map(|t| leaf(g, t)).collect();
    let ins_layers = |g: &mut Graph, layers: &[(Tensor, Tensor)]| {
        layers
            .iter()
            .map(|(w, b)| {
                let wn = if trainable { g.param(w.clone()) } else { g.input(w.clone()) };
                let bn = if trainable { g.param(b.clone()) } else { g.input(b.clone()) };
                (wn, bn)
            })
            .collect()
    };
    let ae = AutoencoderNodes {
        encoder: ins_layers(g, pieces.enc),
        decoder: ins_layers(g, pieces.dec),
    };
    let op_mats = pieces.op_mats.iter().map(|t| leaf(g, t)).collect();
    PieceNodes { thetas, ae, op_mats }
}

/// Task loss: BCE over probabilities for classification, MSE otherwise.
pub(crate) fn task_loss_node(
    g: &mut Graph,
    task: TaskKind,
    pred: NodeId,
    target: NodeId,
) -> Result<NodeId, TrainError> {
    let node = match task {
        TaskKind::BinaryClassification => g.binary_cross_entropy_loss(pred, target)?,
        TaskKind::Regression => g.mse_loss(pred, target)?,
    };
    Ok(node)
}

/// The materialized operator node, or None for the nonlinear MLP field.
pub(crate) fn operator_node(
    g: &mut Graph,
    kind: &OperatorKind,
    op_mats: &[NodeId],
) -> Result<Option<NodeId>, TrainError> {
    match kind {
        OperatorKind::MlpDynamics { .. } => Ok(None),
        _ => Ok(Some(materialize_node(g, kind, op_mats)?)),
    }
}

/// Latent flow `z_j` integrated from `t_j` to `t_i` on the tape.
pub(crate) fn latent_flow_node(
    g: &mut Graph,
    k_node: Option<NodeId>,
    op_mats: &[NodeId],
    z_row: NodeId,
    t_from: f64,
    t_to: f64,
    cfg: &IntegrationConfig,
) -> Result<NodeId, TrainError> {
    match k_node {
        Some(k) => Ok(integrate_linear_node(g, k, z_row, t_from, t_to, cfg)?),
        None => {
            // nonlinear latent field: always stepped, never matrix-exponential
            let rk_cfg = IntegrationConfig {
                method: IntegrationMethod::Rk4,
                ..*cfg
            };
            let ids = op_mats.to_vec();
            Ok(integrate_field_node(
                g,
                move |g, z, _t| latent_field_node(g, &ids, z),
                z_row,
                t_from,
                t_to,
                &rk_cfg,
            )?)
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct LossSelect {
    pub intri: bool,
    pub integ: bool,
    pub recon: bool,
    pub dyna: bool,
    pub consis: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct LossValues {
    pub intri: f64,
    pub integ: f64,
    pub recon: f64,
    pub dyna: f64,
    pub consis: f64,
}

/// Evaluate the selected loss terms on one monolithic graph (values only).
pub(crate) fn eval_losses(
    pieces: &Pieces,
    domains: Option<&[Domain]>,
    pairs: &[(usize, usize)],
    select: LossSelect,
) -> Result<LossValues, TrainError> {
    let t_count = pieces.thetas.len();
    for &(j, i) in pairs {
        if j > i || i >= t_count {
            return Err(TrainError::Invalid(format!(
                "pair ({j}, {i}) out of range for {t_count} domains"
            )));
        }
    }
    if select.intri || select.integ {
        let d = domains.ok_or_else(|| {
            TrainError::Invalid("prediction losses need the domain data".into())
        })?;
        if d.len() != t_count {
            return Err(TrainError::Invalid(format!(
                "{} domains for {} parameter vectors",
                d.len(),
                t_count
            )));
        }
    }

    let mut g = Graph::new();
    let nodes = insert_pieces(&mut g, pieces, false);
    let mut out = LossValues::default();

    if select.intri {
        let domains = domains.expect("checked above");
        for (i, domain) in domains.iter().enumerate() {
            let x = g.input(domain.x.clone());
            let y = g.input(domain.y.clone());
            let pred = predict_node(&mut g, nodes.thetas[i], pieces.spec, x)?;
            let loss = task_loss_node(&mut g, domain.task, pred, y)?;
            out.intri += g.value(loss).scalar_value();
        }
    }

    let need_latent = select.recon || select.dyna || select.consis || select.integ;
    if need_latent && t_count > 0 {
        let stack = g.concat_rows(&nodes.thetas)?;
        let z = encode_node(&mut g, &nodes.ae, stack)?;

        if select.recon {
            let rec = decode_node(&mut g, &nodes.ae, z)?;
            let diff = g.sub(rec, stack)?;
            let norm = g.rows_l2_norm_sum(diff);
            out.recon = g.value(norm).scalar_value();
        }

        if select.dyna || select.consis || select.integ {
            let k_node = operator_node(&mut g, pieces.op_kind, &nodes.op_mats)?;
            for &(j, i) in pairs {
                let zj = g.slice_rows(z, j, 1)?;
                let flow = latent_flow_node(
                    &mut g,
                    k_node,
                    &nodes.op_mats,
                    zj,
                    pieces.timestamps[j],
                    pieces.timestamps[i],
                    &pieces.integration,
                )?;
                if select.dyna {
                    let zi = g.slice_rows(z, i, 1)?;
                    let diff = g.sub(flow, zi)?;
                    let norm = g.rows_l2_norm_sum(diff);
                    out.dyna += g.value(norm).scalar_value();
                }
                if select.consis || select.integ {
                    let dec = decode_node(&mut g, &nodes.ae, flow)?;
                    if select.consis {
                        let diff = g.sub(dec, nodes.thetas[i])?;
                        let norm = g.rows_l2_norm_sum(diff);
                        out.consis += g.value(norm).scalar_value();
                    }
                    if select.integ {
                        let domain = &domains.expect("checked above")[i];
                        let x = g.input(domain.x.clone());
                        let y = g.input(domain.y.clone());
                        let pred = predict_node(&mut g, dec, pieces.spec, x)?;
                        let loss = task_loss_node(&mut g, domain.task, pred, y)?;
                        out.integ += g.value(loss).scalar_value();
                    }
                }
            }
        }
    }
    Ok(out)
}

fn system_pieces_eval(
    system: &KoodosSystem,
    domains: Option<&DomainSequence>,
    pairs: &[(usize, usize)],
    select: LossSelect,
) -> Result<LossValues, TrainError> {
    system.validate()?;
    let thetas: Vec<Tensor> = system.thetas.iter().map(|p| p.theta().clone()).collect();
    let pieces = Pieces::from_system(system, &thetas);
    eval_losses(&pieces, domains.map(|d| d.domains.as_slice()), pairs, select)
}

/// Sum of per-domain prediction losses of the intrinsic parameters.
pub fn loss_intri(system: &KoodosSystem, domains: &DomainSequence) -> Result<f64, TrainError> {
    Ok(system_pieces_eval(
        system,
        Some(domains),
        &[],
        LossSelect { intri: true, ..Default::default() },
    )?
    .intri)
}

/// Sum of reconstruction distances `||theta_i - dec(enc(theta_i))||_2`.
pub fn loss_recon(system: &KoodosSystem) -> Result<f64, TrainError> {
    Ok(system_pieces_eval(
        system,
        None,
        &[],
        LossSelect { recon: true, ..Default::default() },
    )?
    .recon)
}

/// Latent dynamic-fidelity: `sum ||z_i - z_i^{j->i}||_2` over the schedule.
pub fn loss_dyna(system: &KoodosSystem, schedule: &PairSchedule) -> Result<f64, TrainError> {
    loss_dyna_pairs(system, &schedule.pairs(system.domain_count()))
}

/// [`loss_dyna`] over an explicit pair list (self-pairs allowed).
pub fn loss_dyna_pairs(
    system: &KoodosSystem,
    pairs: &[(usize, usize)],
) -> Result<f64, TrainError> {
    Ok(system_pieces_eval(
        system,
        None,
        pairs,
        LossSelect { dyna: true, ..Default::default() },
    )?
    .dyna)
}

/// Model-space consistency: `sum ||theta_i - dec(z_i^{j->i})||_2`.
pub fn loss_consis(system: &KoodosSystem, schedule: &PairSchedule) -> Result<f64, TrainError> {
    loss_consis_pairs(system, &schedule.pairs(system.domain_count()))
}

/// [`loss_consis`] over an explicit pair list (self-pairs allowed).
pub fn loss_consis_pairs(
    system: &KoodosSystem,
    pairs: &[(usize, usize)],
) -> Result<f64, TrainError> {
    Ok(system_pieces_eval(
        system,
        None,
        pairs,
        LossSelect { consis: true, ..Default::default() },
    )?
    .consis)
}

/// Prediction loss of every integrated parameter vector on its target
/// domain: `sum L(Y_i, g(X_i; dec(z_i^{j->i})))`.
pub fn loss_integ(
    system: &KoodosSystem,
    domains: &DomainSequence,
    schedule: &PairSchedule,
) -> Result<f64, TrainError> {
    Ok(system_pieces_eval(
        system,
        Some(domains),
        &schedule.pairs(system.domain_count()),
        LossSelect { integ: true, ..Default::default() },
    )?
    .integ)
}

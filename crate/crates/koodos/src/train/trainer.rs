//! Warm start, joint optimization, inference and baselines.
//!
//! The joint epoch is computed in stages that compose exactly through the
//! chain rule: per-domain prediction graphs, one core graph (encoder,
//! latent flows, decoder, the three consistency terms), and per-pair
//! prediction graphs whose parameter-row adjoints are injected back into
//! the core graph as backward seeds. This keeps peak memory at one pair's
//! activations instead of all pairs at once, with identical gradients.

use super::losses::{
    latent_flow_node, operator_node, task_loss_node, LossValues,
};
use super::metrics::{EvalReport, Metric};
use super::{derive_seed, EpochRecord, KoodosConfig, KoodosSystem, TrainError};
use crate::diffcore::{AdamParams, AdamState, Graph, NodeId, Tensor};
use crate::domains::{Domain, DomainSequence};
use crate::nets::{
    decode_node, direct_dynamics, direct_dynamics_node, encode_node, flatten, init_mlp,
    predict, predict_node, Autoencoder, AutoencoderNodes, AutoencoderSpec, DynamicsNet,
    DynamicsNodes, FlatParams, KoopmanOperator, KoopmanState, MlpSpec, TaskKind,
};
use crate::odeflow::{
    integrate_field, integrate_field_node, integrate_linear, IntegrationConfig, IntegrationMethod,
};
use rayon::prelude::*;

/// Per-domain empirical risk minimization with Adam from a seeded Glorot
/// init; the warm start of the joint phase.
pub fn erm_pretrain(
    domain: &Domain,
    spec: &MlpSpec,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<FlatParams, TrainError> {
    check_domain_matches(domain, spec)?;
    if epochs == 0 {
        return Err(TrainError::Invalid("epochs must be >= 1".into()));
    }
    let init = flatten(&init_mlp(spec, seed));
    erm_refine(&init, domain, epochs, lr)
}

/// ERM continuing from existing parameters.
pub fn erm_refine(
    init: &FlatParams,
    domain: &Domain,
    epochs: usize,
    lr: f64,
) -> Result<FlatParams, TrainError> {
    check_domain_matches(domain, init.spec())?;
    if epochs == 0 {
        return Err(TrainError::Invalid("epochs must be >= 1".into()));
    }
    let mut params = vec![init.theta().clone()];
    let mut adam = AdamState::for_params(&params, AdamParams::with_lr(lr))?;
    for _ in 0..epochs {
        let mut g = Graph::new();
        let th = g.param(params[0].clone());
        let x = g.input(domain.x.clone());
        let y = g.input(domain.y.clone());
        let pred = predict_node(&mut g, th, init.spec(), x)?;
        let loss = task_loss_node(&mut g, domain.task, pred, y)?;
        let mut grads = g.backward(loss)?;
        let gt = grads.take(th)?;
        adam.step(&mut params, &[gt])?;
    }
    init.with_theta(params.pop().expect("one parameter tensor")).map_err(Into::into)
}

fn check_domain_matches(domain: &Domain, spec: &MlpSpec) -> Result<(), TrainError> {
    if domain.feature_dim() != spec.input {
        return Err(TrainError::Invalid(format!(
            "domain features have width {}, model expects {}",
            domain.feature_dim(),
            spec.input
        )));
    }
    if domain.task != spec.task {
        return Err(TrainError::Invalid(format!(
            "domain task {:?} does not match model task {:?}",
            domain.task, spec.task
        )));
    }
    Ok(())
}

/// ERM over all source domains pooled into one dataset.
pub fn baseline_offline(
    domains: &DomainSequence,
    spec: &MlpSpec,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<FlatParams, TrainError> {
    let last = domains
        .domains
        .last()
        .ok_or_else(|| TrainError::Invalid("no domains to pool".into()))?;
    let d = last.feature_dim();
    let total: usize = domains.domains.iter().map(Domain::len).sum();
    let mut x = Vec::with_capacity(total * d);
    let mut y = Vec::with_capacity(total);
    for domain in &domains.domains {
        x.extend_from_slice(domain.x.data());
        y.extend_from_slice(domain.y.data());
    }
    let pooled = Domain::new(
        last.t,
        Tensor::new(total, d, x).map_err(TrainError::from)?,
        Tensor::new(total, 1, y).map_err(TrainError::from)?,
        last.task,
    )?;
    erm_pretrain(&pooled, spec, epochs, lr, seed)
}

/// ERM on the last source domain only.
pub fn baseline_lastdomain(
    domains: &DomainSequence,
    spec: &MlpSpec,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<FlatParams, TrainError> {
    let last = domains
        .domains
        .last()
        .ok_or_else(|| TrainError::Invalid("no domains to train on".into()))?;
    erm_pretrain(last, spec, epochs, lr, seed)
}

/// Score fixed parameters on every test domain (used by the baselines).
pub fn evaluate_fixed_params(
    params: &FlatParams,
    test: &DomainSequence,
    metric: Metric,
) -> Result<EvalReport, TrainError> {
    if test.is_empty() {
        return Err(TrainError::Invalid("no test domains".into()));
    }
    let per_domain: Vec<(f64, f64)> = test
        .domains
        .par_iter()
        .map(|d| -> Result<(f64, f64), TrainError> {
            let preds = predict(params, &d.x)?;
            Ok((d.t, metric.score(&preds, &d.y)?))
        })
        .collect::<Result<_, _>>()?;
    let aggregate = per_domain.iter().map(|(_, s)| s).sum::<f64>() / per_domain.len() as f64;
    Ok(EvalReport {
        metric,
        per_domain,
        aggregate,
    })
}

/// Warm-start every domain model, then jointly optimize the parameters,
/// the transformation pair and the operator against the combined loss.
pub fn train_joint(
    domains: &DomainSequence,
    spec: &MlpSpec,
    config: &KoodosConfig,
) -> Result<KoodosSystem, TrainError> {
    config.validate()?;
    spec.validate()?;
    if domains.is_empty() {
        return Err(TrainError::Invalid("at least one domain is required".into()));
    }
    for d in &domains.domains {
        check_domain_matches(d, spec)?;
    }
    let t_count = domains.len();

    // chained warm start: each domain refines its predecessor's solution,
    // which keeps the parameter trajectory smooth enough to model
    let mut thetas: Vec<Tensor> = Vec::with_capacity(t_count);
    let mut prev: Option<FlatParams> = None;
    for domain in &domains.domains {
        let fp = match &prev {
            None => erm_pretrain(
                domain,
                spec,
                config.warm_epochs,
                config.lr_predictive,
                derive_seed(config.seed, 1),
            )?,
            Some(p) => erm_refine(p, domain, config.warm_epochs, config.lr_predictive)?,
        };
        thetas.push(fp.theta().clone());
        prev = Some(fp);
    }

    let p_dim = spec.param_count();
    let ae_spec = AutoencoderSpec::new(p_dim, config.autoencoder_widths.clone())?;
    let mut autoencoder = Autoencoder::init(ae_spec, derive_seed(config.seed, 2));
    let mut operator = KoopmanOperator::init(
        config.operator.clone(),
        autoencoder.latent_dim(),
        derive_seed(config.seed, 3),
    )?;
    let mut dynamics = if config.ablation.no_koopman {
        Some(DynamicsNet::init(
            p_dim,
            config.dynamics_hidden.clone(),
            derive_seed(config.seed, 4),
        )?)
    } else {
        None
    };

    let mut history = Vec::new();
    if t_count == 1 {
        eprintln!("warning: no dynamics learnable (single training domain)");
    } else {
        if !config.ablation.no_koopman {
            // warm the transformation pair and the operator before the
            // joint phase: with a random decoder the consistency terms
            // would drag the fitted parameters toward garbage
            autoencoder_warmup(&thetas, &mut autoencoder, config)?;
            pipeline_warmup(
                domains.timestamps().as_slice(),
                &thetas,
                &mut autoencoder,
                &mut operator,
                config,
            )?;
        }
        joint_phase(
            domains,
            spec,
            config,
            &mut thetas,
            &mut autoencoder,
            &mut operator,
            dynamics.as_mut(),
            &mut history,
        )?;
    }

    let thetas = thetas
        .into_iter()
        .map(|t| FlatParams::from_theta(spec.clone(), t))
        .collect::<Result<Vec<_>, _>>()?;
    let system = KoodosSystem {
        spec: spec.clone(),
        timestamps: domains.timestamps(),
        thetas,
        autoencoder,
        operator,
        dynamics,
        config: config.clone(),
        history,
    };
    system.validate()?;
    Ok(system)
}

/// Fit the autoencoder to reconstruct the warm-started parameters.
fn autoencoder_warmup(
    thetas: &[Tensor],
    autoencoder: &mut Autoencoder,
    config: &KoodosConfig,
) -> Result<(), TrainError> {
    if config.ae_warm_epochs == 0 {
        return Ok(());
    }
    let mut weights: Vec<Tensor> = Vec::new();
    for (w, b) in autoencoder.encoder.iter().chain(&autoencoder.decoder) {
        weights.push(w.clone());
        weights.push(b.clone());
    }
    let mut adam = AdamState::for_params(&weights, AdamParams::with_lr(config.lr_other))?;
    let enc_layers = autoencoder.encoder.len();
    for _ in 0..config.ae_warm_epochs {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = weights.iter().map(|w| g.param(w.clone())).collect();
        let ae_nodes = AutoencoderNodes {
            encoder: (0..enc_layers)
                .map(|l| (ids[2 * l], ids[2 * l + 1]))
                .collect(),
            decoder: (0..enc_layers)
                .map(|l| (ids[2 * enc_layers + 2 * l], ids[2 * enc_layers + 2 * l + 1]))
                .collect(),
        };
        let stack_rows: Vec<NodeId> = thetas.iter().map(|t| g.input(t.clone())).collect();
        let stack = g.concat_rows(&stack_rows)?;
        let z = encode_node(&mut g, &ae_nodes, stack)?;
        let rec = decode_node(&mut g, &ae_nodes, z)?;
        let diff = g.sub(rec, stack)?;
        let loss = g.rows_l2_norm_sum(diff);
        let grads = g.backward(loss)?;
        let grad_tensors: Vec<Tensor> = ids
            .iter()
            .map(|id| grads.get(*id).cloned())
            .collect::<Result<_, _>>()?;
        adam.step(&mut weights, &grad_tensors)?;
    }
    let mut it = weights.into_iter();
    for (w, b) in autoencoder
        .encoder
        .iter_mut()
        .chain(autoencoder.decoder.iter_mut())
    {
        *w = it.next().expect("layer weight");
        *b = it.next().expect("layer bias");
    }
    Ok(())
}

/// Warm the full Koopman pipeline (autoencoder and operator together,
/// predictive parameters frozen) on reconstruction plus latent dynamic
/// fidelity. This carries most of the linearization work at a fraction of
/// a joint epoch's cost.
fn pipeline_warmup(
    timestamps: &[f64],
    thetas: &[Tensor],
    autoencoder: &mut Autoencoder,
    operator: &mut KoopmanOperator,
    config: &KoodosConfig,
) -> Result<(), TrainError> {
    if config.operator_warm_epochs == 0 {
        return Ok(());
    }
    let pairs = config.pair_schedule.pairs(thetas.len());
    let enc_layers = autoencoder.encoder.len();
    let mut weights: Vec<Tensor> = Vec::new();
    for (w, b) in autoencoder.encoder.iter().chain(&autoencoder.decoder) {
        weights.push(w.clone());
        weights.push(b.clone());
    }
    let ae_weight_count = weights.len();
    weights.extend(operator.mats.iter().cloned());
    let mut adam = AdamState::for_params(&weights, AdamParams::with_lr(config.lr_other))?;
    let timing = std::env::var("KOODOS_TIMING").is_ok();

    for epoch in 0..config.operator_warm_epochs {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = weights.iter().map(|w| g.param(w.clone())).collect();
        let ae_nodes = AutoencoderNodes {
            encoder: (0..enc_layers)
                .map(|l| (ids[2 * l], ids[2 * l + 1]))
                .collect(),
            decoder: (0..enc_layers)
                .map(|l| (ids[2 * enc_layers + 2 * l], ids[2 * enc_layers + 2 * l + 1]))
                .collect(),
        };
        let op_ids: Vec<NodeId> = ids[ae_weight_count..].to_vec();
        let stack_rows: Vec<NodeId> = thetas.iter().map(|t| g.input(t.clone())).collect();
        let stack = g.concat_rows(&stack_rows)?;
        let z = encode_node(&mut g, &ae_nodes, stack)?;
        let rec = decode_node(&mut g, &ae_nodes, z)?;
        let rdiff = g.sub(rec, stack)?;
        let recon = g.rows_l2_norm_sum(rdiff);
        let mut loss = g.scale(recon, config.beta)?;
        let mut dyna_value = 0.0;
        if !pairs.is_empty() && config.gamma > 0.0 {
            let k_node = operator_node(&mut g, &config.operator, &op_ids)?;
            let mut dyna_terms = Vec::with_capacity(pairs.len());
            for &(j, i) in &pairs {
                let zj = g.slice_rows(z, j, 1)?;
                let flow = latent_flow_node(
                    &mut g,
                    k_node,
                    &op_ids,
                    zj,
                    timestamps[j],
                    timestamps[i],
                    &config.integration,
                )?;
                let zi = g.slice_rows(z, i, 1)?;
                let diff = g.sub(flow, zi)?;
                dyna_terms.push(g.rows_l2_norm_sum(diff));
            }
            let mut dyna = dyna_terms[0];
            for t in &dyna_terms[1..] {
                dyna = g.add(dyna, *t)?;
            }
            dyna_value = g.value(dyna).scalar_value();
            let dterm = g.scale(dyna, config.gamma)?;
            loss = g.add(loss, dterm)?;
        }
        if timing && (epoch % 100 == 0 || epoch + 1 == config.operator_warm_epochs) {
            eprintln!(
                "  pipeline warm {epoch}: recon {:.4} dyna {:.4}",
                g.value(recon).scalar_value(),
                dyna_value
            );
        }
        let grads = g.backward(loss)?;
        let grad_tensors: Vec<Tensor> = ids
            .iter()
            .map(|id| grads.get(*id).cloned())
            .collect::<Result<_, _>>()?;
        adam.step(&mut weights, &grad_tensors)?;
    }

    let mut it = weights.into_iter();
    for (w, b) in autoencoder
        .encoder
        .iter_mut()
        .chain(autoencoder.decoder.iter_mut())
    {
        *w = it.next().expect("layer weight");
        *b = it.next().expect("layer bias");
    }
    for m in operator.mats.iter_mut() {
        *m = it.next().expect("operator matrix");
    }
    Ok(())
}

/// 0-based pair ranges grouped by target index; pairs are already ordered
/// by target.
fn group_by_target(pairs: &[(usize, usize)]) -> Vec<(usize, std::ops::Range<usize>)> {
    let mut groups = Vec::new();
    let mut start = 0;
    while start < pairs.len() {
        let target = pairs[start].1;
        let mut end = start;
        while end < pairs.len() && pairs[end].1 == target {
            end += 1;
        }
        groups.push((target, start..end));
        start = end;
    }
    groups
}

struct GradAccum {
    theta: Vec<Tensor>,
    other: Vec<Tensor>,
}

impl GradAccum {
    fn new(thetas: &[Tensor], other: &[Tensor]) -> Self {
        GradAccum {
            theta: thetas.iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect(),
            other: other.iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect(),
        }
    }

    fn add_theta(&mut self, i: usize, g: &Tensor) -> Result<(), TrainError> {
        self.theta[i] = self.theta[i].add(g)?;
        Ok(())
    }

    fn add_other(&mut self, i: usize, g: &Tensor) -> Result<(), TrainError> {
        self.other[i] = self.other[i].add(g)?;
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn joint_phase(
    domains: &DomainSequence,
    spec: &MlpSpec,
    config: &KoodosConfig,
    thetas: &mut Vec<Tensor>,
    autoencoder: &mut Autoencoder,
    operator: &mut KoopmanOperator,
    mut dynamics: Option<&mut DynamicsNet>,
    history: &mut Vec<EpochRecord>,
) -> Result<(), TrainError> {
    let t_count = thetas.len();
    let pairs = config.pair_schedule.pairs(t_count);
    let groups = group_by_target(&pairs);
    let flags = config.ablation;

    // the non-predictive parameter group: either the Koopman pipeline or
    // the direct dynamics net
    let mut other: Vec<Tensor> = Vec::new();
    if flags.no_koopman {
        let net = dynamics.as_ref().expect("no_koopman initializes the net");
        for (w, b) in &net.layers {
            other.push(w.clone());
            other.push(b.clone());
        }
    } else {
        for (w, b) in autoencoder.encoder.iter().chain(&autoencoder.decoder) {
            other.push(w.clone());
            other.push(b.clone());
        }
        other.extend(operator.mats.iter().cloned());
    }

    let mut theta_adam =
        AdamState::for_params(thetas, AdamParams::with_lr(config.lr_joint_predictive))?;
    let mut other_adam = AdamState::for_params(&other, AdamParams::with_lr(config.lr_joint_other))?;

    for epoch in 1..=config.joint_epochs {
        let timing = std::env::var("KOODOS_TIMING").is_ok();
        let t0 = std::time::Instant::now();
        let mut accum = GradAccum::new(thetas, &other);
        let mut values = LossValues::default();

        // stage A: intrinsic prediction losses, one small graph per domain,
        // fanned out over threads; the reduction stays in domain order
        let stage_a: Vec<(f64, Option<Tensor>)> = (0..t_count)
            .into_par_iter()
            .map(|i| -> Result<(f64, Option<Tensor>), TrainError> {
                let domain = &domains.domains[i];
                let mut g = Graph::new();
                let th = g.param(thetas[i].clone());
                let x = g.input(domain.x.clone());
                let y = g.input(domain.y.clone());
                let pred = predict_node(&mut g, th, spec, x)?;
                let raw = task_loss_node(&mut g, domain.task, pred, y)?;
                let value = g.value(raw).scalar_value();
                let grad = if config.alpha > 0.0 {
                    let scaled = g.scale(raw, config.alpha)?;
                    let mut grads = g.backward(scaled)?;
                    Some(grads.take(th)?)
                } else {
                    None
                };
                Ok((value, grad))
            })
            .collect::<Result<_, _>>()?;
        for (i, (value, grad)) in stage_a.into_iter().enumerate() {
            values.intri += value;
            if let Some(g) = grad {
                accum.add_theta(i, &g)?;
            }
        }

        let t_a = t0.elapsed();
        // stage B + C: the coupled dynamics losses
        let need_core = !(flags.no_recon && flags.no_dyna && flags.no_consis && flags.no_integ);
        if need_core {
            if flags.no_koopman {
                direct_epoch(
                    domains, spec, config, thetas, &other, &pairs, &groups, &mut accum,
                    &mut values,
                )?;
            } else {
                koopman_epoch(
                    domains, spec, config, thetas, &other, &pairs, &groups, &mut accum,
                    &mut values,
                )?;
            }
        }

        let combined = config.alpha * (values.intri + values.integ)
            + config.beta * (values.recon + values.consis)
            + config.gamma * values.dyna;
        history.push(EpochRecord {
            epoch,
            intri: values.intri,
            integ: values.integ,
            recon: values.recon,
            dyna: values.dyna,
            consis: values.consis,
            combined,
        });

        let t_bc = t0.elapsed();
        theta_adam.step(thetas, &accum.theta)?;
        other_adam.step(&mut other, &accum.other)?;
        if timing {
            eprintln!("epoch {epoch}: stageA {:?} stageBC {:?} adam {:?}", t_a, t_bc - t_a, t0.elapsed() - t_bc);
        }

        if config.early_stopping && history.len() > config.plateau_window {
            let prev = history[history.len() - 1 - config.plateau_window].combined;
            let rel = (prev - combined) / prev.abs().max(1e-300);
            if rel < config.plateau_rel_improvement {
                break;
            }
        }
    }

    // write the trained group back into the owning structs
    if flags.no_koopman {
        let net = dynamics.as_mut().expect("no_koopman initializes the net");
        let mut it = other.into_iter();
        for (w, b) in net.layers.iter_mut() {
            *w = it.next().expect("layer weight");
            *b = it.next().expect("layer bias");
        }
    } else {
        let mut it = other.into_iter();
        for (w, b) in autoencoder
            .encoder
            .iter_mut()
            .chain(autoencoder.decoder.iter_mut())
        {
            *w = it.next().expect("layer weight");
            *b = it.next().expect("layer bias");
        }
        for m in operator.mats.iter_mut() {
            *m = it.next().expect("operator matrix");
        }
    }
    Ok(())
}

/// One epoch of the Koopman-space objective (stages B and C).
#[allow(clippy::too_many_arguments)]
fn koopman_epoch(
    domains: &DomainSequence,
    spec: &MlpSpec,
    config: &KoodosConfig,
    thetas: &[Tensor],
    other: &[Tensor],
    pairs: &[(usize, usize)],
    groups: &[(usize, std::ops::Range<usize>)],
    accum: &mut GradAccum,
    values: &mut LossValues,
) -> Result<(), TrainError> {
    let flags = config.ablation;
    let t_count = thetas.len();
    let p_dim = spec.param_count();
    let enc_layers = config.autoencoder_widths.len();

    let timing = std::env::var("KOODOS_TIMING").is_ok();
    let t0 = std::time::Instant::now();
    let mut g = Graph::new();
    let theta_ids: Vec<NodeId> = thetas.iter().map(|t| g.param(t.clone())).collect();
    let mut other_ids: Vec<NodeId> = Vec::with_capacity(other.len());
    for t in other {
        other_ids.push(g.param(t.clone()));
    }
    let ae_nodes = AutoencoderNodes {
        encoder: (0..enc_layers)
            .map(|l| (other_ids[2 * l], other_ids[2 * l + 1]))
            .collect(),
        decoder: (0..enc_layers)
            .map(|l| (other_ids[2 * enc_layers + 2 * l], other_ids[2 * enc_layers + 2 * l + 1]))
            .collect(),
    };
    let op_ids: Vec<NodeId> = other_ids[4 * enc_layers..].to_vec();

    let stack = g.concat_rows(&theta_ids)?;
    let z = encode_node(&mut g, &ae_nodes, stack)?;
    let k_node = operator_node(&mut g, &config.operator, &op_ids)?;

    let need_flows = !(flags.no_dyna && flags.no_consis && flags.no_integ) && !pairs.is_empty();
    let mut flow_ids: Vec<NodeId> = Vec::new();
    if need_flows {
        for &(j, i) in pairs {
            let zj = g.slice_rows(z, j, 1)?;
            flow_ids.push(latent_flow_node(
                &mut g,
                k_node,
                &op_ids,
                zj,
                domains.domains[j].t,
                domains.domains[i].t,
                &config.integration,
            )?);
        }
    }

    let mut core_terms: Vec<(NodeId, f64)> = Vec::new();

    if !flags.no_dyna && need_flows {
        for (target, range) in groups {
            let rows = g.concat_rows(&flow_ids[range.clone()])?;
            let zi = g.slice_rows(z, *target, 1)?;
            let diff = g.sub(rows, zi)?;
            let norm = g.rows_l2_norm_sum(diff);
            values.dyna += g.value(norm).scalar_value();
            core_terms.push((norm, config.gamma));
        }
    }

    // decode: pair rows first, then the reconstruction rows
    let decode_pairs = need_flows && !(flags.no_consis && flags.no_integ);
    let decode_recon = !flags.no_recon;
    let mut d_node: Option<NodeId> = None;
    let pair_rows = if decode_pairs { pairs.len() } else { 0 };
    if decode_pairs || decode_recon {
        let mut parts: Vec<NodeId> = Vec::new();
        if decode_pairs {
            parts.push(g.concat_rows(&flow_ids)?);
        }
        if decode_recon {
            parts.push(z);
        }
        let dec_in = if parts.len() == 1 {
            parts[0]
        } else {
            g.concat_rows(&parts)?
        };
        d_node = Some(decode_node(&mut g, &ae_nodes, dec_in)?);
    }

    if !flags.no_consis && decode_pairs {
        let d = d_node.expect("decode built for consis");
        for (target, range) in groups {
            let rows = g.slice_rows(d, range.start, range.len())?;
            let diff = g.sub(rows, theta_ids[*target])?;
            let norm = g.rows_l2_norm_sum(diff);
            values.consis += g.value(norm).scalar_value();
            core_terms.push((norm, config.beta));
        }
    }

    if decode_recon {
        let d = d_node.expect("decode built for recon");
        let rec = g.slice_rows(d, pair_rows, t_count)?;
        let diff = g.sub(rec, stack)?;
        let norm = g.rows_l2_norm_sum(diff);
        values.recon += g.value(norm).scalar_value();
        core_terms.push((norm, config.beta));
    }

    let core_loss = weighted_sum(&mut g, &core_terms)?;
    let t_fwd = t0.elapsed();

    // stage C: per-pair prediction graphs seeding adjoints into the decode
    let mut seed: Option<Tensor> = None;
    if !flags.no_integ && decode_pairs {
        let d = d_node.expect("decode built for integ");
        let d_rows = g.shape(d).0;
        let pair_thetas: Vec<Tensor> =
            (0..pairs.len()).map(|r| g.value(d).extract_row(r)).collect();
        let stage_c = pair_prediction_stage(domains, spec, config, pairs, &pair_thetas)?;
        values.integ += stage_c.0;
        if config.alpha > 0.0 {
            let mut seed_buf = vec![0.0; d_rows * p_dim];
            for (r, row) in stage_c.1.into_iter().enumerate() {
                if let Some(row) = row {
                    seed_buf[r * p_dim..(r + 1) * p_dim].copy_from_slice(row.data());
                }
            }
            seed = Some(Tensor::new(d_rows, p_dim, seed_buf)?);
        }
    }

    let t_stagec = t0.elapsed();
    // stage B backward with the injected adjoints
    if core_loss.is_some() || seed.is_some() {
        let seed_list: Vec<(NodeId, &Tensor)> = match (&seed, d_node) {
            (Some(s), Some(d)) => vec![(d, s)],
            _ => vec![],
        };
        let grads = g.backward_seeded(core_loss, &seed_list)?;
        for (i, id) in theta_ids.iter().enumerate() {
            accum.add_theta(i, grads.get(*id)?)?;
        }
        for (i, id) in other_ids.iter().enumerate() {
            accum.add_other(i, grads.get(*id)?)?;
        }
        drop(grads);
    }
    if timing {
        eprintln!(
            "  koopman: fwd {:?} stageC {:?} backward {:?}",
            t_fwd,
            t_stagec - t_fwd,
            t0.elapsed() - t_stagec
        );
    }
    Ok(())
}

/// One epoch of the direct parameter-dynamics objective (Koopman space
/// bypassed): pairwise theta flows under the learned field plus their
/// prediction losses.
#[allow(clippy::too_many_arguments)]
fn direct_epoch(
    domains: &DomainSequence,
    spec: &MlpSpec,
    config: &KoodosConfig,
    thetas: &[Tensor],
    other: &[Tensor],
    pairs: &[(usize, usize)],
    groups: &[(usize, std::ops::Range<usize>)],
    accum: &mut GradAccum,
    values: &mut LossValues,
) -> Result<(), TrainError> {
    if pairs.is_empty() {
        return Ok(());
    }
    let flags = config.ablation;
    let p_dim = spec.param_count();
    let rk_cfg = IntegrationConfig {
        method: IntegrationMethod::Rk4,
        ..config.integration
    };

    let mut g = Graph::new();
    let theta_ids: Vec<NodeId> = thetas.iter().map(|t| g.param(t.clone())).collect();
    let mut other_ids: Vec<NodeId> = Vec::with_capacity(other.len());
    for t in other {
        other_ids.push(g.param(t.clone()));
    }
    let dyn_nodes = DynamicsNodes {
        layers: other_ids.chunks(2).map(|c| (c[0], c[1])).collect(),
    };

    let mut flow_ids: Vec<NodeId> = Vec::with_capacity(pairs.len());
    for &(j, i) in pairs {
        let flow = integrate_field_node(
            &mut g,
            |g, th, t| {
                direct_dynamics_node(g, (p_dim, 0), &dyn_nodes, th, t)
                    .map_err(|e| crate::diffcore::DiffError::invalid("dynamics field", e.to_string()))
            },
            theta_ids[j],
            domains.domains[j].t,
            domains.domains[i].t,
            &rk_cfg,
        )?;
        flow_ids.push(flow);
    }

    let mut core_terms: Vec<(NodeId, f64)> = Vec::new();
    if !flags.no_consis {
        for (target, range) in groups {
            let rows = g.concat_rows(&flow_ids[range.clone()])?;
            let diff = g.sub(rows, theta_ids[*target])?;
            let norm = g.rows_l2_norm_sum(diff);
            values.consis += g.value(norm).scalar_value();
            core_terms.push((norm, config.beta));
        }
    }
    let core_loss = weighted_sum(&mut g, &core_terms)?;

    let mut seed: Option<Tensor> = None;
    let mut flow_stack: Option<NodeId> = None;
    if !flags.no_integ {
        let stack = g.concat_rows(&flow_ids)?;
        flow_stack = Some(stack);
        let pair_thetas: Vec<Tensor> =
            (0..pairs.len()).map(|r| g.value(stack).extract_row(r)).collect();
        let stage_c = pair_prediction_stage(domains, spec, config, pairs, &pair_thetas)?;
        values.integ += stage_c.0;
        if config.alpha > 0.0 {
            let mut seed_buf = vec![0.0; pairs.len() * p_dim];
            for (r, row) in stage_c.1.into_iter().enumerate() {
                if let Some(row) = row {
                    seed_buf[r * p_dim..(r + 1) * p_dim].copy_from_slice(row.data());
                }
            }
            seed = Some(Tensor::new(pairs.len(), p_dim, seed_buf)?);
        }
    }

    if core_loss.is_some() || seed.is_some() {
        let seed_list: Vec<(NodeId, &Tensor)> = match (&seed, flow_stack) {
            (Some(s), Some(d)) => vec![(d, s)],
            _ => vec![],
        };
        let grads = g.backward_seeded(core_loss, &seed_list)?;
        for (i, id) in theta_ids.iter().enumerate() {
            accum.add_theta(i, grads.get(*id)?)?;
        }
        for (i, id) in other_ids.iter().enumerate() {
            accum.add_other(i, grads.get(*id)?)?;
        }
        drop(grads);
    }
    Ok(())
}


/// Per-pair prediction losses and their parameter-row adjoints, computed
/// in parallel; results keep pair order so reductions are deterministic.
fn pair_prediction_stage(
    domains: &DomainSequence,
    spec: &MlpSpec,
    config: &KoodosConfig,
    pairs: &[(usize, usize)],
    pair_thetas: &[Tensor],
) -> Result<(f64, Vec<Option<Tensor>>), TrainError> {
    let results: Vec<(f64, Option<Tensor>)> = pairs
        .par_iter()
        .enumerate()
        .map(|(r, &(_, i))| -> Result<(f64, Option<Tensor>), TrainError> {
            let domain = &domains.domains[i];
            let mut g2 = Graph::new();
            let th = g2.param(pair_thetas[r].clone());
            let x = g2.input(domain.x.clone());
            let y = g2.input(domain.y.clone());
            let pred = predict_node(&mut g2, th, spec, x)?;
            let raw = task_loss_node(&mut g2, domain.task, pred, y)?;
            let value = g2.value(raw).scalar_value();
            let grad = if config.alpha > 0.0 {
                let scaled = g2.scale(raw, config.alpha)?;
                let mut grads = g2.backward(scaled)?;
                Some(grads.take(th)?)
            } else {
                None
            };
            Ok((value, grad))
        })
        .collect::<Result<_, _>>()?;
    let mut total = 0.0;
    let mut rows = Vec::with_capacity(results.len());
    for (v, g) in results {
        total += v;
        rows.push(g);
    }
    Ok((total, rows))
}

/// Weighted sum of scalar nodes, or None when the list is empty.
fn weighted_sum(g: &mut Graph, terms: &[(NodeId, f64)]) -> Result<Option<NodeId>, TrainError> {
    let mut acc: Option<NodeId> = None;
    for (node, weight) in terms {
        let scaled = g.scale(*node, *weight)?;
        acc = Some(match acc {
            None => scaled,
            Some(a) => g.add(a, scaled)?,
        });
    }
    Ok(acc)
}

/// The latent state at a queried time together with its anchor.
#[derive(Clone, Debug)]
pub struct LatentQuery {
    pub anchor_index: usize,
    pub anchor: KoopmanState,
    pub state: KoopmanState,
}

impl KoodosSystem {
    /// Index of the observation used as the initial value for time `s`.
    pub fn anchor_index(&self, s: f64) -> usize {
        match self.config.anchor {
            super::AnchorMode::LatestPrior => self
                .timestamps
                .iter()
                .rposition(|t| *t <= s)
                .unwrap_or(0),
            super::AnchorMode::AbsoluteNearest => {
                let mut best = 0;
                for (i, t) in self.timestamps.iter().enumerate() {
                    if (t - s).abs() < (self.timestamps[best] - s).abs() {
                        best = i;
                    }
                }
                best
            }
        }
    }

    /// The generalized model parameters at any real time `s`: flow the
    /// anchor's latent state to `s` and decode.
    pub fn generalize(&self, s: f64) -> Result<FlatParams, TrainError> {
        self.validate()?;
        if !s.is_finite() {
            return Err(TrainError::Invalid(format!("non-finite query time {s}")));
        }
        if self.domain_count() == 1 {
            return Ok(self.thetas[0].clone());
        }
        let a = self.anchor_index(s);
        let t_a = self.timestamps[a];
        if let Some(net) = &self.dynamics {
            // direct parameter dynamics
            let rk_cfg = IntegrationConfig {
                method: IntegrationMethod::Rk4,
                ..self.config.integration
            };
            let theta = integrate_field(
                |th, t| {
                    direct_dynamics(net, th, t)
                        .map_err(|e| crate::diffcore::DiffError::invalid("dynamics field", e.to_string()))
                },
                self.thetas[a].theta(),
                t_a,
                s,
                &rk_cfg,
            )?;
            return self.thetas[a].with_theta(theta).map_err(Into::into);
        }
        let q = self.latent_at(s)?;
        let row = self.autoencoder.decode_batch(q.state.tensor())?;
        self.thetas[a].with_theta(row).map_err(Into::into)
    }

    /// Latent state at time `s` plus the anchor it was flowed from.
    /// Only defined when the Koopman pipeline is in use.
    pub fn latent_at(&self, s: f64) -> Result<LatentQuery, TrainError> {
        if self.dynamics.is_some() {
            return Err(TrainError::Invalid(
                "the direct-dynamics system has no latent space".into(),
            ));
        }
        let a = self.anchor_index(s);
        let t_a = self.timestamps[a];
        let anchor = self.autoencoder.encode(&self.thetas[a])?;
        let state = if self.operator.is_linear() {
            let k = self.operator.materialize()?;
            integrate_linear(&k, anchor.tensor(), t_a, s, &self.config.integration)?
        } else {
            let rk_cfg = IntegrationConfig {
                method: IntegrationMethod::Rk4,
                ..self.config.integration
            };
            integrate_field(
                |z, _t| {
                    self.operator
                        .latent_field(z)
                        .map_err(|e| crate::diffcore::DiffError::invalid("latent field", e.to_string()))
                },
                anchor.tensor(),
                t_a,
                s,
                &rk_cfg,
            )?
        };
        Ok(LatentQuery {
            anchor_index: a,
            anchor,
            state: KoopmanState::new(state)?,
        })
    }

    /// Score the generalized model on every test domain.
    pub fn evaluate(&self, test: &DomainSequence, metric: Metric) -> Result<EvalReport, TrainError> {
        if test.is_empty() {
            return Err(TrainError::Invalid("no test domains".into()));
        }
        let per_domain: Vec<(f64, f64)> = test
            .domains
            .par_iter()
            .map(|d| -> Result<(f64, f64), TrainError> {
                let params = self.generalize(d.t)?;
                let preds = predict(&params, &d.x)?;
                Ok((d.t, metric.score(&preds, &d.y)?))
            })
            .collect::<Result<_, _>>()?;
        let aggregate = per_domain.iter().map(|(_, s)| s).sum::<f64>() / per_domain.len() as f64;
        Ok(EvalReport {
            metric,
            per_domain,
            aggregate,
        })
    }

    /// Default metric for the system's task.
    pub fn default_metric(&self) -> Metric {
        match self.spec.task {
            TaskKind::BinaryClassification => Metric::ErrorRate,
            TaskKind::Regression => Metric::Mae,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::super::losses::{eval_losses, LossSelect, Pieces};
    use super::super::{AblationFlags, PairSchedule};
    use crate::domains::generate_moons_domain;

    fn tiny_spec() -> MlpSpec {
        MlpSpec::new(2, vec![8], 1, TaskKind::BinaryClassification).unwrap()
    }

    fn tiny_config() -> KoodosConfig {
        KoodosConfig {
            autoencoder_widths: vec![16, 4],
            warm_epochs: 40,
            joint_epochs: 30,
            early_stopping: false,
            ..KoodosConfig::default()
        }
    }

    fn tiny_moons_sequence(count: usize, seed: u64) -> DomainSequence {
        let domains: Vec<Domain> = (0..count)
            .map(|i| {
                generate_moons_domain(i as f64 * 1.3, 20, 0.1, 18.0, derive_seed(seed, i as u64))
                    .unwrap()
            })
            .collect();
        DomainSequence::new("tiny-moons", domains).unwrap()
    }

    #[test]
    fn erm_fits_linearly_separable_data() {
        // vertical split at x = 0: separable, so loss < 0.1 in 200 epochs
        let n = 30;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let v = (i as f64 + 1.0) / n as f64;
            x.extend_from_slice(&[v, 0.3]);
            y.push(1.0);
            x.extend_from_slice(&[-v, -0.1]);
            y.push(0.0);
        }
        let domain = Domain::new(
            0.0,
            Tensor::new(2 * n, 2, x).unwrap(),
            Tensor::new(2 * n, 1, y).unwrap(),
            TaskKind::BinaryClassification,
        )
        .unwrap();
        let spec = tiny_spec();
        let params = erm_pretrain(&domain, &spec, 200, 1e-2, 3).unwrap();
        let mut g = Graph::new();
        let th = g.input(params.theta().clone());
        let x = g.input(domain.x.clone());
        let y = g.input(domain.y.clone());
        let pred = predict_node(&mut g, th, &spec, x).unwrap();
        let loss = task_loss_node(&mut g, domain.task, pred, y).unwrap();
        assert!(
            g.value(loss).scalar_value() < 0.1,
            "loss {}",
            g.value(loss).scalar_value()
        );
    }

    #[test]
    fn erm_zero_epochs_rejected_and_seed_deterministic() {
        let domain = generate_moons_domain(0.0, 10, 0.1, 18.0, 1).unwrap();
        let spec = tiny_spec();
        assert!(erm_pretrain(&domain, &spec, 0, 1e-2, 1).is_err());
        let a = erm_pretrain(&domain, &spec, 20, 1e-2, 7).unwrap();
        let b = erm_pretrain(&domain, &spec, 20, 1e-2, 7).unwrap();
        assert_eq!(a.theta(), b.theta());
    }

    #[test]
    fn staged_epoch_terms_match_monolithic_evaluation() {
        // the trainer's first-epoch loss record must equal the one-graph
        // evaluation of the same terms on the warm-started parameters
        let seq = tiny_moons_sequence(4, 11);
        let spec = tiny_spec();
        let config = KoodosConfig {
            joint_epochs: 1,
            ae_warm_epochs: 0,
            operator_warm_epochs: 0,
            ..tiny_config()
        };
        let sys = train_joint(&seq, &spec, &config).unwrap();
        let rec = sys.history[0];

        // rebuild the warm-start parameters the same way
        let mut thetas: Vec<Tensor> = Vec::new();
        let mut prev: Option<FlatParams> = None;
        for domain in &seq.domains {
            let fp = match &prev {
                None => erm_pretrain(
                    domain,
                    &spec,
                    config.warm_epochs,
                    config.lr_predictive,
                    derive_seed(config.seed, 1),
                )
                .unwrap(),
                Some(p) => erm_refine(p, domain, config.warm_epochs, config.lr_predictive).unwrap(),
            };
            thetas.push(fp.theta().clone());
            prev = Some(fp);
        }
        let ae = Autoencoder::init(
            AutoencoderSpec::new(spec.param_count(), config.autoencoder_widths.clone()).unwrap(),
            derive_seed(config.seed, 2),
        );
        let op = KoopmanOperator::init(
            config.operator.clone(),
            ae.latent_dim(),
            derive_seed(config.seed, 3),
        )
        .unwrap();
        let pieces = Pieces {
            spec: &spec,
            timestamps: &seq.timestamps(),
            thetas: &thetas,
            enc: &ae.encoder,
            dec: &ae.decoder,
            op_kind: &op.kind,
            op_mats: &op.mats,
            integration: config.integration,
        };
        let pairs = config.pair_schedule.pairs(seq.len());
        let values = eval_losses(
            &pieces,
            Some(&seq.domains),
            &pairs,
            LossSelect {
                intri: true,
                integ: true,
                recon: true,
                dyna: true,
                consis: true,
            },
        )
        .unwrap();

        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
        assert!(close(rec.intri, values.intri), "{} vs {}", rec.intri, values.intri);
        assert!(close(rec.integ, values.integ), "{} vs {}", rec.integ, values.integ);
        assert!(close(rec.recon, values.recon), "{} vs {}", rec.recon, values.recon);
        assert!(close(rec.dyna, values.dyna), "{} vs {}", rec.dyna, values.dyna);
        assert!(close(rec.consis, values.consis), "{} vs {}", rec.consis, values.consis);
    }

    #[test]
    fn joint_training_reduces_combined_loss() {
        let seq = tiny_moons_sequence(4, 21);
        let sys = train_joint(&seq, &tiny_spec(), &tiny_config()).unwrap();
        let first = sys.history.first().unwrap().combined;
        let last = sys.history.last().unwrap().combined;
        assert!(last < first, "combined loss went {first} -> {last}");
    }

    #[test]
    fn train_joint_is_deterministic() {
        let seq = tiny_moons_sequence(3, 31);
        let spec = tiny_spec();
        let config = KoodosConfig {
            joint_epochs: 5,
            ..tiny_config()
        };
        let a = train_joint(&seq, &spec, &config).unwrap();
        let b = train_joint(&seq, &spec, &config).unwrap();
        for (ta, tb) in a.thetas.iter().zip(&b.thetas) {
            assert_eq!(ta.theta(), tb.theta());
        }
        assert_eq!(a.operator.mats, b.operator.mats);
        assert_eq!(a.autoencoder.encoder, b.autoencoder.encoder);
        for (ra, rb) in a.history.iter().zip(&b.history) {
            assert_eq!(ra.combined, rb.combined);
        }
    }

    #[test]
    fn single_domain_degenerates_to_erm() {
        let seq = tiny_moons_sequence(1, 41);
        let spec = tiny_spec();
        let config = tiny_config();
        let sys = train_joint(&seq, &spec, &config).unwrap();
        assert!(sys.history.is_empty());
        let erm = erm_pretrain(
            &seq.domains[0],
            &spec,
            config.warm_epochs,
            config.lr_predictive,
            derive_seed(config.seed, 1),
        )
        .unwrap();
        assert_eq!(sys.thetas[0].theta(), erm.theta());
        // generalize anywhere returns the single model
        assert_eq!(sys.generalize(99.0).unwrap().theta(), erm.theta());
    }

    #[test]
    fn non_monotone_timestamps_rejected_at_sequence_construction() {
        let d0 = generate_moons_domain(1.0, 5, 0.1, 18.0, 0).unwrap();
        let d1 = generate_moons_domain(0.5, 5, 0.1, 18.0, 1).unwrap();
        assert!(DomainSequence::new("bad", vec![d0, d1]).is_err());
    }

    #[test]
    fn anchor_rule_latest_prior() {
        let seq = tiny_moons_sequence(5, 51);
        let config = KoodosConfig {
            joint_epochs: 2,
            warm_epochs: 5,
            ..tiny_config()
        };
        let sys = train_joint(&seq, &tiny_spec(), &config).unwrap();
        // timestamps are multiples of 1.3
        assert_eq!(sys.anchor_index(3.0), 2);
        assert_eq!(sys.anchor_index(sys.timestamps[3]), 3);
        assert_eq!(sys.anchor_index(4.0), 3);
        assert_eq!(sys.anchor_index(100.0), 4);
        assert_eq!(sys.anchor_index(-5.0), 0);
    }

    #[test]
    fn generalize_at_observation_is_reencoded_theta() {
        let seq = tiny_moons_sequence(3, 61);
        let config = KoodosConfig {
            joint_epochs: 3,
            warm_epochs: 10,
            ..tiny_config()
        };
        let sys = train_joint(&seq, &tiny_spec(), &config).unwrap();
        let t_last = *sys.timestamps.last().unwrap();
        let got = sys.generalize(t_last).unwrap();
        let re = sys
            .autoencoder
            .decode_batch(sys.autoencoder.encode(&sys.thetas[2]).unwrap().tensor())
            .unwrap();
        for (a, b) in got.theta().data().iter().zip(re.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn generalize_is_continuous_between_anchors() {
        let seq = tiny_moons_sequence(3, 71);
        let config = KoodosConfig {
            joint_epochs: 5,
            warm_epochs: 10,
            ..tiny_config()
        };
        let sys = train_joint(&seq, &tiny_spec(), &config).unwrap();
        let s = 1.9; // strictly inside (1.3, 2.6)
        let eps = 1e-6;
        let a = sys.generalize(s).unwrap();
        let b = sys.generalize(s + eps).unwrap();
        let delta: f64 = a
            .theta()
            .data()
            .iter()
            .zip(b.theta().data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let norm = a.theta().frobenius_norm();
        assert!(delta < 1e-4 * norm, "delta {delta} vs norm {norm}");
    }

    #[test]
    fn baselines_coincide_on_single_domain() {
        let seq = tiny_moons_sequence(1, 81);
        let spec = tiny_spec();
        let a = baseline_offline(&seq, &spec, 20, 1e-2, 5).unwrap();
        let b = baseline_lastdomain(&seq, &spec, 20, 1e-2, 5).unwrap();
        assert_eq!(a.theta(), b.theta());
    }

    #[test]
    fn ablation_flags_zero_their_terms() {
        let seq = tiny_moons_sequence(3, 91);
        let config = KoodosConfig {
            joint_epochs: 2,
            warm_epochs: 5,
            ablation: AblationFlags {
                no_dyna: true,
                no_recon: true,
                ..AblationFlags::default()
            },
            ..tiny_config()
        };
        let sys = train_joint(&seq, &tiny_spec(), &config).unwrap();
        for rec in &sys.history {
            assert_eq!(rec.dyna, 0.0);
            assert_eq!(rec.recon, 0.0);
            assert!(rec.consis > 0.0);
        }
    }

    #[test]
    fn no_koopman_mode_trains_and_generalizes() {
        let seq = tiny_moons_sequence(3, 101);
        let config = KoodosConfig {
            joint_epochs: 3,
            warm_epochs: 5,
            ablation: AblationFlags {
                no_koopman: true,
                ..AblationFlags::default()
            },
            ..tiny_config()
        };
        let sys = train_joint(&seq, &tiny_spec(), &config).unwrap();
        assert!(sys.dynamics.is_some());
        for rec in &sys.history {
            assert_eq!(rec.dyna, 0.0);
            assert_eq!(rec.recon, 0.0);
        }
        let p = sys.generalize(4.0).unwrap();
        assert_eq!(p.len(), tiny_spec().param_count());
        assert!(sys.latent_at(1.0).is_err());
    }

    #[test]
    fn window_and_chain_schedules_train() {
        let seq = tiny_moons_sequence(4, 111);
        for schedule in [PairSchedule::Window(2), PairSchedule::Chain] {
            let config = KoodosConfig {
                joint_epochs: 2,
                warm_epochs: 5,
                pair_schedule: schedule,
                ..tiny_config()
            };
            let sys = train_joint(&seq, &tiny_spec(), &config).unwrap();
            assert_eq!(sys.history.len(), 2);
        }
    }

    #[test]
    fn evaluate_reports_per_domain_scores() {
        let seq = tiny_moons_sequence(4, 121);
        let (train, test) = crate::domains::split_train_test(&seq, 0.5).unwrap();
        let config = KoodosConfig {
            joint_epochs: 3,
            warm_epochs: 10,
            ..tiny_config()
        };
        let sys = train_joint(&train, &tiny_spec(), &config).unwrap();
        let report = sys.evaluate(&test, Metric::ErrorRate).unwrap();
        assert_eq!(report.per_domain.len(), 2);
        for (_, score) in &report.per_domain {
            assert!((0.0..=100.0).contains(score));
        }
    }
}

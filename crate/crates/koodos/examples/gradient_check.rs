//! Check reverse-mode gradients against central finite differences,
//! including gradients through the matrix-exponential flow.
//!
//! Run with: cargo run --release --example gradient_check

use koodos::diffcore::{GradCheck, Graph, NodeId, Tensor};
use koodos::odeflow::{integrate_linear_node, IntegrationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // a small MLP with BCE loss
    let x = Tensor::new(4, 2, vec![0.3, -1.0, 1.2, 0.4, -0.8, 0.9, 0.1, -0.2])?;
    let y = Tensor::new(4, 1, vec![1.0, 0.0, 1.0, 0.0])?;
    let w1 = Tensor::new(2, 5, (0..10).map(|i| 0.17 * (i as f64) - 0.7).collect())?;
    let b1 = Tensor::zeros(1, 5);
    let w2 = Tensor::new(5, 1, vec![0.4, -0.3, 0.2, 0.1, -0.5])?;
    let params = [w1, b1, w2];
    let mut build = |g: &mut Graph, ids: &[NodeId]| {
        let xi = g.input(x.clone());
        let yi = g.input(y.clone());
        let h = g.matmul(xi, ids[0])?;
        let h = g.add(h, ids[1])?;
        let h = g.tanh(h);
        let out = g.matmul(h, ids[2])?;
        let p = g.sigmoid(out);
        g.binary_cross_entropy_loss(p, yi)
    };
    let report = GradCheck::default().run(&mut build, &params)?;
    println!(
        "mlp+bce: {} coordinates, max relative error {:.3e}",
        report.coords_checked, report.max_rel_error
    );

    // gradients through exp(K dt) z0
    let k = Tensor::new(3, 3, vec![0.1, -0.4, 0.2, 0.5, 0.0, -0.3, -0.1, 0.2, 0.05])?;
    let z0 = Tensor::row(vec![0.7, -0.2, 0.4])?;
    let params = [k, z0];
    let mut build = |g: &mut Graph, ids: &[NodeId]| {
        let z1 = integrate_linear_node(g, ids[0], ids[1], 0.0, 2.5, &IntegrationConfig::default())?;
        Ok(g.rows_l2_norm_sum(z1))
    };
    let report = GradCheck::default().run(&mut build, &params)?;
    println!(
        "matrix-exponential flow: {} coordinates, max relative error {:.3e}",
        report.coords_checked, report.max_rel_error
    );
    assert!(report.passes(1e-4));
    println!("all gradients match finite differences within 1e-4");
    Ok(())
}

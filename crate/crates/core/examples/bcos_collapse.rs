//! A B-cos network is linear for any fixed input: collapsing its layers
//! gives one vector `θ(x)` with `θ(x)·x` equal to the logit, exactly.
//!
//!     cargo run --release --example bcos_collapse

use bcos_novelty::bcos::{bcos_unit, effective_weight, BcosNetwork};
use bcos_novelty::numerics::{cosine, dot, Rng};
use bcos_novelty::scoring::ens;

fn main() -> bcos_novelty::Result<()> {
    let mut rng = Rng::new(2024);

    // One unit: |cos(x, w)|^(B-1) rescales w, nothing else.
    let w = [0.6, -0.2, 0.9];
    let x = [1.0, 0.5, -0.3];
    let eff = effective_weight(&x, &w, 1.5)?;
    println!("unit output      {:.12}", bcos_unit(&x, &w, 1.5)?);
    println!("w_eff . x        {:.12}", dot(&eff, &x)?);

    let net = BcosNetwork::init(&[6, 8, 5, 2], 1.5, &mut rng)?;
    let x: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
    let logits = net.logits(&x)?;
    println!("\nnetwork dims     {:?}", net.dims());
    for (node, logit) in logits.iter().enumerate() {
        let theta = net.explain(&x, 0, node)?;
        println!(
            "node {node}: logit {logit:+.12}  theta.x {:+.12}  cos {:+.4}",
            dot(&theta, &x)?,
            cosine(&theta, &x)?
        );
    }

    // Explanations ignore input scale; logits scale with it.
    let x3: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
    println!(
        "\nlogit(3x) / logit(x) = {:.12}",
        net.logits(&x3)?[0] / logits[0]
    );
    println!("ENS(x)  = {:.12}", ens(&net, &x, 0, 0)?);
    println!("ENS(3x) = {:.12}", ens(&net, &x3, 0, 0)?);

    // Starting from a hidden layer explains that layer's input instead.
    let (_, trace) = net.forward(&x)?;
    let theta1 = net.explain(&x, 1, 0)?;
    println!(
        "\nfrom layer 1: theta.h = {:+.12} (logit {:+.12})",
        dot(&theta1, &trace.inputs[1])?,
        logits[0]
    );
    Ok(())
}

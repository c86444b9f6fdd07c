//! Builds each network preset, counts its parameters and runs a forward pass
//! through the small ones.
//!
//! ```sh
//! cargo run --release --example network_shapes
//! ```

use ndarray::Array2;
use wavediff::data::pad_to_admissible;
use wavediff::network::{DagConfig, DagNetwork, Label, ScoreModel};
use wavediff::nn::Module;

fn main() -> wavediff::Result<()> {
    for name in ["dag48", "dag22", "toy", "miniature"] {
        let cfg = DagConfig::by_preset(name, 10)?;
        let one_second = pad_to_admissible(cfg.sample_rate as usize, cfg.stride_product());
        let net = DagNetwork::new(cfg.clone(), 0)?;
        let params: usize = net
            .named_params()
            .iter()
            .filter(|(_, p)| p.is_trainable())
            .map(|(_, p)| p.len())
            .sum();
        println!(
            "{name:9} {} Hz, strides {:?}, widths {:?}: {params} parameters, \
             1 s = {one_second} samples -> latent length {}",
            cfg.sample_rate,
            cfg.stride_factors,
            cfg.channel_widths,
            cfg.latent_len(one_second)?
        );
    }

    let net = DagNetwork::new(DagConfig::toy(2), 0)?;
    let x = Array2::from_shape_fn((2, 1024), |(r, n)| {
        0.5 * ((n as f64) * 0.3 + r as f64).sin()
    });
    let score = net.score(&x, &[Label::Class(0), Label::Null], &[0.1, 0.1])?;
    println!(
        "\ntoy forward pass: input {:?} -> score {:?}",
        x.dim(),
        score.dim()
    );
    match net.score(&Array2::zeros((1, 1000)), &[Label::Class(0)], &[0.1]) {
        Err(e) => println!("length 1000: {e}"),
        Ok(_) => unreachable!("1000 is not a multiple of 16"),
    }
    Ok(())
}

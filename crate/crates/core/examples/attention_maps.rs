//! Attention weights of one encoder block on a synthetic epoch cut into
//! 8 segments of 64 samples.

use eegdnet::data::synth_clean;
use eegdnet::model::{init_params, multi_head_attention, segment, ModelConfig};
use eegdnet::numerics::{Rng, Tape, Tensor};

fn main() -> eegdnet::Result<()> {
    let cfg = ModelConfig::eegdnet(8, 64, 1, 2);
    let params = init_params::<f64>(&cfg, &mut Rng::new(0))?;
    let x: Vec<f64> = synth_clean(&mut Rng::new(1)).into_iter().map(f64::from).collect();
    let s = segment(&Tensor::new(vec![512], x)?, cfg.k, cfg.q)?;
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let s = tape.constant(s);
    let out = multi_head_attention(&mut tape, &bound, "block0.attn", s, cfg.heads)?;
    for (h, w) in out.weights.iter().enumerate() {
        println!("head {h}");
        for row in tape.data(*w).chunks(cfg.k) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.2}")).collect();
            println!("  {}", cells.join(" "));
        }
    }
    Ok(())
}

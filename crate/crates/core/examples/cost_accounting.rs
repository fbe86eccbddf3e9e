//! Parameters, FLOPs and checkpoint size of every model kind, and the
//! parameter counts along the three transformer ablation axes.

use eegdnet::cli::{ablation_values, Axis};
use eegdnet::metrics::cost_report;
use eegdnet::model::{flop_breakdown, ModelConfig, ModelKind};

fn main() -> eegdnet::Result<()> {
    println!("{:<9} {:>10} {:>12} {:>12}", "model", "params", "flops", "bytes");
    for kind in ModelKind::ALL {
        let c = cost_report(&ModelConfig::baseline(kind))?;
        println!("{:<9} {:>10} {:>12} {:>12}", kind.name(), c.params, c.flops, c.storage_bytes);
    }
    let f = flop_breakdown(&ModelConfig::default());
    println!("\ntransformer flops: embedding {} encoder {} total {}", f.embedding, f.encoder, f.total);
    for axis in [Axis::Kq, Axis::Depths, Axis::Heads] {
        let counts: Vec<String> = ablation_values(axis)
            .iter()
            .map(|v| {
                let m = axis.apply(&ModelConfig::default(), v)?;
                Ok(format!("{v}:{:.1}K", cost_report(&m)?.params as f64 / 1000.0))
            })
            .collect::<eegdnet::Result<_>>()?;
        println!("{axis:<7} {}", counts.join("  "));
    }
    Ok(())
}

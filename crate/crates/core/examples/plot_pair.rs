//! Write an SVG overlay and the matching CSV for one synthetic noisy pair.

use eegdnet::cli::{plot_csv, plot_svg, Series};
use eegdnet::data::{self, EpochKind, SNR_RANGE};
use eegdnet::numerics::Rng;

fn main() -> eegdnet::Result<()> {
    let mut rng = Rng::new(3);
    let (clean, ocular) = data::synth_generate(1, EpochKind::Ocular, &mut rng)?;
    let pairs = data::augment(&clean, &ocular, 1, SNR_RANGE, &mut rng)?;
    let (start, len) = (128, 256);
    let series = vec![
        Series { label: "clean".into(), values: pairs.clean(0)[start..start + len].to_vec() },
        Series { label: "noisy".into(), values: pairs.noisy(0)[start..start + len].to_vec() },
    ];
    let dir = std::env::temp_dir();
    let svg = dir.join("eegdnet-pair.svg");
    std::fs::write(&svg, plot_svg(&series, start, "synthetic ocular pair")).expect("write svg");
    std::fs::write(dir.join("eegdnet-pair.csv"), plot_csv(&series, start)).expect("write csv");
    println!("wrote {}", svg.display());
    Ok(())
}

//! Drive the command-line surface in-process: synthesize data, train on it
//! with the quickstart settings shortened to a few epochs, then benchmark.

fn main() {
    let out = std::env::temp_dir().join("eegdnet-cli-example");
    let out = out.to_str().expect("utf-8 temp path");
    let run_dir = format!("{out}/eegdnet");
    let steps: [&[&str]; 3] = [
        &["eegdnet", "synth", "--count", "40", "--out", out],
        &[
            "eegdnet", "train", "-q", "--set", "synth_count=40", "--set", "k=16", "--set", "q=32",
            "--set", "depths=2", "--set", "max_epochs=5", "--set", "batch_size=64", "--out", &run_dir,
        ],
        &["eegdnet", "benchmark", "--set", "synth_count=40", "--models", "eegdnet,dln", "--out", out],
    ];
    for args in steps {
        let code = eegdnet::cli::run(args.iter().copied());
        println!("`{}` exited with {code}", args[1]);
    }
}

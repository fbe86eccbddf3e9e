use super::{plain_out_dir, GradcheckArgs, SynthArgs};
use crate::data::{self, EpochKind};
use crate::error::{Error, Result};
use crate::model::{init_params, model_grad_check, ModelConfig, ModelKind};
use crate::numerics::{GradCheckOptions, Rng};

/// Outcome of checking one model kind.
#[derive(Clone, Debug)]
pub struct KindCheck {
    pub kind: ModelKind,
    pub max_rel_error: f64,
    /// Parameter (or `input`) holding the worst element.
    pub worst: String,
    pub passed: bool,
}

pub fn grad_check_kinds(kinds: &[ModelKind], seed: u64, tol: f64) -> Result<Vec<KindCheck>> {
    let opts = GradCheckOptions {
        tol,
        seed,
        ..GradCheckOptions::default()
    };
    kinds
        .iter()
        .map(|&kind| {
            let cfg = ModelConfig::tiny(kind);
            let report = model_grad_check(&cfg, seed, &opts)?;
            let names: Vec<String> = init_params::<f64>(&cfg, &mut Rng::new(seed))?.names().cloned().collect();
            let worst = report.worst.as_ref().map_or("-".to_string(), |w| {
                names.get(w.input).cloned().unwrap_or_else(|| "input".into())
            });
            Ok(KindCheck {
                kind,
                max_rel_error: report.max_rel_error,
                worst,
                passed: report.passed(),
            })
        })
        .collect()
}

pub(crate) fn cmd_gradcheck(a: &GradcheckArgs) -> Result<()> {
    let kinds: Vec<ModelKind> = if a.kind.iter().any(|k| k == "all") {
        ModelKind::ALL.to_vec()
    } else {
        a.kind.iter().map(|k| k.parse()).collect::<Result<_>>()?
    };
    let checks = grad_check_kinds(&kinds, a.seed, a.tol)?;
    for c in &checks {
        println!(
            "{:<10} max rel error {:.3e}  worst {:<24} {}",
            c.kind.name(),
            c.max_rel_error,
            c.worst,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} ({} at {:.3e})", c.kind, c.worst, c.max_rel_error))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Contract(format!("gradient check failed: {}", failed.join(", "))))
    }
}

pub(crate) fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let kind: EpochKind = a.artifact.parse()?;
    let ext = match a.format.as_str() {
        "epk" | "csv" => a.format.as_str(),
        other => return Err(Error::Parameter(format!("unknown format `{other}`, expected epk or csv"))),
    };
    let (clean, artifact) = data::synth_generate(a.count, kind, &mut Rng::new(a.seed))?;
    let out = plain_out_dir(&a.out)?;
    let (cp, ap) = (out.join(format!("clean.{ext}")), out.join(format!("{}.{ext}", kind.name())));
    data::save_epochs(&cp, &clean)?;
    data::save_epochs(&ap, &artifact)?;
    println!("wrote {} and {}", cp.display(), ap.display());
    Ok(())
}

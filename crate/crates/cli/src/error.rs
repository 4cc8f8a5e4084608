use std::fmt;

/// Pipeline stage that produced an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Model,
    Pss,
    Floquet,
    Operators,
    Spectra,
    MonteCarlo,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "configuration",
            Stage::Model => "model",
            Stage::Pss => "periodic steady state",
            Stage::Floquet => "Floquet decomposition",
            Stage::Operators => "noise operators",
            Stage::Spectra => "spectra",
            Stage::MonteCarlo => "Monte-Carlo reference",
            Stage::Output => "output",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}{}", hint_suffix(.hint))]
pub struct CliError {
    pub stage: Stage,
    #[source]
    pub source: floqnoise::Error,
    pub hint: Option<&'static str>,
}

fn hint_suffix(hint: &Option<&'static str>) -> String {
    hint.map(|h| format!("\n  hint: {h}")).unwrap_or_default()
}

impl CliError {
    pub fn new(stage: Stage, source: floqnoise::Error) -> Self {
        let hint = hint_for(stage, &source);
        Self { stage, source, hint }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::new(Stage::Config, floqnoise::Error::Config(msg.into()))
    }
}

fn hint_for(stage: Stage, err: &floqnoise::Error) -> Option<&'static str> {
    use floqnoise::Error as E;
    Some(match (stage, err) {
        (_, E::Io(_)) => "check that the output directory is writable",
        (Stage::Pss, E::NoConvergence { .. } | E::DegenerateSolution { .. }) => {
            "adjust pss.period_guess and pss.x0, or raise pss.settle_periods / pss.max_iter"
        }
        (Stage::Pss, _) => "check the model parameters; the circuit may not oscillate",
        (Stage::Floquet, E::TooFewModes { .. }) => "the ensemble may not be synchronized; check coupling strength",
        (Stage::Floquet, E::DegenerateSpectrum { .. }) => {
            "identical uncoupled units are degenerate; detune them or analyze each unit separately"
        }
        (Stage::Floquet, _) => "raise pss.grid or tighten pss.tol",
        (Stage::Operators, E::DeadNode { .. }) => "choose a node or harmonic that carries the oscillation",
        (Stage::Operators, _) => "raise nf or check the Floquet spectrum for resonances",
        (Stage::MonteCarlo, E::PathDiverged { .. }) => "raise mc.steps_per_period",
        (Stage::MonteCarlo, _) => "check the [mc] settings",
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn message_names_stage_and_hint() {
        let e = CliError::new(
            Stage::Pss,
            floqnoise::Error::NoConvergence {
                iterations: 3,
                defect: 1.0,
            },
        );
        let s = e.to_string();
        assert!(s.starts_with("periodic steady state stage failed"));
        assert!(s.contains("hint: adjust pss.period_guess"));
        assert!(!CliError::config("x").to_string().contains("hint"));
    }
}

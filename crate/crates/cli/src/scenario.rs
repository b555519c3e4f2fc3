use kroncov::synth::ScenarioSpec;
use kroncov::SpatialGrid;

use crate::args::{Preset, ScenarioArgs};
use crate::CliError;

/// A scenario plus the track length drawn from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub frames: usize,
}

impl Scenario {
    /// 4x4 grid, rank-2 truth generated with a 6-frame window. The classes
    /// differ mainly in temporal correlation, so short windows see little of
    /// the difference.
    pub fn default_preset(seed: u64) -> Self {
        Self {
            spec: ScenarioSpec {
                grid: SpatialGrid::new(vec![4, 4]).expect("valid grid"),
                window: 6,
                rank: 2,
                mean_separation: 0.5,
                decay: [0.3, 0.6],
                noise_floor: 0.5,
                seed,
            },
            frames: 24,
        }
    }

    /// Same layout with distant means and contrasting temporal correlation.
    pub fn well_separated(seed: u64) -> Self {
        let mut s = Self::default_preset(seed);
        s.spec.mean_separation = 2.0;
        s.spec.decay = [0.1, 0.8];
        s
    }

    pub fn from_args(args: &ScenarioArgs, seed: u64) -> Result<Self, CliError> {
        let mut s = match args.scenario {
            Preset::Default => Self::default_preset(seed),
            Preset::WellSeparated => Self::well_separated(seed),
        };
        if let Some(g) = &args.grid {
            s.spec.grid = SpatialGrid::parse(g)?;
        }
        if let Some(p) = args.p {
            if p != s.spec.grid.size() {
                return Err(CliError::Usage(format!(
                    "--p {p} does not match grid {} with {} features",
                    s.spec.grid,
                    s.spec.grid.size()
                )));
            }
        }
        if let Some(t) = args.gen_t {
            s.spec.window = t;
        }
        if let Some(r) = args.true_rank {
            s.spec.rank = r;
        }
        if let Some(v) = args.separation {
            s.spec.mean_separation = v;
        }
        if let Some(d) = &args.decay {
            s.spec.decay = [d[0], d[1]];
        }
        if let Some(v) = args.noise_floor {
            s.spec.noise_floor = v;
        }
        if let Some(f) = args.frames {
            s.frames = f;
        }
        s.spec.validate()?;
        if s.frames < s.spec.window {
            return Err(CliError::Usage(format!(
                "tracks of {} frames are shorter than the generating window {}",
                s.frames, s.spec.window
            )));
        }
        Ok(s)
    }

    /// Plain `key=value` description written next to simulated files.
    pub fn describe(&self, n_train: usize, n_test: usize, sample_seed: u64) -> String {
        let s = &self.spec;
        format!(
            "grid={}\np={}\ngen_T={}\nrank={}\nmean_separation={:?}\ndecay={:?},{:?}\nnoise_floor={:?}\nframes={}\nn_train={n_train}\nn_test={n_test}\nscenario_seed={}\nsample_seed={sample_seed}\nrng=ChaCha8\n",
            s.grid,
            s.grid.size(),
            s.window,
            s.rank,
            s.mean_separation,
            s.decay[0],
            s.decay[1],
            s.noise_floor,
            self.frames,
            s.seed,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::args::{Cli, Command};
    use clap::Parser;

    fn scenario(args: &[&str]) -> Result<Scenario, CliError> {
        let mut full = vec!["kroncov", "simulate", "--out", "x"];
        full.extend_from_slice(args);
        match Cli::try_parse_from(full).unwrap().command {
            Command::Simulate(a) => Scenario::from_args(&a.scenario, a.seed),
            _ => unreachable!(),
        }
    }

    #[test]
    fn overrides_apply() {
        let s = scenario(&["--grid", "2x3", "--p", "6", "--decay", "0.2", "0.9", "--frames", "10"]).unwrap();
        assert_eq!(s.spec.grid.size(), 6);
        assert_eq!(s.spec.decay, [0.2, 0.9]);
        assert_eq!(s.frames, 10);
        assert_eq!(s.spec.seed, 1);
    }

    #[test]
    fn inconsistent_sizes_are_usage_errors() {
        assert!(matches!(scenario(&["--grid", "2x3", "--p", "5"]), Err(CliError::Usage(_))));
        assert!(matches!(scenario(&["--gen-T", "8", "--frames", "6"]), Err(CliError::Usage(_))));
    }

    #[test]
    fn description_lists_seeds() {
        let d = Scenario::well_separated(7).describe(10, 20, 99);
        assert!(d.contains("scenario_seed=7\n") && d.contains("sample_seed=99\n") && d.contains("mean_separation=2.0\n"));
    }
}

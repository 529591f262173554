//! Run configuration, read from TOML and written back as `config.resolved`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::endpoint::EndpointConfig;
use crate::error::{Error, Result};
use crate::generator::population;
use crate::generator::Backend;
use crate::grid::GridSpec;
use crate::guidance::GuidanceParams;
use crate::io;
use crate::optimizer::SearchConfig;
use crate::strategist::rules::StrategistConfig;
use crate::types::PromptSet;

pub const RESOLVED_CONFIG: &str = "config.resolved";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    /// Size of the built-in population when no prompt file is given.
    pub users: usize,
    pub days: u32,
    /// Prompt set to start from instead of the built-in population.
    pub prompts: Option<PathBuf>,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            users: 20,
            days: 7,
            prompts: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: GridSpec,
    pub population: PopulationConfig,
    pub generator: Backend,
    pub guidance: GuidanceParams,
    pub search: SearchConfig,
    pub strategist: StrategistConfig,
    /// Ask this endpoint for groups and strategies instead of using the
    /// rule-based action space.
    pub strategist_endpoint: Option<EndpointConfig>,
    /// Have this endpoint rewrite each modified user's constraints during
    /// the search.
    pub rewrite_endpoint: Option<EndpointConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            grid: GridSpec::default(),
            population: PopulationConfig::default(),
            generator: Backend::Synthetic,
            guidance: GuidanceParams::default(),
            search: SearchConfig::default(),
            strategist: StrategistConfig::default(),
            strategist_endpoint: None,
            rewrite_endpoint: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.search.validate()?;
        if self.population.prompts.is_none() && self.population.users == 0 {
            return Err(Error::Config("population.users must be positive".into()));
        }
        if self.population.days == 0 {
            return Err(Error::Config("population.days must be positive".into()));
        }
        if !(self.guidance.mu.is_finite() && self.guidance.mu >= 0.0) {
            return Err(Error::Config("guidance.mu must be non-negative".into()));
        }
        if !(self.guidance.epsilon_reward > 0.0 && self.guidance.epsilon_log > 0.0) {
            return Err(Error::Config("guidance epsilons must be positive".into()));
        }
        if self.strategist.groups == 0 || !(self.strategist.step > 0.0 && self.strategist.step < 1.0) {
            return Err(Error::Config("strategist needs groups > 0 and step in (0, 1)".into()));
        }
        for (name, ep) in [("strategist_endpoint", &self.strategist_endpoint), ("rewrite_endpoint", &self.rewrite_endpoint)] {
            if ep.as_ref().is_some_and(|e| e.url.is_empty() || e.max_in_flight == 0) {
                return Err(Error::Config(format!("{name} needs a url and max_in_flight > 0")));
            }
        }
        if let Backend::External(e) = &self.generator {
            if e.url.is_empty() || e.max_in_flight == 0 {
                return Err(Error::Config("external generator needs a url and max_in_flight > 0".into()));
            }
        }
        Ok(())
    }

    /// Write `config.resolved` into `dir`.
    pub fn persist(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(RESOLVED_CONFIG), self.to_toml()?)?;
        Ok(())
    }

    /// Backend with endpoint environment overrides applied.
    pub fn backend(&self) -> Backend {
        match &self.generator {
            Backend::External(e) => Backend::External(e.clone().with_env_overrides()),
            b => b.clone(),
        }
    }

    /// The starting prompt set: the configured file, or the built-in
    /// population. The prompt set seed is always the run seed.
    pub fn root_prompts(&self) -> Result<PromptSet> {
        match &self.population.prompts {
            Some(p) => {
                let mut ps = io::read_prompt_set(p)?;
                ps.seed = self.seed;
                Ok(ps)
            }
            None => PromptSet::new(
                self.seed,
                population::default_prompts(self.population.users, self.population.days, &self.grid, self.seed),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_defaults() {
        let c = RunConfig::from_toml("seed = 9\n[search]\ntotal_simulations = 4\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.search.total_simulations, 4);
        assert_eq!(c.search.c, 1.4);
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(RunConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn external_backend_parses() {
        let c = RunConfig::from_toml("[generator]\nkind = \"external\"\nurl = \"http://x\"\n").unwrap();
        match c.generator {
            Backend::External(e) => assert_eq!(e.url, "http://x"),
            _ => panic!("expected external"),
        }
    }
}

//! Checkpoint directory: one parameter file per network plus `manifest.txt`.
//!
//! Manifest lines are `<name> <file> <widths, comma separated>`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::Agent;
use crate::nn::Mlp;
use crate::{Error, Result};

const COMPONENTS: [&str; 6] = ["actor", "critic1", "critic2", "target1", "target2", "encoder"];

impl Agent {
    fn component(&self, name: &str) -> &Mlp {
        match name {
            "actor" => &self.actor,
            "critic1" => &self.critic1,
            "critic2" => &self.critic2,
            "target1" => &self.target1,
            "target2" => &self.target2,
            _ => &self.encoder,
        }
    }

    fn component_mut(&mut self, name: &str) -> &mut Mlp {
        match name {
            "actor" => &mut self.actor,
            "critic1" => &mut self.critic1,
            "critic2" => &mut self.critic2,
            "target1" => &mut self.target1,
            "target2" => &mut self.target2,
            _ => &mut self.encoder,
        }
    }

    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::new();
        for name in COMPONENTS {
            let net = self.component(name);
            let file = format!("{name}.bin");
            net.save(&dir.join(&file))?;
            let widths: Vec<String> = net.widths().iter().map(usize::to_string).collect();
            let _ = writeln!(manifest, "{name} {file} {}", widths.join(","));
        }
        let path = dir.join("manifest.txt");
        fs::write(&path, manifest).map_err(|e| Error::io(path, e))
    }

    /// Load parameters into an agent built with the same configuration.
    pub fn load_checkpoint(&mut self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.txt");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        for (i, line) in text.lines().enumerate() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [name, file, widths] = parts[..] else {
                return Err(Error::Parse {
                    what: "checkpoint manifest",
                    line: i + 1,
                    reason: "expected `<name> <file> <widths>`".into(),
                });
            };
            if !COMPONENTS.contains(&name) {
                return Err(Error::Parse {
                    what: "checkpoint manifest",
                    line: i + 1,
                    reason: format!("unknown component `{name}`"),
                });
            }
            let expected: Vec<String> = self.component(name).widths().iter().map(usize::to_string).collect();
            if widths != expected.join(",") {
                return Err(Error::Parse {
                    what: "checkpoint manifest",
                    line: i + 1,
                    reason: format!("{name} widths {widths} do not match {}", expected.join(",")),
                });
            }
            self.component_mut(name).load_params(&dir.join(file))?;
        }
        Ok(())
    }
}

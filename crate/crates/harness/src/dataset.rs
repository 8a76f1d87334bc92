//! Episode datasets: scenes embedded as text plus episode specs with stable
//! ids, serialized as JSON so a dataset reloads bit-exactly.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use multion_core::env::{EpisodeSpec, Heading, Pose};
use multion_core::geodesy::{SceneFields, RADIUS_EPS};
use multion_core::scene::{generate_scene, load_scene, Cell, CategoryId, GridScene, SceneGenSpec, Traversable};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};

const FORMAT: &str = "multion-dataset v1";
/// Category draws per episode before a scene is declared infeasible.
const MAX_RETRIES: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub master_seed: u64,
    /// Generator parameters, absent when scenes were loaded from files.
    pub generator: Option<SceneGenSpec>,
    pub scene_seeds: Vec<u64>,
    pub scene_dir: Option<PathBuf>,
    pub k: (usize, usize),
    pub success_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub name: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub id: String,
    pub scene: usize,
    pub start: (usize, usize),
    pub heading: u32,
    pub targets: Vec<CategoryId>,
    /// Uniformly random order of `targets`, used by sequenced agents.
    pub sequence: Vec<CategoryId>,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeDataset {
    pub format: String,
    pub provenance: Provenance,
    pub scenes: Vec<SceneEntry>,
    pub episodes: Vec<EpisodeEntry>,
    /// Scenes skipped because they could not host the requested k.
    pub warnings: Vec<String>,
}

/// Scenes of a dataset parsed once, with their ground-truth fields.
pub struct LoadedScenes {
    pub fields: Vec<Arc<SceneFields>>,
}

fn scene_gen(cfg: &RunConfig, seed: u64) -> SceneGenSpec {
    let mut g = SceneGenSpec::new(cfg.scene_width, cfg.scene_height, cfg.rooms, seed);
    g.instances_per_category = cfg.instances.clone();
    g
}

fn source_scenes(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<(Vec<(String, GridScene)>, Vec<u64>, Option<SceneGenSpec>)> {
    if let Some(dir) = &cfg.scene_dir {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| HarnessError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "scene"))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(HarnessError::Dataset(format!("no .scene files in {}", dir.display())));
        }
        let scenes = paths
            .iter()
            .map(|p| Ok((p.file_stem().map_or("scene".into(), |s| s.to_string_lossy().into_owned()), load_scene(p)?)))
            .collect::<Result<Vec<_>>>()?;
        return Ok((scenes, Vec::new(), None));
    }
    let seeds: Vec<u64> = (0..cfg.scenes).map(|_| rng.random()).collect();
    let scenes = seeds
        .iter()
        .enumerate()
        .map(|(i, &s)| Ok((format!("gen{i:03}"), generate_scene(&scene_gen(cfg, s))?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((scenes, seeds, Some(scene_gen(cfg, 0))))
}

/// Free cells strictly farther than the success radius from every target,
/// and connected to all of them.
fn valid_starts(fields: &SceneFields, targets: &[CategoryId], radius: f64) -> Result<Vec<Cell>> {
    let mut out = Vec::new();
    for c in fields.scene().free_cells() {
        let mut ok = true;
        for &t in targets {
            let d = fields.dtg(c, t)?;
            if d <= radius + RADIUS_EPS || !d.is_finite() {
                ok = false;
                break;
            }
        }
        if ok {
            out.push(c);
        }
    }
    Ok(out)
}

/// Builds the dataset described by `cfg`; deterministic in `cfg.seed`.
pub fn make_dataset(cfg: &RunConfig) -> Result<EpisodeDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (scenes, scene_seeds, generator) = source_scenes(cfg, &mut rng)?;
    let mut episodes = Vec::new();
    let mut warnings = Vec::new();
    let mut kept = Vec::new();
    'scenes: for (name, scene) in scenes {
        let fields = SceneFields::new(scene);
        let present = fields.scene().categories_present();
        let scene_idx = kept.len();
        let mut eps = Vec::new();
        for e in 0..cfg.episodes_per_scene {
            let mut drawn = None;
            for _ in 0..MAX_RETRIES {
                let k = rng.random_range(cfg.k.clone());
                if present.len() < k {
                    continue;
                }
                let targets: Vec<CategoryId> = present.choose_multiple(&mut rng, k).copied().collect();
                let starts = valid_starts(&fields, &targets, cfg.success_radius)?;
                if let Some(&start) = starts.choose(&mut rng) {
                    drawn = Some((targets, start));
                    break;
                }
            }
            let Some((mut targets, start)) = drawn else {
                warnings.push(format!("scene {name} skipped: cannot host k in {}..={} episodes", cfg.k.start(), cfg.k.end()));
                continue 'scenes;
            };
            targets.sort_unstable();
            let mut sequence = targets.clone();
            sequence.shuffle(&mut rng);
            let heading = 30 * rng.random_range(0..12u32);
            let max_steps = cfg.max_steps_for(targets.len())?;
            eps.push(EpisodeEntry { id: format!("s{scene_idx:03}-e{e:04}"), scene: scene_idx, start: (start.x, start.y), heading, targets, sequence, max_steps });
        }
        episodes.extend(eps);
        kept.push(SceneEntry { name, text: fields.scene().to_text() });
    }
    if episodes.is_empty() {
        return Err(HarnessError::Dataset("no scene can host the requested episodes".into()));
    }
    Ok(EpisodeDataset {
        format: FORMAT.into(),
        provenance: Provenance {
            master_seed: cfg.seed,
            generator,
            scene_seeds,
            scene_dir: cfg.scene_dir.clone(),
            k: (*cfg.k.start(), *cfg.k.end()),
            success_radius: cfg.success_radius,
        },
        scenes: kept,
        episodes,
        warnings,
    })
}

impl EpisodeDataset {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| HarnessError::Dataset(e.to_string()))?;
        std::fs::write(path, json + "\n").map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let ds: Self = serde_json::from_str(&text).map_err(|e| HarnessError::Dataset(format!("{}: {e}", path.display())))?;
        if ds.format != FORMAT {
            return Err(HarnessError::Dataset(format!("unsupported dataset format {:?}", ds.format)));
        }
        Ok(ds)
    }

    pub fn load_scenes(&self) -> Result<LoadedScenes> {
        let fields = self
            .scenes
            .iter()
            .map(|s| Ok(Arc::new(SceneFields::new(GridScene::from_text(&s.text)?))))
            .collect::<Result<Vec<_>>>()?;
        Ok(LoadedScenes { fields })
    }

    /// The runnable spec of episode `i`; `sequence` selects the PSM order.
    pub fn spec(&self, scenes: &LoadedScenes, i: usize, sequence: Option<Vec<CategoryId>>) -> Result<EpisodeSpec> {
        let e = &self.episodes[i];
        let fields = scenes.fields.get(e.scene).ok_or_else(|| HarnessError::Dataset(format!("episode {} names missing scene {}", e.id, e.scene)))?;
        let heading = Heading::from_degrees(e.heading).ok_or_else(|| HarnessError::Dataset(format!("episode {}: bad heading {}", e.id, e.heading)))?;
        let cs = fields.scene().cell_size();
        let mut spec = EpisodeSpec::new(fields.clone(), Pose::at_cell(Cell::new(e.start.0, e.start.1), cs, heading), e.targets.clone(), e.max_steps);
        spec.success_radius = self.provenance.success_radius;
        spec.sequence = sequence;
        spec.validate()?;
        Ok(spec)
    }

    pub fn scene_size(&self, scenes: &LoadedScenes, i: usize) -> (usize, usize) {
        let s = scenes.fields[self.episodes[i].scene].scene();
        (s.width(), s.height())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig { scenes: 2, episodes_per_scene: 5, scene_width: 10, scene_height: 10, rooms: 2, ..Default::default() }
    }

    #[test]
    fn deterministic_and_valid() {
        let a = make_dataset(&small()).unwrap();
        let b = make_dataset(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.episodes.len(), 10);
        let scenes = a.load_scenes().unwrap();
        for (i, e) in a.episodes.iter().enumerate() {
            let spec = a.spec(&scenes, i, None).unwrap();
            for &t in &e.targets {
                assert!(scenes.fields[e.scene].dtg(spec.start.cell(0.25), t).unwrap() > 1.0);
            }
            let mut seq = e.sequence.clone();
            seq.sort_unstable();
            assert_eq!(seq, e.targets);
        }
    }

    #[test]
    fn infeasible_k_skips_scene() {
        let mut cfg = small();
        cfg.k = 2..=2;
        let dir = tempfile::tempdir().unwrap();
        // one category only: a chair and nothing else
        std::fs::write(dir.path().join("a.scene"), "multion-scene v1 6 6 0.25\n......\n......\n......\n......\n......\n......\nobj chair 0 0\n").unwrap();
        let good = generate_scene(&SceneGenSpec::new(10, 10, 2, 1)).unwrap();
        std::fs::write(dir.path().join("b.scene"), good.to_text()).unwrap();
        cfg.scene_dir = Some(dir.path().to_path_buf());
        let ds = make_dataset(&cfg).unwrap();
        assert_eq!(ds.warnings.len(), 1);
        assert!(ds.warnings[0].contains("scene a"));
        assert_eq!(ds.scenes.len(), 1);
        assert!(ds.episodes.iter().all(|e| e.scene == 0));
    }
}

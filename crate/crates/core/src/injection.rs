//! Constrained random defect sampling and the per-library dataset plan.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{BinaryLayout, LibraryEntry};
use crate::morphology::{
    max_boundary_displacement, perturb, predicted_epe, EpeModel, MorphologyError, PerturbMode,
    PerturbationSpec, SeShape, Sigma, StructuringElement,
};
use crate::seed::{derive_seed, rng_from_seed};
use crate::topology::{classify_signature, count_components, signature, ClassifyConfig, DefectClass};

#[derive(Debug, Error)]
pub enum InjectionError {
    #[error("job `{job}`: no {target} defect after {attempts} attempts")]
    SamplingExhausted {
        job: String,
        target: &'static str,
        attempts: u32,
    },
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Morphology(#[from] MorphologyError),
    #[error("records file {path}: {reason}")]
    Records { path: String, reason: String },
}

/// The three injection groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefectGroup {
    BridgeSquare,
    PinchSquare,
    PinchDiamond,
}

impl DefectGroup {
    pub const ALL: [DefectGroup; 3] = [DefectGroup::BridgeSquare, DefectGroup::PinchSquare, DefectGroup::PinchDiamond];

    pub fn sigma(self) -> Sigma {
        match self {
            DefectGroup::BridgeSquare => Sigma::Dilation,
            _ => Sigma::Erosion,
        }
    }

    pub fn shape(self) -> SeShape {
        match self {
            DefectGroup::PinchDiamond => SeShape::Diamond,
            _ => SeShape::Square,
        }
    }

    pub fn target_class(self) -> DefectClass {
        match self {
            DefectGroup::BridgeSquare => DefectClass::Bridge,
            _ => DefectClass::Pinch,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DefectGroup::BridgeSquare => "bridge-square",
            DefectGroup::PinchSquare => "pinch-square",
            DefectGroup::PinchDiamond => "pinch-diamond",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupCounts {
    pub bridge_square: u32,
    pub pinch_square: u32,
    pub pinch_diamond: u32,
}

impl Default for GroupCounts {
    fn default() -> Self {
        Self {
            bridge_square: 50,
            pinch_square: 50,
            pinch_diamond: 50,
        }
    }
}

impl GroupCounts {
    pub fn get(&self, group: DefectGroup) -> u32 {
        match group {
            DefectGroup::BridgeSquare => self.bridge_square,
            DefectGroup::PinchSquare => self.pinch_square,
            DefectGroup::PinchDiamond => self.pinch_diamond,
        }
    }

    pub fn total(&self) -> u32 {
        DefectGroup::ALL.iter().map(|&g| self.get(g)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub r_min: u32,
    pub r_max: u32,
    pub max_attempts: u32,
    pub mode: PerturbMode,
    pub window_margin: Option<u32>,
    pub classify: ClassifyConfig,
    /// Let the dilation group also accept burrs. Off by default, which keeps
    /// every bridge-square record a bridge.
    pub dilation_accepts_burr: bool,
    #[serde(skip)]
    pub epe: EpeModel,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            r_min: 2,
            r_max: 6,
            max_attempts: 1000,
            mode: PerturbMode::Footprint,
            window_margin: None,
            classify: ClassifyConfig::default(),
            dilation_accepts_burr: false,
            epe: EpeModel::default(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), InjectionError> {
        if self.r_min == 0 || self.r_min > self.r_max {
            return Err(InjectionError::InvalidConfig(format!(
                "scale range [{}, {}] must satisfy 1 <= r_min <= r_max",
                self.r_min, self.r_max
            )));
        }
        if self.max_attempts == 0 {
            return Err(InjectionError::InvalidConfig("max_attempts must be positive".into()));
        }
        Ok(())
    }

    fn accepts(&self, group: DefectGroup, class: DefectClass) -> bool {
        class == group.target_class()
            || (self.dilation_accepts_burr && group == DefectGroup::BridgeSquare && class == DefectClass::Burr)
    }
}

/// One scheduled defect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectJob {
    pub id: String,
    pub layout_index: usize,
    pub layout_id: String,
    pub group: DefectGroup,
    pub index: u32,
    pub seed: u64,
}

/// Full provenance of one accepted defect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectRecord {
    pub id: String,
    pub base_layout_id: String,
    pub group: DefectGroup,
    pub spec: PerturbationSpec,
    pub delta_k: i64,
    pub class: DefectClass,
    /// `max |Δb|` over the sampled normals.
    pub delta_b_max: f64,
    pub predicted_epe_max: f64,
    pub seed: u64,
}

/// Run the rejection loop for one job.
///
/// Each attempt draws a target uniformly over the grid and a scale uniformly
/// from `[r_min, r_max]`; the group fixes `σ` and the element shape. The first
/// perturbation that classifies as the group's target is accepted.
pub fn sample_defect(
    a: &BinaryLayout,
    job: &DefectJob,
    cfg: &SamplerConfig,
) -> Result<(BinaryLayout, DefectRecord), InjectionError> {
    sample_with_seed(a, job, job.seed, cfg)
}

fn sample_with_seed(
    a: &BinaryLayout,
    job: &DefectJob,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<(BinaryLayout, DefectRecord), InjectionError> {
    cfg.validate()?;
    let mut rng = rng_from_seed(seed);
    let k_a = count_components(a);
    let (w, h) = a.dims();
    for _ in 0..cfg.max_attempts {
        let x = rng.gen_range(0..w) as i64;
        let y = rng.gen_range(0..h) as i64;
        let r = rng.gen_range(cfg.r_min..=cfg.r_max);
        let se = StructuringElement::new(job.group.shape(), r)?;
        let spec = PerturbationSpec {
            sigma: job.group.sigma(),
            se,
            target: (x, y),
            mode: cfg.mode,
            window_margin: cfg.window_margin,
        };
        let a_prime = perturb(a, &spec)?;
        let sig = signature(a, &a_prime, &spec, Some(k_a)).expect("perturb preserves dimensions");
        let class = classify_signature(&sig, &cfg.classify);
        if !cfg.accepts(job.group, class) {
            continue;
        }
        let delta_b_max = max_boundary_displacement(&spec.se, spec.sigma);
        let record = DefectRecord {
            id: job.id.clone(),
            base_layout_id: job.layout_id.clone(),
            group: job.group,
            delta_k: sig.delta_k,
            class,
            delta_b_max,
            predicted_epe_max: predicted_epe(delta_b_max, &cfg.epe),
            seed,
            spec,
        };
        return Ok((a_prime, record));
    }
    Err(InjectionError::SamplingExhausted {
        job: job.id.clone(),
        target: job.group.target_class().as_str(),
        attempts: cfg.max_attempts,
    })
}

/// Re-run perturbation and classification from stored provenance.
pub fn verify_record(a: &BinaryLayout, record: &DefectRecord, cfg: &SamplerConfig) -> Result<bool, InjectionError> {
    let a_prime = perturb(a, &record.spec)?;
    let sig = signature(a, &a_prime, &record.spec, None).expect("perturb preserves dimensions");
    let class = classify_signature(&sig, &cfg.classify);
    let expected_epe = predicted_epe(record.delta_b_max, &cfg.epe);
    Ok(class == record.class
        && sig.delta_k == record.delta_k
        && cfg.accepts(record.group, class)
        && record.delta_b_max == max_boundary_displacement(&record.spec.se, record.spec.sigma)
        && record.predicted_epe_max == expected_epe)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub counts: GroupCounts,
    pub master_seed: u64,
    /// Extra seed-bumped retries for exhausted jobs. Zero disables resampling.
    pub resample_bumps: u32,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            counts: GroupCounts::default(),
            master_seed: 0,
            resample_bumps: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetPlan {
    pub library: Vec<LibraryEntry>,
    pub jobs: Vec<DefectJob>,
    pub sampler: SamplerConfig,
    pub resample_bumps: u32,
}

pub fn job_seed(master_seed: u64, layout_id: &str, group: DefectGroup, index: u32) -> u64 {
    derive_seed(&[
        &master_seed.to_le_bytes(),
        layout_id.as_bytes(),
        group.as_str().as_bytes(),
        &index.to_le_bytes(),
    ])
}

/// Schedule `counts` jobs per group for every library layout.
pub fn generate_plan(library: Vec<LibraryEntry>, plan: &PlanConfig, sampler: SamplerConfig) -> DatasetPlan {
    let mut jobs = Vec::with_capacity(library.len() * plan.counts.total() as usize);
    for (layout_index, entry) in library.iter().enumerate() {
        for group in DefectGroup::ALL {
            for index in 0..plan.counts.get(group) {
                let layout_id = entry.spec.id.clone();
                jobs.push(DefectJob {
                    id: format!("{}-{}-{:03}", layout_id, group.as_str(), index),
                    seed: job_seed(plan.master_seed, &layout_id, group, index),
                    layout_index,
                    layout_id,
                    group,
                    index,
                });
            }
        }
    }
    DatasetPlan {
        library,
        jobs,
        sampler,
        resample_bumps: plan.resample_bumps,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedJob {
    pub job_id: String,
    pub layout_id: String,
    pub group: DefectGroup,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    /// Accepted defects in plan order.
    pub accepted: Vec<(BinaryLayout, DefectRecord)>,
    pub skipped: Vec<SkippedJob>,
}

fn run_job(plan: &DatasetPlan, job: &DefectJob) -> Result<(BinaryLayout, DefectRecord), InjectionError> {
    let a = &plan.library[job.layout_index].layout;
    let mut result = sample_with_seed(a, job, job.seed, &plan.sampler);
    for bump in 1..=plan.resample_bumps {
        match result {
            Err(InjectionError::SamplingExhausted { .. }) => {
                let seed = derive_seed(&[&job.seed.to_le_bytes(), &bump.to_le_bytes()]);
                result = sample_with_seed(a, job, seed, &plan.sampler);
            }
            _ => break,
        }
    }
    result
}

/// Execute every job, in parallel when a pool is available. Output order is
/// plan order; exhausted jobs land in the skip list.
pub fn execute_plan(plan: &DatasetPlan) -> PlanOutcome {
    let results: Vec<_> = plan.jobs.par_iter().map(|job| run_job(plan, job)).collect();
    let mut accepted = Vec::new();
    let mut skipped = Vec::new();
    for (job, result) in plan.jobs.iter().zip(results) {
        match result {
            Ok(pair) => accepted.push(pair),
            Err(err) => skipped.push(SkippedJob {
                job_id: job.id.clone(),
                layout_id: job.layout_id.clone(),
                group: job.group,
                reason: err.to_string(),
            }),
        }
    }
    PlanOutcome { accepted, skipped }
}

/// Flat line format of the records file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RecordLine {
    format_version: u32,
    id: String,
    base_layout_id: String,
    group: DefectGroup,
    sigma: Sigma,
    se_shape: SeShape,
    r: u32,
    t: (i64, i64),
    mode: PerturbMode,
    window_margin: Option<u32>,
    delta_k: i64,
    class: DefectClass,
    delta_b_max: f64,
    epe_max: f64,
    seed: u64,
}

impl From<&DefectRecord> for RecordLine {
    fn from(r: &DefectRecord) -> Self {
        RecordLine {
            format_version: crate::FORMAT_VERSION,
            id: r.id.clone(),
            base_layout_id: r.base_layout_id.clone(),
            group: r.group,
            sigma: r.spec.sigma,
            se_shape: r.spec.se.shape(),
            r: r.spec.se.scale(),
            t: r.spec.target,
            mode: r.spec.mode,
            window_margin: r.spec.window_margin,
            delta_k: r.delta_k,
            class: r.class,
            delta_b_max: r.delta_b_max,
            epe_max: r.predicted_epe_max,
            seed: r.seed,
        }
    }
}

impl TryFrom<RecordLine> for DefectRecord {
    type Error = MorphologyError;

    fn try_from(l: RecordLine) -> Result<Self, Self::Error> {
        Ok(DefectRecord {
            id: l.id,
            base_layout_id: l.base_layout_id,
            group: l.group,
            spec: PerturbationSpec {
                sigma: l.sigma,
                se: StructuringElement::new(l.se_shape, l.r)?,
                target: l.t,
                mode: l.mode,
                window_margin: l.window_margin,
            },
            delta_k: l.delta_k,
            class: l.class,
            delta_b_max: l.delta_b_max,
            predicted_epe_max: l.epe_max,
            seed: l.seed,
        })
    }
}

pub fn encode_record_line(record: &DefectRecord) -> String {
    serde_json::to_string(&RecordLine::from(record)).expect("record serializes")
}

pub fn decode_record_line(line: &str) -> Result<DefectRecord, String> {
    let parsed: RecordLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    DefectRecord::try_from(parsed).map_err(|e| e.to_string())
}

/// Write one JSON object per line.
pub fn write_records(path: &Path, records: &[&DefectRecord]) -> Result<(), InjectionError> {
    let io = |e: std::io::Error| InjectionError::Records {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let mut file = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for record in records {
        writeln!(file, "{}", encode_record_line(record)).map_err(io)?;
    }
    file.flush().map_err(io)
}

pub fn read_records(path: &Path) -> Result<Vec<DefectRecord>, InjectionError> {
    let err = |reason: String| InjectionError::Records {
        path: path.display().to_string(),
        reason,
    };
    let file = fs::File::open(path).map_err(|e| err(e.to_string()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(decode_record_line(&line).map_err(|e| err(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{LayoutSpec, PixelRect};

    fn job(group: DefectGroup, seed: u64) -> DefectJob {
        DefectJob {
            id: "t-000".into(),
            layout_index: 0,
            layout_id: "t".into(),
            group,
            index: 0,
            seed,
        }
    }

    fn two_lines() -> BinaryLayout {
        let mut a = BinaryLayout::new(128, 128);
        a.fill_rect(PixelRect::new(0, 54, 128, 58), true);
        a.fill_rect(PixelRect::new(0, 64, 128, 68), true);
        a
    }

    #[test]
    fn bridge_on_two_lines_is_accepted() {
        let cfg = SamplerConfig {
            r_min: 4,
            r_max: 6,
            ..SamplerConfig::default()
        };
        let a = two_lines();
        let (b, rec) = sample_defect(&a, &job(DefectGroup::BridgeSquare, 5), &cfg).unwrap();
        assert_eq!(rec.class, DefectClass::Bridge);
        assert!(rec.delta_k < 0);
        assert_eq!(count_components(&b) as i64 - count_components(&a) as i64, rec.delta_k);
        assert_eq!(rec.predicted_epe_max, cfg.epe.meef * rec.delta_b_max);
        assert!(verify_record(&a, &rec, &cfg).unwrap());
    }

    #[test]
    fn pinch_on_empty_layout_exhausts() {
        let cfg = SamplerConfig {
            max_attempts: 50,
            ..SamplerConfig::default()
        };
        let empty = BinaryLayout::new(128, 128);
        let err = sample_defect(&empty, &job(DefectGroup::PinchSquare, 1), &cfg).unwrap_err();
        assert!(matches!(err, InjectionError::SamplingExhausted { attempts: 50, .. }));
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = two_lines();
        let cfg = SamplerConfig::default();
        for group in DefectGroup::ALL {
            let first = sample_defect(&a, &job(group, 77), &cfg).unwrap();
            let second = sample_defect(&a, &job(group, 77), &cfg).unwrap();
            assert_eq!(first, second);
            assert_eq!(first.1.class, group.target_class());
        }
    }

    #[test]
    fn small_plan_counts_and_seeds() {
        let layout = crate::layout::make_line_array(&LayoutSpec::lines(
            "hline-01",
            crate::layout::LayoutKind::HorizontalLines,
            4,
            10,
        ))
        .unwrap();
        let lib = vec![LibraryEntry {
            spec: LayoutSpec::lines("hline-01", crate::layout::LayoutKind::HorizontalLines, 4, 10),
            layout,
        }];
        let cfg = PlanConfig {
            counts: GroupCounts {
                bridge_square: 2,
                pinch_square: 1,
                pinch_diamond: 0,
            },
            ..PlanConfig::default()
        };
        let plan = generate_plan(lib.clone(), &cfg, SamplerConfig::default());
        assert_eq!(plan.jobs.len(), 3);
        let again = generate_plan(lib.clone(), &cfg, SamplerConfig::default());
        assert_eq!(plan.jobs, again.jobs);

        let empty = generate_plan(
            lib,
            &PlanConfig {
                counts: GroupCounts {
                    bridge_square: 0,
                    pinch_square: 0,
                    pinch_diamond: 0,
                },
                ..cfg
            },
            SamplerConfig::default(),
        );
        assert!(empty.jobs.is_empty());

        let out = execute_plan(&plan);
        assert_eq!(out.accepted.len() + out.skipped.len(), 3);
        for ((_, rec), job) in out.accepted.iter().zip(&plan.jobs) {
            assert_eq!(rec.id, job.id);
        }
    }

    #[test]
    fn resample_bumps_recover_unlucky_seeds() {
        let cfg = SamplerConfig {
            max_attempts: 1,
            ..SamplerConfig::default()
        };
        let lib = vec![LibraryEntry {
            spec: LayoutSpec::lines("t", crate::layout::LayoutKind::HorizontalLines, 4, 10),
            layout: two_lines(),
        }];
        let plan_cfg = PlanConfig {
            counts: GroupCounts {
                bridge_square: 20,
                pinch_square: 0,
                pinch_diamond: 0,
            },
            master_seed: 1,
            resample_bumps: 0,
        };
        let strict = execute_plan(&generate_plan(lib.clone(), &plan_cfg, cfg));
        let bumped = execute_plan(&generate_plan(
            lib,
            &PlanConfig {
                resample_bumps: 200,
                ..plan_cfg
            },
            cfg,
        ));
        assert!(!strict.skipped.is_empty());
        assert!(bumped.skipped.len() < strict.skipped.len());
    }

    #[test]
    fn record_lines_round_trip() {
        let a = two_lines();
        let (_, rec) = sample_defect(&a, &job(DefectGroup::PinchDiamond, 3), &SamplerConfig::default()).unwrap();
        let line = encode_record_line(&rec);
        assert!(line.contains("\"se_shape\":\"diamond\""));
        assert_eq!(decode_record_line(&line).unwrap(), rec);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        write_records(&path, &[&rec, &rec]).unwrap();
        assert_eq!(read_records(&path).unwrap(), vec![rec.clone(), rec]);
    }

    #[test]
    fn stored_floats_reparse_exactly() {
        let a = two_lines();
        let (_, mut rec) = sample_defect(&a, &job(DefectGroup::PinchSquare, 1), &SamplerConfig::default()).unwrap();
        for r in 1..=6 {
            for n in crate::morphology::sampled_normals(16) {
                rec.delta_b_max = -(r as f64) * (n.0.abs() + n.1.abs());
                rec.predicted_epe_max = 1.4 * rec.delta_b_max;
                assert_eq!(decode_record_line(&encode_record_line(&rec)).unwrap(), rec);
            }
        }
    }
}

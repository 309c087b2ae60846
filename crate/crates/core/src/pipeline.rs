//! End-to-end generation behind a single TOML config.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! config.toml              effective config (without out_dir)
//! library/                 base layouts (PGM), specs and library.json
//! images/                  <id>.pbm renders (raw and defect), optional <id>.pgm gray
//! annotations/             train.json val.json test.json
//! records.jsonl            provenance of every accepted defect
//! skips.jsonl              jobs whose sampler gave up
//! excluded.jsonl           pairs dropped for an empty diff
//! epe.csv                  predicted vs measured edge placement error
//! stats/                   density.csv size_histogram.csv
//! summary.json summary.txt
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotate::{diff_mask, extract_instances, AnnotateConfig, AnnotateError, AnnotationInstance, Category};
use crate::export::{
    dataset_stats, export_coco, read_coco, split_layouts, to_sorted_json, validate_ratios, DatasetManifest,
    ExportError, ImageEntry, Split, StatsConfig, StatsReport, DEFAULT_RATIOS,
};
use crate::injection::{
    execute_plan, generate_plan, read_records, verify_record, write_records, DefectRecord, GroupCounts,
    InjectionError, PlanConfig, SamplerConfig, SkippedJob,
};
use crate::layout::{build_library, write_library, BinaryLayout, LayoutError, LibraryConfig};
use crate::morphology::{perturb, EpeModel, MorphologyError};
use crate::pnm;
use crate::renderer::{measure_epe, render, spearman_rho, RenderConfig, RenderError, RenderedImage};
use crate::seed::derive_seed;
use crate::topology::{delta_k, signature};
use crate::FORMAT_VERSION;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("[config] {0}")]
    Config(String),
    #[error("[layout] {0}")]
    Layout(#[from] LayoutError),
    #[error("[injection] {0}")]
    Injection(#[from] InjectionError),
    #[error("[morphology] {0}")]
    Morphology(#[from] MorphologyError),
    #[error("[renderer] {context}: {source}")]
    Render {
        context: String,
        #[source]
        source: RenderError,
    },
    #[error("[annotate] {context}: {source}")]
    Annotate {
        context: String,
        #[source]
        source: AnnotateError,
    },
    #[error("[export] {0}")]
    Export(#[from] ExportError),
    #[error("[{module}] io at {path}: {source}")]
    Io {
        module: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn is_config(&self) -> bool {
        matches!(self, PipelineError::Config(_))
    }
}

fn io<'a>(module: &'static str, path: &'a Path) -> impl FnOnce(std::io::Error) -> PipelineError + 'a {
    move |source| PipelineError::Io {
        module,
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(module: &'static str, path: &Path, body: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    fs::write(path, body).map_err(io(module, path))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LibrarySection {
    pub horizontal: u32,
    pub vertical: u32,
    pub composite: u32,
}

impl Default for LibrarySection {
    fn default() -> Self {
        let d = LibraryConfig::default();
        Self {
            horizontal: d.horizontal,
            vertical: d.vertical,
            composite: d.composite,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    pub counts: GroupCounts,
    pub resample_bumps: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    /// Train, val, test.
    pub ratios: [f64; 3],
    /// Defaults to a value derived from `master_seed`.
    pub seed: Option<u64>,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            ratios: DEFAULT_RATIOS,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSection {
    /// Also write the continuous intensity image of every render as PGM.
    pub write_gray: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub master_seed: u64,
    pub meef: f64,
    pub out_dir: Option<PathBuf>,
    pub library: LibrarySection,
    pub plan: PlanSection,
    pub sampler: SamplerConfig,
    pub render: RenderConfig,
    pub annotate: AnnotateConfig,
    pub split: SplitSection,
    pub stats: StatsConfig,
    pub export: ExportSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            master_seed: 20240601,
            meef: EpeModel::default().meef,
            out_dir: None,
            library: LibrarySection::default(),
            plan: PlanSection::default(),
            sampler: SamplerConfig::default(),
            render: RenderConfig::default(),
            annotate: AnnotateConfig::default(),
            split: SplitSection::default(),
            stats: StatsConfig::default(),
            export: ExportSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// TOML of everything that affects the artifacts (`out_dir` omitted).
    pub fn provenance_toml(&self) -> String {
        Self {
            out_dir: None,
            ..self.clone()
        }
        .to_toml()
    }

    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.provenance_toml().as_bytes()))
    }

    pub fn layout_size(&self) -> usize {
        crate::layout::GRID_SIZE as usize
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg_err = |m: String| Err(PipelineError::Config(m));
        if let Err(e) = EpeModel::new(self.meef) {
            return cfg_err(format!("meef: {e}"));
        }
        if let Err(e) = self.sampler.validate() {
            return cfg_err(format!("sampler: {e}"));
        }
        if let Err(e) = self.render.validate((self.layout_size(), self.layout_size())) {
            return cfg_err(format!("render: {e}"));
        }
        if let Err(e) = validate_ratios(self.split.ratios) {
            return cfg_err(format!("split: {e}"));
        }
        if self.annotate.min_area == 0 {
            return cfg_err("annotate: min_area must be >= 1".into());
        }
        let s = &self.stats;
        if s.grid_rows == 0 || s.grid_cols == 0 || s.bins == 0 || !(s.min_pct > 0.0 && s.min_pct < s.max_pct) {
            return cfg_err("stats: grid and bins must be positive and 0 < min_pct < max_pct".into());
        }
        if self.library.horizontal + self.library.vertical + self.library.composite == 0 {
            return cfg_err("library: at least one layout is required".into());
        }
        Ok(())
    }

    fn library_config(&self) -> LibraryConfig {
        LibraryConfig {
            composite: self.library.composite,
            horizontal: self.library.horizontal,
            vertical: self.library.vertical,
            master_seed: self.master_seed,
        }
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            epe: EpeModel::new(self.meef).expect("validated meef"),
            ..self.sampler
        }
    }

    fn split_seed(&self) -> u64 {
        self.split
            .seed
            .unwrap_or_else(|| derive_seed(&[b"split", &self.master_seed.to_le_bytes()]))
    }
}

fn noise_seed(master: u64, image_id: &str) -> u64 {
    derive_seed(&[b"render", &master.to_le_bytes(), image_id.as_bytes()])
}

/// Per-class instance and image counts of one split.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub layouts: usize,
    pub images: usize,
    pub defect_images: usize,
    pub raw_images: usize,
    pub instances: BTreeMap<Category, usize>,
    pub total_instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub format_version: u32,
    pub config_sha256: String,
    pub layouts: usize,
    pub jobs: usize,
    pub accepted: usize,
    pub skipped: usize,
    pub excluded_empty_diff: usize,
    pub discarded_speckle: usize,
    pub records_by_class: BTreeMap<String, usize>,
    pub splits: BTreeMap<Split, SplitSummary>,
    pub total: SplitSummary,
    /// Pairs with a measurable contour shift inside the window.
    pub epe_pairs: usize,
    pub spearman_delta_b_vs_epe: Option<f64>,
}

impl GenerateSummary {
    pub fn table(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{:<8}{:>8}{:>9}{:>8}{:>8}{:>8}{:>15}{:>11}",
            "split", "layouts", "images", "bridge", "burr", "pinch", "contamination", "instances"
        )
        .unwrap();
        let rows = self
            .splits
            .iter()
            .map(|(s, v)| (s.as_str(), v))
            .chain(std::iter::once(("total", &self.total)));
        for (name, s) in rows {
            let n = |c| s.instances.get(&c).copied().unwrap_or(0);
            writeln!(
                out,
                "{:<8}{:>8}{:>9}{:>8}{:>8}{:>8}{:>15}{:>11}",
                name,
                s.layouts,
                s.images,
                n(Category::Bridge),
                n(Category::Burr),
                n(Category::Pinch),
                n(Category::Contamination),
                s.total_instances
            )
            .unwrap();
        }
        writeln!(
            out,
            "\njobs {}  accepted {}  skipped {}  excluded (empty diff) {}  speckle discarded {}",
            self.jobs, self.accepted, self.skipped, self.excluded_empty_diff, self.discarded_speckle
        )
        .unwrap();
        match self.spearman_delta_b_vs_epe {
            Some(rho) => writeln!(out, "spearman rho(|db_max|, measured |epe|) = {rho:.4} over {} pairs", self.epe_pairs),
            None => writeln!(out, "spearman rho undefined over {} pairs", self.epe_pairs),
        }
        .unwrap();
        out
    }
}

#[derive(Debug, Clone, Serialize)]
struct ExcludedPair {
    image_id: String,
    base_layout_id: String,
    reason: String,
    discarded_components: usize,
}

struct PairOutcome {
    instances: Result<Vec<AnnotationInstance>, ExcludedPair>,
    discarded: usize,
    measured_epe: Option<f64>,
}

fn render_checked(a: &BinaryLayout, cfg: &PipelineConfig, id: &str) -> Result<RenderedImage, PipelineError> {
    render(a, &cfg.render, noise_seed(cfg.master_seed, id))
        .map(|r| r.with_source(id))
        .map_err(|source| PipelineError::Render {
            context: id.to_string(),
            source,
        })
}

fn write_render(dir: &Path, id: &str, img: &RenderedImage, gray: bool) -> Result<(), PipelineError> {
    write_file("export", &dir.join(format!("{id}.pbm")), pnm::encode_pbm(&img.binary))?;
    if gray {
        write_file(
            "export",
            &dir.join(format!("{id}.pgm")),
            pnm::encode_gray_pgm(img.width, img.height, &img.gray),
        )?;
    }
    Ok(())
}

fn process_pair(
    cfg: &PipelineConfig,
    base: &RenderedImage,
    a_prime: &BinaryLayout,
    record: &DefectRecord,
    image_dir: &Path,
) -> Result<PairOutcome, PipelineError> {
    let img = render_checked(a_prime, cfg, &record.id)?;
    let annotate_err = |source| PipelineError::Annotate {
        context: record.id.clone(),
        source,
    };
    let diff = diff_mask(base, &img).map_err(annotate_err)?;
    let measured_epe = measure_epe(base, &img, record, &cfg.render).ok();
    let (instances, discarded) = match extract_instances(&diff, record, &record.id, &cfg.annotate) {
        Ok(ex) => {
            write_render(image_dir, &record.id, &img, cfg.export.write_gray)?;
            (Ok(ex.instances), ex.discarded.len())
        }
        Err(AnnotateError::EmptyAnnotation { discarded, .. }) => (
            Err(ExcludedPair {
                image_id: record.id.clone(),
                base_layout_id: record.base_layout_id.clone(),
                reason: "empty diff after min_area filtering".into(),
                discarded_components: discarded,
            }),
            discarded,
        ),
        Err(e) => return Err(annotate_err(e)),
    };
    Ok(PairOutcome {
        instances,
        discarded,
        measured_epe,
    })
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    items.iter().map(|i| to_sorted_json(i) + "\n").collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

/// Run library -> plan -> execute -> render -> annotate -> export into
/// `out_dir`. `workers = None` uses every available core; the artifacts do
/// not depend on it.
pub fn run_generate(cfg: &PipelineConfig, out_dir: &Path, workers: Option<usize>) -> Result<GenerateSummary, PipelineError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))?;
    pool.install(|| generate_inner(cfg, out_dir))
}

fn generate_inner(cfg: &PipelineConfig, out_dir: &Path) -> Result<GenerateSummary, PipelineError> {
    let image_dir = out_dir.join("images");
    fs::create_dir_all(&image_dir).map_err(io("export", &image_dir))?;
    write_file("export", &out_dir.join("config.toml"), cfg.provenance_toml())?;

    let library = build_library(&cfg.library_config())?;
    write_library(&out_dir.join("library"), &library)?;
    let plan_cfg = PlanConfig {
        counts: cfg.plan.counts,
        master_seed: cfg.master_seed,
        resample_bumps: cfg.plan.resample_bumps,
    };
    let plan = generate_plan(library, &plan_cfg, cfg.sampler_config());
    let outcome = execute_plan(&plan);

    let raw_ids: Vec<String> = plan.library.iter().map(|e| format!("{}-raw", e.spec.id)).collect();
    let bases: Vec<RenderedImage> = plan
        .library
        .par_iter()
        .zip(raw_ids.par_iter())
        .map(|(entry, id)| {
            let img = render_checked(&entry.layout, cfg, id)?;
            write_render(&image_dir, id, &img, cfg.export.write_gray)?;
            Ok(img)
        })
        .collect::<Result<_, PipelineError>>()?;
    let layout_index: BTreeMap<&str, usize> =
        plan.library.iter().enumerate().map(|(i, e)| (e.spec.id.as_str(), i)).collect();

    let pairs: Vec<PairOutcome> = outcome
        .accepted
        .par_iter()
        .map(|(a_prime, record)| {
            let base = &bases[layout_index[record.base_layout_id.as_str()]];
            process_pair(cfg, base, a_prime, record, &image_dir)
        })
        .collect::<Result<_, PipelineError>>()?;
    drop(bases);

    let records: Vec<&DefectRecord> = outcome.accepted.iter().map(|(_, r)| r).collect();
    write_records(&out_dir.join("records.jsonl"), &records)?;
    write_file("injection", &out_dir.join("skips.jsonl"), jsonl::<SkippedJob>(&outcome.skipped))?;
    let excluded: Vec<ExcludedPair> = pairs.iter().filter_map(|p| p.instances.as_ref().err().cloned()).collect();
    write_file("annotate", &out_dir.join("excluded.jsonl"), jsonl(&excluded))?;

    // images per layout: one raw plus every retained pair
    let mut per_layout: Vec<(String, usize)> = plan.library.iter().map(|e| (e.spec.id.clone(), 1)).collect();
    for ((_, record), pair) in outcome.accepted.iter().zip(&pairs) {
        if pair.instances.is_ok() {
            per_layout[layout_index[record.base_layout_id.as_str()]].1 += 1;
        }
    }
    let assignment = split_layouts(&per_layout, cfg.split.ratios, cfg.split_seed())?;

    let n = cfg.render.output_size;
    let entry = |id: &str, layout: &str, defect: Option<&str>| ImageEntry {
        id: id.to_string(),
        file_name: format!("images/{id}.pbm"),
        width: n,
        height: n,
        base_layout_id: layout.to_string(),
        defect_id: defect.map(str::to_string),
        split: assignment[layout],
        session: None,
    };
    let mut manifest = DatasetManifest::new(cfg.split.ratios);
    let mut pending: Vec<Vec<&[AnnotationInstance]>> = vec![Vec::new(); plan.library.len()];
    for ((_, record), pair) in outcome.accepted.iter().zip(&pairs) {
        if let Ok(instances) = &pair.instances {
            pending[layout_index[record.base_layout_id.as_str()]].push(instances);
        }
    }
    for (i, e) in plan.library.iter().enumerate() {
        manifest.images.push(entry(&raw_ids[i], &e.spec.id, None));
        for instances in &pending[i] {
            let id = &instances[0].image_id;
            manifest.images.push(entry(id, &e.spec.id, Some(id)));
            manifest.add_instances(instances);
        }
    }
    manifest.canonicalize();
    export_coco(&manifest, out_dir)?;
    let stats = dataset_stats(&manifest, &cfg.stats);
    stats.write_csv(&out_dir.join("stats"))?;

    let mut epe_csv = String::from("id,group,class,r,delta_b_max_layout_px,predicted_epe_max_layout_px,measured_epe_output_px\n");
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for ((_, record), pair) in outcome.accepted.iter().zip(&pairs) {
        writeln!(
            epe_csv,
            "{},{},{},{},{},{},{}",
            record.id,
            record.group.as_str(),
            record.class.as_str(),
            record.spec.se.scale(),
            record.delta_b_max,
            record.predicted_epe_max,
            fmt_opt(pair.measured_epe)
        )
        .unwrap();
        if let Some(m) = pair.measured_epe {
            xs.push(record.delta_b_max.abs());
            ys.push(m.abs());
        }
    }
    write_file("renderer", &out_dir.join("epe.csv"), epe_csv)?;

    let mut records_by_class = BTreeMap::new();
    for r in &records {
        *records_by_class.entry(r.class.as_str().to_string()).or_insert(0) += 1;
    }
    let summary = GenerateSummary {
        format_version: FORMAT_VERSION,
        config_sha256: cfg.config_hash(),
        layouts: plan.library.len(),
        jobs: plan.jobs.len(),
        accepted: outcome.accepted.len(),
        skipped: outcome.skipped.len(),
        excluded_empty_diff: excluded.len(),
        discarded_speckle: pairs.iter().map(|p| p.discarded).sum(),
        records_by_class,
        splits: split_summaries(&manifest, &assignment),
        total: total_summary(&manifest, &assignment),
        epe_pairs: xs.len(),
        spearman_delta_b_vs_epe: spearman_rho(&xs, &ys),
    };
    write_file("export", &out_dir.join("summary.json"), to_sorted_json(&summary) + "\n")?;
    write_file("export", &out_dir.join("summary.txt"), summary.table())?;
    Ok(summary)
}

fn summarize(
    manifest: &DatasetManifest,
    assignment: &BTreeMap<String, Split>,
    keep: impl Fn(Split) -> bool,
) -> SplitSummary {
    let mut s = SplitSummary {
        layouts: assignment.values().filter(|&&v| keep(v)).count(),
        instances: Category::ALL.iter().map(|&c| (c, 0)).collect(),
        ..SplitSummary::default()
    };
    let mut split_of = BTreeMap::new();
    for im in manifest.images.iter().filter(|im| keep(im.split)) {
        s.images += 1;
        if im.defect_id.is_some() {
            s.defect_images += 1;
        } else {
            s.raw_images += 1;
        }
        split_of.insert(im.id.as_str(), im.split);
    }
    for a in manifest.annotations.iter().filter(|a| split_of.contains_key(a.image_id.as_str())) {
        let c = Category::from_id(a.category_id).expect("validated category");
        *s.instances.get_mut(&c).unwrap() += 1;
        s.total_instances += 1;
    }
    s
}

fn split_summaries(manifest: &DatasetManifest, assignment: &BTreeMap<String, Split>) -> BTreeMap<Split, SplitSummary> {
    Split::ALL
        .iter()
        .map(|&sp| (sp, summarize(manifest, assignment, |v| v == sp)))
        .collect()
}

fn total_summary(manifest: &DatasetManifest, assignment: &BTreeMap<String, Split>) -> SplitSummary {
    summarize(manifest, assignment, |_| true)
}

/// Recompute the statistics CSVs of an exported dataset into `out`.
pub fn run_stats(dataset_dir: &Path, cfg: &StatsConfig, out: &Path) -> Result<StatsReport, PipelineError> {
    let manifest = read_coco(dataset_dir)?;
    let report = dataset_stats(&manifest, cfg);
    report.write_csv(out)?;
    Ok(report)
}

/// Read a layout from PGM (P5) or PBM (P4).
pub fn read_layout(path: &Path) -> Result<BinaryLayout, PipelineError> {
    let bytes = fs::read(path).map_err(io("layout", path))?;
    let decoded = if bytes.starts_with(b"P4") {
        pnm::decode_pbm(&bytes)
    } else {
        pnm::decode_layout_pgm(&bytes)
    };
    decoded.map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

/// Render one layout file. Writes `<out>.pbm`, plus `<out>.pgm` if `gray`.
pub fn render_one(
    layout_path: &Path,
    cfg: &RenderConfig,
    noise_seed: u64,
    out: &Path,
    gray: bool,
) -> Result<RenderedImage, PipelineError> {
    let a = read_layout(layout_path)?;
    let img = render(&a, cfg, noise_seed).map_err(|source| PipelineError::Render {
        context: layout_path.display().to_string(),
        source,
    })?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io("renderer", parent))?;
    }
    write_file("renderer", &out.with_extension("pbm"), pnm::encode_pbm(&img.binary))?;
    if gray {
        write_file("renderer", &out.with_extension("pgm"), pnm::encode_gray_pgm(img.width, img.height, &img.gray))?;
    }
    Ok(img)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordInspection {
    pub id: String,
    pub base_layout_id: String,
    pub group: String,
    pub stored_class: String,
    pub stored_delta_k: i64,
    pub recomputed_class: String,
    pub recomputed_delta_k: i64,
    pub irregularity: f64,
    pub changed_area: usize,
    pub verified: bool,
}

/// Re-derive a stored record from the dataset's library and provenance file.
pub fn inspect_record(dataset_dir: &Path, record_id: &str) -> Result<RecordInspection, PipelineError> {
    let cfg = PipelineConfig::load(&dataset_dir.join("config.toml"))?;
    let records = read_records(&dataset_dir.join("records.jsonl"))?;
    let record = records
        .into_iter()
        .find(|r| r.id == record_id)
        .ok_or_else(|| PipelineError::Config(format!("no record `{record_id}` in {}", dataset_dir.display())))?;
    let a = read_layout(&dataset_dir.join("library").join(format!("{}.pgm", record.base_layout_id)))?;
    let a_prime = perturb(&a, &record.spec)?;
    let sig = signature(&a, &a_prime, &record.spec, None).expect("perturb preserves dimensions");
    let sampler = cfg.sampler_config();
    let recomputed = crate::topology::classify_signature(&sig, &sampler.classify);
    Ok(RecordInspection {
        id: record.id.clone(),
        base_layout_id: record.base_layout_id.clone(),
        group: record.group.as_str().to_string(),
        stored_class: record.class.as_str().to_string(),
        stored_delta_k: record.delta_k,
        recomputed_class: recomputed.as_str().to_string(),
        recomputed_delta_k: delta_k(&a, &a_prime).expect("same dims"),
        irregularity: sig.irregularity,
        changed_area: sig.changed_area,
        verified: verify_record(&a, &record, &sampler)?,
    })
}

//! Batch segmentation of an annotation set and the artifacts it leaves behind.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use boxseg_core::{
    evaluate_grouped, segment_image, BinaryMask, EvolutionConfig, EvolutionTrace, Grid, Metrics, Pairing,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotations::{Annotation, AnnotationSet, ImageInfo};
use crate::error::{CliError, Result};
use crate::rle::{self, Rle};
use crate::{config, features, imageio};

#[derive(Debug, Clone)]
pub struct BatchInput {
    pub images: PathBuf,
    pub annotations: PathBuf,
    pub features: Option<PathBuf>,
    pub config_file: Option<PathBuf>,
    pub config: EvolutionConfig,
    pub out: PathBuf,
    pub jobs: usize,
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub image_id: u64,
    pub annotation_id: u64,
    pub file_name: String,
    /// `[x, y, w, h]` of the box actually used.
    pub bbox: [usize; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_id: Option<u64>,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Empty for failed instances.
    pub segmentation: Rle,
    pub steps: usize,
    pub converged: bool,
    pub final_energy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub instances: Vec<InstanceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean_iou: f64,
    pub abo: f64,
    pub ap: BTreeMap<String, f64>,
    pub num_gt: usize,
    pub num_pred: usize,
}

impl From<&Metrics> for MetricSummary {
    fn from(m: &Metrics) -> Self {
        Self {
            mean_iou: m.mean_iou,
            abo: m.abo,
            ap: m.ap.iter().map(|(t, v)| (format!("{t:.2}"), *v)).collect(),
            num_gt: m.num_gt,
            num_pred: m.num_pred,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    pub annotation_id: u64,
    pub mask: Option<String>,
    pub trace: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: BTreeMap<String, String>,
    /// SHA-256 of every input read, keyed by its name relative to its input root.
    pub inputs: BTreeMap<String, String>,
    pub results: String,
    pub outputs: Vec<OutputPaths>,
    pub metrics: Option<MetricSummary>,
    pub failed: usize,
}

#[derive(Debug)]
pub struct BatchReport {
    pub manifest: RunManifest,
    pub total: usize,
    pub failed: usize,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn read_hashed(path: &Path, key: String, inputs: &mut BTreeMap<String, String>) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    inputs.insert(key, sha256_hex(&bytes));
    Ok(bytes)
}

fn stem(file_name: &str) -> String {
    Path::new(file_name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| file_name.to_string())
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(CliError::io(path))
}

pub fn trace_csv(trace: &EvolutionTrace) -> String {
    let mut s = String::from("step,total,data_in,data_out,length,box,lcm,dt\n");
    for t in &trace.steps {
        let e = &t.energy;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            t.step, e.total, e.data_inside, e.data_outside, e.length, e.box_projection, e.lcm_consistency, t.dt
        );
    }
    s
}

struct LoadedImage {
    image: Grid,
    features: Option<Grid>,
}

fn load_image(input: &BatchInput, info: &ImageInfo, inputs: &mut BTreeMap<String, String>) -> Result<LoadedImage> {
    let path = input.images.join(&info.file_name);
    let bytes = read_hashed(&path, format!("images/{}", info.file_name), inputs)?;
    let decoded = image::load_from_memory(&bytes).map_err(|source| CliError::Image {
        path: path.clone(),
        source,
    })?;
    let image = imageio::to_grid(&decoded)?;
    if (image.height(), image.width()) != (info.height, info.width) {
        return Err(CliError::Format {
            path,
            msg: format!(
                "image is {}x{} but the annotations say {}x{}",
                image.height(),
                image.width(),
                info.height,
                info.width
            ),
        });
    }
    let features = match &input.features {
        None => None,
        Some(dir) => {
            let name = format!("{}.feat", stem(&info.file_name));
            let path = dir.join(&name);
            let bytes = read_hashed(&path, format!("features/{name}"), inputs)?;
            let grid = features::decode(&bytes).map_err(|msg| CliError::Format {
                path: path.clone(),
                msg,
            })?;
            if (grid.height(), grid.width()) != (info.height, info.width) {
                return Err(CliError::Format {
                    path,
                    msg: format!(
                        "features are {}x{} but the image is {}x{}",
                        grid.height(),
                        grid.width(),
                        info.height,
                        info.width
                    ),
                });
            }
            Some(grid)
        }
    };
    Ok(LoadedImage { image, features })
}

fn record(info: &ImageInfo, a: &Annotation) -> InstanceRecord {
    InstanceRecord {
        image_id: info.id,
        annotation_id: a.id,
        file_name: info.file_name.clone(),
        bbox: [a.bbox.x0, a.bbox.y0, a.bbox.width(), a.bbox.height()],
        category_id: a.category_id,
        status: "failed".into(),
        error: None,
        segmentation: rle::encode(&BinaryMask::zeros(info.height, info.width)),
        steps: 0,
        converged: false,
        final_energy: None,
    }
}

/// Segment every annotated box and write masks, results, traces, metrics and the manifest under `out`.
///
/// Failures are confined to their image or instance and counted in the report.
pub fn run_batch(input: &BatchInput) -> Result<BatchReport> {
    let mut inputs = BTreeMap::new();
    let ann_name = input
        .annotations
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "annotations".into());
    let ann_bytes = read_hashed(&input.annotations, ann_name, &mut inputs)?;
    let text = String::from_utf8(ann_bytes).map_err(|e| CliError::Format {
        path: input.annotations.clone(),
        msg: e.to_string(),
    })?;
    let set = AnnotationSet::from_json_str(&text).map_err(|errs| {
        CliError::Annotations(
            errs.into_iter()
                .map(|e| format!("{}: {e}", input.annotations.display()))
                .collect(),
        )
    })?;
    if let Some(p) = &input.config_file {
        let name = p
            .file_name()
            .map(|s| format!("config/{}", s.to_string_lossy()))
            .unwrap_or_else(|| "config".into());
        read_hashed(p, name, &mut inputs)?;
    }

    let masks_dir = input.out.join("masks");
    let traces_dir = input.out.join("traces");
    std::fs::create_dir_all(&masks_dir).map_err(CliError::io(&masks_dir))?;
    if input.trace {
        std::fs::create_dir_all(&traces_dir).map_err(CliError::io(&traces_dir))?;
    }

    let mut records = Vec::new();
    let mut outputs = Vec::new();
    let mut groups: Vec<(Vec<BinaryMask>, Vec<BinaryMask>)> = Vec::new();
    let mut failed = 0;
    for info in &set.images {
        let anns: Vec<&Annotation> = set.for_image(info.id).collect();
        if anns.is_empty() {
            continue;
        }
        let mut preds = vec![BinaryMask::zeros(info.height, info.width); anns.len()];
        match load_image(input, info, &mut inputs) {
            Err(e) => {
                for a in &anns {
                    let mut r = record(info, a);
                    r.error = Some(e.to_string());
                    records.push(r);
                    outputs.push(OutputPaths {
                        annotation_id: a.id,
                        mask: None,
                        trace: None,
                    });
                }
                failed += anns.len();
            }
            Ok(loaded) => {
                let boxes: Vec<_> = anns.iter().map(|a| a.bbox).collect();
                let results = segment_image(
                    &loaded.image,
                    &boxes,
                    loaded.features.as_ref(),
                    &input.config,
                    input.jobs,
                );
                for (i, (a, res)) in anns.iter().zip(results).enumerate() {
                    let base = format!("{}_{}", stem(&info.file_name), a.id);
                    let mut r = record(info, a);
                    let trace = match res {
                        Ok(out) => {
                            r.status = "ok".into();
                            r.segmentation = rle::encode(&out.mask);
                            r.steps = out.trace.steps.len();
                            r.converged = out.trace.converged();
                            r.final_energy = out.trace.steps.last().map(|s| s.energy.total);
                            preds[i] = out.mask;
                            out.trace
                        }
                        Err(f) => {
                            failed += 1;
                            r.error = Some(f.error.to_string());
                            r.steps = f.trace.steps.len();
                            f.trace
                        }
                    };
                    let mask_rel = format!("masks/{base}.png");
                    imageio::save_mask(&input.out.join(&mask_rel), &preds[i])?;
                    let trace_rel = if input.trace {
                        let rel = format!("traces/{base}.csv");
                        write(&input.out.join(&rel), trace_csv(&trace))?;
                        Some(rel)
                    } else {
                        None
                    };
                    outputs.push(OutputPaths {
                        annotation_id: a.id,
                        mask: Some(mask_rel),
                        trace: trace_rel,
                    });
                    records.push(r);
                }
            }
        }
        let (p, g): (Vec<_>, Vec<_>) = anns
            .iter()
            .zip(preds)
            .filter_map(|(a, p)| a.segmentation.clone().map(|g| (p, g)))
            .unzip();
        if !g.is_empty() {
            groups.push((p, g));
        }
    }

    let metrics = if groups.is_empty() {
        None
    } else {
        let refs: Vec<(&[BinaryMask], &[BinaryMask])> = groups.iter().map(|(p, g)| (&p[..], &g[..])).collect();
        let m = evaluate_grouped(&refs, Pairing::Aligned)?;
        let summary = MetricSummary::from(&m);
        let text = serde_json::to_string_pretty(&summary).expect("metrics serialize");
        write(&input.out.join("metrics.json"), text + "\n")?;
        Some(summary)
    };

    let total = records.len();
    let results = Results { instances: records };
    let text = serde_json::to_string_pretty(&results).expect("results serialize");
    write(&input.out.join("results.json"), text + "\n")?;

    let manifest = RunManifest {
        config: config::snapshot(&input.config)
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        inputs,
        results: "results.json".into(),
        outputs,
        metrics,
        failed,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write(&input.out.join("manifest.json"), text + "\n")?;
    Ok(BatchReport {
        manifest,
        total,
        failed,
    })
}

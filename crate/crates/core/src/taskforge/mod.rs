//! Task construction: backbone features → MAC descriptors → PCA → K-means.
//! Each cluster is one task; a query image resolves to the task whose
//! centroid is nearest to its descriptor.

mod backbone;
mod kmeans;
mod pca;

pub use backbone::{BackboneConfig, BackboneLayer, ConvBackbone, FeatureExtractor};
pub use kmeans::{kmeans, kmeans_with, KMeansFit, DEFAULT_MAX_ITER};
pub use pca::{fit_pca, PcaProjection};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::colorlab::ImageRGB;
use crate::{Error, Result};

/// `C×h×w` activations of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub image_id: String,
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub image_id: String,
    pub vector: Vec<f64>,
    /// Zero vector that could not be normalized; excluded from clustering and queries.
    pub degenerate: bool,
}

impl Descriptor {
    /// L2-normalize `vector`, flagging the all-zero case.
    pub fn normalized(image_id: &str, mut vector: Vec<f64>) -> Self {
        let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        let degenerate = norm == 0.0;
        if !degenerate {
            vector.iter_mut().for_each(|v| *v /= norm);
        }
        Descriptor {
            image_id: image_id.to_string(),
            vector,
            degenerate,
        }
    }
}

/// Per-channel spatial maximum followed by L2 normalization.
pub fn mac_descriptor(fm: &FeatureMap) -> Descriptor {
    let plane = fm.h * fm.w;
    let maxima = (0..fm.channels)
        .map(|c| {
            fm.values[c * plane..(c + 1) * plane]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Descriptor::normalized(&fm.image_id, maxima)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskCluster {
    pub cluster_id: usize,
    pub member_ids: Vec<String>,
    pub centroid: Vec<f64>,
}

/// Nearest centroid by Euclidean distance, lowest id on ties.
pub fn retrieve_cluster<'a>(q: &Descriptor, clusters: &'a [TaskCluster]) -> Result<&'a TaskCluster> {
    if clusters.is_empty() {
        return Err(Error::NoClusters);
    }
    if q.degenerate {
        return Err(Error::DegenerateDescriptor(q.image_id.clone()));
    }
    let mut best: Option<(&TaskCluster, f64)> = None;
    for c in clusters {
        if c.centroid.len() != q.vector.len() {
            return Err(Error::Length {
                expected: c.centroid.len(),
                actual: q.vector.len(),
            });
        }
        let d: f64 = c.centroid.iter().zip(&q.vector).map(|(a, b)| (a - b) * (a - b)).sum();
        let better = match best {
            None => true,
            Some((b, bd)) => d < bd || (d == bd && c.cluster_id < b.cluster_id),
        };
        if better {
            best = Some((c, d));
        }
    }
    Ok(best.expect("non-empty").0)
}

/// Which rendering of an image the backbone sees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorSource {
    /// Lightness only, so grayscale inputs resolve to tasks the same way
    /// training images do.
    #[default]
    Luminance,
    Rgb,
}

/// Everything needed to turn a new image into a task assignment.
#[derive(Clone, Debug)]
pub struct TaskSet {
    pub backbone: ConvBackbone,
    pub source: DescriptorSource,
    pub pca: PcaProjection,
    pub clusters: Vec<TaskCluster>,
    pub seed: u64,
    pub inertia_trace: Vec<f64>,
}

/// Raw (pre-PCA) MAC descriptor of `img`.
pub fn raw_descriptor(img: &ImageRGB, backbone: &impl FeatureExtractor, source: DescriptorSource) -> Result<Descriptor> {
    let fm = match source {
        DescriptorSource::Luminance => backbone.extract(&img.to_gray())?,
        DescriptorSource::Rgb => backbone.extract(img)?,
    };
    Ok(mac_descriptor(&fm))
}

impl TaskSet {
    /// Fit PCA and K-means on the non-degenerate training images.
    pub fn build(
        images: &[ImageRGB],
        backbone: ConvBackbone,
        source: DescriptorSource,
        pca_dim: usize,
        k: usize,
        seed: u64,
    ) -> Result<Self> {
        let raw = images
            .iter()
            .map(|img| raw_descriptor(img, &backbone, source))
            .collect::<Result<Vec<_>>>()?;
        let usable: Vec<&Descriptor> = raw.iter().filter(|d| !d.degenerate).collect();
        for d in raw.iter().filter(|d| d.degenerate) {
            log::warn!("excluding {}: degenerate MAC descriptor", d.image_id);
        }
        let samples: Vec<Vec<f64>> = usable.iter().map(|d| d.vector.clone()).collect();
        let pca = fit_pca(&samples, pca_dim)?;
        let projected = usable
            .iter()
            .map(|d| pca.project(&d.vector, &d.image_id))
            .collect::<Result<Vec<_>>>()?;
        let fit = kmeans(&projected, k, seed)?;
        Ok(TaskSet {
            backbone,
            source,
            pca,
            clusters: fit.clusters,
            seed,
            inertia_trace: fit.inertia_trace,
        })
    }

    /// Projected descriptor of any image, usable with [`retrieve_cluster`].
    pub fn describe(&self, img: &ImageRGB) -> Result<Descriptor> {
        let raw = raw_descriptor(img, &self.backbone, self.source)?;
        if raw.degenerate {
            return Ok(raw);
        }
        self.pca.project(&raw.vector, &img.id)
    }

    pub fn resolve(&self, img: &ImageRGB) -> Result<&TaskCluster> {
        retrieve_cluster(&self.describe(img)?, &self.clusters)
    }

    pub fn cluster_of(&self, id: &str) -> Option<usize> {
        self.clusters
            .iter()
            .find(|c| c.member_ids.iter().any(|m| m == id))
            .map(|c| c.cluster_id)
    }

    pub fn to_file(&self) -> ClusterFile {
        let assignments = self
            .clusters
            .iter()
            .flat_map(|c| c.member_ids.iter().map(move |id| (id.clone(), c.cluster_id)))
            .collect();
        ClusterFile {
            k: self.clusters.len(),
            seed: self.seed,
            pca_dim: self.pca.out_dim(),
            assignments,
            centroids: self.clusters.iter().map(|c| c.centroid.clone()).collect(),
            descriptor_source: self.source,
            pca: Some(self.pca.clone()),
            backbone: Some(self.backbone.clone()),
        }
    }

    pub fn from_file(file: ClusterFile) -> Result<Self> {
        let clusters = file.clusters()?;
        let pca = file
            .pca
            .ok_or_else(|| Error::Config("cluster file lacks the PCA projection".into()))?;
        let backbone = file
            .backbone
            .ok_or_else(|| Error::Config("cluster file lacks the backbone".into()))?;
        Ok(TaskSet {
            backbone,
            source: file.descriptor_source,
            pca,
            clusters,
            seed: file.seed,
            inertia_trace: Vec::new(),
        })
    }
}

/// Persisted cluster assignment. `pca` and `backbone` are carried along so
/// that unseen images can be resolved to a task later.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterFile {
    pub k: usize,
    pub seed: u64,
    pub pca_dim: usize,
    pub assignments: BTreeMap<String, usize>,
    pub centroids: Vec<Vec<f64>>,
    #[serde(default)]
    pub descriptor_source: DescriptorSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca: Option<PcaProjection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backbone: Option<ConvBackbone>,
}

impl ClusterFile {
    pub fn clusters(&self) -> Result<Vec<TaskCluster>> {
        if self.centroids.len() != self.k {
            return Err(Error::Config(format!(
                "cluster file declares k = {} but has {} centroids",
                self.k,
                self.centroids.len()
            )));
        }
        let mut clusters: Vec<TaskCluster> = self
            .centroids
            .iter()
            .enumerate()
            .map(|(i, c)| TaskCluster {
                cluster_id: i,
                member_ids: Vec::new(),
                centroid: c.clone(),
            })
            .collect();
        for (id, &c) in &self.assignments {
            clusters
                .get_mut(c)
                .ok_or_else(|| Error::Config(format!("{id} assigned to unknown cluster {c}")))?
                .member_ids
                .push(id.clone());
        }
        Ok(clusters)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::toy::toy_corpus;
    use crate::rng::substream;
    use rand::Rng as _;

    fn map(channels: usize, h: usize, w: usize, values: Vec<f64>) -> FeatureMap {
        FeatureMap {
            image_id: "x".into(),
            channels,
            h,
            w,
            values,
        }
    }

    #[test]
    fn mac_examples() {
        let d = mac_descriptor(&map(1, 2, 2, vec![5.0; 4]));
        assert_eq!(d.vector, vec![1.0]);
        let d = mac_descriptor(&map(2, 1, 3, vec![1.0, 3.0, 2.0, 4.0, 0.0, 1.0]));
        assert!((d.vector[0] - 0.6).abs() < 1e-15 && (d.vector[1] - 0.8).abs() < 1e-15);
        let d = mac_descriptor(&map(3, 2, 2, vec![0.0; 12]));
        assert!(d.degenerate);
        assert_eq!(d.vector, vec![0.0; 3]);
    }

    #[test]
    fn retrieval_prefers_nearest_then_lowest_id() {
        let clusters = vec![
            TaskCluster {
                cluster_id: 0,
                member_ids: vec!["a".into()],
                centroid: vec![1.0, 0.0],
            },
            TaskCluster {
                cluster_id: 1,
                member_ids: vec!["b".into()],
                centroid: vec![0.0, 1.0],
            },
        ];
        let q = |v: Vec<f64>| Descriptor {
            image_id: "q".into(),
            vector: v,
            degenerate: false,
        };
        assert_eq!(retrieve_cluster(&q(vec![0.0, 1.0]), &clusters).unwrap().cluster_id, 1);
        assert_eq!(retrieve_cluster(&q(vec![0.9, 0.1]), &clusters).unwrap().cluster_id, 0);
        assert_eq!(retrieve_cluster(&q(vec![0.8, 0.2]), &clusters).unwrap().cluster_id, 0);
        assert_eq!(retrieve_cluster(&q(vec![0.5, 0.5]), &clusters).unwrap().cluster_id, 0);
        let zero = Descriptor {
            degenerate: true,
            ..q(vec![0.0, 0.0])
        };
        assert!(matches!(retrieve_cluster(&zero, &clusters), Err(Error::DegenerateDescriptor(_))));
        assert!(matches!(retrieve_cluster(&q(vec![1.0, 0.0]), &[]), Err(Error::NoClusters)));
    }

    #[test]
    fn retrieval_matches_exhaustive_scan() {
        let mut rng = substream(12, "retrieve");
        let clusters: Vec<TaskCluster> = (0..9)
            .map(|i| TaskCluster {
                cluster_id: i,
                member_ids: vec![],
                centroid: (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            })
            .collect();
        for _ in 0..200 {
            let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dists: Vec<f64> = clusters
                .iter()
                .map(|c| c.centroid.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum())
                .collect();
            let mut want = 0;
            for i in 1..dists.len() {
                if dists[i] < dists[want] {
                    want = i;
                }
            }
            let q = Descriptor {
                image_id: "q".into(),
                vector: v,
                degenerate: false,
            };
            assert_eq!(retrieve_cluster(&q, &clusters).unwrap().cluster_id, want);
        }
    }

    #[test]
    fn task_set_partitions_and_survives_file_round_trip() {
        let images: Vec<ImageRGB> = toy_corpus(48, 16, 2).into_iter().map(|(i, _)| i).collect();
        let cfg = BackboneConfig {
            input_size: 16,
            widths: vec![8, 16],
            seed: 1,
        };
        let ts = TaskSet::build(&images, ConvBackbone::seeded(&cfg).unwrap(), DescriptorSource::Luminance, 8, 4, 3).unwrap();
        let mut all: Vec<String> = ts.clusters.iter().flat_map(|c| c.member_ids.clone()).collect();
        all.sort();
        let mut ids: Vec<String> = images.iter().map(|i| i.id.clone()).collect();
        ids.sort();
        assert_eq!(all, ids);
        assert!(ts.clusters.iter().all(|c| !c.member_ids.is_empty()));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clusters.json");
        ts.to_file().save(&path).unwrap();
        let file = ClusterFile::load(&path).unwrap();
        assert_eq!(file.k, 4);
        assert_eq!(file.assignments.len(), 48);
        let back = TaskSet::from_file(file).unwrap();
        for img in &images {
            assert_eq!(back.resolve(img).unwrap().cluster_id, ts.resolve(img).unwrap().cluster_id);
        }
        // converged K-means: every training image resolves to its own cluster
        for img in &images {
            assert_eq!(Some(ts.resolve(img).unwrap().cluster_id), ts.cluster_of(&img.id));
        }
    }
}

//! Instance and assignment files (JSON).
//!
//! Facilities are points `0..n_facilities`, clients follow. The metric is
//! either a full row-major `dist` matrix or a `graph` edge list whose
//! shortest paths define it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::centered::{build_centered_from_sources, CenteredInstance};
use crate::error::{CkmError, Result};
use crate::instance::{Assignment, Instance, Metric, PointId};

/// Largest point count accepted as a full matrix.
pub const MAX_MATRIX_POINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub k: usize,
    pub capacities: Vec<u32>,
    pub n_facilities: usize,
    pub n_clients: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<Vec<(usize, usize, f64)>>,
    /// Source facilities of a centered instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<usize>>,
}

impl InstanceFile {
    /// Matrix form of an instance in the conventional layout.
    pub fn from_instance(inst: &Instance) -> Result<Self> {
        let n_f = inst.facilities().len();
        let n_c = inst.clients().len();
        let layout_ok = inst.facilities().iter().enumerate().all(|(i, f)| f.id.0 == i)
            && inst.clients().iter().enumerate().all(|(j, c)| c.0 == n_f + j)
            && inst.metric().size() == n_f + n_c;
        if !layout_ok {
            return Err(CkmError::Structural(
                "only instances with facilities 0..n_f followed by clients can be written".into(),
            ));
        }
        Ok(Self {
            k: inst.k(),
            capacities: inst.facilities().iter().map(|f| f.capacity).collect(),
            n_facilities: n_f,
            n_clients: n_c,
            dist: Some(inst.metric().as_slice().to_vec()),
            graph: None,
            centers: None,
        })
    }

    /// The centered instance as a file: its `d_ℓ` over the base points plus the sources.
    pub fn from_centered(centered: &CenteredInstance) -> Result<Self> {
        let mut file = Self::from_instance(&centered.ell_instance())?;
        file.centers = Some(centered.sources().iter().map(|s| s.0).collect());
        Ok(file)
    }

    pub fn to_instance(&self) -> Result<Instance> {
        if self.capacities.len() != self.n_facilities {
            return Err(CkmError::Parse(format!(
                "field `capacities`: {} entries for n_facilities = {}",
                self.capacities.len(),
                self.n_facilities
            )));
        }
        let n = self.n_facilities + self.n_clients;
        let metric = match (&self.dist, &self.graph) {
            (Some(_), Some(_)) => {
                return Err(CkmError::Parse("fields `dist` and `graph` are mutually exclusive".into()))
            }
            (None, None) => return Err(CkmError::Parse("one of the fields `dist` or `graph` is required".into())),
            (Some(dist), None) => {
                if n > MAX_MATRIX_POINTS {
                    return Err(CkmError::RefusedScale(format!(
                        "full matrices are accepted up to {MAX_MATRIX_POINTS} points; use `graph` for {n}"
                    )));
                }
                if dist.len() != n * n {
                    return Err(CkmError::Parse(format!("field `dist`: expected {} entries, found {}", n * n, dist.len())));
                }
                Metric::from_matrix(n, dist.clone())?
            }
            (None, Some(edges)) => {
                if let Some(&(u, v, _)) = edges.iter().find(|e| e.0 >= n || e.1 >= n) {
                    return Err(CkmError::Parse(format!("field `graph`: edge ({u}, {v}) outside 0..{n}")));
                }
                let edges: Vec<_> = edges.iter().map(|&(u, v, w)| (PointId(u), PointId(v), w)).collect();
                Metric::from_weighted_graph(n, &edges)?
            }
        };
        Instance::from_layout(metric, &self.capacities, self.n_clients, self.k)
    }

    /// The centered instance described by `centers`, if present.
    pub fn to_centered(&self) -> Result<Option<CenteredInstance>> {
        let Some(centers) = &self.centers else { return Ok(None) };
        let inst = self.to_instance()?;
        if let Some(&c) = centers.iter().find(|&&c| c >= self.n_facilities) {
            return Err(CkmError::Parse(format!("field `centers`: {c} is not a facility")));
        }
        let sources: Vec<PointId> = centers.iter().map(|&c| PointId(c)).collect();
        build_centered_from_sources(&inst, &sources).map(Some)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

pub fn read_instance_file(path: &Path) -> Result<InstanceFile> {
    InstanceFile::parse(&fs::read_to_string(path)?)
}

pub fn read_instance(path: &Path) -> Result<Instance> {
    read_instance_file(path)?.to_instance()
}

pub fn write_instance(path: &Path, inst: &Instance) -> Result<()> {
    fs::write(path, InstanceFile::from_instance(inst)?.to_json())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentFile {
    pub phi: Vec<usize>,
}

impl AssignmentFile {
    pub fn from_assignment(a: &Assignment) -> Self {
        Self { phi: a.phi.iter().map(|f| f.0).collect() }
    }

    /// The assignment of `inst`'s clients, in order.
    pub fn to_assignment(&self, inst: &Instance) -> Result<Assignment> {
        if self.phi.len() != inst.clients().len() {
            return Err(CkmError::Parse(format!(
                "field `phi`: {} entries for {} clients",
                self.phi.len(),
                inst.clients().len()
            )));
        }
        let phi = self.phi.iter().map(|&f| PointId(f)).collect();
        Ok(Assignment::new(inst.clients().to_vec(), phi, &[]))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }
}

pub fn write_assignment(path: &Path, a: &Assignment) -> Result<()> {
    fs::write(path, AssignmentFile::from_assignment(a).to_json())?;
    Ok(())
}

pub fn read_assignment(path: &Path, inst: &Instance) -> Result<Assignment> {
    AssignmentFile::parse(&fs::read_to_string(path)?)?.to_assignment(inst)
}

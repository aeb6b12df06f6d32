//! Trained offline dataset with lossless on-disk persistence.
//!
//! A library bundles everything the online solver needs: the reference
//! meshes (rebuilt deterministically from their parameters), the material,
//! the trained port bases, and the per-component interface functions,
//! stress-gradient tables, and unit-density Schur contributions. Matrices
//! round-trip bit-exactly through the binary container of [`crate::storage`].

use std::path::Path;

use crate::error::{Error, Result};
use crate::fem::Material;
use crate::mesh::{ComponentSet, ElementOrder, ALL_KINDS};
use crate::offline::{ComponentOffline, ModeIndex, OfflineSet, PortBasisSet};
use crate::port_basis::build_port_basis;
use crate::storage::{
    put_f64, put_f64_vec, put_index_vec, put_matrix, put_u64, Container, Reader,
};
use crate::training::{train_port_bases, TrainingConfig, TrainingReport};

pub const LIBRARY_VERSION: u32 = 1;

/// Offline dataset plus the model it was built for.
pub struct ComponentLibrary {
    pub set: ComponentSet,
    pub material: Material,
    pub offline: OfflineSet,
    pub report: TrainingReport,
}

impl ComponentLibrary {
    /// Trains reduced port bases and assembles all offline data.
    pub fn train(set: ComponentSet, material: Material, config: &TrainingConfig) -> Result<Self> {
        let (bases, report) = train_port_bases(&set, &material, config)?;
        let offline = OfflineSet::build(&set, &material, bases)?;
        Ok(ComponentLibrary {
            set,
            material,
            offline,
            report,
        })
    }

    /// Untruncated library: exact static condensation, no training.
    pub fn full(set: ComponentSet, material: Material) -> Result<Self> {
        let bases = PortBasisSet::full(set.order, set.port_res, set.cell_size / 3.0)?;
        let n = bases.basis1d.n_nodes();
        let report = TrainingReport {
            n_snapshots_per_pair: 0,
            eta: 0.0,
            seed: 0,
            energy_fraction: 1.0,
            dims: [[n; 2]; 2],
            snapshot_counts: [0; 2],
        };
        let offline = OfflineSet::build(&set, &material, bases)?;
        Ok(ComponentLibrary {
            set,
            material,
            offline,
            report,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut c = Container::new();

        let mut meta = Vec::new();
        put_u64(&mut meta, order_code(self.set.order));
        put_u64(&mut meta, self.set.port_res as u64);
        put_f64(&mut meta, self.set.cell_size);
        put_f64(&mut meta, self.set.thickness);
        put_f64(&mut meta, self.material.youngs);
        put_f64(&mut meta, self.material.poisson);
        c.push("meta", meta);

        let mut prov = Vec::new();
        put_u64(&mut prov, self.report.n_snapshots_per_pair as u64);
        put_f64(&mut prov, self.report.eta);
        put_u64(&mut prov, self.report.seed);
        put_f64(&mut prov, self.report.energy_fraction);
        for row in &self.report.dims {
            for &d in row {
                put_u64(&mut prov, d as u64);
            }
        }
        for &s in &self.report.snapshot_counts {
            put_u64(&mut prov, s as u64);
        }
        c.push("provenance", prov);

        let mut bases = Vec::new();
        for class in &self.offline.bases.modes {
            for comp in class {
                put_matrix(&mut bases, comp);
            }
        }
        c.push("bases", bases);

        let (mut ifuncs, mut grads, mut schur, mut quad, mut layout) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for &kind in &ALL_KINDS {
            let off = self.offline.component(kind);
            put_matrix(&mut ifuncs, &off.phi);
            for g in &off.grads {
                put_matrix(&mut grads, g);
            }
            put_matrix(&mut schur, &off.a0);
            put_f64_vec(&mut quad, &off.qp_weights);
            put_index_vec(&mut quad, &off.qp_element);
            put_index_vec(&mut layout, &off.port_offsets);
            let flat: Vec<usize> = off
                .mode_index
                .iter()
                .flat_map(|mi| [mi.port, mi.comp, mi.mode])
                .collect();
            put_index_vec(&mut layout, &flat);
        }
        c.push("interface-functions", ifuncs);
        c.push("grad-table", grads);
        c.push("schur", schur);
        c.push("quadrature", quad);
        c.push("mode-layout", layout);

        c.write(path, LIBRARY_VERSION)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = Container::read(path, LIBRARY_VERSION)?;

        let mut meta = Reader::new(c.get("meta")?);
        let order = match meta.u64()? {
            1 => ElementOrder::Linear,
            2 => ElementOrder::Quadratic,
            other => {
                return Err(Error::LibraryFormat(format!(
                    "unknown element order code {other}"
                )))
            }
        };
        let port_res = meta.u64()? as usize;
        let cell_size = meta.f64()?;
        let thickness = meta.f64()?;
        let material = Material::new(meta.f64()?, meta.f64()?)?;
        let set = ComponentSet::build(order, port_res, cell_size, thickness)?;

        let mut prov = Reader::new(c.get("provenance")?);
        let n_snapshots_per_pair = prov.u64()? as usize;
        let eta = prov.f64()?;
        let seed = prov.u64()?;
        let energy_fraction = prov.f64()?;
        let mut dims = [[0usize; 2]; 2];
        for row in &mut dims {
            for d in row {
                *d = prov.u64()? as usize;
            }
        }
        let mut snapshot_counts = [0usize; 2];
        for s in &mut snapshot_counts {
            *s = prov.u64()? as usize;
        }
        let report = TrainingReport {
            n_snapshots_per_pair,
            eta,
            seed,
            energy_fraction,
            dims,
            snapshot_counts,
        };

        let basis1d = build_port_basis(order, port_res, cell_size / 3.0)?;
        let mut br = Reader::new(c.get("bases")?);
        let m00 = br.matrix()?;
        let m01 = br.matrix()?;
        let m10 = br.matrix()?;
        let m11 = br.matrix()?;
        for m in [&m00, &m01, &m10, &m11] {
            if m.nrows() != basis1d.n_nodes() {
                return Err(Error::LibraryFormat("port basis row mismatch".into()));
            }
        }
        let bases = PortBasisSet {
            basis1d,
            modes: [[m00, m01], [m10, m11]],
        };

        let mut ifuncs = Reader::new(c.get("interface-functions")?);
        let mut grads = Reader::new(c.get("grad-table")?);
        let mut schur = Reader::new(c.get("schur")?);
        let mut quad = Reader::new(c.get("quadrature")?);
        let mut layout = Reader::new(c.get("mode-layout")?);
        let mut components = Vec::with_capacity(ALL_KINDS.len());
        for &kind in &ALL_KINDS {
            let phi = ifuncs.matrix()?;
            let g = [
                grads.matrix()?,
                grads.matrix()?,
                grads.matrix()?,
                grads.matrix()?,
            ];
            let a0 = schur.matrix()?;
            let qp_weights = quad.f64_vec()?;
            let qp_element = quad.index_vec()?;
            let port_offsets = layout.index_vec()?;
            let flat = layout.index_vec()?;
            if flat.len() % 3 != 0 {
                return Err(Error::LibraryFormat("mode index not triples".into()));
            }
            let mode_index: Vec<ModeIndex> = flat
                .chunks_exact(3)
                .map(|t| ModeIndex {
                    port: t[0],
                    comp: t[1],
                    mode: t[2],
                })
                .collect();

            let comp = set.component(kind);
            let n_modes = mode_index.len();
            let shape_ok = phi.nrows() == comp.n_dofs()
                && phi.ncols() == n_modes
                && a0.nrows() == n_modes
                && a0.ncols() == n_modes
                && g.iter().all(|m| {
                    m.nrows() == qp_weights.len() && m.ncols() == n_modes
                })
                && qp_element.len() == qp_weights.len();
            if !shape_ok {
                return Err(Error::LibraryFormat(format!(
                    "inconsistent record shapes for component {}",
                    kind.code()
                )));
            }
            components.push(ComponentOffline {
                kind,
                mode_index,
                port_offsets,
                phi,
                a0,
                grads: g,
                qp_weights,
                qp_element,
            });
        }
        let offline = OfflineSet::from_parts(bases, components)?;
        Ok(ComponentLibrary {
            set,
            material,
            offline,
            report,
        })
    }
}

fn order_code(order: ElementOrder) -> u64 {
    match order {
        ElementOrder::Linear => 1,
        ElementOrder::Quadratic => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::file_checksum;

    fn mat() -> Material {
        Material::new(113.8e9, 0.34).unwrap()
    }

    fn tiny_config(seed: u64) -> TrainingConfig {
        TrainingConfig {
            n_snapshots: 12,
            eta: 10.0,
            seed,
            energy_fraction: 0.999,
        }
    }

    #[test]
    fn save_load_save_is_byte_identical_and_lossless() {
        let set = ComponentSet::build(ElementOrder::Quadratic, 1, 0.0625, 0.05).unwrap();
        let lib = ComponentLibrary::train(set, mat(), &tiny_config(7)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("lib1.bin");
        let p2 = dir.path().join("lib2.bin");
        lib.save(&p1).unwrap();
        let loaded = ComponentLibrary::load(&p1).unwrap();
        loaded.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

        // matrices survive exactly
        for &kind in &ALL_KINDS {
            let a = lib.offline.component(kind);
            let b = loaded.offline.component(kind);
            assert_eq!(a.phi, b.phi);
            assert_eq!(a.a0, b.a0);
            assert_eq!(a.grads, b.grads);
            assert_eq!(a.qp_weights, b.qp_weights);
            assert_eq!(a.qp_element, b.qp_element);
            assert_eq!(a.port_offsets, b.port_offsets);
        }
        for ci in 0..2 {
            for comp in 0..2 {
                assert_eq!(
                    lib.offline.bases.modes[ci][comp],
                    loaded.offline.bases.modes[ci][comp]
                );
            }
        }
        assert_eq!(lib.report.seed, loaded.report.seed);
        assert_eq!(lib.report.dims, loaded.report.dims);
        assert_eq!(loaded.set.cell_size, 0.0625);
        assert_eq!(loaded.material.youngs, 113.8e9);
    }

    #[test]
    fn different_seeds_change_the_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let mut sums = Vec::new();
        for seed in [1, 2] {
            let set = ComponentSet::build(ElementOrder::Linear, 1, 0.0625, 0.05).unwrap();
            let lib = ComponentLibrary::train(set, mat(), &tiny_config(seed)).unwrap();
            let p = dir.path().join(format!("lib{seed}.bin"));
            lib.save(&p).unwrap();
            sums.push(file_checksum(&p).unwrap());
        }
        assert_ne!(sums[0], sums[1]);
        assert_eq!(sums[0].len(), 64);
    }

    #[test]
    fn full_library_reports_untrained_provenance() {
        let set = ComponentSet::build(ElementOrder::Linear, 1, 0.0625, 0.05).unwrap();
        let lib = ComponentLibrary::full(set, mat()).unwrap();
        assert!(lib.offline.bases.is_full());
        assert_eq!(lib.report.n_snapshots_per_pair, 0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("full.bin");
        lib.save(&p).unwrap();
        let loaded = ComponentLibrary::load(&p).unwrap();
        assert!(loaded.offline.bases.is_full());
    }

    #[test]
    fn truncated_records_are_rejected() {
        let set = ComponentSet::build(ElementOrder::Linear, 1, 0.0625, 0.05).unwrap();
        let lib = ComponentLibrary::full(set, mat()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lib.bin");
        lib.save(&p).unwrap();
        // rebuild the container with one section payload cut short: the
        // checksum is fresh, so the failure must come from record parsing
        let c = Container::read(&p, LIBRARY_VERSION).unwrap();
        let mut broken = Container::new();
        for name in c.section_names() {
            let payload = c.get(name).unwrap();
            let cut = if name == "schur" {
                &payload[..payload.len() - 8]
            } else {
                payload
            };
            broken.push(name, cut.to_vec());
        }
        broken.write(&p, LIBRARY_VERSION).unwrap();
        assert!(matches!(
            ComponentLibrary::load(&p),
            Err(Error::LibraryFormat(_))
        ));
    }
}

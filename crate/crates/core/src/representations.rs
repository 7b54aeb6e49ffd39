//! Fairness representations: one mean descriptor per demographic group.
//!
//! Each group's representation is the componentwise mean of its members'
//! vectors, optionally computed from a uniform sample without replacement.
//! Groups are sampled independently: group `i` (in mapping order) draws from
//! ChaCha8 stream `i` of the supplied seed, so adding a group never perturbs
//! the draws of the others.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::catalog::Catalog;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessRepresentation {
    pub group: String,
    pub vector: Vec<f64>,
    pub sample_size: usize,
    pub sampling_fraction: f64,
    pub seed: u64,
}

impl FairnessRepresentation {
    /// A representation supplied from outside (e.g. loaded from a file
    /// without sampling metadata): treated as a full-group mean.
    pub fn external(group: impl Into<String>, vector: Vec<f64>) -> Self {
        Self { group: group.into(), vector, sample_size: 1, sampling_fraction: 1.0, seed: 0 }
    }
}

/// The set of fairness representations, one per group.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSet {
    reps: Vec<FairnessRepresentation>,
}

impl RepresentationSet {
    pub fn new(reps: Vec<FairnessRepresentation>) -> Result<Self> {
        let dim = reps.first().ok_or(Error::EmptyRepresentations)?.vector.len();
        for (i, rep) in reps.iter().enumerate() {
            if rep.vector.len() != dim || dim == 0 {
                return Err(Error::DimensionMismatch {
                    id: alloc::format!("group:{}", rep.group),
                    expected: dim,
                    found: rep.vector.len(),
                });
            }
            if let Some(index) = rep.vector.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { id: alloc::format!("group:{}", rep.group), index });
            }
            if rep.sample_size == 0 {
                return Err(Error::EmptyGroup(rep.group.clone()));
            }
            if reps[..i].iter().any(|r| r.group == rep.group) {
                return Err(Error::DuplicateId(alloc::format!("group:{}", rep.group)));
            }
        }
        Ok(Self { reps })
    }

    /// Checks that the set covers exactly the catalog's groups, in order,
    /// at the catalog's dimension.
    pub fn check_against(&self, catalog: &Catalog) -> Result<()> {
        let groups = catalog.mapping().groups();
        if self.reps.len() != groups.len() || self.reps.iter().zip(groups).any(|(r, g)| &r.group != g) {
            return Err(Error::InvalidParameter(alloc::format!(
                "representations do not match the declared groups {groups:?}"
            )));
        }
        if self.dimension() != catalog.dimension() {
            return Err(Error::DimensionMismatch {
                id: String::from("<representations>"),
                expected: catalog.dimension(),
                found: self.dimension(),
            });
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.reps[0].vector.len()
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, FairnessRepresentation> {
        self.reps.iter()
    }

    pub fn get(&self, group: &str) -> Option<&FairnessRepresentation> {
        self.reps.iter().find(|r| r.group == group)
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.reps.iter().map(|r| r.vector.as_slice())
    }
}

impl<'a> IntoIterator for &'a RepresentationSet {
    type Item = &'a FairnessRepresentation;
    type IntoIter = core::slice::Iter<'a, FairnessRepresentation>;

    fn into_iter(self) -> Self::IntoIter {
        self.iter()
    }
}

fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidFraction(fraction))
    }
}

/// Number of members averaged for a group: `ceil(fraction * size)`, clamped
/// to `[1, size]`.
pub fn sample_count(group_size: usize, fraction: f64) -> Result<usize> {
    check_fraction(fraction)?;
    if group_size == 0 {
        return Err(Error::InvalidParameter(String::from("group size must be at least 1")));
    }
    let raw = libm::ceil(fraction * group_size as f64);
    Ok((raw as usize).clamp(1, group_size))
}

/// Builds one representation per declared group. With `fraction == 1` every
/// member is used and the seed is not consulted.
pub fn build_representations(catalog: &Catalog, fraction: f64, seed: u64) -> Result<RepresentationSet> {
    check_fraction(fraction)?;
    let dim = catalog.dimension();
    let mut reps = Vec::with_capacity(catalog.mapping().groups().len());
    for (stream, group) in catalog.mapping().groups().iter().enumerate() {
        let members = catalog.items_in_group(group)?;
        if members.is_empty() {
            return Err(Error::EmptyGroup(group.clone()));
        }
        let n = sample_count(members.len(), fraction)?;
        let chosen: Vec<usize> = if n == members.len() {
            (0..n).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream as u64);
            let mut idx = rand::seq::index::sample(&mut rng, members.len(), n).into_vec();
            idx.sort_unstable();
            idx
        };
        let mut mean = alloc::vec![0.0; dim];
        for &i in &chosen {
            for (m, v) in mean.iter_mut().zip(&members[i].vector) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        reps.push(FairnessRepresentation {
            group: group.clone(),
            vector: mean,
            sample_size: n,
            sampling_fraction: fraction,
            seed,
        });
    }
    RepresentationSet::new(reps)
}

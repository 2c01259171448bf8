//! Fixed voxel grids with a region partition.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Fixed design points on `[0,1]^d`, each assigned to one region.
///
/// Regions are numbered `0..n_regions` internally. Every voxel carries the
/// same measure `1/p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    dim: usize,
    coords: Vec<f64>,
    region_of: Vec<usize>,
    n_regions: usize,
    #[serde(skip)]
    members: Vec<Vec<usize>>,
}

impl VoxelGrid {
    /// Build a grid from flat row-major coordinates (`p × dim`) and a region label per voxel.
    pub fn new(dim: usize, coords: Vec<f64>, region_of: Vec<usize>) -> Result<Self> {
        if dim == 0 {
            return invalid("grid dimension must be positive");
        }
        if coords.len() % dim != 0 {
            return invalid("coordinate buffer is not a multiple of the dimension");
        }
        let p = coords.len() / dim;
        if p == 0 {
            return invalid("grid has no voxels");
        }
        if region_of.len() != p {
            return invalid(format!(
                "region map has {} entries for {} voxels",
                region_of.len(),
                p
            ));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return invalid("non-finite voxel coordinate");
        }
        let n_regions = region_of.iter().copied().max().unwrap_or(0) + 1;
        let mut members = vec![Vec::new(); n_regions];
        for (j, &r) in region_of.iter().enumerate() {
            members[r].push(j);
        }
        if let Some(r) = members.iter().position(|m| m.is_empty()) {
            return invalid(format!("region {r} is empty"));
        }
        let mut seen: Vec<(Vec<u64>, usize)> = (0..p)
            .map(|j| {
                (
                    coords[j * dim..(j + 1) * dim]
                        .iter()
                        .map(|c| (c + 0.0).to_bits())
                        .collect(),
                    j,
                )
            })
            .collect();
        seen.sort();
        if seen.windows(2).any(|w| w[0].0 == w[1].0) {
            return invalid("voxel coordinates are not pairwise distinct");
        }
        Ok(Self {
            dim,
            coords,
            region_of,
            n_regions,
            members,
        })
    }

    /// A `side_x × side_y` image on the unit square, split into `blocks × blocks`
    /// equal rectangular regions. Voxels are ordered row-major and sit at cell centers.
    pub fn image(side_x: usize, side_y: usize, blocks: usize) -> Result<Self> {
        if side_x == 0 || side_y == 0 || blocks == 0 {
            return invalid("image sides and block count must be positive");
        }
        if side_x % blocks != 0 || side_y % blocks != 0 {
            return invalid(format!(
                "{side_x}x{side_y} image cannot be split into {blocks}x{blocks} equal regions"
            ));
        }
        let (bx, by) = (side_x / blocks, side_y / blocks);
        let mut coords = Vec::with_capacity(2 * side_x * side_y);
        let mut region_of = Vec::with_capacity(side_x * side_y);
        for row in 0..side_y {
            for col in 0..side_x {
                coords.push((col as f64 + 0.5) / side_x as f64);
                coords.push((row as f64 + 0.5) / side_y as f64);
                region_of.push((row / by) * blocks + col / bx);
            }
        }
        Self::new(2, coords, region_of)
    }

    /// Evenly spaced points on `[0,1]` split into `regions` contiguous runs.
    pub fn line(p: usize, regions: usize) -> Result<Self> {
        if p == 0 || regions == 0 || regions > p {
            return invalid("need 1 <= regions <= p");
        }
        let coords = (0..p).map(|j| (j as f64 + 0.5) / p as f64).collect();
        let region_of = (0..p).map(|j| j * regions / p).collect();
        Self::new(1, coords, region_of)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.region_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.region_of.is_empty()
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    pub fn coord(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn region_of(&self, j: usize) -> usize {
        self.region_of[j]
    }

    pub fn region_map(&self) -> &[usize] {
        &self.region_of
    }

    /// Global voxel indices belonging to `region`, ascending.
    pub fn members(&self, region: usize) -> &[usize] {
        &self.members[region]
    }

    /// Lebesgue measure of one voxel cell.
    pub fn voxel_measure(&self) -> f64 {
        1.0 / self.len() as f64
    }

    /// Rebuild the member index after deserialization.
    pub fn reindex(self) -> Result<Self> {
        Self::new(self.dim, self.coords, self.region_of)
    }
}

/// Parse an image layout of the form `WxHxR` (e.g. `20x20x4`), where `R` is a
/// perfect square number of equal rectangular regions.
pub fn parse_image_layout(spec: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = spec.split('x').collect();
    if parts.len() != 3 {
        return invalid(format!("grid layout '{spec}' is not of the form WxHxR"));
    }
    let nums: Vec<usize> = parts
        .iter()
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| crate::error::BimaError::InvalidArgument(format!("grid layout '{spec}': {e}")))?;
    let blocks = (nums[2] as f64).sqrt().round() as usize;
    if blocks * blocks != nums[2] || blocks == 0 {
        return invalid(format!("region count {} is not a perfect square", nums[2]));
    }
    Ok((nums[0], nums[1], blocks))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_regions_partition_the_grid() {
        let g = VoxelGrid::image(20, 20, 2).unwrap();
        assert_eq!(g.len(), 400);
        assert_eq!(g.n_regions(), 4);
        for r in 0..4 {
            assert_eq!(g.members(r).len(), 100);
        }
        assert_eq!(g.voxel_measure() * g.len() as f64, 1.0);
        assert_eq!(g.region_of(0), 0);
        assert_eq!(g.region_of(19), 1);
        assert_eq!(g.region_of(399), 3);
    }

    #[test]
    fn rejects_empty_region_and_duplicates() {
        assert!(VoxelGrid::new(1, vec![0.1, 0.2], vec![0, 2]).is_err());
        assert!(VoxelGrid::new(1, vec![0.1, 0.1], vec![0, 0]).is_err());
        assert!(VoxelGrid::image(20, 20, 3).is_err());
    }

    #[test]
    fn parses_layouts() {
        assert_eq!(parse_image_layout("20x20x4").unwrap(), (20, 20, 2));
        assert_eq!(parse_image_layout("64x64x4").unwrap(), (64, 64, 2));
        assert!(parse_image_layout("20x20x3").is_err());
        assert!(parse_image_layout("20x20").is_err());
    }
}

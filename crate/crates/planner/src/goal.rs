//! Goal regions and the region-counting cost.

use cdyn_core::decoder::{center_of_mass, ObjectGeometry, Occupancy};
use cdyn_core::WorkspaceGrid;
use serde::{Deserialize, Serialize};

pub type Point = [f64; 2];

/// Axis-aligned rectangle on the table plane, plus the colour of the object
/// that belongs in it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalRegion {
    pub min: Point,
    pub max: Point,
    pub color: [f64; 3],
}

impl GoalRegion {
    pub fn contains(&self, p: &Point) -> bool {
        (0..2).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn center(&self) -> Point {
        [(self.min[0] + self.max[0]) / 2.0, (self.min[1] + self.max[1]) / 2.0]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub regions: Vec<GoalRegion>,
}

/// Table-plane extent in which targets are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub min: Point,
    pub max: Point,
}

impl Footprint {
    pub fn of_grid(grid: &WorkspaceGrid) -> Self {
        let b = grid.bounds;
        Self {
            min: [b.min.x, b.min.y],
            max: [b.max.x, b.max.y],
        }
    }

    pub fn center(&self) -> Point {
        [(self.min[0] + self.max[0]) / 2.0, (self.min[1] + self.max[1]) / 2.0]
    }

    pub fn clamp(&self, p: Point) -> Point {
        [p[0].clamp(self.min[0], self.max[0]), p[1].clamp(self.min[1], self.max[1])]
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..2).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

impl GoalSpec {
    pub fn validate(&self, footprint: &Footprint) -> bool {
        self.regions.iter().all(|r| {
            footprint.contains(&r.min) && footprint.contains(&r.max) && (0..2).all(|a| r.min[a] <= r.max[a])
        })
    }
}

/// What the planner knows about a state: planar centre of mass and mean
/// colour per object, `None` where the object has no occupied voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub com: Vec<Option<Point>>,
    pub color: Vec<Option<[f64; 3]>>,
}

impl Summary {
    pub fn from_geometry(g: &ObjectGeometry) -> Self {
        Self {
            com: g.com.iter().map(|c| c.map(|v| [v.x, v.y])).collect(),
            color: g.color.clone(),
        }
    }

    /// Summary of hand-built occupancies with known colours.
    pub fn from_occupancies(occ: &[Occupancy], colors: &[[f64; 3]], grid: &WorkspaceGrid) -> Self {
        Self {
            com: occ.iter().map(|o| center_of_mass(o, grid).map(|v| [v.x, v.y])).collect(),
            color: occ
                .iter()
                .zip(colors)
                .map(|(o, c)| (o.count() > 0).then_some(*c))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.com.len()
    }

    pub fn is_empty(&self) -> bool {
        self.com.is_empty()
    }

    /// COMs with vanished objects placed at `fallback`.
    pub fn com_or(&self, fallback: Point) -> Vec<Point> {
        self.com.iter().map(|c| c.unwrap_or(fallback)).collect()
    }
}

/// Largest RGB distance at which an object still matches a region's colour.
pub const COLOR_MATCH: f64 = 0.35;

/// Object assigned to each region: the non-articulated object whose mean
/// colour is nearest to the region's key, or `None` if no object is close.
pub fn assign(summary: &Summary, goal: &GoalSpec, articulated: usize) -> Vec<Option<usize>> {
    goal.regions
        .iter()
        .map(|r| {
            let mut best: Option<(usize, f64)> = None;
            for (j, c) in summary.color.iter().enumerate() {
                let Some(c) = c else { continue };
                if j == articulated || summary.com[j].is_none() {
                    continue;
                }
                let d = (0..3).map(|a| (c[a] - r.color[a]).powi(2)).sum::<f64>().sqrt();
                if d <= COLOR_MATCH && best.map_or(true, |(_, b)| d < b) {
                    best = Some((j, d));
                }
            }
            best.map(|(j, _)| j)
        })
        .collect()
}

/// Number of regions whose object is not inside; a region without a
/// matching visible object counts as unsatisfied.
pub fn goal_cost(summary: &Summary, goal: &GoalSpec, articulated: usize) -> usize {
    assign(summary, goal, articulated)
        .iter()
        .zip(&goal.regions)
        .filter(|(j, r)| match j {
            Some(j) => !r.contains(&summary.com[*j].unwrap()),
            None => true,
        })
        .count()
}

/// Regions that are not yet satisfied, with their assigned object.
pub fn unfinished(summary: &Summary, goal: &GoalSpec, articulated: usize) -> Vec<(usize, usize)> {
    assign(summary, goal, articulated)
        .into_iter()
        .enumerate()
        .filter_map(|(r, j)| {
            let j = j?;
            (!goal.regions[r].contains(&summary.com[j].unwrap())).then_some((r, j))
        })
        .collect()
}

/// Distance of each assigned object's COM to its region, summed; regions
/// without a visible object add `1.0`. Zero exactly when the cost is zero.
pub fn residual(summary: &Summary, goal: &GoalSpec, articulated: usize) -> f64 {
    assign(summary, goal, articulated)
        .iter()
        .zip(&goal.regions)
        .map(|(j, r)| match j {
            Some(j) => {
                let p = summary.com[*j].unwrap();
                let dx = (r.min[0] - p[0]).max(p[0] - r.max[0]).max(0.0);
                let dy = (r.min[1] - p[1]).max(p[1] - r.max[1]).max(0.0);
                dx.hypot(dy)
            }
            None => 1.0,
        })
        .sum()
}

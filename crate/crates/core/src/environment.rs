//! Terrain heightmap, cylindrical obstacles and the geometric queries the
//! optimizer and controller run against them.
//!
//! The environment is immutable once built. Every query is a pure read, so a
//! shared `&Environment` can be handed to any number of threads.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point2, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance, in grid cells, for points that sit on the outer edge of the grid.
const EDGE_EPS: f64 = 1e-9;

/// Dense row-major elevation grid. Row `i` runs along +y, column `j` along +x:
/// node `(i, j)` sits at `origin + (j * cell_size, i * cell_size)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Terrain {
    origin: Point2<f64>,
    cell_size: f64,
    rows: usize,
    cols: usize,
    heights: Vec<f64>,
}

impl Terrain {
    pub fn new(origin: Point2<f64>, cell_size: f64, rows: usize, cols: usize, heights: Vec<f64>) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::InvalidTerrain(format!("cell_size must be positive, got {cell_size}")));
        }
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidTerrain("rows and cols must be positive".into()));
        }
        if heights.len() != rows * cols {
            return Err(Error::InvalidTerrain(format!(
                "expected {} elevations for a {rows}x{cols} grid, got {}",
                rows * cols,
                heights.len()
            )));
        }
        if let Some(k) = heights.iter().position(|h| !h.is_finite()) {
            return Err(Error::InvalidTerrain(format!("elevation at index {k} is not finite")));
        }
        if !(origin.x.is_finite() && origin.y.is_finite()) {
            return Err(Error::InvalidTerrain("origin must be finite".into()));
        }
        Ok(Self { origin, cell_size, rows, cols, heights })
    }

    pub fn flat(origin: Point2<f64>, cell_size: f64, rows: usize, cols: usize, height: f64) -> Result<Self> {
        Self::new(origin, cell_size, rows, cols, vec![height; rows * cols])
    }

    /// Planar ramp `base + slope_x * dx + slope_y * dy` measured from the origin.
    pub fn ramp(
        origin: Point2<f64>,
        cell_size: f64,
        rows: usize,
        cols: usize,
        base: f64,
        slope_x: f64,
        slope_y: f64,
    ) -> Result<Self> {
        let mut heights = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let dx = j as f64 * cell_size;
                let dy = i as f64 * cell_size;
                heights.push(base + slope_x * dx + slope_y * dy);
            }
        }
        Self::new(origin, cell_size, rows, cols, heights)
    }

    /// Smoothed uniform noise: white noise in [-1, 1], `passes` rounds of a
    /// 3x3 box blur with clamped edges, then rescaled so the largest
    /// excursion from `base` equals `amplitude`.
    #[allow(clippy::too_many_arguments)]
    pub fn rolling(
        origin: Point2<f64>,
        cell_size: f64,
        rows: usize,
        cols: usize,
        base: f64,
        amplitude: f64,
        passes: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut grid: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let mut scratch = vec![0.0; grid.len()];
        for _ in 0..passes {
            for i in 0..rows {
                for j in 0..cols {
                    let mut acc = 0.0;
                    for di in [-1i64, 0, 1] {
                        for dj in [-1i64, 0, 1] {
                            let ii = (i as i64 + di).clamp(0, rows as i64 - 1) as usize;
                            let jj = (j as i64 + dj).clamp(0, cols as i64 - 1) as usize;
                            acc += grid[ii * cols + jj];
                        }
                    }
                    scratch[i * cols + j] = acc / 9.0;
                }
            }
            std::mem::swap(&mut grid, &mut scratch);
        }
        let peak = grid.iter().fold(0.0f64, |m, h| m.max(h.abs()));
        let scale = if peak > 0.0 { amplitude / peak } else { 0.0 };
        let heights = grid.into_iter().map(|h| base + h * scale).collect();
        Self::new(origin, cell_size, rows, cols, heights)
    }

    pub fn origin(&self) -> Point2<f64> {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.heights[i * self.cols + j]
    }

    /// Horizontal extent as (min corner, max corner).
    pub fn extent(&self) -> (Point2<f64>, Point2<f64>) {
        let max = Point2::new(
            self.origin.x + (self.cols - 1) as f64 * self.cell_size,
            self.origin.y + (self.rows - 1) as f64 * self.cell_size,
        );
        (self.origin, max)
    }

    pub fn min_height(&self) -> f64 {
        self.heights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_height(&self) -> f64 {
        self.heights.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear elevation at `p`. Exact node values are returned at grid nodes.
    pub fn height_at(&self, p: Point2<f64>) -> Result<f64> {
        let out = || Error::OutOfTerrain { x: p.x, y: p.y };
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(out());
        }
        let (j0, fx) = axis_cell((p.x - self.origin.x) / self.cell_size, self.cols).ok_or_else(out)?;
        let (i0, fy) = axis_cell((p.y - self.origin.y) / self.cell_size, self.rows).ok_or_else(out)?;
        let j1 = (j0 + 1).min(self.cols - 1);
        let i1 = (i0 + 1).min(self.rows - 1);
        let h00 = self.node(i0, j0);
        let h01 = self.node(i0, j1);
        let h10 = self.node(i1, j0);
        let h11 = self.node(i1, j1);
        let lerp = |a: f64, b: f64, t: f64| {
            if t == 0.0 {
                a
            } else if t == 1.0 {
                b
            } else {
                a + (b - a) * t
            }
        };
        Ok(lerp(lerp(h00, h01, fx), lerp(h10, h11, fx), fy))
    }

    /// Parses the plain-text grid format: a header line
    /// `rows cols origin_x origin_y cell_size` followed by `rows * cols`
    /// whitespace-separated elevations in row-major order. Lines starting
    /// with `#` are comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim_start().starts_with('#'))
            .flat_map(|(n, l)| l.split_whitespace().map(move |t| (n + 1, t)));

        fn next<'a, T: std::str::FromStr>(
            tokens: &mut impl Iterator<Item = (usize, &'a str)>,
            field: &str,
        ) -> Result<T> {
            let (line, tok) = tokens.next().ok_or_else(|| Error::Parse {
                location: format!("terrain header field `{field}`"),
                message: "unexpected end of input".into(),
            })?;
            tok.parse().map_err(|_| Error::Parse {
                location: format!("line {line}, field `{field}`"),
                message: format!("cannot parse `{tok}`"),
            })
        }

        let rows: usize = next(&mut tokens, "rows")?;
        let cols: usize = next(&mut tokens, "cols")?;
        let ox: f64 = next(&mut tokens, "origin_x")?;
        let oy: f64 = next(&mut tokens, "origin_y")?;
        let cell: f64 = next(&mut tokens, "cell_size")?;
        let mut heights = Vec::with_capacity(rows.saturating_mul(cols).min(1 << 24));
        for k in 0..rows * cols {
            heights.push(next::<f64>(&mut tokens, &format!("elevation[{k}]"))?);
        }
        if let Some((line, tok)) = tokens.next() {
            return Err(Error::Parse {
                location: format!("line {line}"),
                message: format!("trailing data `{tok}` after {} elevations", rows * cols),
            });
        }
        Self::new(Point2::new(ox, oy), cell, rows, cols, heights)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {} {} {}", self.rows, self.cols, self.origin.x, self.origin.y, self.cell_size);
        for row in self.heights.chunks(self.cols) {
            let line: Vec<String> = row.iter().map(|h| h.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Splits a fractional grid coordinate into (cell index, fraction in [0, 1]).
fn axis_cell(g: f64, n: usize) -> Option<(usize, f64)> {
    let last = (n - 1) as f64;
    if g < -EDGE_EPS || g > last + EDGE_EPS {
        return None;
    }
    let mut g = g.clamp(0.0, last);
    // Snap lattice coordinates that are a rounding error away from a node.
    if (g - g.round()).abs() <= EDGE_EPS {
        g = g.round();
    }
    if n == 1 {
        return Some((0, 0.0));
    }
    let i = (g.floor() as usize).min(n - 2);
    Some((i, g - i as f64))
}

/// Vertical cylinder. At any altitude inside `[base_height, top_height]`
/// its cross-section is the disk `(center, radius)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub id: String,
    pub center: Point2<f64>,
    pub radius: f64,
    pub base_height: f64,
    pub top_height: f64,
}

impl Obstacle {
    /// Closed-interval span test.
    pub fn spans(&self, z: f64) -> bool {
        self.base_height <= z && z <= self.top_height
    }

    pub fn overlaps_band(&self, lo: f64, hi: f64) -> bool {
        self.base_height <= hi && lo <= self.top_height
    }

    pub fn center_distance(&self, p: Point2<f64>) -> f64 {
        (p - self.center).norm()
    }

    /// Distance from `p` to the disk boundary, zero when `p` is inside.
    pub fn boundary_distance(&self, p: Point2<f64>) -> f64 {
        (self.center_distance(p) - self.radius).max(0.0)
    }

    pub fn disk(&self) -> Disk {
        Disk { center: self.center, radius: self.radius }
    }

    fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("obstacle `{}`: radius must be positive", self.id)));
        }
        if self.top_height.is_nan() || self.base_height.is_nan() || self.top_height <= self.base_height {
            return Err(Error::InvalidParameter(format!("obstacle `{}`: top_height must exceed base_height", self.id)));
        }
        if !(self.center.x.is_finite() && self.center.y.is_finite()) {
            return Err(Error::InvalidParameter(format!("obstacle `{}`: center must be finite", self.id)));
        }
        Ok(())
    }
}

/// Circular obstacle cross-section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: Point2<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Bounds {
    pub fn new(min: Point3<f64>, max: Point3<f64>) -> Result<Self> {
        if (0..3).any(|k| !min[k].is_finite() || !max[k].is_finite() || min[k] >= max[k]) {
            return Err(Error::InvalidParameter(format!("bounds min {min:?} must be strictly below max {max:?}")));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|k| self.min[k] <= p[k] && p[k] <= self.max[k])
    }

    pub fn contains_xy(&self, p: Point2<f64>) -> bool {
        self.min.x <= p.x && p.x <= self.max.x && self.min.y <= p.y && p.y <= self.max.y
    }

    pub fn clamp(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    terrain: Terrain,
    /// Sorted by id.
    obstacles: Vec<Obstacle>,
    bounds: Bounds,
}

impl Environment {
    pub fn new(terrain: Terrain, mut obstacles: Vec<Obstacle>, bounds: Bounds) -> Result<Self> {
        for o in &obstacles {
            o.validate()?;
            if !bounds.contains_xy(o.center) {
                return Err(Error::InvalidParameter(format!(
                    "obstacle `{}` center lies outside the world bounds",
                    o.id
                )));
            }
        }
        obstacles.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = obstacles.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::InvalidParameter(format!("duplicate obstacle id `{}`", w[0].id)));
        }
        Ok(Self { terrain, obstacles, bounds })
    }

    /// Terrain-sized bounds spanning `[min_height - 10, max_height + headroom]`.
    pub fn default_bounds(terrain: &Terrain, headroom: f64) -> Result<Bounds> {
        let (lo, hi) = terrain.extent();
        let (lo, hi) = if lo.x == hi.x || lo.y == hi.y {
            (lo - nalgebra::Vector2::repeat(0.5), hi + nalgebra::Vector2::repeat(0.5))
        } else {
            (lo, hi)
        };
        Bounds::new(
            Point3::new(lo.x, lo.y, terrain.min_height() - 10.0),
            Point3::new(hi.x, hi.y, terrain.max_height() + headroom),
        )
    }

    pub fn terrain(&self) -> &Terrain {
        &self.terrain
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn ground_height(&self, p: Point2<f64>) -> Result<f64> {
        self.terrain.height_at(p)
    }

    /// One disk per obstacle whose closed vertical span contains `z`.
    pub fn cross_section_at(&self, z: f64) -> Vec<Disk> {
        self.obstacles.iter().filter(|o| o.spans(z)).map(Obstacle::disk).collect()
    }

    /// Obstacles present at altitude `p.z` whose boundary is within `range`
    /// of `p` horizontally (closed). Points inside a disk count as distance 0.
    /// Results are ordered by id.
    pub fn detect_obstacles(&self, p: &Point3<f64>, range: f64) -> Vec<&Obstacle> {
        let xy = p.xy();
        self.obstacles.iter().filter(|o| o.spans(p.z) && o.boundary_distance(xy) <= range).collect()
    }
}

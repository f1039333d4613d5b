//! Arena geometry: bounds, obstacles and named objects.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("world file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("object `{0}` overlaps an obstacle")]
    Overlap(String),
    #[error("object `{0}` lies outside the bounds")]
    OutOfBounds(String),
    #[error("bounds are empty")]
    EmptyBounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            min: [-1.0, -1.0],
            max: [1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Obstacle {
    Disc { x: f64, y: f64, r: f64 },
    Segment { a: [f64; 2], b: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Object {
    pub name: String,
    pub x: f64,
    pub y: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "yes")]
    pub graspable: bool,
}

fn default_radius() -> f64 {
    0.02
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StartPose {
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub y: f64,
    #[serde(default)]
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct World {
    #[serde(default)]
    pub bounds: Bounds,
    #[serde(default)]
    pub robot: StartPose,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub objects: Vec<Object>,
}

impl World {
    pub fn from_toml(text: &str) -> Result<World, WorldError> {
        let w: World = toml::from_str(text)?;
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let b = self.bounds;
        if b.min[0] >= b.max[0] || b.min[1] >= b.max[1] {
            return Err(WorldError::EmptyBounds);
        }
        for o in &self.objects {
            if o.x - o.radius < b.min[0]
                || o.x + o.radius > b.max[0]
                || o.y - o.radius < b.min[1]
                || o.y + o.radius > b.max[1]
            {
                return Err(WorldError::OutOfBounds(o.name.clone()));
            }
            if self.obstacles.iter().any(|ob| disc_hits(ob, [o.x, o.y], o.radius)) {
                return Err(WorldError::Overlap(o.name.clone()));
            }
        }
        Ok(())
    }

    pub fn object(&self, name: &str) -> Option<&Object> {
        self.objects.iter().find(|o| o.name.eq_ignore_ascii_case(name))
    }

    pub fn object_mut(&mut self, name: &str) -> Option<&mut Object> {
        self.objects.iter_mut().find(|o| o.name.eq_ignore_ascii_case(name))
    }

    /// Moves a named object, creating a small graspable one if unknown.
    pub fn place(&mut self, name: &str, x: f64, y: f64) {
        match self.object_mut(name) {
            Some(o) => {
                o.x = x;
                o.y = y;
            }
            None => self.objects.push(Object {
                name: name.to_string(),
                x,
                y,
                radius: default_radius(),
                graspable: true,
            }),
        }
    }

    fn walls(&self) -> [Obstacle; 4] {
        let [x0, y0] = self.bounds.min;
        let [x1, y1] = self.bounds.max;
        [
            Obstacle::Segment { a: [x0, y0], b: [x1, y0] },
            Obstacle::Segment { a: [x1, y0], b: [x1, y1] },
            Obstacle::Segment { a: [x1, y1], b: [x0, y1] },
            Obstacle::Segment { a: [x0, y1], b: [x0, y0] },
        ]
    }

    /// True if a disc at `c` with radius `r` touches anything solid.
    /// `skip` names an object to ignore (the one being carried).
    pub fn collides(&self, c: [f64; 2], r: f64, skip: Option<&str>) -> bool {
        let b = self.bounds;
        if c[0] - r < b.min[0] || c[0] + r > b.max[0] || c[1] - r < b.min[1] || c[1] + r > b.max[1] {
            return true;
        }
        if self.obstacles.iter().any(|o| disc_hits(o, c, r)) {
            return true;
        }
        self.objects
            .iter()
            .filter(|o| skip.is_none_or(|s| !o.name.eq_ignore_ascii_case(s)))
            .any(|o| dist(c, [o.x, o.y]) < r + o.radius)
    }

    /// Distance along a ray to the first solid surface, with the object hit if any.
    pub fn raycast(&self, origin: [f64; 2], heading: f64, skip: Option<&str>) -> Option<(f64, Option<&Object>)> {
        let d = [heading.cos(), heading.sin()];
        let mut best: Option<(f64, Option<&Object>)> = None;
        for w in self.walls().iter().chain(&self.obstacles) {
            if let Some(t) = ray_hit(w, origin, d) {
                if best.as_ref().is_none_or(|(b, _)| t < *b) {
                    best = Some((t, None));
                }
            }
        }
        for o in &self.objects {
            if skip.is_some_and(|s| o.name.eq_ignore_ascii_case(s)) {
                continue;
            }
            let t = ray_disc(origin, d, [o.x, o.y], o.radius);
            if let Some(t) = t {
                if best.as_ref().is_none_or(|(b, _)| t < *b) {
                    best = Some((t, Some(o)));
                }
            }
        }
        best
    }
}

pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn point_segment_dist(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

fn disc_hits(o: &Obstacle, c: [f64; 2], r: f64) -> bool {
    match *o {
        Obstacle::Disc { x, y, r: or } => dist(c, [x, y]) < r + or,
        Obstacle::Segment { a, b } => point_segment_dist(c, a, b) < r,
    }
}

/// Smallest t >= 0 with origin + t*d on the circle, if any.
pub fn ray_disc(origin: [f64; 2], d: [f64; 2], c: [f64; 2], r: f64) -> Option<f64> {
    let f = [origin[0] - c[0], origin[1] - c[1]];
    let b = f[0] * d[0] + f[1] * d[1];
    let cc = f[0] * f[0] + f[1] * f[1] - r * r;
    if cc <= 0.0 {
        return Some(0.0);
    }
    let disc = b * b - cc;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t >= 0.0).then_some(t)
}

fn ray_segment(origin: [f64; 2], d: [f64; 2], a: [f64; 2], b: [f64; 2]) -> Option<f64> {
    let e = [b[0] - a[0], b[1] - a[1]];
    let denom = d[0] * e[1] - d[1] * e[0];
    if denom.abs() < 1e-15 {
        return None;
    }
    let w = [a[0] - origin[0], a[1] - origin[1]];
    let t = (w[0] * e[1] - w[1] * e[0]) / denom;
    let u = (w[0] * d[1] - w[1] * d[0]) / denom;
    (t >= 0.0 && (0.0..=1.0).contains(&u)).then_some(t)
}

fn ray_hit(o: &Obstacle, origin: [f64; 2], d: [f64; 2]) -> Option<f64> {
    match *o {
        Obstacle::Disc { x, y, r } => ray_disc(origin, d, [x, y], r),
        Obstacle::Segment { a, b } => ray_segment(origin, d, a, b),
    }
}

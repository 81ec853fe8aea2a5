//! Scenes: a lane corridor around a sampled centerline, static obstacles,
//! constant-velocity agents, and an optional stop line.
//!
//! The scene frame is the ego frame at t=0: the ego starts at the origin at
//! arc length 0, centered in the lane and aligned with the tangent. The
//! centerline is stored as uniformly spaced (x, y, heading) samples, so arc
//! positions and lateral offsets come from polyline projection.
//!
//! File format (plain text, `#` comments and blank lines skipped):
//!
//! ```text
//! speed_limit 9.25
//! lane_half_width 2
//! stop_line 31.5 1        # optional: arc position, active flag
//! centerline 96
//! <x> <y> <heading>       # one sample per line
//! obstacles 2
//! <cx> <cy> <hx> <hy>
//! agents 1
//! <cx> <cy> <hx> <hy> <vx> <vy>
//! ```

use super::shape::{Obb, Rect};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use std::io::{BufRead, Write};
use std::path::Path;

pub const DEFAULT_LANE_HALF_WIDTH: f64 = 2.0;
/// Centerline sample spacing in meters.
pub const CENTERLINE_SPACING: f64 = 1.0;
/// Number of centerline samples (covers 95 m of lane).
pub const CENTERLINE_POINTS: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterPoint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovingAgent {
    pub rect: Rect,
    pub vx: f64,
    pub vy: f64,
}

impl MovingAgent {
    /// Footprint at time `t` under constant-velocity extrapolation.
    pub fn at_time(&self, t: f64) -> Rect {
        self.rect.translated(self.vx * t, self.vy * t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopLine {
    pub arc_pos: f64,
    pub active: bool,
}

/// Scene generation regimes: what kinds of hazard the scene contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Difficulty {
    Empty,
    Static,
    Dynamic,
    Mixed,
}

impl Difficulty {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "empty" => Ok(Self::Empty),
            "static" => Ok(Self::Static),
            "dynamic" => Ok(Self::Dynamic),
            "mixed" => Ok(Self::Mixed),
            other => Err(Error::InvalidArgument(format!(
                "unknown difficulty '{other}'"
            ))),
        }
    }
}

/// Result of projecting a point onto the centerline polyline.
#[derive(Debug, Clone, Copy)]
pub struct Projection {
    /// Arc-length position, clamped to [0, length].
    pub s: f64,
    /// Signed lateral offset, positive to the left of the tangent.
    pub lateral: f64,
    /// Interpolated tangent heading at `s`.
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    centerline: Vec<CenterPoint>,
    spacing: f64,
    pub lane_half_width: f64,
    pub static_obstacles: Vec<Rect>,
    pub moving_agents: Vec<MovingAgent>,
    pub stop_line: Option<StopLine>,
    pub speed_limit: f64,
}

impl Scene {
    pub fn new(
        centerline: Vec<CenterPoint>,
        lane_half_width: f64,
        static_obstacles: Vec<Rect>,
        moving_agents: Vec<MovingAgent>,
        stop_line: Option<StopLine>,
        speed_limit: f64,
    ) -> Result<Self> {
        if centerline.len() < 64 {
            return Err(Error::InvalidArgument(format!(
                "centerline needs at least 64 points, got {}",
                centerline.len()
            )));
        }
        let first = centerline[0];
        if first.x.abs() > 1e-9 || first.y.abs() > 1e-9 || first.heading.abs() > 1e-9 {
            return Err(Error::InvalidArgument(
                "centerline must start at the origin, tangent along +x".into(),
            ));
        }
        let spacing = hypot(centerline[0], centerline[1]);
        for w in centerline.windows(2) {
            let d = hypot(w[0], w[1]);
            if (d - spacing).abs() > 1e-6 * spacing.max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "centerline spacing not uniform: {spacing} vs {d}"
                )));
            }
            // Heading stays within the chord direction up to curvature error.
            let chord = (w[1].y - w[0].y).atan2(w[1].x - w[0].x);
            if crate::geom::wrap_angle_diff(chord, w[0].heading) > 0.1 {
                return Err(Error::InvalidArgument(
                    "centerline heading deviates from tangent".into(),
                ));
            }
        }
        if speed_limit <= 0.0 {
            return Err(Error::InvalidArgument("speed_limit must be positive".into()));
        }
        Ok(Self {
            centerline,
            spacing,
            lane_half_width,
            static_obstacles,
            moving_agents,
            stop_line,
            speed_limit,
        })
    }

    /// Straight lane with default dimensions; handy for tests and benches.
    pub fn straight(speed_limit: f64) -> Self {
        let centerline = arc_centerline(0.0);
        Self::new(
            centerline,
            DEFAULT_LANE_HALF_WIDTH,
            Vec::new(),
            Vec::new(),
            None,
            speed_limit,
        )
        .expect("straight centerline is valid")
    }

    pub fn centerline(&self) -> &[CenterPoint] {
        &self.centerline
    }

    /// Total arc length covered by the centerline samples.
    pub fn length(&self) -> f64 {
        self.spacing * (self.centerline.len() - 1) as f64
    }

    /// Project a point onto the centerline polyline. Points beyond either end
    /// clamp to the end sample, so `s` stays in [0, length].
    pub fn project(&self, x: f64, y: f64) -> Projection {
        let mut best_d2 = f64::INFINITY;
        let mut best = Projection {
            s: 0.0,
            lateral: 0.0,
            heading: 0.0,
        };
        for (i, w) in self.centerline.windows(2).enumerate() {
            let ax = w[0].x;
            let ay = w[0].y;
            let dx = w[1].x - ax;
            let dy = w[1].y - ay;
            let len2 = dx * dx + dy * dy;
            let t = (((x - ax) * dx + (y - ay) * dy) / len2).clamp(0.0, 1.0);
            let px = ax + t * dx;
            let py = ay + t * dy;
            let d2 = (x - px).powi(2) + (y - py).powi(2);
            if d2 < best_d2 {
                best_d2 = d2;
                let heading = w[0].heading + t * (w[1].heading - w[0].heading);
                let (sh, ch) = heading.sin_cos();
                best = Projection {
                    s: self.spacing * (i as f64 + t),
                    lateral: -sh * (x - px) + ch * (y - py),
                    heading,
                };
            }
        }
        best
    }

    /// True if any point of the rectangle lies inside the lane corridor
    /// (|lateral| <= lane_half_width), sampled on an 11x11 grid.
    pub fn rect_intersects_corridor(&self, rect: &Rect) -> bool {
        for i in 0..=10 {
            let fx = -1.0 + 0.2 * i as f64;
            for j in 0..=10 {
                let fy = -1.0 + 0.2 * j as f64;
                let p = self.project(rect.cx + fx * rect.hx, rect.cy + fy * rect.hy);
                if p.lateral.abs() <= self.lane_half_width {
                    return true;
                }
            }
        }
        false
    }

    /// The scene as seen at time `t`: moving agents advanced along their
    /// constant velocities, everything else unchanged.
    pub fn at_time(&self, t: f64) -> Scene {
        let mut s = self.clone();
        for a in &mut s.moving_agents {
            a.rect = a.rect.translated(a.vx * t, a.vy * t);
        }
        s
    }

    /// Centerline point at arc length `s` (clamped), linear interpolation.
    pub fn point_at(&self, s: f64) -> CenterPoint {
        let f = (s / self.spacing).clamp(0.0, (self.centerline.len() - 1) as f64);
        let i = (f.floor() as usize).min(self.centerline.len() - 2);
        let t = f - i as f64;
        let a = self.centerline[i];
        let b = self.centerline[i + 1];
        CenterPoint {
            x: a.x + t * (b.x - a.x),
            y: a.y + t * (b.y - a.y),
            heading: a.heading + t * (b.heading - a.heading),
        }
    }
}

fn hypot(a: CenterPoint, b: CenterPoint) -> f64 {
    ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt()
}

/// Constant-curvature centerline through the origin, tangent along +x.
pub fn arc_centerline(curvature: f64) -> Vec<CenterPoint> {
    (0..CENTERLINE_POINTS)
        .map(|i| {
            let s = i as f64 * CENTERLINE_SPACING;
            if curvature.abs() < 1e-12 {
                CenterPoint {
                    x: s,
                    y: 0.0,
                    heading: 0.0,
                }
            } else {
                CenterPoint {
                    x: (curvature * s).sin() / curvature,
                    y: (1.0 - (curvature * s).cos()) / curvature,
                    heading: curvature * s,
                }
            }
        })
        .collect()
}

/// Sample a scene. Determinism contract: the same rng state and difficulty
/// always produce the same scene.
pub fn generate_scene(rng: &mut SeededRng, difficulty: Difficulty) -> Scene {
    let curvature = if rng.uniform() < 0.25 {
        0.0
    } else {
        rng.uniform_range(-0.05, 0.05)
    };
    let centerline = arc_centerline(curvature);
    let speed_limit = rng.uniform_range(6.0, 12.0);
    let mut scene = Scene::new(
        centerline,
        DEFAULT_LANE_HALF_WIDTH,
        Vec::new(),
        Vec::new(),
        None,
        speed_limit,
    )
    .expect("arc centerline is valid");

    let (n_static, n_agents) = match difficulty {
        Difficulty::Empty => (0, 0),
        Difficulty::Static => (1 + rng.index(4), 0),
        Difficulty::Dynamic => (0, 1 + rng.index(2)),
        Difficulty::Mixed => (1 + rng.index(3), 1 + rng.index(2)),
    };

    for k in 0..n_static {
        // The first obstacle must actually obstruct the corridor; later ones
        // may sit beside the lane.
        let must_block = k == 0 && difficulty != Difficulty::Empty;
        for _ in 0..1000 {
            let s = rng.uniform_range(8.0, 50.0);
            let lateral = rng.uniform_range(-4.0, 4.0);
            let c = scene.point_at(s);
            let (sh, ch) = c.heading.sin_cos();
            let rect = Rect::new(
                c.x - sh * lateral,
                c.y + ch * lateral,
                rng.uniform_range(0.5, 1.5),
                rng.uniform_range(0.5, 1.5),
            );
            // Keep the spawn area clear: an obstacle over the origin would
            // make every trajectory collide at step 1.
            if rect.cx.abs() < rect.hx + 3.0 && rect.cy.abs() < rect.hy + 3.0 {
                continue;
            }
            if must_block && !scene.rect_intersects_corridor(&rect) {
                continue;
            }
            scene.static_obstacles.push(rect);
            break;
        }
    }

    for _ in 0..n_agents {
        for _ in 0..1000 {
            let s = rng.uniform_range(10.0, 50.0);
            let lateral = rng.uniform_range(-5.0, 5.0);
            let c = scene.point_at(s);
            let (sh, ch) = c.heading.sin_cos();
            let rect = Rect::new(
                c.x - sh * lateral,
                c.y + ch * lateral,
                rng.uniform_range(0.8, 2.0),
                rng.uniform_range(0.5, 1.0),
            );
            let speed = rng.uniform_range(0.0, 5.0);
            let dir = rng.uniform_range(-std::f64::consts::PI, std::f64::consts::PI);
            let (vx, vy) = (speed * dir.cos(), speed * dir.sin());
            if rect.cx.hypot(rect.cy) < 8.0 {
                continue;
            }
            // Reject headings that sweep through the spawn area within the
            // 4 s horizon; an unavoidable collision at the origin makes every
            // candidate trajectory score identically.
            let runs_over_origin = (0..=8).any(|j| {
                let t = 0.5 * j as f64;
                let r = rect.translated(vx * t, vy * t);
                r.cx.hypot(r.cy) < 4.0
            });
            if runs_over_origin {
                continue;
            }
            scene.moving_agents.push(MovingAgent { rect, vx, vy });
            break;
        }
    }

    if difficulty != Difficulty::Empty && rng.uniform() < 0.5 {
        scene.stop_line = Some(StopLine {
            arc_pos: rng.uniform_range(15.0, 45.0),
            active: rng.uniform() < 0.5,
        });
    }
    scene
}

/// Ego footprint dimensions used by every collision-style check.
pub const EGO_LENGTH: f64 = 4.0;
pub const EGO_WIDTH: f64 = 1.8;

pub fn ego_obb(pose: &crate::geom::Pose) -> Obb {
    Obb::from_pose(pose, EGO_LENGTH, EGO_WIDTH)
}

pub fn write_scene(path: &Path, scene: &Scene) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "speed_limit {}", scene.speed_limit)?;
    writeln!(f, "lane_half_width {}", scene.lane_half_width)?;
    if let Some(sl) = scene.stop_line {
        writeln!(f, "stop_line {} {}", sl.arc_pos, sl.active as u8)?;
    }
    writeln!(f, "centerline {}", scene.centerline.len())?;
    for p in &scene.centerline {
        writeln!(f, "{} {} {}", p.x, p.y, p.heading)?;
    }
    writeln!(f, "obstacles {}", scene.static_obstacles.len())?;
    for r in &scene.static_obstacles {
        writeln!(f, "{} {} {} {}", r.cx, r.cy, r.hx, r.hy)?;
    }
    writeln!(f, "agents {}", scene.moving_agents.len())?;
    for a in &scene.moving_agents {
        writeln!(
            f,
            "{} {} {} {} {} {}",
            a.rect.cx, a.rect.cy, a.rect.hx, a.rect.hy, a.vx, a.vy
        )?;
    }
    Ok(())
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut lines = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        let t = line.trim().to_string();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        lines.push((i + 1, t));
    }
    let mut pos = 0;
    let mut speed_limit = None;
    let mut lane_half_width = None;
    let mut stop_line = None;
    let mut centerline = Vec::new();
    let mut obstacles = Vec::new();
    let mut agents = Vec::new();

    while pos < lines.len() {
        let (line_no, ref text) = lines[pos];
        let mut it = text.split_whitespace();
        let key = it.next().unwrap_or_default();
        let rest: Vec<&str> = it.collect();
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Parse {
                line: line_no,
                reason: format!("bad number '{s}': {e}"),
            })
        };
        match key {
            "speed_limit" => {
                speed_limit = Some(parse(field(&rest, 0, line_no)?)?);
                pos += 1;
            }
            "lane_half_width" => {
                lane_half_width = Some(parse(field(&rest, 0, line_no)?)?);
                pos += 1;
            }
            "stop_line" => {
                stop_line = Some(StopLine {
                    arc_pos: parse(field(&rest, 0, line_no)?)?,
                    active: parse(field(&rest, 1, line_no)?)? != 0.0,
                });
                pos += 1;
            }
            "centerline" | "obstacles" | "agents" => {
                let n = parse(field(&rest, 0, line_no)?)? as usize;
                pos += 1;
                for _ in 0..n {
                    let (ln, ref row) = *lines.get(pos).ok_or(Error::Parse {
                        line: line_no,
                        reason: format!("{key} section truncated"),
                    })?;
                    let vals: Vec<f64> = row
                        .split_whitespace()
                        .map(|s| {
                            s.parse::<f64>().map_err(|e| Error::Parse {
                                line: ln,
                                reason: format!("bad number '{s}': {e}"),
                            })
                        })
                        .collect::<Result<_>>()?;
                    let need = match key {
                        "centerline" => 3,
                        "obstacles" => 4,
                        _ => 6,
                    };
                    if vals.len() != need {
                        return Err(Error::Parse {
                            line: ln,
                            reason: format!("expected {need} fields, got {}", vals.len()),
                        });
                    }
                    match key {
                        "centerline" => centerline.push(CenterPoint {
                            x: vals[0],
                            y: vals[1],
                            heading: vals[2],
                        }),
                        "obstacles" => {
                            obstacles.push(Rect::new(vals[0], vals[1], vals[2], vals[3]))
                        }
                        _ => agents.push(MovingAgent {
                            rect: Rect::new(vals[0], vals[1], vals[2], vals[3]),
                            vx: vals[4],
                            vy: vals[5],
                        }),
                    }
                    pos += 1;
                }
            }
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!("unknown key '{other}'"),
                })
            }
        }
    }

    Scene::new(
        centerline,
        lane_half_width.ok_or(Error::Parse {
            line: 0,
            reason: "missing lane_half_width".into(),
        })?,
        obstacles,
        agents,
        stop_line,
        speed_limit.ok_or(Error::Parse {
            line: 0,
            reason: "missing speed_limit".into(),
        })?,
    )
}

fn field<'a>(rest: &[&'a str], i: usize, line: usize) -> Result<&'a str> {
    rest.get(i).copied().ok_or(Error::Parse {
        line,
        reason: format!("missing field {i}"),
    })
}

//! Deterministic 2-D depiction. Coordinates are first built in bond-length
//! units (atom 0 at the origin, first bond along +x), then scaled and
//! centred onto the raster canvas.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use serde::{Deserialize, Serialize};

use super::raster::CANVAS;
use super::MolecularGraph;
use crate::math::{atan2, cos, sin, sqrt, tan};

/// Pixels per bond length tried first.
const BASE_SCALE: f64 = 7.0;
const RESCALE: f64 = 0.75;
const RESCALE_ATTEMPTS: usize = 3;
/// Blank border kept on every side of the canvas, in pixels.
const MARGIN: f64 = 2.0;
const MIN_DISTANCE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }

    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }

    pub fn norm(self) -> f64 {
        sqrt(self.x * self.x + self.y * self.y)
    }

    pub fn distance(self, o: Point) -> f64 {
        self.sub(o).norm()
    }

    fn unit_or(self, fallback: Point) -> Point {
        let n = self.norm();
        if n < 1e-9 {
            fallback
        } else {
            self.mul(1.0 / n)
        }
    }

    fn angle(self) -> f64 {
        atan2(self.y, self.x)
    }

    fn polar(angle: f64) -> Point {
        Point::new(cos(angle), sin(angle))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LayoutError {
    #[error("molecule spans {span:.1} bond lengths and does not fit the canvas")]
    LayoutOverflow { span: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    /// Per-atom coordinates in bond-length units.
    pub coords: Vec<Point>,
    /// Per-atom canvas positions in pixels.
    pub pixels: Vec<Point>,
    /// Pixels per bond length.
    pub scale: f64,
}

pub fn layout_2d(g: &MolecularGraph) -> Result<Layout, LayoutError> {
    let coords = build(g);
    let (lo, hi) = bounds(&coords);
    let span = (hi.x - lo.x).max(hi.y - lo.y);
    let mid = lo.add(hi).mul(0.5);
    let room = CANVAS as f64 - 2.0 * MARGIN;
    let mut scale = BASE_SCALE;
    for _ in 0..=RESCALE_ATTEMPTS {
        if span * scale < room {
            let c = CANVAS as f64 / 2.0;
            let pixels = coords
                .iter()
                .map(|p| Point::new(c + (p.x - mid.x) * scale, c + (p.y - mid.y) * scale))
                .collect();
            return Ok(Layout {
                coords,
                pixels,
                scale,
            });
        }
        scale *= RESCALE;
    }
    Err(LayoutError::LayoutOverflow { span })
}

fn bounds(ps: &[Point]) -> (Point, Point) {
    let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in ps {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

/// Smallest cycle through every ring bond, deduplicated, smallest first.
/// Each cycle is an ordered atom walk.
fn rings(g: &MolecularGraph) -> Vec<Vec<usize>> {
    let n = g.atom_count();
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut out = Vec::new();
    for (bi, b) in g.bonds().iter().enumerate() {
        if !b.ring {
            continue;
        }
        // Shortest b.b -> b.a path avoiding bond bi.
        let mut prev = vec![usize::MAX; n];
        prev[b.b] = b.b;
        let mut q = VecDeque::from([b.b]);
        while let Some(v) = q.pop_front() {
            if v == b.a {
                break;
            }
            for &(u, ui) in g.neighbors(v) {
                if ui != bi && prev[u] == usize::MAX {
                    prev[u] = v;
                    q.push_back(u);
                }
            }
        }
        if prev[b.a] == usize::MAX {
            continue;
        }
        let mut cycle = vec![b.a];
        let mut v = b.a;
        while v != b.b {
            v = prev[v];
            cycle.push(v);
        }
        let mut key = cycle.clone();
        key.sort_unstable();
        if seen.insert(key) {
            out.push(cycle);
        }
    }
    out.sort_by_key(|c| c.len());
    out
}

fn build(g: &MolecularGraph) -> Vec<Point> {
    let n = g.atom_count();
    let mut pos: Vec<Option<Point>> = vec![None; n];
    if n == 0 {
        return Vec::new();
    }
    let cycles = rings(g);
    let mut atom_rings: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (ri, c) in cycles.iter().enumerate() {
        for &a in c {
            atom_rings[a].push(ri);
        }
    }
    // Zig-zag turn sign for chain growth.
    let mut turn = vec![1.0f64; n];
    let mut queue = VecDeque::new();

    for root in 0..n {
        if pos[root].is_some() {
            continue;
        }
        pos[root] = Some(Point::default());
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            for &ri in &atom_rings[v] {
                for a in place_ring(&cycles[ri], v, &mut pos, g) {
                    queue.push_back(a);
                }
            }
            let pv = pos[v].expect("queued atoms are placed");
            let placed: Vec<Point> = g
                .neighbors(v)
                .iter()
                .filter_map(|&(u, _)| pos[u])
                .collect();
            let fresh: Vec<usize> = g
                .neighbors(v)
                .iter()
                .map(|&(u, _)| u)
                .filter(|&u| pos[u].is_none())
                .collect();
            if fresh.is_empty() {
                continue;
            }
            let dirs: Vec<f64> = match placed.len() {
                0 => {
                    let m = fresh.len() as f64;
                    (0..fresh.len()).map(|k| 2.0 * PI * k as f64 / m).collect()
                }
                1 => {
                    let back = placed[0].sub(pv).angle();
                    if fresh.len() == 1 {
                        vec![back + turn[v] * 2.0 * PI / 3.0]
                    } else {
                        let m = fresh.len() as f64 + 1.0;
                        (0..fresh.len())
                            .map(|k| back + 2.0 * PI * (k as f64 + 1.0) / m)
                            .collect()
                    }
                }
                _ => {
                    let mean = placed
                        .iter()
                        .fold(Point::default(), |acc, &p| acc.add(p))
                        .mul(1.0 / placed.len() as f64);
                    let out = pv.sub(mean).unit_or(Point::new(1.0, 0.0)).angle();
                    let m = fresh.len() as f64;
                    (0..fresh.len())
                        .map(|k| out + (k as f64 - (m - 1.0) / 2.0) * PI / 6.0)
                        .collect()
                }
            };
            for (&u, a) in fresh.iter().zip(dirs) {
                pos[u] = Some(pv.add(Point::polar(a)));
                turn[u] = -turn[v];
                queue.push_back(u);
            }
        }
    }
    let mut coords: Vec<Point> = pos.into_iter().map(|p| p.unwrap_or_default()).collect();
    relax(g, &mut coords);
    coords
}

/// Place the unplaced atoms of `cycle` as a regular polygon. Returns the
/// atoms newly placed.
fn place_ring(
    cycle: &[usize],
    v: usize,
    pos: &mut [Option<Point>],
    g: &MolecularGraph,
) -> Vec<usize> {
    if cycle.iter().all(|&a| pos[a].is_some()) {
        return Vec::new();
    }
    let k = cycle.len();
    let r = 1.0 / (2.0 * sin(PI / k as f64));
    let step = 2.0 * PI / k as f64;
    let start = cycle.iter().position(|&a| a == v).expect("v on cycle");
    let walk: Vec<usize> = (0..k).map(|i| cycle[(start + i) % k]).collect();

    // Fused: an already placed edge next to v fixes the polygon.
    let shared = [1, k - 1]
        .into_iter()
        .find(|&i| pos[walk[i]].is_some())
        .map(|i| if i == 1 { walk.clone() } else { reversed_from_first(&walk) });

    let pv = pos[v].expect("v placed");
    match shared {
        Some(w) => {
            let pb = pos[w[1]].expect("shared edge placed");
            let mid = pv.add(pb).mul(0.5);
            let edge = pb.sub(pv);
            let normal = Point::new(-edge.y, edge.x).unit_or(Point::new(0.0, 1.0));
            let apothem = 0.5 / tan(PI / k as f64);
            let c1 = mid.add(normal.mul(apothem));
            let c2 = mid.sub(normal.mul(apothem));
            // Build on the side of the shared edge with more free room.
            let clearance = |c: Point| {
                pos.iter()
                    .enumerate()
                    .filter(|&(i, _)| i != v && i != w[1])
                    .filter_map(|(_, p)| *p)
                    .map(|p| p.distance(c))
                    .fold(f64::INFINITY, f64::min)
            };
            let c = if clearance(c1) >= clearance(c2) { c1 } else { c2 };
            let a0 = pv.sub(c).angle();
            let mut d = pb.sub(c).angle() - a0;
            while d > PI {
                d -= 2.0 * PI;
            }
            while d < -PI {
                d += 2.0 * PI;
            }
            let dir = if d >= 0.0 { 1.0 } else { -1.0 };
            finish(&w, c, r, a0, dir * step, pos)
        }
        None => {
            let placed: Vec<Point> = g
                .neighbors(v)
                .iter()
                .filter_map(|&(u, _)| pos[u])
                .collect();
            let out = if placed.is_empty() {
                Point::new(1.0, 0.0)
            } else {
                let mean = placed
                    .iter()
                    .fold(Point::default(), |acc, &p| acc.add(p))
                    .mul(1.0 / placed.len() as f64);
                pv.sub(mean).unit_or(Point::new(1.0, 0.0))
            };
            let c = pv.add(out.mul(r));
            finish(&walk, c, r, pv.sub(c).angle(), step, pos)
        }
    }
}

fn reversed_from_first(walk: &[usize]) -> Vec<usize> {
    let mut w = vec![walk[0]];
    w.extend(walk[1..].iter().rev());
    w
}

fn finish(
    walk: &[usize],
    center: Point,
    r: f64,
    a0: f64,
    step: f64,
    pos: &mut [Option<Point>],
) -> Vec<usize> {
    let mut placed = Vec::new();
    for (i, &a) in walk.iter().enumerate() {
        if pos[a].is_none() {
            pos[a] = Some(center.add(Point::polar(a0 + step * i as f64).mul(r)));
            placed.push(a);
        }
    }
    placed
}

/// Push apart atoms closer than `MIN_DISTANCE` (non-bonded clashes from
/// crowded branches or bridged rings) while holding bonds near unit length.
fn relax(g: &MolecularGraph, p: &mut [Point]) {
    let n = p.len();
    for _ in 0..500 {
        let mut worst = f64::INFINITY;
        let mut delta = vec![Point::default(); n];
        for i in 0..n {
            for j in i + 1..n {
                let d = p[i].distance(p[j]);
                worst = worst.min(d);
                if d < MIN_DISTANCE + 0.1 {
                    let dir = p[i].sub(p[j]).unit_or(Point::polar((i * 7 + j) as f64));
                    let push = dir.mul(0.5 * (MIN_DISTANCE + 0.1 - d));
                    delta[i] = delta[i].add(push);
                    delta[j] = delta[j].sub(push);
                }
            }
        }
        if worst >= MIN_DISTANCE {
            return;
        }
        for b in g.bonds() {
            let d = p[b.a].sub(p[b.b]);
            let len = d.norm();
            if len > 1e-9 {
                let corr = d.mul(0.25 * (1.0 - len) / len);
                delta[b.a] = delta[b.a].add(corr);
                delta[b.b] = delta[b.b].sub(corr);
            }
        }
        for (pi, di) in p.iter_mut().zip(delta) {
            *pi = pi.add(di);
        }
    }
}

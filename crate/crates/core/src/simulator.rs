//! Procedural forest-occlusion scenes with exact ground truth.
//!
//! A scene is a textured ground plane at `Z = 0` carrying disk-shaped
//! targets, under a canopy layer of opaque horizontal disks. Occluders are
//! real geometry, so one leaf hides consistent ground regions in every
//! camera. Rendering casts one ray per pixel; the nearest occluder wins,
//! otherwise the ray lands on a target or on the ground texture.
//! Ground-truth labels come from the same ray caster with occluders
//! switched off.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ArrayRig, FocalPlane, PixelRays, Rect, View};
use crate::integrator::FrameSet;
use crate::raster::{Color, LabelRaster, RasterImage};

pub use crate::dataset::simulate_flight;

/// Upper bound on the number of canopy disks.
pub const MAX_OCCLUDERS: usize = 1_000_000;
const DENSITY_PROBES: usize = 40_000;

/// Default flying altitude (m).
pub const DEFAULT_ALTITUDE_M: f64 = 35.0;
const CLUTTER: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTexture {
    pub base: [f64; 3],
    /// Peak deviation from `base` per channel.
    pub amplitude: f64,
    /// Cell size of the coarsest noise octave (m).
    pub cell_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccluderLayer {
    pub min_height_m: f64,
    pub max_height_m: f64,
    pub min_radius_m: f64,
    pub max_radius_m: f64,
}

/// Canopy color distribution: a base color is drawn uniformly, scaled by a
/// random brightness and perturbed per channel. A `clutter_fraction` of the
/// disks are small flecks (sunlit leaves, deep shadow) with a radius in
/// `clutter_radius_m` and a base color from `clutter_colors`, perturbed per
/// channel but not rescaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccluderPalette {
    pub colors: Vec<[f64; 3]>,
    #[serde(default)]
    pub clutter_colors: Vec<[f64; 3]>,
    #[serde(default)]
    pub clutter_fraction: f64,
    #[serde(default)]
    pub clutter_radius_m: [f64; 2],
    /// Brightness factor drawn from `[1 - b, 1 + b]`.
    pub brightness_jitter: f64,
    /// Per-channel additive jitter drawn from `[-c, c]`.
    pub color_jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub color: [f64; 3],
    pub radius_m: f64,
    /// Ground polyline (m); a single point makes a static target.
    pub waypoints: Vec<[f64; 2]>,
    pub speed_mps: f64,
}

impl TargetSpec {
    /// Position at `time_s`, moving along the waypoints at constant speed
    /// and resting at the last one.
    pub fn position(&self, time_s: f64) -> [f64; 2] {
        let mut remaining = (self.speed_mps * time_s).max(0.0);
        for seg in self.waypoints.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            if remaining <= len && len > 0.0 {
                let f = remaining / len;
                return [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])];
            }
            remaining -= len;
        }
        *self.waypoints.last().expect("validated non-empty")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub extent: Rect,
    pub background: GroundTexture,
    /// Fraction of vertical rays that hit the canopy, in `[0, 1)`.
    pub occluder_density: f64,
    pub layer: OccluderLayer,
    pub palette: OccluderPalette,
    pub targets: Vec<TargetSpec>,
    /// Standard deviation of additive Gaussian color noise; zero disables it.
    pub noise_sigma: f64,
    pub seed: u64,
}

/// White, black, blue and red, in that order.
pub const TARGET_COLORS: [[f64; 3]; 4] = [[0.95, 0.95, 0.95], [0.03, 0.03, 0.05], [0.10, 0.25, 0.85], [0.85, 0.08, 0.08]];

impl SceneSpec {
    /// Forest scene over a 64 m square with no targets.
    pub fn forest(seed: u64, occluder_density: f64) -> Self {
        Self {
            extent: Rect::centered(64.0, 64.0),
            background: GroundTexture { base: [0.32, 0.27, 0.18], amplitude: 0.07, cell_m: 0.8 },
            occluder_density,
            layer: OccluderLayer { min_height_m: 15.0, max_height_m: 25.0, min_radius_m: 0.2, max_radius_m: 0.8 },
            palette: OccluderPalette {
                colors: vec![
                    [0.14, 0.30, 0.09],
                    [0.24, 0.42, 0.13],
                    [0.36, 0.42, 0.16],
                    [0.34, 0.25, 0.13],
                    [0.20, 0.15, 0.09],
                    [0.55, 0.62, 0.30],
                    [0.08, 0.12, 0.06],
                ],
                clutter_colors: vec![[1.0, 1.0, 0.92], [0.02, 0.02, 0.02]],
                clutter_fraction: CLUTTER,
                clutter_radius_m: [0.05, 0.15],
                brightness_jitter: 0.45,
                color_jitter: 0.05,
            },
            targets: Vec::new(),
            noise_sigma: 0.0,
            seed,
        }
    }

    /// Forest scene with two walking targets crossing the center view on
    /// parallel, well separated paths.
    pub fn two_walkers(seed: u64, occluder_density: f64) -> Self {
        let mut s = Self::forest(seed, occluder_density);
        s.targets = vec![
            TargetSpec { color: TARGET_COLORS[3], radius_m: 0.7, waypoints: vec![[-5.0, 3.0], [5.0, 3.0]], speed_mps: 1.4 },
            TargetSpec { color: TARGET_COLORS[2], radius_m: 0.7, waypoints: vec![[5.0, -3.0], [-5.0, -3.0]], speed_mps: 1.4 },
        ];
        s
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.occluder_density) {
            return Err(Error::InvalidScene(format!("occluder density {} outside [0, 1)", self.occluder_density)));
        }
        if !(self.extent.area() > 0.0) {
            return Err(Error::InvalidScene("extent has no area".into()));
        }
        let l = &self.layer;
        if !(l.min_height_m > 0.0 && l.max_height_m >= l.min_height_m) {
            return Err(Error::InvalidScene("occluder layer must lie above the ground".into()));
        }
        if !(l.min_radius_m > 0.0 && l.max_radius_m >= l.min_radius_m) {
            return Err(Error::InvalidScene("occluder radii must be positive".into()));
        }
        let p = &self.palette;
        if !(0.0..=1.0).contains(&p.clutter_fraction) {
            return Err(Error::InvalidScene("clutter fraction outside [0, 1]".into()));
        }
        if p.clutter_fraction > 0.0 && !(p.clutter_radius_m[0] > 0.0 && p.clutter_radius_m[1] >= p.clutter_radius_m[0]) {
            return Err(Error::InvalidScene("clutter radii must be positive".into()));
        }
        if self.palette.colors.is_empty() {
            return Err(Error::InvalidScene("occluder palette is empty".into()));
        }
        if !(self.background.cell_m > 0.0) {
            return Err(Error::InvalidScene("texture cell size must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidScene("noise sigma must be non-negative".into()));
        }
        if self.targets.len() > 255 {
            return Err(Error::InvalidScene("at most 255 targets".into()));
        }
        for (k, t) in self.targets.iter().enumerate() {
            if !(t.radius_m > 0.0) {
                return Err(Error::InvalidScene(format!("target {k} radius must be positive")));
            }
            if t.waypoints.is_empty() || !(t.speed_mps >= 0.0) {
                return Err(Error::InvalidScene(format!("target {k} needs waypoints and a non-negative speed")));
            }
            if t.waypoints.iter().any(|w| !self.extent.contains(w[0], w[1])) {
                return Err(Error::InvalidScene(format!("target {k} trajectory leaves the extent")));
            }
        }
        Ok(())
    }
}

/// Opaque horizontal canopy disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub center: [f64; 3],
    pub radius: f64,
    pub color: Color,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    pub occluders: Vec<Occluder>,
    /// Occluded fraction of the calibration probes at the end of placement.
    pub realized_density: f64,
}

struct ProbeGrid {
    origin: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<usize>>,
    probes: Vec<[f64; 2]>,
    covered: Vec<bool>,
    hits: usize,
}

impl ProbeGrid {
    fn new(extent: &Rect, n: usize, rng: &mut ChaCha8Rng) -> Self {
        let cell = 1.0;
        let nx = ((extent.max[0] - extent.min[0]) / cell).ceil().max(1.0) as usize;
        let ny = ((extent.max[1] - extent.min[1]) / cell).ceil().max(1.0) as usize;
        let mut cells = vec![Vec::new(); nx * ny];
        let mut probes = Vec::with_capacity(n);
        for i in 0..n {
            let x = rng.random_range(extent.min[0]..extent.max[0]);
            let y = rng.random_range(extent.min[1]..extent.max[1]);
            let cx = (((x - extent.min[0]) / cell) as usize).min(nx - 1);
            let cy = (((y - extent.min[1]) / cell) as usize).min(ny - 1);
            cells[cy * nx + cx].push(i);
            probes.push([x, y]);
        }
        Self { origin: extent.min, cell, nx, ny, cells, probes, covered: vec![false; n], hits: 0 }
    }

    fn cover(&mut self, cx: f64, cy: f64, r: f64) {
        let lo_x = ((cx - r - self.origin[0]) / self.cell).floor().max(0.0) as usize;
        let lo_y = ((cy - r - self.origin[1]) / self.cell).floor().max(0.0) as usize;
        let hi_x = (((cx + r - self.origin[0]) / self.cell).floor().max(-1.0) + 1.0) as usize;
        let hi_y = (((cy + r - self.origin[1]) / self.cell).floor().max(-1.0) + 1.0) as usize;
        for gy in lo_y..hi_y.min(self.ny) {
            for gx in lo_x..hi_x.min(self.nx) {
                for &i in &self.cells[gy * self.nx + gx] {
                    if !self.covered[i] {
                        let p = self.probes[i];
                        if (p[0] - cx).powi(2) + (p[1] - cy).powi(2) <= r * r {
                            self.covered[i] = true;
                            self.hits += 1;
                        }
                    }
                }
            }
        }
    }

    fn fraction(&self) -> f64 {
        self.hits as f64 / self.probes.len() as f64
    }
}

/// Places canopy disks until the vertical-ray occlusion fraction, measured
/// on a fixed set of random probes, reaches the requested density.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    generate_scene_capped(spec, MAX_OCCLUDERS)
}

pub fn generate_scene_capped(spec: &SceneSpec, cap: usize) -> Result<Scene> {
    spec.validate()?;
    let target = spec.occluder_density;
    if target == 0.0 {
        return Ok(Scene { spec: spec.clone(), occluders: Vec::new(), realized_density: 0.0 });
    }
    let mut probe_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut grid = ProbeGrid::new(&spec.extent, DENSITY_PROBES, &mut probe_rng);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let l = &spec.layer;
    let p = &spec.palette;
    let margin = l.max_radius_m;
    let (x0, x1) = (spec.extent.min[0] - margin, spec.extent.max[0] + margin);
    let (y0, y1) = (spec.extent.min[1] - margin, spec.extent.max[1] + margin);
    let mut occluders = Vec::new();
    while grid.fraction() < target {
        if occluders.len() >= cap {
            return Err(Error::DensityUnreachable { target, reached: grid.fraction(), cap });
        }
        let x = rng.random_range(x0..x1);
        let y = rng.random_range(y0..y1);
        let z = uniform(&mut rng, l.min_height_m, l.max_height_m);
        let clutter = !p.clutter_colors.is_empty() && rng.random_bool(p.clutter_fraction);
        let r = if clutter {
            uniform(&mut rng, p.clutter_radius_m[0], p.clutter_radius_m[1])
        } else {
            uniform(&mut rng, l.min_radius_m, l.max_radius_m)
        };
        let base = if clutter {
            p.clutter_colors[rng.random_range(0..p.clutter_colors.len())]
        } else {
            p.colors[rng.random_range(0..p.colors.len())]
        };
        let bright = if clutter { 1.0 } else { uniform(&mut rng, 1.0 - p.brightness_jitter, 1.0 + p.brightness_jitter) };
        let mut color = [0.0f32; 3];
        for c in 0..3 {
            let j = uniform(&mut rng, -p.color_jitter, p.color_jitter);
            color[c] = (base[c] * bright + j).clamp(0.0, 1.0) as f32;
        }
        grid.cover(x, y, r);
        occluders.push(Occluder { center: [x, y, z], radius: r, color });
    }
    Ok(Scene { spec: spec.clone(), occluders, realized_density: grid.fraction() })
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

// ---------------------------------------------------------------------------
// Ground texture

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn lattice(seed: u64, octave: u64, ix: i64, iy: i64) -> [f64; 3] {
    let h = mix64(seed ^ mix64(octave.wrapping_add((ix as u64).wrapping_mul(0x9e37_79b9)) ^ (iy as u64).rotate_left(32)));
    let m = (1u64 << 21) - 1;
    let s = 1.0 / m as f64;
    [(h & m) as f64 * s, ((h >> 21) & m) as f64 * s, ((h >> 42) & m) as f64 * s]
}

#[inline]
fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

impl GroundTexture {
    /// Smooth value noise around `base`; the first noise channel drives a
    /// shared brightness component, the other two tint red and blue.
    pub fn color(&self, seed: u64, x: f64, y: f64) -> Color {
        let mut acc = [0.0f64; 3];
        let mut norm = 0.0;
        let mut cell = self.cell_m;
        let mut weight = 1.0;
        for octave in 0..3u64 {
            let fx = x / cell;
            let fy = y / cell;
            let ix = fx.floor();
            let iy = fy.floor();
            let (tx, ty) = (smooth(fx - ix), smooth(fy - iy));
            let (ix, iy) = (ix as i64, iy as i64);
            let c00 = lattice(seed, octave, ix, iy);
            let c10 = lattice(seed, octave, ix + 1, iy);
            let c01 = lattice(seed, octave, ix, iy + 1);
            let c11 = lattice(seed, octave, ix + 1, iy + 1);
            for c in 0..3 {
                let a = c00[c] + tx * (c10[c] - c00[c]);
                let b = c01[c] + tx * (c11[c] - c01[c]);
                acc[c] += weight * (a + ty * (b - a) - 0.5);
            }
            norm += weight;
            weight *= 0.5;
            cell *= 0.5;
        }
        let lum = 2.0 * acc[0] / norm;
        let tint_r = 2.0 * acc[1] / norm;
        let tint_b = 2.0 * acc[2] / norm;
        let a = self.amplitude;
        [
            (self.base[0] + a * (0.8 * lum + 0.3 * tint_r)).clamp(0.0, 1.0) as f32,
            (self.base[1] + a * (0.8 * lum)).clamp(0.0, 1.0) as f32,
            (self.base[2] + a * (0.8 * lum + 0.3 * tint_b)).clamp(0.0, 1.0) as f32,
        ]
    }
}

// ---------------------------------------------------------------------------
// Ray casting

const HIT_GROUND: u32 = 0;
const HIT_NONE: u32 = u32::MAX;
const OCCLUDER_BASE: u32 = 256;

/// What the ray through each pixel hits first: `0` ground, `1..=255`
/// target label, `256 + i` occluder `i`, `u32::MAX` nothing (ray misses the
/// ground).
struct HitBuffer {
    width: usize,
    height: usize,
    hits: Vec<u32>,
    ground: Vec<[f64; 2]>,
}

fn cast_ground(scene: &Scene, rays: &PixelRays, time_s: f64) -> HitBuffer {
    let (w, h) = (rays.width(), rays.height());
    let positions: Vec<([f64; 2], f64)> = scene.spec.targets.iter().map(|t| (t.position(time_s), t.radius_m)).collect();
    let mut hits = vec![HIT_NONE; w * h];
    let mut ground = vec![[f64::NAN; 2]; w * h];
    hits.par_chunks_mut(w).zip(ground.par_chunks_mut(w)).enumerate().for_each(|(y, (hrow, grow))| {
        let v = y as f64 + 0.5;
        for x in 0..w {
            let Some(g) = rays.plane_point(x as f64 + 0.5, v, 0.0) else { continue };
            grow[x] = [g.x, g.y];
            hrow[x] = HIT_GROUND;
            for (k, (c, r)) in positions.iter().enumerate() {
                if (g.x - c[0]).powi(2) + (g.y - c[1]).powi(2) <= r * r {
                    hrow[x] = k as u32 + 1;
                    break;
                }
            }
        }
    });
    HitBuffer { width: w, height: h, hits, ground }
}

/// Overwrites hits with the nearest canopy disk along each pixel ray.
fn cast_occluders(scene: &Scene, rays: &PixelRays, buf: &mut HitBuffer) {
    let (w, h) = (buf.width, buf.height);
    let center = rays.center();
    // circumscribed 16-gon: its projection contains the projected disk
    let n = 16;
    let grow = 1.0 / (std::f64::consts::PI / n as f64).cos();
    let boxes: Vec<Option<[usize; 4]>> = scene
        .occluders
        .iter()
        .map(|o| {
            if o.center[2] >= center.z {
                return None;
            }
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for i in 0..n {
                let a = i as f64 * std::f64::consts::TAU / n as f64;
                let p =
                    Vector3::new(o.center[0] + o.radius * grow * a.cos(), o.center[1] + o.radius * grow * a.sin(), o.center[2]);
                let q = rays.project(&p)?;
                lo[0] = lo[0].min(q.pixel[0]);
                lo[1] = lo[1].min(q.pixel[1]);
                hi[0] = hi[0].max(q.pixel[0]);
                hi[1] = hi[1].max(q.pixel[1]);
            }
            // pixel centers at i + 0.5 inside [lo, hi]
            let x0 = (lo[0] - 0.5).ceil().max(0.0);
            let y0 = (lo[1] - 0.5).ceil().max(0.0);
            let x1 = ((hi[0] - 0.5).floor() + 1.0).min(w as f64);
            let y1 = ((hi[1] - 0.5).floor() + 1.0).min(h as f64);
            (x1 > x0 && y1 > y0).then_some([x0 as usize, y0 as usize, x1 as usize, y1 as usize])
        })
        .collect();

    const BAND: usize = 32;
    let to_dir = *rays.to_dir();
    buf.hits.par_chunks_mut(w * BAND).enumerate().for_each(|(band, hits)| {
        let y_lo = band * BAND;
        let y_hi = y_lo + hits.len() / w;
        let mut depth = vec![f64::INFINITY; hits.len()];
        for (i, (o, bb)) in scene.occluders.iter().zip(&boxes).enumerate() {
            let Some([x0, y0, x1, y1]) = *bb else { continue };
            if y1 <= y_lo || y0 >= y_hi {
                continue;
            }
            let r2 = o.radius * o.radius;
            let dz_plane = o.center[2] - center.z;
            for y in y0.max(y_lo)..y1.min(y_hi) {
                let v = y as f64 + 0.5;
                for x in x0..x1 {
                    let d = to_dir * Vector3::new(x as f64 + 0.5, v, 1.0);
                    let t = dz_plane / d.z;
                    if !(t > 0.0) {
                        continue;
                    }
                    let idx = (y - y_lo) * w + x;
                    if t >= depth[idx] {
                        continue;
                    }
                    let px = center.x + t * d.x - o.center[0];
                    let py = center.y + t * d.y - o.center[1];
                    if px * px + py * py <= r2 {
                        depth[idx] = t;
                        hits[idx] = OCCLUDER_BASE + i as u32;
                    }
                }
            }
        }
    });
}

fn check_above_canopy(scene: &Scene, rays: &PixelRays) -> Result<()> {
    if !(rays.center().z > scene.spec.layer.max_height_m) {
        return Err(Error::InvalidScene(format!("camera at {:.2} m is not above the occluder layer", rays.center().z)));
    }
    Ok(())
}

fn shade(scene: &Scene, buf: &HitBuffer, noise_seed: Option<u64>) -> RasterImage {
    let spec = &scene.spec;
    let mut img = RasterImage::new(buf.width, buf.height);
    let w = buf.width;
    img.pixels_mut().par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let mut rng = noise_seed.map(|s| ChaCha8Rng::seed_from_u64(mix64(s ^ y as u64)));
        let normal = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).unwrap();
        for (x, px) in row.iter_mut().enumerate() {
            let i = y * w + x;
            let hit = buf.hits[i];
            let mut c = match hit {
                HIT_NONE => [0.0; 3],
                HIT_GROUND => spec.background.color(spec.seed, buf.ground[i][0], buf.ground[i][1]),
                k if k < OCCLUDER_BASE => spec.targets[k as usize - 1].color.map(|v| v as f32),
                k => scene.occluders[(k - OCCLUDER_BASE) as usize].color,
            };
            if let Some(rng) = rng.as_mut() {
                for v in &mut c {
                    *v = (*v as f64 + normal.sample(rng)).clamp(0.0, 1.0) as f32;
                }
            }
            *px = c;
        }
    });
    img
}

fn labels_from(scene: &Scene, buf: &HitBuffer) -> LabelRaster {
    let data =
        buf.hits.iter().map(|&h| if h != HIT_NONE && h != HIT_GROUND && h < OCCLUDER_BASE { h as u8 } else { 0 }).collect();
    LabelRaster::from_vec(buf.width, buf.height, scene.spec.targets.len(), data).expect("sizes match")
}

fn noise_seed(scene: &Scene, rays: &PixelRays, time_s: f64) -> Option<u64> {
    (scene.spec.noise_sigma > 0.0).then(|| {
        let c = rays.center();
        mix64(scene.spec.seed ^ mix64(c.x.to_bits() ^ mix64(c.y.to_bits() ^ mix64(c.z.to_bits() ^ time_s.to_bits()))))
    })
}

/// Renders one camera at `time_s`.
pub fn render_view(scene: &Scene, view: &View, time_s: f64) -> Result<RasterImage> {
    let rays = PixelRays::for_view(view);
    check_above_canopy(scene, &rays)?;
    let mut buf = cast_ground(scene, &rays, time_s);
    cast_occluders(scene, &rays, &mut buf);
    Ok(shade(scene, &buf, noise_seed(scene, &rays, time_s)))
}

/// Occlusion-free rendering of the focal-plane raster seen from `reference`.
pub fn render_reference(scene: &Scene, plane: &FocalPlane, reference: &View, time_s: f64) -> RasterImage {
    let rays = PixelRays::for_grid(reference, plane);
    let buf = cast_ground(scene, &rays, time_s);
    shade(scene, &buf, None)
}

/// Target position at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetCentroid {
    pub target_id: usize,
    pub world: [f64; 2],
    /// Position on the focal-plane raster (continuous pixel coordinates).
    pub pixel: [f64; 2],
}

/// Ground truth for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub frame_index: usize,
    pub time_s: f64,
    /// Occlusion-free target labels on the focal-plane raster.
    pub labels: LabelRaster,
    pub centroids: Vec<TargetCentroid>,
    /// Occlusion-free target labels in each camera raster.
    pub camera_labels: Vec<LabelRaster>,
    /// Target labels actually visible through the canopy in each camera.
    pub camera_visibility: Vec<LabelRaster>,
}

impl GroundTruth {
    pub fn num_targets(&self) -> usize {
        self.labels.num_labels()
    }
}

fn centroids(scene: &Scene, rays: &PixelRays, time_s: f64) -> Vec<TargetCentroid> {
    scene
        .spec
        .targets
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let w = t.position(time_s);
            let pixel = rays.project(&Vector3::new(w[0], w[1], 0.0)).map_or([f64::NAN; 2], |p| p.pixel);
            TargetCentroid { target_id: k, world: w, pixel }
        })
        .collect()
}

/// Target labels on the focal-plane raster, occluders removed.
pub fn render_ground_truth(scene: &Scene, plane: &FocalPlane, reference: &View, time_s: f64) -> GroundTruth {
    let rays = PixelRays::for_grid(reference, plane);
    let buf = cast_ground(scene, &rays, time_s);
    GroundTruth {
        frame_index: 0,
        time_s,
        labels: labels_from(scene, &buf),
        centroids: centroids(scene, &rays, time_s),
        camera_labels: Vec::new(),
        camera_visibility: Vec::new(),
    }
}

/// Renders every camera of `rig` plus full ground truth for one instant.
pub fn render_frame(
    scene: &Scene,
    rig: &ArrayRig,
    plane: &FocalPlane,
    frame_index: usize,
    time_s: f64,
) -> Result<(FrameSet, GroundTruth)> {
    let mut images = Vec::with_capacity(rig.count());
    let mut camera_labels = Vec::with_capacity(rig.count());
    let mut camera_visibility = Vec::with_capacity(rig.count());
    for view in rig.cameras() {
        let rays = PixelRays::for_view(view);
        check_above_canopy(scene, &rays)?;
        let mut buf = cast_ground(scene, &rays, time_s);
        camera_labels.push(labels_from(scene, &buf));
        cast_occluders(scene, &rays, &mut buf);
        camera_visibility.push(labels_from(scene, &buf));
        images.push(shade(scene, &buf, noise_seed(scene, &rays, time_s)));
    }
    let mut truth = render_ground_truth(scene, plane, rig.reference(), time_s);
    truth.frame_index = frame_index;
    truth.camera_labels = camera_labels;
    truth.camera_visibility = camera_visibility;
    Ok((FrameSet::from_rig(rig, images, frame_index)?, truth))
}

/// The rig of the prototype: ten 41.10° cameras at 1 m spacing.
pub fn paper_rig(altitude_m: f64, resolution: usize) -> Result<ArrayRig> {
    let cam = crate::geometry::CameraModel::from_fov(41.10, resolution, resolution)?;
    ArrayRig::linear(10, 1.0, altitude_m, cam)
}

/// Ground focal plane on the reference raster, restricted to the region
/// every camera of the rig sees.
pub fn ground_plane(rig: &ArrayRig) -> Result<FocalPlane> {
    FocalPlane::common_footprint(rig.cameras(), rig.reference(), 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ground_to_pixel, CameraModel, Pose};

    fn small_rig() -> ArrayRig {
        paper_rig(DEFAULT_ALTITUDE_M, 256).unwrap()
    }

    #[test]
    fn zero_density_has_no_occluders() {
        let s = generate_scene(&SceneSpec::forest(1, 0.0)).unwrap();
        assert!(s.occluders.is_empty());
    }

    #[test]
    fn scenes_are_seed_deterministic() {
        let a = generate_scene(&SceneSpec::two_walkers(42, 0.5)).unwrap();
        let b = generate_scene(&SceneSpec::two_walkers(42, 0.5)).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(&SceneSpec::two_walkers(43, 0.5)).unwrap();
        assert_ne!(a.occluders, c.occluders);
    }

    #[test]
    fn density_validation_and_cap() {
        assert!(generate_scene(&SceneSpec::forest(1, 1.0)).is_err());
        assert!(generate_scene(&SceneSpec::forest(1, -0.1)).is_err());
        assert!(matches!(generate_scene_capped(&SceneSpec::forest(1, 0.9), 100), Err(Error::DensityUnreachable { .. })));
    }

    #[test]
    fn density_reestimated_by_fresh_rays() {
        let scene = generate_scene(&SceneSpec::forest(11, 0.5)).unwrap();
        let e = scene.spec.extent;
        let mut rng = ChaCha8Rng::seed_from_u64(0xfeed);
        let n = 100_000;
        // brute force over every disk, no spatial index
        let hits = (0..n)
            .filter(|_| {
                let x = rng.random_range(e.min[0]..e.max[0]);
                let y = rng.random_range(e.min[1]..e.max[1]);
                scene.occluders.iter().any(|o| (x - o.center[0]).powi(2) + (y - o.center[1]).powi(2) <= o.radius * o.radius)
            })
            .count();
        let frac = hits as f64 / n as f64;
        assert!((0.48..=0.52).contains(&frac), "{frac}");
    }

    #[test]
    fn invalid_targets_rejected() {
        let mut s = SceneSpec::two_walkers(1, 0.1);
        s.targets[0].waypoints.push([100.0, 0.0]);
        assert!(generate_scene(&s).is_err());
        let mut s = SceneSpec::two_walkers(1, 0.1);
        s.targets[1].radius_m = 0.0;
        assert!(generate_scene(&s).is_err());
    }

    #[test]
    fn trajectory_moves_at_speed() {
        let t = &SceneSpec::two_walkers(0, 0.0).targets[0];
        let a = t.position(1.0);
        let b = t.position(1.5);
        let d = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        assert!((d - 0.7).abs() < 1e-12);
        assert_eq!(t.position(100.0), [5.0, 3.0]);
        assert_eq!(t.position(0.0), [-5.0, 3.0]);
    }

    #[test]
    fn no_targets_gives_empty_truth() {
        let scene = generate_scene(&SceneSpec::forest(3, 0.0)).unwrap();
        let rig = small_rig();
        let plane = ground_plane(&rig).unwrap();
        let gt = render_ground_truth(&scene, &plane, rig.reference(), 0.0);
        assert!(gt.labels.as_slice().iter().all(|&l| l == 0));
        assert_eq!(gt.num_targets(), 0);
    }

    #[test]
    fn truth_area_matches_disk_area() {
        let mut spec = SceneSpec::forest(3, 0.0);
        spec.targets = vec![TargetSpec { color: TARGET_COLORS[0], radius_m: 1.5, waypoints: vec![[0.0, 0.0]], speed_mps: 0.0 }];
        let scene = generate_scene(&spec).unwrap();
        let rig = small_rig();
        let plane = ground_plane(&rig).unwrap();
        let gt = render_ground_truth(&scene, &plane, rig.reference(), 0.0);
        let gsd = 2.0 * 35.0 * 20.55f64.to_radians().tan() / 256.0;
        let expected = std::f64::consts::PI * 1.5 * 1.5 / (gsd * gsd);
        let got = gt.labels.histogram()[1] as f64;
        assert!((got - expected).abs() < 0.05 * expected, "{got} vs {expected}");
    }

    #[test]
    fn truth_centroid_matches_projection() {
        let scene = generate_scene(&SceneSpec::two_walkers(5, 0.0)).unwrap();
        let rig = small_rig();
        let plane = ground_plane(&rig).unwrap();
        let gt = render_ground_truth(&scene, &plane, rig.reference(), 2.0);
        let r = rig.reference();
        for c in &gt.centroids {
            let p = ground_to_pixel(&Vector3::new(c.world[0], c.world[1], 0.0), &r.camera, &r.pose).unwrap();
            assert!((p.pixel[0] - c.pixel[0]).abs() < 1e-9 && (p.pixel[1] - c.pixel[1]).abs() < 1e-9);
            let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
            for y in 0..gt.labels.height() {
                for x in 0..gt.labels.width() {
                    if gt.labels.get(x, y) as usize == c.target_id + 1 {
                        sx += x as f64 + 0.5;
                        sy += y as f64 + 0.5;
                        n += 1.0;
                    }
                }
            }
            assert!((sx / n - c.pixel[0]).abs() < 0.5 && (sy / n - c.pixel[1]).abs() < 0.5);
            let inside = gt.labels.get(c.pixel[0] as usize, c.pixel[1] as usize) as usize;
            assert_eq!(inside, c.target_id + 1);
        }
    }

    #[test]
    fn unoccluded_view_shows_targets_where_truth_says() {
        let scene = generate_scene(&SceneSpec::two_walkers(7, 0.0)).unwrap();
        let rig = small_rig();
        let plane = ground_plane(&rig).unwrap();
        let (frames, gt) = render_frame(&scene, &rig, &plane, 0, 1.0).unwrap();
        let reference = &frames.images()[rig.center_index()];
        for k in 0..2 {
            let color = scene.spec.targets[k].color.map(|c| c as f32);
            let mut inter = 0;
            let mut union = 0;
            for (p, &l) in reference.pixels().iter().zip(gt.labels.as_slice()) {
                let is_color = *p == color;
                let is_label = l as usize == k + 1;
                inter += usize::from(is_color && is_label);
                union += usize::from(is_color || is_label);
            }
            assert!(inter as f64 / union as f64 >= 0.95);
        }
        assert_eq!(gt.camera_labels[rig.center_index()], gt.labels);
        assert_eq!(gt.camera_visibility[rig.center_index()], gt.labels);
    }

    #[test]
    fn occluders_are_view_consistent() {
        // a single disk hides the same ground point in two cameras
        let mut spec = SceneSpec::forest(1, 0.0);
        spec.targets.clear();
        let mut scene = generate_scene(&spec).unwrap();
        scene.occluders.push(Occluder { center: [0.0, 0.0, 20.0], radius: 0.5, color: [1.0, 0.0, 1.0] });
        let cam = CameraModel::from_fov(41.1, 128, 128).unwrap();
        let a = View::new(cam, Pose::nadir(Vector3::new(0.0, 0.0, 35.0)));
        let b = View::new(cam, Pose::nadir(Vector3::new(1.0, 0.0, 35.0)));
        let ia = render_view(&scene, &a, 0.0).unwrap();
        let ib = render_view(&scene, &b, 0.0).unwrap();
        // disk center projects to the principal point in `a` and 15/35·... left in `b`
        assert_eq!(ia.get(64, 64), [1.0, 0.0, 1.0]);
        let pb = ground_to_pixel(&Vector3::new(0.0, 0.0, 20.0), &b.camera, &b.pose).unwrap();
        assert_eq!(ib.get(pb.pixel[0] as usize, pb.pixel[1] as usize), [1.0, 0.0, 1.0]);
        // the ground point behind the disk for `a` is visible in a far-away camera
        let c = View::new(cam, Pose::nadir(Vector3::new(6.0, 0.0, 35.0)));
        let pc = ground_to_pixel(&Vector3::new(0.0, 0.0, 0.0), &c.camera, &c.pose).unwrap();
        let ic = render_view(&scene, &c, 0.0).unwrap();
        assert_ne!(ic.get(pc.pixel[0] as usize, pc.pixel[1] as usize), [1.0, 0.0, 1.0]);
    }

    #[test]
    fn camera_in_canopy_is_rejected() {
        let scene = generate_scene(&SceneSpec::forest(1, 0.1)).unwrap();
        let cam = CameraModel::from_fov(41.1, 32, 32).unwrap();
        let v = View::new(cam, Pose::nadir(Vector3::new(0.0, 0.0, 20.0)));
        assert!(render_view(&scene, &v, 0.0).is_err());
    }

    #[test]
    fn noise_is_deterministic() {
        let mut spec = SceneSpec::forest(9, 0.2);
        spec.noise_sigma = 0.02;
        let scene = generate_scene(&spec).unwrap();
        let v = *small_rig().reference();
        assert_eq!(render_view(&scene, &v, 0.5).unwrap(), render_view(&scene, &v, 0.5).unwrap());
    }

    fn color_centroid(img: &RasterImage, color: [f64; 3]) -> [f64; 2] {
        let color = color.map(|c| c as f32);
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        for (i, p) in img.pixels().iter().enumerate() {
            if *p == color {
                sx += (i % img.width()) as f64 + 0.5;
                sy += (i / img.width()) as f64 + 0.5;
                n += 1.0;
            }
        }
        assert!(n > 0.0);
        [sx / n, sy / n]
    }

    fn label_centroid(labels: &LabelRaster, label: u32) -> [f64; 2] {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        for y in 0..labels.height() {
            for x in 0..labels.width() {
                if u32::from(labels.get(x, y)) == label {
                    sx += x as f64 + 0.5;
                    sy += y as f64 + 0.5;
                    n += 1.0;
                }
            }
        }
        assert!(n > 0.0);
        [sx / n, sy / n]
    }

    #[test]
    fn translated_camera_shows_plane_parallax() {
        let mut spec = SceneSpec::two_walkers(3, 0.0);
        spec.targets = vec![TargetSpec { color: [0.95, 0.95, 0.95], radius_m: 1.0, waypoints: vec![[2.0, 1.0]], speed_mps: 0.0 }];
        let scene = generate_scene(&spec).unwrap();
        let rig = small_rig();
        let a = rig.reference();
        let b = &rig.cameras()[rig.center_index() + 1];
        let ca = color_centroid(&render_view(&scene, a, 0.0).unwrap(), spec.targets[0].color);
        let cb = color_centroid(&render_view(&scene, b, 0.0).unwrap(), spec.targets[0].color);
        let predicted = PixelRays::for_view(a).plane_homography(0.0, b).map(ca[0], ca[1]).unwrap();
        let shift = ((cb[0] - ca[0]).powi(2) + (cb[1] - ca[1]).powi(2)).sqrt();
        assert!(shift > 5.0, "{shift}");
        assert!((predicted[0] - cb[0]).abs() < 1.0 && (predicted[1] - cb[1]).abs() < 1.0, "{predicted:?} {cb:?}");
    }

    #[test]
    fn target_displacement_matches_speed() {
        let scene = generate_scene(&SceneSpec::two_walkers(4, 0.0)).unwrap();
        let rig = small_rig();
        let plane = ground_plane(&rig).unwrap();
        let gsd = 2.0 * 35.0 * 20.55f64.to_radians().tan() / 256.0;
        let (t0, dt) = (1.0, 2.5);
        let g0 = render_ground_truth(&scene, &plane, rig.reference(), t0);
        let g1 = render_ground_truth(&scene, &plane, rig.reference(), t0 + dt);
        for (k, t) in scene.spec.targets.iter().enumerate() {
            let p0 = label_centroid(&g0.labels, k as u32 + 1);
            let p1 = label_centroid(&g1.labels, k as u32 + 1);
            let moved = ((p1[0] - p0[0]).powi(2) + (p1[1] - p0[1]).powi(2)).sqrt() * gsd;
            assert!((moved - t.speed_mps * dt).abs() < gsd, "{moved}");
        }
    }
}

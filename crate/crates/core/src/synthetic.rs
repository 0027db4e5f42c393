//! Procedural test geometry: primitive meshes and a small labelled town
//! generator with ground, buildings, trees, water, vehicles and boats.
//!
//! Every object is emitted as its own connected component, so the
//! over-segmentation never mixes classes and the segment-level upper bound is
//! exact. Colours are jittered class palettes with several samples per face.

use crate::mesh_io::{ClassId, ColorSample, TriangleMesh, DEFAULT_FACE_COLOR};
use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Jittered colour source for one material.
#[derive(Clone, Copy, Debug)]
pub struct Palette {
    pub base: [u8; 3],
    pub jitter: u8,
}

impl Palette {
    pub const fn new(base: [u8; 3], jitter: u8) -> Self {
        Palette { base, jitter }
    }
}

/// Incremental triangle soup with labels and colours.
pub struct MeshBuilder {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
    labels: Vec<ClassId>,
    colors: Vec<Vec<ColorSample>>,
    rng: ChaCha8Rng,
    samples_per_face: usize,
}

impl MeshBuilder {
    pub fn new(seed: u64) -> Self {
        MeshBuilder {
            vertices: Vec::new(),
            faces: Vec::new(),
            labels: Vec::new(),
            colors: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            samples_per_face: 1,
        }
    }

    pub fn samples_per_face(mut self, n: usize) -> Self {
        self.samples_per_face = n.max(1);
        self
    }

    pub fn vertex(&mut self, p: Point3<f64>) -> u32 {
        self.vertices.push(p);
        (self.vertices.len() - 1) as u32
    }

    pub fn face(&mut self, f: [u32; 3], label: ClassId, palette: Option<Palette>) {
        let samples = (0..self.samples_per_face)
            .map(|_| match palette {
                Some(p) => {
                    let rgb = p.base.map(|c| {
                        let j = p.jitter as i32;
                        let d = if j == 0 {
                            0
                        } else {
                            self.rng.random_range(-j..=j)
                        };
                        (c as i32 + d).clamp(0, 255) as u8
                    });
                    let a: f64 = self.rng.random();
                    let b: f64 = self.rng.random::<f64>() * (1.0 - a);
                    ColorSample {
                        rgb,
                        site: [a, b, 1.0 - a - b],
                    }
                }
                None => ColorSample::at_centroid(DEFAULT_FACE_COLOR),
            })
            .collect();
        self.faces.push(f);
        self.labels.push(label);
        self.colors.push(samples);
    }

    /// Planar grid spanned by `u` and `v` from `corner`; the face normal is
    /// `u x v`. Heights along the normal can be displaced by `lift`.
    #[allow(clippy::too_many_arguments)]
    pub fn patch(
        &mut self,
        corner: Point3<f64>,
        u: Vector3<f64>,
        v: Vector3<f64>,
        nu: usize,
        nv: usize,
        label: ClassId,
        palette: Option<Palette>,
        lift: &dyn Fn(f64, f64) -> f64,
    ) {
        let normal = u.cross(&v).normalize();
        let base = self.vertices.len() as u32;
        for j in 0..=nv {
            for i in 0..=nu {
                let (s, t) = (i as f64 / nu as f64, j as f64 / nv as f64);
                let p = corner + u * s + v * t;
                self.vertex(p + normal * lift(p.x, p.y));
            }
        }
        let row = nu as u32 + 1;
        for j in 0..nv as u32 {
            for i in 0..nu as u32 {
                let a = base + j * row + i;
                let (b, c, d) = (a + 1, a + row + 1, a + row);
                self.face([a, b, c], label, palette);
                self.face([a, c, d], label, palette);
            }
        }
    }

    /// Axis-aligned box with outward normals, walls subdivided to roughly
    /// `cell` metres. The bottom is omitted unless `closed`.
    pub fn cuboid(
        &mut self,
        min: Point3<f64>,
        max: Point3<f64>,
        cell: f64,
        closed: bool,
        walls: (ClassId, Option<Palette>),
        top: (ClassId, Option<Palette>),
    ) {
        let d = max - min;
        let n = |len: f64| ((len / cell).round() as usize).max(1);
        let (x, y, z) = (Vector3::x() * d.x, Vector3::y() * d.y, Vector3::z() * d.z);
        let flat = |_: f64, _: f64| 0.0;
        // Top (+z) and bottom (-z).
        self.patch(min + z, x, y, n(d.x), n(d.y), top.0, top.1, &flat);
        if closed {
            self.patch(min, y, x, n(d.y), n(d.x), walls.0, walls.1, &flat);
        }
        // -y, +y, -x, +x walls.
        self.patch(min, x, z, n(d.x), n(d.z), walls.0, walls.1, &flat);
        self.patch(min + y + x, -x, z, n(d.x), n(d.z), walls.0, walls.1, &flat);
        self.patch(min + y, -y, z, n(d.y), n(d.z), walls.0, walls.1, &flat);
        self.patch(min + x, y, z, n(d.y), n(d.z), walls.0, walls.1, &flat);
    }

    /// Latitude/longitude ellipsoid with outward normals.
    pub fn ellipsoid(
        &mut self,
        center: Point3<f64>,
        radii: Vector3<f64>,
        stacks: usize,
        slices: usize,
        label: ClassId,
        palette: Option<Palette>,
    ) {
        let top = self.vertex(center + Vector3::new(0.0, 0.0, radii.z));
        let mut rings = Vec::new();
        for i in 1..stacks {
            let theta = PI * i as f64 / stacks as f64;
            let ring: Vec<u32> = (0..slices)
                .map(|j| {
                    let phi = 2.0 * PI * j as f64 / slices as f64;
                    let dir = Vector3::new(
                        theta.sin() * phi.cos() * radii.x,
                        theta.sin() * phi.sin() * radii.y,
                        theta.cos() * radii.z,
                    );
                    self.vertex(center + dir)
                })
                .collect();
            rings.push(ring);
        }
        let bottom = self.vertex(center - Vector3::new(0.0, 0.0, radii.z));
        for j in 0..slices {
            let k = (j + 1) % slices;
            self.face([top, rings[0][j], rings[0][k]], label, palette);
            let last = &rings[stacks - 2];
            self.face([bottom, last[k], last[j]], label, palette);
        }
        for r in 0..stacks - 2 {
            for j in 0..slices {
                let k = (j + 1) % slices;
                let (a, b) = (rings[r][j], rings[r][k]);
                let (c, d) = (rings[r + 1][k], rings[r + 1][j]);
                self.face([a, d, c], label, palette);
                self.face([a, c, b], label, palette);
            }
        }
    }

    pub fn build(self, tile_id: &str) -> TriangleMesh {
        let n = self.faces.len();
        TriangleMesh::from_parts(
            tile_id,
            self.vertices,
            self.faces,
            self.labels,
            vec![-1; n],
            self.colors,
        )
        .expect("builder emits valid geometry")
    }
}

/// Square grid `[0, size]²` at height `z`, `cells` × `cells` quads, normals up.
pub fn grid_plane(size: f64, cells: usize, z: f64) -> TriangleMesh {
    let mut b = MeshBuilder::new(0);
    b.patch(
        Point3::new(0.0, 0.0, z),
        Vector3::x() * size,
        Vector3::y() * size,
        cells,
        cells,
        ClassId::UNCLASSIFIED,
        None,
        &|_, _| 0.0,
    );
    b.build("grid")
}

/// Closed unit cube with 12 outward-facing triangles.
pub fn unit_cube() -> TriangleMesh {
    let mut b = MeshBuilder::new(0);
    for i in 0..8 {
        b.vertex(Point3::new(
            (i & 1) as f64,
            ((i >> 1) & 1) as f64,
            ((i >> 2) & 1) as f64,
        ));
    }
    const FACES: [[u32; 3]; 12] = [
        [0, 2, 3],
        [0, 3, 1],
        [4, 5, 7],
        [4, 7, 6],
        [0, 1, 5],
        [0, 5, 4],
        [2, 6, 7],
        [2, 7, 3],
        [0, 4, 6],
        [0, 6, 2],
        [1, 3, 7],
        [1, 7, 5],
    ];
    for f in FACES {
        b.face(f, ClassId::UNCLASSIFIED, None);
    }
    b.build("cube")
}

/// Sphere of `radius` at the origin with outward normals.
pub fn uv_sphere(radius: f64, stacks: usize, slices: usize) -> TriangleMesh {
    let mut b = MeshBuilder::new(0);
    b.ellipsoid(
        Point3::origin(),
        Vector3::repeat(radius),
        stacks,
        slices,
        ClassId::UNCLASSIFIED,
        None,
    );
    b.build("sphere")
}

/// Two `size` × `size` grids at z = 0 and z = `gap`, normals pointing away
/// from each other.
pub fn parallel_slabs(size: f64, cells: usize, gap: f64) -> TriangleMesh {
    let mut b = MeshBuilder::new(0);
    let flat = |_: f64, _: f64| 0.0;
    // Lower plane faces down: spanned by y then x.
    b.patch(
        Point3::origin(),
        Vector3::y() * size,
        Vector3::x() * size,
        cells,
        cells,
        ClassId::UNCLASSIFIED,
        None,
        &flat,
    );
    b.patch(
        Point3::new(0.0, 0.0, gap),
        Vector3::x() * size,
        Vector3::y() * size,
        cells,
        cells,
        ClassId::UNCLASSIFIED,
        None,
        &flat,
    );
    b.build("slabs")
}

pub mod palette {
    use super::Palette;

    pub const ASPHALT: Palette = Palette::new([105, 104, 100], 12);
    pub const WALL: Palette = Palette::new([196, 184, 160], 14);
    pub const ROOF_RED: Palette = Palette::new([140, 62, 48], 14);
    pub const ROOF_GREY: Palette = Palette::new([82, 84, 92], 10);
    pub const FOLIAGE: Palette = Palette::new([62, 118, 48], 18);
    pub const WATER: Palette = Palette::new([38, 72, 118], 10);
    pub const HULL: Palette = Palette::new([232, 232, 236], 8);
    pub const CAR_COLOURS: [Palette; 4] = [
        Palette::new([178, 24, 30], 10),
        Palette::new([28, 52, 160], 10),
        Palette::new([205, 190, 30], 10),
        Palette::new([30, 30, 34], 6),
    ];
}

/// Layout knobs for [`generate_town`].
#[derive(Clone, Debug)]
pub struct TownParams {
    /// Tile edge length (m).
    pub size: f64,
    pub buildings: (usize, usize),
    pub trees: (usize, usize),
    pub vehicles: (usize, usize),
    pub boats: (usize, usize),
    /// Probability that a tile has a water strip.
    pub water_probability: f64,
    pub samples_per_face: usize,
}

impl Default for TownParams {
    fn default() -> Self {
        TownParams {
            size: 80.0,
            buildings: (2, 4),
            trees: (3, 7),
            vehicles: (2, 5),
            boats: (1, 3),
            water_probability: 0.8,
            samples_per_face: 3,
        }
    }
}

/// Generates one labelled town tile. Deterministic in `seed`.
pub fn generate_town(tile_id: &str, seed: u64, params: &TownParams) -> TriangleMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_70c0);
    let mut b = MeshBuilder::new(seed).samples_per_face(params.samples_per_face);
    let size = params.size;
    let phase: f64 = rng.random_range(0.0..2.0 * PI);
    let ground = move |x: f64, y: f64| 0.6 * (x / 17.0 + phase).sin() * (y / 23.0).cos();

    let water_width = if rng.random_bool(params.water_probability) {
        rng.random_range(12.0..20.0)
    } else {
        0.0
    };
    let land_y0 = water_width;
    let cells = (size / 4.0).round() as usize;
    let land_cells_y = (((size - land_y0) / 4.0).round() as usize).max(1);
    b.patch(
        Point3::new(0.0, land_y0, 0.0),
        Vector3::x() * size,
        Vector3::y() * (size - land_y0),
        cells,
        land_cells_y,
        ClassId::TERRAIN,
        Some(palette::ASPHALT),
        &ground,
    );
    let water_z = -1.5;
    if water_width > 0.0 {
        let wc = ((water_width / 4.0).round() as usize).max(1);
        b.patch(
            Point3::new(0.0, 0.0, water_z),
            Vector3::x() * size,
            Vector3::y() * (water_width - 1.0),
            cells,
            wc,
            ClassId::WATER,
            Some(palette::WATER),
            &|_, _| 0.0,
        );
        let boats = rng.random_range(params.boats.0..=params.boats.1);
        for _ in 0..boats {
            let len = rng.random_range(5.0..8.0);
            let wid = rng.random_range(2.0..3.0);
            let x = rng.random_range(2.0..size - len - 2.0);
            let y = rng.random_range(1.0..(water_width - wid - 2.0).max(1.5));
            let min = Point3::new(x, y, water_z - 0.3);
            let max = Point3::new(x + len, y + wid, water_z + 1.0);
            b.cuboid(
                min,
                max,
                2.0,
                false,
                (ClassId::BOAT, Some(palette::HULL)),
                (ClassId::BOAT, Some(palette::HULL)),
            );
        }
    }

    // Footprints placed on land without overlap.
    let mut occupied: Vec<(f64, f64, f64, f64)> = Vec::new();
    let mut place = |rng: &mut ChaCha8Rng, w: f64, d: f64| -> Option<(f64, f64)> {
        for _ in 0..50 {
            let x = rng.random_range(2.0..size - w - 2.0);
            let y = rng.random_range(land_y0 + 2.0..size - d - 2.0);
            let clear = occupied
                .iter()
                .all(|&(ox, oy, ow, od)| x + w + 1.5 < ox || ox + ow + 1.5 < x || y + d + 1.5 < oy || oy + od + 1.5 < y);
            if clear {
                occupied.push((x, y, w, d));
                return Some((x, y));
            }
        }
        None
    };

    let n_build = rng.random_range(params.buildings.0..=params.buildings.1);
    for _ in 0..n_build {
        let (w, d) = (rng.random_range(9.0..16.0), rng.random_range(9.0..16.0));
        let h = rng.random_range(6.0..18.0);
        if let Some((x, y)) = place(&mut rng, w, d) {
            let base = ground(x + w / 2.0, y + d / 2.0) - 0.8;
            let roof = if rng.random_bool(0.5) {
                palette::ROOF_RED
            } else {
                palette::ROOF_GREY
            };
            b.cuboid(
                Point3::new(x, y, base),
                Point3::new(x + w, y + d, base + h),
                3.0,
                false,
                (ClassId::BUILDING, Some(palette::WALL)),
                (ClassId::BUILDING, Some(roof)),
            );
        }
    }

    let n_trees = rng.random_range(params.trees.0..=params.trees.1);
    for _ in 0..n_trees {
        let r = rng.random_range(2.0..3.5);
        if let Some((x, y)) = place(&mut rng, 2.0 * r, 2.0 * r) {
            let (cx, cy) = (x + r, y + r);
            let rz = rng.random_range(3.0..4.5);
            let c = Point3::new(cx, cy, ground(cx, cy) + 2.0 + rz);
            b.ellipsoid(
                c,
                Vector3::new(r, r, rz),
                8,
                12,
                ClassId::HIGH_VEGETATION,
                Some(palette::FOLIAGE),
            );
        }
    }

    let n_cars = rng.random_range(params.vehicles.0..=params.vehicles.1);
    for _ in 0..n_cars {
        let along_x = rng.random_bool(0.5);
        let (w, d) = if along_x { (4.5, 1.8) } else { (1.8, 4.5) };
        if let Some((x, y)) = place(&mut rng, w, d) {
            let z = ground(x + w / 2.0, y + d / 2.0) + 0.25;
            let paint = palette::CAR_COLOURS[rng.random_range(0..palette::CAR_COLOURS.len())];
            b.cuboid(
                Point3::new(x, y, z),
                Point3::new(x + w, y + d, z + 1.45),
                1.0,
                false,
                (ClassId::VEHICLE, Some(paint)),
                (ClassId::VEHICLE, Some(paint)),
            );
        }
    }

    b.build(tile_id)
}

//! Distances of rotationally symmetric surface metrics `dl^2 = (rho/2) ds^2 + 2 rho dtheta^2`:
//! meridian integrals, an eight-neighbour shortest-path graph on an `(s, theta)` mesh, diameters,
//! fiber collapse and Gromov–Hausdorff upper bounds.

use crate::density::Density;
use crate::error::{LabError, Result};
use crate::grid::RadialGrid;
use crate::quadrature::gauss_legendre;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{PI, SQRT_2};

/// Worst-case relative overestimate of an eight-neighbour graph distance on square cells,
/// `sec(pi / 8) - 1`.
pub const METRICATION_TOL: f64 = 0.082_392_200_292_393_97;

/// Worst-case relative overestimate of an eight-neighbour graph distance on cells of aspect ratio
/// `aspect`: a straight segment between the axis and diagonal moves that bound its sector of
/// angle `alpha` is overestimated by at most `sec(alpha / 2) - 1`.
pub fn metrication_bound(aspect: f64) -> f64 {
    let a1 = aspect.atan();
    let a2 = 0.5 * PI - a1;
    1.0 / (0.5 * a1.max(a2)).cos() - 1.0
}

/// Diameter of the unit-mass Fubini–Study sphere (`R = 2`), `pi / sqrt 2`.
pub const FS_DIAMETER: f64 = PI / SQRT_2;

/// Smallest number of grid nodes a neighbourhood ball must contain.
pub const MIN_BALL_NODES: usize = 8;

/// Exact weights of the degree-5 interpolant through six consecutive nodes, integrated over the
/// cell between nodes `c` and `c + 1` of the stencil, for `c = 0, 1, 2`.
const CELL_WEIGHTS: [[f64; 6]; 3] = [
    [475.0, 1427.0, -798.0, 482.0, -173.0, 27.0],
    [-27.0, 637.0, 1022.0, -258.0, 77.0, -11.0],
    [11.0, -93.0, 802.0, 802.0, -93.0, 11.0],
];

/// Meridian arclength of a density: `int sqrt(rho / 2) ds` from the left pole to every node.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeLength {
    pub s_min: f64,
    pub spacing: f64,
    /// Line-element factor `sqrt(rho / 2)` at the nodes.
    pub speed: Vec<f64>,
    /// Distance from the left pole to each node, including the analytic tail.
    pub from_left: Vec<f64>,
    pub left_tail: f64,
    pub right_tail: f64,
}

impl CumulativeLength {
    pub fn new(rho: &Density, grid: &RadialGrid) -> Self {
        let speed: Vec<f64> = rho.values.iter().map(|r| (0.5 * r).sqrt()).collect();
        let n = speed.len();
        let left_tail = speed[0] * 2.0 / rho.left_exponent;
        let right_tail = speed[n - 1] * 2.0 / rho.right_exponent;
        let mut from_left = Vec::with_capacity(n);
        let mut acc = left_tail;
        from_left.push(acc);
        for i in 0..n - 1 {
            acc += Self::cell_integral(&speed, i, grid.spacing);
            from_left.push(acc);
        }
        Self { s_min: grid.s_min, spacing: grid.spacing, speed, from_left, left_tail, right_tail }
    }

    fn cell_integral(g: &[f64], i: usize, h: f64) -> f64 {
        let n = g.len();
        let (start, w) = if i < 2 {
            (0, if i == 0 { CELL_WEIGHTS[0] } else { CELL_WEIGHTS[1] })
        } else if i + 3 >= n {
            // mirrored stencils at the right end
            let start = n - 6;
            let local = i - start;
            let mut w = if local == 4 {
                CELL_WEIGHTS[0]
            } else if local == 3 {
                CELL_WEIGHTS[1]
            } else {
                CELL_WEIGHTS[2]
            };
            w.reverse();
            (start, w)
        } else {
            (i - 2, CELL_WEIGHTS[2])
        };
        h / 1440.0 * (0..6).map(|k| w[k] * g[start + k]).sum::<f64>()
    }

    /// `sqrt(rho / 2)` at an arbitrary `s` by six-point interpolation.
    fn speed_at(&self, s: f64) -> f64 {
        let n = self.speed.len();
        let x = (s - self.s_min) / self.spacing;
        let i = (x.floor() as isize).clamp(0, n as isize - 2) as usize;
        let start = i.saturating_sub(2).min(n - 6);
        let mut v = 0.0;
        for a in 0..6 {
            let mut l = 1.0;
            for b in 0..6 {
                if a != b {
                    l *= (x - (start + b) as f64) / (a as f64 - b as f64);
                }
            }
            v += l * self.speed[start + a];
        }
        v
    }

    /// Distance from the left pole to `s` within the grid.
    pub fn from_left_at(&self, s: f64) -> f64 {
        let n = self.speed.len();
        let x = (s - self.s_min) / self.spacing;
        let i = (x.floor() as isize).clamp(0, n as isize - 2) as usize;
        let node = self.s_min + i as f64 * self.spacing;
        if s == node {
            return self.from_left[i];
        }
        self.from_left[i] + gauss_legendre(|u| self.speed_at(u), node, s)
    }

    /// Pole-to-pole meridian length.
    pub fn total(&self) -> f64 {
        self.from_left[self.from_left.len() - 1] + self.right_tail
    }
}

/// Meridian distance between `s1 <= s2` inside the grid.
pub fn radial_distance(rho: &Density, grid: &RadialGrid, s1: f64, s2: f64) -> f64 {
    let c = CumulativeLength::new(rho, grid);
    c.from_left_at(s2) - c.from_left_at(s1)
}

/// Eight-neighbour graph on rings of constant `s` with `n_theta` equally spaced angles, closed by
/// a pole node at the left end and optionally at the right end.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMetric2D {
    pub ring_s: Vec<f64>,
    pub n_theta: usize,
    /// Meridian length between consecutive rings.
    pub radial: Vec<f64>,
    /// Length of one angular edge on each ring.
    pub arc: Vec<f64>,
    /// Meridian length from the left pole to the first ring.
    pub left_tail: f64,
    /// Meridian length from the last ring to the right pole when that pole is included.
    pub right_tail: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry(f64, usize);

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Evenly spread indices `0 = i_0 < ... < i_{m-1} = last` over `first..=last`.
pub fn ring_indices(first: usize, last: usize, rings: usize) -> Vec<usize> {
    let span = last - first;
    let m = rings.min(span + 1).max(2);
    let mut out: Vec<usize> = (0..m).map(|k| first + ((k * span) as f64 / (m - 1) as f64).round() as usize).collect();
    out.dedup();
    out
}

impl SurfaceMetric2D {
    /// Mesh over the grid nodes `ring_nodes` of a density, with `n_theta` chosen for square cells.
    pub fn build(lengths: &CumulativeLength, grid: &RadialGrid, ring_nodes: &[usize], right_pole: bool) -> Self {
        let ring_s: Vec<f64> = ring_nodes.iter().map(|&i| grid.nodes[i]).collect();
        let m = ring_nodes.len();
        let ds = (ring_s[m - 1] - ring_s[0]) / (m - 1) as f64;
        let n_theta = (((4.0 * PI / ds) / 2.0).round() as usize * 2).max(8);
        let dtheta = 2.0 * PI / n_theta as f64;
        let radial = ring_nodes.windows(2).map(|w| lengths.from_left[w[1]] - lengths.from_left[w[0]]).collect();
        let arc = ring_nodes.iter().map(|&i| 2.0 * lengths.speed[i] * dtheta).collect();
        let last = *ring_nodes.last().unwrap();
        let right_tail = right_pole.then(|| lengths.total() - lengths.from_left[last]);
        Self { ring_s, n_theta, radial, arc, left_tail: lengths.from_left[ring_nodes[0]], right_tail }
    }

    /// Metrication bound for the nominal cell shape of the mesh.
    pub fn metrication_tol(&self) -> f64 {
        let m = self.n_rings();
        let ds = (self.ring_s[m - 1] - self.ring_s[0]) / (m - 1) as f64;
        metrication_bound(2.0 * (2.0 * PI / self.n_theta as f64) / ds)
    }

    pub fn n_rings(&self) -> usize {
        self.ring_s.len()
    }

    /// Total node count: rings, the left pole and the optional right pole.
    pub fn n_nodes(&self) -> usize {
        1 + self.n_rings() * self.n_theta + usize::from(self.right_tail.is_some())
    }

    pub fn left_pole(&self) -> usize {
        0
    }

    pub fn right_pole(&self) -> Option<usize> {
        self.right_tail.map(|_| self.n_nodes() - 1)
    }

    pub fn node(&self, ring: usize, theta: usize) -> usize {
        1 + ring * self.n_theta + theta % self.n_theta
    }

    fn neighbours(&self, v: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let m = self.n_rings();
        let nt = self.n_theta;
        if v == 0 {
            out.extend((0..nt).map(|j| (self.node(0, j), self.left_tail)));
            return;
        }
        if Some(v) == self.right_pole() {
            let tail = self.right_tail.unwrap();
            out.extend((0..nt).map(|j| (self.node(m - 1, j), tail)));
            return;
        }
        let k = (v - 1) / nt;
        let j = (v - 1) % nt;
        out.push((self.node(k, j + 1), self.arc[k]));
        out.push((self.node(k, j + nt - 1), self.arc[k]));
        let mut link = |k2: usize, radial: f64| {
            let diag = (radial * radial + self.arc[k] * self.arc[k2]).sqrt();
            out.push((self.node(k2, j), radial));
            out.push((self.node(k2, j + 1), diag));
            out.push((self.node(k2, j + nt - 1), diag));
        };
        if k > 0 {
            link(k - 1, self.radial[k - 1]);
        }
        if k + 1 < m {
            link(k + 1, self.radial[k]);
        }
        if k == 0 {
            out.push((0, self.left_tail));
        }
        if k + 1 == m {
            if let Some(t) = self.right_tail {
                out.push((self.n_nodes() - 1, t));
            }
        }
    }

    /// Single-source shortest paths.
    pub fn dijkstra(&self, source: usize) -> Vec<f64> {
        let n = self.n_nodes();
        let mut dist = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        let mut nb = Vec::with_capacity(8);
        dist[source] = 0.0;
        heap.push(HeapEntry(0.0, source));
        while let Some(HeapEntry(d, v)) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            self.neighbours(v, &mut nb);
            for &(w, len) in &nb {
                let nd = d + len;
                if nd < dist[w] {
                    dist[w] = nd;
                    heap.push(HeapEntry(nd, w));
                }
            }
        }
        dist
    }

    /// Sources used for diameters: the poles and every `stride`-th ring at angle zero. Rotational
    /// symmetry makes these representative of all nodes.
    pub fn sources(&self, stride: usize) -> Vec<usize> {
        let mut s = vec![self.left_pole()];
        s.extend((0..self.n_rings()).step_by(stride.max(1)).map(|k| self.node(k, 0)));
        if self.n_rings() > 1 && (self.n_rings() - 1) % stride.max(1) != 0 {
            s.push(self.node(self.n_rings() - 1, 0));
        }
        if let Some(p) = self.right_pole() {
            s.push(p);
        }
        s
    }

    /// Distance fields from the sampled sources.
    pub fn fields(&self, stride: usize) -> Vec<Vec<f64>> {
        self.sources(stride).into_iter().map(|s| self.dijkstra(s)).collect()
    }
}

/// Largest finite entry over a set of distance fields.
pub fn max_distance(fields: &[Vec<f64>]) -> f64 {
    fields.iter().flat_map(|f| f.iter()).filter(|d| d.is_finite()).fold(0.0, |m, d| m.max(*d))
}

/// Diameter of the whole surface: graph value and the meridian (pole-to-pole) value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseDiameter {
    pub graph: f64,
    pub meridian: f64,
}

/// Mesh over the whole surface with `rings` rings.
pub fn surface_mesh(rho: &Density, grid: &RadialGrid, rings: usize) -> (CumulativeLength, SurfaceMetric2D) {
    let lengths = CumulativeLength::new(rho, grid);
    let idx = ring_indices(0, grid.len() - 1, rings);
    let mesh = SurfaceMetric2D::build(&lengths, grid, &idx, true);
    (lengths, mesh)
}

/// Diameter of the rotationally symmetric sphere with density `rho`.
pub fn base_diameter(rho: &Density, grid: &RadialGrid, rings: usize, stride: usize) -> BaseDiameter {
    let (lengths, mesh) = surface_mesh(rho, grid, rings);
    BaseDiameter { graph: max_distance(&mesh.fields(stride)), meridian: lengths.total() }
}

/// Fiber diameter `e^{-t/2} sqrt(a) pi / sqrt 2`.
pub fn fiber_diameter(t: f64, a: f64) -> f64 {
    (-0.5 * t).exp() * a.sqrt() * FS_DIAMETER
}

/// Diameter of the product of two spaces with the given diameters.
pub fn product_diameter(fiber: f64, base: f64) -> f64 {
    fiber.hypot(base)
}

/// Twice the graph distance between antipodal nodes of rings near `s_samples` on the fiber
/// sphere `a e^{-t} FS`.
pub fn fiber_circumference_samples(
    grid: &RadialGrid,
    fs: &Density,
    a: f64,
    t: f64,
    rings: usize,
    s_samples: &[f64],
) -> Vec<f64> {
    let rho = fs.scaled(a * (-t).exp());
    let (_, mesh) = surface_mesh(&rho, grid, rings);
    s_samples
        .iter()
        .map(|&s| {
            let k = mesh
                .ring_s
                .iter()
                .enumerate()
                .min_by(|x, y| (x.1 - s).abs().total_cmp(&(y.1 - s).abs()))
                .map(|(k, _)| k)
                .unwrap();
            let d = mesh.dijkstra(mesh.node(k, 0));
            2.0 * d[mesh.node(k, mesh.n_theta / 2)]
        })
        .collect()
}

/// Diameter of the tube over the base ball of `chi`-radius `eps_gh^power` around the cone point,
/// measured in the metric with base density `rho` and fiber diameter `fiber`.
pub fn neighborhood_diameter(
    rho: &Density,
    chi: &Density,
    grid: &RadialGrid,
    fiber: f64,
    eps_gh: f64,
    power: u32,
    rings: usize,
) -> Result<f64> {
    let radius = eps_gh.powi(power as i32);
    let chi_len = CumulativeLength::new(chi, grid);
    let count = chi_len.from_left.iter().take_while(|d| **d <= radius).count();
    if count < MIN_BALL_NODES {
        return Err(LabError::UnresolvedRegion { count, needed: MIN_BALL_NODES });
    }
    let lengths = CumulativeLength::new(rho, grid);
    let idx = ring_indices(0, count - 1, rings.max(MIN_BALL_NODES));
    let mesh = SurfaceMetric2D::build(&lengths, grid, &idx, false);
    let base = max_distance(&mesh.fields(1));
    Ok(product_diameter(fiber, base))
}

/// Distance fields of the limit base metric, reused for every sample of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitDistances {
    pub fields: Vec<Vec<f64>>,
    pub diameter: f64,
}

impl LimitDistances {
    pub fn new(chibar: &Density, grid: &RadialGrid, rings: usize, stride: usize) -> Self {
        let (_, mesh) = surface_mesh(chibar, grid, rings);
        let fields = mesh.fields(stride);
        let diameter = max_distance(&fields);
        Self { fields, diameter }
    }
}

/// Base diameter and Gromov–Hausdorff bound of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSample {
    pub fiber_diam: f64,
    pub base_diam: f64,
    pub total_diam: f64,
    pub gh_bound: f64,
}

/// Projection-correspondence bound `fiber diameter + sup |d_t - d_limit|` over sampled pairs.
pub fn metric_sample(
    rho: &Density,
    grid: &RadialGrid,
    t: f64,
    a: f64,
    limit: &LimitDistances,
    rings: usize,
    stride: usize,
) -> MetricSample {
    let (_, mesh) = surface_mesh(rho, grid, rings);
    let fields = mesh.fields(stride);
    let base_diam = max_distance(&fields);
    let mut gap = 0.0_f64;
    for (f, g) in fields.iter().zip(&limit.fields) {
        for (x, y) in f.iter().zip(g) {
            gap = gap.max((x - y).abs());
        }
    }
    let fiber_diam = fiber_diameter(t, a);
    MetricSample {
        fiber_diam,
        base_diam,
        total_diam: product_diameter(fiber_diam, base_diam),
        gh_bound: fiber_diam + gap,
    }
}

/// Time after which the fiber diameter is below `eps_gh`.
pub fn collapse_time(eps_gh: f64, a: f64) -> f64 {
    2.0 * (a.sqrt() * FS_DIAMETER / eps_gh).ln()
}

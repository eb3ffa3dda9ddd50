use crate::error::{Error, Result};

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn square(lo: f64, hi: f64) -> Self {
        Self::new(lo, hi, lo, hi)
    }

    pub fn unit() -> Self {
        Self::square(0.0, 1.0)
    }

    /// Grows every side by `margin`.
    pub fn extended(&self, margin: f64) -> Self {
        Self::new(self.x0 - margin, self.x1 + margin, self.y0 - margin, self.y1 + margin)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)]
    }
}

/// Regular triangulation of a rectangle. Node `(i, j)` (column `i`, row `j`)
/// has index `j * nx + i`; each grid cell is split along its rising diagonal
/// into `(v00, v10, v11)` and `(v00, v11, v01)`, both counter-clockwise.
#[derive(Debug, Clone)]
pub struct Mesh {
    domain: Rect,
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
}

pub fn build_mesh(domain: Rect, nx: usize, ny: usize) -> Result<Mesh> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidDomain(format!("need at least 2x2 nodes, got {nx}x{ny}")));
    }
    if !(domain.x1 > domain.x0) || !(domain.y1 > domain.y0) || !domain.x0.is_finite() || !domain.y1.is_finite() {
        return Err(Error::InvalidDomain(format!("{domain:?} has no interior")));
    }
    let hx = (domain.x1 - domain.x0) / (nx - 1) as f64;
    let hy = (domain.y1 - domain.y0) / (ny - 1) as f64;
    let mut nodes = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            nodes.push([domain.x0 + i as f64 * hx, domain.y0 + j as f64 * hy]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let v00 = j * nx + i;
            let (v10, v01, v11) = (v00 + 1, v00 + nx, v00 + nx + 1);
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Ok(Mesh {
        domain,
        nx,
        ny,
        hx,
        hy,
        nodes,
        triangles,
    })
}

impl Mesh {
    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Grid spacing `(hx, hy)`.
    pub fn spacing(&self) -> (f64, f64) {
        (self.hx, self.hy)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn is_interior(&self, node: usize) -> bool {
        let (i, j) = (node % self.nx, node / self.nx);
        i > 0 && j > 0 && i + 1 < self.nx && j + 1 < self.ny
    }

    /// Twice the signed area of triangle `t`.
    pub fn signed_area2(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|v| self.nodes[v]);
        (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
    }

    /// Node closest to `p`.
    pub fn nearest_node(&self, p: [f64; 2]) -> usize {
        let i = ((p[0] - self.domain.x0) / self.hx).round().clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = ((p[1] - self.domain.y0) / self.hy).round().clamp(0.0, (self.ny - 1) as f64) as usize;
        self.node_index(i, j)
    }

    /// Triangle containing `p` and its barycentric weights for the triangle's vertices.
    pub fn locate(&self, p: [f64; 2]) -> Result<(usize, [f64; 3])> {
        if !self.domain.contains(p) || !p[0].is_finite() || !p[1].is_finite() {
            return Err(Error::PointOutsideDomain { x: p[0], y: p[1] });
        }
        let fx = (p[0] - self.domain.x0) / self.hx;
        let fy = (p[1] - self.domain.y0) / self.hy;
        let i = (fx.floor() as usize).min(self.nx - 2);
        let j = (fy.floor() as usize).min(self.ny - 2);
        let u = (fx - i as f64).clamp(0.0, 1.0);
        let v = (fy - j as f64).clamp(0.0, 1.0);
        let cell = 2 * (j * (self.nx - 1) + i);
        if v <= u {
            Ok((cell, [1.0 - u, u - v, v]))
        } else {
            Ok((cell + 1, [1.0 - v, u, v - u]))
        }
    }

    /// Number of triangles each node belongs to.
    pub fn node_valence(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_nodes()];
        for t in &self.triangles {
            for &v in t {
                c[v] += 1;
            }
        }
        c
    }
}

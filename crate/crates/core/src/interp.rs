//! Point evaluation of grid fields along sample paths.

use serde::{Deserialize, Serialize};

use crate::grid::{Field, GridSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpOrder {
    /// Multilinear, two nodes per axis.
    #[default]
    Linear,
    /// Tensor four-point Lagrange.
    Cubic,
}

/// Interpolation weights of one point, reusable across fields on the same grid.
#[derive(Clone, Debug)]
pub struct Stencil {
    nodes: Vec<usize>,
    weights: Vec<f64>,
}

impl Stencil {
    pub fn new(grid: &GridSpec, order: InterpOrder, x: &[f64]) -> Self {
        let n = grid.n() as i64;
        let dx = grid.dx();
        let axis = |v: f64| -> Vec<(usize, f64)> {
            let pos = (v + grid.half_width()) / dx;
            let base = pos.floor();
            let s = pos - base;
            let i0 = base as i64;
            let wrap = |i: i64| i.rem_euclid(n) as usize;
            match order {
                InterpOrder::Linear => vec![(wrap(i0), 1.0 - s), (wrap(i0 + 1), s)],
                InterpOrder::Cubic => vec![
                    (wrap(i0 - 1), -s * (s - 1.0) * (s - 2.0) / 6.0),
                    (wrap(i0), (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0),
                    (wrap(i0 + 1), -(s + 1.0) * s * (s - 2.0) / 2.0),
                    (wrap(i0 + 2), (s + 1.0) * s * (s - 1.0) / 6.0),
                ],
            }
        };
        match grid.dim() {
            1 => {
                let a = axis(x[0]);
                Self { nodes: a.iter().map(|p| p.0).collect(), weights: a.iter().map(|p| p.1).collect() }
            }
            _ => {
                let a = axis(x[0]);
                let b = axis(x[1]);
                let mut nodes = Vec::with_capacity(a.len() * b.len());
                let mut weights = Vec::with_capacity(a.len() * b.len());
                for (i, wi) in &a {
                    for (j, wj) in &b {
                        nodes.push(i * grid.n() + j);
                        weights.push(wi * wj);
                    }
                }
                Self { nodes, weights }
            }
        }
    }

    /// Writes every channel of `f` at the stencil point into `out`.
    pub fn apply(&self, f: &Field, out: &mut [f64]) {
        let len = f.grid().len();
        for (c, o) in out.iter_mut().enumerate().take(f.channels()) {
            let vals = &f.values()[c * len..(c + 1) * len];
            *o = self.nodes.iter().zip(&self.weights).map(|(&i, w)| w * vals[i]).sum();
        }
    }
}

pub fn sample_at(f: &Field, order: InterpOrder, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; f.channels()];
    Stencil::new(f.grid(), order, x).apply(f, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_at_nodes_and_for_low_degree() {
        let g = GridSpec::line(64, 4.0).unwrap();
        let quad = Field::scalar_from_fn(g, |x| 1.0 + x[0] - 0.5 * x[0] * x[0]);
        let x = g.coord(17);
        assert!((sample_at(&quad, InterpOrder::Linear, &[x])[0] - quad.values()[17]).abs() < 1e-14);
        let y = 0.3217;
        let exact = 1.0 + y - 0.5 * y * y;
        assert!((sample_at(&quad, InterpOrder::Cubic, &[y])[0] - exact).abs() < 1e-12);
        let lin = (sample_at(&quad, InterpOrder::Linear, &[y])[0] - exact).abs();
        assert!(lin > 1e-6 && lin < g.dx() * g.dx());
    }

    #[test]
    fn bilinear_reproduces_bilinear_functions() {
        let g = GridSpec::new(2, 16, 2.0).unwrap();
        let f = Field::from_fn(g, 2, |x, o| {
            o[0] = 2.0 + x[0] - 3.0 * x[1] + x[0] * x[1];
            o[1] = x[1];
        });
        let p = [0.113, -0.71];
        let v = sample_at(&f, InterpOrder::Linear, &p);
        assert!((v[0] - (2.0 + p[0] - 3.0 * p[1] + p[0] * p[1])).abs() < 1e-13);
        assert!((v[1] - p[1]).abs() < 1e-13);
    }
}

//! Finite-difference oracle for the unfolded loss, evaluated in double-double
//! arithmetic so rounding stays far below the gradient tolerance.

#![allow(dead_code)]

use consensus_core::Graph;

#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

impl Dd {
    fn from(v: f64) -> Self {
        Self { hi: v, lo: 0.0 }
    }

    fn add(self, o: Self) -> Self {
        let s = two_sum(self.hi, o.hi);
        quick_two_sum(s.hi, s.lo + self.lo + o.lo)
    }

    fn neg(self) -> Self {
        Self { hi: -self.hi, lo: -self.lo }
    }

    fn sub(self, o: Self) -> Self {
        self.add(o.neg())
    }

    fn mul(self, o: Self) -> Self {
        let p = self.hi * o.hi;
        let err = self.hi.mul_add(o.hi, -p);
        quick_two_sum(p, err + self.hi * o.lo + self.lo * o.hi)
    }

    fn div_f64(self, d: f64) -> Self {
        let q1 = self.hi / d;
        let r = self.sub(Dd::from(q1).mul(Dd::from(d)));
        quick_two_sum(q1, r.hi / d)
    }
}

fn loss_dd(g: &Graph, rows: &[Vec<Dd>], x0: &[f64]) -> Dd {
    let mut x: Vec<Dd> = x0.iter().map(|&v| Dd::from(v)).collect();
    for row in rows {
        let prev = x.clone();
        for (&(i, j), &w) in g.edges().iter().zip(row) {
            let flow = w.mul(prev[j].sub(prev[i]));
            x[i] = x[i].add(flow);
            x[j] = x[j].sub(flow);
        }
    }
    let c = x0.iter().fold(Dd::from(0.0), |acc, &v| acc.add(Dd::from(v))).div_f64(x0.len() as f64);
    x.iter().fold(Dd::from(0.0), |acc, &v| {
        let d = v.sub(c);
        acc.add(d.mul(d))
    })
}

/// Central difference `(f(w + h) - f(w - h)) / 2h` of the loss in weight
/// `(layer, edge)`.
pub fn central_difference(g: &Graph, rows: &[Vec<f64>], x0: &[f64], layer: usize, edge: usize, h: f64) -> f64 {
    let base: Vec<Vec<Dd>> = rows.iter().map(|r| r.iter().map(|&w| Dd::from(w)).collect()).collect();
    let mut plus = base.clone();
    let mut minus = base;
    plus[layer][edge] = two_sum(rows[layer][edge], h);
    minus[layer][edge] = two_sum(rows[layer][edge], -h);
    let diff = loss_dd(g, &plus, x0).sub(loss_dd(g, &minus, x0));
    diff.div_f64(2.0 * h).hi
}

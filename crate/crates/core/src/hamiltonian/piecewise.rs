//! Minimisation of convex piecewise-quadratic functions
//! `f(v) = vᵀqv + 2lᵀv + Σ ν φ(c + fᵀv) + const`, with
//! `φ(y) = α (y⁺)² + β (y⁻)² + γ y + κ`, over a cone intersected with an
//! optional ball.

use crate::error::{Error, Result};
use crate::linalg::{neg, pos, symmetric_norm, Matrix, Vector};
use crate::model::Cone;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Piece {
    pub nu: f64,
    pub c: f64,
    pub f: Vector,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub kappa: f64,
}

impl Piece {
    #[inline]
    fn phi(&self, y: f64) -> f64 {
        let (p, n) = (pos(y), neg(y));
        self.alpha * p * p + self.beta * n * n + self.gamma * y + self.kappa
    }

    #[inline]
    fn slope_right(&self, y: f64) -> f64 {
        if y >= 0.0 {
            2.0 * self.alpha * y + self.gamma
        } else {
            2.0 * self.beta * y + self.gamma
        }
    }

    #[inline]
    fn slope_left(&self, y: f64) -> f64 {
        if y > 0.0 {
            2.0 * self.alpha * y + self.gamma
        } else {
            2.0 * self.beta * y + self.gamma
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PwQuad {
    pub q: Matrix,
    pub l: Vector,
    pub pieces: Vec<Piece>,
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Minimum {
    pub v: Vector,
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct MinimizeOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl PwQuad {
    pub fn dim(&self) -> usize {
        self.l.len()
    }

    pub fn value(&self, v: &Vector) -> f64 {
        let mut out = v.dot(&(&self.q * v)) + 2.0 * self.l.dot(v) + self.constant;
        for p in &self.pieces {
            out += p.nu * p.phi(p.c + p.f.dot(v));
        }
        out
    }

    /// Gradient with the right-derivative convention at kinks.
    pub fn gradient(&self, v: &Vector) -> Vector {
        let mut g = (&self.q * v + &self.l) * 2.0;
        for p in &self.pieces {
            g += &p.f * (p.nu * p.slope_right(p.c + p.f.dot(v)));
        }
        g
    }

    fn lipschitz(&self) -> f64 {
        let mut l = 2.0 * symmetric_norm(&self.q);
        for p in &self.pieces {
            l += 2.0 * p.nu * p.alpha.abs().max(p.beta.abs()) * p.f.norm_squared();
        }
        l
    }

    fn scale(&self) -> f64 {
        let mut s = 1.0f64;
        if !self.q.is_empty() {
            s = s.max(self.q.amax());
        }
        if !self.l.is_empty() {
            s = s.max(self.l.amax());
        }
        for p in &self.pieces {
            s = s.max(p.nu * p.alpha.abs().max(p.beta.abs()) * p.f.norm_squared());
        }
        s
    }

    /// Minimiser over `cone ∩ {|v| <= radius}`; exact for scalar controls,
    /// accelerated projected gradient otherwise.
    pub fn minimize(
        &self,
        cone: &Cone,
        radius: Option<f64>,
        warm: Option<&Vector>,
        opts: MinimizeOptions,
    ) -> Result<Minimum> {
        if cone.is_trivial() || radius == Some(0.0) {
            let v = Vector::zeros(self.dim());
            return Ok(Minimum {
                value: self.value(&v),
                v,
                iterations: 0,
                residual: 0.0,
                exact: true,
            });
        }
        if self.dim() == 1 {
            let (lo, hi) = cone.interval_1d().expect("one-dimensional cone");
            let (lo, hi) = match radius {
                Some(r) => (lo.max(-r), hi.min(r)),
                None => (lo, hi),
            };
            return self.minimize_interval(lo, hi);
        }
        self.minimize_projected(cone, radius, warm, opts)
    }

    fn scalar_piece_quadratic(&self, sample: f64) -> (f64, f64) {
        // coefficients (a, b) of a v² + b v + const valid on the segment containing `sample`
        let mut a = self.q[(0, 0)];
        let mut b = 2.0 * self.l[0];
        for p in &self.pieces {
            let f = p.f[0];
            if f == 0.0 {
                continue;
            }
            let w = if p.c + f * sample >= 0.0 { p.alpha } else { p.beta };
            a += p.nu * w * f * f;
            b += p.nu * (2.0 * w * p.c * f + p.gamma * f);
        }
        (a, b)
    }

    fn scalar_value(&self, v: f64) -> f64 {
        let mut out = self.q[(0, 0)] * v * v + 2.0 * self.l[0] * v + self.constant;
        for p in &self.pieces {
            out += p.nu * p.phi(p.c + p.f[0] * v);
        }
        out
    }

    fn scalar_one_sided(&self, v: f64) -> (f64, f64) {
        let base = 2.0 * self.q[(0, 0)] * v + 2.0 * self.l[0];
        let (mut left, mut right) = (base, base);
        for p in &self.pieces {
            let f = p.f[0];
            let y = p.c + f * v;
            // d/dv φ(c + f v): the right derivative in v uses the right
            // derivative in y when f > 0 and the left one when f < 0
            let (sl, sr) = if f >= 0.0 {
                (p.slope_left(y), p.slope_right(y))
            } else {
                (p.slope_right(y), p.slope_left(y))
            };
            left += p.nu * f * sl;
            right += p.nu * f * sr;
        }
        (left, right)
    }

    /// Exact minimisation on the interval `[lo, hi]` (possibly unbounded).
    pub fn minimize_interval(&self, lo: f64, hi: f64) -> Result<Minimum> {
        let mut breaks: Vec<f64> = self
            .pieces
            .iter()
            .filter(|p| p.f[0] != 0.0)
            .map(|p| -p.c / p.f[0])
            .filter(|&k| k > lo && k < hi)
            .collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let mut nodes = Vec::with_capacity(breaks.len() + 2);
        nodes.push(lo);
        nodes.extend(breaks);
        nodes.push(hi);

        let curvature_tol = 1e-12 * self.scale();
        let mut candidates: Vec<f64> = Vec::new();
        for w in nodes.windows(2) {
            let (s, e) = (w[0], w[1]);
            let sample = match (s.is_finite(), e.is_finite()) {
                (true, true) => 0.5 * (s + e),
                (false, true) => e - 1.0,
                (true, false) => s + 1.0,
                (false, false) => 0.0,
            };
            let (a, b) = self.scalar_piece_quadratic(sample);
            if a > curvature_tol {
                candidates.push((-b / (2.0 * a)).clamp(s, e));
            } else if a < -curvature_tol {
                if !(s.is_finite() && e.is_finite()) {
                    return Err(Error::NotConvex {
                        branch: "scalar",
                        min_eigenvalue: a,
                    });
                }
                candidates.push(s);
                candidates.push(e);
            } else if b > 0.0 {
                if !s.is_finite() {
                    return Err(Error::Unbounded);
                }
                candidates.push(s);
            } else if b < 0.0 {
                if !e.is_finite() {
                    return Err(Error::Unbounded);
                }
                candidates.push(e);
            } else {
                candidates.push(0.0f64.clamp(s, e));
            }
        }

        let mut best = candidates[0];
        let mut best_val = self.scalar_value(best);
        for &c in &candidates[1..] {
            let val = self.scalar_value(c);
            let tie = 1e-15 * best_val.abs().max(1.0);
            if val < best_val - tie || ((val - best_val).abs() <= tie && c.abs() < best.abs()) {
                best = c;
                best_val = val;
            }
        }
        let (left, right) = self.scalar_one_sided(best);
        let mut residual = 0.0f64;
        if best < hi {
            residual = residual.max(-right);
        }
        if best > lo {
            residual = residual.max(left);
        }
        Ok(Minimum {
            v: Vector::from_element(1, best),
            value: best_val,
            iterations: candidates.len(),
            residual: residual.max(0.0),
            exact: true,
        })
    }

    fn minimize_projected(
        &self,
        cone: &Cone,
        radius: Option<f64>,
        warm: Option<&Vector>,
        opts: MinimizeOptions,
    ) -> Result<Minimum> {
        let lip = self.lipschitz();
        let project = |v: &Vector| cone.project_ball(v, radius);
        let start = warm.map(&project).unwrap_or_else(|| Vector::zeros(self.dim()));
        if lip == 0.0 {
            let g = self.gradient(&start);
            let step = project(&(-&g));
            if step.norm() > 0.0 {
                if radius.is_none() {
                    return Err(Error::Unbounded);
                }
                let scale = radius.unwrap_or(0.0) / step.norm();
                let v = step * scale;
                return Ok(Minimum {
                    value: self.value(&v),
                    v,
                    iterations: 1,
                    residual: 0.0,
                    exact: true,
                });
            }
            return Ok(Minimum {
                value: self.value(&Vector::zeros(self.dim())),
                v: Vector::zeros(self.dim()),
                iterations: 0,
                residual: 0.0,
                exact: true,
            });
        }
        let eta = 1.0 / lip;
        let mut x = start.clone();
        let mut y = start;
        let mut t = 1.0f64;
        let mut fx = self.value(&x);
        let blow = 1e12 * (1.0 + self.scale());
        for it in 1..=opts.max_iter {
            let g = self.gradient(&y);
            let x_next = project(&(&y - &g * eta));
            let f_next = self.value(&x_next);
            // gradient mapping at the new point measures stationarity
            let gx = self.gradient(&x_next);
            let mapped = project(&(&x_next - &gx * eta));
            let residual = (&x_next - &mapped).norm() / eta;
            if residual <= opts.tol * self.scale().max(1.0) {
                return Ok(Minimum {
                    v: x_next,
                    value: f_next,
                    iterations: it,
                    residual,
                    exact: false,
                });
            }
            if x_next.norm() > blow {
                return Err(Error::Unbounded);
            }
            if f_next > fx && t > 1.0 {
                // adaptive restart; a plain projected-gradient step is always
                // accepted so rounding near the optimum cannot stall it
                t = 1.0;
                y = x.clone();
                continue;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &x_next + (&x_next - &x) * ((t - 1.0) / t_next);
            x = x_next;
            fx = f_next;
            t = t_next;
        }
        let g = self.gradient(&x);
        let residual = (&x - project(&(&x - &g * eta))).norm() / eta;
        Err(Error::Convergence {
            iterations: opts.max_iter,
            residual,
        })
    }
}

//! Fixed-step RK4 with cubic Hermite dense output.

/// A smooth autonomous vector field on ℝᵈ.
pub trait VectorField: Sync {
    fn dimension(&self) -> usize;

    fn eval(&self, x: &[f64], out: &mut [f64]);

    /// Writes the Jacobian row-major into `out` (`out[i * d + j] = ∂F_i/∂x_j`).
    /// Returns `false` when no closed form is available.
    fn jacobian(&self, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    /// Closed-form asymptotic phase, if known.
    fn analytic_phase(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Rough size of the attractor, used to pick default domain bounds.
    fn radius_hint(&self) -> Option<f64> {
        None
    }
}

/// Wraps a closure as a vector field without Jacobian or phase map.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> VectorField for FnField<F> {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

/// Central-difference Jacobian with relative step `rel_step`.
pub fn finite_difference_jacobian<V: VectorField + ?Sized>(
    field: &V,
    x: &[f64],
    rel_step: f64,
    out: &mut [f64],
) {
    let d = field.dimension();
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; d];
    let mut fm = vec![0.0; d];
    for j in 0..d {
        let h = rel_step * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        field.eval(&xp, &mut fp);
        xp[j] = x[j] - h;
        field.eval(&xp, &mut fm);
        xp[j] = x[j];
        for i in 0..d {
            out[i * d + j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
}

/// Jacobian from the field if it has one, otherwise by central differences.
pub fn jacobian_or_fd<V: VectorField + ?Sized>(
    field: &V,
    x: &[f64],
    rel_step: f64,
    out: &mut [f64],
) {
    if !field.jacobian(x, out) {
        finite_difference_jacobian(field, x, rel_step, out);
    }
}

/// Scratch space for one RK4 step in dimension d.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `x` by `h` given the slope `k1 = f(x)` already evaluated.
    #[inline]
    pub fn step_with_slope<F: FnMut(&[f64], &mut [f64])>(
        &mut self,
        mut f: F,
        x: &mut [f64],
        k1: &[f64],
        h: f64,
    ) {
        let d = x.len();
        for i in 0..d {
            self.tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        f(&self.tmp, &mut self.k2);
        for i in 0..d {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        f(&self.tmp, &mut self.k3);
        for i in 0..d {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        f(&self.tmp, &mut self.k4);
        for i in 0..d {
            x[i] += h / 6.0 * (k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
    }

    pub fn step<F: FnMut(&[f64], &mut [f64])>(&mut self, mut f: F, x: &mut [f64], h: f64) {
        let mut k1 = vec![0.0; x.len()];
        f(x, &mut k1);
        self.step_with_slope(f, x, &k1, h);
    }
}

/// Integrates `x` over `duration` with steps of at most `h`, the last one shortened.
pub fn integrate<V: VectorField + ?Sized>(field: &V, x: &mut [f64], duration: f64, h: f64) {
    let mut rk = Rk4::new(x.len());
    let mut k1 = vec![0.0; x.len()];
    let n = (duration / h).ceil().max(1.0) as usize;
    let step = duration / n as f64;
    for _ in 0..n {
        field.eval(x, &mut k1);
        rk.step_with_slope(|y, o| field.eval(y, o), x, &k1, step);
    }
}

/// Cubic Hermite interpolant on a step of length `h` at fraction `s ∈ [0, 1]`.
#[inline]
pub fn hermite(x0: &[f64], f0: &[f64], x1: &[f64], f1: &[f64], h: f64, s: f64, out: &mut [f64]) {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    for i in 0..out.len() {
        out[i] = h00 * x0[i] + h10 * h * f0[i] + h01 * x1[i] + h11 * h * f1[i];
    }
}

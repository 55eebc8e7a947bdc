//! Fixed-step classical Runge–Kutta on flat `f64` state vectors.

/// Scratch buffers for one system dimension; reuse across steps.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
}

/// Outcome of [`Rk4::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    Advanced,
    /// The derivative at the current state was below the freeze tolerance;
    /// the state was left untouched.
    Frozen,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            stage: vec![0.0; dim],
        }
    }

    /// Advances `x` by `dt` unless `max |f(t, x)| < freeze_below`.
    /// `f(t, x, dx)` writes the derivative of `x` into `dx`.
    pub fn step<F>(&mut self, f: &mut F, t: f64, x: &mut [f64], dt: f64, freeze_below: f64) -> Step
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        f(t, x, &mut self.k1);
        let peak = self.k1.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if peak < freeze_below {
            return Step::Frozen;
        }
        let half = 0.5 * dt;
        for ((s, xi), k) in self.stage.iter_mut().zip(x.iter()).zip(&self.k1) {
            *s = xi + half * k;
        }
        f(t + half, &self.stage, &mut self.k2);
        for ((s, xi), k) in self.stage.iter_mut().zip(x.iter()).zip(&self.k2) {
            *s = xi + half * k;
        }
        f(t + half, &self.stage, &mut self.k3);
        for ((s, xi), k) in self.stage.iter_mut().zip(x.iter()).zip(&self.k3) {
            *s = xi + dt * k;
        }
        f(t + dt, &self.stage, &mut self.k4);
        let sixth = dt / 6.0;
        for i in 0..x.len() {
            x[i] += sixth * (self.k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
        Step::Advanced
    }
}

/// Number of fixed steps covering `duration`; the final step lands on it to
/// within rounding.
pub fn step_count(duration: f64, dt: f64) -> usize {
    (duration / dt - 1e-9).ceil().max(0.0) as usize
}

//! Warm-up adaptation: dual-averaging step size and a windowed diagonal
//! mass matrix with the usual fast / slow / fast schedule.

/// Nesterov dual averaging of `ln ε` toward a target acceptance statistic.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    target: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAveraging {
    pub fn new(target: f64, step_size: f64) -> Self {
        let mut da = Self { target, gamma: 0.05, t0: 10.0, kappa: 0.75, mu: 0.0, counter: 0.0, s_bar: 0.0, x_bar: 0.0 };
        da.restart(step_size);
        da
    }

    /// Forget the history and shrink toward `10 ε`.
    pub fn restart(&mut self, step_size: f64) {
        self.mu = (10.0 * step_size).ln();
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    /// Feed one acceptance statistic, return the next step size.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        let accept_stat = if accept_stat.is_finite() { accept_stat.min(1.0) } else { 0.0 };
        self.counter += 1.0;
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - accept_stat);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let w = self.counter.powf(-self.kappa);
        self.x_bar = (1.0 - w) * self.x_bar + w * x;
        x.exp()
    }

    /// Step size to freeze after warm-up.
    pub fn final_step_size(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Running mean and variance of each coordinate.
#[derive(Debug, Clone)]
pub struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    pub fn new(dim: usize) -> Self {
        Self { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn add(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn variance(&self) -> Vec<f64> {
        let denom = (self.n.max(2) - 1) as f64;
        self.m2.iter().map(|s| s / denom).collect()
    }

    pub fn restart(&mut self) {
        self.n = 0;
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        self.m2.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Boundaries of the slow mass-matrix windows.
#[derive(Debug, Clone)]
pub struct WindowSchedule {
    n_warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    next_window_end: usize,
    counter: usize,
    enabled: bool,
}

impl WindowSchedule {
    pub fn new(n_warmup: usize) -> Self {
        let (mut init_buffer, mut term_buffer, mut window_size) = (75, 50, 25);
        let enabled = n_warmup >= 20;
        if enabled && init_buffer + window_size + term_buffer > n_warmup {
            init_buffer = (0.15 * n_warmup as f64) as usize;
            term_buffer = (0.1 * n_warmup as f64) as usize;
            window_size = n_warmup - init_buffer - term_buffer;
        }
        Self {
            n_warmup,
            init_buffer,
            term_buffer,
            window_size,
            next_window_end: init_buffer + window_size - 1,
            counter: 0,
            enabled,
        }
    }

    fn last_window_end(&self) -> usize {
        self.n_warmup - self.term_buffer - 1
    }

    fn in_window(&self) -> bool {
        self.enabled
            && self.counter >= self.init_buffer
            && self.counter < self.n_warmup - self.term_buffer
            && self.counter != self.n_warmup
    }

    fn at_window_end(&self) -> bool {
        self.enabled && self.counter == self.next_window_end && self.counter != self.n_warmup
    }

    fn advance_window(&mut self) {
        if self.next_window_end == self.last_window_end() {
            return;
        }
        self.window_size *= 2;
        self.next_window_end = self.counter + self.window_size;
        if self.next_window_end != self.last_window_end() {
            let boundary = self.next_window_end + 2 * self.window_size;
            if boundary >= self.n_warmup - self.term_buffer {
                self.next_window_end = self.last_window_end();
            }
        }
    }
}

/// Diagonal inverse-metric estimation over the slow windows.
#[derive(Debug, Clone)]
pub struct MassAdaptation {
    schedule: WindowSchedule,
    estimator: Welford,
}

impl MassAdaptation {
    pub fn new(dim: usize, n_warmup: usize) -> Self {
        Self { schedule: WindowSchedule::new(n_warmup), estimator: Welford::new(dim) }
    }

    /// Record a warm-up draw. Returns true when a window closed and
    /// `inv_mass` was replaced by the regularized window variance.
    pub fn learn(&mut self, inv_mass: &mut [f64], q: &[f64]) -> bool {
        if self.schedule.in_window() {
            self.estimator.add(q);
        }
        let closed = self.schedule.at_window_end();
        if closed {
            self.schedule.advance_window();
            let n = self.estimator.count() as f64;
            for (m, v) in inv_mass.iter_mut().zip(self.estimator.variance()) {
                *m = (n / (n + 5.0)) * v + 1e-3 * (5.0 / (n + 5.0));
            }
            self.estimator.restart();
        }
        self.schedule.counter += 1;
        closed
    }
}

//! Monotone cubic (Fritsch-Carlson) interpolation, used for inverse CDFs.

#[derive(Clone, Debug)]
pub struct MonotoneTable {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl MonotoneTable {
    /// `x` strictly increasing, `y` non-decreasing.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert_eq!(x.len(), y.len());
        assert!(x.len() >= 2);
        let n = x.len();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k])).collect();
        let mut m = vec![0.0; n];
        m[0] = delta[0];
        m[n - 1] = delta[n - 2];
        for k in 1..n - 1 {
            m[k] = if delta[k - 1] * delta[k] <= 0.0 {
                0.0
            } else {
                // Harmonic mean keeps the interpolant monotone.
                let (w1, w2) = (2.0 * (x[k + 1] - x[k]) + (x[k] - x[k - 1]), (x[k + 1] - x[k]) + 2.0 * (x[k] - x[k - 1]));
                (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k])
            };
        }
        for k in 0..n - 1 {
            if delta[k] == 0.0 {
                m[k] = 0.0;
                m[k + 1] = 0.0;
            }
        }
        Self { x, y, m }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let k = self.x.partition_point(|&v| v <= t) - 1;
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let v = h00 * self.y[k] + h10 * h * self.m[k] + h01 * self.y[k + 1] + h11 * h * self.m[k + 1];
        v.clamp(self.y[k], self.y[k + 1])
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_knots_and_lines() {
        let t = MonotoneTable::new(vec![0.0, 1.0, 2.0, 4.0], vec![0.0, 2.0, 4.0, 8.0]);
        assert_eq!(t.eval(1.0), 2.0);
        assert!((t.eval(3.0) - 6.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn stays_monotone(steps in proptest::collection::vec((0.01f64..1.0, 0.0f64..5.0), 3..30)) {
            let mut x = vec![0.0];
            let mut y = vec![0.0];
            for (dx, dy) in steps {
                x.push(x.last().unwrap() + dx);
                y.push(y.last().unwrap() + dy);
            }
            let t = MonotoneTable::new(x.clone(), y);
            let (a, b) = t.domain();
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=500 {
                let v = t.eval(a + (b - a) * i as f64 / 500.0);
                prop_assert!(v >= prev - 1e-12);
                prev = v;
            }
        }
    }
}

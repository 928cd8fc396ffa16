//! Adaptive Dormand-Prince 5(4) integration for planar first-order systems.

pub type State = [f64; 2];

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[inline]
fn comb(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for (c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

/// One trial step; returns the fifth-order solution and the embedded error estimate.
fn trial<F: Fn(f64, &State) -> State>(f: &F, t: f64, y: &State, k1: &State, h: f64) -> (State, State, State) {
    let k2 = f(t + C2 * h, &comb(y, h, &[(A21, k1)]));
    let k3 = f(t + C3 * h, &comb(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f(t + C4 * h, &comb(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(t + C5 * h, &comb(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = f(t + h, &comb(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
    let y5 = comb(y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = f(t + h, &y5);
    let mut err = [0.0; 2];
    for d in 0..2 {
        err[d] = h * (E1 * k1[d] + E3 * k3[d] + E4 * k4[d] + E5 * k5[d] + E6 * k6[d] + E7 * k7[d]);
    }
    (y5, err, k7)
}

/// Integrator state with step-size memory across calls.
pub struct Dopri {
    pub rtol: f64,
    pub atol: f64,
    pub h: f64,
    pub steps: usize,
}

impl Dopri {
    pub fn new(tol: f64, h0: f64) -> Self {
        Self { rtol: tol, atol: tol, h: h0, steps: 0 }
    }

    /// Advances `y` from `t0` to `t1` (either direction). `stop` is checked after every
    /// accepted step and ends the integration early, returning the time reached.
    pub fn advance<F, S>(&mut self, f: &F, t0: f64, t1: f64, y: &mut State, mut stop: S) -> f64
    where
        F: Fn(f64, &State) -> State,
        S: FnMut(f64, &State) -> bool,
    {
        let dir = if t1 >= t0 { 1.0 } else { -1.0 };
        let mut t = t0;
        let mut k1 = f(t, y);
        let span = (t1 - t0).abs();
        if span == 0.0 {
            return t;
        }
        let mut h = self.h.abs().min(span);
        loop {
            let remaining = (t1 - t).abs();
            if remaining <= 1e-14 * span.max(1.0) {
                break;
            }
            let last = h >= remaining;
            let hs = if last { remaining } else { h };
            let (y5, err, k7) = trial(f, t, y, &k1, dir * hs);
            let mut en = 0.0f64;
            for d in 0..2 {
                let sc = self.atol + self.rtol * y[d].abs().max(y5[d].abs());
                en = en.max((err[d] / sc).abs());
            }
            if en <= 1.0 {
                t = if last { t1 } else { t + dir * hs };
                *y = y5;
                k1 = k7;
                self.steps += 1;
                let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
                h = hs * fac;
                if !last || fac < 1.0 {
                    self.h = h;
                }
                if stop(t, y) {
                    return t;
                }
            } else {
                h = hs * (0.9 * en.powf(-0.2)).clamp(0.1, 0.9);
            }
            if h < 1e-14 {
                break;
            }
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_period() {
        let f = |_t: f64, y: &State| [y[1], -y[0]];
        let mut y = [1.0, 0.0];
        let mut dp = Dopri::new(1e-12, 0.01);
        dp.advance(&f, 0.0, 2.0 * std::f64::consts::PI, &mut y, |_, _| false);
        assert!((y[0] - 1.0).abs() < 1e-10 && y[1].abs() < 1e-10);
    }

    #[test]
    fn backward_integration() {
        let f = |_t: f64, y: &State| [y[0], 0.0];
        let mut y = [1.0, 0.0];
        let mut dp = Dopri::new(1e-12, 0.1);
        dp.advance(&f, 1.0, 0.0, &mut y, |_, _| false);
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-11);
    }
}

//! Reference integrator for the spatially homogeneous system
//! `u' = -u - uw + φ`, `v' = -v + uw`, `w' = -w + v`.

/// Adaptive Dormand–Prince 5(4) with the usual PI-free step controller.
pub fn dopri5<F>(f: F, y0: &[f64], t0: f64, t1: f64, rtol: f64, atol: f64) -> Vec<f64>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    // fifth-order weights are the last row of A; these are fifth minus fourth order
    const E: [f64; 7] =
        [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

    let dim = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut h = ((t1 - t0) * 1e-3).max(1e-12);
    while t < t1 {
        if t + h > t1 {
            h = t1 - t;
        }
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        k.push(f(t, &y));
        for s in 1..7 {
            let ys: Vec<f64> = (0..dim).map(|j| y[j] + h * (0..s).map(|q| A[s][q] * k[q][j]).sum::<f64>()).collect();
            k.push(f(t + C[s] * h, &ys));
        }
        let y_new: Vec<f64> = (0..dim).map(|j| y[j] + h * (0..6).map(|q| A[6][q] * k[q][j]).sum::<f64>()).collect();
        let err = (0..dim)
            .map(|j| {
                let e = h * (0..7).map(|q| E[q] * k[q][j]).sum::<f64>();
                let sc = atol + rtol * y[j].abs().max(y_new[j].abs());
                (e / sc).powi(2)
            })
            .sum::<f64>()
            / dim as f64;
        let err = err.sqrt();
        if err <= 1.0 {
            t += h;
            y = y_new;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    y
}

/// `[u, v, w]` at `t` from constant data with constant source `phi`.
pub fn may_nowak(y0: [f64; 3], phi: f64, t: f64) -> [f64; 3] {
    let rhs = move |_t: f64, y: &[f64]| vec![-y[0] - y[0] * y[2] + phi, -y[1] + y[0] * y[2], -y[2] + y[1]];
    let y = dopri5(rhs, &y0, 0.0, t, 1e-12, 1e-14);
    [y[0], y[1], y[2]]
}

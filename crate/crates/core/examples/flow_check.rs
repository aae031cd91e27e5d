use pdpinn::datagen::parcels::{default_mixture, simulate_parcels};

fn main() {
    let times: Vec<f64> = (0..7).map(|i| i as f64 * 0.5).collect();
    let ens = simulate_parcels::<f64>(&default_mixture(2), 20_000, 2, 200, 3.0, &times, 0).unwrap();
    for snap in &ens.snapshots {
        let xs: Vec<f64> = snap.pos.chunks(2).map(|p| p[0]).collect();
        let ys: Vec<f64> = snap.pos.chunks(2).map(|p| p[1]).collect();
        let q = |v: &Vec<f64>, f: f64| {
            let mut s = v.clone();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            s[((s.len() - 1) as f64 * f) as usize]
        };
        let inside = xs.iter().zip(&ys).filter(|(x, y)| x.abs() <= 3.0 && y.abs() <= 3.0).count();
        println!(
            "t={:.1}: x [{:.2},{:.2}] y [{:.2},{:.2}] (1-99%), inside [-3,3]^2: {:.1}%",
            snap.t, q(&xs, 0.01), q(&xs, 0.99), q(&ys, 0.01), q(&ys, 0.99),
            100.0 * inside as f64 / 20000.0
        );
    }
}

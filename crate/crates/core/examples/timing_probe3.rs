use std::time::Instant;
fn main() {
    // cost of libm sin at SIREN-scale arguments
    let xs: Vec<f64> = (0..1_000_000).map(|i| (i as f64) * 1e-5 * 24.0 - 12.0).collect();
    let t = Instant::now();
    let mut acc = 0.0;
    for &x in &xs { acc += x.sin(); }
    let dt = t.elapsed().as_secs_f64();
    println!("sin: {:.1} ns/call (acc {acc:.3})", dt * 1e9 / 1e6);
    let t = Instant::now();
    let mut acc = 0.0;
    for &x in &xs { acc += x.tanh(); }
    println!("tanh: {:.1} ns/call (acc {acc:.3})", t.elapsed().as_secs_f64() * 1e9 / 1e6);
    let t = Instant::now();
    let mut acc = 0.0;
    for &x in &xs { acc += x.exp(); }
    println!("exp: {:.1} ns/call (acc {acc:.3})", t.elapsed().as_secs_f64() * 1e9 / 1e6);
    let t = Instant::now();
    let mut acc = 0.0;
    for &x in &xs { acc += x * 1.0001 + 0.1; }
    println!("fma: {:.2} ns/call (acc {acc:.3})", t.elapsed().as_secs_f64() * 1e9 / 1e6);
}

fn main() {
    let a = nalgebra_probe();
    println!("{a}");
}

fn nalgebra_probe() -> f64 {
    0.0
}

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn raw_dist(a: &[u16], b: &[u16]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

fn main() {
    let f = 7usize; let v = 10usize; let r = 4usize;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut echo: Vec<Vec<u16>> = Vec::new();
    echo.push((0..r as u16).collect());
    for _ in 1..f {
        let mut values: Vec<u16> = (0..v as u16).collect();
        values.shuffle(&mut rng);
        values.truncate(r);
        echo.push(values);
    }
    let mut centers: Vec<Vec<u16>> = Vec::new();
    for p in 0..20 {
        let region = rng.gen_range(0..r);
        let mut center = vec![0u16; f];
        let mut placed = false;
        let mut tries = 0;
        for _ in 0..10000 {
            tries += 1;
            center[0] = region as u16;
            for j in 1..f { center[j] = rng.gen_range(0..v as u16); }
            if centers.iter().all(|c| raw_dist(c, &center) >= 6) { placed = true; break; }
        }
        println!("pocket {p} region {region} placed={placed} tries={tries}");
        if !placed { return; }
        centers.push(center.clone());
    }
}

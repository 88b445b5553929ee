//! Regenerates the bundled mini datasets under `data/`.
//!
//! ```text
//! cargo run -p imputebench --example make_data
//! ```

use std::fmt::Write as _;
use std::path::Path;

use imputebench::rng;
use rand::Rng;
use rand_distr::{Distribution, Normal};

const GENRES: [&str; 6] = ["Sci-Fi", "Drama", "Comedy", "Action", "Horror", "Romance"];
const SITES: [&str; 8] = [
    "news", "sports", "video", "shop", "games", "mail", "travel", "food",
];
const DEVICES: [&str; 3] = ["mobile", "desktop", "tablet"];

fn movielens(dir: &Path) {
    let mut g = rng::seeded(11);
    let noise = Normal::new(0.0, 0.45).unwrap();
    let n_users = 120;
    let n_movies = 240;
    let movie_genre: Vec<usize> = (0..n_movies)
        .map(|_| g.random_range(0..GENRES.len()))
        .collect();
    let movie_quality: Vec<f64> = (0..n_movies).map(|_| g.random_range(-0.6..0.6)).collect();
    let popularity: Vec<f64> = (0..n_movies).map(|_| g.random_range(-1.0..1.0)).collect();
    let mut csv = String::from("UserID,MovieID,Genre,Rating,Timestamp\n");
    let mut ts = 978_300_000u64;
    for u in 1..=n_users {
        let taste: Vec<f64> = (0..GENRES.len())
            .map(|_| g.random_range(-1.2..1.2))
            .collect();
        let bias = g.random_range(-0.4..0.4);
        let n = g.random_range(15..36);
        // Users mostly watch popular movies from genres they like.
        let weight = |m: usize| (1.5 * taste[movie_genre[m]] + popularity[m]).exp();
        let picks = rand::seq::index::sample_weighted(&mut g, n_movies, weight, n)
            .unwrap()
            .into_vec();
        for m in picks {
            let raw = 3.4 + bias + taste[movie_genre[m]] + movie_quality[m] + noise.sample(&mut g);
            let rating = ((raw * 2.0).round() / 2.0).clamp(0.5, 5.0);
            ts += g.random_range(30..5000);
            writeln!(
                csv,
                "{u},{},{},{rating:.1},{ts}",
                m + 1,
                GENRES[movie_genre[m]]
            )
            .unwrap();
        }
    }
    std::fs::write(dir.join("movielens_mini.csv"), csv).unwrap();
}

fn adclick(dir: &Path) {
    let mut g = rng::seeded(23);
    let site_effect = [-1.6, -0.4, 0.9, 1.4, 0.3, -2.0, 0.1, -0.8];
    let device_effect = [0.5, -0.6, 0.0];
    let mut csv = String::from("UserID,AdID,Site,Device,Hour,Click\n");
    for _ in 0..3000 {
        let user = g.random_range(1..=300);
        let ad = g.random_range(1..=80);
        let s = g.random_range(0..SITES.len());
        let d = g.random_range(0..DEVICES.len());
        let hour = g.random_range(0..24);
        let evening = if (18..23).contains(&hour) { 0.7 } else { 0.0 };
        let logit = site_effect[s] + device_effect[d] + evening - 0.3;
        let p = 1.0 / (1.0 + (-logit as f64).exp());
        let click = u8::from(g.random::<f64>() < p);
        writeln!(
            csv,
            "{user},{ad},{},{},{hour},{click}",
            SITES[s], DEVICES[d]
        )
        .unwrap();
    }
    std::fs::write(dir.join("adclick_mini.csv"), csv).unwrap();
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    std::fs::create_dir_all(&dir).unwrap();
    movielens(&dir);
    adclick(&dir);
    println!("wrote {}", dir.display());
}

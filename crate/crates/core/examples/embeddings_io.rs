//! Writes a small embedding store in the CVEM format, reads it back, and
//! assembles the look-back news window for one trading day.
//!
//! Usage: cargo run --example embeddings_io

use chrono::NaiveDate;
use covarlab::data_io::{assemble_window, load_embeddings, save_embeddings, Article, EmbeddingStore, WindowSpec};
use covarlab::simulation::business_days;

fn main() -> covarlab::error::Result<()> {
    env_logger::init();
    let calendar = business_days(NaiveDate::from_ymd_opt(2020, 3, 2).expect("valid date"), 10);
    let mut store = EmbeddingStore::new(4);
    store.insert(calendar[2], vec![Article { vector: vec![0.1, 0.2, 0.3, 0.4] }])?;
    // Saturday news belongs to Monday
    let saturday = NaiveDate::from_ymd_opt(2020, 3, 7).expect("valid date");
    store.insert(
        saturday,
        vec![
            Article { vector: vec![1.0, 0.0, 0.0, 0.0] },
            Article { vector: vec![0.0, 1.0, 0.0, 0.0] },
        ],
    )?;

    let path = std::env::temp_dir().join("covarlab_example.cvem");
    save_embeddings(&store, &path)?;
    let bytes = std::fs::metadata(&path)?.len();
    let back = load_embeddings(&path)?;
    println!(
        "wrote {} ({bytes} bytes): {} articles on {} dates, d_e = {}",
        path.display(),
        back.article_count(),
        back.date_count(),
        back.d_e()
    );

    let t = 6;
    let spec = WindowSpec { n_max: 8, ..WindowSpec::default() };
    let w = assemble_window(&back, &calendar, t, &spec);
    println!("window for {} (days {}..={}):", calendar[t], calendar[t - 5], calendar[t - 1]);
    for (c, id) in w.ids.iter().enumerate() {
        println!(
            "  column {c}: article {} #{} in day slot {}",
            id.date, id.ordinal, w.window.positions[c]
        );
    }
    println!("{} of {} columns valid", w.window.valid_count(), w.window.n());
    std::fs::remove_file(&path)?;
    Ok(())
}

#![no_main]

use libfuzzer_sys::fuzz_target;
use lmn::data::{parse_csv, DatasetRecipe, TaskKind};
use lmn::monotone::Direction;

fuzz_target!(|data: &[u8]| {
    // The first byte picks the recipe; the rest is the CSV text.
    let Some((&pick, csv)) = data.split_first() else { return };
    let mut recipe = match pick % 3 {
        0 => DatasetRecipe::new("fuzz", "fuzz.csv", "y", TaskKind::Regression),
        1 => {
            let mut r = DatasetRecipe::new("fuzz", "fuzz.csv", "y", TaskKind::Binary);
            r.positive_label = Some("yes".into());
            r
        }
        _ => {
            let mut r = DatasetRecipe::new("fuzz", "fuzz.csv", "y", TaskKind::Regression);
            r.target_quantile = Some(0.9);
            r
        }
    };
    recipe.categorical = vec!["c".into()];
    recipe.monotone = vec![("a".into(), Direction::Increasing)];
    let Ok((ds, report)) = parse_csv(csv, &recipe) else { return };
    assert_eq!(ds.len(), ds.targets().len());
    assert!(report.rows_read >= ds.len());
    if !ds.is_empty() {
        let st = ds.standardize();
        assert!(st.rows().flatten().all(|v| v.is_finite()));
    }
});

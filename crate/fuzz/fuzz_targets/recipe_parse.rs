#![no_main]

use libfuzzer_sys::fuzz_target;
use lmn::data::DatasetRecipe;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(recipe) = DatasetRecipe::parse(text) else { return };
    let again = DatasetRecipe::parse(&recipe.to_text()).expect("re-parse of serialized recipe");
    assert_eq!(again, recipe);
});

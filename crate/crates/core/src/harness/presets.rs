//! Named strategies.

use crate::compose::{BudgetRule, Granularity, Order, Retrieval, StrategyConfig};
use crate::ingest::Language;

use super::HarnessError;

const FILE_KS: [usize; 4] = [1, 2, 3, 4];
const CHUNK_KS: [usize; 5] = [3, 5, 10, 15, 20];
const METHOD_KS: [usize; 2] = [5, 10];

/// Every preset name, in display order.
pub fn preset_names() -> Vec<String> {
    let mut names = vec!["no-context".to_owned(), "recent".to_owned()];
    for k in FILE_KS {
        names.push(format!("top-{k}-files"));
        names.push(format!("top-{k}-files-reversed"));
    }
    for k in CHUNK_KS {
        names.push(format!("top-{k}-chunks"));
        names.push(format!("top-{k}-chunks-reversed"));
    }
    for k in METHOD_KS {
        names.push(format!("top-{k}-method-chunks"));
        names.push(format!("top-{k}-method-chunks-reversed"));
    }
    names.extend(
        [
            "top-5-chunks-reversed-local-scope",
            "top-10-method-chunks-reversed-local-scope",
            "best-python",
            "best-kotlin",
        ]
        .map(str::to_owned),
    );
    names
}

/// Resolves a preset. `language` is used by presets that do not fix one.
pub fn preset(name: &str, language: Language) -> Result<StrategyConfig, HarnessError> {
    let unknown = || HarnessError::UnknownPreset {
        name: name.to_owned(),
        known: preset_names().join(", "),
    };
    match name {
        "no-context" => return Ok(StrategyConfig::new(Granularity::WholeFile, 0, Order::Descending, language)),
        "recent" => {
            return Ok(StrategyConfig {
                retrieval: Retrieval::Recent,
                ..StrategyConfig::new(Granularity::WholeFile, 1, Order::Descending, language)
            })
        }
        "best-python" => {
            return Ok(StrategyConfig {
                local_scope: true,
                ..StrategyConfig::new(Granularity::StandardChunk, 5, Order::Ascending, Language::Python)
            })
        }
        "best-kotlin" => {
            return Ok(StrategyConfig {
                local_scope: true,
                budget_rule: Some(BudgetRule {
                    min_tokens: 2_000,
                    extra_items: 3,
                }),
                ..StrategyConfig::new(Granularity::StandardChunk, 5, Order::Ascending, Language::Kotlin)
            })
        }
        _ => {}
    }
    if !preset_names().iter().any(|n| n == name) {
        return Err(unknown());
    }
    // Remaining names are `top-{k}-{unit}[-reversed][-local-scope]`.
    let rest = &name["top-".len()..];
    let (k, rest) = rest.split_once('-').ok_or_else(unknown)?;
    let k: usize = k.parse().map_err(|_| unknown())?;
    let granularity = if rest.starts_with("files") {
        Granularity::WholeFile
    } else if rest.starts_with("method-chunks") {
        Granularity::MethodChunk
    } else {
        Granularity::StandardChunk
    };
    let order = if rest.contains("-reversed") {
        Order::Ascending
    } else {
        Order::Descending
    };
    Ok(StrategyConfig {
        local_scope: rest.ends_with("-local-scope"),
        ..StrategyConfig::new(granularity, k, order, language)
    })
}

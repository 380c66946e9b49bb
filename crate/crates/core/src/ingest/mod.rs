//! Panel and price ingestion: loading, validation, imputation, price
//! preprocessing and construction of differenced growth rows.

mod growth;
mod intake;
mod panel;
mod prices;

pub use growth::{
    build_growth_observations, calendar_month, control_names, instrument_catalog, scale_diarrhea,
    BuildOptions, BuildReport, DiarrheaSource, Exclusion, GrowthObservation, GUATEMALA_PRICE_ITEMS,
    PHILIPPINES_PRICE_ITEMS,
};
pub use intake::{age_month, aggregate_intakes, impute_intakes_fe, ImputationSummary};
pub use panel::{load_panel, write_panel, ChildObservation, IntakeFlag, PANEL_HEADER};
pub use prices::{
    grams_per_unit, load_deflator, load_quotes, preprocess_prices, write_deflator, write_quotes,
    PriceOutput, PriceSeries, PriceTable, RawQuote, NATIONAL, PRICE_HEADER,
};

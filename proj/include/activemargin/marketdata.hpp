#pragma once

// Daily close series: ingestion, alignment, collateral index and synthetic
// generation.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace activemargin {

using Date = std::chrono::year_month_day;

/// Parses `YYYY-MM-DD`. Throws DateParseError.
Date parse_iso_date(std::string_view text);
std::string format_iso_date(const Date& date);

/// An immutable, validated daily close series.
///
/// Dates are strictly increasing and every close is finite and positive.
class PriceSeries {
public:
    PriceSeries(std::string instrument_id, std::vector<Date> dates,
                std::vector<double> closes);

    const std::string& instrument_id() const { return id_; }
    const std::vector<Date>& dates() const { return dates_; }
    const std::vector<double>& closes() const { return closes_; }
    std::size_t size() const { return closes_.size(); }

    friend bool operator==(const PriceSeries&, const PriceSeries&) = default;

private:
    std::string id_;
    std::vector<Date> dates_;
    std::vector<double> closes_;
};

/// Purchased stock and collateral stock over a common date vector.
struct PricePair {
    PriceSeries purchased;
    PriceSeries collateral;

    const std::string& id() const { return purchased.instrument_id(); }
    std::size_t size() const { return purchased.size(); }
    const std::vector<Date>& dates() const { return purchased.dates(); }

    friend bool operator==(const PricePair&, const PricePair&) = default;
};

/// X_i = P_i + delta * P'_i, the combined collateral value the chain models.
struct CollateralIndexSeries {
    double delta = 0.0;
    std::vector<double> values;
};

struct CsvFormat {
    std::string date_column = "date";
    std::string close_column = "close";
};

/// Loads a header-led CSV. Rows are sorted by date before the duplicate check.
/// The instrument id defaults to the file stem.
PriceSeries load_csv(const std::filesystem::path& path, const CsvFormat& format = {},
                     std::string instrument_id = {});

void write_csv(const std::filesystem::path& path, const PriceSeries& series);

/// Restricts both series to their common dates. Throws AlignmentError when
/// the intersection is empty.
PricePair align(const PriceSeries& purchased, const PriceSeries& collateral);

CollateralIndexSeries make_index(const PricePair& pair, double delta);

/// Index values over [first, first + count) without materialising the series.
void fill_index(const PricePair& pair, double delta, std::size_t first, std::size_t count,
                std::vector<double>& out);

struct SyntheticParams {
    std::uint64_t seed = 1;
    std::size_t days = 1100;
    double s0_purchased = 10.0;
    double s0_collateral = 10.0;
    double drift_purchased = 0.0;
    double drift_collateral = 0.0;
    double vol_purchased = 0.02;
    double vol_collateral = 0.02;
    double correlation = 0.0;
    Date start = Date{std::chrono::year{2010}, std::chrono::month{1}, std::chrono::day{4}};
    std::string purchased_id = "P";
    std::string collateral_id = "C";
};

/// Two correlated discrete geometric random walks on consecutive calendar days:
///   S_i = S_{i-1} * (1 + drift) * exp(vol * z_i - vol^2 / 2).
/// With vol = 0 the path is exactly the compounded drift.
PricePair generate_synthetic(const SyntheticParams& params);

/// A seeded universe of `count` pairs with per-pair parameters drawn from
/// fixed desk-realistic ranges. Pair i (0-based) has id "S" + zero-padded i + 1.
std::vector<PricePair> generate_universe(std::uint64_t seed, std::size_t count,
                                         std::size_t days);

/// Seeded random pairing: each purchased instrument gets a collateral drawn
/// uniformly from the others. Returns, per purchased index, the collateral index.
std::vector<std::size_t> random_pairing(std::size_t instrument_count, std::uint64_t seed);

}  // namespace activemargin

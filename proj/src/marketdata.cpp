#include "activemargin/marketdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "activemargin/errors.hpp"

namespace activemargin {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"'))
        s.remove_prefix(1);
    while (!s.empty() &&
           (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
        s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace

Date parse_iso_date(std::string_view text) {
    text = trim(text);
    int y = 0;
    unsigned m = 0, d = 0;
    if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !parse_int(text.substr(0, 4), y) ||
        !parse_int(text.substr(5, 2), m) || !parse_int(text.substr(8, 2), d)) {
        throw DateParseError("unparseable date '" + std::string(text) + "'");
    }
    Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!date.ok()) throw DateParseError("invalid calendar date '" + std::string(text) + "'");
    return date;
}

std::string format_iso_date(const Date& date) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                  static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
    return buf;
}

PriceSeries::PriceSeries(std::string instrument_id, std::vector<Date> dates,
                         std::vector<double> closes)
    : id_(std::move(instrument_id)), dates_(std::move(dates)), closes_(std::move(closes)) {
    if (dates_.size() != closes_.size())
        throw InvalidArgumentError("series '" + id_ + "': dates and closes differ in length");
    if (closes_.empty()) throw InvalidArgumentError("series '" + id_ + "' is empty");
    for (std::size_t i = 0; i < closes_.size(); ++i) {
        if (!std::isfinite(closes_[i]) || closes_[i] <= 0.0)
            throw PriceError("series '" + id_ + "': nonpositive or non-finite close on " +
                             format_iso_date(dates_[i]));
        if (i > 0 && !(dates_[i - 1] < dates_[i])) {
            if (dates_[i - 1] == dates_[i])
                throw DuplicateDateError("series '" + id_ + "': duplicate date " +
                                         format_iso_date(dates_[i]));
            throw InvalidArgumentError("series '" + id_ + "': dates not increasing");
        }
    }
}

PriceSeries load_csv(const std::filesystem::path& path, const CsvFormat& format,
                     std::string instrument_id) {
    std::ifstream in(path);
    if (!in) throw MissingFileError("cannot open price file '" + path.string() + "'");
    if (instrument_id.empty()) instrument_id = path.stem().string();

    std::string line;
    if (!std::getline(in, line)) throw CsvFormatError("'" + path.string() + "' has no header row");
    auto header = split(line);
    auto column = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw CsvFormatError("'" + path.string() + "' has no column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t date_col = column(format.date_column);
    const std::size_t close_col = column(format.close_column);

    std::vector<std::pair<Date, double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split(line);
        if (fields.size() <= std::max(date_col, close_col))
            throw CsvFormatError(path.string() + ":" + std::to_string(line_no) +
                                 ": too few columns");
        Date date = parse_iso_date(fields[date_col]);
        double close = 0.0;
        auto text = fields[close_col];
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), close);
        if (ec != std::errc{} || ptr != text.data() + text.size())
            throw PriceError(path.string() + ":" + std::to_string(line_no) +
                             ": non-numeric close '" + std::string(text) + "'");
        if (!std::isfinite(close) || close <= 0.0)
            throw PriceError(path.string() + ":" + std::to_string(line_no) +
                             ": nonpositive close " + std::string(text));
        rows.emplace_back(date, close);
    }
    if (rows.empty()) throw CsvFormatError("'" + path.string() + "' has no data rows");

    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Date> dates;
    std::vector<double> closes;
    dates.reserve(rows.size());
    closes.reserve(rows.size());
    for (const auto& [d, c] : rows) {
        if (!dates.empty() && dates.back() == d)
            throw DuplicateDateError("'" + path.string() + "': duplicate date " +
                                     format_iso_date(d));
        dates.push_back(d);
        closes.push_back(c);
    }
    return PriceSeries(std::move(instrument_id), std::move(dates), std::move(closes));
}

void write_csv(const std::filesystem::path& path, const PriceSeries& series) {
    std::ofstream out(path);
    if (!out) throw MissingFileError("cannot write '" + path.string() + "'");
    out << "date,close\n";
    char buf[64];
    for (std::size_t i = 0; i < series.size(); ++i) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, series.closes()[i]);
        out << format_iso_date(series.dates()[i]) << ',' << std::string_view(buf, ptr - buf)
            << '\n';
    }
}

PricePair align(const PriceSeries& purchased, const PriceSeries& collateral) {
    std::vector<Date> dates;
    std::vector<double> p, c;
    const auto& da = purchased.dates();
    const auto& db = collateral.dates();
    std::size_t i = 0, j = 0;
    while (i < da.size() && j < db.size()) {
        if (da[i] < db[j]) {
            ++i;
        } else if (db[j] < da[i]) {
            ++j;
        } else {
            dates.push_back(da[i]);
            p.push_back(purchased.closes()[i]);
            c.push_back(collateral.closes()[j]);
            ++i;
            ++j;
        }
    }
    if (dates.empty())
        throw AlignmentError("'" + purchased.instrument_id() + "' and '" +
                             collateral.instrument_id() + "' share no trading days");
    return PricePair{PriceSeries(purchased.instrument_id(), dates, std::move(p)),
                     PriceSeries(collateral.instrument_id(), dates, std::move(c))};
}

CollateralIndexSeries make_index(const PricePair& pair, double delta) {
    if (!(delta >= 0.0)) throw InvalidArgumentError("delta must be nonnegative");
    CollateralIndexSeries index{delta, {}};
    fill_index(pair, delta, 0, pair.size(), index.values);
    return index;
}

void fill_index(const PricePair& pair, double delta, std::size_t first, std::size_t count,
                std::vector<double>& out) {
    if (first + count > pair.size()) throw InvalidArgumentError("index range out of bounds");
    const auto& p = pair.purchased.closes();
    const auto& c = pair.collateral.closes();
    out.resize(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = p[first + i] + delta * c[first + i];
}

PricePair generate_synthetic(const SyntheticParams& params) {
    if (params.days < 1) throw InvalidArgumentError("days must be at least 1");
    if (!(params.vol_purchased >= 0.0) || !(params.vol_collateral >= 0.0))
        throw InvalidArgumentError("volatilities must be nonnegative");
    if (!(std::abs(params.correlation) <= 1.0))
        throw InvalidArgumentError("correlation must lie in [-1, 1]");
    if (!(params.s0_purchased > 0.0) || !(params.s0_collateral > 0.0))
        throw InvalidArgumentError("initial prices must be positive");
    if (!(params.drift_purchased > -1.0) || !(params.drift_collateral > -1.0))
        throw InvalidArgumentError("drift must exceed -1");

    std::mt19937_64 rng(params.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double rho = params.correlation;
    const double rho_c = std::sqrt(std::max(0.0, 1.0 - rho * rho));

    std::vector<Date> dates(params.days);
    std::vector<double> p(params.days), c(params.days);
    std::chrono::sys_days day{params.start};
    p[0] = params.s0_purchased;
    c[0] = params.s0_collateral;
    dates[0] = Date{day};
    const double vp = params.vol_purchased, vc = params.vol_collateral;
    for (std::size_t i = 1; i < params.days; ++i) {
        day += std::chrono::days{1};
        dates[i] = Date{day};
        const double e1 = normal(rng);
        const double e2 = normal(rng);
        const double z1 = e1;
        const double z2 = rho * e1 + rho_c * e2;
        double shock_p = vp == 0.0 ? 1.0 : std::exp(vp * z1 - 0.5 * vp * vp);
        double shock_c = vc == 0.0 ? 1.0 : std::exp(vc * z2 - 0.5 * vc * vc);
        p[i] = p[i - 1] * (1.0 + params.drift_purchased) * shock_p;
        c[i] = c[i - 1] * (1.0 + params.drift_collateral) * shock_c;
    }
    return PricePair{PriceSeries(params.purchased_id, dates, std::move(p)),
                     PriceSeries(params.collateral_id, dates, std::move(c))};
}

std::vector<PricePair> generate_universe(std::uint64_t seed, std::size_t count,
                                         std::size_t days) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> s0(5.0, 50.0);
    std::uniform_real_distribution<double> vol(0.010, 0.030);
    std::uniform_real_distribution<double> drift(-0.0004, 0.0008);
    std::uniform_real_distribution<double> corr(0.0, 0.6);

    std::vector<PricePair> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "S%04zu", i + 1);
        SyntheticParams params;
        params.seed = rng();
        params.days = days;
        params.s0_purchased = s0(rng);
        params.s0_collateral = s0(rng);
        params.drift_purchased = drift(rng);
        params.drift_collateral = drift(rng);
        params.vol_purchased = vol(rng);
        params.vol_collateral = vol(rng);
        params.correlation = corr(rng);
        params.purchased_id = id;
        params.collateral_id = std::string(id) + "C";
        out.push_back(generate_synthetic(params));
    }
    return out;
}

std::vector<std::size_t> random_pairing(std::size_t instrument_count, std::uint64_t seed) {
    if (instrument_count < 2)
        throw InvalidArgumentError("pairing needs at least two instruments");
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> out(instrument_count);
    for (std::size_t i = 0; i < instrument_count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(0, instrument_count - 2);
        std::size_t j = pick(rng);
        out[i] = j >= i ? j + 1 : j;
    }
    return out;
}

}  // namespace activemargin

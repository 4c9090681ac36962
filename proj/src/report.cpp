#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "activemargin/backtest.hpp"
#include "activemargin/errors.hpp"

namespace activemargin {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string number(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

nlohmann::json json_number(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

template <std::size_t N>
nlohmann::json json_array(const std::array<double, N>& values) {
    auto out = nlohmann::json::array();
    for (double v : values) out.push_back(json_number(v));
    return out;
}

std::array<double, 7> cross_stock(std::vector<double> values) {
    std::array<double, 7> out;
    out.fill(kNaN);
    if (values.empty()) return out;
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    out = {values.front(), values.back(), sum / static_cast<double>(values.size()),
           quantile(values, 0.70), quantile(values, 0.80), quantile(values, 0.90),
           quantile(values, 0.95)};
    return out;
}

std::array<double, 9> call_count_row(std::vector<double> values) {
    std::array<double, 9> out;
    out.fill(kNaN);
    if (values.empty()) return out;
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    out = {values.front(),          values.back(),          sum / static_cast<double>(values.size()),
           quantile(values, 0.30), quantile(values, 0.50), quantile(values, 0.80),
           quantile(values, 0.90), quantile(values, 0.95), quantile(values, 0.99)};
    return out;
}

QuantileTable make_table(std::string name, const std::vector<StockSummary>& stocks,
                         std::array<double, 12> StockSummary::*field) {
    QuantileTable table;
    table.name = std::move(name);
    for (std::size_t s = 0; s < 12; ++s) {
        std::vector<double> column;
        for (const auto& stock : stocks)
            if (stock.passes) column.push_back((stock.*field)[s]);
        table.rows[s] = cross_stock(std::move(column));
    }
    return table;
}

nlohmann::json table_json(const QuantileTable& t) {
    nlohmann::json rows = nlohmann::json::object();
    for (std::size_t s = 0; s < 12; ++s) rows[kStatisticNames[s]] = json_array(t.rows[s]);
    return nlohmann::json{{"name", t.name}, {"columns", kCrossStockColumns}, {"rows", rows}};
}

void write_table_csv(const QuantileTable& t, const std::filesystem::path& path,
                     const std::array<double, 12>* relative_difference = nullptr) {
    std::ofstream out(path);
    if (!out) throw MissingFileError("cannot write '" + path.string() + "'");
    out << "statistic";
    for (const char* c : kCrossStockColumns) out << ',' << c;
    if (relative_difference) out << ",rd";
    out << '\n';
    for (std::size_t s = 0; s < 12; ++s) {
        out << kStatisticNames[s];
        for (double v : t.rows[s]) out << ',' << number(v);
        if (relative_difference) out << ',' << number((*relative_difference)[s]);
        out << '\n';
    }
}

}  // namespace

double quantile(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw InvalidArgumentError("quantile of an empty sample");
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::array<double, 12> twelve_statistics(std::span<const double> values) {
    if (values.empty()) throw InvalidArgumentError("statistics of an empty sample");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    double sum = 0.0;
    for (double v : sorted) sum += v;
    std::array<double, 12> out{};
    out[0] = sorted.front();
    out[1] = sorted.back();
    out[2] = sum / static_cast<double>(sorted.size());
    constexpr std::array<double, 9> levels = {0.20, 0.30, 0.40, 0.50, 0.60,
                                              0.70, 0.80, 0.90, 0.95};
    for (std::size_t i = 0; i < levels.size(); ++i) out[3 + i] = quantile(sorted, levels[i]);
    return out;
}

BacktestReport build_report(std::span<const LoanOutcome> outcomes, double cpnr_cap) {
    BacktestReport report;
    report.cpnr_cap = cpnr_cap;

    std::map<std::string, std::vector<const LoanOutcome*>> by_stock;
    for (const auto& o : outcomes) by_stock[o.stock_id].push_back(&o);

    for (const auto& [id, list] : by_stock) {
        StockSummary s;
        s.id = id;
        std::vector<LoanOutcome> deduced;
        std::vector<double> m, omega, prop, cost_d, cost_r;
        for (const LoanOutcome* o : list) {
            if (o->system_kind == SystemKind::deduced) {
                deduced.push_back(*o);
                m.push_back(o->system.m);
                omega.push_back(o->system.omega);
                prop.push_back(o->p_stock);
                cost_d.push_back(o->cost);
                s.negatives_deduced += o->negative_return ? 1 : 0;
                s.calls_deduced += o->called ? 1 : 0;
                s.fallbacks += o->fallback ? 1 : 0;
            } else {
                cost_r.push_back(o->cost);
                s.negatives_required += o->negative_return ? 1 : 0;
                s.calls_required += o->called ? 1 : 0;
            }
        }
        if (deduced.empty() || cost_r.empty())
            throw InvalidArgumentError("stock '" + id + "' lacks deduced or required outcomes");
        s.loans = deduced.size();
        s.negative_frequency =
            static_cast<double>(s.negatives_deduced) / static_cast<double>(s.loans);
        s.passes = stock_passes(deduced, cpnr_cap);
        s.initial_ratio = twelve_statistics(m);
        s.maintenance_ratio = twelve_statistics(omega);
        s.stock_proportion = twelve_statistics(prop);
        s.cost_deduced = twelve_statistics(cost_d);
        s.cost_required = twelve_statistics(cost_r);
        report.passing += s.passes ? 1 : 0;
        report.fallbacks += s.fallbacks;
        report.stocks.push_back(std::move(s));
    }

    report.initial_ratio = make_table("initial_margin_ratio", report.stocks,
                                      &StockSummary::initial_ratio);
    report.maintenance_ratio = make_table("maintenance_margin_ratio", report.stocks,
                                          &StockSummary::maintenance_ratio);
    report.stock_proportion = make_table("stock_proportion", report.stocks,
                                         &StockSummary::stock_proportion);
    report.cost_deduced = make_table("cost_deduced", report.stocks, &StockSummary::cost_deduced);
    report.cost_required = make_table("cost_required", report.stocks, &StockSummary::cost_required);
    for (std::size_t s = 0; s < 12; ++s) {
        const double d = report.cost_deduced.rows[s][6];
        const double r = report.cost_required.rows[s][6];
        report.cost_relative_difference[s] = r != 0.0 ? (d - r) / r : kNaN;
    }

    std::vector<double> calls_r, calls_d;
    double all_r = 0.0, all_d = 0.0;
    for (const auto& s : report.stocks) {
        all_r += static_cast<double>(s.calls_required);
        all_d += static_cast<double>(s.calls_deduced);
        if (!s.passes) continue;
        calls_r.push_back(static_cast<double>(s.calls_required));
        calls_d.push_back(static_cast<double>(s.calls_deduced));
    }
    report.call_counts[0] = call_count_row(std::move(calls_r));
    report.call_counts[1] = call_count_row(std::move(calls_d));
    if (!report.stocks.empty()) {
        report.mean_calls_required_all = all_r / static_cast<double>(report.stocks.size());
        report.mean_calls_deduced_all = all_d / static_cast<double>(report.stocks.size());
    }
    return report;
}

nlohmann::json report_to_json(const BacktestReport& report) {
    auto stocks = nlohmann::json::array();
    for (const auto& s : report.stocks) {
        stocks.push_back({{"id", s.id},
                          {"loans", s.loans},
                          {"negatives_deduced", s.negatives_deduced},
                          {"negatives_required", s.negatives_required},
                          {"negative_frequency", s.negative_frequency},
                          {"passes", s.passes},
                          {"fallbacks", s.fallbacks},
                          {"calls_required", s.calls_required},
                          {"calls_deduced", s.calls_deduced},
                          {"initial_ratio", json_array(s.initial_ratio)},
                          {"maintenance_ratio", json_array(s.maintenance_ratio)},
                          {"stock_proportion", json_array(s.stock_proportion)},
                          {"cost_deduced", json_array(s.cost_deduced)},
                          {"cost_required", json_array(s.cost_required)}});
    }
    auto calls = nlohmann::json{{"columns", kCallCountColumns},
                                {"required", json_array(report.call_counts[0])},
                                {"deduced", json_array(report.call_counts[1])}};
    return nlohmann::json{
        {"cpnr_cap", report.cpnr_cap},
        {"statistics", kStatisticNames},
        {"stock_count", report.stocks.size()},
        {"passing", report.passing},
        {"fallbacks", report.fallbacks},
        {"mean_calls_required_all", report.mean_calls_required_all},
        {"mean_calls_deduced_all", report.mean_calls_deduced_all},
        {"stocks", stocks},
        {"tables",
         {{"initial_margin_ratio", table_json(report.initial_ratio)},
          {"maintenance_margin_ratio", table_json(report.maintenance_ratio)},
          {"stock_proportion", table_json(report.stock_proportion)},
          {"cost_deduced", table_json(report.cost_deduced)},
          {"cost_required", table_json(report.cost_required)},
          {"cost_relative_difference_q95", json_array(report.cost_relative_difference)},
          {"margin_calls", calls}}}};
}

void write_report(const BacktestReport& report, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir / "tables");
    {
        std::ofstream out(out_dir / "report.json");
        if (!out) throw MissingFileError("cannot write report.json in '" + out_dir.string() + "'");
        out << report_to_json(report).dump(2) << '\n';
    }
    const auto tables = out_dir / "tables";
    write_table_csv(report.initial_ratio, tables / "table1_initial_margin.csv");
    write_table_csv(report.maintenance_ratio, tables / "table2_maintenance_margin.csv");
    write_table_csv(report.stock_proportion, tables / "table3_stock_proportion.csv");
    {
        std::ofstream out(tables / "table4_costs.csv");
        if (!out) throw MissingFileError("cannot write table4_costs.csv");
        out << "statistic,system";
        for (const char* c : kCrossStockColumns) out << ',' << c;
        out << ",rd\n";
        for (std::size_t s = 0; s < 12; ++s) {
            out << kStatisticNames[s] << ",deduced";
            for (double v : report.cost_deduced.rows[s]) out << ',' << number(v);
            out << ',' << number(report.cost_relative_difference[s]) << '\n';
            out << kStatisticNames[s] << ",required";
            for (double v : report.cost_required.rows[s]) out << ',' << number(v);
            out << ",\n";
        }
    }
    {
        std::ofstream out(tables / "table5_margin_calls.csv");
        if (!out) throw MissingFileError("cannot write table5_margin_calls.csv");
        out << "system";
        for (const char* c : kCallCountColumns) out << ',' << c;
        out << '\n';
        const char* names[2] = {"required", "deduced"};
        for (std::size_t r = 0; r < 2; ++r) {
            out << names[r];
            for (double v : report.call_counts[r]) out << ',' << number(v);
            out << '\n';
        }
    }
}

void print_report(const BacktestReport& report, std::ostream& os) {
    auto fmt = [](double v) {
        std::ostringstream s;
        if (std::isnan(v))
            s << std::setw(9) << "-";
        else
            s << std::setw(9) << std::fixed << std::setprecision(4) << v;
        return s.str();
    };
    os << "stocks: " << report.stocks.size() << "  passing (negative-return frequency <= "
       << report.cpnr_cap << "): " << report.passing << "  fallbacks: " << report.fallbacks
       << '\n';
    os << "mean margin calls per stock (all stocks): required "
       << report.mean_calls_required_all << ", deduced " << report.mean_calls_deduced_all
       << "\n\n";

    auto print_table = [&](const QuantileTable& t) {
        os << t.name << " (passing stocks)\n" << std::setw(10) << "";
        for (const char* c : kCrossStockColumns) os << std::setw(9) << c;
        os << '\n';
        for (std::size_t s = 0; s < 12; ++s) {
            os << std::setw(10) << std::left << kStatisticNames[s] << std::right;
            for (double v : t.rows[s]) os << fmt(v);
            os << '\n';
        }
        os << '\n';
    };
    print_table(report.initial_ratio);
    print_table(report.maintenance_ratio);
    print_table(report.stock_proportion);
    print_table(report.cost_deduced);
    print_table(report.cost_required);

    os << "margin calls per stock (passing stocks)\n" << std::setw(10) << "";
    for (const char* c : kCallCountColumns) os << std::setw(9) << c;
    os << '\n';
    const char* names[2] = {"required", "deduced"};
    for (std::size_t r = 0; r < 2; ++r) {
        os << std::setw(10) << std::left << names[r] << std::right;
        for (double v : report.call_counts[r]) os << fmt(v);
        os << '\n';
    }
}

// ---------------------------------------------------------------------------
// outcomes.csv

namespace {

constexpr const char* kOutcomeHeader =
    "stock,date,system,m,delta,omega,q0,p0,p0_collateral,tau,tau_star,exit_day,return,cost,"
    "called,negative,p_stock,fallback,horizon,r,loan_rate";

double parse_double(std::string_view s, const char* what) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw CsvFormatError(std::string("outcomes.csv: bad ") + what + " '" + std::string(s) + "'");
    return v;
}

std::size_t parse_size(std::string_view s, const char* what) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw CsvFormatError(std::string("outcomes.csv: bad ") + what + " '" + std::string(s) + "'");
    return v;
}

}  // namespace

void write_outcomes_csv(std::span<const LoanOutcome> outcomes, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw MissingFileError("cannot write '" + path.string() + "'");
    out << kOutcomeHeader << '\n';
    for (const auto& o : outcomes) {
        const auto& l = o.ledger;
        out << o.stock_id << ',' << format_iso_date(o.inception) << ',' << to_string(o.system_kind)
            << ',' << number(o.system.m) << ',' << number(o.system.delta) << ','
            << number(o.system.omega) << ',' << number(o.system.q0) << ',' << number(o.p0) << ','
            << number(o.p0_collateral) << ',' << (l.tau ? std::to_string(*l.tau) : "") << ','
            << (l.tau_star ? std::to_string(*l.tau_star) : "") << ',' << l.exit_day << ','
            << number(l.realized_return) << ',' << number(o.cost) << ',' << (o.called ? 1 : 0)
            << ',' << (o.negative_return ? 1 : 0) << ',' << number(o.p_stock) << ','
            << (o.fallback ? 1 : 0) << ',' << l.terms.horizon << ',' << number(l.terms.r) << ','
            << number(l.terms.loan_rate) << '\n';
    }
}

std::vector<LoanOutcome> read_outcomes_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingFileError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line != kOutcomeHeader)
        throw CsvFormatError("'" + path.string() + "' is not an outcomes.csv dump");
    std::vector<LoanOutcome> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string_view> f;
        std::string_view rest = line;
        while (true) {
            auto pos = rest.find(',');
            f.push_back(rest.substr(0, pos));
            if (pos == std::string_view::npos) break;
            rest.remove_prefix(pos + 1);
        }
        if (f.size() != 21) throw CsvFormatError("outcomes.csv: expected 21 columns");
        LoanOutcome o;
        o.stock_id = std::string(f[0]);
        o.inception = parse_iso_date(f[1]);
        if (f[2] == "deduced")
            o.system_kind = SystemKind::deduced;
        else if (f[2] == "required")
            o.system_kind = SystemKind::required;
        else
            throw CsvFormatError("outcomes.csv: unknown system '" + std::string(f[2]) + "'");
        o.system.m = parse_double(f[3], "m");
        o.system.delta = parse_double(f[4], "delta");
        o.system.omega = parse_double(f[5], "omega");
        o.system.q0 = parse_double(f[6], "q0");
        o.p0 = parse_double(f[7], "p0");
        o.p0_collateral = parse_double(f[8], "p0_collateral");
        auto& l = o.ledger;
        if (!f[9].empty()) l.tau = parse_size(f[9], "tau");
        if (!f[10].empty()) l.tau_star = parse_size(f[10], "tau_star");
        l.exit_day = parse_size(f[11], "exit_day");
        l.realized_return = parse_double(f[12], "return");
        o.cost = parse_double(f[13], "cost");
        o.called = f[14] == "1";
        o.negative_return = f[15] == "1";
        o.p_stock = parse_double(f[16], "p_stock");
        o.fallback = f[17] == "1";
        l.terms.horizon = parse_size(f[18], "horizon");
        l.terms.r = parse_double(f[19], "r");
        l.terms.loan_rate = parse_double(f[20], "loan_rate");
        l.terms.q0 = o.system.q0;
        l.terms.delta = o.system.delta;
        l.terms.omega = o.system.omega;
        l.terms.p0 = o.p0;
        l.terms.p0_collateral = o.p0_collateral;
        out.push_back(std::move(o));
    }
    return out;
}

}  // namespace activemargin

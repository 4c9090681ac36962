#include "activemargin/cli.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "activemargin/backtest.hpp"
#include "activemargin/errors.hpp"

namespace activemargin {

namespace {

constexpr std::array<const char*, 6> kSubcommands = {"gen",    "chain",    "cpnr",
                                                     "search", "backtest", "report"};

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

// Flat `key = value` lines become `--key value` tokens. `#` starts a comment.
// Boolean flags take `true` / `false`.
std::vector<std::string> config_tokens(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingFileError("cannot open config file '" + path + "'");
    std::vector<std::string> tokens;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string content = trim(line);
        if (content.empty()) continue;
        const auto eq = content.find('=');
        if (eq == std::string::npos)
            throw InvalidArgumentError(path + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(std::string_view(content).substr(0, eq));
        std::string value = trim(std::string_view(content).substr(eq + 1));
        std::replace(key.begin(), key.end(), '_', '-');
        if (key.empty())
            throw InvalidArgumentError(path + ":" + std::to_string(lineno) + ": empty key");
        if (value == "false") continue;
        tokens.push_back("--" + key);
        if (value != "true") tokens.push_back(value);
    }
    return tokens;
}

// Pulls `--config <path>` out of argv and splices the file's tokens in right
// after the subcommand, so that later command-line flags override them.
std::vector<std::string> expand_config(int argc, const char* const* argv) {
    std::vector<std::string> args(argv, argv + argc);
    std::optional<std::string> config;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw InvalidArgumentError("--config needs a path");
            config = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                       args.begin() + static_cast<std::ptrdiff_t>(i + 2));
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            config = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (!config) return args;
    auto sub = std::find_if(args.begin() + 1, args.end(), [](const std::string& a) {
        return std::find(kSubcommands.begin(), kSubcommands.end(), a) != kSubcommands.end();
    });
    if (sub == args.end()) throw InvalidArgumentError("--config needs a subcommand");
    auto tokens = config_tokens(*config);
    args.insert(sub + 1, tokens.begin(), tokens.end());
    return args;
}

struct DataOptions {
    std::string purchased;
    std::string collateral;
    std::string date_col = "date";
    std::string close_col = "close";

    void add(CLI::App* app, bool required) {
        auto* p = app->add_option("--purchased", purchased, "CSV of the purchased stock")
                      ->check(CLI::ExistingFile);
        auto* c = app->add_option("--collateral", collateral, "CSV of the collateral stock")
                      ->check(CLI::ExistingFile);
        if (required) {
            p->required();
            c->required();
        }
        app->add_option("--date-col", date_col, "date column name")->capture_default_str();
        app->add_option("--close-col", close_col, "close column name")->capture_default_str();
    }

    PricePair load() const {
        const CsvFormat fmt{date_col, close_col};
        return align(load_csv(purchased, fmt), load_csv(collateral, fmt));
    }
};

struct LoanSelector {
    std::string date;
    long long index = -1;

    void add(CLI::App* app) {
        app->add_option("--loan-date", date, "inception date (YYYY-MM-DD); default: last date");
        app->add_option("--loan-index", index, "inception row of the aligned series")
            ->check(CLI::NonNegativeNumber);
    }

    std::size_t resolve(const PricePair& pair) const {
        if (!date.empty()) {
            const Date d = parse_iso_date(date);
            const auto& dates = pair.dates();
            auto it = std::lower_bound(dates.begin(), dates.end(), d);
            if (it == dates.end() || *it != d)
                throw InvalidArgumentError("no aligned price on " + date);
            return static_cast<std::size_t>(it - dates.begin());
        }
        if (index >= 0) {
            if (static_cast<std::size_t>(index) >= pair.size())
                throw InvalidArgumentError("--loan-index beyond the series");
            return static_cast<std::size_t>(index);
        }
        return pair.size() - 1;
    }
};

RepresentativePrice parse_representative(const std::string& s) {
    if (s == "mean") return RepresentativePrice::mean;
    if (s == "median") return RepresentativePrice::median;
    throw InvalidArgumentError("representative must be mean or median");
}

nlohmann::json size_array(const std::vector<std::size_t>& v) {
    return nlohmann::json(v);
}

// ---------------------------------------------------------------------------

struct GenCommand {
    SyntheticParams params;
    std::string out_dir = ".";
    std::size_t universe = 0;
    std::string start = "2010-01-04";

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("gen", "write synthetic price CSVs");
        app->add_option("--seed", params.seed, "RNG seed")->capture_default_str();
        app->add_option("--days", params.days, "number of daily closes")
            ->check(CLI::Range(std::size_t{2}, std::numeric_limits<std::size_t>::max()))
            ->capture_default_str();
        app->add_option("--out-dir", out_dir, "output directory")->capture_default_str();
        app->add_option("--start", start, "first date")->capture_default_str();
        app->add_option("--s0", params.s0_purchased)->check(CLI::PositiveNumber);
        app->add_option("--s0-collateral", params.s0_collateral)->check(CLI::PositiveNumber);
        app->add_option("--drift", params.drift_purchased)->check(CLI::Range(-0.5, 0.5));
        app->add_option("--drift-collateral", params.drift_collateral)->check(CLI::Range(-0.5, 0.5));
        app->add_option("--vol", params.vol_purchased)->check(CLI::Range(0.0, 1.0));
        app->add_option("--vol-collateral", params.vol_collateral)->check(CLI::Range(0.0, 1.0));
        app->add_option("--correlation", params.correlation, "shock correlation")
            ->check(CLI::Range(-1.0, 1.0));
        app->add_option("--purchased-id", params.purchased_id)->capture_default_str();
        app->add_option("--collateral-id", params.collateral_id)->capture_default_str();
        app->add_option("--universe", universe,
                        "write this many pairs with drawn parameters instead of one pair");
    }

    void run(std::ostream& out) {
        params.start = parse_iso_date(start);
        std::filesystem::create_directories(out_dir);
        std::vector<PricePair> pairs;
        if (universe > 0)
            pairs = generate_universe(params.seed, universe, params.days);
        else
            pairs.push_back(generate_synthetic(params));
        for (const auto& pair : pairs) {
            for (const PriceSeries* s : {&pair.purchased, &pair.collateral}) {
                const auto path = std::filesystem::path(out_dir) / (s->instrument_id() + ".csv");
                write_csv(path, *s);
                out << path.string() << '\n';
            }
        }
    }
};

struct ChainCommand {
    DataOptions data;
    double delta = 0.0;
    std::size_t window = 0;
    std::size_t g = 0;
    std::size_t target_states = 40;
    std::string representative = "mean";
    double tick = 0.01;
    std::string dump;
    std::string load;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("chain", "estimate a chain and dump it as JSON");
        data.add(app, false);
        app->add_option("--delta", delta, "collateral shares in the index")
            ->check(CLI::NonNegativeNumber);
        app->add_option("--window", window, "use only the last N index values (0: all)");
        app->add_option("--g", g, "distinct values per state (0: automatic)");
        app->add_option("--target-states", target_states)->check(CLI::PositiveNumber);
        app->add_option("--representative", representative)
            ->check(CLI::IsMember({"mean", "median"}));
        app->add_option("--tick", tick)->check(CLI::PositiveNumber);
        app->add_option("--dump", dump, "write the JSON here instead of standard output");
        app->add_option("--load", load, "re-read a dump instead of estimating")
            ->check(CLI::ExistingFile);
    }

    void run(std::ostream& out) {
        std::optional<MarkovChain> chain;
        if (!load.empty()) {
            std::ifstream in(load);
            nlohmann::json j;
            try {
                in >> j;
            } catch (const nlohmann::json::exception& e) {
                throw InvalidArgumentError("'" + load + "' is not JSON: " + e.what());
            }
            chain = chain_from_json(j);
        } else {
            if (data.purchased.empty() || data.collateral.empty())
                throw InvalidArgumentError("chain needs --purchased and --collateral, or --load");
            const PricePair pair = data.load();
            std::vector<double> values = make_index(pair, delta).values;
            if (window > 0 && window < values.size())
                values.erase(values.begin(),
                             values.end() - static_cast<std::ptrdiff_t>(window));
            StateOptions opts{parse_representative(representative), tick};
            chain = estimate(values, g ? g : default_g(values, target_states), opts);
        }
        const std::string text = chain_to_json(*chain).dump(2) + "\n";
        if (dump.empty()) {
            out << text;
        } else {
            std::ofstream f(dump);
            if (!f) throw MissingFileError("cannot write '" + dump + "'");
            f << text;
        }
    }
};

// Options shared by cpnr and search.
struct ModelOptions {
    std::size_t window = 800;
    std::size_t horizon = 30;
    std::size_t g = 0;
    std::size_t target_states = 40;
    std::string mode = "paper";
    double r = 0.0001;
    double loan_rate = 0.0001;
    std::string representative = "mean";
    double tick = 0.01;

    void add(CLI::App* app) {
        app->add_option("--window", window, "estimation window in days")
            ->check(CLI::Range(std::size_t{2}, std::numeric_limits<std::size_t>::max()))
            ->capture_default_str();
        app->add_option("--t", horizon, "loan horizon in days")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        app->add_option("--g", g, "distinct values per state (0: automatic)");
        app->add_option("--target-states", target_states)->check(CLI::PositiveNumber);
        app->add_option("--mode", mode, "paper, exact or brute")
            ->check(CLI::IsMember({"paper", "exact", "brute", "paper_recursion",
                                   "exact_first_passage", "brute_force"}))
            ->capture_default_str();
        app->add_option("--r", r, "risk-free rate per day")->check(CLI::NonNegativeNumber);
        app->add_option("--loan-rate", loan_rate, "loan rate per day")
            ->check(CLI::NonNegativeNumber);
        app->add_option("--representative", representative)
            ->check(CLI::IsMember({"mean", "median"}));
        app->add_option("--tick", tick)->check(CLI::PositiveNumber);
    }

    SearchConfig search(double cap) const {
        SearchConfig c;
        c.window = window;
        c.horizon = horizon;
        c.cpnr_cap = cap;
        c.g = g;
        c.target_states = target_states;
        c.method = parse_method(mode);
        c.r = r;
        c.loan_rate = loan_rate;
        c.states = StateOptions{parse_representative(representative), tick};
        return c;
    }
};

struct CpnrCommand {
    DataOptions data;
    LoanSelector loan;
    ModelOptions model;
    double m = kRequiredInitialRatio;
    std::optional<double> q0;
    double delta = 0.0;
    double omega = kRequiredMaintenanceRatio;
    bool inclusive = false;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("cpnr", "CPNR of one loan as JSON");
        data.add(app, true);
        loan.add(app);
        model.add(app);
        app->add_option("--m", m, "initial margin ratio")->check(CLI::NonNegativeNumber);
        app->add_option("--q0", q0, "cash margin per share (overrides --m)")
            ->check(CLI::NonNegativeNumber);
        app->add_option("--delta", delta, "collateral shares")->check(CLI::NonNegativeNumber);
        app->add_option("--omega", omega, "maintenance margin ratio")->check(CLI::Range(1.0, 10.0));
        app->add_flag("--inclusive", inclusive, "count states exactly at a threshold as hit");
    }

    void run(std::ostream& out) {
        const PricePair pair = data.load();
        const std::size_t t0 = loan.resolve(pair);
        if (t0 < model.window)
            throw InsufficientDataError("loan at row " + std::to_string(t0) + " needs " +
                                        std::to_string(model.window) + " prior prices");
        const SearchConfig cfg = model.search(1.0);
        LoanTerms terms;
        terms.p0 = pair.purchased.closes()[t0];
        terms.p0_collateral = pair.collateral.closes()[t0];
        terms.delta = delta;
        terms.q0 = q0 ? *q0 : m * terms.p0 - delta * terms.p0_collateral;
        terms.horizon = model.horizon;
        terms.r = model.r;
        terms.loan_rate = model.loan_rate;
        terms.omega = omega;
        terms.validate();

        std::vector<double> values;
        fill_index(pair, delta, t0 - model.window, model.window, values);
        const MarkovChain chain =
            estimate(values, cfg.g ? cfg.g : default_g(values, cfg.target_states), cfg.states);
        const std::size_t h = classify(chain.states(), terms.initial_index());
        const CpnrResult res =
            cpnr(chain, terms, h, cfg.method,
                 inclusive ? ThresholdComparison::inclusive : ThresholdComparison::strict);
        const nlohmann::json j{{"prob_c", res.prob_c},
                               {"prob_nc", res.prob_nc},
                               {"cpnr", res.cpnr},
                               {"per_day_call", res.per_day_call},
                               {"method", std::string(to_string(res.method))},
                               {"k", size_array(res.k)},
                               {"a", size_array(res.a)},
                               {"adequate", check_adequacy(terms)},
                               {"loan_date", format_iso_date(pair.dates()[t0])},
                               {"states", chain.size()},
                               {"h", h}};
        out << j.dump(2) << '\n';
    }
};

struct SearchCommand {
    DataOptions data;
    LoanSelector loan;
    ModelOptions model;
    double cap = 0.05;
    int workers = 1;
    bool serial = false;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("search", "feasible set and deduced system of one loan");
        data.add(app, true);
        loan.add(app);
        model.add(app);
        app->add_option("--cap", cap, "CPNR cap")->check(CLI::Range(0.0, 1.0))->capture_default_str();
        app->add_option("--workers", workers, "OpenMP threads")->check(CLI::PositiveNumber);
        app->add_flag("--serial", serial, "use the unshared reference evaluation");
    }

    void run(std::ostream& out) {
        const PricePair pair = data.load();
        const std::size_t t0 = loan.resolve(pair);
        const SearchConfig cfg = model.search(cap);
        const FeasibleSet set =
            serial ? feasible_set_serial(pair, t0, cfg) : feasible_set(pair, t0, cfg, workers);
        nlohmann::json j{{"feasible_count", set.points.size()},
                         {"deterministic_count", set.deterministic_count},
                         {"loan_date", format_iso_date(pair.dates()[t0])}};
        if (set.points.empty()) {
            for (const char* key : {"m_star", "delta_star", "omega_star", "q0", "cpnr_at_star"})
                j[key] = nullptr;
        } else {
            const MarginPoint star = select_deduced(set.points);
            j["m_star"] = star.m;
            j["delta_star"] = star.delta;
            j["omega_star"] = star.omega;
            j["q0"] = star.q0;
            j["cpnr_at_star"] = star.cpnr;
        }
        if (!set.failures.empty()) {
            auto failures = nlohmann::json::array();
            for (const auto& f : set.failures)
                failures.push_back({{"delta", f.delta}, {"reason", f.reason}});
            j["skipped_slices"] = failures;
        }
        out << j.dump(2) << '\n';
    }
};

struct BacktestCommand {
    DataOptions data;
    std::string universe_dir;
    std::size_t synthetic = 0;
    std::uint64_t seed = 1;
    std::size_t days = 1100;
    std::string out_dir = "backtest_out";
    int workers = 1;
    BacktestConfig config;
    std::string mode = "paper";
    std::string required_delta = "deduced";
    bool quiet = false;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("backtest", "out-of-sample comparison of both systems");
        data.add(app, false);
        app->add_option("--universe", universe_dir,
                        "directory of price CSVs paired at random (see --seed)")
            ->check(CLI::ExistingDirectory);
        app->add_option("--synthetic-stocks", synthetic, "generate this many synthetic pairs");
        app->add_option("--seed", seed, "seed for pairing or synthetic data")->capture_default_str();
        app->add_option("--days", days, "days per synthetic series")
            ->check(CLI::Range(std::size_t{2}, std::numeric_limits<std::size_t>::max()))
            ->capture_default_str();
        app->add_option("--out", out_dir, "output directory")->capture_default_str();
        app->add_option("--workers", workers, "OpenMP threads")->check(CLI::PositiveNumber);
        app->add_option("--window", config.window)
            ->check(CLI::Range(std::size_t{2}, std::numeric_limits<std::size_t>::max()))
            ->capture_default_str();
        app->add_option("--t", config.horizon)->check(CLI::PositiveNumber)->capture_default_str();
        app->add_option("--loans", config.loans_per_stock)
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        app->add_option("--stride", config.stride)->check(CLI::PositiveNumber)->capture_default_str();
        app->add_option("--cap", config.cpnr_cap)->check(CLI::Range(0.0, 1.0))->capture_default_str();
        app->add_option("--g", config.g, "distinct values per state (0: automatic)");
        app->add_option("--target-states", config.target_states)->check(CLI::PositiveNumber);
        app->add_option("--mode", mode, "paper, exact or brute")
            ->check(CLI::IsMember({"paper", "exact", "brute", "paper_recursion",
                                   "exact_first_passage", "brute_force"}))
            ->capture_default_str();
        app->add_option("--r", config.r)->check(CLI::NonNegativeNumber)->capture_default_str();
        app->add_option("--loan-rate", config.loan_rate)
            ->check(CLI::NonNegativeNumber)
            ->capture_default_str();
        app->add_option("--required-m", config.required_m)->check(CLI::NonNegativeNumber);
        app->add_option("--required-omega", config.required_omega)->check(CLI::Range(1.0, 10.0));
        app->add_option("--required-delta", required_delta,
                        "collateral shares of the required system: deduced or cash")
            ->check(CLI::IsMember({"deduced", "cash"}));
        app->add_flag("-q,--quiet", quiet, "do not print the tables");
    }

    std::vector<PricePair> pairs() const {
        const int sources = (!data.purchased.empty() || !data.collateral.empty()) +
                            !universe_dir.empty() + (synthetic > 0);
        if (sources != 1)
            throw InvalidArgumentError(
                "choose exactly one of --purchased/--collateral, --universe, --synthetic-stocks");
        if (synthetic > 0) return generate_universe(seed, synthetic, days);
        if (!universe_dir.empty()) {
            std::vector<std::filesystem::path> files;
            for (const auto& e : std::filesystem::directory_iterator(universe_dir))
                if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
            std::sort(files.begin(), files.end());
            if (files.size() < 2)
                throw InvalidArgumentError("universe needs at least two CSV files");
            const CsvFormat fmt{data.date_col, data.close_col};
            std::vector<PriceSeries> series;
            for (const auto& f : files) series.push_back(load_csv(f, fmt));
            const auto partner = random_pairing(series.size(), seed);
            std::vector<PricePair> out;
            for (std::size_t i = 0; i < series.size(); ++i)
                out.push_back(align(series[i], series[partner[i]]));
            return out;
        }
        if (data.purchased.empty() || data.collateral.empty())
            throw InvalidArgumentError("--purchased and --collateral go together");
        return {data.load()};
    }

    void run(std::ostream& out) {
        config.method = parse_method(mode);
        config.required_delta =
            required_delta == "cash" ? RequiredDeltaPolicy::cash : RequiredDeltaPolicy::deduced;
        config.validate();
        const auto universe = pairs();
        const auto outcomes = run_backtest(universe, config, workers);
        std::filesystem::create_directories(out_dir);
        write_outcomes_csv(outcomes, std::filesystem::path(out_dir) / "outcomes.csv");
        const BacktestReport report = build_report(outcomes, config.cpnr_cap);
        write_report(report, out_dir);
        if (!quiet) print_report(report, out);
    }
};

struct ReportCommand {
    std::string outcomes;
    double cap = 0.05;
    std::string out_dir;
    bool json = false;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("report", "rebuild the tables from outcomes.csv");
        app->add_option("--outcomes", outcomes, "outcomes.csv of a backtest")
            ->required()
            ->check(CLI::ExistingFile);
        app->add_option("--cap", cap, "negative-return frequency cap")
            ->check(CLI::Range(0.0, 1.0))
            ->capture_default_str();
        app->add_option("--out", out_dir, "also write report.json and tables here");
        app->add_flag("--json", json, "print report.json instead of the tables");
    }

    void run(std::ostream& out) {
        const auto loaded = read_outcomes_csv(outcomes);
        const BacktestReport report = build_report(loaded, cap);
        if (!out_dir.empty()) write_report(report, out_dir);
        if (json)
            out << report_to_json(report).dump(2) << '\n';
        else
            print_report(report, out);
    }
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Active margin system for margin loans"};
    app.name("activemargin");
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.add_option("--config", "flat key = value file; command-line flags take precedence");

    GenCommand gen;
    ChainCommand chain;
    CpnrCommand cpnr_cmd;
    SearchCommand search;
    BacktestCommand backtest;
    ReportCommand report;
    gen.add(app);
    chain.add(app);
    cpnr_cmd.add(app);
    search.add(app);
    backtest.add(app);
    report.add(app);

    std::vector<std::string> args;
    try {
        args = expand_config(argc, argv);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    std::vector<const char*> cargs;
    for (const auto& a : args) cargs.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (app.got_subcommand("gen")) gen.run(out);
        else if (app.got_subcommand("chain")) chain.run(out);
        else if (app.got_subcommand("cpnr")) cpnr_cmd.run(out);
        else if (app.got_subcommand("search")) search.run(out);
        else if (app.got_subcommand("backtest")) backtest.run(out);
        else if (app.got_subcommand("report")) report.run(out);
    } catch (const InvalidArgumentError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace activemargin

#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "activemargin/markov_chain.hpp"

namespace amtest {

// States with representative prices 10, 11, ..., bins centred on them.
inline activemargin::StateSpace unit_states(std::size_t n, double first = 10.0) {
    activemargin::StateSpace s;
    s.g = 1;
    for (std::size_t i = 0; i < n; ++i) s.rep_prices.push_back(first + static_cast<double>(i));
    s.bin_edges.push_back(first - 0.5);
    for (std::size_t i = 0; i < n; ++i) s.bin_edges.push_back(first + static_cast<double>(i) + 0.5);
    return s;
}

inline activemargin::MarkovChain chain_from_rows(const std::vector<std::vector<double>>& rows,
                                                 double first = 10.0) {
    const std::size_t n = rows.size();
    activemargin::Matrix p(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) p(i, j) = rows[i][j];
    std::vector<std::vector<std::size_t>> counts(n, std::vector<std::size_t>(n, 0));
    return activemargin::MarkovChain(unit_states(n, first), counts, p);
}

// Row-stochastic with some exact zeros, so absorbing and unreachable
// configurations show up.
inline std::vector<std::vector<double>> random_stochastic(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<double>> rows(n, std::vector<double>(n, 0.0));
    for (auto& row : rows) {
        double sum = 0.0;
        for (auto& v : row) {
            v = u(rng) < 0.25 ? 0.0 : u(rng);
            sum += v;
        }
        if (sum == 0.0) {
            row[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)] = 1.0;
            continue;
        }
        for (auto& v : row) v /= sum;
    }
    return rows;
}

inline std::vector<std::size_t> random_thresholds(std::mt19937_64& rng, std::size_t n,
                                                  std::size_t horizon) {
    std::uniform_int_distribution<std::size_t> pick(0, n);
    std::vector<std::size_t> out(horizon);
    for (auto& v : out) v = pick(rng);
    return out;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::mt19937_64 rng{std::random_device{}()};
        path_ = std::filesystem::temp_directory_path() /
                ("am_" + tag + "_" + std::to_string(rng() % 1000000000));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace amtest

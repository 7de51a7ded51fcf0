#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "capfuzz/clustering.hpp"
#include "capfuzz/error.hpp"
#include "capfuzz/metrics.hpp"
#include "capfuzz/problem.hpp"

namespace capfuzz {

struct Dataset {
    Matrix features;  // n x d
    Vector weights;   // n, positive
    std::optional<LabelVector> true_labels;
    std::string name;
    std::vector<std::string> feature_names;

    Eigen::Index n() const { return features.rows(); }
    Eigen::Index d() const { return features.cols(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cells;
}

/// Locale-independent; accepts scientific notation and a leading '+'.
inline std::optional<double> parse_double(std::string_view s) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::optional<int> parse_label(std::string_view s) {
    const auto v = parse_double(s);
    if (!v || *v < 0.0 || *v != std::floor(*v) || *v > 1e9) return std::nullopt;
    return static_cast<int>(*v);
}

inline std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        lines.push_back(line);
    }
    return lines;
}

}  // namespace detail

/// Reads a headed, comma-separated file. The optional weight and label
/// columns are picked by header name; every other column is a feature.
inline Dataset load_csv(const std::string& path, const std::optional<std::string>& weight_column = std::nullopt,
                        const std::optional<std::string>& label_column = std::nullopt) {
    const auto lines = detail::read_lines(path);
    if (lines.empty()) throw Error(ErrorCode::EmptyData, path + ": no header row");
    const auto header = detail::split_commas(lines.front());
    const auto width = header.size();

    std::optional<std::size_t> weight_idx;
    std::optional<std::size_t> label_idx;
    std::vector<std::size_t> feature_idx;
    Dataset data;
    for (std::size_t c = 0; c < width; ++c) {
        if (weight_column && header[c] == *weight_column) {
            weight_idx = c;
        } else if (label_column && header[c] == *label_column) {
            label_idx = c;
        } else {
            feature_idx.push_back(c);
            data.feature_names.emplace_back(header[c]);
        }
    }
    if (weight_column && !weight_idx) throw Error(ErrorCode::ParseError, path + ": no column named " + *weight_column);
    if (label_column && !label_idx) throw Error(ErrorCode::ParseError, path + ": no column named " + *label_column);
    if (feature_idx.empty()) throw Error(ErrorCode::EmptyData, path + ": no feature columns");

    const auto n = static_cast<Eigen::Index>(lines.size() - 1);
    if (n == 0) throw Error(ErrorCode::EmptyData, path + ": no data rows");
    data.features.resize(n, static_cast<Eigen::Index>(feature_idx.size()));
    data.weights = Vector::Ones(n);
    if (label_idx) data.true_labels = LabelVector(static_cast<std::size_t>(n));

    for (Eigen::Index r = 0; r < n; ++r) {
        const auto row = static_cast<std::size_t>(r) + 2;  // 1-based, header is row 1
        const auto cells = detail::split_commas(lines[static_cast<std::size_t>(r) + 1]);
        if (cells.size() != width) {
            throw Error(ErrorCode::RaggedRows, path + ": row " + std::to_string(row) + " has " +
                                                   std::to_string(cells.size()) + " cells, expected " +
                                                   std::to_string(width));
        }
        auto bad_cell = [&](std::size_t c) {
            return Error(ErrorCode::ParseError, path + ": row " + std::to_string(row) + ", column " +
                                                    std::to_string(c + 1) + " (" + std::string(header[c]) +
                                                    "): cannot parse '" + std::string(cells[c]) + "'");
        };
        for (std::size_t f = 0; f < feature_idx.size(); ++f) {
            const auto v = detail::parse_double(cells[feature_idx[f]]);
            if (!v || !std::isfinite(*v)) throw bad_cell(feature_idx[f]);
            data.features(r, static_cast<Eigen::Index>(f)) = *v;
        }
        if (weight_idx) {
            const auto v = detail::parse_double(cells[*weight_idx]);
            if (!v) throw bad_cell(*weight_idx);
            if (!(*v > 0.0) || !std::isfinite(*v)) {
                throw Error(ErrorCode::NonPositiveWeight, path + ": row " + std::to_string(row) + " weight " +
                                                              std::string(cells[*weight_idx]));
            }
            data.weights[r] = *v;
        }
        if (label_idx) {
            const auto v = detail::parse_label(cells[*label_idx]);
            if (!v) throw bad_cell(*label_idx);
            (*data.true_labels)[static_cast<std::size_t>(r)] = *v;
        }
    }
    data.name = path;
    return data;
}

/// Writes features, then `weight`, then `label` (if present), with
/// shortest round-trip number formatting.
inline void write_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    for (Eigen::Index c = 0; c < data.d(); ++c) {
        const auto idx = static_cast<std::size_t>(c);
        out << (idx < data.feature_names.size() ? data.feature_names[idx] : "x" + std::to_string(c)) << ',';
    }
    out << "weight";
    if (data.true_labels) out << ",label";
    out << '\n';
    for (Eigen::Index r = 0; r < data.n(); ++r) {
        for (Eigen::Index c = 0; c < data.d(); ++c) out << detail::format_double(data.features(r, c)) << ',';
        out << detail::format_double(data.weights[r]);
        if (data.true_labels) out << ',' << (*data.true_labels)[static_cast<std::size_t>(r)];
        out << '\n';
    }
}

namespace synthetic {
inline constexpr int kPointsPerBlob = 100;
inline constexpr double kSpread = 0.6;
inline constexpr double kCenters[3][2] = {{2.0, 2.0}, {5.0, 6.0}, {8.0, 10.0}};
}  // namespace synthetic

/// Three isotropic Gaussian blobs of 100 points in the plane, weighted by
/// their y coordinate. Labels are blob ids.
inline Dataset generate_synthetic(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto normal = [&]() {
        // Box-Muller on the portable uniform
        const double u1 = 1.0 - detail::uniform01(rng);
        const double u2 = detail::uniform01(rng);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    };
    constexpr int n = 3 * synthetic::kPointsPerBlob;
    Dataset data;
    data.name = "synthetic";
    data.feature_names = {"x", "y"};
    data.features.resize(n, 2);
    data.true_labels = LabelVector(n);
    for (int b = 0; b < 3; ++b) {
        for (int k = 0; k < synthetic::kPointsPerBlob; ++k) {
            const int r = b * synthetic::kPointsPerBlob + k;
            data.features(r, 0) = synthetic::kCenters[b][0] + synthetic::kSpread * normal();
            data.features(r, 1) = synthetic::kCenters[b][1] + synthetic::kSpread * normal();
            (*data.true_labels)[static_cast<std::size_t>(r)] = b;
        }
    }
    const double lowest = data.features.col(1).minCoeff();
    if (lowest <= 0.0) data.features.col(1).array() += 0.1 - lowest;
    data.weights = data.features.col(1);
    return data;
}

struct WineLoadResult {
    Dataset data;
    std::optional<ErrorCode> warning_code;
    std::string warning;
};

inline constexpr Eigen::Index kWineRows = 178;
inline constexpr Eigen::Index kWineAttributes = 13;

/// UCI wine layout: class (1-3) then 13 attributes, comma separated, with
/// an optional header line. Weights are the raw alcohol values.
inline WineLoadResult load_wine(const std::string& path) {
    auto lines = detail::read_lines(path);
    if (!lines.empty()) {
        const auto first = detail::split_commas(lines.front());
        if (!detail::parse_double(first.front())) lines.erase(lines.begin());
    }
    if (lines.empty()) throw Error(ErrorCode::EmptyData, path + ": no rows");

    WineLoadResult out;
    auto& data = out.data;
    const auto n = static_cast<Eigen::Index>(lines.size());
    data.name = "wine";
    data.features.resize(n, kWineAttributes);
    data.true_labels = LabelVector(static_cast<std::size_t>(n));
    for (Eigen::Index a = 0; a < kWineAttributes; ++a) data.feature_names.push_back("a" + std::to_string(a + 1));
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto cells = detail::split_commas(lines[static_cast<std::size_t>(r)]);
        if (static_cast<Eigen::Index>(cells.size()) != kWineAttributes + 1) {
            throw Error(ErrorCode::ParseError, path + ": row " + std::to_string(r + 1) + " has " +
                                                   std::to_string(cells.size()) + " cells, expected 14");
        }
        const auto label = detail::parse_label(cells[0]);
        if (!label || *label < 1 || *label > 3) {
            throw Error(ErrorCode::ParseError, path + ": row " + std::to_string(r + 1) + ", column 1: bad class '" +
                                                   std::string(cells[0]) + "'");
        }
        (*data.true_labels)[static_cast<std::size_t>(r)] = *label - 1;
        for (Eigen::Index a = 0; a < kWineAttributes; ++a) {
            const auto v = detail::parse_double(cells[static_cast<std::size_t>(a) + 1]);
            if (!v || !std::isfinite(*v)) {
                throw Error(ErrorCode::ParseError, path + ": row " + std::to_string(r + 1) + ", column " +
                                                       std::to_string(a + 2) + ": cannot parse '" +
                                                       std::string(cells[static_cast<std::size_t>(a) + 1]) + "'");
            }
            data.features(r, a) = *v;
        }
    }
    data.weights = data.features.col(0);
    for (Eigen::Index r = 0; r < n; ++r) {
        if (!(data.weights[r] > 0.0)) {
            throw Error(ErrorCode::NonPositiveWeight, path + ": row " + std::to_string(r + 1) + " alcohol <= 0");
        }
    }
    if (n != kWineRows) {
        out.warning_code = ErrorCode::UnexpectedRowCount;
        out.warning = path + ": expected 178 rows, found " + std::to_string(n);
    }
    return out;
}

/// Per-column z-score with the sample (n - 1) standard deviation. Constant
/// columns pass through unchanged.
inline Dataset normalize_zscore(Dataset data) {
    const auto n = data.n();
    if (n < 2) return data;
    for (Eigen::Index c = 0; c < data.d(); ++c) {
        auto col = data.features.col(c);
        if (col.maxCoeff() == col.minCoeff()) continue;
        const double mean = col.mean();
        const double sd = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(n - 1));
        if (!(sd > 0.0)) continue;
        col = (col.array() - mean) / sd;
    }
    return data;
}

inline Vector equal_capacities(const Dataset& data, Eigen::Index g) {
    if (g < 1) throw Error(ErrorCode::InvalidArgument, "g must be at least 1");
    return Vector::Constant(g, data.weights.sum() / static_cast<double>(g));
}

}  // namespace capfuzz

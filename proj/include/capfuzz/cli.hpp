#pragma once

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "capfuzz/clustering.hpp"
#include "capfuzz/data_io.hpp"
#include "capfuzz/error.hpp"
#include "capfuzz/metrics.hpp"
#include "capfuzz/problem.hpp"

namespace capfuzz::app {

enum class Command { Fit, Synth, Wine, Compare };
enum class OutputFormat { Json, Csv };

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

/// Verbosity from CAPFUZZ_LOG (error | info | debug); default error.
inline LogLevel log_level_from_env() {
    const char* raw = std::getenv("CAPFUZZ_LOG");
    if (raw == nullptr) return LogLevel::Error;
    const std::string v(raw);
    if (v == "debug") return LogLevel::Debug;
    if (v == "info") return LogLevel::Info;
    return LogLevel::Error;
}

inline void log(LogLevel level, const std::string& msg) {
    static const LogLevel threshold = log_level_from_env();
    if (level <= threshold) std::cerr << (level == LogLevel::Debug ? "[debug] " : "[info] ") << msg << '\n';
}

struct RunConfig {
    Command command = Command::Fit;
    std::optional<std::string> data_path;
    std::optional<std::uint64_t> data_seed;  // synthetic generator seed
    int g = 3;
    std::string capacities = "equal";  // equal | comma list | @file
    std::optional<std::string> weights_column;
    std::optional<std::string> labels_column;
    std::string algorithm = "capacitated";  // capacitated | fcm | equibalanced
    double m = 2.0;
    std::uint64_t seed = 0;
    Tolerances tolerances{};
    int restarts = 1;
    bool normalize = false;
    bool parallel = false;
    std::optional<std::string> out;
    std::optional<std::string> points_out;  // synth only
    OutputFormat format = OutputFormat::Json;
};

struct Report {
    std::string algorithm;
    std::optional<double> ari;
    double objective = 0.0;
    std::optional<double> capacity_residual;  // nullopt: not enforced
    int iterations = 0;
    bool converged = false;
    double wall_time_s = 0.0;
    std::vector<double> objective_trace;
};

inline nlohmann::json to_json(const Report& r) {
    nlohmann::json j;
    j["algorithm"] = r.algorithm;
    j["ari"] = r.ari ? nlohmann::json(*r.ari) : nlohmann::json(nullptr);
    j["objective"] = r.objective;
    j["capacity_residual"] = r.capacity_residual ? nlohmann::json(*r.capacity_residual) : nlohmann::json("not-enforced");
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    j["wall_time_s"] = r.wall_time_s;
    j["objective_trace"] = r.objective_trace;
    return j;
}

inline std::string report_csv_header() {
    return "algorithm,ari,objective,capacity_residual,iterations,converged,wall_time_s,objective_trace";
}

inline std::string to_csv_row(const Report& r) {
    std::ostringstream os;
    os << r.algorithm << ',' << (r.ari ? detail::format_double(*r.ari) : "") << ','
       << detail::format_double(r.objective) << ','
       << (r.capacity_residual ? detail::format_double(*r.capacity_residual) : "not-enforced") << ','
       << r.iterations << ',' << (r.converged ? "true" : "false") << ',' << detail::format_double(r.wall_time_s)
       << ',';
    for (std::size_t k = 0; k < r.objective_trace.size(); ++k) {
        if (k > 0) os << ';';
        os << detail::format_double(r.objective_trace[k]);
    }
    return os.str();
}

/// Result of one algorithm on one dataset (best of the restarts).
struct AlgorithmRun {
    Report report;
    FitResult fit;
};

namespace detail {

inline Vector parse_number_list(const std::string& text, const std::string& what) {
    std::vector<double> values;
    std::string token;
    std::istringstream in(text);
    while (std::getline(in, token, ',')) {
        std::istringstream lines(token);
        std::string piece;
        while (std::getline(lines, piece)) {
            const auto cell = capfuzz::detail::trim(piece);
            if (cell.empty()) continue;
            const auto v = capfuzz::detail::parse_double(cell);
            if (!v) throw Error(ErrorCode::ParseError, what + ": cannot parse '" + std::string(cell) + "'");
            values.push_back(*v);
        }
    }
    Vector out(static_cast<Eigen::Index>(values.size()));
    for (std::size_t k = 0; k < values.size(); ++k) out[static_cast<Eigen::Index>(k)] = values[k];
    return out;
}

inline Vector resolve_capacities(const RunConfig& config, const Dataset& data) {
    const std::string& src = config.capacities;
    if (src == "equal") return equal_capacities(data, config.g);
    Vector mu;
    if (!src.empty() && src.front() == '@') {
        std::ifstream in(src.substr(1));
        if (!in) throw Error(ErrorCode::IoError, "cannot open capacities file " + src.substr(1));
        std::stringstream buf;
        buf << in.rdbuf();
        mu = parse_number_list(buf.str(), "capacities file");
    } else {
        mu = parse_number_list(src, "--capacities");
    }
    if (mu.size() != config.g) {
        throw Error(ErrorCode::InvalidArgument,
                    "expected " + std::to_string(config.g) + " capacities, got " + std::to_string(mu.size()));
    }
    return mu;
}

inline void validate_config(const RunConfig& config) {
    if (config.g < 1) throw Error(ErrorCode::InvalidArgument, "--g must be at least 1");
    if (config.restarts < 1) throw Error(ErrorCode::InvalidArgument, "--restarts must be at least 1");
    if (config.algorithm != "capacitated" && config.algorithm != "fcm" && config.algorithm != "equibalanced") {
        throw Error(ErrorCode::InvalidArgument, "unknown algorithm '" + config.algorithm + "'");
    }
    if (!(config.m > 1.0)) throw Error(ErrorCode::UnsupportedFuzzifier, "--m must exceed 1");
    if (config.algorithm != "fcm" && config.m != 2.0 && config.command == Command::Fit) {
        throw Error(ErrorCode::UnsupportedFuzzifier, "--m applies to fcm only; capacitated requires m = 2");
    }
    if (!(config.tolerances.convergence_tol > 0.0) || config.tolerances.max_iterations < 1) {
        throw Error(ErrorCode::InvalidArgument, "--tol must be positive and --max-iter at least 1");
    }
    switch (config.command) {
        case Command::Fit:
        case Command::Compare:
            if (config.data_path.has_value() == config.data_seed.has_value()) {
                throw Error(ErrorCode::InvalidArgument, "give exactly one of --data and --seed-data");
            }
            break;
        case Command::Wine:
            if (!config.data_path) throw Error(ErrorCode::InvalidArgument, "wine needs --data");
            if (config.data_seed) throw Error(ErrorCode::InvalidArgument, "wine takes no --seed-data");
            break;
        case Command::Synth:
            if (config.data_path) throw Error(ErrorCode::InvalidArgument, "synth takes no --data");
            break;
    }
}

inline Dataset load_dataset(const RunConfig& config) {
    Dataset data;
    if (config.command == Command::Wine) {
        auto loaded = load_wine(*config.data_path);
        if (loaded.warning_code) {
            std::cerr << nlohmann::json{{"warning", std::string(to_string(*loaded.warning_code))},
                                        {"message", loaded.warning}}
                             .dump()
                      << '\n';
        }
        data = std::move(loaded.data);
    } else if (config.data_seed) {
        data = generate_synthetic(*config.data_seed);
    } else {
        data = load_csv(*config.data_path, config.weights_column, config.labels_column);
    }
    if (config.normalize) data = normalize_zscore(std::move(data));
    return data;
}

template <class Fn>
AlgorithmRun best_of_restarts(const std::string& name, const RunConfig& config, Fn&& fit_once) {
    AlgorithmRun best;
    double elapsed = 0.0;
    bool have = false;
    for (int r = 0; r < config.restarts; ++r) {
        const auto seed = config.seed + static_cast<std::uint64_t>(r);
        const auto start = std::chrono::steady_clock::now();
        FitResult fit = fit_once(InitStrategy::seeded(seed));
        elapsed += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const double j = fit.objective_trace.empty() ? 0.0 : fit.objective_trace.back();
        log(LogLevel::Debug, name + " restart " + std::to_string(r) + ": J = " + capfuzz::detail::format_double(j) +
                                 ", iterations = " + std::to_string(fit.iterations));
        if (!have || j < best.report.objective) {
            best.report.objective = j;
            best.fit = std::move(fit);
            have = true;
        }
    }
    best.report.algorithm = name;
    best.report.iterations = best.fit.iterations;
    best.report.converged = best.fit.converged;
    best.report.objective_trace = best.fit.objective_trace;
    best.report.wall_time_s = elapsed;
    return best;
}

}  // namespace detail

/// Runs one algorithm on a loaded dataset. Capacities apply to the
/// capacitated algorithm; equibalanced uses unit weights and n/g.
inline AlgorithmRun run_algorithm(const std::string& algorithm, const Dataset& data, const Vector& capacities,
                                  const RunConfig& config) {
    AlgorithmRun run;
    if (algorithm == "capacitated") {
        ProblemSpec spec;
        spec.points = data.features;
        spec.weights = data.weights;
        spec.capacities = capacities;
        spec.tolerances = config.tolerances;
        const ValidatedProblem problem = validate_problem(spec);
        run = detail::best_of_restarts(algorithm, config,
                                       [&](const InitStrategy& init) { return fit_capacitated(problem, init); });
        run.report.capacity_residual = capacity_residual(run.fit.memberships, problem.weights(), problem.capacities());
    } else if (algorithm == "equibalanced") {
        const ValidatedProblem problem = validate_problem(equibalanced_spec(data.features, config.g, config.tolerances));
        run = detail::best_of_restarts(algorithm, config,
                                       [&](const InitStrategy& init) { return fit_capacitated(problem, init); });
        run.report.capacity_residual = capacity_residual(run.fit.memberships, problem.weights(), problem.capacities());
    } else if (algorithm == "fcm") {
        FcmOptions options;
        options.tolerances = config.tolerances;
        options.weights = data.weights;
        options.capacities = capacities;
        run = detail::best_of_restarts(algorithm, config, [&](const InitStrategy& init) {
            return fit_fcm(data.features, config.g, config.m, init, options);
        });
    } else {
        throw Error(ErrorCode::InvalidArgument, "unknown algorithm '" + algorithm + "'");
    }
    if (data.true_labels) run.report.ari = adjusted_rand_index(harden(run.fit.memberships), *data.true_labels);
    log(LogLevel::Info, algorithm + ": J = " + capfuzz::detail::format_double(run.report.objective) +
                            ", iterations = " + std::to_string(run.report.iterations) +
                            (run.report.converged ? ", converged" : ", not converged"));
    return run;
}

namespace detail {

inline void write_text(const std::optional<std::string>& path, const std::string& text) {
    if (!path || *path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(*path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + *path);
    out << text;
}

inline std::string render_reports(const std::vector<Report>& reports, OutputFormat format) {
    if (format == OutputFormat::Csv) {
        std::string text = report_csv_header() + "\n";
        for (const auto& r : reports) text += to_csv_row(r) + "\n";
        return text;
    }
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : reports) arr.push_back(to_json(r));
    return arr.dump(2) + "\n";
}

inline std::string derived_path(const std::optional<std::string>& base, const std::string& suffix,
                                const std::string& fallback) {
    if (!base || *base == "-") return fallback;
    const auto dot = base->find_last_of('.');
    const auto slash = base->find_last_of('/');
    const bool has_ext = dot != std::string::npos && (slash == std::string::npos || dot > slash);
    return (has_ext ? base->substr(0, dot) : *base) + suffix;
}

}  // namespace detail

/// Fits the configured algorithm and writes the report with hardened labels
/// and per-point memberships.
inline Report run_fit(const RunConfig& config) {
    detail::validate_config(config);
    const Dataset data = detail::load_dataset(config);
    const Vector mu = detail::resolve_capacities(config, data);
    AlgorithmRun run = run_algorithm(config.algorithm, data, mu, config);
    if (config.algorithm == "fcm") run.report.capacity_residual.reset();

    const auto labels = harden(run.fit.memberships);
    const Matrix& u = run.fit.memberships.values;
    if (config.format == OutputFormat::Json) {
        nlohmann::json j = to_json(run.report);
        j["labels"] = labels;
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index c = 0; c < u.cols(); ++c) {
            std::vector<double> col(u.col(c).data(), u.col(c).data() + u.rows());
            rows.push_back(col);
        }
        j["memberships"] = rows;
        detail::write_text(config.out, j.dump(2) + "\n");
    } else {
        detail::write_text(config.out, detail::render_reports({run.report}, OutputFormat::Csv));
        std::ostringstream os;
        os << "label";
        for (Eigen::Index i = 0; i < u.rows(); ++i) os << ",u_" << i + 1;
        os << '\n';
        for (Eigen::Index c = 0; c < u.cols(); ++c) {
            os << labels[static_cast<std::size_t>(c)];
            for (Eigen::Index i = 0; i < u.rows(); ++i) os << ',' << capfuzz::detail::format_double(u(i, c));
            os << '\n';
        }
        detail::write_text(detail::derived_path(config.out, ".memberships.csv", "memberships.csv"), os.str());
    }
    return run.report;
}

inline std::string satisfaction(const Report& r) {
    if (!r.capacity_residual) return "not-enforced";
    return *r.capacity_residual <= 1e-6 ? "satisfied" : "violated";
}

/// Table-shaped comparison: rows are algorithms, columns ARI, capacity
/// satisfaction, wall time.
inline std::string render_table(const std::vector<Report>& reports) {
    std::ostringstream os;
    os << std::left << std::setw(14) << "algorithm" << std::setw(10) << "ari" << std::setw(16) << "capacity"
       << "time_s\n";
    for (const auto& r : reports) {
        std::ostringstream ari;
        if (r.ari) {
            ari << std::fixed << std::setprecision(4) << *r.ari;
        } else {
            ari << "n/a";
        }
        os << std::left << std::setw(14) << r.algorithm << std::setw(10) << ari.str() << std::setw(16)
           << satisfaction(r) << std::fixed << std::setprecision(4) << r.wall_time_s << '\n';
    }
    return os.str();
}

/// Runs fcm, equibalanced and capacitated with the same data and seeds.
inline std::vector<Report> run_compare(const RunConfig& config) {
    detail::validate_config(config);
    const Dataset data = detail::load_dataset(config);
    if (!data.true_labels) throw Error(ErrorCode::InvalidArgument, "compare needs true labels (--labels-column)");
    const Vector mu = detail::resolve_capacities(config, data);

    const std::vector<std::string> algorithms = {"fcm", "equibalanced", "capacitated"};
    std::vector<Report> reports(algorithms.size());
    if (config.parallel) {
        std::vector<std::future<AlgorithmRun>> jobs;
        for (const auto& name : algorithms) {
            jobs.push_back(std::async(std::launch::async, [&, name] { return run_algorithm(name, data, mu, config); }));
        }
        for (std::size_t k = 0; k < jobs.size(); ++k) reports[k] = jobs[k].get().report;
    } else {
        for (std::size_t k = 0; k < algorithms.size(); ++k) {
            reports[k] = run_algorithm(algorithms[k], data, mu, config).report;
        }
    }
    reports[0].capacity_residual.reset();

    detail::write_text(config.out, detail::render_reports(reports, config.format));
    if (config.out && *config.out != "-") std::cout << render_table(reports);
    return reports;
}

/// Synthetic three-blob run with equal capacities; also writes a
/// plot-ready CSV (x, y, weight, label, u_1..u_g).
inline Report run_synth(const RunConfig& config) {
    detail::validate_config(config);
    RunConfig cfg = config;
    cfg.data_seed = config.data_seed.value_or(0);
    cfg.algorithm = "capacitated";
    const Dataset data = detail::load_dataset(cfg);
    const Vector mu = detail::resolve_capacities(cfg, data);
    const AlgorithmRun run = run_algorithm("capacitated", data, mu, cfg);

    detail::write_text(cfg.out, detail::render_reports({run.report}, cfg.format));

    const Matrix& u = run.fit.memberships.values;
    const auto labels = harden(run.fit.memberships);
    std::ostringstream os;
    os << "x,y,weight,label";
    for (Eigen::Index i = 0; i < u.rows(); ++i) os << ",u_" << i + 1;
    os << '\n';
    for (Eigen::Index j = 0; j < data.n(); ++j) {
        os << capfuzz::detail::format_double(data.features(j, 0)) << ','
           << capfuzz::detail::format_double(data.features(j, 1)) << ','
           << capfuzz::detail::format_double(data.weights[j]) << ',' << labels[static_cast<std::size_t>(j)];
        for (Eigen::Index i = 0; i < u.rows(); ++i) os << ',' << capfuzz::detail::format_double(u(i, j));
        os << '\n';
    }
    const std::string points = cfg.points_out.value_or(detail::derived_path(cfg.out, ".points.csv", "synth_points.csv"));
    std::ofstream out(points, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + points);
    out << os.str();
    return run.report;
}

/// Exit codes: 0 success, 2 input or validation error, 3 numerical failure.
/// Errors go to `diag` as one JSON line.
inline int dispatch(const RunConfig& config, std::ostream& diag = std::cerr) {
    try {
        switch (config.command) {
            case Command::Fit: run_fit(config); break;
            case Command::Compare:
            case Command::Wine: run_compare(config); break;
            case Command::Synth: run_synth(config); break;
        }
        return 0;
    } catch (const Error& e) {
        diag << nlohmann::json{{"error", std::string(to_string(e.code()))}, {"message", e.what()}}.dump() << '\n';
        return is_numerical(e.code()) ? 3 : 2;
    } catch (const std::exception& e) {
        diag << nlohmann::json{{"error", "Internal"}, {"message", e.what()}}.dump() << '\n';
        return 3;
    }
}

}  // namespace capfuzz::app
